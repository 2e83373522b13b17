//! Closed-form kernels of the free Laplacian in three dimensions.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::special::gamma;
use crate::{dist, Point};

pub use crate::special::bessel_j;

/// `lambda = eta^2` with `Im eta >= 0`. Real `eta` of either sign gives the
/// boundary values `lambda +- i0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralParameter {
    eta: Complex64,
}

impl SpectralParameter {
    pub fn new(eta: Complex64) -> Result<Self> {
        if !eta.re.is_finite() || !eta.im.is_finite() || eta.im < 0.0 {
            return Err(Error::InvalidSpectralParameter(format!("eta = {eta} needs Im eta >= 0")));
        }
        Ok(Self { eta })
    }

    pub fn real(eta: f64) -> Result<Self> {
        Self::new(Complex64::new(eta, 0.0))
    }

    /// Principal branch `eta = sqrt(lambda)`. On the cut `lambda >= 0` this is
    /// the `+ i0` boundary value.
    pub fn from_lambda(lambda: Complex64) -> Result<Self> {
        let mut eta = lambda.sqrt();
        if eta.im < 0.0 {
            eta = -eta;
        }
        if eta.im == 0.0 && eta.re < 0.0 {
            eta = -eta;
        }
        Self::new(eta)
    }

    /// `lambda = -kappa^2`, `eta = i kappa`.
    pub fn below_threshold(kappa: f64) -> Result<Self> {
        if kappa < 0.0 {
            return Err(Error::InvalidSpectralParameter(format!("kappa = {kappa} must be >= 0")));
        }
        Self::new(Complex64::new(0.0, kappa))
    }

    pub fn eta(&self) -> Complex64 {
        self.eta
    }

    pub fn lambda(&self) -> Complex64 {
        self.eta * self.eta
    }

    /// Parameter for the opposite boundary value: `-conj(eta)`.
    pub fn reflected(&self) -> Self {
        Self { eta: -self.eta.conj() }
    }
}

/// `e^{i eta s} / (4 pi s)` for `s > 0`.
pub fn resolvent0_radial(eta: Complex64, s: f64) -> Complex64 {
    (Complex64::i() * eta * s).exp() / (4.0 * PI * s)
}

pub fn resolvent0(eta: SpectralParameter, x: &Point, y: &Point) -> Result<Complex64> {
    let s = dist(x, y);
    if s == 0.0 {
        return Err(Error::CoincidentPoints);
    }
    Ok(resolvent0_radial(eta.eta, s))
}

pub fn heat0_radial(t: f64, s: f64) -> f64 {
    (4.0 * PI * t).powf(-1.5) * (-s * s / (4.0 * t)).exp()
}

pub fn heat0(t: f64, x: &Point, y: &Point) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::NonPositiveTime(t));
    }
    Ok(heat0_radial(t, dist(x, y)))
}

pub const POISSON_CONSTANT: f64 = 1.0 / (PI * PI);

pub fn poisson0_radial(t: f64, s: f64) -> f64 {
    let d = t * t + s * s;
    POISSON_CONSTANT * t / (d * d)
}

pub fn poisson0(t: f64, x: &Point, y: &Point) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::NonPositiveTime(t));
    }
    Ok(poisson0_radial(t, dist(x, y)))
}

/// Kernel of `(1 - |xi|^2 / lambda0)_+^alpha` as a function of the separation:
///
/// `lambda0^{3/2} 2^alpha Gamma(alpha+1) J_{3/2+alpha}(z) / ((2 pi)^{3/2} z^{3/2+alpha})`,
/// `z = sqrt(lambda0) s`.
pub fn br0_radial(alpha: f64, lambda0: f64, s: f64) -> Result<f64> {
    if !(alpha > -1.0) || !(lambda0 > 0.0) {
        return Err(Error::OutOfSupportedRange(format!(
            "Bochner-Riesz needs alpha > -1 and lambda0 > 0, got alpha={alpha}, lambda0={lambda0}"
        )));
    }
    if s <= 0.0 {
        return Err(Error::CoincidentPoints);
    }
    let nu = 1.5 + alpha;
    let z = lambda0.sqrt() * s;
    let j = bessel_j(nu, z)?;
    Ok(lambda0.powf(1.5) * 2f64.powf(alpha) * gamma(alpha + 1.0) * j / ((2.0 * PI).powf(1.5) * z.powf(nu)))
}

/// Value at coincident points: `lambda0^{3/2} Gamma(alpha+1) / (8 pi^{3/2} Gamma(alpha + 5/2))`.
pub fn br0_diagonal(alpha: f64, lambda0: f64) -> f64 {
    lambda0.powf(1.5) * gamma(alpha + 1.0) / (8.0 * PI.powf(1.5) * gamma(alpha + 2.5))
}

pub fn br0_kernel(alpha: f64, lambda0: f64, x: &Point, y: &Point) -> Result<f64> {
    br0_radial(alpha, lambda0, dist(x, y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::Rule;
    use approx::assert_relative_eq;

    const O: Point = [0.0; 3];

    #[test]
    fn resolvent_examples() {
        let e1 = [1.0, 0.0, 0.0];
        let v = resolvent0(SpectralParameter::real(0.0).unwrap(), &O, &e1).unwrap();
        assert_relative_eq!(v.re, 1.0 / (4.0 * PI), max_relative = 1e-14);
        let v = resolvent0(SpectralParameter::from_lambda(Complex64::new(-1.0, 0.0)).unwrap(), &O, &e1).unwrap();
        assert_relative_eq!(v.re, (-1f64).exp() / (4.0 * PI), max_relative = 1e-14);
        assert!(v.im.abs() < 1e-16);
        let v = resolvent0(SpectralParameter::real(1.0).unwrap(), &O, &[PI, 0.0, 0.0]).unwrap();
        assert_relative_eq!(v.re, -1.0 / (4.0 * PI * PI), max_relative = 1e-14);
        assert_eq!(resolvent0(SpectralParameter::real(1.0).unwrap(), &O, &O), Err(Error::CoincidentPoints));
    }

    #[test]
    fn spectral_parameter_branch() {
        assert!(SpectralParameter::new(Complex64::new(1.0, -0.1)).is_err());
        let p = SpectralParameter::from_lambda(Complex64::new(-4.0, 0.0)).unwrap();
        assert!((p.eta() - Complex64::new(0.0, 2.0)).norm() < 1e-15);
        let p = SpectralParameter::from_lambda(Complex64::new(4.0, 0.0)).unwrap();
        assert!((p.eta() - Complex64::new(2.0, 0.0)).norm() < 1e-15);
        let q = p.reflected();
        assert!((q.eta() + 2.0).norm() < 1e-15);
    }

    #[test]
    fn heat_examples_and_mass() {
        assert_relative_eq!(heat0(1.0 / (4.0 * PI), &O, &O).unwrap(), 1.0, max_relative = 1e-14);
        assert_relative_eq!(heat0(0.25, &O, &O).unwrap(), PI.powf(-1.5), max_relative = 1e-14);
        assert_eq!(heat0(0.0, &O, &O), Err(Error::NonPositiveTime(0.0)));
        for t in [0.1f64, 1.0] {
            let r = Rule::composite(20, &crate::quadrature::breakpoints(0.0, 40.0 * t.sqrt(), t.sqrt(), &[]));
            let mass = r.integrate(|s| 4.0 * PI * s * s * heat0_radial(t, s));
            assert!((mass - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn poisson_examples_and_mass() {
        assert_relative_eq!(poisson0(1.0, &O, &O).unwrap(), 1.0 / (PI * PI), max_relative = 1e-14);
        assert_relative_eq!(poisson0(2.0, &O, &O).unwrap(), 1.0 / (8.0 * PI * PI), max_relative = 1e-14);
        assert!(poisson0(-1.0, &O, &O).is_err());
        for t in [0.5, 2.0] {
            // s = t tan(theta) maps [0, inf) onto [0, pi/2).
            let r = Rule::gauss(60, 0.0, PI / 2.0);
            let mass = r.integrate(|th| {
                let s = t * th.tan();
                let ds = t / (th.cos() * th.cos());
                4.0 * PI * s * s * poisson0_radial(t, s) * ds
            });
            assert!((mass - 1.0).abs() < 1e-6, "t={t}: {mass}");
        }
    }

    #[test]
    fn resolvent_bounded_by_static_kernel_and_conjugate_symmetric() {
        for (re, im) in [(0.0, 0.0), (3.0, 0.0), (-2.0, 0.5), (1.0, 4.0)] {
            let p = SpectralParameter::new(Complex64::new(re, im)).unwrap();
            for s in [0.1, 1.0, 7.0] {
                let v = resolvent0_radial(p.eta(), s);
                assert!(v.norm() <= 1.0 / (4.0 * PI * s) * (1.0 + 1e-14));
                let w = resolvent0_radial(p.reflected().eta(), s);
                assert!((v.conj() - w).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn br_alpha_zero_is_the_ball_multiplier_kernel() {
        let a = 1.7f64;
        for s in [0.3, 1.0, 5.0, 20.0] {
            let z = a * s;
            let expected = a.powi(3) * (z.sin() / z - z.cos()) / (2.0 * PI * PI * z * z);
            assert!((br0_radial(0.0, a * a, s).unwrap() - expected).abs() < 1e-12);
        }
        assert!((br0_radial(0.0, 1.0, 1e-4).unwrap() - br0_diagonal(0.0, 1.0)).abs() < 1e-9);
    }

    #[test]
    fn br_scaling_symmetry() {
        for s in [0.5, 3.0] {
            let a = br0_radial(0.5, 4.0, s).unwrap();
            let b = br0_radial(0.5, 1.0, 2.0 * s).unwrap();
            assert!((a - 8.0 * b).abs() < 1e-12 * a.abs().max(1e-12));
        }
    }

    #[test]
    fn br_large_separation_decay_exponent() {
        let alpha = 0.5;
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        let n = 20_000;
        let samples: Vec<(f64, f64)> = (0..=n)
            .map(|k| {
                let s = 10.0 + 90.0 * k as f64 / n as f64;
                (s, br0_radial(alpha, 1.0, s).unwrap().abs())
            })
            .collect();
        for w in samples.windows(3) {
            if w[1].1 > w[0].1 && w[1].1 >= w[2].1 {
                xs.push(w[1].0.ln());
                ys.push(w[1].1.ln());
            }
        }
        let n = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / n;
        let my = ys.iter().sum::<f64>() / n;
        let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
            / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
        assert!((slope + 2.0 + alpha).abs() < 0.1, "slope {slope}");
    }

    #[test]
    fn br_rejects_bad_input() {
        assert!(br0_radial(-1.0, 1.0, 1.0).is_err());
        assert!(br0_radial(5.0, 1.0, 1.0).is_err());
        assert_eq!(br0_kernel(0.0, 1.0, &O, &O), Err(Error::CoincidentPoints));
    }
}
