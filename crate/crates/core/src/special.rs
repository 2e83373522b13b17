//! Special functions: Gamma, cylindrical Bessel J of real order, scaled
//! spherical Bessel/Hankel functions of complex argument, Legendre
//! polynomials and real spherical harmonics.

use num_complex::Complex64;
use std::f64::consts::PI;

use crate::error::{Error, Result};

const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Gamma function for real arguments (Lanczos, g = 7).
pub fn gamma(x: f64) -> f64 {
    if x < 0.5 {
        PI / ((PI * x).sin() * gamma(1.0 - x))
    } else {
        let x = x - 1.0;
        let mut a = LANCZOS[0];
        let t = x + 7.5;
        for (i, c) in LANCZOS.iter().enumerate().skip(1) {
            a += c / (x + i as f64);
        }
        (2.0 * PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * a
    }
}

/// Largest argument handled by the power series of [`bessel_j`].
pub const BESSEL_SERIES_MAX_Z: f64 = 12.0;
/// Supported order range of [`bessel_j`].
pub const BESSEL_MAX_ORDER: f64 = 6.0;

/// Cylindrical Bessel function `J_nu(z)` for `0 <= nu <= 6`, `z >= 0`.
///
/// Power series up to `z = 12`, Hankel asymptotic expansion beyond.
pub fn bessel_j(nu: f64, z: f64) -> Result<f64> {
    if !(0.0..=BESSEL_MAX_ORDER).contains(&nu) || !(z >= 0.0) || !z.is_finite() {
        return Err(Error::OutOfSupportedRange(format!("J_{nu}({z})")));
    }
    if z <= BESSEL_SERIES_MAX_Z {
        Ok(bessel_j_series(nu, z))
    } else {
        Ok(bessel_j_asymptotic(nu, z))
    }
}

pub(crate) fn bessel_j_series(nu: f64, z: f64) -> f64 {
    if z == 0.0 {
        return if nu == 0.0 { 1.0 } else { 0.0 };
    }
    let half = 0.5 * z;
    let mut term = half.powf(nu) / gamma(nu + 1.0);
    let mut sum = term;
    let q = -half * half;
    for k in 1..200 {
        let kf = k as f64;
        term *= q / (kf * (kf + nu));
        sum += term;
        if term.abs() < 1e-17 * sum.abs().max(1e-300) && kf > half {
            break;
        }
    }
    sum
}

pub(crate) fn bessel_j_asymptotic(nu: f64, z: f64) -> f64 {
    let mu = 4.0 * nu * nu;
    let omega = z - 0.5 * nu * PI - 0.25 * PI;
    let mut p = 0.0;
    let mut q = 0.0;
    let mut a = 1.0;
    let mut last = f64::INFINITY;
    for k in 0..60 {
        if k > 0 {
            let odd = (2 * k - 1) as f64;
            a *= (mu - odd * odd) / (k as f64 * 8.0 * z);
        }
        if a.abs() > last && k > 2 {
            break;
        }
        last = a.abs();
        let sign = if (k / 2) % 2 == 0 { 1.0 } else { -1.0 };
        if k % 2 == 0 {
            p += sign * a;
        } else {
            q += sign * a;
        }
        if a.abs() < 1e-17 {
            break;
        }
    }
    (2.0 / (PI * z)).sqrt() * (p * omega.cos() - q * omega.sin())
}

/// `ln((2l+1)!!)` for `l = -1..=lmax` stored at index `l + 1`.
pub(crate) fn ln_double_factorials(lmax: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(lmax + 2);
    out.push(0.0); // (-1)!! = 1
    let mut acc = 0.0;
    for l in 0..=lmax {
        acc += ((2 * l + 1) as f64).ln();
        out.push(acc);
    }
    out
}

/// Scaled spherical Bessel and Hankel values at one complex argument `z` for
/// every order `0..=lmax`:
///
/// * `j[l] = j_l(z) (2l+1)!! / z^l`
/// * `h[l] = h^{(1)}_l(z) z^{l+1} / (2l-1)!!`
///
/// Both tend to finite limits (`1` and `-i`) as `z -> 0`, which keeps
/// products `j_l(z1) h_l(z2)` representable for large `l`.
#[derive(Debug, Clone)]
pub struct ScaledSpherical {
    pub j: Vec<Complex64>,
    pub h: Vec<Complex64>,
}

impl ScaledSpherical {
    pub fn new(z: Complex64, lmax: usize) -> Self {
        let mut j = vec![Complex64::new(0.0, 0.0); lmax + 1];
        let mut h = vec![Complex64::new(0.0, 0.0); lmax + 1];
        let lndf = ln_double_factorials(lmax);
        let az = z.norm();
        let i = Complex64::new(0.0, 1.0);
        // Orders whose series converges without cancellation.
        let series_from = if az == 0.0 {
            0
        } else {
            (((az * az) / 2.0 - 1.0).ceil().max(0.0) as usize).min(lmax + 1)
        };
        for l in series_from..=lmax {
            let (jt, yt) = scaled_series(z, l);
            // h̃ = j̃ z^{2l+1} / ((2l+1)!! (2l-1)!!) - i ỹ
            let jpart = if az == 0.0 {
                Complex64::new(0.0, 0.0)
            } else {
                let lnfac = (2 * l + 1) as f64 * z.ln() - lndf[l + 1] - lndf[l];
                jt * lnfac.exp()
            };
            j[l] = jt;
            h[l] = jpart - i * yt;
        }
        if series_from > 0 {
            let top = series_from - 1;
            let jr = miller_j(z, top);
            let hr = upward_h(z, top);
            for l in 0..=top {
                let ln_z = z.ln();
                let jf = (lndf[l + 1] - l as f64 * ln_z).exp();
                let hf = ((l + 1) as f64 * ln_z - lndf[l]).exp();
                j[l] = jr[l] * jf;
                h[l] = hr[l] * hf;
            }
        }
        Self { j, h }
    }

    /// Values at `z = 0` (static limit).
    pub fn origin(lmax: usize) -> Self {
        Self {
            j: vec![Complex64::new(1.0, 0.0); lmax + 1],
            h: vec![Complex64::new(0.0, -1.0); lmax + 1],
        }
    }
}

/// Series for j̃_l and ỹ_l = -y_l z^{l+1} / (2l-1)!!.
fn scaled_series(z: Complex64, l: usize) -> (Complex64, Complex64) {
    let q = -0.5 * z * z;
    let lf = l as f64;
    let mut tj = Complex64::new(1.0, 0.0);
    let mut sj = tj;
    for k in 1..400 {
        let kf = k as f64;
        tj *= q / (kf * (2.0 * lf + 2.0 * kf + 1.0));
        sj += tj;
        if tj.norm() < 1e-17 * sj.norm() {
            break;
        }
    }
    let mut ty = Complex64::new(1.0, 0.0);
    let mut sy = ty;
    for k in 1..400 {
        let kf = k as f64;
        ty *= q / (kf * (2.0 * kf - 1.0 - 2.0 * lf));
        sy += ty;
        if k > l && ty.norm() < 1e-17 * sy.norm().max(1e-300) {
            break;
        }
    }
    (sj, sy)
}

/// Unscaled j_l(z) for l = 0..=lmax from downward ratios `j_k / j_{k-1}`.
fn miller_j(z: Complex64, lmax: usize) -> Vec<Complex64> {
    let az = z.norm();
    let top = lmax.max(az as usize) + 30 + (40.0 * (lmax as f64).max(az)).sqrt() as usize;
    let mut ratio = vec![Complex64::new(0.0, 0.0); top + 2];
    for k in (1..=top).rev() {
        ratio[k] = 1.0 / (((2 * k + 1) as f64) / z - ratio[k + 1]);
    }
    let j0 = z.sin() / z;
    let j1 = z.sin() / (z * z) - z.cos() / z;
    let mut out = Vec::with_capacity(lmax + 1);
    if j0.norm() >= j1.norm() {
        out.push(j0);
        for k in 1..=lmax {
            out.push(out[k - 1] * ratio[k]);
        }
    } else {
        out.push(j1 / ratio[1]);
        if lmax >= 1 {
            out.push(j1);
        }
        for k in 2..=lmax {
            out.push(out[k - 1] * ratio[k]);
        }
    }
    out
}

/// Unscaled h^{(1)}_l(z) for l = 0..=lmax by upward recurrence.
fn upward_h(z: Complex64, lmax: usize) -> Vec<Complex64> {
    let i = Complex64::new(0.0, 1.0);
    let e = (i * z).exp();
    let mut out = Vec::with_capacity(lmax + 1);
    out.push(-i * e / z);
    if lmax >= 1 {
        out.push(-e * (z + i) / (z * z));
    }
    for l in 1..lmax {
        let next = out[l] * ((2 * l + 1) as f64) / z - out[l - 1];
        out.push(next);
    }
    out
}

/// Legendre polynomials `P_0(x), ..., P_lmax(x)`.
pub fn legendre_all(lmax: usize, x: f64) -> Vec<f64> {
    let mut p = Vec::with_capacity(lmax + 1);
    p.push(1.0);
    if lmax >= 1 {
        p.push(x);
    }
    for l in 1..lmax {
        let lf = l as f64;
        let next = ((2.0 * lf + 1.0) * x * p[l] - lf * p[l - 1]) / (lf + 1.0);
        p.push(next);
    }
    p
}

/// Real orthonormal spherical harmonics `Y_lm` at the unit direction `dir`,
/// for all `l <= lmax`, indexed by `l*l + l + m`.
pub fn real_spherical_harmonics(lmax: usize, dir: [f64; 3]) -> Vec<f64> {
    let norm = (dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]).sqrt();
    let (x, s, phi) = if norm == 0.0 {
        (1.0, 0.0, 0.0)
    } else {
        let ct = (dir[2] / norm).clamp(-1.0, 1.0);
        (ct, (1.0 - ct * ct).max(0.0).sqrt(), dir[1].atan2(dir[0]))
    };
    // Normalized associated Legendre functions P̄_l^m (include sqrt((2l+1)/4π (l-m)!/(l+m)!)).
    let n = lmax + 1;
    let mut pbar = vec![vec![0.0; n]; n];
    pbar[0][0] = (1.0 / (4.0 * PI)).sqrt();
    for m in 1..n {
        let mf = m as f64;
        pbar[m][m] = -((2.0 * mf + 1.0) / (2.0 * mf)).sqrt() * s * pbar[m - 1][m - 1];
    }
    for m in 0..n {
        if m + 1 < n {
            pbar[m + 1][m] = (2.0 * m as f64 + 3.0).sqrt() * x * pbar[m][m];
        }
        for l in (m + 2)..n {
            let lf = l as f64;
            let mf = m as f64;
            let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
            let lp = lf - 1.0;
            let a_prev = ((4.0 * lp * lp - 1.0) / (lp * lp - mf * mf)).sqrt();
            pbar[l][m] = a * (x * pbar[l - 1][m] - pbar[l - 2][m] / a_prev);
        }
    }
    let mut out = vec![0.0; n * n];
    let sqrt2 = std::f64::consts::SQRT_2;
    for l in 0..n {
        let li = l as i64;
        for m in -li..=li {
            let idx = (li * li + li + m) as usize;
            let am = m.unsigned_abs() as usize;
            out[idx] = match m.cmp(&0) {
                std::cmp::Ordering::Equal => pbar[l][0],
                std::cmp::Ordering::Greater => sqrt2 * pbar[l][am] * (m as f64 * phi).cos(),
                std::cmp::Ordering::Less => sqrt2 * pbar[l][am] * (am as f64 * phi).sin(),
            };
        }
    }
    out
}


/// Error function (Taylor series below 3, continued fraction for the complement above).
pub fn erf(x: f64) -> f64 {
    if x < 0.0 {
        return -erf(-x);
    }
    if x < 3.0 {
        let mut term = x;
        let mut sum = x;
        let x2 = x * x;
        for n in 1..200 {
            let nf = n as f64;
            term *= -x2 / nf;
            let add = term / (2.0 * nf + 1.0);
            sum += add;
            if add.abs() < 1e-17 * sum.abs() {
                break;
            }
        }
        2.0 / PI.sqrt() * sum
    } else {
        1.0 - erfc_large(x)
    }
}

/// Complementary error function.
pub fn erfc(x: f64) -> f64 {
    if x >= 3.0 {
        erfc_large(x)
    } else {
        1.0 - erf(x)
    }
}

fn erfc_large(x: f64) -> f64 {
    // Lentz evaluation of the continued fraction erfc(x) = e^{-x^2}/sqrt(pi) * 1/(x + 1/2/(x + 1/(x + 3/2/(x + ...)))).
    let tiny = 1e-300;
    let mut f = x;
    let mut c = x;
    let mut d = 0.0;
    for k in 1..300 {
        let a = 0.5 * k as f64;
        d = x + a * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = x + a / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    (-x * x).exp() / (PI.sqrt() * f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn erf_reference_values() {
        assert_relative_eq!(erf(0.5), 0.520_499_877_813_046_5, max_relative = 1e-13);
        assert_relative_eq!(erf(2.0), 0.995_322_265_018_952_7, max_relative = 1e-13);
        assert_relative_eq!(erfc(3.5), 7.430_983_723_414_128e-7, max_relative = 1e-10);
        assert_relative_eq!(erfc(2.9), 4.109_787_809_945_884e-5, max_relative = 1e-9);
    }

    #[test]
    fn gamma_matches_factorials() {
        assert_relative_eq!(gamma(5.0), 24.0, max_relative = 1e-13);
        assert_relative_eq!(gamma(0.5), PI.sqrt(), max_relative = 1e-13);
        assert_relative_eq!(gamma(2.5), 0.75 * PI.sqrt(), max_relative = 1e-13);
    }

    #[test]
    fn bessel_j_fixed_values() {
        assert_eq!(bessel_j(0.0, 0.0).unwrap(), 1.0);
        assert_relative_eq!(bessel_j(0.5, PI / 2.0).unwrap(), 2.0 / PI, max_relative = 1e-13);
        // J_0(1), J_1(2.5), J_2(20) reference values.
        assert_relative_eq!(bessel_j(0.0, 1.0).unwrap(), 0.765_197_686_557_966_6, max_relative = 1e-12);
        assert_relative_eq!(bessel_j(1.0, 2.5).unwrap(), 0.497_094_102_464_274_4, max_relative = 1e-12);
        assert_relative_eq!(bessel_j(2.0, 20.0).unwrap(), -0.160_341_351_922_998_23, max_relative = 1e-9);
    }

    #[test]
    fn bessel_half_integer_closed_forms() {
        for &z in &[0.3, 2.0, 7.7, 11.9, 12.5, 30.0, 90.0] {
            let j12 = (2.0 / (PI * z)).sqrt() * z.sin();
            let j32 = (2.0 / (PI * z)).sqrt() * (z.sin() / z - z.cos());
            assert!((bessel_j(0.5, z).unwrap() - j12).abs() < 1e-11);
            assert!((bessel_j(1.5, z).unwrap() - j32).abs() < 1e-11);
        }
    }

    #[test]
    fn series_and_asymptotic_agree_at_crossover() {
        for nu in [0.0, 0.5, 1.5, 2.0, 2.5, 4.0, 6.0] {
            let s = bessel_j_series(nu, BESSEL_SERIES_MAX_Z);
            let a = bessel_j_asymptotic(nu, BESSEL_SERIES_MAX_Z);
            assert!((s - a).abs() < 1e-9, "nu={nu}: {s} vs {a}");
        }
    }

    #[test]
    fn bessel_rejects_out_of_range() {
        assert!(bessel_j(7.0, 1.0).is_err());
        assert!(bessel_j(1.0, -1.0).is_err());
    }

    #[test]
    fn bessel_envelope_bounds() {
        // |J_nu(z)| <= min(c z^nu, c' z^{-1/2}) with c = 1/Gamma(nu+1) 2^-nu, c' = 1.
        for nu in [0.0, 0.5, 1.5, 2.5, 5.0] {
            for k in 1..400 {
                let z = 0.05 * k as f64;
                let v = bessel_j(nu, z).unwrap().abs();
                let small = (0.5 * z).powf(nu) / gamma(nu + 1.0);
                assert!(v <= small * (1.0 + 1e-12) + 1e-15);
                assert!(v <= 1.0 * z.powf(-0.5) + 1e-15 || z < 1.0);
            }
        }
    }

    fn j_direct(l: usize, z: Complex64) -> Complex64 {
        let s = z.sin();
        let c = z.cos();
        match l {
            0 => s / z,
            1 => s / (z * z) - c / z,
            2 => (3.0 / (z * z) - 1.0) * s / z - 3.0 * c / (z * z),
            _ => unreachable!(),
        }
    }

    #[test]
    fn scaled_spherical_low_orders() {
        let i = Complex64::new(0.0, 1.0);
        for z in [
            Complex64::new(0.2, 0.0),
            Complex64::new(3.7, 0.0),
            Complex64::new(0.0, 2.5),
            Complex64::new(1.3, 0.8),
            Complex64::new(25.0, 0.0),
        ] {
            let t = ScaledSpherical::new(z, 2);
            for l in 0..=2 {
                let df = [1.0, 3.0, 15.0][l];
                let dfm = [1.0, 1.0, 3.0][l];
                let j = t.j[l] * z.powi(l as i32) / df;
                assert!((j - j_direct(l, z)).norm() < 1e-11 * (1.0 + j.norm()), "j{l}({z})");
                let h = t.h[l] * dfm / z.powi(l as i32 + 1);
                let h_exact = match l {
                    0 => -i * (i * z).exp() / z,
                    1 => -(i * z).exp() * (z + i) / (z * z),
                    _ => i * (i * z).exp() * (z * z + 3.0 * i * z - 3.0) / (z * z * z),
                };
                assert!((h - h_exact).norm() < 1e-10 * (1.0 + h.norm()), "h{l}({z})");
            }
        }
    }

    #[test]
    fn scaled_spherical_high_order_consistency() {
        // Wronskian: j_l h_{l-1} - j_{l-1} h_l = i / z^2 (for h = j + i y).
        for z in [Complex64::new(4.0, 0.0), Complex64::new(0.0, 6.0), Complex64::new(15.0, 0.0)] {
            let t = ScaledSpherical::new(z, 40);
            let lndf = ln_double_factorials(40);
            for l in 1..=40usize {
                let jl = t.j[l] * (l as f64 * z.ln() - lndf[l + 1]).exp();
                let jm = t.j[l - 1] * ((l - 1) as f64 * z.ln() - lndf[l]).exp();
                let hl = t.h[l] * (lndf[l] - (l + 1) as f64 * z.ln()).exp();
                let hm = t.h[l - 1] * (lndf[l - 1] - l as f64 * z.ln()).exp();
                let w = (jl * hm - jm * hl) * z * z;
                let i = Complex64::new(0.0, 1.0);
                assert!((w - i).norm() < 1e-8, "l={l} z={z}: {w}");
            }
        }
    }

    #[test]
    fn spherical_harmonics_orthonormal() {
        let (ct, wt) = crate::quadrature::gauss_legendre(12);
        let nphi = 24;
        let lmax = 5;
        let n = (lmax + 1) * (lmax + 1);
        let mut gram = vec![0.0; n * n];
        for (c, w) in ct.iter().zip(&wt) {
            let s = (1.0 - c * c).sqrt();
            for k in 0..nphi {
                let phi = 2.0 * PI * k as f64 / nphi as f64;
                let y = real_spherical_harmonics(lmax, [s * phi.cos(), s * phi.sin(), *c]);
                let weight = w * 2.0 * PI / nphi as f64;
                for a in 0..n {
                    for b in 0..n {
                        gram[a * n + b] += weight * y[a] * y[b];
                    }
                }
            }
        }
        for a in 0..n {
            for b in 0..n {
                let target = if a == b { 1.0 } else { 0.0 };
                assert!((gram[a * n + b] - target).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn addition_theorem() {
        let u: [f64; 3] = [0.3, -0.4, 0.866_025_403_784_438_6];
        let v = [0.0, 0.6, 0.8];
        let nu = (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt();
        let cosg = (u[0] * v[0] + u[1] * v[1] + u[2] * v[2]) / nu;
        let lmax = 6;
        let yu = real_spherical_harmonics(lmax, u);
        let yv = real_spherical_harmonics(lmax, v);
        let p = legendre_all(lmax, cosg);
        for l in 0..=lmax {
            let s: f64 = (l * l..(l + 1) * (l + 1)).map(|k| yu[k] * yv[k]).sum();
            assert!((s - (2 * l + 1) as f64 / (4.0 * PI) * p[l]).abs() < 1e-13);
        }
    }
}
