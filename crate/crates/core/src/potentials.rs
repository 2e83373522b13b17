//! Test potentials built from analytic radial primitives, and their Kato-class
//! diagnostics: the global Kato norm, the local modulus and the modified
//! distal modulus.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::quadrature::{adaptive, gauss_legendre, Rule};
use crate::special::erf;
use crate::{dist, norm, Point};

pub const DEFAULT_TAIL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    /// `A exp(-|x-c|^2 / w^2)`
    Gaussian,
    /// `A` on `|x-c| <= w`, zero outside.
    SquareWell,
    /// `A exp(-|x-c| / w)`
    ExpDecay,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Primitive {
    pub shape: Shape,
    #[serde(default)]
    pub center: Point,
    pub amplitude: f64,
    pub width: f64,
}

impl Primitive {
    pub fn gaussian(amplitude: f64, width: f64) -> Self {
        Self { shape: Shape::Gaussian, center: [0.0; 3], amplitude, width }
    }

    pub fn square_well(amplitude: f64, radius: f64) -> Self {
        Self { shape: Shape::SquareWell, center: [0.0; 3], amplitude, width: radius }
    }

    pub fn exp_decay(amplitude: f64, width: f64) -> Self {
        Self { shape: Shape::ExpDecay, center: [0.0; 3], amplitude, width }
    }

    pub fn shifted(mut self, center: Point) -> Self {
        self.center = center;
        self
    }

    /// Radial profile `A s(r)` about the primitive's center.
    pub fn profile(&self, r: f64) -> f64 {
        let w = self.width;
        self.amplitude
            * match self.shape {
                Shape::Gaussian => (-(r * r) / (w * w)).exp(),
                Shape::SquareWell => {
                    if r <= w {
                        1.0
                    } else {
                        0.0
                    }
                }
                Shape::ExpDecay => (-r / w).exp(),
            }
    }

    /// `int_0^r |A s(t)| t dt`
    fn first_moment(&self, r: f64) -> f64 {
        let a = self.amplitude.abs();
        let w = self.width;
        match self.shape {
            Shape::Gaussian => 0.5 * a * w * w * (1.0 - (-(r * r) / (w * w)).exp()),
            Shape::SquareWell => 0.5 * a * r.min(w).powi(2),
            Shape::ExpDecay => a * w * w * (1.0 - (-r / w).exp() * (1.0 + r / w)),
        }
    }

    /// `F1(hi) - F1(lo)` without cancelling the common part.
    fn first_moment_between(&self, lo: f64, hi: f64) -> f64 {
        let a = self.amplitude.abs();
        let w = self.width;
        match self.shape {
            Shape::Gaussian => {
                let spread = (hi - lo) * (hi + lo) / (w * w);
                -0.5 * a * w * w * (-(lo * lo) / (w * w)).exp() * (-spread).exp_m1()
            }
            Shape::SquareWell => {
                let (l, h) = (lo.min(w), hi.min(w));
                0.5 * a * (h - l) * (h + l)
            }
            Shape::ExpDecay => {
                let (ul, du) = (lo / w, (hi - lo) / w);
                a * w * w * (-ul).exp() * (-(1.0 + ul) * (-du).exp_m1() - (-du).exp() * du)
            }
        }
    }

    /// `int_0^r |A s(t)| t^2 dt`
    fn second_moment(&self, r: f64) -> f64 {
        let a = self.amplitude.abs();
        let w = self.width;
        match self.shape {
            Shape::Gaussian => {
                let u = r / w;
                a * w.powi(3) * (0.25 * PI.sqrt() * erf(u) - 0.5 * u * (-(u * u)).exp())
            }
            Shape::SquareWell => a * r.min(w).powi(3) / 3.0,
            Shape::ExpDecay => {
                let u = r / w;
                a * w.powi(3) * (2.0 - (-u).exp() * (u * u + 2.0 * u + 2.0))
            }
        }
    }

    fn total_first_moment(&self) -> f64 {
        let a = self.amplitude.abs();
        let w = self.width;
        match self.shape {
            Shape::Gaussian => 0.5 * a * w * w,
            Shape::SquareWell => 0.5 * a * w * w,
            Shape::ExpDecay => a * w * w,
        }
    }

    /// Radius beyond which `|profile| < tol`.
    fn cutoff_radius(&self, tol: f64) -> f64 {
        let a = self.amplitude.abs();
        if a <= tol {
            return 0.0;
        }
        match self.shape {
            Shape::Gaussian => self.width * (a / tol).ln().sqrt(),
            Shape::SquareWell => self.width,
            Shape::ExpDecay => self.width * (a / tol).ln(),
        }
    }

    /// Newton potential of the profile: `int |A s(|x-c|)| / |x-y| dx`.
    fn kato_integral(&self, y: &Point) -> f64 {
        let d = dist(y, &self.center);
        let outer = self.total_first_moment();
        if d < 1e-300 {
            return 4.0 * PI * outer;
        }
        4.0 * PI * (self.second_moment(d) / d + outer - self.first_moment(d))
    }

    /// Spherical integral of the profile over the sphere `|x - y| = rho`,
    /// divided by `rho`: `(2 pi / d) [F1(d + rho) - F1(|d - rho|)] / rho`.
    fn shell_integral_over_rho(&self, d: f64, rho: f64) -> f64 {
        if d < 1e-12 {
            return 4.0 * PI * self.profile(rho).abs();
        }
        2.0 * PI / d * self.first_moment_between((d - rho).abs(), d + rho) / rho
    }
}

/// A real potential given as a finite sum of primitives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Potential {
    primitives: Vec<Primitive>,
    support_radius: f64,
    tail_tol: f64,
}

impl Potential {
    pub fn new(primitives: Vec<Primitive>) -> Result<Self> {
        Self::with_tail_tol(primitives, DEFAULT_TAIL_TOL)
    }

    pub fn with_tail_tol(primitives: Vec<Primitive>, tail_tol: f64) -> Result<Self> {
        if !(tail_tol > 0.0) {
            return Err(Error::InvalidInput(format!("tail_tol must be positive, got {tail_tol}")));
        }
        for p in &primitives {
            if !p.amplitude.is_finite() || !p.width.is_finite() || p.width <= 0.0 {
                return Err(Error::InvalidInput(format!(
                    "primitive needs finite amplitude and positive width: {p:?}"
                )));
            }
            if p.center.iter().any(|c| !c.is_finite()) {
                return Err(Error::InvalidInput(format!("non-finite center: {p:?}")));
            }
        }
        let n = primitives.len().max(1) as f64;
        let support_radius = primitives
            .iter()
            .map(|p| norm(&p.center) + p.cutoff_radius(tail_tol / n))
            .fold(0.0, f64::max);
        Ok(Self { primitives, support_radius, tail_tol })
    }

    pub fn zero() -> Self {
        Self { primitives: Vec::new(), support_radius: 0.0, tail_tol: DEFAULT_TAIL_TOL }
    }

    pub fn primitives(&self) -> &[Primitive] {
        &self.primitives
    }

    pub fn support_radius(&self) -> f64 {
        self.support_radius
    }

    pub fn tail_tol(&self) -> f64 {
        self.tail_tol
    }

    pub fn is_zero(&self) -> bool {
        self.primitives.iter().all(|p| p.amplitude == 0.0)
    }

    /// All primitives centered at the origin.
    pub fn is_radial(&self) -> bool {
        self.primitives.iter().all(|p| norm(&p.center) < 1e-14)
    }

    fn same_sign(&self) -> bool {
        self.primitives.iter().all(|p| p.amplitude >= 0.0)
            || self.primitives.iter().all(|p| p.amplitude <= 0.0)
    }

    pub fn evaluate(&self, x: &Point) -> f64 {
        self.primitives.iter().map(|p| p.profile(dist(x, &p.center))).sum()
    }

    /// `V` along a ray from the origin, valid for radial potentials.
    pub fn radial_value(&self, r: f64) -> f64 {
        self.evaluate(&[0.0, 0.0, r])
    }

    /// Radii (about the origin) where the potential is discontinuous.
    pub fn radial_breaks(&self) -> Vec<f64> {
        self.primitives
            .iter()
            .filter(|p| p.shape == Shape::SquareWell && norm(&p.center) < 1e-14)
            .map(|p| p.width)
            .collect()
    }

    /// `V(alpha x)`.
    pub fn dilate(&self, alpha: f64) -> Result<Self> {
        let prims = self
            .primitives
            .iter()
            .map(|p| Primitive {
                center: [p.center[0] / alpha, p.center[1] / alpha, p.center[2] / alpha],
                width: p.width / alpha,
                ..*p
            })
            .collect();
        Self::with_tail_tol(prims, self.tail_tol)
    }

    /// Multiply every amplitude by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        let primitives = self
            .primitives
            .iter()
            .map(|p| Primitive { amplitude: p.amplitude * c, ..*p })
            .collect();
        Self { primitives, ..self.clone() }
    }

    /// Largest depth of the negative part, used as a bound on binding energies.
    pub fn negative_depth(&self) -> f64 {
        let neg: f64 = self.primitives.iter().map(|p| p.amplitude.min(0.0)).sum();
        -neg
    }

    /// Union of primitive centers and a lattice of step 0.5 inside radius `R_supp + 2`.
    pub fn default_probes(&self) -> Vec<Point> {
        let mut probes: Vec<Point> = self.primitives.iter().map(|p| p.center).collect();
        probes.push([0.0; 3]);
        let radius = self.support_radius + 2.0;
        let steps = (radius / 0.5).floor() as i64;
        for i in -steps..=steps {
            for j in -steps..=steps {
                for k in -steps..=steps {
                    let p = [0.5 * i as f64, 0.5 * j as f64, 0.5 * k as f64];
                    if norm(&p) <= radius {
                        probes.push(p);
                    }
                }
            }
        }
        probes
    }

    /// Global Kato norm estimated as a maximum over `probe`.
    pub fn kato_norm(&self, probe: &[Point], quad: &KatoQuadrature) -> Result<f64> {
        self.probe_max(probe, |y| self.kato_at(y, quad))
    }

    /// `int_{|x-y|<eps} |V(x)| / |x-y| dx`, maximized over `probe`.
    pub fn local_kato_modulus(&self, eps: f64, probe: &[Point], quad: &KatoQuadrature) -> Result<f64> {
        if !(eps > 0.0) {
            return Err(Error::InvalidInput(format!("eps must be positive, got {eps}")));
        }
        self.probe_max(probe, |y| self.local_at(y, eps, quad))
    }

    /// `|| chi_{|x|>R} V ||_K`, maximized over `probe`.
    pub fn distal_kato_modulus(&self, radius: f64, probe: &[Point], quad: &KatoQuadrature) -> Result<f64> {
        if !(radius >= 0.0) {
            return Err(Error::InvalidInput(format!("R must be nonnegative, got {radius}")));
        }
        self.probe_max(probe, |y| self.distal_at(y, radius, quad))
    }

    /// `int_{|x-y|<=R} |V(x)| dx`.
    pub fn ball_mass(&self, y: &Point, radius: f64, quad: &KatoQuadrature) -> Result<f64> {
        if self.same_sign() {
            let mut total = 0.0;
            for p in &self.primitives {
                let d = dist(y, &p.center);
                let f = |rho: f64| rho * rho * p.shell_integral_over_rho(d, rho);
                total += split_adaptive(&f, 0.0, radius, &kinks(p, d), quad)?;
            }
            Ok(total)
        } else if self.is_radial() {
            RadialAbs::new(self).shells(y, radius, 2, quad)
        } else {
            self.cartesian_shell(y, radius, quad, |x, _rho| self.evaluate(x).abs(), 2)
        }
    }

    fn probe_max<F>(&self, probe: &[Point], f: F) -> Result<f64>
    where
        F: Fn(&Point) -> Result<f64> + Sync,
    {
        if probe.is_empty() {
            return Err(Error::InvalidInput("probe set is empty".into()));
        }
        if self.is_zero() {
            return Ok(0.0);
        }
        let vals: Vec<f64> = probe.par_iter().map(&f).collect::<Result<_>>()?;
        Ok(vals.into_iter().fold(0.0, f64::max))
    }

    fn kato_at(&self, y: &Point, quad: &KatoQuadrature) -> Result<f64> {
        if self.same_sign() {
            Ok(self.primitives.iter().map(|p| p.kato_integral(y)).sum())
        } else if self.is_radial() {
            RadialAbs::new(self).newton(norm(y), 0.0, quad)
        } else {
            let reach = norm(y) + self.support_radius;
            self.cartesian_shell(y, reach, quad, |x, _| self.evaluate(x).abs(), 1)
        }
    }

    fn local_at(&self, y: &Point, eps: f64, quad: &KatoQuadrature) -> Result<f64> {
        if self.same_sign() {
            let mut total = 0.0;
            for p in &self.primitives {
                let d = dist(y, &p.center);
                let f = |rho: f64| rho * p.shell_integral_over_rho(d, rho);
                total += split_adaptive(&f, 0.0, eps, &kinks(p, d), quad)?;
            }
            Ok(total)
        } else if self.is_radial() {
            RadialAbs::new(self).shells(y, eps, 1, quad)
        } else {
            self.cartesian_shell(y, eps, quad, |x, _| self.evaluate(x).abs(), 1)
        }
    }

    fn distal_at(&self, y: &Point, radius: f64, quad: &KatoQuadrature) -> Result<f64> {
        if self.same_sign() && self.is_radial() {
            // Newton's theorem about the origin.
            let s = norm(y);
            let mut total = 0.0;
            for p in &self.primitives {
                let outer = p.total_first_moment();
                total += if s <= radius {
                    4.0 * PI * (outer - p.first_moment(radius))
                } else {
                    4.0 * PI
                        * ((p.second_moment(s) - p.second_moment(radius)) / s + outer
                            - p.first_moment(s))
                };
            }
            Ok(total)
        } else if self.is_radial() {
            RadialAbs::new(self).newton(norm(y), radius, quad)
        } else {
            let reach = norm(y) + self.support_radius;
            self.cartesian_shell(
                y,
                reach,
                quad,
                |x, _| if norm(x) > radius { self.evaluate(x).abs() } else { 0.0 },
                1,
            )
        }
    }

    /// Brute-force `int_0^reach rho^power int_{S^2} g(y + rho w) dw drho` with a
    /// two-level convergence check.
    fn cartesian_shell<G>(&self, y: &Point, reach: f64, quad: &KatoQuadrature, g: G, power: i32) -> Result<f64>
    where
        G: Fn(&Point, f64) -> f64,
    {
        let eval = |level: usize| -> f64 {
            let n_theta = quad.angular_order * level;
            let n_phi = 2 * n_theta;
            let (ct, wt) = gauss_legendre(n_theta);
            let panels = ((reach / quad.radial_panel).ceil() as usize).max(1) * level;
            let breaks: Vec<f64> = (0..=panels).map(|k| reach * k as f64 / panels as f64).collect();
            let radial = Rule::composite(quad.radial_order, &breaks);
            let mut total = 0.0;
            for (&rho, &wr) in radial.nodes.iter().zip(&radial.weights) {
                let mut shell = 0.0;
                for (c, w) in ct.iter().zip(&wt) {
                    let s = (1.0 - c * c).sqrt();
                    for k in 0..n_phi {
                        let phi = 2.0 * PI * (k as f64 + 0.5) / n_phi as f64;
                        let x = [
                            y[0] + rho * s * phi.cos(),
                            y[1] + rho * s * phi.sin(),
                            y[2] + rho * c,
                        ];
                        shell += w * g(&x, rho);
                    }
                }
                total += wr * rho.powi(power) * shell * 2.0 * PI / n_phi as f64;
            }
            total
        };
        let mut coarse = eval(1);
        let mut level = 2;
        loop {
            let fine = eval(level);
            match check_levels(coarse, fine, quad.rel_tol) {
                Ok(()) => return Ok(fine),
                Err(e) if level >= 4 => return Err(e),
                Err(_) => {
                    coarse = fine;
                    level *= 2;
                }
            }
        }
    }

    /// Kato diagnostics over default probes.
    pub fn diagnostics(&self, eps: &[f64], radii: &[f64], quad: &KatoQuadrature) -> Result<KatoDiagnostics> {
        let probe = self.default_probes();
        let kato_norm = self.kato_norm(&probe, quad)?;
        let local = eps
            .iter()
            .map(|&e| Ok(ModulusSample { eps: e, val: self.local_kato_modulus(e, &probe, quad)? }))
            .collect::<Result<_>>()?;
        let distal = radii
            .iter()
            .map(|&r| Ok(DistalSample { r, val: self.distal_kato_modulus(r, &probe, quad)? }))
            .collect::<Result<_>>()?;
        Ok(KatoDiagnostics { kato_norm, local, distal })
    }
}

fn kinks(p: &Primitive, d: f64) -> Vec<f64> {
    let mut k = vec![d];
    if p.shape == Shape::SquareWell {
        k.push(p.width + d);
        k.push((p.width - d).abs());
    }
    k
}

fn split_adaptive<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, kinks: &[f64], quad: &KatoQuadrature) -> Result<f64> {
    let mut pts = vec![a, b];
    pts.extend(kinks.iter().copied().filter(|&k| k > a && k < b));
    pts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let mut total = 0.0;
    for w in pts.windows(2) {
        // Aim below the requested tolerance; only the requested one is enforced.
        let res = adaptive(f, w[0], w[1], quad.rel_tol * 1e-2, 1e-300);
        if !res.converged && res.error > quad.rel_tol * res.value.abs() {
            return Err(Error::NonConvergedQuadrature {
                rel_diff: res.error / res.value.abs().max(1e-300),
                rel_tol: quad.rel_tol,
            });
        }
        total += res.value;
    }
    Ok(total)
}

/// `|V|` of a radial potential whose primitives differ in sign, integrated
/// numerically between its zero crossings.
struct RadialAbs<'a> {
    p: &'a Potential,
    breaks: Vec<f64>,
    reach: f64,
}

const CROSSING_SAMPLES: usize = 4000;

impl<'a> RadialAbs<'a> {
    fn new(p: &'a Potential) -> Self {
        let reach = p.support_radius;
        let mut breaks = p.radial_breaks();
        let v = |r: f64| p.radial_value(r);
        let h = reach / CROSSING_SAMPLES as f64;
        for k in 0..CROSSING_SAMPLES {
            let (mut a, mut b) = (k as f64 * h, (k + 1) as f64 * h);
            if v(a) * v(b) >= 0.0 {
                continue;
            }
            for _ in 0..60 {
                let m = 0.5 * (a + b);
                if v(a) * v(m) <= 0.0 {
                    b = m;
                } else {
                    a = m;
                }
            }
            breaks.push(0.5 * (a + b));
        }
        breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Self { p, breaks, reach }
    }

    /// `int_a^b |V(r)| r^power dr`, clipped to the support.
    fn moment(&self, a: f64, b: f64, power: i32, quad: &KatoQuadrature) -> Result<f64> {
        let b = b.min(self.reach);
        if b <= a {
            return Ok(0.0);
        }
        split_adaptive(&|r: f64| self.p.radial_value(r).abs() * r.powi(power), a, b, &self.breaks, quad)
    }

    /// Newton's theorem: `int_{|x| > lo} |V(x)| / |x - y| dx` with `s = |y|`.
    fn newton(&self, s: f64, lo: f64, quad: &KatoQuadrature) -> Result<f64> {
        if s <= lo {
            return Ok(4.0 * PI * self.moment(lo, self.reach, 1, quad)?);
        }
        Ok(4.0 * PI * (self.moment(lo, s, 2, quad)? / s + self.moment(s, self.reach, 1, quad)?))
    }

    /// `int_0^reach rho^power (sphere integral of |V| about y at radius rho) / rho^2`.
    fn shells(&self, y: &Point, reach: f64, power: i32, quad: &KatoQuadrature) -> Result<f64> {
        let d = norm(y);
        let mut kinks = vec![d];
        for &b in &self.breaks {
            kinks.extend([b + d, (b - d).abs()]);
        }
        kinks.push(self.reach + d);
        let failed = std::cell::Cell::new(None);
        let f = |rho: f64| -> f64 {
            let shell = if d < 1e-12 {
                4.0 * PI * self.p.radial_value(rho).abs()
            } else if rho <= 0.0 {
                0.0
            } else {
                match self.moment((d - rho).abs(), d + rho, 1, quad) {
                    Ok(m) => 2.0 * PI * m / (d * rho),
                    Err(e) => {
                        failed.set(Some(e));
                        0.0
                    }
                }
            };
            rho.powi(power) * shell
        };
        let total = split_adaptive(&f, 0.0, reach.min(d + self.reach), &kinks, quad)?;
        match failed.take() {
            Some(e) => Err(e),
            None => Ok(total),
        }
    }
}

fn check_levels(coarse: f64, fine: f64, rel_tol: f64) -> Result<()> {
    let rel = (fine - coarse).abs() / fine.abs().max(1e-300);
    if rel > rel_tol && (fine - coarse).abs() > 1e-14 {
        Err(Error::NonConvergedQuadrature { rel_diff: rel, rel_tol })
    } else {
        Ok(())
    }
}

/// Quadrature controls for Kato functionals. The closed-form radial reduction
/// is used whenever the primitives share a sign; the brute-force spherical
/// rule around each probe is the fallback.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KatoQuadrature {
    pub rel_tol: f64,
    pub radial_order: usize,
    pub radial_panel: f64,
    pub angular_order: usize,
}

impl Default for KatoQuadrature {
    fn default() -> Self {
        Self { rel_tol: 1e-6, radial_order: 12, radial_panel: 0.5, angular_order: 16 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModulusSample {
    pub eps: f64,
    pub val: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistalSample {
    #[serde(rename = "R")]
    pub r: f64,
    pub val: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KatoDiagnostics {
    pub kato_norm: f64,
    pub local: Vec<ModulusSample>,
    pub distal: Vec<DistalSample>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gauss() -> Potential {
        Potential::new(vec![Primitive::gaussian(1.0, 1.0)]).unwrap()
    }

    fn ball() -> Potential {
        Potential::new(vec![Primitive::square_well(1.0, 1.0)]).unwrap()
    }

    #[test]
    fn first_moment_between_matches_difference() {
        for p in [Primitive::gaussian(2.0, 0.7), Primitive::square_well(-3.0, 1.2), Primitive::exp_decay(1.5, 0.8)] {
            for (lo, hi) in [(0.0, 0.5), (0.3, 1.1), (1.0, 2.5), (0.9, 1.5)] {
                let want = p.first_moment(hi) - p.first_moment(lo);
                assert!((p.first_moment_between(lo, hi) - want).abs() < 1e-13, "{p:?} {lo} {hi}");
            }
            // Far out the plain difference is all rounding; the direct form is not.
            let (lo, hi) = (6.0, 6.0 + 1e-6);
            let direct = p.first_moment_between(lo, hi);
            let mid = 0.5 * (lo + hi);
            let slope = p.profile(mid).abs() * mid * 1e-6;
            assert!((direct - slope).abs() <= 1e-5 * slope.max(1e-300) || slope == 0.0, "{p:?}: {direct} vs {slope}");
        }
    }

    #[test]
    fn evaluate_examples() {
        assert_eq!(Potential::zero().evaluate(&[0.3, 1.0, 2.0]), 0.0);
        let g = Potential::new(vec![Primitive::gaussian(-8.0, 1.0)]).unwrap();
        assert_eq!(g.evaluate(&[0.0; 3]), -8.0);
        let w = Potential::new(vec![Primitive::square_well(-4.0, 1.0)]).unwrap();
        assert_eq!(w.evaluate(&[0.0, 2.0, 0.0]), 0.0);
    }

    #[test]
    fn tail_is_below_tolerance_outside_support() {
        let v = Potential::new(vec![
            Primitive::gaussian(-8.0, 1.0),
            Primitive::exp_decay(3.0, 0.5).shifted([0.5, 0.0, 0.0]),
        ])
        .unwrap();
        let r = v.support_radius() * 1.0001;
        for k in 0..50 {
            let t = k as f64 * 0.37;
            let x = [r * t.cos() * 0.6, r * t.sin() * 0.6, r * 0.8];
            assert!(v.evaluate(&x).abs() <= v.tail_tol());
        }
    }

    #[test]
    fn rejects_bad_width() {
        assert!(Potential::new(vec![Primitive::gaussian(1.0, 0.0)]).is_err());
        assert!(Potential::new(vec![Primitive::gaussian(f64::NAN, 1.0)]).is_err());
    }

    #[test]
    fn kato_norm_closed_forms() {
        let q = KatoQuadrature::default();
        let probe = gauss().default_probes();
        assert!((gauss().kato_norm(&probe, &q).unwrap() - 2.0 * PI).abs() < 1e-9);
        let probe = ball().default_probes();
        assert!((ball().kato_norm(&probe, &q).unwrap() - 2.0 * PI).abs() < 1e-9);
        assert_eq!(Potential::zero().kato_norm(&[[0.0; 3]], &q).unwrap(), 0.0);
        // Peak at the center: 4 pi a w^2.
        let e = Potential::new(vec![Primitive::exp_decay(-1.0, 1.0)]).unwrap();
        let got = e.kato_norm(&e.default_probes(), &q).unwrap();
        assert!((got - 4.0 * PI).abs() < 1e-9, "{got}");
    }

    #[test]
    fn uniform_ball_potential_profile() {
        // 2 pi (1 - |y|^2 / 3) inside the unit ball.
        let b = ball();
        for s in [0.0, 0.3, 0.7, 1.0] {
            let got = b.primitives[0].kato_integral(&[s, 0.0, 0.0]);
            assert!((got - 2.0 * PI * (1.0 - s * s / 3.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn mixed_sign_radial_matches_cartesian_rule() {
        // Sign change near r = 0.74; the brute-force rule converges slowly across it.
        let v = Potential::new(vec![Primitive::gaussian(1.0, 1.0), Primitive::gaussian(-2.0, 0.5)]).unwrap();
        let q = KatoQuadrature::default();
        let loose = KatoQuadrature { rel_tol: 1e-3, ..q };
        let abs_v = |x: &Point, _: f64| v.evaluate(x).abs();
        for y in [[0.0; 3], [0.7, 0.0, 0.0], [0.0, 1.5, 0.5]] {
            let reach = norm(&y) + v.support_radius;
            let brute = v.cartesian_shell(&y, reach, &loose, abs_v, 1).unwrap();
            let fast = v.kato_at(&y, &q).unwrap();
            assert!((fast - brute).abs() < 1e-3 * brute, "kato at {y:?}: {fast} vs {brute}");
            for eps in [0.3, 1.2] {
                let brute = v.cartesian_shell(&y, eps, &loose, abs_v, 1).unwrap();
                let fast = v.local_at(&y, eps, &q).unwrap();
                assert!((fast - brute).abs() < 1e-3 * brute, "local {eps} at {y:?}: {fast} vs {brute}");
                let brute = v.cartesian_shell(&y, eps, &loose, abs_v, 2).unwrap();
                let fast = v.ball_mass(&y, eps, &q).unwrap();
                assert!((fast - brute).abs() < 1e-3 * brute, "ball {eps} at {y:?}: {fast} vs {brute}");
            }
            let whole = v.distal_at(&y, 0.0, &q).unwrap();
            assert!((whole - v.kato_at(&y, &q).unwrap()).abs() < 1e-9 * whole);
        }
        // Cutoff on a panel edge so the brute-force rule sees no interior jump.
        let outside = |x: &Point, _: f64| if norm(x) > 1.0 { v.evaluate(x).abs() } else { 0.0 };
        let reach = (v.support_radius / q.radial_panel).ceil() * q.radial_panel;
        let brute = v.cartesian_shell(&[0.0; 3], reach, &loose, outside, 1).unwrap();
        let fast = v.distal_at(&[0.0; 3], 1.0, &q).unwrap();
        assert!((fast - brute).abs() < 1e-3 * brute, "distal: {fast} vs {brute}");
    }

    #[test]
    fn local_and_distal_examples() {
        let q = KatoQuadrature::default();
        let origin = [[0.0; 3]];
        let v = ball().local_kato_modulus(0.1, &origin, &q).unwrap();
        assert!((v - 2.0 * PI * 0.01).abs() < 1e-9);
        let big = gauss().local_kato_modulus(12.0, &origin, &q).unwrap();
        assert!((big - 2.0 * PI).abs() < 1e-6);
        assert_eq!(ball().distal_kato_modulus(1.0, &gauss().default_probes(), &q).unwrap(), 0.0);
        let d0 = gauss().distal_kato_modulus(0.0, &gauss().default_probes(), &q).unwrap();
        assert!((d0 - 2.0 * PI).abs() < 1e-9);
        assert_eq!(Potential::zero().local_kato_modulus(0.5, &origin, &q).unwrap(), 0.0);
    }

    #[test]
    fn off_center_probe_local_modulus_matches_brute_force() {
        let q = KatoQuadrature { rel_tol: 1e-4, ..Default::default() };
        let g = gauss();
        let y = [[0.8, 0.0, 0.0]];
        let fast = g.local_kato_modulus(0.7, &y, &q).unwrap();
        let brute = g
            .cartesian_shell(&y[0], 0.7, &q, |x, _| g.evaluate(x).abs(), 1)
            .unwrap();
        assert!((fast - brute).abs() < 1e-5 * brute, "{fast} vs {brute}");
    }

    #[test]
    fn mixed_sign_falls_back_to_brute_force() {
        let q = KatoQuadrature { rel_tol: 1e-5, ..Default::default() };
        let v = Potential::new(vec![
            Primitive::gaussian(-1.0, 1.0),
            Primitive::gaussian(0.5, 0.7).shifted([7.0, 0.0, 0.0]),
        ])
        .unwrap();
        let y = [[0.0; 3]];
        let got = v.kato_norm(&y, &q).unwrap();
        // Far-apart supports: |V| is the sum of the two profiles.
        let sum = v.primitives.iter().map(|p| p.kato_integral(&y[0])).sum::<f64>();
        assert!((got - sum).abs() < 1e-4 * sum, "{got} vs {sum}");
    }

    #[test]
    fn dilation_scales_kato_norm() {
        let q = KatoQuadrature::default();
        let v = Potential::new(vec![
            Primitive::gaussian(-2.0, 1.0),
            Primitive::square_well(-1.0, 0.5).shifted([0.5, 0.0, 0.0]),
        ])
        .unwrap();
        let base = v.kato_norm(&v.default_probes(), &q).unwrap();
        for alpha in [0.5, 2.0] {
            let w = v.dilate(alpha).unwrap();
            let probes: Vec<Point> = v
                .default_probes()
                .iter()
                .map(|p| [p[0] / alpha, p[1] / alpha, p[2] / alpha])
                .collect();
            let got = w.kato_norm(&probes, &q).unwrap();
            assert!((got - base / (alpha * alpha)).abs() < 1e-9 * base);
        }
    }
}
