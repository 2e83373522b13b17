//! Perturbed resolvent `R_V = R0 - R0 V (I + R0 V)^{-1} R0` for radial
//! potentials, one partial wave at a time.
//!
//! For each `l` the difference `D_l = (R_V - R0)_l(r_x, r_y)` is obtained from
//! `P = R0 V R0 delta_y`, the solve `(I + R0 V) e = P` and
//! `D_l = -P(r_x) + (R0 V e)(r_x)`.

use nalgebra::{DMatrix, DVector, Dyn, LU};
use num_complex::Complex64;
use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::free_kernels::{resolvent0_radial, SpectralParameter};
use crate::grids::SupportGrid;
use crate::partial_wave::{green, table, wave_cutoff, Discretization, GreenRow, GreenTables, RadialMesh};
use crate::potentials::Potential;
use crate::quadrature::Rule;
use crate::special::{legendre_all, ln_double_factorials, ScaledSpherical};
use crate::{dist, norm, Point};

pub const SOLVER_TOL: f64 = 1e-10;
/// Partial-wave sums stop after three consecutive terms below this relative size.
pub const WAVE_SUM_TOL: f64 = 1e-12;

struct WaveSolve {
    lu: LU<Complex64, Dyn, Dyn>,
    sigma_est: f64,
    /// `V A` and `V B` at the nodes for the regular and outgoing solutions
    /// `A = (I + K V)^{-1} a`, `B = (I + K V)^{-1} b`.
    a_sol: Vec<Complex64>,
    b_sol: Vec<Complex64>,
    va: Vec<Complex64>,
    vb: Vec<Complex64>,
    /// `1 - int a V B s^2 ds`; the perturbed kernel is `A(r<) B(r>) / beta`.
    beta: Complex64,
}

/// Free factors `g_l(r, s) = a(r<) b(r>)`.
fn free_factors(l: usize, r: f64, t: &ScaledSpherical) -> (Complex64, Complex64) {
    let a = Complex64::new(0.0, 1.0) * t.j[l] * r.powi(l as i32);
    let b = if r == 0.0 {
        Complex64::new(f64::INFINITY, 0.0)
    } else {
        t.h[l] / ((2 * l + 1) as f64 * r.powi(l as i32 + 1))
    };
    (a, b)
}

/// Factorizations of `I + R0(eta^2) V` for every needed partial wave,
/// built lazily and shared across evaluation pairs.
pub struct ResolventSolve {
    pub eta: SpectralParameter,
    mesh: RadialMesh,
    potential: Potential,
    v: Vec<f64>,
    lmax: usize,
    tables: GreenTables,
    rows: OnceLock<Vec<GreenRow>>,
    waves: Vec<OnceLock<WaveSolve>>,
}

impl std::fmt::Debug for ResolventSolve {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ResolventSolve")
            .field("eta", &self.eta)
            .field("nodes", &self.mesh.len())
            .field("lmax", &self.lmax)
            .finish()
    }
}

/// Largest partial wave needed for pairs drawn from `pairs`. Pairs with an
/// endpoint at the origin only involve `l = 0`.
pub fn lmax_for_pairs(disc: &Discretization, eta_abs: f64, pairs: &[(Point, Point)]) -> usize {
    if pairs.iter().all(|(x, y)| norm(x) == 0.0 || norm(y) == 0.0) {
        0
    } else {
        wave_cutoff(eta_abs, disc.r_max())
    }
}

impl ResolventSolve {
    pub fn new(p: &Potential, g: &SupportGrid, eta: SpectralParameter, lmax: usize) -> Result<Self> {
        let disc = crate::birman_schwinger::discretization(p, g)?;
        Self::from_discretization(&disc, eta, lmax)
    }

    pub fn from_discretization(disc: &Discretization, eta: SpectralParameter, lmax: usize) -> Result<Self> {
        Self::with_mesh_scale(disc, eta, lmax, eta.eta().norm())
    }

    /// As [`Self::from_discretization`] with the radial mesh built for `|eta| = mesh_scale`,
    /// so that solves at different `eta` share nodes.
    pub fn with_mesh_scale(disc: &Discretization, eta: SpectralParameter, lmax: usize, mesh_scale: f64) -> Result<Self> {
        if !disc.is_radial() {
            return Err(Error::OutOfSupportedRange(
                "the perturbed resolvent is implemented for radial potentials".into(),
            ));
        }
        let mesh = disc.mesh(mesh_scale.max(eta.eta().norm()));
        let v = mesh.nodes.iter().map(|&r| disc.potential.radial_value(r)).collect();
        let tables = GreenTables::new(&mesh, eta.eta(), lmax);
        let waves = (0..=lmax).map(|_| OnceLock::new()).collect();
        Ok(Self {
            eta,
            mesh,
            potential: disc.potential.clone(),
            v,
            lmax,
            tables,
            rows: OnceLock::new(),
            waves,
        })
    }

    pub fn lmax(&self) -> usize {
        self.lmax
    }

    fn wave(&self, l: usize) -> &WaveSolve {
        self.waves[l].get_or_init(|| {
            let rows = self.rows.get_or_init(|| self.tables.node_rows(&self.mesh));
            let mut m = self.tables.matrix(&self.mesh, rows, l);
            for (j, mut col) in m.column_iter_mut().enumerate() {
                col *= Complex64::new(self.v[j], 0.0);
            }
            let n = m.nrows();
            let m = DMatrix::identity(n, n) + m;
            let lu = m.lu();
            let sigma_est = inverse_power_sigma(&lu, n);
            let (a, b): (Vec<_>, Vec<_>) =
                (0..n).map(|j| free_factors(l, self.mesh.nodes[j], &self.tables.nodes[j])).unzip();
            let solve = |rhs: Vec<Complex64>| {
                lu.solve(&DVector::from_vec(rhs))
                    .map(|x| x.iter().copied().collect::<Vec<_>>())
                    .unwrap_or_else(|| vec![Complex64::new(f64::NAN, 0.0); n])
            };
            let a_sol = solve(a.clone());
            let b_sol = solve(b);
            let va: Vec<_> = a_sol.iter().zip(&self.v).map(|(x, v)| x * *v).collect();
            let vb: Vec<_> = b_sol.iter().zip(&self.v).map(|(x, v)| x * *v).collect();
            let beta = Complex64::new(1.0, 0.0)
                - (0..n)
                    .map(|j| a[j] * vb[j] * self.mesh.nodes[j] * self.mesh.nodes[j] * self.mesh.weights[j])
                    .sum::<Complex64>();
            WaveSolve { lu, sigma_est, a_sol, b_sol, va, vb, beta }
        })
    }

    /// Radial nodes and quadrature weights (without `r^2`).
    pub fn nodes(&self) -> (&[f64], &[f64]) {
        (&self.mesh.nodes, &self.mesh.weights)
    }

    /// Perturbed radial kernel `G_l(r_i, r_j)` at the nodes, with
    /// `R_V(x, y) = sum_l (2l+1)/(4 pi) G_l(|x|, |y|) P_l(cos gamma)`.
    pub fn radial_kernel(&self, l: usize) -> Result<DMatrix<Complex64>> {
        let w = self.check(l)?;
        let n = self.mesh.len();
        Ok(DMatrix::from_fn(n, n, |i, j| {
            let (lo, hi) = if self.mesh.nodes[i] <= self.mesh.nodes[j] { (i, j) } else { (j, i) };
            w.a_sol[lo] * w.b_sol[hi] / w.beta
        }))
    }

    /// `Im G_l(r_i, r_j)` for real `eta`, as `c_l psi(r_i) conj(psi(r_j))`
    /// with `psi` the distorted regular wave. Avoids the cancellation in
    /// `Im(A B)` when the outgoing factor is large.
    pub fn radial_density(&self, l: usize) -> Result<DMatrix<f64>> {
        let eta = self.eta.eta();
        if eta.im != 0.0 {
            return Err(Error::InvalidInput("radial density needs a real spectral parameter".into()));
        }
        let w = self.check(l)?;
        let lndf = ln_double_factorials(l);
        let c = ((2 * l + 1) as f64 * eta.re.abs().ln() - lndf[l + 1] - lndf[l]).exp() / (2 * l + 1) as f64;
        let c = c * eta.re.signum();
        let psi: Vec<Complex64> = w.a_sol.iter().map(|a| a * Complex64::new(0.0, -1.0)).collect();
        let n = psi.len();
        Ok(DMatrix::from_fn(n, n, |i, j| c * (psi[i] * psi[j].conj()).re))
    }

    /// Smallest-singular-value estimate of `I + R0 V` over partial waves `0..=lmax`.
    pub fn condition_estimate(&self) -> f64 {
        (0..=self.lmax).map(|l| self.wave(l).sigma_est).fold(f64::INFINITY, f64::min)
    }

    fn check(&self, l: usize) -> Result<&WaveSolve> {
        let w = self.wave(l);
        if !(w.sigma_est > SOLVER_TOL) {
            return Err(Error::NearSingularSolve { sigma_min: w.sigma_est, eta: format!("{}", self.eta.eta()) });
        }
        Ok(w)
    }

    /// Integrals `int g_l(a, s) V(s) g_l(s, r_y) s^2 ds` for all `l <= lmax`,
    /// with the panels containing `a` or `r_y` split there.
    fn born_row(&self, a: f64, ta: &ScaledSpherical, ry: f64, ty: &ScaledSpherical, lmax: usize) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); lmax + 1];
        let (rx, rw) = self.mesh.reference_rule();
        let order = rx.len();
        let mut add = |s: f64, w: f64, v: f64, ts: &ScaledSpherical| {
            if v == 0.0 {
                return;
            }
            let f = v * s * s * w;
            for (l, o) in out.iter_mut().enumerate() {
                *o += green(l, a, s, ta, ts) * green(l, s, ry, ts, ty) * f;
            }
        };
        for (pa, pb, start) in self.mesh.panels() {
            let mut cuts: Vec<f64> = [a, ry].into_iter().filter(|&k| k > pa && k < pb).collect();
            if cuts.is_empty() {
                for j in start..start + order {
                    add(self.mesh.nodes[j], self.mesh.weights[j], self.v[j], &self.tables.nodes[j]);
                }
                continue;
            }
            cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
            cuts.dedup();
            let mut edges = vec![pa];
            edges.extend(cuts);
            edges.push(pb);
            for e in edges.windows(2) {
                let rule = Rule::from_reference(rx, rw, e[0], e[1]);
                for (&s, &w) in rule.nodes.iter().zip(&rule.weights) {
                    let ts = table(self.eta.eta(), s, lmax);
                    add(s, w, self.potential.radial_value(s), &ts);
                }
            }
        }
        out
    }

    /// `(R_V - R0)(x, y)`, finite also at `x = y`.
    pub fn d_part(&self, x: &Point, y: &Point) -> Result<Complex64> {
        let (rx, ry) = (norm(x), norm(y));
        if rx == 0.0 && ry == 0.0 {
            return self.d_origin();
        }
        let (lo, hi) = if rx <= ry { (rx, ry) } else { (ry, rx) };
        let lmax = if lo == 0.0 { 0 } else { self.lmax };
        let cosg = if lo == 0.0 {
            1.0
        } else {
            ((x[0] * y[0] + x[1] * y[1] + x[2] * y[2]) / (rx * ry)).clamp(-1.0, 1.0)
        };
        let legendre = legendre_all(lmax, cosg);
        let row_lo = self.tables.row(&self.mesh, lo);
        let row_hi = self.tables.row(&self.mesh, hi);
        let mut sum = Complex64::new(0.0, 0.0);
        let mut quiet = 0;
        for l in 0..=lmax {
            let w = self.check(l)?;
            let (a_lo, _) = free_factors(l, lo, &row_lo.tab);
            let (_, b_hi) = free_factors(l, hi, &row_hi.tab);
            // K V A at lo and K V B at hi.
            let c_lo = self.tables.coefficients(&self.mesh, &row_lo, l);
            let c_hi = self.tables.coefficients(&self.mesh, &row_hi, l);
            let kva: Complex64 = c_lo.iter().zip(&w.va).map(|(c, v)| c * v).sum();
            let kvb: Complex64 = c_hi.iter().zip(&w.vb).map(|(c, v)| c * v).sum();
            let d_l = ((a_lo - kva) * (b_hi - kvb) - w.beta * a_lo * b_hi) / w.beta;
            let term = d_l * ((2 * l + 1) as f64 / (4.0 * PI) * legendre[l]);
            sum += term;
            if term.norm() <= WAVE_SUM_TOL * sum.norm().max(1e-300) {
                quiet += 1;
                if quiet >= 3 {
                    break;
                }
            } else {
                quiet = 0;
            }
        }
        Ok(sum)
    }

    /// `D(0, 0)`, where the separable form is a difference of divergent terms.
    fn d_origin(&self) -> Result<Complex64> {
        let w = self.check(0)?;
        let eta = self.eta.eta();
        let t0 = table(eta, 0.0, 0);
        let n = self.mesh.len();
        let p: Vec<Complex64> = (0..n)
            .map(|i| {
                let ti = table(eta, self.mesh.nodes[i], 0);
                self.born_row(self.mesh.nodes[i], &ti, 0.0, &t0, 0)[0]
            })
            .collect();
        let e = w.lu.solve(&DVector::from_vec(p)).ok_or_else(|| Error::NearSingularSolve {
            sigma_min: 0.0,
            eta: format!("{eta}"),
        })?;
        let p0 = self.born_row(0.0, &t0, 0.0, &t0, 0)[0];
        let row = self.tables.row(&self.mesh, 0.0);
        let coef = self.tables.coefficients(&self.mesh, &row, 0);
        let ve: Complex64 = coef.iter().enumerate().map(|(j, c)| c * self.v[j] * e[j]).sum();
        Ok((-p0 + ve) / (4.0 * PI))
    }

    pub fn resolvent(&self, x: &Point, y: &Point) -> Result<Complex64> {
        let s = dist(x, y);
        if s == 0.0 {
            return Err(Error::CoincidentPoints);
        }
        Ok(resolvent0_radial(self.eta.eta(), s) + self.d_part(x, y)?)
    }
}

/// `1 / |M^{-1}|` estimated by inverse iteration from a fixed start vector.
fn inverse_power_sigma(lu: &LU<Complex64, Dyn, Dyn>, n: usize) -> f64 {
    let mut x = DVector::from_element(n, Complex64::new(1.0 / (n as f64).sqrt(), 0.0));
    let mut growth = 1.0;
    for _ in 0..6 {
        let Some(y) = lu.solve(&x) else { return 0.0 };
        growth = y.norm();
        if !growth.is_finite() || growth == 0.0 {
            return 0.0;
        }
        x = y / Complex64::new(growth, 0.0);
    }
    1.0 / growth
}

/// `R_V(eta^2)(x, y)` for `x != y`.
pub fn resolvent_v(p: &Potential, g: &SupportGrid, eta: SpectralParameter, x: &Point, y: &Point) -> Result<Complex64> {
    let disc = crate::birman_schwinger::discretization(p, g)?;
    let lmax = lmax_for_pairs(&disc, eta.eta().norm(), &[(*x, *y)]);
    ResolventSolve::from_discretization(&disc, eta, lmax)?.resolvent(x, y)
}

/// `(1/pi) Im R_V(lambda + i0)(x, y)`.
pub fn spectral_density(p: &Potential, g: &SupportGrid, lambda: f64, x: &Point, y: &Point) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidSpectralParameter(format!("spectral density needs lambda > 0, got {lambda}")));
    }
    let eta = SpectralParameter::real(lambda.sqrt())?;
    Ok(resolvent_v(p, g, eta, x, y)?.im / PI)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grids::build_support_grid;
    use crate::potentials::Primitive;

    fn gauss(a: f64) -> Potential {
        Potential::new(vec![Primitive::gaussian(a, 1.0)]).unwrap()
    }

    #[test]
    fn zero_potential_is_free() {
        let p = Potential::zero();
        let g = build_support_grid(&p, 24, 26).unwrap();
        let eta = SpectralParameter::new(Complex64::new(1.1, 0.3)).unwrap();
        let (x, y) = ([0.3, 0.1, 0.0], [-1.0, 0.4, 0.7]);
        let got = resolvent_v(&p, &g, eta, &x, &y).unwrap();
        assert_eq!(got, resolvent0_radial(eta.eta(), dist(&x, &y)));
    }

    #[test]
    fn free_density_example() {
        let p = Potential::zero();
        let g = build_support_grid(&p, 24, 26).unwrap();
        let lam = 2.3f64;
        let d = spectral_density(&p, &g, lam, &[0.0; 3], &[0.0, 0.0, 1.0]).unwrap();
        assert!((d - lam.sqrt().sin() / (4.0 * PI * PI)).abs() < 1e-15);
    }

    /// First Born term `-int R0(0, z) V(z) R0(z, y) dz` at `eta = i`, by direct
    /// spherical quadrature with the analytic angular average of `e^{-|z-y|}/|z-y|`.
    fn first_born(p: &Potential, ry: f64) -> f64 {
        let f = |r: f64| {
            let avg = ((-(r - ry).abs()).exp() - (-(r + ry)).exp()) / (2.0 * r * ry);
            -4.0 * PI * r * r * (-r).exp() / (4.0 * PI * r) * p.radial_value(r) * avg / (4.0 * PI)
        };
        crate::quadrature::adaptive(&f, 0.0, ry, 1e-13, 1e-300).value
            + crate::quadrature::adaptive(&f, ry, 12.0, 1e-13, 1e-300).value
    }

    #[test]
    fn weak_coupling_matches_born_series() {
        let eta = SpectralParameter::new(Complex64::new(0.0, 1.0)).unwrap();
        let y = [0.0, 0.0, 1.3];
        let mut diffs = Vec::new();
        for a in [-0.1, -0.05] {
            let p = gauss(a);
            let g = build_support_grid(&p, 24, 26).unwrap();
            let full = resolvent_v(&p, &g, eta, &[0.0; 3], &y).unwrap();
            let born1 = resolvent0_radial(eta.eta(), 1.3) + first_born(&p, 1.3);
            assert!((full - born1).norm() < 1e-2 * full.norm());
            diffs.push((full - born1).norm());
        }
        // Remainder is second order in the amplitude.
        assert!((diffs[0] / diffs[1] - 4.0).abs() < 0.2, "{diffs:?}");
    }

    #[test]
    fn conjugate_boundary_values() {
        let p = gauss(-2.0);
        let g = build_support_grid(&p, 24, 26).unwrap();
        let plus = SpectralParameter::real(1.7).unwrap();
        let (x, y) = ([0.2, -0.3, 0.5], [1.0, 0.9, -0.4]);
        let a = resolvent_v(&p, &g, plus, &x, &y).unwrap();
        let b = resolvent_v(&p, &g, plus.reflected(), &x, &y).unwrap();
        assert!((a - b.conj()).norm() < 1e-10 * a.norm());
    }

    #[test]
    fn symmetric_and_refinement_stable() {
        let p = gauss(-3.0);
        let eta = SpectralParameter::real(2.0).unwrap();
        let (x, y) = ([0.2, -0.3, 0.5], [1.0, 0.9, -0.4]);
        let mut vals = Vec::new();
        for order in [24, 48] {
            let g = build_support_grid(&p, order, 26).unwrap();
            let a = resolvent_v(&p, &g, eta, &x, &y).unwrap();
            let b = resolvent_v(&p, &g, eta, &y, &x).unwrap();
            assert!((a - b).norm() < 1e-12 * a.norm());
            vals.push(a);
        }
        assert!((vals[0] - vals[1]).norm() < 1e-6 * vals[1].norm(), "{vals:?}");
    }

    #[test]
    fn origin_value_is_continuous() {
        let p = gauss(-3.0);
        let g = build_support_grid(&p, 24, 26).unwrap();
        let s = ResolventSolve::new(&p, &g, SpectralParameter::real(1.5).unwrap(), 0).unwrap();
        let at = s.d_part(&[0.0; 3], &[0.0; 3]).unwrap();
        let near = s.d_part(&[0.0; 3], &[0.0, 0.0, 1e-4]).unwrap();
        assert!((at - near).norm() < 1e-3 * at.norm(), "{at} {near}");
    }

    #[test]
    fn radial_density_matches_kernel_imaginary_part() {
        let p = Potential::new(vec![Primitive::square_well(-4.0, 1.0)]).unwrap();
        let g = build_support_grid(&p, 24, 26).unwrap();
        let solve = ResolventSolve::new(&p, &g, SpectralParameter::real(1.7).unwrap(), 3).unwrap();
        // Low waves only: the product form loses digits to cancellation as l grows.
        for l in 0..=1 {
            let k = solve.radial_kernel(l).unwrap();
            let d = solve.radial_density(l).unwrap();
            let scale = d.amax();
            let err = (k.map(|z| z.im) - &d).amax();
            assert!(err < 1e-9 * scale, "l={l}: {err} vs {scale}");
        }
    }

    #[test]
    fn origin_pairs_use_only_s_wave() {
        let p = gauss(-3.0);
        let g = build_support_grid(&p, 24, 26).unwrap();
        let eta = SpectralParameter::real(2.0).unwrap();
        let disc = crate::birman_schwinger::discretization(&p, &g).unwrap();
        let y = [0.3, 0.4, 1.2];
        let coarse = ResolventSolve::from_discretization(&disc, eta, 0).unwrap().d_part(&[0.0; 3], &y).unwrap();
        let full = ResolventSolve::from_discretization(&disc, eta, 20).unwrap().d_part(&[1e-9, 0.0, 0.0], &y).unwrap();
        assert!((coarse - full).norm() < 1e-6 * coarse.norm());
    }
}
