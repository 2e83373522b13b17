//! Negative eigenvalues of `H = -Delta + V` from the Birman-Schwinger
//! condition `-1 in spec(V R0(-kappa^2))`, with normalized eigenfunctions
//! extended off the mesh by `psi = -R0(-kappa^2) V psi`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::io::Write;

use crate::birman_schwinger::{
    assemble_discretized, coupled_block, discretization, radial_block, Block, COUNT_TOL, IMAG_EIG_TOL,
};
use crate::error::{Error, Result};
use crate::free_kernels::SpectralParameter;
use crate::grids::{angular_rule, SupportGrid};
use crate::partial_wave::{channel_l, table, ChannelPotential, Discretization, GreenTables, RadialMesh};
use crate::potentials::Potential;
use crate::quadrature::adaptive;
use crate::special::real_spherical_harmonics;
use crate::{norm, Point};

pub const KAPPA_TOL: f64 = 1e-8;
pub const RESID_TOL: f64 = 1e-6;
const SCAN_POINTS: usize = 24;
const CLUSTER_TOL: f64 = 1e-6;

/// Radial coefficient function of one channel: `f_c = (V psi)_c` at the mesh nodes.
#[derive(Debug, Clone)]
struct ChannelFn {
    l: usize,
    c: usize,
    f: Vec<f64>,
    /// `u_c(r) = tail * h~_l(i kappa r) / r^{l+1}` beyond the mesh.
    tail: Complex64,
}

#[derive(Debug, Clone)]
pub struct BoundState {
    pub lambda_k: f64,
    pub kappa: f64,
    /// Partial wave for radial potentials.
    pub l: Option<usize>,
    /// `psi` at the support-grid nodes.
    pub psi_support: Vec<Complex64>,
    pub norm: f64,
    pub residual: f64,
    mesh: RadialMesh,
    tables: GreenTables,
    channels: Vec<ChannelFn>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundStateSummary {
    pub lambda_k: f64,
    pub kappa: f64,
    pub l: Option<usize>,
    pub agmon_ratio: f64,
    pub residual: f64,
}

#[derive(Clone, Copy)]
enum BlockId {
    Wave(usize),
    Coupled(usize),
}

struct Setup {
    mesh: RadialMesh,
    potential: ChannelPotential,
}

impl Setup {
    fn lmax(&self, id: BlockId) -> usize {
        match id {
            BlockId::Wave(l) | BlockId::Coupled(l) => l,
        }
    }

    fn block(&self, id: BlockId, kappa: f64) -> (Block, GreenTables) {
        let eta = SpectralParameter::below_threshold(kappa).expect("kappa >= 0");
        let tables = GreenTables::new(&self.mesh, eta.eta(), self.lmax(id));
        let rows = tables.node_rows(&self.mesh);
        let block = match (&self.potential, id) {
            (ChannelPotential::Radial(v), BlockId::Wave(l)) => radial_block(&self.mesh, &tables, &rows, v, l),
            (ChannelPotential::Coupled { values, .. }, BlockId::Coupled(lmax)) => {
                coupled_block(&self.mesh, &tables, &rows, values, lmax)
            }
            _ => unreachable!("block kind matches potential kind"),
        };
        (block, tables)
    }

    fn real_eigenvalues(&self, id: BlockId, kappa: f64) -> Vec<f64> {
        let (b, _) = self.block(id, kappa);
        let mut mu: Vec<f64> = b
            .eigenvalues()
            .into_iter()
            .filter(|z| z.im.abs() <= IMAG_EIG_TOL * z.re.abs())
            .map(|z| z.re)
            .collect();
        mu.sort_by(|a, b| a.partial_cmp(b).unwrap());
        mu
    }

    fn channels(&self, id: BlockId) -> Vec<(usize, usize)> {
        match id {
            BlockId::Wave(l) => vec![(l, l * l + l)],
            BlockId::Coupled(lmax) => (0..(lmax + 1) * (lmax + 1)).map(|c| (channel_l(c), c)).collect(),
        }
    }
}

/// `k`-th smallest real eigenvalue plus one; `+inf` when fewer exist.
fn order_stat(mu: &[f64], k: usize) -> f64 {
    mu.get(k).map_or(f64::INFINITY, |m| m + 1.0)
}

pub fn find_bound_states(p: &Potential, g: &SupportGrid, kappa_max: f64) -> Result<Vec<BoundState>> {
    let disc = discretization(p, g)?;
    find_bound_states_discretized(&disc, kappa_max, Some(g))
}

/// Default search range: just beyond the deepest possible binding.
pub fn default_kappa_max(p: &Potential) -> f64 {
    1.05 * p.negative_depth().sqrt() + 0.1
}

pub fn find_bound_states_discretized(
    disc: &Discretization,
    kappa_max: f64,
    support: Option<&SupportGrid>,
) -> Result<Vec<BoundState>> {
    if !(kappa_max > 0.0) {
        return Err(Error::InvalidInput(format!("kappa_max must be positive, got {kappa_max}")));
    }
    let zero = SpectralParameter::real(0.0)?;
    let op0 = assemble_discretized(disc, zero, 0);
    let mesh = disc.mesh(kappa_max);
    let potential = disc.channel_potential(&mesh);
    let setup = Setup { mesh, potential };
    let mut targets = Vec::new();
    for b in &op0.blocks {
        let n = b
            .eigenvalues()
            .iter()
            .filter(|z| z.im.abs() <= IMAG_EIG_TOL * z.re.abs() && z.re < -1.0 - COUNT_TOL)
            .count();
        if n > 0 {
            let id = match b.l {
                Some(l) => BlockId::Wave(l),
                None => BlockId::Coupled(disc.coupled_lmax()),
            };
            targets.push((id, n));
        }
    }
    let mut states = Vec::new();
    for (id, n) in targets {
        let kappas: Vec<f64> = (0..=SCAN_POINTS).map(|j| kappa_max * j as f64 / SCAN_POINTS as f64).collect();
        let scan: Vec<Vec<f64>> = kappas.par_iter().map(|&k| setup.real_eigenvalues(id, k)).collect();
        let mut roots = Vec::new();
        for k in 0..n {
            let signs: Vec<f64> = scan.iter().map(|mu| order_stat(mu, k)).collect();
            let changes: Vec<usize> = (0..SCAN_POINTS).filter(|&j| (signs[j] < 0.0) != (signs[j + 1] < 0.0)).collect();
            match changes.as_slice() {
                [] => continue, // deeper than kappa_max
                [j] => {
                    let (mut lo, mut hi) = (kappas[*j], kappas[j + 1]);
                    let lo_neg = signs[*j] < 0.0;
                    while hi - lo > KAPPA_TOL {
                        let mid = 0.5 * (lo + hi);
                        let v = order_stat(&setup.real_eigenvalues(id, mid), k);
                        if (v < 0.0) == lo_neg {
                            lo = mid;
                        } else {
                            hi = mid;
                        }
                    }
                    roots.push(0.5 * (lo + hi));
                }
                many => return Err(Error::TrackingLost { kappa: kappas[many[1]] }),
            }
        }
        roots.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut i = 0;
        while i < roots.len() {
            let mut j = i + 1;
            while j < roots.len() && roots[j] - roots[i] <= CLUSTER_TOL * roots[i].max(1e-3) {
                j += 1;
            }
            let kappa = roots[i..j].iter().sum::<f64>() / (j - i) as f64;
            states.extend(cluster_states(&setup, id, kappa, j - i));
            i = j;
        }
    }
    states.sort_by(|a, b| b.lambda_k.partial_cmp(&a.lambda_k).unwrap().then(a.l.cmp(&b.l)));
    if let Some(g) = support {
        for s in &mut states {
            s.psi_support = s.evaluate_many(&g.nodes);
        }
    }
    Ok(states)
}

fn cluster_states(setup: &Setup, id: BlockId, kappa: f64, d: usize) -> Vec<BoundState> {
    let (block, tables) = setup.block(id, kappa);
    let n = block.matrix.nrows();
    let sw: Vec<f64> = block.weights.iter().map(|w| w.sqrt()).collect();
    let ipa = DMatrix::identity(n, n) + &block.matrix;
    let weighted = DMatrix::from_fn(n, n, |i, j| ipa[(i, j)].re * sw[i] / sw[j]);
    let svd = weighted.svd(false, true);
    let vt = svd.v_t.expect("requested V^T");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[a].partial_cmp(&svd.singular_values[b]).unwrap());
    let chans = setup.channels(id);
    let nc = chans.len();
    let nodes = setup.mesh.len();
    let rows = tables.node_rows(&setup.mesh);
    let lmax = setup.lmax(id);
    let kmats: Vec<DMatrix<f64>> =
        (0..=lmax).map(|l| tables.matrix(&setup.mesh, &rows, l).map(|z| z.re)).collect();
    let mut raw: Vec<Vec<ChannelFn>> = Vec::new();
    let mut residuals = Vec::new();
    for &col in order.iter().take(d) {
        let y = vt.row(col).transpose();
        let f_all: Vec<f64> = (0..n).map(|i| y[i] / sw[i]).collect();
        let mut chfs = Vec::new();
        for (ci, &(l, c)) in chans.iter().enumerate() {
            let f: Vec<f64> = (0..nodes).map(|i| f_all[i * nc + ci]).collect();
            chfs.push(ChannelFn { l, c, f, tail: Complex64::new(0.0, 0.0) });
        }
        // Residual ||K (I + A) f|| / ||K f|| in the weighted norm.
        let resid_vec: Vec<f64> = (0..n)
            .map(|i| (0..n).map(|j| ipa[(i, j)].re * f_all[j]).sum())
            .collect();
        let apply_k = |v: &[f64]| -> f64 {
            let mut acc = 0.0;
            for (ci, &(l, _)) in chans.iter().enumerate() {
                let vc = DVector::from_iterator(nodes, (0..nodes).map(|i| v[i * nc + ci]));
                let kv = &kmats[l] * vc;
                for i in 0..nodes {
                    acc += kv[i] * kv[i] * setup.mesh.nodes[i].powi(2) * setup.mesh.weights[i];
                }
            }
            acc.sqrt()
        };
        residuals.push(apply_k(&resid_vec) / apply_k(&f_all).max(1e-300));
        raw.push(chfs);
    }
    // Fill tails, orthonormalize in L^2(R^3).
    for chfs in &mut raw {
        for ch in chfs.iter_mut() {
            ch.tail = tail_coefficient(&setup.mesh, &tables, ch);
        }
    }
    let r_max = setup.mesh.r_max();
    let tail_int: Vec<Complex64> = (0..=lmax).map(|l| tail_integral(kappa, l, r_max)).collect();
    let inner = |a: &[ChannelFn], b: &[ChannelFn], ua: &[Vec<f64>], ub: &[Vec<f64>]| -> f64 {
        let mut acc = 0.0;
        for k in 0..a.len() {
            for i in 0..nodes {
                acc += ua[k][i] * ub[k][i] * setup.mesh.nodes[i].powi(2) * setup.mesh.weights[i];
            }
            acc += (a[k].tail * b[k].tail * tail_int[a[k].l]).re;
        }
        acc
    };
    let node_u = |chfs: &[ChannelFn]| -> Vec<Vec<f64>> {
        chfs.iter()
            .map(|ch| {
                let v = DVector::from_column_slice(&ch.f);
                (&kmats[ch.l] * v).iter().map(|x| -x).collect()
            })
            .collect()
    };
    let mut done: Vec<(Vec<ChannelFn>, Vec<Vec<f64>>)> = Vec::new();
    for mut chfs in raw {
        for (prev, prev_u) in &done {
            let u = node_u(&chfs);
            let proj = inner(&chfs, prev, &u, prev_u);
            for (ch, pc) in chfs.iter_mut().zip(prev) {
                for (x, px) in ch.f.iter_mut().zip(&pc.f) {
                    *x -= proj * px;
                }
                ch.tail -= pc.tail * proj;
            }
        }
        let u = node_u(&chfs);
        let nrm = inner(&chfs, &chfs, &u, &u).sqrt();
        // Deterministic sign: largest node value of psi positive.
        let mut best = (0.0f64, 1.0f64);
        for uc in &u {
            for &x in uc {
                if x.abs() > best.0 {
                    best = (x.abs(), x.signum());
                }
            }
        }
        let scale = best.1 / nrm;
        for ch in &mut chfs {
            ch.f.iter_mut().for_each(|x| *x *= scale);
            ch.tail *= scale;
        }
        let u = node_u(&chfs);
        done.push((chfs, u));
    }
    let mut out = Vec::new();
    for ((chfs, _), residual) in done.into_iter().zip(residuals) {
        let make = |channels: Vec<ChannelFn>, l: Option<usize>| BoundState {
            lambda_k: -kappa * kappa,
            kappa,
            l,
            psi_support: Vec::new(),
            norm: 1.0,
            residual,
            mesh: setup.mesh.clone(),
            tables: tables.clone(),
            channels,
        };
        match id {
            BlockId::Wave(l) => {
                for m in -(l as i64)..=(l as i64) {
                    let c = (l * l + l) as i64 + m;
                    let ch = ChannelFn { c: c as usize, ..chfs[0].clone() };
                    out.push(make(vec![ch], Some(l)));
                }
            }
            BlockId::Coupled(_) => out.push(make(chfs, None)),
        }
    }
    out
}

/// `-(1/(2l+1)) i int j~_l(i kappa s) s^l f(s) s^2 ds`, so that
/// `u(r) = tail h~_l(i kappa r) / r^{l+1}` for `r` beyond the mesh.
fn tail_coefficient(mesh: &RadialMesh, tables: &GreenTables, ch: &ChannelFn) -> Complex64 {
    let l = ch.l;
    let mut acc = Complex64::new(0.0, 0.0);
    for (i, (&s, &w)) in mesh.nodes.iter().zip(&mesh.weights).enumerate() {
        acc += tables.nodes[i].j[l] * s.powi(l as i32) * ch.f[i] * s * s * w;
    }
    -Complex64::i() * acc / (2 * l + 1) as f64
}

/// `int_R^inf h~_l(i kappa r)^2 r^{-2l} dr`.
fn tail_integral(kappa: f64, l: usize, r0: f64) -> Complex64 {
    let eta = Complex64::new(0.0, kappa);
    let f_re = |r: f64| {
        let t = table(eta, r, l);
        (t.h[l] * t.h[l] * r.powi(-2 * l as i32)).re
    };
    let f_im = |r: f64| {
        let t = table(eta, r, l);
        (t.h[l] * t.h[l] * r.powi(-2 * l as i32)).im
    };
    let span = 60.0 / kappa.max(1e-3);
    let mut re = 0.0;
    let mut im = 0.0;
    // Geometric panels resolve both the algebraic and the exponential decay.
    let mut a = r0;
    let mut h = 0.5f64.min(0.5 / kappa.max(1e-3));
    while a < r0 + span {
        let b = a + h;
        re += adaptive(&f_re, a, b, 1e-12, 1e-300).value;
        im += adaptive(&f_im, a, b, 1e-12, 1e-300).value;
        a = b;
        h *= 1.5;
    }
    Complex64::new(re, im)
}

impl BoundState {
    /// Radial function `u_c(r)` of every channel.
    fn radial_values(&self, r: f64) -> Vec<f64> {
        let row = self.tables.row(&self.mesh, r);
        let mut cache: HashMap<usize, Vec<Complex64>> = HashMap::new();
        self.channels
            .iter()
            .map(|ch| {
                let coef = cache.entry(ch.l).or_insert_with(|| self.tables.coefficients(&self.mesh, &row, ch.l));
                -coef.iter().zip(&ch.f).map(|(c, f)| c.re * f).sum::<f64>()
            })
            .collect()
    }

    fn evaluate(&self, x: &Point, u: &[f64]) -> f64 {
        let r = norm(x);
        let dir = if r > 0.0 { [x[0] / r, x[1] / r, x[2] / r] } else { [0.0, 0.0, 1.0] };
        let lmax = self.channels.iter().map(|c| c.l).max().unwrap_or(0);
        let y = real_spherical_harmonics(lmax, dir);
        self.channels.iter().zip(u).map(|(ch, uc)| uc * y[ch.c]).sum()
    }

    /// `psi(x) = -(R0(-kappa^2) V psi)(x)`.
    pub fn extend(&self, x: &Point) -> Complex64 {
        let u = self.radial_values(norm(x));
        Complex64::new(self.evaluate(x, &u), 0.0)
    }

    fn evaluate_many(&self, xs: &[Point]) -> Vec<Complex64> {
        let mut cache: HashMap<u64, Vec<f64>> = HashMap::new();
        xs.iter()
            .map(|x| {
                let r = norm(x);
                let u = cache.entry(r.to_bits()).or_insert_with(|| self.radial_values(r));
                Complex64::new(self.evaluate(x, u), 0.0)
            })
            .collect()
    }

    /// Same state multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        for ch in &mut out.channels {
            ch.f.iter_mut().for_each(|x| *x *= c);
            ch.tail *= c;
        }
        out.psi_support.iter_mut().for_each(|z| *z *= c);
        out.norm *= c.abs();
        out
    }

    pub fn summary(&self, radii: &[f64]) -> BoundStateSummary {
        BoundStateSummary {
            lambda_k: self.lambda_k,
            kappa: self.kappa,
            l: self.l,
            agmon_ratio: self.agmon_ratio_unchecked(radii),
            residual: self.residual,
        }
    }

    fn agmon_ratio_unchecked(&self, radii: &[f64]) -> f64 {
        let dirs = angular_rule(26);
        let mut best = 0.0f64;
        for &r in radii {
            let u = self.radial_values(r);
            for (d, _) in &dirs {
                let x = [r * d[0], r * d[1], r * d[2]];
                let v = self.evaluate(&x, &u).abs() * (1.0 + r * r).sqrt() * (self.kappa * r).exp();
                best = best.max(v);
            }
        }
        best
    }

    /// CSV rows `x,y,z,re,im` over the given points.
    pub fn write_csv<W: Write>(&self, points: &[Point], out: &mut W) -> std::io::Result<()> {
        writeln!(out, "x,y,z,re,im")?;
        for (x, v) in points.iter().zip(self.evaluate_many(points)) {
            writeln!(out, "{},{},{},{},{}", x[0], x[1], x[2], v.re, v.im)?;
        }
        Ok(())
    }
}

pub fn extend_eigenfunction(bs: &BoundState, x: &Point) -> Result<Complex64> {
    if !(bs.residual < RESID_TOL) {
        return Err(Error::PreconditionViolated(format!(
            "eigenfunction residual {} exceeds {RESID_TOL}",
            bs.residual
        )));
    }
    Ok(bs.extend(x))
}

/// `sup |psi(x)| <x> e^{kappa |x|}` over sampled directions at the radii.
pub fn agmon_ratio(bs: &BoundState, p: &Potential, radii: &[f64]) -> Result<f64> {
    if let Some(r) = radii.iter().find(|&&r| r <= p.support_radius()) {
        return Err(Error::PreconditionViolated(format!(
            "Agmon radii must exceed the support radius {}, got {r}",
            p.support_radius()
        )));
    }
    Ok(bs.agmon_ratio_unchecked(radii))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grids::build_support_grid;
    use crate::potentials::Primitive;

    fn well(v0: f64) -> Potential {
        Potential::new(vec![Primitive::square_well(-v0, 1.0)]).unwrap()
    }

    fn states(p: &Potential) -> (SupportGrid, Vec<BoundState>) {
        let g = build_support_grid(p, 24, 26).unwrap();
        let s = find_bound_states(p, &g, default_kappa_max(p)).unwrap();
        (g, s)
    }

    #[test]
    fn zero_potential_has_no_states() {
        assert!(states(&Potential::zero()).1.is_empty());
    }

    #[test]
    fn square_well_s_state_and_normalization() {
        let p = well(4.0);
        let (g, s) = states(&p);
        assert_eq!(s.len(), 1);
        assert!((s[0].kappa - 0.638_045_048_285_237_7).abs() < 1e-7, "{}", s[0].kappa);
        assert!(s[0].residual < RESID_TOL);
        // Grid norm plus the exterior tail.
        let inside: f64 = g.integrate(|x| s[0].extend(x).norm_sqr());
        let shell = |r: f64| 4.0 * std::f64::consts::PI * r * r * s[0].extend(&[0.0, 0.0, r]).norm_sqr();
        let tail = crate::quadrature::adaptive(&shell, 1.0, 80.0, 1e-10, 1e-300);
        assert!((inside + tail.value - 1.0).abs() < 1e-8, "{}", inside + tail.value);
    }

    #[test]
    fn deep_well_states_are_orthonormal() {
        let p = well(10.0);
        let (g, s) = states(&p);
        assert_eq!(s.len(), 4);
        assert!((s[0].kappa - 0.222_858_082_683_400_4).abs() < 1e-6);
        assert!((s[3].kappa - 2.150_393_937_475_224).abs() < 1e-6);
        for a in 0..4 {
            for b in 0..a {
                let ip: f64 = g.integrate(|x| (s[a].extend(x) * s[b].extend(x).conj()).re);
                assert!(ip.abs() < 1e-4);
            }
        }
    }

    #[test]
    fn extension_matches_stored_values_and_is_linear() {
        let p = well(4.0);
        let (g, s) = states(&p);
        for (x, v) in g.nodes.iter().zip(&s[0].psi_support).step_by(37) {
            assert!((extend_eigenfunction(&s[0], x).unwrap() - v).norm() < 1e-12);
        }
        let x = [0.4, 1.7, -2.0];
        let twice = s[0].scaled(2.0);
        assert!((twice.extend(&x) - s[0].extend(&x) * 2.0).norm() < 1e-14);
    }

    #[test]
    fn gaussian_well_energy() {
        // Finite-difference reference value.
        let p = Potential::new(vec![Primitive::gaussian(-8.0, 1.0)]).unwrap();
        let (_, s) = states(&p);
        assert_eq!(s.len(), 1);
        assert!((s[0].lambda_k + 1.567_839_35).abs() < 1e-6, "{}", s[0].lambda_k);
    }

    #[test]
    fn agmon_ratio_is_stable() {
        let p = well(4.0);
        let (_, s) = states(&p);
        let a = agmon_ratio(&s[0], &p, &[2.0]).unwrap();
        let b = agmon_ratio(&s[0], &p, &[4.0]).unwrap();
        assert!((a - b).abs() < 0.5 * a.max(b), "{a} vs {b}");
        assert!(agmon_ratio(&s[0], &p, &[0.5]).is_err());
    }
}
