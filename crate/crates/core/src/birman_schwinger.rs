//! Birman-Schwinger operator `A = V R0(eta^2)` in the partial-wave basis:
//! bound-state counting, regularity at zero energy, embedded-spectrum scans
//! and the coupling homotopy `V -> tV`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::free_kernels::SpectralParameter;
use crate::grids::SupportGrid;
use crate::partial_wave::{channel_l, ChannelPotential, Discretization, GreenTables, RadialMesh};
use crate::potentials::Potential;

pub const COUNT_TOL: f64 = 1e-3;
pub const REG_TOL: f64 = 5e-3;
/// Largest relative change of `sigma_min` under refinement for a regular point.
pub const REG_STABILITY: f64 = 0.25;
/// Eigenvalues with `|Im| > IMAG_EIG_TOL |Re|` are treated as complex.
pub const IMAG_EIG_TOL: f64 = 1e-6;
/// Partial waves are added until a block's weighted Frobenius norm drops below this.
pub const BLOCK_NORM_STOP: f64 = 0.05;
pub const MAX_WAVES: usize = 200;

/// One invariant subspace of the discretized operator: a single partial wave
/// `l` (repeated `2l+1` times) or, for non-radial potentials, all coupled channels.
#[derive(Debug, Clone)]
pub struct Block {
    pub l: Option<usize>,
    pub multiplicity: usize,
    pub matrix: DMatrix<Complex64>,
    /// `r_i^2 w_i` per unknown, the L^2 weight of the radial quadrature.
    pub weights: Vec<f64>,
}

impl Block {
    /// `W^{1/2} M W^{-1/2}`.
    fn weighted(&self, m: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        let s: Vec<f64> = self.weights.iter().map(|w| w.sqrt()).collect();
        DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] * (s[i] / s[j]))
    }

    pub fn weighted_frobenius(&self) -> f64 {
        let mut acc = 0.0;
        for j in 0..self.matrix.ncols() {
            for i in 0..self.matrix.nrows() {
                acc += self.matrix[(i, j)].norm_sqr() * self.weights[i] / self.weights[j];
            }
        }
        acc.sqrt()
    }

    /// Smallest singular value of `I + t A` in the weighted L^2 norm.
    pub fn sigma_min_shifted(&self, t: f64) -> f64 {
        let n = self.matrix.nrows();
        let m = DMatrix::identity(n, n) + self.matrix.scale(t);
        let w = self.weighted(&m);
        w.singular_values().iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn eigenvalues(&self) -> Vec<Complex64> {
        if self.matrix.iter().all(|z| z.im.abs() <= 1e-13 * z.re.abs().max(1e-300)) {
            let re = self.matrix.map(|z| z.re);
            re.complex_eigenvalues().iter().copied().collect()
        } else {
            self.matrix
                .clone()
                .schur()
                .eigenvalues()
                .map(|v| v.iter().copied().collect())
                .unwrap_or_default()
        }
    }

    /// `W^{1/2} |V|^{1/2} K |V|^{1/2} W^{-1/2}` for a radial block.
    pub fn symmetrized(&self, v: &[f64]) -> DMatrix<Complex64> {
        let n = self.matrix.nrows();
        let s: Vec<f64> = self.weights.iter().map(|w| w.sqrt()).collect();
        DMatrix::from_fn(n, n, |i, j| {
            if v[i] == 0.0 {
                return Complex64::new(0.0, 0.0);
            }
            // A_ij = V_i K_ij
            let k = self.matrix[(i, j)] / v[i];
            k * (v[i].abs().sqrt() * v[j].abs().sqrt() * s[i] / s[j])
        })
    }
}

/// Discretized `V R0(eta^2)`.
#[derive(Debug, Clone)]
pub struct BSOperator {
    pub eta: SpectralParameter,
    pub blocks: Vec<Block>,
    /// Potential values at the radial nodes (radial case).
    pub node_potential: Option<Vec<f64>>,
}

impl BSOperator {
    pub fn spectral_radius(&self) -> f64 {
        self.blocks
            .iter()
            .flat_map(|b| b.eigenvalues())
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    pub fn sigma_min(&self) -> f64 {
        self.sigma_min_at(1.0)
    }

    /// Smallest singular value of `I + t A` over all blocks.
    pub fn sigma_min_at(&self, t: f64) -> f64 {
        self.blocks.iter().map(|b| b.sigma_min_shifted(t)).fold(f64::INFINITY, f64::min)
    }

    /// Relative antisymmetric part `|S - S^T| / |S|` of the symmetrized
    /// operator, summed over radial blocks.
    pub fn asymmetry(&self) -> Option<f64> {
        let v = self.node_potential.as_ref()?;
        let (mut num, mut den) = (0.0, 0.0);
        for b in &self.blocks {
            let s = b.symmetrized(v);
            num += (&s - s.transpose()).norm_squared();
            den += s.norm_squared();
        }
        Some(if den > 0.0 { (num / den).sqrt() } else { 0.0 })
    }

    pub fn dimension(&self) -> usize {
        self.blocks.iter().map(|b| b.matrix.nrows() * b.multiplicity).sum()
    }
}

/// Builds the radial block of `l` from precomputed tables.
pub(crate) fn radial_block(
    mesh: &RadialMesh,
    tables: &GreenTables,
    rows: &[crate::partial_wave::GreenRow],
    v: &[f64],
    l: usize,
) -> Block {
    let mut k = tables.matrix(mesh, rows, l);
    for (i, mut row) in k.row_iter_mut().enumerate() {
        row *= Complex64::new(v[i], 0.0);
    }
    let weights = mesh.nodes.iter().zip(&mesh.weights).map(|(r, w)| r * r * w).collect();
    Block { l: Some(l), multiplicity: 2 * l + 1, matrix: k, weights }
}

/// Blocks of `V R0(eta^2)` for a discretization. Partial waves are added until
/// `l >= l_min` and the block norm falls below [`BLOCK_NORM_STOP`].
pub fn assemble_discretized(disc: &Discretization, eta: SpectralParameter, l_min: usize) -> BSOperator {
    let mesh = disc.mesh(eta.eta().norm());
    match disc.channel_potential(&mesh) {
        ChannelPotential::Radial(v) => {
            let mut blocks = Vec::new();
            let mut table_l = (l_min + 8).max(24).min(MAX_WAVES);
            'outer: loop {
                let tables = GreenTables::new(&mesh, eta.eta(), table_l);
                let rows = tables.node_rows(&mesh);
                for l in blocks.len()..=table_l {
                    let b = radial_block(&mesh, &tables, &rows, &v, l);
                    let small = b.weighted_frobenius() < BLOCK_NORM_STOP;
                    blocks.push(b);
                    if (l >= l_min && small) || l >= MAX_WAVES {
                        break 'outer;
                    }
                }
                table_l = (2 * table_l).min(MAX_WAVES);
            }
            BSOperator { eta, blocks, node_potential: Some(v) }
        }
        ChannelPotential::Coupled { lmax, values } => {
            let tables = GreenTables::new(&mesh, eta.eta(), lmax);
            let rows = tables.node_rows(&mesh);
            BSOperator {
                eta,
                blocks: vec![coupled_block(&mesh, &tables, &rows, &values, lmax)],
                node_potential: None,
            }
        }
    }
}

/// Single block coupling every channel `l <= lmax`, unknowns ordered `(node, channel)`.
pub(crate) fn coupled_block(
    mesh: &RadialMesh,
    tables: &GreenTables,
    rows: &[crate::partial_wave::GreenRow],
    values: &[DMatrix<f64>],
    lmax: usize,
) -> Block {
    let nc = (lmax + 1) * (lmax + 1);
    let n = mesh.len();
    let ks: Vec<DMatrix<Complex64>> = (0..=lmax).map(|l| tables.matrix(mesh, rows, l)).collect();
    let mut a = DMatrix::zeros(n * nc, n * nc);
    for i in 0..n {
        for c in 0..nc {
            for cp in 0..nc {
                let vc = values[i][(c, cp)];
                if vc == 0.0 {
                    continue;
                }
                let k = &ks[channel_l(cp)];
                for j in 0..n {
                    a[(i * nc + c, j * nc + cp)] = k[(i, j)] * vc;
                }
            }
        }
    }
    let weights = mesh
        .nodes
        .iter()
        .zip(&mesh.weights)
        .flat_map(|(r, w)| std::iter::repeat_n(r * r * w, nc))
        .collect();
    Block { l: None, multiplicity: 1, matrix: a, weights }
}

pub fn discretization(p: &Potential, g: &SupportGrid) -> Result<Discretization> {
    if g.is_empty() {
        return Err(Error::InvalidInput("empty support grid".into()));
    }
    Discretization::new(p, g.scheme)
}

pub fn assemble(p: &Potential, g: &SupportGrid, eta: SpectralParameter) -> Result<BSOperator> {
    Ok(assemble_discretized(&discretization(p, g)?, eta, 0))
}

/// Outcome of counting eigenvalues below `-1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountReport {
    pub count: usize,
    /// Real eigenvalues within `COUNT_TOL` of `-1`.
    pub borderline: Vec<f64>,
    /// Eigenvalues with a non-negligible imaginary part, as `[re, im]`.
    pub complex_excluded: Vec<[f64; 2]>,
    /// Real eigenvalues below `-1 - COUNT_TOL`, one entry per multiplicity.
    pub eigenvalues: Vec<f64>,
}

impl CountReport {
    /// Hard error when borderline eigenvalues exist.
    pub fn strict(&self) -> Result<usize> {
        if self.borderline.is_empty() {
            Ok(self.count)
        } else {
            Err(Error::BorderlineEigenvalue { count: self.count, borderline: self.borderline.clone() })
        }
    }
}

pub fn count_from_operator(op: &BSOperator) -> CountReport {
    let mut rep = CountReport { count: 0, borderline: Vec::new(), complex_excluded: Vec::new(), eigenvalues: Vec::new() };
    for b in &op.blocks {
        for z in b.eigenvalues() {
            if z.im.abs() > IMAG_EIG_TOL * z.re.abs() {
                if z.norm() > 1.0 - COUNT_TOL {
                    rep.complex_excluded.push([z.re, z.im]);
                }
                continue;
            }
            if (z.re + 1.0).abs() <= COUNT_TOL {
                rep.borderline.push(z.re);
            } else if z.re < -1.0 - COUNT_TOL {
                rep.count += b.multiplicity;
                rep.eigenvalues.extend(std::iter::repeat_n(z.re, b.multiplicity));
            }
        }
    }
    rep.eigenvalues.sort_by(|a, b| a.partial_cmp(b).unwrap());
    rep.borderline.sort_by(|a, b| a.partial_cmp(b).unwrap());
    rep
}

pub fn count_negative_bound_states(p: &Potential, g: &SupportGrid) -> Result<CountReport> {
    let op = assemble(p, g, SpectralParameter::real(0.0)?)?;
    Ok(count_from_operator(&op))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Regularity {
    pub sigma_min: f64,
    pub sigma_min_refined: f64,
    pub regular: bool,
}

pub fn regular_at_zero(p: &Potential, g: &SupportGrid) -> Result<Regularity> {
    let disc = discretization(p, g)?;
    let zero = SpectralParameter::real(0.0)?;
    let (a, b) = rayon::join(
        || assemble_discretized(&disc, zero, 0).sigma_min(),
        || assemble_discretized(&disc.refined(), zero, 0).sigma_min(),
    );
    let stable = (a - b).abs() <= REG_STABILITY * b.abs().max(a.abs());
    Ok(Regularity { sigma_min: a, sigma_min_refined: b, regular: a > REG_TOL && stable })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub lambda: f64,
    pub sigma_min: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddedScan {
    pub points: Vec<ScanPoint>,
    pub min_sigma: f64,
}

/// `sigma_min(I + V R0(lambda + i0))` at `lambda_i = i lambda_max / n`.
pub fn embedded_scan(p: &Potential, g: &SupportGrid, lambda_max: f64, n_points: usize) -> Result<EmbeddedScan> {
    if !(lambda_max > 0.0) || n_points == 0 {
        return Err(Error::InvalidInput("embedded scan needs lambda_max > 0 and n_points >= 1".into()));
    }
    let disc = discretization(p, g)?;
    let points: Vec<ScanPoint> = (1..=n_points)
        .into_par_iter()
        .map(|i| {
            let lambda = lambda_max * i as f64 / n_points as f64;
            let eta = SpectralParameter::real(lambda.sqrt()).expect("real eta");
            ScanPoint { lambda, sigma_min: assemble_discretized(&disc, eta, 0).sigma_min() }
        })
        .collect();
    let min_sigma = points.iter().map(|p| p.sigma_min).fold(f64::INFINITY, f64::min);
    Ok(EmbeddedScan { points, min_sigma })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomotopyScan {
    /// Couplings `t in (0, 1]` at which `H_t = -Delta + tV` gains a zero-energy state.
    pub crossings: Vec<f64>,
    /// `(t, sigma_min(I + t V R0(0)))` on a uniform grid.
    pub samples: Vec<[f64; 2]>,
}

pub fn homotopy_scan(p: &Potential, g: &SupportGrid, n_t: usize) -> Result<HomotopyScan> {
    if n_t < 2 {
        return Err(Error::InvalidInput(format!("homotopy scan needs n_t >= 2, got {n_t}")));
    }
    let op = assemble(p, g, SpectralParameter::real(0.0)?)?;
    let rep = count_from_operator(&op);
    let mut crossings: Vec<f64> = rep.eigenvalues.iter().map(|mu| -1.0 / mu).collect();
    crossings.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let samples = (1..=n_t)
        .into_par_iter()
        .map(|k| {
            let t = k as f64 / n_t as f64;
            [t, op.sigma_min_at(t)]
        })
        .collect();
    Ok(HomotopyScan { crossings, samples })
}

/// Summary written by the `assume` and `spectrum` runners.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BSReport {
    pub count: usize,
    pub borderline: Vec<f64>,
    pub sigma_min_zero: f64,
    pub embedded_scan: Vec<ScanPoint>,
    pub crossings: Vec<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grids::build_support_grid;
    use crate::potentials::{KatoQuadrature, Primitive};
    use std::f64::consts::PI;

    fn grid(p: &Potential) -> SupportGrid {
        build_support_grid(p, 24, 26).unwrap()
    }

    fn well(v0: f64) -> Potential {
        Potential::new(vec![Primitive::square_well(-v0, 1.0)]).unwrap()
    }

    #[test]
    fn zero_potential_gives_zero_operator() {
        let p = Potential::zero();
        let op = assemble(&p, &grid(&p), SpectralParameter::real(1.0).unwrap()).unwrap();
        assert!(op.blocks.iter().all(|b| b.matrix.iter().all(|z| z.norm() == 0.0)));
        assert_eq!(count_negative_bound_states(&p, &grid(&p)).unwrap().count, 0);
        let r = regular_at_zero(&p, &grid(&p)).unwrap();
        assert!((r.sigma_min - 1.0).abs() < 1e-12 && r.regular);
    }

    #[test]
    fn square_well_counts() {
        assert_eq!(count_negative_bound_states(&well(1.0), &grid(&well(1.0))).unwrap().count, 0);
        assert_eq!(count_negative_bound_states(&well(4.0), &grid(&well(4.0))).unwrap().count, 1);
        assert_eq!(count_negative_bound_states(&well(10.0), &grid(&well(10.0))).unwrap().count, 4);
    }

    #[test]
    fn s_wave_threshold_eigenvalue() {
        // At eta = 0 the s-wave eigenvalue of the unit well is -V0 / (pi^2 / 4).
        let v0 = 1.0;
        let p = well(v0);
        let op = assemble(&p, &grid(&p), SpectralParameter::real(0.0).unwrap()).unwrap();
        let mu = op.blocks[0].eigenvalues().iter().map(|z| z.re).fold(f64::INFINITY, f64::min);
        assert!((mu + v0 * 4.0 / (PI * PI)).abs() < 1e-10, "{mu}");
    }

    #[test]
    fn entries_scale_linearly() {
        let p = well(2.0);
        let eta = SpectralParameter::new(Complex64::new(0.7, 0.3)).unwrap();
        let a = assemble(&p, &grid(&p), eta).unwrap();
        let b = assemble(&p.scaled(3.0), &grid(&p), eta).unwrap();
        let d = &b.blocks[1].matrix - a.blocks[1].matrix.scale(3.0);
        assert!(d.norm() < 1e-12 * b.blocks[1].matrix.norm());
    }

    #[test]
    fn born_regime_far_below_spectrum() {
        let p = Potential::new(vec![Primitive::gaussian(-8.0, 1.0)]).unwrap();
        let op = assemble(&p, &grid(&p), SpectralParameter::new(Complex64::new(0.0, 10.0)).unwrap()).unwrap();
        assert!(op.spectral_radius() < 1.0);
    }

    #[test]
    fn spectral_radius_below_kato_bound() {
        let p = Potential::new(vec![Primitive::gaussian(-1.5, 1.0)]).unwrap();
        let bound = p.kato_norm(&p.default_probes(), &KatoQuadrature::default()).unwrap() / (4.0 * PI);
        for eta in [Complex64::new(0.0, 0.0), Complex64::new(2.0, 0.0), Complex64::new(0.5, 1.0)] {
            let op = assemble(&p, &grid(&p), SpectralParameter::new(eta).unwrap()).unwrap();
            assert!(op.spectral_radius() <= bound * (1.0 + 1e-6), "{eta}");
        }
    }

    #[test]
    fn symmetrized_asymmetry_shrinks_under_refinement() {
        let p = Potential::new(vec![Primitive::gaussian(-2.0, 1.0)]).unwrap();
        let disc = discretization(&p, &grid(&p)).unwrap();
        let zero = SpectralParameter::real(0.0).unwrap();
        let a = assemble_discretized(&disc, zero, 0).asymmetry().unwrap();
        let b = assemble_discretized(&disc.refined(), zero, 0).asymmetry().unwrap();
        assert!(b < 0.5 * a && a < 1e-2, "{a} -> {b}");
    }

    #[test]
    fn homotopy_crossings_match_count_and_scale() {
        let p = well(4.0);
        let h = homotopy_scan(&p, &grid(&p), 4).unwrap();
        assert_eq!(h.crossings.len(), 1);
        assert!(h.crossings[0] > 0.0 && h.crossings[0] < 1.0);
        // Crossing at t V0 = pi^2/4.
        assert!((h.crossings[0] - PI * PI / 16.0).abs() < 1e-8);
        let h2 = homotopy_scan(&p.scaled(1.5), &grid(&p), 4).unwrap();
        assert!((h2.crossings[0] - h.crossings[0] / 1.5).abs() < 1e-10);
    }

    #[test]
    fn threshold_well_is_not_regular() {
        let p = well(PI * PI / 4.0 * 1.001);
        let r = regular_at_zero(&p, &grid(&p)).unwrap();
        assert!(!r.regular && r.sigma_min < REG_TOL, "{r:?}");
        let q = Potential::new(vec![Primitive::gaussian(-1.0, 1.0)]).unwrap();
        assert!(regular_at_zero(&q, &grid(&q)).unwrap().regular);
    }
}
