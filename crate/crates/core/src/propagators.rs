//! Functional-calculus kernels `f(H) P_c` from the Stone formula
//!
//! `f(H) P_c (x, y) = (1/pi) int_0^inf f(eta^2) 2 eta Im R_V(eta^2 + i0)(x, y) d eta`,
//!
//! plus the point-spectrum sums and the outside-cone split of the wave
//! propagator `T(tau) = sin(tau sqrt H) / sqrt H`.
//!
//! `Im R_V = Im R0 + Im D`. The free part `Im R0 = sin(eta s) / (4 pi s)` is
//! integrated adaptively to wherever the multiplier dies; `Im D` is tabulated
//! once per context on the nodes of a [`SpectralQuadrature`] and reused by
//! every multiplier.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::Write;

use crate::bound_states::BoundState;
use crate::error::{Error, Result};
use crate::free_kernels::SpectralParameter;
use crate::grids::{EvalPair, SupportGrid};
use crate::partial_wave::Discretization;
use crate::potentials::Potential;
use crate::quadrature::{adaptive, gauss_legendre};
use crate::resolvent::{lmax_for_pairs, ResolventSolve};
use crate::{dist, norm, Point};

pub const ETA_MAX_DEFAULT: f64 = 30.0;
pub const WEIGHT_TAIL_TOL: f64 = 1e-3;
pub const IMAG_TOL: f64 = 1e-8;
/// The wave multiplier is tapered to zero over this final fraction of `[0, eta_max]`.
pub const TAPER_FRACTION: f64 = 0.1;
pub const MIN_NODES_PER_PERIOD: f64 = 8.0;
/// A slice is unreliable once more than this fraction of nodes was dropped.
pub const MAX_SKIPPED_FRACTION: f64 = 0.01;
pub const DEFAULT_DELTA: f64 = 0.5;

const FREE_REL_TOL: f64 = 1e-11;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Multiplier {
    /// `e^{-t lambda}`
    Heat { t: f64 },
    /// `e^{-t sqrt(lambda)}`
    Poisson { t: f64 },
    /// `sin(tau sqrt(lambda)) / sqrt(lambda)`
    Wave { tau: f64 },
    /// `(1 - lambda / lambda0)_+^alpha`
    BochnerRiesz { alpha: f64, lambda0: f64 },
}

impl Multiplier {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Multiplier::Heat { t } | Multiplier::Poisson { t } => {
                if !(t > 0.0 && t.is_finite()) {
                    return Err(Error::NonPositiveTime(t));
                }
            }
            Multiplier::Wave { tau } => {
                if !(tau >= 0.0 && tau.is_finite()) {
                    return Err(Error::InvalidInput(format!("tau must be >= 0, got {tau}")));
                }
            }
            Multiplier::BochnerRiesz { alpha, lambda0 } => {
                if !(alpha > -1.0) || !(lambda0 > 0.0) || !lambda0.is_finite() || !alpha.is_finite() {
                    return Err(Error::OutOfSupportedRange(format!(
                        "Bochner-Riesz needs alpha > -1 and lambda0 > 0, got alpha={alpha}, lambda0={lambda0}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn kind(&self) -> KernelKind {
        match self {
            Multiplier::Heat { .. } => KernelKind::HeatPc,
            Multiplier::Poisson { .. } => KernelKind::PoissonPc,
            Multiplier::Wave { .. } => KernelKind::WaveT,
            Multiplier::BochnerRiesz { .. } => KernelKind::BrPc,
        }
    }

    /// Compact label used in CSV output.
    pub fn label(&self) -> String {
        match *self {
            Multiplier::Heat { t } | Multiplier::Poisson { t } => format!("t={t}"),
            Multiplier::Wave { tau } => format!("tau={tau}"),
            Multiplier::BochnerRiesz { alpha, lambda0 } => format!("alpha={alpha};lambda0={lambda0}"),
        }
    }

    /// Stone weight `w(eta)` with `f(H) P_c = int_0^inf w(eta) Im R_V(eta^2 + i0) d eta`,
    /// before any taper.
    pub fn stone_weight(&self, eta: f64) -> f64 {
        match *self {
            Multiplier::Heat { t } => 2.0 * eta / PI * (-t * eta * eta).exp(),
            Multiplier::Poisson { t } => 2.0 * eta / PI * (-t * eta).exp(),
            Multiplier::Wave { tau } => 2.0 / PI * (tau * eta).sin(),
            Multiplier::BochnerRiesz { alpha, lambda0 } => {
                let u = 1.0 - eta * eta / lambda0;
                if u <= 0.0 {
                    0.0
                } else {
                    2.0 * eta / PI * u.powf(alpha)
                }
            }
        }
    }

    /// Size of the multiplier at `eta_max`.
    pub fn tail_weight(&self, eta_max: f64) -> f64 {
        match *self {
            Multiplier::Heat { t } => (-t * eta_max * eta_max).exp(),
            Multiplier::Poisson { t } => (-t * eta_max).exp(),
            Multiplier::Wave { .. } => 0.0,
            Multiplier::BochnerRiesz { lambda0, .. } => {
                if eta_max * eta_max >= lambda0 * (1.0 - 1e-12) {
                    0.0
                } else {
                    1.0
                }
            }
        }
    }

    /// Smallest `eta_max` with tail weight below `tol`.
    pub fn required_eta_max(&self, tol: f64) -> f64 {
        let l = (1.0 / tol).ln() * (1.0 + 1e-9);
        match *self {
            Multiplier::Heat { t } => (l / t).sqrt(),
            Multiplier::Poisson { t } => l / t,
            Multiplier::Wave { .. } => ETA_MAX_DEFAULT,
            Multiplier::BochnerRiesz { lambda0, .. } => lambda0.sqrt(),
        }
    }

    /// Weight of an eigenvalue `lambda_k < 0` in the point-spectrum part.
    /// For Poisson the principal root `sqrt(lambda_k) = i kappa` makes it complex.
    pub fn point_weight(&self, lambda_k: f64) -> Complex64 {
        let kappa = (-lambda_k).max(0.0).sqrt();
        match *self {
            Multiplier::Heat { t } => Complex64::new((-t * lambda_k).exp(), 0.0),
            Multiplier::Poisson { t } => Complex64::new(0.0, -t * kappa).exp(),
            Multiplier::Wave { tau } => Complex64::new(sinhc(tau, kappa), 0.0),
            Multiplier::BochnerRiesz { alpha, lambda0 } => {
                Complex64::new((1.0 - lambda_k / lambda0).max(0.0).powf(alpha), 0.0)
            }
        }
    }
}

/// `sinh(tau kappa) / kappa`, equal to `tau` at `kappa = 0`.
fn sinhc(tau: f64, kappa: f64) -> f64 {
    if kappa * tau < 1e-8 {
        tau
    } else {
        (tau * kappa).sinh() / kappa
    }
}

/// Cosine taper on `[(1 - TAPER_FRACTION) eta_max, eta_max]`.
pub fn wave_taper(eta: f64, eta_max: f64) -> f64 {
    let start = (1.0 - TAPER_FRACTION) * eta_max;
    if eta <= start {
        1.0
    } else if eta >= eta_max {
        0.0
    } else {
        0.5 * (1.0 + (PI * (eta - start) / (eta_max - start)).cos())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NodeLayout {
    /// Gauss-Legendre panels of width `panel_width` on `[0, eta_max]`.
    Uniform,
    /// `eta = sqrt(lambda0) sin(theta)` with panels of width `panel_width` in `theta`,
    /// which absorbs the endpoint singularity of `(1 - eta^2/lambda0)^alpha`.
    SineMap { lambda0: f64 },
}

/// Nodes in `eta` for the Stone integral of the perturbation part.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralQuadrature {
    pub eta_nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub eta_max: f64,
    pub skipped_nodes: Vec<f64>,
    pub panel_width: f64,
    pub order: usize,
    pub tail_tol: f64,
    pub layout: NodeLayout,
    panel: Vec<usize>,
}

impl SpectralQuadrature {
    pub fn new(eta_max: f64, panel_width: f64, order: usize) -> Result<Self> {
        if !(eta_max > 0.0) || !(panel_width > 0.0) {
            return Err(Error::InvalidInput(format!(
                "spectral quadrature needs eta_max > 0 and panel width > 0, got {eta_max}, {panel_width}"
            )));
        }
        Self::build(0.0, eta_max, panel_width, order, NodeLayout::Uniform)
    }

    pub fn with_eta_max(eta_max: f64) -> Result<Self> {
        Self::new(eta_max, 1.0, 16)
    }

    /// Nodes on `[0, sqrt(lambda0)]` for Bochner-Riesz multipliers.
    pub fn bochner_riesz(lambda0: f64, panels: usize, order: usize) -> Result<Self> {
        if !(lambda0 > 0.0) || panels == 0 {
            return Err(Error::InvalidInput(format!("need lambda0 > 0 and panels > 0, got {lambda0}, {panels}")));
        }
        Self::build(0.0, PI / 2.0, PI / 2.0 / panels as f64, order, NodeLayout::SineMap { lambda0 })
    }

    fn build(a: f64, b: f64, width: f64, order: usize, layout: NodeLayout) -> Result<Self> {
        if order < 2 {
            return Err(Error::InvalidOrder(format!("spectral quadrature order {order} < 2")));
        }
        let (x, w) = gauss_legendre(order);
        let panels = ((b - a) / width - 1e-9).ceil().max(1.0) as usize;
        let h = (b - a) / panels as f64;
        let mut eta_nodes = Vec::with_capacity(panels * order);
        let mut weights = Vec::with_capacity(panels * order);
        let mut panel = Vec::with_capacity(panels * order);
        for k in 0..panels {
            let lo = a + k as f64 * h;
            for (xi, wi) in x.iter().zip(&w) {
                let u = lo + 0.5 * h * (xi + 1.0);
                let wu = 0.5 * h * wi;
                let (eta, weight) = match layout {
                    NodeLayout::Uniform => (u, wu),
                    NodeLayout::SineMap { lambda0 } => {
                        let r = lambda0.sqrt();
                        (r * u.sin(), r * u.cos() * wu)
                    }
                };
                eta_nodes.push(eta);
                weights.push(weight);
                panel.push(k);
            }
        }
        let eta_max = match layout {
            NodeLayout::Uniform => b,
            NodeLayout::SineMap { lambda0 } => lambda0.sqrt(),
        };
        Ok(Self {
            eta_nodes,
            weights,
            eta_max,
            skipped_nodes: Vec::new(),
            panel_width: width,
            order,
            tail_tol: WEIGHT_TAIL_TOL,
            layout,
            panel,
        })
    }

    /// Smallest uniform quadrature whose range makes every multiplier's tail
    /// weight fall below `tail_tol`.
    pub fn for_multipliers(ms: &[Multiplier], tail_tol: f64) -> Result<Self> {
        for m in ms {
            m.validate()?;
        }
        let eta_max = ms.iter().map(|m| m.required_eta_max(tail_tol)).fold(1.0, f64::max);
        let mut sq = Self::with_eta_max(eta_max)?;
        sq.tail_tol = tail_tol;
        Ok(sq)
    }

    /// Halves the panel width.
    pub fn refined(&self) -> Self {
        let mut out = match self.layout {
            NodeLayout::Uniform => Self::build(0.0, self.eta_max, 0.5 * self.panel_width, self.order, self.layout),
            NodeLayout::SineMap { .. } => Self::build(0.0, PI / 2.0, 0.5 * self.panel_width, self.order, self.layout),
        }
        .expect("refining a valid quadrature");
        out.tail_tol = self.tail_tol;
        out
    }

    pub fn len(&self) -> usize {
        self.eta_nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eta_nodes.is_empty()
    }

    /// Nodes per period of `sin(tau eta)` at the coarsest spacing.
    pub fn nodes_per_period(&self, tau: f64) -> f64 {
        if tau == 0.0 {
            return f64::INFINITY;
        }
        let spacing = match self.layout {
            NodeLayout::Uniform => self.panel_width / self.order as f64,
            NodeLayout::SineMap { lambda0 } => lambda0.sqrt() * self.panel_width / self.order as f64,
        };
        2.0 * PI / tau / spacing
    }

    /// Drops nodes and rescales the remaining weights of each affected panel
    /// so that panel sums are preserved.
    fn drop_nodes(&mut self, skip: &[bool]) {
        let panels = self.panel.last().map_or(0, |p| p + 1);
        let mut total = vec![0.0; panels];
        let mut kept = vec![0.0; panels];
        for (k, &w) in self.weights.iter().enumerate() {
            total[self.panel[k]] += w;
            if !skip[k] {
                kept[self.panel[k]] += w;
            }
        }
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        let mut panel = Vec::new();
        for k in 0..self.eta_nodes.len() {
            if skip[k] {
                self.skipped_nodes.push(self.eta_nodes[k]);
                continue;
            }
            let p = self.panel[k];
            nodes.push(self.eta_nodes[k]);
            weights.push(self.weights[k] * total[p] / kept[p]);
            panel.push(p);
        }
        self.eta_nodes = nodes;
        self.weights = weights;
        self.panel = panel;
    }

    pub fn unreliable(&self) -> bool {
        let n = self.eta_nodes.len() + self.skipped_nodes.len();
        self.skipped_nodes.len() as f64 > MAX_SKIPPED_FRACTION * n as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    HeatPc,
    PoissonPc,
    WaveT,
    BrPc,
    PointSpectrum,
    Total,
}

impl KernelKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            KernelKind::HeatPc => "heat_pc",
            KernelKind::PoissonPc => "poisson_pc",
            KernelKind::WaveT => "wave_T",
            KernelKind::BrPc => "br_pc",
            KernelKind::PointSpectrum => "point_spectrum",
            KernelKind::Total => "total",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSample {
    pub separation: f64,
    pub rx: f64,
    pub ry: f64,
    pub value: f64,
    pub im_residual: f64,
}

impl KernelSample {
    pub fn modulus(&self) -> f64 {
        self.value.hypot(self.im_residual)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureMeta {
    pub eta_max: f64,
    pub nodes: usize,
    pub skipped_nodes: usize,
    pub unreliable: bool,
    /// Start of the cosine taper, wave only.
    pub taper_start: Option<f64>,
    pub tail_weight: f64,
    /// Largest error estimate of the adaptive free-part integrals.
    pub free_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSlice {
    pub kind: KernelKind,
    pub multiplier: Multiplier,
    pub samples: Vec<KernelSample>,
    pub meta: QuadratureMeta,
}

impl KernelSlice {
    pub fn values(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.value).collect()
    }

    pub fn max_imag_residual(&self) -> f64 {
        self.samples.iter().map(|s| s.im_residual.abs()).fold(0.0, f64::max)
    }

    pub const CSV_HEADER: &'static str = "sep,|x|,|y|,value,im_residual,kind,param";

    pub fn write_csv_rows<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        let label = self.multiplier.label();
        for s in &self.samples {
            writeln!(
                out,
                "{},{},{},{:e},{:e},{},{}",
                s.separation,
                s.rx,
                s.ry,
                s.value,
                s.im_residual,
                self.kind.as_str(),
                label
            )?;
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "{}", Self::CSV_HEADER)?;
        self.write_csv_rows(out)
    }
}

/// `int_0^inf w(eta) sin(eta s) / (4 pi s) d eta` by adaptive quadrature over
/// half-period chunks.
fn free_stone(m: &Multiplier, s: f64, eta_max: f64) -> (f64, f64) {
    let im_r0 = |eta: f64| if s == 0.0 { eta / (4.0 * PI) } else { (eta * s).sin() / (4.0 * PI * s) };
    let (a, b, map): (f64, f64, Box<dyn Fn(f64) -> (f64, f64) + '_>) = match *m {
        Multiplier::Heat { t } => (0.0, (46.0 / t).sqrt(), Box::new(|e| (e, 1.0))),
        Multiplier::Poisson { t } => (0.0, 46.0 / t, Box::new(|e| (e, 1.0))),
        Multiplier::Wave { .. } => (0.0, eta_max, Box::new(|e| (e, 1.0))),
        Multiplier::BochnerRiesz { lambda0, .. } => {
            let r = lambda0.sqrt();
            (0.0, PI / 2.0, Box::new(move |th: f64| (r * th.sin(), r * th.cos())))
        }
    };
    let weight = |u: f64| {
        let (eta, jac) = map(u);
        let mut w = m.stone_weight(eta) * jac;
        if let Multiplier::Wave { .. } = m {
            w *= wave_taper(eta, eta_max);
        }
        w * im_r0(eta)
    };
    // Frequency in the integration variable bounds the chunk size.
    let freq = match *m {
        Multiplier::Wave { tau } => s + tau,
        Multiplier::BochnerRiesz { lambda0, .. } => lambda0.sqrt() * s,
        _ => s,
    };
    let chunk = if freq > 0.0 { (PI / freq).min(1.0) } else { 1.0 };
    let chunk = chunk.min((b - a) / 4.0);
    let n = ((b - a) / chunk).ceil() as usize;
    let mut total = 0.0;
    let mut err = 0.0;
    for k in 0..n {
        let lo = a + (b - a) * k as f64 / n as f64;
        let hi = a + (b - a) * (k + 1) as f64 / n as f64;
        let r = adaptive(&weight, lo, hi, FREE_REL_TOL, 1e-300);
        total += r.value;
        err += r.error;
    }
    (total, err)
}

/// `Im (R_V - R0)(eta^2 + i0)` at the quadrature nodes for a fixed pair set.
#[derive(Debug, Clone)]
pub struct DensityTable {
    pub sq: SpectralQuadrature,
    pub pairs: Vec<EvalPair>,
    /// `values[k][j]` at node `k` and pair `j`.
    pub values: Vec<Vec<f64>>,
}

impl DensityTable {
    pub fn new(disc: &Discretization, sq: &SpectralQuadrature, pairs: &[EvalPair]) -> Result<Self> {
        if disc.potential.is_zero() {
            return Ok(Self { sq: sq.clone(), pairs: pairs.to_vec(), values: vec![vec![0.0; pairs.len()]; sq.len()] });
        }
        let xy: Vec<(Point, Point)> = pairs.iter().map(|p| (p.x, p.y)).collect();
        let rows: Vec<Result<Option<Vec<f64>>>> = sq
            .eta_nodes
            .par_iter()
            .map(|&eta| {
                let param = SpectralParameter::real(eta)?;
                let lmax = lmax_for_pairs(disc, eta, &xy);
                let solve = ResolventSolve::from_discretization(disc, param, lmax)?;
                let mut row = Vec::with_capacity(xy.len());
                for (x, y) in &xy {
                    match solve.d_part(x, y) {
                        Ok(v) => row.push(v.im),
                        Err(Error::NearSingularSolve { .. }) => return Ok(None),
                        Err(e) => return Err(e),
                    }
                }
                Ok(Some(row))
            })
            .collect();
        let mut values = Vec::with_capacity(rows.len());
        let mut skip = Vec::with_capacity(rows.len());
        for r in rows {
            match r? {
                Some(v) => {
                    values.push(v);
                    skip.push(false);
                }
                None => skip.push(true),
            }
        }
        let mut sq = sq.clone();
        if skip.iter().any(|&s| s) {
            sq.drop_nodes(&skip);
        }
        Ok(Self { sq, pairs: pairs.to_vec(), values })
    }
}

/// Cached spectral density for one potential, quadrature and pair set.
#[derive(Debug, Clone)]
pub struct StoneContext {
    pub table: DensityTable,
}

impl StoneContext {
    pub fn new(p: &Potential, g: &SupportGrid, sq: &SpectralQuadrature, pairs: &[EvalPair]) -> Result<Self> {
        let disc = crate::birman_schwinger::discretization(p, g)?;
        Self::from_discretization(&disc, sq, pairs)
    }

    pub fn from_discretization(disc: &Discretization, sq: &SpectralQuadrature, pairs: &[EvalPair]) -> Result<Self> {
        Ok(Self { table: DensityTable::new(disc, sq, pairs)? })
    }

    pub fn quadrature(&self) -> &SpectralQuadrature {
        &self.table.sq
    }

    pub fn pairs(&self) -> &[EvalPair] {
        &self.table.pairs
    }

    /// Continuous-spectrum kernel of `m(H)` on every pair.
    pub fn slice(&self, m: Multiplier) -> Result<KernelSlice> {
        m.validate()?;
        let sq = &self.table.sq;
        match (m, sq.layout) {
            (Multiplier::BochnerRiesz { lambda0, .. }, NodeLayout::SineMap { lambda0: l0 }) if l0 == lambda0 => {}
            (Multiplier::BochnerRiesz { .. }, _) => {
                return Err(Error::InvalidInput(
                    "Bochner-Riesz slices need a quadrature built for the same lambda0".into(),
                ))
            }
            (_, NodeLayout::SineMap { .. }) => {
                return Err(Error::InvalidInput("sine-mapped nodes only serve Bochner-Riesz slices".into()))
            }
            _ => {}
        }
        let tail = m.tail_weight(sq.eta_max);
        if tail > sq.tail_tol {
            return Err(Error::TruncationTooTight { weight: tail, tol: sq.tail_tol });
        }
        let mut taper_start = None;
        if let Multiplier::Wave { tau } = m {
            let npp = sq.nodes_per_period(tau);
            if npp < MIN_NODES_PER_PERIOD {
                return Err(Error::UnderresolvedOscillation { nodes_per_period: npp });
            }
            taper_start = Some((1.0 - TAPER_FRACTION) * sq.eta_max);
        }
        let node_w: Vec<f64> = sq
            .eta_nodes
            .iter()
            .zip(&sq.weights)
            .map(|(&eta, &w)| {
                let mut x = w * m.stone_weight(eta);
                if taper_start.is_some() {
                    x *= wave_taper(eta, sq.eta_max);
                }
                x
            })
            .collect();
        let mut free_error: f64 = 0.0;
        let samples = self
            .table
            .pairs
            .iter()
            .enumerate()
            .map(|(j, pair)| {
                let s = dist(&pair.x, &pair.y);
                let (free, err) = free_stone(&m, s, sq.eta_max);
                free_error = free_error.max(err);
                // Fixed-order reduction over nodes.
                let d: f64 = node_w.iter().zip(&self.table.values).map(|(w, row)| w * row[j]).sum();
                KernelSample { separation: s, rx: norm(&pair.x), ry: norm(&pair.y), value: free + d, im_residual: 0.0 }
            })
            .collect();
        Ok(KernelSlice {
            kind: m.kind(),
            multiplier: m,
            samples,
            meta: QuadratureMeta {
                eta_max: sq.eta_max,
                nodes: sq.len(),
                skipped_nodes: sq.skipped_nodes.len(),
                unreliable: sq.unreliable(),
                taper_start,
                tail_weight: tail,
                free_error,
            },
        })
    }

    /// Continuous part plus the point-spectrum part weighted by `m`.
    pub fn total(&self, m: Multiplier, states: &[BoundState]) -> Result<KernelSlice> {
        let mut slice = self.slice(m)?;
        for (sample, pair) in slice.samples.iter_mut().zip(&self.table.pairs) {
            let pp = point_spectrum_kernel_complex(states, |l| m.point_weight(l), &pair.x, &pair.y);
            sample.value += pp.re;
            sample.im_residual += pp.im;
        }
        slice.kind = KernelKind::Total;
        Ok(slice)
    }

    pub fn heat_pc(&self, t: f64) -> Result<KernelSlice> {
        self.slice(Multiplier::Heat { t })
    }

    pub fn poisson_pc(&self, t: f64) -> Result<KernelSlice> {
        self.slice(Multiplier::Poisson { t })
    }

    pub fn wave_t(&self, tau: f64) -> Result<KernelSlice> {
        self.slice(Multiplier::Wave { tau })
    }

    pub fn bochner_riesz_pc(&self, alpha: f64, lambda0: f64) -> Result<KernelSlice> {
        self.slice(Multiplier::BochnerRiesz { alpha, lambda0 })
    }
}

pub fn heat_pc(p: &Potential, g: &SupportGrid, sq: &SpectralQuadrature, t: f64, pairs: &[EvalPair]) -> Result<KernelSlice> {
    Multiplier::Heat { t }.validate()?;
    StoneContext::new(p, g, sq, pairs)?.heat_pc(t)
}

pub fn poisson_pc(p: &Potential, g: &SupportGrid, sq: &SpectralQuadrature, t: f64, pairs: &[EvalPair]) -> Result<KernelSlice> {
    Multiplier::Poisson { t }.validate()?;
    StoneContext::new(p, g, sq, pairs)?.poisson_pc(t)
}

#[allow(non_snake_case)]
pub fn wave_T(p: &Potential, g: &SupportGrid, sq: &SpectralQuadrature, tau: f64, pairs: &[EvalPair]) -> Result<KernelSlice> {
    Multiplier::Wave { tau }.validate()?;
    StoneContext::new(p, g, sq, pairs)?.wave_t(tau)
}

pub fn bochner_riesz_pc(
    p: &Potential,
    g: &SupportGrid,
    sq: &SpectralQuadrature,
    alpha: f64,
    lambda0: f64,
    pairs: &[EvalPair],
) -> Result<KernelSlice> {
    Multiplier::BochnerRiesz { alpha, lambda0 }.validate()?;
    StoneContext::new(p, g, sq, pairs)?.bochner_riesz_pc(alpha, lambda0)
}

/// `sum_k weight(lambda_k) psi_k(x) conj(psi_k(y))`.
pub fn point_spectrum_kernel_complex<F: Fn(f64) -> Complex64>(
    states: &[BoundState],
    weight: F,
    x: &Point,
    y: &Point,
) -> Complex64 {
    states.iter().map(|s| weight(s.lambda_k) * s.extend(x) * s.extend(y).conj()).sum()
}

pub fn point_spectrum_kernel<F: Fn(f64) -> f64>(states: &[BoundState], weight: F, x: &Point, y: &Point) -> f64 {
    point_spectrum_kernel_complex(states, |l| Complex64::new(weight(l), 0.0), x, y).re
}

/// `T(tau)(x, y)` outside the light cone: `-sum_k sinh(tau kappa_k)/kappa_k psi_k(x) conj(psi_k(y))`.
pub fn outside_cone_formula(states: &[BoundState], tau: f64, x: &Point, y: &Point) -> Result<f64> {
    let s = dist(x, y);
    if s <= tau {
        return Err(Error::InsideCone { separation: s, tau });
    }
    Ok(-point_spectrum_kernel(states, |l| sinhc(tau, (-l).max(0.0).sqrt()), x, y))
}

/// Weight `(4/pi) t tau / (t^2 + tau^2)^2` writing `e^{-t eta}` as an integral of `sin(tau eta)/eta`.
pub fn poisson_weight_density(t: f64) -> impl Fn(f64) -> f64 {
    move |tau: f64| {
        let d = t * t + tau * tau;
        4.0 / PI * t * tau / (d * d)
    }
}

/// Weight `tau e^{-tau^2/4t} / (2 sqrt(pi) t^{3/2})` writing `e^{-t eta^2}` the same way.
pub fn heat_weight_density(t: f64) -> impl Fn(f64) -> f64 {
    move |tau: f64| tau * (-tau * tau / (4.0 * t)).exp() / (2.0 * PI.sqrt() * t.powf(1.5))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct K2Split {
    #[serde(rename = "K2")]
    pub k2: f64,
    #[serde(rename = "K20_bound")]
    pub k20_bound: f64,
}

/// Outside-cone part `tau < delta |x - y|` of a kernel written as
/// `int weight_density(tau) T(tau) d tau`.
pub fn k2_split<F: Fn(f64) -> f64>(
    states: &[BoundState],
    weight_density: F,
    delta: f64,
    x: &Point,
    y: &Point,
) -> Result<K2Split> {
    let s = dist(x, y);
    if s == 0.0 {
        return Err(Error::CoincidentPoints);
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidInput(format!("delta must lie in (0, 1), got {delta}")));
    }
    let b = delta * s;
    let (rx, ry) = (norm(x), norm(y));
    let mut k2 = 0.0;
    let mut k20 = 0.0;
    for st in states {
        let kappa = st.kappa;
        let f = |tau: f64| weight_density(tau) * sinhc(tau, kappa);
        // Geometric breakpoints resolve densities concentrated near tau = 0.
        let mut edges = vec![0.0];
        let mut e = b * 1e-8;
        while e < b {
            edges.push(e);
            e *= 10.0;
        }
        edges.push(b);
        let integral: f64 = edges.windows(2).map(|w| adaptive(&f, w[0], w[1], 1e-12, 1e-300).value).sum();
        k2 -= integral * (st.extend(x) * st.extend(y).conj()).re;
        k20 += (-(1.0 - delta) * kappa * (rx + ry)).exp();
    }
    Ok(K2Split { k2, k20_bound: k20 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bound_states::find_bound_states;
    use crate::free_kernels::{br0_radial, heat0_radial, poisson0_radial};
    use crate::grids::{build_eval_grid, build_support_grid, EvalSpec};
    use crate::potentials::Primitive;

    fn pairs(s_min: f64, s_max: f64, n: usize) -> Vec<EvalPair> {
        build_eval_grid(&EvalSpec::new(s_min, s_max, n)).pairs
    }

    fn free_ctx(sq: &SpectralQuadrature, pr: &[EvalPair]) -> StoneContext {
        let p = Potential::zero();
        let g = build_support_grid(&p, 24, 26).unwrap();
        StoneContext::new(&p, &g, sq, pr).unwrap()
    }

    #[test]
    fn free_heat_and_poisson() {
        let pr = pairs(0.5, 4.0, 4);
        let sq = SpectralQuadrature::with_eta_max(ETA_MAX_DEFAULT).unwrap();
        let ctx = free_ctx(&sq, &pr);
        for t in [0.25, 1.0] {
            for s in ctx.heat_pc(t).unwrap().samples {
                let exact = heat0_radial(t, s.separation);
                assert!((s.value - exact).abs() < 1e-4 * exact, "heat t={t} s={}", s.separation);
            }
        }
        let sq = SpectralQuadrature::for_multipliers(&[Multiplier::Poisson { t: 0.5 }], 1e-3).unwrap();
        let ctx = free_ctx(&sq, &pr);
        for t in [0.5, 1.0] {
            for s in ctx.poisson_pc(t).unwrap().samples {
                let exact = poisson0_radial(t, s.separation);
                assert!((s.value - exact).abs() < 1e-4 * exact, "poisson t={t} s={}", s.separation);
            }
        }
    }

    #[test]
    fn free_bochner_riesz() {
        let pr = pairs(1.0, 10.0, 5);
        let sq = SpectralQuadrature::bochner_riesz(4.0, 4, 16).unwrap();
        let ctx = free_ctx(&sq, &pr);
        for s in ctx.bochner_riesz_pc(1.0, 4.0).unwrap().samples {
            let exact = br0_radial(1.0, 4.0, s.separation).unwrap();
            assert!((s.value - exact).abs() < 1e-6 * exact.abs().max(1e-4), "{} {}", s.value, exact);
        }
    }

    #[test]
    fn truncation_and_resolution_are_checked() {
        let pr = pairs(1.0, 2.0, 2);
        let sq = SpectralQuadrature::with_eta_max(5.0).unwrap();
        let ctx = free_ctx(&sq, &pr);
        assert!(matches!(ctx.poisson_pc(0.1), Err(Error::TruncationTooTight { .. })));
        let coarse = SpectralQuadrature::new(30.0, 4.0, 4).unwrap();
        let ctx = free_ctx(&coarse, &pr);
        assert!(matches!(ctx.wave_t(6.0), Err(Error::UnderresolvedOscillation { .. })));
        assert!(matches!(ctx.heat_pc(0.0), Err(Error::NonPositiveTime(_))));
    }

    #[test]
    fn quadrature_invariants() {
        let sq = SpectralQuadrature::with_eta_max(30.0).unwrap();
        assert!(sq.eta_nodes.windows(2).all(|w| w[1] > w[0]));
        assert!((sq.weights.iter().sum::<f64>() - 30.0).abs() < 1e-12);
        let r = sq.refined();
        assert_eq!(r.len(), 2 * sq.len());
        let br = SpectralQuadrature::bochner_riesz(9.0, 4, 12).unwrap();
        assert!(br.eta_nodes.windows(2).all(|w| w[1] > w[0]));
        assert!((br.weights.iter().sum::<f64>() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn dropped_nodes_preserve_panel_weight() {
        let mut sq = SpectralQuadrature::new(4.0, 1.0, 8).unwrap();
        let mut skip = vec![false; sq.len()];
        skip[3] = true;
        sq.drop_nodes(&skip);
        assert_eq!(sq.skipped_nodes.len(), 1);
        assert!((sq.weights.iter().sum::<f64>() - 4.0).abs() < 1e-12);
        assert!(sq.unreliable());
    }

    fn square_well(v0: f64) -> Potential {
        Potential::new(vec![Primitive::square_well(-v0, 1.0)]).unwrap()
    }

    #[test]
    fn outside_cone_trivial_cases() {
        let x = [0.0; 3];
        let y = [0.0, 0.0, 3.0];
        assert_eq!(outside_cone_formula(&[], 1.0, &x, &y).unwrap(), 0.0);
        let p = square_well(4.0);
        let g = build_support_grid(&p, 24, 26).unwrap();
        let st = find_bound_states(&p, &g, 3.0).unwrap();
        assert_eq!(outside_cone_formula(&st, 0.0, &x, &y).unwrap(), 0.0);
        assert!(matches!(outside_cone_formula(&st, 3.0, &x, &y), Err(Error::InsideCone { .. })));
    }

    #[test]
    fn weight_densities_reproduce_multipliers() {
        // int w(tau) sin(tau eta)/eta d tau
        for eta in [0.3, 1.0, 2.5] {
            let t = 0.7;
            let w = poisson_weight_density(t);
            let f = |u: f64| {
                let tau = u / (1.0 - u);
                w(tau) * (tau * eta).sin() / eta / ((1.0 - u) * (1.0 - u))
            };
            let v = adaptive(&f, 0.0, 1.0 - 1e-12, 1e-12, 1e-300).value;
            assert!((v - (-t * eta).exp()).abs() < 1e-7, "{v}");
            let w = heat_weight_density(t);
            let f = |tau: f64| w(tau) * (tau * eta).sin() / eta;
            let v = adaptive(&f, 0.0, 40.0, 1e-12, 1e-300).value;
            assert!((v - (-t * eta * eta).exp()).abs() < 1e-8);
        }
    }

    #[test]
    fn k2_small_t_tends_to_minus_projection() {
        let p = square_well(4.0);
        let g = build_support_grid(&p, 24, 26).unwrap();
        let st = find_bound_states(&p, &g, 3.0).unwrap();
        let x = [0.0; 3];
        for s in [0.5, 1.0, 2.0] {
            let y = [0.0, s, 0.0];
            let k2 = k2_split(&st, poisson_weight_density(1e-3), DEFAULT_DELTA, &x, &y).unwrap();
            let pp = point_spectrum_kernel(&st, |_| 1.0, &x, &y);
            assert!((k2.k2 + pp).abs() < 2e-2 * pp.abs(), "{} {}", k2.k2, pp);
        }
        assert_eq!(k2_split(&[], poisson_weight_density(1.0), 0.5, &x, &[1.0, 0.0, 0.0]).unwrap().k2, 0.0);
    }

    #[test]
    fn point_weights() {
        let heat = Multiplier::Heat { t: 2.0 };
        assert!(heat.point_weight(-1.0).re > Multiplier::Heat { t: 1.0 }.point_weight(-1.0).re);
        let pois = Multiplier::Poisson { t: 1.0 };
        assert!((pois.point_weight(-4.0).norm() - 1.0).abs() < 1e-15);
        let br = Multiplier::BochnerRiesz { alpha: 0.5, lambda0: 4.0 };
        assert!((br.point_weight(-4.0).re - 2f64.sqrt()).abs() < 1e-15);
    }
}
