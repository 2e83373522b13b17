//! Partial-wave Nyström discretization of operators built from the free
//! resolvent on a ball `|x| <= R`.
//!
//! A function is expanded as `f(x) = sum_c f_c(r) Y_c(x/|x|)` over real
//! spherical harmonics `c = (l, m)`, and the free resolvent acts diagonally:
//! `(R0 f)_c(r) = int g_l(r, s) f_c(s) s^2 ds` with
//! `g_l(r, s) = i eta j_l(eta r<) h_l(eta r>)`.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::Result;
use crate::grids::GridScheme;
use crate::potentials::Potential;
use crate::quadrature::{breakpoints, gauss_legendre, Barycentric, Rule};
use crate::special::{real_spherical_harmonics, ScaledSpherical};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Largest panel width of the radial mesh.
pub const PANEL_WIDTH: f64 = 1.0;
/// Nodes per wavelength-scaled panel: panels shrink to `PANEL_PHASE / |eta|`.
pub const PANEL_PHASE: f64 = 9.0;

#[derive(Debug, Clone)]
struct Panel {
    a: f64,
    b: f64,
    start: usize,
}

/// Composite Gauss-Legendre mesh on `[0, r_max]`.
#[derive(Debug, Clone)]
pub struct RadialMesh {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    panels: Vec<Panel>,
    order: usize,
    ref_x: Vec<f64>,
    ref_w: Vec<f64>,
    interp: Vec<Barycentric>,
}

/// Quadrature data for integrating a kernel with a kink at `r`: the panel
/// containing `r` is split at `r` and the unknown interpolated on it.
#[derive(Debug, Clone)]
pub struct SplitRow {
    pub r: f64,
    panel: Option<usize>,
    pub points: Vec<f64>,
    weights: Vec<f64>,
    basis: Vec<Vec<f64>>,
}

impl RadialMesh {
    pub fn new(r_max: f64, breaks: &[f64], order: usize, h: f64) -> Self {
        let pts = breakpoints(0.0, r_max, h, breaks);
        let (ref_x, ref_w) = gauss_legendre(order);
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        let mut panels = Vec::new();
        let mut interp = Vec::new();
        for w in pts.windows(2) {
            let rule = Rule::from_reference(&ref_x, &ref_w, w[0], w[1]);
            panels.push(Panel { a: w[0], b: w[1], start: nodes.len() });
            interp.push(Barycentric::new(&rule.nodes));
            nodes.extend(rule.nodes);
            weights.extend(rule.weights);
        }
        Self { nodes, weights, panels, order, ref_x, ref_w, interp }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn r_max(&self) -> f64 {
        self.panels.last().map_or(0.0, |p| p.b)
    }

    /// Panels as `(a, b, index of first node)`.
    pub fn panels(&self) -> Vec<(f64, f64, usize)> {
        self.panels.iter().map(|p| (p.a, p.b, p.start)).collect()
    }

    /// Gauss-Legendre reference rule on `[-1, 1]` used on every panel.
    pub fn reference_rule(&self) -> (&[f64], &[f64]) {
        (&self.ref_x, &self.ref_w)
    }

    fn panel_of(&self, r: f64) -> Option<usize> {
        self.panels.iter().position(|p| r > p.a && r < p.b)
    }

    pub fn split_row(&self, r: f64) -> SplitRow {
        let Some(k) = self.panel_of(r) else {
            return SplitRow { r, panel: None, points: Vec::new(), weights: Vec::new(), basis: Vec::new() };
        };
        let p = &self.panels[k];
        let left = Rule::from_reference(&self.ref_x, &self.ref_w, p.a, r);
        let right = Rule::from_reference(&self.ref_x, &self.ref_w, r, p.b);
        let points: Vec<f64> = left.nodes.iter().chain(&right.nodes).copied().collect();
        let weights: Vec<f64> = left.weights.iter().chain(&right.weights).copied().collect();
        let basis = points.iter().map(|&s| self.interp[k].basis(s)).collect();
        SplitRow { r, panel: Some(k), points, weights, basis }
    }

    /// Coefficients `c_j` with `sum_j c_j u(r_j) ≈ int_0^R k(s) u(s) ds` for a
    /// kernel kinked at `row.r`; `k_node(j)` and `k_sub(q)` evaluate `k` at
    /// node `j` and at split point `q`.
    pub fn row_coefficients<N, S>(&self, row: &SplitRow, k_node: N, k_sub: S) -> Vec<Complex64>
    where
        N: Fn(usize) -> Complex64,
        S: Fn(usize) -> Complex64,
    {
        let mut out: Vec<Complex64> = (0..self.len()).map(|j| k_node(j) * self.weights[j]).collect();
        if let Some(k) = row.panel {
            let start = self.panels[k].start;
            for c in &mut out[start..start + self.order] {
                *c = Complex64::new(0.0, 0.0);
            }
            for q in 0..row.points.len() {
                let kv = k_sub(q) * row.weights[q];
                for (j, b) in row.basis[q].iter().enumerate() {
                    out[start + j] += kv * b;
                }
            }
        }
        out
    }

    /// Plain (unsplit) integral of node values.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        values.iter().zip(&self.weights).map(|(v, w)| v * w).sum()
    }
}

/// Scaled Bessel table at `eta r`.
pub fn table(eta: Complex64, r: f64, lmax: usize) -> ScaledSpherical {
    if eta == Complex64::new(0.0, 0.0) {
        ScaledSpherical::origin(lmax)
    } else {
        ScaledSpherical::new(eta * r, lmax)
    }
}

/// Radial free Green's function of angular momentum `l`:
/// `i j~_l(eta r<) h~_l(eta r>) (r</r>)^l / ((2l+1) r>)`.
pub fn green(l: usize, r: f64, s: f64, tr: &ScaledSpherical, ts: &ScaledSpherical) -> Complex64 {
    let (lo, hi, tl, th) = if r < s { (r, s, tr, ts) } else { (s, r, ts, tr) };
    if hi == 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    let ratio = if l == 0 { 1.0 } else { (lo / hi).powi(l as i32) };
    I * tl.j[l] * th.h[l] * ratio / ((2 * l + 1) as f64 * hi)
}

/// Evaluation point for the integral operator `int g_l(r, s) u(s) s^2 ds`.
#[derive(Debug, Clone)]
pub struct GreenRow {
    pub row: SplitRow,
    pub tab: ScaledSpherical,
    sub_tabs: Vec<ScaledSpherical>,
}

/// Bessel tables at every mesh node for one spectral parameter.
#[derive(Debug, Clone)]
pub struct GreenTables {
    pub eta: Complex64,
    pub lmax: usize,
    pub nodes: Vec<ScaledSpherical>,
}

impl GreenTables {
    pub fn new(mesh: &RadialMesh, eta: Complex64, lmax: usize) -> Self {
        let nodes = mesh.nodes.iter().map(|&r| table(eta, r, lmax)).collect();
        Self { eta, lmax, nodes }
    }

    pub fn row(&self, mesh: &RadialMesh, r: f64) -> GreenRow {
        let row = mesh.split_row(r);
        let sub_tabs = row.points.iter().map(|&s| table(self.eta, s, self.lmax)).collect();
        GreenRow { tab: table(self.eta, r, self.lmax), row, sub_tabs }
    }

    /// Rows at every mesh node.
    pub fn node_rows(&self, mesh: &RadialMesh) -> Vec<GreenRow> {
        mesh.nodes.iter().map(|&r| self.row(mesh, r)).collect()
    }

    /// Coefficients of `u -> int g_l(r, s) u(s) s^2 ds` at the row point.
    pub fn coefficients(&self, mesh: &RadialMesh, gr: &GreenRow, l: usize) -> Vec<Complex64> {
        let r = gr.row.r;
        mesh.row_coefficients(
            &gr.row,
            |j| {
                let s = mesh.nodes[j];
                green(l, r, s, &gr.tab, &self.nodes[j]) * s * s
            },
            |q| {
                let s = gr.row.points[q];
                green(l, r, s, &gr.tab, &gr.sub_tabs[q]) * s * s
            },
        )
    }

    /// Matrix of the operator on the mesh for angular momentum `l`.
    pub fn matrix(&self, mesh: &RadialMesh, rows: &[GreenRow], l: usize) -> DMatrix<Complex64> {
        let n = mesh.len();
        let mut m = DMatrix::zeros(n, n);
        for (i, gr) in rows.iter().enumerate() {
            for (j, c) in self.coefficients(mesh, gr, l).into_iter().enumerate() {
                m[(i, j)] = c;
            }
        }
        m
    }
}

/// Potential restricted to the mesh, either radial or as a channel matrix.
#[derive(Debug, Clone)]
pub enum ChannelPotential {
    /// `V(r_i)`; every channel decouples.
    Radial(Vec<f64>),
    /// `V_{cc'}(r_i) = int Y_c V(r_i w) Y_c' dw` for channels `l <= lmax`.
    Coupled { lmax: usize, values: Vec<DMatrix<f64>> },
}

/// Partial-wave discretization parameters derived from a potential and a grid scheme.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub scheme: GridScheme,
    pub potential: Potential,
    r_max: f64,
    breaks: Vec<f64>,
}

impl Discretization {
    pub fn new(p: &Potential, scheme: GridScheme) -> Result<Self> {
        if scheme.radial_order < 2 || scheme.angular_order < 2 {
            return Err(crate::Error::InvalidOrder(format!("{scheme:?}")));
        }
        let r_max = if p.support_radius() > 0.0 { p.support_radius() } else { 1.0 };
        let breaks = p.radial_breaks().into_iter().filter(|&b| b < r_max).collect();
        Ok(Self { scheme, potential: p.clone(), r_max, breaks })
    }

    /// Doubles both orders.
    pub fn refined(&self) -> Self {
        let scheme = GridScheme {
            radial_order: 2 * self.scheme.radial_order,
            angular_order: 2 * self.scheme.angular_order,
        };
        Self { scheme, ..self.clone() }
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn is_radial(&self) -> bool {
        self.potential.is_radial()
    }

    /// Gauss points per panel.
    pub fn panel_order(&self) -> usize {
        (self.scheme.radial_order / 2).max(4)
    }

    /// Channel cutoff used when the potential is not radial.
    pub fn coupled_lmax(&self) -> usize {
        ((self.scheme.angular_order as f64).sqrt().floor() as usize).saturating_sub(1).max(1)
    }

    /// Mesh resolving oscillations at `|eta|`.
    pub fn mesh(&self, eta_abs: f64) -> RadialMesh {
        let h = if eta_abs > 0.0 { PANEL_WIDTH.min(PANEL_PHASE / eta_abs) } else { PANEL_WIDTH };
        RadialMesh::new(self.r_max, &self.breaks, self.panel_order(), h)
    }

    pub fn channel_potential(&self, mesh: &RadialMesh) -> ChannelPotential {
        if self.is_radial() {
            return ChannelPotential::Radial(mesh.nodes.iter().map(|&r| self.potential.radial_value(r)).collect());
        }
        let lmax = self.coupled_lmax();
        let nc = (lmax + 1) * (lmax + 1);
        let n_theta = 2 * lmax + 12;
        let n_phi = 2 * n_theta;
        let (ct, wt) = gauss_legendre(n_theta);
        let mut dirs = Vec::with_capacity(n_theta * n_phi);
        for (c, w) in ct.iter().zip(&wt) {
            let s = (1.0 - c * c).sqrt();
            for k in 0..n_phi {
                let phi = 2.0 * std::f64::consts::PI * (k as f64 + 0.5) / n_phi as f64;
                let d = [s * phi.cos(), s * phi.sin(), *c];
                dirs.push((d, w * 2.0 * std::f64::consts::PI / n_phi as f64, real_spherical_harmonics(lmax, d)));
            }
        }
        let values = mesh
            .nodes
            .iter()
            .map(|&r| {
                let mut m = DMatrix::zeros(nc, nc);
                for (d, w, y) in &dirs {
                    let v = self.potential.evaluate(&[r * d[0], r * d[1], r * d[2]]) * w;
                    for a in 0..nc {
                        let va = v * y[a];
                        for b in a..nc {
                            m[(a, b)] += va * y[b];
                        }
                    }
                }
                for a in 0..nc {
                    for b in 0..a {
                        m[(a, b)] = m[(b, a)];
                    }
                }
                m
            })
            .collect();
        ChannelPotential::Coupled { lmax, values }
    }
}

/// `l` of channel index `l^2 + l + m`.
pub fn channel_l(c: usize) -> usize {
    (c as f64).sqrt().floor() as usize
}

/// Number of partial waves needed for a Green's function at `|eta|` acting
/// on functions supported in `r <= r_max`.
pub fn wave_cutoff(eta_abs: f64, r_max: f64) -> usize {
    ((eta_abs * r_max).ceil() as usize + 12).min(160)
}
