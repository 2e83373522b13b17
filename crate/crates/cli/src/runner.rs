//! Executes configured experiments in order and writes one JSON report (plus
//! a CSV where there is tabular data) per experiment.

use kato_core::birman_schwinger::{count_negative_bound_states, embedded_scan, homotopy_scan, regular_at_zero};
use kato_core::bound_states::{default_kappa_max, find_bound_states, BoundState, BoundStateSummary};
use kato_core::grids::{build_eval_grid, build_support_grid, EvalPair, SupportGrid};
use kato_core::harness::{
    br_decay_slope, check_heat_domination, check_k2_decay, check_poisson_domination, l2_br_norm, tau_t_mass,
    DominationReport, HeatMode, K2Mode, PoissonMode, TheoremId,
};
use kato_core::potentials::{KatoQuadrature, Potential};
use kato_core::propagators::{
    KernelSlice, Multiplier, SpectralQuadrature, StoneContext, ETA_MAX_DEFAULT,
};
use serde::Serialize;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::config::{Experiment, ExperimentConfig, Operation, PotentialSpec, Settings, TolProfile};
use crate::error::{CliError, Result};

/// Panels of the sine-mapped Bochner-Riesz quadrature.
pub const BR_PANELS: usize = 4;
/// Radii at which bound-state Agmon ratios are reported.
pub const AGMON_RADII: [f64; 3] = [2.0, 4.0, 6.0];

pub struct Context {
    pub spec: PotentialSpec,
    pub potential: Potential,
    pub grid: SupportGrid,
    pub pairs: Vec<EvalPair>,
    pub settings: Settings,
}

impl Context {
    pub fn new(cfg: &ExperimentConfig, profile: Option<TolProfile>) -> Result<Self> {
        let settings = Settings::resolve(cfg, profile);
        let potential = cfg.potential.build().map_err(|e| CliError::core("potential", e))?;
        let grid = build_support_grid(&potential, settings.grid.radial_order, settings.grid.angular_order)
            .map_err(|e| CliError::core("support grid", e))?;
        let pairs = build_eval_grid(&settings.pairs).pairs;
        Ok(Self { spec: cfg.potential.clone(), potential, grid, pairs, settings })
    }

    fn uniform_quadrature(&self, ms: &[Multiplier], eta_max: Option<f64>) -> kato_core::Result<SpectralQuadrature> {
        let s = &self.settings;
        let eta_max = match eta_max.or(s.eta_max) {
            Some(e) => e,
            None => {
                let auto = SpectralQuadrature::for_multipliers(ms, s.weight_tail_tol)?;
                auto.eta_max
            }
        };
        let mut sq = SpectralQuadrature::new(eta_max, s.panel_width, s.spectral_order)?;
        sq.tail_tol = s.weight_tail_tol;
        Ok(sq)
    }

    fn br_quadrature(&self, lambda0: f64) -> kato_core::Result<SpectralQuadrature> {
        SpectralQuadrature::bochner_riesz(lambda0, BR_PANELS, self.settings.spectral_order)
    }

    fn states(&self, kappa_max: Option<f64>) -> kato_core::Result<Vec<BoundState>> {
        find_bound_states(&self.potential, &self.grid, kappa_max.unwrap_or_else(|| default_kappa_max(&self.potential)))
    }
}

/// Result of one experiment. `pass` is `None` for ungated diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Outcome {
    pub name: String,
    pub op: String,
    pub pass: Option<bool>,
    pub summary: String,
}

#[derive(Serialize)]
struct Report<'a, T: Serialize> {
    experiment: &'a str,
    op: &'a Operation,
    potential: &'a PotentialSpec,
    settings: &'a Settings,
    pass: Option<bool>,
    result: T,
}

#[derive(Serialize)]
pub struct AssumeResult {
    pub sigma_min: f64,
    pub sigma_min_refined: f64,
    pub regular: bool,
    pub count: usize,
    pub borderline: Vec<f64>,
    pub min_embedded_sigma: f64,
    pub embedded_scan: Vec<kato_core::birman_schwinger::ScanPoint>,
    pub crossings: Vec<f64>,
}

#[derive(Serialize)]
pub struct SpectrumResult {
    pub count: usize,
    pub states: Vec<BoundStateSummary>,
}

#[derive(Serialize)]
struct SliceMeta {
    kind: &'static str,
    param: String,
    meta: kato_core::propagators::QuadratureMeta,
    max_imag_residual: f64,
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

pub(crate) fn json_bytes<T: Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("reports serialize");
    s.push('\n');
    s.into_bytes()
}

fn slices_csv(slices: &[KernelSlice]) -> Vec<u8> {
    let mut out = Vec::new();
    writeln!(out, "{}", KernelSlice::CSV_HEADER).unwrap();
    for s in slices {
        s.write_csv_rows(&mut out).unwrap();
    }
    out
}

fn slices_meta(slices: &[KernelSlice]) -> Vec<SliceMeta> {
    slices
        .iter()
        .map(|s| SliceMeta {
            kind: s.kind.as_str(),
            param: s.multiplier.label(),
            meta: s.meta.clone(),
            max_imag_residual: s.max_imag_residual(),
        })
        .collect()
}

/// Output of one experiment before it is written.
pub struct Artifacts {
    pub outcome: Outcome,
    pub json: Vec<u8>,
    pub csv: Option<Vec<u8>>,
}

fn finish<T: Serialize>(
    ctx: &Context,
    name: &str,
    op: &Operation,
    pass: Option<bool>,
    summary: String,
    result: T,
    csv: Option<Vec<u8>>,
) -> Artifacts {
    let report = Report { experiment: name, op, potential: &ctx.spec, settings: &ctx.settings, pass, result };
    Artifacts {
        outcome: Outcome { name: name.to_string(), op: op.name(), pass, summary },
        json: json_bytes(&report),
        csv,
    }
}

pub fn evaluate(ctx: &Context, name: &str, op: &Operation) -> Result<Artifacts> {
    let ctxerr = |e| CliError::core(name, e);
    let p = &ctx.potential;
    let g = &ctx.grid;
    match op {
        Operation::KatoNorm { eps, radii } => {
            let d = p.diagnostics(eps, radii, &KatoQuadrature::default()).map_err(ctxerr)?;
            Ok(finish(ctx, name, op, None, format!("kato_norm={}", d.kato_norm), d, None))
        }
        Operation::Assume { lambda_max, n_points, n_t } => {
            let reg = regular_at_zero(p, g).map_err(ctxerr)?;
            let count = count_negative_bound_states(p, g).map_err(ctxerr)?;
            let scan = embedded_scan(p, g, *lambda_max, *n_points).map_err(ctxerr)?;
            let hom = homotopy_scan(p, g, *n_t).map_err(ctxerr)?;
            let r = AssumeResult {
                sigma_min: reg.sigma_min,
                sigma_min_refined: reg.sigma_min_refined,
                regular: reg.regular,
                count: count.count,
                borderline: count.borderline,
                min_embedded_sigma: scan.min_sigma,
                embedded_scan: scan.points,
                crossings: hom.crossings,
            };
            let summary = format!("sigma_min={} regular={} count={}", r.sigma_min, r.regular, r.count);
            Ok(finish(ctx, name, op, None, summary, r, None))
        }
        Operation::Spectrum { kappa_max } => {
            let states = ctx.states(*kappa_max).map_err(ctxerr)?;
            let r = SpectrumResult {
                count: states.len(),
                states: states.iter().map(|s| s.summary(&AGMON_RADII)).collect(),
            };
            let mut summary = format!("count={}", r.count);
            for s in &r.states {
                summary.push_str(&format!("\nlambda={} kappa={} l={}", s.lambda_k, s.kappa, s.l.map_or(-1, |l| l as i64)));
            }
            Ok(finish(ctx, name, op, None, summary, r, None))
        }
        Operation::Heat { t, total } | Operation::Poisson { t, total } => {
            let heat = matches!(op, Operation::Heat { .. });
            let ms: Vec<Multiplier> =
                t.iter().map(|&t| if heat { Multiplier::Heat { t } } else { Multiplier::Poisson { t } }).collect();
            let sq = ctx.uniform_quadrature(&ms, None).map_err(ctxerr)?;
            let sc = StoneContext::new(p, g, &sq, &ctx.pairs).map_err(ctxerr)?;
            let states = if *total { ctx.states(None).map_err(ctxerr)? } else { Vec::new() };
            let slices = ms
                .iter()
                .map(|&m| if *total { sc.total(m, &states) } else { sc.slice(m) })
                .collect::<kato_core::Result<Vec<_>>>()
                .map_err(ctxerr)?;
            let summary = format!("{} slices x {} pairs, eta_max={}", slices.len(), ctx.pairs.len(), sq.eta_max);
            Ok(finish(ctx, name, op, None, summary, slices_meta(&slices), Some(slices_csv(&slices))))
        }
        Operation::Wave { tau, eta_max } => {
            let sq = ctx.uniform_quadrature(&[], Some(eta_max.or(ctx.settings.eta_max).unwrap_or(ETA_MAX_DEFAULT)));
            let sq = sq.map_err(ctxerr)?;
            let sc = StoneContext::new(p, g, &sq, &ctx.pairs).map_err(ctxerr)?;
            let slices = tau.iter().map(|&t| sc.wave_t(t)).collect::<kato_core::Result<Vec<_>>>().map_err(ctxerr)?;
            let summary = format!("{} slices x {} pairs, eta_max={}", slices.len(), ctx.pairs.len(), sq.eta_max);
            Ok(finish(ctx, name, op, None, summary, slices_meta(&slices), Some(slices_csv(&slices))))
        }
        Operation::Br { alpha, lambda0 } => {
            let sq = ctx.br_quadrature(*lambda0).map_err(ctxerr)?;
            let sc = StoneContext::new(p, g, &sq, &ctx.pairs).map_err(ctxerr)?;
            let slices = alpha
                .iter()
                .map(|&a| sc.bochner_riesz_pc(a, *lambda0))
                .collect::<kato_core::Result<Vec<_>>>()
                .map_err(ctxerr)?;
            let summary = format!("{} slices x {} pairs", slices.len(), ctx.pairs.len());
            Ok(finish(ctx, name, op, None, summary, slices_meta(&slices), Some(slices_csv(&slices))))
        }
        Operation::Check { .. } => {
            let r = check(ctx, op).map_err(ctxerr)?;
            let mut csv = Vec::new();
            r.write_csv(&mut csv).unwrap();
            let summary = format!(
                "{} C={} drift={:.3e} excluded={}",
                r.theorem_id.as_str(),
                r.fitted_constant,
                r.refinement_drift,
                r.excluded_cells
            );
            Ok(finish(ctx, name, op, Some(r.pass), summary, &r, Some(csv)))
        }
    }
}

fn need(v: Option<f64>, what: &str, id: TheoremId) -> kato_core::Result<f64> {
    v.ok_or_else(|| kato_core::Error::InvalidInput(format!("{} needs `{what}`", id.as_str())))
}

fn or_default(t: &[f64], default: &[f64]) -> Vec<f64> {
    if t.is_empty() {
        default.to_vec()
    } else {
        t.to_vec()
    }
}

/// Runs one theorem check on the context's potential, grid and pairs.
pub fn check(ctx: &Context, op: &Operation) -> kato_core::Result<DominationReport> {
    let Operation::Check { theorem, t, alpha, lambda0, eps, tau_max, eta_max } = op else {
        unreachable!("check() is only called for check operations")
    };
    let (p, g, pairs) = (&ctx.potential, &ctx.grid, &ctx.pairs[..]);
    let poisson = |t: &[f64], mode| {
        let ms: Vec<_> = t.iter().map(|&t| Multiplier::Poisson { t }).collect();
        let sq = ctx.uniform_quadrature(&ms, *eta_max)?;
        check_poisson_domination(p, g, &sq, t, pairs, mode)
    };
    match theorem {
        TheoremId::Bound1 => poisson(&or_default(t, &[0.1, 0.3, 1.0, 4.0]), PoissonMode::Bound1),
        TheoremId::Bound3 => poisson(&or_default(t, &[0.1, 0.3, 1.0]), PoissonMode::Bound3),
        TheoremId::Bound4 => poisson(&or_default(t, &[1.0, 2.0, 4.0]), PoissonMode::Bound4),
        TheoremId::Gauss1 => {
            let t = or_default(t, &[0.1, 0.3, 1.0, 4.0]);
            let ms: Vec<_> = t.iter().map(|&t| Multiplier::Heat { t }).collect();
            let sq = ctx.uniform_quadrature(&ms, *eta_max)?;
            check_heat_domination(p, g, &sq, &t, pairs, HeatMode::Gauss1)
        }
        TheoremId::Bound2 | TheoremId::Gauss2 => {
            let states = ctx.states(None)?;
            let (mode, t) = if *theorem == TheoremId::Bound2 {
                (K2Mode::Poisson, or_default(t, &[0.1, 0.3, 1.0, 4.0]))
            } else {
                (K2Mode::Heat, or_default(t, &[1.0, 2.0, 5.0, 10.0]))
            };
            // eps only enters the heat envelope; a quarter of the smallest
            // binding momentum by default.
            let kappa1 = states.iter().map(|s| s.kappa).fold(f64::INFINITY, f64::min);
            let eps = eps.unwrap_or(if kappa1.is_finite() { 0.25 * kappa1 } else { 1.0 });
            check_k2_decay(p, g, &states, mode, eps, &t, pairs)
        }
        TheoremId::BrDecay | TheoremId::L2Br => {
            let a = need(*alpha, "alpha", *theorem)?;
            let l0 = need(*lambda0, "lambda0", *theorem)?;
            let sq = ctx.br_quadrature(l0)?;
            if *theorem == TheoremId::BrDecay {
                br_decay_slope(p, g, &sq, a, l0)
            } else {
                l2_br_norm(p, g, &sq, a, l0)
            }
        }
        TheoremId::TauTMass => {
            let sq = ctx.uniform_quadrature(&[], Some(eta_max.or(ctx.settings.eta_max).unwrap_or(ETA_MAX_DEFAULT)))?;
            Ok(tau_t_mass(p, g, &sq, pairs, tau_max.unwrap_or(4.0))?.0)
        }
    }
}

pub fn write_artifacts(out: &Path, stem: &str, a: &Artifacts) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let mut written = Vec::new();
    let json = out.join(format!("{stem}.json"));
    write_file(&json, &a.json)?;
    written.push(json);
    if let Some(csv) = &a.csv {
        let path = out.join(format!("{stem}.csv"));
        write_file(&path, csv)?;
        written.push(path);
    }
    Ok(written)
}

/// Runs every experiment in order. Stops at the first error.
pub fn run(cfg: &ExperimentConfig, profile: Option<TolProfile>, out: &Path) -> Result<Vec<Outcome>> {
    let ctx = Context::new(cfg, profile)?;
    let mut outcomes = Vec::new();
    for (i, e) in cfg.experiments.iter().enumerate() {
        let stem = e.file_stem(i);
        let a = run_one(&ctx, e, &stem)?;
        write_artifacts(out, &stem, &a)?;
        outcomes.push(a.outcome);
    }
    Ok(outcomes)
}

fn run_one(ctx: &Context, e: &Experiment, stem: &str) -> Result<Artifacts> {
    evaluate(ctx, stem, &e.op)
}

/// 0 when every gated outcome passed, 1 otherwise.
pub fn exit_code(outcomes: &[Outcome]) -> i32 {
    if outcomes.iter().all(|o| o.pass != Some(false)) {
        0
    } else {
        1
    }
}
