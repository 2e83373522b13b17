//! Experiment configuration (TOML, or JSON for `.json` files) and the
//! tolerance profiles that fill in every unset numeric control.

use kato_core::grids::{EvalSpec, GridScheme};
use kato_core::harness::TheoremId;
use kato_core::potentials::{Potential, Primitive, DEFAULT_TAIL_TOL};
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum TolProfile {
    Fast,
    #[default]
    Default,
    Strict,
}

impl TolProfile {
    pub fn grid(&self) -> GridScheme {
        match self {
            TolProfile::Fast => GridScheme { radial_order: 16, angular_order: 14 },
            TolProfile::Default => GridScheme::default(),
            TolProfile::Strict => GridScheme { radial_order: 32, angular_order: 50 },
        }
    }

    pub fn spectral_order(&self) -> usize {
        match self {
            TolProfile::Fast => 12,
            TolProfile::Default => 16,
            TolProfile::Strict => 24,
        }
    }

    pub fn weight_tail_tol(&self) -> f64 {
        match self {
            TolProfile::Fast => 1e-2,
            TolProfile::Default => 1e-3,
            TolProfile::Strict => 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSpec {
    #[serde(default)]
    pub primitives: Vec<Primitive>,
    #[serde(default)]
    pub tail_tol: Option<f64>,
}

impl PotentialSpec {
    pub fn build(&self) -> kato_core::Result<Potential> {
        Potential::with_tail_tol(self.primitives.clone(), self.tail_tol.unwrap_or(DEFAULT_TAIL_TOL))
    }
}

/// Parses `shape:amplitude:width[:cx,cy,cz]`, e.g. `square_well:-4:1`.
pub fn parse_primitive(text: &str) -> std::result::Result<Primitive, String> {
    let parts: Vec<&str> = text.split(':').collect();
    if !(3..=4).contains(&parts.len()) {
        return Err(format!("expected shape:amplitude:width[:cx,cy,cz], got {text:?}"));
    }
    let num = |s: &str| s.trim().parse::<f64>().map_err(|e| format!("{s:?}: {e}"));
    let (a, w) = (num(parts[1])?, num(parts[2])?);
    let prim = match parts[0] {
        "square_well" => Primitive::square_well(a, w),
        "gaussian" => Primitive::gaussian(a, w),
        "exp_decay" => Primitive::exp_decay(a, w),
        other => return Err(format!("unknown shape {other:?} (square_well, gaussian, exp_decay)")),
    };
    match parts.get(3) {
        None => Ok(prim),
        Some(c) => {
            let xs = c.split(',').map(num).collect::<std::result::Result<Vec<_>, _>>()?;
            let [x, y, z] = xs[..] else { return Err(format!("center needs three coordinates, got {c:?}")) };
            Ok(prim.shifted([x, y, z]))
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub radial_order: Option<usize>,
    pub angular_order: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectralSpec {
    /// Fixed truncation; by default the smallest one meeting the tail tolerance.
    pub eta_max: Option<f64>,
    pub panel_width: Option<f64>,
    pub order: Option<usize>,
    pub weight_tail_tol: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Operation {
    KatoNorm {
        #[serde(default = "default_eps")]
        eps: Vec<f64>,
        #[serde(default = "default_radii")]
        radii: Vec<f64>,
    },
    Assume {
        #[serde(default = "default_lambda_max")]
        lambda_max: f64,
        #[serde(default = "default_scan_points")]
        n_points: usize,
        #[serde(default = "default_scan_points")]
        n_t: usize,
    },
    Spectrum {
        kappa_max: Option<f64>,
    },
    Heat {
        t: Vec<f64>,
        #[serde(default)]
        total: bool,
    },
    Poisson {
        t: Vec<f64>,
        #[serde(default)]
        total: bool,
    },
    Wave {
        tau: Vec<f64>,
        eta_max: Option<f64>,
    },
    Br {
        alpha: Vec<f64>,
        lambda0: f64,
    },
    Check {
        theorem: TheoremId,
        #[serde(default)]
        t: Vec<f64>,
        alpha: Option<f64>,
        lambda0: Option<f64>,
        eps: Option<f64>,
        tau_max: Option<f64>,
        eta_max: Option<f64>,
    },
}

impl Operation {
    pub fn name(&self) -> String {
        match self {
            Operation::KatoNorm { .. } => "kato_norm".into(),
            Operation::Assume { .. } => "assume".into(),
            Operation::Spectrum { .. } => "spectrum".into(),
            Operation::Heat { .. } => "heat".into(),
            Operation::Poisson { .. } => "poisson".into(),
            Operation::Wave { .. } => "wave".into(),
            Operation::Br { .. } => "br".into(),
            Operation::Check { theorem, .. } => format!("check_{}", theorem.as_str()),
        }
    }
}

fn default_eps() -> Vec<f64> {
    vec![0.1, 0.5, 1.0]
}

fn default_radii() -> Vec<f64> {
    vec![1.0, 2.0, 4.0]
}

fn default_lambda_max() -> f64 {
    25.0
}

fn default_scan_points() -> usize {
    50
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Experiment {
    /// Output file stem; defaults to `<index>_<op>`.
    #[serde(default)]
    pub name: Option<String>,
    #[serde(flatten)]
    pub op: Operation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub potential: PotentialSpec,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub spectral: SpectralSpec,
    #[serde(default)]
    pub pairs: Option<EvalSpec>,
    #[serde(default)]
    pub profile: Option<TolProfile>,
    #[serde(default, rename = "experiment")]
    pub experiments: Vec<Experiment>,
}

impl ExperimentConfig {
    pub fn parse(text: &str, json: bool, path: &Path) -> Result<Self> {
        let cfg: Self = if json {
            serde_json::from_str(text).map_err(|e| CliError::ConfigParse { path: path.into(), msg: e.to_string() })?
        } else {
            toml::from_str(text).map_err(|e| CliError::ConfigParse { path: path.into(), msg: e.to_string() })?
        };
        cfg.validate(path)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        // An unreadable config is a usage problem, not a failed run.
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::ConfigParse { path: path.into(), msg: e.to_string() })?;
        let json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        Self::parse(&text, json, path)
    }

    fn validate(&self, path: &Path) -> Result<()> {
        let bad = |msg: String| CliError::ConfigParse { path: path.into(), msg };
        self.potential.build().map_err(|e| bad(e.to_string()))?;
        let mut names = std::collections::BTreeSet::new();
        for (i, e) in self.experiments.iter().enumerate() {
            let name = e.file_stem(i);
            if name.is_empty() || name.contains(['/', '\\']) || name.starts_with('.') {
                return Err(bad(format!("experiment {i}: invalid name {name:?}")));
            }
            if !names.insert(name.clone()) {
                return Err(bad(format!("duplicate experiment name {name:?}")));
            }
        }
        Ok(())
    }
}

impl Experiment {
    pub fn file_stem(&self, index: usize) -> String {
        self.name.clone().unwrap_or_else(|| format!("{:02}_{}", index + 1, self.op.name()))
    }
}

/// Numeric controls after the profile and the config overrides are merged.
/// Echoed into every JSON report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Settings {
    pub profile: TolProfile,
    pub grid: GridScheme,
    pub potential_tail_tol: f64,
    pub eta_max: Option<f64>,
    pub panel_width: f64,
    pub spectral_order: usize,
    pub weight_tail_tol: f64,
    pub pairs: EvalSpec,
    pub drift_tol: f64,
    pub slope_tol: f64,
    pub disc_tol: f64,
}

pub fn default_pairs() -> EvalSpec {
    EvalSpec::new(0.5, 6.0, 8)
}

impl Settings {
    pub fn resolve(cfg: &ExperimentConfig, cli_profile: Option<TolProfile>) -> Self {
        let profile = cli_profile.or(cfg.profile).unwrap_or_default();
        let g = profile.grid();
        Self {
            profile,
            grid: GridScheme {
                radial_order: cfg.grid.radial_order.unwrap_or(g.radial_order),
                angular_order: cfg.grid.angular_order.unwrap_or(g.angular_order),
            },
            potential_tail_tol: cfg.potential.tail_tol.unwrap_or(DEFAULT_TAIL_TOL),
            eta_max: cfg.spectral.eta_max,
            panel_width: cfg.spectral.panel_width.unwrap_or(1.0),
            spectral_order: cfg.spectral.order.unwrap_or(profile.spectral_order()),
            weight_tail_tol: cfg.spectral.weight_tail_tol.unwrap_or(profile.weight_tail_tol()),
            pairs: cfg.pairs.clone().unwrap_or_else(default_pairs),
            drift_tol: kato_core::harness::DRIFT_TOL,
            slope_tol: kato_core::harness::SLOPE_TOL,
            disc_tol: kato_core::harness::DISC_TOL,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DEMO: &str = include_str!("../configs/square_well_demo.toml");

    #[test]
    fn demo_parses() {
        let cfg = ExperimentConfig::parse(DEMO, false, Path::new("demo.toml")).unwrap();
        assert_eq!(cfg.potential.primitives.len(), 1);
        assert!(cfg.experiments.len() >= 8);
    }

    #[test]
    fn json_is_accepted() {
        let cfg = ExperimentConfig::parse(DEMO, false, Path::new("demo.toml")).unwrap();
        let text = serde_json::to_string(&cfg).unwrap();
        let back = ExperimentConfig::parse(&text, true, Path::new("demo.json")).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = "[potential]\nprimitives = []\nbogus = 1\n";
        assert!(matches!(
            ExperimentConfig::parse(text, false, Path::new("x.toml")),
            Err(CliError::ConfigParse { .. })
        ));
    }

    #[test]
    fn unknown_operation_is_rejected() {
        let text = "[potential]\nprimitives = []\n[[experiment]]\nop = \"teleport\"\n";
        assert!(ExperimentConfig::parse(text, false, Path::new("x.toml")).is_err());
    }

    #[test]
    fn duplicate_names_are_rejected() {
        let text = "[potential]\nprimitives = []\n[[experiment]]\nop = \"spectrum\"\nname = \"a\"\n\
                    [[experiment]]\nop = \"spectrum\"\nname = \"a\"\n";
        assert!(ExperimentConfig::parse(text, false, Path::new("x.toml")).is_err());
    }

    #[test]
    fn primitive_shorthand() {
        let p = parse_primitive("square_well:-4:1").unwrap();
        assert_eq!(p, Primitive::square_well(-4.0, 1.0));
        let p = parse_primitive("gaussian:-1:0.5:1,0,0").unwrap();
        assert_eq!(p.center, [1.0, 0.0, 0.0]);
        assert!(parse_primitive("cube:1:1").is_err());
        assert!(parse_primitive("gaussian:x:1").is_err());
        assert!(parse_primitive("gaussian:1:1:1,2").is_err());
    }

    #[test]
    fn cli_profile_overrides_config() {
        let text = "profile = \"strict\"\n[potential]\nprimitives = []\n";
        let cfg = ExperimentConfig::parse(text, false, Path::new("x.toml")).unwrap();
        assert_eq!(Settings::resolve(&cfg, None).profile, TolProfile::Strict);
        assert_eq!(Settings::resolve(&cfg, Some(TolProfile::Fast)).profile, TolProfile::Fast);
    }
}
