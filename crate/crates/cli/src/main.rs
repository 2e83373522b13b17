use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use kato_cli::config::{parse_primitive, Experiment, ExperimentConfig, Operation, PotentialSpec, TolProfile};
use kato_cli::error::{CliError, Result};
use kato_cli::runner::{self, Context, Outcome};
use kato_cli::suite::{run_suite, SuiteSize};
use kato_core::grids::EvalSpec;
use kato_core::potentials::Primitive;

/// Kato-class diagnostics and kernel checks for -Δ+V in three dimensions.
///
/// Without a subcommand, runs every experiment in `--config`.
#[derive(Parser, Debug)]
#[command(name = "kato", version)]
struct Cli {
    /// Experiment config (TOML, or JSON with a .json extension).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for JSON/CSV artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Grid and quadrature resolution preset.
    #[arg(long, global = true, value_enum)]
    tol_profile: Option<TolProfile>,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Args, Debug, Clone)]
struct PotentialArgs {
    /// Primitive as shape:amplitude:width[:cx,cy,cz]; repeatable. Overrides
    /// the config's potential.
    #[arg(long = "potential", value_parser = parse_primitive)]
    primitives: Vec<Primitive>,
    /// Evaluation separations as s_min:s_max:count.
    #[arg(long, value_parser = parse_pairs)]
    pairs: Option<EvalSpec>,
}

fn parse_pairs(text: &str) -> std::result::Result<EvalSpec, String> {
    let parts: Vec<&str> = text.split(':').collect();
    let [a, b, n] = parts[..] else { return Err(format!("expected s_min:s_max:count, got {text:?}")) };
    let f = |s: &str| s.parse::<f64>().map_err(|e| format!("{s:?}: {e}"));
    let count = n.parse::<usize>().map_err(|e| format!("{n:?}: {e}"))?;
    Ok(EvalSpec::new(f(a)?, f(b)?, count))
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Kato norm with local and distal moduli.
    Kato {
        #[command(flatten)]
        pot: PotentialArgs,
        #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.5, 1.0])]
        eps: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_values_t = [1.0, 2.0, 4.0])]
        radii: Vec<f64>,
    },
    /// Negative eigenvalues and eigenfunction summaries.
    Spectrum {
        #[command(flatten)]
        pot: PotentialArgs,
        #[arg(long)]
        kappa_max: Option<f64>,
    },
    /// Zero-energy regularity, bound-state count and embedded-eigenvalue scan.
    Assume {
        #[command(flatten)]
        pot: PotentialArgs,
        #[arg(long, default_value_t = 25.0)]
        lambda_max: f64,
        #[arg(long, default_value_t = 50)]
        n_points: usize,
    },
    /// Heat kernel slices.
    Heat {
        #[command(flatten)]
        pot: PotentialArgs,
        #[arg(long, value_delimiter = ',', required = true)]
        t: Vec<f64>,
        /// Include the point-spectrum part.
        #[arg(long)]
        total: bool,
    },
    /// Poisson kernel slices.
    Poisson {
        #[command(flatten)]
        pot: PotentialArgs,
        #[arg(long, value_delimiter = ',', required = true)]
        t: Vec<f64>,
        #[arg(long)]
        total: bool,
    },
    /// Forward wave propagator slices.
    Wave {
        #[command(flatten)]
        pot: PotentialArgs,
        #[arg(long, value_delimiter = ',', required = true)]
        tau: Vec<f64>,
        #[arg(long)]
        eta_max: Option<f64>,
    },
    /// Bochner-Riesz kernel slices.
    Br {
        #[command(flatten)]
        pot: PotentialArgs,
        #[arg(long, value_delimiter = ',', required = true)]
        alpha: Vec<f64>,
        #[arg(long)]
        lambda0: f64,
    },
    /// Built-in verification suite: one PASS/FAIL line per check group.
    Verify {
        #[arg(long, value_enum, default_value_t = SuiteSize::Small)]
        suite: SuiteSize,
    },
}

fn base_config(cli: &Cli, pot: &PotentialArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None if pot.primitives.is_empty() => {
            return Err(CliError::Usage("give --potential or --config".into()));
        }
        None => ExperimentConfig {
            potential: PotentialSpec { primitives: Vec::new(), tail_tol: None },
            grid: Default::default(),
            spectral: Default::default(),
            pairs: None,
            profile: None,
            experiments: Vec::new(),
        },
    };
    if !pot.primitives.is_empty() {
        cfg.potential = PotentialSpec { primitives: pot.primitives.clone(), tail_tol: cfg.potential.tail_tol };
    }
    if let Some(p) = &pot.pairs {
        cfg.pairs = Some(p.clone());
    }
    cfg.experiments.clear();
    Ok(cfg)
}

fn single(cli: &Cli, pot: &PotentialArgs, op: Operation) -> Result<i32> {
    let cfg = base_config(cli, pot)?;
    let ctx = Context::new(&cfg, cli.tol_profile)?;
    let e = Experiment { name: Some(op.name()), op };
    let stem = e.file_stem(0);
    let a = runner::evaluate(&ctx, &stem, &e.op)?;
    if let Some(out) = &cli.out {
        runner::write_artifacts(out, &stem, &a)?;
    }
    report(&[a.outcome.clone()]);
    Ok(runner::exit_code(&[a.outcome]))
}

fn report(outcomes: &[Outcome]) {
    for o in outcomes {
        let tag = match o.pass {
            Some(true) => "PASS ",
            Some(false) => "FAIL ",
            None => "",
        };
        println!("{tag}{}: {}", o.name, o.summary);
    }
}

fn dispatch(cli: &Cli) -> Result<i32> {
    let Some(cmd) = &cli.command else {
        let path = cli.config.as_ref().ok_or_else(|| CliError::Usage("give a subcommand or --config".into()))?;
        let cfg = ExperimentConfig::load(path)?;
        let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
        let outcomes = runner::run(&cfg, cli.tol_profile, &out)?;
        report(&outcomes);
        return Ok(runner::exit_code(&outcomes));
    };
    match cmd {
        Command::Kato { pot, eps, radii } => {
            single(cli, pot, Operation::KatoNorm { eps: eps.clone(), radii: radii.clone() })
        }
        Command::Spectrum { pot, kappa_max } => single(cli, pot, Operation::Spectrum { kappa_max: *kappa_max }),
        Command::Assume { pot, lambda_max, n_points } => {
            single(cli, pot, Operation::Assume { lambda_max: *lambda_max, n_points: *n_points, n_t: 40 })
        }
        Command::Heat { pot, t, total } => single(cli, pot, Operation::Heat { t: t.clone(), total: *total }),
        Command::Poisson { pot, t, total } => single(cli, pot, Operation::Poisson { t: t.clone(), total: *total }),
        Command::Wave { pot, tau, eta_max } => {
            single(cli, pot, Operation::Wave { tau: tau.clone(), eta_max: *eta_max })
        }
        Command::Br { pot, alpha, lambda0 } => {
            single(cli, pot, Operation::Br { alpha: alpha.clone(), lambda0: *lambda0 })
        }
        Command::Verify { suite } => {
            let results = run_suite(*suite, cli.out.as_deref(), std::io::stdout())?;
            Ok(if results.iter().all(|r| r.pass) { 0 } else { 1 })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match dispatch(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
