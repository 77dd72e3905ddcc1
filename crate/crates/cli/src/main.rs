use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use inchworm_core::bounds::BoundConstants;
use inchworm_core::harness::experiments::envelope_table;
use inchworm_core::harness::output::{num, observable_csv};
use inchworm_core::harness::{run_experiment, ExperimentConfig, ExperimentKind, ModelConfig};
use inchworm_core::inchworm::observable_curve;
use inchworm_core::{CorrelationTable, Error, Inchworm, Mode, SchemeConfig};

#[derive(Parser)]
#[command(name = "inchworm-lab", version, about = "Inchworm Monte Carlo and stochastic Runge-Kutta experiments")]
struct Cli {
    /// JSON configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (a CSV path for inchworm-solve).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Toy-model error table over step sizes and sample counts.
    OdeConvergence(ExperimentArgs),
    /// Toy-model error growth curves.
    OdeErrorGrowth(ExperimentArgs),
    /// Inchworm error table over step sizes and sample counts.
    InchwormConvergence(ExperimentArgs),
    /// Inchworm error growth curves.
    InchwormErrorGrowth(ExperimentArgs),
    /// Observable curves.
    Observable(ExperimentArgs),
    /// Empirical inchworm error against the analytic envelope.
    BoundsOverlay(ExperimentArgs),
    /// Run whichever experiment the configuration names.
    Run(ExperimentArgs),
    /// Tabulate the Monte Carlo error envelope.
    BoundsEval(BoundsArgs),
    /// Write the discretised bath modes.
    BathDump,
    /// Solve one propagator grid and write the observable.
    InchwormSolve(SolveArgs),
}

#[derive(Args)]
struct ExperimentArgs {
    /// Overrides `n_exp_multiplier`.
    #[arg(long)]
    n_exp_multiplier: Option<f64>,
}

#[derive(Args)]
struct BoundsArgs {
    #[arg(long, default_value_t = 1.0)]
    w: f64,
    #[arg(long, default_value_t = 1.0)]
    g: f64,
    #[arg(long, default_value_t = 1.0)]
    lbar: f64,
    #[arg(long, default_value_t = 1)]
    mbar: usize,
    #[arg(long, default_value_t = 0.125)]
    h: f64,
    #[arg(long, default_value_t = 4.0)]
    ns: f64,
    #[arg(long, default_value_t = 1.0)]
    t_max: f64,
    #[arg(long, default_value_t = 0.125)]
    dt: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Mc,
    Det,
}

#[derive(Args)]
struct SolveArgs {
    /// Steps up to the observable time.
    #[arg(long = "N")]
    n: usize,
    #[arg(long, default_value_t = 1.0)]
    t: f64,
    #[arg(long, default_value_t = 1)]
    ns: usize,
    #[arg(long, default_value_t = 1)]
    mbar: usize,
    #[arg(long, value_enum, default_value_t = ModeArg::Mc)]
    mode: ModeArg,
}

fn experiment_config(cli: &Cli, kind: Option<ExperimentKind>, args: &ExperimentArgs) -> Result<ExperimentConfig> {
    let mut cfg = match (&cli.config, kind) {
        (Some(path), _) => ExperimentConfig::from_path(path).with_context(|| format!("reading {}", path.display()))?,
        (None, Some(kind)) => ExperimentConfig::new(kind),
        (None, None) => bail!(Error::Config("run needs --config".into())),
    };
    if let Some(kind) = kind {
        if cfg.experiment != kind {
            bail!(Error::Config(format!(
                "configuration describes {}, not {}",
                cfg.experiment.name(),
                kind.name()
            )));
        }
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(m) = args.n_exp_multiplier {
        cfg.n_exp_multiplier = Some(m);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn model_config(cli: &Cli) -> Result<ModelConfig> {
    let Some(path) = &cli.config else {
        return Ok(ModelConfig::default());
    };
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if let Ok(m) = serde_json::from_str::<ModelConfig>(&text) {
        return Ok(m);
    }
    let cfg = ExperimentConfig::from_json(&text)?;
    Ok(ModelConfig {
        system: cfg.system,
        bath: cfg.bath,
    })
}

fn out_dir(cli: &Cli) -> PathBuf {
    cli.out.clone().unwrap_or_else(|| PathBuf::from("out"))
}

fn write_output(path: Option<&Path>, body: &str) -> Result<()> {
    match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            fs::write(p, body).with_context(|| format!("writing {}", p.display()))?;
            eprintln!("wrote {}", p.display());
        }
        None => std::io::stdout().write_all(body.as_bytes())?,
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.workers {
        if n == 0 {
            bail!(Error::Config("--workers must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let kind = match &cli.command {
        Command::OdeConvergence(_) => Some(ExperimentKind::OdeConvergence),
        Command::OdeErrorGrowth(_) => Some(ExperimentKind::OdeErrorGrowth),
        Command::InchwormConvergence(_) => Some(ExperimentKind::InchwormConvergence),
        Command::InchwormErrorGrowth(_) => Some(ExperimentKind::InchwormErrorGrowth),
        Command::Observable(_) => Some(ExperimentKind::Observable),
        Command::BoundsOverlay(_) => Some(ExperimentKind::BoundsOverlay),
        _ => None,
    };
    match &cli.command {
        Command::OdeConvergence(a)
        | Command::OdeErrorGrowth(a)
        | Command::InchwormConvergence(a)
        | Command::InchwormErrorGrowth(a)
        | Command::Observable(a)
        | Command::BoundsOverlay(a)
        | Command::Run(a) => {
            let cfg = experiment_config(cli, kind, a)?;
            let out = out_dir(cli);
            let report = run_experiment(&cfg, &out)?;
            for line in &report.summary {
                println!("{line}");
            }
            for f in &report.files {
                eprintln!("wrote {}", f.display());
            }
        }
        Command::BoundsEval(b) => {
            if b.mbar % 2 == 0 || b.mbar > 3 {
                bail!(Error::UnsupportedOrder(b.mbar));
            }
            let c = BoundConstants {
                w: b.w,
                g: b.g,
                lbar: b.lbar,
                mbar: b.mbar,
                ..BoundConstants::unit(b.mbar)
            };
            let mut body = String::from("t,envelope,log_envelope\n");
            for (t, env, log_env) in envelope_table(&c, b.t_max, b.dt, b.h, b.ns)? {
                body.push_str(&format!("{t},{},{}\n", num(env), num(log_env)));
            }
            let dir = out_dir(cli);
            write_output(Some(&dir.join("bounds_eval.csv")), &body)?;
        }
        Command::BathDump => {
            let bath = model_config(cli)?.bath.build()?;
            let mut body = Vec::new();
            bath.write_csv(&mut body)?;
            let dir = out_dir(cli);
            write_output(Some(&dir.join("bath.csv")), &String::from_utf8(body)?)?;
        }
        Command::InchwormSolve(s) => {
            let model = model_config(cli)?;
            let system = model.system.build()?;
            let bath = model.bath.build()?;
            let config = SchemeConfig {
                ns: s.ns,
                mbar: s.mbar,
                seed: cli.seed.unwrap_or(0),
                mode: match s.mode {
                    ModeArg::Mc => Mode::MonteCarlo,
                    ModeArg::Det => Mode::Deterministic,
                },
                ..SchemeConfig::new(s.n, s.t)
            };
            config.validate()?;
            let table = CorrelationTable::new(&bath, 2.0 * s.t)?;
            let grid = Inchworm::new(system, &table, config)?.solve(0)?;
            let body = observable_csv(config.h(), &observable_curve(&grid)?);
            write_output(cli.out.as_deref(), &body)?;
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::DivergenceRate { .. } | Error::Divergence { .. }) => 3,
        Some(Error::Config(_) | Error::Json(_) | Error::UnsupportedOrder(_) | Error::InvalidStep { .. }) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
