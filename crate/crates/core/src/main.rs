use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nsreg::harness::LemmaId;
use nsreg::runner::{parse_field_arg, run, Command, Format, Overrides, RunConfig, RunOptions};
use nsreg::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "nsreg", version, about = "Partial-regularity diagnostics for steady 6D Navier-Stokes fields")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Field spec, `kind:key=value,...`, or an inline TOML table.
    #[arg(long, global = true)]
    field: Option<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Switch to Monte Carlo with this many samples per integral.
    #[arg(long, global = true)]
    samples: Option<usize>,
    #[arg(long, global = true)]
    eps0: Option<f64>,
    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Omit the timestamp so repeated runs are byte-identical.
    #[arg(long, global = true)]
    reproducible: bool,
    /// Worker threads; defaults to the number of CPUs.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand, Debug)]
enum Sub {
    /// A, E, C, D and F over a dyadic ladder of radii.
    Sweep,
    /// Split the pressure on one ball into p~ and h.
    SplitPressure,
    /// Local energy identity over a battery of test functions.
    CheckEnergy,
    /// Scan a probe grid for points where the regularity criterion fails.
    Detect,
    /// Empirical constants for one or all of the decay inequalities.
    Verify {
        #[arg(long)]
        lemma: Option<LemmaId>,
    },
    /// Exponent bootstrap schedule.
    Schedule {
        #[arg(long)]
        alpha0: Option<f64>,
        #[arg(long)]
        delta: Option<f64>,
    },
    /// List the field generators with example specs.
    Gen,
}

fn field_arg(s: &str) -> Result<nsreg::generators::FieldSpec> {
    if s.contains('=') && (s.contains('\n') || s.trim_start().starts_with("kind")) {
        let spec: nsreg::generators::FieldSpec = toml::from_str(s).map_err(|e| Error::Config(format!("bad --field: {e}")))?;
        spec.validate()?;
        Ok(spec)
    } else {
        parse_field_arg(s)
    }
}

fn real_main(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let mut ov = Overrides {
        field: cli.field.as_deref().map(field_arg).transpose()?,
        seed: cli.seed,
        samples: cli.samples,
        eps0: cli.eps0,
        format: cli.format,
        ..Default::default()
    };
    let cmd = match cli.command {
        Sub::Sweep => Command::Sweep,
        Sub::SplitPressure => Command::SplitPressure,
        Sub::CheckEnergy => Command::CheckEnergy,
        Sub::Detect => Command::Detect,
        Sub::Verify { lemma } => {
            ov.lemma = lemma;
            Command::Verify
        }
        Sub::Schedule { alpha0, delta } => {
            ov.alpha0 = alpha0;
            ov.delta = delta;
            Command::Schedule
        }
        Sub::Gen => Command::Gen,
    };
    ov.apply(&mut cfg);
    cfg.validate(cmd)?;
    let workers = match cli.workers {
        Some(0) => return Err(Error::Config("--workers must be at least 1".into())),
        Some(n) => n,
        None => std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Resource(e.to_string()))?;
    let opts = RunOptions { reproducible: cli.reproducible };
    pool.install(|| run(cmd, &cfg, &opts, cli.out.as_deref()))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match real_main(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("nsreg: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
