use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use stein_sampler::harness::{self, ExperimentConfig, MetricMode, EXIT_CONFIG};

#[derive(Parser)]
#[command(name = "stein-sampler", version, about = "Stein variational gradient descent experiments")]
struct Cli {
    /// Experiment config (flat `key = value` file).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; also read from STEIN_SAMPLER_THREADS.
    #[arg(long, global = true, env = "STEIN_SAMPLER_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run SVGD and write the trajectory CSV.
    Run,
    /// Check the descent, rate and step-size inequalities on a run.
    Verify,
    /// Iterations to reach KSD² ≤ ε against the predicted count, per dimension.
    Sweep {
        /// Comma separated subset of 1,2,4,8; overrides `sweep.dims`.
        #[arg(long, value_delimiter = ',')]
        dims: Option<Vec<usize>>,
    },
    /// KSD² of a particle CSV.
    Ksd {
        particles: PathBuf,
    },
    /// One-line metric over CSV samples.
    Metrics {
        #[arg(long, value_enum)]
        mode: Mode,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        reference: Option<PathBuf>,
    },
    /// Print the step-size and complexity constants.
    Theory,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Kl,
    W1,
    T1,
}

fn load(cli: &Cli) -> stein_sampler::Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| stein_sampler::Error::Config(format!("{}: {e}", path.display())))?;
            ExperimentConfig::parse(&text).map_err(|e| stein_sampler::Error::Config(format!("{}: {e}", path.display())))?
        }
        None => ExperimentConfig::default(),
    };
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    if cli.out.is_some() {
        cfg.output_dir = cli.out.clone();
    }
    Ok(cfg)
}

fn dispatch(cli: &Cli, out: &mut dyn Write) -> stein_sampler::Result<i32> {
    let mut cfg = load(cli)?;
    match &cli.command {
        Command::Run => harness::cmd_run(&cfg, out),
        Command::Verify => harness::cmd_verify(&cfg, out),
        Command::Sweep { dims } => {
            if let Some(d) = dims {
                cfg.sweep.dims = d.clone();
                cfg.validate()?;
            }
            harness::cmd_sweep(&cfg, out)
        }
        Command::Ksd { particles } => harness::cmd_ksd(&cfg, particles, out),
        Command::Metrics { mode, input, reference } => {
            let mode = match mode {
                Mode::Kl => MetricMode::Kl,
                Mode::W1 => MetricMode::W1,
                Mode::T1 => MetricMode::T1,
            };
            harness::cmd_metrics(&cfg, mode, input, reference.as_deref(), out)
        }
        Command::Theory => harness::cmd_theory(&cfg, out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG as u8 } else { 0 });
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be >= 1");
            return ExitCode::from(EXIT_CONFIG as u8);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG as u8);
        }
    }
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let code = match dispatch(&cli, &mut out) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            harness::exit_code_for(&e)
        }
    };
    let _ = out.flush();
    ExitCode::from(code as u8)
}
