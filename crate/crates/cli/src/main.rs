use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use urbanca_cli::config::RunConfig;
use urbanca_cli::error::CliResult;
use urbanca_cli::ScenarioConfig;

/// Learn urban-growth transition rules from imagery and simulate future built-up maps.
#[derive(Parser)]
#[command(name = "urbanca", version)]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn load(&self) -> CliResult<RunConfig> {
        let mut cfg = RunConfig::load(&self.config)?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.paths.out_dir = out.clone();
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train the raster encoder and write the data and label matrices.
    Prepare(RunArgs),
    /// Cross-validate and fit every classifier in the roster.
    Train(RunArgs),
    /// Run the automaton forward from the configured start map.
    Simulate {
        /// Run configuration (TOML); the encoder is read from its output directory.
        #[arg(long)]
        config: PathBuf,
        /// Trained model file (.ucam).
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 1)]
        steps: usize,
        #[arg(long)]
        seed: Option<u64>,
        /// Directory for the simulated maps (defaults to the configured output directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a predicted map against two observed maps.
    Evaluate {
        #[arg(long)]
        obs_t: PathBuf,
        #[arg(long)]
        obs_t1: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        /// Output CSV.
        #[arg(long)]
        out: PathBuf,
    },
    /// Repeat encoding, training and validation over several encoding lengths.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_delimiter = ',', default_values_t = urbanca_cli::DEFAULT_LENGTHS)]
        lengths: Vec<usize>,
    },
    /// Generate a synthetic scenario with a known growth rule.
    Synth {
        /// Scenario settings (TOML); defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Prepare(args) => {
            let s = urbanca_cli::prepare(&args.load()?)?;
            println!(
                "prepared {} rows x {} columns; class counts {:?}; encoder loss {:.6}",
                s.rows,
                s.cols,
                s.counts.0,
                s.final_loss.unwrap_or(f64::NAN)
            );
        }
        Command::Train(args) => {
            for m in urbanca_cli::train(&args.load()?)? {
                let cv = m.report.cv.as_ref().map_or_else(|| "-".to_string(), |c| c.to_string());
                match &m.path {
                    Some(p) => println!("{}: cv {cv} -> {}", m.label, p.display()),
                    None => println!("{}: failed", m.label),
                }
            }
        }
        Command::Simulate {
            config,
            model,
            steps,
            seed,
            out,
        } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            let out = out.unwrap_or_else(|| cfg.paths.out_dir.clone());
            let meta = urbanca_cli::simulate(&cfg, &model, steps, &out)?;
            println!(
                "simulated {} steps through {}",
                meta.steps,
                meta.years.last().copied().unwrap_or(meta.start_year)
            );
        }
        Command::Evaluate {
            obs_t,
            obs_t1,
            pred,
            out,
        } => {
            let r = urbanca_cli::evaluate(&obs_t, &obs_t1, &pred, &out)?;
            println!("FoM {:?} PA {:?} UA {:?} OA {:?}", r.fom, r.pa, r.ua, r.oa);
        }
        Command::Sweep { run, lengths } => {
            for row in urbanca_cli::sweep(&run.load()?, &lengths)? {
                println!(
                    "len {}: loss {:.6} FoM {:?}",
                    row.len, row.final_loss, row.validation.fom
                );
            }
        }
        Command::Synth { config, seed, out } => {
            let mut scenario = match config {
                Some(p) => ScenarioConfig::load(&p)?,
                None => ScenarioConfig::default(),
            };
            if let Some(seed) = seed {
                scenario.seed = seed;
            }
            let cfg = urbanca_cli::synth(&scenario, &out)?;
            println!("wrote scenario; run config at {}", cfg.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
