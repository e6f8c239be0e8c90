use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use collapse_timing::config::{parse_config, RunConfig};
use collapse_timing::experiment::{self, Emit};
use collapse_timing::io::read_weights_csv;
use collapse_timing::reduction::{ReductionRule, RuleKind, DEFAULT_ONSET_EPSILON, DEFAULT_TAU_ENV};
use collapse_timing::state::EnergyMoments;
use collapse_timing::{Error, Result};

#[derive(Parser)]
#[command(name = "collapse-timing", version, about = "Detector capture and reduction-timing experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Full pipeline: calibrate, evolve, run trials, analyse, write outputs.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides output.directory).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Base seed (overrides trials.base_seed).
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Calibrate the detector strength and print the result as JSON.
    Calibrate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Reduction trials on an existing weights CSV.
    Mc {
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        rule: RuleKind,
        #[arg(long)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_TAU_ENV)]
        tau_env: f64,
        /// Energy spread of the initial state, needed by penrose_spread.
        #[arg(long)]
        energy_spread: Option<f64>,
        #[arg(long, default_value_t = DEFAULT_ONSET_EPSILON)]
        onset_epsilon: f64,
        #[arg(long, default_value_t = 100)]
        bins: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Evaluate the claim report only.
    Claims {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Run the pipeline once per value of one config key.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Dotted key, e.g. scenario.pulse_gap (defaults to the config's [sweep] section).
        #[arg(long)]
        key: Option<String>,
        /// Comma-separated values.
        #[arg(long)]
        values: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
    },
}

fn load(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}

fn out_dir(cli: Option<PathBuf>, config: &RunConfig) -> Result<PathBuf> {
    cli.or_else(|| config.output.directory.as_ref().map(PathBuf::from))
        .ok_or_else(|| Error::invalid("output.directory", "no output directory (pass --out)"))
}

fn set_threads(threads: Option<usize>) -> Result<()> {
    if let Some(n) = threads {
        if n == 0 {
            return Err(Error::invalid("threads", "must be positive"));
        }
        // only fails if the pool was already built, which cannot happen here
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Run { config, out, seed, threads } => {
            set_threads(threads)?;
            let mut cfg = load(&config)?;
            if let Some(s) = seed {
                cfg.trials.base_seed = s;
            }
            let dir = out_dir(out, &cfg)?;
            let manifest = experiment::run_experiment(&cfg, &dir)?;
            let claims = fs::read_to_string(dir.join("claims.txt")).map_err(|e| Error::io(&dir, e))?;
            print!("{claims}");
            eprintln!("wrote {} files to {}", manifest.files.len() + 1, dir.display());
        }
        Command::Calibrate { config } => {
            let mut cfg = load(&config)?;
            cfg.calibration.enabled = true;
            let result = experiment::calibrate(&cfg)?.expect("calibration enabled");
            println!("{}", serde_json::to_string_pretty(&result).expect("serialisable"));
        }
        Command::Mc {
            weights,
            rule,
            trials,
            seed,
            tau_env,
            energy_spread,
            onset_epsilon,
            bins,
            out,
            threads,
        } => {
            set_threads(threads)?;
            let w = read_weights_csv(&weights)?;
            let rule = match rule {
                RuleKind::PenroseEnv => ReductionRule::penrose_env(tau_env),
                RuleKind::PenroseSpread => ReductionRule::penrose_spread(),
                RuleKind::CurrentJump => ReductionRule::current_jump(),
            }
            .with_onset_epsilon(onset_epsilon);
            let moments = energy_spread.map(|s| EnergyMoments {
                mean_energy: f64::NAN,
                energy_spread: s,
            });
            let (records, window, summary) = experiment::run_mc(&w, &rule, moments.as_ref(), seed, trials, bins)?;
            if let Some(dir) = out {
                experiment::write_mc(&dir, &records, &window, &summary)?;
            }
            println!("{}", serde_json::to_string_pretty(&summary).expect("serialisable"));
        }
        Command::Claims { config, out, seed, threads } => {
            set_threads(threads)?;
            let mut cfg = load(&config)?;
            if let Some(s) = seed {
                cfg.trials.base_seed = s;
            }
            let result = experiment::run_pipeline(&cfg)?;
            if let Some(dir) = out {
                experiment::emit(&result, &dir, Emit::ClaimsOnly)?;
            }
            print!("{}", result.claims.to_text());
        }
        Command::Sweep {
            config,
            key,
            values,
            out,
            threads,
        } => {
            set_threads(threads)?;
            let cfg = load(&config)?;
            let (key, values) = match (key, values, &cfg.sweep) {
                (Some(k), Some(v), _) => (k, v),
                (k, v, Some(s)) => (k.unwrap_or_else(|| s.key.clone()), v.unwrap_or_else(|| s.values.clone())),
                _ => return Err(Error::invalid("sweep", "pass --key and --values or add a [sweep] section")),
            };
            let values: Vec<String> = values
                .split(',')
                .map(|v| v.trim().to_string())
                .filter(|v| !v.is_empty())
                .collect();
            let dir = out_dir(out, &cfg)?;
            let rows = experiment::run_sweep(&cfg, &key, &values, &dir)?;
            print!("{}", fs::read_to_string(dir.join("sweep.csv")).map_err(|e| Error::io(&dir, e))?);
            eprintln!("{} sweep points written to {}", rows.len(), dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
