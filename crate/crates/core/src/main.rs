use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use nmzi::detection::{power_spectrum, DetectorRecord};
use nmzi::scenario::{self, NoiseConfig, PRESETS};
use nmzi::Error;

#[derive(Parser)]
#[command(name = "nmzi", version, about = "Nested Mach-Zehnder weak-trace simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a preset or a TOML scenario file and write all outputs.
    Run {
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Seed for the additive channel noise.
        #[arg(long)]
        seed: Option<u64>,
        /// Standard deviation of additive channel noise.
        #[arg(long)]
        noise: Option<f64>,
    },
    /// Print the preset scenario names.
    ListScenarios,
    /// Recompute a spectrum from an existing series.csv.
    Spectrum {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Usage(_) | Error::Config { .. } | Error::Parse(_) => 2,
        _ => 1,
    }
}

fn execute(cmd: Command) -> nmzi::Result<()> {
    match cmd {
        Command::ListScenarios => {
            for p in PRESETS {
                println!("{p}");
            }
        }
        Command::Run {
            scenario: name,
            samples,
            threshold,
            out,
            seed,
            noise,
        } => {
            let mut cfg = scenario::load(&name)?;
            if let Some(n) = samples {
                cfg.n_samples = n;
            }
            if let Some(r) = threshold {
                cfg.threshold_ratio = r;
            }
            if let Some(o) = out {
                cfg.output_dir = Some(o);
            }
            if let Some(sigma) = noise {
                let seed = seed.or(cfg.noise.map(|n| n.seed)).unwrap_or(0);
                cfg.noise = Some(NoiseConfig { sigma, seed });
            } else if let Some(s) = seed {
                match cfg.noise.as_mut() {
                    Some(n) => n.seed = s,
                    None => eprintln!("warning: --seed has no effect without noise"),
                }
            }
            let outputs = scenario::run(&cfg)?;
            for v in &outputs.results.verdicts {
                println!(
                    "{} {:?} f={} peak={:.3e} floor={:.3e} {}",
                    v.mirror,
                    v.axis,
                    v.frequency,
                    v.peak,
                    v.noise_floor,
                    if v.present { "present" } else { "absent" }
                );
            }
            println!("wrote {}", outputs.dir.display());
        }
        Command::Spectrum { input, out } => {
            let rec = DetectorRecord::read_csv(fs::File::open(&input)?)?;
            power_spectrum(&rec).write_csv(fs::File::create(&out)?)?;
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
            if exit_code(&e) == 2 {
                eprintln!(
                    "usage: nmzi run --scenario <preset|path> [--samples N] [--threshold R] [--out DIR] [--seed S]\n       nmzi list-scenarios\n       nmzi spectrum --input series.csv --out spectrum.csv"
                );
            }
            ExitCode::from(exit_code(&e))
        }
    }
}
