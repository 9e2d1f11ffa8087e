use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use qbound::boundary::PRESET_NAMES;
use qbound::scenarios::{default_output_dir, parse_config, run_scenario_in, ScenarioConfig, DEFAULT_OUTPUT_BASE};

#[derive(Parser)]
#[command(name = "qbound", version, about = "Boundary-unitary spectra, spectral flow and dynamics")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Output directory (overrides the config's `output`)
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Seed for randomized sweeps (overrides the config's `seed`)
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario config
    Run { config: PathBuf },
    /// List boundary condition presets
    Presets,
    /// Validate a config without running it
    Check { config: PathBuf },
}

fn load(path: &PathBuf, seed: Option<u64>) -> Result<ScenarioConfig, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut cfg = parse_config(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    if seed.is_some() {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Presets => {
            for (name, what) in PRESET_NAMES {
                println!("{name:<16} {what}");
            }
            ExitCode::SUCCESS
        }
        Command::Check { config } => match load(&config, cli.seed) {
            Ok(cfg) => {
                if !cli.quiet {
                    println!("{}", serde_json::to_string_pretty(&cfg).expect("config serializes"));
                }
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(2)
            }
        },
        Command::Run { config } => {
            let cfg = match load(&config, cli.seed) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            let base = std::env::var_os("QBOUND_OUT").map_or_else(|| PathBuf::from(DEFAULT_OUTPUT_BASE), PathBuf::from);
            let dir = cli.out.clone().unwrap_or_else(|| default_output_dir(&cfg, &base));
            let report = match run_scenario_in(&cfg, &dir) {
                Ok(r) => r,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::FAILURE;
                }
            };
            if !cli.quiet {
                println!("{} -> {}", cfg.scenario.name(), dir.display());
                for c in &report.checks {
                    println!("  [{}] {} = {:.3e} (limit {:.1e})", if c.pass { "ok" } else { "FAIL" }, c.name, c.value, c.limit);
                }
                for (phase, secs) in &report.timings {
                    println!("  {phase}: {secs:.2}s");
                }
            }
            if report.pass {
                ExitCode::SUCCESS
            } else {
                for c in report.failed_checks() {
                    eprintln!("check failed: {} = {:e} (limit {:e})", c.name, c.value, c.limit);
                }
                ExitCode::FAILURE
            }
        }
    }
}
