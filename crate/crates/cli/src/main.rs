use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use piezobeam_cli::{
    analyze_run_dir, compare_runs, load_config, run_kernel_validation, run_scenario, CliError, Outcome, ScenarioConfig,
    Tolerances,
};

#[derive(Parser)]
#[command(name = "piezobeam", version, about = "Simulate and analyse a fractionally damped piezoelectric beam")]
struct Cli {
    /// Directory that relative output directories are placed under.
    #[arg(long, global = true, env = "PIEZOBEAM_OUTPUT_ROOT")]
    output_root: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and its requested analyses.
    Run {
        /// Scenario config (JSON). Omit to use the defaults.
        config: Option<PathBuf>,
        /// Override the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a config without running it.
    Check { config: PathBuf },
    /// Run only the kernel oracle suite and write the node tables.
    ValidateKernel {
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-check an existing run directory from its energy log.
    Analyze { run_dir: PathBuf },
    /// Compare the energy logs of two run directories.
    Compare {
        run_a: PathBuf,
        run_b: PathBuf,
        #[arg(long, default_value_t = Tolerances::default().abs)]
        abs_tol: f64,
        #[arg(long, default_value_t = Tolerances::default().rel)]
        rel_tol: f64,
    },
}

fn load(path: Option<&Path>, out: Option<PathBuf>) -> Result<(ScenarioConfig, PathBuf), CliError> {
    let (mut cfg, base) = match path {
        Some(p) => (load_config(p)?, p.parent().unwrap_or(Path::new(".")).to_path_buf()),
        None => (ScenarioConfig::default(), PathBuf::from(".")),
    };
    if let Some(o) = out {
        cfg.output_dir = o;
    }
    Ok((cfg, base))
}

fn summarize(outcome: &Outcome) -> i32 {
    for c in &outcome.report.checks {
        println!("{} {}: {}", if c.passed { "ok  " } else { "FAIL" }, c.name, c.detail);
    }
    println!("results in {}", outcome.output_dir.display());
    outcome.exit_code()
}

fn execute(cli: Cli) -> Result<i32, CliError> {
    let root = cli.output_root.as_deref();
    match cli.command {
        Command::Run { config, out } => {
            let (cfg, base) = load(config.as_deref(), out)?;
            Ok(summarize(&run_scenario(&cfg, &base, root)?))
        }
        Command::Check { config } => {
            load_config(&config)?;
            println!("{}: valid", config.display());
            Ok(0)
        }
        Command::ValidateKernel { config, out } => {
            let (cfg, base) = load(config.as_deref(), out)?;
            Ok(summarize(&run_kernel_validation(&cfg, &base, root)?))
        }
        Command::Analyze { run_dir } => Ok(summarize(&analyze_run_dir(&run_dir)?)),
        Command::Compare {
            run_a,
            run_b,
            abs_tol,
            rel_tol,
        } => {
            let cmp = compare_runs(&run_a, &run_b, Tolerances { abs: abs_tol, rel: rel_tol })?;
            println!("{}", serde_json::to_string_pretty(&cmp).map_err(|e| CliError::Io(e.to_string()))?);
            Ok(if cmp.within_tolerance { 0 } else { 1 })
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
