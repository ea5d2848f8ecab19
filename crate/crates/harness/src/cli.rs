//! The `fbm-mdp` command line.

use clap::{Parser, Subcommand};
use crate::config::{validate_config, ExperimentConfig, Severity};
use crate::error::HarnessError;
use crate::manifest::run_experiment;
use crate::registry::list_experiments;
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "fbm-mdp", about = "Run fBm moderate-deviation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment from a config file or by name.
    Run {
        #[arg(long, conflicts_with = "experiment")]
        config: Option<PathBuf>,
        #[arg(long)]
        experiment: Option<String>,
        /// Override a config key, e.g. `--set n_paths=200`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        sets: Vec<String>,
    },
    /// List registered experiments.
    List,
    /// Check a config file without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn load(path: &PathBuf) -> Result<ExperimentConfig, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Config(vec![format!("{}: {e}", path.display())]))?;
    ExperimentConfig::from_json(&text)
}

fn init_threads() {
    if let Some(n) = std::env::var("FBM_MDP_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::List => print!("{}", list_experiments()),
        Command::Validate { config } => {
            let c = load(&config)?;
            let violations = validate_config(&c);
            for v in &violations {
                println!("{:?}: {}", v.severity, v.message);
            }
            let errors: Vec<String> =
                violations.into_iter().filter(|v| v.severity == Severity::Error).map(|v| v.message).collect();
            if !errors.is_empty() {
                return Err(HarnessError::Config(errors));
            }
            println!("ok");
        }
        Command::Run { config, experiment, sets } => {
            let mut c = match (config, experiment) {
                (Some(path), _) => load(&path)?,
                (None, Some(name)) => ExperimentConfig::defaults(&name)?,
                (None, None) => return Err(HarnessError::Config(vec!["need --config or --experiment".into()])),
            };
            for s in &sets {
                c.set(s)?;
            }
            init_threads();
            let manifest = run_experiment(&c)?;
            for w in &manifest.warnings {
                eprintln!("warning: {w}");
            }
            println!("{}", manifest.to_json());
        }
    }
    Ok(())
}

/// Runs the command line and returns the process exit code: 0 on success,
/// 2 for an invalid config, 3 for a numerical failure.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_config(dir: &std::path::Path, json: &str) -> String {
        let p = dir.join("config.json");
        std::fs::write(&p, json).unwrap();
        p.to_string_lossy().into_owned()
    }

    #[test]
    fn exit_codes() {
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(run_from(["fbm-mdp", "list"]), 0);
        let good = write_config(dir.path(), r#"{"experiment": "exp-rate-endpoint", "alpha": 0.3}"#);
        assert_eq!(run_from(["fbm-mdp", "validate", "--config", &good]), 0);
        let bad = write_config(dir.path(), r#"{"experiment": "exp-rate-endpoint", "alpha": 0.2}"#);
        assert_eq!(run_from(["fbm-mdp", "validate", "--config", &bad]), 2);
        assert_eq!(run_from(["fbm-mdp", "run", "--config", &bad]), 2);
        assert_eq!(run_from(["fbm-mdp", "run", "--experiment", "exp-nope"]), 2);
        assert_eq!(run_from(["fbm-mdp", "frobnicate"]), 2);
    }

    #[test]
    fn run_writes_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("rate");
        let set = format!("output_dir={}", out.display());
        assert_eq!(run_from(["fbm-mdp", "run", "--experiment", "exp-rate-endpoint", "--set", "M=32", "--set", &set]), 0);
        let manifest: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
        assert_eq!(manifest["outputs"][0]["file"], "rate_endpoint.csv");
        assert!(out.join("rate_endpoint.csv").exists());
    }

    #[test]
    fn numerical_failure_exit_code() {
        let dir = tempfile::tempdir().unwrap();
        let set = format!("output_dir={}", dir.path().display());
        // Delta = 0.3 is no multiple of the grid step
        let code = run_from([
            "fbm-mdp", "run", "--experiment", "exp-khasminskii-delta", "--set", "n_paths=2", "--set", "Delta=0.3", "--set", &set,
        ]);
        assert_eq!(code, 3);
    }
}
