use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod config;
mod run;
mod scenarios;

use config::ScenarioConfig;
use run::{run_scenario, RunOptions};

#[derive(Parser)]
#[command(name = "spinqe", version, about = "Scenario runner for semiclassical spin-1/2 diagnostics")]
struct Cli {
    /// Worker threads for the numerical stages.
    #[arg(long, global = true, env = "SPINQE_THREADS")]
    threads: Option<usize>,
    /// Treat under-resolved quantizations and untrusted parameters as errors.
    #[arg(long, global = true)]
    strict: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct Source {
    /// Scenario file (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Bundled scenario id, see `list-scenarios`.
    #[arg(long)]
    scenario: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a scenario and write its artifacts.
    Run {
        #[command(flatten)]
        source: Source,
        /// Output directory; defaults to the config's `output_dir` or `out/<name>`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parse and schema-check a scenario without running it.
    Validate {
        #[command(flatten)]
        source: Source,
    },
    /// Print the bundled scenarios.
    ListScenarios,
}

enum Failure {
    Invalid(Vec<String>),
    Runtime(String),
}

fn load(source: &Source) -> Result<ScenarioConfig, Failure> {
    let text = match (&source.config, &source.scenario) {
        (Some(path), _) => std::fs::read_to_string(path)
            .map_err(|e| Failure::Runtime(format!("cannot read {}: {e}", path.display())))?,
        (None, Some(id)) => scenarios::find(id)
            .ok_or_else(|| Failure::Invalid(vec![format!("scenario: no bundled scenario `{id}`")]))?
            .text
            .to_string(),
        (None, None) => unreachable!("clap enforces a source"),
    };
    let cfg = config::parse(&text).map_err(|e| Failure::Invalid(vec![e]))?;
    let issues = cfg.validate();
    if !issues.is_empty() {
        return Err(Failure::Invalid(issues.iter().map(|i| i.to_string()).collect()));
    }
    Ok(cfg)
}

fn execute(cli: Cli) -> Result<bool, Failure> {
    match cli.command {
        Command::ListScenarios => {
            for (id, description) in scenarios::listing() {
                println!("{id:<24} {description}");
            }
            Ok(true)
        }
        Command::Validate { source } => {
            let cfg = load(&source)?;
            println!("{}: valid", cfg.name);
            Ok(true)
        }
        Command::Run { source, out } => {
            let cfg = load(&source)?;
            let out = out
                .or_else(|| cfg.output_dir.clone())
                .unwrap_or_else(|| PathBuf::from("out").join(&cfg.name));
            let opts = RunOptions { out, strict: cli.strict };
            let outcome = run_scenario(&cfg, &opts).map_err(|e| Failure::Runtime(e.to_string()))?;
            for c in &outcome.checks {
                println!(
                    "{} {}/{}: {:e} ({})",
                    if c.pass { "PASS" } else { "FAIL" },
                    c.stage,
                    c.name,
                    c.value,
                    c.requirement
                );
            }
            println!("{} files written to {}", outcome.artifacts.len(), outcome.out.display());
            Ok(outcome.passed())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(1);
        }
    }
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: acceptance checks failed");
            ExitCode::from(1)
        }
        Err(Failure::Invalid(issues)) => {
            for i in issues {
                eprintln!("error: {i}");
            }
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
