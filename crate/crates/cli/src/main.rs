use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use qkdsim_core::scenario::{
    builtin, builtin_names, load_config, parse_override, run_replications, validate, GateDirection, ScenarioConfig,
    ScenarioError, KINDS,
};

/// Discrete-event QKD optics simulator.
#[derive(Parser)]
#[command(name = "qkdsim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file or a shipped scenario by name.
    Run {
        config: String,
        /// Master seed, replacing `run.seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Replication count, replacing `run.replications`.
        #[arg(long)]
        reps: Option<u32>,
        /// Output directory; defaults to `run.output_dir`, then `out/<name>`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the per-event trace.csv.
        #[arg(long)]
        trace: bool,
        /// `key=value` applied to the parsed JSON; repeatable.
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Check a scenario and report every problem found.
    Validate { config: String },
    /// List module kinds with their gates and properties.
    ListComponents,
}

fn load(config: &str, overrides: &[String]) -> Result<ScenarioConfig, ScenarioError> {
    let pairs = overrides.iter().map(|o| parse_override(o)).collect::<Result<Vec<_>, _>>()?;
    let path = Path::new(config);
    if !path.exists() {
        if let Some(cfg) = builtin(config) {
            return ScenarioConfig::from_json_with_overrides(&cfg.to_json(), &pairs);
        }
    }
    load_config(path, &pairs)
}

fn run(
    config: &str,
    seed: Option<u64>,
    reps: Option<u32>,
    out: Option<PathBuf>,
    trace: bool,
    overrides: &[String],
) -> Result<(), ScenarioError> {
    let mut cfg = load(config, overrides)?;
    if let Some(s) = seed {
        cfg.run.seed = s;
    }
    if let Some(n) = reps {
        cfg.run.replications = n;
    }
    cfg.run.trace |= trace;
    let dir = out
        .or_else(|| cfg.run.output_dir.clone().map(PathBuf::from))
        .unwrap_or_else(|| Path::new("out").join(&cfg.name));
    let (summaries, agg) = run_replications(&cfg, cfg.run.replications, Some(&dir))?;
    let shown = if summaries.len() == 1 {
        serde_json::to_string_pretty(&summaries[0])
    } else {
        serde_json::to_string_pretty(&agg)
    };
    println!("{}", shown.expect("serializable"));
    eprintln!("outputs in {}", dir.display());
    Ok(())
}

fn check(config: &str) -> Result<(), ScenarioError> {
    let cfg = load(config, &[])?;
    let plan = validate(&cfg).map_err(ScenarioError::Invalid)?;
    println!(
        "{}: ok, {} modules, {} connections, {} slots",
        cfg.name,
        plan.modules.len(),
        plan.connections.len(),
        plan.pulses
    );
    Ok(())
}

fn list_components() {
    for k in KINDS {
        println!("{}: {}", k.name, k.summary);
        let gates: Vec<String> = k
            .gates
            .iter()
            .map(|g| {
                let dir = match g.direction {
                    GateDirection::In => "in",
                    GateDirection::Out => "out",
                };
                if g.count > 1 {
                    format!("{}[{}] ({dir})", g.name, g.count)
                } else {
                    format!("{} ({dir})", g.name)
                }
            })
            .collect();
        println!("  gates: {}", gates.join(", "));
        if !k.properties.is_empty() {
            println!("  properties: {}", k.properties.join(", "));
        }
    }
    println!("shipped scenarios: {}", builtin_names().collect::<Vec<_>>().join(", "));
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            seed,
            reps,
            out,
            trace,
            overrides,
        } => run(&config, seed, reps, out, trace, &overrides),
        Command::Validate { config } => check(&config),
        Command::ListComponents => {
            list_components();
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config_error() { 1 } else { 2 })
        }
    }
}
