use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use overlay_heal::config::{self, ConfigError};
use overlay_heal::harness::{run_experiment, write_outputs};
use overlay_heal::scenario::{scenario, SCENARIOS};
use overlay_heal::{Error, Execution, ExperimentConfig, ProtocolKind};

#[derive(Parser)]
#[command(name = "overlay-heal", version, about = "Simulate overlay maintenance protocols under churn")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run a preconfigured scenario.
    Scenario {
        name: String,
        #[command(flatten)]
        common: Common,
    },
    /// List scenario names.
    List,
    /// Print the fully resolved config without running it.
    Show {
        #[arg(long, conflicts_with = "scenario")]
        config: Option<PathBuf>,
        #[arg(long)]
        scenario: Option<String>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
}

#[derive(Args)]
struct Common {
    /// Output directory.
    #[arg(long, env = "OVERLAY_HEAL_OUT", default_value = "out")]
    out: PathBuf,
    /// Base seed; replicate i uses seed + i.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replicates: Option<u64>,
    /// Restrict to these protocols (repeatable).
    #[arg(long)]
    protocol: Vec<ProtocolKind>,
    /// Override any config key, e.g. `--set topology.gamma=0.1`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Run replicates one after another.
    #[arg(long)]
    sequential: bool,
}

impl Common {
    fn all_overrides(&self) -> Vec<String> {
        let mut all = self.overrides.clone();
        if let Some(s) = self.seed {
            all.push(format!("base_seed={s}"));
        }
        if let Some(r) = self.replicates {
            all.push(format!("replicates={r}"));
        }
        if !self.protocol.is_empty() {
            let names: Vec<String> = self.protocol.iter().map(|p| format!("\"{p}\"")).collect();
            all.push(format!("protocols=[{}]", names.join(",")));
        }
        all
    }
}

fn execute(cfg: &ExperimentConfig, common: &Common) -> Result<(), Error> {
    let out = &common.out;
    std::fs::create_dir_all(out).map_err(|e| Error::io(format!("cannot create {}", out.display()), e))?;
    write_resolved(out, cfg)?;
    let exec = if common.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    let (runs, report) = run_experiment(cfg, exec)?;
    write_outputs(out, &runs, &report)?;
    for p in &report.protocols {
        let frac = p.summary[1];
        eprintln!(
            "{:>5}: main component {:.3} ± {:.3}, {} runs, {} divergent",
            p.protocol, frac.mean, frac.std, p.runs, p.divergent_runs
        );
    }
    eprintln!("wrote {} run files to {}", runs.len(), out.display());
    Ok(())
}

fn write_resolved(out: &Path, cfg: &ExperimentConfig) -> Result<(), Error> {
    let path = out.join("resolved_config.toml");
    std::fs::write(&path, config::to_toml_string(cfg))
        .map_err(|e| Error::io(format!("cannot write {}", path.display()), e))
}

fn resolve_scenario(name: &str, overrides: &[String]) -> Result<ExperimentConfig, ConfigError> {
    config::resolve(config::to_document(&scenario(name)?), overrides)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config: path, common } => config::load(&path, &common.all_overrides())
            .map_err(Error::from)
            .and_then(|cfg| execute(&cfg, &common)),
        Command::Scenario { name, common } => resolve_scenario(&name, &common.all_overrides())
            .map_err(Error::from)
            .and_then(|cfg| execute(&cfg, &common)),
        Command::List => {
            for name in SCENARIOS {
                println!("{name}");
            }
            Ok(())
        }
        Command::Show {
            config: path,
            scenario: name,
            overrides,
        } => {
            let cfg = match (path, name) {
                (Some(p), _) => config::load(&p, &overrides),
                (None, Some(n)) => resolve_scenario(&n, &overrides),
                (None, None) => config::resolve(toml::Table::new(), &overrides),
            };
            cfg.map(|c| print!("{}", config::to_toml_string(&c))).map_err(Error::from)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let Error::Config(ConfigError::UnknownScenario { .. }) = e {
                eprintln!("usage: overlay-heal scenario <NAME> [--out DIR]");
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
