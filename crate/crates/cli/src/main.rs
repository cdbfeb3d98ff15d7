//! `mckv`: criteria, solvers and particle runs driven by JSON scenarios.
//!
//! Exit status: 0 success, 1 configuration error, 2 blow-up detected
//! (as expected), 3 tolerance failure.

mod bundled;
mod config;
mod runner;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use runner::{Mode, EXIT_CONFIG, EXIT_OK, EXIT_TOLERANCE};

#[derive(Parser)]
#[command(name = "mckv", version, about = "McKean-Vlasov default-contagion solvers")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "MCKV_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every section present in a scenario.
    Run(Common),
    /// Evaluate the blow-up and global-existence criteria.
    Criteria(Common),
    /// Run the linear-feedback solver.
    SolveLinear(Common),
    /// Run the log-feedback solver.
    SolveLog(Common),
    /// Run the particle system.
    Particles(Common),
    /// Run solver and particles and compare their loss paths.
    Compare(Common),
    /// Re-run a scenario over a list of values of one numeric field.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Field to vary: a model field name (`alpha`) or a dotted path
        /// (`initial.x0`).
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        values: Vec<f64>,
    },
    /// List the bundled scenarios.
    Scenarios,
    /// Print a bundled scenario.
    Show { name: String },
}

#[derive(Args)]
struct Common {
    /// Scenario file.
    #[arg(long, conflicts_with = "scenario", required_unless_present = "scenario")]
    config: Option<PathBuf>,
    /// Bundled scenario name.
    #[arg(long)]
    scenario: Option<String>,
    /// Artifact directory (overrides the scenario's `output`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Particle seed override.
    #[arg(long)]
    seed: Option<u64>,
}

struct Loaded {
    text: String,
    scenario: config::Scenario,
    base: PathBuf,
    out: PathBuf,
}

impl Common {
    fn load(&self) -> Result<Loaded> {
        let (mut text, base) = match (&self.config, &self.scenario) {
            (Some(path), _) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                (text, path.parent().map(Path::to_path_buf).unwrap_or_default())
            }
            (None, Some(name)) => match bundled::find(name) {
                Some(text) => (text.to_string(), PathBuf::from(".")),
                None => bail!("no bundled scenario named `{name}`"),
            },
            (None, None) => bail!("pass --config or --scenario"),
        };
        if let Some(seed) = self.seed {
            let mut doc: serde_json::Value = serde_json::from_str(&text).context("scenario is not valid JSON")?;
            if let Some(p) = doc.get_mut("particles").and_then(|p| p.as_object_mut()) {
                p.insert("seed".into(), seed.into());
            }
            text = doc.to_string();
        }
        let scenario = config::parse(&text)?;
        let out = self
            .out
            .clone()
            .or_else(|| scenario.output.clone())
            .unwrap_or_else(|| PathBuf::from("mckv-out").join(&scenario.name));
        Ok(Loaded { text, scenario, base, out })
    }
}

fn execute(cli: Cli) -> Result<u8> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring the thread pool")?;
    }
    let (common, mode) = match &cli.command {
        Command::Scenarios => {
            for (name, _) in bundled::SCENARIOS {
                println!("{name}");
            }
            return Ok(EXIT_OK);
        }
        Command::Show { name } => {
            print!("{}", bundled::find(name).with_context(|| format!("no bundled scenario named `{name}`"))?);
            return Ok(EXIT_OK);
        }
        Command::Sweep { common, param, values } => {
            let loaded = common.load()?;
            let rows = runner::sweep(&loaded.text, param, values, &loaded.base, Some(&loaded.out))?;
            let mut table = Vec::new();
            runner::sweep_csv(&rows, &mut table)?;
            std::fs::create_dir_all(&loaded.out)?;
            std::fs::write(loaded.out.join("sweep.csv"), &table)?;
            std::io::stdout().write_all(&table)?;
            for row in &rows {
                if let Err(e) = &row.report {
                    eprintln!("error at {param} = {}: {e:#}", row.value);
                }
            }
            let failed = rows.iter().any(|r| r.report.as_ref().map_or(true, |r| r.exit_code == EXIT_TOLERANCE));
            return Ok(if failed { EXIT_TOLERANCE } else { EXIT_OK });
        }
        Command::Run(c) => (c, Mode::All),
        Command::Criteria(c) => (c, Mode::Criteria),
        Command::SolveLinear(c) => (c, Mode::SolveLinear),
        Command::SolveLog(c) => (c, Mode::SolveLog),
        Command::Particles(c) => (c, Mode::Particles),
        Command::Compare(c) => (c, Mode::Compare),
    };
    let loaded = common.load()?;
    let report = runner::run(&loaded.scenario, mode, &loaded.base, Some(&loaded.out))?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    for f in &report.failures {
        eprintln!("tolerance failure: {f}");
    }
    Ok(report.exit_code)
}

fn main() -> ExitCode {
    // usage errors share the configuration-error status; 2 means blow-up
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK });
        }
    };
    match execute(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_CONFIG)
        }
    }
}
