use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use structcf::io::{emit_csv, human_table, run_scenario, simulate_data, ScenarioConfig, Task};
use structcf::Error;

#[derive(Parser)]
#[command(
    name = "structcf",
    version,
    about = "Structural counterfactuals from impulse responses"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a specified model and write data.csv with instrument columns.
    Simulate(Common),
    /// SVAR-IV impulse responses with wild-bootstrap intervals.
    EstimateIrf(Common),
    /// Hypothetical-path or intervention counterfactuals from estimated IRFs.
    Counterfactual(Common),
    /// Historical or future scenario in a structural model.
    Scenario(Common),
    /// Simulated zeroing-out policy intervention.
    Intervene(Common),
}

#[derive(Args)]
struct Common {
    /// Scenario configuration file.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    level: Option<f64>,
    /// Directory for the CSV report; without it only the text table is printed.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

impl Command {
    fn parts(&self) -> (&Common, &'static [Task]) {
        match self {
            Command::Simulate(c) => (c, &[Task::Simulate]),
            Command::EstimateIrf(c) => (c, &[Task::EstimateIrf]),
            Command::Counterfactual(c) => (c, &[Task::EstimateCounterfactual]),
            Command::Scenario(c) => (c, &[Task::Historical, Task::Future]),
            Command::Intervene(c) => (c, &[Task::Intervention]),
        }
    }
}

fn run(cli: &Cli) -> Result<(), Error> {
    let (common, allowed) = cli.command.parts();
    let mut cfg = ScenarioConfig::load(&common.config)?;
    if !allowed.contains(&cfg.task) {
        let names: Vec<&str> = allowed.iter().map(|t| t.as_str()).collect();
        return Err(Error::Config(format!(
            "config task {} does not match this subcommand (expects {})",
            cfg.task.as_str(),
            names.join(" or ")
        )));
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(h) = common.horizon {
        cfg.horizon = h;
    }
    if let Some(l) = common.level {
        cfg.level = l;
    }
    cfg.validate()?;
    if cfg.task == Task::Simulate {
        let dir = common.out_dir.clone().unwrap_or_else(|| PathBuf::from("."));
        std::fs::create_dir_all(&dir).map_err(|e| Error::Io {
            path: dir.display().to_string(),
            source: e,
        })?;
        let table = simulate_data(&cfg)?;
        let path = dir.join("data.csv");
        table.save(&path)?;
        println!(
            "wrote {} ({} periods, columns {})",
            path.display(),
            table.time.len(),
            table.names.join(",")
        );
        return Ok(());
    }
    let bundle = run_scenario(&cfg)?;
    // A closed pipe downstream is not an error.
    let _ = std::io::stdout().write_all(human_table(&bundle).as_bytes());
    if let Some(dir) = &common.out_dir {
        for f in emit_csv(&bundle, dir)? {
            eprintln!("wrote {}", f.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
    }
}
