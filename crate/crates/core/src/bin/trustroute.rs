use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use trustroute::harness::{
    cmd_evaluate, cmd_export, cmd_optimize, cmd_simulate, exit_code, Overrides, RunConfig, EXIT_CONFIG,
};

#[derive(Parser)]
#[command(name = "trustroute", version, about = "Trust-weighted routing over agent pools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Learn trust from a stream with ground truth.
    Optimize(Common),
    /// Answer a stream with frozen trust from a snapshot.
    Evaluate(Common),
    /// Run the seeded ablation and size sweep on a simulated pool.
    Simulate(Common),
    /// Dump a snapshot's score table as CSV.
    Export(Common),
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Query stream (JSON lines).
    #[arg(long)]
    stream: Option<PathBuf>,
    #[arg(long)]
    snapshot_in: Option<PathBuf>,
    #[arg(long)]
    snapshot_out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    parallelism: Option<usize>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

impl Common {
    fn load(self) -> trustroute::Result<RunConfig> {
        let mut cfg = RunConfig::load(&self.config)?;
        cfg.apply(Overrides {
            stream: self.stream,
            snapshot_in: self.snapshot_in,
            snapshot_out: self.snapshot_out,
            seed: self.seed,
            parallelism: self.parallelism,
            out_dir: self.out_dir,
        });
        Ok(cfg)
    }
}

fn run(cli: Cli) -> trustroute::Result<String> {
    match cli.command {
        Command::Optimize(c) => cmd_optimize(&c.load()?).map(|s| s.render()),
        Command::Evaluate(c) => cmd_evaluate(&c.load()?).map(|r| r.render()),
        Command::Simulate(c) => cmd_simulate(&c.load()?).map(|r| r.render()),
        Command::Export(c) => cmd_export(&c.load()?).map(|p| format!("wrote {}\n", p.display())),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG } else { 0 });
        }
    };
    match run(cli) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
