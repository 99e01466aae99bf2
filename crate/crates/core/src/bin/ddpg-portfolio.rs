use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ddpg_portfolio::app::{self, AppError, RunConfig};

/// DDPG portfolio management: data ingestion, training, backtesting and
/// comparison against classical online portfolio-selection strategies.
#[derive(Debug, Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse and align the input data into the panel cache.
    Ingest(Common),
    /// Train the agent on the training window.
    Train(Common),
    /// Roll the trained agent greedily over the backtest window.
    Backtest(Common),
    /// Run the agent and every baseline; write the report, curves and plot.
    Compare(Common),
    /// Rebuild the report and plot from existing curves.
    Report(Common),
}

#[derive(Debug, Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Master seed (overrides `run.seed`).
    #[arg(long)]
    seed: Option<u64>,
    /// Charge transaction costs.
    #[arg(long, overrides_with = "no_cost")]
    cost: bool,
    /// Trade without transaction costs.
    #[arg(long = "no-cost", overrides_with = "cost")]
    no_cost: bool,
    /// Output directory (overrides `run.out_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Config override `key.path=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Further overrides written as `--key.path=value`.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, hide = true)]
    extra: Vec<String>,
}

impl Common {
    fn config(&self) -> Result<RunConfig, AppError> {
        let mut overrides = self.set.clone();
        for e in &self.extra {
            if !e.starts_with("--") || !e.contains('=') {
                return Err(AppError::Config(format!("unexpected argument `{e}`; overrides look like --key.path=value")));
            }
            overrides.push(e.clone());
        }
        if let Some(seed) = self.seed {
            overrides.push(format!("run.seed={seed}"));
        }
        if self.cost {
            overrides.push("env.cost_enabled=true".into());
        }
        if self.no_cost {
            overrides.push("env.cost_enabled=false".into());
        }
        let mut config = RunConfig::load(&self.config, &overrides)?;
        if let Some(out) = &self.out {
            config.run.out_dir = out.clone();
        }
        Ok(config)
    }
}

fn run(cli: Cli) -> Result<(), AppError> {
    match cli.command {
        Command::Ingest(c) => {
            let summary = app::cmd_ingest(&c.config()?)?;
            println!("{summary}");
        }
        Command::Train(c) => {
            let s = app::cmd_train(&c.config()?)?;
            println!(
                "trained {} epochs on rows {}..={}; last episode reward sum {}",
                s.epochs,
                s.rows.start,
                s.rows.end,
                s.last_reward_sum.map_or("n/a".to_string(), |r| format!("{r:.2}"))
            );
        }
        Command::Backtest(c) => {
            let s = app::cmd_backtest(&c.config()?)?;
            println!(
                "{} points, final value {:.2}, total transaction cost {:.2} -> {}",
                s.points,
                s.final_value,
                s.total_cost,
                s.file.display()
            );
        }
        Command::Compare(c) => print!("{}", app::cmd_compare(&c.config()?)?.to_text()),
        Command::Report(c) => print!("{}", app::cmd_report(&c.config()?)?.to_text()),
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
