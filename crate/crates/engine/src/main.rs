use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rlsdp_core::Method;
use rlsdp_engine::{read_log_file, Engine, EngineConfig, EngineError};
use tracing_subscriber::EnvFilter;

#[derive(Debug, Parser)]
#[command(name = "rlsdp-engine", version, about = "Live dialogue-cycle engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the HTTP and WebSocket service.
    Serve(ServeArgs),
    /// Rebuild state from an event log and print a summary of every cycle.
    Replay {
        #[arg(long)]
        log: PathBuf,
        /// Also write the reconstructed state as JSON.
        #[arg(long)]
        state_out: Option<PathBuf>,
    },
    /// Print the default configuration file.
    DefaultConfig,
}

/// Every flag overrides the config-file key of the same name.
#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    bind: Option<String>,
    #[arg(long)]
    port: Option<u16>,
    #[arg(long, alias = "log_path")]
    log_path: Option<PathBuf>,
    #[arg(long)]
    method: Option<Method>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long, alias = "bias_prior_std")]
    bias_prior_std: Option<f64>,
    #[arg(long, alias = "agree_ratio")]
    agree_ratio: Option<f64>,
    #[arg(long, alias = "allow_self_votes")]
    allow_self_votes: Option<bool>,
    #[arg(long, alias = "auto_close_secs")]
    auto_close_secs: Option<f64>,
}

impl ServeArgs {
    fn resolve(self) -> Result<EngineConfig, EngineError> {
        let mut config = match &self.config {
            Some(path) => EngineConfig::load(path)?,
            None => EngineConfig::default(),
        };
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(value) = self.$field {
                    config.$field = value.into();
                }
            )*};
        }
        set!(
            bind,
            port,
            log_path,
            method,
            seed,
            agree_ratio,
            allow_self_votes,
            auto_close_secs
        );
        if let Some(tau) = self.tau {
            config.model.tau = Some(tau);
        }
        if let Some(std) = self.bias_prior_std {
            config.model.bias_prior_std = Some(std);
        }
        config.validate()?;
        Ok(config)
    }
}

fn replay(log: PathBuf, state_out: Option<PathBuf>) -> Result<(), EngineError> {
    let records = read_log_file(&log)?;
    let engine = Engine::replay(Default::default(), records)?;
    let state = engine.state();
    println!("{} records, {} cycles", state.last_seq, state.cycles.len());
    for cycle in &state.cycles {
        let counts = cycle.counts();
        println!(
            "cycle {} [{}] responses={} participants={} votes={} {:?}",
            cycle.cycle_id,
            cycle.phase,
            counts.responses,
            counts.participants,
            counts.agreement_votes + counts.pair_votes,
            cycle.question
        );
        if let Some(result) = &cycle.result {
            for row in result.rows.iter().take(5) {
                println!(
                    "  {:>6.3} ± {:.3}  #{} {}",
                    row.mean_agreement, row.std_agreement, row.response_id, row.text
                );
            }
        }
    }
    if let Some(path) = state_out {
        std::fs::write(path, state.to_canonical_json()?)?;
    }
    Ok(())
}

#[tokio::main]
async fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(std::io::stderr)
        .init();
    let outcome = match Cli::parse().command {
        Command::Serve(args) => match args.resolve() {
            Ok(config) => rlsdp_engine::server::serve(config).await,
            Err(err) => Err(err),
        },
        Command::Replay { log, state_out } => replay(log, state_out),
        Command::DefaultConfig => EngineConfig::default().to_toml_string().map(|text| print!("{text}")),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::FAILURE
        }
    }
}
