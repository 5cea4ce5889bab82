use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rlsdp_core::Method;
use rlsdp_experiments::{run_dpp_sweep_with, run_mae_table_with, run_mixture_sweep_with, Result, SweepSpec};

#[derive(Debug, Parser)]
#[command(name = "rlsdp-experiments", version, about = "Sweeps on simulated populations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Accuracy and posterior spread against data per participant.
    SweepDpp(Overrides),
    /// SWA against HMC confidence MAE and runtime per DPP bin.
    MaeTable(Overrides),
    /// SWA accuracy as the agreement share of a fixed budget varies.
    SweepMixture(Overrides),
    /// Print the default spec file.
    DefaultSpec,
}

/// Flags override the sweep file key of the same name.
#[derive(Debug, Args)]
struct Overrides {
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<Method>>,
    #[arg(long, value_delimiter = ',')]
    fractions: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    ratios: Option<Vec<f64>>,
    /// Suppress per-job progress lines.
    #[arg(long)]
    quiet: bool,
}

impl Overrides {
    fn resolve(&self) -> Result<SweepSpec> {
        let mut spec = match &self.spec {
            Some(path) => SweepSpec::load(path)?,
            None => SweepSpec::default(),
        };
        if let Some(out) = &self.out {
            spec.out = out.clone();
        }
        if let Some(r) = self.replicates {
            spec.replicates = r;
        }
        if let Some(t) = self.threads {
            spec.threads = Some(t);
        }
        if let Some(seed) = self.seed {
            spec.population.seed = seed;
        }
        if let Some(m) = &self.methods {
            spec.methods = m.clone();
        }
        if let Some(f) = &self.fractions {
            spec.fractions = f.clone();
        }
        if let Some(r) = &self.ratios {
            spec.ratios = r.clone();
        }
        spec.validate()?;
        Ok(spec)
    }
}

fn run(command: Command) -> Result<()> {
    let (kind, args) = match command {
        Command::DefaultSpec => {
            print!("{}", SweepSpec::default().to_toml_string()?);
            return Ok(());
        }
        Command::SweepDpp(a) => (0, a),
        Command::MaeTable(a) => (1, a),
        Command::SweepMixture(a) => (2, a),
    };
    let spec = args.resolve()?;
    let quiet = args.quiet;
    let progress = move |line: &str| {
        if !quiet {
            eprintln!("{line}");
        }
    };
    let out = spec.out.clone();
    let failed = match kind {
        0 => {
            let outcome = run_dpp_sweep_with(&spec, &progress)?;
            outcome.write(&out)?;
            outcome.failed_rows()
        }
        1 => {
            let outcome = run_mae_table_with(&spec, &progress)?;
            outcome.write(&out)?;
            for row in outcome.table() {
                eprintln!(
                    "dpp {:>4.1}-{:<4.1} runs {:>3}  swa {:>7.2}s  hmc {:>7.2}s  mae {:.3e}",
                    row.dpp_lo, row.dpp_hi, row.n_runs, row.swa_runtime_seconds, row.hmc_runtime_seconds, row.mae
                );
            }
            outcome.sweep.failed_rows()
        }
        _ => {
            let outcome = run_mixture_sweep_with(&spec, &progress)?;
            outcome.write(&out)?;
            outcome.failed_rows()
        }
    };
    if failed > 0 {
        eprintln!("{failed} rows failed; see the error column of raw.csv");
    }
    eprintln!("wrote {}", out.display());
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
