//! Desk-scale sweeps on simulated populations: accuracy and posterior spread
//! against data per participant, SWA against HMC confidence and runtime, and
//! the agreement/pair-choice mixture.
//!
//! Sweep points run as independent jobs on a rayon pool. Their rows are sorted
//! on the provenance tuple before anything is written.

pub mod design;
pub mod error;
pub mod report;
pub mod runner;
pub mod spec;

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use rlsdp_core::{mae_between, Dataset, Method};

pub use design::{replicate_seed, DppDesign, MixtureDesign, World};
pub use error::{ExperimentError, Result};
pub use report::{
    bin_of, dpp_bins, runtime_table, summarize, summarize_bins, BinSummaryRow, MaeRow, Manifest, RunRow, Spread,
    SummaryRow, TableRow, TimingRow,
};
pub use runner::{fit_methods, truth_mae, Fit};
pub use spec::{default_fractions, default_ratios, SweepSpec};

/// Rows of a data-per-participant or mixture sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    pub command: String,
    pub spec: SweepSpec,
    pub rows: Vec<RunRow>,
    pub timings: Vec<TimingRow>,
}

/// Rows of the SWA against HMC comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct MaeOutcome {
    pub sweep: SweepOutcome,
    pub mae: Vec<MaeRow>,
}

impl SweepOutcome {
    pub fn summary(&self) -> Vec<SummaryRow> {
        summarize(&self.rows)
    }

    pub fn failed_rows(&self) -> usize {
        self.rows.iter().filter(|r| !r.error.is_empty()).count()
    }

    pub fn manifest(&self) -> Manifest {
        let seeds = (0..self.spec.replicates)
            .map(|r| replicate_seed(self.spec.population.seed, r))
            .collect();
        Manifest::new(&self.command, &self.spec, seeds, self.rows.len(), self.failed_rows())
    }

    /// Writes raw.csv, summary.csv, timing.csv and manifest.json into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        report::write_csv_file(&self.rows, dir.join("raw.csv"))?;
        report::write_csv_file(&self.summary(), dir.join("summary.csv"))?;
        report::write_csv_file(&self.timings, dir.join("timing.csv"))?;
        report::write_manifest(&self.manifest(), dir.join("manifest.json"))
    }
}

impl MaeOutcome {
    pub fn summary(&self) -> Vec<BinSummaryRow> {
        summarize_bins(&self.mae)
    }

    pub fn table(&self) -> Vec<TableRow> {
        runtime_table(&self.mae, &self.sweep.timings)
    }

    /// As [`SweepOutcome::write`], with per-run MAE in mae.csv, its per-bin
    /// spread in summary.csv and the runtime table in table.csv.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        report::write_csv_file(&self.sweep.rows, dir.join("raw.csv"))?;
        report::write_csv_file(&self.mae, dir.join("mae.csv"))?;
        report::write_csv_file(&self.summary(), dir.join("summary.csv"))?;
        report::write_csv_file(&self.table(), dir.join("table.csv"))?;
        report::write_csv_file(&self.sweep.timings, dir.join("timing.csv"))?;
        report::write_manifest(&self.sweep.manifest(), dir.join("manifest.json"))
    }
}

fn pool(spec: &SweepSpec) -> Result<rayon::ThreadPool> {
    Ok(rayon::ThreadPoolBuilder::new()
        .num_threads(spec.threads.unwrap_or(0))
        .build()?)
}

struct Point<'a> {
    experiment: &'a str,
    seed: u64,
    replicate: usize,
    fraction: f64,
    agree_ratio: f64,
}

fn std_range(values: &[f64]) -> (f64, f64, f64) {
    let s = Spread::of(values).expect("at least one response");
    (s.mean, s.min, s.max)
}

fn rows_for(
    point: &Point,
    train: &Dataset,
    holdout: &Dataset,
    truth: &[f64],
    fits: &[(Method, std::result::Result<Fit, String>)],
) -> (Vec<RunRow>, Vec<TimingRow>) {
    let n = train.n_participants();
    let pure_choice = !train.events().iter().any(|e| e.is_agreement());
    let mut rows = Vec::new();
    let mut timings = Vec::new();
    for (method, fit) in fits {
        let mut row = RunRow {
            experiment: point.experiment.to_owned(),
            seed: point.seed,
            replicate: point.replicate,
            fraction: point.fraction,
            agree_ratio: point.agree_ratio,
            method: *method,
            dpp: train.len() as f64 / n as f64,
            n_train: train.len(),
            n_holdout: holdout.len(),
            holdout_accuracy: None,
            std_mean: None,
            std_min: None,
            std_max: None,
            truth_mae: None,
            acceptance_rate: None,
            step_size: None,
            pure_choice,
            error: String::new(),
        };
        match fit {
            Ok(fit) => {
                let (mean, min, max) = std_range(&fit.estimate.std_agreement);
                row.holdout_accuracy = Some(fit.holdout_accuracy);
                row.std_mean = Some(mean);
                row.std_min = Some(min);
                row.std_max = Some(max);
                row.truth_mae = Some(truth_mae(&fit.estimate, truth));
                row.acceptance_rate = fit.acceptance_rate;
                row.step_size = fit.step_size;
                timings.push(TimingRow {
                    experiment: point.experiment.to_owned(),
                    seed: point.seed,
                    replicate: point.replicate,
                    fraction: point.fraction,
                    agree_ratio: point.agree_ratio,
                    method: *method,
                    map_seconds: fit.map_seconds,
                    sampler_seconds: fit.sampler_seconds,
                    total_seconds: fit.map_seconds + fit.sampler_seconds,
                });
            }
            Err(e) => row.error = e.clone(),
        }
        rows.push(row);
    }
    (rows, timings)
}

fn sort_rows(rows: &mut [RunRow], timings: &mut [TimingRow]) {
    rows.sort_by(|a, b| {
        (a.replicate, a.fraction, a.agree_ratio, a.method)
            .partial_cmp(&(b.replicate, b.fraction, b.agree_ratio, b.method))
            .expect("finite sweep points")
    });
    timings.sort_by(|a, b| {
        (a.replicate, a.fraction, a.agree_ratio, a.method)
            .partial_cmp(&(b.replicate, b.fraction, b.agree_ratio, b.method))
            .expect("finite sweep points")
    });
}

type JobOutput = (Vec<RunRow>, Vec<TimingRow>, Option<MaeRow>);

fn dpp_jobs(
    spec: &SweepSpec,
    methods: &[Method],
    experiment: &str,
    compare: bool,
    progress: &(dyn Fn(&str) + Sync),
) -> Result<Vec<JobOutput>> {
    let world = World::new(spec)?;
    let pool = pool(spec)?;
    pool.install(|| {
        let designs: Vec<DppDesign> = (0..spec.replicates)
            .into_par_iter()
            .map(|r| DppDesign::new(&world, spec, r))
            .collect::<Result<_>>()?;
        let jobs: Vec<(&DppDesign, f64)> = designs
            .iter()
            .flat_map(|d| spec.fractions.iter().map(move |&f| (d, f)))
            .collect();
        jobs.into_par_iter()
            .map(|(design, fraction)| {
                let train = design.training(fraction)?;
                let fits = fit_methods(&train, &design.holdout, methods, &spec.inference);
                let point = Point {
                    experiment,
                    seed: design.seed,
                    replicate: design.replicate,
                    fraction,
                    agree_ratio: spec.agree_ratio,
                };
                let (rows, timings) = rows_for(&point, &train, &design.holdout, &world.truth, &fits);
                let mae = compare.then(|| mae_row(&point, &train, &fits));
                progress(&format!(
                    "{experiment} replicate {} fraction {fraction:.4}: {} rows",
                    design.replicate,
                    rows.len()
                ));
                Ok((rows, timings, mae))
            })
            .collect()
    })
}

fn mae_row(point: &Point, train: &Dataset, fits: &[(Method, std::result::Result<Fit, String>)]) -> MaeRow {
    let find = |method: Method| fits.iter().find(|(m, _)| *m == method).map(|(_, f)| f);
    let mut row = MaeRow {
        seed: point.seed,
        replicate: point.replicate,
        fraction: point.fraction,
        dpp: train.len() as f64 / train.n_participants() as f64,
        mae: None,
        swa_std_mean: None,
        hmc_std_mean: None,
        error: String::new(),
    };
    match (find(Method::Swa), find(Method::Hmc)) {
        (Some(Ok(swa)), Some(Ok(hmc))) => {
            row.swa_std_mean = Some(std_range(&swa.estimate.std_agreement).0);
            row.hmc_std_mean = Some(std_range(&hmc.estimate.std_agreement).0);
            match mae_between(&swa.estimate, &hmc.estimate) {
                Ok(mae) => row.mae = Some(mae),
                Err(e) => row.error = e.to_string(),
            }
        }
        (swa, hmc) => {
            let failure = |name: &str, fit: Option<&std::result::Result<Fit, String>>| match fit {
                Some(Err(e)) => Some(format!("{name}: {e}")),
                None => Some(format!("{name}: not run")),
                Some(Ok(_)) => None,
            };
            row.error = [failure("swa", swa), failure("hmc", hmc)]
                .into_iter()
                .flatten()
                .collect::<Vec<_>>()
                .join("; ");
        }
    }
    row
}

fn collect(outputs: Vec<JobOutput>) -> (Vec<RunRow>, Vec<TimingRow>, Vec<MaeRow>) {
    let mut rows = Vec::new();
    let mut timings = Vec::new();
    let mut mae = Vec::new();
    for (r, t, m) in outputs {
        rows.extend(r);
        timings.extend(t);
        mae.extend(m);
    }
    sort_rows(&mut rows, &mut timings);
    mae.sort_by(|a, b| {
        (a.replicate, a.fraction)
            .partial_cmp(&(b.replicate, b.fraction))
            .expect("finite")
    });
    (rows, timings, mae)
}

/// Accuracy and posterior spread against data per participant.
pub fn run_dpp_sweep(spec: &SweepSpec) -> Result<SweepOutcome> {
    run_dpp_sweep_with(spec, &|_| {})
}

pub fn run_dpp_sweep_with(spec: &SweepSpec, progress: &(dyn Fn(&str) + Sync)) -> Result<SweepOutcome> {
    spec.validate()?;
    let outputs = dpp_jobs(spec, &spec.methods_sorted(), "dpp", false, progress)?;
    let (rows, timings, _) = collect(outputs);
    Ok(SweepOutcome {
        command: "sweep-dpp".into(),
        spec: spec.clone(),
        rows,
        timings,
    })
}

/// SWA against HMC: confidence MAE and runtime per data-per-participant bin.
pub fn run_mae_table(spec: &SweepSpec) -> Result<MaeOutcome> {
    run_mae_table_with(spec, &|_| {})
}

pub fn run_mae_table_with(spec: &SweepSpec, progress: &(dyn Fn(&str) + Sync)) -> Result<MaeOutcome> {
    spec.validate()?;
    let methods = spec.methods_sorted();
    if !methods.contains(&Method::Swa) || !methods.contains(&Method::Hmc) {
        return Err(ExperimentError::Spec(
            "the MAE table needs both swa and hmc in methods".into(),
        ));
    }
    let outputs = dpp_jobs(spec, &[Method::Swa, Method::Hmc], "mae", true, progress)?;
    let (rows, timings, mae) = collect(outputs);
    Ok(MaeOutcome {
        sweep: SweepOutcome {
            command: "mae-table".into(),
            spec: spec.clone(),
            rows,
            timings,
        },
        mae,
    })
}

/// SWA holdout accuracy as the share of agreement exercises varies under a
/// fixed exercise budget.
pub fn run_mixture_sweep(spec: &SweepSpec) -> Result<SweepOutcome> {
    run_mixture_sweep_with(spec, &|_| {})
}

pub fn run_mixture_sweep_with(spec: &SweepSpec, progress: &(dyn Fn(&str) + Sync)) -> Result<SweepOutcome> {
    spec.validate()?;
    if spec.ratios.is_empty() {
        return Err(ExperimentError::Spec(
            "the mixture sweep needs at least one ratio".into(),
        ));
    }
    let world = World::new(spec)?;
    let pool = pool(spec)?;
    let jobs: Vec<(usize, f64)> = (0..spec.replicates)
        .flat_map(|r| spec.ratios.iter().map(move |&ratio| (r, ratio)))
        .collect();
    let outputs = pool.install(|| {
        jobs.into_par_iter()
            .map(|(replicate, ratio)| {
                let design = MixtureDesign::new(&world, spec, replicate, ratio)?;
                let fits = fit_methods(&design.train, &design.holdout, &[Method::Swa], &spec.inference);
                let point = Point {
                    experiment: "mixture",
                    seed: design.seed,
                    replicate,
                    fraction: 1.0,
                    agree_ratio: ratio,
                };
                let (rows, timings) = rows_for(&point, &design.train, &design.holdout, &world.truth, &fits);
                progress(&format!(
                    "mixture replicate {replicate} ratio {ratio:.2}: {} rows",
                    rows.len()
                ));
                Ok((rows, timings, None))
            })
            .collect::<Result<Vec<JobOutput>>>()
    })?;
    let (rows, timings, _) = collect(outputs);
    Ok(SweepOutcome {
        command: "sweep-mixture".into(),
        spec: spec.clone(),
        rows,
        timings,
    })
}
