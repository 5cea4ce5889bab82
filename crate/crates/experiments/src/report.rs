//! Tidy CSV rows, grouped summaries and the output directory layout.
//!
//! `raw.csv`, `summary.csv` and `manifest.json` depend only on the sweep spec, so
//! reruns reproduce them byte for byte. Wall-clock measurements go to
//! `timing.csv` and, for the runtime table, `table.csv`.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use rlsdp_core::Method;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::spec::SweepSpec;

/// One method fitted on one training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub experiment: String,
    pub seed: u64,
    pub replicate: usize,
    pub fraction: f64,
    pub agree_ratio: f64,
    pub method: Method,
    /// Training exercises per participant.
    pub dpp: f64,
    pub n_train: usize,
    pub n_holdout: usize,
    pub holdout_accuracy: Option<f64>,
    pub std_mean: Option<f64>,
    pub std_min: Option<f64>,
    pub std_max: Option<f64>,
    /// Mean absolute error of the predicted agreement against the truth.
    pub truth_mae: Option<f64>,
    pub acceptance_rate: Option<f64>,
    pub step_size: Option<f64>,
    /// Training had no agreement exercises at all.
    pub pure_choice: bool,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub experiment: String,
    pub seed: u64,
    pub replicate: usize,
    pub fraction: f64,
    pub agree_ratio: f64,
    pub method: Method,
    pub map_seconds: f64,
    pub sampler_seconds: f64,
    pub total_seconds: f64,
}

/// Confidence agreement between SWA and HMC on one training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaeRow {
    pub seed: u64,
    pub replicate: usize,
    pub fraction: f64,
    pub dpp: f64,
    pub mae: Option<f64>,
    pub swa_std_mean: Option<f64>,
    pub hmc_std_mean: Option<f64>,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: Method,
    pub fraction: f64,
    pub agree_ratio: f64,
    pub metric: String,
    pub n: usize,
    pub mean: f64,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinSummaryRow {
    pub dpp_lo: f64,
    pub dpp_hi: f64,
    pub n: usize,
    pub mean: f64,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

/// One line of the runtime and confidence-agreement table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub dpp_lo: f64,
    pub dpp_hi: f64,
    pub n_runs: usize,
    /// MAP fit plus sampler.
    pub swa_runtime_seconds: f64,
    pub hmc_runtime_seconds: f64,
    pub swa_sampler_seconds: f64,
    pub hmc_sampler_seconds: f64,
    pub mae: f64,
}

/// Five-number summary plus mean, with linearly interpolated quartiles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spread {
    pub n: usize,
    pub mean: f64,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl Spread {
    pub fn of(values: &[f64]) -> Option<Spread> {
        if values.is_empty() {
            return None;
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let quantile = |q: f64| {
            let pos = q * (sorted.len() - 1) as f64;
            let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
            sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
        };
        Some(Spread {
            n: sorted.len(),
            mean: sorted.iter().sum::<f64>() / sorted.len() as f64,
            min: sorted[0],
            q1: quantile(0.25),
            median: quantile(0.5),
            q3: quantile(0.75),
            max: sorted[sorted.len() - 1],
        })
    }
}

pub const METRICS: [&str; 6] = ["dpp", "holdout_accuracy", "std_mean", "std_min", "std_max", "truth_mae"];

fn metric(row: &RunRow, name: &str) -> Option<f64> {
    match name {
        "dpp" => Some(row.dpp),
        "holdout_accuracy" => row.holdout_accuracy,
        "std_mean" => row.std_mean,
        "std_min" => row.std_min,
        "std_max" => row.std_max,
        "truth_mae" => row.truth_mae,
        _ => None,
    }
}

/// Groups rows by method and sweep point and summarises every metric over
/// replicates. Failed rows are left out.
pub fn summarize(rows: &[RunRow]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(Method, u64, u64), Vec<&RunRow>> = BTreeMap::new();
    for row in rows.iter().filter(|r| r.error.is_empty()) {
        groups
            .entry((row.method, row.fraction.to_bits(), row.agree_ratio.to_bits()))
            .or_default()
            .push(row);
    }
    let mut out = Vec::new();
    for ((method, fraction, ratio), group) in groups {
        for name in METRICS {
            let values: Vec<f64> = group.iter().filter_map(|r| metric(r, name)).collect();
            if let Some(s) = Spread::of(&values) {
                out.push(SummaryRow {
                    method,
                    fraction: f64::from_bits(fraction),
                    agree_ratio: f64::from_bits(ratio),
                    metric: name.to_owned(),
                    n: s.n,
                    mean: s.mean,
                    min: s.min,
                    q1: s.q1,
                    median: s.median,
                    q3: s.q3,
                    max: s.max,
                });
            }
        }
    }
    out.sort_by(|a, b| {
        (a.method, a.fraction, a.agree_ratio)
            .partial_cmp(&(b.method, b.fraction, b.agree_ratio))
            .expect("finite sweep points")
            .then_with(|| a.metric.cmp(&b.metric))
    });
    out
}

/// Width-2.5 bins from 2.5 to 22.5; the last bin includes its upper edge.
pub fn dpp_bins() -> Vec<(f64, f64)> {
    (1..9).map(|k| (2.5 * k as f64, 2.5 * (k + 1) as f64)).collect()
}

pub fn bin_of(dpp: f64) -> Option<(f64, f64)> {
    let bins = dpp_bins();
    let last = bins.len() - 1;
    bins.into_iter()
        .enumerate()
        .find(|&(k, (lo, hi))| dpp >= lo && (dpp < hi || (k == last && dpp <= hi)))
        .map(|(_, bin)| bin)
}

pub fn summarize_bins(rows: &[MaeRow]) -> Vec<BinSummaryRow> {
    dpp_bins()
        .into_iter()
        .filter_map(|(lo, hi)| {
            let values: Vec<f64> = rows
                .iter()
                .filter(|r| bin_of(r.dpp) == Some((lo, hi)))
                .filter_map(|r| r.mae)
                .collect();
            Spread::of(&values).map(|s| BinSummaryRow {
                dpp_lo: lo,
                dpp_hi: hi,
                n: s.n,
                mean: s.mean,
                min: s.min,
                q1: s.q1,
                median: s.median,
                q3: s.q3,
                max: s.max,
            })
        })
        .collect()
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    if count == 0 {
        f64::NAN
    } else {
        sum / count as f64
    }
}

/// Mean runtimes per method and mean confidence MAE, per DPP bin.
pub fn runtime_table(mae: &[MaeRow], timings: &[TimingRow]) -> Vec<TableRow> {
    dpp_bins()
        .into_iter()
        .filter_map(|(lo, hi)| {
            let runs: Vec<&MaeRow> = mae.iter().filter(|r| bin_of(r.dpp) == Some((lo, hi))).collect();
            if runs.is_empty() {
                return None;
            }
            let runs = &runs;
            let timing = |method: Method| {
                timings.iter().filter(move |t| {
                    t.method == method
                        && runs
                            .iter()
                            .any(|r| r.replicate == t.replicate && r.fraction == t.fraction)
                })
            };
            Some(TableRow {
                dpp_lo: lo,
                dpp_hi: hi,
                n_runs: runs.len(),
                swa_runtime_seconds: mean(timing(Method::Swa).map(|t| t.total_seconds)),
                hmc_runtime_seconds: mean(timing(Method::Hmc).map(|t| t.total_seconds)),
                swa_sampler_seconds: mean(timing(Method::Swa).map(|t| t.sampler_seconds)),
                hmc_sampler_seconds: mean(timing(Method::Hmc).map(|t| t.sampler_seconds)),
                mae: mean(runs.iter().filter_map(|r| r.mae)),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub spec: SweepSpec,
    pub versions: BTreeMap<String, String>,
    pub population_seed: u64,
    pub replicate_seeds: Vec<u64>,
    pub rows: usize,
    pub failed_rows: usize,
}

impl Manifest {
    pub fn new(command: &str, spec: &SweepSpec, replicate_seeds: Vec<u64>, rows: usize, failed_rows: usize) -> Self {
        let versions = BTreeMap::from([
            ("rlsdp-core".to_owned(), rlsdp_core::VERSION.to_owned()),
            ("rlsdp-experiments".to_owned(), env!("CARGO_PKG_VERSION").to_owned()),
        ]);
        Manifest {
            command: command.to_owned(),
            spec: spec.clone(),
            versions,
            population_seed: spec.population.seed,
            replicate_seeds,
            rows,
            failed_rows,
        }
    }
}

pub fn write_csv<T: Serialize, W: Write>(rows: &[T], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv_file<T: Serialize>(rows: &[T], path: impl AsRef<Path>) -> Result<()> {
    write_csv(rows, fs::File::create(path)?)
}

pub fn read_csv_file<T: serde::de::DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let mut reader = csv::Reader::from_path(path)?;
    Ok(reader.deserialize().collect::<Result<_, _>>()?)
}

pub fn write_manifest(manifest: &Manifest, path: impl AsRef<Path>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(manifest)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}
