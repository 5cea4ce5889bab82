use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Method;
use crate::error::{Error, Result};
use crate::model::UtilityState;
use crate::scalar::Real;

/// Ordered posterior draws from one sampler run.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSamples<T: Real> {
    pub samples: Vec<UtilityState<T>>,
    pub method: Method,
    pub wall_clock_seconds: f64,
    pub seed: u64,
    /// Metropolis acceptance rate after burn-in (HMC only).
    pub acceptance_rate: Option<f64>,
    /// Leapfrog step used after burn-in (HMC only).
    pub step_size: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplesManifest {
    pub method: Method,
    pub wall_clock_seconds: f64,
    pub n_samples: usize,
    pub seed: u64,
}

fn sample_paths(dir: &Path, k: usize) -> (std::path::PathBuf, std::path::PathBuf) {
    (
        dir.join(format!("sample_{k:05}_m.csv")),
        dir.join(format!("sample_{k:05}_b.csv")),
    )
}

impl<T: Real> PosteriorSamples<T> {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Element-wise average of the draws.
    pub fn mean_state(&self) -> Option<UtilityState<T>> {
        UtilityState::mean_of(&self.samples)
    }

    pub fn manifest(&self) -> SamplesManifest {
        SamplesManifest {
            method: self.method,
            wall_clock_seconds: self.wall_clock_seconds,
            n_samples: self.samples.len(),
            seed: self.seed,
        }
    }

    /// Writes `manifest.json` plus one `M` and one `b` CSV per draw.
    pub fn export_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        for (k, sample) in self.samples.iter().enumerate() {
            let (m_path, b_path) = sample_paths(dir, k);
            sample.write_m_csv(BufWriter::new(File::create(m_path)?))?;
            sample.write_b_csv(BufWriter::new(File::create(b_path)?))?;
        }
        let manifest = BufWriter::new(File::create(dir.join("manifest.json"))?);
        serde_json::to_writer_pretty(manifest, &self.manifest())?;
        Ok(())
    }

    pub fn import_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let manifest: SamplesManifest =
            serde_json::from_reader(BufReader::new(File::open(dir.join("manifest.json"))?))?;
        let samples = (0..manifest.n_samples)
            .map(|k| {
                let (m_path, b_path) = sample_paths(dir, k);
                UtilityState::read_csv(File::open(m_path)?, File::open(b_path)?)
            })
            .collect::<Result<Vec<_>>>()?;
        if samples.len() != manifest.n_samples {
            return Err(Error::LengthMismatch {
                left: samples.len(),
                right: manifest.n_samples,
            });
        }
        Ok(PosteriorSamples {
            samples,
            method: manifest.method,
            wall_clock_seconds: manifest.wall_clock_seconds,
            seed: manifest.seed,
            acceptance_rate: None,
            step_size: None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn export_and_import() {
        let mut a = UtilityState::<f64>::zeros(2, 3);
        a.m[(1, 2)] = -0.75;
        a.b[0] = 0.125;
        let samples = PosteriorSamples {
            samples: vec![a.clone(), UtilityState::zeros(2, 3)],
            method: Method::Hmc,
            wall_clock_seconds: 1.5,
            seed: 9,
            acceptance_rate: Some(0.7),
            step_size: Some(0.01),
        };
        let dir = tempfile::tempdir().unwrap();
        samples.export_dir(dir.path()).unwrap();
        let manifest: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
        assert_eq!(manifest["method"], "hmc");
        assert_eq!(manifest["n_samples"], 2);
        assert_eq!(manifest["seed"], 9);
        let back = PosteriorSamples::<f64>::import_dir(dir.path()).unwrap();
        assert_eq!(back.samples, samples.samples);
        assert_eq!(back.method, Method::Hmc);
    }
}
