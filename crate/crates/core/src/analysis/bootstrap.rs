use log::warn;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{mean_sd, stable_sum, AnalysisError};
use crate::data::Dataset;
use crate::models::Matrix;
use crate::rng::{stream, Substream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSummary {
    pub mean: f64,
    pub sd: f64,
    pub replicates: usize,
    /// Replicates that could not be computed (refit mode only).
    pub failed: usize,
    /// Set when fewer than two replicates back the SD.
    pub sd_degenerate: bool,
}

fn summarize(means: &[f64], failed: usize) -> BootstrapSummary {
    let (mean, sd) = mean_sd(means);
    let sd_degenerate = means.len() < 2;
    if sd_degenerate {
        warn!("bootstrap SD reported as 0 with {} replicate(s)", means.len());
    }
    BootstrapSummary { mean, sd, replicates: means.len(), failed, sd_degenerate }
}

/// Bootstrap of the subgroup mean of `lb` with the fitted model held fixed:
/// each replicate resamples the subgroup's subjects with replacement.
pub fn bootstrap_subgroup(lb: &[f64], mask: &[bool], b: usize, seed: u64) -> Result<BootstrapSummary, AnalysisError> {
    if mask.len() != lb.len() {
        return Err(AnalysisError::LengthMismatch { what: "mask", expected: lb.len(), got: mask.len() });
    }
    if b == 0 {
        return Err(AnalysisError::NoReplicates);
    }
    let values: Vec<f64> = lb.iter().zip(mask).filter(|(_, &m)| m).map(|(&v, _)| v).collect();
    if values.is_empty() {
        return Err(AnalysisError::EmptySubgroup);
    }
    let n = values.len();
    let means: Vec<f64> = (0..b)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(seed, Substream::Bootstrap, r as u64);
            stable_sum((0..n).map(|_| values[rng.random_range(0..n)])) / n as f64
        })
        .collect();
    Ok(summarize(&means, 0))
}

/// Bootstrap that refits the whole pipeline per replicate: the dataset is
/// resampled with replacement, `refit` produces lower bounds at the
/// original subgroup covariates, and their mean is recorded. Replicates
/// whose refit fails are skipped and counted.
pub fn bootstrap_subgroup_refit<F, E>(
    d: &Dataset,
    mask: &[bool],
    b: usize,
    seed: u64,
    refit: F,
) -> Result<BootstrapSummary, AnalysisError>
where
    F: Fn(&Dataset, &Matrix) -> Result<Vec<f64>, E> + Sync,
    E: std::fmt::Display,
{
    if mask.len() != d.len() {
        return Err(AnalysisError::LengthMismatch { what: "mask", expected: d.len(), got: mask.len() });
    }
    if b == 0 {
        return Err(AnalysisError::NoReplicates);
    }
    let rows: Vec<usize> = (0..d.len()).filter(|&i| mask[i]).collect();
    if rows.is_empty() {
        return Err(AnalysisError::EmptySubgroup);
    }
    let x = d.covariates().select_rows(&rows);
    let n = d.len();
    let results: Vec<Option<f64>> = (0..b)
        .map(|r| {
            let mut rng = stream(seed, Substream::Bootstrap, r as u64);
            let sample: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            let resampled = d.select(&sample).ok()?;
            match refit(&resampled, &x) {
                Ok(lb) => Some(stable_sum(lb.iter().copied()) / lb.len() as f64),
                Err(e) => {
                    warn!("bootstrap replicate {r} skipped: {e}");
                    None
                }
            }
        })
        .collect();
    let means: Vec<f64> = results.iter().flatten().copied().collect();
    if means.is_empty() {
        return Err(AnalysisError::NoReplicates);
    }
    Ok(summarize(&means, b - means.len()))
}
