use std::path::Path;

use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::bounds::{repair, BoundPair};

/// Exceedance curves `P̂(μ̂⁻ > t)` and `P̂(μ̂⁺ > t)` for one arm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveTable {
    pub grid: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Kaplan–Meier-style curves of the per-subject bound values: at each `t`,
/// the fraction of subjects whose lower (upper) bound exceeds `t`.
pub fn bound_survival_curves(bounds: &[BoundPair], grid: &[f64]) -> CurveTable {
    let n = bounds.len().max(1) as f64;
    let mut lows: Vec<f64> = bounds.iter().map(|b| b.lower).collect();
    let mut ups: Vec<f64> = bounds.iter().map(|b| b.upper).collect();
    lows.sort_by(f64::total_cmp);
    ups.sort_by(f64::total_cmp);
    let exceed = |sorted: &[f64], t: f64| (sorted.len() - sorted.partition_point(|&v| v <= t)) as f64 / n;
    CurveTable {
        grid: grid.to_vec(),
        lower: grid.iter().map(|&t| exceed(&lows, t)).collect(),
        upper: grid.iter().map(|&t| exceed(&ups, t)).collect(),
    }
}

/// `points` equally spaced times from 0 to `t_max`.
pub fn time_grid(t_max: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..points).map(|i| t_max * i as f64 / (points - 1) as f64).collect(),
    }
}

/// Reads the `lower_col` / `upper_col` columns of a bounds CSV. Rows with
/// a blank or non-finite value are skipped; crossed pairs are collapsed to
/// their midpoint. Returns the pairs and the number of repaired rows.
pub fn read_bound_pairs(
    path: impl AsRef<Path>,
    lower_col: &str,
    upper_col: &str,
) -> Result<(Vec<BoundPair>, usize), AnalysisError> {
    let path = path.as_ref();
    let fail = |message: String| AnalysisError::BoundsFile { path: path.display().to_string(), message };
    let mut r = csv::Reader::from_path(path).map_err(|e| fail(e.to_string()))?;
    let headers = r.headers().map_err(|e| fail(e.to_string()))?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name).ok_or_else(|| fail(format!("no column {name:?}")));
    let (li, ui) = (col(lower_col)?, col(upper_col)?);
    let mut pairs = Vec::new();
    let mut repaired = 0;
    for rec in r.records() {
        let rec = rec.map_err(|e| fail(e.to_string()))?;
        let parse = |i: usize| rec.get(i).and_then(|v| v.trim().parse::<f64>().ok()).filter(|v| v.is_finite());
        let (Some(l), Some(u)) = (parse(li), parse(ui)) else { continue };
        let (pair, crossed) = repair(l, u, f64::NEG_INFINITY, f64::INFINITY);
        repaired += usize::from(crossed);
        pairs.push(pair);
    }
    Ok((pairs, repaired))
}
