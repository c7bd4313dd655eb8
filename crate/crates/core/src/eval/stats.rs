//! Box statistics and exhibit selection over per-sample losses.

use crate::model::SampleLosses;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxStats {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

/// Quantile of sorted data by linear interpolation between closest ranks:
/// position `(n-1)·p`.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

impl BoxStats {
    pub fn of(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyDataset("no values to summarize".into()));
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Ok(Self {
            min: v[0],
            q1: quantile(&v, 0.25),
            median: quantile(&v, 0.5),
            q3: quantile(&v, 0.75),
            max: v[v.len() - 1],
        })
    }
}

/// One [`BoxStats`] per scored loss, in `SampleLosses::NAMES` order.
pub fn summarize(table: &[SampleLosses]) -> Result<[BoxStats; 5]> {
    let mut out = [BoxStats { min: 0.0, q1: 0.0, median: 0.0, q3: 0.0, max: 0.0 }; 5];
    for (k, slot) in out.iter_mut().enumerate() {
        let col: Vec<f64> = table.iter().map(|s| s.values()[k]).collect();
        *slot = BoxStats::of(&col)?;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Exhibits {
    pub best: usize,
    pub mean: usize,
    pub worst: usize,
}

/// Reconstruction score of a sample: the two cross-mapping errors.
pub fn exhibit_score(s: &SampleLosses) -> f64 {
    s.l5 + s.l6
}

/// Lowest, closest-to-mean and highest scoring rows. Ties go to the lower
/// index.
pub fn select_exhibits(table: &[SampleLosses]) -> Result<Exhibits> {
    if table.is_empty() {
        return Err(Error::EmptyDataset("no samples to rank".into()));
    }
    let scores: Vec<f64> = table.iter().map(exhibit_score).collect();
    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
    let pick = |key: &dyn Fn(f64) -> f64| {
        let mut best = 0;
        for i in 1..scores.len() {
            if key(scores[i]) < key(scores[best]) {
                best = i;
            }
        }
        best
    };
    Ok(Exhibits { best: pick(&|s| s), mean: pick(&|s| (s - mean).abs()), worst: pick(&|s| -s) })
}
