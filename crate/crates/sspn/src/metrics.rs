//! Estimation quality metrics.

use serde::Serialize;

/// `max(est / truth, truth / est)` with both sides floored at 1.
pub fn q_error(estimate: f64, truth: f64) -> f64 {
    let (e, t) = (estimate.max(1.0), truth.max(1.0));
    (e / t).max(t / e)
}

/// Signed `(estimate - truth) / truth`, truth floored at 1.
pub fn relative_error(estimate: f64, truth: f64) -> f64 {
    let t = truth.max(1.0);
    (estimate - t) / t
}

/// Nearest-rank percentile of an ascending slice; `p` in (0, 100].
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    percentile(&v, 50.0)
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QErrorSummary {
    pub count: usize,
    /// Queries whose truth was 0 and was clamped to 1.
    pub zero_truths: usize,
    pub p50: f64,
    pub p90: f64,
    pub p95: f64,
    pub p99: f64,
    pub max: f64,
    pub mean_relative_error: f64,
    /// Fraction of queries with estimate below truth.
    pub underestimation_rate: f64,
}

/// Summary over `(estimate, truth)` pairs.
pub fn summarize(pairs: &[(f64, f64)]) -> QErrorSummary {
    let mut q: Vec<f64> = pairs.iter().map(|&(e, t)| q_error(e, t)).collect();
    q.sort_by(f64::total_cmp);
    let rel: Vec<f64> = pairs.iter().map(|&(e, t)| relative_error(e, t)).collect();
    let under = pairs.iter().filter(|&&(e, t)| e < t.max(1.0)).count();
    QErrorSummary {
        count: pairs.len(),
        zero_truths: pairs.iter().filter(|&&(_, t)| t < 1.0).count(),
        p50: percentile(&q, 50.0),
        p90: percentile(&q, 90.0),
        p95: percentile(&q, 95.0),
        p99: percentile(&q, 99.0),
        max: q.last().copied().unwrap_or(f64::NAN),
        mean_relative_error: mean(&rel),
        underestimation_rate: if pairs.is_empty() {
            f64::NAN
        } else {
            under as f64 / pairs.len() as f64
        },
    }
}

impl QErrorSummary {
    pub fn table(&self) -> String {
        format!(
            "queries  {}\nzero-truth clamped  {}\nq-error  p50 {:.3}  p90 {:.3}  p95 {:.3}  p99 {:.3}  max {:.3}\nmean relative error  {:.4}\nunderestimated  {:.3}\n",
            self.count,
            self.zero_truths,
            self.p50,
            self.p90,
            self.p95,
            self.p99,
            self.max,
            self.mean_relative_error,
            self.underestimation_rate
        )
    }
}
