//! Box-plot style aggregation of per-trajectory errors: median, quartiles by
//! linear interpolation between order statistics, whiskers at 1.5x the
//! interquartile range, and the outliers beyond them.

/// Summary statistics following the box-plot convention.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxSummary {
    pub count: usize,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    /// Smallest datum within `q1 - 1.5 IQR`.
    pub whisker_low: f64,
    /// Largest datum within `q3 + 1.5 IQR`.
    pub whisker_high: f64,
    pub outliers: Vec<f64>,
}

/// Quantile by linear interpolation between order statistics:
/// `h = (n - 1) p`, interpolating between `floor(h)` and `floor(h) + 1`.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    assert!((0.0..=1.0).contains(&p));
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if lo + 1 < n {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    } else {
        sorted[lo]
    }
}

/// Aggregate values (at least one) into a box summary.
pub fn aggregate_report(values: &[f64]) -> BoxSummary {
    assert!(!values.is_empty(), "aggregate_report needs at least one value");
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = quantile(&sorted, 0.5);
    let q1 = quantile(&sorted, 0.25);
    let q3 = quantile(&sorted, 0.75);
    let iqr = q3 - q1;
    let low_fence = q1 - 1.5 * iqr;
    let high_fence = q3 + 1.5 * iqr;
    let whisker_low = sorted
        .iter()
        .copied()
        .find(|v| *v >= low_fence)
        .unwrap_or(sorted[0]);
    let whisker_high = sorted
        .iter()
        .rev()
        .copied()
        .find(|v| *v <= high_fence)
        .unwrap_or(*sorted.last().unwrap());
    let outliers = sorted
        .iter()
        .copied()
        .filter(|v| *v < low_fence || *v > high_fence)
        .collect();
    BoxSummary {
        count: sorted.len(),
        median,
        q1,
        q3,
        whisker_low,
        whisker_high,
        outliers,
    }
}
