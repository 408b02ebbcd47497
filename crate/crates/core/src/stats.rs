//! Box-plot summaries for the time-to-label view.

use serde::{Deserialize, Serialize};

/// Quantile of an ascending sample by linear interpolation between order
/// statistics (position `q·(n-1)`).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Five-number summary with Tukey whiskers at 1.5·IQR. Times in milliseconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingStats {
    /// Lower whisker: smallest observation not below `q1 - 1.5·IQR`.
    pub lower_whisker: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    /// Upper whisker: largest observation not above `q3 + 1.5·IQR`.
    pub upper_whisker: f64,
    pub outliers: Vec<f64>,
    pub count: usize,
}

impl TimingStats {
    pub fn from_samples(samples: &[f64]) -> Option<Self> {
        if samples.is_empty() {
            return None;
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        let q1 = quantile_sorted(&sorted, 0.25);
        let median = quantile_sorted(&sorted, 0.5);
        let q3 = quantile_sorted(&sorted, 0.75);
        let iqr = q3 - q1;
        let (low_fence, high_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
        let inside = || sorted.iter().copied().filter(|v| (low_fence..=high_fence).contains(v));
        Some(Self {
            lower_whisker: inside().next().unwrap_or(q1),
            q1,
            median,
            q3,
            upper_whisker: inside().last().unwrap_or(q3),
            outliers: sorted
                .iter()
                .copied()
                .filter(|v| *v < low_fence || *v > high_fence)
                .collect(),
            count: sorted.len(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_example() {
        let s = TimingStats::from_samples(&[100.0, 2.0, 4.0, 1.0, 3.0]).unwrap();
        assert_eq!((s.q1, s.median, s.q3), (2.0, 3.0, 4.0));
        assert_eq!((s.lower_whisker, s.upper_whisker), (1.0, 4.0));
        assert_eq!(s.outliers, vec![100.0]);
    }

    #[test]
    fn degenerate_samples() {
        let s = TimingStats::from_samples(&[5.0]).unwrap();
        assert_eq!([s.lower_whisker, s.q1, s.median, s.q3, s.upper_whisker], [5.0; 5]);
        assert!(s.outliers.is_empty());
        let s = TimingStats::from_samples(&[7.0; 6]).unwrap();
        assert_eq!(s.q3 - s.q1, 0.0);
        assert!(s.outliers.is_empty());
        assert!(TimingStats::from_samples(&[]).is_none());
    }

    #[test]
    fn interpolates_between_order_statistics() {
        assert_eq!(quantile_sorted(&[1.0, 2.0, 3.0, 4.0], 0.25), 1.75);
        assert_eq!(quantile_sorted(&[1.0, 2.0, 3.0, 4.0], 0.5), 2.5);
    }
}
