use serde::{Deserialize, Serialize};

/// Mean, population standard deviation and maximum of the finite values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub mean: f64,
    pub std: f64,
    pub max: f64,
    pub count: usize,
}

impl Stats {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Option<Self> {
        let v: Vec<f64> = values.into_iter().filter(|x| x.is_finite()).collect();
        if v.is_empty() {
            return None;
        }
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        Some(Self {
            mean,
            std: var.sqrt(),
            max: v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            count: v.len(),
        })
    }
}

/// Relative change between the `window`-episode averages ending at `end` and
/// at `end - window`. `None` if either block is empty or out of range.
pub fn moving_average_change(values: &[f64], window: usize, end: usize) -> Option<f64> {
    if window == 0 || end > values.len() || end < 2 * window {
        return None;
    }
    let last = Stats::of(values[end - window..end].iter().copied())?.mean;
    let prev = Stats::of(values[end - 2 * window..end - window].iter().copied())?.mean;
    Some(((last - prev) / prev).abs())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stats_skip_nan() {
        let s = Stats::of([1.0, f64::NAN, 3.0]).unwrap();
        assert_eq!((s.mean, s.std, s.max, s.count), (2.0, 1.0, 3.0, 2));
        assert!(Stats::of([f64::NAN]).is_none());
    }

    #[test]
    fn moving_average() {
        let v: Vec<f64> = (0..40).map(|i| if i < 20 { 1.0 } else { 1.04 }).collect();
        assert!((moving_average_change(&v, 20, 40).unwrap() - 0.04).abs() < 1e-12);
        assert!(moving_average_change(&v, 20, 39).is_none());
    }
}
