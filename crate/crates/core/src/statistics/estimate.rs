use crate::error::{Error, Result};
use crate::scalar::{pairwise_sum, Real};

/// Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate<T> {
    pub mean: T,
    pub se: T,
    pub n: usize,
}

impl<T: Real> Estimate<T> {
    /// `sqrt(se² + other.se²)`, for estimators treated as independent.
    pub fn combined_se(&self, other: &Self) -> T {
        (self.se * self.se + other.se * other.se).sqrt()
    }

    pub fn abs(self) -> Self {
        Self { mean: self.mean.abs(), ..self }
    }
}

/// Sample mean and standard error (unbiased variance) of i.i.d. samples,
/// summed in a fixed order.
pub fn estimate<T: Real>(samples: &[T]) -> Estimate<T> {
    let n = samples.len();
    if n == 0 {
        return Estimate { mean: T::zero(), se: T::zero(), n };
    }
    let mean = pairwise_sum(samples) / T::from_count(n);
    if n < 2 {
        return Estimate { mean, se: T::zero(), n };
    }
    let dev: Vec<T> = samples.iter().map(|x| (*x - mean) * (*x - mean)).collect();
    let var = pairwise_sum(&dev) / T::from_count(n - 1);
    Estimate { mean, se: (var / T::from_count(n)).sqrt(), n }
}

/// Per-path summaries of one ensemble and their estimators.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleResult<T> {
    pub master_seed: u64,
    pub names: Vec<String>,
    /// `summaries[path][j]` is summary `names[j]` of one path.
    pub summaries: Vec<Vec<T>>,
    pub estimates: Vec<Estimate<T>>,
}

impl<T: Real> EnsembleResult<T> {
    pub fn new(master_seed: u64, names: Vec<String>, summaries: Vec<Vec<T>>) -> Result<Self> {
        if let Some(bad) = summaries.iter().find(|s| s.len() != names.len()) {
            return Err(Error::Dimension { expected: names.len(), found: bad.len() });
        }
        let estimates = (0..names.len())
            .map(|j| estimate(&summaries.iter().map(|s| s[j]).collect::<Vec<_>>()))
            .collect();
        Ok(Self { master_seed, names, summaries, estimates })
    }

    pub fn n_paths(&self) -> usize {
        self.summaries.len()
    }

    pub fn get(&self, name: &str) -> Option<&Estimate<T>> {
        self.names.iter().position(|n| n == name).map(|j| &self.estimates[j])
    }
}

/// Whether `values` decrease strictly, each step by more than `k` combined
/// standard errors. `None` for fewer than two values (nothing to compare).
pub fn strictly_decreasing<T: Real>(values: &[Estimate<T>], k: T) -> Option<bool> {
    if values.len() < 2 {
        return None;
    }
    Some(values.windows(2).all(|w| w[0].mean - w[1].mean > k * w[0].combined_se(&w[1])))
}

/// Cumulative trapezoid integral on the grid `times`.
pub fn cumulative_trapezoid<T: Real>(times: &[T], values: &[T]) -> Vec<T> {
    let mut out = Vec::with_capacity(values.len());
    let mut acc = T::zero();
    let half = T::lit(0.5);
    for k in 0..values.len() {
        if k > 0 {
            acc += half * (times[k] - times[k - 1]) * (values[k] + values[k - 1]);
        }
        out.push(acc);
    }
    out
}

/// Trapezoid integral of `weight(t)·values(t)`.
pub fn weighted_trapezoid<T: Real>(times: &[T], values: &[T], weight: &dyn Fn(T) -> T) -> T {
    let half = T::lit(0.5);
    let parts: Vec<T> = (1..values.len())
        .map(|k| {
            half * (times[k] - times[k - 1]) * (weight(times[k]) * values[k] + weight(times[k - 1]) * values[k - 1])
        })
        .collect();
    pairwise_sum(&parts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn estimate_of_known_samples() {
        let e = estimate(&[1.0f64, 2.0, 3.0, 4.0]);
        assert_eq!(e.mean, 2.5);
        assert!((e.se - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
        assert_eq!(estimate::<f64>(&[]).n, 0);
        assert_eq!(estimate(&[3.0f64]).se, 0.0);
    }

    #[test]
    fn trapezoid_integrates_linear_exactly() {
        let t: Vec<f64> = (0..=10).map(|k| k as f64 * 0.1).collect();
        let v: Vec<f64> = t.iter().map(|x| 2.0 * x).collect();
        let c = cumulative_trapezoid(&t, &v);
        assert!((c[10] - 1.0).abs() < 1e-14);
        assert!((weighted_trapezoid(&t, &v, &|_| 3.0) - 3.0).abs() < 1e-14);
    }

    #[test]
    fn decreasing_needs_separation() {
        let e = |m: f64, se: f64| Estimate { mean: m, se, n: 10 };
        assert_eq!(strictly_decreasing(&[e(1.0, 0.1)], 2.0), None);
        assert_eq!(strictly_decreasing(&[e(1.0, 0.1), e(0.5, 0.1)], 2.0), Some(true));
        assert_eq!(strictly_decreasing(&[e(1.0, 0.1), e(0.8, 0.1)], 2.0), Some(false));
    }
}
