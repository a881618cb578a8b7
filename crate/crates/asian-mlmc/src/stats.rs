//! Streaming replication statistics and estimate reports.

/// Welford accumulator over replication values, plus a node-cost counter.
///
/// "Cost" is the total number of simulated forward-price nodes, the unit
/// all work-normalized quantities are expressed in.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunStatistics {
    count: u64,
    mean: f64,
    m2: f64,
    cost: u64,
}

impl RunStatistics {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records one replication value together with the nodes it consumed.
    #[inline]
    pub fn record(&mut self, value: f64, nodes: u64) {
        self.count += 1;
        let delta = value - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (value - self.mean);
        self.cost += nodes;
    }

    /// Merges another accumulator (Chan's parallel update). Merging is
    /// associative up to floating-point rounding, so workers can be
    /// combined in a fixed order for reproducible totals.
    pub fn merge(&mut self, other: &RunStatistics) {
        if other.count == 0 {
            self.cost += other.cost;
            return;
        }
        if self.count == 0 {
            *self = RunStatistics { cost: self.cost + other.cost, ..*other };
            return;
        }
        let total = self.count + other.count;
        let delta = other.mean - self.mean;
        self.mean += delta * other.count as f64 / total as f64;
        self.m2 += other.m2 + delta * delta * (self.count as f64 * other.count as f64 / total as f64);
        self.count = total;
        self.cost += other.cost;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance of the recorded values.
    pub fn variance(&self) -> f64 {
        if self.count > 1 {
            self.m2 / (self.count - 1) as f64
        } else {
            0.0
        }
    }

    /// Standard error of the sample mean.
    pub fn std_error(&self) -> f64 {
        if self.count > 1 {
            (self.variance() / self.count as f64).sqrt()
        } else {
            0.0
        }
    }

    pub fn cost(&self) -> u64 {
        self.cost
    }

    pub fn add_cost(&mut self, nodes: u64) {
        self.cost += nodes;
    }
}

/// One priced run: everything a results table row needs.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateReport {
    /// Method label, e.g. "rmlmc".
    pub method: &'static str,
    /// Discounted option price estimate.
    pub price: f64,
    /// Standard error of the discounted price.
    pub std: f64,
    /// Total simulated forward-price nodes.
    pub cost: u64,
    /// Number of replications (outer replications for MLMC).
    pub n: u64,
    /// Variance reduction factor versus single-level Monte Carlo, when a
    /// baseline payoff variance is available.
    pub vrf: Option<f64>,
    /// Upper bound on |bias| for the truncated estimator, when the
    /// constant of its bias inequality has been estimated.
    pub bias_bound: Option<f64>,
}

impl EstimateReport {
    /// Work-normalized variance, cost times squared standard error.
    pub fn work_normalized_variance(&self) -> f64 {
        self.cost as f64 * self.std * self.std
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn two_pass(values: &[f64]) -> (f64, f64) {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        (mean, var)
    }

    #[test]
    fn matches_two_pass_reference() {
        // deterministic pseudo-random values, 10^4 of them
        let mut x = 0.5_f64;
        let values: Vec<f64> = (0..10_000)
            .map(|_| {
                x = (x * 1103515245.0 + 12345.0) % 2147483648.0;
                x / 2147483648.0 * 10.0 - 5.0
            })
            .collect();
        let mut acc = RunStatistics::new();
        for &v in &values {
            acc.record(v, 1);
        }
        let (mean, var) = two_pass(&values);
        assert!((acc.mean() - mean).abs() <= 1e-10 * mean.abs().max(1.0));
        assert!((acc.variance() - var).abs() <= 1e-10 * var.abs());
        assert_eq!(acc.cost(), 10_000);
    }

    #[test]
    fn std_error_definition() {
        let mut acc = RunStatistics::new();
        for v in [1.0, 2.0, 3.0, 4.0] {
            acc.record(v, 0);
        }
        let expected = (acc.variance() / 4.0).sqrt();
        assert_eq!(acc.std_error(), expected);
    }

    #[test]
    fn merge_with_empty_keeps_cost() {
        let mut a = RunStatistics::new();
        a.record(2.0, 3);
        let mut b = RunStatistics::new();
        b.add_cost(7);
        a.merge(&b);
        assert_eq!(a.cost(), 10);
        assert_eq!(a.count(), 1);

        let mut c = RunStatistics::new();
        c.add_cost(5);
        c.merge(&a);
        assert_eq!(c.cost(), 15);
        assert_eq!(c.mean(), 2.0);
    }

    proptest! {
        // Merging any split of a sample agrees with a single pass.
        #[test]
        fn merge_agrees_with_single_pass(values in prop::collection::vec(-1e3f64..1e3, 2..200),
                                         split in 0usize..200) {
            let split = split % values.len();
            let mut whole = RunStatistics::new();
            for &v in &values { whole.record(v, 2); }

            let mut left = RunStatistics::new();
            for &v in &values[..split] { left.record(v, 2); }
            let mut right = RunStatistics::new();
            for &v in &values[split..] { right.record(v, 2); }
            left.merge(&right);

            prop_assert_eq!(left.count(), whole.count());
            prop_assert_eq!(left.cost(), whole.cost());
            prop_assert!((left.mean() - whole.mean()).abs() <= 1e-9 * whole.mean().abs().max(1.0));
            prop_assert!((left.variance() - whole.variance()).abs()
                <= 1e-9 * whole.variance().abs().max(1.0));
        }
    }
}
