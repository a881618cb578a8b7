//! Monitoring schedules and the nested level-set structure.
//!
//! A schedule holds the m monitoring dates and their signed weights
//! (absolute values summing to one). From it we build, in O(m) total
//! work, the nested date subsets J_0 ⊆ J_1 ⊆ … ⊆ J_L together with the
//! sparse trapezoidal functionals A_l that approximate the weighted
//! average A = Σ w_j F_j using only the dates in J_l. Unsimulated dates
//! are replaced by the mean of the two surrounding simulated forwards.

use crate::error::EngineError;

/// Monitoring dates t_1 < … < t_m = T with normalized signed weights.
///
/// Immutable after construction; safe to share across workers.
#[derive(Debug, Clone, PartialEq)]
pub struct MonitoringSchedule {
    dates: Vec<f64>,
    weights: Vec<f64>,
    signed_total: f64,
}

impl MonitoringSchedule {
    /// Index count m.
    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        false // construction rejects empty inputs
    }

    /// Monitoring dates, 0-indexed: `dates()[j-1]` is t_j.
    pub fn dates(&self) -> &[f64] {
        &self.dates
    }

    /// Normalized weights, 0-indexed: `weights()[j-1]` is w_j.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn maturity(&self) -> f64 {
        *self.dates.last().unwrap()
    }

    /// W(1,m) = Σ w_j, the signed weight total.
    pub fn signed_total(&self) -> f64 {
        self.signed_total
    }
}

/// Validates the inputs and rescales the weights so Σ|w_j| = 1,
/// preserving signs.
pub fn build_schedule(dates: Vec<f64>, weights: Vec<f64>) -> Result<MonitoringSchedule, EngineError> {
    if dates.len() != weights.len() {
        return Err(EngineError::LengthMismatch { dates: dates.len(), weights: weights.len() });
    }
    if dates.is_empty() {
        return Err(EngineError::EmptySchedule);
    }
    let mut prev = 0.0;
    for &t in &dates {
        if !(t > prev && t.is_finite()) {
            return Err(EngineError::BadDates);
        }
        prev = t;
    }
    let mut norm = 0.0;
    for (j, &w) in weights.iter().enumerate() {
        if w == 0.0 {
            return Err(EngineError::ZeroWeight(j));
        }
        norm += w.abs();
    }
    if !(norm > 0.0 && norm.is_finite()) {
        return Err(EngineError::BadWeights);
    }
    let weights: Vec<f64> = weights.into_iter().map(|w| w / norm).collect();
    let signed_total = weights.iter().sum();
    Ok(MonitoringSchedule { dates, weights, signed_total })
}

struct Level {
    /// J_l, sorted, 1-based date indices.
    indices: Vec<u32>,
    /// Functional coefficients aligned with `indices`.
    coeffs: Vec<f64>,
    /// Coefficient multiplying the deterministic F_0.
    coeff0: f64,
}

/// The nested subsets J_l and their cached trapezoidal functionals,
/// plus the weight prefix sums they were built from.
///
/// Immutable after construction; safe to share across workers.
pub struct LevelStructure {
    max_level: usize,
    levels: Vec<Level>,
    /// prefix_signed[j] = W(1,j), with prefix_signed[0] = 0.
    prefix_signed: Vec<f64>,
    /// prefix_abs[j] = W'(1,j), with prefix_abs[0] = 0 and prefix_abs[m] = 1.
    prefix_abs: Vec<f64>,
}

/// Sparse linear functional A_l = coeff0·F_0 + Σ_k coeffs[k]·F at J_l[k].
#[derive(Debug, Clone, Copy)]
pub struct CoarseFunctional<'a> {
    pub level: usize,
    pub coeff0: f64,
    indices: &'a [u32],
    coeffs: &'a [f64],
}

impl<'a> CoarseFunctional<'a> {
    /// Support of the random part, i.e. J_min(level, L).
    pub fn indices(&self) -> &'a [u32] {
        self.indices
    }

    pub fn coeffs(&self) -> &'a [f64] {
        self.coeffs
    }

    /// Coefficient of date index j (0 addresses F_0).
    pub fn coefficient(&self, j: u32) -> f64 {
        if j == 0 {
            return self.coeff0;
        }
        match self.indices.binary_search(&j) {
            Ok(k) => self.coeffs[k],
            Err(_) => 0.0,
        }
    }

    /// Sum of all coefficients including coeff0; equals W(1,m).
    pub fn coefficient_sum(&self) -> f64 {
        self.coeff0 + self.coeffs.iter().sum::<f64>()
    }

    /// Evaluates the functional on forward values aligned with `indices()`.
    #[inline]
    pub fn evaluate(&self, f0: f64, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.indices.len());
        let mut acc = self.coeff0 * f0;
        for (c, v) in self.coeffs.iter().zip(values) {
            acc += c * v;
        }
        acc
    }

    /// Evaluates on values aligned with a superset of the support.
    ///
    /// `superset` must be sorted and contain every index of the support;
    /// this is how U_{l-1} is read off the level-l path.
    #[inline]
    pub fn evaluate_on_superset(&self, f0: f64, superset: &[u32], values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), superset.len());
        let mut acc = self.coeff0 * f0;
        let mut p = 0;
        for (k, &j) in self.indices.iter().enumerate() {
            while superset[p] != j {
                p += 1;
            }
            acc += self.coeffs[k] * values[p];
        }
        acc
    }
}

impl LevelStructure {
    /// L = ceil(log2 m).
    pub fn max_level(&self) -> usize {
        self.max_level
    }

    /// J_min(l, L), sorted 1-based date indices.
    pub fn level_indices(&self, l: usize) -> &[u32] {
        &self.levels[l.min(self.max_level)].indices
    }

    /// Simulated nodes per replication at level l, i.e. |J_l|.
    pub fn level_cost(&self, l: usize) -> u64 {
        self.level_indices(l).len() as u64
    }

    /// The cached trapezoidal functional for level l (clamped to L).
    pub fn functional(&self, l: usize) -> CoarseFunctional<'_> {
        let level = &self.levels[l.min(self.max_level)];
        CoarseFunctional {
            level: l.min(self.max_level),
            coeff0: level.coeff0,
            indices: &level.indices,
            coeffs: &level.coeffs,
        }
    }

    /// W(1,j) for j = 0..=m.
    pub fn prefix_signed(&self) -> &[f64] {
        &self.prefix_signed
    }

    /// W'(1,j) for j = 0..=m.
    pub fn prefix_abs(&self) -> &[f64] {
        &self.prefix_abs
    }

    /// Consecutive pairs of {0} ∪ J_l with their trapezoid weights
    /// W(i+1,k-1), in increasing order.
    pub fn pairs(&self, l: usize) -> impl Iterator<Item = (u32, u32, f64)> + '_ {
        let indices = self.level_indices(l);
        let prefix = &self.prefix_signed;
        std::iter::once(0u32)
            .chain(indices.iter().copied())
            .zip(indices.iter().copied())
            .map(move |(i, k)| (i, k, prefix[(k - 1) as usize] - prefix[i as usize]))
    }
}

/// Builds the nested level sets and their functionals by backward
/// induction from the floor condition, in O(m) time and space.
pub fn build_level_structure(schedule: &MonitoringSchedule) -> LevelStructure {
    let m = schedule.len();
    let max_level = (usize::BITS - (m - 1).leading_zeros()) as usize; // ceil(log2 m), 0 for m = 1
    let weights = schedule.weights();

    let mut prefix_signed = Vec::with_capacity(m + 1);
    let mut prefix_abs = Vec::with_capacity(m + 1);
    prefix_signed.push(0.0);
    prefix_abs.push(0.0);
    let (mut s, mut a) = (0.0, 0.0);
    for &w in weights {
        s += w;
        a += w.abs();
        prefix_signed.push(s);
        prefix_abs.push(a);
    }
    // W'(1,m) = 1 holds by normalization; pin the rounded tail so the
    // floor condition always keeps m in every level set.
    prefix_abs[m] = 1.0;

    let mut levels: Vec<Level> = Vec::with_capacity(max_level + 1);
    let mut current: Vec<u32> = (1..=m as u32).collect();
    for l in (0..max_level).rev() {
        let scale = (1u64 << l) as f64;
        let next: Vec<u32> = current
            .iter()
            .copied()
            .filter(|&j| {
                scale * prefix_abs[(j - 1) as usize] < (scale * prefix_abs[j as usize]).floor()
            })
            .collect();
        levels.push(make_level(current, weights, &prefix_signed));
        current = next;
    }
    levels.push(make_level(current, weights, &prefix_signed));
    levels.reverse();

    debug_assert_eq!(levels[0].indices, vec![m as u32]);
    LevelStructure { max_level, levels, prefix_signed, prefix_abs }
}

fn make_level(indices: Vec<u32>, weights: &[f64], prefix_signed: &[f64]) -> Level {
    let mut coeffs: Vec<f64> = indices.iter().map(|&j| weights[(j - 1) as usize]).collect();
    let mut coeff0 = 0.0;
    let mut prev = 0u32;
    for (k, &j) in indices.iter().enumerate() {
        // W(prev+1, j-1), split evenly between the two pair endpoints
        let half = 0.5 * (prefix_signed[(j - 1) as usize] - prefix_signed[prev as usize]);
        if half != 0.0 {
            coeffs[k] += half;
            if k == 0 {
                coeff0 += half;
            } else {
                coeffs[k - 1] += half;
            }
        }
        prev = j;
    }
    Level { indices, coeffs, coeff0 }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn uniform(m: usize) -> MonitoringSchedule {
        let dates: Vec<f64> = (1..=m).map(|j| j as f64 * 2.0 / m as f64).collect();
        build_schedule(dates, vec![1.0; m]).unwrap()
    }

    #[test]
    fn normalizes_uniform_weights() {
        let s = build_schedule(vec![0.5, 1.0, 1.5, 2.0], vec![1.0, 1.0, 1.0, 1.0]).unwrap();
        assert_eq!(s.weights(), &[0.25, 0.25, 0.25, 0.25]);
        assert_eq!(s.maturity(), 2.0);
        assert_eq!(s.signed_total(), 1.0);
    }

    #[test]
    fn average_strike_weights_accepted_unchanged() {
        let s = build_schedule(vec![1.0, 2.0, 3.0], vec![-0.25, -0.25, 0.5]).unwrap();
        assert_eq!(s.weights(), &[-0.25, -0.25, 0.5]);
        assert_eq!(s.weights().iter().map(|w| w.abs()).sum::<f64>(), 1.0);
        assert_eq!(s.signed_total(), 0.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert_eq!(
            build_schedule(vec![1.0], vec![1.0, 2.0]),
            Err(EngineError::LengthMismatch { dates: 1, weights: 2 })
        );
        assert_eq!(build_schedule(vec![], vec![]), Err(EngineError::EmptySchedule));
        assert_eq!(build_schedule(vec![1.0, 1.0], vec![1.0, 1.0]), Err(EngineError::BadDates));
        assert_eq!(build_schedule(vec![-1.0, 1.0], vec![1.0, 1.0]), Err(EngineError::BadDates));
        assert_eq!(build_schedule(vec![1.0, 2.0], vec![0.0, 1.0]), Err(EngineError::ZeroWeight(0)));
    }

    #[test]
    fn level_sets_m4_uniform() {
        let ls = build_level_structure(&uniform(4));
        assert_eq!(ls.max_level(), 2);
        assert_eq!(ls.level_indices(0), &[4]);
        assert_eq!(ls.level_indices(1), &[2, 4]);
        assert_eq!(ls.level_indices(2), &[1, 2, 3, 4]);
    }

    #[test]
    fn level_sets_m1() {
        let ls = build_level_structure(&uniform(1));
        assert_eq!(ls.max_level(), 0);
        assert_eq!(ls.level_indices(0), &[1]);
    }

    #[test]
    fn level_sets_m3_average_strike() {
        let s = build_schedule(vec![1.0, 2.0, 3.0], vec![-0.25, -0.25, 0.5]).unwrap();
        let ls = build_level_structure(&s);
        assert_eq!(ls.max_level(), 2);
        assert_eq!(ls.level_indices(0), &[3]);
        assert_eq!(ls.level_indices(1), &[2, 3]);
        assert_eq!(ls.level_indices(2), &[1, 2, 3]);
    }

    #[test]
    fn functional_m4_uniform_level1() {
        let ls = build_level_structure(&uniform(4));
        let f = ls.functional(1);
        assert_eq!(f.coefficient(0), 0.125);
        assert_eq!(f.coefficient(2), 0.5);
        assert_eq!(f.coefficient(4), 0.375);
        assert_eq!(f.coefficient(1), 0.0);
        assert_eq!(f.coefficient(3), 0.0);
    }

    #[test]
    fn functional_level0_general_form() {
        for schedule in [
            uniform(7),
            build_schedule(vec![1.0, 2.0, 3.0], vec![-0.25, -0.25, 0.5]).unwrap(),
        ] {
            let m = schedule.len();
            let ls = build_level_structure(&schedule);
            let f = ls.functional(0);
            let w_head = ls.prefix_signed()[m - 1];
            assert!((f.coefficient(0) - w_head / 2.0).abs() < 1e-15);
            assert!(
                (f.coefficient(m as u32) - (schedule.weights()[m - 1] + w_head / 2.0)).abs()
                    < 1e-15
            );
        }
    }

    #[test]
    fn functional_at_or_above_top_equals_weights() {
        let s = uniform(6);
        let ls = build_level_structure(&s);
        for l in [ls.max_level(), ls.max_level() + 3] {
            let f = ls.functional(l);
            assert_eq!(f.coeff0, 0.0);
            assert_eq!(f.coeffs(), s.weights());
        }
    }

    #[test]
    fn evaluate_on_superset_matches_direct() {
        let s = uniform(8);
        let ls = build_level_structure(&s);
        let values: Vec<f64> = (1..=8).map(|j| 2.0 + 0.1 * j as f64).collect();
        let full: Vec<u32> = (1..=8).collect();
        for l in 0..=ls.max_level() {
            let f = ls.functional(l);
            let restricted: Vec<f64> =
                f.indices().iter().map(|&j| values[(j - 1) as usize]).collect();
            let direct = f.evaluate(2.0, &restricted);
            let via_superset = f.evaluate_on_superset(2.0, &full, &values);
            assert!((direct - via_superset).abs() < 1e-14);
        }
    }

    /// Direct evaluation of the floor condition over all of {1..m}; the
    /// backward induction must agree with it exactly.
    fn direct_level_set(prefix_abs: &[f64], m: usize, l: usize) -> Vec<u32> {
        let scale = (1u64 << l) as f64;
        (1..=m as u32)
            .filter(|&j| scale * prefix_abs[(j - 1) as usize] < (scale * prefix_abs[j as usize]).floor())
            .collect()
    }

    fn check_structure(s: &MonitoringSchedule) {
        let m = s.len();
        let ls = build_level_structure(s);
        let lmax = ls.max_level();
        assert_eq!(lmax, (m as f64).log2().ceil() as usize);

        assert_eq!(ls.level_indices(0), &[m as u32]);
        let full: Vec<u32> = (1..=m as u32).collect();
        assert_eq!(ls.level_indices(lmax), &full[..]);

        let mut total_size = 0usize;
        for l in 0..=lmax {
            let idx = ls.level_indices(l);
            total_size += idx.len();
            // size bound
            assert!(idx.len() <= (1usize << l) + 1, "|J_{l}| > 2^{l}+1 for m={m}");
            // nesting and agreement with the direct definition
            if l < lmax {
                let direct = direct_level_set(ls.prefix_abs(), m, l);
                assert_eq!(idx, &direct[..]);
                for j in idx {
                    assert!(ls.level_indices(l + 1).binary_search(j).is_ok());
                }
            }
            // pair-weight bound (up to an ulp of slack from the prefix subtraction)
            for (i, k, _) in ls.pairs(l) {
                let wa = ls.prefix_abs()[(k - 1) as usize] - ls.prefix_abs()[i as usize];
                assert!(wa <= (0.5f64).powi(l as i32) * (1.0 + 1e-12));
            }
            // coefficient sum identity
            let f = ls.functional(l);
            assert!((f.coefficient_sum() - s.signed_total()).abs() <= 1e-12);
        }
        assert!(total_size <= 4 * m + lmax + 1);
    }

    proptest! {
        #[test]
        fn structure_invariants_random_weights(
            m in 1usize..=64,
            signs in prop::collection::vec(prop::bool::ANY, 64),
            mags in prop::collection::vec(0.01f64..1.0, 64),
        ) {
            let dates: Vec<f64> = (1..=m).map(|j| j as f64 / m as f64).collect();
            let weights: Vec<f64> = (0..m)
                .map(|j| if signs[j] { mags[j] } else { -mags[j] })
                .collect();
            let s = build_schedule(dates, weights).unwrap();
            check_structure(&s);
        }
    }

    #[test]
    fn structure_invariants_named_cases() {
        for m in [1usize, 2, 3, 5, 8, 125, 250, 500] {
            check_structure(&uniform(m));
            if m >= 2 {
                let dates: Vec<f64> = (1..=m).map(|j| j as f64 * 2.0 / m as f64).collect();
                let mut w = vec![-0.5 / (m as f64 - 1.0); m];
                w[m - 1] = 0.5;
                check_structure(&build_schedule(dates, w).unwrap());
            }
        }
    }
}
