//! Price estimators: plain Monte Carlo, randomized multilevel (RMLMC),
//! classical multilevel (MLMC), and the coupled-scheme RMLMC variants.
//!
//! All estimators work on the centered payoff U = f(A) - a and report
//! discounted prices e^{-rT}(mean + a). Replications are independent,
//! so each estimator also has a `_parallel` form that fans the count
//! over deterministic worker streams and merges the accumulators in
//! worker order.

use crate::error::EngineError;
use crate::models::ForwardSampler;
use crate::payoff::OptionSpec;
use crate::rng::{stream_rng, EngineRng};
use crate::schedule::LevelStructure;
use crate::schemes::{coupled_into, CoupledPaths, CoupledScratch, Sde, SchemeKind};
use crate::stats::{EstimateReport, RunStatistics};

/// Worker-stream phases; every (estimator, level) pair draws from its
/// own stream so phases never overlap within one seed.
const PHASE_MAIN: u32 = 1;
const PHASE_BASELINE: u32 = 3;
const PHASE_MLMC_PILOT_BASE: u32 = 0x1000;
const PHASE_MLMC_MAIN_BASE: u32 = 0x2000;

/// Distribution of the random level N, as a finite probability table.
///
/// The geometric tail beyond the table is absorbed into the last atom.
/// For the untruncated forms the table runs until the remaining mass is
/// no longer robustly representable (around level 34 for β = 2, level 52
/// for the dyadic law); the absorbed tail is below 2^{-50} and therefore
/// unobservable in any feasible run.
#[derive(Debug, Clone)]
pub struct LevelDistribution {
    probs: Vec<f64>,
    cumulative: Vec<f64>,
}

impl LevelDistribution {
    const UNTRUNCATED_SUPPORT: usize = 64;

    fn from_ratio(ratio: f64, scale: f64, last_level: usize) -> Self {
        assert!(ratio > 0.0 && ratio < 1.0);
        let mut probs = Vec::with_capacity(last_level + 1);
        let mut cumulative = Vec::with_capacity(last_level + 1);
        let mut geo = (1.0 - ratio) * scale; // scale·(1-ρ)ρ^l
        let mut acc = 0.0;
        for _ in 0..last_level {
            let next = acc + geo;
            if 1.0 - next <= geo * 1e-3 {
                // remaining mass no longer robustly representable; stop
                // here and let the final atom absorb the tail
                break;
            }
            probs.push(geo);
            acc = next;
            cumulative.push(acc);
            geo *= ratio;
        }
        // the last atom absorbs the remaining mass so the table sums
        // to one exactly
        probs.push(1.0 - acc);
        cumulative.push(1.0);
        LevelDistribution { probs, cumulative }
    }

    /// Unbiased form p_l ∝ 2^{-(β+1)l/2} over all levels.
    pub fn unbiased_geometric(beta: f64) -> Self {
        Self::from_ratio((2.0f64).powf(-0.5 * (beta + 1.0)), 1.0, Self::UNTRUNCATED_SUPPORT)
    }

    /// Unbiased form truncated at `max_level` and renormalized. Valid for
    /// exact samplers: level differences above the top level vanish, so
    /// any positive probabilities on 0..=max_level keep the estimator
    /// unbiased while spending nothing on dead levels.
    pub fn unbiased_geometric_truncated(beta: f64, max_level: usize) -> Self {
        let ratio = (2.0f64).powf(-0.5 * (beta + 1.0));
        let norm = 1.0 - ratio.powi(max_level as i32 + 1);
        Self::from_ratio(ratio, 1.0 / norm, max_level)
    }

    /// Biased form p_l = 2^{-(l+1)}, with support reaching at least
    /// `min_support` where representable.
    pub fn biased_dyadic(min_support: usize) -> Self {
        Self::from_ratio(0.5, 1.0, Self::UNTRUNCATED_SUPPORT.max(min_support))
    }

    pub fn prob(&self, level: usize) -> f64 {
        self.probs.get(level).copied().unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn sample(&self, rng: &mut EngineRng) -> usize {
        let u: f64 = rand::Rng::random(rng);
        self.cumulative.partition_point(|&c| c <= u)
    }
}

/// Reused buffers for exact-sampler replications.
#[derive(Debug, Default)]
pub struct PathScratch {
    times: Vec<f64>,
    values: Vec<f64>,
}

/// One replication of U_l - U_{l-1} from a single exact path on J_l.
///
/// Both functionals are read off the same forward vector, which is valid
/// because the level sets are nested. Levels above the top return zero
/// without simulating, and level zero returns U_0 itself.
pub fn sample_level_difference_exact<S: ForwardSampler + ?Sized>(
    ls: &LevelStructure,
    spec: &OptionSpec,
    sampler: &S,
    level: usize,
    scratch: &mut PathScratch,
    rng: &mut EngineRng,
) -> (f64, u64) {
    if level > ls.max_level() {
        return (0.0, 0);
    }
    let indices = ls.level_indices(level);
    let dates = spec.schedule.dates();
    let full = level >= ls.max_level();
    if !full {
        scratch.times.clear();
        scratch.times.extend(indices.iter().map(|&j| dates[(j - 1) as usize]));
    }
    let times: &[f64] = if full { dates } else { &scratch.times };
    scratch.values.resize(times.len(), 0.0);
    sampler.sample_at(times, &mut scratch.values, rng);

    let f0 = sampler.f0();
    let a_l = ls.functional(level).evaluate(f0, &scratch.values);
    let u_l = spec.centered_payoff(a_l);
    let nodes = indices.len() as u64;
    if level == 0 {
        return (u_l, nodes);
    }
    let a_prev = ls.functional(level - 1).evaluate_on_superset(f0, indices, &scratch.values);
    (u_l - spec.centered_payoff(a_prev), nodes)
}

fn report(
    method: &'static str,
    spec: &OptionSpec,
    stats: &RunStatistics,
    bias_bound: Option<f64>,
) -> EstimateReport {
    let disc = spec.discount();
    EstimateReport {
        method,
        price: spec.price_from_mean(stats.mean()),
        std: disc * stats.std_error(),
        cost: stats.cost(),
        n: stats.count(),
        vrf: None,
        bias_bound,
    }
}

fn rmlmc_stats<S: ForwardSampler + ?Sized>(
    ls: &LevelStructure,
    spec: &OptionSpec,
    sampler: &S,
    dist: &LevelDistribution,
    count: u64,
    rng: &mut EngineRng,
) -> RunStatistics {
    let mut stats = RunStatistics::new();
    let mut scratch = PathScratch::default();
    for _ in 0..count {
        let level = dist.sample(rng);
        let (diff, nodes) = sample_level_difference_exact(ls, spec, sampler, level, &mut scratch, rng);
        stats.record(diff / dist.prob(level), nodes);
    }
    stats
}

/// The single-random-level unbiased estimator V = (U_N - U_{N-1})/p_N
/// for exact samplers, with N drawn from `dist`.
pub fn rmlmc_estimate<S: ForwardSampler + ?Sized>(
    ls: &LevelStructure,
    spec: &OptionSpec,
    sampler: &S,
    dist: &LevelDistribution,
    n: u64,
    rng: &mut EngineRng,
) -> EstimateReport {
    report("rmlmc", spec, &rmlmc_stats(ls, spec, sampler, dist, n, rng), None)
}

pub fn rmlmc_estimate_parallel<S: ForwardSampler + ?Sized>(
    ls: &LevelStructure,
    spec: &OptionSpec,
    sampler: &S,
    dist: &LevelDistribution,
    n: u64,
    seed: u64,
    workers: u32,
) -> EstimateReport {
    let stats = fan_out(n, seed, PHASE_MAIN, workers, |count, rng| {
        rmlmc_stats(ls, spec, sampler, dist, count, rng)
    });
    report("rmlmc", spec, &stats, None)
}

/// Per-level replication counts n_l = ⌊1 + budget·√(μ_l/|J_l|) / Σ_{l'}
/// √(μ_{l'}|J_{l'}|)⌋, where budget is the date count times the
/// allocation multiplier. A degenerate pilot (all variances zero)
/// floors every level at one replication.
pub fn mlmc_allocation(mu: &[f64], level_sizes: &[u64], budget: f64) -> Vec<u64> {
    let denom: f64 =
        mu.iter().zip(level_sizes).map(|(&m, &s)| (m * s as f64).sqrt()).sum();
    mu.iter()
        .zip(level_sizes)
        .map(|(&m, &s)| {
            if denom > 0.0 {
                (1.0 + budget * (m / s as f64).sqrt() / denom).floor() as u64
            } else {
                1
            }
        })
        .collect()
}

fn allocation_from_pilot(ls: &LevelStructure, pilot: &[RunStatistics], budget: f64) -> Vec<u64> {
    let mu: Vec<f64> = pilot.iter().map(|s| s.variance()).collect();
    let sizes: Vec<u64> = (0..pilot.len()).map(|l| ls.level_cost(l)).collect();
    mlmc_allocation(&mu, &sizes, budget)
}

fn mlmc_report(
    spec: &OptionSpec,
    outer_n: u64,
    pilot: &[RunStatistics],
    main: &[RunStatistics],
) -> EstimateReport {
    let mut mean = 0.0;
    let mut var_of_mean = 0.0;
    let mut cost: u64 = pilot.iter().map(|s| s.cost()).sum();
    for s in main {
        mean += s.mean();
        var_of_mean += s.variance() / s.count() as f64;
        cost += s.cost();
    }
    let disc = spec.discount();
    EstimateReport {
        method: "mlmc",
        price: spec.price_from_mean(mean),
        std: disc * var_of_mean.sqrt(),
        cost,
        n: outer_n,
        vrf: None,
        bias_bound: None,
    }
}

fn level_stats<S: ForwardSampler + ?Sized>(
    ls: &LevelStructure,
    spec: &OptionSpec,
    sampler: &S,
    level: usize,
    count: u64,
    rng: &mut EngineRng,
) -> RunStatistics {
    let mut stats = RunStatistics::new();
    let mut scratch = PathScratch::default();
    for _ in 0..count {
        let (diff, nodes) = sample_level_difference_exact(ls, spec, sampler, level, &mut scratch, rng);
        stats.record(diff, nodes);
    }
    stats
}

/// Classical MLMC: a pilot phase estimates the per-level variances μ_l,
/// the allocation formula fixes n_l (with the date count scaled by
/// `multiplier`), and an independent second phase simulates
/// outer_n·n_l differences per level. The reported variance uses the
/// second phase's sample variances; pilot cost is included in the cost.
pub fn mlmc_estimate<S: ForwardSampler + ?Sized>(
    ls: &LevelStructure,
    spec: &OptionSpec,
    sampler: &S,
    outer_n: u64,
    pilot_n: u64,
    multiplier: f64,
    rng: &mut EngineRng,
) -> Result<EstimateReport, EngineError> {
    if pilot_n < 2 || outer_n < 1 {
        return Err(EngineError::TooFewReplications { min: 2, got: pilot_n.min(outer_n) });
    }
    let levels = ls.max_level() + 1;
    let pilot: Vec<RunStatistics> =
        (0..levels).map(|l| level_stats(ls, spec, sampler, l, pilot_n, rng)).collect();
    let budget = multiplier * spec.schedule.len() as f64;
    let allocation = allocation_from_pilot(ls, &pilot, budget);
    let main: Vec<RunStatistics> = (0..levels)
        .map(|l| level_stats(ls, spec, sampler, l, outer_n * allocation[l], rng))
        .collect();
    Ok(mlmc_report(spec, outer_n, &pilot, &main))
}

#[allow(clippy::too_many_arguments)]
pub fn mlmc_estimate_parallel<S: ForwardSampler + ?Sized>(
    ls: &LevelStructure,
    spec: &OptionSpec,
    sampler: &S,
    outer_n: u64,
    pilot_n: u64,
    multiplier: f64,
    seed: u64,
    workers: u32,
) -> Result<EstimateReport, EngineError> {
    if pilot_n < 2 || outer_n < 1 {
        return Err(EngineError::TooFewReplications { min: 2, got: pilot_n.min(outer_n) });
    }
    let levels = ls.max_level() + 1;
    let pilot: Vec<RunStatistics> = (0..levels)
        .map(|l| {
            fan_out(pilot_n, seed, PHASE_MLMC_PILOT_BASE + l as u32, workers, |count, rng| {
                level_stats(ls, spec, sampler, l, count, rng)
            })
        })
        .collect();
    let budget = multiplier * spec.schedule.len() as f64;
    let allocation = allocation_from_pilot(ls, &pilot, budget);
    let main: Vec<RunStatistics> = (0..levels)
        .map(|l| {
            fan_out(outer_n * allocation[l], seed, PHASE_MLMC_MAIN_BASE + l as u32, workers, |count, rng| {
                level_stats(ls, spec, sampler, l, count, rng)
            })
        })
        .collect();
    Ok(mlmc_report(spec, outer_n, &pilot, &main))
}

/// One replication of Û_l - Û_{l-1} from a coupled scheme simulation.
#[allow(clippy::too_many_arguments)]
pub fn sample_level_difference_coupled(
    ls: &LevelStructure,
    spec: &OptionSpec,
    sde: &Sde,
    kind: SchemeKind,
    level: usize,
    scratch: &mut CoupledScratch,
    paths: &mut CoupledPaths,
    rng: &mut EngineRng,
) -> Result<(f64, u64), EngineError> {
    let j_fine = ls.level_indices(level);
    let j_coarse: &[u32] = if level > 0 { ls.level_indices(level - 1) } else { &[] };
    coupled_into(sde, kind, &spec.schedule, j_fine, j_coarse, level as u32, rng, scratch, paths)?;

    let a_fine = ls.functional(level).evaluate(sde.f0, &paths.fine);
    let u_fine = spec.centered_payoff(a_fine);
    let nodes = paths.fine_nodes + paths.coarse_nodes;
    if level == 0 {
        return Ok((u_fine, nodes));
    }
    let a_coarse = ls.functional(level - 1).evaluate(sde.f0, &paths.coarse);
    Ok((u_fine - spec.centered_payoff(a_coarse), nodes))
}

#[allow(clippy::too_many_arguments)]
fn coupled_stats(
    ls: &LevelStructure,
    spec: &OptionSpec,
    sde: &Sde,
    kind: SchemeKind,
    dist: &LevelDistribution,
    truncate_above: Option<usize>,
    count: u64,
    rng: &mut EngineRng,
) -> Result<RunStatistics, EngineError> {
    let mut stats = RunStatistics::new();
    let mut scratch = CoupledScratch::default();
    let mut paths = CoupledPaths::default();
    for _ in 0..count {
        let level = dist.sample(rng);
        if truncate_above.is_some_and(|lmax| level > lmax) {
            stats.record(0.0, 0);
            continue;
        }
        let (diff, nodes) =
            sample_level_difference_coupled(ls, spec, sde, kind, level, &mut scratch, &mut paths, rng)?;
        stats.record(diff / dist.prob(level), nodes);
    }
    Ok(stats)
}

/// Unbiased RMLMC on a coupled scheme: V̂ = (Û_N - Û_{N-1})/p_N with the
/// β = 2 geometric level law. Requires the Milstein scheme; no level
/// truncation is applied because Â_l keeps improving at every level.
pub fn rmlmc_coupled_estimate(
    ls: &LevelStructure,
    spec: &OptionSpec,
    sde: &Sde,
    kind: SchemeKind,
    n: u64,
    rng: &mut EngineRng,
) -> Result<EstimateReport, EngineError> {
    check_coupled_unbiased(sde, kind)?;
    let dist = LevelDistribution::unbiased_geometric(2.0);
    let stats = coupled_stats(ls, spec, sde, kind, &dist, None, n, rng)?;
    Ok(EstimateReport { method: "rmlmc-milstein", ..report("rmlmc", spec, &stats, None) })
}

pub fn rmlmc_coupled_estimate_parallel(
    ls: &LevelStructure,
    spec: &OptionSpec,
    sde: &Sde,
    kind: SchemeKind,
    n: u64,
    seed: u64,
    workers: u32,
) -> Result<EstimateReport, EngineError> {
    check_coupled_unbiased(sde, kind)?;
    let dist = LevelDistribution::unbiased_geometric(2.0);
    let stats = try_fan_out(n, seed, PHASE_MAIN, workers, |count, rng| {
        coupled_stats(ls, spec, sde, kind, &dist, None, count, rng)
    })?;
    Ok(EstimateReport { method: "rmlmc-milstein", ..report("rmlmc", spec, &stats, None) })
}

fn check_coupled_unbiased(sde: &Sde, kind: SchemeKind) -> Result<(), EngineError> {
    if kind != SchemeKind::Milstein {
        return Err(EngineError::UnbiasedNeedsMilstein);
    }
    if !sde.has_derivative() {
        return Err(EngineError::MissingDiffusionDerivative);
    }
    Ok(())
}

/// Truncation level L_ε = ⌈2 log2(1/ε)⌉ of the biased Euler estimator.
pub fn truncation_level(epsilon: f64) -> Result<usize, EngineError> {
    if !(epsilon > 0.0 && epsilon < 0.5) {
        return Err(EngineError::BadEpsilon(epsilon));
    }
    Ok((2.0 * (1.0 / epsilon).log2()).ceil() as usize)
}

/// Biased RMLMC on the Euler scheme: levels are drawn from p_l = 2^{-(l+1)}
/// and replications with N > L_ε contribute zero at zero cost. The
/// squared bias is bounded by c₃κ²ε²; when an estimate of c₃ is supplied
/// the report carries the resulting |bias| bound.
pub fn rmlmc_truncated_estimate(
    ls: &LevelStructure,
    spec: &OptionSpec,
    sde: &Sde,
    epsilon: f64,
    n: u64,
    c3_hat: Option<f64>,
    rng: &mut EngineRng,
) -> Result<EstimateReport, EngineError> {
    let lmax = truncation_level(epsilon)?;
    let dist = LevelDistribution::biased_dyadic(lmax + 1);
    let stats = coupled_stats(ls, spec, sde, SchemeKind::Euler, &dist, Some(lmax), n, rng)?;
    let bound = c3_hat.map(|c3| c3.sqrt() * spec.payoff.lipschitz_bound() * epsilon);
    Ok(EstimateReport { method: "rmlmc-euler-trunc", ..report("rmlmc", spec, &stats, bound) })
}

#[allow(clippy::too_many_arguments)]
pub fn rmlmc_truncated_estimate_parallel(
    ls: &LevelStructure,
    spec: &OptionSpec,
    sde: &Sde,
    epsilon: f64,
    n: u64,
    c3_hat: Option<f64>,
    seed: u64,
    workers: u32,
) -> Result<EstimateReport, EngineError> {
    let lmax = truncation_level(epsilon)?;
    let dist = LevelDistribution::biased_dyadic(lmax + 1);
    let stats = try_fan_out(n, seed, PHASE_MAIN, workers, |count, rng| {
        coupled_stats(ls, spec, sde, SchemeKind::Euler, &dist, Some(lmax), count, rng)
    })?;
    let bound = c3_hat.map(|c3| c3.sqrt() * spec.payoff.lipschitz_bound() * epsilon);
    Ok(EstimateReport { method: "rmlmc-euler-trunc", ..report("rmlmc", spec, &stats, bound) })
}

fn plain_mc_stats<S: ForwardSampler + ?Sized>(
    spec: &OptionSpec,
    sampler: &S,
    count: u64,
    rng: &mut EngineRng,
) -> RunStatistics {
    let mut stats = RunStatistics::new();
    let times = spec.schedule.dates();
    let weights = spec.schedule.weights();
    let mut values = vec![0.0; times.len()];
    for _ in 0..count {
        sampler.sample_at(times, &mut values, rng);
        let a: f64 = weights.iter().zip(&values).map(|(w, v)| w * v).sum();
        stats.record(spec.centered_payoff(a), times.len() as u64);
    }
    stats
}

/// Single-level Monte Carlo over all monitoring dates. Also returns the
/// sample variance of the undiscounted payoff f(A), the quantity the
/// variance reduction factor is defined against.
pub fn plain_mc_estimate<S: ForwardSampler + ?Sized>(
    spec: &OptionSpec,
    sampler: &S,
    n: u64,
    rng: &mut EngineRng,
) -> (EstimateReport, f64) {
    let stats = plain_mc_stats(spec, sampler, n, rng);
    // var(f(A)) = var(U): the two differ by the constant a
    (report("mc", spec, &stats, None), stats.variance())
}

pub fn plain_mc_estimate_parallel<S: ForwardSampler + ?Sized>(
    spec: &OptionSpec,
    sampler: &S,
    n: u64,
    seed: u64,
    workers: u32,
) -> (EstimateReport, f64) {
    let stats = fan_out(n, seed, PHASE_MAIN, workers, |count, rng| {
        plain_mc_stats(spec, sampler, count, rng)
    });
    (report("mc", spec, &stats, None), stats.variance())
}

/// Estimates var(f(A)) with full-path replications on a dedicated stream
/// family, so it never shares draws with a main run of the same seed.
/// Returns the variance and the node cost spent on it.
pub fn baseline_payoff_variance<S: ForwardSampler + ?Sized>(
    spec: &OptionSpec,
    sampler: &S,
    n: u64,
    seed: u64,
    workers: u32,
) -> (f64, u64) {
    let stats = fan_out(n, seed, PHASE_BASELINE, workers, |count, rng| {
        plain_mc_stats(spec, sampler, count, rng)
    });
    (stats.variance(), stats.cost())
}

/// Splits `n` replications over deterministic worker streams and merges
/// the per-worker accumulators in worker order, so a fixed
/// (seed, phase, workers) triple always produces the same statistics.
pub fn fan_out<F>(n: u64, seed: u64, phase: u32, workers: u32, job: F) -> RunStatistics
where
    F: Fn(u64, &mut EngineRng) -> RunStatistics + Sync,
{
    let result = try_fan_out::<_, std::convert::Infallible>(n, seed, phase, workers, |count, rng| {
        Ok(job(count, rng))
    });
    match result {
        Ok(stats) => stats,
        Err(e) => match e {},
    }
}

pub fn try_fan_out<F, E>(n: u64, seed: u64, phase: u32, workers: u32, job: F) -> Result<RunStatistics, E>
where
    F: Fn(u64, &mut EngineRng) -> Result<RunStatistics, E> + Sync,
    E: Send,
{
    let workers = workers.max(1);
    if workers == 1 {
        return job(n, &mut stream_rng(seed, phase, 0));
    }
    let base = n / workers as u64;
    let extra = n % workers as u64;
    let job = &job;
    let results: Vec<Result<RunStatistics, E>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let count = base + u64::from((w as u64) < extra);
                scope.spawn(move || job(count, &mut stream_rng(seed, phase, w)))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    let mut merged = RunStatistics::new();
    for r in results {
        merged.merge(&r?);
    }
    Ok(merged)
}
