//! Coupled Euler and Milstein discretizations on merged grids.
//!
//! The level-l grid G(J,l) merges the requested monitoring dates with the
//! dyadic grid {i·2^{-l}·T}. Consecutive levels are coupled exactly by
//! drawing Brownian increments once per fine-grid gap and summing them
//! for the coarse grid, which is always a subset of the fine grid.

use std::sync::Arc;

use rand_distr::{Distribution, StandardNormal};

use crate::error::EngineError;
use crate::rng::EngineRng;
use crate::schedule::MonitoringSchedule;

/// A scalar driftless SDE dF = b(F,t) dW.
#[derive(Clone)]
pub struct Sde {
    pub f0: f64,
    diffusion: Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>,
    diffusion_dx: Option<Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>>,
}

impl Sde {
    pub fn new(
        f0: f64,
        diffusion: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        diffusion_dx: Option<Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>>,
    ) -> Self {
        Sde { f0, diffusion: Arc::new(diffusion), diffusion_dx }
    }

    /// b(x,t) = σx, b' = σ.
    pub fn black_scholes(f0: f64, sigma: f64) -> Self {
        Sde {
            f0,
            diffusion: Arc::new(move |x, _| sigma * x),
            diffusion_dx: Some(Arc::new(move |_, _| sigma)),
        }
    }

    /// Additive noise b(x,t) = c; the Euler scheme is exact for it.
    pub fn constant_diffusion(f0: f64, c: f64) -> Self {
        Sde {
            f0,
            diffusion: Arc::new(move |_, _| c),
            diffusion_dx: Some(Arc::new(|_, _| 0.0)),
        }
    }

    #[inline]
    pub fn diffusion(&self, x: f64, t: f64) -> f64 {
        (self.diffusion)(x, t)
    }

    pub fn has_derivative(&self) -> bool {
        self.diffusion_dx.is_some()
    }

    #[inline]
    fn derivative(&self, x: f64, t: f64) -> f64 {
        (self.diffusion_dx.as_ref().expect("checked by caller"))(x, t)
    }
}

impl std::fmt::Debug for Sde {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Sde")
            .field("f0", &self.f0)
            .field("has_derivative", &self.has_derivative())
            .finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemeKind {
    Euler,
    Milstein,
}

/// The sorted union G(J,l) = {t_j : j ∈ J} ∪ {i·2^{-l}·T}, with the grid
/// position of each requested date.
#[derive(Debug, Clone)]
pub struct MergedGrid {
    pub level: u32,
    /// Grid times starting at 0.
    pub times: Vec<f64>,
    /// For each j in the source subset, the position of t_j in `times`.
    pub date_positions: Vec<usize>,
}

impl MergedGrid {
    /// Simulated states on this grid (time zero is deterministic).
    pub fn nodes(&self) -> u64 {
        (self.times.len() - 1) as u64
    }
}

/// Dyadic point i·2^{-l}·T, computed so that refining l preserves bits.
#[inline]
fn dyadic(i: u64, level: u32, maturity: f64) -> f64 {
    i as f64 * maturity / (1u64 << level) as f64
}

pub fn build_merged_grid(schedule: &MonitoringSchedule, subset: &[u32], level: u32) -> MergedGrid {
    let maturity = schedule.maturity();
    let dates = schedule.dates();
    let mut times: Vec<f64> = Vec::with_capacity(subset.len() + (1usize << level) + 1);
    times.extend(subset.iter().map(|&j| dates[(j - 1) as usize]));
    times.extend((0..=(1u64 << level)).map(|i| dyadic(i, level, maturity)));
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    times.dedup();

    let date_positions = subset
        .iter()
        .map(|&j| {
            let t = dates[(j - 1) as usize];
            times.binary_search_by(|x| x.partial_cmp(&t).unwrap()).expect("date is in its own grid")
        })
        .collect();

    MergedGrid { level, times, date_positions }
}

/// One Brownian increment per grid gap.
pub fn brownian_increments(times: &[f64], out: &mut Vec<f64>, rng: &mut EngineRng) {
    out.clear();
    let mut t_prev = times[0];
    for &t in &times[1..] {
        let z: f64 = StandardNormal.sample(rng);
        out.push((t - t_prev).sqrt() * z);
        t_prev = t;
    }
}

/// Steps the scheme along `times` with the given increments, writing the
/// state after each step (so `out.len() == times.len() - 1`).
pub fn scheme_path(
    sde: &Sde,
    kind: SchemeKind,
    times: &[f64],
    increments: &[f64],
    out: &mut Vec<f64>,
) -> Result<(), EngineError> {
    debug_assert_eq!(increments.len(), times.len() - 1);
    out.clear();
    let mut f = sde.f0;
    for (k, &dw) in increments.iter().enumerate() {
        let t = times[k];
        let b = sde.diffusion(f, t);
        let mut next = f + b * dw;
        if kind == SchemeKind::Milstein {
            let dt = times[k + 1] - t;
            next += 0.5 * b * sde.derivative(f, t) * (dw * dw - dt);
        }
        f = next;
        out.push(f);
    }
    if !f.is_finite() {
        return Err(EngineError::NonFiniteState);
    }
    Ok(())
}

/// Approximate forwards at two consecutive levels driven by one
/// Brownian path.
#[derive(Debug, Clone, Default)]
pub struct CoupledPaths {
    /// F̂(J_fine, l) at the requested fine date indices.
    pub fine: Vec<f64>,
    /// F̂(J_coarse, l-1); empty at level zero.
    pub coarse: Vec<f64>,
    /// Simulated states on the fine grid.
    pub fine_nodes: u64,
    /// Simulated states on the coarse grid.
    pub coarse_nodes: u64,
}

/// Scratch buffers reused across coupled replications.
#[derive(Debug, Default)]
pub struct CoupledScratch {
    incs: Vec<f64>,
    coarse_incs: Vec<f64>,
    path: Vec<f64>,
}

pub fn euler_coupled(
    sde: &Sde,
    schedule: &MonitoringSchedule,
    j_fine: &[u32],
    j_coarse: &[u32],
    level: u32,
    rng: &mut EngineRng,
) -> Result<CoupledPaths, EngineError> {
    let mut out = CoupledPaths::default();
    coupled_into(sde, SchemeKind::Euler, schedule, j_fine, j_coarse, level, rng,
        &mut CoupledScratch::default(), &mut out)?;
    Ok(out)
}

pub fn milstein_coupled(
    sde: &Sde,
    schedule: &MonitoringSchedule,
    j_fine: &[u32],
    j_coarse: &[u32],
    level: u32,
    rng: &mut EngineRng,
) -> Result<CoupledPaths, EngineError> {
    if !sde.has_derivative() {
        return Err(EngineError::MissingDiffusionDerivative);
    }
    let mut out = CoupledPaths::default();
    coupled_into(sde, SchemeKind::Milstein, schedule, j_fine, j_coarse, level, rng,
        &mut CoupledScratch::default(), &mut out)?;
    Ok(out)
}

/// Core coupled simulation. At level zero only the fine path is built.
#[allow(clippy::too_many_arguments)]
pub fn coupled_into(
    sde: &Sde,
    kind: SchemeKind,
    schedule: &MonitoringSchedule,
    j_fine: &[u32],
    j_coarse: &[u32],
    level: u32,
    rng: &mut EngineRng,
    scratch: &mut CoupledScratch,
    out: &mut CoupledPaths,
) -> Result<(), EngineError> {
    if kind == SchemeKind::Milstein && !sde.has_derivative() {
        return Err(EngineError::MissingDiffusionDerivative);
    }
    let fine = build_merged_grid(schedule, j_fine, level);
    brownian_increments(&fine.times, &mut scratch.incs, rng);

    scheme_path(sde, kind, &fine.times, &scratch.incs, &mut scratch.path)?;
    out.fine.clear();
    out.fine.extend(fine.date_positions.iter().map(|&p| scratch.path[p - 1]));
    out.fine_nodes = fine.nodes();

    out.coarse.clear();
    out.coarse_nodes = 0;
    if level > 0 {
        let coarse = build_merged_grid(schedule, j_coarse, level - 1);
        // G(J_coarse, l-1) ⊆ G(J_fine, l): sum the fine increments
        // between consecutive coarse times.
        scratch.coarse_incs.clear();
        let mut p = 0usize;
        for &t in &coarse.times[1..] {
            let mut acc = 0.0;
            loop {
                acc += scratch.incs[p];
                p += 1;
                if fine.times[p] == t {
                    break;
                }
            }
            scratch.coarse_incs.push(acc);
        }
        scheme_path(sde, kind, &coarse.times, &scratch.coarse_incs, &mut scratch.path)?;
        out.coarse.extend(coarse.date_positions.iter().map(|&p| scratch.path[p - 1]));
        out.coarse_nodes = coarse.nodes();
    }
    Ok(())
}
