//! Multilevel Monte Carlo pricing engine for discretely monitored Asian
//! options.
//!
//! The engine prices payoffs of the form f(Σ w_j F_j) on m monitoring
//! dates. Instead of simulating every date per replication, it builds
//! nested date subsets J_0 ⊆ … ⊆ J_L and trapezoidal approximations A_l
//! of the weighted average, then combines levels through either a random
//! level per replication (RMLMC, unbiased) or deterministic per-level
//! counts (MLMC). Exact samplers are provided for the Black-Scholes,
//! Merton jump-diffusion and Square-Root models; generic scalar SDEs are
//! handled through coupled Euler/Milstein discretizations.

pub mod error;
pub mod estimators;
pub mod harness;
pub mod models;
pub mod payoff;
pub mod rng;
pub mod schedule;
pub mod schemes;
pub mod stats;

pub use error::EngineError;
pub use rng::{stream_rng, EngineRng};
