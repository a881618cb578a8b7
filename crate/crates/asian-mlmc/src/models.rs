//! Exact forward-price samplers.
//!
//! Each model simulates the forward price (for delivery at T) on an
//! arbitrary increasing grid of dates, exactly in distribution and in
//! O(1) expected work per grid point. All randomness comes from the
//! caller-supplied stream, so samplers are freely shareable.

use rand_distr::{Distribution, Gamma, Poisson, StandardNormal};

use crate::rng::EngineRng;

/// A model able to simulate (F_j, j ∈ J) for any date subset J.
pub trait ForwardSampler: Sync {
    /// Initial forward price F_0.
    fn f0(&self) -> f64;

    /// Writes F at each of `times` (strictly increasing, positive) into
    /// `out`. One simulated node per grid point.
    fn sample_at(&self, times: &[f64], out: &mut [f64], rng: &mut EngineRng);

    /// E[F(T)^2] in closed form, where known.
    fn second_moment_at_maturity(&self) -> Option<f64> {
        None
    }
}

/// Black-Scholes model parameters, spot quoted.
#[derive(Debug, Clone, Copy)]
pub struct BlackScholesParams {
    pub spot: f64,
    pub volatility: f64,
    pub rate: f64,
    pub dividend_yield: f64,
    pub maturity: f64,
}

impl BlackScholesParams {
    pub fn forward(&self) -> f64 {
        self.spot * ((self.rate - self.dividend_yield) * self.maturity).exp()
    }
}

/// dF = σ F dW; forwards are lognormal and the grid recursion is exact.
#[derive(Debug, Clone, Copy)]
pub struct BlackScholes {
    f0: f64,
    sigma: f64,
    maturity: f64,
}

impl BlackScholes {
    pub fn new(params: BlackScholesParams) -> Self {
        assert!(params.volatility > 0.0 && params.maturity > 0.0);
        BlackScholes { f0: params.forward(), sigma: params.volatility, maturity: params.maturity }
    }

    pub fn from_forward(f0: f64, sigma: f64, maturity: f64) -> Self {
        BlackScholes { f0, sigma, maturity }
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

impl ForwardSampler for BlackScholes {
    fn f0(&self) -> f64 {
        self.f0
    }

    fn sample_at(&self, times: &[f64], out: &mut [f64], rng: &mut EngineRng) {
        let mut f = self.f0;
        let mut t_prev = 0.0;
        let drift = -0.5 * self.sigma * self.sigma;
        for (k, &t) in times.iter().enumerate() {
            let dt = t - t_prev;
            let z: f64 = StandardNormal.sample(rng);
            f *= (drift * dt + self.sigma * dt.sqrt() * z).exp();
            out[k] = f;
            t_prev = t;
        }
    }

    fn second_moment_at_maturity(&self) -> Option<f64> {
        Some(self.f0 * self.f0 * (self.sigma * self.sigma * self.maturity).exp())
    }
}

/// Merton jump-diffusion parameters, spot quoted.
///
/// The compensator identity jump_mean + 1 = exp(jump_log_mean +
/// jump_log_sd²/2) holds by construction.
#[derive(Debug, Clone, Copy)]
pub struct MertonParams {
    pub spot: f64,
    pub volatility: f64,
    pub rate: f64,
    pub dividend_yield: f64,
    pub jump_intensity: f64,
    pub jump_log_mean: f64,
    pub jump_log_sd: f64,
    pub maturity: f64,
}

impl MertonParams {
    pub fn forward(&self) -> f64 {
        self.spot * ((self.rate - self.dividend_yield) * self.maturity).exp()
    }

    pub fn jump_mean(&self) -> f64 {
        (self.jump_log_mean + 0.5 * self.jump_log_sd * self.jump_log_sd).exp() - 1.0
    }
}

/// dF/F(t-) = -λ·jump_mean·dt + σ dW + dJ with lognormal jump factors.
///
/// Per grid interval: Poisson jump count, one aggregated lognormal jump
/// draw, one diffusion draw, and the drift compensator, which keeps the
/// forward a martingale. Exact in distribution at the grid dates.
#[derive(Debug, Clone, Copy)]
pub struct MertonJumpDiffusion {
    f0: f64,
    sigma: f64,
    lambda: f64,
    jump_log_mean: f64,
    jump_log_sd: f64,
    jump_mean: f64,
    maturity: f64,
}

impl MertonJumpDiffusion {
    pub fn new(params: MertonParams) -> Self {
        assert!(params.jump_intensity >= 0.0 && params.jump_log_sd >= 0.0);
        MertonJumpDiffusion {
            f0: params.forward(),
            sigma: params.volatility,
            lambda: params.jump_intensity,
            jump_log_mean: params.jump_log_mean,
            jump_log_sd: params.jump_log_sd,
            jump_mean: params.jump_mean(),
            maturity: params.maturity,
        }
    }
}

impl ForwardSampler for MertonJumpDiffusion {
    fn f0(&self) -> f64 {
        self.f0
    }

    fn sample_at(&self, times: &[f64], out: &mut [f64], rng: &mut EngineRng) {
        let mut f = self.f0;
        let mut t_prev = 0.0;
        let drift = -(self.lambda * self.jump_mean) - 0.5 * self.sigma * self.sigma;
        for (k, &t) in times.iter().enumerate() {
            let dt = t - t_prev;
            let z: f64 = StandardNormal.sample(rng);
            let mut x = drift * dt + self.sigma * dt.sqrt() * z;
            if self.lambda > 0.0 {
                let jumps = Poisson::new(self.lambda * dt).unwrap().sample(rng);
                if jumps > 0.0 {
                    let z2: f64 = StandardNormal.sample(rng);
                    x += self.jump_log_mean * jumps + self.jump_log_sd * jumps.sqrt() * z2;
                }
            }
            f *= x.exp();
            out[k] = f;
            t_prev = t;
        }
    }

    fn second_moment_at_maturity(&self) -> Option<f64> {
        // E[F_T^2] = F_0^2 exp(σ²T + λT(E[Y²] - 1 - 2·jump_mean))
        let ey2 = (2.0 * self.jump_log_mean + 2.0 * self.jump_log_sd * self.jump_log_sd).exp();
        let expo = self.sigma * self.sigma * self.maturity
            + self.lambda * self.maturity * (ey2 - 1.0 - 2.0 * self.jump_mean);
        Some(self.f0 * self.f0 * expo.exp())
    }
}

/// Square-Root diffusion parameters. The process is quoted directly on
/// the forward: `f0` carries whichever convention the caller chose.
#[derive(Debug, Clone, Copy)]
pub struct SquareRootParams {
    pub f0: f64,
    pub volatility: f64,
    pub maturity: f64,
}

/// dF = σ √F dW. 4F/σ² is a squared Bessel process of dimension zero,
/// so one transition is an exact Poisson mixture of chi-square laws.
/// Zero is absorbing.
#[derive(Debug, Clone, Copy)]
pub struct SquareRoot {
    f0: f64,
    sigma: f64,
    maturity: f64,
}

impl SquareRoot {
    pub fn new(params: SquareRootParams) -> Self {
        assert!(params.volatility > 0.0);
        SquareRoot { f0: params.f0, sigma: params.volatility, maturity: params.maturity }
    }
}

/// One exact transition of the Square-Root diffusion over a gap `dt`:
/// draw N ~ Poisson(2 f_prev/(σ² dt)), then (σ² dt/4)·χ²_{2N}, where
/// χ²_0 = 0 and χ²_{2N} is realized as Gamma(N, 2). Expected O(1) work.
pub fn square_root_step(f_prev: f64, dt: f64, sigma: f64, rng: &mut EngineRng) -> f64 {
    if f_prev == 0.0 {
        return 0.0;
    }
    let mean = 2.0 * f_prev / (sigma * sigma * dt);
    let n = Poisson::new(mean).unwrap().sample(rng);
    if n == 0.0 {
        return 0.0;
    }
    let g = Gamma::new(n, 2.0).unwrap().sample(rng);
    0.25 * sigma * sigma * dt * g
}

impl ForwardSampler for SquareRoot {
    fn f0(&self) -> f64 {
        self.f0
    }

    fn sample_at(&self, times: &[f64], out: &mut [f64], rng: &mut EngineRng) {
        let mut f = self.f0;
        let mut t_prev = 0.0;
        for (k, &t) in times.iter().enumerate() {
            f = square_root_step(f, t - t_prev, self.sigma, rng);
            out[k] = f;
            t_prev = t;
        }
    }

    fn second_moment_at_maturity(&self) -> Option<f64> {
        // var F(T) = σ² F_0 T by the isometry of the stochastic integral
        Some(self.f0 * self.f0 + self.sigma * self.sigma * self.f0 * self.maturity)
    }
}
