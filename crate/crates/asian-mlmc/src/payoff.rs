//! Lipschitz payoffs and option specifications.
//!
//! A payoff maps the weighted average A to the option payout. The two
//! built-in families cover average price calls and average strike calls,
//! each in two quotations: directly on forward/futures prices, and on
//! spot prices. In the spot quotation the deterministic spot/forward
//! ratios are folded into the weights and the normalization scale is
//! absorbed by the payoff function, so the engine always works with
//! weights whose absolute values sum to one.

use std::sync::Arc;

use crate::error::EngineError;
use crate::schedule::MonitoringSchedule;

/// A Lipschitz function of the weighted average, with its constant.
#[derive(Clone)]
pub struct Payoff {
    eval: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    lipschitz_bound: f64,
    description: String,
}

impl Payoff {
    pub fn new(
        eval: impl Fn(f64) -> f64 + Send + Sync + 'static,
        lipschitz_bound: f64,
        description: impl Into<String>,
    ) -> Self {
        Payoff { eval: Arc::new(eval), lipschitz_bound, description: description.into() }
    }

    #[inline]
    pub fn evaluate(&self, x: f64) -> f64 {
        (self.eval)(x)
    }

    pub fn lipschitz_bound(&self) -> f64 {
        self.lipschitz_bound
    }

    pub fn description(&self) -> &str {
        &self.description
    }
}

impl std::fmt::Debug for Payoff {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Payoff")
            .field("lipschitz_bound", &self.lipschitz_bound)
            .field("description", &self.description)
            .finish()
    }
}

/// Equidistant dates t_i = i·T/m.
fn equidistant_dates(m: u32, maturity: f64) -> Vec<f64> {
    (1..=m).map(|i| i as f64 * maturity / m as f64).collect()
}

/// Average price call on futures prices: w_j = 1/m, f(x) = max(x-K, 0).
pub fn average_price_call(
    m: u32,
    strike: f64,
    maturity: f64,
) -> Result<(Vec<f64>, Vec<f64>, Payoff), EngineError> {
    if m == 0 {
        return Err(EngineError::TooFewDates { min: 1, got: 0 });
    }
    let dates = equidistant_dates(m, maturity);
    let weights = vec![1.0 / m as f64; m as usize];
    let payoff = Payoff::new(
        move |x| (x - strike).max(0.0),
        1.0,
        format!("average price call, K={strike}"),
    );
    Ok((dates, weights, payoff))
}

/// Average strike call on futures prices:
/// w_1 = … = w_{m-1} = -(m-1)^{-1}/2, w_m = 1/2, f(x) = 2·max(x, 0).
pub fn average_strike_call(
    m: u32,
    maturity: f64,
) -> Result<(Vec<f64>, Vec<f64>, Payoff), EngineError> {
    if m < 2 {
        return Err(EngineError::TooFewDates { min: 2, got: m });
    }
    let dates = equidistant_dates(m, maturity);
    let mut weights = vec![-0.5 / (m as f64 - 1.0); m as usize];
    weights[m as usize - 1] = 0.5;
    let payoff = Payoff::new(|x| 2.0 * x.max(0.0), 2.0, "average strike call");
    Ok((dates, weights, payoff))
}

/// Average price call on spot prices, max(m^{-1} Σ S_i - K, 0).
///
/// With deterministic rates, S_i = e^{-carry(T-t_i)} F_i where carry is
/// the forward drift r - q. The ratios move into the weights and their
/// total c = m^{-1} Σ e^{-carry(T-t_i)} is absorbed by the payoff:
/// f(x) = max(c·x - K, 0), which is c-Lipschitz.
pub fn spot_average_price_call(
    m: u32,
    strike: f64,
    maturity: f64,
    carry: f64,
) -> Result<(Vec<f64>, Vec<f64>, Payoff), EngineError> {
    if m == 0 {
        return Err(EngineError::TooFewDates { min: 1, got: 0 });
    }
    let dates = equidistant_dates(m, maturity);
    let weights: Vec<f64> =
        dates.iter().map(|&t| (-carry * (maturity - t)).exp() / m as f64).collect();
    let scale: f64 = weights.iter().sum();
    let payoff = Payoff::new(
        move |x| (scale * x - strike).max(0.0),
        scale,
        format!("average price call on spot, K={strike}"),
    );
    Ok((dates, weights, payoff))
}

/// Average strike call on spot prices, max(S_m - (m-1)^{-1} Σ_{i<m} S_i, 0).
///
/// Raw weights are 1 at the last date and -(m-1)^{-1} e^{-carry(T-t_i)}
/// before it; the absolute total c is absorbed as f(x) = c·max(x, 0).
pub fn spot_average_strike_call(
    m: u32,
    maturity: f64,
    carry: f64,
) -> Result<(Vec<f64>, Vec<f64>, Payoff), EngineError> {
    if m < 2 {
        return Err(EngineError::TooFewDates { min: 2, got: m });
    }
    let dates = equidistant_dates(m, maturity);
    let mut weights: Vec<f64> = dates
        .iter()
        .map(|&t| -(-carry * (maturity - t)).exp() / (m as f64 - 1.0))
        .collect();
    weights[m as usize - 1] = 1.0;
    let scale: f64 = weights.iter().map(|w| w.abs()).sum();
    let payoff =
        Payoff::new(move |x| scale * x.max(0.0), scale, "average strike call on spot");
    Ok((dates, weights, payoff))
}

/// Everything needed to price one option: schedule, payoff, the centering
/// constant a = f(W(1,m)·F_0), and the discount rate.
#[derive(Debug, Clone)]
pub struct OptionSpec {
    pub schedule: Arc<MonitoringSchedule>,
    pub payoff: Payoff,
    /// a = f(W(1,m)·F_0); estimators work on U = f(A) - a.
    pub baseline: f64,
    /// Continuously compounded risk-free rate for discounting.
    pub rate: f64,
}

impl OptionSpec {
    pub fn new(schedule: Arc<MonitoringSchedule>, payoff: Payoff, rate: f64, f0: f64) -> Self {
        let baseline = payoff.evaluate(schedule.signed_total() * f0);
        OptionSpec { schedule, payoff, baseline, rate }
    }

    pub fn maturity(&self) -> f64 {
        self.schedule.maturity()
    }

    /// U = f(x) - a for an A-approximation x.
    #[inline]
    pub fn centered_payoff(&self, x: f64) -> f64 {
        self.payoff.evaluate(x) - self.baseline
    }

    pub fn discount(&self) -> f64 {
        (-self.rate * self.maturity()).exp()
    }

    /// Discounted price from an estimator mean: e^{-rT}(mean + a).
    pub fn price_from_mean(&self, mean: f64) -> f64 {
        self.discount() * (mean + self.baseline)
    }
}
