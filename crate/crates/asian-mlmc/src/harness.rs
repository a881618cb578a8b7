//! Experiment runner: builds option specs from a flat configuration,
//! dispatches any estimator/model combination, computes variance
//! reduction factors against a cached single-level baseline, and emits
//! result rows as CSV.

use std::collections::HashMap;
use std::sync::Arc;

use thiserror::Error;

use crate::estimators::{
    baseline_payoff_variance, mlmc_estimate_parallel, plain_mc_estimate_parallel,
    rmlmc_coupled_estimate_parallel, rmlmc_estimate_parallel, rmlmc_truncated_estimate_parallel,
    LevelDistribution,
};
use crate::error::EngineError;
use crate::models::{
    BlackScholes, BlackScholesParams, ForwardSampler, MertonJumpDiffusion, MertonParams,
    SquareRoot, SquareRootParams,
};
use crate::payoff::{spot_average_price_call, spot_average_strike_call, OptionSpec};
use crate::schedule::{build_level_structure, build_schedule};
use crate::schemes::{Sde, SchemeKind};
use crate::stats::EstimateReport;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config: {0}")]
    Invalid(String),
    #[error("engine: {0}")]
    Engine(#[from] EngineError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    BlackScholes,
    Merton,
    SquareRoot,
}

impl ModelKind {
    pub fn label(&self) -> &'static str {
        match self {
            ModelKind::BlackScholes => "bs",
            ModelKind::Merton => "merton",
            ModelKind::SquareRoot => "sqr",
        }
    }

    pub fn parse(s: &str) -> Result<Self, ConfigError> {
        match s {
            "bs" => Ok(ModelKind::BlackScholes),
            "merton" => Ok(ModelKind::Merton),
            "sqr" => Ok(ModelKind::SquareRoot),
            other => Err(invalid(format!("unknown model '{other}' (expected bs|merton|sqr)"))),
        }
    }
}

/// Whether the Square-Root process level is quoted as the initial
/// forward S_0·e^{rT} (default) or as the spot itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SqrQuote {
    Forward,
    Spot,
}

/// Model parameters; the defaults are the benchmark desk parameters of
/// each model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub spot: f64,
    pub sigma: f64,
    pub rate: f64,
    pub dividend: f64,
    pub jump_intensity: f64,
    pub jump_log_mean: f64,
    pub jump_log_sd: f64,
    pub maturity: f64,
    pub sqr_quote: SqrQuote,
}

impl ModelConfig {
    pub fn defaults(kind: ModelKind) -> Self {
        match kind {
            ModelKind::BlackScholes => ModelConfig {
                kind,
                spot: 2.0,
                sigma: 0.5,
                rate: 0.05,
                dividend: 0.0,
                jump_intensity: 0.0,
                jump_log_mean: 0.0,
                jump_log_sd: 0.0,
                maturity: 2.0,
                sqr_quote: SqrQuote::Forward,
            },
            ModelKind::Merton => ModelConfig {
                kind,
                spot: 2.0,
                sigma: 0.1765,
                rate: 0.0559,
                dividend: 0.0114,
                jump_intensity: 0.0890,
                jump_log_mean: -0.8898,
                jump_log_sd: 0.4505,
                maturity: 2.0,
                sqr_quote: SqrQuote::Forward,
            },
            ModelKind::SquareRoot => ModelConfig {
                kind,
                spot: 2.0,
                sigma: 0.4,
                rate: 0.05,
                dividend: 0.0,
                jump_intensity: 0.0,
                jump_log_mean: 0.0,
                jump_log_sd: 0.0,
                maturity: 2.0,
                sqr_quote: SqrQuote::Forward,
            },
        }
    }

    /// Initial forward price under this configuration.
    pub fn forward(&self) -> f64 {
        match (self.kind, self.sqr_quote) {
            (ModelKind::SquareRoot, SqrQuote::Spot) => self.spot,
            _ => self.spot * ((self.rate - self.dividend) * self.maturity).exp(),
        }
    }

    /// Forward drift used to map spot payoffs onto forward weights.
    /// Zero when the simulated process is the spot itself.
    pub fn carry(&self) -> f64 {
        match (self.kind, self.sqr_quote) {
            (ModelKind::SquareRoot, SqrQuote::Spot) => 0.0,
            _ => self.rate - self.dividend,
        }
    }

    fn sampler(&self) -> Box<dyn ForwardSampler> {
        match self.kind {
            ModelKind::BlackScholes => Box::new(BlackScholes::new(BlackScholesParams {
                spot: self.spot,
                volatility: self.sigma,
                rate: self.rate,
                dividend_yield: self.dividend,
                maturity: self.maturity,
            })),
            ModelKind::Merton => Box::new(MertonJumpDiffusion::new(MertonParams {
                spot: self.spot,
                volatility: self.sigma,
                rate: self.rate,
                dividend_yield: self.dividend,
                jump_intensity: self.jump_intensity,
                jump_log_mean: self.jump_log_mean,
                jump_log_sd: self.jump_log_sd,
                maturity: self.maturity,
            })),
            ModelKind::SquareRoot => Box::new(SquareRoot::new(SquareRootParams {
                f0: self.forward(),
                volatility: self.sigma,
                maturity: self.maturity,
            })),
        }
    }

    fn cache_token(&self) -> String {
        format!(
            "{:?}|{:?}|{:x}|{:x}|{:x}|{:x}|{:x}|{:x}|{:x}|{:x}",
            self.kind,
            self.sqr_quote,
            self.spot.to_bits(),
            self.sigma.to_bits(),
            self.rate.to_bits(),
            self.dividend.to_bits(),
            self.jump_intensity.to_bits(),
            self.jump_log_mean.to_bits(),
            self.jump_log_sd.to_bits(),
            self.maturity.to_bits(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OptionKind {
    AveragePriceCall,
    AverageStrikeCall,
}

impl OptionKind {
    pub fn label(&self) -> &'static str {
        match self {
            OptionKind::AveragePriceCall => "avg-price-call",
            OptionKind::AverageStrikeCall => "avg-strike-call",
        }
    }

    pub fn parse(s: &str) -> Result<Self, ConfigError> {
        match s {
            "avg-price-call" => Ok(OptionKind::AveragePriceCall),
            "avg-strike-call" => Ok(OptionKind::AverageStrikeCall),
            other => Err(invalid(format!(
                "unknown option '{other}' (expected avg-price-call|avg-strike-call)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Mc,
    Rmlmc,
    Mlmc,
    RmlmcMilstein,
    RmlmcEulerTrunc,
}

impl Method {
    pub fn label(&self) -> &'static str {
        match self {
            Method::Mc => "mc",
            Method::Rmlmc => "rmlmc",
            Method::Mlmc => "mlmc",
            Method::RmlmcMilstein => "rmlmc-milstein",
            Method::RmlmcEulerTrunc => "rmlmc-euler-trunc",
        }
    }

    pub fn parse(s: &str) -> Result<Self, ConfigError> {
        match s {
            "mc" => Ok(Method::Mc),
            "rmlmc" => Ok(Method::Rmlmc),
            "mlmc" => Ok(Method::Mlmc),
            "rmlmc-milstein" => Ok(Method::RmlmcMilstein),
            "rmlmc-euler-trunc" => Ok(Method::RmlmcEulerTrunc),
            other => Err(invalid(format!(
                "unknown method '{other}' (expected mc|rmlmc|mlmc|rmlmc-milstein|rmlmc-euler-trunc)"
            ))),
        }
    }

    fn needs_scheme(&self) -> bool {
        matches!(self, Method::RmlmcMilstein | Method::RmlmcEulerTrunc)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub option: OptionKind,
    /// Strike, average price calls only.
    pub strike: Option<f64>,
    pub m: u32,
    pub method: Method,
    pub n: u64,
    pub pilot_n: u64,
    pub budget_multiplier: f64,
    /// Target accuracy, truncated estimator only.
    pub epsilon: Option<f64>,
    pub seed: u64,
    pub workers: u32,
    /// Replications for the var(f(A)) baseline; zero disables the VRF.
    pub baseline_n: u64,
    /// Keep the full geometric level law instead of truncating it at
    /// the top level (literal-replication mode for exact samplers).
    pub untruncated_levels: bool,
}

impl ExperimentConfig {
    pub fn new(model: ModelConfig, option: OptionKind, m: u32, method: Method, n: u64) -> Self {
        ExperimentConfig {
            model,
            option,
            strike: None,
            m,
            method,
            n,
            pilot_n: 10_000,
            budget_multiplier: 30.0,
            epsilon: None,
            seed: 1,
            workers: 1,
            baseline_n: 100_000,
            untruncated_levels: false,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        match self.option {
            OptionKind::AveragePriceCall => {
                if self.strike.is_none() {
                    return Err(invalid("avg-price-call requires --strike"));
                }
            }
            OptionKind::AverageStrikeCall => {
                if self.strike.is_some() {
                    return Err(invalid("avg-strike-call takes no --strike"));
                }
            }
        }
        match self.method {
            Method::RmlmcEulerTrunc => {
                if self.epsilon.is_none() {
                    return Err(invalid("rmlmc-euler-trunc requires --epsilon"));
                }
            }
            _ => {
                if self.epsilon.is_some() {
                    return Err(invalid("--epsilon only applies to rmlmc-euler-trunc"));
                }
            }
        }
        if self.method.needs_scheme() && self.model.kind != ModelKind::BlackScholes {
            return Err(invalid(format!(
                "{} is only wired to the Black-Scholes SDE; {} has no usable scalar discretization here",
                self.method.label(),
                self.model.kind.label()
            )));
        }
        if self.n == 0 {
            return Err(invalid("--n must be positive"));
        }
        Ok(())
    }
}

/// One results-table row. Floating fields are rounded to six significant
/// digits at construction, which is exactly what the CSV form carries.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub method: String,
    pub model: String,
    pub option: String,
    pub m: u32,
    pub n: u64,
    pub price: f64,
    pub std: f64,
    pub cost: u64,
    pub work_norm_var: f64,
    pub vrf: Option<f64>,
}

pub const CSV_HEADER: &str = "method,model,option,m,n,price,std,cost,work_norm_var,vrf";

/// Renders with six significant digits; plain decimal for moderate
/// exponents, scientific otherwise.
pub fn format_sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{:.5e}", x);
    let exp: i32 = sci[sci.find('e').unwrap() + 1..].parse().unwrap();
    let rounded: f64 = sci.parse().unwrap();
    if (-4..=8).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        let mut s = format!("{rounded:.decimals$}");
        if s.contains('.') {
            while s.ends_with('0') {
                s.pop();
            }
            if s.ends_with('.') {
                s.pop();
            }
        }
        s
    } else {
        let (mantissa, e) = sci.split_at(sci.find('e').unwrap());
        let mut m = mantissa.to_string();
        while m.ends_with('0') {
            m.pop();
        }
        if m.ends_with('.') {
            m.pop();
        }
        format!("{m}{e}")
    }
}

/// The value the six-digit rendering denotes.
pub fn round_sig6(x: f64) -> f64 {
    format_sig6(x).parse().unwrap()
}

impl TableRow {
    fn from_report(cfg: &ExperimentConfig, report: &EstimateReport, vrf: Option<f64>) -> Self {
        TableRow {
            method: cfg.method.label().to_string(),
            model: cfg.model.kind.label().to_string(),
            option: cfg.option.label().to_string(),
            m: cfg.m,
            n: report.n,
            price: round_sig6(report.price),
            std: round_sig6(report.std),
            cost: report.cost,
            work_norm_var: round_sig6(report.work_normalized_variance()),
            vrf: vrf.map(round_sig6),
        }
    }

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.method,
            self.model,
            self.option,
            self.m,
            self.n,
            format_sig6(self.price),
            format_sig6(self.std),
            self.cost,
            format_sig6(self.work_norm_var),
            self.vrf.map(format_sig6).unwrap_or_default(),
        )
    }

    pub fn from_csv(line: &str) -> Result<TableRow, ConfigError> {
        let fields: Vec<&str> = line.trim_end().split(',').collect();
        if fields.len() != 10 {
            return Err(invalid(format!("expected 10 CSV fields, got {}", fields.len())));
        }
        let num = |s: &str, what: &str| -> Result<f64, ConfigError> {
            s.parse().map_err(|_| invalid(format!("bad {what}: '{s}'")))
        };
        Ok(TableRow {
            method: fields[0].to_string(),
            model: fields[1].to_string(),
            option: fields[2].to_string(),
            m: fields[3].parse().map_err(|_| invalid("bad m"))?,
            n: fields[4].parse().map_err(|_| invalid("bad n"))?,
            price: num(fields[5], "price")?,
            std: num(fields[6], "std")?,
            cost: fields[7].parse().map_err(|_| invalid("bad cost"))?,
            work_norm_var: num(fields[8], "work_norm_var")?,
            vrf: if fields[9].is_empty() { None } else { Some(num(fields[9], "vrf")?) },
        })
    }
}

/// Runs experiments, caching the single-level baseline variance per
/// (model, option, strike, m, seed, baseline_n) so sweeps over methods
/// reuse it.
#[derive(Default)]
pub struct Harness {
    baseline_cache: HashMap<String, f64>,
}

impl Harness {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn run_experiment(&mut self, cfg: &ExperimentConfig) -> Result<TableRow, ConfigError> {
        cfg.validate()?;

        let maturity = cfg.model.maturity;
        let carry = cfg.model.carry();
        let (dates, weights, payoff) = match cfg.option {
            OptionKind::AveragePriceCall => {
                spot_average_price_call(cfg.m, cfg.strike.unwrap(), maturity, carry)?
            }
            OptionKind::AverageStrikeCall => spot_average_strike_call(cfg.m, maturity, carry)?,
        };
        let schedule = Arc::new(build_schedule(dates, weights)?);
        let ls = build_level_structure(&schedule);
        let sampler = cfg.model.sampler();
        let f0 = cfg.model.forward();
        let spec = OptionSpec::new(schedule, payoff, cfg.model.rate, f0);

        let report = match cfg.method {
            Method::Mc => plain_mc_estimate_parallel(&spec, &*sampler, cfg.n, cfg.seed, cfg.workers).0,
            Method::Rmlmc => {
                let dist = if cfg.untruncated_levels {
                    LevelDistribution::unbiased_geometric(2.0)
                } else {
                    LevelDistribution::unbiased_geometric_truncated(2.0, ls.max_level())
                };
                rmlmc_estimate_parallel(&ls, &spec, &*sampler, &dist, cfg.n, cfg.seed, cfg.workers)
            }
            Method::Mlmc => mlmc_estimate_parallel(
                &ls,
                &spec,
                &*sampler,
                cfg.n,
                cfg.pilot_n,
                cfg.budget_multiplier,
                cfg.seed,
                cfg.workers,
            )?,
            Method::RmlmcMilstein => {
                let sde = Sde::black_scholes(f0, cfg.model.sigma);
                rmlmc_coupled_estimate_parallel(
                    &ls,
                    &spec,
                    &sde,
                    SchemeKind::Milstein,
                    cfg.n,
                    cfg.seed,
                    cfg.workers,
                )?
            }
            Method::RmlmcEulerTrunc => {
                let sde = Sde::black_scholes(f0, cfg.model.sigma);
                rmlmc_truncated_estimate_parallel(
                    &ls,
                    &spec,
                    &sde,
                    cfg.epsilon.unwrap(),
                    cfg.n,
                    None,
                    cfg.seed,
                    cfg.workers,
                )?
            }
        };

        let vrf = if cfg.baseline_n > 0 {
            let var_fa = self.baseline_variance(cfg, &spec, &*sampler)?;
            let disc = spec.discount();
            Some(
                cfg.m as f64 * disc * disc * var_fa
                    / (report.cost as f64 * report.std * report.std),
            )
        } else {
            None
        };

        Ok(TableRow::from_report(cfg, &report, vrf))
    }

    fn baseline_variance(
        &mut self,
        cfg: &ExperimentConfig,
        spec: &OptionSpec,
        sampler: &dyn ForwardSampler,
    ) -> Result<f64, ConfigError> {
        let key = format!(
            "{}|{}|{:x}|{}|{}|{}",
            cfg.model.cache_token(),
            cfg.option.label(),
            cfg.strike.unwrap_or(0.0).to_bits(),
            cfg.m,
            cfg.seed,
            cfg.baseline_n,
        );
        if let Some(&v) = self.baseline_cache.get(&key) {
            return Ok(v);
        }
        let (var, _cost) =
            baseline_payoff_variance(spec, sampler, cfg.baseline_n, cfg.seed, cfg.workers);
        self.baseline_cache.insert(key, var);
        Ok(var)
    }
}

/// Parses a flat `key=value` parameter file into override pairs.
/// Blank lines and `#` comments are skipped.
pub fn parse_params_file(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| invalid(format!("line {}: expected key=value", idx + 1)))?;
        out.push((key.trim().to_string(), value.trim().to_string()));
    }
    Ok(out)
}

/// The benchmark grids, keyed by table number. Replication counts are
/// desk-scale defaults; override with --n for more precision.
pub fn table_preset(table: u8) -> Result<Vec<ExperimentConfig>, ConfigError> {
    let grid_m = [125u32, 250, 500];
    let mlmc_outer = |m: u32| (1_000_000 / m as u64).max(2);
    let mut rows = Vec::new();

    let push_grid = |rows: &mut Vec<ExperimentConfig>,
                     kind: ModelKind,
                     option: OptionKind,
                     strike: Option<f64>,
                     methods: &[Method]| {
        for &m in &grid_m {
            for &method in methods {
                let n = if method == Method::Mlmc { mlmc_outer(m) } else { 1_000_000 };
                let mut cfg =
                    ExperimentConfig::new(ModelConfig::defaults(kind), option, m, method, n);
                cfg.strike = strike;
                rows.push(cfg);
            }
        }
    };

    match table {
        1 => push_grid(
            &mut rows,
            ModelKind::BlackScholes,
            OptionKind::AveragePriceCall,
            Some(2.0),
            &[Method::Rmlmc, Method::Mlmc, Method::RmlmcMilstein],
        ),
        2 => push_grid(
            &mut rows,
            ModelKind::BlackScholes,
            OptionKind::AverageStrikeCall,
            None,
            &[Method::Rmlmc, Method::Mlmc, Method::RmlmcMilstein],
        ),
        3 => {
            for option in [OptionKind::AveragePriceCall, OptionKind::AverageStrikeCall] {
                let mut cfg = ExperimentConfig::new(
                    ModelConfig::defaults(ModelKind::BlackScholes),
                    option,
                    10_000_000,
                    Method::Rmlmc,
                    100_000,
                );
                if option == OptionKind::AveragePriceCall {
                    cfg.strike = Some(2.0);
                }
                cfg.baseline_n = 0; // a full-path baseline is infeasible at this m
                rows.push(cfg);
            }
        }
        4 => push_grid(
            &mut rows,
            ModelKind::Merton,
            OptionKind::AveragePriceCall,
            Some(2.0),
            &[Method::Rmlmc, Method::Mlmc],
        ),
        5 => push_grid(
            &mut rows,
            ModelKind::Merton,
            OptionKind::AverageStrikeCall,
            None,
            &[Method::Rmlmc, Method::Mlmc],
        ),
        6 => push_grid(
            &mut rows,
            ModelKind::SquareRoot,
            OptionKind::AveragePriceCall,
            Some(2.0),
            &[Method::Rmlmc, Method::Mlmc],
        ),
        7 => push_grid(
            &mut rows,
            ModelKind::SquareRoot,
            OptionKind::AverageStrikeCall,
            None,
            &[Method::Rmlmc, Method::Mlmc],
        ),
        8 => {
            for strike in [1.6, 1.8, 2.0, 2.2, 2.4] {
                push_grid(
                    &mut rows,
                    ModelKind::BlackScholes,
                    OptionKind::AveragePriceCall,
                    Some(strike),
                    &[Method::Rmlmc, Method::Mlmc, Method::RmlmcMilstein],
                );
            }
        }
        other => return Err(invalid(format!("unknown table {other} (expected 1..8)"))),
    }
    Ok(rows)
}
