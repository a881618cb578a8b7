//! Command-line front end: one row per experiment, CSV on stdout.

use std::fs::File;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use asian_mlmc::harness::{
    parse_params_file, table_preset, ConfigError, ExperimentConfig, Harness, Method, ModelConfig,
    ModelKind, OptionKind, SqrQuote, TableRow, CSV_HEADER,
};

#[derive(Parser, Debug)]
#[command(
    name = "asian-mlmc",
    about = "Multilevel Monte Carlo pricing of discretely monitored Asian options",
    after_help = "Model parameters (s0, sigma, rate, dividend, lambda, jump_log_mean, \
                  jump_log_sd, sqr_f0, maturity) can be set in a --params key=value file; \
                  command-line flags override file entries."
)]
struct Cli {
    /// Model: bs | merton | sqr
    #[arg(long)]
    model: Option<String>,
    /// Option kind: avg-price-call | avg-strike-call
    #[arg(long)]
    option: Option<String>,
    /// Strike (average price calls only)
    #[arg(long)]
    strike: Option<f64>,
    /// Number of monitoring dates
    #[arg(long)]
    m: Option<u32>,
    /// Estimator: mc | rmlmc | mlmc | rmlmc-milstein | rmlmc-euler-trunc
    #[arg(long)]
    method: Option<String>,
    /// Replications (outer replications for mlmc)
    #[arg(long)]
    n: Option<u64>,
    /// Pilot replications per level for mlmc
    #[arg(long)]
    pilot: Option<u64>,
    /// Allocation budget multiplier for mlmc
    #[arg(long)]
    multiplier: Option<f64>,
    /// Target accuracy for rmlmc-euler-trunc
    #[arg(long)]
    epsilon: Option<f64>,
    /// RNG seed
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads
    #[arg(long)]
    workers: Option<u32>,
    /// Replications for the var(f(A)) baseline; 0 disables the VRF column
    #[arg(long = "baseline-n")]
    baseline_n: Option<u64>,
    /// Flat key=value parameter file
    #[arg(long)]
    params: Option<PathBuf>,
    /// Also write the CSV rows to this file
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Run a whole benchmark-table grid (1..8) instead of a single row
    #[arg(long)]
    table: Option<u8>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

/// Key=value pairs from --params, in file order.
fn load_params(cli: &Cli) -> Result<Vec<(String, String)>, ConfigError> {
    match &cli.params {
        Some(path) => parse_params_file(&std::fs::read_to_string(path)?),
        None => Ok(Vec::new()),
    }
}

struct Overrides {
    model_kind: Option<ModelKind>,
    option: Option<OptionKind>,
    strike: Option<f64>,
    m: Option<u32>,
    method: Option<Method>,
    n: Option<u64>,
    pilot: Option<u64>,
    multiplier: Option<f64>,
    epsilon: Option<f64>,
    seed: Option<u64>,
    workers: Option<u32>,
    baseline_n: Option<u64>,
    spot: Option<f64>,
    sigma: Option<f64>,
    rate: Option<f64>,
    dividend: Option<f64>,
    lambda: Option<f64>,
    jump_log_mean: Option<f64>,
    jump_log_sd: Option<f64>,
    maturity: Option<f64>,
    sqr_f0: Option<SqrQuote>,
    untruncated_levels: Option<bool>,
}

fn bad(key: &str, value: &str) -> ConfigError {
    ConfigError::Invalid(format!("bad value '{value}' for {key}"))
}

fn parse_overrides(params: &[(String, String)], cli: &Cli) -> Result<Overrides, ConfigError> {
    let mut o = Overrides {
        model_kind: None,
        option: None,
        strike: None,
        m: None,
        method: None,
        n: None,
        pilot: None,
        multiplier: None,
        epsilon: None,
        seed: None,
        workers: None,
        baseline_n: None,
        spot: None,
        sigma: None,
        rate: None,
        dividend: None,
        lambda: None,
        jump_log_mean: None,
        jump_log_sd: None,
        maturity: None,
        sqr_f0: None,
        untruncated_levels: None,
    };
    for (key, value) in params {
        let v = value.as_str();
        match key.as_str() {
            "model" => o.model_kind = Some(ModelKind::parse(v)?),
            "option" => o.option = Some(OptionKind::parse(v)?),
            "method" => o.method = Some(Method::parse(v)?),
            "strike" => o.strike = Some(v.parse().map_err(|_| bad(key, v))?),
            "m" => o.m = Some(v.parse().map_err(|_| bad(key, v))?),
            "n" => o.n = Some(v.parse().map_err(|_| bad(key, v))?),
            "pilot" => o.pilot = Some(v.parse().map_err(|_| bad(key, v))?),
            "multiplier" => o.multiplier = Some(v.parse().map_err(|_| bad(key, v))?),
            "epsilon" => o.epsilon = Some(v.parse().map_err(|_| bad(key, v))?),
            "seed" => o.seed = Some(v.parse().map_err(|_| bad(key, v))?),
            "workers" => o.workers = Some(v.parse().map_err(|_| bad(key, v))?),
            "baseline_n" | "baseline-n" => o.baseline_n = Some(v.parse().map_err(|_| bad(key, v))?),
            "s0" | "spot" => o.spot = Some(v.parse().map_err(|_| bad(key, v))?),
            "sigma" => o.sigma = Some(v.parse().map_err(|_| bad(key, v))?),
            "r" | "rate" => o.rate = Some(v.parse().map_err(|_| bad(key, v))?),
            "q" | "dividend" => o.dividend = Some(v.parse().map_err(|_| bad(key, v))?),
            "lambda" => o.lambda = Some(v.parse().map_err(|_| bad(key, v))?),
            "jump_log_mean" => o.jump_log_mean = Some(v.parse().map_err(|_| bad(key, v))?),
            "jump_log_sd" => o.jump_log_sd = Some(v.parse().map_err(|_| bad(key, v))?),
            "maturity" | "T" => o.maturity = Some(v.parse().map_err(|_| bad(key, v))?),
            "sqr_f0" => {
                o.sqr_f0 = Some(match v {
                    "forward" => SqrQuote::Forward,
                    "spot" => SqrQuote::Spot,
                    _ => return Err(bad(key, v)),
                })
            }
            "untruncated_levels" => {
                o.untruncated_levels = Some(v.parse().map_err(|_| bad(key, v))?)
            }
            other => return Err(ConfigError::Invalid(format!("unknown parameter '{other}'"))),
        }
    }
    // command-line flags override file entries
    if let Some(s) = &cli.model {
        o.model_kind = Some(ModelKind::parse(s)?);
    }
    if let Some(s) = &cli.option {
        o.option = Some(OptionKind::parse(s)?);
    }
    if let Some(s) = &cli.method {
        o.method = Some(Method::parse(s)?);
    }
    o.strike = cli.strike.or(o.strike);
    o.m = cli.m.or(o.m);
    o.n = cli.n.or(o.n);
    o.pilot = cli.pilot.or(o.pilot);
    o.multiplier = cli.multiplier.or(o.multiplier);
    o.epsilon = cli.epsilon.or(o.epsilon);
    o.seed = cli.seed.or(o.seed);
    o.workers = cli.workers.or(o.workers);
    o.baseline_n = cli.baseline_n.or(o.baseline_n);
    Ok(o)
}

fn apply_model_overrides(model: &mut ModelConfig, o: &Overrides) {
    if let Some(v) = o.spot {
        model.spot = v;
    }
    if let Some(v) = o.sigma {
        model.sigma = v;
    }
    if let Some(v) = o.rate {
        model.rate = v;
    }
    if let Some(v) = o.dividend {
        model.dividend = v;
    }
    if let Some(v) = o.lambda {
        model.jump_intensity = v;
    }
    if let Some(v) = o.jump_log_mean {
        model.jump_log_mean = v;
    }
    if let Some(v) = o.jump_log_sd {
        model.jump_log_sd = v;
    }
    if let Some(v) = o.maturity {
        model.maturity = v;
    }
    if let Some(v) = o.sqr_f0 {
        model.sqr_quote = v;
    }
}

fn apply_run_overrides(cfg: &mut ExperimentConfig, o: &Overrides) {
    if let Some(v) = o.n {
        cfg.n = v;
    }
    if let Some(v) = o.pilot {
        cfg.pilot_n = v;
    }
    if let Some(v) = o.multiplier {
        cfg.budget_multiplier = v;
    }
    if let Some(v) = o.seed {
        cfg.seed = v;
    }
    if let Some(v) = o.workers {
        cfg.workers = v;
    }
    if let Some(v) = o.baseline_n {
        cfg.baseline_n = v;
    }
    if let Some(v) = o.untruncated_levels {
        cfg.untruncated_levels = v;
    }
    apply_model_overrides(&mut cfg.model, o);
}

fn build_configs(o: &Overrides, table: Option<u8>) -> Result<Vec<ExperimentConfig>, ConfigError> {
    if let Some(t) = table {
        let mut rows = table_preset(t)?;
        for cfg in &mut rows {
            apply_run_overrides(cfg, o);
        }
        return Ok(rows);
    }
    let kind = o.model_kind.ok_or_else(|| ConfigError::Invalid("--model is required".into()))?;
    let option = o.option.ok_or_else(|| ConfigError::Invalid("--option is required".into()))?;
    let method = o.method.ok_or_else(|| ConfigError::Invalid("--method is required".into()))?;
    let m = o.m.ok_or_else(|| ConfigError::Invalid("--m is required".into()))?;
    let n = o.n.ok_or_else(|| ConfigError::Invalid("--n is required".into()))?;
    let mut cfg = ExperimentConfig::new(ModelConfig::defaults(kind), option, m, method, n);
    cfg.strike = o.strike;
    cfg.epsilon = o.epsilon;
    apply_run_overrides(&mut cfg, o);
    cfg.validate()?;
    Ok(vec![cfg])
}

fn run(cli: Cli) -> Result<(), ConfigError> {
    let params = load_params(&cli)?;
    let overrides = parse_overrides(&params, &cli)?;
    let configs = build_configs(&overrides, cli.table)?;

    let mut file = match &cli.csv {
        Some(path) => Some(File::create(path)?),
        None => None,
    };
    println!("{CSV_HEADER}");
    if let Some(f) = &mut file {
        writeln!(f, "{CSV_HEADER}")?;
    }

    let mut harness = Harness::new();
    for cfg in &configs {
        let row: TableRow = harness.run_experiment(cfg)?;
        let line = row.to_csv();
        println!("{line}");
        if let Some(f) = &mut file {
            writeln!(f, "{line}")?;
        }
    }
    Ok(())
}
