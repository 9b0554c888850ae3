//! Run configuration and experiment orchestration behind the CLI.
//!
//! A run is a pure function of one TOML config file: flat key-value
//! settings plus two tabular sections, `[[instruments]]` (the market
//! quotes, in increasing maturity order) and `[[portfolio]]` (the netting
//! set). Every run re-writes the resolved configuration next to its
//! outputs (`resolved-config.toml`) so results stay reproducible after
//! command-line overrides.
//!
//! ```toml
//! seed = 2024                  # Gaussian-noise seed
//! num_paths = 20000            # Monte Carlo paths M
//! polynomial_order = 7         # surrogate order N (degree N-1)
//! difference_orders = [5, 6]   # correction orders d (each <= N)
//! shock_size = 1e-4            # quote shock (decimal)
//! out_dir = "out"              # report directory
//! # experiment = "sens"        # fallback when no subcommand is given
//! lambda = 0.01                # Hull-White mean reversion
//! eta = 0.02                   # Hull-White volatility
//! # horizon = 20.0             # monitoring horizon (default: last maturity)
//! dates_per_year = 4.0         # monitoring-grid density
//! inner_paths = 256            # nested-MC paths per Bermudan node value
//! # benchmark_inner_paths = 8192   # enables the exact Bermudan benchmark
//! # hazard_kappa = 0.4         # hazard keys (all six or none; `cva` only)
//! # hazard_level = 0.02
//! # hazard_vol = 0.08
//! # hazard_y0 = 0.02
//! # hazard_rho = 0.6
//! # lgd = 0.6
//!
//! [[instruments]]
//! maturity = 1.0               # years
//! quote = 0.0004               # par swap rate (decimal)
//! frequency = 1.0              # fixed-leg payments per year
//!
//! [[portfolio]]
//! direction = "payer"          # or "receiver"
//! notional = 10000.0
//! # fixed_rate = 0.0222        # omitted: par on the unshocked curve
//! start = 0.0
//! maturity = 20.0
//! frequency = 2.0
//! # exercise_dates = [1.0, 2.0, 3.0]   # turns the row into a Bermudan swaption
//! ```
//!
//! The experiments map onto CLI subcommands: `bootstrap` exports the
//! discount curve, `ee` the exposure profile with its collocation error,
//! `sens` the three sensitivity estimators with error and bound
//! diagnostics, `bermudan` the exercise-aware exposure and sensitivity
//! pipeline, `cva` the independence-approximation and wrong-way-risk
//! estimates, and `tables` the integrated-error and cost tables together
//! with the exposure-error data.

use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::curve::{MarketInstrument, YieldCurve};
use crate::error::{Error, Result};
use crate::experiments::{
    self, build_markets, market_surrogates, swap_difference_surrogates, swap_surrogates,
    MarketSet,
};
use crate::exposure::{ee_approx, ee_exact, ee_rel_error, write_ee_csv};
use crate::hullwhite::{GaussianNoise, HWParams, HullWhiteModel, PathSet};
use crate::products::{BermudanSwaption, Portfolio, Swap, DATE_EPS};
use crate::sensitivity::{
    bound_diagnostics, cost_report, integrated_error, psi_exact, psi_full_order, psi_low_order,
    rel_error_profile, write_kappa_csv, write_sens_csv, SensitivityProfile,
};
use crate::xva::{
    cva_independent, cva_wwr_exact, cva_wwr_surrogate, simulate_joint, write_cva_csv, HazardModel,
};

/// File name of the resolved-configuration echo written by every run.
pub const ECHO_FILE: &str = "resolved-config.toml";

// ---------------------------------------------------------------------------
// Schema
// ---------------------------------------------------------------------------

/// One market quote row of the `[[instruments]]` table; the 1-based shock
/// index is the row's position.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstrumentRow {
    /// Maturity in year fractions.
    pub maturity: f64,
    /// Par swap rate quote (decimal).
    pub quote: f64,
    /// Fixed-leg payments per year (default 1).
    #[serde(default = "default_instrument_frequency")]
    pub frequency: f64,
}

/// Payer/receiver convention of a portfolio row.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Receive float, pay fixed (`sign = +1`).
    Payer,
    /// Receive fixed, pay float (`sign = -1`).
    Receiver,
}

impl Direction {
    fn sign(self) -> i8 {
        match self {
            Direction::Payer => 1,
            Direction::Receiver => -1,
        }
    }
}

/// One row of the `[[portfolio]]` table: a swap, or — when
/// `exercise_dates` is present — a Bermudan swaption on that swap.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PortfolioRow {
    pub direction: Direction,
    pub notional: f64,
    /// Fixed rate; omitted rows trade at par on the unshocked curve.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_rate: Option<f64>,
    /// First reset (default 0: a running swap).
    #[serde(default)]
    pub start: f64,
    pub maturity: f64,
    /// Fixed-leg payments per year.
    pub frequency: f64,
    /// Bermudan exercise dates; present on at most one row.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exercise_dates: Option<Vec<f64>>,
}

/// A full run specification. Defaults follow the reference experiments:
/// M = 20 000 paths, quarterly monitoring, 1bp shocks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Seed of the shared Gaussian noise.
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Monte Carlo path count M.
    #[serde(default = "default_num_paths")]
    pub num_paths: usize,
    /// Surrogate order N (polynomials of degree N−1 through N nodes).
    #[serde(default = "default_polynomial_order")]
    pub polynomial_order: usize,
    /// Correction orders d of the low-order difference estimator.
    #[serde(default = "default_difference_orders")]
    pub difference_orders: Vec<usize>,
    /// Market-quote shock ΔK (decimal).
    #[serde(default = "default_shock_size")]
    pub shock_size: f64,
    /// Report directory.
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    /// Experiment to run when the CLI names no subcommand.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<String>,
    /// Hull–White mean-reversion speed λ.
    pub lambda: f64,
    /// Hull–White volatility η.
    pub eta: f64,
    /// Monitoring horizon; defaults to the portfolio's last maturity.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    /// Monitoring dates per year.
    #[serde(default = "default_dates_per_year")]
    pub dates_per_year: f64,
    /// Nested-MC paths behind each Bermudan node valuation.
    #[serde(default = "default_inner_paths")]
    pub inner_paths: usize,
    /// Nested-MC paths of the exact Bermudan exposure benchmark; omitted,
    /// the `bermudan` run reports the surrogate profile alone.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub benchmark_inner_paths: Option<usize>,
    /// Hazard mean-reversion speed κ_y (`cva` runs; all six hazard keys
    /// stand or fall together).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hazard_kappa: Option<f64>,
    /// Hazard long-run level ȳ.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hazard_level: Option<f64>,
    /// Hazard volatility η_y.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hazard_vol: Option<f64>,
    /// Initial intensity y₀.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hazard_y0: Option<f64>,
    /// Correlation between the hazard and short-rate drivers.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hazard_rho: Option<f64>,
    /// Loss given default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lgd: Option<f64>,
    /// Market quotes, in strictly increasing maturity order.
    pub instruments: Vec<InstrumentRow>,
    /// The netting set.
    pub portfolio: Vec<PortfolioRow>,
}

fn default_seed() -> u64 {
    2024
}
fn default_num_paths() -> usize {
    20_000
}
fn default_polynomial_order() -> usize {
    7
}
fn default_difference_orders() -> Vec<usize> {
    vec![5, 6]
}
fn default_shock_size() -> f64 {
    1e-4
}
fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_dates_per_year() -> f64 {
    4.0
}
fn default_inner_paths() -> usize {
    256
}
fn default_instrument_frequency() -> f64 {
    1.0
}

/// The experiments the CLI can run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Experiment {
    Bootstrap,
    Ee,
    Sens,
    Bermudan,
    Cva,
    Tables,
}

impl Experiment {
    pub const ALL: [Experiment; 6] = [
        Experiment::Bootstrap,
        Experiment::Ee,
        Experiment::Sens,
        Experiment::Bermudan,
        Experiment::Cva,
        Experiment::Tables,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Bootstrap => "bootstrap",
            Experiment::Ee => "ee",
            Experiment::Sens => "sens",
            Experiment::Bermudan => "bermudan",
            Experiment::Cva => "cva",
            Experiment::Tables => "tables",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Experiment> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "experiment: unknown experiment '{s}' (expected one of bootstrap, ee, \
                     sens, bermudan, cva, tables)"
                ))
            })
    }
}

// ---------------------------------------------------------------------------
// Loading, validation, resolution
// ---------------------------------------------------------------------------

impl RunConfig {
    /// Read and validate a config file.
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read config file {}: {e}", path.display()))
        })?;
        Self::from_toml_str(&text)
            .map_err(|e| match e {
                Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
                other => other,
            })
    }

    /// Parse and validate a config from TOML text.
    pub fn from_toml_str(text: &str) -> Result<RunConfig> {
        let config: RunConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Serialize the resolved configuration (the echo file's content).
    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self)
            .map_err(|e| Error::Config(format!("cannot serialize config: {e}")))
    }

    /// Field-level checks of everything that does not need market data.
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: String| Err(Error::Config(format!("{field}: {msg}")));

        if self.num_paths < 1 {
            return bad("num_paths", "must be at least 1".into());
        }
        if self.polynomial_order < 1 {
            return bad("polynomial_order", "must be at least 1".into());
        }
        if self.difference_orders.is_empty() {
            return bad("difference_orders", "must name at least one order".into());
        }
        for &d in &self.difference_orders {
            if d < 1 {
                return bad("difference_orders", format!("order {d} must be at least 1"));
            }
            if d > self.polynomial_order {
                return bad(
                    "difference_orders",
                    format!(
                        "order {d} exceeds polynomial_order = {}",
                        self.polynomial_order
                    ),
                );
            }
        }
        if !(self.shock_size > 0.0) || !self.shock_size.is_finite() {
            return bad(
                "shock_size",
                format!("must be positive and finite, got {}", self.shock_size),
            );
        }
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return bad(
                "lambda",
                format!("must be positive and finite, got {}", self.lambda),
            );
        }
        if !(self.eta > 0.0) || !self.eta.is_finite() {
            return bad("eta", format!("must be positive and finite, got {}", self.eta));
        }
        if let Some(h) = self.horizon {
            if !(h > 0.0) || !h.is_finite() {
                return bad("horizon", format!("must be positive and finite, got {h}"));
            }
        }
        if !(self.dates_per_year > 0.0) || !self.dates_per_year.is_finite() {
            return bad(
                "dates_per_year",
                format!("must be positive and finite, got {}", self.dates_per_year),
            );
        }
        if self.inner_paths < 1 {
            return bad("inner_paths", "must be at least 1".into());
        }
        if self.benchmark_inner_paths == Some(0) {
            return bad("benchmark_inner_paths", "must be at least 1".into());
        }
        if let Some(e) = &self.experiment {
            Experiment::from_str(e)?;
        }

        if self.instruments.is_empty() {
            return bad("instruments", "at least one market quote is required".into());
        }
        let mut last = 0.0;
        for (idx, row) in self.instruments.iter().enumerate() {
            let field = format!("instruments[{idx}]");
            if !(row.maturity > last) || !row.maturity.is_finite() {
                return bad(
                    &field,
                    format!(
                        "maturities must be finite and strictly increasing \
                         (got {} after {last})",
                        row.maturity
                    ),
                );
            }
            if !row.quote.is_finite() {
                return bad(&field, format!("quote must be finite, got {}", row.quote));
            }
            if !(row.frequency > 0.0) || !row.frequency.is_finite() {
                return bad(
                    &field,
                    format!("frequency must be positive, got {}", row.frequency),
                );
            }
            last = row.maturity;
        }

        if self.portfolio.is_empty() {
            return bad("portfolio", "at least one position is required".into());
        }
        let mut bermudans = 0usize;
        for (idx, row) in self.portfolio.iter().enumerate() {
            let field = format!("portfolio[{idx}]");
            if !(row.notional > 0.0) || !row.notional.is_finite() {
                return bad(
                    &field,
                    format!("notional must be positive and finite, got {}", row.notional),
                );
            }
            if let Some(rate) = row.fixed_rate {
                if !rate.is_finite() {
                    return bad(&field, format!("fixed_rate must be finite, got {rate}"));
                }
            }
            if !(row.start >= 0.0) || !(row.start < row.maturity) {
                return bad(
                    &field,
                    format!(
                        "requires 0 <= start < maturity, got start = {}, maturity = {}",
                        row.start, row.maturity
                    ),
                );
            }
            if !(row.frequency > 0.0) || !row.frequency.is_finite() {
                return bad(
                    &field,
                    format!("frequency must be positive, got {}", row.frequency),
                );
            }
            if let Some(dates) = &row.exercise_dates {
                bermudans += 1;
                if dates.is_empty() {
                    return bad(&field, "exercise_dates must not be empty".into());
                }
                if dates.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
                    return bad(&field, "exercise dates must be positive and finite".into());
                }
                if dates.windows(2).any(|w| w[0] >= w[1]) {
                    return bad(&field, "exercise dates must be strictly increasing".into());
                }
                if *dates.last().unwrap() >= row.maturity {
                    return bad(
                        &field,
                        "exercise dates must precede the underlying's maturity".into(),
                    );
                }
            }
        }
        if bermudans > 1 {
            return bad(
                "portfolio",
                "at most one row may carry exercise_dates (one Bermudan per netting set)".into(),
            );
        }

        let hazard_keys = [
            ("hazard_kappa", self.hazard_kappa),
            ("hazard_level", self.hazard_level),
            ("hazard_vol", self.hazard_vol),
            ("hazard_y0", self.hazard_y0),
            ("hazard_rho", self.hazard_rho),
            ("lgd", self.lgd),
        ];
        let set = hazard_keys.iter().filter(|(_, v)| v.is_some()).count();
        if set != 0 && set != hazard_keys.len() {
            let missing: Vec<&str> = hazard_keys
                .iter()
                .filter(|(_, v)| v.is_none())
                .map(|(k, _)| *k)
                .collect();
            return bad(
                "hazard",
                format!(
                    "the hazard keys stand or fall together; missing {}",
                    missing.join(", ")
                ),
            );
        }
        if set == hazard_keys.len() {
            // Range checks live in the hazard model's constructor.
            self.hazard_model()?;
        }
        Ok(())
    }

    /// The quote rows as indexed market instruments.
    pub fn market_instruments(&self) -> Vec<MarketInstrument> {
        self.instruments
            .iter()
            .enumerate()
            .map(|(i, row)| MarketInstrument::new(i + 1, row.maturity, row.quote, row.frequency))
            .collect()
    }

    /// Hull–White parameters.
    pub fn hw_params(&self) -> Result<HWParams> {
        HWParams::new(self.lambda, self.eta)
    }

    /// The hazard model, when the hazard keys are present.
    pub fn hazard_model(&self) -> Result<Option<HazardModel>> {
        match (
            self.hazard_kappa,
            self.hazard_level,
            self.hazard_vol,
            self.hazard_y0,
            self.hazard_rho,
            self.lgd,
        ) {
            (None, None, None, None, None, None) => Ok(None),
            (Some(kappa), Some(level), Some(vol), Some(y0), Some(rho), Some(lgd)) => Ok(Some(
                HazardModel::new(kappa, level, vol, y0, rho, lgd)
                    .map_err(|e| Error::Config(format!("hazard: {e}")))?,
            )),
            _ => Err(Error::Config(
                "hazard: the hazard keys stand or fall together".into(),
            )),
        }
    }

    /// Resolve the portfolio rows against the unshocked curve: omitted
    /// fixed rates become that row's par rate.
    pub fn portfolio(&self, curve: &YieldCurve) -> Result<Portfolio> {
        let mut swaps = Vec::new();
        let mut bermudan = None;
        for (idx, row) in self.portfolio.iter().enumerate() {
            let rate = match row.fixed_rate {
                Some(rate) => rate,
                None => curve
                    .par_swap_rate(row.start, row.maturity, row.frequency)
                    .map_err(|e| {
                        Error::Config(format!("portfolio[{idx}]: cannot resolve par rate: {e}"))
                    })?,
            };
            let swap = Swap::new(
                row.direction.sign(),
                row.notional,
                rate,
                row.start,
                row.maturity,
                row.frequency,
            )?;
            match &row.exercise_dates {
                Some(dates) => bermudan = Some(BermudanSwaption::new(dates.clone(), swap)?),
                None => swaps.push(swap),
            }
        }
        Portfolio::with_bermudan(swaps, bermudan)
    }

    /// The monitoring horizon: the configured value, or the portfolio's
    /// last maturity.
    pub fn horizon_for(&self, portfolio: &Portfolio) -> f64 {
        self.horizon.unwrap_or_else(|| portfolio.last_maturity())
    }

    /// Uniform monitoring grid `t_0 = 0 < ... <= horizon` at
    /// `dates_per_year` density.
    pub fn monitoring_grid(&self, horizon: f64) -> Result<Vec<f64>> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::Config(format!(
                "horizon: must be positive and finite, got {horizon}"
            )));
        }
        let steps = ((horizon * self.dates_per_year).round() as usize).max(1);
        Ok((0..=steps)
            .map(|k| k as f64 * horizon / steps as f64)
            .collect())
    }

    /// The difference orders, ascending and deduplicated.
    fn orders(&self) -> Vec<usize> {
        let mut d = self.difference_orders.clone();
        d.sort_unstable();
        d.dedup();
        d
    }
}

// ---------------------------------------------------------------------------
// Orchestration
// ---------------------------------------------------------------------------

/// Run one experiment: create the output directory, echo the resolved
/// config, emit the experiment's CSVs and print a one-line summary per
/// metric. Outputs are a pure function of the config.
pub fn run(config: &RunConfig, experiment: Experiment, dump_paths: bool) -> Result<()> {
    config.validate()?;
    let out = config.out_dir.clone();
    fs::create_dir_all(&out)?;
    write_named(&out, ECHO_FILE, |w| {
        w.write_all(config.to_toml_string()?.as_bytes())?;
        Ok(())
    })?;
    match experiment {
        Experiment::Bootstrap => run_bootstrap(config, &out),
        Experiment::Ee => run_ee(config, &out, dump_paths),
        Experiment::Sens => run_sens(config, &out, dump_paths),
        Experiment::Bermudan => run_bermudan(config, &out, dump_paths),
        Experiment::Cva => run_cva(config, &out, dump_paths),
        Experiment::Tables => run_tables(config, &out, dump_paths),
    }
}

/// Write one output file through a buffered writer and report it.
fn write_named(
    dir: &Path,
    name: &str,
    emit: impl FnOnce(&mut BufWriter<File>) -> Result<()>,
) -> Result<()> {
    let path = dir.join(name);
    let mut w = BufWriter::new(File::create(&path)?);
    emit(&mut w)?;
    w.flush()?;
    println!("wrote {}", path.display());
    Ok(())
}

fn dump_path_csv(out: &Path, paths: &PathSet) -> Result<()> {
    write_named(out, "paths.csv", |w| {
        paths.write_csv(w, usize::MAX)?;
        Ok(())
    })
}

/// The unshocked model over a curve extended far enough for both the
/// monitoring grid and every portfolio cash flow.
fn base_model(config: &RunConfig, curve: YieldCurve, needed_horizon: f64) -> Result<HullWhiteModel> {
    let extended = curve.horizon().max(needed_horizon);
    Ok(HullWhiteModel::new(
        config.hw_params()?,
        curve.with_horizon(extended)?,
    ))
}

/// Shared preamble of the single-market experiments: resolved portfolio,
/// model, monitoring grid and simulated paths.
fn single_market_setup(
    config: &RunConfig,
) -> Result<(Portfolio, HullWhiteModel, Vec<f64>, PathSet)> {
    let curve = YieldCurve::bootstrap(&config.market_instruments())?;
    let portfolio = config.portfolio(&curve)?;
    let horizon = config.horizon_for(&portfolio);
    let model = base_model(config, curve, horizon.max(portfolio.last_maturity()))?;
    let grid = config.monitoring_grid(horizon)?;
    let noise = GaussianNoise::new(config.seed, config.num_paths, grid.len() - 1);
    let paths = model.simulate(&grid, config.num_paths, &noise)?;
    Ok((portfolio, model, grid, paths))
}

/// Shared preamble of the shocked-market experiments.
fn market_set_setup(config: &RunConfig) -> Result<(Portfolio, Vec<f64>, MarketSet)> {
    let instruments = config.market_instruments();
    let curve = YieldCurve::bootstrap(&instruments)?;
    let portfolio = config.portfolio(&curve)?;
    let horizon = config.horizon_for(&portfolio);
    let grid = config.monitoring_grid(horizon)?;
    let markets = build_markets(
        &instruments,
        config.hw_params()?,
        config.shock_size,
        horizon.max(portfolio.last_maturity()),
        &grid,
        config.num_paths,
        config.seed,
    )?;
    Ok((portfolio, grid, markets))
}

fn reject_bermudan(portfolio: &Portfolio, experiment: &str) -> Result<()> {
    if portfolio.bermudan().is_some() {
        return Err(Error::Validation(format!(
            "the {experiment} experiment covers swap books; run the bermudan experiment \
             for a portfolio with exercise_dates"
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

fn run_bootstrap(config: &RunConfig, out: &Path) -> Result<()> {
    let curve = YieldCurve::bootstrap(&config.market_instruments())?;
    write_named(out, "curve.csv", |w| {
        w.write_all(curve.to_csv().as_bytes())?;
        Ok(())
    })?;
    println!(
        "bootstrap: {} instruments repriced; curve horizon {} y ({} interpolation)",
        config.instruments.len(),
        curve.horizon(),
        curve.interpolation()
    );
    Ok(())
}

fn run_ee(config: &RunConfig, out: &Path, dump_paths: bool) -> Result<()> {
    let (portfolio, model, grid, paths) = single_market_setup(config)?;
    reject_bermudan(&portfolio, "ee")?;
    if dump_paths {
        dump_path_csv(out, &paths)?;
    }
    let g = swap_surrogates(&model, portfolio.swaps(), &grid, config.polynomial_order)?;
    let exact = ee_exact(&paths, &portfolio, &model)?;
    let approx = ee_approx(&paths, &g, &model)?;
    let eps = ee_rel_error(&exact, &approx)?;
    write_named(out, "ee.csv", |w| write_ee_csv(&exact, &approx, w))?;
    println!(
        "ee: eps_EE = {eps:.3e} ({} vs {}, M = {})",
        approx.method(),
        exact.method(),
        config.num_paths
    );
    Ok(())
}

/// One `method,max_rel_err,max_kappa` row per estimator; the relative-error
/// field is empty when no (date, shock) entry is defined.
fn write_summary_csv(
    rows: &[(String, Option<f64>, f64)],
    w: &mut impl Write,
) -> Result<()> {
    writeln!(w, "method,max_rel_err,max_kappa")?;
    for (method, rel, kappa) in rows {
        match rel {
            Some(r) => writeln!(w, "{method},{r:.6e},{kappa:.6e}")?,
            None => writeln!(w, "{method},,{kappa:.6e}")?,
        }
    }
    Ok(())
}

fn max_kappa(candidate: &SensitivityProfile, exact: &SensitivityProfile) -> Result<f64> {
    Ok(integrated_error(candidate, exact)?
        .kappa
        .into_iter()
        .fold(0.0, f64::max))
}

fn run_sens(config: &RunConfig, out: &Path, dump_paths: bool) -> Result<()> {
    let (portfolio, _grid, markets) = market_set_setup(config)?;
    reject_bermudan(&portfolio, "sens")?;
    if dump_paths {
        dump_path_csv(out, markets.base_paths())?;
    }
    let n = config.polynomial_order;
    let exact = psi_exact(&markets.models, &markets.paths, &portfolio, config.shock_size)?;
    let (g, gi) = market_surrogates(&markets, portfolio.swaps(), n)?;
    let full = psi_full_order(&markets.models, &markets.paths, &g, &gi, config.shock_size)?;

    let mut summary = vec![(
        full.method().to_string(),
        rel_error_profile(&full, &exact).max_abs(),
        max_kappa(&full, &exact)?,
    )];
    let mut last: Option<(SensitivityProfile, Vec<Vec<crate::interp::DifferenceApprox>>)> = None;
    for d in config.orders() {
        let gtilde = swap_difference_surrogates(&markets, portfolio.swaps(), &g, n, d)?;
        let low = psi_low_order(&markets.models, &markets.paths, &g, &gtilde, config.shock_size)?;
        summary.push((
            low.method().to_string(),
            rel_error_profile(&low, &exact).max_abs(),
            max_kappa(&low, &exact)?,
        ));
        last = Some((low, gtilde));
    }
    let (low, gtilde) = last.expect("difference_orders is non-empty");

    write_named(out, "sens.csv", |w| write_sens_csv(&exact, &full, &low, w))?;
    write_named(out, "sens_summary.csv", |w| write_summary_csv(&summary, w))?;

    let records = bound_diagnostics(
        &markets.models,
        &markets.paths,
        &portfolio,
        &g,
        &gi,
        &gtilde,
        &exact,
        &low,
        config.shock_size,
    )?;
    let violated = records.iter().filter(|r| r.violated).count();
    write_named(out, "bound.csv", |w| {
        writeln!(w, "t,i,c1,c2_fd,eps0,eps_i,delta0,delta_i,bound,observed,violated")?;
        for r in &records {
            writeln!(
                w,
                "{:.6},{},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e},{}",
                r.t, r.shock, r.c1, r.c2_fd, r.eps0, r.eps_i, r.delta0, r.delta_i, r.bound,
                r.observed, r.violated
            )?;
        }
        Ok(())
    })?;

    for (method, rel, kappa) in &summary {
        match rel {
            Some(r) => println!("sens: {method} max rel err = {r:.3e}, max kappa = {kappa:.3e}"),
            None => println!("sens: {method} max rel err undefined, max kappa = {kappa:.3e}"),
        }
    }
    println!(
        "sens: error bound violated on {violated} of {} (date, shock) records",
        records.len()
    );
    Ok(())
}

fn run_tables(config: &RunConfig, out: &Path, dump_paths: bool) -> Result<()> {
    let (portfolio, grid, markets) = market_set_setup(config)?;
    reject_bermudan(&portfolio, "tables")?;
    if dump_paths {
        dump_path_csv(out, markets.base_paths())?;
    }
    let n = config.polynomial_order;
    let exact = psi_exact(&markets.models, &markets.paths, &portfolio, config.shock_size)?;
    let (g, gi) = market_surrogates(&markets, portfolio.swaps(), n)?;
    let full = psi_full_order(&markets.models, &markets.paths, &g, &gi, config.shock_size)?;

    let mut kappa_rows = Vec::new();
    let mut lows = Vec::new();
    for d in 2..=n {
        let gtilde = swap_difference_surrogates(&markets, portfolio.swaps(), &g, n, d)?;
        let low = psi_low_order(&markets.models, &markets.paths, &g, &gtilde, config.shock_size)?;
        kappa_rows.push((d, integrated_error(&low, &exact)?.kappa));
        lows.push(low);
    }
    let maturities: Vec<f64> = config.instruments.iter().map(|r| r.maturity).collect();
    write_named(out, "kappa.csv", |w| {
        write_kappa_csv(&kappa_rows, &maturities, w)
    })?;

    let mut profiles: Vec<&SensitivityProfile> = vec![&exact, &full];
    profiles.extend(lows.iter());
    let report = cost_report(&profiles)?;
    write_named(out, "cost.csv", |w| report.write_csv(w))?;

    let ee = ee_exact(markets.base_paths(), &portfolio, markets.base_model())?;
    let approx = ee_approx(markets.base_paths(), &g, markets.base_model())?;
    let eps = ee_rel_error(&ee, &approx)?;
    write_named(out, "ee.csv", |w| write_ee_csv(&ee, &approx, w))?;

    for (d, kappas) in &kappa_rows {
        let worst = kappas.iter().copied().fold(0.0, f64::max);
        println!("tables: kappa d = {d:2} worst column = {worst:.3e}");
    }
    println!("tables: eps_EE = {eps:.3e} (N = {n}, {} dates)", grid.len());
    Ok(())
}

/// `t,i,psi_full,psi_low` rows; the Bermudan book has no affordable exact
/// profile to print next to them.
fn write_bermudan_sens_csv(
    full: &SensitivityProfile,
    low: &SensitivityProfile,
    w: &mut impl Write,
) -> Result<()> {
    if full.grid().len() != low.grid().len() || full.num_shocks() != low.num_shocks() {
        return Err(Error::Validation(
            "sensitivity CSV export needs profiles of identical shape".into(),
        ));
    }
    writeln!(w, "t,i,psi_full,psi_low")?;
    for (k, &t) in full.grid().iter().enumerate() {
        for i in 1..=full.num_shocks() {
            writeln!(
                w,
                "{t:.6},{i},{:.12e},{:.12e}",
                full.value(k, i),
                low.value(k, i)
            )?;
        }
    }
    Ok(())
}

fn run_bermudan(config: &RunConfig, out: &Path, dump_paths: bool) -> Result<()> {
    let curve = YieldCurve::bootstrap(&config.market_instruments())?;
    let portfolio = config.portfolio(&curve)?;
    let bermudan = portfolio
        .bermudan()
        .ok_or_else(|| {
            Error::Validation(
                "the bermudan experiment needs a portfolio row with exercise_dates".into(),
            )
        })?
        .clone();
    if !portfolio.swaps().is_empty() {
        return Err(Error::Validation(
            "the bermudan experiment values the swaption alone; move plain swap rows to \
             a separate config"
                .into(),
        ));
    }
    let horizon = config.horizon_for(&portfolio);
    let grid = config.monitoring_grid(horizon)?;
    for &s in bermudan.exercise_dates() {
        if !grid.iter().any(|&t| (t - s).abs() <= DATE_EPS) {
            return Err(Error::Validation(format!(
                "exercise date {s} is not a monitoring date at dates_per_year = {} \
                 (horizon {horizon})",
                config.dates_per_year
            )));
        }
    }
    let markets = build_markets(
        &config.market_instruments(),
        config.hw_params()?,
        config.shock_size,
        horizon.max(portfolio.last_maturity()),
        &grid,
        config.num_paths,
        config.seed,
    )?;
    if dump_paths {
        dump_path_csv(out, markets.base_paths())?;
    }

    let n = config.polynomial_order;
    let states = experiments::bermudan_markets(&markets, &bermudan, n, config.inner_paths, config.seed)?;
    let full = experiments::bermudan_psi_full(&markets, &states, config.shock_size)?;
    let mut low = None;
    for d in config.orders() {
        let diffs = experiments::bermudan_difference_surrogates(
            &markets,
            &bermudan,
            &states,
            d,
            config.inner_paths,
            config.seed,
        )?;
        low = Some(experiments::bermudan_psi_low(&markets, &states, &diffs, config.shock_size)?);
    }
    let low = low.expect("difference_orders is non-empty");
    write_named(out, "bermudan_sens.csv", |w| {
        write_bermudan_sens_csv(&full, &low, w)
    })?;

    let base = &states[0];
    let approx = experiments::bermudan_exposure_approx(
        markets.base_paths(),
        &base.surrogates,
        &base.taus,
        bermudan.underlying().notional(),
    )?;
    match config.benchmark_inner_paths {
        Some(inner) => {
            let exact = experiments::bermudan_exposure_exact(
                markets.base_model(),
                &bermudan,
                markets.base_paths(),
                &base.boundary,
                inner,
                config.seed,
            )?;
            let eps = ee_rel_error(&exact, &approx)?;
            write_named(out, "ee.csv", |w| write_ee_csv(&exact, &approx, w))?;
            println!(
                "bermudan: eps_EE = {eps:.3e} ({} vs {} at {inner} inner paths)",
                approx.method(),
                exact.method()
            );
        }
        None => {
            write_named(out, "ee_approx.csv", |w| {
                writeln!(w, "t,EE_approx")?;
                for (t, v) in approx.grid().iter().zip(approx.values()) {
                    writeln!(w, "{t:.6},{v:.12e}")?;
                }
                Ok(())
            })?;
            println!("bermudan: surrogate exposure written; no exact benchmark configured");
        }
    }

    let report = cost_report(&[&full, &low])?;
    write_named(out, "cost.csv", |w| report.write_csv(w))?;

    let nodes_dir = out.join("nodes");
    fs::create_dir_all(&nodes_dir)?;
    for k in 0..grid.len() {
        let nodes = experiments::survivor_nodes(
            markets.base_model(),
            markets.base_paths(),
            &base.boundary,
            &base.taus,
            k,
            n,
        )?;
        write_named(&nodes_dir, &format!("option_{k:03}.csv"), |w| {
            nodes.write_csv(w)?;
            Ok(())
        })?;
    }
    println!(
        "bermudan: {} and {} profiles over {} shocks, {} dates",
        full.method(),
        low.method(),
        full.num_shocks(),
        grid.len()
    );
    Ok(())
}

fn run_cva(config: &RunConfig, out: &Path, dump_paths: bool) -> Result<()> {
    let hazard = config.hazard_model()?.ok_or_else(|| {
        Error::Config(
            "hazard: the cva experiment needs hazard_kappa, hazard_level, hazard_vol, \
             hazard_y0, hazard_rho and lgd"
                .into(),
        )
    })?;
    let curve = YieldCurve::bootstrap(&config.market_instruments())?;
    let portfolio = config.portfolio(&curve)?;
    reject_bermudan(&portfolio, "cva")?;
    let horizon = config.horizon_for(&portfolio);
    let model = base_model(config, curve, horizon.max(portfolio.last_maturity()))?;
    let grid = config.monitoring_grid(horizon)?;
    let noise = GaussianNoise::new(config.seed, config.num_paths, grid.len() - 1);
    let joint = simulate_joint(&model, &hazard, &grid, config.num_paths, &noise)?;
    if dump_paths {
        dump_path_csv(out, joint.rates())?;
    }

    let ee = ee_exact(joint.rates(), &portfolio, &model)?;
    let m = joint.num_paths();
    let survival: Vec<f64> = (0..grid.len())
        .map(|k| {
            (0..m)
                .map(|j| (-joint.integrated_hazard(j, k)).exp())
                .sum::<f64>()
                / m as f64
        })
        .collect();
    let cva1 = cva_independent(&ee, &survival, hazard.lgd)?;
    let wwr_exact = cva_wwr_exact(&joint, &model, &portfolio, hazard.lgd)?;
    let g = swap_surrogates(&model, portfolio.swaps(), &grid, config.polynomial_order)?;
    let wwr_approx = cva_wwr_surrogate(&joint, &g, hazard.lgd)?;

    let rows = vec![
        ("independent".to_string(), cva1, 0.0),
        ("wwr-exact".to_string(), wwr_exact.value, wwr_exact.std_error),
        (
            format!("wwr-approx-{}", config.polynomial_order),
            wwr_approx.value,
            wwr_approx.std_error,
        ),
    ];
    write_named(out, "cva.csv", |w| write_cva_csv(&rows, w))?;
    println!(
        "cva: independent = {cva1:.6e}, wwr-exact = {:.6e} (se {:.2e}), wwr-approx = {:.6e} (se {:.2e})",
        wwr_exact.value, wwr_exact.std_error, wwr_approx.value, wwr_approx.std_error
    );
    Ok(())
}

// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;

    /// A tiny but complete config: two quotes, one par swap, small M.
    fn tiny_toml() -> String {
        r#"
            seed = 7
            num_paths = 64
            polynomial_order = 3
            difference_orders = [2, 3]
            shock_size = 1e-4
            lambda = 0.01
            eta = 0.02
            horizon = 2.0
            dates_per_year = 4.0

            [[instruments]]
            maturity = 1.0
            quote = 0.004

            [[instruments]]
            maturity = 3.0
            quote = 0.008

            [[portfolio]]
            direction = "payer"
            notional = 100.0
            maturity = 3.0
            frequency = 2.0
        "#
        .to_string()
    }

    fn tiny_config(out: &Path) -> RunConfig {
        let mut config = RunConfig::from_toml_str(&tiny_toml()).unwrap();
        config.out_dir = out.to_path_buf();
        config
    }

    #[test]
    fn defaults_fill_in_and_validate() {
        let config = RunConfig::from_toml_str(&tiny_toml()).unwrap();
        assert_eq!(config.seed, 7);
        assert_eq!(config.num_paths, 64);
        assert_eq!(config.inner_paths, 256);
        assert_eq!(config.out_dir, PathBuf::from("out"));
        assert_eq!(config.instruments[0].frequency, 1.0);
        assert_eq!(config.portfolio[0].start, 0.0);
        assert!(config.experiment.is_none());
        assert!(config.hazard_model().unwrap().is_none());
    }

    #[test]
    fn echo_round_trips() {
        let config = RunConfig::from_toml_str(&tiny_toml()).unwrap();
        let echoed = RunConfig::from_toml_str(&config.to_toml_string().unwrap()).unwrap();
        assert_eq!(config, echoed);
    }

    #[test]
    fn shipped_configs_validate() {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
        let mut seen = 0;
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.extension().map(|e| e == "toml") != Some(true) {
                continue;
            }
            let config = RunConfig::load(&path)
                .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            assert!(config.experiment.is_some(), "{}: no experiment", path.display());
            seen += 1;
        }
        assert!(seen >= 4, "expected the shipped configs, found {seen}");
    }

    #[test]
    fn unknown_keys_are_config_errors() {
        let text = tiny_toml().replace("seed = 7", "seed = 7\nnum_pths = 3");
        let err = RunConfig::from_toml_str(&text).unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err}");
        assert!(err.to_string().contains("num_pths"), "{err}");
    }

    #[test]
    fn field_level_invariants_are_enforced() {
        let cases = [
            ("num_paths = 64", "num_paths = 0", "num_paths"),
            (
                "difference_orders = [2, 3]",
                "difference_orders = [2, 9]",
                "difference_orders",
            ),
            ("shock_size = 1e-4", "shock_size = -1e-4", "shock_size"),
            ("lambda = 0.01", "lambda = 0.0", "lambda"),
            ("dates_per_year = 4.0", "dates_per_year = 0.0", "dates_per_year"),
            ("quote = 0.008", "quote = nan", "instruments[1]"),
            ("notional = 100.0", "notional = -5.0", "portfolio[0]"),
        ];
        for (from, to, field) in cases {
            let text = tiny_toml().replace(from, to);
            let err = RunConfig::from_toml_str(&text).unwrap_err();
            assert!(matches!(err, Error::Config(_)), "{err}");
            assert!(err.to_string().contains(field), "{field}: {err}");
        }
    }

    #[test]
    fn decreasing_maturities_are_rejected() {
        let text = tiny_toml().replace("maturity = 3.0\n            quote = 0.008", "maturity = 0.5\n            quote = 0.008");
        let err = RunConfig::from_toml_str(&text).unwrap_err();
        assert!(err.to_string().contains("strictly increasing"), "{err}");
    }

    #[test]
    fn partial_hazard_group_is_rejected() {
        let text = tiny_toml().replace("seed = 7", "seed = 7\nhazard_kappa = 0.4");
        let err = RunConfig::from_toml_str(&text).unwrap_err();
        assert!(err.to_string().contains("stand or fall together"), "{err}");
        assert!(err.to_string().contains("hazard_level"), "{err}");
    }

    #[test]
    fn second_bermudan_row_is_rejected() {
        let extra = r#"
            [[portfolio]]
            direction = "receiver"
            notional = 100.0
            maturity = 3.0
            frequency = 1.0
            exercise_dates = [1.0]

            [[portfolio]]
            direction = "receiver"
            notional = 100.0
            maturity = 3.0
            frequency = 1.0
            exercise_dates = [1.0, 2.0]
        "#;
        let err = RunConfig::from_toml_str(&(tiny_toml() + extra)).unwrap_err();
        assert!(err.to_string().contains("at most one row"), "{err}");
    }

    #[test]
    fn unknown_experiment_is_rejected() {
        let text = tiny_toml().replace("seed = 7", "seed = 7\nexperiment = \"warp\"");
        let err = RunConfig::from_toml_str(&text).unwrap_err();
        assert!(err.to_string().contains("unknown experiment"), "{err}");
        assert_eq!("tables".parse::<Experiment>().unwrap(), Experiment::Tables);
    }

    #[test]
    fn omitted_fixed_rate_resolves_to_par() {
        let config = RunConfig::from_toml_str(&tiny_toml()).unwrap();
        let curve = YieldCurve::bootstrap(&config.market_instruments()).unwrap();
        let portfolio = config.portfolio(&curve).unwrap();
        let par = curve.par_swap_rate(0.0, 3.0, 2.0).unwrap();
        assert_eq!(portfolio.swaps()[0].fixed_rate(), par);
        assert_eq!(portfolio.swaps()[0].sign(), 1.0);
    }

    #[test]
    fn monitoring_grid_is_uniform_and_ends_at_the_horizon() {
        let config = RunConfig::from_toml_str(&tiny_toml()).unwrap();
        let grid = config.monitoring_grid(2.0).unwrap();
        assert_eq!(grid.len(), 9);
        assert_eq!(grid[0], 0.0);
        assert_eq!(grid[4], 1.0);
        assert_eq!(*grid.last().unwrap(), 2.0);
    }

    /// Every experiment runs end to end on the tiny config, emits its
    /// files, and reruns byte-identically — outputs are a pure function of
    /// the config.
    #[test]
    fn experiments_run_and_rerun_byte_identically() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("run");
        let mut config = tiny_config(&out);
        config.inner_paths = 16;
        config.benchmark_inner_paths = Some(32);
        config.hazard_kappa = Some(0.4);
        config.hazard_level = Some(0.02);
        config.hazard_vol = Some(0.05);
        config.hazard_y0 = Some(0.02);
        config.hazard_rho = Some(0.5);
        config.lgd = Some(0.6);
        config.portfolio.push(PortfolioRow {
            direction: Direction::Receiver,
            notional: 100.0,
            fixed_rate: None,
            start: 0.0,
            maturity: 3.0,
            frequency: 1.0,
            exercise_dates: Some(vec![0.5, 1.0]),
        });

        let mut swap_cfg = config.clone();
        swap_cfg.portfolio.truncate(1);
        let mut bermudan_cfg = config.clone();
        bermudan_cfg.portfolio.remove(0);

        let expected: [(&RunConfig, Experiment, &[&str]); 6] = [
            (&swap_cfg, Experiment::Bootstrap, &["curve.csv"]),
            (&swap_cfg, Experiment::Ee, &["ee.csv"]),
            (
                &swap_cfg,
                Experiment::Sens,
                &["sens.csv", "sens_summary.csv", "bound.csv"],
            ),
            (
                &bermudan_cfg,
                Experiment::Bermudan,
                &["bermudan_sens.csv", "ee.csv", "cost.csv", "nodes/option_000.csv"],
            ),
            (&swap_cfg, Experiment::Cva, &["cva.csv"]),
            (
                &swap_cfg,
                Experiment::Tables,
                &["kappa.csv", "cost.csv", "ee.csv"],
            ),
        ];

        for (cfg, experiment, files) in expected {
            let mut first = Vec::new();
            for rerun in 0..2 {
                run(cfg, experiment, false).unwrap();
                let snapshots: Vec<Vec<u8>> = files
                    .iter()
                    .map(|f| fs::read(out.join(f)).unwrap())
                    .collect();
                assert!(
                    out.join(ECHO_FILE).is_file(),
                    "{experiment} must echo the resolved config"
                );
                if rerun == 0 {
                    first = snapshots;
                } else {
                    assert_eq!(first, snapshots, "{experiment} must be deterministic");
                }
            }
        }
    }

    #[test]
    fn dump_paths_writes_the_path_csv() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("run");
        let config = tiny_config(&out);
        run(&config, Experiment::Ee, true).unwrap();
        let text = fs::read_to_string(out.join("paths.csv")).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "path_id,date,r,int_r");
        // M paths × 9 grid dates.
        assert_eq!(lines.count(), 64 * 9);
    }

    #[test]
    fn cva_without_hazard_keys_is_a_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let config = tiny_config(&dir.path().join("run"));
        let err = run(&config, Experiment::Cva, false).unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn bermudan_requires_exercise_dates_on_the_grid() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = tiny_config(&dir.path().join("run"));
        config.portfolio[0].exercise_dates = Some(vec![0.3]);
        let err = run(&config, Experiment::Bermudan, false).unwrap_err();
        assert!(err.to_string().contains("not a monitoring date"), "{err}");
    }
}
