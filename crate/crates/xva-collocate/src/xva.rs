//! Unilateral CVA: the independence approximation CVA₁ and the wrong-way
//! risk CVA₂ with a stochastic hazard rate correlated to the short rate.
//!
//! ```text
//! CVA₁ = LGD · Σ_k EE(t₀, t_k) · PD(t_{k−1}, t_k)
//! CVA₂ = LGD · ∫ E[ B(t₀)/B(s) · (e^{−∫_{t₀}^s y du} y_s) · V⁺(s) ] ds
//! ```
//!
//! The hazard rate y follows a mean-reverting square-root process with full
//! truncation at zero — non-negative intensity with two parameters to steer
//! the strength of wrong-way risk — whose Brownian driver correlates with
//! the short rate's innovation by ρ. The time integrals (∫y and the outer
//! CVA₂ integral) use the trapezoidal rule on the monitoring grid, which is
//! dense in all experiments, so the discretization error is second order.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::exposure::ExposureProfile;
use crate::hullwhite::{GaussianNoise, HullWhiteModel, PathSet};
use crate::interp::{PolynomialApprox, Surrogate};
use crate::products::{cashflow_slice, Portfolio};

/// Domain separation for the hazard process's independent driver: the same
/// base seed must not reproduce the rate normals.
const HAZARD_SEED_SALT: u64 = 0x9E37_79B9_7F4A_7C15;

/// Counterparty default model: CIR-type hazard-rate dynamics
/// `dy = κ_y(ȳ − y)dt + η_y √y dW_y` with `corr(dW_y, dW_r) = ρ`, plus the
/// loss given default.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HazardModel {
    /// Mean-reversion speed κ_y.
    pub kappa: f64,
    /// Long-run level ȳ.
    pub level: f64,
    /// Volatility η_y.
    pub vol: f64,
    /// Initial intensity y₀.
    pub y0: f64,
    /// Correlation between the hazard and short-rate Brownian drivers.
    pub rho: f64,
    /// Loss given default, as a fraction of exposure.
    pub lgd: f64,
}

impl HazardModel {
    pub fn new(kappa: f64, level: f64, vol: f64, y0: f64, rho: f64, lgd: f64) -> Result<Self> {
        if !(kappa > 0.0) {
            return Err(Error::Validation(format!(
                "hazard mean reversion must be positive, got {kappa}"
            )));
        }
        if !(level >= 0.0) || !(vol >= 0.0) || !(y0 >= 0.0) {
            return Err(Error::Validation(format!(
                "hazard level, volatility and initial value must be non-negative, \
                 got level = {level}, vol = {vol}, y0 = {y0}"
            )));
        }
        if !(-1.0..=1.0).contains(&rho) {
            return Err(Error::Validation(format!(
                "correlation must lie in [-1, 1], got {rho}"
            )));
        }
        if !(0.0..=1.0).contains(&lgd) {
            return Err(Error::Validation(format!(
                "LGD must lie in [0, 1], got {lgd}"
            )));
        }
        Ok(HazardModel {
            kappa,
            level,
            vol,
            y0,
            rho,
            lgd,
        })
    }
}

/// Jointly simulated short-rate and hazard-rate paths on one grid.
#[derive(Clone, Debug)]
pub struct JointPathSet {
    rates: PathSet,
    dates: usize,
    /// Truncated intensities `y(s_k; ω_j) ≥ 0`, row-major `M × (R+1)`.
    hazard: Vec<f64>,
    /// Trapezoidal `∫_0^{s_k} y du`, row-major `M × (R+1)`.
    int_hazard: Vec<f64>,
}

impl JointPathSet {
    pub fn rates(&self) -> &PathSet {
        &self.rates
    }

    pub fn grid(&self) -> &[f64] {
        self.rates.grid()
    }

    pub fn num_paths(&self) -> usize {
        self.rates.num_paths()
    }

    pub fn hazard(&self, path: usize, date: usize) -> f64 {
        self.hazard[path * self.dates + date]
    }

    pub fn integrated_hazard(&self, path: usize, date: usize) -> f64 {
        self.int_hazard[path * self.dates + date]
    }

    /// The default-density factor `D(s) = e^{−∫_0^s y du} · y_s` weighting
    /// the exposure in CVA₂; non-negative pathwise by construction.
    pub fn default_density(&self, path: usize, date: usize) -> f64 {
        (-self.integrated_hazard(path, date)).exp() * self.hazard(path, date)
    }
}

/// Simulate the short rate and the hazard rate together: the rate evolves
/// by its exact transitions on the shared noise, and the intensity follows
/// a full-truncation Euler scheme whose driver is
/// `Z_y = ρ Z_r + √(1−ρ²) Z_⊥` per step, with `Z_r` the rate's innovation
/// replayed from the same noise and `Z_⊥` an independent salted substream.
///
/// Full truncation: the state may wander below zero but both the drift's
/// and the diffusion's intensity argument, and the reported path, use
/// `max(y, 0)`.
pub fn simulate_joint(
    model: &HullWhiteModel,
    hazard: &HazardModel,
    grid: &[f64],
    m: usize,
    noise: &GaussianNoise,
) -> Result<JointPathSet> {
    let rates = model.simulate(grid, m, noise)?;
    let dates = grid.len();
    let steps = dates - 1;
    let orthogonal = (1.0 - hazard.rho * hazard.rho).sqrt();
    let mut values = vec![0.0; m * dates];
    let mut integrals = vec![0.0; m * dates];
    for j in 0..m {
        let z_rate = noise.rate_normals(j, steps);
        let mut rng = ChaCha12Rng::seed_from_u64(noise.seed() ^ HAZARD_SEED_SALT);
        rng.set_stream(j as u64);
        let row = j * dates;
        let mut state = hazard.y0;
        values[row] = state.max(0.0);
        for k in 0..steps {
            let dt = grid[k + 1] - grid[k];
            let z_perp: f64 = StandardNormal.sample(&mut rng);
            let z = hazard.rho * z_rate[k] + orthogonal * z_perp;
            let plus = state.max(0.0);
            state += hazard.kappa * (hazard.level - plus) * dt
                + hazard.vol * (plus * dt).sqrt() * z;
            let next = state.max(0.0);
            values[row + k + 1] = next;
            integrals[row + k + 1] =
                integrals[row + k] + 0.5 * (values[row + k] + next) * dt;
        }
    }
    Ok(JointPathSet {
        rates,
        dates,
        hazard: values,
        int_hazard: integrals,
    })
}

// ---------------------------------------------------------------------------
// CVA estimators
// ---------------------------------------------------------------------------

/// A CVA estimate with its Monte Carlo standard error (pathwise time
/// integrals are averaged across paths, so the SE reflects the full
/// estimator, not a per-date quantity).
#[derive(Clone, Copy, Debug)]
pub struct CvaEstimate {
    pub value: f64,
    pub std_error: f64,
}

/// Independence-approximation CVA:
/// `CVA₁ = LGD · Σ_{k≥1} EE(t₀,t_k) · (S(t_{k−1}) − S(t_k))`, with
/// `survival[k]` the counterparty survival probability at the profile's
/// k-th monitoring date.
pub fn cva_independent(ee: &ExposureProfile, survival: &[f64], lgd: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&lgd) {
        return Err(Error::Validation(format!("LGD must lie in [0, 1], got {lgd}")));
    }
    if survival.len() != ee.grid().len() {
        return Err(Error::Validation(format!(
            "survival curve has {} points for {} monitoring dates",
            survival.len(),
            ee.grid().len()
        )));
    }
    if survival.iter().any(|s| !(0.0..=1.0).contains(s)) {
        return Err(Error::Validation(
            "survival probabilities must lie in [0, 1]".into(),
        ));
    }
    let mut cva = 0.0;
    for k in 1..survival.len() {
        let pd = survival[k - 1] - survival[k];
        if pd < 0.0 {
            return Err(Error::Validation(format!(
                "negative default probability increment on ({}, {}]",
                ee.grid()[k - 1],
                ee.grid()[k]
            )));
        }
        cva += ee.values()[k] * pd;
    }
    Ok(lgd * cva)
}

/// Wrong-way-risk CVA with a caller-supplied valuation
/// `valuator(date_index, t, path, r) -> V(t, r)`: the trapezoidal time
/// integral of the Monte Carlo mean of `DF · D(s) · V⁺`, with standard
/// error taken across the pathwise integrals.
pub fn cva_wwr_with(
    joint: &JointPathSet,
    lgd: f64,
    mut valuator: impl FnMut(usize, f64, usize, f64) -> Result<f64>,
) -> Result<CvaEstimate> {
    if !(0.0..=1.0).contains(&lgd) {
        return Err(Error::Validation(format!("LGD must lie in [0, 1], got {lgd}")));
    }
    let grid = joint.grid().to_vec();
    let r = grid.len();
    let m = joint.num_paths();
    let weight = |k: usize| -> f64 {
        if r == 1 {
            return 0.0;
        }
        let lo = if k == 0 { grid[0] } else { grid[k - 1] };
        let hi = if k == r - 1 { grid[r - 1] } else { grid[k + 1] };
        0.5 * (hi - lo)
    };
    let mut path_integrals = vec![0.0; m];
    for (k, &t) in grid.iter().enumerate() {
        let w = weight(k);
        for (j, acc) in path_integrals.iter_mut().enumerate() {
            let v = valuator(k, t, j, joint.rates().short_rate(j, k))?;
            *acc += w
                * joint.rates().discount_factor(j, k)
                * joint.default_density(j, k)
                * v.max(0.0);
        }
    }
    let mean = path_integrals.iter().sum::<f64>() / m as f64;
    let var = if m > 1 {
        path_integrals
            .iter()
            .map(|x| (x - mean).powi(2))
            .sum::<f64>()
            / (m as f64 - 1.0)
    } else {
        0.0
    };
    Ok(CvaEstimate {
        value: lgd * mean,
        std_error: lgd * (var / m as f64).sqrt(),
    })
}

/// CVA₂ with exact portfolio valuations at every path state.
pub fn cva_wwr_exact(
    joint: &JointPathSet,
    model: &HullWhiteModel,
    portfolio: &Portfolio,
    lgd: f64,
) -> Result<CvaEstimate> {
    if model.market_index() != joint.rates().market_index() {
        return Err(Error::Validation(format!(
            "model belongs to market {} but the paths were simulated under market {}",
            model.market_index(),
            joint.rates().market_index()
        )));
    }
    if portfolio.bermudan().is_some() {
        return Err(Error::Validation(
            "exact CVA of a Bermudan book requires exercise-state tracking; \
             value the book through its exercise-aware exposure pipeline"
                .into(),
        ));
    }
    let mut cached: Option<(usize, crate::products::CashflowSlice)> = None;
    cva_wwr_with(joint, lgd, |k, t, _j, r| {
        if cached.as_ref().map(|(kk, _)| *kk) != Some(k) {
            cached = Some((k, cashflow_slice(model, portfolio.swaps(), t)?));
        }
        Ok(cached.as_ref().unwrap().1.value(r))
    })
}

/// CVA₂ with one collocation surrogate per monitoring date replacing the
/// exact valuations.
pub fn cva_wwr_surrogate(
    joint: &JointPathSet,
    surrogates: &[PolynomialApprox],
    lgd: f64,
) -> Result<CvaEstimate> {
    if surrogates.len() != joint.grid().len() {
        return Err(Error::Validation(format!(
            "{} surrogates for {} monitoring dates",
            surrogates.len(),
            joint.grid().len()
        )));
    }
    cva_wwr_with(joint, lgd, |k, _t, _j, r| Ok(surrogates[k].evaluate(r)))
}

/// `cva.csv`: `method,value,std_error`.
pub fn write_cva_csv(rows: &[(String, f64, f64)], w: &mut impl Write) -> Result<()> {
    writeln!(w, "method,value,std_error")?;
    for (method, value, se) in rows {
        writeln!(w, "{method},{value:.12e},{se:.12e}")?;
    }
    Ok(())
}
