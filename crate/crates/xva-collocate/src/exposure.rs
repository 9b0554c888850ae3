//! Expected positive exposure by exact valuation and by collocation
//! surrogate, with the relative-error metric ε_EE.
//!
//! The exact profile is the classical reduction
//! `EE(t₀,t) = (1/M) Σ_j DF_j(t) · max(V(t, r(t;ω_j)), 0)`, costing M exact
//! portfolio valuations per monitoring date. The surrogate profile replaces
//! `V⁺` by `g⁺` — the positive part applied AFTER evaluating the fitted
//! polynomial, never fitted to V⁺ directly, whose kink would ruin the
//! polynomial's accuracy — at a cost of only the N node valuations embodied
//! in each date's fit.

use std::io::Write;

use crate::error::{Error, Result};
use crate::hullwhite::{HullWhiteModel, PathSet};
use crate::interp::{PolynomialApprox, Surrogate};
use crate::products::{cashflow_slice, CashflowSlice, Portfolio};

/// Relative errors are only meaningful where the exposure is materially
/// non-zero; dates with `EE ≤ FLOOR_FRACTION · notional scale` are skipped.
const FLOOR_FRACTION: f64 = 1e-8;

/// An expected-exposure profile over the monitoring grid.
#[derive(Clone, Debug)]
pub struct ExposureProfile {
    grid: Vec<f64>,
    values: Vec<f64>,
    method: String,
    /// Total absolute notional of the underlying book; 0 when unknown
    /// (e.g. profiles built from a bare valuator).
    scale: f64,
    exact_valuations: u64,
    extrapolations: u64,
}

impl ExposureProfile {
    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    /// EE value per grid date (non-negative by construction).
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// "exact" or "approx-N".
    pub fn method(&self) -> &str {
        &self.method
    }

    /// Notional scale used for relative-error flooring.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Exact (expensive) portfolio valuations consumed.
    pub fn exact_valuations(&self) -> u64 {
        self.exact_valuations
    }

    /// Surrogate evaluations that fell outside the fitted node span.
    pub fn extrapolations(&self) -> u64 {
        self.extrapolations
    }
}

/// Expected exposure with an arbitrary valuation function
/// `valuator(date_index, t, path_index, r) -> V`; the positive part and
/// pathwise discounting are applied here. `exact_per_date` is the number of
/// exact valuations the caller spends per date (M when the valuator itself
/// is exact, the per-date fit size when a surrogate is passed through).
pub fn ee_with_valuator(
    paths: &PathSet,
    mut valuator: impl FnMut(usize, f64, usize, f64) -> Result<f64>,
    method: impl Into<String>,
    scale: f64,
    exact_per_date: u64,
) -> Result<ExposureProfile> {
    let m = paths.num_paths();
    let mut values = Vec::with_capacity(paths.num_dates());
    for (k, &t) in paths.grid().iter().enumerate() {
        let mut acc = 0.0;
        for j in 0..m {
            let v = valuator(k, t, j, paths.short_rate(j, k))?;
            acc += paths.discount_factor(j, k) * v.max(0.0);
        }
        values.push(acc / m as f64);
    }
    Ok(ExposureProfile {
        grid: paths.grid().to_vec(),
        values,
        method: method.into(),
        scale,
        exact_valuations: exact_per_date * paths.num_dates() as u64,
        extrapolations: 0,
    })
}

/// Classical expected exposure: exact revaluation of the (swaps-only)
/// portfolio at every path state, M exact valuations per date.
pub fn ee_exact(
    paths: &PathSet,
    portfolio: &Portfolio,
    model: &HullWhiteModel,
) -> Result<ExposureProfile> {
    if model.market_index() != paths.market_index() {
        return Err(Error::Validation(format!(
            "pathset was simulated for market {} but the model belongs to market {}",
            paths.market_index(),
            model.market_index()
        )));
    }
    if portfolio.bermudan().is_some() {
        return Err(Error::Validation(
            "ee_exact covers swap books; Bermudan exposure needs the \
             exercise-aware pipeline built on ee_with_valuator"
                .into(),
        ));
    }
    let scale: f64 = portfolio.swaps().iter().map(|s| s.notional()).sum();
    let mut cached: Option<(usize, CashflowSlice)> = None;
    let swaps = portfolio.swaps();
    let m = paths.num_paths() as u64;
    ee_with_valuator(
        paths,
        move |k, t, _j, r| {
            if cached.as_ref().map(|c| c.0) != Some(k) {
                cached = Some((k, cashflow_slice(model, swaps, t)?));
            }
            Ok(cached.as_ref().unwrap().1.value(r))
        },
        "exact",
        scale,
        m,
    )
}

/// Collocation expected exposure: per date, evaluate that date's surrogate
/// at every path state and apply the positive part to the result.
pub fn ee_approx(
    paths: &PathSet,
    approx: &[PolynomialApprox],
    model: &HullWhiteModel,
) -> Result<ExposureProfile> {
    if model.market_index() != paths.market_index() {
        return Err(Error::Validation(
            "pathset and model belong to different markets".into(),
        ));
    }
    if approx.len() != paths.num_dates() {
        return Err(Error::Validation(format!(
            "need one approximant per grid date: got {} for {} dates",
            approx.len(),
            paths.num_dates()
        )));
    }
    let extrap_before: u64 = approx.iter().map(|g| g.extrapolations()).sum();
    let m = paths.num_paths();
    let mut values = Vec::with_capacity(paths.num_dates());
    for (k, g) in approx.iter().enumerate() {
        let mut acc = 0.0;
        for j in 0..m {
            acc += paths.discount_factor(j, k) * g.evaluate(paths.short_rate(j, k)).max(0.0);
        }
        values.push(acc / m as f64);
    }
    let extrap_after: u64 = approx.iter().map(|g| g.extrapolations()).sum();
    let n_max = approx.iter().map(|g| g.nodes().len()).max().unwrap_or(0);
    Ok(ExposureProfile {
        grid: paths.grid().to_vec(),
        values,
        method: format!("approx-{n_max}"),
        scale: 0.0,
        exact_valuations: approx.iter().map(|g| g.nodes().len() as u64).sum(),
        extrapolations: extrap_after - extrap_before,
    })
}

/// ε_EE: the maximum over dates of |ẼE − EE| / EE, skipping dates where
/// the exact exposure sits below the floor `1e-8 ×` the exact profile's
/// notional scale. Errors if every date is skipped — the metric is then
/// undefined.
pub fn ee_rel_error(exact: &ExposureProfile, approx: &ExposureProfile) -> Result<f64> {
    check_same_grid(exact, approx)?;
    let floor = FLOOR_FRACTION * exact.scale;
    let mut max_err: Option<f64> = None;
    for (e, a) in exact.values.iter().zip(&approx.values) {
        if *e <= floor {
            continue;
        }
        let err = ((a - e) / e).abs();
        max_err = Some(max_err.map_or(err, |m: f64| m.max(err)));
    }
    max_err.ok_or_else(|| {
        Error::Numerical(
            "ε_EE is undefined: the exact exposure is below the floor at every date".into(),
        )
    })
}

fn check_same_grid(a: &ExposureProfile, b: &ExposureProfile) -> Result<()> {
    if a.grid.len() != b.grid.len()
        || a.grid
            .iter()
            .zip(&b.grid)
            .any(|(x, y)| (x - y).abs() > 1e-12)
    {
        return Err(Error::Validation(
            "exposure profiles live on different grids".into(),
        ));
    }
    Ok(())
}

/// CSV export `t,EE_exact,EE_approx,rel_err`; the rel_err field is left
/// empty at dates below the relative-error floor.
pub fn write_ee_csv(
    exact: &ExposureProfile,
    approx: &ExposureProfile,
    w: &mut impl Write,
) -> Result<()> {
    check_same_grid(exact, approx)?;
    writeln!(w, "t,EE_exact,EE_approx,rel_err")?;
    let floor = FLOOR_FRACTION * exact.scale;
    for ((t, e), a) in exact.grid.iter().zip(&exact.values).zip(&approx.values) {
        if *e <= floor {
            writeln!(w, "{t:.6},{e:.12e},{a:.12e},")?;
        } else {
            writeln!(w, "{t:.6},{e:.12e},{a:.12e},{:.12e}", ((a - e) / e).abs())?;
        }
    }
    Ok(())
}
