//! Expected-exposure sensitivities with respect to yield-curve market
//! quotes: the exact bump-and-revalue estimator Ψ^i, the full-order
//! collocation estimator Ψ^i_N, the low-order difference estimator
//! Ψ^i_{d,N}, their error metrics, cost accounting, and the empirical
//! error-bound diagnostics.
//!
//! All three estimators share one structure — the product-rule Monte Carlo
//! sum over paths,
//!
//! ```text
//! Ψ ≈ (1/M) Σ_j [ (DF_i,j − DF_j)/ΔK · W⁺(r_j)
//!                 + DF_j · (W_i⁺(r_i,j) − W⁺(r_j))/ΔK ],
//! ```
//!
//! where the valuation `W` is the exact portfolio function for Ψ^i, the
//! degree-(N−1) surrogates `g, g_i` for Ψ^i_N, and `g, g̃_i = g + h_i`
//! (with a degree-(d−1) residual correction `h_i`) for Ψ^i_{d,N}. The
//! shocked market's valuation is always evaluated at the shocked market's
//! own simulated short rate, and both markets' discount factors come from
//! path sets driven by one shared Gaussian noise — finite differences on
//! common random numbers.

use std::io::Write;

use crate::error::{Error, Result};
use crate::hullwhite::{HullWhiteModel, PathSet};
use crate::interp::{fit, DifferenceApprox, NodeSet, PolynomialApprox, Surrogate};
use crate::products::{cashflow_slice, Portfolio};

/// Relative sensitivity errors are reported only where the exact profile is
/// materially non-zero: at least this fraction of the shock's peak
/// magnitude over time. Below it the ratio measures noise against noise.
const REL_FLOOR_FRACTION: f64 = 0.02;

/// Absolute guard: a shock column whose peak is below this fraction of the
/// profile-wide peak (e.g. a quote maturing beyond the portfolio) has no
/// defined relative errors at all.
const ABS_FLOOR_FRACTION: f64 = 1e-12;

/// A sensitivity profile: ∂EE/∂K_i estimates over the monitoring grid for
/// every shocked instrument i = 1..n.
#[derive(Clone, Debug)]
pub struct SensitivityProfile {
    grid: Vec<f64>,
    /// `values[k][i-1]` = sensitivity to quote i at grid date k.
    values: Vec<Vec<f64>>,
    method: String,
    delta_k: f64,
    /// `valuations[k][mk]` = exact valuations spent at date k in market mk
    /// (0 = unshocked).
    valuations: Vec<Vec<u64>>,
}

impl SensitivityProfile {
    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn num_shocks(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    /// Row-per-date matrix of sensitivities; columns are shocks 1..n.
    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    /// Sensitivity to quote `i` (1-based) at grid index `k`.
    pub fn value(&self, k: usize, i: usize) -> f64 {
        self.values[k][i - 1]
    }

    /// "exact", "full-N" or "low-d-N".
    pub fn method(&self) -> &str {
        &self.method
    }

    pub fn delta_k(&self) -> f64 {
        self.delta_k
    }

    /// Per-date, per-market exact-valuation counters.
    pub fn valuations(&self) -> &[Vec<u64>] {
        &self.valuations
    }

    /// Exact valuations per date at a generic (full-size) date: the maximum
    /// per-date total. (The t₀ date is cheaper — its degenerate marginal
    /// needs a single node — so the maximum is the representative cost.)
    pub fn valuations_per_date(&self) -> u64 {
        self.valuations
            .iter()
            .map(|row| row.iter().sum::<u64>())
            .max()
            .unwrap_or(0)
    }
}

/// Markets must be aligned: model i carries shock index i, path sets match
/// their models, and everything shares one grid and one noise.
fn check_market_alignment(models: &[HullWhiteModel], paths: &[PathSet]) -> Result<()> {
    if models.len() != paths.len() || models.len() < 2 {
        return Err(Error::Validation(format!(
            "need the unshocked market plus at least one shocked market, got {} models and {} path sets",
            models.len(),
            paths.len()
        )));
    }
    for (i, (model, ps)) in models.iter().zip(paths).enumerate() {
        if model.market_index() != i {
            return Err(Error::Validation(format!(
                "market slot {i} holds the model for shock {}",
                model.market_index()
            )));
        }
        if ps.market_index() != i {
            return Err(Error::Validation(format!(
                "market slot {i} holds paths for shock {}",
                ps.market_index()
            )));
        }
    }
    let base = &paths[0];
    for ps in &paths[1..] {
        if ps.seed() != base.seed() || ps.num_paths() != base.num_paths() {
            return Err(Error::Validation(
                "all markets must be simulated on one shared Gaussian noise".into(),
            ));
        }
        if ps.grid().len() != base.grid().len()
            || ps
                .grid()
                .iter()
                .zip(base.grid())
                .any(|(a, b)| (a - b).abs() > 1e-12)
        {
            return Err(Error::Validation(
                "all markets must share the monitoring grid".into(),
            ));
        }
    }
    Ok(())
}

/// Shared product-rule reduction. `positive_values(market, date_index, t)`
/// returns the positive-part valuations at every path of that market plus
/// the number of exact valuations this cost. Exposed as plumbing so callers
/// can drive the estimator with bespoke valuation functions (tests, option
/// books with exercise state).
pub fn psi_with_market_valuators(
    models: &[HullWhiteModel],
    paths: &[PathSet],
    delta_k: f64,
    method: impl Into<String>,
    mut positive_values: impl FnMut(usize, usize, f64) -> Result<(Vec<f64>, u64)>,
) -> Result<SensitivityProfile> {
    check_market_alignment(models, paths)?;
    if !(delta_k > 0.0) || !delta_k.is_finite() {
        return Err(Error::Validation(format!(
            "forward differences need a positive finite shock size, got {delta_k}"
        )));
    }
    let n = models.len() - 1;
    let m = paths[0].num_paths();
    let grid = paths[0].grid().to_vec();

    let mut values = Vec::with_capacity(grid.len());
    let mut valuations = Vec::with_capacity(grid.len());
    for (k, &t) in grid.iter().enumerate() {
        let mut vplus: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
        let mut counts = Vec::with_capacity(n + 1);
        for mk in 0..=n {
            let (v, cost) = positive_values(mk, k, t)?;
            if v.len() != m {
                return Err(Error::Validation(format!(
                    "market {mk} valuator returned {} values for {m} paths",
                    v.len()
                )));
            }
            vplus.push(v);
            counts.push(cost);
        }
        let df0: Vec<f64> = (0..m).map(|j| paths[0].discount_factor(j, k)).collect();
        let mut row = vec![0.0; n];
        for i in 1..=n {
            let mut acc = 0.0;
            for j in 0..m {
                let dfi = paths[i].discount_factor(j, k);
                acc += (dfi - df0[j]) / delta_k * vplus[0][j]
                    + df0[j] * (vplus[i][j] - vplus[0][j]) / delta_k;
            }
            row[i - 1] = acc / m as f64;
        }
        values.push(row);
        valuations.push(counts);
    }
    Ok(SensitivityProfile {
        grid,
        values,
        method: method.into(),
        delta_k,
        valuations,
    })
}

/// Exact (classical) sensitivity estimator: full bump-and-revalue of the
/// swap book at every path state in every market — M(n+1) exact valuations
/// per monitoring date.
pub fn psi_exact(
    models: &[HullWhiteModel],
    paths: &[PathSet],
    portfolio: &Portfolio,
    delta_k: f64,
) -> Result<SensitivityProfile> {
    if portfolio.bermudan().is_some() {
        return Err(Error::Validation(
            "exact bump-and-revalue of a Bermudan book would nest Monte Carlo \
             inside every path state; use the surrogate estimators"
                .into(),
        ));
    }
    let swaps = portfolio.swaps();
    let m = paths[0].num_paths();
    psi_with_market_valuators(models, paths, delta_k, "exact", |mk, k, t| {
        let slice = cashflow_slice(&models[mk], swaps, t)?;
        let v = (0..m)
            .map(|j| slice.value(paths[mk].short_rate(j, k)).max(0.0))
            .collect();
        Ok((v, m as u64))
    })
}

/// Full-order estimator Ψ^i_N: degree-(N−1) surrogates replace both the
/// unshocked and every shocked valuation — N(n+1) exact valuations per date
/// (embodied in the fits).
///
/// `g[k]` must be fitted on the unshocked marginal's nodes at date k and
/// `gi[i-1][k]` on market i's marginal nodes.
pub fn psi_full_order(
    models: &[HullWhiteModel],
    paths: &[PathSet],
    g: &[PolynomialApprox],
    gi: &[Vec<PolynomialApprox>],
    delta_k: f64,
) -> Result<SensitivityProfile> {
    let dates = paths[0].num_dates();
    let n = models.len().saturating_sub(1);
    if g.len() != dates || gi.len() != n || gi.iter().any(|col| col.len() != dates) {
        return Err(Error::Validation(
            "full-order needs one unshocked surrogate per date and one shocked \
             surrogate per (shock, date)"
                .into(),
        ));
    }
    let m = paths[0].num_paths();
    let big_n = g.iter().map(|s| s.nodes().len()).max().unwrap_or(0);
    psi_with_market_valuators(models, paths, delta_k, format!("full-{big_n}"), |mk, k, _t| {
        let s: &PolynomialApprox = if mk == 0 { &g[k] } else { &gi[mk - 1][k] };
        let v = (0..m)
            .map(|j| s.evaluate(paths[mk].short_rate(j, k)).max(0.0))
            .collect();
        Ok((v, s.nodes().len() as u64))
    })
}

/// Low-order difference estimator Ψ^i_{d,N}: the shocked valuations are
/// replaced by `g̃_i = g + h_i`, where the correction h_i interpolates the
/// shock residual at only d nested nodes — N + n·d exact valuations per
/// date.
pub fn psi_low_order(
    models: &[HullWhiteModel],
    paths: &[PathSet],
    g: &[PolynomialApprox],
    gtilde: &[Vec<DifferenceApprox>],
    delta_k: f64,
) -> Result<SensitivityProfile> {
    let dates = paths[0].num_dates();
    let n = models.len().saturating_sub(1);
    if g.len() != dates || gtilde.len() != n || gtilde.iter().any(|col| col.len() != dates) {
        return Err(Error::Validation(
            "low-order needs one unshocked surrogate per date and one difference \
             surrogate per (shock, date)"
                .into(),
        ));
    }
    for col in gtilde {
        for s in col {
            if s.correction().nodes().len() > s.base().nodes().len() {
                return Err(Error::Validation(format!(
                    "correction order d = {} exceeds the base order N = {}",
                    s.correction().nodes().len(),
                    s.base().nodes().len()
                )));
            }
        }
    }
    let m = paths[0].num_paths();
    let big_n = g.iter().map(|s| s.nodes().len()).max().unwrap_or(0);
    let d = gtilde
        .iter()
        .flatten()
        .map(|s| s.correction().nodes().len())
        .max()
        .unwrap_or(0);
    psi_with_market_valuators(
        models,
        paths,
        delta_k,
        format!("low-{d}-{big_n}"),
        |mk, k, _t| {
            if mk == 0 {
                let s = &g[k];
                let v = (0..m)
                    .map(|j| s.evaluate(paths[0].short_rate(j, k)).max(0.0))
                    .collect();
                Ok((v, s.nodes().len() as u64))
            } else {
                let s = &gtilde[mk - 1][k];
                let v = (0..m)
                    .map(|j| s.evaluate(paths[mk].short_rate(j, k)).max(0.0))
                    .collect();
                Ok((v, s.correction().nodes().len() as u64))
            }
        },
    )
}

// ---------------------------------------------------------------------------
// Error metrics
// ---------------------------------------------------------------------------

/// Entrywise relative errors ε^i(t); entries where the exact sensitivity is
/// too small for a meaningful ratio are `None`.
#[derive(Clone, Debug)]
pub struct RelErrorMatrix {
    grid: Vec<f64>,
    entries: Vec<Vec<Option<f64>>>,
}

impl RelErrorMatrix {
    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    /// `entries[k][i-1]`; `None` marks an undefined (near-zero) entry.
    pub fn entries(&self) -> &[Vec<Option<f64>>] {
        &self.entries
    }

    /// Largest |relative error| over all defined entries.
    pub fn max_abs(&self) -> Option<f64> {
        self.entries
            .iter()
            .flatten()
            .flatten()
            .map(|e| e.abs())
            .fold(None, |acc, x| Some(acc.map_or(x, |a: f64| a.max(x))))
    }

    /// Largest |relative error| per shock column.
    pub fn per_shock_max(&self) -> Vec<Option<f64>> {
        let n = self.entries.first().map_or(0, Vec::len);
        (0..n)
            .map(|i| {
                self.entries
                    .iter()
                    .filter_map(|row| row[i])
                    .map(f64::abs)
                    .fold(None, |acc, x| Some(acc.map_or(x, |a: f64| a.max(x))))
            })
            .collect()
    }

    pub fn defined_count(&self) -> usize {
        self.entries.iter().flatten().flatten().count()
    }
}

/// Signed relative errors (candidate − exact)/exact per entry.
///
/// An entry is defined only where |exact| reaches 1% of that shock's peak
/// magnitude (and the peak itself is non-negligible on the profile's
/// scale); elsewhere the ratio is noise over noise and is marked undefined
/// rather than reported as a blown-up number.
///
/// Panics if the two profiles have different shapes (caller contract).
pub fn rel_error_profile(candidate: &SensitivityProfile, exact: &SensitivityProfile) -> RelErrorMatrix {
    assert_eq!(
        candidate.grid.len(),
        exact.grid.len(),
        "profiles must share the grid"
    );
    assert_eq!(
        candidate.num_shocks(),
        exact.num_shocks(),
        "profiles must cover the same shocks"
    );
    let n = exact.num_shocks();
    let col_max: Vec<f64> = (0..n)
        .map(|i| {
            exact
                .values
                .iter()
                .map(|row| row[i].abs())
                .fold(0.0, f64::max)
        })
        .collect();
    let global_max = col_max.iter().copied().fold(0.0, f64::max);
    let entries = exact
        .values
        .iter()
        .zip(&candidate.values)
        .map(|(erow, crow)| {
            (0..n)
                .map(|i| {
                    let e = erow[i];
                    let floor = (REL_FLOOR_FRACTION * col_max[i]).max(ABS_FLOOR_FRACTION * global_max);
                    if global_max > 0.0 && e.abs() >= floor && floor > 0.0 {
                        Some((crow[i] - e) / e)
                    } else {
                        None
                    }
                })
                .collect()
        })
        .collect();
    RelErrorMatrix {
        grid: exact.grid.clone(),
        entries,
    }
}

/// Integrated error measures per shock: ζ^i = ∫|Ψ^i_cand − Ψ^i_exact| dt
/// and its normalization κ^i = ζ^i / ∫|Ψ^i_exact| dt, both by trapezoidal
/// rule over the monitoring dates.
#[derive(Clone, Debug)]
pub struct IntegratedError {
    pub zeta: Vec<f64>,
    pub kappa: Vec<f64>,
}

pub fn integrated_error(
    candidate: &SensitivityProfile,
    exact: &SensitivityProfile,
) -> Result<IntegratedError> {
    if candidate.grid.len() != exact.grid.len() || candidate.num_shocks() != exact.num_shocks() {
        return Err(Error::Validation(
            "integrated_error needs profiles of identical shape".into(),
        ));
    }
    let grid = &exact.grid;
    let r = grid.len();
    let weight = |k: usize| -> f64 {
        if r == 1 {
            return 0.0;
        }
        let lo = if k == 0 { grid[0] } else { grid[k - 1] };
        let hi = if k == r - 1 { grid[r - 1] } else { grid[k + 1] };
        0.5 * (hi - lo)
    };
    let n = exact.num_shocks();
    let mut zeta = vec![0.0; n];
    let mut denom = vec![0.0; n];
    for k in 0..r {
        let w = weight(k);
        for i in 0..n {
            zeta[i] += w * (candidate.values[k][i] - exact.values[k][i]).abs();
            denom[i] += w * exact.values[k][i].abs();
        }
    }
    let kappa = zeta
        .iter()
        .zip(&denom)
        .enumerate()
        .map(|(i, (z, d))| {
            if *d > 0.0 {
                Ok(z / d)
            } else if *z == 0.0 {
                // Both estimators are identically zero (e.g. a quote the
                // portfolio never touches): no error to normalize.
                Ok(0.0)
            } else {
                Err(Error::Numerical(format!(
                    "κ^{} is undefined: the exact sensitivity integrates to zero \
                     but the candidate does not",
                    i + 1
                )))
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(IntegratedError { zeta, kappa })
}

// ---------------------------------------------------------------------------
// Cost accounting
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct CostRow {
    pub method: String,
    /// Exact valuations per monitoring date (at a generic, full-size date).
    pub per_date: u64,
    /// Relative to the full-order method's per-date cost.
    pub proportion_of_full: f64,
}

#[derive(Clone, Debug)]
pub struct CostReport {
    pub rows: Vec<CostRow>,
}

impl CostReport {
    /// CSV in the cost-table layout: `method,exact_valuations_per_date,proportion_of_full`.
    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "method,exact_valuations_per_date,proportion_of_full")?;
        for row in &self.rows {
            writeln!(
                w,
                "{},{},{:.4}",
                row.method, row.per_date, row.proportion_of_full
            )?;
        }
        Ok(())
    }
}

/// Per-method exact-valuation costs per monitoring date, normalized by the
/// full-order method. The counters are read from the profiles, so the table
/// reflects what actually ran: classical M(1+n), full-order N(1+n),
/// low-order N + d·n.
pub fn cost_report(profiles: &[&SensitivityProfile]) -> Result<CostReport> {
    let full = profiles
        .iter()
        .find(|p| p.method().starts_with("full"))
        .ok_or_else(|| {
            Error::Validation("cost_report needs a full-order profile as the baseline".into())
        })?;
    let full_cost = full.valuations_per_date();
    if full_cost == 0 {
        return Err(Error::Validation("full-order profile has empty counters".into()));
    }
    Ok(CostReport {
        rows: profiles
            .iter()
            .map(|p| CostRow {
                method: p.method().to_string(),
                per_date: p.valuations_per_date(),
                proportion_of_full: p.valuations_per_date() as f64 / full_cost as f64,
            })
            .collect(),
    })
}

// ---------------------------------------------------------------------------
// Error-bound diagnostics
// ---------------------------------------------------------------------------

/// One (date, shock) evaluation of the low-order error bound
/// `|Ψ^i − Ψ^i_{d,N}| ≤ C₂ ε₀ + (C₁/ΔK)(ε₀ + ε_i + δ₀ + δ_i)`.
#[derive(Clone, Debug)]
pub struct BoundRecord {
    pub t: f64,
    /// Shock index i (1-based).
    pub shock: usize,
    /// ‖DF(t)‖₂ (Monte Carlo).
    pub c1: f64,
    /// ‖∂DF/∂K_i‖₂ by pathwise forward difference.
    pub c2_fd: f64,
    /// ‖V − g‖₂ on the unshocked samples.
    pub eps0: f64,
    /// ‖V_i − g_i‖₂ on the shocked samples.
    pub eps_i: f64,
    /// ‖g − p‖₂: reduced-degree reinterpolation error of g.
    pub delta0: f64,
    /// ‖g_i − p_i‖₂: reduced-degree reinterpolation error of g_i.
    pub delta_i: f64,
    pub bound: f64,
    pub observed: f64,
    pub violated: bool,
}

/// Evaluate the §5-style error bound empirically at every (date, shock).
///
/// All norms are Monte Carlo L² estimates over the same paths on which the
/// `exact` and `low` profiles were computed. The reduced-degree polynomials
/// `p, p_i` reinterpolate `g, g_i` on the correction nodes of `g̃_i` — the
/// shocked market's nested node set — and δ₀ is sampled under the shocked
/// marginal: in exactly this form, every step of the bound's derivation
/// (positive-part contraction, triangle and Cauchy–Schwarz inequalities) is
/// a finite-sample inequality, so the bound cannot be violated beyond
/// floating-point round-off.
#[allow(clippy::too_many_arguments)]
pub fn bound_diagnostics(
    models: &[HullWhiteModel],
    paths: &[PathSet],
    portfolio: &Portfolio,
    g: &[PolynomialApprox],
    gi: &[Vec<PolynomialApprox>],
    gtilde: &[Vec<DifferenceApprox>],
    exact: &SensitivityProfile,
    low: &SensitivityProfile,
    delta_k: f64,
) -> Result<Vec<BoundRecord>> {
    check_market_alignment(models, paths)?;
    let n = models.len() - 1;
    let grid = paths[0].grid();
    if exact.grid.len() != grid.len() || low.grid.len() != grid.len() {
        return Err(Error::Validation(
            "profiles and path sets must share the monitoring grid".into(),
        ));
    }
    let m = paths[0].num_paths();
    let mf = m as f64;
    let swaps = portfolio.swaps();
    let l2 = |sum_sq: f64| (sum_sq / mf).sqrt();

    let mut out = Vec::with_capacity(grid.len() * n);
    for (k, &t) in grid.iter().enumerate() {
        let slice0 = cashflow_slice(&models[0], swaps, t)?;
        let df0: Vec<f64> = (0..m).map(|j| paths[0].discount_factor(j, k)).collect();
        let c1 = l2(df0.iter().map(|d| d * d).sum());
        let eps0 = l2((0..m)
            .map(|j| {
                let r = paths[0].short_rate(j, k);
                (slice0.value(r) - g[k].evaluate(r)).powi(2)
            })
            .sum());

        for i in 1..=n {
            let slice_i = cashflow_slice(&models[i], swaps, t)?;
            let g_i = &gi[i - 1][k];
            let corr_nodes = NodeSet::new(
                gtilde[i - 1][k].correction().nodes().to_vec(),
                None,
                format!("diag-nested(i={i}, t={t})"),
            )?;
            // Reduced-degree reinterpolations of the two full surrogates on
            // the nested (shocked) nodes; see module notes.
            let p_i = fit(&corr_nodes, |x| g_i.evaluate(x));
            let p0 = fit(&corr_nodes, |x| g[k].evaluate(x));

            let mut c2_sq = 0.0;
            let mut eps_i_sq = 0.0;
            let mut d0_sq = 0.0;
            let mut di_sq = 0.0;
            for j in 0..m {
                let dfi = paths[i].discount_factor(j, k);
                c2_sq += ((dfi - df0[j]) / delta_k).powi(2);
                let ri = paths[i].short_rate(j, k);
                eps_i_sq += (slice_i.value(ri) - g_i.evaluate(ri)).powi(2);
                d0_sq += (g[k].evaluate(ri) - p0.evaluate(ri)).powi(2);
                di_sq += (g_i.evaluate(ri) - p_i.evaluate(ri)).powi(2);
            }
            let (c2, eps_i, delta0, delta_i) = (l2(c2_sq), l2(eps_i_sq), l2(d0_sq), l2(di_sq));
            let bound = c2 * eps0 + c1 / delta_k * (eps0 + eps_i + delta0 + delta_i);
            let observed = (exact.values[k][i - 1] - low.values[k][i - 1]).abs();
            out.push(BoundRecord {
                t,
                shock: i,
                c1,
                c2_fd: c2,
                eps0,
                eps_i,
                delta0,
                delta_i,
                bound,
                observed,
                violated: observed > bound * (1.0 + 1e-9) + 1e-300,
            });
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// CSV exports
// ---------------------------------------------------------------------------

/// `sens.csv`: `t,i,psi_exact,psi_full,psi_low` — one row per (date, shock).
pub fn write_sens_csv(
    exact: &SensitivityProfile,
    full: &SensitivityProfile,
    low: &SensitivityProfile,
    w: &mut impl Write,
) -> Result<()> {
    let shape_ok = |p: &SensitivityProfile| {
        p.grid.len() == exact.grid.len() && p.num_shocks() == exact.num_shocks()
    };
    if !shape_ok(full) || !shape_ok(low) {
        return Err(Error::Validation(
            "sensitivity CSV export needs three profiles of identical shape".into(),
        ));
    }
    writeln!(w, "t,i,psi_exact,psi_full,psi_low")?;
    for (k, &t) in exact.grid.iter().enumerate() {
        for i in 1..=exact.num_shocks() {
            writeln!(
                w,
                "{t:.6},{i},{:.12e},{:.12e},{:.12e}",
                exact.values[k][i - 1],
                full.values[k][i - 1],
                low.values[k][i - 1]
            )?;
        }
    }
    Ok(())
}

/// `kappa.csv` in the integrated-error table layout: one row per correction
/// order d, one column per shocked instrument maturity.
pub fn write_kappa_csv(
    rows: &[(usize, Vec<f64>)],
    maturities: &[f64],
    w: &mut impl Write,
) -> Result<()> {
    write!(w, "d")?;
    for t in maturities {
        write!(w, ",T={t}")?;
    }
    writeln!(w)?;
    for (d, kappas) in rows {
        if kappas.len() != maturities.len() {
            return Err(Error::Validation(
                "kappa row length does not match the instrument count".into(),
            ));
        }
        write!(w, "{d}")?;
        for k in kappas {
            write!(w, ",{k:.6e}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}
