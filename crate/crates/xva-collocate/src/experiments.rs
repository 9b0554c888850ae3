//! Experiment orchestration: wiring curves, models, simulations, surrogates
//! and estimators into the reproducible runs exposed by the CLI.

use crate::curve::{MarketInstrument, ShockSpec, YieldCurve};
use crate::error::{Error, Result};
use crate::exposure::{ee_with_valuator, ExposureProfile};
use crate::hullwhite::{simulate_common, GaussianNoise, HWParams, HullWhiteModel, PathSet};
use crate::interp::{
    fit, fit_difference, hermite_nodes, nested_subset, truncated_normal_nodes, DifferenceApprox,
    NodeSet, PolynomialApprox, Surrogate, TruncationSide,
};
use crate::products::{
    bermudan_value_exact, cashflow_slice, lsmc_boundary, BermudanSwaption, CashflowSlice,
    ExerciseBoundary, Swap, DATE_EPS,
};
use crate::sensitivity::{psi_with_market_valuators, SensitivityProfile};

/// Marginal short-rate interpolation nodes for one market at one date:
/// Gauss–Hermite points of `r(t) ~ N(ψ(t), σ²(t))`. At t₀ the law is
/// degenerate and the node set collapses to the single point ψ(t₀).
pub fn marginal_nodes(model: &HullWhiteModel, t: f64, n: usize) -> Result<NodeSet> {
    let (mu, var) = model.marginal_law(t)?;
    let sigma = var.sqrt();
    if sigma > 1e-12 {
        hermite_nodes(mu, sigma, n)
    } else {
        NodeSet::new(vec![mu], Some(vec![1.0]), format!("degenerate({mu})"))
    }
}

/// Fit one valuation surrogate per monitoring date for a book of swaps:
/// degree N−1 polynomials through exact valuations at the Gauss–Hermite
/// nodes of the date's short-rate marginal.
pub fn swap_surrogates(
    model: &HullWhiteModel,
    swaps: &[Swap],
    grid: &[f64],
    n: usize,
) -> Result<Vec<PolynomialApprox>> {
    grid.iter()
        .map(|&t| {
            let nodes = marginal_nodes(model, t, n)?;
            let slice = cashflow_slice(model, swaps, t)?;
            Ok(fit(&nodes, |x| slice.value(x)))
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Market sets
// ---------------------------------------------------------------------------

/// The unshocked market plus one market per shocked instrument, simulated on
/// one shared Gaussian noise. Slot 0 is the unshocked market; slot i ≥ 1 is
/// the market with instrument i's quote lifted.
pub struct MarketSet {
    pub models: Vec<HullWhiteModel>,
    pub paths: Vec<PathSet>,
}

impl MarketSet {
    /// Number of shocked instruments (markets minus the unshocked one).
    pub fn num_shocks(&self) -> usize {
        self.models.len().saturating_sub(1)
    }

    pub fn base_model(&self) -> &HullWhiteModel {
        &self.models[0]
    }

    pub fn base_paths(&self) -> &PathSet {
        &self.paths[0]
    }
}

/// Bootstrap the unshocked curve plus one curve per instrument with that
/// quote lifted by `delta_k`, extend every curve at least to `horizon` (for
/// books whose cash flows outlive the longest quote), build the Hull–White
/// models and simulate all markets on one shared noise — the
/// common-random-numbers setup the sensitivity estimators require.
pub fn build_markets(
    instruments: &[MarketInstrument],
    params: HWParams,
    delta_k: f64,
    horizon: f64,
    grid: &[f64],
    num_paths: usize,
    seed: u64,
) -> Result<MarketSet> {
    if !(delta_k > 0.0) || !delta_k.is_finite() {
        return Err(Error::Validation(format!(
            "market shocks need a positive finite size, got {delta_k}"
        )));
    }
    let mut curves = vec![YieldCurve::bootstrap(instruments)?];
    for index in 1..=instruments.len() {
        curves.push(YieldCurve::shocked(
            instruments,
            ShockSpec {
                index,
                shift: delta_k,
            },
        )?);
    }
    let models: Vec<HullWhiteModel> = curves
        .into_iter()
        .map(|curve| {
            let extended = curve.horizon().max(horizon);
            Ok(HullWhiteModel::new(params, curve.with_horizon(extended)?))
        })
        .collect::<Result<_>>()?;
    let noise = GaussianNoise::new(seed, num_paths, grid.len().saturating_sub(1));
    let paths = simulate_common(&models, grid, num_paths, &noise)?;
    Ok(MarketSet { models, paths })
}

/// Full-order surrogate family for a swap book across a market set: the
/// unshocked market's per-date surrogates `g` plus, per shocked market i,
/// the surrogates `gi[i-1]` fitted on that market's own marginal nodes.
pub fn market_surrogates(
    markets: &MarketSet,
    swaps: &[Swap],
    n: usize,
) -> Result<(Vec<PolynomialApprox>, Vec<Vec<PolynomialApprox>>)> {
    let grid = markets.base_paths().grid().to_vec();
    let g = swap_surrogates(markets.base_model(), swaps, &grid, n)?;
    let gi = (1..markets.models.len())
        .map(|i| swap_surrogates(&markets.models[i], swaps, &grid, n))
        .collect::<Result<_>>()?;
    Ok((g, gi))
}

/// Low-order difference surrogates `g̃_i = g + h_i` for a swap book: per
/// shocked market and date, the correction `h_i` interpolates the shock
/// residual `V_i − g` at `d` nested nodes of the shocked marginal's `n`-node
/// set. At `d = n` the difference surrogate coincides with the full-order
/// shocked fit.
pub fn swap_difference_surrogates(
    markets: &MarketSet,
    swaps: &[Swap],
    g: &[PolynomialApprox],
    n: usize,
    d: usize,
) -> Result<Vec<Vec<DifferenceApprox>>> {
    if d == 0 {
        return Err(Error::Validation(
            "the correction order d must be at least 1".into(),
        ));
    }
    let grid = markets.base_paths().grid().to_vec();
    if g.len() != grid.len() {
        return Err(Error::Validation(format!(
            "need one unshocked surrogate per date: got {} for {} dates",
            g.len(),
            grid.len()
        )));
    }
    (1..markets.models.len())
        .map(|i| {
            let model = &markets.models[i];
            grid.iter()
                .enumerate()
                .map(|(k, &t)| {
                    let nodes = marginal_nodes(model, t, n)?;
                    let sub = nested_subset(&nodes, d.min(nodes.len()))?;
                    let slice = cashflow_slice(model, swaps, t)?;
                    Ok(fit_difference(&g[k], &sub, |x| slice.value(x)))
                })
                .collect()
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Bermudan exposure pipeline
// ---------------------------------------------------------------------------

/// Grid index of each path's exercise, or `None` where the option is never
/// exercised. The monitoring grid must contain every exercise date: the
/// exposure passes need the exercise state resolved at every date they
/// visit.
pub fn exercise_times(
    paths: &PathSet,
    boundary: &ExerciseBoundary,
) -> Result<Vec<Option<usize>>> {
    let grid = paths.grid();
    let idx: Vec<usize> = boundary
        .dates()
        .iter()
        .map(|&s| {
            grid.iter()
                .position(|&t| (t - s).abs() <= DATE_EPS)
                .ok_or_else(|| {
                    Error::Validation(format!(
                        "exercise date {s} is not a monitoring date; add it to the grid"
                    ))
                })
        })
        .collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(paths.num_paths());
    for j in 0..paths.num_paths() {
        let rs: Vec<f64> = idx.iter().map(|&k| paths.short_rate(j, k)).collect();
        out.push(boundary.first_exercise(&rs).map(|l| idx[l]));
    }
    Ok(out)
}

/// The truncation of the short-rate law from which the option-branch
/// surrogate takes its inputs at grid date `k`.
///
/// At an exercise date the surviving population is sharply bounded by that
/// date's threshold (receiver survivors satisfy `r > r*`, so the upper tail
/// is kept; payer survivors mirror it). Between exercise dates survivors
/// diffuse past the last threshold, so the bound is widened to the most
/// extreme live sample — the fitted span then covers every state the
/// surrogate is asked to value, and a high-degree polynomial is never
/// extrapolated into the exercised region where it explodes. `None` before
/// the first decision (the plain marginal applies) or when nothing
/// restricts the law.
fn survivor_truncation(
    paths: &PathSet,
    boundary: &ExerciseBoundary,
    taus: &[Option<usize>],
    k: usize,
) -> Option<(f64, TruncationSide)> {
    let t = paths.grid()[k];
    let exercise_below = boundary.exercise_below();
    let side = if exercise_below {
        TruncationSide::Lower
    } else {
        TruncationSide::Upper
    };
    let threshold = boundary
        .dates()
        .iter()
        .zip(boundary.thresholds())
        .filter(|&(&s, &b)| s <= t + DATE_EPS && b.is_finite())
        .next_back()
        .map(|(_, &b)| b)?;
    let live_extreme = (0..paths.num_paths())
        .filter(|&j| !taus[j].is_some_and(|tk| tk <= k))
        .map(|j| paths.short_rate(j, k))
        .fold(None, |acc: Option<f64>, r| {
            Some(match acc {
                None => r,
                Some(a) if exercise_below => a.min(r),
                Some(a) => a.max(r),
            })
        })?;
    let bound = if exercise_below {
        threshold.min(live_extreme)
    } else {
        threshold.max(live_extreme)
    };
    Some((bound, side))
}

/// Interpolation nodes for the surviving (unexercised) population at grid
/// date `k`: Gaussian quadrature of the short-rate marginal conditioned on
/// the exercise decisions so far (see [`survivor_truncation`]). Before the
/// first exercise date this is the plain marginal.
pub fn survivor_nodes(
    model: &HullWhiteModel,
    paths: &PathSet,
    boundary: &ExerciseBoundary,
    taus: &[Option<usize>],
    k: usize,
    n: usize,
) -> Result<NodeSet> {
    let t = paths.grid()[k];
    let (mu, var) = model.marginal_law(t)?;
    let sigma = var.sqrt();
    if sigma <= 1e-12 {
        return NodeSet::new(vec![mu], Some(vec![1.0]), format!("degenerate({mu})"));
    }
    match survivor_truncation(paths, boundary, taus, k) {
        Some((bound, side)) => truncated_normal_nodes(mu, sigma, bound, side, n),
        None => hermite_nodes(mu, sigma, n),
    }
}

/// Deterministic seed for one nested valuation, keyed by the valuation state
/// rather than loop indices: refitting at the same `(t, r)` — e.g. the
/// low-order correction re-valuing a subset of the full-order nodes — replays
/// identical inner noise, and shocked markets value their nodes under common
/// random numbers.
fn nested_seed(seed: u64, t: f64, r: f64) -> u64 {
    fn mix(h: u64) -> u64 {
        let mut z = h;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    mix(seed ^ mix(t.to_bits()) ^ mix(r.to_bits().rotate_left(32)))
}

/// Per-date valuation surrogates for a Bermudan book under physical
/// settlement. `option[k]` fits the nested-MC option value U(t_k, ·) on the
/// survivor nodes; `swap[k]` fits the delivered underlying on the plain
/// marginal nodes. Exposure and sensitivity passes pick the branch by each
/// path's exercise state.
pub struct BermudanSurrogates {
    pub option: Vec<PolynomialApprox>,
    pub swap: Vec<PolynomialApprox>,
}

impl BermudanSurrogates {
    /// Exact valuations embodied in the two fits at date `k`.
    pub fn cost(&self, k: usize) -> u64 {
        (self.option[k].nodes().len() + self.swap[k].nodes().len()) as u64
    }
}

/// Fit the two-branch surrogates: `n` nodes per branch per date, each option
/// node valued by nested Monte Carlo with `inner_paths` paths. The option
/// branch is fitted on the survivor law of `paths`/`taus`, the population it
/// will be evaluated on.
pub fn bermudan_surrogates(
    model: &HullWhiteModel,
    bermudan: &BermudanSwaption,
    boundary: &ExerciseBoundary,
    paths: &PathSet,
    taus: &[Option<usize>],
    n: usize,
    inner_paths: usize,
    seed: u64,
) -> Result<BermudanSurrogates> {
    if taus.len() != paths.num_paths() {
        return Err(Error::Validation(format!(
            "exercise states cover {} paths but the path set holds {}",
            taus.len(),
            paths.num_paths()
        )));
    }
    let underlying = std::slice::from_ref(bermudan.underlying());
    let grid = paths.grid().to_vec();
    let mut option = Vec::with_capacity(grid.len());
    let mut swap = Vec::with_capacity(grid.len());
    for (k, &t) in grid.iter().enumerate() {
        let u_nodes = survivor_nodes(model, paths, boundary, taus, k, n)?;
        let u_values: Vec<f64> = u_nodes
            .nodes()
            .iter()
            .map(|&x| {
                bermudan_value_exact(
                    model,
                    bermudan,
                    t,
                    x,
                    boundary,
                    inner_paths,
                    nested_seed(seed, t, x),
                )
            })
            .collect::<Result<_>>()?;
        let mut it = u_values.iter().copied();
        option.push(fit(&u_nodes, |_| it.next().unwrap()));

        let v_nodes = marginal_nodes(model, t, n)?;
        let slice = cashflow_slice(model, underlying, t)?;
        swap.push(fit(&v_nodes, |x| slice.value(x)));
    }
    Ok(BermudanSurrogates { option, swap })
}

/// Expected exposure of a Bermudan book by nested Monte Carlo: before each
/// path's exercise the book is the live option, valued exactly by inner
/// simulation at the path state; from the exercise date on it is the
/// delivered underlying. M exact valuations per date — the expensive
/// benchmark the surrogates replace.
pub fn bermudan_exposure_exact(
    model: &HullWhiteModel,
    bermudan: &BermudanSwaption,
    paths: &PathSet,
    boundary: &ExerciseBoundary,
    inner_paths: usize,
    seed: u64,
) -> Result<ExposureProfile> {
    if model.market_index() != paths.market_index() {
        return Err(Error::Validation(
            "pathset and model belong to different markets".into(),
        ));
    }
    let taus = exercise_times(paths, boundary)?;
    let underlying = std::slice::from_ref(bermudan.underlying());
    let notional = bermudan.underlying().notional();
    let m = paths.num_paths() as u64;
    let mut slice_cache: Option<(usize, CashflowSlice)> = None;
    ee_with_valuator(
        paths,
        |k, t, j, r| {
            if taus[j].is_some_and(|tk| tk <= k) {
                if slice_cache.as_ref().map_or(true, |(kk, _)| *kk != k) {
                    slice_cache = Some((k, cashflow_slice(model, underlying, t)?));
                }
                Ok(slice_cache.as_ref().unwrap().1.value(r))
            } else {
                bermudan_value_exact(
                    model,
                    bermudan,
                    t,
                    r,
                    boundary,
                    inner_paths,
                    nested_seed(seed, t, r),
                )
            }
        },
        "bermudan-exact",
        notional,
        m,
    )
}

/// Collocation exposure of a Bermudan book: evaluate the date's branch
/// surrogate at every path state — option branch before the path's exercise,
/// underlying branch after — and apply the positive part to the result.
pub fn bermudan_exposure_approx(
    paths: &PathSet,
    surrogates: &BermudanSurrogates,
    taus: &[Option<usize>],
    scale: f64,
) -> Result<ExposureProfile> {
    if surrogates.option.len() != paths.num_dates() || surrogates.swap.len() != paths.num_dates()
    {
        return Err(Error::Validation(
            "bermudan surrogates must cover every monitoring date".into(),
        ));
    }
    if taus.len() != paths.num_paths() {
        return Err(Error::Validation(
            "one exercise time per path is required".into(),
        ));
    }
    let per_date = (0..paths.num_dates())
        .map(|k| surrogates.cost(k))
        .max()
        .unwrap_or(0);
    let big_n = surrogates
        .option
        .iter()
        .map(|s| s.nodes().len())
        .max()
        .unwrap_or(0);
    ee_with_valuator(
        paths,
        |k, _t, j, r| {
            let live = !taus[j].is_some_and(|tk| tk <= k);
            Ok(if live {
                surrogates.option[k].evaluate(r)
            } else {
                surrogates.swap[k].evaluate(r)
            })
        },
        format!("bermudan-approx-{big_n}"),
        scale,
        per_date,
    )
}

// ---------------------------------------------------------------------------
// Bermudan sensitivities
// ---------------------------------------------------------------------------

/// One market's self-consistent Bermudan state: its own LSMC boundary, the
/// per-path exercise times that boundary induces on the market's paths, and
/// the two-branch surrogates fitted under it. The strike and exercise
/// schedule are contractual — identical across markets — while the boundary,
/// exercise times, and valuations all respond to the shocked curve.
pub struct BermudanMarket {
    pub boundary: ExerciseBoundary,
    pub taus: Vec<Option<usize>>,
    pub surrogates: BermudanSurrogates,
}

/// Build the per-market Bermudan state for every market in the set. Nested
/// valuations are seeded by state, so shocked markets value their nodes
/// under common random numbers.
pub fn bermudan_markets(
    markets: &MarketSet,
    bermudan: &BermudanSwaption,
    n: usize,
    inner_paths: usize,
    seed: u64,
) -> Result<Vec<BermudanMarket>> {
    markets
        .models
        .iter()
        .zip(&markets.paths)
        .map(|(model, paths)| {
            let boundary = lsmc_boundary(model, bermudan, paths)?;
            let taus = exercise_times(paths, &boundary)?;
            let surrogates =
                bermudan_surrogates(model, bermudan, &boundary, paths, &taus, n, inner_paths, seed)?;
            Ok(BermudanMarket {
                boundary,
                taus,
                surrogates,
            })
        })
        .collect()
}

/// Full-order Bermudan sensitivity: every market's book value is its own
/// two-branch surrogate, branch-selected by that market's exercise state.
pub fn bermudan_psi_full(
    markets: &MarketSet,
    states: &[BermudanMarket],
    delta_k: f64,
) -> Result<SensitivityProfile> {
    if states.len() != markets.models.len() {
        return Err(Error::Validation(
            "one Bermudan state per market is required".into(),
        ));
    }
    let m = markets.paths[0].num_paths();
    let big_n = states[0]
        .surrogates
        .option
        .iter()
        .map(|s| s.nodes().len())
        .max()
        .unwrap_or(0);
    psi_with_market_valuators(
        &markets.models,
        &markets.paths,
        delta_k,
        format!("full-{big_n}"),
        |mk, k, _t| {
            let st = &states[mk];
            let v = (0..m)
                .map(|j| {
                    let r = markets.paths[mk].short_rate(j, k);
                    let live = !st.taus[j].is_some_and(|tk| tk <= k);
                    let raw = if live {
                        st.surrogates.option[k].evaluate(r)
                    } else {
                        st.surrogates.swap[k].evaluate(r)
                    };
                    raw.max(0.0)
                })
                .collect();
            Ok((v, st.surrogates.cost(k)))
        },
    )
}

/// Low-order difference surrogates for one shocked market's Bermudan book:
/// each branch of the unshocked surrogate is corrected by a low-order
/// interpolant of the shock residual on `d` nested survivor/marginal nodes
/// of the shocked market.
pub struct BermudanDifference {
    pub option: Vec<DifferenceApprox>,
    pub swap: Vec<DifferenceApprox>,
}

impl BermudanDifference {
    /// Exact valuations embodied in the two corrections at date `k`.
    pub fn cost(&self, k: usize) -> u64 {
        (self.option[k].correction().nodes().len() + self.swap[k].correction().nodes().len())
            as u64
    }
}

/// Fit the low-order corrections for every shocked market. The parent node
/// sets are re-derived exactly as the full-order fits derived theirs, so the
/// nested subsets live inside the same point families, and state-keyed inner
/// seeds replay the full fit's noise wherever a node is shared.
pub fn bermudan_difference_surrogates(
    markets: &MarketSet,
    bermudan: &BermudanSwaption,
    states: &[BermudanMarket],
    d: usize,
    inner_paths: usize,
    seed: u64,
) -> Result<Vec<BermudanDifference>> {
    if states.len() != markets.models.len() {
        return Err(Error::Validation(
            "one Bermudan state per market is required".into(),
        ));
    }
    if d == 0 {
        return Err(Error::Validation(
            "the correction order d must be at least 1".into(),
        ));
    }
    let grid = markets.paths[0].grid().to_vec();
    let underlying = std::slice::from_ref(bermudan.underlying());
    let base = &states[0];
    let mut out = Vec::with_capacity(markets.num_shocks());
    for mk in 1..markets.models.len() {
        let model = &markets.models[mk];
        let paths = &markets.paths[mk];
        let boundary = &states[mk].boundary;
        let taus = &states[mk].taus;
        let mut option = Vec::with_capacity(grid.len());
        let mut swap = Vec::with_capacity(grid.len());
        for (k, &t) in grid.iter().enumerate() {
            let u_parent = survivor_nodes(
                model,
                paths,
                boundary,
                taus,
                k,
                states[mk].surrogates.option[k].nodes().len(),
            )?;
            let u_sub = nested_subset(&u_parent, d.min(u_parent.len()))?;
            let u_values: Vec<f64> = u_sub
                .nodes()
                .iter()
                .map(|&x| {
                    bermudan_value_exact(
                        model,
                        bermudan,
                        t,
                        x,
                        boundary,
                        inner_paths,
                        nested_seed(seed, t, x),
                    )
                })
                .collect::<Result<_>>()?;
            let mut it = u_values.iter().copied();
            option.push(fit_difference(&base.surrogates.option[k], &u_sub, |_| {
                it.next().unwrap()
            }));

            let v_parent = marginal_nodes(model, t, states[mk].surrogates.swap[k].nodes().len())?;
            let v_sub = nested_subset(&v_parent, d.min(v_parent.len()))?;
            let slice = cashflow_slice(model, underlying, t)?;
            swap.push(fit_difference(&base.surrogates.swap[k], &v_sub, |x| {
                slice.value(x)
            }));
        }
        out.push(BermudanDifference { option, swap });
    }
    Ok(out)
}

/// Low-order Bermudan sensitivity: the unshocked market keeps its full
/// surrogate; every shocked market's branches are the corrected
/// `g̃ = g + h` difference surrogates, branch-selected by that market's own
/// exercise state.
pub fn bermudan_psi_low(
    markets: &MarketSet,
    states: &[BermudanMarket],
    diffs: &[BermudanDifference],
    delta_k: f64,
) -> Result<SensitivityProfile> {
    if states.len() != markets.models.len() || diffs.len() != markets.num_shocks() {
        return Err(Error::Validation(
            "need one Bermudan state per market and one difference set per shock".into(),
        ));
    }
    let m = markets.paths[0].num_paths();
    let big_n = states[0]
        .surrogates
        .option
        .iter()
        .map(|s| s.nodes().len())
        .max()
        .unwrap_or(0);
    let low_d = diffs
        .iter()
        .flat_map(|df| df.option.iter().map(|s| s.correction().nodes().len()))
        .max()
        .unwrap_or(0);
    psi_with_market_valuators(
        &markets.models,
        &markets.paths,
        delta_k,
        format!("low-{low_d}-{big_n}"),
        |mk, k, _t| {
            let st = &states[mk];
            let v: Vec<f64> = (0..m)
                .map(|j| {
                    let r = markets.paths[mk].short_rate(j, k);
                    let live = !st.taus[j].is_some_and(|tk| tk <= k);
                    let raw = if mk == 0 {
                        if live {
                            st.surrogates.option[k].evaluate(r)
                        } else {
                            st.surrogates.swap[k].evaluate(r)
                        }
                    } else if live {
                        diffs[mk - 1].option[k].evaluate(r)
                    } else {
                        diffs[mk - 1].swap[k].evaluate(r)
                    };
                    raw.max(0.0)
                })
                .collect();
            let cost = if mk == 0 {
                st.surrogates.cost(k)
            } else {
                diffs[mk - 1].cost(k)
            };
            Ok((v, cost))
        },
    )
}

pub mod presets {
    //! Reference market data used by the worked examples, the CLI default
    //! configs, and the acceptance suite.

    use crate::curve::MarketInstrument;
    use crate::products::Swap;

    /// The 8-instrument par-swap quote set (maturities 1y–30y) behind all
    /// reference experiments. Fixed legs pay annually.
    pub fn market_instruments() -> Vec<MarketInstrument> {
        let maturities = [1.0, 2.0, 3.0, 5.0, 7.0, 10.0, 20.0, 30.0];
        let quotes_pct = [0.04, 0.16, 0.31, 0.81, 1.28, 1.62, 2.22, 2.30];
        maturities
            .iter()
            .zip(quotes_pct)
            .enumerate()
            .map(|(i, (&t, k))| MarketInstrument::new(i + 1, t, k / 100.0, 1.0))
            .collect()
    }

    /// The 13-swap mixed payer/receiver book (staggered starts, maturities
    /// out to 40y, irregular payment frequencies) used by the
    /// large-portfolio experiments. Rows: (sign, notional, fixed rate,
    /// maturity, start, payments/year).
    pub fn large_portfolio_swaps() -> Vec<Swap> {
        let rows: [(i8, f64, f64, f64, f64, f64); 13] = [
            (-1, 10_000.0, 0.022, 20.0, 0.0, 2.0),
            (-1, 8_333.0, 0.042, 20.0, 0.0, 2.0),
            (-1, 8_333.0, 0.042, 21.0, 0.0, 1.9),
            (1, 8_333.0, 0.042, 24.0, 0.0, 1.7),
            (1, 8_333.0, 0.042, 17.0, 0.0, 2.4),
            (1, 8_333.0, 0.042, 26.0, 0.0, 1.5),
            (1, 8_333.0, 0.042, 19.0, 5.0, 2.9),
            (1, 8_333.0, 0.042, 40.0, 10.0, 1.3),
            (-1, 8_333.0, 0.042, 19.0, 3.0, 2.5),
            (-1, 8_333.0, 0.042, 20.0, 7.0, 3.1),
            (1, 8_333.0, 0.042, 20.0, 2.0, 2.2),
            (-1, 8_333.0, 0.042, 20.0, 0.0, 2.0),
            (-1, 8_333.0, 0.042, 20.0, 0.0, 2.0),
        ];
        rows.iter()
            .map(|&(sign, notional, rate, maturity, start, freq)| {
                Swap::new(sign, notional, rate, start, maturity, freq)
                    .expect("reference portfolio rows are valid")
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hullwhite::GaussianNoise;
    use crate::products::{lsmc_boundary, BermudanSwaption};
    use once_cell::sync::Lazy;

    const NOTIONAL: f64 = 10_000.0;
    const DELTA_K: f64 = 1e-4;

    fn quarterly(horizon: f64) -> Vec<f64> {
        let steps = (horizon * 4.0).round() as usize;
        (0..=steps).map(|k| k as f64 / 4.0).collect()
    }

    fn hw_params() -> HWParams {
        HWParams::new(0.01, 0.02).unwrap()
    }

    /// Five-date receiver Bermudan (annual exercises) on the par 20y swap.
    fn receiver_bermudan() -> BermudanSwaption {
        let curve = YieldCurve::bootstrap(&presets::market_instruments()).unwrap();
        let par = curve.par_swap_rate(0.0, 20.0, 2.0).unwrap();
        let underlying = Swap::new(-1, NOTIONAL, par, 0.0, 20.0, 2.0).unwrap();
        BermudanSwaption::new(vec![1.0, 2.0, 3.0, 4.0, 5.0], underlying).unwrap()
    }

    struct SingleMarket {
        model: HullWhiteModel,
        paths: PathSet,
        bermudan: BermudanSwaption,
        boundary: ExerciseBoundary,
        taus: Vec<Option<usize>>,
    }

    fn single_market(m: usize, seed: u64) -> SingleMarket {
        let curve = YieldCurve::bootstrap(&presets::market_instruments()).unwrap();
        let model = HullWhiteModel::new(hw_params(), curve);
        let grid = quarterly(5.0);
        let noise = GaussianNoise::new(seed, m, grid.len() - 1);
        let paths = model.simulate(&grid, m, &noise).unwrap();
        let bermudan = receiver_bermudan();
        let boundary = lsmc_boundary(&model, &bermudan, &paths).unwrap();
        let taus = exercise_times(&paths, &boundary).unwrap();
        SingleMarket {
            model,
            paths,
            bermudan,
            boundary,
            taus,
        }
    }

    static ONE: Lazy<SingleMarket> = Lazy::new(|| single_market(2000, 31));

    /// A smaller outer sample for the nested-MC exposure benchmark: common
    /// random numbers couple the exact and surrogate passes path by path, so
    /// the error comparison stays sharp while the expensive exact pass runs
    /// on fewer states with more inner paths each.
    static SMALL: Lazy<SingleMarket> = Lazy::new(|| single_market(512, 37));

    struct MultiMarket {
        markets: MarketSet,
        bermudan: BermudanSwaption,
        states: Vec<BermudanMarket>,
        full: SensitivityProfile,
    }

    static MANY: Lazy<MultiMarket> = Lazy::new(|| {
        let markets = build_markets(
            &presets::market_instruments(),
            hw_params(),
            DELTA_K,
            0.0,
            &quarterly(5.0),
            1000,
            2025,
        )
        .unwrap();
        let bermudan = receiver_bermudan();
        let states = bermudan_markets(&markets, &bermudan, 15, 256, 99).unwrap();
        let full = bermudan_psi_full(&markets, &states, DELTA_K).unwrap();
        MultiMarket {
            markets,
            bermudan,
            states,
            full,
        }
    });

    #[test]
    fn market_set_is_aligned_shocked_and_extended() {
        let grid = quarterly(2.0);
        let set = build_markets(
            &presets::market_instruments(),
            hw_params(),
            DELTA_K,
            40.0,
            &grid,
            64,
            7,
        )
        .unwrap();
        assert_eq!(set.models.len(), 9);
        assert_eq!(set.num_shocks(), 8);
        for (i, (model, paths)) in set.models.iter().zip(&set.paths).enumerate() {
            assert_eq!(model.market_index(), i);
            assert_eq!(paths.market_index(), i);
            assert_eq!(paths.seed(), set.paths[0].seed());
            assert_eq!(model.curve().horizon(), 40.0);
        }
        // A shocked market reprices its own lifted quote, so its zero-coupon
        // prices differ from the base market's.
        let p0 = set.models[0].zcb_price(0.0, 10.0, set.models[0].r0()).unwrap();
        let p6 = set.models[6].zcb_price(0.0, 10.0, set.models[6].r0()).unwrap();
        assert!((p0 - p6).abs() > 1e-7, "shock 6 must move the 10y bond");

        assert!(build_markets(
            &presets::market_instruments(),
            hw_params(),
            0.0,
            0.0,
            &grid,
            64,
            7,
        )
        .is_err());
    }

    #[test]
    fn exercise_times_match_the_boundary_and_stay_on_schedule() {
        let one = &ONE;
        let grid = one.paths.grid();
        let date_idx: Vec<usize> = one
            .boundary
            .dates()
            .iter()
            .map(|&s| grid.iter().position(|&t| (t - s).abs() < 1e-12).unwrap())
            .collect();
        let mut exercised = 0usize;
        for j in 0..one.paths.num_paths() {
            let manual = (0..date_idx.len())
                .find(|&l| one.boundary.exercises(l, one.paths.short_rate(j, date_idx[l])))
                .map(|l| date_idx[l]);
            assert_eq!(one.taus[j], manual, "path {j}");
            if let Some(k) = one.taus[j] {
                assert!(date_idx.contains(&k), "exercise must land on a schedule date");
                exercised += 1;
            }
        }
        assert!(
            exercised > 0 && exercised < one.paths.num_paths(),
            "an at-the-money Bermudan should see both exercised and surviving \
             paths, got {exercised} of {}",
            one.paths.num_paths()
        );

        // Monitoring grids that skip an exercise date are rejected loudly.
        let coarse = vec![0.0, 0.5, 1.5];
        let noise = GaussianNoise::new(5, 8, 2);
        let short = one.model.simulate(&coarse, 8, &noise).unwrap();
        assert!(exercise_times(&short, &one.boundary).is_err());
    }

    #[test]
    fn survivor_nodes_follow_the_truncated_law() {
        let one = &ONE;
        let grid = one.paths.grid();
        let threshold_at = |t: f64| -> f64 {
            one.boundary
                .dates()
                .iter()
                .zip(one.boundary.thresholds())
                .filter(|&(&s, &b)| s <= t && b.is_finite())
                .next_back()
                .map(|(_, &b)| b)
                .expect("an at-the-money boundary has finite thresholds")
        };
        let min_live = |k: usize| -> f64 {
            (0..one.paths.num_paths())
                .filter(|&j| !one.taus[j].is_some_and(|tk| tk <= k))
                .map(|j| one.paths.short_rate(j, k))
                .fold(f64::INFINITY, f64::min)
        };
        assert!(one.boundary.exercise_below());

        // Degenerate at t = 0.
        let at_zero =
            survivor_nodes(&one.model, &one.paths, &one.boundary, &one.taus, 0, 15).unwrap();
        assert_eq!(at_zero.len(), 1);

        // Before the first exercise date: the plain marginal.
        let k_half = grid.iter().position(|&t| (t - 0.5).abs() < 1e-12).unwrap();
        let (mu, var) = one.model.marginal_law(0.5).unwrap();
        let plain = hermite_nodes(mu, var.sqrt(), 15).unwrap();
        let before =
            survivor_nodes(&one.model, &one.paths, &one.boundary, &one.taus, k_half, 15).unwrap();
        assert_eq!(before.nodes(), plain.nodes());

        // At an exercise date the survivor cut is sharp: receiver survivors
        // satisfy r > r*, so every node of the conditioned law lies above
        // that date's threshold.
        let k_on = grid.iter().position(|&t| (t - 2.0).abs() < 1e-12).unwrap();
        let sharp =
            survivor_nodes(&one.model, &one.paths, &one.boundary, &one.taus, k_on, 15).unwrap();
        assert_eq!(sharp.len(), 15);
        let b_on = threshold_at(2.0);
        assert!(
            min_live(k_on) > b_on,
            "every path below the threshold exercises at the decision date"
        );
        for &x in sharp.nodes() {
            assert!(x > b_on, "node {x} violates the survivor bound {b_on}");
        }

        // Between exercise dates live paths diffuse below the last threshold;
        // the law's bound widens to the most extreme live sample so the
        // fitted span still covers every state the surrogate will see.
        let k_mid = grid.iter().position(|&t| (t - 2.5).abs() < 1e-12).unwrap();
        let leaked = min_live(k_mid);
        assert!(
            leaked < threshold_at(2.5),
            "quarterly monitoring of an annual schedule leaks below the bound"
        );
        let mid =
            survivor_nodes(&one.model, &one.paths, &one.boundary, &one.taus, k_mid, 15).unwrap();
        assert_eq!(mid.len(), 15);
        for &x in mid.nodes() {
            assert!(x > leaked, "node {x} violates the widened bound {leaked}");
        }
        let lowest = mid.nodes().iter().cloned().fold(f64::INFINITY, f64::min);
        let spacing = mid.nodes()[1] - mid.nodes()[0];
        assert!(
            lowest - leaked < spacing,
            "the lowest node hugs the live population's edge"
        );
    }

    #[test]
    fn bermudan_exposure_error_stays_below_five_basis_points() {
        let fx = &SMALL;
        let inner = 49_152;
        let surr = bermudan_surrogates(
            &fx.model,
            &fx.bermudan,
            &fx.boundary,
            &fx.paths,
            &fx.taus,
            15,
            inner,
            77,
        )
        .unwrap();
        let exact =
            bermudan_exposure_exact(&fx.model, &fx.bermudan, &fx.paths, &fx.boundary, inner, 77)
                .unwrap();
        let approx = bermudan_exposure_approx(&fx.paths, &surr, &fx.taus, NOTIONAL).unwrap();

        assert_eq!(exact.method(), "bermudan-exact");
        assert_eq!(approx.method(), "bermudan-approx-15");
        let peak = exact.values().iter().cloned().fold(0.0, f64::max);
        assert!(peak > 0.0, "the option book carries exposure");
        let eps = exact
            .values()
            .iter()
            .zip(approx.values())
            .map(|(e, a)| (e - a).abs())
            .fold(0.0, f64::max)
            / NOTIONAL;
        assert!(
            eps < 5e-4,
            "exposure error {:.3e} above 5bp of notional",
            eps
        );

        // Cost accounting: the exact pass spends M valuations per date, the
        // surrogate pass two N-node fits at a generic date.
        let dates = fx.paths.num_dates() as u64;
        assert_eq!(exact.exact_valuations(), 512 * dates);
        assert_eq!(approx.exact_valuations(), 30 * dates);
    }

    #[test]
    fn bermudan_sensitivities_are_finite_and_sign_consistent() {
        let many = &MANY;
        let diffs =
            bermudan_difference_surrogates(&many.markets, &many.bermudan, &many.states, 13, 256, 99)
                .unwrap();
        let low = bermudan_psi_low(&many.markets, &many.states, &diffs, DELTA_K).unwrap();
        assert_eq!(many.full.method(), "full-15");
        assert_eq!(low.method(), "low-13-15");

        // Quotes 1, 2, 3, 4 are the 1y–5y maturities the underlying swap and
        // the exercise window both touch.
        for i in 1..=4usize {
            let col_max = many
                .full
                .values()
                .iter()
                .map(|row| row[i - 1].abs())
                .fold(0.0, f64::max);
            assert!(col_max.is_finite() && col_max > 0.0, "quote {i} moves EE");
            for (k, row) in many.full.values().iter().enumerate() {
                let f = row[i - 1];
                let l = low.values()[k][i - 1];
                assert!(f.is_finite() && l.is_finite(), "entry ({k}, {i})");
                if f.abs() > 0.05 * col_max && l.abs() > 0.05 * col_max {
                    assert!(
                        f.signum() == l.signum(),
                        "sign flip at date {k}, quote {i}: full {f:.3e}, low {l:.3e}"
                    );
                }
            }
            // The two estimators agree to leading order at the peak entry.
            let (k_peak, _) = many
                .full
                .values()
                .iter()
                .enumerate()
                .max_by(|a, b| a.1[i - 1].abs().total_cmp(&b.1[i - 1].abs()))
                .unwrap();
            let f = many.full.values()[k_peak][i - 1];
            let l = low.values()[k_peak][i - 1];
            assert!(
                (l - f).abs() <= 0.35 * f.abs(),
                "peak disagreement for quote {i}: full {f:.3e}, low {l:.3e}"
            );
        }

        // Valuation counters: 9 markets x 2N at a generic date for the full
        // estimator; base 2N plus 8 corrections of 2d for the low one.
        assert_eq!(many.full.valuations_per_date(), 9 * 30);
        assert_eq!(low.valuations_per_date(), 30 + 8 * 26);
    }

    #[test]
    fn bermudan_low_order_collapses_to_full_order_at_d_equals_n() {
        let many = &MANY;
        let diffs =
            bermudan_difference_surrogates(&many.markets, &many.bermudan, &many.states, 15, 256, 99)
                .unwrap();
        let low = bermudan_psi_low(&many.markets, &many.states, &diffs, DELTA_K).unwrap();
        let global = many
            .full
            .values()
            .iter()
            .flatten()
            .fold(0.0f64, |a, v| a.max(v.abs()));
        for (k, (frow, lrow)) in many.full.values().iter().zip(low.values()).enumerate() {
            for (i, (f, l)) in frow.iter().zip(lrow).enumerate() {
                assert!(
                    (f - l).abs() <= 1e-9 * (f.abs() + 1e-6 * global),
                    "date {k}, quote {}: full {f:.12e} vs low {l:.12e}",
                    i + 1
                );
            }
        }
    }
}
