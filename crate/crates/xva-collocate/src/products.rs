//! Valuation functions V(t, r): interest-rate swaps, portfolios of swaps,
//! and Bermudan swaptions with LSMC-estimated exercise boundaries.
//!
//! Swaps are single-curve: the floating leg collapses to a difference of
//! zero-coupon bond prices, so every product value is a linear combination
//! of `P(t, T_k; r) = A_k e^{-B_k r}` terms plus a constant. For hot loops
//! that revalue one portfolio at one date for many short rates,
//! [`CashflowSlice`] freezes those affine coefficients once.
//!
//! A Bermudan swaption is priced in two stages, mirroring how such products
//! are handled in exposure engines: a one-off Longstaff–Schwartz regression
//! pass over training paths turns the exercise rule into per-date short-rate
//! thresholds ([`lsmc_boundary`]), and the "exact" value at an arbitrary
//! state (t, r) is then a nested Monte Carlo that simulates forward and
//! exercises at the first threshold crossing ([`bermudan_value_exact`]).

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::curve::fixed_schedule;
use crate::error::{Error, Result};
use crate::hullwhite::{HullWhiteModel, PathSet, StepCoef};

/// Tolerance for comparing contract dates with valuation/grid times.
pub(crate) const DATE_EPS: f64 = 1e-9;

/// Minimum in-the-money paths per regression coefficient before a date's
/// LSMC fit is trusted.
const MIN_ITM_PER_COEF: usize = 10;

/// Default polynomial degree of the LSMC regression basis {1, r, r²}.
pub const DEFAULT_LSMC_DEGREE: usize = 2;

// ---------------------------------------------------------------------------
// Contracts
// ---------------------------------------------------------------------------

/// A fixed-for-float interest-rate swap.
///
/// `sign = +1` is a payer swap (receive float, pay fixed), `sign = -1` a
/// receiver. The fixed leg pays `K̄ · Δ · N̄` on `m` equally spaced dates
/// from `start` to `maturity`, with `m = max(1, round((maturity - start) ·
/// frequency))` and accrual `Δ = (maturity - start)/m`.
#[derive(Clone, Debug, PartialEq)]
pub struct Swap {
    sign: f64,
    notional: f64,
    fixed_rate: f64,
    start: f64,
    maturity: f64,
    frequency: f64,
}

impl Swap {
    pub fn new(
        sign: i8,
        notional: f64,
        fixed_rate: f64,
        start: f64,
        maturity: f64,
        frequency: f64,
    ) -> Result<Swap> {
        if sign != 1 && sign != -1 {
            return Err(Error::Validation(format!(
                "swap sign must be +1 (payer) or -1 (receiver), got {sign}"
            )));
        }
        if !(notional > 0.0) || !notional.is_finite() {
            return Err(Error::Validation(format!(
                "swap notional must be positive and finite, got {notional}"
            )));
        }
        if !fixed_rate.is_finite() {
            return Err(Error::Validation("swap fixed rate must be finite".into()));
        }
        if !(start >= 0.0) || !(start < maturity) {
            return Err(Error::Validation(format!(
                "swap requires 0 <= start < maturity, got start = {start}, maturity = {maturity}"
            )));
        }
        if !(frequency > 0.0) {
            return Err(Error::Validation(format!(
                "swap payment frequency must be positive, got {frequency}"
            )));
        }
        Ok(Swap {
            sign: f64::from(sign),
            notional,
            fixed_rate,
            start,
            maturity,
            frequency,
        })
    }

    pub fn sign(&self) -> f64 {
        self.sign
    }

    pub fn notional(&self) -> f64 {
        self.notional
    }

    pub fn fixed_rate(&self) -> f64 {
        self.fixed_rate
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn maturity(&self) -> f64 {
        self.maturity
    }

    pub fn frequency(&self) -> f64 {
        self.frequency
    }

    /// Fixed-leg payment dates and the per-period accrual fraction.
    pub fn fixed_dates(&self) -> (Vec<f64>, f64) {
        fixed_schedule(self.start, self.maturity, self.frequency)
    }
}

/// A Bermudan swaption: the right to enter `underlying` at any one of the
/// exercise dates `S_1 < ... < S_L`. Settlement is physical — after
/// exercising at `S_k` the holder's position *is* the underlying swap (its
/// payments after `S_k`).
#[derive(Clone, Debug, PartialEq)]
pub struct BermudanSwaption {
    exercise_dates: Vec<f64>,
    underlying: Swap,
    physical_settlement: bool,
}

impl BermudanSwaption {
    pub fn new(exercise_dates: Vec<f64>, underlying: Swap) -> Result<BermudanSwaption> {
        if exercise_dates.is_empty() {
            return Err(Error::Validation(
                "Bermudan swaption needs at least one exercise date".into(),
            ));
        }
        if exercise_dates.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::Validation(
                "Bermudan exercise dates must be positive".into(),
            ));
        }
        if exercise_dates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Validation(
                "Bermudan exercise dates must be strictly increasing".into(),
            ));
        }
        if *exercise_dates.last().unwrap() >= underlying.maturity() {
            return Err(Error::Validation(
                "Bermudan exercise dates must precede the underlying swap's maturity".into(),
            ));
        }
        Ok(BermudanSwaption {
            exercise_dates,
            underlying,
            physical_settlement: true,
        })
    }

    pub fn exercise_dates(&self) -> &[f64] {
        &self.exercise_dates
    }

    pub fn underlying(&self) -> &Swap {
        &self.underlying
    }

    pub fn physical_settlement(&self) -> bool {
        self.physical_settlement
    }

    /// Value of exercising at date `s`: the underlying swap held from `s`
    /// on, i.e. its remaining payments valued at (s, r).
    pub fn exercise_value(&self, model: &HullWhiteModel, s: f64, r: f64) -> Result<f64> {
        swap_value(model, &self.underlying, s, r)
    }
}

/// A netting set: a sequence of swaps and at most one Bermudan swaption.
#[derive(Clone, Debug, PartialEq)]
pub struct Portfolio {
    swaps: Vec<Swap>,
    bermudan: Option<BermudanSwaption>,
}

impl Portfolio {
    pub fn new(swaps: Vec<Swap>) -> Result<Portfolio> {
        Portfolio::with_bermudan(swaps, None)
    }

    pub fn with_bermudan(
        swaps: Vec<Swap>,
        bermudan: Option<BermudanSwaption>,
    ) -> Result<Portfolio> {
        if swaps.is_empty() && bermudan.is_none() {
            return Err(Error::Validation("portfolio must be non-empty".into()));
        }
        Ok(Portfolio { swaps, bermudan })
    }

    pub fn swaps(&self) -> &[Swap] {
        &self.swaps
    }

    pub fn bermudan(&self) -> Option<&BermudanSwaption> {
        self.bermudan.as_ref()
    }

    /// Latest payment date over all members.
    pub fn last_maturity(&self) -> f64 {
        let swaps = self
            .swaps
            .iter()
            .map(|s| s.maturity)
            .fold(f64::NEG_INFINITY, f64::max);
        match &self.bermudan {
            Some(b) => swaps.max(b.underlying().maturity()),
            None => swaps,
        }
    }
}

// ---------------------------------------------------------------------------
// Swap and portfolio valuation
// ---------------------------------------------------------------------------

/// Value of one swap at short-rate state (t, r):
///
/// ```text
/// V(t, r) = sign · N̄ · [ P(t, max(t, start)) − P(t, T̄_m) − K̄ Δ Σ_{T_k > t} P(t, T_k) ]
/// ```
///
/// The first term is the floating leg's next reset: `P(t, start)` while the
/// swap is forward-starting and 1 once it is running. An expired swap
/// (t ≥ maturity) is worth 0 by contract.
pub fn swap_value(model: &HullWhiteModel, swap: &Swap, t: f64, r: f64) -> Result<f64> {
    if !r.is_finite() {
        return Err(Error::Validation(format!(
            "swap_value requires a finite short rate, got {r}"
        )));
    }
    if t >= swap.maturity - DATE_EPS {
        return Ok(0.0);
    }
    let (dates, accrual) = swap.fixed_dates();
    let mut fixed_leg = 0.0;
    for &tk in dates.iter().filter(|&&tk| tk > t + DATE_EPS) {
        fixed_leg += model.zcb_price(t, tk, r)?;
    }
    fixed_leg *= swap.fixed_rate * accrual;
    let float_first = if t < swap.start - DATE_EPS {
        model.zcb_price(t, swap.start, r)?
    } else {
        1.0
    };
    let p_end = model.zcb_price(t, swap.maturity, r)?;
    Ok(swap.sign * swap.notional * (float_first - p_end - fixed_leg))
}

/// Exercise state of a portfolio's Bermudan member at the valuation date.
pub enum BermudanState<'a> {
    /// Exercised at some S_k ≤ t: the member contributes the underlying
    /// swap's value.
    Exercised,
    /// Still alive: the member contributes U(t, r), supplied by the caller
    /// (nested MC, or a fitted surrogate standing in for it).
    Unexercised(&'a dyn Fn(f64, f64) -> Result<f64>),
}

/// Portfolio value at (t, r): the sum of member values. A Bermudan member
/// contributes per the supplied exercise state; passing a state is
/// mandatory exactly when a Bermudan is present.
pub fn portfolio_value(
    model: &HullWhiteModel,
    portfolio: &Portfolio,
    t: f64,
    r: f64,
    state: Option<BermudanState<'_>>,
) -> Result<f64> {
    let mut total = 0.0;
    for swap in &portfolio.swaps {
        total += swap_value(model, swap, t, r)?;
    }
    match (portfolio.bermudan(), state) {
        (None, None) => {}
        (None, Some(_)) => {
            return Err(Error::Validation(
                "exercise state supplied for a portfolio without a Bermudan member".into(),
            ));
        }
        (Some(_), None) => {
            return Err(Error::Validation(
                "portfolio holds a Bermudan swaption; an exercise state is required".into(),
            ));
        }
        (Some(berm), Some(BermudanState::Exercised)) => {
            total += swap_value(model, berm.underlying(), t, r)?;
        }
        (Some(_), Some(BermudanState::Unexercised(u))) => {
            total += u(t, r)?;
        }
    }
    Ok(total)
}

/// The affine coefficients of a swap portfolio's value at one fixed date:
/// `V(t, r) = c + Σ_d a_d e^{-b_d r}`, with one term per distinct remaining
/// cash-flow date. Freezing these once turns each revaluation into a handful
/// of exponentials — the workhorse for exposure profiles that revalue the
/// same book at thousands of simulated states per date.
#[derive(Clone, Debug)]
pub struct CashflowSlice {
    t: f64,
    constant: f64,
    terms: Vec<(f64, f64)>,
}

impl CashflowSlice {
    pub fn t(&self) -> f64 {
        self.t
    }

    /// V(t, r) for the frozen date.
    pub fn value(&self, r: f64) -> f64 {
        let mut v = self.constant;
        for &(a, b) in &self.terms {
            v += a * (-b * r).exp();
        }
        v
    }
}

/// Build the [`CashflowSlice`] of a set of swaps at date `t`: aggregate all
/// remaining cash flows by payment date and attach the zero-coupon bond
/// coefficients `(A, B)` of each date.
pub fn cashflow_slice(model: &HullWhiteModel, swaps: &[Swap], t: f64) -> Result<CashflowSlice> {
    let mut flows: Vec<(f64, f64)> = Vec::new();
    let mut constant = 0.0;
    for swap in swaps {
        if t >= swap.maturity - DATE_EPS {
            continue;
        }
        let scale = swap.sign * swap.notional;
        if t < swap.start - DATE_EPS {
            flows.push((swap.start, scale));
        } else {
            constant += scale; // P(t, t) = 1
        }
        flows.push((swap.maturity, -scale));
        let (dates, accrual) = swap.fixed_dates();
        let coupon = -scale * swap.fixed_rate * accrual;
        for &tk in dates.iter().filter(|&&tk| tk > t + DATE_EPS) {
            flows.push((tk, coupon));
        }
    }
    flows.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut terms: Vec<(f64, f64)> = Vec::with_capacity(flows.len());
    let mut it = flows.into_iter().peekable();
    while let Some((date, mut amount)) = it.next() {
        while let Some(&(d, a)) = it.peek() {
            if (d - date).abs() <= DATE_EPS {
                amount += a;
                it.next();
            } else {
                break;
            }
        }
        let (a_coef, b_coef) = model.zcb_coefficients(t, date)?;
        terms.push((amount * a_coef, b_coef));
    }
    Ok(CashflowSlice { t, constant, terms })
}

// ---------------------------------------------------------------------------
// Exercise boundary (LSMC)
// ---------------------------------------------------------------------------

/// Per-exercise-date short-rate thresholds defining a stopping rule.
///
/// In the default (receiver underlying) orientation the option is exercised
/// at the first date with `r(S_k) < r*(S_k)` — low rates make a receiver
/// swap valuable. For a payer underlying the comparison flips. Thresholds
/// of ∓∞ encode dates where exercise is never/always optimal.
#[derive(Clone, Debug)]
pub struct ExerciseBoundary {
    dates: Vec<f64>,
    thresholds: Vec<f64>,
    exercise_below: bool,
    warnings: Vec<String>,
}

impl ExerciseBoundary {
    /// Assemble a boundary directly (mostly for tests and oracles).
    pub fn from_thresholds(
        dates: Vec<f64>,
        thresholds: Vec<f64>,
        exercise_below: bool,
    ) -> Result<ExerciseBoundary> {
        if dates.len() != thresholds.len() || dates.is_empty() {
            return Err(Error::Validation(
                "boundary needs one threshold per exercise date".into(),
            ));
        }
        if dates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Validation(
                "boundary dates must be strictly increasing".into(),
            ));
        }
        Ok(ExerciseBoundary {
            dates,
            thresholds,
            exercise_below,
            warnings: Vec::new(),
        })
    }

    pub fn dates(&self) -> &[f64] {
        &self.dates
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    /// True if the exercise region is `r < r*` (receiver underlying).
    pub fn exercise_below(&self) -> bool {
        self.exercise_below
    }

    /// Diagnostics from the boundary estimation (e.g. dates with too few
    /// in-the-money paths to regress on).
    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Does the rule exercise at date index `k` with short rate `r`?
    pub fn exercises(&self, k: usize, r: f64) -> bool {
        if self.exercise_below {
            r < self.thresholds[k]
        } else {
            r > self.thresholds[k]
        }
    }

    /// First exercise-date index triggered by the short rates `rs` observed
    /// at the boundary dates (`rs[k] = r(S_k)`), if any. Exercise is
    /// absorbing: everything after the first trigger is irrelevant.
    pub fn first_exercise(&self, rs: &[f64]) -> Option<usize> {
        assert_eq!(rs.len(), self.dates.len(), "one short rate per date");
        (0..rs.len()).find(|&k| self.exercises(k, rs[k]))
    }
}

/// Least-squares fit of `y ≈ Σ_p beta_p z^p` on standardized `z`; returns a
/// callable continuation-value estimate. Degenerate inputs fall back to the
/// sample mean.
struct PolyRegression {
    mean: f64,
    scale: f64,
    beta: Vec<f64>,
}

impl PolyRegression {
    fn fit(xs: &[f64], ys: &[f64], degree: usize) -> PolyRegression {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        let scale = var.sqrt();
        if scale < 1e-14 {
            return PolyRegression {
                mean,
                scale: 1.0,
                beta: vec![ys.iter().sum::<f64>() / n],
            };
        }
        let k = degree + 1;
        // Normal equations on the standardized design matrix.
        let mut ata = vec![vec![0.0; k]; k];
        let mut aty = vec![0.0; k];
        for (&x, &y) in xs.iter().zip(ys) {
            let z = (x - mean) / scale;
            let mut pow = vec![1.0; k];
            for p in 1..k {
                pow[p] = pow[p - 1] * z;
            }
            for i in 0..k {
                aty[i] += pow[i] * y;
                for j in 0..k {
                    ata[i][j] += pow[i] * pow[j];
                }
            }
        }
        let beta = solve_dense(&mut ata, &mut aty)
            .unwrap_or_else(|| vec![ys.iter().sum::<f64>() / n]);
        PolyRegression { mean, scale, beta }
    }

    fn predict(&self, x: f64) -> f64 {
        let z = (x - self.mean) / self.scale;
        let mut v = 0.0;
        for &b in self.beta.iter().rev() {
            v = v * z + b;
        }
        v
    }
}

/// Gaussian elimination with partial pivoting for the small normal-equation
/// systems; `None` if numerically singular.
fn solve_dense(a: &mut [Vec<f64>], b: &mut [f64]) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut s = b[row];
        for k in row + 1..n {
            s -= a[row][k] * x[k];
        }
        x[row] = s / a[row][row];
    }
    Some(x)
}

/// Root of `f` on the exercise/hold frontier over `[lo, hi]`.
///
/// `f` is (exercise − continuation); positive means exercising is better.
/// Scans for sign changes, refines the change adjacent to the exercise
/// region by bisection, and falls back to ∓∞ when `f` has one sign on the
/// whole range.
fn find_threshold(f: impl Fn(f64) -> f64, lo: f64, hi: f64, exercise_below: bool) -> f64 {
    const SCAN: usize = 256;
    let grid: Vec<f64> = (0..=SCAN)
        .map(|i| lo + (hi - lo) * i as f64 / SCAN as f64)
        .collect();
    let vals: Vec<f64> = grid.iter().map(|&x| f(x)).collect();
    // Brackets where f crosses from the exercise sign to the hold sign,
    // ordered so the first entry borders the deep-exercise end.
    let mut bracket = None;
    let idx: Vec<usize> = if exercise_below {
        (0..SCAN).collect()
    } else {
        (0..SCAN).rev().collect()
    };
    for i in idx {
        let (fa, fb) = if exercise_below {
            (vals[i], vals[i + 1])
        } else {
            (vals[i + 1], vals[i])
        };
        if fa > 0.0 && fb <= 0.0 {
            bracket = Some((grid[i], grid[i + 1]));
        }
    }
    let (mut a, mut b) = match bracket {
        Some(x) => x,
        None => {
            let any_pos = vals.iter().any(|&v| v > 0.0);
            let all_pos = vals.iter().all(|&v| v > 0.0);
            return match (exercise_below, all_pos, any_pos) {
                (true, true, _) => f64::INFINITY,      // always exercise
                (true, false, _) => f64::NEG_INFINITY, // never (or unreachable pocket)
                (false, true, _) => f64::NEG_INFINITY, // always exercise
                (false, false, _) => f64::INFINITY,    // never
            };
        }
    };
    for _ in 0..100 {
        let mid = 0.5 * (a + b);
        let fm = f(mid);
        let exercise_side = if exercise_below { fm > 0.0 } else { fm <= 0.0 };
        if exercise_side == exercise_below {
            // mid still on the low side of the crossing
            a = mid;
        } else {
            b = mid;
        }
    }
    0.5 * (a + b)
}

/// Estimate the exercise boundary of a Bermudan swaption by
/// Longstaff–Schwartz regression over `training` paths, with the default
/// quadratic basis. See [`lsmc_boundary_with_degree`].
pub fn lsmc_boundary(
    model: &HullWhiteModel,
    bermudan: &BermudanSwaption,
    training: &PathSet,
) -> Result<ExerciseBoundary> {
    lsmc_boundary_with_degree(model, bermudan, training, DEFAULT_LSMC_DEGREE)
}

/// Backward-inducted exercise boundary.
///
/// At each exercise date, discounted future cash flows under the
/// already-determined stopping rule are regressed on monomials
/// `{1, r, ..., r^degree}` over the in-the-money paths; the threshold
/// `r*(S_k)` is the root of (exercise value − fitted continuation) located
/// by scan + bisection over the sampled short-rate range. Dates with fewer
/// than `10 · (degree+1)` in-the-money paths get a never-exercise threshold
/// and a warning.
pub fn lsmc_boundary_with_degree(
    model: &HullWhiteModel,
    bermudan: &BermudanSwaption,
    training: &PathSet,
    degree: usize,
) -> Result<ExerciseBoundary> {
    let dates = bermudan.exercise_dates();
    let grid = training.grid();
    if *dates.last().unwrap() > grid[grid.len() - 1] + DATE_EPS {
        return Err(Error::Validation(format!(
            "training paths end at t = {} but the last exercise date is {}",
            grid[grid.len() - 1],
            dates.last().unwrap()
        )));
    }
    let grid_idx: Vec<usize> = dates
        .iter()
        .map(|&s| {
            grid.iter()
                .position(|&g| (g - s).abs() <= DATE_EPS)
                .ok_or_else(|| {
                    Error::Validation(format!(
                        "exercise date {s} is not a date of the training grid"
                    ))
                })
        })
        .collect::<Result<_>>()?;

    let exercise_below = bermudan.underlying().sign() < 0.0;
    let l = dates.len();
    let m = training.num_paths();
    let never = if exercise_below {
        f64::NEG_INFINITY
    } else {
        f64::INFINITY
    };

    // Future cash flow per path under the stopping rule built so far:
    // an amount and the ∫r at its payment date (∞ ⇒ no payoff ⇒ DF 0).
    let mut cf_value = vec![0.0_f64; m];
    let mut cf_int = vec![f64::INFINITY; m];
    let mut thresholds = vec![never; l];
    let mut warnings = Vec::new();

    for k in (0..l).rev() {
        let s = dates[k];
        let gi = grid_idx[k];
        let slice = cashflow_slice(model, std::slice::from_ref(bermudan.underlying()), s)?;
        let rs: Vec<f64> = (0..m).map(|j| training.short_rate(j, gi)).collect();
        let exercise: Vec<f64> = rs.iter().map(|&r| slice.value(r)).collect();

        let threshold = if k == l - 1 {
            // Expiry: continuation is exactly zero; exercise iff ITM.
            let (lo, hi) = sample_range(&rs);
            find_threshold(|r| slice.value(r), lo, hi, exercise_below)
        } else {
            let itm: Vec<usize> = (0..m).filter(|&j| exercise[j] > 0.0).collect();
            if itm.len() < MIN_ITM_PER_COEF * (degree + 1) {
                warnings.push(format!(
                    "S_{} = {s}: only {} in-the-money training paths (need {}); \
                     treating the date as never-exercised",
                    k + 1,
                    itm.len(),
                    MIN_ITM_PER_COEF * (degree + 1)
                ));
                thresholds[k] = never;
                continue;
            }
            let xs: Vec<f64> = itm.iter().map(|&j| rs[j]).collect();
            let ys: Vec<f64> = itm
                .iter()
                .map(|&j| cf_value[j] * (-(cf_int[j] - training.integral(j, gi))).exp())
                .collect();
            let reg = PolyRegression::fit(&xs, &ys, degree);
            let (lo, hi) = sample_range(&rs);
            find_threshold(|r| slice.value(r) - reg.predict(r), lo, hi, exercise_below)
        };
        thresholds[k] = threshold;

        for j in 0..m {
            let hit = if exercise_below {
                rs[j] < threshold
            } else {
                rs[j] > threshold
            };
            if hit {
                cf_value[j] = exercise[j];
                cf_int[j] = training.integral(j, gi);
            }
        }
    }

    Ok(ExerciseBoundary {
        dates: dates.to_vec(),
        thresholds,
        exercise_below,
        warnings,
    })
}

fn sample_range(xs: &[f64]) -> (f64, f64) {
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

// ---------------------------------------------------------------------------
// Nested Monte Carlo valuation
// ---------------------------------------------------------------------------

/// "Exact" value U(t, r) of an unexercised Bermudan swaption by nested
/// Monte Carlo: simulate `inner_paths` short-rate paths from (t, r) across
/// the remaining exercise dates (the exact Gaussian transition needs no
/// intermediate steps), stop at the first boundary crossing, and collect the
/// pathwise-discounted exercise value. Returns 0 when no exercise dates
/// remain. This is the expensive valuator that surrogate fitting replaces.
///
/// The estimator keeps its sub-simulation form but drives variance down two
/// ways: inner paths come in antithetic pairs, and a mean-zero martingale
/// control variate — built from one-exponential compressions of the per-date
/// cashflow slices, whose one-step discounted conditional expectations are
/// closed-form under the Gaussian transition — is removed with a regression
/// coefficient, so the control can only help, never bias.
pub fn bermudan_value_exact(
    model: &HullWhiteModel,
    bermudan: &BermudanSwaption,
    t: f64,
    r: f64,
    boundary: &ExerciseBoundary,
    inner_paths: usize,
    seed: u64,
) -> Result<f64> {
    Ok(bermudan_mc_stats(model, bermudan, t, r, boundary, inner_paths, seed)?.0)
}

/// A fitted one-exponential compression `ĝ(r) = c + a·e^{-b·r}` of a
/// cashflow slice, together with the coefficients of its discounted one-step
/// conditional expectation `E[e^{-(y+∫ψ)}·ĝ(u'+ψ')|u] = q0·e^{-s0·u} +
/// q1·e^{-s1·u}` under the exact `(u, ∫u)` Gaussian transition.
struct StepControl {
    c: f64,
    a: f64,
    b: f64,
    q0: f64,
    s0: f64,
    q1: f64,
    s1: f64,
}

impl StepControl {
    /// Compress `slice` around `center ± width` and precompute the
    /// conditional-expectation coefficients for the step into it.
    fn new(slice: &CashflowSlice, center: f64, width: f64, coef: &StepCoef, int_psi: f64, psi_next: f64) -> StepControl {
        let h = width.max(1e-8);
        let (va, vb, vc) = (
            slice.value(center - h),
            slice.value(center),
            slice.value(center + h),
        );
        let d1 = va - vb;
        let d2 = vb - vc;
        let mut c = vb;
        let mut a = 0.0;
        let mut b = 0.0;
        if d1 * d2 > 0.0 {
            let grow = (d1 / d2).ln() / h;
            if grow.is_finite() && (grow * h).abs() < 40.0 {
                let e_mid = (-grow * center).exp();
                let denom = e_mid * (-(-grow * h).exp_m1());
                if denom.abs() > 0.0 && denom.is_finite() {
                    b = grow;
                    a = d2 / denom;
                    c = vb - a * e_mid;
                }
            }
        }
        // E[e^{-y}|u] and E[e^{-y-b·u'}|u] are lognormal means in the jointly
        // normal (y, u') of the step; the `u` dependence stays in the
        // exponent slopes s0, s1.
        let v_y = coef.c_over_sd * coef.c_over_sd + coef.sd_y_cond * coef.sd_y_cond;
        let v_u = coef.sd_u * coef.sd_u;
        let c_yu = coef.c_over_sd * coef.sd_u;
        let df = (-int_psi).exp();
        let q0 = df * c * (0.5 * v_y).exp();
        let s0 = coef.mean_y;
        let q1 = df * a * (-b * psi_next + 0.5 * (v_y + b * b * v_u + 2.0 * b * c_yu)).exp();
        let s1 = coef.mean_y + b * coef.decay;
        StepControl { c, a, b, q0, s0, q1, s1 }
    }

    /// The compressed slice value at short rate `r`.
    fn compressed(&self, r: f64) -> f64 {
        self.c + self.a * (-self.b * r).exp()
    }

    /// The discounted one-step conditional expectation given OU state `u`.
    fn conditional_mean(&self, u: f64) -> f64 {
        self.q0 * (-self.s0 * u).exp() + self.q1 * (-self.s1 * u).exp()
    }
}

/// [`bermudan_value_exact`] with its Monte Carlo standard error.
pub fn bermudan_mc_stats(
    model: &HullWhiteModel,
    bermudan: &BermudanSwaption,
    t: f64,
    r: f64,
    boundary: &ExerciseBoundary,
    inner_paths: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if inner_paths == 0 {
        return Err(Error::Validation(
            "nested valuation needs at least one inner path".into(),
        ));
    }
    if !r.is_finite() {
        return Err(Error::Validation(format!(
            "bermudan_value_exact requires a finite short rate, got {r}"
        )));
    }
    let dates = bermudan.exercise_dates();
    let offset = dates.iter().take_while(|&&s| s <= t + DATE_EPS).count();
    if offset == dates.len() {
        return Ok((0.0, 0.0)); // optionality expired worthless
    }
    let rem = &dates[offset..];
    let params = model.params();

    // Per-step transition coefficients and deterministic ψ data along
    // [t, S_{offset+1}, ..., S_L].
    let mut sub_grid = Vec::with_capacity(rem.len() + 1);
    sub_grid.push(t);
    sub_grid.extend_from_slice(rem);
    let coefs: Vec<StepCoef> = sub_grid
        .windows(2)
        .map(|w| StepCoef::new(params.lambda, params.eta, w[1] - w[0]))
        .collect();
    let int_psi_steps: Vec<f64> = sub_grid
        .windows(2)
        .map(|w| model.int_psi_step(w[0], w[1]))
        .collect::<Result<_>>()?;
    let psi_at: Vec<f64> = rem.iter().map(|&s| model.psi(s)).collect::<Result<_>>()?;
    let slices: Vec<CashflowSlice> = rem
        .iter()
        .map(|&s| cashflow_slice(model, std::slice::from_ref(bermudan.underlying()), s))
        .collect::<Result<_>>()?;

    let u0 = r - model.psi(t)?;

    // Controls are compressed around the predicted short-rate range at each
    // remaining date, a pure function of (t, r) — replays are deterministic.
    let mut controls = Vec::with_capacity(rem.len());
    let mut u_pred = u0;
    let mut var_pred = 0.0;
    for (k, c) in coefs.iter().enumerate() {
        var_pred = c.decay * c.decay * var_pred + c.sd_u * c.sd_u;
        u_pred *= c.decay;
        let center = u_pred + psi_at[k];
        controls.push(StepControl::new(
            &slices[k],
            center,
            2.0 * var_pred.sqrt(),
            c,
            int_psi_steps[k],
            psi_at[k],
        ));
    }

    let mut payoffs = Vec::with_capacity(inner_paths);
    let mut ctrls = Vec::with_capacity(inner_paths);
    for j in 0..inner_paths {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream((j / 2) as u64);
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        let mut u = u0;
        let mut df = 1.0;
        let mut payoff = 0.0;
        let mut x = 0.0;
        for (k, c) in coefs.iter().enumerate() {
            let z1: f64 = StandardNormal.sample(&mut rng);
            let z2: f64 = StandardNormal.sample(&mut rng);
            let (z1, z2) = (sign * z1, sign * z2);
            let y = c.mean_y * u + c.c_over_sd * z1 + c.sd_y_cond * z2;
            let cond = controls[k].conditional_mean(u);
            u = c.decay * u + c.sd_u * z1;
            let step_df = (-(y + int_psi_steps[k])).exp();
            let rk = u + psi_at[k];
            x += df * (step_df * controls[k].compressed(rk) - cond);
            df *= step_df;
            if boundary.exercises(offset + k, rk) {
                payoff = df * slices[k].value(rk);
                break;
            }
        }
        payoffs.push(payoff);
        ctrls.push(x);
    }

    let n = inner_paths as f64;
    let p_bar = payoffs.iter().sum::<f64>() / n;
    let x_bar = ctrls.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_x = 0.0;
    for (&p, &x) in payoffs.iter().zip(&ctrls) {
        cov += (p - p_bar) * (x - x_bar);
        var_x += (x - x_bar) * (x - x_bar);
    }
    let theta = if inner_paths >= 4 && var_x > 1e-300 {
        cov / var_x
    } else {
        0.0
    };
    // The control is a martingale-increment sum, E[x] = 0 by construction.
    let mean = p_bar - theta * x_bar;

    // Standard error over antithetic pair means of the residuals.
    let pair_means: Vec<f64> = payoffs
        .chunks(2)
        .zip(ctrls.chunks(2))
        .map(|(ps, xs)| {
            let res: f64 = ps.iter().zip(xs).map(|(&p, &x)| p - theta * x).sum();
            res / ps.len() as f64
        })
        .collect();
    let np = pair_means.len() as f64;
    let pm_bar = pair_means.iter().sum::<f64>() / np;
    let pm_var = pair_means.iter().map(|&v| (v - pm_bar) * (v - pm_bar)).sum::<f64>() / np;
    Ok((mean, (pm_var / np).sqrt()))
}
