//! Zero-coupon bond curve construction from par-swap market quotes.
//!
//! The curve is a set of discount-factor knots `P(t0, T_i)`, one per market
//! instrument, interpolated log-linearly in the discount factors (i.e.
//! piecewise-constant instantaneous forwards). Bootstrapping proceeds
//! instrument by instrument in maturity order, solving the 1-D par-rate
//! equation per knot with Newton's method — for par swaps whose cash flows
//! do not extend past their maturity this is exactly the triangular special
//! case of the multi-dimensional Newton–Raphson calibration.
//!
//! Shocked markets are obtained by re-bootstrapping with a single quote
//! shifted by `ΔK_i`; everything downstream treats the shocked curve like
//! any other curve.

use crate::error::{Error, Result};

/// Convergence tolerance on the quote residual in the bootstrap.
const BOOTSTRAP_TOL: f64 = 1e-12;

/// Iteration cap per bootstrap knot.
const BOOTSTRAP_MAX_ITER: usize = 100;

/// A par-swap market instrument: quote `K_i` for maturity `T_i`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MarketInstrument {
    /// 1-based position within the instrument set.
    pub index: usize,
    /// Maturity `T_i` in year fractions.
    pub maturity: f64,
    /// Par swap rate quote `K_i` (decimal).
    pub quote: f64,
    /// Fixed-leg payments per year.
    pub frequency: f64,
}

impl MarketInstrument {
    pub fn new(index: usize, maturity: f64, quote: f64, frequency: f64) -> Self {
        MarketInstrument {
            index,
            maturity,
            quote,
            frequency,
        }
    }
}

/// A shift of one market quote: instrument `index` moves by `shift`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShockSpec {
    /// 1-based instrument index.
    pub index: usize,
    /// Quote shift `ΔK_i` (decimal); conventionally one basis point.
    pub shift: f64,
}

impl ShockSpec {
    /// The conventional +1bp shock.
    pub fn one_bp(index: usize) -> Self {
        ShockSpec {
            index,
            shift: 1e-4,
        }
    }
}

/// A bootstrapped discount curve with log-linear interpolation between
/// discount-factor knots.
///
/// Queries are limited to `[0, horizon]`; the horizon defaults to the last
/// knot (no extrapolation). Portfolios with cash flows beyond the last
/// market maturity require an explicit [`YieldCurve::with_horizon`], which
/// extends the final knot interval's constant forward rate.
#[derive(Clone, Debug)]
pub struct YieldCurve {
    knot_times: Vec<f64>,
    knot_dfs: Vec<f64>,
    /// Natural logs of the knot discount factors (interpolation workspace).
    knot_log_dfs: Vec<f64>,
    interpolation: &'static str,
    instruments: Vec<MarketInstrument>,
    shock: Option<ShockSpec>,
    horizon: f64,
}

/// Fixed-leg payment schedule: `m = max(1, round((maturity-start)*freq))`
/// equally spaced dates from `start` (exclusive) to `maturity` (inclusive),
/// each with accrual `(maturity-start)/m`.
pub(crate) fn fixed_schedule(start: f64, maturity: f64, frequency: f64) -> (Vec<f64>, f64) {
    let m = ((maturity - start) * frequency).round().max(1.0) as usize;
    let accrual = (maturity - start) / m as f64;
    let dates = (1..=m).map(|k| start + k as f64 * accrual).collect();
    (dates, accrual)
}

impl YieldCurve {
    /// Bootstrap a curve that reprices every instrument's par rate.
    ///
    /// Instruments must be in strictly increasing maturity order with
    /// 1-based indices matching their positions. Each knot `P(0, T_i)` is
    /// solved by Newton iteration on the par-rate residual (tolerance 1e-12
    /// on the quote, at most 100 iterations); payment dates between knots
    /// are interpolated log-linearly, consistent with the final curve.
    pub fn bootstrap(instruments: &[MarketInstrument]) -> Result<YieldCurve> {
        Self::bootstrap_impl(instruments.to_vec(), None)
    }

    /// Bootstrap with instrument `shock.index`'s quote shifted by
    /// `shock.shift`; identical to [`YieldCurve::bootstrap`] on the shifted
    /// quote set, all other quotes untouched.
    pub fn shocked(instruments: &[MarketInstrument], shock: ShockSpec) -> Result<YieldCurve> {
        if shock.index == 0 || shock.index > instruments.len() {
            return Err(Error::Validation(format!(
                "shock index {} outside the instrument set 1..={}",
                shock.index,
                instruments.len()
            )));
        }
        let mut shifted = instruments.to_vec();
        shifted[shock.index - 1].quote += shock.shift;
        Self::bootstrap_impl(shifted, Some(shock))
    }

    fn bootstrap_impl(
        instruments: Vec<MarketInstrument>,
        shock: Option<ShockSpec>,
    ) -> Result<YieldCurve> {
        if instruments.is_empty() {
            return Err(Error::Validation(
                "cannot bootstrap from an empty instrument set".into(),
            ));
        }
        for (pos, inst) in instruments.iter().enumerate() {
            if inst.index != pos + 1 {
                return Err(Error::Validation(format!(
                    "instrument at position {} carries index {}, expected {}",
                    pos,
                    inst.index,
                    pos + 1
                )));
            }
            if !(inst.maturity > 0.0) {
                return Err(Error::Validation(format!(
                    "instrument {} has non-positive maturity {}",
                    inst.index, inst.maturity
                )));
            }
            if !(inst.frequency > 0.0) {
                return Err(Error::Validation(format!(
                    "instrument {} has non-positive frequency {}",
                    inst.index, inst.frequency
                )));
            }
            if pos > 0 && instruments[pos - 1].maturity >= inst.maturity {
                return Err(Error::Validation(format!(
                    "instrument maturities must be strictly increasing; {} -> {}",
                    instruments[pos - 1].maturity, inst.maturity
                )));
            }
        }

        let horizon = instruments.last().unwrap().maturity;
        let mut curve = YieldCurve {
            knot_times: Vec::with_capacity(instruments.len()),
            knot_dfs: Vec::with_capacity(instruments.len()),
            knot_log_dfs: Vec::with_capacity(instruments.len()),
            interpolation: "log-linear-df",
            instruments,
            shock,
            horizon,
        };

        for i in 0..curve.instruments.len() {
            let inst = curve.instruments[i];
            curve.knot_times.push(inst.maturity);
            // Initial guess: zero-coupon discounting at the quote itself.
            let guess = (-inst.quote * inst.maturity).exp();
            curve.knot_dfs.push(guess);
            curve.knot_log_dfs.push(guess.ln());

            let mut residual = f64::INFINITY;
            let mut converged = false;
            for _ in 0..BOOTSTRAP_MAX_ITER {
                residual = curve.par_swap_rate(0.0, inst.maturity, inst.frequency)? - inst.quote;
                if residual.abs() <= BOOTSTRAP_TOL {
                    converged = true;
                    break;
                }
                // Newton step with a one-sided finite-difference derivative
                // in the knot discount factor.
                let p = curve.knot_dfs[i];
                let dp = 1e-7 * p;
                curve.set_knot(i, p + dp);
                let bumped = curve.par_swap_rate(0.0, inst.maturity, inst.frequency)? - inst.quote;
                let slope = (bumped - residual) / dp;
                if slope == 0.0 || !slope.is_finite() {
                    break;
                }
                let next = (p - residual / slope).clamp(1e-12, 10.0);
                curve.set_knot(i, next);
            }
            if !converged {
                return Err(Error::Solver {
                    what: format!(
                        "bootstrap of instrument {} (T = {}) did not converge",
                        inst.index, inst.maturity
                    ),
                    residual: residual.abs(),
                });
            }
        }
        Ok(curve)
    }

    fn set_knot(&mut self, i: usize, df: f64) {
        self.knot_dfs[i] = df;
        self.knot_log_dfs[i] = df.ln();
    }

    /// Extend the query horizon past the last knot; the final knot
    /// interval's constant forward rate is continued flat.
    pub fn with_horizon(mut self, horizon: f64) -> Result<YieldCurve> {
        if horizon < *self.knot_times.last().unwrap() {
            return Err(Error::Validation(format!(
                "horizon {horizon} lies before the last curve knot {}",
                self.knot_times.last().unwrap()
            )));
        }
        self.horizon = horizon;
        Ok(self)
    }

    /// Knot maturities `T_1..T_n`.
    pub fn knot_times(&self) -> &[f64] {
        &self.knot_times
    }

    /// Knot discount factors `P(0, T_i)`.
    pub fn knot_dfs(&self) -> &[f64] {
        &self.knot_dfs
    }

    /// The generating instruments, with any shock already applied to them.
    pub fn instruments(&self) -> &[MarketInstrument] {
        &self.instruments
    }

    /// The applied quote shock, or `None` for the unshocked market.
    pub fn shock(&self) -> Option<ShockSpec> {
        self.shock
    }

    /// Interpolation-rule identifier.
    pub fn interpolation(&self) -> &'static str {
        self.interpolation
    }

    /// Last queryable time.
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Discount factor `P(0, s)`: log-linear between knots, exact at knots,
    /// flat-forward past the last knot up to the horizon.
    pub fn discount(&self, s: f64) -> Result<f64> {
        Ok((-self.log_discount(s)?).exp())
    }

    /// `-ln P(0, s)`; the interpolation workspace shared by discounting and
    /// forwards.
    fn log_discount(&self, s: f64) -> Result<f64> {
        if !(s >= 0.0 && s <= self.horizon) {
            return Err(Error::Domain(format!(
                "time {s} outside the curve domain [0, {}]",
                self.horizon
            )));
        }
        if s == 0.0 {
            return Ok(0.0);
        }
        // Locate the knot interval; times before T_1 interpolate against
        // ln P(0,0) = 0, times past T_n continue the last interval's slope.
        let knots = &self.knot_times;
        let idx = knots.partition_point(|&t| t < s); // first knot >= s
        let (t0, l0, t1, l1) = if idx == 0 {
            (0.0, 0.0, knots[0], self.knot_log_dfs[0])
        } else if idx < knots.len() {
            (
                knots[idx - 1],
                self.knot_log_dfs[idx - 1],
                knots[idx],
                self.knot_log_dfs[idx],
            )
        } else {
            let n = knots.len();
            let (ta, la) = if n == 1 {
                (0.0, 0.0)
            } else {
                (knots[n - 2], self.knot_log_dfs[n - 2])
            };
            (ta, la, knots[n - 1], self.knot_log_dfs[n - 1])
        };
        let w = (s - t0) / (t1 - t0);
        Ok(-(l0 + w * (l1 - l0)))
    }

    /// Instantaneous forward rate `f(0, t) = -∂ ln P(0, t)/∂t`.
    ///
    /// Under log-linear interpolation the forward is constant on each knot
    /// interval; at knots the right-limit convention applies (the value of
    /// the interval starting there).
    pub fn instantaneous_forward(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0 && t <= self.horizon) {
            return Err(Error::Domain(format!(
                "time {t} outside the curve domain [0, {}]",
                self.horizon
            )));
        }
        let knots = &self.knot_times;
        // Right-limit: t exactly at a knot belongs to the interval it opens.
        let idx = knots.partition_point(|&tk| tk <= t);
        let (t0, l0, t1, l1) = if idx == 0 {
            (0.0, 0.0, knots[0], self.knot_log_dfs[0])
        } else if idx < knots.len() {
            (
                knots[idx - 1],
                self.knot_log_dfs[idx - 1],
                knots[idx],
                self.knot_log_dfs[idx],
            )
        } else {
            // At or past the last knot: last interval's forward, also used
            // for the flat extension.
            let n = knots.len();
            let (ta, la) = if n == 1 {
                (0.0, 0.0)
            } else {
                (knots[n - 2], self.knot_log_dfs[n - 2])
            };
            (ta, la, knots[n - 1], self.knot_log_dfs[n - 1])
        };
        Ok(-(l1 - l0) / (t1 - t0))
    }

    /// Par swap rate for the fixed-vs-float swap over `[start, maturity]`
    /// with the given fixed-leg frequency: the fixed rate `K` at which the
    /// fixed leg's PV equals the floating leg's `P(0,start) - P(0,maturity)`.
    pub fn par_swap_rate(&self, start: f64, maturity: f64, frequency: f64) -> Result<f64> {
        if !(start < maturity) {
            return Err(Error::Validation(format!(
                "par_swap_rate requires start < maturity, got [{start}, {maturity}]"
            )));
        }
        let (dates, accrual) = fixed_schedule(start, maturity, frequency);
        let mut annuity = 0.0;
        for d in dates {
            annuity += accrual * self.discount(d)?;
        }
        if annuity.abs() < 1e-300 {
            return Err(Error::Numerical(
                "par_swap_rate: zero annuity".into(),
            ));
        }
        Ok((self.discount(start)? - self.discount(maturity)?) / annuity)
    }

    /// CSV rendering of the knots: `T,discount_factor,zero_yield`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("T,discount_factor,zero_yield\n");
        for (t, p) in self.knot_times.iter().zip(&self.knot_dfs) {
            let zero = -p.ln() / t;
            out.push_str(&format!("{t:.6},{p:.12},{zero:.12}\n"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::presets;
    use approx::assert_abs_diff_eq;

    #[test]
    fn bootstrap_reprices_every_quote() {
        let quotes = presets::market_instruments();
        let curve = YieldCurve::bootstrap(&quotes).unwrap();
        for inst in &quotes {
            let par = curve
                .par_swap_rate(0.0, inst.maturity, inst.frequency)
                .unwrap();
            assert_abs_diff_eq!(par, inst.quote, epsilon = 1e-10);
        }
    }

    #[test]
    fn twenty_year_semiannual_par_rate() {
        let curve = YieldCurve::bootstrap(&presets::market_instruments()).unwrap();
        let par = curve.par_swap_rate(0.0, 20.0, 2.0).unwrap();
        assert!(
            (par - 0.02226).abs() < 5e-4,
            "20y semiannual par rate {par} too far from 0.02226"
        );
    }

    #[test]
    fn single_one_period_instrument() {
        // One-period par swap: K * P(0,1) = 1 - P(0,1) => P = 1/(1+K).
        let k = 0.03;
        let inst = [MarketInstrument::new(1, 1.0, k, 1.0)];
        let curve = YieldCurve::bootstrap(&inst).unwrap();
        assert_abs_diff_eq!(curve.knot_dfs()[0], 1.0 / (1.0 + k), epsilon = 1e-12);
    }

    #[test]
    fn zero_quotes_give_unit_discount_factors() {
        let insts: Vec<_> = [1.0, 2.0, 5.0, 10.0]
            .iter()
            .enumerate()
            .map(|(i, &t)| MarketInstrument::new(i + 1, t, 0.0, 1.0))
            .collect();
        let curve = YieldCurve::bootstrap(&insts).unwrap();
        for p in curve.knot_dfs() {
            assert_abs_diff_eq!(*p, 1.0, epsilon = 1e-12);
        }
        // Par rate on a flat zero curve is 0.
        assert_abs_diff_eq!(curve.par_swap_rate(0.0, 7.0, 2.0).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn discount_basics() {
        let curve = YieldCurve::bootstrap(&presets::market_instruments()).unwrap();
        assert_eq!(curve.discount(0.0).unwrap(), 1.0);
        for (t, p) in curve.knot_times().iter().zip(curve.knot_dfs()) {
            assert_abs_diff_eq!(curve.discount(*t).unwrap(), *p, epsilon = 1e-14);
        }
        // Halfway in log-space between the 1y and 2y knots.
        let expect = (curve.knot_dfs()[0] * curve.knot_dfs()[1]).sqrt();
        assert_abs_diff_eq!(curve.discount(1.5).unwrap(), expect, epsilon = 1e-14);
    }

    #[test]
    fn no_extrapolation_by_default() {
        let curve = YieldCurve::bootstrap(&presets::market_instruments()).unwrap();
        assert!(curve.discount(-0.01).is_err());
        assert!(curve.discount(30.0 + 1e-9).is_err());
    }

    #[test]
    fn horizon_extension_is_flat_forward() {
        let curve = YieldCurve::bootstrap(&presets::market_instruments())
            .unwrap()
            .with_horizon(40.0)
            .unwrap();
        let f_last = curve.instantaneous_forward(30.0).unwrap();
        let p30 = curve.discount(30.0).unwrap();
        let p35 = curve.discount(35.0).unwrap();
        assert_abs_diff_eq!(p35, p30 * (-f_last * 5.0).exp(), epsilon = 1e-14);
    }

    #[test]
    fn forwards_are_piecewise_constant_interval_slopes() {
        let curve = YieldCurve::bootstrap(&presets::market_instruments()).unwrap();
        let (p1, p2) = (curve.knot_dfs()[0], curve.knot_dfs()[1]);
        let expect = -(p2.ln() - p1.ln()) / (2.0 - 1.0);
        for t in [1.0, 1.25, 1.5, 1.999] {
            assert_abs_diff_eq!(curve.instantaneous_forward(t).unwrap(), expect, epsilon = 1e-13);
        }
        // Right-limit convention at the knot: f(T_1) belongs to [T_1, T_2).
        assert_abs_diff_eq!(curve.instantaneous_forward(1.0).unwrap(), expect, epsilon = 1e-13);
    }

    #[test]
    fn flat_curve_forward_equals_rate() {
        // A single zero-quote instrument makes P(0,t) = 1; use a curve with
        // one knot and a nonzero quote for the e^{-ct} shape instead.
        let inst = [MarketInstrument::new(1, 10.0, 0.02, 1.0)];
        let curve = YieldCurve::bootstrap(&inst).unwrap();
        // With a single knot the curve is exactly P(0,t) = e^{-ct}.
        let c = -curve.knot_dfs()[0].ln() / 10.0;
        for t in [0.0, 1.0, 4.2, 9.99] {
            assert_abs_diff_eq!(curve.instantaneous_forward(t).unwrap(), c, epsilon = 1e-13);
            assert_abs_diff_eq!(curve.discount(t).unwrap(), (-c * t).exp(), epsilon = 1e-14);
        }
    }

    #[test]
    fn one_period_par_rate_recovers_quote_at_knot() {
        let quotes = presets::market_instruments();
        let curve = YieldCurve::bootstrap(&quotes).unwrap();
        let par = curve.par_swap_rate(0.0, 1.0, 1.0).unwrap();
        assert_abs_diff_eq!(par, quotes[0].quote, epsilon = 1e-10);
    }

    #[test]
    fn null_shock_reproduces_the_base_curve() {
        let quotes = presets::market_instruments();
        let base = YieldCurve::bootstrap(&quotes).unwrap();
        let shocked = YieldCurve::shocked(&quotes, ShockSpec { index: 3, shift: 0.0 }).unwrap();
        for (a, b) in base.knot_dfs().iter().zip(shocked.knot_dfs()) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-14);
        }
    }

    #[test]
    fn shocked_curve_reprices_the_shifted_quote() {
        let quotes = presets::market_instruments();
        let shocked = YieldCurve::shocked(&quotes, ShockSpec::one_bp(7)).unwrap();
        let par = shocked.par_swap_rate(0.0, 20.0, 1.0).unwrap();
        assert_abs_diff_eq!(par, quotes[6].quote + 1e-4, epsilon = 1e-10);
        // Other quotes untouched.
        for inst in quotes.iter().filter(|q| q.index != 7) {
            let par = shocked
                .par_swap_rate(0.0, inst.maturity, inst.frequency)
                .unwrap();
            assert_abs_diff_eq!(par, inst.quote, epsilon = 1e-10);
        }
    }

    #[test]
    fn short_end_shock_is_localized() {
        let quotes = presets::market_instruments();
        let base = YieldCurve::bootstrap(&quotes).unwrap();
        let shocked = YieldCurve::shocked(&quotes, ShockSpec::one_bp(1)).unwrap();
        let delta = |t: f64| (shocked.discount(t).unwrap() - base.discount(t).unwrap()).abs();
        assert!(
            delta(10.0) < delta(1.0) && delta(30.0) < delta(1.0),
            "1y shock should fade at the long end: {} vs {}",
            delta(10.0),
            delta(1.0)
        );
    }

    #[test]
    fn shock_sign_decreases_the_shocked_knot() {
        // A higher par rate at T_i means heavier discounting there.
        let quotes = presets::market_instruments();
        let base = YieldCurve::bootstrap(&quotes).unwrap();
        for i in 1..=quotes.len() {
            let shocked = YieldCurve::shocked(&quotes, ShockSpec::one_bp(i)).unwrap();
            assert!(
                shocked.knot_dfs()[i - 1] < base.knot_dfs()[i - 1],
                "+1bp on quote {i} must lower P(0, T_{i})"
            );
        }
    }

    #[test]
    fn interpolated_dfs_stay_in_unit_interval() {
        let curve = YieldCurve::bootstrap(&presets::market_instruments()).unwrap();
        let mut t = 0.0;
        while t <= 30.0 {
            let p = curve.discount(t).unwrap();
            assert!(p > 0.0 && p <= 1.0, "P(0,{t}) = {p}");
            t += 0.125;
        }
    }

    #[test]
    fn validation_errors() {
        // Non-monotone maturities.
        let bad = [
            MarketInstrument::new(1, 2.0, 0.01, 1.0),
            MarketInstrument::new(2, 1.0, 0.01, 1.0),
        ];
        assert!(YieldCurve::bootstrap(&bad).is_err());
        // Shock index out of range.
        let quotes = presets::market_instruments();
        assert!(YieldCurve::shocked(&quotes, ShockSpec::one_bp(9)).is_err());
        assert!(YieldCurve::shocked(&quotes, ShockSpec::one_bp(0)).is_err());
        // Empty set.
        assert!(YieldCurve::bootstrap(&[]).is_err());
    }

    #[test]
    fn csv_export_schema() {
        let curve = YieldCurve::bootstrap(&presets::market_instruments()).unwrap();
        let csv = curve.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "T,discount_factor,zero_yield");
        assert_eq!(lines.count(), 8);
    }
}
