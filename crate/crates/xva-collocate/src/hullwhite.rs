//! One-factor Hull–White short-rate model fitted to a bootstrapped curve.
//!
//! The short rate `dr = λ(θ(t) - r) dt + η dW` is handled through the
//! decomposition `r(t) = u(t) + ψ(t)`, where `u` is the driftless
//! Ornstein–Uhlenbeck part (`du = -λ u dt + η dW`, `u(0) = 0`) and
//!
//! ```text
//! ψ(t) = f(0,t) + e^{-λt} (η²/λ²)(cosh(λt) - 1)
//!      = f(0,t) + (η²/2λ²)(1 - e^{-λt})²
//! ```
//!
//! imposes the initial term structure; `θ(t)` itself is never formed.
//! Fitting a model to a shocked curve changes only `ψ` (through the
//! forwards `f_i(0,t)`): the model parameters `λ, η` are deliberately NOT
//! recalibrated under quote shocks, so sensitivities isolate the curve
//! effect.
//!
//! Simulation is exact in distribution: per step, the pair
//! `(u(s_{k+1}), ∫ u)` is drawn from its joint Gaussian transition law
//! (two standard normals per path-step), eliminating discretization bias,
//! and the pathwise money-market integral `∫ r = ∫ u + ∫ ψ` accumulates the
//! deterministic part by Gauss–Legendre quadrature. Because `u` does not
//! depend on the market, all shocked markets simulated on common random
//! numbers share one `u` matrix; their short rates differ by the
//! deterministic offset `ψ_i - ψ`.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::curve::YieldCurve;
use crate::error::{Error, Result};
use crate::interp::gauss_legendre_unit;

/// Gauss–Legendre points per simulation step for the deterministic
/// integral `∫ ψ` (the integrand is split at curve knots, where the
/// piecewise-constant forwards jump, so the rule only ever sees smooth
/// pieces).
const PSI_QUAD_POINTS: usize = 16;

/// Hull–White parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HWParams {
    /// Mean-reversion speed λ (1/years).
    pub lambda: f64,
    /// Absolute short-rate volatility η.
    pub eta: f64,
}

impl HWParams {
    pub fn new(lambda: f64, eta: f64) -> Result<Self> {
        if !(lambda > 0.0) || !(eta > 0.0) {
            return Err(Error::Validation(format!(
                "Hull-White parameters must be positive, got lambda = {lambda}, eta = {eta}"
            )));
        }
        Ok(HWParams { lambda, eta })
    }
}

/// `1 - e^{-x}` computed without cancellation for small `x >= 0`.
#[inline]
fn one_minus_exp_neg(x: f64) -> f64 {
    -(-x).exp_m1()
}

/// A Hull–White model bound to one market's curve.
#[derive(Clone, Debug)]
pub struct HullWhiteModel {
    params: HWParams,
    curve: YieldCurve,
}

impl HullWhiteModel {
    pub fn new(params: HWParams, curve: YieldCurve) -> HullWhiteModel {
        HullWhiteModel { params, curve }
    }

    pub fn params(&self) -> HWParams {
        self.params
    }

    pub fn curve(&self) -> &YieldCurve {
        &self.curve
    }

    /// Market index: 0 for the unshocked market, the shocked instrument's
    /// 1-based index otherwise.
    pub fn market_index(&self) -> usize {
        self.curve.shock().map_or(0, |s| s.index)
    }

    /// Initial short rate `r(0) = f(0, 0)`.
    pub fn r0(&self) -> f64 {
        self.curve
            .instantaneous_forward(0.0)
            .expect("t = 0 is always inside the curve domain")
    }

    /// The deterministic short-rate component
    /// `ψ(t) = f(0,t) + (η²/2λ²)(1 - e^{-λt})²`.
    pub fn psi(&self, t: f64) -> Result<f64> {
        let f = self.curve.instantaneous_forward(t)?;
        let lam = self.params.lambda;
        let eta = self.params.eta;
        let e = one_minus_exp_neg(lam * t);
        Ok(f + eta * eta / (2.0 * lam * lam) * e * e)
    }

    /// `∫_{s0}^{s1} ψ(s) ds` by Gauss–Legendre quadrature, split at curve
    /// knots so each panel has a smooth integrand.
    pub(crate) fn int_psi_step(&self, s0: f64, s1: f64) -> Result<f64> {
        let (gl_x, gl_w) = gauss_legendre_cache();
        let mut breaks: Vec<f64> = vec![s0];
        for &t in self.curve.knot_times() {
            if t > s0 && t < s1 {
                breaks.push(t);
            }
        }
        breaks.push(s1);
        let mut total = 0.0;
        for pair in breaks.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            let h = b - a;
            let mut acc = 0.0;
            for (x, w) in gl_x.iter().zip(gl_w) {
                acc += w * self.psi(a + h * x)?;
            }
            total += h * acc;
        }
        Ok(total)
    }

    /// Mean and variance of `r(t)`:
    /// `μ(t) = ψ(t) + (r(0) - ψ(0)) e^{-λt}` (the parenthesis vanishes for a
    /// model fitted at t = 0) and `σ²(t) = η² (1 - e^{-2λt}) / (2λ)`.
    pub fn marginal_law(&self, t: f64) -> Result<(f64, f64)> {
        let lam = self.params.lambda;
        let eta = self.params.eta;
        let mean = self.psi(t)? + (self.r0() - self.psi(0.0)?) * (-lam * t).exp();
        let var = eta * eta * one_minus_exp_neg(2.0 * lam * t) / (2.0 * lam);
        Ok((mean, var))
    }

    /// Affine zero-coupon bond coefficients `(A, B)` of
    /// `P(t, T) = A(t,T) e^{-B(t,T) r}` with `B = (1 - e^{-λ(T-t)})/λ` and
    /// `A` pinned by the initial curve:
    /// `A = P(0,T)/P(0,t) · exp(B f(0,t) - (η²/4λ)(1 - e^{-2λt}) B²)`.
    pub fn zcb_coefficients(&self, t: f64, maturity: f64) -> Result<(f64, f64)> {
        if t > maturity {
            return Err(Error::Domain(format!(
                "zcb_price requires t <= maturity, got t = {t}, maturity = {maturity}"
            )));
        }
        let lam = self.params.lambda;
        let eta = self.params.eta;
        let b = one_minus_exp_neg(lam * (maturity - t)) / lam;
        let log_a = (self.curve.discount(maturity)?.ln() - self.curve.discount(t)?.ln())
            + b * self.curve.instantaneous_forward(t)?
            - eta * eta / (4.0 * lam) * one_minus_exp_neg(2.0 * lam * t) * b * b;
        Ok((log_a.exp(), b))
    }

    /// Affine zero-coupon bond price `P(t, T) = A(t,T) e^{-B(t,T) r}`; see
    /// [`Self::zcb_coefficients`].
    pub fn zcb_price(&self, t: f64, maturity: f64, r: f64) -> Result<f64> {
        let (a, b) = self.zcb_coefficients(t, maturity)?;
        Ok(a * (-b * r).exp())
    }

    /// Simulate this market alone; see [`simulate_common`].
    pub fn simulate(&self, grid: &[f64], m: usize, noise: &GaussianNoise) -> Result<PathSet> {
        Ok(simulate_common(std::slice::from_ref(self), grid, m, noise)?.remove(0))
    }
}

fn gauss_legendre_cache() -> (&'static [f64], &'static [f64]) {
    use once_cell::sync::Lazy;
    static RULE: Lazy<(Vec<f64>, Vec<f64>)> = Lazy::new(|| gauss_legendre_unit(PSI_QUAD_POINTS));
    (&RULE.0, &RULE.1)
}

// ---------------------------------------------------------------------------
// Noise and paths
// ---------------------------------------------------------------------------

/// Reproducible Gaussian driver matrix: conceptually `M × R × 2` standard
/// normals (two per path-step), derived lazily from per-path ChaCha
/// substreams so the same `(seed, path)` always regenerates the same draws.
/// One `GaussianNoise` is shared verbatim by the unshocked and all shocked
/// markets — the common-random-numbers requirement of the sensitivity
/// estimators.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GaussianNoise {
    seed: u64,
    paths: usize,
    steps: usize,
}

impl GaussianNoise {
    pub fn new(seed: u64, paths: usize, steps: usize) -> GaussianNoise {
        GaussianNoise { seed, paths, steps }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn paths(&self) -> usize {
        self.paths
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Dedicated RNG substream for one path; independent of how paths are
    /// scheduled across threads.
    pub(crate) fn path_rng(&self, path: usize) -> ChaCha12Rng {
        let mut rng = ChaCha12Rng::seed_from_u64(self.seed);
        rng.set_stream(path as u64);
        rng
    }

    /// Replay one path's per-step rate innovations: the first of the two
    /// normals drawn per step is the one that propagates `u` (see the
    /// simulation loop), so it is the Brownian driver other risk factors
    /// correlate against.
    pub(crate) fn rate_normals(&self, path: usize, steps: usize) -> Vec<f64> {
        let mut rng = self.path_rng(path);
        (0..steps)
            .map(|_| {
                let z1: f64 = StandardNormal.sample(&mut rng);
                let _z2: f64 = StandardNormal.sample(&mut rng);
                z1
            })
            .collect()
    }
}

/// The market-independent stochastic component of a simulation: OU values
/// `u(s_k; ω_j)` and pathwise integrals `∫_0^{s_k} u`, row-major `M × (R+1)`.
#[derive(Debug)]
struct UMatrix {
    dates: usize,
    u: Vec<f64>,
    int_u: Vec<f64>,
}

/// Simulated short-rate paths for one market.
///
/// `r(s_k; ω_j) = u(s_k; ω_j) + ψ_market(s_k)`: the stochastic `u`-matrix is
/// shared (via `Arc`) among all markets simulated on the same noise, and the
/// per-market data are the deterministic vectors `ψ(s_k)` and `∫_0^{s_k} ψ`.
#[derive(Clone, Debug)]
pub struct PathSet {
    grid: Vec<f64>,
    shared: Arc<UMatrix>,
    psi: Vec<f64>,
    int_psi: Vec<f64>,
    paths: usize,
    seed: u64,
    market: usize,
}

impl PathSet {
    /// Monitoring dates `s_0 = 0 < s_1 < ... < s_R`.
    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    /// Number of paths M.
    pub fn num_paths(&self) -> usize {
        self.paths
    }

    /// Number of grid dates R + 1.
    pub fn num_dates(&self) -> usize {
        self.grid.len()
    }

    /// Seed of the generating noise.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Market index (0 = unshocked).
    pub fn market_index(&self) -> usize {
        self.market
    }

    /// Short rate `r(s_k; ω_j)`. Panics on out-of-range indices.
    #[inline]
    pub fn short_rate(&self, path: usize, date: usize) -> f64 {
        self.shared.u[path * self.shared.dates + date] + self.psi[date]
    }

    /// Accumulated integral `∫_0^{s_k} r(s; ω_j) ds`; column 0 is 0.
    #[inline]
    pub fn integral(&self, path: usize, date: usize) -> f64 {
        self.shared.int_u[path * self.shared.dates + date] + self.int_psi[date]
    }

    /// Pathwise discount factor `B(0)/B(s_k) = exp(-∫_0^{s_k} r)`; 1 at k = 0.
    #[inline]
    pub fn discount_factor(&self, path: usize, date: usize) -> f64 {
        (-self.integral(path, date)).exp()
    }

    /// Stream the paths as CSV (`path_id,date,r,int_r`), capped at
    /// `max_paths` rows of paths.
    pub fn write_csv(&self, w: &mut impl std::io::Write, max_paths: usize) -> std::io::Result<()> {
        writeln!(w, "path_id,date,r,int_r")?;
        for j in 0..self.paths.min(max_paths) {
            for (k, t) in self.grid.iter().enumerate() {
                writeln!(
                    w,
                    "{j},{t:.6},{:.12e},{:.12e}",
                    self.short_rate(j, k),
                    self.integral(j, k)
                )?;
            }
        }
        Ok(())
    }
}

/// Per-step coefficients of the exact `(u, ∫u)` Gaussian transition.
pub(crate) struct StepCoef {
    /// `e^{-λΔ}`: mean decay of u.
    pub(crate) decay: f64,
    /// Std dev of u' given u.
    pub(crate) sd_u: f64,
    /// `(1 - e^{-λΔ})/λ`: mean coefficient of ∫u given u.
    pub(crate) mean_y: f64,
    /// Regression coefficient `Cov(u', Y)/sd_u` for the first normal.
    pub(crate) c_over_sd: f64,
    /// Conditional std dev of Y given u'.
    pub(crate) sd_y_cond: f64,
}

impl StepCoef {
    pub(crate) fn new(lambda: f64, eta: f64, dt: f64) -> StepCoef {
        let x = lambda * dt;
        let em1 = one_minus_exp_neg(x); // 1 - e^{-λΔ}
        let em2 = one_minus_exp_neg(2.0 * x); // 1 - e^{-2λΔ}
        let var_u = eta * eta * em2 / (2.0 * lambda);
        // Var(∫u over the step) = (η²/λ²)(Δ - 2(1-e^{-λΔ})/λ + (1-e^{-2λΔ})/2λ);
        // the bracket is O((λΔ)³) and evaluated from expm1 terms to keep
        // relative accuracy.
        let var_y = eta * eta / (lambda * lambda)
            * (dt - 2.0 * em1 / lambda + em2 / (2.0 * lambda)).max(0.0);
        let cov = eta * eta / (2.0 * lambda * lambda) * em1 * em1;
        let sd_u = var_u.sqrt();
        StepCoef {
            decay: 1.0 - em1,
            sd_u,
            mean_y: em1 / lambda,
            c_over_sd: cov / sd_u,
            sd_y_cond: (var_y - (cov / sd_u) * (cov / sd_u)).max(0.0).sqrt(),
        }
    }
}

/// Simulate several markets on one shared Gaussian driver.
///
/// All models must share the same `(λ, η)` (quote shocks never recalibrate
/// them), which makes the OU component `u` identical across markets: it is
/// computed once and shared. The returned `PathSet`s therefore realize
/// common random numbers exactly — `r_i(t;ω) - r_0(t;ω) = ψ_i(t) - ψ_0(t)`
/// deterministically.
///
/// Per path-step exactly two standard normals are consumed: the first for
/// `u(s_{k+1})`, the second for the conditional draw of `∫u` over the step.
pub fn simulate_common(
    models: &[HullWhiteModel],
    grid: &[f64],
    m: usize,
    noise: &GaussianNoise,
) -> Result<Vec<PathSet>> {
    if models.is_empty() {
        return Err(Error::Validation("simulate_common: no models given".into()));
    }
    if m == 0 {
        return Err(Error::Validation("path count M must be at least 1".into()));
    }
    if grid.is_empty() || grid[0] != 0.0 {
        return Err(Error::Validation(
            "simulation grid must start at t0 = 0".into(),
        ));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Validation(
            "simulation grid must be strictly increasing".into(),
        ));
    }
    let params = models[0].params();
    if models.iter().any(|mo| mo.params() != params) {
        return Err(Error::Validation(
            "all jointly simulated markets must share the Hull-White parameters".into(),
        ));
    }
    let steps = grid.len() - 1;
    if noise.paths() != m || noise.steps() != steps {
        return Err(Error::Validation(format!(
            "noise dimensions {}×{} do not match the requested {m} paths × {steps} steps",
            noise.paths(),
            noise.steps()
        )));
    }

    let coefs: Vec<StepCoef> = grid
        .windows(2)
        .map(|w| StepCoef::new(params.lambda, params.eta, w[1] - w[0]))
        .collect();

    let dates = grid.len();
    let mut u = vec![0.0_f64; m * dates];
    let mut int_u = vec![0.0_f64; m * dates];
    u.par_chunks_mut(dates)
        .zip(int_u.par_chunks_mut(dates))
        .enumerate()
        .for_each(|(j, (row_u, row_iu))| {
            let mut rng = noise.path_rng(j);
            let mut uk = 0.0;
            let mut acc = 0.0;
            row_u[0] = 0.0;
            row_iu[0] = 0.0;
            for (k, c) in coefs.iter().enumerate() {
                let z1: f64 = StandardNormal.sample(&mut rng);
                let z2: f64 = StandardNormal.sample(&mut rng);
                let y = c.mean_y * uk + c.c_over_sd * z1 + c.sd_y_cond * z2;
                uk = c.decay * uk + c.sd_u * z1;
                acc += y;
                row_u[k + 1] = uk;
                row_iu[k + 1] = acc;
            }
        });
    let shared = Arc::new(UMatrix { dates, u, int_u });

    let mut out = Vec::with_capacity(models.len());
    for model in models {
        let mut psi = Vec::with_capacity(dates);
        let mut int_psi = Vec::with_capacity(dates);
        let mut acc = 0.0;
        int_psi.push(0.0);
        psi.push(model.psi(grid[0])?);
        for w in grid.windows(2) {
            acc += model.int_psi_step(w[0], w[1])?;
            int_psi.push(acc);
            psi.push(model.psi(w[1])?);
        }
        out.push(PathSet {
            grid: grid.to_vec(),
            shared: Arc::clone(&shared),
            psi,
            int_psi,
            paths: m,
            seed: noise.seed(),
            market: model.market_index(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve::{ShockSpec, YieldCurve};
    use crate::experiments::presets;
    use approx::assert_abs_diff_eq;

    fn base_model() -> HullWhiteModel {
        let curve = YieldCurve::bootstrap(&presets::market_instruments()).unwrap();
        HullWhiteModel::new(HWParams::new(0.01, 0.02).unwrap(), curve)
    }

    fn quarterly_grid(horizon: f64) -> Vec<f64> {
        let n = (horizon * 4.0).round() as usize;
        (0..=n).map(|k| k as f64 * 0.25).collect()
    }

    /// Closed form for ∫_0^t ψ(s) ds under any curve:
    /// -ln P(0,t) + (η²/2λ²)[t - 2(1-e^{-λt})/λ + (1-e^{-2λt})/2λ].
    fn int_psi_closed(model: &HullWhiteModel, t: f64) -> f64 {
        let lam = model.params().lambda;
        let eta = model.params().eta;
        let e1 = 1.0 - (-lam * t).exp();
        let e2 = 1.0 - (-2.0 * lam * t).exp();
        -model.curve().discount(t).unwrap().ln()
            + eta * eta / (2.0 * lam * lam) * (t - 2.0 * e1 / lam + e2 / (2.0 * lam))
    }

    #[test]
    fn psi_at_zero_is_the_instantaneous_forward() {
        let model = base_model();
        assert_eq!(
            model.psi(0.0).unwrap(),
            model.curve().instantaneous_forward(0.0).unwrap()
        );
    }

    #[test]
    fn psi_matches_the_cosh_form() {
        // Independent algebra: ψ = f + e^{-λt}(η²/λ²)(cosh(λt) - 1).
        let model = base_model();
        let (lam, eta) = (0.01, 0.02);
        for t in [0.5, 1.0, 7.3, 10.0, 25.0] {
            let f = model.curve().instantaneous_forward(t).unwrap();
            let want = f + (-lam * t).exp() * eta * eta / (lam * lam) * ((lam * t).cosh() - 1.0);
            assert_abs_diff_eq!(model.psi(t).unwrap(), want, epsilon = 1e-15);
        }
    }

    #[test]
    fn psi_with_vanishing_vol_is_the_forward_curve() {
        let curve = YieldCurve::bootstrap(&presets::market_instruments()).unwrap();
        let model = HullWhiteModel::new(HWParams::new(0.01, 1e-12).unwrap(), curve);
        for t in [0.0, 3.0, 17.5] {
            assert_abs_diff_eq!(
                model.psi(t).unwrap(),
                model.curve().instantaneous_forward(t).unwrap(),
                epsilon = 1e-20
            );
        }
    }

    #[test]
    fn integrated_psi_matches_closed_form() {
        let model = base_model();
        let grid = quarterly_grid(20.0);
        let noise = GaussianNoise::new(1, 2, grid.len() - 1);
        let paths = model.simulate(&grid, 2, &noise).unwrap();
        // int_psi is internal; recover it from a zero-u path? Instead check
        // E-side identity: integral(j,k) - ∫u must equal ∫ψ; use the
        // definition via short_rate/integral on the stored vectors.
        for (k, &t) in grid.iter().enumerate().step_by(8) {
            let got = paths.int_psi[k];
            assert_abs_diff_eq!(got, int_psi_closed(&model, t), epsilon = 1e-12);
        }
    }

    #[test]
    fn marginal_law_limits() {
        let model = base_model();
        let (m0, v0) = model.marginal_law(0.0).unwrap();
        assert_abs_diff_eq!(m0, model.r0(), epsilon = 1e-15);
        assert_eq!(v0, 0.0);
        // Stationary variance η²/2λ at large t (30y with λ = 0.01 is not yet
        // stationary; check the closed form instead).
        let (_, v10) = model.marginal_law(10.0).unwrap();
        assert_abs_diff_eq!(
            v10,
            0.02 * 0.02 * (1.0 - (-0.2_f64).exp()) / 0.02,
            epsilon = 1e-15
        );
        let lam_big = HWParams::new(5.0, 0.02).unwrap();
        let curve = YieldCurve::bootstrap(&presets::market_instruments()).unwrap();
        let model = HullWhiteModel::new(lam_big, curve);
        let (_, v) = model.marginal_law(30.0).unwrap();
        assert_abs_diff_eq!(v, 0.02 * 0.02 / 10.0, epsilon = 1e-12);
    }

    #[test]
    fn zcb_price_basics() {
        let model = base_model();
        // P(t, t) = 1 for any r.
        for (t, r) in [(0.0, 0.03), (5.0, -0.01), (20.0, 0.0)] {
            assert_abs_diff_eq!(model.zcb_price(t, t, r).unwrap(), 1.0, epsilon = 1e-14);
        }
        // Fit condition at t = 0: P(0, T) from the model at r = r(0) equals
        // the curve discount factor.
        for t in [0.5, 1.0, 2.0, 7.0, 13.25, 20.0, 30.0] {
            assert_abs_diff_eq!(
                model.zcb_price(0.0, t, model.r0()).unwrap(),
                model.curve().discount(t).unwrap(),
                epsilon = 1e-10
            );
        }
        // Monotone decreasing in r.
        let p_low = model.zcb_price(5.0, 12.0, 0.01).unwrap();
        let p_high = model.zcb_price(5.0, 12.0, 0.02).unwrap();
        assert!(p_high < p_low);
        // Domain check.
        assert!(model.zcb_price(3.0, 2.0, 0.01).is_err());
    }

    #[test]
    fn simulation_is_deterministic_in_the_seed() {
        let model = base_model();
        let grid = quarterly_grid(5.0);
        let noise = GaussianNoise::new(99, 64, grid.len() - 1);
        let a = model.simulate(&grid, 64, &noise).unwrap();
        let b = model.simulate(&grid, 64, &noise).unwrap();
        for j in 0..64 {
            for k in 0..grid.len() {
                assert_eq!(a.short_rate(j, k), b.short_rate(j, k));
                assert_eq!(a.integral(j, k), b.integral(j, k));
            }
        }
    }

    #[test]
    fn discount_factor_starts_at_one() {
        let model = base_model();
        let grid = quarterly_grid(2.0);
        let noise = GaussianNoise::new(3, 16, grid.len() - 1);
        let paths = model.simulate(&grid, 16, &noise).unwrap();
        for j in 0..16 {
            assert_eq!(paths.discount_factor(j, 0), 1.0);
        }
    }

    #[test]
    fn vanishing_vol_reproduces_the_forward_curve_pathwise() {
        let curve = YieldCurve::bootstrap(&presets::market_instruments()).unwrap();
        let model = HullWhiteModel::new(HWParams::new(0.01, 1e-12).unwrap(), curve);
        let grid = quarterly_grid(10.0);
        let noise = GaussianNoise::new(7, 4, grid.len() - 1);
        let paths = model.simulate(&grid, 4, &noise).unwrap();
        for j in 0..4 {
            for (k, &t) in grid.iter().enumerate() {
                assert!(
                    (paths.short_rate(j, k) - model.psi(t).unwrap()).abs() < 1e-8,
                    "deterministic limit violated at t = {t}"
                );
                let df = paths.discount_factor(j, k);
                let p = model.curve().discount(t).unwrap();
                assert!((df - p).abs() < 1e-8, "DF {df} vs P {p} at t = {t}");
            }
        }
    }

    #[test]
    fn martingale_discount_factor_matches_the_curve() {
        let model = base_model();
        let grid = quarterly_grid(20.0);
        let m = 20_000;
        let noise = GaussianNoise::new(2024, m, grid.len() - 1);
        let paths = model.simulate(&grid, m, &noise).unwrap();
        for (k, &t) in grid.iter().enumerate() {
            let mut sum = 0.0;
            let mut sum2 = 0.0;
            for j in 0..m {
                let df = paths.discount_factor(j, k);
                sum += df;
                sum2 += df * df;
            }
            let mean = sum / m as f64;
            let var = (sum2 / m as f64 - mean * mean).max(0.0);
            let se = (var / m as f64).sqrt();
            let p = model.curve().discount(t).unwrap();
            assert!(
                (mean - p).abs() <= 4.0 * se + 1e-12,
                "martingale failure at t = {t}: mean {mean} vs P {p} (SE {se:.2e})"
            );
        }
    }

    #[test]
    fn sample_moments_match_the_marginal_law() {
        let model = base_model();
        let grid = quarterly_grid(20.0);
        let m = 20_000;
        let noise = GaussianNoise::new(11, m, grid.len() - 1);
        let paths = model.simulate(&grid, m, &noise).unwrap();
        for (k, &t) in grid.iter().enumerate().skip(4).step_by(16) {
            let (mu, var) = model.marginal_law(t).unwrap();
            let mut sum = 0.0;
            let mut sum2 = 0.0;
            for j in 0..m {
                let r = paths.short_rate(j, k);
                sum += r;
                sum2 += r * r;
            }
            let mean = sum / m as f64;
            let svar = sum2 / m as f64 - mean * mean;
            let se_mean = (var / m as f64).sqrt();
            let se_var = var * (2.0 / (m as f64 - 1.0)).sqrt();
            assert!(
                (mean - mu).abs() <= 4.0 * se_mean,
                "mean at t = {t}: {mean} vs {mu}"
            );
            assert!(
                (svar - var).abs() <= 4.0 * se_var,
                "variance at t = {t}: {svar} vs {var}"
            );
        }
    }

    #[test]
    fn shared_noise_makes_market_differences_deterministic() {
        let quotes = presets::market_instruments();
        let base = YieldCurve::bootstrap(&quotes).unwrap();
        let shocked = YieldCurve::shocked(&quotes, ShockSpec::one_bp(3)).unwrap();
        let params = HWParams::new(0.01, 0.02).unwrap();
        let models = vec![
            HullWhiteModel::new(params, base),
            HullWhiteModel::new(params, shocked),
        ];
        let grid = quarterly_grid(10.0);
        let m = 256;
        let noise = GaussianNoise::new(5, m, grid.len() - 1);
        let paths = simulate_common(&models, &grid, m, &noise).unwrap();
        let (p0, p3) = (&paths[0], &paths[1]);
        let psi_gap: Vec<f64> = grid
            .iter()
            .map(|&t| models[1].psi(t).unwrap() - models[0].psi(t).unwrap())
            .collect();
        let mut max_gap: f64 = 0.0;
        for j in 0..m {
            for k in 0..grid.len() {
                let diff = p3.short_rate(j, k) - p0.short_rate(j, k);
                // Pathwise difference is the deterministic ψ-gap...
                assert_abs_diff_eq!(diff, psi_gap[k], epsilon = 1e-12);
                max_gap = max_gap.max(diff.abs());
            }
        }
        // ...of the order of the 1bp quote shock, never of order η√t ≈ 6e-2.
        assert!(max_gap > 0.0 && max_gap < 1e-3, "gap {max_gap}");
    }

    #[test]
    fn noise_dimension_mismatch_is_rejected() {
        let model = base_model();
        let grid = quarterly_grid(1.0);
        let noise = GaussianNoise::new(0, 8, 3); // wrong step count
        assert!(model.simulate(&grid, 8, &noise).is_err());
        let noise = GaussianNoise::new(0, 9, grid.len() - 1); // wrong path count
        assert!(model.simulate(&grid, 8, &noise).is_err());
    }

    #[test]
    fn csv_dump_schema() {
        let model = base_model();
        let grid = quarterly_grid(1.0);
        let noise = GaussianNoise::new(0, 4, grid.len() - 1);
        let paths = model.simulate(&grid, 4, &noise).unwrap();
        let mut buf = Vec::new();
        paths.write_csv(&mut buf, 2).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "path_id,date,r,int_r");
        assert_eq!(lines.count(), 2 * grid.len());
    }
}
