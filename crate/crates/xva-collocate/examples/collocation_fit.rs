//! Collocation in miniature: interpolate a swap's valuation function
//! V(t, ·) at the Gauss–Hermite nodes of the short rate's time-t marginal
//! and watch the sup-norm error collapse as nodes are added; then rebuild a
//! shocked market's valuation from the unshocked fit plus a cheap low-order
//! difference correction.
//!
//! ```text
//! cargo run --example collocation_fit
//! ```

use xva_collocate::curve::{ShockSpec, YieldCurve};
use xva_collocate::experiments::{marginal_nodes, presets};
use xva_collocate::hullwhite::{HWParams, HullWhiteModel};
use xva_collocate::interp::{fit, fit_difference, nested_subset, Surrogate};
use xva_collocate::products::{cashflow_slice, Swap};

fn main() -> xva_collocate::Result<()> {
    let instruments = presets::market_instruments();
    let params = HWParams::new(0.01, 0.02)?;
    let curve = YieldCurve::bootstrap(&instruments)?;
    let par = curve.par_swap_rate(0.0, 20.0, 2.0)?;
    let model = HullWhiteModel::new(params, curve);
    let swap = [Swap::new(1, 10_000.0, par, 0.0, 20.0, 2.0)?];

    // The valuation function at t = 5 and the probable range of the short
    // rate there (mean ± 4 std of the Gaussian marginal).
    let t = 5.0;
    let slice = cashflow_slice(&model, &swap, t)?;
    let (mu, var) = model.marginal_law(t)?;
    let band = 4.0 * var.sqrt();
    let probe: Vec<f64> = (0..=400)
        .map(|i| mu - band + 2.0 * band * i as f64 / 400.0)
        .collect();
    let sup_err = |g: &dyn Surrogate| {
        probe
            .iter()
            .map(|&r| (g.evaluate(r) - slice.value(r)).abs())
            .fold(0.0_f64, f64::max)
    };

    println!("20y par payer swap valued at t = {t}, probed on mean ± 4 std");
    println!();
    println!("{:>3} {:>12} {:>14}", "N", "sup error", "per notional");
    for n in 1..=9 {
        let nodes = marginal_nodes(&model, t, n)?;
        let g = fit(&nodes, |r| slice.value(r));
        let err = sup_err(&g);
        println!("{n:>3} {err:>12.3e} {:>14.2e}", err / swap[0].notional());
    }

    // Two-level surrogate: keep the unshocked fit g and correct it towards
    // the shocked market with d nodes instead of refitting all N.
    let shocked = YieldCurve::shocked(&instruments, ShockSpec::one_bp(6))?;
    let model_i = HullWhiteModel::new(params, shocked);
    let slice_i = cashflow_slice(&model_i, &swap, t)?;
    let n = 7;
    let base_nodes = marginal_nodes(&model, t, n)?;
    let g = fit(&base_nodes, |r| slice.value(r));
    let shocked_nodes = marginal_nodes(&model_i, t, n)?;

    println!();
    println!("correcting g towards the 1bp-shocked market (N = {n}):");
    println!("{:>3} {:>12}", "d", "sup error");
    for d in 1..=n {
        let sub = nested_subset(&shocked_nodes, d)?;
        let gi = fit_difference(&g, &sub, |r| slice_i.value(r));
        let err = probe
            .iter()
            .map(|&r| (gi.evaluate(r) - slice_i.value(r)).abs())
            .fold(0.0_f64, f64::max);
        println!("{d:>3} {err:>12.3e}");
    }
    println!();
    println!("(at d = N the correction nodes are the full shocked set, so the");
    println!(" two-level surrogate coincides with a fresh full-order fit)");
    Ok(())
}
