//! Expected-exposure sensitivities of a 20y par payer swap to each of the 8
//! market quotes: the classical bump-and-revalue estimator against the
//! full-order collocation estimator, on common random numbers.
//!
//! ```text
//! cargo run --example sensitivity_profile
//! ```

use xva_collocate::curve::YieldCurve;
use xva_collocate::experiments::{build_markets, market_surrogates, presets};
use xva_collocate::hullwhite::HWParams;
use xva_collocate::products::{Portfolio, Swap};
use xva_collocate::sensitivity::{psi_exact, psi_full_order, rel_error_profile};

fn main() -> xva_collocate::Result<()> {
    let instruments = presets::market_instruments();
    let curve = YieldCurve::bootstrap(&instruments)?;
    let par = curve.par_swap_rate(0.0, 20.0, 2.0)?;
    let portfolio = Portfolio::new(vec![Swap::new(1, 10_000.0, par, 0.0, 20.0, 2.0)?])?;

    let delta_k = 1e-4;
    let grid: Vec<f64> = (0..=80).map(|k| k as f64 / 4.0).collect();
    let m = 20_000;
    let n = 7;
    let markets = build_markets(
        &instruments,
        HWParams::new(0.01, 0.02)?,
        delta_k,
        20.0,
        &grid,
        m,
        2024,
    )?;

    println!(
        "{} markets (unshocked + one per 1bp-shocked quote), {m} shared paths",
        markets.models.len()
    );

    let exact = psi_exact(&markets.models, &markets.paths, &portfolio, delta_k)?;
    let (g, gi) = market_surrogates(&markets, portfolio.swaps(), n)?;
    let full = psi_full_order(&markets.models, &markets.paths, &g, &gi, delta_k)?;
    let errors = rel_error_profile(&full, &exact);

    let k10 = grid.iter().position(|&t| t == 10.0).unwrap();
    println!();
    println!(
        "{:>6} {:>14} {:>14} {:>12}",
        "quote", "psi exact(10y)", "psi full(10y)", "max rel err"
    );
    for (i, inst) in instruments.iter().enumerate() {
        let worst = errors.per_shock_max()[i]
            .map(|e| format!("{e:.2e}"))
            .unwrap_or_else(|| "-".into());
        println!(
            "{:>5}y {:>14.4} {:>14.4} {:>12}",
            inst.maturity,
            exact.value(k10, i),
            full.value(k10, i),
            worst
        );
    }

    println!();
    println!(
        "worst relative error over all dates and quotes: {:.3e}",
        errors.max_abs().unwrap_or(f64::NAN)
    );
    println!(
        "exact valuations per date: {} classical vs {} full-order",
        exact.valuations_per_date(),
        full.valuations_per_date()
    );
    Ok(())
}
