//! The low-order workhorse: keep the unshocked N-node surrogate and correct
//! it towards each shocked market with only d nodes. Sweeping d shows the
//! integrated sensitivity error kappa^i decaying towards the full-order
//! estimator while the per-date valuation budget stays near the unshocked
//! cost.
//!
//! ```text
//! cargo run --example low_order_table
//! ```

use xva_collocate::curve::YieldCurve;
use xva_collocate::experiments::{
    build_markets, market_surrogates, presets, swap_difference_surrogates,
};
use xva_collocate::hullwhite::HWParams;
use xva_collocate::products::{Portfolio, Swap};
use xva_collocate::sensitivity::{
    cost_report, integrated_error, psi_exact, psi_full_order, psi_low_order,
};

fn main() -> xva_collocate::Result<()> {
    let instruments = presets::market_instruments();
    let curve = YieldCurve::bootstrap(&instruments)?;
    let par = curve.par_swap_rate(0.0, 20.0, 2.0)?;
    let portfolio = Portfolio::new(vec![Swap::new(1, 10_000.0, par, 0.0, 20.0, 2.0)?])?;

    let delta_k = 1e-4;
    let grid: Vec<f64> = (0..=80).map(|k| k as f64 / 4.0).collect();
    let (m, n) = (20_000, 7);
    let markets = build_markets(
        &instruments,
        HWParams::new(0.01, 0.02)?,
        delta_k,
        20.0,
        &grid,
        m,
        2024,
    )?;

    let exact = psi_exact(&markets.models, &markets.paths, &portfolio, delta_k)?;
    let (g, gi) = market_surrogates(&markets, portfolio.swaps(), n)?;
    let full = psi_full_order(&markets.models, &markets.paths, &g, &gi, delta_k)?;

    println!("integrated relative error kappa^i by correction order d (N = {n}):");
    println!();
    print!("{:>4}", "d");
    for inst in &instruments {
        print!(" {:>8}", format!("{}y", inst.maturity));
    }
    println!();

    let mut profiles = vec![&exact, &full];
    let mut lows = Vec::new();
    for d in 2..=n {
        let gtilde = swap_difference_surrogates(&markets, portfolio.swaps(), &g, n, d)?;
        lows.push(psi_low_order(
            &markets.models,
            &markets.paths,
            &g,
            &gtilde,
            delta_k,
        )?);
    }
    for (low, d) in lows.iter().zip(2..=n) {
        let kappa = integrated_error(low, &exact)?.kappa;
        print!("{d:>4}");
        for k in kappa {
            print!(" {k:>8.1e}");
        }
        println!();
    }
    profiles.extend(lows.iter());

    // The cost table the error decay is traded against.
    println!();
    cost_report(&profiles)?.write_csv(&mut std::io::stdout())?;
    Ok(())
}
