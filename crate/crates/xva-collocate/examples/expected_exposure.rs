//! Expected-exposure profile of a 20y par payer swap: the classical profile
//! (exact revaluation at every path state) against the collocation profile,
//! which spends only N = 7 exact valuations per monitoring date.
//!
//! ```text
//! cargo run --example expected_exposure
//! ```

use xva_collocate::curve::YieldCurve;
use xva_collocate::experiments::{presets, swap_surrogates};
use xva_collocate::exposure::{ee_approx, ee_exact, ee_rel_error};
use xva_collocate::hullwhite::{GaussianNoise, HWParams, HullWhiteModel};
use xva_collocate::products::{Portfolio, Swap};

fn main() -> xva_collocate::Result<()> {
    let curve = YieldCurve::bootstrap(&presets::market_instruments())?;
    let par = curve.par_swap_rate(0.0, 20.0, 2.0)?;
    let portfolio = Portfolio::new(vec![Swap::new(1, 10_000.0, par, 0.0, 20.0, 2.0)?])?;
    let model = HullWhiteModel::new(HWParams::new(0.01, 0.02)?, curve);

    let grid: Vec<f64> = (0..=80).map(|k| k as f64 / 4.0).collect();
    let m = 20_000;
    let n = 7;
    let noise = GaussianNoise::new(2024, m, grid.len() - 1);
    let paths = model.simulate(&grid, m, &noise)?;

    let exact = ee_exact(&paths, &portfolio, &model)?;
    let g = swap_surrogates(&model, portfolio.swaps(), &grid, n)?;
    let approx = ee_approx(&paths, &g, &model)?;

    println!(
        "{m} paths, quarterly monitoring to 20y; exact revaluation vs N = {n} collocation"
    );
    println!();
    println!("{:>6} {:>12} {:>12} {:>10}", "t", "EE exact", "EE approx", "rel err");
    for (k, &t) in grid.iter().enumerate().step_by(8) {
        let e = exact.values()[k];
        let a = approx.values()[k];
        let rel = if e > 0.0 {
            format!("{:.2e}", ((a - e) / e).abs())
        } else {
            "-".into()
        };
        println!("{t:>5}y {e:>12.4} {a:>12.4} {rel:>10}");
    }

    println!();
    println!(
        "eps_EE (max relative error over dates)   {:.3e}",
        ee_rel_error(&exact, &approx)?
    );
    println!(
        "exact valuations: {} classical vs {} collocation",
        exact.exact_valuations(),
        approx.exact_valuations()
    );
    println!(
        "surrogate evaluations beyond the node span: {}",
        approx.extrapolations()
    );
    Ok(())
}
