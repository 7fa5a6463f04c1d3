//! Tail of the field maximum above m(t) + y on the surrogate.
//!
//! cargo run --release --example max_tail

use rmflab::analysis::max_tail_curve;
use rmflab::field::Backend;

fn main() -> rmflab::Result<()> {
    let ys: Vec<f64> = (1..=6).map(f64::from).collect();
    let curve = max_tail_curve(16, &ys, 20_000, Backend::Gaussian, 3, None)?;
    println!("m(16) = {:.3}", curve.m_t);
    for ((y, p), (_, r)) in ys.iter().zip(&curve.p_hat).zip(curve.prefactor_ratios()) {
        println!("y={y}: p_hat {:.3e} ± {:.1e}, p/(y e^(-2y-y²/t)) = {r:.3}", p.p_hat, p.stderr);
    }
    if let Some(fit) = curve.corrected_slope() {
        println!("slope of log p + y²/t: {:.3} ± {:.3}", fit.slope, fit.slope_stderr);
    }
    Ok(())
}
