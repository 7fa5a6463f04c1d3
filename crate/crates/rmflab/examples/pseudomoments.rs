//! Pseudomoments of the twisted zeta sum over t uniform on [T, 2T].
//!
//! cargo run --release --example pseudomoments

use rmflab::moments::{pseudomoment_diagonal, pseudomoment_mc, PseudoConfig};

fn main() -> rmflab::Result<()> {
    for (x, alpha) in [(1_000u64, 1.0), (10_000, 1.0), (1_000, 1.5)] {
        let cfg = PseudoConfig::new(x, alpha, 1.0, 20_000, 9);
        let est = pseudomoment_mc(&cfg)?;
        println!(
            "x={x:>6} alpha={alpha}: {:.4}±{:.4}, diagonal Σ d²/n = {:.4}",
            est.mean,
            est.stderr,
            pseudomoment_diagonal(x, alpha)
        );
    }
    let cfg = PseudoConfig::new(1_000, 1.5, 0.4, 20_000, 9);
    let est = pseudomoment_mc(&cfg)?;
    println!("alpha=1.5 q=0.4 (theorem regime {}): {:.4}±{:.4}", cfg.in_theorem_regime(), est.mean, est.stderr);
    let short = PseudoConfig { big_t: 1e4, ..PseudoConfig::new(1_000, 1.0, 1.0, 20_000, 9) };
    if let Err(e) = pseudomoment_mc(&short) {
        println!("T = 10^4 for x = 1000 is refused: {e}");
    }
    Ok(())
}
