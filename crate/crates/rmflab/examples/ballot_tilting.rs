//! Barrier ballot probabilities: naive Monte Carlo against the exponentially
//! tilted estimator, and the fitted upper bound.
//!
//! cargo run --release --example ballot_tilting

use rmflab::primes::{variance_profile, DEFAULT_C0};
use rmflab::walks::{ballot_bound, ballot_mc, calibrate_ballot, tilted_walk_mc, Barrier, BarrierKind, BallotEvent};

fn main() -> rmflab::Result<()> {
    let t = 20;
    let b = Barrier::new(BarrierKind::Standard, 6.0, t);
    let profile = variance_profile(0.5, t, DEFAULT_C0, None);
    let mut cells = Vec::new();
    for k in [10, 15, 20] {
        for f in [0.2, 0.5, 0.8] {
            let w = f * b.upper(k);
            let ev = BallotEvent::new(k, w);
            let naive = ballot_mc(&b, &profile, &ev, 100_000, 1)?;
            let tilted = tilted_walk_mc(&b, &profile, &ev, 100_000, 2)?;
            println!(
                "k={k:>2} w={w:>6.2}: naive {:.3e} (rel se {:.2}), tilted {:.3e} (rel se {:.3}, ess {:.0})",
                naive.p_hat,
                naive.rel_stderr(),
                tilted.p_hat,
                tilted.rel_stderr(),
                tilted.ess
            );
            cells.push((k, w, tilted.p_hat));
        }
    }
    let fit = calibrate_ballot(&b, &cells)?;
    println!("bound constants C = {:.3}, C' = {:.3}", fit.c, fit.cp);
    for &(k, w, p) in &cells {
        println!("k={k:>2} w={w:>6.2}: p {p:.3e} <= bound {:.3e}", ballot_bound(&b, k, w, fit.c, fit.cp));
    }
    Ok(())
}
