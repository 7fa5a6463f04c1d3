//! Moments of Steinhaus partial sums against the exact second moment and the
//! low-moment envelope.
//!
//! cargo run --release --example second_moments

use rmflab::arith::{divisor_alpha_sieve, partial_sum_moments_mc, theory_envelope};

fn main() -> rmflab::Result<()> {
    let qs = [0.5, 1.0];
    for alpha in [1.0, 1.5] {
        for x in [1_000u64, 10_000] {
            let d = divisor_alpha_sieve(x, alpha);
            let exact = (1..=x).map(|n| d.get(n) * d.get(n)).sum::<f64>() / x as f64;
            let est = partial_sum_moments_mc(x, alpha, &qs, 20_000, 1)?;
            println!(
                "alpha={alpha} x={x:>6}  q=1/2: {:.4}±{:.4} (envelope {:.3})  q=1: {:.4}±{:.4} (exact {exact:.4})",
                est[0].mean,
                est[0].stderr,
                theory_envelope(x as f64, alpha, 0.5),
                est[1].mean,
                est[1].stderr,
            );
        }
    }
    Ok(())
}
