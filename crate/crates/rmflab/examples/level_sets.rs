//! How often the high level set of the surrogate exceeds its size bound.
//!
//! cargo run --release --example level_sets

use rmflab::analysis::level_set_experiment;
use rmflab::field::Backend;

fn main() -> rmflab::Result<()> {
    let r = level_set_experiment(16, &[5.0, 10.0, 20.0, 50.0], &[0.0, 1.0], 5000, Backend::Gaussian, 4, None)?;
    for c in &r.cells {
        println!(
            "A={:>4} y={}: bound {:.3e}, failure {:.4} ± {:.4}{}",
            c.a,
            c.y,
            c.bound,
            c.failure.p_hat,
            c.failure.stderr,
            if c.degenerate { " (degenerate)" } else { "" }
        );
    }
    println!("failure ≈ C log A / A with C = {:.3}", r.rate_constant);
    for f in &r.flags {
        println!("note: {f}");
    }
    Ok(())
}
