//! One arithmetic realization of the field next to a Gaussian surrogate with
//! matched scale variances.
//!
//! cargo run --release --example euler_field

use rmflab::arith::SteinhausSample;
use rmflab::field::{default_grid, eval_grid, gaussian_surrogate_grid};
use rmflab::moments::table_for;
use rmflab::primes::{variance_profile, DEFAULT_C0};

fn main() -> rmflab::Result<()> {
    let t = 3;
    let table = table_for(t)?;
    println!("{} primes up to {}", table.len(), table.limit);
    let sample = SteinhausSample::lazy(&table, 11);
    let arith = eval_grid(&sample, 0.5, t, default_grid(t))?;
    let profile = variance_profile(0.5, t, DEFAULT_C0, Some(&table));
    let gauss = gaussian_surrogate_grid(11, &profile, default_grid(t))?;
    for j in 1..=t {
        println!("V_{j} = {:.4} (head-cut {:.4})", profile.get(j), profile.field(j));
    }
    println!("{:>8} {:>10} {:>10}", "h", "arith S_t", "gauss S_t");
    for k in (0..arith.len()).step_by(arith.len() / 16) {
        println!("{:>8.4} {:>10.4} {:>10.4}", arith.grid[k], arith.top()[k], gauss.top()[k]);
    }
    Ok(())
}
