//! Scale increments of the arithmetic field: Kolmogorov distance to the
//! Gaussian, prime sums against their main terms, and the variance profile.
//!
//! cargo run --release --example scale_increments

use rmflab::analysis::berry_esseen_distance;
use rmflab::moments::table_for;
use rmflab::primes::{
    mertens_sum, prime_power_sum, prime_sum_main_term, sieve_primes, variance_profile_analytic,
    DEFAULT_C0,
};

fn main() -> rmflab::Result<()> {
    let table = table_for(2)?;
    for j in 1..=2 {
        println!("KS(Y_{j}, normal) = {:.4}", berry_esseen_distance(j, 0.5, 20_000, 1, &table)?);
    }
    let big = sieve_primes(1_000_000, false)?;
    let m = mertens_sum(1e3, 1e6, &big)?;
    println!("Σ 1/p on (1e3, 1e6]: {m:.5} vs log log ratio {:.5}", 1e6f64.ln().ln() - 1e3f64.ln().ln());
    let s = prime_power_sum(1e3, 1e6, 0.49, &big)?;
    println!("Σ p^-0.98 on (1e3, 1e6]: {s:.5} vs Ei main term {:.5}", prime_sum_main_term(1e3, 1e6, 0.98));
    let prof = variance_profile_analytic(0.5, 12, DEFAULT_C0);
    let v: Vec<String> = (1..=12).map(|j| format!("{:.3}", prof.get(j))).collect();
    println!("V_j, j = 1..12: {}", v.join(" "));
    Ok(())
}
