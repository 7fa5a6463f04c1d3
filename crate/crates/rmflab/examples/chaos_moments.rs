//! Chaos moments: the arithmetic mean against its per-prime product formula,
//! and fractional moments of the surrogate at criticality.
//!
//! cargo run --release --example chaos_moments

use rmflab::field::{min_grid, Backend};
use rmflab::moments::{chaos_mean_oracle, chaos_moments_mc, table_for, ChaosConfig};

fn main() -> rmflab::Result<()> {
    let t = 2;
    let table = table_for(t)?;
    for gamma in [1.0, 2.0, 3.0] {
        let mut cfg = ChaosConfig::new(gamma, 1.0, t, Backend::Arithmetic);
        cfg.n_grid = min_grid(t);
        let est = chaos_moments_mc(&cfg, &[1.0], 4000, 5, Some(&table))?.remove(0);
        let oracle = chaos_mean_oracle(gamma, 0.5, t, &table)?;
        println!("t={t} gamma={gamma}: E Z = {:.5}±{:.5}, product formula {oracle:.5}", est.mean, est.stderr);
    }
    let qs = [0.25, 0.5, 0.75];
    for t in [8, 12, 16, 20] {
        let cfg = ChaosConfig::new(2.0, 1.0, t, Backend::Gaussian);
        let est = chaos_moments_mc(&cfg, &qs, 4000, 5, None)?;
        let row: Vec<String> = est.iter().map(|e| format!("{:.4}", e.mean)).collect();
        println!("surrogate t={t:>2} gamma=2: E Z^q for q={qs:?}: {}", row.join(", "));
    }
    Ok(())
}
