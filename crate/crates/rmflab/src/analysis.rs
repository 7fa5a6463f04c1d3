//! Extremes and level sets of the field, two-point tail checks, Gaussian
//! approximation of increments, and drifts under two-point tilts.

use rayon::prelude::*;
use serde::Serialize;

use crate::arith::{prime_stream_key, SteinhausSample};
use crate::error::{Error, Result};
use crate::field::kernel::Angles;
use crate::field::laws::{CountLaw, MaxTailLaw};
use crate::field::{default_grid, eval_s, uniform_grid, Backend, FieldGrid, FieldPlan, Tree};
use crate::num::neumaier;
use crate::primes::{scale_bounds, variance_profile_analytic, variance_profile_arithmetic, PrimeTable, DEFAULT_C0};
use crate::rng::{derive, sample_key, Stream};
use crate::stats::{ks_normal, linear_fit, LineFit};
use crate::walks::{good_set_mask, m_t, Barrier, Method, ProbEstimate};

/// Top levels kept explicit when a surrogate statistic is completed by a tabulated law.
pub const SPLIT_LEVEL: u32 = 9;
const LAW_DX: f64 = 0.01;
const BATCH: usize = 8;

/// Lipschitz constant in h of S_t(σ+ih): Σ_{C0<p<=exp(e^t)} (p^{-σ} + p^{-2σ}) log p.
pub fn field_lipschitz(table: &PrimeTable, sigma: f64, t: u32) -> f64 {
    let r = table.range(DEFAULT_C0 as f64, scale_bounds(t).1);
    neumaier(table.logs[r].iter().map(|&l| ((-sigma * l).exp() + (-2.0 * sigma * l).exp()) * l))
}

/// Grid argmax of S_t, refined by trisection when a sample is supplied.
///
/// Ties go to the lowest grid point. Each refinement round shrinks the step
/// by three and moves to the best of h*−d, h*, h*+d, so the value never
/// decreases. Surrogate fields are block constant and are never refined.
pub fn max_over_field(gridf: &FieldGrid, refine: u32, sample: Option<&SteinhausSample>) -> Result<(f64, f64)> {
    let top = gridf.top();
    if top.is_empty() {
        return Err(Error::Domain("empty grid".into()));
    }
    let mut best = 0;
    for (k, &v) in top.iter().enumerate() {
        if v > top[best] {
            best = k;
        }
    }
    let (mut h, mut v) = (gridf.grid[best], top[best]);
    let sample = match (gridf.backend, sample) {
        (Backend::Arithmetic, Some(s)) if refine > 0 && gridf.len() > 1 => s,
        _ => return Ok((h, v)),
    };
    let mut d = gridf.grid[1] - gridf.grid[0];
    for _ in 0..refine {
        d /= 3.0;
        for cand in [h - d, h + d] {
            if !(0.0..=1.0).contains(&cand) {
                continue;
            }
            let c = eval_s(sample, gridf.sigma, cand, gridf.t)?;
            if c > v {
                (h, v) = (cand, c);
            }
        }
    }
    Ok((h, v))
}

#[derive(Debug, Clone, Serialize)]
pub struct TailCurve {
    pub t: u32,
    pub backend: Backend,
    /// Offsets y; the thresholds are m(t) + y.
    pub abscissae: Vec<f64>,
    pub p_hat: Vec<ProbEstimate>,
    pub m_t: f64,
}

impl TailCurve {
    /// Least squares slope of log p_hat + y²/t against y over the listed y.
    pub fn corrected_slope(&self) -> Option<LineFit> {
        let pts: Vec<(f64, f64)> = self
            .abscissae
            .iter()
            .zip(&self.p_hat)
            .filter(|(_, p)| p.p_hat > 0.0)
            .map(|(&y, p)| (y, p.p_hat.ln() + y * y / self.t as f64))
            .collect();
        (pts.len() >= 2).then(|| {
            let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
            linear_fit(&x, &y)
        })
    }

    /// p_hat(y) / (y e^{−2y−y²/t}) at each y with p_hat > 0.
    pub fn prefactor_ratios(&self) -> Vec<(f64, f64)> {
        let t = self.t as f64;
        self.abscissae
            .iter()
            .zip(&self.p_hat)
            .filter(|(_, p)| p.p_hat > 0.0)
            .map(|(&y, p)| (y, p.p_hat / (y * (-2.0 * y - y * y / t).exp())))
            .collect()
    }
}

/// P(max_h S_t > m(t) + y) for each y on common realizations.
///
/// The surrogate keeps the top nine levels explicit and integrates the rest
/// exactly through the tabulated subtree maximum, so each realization
/// contributes a conditional probability that is nonincreasing in y. The
/// arithmetic backend takes the maximum over the default grid (8 points per
/// e^{-t}); `table` must reach exp(e^t).
pub fn max_tail_curve(
    t: u32,
    ys: &[f64],
    n: usize,
    backend: Backend,
    seed: u64,
    table: Option<&PrimeTable>,
) -> Result<TailCurve> {
    if n < 1000 {
        return Err(Error::Domain(format!("need at least 1000 samples, got {n}")));
    }
    let mt = m_t(t as f64);
    let rows: Vec<Vec<f64>> = match backend {
        Backend::Gaussian => {
            let profile = variance_profile_analytic(0.5, t, DEFAULT_C0);
            let tree = Tree::from_profile(&profile);
            let m = t.min(SPLIT_LEVEL);
            let law = MaxTailLaw::new(&tree, m, LAW_DX);
            (0..n)
                .into_par_iter()
                .map(|i| {
                    let key = tree.realization(sample_key(seed, i as u64));
                    let top = tree.level_values(key, m);
                    ys.iter().map(|&y| law.conditional(&top, mt + y)).collect()
                })
                .collect()
        }
        Backend::Arithmetic => {
            let table = table.ok_or_else(|| Error::Usage("arithmetic backend needs a prime table".into()))?;
            let plan = FieldPlan::new(table, 0.5, t, DEFAULT_C0)?;
            let grid = uniform_grid(default_grid(t));
            let maxima = keyed_batches(n, seed, |angles| {
                plan.grids(angles, &grid).iter().map(|g| g.top().iter().copied().fold(f64::MIN, f64::max)).collect()
            });
            maxima.iter().map(|&mx| ys.iter().map(|&y| (mx > mt + y) as u8 as f64).collect()).collect()
        }
    };
    let p_hat = (0..ys.len())
        .map(|k| {
            let w: Vec<f64> = rows.iter().map(|r| r[k]).collect();
            ProbEstimate::from_weights(&w, Method::Naive)
        })
        .collect();
    Ok(TailCurve { t, backend, abscissae: ys.to_vec(), p_hat, m_t: mt })
}

/// Run `f` over keyed samples 0..n in fixed batches, results in sample order.
fn keyed_batches<T: Send>(
    n: usize,
    seed: u64,
    f: impl Fn(&[Angles]) -> Vec<T> + Sync,
) -> Vec<T> {
    let idx: Vec<usize> = (0..n).collect();
    let out: Vec<Vec<T>> = idx
        .par_chunks(BATCH)
        .map(|chunk| {
            let angles: Vec<Angles> = chunk
                .iter()
                .map(|&i| Angles::Keyed(prime_stream_key(sample_key(seed, i as u64))))
                .collect();
            f(&angles)
        })
        .collect();
    out.into_iter().flatten().collect()
}

/// Fraction of grid points with S_t > threshold, optionally only counting the good set.
pub fn level_set_measure(gridf: &FieldGrid, threshold: f64, barrier: Option<&Barrier>) -> f64 {
    if gridf.is_empty() {
        return 0.0;
    }
    let mask = barrier.map(|b| good_set_mask(gridf, b));
    let hits = gridf
        .top()
        .iter()
        .enumerate()
        .filter(|&(k, &v)| v > threshold && mask.as_ref().is_none_or(|m| m[k]))
        .count();
    hits as f64 / gridf.len() as f64
}

#[derive(Debug, Clone, Serialize)]
pub struct LevelSetCell {
    pub a: f64,
    pub y: f64,
    pub threshold: f64,
    /// e^{-t} A |log A − y| e^{−2y−y²/t}.
    pub bound: f64,
    /// Frequency of realizations whose level set is larger than `bound`.
    pub failure: ProbEstimate,
    /// y > log A: the bound degenerates there.
    pub degenerate: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct LevelSetReport {
    pub t: u32,
    pub backend: Backend,
    pub samples: usize,
    pub cells: Vec<LevelSetCell>,
    /// Least squares C in failure ≈ C (log A)/A over the nondegenerate cells.
    pub rate_constant: f64,
    pub flags: Vec<String>,
}

/// Frequency with which meas{S_t > m(t) + y} exceeds e^{-t} A |log A − y| e^{−2y−y²/t}.
///
/// The surrogate counts leaves above the threshold: top levels explicitly,
/// subtrees through a tabulated count law truncated just above the largest
/// count any bound needs. Uniforms are shared across cells.
pub fn level_set_experiment(
    t: u32,
    a_list: &[f64],
    ys: &[f64],
    n: usize,
    backend: Backend,
    seed: u64,
    table: Option<&PrimeTable>,
) -> Result<LevelSetReport> {
    if let Some(a) = a_list.iter().find(|&&a| !(a > 1.0)) {
        return Err(Error::Domain(format!("A = {a} must exceed 1")));
    }
    if let Some(y) = ys.iter().find(|&&y| !(y.abs() < t as f64 / 2.0)) {
        return Err(Error::Domain(format!("|y| = {} must be below t/2 = {}", y.abs(), t as f64 / 2.0)));
    }
    let tf = t as f64;
    let mt = m_t(tf);
    let cells: Vec<(f64, f64, f64)> = a_list
        .iter()
        .flat_map(|&a| {
            ys.iter().map(move |&y| (a, y, (-tf).exp() * a * (a.ln() - y).abs() * (-2.0 * y - y * y / tf).exp()))
        })
        .collect();
    let mut flags = Vec::new();
    // per realization: the measure above each distinct threshold
    let measures: Vec<Vec<f64>> = match backend {
        Backend::Gaussian => {
            let profile = variance_profile_analytic(0.5, t, DEFAULT_C0);
            let tree = Tree::from_profile(&profile);
            let leaves = tree.count[t as usize] as f64;
            let need = cells.iter().map(|c| c.2 * leaves).fold(0.0, f64::max);
            let kmax = (need.floor() as usize + 2).max(2);
            let m = t.min(SPLIT_LEVEL);
            let law = CountLaw::new(&tree, m, kmax, LAW_DX);
            (0..n)
                .into_par_iter()
                .map(|i| {
                    let key = tree.realization(sample_key(seed, i as u64));
                    let top = tree.level_values(key, m);
                    let mut u = Stream::new(derive(key, 0x6c65_7665));
                    let draws: Vec<(f64, f64)> = top.iter().map(|_| (u.uniform(), u.uniform())).collect();
                    ys.iter()
                        .map(|&y| {
                            let count: usize =
                                top.iter().zip(&draws).map(|(&s, &(ur, uu))| law.sample(mt + y - s, ur, uu)).sum();
                            count as f64 / leaves
                        })
                        .collect()
                })
                .collect()
        }
        Backend::Arithmetic => {
            let table = table.ok_or_else(|| Error::Usage("arithmetic backend needs a prime table".into()))?;
            let plan = FieldPlan::new(table, 0.5, t, DEFAULT_C0)?;
            let grid = uniform_grid(default_grid(t));
            // A <= (log x)^{1/log log log x} with log x = e^t
            let cap = (tf / tf.ln()).exp();
            if a_list.iter().any(|&a| a > cap) {
                flags.push(format!("A above the arithmetic range cap {cap:.3}"));
            }
            keyed_batches(n, seed, |angles| {
                plan.grids(angles, &grid)
                    .iter()
                    .map(|g| ys.iter().map(|&y| level_set_measure(g, mt + y, None)).collect())
                    .collect()
            })
        }
    };
    let out: Vec<LevelSetCell> = cells
        .iter()
        .enumerate()
        .map(|(c, &(a, y, bound))| {
            let k = c % ys.len();
            let w: Vec<f64> = measures.iter().map(|m| (m[k] > bound) as u8 as f64).collect();
            LevelSetCell {
                a,
                y,
                threshold: mt + y,
                bound,
                failure: ProbEstimate::from_weights(&w, Method::Naive),
                degenerate: y > a.ln(),
            }
        })
        .collect();
    if out.iter().any(|c| c.degenerate) {
        flags.push("some cells have y > log A, where the bound degenerates".into());
    }
    if backend == Backend::Gaussian {
        flags.push("surrogate mode treats A as unrestricted".into());
    }
    let (num, den) = out
        .iter()
        .filter(|c| !c.degenerate)
        .map(|c| {
            let r = c.a.ln() / c.a;
            (c.failure.p_hat * r, r * r)
        })
        .fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    Ok(LevelSetReport {
        t,
        backend,
        samples: n,
        cells: out,
        rate_constant: if den > 0.0 { num / den } else { 0.0 },
        flags,
    })
}

fn check_table(table: &PrimeTable, j: u32) -> Result<()> {
    let need = scale_bounds(j).1;
    if need > table.limit as f64 {
        return crate::error::capacity(format!(
            "j = {j} needs primes up to exp(e^{j}) ≈ {need:.3e}; table stops at {}",
            table.limit
        ));
    }
    Ok(())
}

/// Kolmogorov–Smirnov distance between N increments Y_j = Σ_{p∈I_j} X_p(σ)
/// and Normal(0, V_j(σ)). The whole of I_j is used, head primes included.
pub fn berry_esseen_distance(j: u32, sigma: f64, n: usize, seed: u64, table: &PrimeTable) -> Result<f64> {
    if j == 0 {
        return Err(Error::Domain("j must be at least 1".into()));
    }
    check_table(table, j)?;
    let plan = FieldPlan::new(table, sigma, j, 1)?;
    let var = variance_profile_arithmetic(sigma, j, 1, table).get(j);
    let idx: Vec<u64> = (0..n as u64).collect();
    let ys: Vec<f64> = idx
        .par_chunks(64)
        .flat_map_iter(|c| {
            let keys: Vec<u64> = c.iter().map(|&i| prime_stream_key(sample_key(seed, i))).collect();
            plan.increments_at_zero(j, &keys)
        })
        .collect();
    Ok(ks_normal(&ys, var))
}

/// S_j at each of `hs` for N keyed samples, `out[i][k]`.
fn field_points(j: u32, sigma: f64, hs: &[f64], n: usize, seed: u64, table: &PrimeTable) -> Result<Vec<Vec<f64>>> {
    check_table(table, j)?;
    let plan = FieldPlan::new(table, sigma, j, DEFAULT_C0)?;
    Ok(keyed_batches(n, seed, |angles| plan.points(angles, hs)))
}

#[derive(Debug, Clone, Serialize)]
pub struct MgfPoint {
    pub c: f64,
    pub lambda: f64,
    pub mgf: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TwoPointReport {
    pub j: u32,
    pub sigma: f64,
    pub h1: f64,
    pub h2: f64,
    pub v1: f64,
    pub v2: f64,
    /// P(S_j(σ) >= V1, S_j(σ+ih1) − S_j(σ+ih2) >= V2).
    pub joint: ProbEstimate,
    pub marginal_level: ProbEstimate,
    pub marginal_diff: ProbEstimate,
    /// Largest c′ with exp(−V1²/j − c′ V2^{3/2}/(e^j |h2−h1|)) >= p_hat; infinite when p_hat = 0.
    pub c_prime_max: f64,
    pub mgf: Vec<MgfPoint>,
}

/// Joint tail of a level and a two-point difference, plus the difference's MGF
/// at λ = c |h1−h2|^{-1} e^{-j} for c ∈ {0.5, 1}.
#[allow(clippy::too_many_arguments)]
pub fn two_point_tail_check(
    j: u32,
    sigma: f64,
    h1: f64,
    h2: f64,
    v1: f64,
    v2: f64,
    n: usize,
    seed: u64,
    table: &PrimeTable,
) -> Result<TwoPointReport> {
    let cap = (-(j as f64) - 1.0).exp();
    if h1.abs() > cap * (1.0 + 1e-12) || h2.abs() > cap * (1.0 + 1e-12) {
        return Err(Error::Domain(format!("|h1|, |h2| must be at most e^(-j-1) = {cap:.4e}")));
    }
    let pts = field_points(j, sigma, &[0.0, h1, h2], n, seed, table)?;
    let dh = (h1 - h2).abs();
    let ind = |f: &dyn Fn(&Vec<f64>) -> bool| -> ProbEstimate {
        let w: Vec<f64> = pts.iter().map(|p| f(p) as u8 as f64).collect();
        ProbEstimate::from_weights(&w, Method::Naive)
    };
    let joint = ind(&|p| p[0] >= v1 && p[1] - p[2] >= v2);
    let marginal_level = ind(&|p| p[0] >= v1);
    let marginal_diff = ind(&|p| p[1] - p[2] >= v2);
    let scale = v2.max(0.0).powf(1.5) / ((j as f64).exp() * dh);
    let c_prime_max = if joint.p_hat > 0.0 && scale > 0.0 {
        (-v1 * v1 / j as f64 - joint.p_hat.ln()) / scale
    } else {
        f64::INFINITY
    };
    let mgf = [0.5, 1.0]
        .iter()
        .map(|&c| {
            let lambda = if dh > 0.0 { c / dh * (-(j as f64)).exp() } else { 0.0 };
            let w: Vec<f64> = pts.iter().map(|p| (lambda * (p[1] - p[2])).exp()).collect();
            let e = ProbEstimate::from_weights(&w, Method::Naive);
            MgfPoint { c, lambda, mgf: crate::num::pairwise(&w) / n as f64, stderr: e.stderr }
        })
        .collect();
    Ok(TwoPointReport { j, sigma, h1, h2, v1, v2, joint, marginal_level, marginal_diff, c_prime_max, mgf })
}

#[derive(Debug, Clone, Serialize)]
pub struct DriftEstimate {
    /// E_Q S_j(σ) under the tilt e^{λ(S_j(σ+iv) − S_j(σ+iv*))}.
    pub drift: f64,
    pub stderr: f64,
    pub ess: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

/// Self-normalized importance estimate of the mean of S_j(σ) under the two-point tilt.
#[allow(clippy::too_many_arguments)]
pub fn tilt_drift_check(
    j: u32,
    sigma: f64,
    v: f64,
    vstar: f64,
    lambda: f64,
    n: usize,
    seed: u64,
    table: &PrimeTable,
) -> Result<DriftEstimate> {
    let dv = (v - vstar).abs();
    let cap = if dv > 0.0 { (-(j as f64)).exp() / dv } else { f64::INFINITY };
    if lambda.abs() > cap * (1.0 + 1e-12) {
        return Err(Error::Domain(format!("lambda = {lambda} above |v−v*|^(-1) e^(-j) = {cap:.4}")));
    }
    let pts = field_points(j, sigma, &[0.0, v, vstar], n, seed, table)?;
    let logw: Vec<f64> = pts.iter().map(|p| lambda * (p[1] - p[2])).collect();
    let mx = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logw.iter().map(|l| (l - mx).exp()).collect();
    let sw = neumaier(w.iter().copied());
    let drift = neumaier(w.iter().zip(&pts).map(|(w, p)| w * p[0])) / sw;
    let var = neumaier(w.iter().zip(&pts).map(|(w, p)| (w * (p[0] - drift)).powi(2))) / (sw * sw);
    let ess = sw * sw / neumaier(w.iter().map(|w| w * w));
    let warning = (ess < 50.0).then(|| format!("effective sample size {ess:.1} below 50"));
    Ok(DriftEstimate { drift, stderr: var.sqrt(), ess, warning })
}

#[derive(Debug, Clone, Serialize)]
pub struct LocalMaxPoint {
    pub v: f64,
    pub p_hat: ProbEstimate,
    /// exp(−V²/j).
    pub shape: f64,
}

/// P(max_{h∈[0,e^{-j})} S_j(σ+ih) > V) for each V, the max taken over
/// `points` equally spaced h in [0, e^{-j}).
pub fn local_max_tail(
    j: u32,
    sigma: f64,
    vs: &[f64],
    points: usize,
    n: usize,
    seed: u64,
    table: &PrimeTable,
) -> Result<Vec<LocalMaxPoint>> {
    let width = (-(j as f64)).exp();
    let hs: Vec<f64> = (0..points).map(|k| width * k as f64 / points as f64).collect();
    let pts = field_points(j, sigma, &hs, n, seed, table)?;
    let maxima: Vec<f64> = pts.iter().map(|p| p.iter().copied().fold(f64::MIN, f64::max)).collect();
    Ok(vs
        .iter()
        .map(|&v| {
            let w: Vec<f64> = maxima.iter().map(|&m| (m > v) as u8 as f64).collect();
            LocalMaxPoint { v, p_hat: ProbEstimate::from_weights(&w, Method::Naive), shape: (-v * v / j as f64).exp() }
        })
        .collect())
}

/// Smallest C with p_hat <= C·shape on `cal`, and whether that C covers `held`.
pub fn calibrate_shape(cal: &[LocalMaxPoint], held: &[LocalMaxPoint]) -> (f64, bool) {
    let c = cal.iter().map(|p| p.p_hat.p_hat / p.shape).fold(0.0, f64::max);
    let ok = held.iter().all(|p| p.p_hat.p_hat - 4.0 * p.p_hat.stderr <= c * p.shape);
    (c, ok)
}

/// Pointwise Monte Carlo P(S_t(σ) > V) from the same keyed samples as a grid run.
pub fn pointwise_tail(gridfs: &[FieldGrid], threshold: f64) -> ProbEstimate {
    let w: Vec<f64> = gridfs.iter().map(|g| (g.top()[0] > threshold) as u8 as f64).collect();
    ProbEstimate::from_weights(&w, Method::Naive)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{gaussian_surrogate_grid, min_grid};
    use crate::primes::sieve_primes;
    use crate::stats::normal_sf;

    fn table2() -> PrimeTable {
        sieve_primes(scale_bounds(2).1 as u64 + 1, false).unwrap()
    }

    #[test]
    fn zero_field_maximum_is_low_tie() {
        let g = FieldGrid::zeros(0.5, 3, 40, Backend::Arithmetic);
        assert_eq!(max_over_field(&g, 0, None).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn surrogate_refinement_is_a_no_op() {
        let p = variance_profile_analytic(0.5, 6, DEFAULT_C0);
        let g = gaussian_surrogate_grid(4, &p, 2000).unwrap();
        let a = max_over_field(&g, 0, None).unwrap();
        let b = max_over_field(&g, 5, None).unwrap();
        assert_eq!(a, b);
        assert!(g.top().iter().all(|&v| v <= a.1));
    }

    #[test]
    fn arithmetic_refinement_is_bounded_by_lipschitz() {
        let tb = table2();
        let lip = field_lipschitz(&tb, 0.5, 2);
        for seed in 0..4 {
            let s = SteinhausSample::lazy(&tb, seed);
            let g = crate::field::eval_grid(&s, 0.5, 2, 30).unwrap();
            let (_, gmax) = max_over_field(&g, 0, None).unwrap();
            let (_, rmax) = max_over_field(&g, 6, Some(&s)).unwrap();
            let spacing = g.grid[1] - g.grid[0];
            assert!(rmax >= gmax && rmax - gmax <= lip * spacing, "{gmax} {rmax} {lip}");
        }
    }

    #[test]
    fn level_set_trivial_thresholds_and_monotone() {
        let p = variance_profile_analytic(0.5, 6, DEFAULT_C0);
        let g = gaussian_surrogate_grid(9, &p, 1000).unwrap();
        let lo = g.top().iter().copied().fold(f64::MAX, f64::min);
        let hi = g.top().iter().copied().fold(f64::MIN, f64::max);
        assert_eq!(level_set_measure(&g, lo - 1.0, None), 1.0);
        assert_eq!(level_set_measure(&g, hi, None), 0.0);
        let ms: Vec<f64> = (0..50).map(|k| level_set_measure(&g, lo + k as f64 * 0.2, None)).collect();
        assert!(ms.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn level_set_mean_matches_pointwise_tail() {
        // E meas{S_t > V} = P(S_t(σ) > V) by Fubini, for the surrogate and arithmetic fields
        let p = variance_profile_analytic(0.5, 7, DEFAULT_C0);
        let sd = p.field_total().sqrt();
        for v in [0.0, 1.0, 2.5] {
            let m: Vec<f64> = (0..400)
                .into_par_iter()
                .map(|s| level_set_measure(&gaussian_surrogate_grid(s, &p, 2000).unwrap(), v, None))
                .collect();
            let (mean, var) = crate::stats::mean_var(&m);
            let want = normal_sf(v / sd);
            assert!((mean - want).abs() < 4.0 * (var / 400.0).sqrt() + 1e-3, "{v}: {mean} vs {want}");
        }
        let tb = table2();
        let plan = FieldPlan::new(&tb, 0.5, 2, DEFAULT_C0).unwrap();
        let grid = uniform_grid(min_grid(2) * 4);
        let grids: Vec<FieldGrid> = keyed_batches(2000, 3, |a| plan.grids(a, &grid));
        let v = 0.5;
        let m: Vec<f64> = grids.iter().map(|g| level_set_measure(g, v, None)).collect();
        let (mean, var) = crate::stats::mean_var(&m);
        let pt = pointwise_tail(&grids, v);
        let se = (var / 2000.0 + pt.stderr * pt.stderr).sqrt();
        assert!((mean - pt.p_hat).abs() < 4.0 * se, "{mean} vs {}", pt.p_hat);
    }

    #[test]
    fn tail_curve_is_monotone_and_starts_near_one() {
        let ys = [-m_t(12.0), 0.0, 1.0, 2.0, 3.0];
        let c = max_tail_curve(12, &ys, 1000, Backend::Gaussian, 5, None).unwrap();
        assert!(c.p_hat[0].p_hat > 0.99);
        assert!(c.p_hat.windows(2).all(|w| w[1].p_hat <= w[0].p_hat));
    }

    #[test]
    fn tail_curve_matches_explicit_surrogate_maximum() {
        let t = 11;
        let ys = [-1.0, 0.0, 1.0];
        let c = max_tail_curve(t, &ys, 2000, Backend::Gaussian, 8, None).unwrap();
        let p = variance_profile_analytic(0.5, t, DEFAULT_C0);
        let tree = Tree::from_profile(&p);
        let maxima: Vec<f64> = (0..2000u64)
            .into_par_iter()
            .map(|i| {
                let k = tree.realization(sample_key(1234, i));
                tree.level_values(k, t).into_iter().fold(f64::MIN, f64::max)
            })
            .collect();
        for (y, est) in ys.iter().zip(&c.p_hat) {
            let hits = maxima.iter().filter(|&&m| m > c.m_t + y).count() as f64 / 2000.0;
            let se = (hits * (1.0 - hits) / 2000.0).sqrt() + est.stderr;
            assert!((hits - est.p_hat).abs() < 4.0 * se + 1e-3, "{y}: {hits} vs {}", est.p_hat);
        }
    }

    #[test]
    fn level_set_experiment_bookkeeping() {
        let r = level_set_experiment(12, &[5.0, 20.0], &[0.0, 2.0], 300, Backend::Gaussian, 1, None).unwrap();
        assert_eq!(r.cells.len(), 4);
        assert!(r.cells.iter().any(|c| c.degenerate));
        assert!(level_set_experiment(12, &[0.5], &[0.0], 300, Backend::Gaussian, 1, None).is_err());
        assert!(level_set_experiment(12, &[5.0], &[7.0], 300, Backend::Gaussian, 1, None).is_err());
    }

    #[test]
    fn surrogate_level_counts_match_explicit_leaves() {
        let t = 11;
        let (a, y) = (4.0, 0.5);
        let r = level_set_experiment(t, &[a], &[y], 2000, Backend::Gaussian, 2, None).unwrap();
        let p = variance_profile_analytic(0.5, t, DEFAULT_C0);
        let tree = Tree::from_profile(&p);
        let leaves = tree.count[t as usize] as f64;
        let thr = m_t(t as f64) + y;
        let hits: Vec<f64> = (0..2000u64)
            .into_par_iter()
            .map(|i| {
                let k = tree.realization(sample_key(77, i));
                let c = tree.level_values(k, t).into_iter().filter(|&v| v > thr).count() as f64;
                (c / leaves > r.cells[0].bound) as u8 as f64
            })
            .collect();
        let f = hits.iter().sum::<f64>() / 2000.0;
        let est = &r.cells[0].failure;
        let se = (f * (1.0 - f) / 2000.0).sqrt() + est.stderr;
        assert!((f - est.p_hat).abs() < 4.0 * se + 1e-3, "{f} vs {}", est.p_hat);
    }

    #[test]
    fn berry_esseen_small_scales() {
        let tb = table2();
        let d1 = berry_esseen_distance(1, 0.5, 4000, 1, &tb).unwrap();
        let d2 = berry_esseen_distance(2, 0.5, 4000, 1, &tb).unwrap();
        assert!(d2 < d1, "{d1} {d2}");
        assert!(d2 < 0.05);
    }

    #[test]
    fn two_point_basics() {
        let tb = table2();
        let h = (-3f64).exp();
        let r = two_point_tail_check(2, 0.5, h, -h, 0.0, 0.0, 4000, 2, &tb).unwrap();
        assert!((r.joint.p_hat - 0.25).abs() < 0.05, "{}", r.joint.p_hat);
        assert!(r.mgf.iter().all(|m| m.mgf.is_finite() && m.mgf > 0.9));
        let z = two_point_tail_check(2, 0.5, h, h, 0.0, 0.0, 200, 2, &tb).unwrap();
        assert_eq!(z.mgf[0].lambda, 0.0);
        assert_eq!(z.mgf[0].mgf, 1.0);
        assert!(two_point_tail_check(2, 0.5, 0.5, 0.0, 0.0, 0.0, 200, 2, &tb).is_err());
    }

    #[test]
    fn drift_is_zero_untilted_and_flips_sign() {
        let tb = table2();
        let d0 = tilt_drift_check(2, 0.5, 0.0, 0.3, 0.0, 4000, 3, &tb).unwrap();
        assert!(d0.drift.abs() < 4.0 * d0.stderr);
        let cap = (-2f64).exp() / 0.3;
        let a = tilt_drift_check(2, 0.5, 0.0, 0.3, cap, 4000, 3, &tb).unwrap();
        let b = tilt_drift_check(2, 0.5, 0.3, 0.0, cap, 4000, 3, &tb).unwrap();
        assert!(a.drift > 0.0 && b.drift < 0.0, "{} {}", a.drift, b.drift);
        assert!(tilt_drift_check(2, 0.5, 0.0, 0.3, 2.0 * cap, 100, 3, &tb).is_err());
    }
}
