//! Command line front end: argument parsing, config files, output records
//! and the validation suite.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use crate::analysis::{
    calibrate_shape, level_set_experiment, local_max_tail, max_tail_curve, tilt_drift_check, two_point_tail_check,
    berry_esseen_distance,
};
use crate::arith::{divisor_alpha_oracle, divisor_alpha_sieve, partial_sum_moment_mc, SteinhausSample};
use crate::error::{Error, Result};
use crate::field::{default_grid, eval_grid, gaussian_surrogate_grid, Backend, FieldGrid};
use crate::moments::{
    chaos_mean_oracle, chaos_moments_mc, pseudomoment_diagonal, pseudomoment_mc, table_for, ChaosConfig,
    PseudoConfig,
};
use crate::primes::{mertens_sum, prime_power_sum, prime_sum_main_term, sieve_primes, variance_profile, DEFAULT_C0};
use crate::walks::{ballot_bound, ballot_mc, tilted_walk_mc, Barrier, BarrierKind, BallotEvent, Method};

pub const SCHEMA_VERSION: u32 = 1;
pub const THREADS_ENV: &str = "RMFLAB_THREADS";

/// Exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "rmflab", version, about = "Random multiplicative function and Euler-product field experiments")]
pub struct Cli {
    /// Worker threads; defaults to $RMFLAB_THREADS, then to all cores.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Master seed.
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,
    /// Output JSON path; curves and grids also get a CSV next to it. Standard output when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Plain-text `key = value` defaults; flags given on the command line win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// E|Σ_{n<=x} d_α(n) f(n)|^{2q} / x^q over Steinhaus samples.
    Moments(MomentsArgs),
    /// Moments of the chaos integral e^{-t} ∫ e^{γ S_t(σ+ih)} dh.
    Chaos(ChaosArgs),
    /// One realization of the field on a grid (CSV: h, S_1, ..., S_t).
    EulerField(FieldArgs),
    /// Tail of max_h S_t above m(t) + y.
    MaxStats(MaxArgs),
    /// How often the level set above m(t) + y is larger than its bound.
    LevelSets(LevelArgs),
    /// Ballot probability of the barrier walk, naive or tilted.
    Ballot(BallotArgs),
    /// Pseudomoments of Σ_{n<=x} d_α(n) n^{-1/2-it} with t uniform on [T, 2T].
    Pseudomoments(PseudoArgs),
    /// Run the built-in checks; exit 2 if any fails.
    Validate(ValidateArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct MomentsArgs {
    #[arg(long)]
    pub x: u64,
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    pub q: f64,
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct ChaosArgs {
    #[arg(long, default_value_t = 2.0)]
    pub gamma: f64,
    #[arg(long, default_value_t = 1.0)]
    pub q: f64,
    #[arg(long)]
    pub t: u32,
    #[arg(long, default_value_t = 0.5)]
    pub sigma: f64,
    #[arg(long, default_value = "gaussian")]
    pub backend: Backend,
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    /// Grid points on [0, 1]; defaults to 8 per e^{-t}.
    #[arg(long)]
    pub grid: Option<usize>,
    /// Restrict to the good set of the standard barrier with this A.
    #[arg(long = "barrier-A")]
    #[serde(rename = "barrier_A")]
    pub barrier_a: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
pub struct FieldArgs {
    #[arg(long)]
    pub t: u32,
    #[arg(long, default_value_t = 0.5)]
    pub sigma: f64,
    #[arg(long, default_value = "gaussian")]
    pub backend: Backend,
    #[arg(long)]
    pub grid: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
pub struct MaxArgs {
    #[arg(long)]
    pub t: u32,
    /// Offsets y, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5,6,7,8")]
    pub y: Vec<f64>,
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,
    #[arg(long, default_value = "gaussian")]
    pub backend: Backend,
}

#[derive(Debug, Args, Serialize)]
pub struct LevelArgs {
    #[arg(long)]
    pub t: u32,
    #[arg(long = "A", value_delimiter = ',', default_value = "5,10,20,50")]
    #[serde(rename = "A")]
    pub a: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub y: Vec<f64>,
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,
    #[arg(long, default_value = "gaussian")]
    pub backend: Backend,
}

#[derive(Debug, Args, Serialize)]
pub struct BallotArgs {
    #[arg(long)]
    pub t: u32,
    #[arg(long = "A")]
    #[serde(rename = "A")]
    pub a: f64,
    #[arg(long)]
    pub k: u32,
    #[arg(long)]
    pub w: f64,
    #[arg(long, default_value = "standard")]
    pub kind: BarrierKind,
    #[arg(long, default_value = "tilted")]
    pub method: Method,
    #[arg(long, default_value_t = 100_000)]
    pub samples: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct PseudoArgs {
    #[arg(long)]
    pub x: u64,
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    pub q: f64,
    /// Defaults to x³.
    #[arg(long = "T")]
    #[serde(rename = "T")]
    pub big_t: Option<f64>,
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct ValidateArgs {
    /// Reduced sample sizes and depths.
    #[arg(long)]
    pub quick: bool,
}

/// Resolved parameters of a run, echoed in every record.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub command: String,
    pub params: Value,
    pub master_seed: u64,
    pub threads: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_path: Option<String>,
}

/// A command's result: a JSON record and optionally a CSV table.
pub struct Output {
    pub record: Value,
    pub csv: Option<String>,
    /// Whether every check passed; only `validate` sets this to false.
    pub passed: bool,
}

impl Output {
    fn record(record: Value) -> Self {
        Output { record, csv: None, passed: true }
    }
}

/// Parse a `key = value` file. Blank lines and lines starting with `#` are skipped.
pub fn read_config(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Usage(format!("{}:{}: expected key = value", path.display(), i + 1)))?;
        out.insert(k.trim().trim_start_matches("--").to_string(), v.trim().to_string());
    }
    Ok(out)
}

/// Insert config-file defaults for flags not given on the command line.
fn merge_config(argv: &[String], config: &BTreeMap<String, String>) -> Vec<String> {
    let sub = argv.iter().skip(1).position(|a| !a.starts_with('-') && is_subcommand(a)).map(|p| p + 1);
    let Some(at) = sub else { return argv.to_vec() };
    let mut out: Vec<String> = argv[..=at].to_vec();
    let given = |k: &str| {
        let flag = format!("--{k}");
        argv.iter().any(|a| *a == flag || a.starts_with(&format!("{flag}=")))
    };
    for (k, v) in config {
        if k == "config" || given(k) {
            continue;
        }
        match v.as_str() {
            "true" => out.push(format!("--{k}")),
            "false" => {}
            _ => {
                out.push(format!("--{k}"));
                out.push(v.clone());
            }
        }
    }
    out.extend_from_slice(&argv[at + 1..]);
    out
}

fn is_subcommand(s: &str) -> bool {
    matches!(
        s,
        "moments" | "chaos" | "euler-field" | "max-stats" | "level-sets" | "ballot" | "pseudomoments" | "validate"
    )
}

fn config_path(argv: &[String]) -> Option<PathBuf> {
    argv.iter().enumerate().find_map(|(i, a)| {
        if a == "--config" {
            argv.get(i + 1).map(PathBuf::from)
        } else {
            a.strip_prefix("--config=").map(PathBuf::from)
        }
    })
}

/// Thread count from the flag, then $RMFLAB_THREADS, then the machine.
pub fn resolve_threads(flag: Option<usize>) -> Result<usize> {
    if let Some(n) = flag {
        return Ok(n.max(1));
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map(|n| n.max(1))
            .map_err(|_| Error::Usage(format!("{THREADS_ENV}='{v}' is not a thread count"))),
        Err(_) => Ok(std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)),
    }
}

/// Entry point used by the binary. Returns the exit code.
pub fn run(argv: &[String]) -> i32 {
    if argv.len() <= 1 {
        let mut cmd = <Cli as clap::CommandFactory>::command();
        let _ = cmd.print_help();
        return EXIT_USAGE;
    }
    let argv = match config_path(argv) {
        Some(p) => match read_config(&p) {
            Ok(cfg) => merge_config(argv, &cfg),
            Err(e) => {
                eprintln!("error: {e}");
                return EXIT_USAGE;
            }
        },
        None => argv.to_vec(),
    };
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(out) => match emit(&cli, &out) {
            Ok(()) if out.passed => EXIT_OK,
            Ok(()) => EXIT_VALIDATION,
            Err(e) => {
                eprintln!("error: {e}");
                EXIT_USAGE
            }
        },
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
    }
}

/// Run a parsed command on a pool of the resolved size.
pub fn execute(cli: &Cli) -> Result<Output> {
    let threads = resolve_threads(cli.threads)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Usage(format!("thread pool: {e}")))?;
    let (name, params) = describe(&cli.command);
    let rc = RunConfig {
        command: name.into(),
        params,
        master_seed: cli.seed,
        threads,
        out_path: cli.out.as_ref().map(|p| p.display().to_string()),
    };
    let mut out = pool.install(|| dispatch(&cli.command, cli.seed))?;
    let result = std::mem::take(&mut out.record);
    out.record = json!({
        "schema_version": SCHEMA_VERSION,
        "config": rc,
        "result": result,
        "timestamp": timestamp(),
    });
    Ok(out)
}

fn timestamp() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn describe(c: &Command) -> (&'static str, Value) {
    let v = |x: Result<Value>| x.unwrap_or(Value::Null);
    match c {
        Command::Moments(a) => ("moments", v(to_value(a))),
        Command::Chaos(a) => ("chaos", v(to_value(a))),
        Command::EulerField(a) => ("euler-field", v(to_value(a))),
        Command::MaxStats(a) => ("max-stats", v(to_value(a))),
        Command::LevelSets(a) => ("level-sets", v(to_value(a))),
        Command::Ballot(a) => ("ballot", v(to_value(a))),
        Command::Pseudomoments(a) => ("pseudomoments", v(to_value(a))),
        Command::Validate(a) => ("validate", v(to_value(a))),
    }
}

fn to_value<T: Serialize>(x: &T) -> Result<Value> {
    serde_json::to_value(x).map_err(|e| Error::Numeric(format!("serialization: {e}")))
}

fn dispatch(c: &Command, seed: u64) -> Result<Output> {
    match c {
        Command::Moments(a) => {
            let est = partial_sum_moment_mc(a.x, a.alpha, a.q, a.samples, seed)?;
            Ok(Output::record(to_value(&est)?))
        }
        Command::Chaos(a) => {
            let mut cfg = ChaosConfig::new(a.gamma, a.q, a.t, a.backend);
            cfg.sigma = a.sigma;
            cfg.n_grid = a.grid.unwrap_or(default_grid(a.t));
            cfg.barrier = a.barrier_a.map(|x| Barrier::new(BarrierKind::Standard, x, a.t));
            let table = match a.backend {
                Backend::Arithmetic => Some(table_for(a.t)?),
                Backend::Gaussian => None,
            };
            let est = chaos_moments_mc(&cfg, &[a.q], a.samples, seed, table.as_ref())?.remove(0);
            Ok(Output::record(to_value(&est)?))
        }
        Command::EulerField(a) => {
            let n = a.grid.unwrap_or(default_grid(a.t));
            let g = match a.backend {
                Backend::Arithmetic => {
                    let table = table_for(a.t)?;
                    let s = SteinhausSample::lazy(&table, seed);
                    eval_grid(&s, a.sigma, a.t, n)?
                }
                Backend::Gaussian => {
                    let profile = variance_profile(a.sigma, a.t, DEFAULT_C0, None);
                    gaussian_surrogate_grid(seed, &profile, n)?
                }
            };
            let top = g.top();
            let (kmax, vmax) = top
                .iter()
                .enumerate()
                .fold((0, f64::MIN), |(bk, bv), (k, &v)| if v > bv { (k, v) } else { (bk, bv) });
            let record = json!({
                "points": g.len(),
                "max": vmax,
                "argmax": g.grid[kmax],
                "mean_top": top.iter().sum::<f64>() / top.len() as f64,
            });
            Ok(Output { record, csv: Some(grid_csv(&g)), passed: true })
        }
        Command::MaxStats(a) => {
            let table = match a.backend {
                Backend::Arithmetic => Some(table_for(a.t)?),
                Backend::Gaussian => None,
            };
            let curve = max_tail_curve(a.t, &a.y, a.samples, a.backend, seed, table.as_ref())?;
            let mut csv = format!("# schema_version={SCHEMA_VERSION}\ny,threshold,p_hat,stderr\n");
            for (y, p) in curve.abscissae.iter().zip(&curve.p_hat) {
                csv.push_str(&format!("{y},{},{},{}\n", curve.m_t + y, p.p_hat, p.stderr));
            }
            let record = json!({
                "curve": curve,
                "corrected_slope": curve.corrected_slope(),
                "prefactor_ratios": curve.prefactor_ratios(),
            });
            Ok(Output { record, csv: Some(csv), passed: true })
        }
        Command::LevelSets(a) => {
            let table = match a.backend {
                Backend::Arithmetic => Some(table_for(a.t)?),
                Backend::Gaussian => None,
            };
            let r = level_set_experiment(a.t, &a.a, &a.y, a.samples, a.backend, seed, table.as_ref())?;
            let mut csv = format!("# schema_version={SCHEMA_VERSION}\nA,y,bound,failure,stderr,degenerate\n");
            for c in &r.cells {
                csv.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    c.a, c.y, c.bound, c.failure.p_hat, c.failure.stderr, c.degenerate
                ));
            }
            Ok(Output { record: to_value(&r)?, csv: Some(csv), passed: true })
        }
        Command::Ballot(a) => {
            let b = Barrier::new(a.kind, a.a, a.t);
            let profile = variance_profile(0.5, a.t, DEFAULT_C0, None);
            let ev = BallotEvent::new(a.k, a.w);
            let est = match a.method {
                Method::Naive => ballot_mc(&b, &profile, &ev, a.samples, seed)?,
                Method::Tilted => tilted_walk_mc(&b, &profile, &ev, a.samples, seed)?,
            };
            let drift = profile.half_drift();
            let flags: Vec<String> = (!(drift < 1.0))
                .then(|| format!("max_k |Σ V_j − k/2| = {drift:.3} is outside the window 1"))
                .into_iter()
                .collect();
            let record = json!({
                "estimate": est,
                "variance_drift": drift,
                "flags": flags,
                "barrier": b,
                "upper_at_k": b.upper(a.k),
                "bound_shape": ballot_bound(&b, a.k, a.w, 1.0, 1.0),
            });
            Ok(Output::record(record))
        }
        Command::Pseudomoments(a) => {
            let mut cfg = PseudoConfig::new(a.x, a.alpha, a.q, a.samples, seed);
            if let Some(t) = a.big_t {
                cfg.big_t = t;
            }
            let est = pseudomoment_mc(&cfg)?;
            let record = json!({
                "estimate": est,
                "diagonal": pseudomoment_diagonal(a.x, a.alpha),
                "theorem_regime": cfg.in_theorem_regime(),
            });
            Ok(Output::record(record))
        }
        Command::Validate(a) => {
            let report = validate_suite(a.quick, seed)?;
            let passed = report.all_pass;
            Ok(Output { record: to_value(&report)?, csv: None, passed })
        }
    }
}

fn grid_csv(g: &FieldGrid) -> String {
    let mut s = format!("# schema_version={SCHEMA_VERSION}\nh");
    for j in 1..=g.t {
        s.push_str(&format!(",S_{j}"));
    }
    s.push('\n');
    for (k, h) in g.grid.iter().enumerate() {
        s.push_str(&h.to_string());
        for j in 1..=g.t {
            s.push_str(&format!(",{}", g.at(j, k)));
        }
        s.push('\n');
    }
    s
}

fn emit(cli: &Cli, out: &Output) -> Result<()> {
    let text = serde_json::to_string_pretty(&out.record).map_err(|e| Error::Numeric(e.to_string()))?;
    match &cli.out {
        Some(p) => {
            std::fs::write(p, text + "\n")?;
            if let Some(csv) = &out.csv {
                std::fs::write(p.with_extension("csv"), csv)?;
            }
        }
        None => {
            let mut so = std::io::stdout().lock();
            writeln!(so, "{text}")?;
        }
    }
    Ok(())
}

/// One line of the validation report.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub details: Value,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidateReport {
    pub quick: bool,
    pub checks: Vec<Check>,
    pub all_pass: bool,
}

fn check(name: &str, pass: bool, details: Value) -> Check {
    Check { name: name.into(), pass, details }
}

/// The built-in checks at reduced (`quick`) or full sizes.
pub fn validate_suite(quick: bool, seed: u64) -> Result<ValidateReport> {
    let pick = |q: usize, f: usize| if quick { q } else { f };
    let mut checks = Vec::new();

    // second moment identity: E|S|²/x = ⌊x⌋/x for α = 1, Σ d_α²/x otherwise
    let x = pick(1000, 10_000) as u64;
    for alpha in [1.0, 1.5] {
        let est = partial_sum_moment_mc(x, alpha, 1.0, pick(20_000, 100_000), seed)?;
        let d = divisor_alpha_sieve(x, alpha);
        let want = (1..=x).map(|n| d.get(n) * d.get(n)).sum::<f64>() / x as f64;
        let z = est.z_score(want);
        checks.push(check(
            &format!("second_moment_alpha_{alpha}"),
            z < 4.0,
            json!({"x": x, "mean": est.mean, "stderr": est.stderr, "target": want, "z": z}),
        ));
    }

    let nmax = pick(2000, 10_000) as u64;
    let mut worst: f64 = 0.0;
    for alpha in [0.5, 1.0, 1.5, 2.0, 3.0] {
        let d = divisor_alpha_sieve(nmax, alpha);
        for n in 1..=nmax {
            worst = worst.max((d.get(n) - divisor_alpha_oracle(n, alpha)?).abs());
        }
    }
    checks.push(check("divisor_oracle", worst <= 1e-9, json!({"n_max": nmax, "max_abs_error": worst})));

    let tb6 = sieve_primes(1_000_000, false)?;
    let mert = mertens_sum(1e3, 1e6, &tb6)?;
    let mres = (mert - (1e6f64.ln().ln() - 1e3f64.ln().ln())).abs();
    let pps = prime_power_sum(1e3, 1e6, 0.49, &tb6)?;
    let pres = (pps - prime_sum_main_term(1e3, 1e6, 0.98)).abs();
    checks.push(check(
        "prime_sum_residuals",
        mres <= 0.01 && pres <= 0.02,
        json!({"mertens_residual": mres, "ei_residual": pres}),
    ));

    let t = if quick { 2 } else { 3 };
    let table = table_for(t)?;
    let mut cfg = ChaosConfig::new(2.0, 1.0, t, Backend::Arithmetic);
    cfg.n_grid = crate::field::min_grid(t);
    let est = chaos_moments_mc(&cfg, &[1.0], pick(2000, 2000), seed, Some(&table))?.remove(0);
    let want = chaos_mean_oracle(2.0, 0.5, t, &table)?;
    let z = est.z_score(want);
    checks.push(check(
        "laplace_fubini",
        z < 4.0,
        json!({"t": t, "gamma": 2.0, "mean": est.mean, "stderr": est.stderr, "oracle": want, "z": z}),
    ));

    let js: Vec<u32> = (1..=t).collect();
    let nbe = pick(20_000, 100_000);
    let dists = js
        .iter()
        .map(|&j| berry_esseen_distance(j, 0.5, nbe, seed, &table))
        .collect::<Result<Vec<f64>>>()?;
    let decreasing = dists.windows(2).all(|w| w[1] < w[0]);
    let last_ok = quick || dists[dists.len() - 1] <= 0.01;
    checks.push(check(
        "berry_esseen",
        decreasing && last_ok,
        json!({"j": js, "ks": dists, "samples": nbe}),
    ));

    let j = t;
    let h = (-(j as f64) - 1.0).exp();
    let tp = two_point_tail_check(j, 0.5, h, 0.0, 0.0, 0.0, pick(2000, 10_000), seed, &table)?;
    let mgf1 = tp.mgf.iter().find(|m| m.c == 1.0).map(|m| m.mgf).unwrap_or(f64::NAN);
    checks.push(check(
        "two_point_mgf",
        mgf1 <= 10.0 && (tp.joint.p_hat - 0.25).abs() <= 0.05,
        to_value(&tp)?,
    ));

    let lam = (-(j as f64)).exp() / h;
    let dr = tilt_drift_check(j, 0.5, h, 0.0, lam, pick(2000, 10_000), seed, &table)?;
    checks.push(check("tilt_drift", dr.drift.abs() <= 5.0, to_value(&dr)?));

    let mut lm_details = Vec::new();
    let mut lm_ok = true;
    for jj in if quick { vec![2] } else { vec![2, 3] } {
        let vs: Vec<f64> = (1..=(2 * jj)).map(|v| v as f64).collect();
        let pts = local_max_tail(jj, 0.5, &vs, 16, pick(2000, 4000), seed, &table)?;
        let (cal, held): (Vec<_>, Vec<_>) = pts.into_iter().partition(|p| (p.v as u32) % 2 == 1);
        let (c, ok) = calibrate_shape(&cal, &held);
        lm_ok &= ok;
        lm_details.push(json!({"j": jj, "C": c, "calibration": cal, "held_out": held}));
    }
    checks.push(check("local_max_tail", lm_ok, Value::Array(lm_details)));

    // tilted and naive ballot estimates agree where the event is not rare
    let bt = 12;
    let b = Barrier::new(BarrierKind::Standard, 4.0, bt);
    let profile = variance_profile(0.5, bt, DEFAULT_C0, None);
    let nb = pick(20_000, 200_000);
    let mut agree = true;
    let mut cells = Vec::new();
    for (k, w) in [(8u32, 2.0), (10, 4.0), (12, 6.0)] {
        let ev = BallotEvent::new(k, w);
        let a = ballot_mc(&b, &profile, &ev, nb, seed)?;
        let tl = tilted_walk_mc(&b, &profile, &ev, nb, seed ^ 0x5a5a)?;
        let se = (a.stderr.powi(2) + tl.stderr.powi(2)).sqrt();
        if a.p_hat >= 1e-3 {
            agree &= (a.p_hat - tl.p_hat).abs() <= 4.0 * se;
        }
        cells.push(json!({"k": k, "w": w, "naive": a, "tilted": tl}));
    }
    checks.push(check("tilted_vs_naive", agree, Value::Array(cells)));

    let px = pick(1000, 10_000) as u64;
    let pc = PseudoConfig::new(px, 1.0, 1.0, pick(20_000, 100_000), seed);
    let pe = pseudomoment_mc(&pc)?;
    let want = pseudomoment_diagonal(px, 1.0);
    let z = pe.z_score(want);
    checks.push(check(
        "pseudomoment_diagonal",
        z < 4.0,
        json!({"x": px, "mean": pe.mean, "stderr": pe.stderr, "target": want, "z": z}),
    ));

    let all_pass = checks.iter().all(|c| c.pass);
    Ok(ValidateReport { quick, checks, all_pass })
}
