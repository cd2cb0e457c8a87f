//! Wall-clock benchmark of the LR-Kron estimator over `(p, q, ε, threads)`.
//!
//! Each trial draws `n` samples `x = h ⊗ z + e` with `h ~ CN(0, I_p)`,
//! `z ~ CN(0, I_q)` and weak white noise `e`, so the true covariance is a
//! rank-one spatial factor times an identity temporal factor (`r_a = 1`,
//! `r_b = q`). The noise keeps the sample covariance from being an exact
//! Kronecker product, which would converge in the minimum number of
//! iterations regardless of `ε`. Only the estimate itself is timed, with one
//! [`LrKronWorkspace`] per `(p, q)` so trials measure the arithmetic rather than
//! page faults on a fresh `p² x q²` buffer.

use std::io::{self, Write};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::C64;
use crate::lrkron::{sample_covariance, LrKronConfig, LrKronWorkspace};

#[derive(Clone, Debug, PartialEq)]
pub struct BenchConfig {
    pub ps: Vec<usize>,
    pub qs: Vec<usize>,
    pub tolerances: Vec<f64>,
    pub threads: Vec<usize>,
    pub trials: usize,
    /// Training samples per trial.
    pub n: usize,
    /// Power of the white noise added to the Kronecker samples.
    pub noise: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            ps: vec![3, 6],
            qs: vec![64, 128, 256, 512, 1024],
            tolerances: vec![1e-4, 1e-6],
            threads: vec![1],
            trials: 10,
            n: 5,
            noise: 1.0,
            max_iter: 100,
            seed: 0,
        }
    }
}

/// One timed estimate.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub p: usize,
    pub q: usize,
    pub n: usize,
    pub tolerance: f64,
    pub threads: usize,
    pub trial: usize,
    pub iterations: usize,
    pub wall_seconds: f64,
    pub eta_final: f64,
}

/// A row that could not run, e.g. because the covariance did not fit in memory.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchFailure {
    pub p: usize,
    pub q: usize,
    pub tolerance: f64,
    pub threads: usize,
    pub trial: usize,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq)]
pub enum BenchOutcome {
    Ok(BenchRow),
    Failed(BenchFailure),
}

/// Mean over the trials of one configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchSummary {
    pub p: usize,
    pub q: usize,
    pub tolerance: f64,
    pub threads: usize,
    pub trials: usize,
    pub mean_seconds: f64,
    pub mean_iterations: f64,
}

fn cn(rng: &mut impl Rng) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Training vectors of one trial; depends only on `(seed, p, q, trial)`.
pub fn bench_samples(cfg: &BenchConfig, p: usize, q: usize, trial: usize) -> Vec<Vec<C64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(((p as u64) << 48) | ((q as u64) << 24) | trial as u64);
    let h: Vec<C64> = (0..p).map(|_| cn(&mut rng)).collect();
    let noise = cfg.noise.sqrt();
    (0..cfg.n)
        .map(|_| {
            let z: Vec<C64> = (0..q).map(|_| cn(&mut rng)).collect();
            h.iter()
                .flat_map(|a| z.iter().map(move |b| a * b))
                .map(|v| v + cn(&mut rng) * noise)
                .collect()
        })
        .collect()
}

fn thread_pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("cannot build a {threads}-thread pool: {e}")))
}

/// Runs the sweep, calling `report` after every row. Failures are reported and
/// the sweep moves on.
pub fn run_sweep(
    cfg: &BenchConfig,
    mut report: impl FnMut(&BenchOutcome),
) -> Result<Vec<BenchOutcome>> {
    if cfg.trials == 0 || cfg.n == 0 {
        return Err(Error::InvalidParameter(
            "trials and n must be positive".into(),
        ));
    }
    let mut out = Vec::new();
    for &p in &cfg.ps {
        for &q in &cfg.qs {
            let mut workspace = LrKronWorkspace::new();
            for trial in 0..cfg.trials {
                let samples = bench_samples(cfg, p, q, trial);
                let refs: Vec<&[C64]> = samples.iter().map(Vec::as_slice).collect();
                let scm = sample_covariance(&refs, p, q);
                drop(refs);
                for &threads in &cfg.threads {
                    for &tolerance in &cfg.tolerances {
                        let fail = |message: String| {
                            BenchOutcome::Failed(BenchFailure {
                                p,
                                q,
                                tolerance,
                                threads,
                                trial,
                                message,
                            })
                        };
                        let outcome = match (&scm, thread_pool(threads)) {
                            (Err(e), _) => fail(e.to_string()),
                            (_, Err(e)) => fail(e.to_string()),
                            (Ok(s), Ok(pool)) => {
                                let est_cfg = LrKronConfig::new(1, q)
                                    .tolerance(tolerance)
                                    .max_iter(cfg.max_iter);
                                let start = Instant::now();
                                let est = pool.install(|| workspace.estimate(s, &est_cfg));
                                let wall_seconds = start.elapsed().as_secs_f64();
                                match est {
                                    Ok(est) => BenchOutcome::Ok(BenchRow {
                                        p,
                                        q,
                                        n: cfg.n,
                                        tolerance,
                                        threads,
                                        trial,
                                        iterations: est.iterations(),
                                        wall_seconds,
                                        eta_final: est.final_residual(),
                                    }),
                                    Err(e) => fail(e.to_string()),
                                }
                            }
                        };
                        report(&outcome);
                        out.push(outcome);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Mean time and iteration count per `(p, q, ε, threads)`, over successful trials.
pub fn summarize(outcomes: &[BenchOutcome]) -> Vec<BenchSummary> {
    let mut out: Vec<BenchSummary> = Vec::new();
    for o in outcomes {
        let BenchOutcome::Ok(r) = o else { continue };
        let key = |s: &BenchSummary| {
            (s.p, s.q, s.tolerance.to_bits(), s.threads)
                == (r.p, r.q, r.tolerance.to_bits(), r.threads)
        };
        match out.iter_mut().find(|s| key(s)) {
            Some(s) => {
                s.trials += 1;
                s.mean_seconds += r.wall_seconds;
                s.mean_iterations += r.iterations as f64;
            }
            None => out.push(BenchSummary {
                p: r.p,
                q: r.q,
                tolerance: r.tolerance,
                threads: r.threads,
                trials: 1,
                mean_seconds: r.wall_seconds,
                mean_iterations: r.iterations as f64,
            }),
        }
    }
    for s in &mut out {
        s.mean_seconds /= s.trials as f64;
        s.mean_iterations /= s.trials as f64;
    }
    out
}

/// `p,q,n,eps,threads,trial,iterations,wall_seconds,eta_final,error`; failed rows
/// leave the numeric columns empty.
pub fn write_bench_header(mut w: impl Write) -> io::Result<()> {
    writeln!(
        w,
        "p,q,n,eps,threads,trial,iterations,wall_seconds,eta_final,error"
    )
}

pub fn write_bench_row(mut w: impl Write, outcome: &BenchOutcome, n: usize) -> io::Result<()> {
    match outcome {
        BenchOutcome::Ok(r) => writeln!(
            w,
            "{},{},{},{:e},{},{},{},{},{},",
            r.p,
            r.q,
            r.n,
            r.tolerance,
            r.threads,
            r.trial,
            r.iterations,
            r.wall_seconds,
            r.eta_final
        ),
        BenchOutcome::Failed(f) => writeln!(
            w,
            "{},{},{},{:e},{},{},,,,\"{}\"",
            f.p,
            f.q,
            n,
            f.tolerance,
            f.threads,
            f.trial,
            f.message.replace('"', "'")
        ),
    }
}
