use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use kronstap::bench::{
    run_sweep, summarize, write_bench_header, write_bench_row, BenchConfig, BenchOutcome,
};
use kronstap::config::parse_config;
use kronstap::io::{
    read_estimate, read_phase_history, write_detection_csv, write_estimate, write_matrix_csv,
    write_pgm, write_phase_history, write_residual_csv,
};
use kronstap::lrkron::{
    lr_kron_estimate, sample_covariance, Convergence, KronCovEstimate, LrKronConfig,
};
use kronstap::multipass::{
    change_detect, change_detect_signed, join_passes, pass_images, MultipassDetection,
};
use kronstap::sim::PhaseHistory;
use kronstap::stap::{detection_image, spatial_candidates, uniform_grid, FilterKind, StapFilter};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_NOT_CONVERGED: u8 = 3;

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Data(#[from] kronstap::Error),
    #[error("{path}: {source}")]
    File { path: PathBuf, source: io::Error },
}

type CliResult<T> = Result<T, CliError>;

/// Kronecker low-rank STAP: simulation, covariance estimation, filtering,
/// detection images and change detection.
#[derive(Debug, Parser)]
#[command(name = "kronstap", version)]
struct Cli {
    /// Worker threads; 0 uses one per core. Results do not depend on it.
    #[arg(long, global = true, env = "KRONSTAP_THREADS", default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a phase-history cube from a scene config file.
    Simulate(SimulateArgs),
    /// Fit the Kronecker covariance model to one pass of a cube.
    Estimate(EstimateArgs),
    /// Apply the Kronecker clutter filter to every range bin of a cube.
    Filter(FilterArgs),
    /// Form a range x Doppler detection image, or a change map with --multipass.
    Detect(DetectArgs),
    /// Time the estimator over a (p, q, eps, threads) sweep.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Scene config file.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Overrides the seed in the config file.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct EstimatorArgs {
    /// Spatial rank r_a.
    #[arg(long, default_value_t = 1)]
    ra: usize,
    /// Temporal rank r_b; defaults to min(4, q).
    #[arg(long)]
    rb: Option<usize>,
    /// Stopping tolerance on the change of the relative residual.
    #[arg(long, default_value_t = 1e-4)]
    eps: f64,
    #[arg(long, default_value_t = 100)]
    max_iter: usize,
    /// Pass whose range bins are the training data.
    #[arg(long, default_value_t = 0)]
    pass: usize,
}

#[derive(Debug, Args)]
struct EstimateArgs {
    #[arg(long)]
    input: PathBuf,
    /// Estimate file (Â, B̂ and the residual history).
    #[arg(long)]
    output: PathBuf,
    /// Residual-history CSV; defaults to the output path with `.residuals.csv` appended.
    #[arg(long)]
    residuals: Option<PathBuf>,
    #[command(flatten)]
    estimator: EstimatorArgs,
}

#[derive(Debug, Args)]
struct FilterArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Estimate file from `estimate`; without it the input is estimated first.
    #[arg(long)]
    estimate: Option<PathBuf>,
    /// Project out only the spatial clutter subspace.
    #[arg(long)]
    no_temporal_projection: bool,
    #[command(flatten)]
    estimator: EstimatorArgs,
}

#[derive(Debug, Args)]
struct DetectArgs {
    /// Input cube; repeat to join single passes for --multipass.
    #[arg(long, required = true)]
    input: Vec<PathBuf>,
    /// Detection map CSV.
    #[arg(long)]
    output: PathBuf,
    /// Optional 16-bit PGM rendering of the map.
    #[arg(long)]
    image: Option<PathBuf>,
    #[arg(long)]
    estimate: Option<PathBuf>,
    /// Change detection between the first and last pass.
    #[arg(long)]
    multipass: bool,
    /// Write mission minus reference instead of its magnitude (CSV only).
    #[arg(long, requires = "multipass")]
    signed: bool,
    /// Doppler grid points; defaults to q.
    #[arg(long)]
    grid_doppler: Option<usize>,
    #[arg(long, default_value_t = 16)]
    grid_spatial: usize,
    #[arg(long)]
    no_temporal_projection: bool,
    #[command(flatten)]
    estimator: EstimatorArgs,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// Report CSV; stdout if absent.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_values_t = [3, 6])]
    p: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [64, 128, 256, 512, 1024])]
    q: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [1e-4, 1e-6])]
    eps: Vec<f64>,
    /// Thread counts to sweep; defaults to the --threads value.
    #[arg(long, value_delimiter = ',')]
    sweep_threads: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    trials: usize,
    /// Training samples per trial.
    #[arg(long, default_value_t = 5)]
    n: usize,
    #[arg(long, default_value_t = 100)]
    max_iter: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
    {
        Ok(pool) => pool,
        Err(e) => {
            eprintln!("kronstap: cannot start {} threads: {e}", cli.threads);
            return ExitCode::from(EXIT_USAGE);
        }
    };
    let threads = pool.current_num_threads();
    match pool.install(|| run(cli.command, threads)) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("kronstap: {e}");
            ExitCode::from(match e {
                CliError::Usage(_) => EXIT_USAGE,
                CliError::Data(_) | CliError::File { .. } => EXIT_DATA,
            })
        }
    }
}

fn run(command: Command, threads: usize) -> CliResult<u8> {
    match command {
        Command::Simulate(args) => simulate(args),
        Command::Estimate(args) => estimate(args),
        Command::Filter(args) => filter(args),
        Command::Detect(args) => detect(args),
        Command::Bench(args) => bench(args, threads),
    }
}

fn file_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::File {
        path: path.to_path_buf(),
        source,
    }
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(file_err(path))
}

fn finish(mut w: BufWriter<File>, path: &Path) -> CliResult<()> {
    w.flush().map_err(file_err(path))
}

fn read_cube(path: &Path) -> CliResult<PhaseHistory> {
    let f = File::open(path).map_err(file_err(path))?;
    Ok(read_phase_history(BufReader::new(f))?)
}

fn read_estimate_file(path: &Path) -> CliResult<KronCovEstimate> {
    let f = File::open(path).map_err(file_err(path))?;
    Ok(read_estimate(BufReader::new(f))?)
}

fn simulate(args: SimulateArgs) -> CliResult<u8> {
    let text = fs::read_to_string(&args.input).map_err(file_err(&args.input))?;
    let mut cfg = parse_config(&text)?;
    if let Some(seed) = args.seed {
        cfg.scene.seed = seed;
    }
    let cube = cfg.simulate()?;
    let mut w = create(&args.output)?;
    write_phase_history(&mut w, &cube)?;
    finish(w, &args.output)?;
    Ok(0)
}

fn temporal_rank(est: &EstimatorArgs, q: usize) -> usize {
    est.rb.unwrap_or(q.min(4))
}

/// LR-Kron with every range bin of one pass as training data.
fn estimate_pass(cube: &PhaseHistory, est: &EstimatorArgs) -> CliResult<KronCovEstimate> {
    if est.pass >= cube.passes() {
        return Err(CliError::Usage(format!(
            "--pass {} but the input has {} pass(es)",
            est.pass,
            cube.passes()
        )));
    }
    let (p, q) = (cube.p(), cube.q());
    let cfg = LrKronConfig::new(est.ra, temporal_rank(est, q))
        .tolerance(est.eps)
        .max_iter(est.max_iter);
    let s = sample_covariance(&cube.bins(est.pass), p, q)?;
    Ok(lr_kron_estimate(&s, &cfg)?)
}

fn check_estimate_shape(est: &KronCovEstimate, cube: &PhaseHistory) -> CliResult<()> {
    if (est.p(), est.q()) != (cube.p(), cube.q()) {
        return Err(kronstap::Error::DimensionMismatch {
            op: "estimate vs input",
            expected: format!("p={}, q={}", cube.p(), cube.q()),
            found: format!("p={}, q={}", est.p(), est.q()),
        }
        .into());
    }
    Ok(())
}

fn load_or_estimate(
    path: Option<&Path>,
    cube: &PhaseHistory,
    est: &EstimatorArgs,
) -> CliResult<KronCovEstimate> {
    let est = match path {
        Some(path) => read_estimate_file(path)?,
        None => estimate_pass(cube, est)?,
    };
    check_estimate_shape(&est, cube)?;
    Ok(est)
}

fn estimate(args: EstimateArgs) -> CliResult<u8> {
    let cube = read_cube(&args.input)?;
    let est = estimate_pass(&cube, &args.estimator)?;
    let mut w = create(&args.output)?;
    write_estimate(&mut w, &est)?;
    finish(w, &args.output)?;
    let residuals = args.residuals.unwrap_or_else(|| {
        let mut name = args.output.clone().into_os_string();
        name.push(".residuals.csv");
        name.into()
    });
    let mut w = create(&residuals)?;
    write_residual_csv(&mut w, est.residual_history()).map_err(file_err(&residuals))?;
    finish(w, &residuals)?;
    match est.status() {
        Convergence::Converged => Ok(0),
        Convergence::MaxIterations => {
            eprintln!(
                "kronstap: not converged after {} iterations (eta {:.3e})",
                est.iterations(),
                est.final_residual()
            );
            Ok(EXIT_NOT_CONVERGED)
        }
    }
}

fn filter(args: FilterArgs) -> CliResult<u8> {
    let cube = read_cube(&args.input)?;
    let est = load_or_estimate(args.estimate.as_deref(), &cube, &args.estimator)?;
    let f = StapFilter::from_estimate(FilterKind::Kron, &est, !args.no_temporal_projection)?;
    let mut data = Vec::with_capacity(cube.as_slice().len());
    for pass in 0..cube.passes() {
        for x in cube.bins(pass) {
            data.extend(f.apply(x)?);
        }
    }
    let out = PhaseHistory::from_parts(
        cube.p(),
        cube.q(),
        cube.passes(),
        cube.n_bins(),
        data,
        cube.truth().to_vec(),
    )?;
    let mut w = create(&args.output)?;
    write_phase_history(&mut w, &out)?;
    finish(w, &args.output)?;
    Ok(0)
}

fn detect(args: DetectArgs) -> CliResult<u8> {
    let cubes = args
        .input
        .iter()
        .map(|p| read_cube(p))
        .collect::<CliResult<Vec<_>>>()?;
    let cube = if cubes.len() == 1 {
        cubes.into_iter().next().unwrap_or_else(|| unreachable!())
    } else if args.multipass {
        join_passes(&cubes)?
    } else {
        return Err(CliError::Usage(
            "several --input files need --multipass".into(),
        ));
    };
    let doppler_grid = uniform_grid(args.grid_doppler.unwrap_or(cube.q()));
    let spatial_grid = uniform_grid(args.grid_spatial);
    if doppler_grid.is_empty() || spatial_grid.is_empty() {
        return Err(CliError::Usage("grid sizes must be positive".into()));
    }

    if args.multipass {
        if cube.passes() < 2 {
            return Err(CliError::Usage(
                "--multipass needs at least two passes".into(),
            ));
        }
        if args.estimate.is_some() {
            return Err(CliError::Usage(
                "--multipass estimates its own stacked covariance".into(),
            ));
        }
        let settings = MultipassDetection {
            temporal_rank: temporal_rank(&args.estimator, cube.q()),
            tolerance: args.estimator.eps,
            doppler_grid,
            spatial_grid,
            temporal_projection: !args.no_temporal_projection,
        };
        let training: Vec<usize> = (0..cube.n_bins()).collect();
        let images = pass_images(&cube, &training, &settings)?;
        let (reference, mission) = (&images[0], &images[images.len() - 1]);
        let change = change_detect(mission, reference)?;
        let mut w = create(&args.output)?;
        let written = if args.signed {
            let signed = change_detect_signed(mission, reference)?;
            write_matrix_csv(&mut w, change.doppler_grid(), &signed)
        } else {
            write_detection_csv(&mut w, &change)
        };
        written.map_err(file_err(&args.output))?;
        finish(w, &args.output)?;
        write_image(args.image.as_deref(), &change)?;
        return Ok(0);
    }

    let pass = args.estimator.pass;
    let est = load_or_estimate(args.estimate.as_deref(), &cube, &args.estimator)?;
    let f = StapFilter::from_estimate(FilterKind::Kron, &est, !args.no_temporal_projection)?;
    let candidates = spatial_candidates(&spatial_grid, cube.p());
    let map = detection_image(&f, &cube.bins(pass), &doppler_grid, &candidates)?;
    let mut w = create(&args.output)?;
    write_detection_csv(&mut w, &map).map_err(file_err(&args.output))?;
    finish(w, &args.output)?;
    write_image(args.image.as_deref(), &map)?;
    Ok(0)
}

fn write_image(path: Option<&Path>, map: &kronstap::stap::DetectionMap) -> CliResult<()> {
    let Some(path) = path else { return Ok(()) };
    let mut w = create(path)?;
    write_pgm(&mut w, map).map_err(file_err(path))?;
    finish(w, path)
}

fn bench(args: BenchArgs, threads: usize) -> CliResult<u8> {
    let cfg = BenchConfig {
        ps: args.p,
        qs: args.q,
        tolerances: args.eps,
        threads: if args.sweep_threads.is_empty() {
            vec![threads]
        } else {
            args.sweep_threads
        },
        trials: args.trials,
        n: args.n,
        max_iter: args.max_iter,
        seed: args.seed,
        ..BenchConfig::default()
    };
    if [&cfg.ps, &cfg.qs, &cfg.threads]
        .iter()
        .any(|v| v.contains(&0))
    {
        return Err(CliError::Usage(
            "sweep sizes and thread counts must be positive".into(),
        ));
    }
    let mut out: Box<dyn Write> = match &args.output {
        Some(path) => Box::new(create(path)?),
        None => Box::new(io::stdout().lock()),
    };
    let write_err = |source| CliError::File {
        path: args.output.clone().unwrap_or_else(|| "<stdout>".into()),
        source,
    };
    write_bench_header(&mut out).map_err(write_err)?;
    let mut io_failure = None;
    let rows = run_sweep(&cfg, |row| {
        if io_failure.is_none() {
            io_failure = write_bench_row(&mut out, row, cfg.n)
                .and_then(|_| out.flush())
                .err();
        }
        if let BenchOutcome::Failed(f) = row {
            eprintln!(
                "kronstap: p={} q={} trial {}: {}",
                f.p, f.q, f.trial, f.message
            );
        }
    })?;
    if let Some(e) = io_failure {
        return Err(write_err(e));
    }
    for s in summarize(&rows) {
        eprintln!(
            "p={:<2} q={:<5} eps={:<6e} threads={:<2} mean {:.4e} s, {:.1} iterations",
            s.p, s.q, s.tolerance, s.threads, s.mean_seconds, s.mean_iterations
        );
    }
    Ok(0)
}
