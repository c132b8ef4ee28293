use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use compsketch::harness::{self, Execution, GridAxis, HarnessConfig, PowerRow, SigmaSource, SignalGrid};
use compsketch::simgen::Scenario;
use compsketch::sketch::{self, TwoSampleData};
use compsketch::testing::{self, Method, TestConfig, ThresholdMode};
use compsketch::{io as csvio, theory, variance, Error};

#[derive(Parser, Debug)]
#[command(name = "compsketch", version, about = "Two-sample testing of high-dimensional regression coefficients by complementary sketching")]
struct Cli {
    #[command(flatten)]
    global: Global,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Master seed for every random draw
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Monte Carlo replicates per grid cell
    #[arg(long, global = true, default_value_t = 100)]
    reps: usize,

    /// Noise standard deviation to use instead of an estimate
    #[arg(long, global = true)]
    sigma: Option<f64>,

    /// Noise level source when --sigma is not given
    #[arg(long, global = true, value_enum)]
    sigma_source: Option<SigmaArg>,

    /// Threshold family
    #[arg(long, global = true, value_enum, default_value_t = ModeArg::Simulation)]
    mode: ModeArg,

    /// Slack in the theory-mode thresholds; required with --mode theory
    #[arg(long, global = true)]
    epsilon: Option<f64>,

    /// Output file (stdout when omitted)
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Record wall_time_ms; without it the column is 0 and output is reproducible
    #[arg(long, global = true)]
    timing: bool,

    /// Run replicates on the calling thread
    #[arg(long, global = true)]
    sequential: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Theory,
    Simulation,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SigmaArg {
    Oracle,
    Pooled,
    Sketched,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Sparse,
    Dense,
    Lrt,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum AxisArg {
    P,
    N1,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Test H0: β1 = β2 on data read from CSV files
    Test(TestArgs),
    /// Estimate power for one scenario (JSON) and write a CSV row per method
    Simulate(SimulateArgs),
    /// Power against ν over a grid of p or n1
    Phase(PhaseArgs),
    /// Power of several methods across sparsity levels and signal sizes
    Compare(CompareArgs),
    /// Closed-form constants, ν, thresholds and detection limits
    Theory(TheoryArgs),
    /// Random-matrix diagnostics
    Spectrum(SpectrumArgs),
}

#[derive(Args, Debug)]
struct TestArgs {
    #[arg(long)]
    x1: PathBuf,
    #[arg(long)]
    y1: PathBuf,
    #[arg(long)]
    x2: PathBuf,
    #[arg(long)]
    y2: PathBuf,
    /// Skip the first line of every input file
    #[arg(long)]
    header: bool,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [MethodArg::Sparse, MethodArg::Dense])]
    method: Vec<MethodArg>,
    /// Sparsity level; needed for the theory-mode sparse threshold
    #[arg(long)]
    k: Option<usize>,
    /// Level of the likelihood ratio test
    #[arg(long, default_value_t = 0.05)]
    level: f64,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Scenario JSON file
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [MethodArg::Sparse, MethodArg::Dense])]
    method: Vec<MethodArg>,
    #[arg(long, default_value_t = 0.05)]
    level: f64,
}

#[derive(Args, Debug)]
struct PhaseArgs {
    /// Base scenario JSON; defaults to n1 = n2 = 500, p = 400, k = 10, σ = 1
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = AxisArg::P)]
    axis: AxisArg,
    /// Grid values for the axis
    #[arg(long, value_delimiter = ',', default_values_t = [200usize, 400, 600, 800])]
    values: Vec<usize>,
    /// Signal levels as ν
    #[arg(long, value_delimiter = ',', conflicts_with = "rho", default_values_t = [0.0, 0.25, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0])]
    nu: Vec<f64>,
    /// Signal levels as ρ = ‖β1 − β2‖₂
    #[arg(long, value_delimiter = ',')]
    rho: Option<Vec<f64>>,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [MethodArg::Sparse])]
    method: Vec<MethodArg>,
}

#[derive(Args, Debug)]
struct CompareArgs {
    /// Base scenario JSON; defaults to n1 = n2 = 500, p = 800, σ = 1
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Sparsity levels; defaults to {1, 10, ⌊√p⌋, ⌊p/10⌋, p}
    #[arg(long, value_delimiter = ',')]
    ks: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0])]
    rho: Vec<f64>,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [MethodArg::Sparse, MethodArg::Dense, MethodArg::Lrt])]
    method: Vec<MethodArg>,
    #[arg(long, default_value_t = 0.05)]
    level: f64,
}

#[derive(Args, Debug)]
struct TheoryArgs {
    #[arg(long)]
    n1: usize,
    #[arg(long)]
    n2: usize,
    #[arg(long)]
    p: usize,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    rho: Option<f64>,
    /// Lower bound on the restricted eigenvalue in the detection limits
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
}

#[derive(Args, Debug)]
struct SpectrumArgs {
    #[command(subcommand)]
    kind: SpectrumKind,
}

#[derive(Subcommand, Debug)]
enum SpectrumKind {
    /// Eigenvalues of a matrix-variate Beta draw against their limits
    Beta {
        #[arg(long)]
        n1: usize,
        #[arg(long)]
        n2: usize,
        #[arg(long)]
        p: usize,
        /// Independent draws to average over
        #[arg(long, default_value_t = 20)]
        draws: usize,
    },
    /// Law of the triangular factor of a Gaussian matrix (uses --reps)
    Bartlett {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        p: usize,
    },
}

/// Failure carrying the process exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = if e.is_numerical() {
            3
        } else if e.is_data() {
            2
        } else {
            1
        };
        Failure { code, message: e.to_string() }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Error::from(e).into()
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure { code: 1, message: message.into() }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(n) = harness::threads_from_env()? {
        harness::init_thread_pool(n)?;
    }
    let g = &cli.global;
    if let Some(s) = g.sigma {
        if !(s > 0.0 && s.is_finite()) {
            return Err(usage(format!("--sigma must be positive, got {s}")));
        }
    }
    if matches!(g.mode, ModeArg::Theory) && g.epsilon.is_none() {
        return Err(usage("--mode theory needs an explicit --epsilon"));
    }
    if let Some(eps) = g.epsilon {
        if !(eps >= 0.0 && eps.is_finite()) {
            return Err(usage(format!("--epsilon must be ≥ 0, got {eps}")));
        }
    }
    if g.reps == 0 {
        return Err(usage("--reps must be at least 1"));
    }
    match &cli.command {
        Command::Test(a) => cmd_test(g, a),
        Command::Simulate(a) => cmd_simulate(g, a),
        Command::Phase(a) => cmd_phase(g, a),
        Command::Compare(a) => cmd_compare(g, a),
        Command::Theory(a) => cmd_theory(g, a),
        Command::Spectrum(a) => cmd_spectrum(g, a),
    }
}

fn mode(g: &Global) -> ThresholdMode {
    match g.mode {
        ModeArg::Theory => ThresholdMode::Theory,
        ModeArg::Simulation => ThresholdMode::Simulation,
    }
}

fn methods(list: &[MethodArg]) -> Vec<Method> {
    let mut out: Vec<Method> = Vec::new();
    for m in list {
        let m = match m {
            MethodArg::Sparse => Method::Sparse,
            MethodArg::Dense => Method::Dense,
            MethodArg::Lrt => Method::Lrt,
        };
        if !out.contains(&m) {
            out.push(m);
        }
    }
    out
}

/// `--sigma` forces the oracle source; otherwise `--sigma-source` or the
/// subcommand's default applies.
fn sigma_source(g: &Global, default: SigmaSource) -> SigmaSource {
    if g.sigma.is_some() {
        return SigmaSource::Oracle;
    }
    match g.sigma_source {
        Some(SigmaArg::Oracle) => SigmaSource::Oracle,
        Some(SigmaArg::Pooled) => SigmaSource::Pooled,
        Some(SigmaArg::Sketched) => SigmaSource::Sketched,
        None => default,
    }
}

fn harness_config(g: &Global, default_source: SigmaSource, level: f64) -> HarnessConfig {
    HarnessConfig {
        mode: mode(g),
        epsilon: g.epsilon.unwrap_or(0.0),
        sigma_source: sigma_source(g, default_source),
        sigma_override: g.sigma,
        lrt_level: level,
        execution: if g.sequential { Execution::Sequential } else { Execution::Parallel },
        timing: g.timing,
    }
}

fn output(g: &Global) -> CliResult<Box<dyn Write>> {
    Ok(match &g.out {
        Some(path) => Box::new(BufWriter::new(File::create(path)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_json(g: &Global, value: &serde_json::Value) -> CliResult<()> {
    let mut out = output(g)?;
    serde_json::to_writer_pretty(&mut out, value).map_err(Error::from)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

fn write_rows(g: &Global, rows: &[PowerRow]) -> CliResult<()> {
    let mut out = output(g)?;
    harness::write_csv(rows, &mut out)?;
    out.flush()?;
    Ok(())
}

fn read_scenario(path: &Path) -> CliResult<Scenario> {
    let file = File::open(path)?;
    let sc: Scenario = serde_json::from_reader(io::BufReader::new(file)).map_err(Error::from)?;
    sc.validate()?;
    Ok(sc)
}

fn cmd_test(g: &Global, a: &TestArgs) -> CliResult<()> {
    let x1 = csvio::read_matrix(&a.x1, a.header)?;
    let y1 = csvio::read_response(&a.y1, a.header)?;
    let x2 = csvio::read_matrix(&a.x2, a.header)?;
    let y2 = csvio::read_response(&a.y2, a.header)?;
    let data = TwoSampleData::new(x1, y1, x2, y2)?;
    let methods = methods(&a.method);

    let mut outcomes = Vec::new();
    let mut report = json!({
        "n1": data.n1(),
        "n2": data.n2(),
        "p": data.p(),
        "m": data.m(),
        "mode": mode(g),
    });
    if methods.iter().any(|&m| m != Method::Lrt) {
        let sk = sketch::complementary_sketch(&data, g.seed)?;
        let summary = sk.summary();
        let source = sigma_source(g, SigmaSource::Pooled);
        let sigma_hat = match source {
            SigmaSource::Oracle => g.sigma.ok_or_else(|| usage("--sigma-source oracle needs --sigma"))?,
            SigmaSource::Pooled => variance::pooled_sigma2(&data)?.sigma_hat(),
            SigmaSource::Sketched => variance::sketched_sigma2(&summary)?.sigma_hat(),
        };
        let config = TestConfig::with_defaults(data.p(), data.m(), a.k, sigma_hat, g.epsilon.unwrap_or(0.0), mode(g))?;
        report["sigma_hat"] = json!(sigma_hat);
        report["sigma_source"] = json!(source);
        report["thresholds"] = json!({"omega": config.omega, "tau": config.tau, "eta": config.eta});
        if let Some(d) = &sk.deficiency {
            report["rank_deficiency"] = json!(d);
        }
        for &m in &methods {
            match m {
                Method::Sparse => outcomes.push(testing::evaluate_sparse(&summary, &config)),
                Method::Dense => outcomes.push(testing::evaluate_dense(&summary, &config)),
                Method::Lrt => {}
            }
        }
    }
    if methods.contains(&Method::Lrt) {
        outcomes.push(testing::lrt_test(&data, a.level)?);
    }
    report["outcomes"] = json!(outcomes);
    write_json(g, &report)
}

fn cmd_simulate(g: &Global, a: &SimulateArgs) -> CliResult<()> {
    let mut sc = read_scenario(&a.scenario)?;
    sc.seed = sc.seed.wrapping_add(g.seed);
    let cfg = harness_config(g, SigmaSource::Oracle, a.level);
    let rows = harness::estimate_power_multi(&sc, &methods(&a.method), &cfg, g.reps)?;
    write_rows(g, &rows)
}

fn cmd_phase(g: &Global, a: &PhaseArgs) -> CliResult<()> {
    let mut base = match &a.scenario {
        Some(path) => read_scenario(path)?,
        None => Scenario::gaussian(500, 500, 400, 10, 0.0, 1.0, 0),
    };
    base.seed = base.seed.wrapping_add(g.seed);
    if let Some(s) = g.sigma {
        base.sigma = s;
    }
    let axis = match a.axis {
        AxisArg::P => GridAxis::P(a.values.clone()),
        AxisArg::N1 => GridAxis::N1(a.values.clone()),
    };
    let signal = match &a.rho {
        Some(r) => SignalGrid::Rho(r.clone()),
        None => SignalGrid::Nu(a.nu.clone()),
    };
    let cfg = harness_config(g, SigmaSource::Oracle, 0.05);
    let rows = harness::phase_transition_grid(&base, &axis, &signal, &methods(&a.method), &cfg, g.reps)?;
    write_rows(g, &rows)
}

fn cmd_compare(g: &Global, a: &CompareArgs) -> CliResult<()> {
    let mut base = match &a.scenario {
        Some(path) => read_scenario(path)?,
        None => Scenario::gaussian(500, 500, 800, 1, 0.0, 1.0, 0),
    };
    base.seed = base.seed.wrapping_add(g.seed);
    let ks = a.ks.clone().unwrap_or_else(|| harness::default_sparsity_levels(base.p));
    let cfg = harness_config(g, SigmaSource::Sketched, a.level);
    let rows = harness::comparison_grid(&base, &ks, &a.rho, &methods(&a.method), &cfg, g.reps)?;
    write_rows(g, &rows)
}

fn cmd_theory(g: &Global, a: &TheoryArgs) -> CliResult<()> {
    let reg = theory::AsymptoticRegime::from_sizes(a.n1, a.n2, a.p)?;
    let m = a.n1 + a.n2 - a.p;
    let sigma = g.sigma.unwrap_or(1.0);
    let (t_left, t_right) = reg.spectral_edges();
    let mut report = json!({
        "n1": a.n1,
        "n2": a.n2,
        "p": a.p,
        "m": m,
        "r": reg.r,
        "s": reg.s,
        "sigma": sigma,
        "kappa1": reg.kappa1(),
        "kappa2": reg.kappa2(),
        "spectral_edges": [t_left, t_right],
        "rho_dense_upper": theory::rho_dense_upper(a.n1, a.n2, a.p, sigma, a.lambda)?,
    });
    if let Some(k) = a.k {
        if k == 0 || k > a.p {
            return Err(usage(format!("--k must lie in 1..={}, got {k}", a.p)));
        }
        report["k"] = json!(k);
        report["rho_sparse_upper"] = json!(theory::rho_sparse_upper(a.n1, a.n2, a.p, k, sigma, a.lambda)?);
        if let Some(rho) = a.rho {
            report["rho"] = json!(rho);
            report["nu"] = json!(theory::nu(a.n1, a.n2, a.p, k, rho, sigma)?);
        }
    } else if a.rho.is_some() {
        return Err(usage("ν needs --k as well as --rho"));
    }
    let t = testing::default_thresholds(a.p, m, a.k, sigma, g.epsilon.unwrap_or(0.0), mode(g))?;
    report["mode"] = json!(mode(g));
    report["thresholds"] = json!(t);
    write_json(g, &report)
}

fn cmd_spectrum(g: &Global, a: &SpectrumArgs) -> CliResult<()> {
    match a.kind {
        SpectrumKind::Beta { n1, n2, p, draws } => {
            if draws == 0 {
                return Err(usage("--draws must be at least 1"));
            }
            let reg = theory::AsymptoticRegime::from_sizes(n1, n2, p)?;
            let mut l1 = 0.0;
            let mut l2 = 0.0;
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for d in 0..draws {
                let eig = theory::beta_spectrum(n1, n2, p, g.seed.wrapping_add(d as u64))?;
                let mom = theory::spectrum_moments(&eig);
                l1 += mom.a_l1 / draws as f64;
                l2 += mom.a_l2 / draws as f64;
                lo = lo.min(mom.min);
                hi = hi.max(mom.max);
            }
            let (t_left, t_right) = reg.spectral_edges();
            write_json(
                g,
                &json!({
                    "n1": n1, "n2": n2, "p": p, "draws": draws,
                    "mean_a_l1": l1, "kappa1": reg.kappa1(),
                    "mean_a_l2": l2, "kappa2": reg.kappa2(),
                    "min_eigenvalue": lo, "t_left": t_left,
                    "max_eigenvalue": hi, "t_right": t_right,
                }),
            )
        }
        SpectrumKind::Bartlett { n, p } => {
            let rep = theory::bartlett_qr_check(n, p, g.reps, g.seed)?;
            write_json(g, &json!(rep))
        }
    }
}
