//! `polyfund` command-line front end.
//!
//! Exit codes: 0 success, 1 usage, 2 I/O (including malformed match files),
//! 3 degenerate data, 4 solver failure.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use polyfund::epipolar::{self, EpipolarError, FMatrix, GlobalOptions, PointMatch};
use polyfund::io::{parse_matches, write_matches, ParseError};
use polyfund::multiview::{self, format_sig, BaOptions, EvaluationReport, Method, MultiviewError, REPORT_HEADER};
use polyfund::simulator::{self, SceneConfig, SimError, SweepCell, SweepConfig, SweepKind};

mod table;

pub use table::render_table;

#[derive(Parser, Debug)]
#[command(name = "polyfund", version, about = "Fundamental matrix estimation and evaluation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Estimate F from a match file and write it to the output directory.
    Estimate(EstimateArgs),
    /// Estimate, triangulate and bundle-adjust; write a CSV report and print a table.
    Evaluate(EvaluateArgs),
    /// Run a synthetic noise or point-count sweep.
    Simulate(SimulateArgs),
    /// Write a synthetic match file.
    Generate(GenerateArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Eightpoint,
    Global,
    Both,
}

impl MethodArg {
    fn methods(self) -> Vec<Method> {
        match self {
            MethodArg::Eightpoint => vec![Method::EightPoint],
            MethodArg::Global => vec![Method::Global],
            MethodArg::Both => vec![Method::EightPoint, Method::Global],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SweepArg {
    Noise,
    Points,
}

#[derive(Args, Debug, Clone)]
pub struct EstimatorArgs {
    #[arg(long, value_enum, default_value = "both")]
    pub method: MethodArg,
    /// Relaxation order of the global estimator.
    #[arg(long, default_value_t = 2)]
    pub order: usize,
    /// Work in pixel coordinates instead of Hartley-standardized ones.
    #[arg(long)]
    pub no_standardize: bool,
    /// Relative singular-value threshold of the rank certificate.
    #[arg(long, default_value_t = 1e-3)]
    pub rank_tol: f64,
    /// Duality-gap tolerance of the SDP solver.
    #[arg(long, default_value_t = 1e-9)]
    pub gap_tol: f64,
}

#[derive(Args, Debug, Clone)]
pub struct OutArgs {
    /// Output directory.
    #[arg(long, env = "POLYFUND_OUT_DIR", default_value = ".")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EstimateArgs {
    pub matches: PathBuf,
    #[command(flatten)]
    pub est: EstimatorArgs,
    #[command(flatten)]
    pub out: OutArgs,
    /// Write the global estimator's SDP in plain-text block format.
    #[arg(long, value_name = "FILE")]
    pub dump_sdp: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    pub matches: PathBuf,
    #[command(flatten)]
    pub est: EstimatorArgs,
    #[arg(long, default_value_t = 1000)]
    pub max_ba_iters: usize,
    #[command(flatten)]
    pub out: OutArgs,
    /// Report zero estimation times (for reproducible output).
    #[arg(long)]
    pub no_timing: bool,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long, value_enum, default_value = "noise")]
    pub sweep: SweepArg,
    #[arg(long, default_value_t = 1)]
    pub motion: u8,
    /// Noise standard deviation (pixels) of a point-count sweep.
    #[arg(long, default_value_t = 0.5)]
    pub sigma: f64,
    /// Number of points of a noise sweep.
    #[arg(long, default_value_t = 50)]
    pub npoints: usize,
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Comma-separated grid overriding the sweep's default.
    #[arg(long, value_delimiter = ',')]
    pub grid: Option<Vec<f64>>,
    #[command(flatten)]
    pub est: EstimatorArgs,
    #[arg(long, default_value_t = 1000)]
    pub max_ba_iters: usize,
    #[command(flatten)]
    pub out: OutArgs,
    /// Also write one `x y` series file per method and metric.
    #[arg(long)]
    pub plot_data: bool,
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[arg(long, default_value_t = 1)]
    pub motion: u8,
    #[arg(long, default_value_t = 0.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = 50)]
    pub npoints: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Match file to write; standard output if absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the true fundamental matrix here.
    #[arg(long, value_name = "FILE")]
    pub truth: Option<PathBuf>,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Io(String),
    Degenerate(String),
    Solver(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Io(_) => 2,
            CliError::Degenerate(_) => 3,
            CliError::Solver(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Io(m) | CliError::Degenerate(m) | CliError::Solver(m) => m,
        }
    }
}

impl From<EpipolarError> for CliError {
    fn from(e: EpipolarError) -> Self {
        match e {
            EpipolarError::Solver(_) => CliError::Solver(e.to_string()),
            _ => CliError::Degenerate(e.to_string()),
        }
    }
}

impl From<MultiviewError> for CliError {
    fn from(e: MultiviewError) -> Self {
        match e {
            MultiviewError::Estimation(inner) => inner.into(),
            MultiviewError::NumericalFailure(_) => CliError::Solver(e.to_string()),
            _ => CliError::Degenerate(e.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::CameraBehindScene => CliError::Degenerate(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("polyfund: {}", e.message());
            e.code()
        }
    }
}

fn dispatch(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Estimate(a) => cmd_estimate(&a),
        Command::Evaluate(a) => cmd_evaluate(&a),
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Generate(a) => cmd_generate(&a),
    }
}

impl EstimatorArgs {
    fn global_options(&self) -> Result<GlobalOptions, CliError> {
        if self.order < 2 {
            return Err(CliError::Usage(format!("--order must be at least 2, got {}", self.order)));
        }
        if !(self.rank_tol > 0.0 && self.rank_tol < 1.0) {
            return Err(CliError::Usage("--rank-tol must lie in (0, 1)".into()));
        }
        if !(self.gap_tol > 0.0 && self.gap_tol < 1.0) {
            return Err(CliError::Usage("--gap-tol must lie in (0, 1)".into()));
        }
        let mut g = GlobalOptions {
            order: self.order,
            standardize: !self.no_standardize,
            rank_tol: self.rank_tol,
            ..GlobalOptions::default()
        };
        g.sdp.gap_tol = self.gap_tol;
        Ok(g)
    }
}

fn ba_options(max_iter: usize) -> Result<BaOptions, CliError> {
    if max_iter == 0 {
        return Err(CliError::Usage("--max-ba-iters must be positive".into()));
    }
    Ok(BaOptions {
        max_iter,
        ..BaOptions::default()
    })
}

fn read_matches(path: &Path) -> Result<Vec<PointMatch>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    parse_matches(&text).map_err(|e| match e {
        ParseError::TooFewMatches(_) => CliError::Degenerate(format!("{}: {e}", path.display())),
        ParseError::Syntax { .. } => io_err(path, e),
    })
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| io_err(path, e))
}

/// One-line description of an estimate.
pub fn summary_line(method: Method, f: &FMatrix, matches: &[PointMatch]) -> String {
    let cost = epipolar::algebraic_cost(&f.m, matches);
    let std_cost = epipolar::standardized_cost(&f.m, matches).unwrap_or(f64::NAN);
    let mut s = format!(
        "{}: cost={} std_cost={} det={}",
        method.name(),
        format_sig(cost, 6),
        format_sig(std_cost, 6),
        format_sig(f.det().abs(), 6)
    );
    if let Some(c) = &f.global_certificate {
        s.push_str(&format!(
            " certified={} rank={} lower_bound={} status={:?}",
            c.certified,
            c.rank,
            format_sig(c.lower_bound, 6),
            c.solver_status
        ));
    }
    s
}

fn cmd_estimate(a: &EstimateArgs) -> Result<(), CliError> {
    let gopts = a.est.global_options()?;
    let matches = read_matches(&a.matches)?;
    let dir = &a.out.out;
    create_dir(dir)?;
    let mut first_err = None;
    for method in a.est.method.methods() {
        let res = match method {
            Method::EightPoint => epipolar::eight_point(&matches),
            Method::Global => epipolar::global_f_detailed(&matches, &gopts).and_then(|g| {
                if let Some(p) = &a.dump_sdp {
                    let file = fs::File::create(p).map_err(|e| EpipolarError::Solver(format!("{}: {e}", p.display())))?;
                    g.sdp
                        .write_dump(std::io::BufWriter::new(file))
                        .map_err(|e| EpipolarError::Solver(format!("{}: {e}", p.display())))?;
                }
                Ok(g.f)
            }),
        };
        match res {
            Ok(f) => {
                let path = dir.join(format!("F_{}.txt", method.name()));
                write_file(&path, &f.to_string())?;
                println!("{} file={}", summary_line(method, &f, &matches), path.display());
            }
            Err(e) => {
                eprintln!("polyfund: {}: {e}", method.name());
                first_err.get_or_insert(CliError::from(e));
            }
        }
    }
    first_err.map_or(Ok(()), Err)
}

fn cmd_evaluate(a: &EvaluateArgs) -> Result<(), CliError> {
    let gopts = a.est.global_options()?;
    let ba = ba_options(a.max_ba_iters)?;
    let matches = read_matches(&a.matches)?;
    let dir = &a.out.out;
    create_dir(dir)?;

    let methods = a.est.method.methods();
    let mut reports: Vec<(Method, Option<EvaluationReport>)> = Vec::new();
    let mut first_err = None;
    for &method in &methods {
        match multiview::estimate_and_evaluate(method, &matches, &gopts, &ba) {
            Ok((_, mut r)) => {
                if a.no_timing {
                    r.time_s = 0.0;
                }
                reports.push((method, Some(r)));
            }
            Err(e) => {
                eprintln!("polyfund: {}: {e}", method.name());
                first_err.get_or_insert(CliError::from(e));
                reports.push((method, None));
            }
        }
    }

    let mut csv = String::from(REPORT_HEADER);
    csv.push('\n');
    for (method, r) in &reports {
        match r {
            Some(r) => csv.push_str(&r.csv_row()),
            None => csv.push_str(&format!("{},NaN,NaN,0,NaN", method.name())),
        }
        csv.push('\n');
    }
    write_file(&dir.join("report.csv"), &csv)?;

    let label = a
        .matches
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "data".into());
    let find = |m| reports.iter().find(|(k, _)| *k == m).and_then(|(_, r)| r.clone());
    print!(
        "{}",
        render_table(&label, find(Method::EightPoint).as_ref(), find(Method::Global).as_ref(), !a.no_timing)
    );
    std::io::stdout().flush().map_err(|e| CliError::Io(e.to_string()))?;

    if reports.iter().all(|(_, r)| r.is_none()) {
        return Err(first_err.expect("a failure was recorded"));
    }
    Ok(())
}

fn sweep_config(a: &SimulateArgs) -> Result<SweepConfig, CliError> {
    let mut cfg = match a.sweep {
        SweepArg::Noise => SweepConfig::noise(a.motion),
        SweepArg::Points => SweepConfig::points(a.motion),
    };
    if let Some(g) = &a.grid {
        cfg.grid = g.clone();
    }
    if cfg.grid.is_empty() {
        return Err(CliError::Usage("--grid must not be empty".into()));
    }
    match cfg.kind {
        SweepKind::Noise if cfg.grid.iter().any(|s| !(*s >= 0.0 && s.is_finite())) => {
            return Err(CliError::Usage("noise levels must be finite and non-negative".into()))
        }
        SweepKind::PointCount if cfg.grid.iter().any(|n| !(*n >= 8.0 && n.fract() == 0.0)) => {
            return Err(CliError::Usage("point counts must be integers >= 8".into()))
        }
        _ => {}
    }
    if !(a.sigma >= 0.0 && a.sigma.is_finite()) {
        return Err(CliError::Usage("--sigma must be finite and non-negative".into()));
    }
    if a.npoints < 8 {
        return Err(CliError::Usage("--npoints must be at least 8".into()));
    }
    if a.trials == 0 {
        return Err(CliError::Usage("--trials must be positive".into()));
    }
    cfg.trials = a.trials;
    cfg.base_seed = a.seed;
    cfg.n_points = a.npoints;
    cfg.sigma = a.sigma;
    cfg.global = a.est.global_options()?;
    cfg.ba = ba_options(a.max_ba_iters)?;
    simulator::motion(a.motion)?;
    Ok(cfg)
}

/// `x y` series of one method and metric, in grid order.
pub fn plot_series(cells: &[SweepCell], method: Method, metric: fn(&SweepCell) -> f64) -> String {
    cells
        .iter()
        .filter(|c| c.method == method)
        .map(|c| format!("{} {}\n", format_sig(c.grid_value, 6), format_sig(metric(c), 6)))
        .collect()
}

fn cmd_simulate(a: &SimulateArgs) -> Result<(), CliError> {
    let cfg = sweep_config(a)?;
    let dir = &a.out.out;
    create_dir(dir)?;
    let cells = simulator::run_sweep(&cfg)?;
    let kind = match a.sweep {
        SweepArg::Noise => "noise",
        SweepArg::Points => "points",
    };
    let path = dir.join(format!("sweep_{kind}.csv"));
    write_file(&path, &simulator::sweep_csv(&cells))?;
    if a.plot_data {
        let metrics: [(&str, fn(&SweepCell) -> f64); 3] = [
            ("e_init", |c| c.mean_e_init),
            ("e_ba", |c| c.mean_e_ba),
            ("iters", |c| c.mean_iters),
        ];
        for method in [Method::EightPoint, Method::Global] {
            for (name, metric) in metrics {
                let p = dir.join(format!("{kind}_{name}_{}.dat", method.short()));
                write_file(&p, &plot_series(&cells, method, metric))?;
            }
        }
    }
    let failures: usize = cells.iter().map(|c| c.failures).sum();
    println!("{} cells written to {} ({failures} failed trials)", cells.len(), path.display());
    Ok(())
}

fn cmd_generate(a: &GenerateArgs) -> Result<(), CliError> {
    if !(a.sigma >= 0.0 && a.sigma.is_finite()) {
        return Err(CliError::Usage("--sigma must be finite and non-negative".into()));
    }
    let scene = SceneConfig {
        n_points: a.npoints,
        seed: a.seed,
        ..SceneConfig::default()
    };
    let (rig, matches) = simulator::instance(&scene, a.motion, a.sigma)?;
    let text = write_matches(&matches);
    match &a.out {
        Some(p) => write_file(p, &text)?,
        None => print!("{text}"),
    }
    if let Some(p) = &a.truth {
        let f = FMatrix {
            m: rig.f_true,
            rank2_certified: true,
            global_certificate: None,
        };
        write_file(p, &f.to_string())?;
    }
    Ok(())
}
