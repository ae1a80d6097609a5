//! Command-line front end. [`run`] parses arguments, executes one subcommand
//! and maps the outcome to an exit code: 0 on success, 1 for usage errors,
//! 2 for runtime or solver failures.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use drkm::bench::{self, Exp2Setting, GmmSpec, RecallSetting};
use drkm::io::{self, ResultDocument, SaveOptions, Standardization};
use drkm::model::{empirical_risk, Centroids, DataSet, FitResult, RobustConfig, SoftAssignment};
use drkm::risk::{self, RadiusConfig};
use drkm::seeding::{lloyd_fit, seed_kmeanspp, seed_random};
use drkm::{Error, Rng};

#[derive(Debug, Parser)]
#[command(name = "drkm", version, about = "Distributionally robust k-means under a Wasserstein-2 ball")]
pub struct Cli {
    /// Cap on worker threads; results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Robust fit with a fixed gamma, a radius (joint gamma), or entropy smoothing.
    Fit(FitArgs),
    /// Classical Lloyd iterations.
    Baseline(BaselineArgs),
    /// Worst-case risk of given centroids over a W2 ball.
    WcRisk(WcRiskArgs),
    /// Score points by distance to their assigned center and flag the top z.
    Outliers(OutlierArgs),
    /// High-confidence ambiguity radius from sample size and dimension.
    CalibrateRadius(CalibrateArgs),
    /// Sample a Gaussian mixture described by a JSON spec.
    Synth(SynthArgs),
    /// Synthetic comparisons of the robust fit against Lloyd.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum InitMethod {
    Kmeanspp,
    Random,
    File,
}

#[derive(Debug, Args, Serialize)]
pub struct DataArgs {
    /// Input CSV, one point per row.
    #[arg(long)]
    pub input: PathBuf,
    /// Skip the first row of the input.
    #[arg(long)]
    pub header: bool,
    /// Z-score each feature before fitting; the transform is stored in the output.
    #[arg(long)]
    pub standardize: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct InitArgs {
    #[arg(long)]
    pub k: usize,
    #[arg(long, value_enum, default_value = "kmeanspp")]
    pub init: InitMethod,
    /// Initial centroids (CSV, no header) for `--init file`.
    #[arg(long)]
    pub init_file: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long, default_value_t = 300)]
    pub max_iter: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub init: InitArgs,
    #[arg(long, conflicts_with = "radius", required_unless_present = "radius")]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub radius: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    pub entropy_lambda: f64,
    #[arg(long, default_value_t = 1e-9)]
    pub qp_tol: f64,
    #[arg(long, default_value_t = 10_000)]
    pub qp_max_iter: usize,
    /// Include the soft assignment matrix in the output.
    #[arg(long)]
    pub soft: bool,
    /// Include the worst-case points in the output.
    #[arg(long)]
    pub worst_case: bool,
    /// Output JSON; stdout when omitted.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct BaselineArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub init: InitArgs,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct WcRiskArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub header: bool,
    /// Centroids as a fit result (.json) or a headerless CSV.
    #[arg(long)]
    pub centroids: PathBuf,
    #[arg(long)]
    pub radius: f64,
    #[arg(long, default_value_t = 1e-8)]
    pub gamma_tol: f64,
    /// Also write (gamma, D(gamma)) samples to this CSV.
    #[arg(long)]
    pub curve: Option<PathBuf>,
    #[arg(long, default_value_t = 1.01)]
    pub curve_min: f64,
    #[arg(long, default_value_t = 10.0)]
    pub curve_max: f64,
    #[arg(long, default_value_t = 100)]
    pub curve_points: usize,
}

#[derive(Debug, Args)]
pub struct OutlierArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub header: bool,
    /// Fit result JSON produced by `fit` or `baseline`.
    #[arg(long)]
    pub fit: PathBuf,
    #[arg(long)]
    pub z: usize,
    /// Ground-truth outlier indices (0-based), one per line or comma separated.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Scores CSV (index, score, flagged); stdout when omitted.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub eps: f64,
    #[arg(long)]
    pub dim: usize,
    #[arg(long, default_value_t = 4.0)]
    pub alpha: f64,
    #[arg(long = "fg-C", default_value_t = 1.0)]
    pub fg_c_upper: f64,
    #[arg(long = "fg-c", default_value_t = 1.0)]
    pub fg_c_lower: f64,
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
    /// Number of outliers; switches to the contaminated radius.
    #[arg(long)]
    pub n2: Option<usize>,
    /// W2 distance between inlier and outlier populations.
    #[arg(long = "sep-D", default_value_t = 0.0)]
    pub sep_d: f64,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// JSON mixture spec: {"dim": d, "components": [{"mean": [...], "scale": s, "weight": w}]}.
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Append the component index as a last column.
    #[arg(long)]
    pub labels: bool,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// 1: worst-case risk versus sample size; 2: two clusters with an outlier
    /// clump; 3: outlier recall on contaminated blobs.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
    pub experiment: u8,
    #[arg(long, default_value_t = 30)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Sample sizes for experiment 1.
    #[arg(long, value_delimiter = ',', default_value = "5,10,20,30")]
    pub n_values: Vec<usize>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

/// Parse `args` (including the program name) and run. Output goes to the
/// given writers; the return value is the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    // Output is buffered so the command can run inside a sized thread pool.
    let mut buf = Vec::new();
    let result = match cli.threads {
        Some(0) => Err(Failure::Usage("--threads must be >= 1".into())),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| dispatch(&cli.command, &mut buf)),
            Err(e) => Err(Failure::Runtime(e.to_string())),
        },
        None => dispatch(&cli.command, &mut buf),
    };
    let result = result.and_then(|()| Ok(out.write_all(&buf)?));
    match result {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(err, "error: usage: {msg}");
            1
        }
        Err(Failure::Runtime(msg)) => {
            let _ = writeln!(err, "error: {}", msg.replace('\n', " "));
            2
        }
    }
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

type CliResult = std::result::Result<(), Failure>;

fn dispatch(cmd: &Command, out: &mut dyn Write) -> CliResult {
    match cmd {
        Command::Fit(a) => cmd_fit(a, out),
        Command::Baseline(a) => cmd_baseline(a, out),
        Command::WcRisk(a) => cmd_wc_risk(a, out),
        Command::Outliers(a) => cmd_outliers(a, out),
        Command::CalibrateRadius(a) => cmd_calibrate(a, out),
        Command::Synth(a) => cmd_synth(a, out),
        Command::Bench(a) => cmd_bench(a, out),
    }
}

/// Run `f` against a buffered file, or against `out` when no path is given.
fn with_sink(path: Option<&Path>, out: &mut dyn Write, f: impl FnOnce(&mut dyn Write) -> CliResult) -> CliResult {
    match path {
        Some(p) => {
            let mut w = BufWriter::new(File::create(p).map_err(|e| Failure::Runtime(format!("{}: {e}", p.display())))?);
            f(&mut w)?;
            w.flush()?;
            Ok(())
        }
        None => f(out),
    }
}

fn write_json<T: Serialize>(value: &T, path: Option<&Path>, out: &mut dyn Write) -> CliResult {
    with_sink(path, out, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        writeln!(w)?;
        Ok(())
    })
}

fn write_csv(header: &[&str], rows: Vec<Vec<f64>>, path: Option<&Path>, out: &mut dyn Write) -> CliResult {
    with_sink(path, out, |w| Ok(io::write_csv(w, Some(header), rows)?))
}

fn load_data(a: &DataArgs) -> std::result::Result<(DataSet, Option<Standardization>), Failure> {
    let raw = io::load_csv(&a.input, a.header)?;
    if a.standardize {
        let t = Standardization::fit(&raw);
        Ok((t.apply(&raw)?, Some(t)))
    } else {
        Ok((raw, None))
    }
}

fn initial_centroids(data: &DataSet, a: &InitArgs, transform: Option<&Standardization>) -> std::result::Result<Centroids, Failure> {
    let mut rng = Rng::seed_from(a.seed);
    match a.init {
        InitMethod::Kmeanspp => Ok(seed_kmeanspp(data, a.k, &mut rng)?),
        InitMethod::Random => Ok(seed_random(data, a.k, &mut rng)?),
        InitMethod::File => {
            let path = a.init_file.as_ref().ok_or_else(|| Failure::Usage("--init file needs --init-file".into()))?;
            let rows = io::load_csv(path, false)?;
            let rows = match transform {
                Some(t) => t.apply(&rows)?,
                None => rows,
            };
            if rows.n_points() != a.k {
                return Err(Failure::Usage(format!("--init-file has {} rows but --k is {}", rows.n_points(), a.k)));
            }
            Ok(Centroids::new(&rows.to_rows())?)
        }
    }
}

fn check_positive(name: &str, v: f64) -> CliResult {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Failure::Usage(format!("{name} must be positive, got {v}")))
    }
}

fn cmd_fit(a: &FitArgs, out: &mut dyn Write) -> CliResult {
    if a.entropy_lambda > 0.0 && a.gamma.is_none() {
        return Err(Failure::Usage("--entropy-lambda requires --gamma".into()));
    }
    check_positive("--tol", a.init.tol)?;
    let (data, transform) = load_data(&a.data)?;
    let init = initial_centroids(&data, &a.init, transform.as_ref())?;
    let cfg = RobustConfig {
        gamma: a.gamma,
        radius: a.radius,
        tol: a.init.tol,
        max_iter: a.init.max_iter,
        entropy_lambda: a.entropy_lambda,
        qp_tol: a.qp_tol,
        qp_max_iter: a.qp_max_iter,
        seed: a.init.seed,
    };
    let fit = drkm::fit_from(&data, &init, &cfg)?;
    let opts = SaveOptions {
        soft_assignment: a.soft,
        worst_case_points: a.worst_case,
        config: serde_json::json!({ "command": "fit", "args": a }),
        standardization: transform,
    };
    write_json(&ResultDocument::from_fit(&fit, &opts), a.output.as_deref(), out)
}

fn cmd_baseline(a: &BaselineArgs, out: &mut dyn Write) -> CliResult {
    check_positive("--tol", a.init.tol)?;
    let (data, transform) = load_data(&a.data)?;
    let init = initial_centroids(&data, &a.init, transform.as_ref())?;
    let fit = lloyd_fit(&data, &init, a.init.tol, a.init.max_iter)?;
    let opts = SaveOptions {
        config: serde_json::json!({ "command": "baseline", "args": a }),
        standardization: transform,
        ..SaveOptions::default()
    };
    write_json(&ResultDocument::from_fit(&fit, &opts), a.output.as_deref(), out)
}

/// Data and centroids in the same units: a fit document's stored transform
/// is applied to the data.
fn data_and_centroids(
    input: &Path,
    header: bool,
    centroids: &Path,
) -> std::result::Result<(DataSet, Centroids, Option<ResultDocument>), Failure> {
    let raw = io::load_csv(input, header)?;
    if centroids.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
        let doc = io::load_result(centroids)?;
        let data = match &doc.standardization {
            Some(t) => t.apply(&raw)?,
            None => raw,
        };
        Ok((data, doc.centroids()?, Some(doc)))
    } else {
        let m = io::load_csv(centroids, false)?;
        Ok((raw, Centroids::new(&m.to_rows())?, None))
    }
}

#[derive(Serialize)]
struct WcRiskOutput {
    value: f64,
    gamma_star: f64,
    boundary: bool,
    empirical_risk: f64,
    radius: f64,
}

fn cmd_wc_risk(a: &WcRiskArgs, out: &mut dyn Write) -> CliResult {
    check_positive("--radius", a.radius)?;
    check_positive("--gamma-tol", a.gamma_tol)?;
    let (data, m, _) = data_and_centroids(&a.input, a.header, &a.centroids)?;
    let wc = risk::wc_risk(&data, &m, a.radius, a.gamma_tol)?;
    if let Some(path) = &a.curve {
        if !(a.curve_min > 1.0 && a.curve_max > a.curve_min && a.curve_points >= 2) {
            return Err(Failure::Usage("curve needs 1 < --curve-min < --curve-max and --curve-points >= 2".into()));
        }
        let step = (a.curve_max - a.curve_min) / (a.curve_points - 1) as f64;
        let gammas: Vec<f64> = (0..a.curve_points).map(|i| a.curve_min + step * i as f64).collect();
        let curve = risk::dual_curve(&data, &m, a.radius, &gammas)?;
        let samples = curve.gammas.iter().zip(&curve.values).map(|(g, v)| vec![*g, *v]);
        io::save_csv(path, Some(&["gamma", "dual_value"]), samples)?;
    }
    let output = WcRiskOutput {
        value: wc.value,
        gamma_star: wc.gamma_star,
        boundary: wc.boundary,
        empirical_risk: empirical_risk(&data, &m)?,
        radius: a.radius,
    };
    write_json(&output, None, out)
}

fn read_indices(path: &Path) -> std::result::Result<Vec<usize>, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse().map_err(|_| Failure::Runtime(format!("{}: bad index {t:?}", path.display()))))
        .collect()
}

fn cmd_outliers(a: &OutlierArgs, out: &mut dyn Write) -> CliResult {
    if a.z < 1 {
        return Err(Failure::Usage("--z must be >= 1".into()));
    }
    let (data, m, doc) = data_and_centroids(&a.input, a.header, &a.fit)?;
    let doc = doc.ok_or_else(|| Failure::Usage("--fit must be a JSON fit result".into()))?;
    if doc.hard_labels.len() != data.n_points() {
        return Err(Failure::Runtime("fit result and input disagree on the number of points".into()));
    }
    let assignment = match &doc.soft_assignment {
        Some(cols) => SoftAssignment::from_columns(cols)?,
        None => SoftAssignment::one_hot(&doc.hard_labels, m.k())?,
    };
    let fit = FitResult {
        worst_case_points: data.clone(),
        centroids: m,
        assignment,
        gamma_final: doc.gamma_final.unwrap_or(f64::INFINITY),
        objective_trace: doc.objective_trace.clone(),
        gamma_trace: doc.gamma_trace.clone(),
        iterations: doc.iterations,
        converged: doc.converged,
    };
    let truth = a.truth.as_deref().map(read_indices).transpose()?;
    let report = bench::outlier_report(&data, &fit, a.z, truth.as_deref())?;
    let mut flagged = vec![0.0; data.n_points()];
    for &i in &report.flagged {
        flagged[i] = 1.0;
    }
    let rows = report.scores.iter().enumerate().map(|(i, s)| vec![i as f64, *s, flagged[i]]).collect();
    write_csv(&["index", "score", "flagged"], rows, a.output.as_deref(), out)?;
    if let Some(r) = report.recall {
        // Keep stdout a clean CSV when it carries the scores.
        if a.output.is_some() {
            writeln!(out, "recall,{r}")?;
        } else {
            eprintln!("recall,{r}");
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct CalibrateOutput {
    radius: f64,
    branch: risk::RadiusBranch,
    threshold: f64,
    low_dim_caveat: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    contaminated_radius: Option<f64>,
}

fn cmd_calibrate(a: &CalibrateArgs, out: &mut dyn Write) -> CliResult {
    let cfg = RadiusConfig {
        confidence_eps: a.eps,
        fg_c_upper: a.fg_c_upper,
        fg_c_lower: a.fg_c_lower,
        alpha: a.alpha,
        dim: a.dim,
        contamination: a.n2.map_or(0.0, |n2| n2 as f64 / (a.n + n2).max(1) as f64),
        separation_d: a.sep_d,
        scale: a.scale,
    };
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let detail = risk::calibrate_radius_detail(a.n, &cfg)?;
    let contaminated_radius = a.n2.map(|n2| risk::calibrate_radius_contaminated(a.n, n2, &cfg)).transpose()?;
    let output = CalibrateOutput {
        radius: detail.radius,
        branch: detail.branch,
        threshold: detail.threshold,
        low_dim_caveat: detail.low_dim_caveat,
        contaminated_radius,
    };
    write_json(&output, None, out)
}

fn cmd_synth(a: &SynthArgs, out: &mut dyn Write) -> CliResult {
    let file = File::open(&a.spec).map_err(|e| Failure::Runtime(format!("{}: {e}", a.spec.display())))?;
    let spec: GmmSpec = serde_json::from_reader(std::io::BufReader::new(file))?;
    let (data, labels) = bench::sample_gmm_labeled(&spec, a.n, &mut Rng::seed_from(a.seed))?;
    let rows: Vec<Vec<f64>> = data
        .points()
        .zip(&labels)
        .map(|(p, l)| {
            let mut row = p.to_vec();
            if a.labels {
                row.push(*l as f64);
            }
            row
        })
        .collect();
    with_sink(a.output.as_deref(), out, |w| Ok(io::write_csv(w, None, rows)?))
}

fn cmd_bench(a: &BenchArgs, out: &mut dyn Write) -> CliResult {
    if a.trials < 1 {
        return Err(Failure::Usage("--trials must be >= 1".into()));
    }
    match a.experiment {
        1 => {
            let s = bench::run_experiment1(&a.n_values, a.trials, a.seed)?;
            let rows = s.curve.iter().map(|p| vec![p.n as f64, p.radius, p.mean_wc_drkm, p.mean_wc_km, p.gap()]).collect();
            write_csv(&["n", "radius", "mean_wc_drkm", "mean_wc_km", "gap"], rows, a.output.as_deref(), out)
        }
        2 => {
            let mut rows = Vec::new();
            for setting in [Exp2Setting::LARGE, Exp2Setting::SMALL] {
                let s = bench::run_experiment2(setting, a.trials, a.seed)?;
                rows.push(vec![
                    setting.n_a as f64,
                    setting.n_b as f64,
                    setting.n_outliers as f64,
                    setting.radius,
                    s.mean_accuracy_drkm,
                    s.mean_accuracy_km,
                ]);
            }
            let header = ["n_a", "n_b", "n_outliers", "radius", "mean_accuracy_drkm", "mean_accuracy_km"];
            write_csv(&header, rows, a.output.as_deref(), out)
        }
        _ => {
            let s = bench::run_recall_benchmark(RecallSetting::default(), a.trials, a.seed)?;
            let rows = vec![vec![s.setting.dim as f64, s.setting.fraction, s.setting.separation, s.mean_recall_drkm, s.mean_recall_km]];
            write_csv(&["dim", "fraction", "separation", "mean_recall_drkm", "mean_recall_km"], rows, a.output.as_deref(), out)
        }
    }
}
