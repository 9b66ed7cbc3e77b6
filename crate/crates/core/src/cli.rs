//! Command-line front end behind the `cocomb` binary.
//!
//! [`run`] parses the arguments, executes one subcommand and returns the
//! process exit code; failures are reported on standard error as a single
//! JSON object `{"code", "kind", "message"}`.

use std::collections::HashMap;
use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Serialize, Serializer};

use crate::coherent::{self, CoherentResult, Formulation};
use crate::combiners::{self, WeightScheme};
use crate::constraints::ConstraintSystem;
use crate::covariance::{self, CovPattern};
use crate::error::{Error, Result};
use crate::io::{self, Cell, Format, Manifest, ResidualRecord, Table};
use crate::linalg::Matrix;
use crate::metrics;
use crate::panel::ForecastPanel;
use crate::simulation::{run_experiment, ErrorCorrelation, Method, SimulationConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

const DEFAULT_TOL: f64 = 1e-9;

const LONG_ABOUT: &str = "\
Coherent combination of multi-expert forecasts for linearly constrained series.

Inputs are CSV files, or JSON arrays of the same records when the file name ends
in .json. Outputs are written atomically with 17 significant digits, and every
output file gets a sibling <output>.manifest.json holding the configuration, the
library version and the seed.

Covariance estimators (--cov): sample, shrink, bd-expert, bd-expert-shrink,
bd-variable, bd-variable-shrink, diag. All are computed from in-sample residuals
without centering. The shrinkage target is the diagonal; the intensity is
estimated on residuals standardized by their root mean square as the summed
estimated variances of the off-diagonal correlations over their summed squares,
clipped to [0, 1] (1 when every correlation is zero). Block estimators draw one
intensity per block. An estimate from fewer observations than its dimension is
flagged singular and rejected by solvers that invert it.

Exit codes: 0 success, 2 bad arguments, 3 data or schema error, 4 numerical
failure (singular or indefinite covariance, rank-deficient constraints).";

const EVALUATE_ABOUT: &str = "\
Accuracy of competing forecasts against a benchmark.

Actuals: series,horizon,index,value. Forecasts: method,series,horizon,index,value,
where index is the forecast origin. Every method must cover every actual. The
output lists AvgRelMAE and AvgRelMSE (geometric means over series of MAE and MSE
ratios to the benchmark) per horizon, plus their geometric mean over horizons on
the row labelled with the horizon span. Cells with zero benchmark loss are left
out and counted in a warning.

With --dm, pairwise Diebold-Mariano tests are run per series on absolute and on
squared losses. For a horizon span the loss is averaged over the horizons of each
origin present at all of them. The long-run variance of the loss differential
uses a Bartlett kernel truncated at h-1 lags, h being the largest horizon; there
is no small-sample correction and p-values are two-sided standard normal. Cell
(method, versus) is the percentage of series where method has the lower loss with
p below --dm-level.";

#[derive(Debug, Parser, Serialize)]
#[command(name = "cocomb", version, about = "Coherent combination of multi-expert forecasts", long_about = LONG_ABOUT)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Command {
    /// Combine experts variable by variable (incoherent result).
    Combine(CombineArgs),
    /// Coherent forecasts by optimal coherent combination or a sequential baseline.
    Reconcile(ReconcileArgs),
    /// Monte-Carlo comparison of the methods on the seven-variable hierarchy.
    Simulate(SimulateArgs),
    #[command(long_about = EVALUATE_ABOUT)]
    /// Accuracy tables and Diebold-Mariano comparisons.
    Evaluate(EvaluateArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Combine(_) => "combine",
            Command::Reconcile(_) => "reconcile",
            Command::Simulate(_) => "simulate",
            Command::Evaluate(_) => "evaluate",
        }
    }
}

fn display<T: fmt::Display, S: Serializer>(v: &T, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_str(v)
}

fn display_opt<T: fmt::Display, S: Serializer>(v: &Option<T>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match v {
        Some(v) => s.collect_str(v),
        None => s.serialize_none(),
    }
}

fn display_vec<T: fmt::Display, S: Serializer>(v: &[T], s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(v.iter().map(|x| x.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum CombineScheme {
    /// Equal weights.
    Ew,
    /// Inverse error variances (default --cov diag).
    OwVar,
    /// Minimum variance over the simplex (default --cov bd-variable).
    OwCov,
    /// Minimum-MSE combination of all forecasts (default --cov shrink).
    MultiTask,
}

#[derive(Debug, Args, Serialize)]
struct CombineArgs {
    /// Base forecasts: series,expert[,horizon],value.
    #[arg(long)]
    panel: PathBuf,
    /// In-sample residuals (actual minus fitted): t,series,expert,value.
    /// Required by every scheme but ew.
    #[arg(long)]
    residuals: Option<PathBuf>,
    /// Constraint file; only its variable list is used. Defaults to the
    /// series of the panel in order of appearance.
    #[arg(long)]
    constraints: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = CombineScheme::Ew)]
    scheme: CombineScheme,
    /// Covariance estimator (see the top-level help).
    #[arg(long)]
    #[serde(serialize_with = "display_opt")]
    cov: Option<CovPattern>,
    /// Output file: series[,horizon],value.
    #[arg(long)]
    output: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum ReconcileMethod {
    /// Optimal coherent combination (default --cov bd-expert-shrink).
    Occ,
    /// Reconcile a single expert (default --cov shrink).
    Mint,
    /// Reconcile each expert with its own covariance, then average; balanced panels only (default --cov shrink).
    Src,
    /// Equal-weight combination, then reconciliation (default --cov shrink).
    ScrEw,
    /// Inverse-variance combination, then reconciliation (default --cov shrink).
    ScrVar,
    /// Simplex minimum-variance combination, then reconciliation (default --cov shrink).
    ScrCov,
}

#[derive(Debug, Args, Serialize)]
struct ReconcileArgs {
    /// Constraints: JSON {"A","upper","bottom"} or {"C","vars"}, or a CSV
    /// with a header of variable names and one row per constraint.
    #[arg(long)]
    constraints: PathBuf,
    /// Base forecasts: series,expert[,horizon],value.
    #[arg(long)]
    panel: PathBuf,
    /// In-sample residuals (actual minus fitted): t,series,expert,value.
    /// The same residuals serve every horizon.
    #[arg(long)]
    residuals: PathBuf,
    #[arg(long, value_enum, default_value_t = ReconcileMethod::Occ)]
    method: ReconcileMethod,
    /// Solver for occ: zc-be, zc-bv, struct-be or struct-bv.
    #[arg(long, default_value = "zc-be")]
    #[serde(serialize_with = "display")]
    formulation: Formulation,
    /// Covariance estimator. For occ it is the covariance of all base
    /// forecasts; for mint and src of each expert's forecasts; for scr-* of
    /// the combined forecast. Combination weights of scr-var and scr-cov use
    /// diag and bd-variable.
    #[arg(long)]
    #[serde(serialize_with = "display_opt")]
    cov: Option<CovPattern>,
    /// Maximum allowed constraint violation of the output, relative to
    /// 1 + its largest absolute value.
    #[arg(long, default_value_t = DEFAULT_TOL)]
    tol: f64,
    /// Output file: series[,horizon],value.
    #[arg(long)]
    output: PathBuf,
    /// Also write the weight matrix Ψ (one row per base forecast).
    #[arg(long)]
    emit_weights: Option<PathBuf>,
    /// Also write the error covariance of the coherent forecasts.
    #[arg(long)]
    emit_cov: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Debug, Args, Serialize)]
struct SimulateArgs {
    /// Parameter setting, 1 to 6.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=6))]
    setting: u8,
    /// Number of experts.
    #[arg(long = "p", default_value_t = 4)]
    p: usize,
    /// Training length used for the covariance estimates.
    #[arg(long, default_value_t = 200)]
    n_train: usize,
    /// Test length.
    #[arg(long, default_value_t = 100)]
    test_len: usize,
    #[arg(long, default_value_t = 500)]
    reps: usize,
    /// Every expert forecasts every variable (the default).
    #[arg(long, conflicts_with = "unbalanced")]
    balanced: bool,
    /// Mask forecasts with the two-class participation scheme.
    #[arg(long)]
    unbalanced: bool,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Comma-separated methods; all applicable ones when omitted.
    #[arg(long, value_delimiter = ',')]
    #[serde(serialize_with = "display_vec")]
    methods: Vec<Method>,
    #[arg(long, value_enum, default_value_t = ErrorCorrelation::RandomSpd)]
    error_corr: ErrorCorrelation,
    /// Output file: setting,p,n_train,panel,method,avg_rel_mae,avg_rel_mse.
    #[arg(long)]
    output: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

/// Inclusive horizon range `a:b` (or a single horizon `a`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct HorizonSpan {
    first: u32,
    last: u32,
}

impl HorizonSpan {
    fn horizons(self) -> Vec<u32> {
        (self.first..=self.last).collect()
    }
}

impl fmt::Display for HorizonSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.first, self.last)
    }
}

fn parse_span(s: &str) -> std::result::Result<HorizonSpan, String> {
    let (a, b) = s.split_once(':').unwrap_or((s, s));
    let parse = |v: &str| v.trim().parse::<u32>().map_err(|_| format!("bad horizon `{v}`"));
    let (first, last) = (parse(a)?, parse(b)?);
    if first == 0 || last < first {
        return Err(format!("horizon span `{s}` must be a:b with 1 <= a <= b"));
    }
    Ok(HorizonSpan { first, last })
}

#[derive(Debug, Args, Serialize)]
struct EvaluateArgs {
    /// Actual values: series,horizon,index,value.
    #[arg(long)]
    actuals: PathBuf,
    /// Forecasts: method,series,horizon,index,value.
    #[arg(long)]
    forecasts: PathBuf,
    #[arg(long, default_value = "ew")]
    benchmark: String,
    /// Horizons to evaluate, e.g. 1:7; all horizons of the actuals by default.
    #[arg(long, value_parser = parse_span)]
    #[serde(serialize_with = "display_opt")]
    horizons: Option<HorizonSpan>,
    /// Run the pairwise Diebold-Mariano tests.
    #[arg(long)]
    dm: bool,
    #[arg(long, default_value_t = 0.05)]
    dm_level: f64,
    /// Where to write the DM table; <output>.dm.<csv|json> by default.
    #[arg(long)]
    dm_output: Option<PathBuf>,
    /// Output file: method,horizon,avg_rel_mae,avg_rel_mse.
    #[arg(long)]
    output: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = e.print();
                    EXIT_OK
                }
                _ => {
                    let msg = e.render().to_string();
                    report(EXIT_USAGE, "usage", msg.trim_end());
                    EXIT_USAGE
                }
            };
        }
    };
    match execute(&cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let code = exit_code(&e);
            report(code, error_kind(&e), &e.to_string());
            code
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_numerical() {
        EXIT_NUMERICAL
    } else {
        EXIT_DATA
    }
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::Dimension(_) => "dimension",
        Error::NonFinite(_) => "non-finite",
        Error::RankDeficient(_) => "rank-deficient",
        Error::UnknownLabel(_) => "unknown-label",
        Error::DuplicateForecast { .. } => "duplicate-forecast",
        Error::MissingSeries(_) => "missing-series",
        Error::MissingResidual { .. } => "missing-residual",
        Error::InsufficientData(_) => "insufficient-data",
        Error::ZeroVariance(_) => "zero-variance",
        Error::NotPositiveDefinite(_) => "not-positive-definite",
        Error::SingularCovariance(_) => "singular-covariance",
        Error::Unsupported(_) => "unsupported",
        Error::NoConvergence(_) => "no-convergence",
        Error::Schema(_) => "schema",
        Error::Io(_) => "io",
        Error::Csv(_) => "csv",
        Error::Json(_) => "json",
    }
}

fn report(code: i32, kind: &str, message: &str) {
    let v = serde_json::json!({ "code": code, "kind": kind, "message": message });
    eprintln!("{v}");
}

fn execute(cmd: &Command) -> Result<()> {
    match cmd {
        Command::Combine(a) => combine(a, cmd),
        Command::Reconcile(a) => reconcile(a, cmd),
        Command::Simulate(a) => simulate(a, cmd),
        Command::Evaluate(a) => evaluate(a, cmd),
    }
}

fn write_output(path: &Path, format: Format, table: &Table, cmd: &Command, seed: Option<u64>) -> Result<()> {
    io::write_atomic(path, &table.render(format)?)?;
    io::write_manifest(
        path,
        &Manifest {
            tool: "cocomb",
            version: env!("CARGO_PKG_VERSION"),
            command: cmd.name(),
            seed,
            config: cmd,
        },
    )
}

fn with_horizon(header: &[&str], horizon: bool) -> Table {
    if horizon {
        let mut h = vec![header[0], "horizon"];
        h.extend_from_slice(&header[1..]);
        Table::new(&h)
    } else {
        Table::new(header)
    }
}

fn row(label: &str, horizon: Option<u32>, rest: impl IntoIterator<Item = Cell>) -> Vec<Cell> {
    let mut r = vec![Cell::Text(label.to_string())];
    if let Some(h) = horizon {
        r.push(Cell::Int(h.into()));
    }
    r.extend(rest);
    r
}

fn combine(a: &CombineArgs, cmd: &Command) -> Result<()> {
    let groups = io::read_panel(&a.panel)?;
    let sys = match &a.constraints {
        Some(path) => io::read_constraints(path)?,
        None => {
            let mut labels: Vec<String> = Vec::new();
            for e in groups.iter().flat_map(|g| &g.1) {
                if !labels.contains(&e.series) {
                    labels.push(e.series.clone());
                }
            }
            ConstraintSystem::unconstrained(labels)?
        }
    };
    let records: Option<Vec<ResidualRecord>> = a.residuals.as_deref().map(io::read_records).transpose()?;
    let mut table = with_horizon(&["series", "value"], groups[0].0.is_some());
    for (h, entries) in &groups {
        let panel = ForecastPanel::build(entries, &sys)?;
        let residuals = || -> Result<Matrix> {
            let recs = records.as_ref().ok_or_else(|| {
                Error::Schema(format!("--residuals is required by scheme {:?}", a.scheme))
            })?;
            io::residual_matrix(&panel, recs)
        };
        let y = match a.scheme {
            CombineScheme::Ew => combiners::combine_single_task(&panel, WeightScheme::Equal, None)?,
            CombineScheme::OwVar => {
                let cov = covariance::estimate(&residuals()?, &panel, a.cov.unwrap_or(CovPattern::Diagonal))?;
                combiners::combine_single_task(&panel, WeightScheme::InverseVariance, Some(&cov))?
            }
            CombineScheme::OwCov => {
                let cov = covariance::estimate(&residuals()?, &panel, a.cov.unwrap_or(CovPattern::BlockVariable))?;
                combiners::combine_single_task(&panel, WeightScheme::SimplexCovariance, Some(&cov))?
            }
            CombineScheme::MultiTask => {
                let cov = covariance::estimate(&residuals()?, &panel, a.cov.unwrap_or(CovPattern::Shrunk))?;
                combiners::combine_multi_task(&panel, &cov)?.y_c
            }
        };
        for (i, s) in sys.labels().iter().enumerate() {
            table.push(row(s, *h, [Cell::Num(y[i])]));
        }
    }
    write_output(&a.output, a.format, &table, cmd, None)
}

fn reconcile_panel(
    a: &ReconcileArgs,
    panel: &ForecastPanel,
    sys: &ConstraintSystem,
    res: &Matrix,
) -> Result<CoherentResult> {
    let single_cov = |e: &Matrix, y: &crate::linalg::Vector| -> Result<Matrix> {
        let single = ForecastPanel::single(sys, y)?;
        let cov = covariance::estimate(e, &single, a.cov.unwrap_or(CovPattern::Shrunk))?;
        Ok(cov.require_nonsingular()?.clone())
    };
    match a.method {
        ReconcileMethod::Occ => {
            let cov = covariance::estimate(res, panel, a.cov.unwrap_or(CovPattern::BlockExpertShrunk))?;
            coherent::occ(panel, sys, &cov, a.formulation)
        }
        ReconcileMethod::Mint => {
            if panel.p() != 1 || !panel.is_balanced() {
                return Err(Error::Schema(format!(
                    "mint reconciles one expert forecasting every variable; the panel has {} experts \
                     (use occ to combine several)",
                    panel.p()
                )));
            }
            let w = single_cov(res, panel.y_hat())?;
            coherent::mint_reconcile(panel.y_hat(), sys, &w)
        }
        ReconcileMethod::Src => {
            if !panel.is_balanced() {
                return Err(Error::Unsupported(
                    "src needs every expert to forecast every variable".into(),
                ));
            }
            let covs = (0..panel.p())
                .map(|j| {
                    let r = panel.expert_range(j);
                    let e = res.rows(r.start, r.len()).into_owned();
                    single_cov(&e, &panel.y_hat().rows(r.start, r.len()).into_owned())
                })
                .collect::<Result<Vec<_>>>()?;
            coherent::src(panel, sys, &covs)
        }
        ReconcileMethod::ScrEw | ReconcileMethod::ScrVar | ReconcileMethod::ScrCov => {
            let (scheme, comb_cov) = match a.method {
                ReconcileMethod::ScrEw => (WeightScheme::Equal, None),
                ReconcileMethod::ScrVar => (WeightScheme::InverseVariance, Some(covariance::diagonal(res)?)),
                _ => (
                    WeightScheme::SimplexCovariance,
                    Some(covariance::block_by_variable(res, panel, false)?),
                ),
            };
            let weights = combiners::single_task_weights(panel, scheme, comb_cov.as_ref())?;
            let combined = combiners::combined_residuals(panel, &weights, res)?;
            let w = single_cov(&combined, &weights.apply(panel, panel.y_hat()))?;
            coherent::scr(panel, sys, scheme, comb_cov.as_ref(), &w)
        }
    }
}

fn reconcile(a: &ReconcileArgs, cmd: &Command) -> Result<()> {
    if !(a.tol > 0.0) {
        return Err(Error::Schema(format!("--tol must be positive, got {}", a.tol)));
    }
    let sys = io::read_constraints(&a.constraints)?;
    let groups = io::read_panel(&a.panel)?;
    let records: Vec<ResidualRecord> = io::read_records(&a.residuals)?;
    let horizon = groups[0].0.is_some();
    let labels = sys.labels();

    let mut out = with_horizon(&["series", "value"], horizon);
    let mut header = vec!["series", "expert"];
    header.extend(labels.iter().map(String::as_str));
    let mut weights = with_horizon(&header, horizon);
    let mut header = vec!["series"];
    header.extend(labels.iter().map(String::as_str));
    let mut cov_table = with_horizon(&header, horizon);

    for (h, entries) in &groups {
        let panel = ForecastPanel::build(entries, &sys)?;
        let res = io::residual_matrix(&panel, &records)?;
        let result = reconcile_panel(a, &panel, &sys, &res)?;
        let y = &result.y_tilde;
        let violation = sys.coherence_error(y)?;
        let scale = 1.0 + crate::linalg::max_abs_vec(y);
        if violation > a.tol * scale {
            return Err(Error::NoConvergence(format!(
                "coherence check failed: constraint violation {violation:e} exceeds {:e}",
                a.tol * scale
            )));
        }
        for (i, s) in labels.iter().enumerate() {
            out.push(row(s, *h, [Cell::Num(y[i])]));
        }
        for (k, &(i, j)) in panel.cells().iter().enumerate() {
            let mut r = row(&labels[i], *h, [Cell::Text(panel.experts()[j].clone())]);
            r.extend((0..sys.n()).map(|c| Cell::Num(result.psi[(k, c)])));
            weights.push(r);
        }
        for (i, s) in labels.iter().enumerate() {
            cov_table.push(row(s, *h, (0..sys.n()).map(|c| Cell::Num(result.w_tilde[(i, c)]))));
        }
    }
    write_output(&a.output, a.format, &out, cmd, None)?;
    if let Some(path) = &a.emit_weights {
        write_output(path, a.format, &weights, cmd, None)?;
    }
    if let Some(path) = &a.emit_cov {
        write_output(path, a.format, &cov_table, cmd, None)?;
    }
    Ok(())
}

fn simulate(a: &SimulateArgs, cmd: &Command) -> Result<()> {
    let balanced = !a.unbalanced;
    let mut cfg = SimulationConfig::new(a.setting, a.p, a.n_train, balanced)?;
    cfg.test_len = a.test_len;
    cfg.replications = a.reps;
    cfg.seed = a.seed;
    cfg.error_corr = a.error_corr;
    cfg.validate()?;
    let methods: Vec<Method> = if a.methods.is_empty() {
        Method::ALL.into_iter().filter(|m| balanced || !m.needs_balanced()).collect()
    } else {
        a.methods.clone()
    };
    let result = run_experiment(&cfg, &methods)?;
    let mut table = Table::new(&["setting", "p", "n_train", "panel", "method", "avg_rel_mae", "avg_rel_mse"]);
    let panel = if balanced { "balanced" } else { "unbalanced" };
    for (k, m) in result.methods.iter().enumerate() {
        table.push(vec![
            Cell::Int(a.setting.into()),
            Cell::Int(a.p as i64),
            Cell::Int(a.n_train as i64),
            Cell::Text(panel.into()),
            Cell::Text(m.to_string()),
            Cell::Num(result.avg_rel_mae[k]),
            Cell::Num(result.avg_rel_mse[k]),
        ]);
    }
    write_output(&a.output, a.format, &table, cmd, Some(a.seed))
}

fn evaluate(a: &EvaluateArgs, cmd: &Command) -> Result<()> {
    if !(a.dm_level > 0.0 && a.dm_level < 1.0) {
        return Err(Error::Schema(format!("--dm-level must lie in (0, 1), got {}", a.dm_level)));
    }
    let actuals: Vec<io::ActualRecord> = io::read_records(&a.actuals)?;
    let forecasts: Vec<io::ForecastRecord> = io::read_records(&a.forecasts)?;
    let span = a.horizons.map(HorizonSpan::horizons);
    let data = io::align_evaluation(&actuals, &forecasts, span.as_deref())?;
    let acc = metrics::accuracy(&data.actuals, &data.forecasts, &a.benchmark)?;

    let span_label = match a.horizons {
        Some(s) => s.to_string(),
        None => format!("{}:{}", data.horizons[0], data.horizons[data.horizons.len() - 1]),
    };
    let mut table = Table::new(&["method", "horizon", "avg_rel_mae", "avg_rel_mse"]);
    for (m, name) in acc.methods.iter().enumerate() {
        for (k, h) in data.horizons.iter().enumerate() {
            table.push(vec![
                Cell::Text(name.clone()),
                Cell::Text(h.to_string()),
                Cell::Num(acc.avg_rel_mae[m][k]),
                Cell::Num(acc.avg_rel_mse[m][k]),
            ]);
        }
        table.push(vec![
            Cell::Text(name.clone()),
            Cell::Text(span_label.clone()),
            Cell::Num(acc.overall_mae[m]),
            Cell::Num(acc.overall_mse[m]),
        ]);
    }
    write_output(&a.output, a.format, &table, cmd, None)?;

    if a.dm {
        let dm = dm_table(&data, a.dm_level)?;
        let path = a.dm_output.clone().unwrap_or_else(|| {
            let ext = match a.format {
                Format::Csv => ".dm.csv",
                Format::Json => ".dm.json",
            };
            let mut p = a.output.as_os_str().to_owned();
            p.push(ext);
            p.into()
        });
        write_output(&path, a.format, &dm, cmd, None)?;
    }
    Ok(())
}

/// Per-origin losses averaged over horizons: `[method][series][origin]`.
fn horizon_averaged_losses(data: &io::EvaluationData, loss: fn(f64) -> f64) -> Result<Vec<Vec<Vec<f64>>>> {
    let lookup: Vec<HashMap<i64, usize>> = data
        .indices
        .iter()
        .map(|idx| idx.iter().enumerate().map(|(q, &i)| (i, q)).collect())
        .collect();
    let origins: Vec<i64> = data.indices[0]
        .iter()
        .copied()
        .filter(|i| lookup.iter().all(|l| l.contains_key(i)))
        .collect();
    if origins.is_empty() {
        return Err(Error::InsufficientData("no forecast origin is shared by every horizon".into()));
    }
    let n = data.series.len();
    let hs = data.horizons.len() as f64;
    Ok(data
        .forecasts
        .iter()
        .map(|f| {
            (0..n)
                .map(|s| {
                    origins
                        .iter()
                        .map(|o| {
                            (0..data.horizons.len())
                                .map(|k| {
                                    let q = lookup[k][o];
                                    loss(data.actuals[k][(q, s)] - f.by_horizon[k][(q, s)])
                                })
                                .sum::<f64>()
                                / hs
                        })
                        .collect()
                })
                .collect()
        })
        .collect())
}

fn dm_table(data: &io::EvaluationData, level: f64) -> Result<Table> {
    let h = *data.horizons.iter().max().expect("at least one horizon") as usize;
    let mut table = Table::new(&["loss", "method", "versus", "percent"]);
    let kinds: [(&str, fn(f64) -> f64); 2] = [("abs", f64::abs), ("sq", |e| e * e)];
    for (kind, loss) in kinds {
        let losses = horizon_averaged_losses(data, loss)?;
        let pct = metrics::dm_matrix(&losses, h, level)?;
        for (r, a) in data.forecasts.iter().enumerate() {
            for (c, b) in data.forecasts.iter().enumerate() {
                if r != c {
                    table.push(vec![
                        Cell::Text(kind.into()),
                        Cell::Text(a.method.clone()),
                        Cell::Text(b.method.clone()),
                        Cell::Num(pct[(r, c)]),
                    ]);
                }
            }
        }
    }
    Ok(table)
}
