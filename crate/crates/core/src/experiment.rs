//! Seeded Monte-Carlo sweeps over the benchmark schemes and their CSV/JSON output.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::channel::SceneConfig;
use crate::config::RunConfig;
use crate::model::fmt_g;
use crate::par::{map_ordered, Execution};
use crate::pdd::{SolveTrace, SolverOptions};
use crate::scenarios::{scheme_channels, scheme_config, solve_scheme, Scheme, SchemeSpec};
use crate::{db_to_linear, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    /// Outer-loop trace at the explicit scene budgets.
    Convergence,
    /// Total number of reflecting elements.
    Elements,
    /// Horizontal coordinate `x` of RIS 1, meters; RIS 2 mirrors it.
    Location,
    /// Total power budget, watts.
    Power,
    /// Radar SINR requirement, dB.
    Eta,
    /// Radar share of the total budget.
    Gamma,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 6] = [
        ExperimentKind::Convergence,
        ExperimentKind::Elements,
        ExperimentKind::Location,
        ExperimentKind::Power,
        ExperimentKind::Eta,
        ExperimentKind::Gamma,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Convergence => "convergence",
            ExperimentKind::Elements => "elements",
            ExperimentKind::Location => "location",
            ExperimentKind::Power => "power",
            ExperimentKind::Eta => "eta",
            ExperimentKind::Gamma => "gamma",
        }
    }

    pub fn default_sweep(self) -> Vec<f64> {
        match self {
            ExperimentKind::Convergence => vec![0.0],
            ExperimentKind::Elements => vec![20.0, 40.0, 60.0, 80.0, 100.0],
            ExperimentKind::Location => (1..=9).map(|i| 5.0 * i as f64).collect(),
            ExperimentKind::Power => vec![9.0, 10.0, 11.0, 12.0, 13.0],
            ExperimentKind::Eta => (20..=30).map(f64::from).collect(),
            ExperimentKind::Gamma => (1..=9).map(|i| 0.1 * i as f64).collect(),
        }
    }

    pub fn default_schemes(self) -> Vec<Scheme> {
        match self {
            ExperimentKind::Convergence => vec![Scheme::DoubleActive],
            _ => Scheme::ALL.to_vec(),
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ExperimentKind::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| {
            let known: Vec<_> = ExperimentKind::ALL.iter().map(|k| k.name()).collect();
            Error::Usage(format!(
                "unknown experiment `{s}`, expected one of {}",
                known.join(", ")
            ))
        })
    }
}

/// Default number of Monte-Carlo seeds per sweep point.
pub const DEFAULT_SEEDS: u64 = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub sweep: Vec<f64>,
    pub schemes: Vec<Scheme>,
    pub seeds: Vec<u64>,
    pub base: SceneConfig,
    pub solver: SolverOptions,
    pub power: SchemeSpec,
}

impl ExperimentSpec {
    /// Spec with the default sweep, schemes and seeds `1..=20` of `kind`.
    pub fn new(kind: ExperimentKind, run: &RunConfig) -> Self {
        Self {
            kind,
            sweep: kind.default_sweep(),
            schemes: kind.default_schemes(),
            seeds: (1..=DEFAULT_SEEDS).collect(),
            base: run.scene.clone(),
            solver: run.solver.clone(),
            power: run.scenario.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sweep.is_empty() || self.seeds.is_empty() || self.schemes.is_empty() {
            return Err(Error::Usage("sweep values, seeds and schemes must be non-empty".into()));
        }
        let span = self.base.ue[0] - self.base.bs[0];
        let bad = self.sweep.iter().find(|&&v| {
            !v.is_finite()
                || match self.kind {
                    ExperimentKind::Convergence | ExperimentKind::Eta => false,
                    ExperimentKind::Elements => v < 2.0 || v.fract() != 0.0,
                    // the two surfaces may not coincide with each other or the end points
                    ExperimentKind::Location => v <= 0.0 || 2.0 * v >= span,
                    ExperimentKind::Power => v <= 0.0,
                    ExperimentKind::Gamma => !(0.0..=1.0).contains(&v),
                }
        });
        if let Some(v) = bad {
            return Err(Error::Usage(format!(
                "sweep value {v} is out of range for `{}`",
                self.kind
            )));
        }
        self.base.validate()?;
        self.solver.validate()?;
        self.power.validate()
    }

    /// Scene of one `(scheme, sweep value)` point.
    pub fn point_config(&self, scheme: Scheme, value: f64) -> Result<SceneConfig> {
        let mut base = self.base.clone();
        let mut power = self.power.clone();
        match self.kind {
            ExperimentKind::Convergence => return scheme_config(scheme, &base, None),
            ExperimentKind::Elements => {
                let n = value as usize;
                base.n1 = n / 2;
                base.n2 = n - n / 2;
            }
            ExperimentKind::Location => {
                base.ris1 = [base.bs[0] + value, base.bs[1]];
                base.ris2 = [base.ue[0] - value, base.ue[1]];
            }
            ExperimentKind::Power => power.q_total = value,
            ExperimentKind::Eta => base.eta = db_to_linear(value),
            ExperimentKind::Gamma => power.gamma = value,
        }
        scheme_config(scheme, &base, Some(&power))
    }

    /// Work items in output order: scheme, then sweep value, then seed.
    pub fn points(&self) -> Vec<(Scheme, f64, u64)> {
        let mut out = Vec::with_capacity(self.schemes.len() * self.sweep.len() * self.seeds.len());
        for &scheme in &self.schemes {
            for &value in &self.sweep {
                for &seed in &self.seeds {
                    out.push((scheme, value, seed));
                }
            }
        }
        out
    }
}

/// Outcome of one `(scheme, sweep value, seed)` point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub scheme: Scheme,
    pub sweep: f64,
    pub seed: u64,
    /// bits/s/Hz.
    pub rate: f64,
    pub feasible: bool,
    /// Outer iterations.
    pub iters: usize,
    /// Final equality-constraint violation of the solver.
    pub violation: f64,
    /// Wall time, milliseconds.
    pub ms: f64,
}

impl ResultRow {
    pub const CSV_HEADER: &'static str = "scheme,sweep,seed,rate,feasible,iters,violation,ms";

    fn failed(scheme: Scheme, sweep: f64, seed: u64, ms: f64) -> Self {
        Self {
            scheme,
            sweep,
            seed,
            rate: 0.0,
            feasible: false,
            iters: 0,
            violation: f64::INFINITY,
            ms,
        }
    }

    /// Same row with the wall time cleared, for comparisons across runs.
    pub fn without_timing(&self) -> Self {
        Self {
            ms: 0.0,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone)]
pub struct PointOutcome {
    pub row: ResultRow,
    /// Solver trace, absent when the point failed before solving.
    pub trace: Option<SolveTrace>,
}

fn run_point(spec: &ExperimentSpec, scheme: Scheme, value: f64, seed: u64) -> PointOutcome {
    let clock = Instant::now();
    let solved = spec.point_config(scheme, value).and_then(|cfg| {
        let ch = scheme_channels(scheme, &cfg, seed)?;
        let opts = SolverOptions {
            init_seed: seed,
            ..spec.solver.clone()
        };
        solve_scheme(scheme, &ch, &cfg, &opts)
    });
    let ms = clock.elapsed().as_secs_f64() * 1e3;
    match solved {
        Ok(out) => {
            let last = out.trace.rows.last();
            let row = ResultRow {
                scheme,
                sweep: value,
                seed,
                rate: out.report.rate,
                feasible: out.report.feasible,
                iters: out.trace.rows.len(),
                violation: last.map_or(0.0, |r| r.violation),
                ms,
            };
            info!(
                "{} {}={} seed {seed}: rate {:.4} feasible {}",
                scheme, spec.kind, value, row.rate, row.feasible
            );
            PointOutcome {
                row,
                trace: Some(out.trace),
            }
        }
        Err(e) => {
            warn!("{} {}={} seed {seed} failed: {e}", scheme, spec.kind, value);
            PointOutcome {
                row: ResultRow::failed(scheme, value, seed, ms),
                trace: None,
            }
        }
    }
}

/// Solves every point of `spec`. Per-point failures become infeasible rows.
pub fn run_points(spec: &ExperimentSpec, exec: Execution) -> Result<Vec<PointOutcome>> {
    spec.validate()?;
    let points = spec.points();
    info!("{}: {} points", spec.kind, points.len());
    Ok(map_ordered(&points, exec, |&(scheme, value, seed)| {
        run_point(spec, scheme, value, seed)
    }))
}

pub fn run_experiment(spec: &ExperimentSpec, exec: Execution) -> Result<Vec<ResultRow>> {
    Ok(run_points(spec, exec)?.into_iter().map(|p| p.row).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            _ => Err(Error::Usage(format!("unknown format `{s}`, expected csv or json"))),
        }
    }
}

fn json_num(v: f64) -> String {
    if v.is_finite() {
        fmt_g(v)
    } else {
        "null".to_string()
    }
}

pub fn write_csv<W: Write>(rows: &[ResultRow], mut w: W) -> std::io::Result<()> {
    writeln!(w, "{}", ResultRow::CSV_HEADER)?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            r.scheme,
            fmt_g(r.sweep),
            r.seed,
            fmt_g(r.rate),
            r.feasible,
            r.iters,
            fmt_g(r.violation),
            fmt_g(r.ms)
        )?;
    }
    Ok(())
}

pub fn write_json<W: Write>(rows: &[ResultRow], mut w: W) -> std::io::Result<()> {
    write!(w, "[")?;
    for (i, r) in rows.iter().enumerate() {
        if i > 0 {
            write!(w, ",")?;
        }
        write!(
            w,
            "\n  {{\"scheme\": \"{}\", \"sweep\": {}, \"seed\": {}, \"rate\": {}, \"feasible\": {}, \"iters\": {}, \"violation\": {}, \"ms\": {}}}",
            r.scheme,
            json_num(r.sweep),
            r.seed,
            json_num(r.rate),
            r.feasible,
            r.iters,
            json_num(r.violation),
            json_num(r.ms)
        )?;
    }
    writeln!(w, "{}]", if rows.is_empty() { "" } else { "\n" })
}

fn with_output<F>(path: Option<&Path>, f: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> std::io::Result<()>,
{
    let io_err = |source| Error::Io {
        path: path.map_or_else(|| "<stdout>".into(), Path::to_path_buf),
        source,
    };
    match path {
        Some(p) => {
            let file = std::fs::File::create(p).map_err(io_err)?;
            let mut w = std::io::BufWriter::new(file);
            f(&mut w).and_then(|_| w.flush()).map_err(io_err)
        }
        None => {
            let stdout = std::io::stdout();
            let mut w = stdout.lock();
            f(&mut w).and_then(|_| w.flush()).map_err(io_err)
        }
    }
}

/// Writes `rows` to `path`, or to standard output when `path` is `None`.
pub fn emit_results(rows: &[ResultRow], format: OutputFormat, path: Option<&Path>) -> Result<()> {
    with_output(path, |w| match format {
        OutputFormat::Csv => write_csv(rows, w),
        OutputFormat::Json => write_json(rows, w),
    })
}

pub const TRACE_CSV_HEADER: &str = "scheme,sweep,seed,iter,al_obj,rate,violation,rho,ms";

/// Outer-loop traces of every solved point, one line per outer iteration.
pub fn write_traces_csv<W: Write>(points: &[PointOutcome], mut w: W) -> std::io::Result<()> {
    writeln!(w, "{TRACE_CSV_HEADER}")?;
    for p in points {
        let Some(trace) = &p.trace else { continue };
        for t in &trace.rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{}",
                p.row.scheme,
                fmt_g(p.row.sweep),
                p.row.seed,
                t.iter,
                fmt_g(t.al_obj),
                fmt_g(t.rate),
                fmt_g(t.violation),
                fmt_g(t.rho),
                fmt_g(t.ms)
            )?;
        }
    }
    Ok(())
}

pub fn emit_traces(points: &[PointOutcome], path: &Path) -> Result<()> {
    with_output(Some(path), |w| write_traces_csv(points, w))
}

/// Statistics of one `(scheme, sweep value)` group.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub scheme: Scheme,
    pub sweep: f64,
    pub n: usize,
    /// Mean rate over all seeds, failed points counted as zero.
    pub mean_rate: f64,
    /// Standard error of the mean rate.
    pub se_rate: f64,
    /// Fraction of seeds whose solution passed the feasibility check.
    pub success: f64,
}

impl Summary {
    pub const CSV_HEADER: &'static str = "scheme,sweep,n,mean_rate,se_rate,success";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.scheme,
            fmt_g(self.sweep),
            self.n,
            fmt_g(self.mean_rate),
            fmt_g(self.se_rate),
            fmt_g(self.success)
        )
    }
}

/// Groups rows by scheme and sweep value, in order of first appearance.
pub fn summarize(rows: &[ResultRow]) -> Vec<Summary> {
    let mut keys: Vec<(Scheme, f64)> = Vec::new();
    for r in rows {
        if !keys.iter().any(|&(s, v)| s == r.scheme && v == r.sweep) {
            keys.push((r.scheme, r.sweep));
        }
    }
    keys.into_iter()
        .map(|(scheme, sweep)| {
            let group: Vec<&ResultRow> = rows.iter().filter(|r| r.scheme == scheme && r.sweep == sweep).collect();
            let n = group.len();
            let nf = n as f64;
            let mean = group.iter().map(|r| r.rate).sum::<f64>() / nf;
            let var = if n > 1 {
                group.iter().map(|r| (r.rate - mean).powi(2)).sum::<f64>() / (nf - 1.0)
            } else {
                0.0
            };
            Summary {
                scheme,
                sweep,
                n,
                mean_rate: mean,
                se_rate: (var / nf).sqrt(),
                success: group.iter().filter(|r| r.feasible).count() as f64 / nf,
            }
        })
        .collect()
}
