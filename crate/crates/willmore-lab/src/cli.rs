//! Command-line front end: verification suites, refinement studies, Wente
//! batches, Lorentz-norm queries and flow runs.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result, bail};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{Value, json};

use crate::confwillmore::SurfaceReport;
use crate::diskgrid::{self, Grid};
use crate::flow::{self, FlowOptions, Preconditioner, StopReason};
use crate::immersion::{self, Exemption, ImmersionPatch, Surface};
use crate::lorentz;

pub const SCHEMA: u32 = 1;

/// A finer-grid residual below this is rounding floor; no ratio is formed.
pub const FLOOR: f64 = 1e-10;

/// Accepted band of refinement ratios for second-order keys.
pub const RATIO_BAND: (f64, f64) = (3.4, 4.6);

pub const THREADS_ENV: &str = "WILLMORE_LAB_THREADS";

#[derive(Debug, Parser)]
#[command(name = "willmore-lab", version, about = "Residual checks for the divergence-form Willmore equation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Residual suite with thresholds; exit code 1 on any non-exempt violation.
    Verify(VerifyArgs),
    /// Per-key refinement ratios between consecutive grids.
    Refine(SurfaceArgs),
    /// Empirical Wente ratios on seeded random pairs.
    Wente(WenteArgs),
    /// Lorentz norm of a field file.
    Lorentz(LorentzArgs),
    /// Willmore-energy descent; writes the trace CSV.
    Flow(FlowArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SurfaceArgs {
    /// Catalog surface such as `sphere(1)`, or `file:<path>` for a binary patch.
    #[arg(long = "surface", required = true)]
    pub surfaces: Vec<String>,
    /// Ambient dimension.
    #[arg(long, default_value_t = 3)]
    pub m: usize,
    /// Grid size, odd; repeat for a refinement study.
    #[arg(long = "n", required = true)]
    pub n: Vec<usize>,
    /// Half-width of the parameter square.
    #[arg(long, default_value_t = 0.4)]
    pub s: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub common: SurfaceArgs,
    /// JSON object of per-key thresholds; key `"*"` sets the default.
    #[arg(long)]
    pub threshold_file: Option<PathBuf>,
    /// Also write CSV rows `surface,m,n,key,value`.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct WenteArgs {
    #[arg(long, default_value_t = 100)]
    pub samples: usize,
    #[arg(long = "n", required = true)]
    pub n: Vec<usize>,
    /// First seed; samples use `seed, seed + 1, ...`.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.5)]
    pub s: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct LorentzArgs {
    /// Binary field file.
    #[arg(long)]
    pub field: PathBuf,
    #[arg(long)]
    pub p: f64,
    /// Second exponent; `inf` for the weak space.
    #[arg(long, value_parser = parse_q)]
    pub q: f64,
    /// Component of a multi-component file; default is the pointwise Euclidean norm.
    #[arg(long)]
    pub component: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PreconditionerArg {
    None,
    Laplace,
    Bilaplace,
}

#[derive(Debug, Clone, Args)]
pub struct FlowArgs {
    #[arg(long)]
    pub surface: String,
    #[arg(long, default_value_t = 3)]
    pub m: usize,
    #[arg(long, default_value_t = 65)]
    pub n: usize,
    #[arg(long, default_value_t = 0.4)]
    pub s: f64,
    #[arg(long, default_value_t = 500)]
    pub max_iters: usize,
    /// ps_norm stop threshold; default is the floor `10 h^2`.
    #[arg(long)]
    pub stop: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub tau0: f64,
    #[arg(long, value_enum, default_value_t = PreconditionerArg::Bilaplace)]
    pub preconditioner: PreconditionerArg,
    /// Trace CSV; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Binary checkpoint of the final patch.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

fn parse_q(s: &str) -> Result<f64, String> {
    match s {
        "inf" | "infinity" | "Inf" => Ok(f64::INFINITY),
        _ => s.parse().map_err(|e| format!("{e}")),
    }
}

/// A parsed `--surface` value.
#[derive(Debug, Clone)]
pub enum SurfaceSource {
    Catalog(Surface),
    File(PathBuf),
}

impl SurfaceSource {
    pub fn parse(s: &str) -> Result<SurfaceSource> {
        match s.strip_prefix("file:") {
            Some(p) => Ok(SurfaceSource::File(p.into())),
            None => Ok(SurfaceSource::Catalog(s.parse().with_context(|| format!("surface '{s}'"))?)),
        }
    }

    pub fn label(&self) -> String {
        match self {
            SurfaceSource::Catalog(s) => s.label(),
            SurfaceSource::File(p) => format!("file:{}", p.display()),
        }
    }

    pub fn exemption(&self) -> Exemption {
        match self {
            SurfaceSource::Catalog(s) => s.expected_nonzero(),
            SurfaceSource::File(_) => Exemption::Keys(&[]),
        }
    }

    /// Samples the catalog surface, or loads the file (whose own grid wins).
    pub fn patch(&self, m: usize, grid: Grid) -> Result<ImmersionPatch> {
        match self {
            SurfaceSource::Catalog(s) => Ok(immersion::make_surface(s, m, grid)?),
            SurfaceSource::File(p) => read_patch(p),
        }
    }
}

pub fn read_patch(path: &Path) -> Result<ImmersionPatch> {
    let mut f = File::open(path).with_context(|| format!("open {}", path.display()))?;
    let comps = diskgrid::read_binary(&mut f)?;
    let grid = *comps[0].grid();
    Ok(ImmersionPatch::from_samples(grid, comps, format!("file:{}", path.display()))?)
}

/// Validated surfaces and grids of a `verify`/`refine` run.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub surfaces: Vec<SurfaceSource>,
    pub m: usize,
    pub grids: Vec<Grid>,
}

impl ExperimentSpec {
    pub fn from_args(a: &SurfaceArgs) -> Result<ExperimentSpec> {
        let surfaces = a.surfaces.iter().map(|s| SurfaceSource::parse(s)).collect::<Result<Vec<_>>>()?;
        if a.n.windows(2).any(|w| w[1] <= w[0]) {
            bail!("grid sizes must be increasing, got {:?}", a.n);
        }
        if a.n.len() > 1 && surfaces.iter().any(|s| matches!(s, SurfaceSource::File(_))) {
            bail!("file surfaces carry their own grid; pass a single --n");
        }
        let grids = a.n.iter().map(|&n| Grid::new(a.s, n)).collect::<Result<Vec<_>, _>>()?;
        Ok(ExperimentSpec { surfaces, m: a.m, grids })
    }
}

/// Residual report of one surface at one grid.
#[derive(Debug, Clone, Serialize)]
pub struct ReportItem {
    pub surface: String,
    pub m: usize,
    pub n: usize,
    pub keys: BTreeMap<String, f64>,
}

pub fn report_item(src: &SurfaceSource, m: usize, grid: Grid) -> Result<ReportItem> {
    let patch = src.patch(m, grid)?;
    let b = immersion::geometry(&patch)?;
    let r = SurfaceReport::compute(&b)?;
    Ok(ReportItem { surface: src.label(), m: patch.m, n: patch.grid.n(), keys: r.residual_report })
}

/// Every (surface, grid) pair in parallel; results in input order.
pub fn run_items(spec: &ExperimentSpec) -> Result<Vec<Vec<ReportItem>>> {
    spec.surfaces
        .par_iter()
        .map(|s| spec.grids.par_iter().map(|&g| report_item(s, spec.m, g)).collect::<Result<Vec<_>>>())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Ratio {
    Value(f64),
    #[serde(serialize_with = "floor_str")]
    Floor,
}

fn floor_str<S: serde::Serializer>(s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str("floor")
}

impl Ratio {
    pub fn of(coarse: f64, fine: f64) -> Ratio {
        if fine.abs() < FLOOR { Ratio::Floor } else { Ratio::Value(coarse / fine) }
    }

    /// Floor, or a ratio inside [`RATIO_BAND`].
    pub fn second_order(&self) -> bool {
        match *self {
            Ratio::Floor => true,
            Ratio::Value(r) => (RATIO_BAND.0..=RATIO_BAND.1).contains(&r),
        }
    }
}

impl std::fmt::Display for Ratio {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Ratio::Floor => write!(f, "floor"),
            Ratio::Value(r) => write!(f, "{r:.4}"),
        }
    }
}

/// Default thresholds, in the units of each key.
pub fn default_thresholds() -> BTreeMap<String, f64> {
    let mut t: BTreeMap<String, f64> = SurfaceReport::keys().map(|k| (k.to_string(), 1e-3)).collect();
    for k in ["L_defect", "S_defect", "R_defect", "srS_resid", "srR_resid", "cwbis_resid", "f_inf"] {
        t.insert(k.into(), 1e-2);
    }
    t
}

pub fn load_thresholds(path: Option<&Path>) -> Result<BTreeMap<String, f64>> {
    let mut t = default_thresholds();
    if let Some(p) = path {
        let v: BTreeMap<String, f64> = serde_json::from_reader(File::open(p).with_context(|| format!("open {}", p.display()))?)
            .with_context(|| format!("parse {}", p.display()))?;
        if let Some(d) = v.get("*") {
            t.values_mut().for_each(|x| *x = *d);
        }
        t.extend(v.into_iter().filter(|(k, _)| k != "*"));
    }
    Ok(t)
}

#[derive(Debug, Clone, Serialize)]
pub struct Violation {
    pub key: String,
    pub n: usize,
    pub value: f64,
    pub threshold: f64,
    pub excess: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RatioViolation {
    pub key: String,
    pub n_coarse: usize,
    pub n_fine: usize,
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SurfaceVerdict {
    pub surface: String,
    pub m: usize,
    pub reports: Vec<ReportItem>,
    /// Exempt keys and whether they were observed above threshold.
    pub nonvanishing: BTreeMap<String, bool>,
    pub violations: Vec<Violation>,
    pub ratio_violations: Vec<RatioViolation>,
    pub pass: bool,
}

/// Thresholds apply to every grid; with two or more grids each non-exempt
/// key above floor must also refine with a ratio in [`RATIO_BAND`].
pub fn judge(src: &SurfaceSource, reports: Vec<ReportItem>, thresholds: &BTreeMap<String, f64>) -> SurfaceVerdict {
    let ex = src.exemption();
    let mut violations = Vec::new();
    let mut nonvanishing = BTreeMap::new();
    for r in &reports {
        for (k, &v) in &r.keys {
            let t = thresholds.get(k).copied().unwrap_or(f64::INFINITY);
            let bad = !(v.abs() <= t);
            if ex.covers(k) {
                *nonvanishing.entry(k.clone()).or_insert(false) |= bad;
            } else if bad {
                violations.push(Violation { key: k.clone(), n: r.n, value: v, threshold: t, excess: v - t });
            }
        }
    }
    let mut ratio_violations = Vec::new();
    for w in reports.windows(2) {
        for (k, &v) in &w[0].keys {
            if ex.covers(k) {
                continue;
            }
            let fine = w[1].keys[k];
            if let r @ Ratio::Value(x) = Ratio::of(v, fine) {
                if !r.second_order() {
                    ratio_violations.push(RatioViolation { key: k.clone(), n_coarse: w[0].n, n_fine: w[1].n, ratio: x });
                }
            }
        }
    }
    let pass = violations.is_empty() && ratio_violations.is_empty();
    SurfaceVerdict {
        surface: src.label(),
        m: reports.first().map_or(0, |r| r.m),
        reports,
        nonvanishing,
        violations,
        ratio_violations,
        pass,
    }
}

fn timestamp() -> u64 {
    std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("create {}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

pub fn verify(a: &VerifyArgs) -> Result<(Value, bool)> {
    let spec = ExperimentSpec::from_args(&a.common)?;
    let thresholds = load_thresholds(a.threshold_file.as_deref())?;
    let items = run_items(&spec)?;
    let verdicts: Vec<SurfaceVerdict> =
        spec.surfaces.iter().zip(items).map(|(s, r)| judge(s, r, &thresholds)).collect();
    let pass = verdicts.iter().all(|v| v.pass);
    if let Some(p) = &a.csv {
        let mut w = csv::Writer::from_path(p)?;
        w.write_record(["surface", "m", "n", "key", "value"])?;
        for v in &verdicts {
            for r in &v.reports {
                for k in SurfaceReport::keys() {
                    w.write_record([r.surface.clone(), r.m.to_string(), r.n.to_string(), k.into(), format!("{:e}", r.keys[k])])?;
                }
            }
        }
        w.flush()?;
    }
    let report = json!({
        "schema": SCHEMA,
        "command": "verify",
        "timestamp": timestamp(),
        "thresholds": thresholds,
        "surfaces": verdicts,
        "pass": pass,
    });
    Ok((report, pass))
}

#[derive(Debug, Clone, Serialize)]
pub struct RefineRow {
    pub surface: String,
    pub m: usize,
    pub key: String,
    pub n_coarse: usize,
    pub n_fine: usize,
    pub coarse: f64,
    pub fine: f64,
    pub ratio: String,
}

pub fn refine_rows(spec: &ExperimentSpec) -> Result<Vec<RefineRow>> {
    if spec.grids.len() < 2 {
        bail!("refine needs at least two grid sizes");
    }
    let items = run_items(spec)?;
    let mut rows = Vec::new();
    for reps in &items {
        for w in reps.windows(2) {
            for k in SurfaceReport::keys() {
                let (c, f) = (w[0].keys[k], w[1].keys[k]);
                rows.push(RefineRow {
                    surface: w[0].surface.clone(),
                    m: w[0].m,
                    key: k.into(),
                    n_coarse: w[0].n,
                    n_fine: w[1].n,
                    coarse: c,
                    fine: f,
                    ratio: Ratio::of(c, f).to_string(),
                });
            }
        }
    }
    Ok(rows)
}

fn refine(a: &SurfaceArgs) -> Result<()> {
    let rows = refine_rows(&ExperimentSpec::from_args(a)?)?;
    let mut w = csv::Writer::from_writer(sink(a.out.as_deref())?);
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct WenteSummary {
    pub n: usize,
    pub samples: usize,
    pub max_ratio_l2: f64,
    pub mean_ratio_l2: f64,
    pub max_ratio_l21: f64,
    pub mean_ratio_l21: f64,
    pub non_finite: usize,
    pub degenerate: usize,
}

pub fn summarize(n: usize, s: &[lorentz::WenteSample]) -> WenteSummary {
    let k = s.len().max(1) as f64;
    WenteSummary {
        n,
        samples: s.len(),
        max_ratio_l2: s.iter().map(|x| x.ratio_l2).fold(0.0, f64::max),
        mean_ratio_l2: s.iter().map(|x| x.ratio_l2).sum::<f64>() / k,
        max_ratio_l21: s.iter().map(|x| x.ratio_l21).fold(0.0, f64::max),
        mean_ratio_l21: s.iter().map(|x| x.ratio_l21).sum::<f64>() / k,
        non_finite: s.iter().filter(|x| !x.finite()).count(),
        degenerate: s.iter().filter(|x| x.degenerate).count(),
    }
}

fn wente(a: &WenteArgs) -> Result<()> {
    let seeds: Vec<u64> = (0..a.samples as u64).map(|i| a.seed + i).collect();
    let mut w = csv::Writer::from_writer(sink(a.out.as_deref())?);
    w.write_record(["seed", "ratio_L2", "ratio_L21", "n"])?;
    let mut summaries = Vec::new();
    for &n in &a.n {
        let samples = lorentz::wente_batch(Grid::new(a.s, n)?, &seeds)?;
        for s in &samples {
            w.write_record([s.seed.to_string(), format!("{:e}", s.ratio_l2), format!("{:e}", s.ratio_l21), n.to_string()])?;
        }
        summaries.push(summarize(n, &samples));
    }
    w.flush()?;
    eprintln!("{}", serde_json::to_string(&json!({ "schema": SCHEMA, "command": "wente", "summary": summaries }))?);
    Ok(())
}

pub fn lorentz_query(a: &LorentzArgs) -> Result<f64> {
    let comps = diskgrid::read_binary(&mut File::open(&a.field).with_context(|| format!("open {}", a.field.display()))?)?;
    let f = match a.component {
        Some(c) => comps.get(c).cloned().with_context(|| format!("component {c} out of range"))?,
        None => {
            let g = *comps[0].grid();
            diskgrid::Field::from_vec(
                g,
                (0..g.len()).map(|k| comps.iter().map(|c| c.data()[k].powi(2)).sum::<f64>().sqrt()).collect(),
            )?
        }
    };
    Ok(lorentz::lorentz_norm(&lorentz::rearrange(&f)?, a.p, a.q)?)
}

/// Runs the flow and writes the trace; `Ok(false)` when the run aborted.
pub fn flow_run(a: &FlowArgs) -> Result<bool> {
    let src = SurfaceSource::parse(&a.surface)?;
    let patch = src.patch(a.m, Grid::new(a.s, a.n)?)?;
    let preconditioner = match a.preconditioner {
        PreconditionerArg::None => Preconditioner::None,
        PreconditionerArg::Laplace => Preconditioner::Laplace,
        PreconditionerArg::Bilaplace => Preconditioner::Bilaplace,
    };
    let opts = FlowOptions { max_iters: a.max_iters, stop: a.stop, tau0: a.tau0, preconditioner, ..FlowOptions::default() };
    let trace = flow::run(&patch, opts)?;
    trace.write_csv(sink(a.out.as_deref())?)?;
    if let Some(p) = &a.checkpoint {
        let comps: Vec<&diskgrid::Field> = trace.last.patch.phi.iter().collect();
        diskgrid::write_binary(&mut BufWriter::new(File::create(p)?), &comps)?;
    }
    let first = trace.rows.first().map(|r| r.ps_norm).unwrap_or(0.0);
    let last = trace.rows.last().copied();
    eprintln!(
        "{}",
        serde_json::to_string(&json!({
            "schema": SCHEMA,
            "command": "flow",
            "surface": src.label(),
            "stop": trace.stop,
            "iterations": last.map_or(0, |r| r.iter),
            "initial_ps_norm": first,
            "final_ps_norm": last.map_or(0.0, |r| r.ps_norm),
            "final_energy": last.map_or(0.0, |r| r.energy),
            "final_conformal_defect": last.map_or(0.0, |r| r.conformal_defect),
            "abort": trace.abort,
        }))?
    );
    Ok(trace.stop != StopReason::Degenerate)
}

/// Caps the global rayon pool from [`THREADS_ENV`].
pub fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let k: usize = v.parse().with_context(|| format!("{THREADS_ENV}={v}"))?;
        rayon::ThreadPoolBuilder::new().num_threads(k.max(1)).build_global()?;
    }
    Ok(())
}

/// Exit codes: 0 success, 1 threshold violation or aborted flow, 2 error.
pub fn run(cli: Cli) -> i32 {
    let res = init_threads().and_then(|_| match &cli.command {
        Command::Verify(a) => {
            let (report, pass) = verify(a)?;
            let mut w = sink(a.common.out.as_deref())?;
            serde_json::to_writer_pretty(&mut w, &report)?;
            writeln!(w)?;
            w.flush()?;
            if !pass {
                for s in report["surfaces"].as_array().into_iter().flatten() {
                    for v in s["violations"].as_array().into_iter().flatten() {
                        eprintln!("{} n={} {}: {} > {} (+{})", s["surface"], v["n"], v["key"], v["value"], v["threshold"], v["excess"]);
                    }
                    for v in s["ratio_violations"].as_array().into_iter().flatten() {
                        eprintln!("{} {}: ratio {} ({} -> {})", s["surface"], v["key"], v["ratio"], v["n_coarse"], v["n_fine"]);
                    }
                }
            }
            Ok(pass)
        }
        Command::Refine(a) => refine(a).map(|_| true),
        Command::Wente(a) => wente(a).map(|_| true),
        Command::Lorentz(a) => {
            println!("{:e}", lorentz_query(a)?);
            Ok(true)
        }
        Command::Flow(a) => flow_run(a),
    });
    match res {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("error: {e:#}");
            2
        }
    }
}
