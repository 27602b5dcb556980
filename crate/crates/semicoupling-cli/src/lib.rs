//! Config-driven experiment driver.
//!
//! Every invocation reads one JSON [`RunConfig`] (each field has a default,
//! flags override the file), executes a single command, and writes its
//! artifacts — plan/diagram JSON, estimate CSV, SVG renders, and a run
//! report — into the output directory.
//!
//! Exit codes: `0` success, `1` a check failed (or the run itself failed),
//! `2` invalid configuration. All failures also emit a one-line JSON
//! diagnostic on stderr. Artifacts carry no clocks or machine state, so a
//! rerun with the same config is byte-identical.

pub mod render;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use semicoupling::checks::{
    check_cyclical_monotonicity, check_efficiency, check_first_marginal,
    check_sequential_monotonicity, check_volumes_plan, CheckReport,
};
use semicoupling::experiments::{
    bounds_suite, default_resolution, estimate_chat_n_with, estimate_cn_with, max_generation,
    stabilization_study, BoundsReport, EstimateRecord, StabilizationRecord, CSV_HEADER,
};
use semicoupling::geometry::{ConvexCell, Cuboid, DyadicBox, GridMeasure, PointPattern};
use semicoupling::laguerre::{solve_laguerre, DEFAULT_MAX_ITER, DEFAULT_TOLERANCE};
use semicoupling::pointprocess::PppSampler;
use semicoupling::solver::{solve_semicoupling, Solved, TransportPlan};
use semicoupling::{Error, Result, Scale};

pub const REPORT_SCHEMA: &str = "run/1";
pub const DIAGRAM_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Solve,
    Laguerre,
    Estimate,
    Stabilize,
    Check,
    Bounds,
    Render,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Quantity {
    #[serde(rename = "c_n")]
    CostPerVolume,
    #[serde(rename = "chat_n")]
    BalancedCostPerVolume,
}

/// Scale as written in config files; the ambient dimension comes from `d`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScaleSpec {
    Power { p: f64 },
    ConcaveLog { alpha: f64 },
    Table { knots: Vec<(f64, f64)> },
}

impl ScaleSpec {
    pub fn to_scale(&self, d: u32) -> Result<Scale> {
        match self {
            ScaleSpec::Power { p } => Scale::power(*p, d as usize),
            ScaleSpec::ConcaveLog { alpha } => Scale::concave_log(*alpha, d as usize),
            ScaleSpec::Table { knots } => Scale::table(knots.clone(), d as usize),
        }
    }
}

/// Where the target points come from.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum PatternSpec {
    /// Poisson sample of intensity `beta` on the box.
    Poisson,
    /// Fixed number of independent uniform points on the box.
    Uniform { count: u32 },
    /// Explicit points; `mults` defaults to `mult` everywhere.
    Points { points: Vec<[f64; 3]>, #[serde(default)] mults: Option<Vec<u32>> },
}

/// One run. Defaults (the `Default` impl is the single source):
///
/// quadratic scale, `d = 2`, unit intensity, generation `n = 0` at the
/// origin, dimension-default resolution (`m = 0`), margin 2, 100 replicas,
/// seed 1, quantity `c_n`, Poisson pattern with unit masses, 2000 sampled
/// cycles of length at most 4, 5 efficiency sub-boxes, auto generation cap
/// (`max_n = 0`), bounds sweep over `d = 1..=50`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: Option<Command>,
    pub scale: ScaleSpec,
    pub d: u32,
    pub beta: f64,
    pub n: u32,
    pub z: [i64; 3],
    pub m: u32,
    pub margin: i64,
    pub replicas: u32,
    pub seed: u64,
    pub quantity: Quantity,
    pub pattern: PatternSpec,
    /// Global mass denominator: every target mass is a multiple of `1/denom`.
    pub denom: u32,
    /// Default numerator per target.
    pub mult: u32,
    pub cycles: u32,
    pub max_len: u32,
    pub sub_boxes: u32,
    pub max_n: u32,
    pub d_values: Vec<u32>,
    /// Existing artifact consumed by `render` and `check`.
    pub input: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            command: None,
            scale: ScaleSpec::Power { p: 2.0 },
            d: 2,
            beta: 1.0,
            n: 0,
            z: [0, 0, 0],
            m: 0,
            margin: 2,
            replicas: 100,
            seed: 1,
            quantity: Quantity::CostPerVolume,
            pattern: PatternSpec::Poisson,
            denom: 1,
            mult: 1,
            cycles: 2000,
            max_len: 4,
            sub_boxes: 5,
            max_n: 0,
            d_values: Vec::new(),
            input: None,
            out_dir: None,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "semicoupling", about = "Semicoupling solver and experiment driver")]
pub struct Cli {
    /// JSON run configuration; the flags below override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub command: Option<Command>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub replicas: Option<u32>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

enum Outcome {
    Success,
    CheckFailed(String),
}

pub fn run_main(cli: Cli) -> i32 {
    let mut cfg = match load_config(cli.config.as_deref()) {
        Ok(cfg) => cfg,
        Err(msg) => return diag(2, "config", &msg),
    };
    if let Some(c) = cli.command {
        cfg.command = Some(c);
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(r) = cli.replicas {
        cfg.replicas = r;
    }
    if let Some(dir) = cli.out_dir {
        cfg.out_dir = Some(dir);
    }
    let Some(command) = cfg.command else {
        return diag(2, "config", "no command: pass --command or set it in the config");
    };
    match execute(command, &cfg) {
        Ok(Outcome::Success) => 0,
        Ok(Outcome::CheckFailed(msg)) => diag(1, "check", &msg),
        Err(e) => {
            let (code, kind) = classify(&e);
            diag(code, kind, &e.to_string())
        }
    }
}

fn diag(code: i32, kind: &str, msg: &str) -> i32 {
    eprintln!("{}", serde_json::json!({ "kind": kind, "error": msg }));
    code
}

/// Parameter and artifact-format problems are the caller's fault (exit 2);
/// anything going wrong during the run itself maps to exit 1.
fn classify(e: &Error) -> (i32, &'static str) {
    match e {
        Error::InvalidScale(_)
        | Error::InvalidGeometry(_)
        | Error::InvalidPattern(_)
        | Error::Quantization(_)
        | Error::Domain(_) => (2, "config"),
        Error::Infeasible(_) | Error::Uncertified(_) | Error::NoConvergence(_) => (1, "runtime"),
    }
}

fn load_config(path: Option<&Path>) -> std::result::Result<RunConfig, String> {
    let Some(path) = path else {
        return Ok(RunConfig::default());
    };
    let text =
        fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("bad config {}: {e}", path.display()))
}

fn execute(command: Command, cfg: &RunConfig) -> Result<Outcome> {
    match command {
        Command::Solve => cmd_solve(cfg),
        Command::Laguerre => cmd_laguerre(cfg),
        Command::Estimate => cmd_estimate(cfg),
        Command::Stabilize => cmd_stabilize(cfg),
        Command::Check => cmd_check(cfg),
        Command::Bounds => cmd_bounds(cfg),
        Command::Render => cmd_render(cfg),
    }
}

// ---------------------------------------------------------------------------
// Shared plumbing.

fn out_dir(cfg: &RunConfig) -> PathBuf {
    cfg.out_dir.clone().unwrap_or_else(|| PathBuf::from("."))
}

fn write_artifact(cfg: &RunConfig, name: &str, contents: &str) -> Result<()> {
    let dir = out_dir(cfg);
    fs::create_dir_all(&dir)
        .map_err(|e| Error::Domain(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    fs::write(&path, contents)
        .map_err(|e| Error::Domain(format!("cannot write {}: {e}", path.display())))
}

#[derive(Serialize)]
struct RunReport<T: Serialize> {
    schema: &'static str,
    command: Command,
    /// Echo of the effective configuration, paths stripped so reruns into
    /// different directories stay byte-identical.
    config: RunConfig,
    outputs: Vec<String>,
    summary: T,
}

fn write_report<T: Serialize>(
    cfg: &RunConfig,
    command: Command,
    mut outputs: Vec<String>,
    summary: T,
) -> Result<()> {
    outputs.push("report.json".into());
    let mut echo = cfg.clone();
    echo.command = Some(command);
    echo.input = None;
    echo.out_dir = None;
    let report = RunReport { schema: REPORT_SCHEMA, command, config: echo, outputs, summary };
    let text = serde_json::to_string_pretty(&report)
        .map_err(|e| Error::Domain(format!("report encoding failed: {e}")))?;
    write_artifact(cfg, "report.json", &(text + "\n"))
}

fn resolution(cfg: &RunConfig) -> Result<u32> {
    if cfg.m == 0 {
        default_resolution(cfg.d)
    } else {
        Ok(cfg.m)
    }
}

fn base_box(cfg: &RunConfig) -> Result<DyadicBox> {
    DyadicBox::from_word(cfg.z, &vec![[0, 0, 0]; cfg.n as usize], cfg.d as usize)
}

fn build_pattern(cfg: &RunConfig, bx: &DyadicBox) -> Result<PointPattern<f64>> {
    if cfg.denom == 0 || cfg.mult == 0 {
        return Err(Error::Domain("mass fractions need denom >= 1 and mult >= 1".into()));
    }
    let sampler = PppSampler::new(cfg.seed);
    let mut pattern = PointPattern::new(cfg.d as usize, cfg.denom)?;
    match &cfg.pattern {
        PatternSpec::Poisson => {
            let raw = sampler.sample_box::<f64>(0, bx, cfg.beta)?;
            for i in 0..raw.len() {
                pattern.push(raw.point(i), cfg.mult * raw.mult(i))?;
            }
        }
        PatternSpec::Uniform { count } => {
            let mut rng: ChaCha8Rng = sampler.aux_rng(0, 0x_554E_4946);
            let side = bx.side() as f64;
            for _ in 0..*count {
                let mut x = [0.0; 3];
                for (k, slot) in x.iter_mut().enumerate().take(cfg.d as usize) {
                    *slot = bx.lower()[k] as f64 + side * rng.gen::<f64>();
                }
                pattern.push(x, cfg.mult)?;
            }
        }
        PatternSpec::Points { points, mults } => {
            if let Some(ms) = mults {
                if ms.len() != points.len() {
                    return Err(Error::Domain(format!(
                        "{} mults for {} points",
                        ms.len(),
                        points.len()
                    )));
                }
            }
            for (i, &x) in points.iter().enumerate() {
                let mult = mults.as_ref().map_or(cfg.mult, |ms| ms[i]);
                pattern.push(x, mult)?;
            }
        }
    }
    Ok(pattern)
}

fn solve_fresh(cfg: &RunConfig) -> Result<Solved<f64>> {
    let scale = cfg.scale.to_scale(cfg.d)?;
    let bx = base_box(cfg)?;
    let pattern = build_pattern(cfg, &bx)?;
    let grid = GridMeasure::around(&bx, cfg.margin, resolution(cfg)?)?;
    solve_semicoupling(&grid, &pattern, &scale)
}

// ---------------------------------------------------------------------------
// Commands.

/// Solve diagnostics without wall-clock fields, so reruns reproduce the
/// report byte for byte.
#[derive(Serialize)]
struct SolveSummary {
    cost: f64,
    phases: u64,
    rebuilds: u32,
    r_cut: f64,
    max_potential: f64,
    free_mass: f64,
    boundary_used: bool,
    targets: usize,
    cells: usize,
}

fn solve_summary(solved: &Solved<f64>) -> SolveSummary {
    SolveSummary {
        cost: solved.plan.cost,
        phases: solved.report.phases,
        rebuilds: solved.report.rebuilds,
        r_cut: solved.report.r_cut,
        max_potential: solved.report.max_potential,
        free_mass: solved.report.free_mass,
        boundary_used: solved.report.boundary_used,
        targets: solved.plan.pattern.len(),
        cells: solved.plan.grid.len(),
    }
}

fn cmd_solve(cfg: &RunConfig) -> Result<Outcome> {
    let solved = solve_fresh(cfg)?;
    let mut outputs = vec!["plan.json".to_string()];
    write_artifact(cfg, "plan.json", &(solved.plan.to_json()? + "\n"))?;
    if cfg.d == 2 {
        write_artifact(cfg, "plan.svg", &render::render_plan_svg(&solved.plan)?)?;
        outputs.push("plan.svg".into());
    }
    write_report(cfg, Command::Solve, outputs, solve_summary(&solved))?;
    Ok(Outcome::Success)
}

/// Serialized power diagram; the cell geometry is self-contained so renders
/// need no re-solve.
#[derive(Serialize, Deserialize)]
pub struct DiagramRepr {
    pub version: u32,
    pub points: Vec<[f64; 2]>,
    pub mults: Vec<u32>,
    pub denom: u32,
    pub weights: Vec<f64>,
    pub areas: Vec<f64>,
    pub cost: f64,
    pub iterations: u32,
    pub residual: f64,
    pub cells: Vec<ConvexCell<f64>>,
}

#[derive(Serialize)]
struct LaguerreSummary {
    cost: f64,
    iterations: u32,
    residual: f64,
    targets: usize,
}

fn cmd_laguerre(cfg: &RunConfig) -> Result<Outcome> {
    if cfg.d != 2 {
        return Err(Error::Domain("power diagrams are planar: set d = 2".into()));
    }
    let bx = base_box(cfg)?;
    let pattern = build_pattern(cfg, &bx)?;
    let diagram = solve_laguerre(&pattern, DEFAULT_TOLERANCE, DEFAULT_MAX_ITER)?;
    let repr = DiagramRepr {
        version: DIAGRAM_VERSION,
        points: (0..pattern.len())
            .map(|j| {
                let p = pattern.point(j);
                [p[0], p[1]]
            })
            .collect(),
        mults: (0..pattern.len()).map(|j| pattern.mult(j)).collect(),
        denom: pattern.denom(),
        weights: diagram.weights().to_vec(),
        areas: diagram.areas().to_vec(),
        cost: diagram.transport_cost()?,
        iterations: diagram.iterations,
        residual: diagram.residual,
        cells: diagram.cells().to_vec(),
    };
    let text = serde_json::to_string_pretty(&repr)
        .map_err(|e| Error::Domain(format!("diagram encoding failed: {e}")))?;
    write_artifact(cfg, "diagram.json", &(text + "\n"))?;
    write_artifact(cfg, "diagram.svg", &render::render_diagram_svg(&diagram)?)?;
    let summary = LaguerreSummary {
        cost: diagram.transport_cost()?,
        iterations: diagram.iterations,
        residual: diagram.residual,
        targets: pattern.len(),
    };
    write_report(cfg, Command::Laguerre, vec!["diagram.json".into(), "diagram.svg".into()], summary)?;
    Ok(Outcome::Success)
}

fn cmd_estimate(cfg: &RunConfig) -> Result<Outcome> {
    let scale = cfg.scale.to_scale(cfg.d)?;
    let m = resolution(cfg)?;
    let record: EstimateRecord<f64> = match cfg.quantity {
        Quantity::CostPerVolume => {
            estimate_cn_with(cfg.n, cfg.d, &scale, cfg.beta, cfg.replicas, cfg.seed, m, cfg.margin)?
        }
        Quantity::BalancedCostPerVolume => {
            estimate_chat_n_with(cfg.n, cfg.d, &scale, cfg.replicas, cfg.seed, m)?
        }
    };
    write_artifact(cfg, "estimates.csv", &format!("{CSV_HEADER}\n{}\n", record.csv_row()))?;
    write_report(cfg, Command::Estimate, vec!["estimates.csv".into()], record)?;
    Ok(Outcome::Success)
}

fn cmd_stabilize(cfg: &RunConfig) -> Result<Outcome> {
    let scale = cfg.scale.to_scale(cfg.d)?;
    let max_n = if cfg.max_n == 0 { max_generation(cfg.d)? } else { cfg.max_n };
    let mut hi = cfg.z;
    for k in 0..cfg.d as usize {
        hi[k] += 1;
    }
    let probe = Cuboid { dim: cfg.d as usize, lo: cfg.z, hi };
    let record: StabilizationRecord<f64> = stabilization_study(
        cfg.z,
        max_n,
        cfg.d,
        &scale,
        cfg.beta,
        &probe,
        cfg.replicas,
        cfg.seed,
        resolution(cfg)?,
    )?;
    let text = serde_json::to_string_pretty(&record)
        .map_err(|e| Error::Domain(format!("record encoding failed: {e}")))?;
    write_artifact(cfg, "stabilization.json", &(text + "\n"))?;
    write_report(cfg, Command::Stabilize, vec!["stabilization.json".into()], record)?;
    Ok(Outcome::Success)
}

fn random_sub_boxes(plan: &TransportPlan<f64>, count: u32, rng: &mut ChaCha8Rng) -> Vec<Cuboid> {
    let (lo, hi) = plan.grid.window();
    let dim = plan.grid.dim();
    (0..count)
        .map(|_| {
            let mut blo = [0i64; 3];
            let mut bhi = [0i64; 3];
            for k in 0..dim {
                let span = hi[k] - lo[k];
                let len = rng.gen_range(1..=span);
                let off = rng.gen_range(0..=span - len);
                blo[k] = lo[k] + off;
                bhi[k] = blo[k] + len;
            }
            Cuboid { dim, lo: blo, hi: bhi }
        })
        .collect()
}

#[derive(Serialize)]
struct CheckSummary {
    passed: bool,
    checks: Vec<(String, bool)>,
}

fn cmd_check(cfg: &RunConfig) -> Result<Outcome> {
    let scale = cfg.scale.to_scale(cfg.d)?;
    let plan = match &cfg.input {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::Domain(format!("cannot read {}: {e}", path.display())))?;
            TransportPlan::from_json(&text)?
        }
        None => solve_fresh(cfg)?.plan,
    };
    let sampler = PppSampler::new(cfg.seed);
    let mut rng = sampler.aux_rng(0, 0x_4348_4B53);
    let boxes = random_sub_boxes(&plan, cfg.sub_boxes, &mut rng);
    let reports: Vec<CheckReport<f64>> = vec![
        check_cyclical_monotonicity(&plan, &scale, cfg.cycles as u64, cfg.max_len as usize, cfg.seed)?,
        check_sequential_monotonicity(
            &plan,
            &scale,
            cfg.cycles as u64,
            cfg.max_len as usize,
            cfg.seed ^ 0x5EB1,
        )?,
        check_efficiency(&plan, &scale, &boxes)?,
        check_volumes_plan(&plan),
        check_first_marginal(&plan),
    ];
    let text = serde_json::to_string_pretty(&reports)
        .map_err(|e| Error::Domain(format!("check encoding failed: {e}")))?;
    write_artifact(cfg, "checks.json", &(text + "\n"))?;
    let summary = CheckSummary {
        passed: reports.iter().all(|r| r.passed),
        checks: reports.iter().map(|r| (r.check_name.clone(), r.passed)).collect(),
    };
    let all_passed = summary.passed;
    write_report(cfg, Command::Check, vec!["checks.json".into()], summary)?;
    if all_passed {
        Ok(Outcome::Success)
    } else {
        let failed: Vec<&str> = reports
            .iter()
            .filter(|r| !r.passed)
            .map(|r| r.check_name.as_str())
            .collect();
        Ok(Outcome::CheckFailed(format!("failed checks: {}", failed.join(", "))))
    }
}

fn cmd_bounds(cfg: &RunConfig) -> Result<Outcome> {
    let ScaleSpec::Power { p } = cfg.scale else {
        return Err(Error::Domain("the bound sweep is defined for power scales".into()));
    };
    let d_values: Vec<u32> =
        if cfg.d_values.is_empty() { (1..=50).collect() } else { cfg.d_values.clone() };
    let report: BoundsReport = bounds_suite(p, &d_values)?;
    let mut csv = String::from("d,p,bracket,lower,upper,ratio,skipped,note\n");
    for row in &report.rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            row.d, row.p, row.bracket, row.lower, row.upper, row.ratio, row.skipped, row.note
        ));
    }
    write_artifact(cfg, "bounds.csv", &csv)?;
    let ok = report.all_ordered
        && report.leading_ratio < 5.0
        && (p > 2.0 || report.leading_ratio_under_2);
    write_report(cfg, Command::Bounds, vec!["bounds.csv".into()], &report)?;
    if ok {
        Ok(Outcome::Success)
    } else {
        Ok(Outcome::CheckFailed("bound bracket out of expected range".into()))
    }
}

fn cmd_render(cfg: &RunConfig) -> Result<Outcome> {
    let Some(path) = &cfg.input else {
        return Err(Error::Domain("render needs input pointing at a plan or diagram".into()));
    };
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Domain(format!("cannot read {}: {e}", path.display())))?;
    let (svg, source) = match TransportPlan::<f64>::from_json(&text) {
        Ok(plan) => (render::render_plan_svg(&plan)?, "plan"),
        Err(_) => {
            let repr: DiagramRepr = serde_json::from_str(&text).map_err(|e| {
                Error::Domain(format!("input is neither a plan nor a diagram: {e}"))
            })?;
            if repr.version != DIAGRAM_VERSION {
                return Err(Error::Domain(format!(
                    "unsupported diagram version {}",
                    repr.version
                )));
            }
            (render::render_cells_svg(&repr.cells, &repr.points)?, "diagram")
        }
    };
    write_artifact(cfg, "render.svg", &svg)?;
    write_report(cfg, Command::Render, vec!["render.svg".into()], serde_json::json!({ "source": source }))?;
    Ok(Outcome::Success)
}
