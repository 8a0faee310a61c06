//! Scenario files, run orchestration and artifact emission behind the
//! `circov` binary.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::control::{find_local_optimum, CostKind, CoverageCostConfig};
use crate::error::{Error, Result};
use crate::geometry::{AnnulusDomain, Point, PolarCurve};
use crate::metric::{distance_field, MetricGrid, Restriction};
use crate::oracle;
use crate::partition::{bar_segment, DensityField, PartitionState};
use crate::sim::{
    check_bar_flux, check_hessian, random_bars, DiagnosticsLog, EarlyStop, InitialConditions, SimConfig,
    SimSummary, Simulation, StepRecord,
};

pub const SCHEMA_VERSION: u32 = 1;

pub const TRAJECTORY_HEADER: &str = "t,agent,px,py,l,m,qx,qy,E,h";

/// Name under which `simulate` copies the scenario next to its outputs.
pub const SCENARIO_COPY: &str = "scenario.toml";
pub const TRAJECTORY_FILE: &str = "trajectory.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CurveSpec {
    InverseEllipse {
        a: f64,
        b: f64,
    },
    Circle {
        radius: f64,
    },
    Fourier {
        r0: f64,
        #[serde(default)]
        sin: Vec<(u32, f64)>,
        #[serde(default)]
        cos: Vec<(u32, f64)>,
    },
}

impl CurveSpec {
    fn curve(&self, center: Point) -> PolarCurve {
        match self {
            CurveSpec::InverseEllipse { a, b } => PolarCurve::inverse_ellipse(*a, *b, center),
            CurveSpec::Circle { radius } => PolarCurve::circle(*radius, center),
            CurveSpec::Fourier { r0, sin, cos } => PolarCurve::fourier(*r0, sin.clone(), cos.clone(), center),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    #[serde(default)]
    pub center: [f64; 2],
    pub inner: CurveSpec,
    pub outer: CurveSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DensitySpec {
    Uniform {
        value: f64,
    },
    CaseStudy,
    RadialLinear {
        base: f64,
        slope: f64,
    },
    Tabulated {
        r_min: f64,
        r_max: f64,
        values: Vec<Vec<f64>>,
    },
}

impl DensitySpec {
    fn field(&self) -> DensityField {
        match self {
            DensitySpec::Uniform { value } => DensityField::Uniform(*value),
            DensitySpec::CaseStudy => DensityField::CaseStudy,
            DensitySpec::RadialLinear { base, slope } => DensityField::RadialLinear {
                base: *base,
                slope: *slope,
            },
            DensitySpec::Tabulated { r_min, r_max, values } => DensityField::Tabulated {
                r_min: *r_min,
                r_max: *r_max,
                values: values.clone(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSpec {
    pub agents: usize,
    pub dt: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub kappa_s: f64,
    pub kappa_p: f64,
    pub spacing: f64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialSpec {
    Random,
    Explicit { bars: Vec<f64>, agents: Vec<[f64; 2]> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EarlyStopSpec {
    pub enabled: bool,
    pub imbalance: f64,
    pub distance: f64,
    pub hold_steps: usize,
}

impl Default for EarlyStopSpec {
    fn default() -> Self {
        let e = EarlyStop::default();
        EarlyStopSpec {
            enabled: e.enabled,
            imbalance: e.imbalance,
            distance: e.distance,
            hold_steps: e.hold_steps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: PathBuf,
    /// Trajectory rows are written every this many steps.
    pub trajectory_every: u64,
    pub snapshot_times: Vec<f64>,
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec {
            dir: PathBuf::from("out"),
            trajectory_every: 10,
            snapshot_times: Vec::new(),
        }
    }
}

/// Parsed scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    #[serde(default)]
    pub name: String,
    pub domain: DomainSpec,
    pub density: DensitySpec,
    pub sim: SimSpec,
    #[serde(default)]
    pub cost: CoverageCostConfig,
    #[serde(default = "random_initial")]
    pub initial: InitialSpec,
    #[serde(default)]
    pub early_stop: EarlyStopSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

fn random_initial() -> InitialSpec {
    InitialSpec::Random
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self> {
        let s: Scenario = toml::from_str(text).map_err(|e| Error::Scenario(e.to_string()))?;
        if s.schema_version != SCHEMA_VERSION {
            return Err(Error::Scenario(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                s.schema_version
            )));
        }
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::parse(&text).map_err(|e| match e {
            Error::Scenario(m) => Error::Scenario(format!("{}: {m}", path.display())),
            e => e,
        })
    }

    pub fn domain(&self) -> Result<AnnulusDomain> {
        let c = Point::new(self.domain.center[0], self.domain.center[1]);
        AnnulusDomain::new(self.domain.inner.curve(c), self.domain.outer.curve(c))
    }

    pub fn config(&self) -> Result<SimConfig> {
        let initial = match &self.initial {
            InitialSpec::Random => InitialConditions::Random,
            InitialSpec::Explicit { bars, agents } => InitialConditions::Explicit {
                bars: bars.clone(),
                agents: agents.iter().map(|a| Point::new(a[0], a[1])).collect(),
            },
        };
        let config = SimConfig {
            domain: self.domain()?,
            density: self.density.field(),
            agents: self.sim.agents,
            dt: self.sim.dt,
            horizon: self.sim.horizon,
            kappa_s: self.sim.kappa_s,
            kappa_p: self.sim.kappa_p,
            spacing: self.sim.spacing,
            cost: self.cost,
            seed: self.sim.seed,
            initial,
            early_stop: EarlyStop {
                enabled: self.early_stop.enabled,
                imbalance: self.early_stop.imbalance,
                distance: self.early_stop.distance,
                hold_steps: self.early_stop.hold_steps,
            },
        };
        config.validate()?;
        Ok(config)
    }
}

/// Command-line overrides for `simulate`.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub dt: Option<f64>,
    pub horizon: Option<f64>,
}

impl Overrides {
    pub fn apply(&self, s: &mut Scenario) {
        if let Some(seed) = self.seed {
            s.sim.seed = seed;
        }
        if let Some(out) = &self.out {
            s.output.dir = out.clone();
        }
        if let Some(dt) = self.dt {
            s.sim.dt = dt;
        }
        if let Some(t) = self.horizon {
            s.sim.horizon = t;
        }
    }
}

/// `%.9g`-style formatting: nine significant digits, trailing zeros removed.
pub fn sig9(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let exp = x.abs().log10().floor() as i32;
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        let s = format!("{x:.decimals$}");
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        let s = format!("{x:.8e}");
        let (mant, e) = s.split_once('e').expect("scientific format");
        let mant = if mant.contains('.') {
            mant.trim_end_matches('0').trim_end_matches('.')
        } else {
            mant
        };
        format!("{mant}e{e}")
    }
}

fn trajectory_rows(out: &mut String, r: &StepRecord) {
    for i in 0..r.positions.len() {
        let fields = [
            r.t,
            i as f64,
            r.positions[i].x,
            r.positions[i].y,
            r.bars[i],
            r.workloads[i],
            r.targets[i].x,
            r.targets[i].y,
            r.energies[i],
            r.clearances[i],
        ];
        let line: Vec<String> = fields
            .iter()
            .enumerate()
            .map(|(c, &v)| if c == 1 { i.to_string() } else { sig9(v) })
            .collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
}

/// Trajectory CSV text: the header, then one row per agent for every
/// `every`-th step and for the last logged step.
pub fn trajectory_csv(log: &DiagnosticsLog, every: u64) -> String {
    let mut out = String::with_capacity(log.records.len() * 64);
    out.push_str(TRAJECTORY_HEADER);
    out.push('\n');
    let every = every.max(1);
    let last = log.records.len().saturating_sub(1);
    for (k, r) in log.records.iter().enumerate() {
        if r.step % every == 0 || k == last {
            trajectory_rows(&mut out, r);
        }
    }
    out
}

pub const DIAGNOSTICS_HEADER: &str =
    "t,V,max_adjacent_difference,relative_imbalance,min_h,halved_agents,frozen_agents,clamped_bars,bar_displacement,target_drift,fallback_fields";

pub fn diagnostics_csv(log: &DiagnosticsLog) -> String {
    let mut out = String::new();
    out.push_str(DIAGNOSTICS_HEADER);
    out.push('\n');
    for r in &log.records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            sig9(r.t),
            sig9(r.lyapunov),
            sig9(r.max_adjacent_difference),
            sig9(r.relative_imbalance),
            sig9(r.min_h),
            r.halved_agents,
            r.frozen_agents,
            r.clamped_bars,
            sig9(r.bar_displacement),
            sig9(r.target_drift),
            r.fallback_fields
        );
    }
    out
}

/// What `simulate` produced.
#[derive(Debug, Clone)]
pub struct SimulateOutput {
    pub dir: PathBuf,
    pub trajectory: PathBuf,
    pub summary: SimSummary,
    pub snapshots: Vec<PathBuf>,
    /// Requested snapshot times after the end of the run (early stop or a
    /// shortened horizon).
    pub skipped: Vec<f64>,
}

/// Runs a scenario and writes trajectory, diagnostics, summary, a copy of
/// the scenario and the requested snapshots under the output directory.
pub fn simulate(scenario_path: &Path, overrides: &Overrides) -> Result<SimulateOutput> {
    let mut scenario = Scenario::load(scenario_path)?;
    overrides.apply(&mut scenario);
    simulate_scenario(&scenario)
}

pub fn simulate_scenario(scenario: &Scenario) -> Result<SimulateOutput> {
    let config = scenario.config()?;
    let mut sim = Simulation::new(config)?;
    while !sim.finished() {
        sim.step()?;
    }
    let dir = scenario.output.dir.clone();
    fs::create_dir_all(&dir)?;
    let trajectory = dir.join(TRAJECTORY_FILE);
    fs::write(
        &trajectory,
        trajectory_csv(sim.log(), scenario.output.trajectory_every),
    )?;
    fs::write(dir.join("diagnostics.csv"), diagnostics_csv(sim.log()))?;
    let summary = sim.summary();
    let text = toml::to_string(&summary).map_err(|e| Error::Scenario(e.to_string()))?;
    fs::write(dir.join("summary.toml"), text)?;
    let copy = toml::to_string(scenario).map_err(|e| Error::Scenario(e.to_string()))?;
    fs::write(dir.join(SCENARIO_COPY), copy)?;

    let domain = &sim.config().domain;
    let end = sim.state().time + 0.5 * sim.config().dt;
    let mut snapshots = Vec::new();
    let mut skipped = Vec::new();
    for &t in &scenario.output.snapshot_times {
        if t > end {
            skipped.push(t);
            continue;
        }
        let r = sim
            .log()
            .at_time(t)
            .filter(|r| (r.t - t).abs() <= 0.5 * sim.config().dt)
            .ok_or_else(|| Error::Plot(format!("time {t} is not in the log")))?;
        let frame = SnapshotFrame {
            t: r.t,
            positions: r.positions.clone(),
            targets: r.targets.clone(),
            bars: r.bars.clone(),
        };
        let path = dir.join(snapshot_name(t));
        fs::write(&path, render_svg(domain, sim.config().spacing, &frame)?)?;
        snapshots.push(path);
    }
    Ok(SimulateOutput {
        dir,
        trajectory,
        summary,
        snapshots,
        skipped,
    })
}

pub fn snapshot_name(t: f64) -> String {
    format!("snapshot_t{}.svg", sig9(t))
}

/// One logged instant, as read back from a trajectory file.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotFrame {
    pub t: f64,
    pub positions: Vec<Point>,
    pub targets: Vec<Point>,
    pub bars: Vec<f64>,
}

#[derive(Debug, Deserialize)]
struct TrajectoryRecord {
    t: f64,
    agent: usize,
    px: f64,
    py: f64,
    l: f64,
    #[allow(dead_code)]
    m: f64,
    qx: f64,
    qy: f64,
    #[serde(rename = "E")]
    #[allow(dead_code)]
    e: f64,
    #[allow(dead_code)]
    h: f64,
}

/// Groups trajectory rows by time.
pub fn read_trajectory(path: &Path) -> Result<Vec<SnapshotFrame>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Plot(e.to_string()))?;
    let mut frames: Vec<SnapshotFrame> = Vec::new();
    for row in reader.deserialize() {
        let row: TrajectoryRecord = row.map_err(|e| Error::Plot(e.to_string()))?;
        if frames.last().is_none_or(|f| f.t != row.t) {
            frames.push(SnapshotFrame {
                t: row.t,
                positions: Vec::new(),
                targets: Vec::new(),
                bars: Vec::new(),
            });
        }
        let f = frames.last_mut().expect("pushed above");
        if row.agent != f.positions.len() {
            return Err(Error::Plot(format!("rows at t={} are out of agent order", row.t)));
        }
        f.positions.push(Point::new(row.px, row.py));
        f.targets.push(Point::new(row.qx, row.qy));
        f.bars.push(row.l);
    }
    Ok(frames)
}

/// Writes one SVG per requested time next to the trajectory file, using
/// the scenario copy stored beside it for the boundary curves.
pub fn plot(trajectory: &Path, times: &[f64]) -> Result<Vec<PathBuf>> {
    if times.is_empty() {
        return Ok(Vec::new());
    }
    let dir = trajectory.parent().unwrap_or(Path::new("."));
    let scenario = Scenario::load(&dir.join(SCENARIO_COPY))?;
    let domain = scenario.domain()?;
    let frames = read_trajectory(trajectory)?;
    let tol = 0.5 * scenario.sim.dt;
    let mut out = Vec::new();
    for &t in times {
        let frame = frames
            .iter()
            .find(|f| (f.t - t).abs() <= tol)
            .ok_or_else(|| Error::Plot(format!("time {t} is not in {}", trajectory.display())))?;
        let path = dir.join(snapshot_name(t));
        fs::write(&path, render_svg(&domain, scenario.sim.spacing, frame)?)?;
        out.push(path);
    }
    Ok(out)
}

fn star(c: Point, r: f64) -> String {
    let pts: Vec<String> = (0..10)
        .map(|k| {
            let a = std::f64::consts::FRAC_PI_2 + k as f64 * std::f64::consts::PI / 5.0;
            let rr = if k % 2 == 0 { r } else { 0.45 * r };
            format!("{:.5},{:.5}", c.x + rr * a.cos(), -(c.y + rr * a.sin()))
        })
        .collect();
    pts.join(" ")
}

/// Boundary curves, bars (lines), agents (dots) and targets (stars). The y
/// axis is flipped so the picture has the usual orientation.
pub fn render_svg(domain: &AnnulusDomain, spacing: f64, frame: &SnapshotFrame) -> Result<String> {
    let (lo, hi) = domain.bounding_box();
    let pad = 0.05 * (hi.x - lo.x).max(hi.y - lo.y);
    let (x0, y0) = (lo.x - pad, -(hi.y + pad));
    let (w, h) = (hi.x - lo.x + 2.0 * pad, hi.y - lo.y + 2.0 * pad);
    let stroke = 0.004 * w.max(h);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="{x0:.5} {y0:.5} {w:.5} {h:.5}" width="800" height="{:.0}">"#,
        800.0 * h / w
    );
    let _ = writeln!(
        s,
        r#"<rect x="{x0:.5}" y="{y0:.5}" width="{w:.5}" height="{h:.5}" fill="white"/>"#
    );
    let _ = writeln!(s, "<title>t = {} s</title>", sig9(frame.t));
    for outer in [true, false] {
        let pts: Vec<String> = domain
            .boundary_polyline(outer, 720)
            .iter()
            .map(|p| format!("{:.5},{:.5}", p.x, -p.y))
            .collect();
        let _ = writeln!(
            s,
            r#"<polygon points="{}" fill="none" stroke="black" stroke-width="{stroke:.5}"/>"#,
            pts.join(" ")
        );
    }
    for &l in &frame.bars {
        let bar = bar_segment(domain, l, spacing)?;
        let _ = writeln!(
            s,
            r#"<line x1="{:.5}" y1="{:.5}" x2="{:.5}" y2="{:.5}" stroke="steelblue" stroke-width="{stroke:.5}"/>"#,
            bar.start.x, -bar.start.y, bar.end.x, -bar.end.y
        );
    }
    for q in &frame.targets {
        let _ = writeln!(
            s,
            r#"<polygon points="{}" fill="orange" stroke="none"/>"#,
            star(*q, 3.0 * stroke)
        );
    }
    for p in &frame.positions {
        let _ = writeln!(
            s,
            r#"<circle cx="{:.5}" cy="{:.5}" r="{:.5}" fill="crimson"/>"#,
            p.x,
            -p.y,
            2.0 * stroke
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// One line of the `check` table.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckRow {
    pub name: String,
    pub value: f64,
    pub threshold: String,
    pub pass: bool,
    /// Diagnostic rows are reported but never fail the command.
    pub diagnostic: bool,
}

impl CheckRow {
    fn new(name: &str, value: f64, threshold: &str, pass: bool) -> Self {
        CheckRow {
            name: name.into(),
            value,
            threshold: threshold.into(),
            pass,
            diagnostic: false,
        }
    }
}

/// Oracle and property checks for a scenario's domain and density.
pub fn check(scenario_path: &Path) -> Result<Vec<CheckRow>> {
    check_scenario(&Scenario::load(scenario_path)?)
}

pub fn check_scenario(scenario: &Scenario) -> Result<Vec<CheckRow>> {
    let config = scenario.config()?;
    let domain = &config.domain;
    let density = &config.density;
    let grid = MetricGrid::build(std::sync::Arc::new(domain.clone()), config.spacing)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut rows = Vec::new();

    // workloads against Monte Carlo
    let sim = Simulation::with_grid(config.clone(), std::sync::Arc::new(grid.clone()))?;
    let total = sim.state().workloads.total;
    let mc = oracle::monte_carlo_mass(domain, density, 1_000_000, &mut rng);
    let err = (total - mc).abs() / mc;
    rows.push(CheckRow::new(
        "total workload vs Monte Carlo",
        err,
        "< 0.01",
        err < 0.01,
    ));

    // flux identity over random placements
    if config.agents >= 2 {
        let mut flux = 0.0f64;
        let mut swept = 0.0f64;
        let mut anti = 0.0f64;
        for _ in 0..5 {
            let bars = random_bars(domain, config.agents, config.spacing, &mut rng);
            let state = PartitionState::new(domain, &bars, config.spacing)?;
            let rep = check_bar_flux(domain, density, &grid, &state)?;
            flux = flux.max(rep.max_flux_error());
            swept = swept.max(rep.max_swept_error());
            anti = anti.max(rep.max_antisymmetry_error());
        }
        rows.push(CheckRow::new("bar flux vs dm/dl", flux, "< 0.02", flux < 0.02));
        let mut r = CheckRow::new("swept flux vs dm/dl", swept, "< 0.02", swept < 0.02);
        r.diagnostic = true;
        rows.push(r);
        rows.push(CheckRow::new("flux antisymmetry", anti, "< 0.02", anti < 0.02));
    }

    // metric axioms on random interior pairs
    let interior: Vec<usize> = grid
        .inside_nodes()
        .filter(|&k| grid.h(k) > 0.25 * grid.max_h())
        .collect();
    let pick = |rng: &mut ChaCha8Rng| {
        use rand::Rng;
        grid.node_point(interior[rng.gen_range(0..interior.len())])
    };
    let mut sym = 0.0f64;
    let mut tri = f64::NEG_INFINITY;
    for _ in 0..10 {
        let (a, b, c) = (pick(&mut rng), pick(&mut rng), pick(&mut rng));
        let fa = distance_field(&grid, a, Restriction::Whole)?;
        let fb = distance_field(&grid, b, Restriction::Whole)?;
        let ab = fa.value_at(&grid, b);
        let ba = fb.value_at(&grid, a);
        sym = sym.max((ab - ba).abs() / ab.max(ba));
        tri = tri.max((fa.value_at(&grid, c) - ab - fb.value_at(&grid, c)) / fa.value_at(&grid, c));
    }
    rows.push(CheckRow::new("distance symmetry", sym, "< 0.02", sym < 0.02));
    rows.push(CheckRow::new(
        "triangle inequality excess",
        tri,
        "< 0.03",
        tri < 0.03,
    ));

    let src = pick(&mut rng);
    let field = distance_field(&grid, src, Restriction::Whole)?;
    let graph = oracle::graph_distances(&grid, src, None);
    let (mut acc, mut cnt) = (0.0, 0.0);
    for k in field.reached_nodes(&grid) {
        if grid.node_point(k).distance(src) > 5.0 * grid.spacing() && graph[k].is_finite() {
            acc += (field.node_value(&grid, k) - graph[k]).abs() / graph[k];
            cnt += 1.0;
        }
    }
    let mean = acc / cnt;
    rows.push(CheckRow::new(
        "fast marching vs graph (mean)",
        mean,
        "< 0.03",
        mean < 0.03,
    ));

    // Hessian of the local costs at the initial optima
    let subs = sim.subregions();
    let targets = subs
        .iter()
        .map(|s| find_local_optimum(s, &grid, &config.cost, None))
        .collect::<Result<Vec<_>>>()?;
    let kind = config.cost.kind;
    let hs = check_hessian(&subs, &targets, &grid, kind);
    let min_eig = hs.iter().map(|h| h.min_eigenvalue).fold(f64::INFINITY, f64::min);
    let mut r = CheckRow::new("min Hessian eigenvalue at optima", min_eig, "> 0", min_eig > 0.0);
    r.diagnostic = true;
    rows.push(r);
    if kind == CostKind::GeodesicSquared {
        let euclid = CoverageCostConfig {
            kind: CostKind::EuclideanSquared,
            ..config.cost
        };
        let t2 = subs
            .iter()
            .map(|s| find_local_optimum(s, &grid, &euclid, None))
            .collect::<Result<Vec<_>>>()?;
        let hs = check_hessian(&subs, &t2, &grid, CostKind::EuclideanSquared);
        let asym = hs.iter().map(|h| h.asymmetry).fold(0.0, f64::max);
        rows.push(CheckRow::new("Hessian symmetry", asym, "< 1e-3", asym < 1e-3));
    }
    Ok(rows)
}

/// Fixed-width pass/fail table.
pub fn format_check_table(rows: &[CheckRow]) -> String {
    let mut s = String::new();
    for r in rows {
        let status = match (r.pass, r.diagnostic) {
            (true, _) => "PASS",
            (false, true) => "WARN",
            (false, false) => "FAIL",
        };
        let _ = writeln!(
            s,
            "{status:<5} {:<36} {:>14} {}",
            r.name,
            sig9(r.value),
            r.threshold
        );
    }
    s
}

/// Exit status of `check`: success iff every non-diagnostic row passed.
pub fn checks_pass(rows: &[CheckRow]) -> bool {
    rows.iter().all(|r| r.pass || r.diagnostic)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(sig9(0.0), "0");
        assert_eq!(sig9(1.0), "1");
        assert_eq!(sig9(0.1), "0.1");
        assert_eq!(sig9(1.0 / 3.0), "0.333333333");
        assert_eq!(sig9(-123.456789012), "-123.456789");
        assert_eq!(sig9(40.0), "40");
        assert_eq!(sig9(1.5e-7), "1.5e-7");
        assert_eq!(sig9(6.02214076e23), "6.02214076e23");
    }
}
