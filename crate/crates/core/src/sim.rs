//! The coupled partition/agent loop, its diagnostics and the numerical
//! checks derived from the convergence analysis.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::control::{
    agent_step, control_input, find_local_optimum, h_interior, local_cost, AgentState, CostKind,
    CoverageCostConfig, TargetState, WeightedCells,
};
use crate::error::{Error, Result};
use crate::geometry::{case_study_domain, circular_domain, AnnulusDomain, Point};
use crate::metric::{distance_field, GeodesicField, MetricGrid, Restriction};
use crate::oracle;
use crate::partition::{
    bar_flux, decompose, min_bar_gap, partition_step, swept_flux, translated_bar, workload, DensityField,
    PartitionState, SubregionDecomposition, WorkloadVector,
};

#[derive(Debug, Clone, PartialEq)]
pub enum InitialConditions {
    /// Sorted uniform bar arc lengths (resampled until every gap clears the
    /// minimum), agents rejection-sampled inside their subregions.
    Random,
    Explicit {
        bars: Vec<f64>,
        agents: Vec<Point>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EarlyStop {
    pub enabled: bool,
    /// Relative imbalance tolerance.
    pub imbalance: f64,
    /// Target distance tolerance (metric units).
    pub distance: f64,
    /// Consecutive steps both tolerances must hold.
    pub hold_steps: usize,
}

impl Default for EarlyStop {
    fn default() -> Self {
        EarlyStop {
            enabled: true,
            imbalance: 1e-3,
            distance: 0.05,
            hold_steps: 100,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub domain: AnnulusDomain,
    pub density: DensityField,
    pub agents: usize,
    pub dt: f64,
    pub horizon: f64,
    pub kappa_s: f64,
    pub kappa_p: f64,
    pub spacing: f64,
    pub cost: CoverageCostConfig,
    pub seed: u64,
    pub initial: InitialConditions,
    pub early_stop: EarlyStop,
}

impl SimConfig {
    /// Six agents on the ellipse/Fourier annulus with the case-study density.
    pub fn case_study() -> Self {
        SimConfig {
            domain: case_study_domain(),
            density: DensityField::CaseStudy,
            agents: 6,
            dt: 0.02,
            horizon: 100.0,
            kappa_s: 0.02,
            kappa_p: 0.1,
            spacing: 0.02,
            cost: CoverageCostConfig::default(),
            seed: 1,
            initial: InitialConditions::Random,
            early_stop: EarlyStop::default(),
        }
    }

    /// Uniform density on the 0.5/1.0 circular annulus.
    pub fn circular_uniform() -> Self {
        SimConfig {
            domain: circular_domain(0.5, 1.0).expect("valid circle radii"),
            density: DensityField::Uniform(1.0),
            agents: 4,
            dt: 0.02,
            horizon: 60.0,
            kappa_s: 0.2,
            kappa_p: 0.1,
            spacing: 0.02,
            cost: CoverageCostConfig::default(),
            seed: 1,
            initial: InitialConditions::Random,
            early_stop: EarlyStop::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.agents == 0 {
            return bad("at least one agent is required");
        }
        if !(self.dt > 0.0) {
            return bad("dt must be positive");
        }
        if !(self.horizon >= self.dt) {
            return bad("horizon T must be at least dt");
        }
        if !(self.kappa_s > 0.0) || !(self.kappa_p > 0.0) {
            return bad("gains must be positive");
        }
        if !(self.spacing > 0.0) {
            return bad("grid spacing must be positive");
        }
        if let InitialConditions::Explicit { bars, agents } = &self.initial {
            if bars.len() != self.agents || agents.len() != self.agents {
                return bad("explicit initial conditions need one bar and one position per agent");
            }
        }
        self.cost.validate()?;
        self.density.validate(&self.domain)
    }

    pub fn total_steps(&self) -> u64 {
        (self.horizon / self.dt).round() as u64
    }
}

#[derive(Debug, Clone)]
pub struct SimState {
    pub time: f64,
    pub step: u64,
    pub agents: Vec<AgentState>,
    pub partition: PartitionState,
    pub decomposition: SubregionDecomposition,
    pub workloads: WorkloadVector,
    pub targets: Vec<TargetState>,
    /// Incremented on every decomposition.
    pub epoch: u64,
}

/// Everything measured in one step, at the state before it moved.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub step: u64,
    pub t: f64,
    pub lyapunov: f64,
    pub max_adjacent_difference: f64,
    pub relative_imbalance: f64,
    pub workloads: Vec<f64>,
    pub bars: Vec<f64>,
    pub positions: Vec<Point>,
    pub targets: Vec<Point>,
    /// `½ d²` to the target.
    pub energies: Vec<f64>,
    pub distances: Vec<f64>,
    pub clearances: Vec<f64>,
    pub min_h: f64,
    /// Agents whose Euler step had to be shortened.
    pub halved_agents: u32,
    /// Agents that could not move at all.
    pub frozen_agents: u32,
    pub clamped_bars: u32,
    pub targets_recomputed: bool,
    /// Largest target jump at this recomputation (zero otherwise).
    pub target_drift: f64,
    /// Total arc-length travelled by all bars in this step.
    pub bar_displacement: f64,
    /// Agents whose distance had to be read from the whole-domain field.
    pub fallback_fields: u32,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct DiagnosticsLog {
    pub records: Vec<StepRecord>,
    /// `max h` over the grid nodes, for clearance ratios.
    pub max_h: f64,
}

impl DiagnosticsLog {
    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.t).collect()
    }

    /// Record at time `t` (nearest step).
    pub fn at_time(&self, t: f64) -> Option<&StepRecord> {
        self.records
            .iter()
            .min_by(|a, b| (a.t - t).abs().total_cmp(&(b.t - t).abs()))
    }

    /// Steps where `V` rose by more than `tol · V(0)`.
    pub fn lyapunov_increases(&self, tol: f64) -> usize {
        let Some(v0) = self.records.first().map(|r| r.lyapunov) else {
            return 0;
        };
        self.records
            .windows(2)
            .filter(|w| w[1].lyapunov > w[0].lyapunov + tol * v0)
            .count()
    }

    /// Largest single-step rise of `V` relative to `V(0)`.
    pub fn max_lyapunov_rise(&self) -> f64 {
        let Some(v0) = self.records.first().map(|r| r.lyapunov) else {
            return 0.0;
        };
        self.records
            .windows(2)
            .map(|w| (w[1].lyapunov - w[0].lyapunov) / v0)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_clearance(&self) -> f64 {
        self.records.iter().map(|r| r.min_h).fold(f64::INFINITY, f64::min)
    }

    pub fn imbalance_fit(&self) -> Result<ExponentialFit> {
        let t: Vec<f64> = self.times();
        let y: Vec<f64> = self.records.iter().map(|r| r.max_adjacent_difference).collect();
        fit_exponential(&t, &y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExponentialFit {
    pub c1: f64,
    pub c2: f64,
    pub r2: f64,
    /// End of the fitted window.
    pub t_end: f64,
}

/// Least-squares fit of `ln y = ln c1 - c2 t` from the start until `y`
/// first drops below `1e-3 · y(0)`.
pub fn fit_exponential(t: &[f64], y: &[f64]) -> Result<ExponentialFit> {
    if t.len() != y.len() || t.len() < 50 {
        return Err(Error::Fit(format!("need at least 50 samples, got {}", t.len())));
    }
    let y0 = y[0];
    if !(y0 > 0.0) {
        return Err(Error::Fit("initial value must be positive".into()));
    }
    if !y.iter().any(|&v| v < 0.5 * y0) {
        return Err(Error::Fit(
            "insufficient decay: never below half the initial value".into(),
        ));
    }
    let end = y.iter().position(|&v| v < 1e-3 * y0).map_or(y.len(), |k| k + 1);
    let pts: Vec<(f64, f64)> = t[..end]
        .iter()
        .zip(&y[..end])
        .filter(|(_, &v)| v > 0.0)
        .map(|(&a, &v)| (a, v.ln()))
        .collect();
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return Err(Error::Fit("fewer than two positive samples in the window".into()));
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let r2 = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    Ok(ExponentialFit {
        c1: intercept.exp(),
        c2: -slope,
        r2,
        t_end: t[end - 1],
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SimSummary {
    pub steps: u64,
    pub final_time: f64,
    pub stopped_early: bool,
    pub final_relative_imbalance: f64,
    pub final_distances: Vec<f64>,
    /// First time the relative imbalance stays below 5% for the rest of the
    /// run (NaN if never).
    pub imbalance_settle_time: f64,
    /// Per agent, first time the target distance stays below the early-stop
    /// distance tolerance (NaN if never).
    pub arrival_times: Vec<f64>,
    pub fit_c1: f64,
    pub fit_c2: f64,
    pub fit_r2: f64,
    pub min_clearance: f64,
    pub min_clearance_ratio: f64,
    pub halved_steps: u64,
    pub frozen_steps: u64,
    pub clamped_bar_steps: u64,
    pub fallback_fields: u64,
    pub lyapunov_increases: u64,
}

fn settle_time(log: &DiagnosticsLog, ok: impl Fn(&StepRecord) -> bool) -> f64 {
    let mut t = f64::NAN;
    for r in &log.records {
        if ok(r) {
            if t.is_nan() {
                t = r.t;
            }
        } else {
            t = f64::NAN;
        }
    }
    t
}

impl SimSummary {
    pub fn from_log(log: &DiagnosticsLog, state: &SimState, config: &SimConfig, stopped_early: bool) -> Self {
        let last = log.records.last();
        let n = config.agents;
        let fit = log.imbalance_fit().ok();
        let tol = config.early_stop.distance;
        SimSummary {
            steps: state.step,
            final_time: state.time,
            stopped_early,
            final_relative_imbalance: last.map_or(f64::NAN, |r| r.relative_imbalance),
            final_distances: last.map_or_else(Vec::new, |r| r.distances.clone()),
            imbalance_settle_time: settle_time(log, |r| r.relative_imbalance <= 0.05),
            arrival_times: (0..n)
                .map(|i| settle_time(log, |r| r.distances[i] <= tol))
                .collect(),
            fit_c1: fit.map_or(f64::NAN, |f| f.c1),
            fit_c2: fit.map_or(f64::NAN, |f| f.c2),
            fit_r2: fit.map_or(f64::NAN, |f| f.r2),
            min_clearance: log.min_clearance(),
            min_clearance_ratio: log.min_clearance() / log.max_h,
            halved_steps: log.records.iter().filter(|r| r.halved_agents > 0).count() as u64,
            frozen_steps: log.records.iter().filter(|r| r.frozen_agents > 0).count() as u64,
            clamped_bar_steps: log.records.iter().filter(|r| r.clamped_bars > 0).count() as u64,
            fallback_fields: log.records.iter().map(|r| r.fallback_fields as u64).sum(),
            lyapunov_increases: log.lyapunov_increases(1e-6) as u64,
        }
    }
}

/// A running simulation.
#[derive(Debug)]
pub struct Simulation {
    config: SimConfig,
    grid: Arc<MetricGrid>,
    state: SimState,
    /// Per agent: field sourced at its target, restricted to its subregion
    /// at the time the target was computed.
    fields: Vec<GeodesicField>,
    /// Per agent: lazily built whole-domain field for agents that have
    /// drifted out of their subregion's field.
    wide: Vec<Option<GeodesicField>>,
    log: DiagnosticsLog,
    calm_steps: usize,
    stopped_early: bool,
}

impl Simulation {
    pub fn new(config: SimConfig) -> Result<Self> {
        config.validate()?;
        let grid = Arc::new(MetricGrid::build(
            Arc::new(config.domain.clone()),
            config.spacing,
        )?);
        Self::with_grid(config, grid)
    }

    /// Reuses a prebuilt grid (which must discretize `config.domain` at
    /// `config.spacing`).
    pub fn with_grid(config: SimConfig, grid: Arc<MetricGrid>) -> Result<Self> {
        config.validate()?;
        let domain = &config.domain;
        let n = config.agents;
        let (partition, positions) = match &config.initial {
            InitialConditions::Explicit { bars, agents } => {
                (PartitionState::new(domain, bars, config.spacing)?, agents.clone())
            }
            InitialConditions::Random => random_initial(&config, &grid)?,
        };
        let decomposition = decompose(domain, &partition, &grid)?;
        for (i, &p) in positions.iter().enumerate() {
            if !(domain.barrier(p) > 0.0) {
                return Err(Error::Config(format!(
                    "agent {i} starts outside the domain at {p:?}"
                )));
            }
        }
        let workloads = workload(&decomposition, &config.density, domain, &grid);
        let agents = positions
            .iter()
            .enumerate()
            .map(|(id, &position)| AgentState {
                id,
                position,
                input: Point::ZERO,
            })
            .collect();
        let log = DiagnosticsLog {
            records: Vec::new(),
            max_h: grid.max_h(),
        };
        Ok(Simulation {
            state: SimState {
                time: 0.0,
                step: 0,
                agents,
                partition,
                decomposition,
                workloads,
                targets: Vec::with_capacity(n),
                epoch: 0,
            },
            fields: Vec::with_capacity(n),
            wide: vec![None; n],
            config,
            grid,
            log,
            calm_steps: 0,
            stopped_early: false,
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn grid(&self) -> &Arc<MetricGrid> {
        &self.grid
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn log(&self) -> &DiagnosticsLog {
        &self.log
    }

    /// Whether the run has reached its horizon or met the early-stop rule.
    pub fn finished(&self) -> bool {
        self.stopped_early || self.state.step >= self.config.total_steps()
    }

    pub fn stopped_early(&self) -> bool {
        self.stopped_early
    }

    /// Subregion cells and weights for the current decomposition.
    pub fn subregions(&self) -> Vec<WeightedCells> {
        subregions(&self.state.decomposition, &self.config, &self.grid)
    }

    /// One step of the coupled loop: decompose, workloads, partition update,
    /// targets (when due), control inputs, agent motion, log.
    pub fn step(&mut self) -> Result<&StepRecord> {
        let step = self.state.step;
        self.advance().map_err(|e| e.at_step(step))?;
        if self.finished() {
            self.observe_final().map_err(|e| e.at_step(step + 1))?;
        }
        Ok(self.log.records.last().expect("a record was just pushed"))
    }

    fn advance(&mut self) -> Result<()> {
        let grid_arc = self.grid.clone();
        let grid = &*grid_arc;
        let cfg = &self.config;
        let domain = &cfg.domain;
        let n = cfg.agents;

        let decomp = decompose(domain, &self.state.partition, grid)?;
        self.state.epoch += 1;
        let epoch = self.state.epoch;
        let loads = workload(&decomp, &cfg.density, domain, grid);
        let (next_partition, clamped) =
            partition_step(domain, &self.state.partition, &loads, cfg.kappa_s, cfg.dt)?;

        // targets: on schedule, or early when a target has left its subregion
        let subs = subregions(&decomp, cfg, grid);
        let misplaced = self
            .state
            .targets
            .iter()
            .enumerate()
            .any(|(i, t)| decomp.label(t.node) != Some(i));
        let due = self.state.targets.len() != n
            || misplaced
            || self.state.targets.iter().any(|t| t.age + 1 >= cfg.cost.period);
        let mut drift = 0.0f64;
        if due {
            let previous = self.state.targets.clone();
            let computed: Vec<Result<(TargetState, GeodesicField)>> = subs
                .par_iter()
                .map(|sub| {
                    let hint = previous.get(sub.index).map(|t| t.point);
                    let target = find_local_optimum(sub, grid, &cfg.cost, hint)?;
                    let mut field = distance_field(grid, target.point, Restriction::Cells(&sub.cells))?;
                    field.epoch = epoch;
                    Ok((target, field))
                })
                .collect();
            let mut targets = Vec::with_capacity(n);
            let mut fields = Vec::with_capacity(n);
            for r in computed {
                let (t, f) = r?;
                targets.push(t);
                fields.push(f);
            }
            for (old, new) in previous.iter().zip(&targets) {
                drift = drift.max(old.point.distance(new.point));
            }
            self.state.targets = targets;
            self.fields = fields;
            self.wide = vec![None; n];
        } else {
            for t in &mut self.state.targets {
                t.age += 1;
            }
        }

        // distances and inputs
        let (kappa_p, gradient, period) = (cfg.kappa_p, cfg.cost.gradient, cfg.cost.period);
        let mut fallback = 0;
        let mut distances = Vec::with_capacity(n);
        let mut inputs = Vec::with_capacity(n);
        for i in 0..n {
            let p = self.state.agents[i].position;
            let (field, wide) = self.field_for(i)?;
            fallback += wide as u32;
            distances.push(field.value_at(grid, p));
            inputs.push(control_input(p, field, grid, kappa_p, gradient, epoch, period)?);
        }

        let cfg = &self.config;
        let domain = &cfg.domain;
        let clearances: Vec<f64> = self
            .state
            .agents
            .iter()
            .map(|a| domain.barrier(a.position))
            .collect();
        let record = StepRecord {
            step: self.state.step,
            t: self.state.time,
            lyapunov: loads.lyapunov(),
            max_adjacent_difference: loads.max_adjacent_difference(),
            relative_imbalance: loads.relative_imbalance(),
            workloads: loads.m.clone(),
            bars: self.state.partition.arc_lengths(),
            positions: self.state.agents.iter().map(|a| a.position).collect(),
            targets: self.state.targets.iter().map(|t| t.point).collect(),
            energies: distances.iter().map(|d| 0.5 * d * d).collect(),
            distances: distances.clone(),
            min_h: clearances.iter().copied().fold(f64::INFINITY, f64::min),
            clearances,
            halved_agents: 0,
            frozen_agents: 0,
            clamped_bars: clamped as u32,
            targets_recomputed: due,
            target_drift: drift,
            bar_displacement: 0.0,
            fallback_fields: fallback,
        };

        // move
        let mut halved = 0;
        let mut frozen = 0;
        for (agent, &u) in self.state.agents.iter_mut().zip(&inputs) {
            let out = agent_step(agent, u, cfg.dt, domain);
            if out.halvings > 0 {
                halved += 1;
            }
            if out.frozen {
                frozen += 1;
            }
            *agent = out.agent;
        }
        let perimeter = self.state.partition.perimeter();
        let displacement: f64 = self
            .state
            .partition
            .arc_lengths()
            .iter()
            .zip(next_partition.arc_lengths())
            .map(|(a, b)| {
                let d = (b - a).rem_euclid(perimeter);
                d.min(perimeter - d)
            })
            .sum();
        self.state.partition = next_partition;
        self.state.decomposition = decomp;
        self.state.workloads = loads;
        self.state.step += 1;
        self.state.time = self.state.step as f64 * cfg.dt;

        let calm = record.relative_imbalance <= cfg.early_stop.imbalance
            && distances.iter().all(|&d| d <= cfg.early_stop.distance);
        self.calm_steps = if calm { self.calm_steps + 1 } else { 0 };
        if cfg.early_stop.enabled && self.calm_steps >= cfg.early_stop.hold_steps {
            self.stopped_early = true;
        }
        self.log.records.push(StepRecord {
            halved_agents: halved,
            frozen_agents: frozen,
            bar_displacement: displacement,
            ..record
        });
        Ok(())
    }

    /// The agent's target field, or the whole-domain field to the same
    /// target when the agent has strayed outside the restricted one. The
    /// flag tells which.
    fn field_for(&mut self, i: usize) -> Result<(&GeodesicField, bool)> {
        let grid = &*self.grid;
        let p = self.state.agents[i].position;
        if self.fields[i].covers(grid, p) {
            return Ok((&self.fields[i], false));
        }
        if self.wide[i].is_none() {
            let mut f = distance_field(grid, self.state.targets[i].point, Restriction::Whole)?;
            f.epoch = self.fields[i].epoch;
            self.wide[i] = Some(f);
        }
        Ok((self.wide[i].as_ref().expect("built above"), true))
    }

    /// Logs the state reached by the last step, so that the log spans the
    /// whole run. Nothing moves.
    fn observe_final(&mut self) -> Result<()> {
        let cfg = &self.config;
        let grid = self.grid.clone();
        let decomp = decompose(&cfg.domain, &self.state.partition, &grid)?;
        let loads = workload(&decomp, &cfg.density, &cfg.domain, &grid);
        let mut fallback = 0;
        let mut distances = Vec::with_capacity(cfg.agents);
        for i in 0..self.config.agents {
            let p = self.state.agents[i].position;
            let (field, wide) = self.field_for(i)?;
            fallback += wide as u32;
            distances.push(field.value_at(&grid, p));
        }
        let domain = &self.config.domain;
        let clearances: Vec<f64> = self
            .state
            .agents
            .iter()
            .map(|a| domain.barrier(a.position))
            .collect();
        self.log.records.push(StepRecord {
            step: self.state.step,
            t: self.state.time,
            lyapunov: loads.lyapunov(),
            max_adjacent_difference: loads.max_adjacent_difference(),
            relative_imbalance: loads.relative_imbalance(),
            workloads: loads.m.clone(),
            bars: self.state.partition.arc_lengths(),
            positions: self.state.agents.iter().map(|a| a.position).collect(),
            targets: self.state.targets.iter().map(|t| t.point).collect(),
            energies: distances.iter().map(|d| 0.5 * d * d).collect(),
            distances,
            min_h: clearances.iter().copied().fold(f64::INFINITY, f64::min),
            clearances,
            halved_agents: 0,
            frozen_agents: 0,
            clamped_bars: 0,
            targets_recomputed: false,
            target_drift: 0.0,
            bar_displacement: 0.0,
            fallback_fields: fallback,
        });
        self.state.decomposition = decomp;
        self.state.workloads = loads;
        Ok(())
    }

    pub fn summary(&self) -> SimSummary {
        SimSummary::from_log(&self.log, &self.state, &self.config, self.stopped_early)
    }

    pub fn into_parts(self) -> (SimState, DiagnosticsLog, SimSummary) {
        let summary = self.summary();
        (self.state, self.log, summary)
    }
}

fn subregions(decomp: &SubregionDecomposition, cfg: &SimConfig, grid: &MetricGrid) -> Vec<WeightedCells> {
    (0..decomp.subregion_count())
        .map(|i| WeightedCells::from_decomposition(decomp, i, &cfg.density, &cfg.domain, grid))
        .collect()
}

fn random_initial(config: &SimConfig, grid: &MetricGrid) -> Result<(PartitionState, Vec<Point>)> {
    let domain = &config.domain;
    let n = config.agents;
    let perimeter = domain.perimeter();
    let eps = min_bar_gap(perimeter, n, config.spacing);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut bars = Vec::new();
    for attempt in 0.. {
        if attempt == 100_000 {
            return Err(Error::Config("could not place bars with the minimum gap".into()));
        }
        bars = (0..n)
            .map(|_| rng.gen_range(0.0..perimeter))
            .collect::<Vec<f64>>();
        bars.sort_by(f64::total_cmp);
        let min_gap = (0..n)
            .map(|i| (bars[(i + 1) % n] - bars[i]).rem_euclid(perimeter))
            .fold(f64::INFINITY, f64::min);
        if n == 1 || min_gap >= eps {
            break;
        }
    }
    let partition = PartitionState::new(domain, &bars, config.spacing)?;
    let decomp = decompose(domain, &partition, grid)?;
    let floor = h_interior(grid);
    let (lo, hi) = domain.bounding_box();
    let mut agents = Vec::with_capacity(n);
    for i in 0..n {
        let mut placed = None;
        for _ in 0..1_000_000 {
            let q = Point::new(rng.gen_range(lo.x..hi.x), rng.gen_range(lo.y..hi.y));
            if domain.barrier(q) >= floor && decomp.subregion_of(grid, q) == Some(i) {
                placed = Some(q);
                break;
            }
        }
        agents.push(placed.ok_or(Error::EmptySubregion(i))?);
    }
    Ok((partition, agents))
}

/// Runs to the horizon (or early stop).
pub fn run(config: SimConfig) -> Result<(SimState, DiagnosticsLog, SimSummary)> {
    let mut sim = Simulation::new(config)?;
    while !sim.finished() {
        sim.step()?;
    }
    Ok(sim.into_parts())
}

/// Per-bar comparison of bar fluxes with finite-difference derivatives of
/// the workloads.
#[derive(Debug, Clone, Serialize)]
pub struct FluxCheck {
    pub bar: usize,
    pub flux: f64,
    pub swept: f64,
    /// `∂m_i/∂s` for footpoint motion along `ν_i` (sliding along the curve).
    pub slide_own: f64,
    /// `∂m_{i-1}/∂s` for the same motion.
    pub slide_prev: f64,
    /// `∂m_i/∂s` for a rigid translation of the bar along `ν_i`.
    pub translate_own: f64,
}

impl FluxCheck {
    /// Relative error of the sliding derivative against the bar flux.
    pub fn flux_error(&self) -> f64 {
        (self.slide_own - self.flux).abs() / self.flux
    }

    pub fn swept_error(&self) -> f64 {
        (self.slide_own - self.swept).abs() / self.swept
    }

    pub fn translation_error(&self) -> f64 {
        (self.translate_own - self.flux).abs() / self.flux
    }

    pub fn antisymmetry_error(&self) -> f64 {
        (self.slide_own + self.slide_prev).abs() / self.slide_own.abs()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BarFluxReport {
    pub bars: Vec<FluxCheck>,
}

impl BarFluxReport {
    fn max(&self, f: impl Fn(&FluxCheck) -> f64) -> f64 {
        self.bars.iter().map(f).fold(0.0, f64::max)
    }

    pub fn max_flux_error(&self) -> f64 {
        self.max(FluxCheck::flux_error)
    }

    pub fn max_swept_error(&self) -> f64 {
        self.max(FluxCheck::swept_error)
    }

    pub fn max_translation_error(&self) -> f64 {
        self.max(FluxCheck::translation_error)
    }

    pub fn max_antisymmetry_error(&self) -> f64 {
        self.max(FluxCheck::antisymmetry_error)
    }
}

/// Central differences with step `2Δ` of the workloads with respect to each
/// bar position, against `bar_flux` (and the curvature-corrected
/// `swept_flux`). Needs at least two bars.
pub fn check_bar_flux(
    domain: &AnnulusDomain,
    density: &DensityField,
    grid: &MetricGrid,
    state: &PartitionState,
) -> Result<BarFluxReport> {
    let n = state.len();
    if n < 2 {
        return Err(Error::Config("the flux check needs at least two bars".into()));
    }
    let delta = 2.0 * grid.spacing();
    let masses = |s: &PartitionState| -> Result<Vec<f64>> {
        Ok(workload(&decompose(domain, s, grid)?, density, domain, grid).m)
    };
    let ls = state.arc_lengths();
    let bars = (0..n)
        .into_par_iter()
        .map(|i| {
            let prev = (i + n - 1) % n;
            let shifted = |dl: f64| -> Result<Vec<f64>> {
                let mut l = ls.clone();
                l[i] += dl;
                masses(&PartitionState::new(domain, &l, state.spacing())?)
            };
            // motion along ν_i (clockwise) lowers the arc length
            let fwd = shifted(-delta)?;
            let back = shifted(delta)?;
            let bar = &state.bars()[i];
            let moved = |s: f64| -> Result<Vec<f64>> {
                masses(&state.with_bar(i, translated_bar(domain, bar, s, grid.spacing())?))
            };
            let t_fwd = moved(delta)?;
            let t_back = moved(-delta)?;
            Ok(FluxCheck {
                bar: i,
                flux: bar_flux(bar, domain, density),
                swept: swept_flux(bar, domain, density),
                slide_own: (fwd[i] - back[i]) / (2.0 * delta),
                slide_prev: (fwd[prev] - back[prev]) / (2.0 * delta),
                translate_own: (t_fwd[i] - t_back[i]) / (2.0 * delta),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BarFluxReport { bars })
}

/// Sorted uniform bar arc lengths with every gap at least the minimum.
pub fn random_bars(domain: &AnnulusDomain, n: usize, spacing: f64, rng: &mut impl Rng) -> Vec<f64> {
    let perimeter = domain.perimeter();
    let eps = min_bar_gap(perimeter, n, spacing).max(perimeter / (4.0 * n as f64));
    loop {
        let mut bars: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..perimeter)).collect();
        bars.sort_by(f64::total_cmp);
        let ok = (0..n).all(|i| (bars[(i + 1) % n] - bars[i]).rem_euclid(perimeter) >= eps);
        if n == 1 || ok {
            return bars;
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct HessianCheck {
    pub agent: usize,
    pub hessian: [[f64; 2]; 2],
    pub min_eigenvalue: f64,
    pub asymmetry: f64,
}

/// Finite-difference Hessians (step `2Δ`) of each local cost at its target.
/// Entries are NaN where the stencil leaves the subregion.
pub fn check_hessian(
    subs: &[WeightedCells],
    targets: &[TargetState],
    grid: &MetricGrid,
    kind: CostKind,
) -> Vec<HessianCheck> {
    subs.par_iter()
        .zip(targets)
        .map(|(sub, t)| {
            let f = |p: Point| local_cost(p, sub, grid, kind).unwrap_or(f64::NAN);
            let hm = oracle::hessian(f, t.point, 2.0 * grid.spacing());
            let norm = hm.iter().flatten().map(|x| x * x).sum::<f64>().sqrt();
            HessianCheck {
                agent: sub.index,
                hessian: hm,
                min_eigenvalue: oracle::min_eigenvalue(hm),
                asymmetry: (hm[0][1] - hm[1][0]).abs() / norm,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_exponential_fit() {
        let t: Vec<f64> = (0..200).map(|k| k as f64 * 0.1).collect();
        let y: Vec<f64> = t.iter().map(|t| 3.0 * (-0.5 * t).exp()).collect();
        let f = fit_exponential(&t, &y).unwrap();
        assert!((f.c1 - 3.0).abs() < 1e-9);
        assert!((f.c2 - 0.5).abs() < 1e-9);
        assert!((f.r2 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn flat_signal_is_rejected() {
        let t: Vec<f64> = (0..60).map(|k| k as f64).collect();
        let y = vec![1.0; 60];
        assert!(matches!(fit_exponential(&t, &y), Err(Error::Fit(_))));
        assert!(matches!(fit_exponential(&t[..10], &y[..10]), Err(Error::Fit(_))));
    }

    #[test]
    fn config_validation() {
        let mut c = SimConfig::circular_uniform();
        c.dt = 0.0;
        assert!(c.validate().is_err());
        let mut c = SimConfig::circular_uniform();
        c.horizon = 0.001;
        assert!(c.validate().is_err());
        let mut c = SimConfig::circular_uniform();
        c.initial = InitialConditions::Explicit {
            bars: vec![0.0],
            agents: vec![],
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn single_agent_never_moves_the_bar() {
        let mut c = SimConfig::circular_uniform();
        c.agents = 1;
        c.horizon = 0.4;
        c.spacing = 0.04;
        let (state, log, _) = run(c).unwrap();
        assert!(log.records.iter().all(|r| r.bar_displacement == 0.0));
        assert_eq!(state.partition.len(), 1);
    }
}
