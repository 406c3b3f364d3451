use rayon::prelude::*;

use super::config::{ExperimentConfig, ExperimentKind};
use super::stats::{batch_interval, Interval};
use crate::engine::{SimConfig, Simulation, TrajectoryRow};
use crate::error::{Error, Result};
use crate::geometry::{place_hex_lattice, place_poisson, Layout, Metric, Region};
use crate::metrics;
use crate::protocol::{Protocol, ProtocolParams};
use crate::rng;
use crate::targets::{analytic_bounds, TargetDistanceFunction, TargetKind};

/// One (protocol, radius, ratio) combination of a sweep.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cell {
    pub protocol: Protocol,
    pub comm_radius: f64,
    /// Desired active ratio handed to the protocol.
    pub c_z: f64,
    /// Density that normalizes `D` for this cell.
    pub z: f64,
}

impl Cell {
    pub fn label(&self) -> String {
        format!("{}_r{}_c{}", self.protocol, self.comm_radius, self.c_z)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialRun {
    pub trial: usize,
    pub seed: u64,
    pub rows: Vec<TrajectoryRow>,
    /// Time at which at most half of the nodes were still alive (lifetime only).
    pub half_life: Option<f64>,
}

/// Per-trial series names in aggregate output.
pub const SERIES: [&str; 4] = ["D", "U", "active_count", "alive_fraction"];

pub fn series_value(row: &TrajectoryRow, metric: &str) -> f64 {
    let s = &row.snapshot;
    match metric {
        "D" => s.d.map_or(f64::NAN, |e| e.value),
        "U" => s.u.map_or(f64::NAN, |e| e.value),
        "active_count" => s.active_count as f64,
        "alive_fraction" => s.alive_fraction,
        _ => f64::NAN,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellResult {
    pub cell: Cell,
    pub trials: Vec<TrialRun>,
}

impl CellResult {
    pub fn times(&self) -> Vec<f64> {
        self.trials.first().map(|t| t.rows.iter().map(|r| r.t).collect()).unwrap_or_default()
    }

    /// Batch interval of `metric` at sample time `t`.
    pub fn interval(&self, metric: &str, t: f64) -> Interval {
        let values: Vec<f64> = self
            .trials
            .iter()
            .filter_map(|tr| tr.rows.iter().find(|r| r.t == t))
            .map(|r| series_value(r, metric))
            .collect();
        batch_interval(&values)
    }

    /// Batch interval of the time to 50% dead over trials that reached it.
    pub fn half_life(&self) -> Interval {
        let values: Vec<f64> = self.trials.iter().map(|t| t.half_life.unwrap_or(f64::NAN)).collect();
        batch_interval(&values)
    }
}

/// One line of the aggregate CSV.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AggregateRow {
    pub cell: Cell,
    pub t: f64,
    pub metric: &'static str,
    pub interval: Interval,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatchResult {
    pub experiment: ExperimentKind,
    pub config: ExperimentConfig,
    pub cells: Vec<CellResult>,
    /// Sponsored Cover active ratio per communication radius (lifetime only).
    pub calibration: Vec<(f64, f64)>,
}

impl BatchResult {
    /// First cell matching `protocol` and `comm_radius`, and `c_z` if given.
    pub fn cell(&self, protocol: Protocol, comm_radius: f64, c_z: Option<f64>) -> Option<&CellResult> {
        self.cells.iter().find(|c| {
            c.cell.protocol == protocol
                && (c.cell.comm_radius - comm_radius).abs() < 1e-12
                && c_z.is_none_or(|z| (c.cell.c_z - z).abs() < 1e-12)
        })
    }

    pub fn aggregate(&self) -> Vec<AggregateRow> {
        let mut out = Vec::new();
        for cell in &self.cells {
            for t in cell.times() {
                for metric in SERIES {
                    out.push(AggregateRow { cell: cell.cell, t, metric, interval: cell.interval(metric, t) });
                }
            }
        }
        out
    }
}

pub fn trial_seeds(config: &ExperimentConfig) -> Vec<u64> {
    if !config.trial_seeds.is_empty() {
        return config.trial_seeds.clone();
    }
    (0..config.trials as u64).map(|t| rng::derive_seed(config.seed, &[rng::TAG_TRIAL, t])).collect()
}

fn density(config: &ExperimentConfig, c_z: f64) -> f64 {
    c_z * config.n as f64 / (config.width * config.height)
}

fn cell(config: &ExperimentConfig, protocol: Protocol, comm_radius: f64, c_z: f64) -> Cell {
    Cell { protocol, comm_radius, c_z, z: density(config, c_z) }
}

fn sim_config(config: &ExperimentConfig, cell: &Cell) -> Result<SimConfig> {
    let area = config.width * config.height;
    let params = ProtocolParams::from_ratio(
        cell.c_z,
        area,
        config.n,
        config.max_neighbors,
        cell.protocol.target_kind(),
        cell.comm_radius * config.sensing_fraction,
    )?;
    Ok(SimConfig {
        protocol: cell.protocol,
        params,
        comm_radius: cell.comm_radius,
        period: config.period,
        energy: config.energy,
        charge_initial_broadcast: config.charge_initial_broadcast,
    })
}

fn layout(config: &ExperimentConfig, seed: u64) -> Result<Layout> {
    Ok(place_poisson(config.n, config.region()?, seed))
}

fn snapshot_seed(trial_seed: u64, index: usize) -> u64 {
    rng::derive_seed(trial_seed, &[rng::TAG_SNAPSHOT, index as u64])
}

fn async_trial(config: &ExperimentConfig, cell: &Cell, trial: usize, seed: u64, times: &[f64]) -> Result<TrialRun> {
    let layout = layout(config, seed)?;
    let mut sim = Simulation::new(&layout, sim_config(config, cell)?, seed)?;
    let mut rows = Vec::with_capacity(times.len());
    for (i, &t) in times.iter().enumerate() {
        sim.run_async_until(t)?;
        let snapshot = sim.snapshot_metrics(cell.z, config.m, snapshot_seed(seed, i))?;
        rows.push(TrajectoryRow { t, snapshot });
    }
    Ok(TrialRun { trial, seed, rows, half_life: None })
}

fn rounds_trial(config: &ExperimentConfig, cell: &Cell, trial: usize, seed: u64) -> Result<TrialRun> {
    let layout = layout(config, seed)?;
    let mut sim = Simulation::new(&layout, sim_config(config, cell)?, seed)?;
    let total = config.horizon.floor() as usize;
    let mut rows = Vec::new();
    let mut half_life = None;
    for round in 0..=total {
        if round > 0 {
            sim.step_round()?;
            if half_life.is_none() && sim.state().alive_fraction() <= 0.5 {
                half_life = Some(round as f64 * config.period);
            }
        }
        if round % config.checkpoint_rounds == 0 {
            let index = round / config.checkpoint_rounds;
            let snapshot = sim.snapshot_metrics(cell.z, config.m, snapshot_seed(seed, index))?;
            rows.push(TrajectoryRow { t: round as f64 * config.period, snapshot });
        }
    }
    Ok(TrialRun { trial, seed, rows, half_life })
}

/// Runs every (cell, trial) pair on the worker pool and regroups the results
/// by cell in trial order.
fn run_cells<F>(cells: Vec<Cell>, seeds: &[u64], run: F) -> Result<Vec<CellResult>>
where
    F: Fn(&Cell, usize, u64) -> Result<TrialRun> + Sync,
{
    let jobs: Vec<(usize, usize)> = (0..cells.len()).flat_map(|c| (0..seeds.len()).map(move |t| (c, t))).collect();
    let runs: Vec<TrialRun> = jobs.par_iter().map(|&(c, t)| run(&cells[c], t, seeds[t])).collect::<Result<_>>()?;
    let mut runs = runs.into_iter();
    Ok(cells
        .into_iter()
        .map(|cell| CellResult { cell, trials: runs.by_ref().take(seeds.len()).collect() })
        .collect())
}

fn check(config: &ExperimentConfig, kind: ExperimentKind) -> Result<()> {
    if config.experiment != kind {
        return Err(Error::Config(format!("expected a {} config, got {}", kind.name(), config.experiment.name())));
    }
    config.validate()
}

fn push_unique(cells: &mut Vec<Cell>, c: Cell) {
    if !cells.contains(&c) {
        cells.push(c);
    }
}

/// Sample times `0, T/2, T, 2T, ...` up to the horizon.
pub fn converge_times(config: &ExperimentConfig) -> Vec<f64> {
    let end = config.horizon * config.period;
    let mut times = vec![0.0, config.period / 2.0];
    times.extend((1..).map(|k| k as f64 * config.period).take_while(|t| *t <= end));
    if times.last().is_some_and(|t| *t < end) {
        times.push(end);
    }
    times.retain(|t| *t <= end);
    times
}

/// Metric trajectories over a radius sweep at the configured ratio, plus a
/// ratio sweep at `ratio_sweep_radius`.
pub fn run_converge(config: &ExperimentConfig) -> Result<BatchResult> {
    check(config, ExperimentKind::Converge)?;
    let c_z = config.ratio()?;
    let mut cells = Vec::new();
    for &p in &config.protocols {
        for &r in &config.comm_radius {
            push_unique(&mut cells, cell(config, p, r, c_z));
        }
        for &c in &config.ratios {
            push_unique(&mut cells, cell(config, p, config.ratio_sweep_radius, c));
        }
    }
    let times = converge_times(config);
    let cells = run_cells(cells, &trial_seeds(config), |c, t, s| async_trial(config, c, t, s, &times))?;
    Ok(BatchResult { experiment: ExperimentKind::Converge, config: config.clone(), cells, calibration: Vec::new() })
}

/// Metrics of every protocol at the single time `horizon * T`, per radius.
pub fn run_compare(config: &ExperimentConfig) -> Result<BatchResult> {
    check(config, ExperimentKind::Compare)?;
    let c_z = config.ratio()?;
    let cells: Vec<Cell> = config
        .comm_radius
        .iter()
        .flat_map(|&r| config.protocols.iter().map(move |&p| (p, r)))
        .map(|(p, r)| cell(config, p, r, c_z))
        .collect();
    let times = [config.horizon * config.period];
    let cells = run_cells(cells, &trial_seeds(config), |c, t, s| async_trial(config, c, t, s, &times))?;
    Ok(BatchResult { experiment: ExperimentKind::Compare, config: config.clone(), cells, calibration: Vec::new() })
}

/// Mean active ratio Sponsored Cover settles at after `calibration_rounds`.
pub fn calibrate_sponsored(config: &ExperimentConfig, comm_radius: f64) -> Result<f64> {
    let probe = cell(config, Protocol::Sponsored, comm_radius, config.ratio()?);
    let seeds = trial_seeds(config);
    let ratios: Vec<f64> = seeds
        .par_iter()
        .map(|&seed| {
            let layout = layout(config, seed)?;
            let mut sim = Simulation::new(&layout, sim_config(config, &probe)?, seed)?;
            for _ in 0..config.calibration_rounds {
                sim.step_round()?;
            }
            Ok(sim.state().active_count() as f64 / config.n as f64)
        })
        .collect::<Result<_>>()?;
    let ratio = batch_interval(&ratios).mean;
    if !(ratio > 0.0) {
        return Err(Error::InvalidParameter("Sponsored Cover calibration left no active nodes".into()));
    }
    Ok(ratio)
}

/// Rounds-mode runs with energy depletion. Sponsored Cover runs first to fix
/// the active ratio handed to every other protocol at the same radius.
pub fn run_lifetime(config: &ExperimentConfig) -> Result<BatchResult> {
    check(config, ExperimentKind::Lifetime)?;
    let c_z = config.ratio()?;
    let mut calibration = Vec::new();
    let mut cells = Vec::new();
    for &r in &config.comm_radius {
        let ratio = calibrate_sponsored(config, r)?;
        calibration.push((r, ratio));
        let z = density(config, ratio);
        for &p in &config.protocols {
            let c = if p == Protocol::Sponsored { c_z } else { ratio };
            cells.push(Cell { protocol: p, comm_radius: r, c_z: c, z });
        }
    }
    let cells = run_cells(cells, &trial_seeds(config), |c, t, s| rounds_trial(config, c, t, s))?;
    Ok(BatchResult { experiment: ExperimentKind::Lifetime, config: config.clone(), cells, calibration })
}

/// One Monte Carlo check of a closed-form constant.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundsRow {
    pub scenario: &'static str,
    pub quantity: String,
    pub analytic: f64,
    pub estimated: f64,
    pub std_error: f64,
    /// Acceptance interval for `estimated`.
    pub lower: f64,
    pub upper: f64,
}

impl BoundsRow {
    fn within(scenario: &'static str, quantity: &str, analytic: f64, estimated: f64, std_error: f64, tol: f64) -> Self {
        Self {
            scenario,
            quantity: quantity.to_string(),
            analytic,
            estimated,
            std_error,
            lower: analytic - tol,
            upper: analytic + tol,
        }
    }

    pub fn pass(&self) -> bool {
        self.estimated >= self.lower && self.estimated <= self.upper
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundsReport {
    pub rows: Vec<BoundsRow>,
}

impl BoundsReport {
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(BoundsRow::pass)
    }

    pub fn scenario(&self, scenario: &str) -> Vec<&BoundsRow> {
        self.rows.iter().filter(|r| r.scenario == scenario).collect()
    }
}

pub const DISC_TOLERANCE: f64 = 0.002;
pub const HEX_D_TOLERANCE: f64 = 0.002;
/// The lattice `U` has only an upper bound in closed form.
pub const HEX_U_RANGE: (f64, f64) = (0.195, 0.2068);
pub const POISSON_TOLERANCE: f64 = 0.005;
pub const KNN_RELATIVE_TOLERANCE: f64 = 0.01;

const SCENARIO_DISC: u64 = 1;
const SCENARIO_HEX: u64 = 2;
const SCENARIO_POISSON: u64 = 3;
const SCENARIO_KNN: u64 = 4;

/// Single node at the center of a unit disc.
pub fn bounds_disc(config: &ExperimentConfig) -> Result<Vec<BoundsRow>> {
    let b = analytic_bounds();
    let sample = metrics::sample_disc_distances(1.0, config.bounds.m, rng::derive_seed(config.seed, &[SCENARIO_DISC]))?;
    let d = metrics::avg_rep_error(&sample, 1.0 / std::f64::consts::PI)?;
    let u = metrics::unevenness(&sample)?;
    Ok(vec![
        BoundsRow::within("disc", "D", b.lb_d, d.value, d.std_error, DISC_TOLERANCE),
        BoundsRow::within("disc", "U", b.lb_u, u.value, u.std_error, DISC_TOLERANCE),
    ])
}

/// Triangular lattice of density `hex_z` on a torus it tiles exactly.
pub fn bounds_hex(config: &ExperimentConfig) -> Result<Vec<BoundsRow>> {
    let b = analytic_bounds();
    let region = Region::hex_torus(config.bounds.hex_z, config.width, config.height)?;
    let layout = place_hex_lattice(config.bounds.hex_z, region)?;
    let z = layout.len() as f64 / region.area();
    let index = crate::geometry::ActiveIndex::build(&layout, 0..layout.len());
    let sample = metrics::sample_nearest_distances(&index, config.bounds.m, rng::derive_seed(config.seed, &[SCENARIO_HEX]))?;
    let d = metrics::avg_rep_error(&sample, z)?;
    let u = metrics::unevenness(&sample)?;
    Ok(vec![
        BoundsRow::within("hex", "D", b.hex_lb_d, d.value, d.std_error, HEX_D_TOLERANCE),
        BoundsRow {
            scenario: "hex",
            quantity: "U".into(),
            analytic: b.hex_lb_u_upper,
            estimated: u.value,
            std_error: u.std_error,
            lower: HEX_U_RANGE.0,
            upper: HEX_U_RANGE.1,
        },
    ])
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let i = batch_interval(values);
    let n = values.len() as f64;
    let var = values.iter().map(|v| (v - i.mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (i.mean, (var / n).sqrt())
}

fn torus(config: &ExperimentConfig) -> Result<Region> {
    Region::new(config.width, config.height, Metric::Toroidal)
}

/// Independent uniform layouts on a torus, averaged over seeds.
pub fn bounds_poisson(config: &ExperimentConfig) -> Result<Vec<BoundsRow>> {
    let b = analytic_bounds();
    let region = torus(config)?;
    let bc = &config.bounds;
    let z = bc.poisson_n as f64 / region.area();
    let mut ds = Vec::new();
    let mut us = Vec::new();
    for s in 0..bc.poisson_seeds.max(1) as u64 {
        let seed = rng::derive_seed(config.seed, &[SCENARIO_POISSON, s]);
        let layout = place_poisson(bc.poisson_n, region, seed);
        let index = crate::geometry::ActiveIndex::build(&layout, 0..layout.len());
        let sample = metrics::sample_nearest_distances(&index, bc.m, seed)?;
        ds.push(metrics::avg_rep_error(&sample, z)?.value);
        us.push(metrics::gini(&sample.values)?);
    }
    let (d, d_se) = mean_and_se(&ds);
    let (u, u_se) = mean_and_se(&us);
    Ok(vec![
        BoundsRow::within("poisson", "D", b.poisson_d, d, d_se, POISSON_TOLERANCE),
        BoundsRow::within("poisson", "U", b.poisson_u, u, u_se, POISSON_TOLERANCE),
    ])
}

/// Mean k-th nearest-node distance on dense toroidal layouts against the
/// Poisson target distances, k = 1..3.
pub fn bounds_knn(config: &ExperimentConfig) -> Result<Vec<BoundsRow>> {
    const K: usize = 3;
    let region = torus(config)?;
    let bc = &config.bounds;
    let z = bc.knn_n as f64 / region.area();
    let target = TargetDistanceFunction::new(TargetKind::Poisson, z)?;
    let per_layout: Vec<Vec<[f64; K]>> = (0..bc.knn_layouts.max(1) as u64)
        .into_par_iter()
        .map(|s| {
            let seed = rng::derive_seed(config.seed, &[SCENARIO_KNN, s]);
            let layout = place_poisson(bc.knn_n, region, seed);
            let index = crate::geometry::ActiveIndex::build(&layout, 0..layout.len());
            let mut rng = rng::stream(seed, &[rng::TAG_SAMPLE]);
            (0..bc.knn_m)
                .map(|_| {
                    let p = region.sample_point(&mut rng);
                    let near = index.k_nearest(p, K, f64::INFINITY, None);
                    std::array::from_fn(|k| near[k].1)
                })
                .collect()
        })
        .collect();
    let all: Vec<[f64; K]> = per_layout.concat();
    (1..=K)
        .map(|k| {
            let values: Vec<f64> = all.iter().map(|row| row[k - 1]).collect();
            let (mean, se) = mean_and_se(&values);
            let analytic = target.target_distance(k)?;
            Ok(BoundsRow::within("knn", &format!("T_{k}(P)"), analytic, mean, se, KNN_RELATIVE_TOLERANCE * analytic))
        })
        .collect()
}

pub fn run_bounds(config: &ExperimentConfig) -> Result<BoundsReport> {
    check(config, ExperimentKind::Bounds)?;
    let mut rows = bounds_disc(config)?;
    rows.extend(bounds_hex(config)?);
    rows.extend(bounds_poisson(config)?);
    rows.extend(bounds_knn(config)?);
    Ok(BoundsReport { rows })
}

