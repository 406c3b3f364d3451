//! Simulation loop.
//!
//! Two scheduling modes share one [`Simulation`]:
//! - asynchronous: every node wakes after a `Uniform(0, T)` wait, decides,
//!   and reschedules itself; no energy is spent.
//! - rounds: once per period every live node acts at a random offset in
//!   `[0, T]`; nodes that end up active broadcast and pay for it, and every
//!   live neighbor in range pays for the reception.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::io::Write;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{fmt_sig17, ActiveIndex, Layout, NeighborLink};
use crate::metrics::{self, MetricEstimate};
use crate::protocol::{init_mode, Decision, LocalView, NeighborInfo, NodeMode, Protocol, ProtocolParams};
use crate::rng;

/// First-order radio model.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct EnergyModel {
    /// Electronics energy, J/bit.
    pub e_elec: f64,
    /// Amplifier energy, J/bit/m^2.
    pub eps_amp: f64,
    pub msg_bits: f64,
    /// Initial energy per node, J.
    pub budget: f64,
    /// Meters per region length unit.
    pub coord_scale: f64,
}

impl Default for EnergyModel {
    fn default() -> Self {
        Self { e_elec: 50e-9, eps_amp: 10e-12, msg_bits: 2000.0, budget: 0.05, coord_scale: 1.0 }
    }
}

impl EnergyModel {
    pub fn validate(&self) -> Result<()> {
        let all = [self.e_elec, self.eps_amp, self.msg_bits, self.budget, self.coord_scale];
        if all.iter().all(|v| *v > 0.0 && v.is_finite()) {
            Ok(())
        } else {
            Err(Error::InvalidParameter("energy model parameters must be positive".into()))
        }
    }

    /// Energy to broadcast one message over `range` length units.
    pub fn tx(&self, range: f64) -> f64 {
        let d = range * self.coord_scale;
        self.e_elec * self.msg_bits + self.eps_amp * self.msg_bits * d * d
    }

    pub fn rx(&self) -> f64 {
        self.e_elec * self.msg_bits
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkState {
    pub modes: Vec<NodeMode>,
    pub energy: Vec<f64>,
    pub clock: f64,
}

impl NetworkState {
    pub fn active_ids(&self) -> impl Iterator<Item = usize> + '_ {
        self.modes.iter().enumerate().filter(|(_, m)| m.is_active()).map(|(i, _)| i)
    }

    pub fn active_count(&self) -> usize {
        self.modes.iter().filter(|m| m.is_active()).count()
    }

    pub fn alive_count(&self) -> usize {
        self.modes.iter().filter(|m| m.is_alive()).count()
    }

    pub fn alive_fraction(&self) -> f64 {
        if self.modes.is_empty() {
            0.0
        } else {
            self.alive_count() as f64 / self.modes.len() as f64
        }
    }

    /// Writes `id,x,y,mode,energy` rows.
    pub fn write_csv<W: Write>(&self, layout: &Layout, mut out: W) -> Result<()> {
        writeln!(out, "id,x,y,mode,energy")?;
        for (id, p) in layout.positions().iter().enumerate() {
            writeln!(
                out,
                "{id},{},{},{},{}",
                fmt_sig17(p.x),
                fmt_sig17(p.y),
                self.modes[id].name(),
                fmt_sig17(self.energy[id])
            )?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimConfig {
    pub protocol: Protocol,
    pub params: ProtocolParams,
    pub comm_radius: f64,
    /// Upper bound `T` of the random wait between decisions.
    pub period: f64,
    pub energy: EnergyModel,
    /// Charge a broadcast for every node that starts out active.
    pub charge_initial_broadcast: bool,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.comm_radius > 0.0) || !(self.period > 0.0) {
            return Err(Error::InvalidParameter("communication radius and period must be positive".into()));
        }
        if self.protocol == Protocol::Sponsored && self.params.sensing_radius > self.comm_radius {
            return Err(Error::InvalidParameter("sensing radius exceeds communication radius".into()));
        }
        self.energy.validate()
    }
}

/// Totals behind the energy balance
/// `consumed + shortfall == transmissions * tx + receptions * rx`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EnergyLedger {
    pub transmissions: u64,
    pub receptions: u64,
    /// Charges that could not be paid because the battery ran out.
    pub shortfall: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Wake {
    time: f64,
    id: usize,
}

impl Eq for Wake {}

impl Ord for Wake {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time.total_cmp(&other.time).then(self.id.cmp(&other.id))
    }
}

impl PartialOrd for Wake {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepEvent {
    pub id: usize,
    pub time: f64,
    pub decision: Decision,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepOutcome {
    Event(StepEvent),
    /// No live node remains scheduled.
    Complete,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Snapshot {
    pub d: Option<MetricEstimate>,
    pub u: Option<MetricEstimate>,
    pub active_count: usize,
    pub alive_fraction: f64,
}

pub struct Simulation<'a> {
    layout: &'a Layout,
    neighbors: Vec<Vec<NeighborLink>>,
    config: SimConfig,
    state: NetworkState,
    node_rngs: Vec<ChaCha8Rng>,
    queue: BinaryHeap<Reverse<Wake>>,
    queue_started: bool,
    ledger: EnergyLedger,
    wakes: Vec<u64>,
}

impl<'a> Simulation<'a> {
    pub fn new(layout: &'a Layout, config: SimConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let n = layout.len();
        let modes = (0..n).map(|id| init_mode(&config.params, seed, id)).collect();
        let mut sim = Self {
            layout,
            neighbors: layout.neighbor_table(config.comm_radius),
            config,
            state: NetworkState { modes, energy: vec![config.energy.budget; n], clock: 0.0 },
            node_rngs: (0..n).map(|id| rng::stream(seed, &[rng::TAG_NODE, id as u64])).collect(),
            queue: BinaryHeap::with_capacity(n),
            queue_started: false,
            ledger: EnergyLedger::default(),
            wakes: vec![0; n],
        };
        if config.charge_initial_broadcast {
            let initially_active: Vec<usize> = sim.state.active_ids().collect();
            for id in initially_active {
                sim.broadcast(id);
            }
        }
        Ok(sim)
    }

    pub fn state(&self) -> &NetworkState {
        &self.state
    }

    pub fn layout(&self) -> &Layout {
        self.layout
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn ledger(&self) -> &EnergyLedger {
        &self.ledger
    }

    /// Number of decisions each node has made in asynchronous mode.
    pub fn wake_counts(&self) -> &[u64] {
        &self.wakes
    }

    /// Live nodes within communication range of `id`, nearest first.
    pub fn local_view(&self, id: usize) -> LocalView {
        LocalView {
            self_id: id,
            self_mode: self.state.modes[id],
            neighbors: self.neighbors[id]
                .iter()
                .filter(|l| self.state.modes[l.id].is_alive())
                .map(|l| NeighborInfo { id: l.id, distance: l.distance, offset: l.offset, mode: self.state.modes[l.id] })
                .collect(),
            comm_radius: self.config.comm_radius,
        }
    }

    fn decide(&mut self, id: usize) -> Result<Decision> {
        let view = self.local_view(id);
        let draw = self.node_rngs[id].random::<f64>();
        let decision = self.config.protocol.decide(&view, &self.config.params, draw)?;
        self.state.modes[id] = decision.apply(self.state.modes[id]);
        Ok(decision)
    }

    fn schedule(&mut self, id: usize, from: f64) {
        let wait = self.node_rngs[id].random::<f64>() * self.config.period;
        self.queue.push(Reverse(Wake { time: from + wait, id }));
    }

    fn ensure_queue(&mut self) {
        if !self.queue_started {
            self.queue_started = true;
            for id in 0..self.layout.len() {
                if self.state.modes[id].is_alive() {
                    self.schedule(id, self.state.clock);
                }
            }
        }
    }

    /// Time of the next pending wake, if any.
    pub fn next_wake(&mut self) -> Option<f64> {
        self.ensure_queue();
        self.queue.peek().map(|w| w.0.time)
    }

    /// Processes the earliest pending wake: decide, apply, reschedule.
    pub fn step_async(&mut self) -> Result<StepOutcome> {
        self.ensure_queue();
        loop {
            let Some(Reverse(wake)) = self.queue.pop() else {
                return Ok(StepOutcome::Complete);
            };
            if !self.state.modes[wake.id].is_alive() {
                continue;
            }
            self.state.clock = self.state.clock.max(wake.time);
            self.wakes[wake.id] += 1;
            let decision = self.decide(wake.id)?;
            self.schedule(wake.id, wake.time);
            return Ok(StepOutcome::Event(StepEvent { id: wake.id, time: wake.time, decision }));
        }
    }

    /// Processes every wake at or before `t`, then advances the clock to `t`.
    pub fn run_async_until(&mut self, t: f64) -> Result<()> {
        while let Some(next) = self.next_wake() {
            if next > t {
                break;
            }
            self.step_async()?;
        }
        self.state.clock = self.state.clock.max(t);
        Ok(())
    }

    fn debit(&mut self, id: usize, amount: f64) {
        let energy = &mut self.state.energy[id];
        if *energy > amount {
            *energy -= amount;
        } else {
            self.ledger.shortfall += amount - *energy;
            *energy = 0.0;
            self.state.modes[id] = NodeMode::Dead;
        }
    }

    fn broadcast(&mut self, id: usize) {
        let tx = self.config.energy.tx(self.config.comm_radius);
        let rx = self.config.energy.rx();
        self.ledger.transmissions += 1;
        self.debit(id, tx);
        for k in 0..self.neighbors[id].len() {
            let nb = self.neighbors[id][k].id;
            if self.state.modes[nb].is_alive() {
                self.ledger.receptions += 1;
                self.debit(nb, rx);
            }
        }
    }

    /// One round: every live node acts once, in order of a random start time
    /// within the period, seeing all changes made earlier in the round.
    pub fn step_round(&mut self) -> Result<()> {
        let mut order: Vec<(f64, usize)> = (0..self.layout.len())
            .filter(|&id| self.state.modes[id].is_alive())
            .map(|id| (self.node_rngs[id].random::<f64>() * self.config.period, id))
            .collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for (_, id) in order {
            if !self.state.modes[id].is_alive() {
                continue;
            }
            self.decide(id)?;
            if self.state.modes[id].is_active() {
                self.broadcast(id);
            }
        }
        self.state.clock += self.config.period;
        Ok(())
    }

    /// Metrics over the current active set, normalized by density `z`.
    /// Uses its own seed and leaves the simulation untouched.
    pub fn snapshot_metrics(&self, z: f64, m: usize, seed: u64) -> Result<Snapshot> {
        let active_count = self.state.active_count();
        let alive_fraction = self.state.alive_fraction();
        if active_count == 0 {
            return Ok(Snapshot { d: None, u: None, active_count, alive_fraction });
        }
        let index = ActiveIndex::build(self.layout, self.state.active_ids());
        let sample = metrics::sample_nearest_distances(&index, m, seed)?;
        let d = metrics::avg_rep_error(&sample, z)?;
        let u = metrics::unevenness(&sample).ok();
        Ok(Snapshot { d: Some(d), u, active_count, alive_fraction })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajectoryRow {
    pub t: f64,
    pub snapshot: Snapshot,
}

pub const TRAJECTORY_CSV_HEADER: &str = "t,D,U,active_count,alive_fraction";

fn fmt_opt(est: Option<MetricEstimate>) -> String {
    est.map_or_else(|| "NaN".to_string(), |e| fmt_sig17(e.value))
}

/// Writes `t,D,U,active_count,alive_fraction`; undefined metrics are `NaN`.
pub fn write_trajectory_csv<W: Write>(out: &mut W, rows: &[TrajectoryRow]) -> Result<()> {
    writeln!(out, "{TRAJECTORY_CSV_HEADER}")?;
    for row in rows {
        let s = &row.snapshot;
        writeln!(
            out,
            "{},{},{},{},{}",
            fmt_sig17(row.t),
            fmt_opt(s.d),
            fmt_opt(s.u),
            s.active_count,
            fmt_sig17(s.alive_fraction)
        )?;
    }
    Ok(())
}
