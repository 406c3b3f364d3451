//! Per-node sense/sleep decision rules.
//!
//! Every rule is a pure function of a node's [`LocalView`]; the engine is
//! responsible for building views and applying decisions.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::Offset;
use crate::rng;
use crate::targets::{TargetDistanceFunction, TargetKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum NodeMode {
    Active,
    Sleep,
    /// Absorbing: a dead node never senses, sends or receives again.
    Dead,
}

impl NodeMode {
    pub fn is_active(self) -> bool {
        self == NodeMode::Active
    }

    pub fn is_alive(self) -> bool {
        self != NodeMode::Dead
    }

    pub fn name(self) -> &'static str {
        match self {
            NodeMode::Active => "active",
            NodeMode::Sleep => "sleep",
            NodeMode::Dead => "dead",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NeighborInfo {
    pub id: usize,
    pub distance: f64,
    /// Position of the neighbor relative to the viewing node.
    pub offset: Offset,
    pub mode: NodeMode,
}

/// What a node knows when it decides: its own mode and every live node
/// within communication range, nearest first.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalView {
    pub self_id: usize,
    pub self_mode: NodeMode,
    pub neighbors: Vec<NeighborInfo>,
    pub comm_radius: f64,
}

impl LocalView {
    pub fn active_neighbors(&self) -> impl Iterator<Item = &NeighborInfo> {
        self.neighbors.iter().filter(|n| n.mode.is_active())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProtocolParams {
    /// Desired active nodes per unit area.
    pub z: f64,
    /// Desired active node ratio, `z * area / n`.
    pub c_z: f64,
    /// Maximum number of active neighbors considered by EvenRep.
    pub max_neighbors: usize,
    pub target: TargetDistanceFunction,
    /// Sensing disc radius for Sponsored Cover.
    pub sensing_radius: f64,
    /// Sponsored Cover test-point grid.
    pub coverage_grid: CoverageGrid,
}

impl ProtocolParams {
    pub fn new(
        z: f64,
        area: f64,
        n: usize,
        max_neighbors: usize,
        target: TargetKind,
        sensing_radius: f64,
    ) -> Result<Self> {
        if n == 0 || !(area > 0.0) {
            return Err(Error::InvalidParameter("node count and area must be positive".into()));
        }
        if max_neighbors == 0 {
            return Err(Error::InvalidParameter("L must be at least 1".into()));
        }
        if !(sensing_radius > 0.0) {
            return Err(Error::InvalidParameter("sensing radius must be positive".into()));
        }
        let c_z = z * area / n as f64;
        if !(0.0..=1.0).contains(&c_z) {
            return Err(Error::InvalidParameter(format!("desired active ratio {c_z} outside [0, 1]")));
        }
        Ok(Self {
            z,
            c_z,
            max_neighbors,
            target: TargetDistanceFunction::new(target, z)?,
            sensing_radius,
            coverage_grid: CoverageGrid::default(),
        })
    }

    /// Parameters from a desired active ratio rather than a density.
    pub fn from_ratio(
        c_z: f64,
        area: f64,
        n: usize,
        max_neighbors: usize,
        target: TargetKind,
        sensing_radius: f64,
    ) -> Result<Self> {
        Self::new(c_z * n as f64 / area, area, n, max_neighbors, target, sensing_radius)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Decision {
    GoActive,
    GoSleep,
    /// Activate if the draw falls below `p`.
    GoActiveWithProb(f64),
    /// Sleep if the draw falls below `p`.
    GoSleepWithProb(f64),
    Stay,
}

impl Decision {
    /// Resolves probabilistic variants against a uniform draw in `[0, 1)`.
    pub fn resolve(self, draw: f64) -> Decision {
        match self {
            Decision::GoActiveWithProb(p) if draw < p => Decision::GoActive,
            Decision::GoSleepWithProb(p) if draw < p => Decision::GoSleep,
            Decision::GoActiveWithProb(_) | Decision::GoSleepWithProb(_) => Decision::Stay,
            d => d,
        }
    }

    /// Mode after applying a resolved decision.
    pub fn apply(self, mode: NodeMode) -> NodeMode {
        match (mode, self) {
            (NodeMode::Dead, _) => NodeMode::Dead,
            (_, Decision::GoActive) => NodeMode::Active,
            (_, Decision::GoSleep) => NodeMode::Sleep,
            (m, _) => m,
        }
    }

    /// +1 toward sleep, -1 toward active, 0 for stay.
    pub fn tendency(self) -> i8 {
        match self {
            Decision::GoSleep | Decision::GoSleepWithProb(_) => 1,
            Decision::GoActive | Decision::GoActiveWithProb(_) => -1,
            Decision::Stay => 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Protocol {
    #[serde(rename = "evenrep-h")]
    EvenRepH,
    #[serde(rename = "evenrep-p")]
    EvenRepP,
    #[serde(rename = "flip")]
    Flip,
    #[serde(rename = "sponsored")]
    Sponsored,
}

impl Protocol {
    pub const ALL: [Protocol; 4] = [Protocol::EvenRepH, Protocol::EvenRepP, Protocol::Flip, Protocol::Sponsored];

    pub fn name(self) -> &'static str {
        match self {
            Protocol::EvenRepH => "evenrep-h",
            Protocol::EvenRepP => "evenrep-p",
            Protocol::Flip => "flip",
            Protocol::Sponsored => "sponsored",
        }
    }

    pub fn target_kind(self) -> TargetKind {
        match self {
            Protocol::EvenRepP => TargetKind::Poisson,
            _ => TargetKind::Hexagonal,
        }
    }

    /// Unresolved decision for a live node.
    pub fn rule(self, view: &LocalView, params: &ProtocolParams) -> Result<Decision> {
        match self {
            Protocol::EvenRepH | Protocol::EvenRepP => evenrep_rule(view, params),
            Protocol::Flip => Ok(flip_decide(view, params)),
            Protocol::Sponsored => Ok(sponsored_decide(view, params, params.coverage_grid)),
        }
    }

    pub fn decide(self, view: &LocalView, params: &ProtocolParams, draw: f64) -> Result<Decision> {
        Ok(self.rule(view, params)?.resolve(draw))
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Protocol::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown protocol {s:?}")))
    }
}

/// Initial mode: active with probability `c_z`, keyed by `(seed, id)`.
pub fn init_mode(params: &ProtocolParams, seed: u64, id: usize) -> NodeMode {
    let mut rng = rng::stream(seed, &[rng::TAG_INIT, id as u64]);
    if rng.random::<f64>() < params.c_z {
        NodeMode::Active
    } else {
        NodeMode::Sleep
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QValue {
    pub q: f64,
    /// Distance to the K-th nearest active neighbor; `None` when `k == 0`.
    pub x_k: Option<f64>,
    pub k: usize,
}

/// `Q = delta + sum_{k <= K} T_k / X_k` over the `K = min(L, #active)`
/// nearest active neighbors.
pub fn compute_q(view: &LocalView, params: &ProtocolParams) -> Result<QValue> {
    let delta = if view.self_mode.is_active() { 1.0 } else { 0.0 };
    let mut q = delta;
    let mut k = 0;
    let mut x_k = None;
    for n in view.active_neighbors().take(params.max_neighbors) {
        if n.distance <= 0.0 {
            return Err(Error::DegenerateDistance { node: view.self_id, id: n.id });
        }
        k += 1;
        q += params.target.target_distance(k)? / n.distance;
        x_k = Some(n.distance);
    }
    Ok(QValue { q, x_k, k })
}

/// EvenRep threshold rule before the random draw.
///
/// With `A = z pi X_K^2`: `Q - A >= 0.5` sleeps, `0 < Q - A < 0.5` sleeps
/// with probability `Q - A`, and symmetrically toward active. A node that
/// sees no active neighbor activates.
pub fn evenrep_rule(view: &LocalView, params: &ProtocolParams) -> Result<Decision> {
    let qv = compute_q(view, params)?;
    let Some(x_k) = qv.x_k else {
        return Ok(Decision::GoActive);
    };
    let expected = params.z * PI * x_k * x_k;
    Ok(threshold_decision(qv.q - expected))
}

/// Maps `Q - A` to a decision; exact balance is a probability-0 move.
fn threshold_decision(excess: f64) -> Decision {
    if excess >= 0.5 {
        Decision::GoSleep
    } else if excess > 0.0 {
        Decision::GoSleepWithProb(excess)
    } else if excess <= -0.5 {
        Decision::GoActive
    } else if excess < 0.0 {
        Decision::GoActiveWithProb(-excess)
    } else {
        Decision::Stay
    }
}

pub fn evenrep_decide(view: &LocalView, params: &ProtocolParams, draw: f64) -> Result<Decision> {
    Ok(evenrep_rule(view, params)?.resolve(draw))
}

/// Compares the active fraction of the closed neighborhood against `c_z`.
pub fn flip_decide(view: &LocalView, params: &ProtocolParams) -> Decision {
    let active = view.active_neighbors().count() + usize::from(view.self_mode.is_active());
    let fraction = active as f64 / (view.neighbors.len() + 1) as f64;
    if fraction > params.c_z {
        Decision::GoSleep
    } else if fraction < params.c_z {
        Decision::GoActive
    } else {
        Decision::Stay
    }
}

/// Test points of the sensing disc: the center plus `angles x radii` points
/// on concentric circles at `j / radii` of the sensing radius.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CoverageGrid {
    pub angles: usize,
    pub radii: usize,
}

impl Default for CoverageGrid {
    fn default() -> Self {
        Self { angles: 16, radii: 4 }
    }
}

impl CoverageGrid {
    pub fn points(&self, radius: f64) -> Vec<Offset> {
        let mut pts = vec![Offset::default()];
        for j in 1..=self.radii {
            let rho = radius * j as f64 / self.radii as f64;
            for a in 0..self.angles {
                let theta = 2.0 * PI * a as f64 / self.angles as f64;
                pts.push(Offset { dx: rho * theta.cos(), dy: rho * theta.sin() });
            }
        }
        pts
    }
}

/// Relative tolerance on the covered-point test, so points exactly on a
/// sponsor's sensing circle count as covered.
const COVER_EPS: f64 = 1e-9;

/// Sleeps iff every test point of the node's sensing disc is within the
/// sensing radius of some active neighbor.
pub fn sponsored_decide(view: &LocalView, params: &ProtocolParams, grid: CoverageGrid) -> Decision {
    let r = params.sensing_radius;
    let limit = r * (1.0 + COVER_EPS);
    let sponsors: Vec<Offset> = view
        .active_neighbors()
        .filter(|n| n.distance <= 2.0 * limit)
        .map(|n| n.offset)
        .collect();
    if sponsors.is_empty() {
        return Decision::GoActive;
    }
    let covered = grid.points(r).iter().all(|p| {
        sponsors
            .iter()
            .any(|s| Offset { dx: p.dx - s.dx, dy: p.dy - s.dy }.norm() <= limit)
    });
    if covered {
        Decision::GoSleep
    } else {
        Decision::GoActive
    }
}
