use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::engine::EnergyModel;
use crate::error::{Error, Result};
use crate::geometry::{Metric, Region};
use crate::protocol::Protocol;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    Bounds,
    Converge,
    Compare,
    Lifetime,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Bounds => "bounds",
            ExperimentKind::Converge => "converge",
            ExperimentKind::Compare => "compare",
            ExperimentKind::Lifetime => "lifetime",
        }
    }
}

/// Trial count behind `--paper-scale`.
pub const PAPER_SCALE_TRIALS: usize = 200;

/// Monte Carlo sizes for the closed-form checks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundsConfig {
    /// Sample points per disc, lattice and Poisson estimate.
    pub m: usize,
    pub hex_z: f64,
    pub poisson_n: usize,
    pub poisson_seeds: usize,
    /// Dense layout size for the k-th nearest-neighbor check.
    pub knn_n: usize,
    pub knn_layouts: usize,
    pub knn_m: usize,
}

impl Default for BoundsConfig {
    fn default() -> Self {
        Self {
            m: 1_000_000,
            hex_z: 350.0,
            poisson_n: 4000,
            poisson_seeds: 10,
            knn_n: 20_000,
            knn_layouts: 5,
            knn_m: 100_000,
        }
    }
}

/// Full description of one experiment run. Serialized as TOML; every output
/// file set carries the resolved copy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub seed: u64,
    /// Explicit per-trial seeds; derived from `seed` when empty.
    pub trial_seeds: Vec<u64>,
    pub n: usize,
    pub width: f64,
    pub height: f64,
    pub metric: Metric,
    /// Desired active density. Give exactly one of `z` and `c_z`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_z: Option<f64>,
    /// Communication radius sweep.
    pub comm_radius: Vec<f64>,
    /// Desired-ratio sweep (converge only), run at `ratio_sweep_radius`.
    pub ratios: Vec<f64>,
    pub ratio_sweep_radius: f64,
    pub protocols: Vec<Protocol>,
    /// `T`: upper bound of the random wait, and the round length.
    pub period: f64,
    /// Run length in multiples of `T` (rounds, for lifetime).
    pub horizon: f64,
    pub trials: usize,
    /// Sample points per metric evaluation.
    pub m: usize,
    /// `L` for EvenRep.
    pub max_neighbors: usize,
    /// Sponsored Cover sensing radius as a fraction of the communication radius.
    pub sensing_fraction: f64,
    /// Rounds between lifetime metric checkpoints.
    pub checkpoint_rounds: usize,
    /// Rounds Sponsored Cover runs before its active ratio is read off.
    pub calibration_rounds: usize,
    pub charge_initial_broadcast: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<String>,
    pub energy: EnergyModel,
    pub bounds: BoundsConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: ExperimentKind::Converge,
            seed: 1,
            trial_seeds: Vec::new(),
            n: 1000,
            width: 1.0,
            height: 1.0,
            metric: Metric::Euclidean,
            z: None,
            c_z: None,
            comm_radius: vec![0.05, 0.06, 0.07, 0.08],
            ratios: vec![0.15, 0.35, 0.55, 0.8],
            ratio_sweep_radius: 0.08,
            protocols: vec![Protocol::EvenRepH],
            period: 10.0,
            horizon: 10.0,
            trials: 30,
            m: 100_000,
            max_neighbors: 3,
            sensing_fraction: 0.5,
            checkpoint_rounds: 10,
            calibration_rounds: 5,
            charge_initial_broadcast: false,
            out_dir: None,
            energy: EnergyModel::default(),
            bounds: BoundsConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Desk-scale defaults for each experiment family.
    pub fn preset(kind: ExperimentKind) -> Self {
        let base = Self { experiment: kind, c_z: Some(0.35), ..Self::default() };
        match kind {
            ExperimentKind::Bounds => Self { metric: Metric::Toroidal, ..base },
            ExperimentKind::Converge => base,
            ExperimentKind::Compare => Self { protocols: Protocol::ALL.to_vec(), horizon: 5.0, ratios: Vec::new(), ..base },
            ExperimentKind::Lifetime => Self {
                protocols: Protocol::ALL.to_vec(),
                comm_radius: vec![0.08],
                ratios: Vec::new(),
                horizon: 200.0,
                ..base
            },
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    pub fn region(&self) -> Result<Region> {
        Region::new(self.width, self.height, self.metric)
    }

    /// Desired active ratio, from `c_z` or from `z * area / n`.
    pub fn ratio(&self) -> Result<f64> {
        match (self.z, self.c_z) {
            (Some(_), Some(_)) => Err(Error::Config("give only one of z and c_z".into())),
            (None, None) => Err(Error::Config("one of z and c_z is required".into())),
            (None, Some(c)) => Ok(c),
            (Some(z), None) => Ok(z * self.width * self.height / self.n as f64),
        }
    }

    pub fn trial_count(&self) -> usize {
        if self.trial_seeds.is_empty() {
            self.trials
        } else {
            self.trial_seeds.len()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::Config(msg.to_string()));
        self.region()?;
        if self.experiment != ExperimentKind::Bounds {
            let c = self.ratio()?;
            if !(c > 0.0 && c <= 1.0) {
                return fail("desired active ratio must lie in (0, 1]");
            }
            if self.n == 0 {
                return fail("n must be positive");
            }
            if self.trial_count() == 0 {
                return fail("trials must be at least 1");
            }
            if !(self.horizon > 0.0) || !(self.period > 0.0) {
                return fail("horizon and period must be positive");
            }
            if self.comm_radius.is_empty() || self.comm_radius.iter().any(|r| !(*r > 0.0)) {
                return fail("comm_radius needs at least one positive value");
            }
            if self.protocols.is_empty() {
                return fail("protocol list is empty");
            }
            if self.experiment == ExperimentKind::Compare && self.protocols.len() < 2 {
                return fail("compare needs at least two protocols");
            }
            if self.ratios.iter().any(|c| !(*c > 0.0 && *c <= 1.0)) {
                return fail("ratios must lie in (0, 1]");
            }
            if self.m == 0 || self.max_neighbors == 0 || self.checkpoint_rounds == 0 {
                return fail("m, max_neighbors and checkpoint_rounds must be positive");
            }
            if !(self.sensing_fraction > 0.0 && self.sensing_fraction <= 1.0) {
                return fail("sensing_fraction must lie in (0, 1]");
            }
            self.energy.validate()?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_round_trip_through_toml() {
        for kind in [ExperimentKind::Bounds, ExperimentKind::Converge, ExperimentKind::Compare, ExperimentKind::Lifetime] {
            let config = ExperimentConfig::preset(kind);
            config.validate().unwrap();
            let text = config.to_toml();
            assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), config, "{text}");
        }
    }

    #[test]
    fn exactly_one_density_parameter() {
        let text = "experiment = \"converge\"\nz = 350.0\nc_z = 0.35\n";
        assert!(ExperimentConfig::from_toml(text).is_err());
        assert!(ExperimentConfig::from_toml("experiment = \"converge\"\n").is_err());
        let c = ExperimentConfig::from_toml("experiment = \"converge\"\nz = 350.0\n").unwrap();
        assert!((c.ratio().unwrap() - 0.35).abs() < 1e-12);
    }

    #[test]
    fn sections_and_unknown_keys() {
        let text = r#"
experiment = "lifetime"
c_z = 0.3
protocols = ["evenrep-h", "flip"]

[energy]
budget = 0.1

[bounds]
m = 1000
"#;
        let c = ExperimentConfig::from_toml(text).unwrap();
        assert_eq!(c.protocols, vec![Protocol::EvenRepH, Protocol::Flip]);
        assert_eq!(c.energy.budget, 0.1);
        assert_eq!(c.energy.e_elec, 50e-9);
        assert_eq!(c.bounds.m, 1000);
        assert!(ExperimentConfig::from_toml("experiment = \"bounds\"\nbogus = 1\n").is_err());
        assert!(ExperimentConfig::from_toml("experiment = \"compare\"\nc_z = 0.3\nprotocols = [\"flip\"]\n").is_err());
        assert!(ExperimentConfig::from_toml("experiment = \"converge\"\nc_z = 0.3\ntrials = 0\n").is_err());
    }
}
