//! Multi-instance harness: core planning, phy-test traffic and runs of
//! several gNB instances sharing one coding device.

mod run;
mod topology;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use run::{check_throughput, run_deployment, ThroughputTargets, ThroughputVerdict};
pub use topology::{
    default_core_plan, validate_placement, CoreTopology, InstancePlan, PlacementReport, Profile, RoleMap, Violation,
    CORES_PER_INSTANCE, MIN_POOL,
};

use crate::backends::{ClockMode, Jitter};
use crate::error::{Error, Result};
use crate::highphy::{PipelineConfig, PrecodingCost, SyntheticCost};
use crate::nr::tbs::McsTable;

/// Traffic of one direction: a single UE over the whole carrier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DirectionTraffic {
    pub layers: u32,
    pub mcs_index: u32,
    pub mcs_table: McsTable,
    pub prbs: u32,
}

/// What the receiver sees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Channel {
    #[default]
    Noiseless,
    /// Additive white Gaussian noise on unit-amplitude symbols.
    Awgn { sigma: f64 },
    /// Receiver gets noise only.
    Noise,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrafficConfig {
    pub dl: DirectionTraffic,
    pub ul: DirectionTraffic,
    /// Data symbols per slot.
    pub symbols: u32,
    /// Resource elements per PRB taken by reference signals and control.
    pub overhead: u32,
    pub channel: Channel,
}

impl Default for TrafficConfig {
    fn default() -> Self {
        TrafficConfig {
            dl: DirectionTraffic { layers: 4, mcs_index: 27, mcs_table: McsTable::T2, prbs: 273 },
            ul: DirectionTraffic { layers: 2, mcs_index: 16, mcs_table: McsTable::T2, prbs: 273 },
            symbols: 13,
            overhead: 24,
            channel: Channel::Noiseless,
        }
    }
}

/// Precoding time charged per DL slot in deployment runs.
pub const DEPLOY_PRECODING_US: f64 = 60.0;

/// Pipeline defaults of deployment runs: per-slot coding, fixed precoding
/// cost, and synthetic front/back stages that put single-instance slot
/// totals at the measured medians (UL about 1661 µs, DL about 545 µs).
pub fn deployment_pipeline() -> PipelineConfig {
    PipelineConfig {
        precoding_cost: PrecodingCost::Fixed(DEPLOY_PRECODING_US),
        ul_front: SyntheticCost { base_us: 1266.4, spread_us: 1049.3, shape: 6.0 },
        dl_other: SyntheticCost { base_us: 327.1, spread_us: 39.0, shape: 1.0 },
        ..PipelineConfig::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeploymentConfig {
    pub profile: Profile,
    pub n_instances: usize,
    pub backend: String,
    pub traffic: TrafficConfig,
    pub duration_slots: u64,
    pub seed: u64,
    pub clock: ClockMode,
    /// Distinct payloads per direction; slots draw from this pool.
    pub payload_pool: usize,
    /// Consecutive UL slots over budget after which an instance stops.
    pub failure_after: u32,
    /// Overrides the device's contention stall.
    pub jitter: Option<Jitter>,
    pub pipeline: PipelineConfig,
}

impl Default for DeploymentConfig {
    fn default() -> Self {
        DeploymentConfig {
            profile: Profile::EpRfsoc,
            n_instances: 1,
            backend: "t2-emulated".into(),
            traffic: TrafficConfig::default(),
            duration_slots: 2000,
            seed: 1,
            clock: ClockMode::Virtual,
            payload_pool: 4,
            failure_after: 8,
            jitter: None,
            pipeline: deployment_pipeline(),
        }
    }
}

impl DeploymentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: DeploymentConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::DataFile { file: path.display().to_string(), reason: e.to_string() })?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_instances == 0 {
            return Err(Error::InvalidConfig("n_instances must be at least 1".into()));
        }
        if self.payload_pool == 0 {
            return Err(Error::InvalidConfig("payload_pool must be at least 1".into()));
        }
        if self.failure_after == 0 {
            return Err(Error::InvalidConfig("failure_after must be at least 1".into()));
        }
        Ok(())
    }
}
