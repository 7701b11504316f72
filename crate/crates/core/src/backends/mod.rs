//! Concrete LPU backends: software coding on worker threads and emulated
//! accelerators with calibrated timing.

pub mod emulated;
mod exec;
pub mod model;
pub mod software;

use std::path::Path;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

pub use emulated::{emulated_service_time, ClockMode, EmulatedDevice, RequestShape};
pub use model::{
    calibrate_model, calls_for, nnls, Calibration, DeviceModels, GenerationModels, GroupFit, Jitter, Observation,
    ServiceTimeModel, SlotShape,
};
pub use software::{software_process, SoftwareBackend};

use crate::error::{Error, Result};
use crate::lpu::{discover, InterfaceGeneration, LpuCapabilities, LpuDevice, OpKind};
use crate::slot_api::BenchConfig;

/// Mean T2 coding times per (direction, generation, blocks per slot).
pub const T2_TIMINGS_CSV: &str = include_str!("../../data/t2_slot_timings.csv");

/// Engines of the T2 card.
pub const T2_SERVERS: usize = 8;
/// Engines assumed for vRAN Boost; not a measured figure.
pub const VRAN_BOOST_SERVERS: usize = 16;
/// Worker cores of the software-timed profile.
pub const GPP_WORKERS: usize = 4;

/// Stall applied to calls issued while the engines are oversubscribed.
pub const DEFAULT_JITTER: Jitter = Jitter::Lognormal { median_us: 12.0, sigma: 1.3 };

/// Names accepted by [`create_device`].
pub const BACKEND_NAMES: [&str; 5] = ["t2-emulated", "acc100-emulated", "vran-boost-emulated", "software", "software-virtual"];

#[derive(Debug, Deserialize)]
struct CsvRow {
    direction: String,
    generation: String,
    n_tb: usize,
    mean_us: f64,
}

/// Parses a calibration table (`direction,generation,n_tb,mean_us`, `#`
/// comment lines allowed) and attaches the slot shape of the reference
/// benchmark to every row.
pub fn parse_observations(text: &str) -> Result<Vec<Observation>> {
    let bench = BenchConfig::default();
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        let row: CsvRow = row?;
        let kind = match row.direction.to_ascii_uppercase().as_str() {
            "DECODE" | "UL" => OpKind::Decode,
            "ENCODE" | "DL" => OpKind::Encode,
            other => return Err(Error::Parse(format!("unknown direction `{other}`"))),
        };
        let generation = InterfaceGeneration::parse(&row.generation)
            .ok_or_else(|| Error::Parse(format!("unknown generation `{}`", row.generation)))?;
        if row.n_tb == 0 {
            return Err(Error::Parse("n_tb must be at least 1".into()));
        }
        let shape = bench.slot_shape(kind, generation, row.n_tb)?;
        out.push(Observation { kind, generation, n_tb: row.n_tb, shape, mean_us: row.mean_us });
    }
    Ok(out)
}

pub fn load_observations(path: &Path) -> Result<Vec<Observation>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::DataFile { file: path.display().to_string(), reason: e.to_string() })?;
    parse_observations(&text)
}

/// Fit of the shipped T2 measurements.
pub fn t2_calibration() -> Result<&'static Calibration> {
    static CAL: OnceLock<std::result::Result<Calibration, String>> = OnceLock::new();
    CAL.get_or_init(|| parse_observations(T2_TIMINGS_CSV).and_then(|o| calibrate_model(&o)).map_err(|e| e.to_string()))
        .as_ref()
        .map_err(|e| Error::CalibrationFailed(e.clone()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BackendOptions {
    pub seed: u64,
    pub clock: ClockMode,
    /// Threads of the software backend.
    pub workers: usize,
    /// Overrides the contention stall of emulated devices.
    pub jitter: Option<Jitter>,
}

impl Default for BackendOptions {
    fn default() -> Self {
        BackendOptions { seed: 0, clock: ClockMode::Virtual, workers: 1, jitter: None }
    }
}

fn gpp_models(opts: &BackendOptions) -> DeviceModels {
    let m = |fixed, per_cb| ServiceTimeModel {
        fixed_per_call_us: fixed,
        per_cb_us: per_cb,
        per_tb_us: 0.0,
        per_kbit_us: 0.0,
        parallel_servers: GPP_WORKERS,
        jitter: opts.jitter.unwrap_or(Jitter::None),
        seed: opts.seed,
    };
    DeviceModels::uniform(m(4.0, 9.0), m(4.0, 32.0))
}

/// Builds an emulated device by name.
pub fn emulated_device(name: &str, opts: &BackendOptions) -> Result<EmulatedDevice> {
    let jitter = opts.jitter.unwrap_or(DEFAULT_JITTER);
    let (caps, models) = match name {
        "t2" | "t2-emulated" => (discover("t2")?, t2_calibration()?.device_models(T2_SERVERS, jitter, opts.seed)?),
        "acc100" | "acc100-emulated" => {
            (discover("acc100")?, t2_calibration()?.device_models(T2_SERVERS, jitter, opts.seed)?)
        }
        "vran_boost" | "vran-boost-emulated" => {
            (discover("vran_boost")?, t2_calibration()?.device_models(VRAN_BOOST_SERVERS, jitter, opts.seed)?)
        }
        "software-virtual" | "gpp" => {
            let caps = LpuCapabilities { name: "software-virtual".into(), ..discover("software")? };
            (caps, gpp_models(opts))
        }
        other => return Err(Error::UnknownBackend(other.to_string())),
    };
    EmulatedDevice::new(caps, models, opts.clock)
}

/// Builds any backend by name.
pub fn create_device(name: &str, opts: &BackendOptions) -> Result<Arc<dyn LpuDevice>> {
    match name {
        "software" => Ok(Arc::new(SoftwareBackend::new(opts.workers)?)),
        other => Ok(Arc::new(emulated_device(other, opts)?)),
    }
}
