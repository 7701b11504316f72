//! DL and UL slot pipelines with stage timing and deadline accounting.

use std::time::Instant;

use num_complex::Complex32;
use serde::{Deserialize, Serialize};

use super::precode::{precode_and_map, PrecodeMode, ResourceGrid, WeightMatrix, SYMBOLS_PER_SLOT};
use super::tdd::{tdd_slot_kind, SlotKind};
use crate::error::{Error, Result};
use crate::lpu::InterfaceGeneration;
use crate::metrics::Direction;
use crate::slot_api::{decode_slot, encode_slot, SlotCodingRequest, SlotCodingResult, SlotExecutor, TransportBlockJob};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AntennaConfig {
    pub tx: u32,
    pub rx: u32,
}

/// Carrier and TDD configuration of one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellConfig {
    pub bandwidth_mhz: u32,
    pub prbs: u32,
    pub numerology: u32,
    pub tti_us: u32,
    pub antennas: AntennaConfig,
    pub tdd_pattern: String,
    pub band: String,
}

impl Default for CellConfig {
    fn default() -> Self {
        CellConfig {
            bandwidth_mhz: 100,
            prbs: 273,
            numerology: 1,
            tti_us: 500,
            antennas: AntennaConfig { tx: 4, rx: 4 },
            tdd_pattern: "DDDSU".into(),
            band: "n77".into(),
        }
    }
}

impl CellConfig {
    pub fn validate(&self) -> Result<()> {
        if self.numerology > 4 || self.tti_us != 1000 >> self.numerology {
            return Err(Error::InvalidConfig(format!("TTI {} µs does not match numerology {}", self.tti_us, self.numerology)));
        }
        if self.tdd_pattern.chars().count() != 5 {
            return Err(Error::InvalidConfig(format!("TDD pattern `{}` must have 5 slots", self.tdd_pattern)));
        }
        tdd_slot_kind(0, &self.tdd_pattern)?;
        if self.prbs == 0 || self.prbs > crate::slot_api::MAX_PRBS {
            return Err(Error::InvalidConfig(format!("{} PRBs", self.prbs)));
        }
        Ok(())
    }

    pub fn slot_kind(&self, slot: u64) -> Result<SlotKind> {
        tdd_slot_kind(slot, &self.tdd_pattern)
    }
}

/// Cost of a stage the pipeline does not implement (FFTs, channel
/// estimation, equalization, modulation): `base + spread·u^shape` with `u`
/// uniform in [0, 1) drawn per (seed, instance, slot).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticCost {
    pub base_us: f64,
    pub spread_us: f64,
    pub shape: f64,
}

impl SyntheticCost {
    pub const fn constant(us: f64) -> Self {
        SyntheticCost { base_us: us, spread_us: 0.0, shape: 1.0 }
    }

    pub fn sample(&self, seed: u64, instance: u32, slot: u64) -> f64 {
        if self.spread_us == 0.0 {
            return self.base_us;
        }
        let h = crate::backends::emulated::mix(seed ^ crate::backends::emulated::mix(u64::from(instance) << 40 ^ slot));
        let u = (h >> 11) as f64 / (1u64 << 53) as f64;
        self.base_us + self.spread_us * u.powf(self.shape)
    }
}

/// How precoding time is accounted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PrecodingCost {
    /// Wall time of the actual computation.
    Measured,
    /// Configured value; the computation still runs when there is data.
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub generation: InterfaceGeneration,
    pub precode_mode: PrecodeMode,
    pub precoding_cost: PrecodingCost,
    /// Stages before decoding in the UL slot.
    pub ul_front: SyntheticCost,
    /// Stages besides encoding and precoding in the DL slot.
    pub dl_other: SyntheticCost,
    pub dl_budget_us: f64,
    pub ul_budget_us: f64,
    /// Data symbols per slot and per-PRB overhead of the shared channel.
    pub symbols: u32,
    pub overhead: u32,
    pub seed: u64,
}

/// Default DL budget: two TTIs.
pub const DL_BUDGET_US: f64 = 1000.0;
/// Default UL budget: four TTIs.
pub const UL_BUDGET_US: f64 = 2000.0;

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            generation: InterfaceGeneration::PerSlot,
            precode_mode: PrecodeMode::Vector,
            precoding_cost: PrecodingCost::Measured,
            ul_front: SyntheticCost { base_us: 1300.0, spread_us: 1050.0, shape: 6.0 },
            dl_other: SyntheticCost { base_us: 330.0, spread_us: 40.0, shape: 1.0 },
            dl_budget_us: DL_BUDGET_US,
            ul_budget_us: UL_BUDGET_US,
            symbols: crate::slot_api::DEFAULT_SYMBOLS,
            overhead: 0,
            seed: 0,
        }
    }
}

/// Timing of one processed slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotTimingRecord {
    pub instance: u32,
    pub slot: u64,
    pub kind: SlotKind,
    pub direction: Direction,
    pub coding_us: f64,
    pub precoding_us: f64,
    pub other_us: f64,
    pub total_us: f64,
    pub budget_us: f64,
    pub deadline_met: bool,
    pub tbs: usize,
    pub tbs_crc_ok: usize,
}

impl SlotTimingRecord {
    fn new(instance: u32, slot: u64, kind: SlotKind, direction: Direction, stages: [f64; 3], budget_us: f64) -> Self {
        let [coding_us, precoding_us, other_us] = stages;
        let total_us = coding_us + precoding_us + other_us;
        SlotTimingRecord {
            instance,
            slot,
            kind,
            direction,
            coding_us,
            precoding_us,
            other_us,
            total_us,
            budget_us,
            deadline_met: total_us <= budget_us,
            tbs: 0,
            tbs_crc_ok: 0,
        }
    }
}

/// Everything a slot run produced.
#[derive(Debug, Clone)]
pub struct SlotRun {
    pub record: SlotTimingRecord,
    pub coding: SlotCodingResult,
    /// Port grid of a DL slot with data.
    pub ports: Option<ResourceGrid>,
}

/// Fills the layer grid with QPSK-like symbols taken from the encoded bits.
fn modulation_fill(coding: &SlotCodingResult, layers: usize, prbs: usize) -> Option<ResourceGrid> {
    let bits: Vec<u8> = coding.jobs.iter().flat_map(|j| j.encoded.iter().flatten().copied()).collect();
    if bits.len() < 2 {
        return None;
    }
    let mut grid = ResourceGrid::zeros(SYMBOLS_PER_SLOT, layers, prbs);
    let a = std::f32::consts::FRAC_1_SQRT_2;
    let level = |b: u8| if b == 0 { a } else { -a };
    let mut i = 0;
    for sym in 0..SYMBOLS_PER_SLOT {
        for l in 0..layers {
            for sc in 0..grid.subcarriers() {
                grid.set(sym, l, sc, Complex32::new(level(bits[i % bits.len()]), level(bits[(i + 1) % bits.len()])));
                i += 2;
            }
        }
    }
    Some(grid)
}

/// Encodes, modulates and precodes one DL (or special) slot starting at
/// `start_us`.
pub fn run_dl_slot(
    cell: &CellConfig,
    cfg: &PipelineConfig,
    instance: u32,
    slot: u64,
    start_us: f64,
    jobs: Vec<TransportBlockJob>,
    executor: &mut SlotExecutor,
) -> Result<SlotRun> {
    let kind = cell.slot_kind(slot)?;
    if kind == SlotKind::U {
        return Err(Error::WrongSlotKind { slot, actual: kind, expected: "D or S" });
    }
    executor.set_clock(start_us);
    let layers = jobs.iter().map(|j| j.layers).max().unwrap_or(1) as usize;
    let req = SlotCodingRequest::new(slot, Direction::Dl, cfg.generation, jobs).with_allocation(cfg.symbols, cfg.overhead);
    let coding = encode_slot(&req, executor)?;

    let mut ports = None;
    let t0 = Instant::now();
    if let Some(grid) = modulation_fill(&coding, layers, cell.prbs as usize) {
        let weights = WeightMatrix::random(cell.antennas.tx as usize, layers, cfg.seed ^ slot);
        ports = Some(precode_and_map(&grid, &weights, cfg.precode_mode)?);
    }
    let precoding_us = match cfg.precoding_cost {
        PrecodingCost::Measured => t0.elapsed().as_secs_f64() * 1e6,
        PrecodingCost::Fixed(us) => us,
    };
    let other = cfg.dl_other.sample(cfg.seed, instance, slot);
    let mut record =
        SlotTimingRecord::new(instance, slot, kind, Direction::Dl, [coding.elapsed_us, precoding_us, other], cfg.dl_budget_us);
    record.tbs = coding.jobs.len();
    Ok(SlotRun { record, coding, ports })
}

/// Runs the front stages and decodes one UL slot starting at `start_us`.
pub fn run_ul_slot(
    cell: &CellConfig,
    cfg: &PipelineConfig,
    instance: u32,
    slot: u64,
    start_us: f64,
    jobs: Vec<TransportBlockJob>,
    executor: &mut SlotExecutor,
) -> Result<SlotRun> {
    let kind = cell.slot_kind(slot)?;
    if kind != SlotKind::U {
        return Err(Error::WrongSlotKind { slot, actual: kind, expected: "U" });
    }
    let front = cfg.ul_front.sample(cfg.seed, instance, slot);
    executor.set_clock(start_us + front);
    let req = SlotCodingRequest::new(slot, Direction::Ul, cfg.generation, jobs).with_allocation(cfg.symbols, cfg.overhead);
    let coding = decode_slot(&req, executor)?;
    let mut record = SlotTimingRecord::new(instance, slot, kind, Direction::Ul, [coding.elapsed_us, 0.0, front], cfg.ul_budget_us);
    record.tbs = coding.jobs.len();
    record.tbs_crc_ok = coding.jobs.iter().filter(|j| j.decoded.as_ref().is_some_and(|d| d.tb_crc_ok)).count();
    Ok(SlotRun { record, coding, ports: None })
}
