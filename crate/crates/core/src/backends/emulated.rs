//! Accelerator emulation: functional results from the coding chain, timing
//! from calibrated per-call models and a FIFO pool of processing engines.

use std::collections::VecDeque;
use std::sync::Mutex;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use super::exec::{execute, HarqMemory};
use super::model::{calls_for, DeviceModels, Jitter, ServiceTimeModel};
use crate::error::{Error, Result};
use crate::lpu::{CodingOpDescriptor, Completion, InterfaceGeneration, LpuCapabilities, LpuDevice, OpKind};

/// Outstanding work older than this is forgotten.
const OCCUPANCY_HORIZON_US: f64 = 10_000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ClockMode {
    /// Time advances only through the callers' clocks.
    #[default]
    Virtual,
    /// Completions become visible once the modeled time has elapsed.
    Wall,
}

#[derive(Debug, Default)]
struct QueueState {
    pending: VecDeque<Completion>,
    /// (submitted, engine released) of recent operations.
    outstanding: Vec<(f64, f64)>,
    bursts: u64,
}

#[derive(Debug)]
struct EmuState {
    servers: Vec<f64>,
    queues: Vec<QueueState>,
    harq: HarqMemory,
}

/// An accelerator driven by calibrated service-time models.
///
/// Each submission is one call. Its operations are spread over the
/// engines in FIFO order at the card's rated throughput; the remainder of
/// the modeled call duration is added once the last engine finishes. When
/// more operations are in flight across all queues than there are engines,
/// the call picks up a seeded lognormal stall. Occupancy counts operations
/// holding or waiting for an engine; one queue counts for at most all engines.
#[derive(Debug)]
pub struct EmulatedDevice {
    caps: LpuCapabilities,
    models: DeviceModels,
    mode: ClockMode,
    epoch: Instant,
    state: Mutex<EmuState>,
}

pub(crate) fn mix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Largest finishing time when `work` is list-scheduled on `free`.
fn list_schedule(free: &mut [f64], start: f64, work: impl IntoIterator<Item = f64>) -> Vec<f64> {
    work.into_iter()
        .map(|w| {
            let (s, t) = free
                .iter()
                .copied()
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .expect("at least one engine");
            let end = t.max(start) + w;
            free[s] = end;
            end
        })
        .collect()
}

impl EmulatedDevice {
    pub fn new(caps: LpuCapabilities, models: DeviceModels, mode: ClockMode) -> Result<Self> {
        caps.validate()?;
        models.validate()?;
        let servers = models.encode.per_slot.parallel_servers;
        let queues = (0..caps.num_queues).map(|_| QueueState::default()).collect();
        Ok(EmulatedDevice {
            caps,
            models,
            mode,
            epoch: Instant::now(),
            state: Mutex::new(EmuState { servers: vec![0.0; servers], queues, harq: HarqMemory::default() }),
        })
    }

    pub fn models(&self) -> &DeviceModels {
        &self.models
    }

    pub fn parallel_servers(&self) -> usize {
        self.models.encode.per_slot.parallel_servers
    }

    pub fn clock_mode(&self) -> ClockMode {
        self.mode
    }

    /// Engine time of one op carrying `info_bits`, in µs.
    fn work_us(&self, kind: OpKind, info_bits: usize) -> f64 {
        let gbps = match kind {
            OpKind::Encode => self.caps.rated_dl_gbps,
            OpKind::Decode => self.caps.rated_ul_gbps,
        };
        if gbps <= 0.0 {
            return 0.0;
        }
        let per_engine_bits_per_us = gbps * 1e3 / self.parallel_servers() as f64;
        info_bits as f64 / per_engine_bits_per_us
    }

    fn stall_us(model: &ServiceTimeModel, owner: u32, burst: u64) -> f64 {
        match model.jitter {
            Jitter::None => 0.0,
            Jitter::Lognormal { median_us, sigma } => {
                if median_us <= 0.0 {
                    return 0.0;
                }
                let seed = mix(model.seed ^ mix(u64::from(owner) ^ mix(burst)));
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                LogNormal::new(median_us.ln(), sigma).map(|d| d.sample(&mut rng)).unwrap_or(median_us)
            }
        }
    }
}

impl LpuDevice for EmulatedDevice {
    fn capabilities(&self) -> &LpuCapabilities {
        &self.caps
    }

    fn now_us(&self) -> Option<f64> {
        match self.mode {
            ClockMode::Virtual => None,
            ClockMode::Wall => Some(self.epoch.elapsed().as_secs_f64() * 1e6),
        }
    }

    fn submit(&self, queue: usize, owner: u32, now_us: f64, ops: Vec<CodingOpDescriptor>) -> Result<()> {
        let Some(first) = ops.first() else { return Ok(()) };
        let (kind, generation) = (first.kind, first.generation);
        if ops.iter().any(|o| o.kind != kind || o.generation != generation) {
            return Err(Error::InvalidConfig("one call must not mix operation kinds or interface generations".into()));
        }
        let model = *self.models.get(kind, generation);
        let n_cb: usize = ops.iter().map(CodingOpDescriptor::num_cbs).sum();
        let n_tb = ops.iter().filter(|o| o.tb_start).count();
        let kbits = ops.iter().map(|o| o.info_bits()).sum::<usize>() as f64 / 1e3;
        let call_us = model.call_us(n_cb, n_tb, kbits);
        let work: Vec<f64> = ops.iter().map(|o| self.work_us(kind, o.info_bits())).collect();

        let mut guard = self.state.lock().expect("device state poisoned");
        let st = &mut *guard;
        if queue >= st.queues.len() {
            return Err(Error::InvalidConfig(format!("queue {queue} out of range")));
        }
        let servers = st.servers.len();
        let isolated = list_schedule(&mut vec![0.0; servers], 0.0, work.iter().copied())
            .into_iter()
            .fold(0.0, f64::max);
        let hold = (call_us - isolated).max(0.0);

        let mut occupancy = 0;
        for (q, qs) in st.queues.iter_mut().enumerate() {
            qs.outstanding.retain(|&(_, done)| done > now_us - OCCUPANCY_HORIZON_US);
            let mut active = qs.outstanding.iter().filter(|&&(sub, done)| sub <= now_us && done > now_us).count();
            if q == queue {
                active += ops.len();
            }
            occupancy += active.min(servers);
        }
        let qs = &mut st.queues[queue];
        let burst = qs.bursts;
        qs.bursts += 1;
        let stall = if occupancy > servers { Self::stall_us(&model, owner, burst) } else { 0.0 };

        let ends = list_schedule(&mut st.servers, now_us, work.iter().copied());
        let mut done = Vec::with_capacity(ops.len());
        st.queues[queue].outstanding.extend(ends.iter().map(|&e| (now_us, e)));
        for ((op, end), w) in ops.iter().zip(ends).zip(&work) {
            let prior = st.harq.fetch(owner, op);
            let ex = execute(op, prior);
            if let Some(b) = ex.device_buffers {
                st.harq.store(owner, op, b);
            }
            let completed = end + hold + stall;
            done.push(Completion {
                op_id: op.id,
                status: ex.status,
                output: ex.output,
                service_us: w + hold,
                completed_at_us: completed,
            });
        }
        let qs = &mut st.queues[queue];
        for c in done {
            let pos = qs.pending.partition_point(|p| p.completed_at_us <= c.completed_at_us);
            qs.pending.insert(pos, c);
        }
        Ok(())
    }

    fn poll(&self, queue: usize, max: usize) -> Vec<Completion> {
        let now = self.now_us();
        let mut st = self.state.lock().expect("device state poisoned");
        let Some(qs) = st.queues.get_mut(queue) else { return Vec::new() };
        let mut out = Vec::new();
        while out.len() < max {
            match qs.pending.front() {
                Some(c) if now.is_none_or(|t| c.completed_at_us <= t) => out.extend(qs.pending.pop_front()),
                _ => break,
            }
        }
        out
    }

    fn release(&self, queue: usize) {
        if let Ok(mut st) = self.state.lock() {
            if let Some(qs) = st.queues.get_mut(queue) {
                qs.pending.clear();
            }
        }
    }
}

/// Work content of one slot, for [`emulated_service_time`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RequestShape {
    pub kind: OpKind,
    pub n_tb: usize,
    pub n_cb: usize,
    /// Information bits over all code blocks.
    pub total_bits: usize,
    pub generation: InterfaceGeneration,
}

/// Modeled duration of one isolated slot on a fresh device: every call
/// waits for the previous one, and lasts the longer of its modeled
/// duration and its engine makespan.
pub fn emulated_service_time(device: &EmulatedDevice, shape: &RequestShape) -> f64 {
    if shape.n_cb == 0 {
        return 0.0;
    }
    let n_tb = shape.n_tb.max(1);
    let model = device.models.get(shape.kind, shape.generation);
    let calls = calls_for(shape.kind, shape.generation, n_tb, shape.n_cb);
    let bits_per_cb = shape.total_bits as f64 / shape.n_cb as f64;
    let split = |total: usize, parts: usize, i: usize| total / parts + usize::from(i < total % parts);
    (0..calls)
        .map(|i| {
            let cbs = split(shape.n_cb, calls, i);
            let tbs = split(n_tb, calls, i);
            let call_us = model.call_us(cbs, tbs, bits_per_cb * cbs as f64 / 1e3);
            let work = std::iter::repeat_n(device.work_us(shape.kind, bits_per_cb as usize), cbs);
            let span = list_schedule(&mut vec![0.0; device.parallel_servers()], 0.0, work).into_iter().fold(0.0, f64::max);
            call_us.max(span)
        })
        .sum()
}
