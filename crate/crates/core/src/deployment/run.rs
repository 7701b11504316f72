//! Deployment runs: phy-test traffic for every instance over a shared
//! coding device, on a virtual clock or in real time.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::topology::{default_core_plan, validate_placement, InstancePlan};
use super::{Channel, DeploymentConfig, DirectionTraffic, TrafficConfig};
use crate::backends::emulated::mix;
use crate::backends::{create_device, BackendOptions};
use crate::error::{Error, Result};
use crate::highphy::{run_dl_slot, run_ul_slot, CellConfig, PipelineConfig, SlotKind, SlotTimingRecord};
use crate::lpu::DeviceRegistry;
use crate::metrics::{record_blocks, Direction, InstanceMetrics, MetricsBundle, RunInfo, TrafficCounters, SCHEMA_VERSION};
use crate::nr::decoder::DEFAULT_MAX_ITERS;
use crate::nr::harq::{BufferLocation, LlrMode};
use crate::nr::tb::{decode_tb, encode_tb, recover_tb, TbCodingParams};
use crate::nr::tbs::Allocation;
use crate::slot_api::{JobData, SlotExecutor, TransportBlockJob};

/// LLR magnitude of a noiseless channel.
const NOISELESS_LLR: f32 = 8.0;

/// One pre-coded transport block and the receiver's verdict on it.
struct PoolEntry {
    payload: Arc<Vec<u8>>,
    llrs: Arc<Vec<Vec<f32>>>,
    crc_ok: bool,
}

struct TrafficPool {
    traffic: DirectionTraffic,
    params: TbCodingParams,
    entries: Vec<PoolEntry>,
}

fn channel_llrs(bits: &[u8], channel: Channel, rng: &mut ChaCha8Rng) -> Vec<f32> {
    match channel {
        Channel::Noiseless => bits.iter().map(|&b| if b == 0 { NOISELESS_LLR } else { -NOISELESS_LLR }).collect(),
        Channel::Awgn { sigma } => {
            let n = Normal::new(0.0, sigma).expect("finite sigma");
            let scale = 2.0 / (sigma * sigma);
            bits.iter()
                .map(|&b| {
                    let x = if b == 0 { 1.0 } else { -1.0 };
                    ((x + n.sample(rng)) * scale) as f32
                })
                .collect()
        }
        Channel::Noise => {
            let n = Normal::new(0.0, 1.0).expect("unit normal");
            bits.iter().map(|_| (2.0 * n.sample(rng)) as f32).collect()
        }
    }
}

impl TrafficPool {
    /// Codes `size` seeded payloads end to end once; slots reuse them.
    fn build(t: DirectionTraffic, traffic: &TrafficConfig, size: usize, seed: u64) -> Result<Self> {
        let alloc = Allocation::new(t.prbs, traffic.symbols, t.layers).with_overhead(traffic.overhead);
        let params = TbCodingParams::from_allocation(alloc, t.mcs_table, t.mcs_index, 0)?;
        let mut entries = Vec::with_capacity(size);
        for i in 0..size {
            let mut rng = ChaCha8Rng::seed_from_u64(mix(seed ^ mix(i as u64)));
            let payload: Vec<u8> = (0..params.tb_size_bits()).map(|_| rand::Rng::random_range(&mut rng, 0..2u8)).collect();
            let coded = encode_tb(&payload, &params)?;
            let llrs: Vec<Vec<f32>> = coded.iter().map(|b| channel_llrs(b, traffic.channel, &mut rng)).collect();
            let bufs = recover_tb(&llrs, &params, None, 0, BufferLocation::Host, LlrMode::Float)?;
            let crc_ok = decode_tb(&bufs, &params, DEFAULT_MAX_ITERS)?.tb_crc_ok;
            entries.push(PoolEntry { payload: Arc::new(payload), llrs: Arc::new(llrs), crc_ok });
        }
        Ok(TrafficPool { traffic: t, params, entries })
    }

    /// Pools are costly to build and identical for equal inputs, so they
    /// are shared between runs of one process.
    fn cached(t: DirectionTraffic, traffic: &TrafficConfig, size: usize, seed: u64) -> Result<Arc<Self>> {
        static CACHE: OnceLock<Mutex<HashMap<String, Arc<TrafficPool>>>> = OnceLock::new();
        let key = serde_json::to_string(&(t, traffic.symbols, traffic.overhead, traffic.channel, size, seed))?;
        let cache = CACHE.get_or_init(Default::default);
        if let Some(p) = cache.lock().expect("pool cache poisoned").get(&key) {
            return Ok(Arc::clone(p));
        }
        let pool = Arc::new(Self::build(t, traffic, size, seed)?);
        let mut c = cache.lock().expect("pool cache poisoned");
        if c.len() >= 8 {
            c.clear();
        }
        c.insert(key, Arc::clone(&pool));
        Ok(pool)
    }

    fn pick(&self, seed: u64, instance: u32, slot: u64) -> &PoolEntry {
        let h = mix(seed ^ mix((u64::from(instance) << 40) ^ slot));
        &self.entries[(h % self.entries.len() as u64) as usize]
    }
}

struct Ctx {
    cell: CellConfig,
    pipeline: PipelineConfig,
    dl: Arc<TrafficPool>,
    ul: Arc<TrafficPool>,
    seed: u64,
    failure_after: u32,
    /// Submit real data instead of work shapes (software backend only).
    with_data: bool,
}

struct InstanceState {
    plan: InstancePlan,
    exec: Option<SlotExecutor>,
    failed_at: Option<u64>,
    failure_reason: Option<String>,
    ul_misses: u32,
    records: Vec<SlotTimingRecord>,
    dl: TrafficCounters,
    ul: TrafficCounters,
}

impl InstanceState {
    fn fail(&mut self, slot: u64, reason: String) {
        if self.failed_at.is_none() {
            self.failed_at = Some(slot);
            self.failure_reason = Some(reason);
        }
    }
}

fn job(pool: &TrafficPool, instance: u32, slot: u64, data: JobData) -> TransportBlockJob {
    TransportBlockJob {
        ue_id: instance,
        data,
        mcs_index: pool.traffic.mcs_index,
        mcs_table: pool.traffic.mcs_table,
        layers: pool.traffic.layers,
        rv: 0,
        harq_pid: (slot % 16) as u8,
        prb_share: pool.traffic.prbs,
    }
}

fn process_slot(ctx: &Ctx, st: &mut InstanceState, slot: u64, start_us: f64) {
    if st.failed_at.is_some() {
        return;
    }
    let Some(exec) = st.exec.as_mut() else { return };
    let instance = st.plan.instance;
    let outcome = match ctx.cell.slot_kind(slot) {
        Ok(SlotKind::D) => {
            let e = ctx.dl.pick(ctx.seed, instance, slot);
            let data = if ctx.with_data { JobData::Bits(Arc::clone(&e.payload)) } else { JobData::Shape };
            let jobs = vec![job(&ctx.dl, instance, slot, data)];
            run_dl_slot(&ctx.cell, &ctx.pipeline, instance, slot, start_us, jobs, exec).map(|mut run| {
                run.record.tbs_crc_ok = usize::from(e.crc_ok);
                run.record
            })
        }
        Ok(SlotKind::U) => {
            let e = ctx.ul.pick(ctx.seed ^ 0x55, instance, slot);
            let data = if ctx.with_data { JobData::Llrs(Arc::clone(&e.llrs)) } else { JobData::Shape };
            let jobs = vec![job(&ctx.ul, instance, slot, data)];
            run_ul_slot(&ctx.cell, &ctx.pipeline, instance, slot, start_us, jobs, exec).map(|mut run| {
                if !ctx.with_data {
                    run.record.tbs_crc_ok = usize::from(e.crc_ok);
                }
                run.record
            })
        }
        Ok(SlotKind::S) => return,
        Err(e) => Err(e),
    };
    let rec = match outcome {
        Ok(r) => r,
        Err(e) => return st.fail(slot, e.to_string()),
    };
    let (counters, tbs) = match rec.direction {
        Direction::Dl => (&mut st.dl, ctx.dl.params.tb_size_bits()),
        Direction::Ul => (&mut st.ul, ctx.ul.params.tb_size_bits()),
    };
    counters.slots += 1;
    counters.tbs_ok += rec.tbs_crc_ok as u64;
    counters.tbs_failed += (rec.tbs - rec.tbs_crc_ok) as u64;
    counters.bits_delivered += (rec.tbs_crc_ok * tbs) as u64;
    counters.deadline_misses += u64::from(!rec.deadline_met);
    if rec.direction == Direction::Ul {
        st.ul_misses = if rec.deadline_met { 0 } else { st.ul_misses + 1 };
        if st.ul_misses >= ctx.failure_after {
            st.fail(slot, format!("{} consecutive UL slots over budget", st.ul_misses));
        }
    }
    st.records.push(rec);
}

/// Slot start and (for UL) front-stage offset: the instant the slot's
/// coding call is issued.
fn submit_time(ctx: &Ctx, instance: u32, slot: u64, kind: SlotKind) -> f64 {
    let start = slot as f64 * f64::from(ctx.cell.tti_us);
    match kind {
        SlotKind::U => start + ctx.pipeline.ul_front.sample(ctx.pipeline.seed, instance, slot),
        _ => start,
    }
}

fn run_virtual(ctx: &Ctx, states: &mut [InstanceState], duration: u64) -> Result<()> {
    let mut events: Vec<(f64, usize, u64)> = Vec::new();
    for (i, st) in states.iter().enumerate() {
        for slot in 0..duration {
            let kind = ctx.cell.slot_kind(slot)?;
            if kind != SlotKind::S {
                events.push((submit_time(ctx, st.plan.instance, slot, kind), i, slot));
            }
        }
    }
    events.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let tti = f64::from(ctx.cell.tti_us);
    for (_, i, slot) in events {
        process_slot(ctx, &mut states[i], slot, slot as f64 * tti);
    }
    Ok(())
}

fn run_wall(ctx: &Ctx, states: &mut [InstanceState], duration: u64) {
    let epoch = Instant::now();
    let tti = f64::from(ctx.cell.tti_us);
    std::thread::scope(|s| {
        for st in states.iter_mut() {
            s.spawn(move || {
                for slot in 0..duration {
                    let Ok(kind) = ctx.cell.slot_kind(slot) else { return };
                    if kind == SlotKind::S {
                        continue;
                    }
                    let due = Duration::from_secs_f64(submit_time(ctx, st.plan.instance, slot, kind) / 1e6);
                    if let Some(wait) = due.checked_sub(epoch.elapsed()) {
                        std::thread::sleep(wait);
                    }
                    process_slot(ctx, st, slot, slot as f64 * tti);
                }
            });
        }
    });
}

/// Runs every instance of `config` for `duration_slots` TTIs of DDDSU
/// phy-test traffic over one shared device, one queue per instance.
pub fn run_deployment(config: &DeploymentConfig) -> Result<MetricsBundle> {
    config.validate()?;
    let topology = config.profile.topology();
    let plans = default_core_plan(&topology, config.n_instances)?;
    let report = validate_placement(&topology, &plans);
    if !report.ok() {
        return Err(Error::InvalidConfig(format!("core plan rejected: {:?}", report.violations)));
    }
    let opts = BackendOptions { seed: config.seed, clock: config.clock, workers: 4, jitter: config.jitter };
    let device = create_device(&config.backend, &opts)?;
    let real_time = device.now_us().is_some();
    let with_data = config.backend == "software";
    let mut registry = DeviceRegistry::new();
    registry.register(config.backend.clone(), device);

    let mut pipeline = config.pipeline.clone();
    pipeline.seed = config.seed;
    pipeline.symbols = config.traffic.symbols;
    pipeline.overhead = config.traffic.overhead;
    let ctx = Ctx {
        cell: plans[0].cell.clone(),
        pipeline,
        dl: TrafficPool::cached(config.traffic.dl, &config.traffic, config.payload_pool, mix(config.seed ^ 0xd1))?,
        ul: TrafficPool::cached(config.traffic.ul, &config.traffic, config.payload_pool, mix(config.seed ^ 0x01))?,
        seed: config.seed,
        failure_after: config.failure_after,
        with_data,
    };
    ctx.cell.validate()?;

    let mut states: Vec<InstanceState> = plans
        .into_iter()
        .map(|plan| {
            let mut st = InstanceState {
                exec: None,
                failed_at: None,
                failure_reason: None,
                ul_misses: 0,
                records: Vec::new(),
                dl: TrafficCounters::default(),
                ul: TrafficCounters::default(),
                plan,
            };
            match registry.open_queue(&config.backend, st.plan.instance) {
                Ok(h) => st.exec = Some(SlotExecutor::new(h)),
                Err(e) => st.fail(0, e.to_string()),
            }
            st
        })
        .collect();

    if real_time {
        run_wall(&ctx, &mut states, config.duration_slots);
    } else {
        run_virtual(&ctx, &mut states, config.duration_slots)?;
    }

    let span_us = config.duration_slots as f64 * f64::from(ctx.cell.tti_us);
    let mut instances = Vec::with_capacity(states.len());
    let mut records = Vec::new();
    for mut st in states {
        for c in [&mut st.dl, &mut st.ul] {
            c.goodput_mbps = if span_us > 0.0 { c.bits_delivered as f64 / span_us } else { 0.0 };
        }
        instances.push(InstanceMetrics {
            instance: st.plan.instance,
            cores: st.plan.roles.cores(),
            failed_at_slot: st.failed_at,
            failure_reason: st.failure_reason,
            dl: st.dl,
            ul: st.ul,
            metrics: record_blocks(&st.records)?,
        });
        records.extend(st.records);
    }
    records.sort_by(|a, b| a.slot.cmp(&b.slot).then(a.instance.cmp(&b.instance)));
    Ok(MetricsBundle {
        schema_version: SCHEMA_VERSION,
        run: RunInfo {
            profile: config.profile.as_str().into(),
            backend: config.backend.clone(),
            n_instances: config.n_instances,
            duration_slots: config.duration_slots,
            seed: config.seed,
            clock: if real_time { "wall".into() } else { "virtual".into() },
        },
        instances,
        records,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThroughputTargets {
    pub dl_mbps: f64,
    pub ul_mbps: f64,
}

impl Default for ThroughputTargets {
    fn default() -> Self {
        ThroughputTargets { dl_mbps: 1200.0, ul_mbps: 90.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThroughputVerdict {
    pub instance: u32,
    pub dl_mbps: f64,
    pub ul_mbps: f64,
    pub dl_pass: bool,
    pub ul_pass: bool,
}

impl ThroughputVerdict {
    pub fn pass(&self) -> bool {
        self.dl_pass && self.ul_pass
    }
}

/// Compares each instance's goodput (CRC-passing bits per second of run
/// time) with the targets. A stopped instance fails.
pub fn check_throughput(bundle: &MetricsBundle, targets: ThroughputTargets) -> Vec<ThroughputVerdict> {
    bundle
        .instances
        .iter()
        .map(|i| {
            let alive = i.failed_at_slot.is_none();
            ThroughputVerdict {
                instance: i.instance,
                dl_mbps: i.dl.goodput_mbps,
                ul_mbps: i.ul.goodput_mbps,
                dl_pass: alive && i.dl.goodput_mbps >= targets.dl_mbps,
                ul_pass: alive && i.ul.goodput_mbps >= targets.ul_mbps,
            }
        })
        .collect()
}
