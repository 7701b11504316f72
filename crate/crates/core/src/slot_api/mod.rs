//! Slot-level coding calls in three interface generations: one call per
//! code block (eight per call when encoding), one per transport block, and
//! one for the whole slot.

mod bench;

use std::collections::HashMap;
use std::sync::Arc;

pub use bench::{bench_csv, bench_json, run_interface_bench, split_prbs, BenchConfig, BenchRow, BENCH_CSV_HEADER};
pub use crate::metrics::Direction;

use crate::error::{Error, Result};
use crate::lpu::{
    dequeue, enqueue, route_interface, CodingOpDescriptor, Completion, Granularity, HarqRef, InterfaceGeneration,
    OpKind, OpOutput, OpPayload, OpStatus, QueueHandle,
};
use crate::nr::decoder::{DecodeOutput, DEFAULT_MAX_ITERS};
use crate::nr::harq::{BufferLocation, LlrMode, SoftBuffer};
use crate::nr::segment::segment_bits;
use crate::nr::tb::{assemble_tb, TbCodingParams, TbDecodeOutput};
use crate::nr::tbs::{Allocation, McsTable};

/// Code blocks per encode call in the per-CB generation.
pub const ENCODE_CBS_PER_CALL: usize = 8;
/// PRBs of a 100 MHz carrier at 30 kHz subcarrier spacing.
pub const MAX_PRBS: u32 = 273;
/// Data symbols per slot when a request does not say otherwise.
pub const DEFAULT_SYMBOLS: u32 = 12;

/// What a job carries into the call.
#[derive(Debug, Clone)]
pub enum JobData {
    /// Transport block payload to encode.
    Bits(Arc<Vec<u8>>),
    /// Received LLRs per code block, `E_r` values each.
    Llrs(Arc<Vec<Vec<f32>>>),
    /// No data: only the shape of the work is submitted.
    Shape,
}

/// One UE's transport block in a slot.
#[derive(Debug, Clone)]
pub struct TransportBlockJob {
    pub ue_id: u32,
    pub data: JobData,
    pub mcs_index: u32,
    pub mcs_table: McsTable,
    pub layers: u32,
    pub rv: u8,
    pub harq_pid: u8,
    pub prb_share: u32,
}

impl TransportBlockJob {
    pub fn allocation(&self, symbols: u32, overhead: u32) -> Allocation {
        Allocation::new(self.prb_share, symbols, self.layers).with_overhead(overhead)
    }

    pub fn coding_params(&self, symbols: u32, overhead: u32) -> Result<TbCodingParams> {
        TbCodingParams::from_allocation(self.allocation(symbols, overhead), self.mcs_table, self.mcs_index, self.rv)
    }
}

#[derive(Debug, Clone)]
pub struct SlotCodingRequest {
    pub slot_id: u64,
    pub direction: Direction,
    pub jobs: Vec<TransportBlockJob>,
    pub interface_generation: InterfaceGeneration,
    /// Data symbols of the slot.
    pub symbols: u32,
    /// Resource elements per PRB unavailable for data.
    pub overhead: u32,
}

impl SlotCodingRequest {
    pub fn new(slot_id: u64, direction: Direction, generation: InterfaceGeneration, jobs: Vec<TransportBlockJob>) -> Self {
        SlotCodingRequest { slot_id, direction, jobs, interface_generation: generation, symbols: DEFAULT_SYMBOLS, overhead: 0 }
    }

    pub fn with_allocation(mut self, symbols: u32, overhead: u32) -> Self {
        self.symbols = symbols;
        self.overhead = overhead;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.jobs.is_empty() {
            return Err(Error::InvalidConfig(format!("slot {} has no jobs", self.slot_id)));
        }
        if let Some(j) = self.jobs.iter().find(|j| j.prb_share == 0) {
            return Err(Error::InvalidConfig(format!("ue {} has no PRBs", j.ue_id)));
        }
        let total: u32 = self.jobs.iter().map(|j| j.prb_share).sum();
        if total > MAX_PRBS {
            return Err(Error::InvalidConfig(format!("{total} PRBs requested, {MAX_PRBS} available")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JobOutput {
    pub ue_id: u32,
    pub num_cbs: usize,
    /// Rate-matched bits per code block (encode with data).
    pub encoded: Vec<Vec<u8>>,
    /// Decoded payload and CRC flags (decode with data).
    pub decoded: Option<TbDecodeOutput>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlotCodingResult {
    pub slot_id: u64,
    pub direction: Direction,
    pub generation: InterfaceGeneration,
    pub jobs: Vec<JobOutput>,
    pub calls_made: usize,
    pub call_elapsed_us: Vec<f64>,
    pub elapsed_us: f64,
    pub started_at_us: f64,
    pub finished_at_us: f64,
}

impl SlotCodingResult {
    pub fn all_tb_crc_ok(&self) -> bool {
        self.jobs.iter().all(|j| j.decoded.as_ref().is_some_and(|d| d.tb_crc_ok))
    }
}

/// Drives one queue handle: builds operations, groups them into calls
/// and keeps host-side HARQ buffers for devices without their own memory.
#[derive(Debug)]
pub struct SlotExecutor {
    handle: QueueHandle,
    host_harq: HashMap<(u32, u8), Vec<SoftBuffer>>,
    pub max_iters: u32,
    pub llr_mode: LlrMode,
    next_op: u64,
}

impl SlotExecutor {
    pub fn new(handle: QueueHandle) -> Self {
        SlotExecutor { handle, host_harq: HashMap::new(), max_iters: DEFAULT_MAX_ITERS, llr_mode: LlrMode::Float, next_op: 0 }
    }

    pub fn handle(&self) -> &QueueHandle {
        &self.handle
    }

    pub fn now_us(&self) -> f64 {
        self.handle.now_us()
    }

    /// Moves the virtual clock (no effect on wall-clock devices).
    pub fn set_clock(&mut self, now_us: f64) {
        self.handle.set_clock(now_us);
    }

    pub fn is_virtual(&self) -> bool {
        self.handle.is_virtual()
    }

    fn op_id(&mut self) -> u64 {
        self.next_op += 1;
        self.next_op
    }
}

/// Which part of which job an operation covers.
#[derive(Debug, Clone, Copy)]
struct Target {
    job: usize,
    first_cb: usize,
}

pub fn encode_slot(request: &SlotCodingRequest, executor: &mut SlotExecutor) -> Result<SlotCodingResult> {
    if request.direction != Direction::Dl {
        return Err(Error::InvalidConfig("encode_slot needs a DL request".into()));
    }
    run_slot(request, executor, OpKind::Encode)
}

pub fn decode_slot(request: &SlotCodingRequest, executor: &mut SlotExecutor) -> Result<SlotCodingResult> {
    if request.direction != Direction::Ul {
        return Err(Error::InvalidConfig("decode_slot needs a UL request".into()));
    }
    run_slot(request, executor, OpKind::Decode)
}

fn build_ops(
    request: &SlotCodingRequest,
    exec: &mut SlotExecutor,
    kind: OpKind,
    params: &[Arc<TbCodingParams>],
) -> Result<Vec<Vec<(CodingOpDescriptor, Target)>>> {
    let caps = exec.handle.capabilities().clone();
    let placement = if caps.internal_harq_memory { BufferLocation::Device } else { BufferLocation::Host };
    let generation = request.interface_generation;
    let mut per_job = Vec::with_capacity(request.jobs.len());
    for (j, (job, p)) in request.jobs.iter().zip(params).enumerate() {
        let c = p.num_cbs();
        let granularity = route_interface(&caps, c)?;
        let mut payloads: Vec<(OpPayload, usize)> = Vec::new();
        let mut harq = None;
        match (&job.data, kind) {
            (JobData::Shape, _) => match granularity {
                Granularity::Cb => payloads.extend((0..c).map(|r| (OpPayload::Shape { cbs: 1, info_bits: p.plan.k_prime }, r))),
                Granularity::Tb => payloads.push((OpPayload::Shape { cbs: c, info_bits: p.info_bits() }, 0)),
            },
            (JobData::Bits(bits), OpKind::Encode) => {
                if bits.len() != p.tb_size_bits() {
                    return Err(Error::InvalidConfig(format!(
                        "ue {}: payload has {} bits, TBS is {}",
                        job.ue_id,
                        bits.len(),
                        p.tb_size_bits()
                    )));
                }
                match granularity {
                    Granularity::Cb => {
                        for (r, cb) in segment_bits(bits, &p.plan)?.into_iter().enumerate() {
                            payloads.push((OpPayload::EncodeCb { cb: Arc::new(cb), rate_match: p.cb_params(r) }, r));
                        }
                    }
                    Granularity::Tb => payloads.push((OpPayload::EncodeTb { payload: Arc::clone(bits), params: Arc::clone(p) }, 0)),
                }
            }
            (JobData::Llrs(llrs), OpKind::Decode) => {
                if llrs.len() != c || llrs.iter().zip(&p.e_per_cb).any(|(l, &e)| l.len() != e) {
                    return Err(Error::InvalidConfig(format!("ue {}: LLR blocks do not match the rate-matching output sizes", job.ue_id)));
                }
                harq = Some(HarqRef { ue_id: job.ue_id, harq_pid: job.harq_pid, placement });
                let prior = if job.rv != 0 && placement == BufferLocation::Host {
                    let stored = exec
                        .host_harq
                        .get(&(job.ue_id, job.harq_pid))
                        .filter(|b| b.len() == c)
                        .ok_or(Error::HarqBufferMissing { ue_id: job.ue_id, harq_pid: job.harq_pid })?;
                    Some(stored.clone())
                } else {
                    None
                };
                match granularity {
                    Granularity::Cb => {
                        for (r, l) in llrs.iter().enumerate() {
                            payloads.push((
                                OpPayload::DecodeCb {
                                    llrs: Arc::new(l.clone()),
                                    params: Arc::clone(p),
                                    cb_index: r,
                                    prior: prior.as_ref().map(|b| b[r].clone()),
                                    max_iters: exec.max_iters,
                                },
                                r,
                            ));
                        }
                    }
                    Granularity::Tb => payloads.push((
                        OpPayload::DecodeTb { llrs: Arc::clone(llrs), params: Arc::clone(p), prior, max_iters: exec.max_iters },
                        0,
                    )),
                }
            }
            _ => return Err(Error::InvalidConfig(format!("ue {}: job data does not match the {kind:?} direction", job.ue_id))),
        }
        let ops = payloads
            .into_iter()
            .enumerate()
            .map(|(i, (payload, first_cb))| {
                let op = CodingOpDescriptor {
                    id: exec.op_id(),
                    kind,
                    granularity,
                    generation,
                    tb_start: i == 0,
                    payload,
                    harq,
                    llr_mode: exec.llr_mode,
                };
                (op, Target { job: j, first_cb })
            })
            .collect();
        per_job.push(ops);
    }
    Ok(per_job)
}

/// Groups operations into calls according to the interface generation.
fn group_calls(
    per_job: Vec<Vec<(CodingOpDescriptor, Target)>>,
    kind: OpKind,
    generation: InterfaceGeneration,
) -> Vec<Vec<(CodingOpDescriptor, Target)>> {
    match generation {
        InterfaceGeneration::PerSlot => vec![per_job.into_iter().flatten().collect()],
        InterfaceGeneration::PerTb => per_job,
        InterfaceGeneration::PerCb => {
            let limit = if kind == OpKind::Encode { ENCODE_CBS_PER_CALL } else { 1 };
            let mut calls: Vec<Vec<(CodingOpDescriptor, Target)>> = Vec::new();
            let mut cbs = 0;
            for item in per_job.into_iter().flatten() {
                let n = item.0.num_cbs();
                if calls.is_empty() || cbs + n > limit {
                    calls.push(Vec::new());
                    cbs = 0;
                }
                cbs += n;
                calls.last_mut().expect("call opened above").push(item);
            }
            calls
        }
    }
}

/// Submits one call and waits for all of its completions.
fn run_call(exec: &mut SlotExecutor, ops: &[CodingOpDescriptor]) -> Result<(Vec<Completion>, f64, f64)> {
    let start = exec.handle.now_us();
    let mut done = Vec::with_capacity(ops.len());
    let mut sent = 0;
    while done.len() < ops.len() {
        if sent < ops.len() {
            sent += enqueue(&mut exec.handle, &ops[sent..])?;
        }
        let got = dequeue(&mut exec.handle, ops.len());
        if got.is_empty() && sent == done.len() && sent < ops.len() {
            return Err(Error::BackendUnavailable("queue accepts no operations".into()));
        }
        if got.is_empty() {
            std::hint::spin_loop();
        }
        done.extend(got);
    }
    let end = if exec.handle.is_virtual() {
        let end = done.iter().map(|c| c.completed_at_us).fold(start, f64::max);
        exec.handle.set_clock(end);
        end
    } else {
        exec.handle.now_us()
    };
    Ok((done, start, end))
}

fn run_slot(request: &SlotCodingRequest, exec: &mut SlotExecutor, kind: OpKind) -> Result<SlotCodingResult> {
    request.validate()?;
    let params: Vec<Arc<TbCodingParams>> = request
        .jobs
        .iter()
        .map(|j| j.coding_params(request.symbols, request.overhead).map(Arc::new))
        .collect::<Result<_>>()?;
    let per_job = build_ops(request, exec, kind, &params)?;
    let calls = group_calls(per_job, kind, request.interface_generation);

    let n_jobs = request.jobs.len();
    let mut encoded: Vec<Vec<Vec<u8>>> = params.iter().map(|p| vec![Vec::new(); p.num_cbs()]).collect();
    let mut decoded: Vec<Vec<Option<DecodeOutput>>> = params.iter().map(|p| vec![None; p.num_cbs()]).collect();
    let mut buffers: Vec<Vec<Option<SoftBuffer>>> = params.iter().map(|p| vec![None; p.num_cbs()]).collect();

    let mut call_elapsed_us = Vec::with_capacity(calls.len());
    let started_at_us = exec.handle.now_us();
    let mut finished_at_us = started_at_us;
    for call in &calls {
        let ops: Vec<CodingOpDescriptor> = call.iter().map(|(op, _)| op.clone()).collect();
        let targets: HashMap<u64, Target> = call.iter().map(|(op, t)| (op.id, *t)).collect();
        let (done, start, end) = run_call(exec, &ops)?;
        call_elapsed_us.push(end - start);
        finished_at_us = end;
        for c in done {
            let t = targets[&c.op_id];
            match c.status {
                OpStatus::Ok => {}
                OpStatus::HarqMissing { ue_id, harq_pid } => return Err(Error::HarqBufferMissing { ue_id, harq_pid }),
                OpStatus::Failed(msg) => return Err(Error::BackendUnavailable(msg)),
            }
            match c.output {
                OpOutput::Encoded(blocks) => {
                    for (i, b) in blocks.into_iter().enumerate() {
                        encoded[t.job][t.first_cb + i] = b;
                    }
                }
                OpOutput::Decoded { outputs, buffers: bufs } => {
                    for (i, o) in outputs.into_iter().enumerate() {
                        decoded[t.job][t.first_cb + i] = Some(o);
                    }
                    for (i, b) in bufs.into_iter().flatten().enumerate() {
                        buffers[t.job][t.first_cb + i] = Some(b);
                    }
                }
                OpOutput::TimingOnly => {}
            }
        }
    }

    let mut jobs = Vec::with_capacity(n_jobs);
    for (j, job) in request.jobs.iter().enumerate() {
        let p = &params[j];
        let decoded_tb = if decoded[j].iter().all(Option::is_some) && !matches!(job.data, JobData::Shape) && kind == OpKind::Decode {
            let outs: Vec<DecodeOutput> = decoded[j].drain(..).flatten().collect();
            Some(assemble_tb(outs, &p.plan))
        } else {
            None
        };
        if buffers[j].iter().all(Option::is_some) && !buffers[j].is_empty() {
            let bufs: Vec<SoftBuffer> = buffers[j].drain(..).flatten().collect();
            exec.host_harq.insert((job.ue_id, job.harq_pid), bufs);
        }
        let enc = if matches!(job.data, JobData::Bits(_)) { std::mem::take(&mut encoded[j]) } else { Vec::new() };
        jobs.push(JobOutput { ue_id: job.ue_id, num_cbs: p.num_cbs(), encoded: enc, decoded: decoded_tb });
    }

    Ok(SlotCodingResult {
        slot_id: request.slot_id,
        direction: request.direction,
        generation: request.interface_generation,
        jobs,
        calls_made: calls.len(),
        elapsed_us: finished_at_us - started_at_us,
        call_elapsed_us,
        started_at_us,
        finished_at_us,
    })
}
