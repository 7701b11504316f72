//! Slot coding time per interface generation and blocks per slot.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{decode_slot, encode_slot, Direction, JobData, SlotCodingRequest, SlotExecutor, TransportBlockJob, MAX_PRBS};
use crate::backends::{calls_for, SlotShape};
use crate::error::{Error, Result};
use crate::lpu::{InterfaceGeneration, OpKind};
use crate::metrics::{nearest_rank, summarize};
use crate::nr::harq::bits_to_llrs;
use crate::nr::tb::{encode_tb, TbCodingParams};
use crate::nr::tbs::McsTable;

/// Idle time between repetitions on a virtual clock.
const REP_GAP_US: f64 = 1_000.0;
/// Magnitude of the noiseless LLRs fed to decode benches.
const BENCH_LLR: f32 = 8.0;

/// `total` PRBs shared by `n` blocks: equal parts, the remainder going one
/// PRB each to the lowest-indexed blocks.
pub fn split_prbs(total: u32, n: usize) -> Result<Vec<u32>> {
    if n == 0 || n as u32 > total {
        return Err(Error::InvalidConfig(format!("cannot split {total} PRBs over {n} blocks")));
    }
    let n32 = n as u32;
    Ok((0..n32).map(|i| total / n32 + u32::from(i < total % n32)).collect())
}

/// Slot used by the interface benchmark: the carrier is shared equally by
/// `n_tb` single-layer blocks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub prbs: u32,
    pub symbols: u32,
    pub layers: u32,
    pub mcs_index: u32,
    pub mcs_table: McsTable,
    pub overhead: u32,
    pub reps: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig { prbs: MAX_PRBS, symbols: 12, layers: 1, mcs_index: 28, mcs_table: McsTable::T1, overhead: 0, reps: 100, seed: 1 }
    }
}

impl BenchConfig {
    fn jobs(&self, n_tb: usize) -> Result<Vec<TransportBlockJob>> {
        Ok(split_prbs(self.prbs, n_tb)?
            .into_iter()
            .enumerate()
            .map(|(i, prbs)| TransportBlockJob {
                ue_id: i as u32,
                data: JobData::Shape,
                mcs_index: self.mcs_index,
                mcs_table: self.mcs_table,
                layers: self.layers,
                rv: 0,
                harq_pid: 0,
                prb_share: prbs,
            })
            .collect())
    }

    pub fn job_params(&self, n_tb: usize) -> Result<Vec<TbCodingParams>> {
        self.jobs(n_tb)?.iter().map(|j| j.coding_params(self.symbols, self.overhead)).collect()
    }

    /// Per-slot totals of a benchmark point.
    pub fn slot_shape(&self, kind: OpKind, generation: InterfaceGeneration, n_tb: usize) -> Result<SlotShape> {
        let params = self.job_params(n_tb)?;
        let n_cb = params.iter().map(TbCodingParams::num_cbs).sum();
        let bits: usize = params.iter().map(TbCodingParams::info_bits).sum();
        Ok(SlotShape { calls: calls_for(kind, generation, n_tb, n_cb), n_cb, n_tb, kbits: bits as f64 / 1e3 })
    }

    /// Request for one benchmark point, with seeded data or shape only.
    pub fn request(&self, kind: OpKind, generation: InterfaceGeneration, n_tb: usize, with_data: bool) -> Result<SlotCodingRequest> {
        let mut jobs = self.jobs(n_tb)?;
        if with_data {
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ (n_tb as u64) << 32);
            for job in &mut jobs {
                let params = job.coding_params(self.symbols, self.overhead)?;
                let payload: Vec<u8> = (0..params.tb_size_bits()).map(|_| rng.random_range(0..2u8)).collect();
                job.data = match kind {
                    OpKind::Encode => JobData::Bits(Arc::new(payload)),
                    OpKind::Decode => {
                        let cbs = encode_tb(&payload, &params)?;
                        JobData::Llrs(Arc::new(cbs.iter().map(|b| bits_to_llrs(b, BENCH_LLR)).collect()))
                    }
                };
            }
        }
        let direction = match kind {
            OpKind::Encode => Direction::Dl,
            OpKind::Decode => Direction::Ul,
        };
        Ok(SlotCodingRequest::new(0, direction, generation, jobs).with_allocation(self.symbols, self.overhead))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub direction: Direction,
    pub generation: InterfaceGeneration,
    pub n_tb: usize,
    pub mean_us: f64,
    pub p50_us: f64,
    pub p90_us: f64,
    pub calls_made: usize,
    pub samples_us: Vec<f64>,
}

/// Times every (generation, blocks per slot) point. The first repetition
/// of each point carries real data and must decode cleanly; on virtual
/// clocks later repetitions submit the shape only.
pub fn run_interface_bench(
    executor: &mut SlotExecutor,
    config: &BenchConfig,
    kind: OpKind,
    generations: &[InterfaceGeneration],
    tb_counts: &[usize],
) -> Result<Vec<BenchRow>> {
    if config.reps == 0 {
        return Err(Error::InvalidConfig("at least one repetition is needed".into()));
    }
    let mut rows = Vec::new();
    for &generation in generations {
        for &n_tb in tb_counts {
            let full = config.request(kind, generation, n_tb, true)?;
            let shape = config.request(kind, generation, n_tb, false)?;
            let mut samples = Vec::with_capacity(config.reps);
            let mut calls_made = 0;
            for rep in 0..config.reps {
                let req = if rep == 0 || !executor.is_virtual() { &full } else { &shape };
                let res = match kind {
                    OpKind::Encode => encode_slot(req, executor)?,
                    OpKind::Decode => decode_slot(req, executor)?,
                };
                if rep == 0 && kind == OpKind::Decode && !res.all_tb_crc_ok() {
                    return Err(Error::BackendUnavailable(format!("noiseless bench slot failed to decode ({generation:?}, {n_tb} TBs)")));
                }
                calls_made = res.calls_made;
                samples.push(res.elapsed_us);
                if executor.is_virtual() {
                    executor.set_clock(res.finished_at_us + REP_GAP_US);
                }
            }
            let dist = summarize(&samples)?;
            let mut sorted = samples.clone();
            sorted.sort_by(f64::total_cmp);
            rows.push(BenchRow {
                direction: shape.direction,
                generation,
                n_tb,
                mean_us: dist.mean,
                p50_us: nearest_rank(&sorted, 50.0),
                p90_us: nearest_rank(&sorted, 90.0),
                calls_made,
                samples_us: samples,
            });
        }
    }
    Ok(rows)
}

/// Leading columns match the calibration table, so bench output can be fed
/// back to the fit.
pub const BENCH_CSV_HEADER: &str = "direction,generation,n_tb,mean_us,p50_us,p90_us,calls_made";

pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut s = format!("{BENCH_CSV_HEADER}\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{:.2},{:.2},{:.2},{}\n",
            r.direction.as_str(),
            r.generation.as_str(),
            r.n_tb,
            r.mean_us,
            r.p50_us,
            r.p90_us,
            r.calls_made
        ));
    }
    s
}

/// JSON twin of [`bench_csv`] (per-slot samples omitted).
pub fn bench_json(rows: &[BenchRow]) -> Result<String> {
    #[derive(Serialize)]
    struct Row<'a> {
        direction: Direction,
        generation: &'a str,
        n_tb: usize,
        mean_us: f64,
        p50_us: f64,
        p90_us: f64,
        calls_made: usize,
    }
    let out: Vec<Row> = rows
        .iter()
        .map(|r| Row {
            direction: r.direction,
            generation: r.generation.as_str(),
            n_tb: r.n_tb,
            mean_us: r.mean_us,
            p50_us: r.p50_us,
            p90_us: r.p90_us,
            calls_made: r.calls_made,
        })
        .collect();
    Ok(serde_json::to_string_pretty(&out)? + "\n")
}
