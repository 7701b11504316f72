//! Transport-block level coding chain.

use serde::{Deserialize, Serialize};

use super::decoder::{ldpc_decode, DecodeOutput};
use super::encoder::ldpc_encode;
use super::harq::{rate_recover_and_combine, BufferLocation, LlrMode, SoftBuffer};
use super::rate_match::{cb_output_sizes, rate_match, RateMatchParams};
use super::segment::{desegment, segment_bits, segment_tb, CodeBlock, SegmentationPlan};
use super::tbs::{compute_tbs, mcs_entry, Allocation, McsTable};
use crate::error::{Error, Result};

/// Everything needed to code one transport block onto `coded_bits` bits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TbCodingParams {
    pub plan: SegmentationPlan,
    pub qm: u32,
    pub layers: u32,
    pub coded_bits: usize,
    pub rv: u8,
    pub e_per_cb: Vec<usize>,
}

impl TbCodingParams {
    pub fn new(tb_size_bits: usize, code_rate: f64, qm: u32, layers: u32, coded_bits: usize, rv: u8) -> Result<Self> {
        let plan = segment_tb(tb_size_bits, code_rate)?;
        let unit = (qm * layers) as usize;
        if coded_bits / unit < plan.num_cbs {
            return Err(Error::InvalidConfig(format!(
                "{coded_bits} coded bits cannot carry {} code blocks",
                plan.num_cbs
            )));
        }
        let e_per_cb = cb_output_sizes(coded_bits, plan.num_cbs, qm, layers);
        let params = TbCodingParams { plan, qm, layers, coded_bits, rv, e_per_cb };
        for r in 0..plan.num_cbs {
            params.cb_params(r).validate()?;
        }
        Ok(params)
    }

    /// Parameters for a transport block sized by the TBS procedure.
    pub fn from_allocation(alloc: Allocation, table: McsTable, mcs_index: u32, rv: u8) -> Result<Self> {
        let tbs = compute_tbs(alloc, table, mcs_index)?;
        let mcs = mcs_entry(table, mcs_index)?;
        Self::new(tbs as usize, mcs.code_rate(), mcs.qm, alloc.layers, alloc.coded_bits(mcs.qm), rv)
    }

    pub fn tb_size_bits(&self) -> usize {
        self.plan.tb_size_bits
    }

    pub fn num_cbs(&self) -> usize {
        self.plan.num_cbs
    }

    pub fn cb_params(&self, r: usize) -> RateMatchParams {
        RateMatchParams::for_plan(&self.plan, self.e_per_cb[r], self.rv, self.qm)
    }

    /// Information bits of all code blocks, summed (`C * K'`).
    pub fn info_bits(&self) -> usize {
        self.plan.num_cbs * self.plan.k_prime
    }
}

/// Encodes and rate-matches one code block.
pub fn encode_cb(cb: &CodeBlock, params: &RateMatchParams) -> Result<Vec<u8>> {
    rate_match(&ldpc_encode(cb)?, params)
}

/// Rate-matched output of every code block of the transport block.
pub fn encode_tb(payload: &[u8], params: &TbCodingParams) -> Result<Vec<Vec<u8>>> {
    segment_bits(payload, &params.plan)?
        .iter()
        .enumerate()
        .map(|(r, cb)| encode_cb(cb, &params.cb_params(r)))
        .collect()
}

/// Combines one transmission into the per-CB soft buffers. `buffers` is
/// `None` for a fresh HARQ process.
pub fn recover_tb(
    llrs: &[Vec<f32>],
    params: &TbCodingParams,
    buffers: Option<Vec<SoftBuffer>>,
    harq_pid: u8,
    location: BufferLocation,
    mode: LlrMode,
) -> Result<Vec<SoftBuffer>> {
    if llrs.len() != params.num_cbs() {
        return Err(Error::InvalidConfig(format!("{} LLR blocks for {} code blocks", llrs.len(), params.num_cbs())));
    }
    let buffers = match buffers {
        Some(b) if b.len() == params.num_cbs() => b,
        Some(b) => {
            return Err(Error::InvalidConfig(format!("{} soft buffers for {} code blocks", b.len(), params.num_cbs())))
        }
        None => (0..params.num_cbs())
            .map(|r| SoftBuffer::new(&params.cb_params(r), harq_pid, location, mode))
            .collect(),
    };
    buffers
        .into_iter()
        .zip(llrs)
        .enumerate()
        .map(|(r, (buf, l))| rate_recover_and_combine(l, &params.cb_params(r), buf))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TbDecodeOutput {
    pub payload: Vec<u8>,
    pub cb_crc_ok: Vec<bool>,
    pub tb_crc_ok: bool,
    pub max_iterations: u32,
}

/// Reassembles per-CB decoder outputs and checks the TB CRC.
pub fn assemble_tb(outputs: Vec<DecodeOutput>, plan: &SegmentationPlan) -> TbDecodeOutput {
    let cb_crc_ok: Vec<bool> = outputs.iter().map(|o| o.crc_ok).collect();
    let max_iterations = outputs.iter().map(|o| o.iterations_used).max().unwrap_or(0);
    let data: Vec<Vec<u8>> = outputs.into_iter().map(|o| o.payload).collect();
    let (payload, tb_ok) = desegment(&data, plan);
    TbDecodeOutput { payload, tb_crc_ok: tb_ok && cb_crc_ok.iter().all(|&b| b), cb_crc_ok, max_iterations }
}

pub fn decode_tb(buffers: &[SoftBuffer], params: &TbCodingParams, max_iters: u32) -> Result<TbDecodeOutput> {
    let outputs = buffers
        .iter()
        .map(|b| ldpc_decode(b, &params.plan, max_iters))
        .collect::<Result<Vec<_>>>()?;
    Ok(assemble_tb(outputs, &params.plan))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nr::decoder::DEFAULT_MAX_ITERS;
    use crate::nr::harq::bits_to_llrs;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn reference_slot_round_trip() {
        let params = TbCodingParams::from_allocation(Allocation::new(273, 12, 1), McsTable::T1, 28, 0).unwrap();
        assert_eq!(params.num_cbs(), 26);
        assert_eq!(params.e_per_cb.iter().sum::<usize>(), params.coded_bits);
        let mut rng = ChaCha8Rng::seed_from_u64(26);
        let payload: Vec<u8> = (0..params.tb_size_bits()).map(|_| rng.random_range(0..2u8)).collect();
        let tx = encode_tb(&payload, &params).unwrap();
        let llrs: Vec<Vec<f32>> = tx.iter().map(|b| bits_to_llrs(b, 8.0)).collect();
        let bufs = recover_tb(&llrs, &params, None, 0, BufferLocation::Host, LlrMode::Float).unwrap();
        let out = decode_tb(&bufs, &params, DEFAULT_MAX_ITERS).unwrap();
        assert!(out.tb_crc_ok);
        assert_eq!(out.cb_crc_ok.len(), 26);
        assert_eq!(out.payload, payload);
    }

    #[test]
    fn too_few_coded_bits_rejected() {
        assert!(TbCodingParams::new(20_000, 0.9, 2, 1, 4, 0).is_err());
    }
}
