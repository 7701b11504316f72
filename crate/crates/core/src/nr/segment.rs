//! Transport-block CRC attachment and code-block segmentation.

use serde::{Deserialize, Serialize};

use super::base_graph::{lifting_table, BaseGraph};
use super::crc::{crc_attach, crc_check, CrcKind};
use crate::error::{Error, Result};

/// Per code-block CRC length when a transport block is split.
pub const CB_CRC_LEN: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentationPlan {
    /// Transport block payload size A (without CRC).
    pub tb_size_bits: usize,
    pub tb_crc: CrcKind,
    pub num_cbs: usize,
    pub base_graph: BaseGraph,
    pub lifting_size: usize,
    /// Bits per code block before filler, including the CB CRC if present.
    pub k_prime: usize,
    /// Information bits per code block after filler.
    pub k: usize,
    pub filler_per_cb: usize,
    pub cb_crc_present: bool,
}

impl SegmentationPlan {
    /// Transport-block bits (payload or CRC) carried by each code block.
    pub fn cb_data_bits(&self) -> usize {
        self.k_prime - if self.cb_crc_present { CB_CRC_LEN } else { 0 }
    }

    /// Payload plus transport-block CRC, B.
    pub fn tb_bits_with_crc(&self) -> usize {
        self.tb_size_bits + self.tb_crc.len()
    }

    pub fn codeword_len(&self) -> usize {
        self.base_graph.n(self.lifting_size)
    }
}

/// Base graph choice from payload size and target code rate.
pub fn select_base_graph(tb_size_bits: usize, code_rate: f64) -> BaseGraph {
    if tb_size_bits <= 292 || (tb_size_bits <= 3824 && code_rate <= 0.67) || code_rate <= 0.25 {
        BaseGraph::BG2
    } else {
        BaseGraph::BG1
    }
}

pub fn tb_crc_kind(tb_size_bits: usize) -> CrcKind {
    if tb_size_bits > 3824 {
        CrcKind::Crc24A
    } else {
        CrcKind::Crc16
    }
}

/// Segmentation of an `tb_size_bits`-bit transport block coded at
/// `code_rate` (0 < rate < 1).
pub fn segment_tb(tb_size_bits: usize, code_rate: f64) -> Result<SegmentationPlan> {
    if tb_size_bits == 0 {
        return Err(Error::InvalidConfig("transport block has no bits".into()));
    }
    if !(code_rate > 0.0 && code_rate < 1.0) {
        return Err(Error::InvalidConfig(format!("code rate {code_rate} outside (0, 1)")));
    }
    let base_graph = select_base_graph(tb_size_bits, code_rate);
    let tb_crc = tb_crc_kind(tb_size_bits);
    let b = tb_size_bits + tb_crc.len();
    let k_cb = base_graph.max_cb_size();
    let (num_cbs, b_prime) = if b <= k_cb {
        (1, b)
    } else {
        let c = b.div_ceil(k_cb - CB_CRC_LEN);
        (c, b + c * CB_CRC_LEN)
    };
    let k_prime = b_prime.div_ceil(num_cbs);
    let k_b = match base_graph {
        BaseGraph::BG1 => 22,
        BaseGraph::BG2 if b > 640 => 10,
        BaseGraph::BG2 if b > 560 => 9,
        BaseGraph::BG2 if b > 192 => 8,
        BaseGraph::BG2 => 6,
    };
    let z = lifting_table()
        .smallest_covering(k_b, k_prime)
        .ok_or_else(|| Error::UnsupportedConfig(format!("no lifting size covers K'={k_prime}")))?;
    let k = base_graph.k(z);
    Ok(SegmentationPlan {
        tb_size_bits,
        tb_crc,
        num_cbs,
        base_graph,
        lifting_size: z,
        k_prime,
        k,
        filler_per_cb: k - k_prime,
        cb_crc_present: num_cbs > 1,
    })
}

/// One LDPC information block: data, optional CB CRC, then filler zeros.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeBlock {
    pub bits: Vec<u8>,
    pub index: usize,
    pub lifting_size: usize,
    pub base_graph: BaseGraph,
    pub filler_count: usize,
}

impl CodeBlock {
    /// Builds a block from `K'` data bits, padding the filler tail.
    pub fn from_data(data: &[u8], index: usize, base_graph: BaseGraph, z: usize) -> Result<Self> {
        let k = base_graph.k(z);
        if data.len() > k {
            return Err(Error::InvalidConfig(format!("{} bits exceed K={k}", data.len())));
        }
        let mut bits = Vec::with_capacity(k);
        bits.extend_from_slice(data);
        bits.resize(k, 0);
        Ok(CodeBlock { bits, index, lifting_size: z, base_graph, filler_count: k - data.len() })
    }

    pub fn k_prime(&self) -> usize {
        self.bits.len() - self.filler_count
    }
}

/// Attaches the TB CRC, splits, and attaches per-CB CRCs.
pub fn segment_bits(payload: &[u8], plan: &SegmentationPlan) -> Result<Vec<CodeBlock>> {
    if payload.len() != plan.tb_size_bits {
        return Err(Error::InvalidConfig(format!(
            "payload has {} bits, plan expects {}",
            payload.len(),
            plan.tb_size_bits
        )));
    }
    let mut with_crc = crc_attach(payload, plan.tb_crc);
    let per_cb = plan.cb_data_bits();
    with_crc.resize(per_cb * plan.num_cbs, 0);
    with_crc
        .chunks(per_cb)
        .enumerate()
        .map(|(index, chunk)| {
            let data = if plan.cb_crc_present {
                crc_attach(chunk, CrcKind::Crc24B)
            } else {
                chunk.to_vec()
            };
            CodeBlock::from_data(&data, index, plan.base_graph, plan.lifting_size)
        })
        .collect()
}

/// Reassembles decoded per-CB data (CB CRC already stripped) into the TB
/// payload, returning it with the TB CRC verdict.
pub fn desegment(cb_data: &[Vec<u8>], plan: &SegmentationPlan) -> (Vec<u8>, bool) {
    let mut joined: Vec<u8> = cb_data.iter().flatten().copied().collect();
    joined.truncate(plan.tb_bits_with_crc());
    let ok = joined.len() == plan.tb_bits_with_crc() && crc_check(&joined, plan.tb_crc);
    joined.truncate(plan.tb_size_bits);
    (joined, ok)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nr::tbs::{compute_tbs, mcs_entry, Allocation, McsTable};

    #[test]
    fn zero_size_rejected() {
        assert!(segment_tb(0, 0.5).is_err());
    }

    #[test]
    fn small_block_single_segment_without_cb_crc() {
        let plan = segment_tb(200, 0.3).unwrap();
        assert_eq!(plan.base_graph, BaseGraph::BG2);
        assert_eq!(plan.num_cbs, 1);
        assert!(!plan.cb_crc_present);
        assert_eq!(plan.tb_crc, CrcKind::Crc16);
        // B = 216 > 192 -> K_b = 8, Z = 28
        assert_eq!(plan.lifting_size, 28);
        assert_eq!(plan.k, 280);
    }

    #[test]
    fn bg1_single_segment_limit() {
        let a = 8448 - 24;
        let at_limit = segment_tb(a, 0.9).unwrap();
        assert_eq!((at_limit.base_graph, at_limit.num_cbs), (BaseGraph::BG1, 1));
        let over = segment_tb(a + 1, 0.9).unwrap();
        assert_eq!(over.num_cbs, 2);
        assert!(over.cb_crc_present);
    }

    #[test]
    fn reference_uplink_slot_has_26_code_blocks() {
        let mcs = mcs_entry(McsTable::T1, 28).unwrap();
        let tbs = compute_tbs(Allocation::new(273, 12, 1), McsTable::T1, 28).unwrap();
        let plan = segment_tb(tbs as usize, mcs.code_rate()).unwrap();
        assert_eq!(plan.num_cbs, 26);
        assert_eq!(plan.base_graph, BaseGraph::BG1);
        assert_eq!(plan.lifting_size, 384);
    }

    #[test]
    fn segment_then_desegment_recovers_payload() {
        let payload: Vec<u8> = (0..20_000).map(|i| ((i * 7 + i / 3) % 2) as u8).collect();
        let plan = segment_tb(payload.len(), 0.8).unwrap();
        let cbs = segment_bits(&payload, &plan).unwrap();
        assert_eq!(cbs.len(), plan.num_cbs);
        for cb in &cbs {
            assert_eq!(cb.bits.len(), plan.k);
            assert!(cb.bits[plan.k_prime..].iter().all(|&b| b == 0));
            assert!(crc_check(&cb.bits[..plan.k_prime], CrcKind::Crc24B));
        }
        let data: Vec<Vec<u8>> = cbs.iter().map(|cb| cb.bits[..plan.cb_data_bits()].to_vec()).collect();
        let (out, ok) = desegment(&data, &plan);
        assert!(ok);
        assert_eq!(out, payload);
    }
}
