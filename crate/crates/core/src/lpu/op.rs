use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::caps::Granularity;
use crate::nr::decoder::DecodeOutput;
use crate::nr::harq::{BufferLocation, SoftBuffer};
use crate::nr::rate_match::RateMatchParams;
use crate::nr::segment::CodeBlock;
use crate::nr::tb::TbCodingParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum OpKind {
    Encode,
    Decode,
}

/// How a slot's coding work is split into calls.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum InterfaceGeneration {
    /// One call per code block for decoding, eight code blocks per call for
    /// encoding.
    PerCb,
    /// One call per transport block.
    PerTb,
    /// One call for all transport blocks of the slot.
    PerSlot,
}

impl InterfaceGeneration {
    pub const ALL: [InterfaceGeneration; 3] =
        [InterfaceGeneration::PerCb, InterfaceGeneration::PerTb, InterfaceGeneration::PerSlot];

    pub fn as_str(self) -> &'static str {
        match self {
            InterfaceGeneration::PerCb => "PER_CB",
            InterfaceGeneration::PerTb => "PER_TB",
            InterfaceGeneration::PerSlot => "PER_SLOT",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|g| g.as_str().eq_ignore_ascii_case(s))
    }
}

/// Reference to the HARQ soft data a decode operation combines into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HarqRef {
    pub ue_id: u32,
    pub harq_pid: u8,
    pub placement: BufferLocation,
}

#[derive(Debug, Clone)]
pub enum OpPayload {
    EncodeCb {
        cb: Arc<CodeBlock>,
        rate_match: RateMatchParams,
    },
    EncodeTb {
        payload: Arc<Vec<u8>>,
        params: Arc<TbCodingParams>,
    },
    DecodeCb {
        llrs: Arc<Vec<f32>>,
        params: Arc<TbCodingParams>,
        cb_index: usize,
        /// Host-resident soft buffer of a retransmission.
        prior: Option<SoftBuffer>,
        max_iters: u32,
    },
    DecodeTb {
        llrs: Arc<Vec<Vec<f32>>>,
        params: Arc<TbCodingParams>,
        prior: Option<Vec<SoftBuffer>>,
        max_iters: u32,
    },
    /// Timing-only operation carrying the shape of the work.
    Shape { cbs: usize, info_bits: usize },
}

/// One operation submitted to a queue.
#[derive(Debug, Clone)]
pub struct CodingOpDescriptor {
    pub id: u64,
    pub kind: OpKind,
    pub granularity: Granularity,
    pub generation: InterfaceGeneration,
    /// Set on the first operation of each transport block in a slot.
    pub tb_start: bool,
    pub payload: OpPayload,
    pub harq: Option<HarqRef>,
    pub llr_mode: crate::nr::harq::LlrMode,
}

impl CodingOpDescriptor {
    pub fn num_cbs(&self) -> usize {
        match &self.payload {
            OpPayload::EncodeCb { .. } | OpPayload::DecodeCb { .. } => 1,
            OpPayload::EncodeTb { params, .. } | OpPayload::DecodeTb { params, .. } => params.num_cbs(),
            OpPayload::Shape { cbs, .. } => *cbs,
        }
    }

    /// Information bits (`K'` per code block) processed by the operation.
    pub fn info_bits(&self) -> usize {
        match &self.payload {
            OpPayload::EncodeCb { cb, .. } => cb.k_prime(),
            OpPayload::DecodeCb { params, .. } => params.plan.k_prime,
            OpPayload::EncodeTb { params, .. } | OpPayload::DecodeTb { params, .. } => params.info_bits(),
            OpPayload::Shape { info_bits, .. } => *info_bits,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum OpStatus {
    Ok,
    /// A retransmission found no soft buffer to combine into.
    HarqMissing { ue_id: u32, harq_pid: u8 },
    Failed(String),
}

#[derive(Debug, Clone)]
pub enum OpOutput {
    /// Rate-matched bits per code block.
    Encoded(Vec<Vec<u8>>),
    /// Decoder output per code block, plus the updated soft buffers when
    /// they live on the host.
    Decoded {
        outputs: Vec<DecodeOutput>,
        buffers: Option<Vec<SoftBuffer>>,
    },
    TimingOnly,
}

#[derive(Debug, Clone)]
pub struct Completion {
    pub op_id: u64,
    pub status: OpStatus,
    pub output: OpOutput,
    /// Time the operation held a processing engine.
    pub service_us: f64,
    /// Clock value (µs) at which the result became visible to the caller.
    pub completed_at_us: f64,
}
