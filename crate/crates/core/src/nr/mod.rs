//! 5G NR shared-channel coding primitives.
//!
//! Bit sequences are `Vec<u8>` holding one `0`/`1` per element. LLRs follow
//! the convention that a positive value favours bit `0`.

pub mod base_graph;
pub mod crc;
pub mod decoder;
pub mod encoder;
pub mod harq;
pub mod rate_match;
pub mod segment;
pub mod tb;
pub mod tbs;

pub use base_graph::BaseGraph;
pub use crc::{crc_attach, crc_check, crc_compute, CrcKind};
pub use decoder::{ldpc_decode, DecodeOutput};
pub use encoder::ldpc_encode;
pub use harq::{rate_recover_and_combine, BufferLocation, LlrMode, SoftBuffer};
pub use rate_match::{rate_match, RateMatchParams};
pub use segment::{segment_tb, CodeBlock, SegmentationPlan};
pub use tb::{decode_tb, encode_tb, recover_tb, TbCodingParams, TbDecodeOutput};
pub use tbs::{compute_tbs, mcs_entry, Allocation, McsEntry, McsTable};
