//! Slot-level High-PHY processing for virtualized 5G NR base stations.
//!
//! The crate is layered bottom-up:
//!
//! * [`nr`]: bit-exact channel coding (CRC, segmentation, LDPC, rate
//!   matching, HARQ combining).
//! * [`lpu`]: accelerator abstraction with capability discovery and
//!   driver-style queues.
//! * [`backends`]: a software backend and calibrated emulated accelerators.
//! * [`slot_api`]: per-CB, per-TB and per-slot coding interfaces.
//! * [`highphy`]: DL/UL slot pipelines, precoding and deadline accounting.
//! * [`deployment`]: core planning and multi-instance shared-device runs.
//! * [`metrics`]: latency summaries and report export.

pub mod backends;
pub mod deployment;
pub mod error;
pub mod highphy;
pub mod lpu;
pub mod metrics;
pub mod nr;
pub mod slot_api;

pub use error::{Error, Result};
