//! DL/UL slot pipelines around the coding core.

mod pipeline;
mod precode;
mod tdd;

pub use pipeline::{
    run_dl_slot, run_ul_slot, AntennaConfig, CellConfig, PipelineConfig, PrecodingCost, SlotRun, SlotTimingRecord,
    SyntheticCost, DL_BUDGET_US, UL_BUDGET_US,
};
pub use precode::{precode_and_map, PrecodeMode, ResourceGrid, WeightMatrix, PRB_CHUNK, SUBCARRIERS_PER_PRB, SYMBOLS_PER_SLOT};
pub use tdd::{tdd_slot_kind, SlotKind};
