use std::sync::Arc;
use std::time::Instant;

use num_complex::Complex32;
use proptest::prelude::*;

use vranslot::backends::{create_device, BackendOptions};
use vranslot::highphy::*;
use vranslot::lpu::DeviceRegistry;
use vranslot::metrics::{export_records, Direction};
use vranslot::nr::harq::bits_to_llrs;
use vranslot::nr::{encode_tb, McsTable};
use vranslot::slot_api::{JobData, SlotExecutor, TransportBlockJob};
use vranslot::Error;

mod common;
use common::naive_precode;

const MODES: [PrecodeMode; 6] = [
    PrecodeMode::Vector,
    PrecodeMode::Workers(1),
    PrecodeMode::Workers(4),
    PrecodeMode::Workers(8),
    PrecodeMode::Workers(14),
    PrecodeMode::Workers(15),
];

fn executor(backend: &str) -> SlotExecutor {
    let mut reg = DeviceRegistry::new();
    reg.register(backend, create_device(backend, &BackendOptions::default()).unwrap());
    SlotExecutor::new(reg.open_queue(backend, 0).unwrap())
}

fn job(layers: u32, mcs: u32, table: McsTable, data: JobData) -> TransportBlockJob {
    TransportBlockJob { ue_id: 0, data, mcs_index: mcs, mcs_table: table, layers, rv: 0, harq_pid: 0, prb_share: 273 }
}

#[test]
fn tdd_examples() {
    assert_eq!(tdd_slot_kind(0, "DDDSU").unwrap(), SlotKind::D);
    assert_eq!(tdd_slot_kind(3, "DDDSU").unwrap(), SlotKind::S);
    assert_eq!(tdd_slot_kind(9, "DDDSU").unwrap(), SlotKind::U);
    assert!(tdd_slot_kind(0, "").is_err());
    CellConfig::default().validate().unwrap();
    let bad = CellConfig { tti_us: 1000, ..CellConfig::default() };
    assert!(bad.validate().is_err());
}

#[test]
fn matches_naive_oracle_bit_for_bit() {
    for seed in 0..5 {
        let x = ResourceGrid::random(SYMBOLS_PER_SLOT, 4, 273, seed);
        let w = WeightMatrix::random(4, 4, seed + 100);
        let want = naive_precode(&x, &w);
        for mode in [PrecodeMode::Scalar, PrecodeMode::Vector, PrecodeMode::Workers(4)] {
            let got = precode_and_map(&x, &w, mode).unwrap();
            assert!(got.as_slice().iter().zip(&want).all(|(a, b)| a.re.to_bits() == b.re.to_bits() && a.im.to_bits() == b.im.to_bits()));
        }
    }
}

#[test]
fn modes_agree_for_100_seeds() {
    for seed in 0..100u64 {
        let layers = 1 + (seed % 4) as usize;
        let x = ResourceGrid::random(SYMBOLS_PER_SLOT, layers, 273, seed);
        let w = WeightMatrix::random(4, layers, !seed);
        let scalar = precode_and_map(&x, &w, PrecodeMode::Scalar).unwrap();
        for mode in MODES {
            assert_eq!(precode_and_map(&x, &w, mode).unwrap(), scalar, "seed {seed} {mode:?}");
        }
    }
}

#[test]
fn identity_and_dimension_checks() {
    let x = ResourceGrid::random(SYMBOLS_PER_SLOT, 1, 273, 3);
    assert_eq!(precode_and_map(&x, &WeightMatrix::identity(1), PrecodeMode::Workers(8)).unwrap(), x);
    let w = WeightMatrix::random(4, 2, 1);
    assert!(matches!(precode_and_map(&x, &w, PrecodeMode::Scalar), Err(Error::DimensionMismatch(_))));
    assert!(precode_and_map(&x, &WeightMatrix::identity(1), PrecodeMode::Workers(0)).is_err());
    assert!(WeightMatrix::new(2, 2, vec![Complex32::new(1.0, 0.0); 3]).is_err());
}

#[test]
fn worker_scaling() {
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    if cores < 4 {
        eprintln!("worker scaling skipped: {cores} core(s)");
        return;
    }
    let x = ResourceGrid::random(SYMBOLS_PER_SLOT, 4, 273, 1);
    let w = WeightMatrix::random(4, 4, 2);
    let time = |mode| {
        precode_and_map(&x, &w, mode).unwrap();
        let t = Instant::now();
        for _ in 0..20 {
            precode_and_map(&x, &w, mode).unwrap();
        }
        t.elapsed()
    };
    let scalar = time(PrecodeMode::Scalar);
    let workers = time(PrecodeMode::Workers(4));
    assert!(workers.as_secs_f64() <= 0.67 * scalar.as_secs_f64(), "{workers:?} vs {scalar:?}");
}

#[test]
fn dl_slot_accounting() {
    let cell = CellConfig::default();
    let cfg = PipelineConfig::default();
    let mut exec = executor("t2-emulated");
    let j = job(4, 27, McsTable::T2, JobData::Shape);
    let params = j.coding_params(cfg.symbols, cfg.overhead).unwrap();
    let payload: Vec<u8> = (0..params.tb_size_bits()).map(|i| (i % 3 == 0) as u8).collect();
    let run = run_dl_slot(&cell, &cfg, 0, 0, 0.0, vec![job(4, 27, McsTable::T2, JobData::Bits(Arc::new(payload)))], &mut exec).unwrap();
    let r = &run.record;
    assert_eq!(r.total_us, r.coding_us + r.precoding_us + r.other_us);
    assert!(r.coding_us > 0.0 && r.precoding_us > 0.0 && r.other_us > 0.0);
    assert_eq!(r.deadline_met, r.total_us <= r.budget_us);
    let ports = run.ports.unwrap();
    assert_eq!((ports.streams(), ports.subcarriers()), (4, 273 * 12));
    assert!(ports.is_finite());

    let zero = PipelineConfig { dl_budget_us: 0.0, ..PipelineConfig::default() };
    let r = run_dl_slot(&cell, &zero, 0, 3, 1000.0, vec![job(4, 27, McsTable::T2, JobData::Shape)], &mut exec).unwrap().record;
    assert_eq!(r.kind, SlotKind::S);
    assert!(!r.deadline_met);
    assert!(matches!(
        run_dl_slot(&cell, &cfg, 0, 4, 2000.0, vec![job(4, 27, McsTable::T2, JobData::Shape)], &mut exec),
        Err(Error::WrongSlotKind { slot: 4, .. })
    ));
}

#[test]
fn ul_slot_decodes_and_times() {
    let cell = CellConfig::default();
    let cfg = PipelineConfig { symbols: 13, overhead: 24, ..PipelineConfig::default() };
    let mut exec = executor("t2-emulated");
    let shape = job(2, 16, McsTable::T2, JobData::Shape);
    let params = shape.coding_params(cfg.symbols, cfg.overhead).unwrap();
    assert_eq!(params.tb_size_bits(), 303_240);
    let payload: Vec<u8> = (0..params.tb_size_bits()).map(|i| (i % 5 == 1) as u8).collect();
    let llrs: Vec<Vec<f32>> = encode_tb(&payload, &params).unwrap().iter().map(|b| bits_to_llrs(b, 8.0)).collect();
    let run = run_ul_slot(&cell, &cfg, 0, 4, 2000.0, vec![job(2, 16, McsTable::T2, JobData::Llrs(Arc::new(llrs)))], &mut exec).unwrap();
    assert_eq!((run.record.tbs, run.record.tbs_crc_ok), (1, 1));
    assert_eq!(run.coding.jobs[0].decoded.as_ref().unwrap().payload, payload);
    assert_eq!(run.record.direction, Direction::Ul);
    assert_eq!(run.record.other_us, cfg.ul_front.sample(cfg.seed, 0, 4));
    assert!(matches!(
        run_ul_slot(&cell, &cfg, 0, 0, 0.0, vec![job(2, 16, McsTable::T2, JobData::Shape)], &mut exec),
        Err(Error::WrongSlotKind { slot: 0, .. })
    ));
}

#[test]
fn records_export_as_json_lines() {
    let cell = CellConfig::default();
    let cfg = PipelineConfig::default();
    let mut exec = executor("t2-emulated");
    let mut records = Vec::new();
    for slot in 0..3 {
        let run = run_dl_slot(&cell, &cfg, 2, slot, slot as f64 * 500.0, vec![job(1, 10, McsTable::T1, JobData::Shape)], &mut exec);
        records.push(run.unwrap().record);
    }
    let mut buf = Vec::new();
    export_records(&records, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let back: Vec<SlotTimingRecord> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(back, records);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn precoding_is_linear(seed in any::<u64>(), ar in -2.0f32..2.0, ai in -2.0f32..2.0, br in -2.0f32..2.0, bi in -2.0f32..2.0) {
        let (a, b) = (Complex32::new(ar, ai), Complex32::new(br, bi));
        let x = ResourceGrid::random(SYMBOLS_PER_SLOT, 4, 20, seed);
        let y = ResourceGrid::random(SYMBOLS_PER_SLOT, 4, 20, seed ^ 1);
        let w = WeightMatrix::random(4, 4, seed ^ 2);
        let lhs = precode_and_map(&x.combine(a, &y, b), &w, PrecodeMode::Vector).unwrap();
        let rhs = precode_and_map(&x, &w, PrecodeMode::Vector).unwrap().combine(a, &precode_and_map(&y, &w, PrecodeMode::Vector).unwrap(), b);
        let scale = rhs.as_slice().iter().map(|v| v.norm()).fold(1.0f32, f32::max);
        for (l, r) in lhs.as_slice().iter().zip(rhs.as_slice()) {
            prop_assert!((l - r).norm() <= 1e-5 * scale, "{l} vs {r}");
        }
    }

    #[test]
    fn deadline_flag_is_exact(budget in 0.0f64..3000.0, slot in 0u64..200) {
        let cell = CellConfig::default();
        let cfg = PipelineConfig { dl_budget_us: budget, ul_budget_us: budget, ..PipelineConfig::default() };
        let mut exec = executor("t2-emulated");
        let kind = cell.slot_kind(slot).unwrap();
        let record = if kind == SlotKind::U {
            run_ul_slot(&cell, &cfg, 1, slot, 0.0, vec![job(1, 5, McsTable::T1, JobData::Shape)], &mut exec).unwrap().record
        } else {
            run_dl_slot(&cell, &cfg, 1, slot, 0.0, vec![job(1, 5, McsTable::T1, JobData::Shape)], &mut exec).unwrap().record
        };
        prop_assert_eq!(record.deadline_met, record.total_us <= budget);
        prop_assert_eq!(record.total_us, record.coding_us + record.precoding_us + record.other_us);
    }
}
