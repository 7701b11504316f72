use std::sync::Arc;

use vranslot::backends::{create_device, emulated_device, BackendOptions, DeviceModels, EmulatedDevice, Jitter, ServiceTimeModel};
use vranslot::lpu::*;
use vranslot::nr::{BufferLocation, LlrMode};
use vranslot::Error;

const SHIPPED: [&str; 4] = ["t2", "acc100", "vran_boost", "software"];

fn shape_op(id: u64, kind: OpKind, harq: Option<HarqRef>) -> CodingOpDescriptor {
    CodingOpDescriptor {
        id,
        kind,
        granularity: Granularity::Cb,
        generation: InterfaceGeneration::PerCb,
        tb_start: true,
        payload: OpPayload::Shape { cbs: 1, info_bits: 8448 },
        harq,
        llr_mode: LlrMode::Float,
    }
}

/// Single engine, constant per-call time, no stalls.
fn fifo_device() -> EmulatedDevice {
    let m = ServiceTimeModel {
        fixed_per_call_us: 10.0,
        per_cb_us: 0.0,
        per_tb_us: 0.0,
        per_kbit_us: 0.0,
        parallel_servers: 1,
        jitter: Jitter::None,
        seed: 0,
    };
    EmulatedDevice::new(discover("t2").unwrap(), DeviceModels::uniform(m, m), Default::default()).unwrap()
}

#[test]
fn discovery_profiles() {
    let t2 = discover("t2").unwrap();
    assert!(t2.supports_cb_interface && !t2.supports_tb_interface && !t2.tb_required_when_single_cb && t2.internal_harq_memory);
    assert_eq!((t2.rated_ul_gbps, t2.rated_dl_gbps), (12.0, 35.0));
    let vb = discover("vran_boost").unwrap();
    assert!(vb.supports_cb_interface && vb.supports_tb_interface && vb.tb_required_when_single_cb && !vb.internal_harq_memory);
    let sw = discover("software").unwrap();
    assert!(sw.supports_cb_interface && sw.supports_tb_interface && !sw.tb_required_when_single_cb && !sw.internal_harq_memory);
    let acc = discover("acc100").unwrap();
    assert!(acc.internal_harq_memory && acc.tb_required_when_single_cb);
    assert!(matches!(discover("nope"), Err(Error::UnknownBackend(_))));
}

#[test]
fn routing_examples() {
    assert_eq!(route_interface(&discover("t2").unwrap(), 1).unwrap(), Granularity::Cb);
    assert_eq!(route_interface(&discover("vran_boost").unwrap(), 1).unwrap(), Granularity::Tb);
    assert_eq!(route_interface(&discover("vran_boost").unwrap(), 26).unwrap(), Granularity::Cb);
}

#[test]
fn routing_is_total_and_honors_flags() {
    for name in SHIPPED {
        let caps = discover(name).unwrap();
        for n in 1..=132 {
            match route_interface(&caps, n) {
                Ok(Granularity::Cb) => {
                    assert!(caps.supports_cb_interface);
                    assert!(!(n == 1 && caps.tb_required_when_single_cb), "{name}");
                }
                Ok(Granularity::Tb) => assert!(caps.supports_tb_interface),
                Err(Error::CapabilityMismatch(_)) => {}
                Err(e) => panic!("{name} {n}: {e}"),
            }
        }
    }
    assert!(matches!(route_interface(&discover("t2").unwrap(), 0), Err(Error::InvalidConfig(_))));
}

#[test]
fn queue_allocation() {
    let mut reg = DeviceRegistry::new();
    reg.register("t2", Arc::new(fifo_device()));
    let handles: Vec<QueueHandle> = (0..16).map(|i| reg.open_queue("t2", i).unwrap()).collect();
    assert_eq!(handles[0].queue_index, 0);
    let idx: std::collections::BTreeSet<usize> = handles.iter().map(|h| h.queue_index).collect();
    assert_eq!(idx.len(), 16);
    assert!(matches!(reg.open_queue("t2", 99), Err(Error::ResourceExhausted(_))));
    drop(handles);
    assert_eq!(reg.open_queue("t2", 99).unwrap().queue_index, 0);
    assert!(matches!(reg.open_queue("x", 0), Err(Error::UnknownBackend(_))));
}

#[test]
fn backpressure_and_conservation() {
    let mut reg = DeviceRegistry::new();
    reg.register("t2", Arc::new(fifo_device()));
    let mut h = reg.open_queue_with_depth("t2", 0, 4).unwrap();
    assert_eq!(enqueue(&mut h, &[]).unwrap(), 0);
    assert!(dequeue(&mut h, 10).is_empty());
    let ops: Vec<_> = (0..6).map(|i| shape_op(i, OpKind::Decode, None)).collect();
    assert_eq!(enqueue(&mut h, &ops).unwrap(), 4);
    assert_eq!(enqueue(&mut h, &ops[4..]).unwrap(), 0);
    let mut seen: Vec<u64> = dequeue(&mut h, 3).iter().map(|c| c.op_id).collect();
    assert_eq!(enqueue(&mut h, &ops[4..]).unwrap(), 2);
    while h.in_flight() > 0 {
        seen.extend(dequeue(&mut h, 2).iter().map(|c| c.op_id));
    }
    assert_eq!(seen, (0..6).collect::<Vec<_>>());
}

#[test]
fn single_engine_completes_in_enqueue_order() {
    let mut reg = DeviceRegistry::new();
    reg.register("t2", Arc::new(fifo_device()));
    let mut h = reg.open_queue("t2", 0).unwrap();
    let ops: Vec<_> = (0..20).map(|i| shape_op(100 + i, OpKind::Encode, None)).collect();
    for chunk in ops.chunks(3) {
        enqueue(&mut h, chunk).unwrap();
    }
    let done = dequeue(&mut h, 100);
    assert_eq!(done.iter().map(|c| c.op_id).collect::<Vec<_>>(), (100..120).collect::<Vec<_>>());
    assert!(done.windows(2).all(|w| w[0].completed_at_us <= w[1].completed_at_us));
}

#[test]
fn device_harq_token_needs_internal_memory() {
    let mut reg = DeviceRegistry::new();
    reg.register("vb", create_device("vran_boost", &BackendOptions::default()).unwrap());
    reg.register("t2", Arc::new(emulated_device("t2", &BackendOptions::default()).unwrap()));
    let token = HarqRef { ue_id: 3, harq_pid: 1, placement: BufferLocation::Device };
    let op = shape_op(1, OpKind::Decode, Some(token));
    let mut vb = reg.open_queue("vb", 0).unwrap();
    assert!(matches!(enqueue(&mut vb, std::slice::from_ref(&op)), Err(Error::CapabilityMismatch(_))));
    assert_eq!(vb.in_flight(), 0);
    let mut t2 = reg.open_queue("t2", 0).unwrap();
    assert_eq!(enqueue(&mut t2, &[op]).unwrap(), 1);
}

#[test]
fn cb_only_device_rejects_tb_ops() {
    let mut reg = DeviceRegistry::new();
    reg.register("t2", Arc::new(fifo_device()));
    let mut h = reg.open_queue("t2", 0).unwrap();
    let mut op = shape_op(1, OpKind::Encode, None);
    op.granularity = Granularity::Tb;
    assert!(matches!(enqueue(&mut h, &[op]), Err(Error::CapabilityMismatch(_))));
}
