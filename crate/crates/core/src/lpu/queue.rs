use std::collections::BTreeMap;
use std::fmt;
use std::sync::{Arc, Mutex};

use super::caps::{Granularity, LpuCapabilities};
use super::op::{CodingOpDescriptor, Completion};
use crate::error::{Error, Result};
use crate::nr::harq::BufferLocation;

pub const DEFAULT_QUEUE_DEPTH: usize = 128;

/// A device reachable through driver-style queues. Implementations are
/// internally synchronized; each queue has a single producer/consumer.
pub trait LpuDevice: Send + Sync + fmt::Debug {
    fn capabilities(&self) -> &LpuCapabilities;

    /// Wall-clock reading in µs for real-time devices, `None` for devices
    /// driven by the caller's virtual clock.
    fn now_us(&self) -> Option<f64>;

    /// Takes ownership of `ops` on `queue`, submitted at `now_us`.
    fn submit(&self, queue: usize, owner: u32, now_us: f64, ops: Vec<CodingOpDescriptor>) -> Result<()>;

    /// Up to `max` finished operations of `queue`, in completion order.
    fn poll(&self, queue: usize, max: usize) -> Vec<Completion>;

    /// Drops all state of `queue` when its handle is closed.
    fn release(&self, queue: usize);
}

struct Registered {
    device: Arc<dyn LpuDevice>,
    owners: Mutex<Vec<Option<u32>>>,
}

/// Devices by identifier, with queue ownership bookkeeping.
#[derive(Default, Clone)]
pub struct DeviceRegistry {
    devices: BTreeMap<String, Arc<Registered>>,
}

impl fmt::Debug for DeviceRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DeviceRegistry").field("devices", &self.devices.keys().collect::<Vec<_>>()).finish()
    }
}

impl DeviceRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, id: impl Into<String>, device: Arc<dyn LpuDevice>) {
        let queues = device.capabilities().num_queues;
        self.devices.insert(id.into(), Arc::new(Registered { device, owners: Mutex::new(vec![None; queues]) }));
    }

    pub fn device(&self, id: &str) -> Result<Arc<dyn LpuDevice>> {
        self.devices
            .get(id)
            .map(|r| Arc::clone(&r.device))
            .ok_or_else(|| Error::UnknownBackend(id.to_string()))
    }

    /// Allocates the lowest free queue of `device_id` to `instance`.
    pub fn open_queue(&self, device_id: &str, instance: u32) -> Result<QueueHandle> {
        self.open_queue_with_depth(device_id, instance, DEFAULT_QUEUE_DEPTH)
    }

    pub fn open_queue_with_depth(&self, device_id: &str, instance: u32, depth: usize) -> Result<QueueHandle> {
        if depth == 0 {
            return Err(Error::InvalidConfig("queue depth must be positive".into()));
        }
        let reg = self.devices.get(device_id).ok_or_else(|| Error::UnknownBackend(device_id.to_string()))?;
        let mut owners = reg.owners.lock().expect("queue table poisoned");
        let index = owners
            .iter()
            .position(Option::is_none)
            .ok_or_else(|| Error::ResourceExhausted(format!("all {} queues of `{device_id}` are open", owners.len())))?;
        owners[index] = Some(instance);
        Ok(QueueHandle {
            device_id: device_id.to_string(),
            queue_index: index,
            depth,
            owner: instance,
            clock_us: 0.0,
            in_flight: 0,
            reg: Arc::clone(reg),
        })
    }
}

/// Exclusive handle on one device queue. Dropping it frees the queue.
pub struct QueueHandle {
    pub device_id: String,
    pub queue_index: usize,
    pub depth: usize,
    pub owner: u32,
    clock_us: f64,
    in_flight: usize,
    reg: Arc<Registered>,
}

impl fmt::Debug for QueueHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("QueueHandle")
            .field("device_id", &self.device_id)
            .field("queue_index", &self.queue_index)
            .field("depth", &self.depth)
            .field("owner", &self.owner)
            .field("in_flight", &self.in_flight)
            .finish()
    }
}

impl QueueHandle {
    pub fn capabilities(&self) -> &LpuCapabilities {
        self.reg.device.capabilities()
    }

    pub fn is_virtual(&self) -> bool {
        self.reg.device.now_us().is_none()
    }

    /// Current time on the queue's clock, in µs.
    pub fn now_us(&self) -> f64 {
        self.reg.device.now_us().unwrap_or(self.clock_us)
    }

    /// Moves the virtual clock; ignored by wall-clock devices.
    pub fn set_clock(&mut self, now_us: f64) {
        self.clock_us = now_us;
    }

    pub fn in_flight(&self) -> usize {
        self.in_flight
    }
}

impl Drop for QueueHandle {
    fn drop(&mut self) {
        self.reg.device.release(self.queue_index);
        if let Ok(mut owners) = self.reg.owners.lock() {
            owners[self.queue_index] = None;
        }
    }
}

fn check_op(caps: &LpuCapabilities, op: &CodingOpDescriptor) -> Result<()> {
    if let Some(h) = op.harq {
        if h.placement == BufferLocation::Device && !caps.internal_harq_memory {
            return Err(Error::CapabilityMismatch(format!(
                "{} has no internal HARQ memory (op {}, ue {}, process {})",
                caps.name, op.id, h.ue_id, h.harq_pid
            )));
        }
    }
    let allowed = match op.granularity {
        Granularity::Cb => caps.supports_cb_interface,
        Granularity::Tb => caps.supports_tb_interface,
    };
    if !allowed {
        return Err(Error::CapabilityMismatch(format!("{} does not offer the {:?} interface", caps.name, op.granularity)));
    }
    Ok(())
}

/// Submits as many of `ops` as the queue has room for, in order, and
/// returns how many were accepted. Nothing is accepted if any operation
/// violates the device's capabilities.
pub fn enqueue(handle: &mut QueueHandle, ops: &[CodingOpDescriptor]) -> Result<usize> {
    let caps = handle.capabilities();
    for op in ops {
        check_op(caps, op)?;
    }
    let accepted = ops.len().min(handle.depth - handle.in_flight);
    if accepted == 0 {
        return Ok(0);
    }
    let now = handle.now_us();
    handle
        .reg
        .device
        .submit(handle.queue_index, handle.owner, now, ops[..accepted].to_vec())?;
    handle.in_flight += accepted;
    Ok(accepted)
}

/// Collects up to `max` completed operations.
pub fn dequeue(handle: &mut QueueHandle, max: usize) -> Vec<Completion> {
    let done = handle.reg.device.poll(handle.queue_index, max);
    handle.in_flight -= done.len();
    done
}
