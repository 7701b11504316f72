//! Accelerator abstraction: capability discovery, interface routing and
//! driver-style operation queues.

mod caps;
mod op;
mod queue;

pub use caps::{discover, route_interface, Granularity, LpuCapabilities, KNOWN_BACKENDS};
pub use op::{
    CodingOpDescriptor, Completion, HarqRef, InterfaceGeneration, OpKind, OpOutput, OpPayload, OpStatus,
};
pub use queue::{dequeue, enqueue, DeviceRegistry, LpuDevice, QueueHandle, DEFAULT_QUEUE_DEPTH};
