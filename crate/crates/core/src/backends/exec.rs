//! Functional execution of coding operations, shared by all backends.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::lpu::{CodingOpDescriptor, OpOutput, OpPayload, OpStatus};
use crate::nr::decoder::ldpc_decode;
use crate::nr::harq::{rate_recover_and_combine, BufferLocation, SoftBuffer};
use crate::nr::tb::{encode_cb, encode_tb, recover_tb};

/// Device-resident soft buffers, keyed by (owner, UE, HARQ process, CB).
#[derive(Debug, Default)]
pub(crate) struct HarqMemory {
    buffers: HashMap<(u32, u32, u8, usize), SoftBuffer>,
}

impl HarqMemory {
    fn key(owner: u32, op: &CodingOpDescriptor, cb: usize) -> Option<(u32, u32, u8, usize)> {
        op.harq
            .filter(|h| h.placement == BufferLocation::Device)
            .map(|h| (owner, h.ue_id, h.harq_pid, cb))
    }

    /// Stored buffers an operation combines into, if it uses device memory.
    pub(crate) fn fetch(&self, owner: u32, op: &CodingOpDescriptor) -> Option<Vec<SoftBuffer>> {
        let cbs: Vec<usize> = match &op.payload {
            OpPayload::DecodeCb { cb_index, .. } => vec![*cb_index],
            OpPayload::DecodeTb { params, .. } => (0..params.num_cbs()).collect(),
            _ => return None,
        };
        cbs.into_iter()
            .map(|cb| Self::key(owner, op, cb).and_then(|k| self.buffers.get(&k).cloned()))
            .collect()
    }

    pub(crate) fn store(&mut self, owner: u32, op: &CodingOpDescriptor, buffers: Vec<SoftBuffer>) {
        let first = match &op.payload {
            OpPayload::DecodeCb { cb_index, .. } => *cb_index,
            _ => 0,
        };
        for (i, b) in buffers.into_iter().enumerate() {
            if let Some(k) = Self::key(owner, op, first + i) {
                self.buffers.insert(k, b);
            }
        }
    }
}

/// Result of running one operation: status, output, and the soft buffers
/// a device with internal memory keeps.
pub(crate) struct Executed {
    pub status: OpStatus,
    pub output: OpOutput,
    pub device_buffers: Option<Vec<SoftBuffer>>,
}

fn missing(op: &CodingOpDescriptor) -> Executed {
    let (ue_id, harq_pid) = op.harq.map(|h| (h.ue_id, h.harq_pid)).unwrap_or((0, 0));
    Executed { status: OpStatus::HarqMissing { ue_id, harq_pid }, output: OpOutput::TimingOnly, device_buffers: None }
}

/// Runs `op`. `device_prior` holds buffers fetched from device memory.
pub(crate) fn execute(op: &CodingOpDescriptor, device_prior: Option<Vec<SoftBuffer>>) -> Executed {
    match try_execute(op, device_prior) {
        Ok(e) => e,
        Err(Error::HarqBufferMissing { .. }) => missing(op),
        Err(e) => Executed { status: OpStatus::Failed(e.to_string()), output: OpOutput::TimingOnly, device_buffers: None },
    }
}

fn on_device(op: &CodingOpDescriptor) -> bool {
    op.harq.is_some_and(|h| h.placement == BufferLocation::Device)
}

fn try_execute(op: &CodingOpDescriptor, device_prior: Option<Vec<SoftBuffer>>) -> Result<Executed> {
    let missing_err = || Error::HarqBufferMissing { ue_id: 0, harq_pid: 0 };
    let location = if on_device(op) { BufferLocation::Device } else { BufferLocation::Host };
    let pid = op.harq.map_or(0, |h| h.harq_pid);
    let (outputs, buffers) = match &op.payload {
        OpPayload::EncodeCb { cb, rate_match } => {
            let bits = encode_cb(cb, rate_match)?;
            return Ok(Executed { status: OpStatus::Ok, output: OpOutput::Encoded(vec![bits]), device_buffers: None });
        }
        OpPayload::EncodeTb { payload, params } => {
            let bits = encode_tb(payload, params)?;
            return Ok(Executed { status: OpStatus::Ok, output: OpOutput::Encoded(bits), device_buffers: None });
        }
        OpPayload::Shape { .. } => {
            return Ok(Executed { status: OpStatus::Ok, output: OpOutput::TimingOnly, device_buffers: None });
        }
        OpPayload::DecodeCb { llrs, params, cb_index, prior, max_iters } => {
            let rm = params.cb_params(*cb_index);
            let start = if params.rv == 0 {
                SoftBuffer::new(&rm, pid, location, op.llr_mode)
            } else {
                let p = if on_device(op) { device_prior.and_then(|mut v| v.pop()) } else { prior.clone() };
                p.ok_or_else(missing_err)?
            };
            let buf = rate_recover_and_combine(llrs, &rm, start)?;
            let out = ldpc_decode(&buf, &params.plan, *max_iters)?;
            (vec![out], vec![buf])
        }
        OpPayload::DecodeTb { llrs, params, prior, max_iters } => {
            let start = if params.rv == 0 {
                None
            } else {
                let p = if on_device(op) { device_prior } else { prior.clone() };
                Some(p.ok_or_else(missing_err)?)
            };
            let bufs = recover_tb(llrs, params, start, pid, location, op.llr_mode)?;
            let outs = bufs
                .iter()
                .map(|b| ldpc_decode(b, &params.plan, *max_iters))
                .collect::<Result<Vec<_>>>()?;
            (outs, bufs)
        }
    };
    Ok(if on_device(op) {
        Executed { status: OpStatus::Ok, output: OpOutput::Decoded { outputs, buffers: None }, device_buffers: Some(buffers) }
    } else {
        Executed { status: OpStatus::Ok, output: OpOutput::Decoded { outputs, buffers: Some(buffers) }, device_buffers: None }
    })
}
