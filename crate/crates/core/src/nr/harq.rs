//! Soft circular buffers and rate recovery with HARQ combining.

use serde::{Deserialize, Serialize};

use super::base_graph::BaseGraph;
use super::rate_match::{interleave_map, RateMatchParams};
use crate::error::{Error, Result};

/// Saturation level of the floating-point LLR domain.
pub const FLOAT_LLR_MAX: f32 = 1.0e4;
/// Saturation level of the 8-bit quantized LLR domain.
pub const QUANT_LLR_MAX: f32 = 127.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BufferLocation {
    Host,
    Device,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum LlrMode {
    #[default]
    Float,
    /// Values are rounded and clamped to `[-127, 127]` before and after
    /// every combination, as fixed-point accelerators do.
    Quantized8,
}

impl LlrMode {
    pub fn max(self) -> f32 {
        match self {
            LlrMode::Float => FLOAT_LLR_MAX,
            LlrMode::Quantized8 => QUANT_LLR_MAX,
        }
    }

    fn quantize(self, v: f32) -> f32 {
        match self {
            LlrMode::Float => v.clamp(-FLOAT_LLR_MAX, FLOAT_LLR_MAX),
            LlrMode::Quantized8 => v.round().clamp(-QUANT_LLR_MAX, QUANT_LLR_MAX),
        }
    }

    fn saturating_add(self, a: f32, b: f32) -> f32 {
        self.quantize(a + self.quantize(b))
    }
}

/// Accumulated LLRs of one code block's circular buffer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftBuffer {
    pub llrs: Vec<f32>,
    pub location: BufferLocation,
    pub harq_pid: u8,
    pub mode: LlrMode,
    pub base_graph: BaseGraph,
    pub lifting_size: usize,
    pub k_prime: usize,
}

impl SoftBuffer {
    /// Fresh buffer: zeros everywhere except filler, pinned to `+max`.
    pub fn new(params: &RateMatchParams, harq_pid: u8, location: BufferLocation, mode: LlrMode) -> Self {
        let mut llrs = vec![0.0; params.ncb];
        let filler = params.filler_range();
        for v in &mut llrs[filler.start.min(params.ncb)..filler.end.min(params.ncb)] {
            *v = mode.max();
        }
        SoftBuffer {
            llrs,
            location,
            harq_pid,
            mode,
            base_graph: params.base_graph,
            lifting_size: params.lifting_size,
            k_prime: params.k_prime,
        }
    }

    pub fn ncb(&self) -> usize {
        self.llrs.len()
    }

    fn matches(&self, params: &RateMatchParams) -> bool {
        self.llrs.len() == params.ncb
            && self.base_graph == params.base_graph
            && self.lifting_size == params.lifting_size
            && self.k_prime == params.k_prime
    }
}

/// De-interleaves `llrs`, maps them back to circular-buffer positions and
/// adds them into `buffer` with saturation.
pub fn rate_recover_and_combine(llrs: &[f32], params: &RateMatchParams, mut buffer: SoftBuffer) -> Result<SoftBuffer> {
    params.validate()?;
    if llrs.len() != params.e {
        return Err(Error::InvalidConfig(format!("{} LLRs received, E={}", llrs.len(), params.e)));
    }
    if !buffer.matches(params) {
        return Err(Error::InvalidConfig(format!(
            "soft buffer of {} LLRs does not match Ncb={} for {:?} Z={}",
            buffer.llrs.len(),
            params.ncb,
            params.base_graph,
            params.lifting_size
        )));
    }
    let mut selected = vec![0.0f32; params.e];
    for (k, src) in interleave_map(params.e, params.qm as usize).into_iter().enumerate() {
        selected[src] = llrs[k];
    }
    let mode = buffer.mode;
    for (pos, v) in params.selected_positions().into_iter().zip(selected) {
        buffer.llrs[pos] = mode.saturating_add(buffer.llrs[pos], v);
    }
    let filler = params.filler_range();
    let ncb = buffer.llrs.len();
    for v in &mut buffer.llrs[filler.start.min(ncb)..filler.end.min(ncb)] {
        *v = mode.max();
    }
    Ok(buffer)
}

/// Exact-confidence LLRs for a hard bit sequence (`0 -> +mag`, `1 -> -mag`).
pub fn bits_to_llrs(bits: &[u8], magnitude: f32) -> Vec<f32> {
    bits.iter().map(|&b| if b == 0 { magnitude } else { -magnitude }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(e: usize, rv: u8) -> RateMatchParams {
        let (graph, z) = (BaseGraph::BG2, 16);
        RateMatchParams { e, rv, qm: 2, ncb: graph.n(z), base_graph: graph, lifting_size: z, k_prime: graph.k(z) - 20 }
    }

    #[test]
    fn identical_transmissions_double() {
        let p = params(200, 0);
        let llrs: Vec<f32> = (0..200).map(|i| (i % 7) as f32 - 3.0).collect();
        let fresh = SoftBuffer::new(&p, 0, BufferLocation::Host, LlrMode::Float);
        let once = rate_recover_and_combine(&llrs, &p, fresh).unwrap();
        let twice = rate_recover_and_combine(&llrs, &p, once.clone()).unwrap();
        let filler = p.filler_range();
        for (i, (a, b)) in once.llrs.iter().zip(&twice.llrs).enumerate() {
            if !filler.contains(&i) {
                assert_eq!(*b, 2.0 * a);
            }
        }
    }

    #[test]
    fn untouched_positions_stay_zero() {
        let p = params(100, 0);
        let buf = rate_recover_and_combine(&[1.0; 100], &p, SoftBuffer::new(&p, 0, BufferLocation::Host, LlrMode::Float)).unwrap();
        assert!(buf.llrs[100..].iter().enumerate().all(|(i, &v)| v == 0.0 || p.filler_range().contains(&(i + 100))));
        assert!(buf.llrs[..100].iter().all(|&v| v == 1.0));
    }

    #[test]
    fn quantized_mode_saturates() {
        let p = params(100, 0);
        let mut buf = SoftBuffer::new(&p, 0, BufferLocation::Host, LlrMode::Quantized8);
        for _ in 0..3 {
            buf = rate_recover_and_combine(&[100.0; 100], &p, buf).unwrap();
        }
        assert!(buf.llrs[..100].iter().all(|&v| v == QUANT_LLR_MAX));
    }

    #[test]
    fn length_mismatch_rejected() {
        let p = params(100, 0);
        let buf = SoftBuffer::new(&p, 0, BufferLocation::Host, LlrMode::Float);
        assert!(rate_recover_and_combine(&[0.0; 99], &p, buf.clone()).is_err());
        let mut other = p;
        other.ncb -= 16;
        assert!(rate_recover_and_combine(&[0.0; 100], &other, buf).is_err());
    }
}
