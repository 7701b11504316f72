//! Circular-buffer bit selection and bit interleaving.

use serde::{Deserialize, Serialize};

use super::base_graph::BaseGraph;
use super::segment::SegmentationPlan;
use crate::error::{Error, Result};

/// Upper bound on `E` as a multiple of the circular buffer length.
pub const MAX_E_PER_NCB: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RateMatchParams {
    /// Output bits for this code block.
    pub e: usize,
    pub rv: u8,
    pub qm: u32,
    pub ncb: usize,
    pub base_graph: BaseGraph,
    pub lifting_size: usize,
    /// Information bits before filler (filler occupies `k_prime..K`).
    pub k_prime: usize,
}

impl RateMatchParams {
    /// Parameters for one code block of `plan` with a full-size buffer.
    pub fn for_plan(plan: &SegmentationPlan, e: usize, rv: u8, qm: u32) -> Self {
        RateMatchParams {
            e,
            rv,
            qm,
            ncb: plan.codeword_len(),
            base_graph: plan.base_graph,
            lifting_size: plan.lifting_size,
            k_prime: plan.k_prime,
        }
    }

    /// Filler bit positions in the transmitted (punctured) codeword.
    pub fn filler_range(&self) -> std::ops::Range<usize> {
        let z2 = 2 * self.lifting_size;
        self.k_prime - z2..self.base_graph.k(self.lifting_size) - z2
    }

    /// Non-filler positions of the circular buffer.
    pub fn readable_bits(&self) -> usize {
        let f = self.filler_range();
        self.ncb - f.end.min(self.ncb).saturating_sub(f.start.min(self.ncb))
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.base_graph.n(self.lifting_size);
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.e == 0 {
            return bad("E must be positive".into());
        }
        if ![2, 4, 6, 8].contains(&self.qm) {
            return bad(format!("modulation order {} not in {{2,4,6,8}}", self.qm));
        }
        if self.e % self.qm as usize != 0 {
            return bad(format!("E={} not a multiple of Qm={}", self.e, self.qm));
        }
        if self.rv > 3 {
            return bad(format!("redundancy version {} outside 0..=3", self.rv));
        }
        if self.ncb == 0 || self.ncb > n {
            return bad(format!("Ncb={} outside 1..={n}", self.ncb));
        }
        if self.k_prime < 2 * self.lifting_size || self.k_prime > self.base_graph.k(self.lifting_size) {
            return bad(format!("K'={} inconsistent with Z={}", self.k_prime, self.lifting_size));
        }
        if self.e > MAX_E_PER_NCB * self.ncb {
            return bad(format!("E={} exceeds {}*Ncb", self.e, MAX_E_PER_NCB));
        }
        if self.readable_bits() == 0 {
            return bad("circular buffer holds only filler".into());
        }
        Ok(())
    }

    /// Starting position of the read for the configured redundancy version.
    pub fn k0(&self) -> usize {
        let z = self.lifting_size;
        let (num, den) = match (self.base_graph, self.rv) {
            (_, 0) => return 0,
            (BaseGraph::BG1, 1) => (17, 66),
            (BaseGraph::BG1, 2) => (33, 66),
            (BaseGraph::BG1, _) => (56, 66),
            (BaseGraph::BG2, 1) => (13, 50),
            (BaseGraph::BG2, 2) => (25, 50),
            (BaseGraph::BG2, _) => (43, 50),
        };
        (num * self.ncb / (den * z)) * z
    }

    /// Codeword position read for each of the `E` selected bits, before
    /// interleaving.
    pub fn selected_positions(&self) -> Vec<usize> {
        let filler = self.filler_range();
        let mut out = Vec::with_capacity(self.e);
        let mut idx = self.k0() % self.ncb;
        while out.len() < self.e {
            if !filler.contains(&idx) {
                out.push(idx);
            }
            idx += 1;
            if idx == self.ncb {
                idx = 0;
            }
        }
        out
    }
}

/// Bits per code block for `g` coded bits split over `num_cbs` blocks.
pub fn cb_output_sizes(g: usize, num_cbs: usize, qm: u32, layers: u32) -> Vec<usize> {
    let unit = (qm * layers) as usize;
    let g_prime = g / unit;
    let small = num_cbs - g_prime % num_cbs;
    (0..num_cbs)
        .map(|r| {
            if r < small {
                unit * (g_prime / num_cbs)
            } else {
                unit * g_prime.div_ceil(num_cbs)
            }
        })
        .collect()
}

/// Index map of the bit interleaver: output `k` takes selected bit `map[k]`.
pub fn interleave_map(e: usize, qm: usize) -> Vec<usize> {
    let rows = e / qm;
    let mut map = vec![0; e];
    for j in 0..rows {
        for i in 0..qm {
            map[i + j * qm] = i * rows + j;
        }
    }
    map
}

/// Selects and interleaves `E` bits of `codeword` (length `N`). Generic over
/// the element so that position labels can be traced through the mapping.
pub fn rate_match<T: Copy>(codeword: &[T], params: &RateMatchParams) -> Result<Vec<T>> {
    params.validate()?;
    let n = params.base_graph.n(params.lifting_size);
    if codeword.len() != n {
        return Err(Error::InvalidConfig(format!("codeword has {} bits, expected {n}", codeword.len())));
    }
    let selected: Vec<T> = params.selected_positions().iter().map(|&p| codeword[p]).collect();
    Ok(interleave_map(params.e, params.qm as usize)
        .into_iter()
        .map(|k| selected[k])
        .collect())
}
