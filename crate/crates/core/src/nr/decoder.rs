//! Flooding normalized min-sum LDPC decoding.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock, RwLock};

use serde::{Deserialize, Serialize};

use super::base_graph::{lifted_graph, BaseGraph};
use super::crc::{crc_check, CrcKind};
use super::harq::SoftBuffer;
use super::segment::{SegmentationPlan, CB_CRC_LEN};
use crate::error::{Error, Result};

pub const DEFAULT_MAX_ITERS: u32 = 8;
pub const NORMALIZATION: f32 = 0.75;

/// Lifted parity-check matrix in compressed check-major form.
#[derive(Debug)]
struct Tanner {
    num_vars: usize,
    check_ptr: Vec<u32>,
    edge_var: Vec<u32>,
}

fn tanner(graph: BaseGraph, z: usize) -> Result<Arc<Tanner>> {
    static CACHE: OnceLock<RwLock<HashMap<(BaseGraph, usize), Arc<Tanner>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(t) = cache.read().expect("tanner cache poisoned").get(&(graph, z)) {
        return Ok(Arc::clone(t));
    }
    let g = lifted_graph(graph, z)?;
    let mut check_ptr = Vec::with_capacity(g.num_checks() + 1);
    let mut edge_var = Vec::with_capacity(g.edges());
    check_ptr.push(0);
    for row in &g.rows {
        for r in 0..z {
            for &(c, s) in row {
                edge_var.push((c * z + (r + s) % z) as u32);
            }
            check_ptr.push(edge_var.len() as u32);
        }
    }
    let t = Arc::new(Tanner { num_vars: g.num_vars(), check_ptr, edge_var });
    cache.write().expect("tanner cache poisoned").insert((graph, z), Arc::clone(&t));
    Ok(t)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecodeOutput {
    /// Transport-block bits carried by the code block (CB CRC removed).
    pub payload: Vec<u8>,
    pub crc_ok: bool,
    pub iterations_used: u32,
}

impl Tanner {
    fn syndrome_ok(&self, hard: &[u8]) -> bool {
        self.check_ptr.windows(2).all(|w| {
            self.edge_var[w[0] as usize..w[1] as usize]
                .iter()
                .fold(0u8, |acc, &v| acc ^ hard[v as usize])
                == 0
        })
    }
}

/// Decodes one code block from its soft buffer.
///
/// Punctured systematic columns start at zero confidence, filler columns at
/// `+max`. Iteration stops as soon as the hard decision satisfies every
/// parity check; `crc_ok` then reflects the CB CRC when the transport block
/// is segmented and the parity verdict otherwise (the TB CRC is checked
/// after reassembly).
pub fn ldpc_decode(buffer: &SoftBuffer, plan: &SegmentationPlan, max_iters: u32) -> Result<DecodeOutput> {
    if buffer.base_graph != plan.base_graph || buffer.lifting_size != plan.lifting_size || buffer.k_prime != plan.k_prime {
        return Err(Error::InvalidConfig("soft buffer does not belong to this segmentation".into()));
    }
    let z = plan.lifting_size;
    let t = tanner(plan.base_graph, z)?;
    let max = buffer.mode.max();
    let mut channel = vec![0.0f32; t.num_vars];
    channel[2 * z..2 * z + buffer.llrs.len()].copy_from_slice(&buffer.llrs);
    for v in &mut channel[plan.k_prime..plan.k] {
        *v = max;
    }

    let mut c2v = vec![0.0f32; t.edge_var.len()];
    let mut total = channel.clone();
    let mut hard = vec![0u8; t.num_vars];
    let mut iterations = 0;
    let mut parity_ok;
    loop {
        for (h, &l) in hard.iter_mut().zip(&total) {
            *h = u8::from(l < 0.0);
        }
        parity_ok = t.syndrome_ok(&hard);
        if parity_ok || iterations == max_iters {
            break;
        }
        iterations += 1;
        for w in t.check_ptr.windows(2) {
            let (lo, hi) = (w[0] as usize, w[1] as usize);
            let (mut min1, mut min2, mut arg) = (f32::INFINITY, f32::INFINITY, lo);
            let mut negative = false;
            for e in lo..hi {
                let m = total[t.edge_var[e] as usize] - c2v[e];
                negative ^= m < 0.0;
                let a = m.abs();
                if a < min1 {
                    min2 = min1;
                    min1 = a;
                    arg = e;
                } else if a < min2 {
                    min2 = a;
                }
            }
            for e in lo..hi {
                let m = total[t.edge_var[e] as usize] - c2v[e];
                let mag = NORMALIZATION * if e == arg { min2 } else { min1 };
                // Sign of the product over all other edges.
                let sign_neg = negative ^ (m < 0.0);
                c2v[e] = if sign_neg { -mag } else { mag };
            }
        }
        total.copy_from_slice(&channel);
        for (e, &v) in t.edge_var.iter().enumerate() {
            total[v as usize] += c2v[e];
        }
    }

    let info = &hard[..plan.k_prime];
    let (payload, crc_ok) = if plan.cb_crc_present {
        (info[..plan.k_prime - CB_CRC_LEN].to_vec(), parity_ok && crc_check(info, CrcKind::Crc24B))
    } else {
        (info.to_vec(), parity_ok)
    };
    Ok(DecodeOutput { payload, crc_ok, iterations_used: iterations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nr::encoder::ldpc_encode;
    use crate::nr::harq::{bits_to_llrs, rate_recover_and_combine, BufferLocation, LlrMode};
    use crate::nr::rate_match::{rate_match, RateMatchParams};
    use crate::nr::segment::{segment_bits, segment_tb};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn soft_from(codeword: &[u8], p: &RateMatchParams, flips: &[usize]) -> SoftBuffer {
        let mut tx = rate_match(codeword, p).unwrap();
        for &f in flips {
            tx[f] ^= 1;
        }
        let llrs = bits_to_llrs(&tx, 4.0);
        rate_recover_and_combine(&llrs, p, SoftBuffer::new(p, 0, BufferLocation::Host, LlrMode::Float)).unwrap()
    }

    #[test]
    fn noiseless_round_trip_with_cb_crc() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let payload: Vec<u8> = (0..12_000).map(|_| rng.random_range(0..2u8)).collect();
        let plan = segment_tb(payload.len(), 0.7).unwrap();
        let cbs = segment_bits(&payload, &plan).unwrap();
        assert!(plan.cb_crc_present);
        for cb in &cbs {
            let cw = ldpc_encode(cb).unwrap();
            let mut p = RateMatchParams::for_plan(&plan, 2, 0, 2);
            p.e = p.readable_bits().next_multiple_of(2);
            let out = ldpc_decode(&soft_from(&cw, &p, &[]), &plan, DEFAULT_MAX_ITERS).unwrap();
            assert!(out.crc_ok);
            assert!(out.iterations_used <= 2);
            assert_eq!(out.payload, cb.bits[..plan.cb_data_bits()]);
        }
    }

    #[test]
    fn corrects_a_few_flips() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let payload: Vec<u8> = (0..9_000).map(|_| rng.random_range(0..2u8)).collect();
        let plan = segment_tb(payload.len(), 0.5).unwrap();
        let cb = &segment_bits(&payload, &plan).unwrap()[0];
        let cw = ldpc_encode(cb).unwrap();
        let p = RateMatchParams::for_plan(&plan, plan.k_prime * 2, 0, 2);
        let flips: Vec<usize> = (0..20).map(|i| i * 397 % p.e).collect();
        let out = ldpc_decode(&soft_from(&cw, &p, &flips), &plan, DEFAULT_MAX_ITERS).unwrap();
        assert!(out.crc_ok);
        assert_eq!(out.payload, cb.bits[..plan.cb_data_bits()]);
    }

    #[test]
    fn random_llrs_fail_crc() {
        let plan = segment_tb(20_000, 0.8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..5 {
            let p = RateMatchParams::for_plan(&plan, (plan.k_prime + 200) / 2 * 2, 0, 2);
            let llrs: Vec<f32> = (0..p.e).map(|_| rng.random_range(-5.0..5.0)).collect();
            let buf = rate_recover_and_combine(&llrs, &p, SoftBuffer::new(&p, 0, BufferLocation::Host, LlrMode::Float)).unwrap();
            assert!(!ldpc_decode(&buf, &plan, DEFAULT_MAX_ITERS).unwrap().crc_ok);
        }
    }
}
