//! Systematic LDPC encoding over the lifted base graphs.
//!
//! Parity is solved block-wise: the sum of the four core rows isolates the
//! first core parity block, the remaining core blocks follow row by row, and
//! every extension row then contributes exactly one identity-shifted parity
//! block.

use super::base_graph::{lifted_graph, LiftedGraph};
use super::segment::CodeBlock;
use crate::error::{Error, Result};

/// Number of core parity rows/columns in both base graphs.
const CORE: usize = 4;

/// `acc ^= P^s x` where row `r` of `P^s` has its one at column `(r+s) mod Z`.
pub(crate) fn xor_shifted(acc: &mut [u8], x: &[u8], shift: usize) {
    let z = x.len();
    let (head, tail) = x.split_at(shift % z);
    let split = tail.len();
    for (a, b) in acc[..split].iter_mut().zip(tail) {
        *a ^= b;
    }
    for (a, b) in acc[split..].iter_mut().zip(head) {
        *a ^= b;
    }
}

/// Solves `P^s p = rhs` for `p`.
fn unshift(rhs: &[u8], shift: usize) -> Vec<u8> {
    let z = rhs.len();
    let s = shift % z;
    (0..z).map(|j| rhs[(j + z - s) % z]).collect()
}

/// Encodes the full (unpunctured) codeword of `columns * Z` bits.
pub fn encode_full(info: &[u8], g: &LiftedGraph) -> Result<Vec<u8>> {
    let z = g.z;
    let kb = g.graph.info_columns();
    if info.len() != kb * z {
        return Err(Error::InvalidConfig(format!(
            "information block has {} bits, expected {}",
            info.len(),
            kb * z
        )));
    }
    let cols = g.graph.columns();
    let mut word = vec![0u8; cols * z];
    word[..kb * z].copy_from_slice(info);

    let block = |word: &[u8], c: usize| word[c * z..(c + 1) * z].to_vec();
    let mut rhs: Vec<Vec<u8>> = Vec::with_capacity(CORE);
    for row in &g.rows[..CORE] {
        let mut acc = vec![0u8; z];
        for &(c, s) in row.iter().filter(|(c, _)| *c < kb) {
            xor_shifted(&mut acc, &word[c * z..(c + 1) * z], s);
        }
        rhs.push(acc);
    }

    // Over the four core rows, the shifts on the first parity column leave
    // a single surviving circulant once equal pairs cancel.
    let mut shifts: Vec<usize> = g.rows[..CORE]
        .iter()
        .flat_map(|row| row.iter().filter(|(c, _)| *c == kb).map(|&(_, s)| s))
        .collect();
    shifts.sort_unstable();
    let mut surviving = Vec::new();
    for s in shifts.chunk_by(|a, b| a == b) {
        if s.len() % 2 == 1 {
            surviving.push(s[0]);
        }
    }
    let [s1] = surviving[..] else {
        return Err(Error::UnsupportedConfig(format!(
            "{:?} Z={z}: core parity not in dual-diagonal form",
            g.graph
        )));
    };
    let mut total = vec![0u8; z];
    for r in &rhs {
        for (t, b) in total.iter_mut().zip(r) {
            *t ^= b;
        }
    }
    word[kb * z..(kb + 1) * z].copy_from_slice(&unshift(&total, s1));

    let mut known = [true, false, false, false];
    while known.iter().any(|k| !k) {
        let mut progressed = false;
        for (i, row) in g.rows[..CORE].iter().enumerate() {
            let unknown: Vec<&(usize, usize)> = row
                .iter()
                .filter(|(c, _)| (kb..kb + CORE).contains(c) && !known[c - kb])
                .collect();
            let [&(col, shift)] = unknown[..] else { continue };
            let mut acc = rhs[i].clone();
            for &(c, s) in row.iter().filter(|(c, _)| (kb..kb + CORE).contains(c) && *c != col) {
                xor_shifted(&mut acc, &block(&word, c), s);
            }
            word[col * z..(col + 1) * z].copy_from_slice(&unshift(&acc, shift));
            known[col - kb] = true;
            progressed = true;
        }
        if !progressed {
            return Err(Error::UnsupportedConfig(format!("{:?} Z={z}: core parity unsolvable", g.graph)));
        }
    }

    for row in &g.rows[CORE..] {
        let (&(pcol, pshift), rest) = row.split_last().expect("extension rows are non-empty");
        let mut acc = vec![0u8; z];
        for &(c, s) in rest {
            xor_shifted(&mut acc, &word[c * z..(c + 1) * z], s);
        }
        word[pcol * z..(pcol + 1) * z].copy_from_slice(&unshift(&acc, pshift));
    }
    Ok(word)
}

/// Encodes a code block into its transmitted codeword of `N` bits: the
/// information part without the first `2Z` punctured bits, then parity.
pub fn ldpc_encode(cb: &CodeBlock) -> Result<Vec<u8>> {
    let g = lifted_graph(cb.base_graph, cb.lifting_size)?;
    let mut full = encode_full(&cb.bits, &g)?;
    full.drain(..2 * cb.lifting_size);
    Ok(full)
}

/// True when every parity check of the lifted graph is satisfied by the
/// full (unpunctured) word.
pub fn syndrome_is_zero(word: &[u8], g: &LiftedGraph) -> bool {
    let z = g.z;
    g.rows.iter().all(|row| {
        let mut acc = vec![0u8; z];
        for &(c, s) in row {
            xor_shifted(&mut acc, &word[c * z..(c + 1) * z], s);
        }
        acc.iter().all(|&b| b == 0)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nr::base_graph::{lifting_table, BaseGraph};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_block(graph: BaseGraph, z: usize, filler: usize, rng: &mut ChaCha8Rng) -> CodeBlock {
        let k = graph.k(z);
        let data: Vec<u8> = (0..k - filler).map(|_| rng.random_range(0..2u8)).collect();
        CodeBlock::from_data(&data, 0, graph, z).unwrap()
    }

    /// Dense parity-check matrix, one `Vec<u8>` per check.
    fn dense_h(g: &LiftedGraph) -> Vec<Vec<u8>> {
        let z = g.z;
        let mut h = vec![vec![0u8; g.num_vars()]; g.num_checks()];
        for (br, row) in g.rows.iter().enumerate() {
            for &(c, s) in row {
                for r in 0..z {
                    h[br * z + r][c * z + (r + s) % z] = 1;
                }
            }
        }
        h
    }

    /// Solves `H_p p = H_i i` by Gauss-Jordan elimination over GF(2).
    fn gf2_parity(g: &LiftedGraph, info: &[u8]) -> Vec<u8> {
        let h = dense_h(g);
        let ni = info.len();
        let np = g.num_vars() - ni;
        let mut aug: Vec<Vec<u8>> = h
            .iter()
            .map(|row| {
                let mut r = row[ni..].to_vec();
                let rhs = row[..ni].iter().zip(info).fold(0u8, |a, (x, y)| a ^ (x & y));
                r.push(rhs);
                r
            })
            .collect();
        let mut pivot_row = 0;
        for col in 0..np {
            let Some(p) = (pivot_row..aug.len()).find(|&r| aug[r][col] == 1) else {
                panic!("parity part singular at column {col}");
            };
            aug.swap(pivot_row, p);
            let pivot = aug[pivot_row].clone();
            for (r, row) in aug.iter_mut().enumerate() {
                if r != pivot_row && row[col] == 1 {
                    for (x, y) in row.iter_mut().zip(&pivot) {
                        *x ^= y;
                    }
                }
            }
            pivot_row += 1;
        }
        (0..np).map(|c| aug[c][np]).collect()
    }

    #[test]
    fn zero_information_gives_zero_codeword() {
        for graph in [BaseGraph::BG1, BaseGraph::BG2] {
            let cb = CodeBlock::from_data(&[], 0, graph, 64).unwrap();
            let cw = ldpc_encode(&cb).unwrap();
            assert_eq!(cw.len(), graph.n(64));
            assert!(cw.iter().all(|&b| b == 0));
        }
    }

    #[test]
    fn matches_gf2_elimination_on_smallest_bg2_lifting() {
        let z = lifting_table().all()[0];
        let g = lifted_graph(BaseGraph::BG2, z).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for _ in 0..8 {
            let cb = random_block(BaseGraph::BG2, z, 0, &mut rng);
            let full = encode_full(&cb.bits, &g).unwrap();
            assert!(syndrome_is_zero(&full, &g));
            assert_eq!(full[cb.bits.len()..], gf2_parity(&g, &cb.bits)[..]);
        }
    }

    #[test]
    fn matches_gf2_elimination_on_small_bg1_lifting() {
        let g = lifted_graph(BaseGraph::BG1, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let cb = random_block(BaseGraph::BG1, 5, 0, &mut rng);
        let full = encode_full(&cb.bits, &g).unwrap();
        assert_eq!(full[cb.bits.len()..], gf2_parity(&g, &cb.bits)[..]);
    }

    #[test]
    fn zero_syndrome_for_every_lifting_size() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for graph in [BaseGraph::BG1, BaseGraph::BG2] {
            for &z in lifting_table().all() {
                let g = lifted_graph(graph, z).unwrap();
                let cb = random_block(graph, z, z / 3, &mut rng);
                let full = encode_full(&cb.bits, &g).unwrap();
                assert!(syndrome_is_zero(&full, &g), "{graph:?} Z={z}");
                assert_eq!(full[..cb.bits.len()], cb.bits[..]);
            }
        }
    }

    #[test]
    fn unsupported_lifting_is_rejected() {
        let cb = CodeBlock { bits: vec![0; 22 * 17], index: 0, lifting_size: 17, base_graph: BaseGraph::BG1, filler_count: 0 };
        assert!(matches!(ldpc_encode(&cb), Err(Error::UnsupportedConfig(_))));
    }
}
