//! Base-graph shift tables and lifting sizes, loaded from the versioned data
//! files under `data/` and validated against their embedded SHA-256 at first
//! use.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock, RwLock};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

const BG1_TEXT: &str = include_str!("../../data/bg1.txt");
const BG2_TEXT: &str = include_str!("../../data/bg2.txt");
const LIFTING_TEXT: &str = include_str!("../../data/lifting_sizes.txt");

const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BaseGraph {
    BG1,
    BG2,
}

impl BaseGraph {
    /// Systematic base-graph columns (K_b before shortening).
    pub const fn info_columns(self) -> usize {
        match self {
            BaseGraph::BG1 => 22,
            BaseGraph::BG2 => 10,
        }
    }

    pub const fn rows(self) -> usize {
        match self {
            BaseGraph::BG1 => 46,
            BaseGraph::BG2 => 42,
        }
    }

    pub const fn columns(self) -> usize {
        match self {
            BaseGraph::BG1 => 68,
            BaseGraph::BG2 => 52,
        }
    }

    /// Information bits per code block, K.
    pub const fn k(self, z: usize) -> usize {
        self.info_columns() * z
    }

    /// Transmitted codeword length N (first 2Z columns punctured).
    pub const fn n(self, z: usize) -> usize {
        (self.columns() - 2) * z
    }

    /// Largest code block size supported by the graph.
    pub const fn max_cb_size(self) -> usize {
        match self {
            BaseGraph::BG1 => 8448,
            BaseGraph::BG2 => 3840,
        }
    }

    fn file(self) -> &'static str {
        match self {
            BaseGraph::BG1 => "bg1.txt",
            BaseGraph::BG2 => "bg2.txt",
        }
    }
}

/// One non-zero circulant of a base graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BaseEntry {
    pub row: usize,
    pub col: usize,
    pub shifts: [u16; 8],
}

#[derive(Debug)]
pub struct BaseGraphTable {
    pub graph: BaseGraph,
    pub entries: Vec<BaseEntry>,
}

fn sha256_hex(body: &str) -> String {
    Sha256::digest(body.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Splits a data file into (header map, body) and checks version + digest.
fn parse_container(file: &'static str, text: &str) -> Result<(HashMap<String, String>, String)> {
    let err = |reason: String| Error::DataFile { file: file.to_string(), reason };
    let mut header = HashMap::new();
    let mut body = String::new();
    for line in text.lines() {
        if let Some(rest) = line.strip_prefix('#') {
            let rest = rest.trim();
            if let Some((key, value)) = rest.split_once(' ') {
                header.insert(key.to_string(), value.trim().to_string());
            }
        } else if !line.trim().is_empty() {
            body.push_str(line);
            body.push('\n');
        }
    }
    let version: u32 = header
        .get("format-version")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| err("missing format-version".into()))?;
    if version != FORMAT_VERSION {
        return Err(err(format!("unsupported format-version {version}")));
    }
    let expected = header.get("sha256").ok_or_else(|| err("missing sha256 header".into()))?;
    let actual = sha256_hex(&body);
    if &actual != expected {
        return Err(err(format!("checksum mismatch: header {expected}, body {actual}")));
    }
    Ok((header, body))
}

fn parse_base_graph(graph: BaseGraph, text: &str) -> Result<BaseGraphTable> {
    let file = graph.file();
    let err = |reason: String| Error::DataFile { file: file.to_string(), reason };
    let (header, body) = parse_container(file, text)?;
    let shape: Vec<usize> = header
        .get("shape")
        .map(|s| s.split_whitespace().filter_map(|t| t.parse().ok()).collect())
        .unwrap_or_default();
    if shape.len() != 3 || shape[0] != graph.rows() || shape[1] != graph.columns() {
        return Err(err(format!("shape header {shape:?} does not match {graph:?}")));
    }
    let mut entries = Vec::with_capacity(shape[2]);
    for (lineno, line) in body.lines().enumerate() {
        let nums: Vec<usize> = line
            .split_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| err(format!("line {}: {e}", lineno + 1)))?;
        if nums.len() != 10 {
            return Err(err(format!("line {}: expected 10 fields", lineno + 1)));
        }
        let (row, col) = (nums[0], nums[1]);
        if row >= graph.rows() || col >= graph.columns() {
            return Err(err(format!("line {}: entry ({row},{col}) outside graph", lineno + 1)));
        }
        let mut shifts = [0u16; 8];
        for (s, v) in shifts.iter_mut().zip(&nums[2..]) {
            *s = u16::try_from(*v).map_err(|_| err(format!("line {}: shift too large", lineno + 1)))?;
        }
        entries.push(BaseEntry { row, col, shifts });
    }
    if entries.len() != shape[2] {
        return Err(err(format!("{} entries, header says {}", entries.len(), shape[2])));
    }
    Ok(BaseGraphTable { graph, entries })
}

pub fn base_graph_table(graph: BaseGraph) -> &'static BaseGraphTable {
    static BG1: OnceLock<BaseGraphTable> = OnceLock::new();
    static BG2: OnceLock<BaseGraphTable> = OnceLock::new();
    let (cell, text) = match graph {
        BaseGraph::BG1 => (&BG1, BG1_TEXT),
        BaseGraph::BG2 => (&BG2, BG2_TEXT),
    };
    cell.get_or_init(|| parse_base_graph(graph, text).expect("shipped base-graph data is valid"))
}

/// Lifting sizes grouped by set index.
#[derive(Debug)]
pub struct LiftingTable {
    sets: Vec<Vec<usize>>,
    sorted: Vec<usize>,
}

impl LiftingTable {
    pub fn all(&self) -> &[usize] {
        &self.sorted
    }

    pub fn set_index(&self, z: usize) -> Option<usize> {
        self.sets.iter().position(|s| s.contains(&z))
    }

    /// Smallest lifting size with `columns * z >= bits`.
    pub fn smallest_covering(&self, columns: usize, bits: usize) -> Option<usize> {
        self.sorted.iter().copied().find(|z| columns * z >= bits)
    }
}

fn parse_lifting(text: &str) -> Result<LiftingTable> {
    let file = "lifting_sizes.txt";
    let err = |reason: String| Error::DataFile { file: file.to_string(), reason };
    let (_, body) = parse_container(file, text)?;
    let mut sets = Vec::new();
    for line in body.lines() {
        let nums: Vec<usize> = line
            .split_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| err(e.to_string()))?;
        if nums.first() != Some(&sets.len()) || nums.len() < 2 {
            return Err(err(format!("malformed set line `{line}`")));
        }
        sets.push(nums[1..].to_vec());
    }
    if sets.len() != 8 {
        return Err(err(format!("expected 8 sets, found {}", sets.len())));
    }
    let mut sorted: Vec<usize> = sets.iter().flatten().copied().collect();
    sorted.sort_unstable();
    sorted.dedup();
    Ok(LiftingTable { sets, sorted })
}

pub fn lifting_table() -> &'static LiftingTable {
    static TABLE: OnceLock<LiftingTable> = OnceLock::new();
    TABLE.get_or_init(|| parse_lifting(LIFTING_TEXT).expect("shipped lifting table is valid"))
}

/// A base graph expanded for one lifting size: every circulant reduced to
/// its shift modulo Z, grouped by row.
#[derive(Debug)]
pub struct LiftedGraph {
    pub graph: BaseGraph,
    pub z: usize,
    /// `(col, shift)` per base row, sorted by column.
    pub rows: Vec<Vec<(usize, usize)>>,
}

impl LiftedGraph {
    pub fn num_checks(&self) -> usize {
        self.graph.rows() * self.z
    }

    pub fn num_vars(&self) -> usize {
        self.graph.columns() * self.z
    }

    pub fn edges(&self) -> usize {
        self.rows.iter().map(Vec::len).sum::<usize>() * self.z
    }
}

pub fn lifted_graph(graph: BaseGraph, z: usize) -> Result<Arc<LiftedGraph>> {
    static CACHE: OnceLock<RwLock<HashMap<(BaseGraph, usize), Arc<LiftedGraph>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(g) = cache.read().expect("lifted graph cache poisoned").get(&(graph, z)) {
        return Ok(Arc::clone(g));
    }
    let set = lifting_table()
        .set_index(z)
        .ok_or_else(|| Error::UnsupportedConfig(format!("lifting size {z} not in table")))?;
    let table = base_graph_table(graph);
    let mut rows = vec![Vec::new(); graph.rows()];
    for e in &table.entries {
        rows[e.row].push((e.col, usize::from(e.shifts[set]) % z));
    }
    for r in &mut rows {
        r.sort_unstable();
    }
    let lifted = Arc::new(LiftedGraph { graph, z, rows });
    cache
        .write()
        .expect("lifted graph cache poisoned")
        .insert((graph, z), Arc::clone(&lifted));
    Ok(lifted)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_tables_load_with_standard_entry_counts() {
        assert_eq!(base_graph_table(BaseGraph::BG1).entries.len(), 316);
        assert_eq!(base_graph_table(BaseGraph::BG2).entries.len(), 197);
        assert_eq!(lifting_table().all().len(), 51);
        assert_eq!(lifting_table().all().first(), Some(&2));
        assert_eq!(lifting_table().all().last(), Some(&384));
    }

    #[test]
    fn tampered_body_fails_checksum() {
        let tampered = BG2_TEXT.replacen("0 0 9 174", "0 0 9 175", 1);
        let err = parse_base_graph(BaseGraph::BG2, &tampered).unwrap_err();
        assert!(err.to_string().contains("checksum"), "{err}");
    }

    #[test]
    fn unknown_lifting_size_is_unsupported() {
        assert!(matches!(lifted_graph(BaseGraph::BG1, 17), Err(Error::UnsupportedConfig(_))));
    }

    #[test]
    fn set_indices() {
        let t = lifting_table();
        assert_eq!(t.set_index(384), Some(1));
        assert_eq!(t.set_index(208), Some(6));
        assert_eq!(t.set_index(15), Some(7));
    }
}
