//! MCS tables and transport-block size determination for PDSCH/PUSCH.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum McsTable {
    /// 64QAM table.
    T1,
    /// 256QAM table.
    T2,
}

/// One row of an MCS table: modulation order and target code rate x 1024.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McsEntry {
    pub qm: u32,
    pub rate_x1024: f64,
}

impl McsEntry {
    pub fn code_rate(&self) -> f64 {
        self.rate_x1024 / 1024.0
    }
}

const MCS_TABLE_1: [(u32, f64); 29] = [
    (2, 120.0), (2, 157.0), (2, 193.0), (2, 251.0), (2, 308.0), (2, 379.0),
    (2, 449.0), (2, 526.0), (2, 602.0), (2, 679.0), (4, 340.0), (4, 378.0),
    (4, 434.0), (4, 490.0), (4, 553.0), (4, 616.0), (4, 658.0), (6, 438.0),
    (6, 466.0), (6, 517.0), (6, 567.0), (6, 616.0), (6, 666.0), (6, 719.0),
    (6, 772.0), (6, 822.0), (6, 873.0), (6, 910.0), (6, 948.0),
];

const MCS_TABLE_2: [(u32, f64); 28] = [
    (2, 120.0), (2, 193.0), (2, 308.0), (2, 449.0), (2, 602.0), (4, 378.0),
    (4, 434.0), (4, 490.0), (4, 553.0), (4, 616.0), (4, 658.0), (6, 466.0),
    (6, 517.0), (6, 567.0), (6, 616.0), (6, 666.0), (6, 719.0), (6, 772.0),
    (6, 822.0), (6, 873.0), (8, 682.5), (8, 711.0), (8, 754.0), (8, 797.0),
    (8, 841.0), (8, 885.0), (8, 916.5), (8, 948.0),
];

/// Quantized sizes for small transport blocks (N_info <= 3824).
const SMALL_TBS: [u32; 93] = [
    24, 32, 40, 48, 56, 64, 72, 80, 88, 96, 104, 112, 120, 128, 136, 144, 152, 160, 168, 176,
    184, 192, 208, 224, 240, 256, 272, 288, 304, 320, 336, 352, 368, 384, 408, 432, 456, 480,
    504, 528, 552, 576, 608, 640, 672, 704, 736, 768, 808, 848, 888, 928, 984, 1032, 1064, 1128,
    1160, 1192, 1224, 1256, 1288, 1320, 1352, 1416, 1480, 1544, 1608, 1672, 1736, 1800, 1864,
    1928, 2024, 2088, 2152, 2216, 2280, 2408, 2472, 2536, 2600, 2664, 2728, 2792, 2856, 2976,
    3104, 3240, 3368, 3496, 3624, 3752, 3824,
];

pub fn mcs_entry(table: McsTable, index: u32) -> Result<McsEntry> {
    let rows: &[(u32, f64)] = match table {
        McsTable::T1 => &MCS_TABLE_1,
        McsTable::T2 => &MCS_TABLE_2,
    };
    rows.get(index as usize)
        .map(|&(qm, rate_x1024)| McsEntry { qm, rate_x1024 })
        .ok_or_else(|| Error::InvalidConfig(format!("MCS {index} is reserved or out of range for {table:?}")))
}

/// Time/frequency allocation of one transport block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Allocation {
    pub prbs: u32,
    /// OFDM symbols carrying the shared channel.
    pub symbols: u32,
    pub layers: u32,
    /// Resource elements per PRB not available for data (DMRS plus
    /// configured overhead).
    pub overhead: u32,
}

impl Allocation {
    pub fn new(prbs: u32, symbols: u32, layers: u32) -> Self {
        Allocation { prbs, symbols, layers, overhead: 0 }
    }

    pub fn with_overhead(mut self, overhead: u32) -> Self {
        self.overhead = overhead;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.prbs == 0 {
            return Err(Error::InvalidConfig("allocation has zero PRBs".into()));
        }
        if !(1..=14).contains(&self.symbols) {
            return Err(Error::InvalidConfig(format!("{} symbols outside 1..=14", self.symbols)));
        }
        if !(1..=4).contains(&self.layers) {
            return Err(Error::InvalidConfig(format!("{} layers outside 1..=4", self.layers)));
        }
        if self.overhead >= 12 * self.symbols {
            return Err(Error::InvalidConfig("overhead leaves no data resource elements".into()));
        }
        Ok(())
    }

    /// Data resource elements per PRB, capped at 156.
    pub fn re_per_prb(&self) -> u32 {
        (12 * self.symbols - self.overhead).min(156)
    }

    /// Coded bits available for the transport block (G).
    pub fn coded_bits(&self, qm: u32) -> usize {
        (self.re_per_prb() * self.prbs * qm * self.layers) as usize
    }
}

/// Transport block size in bits for an allocation and MCS.
pub fn compute_tbs(alloc: Allocation, table: McsTable, mcs_index: u32) -> Result<u32> {
    alloc.validate()?;
    let mcs = mcs_entry(table, mcs_index)?;
    let n_re = f64::from(alloc.re_per_prb()) * f64::from(alloc.prbs);
    let rate = mcs.code_rate();
    let n_info = n_re * rate * f64::from(mcs.qm) * f64::from(alloc.layers);

    if n_info <= 3824.0 {
        let n = (n_info.log2().floor() as i32 - 6).max(3);
        let step = f64::from(1u32 << n);
        let quantized = (step * (n_info / step).floor()).max(24.0);
        let tbs = SMALL_TBS
            .iter()
            .copied()
            .find(|&t| f64::from(t) >= quantized)
            .expect("quantized N_info never exceeds 3824");
        return Ok(tbs);
    }

    let n = ((n_info - 24.0).log2().floor() as i32) - 5;
    let step = f64::from(1u32 << n);
    let quantized = (step * ((n_info - 24.0) / step).round()).max(3840.0);
    let with_crc = quantized + 24.0;
    let tbs = if rate <= 0.25 {
        let c = (with_crc / 3816.0).ceil();
        8.0 * c * (with_crc / (8.0 * c)).ceil() - 24.0
    } else if quantized > 8424.0 {
        let c = (with_crc / 8424.0).ceil();
        8.0 * c * (with_crc / (8.0 * c)).ceil() - 24.0
    } else {
        8.0 * (with_crc / 8.0).ceil() - 24.0
    };
    Ok(tbs as u32)
}
