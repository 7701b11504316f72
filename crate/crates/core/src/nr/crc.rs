//! Cyclic redundancy checks used for transport-block and code-block
//! attachment. Bits are carried one per byte (`0`/`1`), most significant
//! (first transmitted) bit first, with a zero initial register and no final
//! inversion.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CrcKind {
    /// Transport-block CRC for large blocks.
    Crc24A,
    /// Per code-block CRC when a transport block is segmented.
    Crc24B,
    /// Transport-block CRC for blocks of at most 3824 bits.
    Crc16,
}

impl CrcKind {
    pub const fn len(self) -> usize {
        match self {
            CrcKind::Crc24A | CrcKind::Crc24B => 24,
            CrcKind::Crc16 => 16,
        }
    }

    /// Generator polynomial without the leading `D^len` term.
    pub const fn polynomial(self) -> u32 {
        match self {
            // D24+D23+D18+D17+D14+D11+D10+D7+D6+D5+D4+D3+D+1
            CrcKind::Crc24A => 0x86_4CFB,
            // D24+D23+D6+D5+D+1
            CrcKind::Crc24B => 0x80_0063,
            // D16+D12+D5+1
            CrcKind::Crc16 => 0x1021,
        }
    }

    fn table(self) -> &'static [u32; 256] {
        static A: OnceLock<[u32; 256]> = OnceLock::new();
        static B: OnceLock<[u32; 256]> = OnceLock::new();
        static C: OnceLock<[u32; 256]> = OnceLock::new();
        let cell = match self {
            CrcKind::Crc24A => &A,
            CrcKind::Crc24B => &B,
            CrcKind::Crc16 => &C,
        };
        cell.get_or_init(|| build_table(self))
    }

    fn mask(self) -> u32 {
        (1u32 << self.len()) - 1
    }
}

fn build_table(kind: CrcKind) -> [u32; 256] {
    let width = kind.len() as u32;
    let top = 1u32 << (width - 1);
    let mut table = [0u32; 256];
    for (byte, slot) in table.iter_mut().enumerate() {
        let mut reg = (byte as u32) << (width - 8);
        for _ in 0..8 {
            reg = if reg & top != 0 {
                (reg << 1) ^ kind.polynomial()
            } else {
                reg << 1
            };
        }
        *slot = reg & kind.mask();
    }
    table
}

fn remainder(bits: &[u8], kind: CrcKind) -> u32 {
    let width = kind.len() as u32;
    let mask = kind.mask();
    let table = kind.table();
    let mut reg = 0u32;
    let mut chunks = bits.chunks_exact(8);
    for chunk in &mut chunks {
        let byte = chunk.iter().fold(0u32, |acc, &b| (acc << 1) | u32::from(b & 1));
        let idx = ((reg >> (width - 8)) ^ byte) & 0xff;
        reg = ((reg << 8) ^ table[idx as usize]) & mask;
    }
    let top = 1u32 << (width - 1);
    for &bit in chunks.remainder() {
        let feedback = ((reg & top) != 0) as u32 ^ u32::from(bit & 1);
        reg = (reg << 1) & mask;
        if feedback != 0 {
            reg ^= kind.polynomial();
        }
    }
    reg
}

/// Parity bits of `payload` for the given CRC, first-transmitted bit first.
pub fn crc_compute(payload: &[u8], kind: CrcKind) -> Vec<u8> {
    let reg = remainder(payload, kind);
    (0..kind.len())
        .rev()
        .map(|i| ((reg >> i) & 1) as u8)
        .collect()
}

/// True when `block` (payload followed by its parity) divides evenly.
pub fn crc_check(block: &[u8], kind: CrcKind) -> bool {
    block.len() >= kind.len() && remainder(block, kind) == 0
}

/// Returns `payload ++ crc(payload)`.
pub fn crc_attach(payload: &[u8], kind: CrcKind) -> Vec<u8> {
    let mut out = Vec::with_capacity(payload.len() + kind.len());
    out.extend_from_slice(payload);
    out.extend(crc_compute(payload, kind));
    out
}
