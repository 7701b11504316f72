use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SlotKind {
    D,
    S,
    U,
}

impl SlotKind {
    fn from_char(c: char) -> Option<Self> {
        match c {
            'D' => Some(SlotKind::D),
            'S' => Some(SlotKind::S),
            'U' => Some(SlotKind::U),
            _ => None,
        }
    }
}

/// Kind of slot `slot_index` under a periodic TDD pattern such as `DDDSU`.
pub fn tdd_slot_kind(slot_index: u64, pattern: &str) -> Result<SlotKind> {
    let kinds = pattern
        .chars()
        .map(|c| SlotKind::from_char(c).ok_or_else(|| Error::InvalidConfig(format!("invalid TDD pattern character `{c}`"))))
        .collect::<Result<Vec<_>>>()?;
    if kinds.is_empty() {
        return Err(Error::InvalidConfig("empty TDD pattern".into()));
    }
    Ok(kinds[(slot_index % kinds.len() as u64) as usize])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dddsu_periodicity() {
        assert_eq!(tdd_slot_kind(0, "DDDSU").unwrap(), SlotKind::D);
        assert_eq!(tdd_slot_kind(3, "DDDSU").unwrap(), SlotKind::S);
        assert_eq!(tdd_slot_kind(9, "DDDSU").unwrap(), SlotKind::U);
    }

    #[test]
    fn bad_patterns_rejected() {
        assert!(tdd_slot_kind(0, "DDXSU").is_err());
        assert!(tdd_slot_kind(0, "").is_err());
    }
}
