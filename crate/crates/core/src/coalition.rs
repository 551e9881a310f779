//! Feature coalitions as bitmasks.

use std::fmt;

use serde::{Serialize, Serializer};

/// Largest feature count a coalition bitmask can hold.
pub const MAX_FEATURES: usize = 64;

/// A subset `S` of feature indices; the complement is always relative to a
/// feature count supplied by the caller.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Coalition(u64);

impl Coalition {
    pub const EMPTY: Coalition = Coalition(0);

    pub fn from_bits(bits: u64) -> Self {
        Coalition(bits)
    }

    pub fn full(m: usize) -> Self {
        assert!(
            m <= MAX_FEATURES,
            "coalitions hold at most {MAX_FEATURES} features"
        );
        if m == MAX_FEATURES {
            Coalition(u64::MAX)
        } else {
            Coalition((1u64 << m) - 1)
        }
    }

    pub fn from_indices(indices: impl IntoIterator<Item = usize>) -> Self {
        Coalition(indices.into_iter().fold(0, |acc, j| acc | (1u64 << j)))
    }

    pub fn bits(self) -> u64 {
        self.0
    }

    pub fn contains(self, j: usize) -> bool {
        self.0 >> j & 1 == 1
    }

    pub fn with(self, j: usize) -> Self {
        Coalition(self.0 | (1u64 << j))
    }

    pub fn without(self, j: usize) -> Self {
        Coalition(self.0 & !(1u64 << j))
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn is_subset_of(self, other: Coalition) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn complement(self, m: usize) -> Self {
        Coalition(!self.0 & Coalition::full(m).0)
    }

    pub fn members(self) -> impl Iterator<Item = usize> {
        let bits = self.0;
        (0..MAX_FEATURES).filter(move |j| bits >> j & 1 == 1)
    }

    /// Bitmask index usable for a dense `2^M` table.
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for Coalition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, j) in self.members().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{j}")?;
        }
        f.write_str("}")
    }
}

impl Serialize for Coalition {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(self.members())
    }
}
