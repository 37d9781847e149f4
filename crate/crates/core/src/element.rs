//! The element domain: unordered pairs of binary components.
//!
//! Each dataset element is a pair of binary components — for genotype data,
//! the two alleles at a site. Order inside the pair carries no information,
//! so `(0,1)` and `(1,0)` describe the same observation. The canonical dense
//! values are `(0,0)`, `(0,1)`, `(1,1)`; the leftover bit pattern `(1,0)` is
//! either folded into `(0,1)` (dense mode) or reserved as the missing-value
//! marker (sparse mode).

use std::fmt;

use crate::error::{Error, Result};

/// An element: two binary components, each 0 or 1.
#[derive(Copy, Clone, PartialEq, Eq, Hash, Debug)]
pub struct Element2 {
    first: u8,
    second: u8,
}

/// The three canonical dense element values, in class order.
pub const CANONICAL_VALUES: [Element2; 3] = [
    Element2 { first: 0, second: 0 },
    Element2 { first: 0, second: 1 },
    Element2 { first: 1, second: 1 },
];

/// The bit pattern reserved as the missing marker in sparse mode.
pub const NULL_PATTERN: Element2 = Element2 { first: 1, second: 0 };

impl Element2 {
    /// Builds an element from its two components; each must be 0 or 1.
    pub fn new(first: u8, second: u8) -> Result<Self> {
        if first > 1 || second > 1 {
            return Err(Error::InvalidParameter {
                name: "element",
                reason: format!("components must be 0 or 1, got ({first},{second})"),
            });
        }
        Ok(Element2 { first, second })
    }

    pub fn first(self) -> u8 {
        self.first
    }

    pub fn second(self) -> u8 {
        self.second
    }

    /// Number of components equal to `allele` (0, 1, or 2).
    ///
    /// This is the per-element building block of every tally: a pair of
    /// elements contributes `count_of(a) * count_of(b)` to tally cell
    /// `(a, b)`.
    pub fn count_of(self, allele: u8) -> u64 {
        (self.first == allele) as u64 + (self.second == allele) as u64
    }

    /// Folds `(1,0)` into `(0,1)`; canonical values pass through.
    pub fn canonicalized(self) -> Self {
        if self == NULL_PATTERN {
            Element2 { first: 0, second: 1 }
        } else {
            self
        }
    }

    /// True for the `(1,0)` pattern reserved as the sparse missing marker.
    pub fn is_null_pattern(self) -> bool {
        self == NULL_PATTERN
    }
}

impl fmt::Display for Element2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.first, self.second)
    }
}

/// One observed site: an element, or a missing value (sparse datasets only).
#[derive(Copy, Clone, PartialEq, Eq, Debug)]
pub enum SiteValue {
    Present(Element2),
    Missing,
}

impl SiteValue {
    pub fn is_missing(self) -> bool {
        matches!(self, SiteValue::Missing)
    }

    /// Parses a two-character token: `00`, `01`, `10`, `11`, or `..` for a
    /// missing value.
    pub fn parse_token(token: &str) -> Option<Self> {
        if token == ".." {
            return Some(SiteValue::Missing);
        }
        let bytes = token.as_bytes();
        if bytes.len() != 2 {
            return None;
        }
        let bit = |b: u8| match b {
            b'0' => Some(0u8),
            b'1' => Some(1u8),
            _ => None,
        };
        Some(SiteValue::Present(Element2 {
            first: bit(bytes[0])?,
            second: bit(bytes[1])?,
        }))
    }
}

impl fmt::Display for SiteValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SiteValue::Present(e) => write!(f, "{}{}", e.first, e.second),
            SiteValue::Missing => write!(f, ".."),
        }
    }
}
