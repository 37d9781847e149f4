//! Split-plane bit packing of element vectors.
//!
//! A vector of `n_f` elements is stored as two bit planes of `n_f` bits
//! each: plane 0 holds every element's first component, plane 1 the second.
//! Each plane packs 64 positions per `u64` word, position `q` at bit
//! `q % 64` of word `q / 64`:
//!
//! ```text
//! elements   q:  0    1    2    3   ...                 (n_f positions)
//!              (0,1)(1,1)(0,0)(0,1)
//! plane 0 bits:  0    1    0    0   ...   word = ...0010
//! plane 1 bits:  1    1    0    1   ...   word = ...1011
//! ```
//!
//! The final word of each plane is only partially used unless `n_f` is a
//! multiple of 64; all padding bits are kept at zero so word-granular
//! kernels never see phantom positions. In dense mode the planes only ever
//! hold the canonical values `(0,0)`, `(0,1)`, `(1,1)` — `(1,0)` is folded
//! into `(0,1)` on encode. In sparse mode the plane pattern `(1,0)` marks a
//! missing value.

use crate::element::{Element2, SiteValue, NULL_PATTERN};
use crate::error::{Error, Result};
use std::ops::Range;

/// Number of 64-bit words needed for `n_f` bit positions.
pub fn words_for(n_f: u64) -> usize {
    n_f.div_ceil(64) as usize
}

/// Mask selecting the in-range bits of the final word for `n_f` positions.
///
/// All-ones when `n_f` is a multiple of 64 (the final word is full).
pub fn tail_mask(n_f: u64) -> u64 {
    match n_f % 64 {
        0 => !0,
        r => (1u64 << r) - 1,
    }
}

/// Borrowed view of one packed vector: its two bit planes.
#[derive(Copy, Clone, Debug)]
pub struct ColumnView<'a> {
    pub plane0: &'a [u64],
    pub plane1: &'a [u64],
}

/// A set of `n_v` vectors of `n_f` elements each, bit-packed per vector.
///
/// Words are laid out vector-major: all of vector `i`'s words are
/// contiguous within each plane, so a single vector (a *column* of the
/// conceptual element matrix) can be handed to a kernel as two slices.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct PackedVectorSet {
    n_v: usize,
    n_f: u64,
    n_words: usize,
    sparse: bool,
    plane0: Vec<u64>,
    plane1: Vec<u64>,
}

impl PackedVectorSet {
    /// An all-`(0,0)` set.
    pub fn new_zero(n_v: usize, n_f: u64, sparse: bool) -> Self {
        let n_words = words_for(n_f);
        PackedVectorSet {
            n_v,
            n_f,
            n_words,
            sparse,
            plane0: vec![0; n_v * n_words],
            plane1: vec![0; n_v * n_words],
        }
    }

    /// Packs per-vector rows of site values.
    ///
    /// Every row must hold exactly `n_f` values. Dense mode folds `(1,0)`
    /// into `(0,1)` and rejects missing values; sparse mode stores missing
    /// values as the `(1,0)` plane pattern and rejects `(1,0)` supplied as
    /// data (it would be indistinguishable from the marker).
    pub fn encode(rows: &[Vec<SiteValue>], n_f: u64, sparse: bool) -> Result<Self> {
        let mut set = PackedVectorSet::new_zero(rows.len(), n_f, sparse);
        for (i, row) in rows.iter().enumerate() {
            if row.len() as u64 != n_f {
                return Err(Error::LengthMismatch {
                    vector: i,
                    expected: n_f,
                    got: row.len() as u64,
                });
            }
            for (q, &value) in row.iter().enumerate() {
                let (b0, b1) = match value {
                    SiteValue::Present(e) => {
                        if sparse && e.is_null_pattern() {
                            return Err(Error::NullPatternAsData {
                                vector: i,
                                position: q as u64,
                            });
                        }
                        let e = if sparse { e } else { e.canonicalized() };
                        (e.first() as u64, e.second() as u64)
                    }
                    SiteValue::Missing => {
                        if !sparse {
                            return Err(Error::MissingInDense {
                                vector: i,
                                position: q as u64,
                            });
                        }
                        (NULL_PATTERN.first() as u64, NULL_PATTERN.second() as u64)
                    }
                };
                let w = i * set.n_words + q / 64;
                let bit = q % 64;
                set.plane0[w] |= b0 << bit;
                set.plane1[w] |= b1 << bit;
            }
        }
        Ok(set)
    }

    /// Rebuilds a set from raw plane words, validating lengths and padding.
    pub fn from_raw_parts(
        n_v: usize,
        n_f: u64,
        sparse: bool,
        plane0: Vec<u64>,
        plane1: Vec<u64>,
    ) -> Result<Self> {
        let n_words = words_for(n_f);
        if plane0.len() != n_v * n_words || plane1.len() != n_v * n_words {
            return Err(Error::WordCountMismatch {
                left: plane0.len().max(plane1.len()),
                right: n_v * n_words,
            });
        }
        let set = PackedVectorSet { n_v, n_f, n_words, sparse, plane0, plane1 };
        for i in 0..n_v {
            if !set.padding_is_zero(i) {
                return Err(Error::InvalidParameter {
                    name: "plane words",
                    reason: format!("vector {i} has nonzero padding bits"),
                });
            }
        }
        Ok(set)
    }

    pub fn n_v(&self) -> usize {
        self.n_v
    }

    pub fn n_f(&self) -> u64 {
        self.n_f
    }

    pub fn n_words(&self) -> usize {
        self.n_words
    }

    pub fn is_sparse(&self) -> bool {
        self.sparse
    }

    /// Unused bit positions in the final word of each plane.
    pub fn pad_count(&self) -> u64 {
        self.n_words as u64 * 64 - self.n_f
    }

    /// Mask of in-range bits for this set's final word.
    pub fn tail_mask(&self) -> u64 {
        tail_mask(self.n_f)
    }

    /// Both planes of vector `i`.
    pub fn column(&self, i: usize) -> ColumnView<'_> {
        let lo = i * self.n_words;
        let hi = lo + self.n_words;
        ColumnView {
            plane0: &self.plane0[lo..hi],
            plane1: &self.plane1[lo..hi],
        }
    }

    /// The value at vector `i`, position `q`.
    pub fn get(&self, i: usize, q: u64) -> SiteValue {
        debug_assert!(i < self.n_v && q < self.n_f);
        let w = i * self.n_words + (q / 64) as usize;
        let bit = q % 64;
        let b0 = (self.plane0[w] >> bit) & 1;
        let b1 = (self.plane1[w] >> bit) & 1;
        let e = Element2::new(b0 as u8, b1 as u8).expect("bits are binary");
        if self.sparse && e.is_null_pattern() {
            SiteValue::Missing
        } else {
            SiteValue::Present(e)
        }
    }

    /// Overwrites the value at vector `i`, position `q`, maintaining the
    /// same mode rules as [`PackedVectorSet::encode`].
    pub fn set(&mut self, i: usize, q: u64, value: SiteValue) -> Result<()> {
        let (b0, b1) = match value {
            SiteValue::Present(e) => {
                if self.sparse && e.is_null_pattern() {
                    return Err(Error::NullPatternAsData { vector: i, position: q });
                }
                let e = if self.sparse { e } else { e.canonicalized() };
                (e.first() as u64, e.second() as u64)
            }
            SiteValue::Missing => {
                if !self.sparse {
                    return Err(Error::MissingInDense { vector: i, position: q });
                }
                (1, 0)
            }
        };
        let w = i * self.n_words + (q / 64) as usize;
        let bit = q % 64;
        self.plane0[w] = (self.plane0[w] & !(1 << bit)) | (b0 << bit);
        self.plane1[w] = (self.plane1[w] & !(1 << bit)) | (b1 << bit);
        Ok(())
    }

    /// Unpacks the whole set back into per-vector rows.
    pub fn decode(&self) -> Vec<Vec<SiteValue>> {
        (0..self.n_v)
            .map(|i| (0..self.n_f).map(|q| self.get(i, q)).collect())
            .collect()
    }

    /// A new set holding vectors `cols` only.
    pub fn extract_columns(&self, cols: Range<u64>) -> Result<Self> {
        self.extract_tile(cols, 0..self.n_words)
    }

    /// A new set holding vectors `cols` restricted to plane words `words`.
    ///
    /// The tile's field count is the number of in-range positions covered
    /// by those words, so the global tail padding stays padding locally.
    pub fn extract_tile(&self, cols: Range<u64>, words: Range<usize>) -> Result<Self> {
        if cols.start > cols.end || cols.end > self.n_v as u64 {
            return Err(Error::RangeOutOfBounds {
                what: "column",
                lo: cols.start,
                hi: cols.end,
                max: self.n_v as u64,
            });
        }
        if words.start > words.end || words.end > self.n_words {
            return Err(Error::RangeOutOfBounds {
                what: "word",
                lo: words.start as u64,
                hi: words.end as u64,
                max: self.n_words as u64,
            });
        }
        let local_f = tile_field_count(self.n_f, words.clone());
        let local_words = words.len();
        let n_cols = (cols.end - cols.start) as usize;
        let mut plane0 = Vec::with_capacity(n_cols * local_words);
        let mut plane1 = Vec::with_capacity(n_cols * local_words);
        for i in cols.start..cols.end {
            let col = self.column(i as usize);
            plane0.extend_from_slice(&col.plane0[words.clone()]);
            plane1.extend_from_slice(&col.plane1[words.clone()]);
        }
        Ok(PackedVectorSet {
            n_v: n_cols,
            n_f: local_f,
            n_words: local_words,
            sparse: self.sparse,
            plane0,
            plane1,
        })
    }

    /// Raw plane words of vector `i` (plane 0, plane 1).
    pub fn raw_column_words(&self, i: usize) -> (&[u64], &[u64]) {
        let col = self.column(i);
        (col.plane0, col.plane1)
    }

    /// Direct mutable word access for I/O code; callers must uphold the
    /// padding invariant.
    pub(crate) fn raw_column_words_mut(&mut self, i: usize) -> (&mut [u64], &mut [u64]) {
        let lo = i * self.n_words;
        let hi = lo + self.n_words;
        (&mut self.plane0[lo..hi], &mut self.plane1[lo..hi])
    }

    fn padding_is_zero(&self, i: usize) -> bool {
        if self.n_words == 0 {
            return true;
        }
        let col = self.column(i);
        let mask = self.tail_mask();
        col.plane0[self.n_words - 1] & !mask == 0 && col.plane1[self.n_words - 1] & !mask == 0
    }
}

/// Field count covered by plane words `words` of a vector with `n_f`
/// total positions.
pub fn tile_field_count(n_f: u64, words: Range<usize>) -> u64 {
    let lo = (words.start as u64 * 64).min(n_f);
    let hi = (words.end as u64 * 64).min(n_f);
    hi - lo
}

/// A tile of class-masked columns: plane pairs plus an explicit validity
/// bitmask. A position is valid exactly when its element is not the `(1,0)`
/// null pattern; kernels consume the mask directly instead of re-deriving
/// it per pair.
#[derive(Clone, Debug)]
pub struct MaskedTile {
    pub(crate) n_cols: usize,
    pub(crate) n_f: u64,
    pub(crate) n_words: usize,
    pub(crate) plane0: Vec<u64>,
    pub(crate) plane1: Vec<u64>,
    pub(crate) valid: Vec<u64>,
}

/// Borrowed view of one masked column.
#[derive(Copy, Clone, Debug)]
pub struct MaskedColumnView<'a> {
    pub plane0: &'a [u64],
    pub plane1: &'a [u64],
    pub valid: &'a [u64],
}

impl MaskedTile {
    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn n_f(&self) -> u64 {
        self.n_f
    }

    pub fn n_words(&self) -> usize {
        self.n_words
    }

    pub fn column(&self, i: usize) -> MaskedColumnView<'_> {
        let lo = i * self.n_words;
        let hi = lo + self.n_words;
        MaskedColumnView {
            plane0: &self.plane0[lo..hi],
            plane1: &self.plane1[lo..hi],
            valid: &self.valid[lo..hi],
        }
    }
}
