//! Synthetic dataset construction: seeded random data, verifiable planted
//! data with closed-form expected tallies, and seeded vector permutation.
//!
//! Random generation is counter-based: the element at `(vector i, position
//! q)` is a pure hash of `(seed, i, q)`, never a draw from sequential
//! stream state. Any tiling of the index space therefore reproduces the
//! same bits — a rank generating columns 8..16 gets exactly the rows it
//! would have seen inside a whole-dataset generation.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::element::CANONICAL_VALUES;
use crate::error::{Error, Result};
use crate::packed::{tail_mask, words_for, PackedVectorSet};
use crate::tally::{TallyTable2, TallyTable3};
use std::ops::Range;

/// 64-bit finalizer used for counter-based generation (splitmix64).
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

/// The two raw component bits for element `(i, q)` under `seed`.
///
/// Pure in all three arguments: this is the whole source of randomness for
/// [`generate_random`], exposed so callers can audit single elements.
pub fn random_element_bits(seed: u64, i: u64, q: u64) -> (u64, u64) {
    let h = splitmix64(splitmix64(splitmix64(seed) ^ i) ^ q);
    (h & 1, (h >> 1) & 1)
}

/// Generates vectors `cols` of an `n_f`-field random dataset.
///
/// Because elements are keyed by their global `(i, q)` index, generating
/// `0..n_v` in one call or in several column ranges yields bit-identical
/// planes for the shared vectors.
pub fn generate_random_block(
    seed: u64,
    cols: Range<u64>,
    n_f: u64,
    sparse: bool,
) -> PackedVectorSet {
    let n_cols = (cols.end - cols.start) as usize;
    let n_words = words_for(n_f);
    let mut set = PackedVectorSet::new_zero(n_cols, n_f, sparse);
    for (local, i) in cols.enumerate() {
        let (p0, p1) = set.raw_column_words_mut(local);
        for w in 0..n_words {
            let mut w0 = 0u64;
            let mut w1 = 0u64;
            let base = w as u64 * 64;
            let in_word = (n_f - base).min(64);
            for bit in 0..in_word {
                let (mut b0, mut b1) = random_element_bits(seed, i, base + bit);
                if !sparse && b0 == 1 && b1 == 0 {
                    // Dense canonical form: fold (1,0) into (0,1).
                    b0 = 0;
                    b1 = 1;
                }
                w0 |= b0 << bit;
                w1 |= b1 << bit;
            }
            p0[w] = w0;
            p1[w] = w1;
        }
    }
    set
}

/// Seeded random dataset of `n_v` vectors over `n_f` fields.
///
/// In dense mode every element is one of the three canonical values; in
/// sparse mode the fourth bit pattern becomes a missing value, giving an
/// expected missing rate of 1/4.
pub fn generate_random(n_v: u64, n_f: u64, seed: u64, sparse: bool) -> PackedVectorSet {
    generate_random_block(seed, 0..n_v, n_f, sparse)
}

/// Per-position pattern counts of a planted dataset, with closed-form
/// expected tallies.
///
/// Every vector of a planted dataset carries the same canonical value at a
/// given position, so all pairs (and triples) of vectors share one known
/// tally, derived purely from how many positions hold each value.
#[derive(Copy, Clone, PartialEq, Eq, Debug)]
pub struct PlantedPattern {
    /// Positions planted with `(0,0)`.
    pub n_zero_zero: u64,
    /// Positions planted with `(0,1)`.
    pub n_zero_one: u64,
    /// Positions planted with `(1,1)`.
    pub n_one_one: u64,
}

impl PlantedPattern {
    pub fn n_f(&self) -> u64 {
        self.n_zero_zero + self.n_zero_one + self.n_one_one
    }

    /// The pair tally shared by every vector pair of the planted set.
    ///
    /// A `(0,0)` position contributes 4 to cell (0,0); a `(1,1)` position 4
    /// to cell (1,1); a `(0,1)` position contributes 1 to each of the four
    /// cells.
    pub fn expected_tally2(&self) -> TallyTable2 {
        let mut t = TallyTable2::default();
        t.add(0, 0, 4 * self.n_zero_zero + self.n_zero_one);
        t.add(0, 1, self.n_zero_one);
        t.add(1, 0, self.n_zero_one);
        t.add(1, 1, 4 * self.n_one_one + self.n_zero_one);
        t
    }

    /// The triple tally shared by every vector triple of the planted set.
    pub fn expected_tally3(&self) -> TallyTable3 {
        let mut t = TallyTable3::default();
        for a in 0..2u8 {
            for b in 0..2u8 {
                for c in 0..2u8 {
                    t.add(a, b, c, self.n_zero_one);
                }
            }
        }
        t.add(0, 0, 0, 8 * self.n_zero_zero);
        t.add(1, 1, 1, 8 * self.n_one_one);
        t
    }
}

/// Plants a dataset whose tallies are known in closed form.
///
/// Each position is assigned one canonical value by a seeded hash and that
/// value is written to *every* vector, so any pair tally equals
/// [`PlantedPattern::expected_tally2`] exactly, independent of which pair
/// is asked.
pub fn generate_verifiable(
    n_v: u64,
    n_f: u64,
    seed: u64,
) -> Result<(PackedVectorSet, PlantedPattern)> {
    if n_v < 2 {
        return Err(Error::InvalidParameter {
            name: "n_v",
            reason: format!("planted datasets need at least 2 vectors, got {n_v}"),
        });
    }
    let n_words = words_for(n_f);
    let mut col0 = vec![0u64; n_words];
    let mut col1 = vec![0u64; n_words];
    let mut pattern = PlantedPattern { n_zero_zero: 0, n_zero_one: 0, n_one_one: 0 };
    for q in 0..n_f {
        let value = match splitmix64(splitmix64(seed) ^ q.wrapping_mul(0x9e3779b97f4a7c15)) % 3 {
            0 => {
                pattern.n_zero_zero += 1;
                CANONICAL_VALUES[0]
            }
            1 => {
                pattern.n_zero_one += 1;
                CANONICAL_VALUES[1]
            }
            _ => {
                pattern.n_one_one += 1;
                CANONICAL_VALUES[2]
            }
        };
        let w = (q / 64) as usize;
        let bit = q % 64;
        col0[w] |= (value.first() as u64) << bit;
        col1[w] |= (value.second() as u64) << bit;
    }
    debug_assert_eq!(pattern.n_f(), n_f);
    let mut plane0 = Vec::with_capacity(n_v as usize * n_words);
    let mut plane1 = Vec::with_capacity(n_v as usize * n_words);
    for _ in 0..n_v {
        plane0.extend_from_slice(&col0);
        plane1.extend_from_slice(&col1);
    }
    let set = PackedVectorSet::from_raw_parts(n_v as usize, n_f, false, plane0, plane1)?;
    Ok((set, pattern))
}

/// A seeded permutation of vector indices.
///
/// `forward[i]` is the output slot of input vector `i`; the record is
/// invertible so a permuted dataset can be restored exactly.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Permutation {
    forward: Vec<u64>,
}

const PERM_MAGIC: &[u8; 8] = b"CCCPERM1";

impl Permutation {
    /// Seeded Fisher–Yates shuffle of `0..n_v` (ChaCha8 keyed by `seed`,
    /// so the mapping is reproducible across platforms).
    pub fn generate(n_v: u64, seed: u64) -> Self {
        let mut slots: Vec<u64> = (0..n_v).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        slots.shuffle(&mut rng);
        // `slots[s]` is the input vector landing in output slot `s`;
        // invert to the forward map.
        let mut forward = vec![0u64; n_v as usize];
        for (s, &i) in slots.iter().enumerate() {
            forward[i as usize] = s as u64;
        }
        Permutation { forward }
    }

    pub fn len(&self) -> usize {
        self.forward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forward.is_empty()
    }

    /// Output slot of input vector `i`.
    pub fn apply(&self, i: u64) -> u64 {
        self.forward[i as usize]
    }

    /// The permutation sending each output slot back to its input vector.
    pub fn inverse(&self) -> Permutation {
        let mut inv = vec![0u64; self.forward.len()];
        for (i, &p) in self.forward.iter().enumerate() {
            inv[p as usize] = i as u64;
        }
        Permutation { forward: inv }
    }

    /// Serializes to a small binary record (magic, count, forward map).
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 8 * self.forward.len());
        out.extend_from_slice(PERM_MAGIC);
        out.extend_from_slice(&(self.forward.len() as u64).to_le_bytes());
        for &p in &self.forward {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }

    /// Parses and validates a serialized permutation.
    pub fn from_bytes(bytes: &[u8], path: &std::path::Path) -> Result<Self> {
        let bad = |reason: &str| Error::BadPermutation {
            path: path.to_path_buf(),
            reason: reason.to_string(),
        };
        if bytes.len() < 16 || &bytes[..8] != PERM_MAGIC {
            return Err(bad("missing magic"));
        }
        let n = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        if bytes.len() != 16 + 8 * n {
            return Err(bad("length disagrees with header"));
        }
        let mut forward = Vec::with_capacity(n);
        for c in bytes[16..].chunks_exact(8) {
            forward.push(u64::from_le_bytes(c.try_into().unwrap()));
        }
        let mut seen = vec![false; n];
        for &p in &forward {
            if p as usize >= n || seen[p as usize] {
                return Err(bad("not a bijection on 0..n_v"));
            }
            seen[p as usize] = true;
        }
        Ok(Permutation { forward })
    }
}

/// Rearranges the vectors of `set` by `perm`: output vector `perm.apply(i)`
/// is input vector `i`, bit-for-bit.
pub fn apply_permutation(set: &PackedVectorSet, perm: &Permutation) -> Result<PackedVectorSet> {
    if perm.len() != set.n_v() {
        return Err(Error::InvalidParameter {
            name: "permutation",
            reason: format!("length {} does not match {} vectors", perm.len(), set.n_v()),
        });
    }
    let mut out = PackedVectorSet::new_zero(set.n_v(), set.n_f(), set.is_sparse());
    for i in 0..set.n_v() {
        let (src0, src1) = set.raw_column_words(i);
        let dst = perm.apply(i as u64) as usize;
        let (dst0, dst1) = out.raw_column_words_mut(dst);
        dst0.copy_from_slice(src0);
        dst1.copy_from_slice(src1);
    }
    Ok(out)
}

/// Seeded random permutation of a dataset's vectors, returning both the
/// shuffled set and the invertible mapping record.
pub fn permute_vectors(
    set: &PackedVectorSet,
    seed: u64,
) -> Result<(PackedVectorSet, Permutation)> {
    let perm = Permutation::generate(set.n_v() as u64, seed);
    let out = apply_permutation(set, &perm)?;
    Ok((out, perm))
}

/// Validates that a generated set has clean padding (all generators uphold
/// this; exposed for tests and file readers).
pub fn padding_clean(set: &PackedVectorSet) -> bool {
    let mask = tail_mask(set.n_f());
    (0..set.n_v()).all(|i| {
        let col = set.column(i);
        match col.plane0.last().zip(col.plane1.last()) {
            Some((&w0, &w1)) => w0 & !mask == 0 && w1 & !mask == 0,
            None => true,
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::element::SiteValue;

    #[test]
    fn random_generation_is_deterministic() {
        let a = generate_random(6, 200, 42, false);
        let b = generate_random(6, 200, 42, false);
        assert_eq!(a, b);
        let c = generate_random(6, 200, 43, false);
        assert_ne!(a, c, "different seeds must produce different data");
    }

    #[test]
    fn random_elements_are_index_keyed() {
        let whole = generate_random(8, 130, 7, false);
        let left = generate_random_block(7, 0..5, 130, false);
        let right = generate_random_block(7, 5..8, 130, false);
        for i in 0..5 {
            assert_eq!(whole.column(i).plane0, left.column(i).plane0);
            assert_eq!(whole.column(i).plane1, left.column(i).plane1);
        }
        for i in 5..8 {
            assert_eq!(whole.column(i).plane0, right.column(i - 5).plane0);
            assert_eq!(whole.column(i).plane1, right.column(i - 5).plane1);
        }
        // Spot-check one element against the pure per-element hash.
        let (b0, b1) = random_element_bits(7, 2, 57);
        let (b0, b1) = if b0 == 1 && b1 == 0 { (0, 1) } else { (b0, b1) };
        match whole.get(2, 57) {
            SiteValue::Present(e) => {
                assert_eq!((e.first() as u64, e.second() as u64), (b0, b1));
            }
            SiteValue::Missing => panic!("dense data cannot be missing"),
        }
    }

    #[test]
    fn dense_random_is_canonical() {
        let set = generate_random(4, 500, 3, false);
        for row in set.decode() {
            for v in row {
                match v {
                    SiteValue::Present(e) => assert!(!e.is_null_pattern()),
                    SiteValue::Missing => panic!("dense data cannot be missing"),
                }
            }
        }
        assert!(padding_clean(&set));
    }

    #[test]
    fn sparse_random_contains_missing() {
        let set = generate_random(4, 500, 3, true);
        let missing: usize = set
            .decode()
            .iter()
            .flatten()
            .filter(|v| v.is_missing())
            .count();
        // Expected rate 1/4 over 2000 elements; allow a wide band.
        assert!(missing > 300 && missing < 700, "missing count {missing}");
    }

    #[test]
    fn planted_pattern_counts_sum_to_n_f() {
        let (set, pattern) = generate_verifiable(5, 137, 11).unwrap();
        assert_eq!(pattern.n_f(), 137);
        assert_eq!(set.n_v(), 5);
        // All vectors identical by construction.
        for i in 1..5 {
            assert_eq!(set.column(0).plane0, set.column(i).plane0);
            assert_eq!(set.column(0).plane1, set.column(i).plane1);
        }
    }

    #[test]
    fn planted_needs_two_vectors() {
        assert!(generate_verifiable(1, 10, 0).is_err());
    }

    #[test]
    fn expected_tally_closed_forms() {
        // All positions (0,1): every cell equals n_f.
        let p = PlantedPattern { n_zero_zero: 0, n_zero_one: 9, n_one_one: 0 };
        let t = p.expected_tally2();
        for a in 0..2u8 {
            for b in 0..2u8 {
                assert_eq!(t.get(a, b), 9);
            }
        }
        // All positions (0,0): everything lands in cell (0,0).
        let p = PlantedPattern { n_zero_zero: 12, n_zero_one: 0, n_one_one: 0 };
        assert_eq!(p.expected_tally2().get(0, 0), 48);
        assert_eq!(p.expected_tally2().sum(), 48);
        // Mixed homozygous plants split cleanly between the corners.
        let p = PlantedPattern { n_zero_zero: 5, n_zero_one: 0, n_one_one: 7 };
        let t = p.expected_tally2();
        assert_eq!((t.get(0, 0), t.get(0, 1), t.get(1, 0), t.get(1, 1)), (20, 0, 0, 28));
    }

    #[test]
    fn permutation_round_trip() {
        let set = generate_random(10, 77, 5, false);
        let (shuffled, perm) = permute_vectors(&set, 99).unwrap();
        let restored = apply_permutation(&shuffled, &perm.inverse()).unwrap();
        assert_eq!(set, restored);
    }

    #[test]
    fn permutation_of_one_is_identity() {
        let perm = Permutation::generate(1, 3);
        assert_eq!(perm.apply(0), 0);
    }

    #[test]
    fn permutation_serialization_round_trip() {
        let perm = Permutation::generate(17, 4);
        let bytes = perm.to_bytes();
        let back = Permutation::from_bytes(&bytes, std::path::Path::new("mem")).unwrap();
        assert_eq!(perm, back);
    }

    #[test]
    fn permutation_rejects_corrupt_records() {
        let perm = Permutation::generate(4, 4);
        let mut bytes = perm.to_bytes();
        bytes[16] = 200; // entry out of range
        assert!(Permutation::from_bytes(&bytes, std::path::Path::new("mem")).is_err());
        let mut dup = perm.to_bytes();
        let first = dup[16];
        dup[24] = first; // duplicate entry
        assert!(Permutation::from_bytes(&dup, std::path::Path::new("mem")).is_err());
    }
}
