//! Order-independent exact checksum over result records.
//!
//! Every result record — canonical indices plus its integer tally cells —
//! is serialized to a fixed word sequence, mixed into a 128-bit digest,
//! and the digests are combined by wrapping addition. Addition commutes,
//! so the checksum of a run is independent of the order records were
//! produced in and of how they were partitioned across ranks or phases:
//! partial checksums of a disjoint cover sum to the whole run's checksum.
//!
//! The mixer is the standard 64-bit avalanche finalizer (xor-shift /
//! multiply rounds with the murmur-style constants); each digest lane gets
//! two extra finalizer rounds after absorbing the record words, which is
//! plenty to keep near-identical records from canceling under addition.

use crate::tally::{TallyTable2, TallyTable3};

/// 64-bit avalanche finalizer.
fn fmix64(mut x: u64) -> u64 {
    x ^= x >> 33;
    x = x.wrapping_mul(0xff51afd7ed558ccd);
    x ^= x >> 33;
    x = x.wrapping_mul(0xc4ceb9fe1a85ec53);
    x ^= x >> 33;
    x
}

/// Digest of one record's word sequence: two coupled 64-bit lanes, each
/// finished with two finalizer rounds.
fn record_digest(words: &[u64]) -> u128 {
    let mut lane0: u64 = 0x243f_6a88_85a3_08d3; // distinct nonzero lane seeds
    let mut lane1: u64 = 0x1319_8a2e_0370_7344;
    for (idx, &w) in words.iter().enumerate() {
        lane0 = fmix64(lane0 ^ w);
        lane1 = fmix64(lane1 ^ w.rotate_left(32) ^ lane0 ^ idx as u64);
    }
    lane0 = fmix64(fmix64(lane0));
    lane1 = fmix64(fmix64(lane1));
    ((lane1 as u128) << 64) | lane0 as u128
}

/// Accumulates record digests commutatively. The empty checksum is zero.
#[derive(Copy, Clone, Default, PartialEq, Eq, Debug)]
pub struct ChecksumState {
    acc: u128,
}

impl ChecksumState {
    pub fn new() -> Self {
        ChecksumState::default()
    }

    /// Absorbs a pair record: arity tag, canonical indices, tally cells.
    pub fn add_pair(&mut self, i: u64, j: u64, t: &TallyTable2) {
        debug_assert!(i < j, "records use canonical index order");
        let cells = t.as_words();
        let words = [2u64, i, j, cells[0], cells[1], cells[2], cells[3]];
        self.acc = self.acc.wrapping_add(record_digest(&words));
    }

    /// Absorbs a triple record.
    pub fn add_triple(&mut self, i: u64, j: u64, k: u64, t: &TallyTable3) {
        debug_assert!(i < j && j < k, "records use canonical index order");
        let c = t.as_words();
        let words = [3u64, i, j, k, c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7]];
        self.acc = self.acc.wrapping_add(record_digest(&words));
    }

    /// Folds another partial checksum in (order-independent).
    pub fn merge(&mut self, other: &ChecksumState) {
        self.acc = self.acc.wrapping_add(other.acc);
    }

    pub fn value(&self) -> u128 {
        self.acc
    }

    /// 32 lowercase hex digits.
    pub fn hex(&self) -> String {
        format!("{:032x}", self.acc)
    }
}

/// The sum (mod 2^128) of a set of partial checksum values — what a
/// disjoint cover of the record set must total to.
pub fn combine(parts: impl IntoIterator<Item = u128>) -> u128 {
    parts.into_iter().fold(0u128, |a, b| a.wrapping_add(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn table2(cells: [[u64; 2]; 2]) -> TallyTable2 {
        TallyTable2::from_cells(cells)
    }

    #[test]
    fn empty_checksum_is_zero() {
        assert_eq!(ChecksumState::new().value(), 0);
        assert_eq!(ChecksumState::new().hex(), "0".repeat(32));
    }

    #[test]
    fn insertion_order_does_not_matter() {
        let a = table2([[4, 0], [0, 0]]);
        let b = table2([[1, 1], [1, 1]]);
        let mut fwd = ChecksumState::new();
        fwd.add_pair(0, 1, &a);
        fwd.add_pair(1, 2, &b);
        let mut rev = ChecksumState::new();
        rev.add_pair(1, 2, &b);
        rev.add_pair(0, 1, &a);
        assert_eq!(fwd.value(), rev.value());
        assert_ne!(fwd.value(), 0);
    }

    #[test]
    fn partition_checksums_sum_to_the_whole() {
        let tables: Vec<TallyTable2> = (0..10)
            .map(|n| table2([[n, n + 1], [2 * n, 3 * n + 7]]))
            .collect();
        let mut whole = ChecksumState::new();
        for (n, t) in tables.iter().enumerate() {
            whole.add_pair(n as u64, n as u64 + 1, t);
        }
        let mut left = ChecksumState::new();
        let mut right = ChecksumState::new();
        for (n, t) in tables.iter().enumerate() {
            if n % 3 == 0 {
                left.add_pair(n as u64, n as u64 + 1, t);
            } else {
                right.add_pair(n as u64, n as u64 + 1, t);
            }
        }
        assert_eq!(combine([left.value(), right.value()]), whole.value());
        let mut merged = left;
        merged.merge(&right);
        assert_eq!(merged.value(), whole.value());
    }

    #[test]
    fn checksum_distinguishes_indices_and_cells() {
        let t = table2([[4, 0], [0, 0]]);
        let mut by_index = ChecksumState::new();
        by_index.add_pair(0, 1, &t);
        let mut other_index = ChecksumState::new();
        other_index.add_pair(0, 2, &t);
        assert_ne!(by_index.value(), other_index.value());

        let mut by_cell = ChecksumState::new();
        by_cell.add_pair(0, 1, &table2([[0, 4], [0, 0]]));
        assert_ne!(by_index.value(), by_cell.value());
    }

    #[test]
    fn triple_records_and_pair_records_never_collide() {
        // Same leading words, different arity tag.
        let t2 = table2([[1, 2], [3, 4]]);
        let mut p = ChecksumState::new();
        p.add_pair(1, 2, &t2);
        let mut t3 = TallyTable3::default();
        t3.add(0, 0, 0, 1);
        let mut q = ChecksumState::new();
        q.add_triple(1, 2, 3, &t3);
        assert_ne!(p.value(), q.value());
    }

    #[test]
    fn digest_collision_smoke() {
        // Ten thousand distinct records, all digests distinct.
        let mut seen = HashSet::new();
        for i in 0..100u64 {
            for j in (i + 1)..(i + 101) {
                let mut s = ChecksumState::new();
                s.add_pair(i, j, &table2([[i, j], [i ^ j, i + j]]));
                assert!(seen.insert(s.value()), "collision at ({i},{j})");
            }
        }
        assert_eq!(seen.len(), 10_000);
    }
}
