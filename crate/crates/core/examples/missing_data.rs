//! Sparse mode: the fourth bit pattern marks missing elements.
//!
//! Dense data uses three canonical element values and folds the leftover
//! (1,0) pattern into (0,1). Sparse data spends that pattern as a missing
//! marker instead: tallies then only count positions present on both
//! sides, tables sum to 4x the overlap rather than 4x the length, and a
//! pair with no overlap at all has no defined coefficient.
//!
//! Run with: `cargo run --example missing_data`

use ccc_core::{
    allele_frequencies, ccc2, oracle_tally2, CccParams, Element2, Error, PackedVectorSet,
    SiteValue,
};

fn row(pattern: &str) -> Vec<SiteValue> {
    pattern
        .split_whitespace()
        .map(|tok| match tok {
            ".." => SiteValue::Missing,
            t => {
                let b = t.as_bytes();
                SiteValue::Present(Element2::new(b[0] - b'0', b[1] - b'0').unwrap())
            }
        })
        .collect()
}

fn main() {
    let rows = vec![
        row("00 01 .. 11 01 .. 00 11"),
        row("01 .. 01 11 00 11 .. 01"),
        row(".. .. .. .. 01 11 00 01"),
        row("11 01 00 11 .. .. .. .."), // no overlap with vector 2
    ];
    let n_f = rows[0].len() as u64;
    let set = PackedVectorSet::encode(&rows, n_f, true).unwrap();
    println!("encoded {} sparse vectors of {} positions", set.n_v(), n_f);

    let freq = allele_frequencies(&set);
    for i in 0..set.n_v() as u64 {
        let c = freq.counts(i);
        println!("  vector {i}: {} of {} positions present", c.valid, n_f);
    }

    // Pairwise tallies count only mutually present positions.
    println!("\npair overlaps (table sum = 4 x overlap):");
    for i in 0..set.n_v() {
        for j in (i + 1)..set.n_v() {
            let (t, valid) = oracle_tally2(&rows[i], &rows[j]);
            println!("  ({i}, {j}): overlap {valid}, table sum {}", t.sum());
            assert_eq!(t.sum(), 4 * valid);
        }
    }

    // Vectors 2 and 3 never coincide, so their coefficient is undefined;
    // engines skip such pairs and count them rather than failing the run.
    let (t, _) = oracle_tally2(&rows[2], &rows[3]);
    match ccc2(&t, freq.counts(2), freq.counts(3), &CccParams::default()) {
        Err(Error::ZeroValidOverlap) => {
            println!("\npair (2, 3) has zero overlap: coefficient undefined, pair skipped")
        }
        other => panic!("expected the zero-overlap error, got {other:?}"),
    }
}
