//! The packed representation and the popcount tally, end to end on a
//! dataset small enough to eyeball.
//!
//! Two vectors of 2-bit elements are packed across split bit planes, their
//! co-occurrence table is computed by the word kernel, and the same table
//! is recomputed by literal enumeration to show they agree.
//!
//! Run with: `cargo run --example pack_and_tally`

use ccc_core::{oracle_tally2, word_tally, Element2, PackedVectorSet, SiteValue};

fn parse_row(text: &str) -> Vec<SiteValue> {
    text.split_whitespace()
        .map(|tok| {
            let bytes = tok.as_bytes();
            let e = Element2::new(bytes[0] - b'0', bytes[1] - b'0').unwrap();
            SiteValue::Present(e)
        })
        .collect()
}

fn main() {
    // Ten elements per vector; order inside an element carries no meaning,
    // so the (1,0) written below is stored canonically as (0,1).
    let rows = vec![
        parse_row("00 01 11 00 01 11 00 01 11 00"),
        parse_row("00 00 11 01 01 10 11 11 00 01"),
    ];
    let n_f = rows[0].len() as u64;
    let set = PackedVectorSet::encode(&rows, n_f, false).unwrap();

    println!("packed {} vectors x {} elements into {} word(s) per plane", set.n_v(), n_f, set.n_words());
    for i in 0..set.n_v() {
        let col = set.column(i);
        println!("vector {i}: plane0 = {:#012b}, plane1 = {:#012b}", col.plane0[0], col.plane1[0]);
    }

    // The 2x2 tally between the two vectors: cell (a, b) counts component
    // pairs where vector 0 shows allele a and vector 1 shows allele b,
    // each element contributing its two components.
    let a = set.column(0);
    let b = set.column(1);
    let t = word_tally(a.plane0[0], a.plane1[0], b.plane0[0], b.plane1[0], set.tail_mask());
    println!("\npopcount tally:");
    for row in 0..2u8 {
        println!("  t[{row}][0] = {:2}   t[{row}][1] = {:2}", t.get(row, 0), t.get(row, 1));
    }

    // Independent check by per-element enumeration over the decoded rows.
    let (expect, _) = oracle_tally2(&rows[0], &rows[1]);
    assert_eq!(t, expect, "kernel and enumeration must agree");
    println!("\nenumeration over decoded elements produces the same table");

    // Every dense table distributes 4 counts per element: two components
    // on each side make four component pairings.
    assert_eq!(t.sum(), 4 * n_f);
    println!("table total {} = 4 x {n_f} elements, as conservation demands", t.sum());
}
