//! The packed dataset file and its ranged reads.
//!
//! A dataset is stored as one binary file: a fixed header, then each
//! vector's two bit planes contiguously. Workers never need the whole
//! file — a reader can pull a column range (a tile of vectors) restricted
//! to a word range (a slice of positions), which is exactly the unit the
//! distributed engine assigns to a rank.
//!
//! Run with: `cargo run --example dataset_files`

use ccc_core::{
    generate_random, read_columns, read_dataset, read_header, read_tile, write_dataset,
};

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("dataset.bin");

    let set = generate_random(12, 1000, 5, true);
    write_dataset(&set, &path).unwrap();
    let bytes = std::fs::metadata(&path).unwrap().len();
    println!(
        "wrote {} vectors x {} positions ({} plane words each) in {bytes} bytes",
        set.n_v(),
        set.n_f(),
        set.n_words()
    );

    // The header alone answers the shape questions.
    let header = read_header(&path).unwrap();
    println!(
        "header: n_v = {}, n_f = {}, sparse = {}",
        header.n_v, header.n_f, header.sparse
    );

    // Full read round-trips exactly.
    assert_eq!(read_dataset(&path).unwrap(), set);
    println!("full read returns the identical set");

    // A column range: vectors 3..7, all positions.
    let cols = read_columns(&path, 3..7).unwrap();
    assert_eq!(cols, set.extract_columns(3..7).unwrap());
    println!("column read 3..7 matches the in-memory extraction");

    // A tile: vectors 3..7 restricted to plane words 4..9 — what a rank
    // owning that grid cell would fetch, nothing more.
    let tile = read_tile(&path, 3..7, 4..9).unwrap();
    assert_eq!(tile, set.extract_tile(3..7, 4..9).unwrap());
    println!(
        "tile read (vectors 3..7, words 4..9) holds {} vectors x {} positions",
        tile.n_v(),
        tile.n_f()
    );
}
