//! Whole runs through the driver: configuration in, record files out.
//!
//! The driver resolves a configuration (data source, engine, grid,
//! threshold) into a finished run: per-rank binary record files, a JSON
//! manifest whose rank checksums sum to the run checksum, and a printable
//! summary. This is the same path the `ccc run` command takes.
//!
//! Run with: `cargo run --example batch_runs`

use ccc_core::{
    execute_run, manifest_checksum_consistent, read_all_records2, read_manifest, DataSpec,
    RunConfig, RunSettings, SyntheticKind,
};

fn main() {
    let dir = tempfile::tempdir().unwrap();

    // A multi-rank pair run over synthetic data, verified against the
    // reference engine, thresholded to keep only the strongest records.
    let config = RunConfig {
        data: DataSpec::Synthetic {
            kind: SyntheticKind::Random,
            n_v: 16,
            n_f: 400,
            seed: 8,
            sparse: false,
        },
        n_pv: 3,
        n_pr: 2,
        settings: RunSettings { threshold: 0.118, ..RunSettings::default() },
        verify: true,
        out_dir: Some(dir.path().to_path_buf()),
        ..RunConfig::default()
    };
    let summary = execute_run(&config).unwrap();
    println!("{summary}");

    // The manifest ties the rank files together.
    let manifest = read_manifest(dir.path()).unwrap();
    println!("\nmanifest lists {} rank file(s):", manifest.ranks.len());
    for rank in &manifest.ranks {
        println!("  {} -> {} record(s), contribution {}", rank.file, rank.records, rank.checksum);
    }
    assert!(manifest_checksum_consistent(&manifest).unwrap());
    println!("rank contributions sum (mod 2^128) to the run checksum");

    // Records read back exactly; only cells above the threshold survived.
    let records = read_all_records2(dir.path(), &manifest).unwrap();
    assert_eq!(records.len() as u64, manifest.records);
    println!(
        "\n{} of {} pairs exceeded threshold {}:",
        records.len(),
        16 * 15 / 2,
        manifest.threshold
    );
    for r in &records {
        let peak = r.values.iter().cloned().fold(f64::MIN, f64::max);
        println!("  ({:2}, {:2}) peak cell {:.5}", r.i, r.j, peak);
        assert!(peak > manifest.threshold);
    }
}
