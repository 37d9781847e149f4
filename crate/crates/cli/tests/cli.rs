//! End-to-end checks of the `ccc` binary: every subcommand, the exit-code
//! taxonomy, config-file precedence, and checksum partition identities,
//! all through real process invocations.

use std::path::Path;
use std::process::{Command, Output};

use ccc_core::read_manifest;

fn ccc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ccc"))
        .args(args)
        .output()
        .expect("spawn ccc")
}

fn run_ok(args: &[&str]) -> String {
    let out = ccc(args);
    assert!(
        out.status.success(),
        "ccc {args:?} failed with {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).expect("utf-8 stdout")
}

fn exit_code(args: &[&str]) -> i32 {
    ccc(args).status.code().expect("exit code")
}

/// The bare checksum printed by `--checksum`: the final stdout line,
/// 32 lowercase hex digits.
fn checksum_line(stdout: &str) -> u128 {
    let line = stdout.lines().last().expect("nonempty stdout");
    assert_eq!(line.len(), 32, "checksum line {line:?}");
    assert!(line.bytes().all(|b| b.is_ascii_hexdigit() && !b.is_ascii_uppercase()));
    u128::from_str_radix(line, 16).expect("hex checksum")
}

fn path_str(path: &Path) -> &str {
    path.to_str().expect("utf-8 path")
}

#[test]
fn gen_writes_a_deterministic_dataset() {
    let dir = tempfile::TempDir::new().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let c = dir.path().join("c");
    for out in [&a, &b] {
        run_ok(&["gen", "--n-v", "10", "--n-f", "100", "--seed", "7", "--out-dir",
                 path_str(out)]);
    }
    run_ok(&["gen", "--n-v", "10", "--n-f", "100", "--seed", "8", "--out-dir",
             path_str(&c)]);
    let bytes_a = std::fs::read(a.join("dataset.bin")).unwrap();
    let bytes_b = std::fs::read(b.join("dataset.bin")).unwrap();
    let bytes_c = std::fs::read(c.join("dataset.bin")).unwrap();
    assert_eq!(bytes_a, bytes_b, "same seed, same bytes");
    assert_ne!(bytes_a, bytes_c, "different seed, different bytes");
}

#[test]
fn permuted_datasets_keep_their_record_count() {
    let dir = tempfile::TempDir::new().unwrap();
    let data = dir.path().join("data");
    let perm = dir.path().join("perm");
    run_ok(&["gen", "--n-v", "12", "--n-f", "96", "--sparse", "--out-dir",
             path_str(&data)]);
    run_ok(&["permute", "--input", path_str(&data.join("dataset.bin")), "--seed", "3",
             "--out-dir", path_str(&perm)]);
    assert!(perm.join("permuted.bin").is_file());
    assert!(perm.join("permutation.bin").is_file());

    let original = run_ok(&["run", "--input", path_str(&data.join("dataset.bin"))]);
    let permuted = run_ok(&["run", "--input", path_str(&perm.join("permuted.bin"))]);
    let records = |stdout: &str| {
        stdout
            .lines()
            .find_map(|l| l.strip_prefix("records kept: "))
            .and_then(|rest| rest.split(' ').next())
            .map(str::to_owned)
            .expect("records line")
    };
    assert_eq!(records(&original), records(&permuted));
}

#[test]
fn verified_runs_print_checksums_and_complete_manifests() {
    let dir = tempfile::TempDir::new().unwrap();
    let out = dir.path().join("out");
    let stdout = run_ok(&["run", "--num-way", "2", "--synthetic", "random", "--n-v", "64",
                          "--n-f", "1000", "--verify", "--checksum", "--out-dir",
                          path_str(&out)]);
    assert!(stdout.contains("verified: engine output matches the reference"));
    let checksum = checksum_line(&stdout);

    let manifest = read_manifest(&out).unwrap();
    assert_eq!(manifest.records, 64 * 63 / 2, "threshold 0 keeps every pair");
    assert_eq!(manifest.checksum, format!("{checksum:032x}"));
    for rank in &manifest.ranks {
        assert!(out.join(&rank.file).is_file(), "missing {}", rank.file);
    }
}

#[test]
fn infinite_thresholds_keep_the_manifest_and_drop_every_record() {
    let dir = tempfile::TempDir::new().unwrap();
    let out = dir.path().join("out");
    let stdout = run_ok(&["run", "--n-v", "8", "--n-f", "64", "--threshold", "inf",
                          "--checksum", "--out-dir", path_str(&out)]);
    checksum_line(&stdout);
    let manifest = read_manifest(&out).unwrap();
    assert_eq!(manifest.records, 0);
    assert_eq!(manifest.skipped, 8 * 7 / 2);
    assert!(out.join(&manifest.ranks[0].file).is_file());
}

#[test]
fn stage_slices_sum_to_the_full_triple_checksum() {
    let base = ["run", "--num-way", "3", "--n-v", "12", "--n-f", "64", "--seed", "9",
                "--n-pv", "2", "--n-st", "4", "--checksum"];
    let full = checksum_line(&run_ok(&base));
    let mut sum = 0u128;
    for stage in ["0", "1", "2", "3"] {
        let mut args = base.to_vec();
        args.extend(["--stage", stage]);
        sum = sum.wrapping_add(checksum_line(&run_ok(&args)));
    }
    assert_eq!(sum, full, "stage runs partition the full run");
}

#[test]
fn phase_slices_sum_to_the_full_pair_checksum() {
    let base = ["run", "--num-way", "2", "--n-v", "14", "--n-f", "64", "--seed", "9",
                "--n-pv", "3", "--n-phases", "3", "--checksum"];
    let full = checksum_line(&run_ok(&base));
    let mut sum = 0u128;
    for phase in ["0", "1", "2"] {
        let mut args = base.to_vec();
        args.extend(["--phase", phase]);
        sum = sum.wrapping_add(checksum_line(&run_ok(&args)));
    }
    assert_eq!(sum, full, "phase runs partition the full run");
}

#[test]
fn config_files_drive_runs_and_flags_override_them() {
    let dir = tempfile::TempDir::new().unwrap();
    let out = dir.path().join("out");
    let config = dir.path().join("preset.conf");
    std::fs::write(
        &config,
        format!(
            "# preset: tiny pair run, keep nothing\nn-v = 8\nn-f = 64\nseed = 4\n\
             threshold = inf\nchecksum = true\nout-dir = {}\n",
            out.display()
        ),
    )
    .unwrap();

    let stdout = run_ok(&["run", "--config", path_str(&config)]);
    checksum_line(&stdout);
    assert_eq!(read_manifest(&out).unwrap().records, 0, "preset threshold keeps none");

    // The explicit flag overrides the preset's threshold.
    let stdout = run_ok(&["run", "--config", path_str(&config), "--threshold", "0"]);
    checksum_line(&stdout);
    assert_eq!(read_manifest(&out).unwrap().records, 8 * 7 / 2);
}

#[test]
fn estimate_reproduces_the_model_hand_values_and_rates() {
    let pair = run_ok(&["estimate", "--t-c", "1", "--t-tv", "2", "--load", "25",
                        "--t-g2", "3", "--t-tm", "4", "--t-cpu", "5"]);
    assert!(pair.contains("estimated 2-way rank time: 87 s"), "stdout: {pair}");
    let triple = run_ok(&["estimate", "--num-way", "3", "--load", "6", "--n-vp", "12",
                          "--n-st", "2", "--t-g3", "1"]);
    assert!(triple.contains("estimated 3-way rank time: 18 s"), "stdout: {triple}");
    let rate = run_ok(&["estimate", "--elapsed", "2", "--comparisons", "10"]);
    assert!(rate.contains("5.0000e0/s"), "stdout: {rate}");
}

#[test]
fn verify_subcommand_sweeps_engines_and_agrees() {
    let stdout = run_ok(&["verify", "--n-v", "12", "--n-f", "130", "--n-pv", "3",
                          "--n-pr", "2", "--n-phases", "2"]);
    assert!(stdout.contains("run reference:"));
    assert!(stdout.contains("run kernel:"));
    assert!(stdout.contains("all runs agree"), "stdout: {stdout}");
}

#[test]
fn exit_codes_separate_validation_verification_and_io() {
    // Validation: impossible arity, shapeless run, selector out of range,
    // bad flag value, missing subcommand.
    assert_eq!(exit_code(&["run", "--num-way", "5", "--n-v", "4", "--n-f", "8"]), 1);
    assert_eq!(exit_code(&["run"]), 1);
    assert_eq!(
        exit_code(&["run", "--n-v", "6", "--n-f", "64", "--n-phases", "2", "--phase", "2"]),
        1
    );
    assert_eq!(exit_code(&["run", "--n-v", "six", "--n-f", "64"]), 1);
    assert_eq!(exit_code(&[]), 1);
    assert_eq!(exit_code(&["estimate", "--elapsed", "2"]), 1);
    assert_eq!(exit_code(&["estimate", "--elapsed", "0", "--comparisons", "5"]), 1);

    // I/O: missing dataset file.
    assert_eq!(exit_code(&["run", "--input", "/definitely/not/here.bin"]), 3);
    assert_eq!(exit_code(&["permute", "--input", "/nope.bin", "--out-dir", "/tmp"]), 3);

    // Help and version are successes.
    assert_eq!(exit_code(&["--help"]), 0);
    assert_eq!(exit_code(&["--version"]), 0);
    assert_eq!(exit_code(&["run", "--help"]), 0);
}
