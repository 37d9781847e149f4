//! Run outputs on disk: one small binary record file per rank plus a JSON
//! manifest tying them together.
//!
//! A record file is a headerless sequence of fixed-size little-endian
//! records — the canonical indices as `u64`, then the coefficient cells in
//! the run's precision (`f64` or `f32`). The manifest carries everything
//! needed to parse the files (arity, precision, shapes) along with run
//! totals and each rank's checksum contribution; the contributions sum,
//! modulo 2^128, to the run checksum.

use crate::checksum::combine;
use crate::engine::{EngineOutput, RankOutput};
use crate::error::{Error, Result};
use crate::metrics::{Precision, Record2, Record3};
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

/// File name of rank `rank`'s record file.
pub fn rank_file_name(rank: usize) -> String {
    format!("rank-{rank:05}.rec")
}

/// File name of the run manifest.
pub const MANIFEST_NAME: &str = "manifest.json";

/// A record that can serialize itself into a rank file.
pub trait RecordBytes {
    /// Index count (2 or 3) — with the precision, fixes the record size.
    const INDEX_COUNT: usize;

    fn append_to(&self, buf: &mut Vec<u8>, precision: Precision);
}

fn append_values(buf: &mut Vec<u8>, values: &[f64], precision: Precision) {
    match precision {
        Precision::Double => {
            for v in values {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        Precision::Single => {
            for v in values {
                buf.extend_from_slice(&(*v as f32).to_le_bytes());
            }
        }
    }
}

impl RecordBytes for Record2 {
    const INDEX_COUNT: usize = 2;

    fn append_to(&self, buf: &mut Vec<u8>, precision: Precision) {
        buf.extend_from_slice(&self.i.to_le_bytes());
        buf.extend_from_slice(&self.j.to_le_bytes());
        append_values(buf, &self.values, precision);
    }
}

impl RecordBytes for Record3 {
    const INDEX_COUNT: usize = 3;

    fn append_to(&self, buf: &mut Vec<u8>, precision: Precision) {
        buf.extend_from_slice(&self.i.to_le_bytes());
        buf.extend_from_slice(&self.j.to_le_bytes());
        buf.extend_from_slice(&self.k.to_le_bytes());
        append_values(buf, &self.values, precision);
    }
}

/// Bytes per stored record for an arity and precision.
pub fn record_size(index_count: usize, precision: Precision) -> usize {
    let value_count = 1 << index_count; // 4 cells for pairs, 8 for triples
    index_count * 8
        + value_count
            * match precision {
                Precision::Double => 8,
                Precision::Single => 4,
            }
}

/// Grid shape as recorded in a manifest.
#[derive(Copy, Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct ManifestGrid {
    pub n_pf: usize,
    pub n_pv: usize,
    pub n_pr: usize,
}

/// One rank's line in the manifest.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct ManifestRank {
    pub rank: usize,
    pub file: String,
    pub records: u64,
    /// This rank's checksum contribution, 32 lowercase hex digits.
    pub checksum: String,
}

/// The sidecar describing one finished run.
#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub num_way: u8,
    pub n_v: u64,
    pub n_f: u64,
    pub sparse: bool,
    pub gamma: f64,
    pub precision: String,
    #[serde(with = "wide_f64")]
    pub threshold: f64,
    pub engine: String,
    pub grid: ManifestGrid,
    pub n_phases: usize,
    pub phase: Option<usize>,
    pub n_st: usize,
    pub stage: Option<usize>,
    pub records: u64,
    pub skipped: u64,
    pub comparisons: u64,
    pub elapsed_seconds: f64,
    pub comparisons_per_second: f64,
    /// Run checksum, 32 lowercase hex digits.
    pub checksum: String,
    pub ranks: Vec<ManifestRank>,
}

/// JSON numbers cannot carry infinities, but an infinite threshold is the
/// legitimate "keep none" sentinel — non-finite values ride as strings.
mod wide_f64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if *v == f64::INFINITY {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Wide {
            Num(f64),
            Text(String),
        }
        match Wide::deserialize(d)? {
            Wide::Num(v) => Ok(v),
            Wide::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                other => Err(serde::de::Error::custom(format!(
                    "{other:?} is neither a number nor an infinity marker"
                ))),
            },
        }
    }
}

/// Formats a checksum the way manifests and the command line print it.
pub fn checksum_hex(value: u128) -> String {
    format!("{value:032x}")
}

/// Parses a 32-digit checksum back to its integer value.
pub fn parse_checksum_hex(text: &str) -> Result<u128> {
    u128::from_str_radix(text, 16).map_err(|e| Error::InvalidParameter {
        name: "checksum",
        reason: format!("{text:?} is not a hex checksum: {e}"),
    })
}

/// True when the per-rank contributions sum (mod 2^128) to the manifest's
/// run checksum.
pub fn manifest_checksum_consistent(manifest: &Manifest) -> Result<bool> {
    let parts = manifest
        .ranks
        .iter()
        .map(|r| parse_checksum_hex(&r.checksum))
        .collect::<Result<Vec<_>>>()?;
    Ok(combine(parts) == parse_checksum_hex(&manifest.checksum)?)
}

/// Writes one record file per rank into `dir` and returns the manifest
/// lines. Every rank gets a file, even when it emitted nothing — an empty
/// file is a reducer rank's honest report.
pub fn write_rank_files<R: RecordBytes>(
    dir: &Path,
    ranks: &[RankOutput<R>],
    precision: Precision,
) -> Result<Vec<ManifestRank>> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut entries = Vec::with_capacity(ranks.len());
    for rank in ranks {
        let name = rank_file_name(rank.rank);
        let path = dir.join(&name);
        let mut buf =
            Vec::with_capacity(rank.records.len() * record_size(R::INDEX_COUNT, precision));
        for record in &rank.records {
            record.append_to(&mut buf, precision);
        }
        fs::write(&path, &buf).map_err(|e| io_err(&path, e))?;
        entries.push(ManifestRank {
            rank: rank.rank,
            file: name,
            records: rank.records.len() as u64,
            checksum: checksum_hex(rank.checksum.value()),
        });
    }
    Ok(entries)
}

/// Writes `manifest.json` into `dir`.
pub fn write_manifest(dir: &Path, manifest: &Manifest) -> Result<PathBuf> {
    let path = dir.join(MANIFEST_NAME);
    let text = serde_json::to_string_pretty(manifest).map_err(|e| Error::Json {
        path: path.clone(),
        reason: e.to_string(),
    })?;
    fs::write(&path, text).map_err(|e| io_err(&path, e))?;
    Ok(path)
}

/// Reads `manifest.json` from `dir`.
pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST_NAME);
    let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Json { path, reason: e.to_string() })
}

/// A pair record as read back from a rank file (coefficients only — the
/// integer tallies live upstream of the writer).
#[derive(Copy, Clone, PartialEq, Debug)]
pub struct StoredRecord2 {
    pub i: u64,
    pub j: u64,
    pub values: [f64; 4],
}

/// A triple record as read back from a rank file.
#[derive(Copy, Clone, PartialEq, Debug)]
pub struct StoredRecord3 {
    pub i: u64,
    pub j: u64,
    pub k: u64,
    pub values: [f64; 8],
}

fn read_record_file(path: &Path, index_count: usize, precision: Precision) -> Result<Vec<Vec<f64>>> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| io_err(path, e))?;
    let size = record_size(index_count, precision);
    if bytes.len() % size != 0 {
        return Err(Error::PayloadMismatch {
            path: path.to_path_buf(),
            expected: (bytes.len() / size * size) as u64,
            got: bytes.len() as u64,
        });
    }
    let value_count = 1 << index_count;
    let mut records = Vec::with_capacity(bytes.len() / size);
    for chunk in bytes.chunks_exact(size) {
        let mut fields = Vec::with_capacity(index_count + value_count);
        for idx in 0..index_count {
            let raw: [u8; 8] = chunk[idx * 8..idx * 8 + 8].try_into().expect("sized chunk");
            fields.push(u64::from_le_bytes(raw) as f64);
        }
        let mut off = index_count * 8;
        for _ in 0..value_count {
            let v = match precision {
                Precision::Double => {
                    let raw: [u8; 8] = chunk[off..off + 8].try_into().expect("sized chunk");
                    off += 8;
                    f64::from_le_bytes(raw)
                }
                Precision::Single => {
                    let raw: [u8; 4] = chunk[off..off + 4].try_into().expect("sized chunk");
                    off += 4;
                    f32::from_le_bytes(raw) as f64
                }
            };
            fields.push(v);
        }
        records.push(fields);
    }
    Ok(records)
}

/// Reads a pair-run rank file back.
pub fn read_records2(path: &Path, precision: Precision) -> Result<Vec<StoredRecord2>> {
    Ok(read_record_file(path, 2, precision)?
        .into_iter()
        .map(|f| StoredRecord2 {
            i: f[0] as u64,
            j: f[1] as u64,
            values: [f[2], f[3], f[4], f[5]],
        })
        .collect())
}

/// Reads a triple-run rank file back.
pub fn read_records3(path: &Path, precision: Precision) -> Result<Vec<StoredRecord3>> {
    Ok(read_record_file(path, 3, precision)?
        .into_iter()
        .map(|f| StoredRecord3 {
            i: f[0] as u64,
            j: f[1] as u64,
            k: f[2] as u64,
            values: [f[3], f[4], f[5], f[6], f[7], f[8], f[9], f[10]],
        })
        .collect())
}

/// Reads every rank file named by a manifest and returns the records in
/// file order. Pair manifests only.
pub fn read_all_records2(dir: &Path, manifest: &Manifest) -> Result<Vec<StoredRecord2>> {
    let precision: Precision = manifest.precision.parse()?;
    let mut all = Vec::new();
    for rank in &manifest.ranks {
        all.extend(read_records2(&dir.join(&rank.file), precision)?);
    }
    Ok(all)
}

/// Reads every rank file named by a manifest; triple manifests only.
pub fn read_all_records3(dir: &Path, manifest: &Manifest) -> Result<Vec<StoredRecord3>> {
    let precision: Precision = manifest.precision.parse()?;
    let mut all = Vec::new();
    for rank in &manifest.ranks {
        all.extend(read_records3(&dir.join(&rank.file), precision)?);
    }
    Ok(all)
}

/// Writes a whole run — rank files plus manifest — and returns the filled
/// manifest. `head` supplies the run metadata; totals, checksum, and rank
/// lines are taken from `output`.
pub fn write_run<R: RecordBytes>(
    dir: &Path,
    mut head: Manifest,
    output: &EngineOutput<R>,
    precision: Precision,
) -> Result<Manifest> {
    head.ranks = write_rank_files(dir, &output.ranks, precision)?;
    head.records = output.records_total();
    head.skipped = output.skipped;
    head.comparisons = output.comparisons;
    head.checksum = checksum_hex(output.checksum);
    write_manifest(dir, &head)?;
    Ok(head)
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io { path: path.to_path_buf(), source }
}
