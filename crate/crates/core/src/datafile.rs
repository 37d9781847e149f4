//! Packed dataset files: a fixed 32-byte header followed by raw plane
//! words, supporting whole-file, per-column, and word-ranged reads.
//!
//! ```text
//! offset  size  field
//!      0     8  magic "CCCPACK1"
//!      8     4  format version (little-endian u32, currently 1)
//!     12     4  flags: bit 0 = sparse, bits 8..16 = element encoding id
//!     16     8  n_v (little-endian u64)
//!     24     8  n_f (little-endian u64)
//! ```
//!
//! The payload stores each vector's plane-0 words then its plane-1 words,
//! vectors consecutive, every word little-endian. Offsets are therefore
//! computable from the header alone, which is what lets a rank read just
//! its own column range and word range.

use std::fs::File;
use std::io::{BufWriter, Read, Seek, SeekFrom, Write};
use std::ops::Range;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::packed::{tail_mask, tile_field_count, words_for, PackedVectorSet};

const MAGIC: &[u8; 8] = b"CCCPACK1";
const VERSION: u32 = 1;
const FLAG_SPARSE: u32 = 1;
const ENCODING_SPLIT_PLANES: u32 = 1;
const HEADER_LEN: u64 = 32;

/// Parsed dataset file header.
#[derive(Copy, Clone, Debug)]
pub struct DatasetHeader {
    pub n_v: u64,
    pub n_f: u64,
    pub sparse: bool,
}

impl DatasetHeader {
    pub fn n_words(&self) -> usize {
        words_for(self.n_f)
    }

    fn payload_len(&self) -> u64 {
        self.n_v * 2 * self.n_words() as u64 * 8
    }

    /// Byte offset of `word` inside `plane` of vector `i`.
    fn word_offset(&self, i: u64, plane: u64, word: u64) -> u64 {
        let n_words = self.n_words() as u64;
        HEADER_LEN + ((i * 2 + plane) * n_words + word) * 8
    }
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io { path: path.to_path_buf(), source }
}

/// Writes a dataset to `path`, replacing any existing file.
pub fn write_dataset(set: &PackedVectorSet, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut out = BufWriter::new(file);
    let mut flags = ENCODING_SPLIT_PLANES << 8;
    if set.is_sparse() {
        flags |= FLAG_SPARSE;
    }
    (|| -> std::io::Result<()> {
        out.write_all(MAGIC)?;
        out.write_all(&VERSION.to_le_bytes())?;
        out.write_all(&flags.to_le_bytes())?;
        out.write_all(&(set.n_v() as u64).to_le_bytes())?;
        out.write_all(&set.n_f().to_le_bytes())?;
        for i in 0..set.n_v() {
            let (p0, p1) = set.raw_column_words(i);
            for &w in p0 {
                out.write_all(&w.to_le_bytes())?;
            }
            for &w in p1 {
                out.write_all(&w.to_le_bytes())?;
            }
        }
        out.flush()
    })()
    .map_err(|e| io_err(path, e))
}

/// Reads and validates just the header and total length of a dataset file.
pub fn read_header(path: &Path) -> Result<DatasetHeader> {
    let mut file = File::open(path).map_err(|e| io_err(path, e))?;
    let header = parse_header(&mut file, path)?;
    check_payload_len(&file, path, &header)?;
    Ok(header)
}

fn parse_header(file: &mut File, path: &Path) -> Result<DatasetHeader> {
    let mut buf = [0u8; HEADER_LEN as usize];
    file.read_exact(&mut buf).map_err(|_| Error::BadMagic { path: path.to_path_buf() })?;
    if &buf[..8] != MAGIC {
        return Err(Error::BadMagic { path: path.to_path_buf() });
    }
    let version = u32::from_le_bytes(buf[8..12].try_into().unwrap());
    if version != VERSION {
        return Err(Error::BadVersion { path: path.to_path_buf(), version });
    }
    let flags = u32::from_le_bytes(buf[12..16].try_into().unwrap());
    if (flags >> 8) & 0xff != ENCODING_SPLIT_PLANES {
        return Err(Error::BadVersion { path: path.to_path_buf(), version: flags >> 8 });
    }
    Ok(DatasetHeader {
        n_v: u64::from_le_bytes(buf[16..24].try_into().unwrap()),
        n_f: u64::from_le_bytes(buf[24..32].try_into().unwrap()),
        sparse: flags & FLAG_SPARSE != 0,
    })
}

fn check_payload_len(file: &File, path: &Path, header: &DatasetHeader) -> Result<()> {
    let expected = HEADER_LEN + header.payload_len();
    let got = file.metadata().map_err(|e| io_err(path, e))?.len();
    if got < expected {
        return Err(Error::Truncated { path: path.to_path_buf(), expected, got });
    }
    if got > expected {
        return Err(Error::PayloadMismatch { path: path.to_path_buf(), expected, got });
    }
    Ok(())
}

fn read_words(file: &mut File, path: &Path, offset: u64, out: &mut [u64]) -> Result<()> {
    file.seek(SeekFrom::Start(offset)).map_err(|e| io_err(path, e))?;
    let mut bytes = vec![0u8; out.len() * 8];
    file.read_exact(&mut bytes).map_err(|e| io_err(path, e))?;
    for (w, chunk) in out.iter_mut().zip(bytes.chunks_exact(8)) {
        *w = u64::from_le_bytes(chunk.try_into().unwrap());
    }
    Ok(())
}

/// Reads the whole dataset.
pub fn read_dataset(path: &Path) -> Result<PackedVectorSet> {
    let header = read_header(path)?;
    read_tile(path, 0..header.n_v, 0..header.n_words())
}

/// Reads vectors `cols` in full.
pub fn read_columns(path: &Path, cols: Range<u64>) -> Result<PackedVectorSet> {
    let header = read_header(path)?;
    read_tile(path, cols, 0..header.n_words())
}

/// Reads plane words `words` of vectors `cols` — the on-disk form of a
/// rank's tile. The returned set's field count covers exactly the selected
/// words, and padding is validated on the way in.
pub fn read_tile(
    path: &Path,
    cols: Range<u64>,
    words: Range<usize>,
) -> Result<PackedVectorSet> {
    let mut file = File::open(path).map_err(|e| io_err(path, e))?;
    let header = parse_header(&mut file, path)?;
    check_payload_len(&file, path, &header)?;
    if cols.start > cols.end || cols.end > header.n_v {
        return Err(Error::RangeOutOfBounds {
            what: "column",
            lo: cols.start,
            hi: cols.end,
            max: header.n_v,
        });
    }
    let n_words = header.n_words();
    if words.start > words.end || words.end > n_words {
        return Err(Error::RangeOutOfBounds {
            what: "word",
            lo: words.start as u64,
            hi: words.end as u64,
            max: n_words as u64,
        });
    }
    let local_f = tile_field_count(header.n_f, words.clone());
    let local_words = words.len();
    let n_cols = (cols.end - cols.start) as usize;
    let mut tile = PackedVectorSet::new_zero(n_cols, local_f, header.sparse);
    let local_tail = tail_mask(local_f);
    for (local, i) in cols.clone().enumerate() {
        let (p0, p1) = tile.raw_column_words_mut(local);
        // Borrow planes one at a time: offsets come off the header.
        read_words(&mut file, path, header.word_offset(i, 0, words.start as u64), p0)?;
        read_words(&mut file, path, header.word_offset(i, 1, words.start as u64), p1)?;
        if local_words > 0 {
            let bad0 = p0[local_words - 1] & !local_tail;
            let bad1 = p1[local_words - 1] & !local_tail;
            if bad0 != 0 || bad1 != 0 {
                return Err(Error::CorruptPadding { path: path.to_path_buf(), vector: i });
            }
        }
    }
    Ok(tile)
}

/// Reads, permutes, nothing else: helper joining dataset and permutation
/// files for the preprocessing flow.
pub fn write_permutation(perm: &crate::synth::Permutation, path: &Path) -> Result<()> {
    std::fs::write(path, perm.to_bytes()).map_err(|e| io_err(path, e))
}

pub fn read_permutation(path: &Path) -> Result<crate::synth::Permutation> {
    let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
    crate::synth::Permutation::from_bytes(&bytes, path)
}

/// Parses a whitespace-separated text dataset: one vector per line, one
/// two-character token per field (`00`, `01`, `11`, or `..` for missing in
/// sparse mode). Lines starting with `#` are skipped.
pub fn parse_text_dataset(
    text: &str,
    sparse: bool,
    path: &Path,
) -> Result<PackedVectorSet> {
    use crate::element::SiteValue;
    let mut rows: Vec<Vec<SiteValue>> = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut row = Vec::new();
        for token in line.split_whitespace() {
            let value = SiteValue::parse_token(token).ok_or_else(|| Error::TextParse {
                path: path.to_path_buf(),
                line: line_no + 1,
                reason: format!("unrecognized token '{token}'"),
            })?;
            row.push(value);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::TextParse {
            path: path.to_path_buf(),
            line: 0,
            reason: "no data lines".to_string(),
        });
    }
    let n_f = rows[0].len() as u64;
    for (i, row) in rows.iter().enumerate() {
        if row.len() as u64 != n_f {
            return Err(Error::TextParse {
                path: path.to_path_buf(),
                line: 0,
                reason: format!(
                    "vector {i} has {} fields, first vector has {n_f}",
                    row.len()
                ),
            });
        }
    }
    PackedVectorSet::encode(&rows, n_f, sparse)
}

/// Loads a text dataset from disk.
pub fn read_text_dataset(path: &Path, sparse: bool) -> Result<PackedVectorSet> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    parse_text_dataset(&text, sparse, path)
}

/// Path helper used by the CLI: `<stem>.perm` next to the output dataset.
pub fn permutation_path_for(dataset: &Path) -> PathBuf {
    let mut os = dataset.as_os_str().to_os_string();
    os.push(".perm");
    PathBuf::from(os)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_random, permute_vectors};

    fn temp_path(name: &str) -> (tempfile::TempDir, PathBuf) {
        let dir = tempfile::tempdir().expect("tempdir");
        let path = dir.path().join(name);
        (dir, path)
    }

    #[test]
    fn whole_file_round_trip() {
        for sparse in [false, true] {
            let set = generate_random(7, 203, 5, sparse);
            let (_dir, path) = temp_path("set.ccc");
            write_dataset(&set, &path).unwrap();
            let back = read_dataset(&path).unwrap();
            assert_eq!(set, back);
            let header = read_header(&path).unwrap();
            assert_eq!(header.n_v, 7);
            assert_eq!(header.n_f, 203);
            assert_eq!(header.sparse, sparse);
        }
    }

    #[test]
    fn column_range_read_matches_in_memory_slice() {
        let set = generate_random(9, 130, 8, false);
        let (_dir, path) = temp_path("set.ccc");
        write_dataset(&set, &path).unwrap();
        let cols = read_columns(&path, 2..5).unwrap();
        assert_eq!(cols, set.extract_columns(2..5).unwrap());
    }

    #[test]
    fn word_range_read_matches_in_memory_tile() {
        let set = generate_random(6, 500, 13, false); // 8 words
        let (_dir, path) = temp_path("set.ccc");
        write_dataset(&set, &path).unwrap();
        let tile = read_tile(&path, 1..4, 3..8).unwrap();
        assert_eq!(tile, set.extract_tile(1..4, 3..8).unwrap());
        assert_eq!(tile.n_f(), 500 - 3 * 64);
    }

    #[test]
    fn rejects_bad_magic() {
        let (_dir, path) = temp_path("junk.ccc");
        std::fs::write(&path, b"NOTADATA0000000000000000000000000000").unwrap();
        assert!(matches!(read_dataset(&path), Err(Error::BadMagic { .. })));
    }

    #[test]
    fn rejects_unknown_version() {
        let set = generate_random(2, 64, 1, false);
        let (_dir, path) = temp_path("set.ccc");
        write_dataset(&set, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[8] = 9; // version 9
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(
            read_dataset(&path),
            Err(Error::BadVersion { version: 9, .. })
        ));
    }

    #[test]
    fn rejects_truncated_payload() {
        let set = generate_random(4, 100, 2, false);
        let (_dir, path) = temp_path("set.ccc");
        write_dataset(&set, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 8]).unwrap();
        assert!(matches!(read_dataset(&path), Err(Error::Truncated { .. })));
    }

    #[test]
    fn rejects_oversized_payload() {
        let set = generate_random(4, 100, 2, false);
        let (_dir, path) = temp_path("set.ccc");
        write_dataset(&set, &path).unwrap();
        let mut file = std::fs::OpenOptions::new().append(true).open(&path).unwrap();
        file.write_all(&[0u8; 16]).unwrap();
        drop(file);
        assert!(matches!(read_dataset(&path), Err(Error::PayloadMismatch { .. })));
    }

    #[test]
    fn rejects_dirty_padding() {
        let set = generate_random(2, 65, 3, false); // 63 pad bits
        let (_dir, path) = temp_path("set.ccc");
        write_dataset(&set, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        // Plane 0 of vector 0 occupies bytes 32..48; word 1 holds the
        // padding. Set its top bit.
        bytes[47] |= 0x80;
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(
            read_dataset(&path),
            Err(Error::CorruptPadding { vector: 0, .. })
        ));
    }

    #[test]
    fn range_validation() {
        let set = generate_random(3, 64, 4, false);
        let (_dir, path) = temp_path("set.ccc");
        write_dataset(&set, &path).unwrap();
        assert!(read_columns(&path, 0..4).is_err());
        assert!(read_tile(&path, 0..1, 0..2).is_err());
    }

    #[test]
    fn permutation_file_round_trip() {
        let set = generate_random(12, 90, 6, false);
        let (_, perm) = permute_vectors(&set, 31).unwrap();
        let (_dir, path) = temp_path("map.perm");
        write_permutation(&perm, &path).unwrap();
        assert_eq!(read_permutation(&path).unwrap(), perm);
    }

    #[test]
    fn text_dataset_parsing() {
        let text = "# two vectors\n00 01 11\n01 .. 11\n";
        let sparse = parse_text_dataset(text, true, Path::new("mem")).unwrap();
        assert_eq!(sparse.n_v(), 2);
        assert_eq!(sparse.n_f(), 3);
        assert!(sparse.get(1, 1).is_missing());
        // Dense mode rejects the missing token.
        assert!(parse_text_dataset(text, false, Path::new("mem")).is_err());
        // Ragged rows are rejected.
        assert!(parse_text_dataset("00 01\n00\n", false, Path::new("mem")).is_err());
        // Unknown tokens are rejected with a line number.
        match parse_text_dataset("00 02\n", false, Path::new("mem")) {
            Err(Error::TextParse { line, .. }) => assert_eq!(line, 1),
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}
