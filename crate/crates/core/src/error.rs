//! Crate-wide error type.
//!
//! Every fallible operation in this crate returns [`Error`]. Variants carry
//! enough context to tell the caller *which* input was bad (vector index,
//! file path, rank id) without holding references into caller data.

use std::fmt;
use std::path::PathBuf;

/// Broad category of an error, used by callers that map failures to
/// process exit codes: configuration/validation problems, verification
/// mismatches, and I/O or file-format problems each exit differently.
#[derive(Copy, Clone, PartialEq, Eq, Debug)]
pub enum ErrorKind {
    /// Invalid configuration, parameters, or input data.
    Validation,
    /// A verification run found disagreeing results.
    VerifyMismatch,
    /// Filesystem or file-format failure.
    Io,
}

#[derive(Debug)]
pub enum Error {
    /// A row of input values does not have the advertised length.
    LengthMismatch { vector: usize, expected: u64, got: u64 },
    /// A missing value appeared while encoding in dense mode.
    MissingInDense { vector: usize, position: u64 },
    /// The component pair (1,0) was supplied as data in sparse mode, where
    /// that bit pattern is reserved as the missing-value marker.
    NullPatternAsData { vector: usize, position: u64 },
    /// Two columns that must share a word count do not.
    WordCountMismatch { left: usize, right: usize },
    /// A field count too large for the packed floating-point accumulator.
    PackedLimitExceeded { n_f: u64, limit: u64 },
    /// A tally would overflow its integer accumulator.
    TallyOverflow { n_f: u64 },
    /// Class selector outside 1..=3.
    XiOutOfRange { xi: u8 },
    /// A vector has no valid (non-missing) positions, so its allele
    /// frequencies are undefined.
    ZeroValidCount { vector: u64 },
    /// A pair or triple of sparse vectors shares no valid positions, so the
    /// tally divisor is zero and the coefficient is undefined.
    ZeroValidOverlap,
    /// A rank-grid shape that cannot be formed for the dataset.
    InvalidGrid { reason: String },
    /// More stages requested than a rank's job list can be split into.
    TooManyStages { n_st: usize, max: usize },
    /// A scalar parameter failed validation.
    InvalidParameter { name: &'static str, reason: String },
    /// Index range outside the dataset bounds.
    RangeOutOfBounds { what: &'static str, lo: u64, hi: u64, max: u64 },
    /// Underlying filesystem failure.
    Io { path: PathBuf, source: std::io::Error },
    /// A dataset file whose leading magic bytes are wrong.
    BadMagic { path: PathBuf },
    /// A dataset file written by an unsupported format version.
    BadVersion { path: PathBuf, version: u32 },
    /// A file shorter than its header promises.
    Truncated { path: PathBuf, expected: u64, got: u64 },
    /// A file whose payload length disagrees with its header.
    PayloadMismatch { path: PathBuf, expected: u64, got: u64 },
    /// Nonzero bits found in the padding region of a stored vector.
    CorruptPadding { path: PathBuf, vector: u64 },
    /// A permutation file that is not a valid permutation record.
    BadPermutation { path: PathBuf, reason: String },
    /// A text dataset that could not be parsed.
    TextParse { path: PathBuf, line: usize, reason: String },
    /// JSON (de)serialization failure for a manifest.
    Json { path: PathBuf, reason: String },
    /// A message-passing endpoint failed (peer rank exited early).
    ChannelFailure { rank: usize, detail: String },
    /// A rank aborted; the run cannot complete.
    Rank { rank: usize, source: Box<Error> },
    /// Two engines disagreed during a verification run.
    VerifyMismatch { detail: String },
}

impl Error {
    /// Coarse category for exit-code mapping.
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::VerifyMismatch { .. } => ErrorKind::VerifyMismatch,
            Error::Io { .. }
            | Error::BadMagic { .. }
            | Error::BadVersion { .. }
            | Error::Truncated { .. }
            | Error::PayloadMismatch { .. }
            | Error::CorruptPadding { .. }
            | Error::BadPermutation { .. }
            | Error::TextParse { .. }
            | Error::Json { .. } => ErrorKind::Io,
            Error::Rank { source, .. } => source.kind(),
            _ => ErrorKind::Validation,
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::LengthMismatch { vector, expected, got } => {
                write!(f, "vector {vector}: expected {expected} values, got {got}")
            }
            Error::MissingInDense { vector, position } => {
                write!(f, "vector {vector} position {position}: missing value in dense mode")
            }
            Error::NullPatternAsData { vector, position } => write!(
                f,
                "vector {vector} position {position}: component pair (1,0) is reserved as the \
                 missing marker in sparse mode"
            ),
            Error::WordCountMismatch { left, right } => {
                write!(f, "word count mismatch: {left} vs {right}")
            }
            Error::PackedLimitExceeded { n_f, limit } => write!(
                f,
                "{n_f} fields exceeds the packed-accumulator limit of {limit}"
            ),
            Error::TallyOverflow { n_f } => {
                write!(f, "tally over {n_f} fields would overflow the accumulator")
            }
            Error::XiOutOfRange { xi } => write!(f, "class selector {xi} outside 1..=3"),
            Error::ZeroValidCount { vector } => write!(
                f,
                "vector {vector} has no valid positions; allele frequencies undefined"
            ),
            Error::ZeroValidOverlap => {
                write!(f, "no valid shared positions; coefficient divisor is zero")
            }
            Error::InvalidGrid { reason } => write!(f, "invalid rank grid: {reason}"),
            Error::TooManyStages { n_st, max } => {
                write!(f, "{n_st} stages requested but at most {max} steps are available")
            }
            Error::InvalidParameter { name, reason } => write!(f, "invalid {name}: {reason}"),
            Error::RangeOutOfBounds { what, lo, hi, max } => {
                write!(f, "{what} range {lo}..{hi} outside 0..{max}")
            }
            Error::Io { path, source } => write!(f, "{}: {source}", path.display()),
            Error::BadMagic { path } => {
                write!(f, "{}: not a packed dataset (bad magic)", path.display())
            }
            Error::BadVersion { path, version } => {
                write!(f, "{}: unsupported format version {version}", path.display())
            }
            Error::Truncated { path, expected, got } => write!(
                f,
                "{}: truncated payload ({got} bytes, header promises {expected})",
                path.display()
            ),
            Error::PayloadMismatch { path, expected, got } => write!(
                f,
                "{}: payload length {got} disagrees with header ({expected})",
                path.display()
            ),
            Error::CorruptPadding { path, vector } => write!(
                f,
                "{}: vector {vector} has nonzero bits in its padding region",
                path.display()
            ),
            Error::BadPermutation { path, reason } => {
                write!(f, "{}: invalid permutation record: {reason}", path.display())
            }
            Error::TextParse { path, line, reason } => {
                write!(f, "{}:{line}: {reason}", path.display())
            }
            Error::Json { path, reason } => write!(f, "{}: {reason}", path.display()),
            Error::ChannelFailure { rank, detail } => {
                write!(f, "channel to rank {rank} failed: {detail}")
            }
            Error::Rank { rank, source } => write!(f, "rank {rank} aborted: {source}"),
            Error::VerifyMismatch { detail } => write!(f, "verification mismatch: {detail}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io { source, .. } => Some(source),
            Error::Rank { source, .. } => Some(source.as_ref()),
            _ => None,
        }
    }
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
