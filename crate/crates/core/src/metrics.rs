//! Coefficients on top of integer tallies: allele frequencies, damped
//! two- and three-way coefficient tables, class masking for the three-way
//! decomposition, and the reconstruction of 2x2x2 tallies from three
//! class-masked 2x2 tallies.
//!
//! All floating-point values are derived from integer counts at the last
//! step, so two runs that agree on the integers agree on every coefficient
//! bit-for-bit.

use crate::element::CANONICAL_VALUES;
use crate::error::{Error, Result};
use crate::packed::{tail_mask, ColumnView, MaskedTile, PackedVectorSet};
use crate::tally::{TallyTable2, TallyTable3};

/// Default damping weight: two thirds, as the nearest double.
pub const DEFAULT_GAMMA: f64 = 2.0 / 3.0;

/// Arity of a run: pairs or triples.
#[derive(Copy, Clone, PartialEq, Eq, Debug)]
pub enum NumWay {
    Two,
    Three,
}

impl NumWay {
    pub fn as_u8(self) -> u8 {
        match self {
            NumWay::Two => 2,
            NumWay::Three => 3,
        }
    }

    pub fn from_u8(v: u8) -> Result<Self> {
        match v {
            2 => Ok(NumWay::Two),
            3 => Ok(NumWay::Three),
            other => Err(Error::InvalidParameter {
                name: "num-way",
                reason: format!("must be 2 or 3, got {other}"),
            }),
        }
    }
}

/// Floating-point width for coefficient evaluation.
#[derive(Copy, Clone, PartialEq, Eq, Debug, Default)]
pub enum Precision {
    Single,
    #[default]
    Double,
}

impl std::str::FromStr for Precision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(Precision::Single),
            "double" => Ok(Precision::Double),
            other => Err(Error::InvalidParameter {
                name: "precision",
                reason: format!("must be 'single' or 'double', got '{other}'"),
            }),
        }
    }
}

impl std::fmt::Display for Precision {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Precision::Single => "single",
            Precision::Double => "double",
        })
    }
}

/// Scalar knobs of the coefficient formula.
#[derive(Copy, Clone, Debug)]
pub struct CccParams {
    pub gamma: f64,
    pub precision: Precision,
}

impl Default for CccParams {
    fn default() -> Self {
        CccParams { gamma: DEFAULT_GAMMA, precision: Precision::Double }
    }
}

/// Integer counts behind one vector's allele frequencies: total
/// one-components and valid positions. `ones + zeros == 2 * valid` holds
/// by construction.
#[derive(Copy, Clone, PartialEq, Eq, Debug, Default)]
pub struct VectorCounts {
    pub ones: u64,
    pub valid: u64,
}

impl VectorCounts {
    /// Frequency of `allele` as a double; `None` when no positions are
    /// valid and the frequency is undefined.
    pub fn frequency(&self, allele: u8) -> Option<f64> {
        if self.valid == 0 {
            return None;
        }
        let denom = (2 * self.valid) as f64;
        Some(match allele {
            1 => self.ones as f64 / denom,
            _ => (2 * self.valid - self.ones) as f64 / denom,
        })
    }
}

/// Per-vector allele-frequency counts for a whole dataset.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct FrequencyTable {
    counts: Vec<VectorCounts>,
}

impl FrequencyTable {
    pub fn from_counts(counts: Vec<VectorCounts>) -> Self {
        FrequencyTable { counts }
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn counts(&self, i: u64) -> VectorCounts {
        self.counts[i as usize]
    }

    /// Frequency of `allele` for vector `i`; errors on a vector with no
    /// valid positions (possible only in sparse data).
    pub fn frequency(&self, i: u64, allele: u8) -> Result<f64> {
        self.counts(i)
            .frequency(allele)
            .ok_or(Error::ZeroValidCount { vector: i })
    }
}

/// Counts each vector's one-components and valid positions by popcount.
///
/// Costs one pass over the planes — `O(n_v * n_f / 64)` words — and never
/// touches per-pair state.
pub fn allele_frequencies(set: &PackedVectorSet) -> FrequencyTable {
    let n_words = set.n_words();
    let tail = tail_mask(set.n_f());
    let mut counts = Vec::with_capacity(set.n_v());
    for i in 0..set.n_v() {
        let col = set.column(i);
        let mut ones = 0u64;
        let mut valid = 0u64;
        for w in 0..n_words {
            let range = if w + 1 == n_words { tail } else { !0 };
            // The (1,0) pattern only occurs in sparse data (dense planes
            // are canonical), where it marks a missing value.
            let null = col.plane0[w] & !col.plane1[w];
            let mask = range & !null;
            valid += mask.count_ones() as u64;
            ones += ((col.plane0[w] & mask).count_ones()
                + (col.plane1[w] & mask).count_ones()) as u64;
        }
        counts.push(VectorCounts { ones, valid });
    }
    FrequencyTable { counts }
}

/// `1 - gamma * f(allele)` in the requested float width.
fn damping<F: num::Float>(allele: u8, c: VectorCounts, gamma: F) -> F {
    let denom = F::from(2 * c.valid).expect("count fits the float domain");
    let ones = F::from(c.ones).expect("count fits the float domain");
    let f = if allele == 1 { ones / denom } else { (denom - ones) / denom };
    F::one() - gamma * f
}

fn ccc2_impl<F: num::Float>(
    t: &TallyTable2,
    ci: VectorCounts,
    cj: VectorCounts,
    gamma: F,
    sum: u64,
) -> [f64; 4] {
    let sum = F::from(sum).expect("tally sum fits the float domain");
    let mut out = [0.0f64; 4];
    let mut n = 0;
    for a in 0..2u8 {
        for b in 0..2u8 {
            let f_ij = F::from(t.get(a, b)).expect("tally fits the float domain") / sum;
            // The damping product is computed first so that swapping the
            // vectors (and transposing the tally) yields bit-identical
            // values: multiplication of the two damping terms commutes.
            let value = f_ij * (damping(a, ci, gamma) * damping(b, cj, gamma));
            out[n] = value.to_f64().expect("widening a finite value");
            n += 1;
        }
    }
    out
}

/// Two-way coefficient table in `(a, b)` lexicographic cell order.
///
/// Cell `(a, b)` is `t[a][b]/sum(t)` damped by `(1 - gamma*f_i(a)) *
/// (1 - gamma*f_j(b))`. The divisor is the tally's own mass — `4 * n_f`
/// dense, four per valid shared position sparse — so one formula covers
/// both modes. An empty tally (sparse pair with no overlap) is undefined
/// and rejected.
pub fn ccc2(
    t: &TallyTable2,
    ci: VectorCounts,
    cj: VectorCounts,
    params: &CccParams,
) -> Result<[f64; 4]> {
    let sum = t.sum();
    if sum == 0 {
        return Err(Error::ZeroValidOverlap);
    }
    debug_assert!(ci.valid > 0 && cj.valid > 0, "nonzero tally implies valid positions");
    Ok(match params.precision {
        Precision::Double => ccc2_impl::<f64>(t, ci, cj, params.gamma, sum),
        Precision::Single => ccc2_impl::<f32>(t, ci, cj, params.gamma as f32, sum),
    })
}

fn ccc3_impl<F: num::Float>(
    t: &TallyTable3,
    ci: VectorCounts,
    cj: VectorCounts,
    ck: VectorCounts,
    gamma: F,
    sum: u64,
) -> [f64; 8] {
    let sum = F::from(sum).expect("tally sum fits the float domain");
    let mut out = [0.0f64; 8];
    let mut n = 0;
    for a in 0..2u8 {
        for b in 0..2u8 {
            for c in 0..2u8 {
                let f_ijk = F::from(t.get(a, b, c)).expect("tally fits the float domain") / sum;
                let damp = damping(a, ci, gamma) * damping(b, cj, gamma) * damping(c, ck, gamma);
                out[n] = (f_ijk * damp).to_f64().expect("widening a finite value");
                n += 1;
            }
        }
    }
    out
}

/// Three-way coefficient table in `(a, b, c)` lexicographic cell order.
pub fn ccc3(
    t: &TallyTable3,
    ci: VectorCounts,
    cj: VectorCounts,
    ck: VectorCounts,
    params: &CccParams,
) -> Result<[f64; 8]> {
    let sum = t.sum();
    if sum == 0 {
        return Err(Error::ZeroValidOverlap);
    }
    Ok(match params.precision {
        Precision::Double => ccc3_impl::<f64>(t, ci, cj, ck, params.gamma, sum),
        Precision::Single => ccc3_impl::<f32>(t, ci, cj, ck, params.gamma as f32, sum),
    })
}

/// Builds the class-masked tile `X` for one conditioning vector and class.
///
/// Position `q` of masked column `i` holds tile column `i`'s element where
/// the conditioning vector `v_j` carries canonical value number `xi`
/// (1-based index into `(0,0)`, `(0,1)`, `(1,1)`), and the null pattern
/// `(1,0)` everywhere else. Missing values on either side (sparse tiles)
/// are null in every class. The validity mask mirrors exactly the non-null
/// positions.
pub fn x_construct(
    v_j: ColumnView<'_>,
    tile: &PackedVectorSet,
    xi: u8,
) -> Result<MaskedTile> {
    if !(1..=3).contains(&xi) {
        return Err(Error::XiOutOfRange { xi });
    }
    let n_words = tile.n_words();
    if v_j.plane0.len() != n_words || v_j.plane1.len() != n_words {
        return Err(Error::WordCountMismatch { left: v_j.plane0.len(), right: n_words });
    }
    let sparse = tile.is_sparse();
    let tail = tail_mask(tile.n_f());
    // Per-word class masks of the conditioning vector.
    let mut class = vec![0u64; n_words];
    for w in 0..n_words {
        let range = if w + 1 == n_words { tail } else { !0 };
        let (j0, j1) = (v_j.plane0[w], v_j.plane1[w]);
        // Canonicalize (1,0) into (0,1) in dense mode; exclude it as
        // missing in sparse mode.
        let (j0c, j1c, excluded) = if sparse {
            (j0, j1, j0 & !j1)
        } else {
            (j0 & j1, j0 | j1, 0)
        };
        let m = match xi {
            1 => !j0c & !j1c,
            2 => !j0c & j1c,
            _ => j0c & j1c,
        };
        class[w] = m & range & !excluded;
    }
    let mut plane0 = Vec::with_capacity(tile.n_v() * n_words);
    let mut plane1 = Vec::with_capacity(tile.n_v() * n_words);
    let mut valid = Vec::with_capacity(tile.n_v() * n_words);
    for i in 0..tile.n_v() {
        let col = tile.column(i);
        for w in 0..n_words {
            let range = if w + 1 == n_words { tail } else { !0 };
            let (v0, v1) = (col.plane0[w], col.plane1[w]);
            let (v0c, v1c, v_null) = if sparse {
                (v0, v1, v0 & !v1)
            } else {
                (v0 & v1, v0 | v1, 0)
            };
            let m = class[w] & !v_null;
            // Valid positions keep the tile element; everything in range
            // but outside the class becomes the null pattern (1,0);
            // padding stays (0,0).
            plane0.push((v0c & m) | (range & !m));
            plane1.push(v1c & m);
            valid.push(m);
        }
    }
    Ok(MaskedTile {
        n_cols: tile.n_v(),
        n_f: tile.n_f(),
        n_words,
        plane0,
        plane1,
        valid,
    })
}

/// Rebuilds a 2x2x2 tally from the three class-masked 2x2 tallies of one
/// conditioning vector.
///
/// Class tally `b_xi[a][c]` sums `rho_i(a) * rho_k(c)` over positions
/// where the middle vector holds canonical value `xi`. At those positions
/// the middle vector's component counts are fixed — class 1 has two zero
/// components, class 2 one of each, class 3 two ones — so:
///
/// ```text
/// t3[a][0][c] = 2*b1[a][c] + b2[a][c]
/// t3[a][1][c] = 2*b3[a][c] + b2[a][c]
/// ```
pub fn reconstruct3(b1: &TallyTable2, b2: &TallyTable2, b3: &TallyTable2) -> TallyTable3 {
    let mut t = TallyTable3::default();
    for a in 0..2u8 {
        for c in 0..2u8 {
            t.add(a, 0, c, 2 * b1.get(a, c) + b2.get(a, c));
            t.add(a, 1, c, 2 * b3.get(a, c) + b2.get(a, c));
        }
    }
    t
}

/// How many result tables and scalar values a full run emits.
#[derive(Copy, Clone, PartialEq, Eq, Debug)]
pub struct UniqueCounts {
    /// Unordered index tuples `i < j (< k)`.
    pub tables: u64,
    /// Tables times cells (4 for pairs, 8 for triples).
    pub values: u64,
}

/// Counts the unique result tables of a run: `n_v` choose 2 or 3. Degenerate
/// inputs (`n_v` below the arity) produce zero.
pub fn unique_counts(n_v: u64, num_way: NumWay) -> UniqueCounts {
    let n = n_v as u128;
    let (tables, cells) = match num_way {
        NumWay::Two => {
            if n < 2 {
                (0, 4)
            } else {
                (n * (n - 1) / 2, 4)
            }
        }
        NumWay::Three => {
            if n < 3 {
                (0, 8)
            } else {
                (n * (n - 1) * (n - 2) / 6, 8)
            }
        }
    };
    let tables = u64::try_from(tables).expect("table count fits u64");
    UniqueCounts { tables, values: tables * cells as u64 }
}

/// One finished pair result: canonical indices `i < j`, the integer tally,
/// and the four coefficient cells in `(a, b)` order.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct Record2 {
    pub i: u64,
    pub j: u64,
    pub tally: TallyTable2,
    pub values: [f64; 4],
}

/// One finished triple result: canonical indices `i < j < k`, the integer
/// tally, and the eight coefficient cells in `(a, b, c)` order.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct Record3 {
    pub i: u64,
    pub j: u64,
    pub k: u64,
    pub tally: TallyTable3,
    pub values: [f64; 8],
}

/// The canonical value indexed by a 1-based class selector.
pub fn class_value(xi: u8) -> Result<crate::element::Element2> {
    if !(1..=3).contains(&xi) {
        return Err(Error::XiOutOfRange { xi });
    }
    Ok(CANONICAL_VALUES[(xi - 1) as usize])
}
