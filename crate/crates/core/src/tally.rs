//! Popcount tally kernels over packed bit planes.
//!
//! The 2x2 tally between vectors `i` and `j` counts, over every field `q`,
//! how many of the four component pairings `(component r of i, component s
//! of j)` equal each allele pair `(a, b)`. With the planes packed, a whole
//! word's worth of fields reduces to nine popcounts. Writing `n` for the
//! number of positions under the mask, `s_i` / `s_j` for each side's
//! one-component counts and `p` for the cross-plane AND counts:
//!
//! ```text
//! t[1][1] = p                         p  = sum of popcount(a_r & b_s)
//! t[1][0] = 2*s_i - p                      over the four plane pairs
//! t[0][1] = 2*s_j - p
//! t[0][0] = 4*n - 2*s_i - 2*s_j + p
//! ```
//!
//! since each element has exactly two components, so its zero-component
//! count is two minus its one-component count. Blocks of tallies are
//! produced in a GEMM shape — every column of one tile against every
//! column of another — which is where the bulk of a run's time goes.

use crate::error::{Error, Result};
use crate::packed::{tail_mask, words_for, ColumnView, MaskedColumnView, MaskedTile, PackedVectorSet};

/// A 2x2 table of pairing counts; `get(a, b)` is the count for allele `a`
/// on the first vector and `b` on the second.
#[derive(Copy, Clone, Default, PartialEq, Eq, Debug)]
pub struct TallyTable2 {
    cells: [[u64; 2]; 2],
}

impl TallyTable2 {
    pub fn from_cells(cells: [[u64; 2]; 2]) -> Self {
        TallyTable2 { cells }
    }

    pub fn get(&self, a: u8, b: u8) -> u64 {
        self.cells[a as usize][b as usize]
    }

    pub fn add(&mut self, a: u8, b: u8, n: u64) {
        self.cells[a as usize][b as usize] += n;
    }

    /// Total over all four cells: `4 * n` for `n` tallied positions.
    pub fn sum(&self) -> u64 {
        self.cells.iter().flatten().sum()
    }

    pub fn add_assign(&mut self, other: &TallyTable2) {
        for a in 0..2 {
            for b in 0..2 {
                self.cells[a][b] += other.cells[a][b];
            }
        }
    }

    /// The same pairing counts read from the second vector's side.
    pub fn transposed(&self) -> TallyTable2 {
        TallyTable2 {
            cells: [
                [self.cells[0][0], self.cells[1][0]],
                [self.cells[0][1], self.cells[1][1]],
            ],
        }
    }

    /// Cells in fixed `(a, b)` lexicographic order, for hashing and I/O.
    pub fn as_words(&self) -> [u64; 4] {
        [
            self.cells[0][0],
            self.cells[0][1],
            self.cells[1][0],
            self.cells[1][1],
        ]
    }
}

/// A 2x2x2 table of three-way pairing counts, `get(a, b, c)` keyed by the
/// allele drawn from each of the three vectors in order.
#[derive(Copy, Clone, Default, PartialEq, Eq, Debug)]
pub struct TallyTable3 {
    cells: [[[u64; 2]; 2]; 2],
}

impl TallyTable3 {
    pub fn get(&self, a: u8, b: u8, c: u8) -> u64 {
        self.cells[a as usize][b as usize][c as usize]
    }

    pub fn add(&mut self, a: u8, b: u8, c: u8, n: u64) {
        self.cells[a as usize][b as usize][c as usize] += n;
    }

    /// Total over all eight cells: `8 * n` for `n` tallied positions.
    pub fn sum(&self) -> u64 {
        self.cells.iter().flatten().flatten().sum()
    }

    pub fn add_assign(&mut self, other: &TallyTable3) {
        for a in 0..2 {
            for b in 0..2 {
                for c in 0..2 {
                    self.cells[a][b][c] += other.cells[a][b][c];
                }
            }
        }
    }

    /// Cells in fixed `(a, b, c)` lexicographic order.
    pub fn as_words(&self) -> [u64; 8] {
        let mut out = [0u64; 8];
        let mut n = 0;
        for a in 0..2 {
            for b in 0..2 {
                for c in 0..2 {
                    out[n] = self.cells[a][b][c];
                    n += 1;
                }
            }
        }
        out
    }

    /// Sums out the middle vector: `t2[a][c] = sum_b t3[a][b][c] / 2`,
    /// exposed as the raw sum (callers check divisibility by 2).
    pub fn middle_marginal(&self) -> TallyTable2 {
        let mut t = TallyTable2::default();
        for a in 0..2u8 {
            for c in 0..2u8 {
                t.add(a, c, self.get(a, 0, c) + self.get(a, 1, c));
            }
        }
        t
    }
}

#[inline(always)]
fn word_counts(a0: u64, a1: u64, b0: u64, b1: u64, mask: u64) -> (u64, u64, u64, u64) {
    let a0 = a0 & mask;
    let a1 = a1 & mask;
    let b0 = b0 & mask;
    let b1 = b1 & mask;
    let n = mask.count_ones() as u64;
    let si = (a0.count_ones() + a1.count_ones()) as u64;
    let sj = (b0.count_ones() + b1.count_ones()) as u64;
    let p = ((a0 & b0).count_ones()
        + (a0 & b1).count_ones()
        + (a1 & b0).count_ones()
        + (a1 & b1).count_ones()) as u64;
    (4 * n + p - 2 * si - 2 * sj, 2 * sj - p, 2 * si - p, p)
}

/// Tallies one 64-position word of two packed vectors under a validity
/// mask. Masked-out positions contribute nothing.
pub fn word_tally(a0: u64, a1: u64, b0: u64, b1: u64, mask: u64) -> TallyTable2 {
    let (t00, t01, t10, t11) = word_counts(a0, a1, b0, b1, mask);
    TallyTable2 { cells: [[t00, t01], [t10, t11]] }
}

fn check_column_words(a: ColumnView<'_>, b: ColumnView<'_>, n_f: u64) -> Result<usize> {
    let n_words = words_for(n_f);
    if a.plane0.len() != n_words || a.plane1.len() != n_words {
        return Err(Error::WordCountMismatch { left: a.plane0.len(), right: n_words });
    }
    if b.plane0.len() != n_words || b.plane1.len() != n_words {
        return Err(Error::WordCountMismatch { left: b.plane0.len(), right: n_words });
    }
    if n_f > 1 << 62 {
        return Err(Error::TallyOverflow { n_f });
    }
    Ok(n_words)
}

/// Full 2x2 tally of two dense vectors over `n_f` fields.
///
/// The final word is masked down to the in-range positions, so padding
/// contributes nothing regardless of `n_f % 64`.
pub fn pair_tally(a: ColumnView<'_>, b: ColumnView<'_>, n_f: u64) -> Result<TallyTable2> {
    let n_words = check_column_words(a, b, n_f)?;
    let mut acc = [0u64; 4];
    for w in 0..n_words {
        let mask = if w + 1 == n_words { tail_mask(n_f) } else { !0 };
        let (t00, t01, t10, t11) = word_counts(a.plane0[w], a.plane1[w], b.plane0[w], b.plane1[w], mask);
        acc[0] += t00;
        acc[1] += t01;
        acc[2] += t10;
        acc[3] += t11;
    }
    Ok(TallyTable2 { cells: [[acc[0], acc[1]], [acc[2], acc[3]]] })
}

/// 2x2 tally of two sparse vectors, restricted to positions where neither
/// side holds the missing marker. Also returns the valid-pair count.
pub fn sparse_pair_tally(
    a: ColumnView<'_>,
    b: ColumnView<'_>,
    n_f: u64,
) -> Result<(TallyTable2, u64)> {
    let n_words = check_column_words(a, b, n_f)?;
    let mut acc = [0u64; 4];
    let mut valid = 0u64;
    for w in 0..n_words {
        let range = if w + 1 == n_words { tail_mask(n_f) } else { !0 };
        let a_null = a.plane0[w] & !a.plane1[w];
        let b_null = b.plane0[w] & !b.plane1[w];
        let mask = range & !a_null & !b_null;
        valid += mask.count_ones() as u64;
        let (t00, t01, t10, t11) = word_counts(a.plane0[w], a.plane1[w], b.plane0[w], b.plane1[w], mask);
        acc[0] += t00;
        acc[1] += t01;
        acc[2] += t10;
        acc[3] += t11;
    }
    Ok((TallyTable2 { cells: [[acc[0], acc[1]], [acc[2], acc[3]]] }, valid))
}

/// Largest field count the packed floating-point accumulator accepts.
///
/// Each 25-bit field must hold totals up to `4 * n_f` without carrying into
/// its neighbor, so `4 * n_f <= 2^25 - 1`, and staying a power-of-two shy
/// of the boundary keeps every intermediate exactly representable; the
/// accepted domain is `n_f <= 2^23 - 1`.
pub const PACKED_MAX_FIELDS: u64 = (1 << 23) - 1;

/// Accumulates 2x2 tallies in two doubles, two 25-bit fields per double.
///
/// This mirrors accumulating tallies through a floating-point GEMM: cells
/// (0,0) and (0,1) live at bit offsets 0 and 25 of the first double's
/// integer value, cells (1,0) and (1,1) likewise in the second. Additions
/// stay exact because every partial total is an integer below 2^50.
#[derive(Copy, Clone, Debug)]
pub struct PackedAccumulator {
    acc: [f64; 2],
}

impl PackedAccumulator {
    /// Refuses field counts whose tallies could overflow a 25-bit field.
    pub fn new(n_f: u64) -> Result<Self> {
        if n_f > PACKED_MAX_FIELDS {
            return Err(Error::PackedLimitExceeded { n_f, limit: PACKED_MAX_FIELDS });
        }
        Ok(PackedAccumulator { acc: [0.0, 0.0] })
    }

    /// Adds one word's four counts (each at most 256).
    pub fn absorb(&mut self, t: TallyTable2) {
        let lo = (t.get(0, 0) | (t.get(0, 1) << 25)) as f64;
        let hi = (t.get(1, 0) | (t.get(1, 1) << 25)) as f64;
        self.acc[0] += lo;
        self.acc[1] += hi;
    }

    /// Splits the packed fields back out into an integer table.
    pub fn finish(self) -> TallyTable2 {
        let field = |x: f64, idx: u32| {
            let bits = x as u64;
            (bits >> (25 * idx)) & ((1 << 25) - 1)
        };
        TallyTable2 {
            cells: [
                [field(self.acc[0], 0), field(self.acc[0], 1)],
                [field(self.acc[1], 0), field(self.acc[1], 1)],
            ],
        }
    }
}

/// [`pair_tally`] computed through the packed floating-point accumulator.
///
/// Bit-identical to the integer path for any accepted `n_f`.
pub fn pair_tally_packed(a: ColumnView<'_>, b: ColumnView<'_>, n_f: u64) -> Result<TallyTable2> {
    let n_words = check_column_words(a, b, n_f)?;
    let mut acc = PackedAccumulator::new(n_f)?;
    for w in 0..n_words {
        let mask = if w + 1 == n_words { tail_mask(n_f) } else { !0 };
        acc.absorb(word_tally(a.plane0[w], a.plane1[w], b.plane0[w], b.plane1[w], mask));
    }
    Ok(acc.finish())
}

/// A dense block of per-pair tables: local `(row, col)` addressing plus the
/// global vector offsets the block was cut from.
#[derive(Clone, Debug)]
pub struct MetricsBlock<T> {
    pub row_start: u64,
    pub col_start: u64,
    pub n_rows: usize,
    pub n_cols: usize,
    data: Vec<T>,
}

impl<T: Copy + Default> MetricsBlock<T> {
    pub fn zeroed(row_start: u64, col_start: u64, n_rows: usize, n_cols: usize) -> Self {
        MetricsBlock {
            row_start,
            col_start,
            n_rows,
            n_cols,
            data: vec![T::default(); n_rows * n_cols],
        }
    }

    pub fn at(&self, row: usize, col: usize) -> &T {
        &self.data[row * self.n_cols + col]
    }

    pub fn at_mut(&mut self, row: usize, col: usize) -> &mut T {
        &mut self.data[row * self.n_cols + col]
    }

    /// All cells row-major, for channel transport.
    pub fn cells(&self) -> &[T] {
        &self.data
    }

    pub fn from_cells(
        row_start: u64,
        col_start: u64,
        n_rows: usize,
        n_cols: usize,
        data: Vec<T>,
    ) -> Self {
        assert_eq!(data.len(), n_rows * n_cols);
        MetricsBlock { row_start, col_start, n_rows, n_cols, data }
    }
}

impl MetricsBlock<TallyTable2> {
    pub fn add_assign(&mut self, cells: &[TallyTable2]) {
        assert_eq!(cells.len(), self.data.len());
        for (mine, other) in self.data.iter_mut().zip(cells) {
            mine.add_assign(other);
        }
    }
}

impl MetricsBlock<TallyTable3> {
    pub fn add_assign(&mut self, cells: &[TallyTable3]) {
        assert_eq!(cells.len(), self.data.len());
        for (mine, other) in self.data.iter_mut().zip(cells) {
            mine.add_assign(other);
        }
    }
}

fn check_tiles(tile_a: &PackedVectorSet, tile_b: &PackedVectorSet) -> Result<()> {
    if tile_a.n_words() != tile_b.n_words() || tile_a.n_f() != tile_b.n_f() {
        return Err(Error::WordCountMismatch {
            left: tile_a.n_words(),
            right: tile_b.n_words(),
        });
    }
    if tile_a.is_sparse() != tile_b.is_sparse() {
        return Err(Error::InvalidParameter {
            name: "tiles",
            reason: "mixing sparse and dense tiles".to_string(),
        });
    }
    if tile_a.n_f() > 1 << 62 {
        return Err(Error::TallyOverflow { n_f: tile_a.n_f() });
    }
    Ok(())
}

#[inline(always)]
fn tally_into(
    acc: &mut TallyTable2,
    a: ColumnView<'_>,
    b: ColumnView<'_>,
    n_words: usize,
    tail: u64,
    sparse: bool,
) {
    let mut cells = [0u64; 4];
    for w in 0..n_words {
        let range = if w + 1 == n_words { tail } else { !0 };
        let mask = if sparse {
            range & !(a.plane0[w] & !a.plane1[w]) & !(b.plane0[w] & !b.plane1[w])
        } else {
            range
        };
        let (t00, t01, t10, t11) =
            word_counts(a.plane0[w], a.plane1[w], b.plane0[w], b.plane1[w], mask);
        cells[0] += t00;
        cells[1] += t01;
        cells[2] += t10;
        cells[3] += t11;
    }
    acc.cells[0][0] += cells[0];
    acc.cells[0][1] += cells[1];
    acc.cells[1][0] += cells[2];
    acc.cells[1][1] += cells[3];
}

/// GEMM-shaped tally block: the 2x2 table for every `(row of tile_a, col
/// of tile_b)` vector pair. Sparse tiles are masked pairwise, dense tiles
/// are tallied over the full field range.
pub fn block_tally2(
    tile_a: &PackedVectorSet,
    a_start: u64,
    tile_b: &PackedVectorSet,
    b_start: u64,
) -> Result<MetricsBlock<TallyTable2>> {
    check_tiles(tile_a, tile_b)?;
    let mut block = MetricsBlock::zeroed(a_start, b_start, tile_a.n_v(), tile_b.n_v());
    let n_words = tile_a.n_words();
    let tail = tile_a.tail_mask();
    let sparse = tile_a.is_sparse();
    for r in 0..tile_a.n_v() {
        let a = tile_a.column(r);
        for c in 0..tile_b.n_v() {
            tally_into(block.at_mut(r, c), a, tile_b.column(c), n_words, tail, sparse);
        }
    }
    Ok(block)
}

/// Self-block variant of [`block_tally2`]: only cells with `row < col` are
/// computed, the rest stay zero. Used for a tile paired with itself, where
/// the lower triangle would duplicate the upper.
pub fn block_tally2_upper(
    tile: &PackedVectorSet,
    start: u64,
) -> Result<MetricsBlock<TallyTable2>> {
    check_tiles(tile, tile)?;
    let mut block = MetricsBlock::zeroed(start, start, tile.n_v(), tile.n_v());
    let n_words = tile.n_words();
    let tail = tile.tail_mask();
    let sparse = tile.is_sparse();
    for r in 0..tile.n_v() {
        let a = tile.column(r);
        for c in (r + 1)..tile.n_v() {
            tally_into(block.at_mut(r, c), a, tile.column(c), n_words, tail, sparse);
        }
    }
    Ok(block)
}

/// One class-masked step of a three-way tally: the 2x2 table between every
/// masked column of `x` and every column of `tile_b`, counting only
/// positions valid in `x` (and, for sparse `tile_b`, not missing on the
/// `b` side either).
pub fn block_tally3_step(
    x: &MaskedTile,
    x_start: u64,
    tile_b: &PackedVectorSet,
    b_start: u64,
) -> Result<MetricsBlock<TallyTable2>> {
    if x.n_words() != tile_b.n_words() || x.n_f() != tile_b.n_f() {
        return Err(Error::WordCountMismatch { left: x.n_words(), right: tile_b.n_words() });
    }
    if x.n_f() > 1 << 62 {
        return Err(Error::TallyOverflow { n_f: x.n_f() });
    }
    let mut block: MetricsBlock<TallyTable2> =
        MetricsBlock::zeroed(x_start, b_start, x.n_cols(), tile_b.n_v());
    let n_words = x.n_words();
    let b_sparse = tile_b.is_sparse();
    for r in 0..x.n_cols() {
        let xc: MaskedColumnView<'_> = x.column(r);
        for c in 0..tile_b.n_v() {
            let b = tile_b.column(c);
            let mut cells = [0u64; 4];
            for w in 0..n_words {
                let mut mask = xc.valid[w];
                if b_sparse {
                    mask &= !(b.plane0[w] & !b.plane1[w]);
                }
                let (t00, t01, t10, t11) =
                    word_counts(xc.plane0[w], xc.plane1[w], b.plane0[w], b.plane1[w], mask);
                cells[0] += t00;
                cells[1] += t01;
                cells[2] += t10;
                cells[3] += t11;
            }
            let cell = block.at_mut(r, c);
            cell.cells[0][0] += cells[0];
            cell.cells[0][1] += cells[1];
            cell.cells[1][0] += cells[2];
            cell.cells[1][1] += cells[3];
        }
    }
    Ok(block)
}
