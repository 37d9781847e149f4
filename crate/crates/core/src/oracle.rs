//! Independent reference computations: literal pairing enumeration and
//! exact-fraction coefficients.
//!
//! Nothing here shares code with the popcount kernels or the float metric
//! path. Tallies are recomputed by walking decoded values and enumerating
//! the 4 (or 8) component pairings one by one; coefficients are recomputed
//! in arbitrary-precision rationals. The kernels and engines are tested
//! against these, never against themselves.

use num::rational::BigRational;
use num::{BigInt, FromPrimitive, Signed, ToPrimitive};

use crate::element::SiteValue;
use crate::tally::{TallyTable2, TallyTable3};

fn component(v: SiteValue, which: u8) -> Option<u8> {
    match v {
        SiteValue::Present(e) => Some(if which == 0 { e.first() } else { e.second() }),
        SiteValue::Missing => None,
    }
}

/// Tally of two decoded vectors by literal enumeration: for every shared
/// valid position, each of the four `(component of a, component of b)`
/// pairings bumps one cell. Returns the tally and the valid-position count
/// (positions where neither side is missing).
pub fn oracle_tally2(a: &[SiteValue], b: &[SiteValue]) -> (TallyTable2, u64) {
    assert_eq!(a.len(), b.len(), "oracle vectors must share a length");
    let mut t = TallyTable2::default();
    let mut valid = 0u64;
    for (&va, &vb) in a.iter().zip(b) {
        if va.is_missing() || vb.is_missing() {
            continue;
        }
        valid += 1;
        for r in 0..2u8 {
            for s in 0..2u8 {
                let ca = component(va, r).expect("present");
                let cb = component(vb, s).expect("present");
                t.add(ca, cb, 1);
            }
        }
    }
    (t, valid)
}

/// Three-way analog of [`oracle_tally2`]: each of the eight component
/// pairings bumps one cell per valid position.
pub fn oracle_tally3(
    a: &[SiteValue],
    b: &[SiteValue],
    c: &[SiteValue],
) -> (TallyTable3, u64) {
    assert!(
        a.len() == b.len() && b.len() == c.len(),
        "oracle vectors must share a length"
    );
    let mut t = TallyTable3::default();
    let mut valid = 0u64;
    for ((&va, &vb), &vc) in a.iter().zip(b).zip(c) {
        if va.is_missing() || vb.is_missing() || vc.is_missing() {
            continue;
        }
        valid += 1;
        for r in 0..2u8 {
            for s in 0..2u8 {
                for u in 0..2u8 {
                    t.add(
                        component(va, r).expect("present"),
                        component(vb, s).expect("present"),
                        component(vc, u).expect("present"),
                        1,
                    );
                }
            }
        }
    }
    (t, valid)
}

/// Per-vector counts by direct enumeration: total one-components over
/// valid positions, and the valid-position count.
pub fn oracle_counts(v: &[SiteValue]) -> (u64, u64) {
    let mut ones = 0u64;
    let mut valid = 0u64;
    for &s in v {
        if let SiteValue::Present(e) = s {
            valid += 1;
            ones += e.count_of(1);
        }
    }
    (ones, valid)
}

fn ratio(n: u64, d: u64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

/// `1 - gamma * f(allele)`, exactly, from integer counts: `f(1)` is
/// `ones / (2 * valid)` and `f(0)` its complement.
fn exact_damping(allele: u8, ones: u64, valid: u64, gamma: &BigRational) -> BigRational {
    let f = if allele == 1 {
        ratio(ones, 2 * valid)
    } else {
        ratio(2 * valid - ones, 2 * valid)
    };
    BigRational::from_integer(BigInt::from(1)) - gamma * f
}

/// Exact two-way coefficients from an integer tally and per-vector counts
/// `(ones, valid)`. `None` when the tally is empty or either vector has no
/// valid positions — the coefficient is undefined there.
///
/// Cell `(a, b)` is `t[a][b]/sum(t) * (1 - g*f_i(a)) * (1 - g*f_j(b))`,
/// evaluated in exact rational arithmetic. `gamma` is taken at its exact
/// binary-float value so a correctly computed double can match to the last
/// bit of rounding.
pub fn exact_ccc2(
    t: &TallyTable2,
    counts_i: (u64, u64),
    counts_j: (u64, u64),
    gamma: f64,
) -> Option<[BigRational; 4]> {
    let sum = t.sum();
    if sum == 0 || counts_i.1 == 0 || counts_j.1 == 0 {
        return None;
    }
    let gamma = BigRational::from_f64(gamma)?;
    let mut out: [BigRational; 4] = Default::default();
    let mut n = 0;
    for a in 0..2u8 {
        for b in 0..2u8 {
            let f_ij = ratio(t.get(a, b), sum);
            let di = exact_damping(a, counts_i.0, counts_i.1, &gamma);
            let dj = exact_damping(b, counts_j.0, counts_j.1, &gamma);
            out[n] = f_ij * di * dj;
            n += 1;
        }
    }
    Some(out)
}

/// Exact three-way coefficients; cells in `(a, b, c)` lexicographic order.
pub fn exact_ccc3(
    t: &TallyTable3,
    counts_i: (u64, u64),
    counts_j: (u64, u64),
    counts_k: (u64, u64),
    gamma: f64,
) -> Option<[BigRational; 8]> {
    let sum = t.sum();
    if sum == 0 || counts_i.1 == 0 || counts_j.1 == 0 || counts_k.1 == 0 {
        return None;
    }
    let gamma = BigRational::from_f64(gamma)?;
    let mut out: [BigRational; 8] = Default::default();
    let mut n = 0;
    for a in 0..2u8 {
        for b in 0..2u8 {
            for c in 0..2u8 {
                let f_ijk = ratio(t.get(a, b, c), sum);
                let di = exact_damping(a, counts_i.0, counts_i.1, &gamma);
                let dj = exact_damping(b, counts_j.0, counts_j.1, &gamma);
                let dk = exact_damping(c, counts_k.0, counts_k.1, &gamma);
                out[n] = f_ijk * di * dj * dk;
                n += 1;
            }
        }
    }
    Some(out)
}

/// True when `value` is within `tol * max(1, |exact|)` of `exact`,
/// evaluated without rounding.
pub fn float_matches(value: f64, exact: &BigRational, tol: f64) -> bool {
    let v = match BigRational::from_f64(value) {
        Some(v) => v,
        None => return false,
    };
    let tol = BigRational::from_f64(tol).expect("finite tolerance");
    let one = BigRational::from_integer(BigInt::from(1));
    let scale = if exact.abs() > one { exact.abs() } else { one };
    (v - exact).abs() <= tol * scale
}

/// Renders an exact value as a double for reporting.
pub fn exact_to_f64(exact: &BigRational) -> f64 {
    exact.to_f64().unwrap_or(f64::NAN)
}

/// Exact check that a tally conserves mass: the cells of a two-way tally
/// sum to four per tallied position.
pub fn conserves2(t: &TallyTable2, valid: u64) -> bool {
    t.sum() == 4 * valid
}

/// Three-way conservation: eight per tallied position.
pub fn conserves3(t: &TallyTable3, valid: u64) -> bool {
    t.sum() == 8 * valid
}
