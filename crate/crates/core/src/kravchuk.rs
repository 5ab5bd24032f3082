//! Walsh functions and the level sums `G_{d,j,m}`.
//!
//! `G_{d,j}(x, y)` sums `w_T(x) w_T(y)` over all `C(d, j)` subsets `T` of size
//! `j`. It depends on `x, y` only through `m = |x ∔ y|`, and the values obey
//!
//! ```text
//! G_{d,j,m} = G_{d-1,j,m-1} - G_{d-1,j-1,m-1}
//! ```
//!
//! (the Kravchuk polynomials). Raw values grow like `C(d, j)`, so tables hold
//! the normalized `G'_{d,j,m} = G_{d,j,m} / C(d, j)`, which lies in `[-1, 1]`
//! and satisfies
//!
//! ```text
//! G'_{d,j,m} = (d-j)/d * G'_{d-1,j,m-1} - j/d * G'_{d-1,j-1,m-1}
//! ```
//!
//! The closed form and the brute-force Walsh sum are kept here as oracles.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{GraphGpError, Result};
use crate::graphspace::GraphCode;

/// Largest `d` accepted by [`brute_force_g`].
pub const BRUTE_FORCE_MAX_D: usize = 20;

/// Largest `d` for which [`kravchuk_closed_form`] is exact in `i128`.
pub const CLOSED_FORM_MAX_D: usize = 60;

/// A set `T` of edge slots, kept sorted.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SubsetIndex {
    members: Vec<usize>,
}

impl SubsetIndex {
    pub fn new(mut members: Vec<usize>, d: usize) -> Result<Self> {
        members.sort_unstable();
        members.dedup();
        if let Some(&last) = members.last() {
            if last >= d {
                return Err(GraphGpError::OutOfRange {
                    what: "subset member",
                    index: last,
                    bound: d,
                });
            }
        }
        Ok(SubsetIndex { members })
    }

    pub fn empty() -> Self {
        SubsetIndex {
            members: Vec::new(),
        }
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Walsh function `w_T(x) = (-1)^{Σ_{t∈T} x_t}`.
pub fn walsh(t: &SubsetIndex, x: &GraphCode) -> Result<f64> {
    if let Some(&last) = t.members.last() {
        if last >= x.len() {
            return Err(GraphGpError::OutOfRange {
                what: "subset member",
                index: last,
                bound: x.len(),
            });
        }
    }
    let parity = t.members.iter().filter(|&&s| x.bit(s)).count() % 2;
    Ok(if parity == 0 { 1.0 } else { -1.0 })
}

/// A raw table value `G_{d,j,m}` in sign/log-magnitude form.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SignedLog {
    pub negative: bool,
    /// `ln |value|`; `-inf` for zero.
    pub log_abs: f64,
}

impl SignedLog {
    pub fn value(self) -> f64 {
        let v = self.log_abs.exp();
        if self.negative {
            -v
        } else {
            v
        }
    }
}

/// Normalized values `G'_{d,j,m}` for `0 <= j, m <= d`.
#[derive(Clone, Debug, PartialEq)]
pub struct KravchukTable {
    d: usize,
    // row-major, row j, column m
    values: Vec<f64>,
    log_binom: Vec<f64>,
}

impl KravchukTable {
    /// Run the normalized recurrence up to dimension `d`.
    pub fn build(d: usize) -> Result<Self> {
        if d == 0 {
            return Err(GraphGpError::invalid("Kravchuk tables need d >= 1"));
        }
        // d = 1: G'_{1,0,m} = 1, G'_{1,1,m} = (-1)^m
        let mut prev = vec![1.0, 1.0, 1.0, -1.0];
        for dd in 2..=d {
            let w = dd + 1;
            let pw = dd;
            let mut next = vec![0.0; w * w];
            let inv = 1.0 / dd as f64;
            for j in 0..=dd {
                next[j * w] = 1.0;
                for m in 1..=dd {
                    let mut v = 0.0;
                    if j < dd {
                        v += (dd - j) as f64 * inv * prev[j * pw + m - 1];
                    }
                    if j > 0 {
                        v -= j as f64 * inv * prev[(j - 1) * pw + m - 1];
                    }
                    next[j * w + m] = if j == 0 { 1.0 } else { v };
                }
            }
            prev = next;
        }
        let mut log_binom = vec![0.0; d + 1];
        for j in 1..=d {
            log_binom[j] = log_binom[j - 1] + ((d - j + 1) as f64).ln() - (j as f64).ln();
        }
        Ok(KravchukTable {
            d,
            values: prev,
            log_binom,
        })
    }

    /// Shared table for `d`, built once per process.
    pub fn shared(d: usize) -> Result<Arc<KravchukTable>> {
        static CACHE: OnceLock<Mutex<HashMap<usize, Arc<KravchukTable>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        if let Some(t) = cache.lock().expect("table cache poisoned").get(&d) {
            return Ok(Arc::clone(t));
        }
        let table = Arc::new(KravchukTable::build(d)?);
        let mut guard = cache.lock().expect("table cache poisoned");
        Ok(Arc::clone(guard.entry(d).or_insert(table)))
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// `G'_{d,j,m}`.
    pub fn normalized(&self, j: usize, m: usize) -> Result<f64> {
        self.check(j, m)?;
        Ok(self.values[j * (self.d + 1) + m])
    }

    #[inline]
    pub(crate) fn normalized_unchecked(&self, j: usize, m: usize) -> f64 {
        self.values[j * (self.d + 1) + m]
    }

    /// Row `j` of normalized values, indexed by `m`.
    pub fn row(&self, j: usize) -> Result<&[f64]> {
        self.check(j, 0)?;
        let w = self.d + 1;
        Ok(&self.values[j * w..(j + 1) * w])
    }

    /// `ln C(d, j)`.
    pub fn log_binom(&self, j: usize) -> Result<f64> {
        self.check(j, 0)?;
        Ok(self.log_binom[j])
    }

    pub fn log_binoms(&self) -> &[f64] {
        &self.log_binom
    }

    /// Raw `G_{d,j,m} = C(d,j) G'_{d,j,m}` in sign/log form.
    pub fn raw(&self, j: usize, m: usize) -> Result<SignedLog> {
        let g = self.normalized(j, m)?;
        Ok(SignedLog {
            negative: g < 0.0,
            log_abs: self.log_binom[j] + g.abs().ln(),
        })
    }

    fn check(&self, j: usize, m: usize) -> Result<()> {
        for (what, v) in [("level j", j), ("distance m", m)] {
            if v > self.d {
                return Err(GraphGpError::OutOfRange {
                    what,
                    index: v,
                    bound: self.d + 1,
                });
            }
        }
        Ok(())
    }

    /// CSV with one row per `j` and one column per `m`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("j");
        for m in 0..=self.d {
            out.push_str(&format!(",m{m}"));
        }
        out.push('\n');
        for j in 0..=self.d {
            out.push_str(&j.to_string());
            for m in 0..=self.d {
                out.push_str(&format!(",{:e}", self.normalized_unchecked(j, m)));
            }
            out.push('\n');
        }
        out
    }
}

fn binom_i128(n: usize, k: usize) -> i128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: i128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as i128 / (i + 1) as i128;
    }
    acc
}

/// Exact `G_{d,j,m} = Σ_ℓ (-1)^ℓ C(m,ℓ) C(d-m, j-ℓ)`.
pub fn kravchuk_closed_form(d: usize, j: usize, m: usize) -> Result<i128> {
    if d > CLOSED_FORM_MAX_D {
        return Err(GraphGpError::invalid(format!(
            "closed-form Kravchuk values are exact only for d <= {CLOSED_FORM_MAX_D}"
        )));
    }
    for (what, v) in [("level j", j), ("distance m", m)] {
        if v > d {
            return Err(GraphGpError::OutOfRange {
                what,
                index: v,
                bound: d + 1,
            });
        }
    }
    let lo = (m + j).saturating_sub(d);
    let hi = j.min(m);
    Ok((lo..=hi)
        .map(|l| {
            let term = binom_i128(m, l) * binom_i128(d - m, j - l);
            if l % 2 == 0 {
                term
            } else {
                -term
            }
        })
        .sum())
}

/// `G_{d,j}(x, y)` by summing `w_T(x) w_T(y)` over every `|T| = j`.
pub fn brute_force_g(d: usize, j: usize, x: &GraphCode, y: &GraphCode) -> Result<f64> {
    if d > BRUTE_FORCE_MAX_D {
        return Err(GraphGpError::invalid(format!(
            "brute-force Walsh sums enumerate C(d, j) subsets and are capped at \
             d <= {BRUTE_FORCE_MAX_D}; got d = {d}"
        )));
    }
    if x.len() != d || y.len() != d {
        return Err(GraphGpError::invalid(format!(
            "codes have {} and {} slots, expected d = {d}",
            x.len(),
            y.len()
        )));
    }
    if j > d {
        return Err(GraphGpError::OutOfRange {
            what: "level j",
            index: j,
            bound: d + 1,
        });
    }
    let xm = x.as_index().expect("d <= 20");
    let ym = y.as_index().expect("d <= 20");
    if j == 0 {
        return Ok(1.0);
    }
    let mut total = 0i64;
    // Gosper's hack over all j-subsets of d bits
    let mut t: u64 = (1u64 << j) - 1;
    let limit = 1u64 << d;
    while t < limit {
        let wx = if (t & xm).count_ones().is_multiple_of(2) { 1 } else { -1 };
        let wy = if (t & ym).count_ones().is_multiple_of(2) { 1 } else { -1 };
        total += wx * wy;
        let c = t & t.wrapping_neg();
        let r = t + c;
        t = (((r ^ t) >> 2) / c) | r;
    }
    Ok(total as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphspace::{GraphSpace, GraphSpaceKind};

    fn space3() -> GraphSpace {
        GraphSpace::new(GraphSpaceKind::UndirectedNoLoops, 3).unwrap()
    }

    #[test]
    fn walsh_examples() {
        let s = space3();
        let x = s.code_from_str("100").unwrap();
        assert_eq!(walsh(&SubsetIndex::empty(), &x).unwrap(), 1.0);
        assert_eq!(walsh(&SubsetIndex::new(vec![0], 3).unwrap(), &x).unwrap(), -1.0);
        assert!(SubsetIndex::new(vec![3], 3).is_err());
        let wide = SubsetIndex::new(vec![5], 9).unwrap();
        assert!(walsh(&wide, &x).is_err());
    }

    #[test]
    fn small_tables() {
        assert!(KravchukTable::build(0).is_err());
        let t1 = KravchukTable::build(1).unwrap();
        assert_eq!(t1.normalized(1, 1).unwrap(), -1.0);
        let t2 = KravchukTable::build(2).unwrap();
        assert_eq!(t2.normalized(1, 1).unwrap(), 0.0);
        assert_eq!(t2.normalized(1, 2).unwrap(), -1.0);
        assert!(t2.normalized(3, 0).is_err());
    }

    #[test]
    fn closed_form_examples() {
        for d in 1..=10 {
            for j in 0..=d {
                assert_eq!(kravchuk_closed_form(d, j, 0).unwrap(), binom_i128(d, j));
            }
        }
        assert_eq!(kravchuk_closed_form(2, 1, 1).unwrap(), 0);
        assert_eq!(kravchuk_closed_form(4, 2, 2).unwrap(), -2);
        assert!(kravchuk_closed_form(4, 5, 0).is_err());
    }

    #[test]
    fn brute_force_basics() {
        let s = GraphSpace::new(GraphSpaceKind::UndirectedNoLoops, 4).unwrap();
        let x = s.code_from_edges(&[(0, 1), (2, 3)]).unwrap();
        let y = s.code_from_edges(&[(0, 2)]).unwrap();
        assert_eq!(brute_force_g(6, 0, &x, &y).unwrap(), 1.0);
        assert_eq!(brute_force_g(6, 3, &x, &x).unwrap(), 20.0);
        let big = GraphSpace::new(GraphSpaceKind::UndirectedNoLoops, 7).unwrap();
        let z = big.empty_code();
        assert!(brute_force_g(21, 1, &z, &z).is_err());
    }

    #[test]
    fn table_invariants() {
        let t = KravchukTable::build(40).unwrap();
        for j in 0..=40 {
            assert_eq!(t.normalized(j, 0).unwrap(), 1.0);
            assert_eq!(t.normalized(0, j).unwrap(), 1.0);
            for m in 0..=40 {
                assert!(t.normalized(j, m).unwrap().abs() <= 1.0 + 1e-12);
            }
            // G'_{d,d,m} = (-1)^m
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            assert!((t.normalized(40, j).unwrap() - sign).abs() < 1e-12);
        }
    }

    #[test]
    fn raw_reconstruction() {
        let t = KravchukTable::build(8).unwrap();
        for j in 0..=8 {
            for m in 0..=8 {
                let exact = kravchuk_closed_form(8, j, m).unwrap() as f64;
                let raw = t.raw(j, m).unwrap().value();
                assert!((raw - exact).abs() < 1e-9 * exact.abs().max(1.0));
            }
        }
    }

    #[test]
    fn large_d_stays_bounded() {
        let t = KravchukTable::build(256).unwrap();
        assert!(t.log_binom(128).unwrap() > 170.0);
        assert!(t.values.iter().all(|v| v.is_finite() && v.abs() <= 1.0 + 1e-9));
    }

    #[test]
    fn shared_tables_are_cached() {
        let a = KravchukTable::shared(9).unwrap();
        let b = KravchukTable::shared(9).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
    }

    #[test]
    fn csv_shape() {
        let csv = KravchukTable::build(2).unwrap().to_csv();
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], "j,m0,m1,m2");
        assert_eq!(lines.len(), 4);
    }
}
