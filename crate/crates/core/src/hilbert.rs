//! Hilbert functions of the model polytopes, Ehrhart fitting, h-numerators
//! and exact series expansion.
//!
//! `H(k)` is the number of distinct profiles of degree-`k` tables, computed as
//! an iterated sumset of the vertex set. This equals the lattice-point count
//! of the `k`-th dilation only for normal polytopes.

use std::collections::HashSet;
use std::hash::{BuildHasherDefault, Hasher};
use std::time::Instant;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group::{enumerate_flows, FaceSpec};
use crate::markov::KeyCodec;

/// Multiply-shift hasher for already well-mixed `u64` keys.
#[derive(Default)]
struct KeyHasher(u64);

impl Hasher for KeyHasher {
    fn finish(&self) -> u64 {
        self.0
    }
    fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 = (self.0 ^ b as u64).wrapping_mul(0x100_0000_01b3);
        }
    }
    fn write_u64(&mut self, k: u64) {
        self.0 = (k ^ (k >> 29)).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    }
}

type KeySet = HashSet<u64, BuildHasherDefault<KeyHasher>>;

#[derive(Clone, Debug)]
pub struct SumsetBudget {
    /// Largest layer size allowed before giving up.
    pub max_layer: usize,
    pub time_budget_s: Option<f64>,
}

impl Default for SumsetBudget {
    fn default() -> Self {
        SumsetBudget {
            max_layer: 60_000_000,
            time_budget_s: None,
        }
    }
}

/// `H(0..=max_k)` by iterated sumsets.
pub fn hilbert_values(
    n: usize,
    face: &FaceSpec,
    max_k: usize,
    budget: &SumsetBudget,
) -> Result<Vec<u64>> {
    let flows = enumerate_flows(n, face)?;
    let codec = KeyCodec::new(n, max_k.max(1))?;
    let verts: Vec<u64> = flows.iter().map(|f| codec.encode(f)).collect();
    let start = Instant::now();
    let mut values = vec![1u64];
    let mut layer: Vec<u64> = vec![0];
    for k in 1..=max_k {
        let mut next = KeySet::default();
        for &p in &layer {
            for &v in &verts {
                next.insert(p + v);
            }
            if next.len() > budget.max_layer {
                return Err(Error::Budget(format!(
                    "layer {k} exceeds {} profiles",
                    budget.max_layer
                )));
            }
        }
        if let Some(limit) = budget.time_budget_s {
            if start.elapsed().as_secs_f64() > limit {
                return Err(Error::Budget(format!(
                    "time budget exhausted at dilation {k}"
                )));
            }
        }
        values.push(next.len() as u64);
        log::info!("hilbert n={n} face={face}: H({k}) = {}", next.len());
        layer = next.into_iter().collect();
    }
    Ok(values)
}

pub fn hilbert_value(n: usize, face: &FaceSpec, k: usize, budget: &SumsetBudget) -> Result<u64> {
    Ok(hilbert_values(n, face, k, budget)?[k])
}

/// Rank over `Q` of integer vectors, by fraction-free elimination.
pub fn rank(vectors: &[Vec<i64>]) -> usize {
    let mut basis: Vec<(usize, Vec<BigInt>)> = Vec::new();
    for v in vectors {
        let mut v: Vec<BigInt> = v.iter().map(|&x| BigInt::from(x)).collect();
        for (pc, b) in &basis {
            if !v[*pc].is_zero() {
                let f = v[*pc].clone();
                let p = b[*pc].clone();
                for (x, y) in v.iter_mut().zip(b) {
                    *x = &*x * &p - &f * y;
                }
                let g = v.iter().fold(BigInt::zero(), |g, x| g.gcd(x));
                if !g.is_zero() && !g.is_one() {
                    for x in v.iter_mut() {
                        *x = &*x / &g;
                    }
                }
            }
        }
        if let Some(pc) = v.iter().position(|x| !x.is_zero()) {
            basis.push((pc, v));
        }
    }
    basis.len()
}

/// Dimension of the vertex set's affine hull.
pub fn polytope_dimension(n: usize, face: &FaceSpec) -> Result<usize> {
    let flows = enumerate_flows(n, face)?;
    let vecs: Vec<Vec<i64>> = flows
        .iter()
        .map(|f| {
            let mut v = vec![0i64; 4 * n + 1];
            for i in 0..n {
                v[4 * i + f.get(i).code() as usize] = 1;
            }
            v[4 * n] = 1;
            v
        })
        .collect();
    Ok(rank(&vecs) - 1)
}

/// A polynomial with rational coefficients, lowest degree first.
#[derive(Clone, Debug, PartialEq)]
pub struct RatPoly {
    pub coeffs: Vec<BigRational>,
}

impl RatPoly {
    pub fn eval(&self, x: &BigRational) -> BigRational {
        self.coeffs
            .iter()
            .rev()
            .fold(BigRational::zero(), |acc, c| acc * x + c)
    }

    pub fn eval_int(&self, x: i64) -> BigRational {
        self.eval(&BigRational::from_integer(BigInt::from(x)))
    }

    pub fn degree(&self) -> usize {
        self.coeffs.iter().rposition(|c| !c.is_zero()).unwrap_or(0)
    }

    pub fn to_strings(&self) -> Vec<String> {
        self.coeffs.iter().map(|c| c.to_string()).collect()
    }
}

fn big(x: u64) -> BigInt {
    BigInt::from(x)
}

/// The unique polynomial of degree `≤ dim` through `values[0..=dim]`,
/// checked against every further value.
pub fn fit_ehrhart(values: &[BigInt], dim: usize) -> Result<RatPoly> {
    if values.len() <= dim {
        return Err(Error::NeedMoreValues(format!(
            "{} values for dimension {dim}",
            values.len()
        )));
    }
    // Forward differences at 0.
    let mut diffs = Vec::with_capacity(dim + 1);
    let mut row: Vec<BigInt> = values[..=dim].to_vec();
    for _ in 0..=dim {
        diffs.push(row[0].clone());
        row = row.windows(2).map(|w| &w[1] - &w[0]).collect();
    }
    // Σ Δ^j H(0) · C(x, j) in the monomial basis.
    let mut coeffs = vec![BigRational::zero(); dim + 1];
    let mut falling = vec![BigRational::one()]; // x(x−1)…(x−j+1)
    let mut fact = BigInt::one();
    for (j, d) in diffs.iter().enumerate() {
        if j > 0 {
            fact *= BigInt::from(j);
            let shift = BigRational::from_integer(BigInt::from(j as i64 - 1));
            let mut next = vec![BigRational::zero(); falling.len() + 1];
            for (i, c) in falling.iter().enumerate() {
                next[i + 1] += c;
                next[i] -= c * &shift;
            }
            falling = next;
        }
        let scale = BigRational::new(d.clone(), fact.clone());
        for (i, c) in falling.iter().enumerate() {
            coeffs[i] += c * &scale;
        }
    }
    let poly = RatPoly { coeffs };
    for (k, v) in values.iter().enumerate() {
        if poly.eval_int(k as i64) != BigRational::from_integer(v.clone()) {
            return Err(Error::NotPolynomial(dim));
        }
    }
    Ok(poly)
}

/// Coefficients of `(Σ H(j) t^j)(1 − t)^{dim+1}` up to `t^K`, trimmed.
pub fn h_numerator(values: &[BigInt], dim: usize) -> Result<Vec<BigInt>> {
    let k = values.len().saturating_sub(1);
    if k < dim + 1 {
        return Err(Error::NeedMoreValues(format!(
            "{} values cannot show termination in dimension {dim}",
            values.len()
        )));
    }
    let e = dim + 1;
    let mut binom = vec![BigInt::one()];
    for i in 1..=e {
        let prev = binom[i - 1].clone();
        binom.push(prev * BigInt::from(e - i + 1) / BigInt::from(i));
    }
    let mut h: Vec<BigInt> = (0..=k)
        .map(|j| {
            (0..=j.min(e)).fold(BigInt::zero(), |acc, i| {
                let term = &binom[i] * &values[j - i];
                if i % 2 == 0 {
                    acc + term
                } else {
                    acc - term
                }
            })
        })
        .collect();
    let deg = h.iter().rposition(|c| !c.is_zero()).unwrap_or(0);
    if deg >= k {
        return Err(Error::NeedMoreValues(
            "convolution does not terminate within the values".into(),
        ));
    }
    h.truncate(deg + 1);
    Ok(h)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesData {
    pub numerator: Vec<BigInt>,
    pub denom_exp: usize,
}

/// Coefficients of `numerator / (1 − t)^e` up to `t^K`.
pub fn expand_series(s: &SeriesData, k: usize) -> Vec<BigInt> {
    let e = s.denom_exp;
    // C(j + e − 1, e − 1) for j = 0..=K.
    let mut binom = Vec::with_capacity(k + 1);
    let mut c = BigInt::one();
    for j in 0..=k {
        if j > 0 {
            if e == 0 {
                c = BigInt::zero();
            } else {
                c = c * BigInt::from(j + e - 1) / BigInt::from(j);
            }
        }
        binom.push(c.clone());
    }
    (0..=k)
        .map(|j| {
            s.numerator
                .iter()
                .enumerate()
                .take(j + 1)
                .fold(BigInt::zero(), |acc, (i, a)| acc + a * &binom[j - i])
        })
        .collect()
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct HilbertRecord {
    pub n_leaves: usize,
    pub face: FaceSpec,
    pub dim: usize,
    pub values: Vec<BigInt>,
    /// Ehrhart coefficients as reduced fractions, constant term first.
    pub ehrhart: Vec<String>,
    pub normalized_volume: BigInt,
    pub h_numerator: Vec<BigInt>,
    pub a_invariant: i64,
    pub regularity_bound: usize,
}

impl HilbertRecord {
    pub fn from_values(
        n_leaves: usize,
        face: &FaceSpec,
        dim: usize,
        values: Vec<BigInt>,
    ) -> Result<HilbertRecord> {
        let poly = fit_ehrhart(&values, dim)?;
        let h = h_numerator(&values, dim)?;
        let deg_h = h.len() - 1;
        let mut fact = BigInt::one();
        for i in 2..=dim {
            fact *= BigInt::from(i);
        }
        let vol = poly.coeffs[dim].clone() * BigRational::from_integer(fact);
        if !vol.is_integer() {
            return Err(Error::Precondition(
                "normalized volume is not an integer".into(),
            ));
        }
        Ok(HilbertRecord {
            n_leaves,
            face: face.clone(),
            dim,
            values,
            ehrhart: poly.to_strings(),
            normalized_volume: vol.to_integer(),
            h_numerator: h,
            a_invariant: deg_h as i64 - dim as i64 - 1,
            regularity_bound: 1 + deg_h,
        })
    }

    pub fn h_is_nonnegative(&self) -> bool {
        self.h_numerator.iter().all(|c| !c.is_negative())
    }
}

/// `1 + deg h` together with the a-invariant; errors if `a ≥ 0`.
pub fn regularity_bound(record: &HilbertRecord) -> Result<(usize, i64)> {
    if record.a_invariant >= 0 {
        return Err(Error::Precondition(format!(
            "a-invariant {} is not negative",
            record.a_invariant
        )));
    }
    Ok((record.regularity_bound, record.a_invariant))
}

/// Enumerates `H(0..=max_k)` and builds the full record.
pub fn hilbert_record(
    n: usize,
    face: &FaceSpec,
    max_k: usize,
    budget: &SumsetBudget,
) -> Result<HilbertRecord> {
    let dim = polytope_dimension(n, face)?;
    let values = hilbert_values(n, face, max_k, budget)?
        .into_iter()
        .map(big)
        .collect();
    HilbertRecord::from_values(n, face, dim, values)
}

pub const SERIES_FIXTURE: &str = include_str!("../data/series.json");

#[derive(Clone, Debug, Deserialize)]
pub struct NamedSeries {
    pub name: String,
    pub face: FaceSpec,
    pub denom_exp: usize,
    pub numerator: Vec<u64>,
    #[serde(default)]
    pub note: Option<String>,
}

impl NamedSeries {
    pub fn data(&self) -> SeriesData {
        SeriesData {
            numerator: self.numerator.iter().map(|&c| big(c)).collect(),
            denom_exp: self.denom_exp,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
pub struct HilbertPolyFixture {
    pub denominator: u64,
    pub numerators_from_t18_to_t1: Vec<u64>,
    pub constant: u64,
}

impl HilbertPolyFixture {
    /// Coefficients, constant term first.
    pub fn coefficients(&self) -> Vec<BigRational> {
        let den = big(self.denominator);
        let mut out = vec![BigRational::from_integer(big(self.constant))];
        out.extend(
            self.numerators_from_t18_to_t1
                .iter()
                .rev()
                .map(|&c| BigRational::new(big(c), den.clone())),
        );
        out
    }
}

#[derive(Clone, Debug, Deserialize)]
pub struct SeriesFixture {
    pub series: Vec<NamedSeries>,
    #[serde(rename = "hilbert_polynomial_P")]
    pub hilbert_polynomial_p: HilbertPolyFixture,
}

pub fn series_fixture() -> SeriesFixture {
    serde_json::from_str(SERIES_FIXTURE).expect("bundled series fixture parses")
}

/// Sum of the numerator coefficients, i.e. `h(1)`.
pub fn numerator_at_one(s: &SeriesData) -> BigInt {
    s.numerator.iter().sum()
}

pub fn to_u64(x: &BigInt) -> Option<u64> {
    x.to_u64()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ints(v: &[i64]) -> Vec<BigInt> {
        v.iter().map(|&x| BigInt::from(x)).collect()
    }

    #[test]
    fn point_polytope() {
        let vals = ints(&[1, 1, 1]);
        let p = fit_ehrhart(&vals, 0).unwrap();
        assert_eq!(p.coeffs, vec![BigRational::one()]);
        assert_eq!(h_numerator(&vals, 0).unwrap(), ints(&[1]));
        let rec = HilbertRecord::from_values(1, &FaceSpec::empty(), 0, vals).unwrap();
        assert_eq!(regularity_bound(&rec).unwrap(), (1, -1));
    }

    #[test]
    fn geometric_series() {
        let s = SeriesData {
            numerator: ints(&[1]),
            denom_exp: 1,
        };
        assert_eq!(expand_series(&s, 5), ints(&[1; 6]));
    }

    #[test]
    fn segment_and_square() {
        // Unit segment: H(k) = k + 1; unit square: (k + 1)^2.
        let seg: Vec<BigInt> = (0..5).map(|k| BigInt::from(k + 1)).collect();
        assert_eq!(h_numerator(&seg, 1).unwrap(), ints(&[1]));
        let sq: Vec<BigInt> = (0..6).map(|k| BigInt::from((k + 1) * (k + 1))).collect();
        assert_eq!(h_numerator(&sq, 2).unwrap(), ints(&[1, 1]));
        let p = fit_ehrhart(&sq, 2).unwrap();
        assert_eq!(p.eval_int(-1), BigRational::zero());
        assert!(fit_ehrhart(&ints(&[1, 2, 4, 8, 16]), 2).is_err());
        assert!(h_numerator(&sq[..3], 2).is_err());
    }

    #[test]
    fn round_trip() {
        let s = SeriesData {
            numerator: ints(&[1, 4, 1]),
            denom_exp: 4,
        };
        let vals = expand_series(&s, 8);
        assert_eq!(h_numerator(&vals, 3).unwrap(), s.numerator);
    }

    #[test]
    fn small_polytopes() {
        assert_eq!(polytope_dimension(2, &FaceSpec::empty()).unwrap(), 3);
        for n in 3..=4 {
            let dim = polytope_dimension(n, &FaceSpec::empty()).unwrap();
            assert_eq!(dim, 3 * n);
        }
        let v = hilbert_values(3, &FaceSpec::empty(), 2, &SumsetBudget::default()).unwrap();
        assert_eq!(v[..2], [1, 16]);
    }

    #[test]
    fn fixture_t1_coefficients() {
        let fx = series_fixture();
        let t1: Vec<BigInt> = fx
            .series
            .iter()
            .map(|s| expand_series(&s.data(), 1)[1].clone())
            .collect();
        assert_eq!(t1, ints(&[1024, 512, 576]));
    }
}
