//! Tables (multisets of flows), their column profiles, Hamming distance and
//! counting functionals.

use std::collections::BTreeMap;
use std::fmt;

use num_rational::BigRational;
use num_traits::One;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group::{Flow, GroupElem};

/// Column-wise symbol counts; `counts[4 * col + code]`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct Profile {
    n: usize,
    counts: Vec<u32>,
}

#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct ColumnCounts {
    pub col: usize,
    pub counts: BTreeMap<String, u32>,
}

impl Profile {
    pub fn zero(n: usize) -> Profile {
        Profile {
            n,
            counts: vec![0; 4 * n],
        }
    }

    pub fn of_rows(n: usize, rows: &[Flow]) -> Profile {
        let mut p = Profile::zero(n);
        for r in rows {
            p.add_flow(r);
        }
        p
    }

    pub fn add_flow(&mut self, f: &Flow) {
        for i in 0..self.n {
            self.counts[4 * i + f.get(i).code() as usize] += 1;
        }
    }

    /// Panics if the flow is not accounted for in the profile.
    pub fn sub_flow(&mut self, f: &Flow) {
        for i in 0..self.n {
            let c = &mut self.counts[4 * i + f.get(i).code() as usize];
            *c = c.checked_sub(1).expect("profile underflow");
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn degree(&self) -> u32 {
        self.counts[..4].iter().sum()
    }

    pub fn get(&self, col: usize, g: GroupElem) -> u32 {
        self.counts[4 * col + g.code() as usize]
    }

    pub fn column(&self, col: usize) -> [u32; 4] {
        let c = &self.counts[4 * col..4 * col + 4];
        [c[0], c[1], c[2], c[3]]
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    /// Little-endian byte serialization used as a fiber key.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.counts.iter().flat_map(|c| c.to_le_bytes()).collect()
    }

    pub fn export(&self) -> Vec<ColumnCounts> {
        (0..self.n)
            .map(|i| ColumnCounts {
                col: i + 1,
                counts: GroupElem::ALL
                    .iter()
                    .map(|g| (g.symbol().to_string(), self.get(i, *g)))
                    .collect(),
            })
            .collect()
    }
}

/// A multiset of flows of common length, rows kept sorted.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct Table {
    n: usize,
    rows: Vec<Flow>,
}

impl Table {
    pub fn new(rows: Vec<Flow>) -> Result<Table> {
        let n = rows
            .first()
            .map(Flow::len)
            .ok_or_else(|| Error::Precondition("empty table needs an explicit length".into()))?;
        Table::with_len(n, rows)
    }

    pub fn with_len(n: usize, mut rows: Vec<Flow>) -> Result<Table> {
        if let Some(r) = rows.iter().find(|r| r.len() != n) {
            return Err(Error::LengthMismatch {
                left: n,
                right: r.len(),
            });
        }
        rows.sort_unstable();
        Ok(Table { n, rows })
    }

    pub fn parse(rows: &[&str]) -> Result<Table> {
        Table::new(
            rows.iter()
                .map(|r| r.parse())
                .collect::<Result<Vec<Flow>>>()?,
        )
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn degree(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[Flow] {
        &self.rows
    }

    pub fn into_rows(self) -> Vec<Flow> {
        self.rows
    }

    pub fn profile(&self) -> Profile {
        Profile::of_rows(self.n, &self.rows)
    }

    /// Whether `sub` is contained as a sub-multiset.
    pub fn contains(&self, sub: &[Flow]) -> bool {
        let mut sub = sub.to_vec();
        sub.sort_unstable();
        let mut it = self.rows.iter();
        sub.iter().all(|s| it.any(|r| r == s))
    }

    /// Removes a sub-multiset, failing if it is not contained.
    pub fn remove(&mut self, sub: &[Flow]) -> Result<()> {
        let mut rows = self.rows.clone();
        for s in sub {
            let pos = rows.binary_search(s).map_err(|_| Error::RowsMissing)?;
            rows.remove(pos);
        }
        self.rows = rows;
        Ok(())
    }

    pub fn insert(&mut self, rows: &[Flow]) -> Result<()> {
        for r in rows {
            if r.len() != self.n {
                return Err(Error::LengthMismatch {
                    left: self.n,
                    right: r.len(),
                });
            }
            let pos = self.rows.partition_point(|x| x <= r);
            self.rows.insert(pos, *r);
        }
        Ok(())
    }

    /// Rows common to both tables, as a multiset intersection.
    pub fn intersection(&self, other: &Table) -> Vec<Flow> {
        let (mut i, mut j) = (0, 0);
        let mut out = Vec::new();
        while i < self.rows.len() && j < other.rows.len() {
            match self.rows[i].cmp(&other.rows[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    out.push(self.rows[i]);
                    i += 1;
                    j += 1;
                }
            }
        }
        out
    }

    pub fn to_strings(&self) -> Vec<String> {
        self.rows.iter().map(Flow::to_string).collect()
    }
}

impl Serialize for Table {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Table {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Table, D::Error> {
        let rows = Vec::<Flow>::deserialize(d)?;
        Table::new(rows).map_err(serde::de::Error::custom)
    }
}

impl fmt::Display for Table {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{}}}", self.to_strings().join(","))
    }
}

pub fn profile(t: &Table) -> Profile {
    t.profile()
}

pub fn compatible(t0: &Table, t1: &Table) -> bool {
    t0.n == t1.n && t0.degree() == t1.degree() && t0.profile() == t1.profile()
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct HammingReport {
    pub distance: usize,
    /// Sorted multiset of differences over the disagreement columns.
    pub disagreement: Vec<GroupElem>,
    pub disagreement_columns: Vec<usize>,
    pub agreement_columns: Vec<usize>,
}

impl HammingReport {
    pub fn string(&self) -> String {
        self.disagreement.iter().map(|g| g.greek()).collect()
    }
}

pub fn hamming(r0: &Flow, r1: &Flow) -> Result<HammingReport> {
    if r0.len() != r1.len() {
        return Err(Error::LengthMismatch {
            left: r0.len(),
            right: r1.len(),
        });
    }
    let mut rep = HammingReport {
        distance: 0,
        disagreement: Vec::new(),
        disagreement_columns: Vec::new(),
        agreement_columns: Vec::new(),
    };
    for i in 0..r0.len() {
        let d = r0.get(i) + r1.get(i);
        if d.is_zero() {
            rep.agreement_columns.push(i);
        } else {
            rep.disagreement.push(d);
            rep.disagreement_columns.push(i);
        }
    }
    rep.distance = rep.disagreement.len();
    rep.disagreement.sort_unstable();
    Ok(rep)
}

/// The first cross pair (in canonical row order) of minimal Hamming distance.
pub fn min_hamming_pair(t0: &Table, t1: &Table) -> Option<(Flow, Flow, usize)> {
    let mut best: Option<(Flow, Flow, u32)> = None;
    for a in &t0.rows {
        for b in &t1.rows {
            let d = a.distance(b);
            if best.is_none_or(|(_, _, bd)| d < bd) {
                best = Some((*a, *b, d));
                if d == 0 {
                    return Some((*a, *b, 0));
                }
            }
        }
    }
    best.map(|(a, b, d)| (a, b, d as usize))
}

/// An integer-weighted linear functional on column symbol counts.
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct CountingFunctional {
    weights: BTreeMap<(usize, GroupElem), i64>,
}

impl CountingFunctional {
    pub fn new() -> CountingFunctional {
        CountingFunctional::default()
    }

    /// Adds `coef · g_{cols}`, i.e. `coef` for each occurrence of `g` in any of `cols`.
    pub fn term(mut self, cols: &[usize], g: GroupElem, coef: i64) -> CountingFunctional {
        for &c in cols {
            *self.weights.entry((c, g)).or_default() += coef;
        }
        self
    }

    pub fn weight(&self, col: usize, g: GroupElem) -> i64 {
        self.weights.get(&(col, g)).copied().unwrap_or(0)
    }

    pub fn eval_row(&self, r: &Flow) -> i64 {
        self.weights
            .iter()
            .filter(|((c, g), _)| *c < r.len() && r.get(*c) == *g)
            .map(|(_, w)| *w)
            .sum()
    }

    pub fn eval_profile(&self, p: &Profile) -> i64 {
        self.weights
            .iter()
            .filter(|((c, _), _)| *c < p.n())
            .map(|((c, g), w)| w * p.get(*c, *g) as i64)
            .sum()
    }

    pub fn eval(&self, t: &Table) -> i64 {
        t.rows.iter().map(|r| self.eval_row(r)).sum()
    }
}

pub fn counting_eval(f: &CountingFunctional, t: &Table) -> i64 {
    f.eval(t)
}

/// Evaluates the monomial `Π_rows Π_i params(i, r(i))`.
pub fn monomial_eval(
    t: &Table,
    params: &BTreeMap<(usize, GroupElem), BigRational>,
) -> Result<BigRational> {
    let mut acc = BigRational::one();
    for r in &t.rows {
        for i in 0..t.n {
            let g = r.get(i);
            let p = params.get(&(i, g)).ok_or(Error::MissingParameter {
                col: i + 1,
                sym: g.symbol(),
            })?;
            acc *= p;
        }
    }
    Ok(acc)
}

#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct TableRecord {
    pub rows: Vec<Flow>,
}

#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct BinomialPair {
    pub t0: Vec<Flow>,
    pub t1: Vec<Flow>,
}

impl BinomialPair {
    pub fn tables(&self) -> Result<(Table, Table)> {
        let t0 = Table::new(self.t0.clone())?;
        let t1 = Table::with_len(t0.n(), self.t1.clone())?;
        Ok((t0, t1))
    }

    pub fn from_tables(t0: &Table, t1: &Table) -> BinomialPair {
        BinomialPair {
            t0: t0.rows.clone(),
            t1: t1.rows.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigInt;
    use GroupElem as G;

    fn example_pair() -> (Table, Table) {
        (
            Table::parse(&["aa00", "0bb0", "c00c"]).unwrap(),
            Table::parse(&["0000", "cab0", "ab0c"]).unwrap(),
        )
    }

    #[test]
    fn profile_counts() {
        let p = Table::parse(&["abc"]).unwrap().profile();
        assert_eq!(p.get(0, G::ALPHA), 1);
        assert_eq!(p.get(1, G::BETA), 1);
        assert_eq!(p.get(2, G::GAMMA), 1);
        assert_eq!(p.counts().iter().sum::<u32>(), 3);
        let doubled = Table::parse(&["abc", "abc"]).unwrap().profile();
        assert!(doubled
            .counts()
            .iter()
            .zip(p.counts())
            .all(|(a, b)| *a == 2 * b));
        let q = Table::parse(&["abc", "0aa"]).unwrap().profile();
        assert_eq!(q.column(0), [1, 1, 0, 0]);
        assert_eq!(q.column(1), [0, 1, 1, 0]);
        assert_eq!(q.column(2), [0, 1, 0, 1]);
        assert_eq!(q.degree(), 2);
    }

    #[test]
    fn compatibility_examples() {
        let (t0, t1) = example_pair();
        assert!(compatible(&t0, &t1));
        assert!(compatible(&t0, &t0));
        let a = Table::parse(&["aa0"]).unwrap();
        let b = Table::parse(&["bb0"]).unwrap();
        assert!(!compatible(&a, &b));
    }

    #[test]
    fn hamming_examples() {
        let h = hamming(&"0000".parse().unwrap(), &"aabb".parse().unwrap()).unwrap();
        assert_eq!(h.distance, 4);
        assert_eq!(h.string(), "ααββ");
        let h = hamming(&"000".parse().unwrap(), &"abc".parse().unwrap()).unwrap();
        assert_eq!(h.string(), "αβγ");
        assert_eq!(h.agreement_columns, Vec::<usize>::new());
        let r: Flow = "abc0".parse().unwrap();
        assert_eq!(hamming(&r, &r).unwrap().distance, 0);
        assert!(hamming(&r, &"000".parse().unwrap()).is_err());
    }

    #[test]
    fn min_pair_of_example() {
        let (t0, t1) = example_pair();
        // Oracle: brute force over the nine cross pairs.
        let brute = t0
            .rows()
            .iter()
            .flat_map(|a| {
                t1.rows()
                    .iter()
                    .map(move |b| hamming(a, b).unwrap().distance)
            })
            .min()
            .unwrap();
        let (a, b, k) = min_hamming_pair(&t0, &t1).unwrap();
        assert_eq!(k, brute);
        assert_eq!(k, 2);
        assert_eq!(a.distance(&b) as usize, k);
        assert_eq!(min_hamming_pair(&t0, &t0).unwrap().2, 0);
    }

    #[test]
    fn counting_functional() {
        let f = CountingFunctional::new()
            .term(&[0, 1, 2, 3], G::ZERO, 1)
            .term(&[0, 1, 2, 3], G::ALPHA, -1);
        assert_eq!(f.eval(&Table::parse(&["aaaa"]).unwrap()), -4);
        assert_eq!(
            CountingFunctional::new().eval(&Table::parse(&["aaaa"]).unwrap()),
            0
        );
        let (t0, t1) = example_pair();
        assert_eq!(f.eval(&t0), f.eval(&t1));
        assert_eq!(f.eval(&t0), f.eval_profile(&t0.profile()));
    }

    #[test]
    fn monomials() {
        let t = Table::parse(&["abc", "000"]).unwrap();
        let mut params = BTreeMap::new();
        for i in 0..3 {
            for g in G::ALL {
                params.insert((i, g), BigRational::one());
            }
        }
        assert_eq!(monomial_eval(&t, &params).unwrap(), BigRational::one());
        for v in params.values_mut() {
            *v = BigRational::from_integer(BigInt::from(2));
        }
        let single = Table::parse(&["abc"]).unwrap();
        assert_eq!(
            monomial_eval(&single, &params).unwrap(),
            BigRational::from_integer(BigInt::from(8))
        );
        params.remove(&(0, G::ALPHA));
        assert!(monomial_eval(&single, &params).is_err());
    }

    #[test]
    fn remove_insert() {
        let mut t = Table::parse(&["000", "abc", "abc"]).unwrap();
        assert!(t.contains(&["abc".parse().unwrap(), "abc".parse().unwrap()]));
        assert!(!t.contains(&["0bb".parse().unwrap()]));
        t.remove(&["abc".parse().unwrap()]).unwrap();
        assert_eq!(t.degree(), 2);
        assert!(t.remove(&["0bb".parse().unwrap()]).is_err());
        t.insert(&["0bb".parse().unwrap()]).unwrap();
        assert_eq!(t.to_strings(), vec!["000", "0bb", "abc"]);
    }

    #[test]
    fn json_formats() {
        let (t0, t1) = example_pair();
        let pair = BinomialPair::from_tables(&t0, &t1);
        let s = serde_json::to_string(&pair).unwrap();
        assert_eq!(
            s,
            r#"{"t0":["0bb0","aa00","c00c"],"t1":["0000","ab0c","cab0"]}"#
        );
        let back: BinomialPair = serde_json::from_str(&s).unwrap();
        assert_eq!(back, pair);
        let export = serde_json::to_string(&t0.profile().export()[0]).unwrap();
        assert_eq!(export, r#"{"col":1,"counts":{"0":1,"a":1,"b":0,"c":1}}"#);
    }
}
