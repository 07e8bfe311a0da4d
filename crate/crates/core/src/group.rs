//! The Klein four-group `Z2×Z2`, its automorphisms, and the group of flows.
//!
//! Elements are 2-bit codes (`0`=00, `α`=01, `β`=10, `γ`=11) and addition is
//! XOR. A flow of length `n` is packed into a `u64` with column 0 in the most
//! significant position, so numeric order on words of equal length is the
//! lexicographic order on entries.

use std::collections::BTreeSet;
use std::fmt;
use std::ops::Add;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub const MAX_LEAVES: usize = 31;

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Default)]
pub struct GroupElem(u8);

impl GroupElem {
    pub const ZERO: GroupElem = GroupElem(0);
    pub const ALPHA: GroupElem = GroupElem(1);
    pub const BETA: GroupElem = GroupElem(2);
    pub const GAMMA: GroupElem = GroupElem(3);
    pub const ALL: [GroupElem; 4] = [Self::ZERO, Self::ALPHA, Self::BETA, Self::GAMMA];
    pub const NONZERO: [GroupElem; 3] = [Self::ALPHA, Self::BETA, Self::GAMMA];

    pub fn from_code(code: u8) -> Option<GroupElem> {
        (code < 4).then_some(GroupElem(code))
    }

    pub fn code(self) -> u8 {
        self.0
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    /// ASCII symbol used in serialized flows.
    pub fn symbol(self) -> char {
        b"0abc"[self.0 as usize] as char
    }

    pub fn greek(self) -> char {
        ['0', 'α', 'β', 'γ'][self.0 as usize]
    }

    /// Accepts both the ASCII alphabet and the Greek letters.
    pub fn from_symbol(c: char) -> Result<GroupElem> {
        match c {
            '0' => Ok(Self::ZERO),
            'a' | 'α' => Ok(Self::ALPHA),
            'b' | 'β' => Ok(Self::BETA),
            'c' | 'γ' => Ok(Self::GAMMA),
            other => Err(Error::InvalidSymbol(other)),
        }
    }
}

impl Add for GroupElem {
    type Output = GroupElem;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn add(self, rhs: GroupElem) -> GroupElem {
        GroupElem(self.0 ^ rhs.0)
    }
}

impl fmt::Display for GroupElem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.symbol())
    }
}

pub fn add(a: GroupElem, b: GroupElem) -> GroupElem {
    a + b
}

/// An automorphism of `G`, i.e. a permutation of the nonzero elements.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Automorphism {
    map: [u8; 4],
}

impl Automorphism {
    pub const IDENTITY: Automorphism = Automorphism { map: [0, 1, 2, 3] };

    /// The automorphism sending `α ↦ a` and `β ↦ b`.
    pub fn from_images(a: GroupElem, b: GroupElem) -> Result<Automorphism> {
        if a.is_zero() || b.is_zero() || a == b {
            return Err(Error::InvalidAutomorphism);
        }
        Ok(Automorphism {
            map: [0, a.0, b.0, (a + b).0],
        })
    }

    /// All six automorphisms, identity first.
    pub fn all() -> [Automorphism; 6] {
        let mut out = [Self::IDENTITY; 6];
        let mut i = 0;
        for a in GroupElem::NONZERO {
            for b in GroupElem::NONZERO {
                if a != b {
                    out[i] = Self::from_images(a, b).unwrap();
                    i += 1;
                }
            }
        }
        out
    }

    /// The transposition exchanging two nonzero elements.
    pub fn swap(x: GroupElem, y: GroupElem) -> Result<Automorphism> {
        if x.is_zero() || y.is_zero() {
            return Err(Error::InvalidAutomorphism);
        }
        let mut map = [0, 1, 2, 3];
        map.swap(x.0 as usize, y.0 as usize);
        Ok(Automorphism { map })
    }

    pub fn apply(&self, g: GroupElem) -> GroupElem {
        GroupElem(self.map[g.0 as usize])
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &Automorphism) -> Automorphism {
        let mut map = [0u8; 4];
        for (i, m) in map.iter_mut().enumerate() {
            *m = self.map[other.map[i] as usize];
        }
        Automorphism { map }
    }

    pub fn inverse(&self) -> Automorphism {
        let mut map = [0u8; 4];
        for (i, &m) in self.map.iter().enumerate() {
            map[m as usize] = i as u8;
        }
        Automorphism { map }
    }

    /// Applies the automorphism to every entry of a flow.
    pub fn apply_flow(&self, f: Flow) -> Flow {
        let mut bits = 0u64;
        for i in 0..f.len() {
            bits = (bits << 2) | self.map[f.get(i).0 as usize] as u64;
        }
        Flow::from_raw(bits, f.len())
    }
}

pub fn apply_aut(aut: &Automorphism, g: GroupElem) -> GroupElem {
    aut.apply(g)
}

/// The class of `g` in `G/⟨h⟩ ≅ Z2`.
pub fn phi_quotient(g: GroupElem, h: GroupElem) -> Result<u8> {
    if h.is_zero() {
        return Err(Error::ZeroQuotient);
    }
    Ok(u8::from(!(g.is_zero() || g == h)))
}

const LOW_BITS: u64 = 0x5555_5555_5555_5555;

#[inline]
fn mask(len: usize) -> u64 {
    if len >= 32 {
        u64::MAX
    } else {
        (1u64 << (2 * len)) - 1
    }
}

/// XOR of all 2-bit groups of `bits`.
#[inline]
pub(crate) fn fold_sum(mut bits: u64) -> u8 {
    bits ^= bits >> 32;
    bits ^= bits >> 16;
    bits ^= bits >> 8;
    bits ^= bits >> 4;
    bits ^= bits >> 2;
    (bits & 3) as u8
}

/// A sequence of group elements summing to zero.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct Flow {
    bits: u64,
    len: u8,
}

impl Flow {
    pub fn new(entries: &[GroupElem]) -> Result<Flow> {
        let f = Self::from_entries_unchecked(entries)?;
        if fold_sum(f.bits) != 0 {
            return Err(Error::NotAFlow(f.to_string()));
        }
        Ok(f)
    }

    /// Packs entries without checking the flow condition.
    pub(crate) fn from_entries_unchecked(entries: &[GroupElem]) -> Result<Flow> {
        if entries.is_empty() || entries.len() > MAX_LEAVES {
            return Err(Error::UnsupportedLength(entries.len()));
        }
        let mut bits = 0u64;
        for g in entries {
            bits = (bits << 2) | g.0 as u64;
        }
        Ok(Flow {
            bits,
            len: entries.len() as u8,
        })
    }

    pub(crate) fn from_raw(bits: u64, len: usize) -> Flow {
        debug_assert!(len <= MAX_LEAVES && bits & !mask(len) == 0);
        Flow {
            bits,
            len: len as u8,
        }
    }

    pub fn zero(n: usize) -> Flow {
        Flow::from_raw(0, n)
    }

    pub fn bits(&self) -> u64 {
        self.bits
    }

    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn get(&self, i: usize) -> GroupElem {
        GroupElem(((self.bits >> (2 * (self.len as usize - 1 - i))) & 3) as u8)
    }

    #[inline]
    pub fn with(&self, i: usize, g: GroupElem) -> Flow {
        let shift = 2 * (self.len as usize - 1 - i);
        Flow {
            bits: (self.bits & !(3u64 << shift)) | ((g.0 as u64) << shift),
            len: self.len,
        }
    }

    pub fn entries(&self) -> Vec<GroupElem> {
        (0..self.len()).map(|i| self.get(i)).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.bits == 0
    }

    /// Componentwise sum; the translation action of the group of flows.
    pub fn act(&self, t: &Flow) -> Result<Flow> {
        if self.len != t.len {
            return Err(Error::LengthMismatch {
                left: self.len(),
                right: t.len(),
            });
        }
        Ok(Flow {
            bits: self.bits ^ t.bits,
            len: self.len,
        })
    }

    /// Number of columns where the two flows differ. Lengths must agree.
    #[inline]
    pub fn distance(&self, other: &Flow) -> u32 {
        let x = self.bits ^ other.bits;
        ((x | (x >> 1)) & LOW_BITS).count_ones()
    }

    /// Bitmask (bit `i` = column `i`) of columns where the flows differ.
    pub fn diff_columns(&self, other: &Flow) -> u32 {
        let x = self.bits ^ other.bits;
        let mut m = 0u32;
        for i in 0..self.len() {
            if (x >> (2 * (self.len() - 1 - i))) & 3 != 0 {
                m |= 1 << i;
            }
        }
        m
    }

    pub fn satisfies(&self, face: &FaceSpec) -> bool {
        face.admits(self)
    }
}

impl PartialOrd for Flow {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Flow {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.len, self.bits).cmp(&(other.len, other.bits))
    }
}

impl fmt::Display for Flow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.len() {
            write!(f, "{}", self.get(i).symbol())?;
        }
        Ok(())
    }
}

impl FromStr for Flow {
    type Err = Error;
    fn from_str(s: &str) -> Result<Flow> {
        let entries = s
            .chars()
            .map(GroupElem::from_symbol)
            .collect::<Result<Vec<_>>>()?;
        Flow::new(&entries)
    }
}

impl Serialize for Flow {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Flow {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Flow, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A set of forbidden `(column, symbol)` pairs cutting out a face.
#[derive(Clone, PartialEq, Eq, Hash, Debug, Default)]
pub struct FaceSpec {
    forbidden: BTreeSet<(usize, GroupElem)>,
}

impl FaceSpec {
    pub fn empty() -> FaceSpec {
        FaceSpec::default()
    }

    /// `pairs` use 0-based columns.
    pub fn new(pairs: impl IntoIterator<Item = (usize, GroupElem)>) -> Result<FaceSpec> {
        let mut forbidden = BTreeSet::new();
        for (col, g) in pairs {
            if g.is_zero() {
                return Err(Error::InvalidFace(format!("column {} forbids 0", col + 1)));
            }
            forbidden.insert((col, g));
        }
        Ok(FaceSpec { forbidden })
    }

    /// The faces of the six-leaf polytope used in the quartic argument.
    pub fn named(name: &str) -> Option<FaceSpec> {
        let spec = match name {
            "P1" => "6:a,6:b,6:c",
            "P2" => "5:c,6:b,6:c",
            "P3" => "4:c,5:c,6:c",
            "Pt" => "6:b,6:c",
            "Ptp" => "5:c,6:c",
            _ => return None,
        };
        Some(spec.parse().unwrap())
    }

    pub fn is_empty(&self) -> bool {
        self.forbidden.is_empty()
    }

    pub fn forbidden(&self) -> impl Iterator<Item = (usize, GroupElem)> + '_ {
        self.forbidden.iter().copied()
    }

    /// Largest 1-based column mentioned, 0 for the empty spec.
    pub fn max_column(&self) -> usize {
        self.forbidden
            .iter()
            .map(|&(c, _)| c + 1)
            .max()
            .unwrap_or(0)
    }

    pub fn admits(&self, f: &Flow) -> bool {
        self.forbidden
            .iter()
            .all(|&(c, g)| c >= f.len() || f.get(c) != g)
    }
}

impl fmt::Display for FaceSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .forbidden
            .iter()
            .map(|(c, g)| format!("{}:{}", c + 1, g.symbol()))
            .collect();
        write!(f, "{}", parts.join(","))
    }
}

impl FromStr for FaceSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<FaceSpec> {
        if let Some(face) = FaceSpec::named(s.trim()) {
            return Ok(face);
        }
        let mut pairs = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (col, sym) = part
                .split_once(':')
                .ok_or_else(|| Error::InvalidFace(part.to_string()))?;
            let col: usize = col
                .trim()
                .parse()
                .map_err(|_| Error::InvalidFace(part.to_string()))?;
            let mut chars = sym.trim().chars();
            let (Some(c), None) = (chars.next(), chars.next()) else {
                return Err(Error::InvalidFace(part.to_string()));
            };
            if col == 0 {
                return Err(Error::InvalidFace(part.to_string()));
            }
            pairs.push((col - 1, GroupElem::from_symbol(c)?));
        }
        FaceSpec::new(pairs)
    }
}

impl Serialize for FaceSpec {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for FaceSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<FaceSpec, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// All flows of length `n` admitted by `face`, in lexicographic order.
pub fn enumerate_flows(n: usize, face: &FaceSpec) -> Result<Vec<Flow>> {
    if n == 0 || n > MAX_LEAVES {
        return Err(Error::UnsupportedLength(n));
    }
    let free = 1u64 << (2 * (n - 1));
    let mut out = Vec::with_capacity(free.min(1 << 20) as usize);
    for prefix in 0..free {
        let f = Flow::from_raw((prefix << 2) | fold_sum(prefix) as u64, n);
        if face.admits(&f) {
            out.push(f);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use GroupElem as G;

    #[test]
    fn klein_table() {
        assert_eq!(G::ALPHA + G::ALPHA, G::ZERO);
        assert_eq!(G::ALPHA + G::BETA, G::GAMMA);
        assert_eq!(G::ZERO + G::GAMMA, G::GAMMA);
    }

    #[test]
    fn automorphisms() {
        let swap = Automorphism::swap(G::BETA, G::GAMMA).unwrap();
        assert_eq!(swap.apply(G::BETA), G::GAMMA);
        assert_eq!(swap.apply(G::ZERO), G::ZERO);
        assert_eq!(swap.apply(G::ALPHA), G::ALPHA);
        let all = Automorphism::all();
        let distinct: BTreeSet<_> = all.iter().collect();
        assert_eq!(distinct.len(), 6);
        for a in all {
            assert_eq!(a.compose(&a.inverse()), Automorphism::IDENTITY);
        }
    }

    #[test]
    fn quotient() {
        assert_eq!(phi_quotient(G::GAMMA, G::GAMMA), Ok(0));
        assert_eq!(phi_quotient(G::ALPHA, G::GAMMA), Ok(1));
        assert_eq!(phi_quotient(G::GAMMA, G::BETA), Ok(1));
        assert_eq!(phi_quotient(G::ZERO, G::BETA), Ok(0));
        assert_eq!(phi_quotient(G::ALPHA, G::ZERO), Err(Error::ZeroQuotient));
    }

    #[test]
    fn flow_roundtrip_and_order() {
        let f: Flow = "abc0".parse().unwrap();
        assert_eq!(f.to_string(), "abc0");
        assert_eq!(f.get(0), G::ALPHA);
        assert_eq!(f.get(3), G::ZERO);
        assert!("ab0".parse::<Flow>().is_err());
        let a: Flow = "0abc".parse().unwrap();
        assert!(a < f);
        assert_eq!(f.with(3, G::ALPHA).to_string(), "abca");
    }

    #[test]
    fn act_examples() {
        let f: Flow = "aa0".parse().unwrap();
        let t: Flow = "abc".parse().unwrap();
        assert_eq!(f.act(&t).unwrap().to_string(), "0cc");
        assert_eq!(Flow::zero(3).act(&t).unwrap(), t);
        assert!(f.act(&f).unwrap().is_zero());
        assert!(f.act(&"0000".parse().unwrap()).is_err());
    }

    #[test]
    fn distance_matches_naive() {
        let a: Flow = "0000".parse().unwrap();
        let b: Flow = "aabb".parse().unwrap();
        assert_eq!(a.distance(&b), 4);
        assert_eq!(a.diff_columns(&b), 0b1111);
        let c: Flow = "a0a0".parse().unwrap();
        assert_eq!(a.distance(&c), 2);
        assert_eq!(a.diff_columns(&c), 0b0101);
    }

    #[test]
    fn face_parse() {
        let f: FaceSpec = "5:c,6:b,6:c".parse().unwrap();
        assert_eq!(f.to_string(), "5:c,6:b,6:c");
        assert_eq!(f, FaceSpec::named("P2").unwrap());
        assert!("0:a".parse::<FaceSpec>().is_err());
        assert!("3:0".parse::<FaceSpec>().is_err());
        assert!("".parse::<FaceSpec>().unwrap().is_empty());
    }

    #[test]
    fn flow_counts() {
        assert_eq!(enumerate_flows(3, &FaceSpec::empty()).unwrap().len(), 16);
        assert_eq!(enumerate_flows(6, &FaceSpec::empty()).unwrap().len(), 1024);
        for (name, count) in [
            ("P1", 256),
            ("P2", 384),
            ("P3", 432),
            ("Pt", 512),
            ("Ptp", 576),
        ] {
            let face = FaceSpec::named(name).unwrap();
            assert_eq!(enumerate_flows(6, &face).unwrap().len(), count, "{name}");
        }
    }

    #[test]
    fn enumeration_sorted() {
        let flows = enumerate_flows(4, &FaceSpec::empty()).unwrap();
        assert!(flows.windows(2).all(|w| w[0] < w[1]));
        assert!(flows.iter().all(|f| fold_sum(f.bits()) == 0));
    }
}
