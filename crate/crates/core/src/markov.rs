//! Fiber enumeration, fiber-graph components, minimal-generator censuses and
//! connectivity checks.
//!
//! Degree-`d` multisets are non-decreasing index tuples over the flow list.
//! Profiles are packed into a `u64` holding the α, β and γ counts of every
//! column (the 0 count is implied by the degree). Large censuses run in
//! shards: each pass re-enumerates all tuples and keeps those whose key hashes
//! to the current shard, so memory scales with `1/shards`.
//!
//! Two tables of degree `d` are joined by one move of degree at most `m` iff
//! they share a sub-multiset of `d − m` rows, so components are computed by
//! union-find over shared sub-multisets.

use std::collections::HashMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group::{enumerate_flows, FaceSpec, Flow};
use crate::moves::{neighbors, FiberCache};
use crate::table::Table;

pub struct UnionFind {
    parent: Vec<u32>,
    size: Vec<u32>,
    sets: usize,
}

impl UnionFind {
    pub fn new(n: usize) -> UnionFind {
        UnionFind {
            parent: (0..n as u32).collect(),
            size: vec![1; n],
            sets: n,
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] as usize != x {
            let p = self.parent[x] as usize;
            self.parent[x] = self.parent[p];
            x = p;
        }
        x
    }

    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut a, mut b) = (self.find(a), self.find(b));
        if a == b {
            return false;
        }
        if self.size[a] < self.size[b] {
            std::mem::swap(&mut a, &mut b);
        }
        self.parent[b] = a as u32;
        self.size[a] += self.size[b];
        self.sets -= 1;
        true
    }

    pub fn sets(&self) -> usize {
        self.sets
    }
}

/// Packs profiles of bounded degree into a `u64`.
#[derive(Clone, Debug)]
pub struct KeyCodec {
    n: usize,
    bits: u32,
}

impl KeyCodec {
    pub fn new(n: usize, max_degree: usize) -> Result<KeyCodec> {
        let bits = (usize::BITS - max_degree.leading_zeros()).max(1);
        if 3 * n as u32 * bits > 64 {
            return Err(Error::KeyOverflow(format!(
                "{n} columns at degree {max_degree} need {} bits",
                3 * n as u32 * bits
            )));
        }
        Ok(KeyCodec { n, bits })
    }

    pub fn encode(&self, f: &Flow) -> u64 {
        let mut key = 0u64;
        for i in 0..self.n {
            let g = f.get(i).code();
            if g != 0 {
                key += 1u64 << (self.bits * (3 * i as u32 + g as u32 - 1));
            }
        }
        key
    }
}

/// The flows of a face together with their packed profile contributions.
pub struct Universe {
    pub n: usize,
    pub face: FaceSpec,
    pub flows: Vec<Flow>,
    contrib: Vec<u64>,
    index_bits: u32,
    max_degree: usize,
}

impl Universe {
    pub fn new(n: usize, face: &FaceSpec, max_degree: usize) -> Result<Universe> {
        let flows = enumerate_flows(n, face)?;
        let codec = KeyCodec::new(n, max_degree)?;
        let contrib = flows.iter().map(|f| codec.encode(f)).collect();
        let index_bits = (usize::BITS - (flows.len().max(2) - 1).leading_zeros()).max(1);
        if index_bits as usize * max_degree > 64 {
            return Err(Error::KeyOverflow(format!(
                "{} flows at degree {max_degree} do not pack into 64 bits",
                flows.len()
            )));
        }
        Ok(Universe {
            n,
            face: face.clone(),
            flows,
            contrib,
            index_bits,
            max_degree,
        })
    }

    pub fn vertices(&self) -> usize {
        self.flows.len()
    }

    /// Number of degree-`d` multisets, `C(V + d − 1, d)`.
    pub fn multiset_count(&self, d: usize) -> u128 {
        binomial(self.flows.len() as u128 + d as u128 - 1, d as u128)
    }

    pub fn key_of(&self, idx: &[u16]) -> u64 {
        idx.iter().map(|&i| self.contrib[i as usize]).sum()
    }

    pub fn unpack(&self, packed: u64, d: usize, out: &mut [u16]) {
        let mask = (1u64 << self.index_bits) - 1;
        for k in 0..d {
            out[d - 1 - k] = ((packed >> (self.index_bits as usize * k)) & mask) as u16;
        }
    }

    pub fn table(&self, idx: &[u16]) -> Table {
        Table::with_len(
            self.n,
            idx.iter().map(|&i| self.flows[i as usize]).collect(),
        )
        .expect("flows share a length")
    }

    /// Streams every degree-`d` multiset whose key falls in `shard` of
    /// `shards` as `(key, packed index tuple)`.
    pub fn for_each_multiset(
        &self,
        d: usize,
        shard: usize,
        shards: usize,
        mut emit: impl FnMut(u64, u64),
    ) {
        assert!(d >= 1 && d <= self.max_degree);
        let v = self.flows.len();
        let ib = self.index_bits;
        let shards = shards as u64;
        let shard = shard as u64;
        let in_shard = |key: u64| shards == 1 || shard_of(key, shards) == shard;
        // Explicit stack: idx[level], partial keys and tuples per level.
        let mut idx = vec![0usize; d];
        let mut keys = vec![0u64; d + 1];
        let mut tups = vec![0u64; d + 1];
        let mut level = 0usize;
        loop {
            if level == d - 1 {
                let (pk, pt) = (keys[level], tups[level]);
                for i in idx[level]..v {
                    let key = pk + self.contrib[i];
                    if in_shard(key) {
                        emit(key, (pt << ib) | i as u64);
                    }
                }
                // Backtrack.
                loop {
                    if level == 0 {
                        return;
                    }
                    level -= 1;
                    idx[level] += 1;
                    if idx[level] < v {
                        break;
                    }
                }
            }
            let i = idx[level];
            keys[level + 1] = keys[level] + self.contrib[i];
            tups[level + 1] = (tups[level] << ib) | i as u64;
            idx[level + 1] = i;
            level += 1;
        }
    }
}

#[inline]
fn shard_of(key: u64, shards: u64) -> u64 {
    (key.wrapping_mul(0x9E37_79B9_7F4A_7C15) >> 32) % shards
}

pub fn binomial(n: u128, k: u128) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc = 1u128;
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

/// A group of tables sharing a profile.
#[derive(Clone, Debug)]
pub struct Fiber {
    pub key: u64,
    pub degree: usize,
    pub members: Vec<Table>,
}

/// All fibers of degree `d`, sorted by key, members in canonical order.
pub fn fibers(n: usize, d: usize, face: &FaceSpec, keep_singletons: bool) -> Result<Vec<Fiber>> {
    let u = Universe::new(n, face, d)?;
    let mut entries = Vec::new();
    u.for_each_multiset(d, 0, 1, |k, t| entries.push((k, t)));
    entries.sort_unstable();
    let mut out = Vec::new();
    let mut buf = vec![0u16; d];
    for group in entries.chunk_by(|a, b| a.0 == b.0) {
        if group.len() == 1 && !keep_singletons {
            continue;
        }
        let members = group
            .iter()
            .map(|&(_, t)| {
                u.unpack(t, d, &mut buf);
                u.table(&buf)
            })
            .collect();
        out.push(Fiber {
            key: group[0].0,
            degree: d,
            members,
        });
    }
    Ok(out)
}

/// Visits the distinct size-`q` sub-multisets of a sorted index tuple.
fn sub_tuples(idx: &[u16], q: usize, visit: &mut impl FnMut(u64)) {
    fn rec(
        idx: &[u16],
        q: usize,
        start: usize,
        acc: u64,
        depth: usize,
        visit: &mut impl FnMut(u64),
    ) {
        if depth == q {
            visit(acc);
            return;
        }
        let mut i = start;
        while i + (q - depth) <= idx.len() {
            rec(idx, q, i + 1, (acc << 16) | idx[i] as u64, depth + 1, visit);
            let v = idx[i];
            while i < idx.len() && idx[i] == v {
                i += 1;
            }
        }
    }
    rec(idx, q, 0, 0, 0, visit);
}

/// Components of a fiber (members given as sorted index tuples) under moves
/// of degree at most `move_degree`. Returns the union-find.
fn tuple_components(members: &[Vec<u16>], move_degree: usize) -> UnionFind {
    let d = members.first().map(Vec::len).unwrap_or(0);
    let mut uf = UnionFind::new(members.len());
    if members.len() < 2 {
        return uf;
    }
    if move_degree >= d {
        for i in 1..members.len() {
            uf.union(0, i);
        }
        return uf;
    }
    let keep = d - move_degree;
    let mut seen: HashMap<u64, usize> = HashMap::new();
    for (m, idx) in members.iter().enumerate() {
        sub_tuples(idx, keep, &mut |k| match seen.get(&k) {
            Some(&first) => {
                uf.union(first, m);
            }
            None => {
                seen.insert(k, m);
            }
        });
    }
    uf
}

#[derive(Clone, Debug)]
pub struct ComponentReport {
    pub components: usize,
    /// First member (canonical order) of each component.
    pub representatives: Vec<Table>,
}

/// Components of `f` under moves of degree at most `move_degree`; census
/// callers pass `min(m, d − 1)`.
pub fn fiber_components(f: &Fiber, move_degree: usize) -> ComponentReport {
    let index: HashMap<Flow, u16> = {
        let mut all: Vec<Flow> = f
            .members
            .iter()
            .flat_map(|t| t.rows().iter().copied())
            .collect();
        all.sort_unstable();
        all.dedup();
        all.into_iter()
            .enumerate()
            .map(|(i, x)| (x, i as u16))
            .collect()
    };
    let tuples: Vec<Vec<u16>> = f
        .members
        .iter()
        .map(|t| t.rows().iter().map(|r| index[r]).collect())
        .collect();
    let mut uf = tuple_components(&tuples, move_degree);
    let mut reps = Vec::new();
    let mut seen = Vec::new();
    for (i, t) in f.members.iter().enumerate() {
        let r = uf.find(i);
        if !seen.contains(&r) {
            seen.push(r);
            reps.push(t.clone());
        }
    }
    ComponentReport {
        components: uf.sets(),
        representatives: reps,
    }
}

/// Component count by breadth-first search over explicit neighbors; an
/// independent route used to cross-check [`fiber_components`].
pub fn fiber_components_bfs(f: &Fiber, move_degree: usize, cache: &FiberCache) -> usize {
    let pos: HashMap<&Table, usize> = f.members.iter().enumerate().map(|(i, t)| (t, i)).collect();
    let mut seen = vec![false; f.members.len()];
    let mut comps = 0;
    for start in 0..f.members.len() {
        if seen[start] {
            continue;
        }
        comps += 1;
        seen[start] = true;
        let mut queue = vec![start];
        while let Some(i) = queue.pop() {
            for nb in neighbors(&f.members[i], move_degree, cache) {
                let j = pos[&nb];
                if !seen[j] {
                    seen[j] = true;
                    queue.push(j);
                }
            }
        }
    }
    comps
}

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
pub struct DegreeCount {
    pub degree: usize,
    pub generators: u64,
    pub fibers: u64,
    pub elapsed_s: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct CensusReport {
    pub n: usize,
    pub face: FaceSpec,
    pub max_degree: usize,
    pub vertices: usize,
    pub degrees: Vec<DegreeCount>,
    /// Set when the budget stopped the census before `max_degree`.
    pub incomplete: Option<String>,
}

#[derive(Clone, Debug)]
pub struct CensusOptions {
    /// Minimum number of shards; raised to fit `mem_budget_bytes`.
    pub shards: usize,
    pub mem_budget_bytes: u64,
    pub time_budget_s: Option<f64>,
}

impl Default for CensusOptions {
    fn default() -> Self {
        CensusOptions {
            shards: 1,
            mem_budget_bytes: 2 << 30,
            time_budget_s: None,
        }
    }
}

const ENTRY_BYTES: u128 = 16;

fn shard_count(u: &Universe, d: usize, opts: &CensusOptions) -> usize {
    let bytes = u.multiset_count(d) * ENTRY_BYTES * 3 / 2;
    let needed = bytes.div_ceil(opts.mem_budget_bytes.max(1) as u128) as usize;
    needed.max(opts.shards).max(1)
}

/// Aggregate over one degree: `(fibers, Σ (components − 1))` plus the first
/// disconnected fiber found, if requested.
struct PassResult {
    fibers: u64,
    excess: u64,
    witness: Option<(Table, Table)>,
}

fn run_degree(
    u: &Universe,
    d: usize,
    move_degree: usize,
    opts: &CensusOptions,
    want_witness: bool,
) -> PassResult {
    let shards = shard_count(u, d, opts);
    let mut total = PassResult {
        fibers: 0,
        excess: 0,
        witness: None,
    };
    let mut entries: Vec<(u64, u64)> = Vec::new();
    for shard in 0..shards {
        entries.clear();
        u.for_each_multiset(d, shard, shards, |k, t| entries.push((k, t)));
        entries.par_sort_unstable();
        let groups: Vec<&[(u64, u64)]> = entries.chunk_by(|a, b| a.0 == b.0).collect();
        total.fibers += groups.len() as u64;
        let (excess, witness) = groups
            .par_iter()
            .filter(|g| g.len() > 1)
            .map(|g| {
                let tuples: Vec<Vec<u16>> = g
                    .iter()
                    .map(|&(_, t)| {
                        let mut buf = vec![0u16; d];
                        u.unpack(t, d, &mut buf);
                        buf
                    })
                    .collect();
                let mut uf = tuple_components(&tuples, move_degree);
                let extra = uf.sets() as u64 - 1;
                let witness = (want_witness && extra > 0).then(|| {
                    let other = (1..tuples.len())
                        .find(|&i| uf.find(i) != uf.find(0))
                        .unwrap();
                    (u.table(&tuples[0]), u.table(&tuples[other]))
                });
                (extra, witness)
            })
            .reduce(
                || (0, None),
                |a, b| {
                    let w = match (a.1, b.1) {
                        (Some(x), Some(y)) => Some(x.min(y)),
                        (x, y) => x.or(y),
                    };
                    (a.0 + b.0, w)
                },
            );
        total.excess += excess;
        total.witness = match (total.witness.take(), witness) {
            (Some(x), Some(y)) => Some(x.min(y)),
            (x, y) => x.or(y),
        };
    }
    total
}

/// Minimal generators per degree `2..=max_degree`: for each fiber, the
/// number of components under moves of degree at most `d − 1`, minus one.
pub fn minimal_generator_census(
    n: usize,
    max_degree: usize,
    face: &FaceSpec,
    opts: &CensusOptions,
) -> Result<CensusReport> {
    if max_degree < 2 {
        return Err(Error::Precondition("census needs max degree ≥ 2".into()));
    }
    let u = Universe::new(n, face, max_degree)?;
    let start = Instant::now();
    let mut report = CensusReport {
        n,
        face: face.clone(),
        max_degree,
        vertices: u.vertices(),
        degrees: Vec::new(),
        incomplete: None,
    };
    for d in 2..=max_degree {
        if let Some(limit) = opts.time_budget_s {
            if start.elapsed().as_secs_f64() > limit {
                report.incomplete = Some(format!("time budget exhausted before degree {d}"));
                break;
            }
        }
        let t = Instant::now();
        let r = run_degree(&u, d, d - 1, opts, false);
        log::info!(
            "census n={n} face={face} degree {d}: {} generators in {} fibers",
            r.excess,
            r.fibers
        );
        report.degrees.push(DegreeCount {
            degree: d,
            generators: r.excess,
            fibers: r.fibers,
            elapsed_s: t.elapsed().as_secs_f64(),
        });
    }
    Ok(report)
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Witness {
    pub degree: usize,
    pub t0: Table,
    pub t1: Table,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ConnectivityReport {
    pub n: usize,
    pub face: FaceSpec,
    pub max_table_degree: usize,
    pub move_degree: usize,
    pub connected: bool,
    /// Per table degree: fibers examined and the excess component count.
    pub degrees: Vec<DegreeCount>,
    pub witness: Option<Witness>,
}

/// Whether every fiber of degree `≤ max_table_degree` is connected under
/// moves of degree at most `move_degree`.
pub fn connectivity_check(
    n: usize,
    max_table_degree: usize,
    move_degree: usize,
    face: &FaceSpec,
    opts: &CensusOptions,
) -> Result<ConnectivityReport> {
    if move_degree < 1 {
        return Err(Error::Precondition("move degree must be positive".into()));
    }
    let u = Universe::new(n, face, max_table_degree)?;
    let mut report = ConnectivityReport {
        n,
        face: face.clone(),
        max_table_degree,
        move_degree,
        connected: true,
        degrees: Vec::new(),
        witness: None,
    };
    for d in 2..=max_table_degree {
        let t = Instant::now();
        let r = run_degree(&u, d, move_degree, opts, report.witness.is_none());
        report.degrees.push(DegreeCount {
            degree: d,
            generators: r.excess,
            fibers: r.fibers,
            elapsed_s: t.elapsed().as_secs_f64(),
        });
        if r.excess > 0 {
            report.connected = false;
            if report.witness.is_none() {
                if let Some((t0, t1)) = r.witness {
                    report.witness = Some(Witness { degree: d, t0, t1 });
                }
            }
        }
    }
    Ok(report)
}

/// Both sides of `Σ_F (|F| − 1) = C(V + 1, 2) − #fibers` over degree-2
/// fibers, computed separately.
pub fn degree_two_identity(n: usize, face: &FaceSpec) -> Result<(u128, u128)> {
    let fs = fibers(n, 2, face, true)?;
    let lhs: u128 = fs.iter().map(|f| f.members.len() as u128 - 1).sum();
    let v = enumerate_flows(n, face)?.len() as u128;
    Ok((lhs, binomial(v + 1, 2) - fs.len() as u128))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn union_find_basics() {
        let mut uf = UnionFind::new(5);
        assert!(uf.union(0, 1));
        assert!(!uf.union(1, 0));
        uf.union(3, 4);
        assert_eq!(uf.sets(), 3);
        assert_eq!(uf.find(4), uf.find(3));
    }

    #[test]
    fn multiset_counts() {
        let empty = FaceSpec::empty();
        let fs = fibers(3, 1, &empty, true).unwrap();
        assert_eq!(fs.len(), 16);
        assert!(fs.iter().all(|f| f.members.len() == 1));
        let total: usize = fibers(3, 2, &empty, true)
            .unwrap()
            .iter()
            .map(|f| f.members.len())
            .sum();
        assert_eq!(total, 136);
        let u = Universe::new(5, &empty, 2).unwrap();
        let mut count = 0u64;
        u.for_each_multiset(2, 0, 1, |_, _| count += 1);
        assert_eq!(count, 32896);
        assert_eq!(u.multiset_count(2), 32896);
    }

    #[test]
    fn keys_agree_with_profiles() {
        let fs = fibers(3, 3, &FaceSpec::empty(), true).unwrap();
        let mut seen = std::collections::HashSet::new();
        for f in &fs {
            let p = f.members[0].profile();
            assert!(f.members.iter().all(|t| t.profile() == p));
            assert!(seen.insert(p));
        }
    }

    #[test]
    fn shards_partition_the_stream() {
        let u = Universe::new(4, &FaceSpec::empty(), 3).unwrap();
        let mut all = Vec::new();
        u.for_each_multiset(3, 0, 1, |k, t| all.push((k, t)));
        let mut sharded = Vec::new();
        for s in 0..7 {
            u.for_each_multiset(3, s, 7, |k, t| sharded.push((k, t)));
        }
        all.sort_unstable();
        sharded.sort_unstable();
        assert_eq!(all, sharded);
    }

    #[test]
    fn component_routes_agree() {
        let cache = FiberCache::new();
        for f in fibers(3, 3, &FaceSpec::empty(), false)
            .unwrap()
            .iter()
            .take(200)
        {
            for m in 1..=3 {
                let a = fiber_components(f, m).components;
                let b = if m == 1 {
                    f.members.len()
                } else {
                    fiber_components_bfs(f, m, &cache)
                };
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn degree_two_identity_small() {
        for n in 2..=4 {
            let (l, r) = degree_two_identity(n, &FaceSpec::empty()).unwrap();
            assert_eq!(l, r);
        }
    }

    #[test]
    fn census_is_shard_independent() {
        let a =
            minimal_generator_census(4, 3, &FaceSpec::empty(), &CensusOptions::default()).unwrap();
        let b = minimal_generator_census(
            4,
            3,
            &FaceSpec::empty(),
            &CensusOptions {
                shards: 5,
                ..Default::default()
            },
        )
        .unwrap();
        let strip = |r: &CensusReport| {
            r.degrees
                .iter()
                .map(|d| (d.degree, d.generators, d.fibers))
                .collect::<Vec<_>>()
        };
        assert_eq!(strip(&a), strip(&b));
    }
}
