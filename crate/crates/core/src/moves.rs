//! Degree-bounded moves, move traces and fiber-graph neighbors.

use std::collections::BTreeSet;
use std::io::{BufRead, Write};
use std::path::Path;
use std::sync::Arc;

use dashmap::DashMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group::Flow;
use crate::realize::{columns_of_rows, Column, Realizer, MAX_ROWS};
use crate::table::{Profile, Table};

/// Exchange of a row multiset for a compatible one of equal size.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Move {
    removed: Vec<Flow>,
    inserted: Vec<Flow>,
}

impl Move {
    pub fn new(mut removed: Vec<Flow>, mut inserted: Vec<Flow>) -> Result<Move> {
        removed.sort_unstable();
        inserted.sort_unstable();
        let n = removed.first().map(Flow::len).unwrap_or(0);
        if removed.len() != inserted.len()
            || removed.iter().chain(&inserted).any(|f| f.len() != n)
            || Profile::of_rows(n, &removed) != Profile::of_rows(n, &inserted)
        {
            return Err(Error::Incompatible);
        }
        if removed == inserted {
            return Err(Error::TrivialMove);
        }
        Ok(Move { removed, inserted })
    }

    pub fn removed(&self) -> &[Flow] {
        &self.removed
    }

    pub fn inserted(&self) -> &[Flow] {
        &self.inserted
    }

    pub fn degree(&self) -> usize {
        self.removed.len()
    }

    /// Columns changed under the first minimum-distance matching of removed
    /// to inserted rows.
    pub fn columns_touched(&self) -> Vec<usize> {
        fn best(
            rem: &[Flow],
            ins: &[Flow],
            used: &mut Vec<bool>,
            i: usize,
            cost: u32,
            acc: &mut Vec<usize>,
            out: &mut (u32, Vec<usize>),
        ) {
            if cost >= out.0 {
                return;
            }
            if i == rem.len() {
                *out = (cost, acc.clone());
                return;
            }
            for j in 0..ins.len() {
                if !used[j] {
                    used[j] = true;
                    acc.push(j);
                    best(
                        rem,
                        ins,
                        used,
                        i + 1,
                        cost + rem[i].distance(&ins[j]),
                        acc,
                        out,
                    );
                    acc.pop();
                    used[j] = false;
                }
            }
        }
        let mut out = (u32::MAX, Vec::new());
        let mut used = vec![false; self.inserted.len()];
        best(
            &self.removed,
            &self.inserted,
            &mut used,
            0,
            0,
            &mut Vec::new(),
            &mut out,
        );
        let mut mask = 0u32;
        for (i, &j) in out.1.iter().enumerate() {
            mask |= self.removed[i].diff_columns(&self.inserted[j]);
        }
        (0..self.removed[0].len())
            .filter(|c| mask >> c & 1 == 1)
            .collect()
    }

    pub fn reversed(&self) -> Move {
        Move {
            removed: self.inserted.clone(),
            inserted: self.removed.clone(),
        }
    }
}

pub fn apply_move(t: &Table, m: &Move) -> Result<Table> {
    let mut out = t.clone();
    out.remove(&m.removed)?;
    out.insert(&m.inserted)?;
    Ok(out)
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
pub enum Side {
    T0,
    T1,
}

impl Side {
    pub fn other(self) -> Side {
        match self {
            Side::T0 => Side::T1,
            Side::T1 => Side::T0,
        }
    }
}

/// One trace line: `{"side","remove","insert"}`.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct TraceStep {
    pub side: Side,
    pub remove: Vec<Flow>,
    pub insert: Vec<Flow>,
}

impl TraceStep {
    pub fn to_move(&self) -> Result<Move> {
        Move::new(self.remove.clone(), self.insert.clone())
    }
}

#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct MoveTrace {
    pub steps: Vec<TraceStep>,
}

impl MoveTrace {
    pub fn new() -> MoveTrace {
        MoveTrace::default()
    }

    pub fn push(&mut self, side: Side, m: &Move) {
        self.steps.push(TraceStep {
            side,
            remove: m.removed.clone(),
            insert: m.inserted.clone(),
        });
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn max_degree(&self) -> usize {
        self.steps.iter().map(|s| s.remove.len()).max().unwrap_or(0)
    }

    /// Replays every step, checking legality and the degree bound; returns
    /// the final pair.
    pub fn replay(&self, t0: &Table, t1: &Table, bound: usize) -> Result<(Table, Table)> {
        let (mut a, mut b) = (t0.clone(), t1.clone());
        for step in &self.steps {
            let m = step.to_move()?;
            if m.degree() > bound {
                return Err(Error::DegreeTooLarge {
                    degree: m.degree(),
                    bound,
                });
            }
            let t = match step.side {
                Side::T0 => &mut a,
                Side::T1 => &mut b,
            };
            *t = apply_move(t, &m)?;
        }
        Ok((a, b))
    }

    /// Replays and additionally requires the final tables to coincide.
    pub fn validate(&self, t0: &Table, t1: &Table, bound: usize) -> Result<()> {
        let (a, b) = self.replay(t0, t1, bound)?;
        if a != b {
            return Err(Error::Precondition(
                "trace does not end in equal tables".into(),
            ));
        }
        Ok(())
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for s in &self.steps {
            serde_json::to_writer(&mut w, s)?;
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<MoveTrace> {
        let mut steps = Vec::new();
        for line in r.lines() {
            let line = line.map_err(|e| Error::Parse(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            steps.push(serde_json::from_str(&line).map_err(|e| Error::Parse(e.to_string()))?);
        }
        Ok(MoveTrace { steps })
    }
}

type FiberKey = (usize, Vec<Column>);

/// Concurrent memo from a sub-multiset's columns to its full replacement
/// fiber.
#[derive(Default)]
pub struct FiberCache {
    map: DashMap<FiberKey, Arc<Vec<Vec<Flow>>>>,
}

#[derive(Serialize, Deserialize)]
struct CacheLine {
    n: usize,
    cols: Vec<Column>,
    members: Vec<Vec<Flow>>,
}

impl FiberCache {
    pub fn new() -> FiberCache {
        FiberCache::default()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// All row multisets of length-`n` flows with the given columns.
    pub fn fiber(&self, n: usize, cols: &[Column]) -> Arc<Vec<Vec<Flow>>> {
        let s: usize = cols
            .first()
            .map(|c| c.iter().map(|&k| k as usize).sum())
            .unwrap_or(0);
        let key = (n, cols.to_vec());
        if let Some(v) = self.map.get(&key) {
            return v.clone();
        }
        self.map
            .entry(key)
            .or_insert_with(|| {
                let mut members = Vec::new();
                Realizer::get(s).enumerate(cols, |rows| {
                    members.push(rows.to_vec());
                    true
                });
                Arc::new(members)
            })
            .clone()
    }

    /// Writes every entry as a JSON line to `dir/fibers.jsonl`.
    pub fn spill(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut w = std::io::BufWriter::new(std::fs::File::create(dir.join("fibers.jsonl"))?);
        for e in self.map.iter() {
            let line = CacheLine {
                n: e.key().0,
                cols: e.key().1.clone(),
                members: e.value().as_ref().clone(),
            };
            serde_json::to_writer(&mut w, &line)?;
            writeln!(w)?;
        }
        w.flush()
    }

    /// Loads a previous spill; a missing file yields an empty cache.
    pub fn load(dir: &Path) -> std::io::Result<FiberCache> {
        let cache = FiberCache::new();
        let path = dir.join("fibers.jsonl");
        if !path.exists() {
            return Ok(cache);
        }
        for line in std::io::BufReader::new(std::fs::File::open(path)?).lines() {
            let line: CacheLine = serde_json::from_str(&line?)?;
            cache
                .map
                .insert((line.n, line.cols), Arc::new(line.members));
        }
        Ok(cache)
    }
}

/// Distinct sub-multisets (as index lists into sorted `rows`) of size `k`.
pub fn sub_multisets(rows: &[Flow], k: usize, mut visit: impl FnMut(&[usize])) {
    fn rec(
        rows: &[Flow],
        k: usize,
        start: usize,
        acc: &mut Vec<usize>,
        visit: &mut dyn FnMut(&[usize]),
    ) {
        if acc.len() == k {
            visit(acc);
            return;
        }
        let mut i = start;
        while i + (k - acc.len()) <= rows.len() {
            acc.push(i);
            rec(rows, k, i + 1, acc, visit);
            acc.pop();
            let v = rows[i];
            while i < rows.len() && rows[i] == v {
                i += 1;
            }
        }
    }
    rec(rows, k, 0, &mut Vec::with_capacity(k), &mut visit);
}

/// Every table reachable from `t` by one non-trivial move of degree at most
/// `max_deg`, each once, in canonical order.
pub fn neighbors(t: &Table, max_deg: usize, cache: &FiberCache) -> Vec<Table> {
    let rows = t.rows();
    let mut out = BTreeSet::new();
    for k in 2..=max_deg.min(rows.len()).min(MAX_ROWS) {
        sub_multisets(rows, k, |idx| {
            let sub: Vec<Flow> = idx.iter().map(|&i| rows[i]).collect();
            let fiber = cache.fiber(t.n(), &columns_of_rows(t.n(), &sub));
            if fiber.len() < 2 {
                return;
            }
            let mut rest = t.clone();
            rest.remove(&sub).expect("sub-multiset of t");
            for other in fiber.iter().filter(|o| **o != sub) {
                let mut nb = rest.clone();
                nb.insert(other).expect("same length");
                out.insert(nb);
            }
        });
    }
    out.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::{enumerate_flows, FaceSpec};

    fn flows(v: &[&str]) -> Vec<Flow> {
        v.iter().map(|s| s.parse().unwrap()).collect()
    }

    #[test]
    fn example_move() {
        let t = Table::parse(&["aa00", "0bb0", "c00c"]).unwrap();
        let m = Move::new(
            flows(&["aa00", "0bb0", "c00c"]),
            flows(&["0000", "cab0", "ab0c"]),
        )
        .unwrap();
        let out = apply_move(&t, &m).unwrap();
        assert_eq!(out, Table::parse(&["0000", "cab0", "ab0c"]).unwrap());
        assert_eq!(out.profile(), t.profile());
        assert_eq!(m.degree(), 3);
        assert_eq!(apply_move(&out, &m.reversed()).unwrap(), t);
    }

    #[test]
    fn illegal_moves() {
        assert_eq!(
            Move::new(flows(&["abc"]), flows(&["abc"])),
            Err(Error::TrivialMove)
        );
        assert_eq!(
            Move::new(flows(&["abc"]), flows(&["000"])),
            Err(Error::Incompatible)
        );
        assert_eq!(
            Move::new(
                flows(&["aa0", "bb0"]),
                flows(&["ab0".replace('0', "c").as_str(), "000"])
            ),
            Err(Error::Incompatible)
        );
        // Quadratic exchange of the first two entries.
        let swap = Move::new(flows(&["0000", "aabb"]), flows(&["aa00", "00bb"])).unwrap();
        assert_eq!(swap.degree(), 2);
        assert_eq!(swap.columns_touched(), vec![2, 3]);
        let t = Table::parse(&["0000", "aabb", "abc0"]).unwrap();
        let out = apply_move(&t, &swap).unwrap();
        assert_eq!(out.profile(), t.profile());
        assert_eq!(apply_move(&out, &swap), Err(Error::RowsMissing));
    }

    #[test]
    fn neighbors_of_example() {
        let cache = FiberCache::new();
        let t = Table::parse(&["aa00", "0bb0", "c00c"]).unwrap();
        let target = Table::parse(&["0000", "cab0", "ab0c"]).unwrap();
        let nb = neighbors(&t, 3, &cache);
        assert!(nb.contains(&target));
        assert!(!nb.contains(&t));
        let single = Table::parse(&["0000"]).unwrap();
        assert!(neighbors(&single, 4, &cache).is_empty());
    }

    #[test]
    fn neighbors_symmetric_on_degree3_fibers() {
        let cache = FiberCache::new();
        let fl = enumerate_flows(4, &FaceSpec::empty()).unwrap();
        let base = Table::new(vec![fl[5], fl[17], fl[40]]).unwrap();
        let cols = columns_of_rows(4, base.rows());
        let fiber = cache.fiber(4, &cols);
        for m in fiber.iter() {
            let t = Table::new(m.clone()).unwrap();
            for nb in neighbors(&t, 2, &cache) {
                assert!(neighbors(&nb, 2, &cache).contains(&t));
            }
        }
    }

    #[test]
    fn trace_roundtrip() {
        let t0 = Table::parse(&["aa00", "0bb0", "c00c"]).unwrap();
        let t1 = Table::parse(&["0000", "cab0", "ab0c"]).unwrap();
        let mut tr = MoveTrace::new();
        tr.push(
            Side::T0,
            &Move::new(t0.rows().to_vec(), t1.rows().to_vec()).unwrap(),
        );
        tr.validate(&t0, &t1, 4).unwrap();
        assert!(tr.validate(&t0, &t1, 2).is_err());
        let mut buf = Vec::new();
        tr.write_jsonl(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(r#"{"side":"T0","remove":["#));
        assert_eq!(MoveTrace::read_jsonl(&buf[..]).unwrap(), tr);
    }

    #[test]
    fn cache_spill_load() {
        let cache = FiberCache::new();
        let t = Table::parse(&["aa00", "0bb0", "c00c"]).unwrap();
        let cols = columns_of_rows(4, t.rows());
        let f = cache.fiber(4, &cols);
        let dir = std::env::temp_dir().join(format!("kimura-cache-test-{}", std::process::id()));
        cache.spill(&dir).unwrap();
        let loaded = FiberCache::load(&dir).unwrap();
        assert_eq!(loaded.len(), 1);
        assert_eq!(loaded.fiber(4, &cols), f);
        std::fs::remove_dir_all(dir).unwrap();
    }
}
