//! Summing two columns free of bad pairs, and lifting traces back.

use crate::error::{Error, Result};
use crate::group::{Flow, GroupElem};
use crate::moves::{apply_move, MoveTrace, Side};
use crate::table::{compatible, Table};

use super::{difference, step, PairState};

/// Replaces column `a` by the sum of columns `a` and `b` and drops `b`.
pub fn merge_flow(f: &Flow, a: usize, b: usize) -> Flow {
    let mut e = f.entries();
    e[a] = e[a] + e[b];
    e.remove(b);
    Flow::new(&e).expect("merging preserves the flow condition")
}

/// Inverse of [`merge_flow`] for rows without a bad pair: a nonzero merged
/// entry goes to column `a` or, with `to_b`, to column `b`.
fn split(m: &Flow, a: usize, b: usize, to_b: bool) -> Flow {
    let mut e = m.entries();
    let g = e[a];
    e.insert(b, GroupElem::ZERO);
    if to_b {
        e[a] = GroupElem::ZERO;
        e[b] = g;
    }
    Flow::new(&e).expect("splitting preserves the flow condition")
}

fn has_bad_pair(f: &Flow, a: usize, b: usize) -> bool {
    !f.get(a).is_zero() && !f.get(b).is_zero()
}

/// How to carry a trace on the merged pair back to the original pair.
#[derive(Clone, Debug)]
pub struct LiftRecipe {
    pub a: usize,
    pub b: usize,
    t0: Table,
    t1: Table,
}

#[derive(Clone, Debug)]
pub struct MergedPair {
    pub t0: Table,
    pub t1: Table,
    pub lift: LiftRecipe,
}

/// Merges the last two columns.
pub fn merge_columns(st: &PairState) -> Result<MergedPair> {
    let n = st.n();
    if n < 3 {
        return Err(Error::Precondition(
            "merging needs at least three columns".into(),
        ));
    }
    merge_columns_at(&st.t0, &st.t1, n - 2, n - 1)
}

/// Merges columns `a < b` of a compatible pair without bad pairs there.
pub fn merge_columns_at(t0: &Table, t1: &Table, a: usize, b: usize) -> Result<MergedPair> {
    if a >= b || b >= t0.n() {
        return Err(Error::Precondition(format!("bad column pair ({a}, {b})")));
    }
    if let Some(r) = t0
        .rows()
        .iter()
        .chain(t1.rows())
        .find(|r| has_bad_pair(r, a, b))
    {
        return Err(Error::BadPairPresent(r.to_string()));
    }
    if !compatible(t0, t1) {
        return Err(Error::Incompatible);
    }
    let merge = |t: &Table| {
        Table::with_len(
            t.n() - 1,
            t.rows().iter().map(|r| merge_flow(r, a, b)).collect(),
        )
    };
    Ok(MergedPair {
        t0: merge(t0)?,
        t1: merge(t1)?,
        lift: LiftRecipe {
            a,
            b,
            t0: t0.clone(),
            t1: t1.clone(),
        },
    })
}

impl LiftRecipe {
    /// Lifts a trace that makes the merged tables equal, then appends the
    /// quadratic moves fixing columns `a`, `b`.
    pub fn lift(&self, merged: &MoveTrace) -> Result<MoveTrace> {
        let (a, b) = (self.a, self.b);
        let mut cur = [self.t0.clone(), self.t1.clone()];
        let mut out = MoveTrace::new();
        for s in &merged.steps {
            let t = &mut cur[s.side as usize];
            let mut avail = t.rows().to_vec();
            let mut removed = Vec::with_capacity(s.remove.len());
            for m in &s.remove {
                let pos = avail
                    .iter()
                    .position(|r| merge_flow(r, a, b) == *m)
                    .ok_or(Error::RowsMissing)?;
                removed.push(avail.remove(pos));
            }
            // Keep the per-element counts in columns a and b.
            let mut in_a = [0usize; 4];
            for r in &removed {
                in_a[r.get(a).code() as usize] += 1;
            }
            let inserted: Vec<Flow> = s
                .insert
                .iter()
                .map(|m| {
                    let g = m.get(a);
                    let to_b = !g.is_zero() && in_a[g.code() as usize] == 0;
                    if !g.is_zero() && !to_b {
                        in_a[g.code() as usize] -= 1;
                    }
                    split(m, a, b, to_b)
                })
                .collect();
            if let Some(st) = step(s.side, removed, inserted) {
                *t = apply_move(t, &st.to_move()?)?;
                out.steps.push(st);
            }
        }
        // Swap (g,0) and (0,g) between two rows of T0 until the tables agree.
        loop {
            let d0 = difference(cur[0].rows(), cur[1].rows());
            let d1 = difference(cur[1].rows(), cur[0].rows());
            if d0.is_empty() {
                break;
            }
            let merged0: Vec<Flow> = d0.iter().map(|r| merge_flow(r, a, b)).collect();
            let merged1: Vec<Flow> = d1.iter().map(|r| merge_flow(r, a, b)).collect();
            let (mut m0, mut m1) = (merged0.clone(), merged1.clone());
            m0.sort_unstable();
            m1.sort_unstable();
            if m0 != m1 {
                return Err(Error::Precondition(
                    "merged trace does not end in equal tables".into(),
                ));
            }
            let u = d0[0];
            let g = u.get(a) + u.get(b);
            let u_in_b = u.get(a).is_zero();
            let w = d0
                .iter()
                .find(|w| w.get(a) + w.get(b) == g && w.get(a).is_zero() != u_in_b)
                .copied()
                .ok_or_else(|| {
                    Error::Precondition("no partner row for the column adjustment".into())
                })?;
            let swap = |r: &Flow| {
                let m = merge_flow(r, a, b);
                split(&m, a, b, !r.get(a).is_zero())
            };
            let st = step(Side::T0, vec![u, w], vec![swap(&u), swap(&w)])
                .ok_or_else(|| Error::Precondition("column adjustment is trivial".into()))?;
            cur[0] = apply_move(&cur[0], &st.to_move()?)?;
            out.steps.push(st);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flows(v: &[&str]) -> Vec<Flow> {
        v.iter().map(|s| s.parse().unwrap()).collect()
    }

    #[test]
    fn merge_and_split() {
        let f: Flow = "ab0c0".parse().unwrap();
        assert_eq!(merge_flow(&f, 3, 4).to_string(), "ab0c");
        let m: Flow = "abc0".parse().unwrap();
        assert_eq!(split(&m, 2, 3, false).to_string(), "abc00");
        assert_eq!(split(&m, 2, 3, true).to_string(), "ab0c0");
    }

    #[test]
    fn zero_tails_lift_identically() {
        let t0 = Table::new(flows(&["aa0000", "0bb000", "c00c00"])).unwrap();
        let t1 = Table::new(flows(&["000000", "cab000", "ab0c00"])).unwrap();
        let mp = merge_columns_at(&t0, &t1, 4, 5).unwrap();
        let mut tr = MoveTrace::new();
        tr.steps
            .push(step(Side::T0, mp.t0.rows().to_vec(), mp.t1.rows().to_vec()).unwrap());
        let lifted = mp.lift.lift(&tr).unwrap();
        assert_eq!(lifted.len(), 1);
        lifted.validate(&t0, &t1, 3).unwrap();
    }

    #[test]
    fn permuted_pairs_need_one_swap() {
        // Same merged rows, splits swapped between the two tables.
        let t0 = Table::new(flows(&["a00a0", "aaa0a"])).unwrap();
        let t1 = Table::new(flows(&["a000a", "aaaa0"])).unwrap();
        assert!(compatible(&t0, &t1));
        let mp = merge_columns_at(&t0, &t1, 3, 4).unwrap();
        assert_eq!(mp.t0, mp.t1);
        let lifted = mp.lift.lift(&MoveTrace::new()).unwrap();
        assert_eq!(lifted.len(), 1);
        assert_eq!(lifted.max_degree(), 2);
        lifted.validate(&t0, &t1, 2).unwrap();
    }

    #[test]
    fn bad_pair_rejected() {
        let t0 = Table::new(flows(&["00aa", "a0a0"])).unwrap();
        let st = PairState::new(t0.clone(), t0).unwrap();
        assert!(matches!(merge_columns(&st), Err(Error::BadPairPresent(_))));
    }
}
