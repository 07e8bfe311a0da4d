//! Move generators and the best-first escape search.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashSet};

use crate::group::{fold_sum, Flow, GroupElem};
use crate::moves::{neighbors, sub_multisets, Side, TraceStep};
use crate::realize::{columns_minus, columns_of_rows, Realizer};

use super::{difference, step, Ctx, Measure, PairState, Stop};

/// Tables with at most this many columns are searched with every move of
/// bounded degree, which makes the escape search complete.
pub const EXHAUSTIVE_MAX_LEAVES: usize = 4;

fn distinct_perms(vals: &[u8]) -> Vec<Vec<u8>> {
    let mut v = vals.to_vec();
    v.sort_unstable();
    let mut out = vec![v.clone()];
    // Lexicographic successor until exhausted.
    loop {
        let Some(i) = (1..v.len()).rev().find(|&i| v[i - 1] < v[i]) else {
            return out;
        };
        let j = (i..v.len()).rev().find(|&j| v[j] > v[i - 1]).unwrap();
        v.swap(i - 1, j);
        v[i..].reverse();
        out.push(v.clone());
    }
}

/// Every row multiset, other than `rows` itself, obtained by permuting
/// entries within the columns `cols` while keeping each row a flow. These
/// are exactly the moves on `rows` that leave the other columns alone.
/// Stops early when `visit` returns `false`.
pub(crate) fn for_each_exchange(
    rows: &[Flow],
    cols: &[usize],
    visit: &mut dyn FnMut(&[Flow]) -> bool,
) {
    if cols.len() < 2 || rows.len() < 2 {
        return;
    }
    let (free, last) = (&cols[..cols.len() - 1], cols[cols.len() - 1]);
    let perms: Vec<Vec<Vec<u8>>> = free
        .iter()
        .map(|&c| distinct_perms(&rows.iter().map(|r| r.get(c).code()).collect::<Vec<_>>()))
        .collect();
    let mut last_vals: Vec<u8> = rows.iter().map(|r| r.get(last).code()).collect();
    last_vals.sort_unstable();
    let mut original = rows.to_vec();
    original.sort_unstable();
    let mut seen: HashSet<Vec<Flow>> = HashSet::new();
    let mut cur = rows.to_vec();
    let mut idx = vec![0usize; free.len()];
    loop {
        for (k, &c) in free.iter().enumerate() {
            for (r, row) in cur.iter_mut().enumerate() {
                *row = row.with(c, GroupElem::from_code(perms[k][idx[k]][r]).unwrap());
            }
        }
        let mut forced: Vec<u8> = cur
            .iter()
            .map(|r| fold_sum(r.bits()) ^ r.get(last).code())
            .collect();
        let row_vals = forced.clone();
        forced.sort_unstable();
        if forced == last_vals {
            let mut out: Vec<Flow> = cur
                .iter()
                .zip(&row_vals)
                .map(|(r, &v)| r.with(last, GroupElem::from_code(v).unwrap()))
                .collect();
            out.sort_unstable();
            if out != original && seen.insert(out.clone()) && !visit(&out) {
                return;
            }
        }
        // Odometer over the free columns.
        let mut k = 0;
        loop {
            if k == free.len() {
                return;
            }
            idx[k] += 1;
            if idx[k] < perms[k].len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

/// A replacement for `sub` that contains `x`, if the columns allow one.
pub(crate) fn target_replacement(n: usize, sub: &[Flow], x: &Flow) -> Option<Vec<Flow>> {
    if sub.len() < 2 || sub.contains(x) {
        return None;
    }
    let rest = columns_minus(&columns_of_rows(n, sub), x)?;
    let mut out = Realizer::get(sub.len() - 1).witness(&rest)?;
    out.push(*x);
    Some(out)
}

/// Sub-multisets of `rows` of sizes `2..=max` containing `must` (if given),
/// as row vectors.
pub(crate) fn subsets_with(rows: &[Flow], must: Option<Flow>, max: usize) -> Vec<Vec<Flow>> {
    let mut rest = rows.to_vec();
    let fixed: Vec<Flow> = match must {
        Some(m) => {
            let Some(pos) = rest.iter().position(|r| *r == m) else {
                return Vec::new();
            };
            rest.remove(pos);
            vec![m]
        }
        None => Vec::new(),
    };
    let mut out = Vec::new();
    for k in 2..=max {
        if k < fixed.len() || k - fixed.len() > rest.len() {
            continue;
        }
        sub_multisets(&rest, k - fixed.len(), |idx| {
            let mut s = fixed.clone();
            s.extend(idx.iter().map(|&i| rest[i]));
            out.push(s);
        });
    }
    out
}

/// Flows obtained from `f` by changing exactly `j` entries.
fn at_distance(f: &Flow, j: usize, out: &mut Vec<Flow>) {
    let n = f.len();
    fn rec(f: Flow, n: usize, start: usize, left: usize, acc: u8, out: &mut Vec<Flow>) {
        if left == 0 {
            if acc == 0 {
                out.push(f);
            }
            return;
        }
        for c in start..n {
            if n - c < left {
                break;
            }
            for d in 1..4u8 {
                let g = GroupElem::from_code(f.get(c).code() ^ d).unwrap();
                rec(f.with(c, g), n, c + 1, left - 1, acc ^ d, out);
            }
        }
    }
    rec(*f, n, 0, j, 0, out);
}

fn core_moves(st: &PairState, ctx: &Ctx<'_>, out: &mut Vec<TraceStep>) {
    let n = st.n();
    let max = ctx.max_degree.min(crate::realize::MAX_ROWS);
    let (c0, c1) = st.cores();
    let m = st.measure();
    for (side, own, other) in [(Side::T0, &c0, &c1), (Side::T1, &c1, &c0)] {
        let mut targets: Vec<Flow> = other.clone();
        targets.dedup();
        // Rows of the other side and flows closer to them than `k`.
        let mut near = Vec::new();
        for y in &targets {
            for j in 2..m.hamming.min(4) {
                at_distance(y, j, &mut near);
            }
        }
        near.sort_unstable();
        near.dedup();
        for sub in subsets_with(own, None, max.min(own.len())) {
            for x in targets.iter().chain(&near) {
                if let Some(rep) = target_replacement(n, &sub, x) {
                    if let Some(s) = step(side, sub.clone(), rep) {
                        out.push(s);
                    }
                }
            }
        }
        // Quadratic moves among all rows of the table.
        let rows = st.table(side).rows();
        for i in 0..rows.len() {
            for j in i + 1..rows.len() {
                let (u, v) = (rows[i], rows[j]);
                if u == v || (j > i + 1 && rows[j - 1] == v) || (i > 0 && rows[i - 1] == u) {
                    continue;
                }
                let diff: Vec<usize> = (0..n).filter(|&c| u.get(c) != v.get(c)).collect();
                for mask in 1u32..(1 << diff.len()) - 1 {
                    let (mut a, mut b) = (u, v);
                    for (k, &c) in diff.iter().enumerate() {
                        if mask >> k & 1 == 1 {
                            a = a.with(c, v.get(c));
                            b = b.with(c, u.get(c));
                        }
                    }
                    if fold_sum(a.bits()) == 0 {
                        if let Some(s) = step(side, vec![u, v], vec![a, b]) {
                            out.push(s);
                        }
                    }
                }
            }
        }
    }
}

fn all_moves(st: &PairState, ctx: &Ctx<'_>, out: &mut Vec<TraceStep>) {
    for side in [Side::T0, Side::T1] {
        let t = st.table(side);
        for nb in neighbors(t, ctx.max_degree, ctx.cache) {
            let remove = difference(t.rows(), nb.rows());
            let insert = difference(nb.rows(), t.rows());
            if let Some(s) = step(side, remove, insert) {
                out.push(s);
            }
        }
    }
}

/// Best-first search for a path of moves that lowers the measure.
pub(crate) fn escape(st: &PairState, ctx: &mut Ctx<'_>) -> Result<Vec<TraceStep>, Stop> {
    let start = st.measure();
    let exhaustive = st.n() <= EXHAUSTIVE_MAX_LEAVES;
    let mut nodes: Vec<(PairState, Option<(usize, TraceStep)>)> = vec![(st.clone(), None)];
    let mut heap: BinaryHeap<Reverse<(Measure, usize, usize)>> = BinaryHeap::new();
    let mut seen: HashSet<(Vec<Flow>, Vec<Flow>)> = HashSet::new();
    seen.insert((st.t0.rows().to_vec(), st.t1.rows().to_vec()));
    heap.push(Reverse((start, 0, 0)));
    let path = |nodes: &[(PairState, Option<(usize, TraceStep)>)], mut i: usize| {
        let mut steps = Vec::new();
        while let Some((p, s)) = &nodes[i].1 {
            steps.push(s.clone());
            i = *p;
        }
        steps.reverse();
        steps
    };
    while let Some(Reverse((_, len, id))) = heap.pop() {
        ctx.charge()?;
        let cur = nodes[id].0.clone();
        let mut moves = Vec::new();
        if exhaustive {
            all_moves(&cur, ctx, &mut moves);
        } else {
            core_moves(&cur, ctx, &mut moves);
        }
        for s in moves {
            let Some(next) = cur.after(&s) else { continue };
            if !seen.insert((next.t0.rows().to_vec(), next.t1.rows().to_vec())) {
                continue;
            }
            let m = next.measure();
            nodes.push((next, Some((id, s))));
            let nid = nodes.len() - 1;
            if m < start {
                return Ok(path(&nodes, nid));
            }
            heap.push(Reverse((m, len + 1, nid)));
        }
    }
    Err(Stop::Budget(format!("search space exhausted at {start:?}")))
}
