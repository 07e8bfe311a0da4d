//! Realizability of a column profile by a small number of flows.
//!
//! Columns are processed left to right; the state is the multiset of partial
//! row sums, which fits a `u128` bitset over multisets of size `s ≤ 6`.
//! A profile is realizable iff the all-zero state is reachable after the last
//! column. Backward-feasible sets drive enumeration and sampling.

use std::collections::HashMap;
use std::sync::OnceLock;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::group::{Flow, GroupElem};
use crate::table::Profile;

pub const MAX_ROWS: usize = 6;

pub type Column = [u8; 4];

pub struct Realizer {
    s: usize,
    states: Vec<Column>,
    index: HashMap<Column, usize>,
    /// `trans[a * L + b]`: states reachable from state `a` reading column `b`.
    trans: Vec<u128>,
}

fn multisets(s: usize) -> Vec<Column> {
    let mut out = Vec::new();
    for a in 0..=s {
        for b in 0..=s - a {
            for c in 0..=s - a - b {
                out.push([a as u8, b as u8, c as u8, (s - a - b - c) as u8]);
            }
        }
    }
    out
}

/// All multisets of partial sums obtained by pairing `state` with `letter`.
fn pairings(state: &Column, letter: &Column, out: &mut Vec<Column>) {
    fn rec(
        g: usize,
        rows: &mut Column,
        cols: &mut Column,
        acc: &mut Column,
        out: &mut Vec<Column>,
    ) {
        if g == 4 {
            out.push(*acc);
            return;
        }
        // Distribute the rows[g] partial sums equal to g over column symbols.
        fn split(
            g: usize,
            h: usize,
            left: u8,
            cols: &mut Column,
            acc: &mut Column,
            rows: &mut Column,
            out: &mut Vec<Column>,
        ) {
            if h == 3 {
                if left <= cols[3] {
                    cols[3] -= left;
                    acc[g ^ 3] += left;
                    rec(g + 1, rows, cols, acc, out);
                    acc[g ^ 3] -= left;
                    cols[3] += left;
                }
                return;
            }
            for k in 0..=left.min(cols[h]) {
                cols[h] -= k;
                acc[g ^ h] += k;
                split(g, h + 1, left - k, cols, acc, rows, out);
                acc[g ^ h] -= k;
                cols[h] += k;
            }
        }
        let left = rows[g];
        split(g, 0, left, cols, acc, rows, out);
    }
    let mut rows = *state;
    let mut cols = *letter;
    let mut acc = [0u8; 4];
    rec(0, &mut rows, &mut cols, &mut acc, out);
}

impl Realizer {
    fn build(s: usize) -> Realizer {
        let states = multisets(s);
        let index: HashMap<Column, usize> =
            states.iter().enumerate().map(|(i, c)| (*c, i)).collect();
        let l = states.len();
        let mut trans = vec![0u128; l * l];
        let mut buf = Vec::new();
        for (a, sa) in states.iter().enumerate() {
            for (b, sb) in states.iter().enumerate() {
                buf.clear();
                pairings(sa, sb, &mut buf);
                let mut m = 0u128;
                for c in &buf {
                    m |= 1u128 << index[c];
                }
                trans[a * l + b] = m;
            }
        }
        Realizer {
            s,
            states,
            index,
            trans,
        }
    }

    /// Shared instance for `1 ≤ s ≤ MAX_ROWS`.
    pub fn get(s: usize) -> &'static Realizer {
        static CACHE: [OnceLock<Realizer>; MAX_ROWS + 1] =
            [const { OnceLock::new() }; MAX_ROWS + 1];
        assert!(
            (1..=MAX_ROWS).contains(&s),
            "realizer supports 1..={MAX_ROWS} rows"
        );
        CACHE[s].get_or_init(|| Realizer::build(s))
    }

    pub fn rows(&self) -> usize {
        self.s
    }

    fn zero_state(&self) -> usize {
        self.index[&[self.s as u8, 0, 0, 0]]
    }

    fn letter(&self, c: &Column) -> Option<usize> {
        self.index.get(c).copied()
    }

    #[inline]
    fn step(&self, mask: u128, letter: usize) -> u128 {
        let l = self.states.len();
        let mut m = mask;
        let mut out = 0u128;
        while m != 0 {
            let a = m.trailing_zeros() as usize;
            m &= m - 1;
            out |= self.trans[a * l + letter];
        }
        out
    }

    /// Whether the columns are the profile of some `s` flows.
    pub fn realizable(&self, cols: &[Column]) -> bool {
        let mut mask = 1u128 << self.zero_state();
        for c in cols {
            let Some(letter) = self.letter(c) else {
                return false;
            };
            mask = self.step(mask, letter);
            if mask == 0 {
                return false;
            }
        }
        mask >> self.zero_state() & 1 == 1
    }

    /// `feas[i]`: states before column `i` from which the remaining columns
    /// can be completed to all-zero sums.
    fn backward(&self, cols: &[Column]) -> Option<Vec<u128>> {
        let l = self.states.len();
        let letters: Vec<usize> = cols.iter().map(|c| self.letter(c)).collect::<Option<_>>()?;
        let mut feas = vec![0u128; cols.len() + 1];
        feas[cols.len()] = 1u128 << self.zero_state();
        for i in (0..cols.len()).rev() {
            let mut m = 0u128;
            for a in 0..l {
                if self.trans[a * l + letters[i]] & feas[i + 1] != 0 {
                    m |= 1u128 << a;
                }
            }
            feas[i] = m;
        }
        (feas[0] >> self.zero_state() & 1 == 1).then_some(feas)
    }

    /// Visits every multiset of `s` flows with the given columns exactly once,
    /// rows sorted. The visitor returns `false` to stop.
    pub fn enumerate(&self, cols: &[Column], mut visit: impl FnMut(&[Flow]) -> bool) {
        let Some(feas) = self.backward(cols) else {
            return;
        };
        let mut dfs = Dfs {
            r: self,
            cols,
            feas: &feas,
            rows: vec![(0u64, 0u8); self.s],
            out: Vec::with_capacity(self.s),
            order: None,
        };
        dfs.column(0, &mut |rows| visit(rows));
    }

    pub fn witness(&self, cols: &[Column]) -> Option<Vec<Flow>> {
        let mut found = None;
        self.enumerate(cols, |rows| {
            found = Some(rows.to_vec());
            false
        });
        found
    }

    /// A random realization; every choice is feasible so no rejection occurs
    /// beyond local backtracking. Not uniform over the fiber.
    pub fn sample<R: Rng>(&self, cols: &[Column], rng: &mut R) -> Option<Vec<Flow>> {
        let feas = self.backward(cols)?;
        let mut order: Vec<[u8; 4]> = Vec::with_capacity(cols.len() * self.s);
        for _ in 0..cols.len() * self.s {
            let mut p = [0u8, 1, 2, 3];
            p.shuffle(rng);
            order.push(p);
        }
        let mut dfs = Dfs {
            r: self,
            cols,
            feas: &feas,
            rows: vec![(0u64, 0u8); self.s],
            out: Vec::with_capacity(self.s),
            order: Some(order),
        };
        let mut found = None;
        dfs.column(0, &mut |rows| {
            found = Some(rows.to_vec());
            false
        });
        found
    }
}

struct Dfs<'a> {
    r: &'a Realizer,
    cols: &'a [Column],
    feas: &'a [u128],
    /// Prefix bits and partial sum per row.
    rows: Vec<(u64, u8)>,
    out: Vec<Flow>,
    order: Option<Vec<[u8; 4]>>,
}

impl Dfs<'_> {
    /// Returns `false` once the visitor asked to stop.
    fn column(&mut self, i: usize, visit: &mut dyn FnMut(&[Flow]) -> bool) -> bool {
        let n = self.cols.len();
        let s = self.r.s;
        if i + 1 == n {
            // Last column is forced: every row ends with its partial sum.
            let mut counts = [0u8; 4];
            for &(_, sum) in &self.rows {
                counts[sum as usize] += 1;
            }
            if counts != self.cols[i] {
                return true;
            }
            self.out.clear();
            for &(bits, sum) in &self.rows {
                self.out.push(Flow::from_raw((bits << 2) | sum as u64, n));
            }
            self.out.sort_unstable();
            let out = std::mem::take(&mut self.out);
            let cont = visit(&out);
            self.out = out;
            return cont;
        }
        let saved = self.rows.clone();
        let mut remaining = self.cols[i];
        let mut vals = vec![0u8; s];
        let cont = self.assign(i, 0, &mut remaining, &mut vals, &saved, visit);
        self.rows = saved;
        cont
    }

    fn assign(
        &mut self,
        i: usize,
        j: usize,
        remaining: &mut Column,
        vals: &mut [u8],
        saved: &[(u64, u8)],
        visit: &mut dyn FnMut(&[Flow]) -> bool,
    ) -> bool {
        let s = self.r.s;
        if j == s {
            let mut state = [0u8; 4];
            for k in 0..s {
                let sum = saved[k].1 ^ vals[k];
                state[sum as usize] += 1;
                self.rows[k] = ((saved[k].0 << 2) | vals[k] as u64, sum);
            }
            if self.feas[i + 1] >> self.r.index[&state] & 1 == 0 {
                return true;
            }
            return self.column(i + 1, visit);
        }
        let lo = if j > 0 && saved[j].0 == saved[j - 1].0 {
            vals[j - 1]
        } else {
            0
        };
        let perm = match &self.order {
            Some(o) => o[i * s + j],
            None => [0, 1, 2, 3],
        };
        for v in perm {
            if v < lo || remaining[v as usize] == 0 {
                continue;
            }
            remaining[v as usize] -= 1;
            vals[j] = v;
            let cont = self.assign(i, j + 1, remaining, vals, saved, visit);
            remaining[v as usize] += 1;
            if !cont {
                return false;
            }
        }
        true
    }
}

pub fn columns_of(p: &Profile) -> Vec<Column> {
    (0..p.n())
        .map(|i| {
            let c = p.column(i);
            [c[0] as u8, c[1] as u8, c[2] as u8, c[3] as u8]
        })
        .collect()
}

/// Whether `p` is the profile of `p.degree()` flows. Degree 0 is trivially
/// realizable.
pub fn realizable(p: &Profile) -> bool {
    match p.degree() as usize {
        0 => true,
        s => Realizer::get(s).realizable(&columns_of(p)),
    }
}

/// Columns of a row multiset, as count vectors.
pub fn columns_of_rows(n: usize, rows: &[Flow]) -> Vec<Column> {
    let mut cols = vec![[0u8; 4]; n];
    for r in rows {
        for (i, c) in cols.iter_mut().enumerate() {
            c[r.get(i).code() as usize] += 1;
        }
    }
    cols
}

/// Columns of `rows` minus one row `x`; `None` if `x` does not fit.
pub fn columns_minus(cols: &[Column], x: &Flow) -> Option<Vec<Column>> {
    let mut out = cols.to_vec();
    for (i, c) in out.iter_mut().enumerate() {
        let g: GroupElem = x.get(i);
        let k = &mut c[g.code() as usize];
        *k = k.checked_sub(1)?;
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::{enumerate_flows, FaceSpec};
    use crate::table::Table;
    use rand::SeedableRng;
    use std::collections::BTreeSet;

    /// Brute force: all multisets of `s` flows of length `n` grouped by columns.
    fn brute(n: usize, s: usize) -> HashMap<Vec<Column>, BTreeSet<Vec<Flow>>> {
        let flows = enumerate_flows(n, &FaceSpec::empty()).unwrap();
        let mut out: HashMap<Vec<Column>, BTreeSet<Vec<Flow>>> = HashMap::new();
        let mut idx = vec![0usize; s];
        loop {
            let rows: Vec<Flow> = idx.iter().map(|&i| flows[i]).collect();
            out.entry(columns_of_rows(n, &rows))
                .or_default()
                .insert(rows);
            let mut k = s;
            loop {
                if k == 0 {
                    return out;
                }
                k -= 1;
                if idx[k] + 1 < flows.len() {
                    let v = idx[k] + 1;
                    for slot in idx.iter_mut().skip(k) {
                        *slot = v;
                    }
                    break;
                }
            }
        }
    }

    #[test]
    fn enumeration_matches_brute_force() {
        for (n, s) in [(3, 2), (3, 3), (4, 2), (4, 3), (3, 4)] {
            let fibers = brute(n, s);
            let r = Realizer::get(s);
            for (cols, members) in &fibers {
                assert!(r.realizable(cols));
                let mut got = BTreeSet::new();
                r.enumerate(cols, |rows| {
                    assert!(got.insert(rows.to_vec()), "duplicate");
                    true
                });
                assert_eq!(&got, members);
            }
        }
    }

    #[test]
    fn unrealizable_profiles_rejected() {
        // Column counts of one row "aa" with a zero third column are not a flow.
        let r = Realizer::get(1);
        assert!(!r.realizable(&[[0, 1, 0, 0], [0, 1, 0, 0], [0, 1, 0, 0]]));
        assert!(r.realizable(&[[0, 1, 0, 0], [0, 1, 0, 0], [1, 0, 0, 0]]));
        let bad = Table::parse(&["aa0", "bb0"]).unwrap();
        let mut cols = columns_of_rows(3, bad.rows());
        cols[2] = [0, 1, 1, 0];
        assert!(!Realizer::get(2).realizable(&cols));
    }

    #[test]
    fn sampling_hits_the_fiber() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let t = Table::parse(&["aa00", "0bb0", "c00c", "abc0", "0000", "bbbb"]).unwrap();
        let cols = columns_of_rows(4, t.rows());
        for _ in 0..50 {
            let rows = Realizer::get(6).sample(&cols, &mut rng).unwrap();
            assert_eq!(columns_of_rows(4, &rows), cols);
        }
    }
}
