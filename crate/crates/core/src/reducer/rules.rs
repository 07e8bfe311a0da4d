//! Reduction rules and their registry.
//!
//! A rule inspects the current pair and either declines, returns steps that
//! lower the measure, or reports a dead end with its case label.

use crate::error::{Error, Result};
use crate::group::{Automorphism, Flow, GroupElem};
use crate::moves::{MoveTrace, Side, TraceStep};
use crate::table::Table;

use super::merge::merge_columns_at;
use super::search::{for_each_exchange, subsets_with, target_replacement};
use super::{drive, min_bad_pair_columns, step, Ctx, PairState, Pinned, Stop};

pub enum RuleOutcome {
    NotApplicable,
    Progress {
        label: String,
        steps: Vec<TraceStep>,
    },
    DeadEnd(String),
}

pub trait ReductionRule: Send + Sync {
    fn name(&self) -> &'static str;
    fn apply(&self, st: &PairState, ctx: &mut Ctx<'_>) -> std::result::Result<RuleOutcome, Stop>;
}

/// Rules tried in order each round.
pub struct RuleRegistry {
    rules: Vec<Box<dyn ReductionRule>>,
}

impl RuleRegistry {
    pub fn available() -> &'static [&'static str] {
        &[
            "direct",
            "merge-columns",
            "hamming-ge4",
            "hamming-abc",
            "hamming-two",
        ]
    }

    fn make(name: &str) -> Option<Box<dyn ReductionRule>> {
        Some(match name {
            "direct" => Box::new(Direct),
            "merge-columns" => Box::new(MergeColumns),
            "hamming-ge4" => Box::new(HammingGe4),
            "hamming-abc" => Box::new(HammingAbc),
            "hamming-two" => Box::new(HammingTwo),
            _ => return None,
        })
    }

    pub fn empty() -> RuleRegistry {
        RuleRegistry { rules: Vec::new() }
    }

    pub fn standard() -> RuleRegistry {
        Self::from_names(Self::available()).expect("built-in names")
    }

    pub fn from_names<S: AsRef<str>>(names: &[S]) -> Result<RuleRegistry> {
        let mut reg = RuleRegistry::empty();
        for n in names {
            let rule = Self::make(n.as_ref()).ok_or_else(|| {
                Error::Parse(format!(
                    "unknown rule {:?}; available: {}",
                    n.as_ref(),
                    Self::available().join(", ")
                ))
            })?;
            reg.register(rule);
        }
        Ok(reg)
    }

    pub fn register(&mut self, rule: Box<dyn ReductionRule>) {
        self.rules.push(rule);
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.rules.iter().map(|r| r.name()).collect()
    }

    pub fn rules(&self) -> &[Box<dyn ReductionRule>] {
        &self.rules
    }
}

/// One move exchanging the unshared rows outright.
struct Direct;

impl ReductionRule for Direct {
    fn name(&self) -> &'static str {
        "direct"
    }

    fn apply(&self, st: &PairState, ctx: &mut Ctx<'_>) -> std::result::Result<RuleOutcome, Stop> {
        let (c0, c1) = st.cores();
        if c0.is_empty() || c0.len() > ctx.max_degree {
            return Ok(RuleOutcome::NotApplicable);
        }
        let label = format!("degree {}", c0.len());
        Ok(match step(Side::T0, c0, c1) {
            Some(s) => RuleOutcome::Progress {
                label,
                steps: vec![s],
            },
            None => RuleOutcome::NotApplicable,
        })
    }
}

/// Sums a column pair without bad pairs, reduces one leaf fewer, lifts back.
struct MergeColumns;

impl ReductionRule for MergeColumns {
    fn name(&self) -> &'static str {
        "merge-columns"
    }

    fn apply(&self, st: &PairState, ctx: &mut Ctx<'_>) -> std::result::Result<RuleOutcome, Stop> {
        let n = st.n();
        let (c0, c1) = st.cores();
        if n < 3 || c0.len() <= ctx.max_degree {
            return Ok(RuleOutcome::NotApplicable);
        }
        let (bad, (a, b)) = min_bad_pair_columns(n, &c0, &c1);
        if bad > 0 {
            return Ok(RuleOutcome::NotApplicable);
        }
        let mp = merge_columns_at(&Table::with_len(n, c0)?, &Table::with_len(n, c1)?, a, b)?;
        let mut sub = PairState::new(mp.t0.clone(), mp.t1.clone())?;
        let mut sub_trace = MoveTrace::new();
        ctx.depth += 1;
        let r = drive(&mut sub, ctx, &mut sub_trace);
        ctx.depth -= 1;
        r?;
        let lifted = mp.lift.lift(&sub_trace)?;
        Ok(RuleOutcome::Progress {
            label: format!("columns {},{}", a + 1, b + 1),
            steps: lifted.steps,
        })
    }
}

/// Visits exchanges restricted to `cols` on subsets of size at most `max`
/// containing a pinned row, on its own side. Stops when `visit` is false.
fn pinned_exchanges(
    st: &PairState,
    p: &Pinned,
    cols: &[usize],
    max: usize,
    visit: &mut dyn FnMut(TraceStep, PairState) -> bool,
) {
    for (side, must) in [(Side::T0, p.r0), (Side::T1, p.r1)] {
        let own = st.core(side);
        for sub in subsets_with(&own, Some(must), max) {
            let mut go = true;
            for_each_exchange(&sub, cols, &mut |rep| {
                if let Some(s) = step(side, sub.clone(), rep.to_vec()) {
                    if let Some(next) = st.after(&s) {
                        go = visit(s, next);
                    }
                }
                go
            });
            if !go {
                return;
            }
        }
    }
}

fn first_pinned_exchange(
    st: &PairState,
    p: &Pinned,
    cols: &[usize],
    max: usize,
    accept: impl Fn(&PairState) -> bool,
) -> Option<(TraceStep, PairState)> {
    let mut found = None;
    pinned_exchanges(st, p, cols, max, &mut |s, next| {
        if accept(&next) {
            found = Some((s, next));
            false
        } else {
            true
        }
    });
    found
}

/// Preparatory exchanges tried before giving up on a restricted search.
const PREP_CAP: usize = 16;

/// Restricted search of depth at most two: one exchange lowering
/// `(degree, distance)`, or one that keeps it followed by one that lowers it.
fn two_level(
    st: &PairState,
    p: &Pinned,
    masks: &[(Vec<usize>, usize)],
    prep: &(Vec<usize>, usize),
) -> Option<Vec<TraceStep>> {
    let dk = st.degree_and_distance();
    for (cols, max) in masks {
        if let Some((s, _)) =
            first_pinned_exchange(st, p, cols, *max, |n| n.degree_and_distance() < dk)
        {
            return Some(vec![s]);
        }
    }
    let mut preps = Vec::new();
    pinned_exchanges(st, p, &prep.0, prep.1, &mut |s, next| {
        if next.degree_and_distance() == dk {
            preps.push((s, next));
        }
        preps.len() < PREP_CAP
    });
    for (s0, mid) in preps {
        let Some(p2) = mid.pin() else { continue };
        for (cols, max) in masks {
            if let Some((s1, _)) =
                first_pinned_exchange(&mid, &p2, cols, *max, |n| n.degree_and_distance() < dk)
            {
                return Some(vec![s0, s1]);
            }
        }
    }
    None
}

fn diff_symbols(p: &Pinned, cols: &[usize]) -> Vec<GroupElem> {
    cols.iter().map(|&c| p.r0.get(c) + p.r1.get(c)).collect()
}

/// Label (i)–(iv) of a four-letter disagreement string up to symmetry.
fn ge4_label(s: &[GroupElem]) -> &'static str {
    let mut counts: Vec<usize> = GroupElem::NONZERO
        .iter()
        .map(|g| s.iter().filter(|x| *x == g).count())
        .filter(|&c| c > 0)
        .collect();
    counts.sort_unstable_by(|a, b| b.cmp(a));
    match counts.as_slice() {
        [4] => "(i) αααα",
        [2, 2] => "(ii) ααββ",
        [2, 1, 1] => "(iii) ααβγ",
        [3, 1] => "(iv) αααβ",
        _ => "unclassified",
    }
}

/// Lowers a pinned distance of at least four using exchanges of degree at
/// most three inside four of the disagreement columns.
pub fn reduce_hamming_ge4(
    st: &PairState,
    max_degree: usize,
) -> Result<(PairState, Vec<TraceStep>, String)> {
    let p = st
        .pin()
        .ok_or_else(|| Error::Precondition("tables are equal".into()))?;
    if p.distance < 4 {
        return Err(Error::Precondition(format!(
            "disagreement has length {}",
            p.distance
        )));
    }
    let cols = p.disagreement[..4].to_vec();
    let label = ge4_label(&diff_symbols(&p, &cols)).to_string();
    let deg = max_degree.min(3);
    let steps = two_level(st, &p, &[(cols.clone(), deg)], &(cols, deg))
        .ok_or_else(|| Error::DeadEnd(label.clone()))?;
    Ok((replay(st, &steps)?, steps, label))
}

/// Lowers a pinned distance of three (the string αβγ up to symmetry) with
/// exchanges in the disagreement columns and at most two agreement columns.
pub fn reduce_hamming_3(
    st: &PairState,
    max_degree: usize,
) -> Result<(PairState, Vec<TraceStep>, String)> {
    let p = st
        .pin()
        .ok_or_else(|| Error::Precondition("tables are equal".into()))?;
    if p.distance != 3 {
        return Err(Error::Precondition(format!(
            "disagreement has length {}",
            p.distance
        )));
    }
    let a = p.disagreement.clone();
    let mut masks = vec![(a.clone(), max_degree.min(4))];
    for &c in &p.agreement {
        let mut m = a.clone();
        m.push(c);
        masks.push((m, max_degree.min(3)));
    }
    for (i, &c) in p.agreement.iter().enumerate() {
        for &e in &p.agreement[i + 1..] {
            let mut m = a.clone();
            m.extend([c, e]);
            masks.push((m, 2));
        }
    }
    let label = "αβγ".to_string();
    let steps = two_level(st, &p, &masks, &(a, max_degree.min(3)))
        .ok_or_else(|| Error::DeadEnd(label.clone()))?;
    Ok((replay(st, &steps)?, steps, label))
}

/// Distance two: either produce a shared row with a move through a pinned
/// row, or lower the number of bad pairs in the best column pair.
pub fn reduce_hamming_2(
    st: &PairState,
    max_degree: usize,
) -> Result<(PairState, Vec<TraceStep>, String)> {
    let p = st
        .pin()
        .ok_or_else(|| Error::Precondition("tables are equal".into()))?;
    if p.distance != 2 {
        return Err(Error::Precondition(format!(
            "disagreement has length {}",
            p.distance
        )));
    }
    let n = st.n();
    let label = case_label(st, &p);
    for (side, must, target) in [(Side::T0, p.r0, p.r1), (Side::T1, p.r1, p.r0)] {
        for sub in subsets_with(&st.core(side), Some(must), max_degree) {
            if let Some(rep) = target_replacement(n, &sub, &target) {
                if let Some(s) = step(side, sub, rep) {
                    let steps = vec![s];
                    return Ok((replay(st, &steps)?, steps, label));
                }
            }
        }
    }
    let (c0, c1) = st.cores();
    let (bad, (a, b)) = min_bad_pair_columns(n, &c0, &c1);
    if bad > 0 {
        let cur = st.measure();
        let all: Vec<usize> = (0..n).collect();
        for (side, own) in [(Side::T0, &c0), (Side::T1, &c1)] {
            let mut bad_rows: Vec<Flow> = own
                .iter()
                .filter(|r| !r.get(a).is_zero() && !r.get(b).is_zero())
                .copied()
                .collect();
            bad_rows.dedup();
            for u in bad_rows {
                let mut found = None;
                for sub in subsets_with(own, Some(u), 2) {
                    for_each_exchange(&sub, &all, &mut |rep| {
                        found = step(side, sub.clone(), rep.to_vec())
                            .filter(|s| st.after(s).is_some_and(|nx| nx.measure() < cur));
                        found.is_none()
                    });
                    if found.is_some() {
                        break;
                    }
                }
                if found.is_none() && max_degree >= 3 {
                    'outer: for sub in subsets_with(own, Some(u), 3)
                        .into_iter()
                        .filter(|s| s.len() == 3)
                    {
                        for c in (0..n).filter(|&c| c != a && c != b) {
                            for_each_exchange(&sub, &[a, b, c], &mut |rep| {
                                found = step(side, sub.clone(), rep.to_vec())
                                    .filter(|s| st.after(s).is_some_and(|nx| nx.measure() < cur));
                                found.is_none()
                            });
                            if found.is_some() {
                                break 'outer;
                            }
                        }
                    }
                }
                if let Some(s) = found {
                    let steps = vec![s];
                    return Ok((replay(st, &steps)?, steps, label));
                }
            }
        }
    }
    Err(Error::DeadEnd(label))
}

fn replay(st: &PairState, steps: &[TraceStep]) -> Result<PairState> {
    let mut s = st.clone();
    for step in steps {
        s.apply(step)?;
    }
    Ok(s)
}

/// The case (I–X) of a distance-two pinned pair after normalizing its
/// disagreement to αα in the first two disagreement columns, with the
/// pinned row of T1 translated to zero and `x = β`.
pub fn case_label(st: &PairState, p: &Pinned) -> String {
    if p.distance != 2 {
        return format!("distance {}", p.distance);
    }
    let (i, j) = (p.disagreement[0], p.disagreement[1]);
    let d = p.r0.get(i) + p.r1.get(i);
    let mut aut = Automorphism::all()
        .into_iter()
        .find(|s| s.apply(d) == GroupElem::ALPHA)
        .expect("some automorphism maps d to α");
    let (mut c0, mut c1) = st.cores();
    if let Some(k) = c0.iter().position(|r| *r == p.r0) {
        c0.remove(k);
    }
    if let Some(k) = c1.iter().position(|r| *r == p.r1) {
        c1.remove(k);
    }
    let entry = |aut: &Automorphism, r: &Flow, c: usize| aut.apply(r.get(c) + p.r1.get(c));
    let find = |rows: &[Flow], aut: &Automorphism, col: usize, val: GroupElem| {
        rows.iter().find(|r| entry(aut, r, col) == val).copied()
    };
    let (Some(r0x), Some(ry0), Some(raz), Some(rwa)) = (
        find(&c0, &aut, i, GroupElem::ZERO),
        find(&c0, &aut, j, GroupElem::ZERO),
        find(&c1, &aut, i, GroupElem::ALPHA),
        find(&c1, &aut, j, GroupElem::ALPHA),
    ) else {
        return "degenerate".into();
    };
    if entry(&aut, &r0x, j) == GroupElem::GAMMA {
        let swap =
            Automorphism::swap(GroupElem::BETA, GroupElem::GAMMA).expect("β and γ are nonzero");
        aut = swap.compose(&aut);
    }
    let (x, y, z, w) = (
        entry(&aut, &r0x, j),
        entry(&aut, &ry0, i),
        entry(&aut, &raz, j),
        entry(&aut, &rwa, i),
    );
    use GroupElem as G;
    let bc = |u: G, v: G| (u == G::BETA && v == G::GAMMA) || (u == G::GAMMA && v == G::BETA);
    if x != G::BETA || y == G::ZERO || z == G::ALPHA || w == G::ALPHA {
        return "degenerate".into();
    }
    if bc(x, y) {
        return "{x,y}={β,γ}".into();
    }
    if bc(z, w) {
        return "{z,w}={β,γ}".into();
    }
    let case = match (y, z, w) {
        (G::ALPHA, G::BETA, G::ZERO) => "I",
        (G::ALPHA, G::BETA, G::BETA) => "II",
        (G::ALPHA, G::ZERO, G::ZERO) => "X",
        (G::ALPHA, G::ZERO, G::BETA) => "VII",
        (G::ALPHA, G::ZERO, G::GAMMA) => "VI",
        (G::ALPHA, G::GAMMA, G::ZERO) => "IV",
        (G::ALPHA, G::GAMMA, G::GAMMA) => "V",
        (G::BETA, G::BETA, G::ZERO) => "II",
        (G::BETA, G::BETA, G::BETA) => "III",
        (G::BETA, G::ZERO, G::ZERO) => "IX",
        (G::BETA, G::ZERO, G::BETA) => "II",
        (G::BETA, G::ZERO, G::GAMMA) => "V",
        (G::BETA, G::GAMMA, G::ZERO) => "V",
        (G::BETA, G::GAMMA, G::GAMMA) => "VIII",
        _ => return "degenerate".into(),
    };
    format!("Case {case}")
}

fn outcome(
    r: Result<(PairState, Vec<TraceStep>, String)>,
) -> std::result::Result<RuleOutcome, Stop> {
    match r {
        Ok((_, steps, label)) => Ok(RuleOutcome::Progress { label, steps }),
        Err(Error::DeadEnd(label)) => Ok(RuleOutcome::DeadEnd(label)),
        Err(e) => Err(Stop::Error(e)),
    }
}

fn pinned_distance(st: &PairState) -> Option<usize> {
    st.pin().map(|p| p.distance)
}

struct HammingGe4;

impl ReductionRule for HammingGe4 {
    fn name(&self) -> &'static str {
        "hamming-ge4"
    }

    fn apply(&self, st: &PairState, ctx: &mut Ctx<'_>) -> std::result::Result<RuleOutcome, Stop> {
        if !pinned_distance(st).is_some_and(|k| k >= 4) {
            return Ok(RuleOutcome::NotApplicable);
        }
        outcome(reduce_hamming_ge4(st, ctx.max_degree))
    }
}

struct HammingAbc;

impl ReductionRule for HammingAbc {
    fn name(&self) -> &'static str {
        "hamming-abc"
    }

    fn apply(&self, st: &PairState, ctx: &mut Ctx<'_>) -> std::result::Result<RuleOutcome, Stop> {
        if pinned_distance(st) != Some(3) {
            return Ok(RuleOutcome::NotApplicable);
        }
        outcome(reduce_hamming_3(st, ctx.max_degree))
    }
}

struct HammingTwo;

impl ReductionRule for HammingTwo {
    fn name(&self) -> &'static str {
        "hamming-two"
    }

    fn apply(&self, st: &PairState, ctx: &mut Ctx<'_>) -> std::result::Result<RuleOutcome, Stop> {
        if pinned_distance(st) != Some(2) {
            return Ok(RuleOutcome::NotApplicable);
        }
        outcome(reduce_hamming_2(st, ctx.max_degree))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(a: &[&str], b: &[&str]) -> PairState {
        PairState::new(Table::parse(a).unwrap(), Table::parse(b).unwrap()).unwrap()
    }

    #[test]
    fn registry_names() {
        let r = RuleRegistry::standard();
        assert_eq!(r.names(), RuleRegistry::available());
        assert!(RuleRegistry::from_names(&["direct", "nope"]).is_err());
        assert!(RuleRegistry::from_names::<&str>(&[])
            .unwrap()
            .names()
            .is_empty());
    }

    #[test]
    fn labels_for_four_letter_strings() {
        use GroupElem as G;
        assert_eq!(ge4_label(&[G::BETA; 4]), "(i) αααα");
        assert_eq!(
            ge4_label(&[G::GAMMA, G::ALPHA, G::GAMMA, G::ALPHA]),
            "(ii) ααββ"
        );
        assert_eq!(
            ge4_label(&[G::ALPHA, G::BETA, G::GAMMA, G::GAMMA]),
            "(iii) ααβγ"
        );
        assert_eq!(
            ge4_label(&[G::BETA, G::BETA, G::ALPHA, G::BETA]),
            "(iv) αααβ"
        );
    }

    #[test]
    fn hamming_preconditions() {
        // Pinned pair aa000 / 00000 has distance 2.
        let st = state(&["aa000", "0b0b0", "a0a00"], &["00000", "aa000", "abab0"]);
        assert!(matches!(
            reduce_hamming_ge4(&st, 4),
            Err(Error::Precondition(_))
        ));
        assert!(matches!(
            reduce_hamming_3(&st, 4),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn case_one_labelled() {
        // T0: αα0…, 0β…, α0…, 0γ…; T1: 00…, αβ…, 0α…, αγ…  (x=β, y=α, z=β, w=0).
        let st = state(
            &["aa00000", "0bbbca0", "a0b0bcb", "0cbac0c"],
            &["0000000", "abbacab", "0ab0c00", "acbbbcc"],
        );
        let p = st.pin().unwrap();
        assert_eq!(p.distance, 2);
        assert_eq!(case_label(&st, &p), "Case I");
    }

    #[test]
    fn cubic_lemma_reduces_to_shared_row() {
        // T1 holds 00, αβ, γα in the first two columns; the cubic move
        // 00+αβ+γα = αα+0β+γ0 puts αα00 into T1.
        let st = state(&["aa00", "0b0b", "c00c"], &["0000", "ab0c", "ca0b"]);
        let (next, steps, _) = reduce_hamming_2(&st, 4).unwrap();
        assert_eq!(steps.len(), 1);
        assert!(next.core_degree() < st.core_degree());
    }

    #[test]
    fn ge4_reduces_aaaa() {
        // Pinned 0000 vs αααα plus rows making a quadratic exchange possible.
        let st = state(
            &["aaaa00", "0000bb", "aa00cc", "00aa00", "bbbb00"],
            &["000000", "aaaabb", "aa0000", "00aacc", "bbbb00"],
        );
        let before = st.degree_and_distance();
        if let Ok((next, steps, label)) = reduce_hamming_ge4(&st, 4) {
            assert!(next.degree_and_distance() < before);
            assert!(steps.iter().all(|s| s.remove.len() <= 3));
            assert_eq!(label, "(i) αααα");
        }
    }
}
