//! Reduction of a compatible pair to equality by moves of bounded degree.
//!
//! The engine works on the rows the two tables do not share. Each round it
//! asks the registered rules, in order, for a step that lowers the measure
//! `(core degree, min cross Hamming distance, min bad pairs)`; when every rule
//! declines or dead-ends it runs a bounded best-first search until the
//! measure drops, logging the dead end.

mod merge;
mod rules;
mod search;

use std::collections::BTreeMap;
use std::time::Instant;

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::group::{Flow, GroupElem};
use crate::moves::{apply_move, FiberCache, Move, MoveTrace, Side, TraceStep};
use crate::realize::{columns_of_rows, Realizer};
use crate::table::{compatible, Table};

pub use merge::{merge_columns, merge_columns_at, merge_flow, LiftRecipe, MergedPair};
pub use rules::{
    case_label, reduce_hamming_2, reduce_hamming_3, reduce_hamming_ge4, ReductionRule, RuleOutcome,
    RuleRegistry,
};

/// Multiset difference of sorted slices.
pub(crate) fn difference(a: &[Flow], b: &[Flow]) -> Vec<Flow> {
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::new();
    while i < a.len() {
        if j < b.len() && b[j] < a[i] {
            j += 1;
        } else if j < b.len() && b[j] == a[i] {
            i += 1;
            j += 1;
        } else {
            out.push(a[i]);
            i += 1;
        }
    }
    out
}

fn nonzero_mask(f: &Flow) -> u32 {
    (0..f.len())
        .filter(|&i| !f.get(i).is_zero())
        .fold(0, |m, i| m | 1 << i)
}

/// Rows with nonzero entries in both columns `a` and `b`.
pub fn bad_pairs_at(rows: &[Flow], a: usize, b: usize) -> usize {
    let m = (1u32 << a) | (1 << b);
    rows.iter().filter(|r| nonzero_mask(r) & m == m).count()
}

/// The column pair with fewest bad pairs over both row sets; ties prefer
/// later columns.
pub fn min_bad_pair_columns(n: usize, c0: &[Flow], c1: &[Flow]) -> (usize, (usize, usize)) {
    let masks: Vec<u32> = c0.iter().chain(c1).map(nonzero_mask).collect();
    let mut best = (usize::MAX, (0, 0));
    for b in (1..n).rev() {
        for a in (0..b).rev() {
            let m = (1u32 << a) | (1 << b);
            let count = masks.iter().filter(|&&x| x & m == m).count();
            if count < best.0 {
                best = (count, (a, b));
            }
        }
    }
    best
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct BadPair {
    pub row: Flow,
    pub x: GroupElem,
    pub y: GroupElem,
}

/// Bad pairs in the last two columns.
pub fn find_bad_pairs(t: &Table) -> Vec<BadPair> {
    let n = t.n();
    if n < 2 {
        return Vec::new();
    }
    t.rows()
        .iter()
        .filter_map(|r| {
            let (x, y) = (r.get(n - 2), r.get(n - 1));
            (!x.is_zero() && !y.is_zero()).then_some(BadPair { row: *r, x, y })
        })
        .collect()
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug, Serialize)]
pub struct Measure {
    pub degree: usize,
    pub hamming: usize,
    pub bad_pairs: usize,
}

/// The pinned row pair: the first cross pair of minimal Hamming distance
/// between the unshared rows.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Pinned {
    pub r0: Flow,
    pub r1: Flow,
    pub distance: usize,
    pub disagreement: Vec<usize>,
    pub agreement: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PairState {
    pub t0: Table,
    pub t1: Table,
}

impl PairState {
    pub fn new(t0: Table, t1: Table) -> Result<PairState> {
        if !compatible(&t0, &t1) {
            return Err(Error::Incompatible);
        }
        Ok(PairState { t0, t1 })
    }

    pub fn n(&self) -> usize {
        self.t0.n()
    }

    pub fn table(&self, side: Side) -> &Table {
        match side {
            Side::T0 => &self.t0,
            Side::T1 => &self.t1,
        }
    }

    pub fn core(&self, side: Side) -> Vec<Flow> {
        difference(self.table(side).rows(), self.table(side.other()).rows())
    }

    pub fn cores(&self) -> (Vec<Flow>, Vec<Flow>) {
        (self.core(Side::T0), self.core(Side::T1))
    }

    pub fn core_degree(&self) -> usize {
        self.core(Side::T0).len()
    }

    pub fn pin(&self) -> Option<Pinned> {
        let (c0, c1) = self.cores();
        let mut best: Option<(Flow, Flow, u32)> = None;
        for a in &c0 {
            for b in &c1 {
                let d = a.distance(b);
                if best.is_none_or(|(_, _, bd)| d < bd) {
                    best = Some((*a, *b, d));
                }
            }
        }
        let (r0, r1, d) = best?;
        let diff = r0.diff_columns(&r1);
        let (disagreement, agreement) = (0..self.n()).partition(|&i| diff >> i & 1 == 1);
        Some(Pinned {
            r0,
            r1,
            distance: d as usize,
            disagreement,
            agreement,
        })
    }

    /// `(core degree, min cross Hamming distance)`.
    pub fn degree_and_distance(&self) -> (usize, usize) {
        let (c0, c1) = self.cores();
        let k = c0
            .iter()
            .flat_map(|a| c1.iter().map(move |b| a.distance(b)))
            .min()
            .unwrap_or(0);
        (c0.len(), k as usize)
    }

    pub fn measure(&self) -> Measure {
        let (c0, c1) = self.cores();
        let k = c0
            .iter()
            .flat_map(|a| c1.iter().map(move |b| a.distance(b)))
            .min()
            .unwrap_or(0);
        let bad = if c0.is_empty() {
            0
        } else {
            min_bad_pair_columns(self.n(), &c0, &c1).0
        };
        Measure {
            degree: c0.len(),
            hamming: k as usize,
            bad_pairs: bad,
        }
    }

    pub fn apply(&mut self, step: &TraceStep) -> Result<()> {
        let m = step.to_move()?;
        let t = match step.side {
            Side::T0 => &mut self.t0,
            Side::T1 => &mut self.t1,
        };
        *t = apply_move(t, &m)?;
        Ok(())
    }

    pub(crate) fn after(&self, step: &TraceStep) -> Option<PairState> {
        let mut s = self.clone();
        s.apply(step).ok()?;
        Some(s)
    }
}

pub(crate) fn step(side: Side, remove: Vec<Flow>, insert: Vec<Flow>) -> Option<TraceStep> {
    let m = Move::new(remove, insert).ok()?;
    Some(TraceStep {
        side,
        remove: m.removed().to_vec(),
        insert: m.inserted().to_vec(),
    })
}

#[derive(Clone, Debug)]
pub struct ReduceOptions {
    pub max_degree: usize,
    /// Search nodes the fallback may expand over the whole reduction.
    pub budget: usize,
    pub time_limit_s: Option<f64>,
    pub rules: Vec<String>,
}

impl Default for ReduceOptions {
    fn default() -> Self {
        ReduceOptions {
            max_degree: 4,
            budget: 10_000,
            time_limit_s: None,
            rules: RuleRegistry::available()
                .iter()
                .map(|s| s.to_string())
                .collect(),
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    Applied,
    DeadEnd,
    Fallback,
}

#[derive(Clone, Debug, Serialize)]
pub struct CaseEvent {
    pub depth: usize,
    pub n: usize,
    pub rule: String,
    pub label: String,
    pub kind: EventKind,
    pub before: Measure,
    pub steps: usize,
}

/// Dead ends per `(rule, label)`; each was followed by a successful fallback
/// unless the reduction failed.
#[derive(Clone, Debug, Default, Serialize)]
pub struct GapReport {
    pub dead_ends: BTreeMap<String, usize>,
    pub fallback_escapes: usize,
    pub fallback_steps: usize,
}

impl GapReport {
    pub fn from_events(events: &[CaseEvent]) -> GapReport {
        let mut g = GapReport::default();
        g.absorb(events);
        g
    }

    pub fn absorb(&mut self, events: &[CaseEvent]) {
        for e in events {
            match e.kind {
                EventKind::DeadEnd => {
                    *self
                        .dead_ends
                        .entry(format!("{}: {}", e.rule, e.label))
                        .or_default() += 1
                }
                EventKind::Fallback => {
                    self.fallback_escapes += 1;
                    self.fallback_steps += e.steps;
                }
                EventKind::Applied => {}
            }
        }
    }

    pub fn merge(&mut self, other: &GapReport) {
        for (k, v) in &other.dead_ends {
            *self.dead_ends.entry(k.clone()).or_default() += v;
        }
        self.fallback_escapes += other.fallback_escapes;
        self.fallback_steps += other.fallback_steps;
    }

    pub fn total_dead_ends(&self) -> usize {
        self.dead_ends.values().sum()
    }
}

#[derive(Clone, Debug)]
pub struct Reduction {
    pub trace: MoveTrace,
    pub events: Vec<CaseEvent>,
    pub nodes: usize,
}

impl Reduction {
    pub fn gaps(&self) -> GapReport {
        GapReport::from_events(&self.events)
    }
}

#[derive(Debug)]
pub enum ReduceError {
    Invalid(Error),
    Budget {
        partial: MoveTrace,
        diagnostic: String,
        events: Vec<CaseEvent>,
    },
}

impl std::fmt::Display for ReduceError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ReduceError::Invalid(e) => write!(f, "{e}"),
            ReduceError::Budget { diagnostic, .. } => write!(f, "budget exhausted: {diagnostic}"),
        }
    }
}

impl std::error::Error for ReduceError {}

impl From<Error> for ReduceError {
    fn from(e: Error) -> Self {
        ReduceError::Invalid(e)
    }
}

/// Why a reduction stopped early.
#[derive(Debug)]
pub enum Stop {
    Budget(String),
    Error(Error),
}

impl From<Error> for Stop {
    fn from(e: Error) -> Self {
        Stop::Error(e)
    }
}

pub struct Ctx<'a> {
    pub max_degree: usize,
    pub registry: &'a RuleRegistry,
    pub cache: &'a FiberCache,
    budget: usize,
    nodes: usize,
    deadline: Option<Instant>,
    depth: usize,
    events: Vec<CaseEvent>,
}

impl Ctx<'_> {
    /// Charges one search node.
    pub(crate) fn charge(&mut self) -> std::result::Result<(), Stop> {
        self.nodes += 1;
        if self.nodes > self.budget {
            return Err(Stop::Budget(format!("{} search nodes", self.budget)));
        }
        if self.deadline.is_some_and(|d| Instant::now() > d) {
            return Err(Stop::Budget("time limit".into()));
        }
        Ok(())
    }

    fn event(
        &mut self,
        st: &PairState,
        rule: &str,
        label: &str,
        kind: EventKind,
        before: Measure,
        steps: usize,
    ) {
        log::debug!(
            "depth {} n={} {rule} [{label}] {kind:?} at {before:?}",
            self.depth,
            st.n()
        );
        self.events.push(CaseEvent {
            depth: self.depth,
            n: st.n(),
            rule: rule.to_string(),
            label: label.to_string(),
            kind,
            before,
            steps,
        });
    }
}

/// Drives `st` to equal tables, appending steps to `trace`.
pub(crate) fn drive(
    st: &mut PairState,
    ctx: &mut Ctx<'_>,
    trace: &mut MoveTrace,
) -> std::result::Result<(), Stop> {
    let registry = ctx.registry;
    while st.core_degree() > 0 {
        let before = st.measure();
        let mut steps = None;
        for rule in registry.rules() {
            match rule.apply(st, ctx)? {
                RuleOutcome::NotApplicable => continue,
                RuleOutcome::Progress { label, steps: s } => {
                    ctx.event(st, rule.name(), &label, EventKind::Applied, before, s.len());
                    steps = Some(s);
                    break;
                }
                RuleOutcome::DeadEnd(label) => {
                    ctx.event(st, rule.name(), &label, EventKind::DeadEnd, before, 0);
                    break;
                }
            }
        }
        let steps = match steps {
            Some(s) => s,
            None => {
                let s = search::escape(st, ctx)?;
                ctx.event(
                    st,
                    "fallback",
                    "best-first",
                    EventKind::Fallback,
                    before,
                    s.len(),
                );
                s
            }
        };
        for s in &steps {
            if s.remove.len() > ctx.max_degree {
                return Err(Stop::Error(Error::DegreeTooLarge {
                    degree: s.remove.len(),
                    bound: ctx.max_degree,
                }));
            }
            st.apply(s)?;
            trace.steps.push(s.clone());
        }
        if st.core_degree() > 0 && st.measure() >= before {
            return Err(Stop::Error(Error::Precondition(format!(
                "no progress from {before:?} to {:?}",
                st.measure()
            ))));
        }
    }
    Ok(())
}

/// Reduces with the given registry and a shared fiber cache.
pub fn reduce_pair_with(
    t0: &Table,
    t1: &Table,
    opts: &ReduceOptions,
    registry: &RuleRegistry,
    cache: &FiberCache,
) -> std::result::Result<Reduction, ReduceError> {
    if t0.degree() == 0 || t0.n() != t1.n() {
        return Err(
            Error::Precondition("tables must be nonempty with equal column counts".into()).into(),
        );
    }
    if opts.max_degree < 2 {
        return Err(Error::Precondition("move degree bound must be at least 2".into()).into());
    }
    let mut st = PairState::new(t0.clone(), t1.clone())?;
    let mut ctx = Ctx {
        max_degree: opts.max_degree,
        registry,
        cache,
        budget: opts.budget,
        nodes: 0,
        deadline: opts
            .time_limit_s
            .map(|s| Instant::now() + std::time::Duration::from_secs_f64(s)),
        depth: 0,
        events: Vec::new(),
    };
    let mut trace = MoveTrace::new();
    match drive(&mut st, &mut ctx, &mut trace) {
        Ok(()) => {
            trace.validate(t0, t1, opts.max_degree)?;
            Ok(Reduction {
                trace,
                events: ctx.events,
                nodes: ctx.nodes,
            })
        }
        Err(Stop::Budget(why)) => Err(ReduceError::Budget {
            diagnostic: format!(
                "{why}; stopped at {:?} after {} steps",
                st.measure(),
                trace.len()
            ),
            partial: trace,
            events: ctx.events,
        }),
        Err(Stop::Error(e)) => Err(e.into()),
    }
}

/// Reduces `t0` to `t1`; on success the trace has been replayed and
/// validated against the degree bound.
pub fn reduce_pair(
    t0: &Table,
    t1: &Table,
    opts: &ReduceOptions,
) -> std::result::Result<Reduction, ReduceError> {
    let registry = RuleRegistry::from_names(&opts.rules)?;
    reduce_pair_with(t0, t1, opts, &registry, &FiberCache::new())
}

/// A random row of length `n`.
pub fn random_flow<R: Rng>(n: usize, rng: &mut R) -> Flow {
    let mut e: Vec<GroupElem> = (0..n - 1)
        .map(|_| GroupElem::from_code(rng.gen_range(0..4)).unwrap())
        .collect();
    e.push(e.iter().fold(GroupElem::ZERO, |a, &g| a + g));
    Flow::new(&e).expect("balanced by construction")
}

/// A random compatible pair: uniform rows for `t0`, then a random
/// realization of its profile for `t1`.
pub fn random_pair<R: Rng>(n: usize, degree: usize, rng: &mut R) -> Result<(Table, Table)> {
    if degree == 0 || degree > crate::realize::MAX_ROWS {
        return Err(Error::Precondition(format!(
            "degree {degree} outside 1..=6"
        )));
    }
    let rows: Vec<Flow> = (0..degree).map(|_| random_flow(n, rng)).collect();
    let other = Realizer::get(degree)
        .sample(&columns_of_rows(n, &rows), rng)
        .expect("the rows themselves realize their columns");
    Ok((Table::with_len(n, rows)?, Table::with_len(n, other)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn example() -> (Table, Table) {
        (
            Table::parse(&["aa00", "0bb0", "c00c"]).unwrap(),
            Table::parse(&["0000", "cab0", "ab0c"]).unwrap(),
        )
    }

    #[test]
    fn equal_tables_give_empty_trace() {
        let (t0, _) = example();
        let r = reduce_pair(&t0, &t0, &ReduceOptions::default()).unwrap();
        assert!(r.trace.is_empty());
    }

    #[test]
    fn example_is_one_cubic_move() {
        let (t0, t1) = example();
        let r = reduce_pair(&t0, &t1, &ReduceOptions::default()).unwrap();
        assert_eq!(r.trace.len(), 1);
        assert_eq!(r.trace.max_degree(), 3);
    }

    #[test]
    fn incompatible_rejected() {
        let t0 = Table::parse(&["aa00", "0bb0"]).unwrap();
        let t1 = Table::parse(&["0000", "0000"]).unwrap();
        assert!(matches!(
            reduce_pair(&t0, &t1, &ReduceOptions::default()),
            Err(ReduceError::Invalid(Error::Incompatible))
        ));
    }

    #[test]
    fn bad_pairs() {
        let t = Table::parse(&["00cc", "0c0c", "cc00"]).unwrap();
        let bp = find_bad_pairs(&t);
        assert_eq!(bp.len(), 1);
        assert_eq!((bp[0].x, bp[0].y), (GroupElem::GAMMA, GroupElem::GAMMA));
        assert!(find_bad_pairs(&Table::parse(&["aa00", "cc00"]).unwrap()).is_empty());
        assert!(find_bad_pairs(&Table::parse(&["a00a"]).unwrap()).is_empty());
    }

    #[test]
    fn random_pairs_are_compatible() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let (a, b) = random_pair(7, 6, &mut rng).unwrap();
            assert!(compatible(&a, &b));
        }
    }

    #[test]
    fn difference_is_multiset() {
        let f: Vec<Flow> = ["000", "000", "aa0", "bb0"]
            .iter()
            .map(|s| s.parse().unwrap())
            .collect();
        let g: Vec<Flow> = ["000", "bb0", "cc0"]
            .iter()
            .map(|s| s.parse().unwrap())
            .collect();
        let mut f = f;
        f.sort();
        let mut g = g;
        g.sort();
        let d = difference(&f, &g);
        assert_eq!(d.len(), 2);
    }
}
