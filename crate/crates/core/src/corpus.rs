//! The corpus of explicit move identities and its verification.
//!
//! Each record quotes a move on the touched columns only. Rows are written
//! over `0abc`, with `?` for an unconstrained entry (the i-th `?` on the left
//! equals the i-th `?` on the right) and `[expr]` for a sum of named
//! variables and constants. Short rows are padded with zeros and a balancing
//! column is appended when some row does not sum to zero.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group::{Flow, GroupElem};
use crate::moves::Move;

pub const FIXTURE: &str = include_str!("../data/move_corpus.jsonl");

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CorpusRecord {
    #[serde(rename = "ref")]
    pub reference: String,
    #[serde(default)]
    pub tag: String,
    pub lhs: Vec<String>,
    pub rhs: Vec<String>,
    pub wildcards: usize,
    #[serde(default, rename = "where")]
    pub constraints: Vec<String>,
    /// `"erratum"` marks an identity that is inconsistent as printed.
    #[serde(default)]
    pub status: Option<String>,
    #[serde(default)]
    pub note: Option<String>,
}

impl CorpusRecord {
    pub fn is_erratum(&self) -> bool {
        self.status.as_deref() == Some("erratum")
    }
}

/// A sum of variables (by index) and a constant.
#[derive(Clone, Debug, PartialEq)]
struct Expr {
    vars: Vec<usize>,
    constant: GroupElem,
}

impl Expr {
    fn eval(&self, values: &[GroupElem]) -> GroupElem {
        self.vars
            .iter()
            .fold(self.constant, |acc, &v| acc + values[v])
    }
}

struct Parser {
    names: BTreeMap<String, usize>,
    lhs_wild: Vec<usize>,
    rhs_wild: Vec<usize>,
}

impl Parser {
    fn var(&mut self, name: &str) -> usize {
        let next = self.names.len();
        *self.names.entry(name.to_string()).or_insert(next)
    }

    fn expr(&mut self, text: &str) -> Result<Expr> {
        let mut e = Expr {
            vars: Vec::new(),
            constant: GroupElem::ZERO,
        };
        for term in text.split('+').map(str::trim) {
            let mut chars = term.chars();
            match (chars.next(), chars.next()) {
                (Some(c), None) if GroupElem::from_symbol(c).is_ok() => {
                    e.constant = e.constant + GroupElem::from_symbol(c)?;
                }
                (Some(c), _) if c.is_ascii_alphabetic() => {
                    let v = self.var(term);
                    e.vars.push(v);
                }
                _ => return Err(Error::Parse(format!("bad term {term:?}"))),
            }
        }
        Ok(e)
    }

    fn row(&mut self, text: &str, left: bool) -> Result<Vec<Expr>> {
        let mut out = Vec::new();
        let mut chars = text.chars();
        while let Some(c) = chars.next() {
            let e = match c {
                '?' => {
                    let side = if left { &self.lhs_wild } else { &self.rhs_wild };
                    let k = side.len();
                    let v = if left {
                        self.var(&format!("?{k}"))
                    } else {
                        *self
                            .names
                            .get(&format!("?{k}"))
                            .ok_or_else(|| Error::Parse("unmatched ? on the right".into()))?
                    };
                    if left {
                        self.lhs_wild.push(v);
                    } else {
                        self.rhs_wild.push(v);
                    }
                    Expr {
                        vars: vec![v],
                        constant: GroupElem::ZERO,
                    }
                }
                '[' => {
                    let inner: String = chars.by_ref().take_while(|&c| c != ']').collect();
                    self.expr(&inner)?
                }
                c => Expr {
                    vars: Vec::new(),
                    constant: GroupElem::from_symbol(c)?,
                },
            };
            out.push(e);
        }
        Ok(out)
    }
}

/// A parsed identity ready for instantiation.
struct Identity {
    lhs: Vec<Vec<Expr>>,
    rhs: Vec<Vec<Expr>>,
    vars: usize,
    constraints: Vec<(Expr, Expr, bool)>,
}

fn parse_identity(rec: &CorpusRecord) -> Result<Identity> {
    let mut p = Parser {
        names: BTreeMap::new(),
        lhs_wild: Vec::new(),
        rhs_wild: Vec::new(),
    };
    let lhs = rec
        .lhs
        .iter()
        .map(|r| p.row(r, true))
        .collect::<Result<Vec<_>>>()?;
    let rhs = rec
        .rhs
        .iter()
        .map(|r| p.row(r, false))
        .collect::<Result<Vec<_>>>()?;
    if p.lhs_wild.len() != p.rhs_wild.len() {
        return Err(Error::Parse("wildcard counts differ between sides".into()));
    }
    if p.lhs_wild.len() != rec.wildcards {
        return Err(Error::Parse(format!(
            "declared {} wildcards, found {}",
            rec.wildcards,
            p.lhs_wild.len()
        )));
    }
    let mut constraints = Vec::new();
    for c in &rec.constraints {
        let (a, b, eq) = if let Some((a, b)) = c.split_once("!=") {
            (a, b, false)
        } else if let Some((a, b)) = c.split_once('=') {
            (a, b, true)
        } else {
            return Err(Error::Parse(format!("bad constraint {c:?}")));
        };
        constraints.push((p.expr(a)?, p.expr(b)?, eq));
    }
    Ok(Identity {
        lhs,
        rhs,
        vars: p.names.len(),
        constraints,
    })
}

/// Embeds both sides as flows: zero padding, then a balancing column if needed.
pub fn embed(lhs: &[Vec<GroupElem>], rhs: &[Vec<GroupElem>]) -> Result<(Vec<Flow>, Vec<Flow>)> {
    let width = lhs.iter().chain(rhs).map(Vec::len).max().unwrap_or(0);
    let needs_balance = lhs
        .iter()
        .chain(rhs)
        .any(|r| !r.iter().fold(GroupElem::ZERO, |a, &g| a + g).is_zero());
    let build = |rows: &[Vec<GroupElem>]| -> Result<Vec<Flow>> {
        rows.iter()
            .map(|r| {
                let mut e = r.clone();
                e.resize(width, GroupElem::ZERO);
                if needs_balance {
                    e.push(e.iter().fold(GroupElem::ZERO, |a, &g| a + g));
                }
                Flow::new(&e)
            })
            .collect()
    };
    Ok((build(lhs)?, build(rhs)?))
}

#[derive(Clone, Debug, Serialize)]
pub struct EntryReport {
    #[serde(rename = "ref")]
    pub reference: String,
    pub tag: String,
    pub erratum: bool,
    pub instances: usize,
    pub failed_instances: usize,
    pub degree: usize,
    /// The identity held for every instance.
    pub holds: bool,
    /// `holds` for regular entries, `!holds` for errata.
    pub ok: bool,
    pub reason: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct CorpusReport {
    pub entries: Vec<EntryReport>,
}

impl CorpusReport {
    pub fn all_ok(&self) -> bool {
        self.entries.iter().all(|e| e.ok)
    }

    /// Identities expected to hold.
    pub fn identities(&self) -> usize {
        self.entries.iter().filter(|e| !e.erratum).count()
    }

    pub fn passing_instances(&self) -> usize {
        self.entries
            .iter()
            .filter(|e| !e.erratum)
            .map(|e| e.instances - e.failed_instances)
            .sum()
    }
}

pub fn load_records(text: &str) -> Result<Vec<CorpusRecord>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| Error::Parse(e.to_string())))
        .collect()
}

/// Checks one record over every admissible instantiation.
pub fn check_record(rec: &CorpusRecord, max_degree: usize) -> EntryReport {
    let mut rep = EntryReport {
        reference: rec.reference.clone(),
        tag: rec.tag.clone(),
        erratum: rec.is_erratum(),
        instances: 0,
        failed_instances: 0,
        degree: rec.lhs.len().max(rec.rhs.len()),
        holds: false,
        ok: false,
        reason: None,
    };
    let id = match parse_identity(rec) {
        Ok(id) => id,
        Err(e) => {
            rep.reason = Some(e.to_string());
            rep.ok = rep.erratum;
            return rep;
        }
    };
    if id.lhs.len() != id.rhs.len() {
        rep.reason = Some(format!(
            "{} rows on the left, {} on the right",
            id.lhs.len(),
            id.rhs.len()
        ));
        rep.ok = rep.erratum;
        return rep;
    }
    if rep.degree > max_degree {
        rep.reason = Some(format!("degree {} exceeds {}", rep.degree, max_degree));
        rep.ok = rep.erratum;
        return rep;
    }
    let total = 4usize.pow(id.vars as u32);
    for code in 0..total {
        let values: Vec<GroupElem> = (0..id.vars)
            .map(|v| GroupElem::from_code(((code >> (2 * v)) & 3) as u8).unwrap())
            .collect();
        let admissible = id
            .constraints
            .iter()
            .all(|(a, b, eq)| (a.eval(&values) == b.eval(&values)) == *eq);
        if !admissible {
            continue;
        }
        rep.instances += 1;
        let side = |rows: &[Vec<Expr>]| -> Vec<Vec<GroupElem>> {
            rows.iter()
                .map(|r| r.iter().map(|e| e.eval(&values)).collect())
                .collect()
        };
        let outcome = embed(&side(&id.lhs), &side(&id.rhs)).and_then(|(l, r)| Move::new(l, r));
        if let Err(e) = outcome {
            rep.failed_instances += 1;
            rep.reason.get_or_insert_with(|| e.to_string());
        }
    }
    rep.holds = rep.instances > 0 && rep.failed_instances == 0;
    rep.ok = rep.holds != rep.erratum;
    rep
}

pub fn verify_records(records: &[CorpusRecord]) -> CorpusReport {
    CorpusReport {
        entries: records.iter().map(|r| check_record(r, 4)).collect(),
    }
}

/// Verifies the bundled fixture.
pub fn verify_corpus() -> CorpusReport {
    verify_records(&load_records(FIXTURE).expect("bundled corpus parses"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_corpus() {
        let rep = verify_corpus();
        for e in &rep.entries {
            assert!(e.ok, "{} ({}): {:?}", e.reference, e.tag, e.reason);
        }
        assert!(rep.identities() >= 25);
    }

    #[test]
    fn example_and_quartic() {
        let rep = verify_corpus();
        let ex = rep
            .entries
            .iter()
            .find(|e| e.reference.starts_with("αα + 0β + γ0"))
            .unwrap();
        assert!(ex.holds);
        assert_eq!(ex.degree, 3);
        let q = rep
            .entries
            .iter()
            .find(|e| e.tag == "Case VIII quartic")
            .unwrap();
        assert!(q.holds);
        assert_eq!(q.degree, 4);
    }

    #[test]
    fn corrupted_symbol_fails() {
        let mut rec = load_records(FIXTURE).unwrap().remove(0);
        rec.rhs[1] = "cb".into();
        let rep = check_record(&rec, 4);
        assert!(!rep.holds);
        assert!(rep.reason.unwrap().contains("compatible"));
    }

    #[test]
    fn wildcards_expand_fully() {
        let recs = load_records(FIXTURE).unwrap();
        for r in recs.iter().filter(|r| r.wildcards > 0 && !r.is_erratum()) {
            let rep = check_record(r, 4);
            assert!(
                rep.instances >= 4usize.pow(r.wildcards as u32),
                "{}",
                r.reference
            );
            assert_eq!(rep.failed_instances, 0);
        }
    }
}
