//! Cohen's kappa between the first and second annotator.
//!
//! Only rounds 1 and 2 are tallied; the tie-breaker never enters the table.
//! The overall figure is computed on the pooled table, not averaged across
//! relations.
//!
//! ```
//! use freda_core::agreement::{kappa, ContingencyTable};
//!
//! let t = ContingencyTable { a: 40, b: 10, c: 10, d: 40 };
//! assert!((kappa(&t).unwrap() - 0.6).abs() < 1e-12);
//! ```

use std::collections::BTreeMap;
use std::ops::Add;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{Decision, SentenceState, Status};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum AgreementError {
    #[error("contingency table is empty")]
    EmptyTable,
}

/// 2x2 table of (first annotator, second annotator) decisions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContingencyTable {
    /// both yes
    pub a: u64,
    /// first yes, second no
    pub b: u64,
    /// first no, second yes
    pub c: u64,
    /// both no
    pub d: u64,
}

impl ContingencyTable {
    pub fn total(&self) -> u64 {
        self.a + self.b + self.c + self.d
    }

    pub fn record(&mut self, first: Decision, second: Decision) {
        use Decision::*;
        match (first, second) {
            (Expresses, Expresses) => self.a += 1,
            (Expresses, NotExpresses) => self.b += 1,
            (NotExpresses, Expresses) => self.c += 1,
            (NotExpresses, NotExpresses) => self.d += 1,
        }
    }
}

impl Add for ContingencyTable {
    type Output = ContingencyTable;

    fn add(self, o: ContingencyTable) -> ContingencyTable {
        ContingencyTable {
            a: self.a + o.a,
            b: self.b + o.b,
            c: self.c + o.c,
            d: self.d + o.d,
        }
    }
}

/// Cohen's kappa of a 2x2 table. When chance agreement is total
/// (`p_e = 1`) the result is 1 for perfect observed agreement and 0
/// otherwise.
pub fn kappa(t: &ContingencyTable) -> Result<f64, AgreementError> {
    let n = t.total() as u128;
    if n == 0 {
        return Err(AgreementError::EmptyTable);
    }
    let (a, b, c, d) = (t.a as u128, t.b as u128, t.c as u128, t.d as u128);
    // scaled by n^2: p_o -> n(a+d), p_e -> (a+b)(a+c) + (c+d)(b+d)
    let observed = n * (a + d);
    let expected = (a + b) * (a + c) + (c + d) * (b + d);
    let total = n * n;
    if expected == total {
        return Ok(if observed == total { 1.0 } else { 0.0 });
    }
    let num = observed as f64 - expected as f64;
    let den = (total - expected) as f64;
    Ok(num / den)
}

/// Tallies rounds 1 and 2 for one relation over undeleted states that have
/// both.
pub fn build_contingency<'a>(
    states: impl IntoIterator<Item = &'a SentenceState>,
    relation_name: &str,
) -> ContingencyTable {
    let mut t = ContingencyTable::default();
    for s in states {
        if s.relation_name != relation_name || s.status == Status::Deleted {
            continue;
        }
        if let (Some(first), Some(second)) = (s.response(1), s.response(2)) {
            t.record(first.decision, second.decision);
        }
    }
    t
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TableKappa {
    pub table: ContingencyTable,
    /// `None` for an empty table.
    pub kappa: Option<f64>,
}

impl TableKappa {
    fn new(table: ContingencyTable) -> Self {
        TableKappa {
            table,
            kappa: kappa(&table).ok(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub per_relation: BTreeMap<String, TableKappa>,
    pub overall: TableKappa,
}

/// Per-relation and pooled agreement over every relation seen in `states`,
/// plus any listed in `relations`.
pub fn agreement_report<'a, I>(states: I, relations: &[String]) -> AgreementReport
where
    I: IntoIterator<Item = &'a SentenceState>,
    I::IntoIter: Clone,
{
    let states = states.into_iter();
    let mut names: Vec<&str> = states.clone().map(|s| s.relation_name.as_str()).collect();
    names.extend(relations.iter().map(String::as_str));
    names.sort_unstable();
    names.dedup();

    let per_relation: BTreeMap<String, TableKappa> = names
        .iter()
        .map(|r| (r.to_string(), TableKappa::new(build_contingency(states.clone(), r))))
        .collect();
    let pooled = per_relation
        .values()
        .fold(ContingencyTable::default(), |acc, t| acc + t.table);
    AgreementReport {
        per_relation,
        overall: TableKappa::new(pooled),
    }
}

impl std::fmt::Display for AgreementReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let k = |t: &TableKappa| t.kappa.map_or_else(|| "n/a".into(), |k| format!("{k:.2}"));
        writeln!(f, "{:<28}{:>6}{:>6}{:>6}{:>6}{:>8}", "relation", "a", "b", "c", "d", "kappa")?;
        let rows = self
            .per_relation
            .iter()
            .map(|(n, t)| (n.as_str(), t))
            .chain(std::iter::once(("overall", &self.overall)));
        for (name, t) in rows {
            writeln!(
                f,
                "{:<28}{:>6}{:>6}{:>6}{:>6}{:>8}",
                name,
                t.table.a,
                t.table.b,
                t.table.c,
                t.table.d,
                k(t)
            )?;
        }
        Ok(())
    }
}
