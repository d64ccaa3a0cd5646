//! First-order mutants of a [`RuleScript`].
//!
//! Five classic operators are applied, each touching exactly one statement:
//! relational-operator replacement, arithmetic-operator replacement,
//! constant replacement (`c` becomes each of `c - 1`, `c + 1`, `0` that
//! differs from `c`), guard negation, and statement deletion. A deleted
//! statement keeps its guard and has its effect replaced by `skip`, so
//! statement ids stay contiguous and the guard can still be reported as
//! executed.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{FormatError, IntegrityError};
use crate::game::script::{parse_statement, Arith, ArithOp, Effect, Guard, Operand, RelOp, RuleStatement};
use crate::game::{RuleScript, StatementId, Trace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Operator {
    Ror,
    Aor,
    Cr,
    Neg,
    Sd,
}

impl Operator {
    pub const ALL: [Operator; 5] = [Operator::Ror, Operator::Aor, Operator::Cr, Operator::Neg, Operator::Sd];

    pub fn name(self) -> &'static str {
        match self {
            Operator::Ror => "ROR",
            Operator::Aor => "AOR",
            Operator::Cr => "CR",
            Operator::Neg => "NEG",
            Operator::Sd => "SD",
        }
    }

    pub fn from_name(s: &str) -> Option<Operator> {
        Operator::ALL.into_iter().find(|o| o.name() == s)
    }
}

impl fmt::Display for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// What a mutant changes inside its target statement. Sites are numbered in
/// textual order (guard first, then effect) among sites of the same sort.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Detail {
    Relational { site: usize, from: RelOp, to: RelOp },
    Arithmetic { site: usize, from: ArithOp, to: ArithOp },
    Constant { site: usize, from: i64, to: i64 },
    Negate,
    Delete { effect: Effect },
}

impl Detail {
    pub fn operator(&self) -> Operator {
        match self {
            Detail::Relational { .. } => Operator::Ror,
            Detail::Arithmetic { .. } => Operator::Aor,
            Detail::Constant { .. } => Operator::Cr,
            Detail::Negate => Operator::Neg,
            Detail::Delete { .. } => Operator::Sd,
        }
    }

    /// Applies the change to a statement, checking the statement still
    /// looks the way the detail expects.
    pub fn apply_to(&self, stmt: &RuleStatement) -> Result<RuleStatement, IntegrityError> {
        let mut out = stmt.clone();
        let stale = || IntegrityError::StaleMutant(format!("`{self}` does not match `{stmt}`"));
        match self {
            Detail::Relational { site, from, to } => {
                let mut sites = rel_sites(&mut out);
                let slot = sites.get_mut(*site).ok_or_else(stale)?;
                if **slot != *from {
                    return Err(stale());
                }
                **slot = *to;
            }
            Detail::Arithmetic { site, from, to } => {
                let mut sites = arith_sites(&mut out);
                let slot = sites.get_mut(*site).ok_or_else(stale)?;
                if **slot != *from {
                    return Err(stale());
                }
                **slot = *to;
            }
            Detail::Constant { site, from, to } => {
                let mut sites = const_sites(&mut out);
                let slot = sites.get_mut(*site).ok_or_else(stale)?;
                if **slot != *from {
                    return Err(stale());
                }
                **slot = *to;
            }
            Detail::Negate => out.guard = Guard::Not(Box::new(out.guard)),
            Detail::Delete { effect } => {
                if out.effect != *effect {
                    return Err(stale());
                }
                out.effect = Effect::Skip;
            }
        }
        Ok(out)
    }

    /// Undoes [`Detail::apply_to`] on an already-mutated statement.
    pub fn revert(&self, stmt: &RuleStatement) -> Result<RuleStatement, IntegrityError> {
        let stale = || IntegrityError::StaleMutant(format!("cannot revert `{self}` on `{stmt}`"));
        match self {
            Detail::Relational { site, from, to } => {
                Detail::Relational { site: *site, from: *to, to: *from }.apply_to(stmt)
            }
            Detail::Arithmetic { site, from, to } => {
                Detail::Arithmetic { site: *site, from: *to, to: *from }.apply_to(stmt)
            }
            Detail::Constant { site, from, to } => Detail::Constant { site: *site, from: *to, to: *from }.apply_to(stmt),
            Detail::Negate => match &stmt.guard {
                Guard::Not(inner) => Ok(RuleStatement { guard: (**inner).clone(), ..stmt.clone() }),
                _ => Err(stale()),
            },
            Detail::Delete { effect } => {
                if stmt.effect != Effect::Skip {
                    return Err(stale());
                }
                Ok(RuleStatement { effect: effect.clone(), ..stmt.clone() })
            }
        }
    }
}

impl fmt::Display for Detail {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Detail::Relational { site, from, to } => write!(f, "rel#{site} {} {}", from.symbol(), to.symbol()),
            Detail::Arithmetic { site, from, to } => write!(f, "arith#{site} {} {}", from.symbol(), to.symbol()),
            Detail::Constant { site, from, to } => write!(f, "const#{site} {from} {to}"),
            Detail::Negate => f.write_str("negate"),
            Detail::Delete { effect } => write!(f, "delete {effect}"),
        }
    }
}

impl FromStr for Detail {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "negate" {
            return Ok(Detail::Negate);
        }
        if let Some(effect) = s.strip_prefix("delete ") {
            let stmt = parse_statement(&format!("0: IF TRUE THEN {effect}"))?;
            return Ok(Detail::Delete { effect: stmt.effect });
        }
        let mut parts = s.split(' ');
        let head = parts.next().unwrap_or_default();
        let (sort, site) = head.split_once('#').ok_or_else(|| format!("bad detail `{s}`"))?;
        let site: usize = site.parse().map_err(|_| format!("bad site in `{s}`"))?;
        let (from, to) = match (parts.next(), parts.next(), parts.next()) {
            (Some(a), Some(b), None) => (a, b),
            _ => return Err(format!("bad detail `{s}`")),
        };
        let bad = || format!("bad detail `{s}`");
        match sort {
            "rel" => Ok(Detail::Relational {
                site,
                from: RelOp::from_symbol(from).ok_or_else(bad)?,
                to: RelOp::from_symbol(to).ok_or_else(bad)?,
            }),
            "arith" => Ok(Detail::Arithmetic {
                site,
                from: ArithOp::from_symbol(from).ok_or_else(bad)?,
                to: ArithOp::from_symbol(to).ok_or_else(bad)?,
            }),
            "const" => Ok(Detail::Constant {
                site,
                from: from.parse().map_err(|_| bad())?,
                to: to.parse().map_err(|_| bad())?,
            }),
            _ => Err(bad()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Mutant {
    /// Position in the list this mutant was returned in.
    pub id: usize,
    /// Position in the full enumeration of the script.
    pub origin: usize,
    pub operator: Operator,
    pub target_statement: StatementId,
    pub detail: Detail,
}

impl Mutant {
    /// `id<TAB>operator<TAB>statement<TAB>detail`
    pub fn descriptor(&self) -> String {
        format!("{}\t{}\t{}\t{}", self.id, self.operator, self.target_statement, self.detail)
    }

    /// Parses a descriptor line. The enumeration index is taken to be the id.
    pub fn parse_descriptor(line: &str) -> Result<Mutant, FormatError> {
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 4 {
            return Err(FormatError::new(1, "expected `id<TAB>operator<TAB>statement<TAB>detail`"));
        }
        let id: usize = f[0].parse().map_err(|_| FormatError::new(1, "bad mutant id"))?;
        let operator = Operator::from_name(f[1]).ok_or_else(|| FormatError::new(1, "unknown operator"))?;
        let target_statement = f[2].parse().map_err(|_| FormatError::new(1, "bad statement id"))?;
        let detail: Detail = f[3].parse().map_err(|e: String| FormatError::new(1, e))?;
        if detail.operator() != operator {
            return Err(FormatError::new(1, "operator does not match detail"));
        }
        Ok(Mutant { id, origin: id, operator, target_statement, detail })
    }
}

// ---------------------------------------------------------------------------
// Site collection

fn guard_rel<'a>(g: &'a mut Guard, out: &mut Vec<&'a mut RelOp>) {
    match g {
        Guard::Cmp(_, op, _) => out.push(op),
        Guard::Not(inner) => guard_rel(inner, out),
        Guard::And(a, b) => {
            guard_rel(a, out);
            guard_rel(b, out);
        }
        Guard::True | Guard::Solid(..) | Guard::Touch(_) => {}
    }
}

fn rel_sites(stmt: &mut RuleStatement) -> Vec<&mut RelOp> {
    let mut out = Vec::new();
    guard_rel(&mut stmt.guard, &mut out);
    out
}

fn arith_arith<'a>(a: &'a mut Arith, out: &mut Vec<&'a mut ArithOp>) {
    if let Some((op, _)) = &mut a.rhs {
        out.push(op);
    }
}

fn guard_arith<'a>(g: &'a mut Guard, out: &mut Vec<&'a mut ArithOp>) {
    match g {
        Guard::Cmp(l, _, r) => {
            arith_arith(l, out);
            arith_arith(r, out);
        }
        Guard::Not(inner) => guard_arith(inner, out),
        Guard::And(a, b) => {
            guard_arith(a, out);
            guard_arith(b, out);
        }
        Guard::True | Guard::Solid(..) | Guard::Touch(_) => {}
    }
}

fn arith_sites(stmt: &mut RuleStatement) -> Vec<&mut ArithOp> {
    let mut out = Vec::new();
    guard_arith(&mut stmt.guard, &mut out);
    if let Effect::Assign(_, a) = &mut stmt.effect {
        arith_arith(a, &mut out);
    }
    out
}

fn operand_consts<'a>(o: &'a mut Operand, out: &mut Vec<&'a mut i64>) {
    match o {
        Operand::Lit(v) | Operand::Rand(v) => out.push(v),
        Operand::Var(_) | Operand::Action(_) => {}
    }
}

fn arith_consts<'a>(a: &'a mut Arith, out: &mut Vec<&'a mut i64>) {
    operand_consts(&mut a.lhs, out);
    if let Some((_, rhs)) = &mut a.rhs {
        operand_consts(rhs, out);
    }
}

fn guard_consts<'a>(g: &'a mut Guard, out: &mut Vec<&'a mut i64>) {
    match g {
        Guard::Cmp(l, _, r) => {
            arith_consts(l, out);
            arith_consts(r, out);
        }
        Guard::Solid(dx, dy) => {
            out.push(dx);
            out.push(dy);
        }
        Guard::Not(inner) => guard_consts(inner, out),
        Guard::And(a, b) => {
            guard_consts(a, out);
            guard_consts(b, out);
        }
        Guard::True | Guard::Touch(_) => {}
    }
}

fn const_sites(stmt: &mut RuleStatement) -> Vec<&mut i64> {
    let mut out = Vec::new();
    guard_consts(&mut stmt.guard, &mut out);
    if let Effect::Assign(_, a) = &mut stmt.effect {
        arith_consts(a, &mut out);
    }
    out
}

/// Replacement values for constant `c`, in order, without duplicates.
pub fn constant_replacements(c: i64) -> Vec<i64> {
    let mut out = Vec::new();
    for v in [c.wrapping_sub(1), c.wrapping_add(1), 0] {
        if v != c && !out.contains(&v) {
            out.push(v);
        }
    }
    out
}

fn details_for(stmt: &RuleStatement) -> Vec<Detail> {
    let mut probe = stmt.clone();
    let rels: Vec<RelOp> = rel_sites(&mut probe).into_iter().map(|r| *r).collect();
    let ariths: Vec<ArithOp> = arith_sites(&mut probe).into_iter().map(|a| *a).collect();
    let consts: Vec<i64> = const_sites(&mut probe).into_iter().map(|c| *c).collect();

    let mut details = Vec::new();
    for (site, from) in rels.into_iter().enumerate() {
        for to in RelOp::ALL {
            if to != from {
                details.push(Detail::Relational { site, from, to });
            }
        }
    }
    for (site, from) in ariths.into_iter().enumerate() {
        for to in ArithOp::ALL {
            if to != from {
                details.push(Detail::Arithmetic { site, from, to });
            }
        }
    }
    for (site, from) in consts.into_iter().enumerate() {
        for to in constant_replacements(from) {
            details.push(Detail::Constant { site, from, to });
        }
    }
    details.push(Detail::Negate);
    if stmt.effect != Effect::Skip {
        details.push(Detail::Delete { effect: stmt.effect.clone() });
    }
    details
}

/// Every first-order mutant, ordered by statement id, then operator, then
/// detail.
pub fn enumerate_mutants(script: &RuleScript) -> Vec<Mutant> {
    let mut out = Vec::new();
    for stmt in script.statements() {
        let original = stmt.to_string();
        let mut seen = BTreeSet::new();
        for detail in details_for(stmt) {
            let mutated = detail.apply_to(stmt).expect("details are derived from the statement").to_string();
            if mutated == original || !seen.insert(mutated) {
                continue;
            }
            let id = out.len();
            out.push(Mutant { id, origin: id, operator: detail.operator(), target_statement: stmt.id, detail });
        }
    }
    out
}

/// A seeded permutation of the enumeration, truncated to `n`. Depends on
/// nothing but its arguments, so two players with the same count get the
/// same list and a smaller count is a prefix of a larger one.
pub fn select_round_mutants(script: &RuleScript, n: usize, round_seed: u64) -> Vec<Mutant> {
    let mut all = enumerate_mutants(script);
    let mut rng = ChaCha8Rng::seed_from_u64(round_seed);
    all.shuffle(&mut rng);
    all.truncate(n);
    for (i, m) in all.iter_mut().enumerate() {
        m.id = i;
    }
    all
}

pub fn apply(script: &RuleScript, m: &Mutant) -> Result<RuleScript, IntegrityError> {
    let stmt = script
        .statement(m.target_statement)
        .ok_or_else(|| IntegrityError::StaleMutant(format!("statement {} does not exist", m.target_statement)))?;
    let replacement = m.detail.apply_to(stmt)?;
    script
        .with_statement(replacement)
        .map_err(|e| IntegrityError::StaleMutant(e.to_string()))
}

/// Inverse of [`apply`] for a script produced by it.
pub fn revert(mutated: &RuleScript, m: &Mutant) -> Result<RuleScript, IntegrityError> {
    let stmt = mutated
        .statement(m.target_statement)
        .ok_or_else(|| IntegrityError::StaleMutant(format!("statement {} does not exist", m.target_statement)))?;
    let original = m.detail.revert(stmt)?;
    mutated
        .with_statement(original)
        .map_err(|e| IntegrityError::StaleMutant(e.to_string()))
}

/// Steps at which the mutated statement executed in a replay on the mutant.
/// For deletions the retained guard is still evaluated, so these are the
/// steps where the deleted statement would have fired.
pub fn mutated_steps(trace: &Trace, m: &Mutant) -> BTreeSet<usize> {
    trace
        .covered
        .iter()
        .enumerate()
        .filter(|(_, c)| c.contains(&m.target_statement))
        .map(|(i, _)| i + 1)
        .collect()
}
