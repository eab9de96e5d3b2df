//! Or/and classification of sibling operations.

use std::collections::HashMap;

use serde::Serialize;

use crate::dsl::OperationSchema;
use crate::term::{CmpOp, Compare, Condition, Guard, Term};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Branching {
    Or,
    And,
}

/// Which rule made two operations mutually exclusive.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub enum OrRule {
    RedundantPostconditions,
    ComplementaryGuards,
    LogicOpposition,
    MutualExclusion,
}

pub fn classify_pair(a: &OperationSchema, b: &OperationSchema) -> Branching {
    if or_rule(a, b).is_some() {
        Branching::Or
    } else {
        Branching::And
    }
}

/// First rule under which `a` and `b` exclude each other, if any.
pub fn or_rule(a: &OperationSchema, b: &OperationSchema) -> Option<OrRule> {
    if shares_key(a.add_atoms(), b.add_atoms()) {
        return Some(OrRule::RedundantPostconditions);
    }
    if complementary_guards(a, b) {
        return Some(OrRule::ComplementaryGuards);
    }
    if shares_key(a.positive_preconds(), b.negative_preconds()) || shares_key(b.positive_preconds(), a.negative_preconds())
    {
        return Some(OrRule::LogicOpposition);
    }
    if cancels(a, b) || cancels(b, a) {
        return Some(OrRule::MutualExclusion);
    }
    None
}

/// `x` needs P while `y` deletes P, or `x` needs not P while `y` adds P.
fn cancels(x: &OperationSchema, y: &OperationSchema) -> bool {
    shares_key(x.positive_preconds(), y.delete_atoms()) || shares_key(x.negative_preconds(), y.add_atoms())
}

pub(crate) fn shares_key<'a>(xs: impl Iterator<Item = &'a Term>, ys: impl Iterator<Item = &'a Term>) -> bool {
    let ys: Vec<(&str, usize)> = ys.filter_map(Term::key).collect();
    xs.filter_map(Term::key).any(|k| ys.contains(&k))
}

fn complementary_guards(a: &OperationSchema, b: &OperationSchema) -> bool {
    let ga = canonical_compares(a);
    let gb = canonical_compares(b);
    ga.iter().any(|x| gb.iter().any(|y| exclusive(x, y)))
}

/// Top-level comparisons with each variable renamed after the place it is first
/// bound: a precondition argument position, else a parameter index.
fn canonical_compares(op: &OperationSchema) -> Vec<Compare> {
    let mut names: HashMap<String, String> = HashMap::new();
    for atom in op.positive_preconds() {
        if let Some((p, n)) = atom.key() {
            for (i, arg) in atom.args().iter().enumerate() {
                locate(arg, &format!("{p}/{n}@{i}"), &mut names);
            }
        }
    }
    for (i, p) in op.params.iter().enumerate() {
        names.entry(p.clone()).or_insert_with(|| format!("#{i}"));
    }
    let rename = |t: &Term| t.map_vars(&|v| Term::var(names.get(v).cloned().unwrap_or_else(|| v.to_string())));
    op.preconds
        .iter()
        .filter_map(|c| match c {
            Condition::Guard(Guard::Compare(c)) => Some(Compare::new(c.op, rename(&c.lhs), rename(&c.rhs))),
            _ => None,
        })
        .collect()
}

fn locate(t: &Term, path: &str, names: &mut HashMap<String, String>) {
    match t {
        Term::Var(v) => {
            names.entry(v.clone()).or_insert_with(|| path.to_string());
        }
        Term::Compound(_, args) | Term::List(args) => {
            for (i, a) in args.iter().enumerate() {
                locate(a, &format!("{path}.{i}"), names);
            }
        }
        _ => {}
    }
}

fn exclusive(x: &Compare, y: &Compare) -> bool {
    use CmpOp::*;
    let same = x.lhs == y.lhs && x.rhs == y.rhs;
    let swapped = x.lhs == y.rhs && x.rhs == y.lhs;
    match (x.op, y.op) {
        (Le, Gt) | (Gt, Le) => same,
        (Eq, Ne) | (Ne, Eq) => same || swapped,
        (Eq, Eq) => {
            let differ = |p: &Term, q: &Term| p.is_ground() && q.is_ground() && p != q;
            (x.lhs == y.lhs && differ(&x.rhs, &y.rhs))
                || (x.rhs == y.rhs && differ(&x.lhs, &y.lhs))
                || (x.lhs == y.rhs && differ(&x.rhs, &y.lhs))
                || (x.rhs == y.lhs && differ(&x.lhs, &y.rhs))
        }
        _ => false,
    }
}
