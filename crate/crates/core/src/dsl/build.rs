//! Interpretation of read clauses as a domain specification.

use std::collections::{BTreeMap, BTreeSet};

use super::syntax::{Clause, ParseError, ParseErrorKind, Pos};
use super::{DomainSpec, OperationSchema, StaticClause};
use crate::term::{CmpOp, Compare, Condition, Guard, Literal, Term};

fn malformed(pos: Pos, msg: impl Into<String>) -> ParseError {
    ParseError::new(pos, ParseErrorKind::Malformed(msg.into()))
}

fn atom_name(t: &Term, pos: Pos, what: &str) -> Result<String, ParseError> {
    match t {
        Term::Atom(a) => Ok(a.clone()),
        other => Err(malformed(pos, format!("{what} must be an atom, found `{other}`"))),
    }
}

fn flatten_conj(t: &Term, out: &mut Vec<Term>) {
    match t {
        Term::Compound(f, args) if f == "," && args.len() == 2 => {
            flatten_conj(&args[0], out);
            flatten_conj(&args[1], out);
        }
        Term::Atom(a) if a == "true" => {}
        other => out.push(other.clone()),
    }
}

fn cmp_op(name: &str) -> Option<CmpOp> {
    Some(match name {
        "<=" => CmpOp::Le,
        ">" => CmpOp::Gt,
        "=" => CmpOp::Eq,
        "!=" => CmpOp::Ne,
        _ => return None,
    })
}

fn as_compare(t: &Term) -> Option<Compare> {
    match t {
        Term::Compound(f, args) if args.len() == 2 => {
            cmp_op(f).map(|op| Compare::new(op, args[0].clone(), args[1].clone()))
        }
        _ => None,
    }
}

fn negate(op: CmpOp) -> CmpOp {
    match op {
        CmpOp::Le => CmpOp::Gt,
        CmpOp::Gt => CmpOp::Le,
        CmpOp::Eq => CmpOp::Ne,
        CmpOp::Ne => CmpOp::Eq,
    }
}

/// Converts one conjunct of a precondition or goal.
pub(crate) fn condition(t: &Term, pos: Pos) -> Result<Condition, ParseError> {
    if let Some(c) = as_compare(t) {
        return Ok(Condition::Guard(Guard::Compare(c)));
    }
    match t {
        Term::Compound(f, args) if f == "not" && args.len() == 1 => {
            if let Some(mut c) = as_compare(&args[0]) {
                c.op = negate(c.op);
                return Ok(Condition::Guard(Guard::Compare(c)));
            }
            match &args[0] {
                a @ (Term::Atom(_) | Term::Compound(..)) => Ok(Condition::Lit(Literal::neg(a.clone()))),
                other => Err(malformed(pos, format!("cannot negate `{other}`"))),
            }
        }
        Term::Compound(f, args) if f == "if" && args.len() == 3 => {
            let cond = as_compare(&args[0])
                .ok_or_else(|| malformed(pos, format!("`if` condition must be a comparison, found `{}`", args[0])))?;
            let bind = |b: &Term| {
                as_compare(b)
                    .filter(|c| c.op == CmpOp::Eq && c.lhs.is_var())
                    .ok_or_else(|| malformed(pos, format!("`if` branch must bind one variable, found `{b}`")))
            };
            Ok(Condition::Guard(Guard::Conditional { cond, then_bind: bind(&args[1])?, else_bind: bind(&args[2])? }))
        }
        Term::Compound(f, args) if f == "atom_concat" && args.len() == 3 => Ok(Condition::Guard(Guard::NameConcat {
            prefix: args[0].clone(),
            suffix: args[1].clone(),
            result: args[2].clone(),
        })),
        Term::Atom(_) | Term::Compound(..) => Ok(Condition::Lit(Literal::pos(t.clone()))),
        other => Err(malformed(pos, format!("`{other}` is not a condition"))),
    }
}

pub(crate) fn conditions(t: &Term, pos: Pos) -> Result<Vec<Condition>, ParseError> {
    let mut parts = Vec::new();
    flatten_conj(t, &mut parts);
    parts.iter().map(|p| condition(p, pos)).collect()
}

/// Renaming from a clause's head variables onto the declared parameters.
fn head_renaming(head: &Term, op: &OperationSchema, pos: Pos) -> Result<BTreeMap<String, String>, ParseError> {
    let mut map = BTreeMap::new();
    for (i, a) in head.args().iter().enumerate() {
        let Term::Var(v) = a else {
            return Err(malformed(pos, format!("head arguments of `{}` must be variables", op.name)));
        };
        if map.insert(v.clone(), op.params[i].clone()).is_some() {
            return Err(malformed(pos, format!("repeated variable `{v}` in head of `{}`", op.name)));
        }
    }
    Ok(map)
}

fn rename_term(t: &Term, map: &BTreeMap<String, String>, params: &[String]) -> Term {
    t.map_vars(&|v| match map.get(v) {
        Some(p) => Term::var(p.clone()),
        None if params.iter().any(|p| p == v) => Term::var(format!("{v}_local")),
        None => Term::var(v),
    })
}

pub(crate) fn build(clauses: Vec<Clause>) -> Result<DomainSpec, ParseError> {
    let mut spec = DomainSpec::default();
    let mut ops: Vec<OperationSchema> = Vec::new();
    let mut index: BTreeMap<(String, usize), usize> = BTreeMap::new();

    for c in &clauses {
        if let Term::Compound(f, args) = &c.term {
            if f == "operation" && args.len() == 1 {
                let head = &args[0];
                let Some((name, arity)) = head.key() else {
                    return Err(malformed(c.pos, format!("`{head}` is not an operation head")));
                };
                if index.keys().any(|(n, _)| n == name) {
                    return Err(ParseError::new(c.pos, ParseErrorKind::DuplicateOperation(name.to_string())));
                }
                let mut params = Vec::new();
                for a in head.args() {
                    match a {
                        Term::Var(v) if !params.contains(v) => params.push(v.clone()),
                        _ => return Err(malformed(c.pos, format!("parameters of `{name}` must be distinct variables"))),
                    }
                }
                index.insert((name.to_string(), arity), ops.len());
                ops.push(OperationSchema {
                    name: name.to_string(),
                    params,
                    preconds: Vec::new(),
                    body_extra: 0,
                    adds: Vec::new(),
                    deletes: Vec::new(),
                    label: '?',
                });
            }
        }
    }

    let lookup = |head: &Term, pos: Pos| -> Result<usize, ParseError> {
        let Some((name, arity)) = head.key() else {
            return Err(malformed(pos, format!("`{head}` is not an operation head")));
        };
        index
            .get(&(name.to_string(), arity))
            .copied()
            .ok_or_else(|| ParseError::new(pos, ParseErrorKind::UndeclaredOperation(format!("{name}/{arity}"))))
    };

    let mut seen_facts = BTreeSet::new();
    let mut labels_used = BTreeSet::new();
    let mut precond_seen = BTreeSet::new();
    for c in &clauses {
        let pos = c.pos;
        let (rule, extra) = match &c.term {
            Term::Compound(f, args) if f == ":-" && args.len() == 2 => (&args[0], Some(&args[1])),
            t => (t, None),
        };
        if extra.is_some() && rule.key() != Some(("precond", 2)) {
            return Err(malformed(pos, "only `precond` clauses may have a body"));
        }
        match rule.key() {
            Some(("operation", 1)) => {}
            Some(("precond", 2)) => {
                let args = rule.args();
                let i = lookup(&args[0], pos)?;
                if !precond_seen.insert(i) {
                    return Err(malformed(pos, format!("second precond clause for `{}`", ops[i].name)));
                }
                let map = head_renaming(&args[0], &ops[i], pos)?;
                let params = ops[i].params.clone();
                let mut conds = conditions(&rename_term(&args[1], &map, &params), pos)?;
                let mut body_extra = 0;
                if let Some(extra) = extra {
                    let more = conditions(&rename_term(extra, &map, &params), pos)?;
                    body_extra = more.len();
                    conds.extend(more);
                }
                ops[i].preconds = conds;
                ops[i].body_extra = body_extra;
            }
            Some((kind @ ("added" | "deleted"), 2)) => {
                let args = rule.args();
                let i = lookup(&args[1], pos)?;
                let map = head_renaming(&args[1], &ops[i], pos)?;
                let params = ops[i].params.clone();
                let fact = rename_term(&args[0], &map, &params);
                let lit = match &fact {
                    Term::Compound(f, a) if f == "not" && a.len() == 1 => Literal::neg(a[0].clone()),
                    Term::Atom(_) | Term::Compound(..) => Literal::pos(fact.clone()),
                    other => return Err(malformed(pos, format!("`{other}` is not a fact"))),
                };
                if kind == "added" {
                    ops[i].adds.push(lit);
                } else {
                    ops[i].deletes.push(lit);
                }
            }
            Some(("label", 2)) => {
                let args = rule.args();
                let l = atom_name(&args[0], pos, "label")?;
                let mut chars = l.chars();
                let (Some(ch), None) = (chars.next(), chars.next()) else {
                    return Err(malformed(pos, format!("label `{l}` must be a single letter")));
                };
                let name = atom_name(&args[1], pos, "labelled operation")?;
                let Some(&i) = index.iter().find(|((n, _), _)| *n == name).map(|(_, i)| i) else {
                    return Err(ParseError::new(pos, ParseErrorKind::UndeclaredOperation(name)));
                };
                if ops[i].label != '?' || !labels_used.insert(ch) {
                    return Err(malformed(pos, format!("label `{ch}` or operation `{name}` labelled twice")));
                }
                ops[i].label = ch;
                spec.explicit_labels.push((ch, name));
            }
            Some(("entity", 2)) => {
                let args = rule.args();
                spec.static_schema.clauses.push(StaticClause::Entity {
                    name: atom_name(&args[0], pos, "entity name")?,
                    key: atom_name(&args[1], pos, "entity key")?,
                });
            }
            Some(("attribute", 2)) => {
                let args = rule.args();
                spec.static_schema.clauses.push(StaticClause::Attribute {
                    owner: atom_name(&args[0], pos, "attribute owner")?,
                    name: atom_name(&args[1], pos, "attribute name")?,
                });
            }
            Some(("relationship", 2)) => {
                let args = rule.args();
                let name = atom_name(&args[0], pos, "relationship name")?;
                let Term::List(items) = &args[1] else {
                    return Err(malformed(pos, "relationship participants must be a list"));
                };
                let participants = items.iter().map(|t| atom_name(t, pos, "participant")).collect::<Result<_, _>>()?;
                spec.static_schema.clauses.push(StaticClause::Relationship { name, participants });
            }
            Some((name @ ("operation" | "precond" | "added" | "deleted" | "label"), n)) => {
                return Err(malformed(pos, format!("`{name}/{n}` has the wrong number of arguments")));
            }
            Some((",", 2) | ("not", 1)) => {
                return Err(malformed(pos, format!("`{rule}` is not a fact")));
            }
            Some(_) => {
                if !rule.is_ground() {
                    return Err(ParseError::new(pos, ParseErrorKind::NonGroundFact(rule.to_string())));
                }
                if seen_facts.insert(rule.clone()) {
                    spec.initial_facts.push(rule.clone());
                    spec.initial.insert(rule.clone()).expect("ground fact");
                }
            }
            None => return Err(malformed(pos, format!("`{rule}` is not a clause"))),
        }
    }

    let mut next = b'a';
    for op in ops.iter_mut() {
        if op.label == '?' {
            while labels_used.contains(&(next as char)) {
                next += 1;
            }
            op.label = next as char;
            labels_used.insert(next as char);
        }
    }
    spec.operations = ops;
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::super::parse_spec;
    use super::*;

    #[test]
    fn undeclared_operation() {
        let e = parse_spec("added(p(X), foo(X)).").unwrap_err();
        assert!(matches!(e.kind, ParseErrorKind::UndeclaredOperation(_)));
        assert_eq!((e.line, e.col), (1, 1));
    }

    #[test]
    fn duplicate_operation() {
        let e = parse_spec("operation(a(X)).\n operation(a(Y)).").unwrap_err();
        assert!(matches!(e.kind, ParseErrorKind::DuplicateOperation(_)));
        assert_eq!((e.line, e.col), (2, 2));
    }

    #[test]
    fn non_ground_fact() {
        let e = parse_spec("p(X).").unwrap_err();
        assert!(matches!(e.kind, ParseErrorKind::NonGroundFact(_)));
    }

    #[test]
    fn forward_references_and_head_renaming() {
        let spec = parse_spec("added(q(B), op(B)).\nprecond(op(Z), (p(Z), r(Z, W))).\noperation(op(A)).").unwrap();
        let op = &spec.operations[0];
        assert_eq!(op.adds[0].atom.to_string(), "q(A)");
        assert_eq!(op.preconds[1].to_string(), "r(A,W)");
    }

    #[test]
    fn guards_and_negations() {
        let spec = parse_spec(
            "operation(o(V, D)).\nprecond(o(V, D), (not p(V), not (V = k), V > 3, if(V <= L, D = a, D = b), atom_concat(x_, V, N))) :- lim(L).",
        )
        .unwrap();
        let op = &spec.operations[0];
        assert!(matches!(&op.preconds[0], Condition::Lit(l) if !l.positive));
        assert!(matches!(&op.preconds[1], Condition::Guard(Guard::Compare(c)) if c.op == CmpOp::Ne));
        assert!(matches!(&op.preconds[2], Condition::Guard(Guard::Compare(c)) if c.op == CmpOp::Gt));
        assert!(matches!(&op.preconds[3], Condition::Guard(Guard::Conditional { .. })));
        assert!(matches!(&op.preconds[4], Condition::Guard(Guard::NameConcat { .. })));
        assert_eq!(op.body_extra, 1);
    }

    #[test]
    fn default_labels_skip_explicit_ones() {
        let spec = parse_spec("operation(x).\noperation(y).\noperation(z).\nlabel(a, z).").unwrap();
        let labels: Vec<char> = spec.operations.iter().map(|o| o.label).collect();
        assert_eq!(labels, ['b', 'c', 'a']);
    }

    #[test]
    fn bad_if_branch() {
        assert!(parse_spec("operation(o(D)).\nprecond(o(D), (if(1 <= 2, a, D = b))).").is_err());
    }
}
