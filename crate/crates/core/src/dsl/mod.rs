//! Domain specifications: static schema, operations and initial state.

mod build;
pub mod syntax;
mod validate;

use std::collections::BTreeSet;
use std::fmt::Write as _;

pub use syntax::{read_term, ParseError, ParseErrorKind, Pos};
pub use validate::{validate_spec, Diagnostic, Severity};

use crate::state::WorldState;
use crate::term::{Condition, Literal, Term};

/// One clause of the static schema, in source order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StaticClause {
    Entity { name: String, key: String },
    Attribute { owner: String, name: String },
    Relationship { name: String, participants: Vec<String> },
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct StaticSchema {
    pub clauses: Vec<StaticClause>,
}

impl StaticSchema {
    pub fn entities(&self) -> Vec<(&str, &str)> {
        self.clauses
            .iter()
            .filter_map(|c| match c {
                StaticClause::Entity { name, key } => Some((name.as_str(), key.as_str())),
                _ => None,
            })
            .collect()
    }

    pub fn relationships(&self) -> Vec<(&str, &[String])> {
        self.clauses
            .iter()
            .filter_map(|c| match c {
                StaticClause::Relationship { name, participants } => Some((name.as_str(), participants.as_slice())),
                _ => None,
            })
            .collect()
    }

    fn attributes_where(&self, on_relationship: bool) -> Vec<(&str, &str)> {
        let rels: BTreeSet<&str> = self.relationships().into_iter().map(|(n, _)| n).collect();
        self.clauses
            .iter()
            .filter_map(|c| match c {
                StaticClause::Attribute { owner, name } if rels.contains(owner.as_str()) == on_relationship => {
                    Some((owner.as_str(), name.as_str()))
                }
                _ => None,
            })
            .collect()
    }

    /// Attributes owned by entities.
    pub fn attributes(&self) -> Vec<(&str, &str)> {
        self.attributes_where(false)
    }

    pub fn relationship_attributes(&self) -> Vec<(&str, &str)> {
        self.attributes_where(true)
    }

    /// Every name a fact may legitimately use as its predicate.
    pub fn declared_names(&self) -> BTreeSet<&str> {
        self.clauses
            .iter()
            .map(|c| match c {
                StaticClause::Entity { name, .. }
                | StaticClause::Attribute { name, .. }
                | StaticClause::Relationship { name, .. } => name.as_str(),
            })
            .collect()
    }
}

/// An operation of the dynamic schema.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OperationSchema {
    pub name: String,
    pub params: Vec<String>,
    pub preconds: Vec<Condition>,
    /// How many trailing preconditions came from a `:- Body` suffix.
    pub body_extra: usize,
    pub adds: Vec<Literal>,
    pub deletes: Vec<Literal>,
    pub label: char,
}

impl OperationSchema {
    pub fn head(&self) -> Term {
        Term::compound(self.name.clone(), self.params.iter().map(Term::var).collect())
    }

    /// `register(c,v,t,r)`
    pub fn signature(&self) -> String {
        self.head().to_signature()
    }

    pub fn positive_preconds(&self) -> impl Iterator<Item = &Term> {
        self.preconds.iter().filter_map(|c| match c {
            Condition::Lit(l) if l.positive => Some(&l.atom),
            _ => None,
        })
    }

    pub fn negative_preconds(&self) -> impl Iterator<Item = &Term> {
        self.preconds.iter().filter_map(|c| match c {
            Condition::Lit(l) if !l.positive => Some(&l.atom),
            _ => None,
        })
    }

    pub fn add_atoms(&self) -> impl Iterator<Item = &Term> {
        self.adds.iter().map(|l| &l.atom)
    }

    pub fn delete_atoms(&self) -> impl Iterator<Item = &Term> {
        self.deletes.iter().map(|l| &l.atom)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DomainSpec {
    pub static_schema: StaticSchema,
    pub operations: Vec<OperationSchema>,
    /// Labels given explicitly with `label(L, Op)` clauses, in source order.
    pub explicit_labels: Vec<(char, String)>,
    /// Initial facts in source order, without duplicates.
    pub initial_facts: Vec<Term>,
    pub initial: WorldState,
}

impl DomainSpec {
    pub fn operation(&self, name: &str) -> Option<&OperationSchema> {
        self.operations.iter().find(|o| o.name == name)
    }

    pub fn by_label(&self, label: char) -> Option<&OperationSchema> {
        self.operations.iter().find(|o| o.label == label)
    }

    /// Operations sorted by label.
    pub fn labeled(&self) -> Vec<&OperationSchema> {
        let mut ops: Vec<_> = self.operations.iter().collect();
        ops.sort_by_key(|o| o.label);
        ops
    }

    /// Ground argument values of the initial state and of the operation schemas.
    pub fn universe(&self) -> BTreeSet<Term> {
        let mut out = BTreeSet::new();
        for f in self.initial.iter() {
            for a in f.args() {
                ground_values(a, &mut out);
            }
        }
        for op in &self.operations {
            for c in &op.preconds {
                match c {
                    Condition::Lit(l) => l.atom.args().iter().for_each(|a| ground_values(a, &mut out)),
                    Condition::Guard(g) => g.terms().into_iter().for_each(|t| ground_values(t, &mut out)),
                }
            }
            for l in op.adds.iter().chain(&op.deletes) {
                for a in l.atom.args() {
                    ground_values(a, &mut out);
                }
            }
        }
        out
    }

    /// Canonical clause text: static schema, dynamic schema, initial state.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for c in &self.static_schema.clauses {
            let t = match c {
                StaticClause::Entity { name, key } => Term::compound("entity", vec![Term::atom(name), Term::atom(key)]),
                StaticClause::Attribute { owner, name } => {
                    Term::compound("attribute", vec![Term::atom(owner), Term::atom(name)])
                }
                StaticClause::Relationship { name, participants } => Term::compound(
                    "relationship",
                    vec![Term::atom(name), Term::List(participants.iter().map(Term::atom).collect())],
                ),
            };
            let _ = writeln!(out, "{t}.");
        }
        for op in &self.operations {
            let head = op.head();
            let _ = writeln!(out, "operation({head}).");
            if !op.preconds.is_empty() {
                let split = op.preconds.len() - op.body_extra;
                let conj = |cs: &[Condition]| cs.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(", ");
                let _ = write!(out, "precond({head}, ({}))", conj(&op.preconds[..split]));
                if op.body_extra > 0 {
                    let _ = write!(out, " :- {}", conj(&op.preconds[split..]));
                }
                out.push_str(".\n");
            }
            for l in &op.adds {
                let _ = writeln!(out, "added({l}, {head}).");
            }
            for l in &op.deletes {
                let _ = writeln!(out, "deleted({l}, {head}).");
            }
        }
        for (label, name) in &self.explicit_labels {
            let _ = writeln!(out, "label({label}, {}).", Term::atom(name));
        }
        for f in &self.initial_facts {
            let _ = writeln!(out, "{f}.");
        }
        out
    }
}

/// Inserts `t` if ground, then recurses into its arguments.
pub(crate) fn ground_values(t: &Term, out: &mut BTreeSet<Term>) {
    if t.is_ground() {
        out.insert(t.clone());
    }
    for a in t.args() {
        ground_values(a, out);
    }
}

/// Parses a conjunction of literals and guards, e.g. a goal.
pub fn read_conditions(text: &str) -> Result<Vec<Condition>, ParseError> {
    let t = crate::term::name_anonymous(&read_term(text)?, &mut 0);
    build::conditions(&t, Pos { line: 1, col: 1 })
}

/// Parses clause text into a spec.
pub fn parse_spec(text: &str) -> Result<DomainSpec, ParseError> {
    let clauses = syntax::read_clauses(text)?;
    build::build(clauses)
}
