//! Operation instances, plans and goals, with their text forms.

use std::fmt;

use thiserror::Error;

use crate::dsl::{read_conditions, read_term, DomainSpec, ParseError};
use crate::term::{name_anonymous, Condition, Term};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PlanError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("unknown operation `{0}`")]
    UnknownOperation(String),
    #[error("`{name}` takes {expected} arguments, found {found}")]
    Arity { name: String, expected: usize, found: usize },
    #[error("`{0}` is not an operation step")]
    NotAStep(String),
    #[error("goal must have at least one conjunct")]
    EmptyGoal,
}

/// A step of a plan. Arguments may still contain variables (holes).
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct OperationInstance {
    pub name: String,
    pub args: Vec<Term>,
}

impl OperationInstance {
    pub fn new(name: impl Into<String>, args: Vec<Term>) -> OperationInstance {
        OperationInstance { name: name.into(), args }
    }

    pub fn to_term(&self) -> Term {
        Term::compound(self.name.clone(), self.args.clone())
    }

    pub fn is_ground(&self) -> bool {
        self.args.iter().all(Term::is_ground)
    }

    /// `write`-style rendering, without quotes.
    pub fn to_plain(&self) -> String {
        self.to_term().to_plain()
    }
}

impl fmt::Display for OperationInstance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_term())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Plan {
    pub steps: Vec<OperationInstance>,
}

impl Plan {
    pub fn new(steps: Vec<OperationInstance>) -> Plan {
        Plan { steps }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Reads `start=>op1=>...`; the leading `start` may be omitted.
    pub fn parse(text: &str, spec: &DomainSpec) -> Result<Plan, PlanError> {
        let mut fresh = 0;
        let term = name_anonymous(&read_term(text)?, &mut fresh);
        let mut parts = Vec::new();
        flatten_sequence(&term, &mut parts);
        if parts.first() == Some(&&Term::atom("start")) {
            parts.remove(0);
        }
        let mut steps = Vec::new();
        for p in parts {
            let (name, arity) = match p {
                Term::Atom(_) | Term::Compound(..) => p.key().expect("atom-shaped"),
                other => return Err(PlanError::NotAStep(other.to_string())),
            };
            let op = spec.operation(name).ok_or_else(|| PlanError::UnknownOperation(name.to_string()))?;
            if op.params.len() != arity {
                return Err(PlanError::Arity { name: name.to_string(), expected: op.params.len(), found: arity });
            }
            steps.push(OperationInstance::new(name, p.args().to_vec()));
        }
        Ok(Plan { steps })
    }

    /// Label string of the steps, e.g. `acdeg`.
    pub fn trace(&self, spec: &DomainSpec) -> String {
        self.steps.iter().filter_map(|s| spec.operation(&s.name)).map(|o| o.label).collect()
    }

    pub fn to_plain(&self) -> String {
        let mut out = String::from("start");
        for s in &self.steps {
            out.push_str("=>");
            out.push_str(&s.to_plain());
        }
        out
    }
}

impl fmt::Display for Plan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("start")?;
        for s in &self.steps {
            write!(f, "=>{s}")?;
        }
        Ok(())
    }
}

fn flatten_sequence<'a>(t: &'a Term, out: &mut Vec<&'a Term>) {
    match t {
        Term::Compound(f, args) if f == "=>" && args.len() == 2 => {
            flatten_sequence(&args[0], out);
            flatten_sequence(&args[1], out);
        }
        other => out.push(other),
    }
}

/// A conjunction to be made true, possibly with shared variables.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Goal {
    pub conditions: Vec<Condition>,
}

impl Goal {
    pub fn new(conditions: Vec<Condition>) -> Result<Goal, PlanError> {
        if conditions.is_empty() {
            return Err(PlanError::EmptyGoal);
        }
        Ok(Goal { conditions })
    }

    pub fn parse(text: &str) -> Result<Goal, PlanError> {
        Goal::new(read_conditions(text)?)
    }

    /// Goal variables in first-occurrence order.
    pub fn vars(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for c in &self.conditions {
            for v in c.vars() {
                if !out.contains(&v) {
                    out.push(v);
                }
            }
        }
        out
    }
}

impl fmt::Display for Goal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.conditions.iter().map(|c| c.to_string()).collect();
        f.write_str(&parts.join(", "))
    }
}
