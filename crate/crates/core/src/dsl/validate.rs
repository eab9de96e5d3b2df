use std::fmt;

use serde::Serialize;

use super::DomainSpec;
use crate::term::Condition;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub operation: Option<String>,
}

impl Diagnostic {
    fn error(op: &str, message: String) -> Diagnostic {
        Diagnostic { severity: Severity::Error, message, operation: Some(op.to_string()) }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        match &self.operation {
            Some(op) => write!(f, "{sev}: {op}: {}", self.message),
            None => write!(f, "{sev}: {}", self.message),
        }
    }
}

/// Checks effect variables, effect polarity, schema references and initial facts.
pub fn validate_spec(spec: &DomainSpec) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let schema = &spec.static_schema;
    let names = schema.declared_names();

    let mut owners_seen = Vec::new();
    for c in &schema.clauses {
        use super::StaticClause::*;
        match c {
            Entity { name, .. } | Relationship { name, .. } => {
                if owners_seen.contains(name) {
                    out.push(Diagnostic {
                        severity: Severity::Error,
                        message: format!("`{name}` declared twice in the static schema"),
                        operation: None,
                    });
                }
                owners_seen.push(name.clone());
            }
            Attribute { .. } => {}
        }
    }
    let entity_names: Vec<&str> = schema.entities().into_iter().map(|(n, _)| n).collect();
    for c in &schema.clauses {
        use super::StaticClause::*;
        match c {
            Attribute { owner, name } if !owners_seen.contains(owner) => out.push(Diagnostic {
                severity: Severity::Error,
                message: format!("attribute `{name}` refers to undeclared owner `{owner}`"),
                operation: None,
            }),
            Relationship { name, participants } => {
                for p in participants {
                    if !entity_names.contains(&p.as_str()) {
                        out.push(Diagnostic {
                            severity: Severity::Error,
                            message: format!("relationship `{name}` refers to undeclared entity `{p}`"),
                            operation: None,
                        });
                    }
                }
            }
            _ => {}
        }
    }

    for op in &spec.operations {
        let mut bound: Vec<String> = op.params.clone();
        for c in &op.preconds {
            match c {
                Condition::Lit(l) if l.positive => bound.extend(l.atom.vars()),
                Condition::Guard(g) => bound.extend(g.binding_targets()),
                Condition::Lit(_) => {}
            }
        }
        for (kind, effects) in [("added", &op.adds), ("deleted", &op.deletes)] {
            for l in effects {
                if !l.positive {
                    out.push(Diagnostic::error(&op.name, format!("negative literal `{l}` in {kind} effects")));
                }
                for v in l.atom.vars() {
                    if !bound.contains(&v) {
                        out.push(Diagnostic::error(
                            &op.name,
                            format!("variable `{v}` in {kind} fact `{}` is not bound", l.atom),
                        ));
                    }
                }
            }
        }
    }

    for fact in &spec.initial_facts {
        let Some((name, _)) = fact.key() else { continue };
        if !names.contains(name) {
            out.push(Diagnostic {
                severity: Severity::Warning,
                message: format!("initial fact `{fact}` matches no declared entity, attribute or relationship"),
                operation: None,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_spec;

    #[test]
    fn request_spec_has_no_errors() {
        let spec = parse_spec(include_str!("../../examples/request.scspec")).unwrap();
        let diags = validate_spec(&spec);
        assert!(diags.iter().all(|d| d.severity == Severity::Warning), "{diags:?}");
        // limit/1 belongs to no entity
        assert_eq!(diags.len(), 1);
    }

    #[test]
    fn trial_spec_is_clean() {
        let spec = parse_spec(include_str!("../../examples/trial.scspec")).unwrap();
        assert_eq!(validate_spec(&spec), vec![]);
    }

    #[test]
    fn unbound_effect_variable() {
        let spec = parse_spec("operation(o(X)).\nprecond(o(X), (p(X))).\nadded(q(Y), o(X)).").unwrap();
        let diags = validate_spec(&spec);
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].severity, Severity::Error);
    }

    #[test]
    fn unknown_initial_predicate_warns() {
        let spec = parse_spec("entity(thing, tn).\nthing(a).\nunknown_pred(x).").unwrap();
        let diags = validate_spec(&spec);
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].severity, Severity::Warning);
    }

    #[test]
    fn negative_effect_is_error() {
        let spec = parse_spec("operation(o).\nadded(not p, o).").unwrap();
        let diags = validate_spec(&spec);
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].severity, Severity::Error);
    }

    #[test]
    fn dangling_schema_references() {
        let spec = parse_spec("attribute(ghost, a).\nrelationship(r, [nobody]).").unwrap();
        assert_eq!(validate_spec(&spec).len(), 2);
    }
}
