//! World states: finite sets of ground facts.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::term::Term;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StateError {
    #[error("fact `{0}` is not ground")]
    NonGround(String),
}

#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct WorldState {
    facts: BTreeSet<Term>,
}

impl WorldState {
    pub fn new() -> WorldState {
        WorldState::default()
    }

    pub fn from_facts<I: IntoIterator<Item = Term>>(facts: I) -> Result<WorldState, StateError> {
        let mut s = WorldState::new();
        for f in facts {
            s.insert(f)?;
        }
        Ok(s)
    }

    pub fn insert(&mut self, fact: Term) -> Result<bool, StateError> {
        if !fact.is_ground() {
            return Err(StateError::NonGround(fact.to_string()));
        }
        Ok(self.facts.insert(fact))
    }

    pub fn remove(&mut self, fact: &Term) -> bool {
        self.facts.remove(fact)
    }

    pub fn contains(&self, fact: &Term) -> bool {
        self.facts.contains(fact)
    }

    pub fn len(&self) -> usize {
        self.facts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Term> {
        self.facts.iter()
    }

    /// Facts with the given predicate name and arity, in term order.
    pub fn matching<'a>(&'a self, name: &'a str, arity: usize) -> Box<dyn Iterator<Item = &'a Term> + 'a> {
        if arity == 0 {
            let probe = Term::Atom(name.to_string());
            return Box::new(self.facts.get(&probe).into_iter());
        }
        let start = Term::Compound(name.to_string(), Vec::new());
        Box::new(
            self.facts
                .range(start..)
                .take_while(move |t| matches!(t, Term::Compound(n, _) if n == name))
                .filter(move |t| t.args().len() == arity),
        )
    }

    /// `(state \ deletes) ∪ adds`, deletes first.
    pub fn apply_effects(&self, adds: &[Term], deletes: &[Term]) -> Result<WorldState, StateError> {
        for t in adds.iter().chain(deletes) {
            if !t.is_ground() {
                return Err(StateError::NonGround(t.to_string()));
            }
        }
        let mut next = self.clone();
        for d in deletes {
            next.facts.remove(d);
        }
        for a in adds {
            next.facts.insert(a.clone());
        }
        Ok(next)
    }
}

impl fmt::Display for WorldState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for fact in &self.facts {
            writeln!(f, "{fact}.")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fact(p: &str, args: &[&str]) -> Term {
        Term::compound(p, args.iter().map(|a| Term::atom(*a)).collect())
    }

    #[test]
    fn identity() {
        let s = WorldState::from_facts([Term::atom("p")]).unwrap();
        assert_eq!(s.apply_effects(&[], &[]).unwrap(), s);
    }

    #[test]
    fn delete_examined() {
        let s = WorldState::from_facts([fact("examined", &["r", "c"])]).unwrap();
        assert!(s.apply_effects(&[], &[fact("examined", &["r", "c"])]).unwrap().is_empty());
    }

    #[test]
    fn delete_then_add() {
        let s = WorldState::from_facts([Term::atom("p")]).unwrap();
        let p = Term::atom("p");
        let both = std::slice::from_ref(&p);
        assert_eq!(s.apply_effects(both, both).unwrap(), s);
    }

    #[test]
    fn non_ground_rejected() {
        let s = WorldState::new();
        let err = s.apply_effects(&[Term::compound("p", vec![Term::var("X")])], &[]).unwrap_err();
        assert!(matches!(err, StateError::NonGround(_)));
        assert!(WorldState::from_facts([Term::var("X")]).is_err());
    }

    #[test]
    fn matching_by_key() {
        let s = WorldState::from_facts([
            fact("a", &["x"]),
            fact("b", &["x"]),
            fact("b", &["x", "y"]),
            fact("b", &["z"]),
            Term::atom("b"),
            fact("c", &["x"]),
        ])
        .unwrap();
        let got: Vec<String> = s.matching("b", 1).map(|t| t.to_string()).collect();
        assert_eq!(got, vec!["b(x)", "b(z)"]);
        assert_eq!(s.matching("b", 0).count(), 1);
        assert_eq!(s.matching("q", 1).count(), 0);
    }

    proptest! {
        #[test]
        fn effects_stay_ground_and_bounded(
            init in prop::collection::btree_set(0u8..6, 0..6),
            adds in prop::collection::vec(0u8..6, 0..4),
            dels in prop::collection::vec(0u8..6, 0..4),
        ) {
            let t = |i: &u8| Term::compound("f", vec![Term::int(*i as i64)]);
            let s = WorldState::from_facts(init.iter().map(t)).unwrap();
            let adds: Vec<Term> = adds.iter().map(t).collect();
            let dels: Vec<Term> = dels.iter().map(t).collect();
            let out = s.apply_effects(&adds, &dels).unwrap();
            prop_assert!(out.iter().all(Term::is_ground));
            prop_assert!(out.len() <= s.len() + adds.len());
            for a in &adds {
                prop_assert!(out.contains(a));
            }
            for d in &dels {
                prop_assert_eq!(out.contains(d), adds.contains(d));
            }
        }
    }
}
