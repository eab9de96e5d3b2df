//! Conjunctive queries over a world state.
//!
//! Positive literals are matched in order, guards run as soon as they are
//! instantiated enough, and negative literals are checked last under the
//! closed-world reading.

use crate::state::WorldState;
use crate::term::{eval_guard, Condition, Guard, GuardError, Substitution, Term};

struct Query<'a> {
    positives: Vec<&'a Term>,
    guards: Vec<&'a Guard>,
    negatives: Vec<&'a Term>,
    /// Accept guards that never become evaluable.
    lenient: bool,
}

impl<'a> Query<'a> {
    fn new(conds: &'a [Condition], lenient: bool) -> Query<'a> {
        let mut q = Query { positives: Vec::new(), guards: Vec::new(), negatives: Vec::new(), lenient };
        for c in conds {
            match c {
                Condition::Lit(l) if l.positive => q.positives.push(&l.atom),
                Condition::Lit(l) => q.negatives.push(&l.atom),
                Condition::Guard(g) => q.guards.push(g),
            }
        }
        q
    }

    /// Runs every pending guard that can be evaluated. `None` on failure.
    fn settle(&self, mut s: Substitution, pending: &[usize], finalize: bool) -> Option<(Substitution, Vec<usize>)> {
        let mut pending = pending.to_vec();
        loop {
            let mut progressed = false;
            let mut still = Vec::new();
            for &gi in &pending {
                match eval_guard(self.guards[gi], &s) {
                    Ok(Some(next)) => {
                        s = next;
                        progressed = true;
                    }
                    Ok(None) | Err(GuardError::NotInteger(_)) => return None,
                    Err(GuardError::Deferred(_)) => still.push(gi),
                }
            }
            pending = still;
            if !progressed || pending.is_empty() {
                break;
            }
        }
        if finalize && !pending.is_empty() && !self.lenient {
            return None;
        }
        Some((s, pending))
    }

    fn negatives_hold(&self, s: &Substitution, state: &WorldState) -> bool {
        self.negatives.iter().all(|n| {
            let pat = s.apply(n);
            if pat.is_ground() {
                return !state.contains(&pat);
            }
            let Some((name, arity)) = pat.key() else { return true };
            let clash = state.matching(name, arity).any(|f| Substitution::new().unify(&pat, f));
            !clash
        })
    }

    fn run(
        &self,
        i: usize,
        s: Substitution,
        pending: &[usize],
        state: &WorldState,
        emit: &mut dyn FnMut(Substitution) -> bool,
    ) -> bool {
        if i == self.positives.len() {
            let Some((s, _)) = self.settle(s, pending, true) else { return true };
            if self.negatives_hold(&s, state) {
                return emit(s);
            }
            return true;
        }
        let pat = s.apply(self.positives[i]);
        let Some((name, arity)) = pat.key() else { return true };
        if pat.is_ground() {
            if state.contains(&pat) {
                return self.run(i + 1, s, pending, state, emit);
            }
            return true;
        }
        for fact in state.matching(name, arity) {
            let mut next = s.clone();
            if !next.unify(&pat, fact) {
                continue;
            }
            let Some((next, still)) = self.settle(next, pending, false) else { continue };
            if !self.run(i + 1, next, &still, state, emit) {
                return false;
            }
        }
        true
    }

    fn start(&self, init: &Substitution, state: &WorldState, emit: &mut dyn FnMut(Substitution) -> bool) {
        let all: Vec<usize> = (0..self.guards.len()).collect();
        if let Some((s, pending)) = self.settle(init.clone(), &all, false) {
            self.run(0, s, &pending, state, emit);
        }
    }
}

/// Calls `emit` for each solution until it returns `false`.
pub fn for_each_solution(
    conds: &[Condition],
    state: &WorldState,
    init: &Substitution,
    emit: &mut dyn FnMut(Substitution) -> bool,
) {
    Query::new(conds, false).start(init, state, emit);
}

pub fn solve(conds: &[Condition], state: &WorldState, init: &Substitution) -> Vec<Substitution> {
    let mut out = Vec::new();
    for_each_solution(conds, state, init, &mut |s| {
        out.push(s);
        true
    });
    out
}

pub fn solve_first(conds: &[Condition], state: &WorldState, init: &Substitution) -> Option<Substitution> {
    let mut out = None;
    for_each_solution(conds, state, init, &mut |s| {
        out = Some(s);
        false
    });
    out
}

fn prefix_satisfiable(conds: &[Condition], state: &WorldState, init: &Substitution) -> bool {
    let mut found = false;
    Query::new(conds, true).start(init, state, &mut |_| {
        found = true;
        false
    });
    found
}

/// Index of the first conjunct whose prefix can no longer be satisfied.
pub fn first_failure(conds: &[Condition], state: &WorldState, init: &Substitution) -> Option<usize> {
    if solve_first(conds, state, init).is_some() {
        return None;
    }
    (1..=conds.len()).find(|&k| !prefix_satisfiable(&conds[..k], state, init)).map(|k| k - 1).or(Some(conds.len().saturating_sub(1)))
}
