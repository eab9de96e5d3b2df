//! Goal-regression planning with iterative deepening on plan length.
//!
//! Candidate plans come out of a backward search over open goals and are
//! confirmed by forward execution, which also checks guards and negative
//! conditions. Only plans of the shortest achievable length are produced.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};

use crate::dsl::DomainSpec;
use crate::plan::{Goal, OperationInstance, Plan};
use crate::query::for_each_solution;
use crate::simulator::{achieves, executions, ground_over, Instance, HOLDS_TAG};
use crate::state::WorldState;
use crate::term::{eval_guard, Condition, Guard, Literal, Substitution, Term};

pub const DEFAULT_MAX_DEPTH: usize = 8;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PlanSolution {
    pub plan: Plan,
    /// Values of the goal variables in the final state.
    pub bindings: Substitution,
}

/// Plans for `goal` from the spec's initial state.
pub fn plan<'a>(goal: &Goal, spec: &'a DomainSpec, max_depth: usize) -> Plans<'a> {
    plan_from(&spec.initial, goal, spec, max_depth)
}

pub fn plan_from<'a>(start: &WorldState, goal: &Goal, spec: &'a DomainSpec, max_depth: usize) -> Plans<'a> {
    let mut universe = spec.universe();
    for c in &goal.conditions {
        match c {
            Condition::Lit(l) => l.atom.args().iter().for_each(|a| a.constants(&mut universe)),
            Condition::Guard(g) => g.terms().into_iter().for_each(|t| t.constants(&mut universe)),
        }
    }
    Plans {
        spec,
        start: start.clone(),
        goal: goal.clone(),
        goal_vars: goal.vars(),
        max_depth,
        depth: 0,
        buffer: VecDeque::new(),
        seen: HashSet::new(),
        levels: relaxed_levels(start, spec, &universe, max_depth),
        bounds: HashMap::new(),
        universe: universe.into_iter().collect(),
        found: false,
        batch: 1,
        full: false,
    }
}

/// Lazy, finite stream of plans, shortest first.
pub struct Plans<'a> {
    spec: &'a DomainSpec,
    start: WorldState,
    goal: Goal,
    goal_vars: Vec<String>,
    max_depth: usize,
    depth: usize,
    buffer: VecDeque<PlanSolution>,
    seen: HashSet<Vec<OperationInstance>>,
    levels: BTreeMap<(String, usize), Vec<(Term, usize)>>,
    bounds: HashMap<Term, usize>,
    universe: Vec<Term>,
    /// Set once some depth produced a plan; deeper levels are not searched.
    found: bool,
    /// A search pass stops once this many plans are buffered; doubled on each rerun.
    batch: usize,
    full: bool,
}

impl Iterator for Plans<'_> {
    type Item = PlanSolution;

    fn next(&mut self) -> Option<PlanSolution> {
        while self.buffer.is_empty() && self.depth <= self.max_depth {
            let goals = dedup(self.goal.conditions.iter().filter_map(positive).cloned().collect());
            let mut ancestors = Vec::new();
            self.full = false;
            self.regress(goals, Vec::new(), Substitution::new(), self.depth, &mut ancestors);
            self.found |= !self.buffer.is_empty();
            if self.full {
                // Rerun this depth later; plans already seen are skipped.
                self.batch *= 2;
            } else if self.found {
                self.depth = usize::MAX;
            } else {
                self.depth += 1;
            }
        }
        self.buffer.pop_front()
    }
}

fn positive(c: &Condition) -> Option<&Term> {
    match c {
        Condition::Lit(Literal { positive: true, atom }) => Some(atom),
        _ => None,
    }
}

fn dedup(ts: Vec<Term>) -> Vec<Term> {
    let mut out: Vec<Term> = Vec::with_capacity(ts.len());
    for t in ts {
        if !out.contains(&t) {
            out.push(t);
        }
    }
    out
}

fn key(t: &Term) -> Option<(String, usize)> {
    t.key().map(|(n, a)| (n.to_string(), a))
}

/// First layer at which each ground fact appears when deletes and negative
/// conditions are ignored. Every real plan needs at least that many steps.
fn relaxed_levels(
    start: &WorldState,
    spec: &DomainSpec,
    universe: &BTreeSet<Term>,
    max_depth: usize,
) -> BTreeMap<(String, usize), Vec<(Term, usize)>> {
    let universe: Vec<Term> = universe.iter().cloned().collect();
    let relaxed: Vec<(Instance, Vec<Condition>)> = spec
        .operations
        .iter()
        .map(|op| {
            let inst = Instance::new(op, 0);
            let conds = inst
                .preconds
                .iter()
                .filter(|c| !matches!(c, Condition::Lit(Literal { positive: false, .. })))
                .cloned()
                .collect();
            (inst, conds)
        })
        .collect();
    let mut reached = start.clone();
    let mut level: BTreeMap<Term, usize> = start.iter().map(|f| (f.clone(), 0)).collect();
    for k in 1..=max_depth {
        let mut fresh = Vec::new();
        for (inst, conds) in &relaxed {
            for_each_solution(conds, &reached, &Substitution::new(), &mut |sol| {
                let open: Vec<String> = inst.adds.iter().flat_map(|a| sol.apply(a).vars()).collect();
                ground_over(&open, sol, &universe, &mut |g| {
                    for a in &inst.adds {
                        let f = g.apply(a);
                        if f.is_ground() && !reached.contains(&f) {
                            fresh.push(f);
                        }
                    }
                    true
                });
                true
            });
        }
        if fresh.is_empty() {
            break;
        }
        for f in fresh {
            level.entry(f.clone()).or_insert(k);
            reached.insert(f).expect("ground fact");
        }
    }
    let mut by_key: BTreeMap<(String, usize), Vec<(Term, usize)>> = BTreeMap::new();
    for (f, l) in level {
        if let Some(k) = key(&f) {
            by_key.entry(k).or_default().push((f, l));
        }
    }
    by_key
}

impl Plans<'_> {
    /// Steps needed before every goal can hold, by the relaxed levels.
    fn lower_bound(&mut self, goals: &[Term]) -> usize {
        let mut worst = 0;
        for g in goals {
            let b = match self.bounds.get(g) {
                Some(&b) => b,
                None => {
                    let b = key(g)
                        .and_then(|k| self.levels.get(&k))
                        .and_then(|facts| {
                            facts.iter().filter(|(f, _)| Substitution::new().unify(g, f)).map(|(_, l)| *l).min()
                        })
                        .unwrap_or(usize::MAX);
                    self.bounds.insert(g.clone(), b);
                    b
                }
            };
            worst = worst.max(b);
        }
        worst
    }

    /// Regresses `goals` through `remaining` more operations, prepending each to `suffix`.
    fn regress(
        &mut self,
        goals: Vec<Term>,
        suffix: Vec<OperationInstance>,
        s: Substitution,
        remaining: usize,
        ancestors: &mut Vec<Vec<Term>>,
    ) {
        if remaining == 0 {
            self.leaf(&goals, &suffix, &s);
            return;
        }
        let spec = self.spec;
        for gi in (0..goals.len()).rev() {
            for op in &spec.operations {
                if self.full {
                    return;
                }
                let inst = Instance::new(op, remaining);
                let step = OperationInstance::new(op.name.clone(), inst.head.args().to_vec());
                for add in &inst.adds {
                    let mut s1 = s.clone();
                    if !s1.unify(&goals[gi], add) {
                        continue;
                    }
                    let others: Vec<&Term> = goals.iter().enumerate().filter(|(j, _)| *j != gi).map(|(_, g)| g).collect();
                    let mut choices = Vec::new();
                    assign(&others, &inst.adds, s1, Vec::new(), &mut choices);
                    for (s2, kept) in choices {
                        let adds: Vec<Term> = inst.adds.iter().map(|a| s2.apply(a)).collect();
                        let dels: Vec<Term> = inst.deletes.iter().map(|a| s2.apply(a)).collect();
                        let kept: Vec<Term> = kept.iter().map(|g| s2.apply(g)).collect();
                        if kept.iter().any(|g| adds.contains(g) || dels.contains(g)) {
                            continue;
                        }
                        let mut next = kept;
                        next.extend(op.positive_preconds().map(|p| s2.apply(&p.rename(remaining))));
                        let next = dedup(next);
                        if self.lower_bound(&next) > remaining - 1 {
                            continue;
                        }
                        let mut sorted = next.clone();
                        sorted.sort();
                        if ancestors.contains(&sorted) {
                            continue;
                        }
                        let mut new_suffix = Vec::with_capacity(suffix.len() + 1);
                        new_suffix.push(step.clone());
                        new_suffix.extend(suffix.iter().cloned());
                        ancestors.push(sorted);
                        self.regress(next, new_suffix, s2, remaining - 1, ancestors);
                        ancestors.pop();
                    }
                }
            }
        }
    }

    fn leaf(&mut self, goals: &[Term], suffix: &[OperationInstance], s: &Substitution) {
        let conds: Vec<Condition> = goals.iter().map(|g| Condition::Lit(Literal::pos(g.clone()))).collect();
        let mut matches = Vec::new();
        for_each_solution(&conds, &self.start, s, &mut |sol| {
            matches.push(sol);
            true
        });
        let Plans { start, spec, goal, goal_vars, universe, seen, buffer, batch, full, .. } = self;
        for sol in matches {
            let steps: Vec<OperationInstance> = suffix
                .iter()
                .map(|st| OperationInstance::new(st.name.clone(), st.args.iter().map(|a| sol.apply(a)).collect()))
                .collect();
            executions(start, &steps, spec, universe, &goal.conditions, &sol, &mut |ground, _, done| {
                if seen.insert(ground.clone()) {
                    buffer.push_back(PlanSolution { plan: Plan::new(ground), bindings: done.restrict(goal_vars) });
                    *full = buffer.len() >= *batch;
                }
                !*full
            });
            if *full {
                return;
            }
        }
    }
}

/// Each remaining goal either unifies with one of `adds` or is kept open.
fn assign(
    others: &[&Term],
    adds: &[Term],
    s: Substitution,
    kept: Vec<Term>,
    out: &mut Vec<(Substitution, Vec<Term>)>,
) {
    let Some((g, rest)) = others.split_first() else {
        out.push((s, kept));
        return;
    };
    for a in adds {
        let mut s1 = s.clone();
        if s1.unify(g, a) {
            assign(rest, adds, s1, kept.clone(), out);
        }
    }
    let mut kept = kept;
    kept.push((*g).clone());
    assign(rest, adds, s, kept, out);
}

/// True iff `plan` executes from the initial state and ends in a goal state.
pub fn verify_plan(plan: &Plan, goal: &Goal, spec: &DomainSpec) -> bool {
    achieves(&spec.initial, &plan.steps, spec, &goal.conditions)
}

/// Substitutions for the variables of `fact` under which it holds after `situation`,
/// by the initial-state, added-by-last-step and persistence rules.
pub fn holds(fact: &Term, situation: &Plan, spec: &DomainSpec) -> Vec<Substitution> {
    let vars = fact.vars();
    let mut out: Vec<Substitution> = Vec::new();
    for s in holds_with(fact, &situation.steps, spec, &Substitution::new()) {
        let r = s.restrict(&vars);
        if !out.contains(&r) {
            out.push(r);
        }
    }
    out
}

fn holds_with(fact: &Term, steps: &[OperationInstance], spec: &DomainSpec, s: &Substitution) -> Vec<Substitution> {
    let fact = s.apply(fact);
    let Some((last, prefix)) = steps.split_last() else {
        let Some((name, arity)) = fact.key() else { return vec![] };
        return spec
            .initial
            .matching(name, arity)
            .filter_map(|f| {
                let mut s1 = s.clone();
                s1.unify(&fact, f).then_some(s1)
            })
            .collect();
    };
    let Some(op) = spec.operation(&last.name) else { return vec![] };
    if op.params.len() != last.args.len() {
        return vec![];
    }
    let inst = Instance::new(op, HOLDS_TAG + steps.len());
    let mut sh = s.clone();
    if !sh.unify(&inst.head, &last.to_term()) {
        return vec![];
    }
    let mut out = Vec::new();
    for add in &inst.adds {
        let mut s2 = sh.clone();
        if s2.unify(&fact, add) {
            out.extend(preconds_hold(&inst.preconds, prefix, spec, s2));
        }
    }
    let deleted = inst.deletes.iter().any(|d| Substitution::new().unify(&fact, &sh.apply(d)));
    if !deleted {
        out.extend(holds_with(&fact, prefix, spec, s));
    }
    out
}

fn preconds_hold(conds: &[Condition], steps: &[OperationInstance], spec: &DomainSpec, s: Substitution) -> Vec<Substitution> {
    let mut sols = vec![s];
    for c in conds {
        if let Condition::Lit(Literal { positive: true, atom }) = c {
            sols = sols.iter().flat_map(|sol| holds_with(atom, steps, spec, sol)).collect();
        }
    }
    let guards: Vec<&Guard> = conds
        .iter()
        .filter_map(|c| match c {
            Condition::Guard(g) => Some(g),
            _ => None,
        })
        .collect();
    sols.into_iter()
        .filter_map(|mut sol| {
            let mut pending = guards.clone();
            while !pending.is_empty() {
                let before = pending.len();
                let mut still = Vec::new();
                for g in pending {
                    match eval_guard(g, &sol) {
                        Ok(Some(next)) => sol = next,
                        Ok(None) | Err(crate::term::GuardError::NotInteger(_)) => return None,
                        Err(crate::term::GuardError::Deferred(_)) => still.push(g),
                    }
                }
                if still.len() == before {
                    return None;
                }
                pending = still;
            }
            Some(sol)
        })
        .filter(|sol| {
            conds.iter().all(|c| match c {
                Condition::Lit(Literal { positive: false, atom }) => holds_with(atom, steps, spec, sol).is_empty(),
                _ => true,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::{parse_spec, read_term};
    use crate::simulator::simulate;

    fn request() -> DomainSpec {
        parse_spec(include_str!("../examples/request.scspec")).unwrap()
    }

    fn texts(spec: &DomainSpec, goal: &str) -> Vec<String> {
        plan(&Goal::parse(goal).unwrap(), spec, DEFAULT_MAX_DEPTH).map(|p| p.plan.to_string()).collect()
    }

    #[test]
    fn mary_has_four_plans() {
        let spec = request();
        let plans = texts(&spec, "claims('Mary',R), r_value(R,58), payed(['Mary',R],58)");
        assert_eq!(plans.len(), 4, "{plans:#?}");
        assert_eq!(
            plans[0],
            "start=>register('Mary',58,t123,req_t123)=>examine_thoroughly(req_t123,'Mary')=>check_ticket(req_t123,'Mary',t123)=>decide(req_t123,'Mary',58,ok)=>pay_compensation(req_t123,'Mary',58)"
        );
    }

    #[test]
    fn peter_is_rejected_twice() {
        let spec = request();
        let goal = Goal::parse("claims('Peter',R), r_value(R,200), rejected(['Peter',R],M)").unwrap();
        let sols: Vec<_> = plan(&goal, &spec, DEFAULT_MAX_DEPTH).collect();
        assert_eq!(sols.len(), 2);
        for s in &sols {
            assert!(s.plan.steps.iter().all(|st| st.name != "examine_thoroughly"));
            assert_eq!(s.bindings.lookup("M"), Some(Term::atom("limit exceeded")));
        }
    }

    #[test]
    fn goal_true_initially_gives_empty_plan() {
        let spec = request();
        let first = plan(&Goal::parse("client('Mary')").unwrap(), &spec, DEFAULT_MAX_DEPTH).next().unwrap();
        assert!(first.plan.is_empty());
    }

    #[test]
    fn verify_rejects_wrong_examination() {
        let spec = request();
        let goal = Goal::parse("claims('Peter',R), r_value(R,200), rejected(['Peter',R],M)").unwrap();
        let good = Plan::parse("start=>register('Peter',200,t124,req_t124)=>examine_casually(req_t124,'Peter')=>check_ticket(req_t124,'Peter',t124)=>decide(req_t124,'Peter',200,not ok)=>reject_request(req_t124,'Peter',200)", &spec).unwrap();
        assert!(verify_plan(&good, &goal, &spec));
        let bad = Plan::parse(&good.to_string().replace("examine_casually", "examine_thoroughly"), &spec).unwrap();
        assert!(!verify_plan(&bad, &goal, &spec));
        assert!(!verify_plan(&Plan::default(), &Goal::parse("payed(_,_)").unwrap(), &spec));
    }

    #[test]
    fn holds_follows_the_three_rules() {
        let spec = request();
        assert_eq!(holds(&read_term("client('Mary')").unwrap(), &Plan::default(), &spec), vec![Substitution::new()]);
        assert!(holds(&read_term("payed(X,V)").unwrap(), &Plan::default(), &spec).is_empty());
        let p = Plan::parse("start=>register('Mary',58,t123,req_t123)=>examine_casually(req_t123,'Mary')", &spec).unwrap();
        let fact = read_term("examined(req_t123,'Mary')").unwrap();
        assert_eq!(holds(&fact, &p, &spec), vec![Substitution::new()]);
        assert!(simulate(&p, &spec).final_state().contains(&fact));
    }
}
