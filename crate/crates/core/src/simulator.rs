//! Forward execution of plans and repair of faulty plans.

use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::dsl::{DomainSpec, OperationSchema};
use crate::plan::{Goal, OperationInstance, Plan};
use crate::planner;
use crate::query::{first_failure, for_each_solution, solve_first};
use crate::state::WorldState;
use crate::term::{Condition, Substitution, Term};

/// An operation schema with its variables renamed apart.
pub(crate) struct Instance {
    pub head: Term,
    pub preconds: Vec<Condition>,
    pub adds: Vec<Term>,
    pub deletes: Vec<Term>,
}

impl Instance {
    pub fn new(op: &OperationSchema, tag: usize) -> Instance {
        let r = |t: &Term| t.rename(tag);
        Instance {
            head: r(&op.head()),
            preconds: op.preconds.iter().map(|c| c.map_terms(&r)).collect(),
            adds: op.add_atoms().map(r).collect(),
            deletes: op.delete_atoms().map(r).collect(),
        }
    }

    /// Effects under `s`, or the first effect that is still not ground.
    pub fn effects(&self, s: &Substitution) -> Result<(Vec<Term>, Vec<Term>), Term> {
        let ground = |ts: &[Term]| -> Result<Vec<Term>, Term> {
            ts.iter().map(|t| s.apply(t)).map(|t| if t.is_ground() { Ok(t) } else { Err(t) }).collect()
        };
        Ok((ground(&self.adds)?, ground(&self.deletes)?))
    }
}

/// Renaming tag bases. Regression in the planner uses tags below all of these.
pub(crate) const EXEC_TAG: usize = 1 << 20;
pub(crate) const VERIFY_TAG: usize = 2 << 20;
pub(crate) const HOLDS_TAG: usize = 3 << 20;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FailureReason {
    /// The conjunct that can no longer be satisfied, instantiated.
    Precondition(Condition),
    UnknownOperation(String),
    Arity { expected: usize, found: usize },
    /// An effect is still not ground after the preconditions were solved.
    Uninstantiated(Term),
}

impl fmt::Display for FailureReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FailureReason::Precondition(c) => write!(f, "precondition `{c}` does not hold"),
            FailureReason::UnknownOperation(n) => write!(f, "unknown operation `{n}`"),
            FailureReason::Arity { expected, found } => write!(f, "expected {expected} arguments, found {found}"),
            FailureReason::Uninstantiated(t) => write!(f, "effect `{t}` is not sufficiently instantiated"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FailedStep {
    /// 1-based position in the plan.
    pub index: usize,
    pub step: OperationInstance,
    pub reason: FailureReason,
    /// The step's preconditions instantiated as far as the plan allows.
    pub required: Vec<Condition>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Outcome {
    Valid,
    Failed(FailedStep),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SimulationResult {
    pub outcome: Outcome,
    /// Initial state followed by the state after each executed step.
    pub trajectory: Vec<WorldState>,
    /// The plan with holes replaced by the values bound during execution.
    pub bound: Plan,
}

impl SimulationResult {
    pub fn is_valid(&self) -> bool {
        self.outcome == Outcome::Valid
    }

    pub fn final_state(&self) -> &WorldState {
        self.trajectory.last().expect("trajectory holds the initial state")
    }
}

pub fn simulate(plan: &Plan, spec: &DomainSpec) -> SimulationResult {
    simulate_from(&spec.initial, plan, spec)
}

/// Executes `plan` from `start`, taking the first solution of each precondition.
pub fn simulate_from(start: &WorldState, plan: &Plan, spec: &DomainSpec) -> SimulationResult {
    let mut s = Substitution::new();
    let mut state = start.clone();
    let mut trajectory = vec![state.clone()];
    let mut outcome = Outcome::Valid;
    for (i, step) in plan.steps.iter().enumerate() {
        let fail = |reason, required| {
            Outcome::Failed(FailedStep { index: i + 1, step: step.clone(), reason, required })
        };
        let Some(op) = spec.operation(&step.name) else {
            outcome = fail(FailureReason::UnknownOperation(step.name.clone()), vec![]);
            break;
        };
        if op.params.len() != step.args.len() {
            outcome = fail(FailureReason::Arity { expected: op.params.len(), found: step.args.len() }, vec![]);
            break;
        }
        let inst = Instance::new(op, EXEC_TAG + i);
        let mut entry = s.clone();
        let unified = entry.unify(&inst.head, &step.to_term());
        debug_assert!(unified, "fresh head unifies with any instance");
        let required: Vec<Condition> = inst.preconds.iter().map(|c| c.resolve(&entry)).collect();
        let Some(next) = solve_first(&inst.preconds, &state, &entry) else {
            let idx = first_failure(&inst.preconds, &state, &entry).unwrap_or(0);
            let failed = required.get(idx).cloned().unwrap_or_else(|| inst.preconds[idx].resolve(&entry));
            outcome = fail(FailureReason::Precondition(failed), required);
            break;
        };
        let (adds, deletes) = match inst.effects(&next) {
            Ok(e) => e,
            Err(t) => {
                outcome = fail(FailureReason::Uninstantiated(t), required);
                break;
            }
        };
        state = state.apply_effects(&adds, &deletes).expect("effects are ground");
        trajectory.push(state.clone());
        s = next;
    }
    let bound = Plan::new(
        plan.steps.iter().map(|st| OperationInstance::new(st.name.clone(), st.args.iter().map(|a| s.apply(a)).collect())).collect(),
    );
    SimulationResult { outcome, trajectory, bound }
}

/// Enumerates every ground execution of `steps` from `start` whose final state
/// satisfies `goal`. Arguments left open by the preconditions range over `universe`.
/// `emit` receives the ground plan and the substitution after the goal check;
/// returning `false` stops the enumeration.
pub(crate) fn executions(
    start: &WorldState,
    steps: &[OperationInstance],
    spec: &DomainSpec,
    universe: &[Term],
    goal: &[Condition],
    init: &Substitution,
    emit: &mut dyn FnMut(Vec<OperationInstance>, &WorldState, Substitution) -> bool,
) {
    #[allow(clippy::too_many_arguments)]
    fn go(
        i: usize,
        state: &WorldState,
        s: Substitution,
        steps: &[OperationInstance],
        spec: &DomainSpec,
        universe: &[Term],
        goal: &[Condition],
        emit: &mut dyn FnMut(Vec<OperationInstance>, &WorldState, Substitution) -> bool,
    ) -> bool {
        if i == steps.len() {
            let Some(done) = solve_first(goal, state, &s) else { return true };
            let ground = steps
                .iter()
                .map(|st| OperationInstance::new(st.name.clone(), st.args.iter().map(|a| done.apply(a)).collect()))
                .collect();
            return emit(ground, state, done);
        }
        let step = &steps[i];
        let Some(op) = spec.operation(&step.name) else { return true };
        if op.params.len() != step.args.len() {
            return true;
        }
        let inst = Instance::new(op, VERIFY_TAG + i);
        let mut entry = s;
        if !entry.unify(&inst.head, &step.to_term()) {
            return true;
        }
        let mut keep_going = true;
        for_each_solution(&inst.preconds, state, &entry, &mut |sol| {
            let open: Vec<String> = step.args.iter().flat_map(|a| sol.apply(a).vars()).collect();
            keep_going = ground_over(&open, sol, universe, &mut |g| {
                let Ok((adds, deletes)) = inst.effects(&g) else { return true };
                let next = state.apply_effects(&adds, &deletes).expect("effects are ground");
                go(i + 1, &next, g, steps, spec, universe, goal, emit)
            });
            keep_going
        });
        keep_going
    }
    go(0, start, init.clone(), steps, spec, universe, goal, emit);
}

/// Binds each of `vars` to every universe value in turn.
pub(crate) fn ground_over(
    vars: &[String],
    s: Substitution,
    universe: &[Term],
    k: &mut dyn FnMut(Substitution) -> bool,
) -> bool {
    let Some((v, rest)) = vars.split_first() else { return k(s) };
    if s.lookup(v).is_some_and(|t| t.is_ground()) {
        return ground_over(rest, s, universe, k);
    }
    for value in universe {
        let mut next = s.clone();
        if next.unify(&Term::var(v.clone()), value) && !ground_over(rest, next, universe, k) {
            return false;
        }
    }
    true
}

/// Every ground operation instance enabled in `state`, paired with the state it leads to.
/// Arguments the preconditions leave open range over `universe`.
pub fn successors(state: &WorldState, spec: &DomainSpec, universe: &[Term]) -> Vec<(OperationInstance, WorldState)> {
    let mut out = Vec::new();
    for op in &spec.operations {
        let inst = Instance::new(op, EXEC_TAG);
        for_each_solution(&inst.preconds, state, &Substitution::new(), &mut |sol| {
            let open = sol.apply(&inst.head).vars();
            ground_over(&open, sol, universe, &mut |g| {
                if let Ok((adds, deletes)) = inst.effects(&g) {
                    let args = g.apply(&inst.head).args().to_vec();
                    let next = state.apply_effects(&adds, &deletes).expect("effects are ground");
                    out.push((OperationInstance::new(op.name.clone(), args), next));
                }
                true
            });
            true
        });
    }
    out
}

/// Whether some execution of the ground `steps` reaches a state satisfying `goal`.
pub(crate) fn achieves(start: &WorldState, steps: &[OperationInstance], spec: &DomainSpec, goal: &[Condition]) -> bool {
    let mut found = false;
    executions(start, steps, spec, &[], goal, &Substitution::new(), &mut |_, _, _| {
        found = true;
        false
    });
    found
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum RepairEntry {
    NotEnabled {
        #[serde(serialize_with = "as_text")]
        step: OperationInstance,
        #[serde(serialize_with = "all_as_text")]
        inserted: Vec<OperationInstance>,
    },
    Redundant {
        #[serde(serialize_with = "as_text")]
        step: OperationInstance,
    },
}

fn as_text<S: serde::Serializer>(op: &OperationInstance, ser: S) -> Result<S::Ok, S::Error> {
    ser.serialize_str(&op.to_string())
}

fn all_as_text<S: serde::Serializer>(ops: &[OperationInstance], ser: S) -> Result<S::Ok, S::Error> {
    ser.collect_seq(ops.iter().map(|o| o.to_string()))
}

/// One correction: the plan before, the defect found and the plan after.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RepairRound {
    pub given: Plan,
    pub entry: RepairEntry,
    pub corrected: Plan,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RepairLog {
    pub rounds: Vec<RepairRound>,
}

impl RepairLog {
    pub fn entries(&self) -> Vec<&RepairEntry> {
        self.rounds.iter().map(|r| &r.entry).collect()
    }

    /// Transcript lines: `given plan:`, the defect, `plan with correction:`, then `Valid`.
    pub fn transcript(&self) -> String {
        let mut out = String::new();
        for r in &self.rounds {
            out.push_str("given plan:\n");
            out.push_str(&r.given.to_plain());
            out.push('\n');
            match &r.entry {
                RepairEntry::NotEnabled { step, .. } => out.push_str(&format!("not enabled: {}\n", step.to_plain())),
                RepairEntry::Redundant { step } => out.push_str(&format!("redundant: {}\n", step.to_plain())),
            }
            out.push_str("plan with correction:\n");
            out.push_str(&r.corrected.to_plain());
            out.push('\n');
        }
        out.push_str("Valid\n");
        out
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RepairError {
    #[error("unrepairable at: {}", .step.to_plain())]
    Unrepairable { index: usize, step: OperationInstance, reason: FailureReason, log: RepairLog },
    #[error("repair did not converge within {rounds} rounds")]
    NonTerminating { rounds: usize, log: RepairLog },
}

pub const DEFAULT_MAX_ROUNDS: usize = 10;
/// Longest sub-plan spliced in front of a step that is not enabled.
pub const REPAIR_DEPTH: usize = 4;

/// Repeatedly simulates `plan`, inserting missing steps and dropping redundant ones.
pub fn check_fix(plan: &Plan, spec: &DomainSpec, max_rounds: usize) -> Result<(Plan, RepairLog), RepairError> {
    let mut log = RepairLog::default();
    let mut current = plan.clone();
    loop {
        let sim = simulate(&current, spec);
        let entry_plan;
        let entry = match &sim.outcome {
            Outcome::Failed(failed) => {
                let unrepairable = || RepairError::Unrepairable {
                    index: failed.index,
                    step: failed.step.clone(),
                    reason: failed.reason.clone(),
                    log: log.clone(),
                };
                if !matches!(failed.reason, FailureReason::Precondition(_)) {
                    return Err(unrepairable());
                }
                let state = sim.final_state();
                let goal = Goal { conditions: failed.required.clone() };
                let Some(fix) = planner::plan_from(state, &goal, spec, REPAIR_DEPTH).find(|p| !p.plan.is_empty())
                else {
                    return Err(unrepairable());
                };
                let at = failed.index - 1;
                let mut steps = current.steps.clone();
                steps.splice(at..at, fix.plan.steps.iter().cloned());
                entry_plan = simulate(&Plan::new(steps), spec).bound;
                RepairEntry::NotEnabled { step: failed.step.clone(), inserted: fix.plan.steps }
            }
            Outcome::Valid => {
                let Some(i) = redundant_step(&sim.bound, sim.final_state(), spec) else {
                    return Ok((sim.bound, log));
                };
                let mut steps = sim.bound.steps.clone();
                let step = steps.remove(i);
                entry_plan = Plan::new(steps);
                RepairEntry::Redundant { step }
            }
        };
        if log.rounds.len() == max_rounds {
            return Err(RepairError::NonTerminating { rounds: max_rounds, log });
        }
        log.rounds.push(RepairRound { given: current, entry, corrected: entry_plan.clone() });
        current = entry_plan;
    }
}

/// Earliest step whose removal keeps the plan valid with the same final state.
fn redundant_step(plan: &Plan, final_state: &WorldState, spec: &DomainSpec) -> Option<usize> {
    (0..plan.len()).find(|&i| {
        let mut steps = plan.steps.clone();
        steps.remove(i);
        let sim = simulate(&Plan::new(steps), spec);
        sim.is_valid() && sim.final_state() == final_state
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_spec;

    fn request() -> DomainSpec {
        parse_spec(include_str!("../examples/request.scspec")).unwrap()
    }

    const MARY: &str = "start=>register('Mary',58,t123,req_t123)=>examine_thoroughly(req_t123,'Mary')=>check_ticket(req_t123,'Mary',t123)=>decide(req_t123,'Mary',58,ok)=>pay_compensation(req_t123,'Mary',58)";

    #[test]
    fn mary_plan_is_valid() {
        let spec = request();
        let sim = simulate(&Plan::parse(MARY, &spec).unwrap(), &spec);
        assert!(sim.is_valid());
        assert_eq!(sim.trajectory.len(), 6);
        assert!(sim.final_state().contains(&crate::dsl::read_term("payed(['Mary',req_t123],58)").unwrap()));
    }

    #[test]
    fn empty_plan_keeps_initial_state() {
        let spec = request();
        let sim = simulate(&Plan::default(), &spec);
        assert!(sim.is_valid());
        assert_eq!(sim.trajectory, vec![spec.initial.clone()]);
    }

    #[test]
    fn missing_examination_is_reported() {
        let spec = request();
        let plan = Plan::parse("start=>register('Peter',200,t124,req_t124)=>decide(req_t124,'Peter',200,D)", &spec).unwrap();
        let sim = simulate(&plan, &spec);
        let Outcome::Failed(f) = sim.outcome else { panic!("expected failure") };
        assert_eq!(f.index, 2);
        assert_eq!(f.reason.to_string(), "precondition `examined(req_t124,'Peter')` does not hold");
        assert_eq!(sim.trajectory.len(), 2);
    }

    #[test]
    fn holes_are_bound_by_guards() {
        let spec = request();
        let plan = Plan::parse(
            "start=>register('Peter',200,t124,R)=>examine_casually(R,'Peter')=>check_ticket(R,'Peter',t124)=>decide(R,'Peter',200,_506)",
            &spec,
        )
        .unwrap();
        let sim = simulate(&plan, &spec);
        assert!(sim.is_valid());
        assert_eq!(sim.bound.steps[3].to_string(), "decide(req_t124,'Peter',200,not ok)");
    }

    #[test]
    fn peter_repair_matches_transcript() {
        let spec = request();
        let given = Plan::parse(
            "start=>register('Peter',200,t124,req_t124)=>decide(req_t124,'Peter',200,_506)=>examine_casually(req_t124,'Peter')=>reject_request(req_t124,'Peter',200)",
            &spec,
        )
        .unwrap();
        let (fixed, log) = check_fix(&given, &spec, DEFAULT_MAX_ROUNDS).unwrap();
        assert_eq!(
            fixed.to_plain(),
            "start=>register(Peter,200,t124,req_t124)=>examine_casually(req_t124,Peter)=>check_ticket(req_t124,Peter,t124)=>decide(req_t124,Peter,200,not ok)=>reject_request(req_t124,Peter,200)"
        );
        let expected = "\
given plan:
start=>register(Peter,200,t124,req_t124)=>decide(req_t124,Peter,200,_506)=>examine_casually(req_t124,Peter)=>reject_request(req_t124,Peter,200)
not enabled: decide(req_t124,Peter,200,_506)
plan with correction:
start=>register(Peter,200,t124,req_t124)=>examine_casually(req_t124,Peter)=>check_ticket(req_t124,Peter,t124)=>decide(req_t124,Peter,200,not ok)=>examine_casually(req_t124,Peter)=>reject_request(req_t124,Peter,200)
given plan:
start=>register(Peter,200,t124,req_t124)=>examine_casually(req_t124,Peter)=>check_ticket(req_t124,Peter,t124)=>decide(req_t124,Peter,200,not ok)=>examine_casually(req_t124,Peter)=>reject_request(req_t124,Peter,200)
redundant: examine_casually(req_t124,Peter)
plan with correction:
start=>register(Peter,200,t124,req_t124)=>examine_casually(req_t124,Peter)=>check_ticket(req_t124,Peter,t124)=>decide(req_t124,Peter,200,not ok)=>reject_request(req_t124,Peter,200)
Valid
";
        assert_eq!(log.transcript(), expected);
    }

    #[test]
    fn valid_plan_is_unchanged() {
        let spec = request();
        let plan = Plan::parse(MARY, &spec).unwrap();
        let (fixed, log) = check_fix(&plan, &spec, DEFAULT_MAX_ROUNDS).unwrap();
        assert_eq!(fixed, plan);
        assert!(log.rounds.is_empty());
        assert_eq!(log.transcript(), "Valid\n");
    }

    #[test]
    fn duplicate_check_is_removed() {
        let spec = request();
        let text = MARY.replace(
            "=>check_ticket(req_t123,'Mary',t123)",
            "=>check_ticket(req_t123,'Mary',t123)=>check_ticket(req_t123,'Mary',t123)",
        );
        let (fixed, log) = check_fix(&Plan::parse(&text, &spec).unwrap(), &spec, DEFAULT_MAX_ROUNDS).unwrap();
        assert_eq!(fixed, Plan::parse(MARY, &spec).unwrap());
        assert_eq!(log.rounds.len(), 1);
        assert!(matches!(log.rounds[0].entry, RepairEntry::Redundant { .. }));
    }

    #[test]
    fn only_registration_is_enabled_initially() {
        let spec = request();
        let universe: Vec<Term> = spec.universe().into_iter().collect();
        let next = successors(&spec.initial, &spec, &universe);
        let names: Vec<String> = next.iter().map(|(op, _)| op.to_string()).collect();
        assert!(!names.is_empty());
        assert!(names.iter().all(|n| n.starts_with("register(")), "{names:?}");
        assert!(names.contains(&"register('Mary',58,t123,req_t123)".to_string()));
    }

    #[test]
    fn impossible_precondition_is_unrepairable() {
        let spec = request();
        // Peter can never be examined thoroughly.
        let plan = Plan::parse("start=>register('Peter',200,t124,req_t124)=>examine_thoroughly(req_t124,'Peter')", &spec).unwrap();
        let err = check_fix(&plan, &spec, DEFAULT_MAX_ROUNDS).unwrap_err();
        assert_eq!(err.to_string(), "unrepairable at: examine_thoroughly(req_t124,Peter)");
    }
}
