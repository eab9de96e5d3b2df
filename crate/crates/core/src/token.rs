//! The token game over a synthesized net: trace checking, interactive sessions
//! and stepwise parallel execution.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::net::{PetriNet, PlaceId};

pub const DEFAULT_MAX_FIRINGS: usize = 100;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TokenError {
    #[error("net must have exactly one entry transition, found {0}")]
    Unsupported(usize),
    #[error("`{label}` is not one of the options {}", .options.iter().collect::<String>())]
    InvalidChoice { label: char, options: Vec<char> },
    #[error("session is not awaiting a choice")]
    NotAwaiting,
    #[error("unknown label `{0}`")]
    UnknownLabel(char),
    #[error("place {0} would hold two tokens")]
    SafetyViolation(PlaceId),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum InvalidReason {
    Empty,
    UnknownLabel { label: char },
    /// The first label is not the transition attached to start.
    NotEntry { label: char },
    MissingToken { label: char, place: PlaceId },
    SafetyViolation { label: char, place: PlaceId },
    EndNotReached,
}

impl fmt::Display for InvalidReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InvalidReason::Empty => f.write_str("empty trace"),
            InvalidReason::UnknownLabel { label } => write!(f, "unknown label {label}"),
            InvalidReason::NotEntry { label } => write!(f, "{label} is not connected to start"),
            InvalidReason::MissingToken { label, place } => write!(f, "transition {label} lacks token on {place}"),
            InvalidReason::SafetyViolation { label, place } => {
                write!(f, "transition {label} puts a second token on {place}")
            }
            InvalidReason::EndNotReached => f.write_str("end not reached"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "verdict", rename_all = "camelCase")]
pub enum TraceVerdict {
    Valid,
    /// `position` is 1-based.
    Invalid { position: usize, reason: InvalidReason },
}

impl TraceVerdict {
    pub fn is_valid(&self) -> bool {
        matches!(self, TraceVerdict::Valid)
    }
}

impl fmt::Display for TraceVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TraceVerdict::Valid => f.write_str("True"),
            TraceVerdict::Invalid { position, reason } => write!(f, "invalid at {position}: {reason}"),
        }
    }
}

/// Places currently holding a token; capacity is one.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Marking {
    pub tokens: BTreeSet<PlaceId>,
}

impl Marking {
    pub fn new(places: impl IntoIterator<Item = PlaceId>) -> Marking {
        Marking { tokens: places.into_iter().collect() }
    }

    pub fn enabled(&self, net: &PetriNet, label: char) -> bool {
        let inputs = net.inputs(label);
        !inputs.is_empty() && inputs.iter().all(|p| self.tokens.contains(p))
    }

    /// Transitions whose input places are all marked, by label.
    pub fn fireable(&self, net: &PetriNet) -> Vec<char> {
        net.transitions.iter().map(|t| t.label).filter(|&l| self.enabled(net, l)).collect()
    }

    /// Consumes the inputs of `label` and marks its outputs.
    pub fn fire(&mut self, net: &PetriNet, label: char) -> Result<(), TokenError> {
        for p in net.inputs(label) {
            self.tokens.remove(&p);
        }
        for p in net.outputs(label) {
            if p == PlaceId::End {
                continue;
            }
            if !self.tokens.insert(p) {
                return Err(TokenError::SafetyViolation(p));
            }
        }
        Ok(())
    }
}

pub fn check_trace(net: &PetriNet, trace: &str) -> TraceVerdict {
    let labels: Vec<char> = trace.chars().collect();
    let invalid = |position, reason| TraceVerdict::Invalid { position, reason };
    let Some(&first) = labels.first() else { return invalid(0, InvalidReason::Empty) };
    if let Some(i) = labels.iter().position(|&l| net.transition(l).is_none()) {
        return invalid(i + 1, InvalidReason::UnknownLabel { label: labels[i] });
    }
    let entries = net.entries();
    if entries.len() != 1 || entries[0] != first {
        return invalid(1, InvalidReason::NotEntry { label: first });
    }
    let mut m = Marking::new([PlaceId::Start]);
    for (i, &l) in labels.iter().enumerate() {
        // The entry fires on the start token alone.
        if i == 0 {
            m.tokens.clear();
        } else if let Some(&p) = net.inputs(l).iter().find(|p| !m.tokens.contains(p)) {
            return invalid(i + 1, InvalidReason::MissingToken { label: l, place: p });
        }
        if let Err(TokenError::SafetyViolation(p)) = m.fire(net, l) {
            return invalid(i + 1, InvalidReason::SafetyViolation { label: l, place: p });
        }
    }
    if net.reaches_end(labels[labels.len() - 1]) {
        TraceVerdict::Valid
    } else {
        invalid(labels.len(), InvalidReason::EndNotReached)
    }
}

/// `start=>sig=>...` using each transition's schematic signature.
pub fn trace_to_plan(net: &PetriNet, trace: &str) -> Result<String, TokenError> {
    let mut out = String::from("start");
    for l in trace.chars() {
        let t = net.transition(l).ok_or(TokenError::UnknownLabel(l))?;
        out.push_str("=>");
        out.push_str(&t.signature);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "state", rename_all = "camelCase")]
pub enum SessionStatus {
    Running,
    AwaitingChoice { options: Vec<char> },
    Completed,
    Stuck,
    BudgetExceeded,
    Unsafe { place: PlaceId },
}

/// An interactive traversal: single options fire on their own, or-forks wait for a choice.
#[derive(Clone, Debug)]
pub struct Session {
    net: Arc<PetriNet>,
    marking: Marking,
    last_fired: Option<char>,
    history: String,
    status: SessionStatus,
    firings: usize,
    max_firings: usize,
}

impl Session {
    /// Fires the entry transition; call [`Session::advance`] to continue.
    pub fn start(net: Arc<PetriNet>, max_firings: usize) -> Result<Session, TokenError> {
        let entries = net.entries();
        if entries.len() != 1 {
            return Err(TokenError::Unsupported(entries.len()));
        }
        let mut s = Session {
            net,
            marking: Marking::new([PlaceId::Start]),
            last_fired: None,
            history: String::new(),
            status: SessionStatus::Running,
            firings: 0,
            max_firings,
        };
        s.fire(entries[0]);
        Ok(s)
    }

    pub fn net(&self) -> &PetriNet {
        &self.net
    }

    pub fn marking(&self) -> &Marking {
        &self.marking
    }

    pub fn history(&self) -> &str {
        &self.history
    }

    pub fn status(&self) -> &SessionStatus {
        &self.status
    }

    pub fn last_fired(&self) -> Option<char> {
        self.last_fired
    }

    pub fn options(&self) -> &[char] {
        match &self.status {
            SessionStatus::AwaitingChoice { options } => options,
            _ => &[],
        }
    }

    pub fn plan_text(&self) -> String {
        trace_to_plan(&self.net, &self.history).expect("history holds net labels")
    }

    fn fire(&mut self, label: char) {
        self.firings += 1;
        self.history.push(label);
        self.last_fired = Some(label);
        self.status = match self.marking.fire(&self.net, label) {
            Err(TokenError::SafetyViolation(place)) => SessionStatus::Unsafe { place },
            _ if self.net.reaches_end(label) => SessionStatus::Completed,
            _ => SessionStatus::Running,
        };
    }

    /// Fires sole options until the session completes, gets stuck or reaches a choice.
    /// Returns the labels fired.
    pub fn advance(&mut self) -> String {
        let mut fired = String::new();
        while self.status == SessionStatus::Running {
            if self.firings >= self.max_firings {
                self.status = SessionStatus::BudgetExceeded;
                break;
            }
            let options = self.marking.fireable(&self.net);
            match options.len() {
                0 => self.status = SessionStatus::Stuck,
                1 => {
                    self.fire(options[0]);
                    fired.push(options[0]);
                }
                _ => self.status = SessionStatus::AwaitingChoice { options },
            }
        }
        fired
    }

    /// Fires `label`, then advances. Returns the labels fired after it.
    pub fn choose(&mut self, label: char) -> Result<String, TokenError> {
        let SessionStatus::AwaitingChoice { options } = &self.status else { return Err(TokenError::NotAwaiting) };
        if !options.contains(&label) {
            return Err(TokenError::InvalidChoice { label, options: options.clone() });
        }
        self.fire(label);
        Ok(self.advance())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Frontier {
    Place(PlaceId),
    Transition(char),
}

/// Stepwise execution returning the transitions activated together at each step.
#[derive(Clone, Debug)]
pub struct ParallelExecutor {
    net: Arc<PetriNet>,
    marking: Marking,
    frontier: Vec<Frontier>,
    trace: String,
}

impl ParallelExecutor {
    pub fn new(net: Arc<PetriNet>) -> ParallelExecutor {
        ParallelExecutor {
            net,
            marking: Marking::new([PlaceId::Start]),
            frontier: vec![Frontier::Place(PlaceId::Start)],
            trace: String::new(),
        }
    }

    pub fn marking(&self) -> &Marking {
        &self.marking
    }

    /// Labels activated so far, in activation order.
    pub fn trace(&self) -> &str {
        &self.trace
    }

    /// One step from the nodes activated by the previous step. An empty result means the run is over.
    /// `choose` picks among the consumers of a place with several.
    pub fn step(&mut self, choose: &mut dyn FnMut(PlaceId, &[char]) -> char) -> Result<Vec<char>, TokenError> {
        let current = std::mem::take(&mut self.frontier);
        let mut activated = Vec::new();
        for node in current {
            self.visit(node, choose, &mut activated)?;
        }
        self.trace.extend(activated.iter());
        self.frontier = activated.iter().map(|&t| Frontier::Transition(t)).collect();
        Ok(activated)
    }

    fn visit(
        &mut self,
        node: Frontier,
        choose: &mut dyn FnMut(PlaceId, &[char]) -> char,
        activated: &mut Vec<char>,
    ) -> Result<(), TokenError> {
        match node {
            Frontier::Place(p) => {
                let Some(place) = self.net.place(p) else { return Ok(()) };
                let succ = place.consumers.clone();
                let s = match succ.len() {
                    0 => return Ok(()),
                    1 => succ[0],
                    _ => {
                        let c = choose(p, &succ);
                        if !succ.contains(&c) {
                            return Err(TokenError::InvalidChoice { label: c, options: succ });
                        }
                        c
                    }
                };
                let parents = if p == PlaceId::Start { vec![PlaceId::Start] } else { self.net.inputs(s) };
                let available = parents.iter().filter(|q| self.marking.tokens.contains(q)).count();
                if available >= parents.len() {
                    for q in &parents {
                        self.marking.tokens.remove(q);
                    }
                    activated.push(s);
                }
            }
            Frontier::Transition(t) => {
                for p in self.net.outputs(t) {
                    if !self.marking.tokens.insert(p) && p != PlaceId::End {
                        return Err(TokenError::SafetyViolation(p));
                    }
                    self.visit(Frontier::Place(p), choose, activated)?;
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_spec;
    use crate::net::synthesize;

    fn net(text: &str) -> Arc<PetriNet> {
        Arc::new(synthesize(&parse_spec(text).unwrap()).unwrap())
    }

    fn request() -> Arc<PetriNet> {
        net(include_str!("../examples/request.scspec"))
    }

    fn trial() -> Arc<PetriNet> {
        net(include_str!("../examples/trial.scspec"))
    }

    const RETRY_INTO_ENTRY: &str = "\
operation(o0(X)).
precond(o0(X), (p3(X))).
added(p0(X), o0(X)).
operation(o1(X)).
precond(o1(X), (p3(X))).
added(p0(X), o1(X)).
deleted(p3(X), o1(X)).
operation(o2(X)).
added(p3(X), o2(X)).
p0(k).
";

    #[test]
    fn entry_fires_on_start_alone() {
        let n = net(RETRY_INTO_ENTRY);
        assert_eq!(n.entries(), vec!['c']);
        assert_eq!(n.inputs('c').len(), 2);
        assert!(check_trace(&n, "ca").is_valid());
        // Retrying into the entry would need the start token again.
        assert!(matches!(check_trace(&n, "cbca"), TraceVerdict::Invalid { position: 3, .. }));
        let mut stuck = Session::start(n.clone(), DEFAULT_MAX_FIRINGS).unwrap();
        stuck.advance();
        stuck.choose('b').unwrap();
        assert_eq!(stuck.status(), &SessionStatus::Stuck);
        let mut s = Session::start(n.clone(), DEFAULT_MAX_FIRINGS).unwrap();
        s.advance();
        s.choose('a').unwrap();
        assert_eq!(s.history(), "ca");
        let mut exec = ParallelExecutor::new(n);
        assert_eq!(exec.step(&mut |_, _| 'a').unwrap(), vec!['c']);
        assert_eq!(exec.step(&mut |_, _| 'a').unwrap(), vec!['a']);
    }

    #[test]
    fn accepts_and_rejects_traces() {
        let n = request();
        assert!(check_trace(&n, "acdefdbeg").is_valid());
        assert!(check_trace(&n, "acdeh").is_valid());
        let bad = check_trace(&n, "aceg");
        assert_eq!(
            bad,
            TraceVerdict::Invalid {
                position: 3,
                reason: InvalidReason::MissingToken { label: 'e', place: PlaceId::S(4) }
            }
        );
        assert_eq!(bad.to_string(), "invalid at 3: transition e lacks token on s(4)");
        assert!(matches!(check_trace(&n, "a"), TraceVerdict::Invalid { reason: InvalidReason::EndNotReached, .. }));
        assert!(matches!(check_trace(&n, ""), TraceVerdict::Invalid { reason: InvalidReason::Empty, .. }));
        assert!(matches!(check_trace(&n, "az"), TraceVerdict::Invalid { position: 2, .. }));
        assert!(matches!(check_trace(&n, "b"), TraceVerdict::Invalid { reason: InvalidReason::NotEntry { .. }, .. }));
    }

    #[test]
    fn second_token_is_a_safety_violation() {
        let n = request();
        assert!(matches!(check_trace(&n, "abc"), TraceVerdict::Invalid { position: 3, .. }));
        let mut m = Marking::new([PlaceId::S(3)]);
        m.tokens.insert(PlaceId::S(1));
        assert_eq!(m.fire(&n, 'c'), Err(TokenError::SafetyViolation(PlaceId::S(3))));
    }

    #[test]
    fn session_follows_choices() {
        let n = request();
        let mut s = Session::start(n.clone(), DEFAULT_MAX_FIRINGS).unwrap();
        assert_eq!(s.history(), "a");
        assert_eq!(s.marking().tokens, BTreeSet::from([PlaceId::S(1), PlaceId::S(2)]));
        assert_eq!(s.advance(), "");
        assert_eq!(s.options(), ['b', 'c', 'd']);
        assert_eq!(s.choose('c').unwrap(), "de");
        assert_eq!(s.options(), ['f', 'g', 'h']);
        assert!(matches!(s.choose('z'), Err(TokenError::InvalidChoice { .. })));
        s.choose('f').unwrap();
        assert_eq!(s.options(), ['b', 'c', 'd']);
        s.choose('d').unwrap();
        assert_eq!(s.options(), ['b', 'c']);
        assert_eq!(s.choose('b').unwrap(), "e");
        s.choose('g').unwrap();
        assert_eq!(s.status(), &SessionStatus::Completed);
        assert_eq!(s.history(), "acdefdbeg");
        assert_eq!(s.choose('g'), Err(TokenError::NotAwaiting));
        assert_eq!(
            s.plan_text(),
            "start=>register(c,v,t,r)=>examine_casually(r,c)=>check_ticket(r,c,t)=>decide(r,c,v,d)\
             =>reinitiate_request(r,c,t,v)=>check_ticket(r,c,t)=>examine_thoroughly(r,c)=>decide(r,c,v,d)\
             =>pay_compensation(r,c,v)"
        );
    }

    #[test]
    fn budget_stops_long_sessions() {
        let mut s = Session::start(request(), 6).unwrap();
        s.advance();
        for c in ['c', 'd', 'f', 'c', 'd'] {
            if s.options().contains(&c) {
                s.choose(c).unwrap();
            }
        }
        assert_eq!(s.status(), &SessionStatus::BudgetExceeded);
    }

    #[test]
    fn two_entries_are_unsupported() {
        let n = net("operation(one(X)).\nprecond(one(X), (p(X))).\nadded(q(X), one(X)).\n\
                     operation(two(X)).\nprecond(two(X), (p(X))).\nadded(r(X), two(X)).\np(k).\n");
        assert_eq!(Session::start(n, 10).unwrap_err(), TokenError::Unsupported(2));
    }

    #[test]
    fn parallel_steps_on_trial_net() {
        let mut ex = ParallelExecutor::new(trial());
        let mut pick = |_: PlaceId, opts: &[char]| if opts.contains(&'b') { 'b' } else { 'g' };
        assert_eq!(ex.step(&mut pick).unwrap(), ['a']);
        let mut second = ex.step(&mut pick).unwrap();
        second.sort();
        assert_eq!(second, ['b', 'd']);
        assert_eq!(ex.step(&mut pick).unwrap(), ['e']);
        assert_eq!(ex.step(&mut pick).unwrap(), ['g']);
        assert!(ex.step(&mut pick).unwrap().is_empty());
        assert!(check_trace(&ex.net, ex.trace()).is_valid());
    }

    #[test]
    fn chooser_must_pick_a_successor() {
        let mut ex = ParallelExecutor::new(trial());
        ex.step(&mut |_, _| 'z').unwrap();
        assert!(matches!(ex.step(&mut |_, _| 'z'), Err(TokenError::InvalidChoice { .. })));
    }

    #[test]
    fn trace_to_plan_renders_signatures() {
        let n = trial();
        assert_eq!(trace_to_plan(&n, "").unwrap(), "start");
        assert!(trace_to_plan(&n, "acdefdbeg").unwrap().ends_with("=>combat(a,k,d,o,v)=>vindicate(d,o)"));
        assert_eq!(trace_to_plan(&n, "q"), Err(TokenError::UnknownLabel('q')));
    }
}
