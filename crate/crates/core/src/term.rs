//! First-order terms, literals, guards and unification.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

/// A first-order term. Zero-argument compounds are always stored as atoms.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Term {
    Atom(String),
    Int(i64),
    Var(String),
    Compound(String, Vec<Term>),
    List(Vec<Term>),
}

impl Term {
    pub fn atom(name: impl Into<String>) -> Term {
        Term::Atom(name.into())
    }

    pub fn var(name: impl Into<String>) -> Term {
        Term::Var(name.into())
    }

    pub fn int(v: i64) -> Term {
        Term::Int(v)
    }

    /// Builds a compound, normalizing the empty-argument case to an atom.
    pub fn compound(functor: impl Into<String>, args: Vec<Term>) -> Term {
        let functor = functor.into();
        if args.is_empty() {
            Term::Atom(functor)
        } else {
            Term::Compound(functor, args)
        }
    }

    pub fn is_var(&self) -> bool {
        matches!(self, Term::Var(_))
    }

    pub fn is_ground(&self) -> bool {
        match self {
            Term::Atom(_) | Term::Int(_) => true,
            Term::Var(_) => false,
            Term::Compound(_, args) | Term::List(args) => args.iter().all(Term::is_ground),
        }
    }

    /// Predicate key of an atom-shaped term: name and arity.
    pub fn key(&self) -> Option<(&str, usize)> {
        match self {
            Term::Atom(n) => Some((n.as_str(), 0)),
            Term::Compound(n, args) => Some((n.as_str(), args.len())),
            _ => None,
        }
    }

    pub fn args(&self) -> &[Term] {
        match self {
            Term::Compound(_, args) | Term::List(args) => args,
            _ => &[],
        }
    }

    /// Variables in first-occurrence order.
    pub fn vars(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out
    }

    pub(crate) fn collect_vars(&self, out: &mut Vec<String>) {
        match self {
            Term::Var(v) => {
                if !out.contains(v) {
                    out.push(v.clone());
                }
            }
            Term::Compound(_, args) | Term::List(args) => {
                for a in args {
                    a.collect_vars(out);
                }
            }
            _ => {}
        }
    }

    pub fn contains_var(&self, name: &str) -> bool {
        match self {
            Term::Var(v) => v == name,
            Term::Compound(_, args) | Term::List(args) => args.iter().any(|a| a.contains_var(name)),
            _ => false,
        }
    }

    /// Ground constants (atoms, integers) occurring in the term.
    pub fn constants(&self, out: &mut BTreeSet<Term>) {
        match self {
            Term::Atom(_) | Term::Int(_) => {
                out.insert(self.clone());
            }
            Term::Compound(_, args) | Term::List(args) => {
                for a in args {
                    a.constants(out);
                }
            }
            Term::Var(_) => {}
        }
    }

    /// Renames every variable by appending `#tag`.
    pub fn rename(&self, tag: usize) -> Term {
        self.map_vars(&|v| Term::Var(format!("{v}#{tag}")))
    }

    pub fn map_vars(&self, f: &dyn Fn(&str) -> Term) -> Term {
        match self {
            Term::Var(v) => f(v),
            Term::Compound(n, args) => {
                Term::Compound(n.clone(), args.iter().map(|a| a.map_vars(f)).collect())
            }
            Term::List(items) => Term::List(items.iter().map(|a| a.map_vars(f)).collect()),
            other => other.clone(),
        }
    }

    /// Text of an atomic term, as used by name concatenation.
    pub fn text(&self) -> Option<String> {
        match self {
            Term::Atom(a) => Some(a.clone()),
            Term::Int(i) => Some(i.to_string()),
            _ => None,
        }
    }

    /// Unquoted rendering, the way Prolog's `write/1` prints.
    pub fn to_plain(&self) -> String {
        let mut s = String::new();
        write_term(&mut s, self, false, 1200).expect("string write");
        s
    }

    /// Rendering with schema variables lowercased, e.g. `register(c,v,t,r)`.
    pub fn to_signature(&self) -> String {
        self.map_vars(&|v| Term::Atom(v.to_lowercase())).to_plain()
    }
}

pub(crate) fn atom_needs_quotes(a: &str) -> bool {
    let mut chars = a.chars();
    match chars.next() {
        Some(c) if c.is_ascii_lowercase() => !chars.all(|c| c.is_ascii_alphanumeric() || c == '_'),
        _ => a != "[]",
    }
}

fn write_atom(out: &mut impl fmt::Write, a: &str, quoted: bool) -> fmt::Result {
    if quoted && atom_needs_quotes(a) {
        out.write_char('\'')?;
        for c in a.chars() {
            match c {
                '\'' => out.write_str("\\'")?,
                '\\' => out.write_str("\\\\")?,
                '\n' => out.write_str("\\n")?,
                c => out.write_char(c)?,
            }
        }
        out.write_char('\'')
    } else {
        out.write_str(a)
    }
}

/// Operator priority of a term's principal functor, 0 for plain terms.
fn priority(t: &Term) -> u32 {
    match t {
        Term::Compound(f, args) => match (f.as_str(), args.len()) {
            ("not", 1) => 900,
            (":-", 2) => 1200,
            (",", 2) => 1000,
            ("=" | "<=" | ">" | "!=", 2) => 700,
            ("=>", 2) => 650,
            _ => 0,
        },
        _ => 0,
    }
}

fn write_term(out: &mut impl fmt::Write, t: &Term, quoted: bool, max: u32) -> fmt::Result {
    let p = priority(t);
    if p > max {
        out.write_char('(')?;
        write_term(out, t, quoted, 1200)?;
        return out.write_char(')');
    }
    match t {
        Term::Atom(a) => write_atom(out, a, quoted),
        Term::Int(i) => write!(out, "{i}"),
        Term::Var(v) => out.write_str(v),
        Term::List(items) => {
            out.write_char('[')?;
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.write_char(',')?;
                }
                write_term(out, item, quoted, 999)?;
            }
            out.write_char(']')
        }
        Term::Compound(_, args) if p == 900 => {
            out.write_str("not ")?;
            write_term(out, &args[0], quoted, 900)
        }
        Term::Compound(f, args) if p > 0 => {
            let (lmax, rmax) = match p {
                1000 => (999, 1000),
                650 => (650, 649),
                _ => (p - 1, p - 1),
            };
            write_term(out, &args[0], quoted, lmax)?;
            match f.as_str() {
                "," => out.write_str(", ")?,
                "=>" => out.write_str("=>")?,
                _ => write!(out, " {f} ")?,
            }
            write_term(out, &args[1], quoted, rmax)
        }
        Term::Compound(f, args) => {
            write_atom(out, f, quoted)?;
            out.write_char('(')?;
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    out.write_char(',')?;
                }
                write_term(out, a, quoted, 999)?;
            }
            out.write_char(')')
        }
    }
}

/// Quoted rendering (`writeq` style), re-readable by the parser.
impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_term(f, self, true, 1200)
    }
}

/// Signed fact literal.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Literal {
    pub positive: bool,
    pub atom: Term,
}

impl Literal {
    pub fn pos(atom: Term) -> Literal {
        Literal { positive: true, atom }
    }

    pub fn neg(atom: Term) -> Literal {
        Literal { positive: false, atom }
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.positive {
            write!(f, "{}", self.atom)
        } else {
            write!(f, "not {}", self.atom)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CmpOp {
    Le,
    Gt,
    Eq,
    Ne,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Eq => "=",
            CmpOp::Ne => "!=",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Compare {
    pub op: CmpOp,
    pub lhs: Term,
    pub rhs: Term,
}

impl Compare {
    pub fn new(op: CmpOp, lhs: Term, rhs: Term) -> Compare {
        Compare { op, lhs, rhs }
    }

    fn map(&self, f: &dyn Fn(&Term) -> Term) -> Compare {
        Compare { op: self.op, lhs: f(&self.lhs), rhs: f(&self.rhs) }
    }
}

impl fmt::Display for Compare {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let side = |t: &Term| {
            let mut s = String::new();
            let _ = write_term(&mut s, t, true, 699);
            s
        };
        match self.op {
            CmpOp::Ne => write!(f, "not ({} = {})", side(&self.lhs), side(&self.rhs)),
            op => write!(f, "{} {} {}", side(&self.lhs), op.symbol(), side(&self.rhs)),
        }
    }
}

/// Evaluable constraint inside a precondition conjunction.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Guard {
    Compare(Compare),
    /// `if(Cond, X = a, X = b)`
    Conditional { cond: Compare, then_bind: Compare, else_bind: Compare },
    /// `atom_concat(Prefix, Suffix, Result)`
    NameConcat { prefix: Term, suffix: Term, result: Term },
}

impl Guard {
    pub fn terms(&self) -> Vec<&Term> {
        match self {
            Guard::Compare(c) => vec![&c.lhs, &c.rhs],
            Guard::Conditional { cond, then_bind, else_bind } => vec![
                &cond.lhs,
                &cond.rhs,
                &then_bind.lhs,
                &then_bind.rhs,
                &else_bind.lhs,
                &else_bind.rhs,
            ],
            Guard::NameConcat { prefix, suffix, result } => vec![prefix, suffix, result],
        }
    }

    pub fn map_terms(&self, f: &dyn Fn(&Term) -> Term) -> Guard {
        match self {
            Guard::Compare(c) => Guard::Compare(c.map(f)),
            Guard::Conditional { cond, then_bind, else_bind } => Guard::Conditional {
                cond: cond.map(f),
                then_bind: then_bind.map(f),
                else_bind: else_bind.map(f),
            },
            Guard::NameConcat { prefix, suffix, result } => Guard::NameConcat {
                prefix: f(prefix),
                suffix: f(suffix),
                result: f(result),
            },
        }
    }

    /// Variables the guard may bind when it succeeds.
    pub fn binding_targets(&self) -> Vec<String> {
        match self {
            Guard::Compare(c) if c.op == CmpOp::Eq => {
                let mut v = c.lhs.vars();
                for x in c.rhs.vars() {
                    if !v.contains(&x) {
                        v.push(x);
                    }
                }
                v
            }
            Guard::Compare(_) => Vec::new(),
            Guard::Conditional { then_bind, else_bind, .. } => {
                let mut v = then_bind.lhs.vars();
                v.extend(then_bind.rhs.vars());
                v.extend(else_bind.lhs.vars());
                v.extend(else_bind.rhs.vars());
                v.dedup();
                v
            }
            Guard::NameConcat { prefix, suffix, result } => {
                let mut v = result.vars();
                v.extend(suffix.vars());
                v.extend(prefix.vars());
                v
            }
        }
    }
}

impl fmt::Display for Guard {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Guard::Compare(c) => write!(f, "{c}"),
            Guard::Conditional { cond, then_bind, else_bind } => {
                write!(f, "if({cond}, {then_bind}, {else_bind})")
            }
            Guard::NameConcat { prefix, suffix, result } => {
                write!(f, "atom_concat({prefix},{suffix},{result})")
            }
        }
    }
}

/// Gives every `_` its own name so anonymous holes stay distinct.
pub(crate) fn name_anonymous(t: &Term, fresh: &mut usize) -> Term {
    match t {
        Term::Var(v) if v == "_" => {
            *fresh += 1;
            Term::var(format!("_G{fresh}"))
        }
        Term::Compound(f, args) => Term::Compound(f.clone(), args.iter().map(|a| name_anonymous(a, fresh)).collect()),
        Term::List(items) => Term::List(items.iter().map(|a| name_anonymous(a, fresh)).collect()),
        other => other.clone(),
    }
}

/// One conjunct of a precondition or goal.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Condition {
    Lit(Literal),
    Guard(Guard),
}

impl Condition {
    pub fn map_terms(&self, f: &dyn Fn(&Term) -> Term) -> Condition {
        match self {
            Condition::Lit(l) => Condition::Lit(Literal { positive: l.positive, atom: f(&l.atom) }),
            Condition::Guard(g) => Condition::Guard(g.map_terms(f)),
        }
    }

    pub fn vars(&self) -> Vec<String> {
        let mut out = Vec::new();
        match self {
            Condition::Lit(l) => l.atom.collect_vars(&mut out),
            Condition::Guard(g) => {
                for t in g.terms() {
                    t.collect_vars(&mut out);
                }
            }
        }
        out
    }

    pub fn resolve(&self, s: &Substitution) -> Condition {
        self.map_terms(&|t| s.apply(t))
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Condition::Lit(l) => write!(f, "{l}"),
            Condition::Guard(g) => write!(f, "{g}"),
        }
    }
}

/// Variable bindings. Bindings may chain; `apply` fully resolves.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Substitution {
    bindings: BTreeMap<String, Term>,
}

impl Substitution {
    pub fn new() -> Substitution {
        Substitution::default()
    }

    pub fn is_empty(&self) -> bool {
        self.bindings.is_empty()
    }

    pub fn len(&self) -> usize {
        self.bindings.len()
    }

    pub fn get(&self, var: &str) -> Option<&Term> {
        self.bindings.get(var)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Term)> {
        self.bindings.iter()
    }

    /// Binding of `var` after full resolution, if it is bound.
    pub fn lookup(&self, var: &str) -> Option<Term> {
        self.bindings.get(var).map(|t| self.apply(t))
    }

    fn walk<'a>(&'a self, mut t: &'a Term) -> &'a Term {
        while let Term::Var(v) = t {
            match self.bindings.get(v) {
                Some(next) => t = next,
                None => break,
            }
        }
        t
    }

    pub fn apply(&self, t: &Term) -> Term {
        match self.walk(t) {
            Term::Compound(n, args) => Term::Compound(n.clone(), args.iter().map(|a| self.apply(a)).collect()),
            Term::List(items) => Term::List(items.iter().map(|a| self.apply(a)).collect()),
            other => other.clone(),
        }
    }

    fn occurs(&self, var: &str, t: &Term) -> bool {
        match self.walk(t) {
            Term::Var(v) => v == var,
            Term::Compound(_, args) | Term::List(args) => args.iter().any(|a| self.occurs(var, a)),
            _ => false,
        }
    }

    /// Binds `var` to `t`, enforcing the occurs check.
    pub fn bind(&mut self, var: &str, t: Term) -> bool {
        if self.occurs(var, &t) {
            return false;
        }
        self.bindings.insert(var.to_string(), t);
        true
    }

    /// Extends the substitution to unify `a` and `b`. Leaves it unchanged on failure.
    pub fn unify(&mut self, a: &Term, b: &Term) -> bool {
        let mut trail = Vec::new();
        if self.unify_inner(a, b, &mut trail) {
            true
        } else {
            for v in trail {
                self.bindings.remove(&v);
            }
            false
        }
    }

    fn unify_inner(&mut self, a: &Term, b: &Term, trail: &mut Vec<String>) -> bool {
        let a = self.walk(a).clone();
        let b = self.walk(b).clone();
        match (&a, &b) {
            (Term::Var(x), Term::Var(y)) if x == y => true,
            (Term::Var(x), _) => {
                if self.occurs(x, &b) {
                    return false;
                }
                self.bindings.insert(x.clone(), b);
                trail.push(x.clone());
                true
            }
            (_, Term::Var(y)) => {
                if self.occurs(y, &a) {
                    return false;
                }
                self.bindings.insert(y.clone(), a);
                trail.push(y.clone());
                true
            }
            (Term::Atom(x), Term::Atom(y)) => x == y,
            (Term::Int(x), Term::Int(y)) => x == y,
            (Term::Compound(f, xs), Term::Compound(g, ys)) => {
                f == g && xs.len() == ys.len() && xs.iter().zip(ys).all(|(x, y)| self.unify_inner(x, y, trail))
            }
            (Term::List(xs), Term::List(ys)) => {
                xs.len() == ys.len() && xs.iter().zip(ys).all(|(x, y)| self.unify_inner(x, y, trail))
            }
            _ => false,
        }
    }

    /// Drops every binding whose key is not in `keep`, after resolving.
    pub fn restrict(&self, keep: &[String]) -> Substitution {
        let mut out = Substitution::new();
        for v in keep {
            if let Some(t) = self.lookup(v) {
                if t != Term::Var(v.clone()) {
                    out.bindings.insert(v.clone(), t);
                }
            }
        }
        out
    }
}

impl fmt::Display for Substitution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, (k, _)) in self.bindings.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{k}↦{}", self.lookup(k).expect("bound"))?;
        }
        f.write_str("}")
    }
}

/// Most general unifier of two terms, or `None`.
pub fn unify(a: &Term, b: &Term) -> Option<Substitution> {
    let mut s = Substitution::new();
    s.unify(a, b).then_some(s)
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GuardError {
    #[error("guard `{0}` is not sufficiently instantiated")]
    Deferred(String),
    #[error("guard `{0}` compares non-integer operands")]
    NotInteger(String),
}

fn int_of(t: &Term) -> Option<i64> {
    match t {
        Term::Int(i) => Some(*i),
        _ => None,
    }
}

/// Truth value of a ground comparison. `Ok(None)` means the comparison is not ground.
fn eval_compare(c: &Compare, s: &Substitution, shown: &dyn fmt::Display) -> Result<Option<bool>, GuardError> {
    let l = s.apply(&c.lhs);
    let r = s.apply(&c.rhs);
    if !l.is_ground() || !r.is_ground() {
        return Ok(None);
    }
    Ok(Some(match c.op {
        CmpOp::Eq => l == r,
        CmpOp::Ne => l != r,
        CmpOp::Le | CmpOp::Gt => {
            let (Some(x), Some(y)) = (int_of(&l), int_of(&r)) else {
                return Err(GuardError::NotInteger(shown.to_string()));
            };
            if c.op == CmpOp::Le {
                x <= y
            } else {
                x > y
            }
        }
    }))
}

/// Evaluates a guard under `s`. `Ok(None)` is plain failure.
pub fn eval_guard(g: &Guard, s: &Substitution) -> Result<Option<Substitution>, GuardError> {
    let deferred = || GuardError::Deferred(g.resolve_display(s));
    match g {
        Guard::Compare(c) if c.op == CmpOp::Eq => {
            let l = s.apply(&c.lhs);
            let r = s.apply(&c.rhs);
            if !l.is_ground() && !r.is_ground() {
                return Err(deferred());
            }
            let mut out = s.clone();
            Ok(out.unify(&l, &r).then_some(out))
        }
        Guard::Compare(c) => match eval_compare(c, s, g)? {
            Some(true) => Ok(Some(s.clone())),
            Some(false) => Ok(None),
            None => Err(deferred()),
        },
        Guard::Conditional { cond, then_bind, else_bind } => {
            let branch = match eval_compare(cond, s, g)? {
                Some(true) => then_bind,
                Some(false) => else_bind,
                None => return Err(deferred()),
            };
            let l = s.apply(&branch.lhs);
            let r = s.apply(&branch.rhs);
            if !l.is_ground() && !r.is_ground() {
                return Err(deferred());
            }
            let mut out = s.clone();
            Ok(out.unify(&l, &r).then_some(out))
        }
        Guard::NameConcat { prefix, suffix, result } => {
            let p = s.apply(prefix);
            let x = s.apply(suffix);
            let r = s.apply(result);
            let mut out = s.clone();
            match (p.text(), x.text(), r.text()) {
                (Some(p), Some(x), _) => Ok(out.unify(&r, &Term::Atom(format!("{p}{x}"))).then_some(out)),
                (Some(p), None, Some(r)) if x.is_var() => match r.strip_prefix(&p) {
                    Some(rest) => Ok(out.unify(&x, &Term::Atom(rest.to_string())).then_some(out)),
                    None => Ok(None),
                },
                _ => Err(deferred()),
            }
        }
    }
}

impl Guard {
    fn resolve_display(&self, s: &Substitution) -> String {
        self.map_terms(&|t| s.apply(t)).to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(f: &str, args: Vec<Term>) -> Term {
        Term::compound(f, args)
    }
    fn a(s: &str) -> Term {
        Term::atom(s)
    }
    fn v(s: &str) -> Term {
        Term::var(s)
    }

    #[test]
    fn unify_binds_variables() {
        let s = unify(&c("claims", vec![v("C"), v("R")]), &c("claims", vec![a("Mary"), a("req_t123")])).unwrap();
        assert_eq!(s.lookup("C"), Some(a("Mary")));
        assert_eq!(s.lookup("R"), Some(a("req_t123")));
    }

    #[test]
    fn unify_through_lists() {
        let pat = c("payed", vec![Term::List(vec![v("C"), v("R")]), v("V")]);
        let fact = c("payed", vec![Term::List(vec![a("Peter"), a("req_t124")]), Term::int(200)]);
        let s = unify(&pat, &fact).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.lookup("V"), Some(Term::int(200)));
        assert_eq!(s.apply(&pat), fact);
    }

    #[test]
    fn occurs_check() {
        assert!(unify(&v("X"), &c("f", vec![v("X")])).is_none());
    }

    #[test]
    fn failed_unify_leaves_substitution_untouched() {
        let mut s = Substitution::new();
        assert!(!s.unify(&c("p", vec![v("X"), a("b")]), &c("p", vec![a("a"), a("c")])));
        assert!(s.is_empty());
    }

    #[test]
    fn zero_arg_compound_is_atom() {
        assert_eq!(Term::compound("p", vec![]), a("p"));
    }

    #[test]
    fn display_quotes_where_needed() {
        let t = c("register", vec![a("Mary"), Term::int(58), a("t123"), a("req_t123")]);
        assert_eq!(t.to_string(), "register('Mary',58,t123,req_t123)");
        assert_eq!(t.to_plain(), "register(Mary,58,t123,req_t123)");
        let d = c("decide", vec![a("r"), c("not", vec![a("ok")])]);
        assert_eq!(d.to_string(), "decide(r,not ok)");
        assert_eq!(a("limit exceeded").to_string(), "'limit exceeded'");
        assert_eq!(a("it's").to_string(), "'it\\'s'");
    }

    #[test]
    fn signature_lowercases_variables() {
        let t = c("register", vec![v("C"), v("V"), v("T"), v("R")]);
        assert_eq!(t.to_signature(), "register(c,v,t,r)");
    }

    fn conditional(val: i64) -> Guard {
        Guard::Conditional {
            cond: Compare::new(CmpOp::Le, Term::int(val), Term::int(100)),
            then_bind: Compare::new(CmpOp::Eq, v("D"), a("ok")),
            else_bind: Compare::new(CmpOp::Eq, v("D"), c("not", vec![a("ok")])),
        }
    }

    #[test]
    fn conditional_guard_picks_branch() {
        let s = eval_guard(&conditional(58), &Substitution::new()).unwrap().unwrap();
        assert_eq!(s.lookup("D"), Some(a("ok")));
        let s = eval_guard(&conditional(200), &Substitution::new()).unwrap().unwrap();
        assert_eq!(s.lookup("D"), Some(c("not", vec![a("ok")])));
    }

    #[test]
    fn name_concat_builds_atom() {
        let g = Guard::NameConcat { prefix: a("req_"), suffix: a("t123"), result: v("R") };
        let s = eval_guard(&g, &Substitution::new()).unwrap().unwrap();
        assert_eq!(s.lookup("R"), Some(a("req_t123")));
    }

    #[test]
    fn name_concat_splits_when_suffix_unknown() {
        let g = Guard::NameConcat { prefix: a("req_"), suffix: v("T"), result: a("req_t9") };
        let s = eval_guard(&g, &Substitution::new()).unwrap().unwrap();
        assert_eq!(s.lookup("T"), Some(a("t9")));
    }

    #[test]
    fn unground_guard_is_deferred() {
        let g = Guard::Compare(Compare::new(CmpOp::Le, v("V"), Term::int(3)));
        assert!(matches!(eval_guard(&g, &Substitution::new()), Err(GuardError::Deferred(_))));
        let g = Guard::Compare(Compare::new(CmpOp::Ne, v("V"), a("k")));
        assert!(matches!(eval_guard(&g, &Substitution::new()), Err(GuardError::Deferred(_))));
    }

    #[test]
    fn comparisons() {
        let s = Substitution::new();
        let t = |op, l, r| eval_guard(&Guard::Compare(Compare::new(op, l, r)), &s).unwrap().is_some();
        assert!(t(CmpOp::Gt, Term::int(200), Term::int(100)));
        assert!(!t(CmpOp::Gt, Term::int(100), Term::int(100)));
        assert!(t(CmpOp::Le, Term::int(100), Term::int(100)));
        assert!(t(CmpOp::Ne, a("x"), a("y")));
        assert!(!t(CmpOp::Eq, a("x"), a("y")));
        let bad = Guard::Compare(Compare::new(CmpOp::Le, a("x"), Term::int(1)));
        assert!(matches!(eval_guard(&bad, &s), Err(GuardError::NotInteger(_))));
    }

    fn arb_term() -> impl Strategy<Value = Term> {
        let leaf = prop_oneof![
            prop::sample::select(vec!["a", "b", "c"]).prop_map(Term::atom),
            (0i64..3).prop_map(Term::int),
            prop::sample::select(vec!["X", "Y", "Z"]).prop_map(Term::var),
        ];
        leaf.prop_recursive(3, 16, 3, |inner| {
            prop_oneof![
                (prop::sample::select(vec!["f", "g"]), prop::collection::vec(inner.clone(), 1..3))
                    .prop_map(|(f, args)| Term::compound(f, args)),
                prop::collection::vec(inner, 0..3).prop_map(Term::List),
            ]
        })
    }

    proptest! {
        #[test]
        fn unify_symmetric_and_sound(x in arb_term(), y in arb_term()) {
            let l = unify(&x, &y);
            let r = unify(&y, &x);
            prop_assert_eq!(l.is_some(), r.is_some());
            if let (Some(l), Some(r)) = (l, r) {
                prop_assert_eq!(l.apply(&x), l.apply(&y));
                prop_assert_eq!(r.apply(&x), r.apply(&y));
                // both unifiers are most general, so each result is an instance of the other
                prop_assert!(unify(&l.apply(&x), &r.apply(&x)).is_some());
            }
        }

        #[test]
        fn apply_is_idempotent(x in arb_term(), y in arb_term()) {
            if let Some(s) = unify(&x, &y) {
                let once = s.apply(&x);
                prop_assert_eq!(s.apply(&once), once);
            }
        }

        #[test]
        fn guard_eval_is_deterministic(v in -5i64..300) {
            let g = conditional(v);
            prop_assert_eq!(eval_guard(&g, &Substitution::new()), eval_guard(&g, &Substitution::new()));
        }
    }
}
