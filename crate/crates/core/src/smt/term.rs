//! Minimal SMT-LIB term tree for quantifier-free linear integer arithmetic.

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Sort {
    Int,
    Bool,
}

impl fmt::Display for Sort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sort::Int => "Int",
            Sort::Bool => "Bool",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Term {
    Bool(bool),
    Int(i64),
    Var(String),
    Not(Box<Term>),
    And(Vec<Term>),
    Or(Vec<Term>),
    Implies(Box<Term>, Box<Term>),
    /// `=` on two terms of the same sort (biconditional for booleans).
    Eq(Box<Term>, Box<Term>),
    Add(Vec<Term>),
    Sub(Box<Term>, Box<Term>),
    Mul(i64, Box<Term>),
    Mod(Box<Term>, i64),
    Lt(Box<Term>, Box<Term>),
    Le(Box<Term>, Box<Term>),
    Ge(Box<Term>, Box<Term>),
}

pub fn var(name: impl Into<String>) -> Term {
    Term::Var(name.into())
}

pub fn int(v: i64) -> Term {
    Term::Int(v)
}

pub fn not(t: Term) -> Term {
    match t {
        Term::Bool(b) => Term::Bool(!b),
        Term::Not(inner) => *inner,
        other => Term::Not(Box::new(other)),
    }
}

pub fn and(terms: impl IntoIterator<Item = Term>) -> Term {
    let mut out = Vec::new();
    for t in terms {
        match t {
            Term::Bool(true) => {}
            Term::Bool(false) => return Term::Bool(false),
            Term::And(inner) => out.extend(inner),
            other => out.push(other),
        }
    }
    match out.len() {
        0 => Term::Bool(true),
        1 => out.pop().expect("one element"),
        _ => Term::And(out),
    }
}

pub fn or(terms: impl IntoIterator<Item = Term>) -> Term {
    let mut out = Vec::new();
    for t in terms {
        match t {
            Term::Bool(false) => {}
            Term::Bool(true) => return Term::Bool(true),
            other => out.push(other),
        }
    }
    match out.len() {
        0 => Term::Bool(false),
        1 => out.pop().expect("one element"),
        _ => Term::Or(out),
    }
}

pub fn implies(lhs: Term, rhs: Term) -> Term {
    match (lhs, rhs) {
        (Term::Bool(false), _) | (_, Term::Bool(true)) => Term::Bool(true),
        (Term::Bool(true), r) => r,
        (l, Term::Bool(false)) => not(l),
        (l, r) => Term::Implies(Box::new(l), Box::new(r)),
    }
}

pub fn eq(lhs: Term, rhs: Term) -> Term {
    match (lhs, rhs) {
        (Term::Int(a), Term::Int(b)) => Term::Bool(a == b),
        (Term::Bool(a), Term::Bool(b)) => Term::Bool(a == b),
        (Term::Bool(true), t) | (t, Term::Bool(true)) => t,
        (Term::Bool(false), t) | (t, Term::Bool(false)) => not(t),
        (l, r) => Term::Eq(Box::new(l), Box::new(r)),
    }
}

pub fn add(lhs: Term, rhs: Term) -> Term {
    match (lhs, rhs) {
        (l, Term::Int(0)) => l,
        (Term::Int(0), r) => r,
        (Term::Int(a), Term::Int(b)) => Term::Int(a + b),
        (l, Term::Int(b)) if b < 0 => Term::Sub(Box::new(l), Box::new(Term::Int(-b))),
        (l, r) => Term::Add(vec![l, r]),
    }
}

pub fn sum(terms: impl IntoIterator<Item = Term>) -> Term {
    let terms: Vec<Term> = terms.into_iter().collect();
    match terms.len() {
        0 => Term::Int(0),
        1 => terms.into_iter().next().expect("one element"),
        _ => Term::Add(terms),
    }
}

pub fn sub(lhs: Term, rhs: Term) -> Term {
    match (lhs, rhs) {
        (l, Term::Int(0)) => l,
        (Term::Int(a), Term::Int(b)) => Term::Int(a - b),
        (l, Term::Int(b)) if b < 0 => Term::Add(vec![l, Term::Int(-b)]),
        (l, r) => Term::Sub(Box::new(l), Box::new(r)),
    }
}

pub fn mul(k: i64, t: Term) -> Term {
    match (k, t) {
        (1, t) => t,
        (_, Term::Int(v)) => Term::Int(k * v),
        (k, t) => Term::Mul(k, Box::new(t)),
    }
}

/// `t ≡ r (mod m)`; trivially true for `m = 1`.
pub fn congruent(t: Term, r: i64, m: i64) -> Term {
    if m == 1 {
        return Term::Bool(true);
    }
    eq(Term::Mod(Box::new(t), m), Term::Int(r.rem_euclid(m)))
}

pub fn lt(lhs: Term, rhs: Term) -> Term {
    match (lhs, rhs) {
        (Term::Int(a), Term::Int(b)) => Term::Bool(a < b),
        (l, r) => Term::Lt(Box::new(l), Box::new(r)),
    }
}

pub fn le(lhs: Term, rhs: Term) -> Term {
    match (lhs, rhs) {
        (Term::Int(a), Term::Int(b)) => Term::Bool(a <= b),
        (l, r) => Term::Le(Box::new(l), Box::new(r)),
    }
}

pub fn ge(lhs: Term, rhs: Term) -> Term {
    match (lhs, rhs) {
        (Term::Int(a), Term::Int(b)) => Term::Bool(a >= b),
        (l, r) => Term::Ge(Box::new(l), Box::new(r)),
    }
}

impl Term {
    pub fn is_true(&self) -> bool {
        matches!(self, Term::Bool(true))
    }

    /// Calls `f` on every variable name, left to right.
    pub fn visit_vars<'a>(&'a self, f: &mut impl FnMut(&'a str)) {
        match self {
            Term::Bool(_) | Term::Int(_) => {}
            Term::Var(name) => f(name),
            Term::Not(t) | Term::Mul(_, t) | Term::Mod(t, _) => t.visit_vars(f),
            Term::And(ts) | Term::Or(ts) | Term::Add(ts) => ts.iter().for_each(|t| t.visit_vars(f)),
            Term::Implies(a, b)
            | Term::Eq(a, b)
            | Term::Sub(a, b)
            | Term::Lt(a, b)
            | Term::Le(a, b)
            | Term::Ge(a, b) => {
                a.visit_vars(f);
                b.visit_vars(f);
            }
        }
    }
}

fn write_app(f: &mut fmt::Formatter<'_>, op: &str, args: &[&Term]) -> fmt::Result {
    write!(f, "({op}")?;
    for a in args {
        write!(f, " {a}")?;
    }
    f.write_str(")")
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Bool(b) => write!(f, "{b}"),
            Term::Int(v) if *v < 0 => write!(f, "(- {})", v.unsigned_abs()),
            Term::Int(v) => write!(f, "{v}"),
            Term::Var(name) => f.write_str(name),
            Term::Not(t) => write_app(f, "not", &[t]),
            Term::And(ts) => write_app(f, "and", &ts.iter().collect::<Vec<_>>()),
            Term::Or(ts) => write_app(f, "or", &ts.iter().collect::<Vec<_>>()),
            Term::Add(ts) => write_app(f, "+", &ts.iter().collect::<Vec<_>>()),
            Term::Implies(a, b) => write_app(f, "=>", &[a, b]),
            Term::Eq(a, b) => write_app(f, "=", &[a, b]),
            Term::Sub(a, b) => write_app(f, "-", &[a, b]),
            Term::Lt(a, b) => write_app(f, "<", &[a, b]),
            Term::Le(a, b) => write_app(f, "<=", &[a, b]),
            Term::Ge(a, b) => write_app(f, ">=", &[a, b]),
            Term::Mul(k, t) => write_app(f, "*", &[&Term::Int(*k), t]),
            Term::Mod(t, m) => write_app(f, "mod", &[t, &Term::Int(*m)]),
        }
    }
}
