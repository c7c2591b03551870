//! The query AST: algebra terms and the pure expression language used for
//! their function arguments.
//!
//! Expressions may embed source-free algebra terms and algebra terms may
//! embed expressions (an `Embedded` input computes a bag inside a function
//! body), so the two types are mutually recursive.

use std::collections::BTreeSet;
use std::fmt;

use crate::monoid::Monoid;
use crate::scalar::Scalar;
use crate::value::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Eq => "=",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::And => "and",
            BinOp::Or => "or",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Builtin {
    /// Nearest element of a bag of points to a given point, by squared
    /// euclidean distance; ties break in canonical value order.
    Closest,
    /// The sole element of a singleton bag; anything else is a malformed
    /// state error.
    Elem,
}

impl Builtin {
    pub fn name(self) -> &'static str {
        match self {
            Builtin::Closest => "closest",
            Builtin::Elem => "elem",
        }
    }
}

/// Tuple-destructuring parameter patterns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Pattern {
    Var(String),
    Tuple(Vec<Pattern>),
    Wildcard,
}

impl Pattern {
    pub fn var(name: impl Into<String>) -> Pattern {
        Pattern::Var(name.into())
    }

    pub fn pair(a: Pattern, b: Pattern) -> Pattern {
        Pattern::Tuple(vec![a, b])
    }

    pub fn bound_names(&self, out: &mut BTreeSet<String>) {
        match self {
            Pattern::Var(n) => {
                out.insert(n.clone());
            }
            Pattern::Tuple(ps) => ps.iter().for_each(|p| p.bound_names(out)),
            Pattern::Wildcard => {}
        }
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Pattern::Var(n) => write!(f, "{n}"),
            Pattern::Wildcard => write!(f, "_"),
            Pattern::Tuple(ps) => {
                write!(f, "(")?;
                for (i, p) in ps.iter().enumerate() {
                    if i > 0 {
                        write!(f, " ")?;
                    }
                    write!(f, "{p}")?;
                }
                write!(f, ")")
            }
        }
    }
}

/// Pure expressions: the bodies of the algebra's anonymous functions.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr<F: Scalar> {
    Var(String),
    Lit(Value<F>),
    Tuple(Vec<Expr<F>>),
    Proj(usize, Box<Expr<F>>),
    Bin(BinOp, Box<Expr<F>>, Box<Expr<F>>),
    Not(Box<Expr<F>>),
    If(Box<Expr<F>>, Box<Expr<F>>, Box<Expr<F>>),
    Singleton(Box<Expr<F>>),
    EmptyBag,
    Union(Box<Expr<F>>, Box<Expr<F>>),
    Lambda(Pattern, Box<Expr<F>>),
    Apply(Box<Expr<F>>, Box<Expr<F>>),
    Alg(Box<AlgebraTerm<F>>),
    Call(Builtin, Vec<Expr<F>>),
}

/// Algebra terms. `SMap1`..`Mix` and `KMap` only appear in transformed
/// queries, never in user input.
#[derive(Debug, Clone, PartialEq)]
pub enum AlgebraTerm<F: Scalar> {
    Source(usize),
    Var(String),
    /// A bag computed by an expression under the enclosing bindings.
    Embedded(Box<Expr<F>>),
    CMap(Expr<F>, Box<AlgebraTerm<F>>),
    GroupBy(Box<AlgebraTerm<F>>),
    CoGroup(Box<AlgebraTerm<F>>, Box<AlgebraTerm<F>>),
    Reduce(Monoid, Box<AlgebraTerm<F>>),
    Repeat {
        param: String,
        rounds: usize,
        init: Box<AlgebraTerm<F>>,
        body: Box<AlgebraTerm<F>>,
    },
    SMap1(Expr<F>, Box<AlgebraTerm<F>>),
    SMap2(Expr<F>, Box<AlgebraTerm<F>>),
    SMap3(Expr<F>, Box<AlgebraTerm<F>>),
    Swap(Box<AlgebraTerm<F>>),
    Mix(Box<AlgebraTerm<F>>),
    KMap(Expr<F>, Box<AlgebraTerm<F>>),
}

impl<F: Scalar> Expr<F> {
    pub fn free_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_free(&mut BTreeSet::new(), &mut out);
        out
    }

    fn collect_free(&self, bound: &mut BTreeSet<String>, out: &mut BTreeSet<String>) {
        match self {
            Expr::Var(n) => {
                if !bound.contains(n) {
                    out.insert(n.clone());
                }
            }
            Expr::Lit(_) | Expr::EmptyBag => {}
            Expr::Tuple(es) => es.iter().for_each(|e| e.collect_free(bound, out)),
            Expr::Proj(_, e) | Expr::Not(e) | Expr::Singleton(e) => e.collect_free(bound, out),
            Expr::Bin(_, a, b) | Expr::Union(a, b) | Expr::Apply(a, b) => {
                a.collect_free(bound, out);
                b.collect_free(bound, out);
            }
            Expr::If(c, t, e) => {
                c.collect_free(bound, out);
                t.collect_free(bound, out);
                e.collect_free(bound, out);
            }
            Expr::Lambda(p, body) => {
                let mut names = BTreeSet::new();
                p.bound_names(&mut names);
                let added: Vec<_> = names.into_iter().filter(|n| bound.insert(n.clone())).collect();
                body.collect_free(bound, out);
                for n in added {
                    bound.remove(&n);
                }
            }
            Expr::Alg(t) => t.collect_free(bound, out),
            Expr::Call(_, es) => es.iter().for_each(|e| e.collect_free(bound, out)),
        }
    }

    /// All stream-source indices referenced anywhere below this expression.
    pub fn sources(&self) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        self.collect_sources(&mut out);
        out
    }

    fn collect_sources(&self, out: &mut BTreeSet<usize>) {
        match self {
            Expr::Var(_) | Expr::Lit(_) | Expr::EmptyBag => {}
            Expr::Tuple(es) | Expr::Call(_, es) => {
                es.iter().for_each(|e| e.collect_sources(out))
            }
            Expr::Proj(_, e) | Expr::Not(e) | Expr::Singleton(e) | Expr::Lambda(_, e) => {
                e.collect_sources(out)
            }
            Expr::Bin(_, a, b) | Expr::Union(a, b) | Expr::Apply(a, b) => {
                a.collect_sources(out);
                b.collect_sources(out);
            }
            Expr::If(c, t, e) => {
                c.collect_sources(out);
                t.collect_sources(out);
                e.collect_sources(out);
            }
            Expr::Alg(t) => t.collect_sources(out),
        }
    }
}

impl<F: Scalar> AlgebraTerm<F> {
    pub fn constructor_name(&self) -> &'static str {
        match self {
            AlgebraTerm::Source(_) => "source",
            AlgebraTerm::Var(_) => "var",
            AlgebraTerm::Embedded(_) => "embed",
            AlgebraTerm::CMap(..) => "cmap",
            AlgebraTerm::GroupBy(_) => "groupby",
            AlgebraTerm::CoGroup(..) => "cogroup",
            AlgebraTerm::Reduce(..) => "reduce",
            AlgebraTerm::Repeat { .. } => "repeat",
            AlgebraTerm::SMap1(..) => "smap1",
            AlgebraTerm::SMap2(..) => "smap2",
            AlgebraTerm::SMap3(..) => "smap3",
            AlgebraTerm::Swap(_) => "swap",
            AlgebraTerm::Mix(_) => "mix",
            AlgebraTerm::KMap(..) => "kmap",
        }
    }

    pub fn free_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_free(&mut BTreeSet::new(), &mut out);
        out
    }

    fn collect_free(&self, bound: &mut BTreeSet<String>, out: &mut BTreeSet<String>) {
        match self {
            AlgebraTerm::Source(_) => {}
            AlgebraTerm::Var(n) => {
                if !bound.contains(n) {
                    out.insert(n.clone());
                }
            }
            AlgebraTerm::Embedded(e) => e.collect_free(bound, out),
            AlgebraTerm::CMap(f, x)
            | AlgebraTerm::SMap1(f, x)
            | AlgebraTerm::SMap2(f, x)
            | AlgebraTerm::SMap3(f, x)
            | AlgebraTerm::KMap(f, x) => {
                f.collect_free(bound, out);
                x.collect_free(bound, out);
            }
            AlgebraTerm::GroupBy(x) | AlgebraTerm::Swap(x) | AlgebraTerm::Mix(x) => {
                x.collect_free(bound, out)
            }
            AlgebraTerm::CoGroup(a, b) => {
                a.collect_free(bound, out);
                b.collect_free(bound, out);
            }
            AlgebraTerm::Reduce(_, x) => x.collect_free(bound, out),
            AlgebraTerm::Repeat { param, init, body, .. } => {
                init.collect_free(bound, out);
                let added = bound.insert(param.clone());
                body.collect_free(bound, out);
                if added {
                    bound.remove(param);
                }
            }
        }
    }

    pub fn sources(&self) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        self.collect_sources(&mut out);
        out
    }

    fn collect_sources(&self, out: &mut BTreeSet<usize>) {
        match self {
            AlgebraTerm::Source(i) => {
                out.insert(*i);
            }
            AlgebraTerm::Var(_) => {}
            AlgebraTerm::Embedded(e) => e.collect_sources(out),
            AlgebraTerm::CMap(f, x)
            | AlgebraTerm::SMap1(f, x)
            | AlgebraTerm::SMap2(f, x)
            | AlgebraTerm::SMap3(f, x)
            | AlgebraTerm::KMap(f, x) => {
                f.collect_sources(out);
                x.collect_sources(out);
            }
            AlgebraTerm::GroupBy(x) | AlgebraTerm::Swap(x) | AlgebraTerm::Mix(x) => {
                x.collect_sources(out)
            }
            AlgebraTerm::CoGroup(a, b) => {
                a.collect_sources(out);
                b.collect_sources(out);
            }
            AlgebraTerm::Reduce(_, x) => x.collect_sources(out),
            AlgebraTerm::Repeat { init, body, .. } => {
                init.collect_sources(out);
                body.collect_sources(out);
            }
        }
    }
}

impl<F: Scalar> fmt::Display for Expr<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Var(n) => write!(f, "{n}"),
            Expr::Lit(v) => write!(f, "{v}"),
            Expr::Tuple(es) => {
                write!(f, "(tuple")?;
                for e in es {
                    write!(f, " {e}")?;
                }
                write!(f, ")")
            }
            Expr::Proj(0, e) => write!(f, "(fst {e})"),
            Expr::Proj(1, e) => write!(f, "(snd {e})"),
            Expr::Proj(i, e) => write!(f, "(get {e} {i})"),
            Expr::Bin(op, a, b) => write!(f, "({} {a} {b})", op.symbol()),
            Expr::Not(e) => write!(f, "(not {e})"),
            Expr::If(c, t, e) => write!(f, "(if {c} {t} {e})"),
            Expr::Singleton(e) => write!(f, "(bag {e})"),
            Expr::EmptyBag => write!(f, "(bag)"),
            Expr::Union(a, b) => write!(f, "(union {a} {b})"),
            Expr::Lambda(p, b) => match p {
                Pattern::Tuple(ps) => {
                    write!(f, "(lambda (")?;
                    for (i, p) in ps.iter().enumerate() {
                        if i > 0 {
                            write!(f, " ")?;
                        }
                        write!(f, "{p}")?;
                    }
                    write!(f, ") {b})")
                }
                p => write!(f, "(lambda ({p}) {b})"),
            },
            Expr::Apply(g, a) => write!(f, "(apply {g} {a})"),
            Expr::Alg(t) => write!(f, "{t}"),
            Expr::Call(bi, es) => {
                write!(f, "({}", bi.name())?;
                for e in es {
                    write!(f, " {e}")?;
                }
                write!(f, ")")
            }
        }
    }
}

impl<F: Scalar> fmt::Display for AlgebraTerm<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AlgebraTerm::Source(i) => write!(f, "(source {i})"),
            AlgebraTerm::Var(n) => write!(f, "{n}"),
            AlgebraTerm::Embedded(e) => write!(f, "(embed {e})"),
            AlgebraTerm::CMap(g, x) => write!(f, "(cmap {g} {x})"),
            AlgebraTerm::GroupBy(x) => write!(f, "(groupby {x})"),
            AlgebraTerm::CoGroup(a, b) => write!(f, "(cogroup {a} {b})"),
            AlgebraTerm::Reduce(m, x) => write!(f, "(reduce {m} {x})"),
            AlgebraTerm::Repeat { param, rounds, init, body } => {
                write!(f, "(repeat (lambda ({param}) {body}) {rounds} {init})")
            }
            AlgebraTerm::SMap1(g, x) => write!(f, "(smap1 {g} {x})"),
            AlgebraTerm::SMap2(g, x) => write!(f, "(smap2 {g} {x})"),
            AlgebraTerm::SMap3(g, x) => write!(f, "(smap3 {g} {x})"),
            AlgebraTerm::Swap(x) => write!(f, "(swap {x})"),
            AlgebraTerm::Mix(x) => write!(f, "(mix {x})"),
            AlgebraTerm::KMap(g, x) => write!(f, "(kmap {g} {x})"),
        }
    }
}

/// Short constructors used by fixtures, rewrites, and tests.
pub mod build {
    use super::*;

    pub fn var<F: Scalar>(n: &str) -> Expr<F> {
        Expr::Var(n.to_string())
    }

    pub fn int<F: Scalar>(i: i64) -> Expr<F> {
        Expr::Lit(Value::Int(i))
    }

    pub fn float<F: Scalar>(x: F) -> Expr<F> {
        Expr::Lit(Value::Float(x))
    }

    pub fn pair<F: Scalar>(a: Expr<F>, b: Expr<F>) -> Expr<F> {
        Expr::Tuple(vec![a, b])
    }

    pub fn fst<F: Scalar>(e: Expr<F>) -> Expr<F> {
        Expr::Proj(0, Box::new(e))
    }

    pub fn snd<F: Scalar>(e: Expr<F>) -> Expr<F> {
        Expr::Proj(1, Box::new(e))
    }

    pub fn get<F: Scalar>(i: usize, e: Expr<F>) -> Expr<F> {
        Expr::Proj(i, Box::new(e))
    }

    pub fn bin<F: Scalar>(op: BinOp, a: Expr<F>, b: Expr<F>) -> Expr<F> {
        Expr::Bin(op, Box::new(a), Box::new(b))
    }

    pub fn single<F: Scalar>(e: Expr<F>) -> Expr<F> {
        Expr::Singleton(Box::new(e))
    }

    pub fn lam<F: Scalar>(p: Pattern, body: Expr<F>) -> Expr<F> {
        Expr::Lambda(p, Box::new(body))
    }

    pub fn lam1<F: Scalar>(n: &str, body: Expr<F>) -> Expr<F> {
        lam(Pattern::var(n), body)
    }

    pub fn lam2<F: Scalar>(a: &str, b: &str, body: Expr<F>) -> Expr<F> {
        lam(Pattern::pair(Pattern::var(a), Pattern::var(b)), body)
    }

    pub fn apply<F: Scalar>(f: Expr<F>, a: Expr<F>) -> Expr<F> {
        Expr::Apply(Box::new(f), Box::new(a))
    }

    pub fn alg<F: Scalar>(t: AlgebraTerm<F>) -> Expr<F> {
        Expr::Alg(Box::new(t))
    }

    pub fn source<F: Scalar>(i: usize) -> AlgebraTerm<F> {
        AlgebraTerm::Source(i)
    }

    pub fn tvar<F: Scalar>(n: &str) -> AlgebraTerm<F> {
        AlgebraTerm::Var(n.to_string())
    }

    pub fn embedded<F: Scalar>(e: Expr<F>) -> AlgebraTerm<F> {
        AlgebraTerm::Embedded(Box::new(e))
    }

    pub fn cmap<F: Scalar>(f: Expr<F>, x: AlgebraTerm<F>) -> AlgebraTerm<F> {
        AlgebraTerm::CMap(f, Box::new(x))
    }

    pub fn group_by<F: Scalar>(x: AlgebraTerm<F>) -> AlgebraTerm<F> {
        AlgebraTerm::GroupBy(Box::new(x))
    }

    pub fn cogroup<F: Scalar>(a: AlgebraTerm<F>, b: AlgebraTerm<F>) -> AlgebraTerm<F> {
        AlgebraTerm::CoGroup(Box::new(a), Box::new(b))
    }

    pub fn reduce<F: Scalar>(m: Monoid, x: AlgebraTerm<F>) -> AlgebraTerm<F> {
        AlgebraTerm::Reduce(m, Box::new(x))
    }

    /// The identity function `\x. {x}`.
    pub fn identity_fn<F: Scalar>() -> Expr<F> {
        lam1("x", single(var("x")))
    }
}
