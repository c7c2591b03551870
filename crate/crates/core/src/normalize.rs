//! Rewriting arbitrary algebra terms into the normal form: a tree of
//! `groupBy`/`coGroup` nodes connected by single `cMap`s, optionally capped
//! by a `reduce`.
//!
//! ```text
//! q ::= reduce(m, c) | c
//! c ::= cMap(f, e)
//! e ::= groupBy(c) | coGroup(c1, c2) | source | var
//! ```
//!
//! Cascaded cMaps fuse into a nested cMap; identity cMaps are inserted where
//! the grammar demands one. Rewrites run innermost-first to a fixpoint.

use crate::error::{Error, Result};
use crate::monoid::Monoid;
use crate::scalar::Scalar;
use crate::term::build::identity_fn;
use crate::term::{AlgebraTerm, Expr};

/// A term satisfying the normalized grammar.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedTerm<F: Scalar>(AlgebraTerm<F>);

impl<F: Scalar> NormalizedTerm<F> {
    pub fn term(&self) -> &AlgebraTerm<F> {
        &self.0
    }

    pub fn into_term(self) -> AlgebraTerm<F> {
        self.0
    }

    /// Wraps a term after checking the grammar.
    pub fn checked(t: AlgebraTerm<F>) -> Result<Self> {
        check_normalized(&t)?;
        Ok(NormalizedTerm(t))
    }
}

impl<F: Scalar> std::fmt::Display for NormalizedTerm<F> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.0.fmt(f)
    }
}

struct Fresh {
    counter: usize,
}

impl Fresh {
    fn next(&mut self, prefix: &str) -> String {
        let n = self.counter;
        self.counter += 1;
        format!("__{prefix}{n}")
    }
}

/// Fuses every `cMap(f, cMap(g, X))` into `cMap(\x. cMap(f, g(x)), X)`,
/// applied innermost-first to a fixpoint. Semantics are preserved.
pub fn fuse_cmaps<F: Scalar>(term: &AlgebraTerm<F>) -> AlgebraTerm<F> {
    let mut fresh = Fresh { counter: 0 };
    fuse_term(term.clone(), &mut fresh)
}

fn fuse_term<F: Scalar>(term: AlgebraTerm<F>, fresh: &mut Fresh) -> AlgebraTerm<F> {
    use AlgebraTerm as T;
    let term = match term {
        T::CMap(f, x) => T::CMap(fuse_expr(f, fresh), Box::new(fuse_term(*x, fresh))),
        T::GroupBy(x) => T::GroupBy(Box::new(fuse_term(*x, fresh))),
        T::CoGroup(a, b) => T::CoGroup(
            Box::new(fuse_term(*a, fresh)),
            Box::new(fuse_term(*b, fresh)),
        ),
        T::Reduce(m, x) => T::Reduce(m, Box::new(fuse_term(*x, fresh))),
        T::Repeat { param, rounds, init, body } => T::Repeat {
            param,
            rounds,
            init: Box::new(fuse_term(*init, fresh)),
            body: Box::new(fuse_term(*body, fresh)),
        },
        T::SMap1(f, x) => T::SMap1(fuse_expr(f, fresh), Box::new(fuse_term(*x, fresh))),
        T::SMap2(f, x) => T::SMap2(fuse_expr(f, fresh), Box::new(fuse_term(*x, fresh))),
        T::SMap3(f, x) => T::SMap3(fuse_expr(f, fresh), Box::new(fuse_term(*x, fresh))),
        T::Swap(x) => T::Swap(Box::new(fuse_term(*x, fresh))),
        T::Mix(x) => T::Mix(Box::new(fuse_term(*x, fresh))),
        T::KMap(f, x) => T::KMap(fuse_expr(f, fresh), Box::new(fuse_term(*x, fresh))),
        T::Embedded(e) => T::Embedded(Box::new(fuse_expr(*e, fresh))),
        leaf @ (T::Source(_) | T::Var(_)) => leaf,
    };
    // Children are fused; contract cascades at this node.
    let mut term = term;
    while let T::CMap(f, x) = term {
        if let T::CMap(g, y) = *x {
            term = T::CMap(compose_cmaps(f, g, fresh), y);
        } else {
            term = T::CMap(f, x);
            break;
        }
    }
    term
}

/// `\x. cMap(f, g(x))`
fn compose_cmaps<F: Scalar>(f: Expr<F>, g: Expr<F>, fresh: &mut Fresh) -> Expr<F> {
    let x = fresh.next("x");
    Expr::Lambda(
        crate::term::Pattern::var(x.clone()),
        Box::new(Expr::Alg(Box::new(AlgebraTerm::CMap(
            f,
            Box::new(AlgebraTerm::Embedded(Box::new(Expr::Apply(
                Box::new(g),
                Box::new(Expr::Var(x)),
            )))),
        )))),
    )
}

fn fuse_expr<F: Scalar>(e: Expr<F>, fresh: &mut Fresh) -> Expr<F> {
    use Expr as E;
    match e {
        E::Alg(t) => E::Alg(Box::new(fuse_term(*t, fresh))),
        E::Tuple(es) => E::Tuple(es.into_iter().map(|e| fuse_expr(e, fresh)).collect()),
        E::Proj(i, e) => E::Proj(i, Box::new(fuse_expr(*e, fresh))),
        E::Bin(op, a, b) => E::Bin(op, Box::new(fuse_expr(*a, fresh)), Box::new(fuse_expr(*b, fresh))),
        E::Not(e) => E::Not(Box::new(fuse_expr(*e, fresh))),
        E::If(c, t, f) => E::If(
            Box::new(fuse_expr(*c, fresh)),
            Box::new(fuse_expr(*t, fresh)),
            Box::new(fuse_expr(*f, fresh)),
        ),
        E::Singleton(e) => E::Singleton(Box::new(fuse_expr(*e, fresh))),
        E::Union(a, b) => E::Union(Box::new(fuse_expr(*a, fresh)), Box::new(fuse_expr(*b, fresh))),
        E::Lambda(p, b) => E::Lambda(p, Box::new(fuse_expr(*b, fresh))),
        E::Apply(f, a) => E::Apply(Box::new(fuse_expr(*f, fresh)), Box::new(fuse_expr(*a, fresh))),
        E::Call(bi, es) => E::Call(bi, es.into_iter().map(|e| fuse_expr(e, fresh)).collect()),
        leaf @ (E::Var(_) | E::Lit(_) | E::EmptyBag) => leaf,
    }
}

/// Rewrites a term built from the user-facing constructors into normal form.
/// The result evaluates identically on all inputs.
pub fn normalize<F: Scalar>(term: &AlgebraTerm<F>) -> Result<NormalizedTerm<F>> {
    validate_user_term(term, &mut vec!["root".into()])?;
    let simplified = simplify(term.clone());
    let fused = fuse_cmaps(&simplified);
    let out = norm_q(fused, &mut vec!["root".into()])?;
    NormalizedTerm::checked(out)
}

/// `reduce(union, X) = X` and `reduce(lift(union), X) = groupBy(X)`; these
/// let inner reduces with bag-valued results normalize away.
fn simplify<F: Scalar>(term: AlgebraTerm<F>) -> AlgebraTerm<F> {
    use AlgebraTerm as T;
    match term {
        T::Reduce(m, x) => {
            let x = simplify(*x);
            match m {
                Monoid::Union => x,
                Monoid::Lifted(inner) if *inner == Monoid::Union => T::GroupBy(Box::new(x)),
                m => T::Reduce(m, Box::new(x)),
            }
        }
        T::CMap(f, x) => T::CMap(f, Box::new(simplify(*x))),
        T::GroupBy(x) => T::GroupBy(Box::new(simplify(*x))),
        T::CoGroup(a, b) => T::CoGroup(Box::new(simplify(*a)), Box::new(simplify(*b))),
        other => other,
    }
}

fn path_str(path: &[String]) -> String {
    path.join(".")
}

fn validate_user_term<F: Scalar>(term: &AlgebraTerm<F>, path: &mut Vec<String>) -> Result<()> {
    use AlgebraTerm as T;
    path.push(term.constructor_name().to_string());
    let r = match term {
        T::Source(_) | T::Var(_) => Ok(()),
        T::CMap(f, x) => {
            let srcs = f.sources();
            if !srcs.is_empty() {
                Err(Error::NotNormalized {
                    path: path_str(path),
                    reason: format!("cMap function references stream source {:?}", srcs),
                })
            } else {
                validate_user_term(x, path)
            }
        }
        T::GroupBy(x) | T::Reduce(_, x) => validate_user_term(x, path),
        T::CoGroup(a, b) => {
            validate_user_term(a, path)?;
            validate_user_term(b, path)
        }
        T::Repeat { .. } => Err(Error::NotNormalized {
            path: path_str(path),
            reason: "iteration is compiled through its step, not normalized directly".into(),
        }),
        other => Err(Error::NotNormalized {
            path: path_str(path),
            reason: format!("constructor `{}` is not user input", other.constructor_name()),
        }),
    };
    path.pop();
    r
}

fn norm_q<F: Scalar>(term: AlgebraTerm<F>, path: &mut Vec<String>) -> Result<AlgebraTerm<F>> {
    use AlgebraTerm as T;
    match term {
        T::Reduce(m, x) => {
            path.push("reduce".into());
            let c = norm_c(*x, path)?;
            path.pop();
            Ok(T::Reduce(m, Box::new(c)))
        }
        other => norm_c(other, path),
    }
}

fn norm_c<F: Scalar>(term: AlgebraTerm<F>, path: &mut Vec<String>) -> Result<AlgebraTerm<F>> {
    use AlgebraTerm as T;
    match term {
        T::CMap(f, x) => {
            path.push("cmap".into());
            let e = norm_e(*x, path)?;
            path.pop();
            Ok(T::CMap(f, Box::new(e)))
        }
        other => {
            let e = norm_e(other, path)?;
            Ok(T::CMap(identity_fn(), Box::new(e)))
        }
    }
}

fn norm_e<F: Scalar>(term: AlgebraTerm<F>, path: &mut Vec<String>) -> Result<AlgebraTerm<F>> {
    use AlgebraTerm as T;
    match term {
        T::GroupBy(x) => {
            path.push("groupby".into());
            let c = norm_c(*x, path)?;
            path.pop();
            Ok(T::GroupBy(Box::new(c)))
        }
        T::CoGroup(a, b) => {
            path.push("cogroup.left".into());
            let l = norm_c(*a, path)?;
            path.pop();
            path.push("cogroup.right".into());
            let r = norm_c(*b, path)?;
            path.pop();
            Ok(T::CoGroup(Box::new(l), Box::new(r)))
        }
        leaf @ (T::Source(_) | T::Var(_)) => Ok(leaf),
        other => Err(Error::NotNormalized {
            path: path_str(path),
            reason: format!(
                "`{}` cannot appear as a grouping input",
                other.constructor_name()
            ),
        }),
    }
}

/// Structural check against the normalized grammar.
pub fn check_normalized<F: Scalar>(term: &AlgebraTerm<F>) -> Result<()> {
    let mut path = vec!["root".into()];
    check_q(term, &mut path)
}

fn check_q<F: Scalar>(term: &AlgebraTerm<F>, path: &mut Vec<String>) -> Result<()> {
    match term {
        AlgebraTerm::Reduce(_, x) => check_c(x, path),
        other => check_c(other, path),
    }
}

fn check_c<F: Scalar>(term: &AlgebraTerm<F>, path: &mut Vec<String>) -> Result<()> {
    match term {
        AlgebraTerm::CMap(f, x) => {
            if !matches!(f, Expr::Lambda(..)) {
                return Err(Error::NotNormalized {
                    path: path_str(path),
                    reason: "cMap function is not a lambda".into(),
                });
            }
            check_e(x, path)
        }
        other => Err(Error::NotNormalized {
            path: path_str(path),
            reason: format!("expected a cMap, found `{}`", other.constructor_name()),
        }),
    }
}

fn check_e<F: Scalar>(term: &AlgebraTerm<F>, path: &mut Vec<String>) -> Result<()> {
    use AlgebraTerm as T;
    path.push(term.constructor_name().to_string());
    let r = match term {
        T::GroupBy(x) => check_c(x, path),
        T::CoGroup(a, b) => check_c(a, path).and_then(|_| check_c(b, path)),
        T::Source(_) | T::Var(_) => Ok(()),
        other => Err(Error::NotNormalized {
            path: path_str(path),
            reason: format!(
                "`{}` cannot appear as a grouping input",
                other.constructor_name()
            ),
        }),
    };
    path.pop();
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{evaluate, Env, EvalCtx};
    use crate::term::build::*;
    use crate::term::BinOp;
    use crate::value::{bag, Value};
    use std::collections::BTreeMap;

    type V = Value<f64>;
    type T = AlgebraTerm<f64>;

    fn eval1(term: &T, src0: V) -> V {
        let mut sources = BTreeMap::new();
        sources.insert(0, src0);
        let ctx = EvalCtx::new(&sources);
        evaluate(term, &ctx, &mut Env::new()).unwrap()
    }

    #[test]
    fn fusion_preserves_semantics() {
        // f(y) = {y+1}, g(x) = {x,x}, S = {1,2}: both forms give {2,2,3,3}.
        let f = lam1("y", single(bin(BinOp::Add, var("y"), int(1))));
        let g = lam1(
            "x",
            Expr::Union(Box::new(single(var("x"))), Box::new(single(var("x")))),
        );
        let term: T = cmap(f, cmap(g, source(0)));
        let fused = fuse_cmaps(&term);
        assert!(matches!(&fused, T::CMap(_, x) if matches!(**x, T::Source(0))));
        let input = bag::<f64>([V::Int(1), V::Int(2)]);
        let expect = bag::<f64>([V::Int(2), V::Int(2), V::Int(3), V::Int(3)]);
        assert_eq!(eval1(&term, input.clone()), expect);
        assert_eq!(eval1(&fused, input), expect);
    }

    #[test]
    fn fusion_without_redex_is_identity() {
        let term: T = group_by(cmap(identity_fn(), source(0)));
        assert_eq!(fuse_cmaps(&term), term);
    }

    #[test]
    fn triple_cascade_fuses_to_one_cmap() {
        let bump = |n: i64| lam1("v", single(bin(BinOp::Add, var("v"), int(n))));
        let term: T = cmap(bump(1), cmap(bump(2), cmap(bump(3), source(0))));
        let fused = fuse_cmaps(&term);
        assert!(matches!(&fused, T::CMap(_, x) if matches!(**x, T::Source(0))));
        let input = bag::<f64>([V::Int(0), V::Int(10)]);
        assert_eq!(
            eval1(&fused, input),
            bag::<f64>([V::Int(6), V::Int(16)])
        );
    }

    #[test]
    fn normalize_inserts_identity_cmaps() {
        let term: T = group_by(source(0));
        let normalized = normalize(&term).unwrap();
        // cMap(id, groupBy(cMap(id, source 0)))
        match normalized.term() {
            T::CMap(_, e) => match &**e {
                T::GroupBy(c) => assert!(matches!(&**c, T::CMap(_, s) if matches!(**s, T::Source(0)))),
                other => panic!("unexpected {other}"),
            },
            other => panic!("unexpected {other}"),
        }
        let input = bag::<f64>([
            V::pair(V::Int(1), V::Int(2)),
            V::pair(V::Int(1), V::Int(3)),
        ]);
        assert_eq!(
            eval1(normalized.term(), input.clone()),
            eval1(&term, input)
        );
    }

    #[test]
    fn normalize_is_idempotent() {
        let term: T = group_by(source(0));
        let once = normalize(&term).unwrap();
        let twice = normalize(once.term()).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn already_normalized_term_is_unchanged() {
        let term: T = cmap(
            lam2("k", "s", single(pair(var("k"), var("s")))),
            group_by(cmap(identity_fn(), source(0))),
        );
        let normalized = normalize(&term).unwrap();
        assert_eq!(normalized.term(), &term);
    }

    #[test]
    fn inner_lifted_union_reduce_becomes_groupby() {
        let term: T = cmap(
            identity_fn(),
            reduce(Monoid::lifted(Monoid::Union), cmap(identity_fn(), source(0))),
        );
        let normalized = normalize(&term).unwrap();
        check_normalized(normalized.term()).unwrap();
        let input = bag::<f64>([V::pair(V::Int(1), V::Int(2))]);
        assert_eq!(eval1(normalized.term(), input.clone()), eval1(&term, input));
    }

    #[test]
    fn source_inside_function_is_rejected() {
        let term: T = cmap(lam1("x", alg(source(1))), source(0));
        let err = normalize(&term).unwrap_err();
        assert!(matches!(err, Error::NotNormalized { .. }), "{err}");
    }

    #[test]
    fn transformed_constructors_are_rejected() {
        let term: T = AlgebraTerm::Swap(Box::new(source(0)));
        assert!(normalize(&term).is_err());
    }
}
