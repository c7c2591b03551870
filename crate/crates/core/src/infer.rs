//! Monoid inference: certifies a term as a homomorphism over its stream
//! sources and names the merge monoid.
//!
//! The judgment `env |- term : m` means that evaluating the term on merged
//! inputs equals merging the two evaluations with `m`. Rules are
//! syntax-directed, one per constructor, with the invariance rule tried first
//! as a short-circuit: a term whose free names are all bound invariant is
//! itself invariant. Inference is sound, not complete; a failure names the
//! offending subterm and is the trigger for factoring out non-homomorphic
//! parts.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::monoid::Monoid;
use crate::scalar::Scalar;
use crate::term::{AlgebraTerm, Expr, Pattern};

/// Names a stream source or a variable in the monoid environment.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Binding {
    Source(usize),
    Var(String),
}

/// Maps sources and variables to the monoid they merge under. Lookup of an
/// unbound name is an inference failure, never a default.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MonoidEnv {
    map: BTreeMap<Binding, Monoid>,
}

impl MonoidEnv {
    pub fn new() -> Self {
        Self::default()
    }

    /// Binds every listed source to bag union (the stream judgment).
    pub fn streams(sources: impl IntoIterator<Item = usize>) -> Self {
        let mut env = Self::new();
        for s in sources {
            env.bind_source(s, Monoid::Union);
        }
        env
    }

    pub fn bind_source(&mut self, i: usize, m: Monoid) -> &mut Self {
        self.map.insert(Binding::Source(i), m);
        self
    }

    pub fn bind_var(&mut self, name: impl Into<String>, m: Monoid) -> &mut Self {
        self.map.insert(Binding::Var(name.into()), m);
        self
    }

    fn source(&self, i: usize) -> Option<&Monoid> {
        self.map.get(&Binding::Source(i))
    }

    fn var(&self, name: &str) -> Option<&Monoid> {
        self.map.get(&Binding::Var(name.to_string()))
    }

    fn is_invariant_var(&self, name: &str) -> bool {
        self.var(name) == Some(&Monoid::Box)
    }

    fn is_invariant_source(&self, i: usize) -> bool {
        self.source(i) == Some(&Monoid::Box)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InferenceResult {
    Inferred(Monoid),
    Failure { path: String, reason: String },
}

impl InferenceResult {
    pub fn inferred(&self) -> Option<&Monoid> {
        match self {
            InferenceResult::Inferred(m) => Some(m),
            InferenceResult::Failure { .. } => None,
        }
    }
}

#[derive(Debug, Clone)]
struct Fail {
    path: String,
    reason: String,
}

type Inf<T> = std::result::Result<T, Fail>;

#[derive(Debug, Clone, Copy, Default)]
pub struct InferOpts {
    /// Use the unrestricted coGroup judgment (both group sides merge by bag
    /// union) instead of the one-to-one / one-to-many form. Compilation
    /// always uses the restricted rule; this exists for the law suites.
    pub unrestricted_cogroup: bool,
}

/// How the outputs of a grouped function body merge.
#[derive(Debug, Clone, PartialEq)]
enum BodyShape {
    /// Output is fixed when the group is fixed.
    Invariant,
    /// Outputs on a merged group are the bag union of the per-side outputs.
    Union,
    /// One output element per group whose value merges with the monoid.
    Keyed(Monoid),
}

/// Infers the merge monoid of `term` under `env`, restricted-join rule.
pub fn infer<F: Scalar>(env: &MonoidEnv, term: &AlgebraTerm<F>) -> InferenceResult {
    infer_with(env, term, InferOpts::default())
}

pub fn infer_with<F: Scalar>(
    env: &MonoidEnv,
    term: &AlgebraTerm<F>,
    opts: InferOpts,
) -> InferenceResult {
    let mut path = vec!["root".to_string()];
    match infer_term(term, env, opts, &mut path) {
        Ok(m) => InferenceResult::Inferred(m),
        Err(f) => InferenceResult::Failure { path: f.path, reason: f.reason },
    }
}

/// Like [`infer`] but failures become errors; used by the compile pipeline.
pub fn infer_required<F: Scalar>(env: &MonoidEnv, term: &AlgebraTerm<F>) -> Result<Monoid> {
    match infer(env, term) {
        InferenceResult::Inferred(m) => Ok(m),
        InferenceResult::Failure { path, reason } => Err(Error::Inference { path, reason }),
    }
}

fn fail<T>(path: &[String], reason: impl Into<String>) -> Inf<T> {
    Err(Fail { path: path.join("."), reason: reason.into() })
}

fn snippet(s: impl ToString) -> String {
    let s = s.to_string();
    if s.len() > 96 {
        format!("{}...", &s[..96])
    } else {
        s
    }
}

/// True when every free variable and source of the term is bound invariant.
fn term_is_invariant<F: Scalar>(term: &AlgebraTerm<F>, env: &MonoidEnv) -> bool {
    term.free_vars().iter().all(|v| env.is_invariant_var(v))
        && term.sources().iter().all(|s| env.is_invariant_source(*s))
}

fn expr_is_invariant<F: Scalar>(e: &Expr<F>, env: &MonoidEnv) -> bool {
    e.free_vars().iter().all(|v| env.is_invariant_var(v))
        && e.sources().iter().all(|s| env.is_invariant_source(*s))
}

/// The free names of a function must be invariant for it to be mapped over a
/// changing bag: a captured stream-dependent value would change the function
/// between the two sides of a merge.
fn captures_invariant<F: Scalar>(f: &Expr<F>, env: &MonoidEnv, path: &[String]) -> Inf<()> {
    for v in f.free_vars() {
        match env.var(&v) {
            Some(Monoid::Box) => {}
            Some(m) => {
                return fail(
                    path,
                    format!("function captures `{v}`, which varies under {m}"),
                )
            }
            None => return fail(path, format!("unbound variable `{v}` in function")),
        }
    }
    if let Some(s) = f.sources().into_iter().find(|s| !env.is_invariant_source(*s)) {
        return fail(path, format!("function references stream source {s}"));
    }
    Ok(())
}

fn infer_term<F: Scalar>(
    term: &AlgebraTerm<F>,
    env: &MonoidEnv,
    opts: InferOpts,
    path: &mut Vec<String>,
) -> Inf<Monoid> {
    use AlgebraTerm as T;
    // Invariance short-circuit.
    if term_is_invariant(term, env) {
        return Ok(Monoid::Box);
    }
    path.push(term.constructor_name().to_string());
    let out = (|| match term {
        T::Source(i) => match env.source(*i) {
            Some(m) => Ok(m.clone()),
            None => fail(path, format!("source {i} is not bound in the environment")),
        },
        T::Var(n) => match env.var(n) {
            Some(m) => Ok(m.clone()),
            None => fail(path, format!("variable `{n}` is not bound in the environment")),
        },
        T::Embedded(e) => infer_value_expr(e, env, opts, path),
        T::CMap(f, x) => {
            let mx = infer_term(x, env, opts, path)?;
            match mx {
                Monoid::Union => {
                    captures_invariant(f, env, path)?;
                    Ok(Monoid::Union)
                }
                Monoid::Box => match classify_body(f, Monoid::Box, env, opts, path)? {
                    BodyShape::Union => Ok(Monoid::Union),
                    BodyShape::Invariant => Ok(Monoid::Box),
                    BodyShape::Keyed(_) => fail(
                        path,
                        "grouped-style body over an invariant input has no merge rule",
                    ),
                },
                Monoid::Lifted(inner) => {
                    let arg = Monoid::product(Monoid::Box, *inner);
                    match classify_body(f, arg, env, opts, path)? {
                        BodyShape::Keyed(m) => Ok(Monoid::lifted(m)),
                        BodyShape::Invariant => Ok(Monoid::lifted(Monoid::Box)),
                        BodyShape::Union => Ok(Monoid::Union),
                    }
                }
                other => fail(path, format!("cMap over an input merging with {other}")),
            }
        }
        T::GroupBy(x) => {
            let mx = infer_term(x, env, opts, path)?;
            match mx {
                Monoid::Union => Ok(Monoid::lifted(Monoid::Union)),
                other => fail(path, format!("groupBy over an input merging with {other}")),
            }
        }
        T::CoGroup(a, b) => {
            let ma = infer_term(a, env, opts, path)?;
            let mb = infer_term(b, env, opts, path)?;
            match (ma, mb) {
                (Monoid::Union, Monoid::Union) => {
                    if opts.unrestricted_cogroup {
                        Ok(Monoid::lifted(Monoid::product(Monoid::Union, Monoid::Union)))
                    } else {
                        // Joins are assumed one-to-one or one-to-many: the
                        // left group is invariant, enforced at merge time.
                        Ok(Monoid::lifted(Monoid::product(Monoid::Box, Monoid::Union)))
                    }
                }
                (Monoid::Box, Monoid::Union) => {
                    Ok(Monoid::lifted(Monoid::product(Monoid::Box, Monoid::Union)))
                }
                (Monoid::Union, Monoid::Box) => {
                    Ok(Monoid::lifted(Monoid::product(Monoid::Union, Monoid::Box)))
                }
                (ma, mb) => fail(path, format!("coGroup over inputs merging with {ma}, {mb}")),
            }
        }
        T::Reduce(m, x) => {
            // A grouped aggregation: reduce(lift(op), sMap1(f, e)) merges per
            // lineage key as long as the body unions.
            if let (Monoid::Lifted(agg), T::SMap1(f, y)) = (m, &**x) {
                let my = infer_term(y, env, opts, path)?;
                let inner = match my {
                    Monoid::Lifted(inner) => *inner,
                    other => {
                        return fail(path, format!("sMap1 over an input merging with {other}"))
                    }
                };
                return match classify_body(f, Monoid::product(Monoid::Box, inner), env, opts, path)? {
                    BodyShape::Union | BodyShape::Invariant => Ok(m.clone()),
                    // One value per group is fine as long as it merges with
                    // the aggregation monoid itself.
                    BodyShape::Keyed(k) if k == **agg || k == Monoid::Box => Ok(m.clone()),
                    BodyShape::Keyed(k) => fail(
                        path,
                        format!("group values merge with {k}, the aggregation needs {agg}"),
                    ),
                };
            }
            let mx = infer_term(x, env, opts, path)?;
            match mx {
                Monoid::Union => Ok(m.clone()),
                other => fail(path, format!("reduce over an input merging with {other}")),
            }
        }
        T::Repeat { .. } => fail(path, "iteration is compiled through its step"),
        T::SMap1(f, x) => {
            let mx = infer_term(x, env, opts, path)?;
            match mx {
                Monoid::Lifted(inner) => {
                    let arg = Monoid::product(Monoid::Box, *inner);
                    match classify_body(f, arg, env, opts, path)? {
                        BodyShape::Keyed(m) => Ok(Monoid::lifted(m)),
                        BodyShape::Invariant => Ok(Monoid::lifted(Monoid::Box)),
                        BodyShape::Union => fail(
                            path,
                            "union-shaped body under sMap1 is only mergeable below a reduce",
                        ),
                    }
                }
                other => fail(path, format!("sMap1 over an input merging with {other}")),
            }
        }
        T::SMap2(f, x) => {
            let mx = infer_term(x, env, opts, path)?;
            match mx {
                Monoid::Lifted(inner) => {
                    let arg = Monoid::product(Monoid::Box, *inner);
                    match classify_body(f, arg, env, opts, path)? {
                        BodyShape::Union | BodyShape::Invariant => Ok(Monoid::Union),
                        BodyShape::Keyed(_) => {
                            fail(path, "sMap2 body must union, not merge per key")
                        }
                    }
                }
                other => fail(path, format!("sMap2 over an input merging with {other}")),
            }
        }
        T::SMap3(f, x) => {
            let mx = infer_term(x, env, opts, path)?;
            match mx {
                Monoid::Union => {
                    captures_invariant(f, env, path)?;
                    Ok(Monoid::Union)
                }
                other => fail(path, format!("sMap3 over an input merging with {other}")),
            }
        }
        T::Swap(x) => {
            let mx = infer_term(x, env, opts, path)?;
            match mx {
                Monoid::Union => Ok(Monoid::Union),
                other => fail(path, format!("swap over an input merging with {other}")),
            }
        }
        T::Mix(x) => {
            let mx = infer_term(x, env, opts, path)?;
            match mx {
                Monoid::Lifted(inner) if matches!(*inner, Monoid::Product(..)) => {
                    Ok(Monoid::Lifted(inner))
                }
                other => fail(path, format!("mix over an input merging with {other}")),
            }
        }
        T::KMap(f, _) => fail(
            path,
            format!("kMap body is not a homomorphism: {}", snippet(f)),
        ),
    })();
    path.pop();
    out
}

/// Classifies how a function body's output bag merges when the function is
/// applied to a merged argument. `arg` is the monoid of the parameter.
fn classify_body<F: Scalar>(
    f: &Expr<F>,
    arg: Monoid,
    env: &MonoidEnv,
    opts: InferOpts,
    path: &mut Vec<String>,
) -> Inf<BodyShape> {
    match f {
        Expr::Lambda(p, body) => {
            let mut scoped = env.clone();
            bind_pattern_monoid(p, arg, &mut scoped, path)?;
            path.push("fn".into());
            let r = classify(body, &scoped, opts, path);
            path.pop();
            r
        }
        other => fail(path, format!("expected a function, found {}", snippet(other))),
    }
}

fn bind_pattern_monoid(
    p: &Pattern,
    m: Monoid,
    env: &mut MonoidEnv,
    path: &[String],
) -> Inf<()> {
    match p {
        Pattern::Var(n) => {
            env.bind_var(n.clone(), m);
            Ok(())
        }
        Pattern::Wildcard => Ok(()),
        Pattern::Tuple(ps) => match m {
            Monoid::Product(l, r) if ps.len() == 2 => {
                bind_pattern_monoid(&ps[0], *l, env, path)?;
                bind_pattern_monoid(&ps[1], *r, env, path)
            }
            Monoid::Box => {
                for p in ps {
                    bind_pattern_monoid(p, Monoid::Box, env, path)?;
                }
                Ok(())
            }
            other => fail(path, format!("pattern {p} does not destructure {other}")),
        },
    }
}

fn classify<F: Scalar>(
    e: &Expr<F>,
    env: &MonoidEnv,
    opts: InferOpts,
    path: &mut Vec<String>,
) -> Inf<BodyShape> {
    if expr_is_invariant(e, env) {
        return Ok(BodyShape::Invariant);
    }
    match e {
        Expr::Singleton(inner) => {
            Ok(BodyShape::Keyed(infer_value_expr(inner, env, opts, path)?))
        }
        Expr::EmptyBag => Ok(BodyShape::Invariant),
        Expr::Union(a, b) => {
            let sa = classify(a, env, opts, path)?;
            let sb = classify(b, env, opts, path)?;
            match (sa, sb) {
                (BodyShape::Union, BodyShape::Union) => Ok(BodyShape::Union),
                _ => fail(path, "bag union only merges union-shaped operands"),
            }
        }
        Expr::If(c, t, f) => {
            if !expr_is_invariant(c, env) {
                return fail(path, "condition depends on stream data");
            }
            let st = classify(t, env, opts, path)?;
            let sf = classify(f, env, opts, path)?;
            if st == sf {
                Ok(st)
            } else {
                fail(path, "branches merge differently")
            }
        }
        Expr::Var(n) => match env.var(n) {
            Some(Monoid::Union) => Ok(BodyShape::Union),
            Some(Monoid::Box) => Ok(BodyShape::Invariant),
            Some(m) => fail(path, format!("`{n}` merges with {m}, not usable as a bag body")),
            None => fail(path, format!("unbound variable `{n}`")),
        },
        Expr::Alg(t) => match infer_term(t, env, opts, path)? {
            Monoid::Union => Ok(BodyShape::Union),
            Monoid::Box => Ok(BodyShape::Invariant),
            other => fail(path, format!("body computes a bag merging with {other}")),
        },
        Expr::Apply(f, a) => {
            let ma = infer_value_expr(a, env, opts, path)?;
            classify_body(f, ma, env, opts, path)
        }
        other => fail(path, format!("no merge rule for body {}", snippet(other))),
    }
}

/// Infers the monoid by which a value-level expression merges when its
/// stream-dependent inputs merge.
fn infer_value_expr<F: Scalar>(
    e: &Expr<F>,
    env: &MonoidEnv,
    opts: InferOpts,
    path: &mut Vec<String>,
) -> Inf<Monoid> {
    if expr_is_invariant(e, env) {
        return Ok(Monoid::Box);
    }
    match e {
        Expr::Var(n) => match env.var(n) {
            Some(m) => Ok(m.clone()),
            None => fail(path, format!("unbound variable `{n}`")),
        },
        Expr::Tuple(es) if es.len() == 2 => {
            let l = infer_value_expr(&es[0], env, opts, path)?;
            let r = infer_value_expr(&es[1], env, opts, path)?;
            Ok(Monoid::product(l, r))
        }
        Expr::Proj(i, inner) => match infer_value_expr(inner, env, opts, path)? {
            Monoid::Box => Ok(Monoid::Box),
            Monoid::Product(l, r) => match i {
                0 => Ok(*l),
                1 => Ok(*r),
                _ => fail(path, "projection beyond a pair"),
            },
            other => fail(path, format!("projection from a value merging with {other}")),
        },
        Expr::If(c, t, f) => {
            if !expr_is_invariant(c, env) {
                return fail(path, "condition depends on stream data");
            }
            let mt = infer_value_expr(t, env, opts, path)?;
            let mf = infer_value_expr(f, env, opts, path)?;
            if mt == mf {
                Ok(mt)
            } else {
                fail(path, format!("branches merge differently: {mt} vs {mf}"))
            }
        }
        Expr::Apply(f, a) => {
            let ma = infer_value_expr(a, env, opts, path)?;
            match &**f {
                Expr::Lambda(p, body) => {
                    let mut scoped = env.clone();
                    bind_pattern_monoid(p, ma, &mut scoped, path)?;
                    infer_value_expr(body, &scoped, opts, path)
                }
                other => fail(path, format!("cannot apply {}", snippet(other))),
            }
        }
        Expr::Alg(t) => infer_term(t, env, opts, path),
        Expr::Union(_, _) | Expr::Singleton(_) | Expr::EmptyBag => {
            match classify(e, env, opts, path)? {
                BodyShape::Union => Ok(Monoid::Union),
                BodyShape::Invariant => Ok(Monoid::Box),
                BodyShape::Keyed(_) => {
                    fail(path, "a fresh singleton bag is not a mergeable value")
                }
            }
        }
        other => fail(
            path,
            format!("no homomorphism rule for {}", snippet(other)),
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::term::build::*;
    use crate::term::BinOp;

    type T = AlgebraTerm<f64>;

    fn avg_body() -> Expr<f64> {
        bin(
            BinOp::Div,
            alg(reduce(Monoid::Sum, embedded(var("s")))),
            alg(reduce(
                Monoid::Sum,
                cmap(lam1("v", single(int(1))), embedded(var("s"))),
            )),
        )
    }

    fn sum_count_body() -> Expr<f64> {
        pair(
            alg(reduce(Monoid::Sum, embedded(var("s")))),
            alg(reduce(
                Monoid::Sum,
                cmap(lam1("v", single(int(1))), embedded(var("s"))),
            )),
        )
    }

    #[test]
    fn cmap_over_stream_is_union() {
        let env = MonoidEnv::streams([0]);
        let t: T = cmap(lam1("x", single(var("x"))), source(0));
        assert_eq!(infer(&env, &t).inferred(), Some(&Monoid::Union));
    }

    #[test]
    fn groupby_over_stream_is_lifted_union() {
        let env = MonoidEnv::streams([0]);
        let t: T = group_by(cmap(identity_fn(), source(0)));
        assert_eq!(infer(&env, &t).inferred(), Some(&Monoid::lifted(Monoid::Union)));
    }

    #[test]
    fn cogroup_uses_the_restricted_join_rule() {
        let env = MonoidEnv::streams([0, 1]);
        let t: T = cogroup(
            cmap(identity_fn(), source(0)),
            cmap(identity_fn(), source(1)),
        );
        assert_eq!(
            infer(&env, &t).inferred(),
            Some(&Monoid::lifted(Monoid::product(Monoid::Box, Monoid::Union)))
        );
        let unrestricted = infer_with(&env, &t, InferOpts { unrestricted_cogroup: true });
        assert_eq!(
            unrestricted.inferred(),
            Some(&Monoid::lifted(Monoid::product(Monoid::Union, Monoid::Union)))
        );
    }

    #[test]
    fn smap1_with_sum_count_body() {
        let env = MonoidEnv::streams([0]);
        let t: T = AlgebraTerm::SMap1(
            lam2("k", "s", single(pair(var("k"), sum_count_body()))),
            Box::new(group_by(AlgebraTerm::Swap(Box::new(AlgebraTerm::SMap3(
                lam1("p", single(pair(fst(var("p")), snd(var("p"))))),
                Box::new(source(0)),
            ))))),
        );
        let expect = Monoid::lifted(Monoid::product(
            Monoid::Box,
            Monoid::product(Monoid::Sum, Monoid::Sum),
        ));
        assert_eq!(infer(&env, &t).inferred(), Some(&expect));
    }

    #[test]
    fn smap1_with_avg_body_fails_at_the_division() {
        let env = MonoidEnv::streams([0]);
        let t: T = AlgebraTerm::SMap1(
            lam2("k", "s", single(pair(var("k"), avg_body()))),
            Box::new(group_by(AlgebraTerm::Swap(Box::new(AlgebraTerm::SMap3(
                lam1("p", single(pair(fst(var("p")), snd(var("p"))))),
                Box::new(source(0)),
            ))))),
        );
        match infer(&env, &t) {
            InferenceResult::Failure { path, reason } => {
                assert!(path.contains("smap1"), "{path}");
                assert!(reason.contains('/'), "{reason}");
            }
            other => panic!("expected failure, got {other:?}"),
        }
    }

    #[test]
    fn invariant_shortcut_applies_first() {
        let mut env = MonoidEnv::new();
        env.bind_source(0, Monoid::Box);
        let t: T = AlgebraTerm::KMap(identity_fn(), Box::new(source(0)));
        assert_eq!(infer(&env, &t).inferred(), Some(&Monoid::Box));
    }

    #[test]
    fn unbound_source_is_a_failure_not_a_default() {
        let env = MonoidEnv::new();
        let t: T = cmap(identity_fn(), source(3));
        assert!(matches!(infer(&env, &t), InferenceResult::Failure { .. }));
    }

    #[test]
    fn extra_bindings_do_not_change_the_result() {
        let t: T = group_by(cmap(identity_fn(), source(0)));
        let base = infer(&MonoidEnv::streams([0]), &t);
        let mut extended = MonoidEnv::streams([0]);
        extended.bind_var("unused", Monoid::Box);
        extended.bind_source(7, Monoid::Union);
        assert_eq!(base, infer(&extended, &t));
    }

    #[test]
    fn capturing_a_stream_dependent_value_fails() {
        let env = MonoidEnv::streams([0]);
        // \(k,s). cMap(\x. {(x, count(s))}, xs) style capture: the inner
        // element function references the union-typed group `s`.
        let body = lam2(
            "k",
            "s",
            alg(cmap(
                lam1(
                    "x",
                    single(pair(var("x"), alg(reduce(Monoid::Sum, embedded(var("s")))))),
                ),
                embedded(var("s")),
            )),
        );
        let t: T = AlgebraTerm::SMap2(
            body,
            Box::new(group_by(AlgebraTerm::Swap(Box::new(AlgebraTerm::SMap3(
                lam1("p", single(pair(fst(var("p")), snd(var("p"))))),
                Box::new(source(0)),
            ))))),
        );
        match infer(&env, &t) {
            InferenceResult::Failure { reason, .. } => {
                assert!(reason.contains("captures"), "{reason}");
            }
            other => panic!("expected failure, got {other:?}"),
        }
    }
}
