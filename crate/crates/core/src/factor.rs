//! Factoring non-homomorphic computation out of a transformed term.
//!
//! A grouped map body that fails monoid inference (an average, a division, a
//! damping factor) is split: its maximal inferable subterms are emitted as a
//! tuple and the surrounding computation moves into a `kMap`, a lineage-
//! preserving map. kMaps then fuse and pull outwards until they detach at the
//! root and become part of the answer function.

use crate::error::{Error, Result};
use crate::infer::{infer, InferenceResult, MonoidEnv};
use crate::monoid::Monoid;
use crate::scalar::Scalar;
use crate::term::{AlgebraTerm, Expr, Pattern};

/// A term split into an inference-clean part and the wrapper that, composed
/// after it, restores the original semantics.
#[derive(Debug, Clone)]
pub struct FactoredTerm<F: Scalar> {
    pub hom: AlgebraTerm<F>,
    /// `\v. v` when nothing was pulled.
    pub wrapper: Expr<F>,
    /// True when a kMap had to cross a reduce head; the wrapper then applies
    /// after the answer-side reduce, which is flagged in explain output.
    pub crossed_reduce: bool,
}

/// Rewrites every failing grouped-map body into an emit-the-parts form with a
/// `kMap` applying the rest. Bodies that already infer are left alone.
pub fn split_non_hom<F: Scalar>(
    term: &AlgebraTerm<F>,
    env: &MonoidEnv,
) -> Result<AlgebraTerm<F>> {
    let mut path = vec!["root".to_string()];
    split_term(term, env, &mut path)
}

fn split_term<F: Scalar>(
    term: &AlgebraTerm<F>,
    env: &MonoidEnv,
    path: &mut Vec<String>,
) -> Result<AlgebraTerm<F>> {
    use AlgebraTerm as T;
    path.push(term.constructor_name().to_string());
    let out = (|| -> Result<AlgebraTerm<F>> {
        match term {
            T::SMap1(f, x) | T::CMap(f, x) => {
                let x2 = split_term(x, env, path)?;
                let is_smap1 = matches!(term, T::SMap1(..));
                // Only grouped maps can need a split: their input merges per
                // key, so the body must merge values rather than union bags.
                let input_monoid = infer(env, &x2);
                let rebuilt = |f: Expr<F>, x: AlgebraTerm<F>| {
                    if is_smap1 {
                        T::SMap1(f, Box::new(x))
                    } else {
                        T::CMap(f, Box::new(x))
                    }
                };
                if let InferenceResult::Inferred(Monoid::Lifted(inner)) = input_monoid {
                    let arg = Monoid::product(Monoid::Box, *inner);
                    let whole = rebuilt(f.clone(), x2.clone());
                    if infer(env, &whole).inferred().is_some() {
                        return Ok(whole);
                    }
                    let (new_body, kmap_fn) = split_body(f, &arg, env, path)?;
                    return Ok(T::KMap(kmap_fn, Box::new(rebuilt(new_body, x2))));
                }
                Ok(rebuilt(f.clone(), x2))
            }
            T::SMap2(f, x) => {
                let x2 = split_term(x, env, path)?;
                let whole = T::SMap2(f.clone(), Box::new(x2));
                match infer(env, &whole) {
                    InferenceResult::Inferred(_) => Ok(whole),
                    InferenceResult::Failure { reason, .. } => {
                        // No pull rule moves a kMap out through a grouping
                        // key change, so a failing join body is fatal.
                        Err(Error::NotIncrementalizable { path: path.join("."), reason })
                    }
                }
            }
            T::Reduce(m, x) => Ok(T::Reduce(m.clone(), Box::new(split_term(x, env, path)?))),
            T::GroupBy(x) => Ok(T::GroupBy(Box::new(split_term(x, env, path)?))),
            T::Swap(x) => Ok(T::Swap(Box::new(split_term(x, env, path)?))),
            T::Mix(x) => Ok(T::Mix(Box::new(split_term(x, env, path)?))),
            T::CoGroup(a, b) => Ok(T::CoGroup(
                Box::new(split_term(a, env, path)?),
                Box::new(split_term(b, env, path)?),
            )),
            other => Ok(other.clone()),
        }
    })();
    path.pop();
    out
}

/// Shape of the emitted tuple: a binary tree mirroring where the inferable
/// subterms sat in the original expression.
enum EmitTree<F: Scalar> {
    Leaf(Expr<F>),
    Pair(Box<EmitTree<F>>, Box<EmitTree<F>>),
}

impl<F: Scalar> EmitTree<F> {
    fn emit_expr(&self) -> Expr<F> {
        match self {
            EmitTree::Leaf(e) => e.clone(),
            EmitTree::Pair(l, r) => Expr::Tuple(vec![l.emit_expr(), r.emit_expr()]),
        }
    }

    /// Projection paths of each leaf, in extraction order.
    fn leaf_paths(&self) -> Vec<Vec<usize>> {
        fn walk<F: Scalar>(t: &EmitTree<F>, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            match t {
                EmitTree::Leaf(_) => out.push(prefix.clone()),
                EmitTree::Pair(l, r) => {
                    prefix.push(0);
                    walk(l, prefix, out);
                    prefix.pop();
                    prefix.push(1);
                    walk(r, prefix, out);
                    prefix.pop();
                }
            }
        }
        let mut out = Vec::new();
        walk(self, &mut Vec::new(), &mut out);
        out
    }
}

/// Splits a failing body `\pat. {e}` into `\pat. {parts}` plus the kMap
/// function rebuilding the original value from the parts.
fn split_body<F: Scalar>(
    f: &Expr<F>,
    arg: &Monoid,
    env: &MonoidEnv,
    path: &mut Vec<String>,
) -> Result<(Expr<F>, Expr<F>)> {
    let Expr::Lambda(pat, body) = f else {
        return Err(Error::NotIncrementalizable {
            path: path.join("."),
            reason: "map function is not a lambda".into(),
        });
    };
    let Expr::Singleton(inner) = &**body else {
        return Err(Error::NotIncrementalizable {
            path: path.join("."),
            reason: format!("body `{body}` has no inferable subterms to extract"),
        });
    };
    // Rebind the parameters the way inference sees them.
    let mut scoped = env.clone();
    bind_pattern(pat, arg.clone(), &mut scoped);

    let mut leaves: Vec<Expr<F>> = Vec::new();
    let rebuild = extract(inner, &scoped, &mut leaves, path)?;
    if leaves.is_empty() {
        return Err(Error::NotIncrementalizable {
            path: path.join("."),
            reason: format!("no inferable subterms in `{inner}`"),
        });
    }
    let tree = build_tree(&leaves);
    let emitted = tree.emit_expr();
    let new_body = Expr::Lambda(pat.clone(), Box::new(Expr::Singleton(Box::new(emitted))));

    // kMap function: project the parts back into the original expression.
    let v = "__parts";
    let mut kmap_body = rebuild;
    for (i, p) in tree.leaf_paths().into_iter().enumerate() {
        let mut proj: Expr<F> = Expr::Var(v.to_string());
        for step in p {
            proj = Expr::Proj(step, Box::new(proj));
        }
        kmap_body = subst_var(kmap_body, &format!("__part{i}"), &proj);
    }
    let kmap_fn = Expr::Lambda(Pattern::var(v), Box::new(kmap_body));
    Ok((new_body, kmap_fn))
}

/// Nests the extracted parts into pairs. The kMap projections are derived
/// from the same tree, so any deterministic association is consistent; the
/// halving split reproduces the familiar shapes, e.g. a pair of averages
/// becomes ((sum,count),(sum,count)).
fn build_tree<F: Scalar>(leaves: &[Expr<F>]) -> EmitTree<F> {
    if leaves.len() == 1 {
        EmitTree::Leaf(leaves[0].clone())
    } else {
        let (l, r) = leaves.split_at(leaves.len() / 2);
        EmitTree::Pair(Box::new(build_tree(l)), Box::new(build_tree(r)))
    }
}

fn bind_pattern(p: &Pattern, m: Monoid, env: &mut MonoidEnv) {
    match p {
        Pattern::Var(n) => {
            env.bind_var(n.clone(), m);
        }
        Pattern::Wildcard => {}
        Pattern::Tuple(ps) => match m {
            Monoid::Product(l, r) if ps.len() == 2 => {
                bind_pattern(&ps[0], *l, env);
                bind_pattern(&ps[1], *r, env);
            }
            Monoid::Box => {
                for p in ps {
                    bind_pattern(p, Monoid::Box, env);
                }
            }
            _ => {}
        },
    }
}

/// Walks the expression top-down, replaces each maximal inferable subterm
/// with an extraction placeholder, and returns the rebuild expression.
fn extract<F: Scalar>(
    e: &Expr<F>,
    env: &MonoidEnv,
    leaves: &mut Vec<Expr<F>>,
    path: &mut Vec<String>,
) -> Result<Expr<F>> {
    // Closed expressions (no free names) stay in the wrapper verbatim.
    if e.free_vars().is_empty() && e.sources().is_empty() {
        return Ok(e.clone());
    }
    // A subterm that infers is emitted whole, even an invariant one: the
    // wrapper can only see what the inner map emits.
    if infers(e, env) {
        let idx = leaves.len();
        leaves.push(e.clone());
        return Ok(Expr::Var(format!("__part{idx}")));
    }
    match e {
        Expr::Tuple(es) => {
            let mut out = Vec::with_capacity(es.len());
            for e in es {
                out.push(extract(e, env, leaves, path)?);
            }
            Ok(Expr::Tuple(out))
        }
        Expr::Bin(op, a, b) => Ok(Expr::Bin(
            *op,
            Box::new(extract(a, env, leaves, path)?),
            Box::new(extract(b, env, leaves, path)?),
        )),
        Expr::Proj(i, inner) => Ok(Expr::Proj(*i, Box::new(extract(inner, env, leaves, path)?))),
        Expr::Not(inner) => Ok(Expr::Not(Box::new(extract(inner, env, leaves, path)?))),
        other => Err(Error::NotIncrementalizable {
            path: path.join("."),
            reason: format!("no inferable subterms in `{other}`"),
        }),
    }
}

fn infers<F: Scalar>(e: &Expr<F>, env: &MonoidEnv) -> bool {
    // Value-level inference, reusing the term machinery through an embedding.
    let t = AlgebraTerm::Embedded(Box::new(e.clone()));
    infer(env, &t).inferred().is_some()
}

fn subst_var<F: Scalar>(e: Expr<F>, name: &str, replacement: &Expr<F>) -> Expr<F> {
    use Expr as E;
    match e {
        E::Var(n) if n == name => replacement.clone(),
        E::Var(n) => E::Var(n),
        E::Lit(v) => E::Lit(v),
        E::EmptyBag => E::EmptyBag,
        E::Tuple(es) => E::Tuple(es.into_iter().map(|e| subst_var(e, name, replacement)).collect()),
        E::Proj(i, e) => E::Proj(i, Box::new(subst_var(*e, name, replacement))),
        E::Bin(op, a, b) => E::Bin(
            op,
            Box::new(subst_var(*a, name, replacement)),
            Box::new(subst_var(*b, name, replacement)),
        ),
        E::Not(e) => E::Not(Box::new(subst_var(*e, name, replacement))),
        E::If(c, t, f) => E::If(
            Box::new(subst_var(*c, name, replacement)),
            Box::new(subst_var(*t, name, replacement)),
            Box::new(subst_var(*f, name, replacement)),
        ),
        E::Singleton(e) => E::Singleton(Box::new(subst_var(*e, name, replacement))),
        E::Union(a, b) => E::Union(
            Box::new(subst_var(*a, name, replacement)),
            Box::new(subst_var(*b, name, replacement)),
        ),
        E::Lambda(p, b) => {
            let mut bound = std::collections::BTreeSet::new();
            p.bound_names(&mut bound);
            if bound.contains(name) {
                E::Lambda(p, b)
            } else {
                E::Lambda(p, Box::new(subst_var(*b, name, replacement)))
            }
        }
        E::Apply(f, a) => E::Apply(
            Box::new(subst_var(*f, name, replacement)),
            Box::new(subst_var(*a, name, replacement)),
        ),
        E::Alg(t) => E::Alg(Box::new(subst_term(*t, name, replacement))),
        E::Call(bi, es) => {
            E::Call(bi, es.into_iter().map(|e| subst_var(e, name, replacement)).collect())
        }
    }
}

fn subst_term<F: Scalar>(t: AlgebraTerm<F>, name: &str, replacement: &Expr<F>) -> AlgebraTerm<F> {
    use AlgebraTerm as T;
    match t {
        T::Source(i) => T::Source(i),
        T::Var(n) => T::Var(n),
        T::Embedded(e) => T::Embedded(Box::new(subst_var(*e, name, replacement))),
        T::CMap(f, x) => T::CMap(
            subst_var(f, name, replacement),
            Box::new(subst_term(*x, name, replacement)),
        ),
        T::GroupBy(x) => T::GroupBy(Box::new(subst_term(*x, name, replacement))),
        T::CoGroup(a, b) => T::CoGroup(
            Box::new(subst_term(*a, name, replacement)),
            Box::new(subst_term(*b, name, replacement)),
        ),
        T::Reduce(m, x) => T::Reduce(m, Box::new(subst_term(*x, name, replacement))),
        T::Repeat { param, rounds, init, body } => T::Repeat {
            param,
            rounds,
            init: Box::new(subst_term(*init, name, replacement)),
            body: Box::new(subst_term(*body, name, replacement)),
        },
        T::SMap1(f, x) => T::SMap1(
            subst_var(f, name, replacement),
            Box::new(subst_term(*x, name, replacement)),
        ),
        T::SMap2(f, x) => T::SMap2(
            subst_var(f, name, replacement),
            Box::new(subst_term(*x, name, replacement)),
        ),
        T::SMap3(f, x) => T::SMap3(
            subst_var(f, name, replacement),
            Box::new(subst_term(*x, name, replacement)),
        ),
        T::Swap(x) => T::Swap(Box::new(subst_term(*x, name, replacement))),
        T::Mix(x) => T::Mix(Box::new(subst_term(*x, name, replacement))),
        T::KMap(f, x) => T::KMap(
            subst_var(f, name, replacement),
            Box::new(subst_term(*x, name, replacement)),
        ),
    }
}

/// Pulls and fuses kMaps to a fixpoint, detaching the root chain into the
/// wrapper.
pub fn pull_kmaps<F: Scalar>(term: &AlgebraTerm<F>) -> FactoredTerm<F> {
    let mut crossed_reduce = false;
    let mut t = pull_term(term.clone());
    let mut wrapper: Option<Expr<F>> = None;
    while let AlgebraTerm::KMap(f, x) = t {
        wrapper = Some(match wrapper {
            None => f,
            // An outer wrapper composes after an inner one.
            Some(outer) => compose(outer, f),
        });
        t = *x;
    }
    // A reduce head may still hide a kMap directly below it.
    if let AlgebraTerm::Reduce(m, x) = &t {
        if let AlgebraTerm::KMap(f, y) = &**x {
            crossed_reduce = true;
            wrapper = Some(match wrapper {
                None => f.clone(),
                Some(outer) => compose(outer, f.clone()),
            });
            t = AlgebraTerm::Reduce(m.clone(), y.clone());
        }
    }
    FactoredTerm {
        hom: t,
        wrapper: wrapper.unwrap_or_else(|| {
            Expr::Lambda(Pattern::var("__v"), Box::new(Expr::Var("__v".into())))
        }),
        crossed_reduce,
    }
}

/// `\v. f(g(v))`
fn compose<F: Scalar>(f: Expr<F>, g: Expr<F>) -> Expr<F> {
    Expr::Lambda(
        Pattern::var("__v"),
        Box::new(Expr::Apply(
            Box::new(f),
            Box::new(Expr::Apply(Box::new(g), Box::new(Expr::Var("__v".into())))),
        )),
    )
}

/// `\e. {f(e)}` mapped over a bag expression.
fn map_over<F: Scalar>(f: &Expr<F>, bag: Expr<F>) -> Expr<F> {
    Expr::Alg(Box::new(AlgebraTerm::CMap(
        Expr::Lambda(
            Pattern::var("__e"),
            Box::new(Expr::Singleton(Box::new(Expr::Apply(
                Box::new(f.clone()),
                Box::new(Expr::Var("__e".into())),
            )))),
        ),
        Box::new(AlgebraTerm::Embedded(Box::new(bag))),
    )))
}

fn pull_term<F: Scalar>(term: AlgebraTerm<F>) -> AlgebraTerm<F> {
    use AlgebraTerm as T;
    // Rewrite children first, then contract this node until stable.
    let term = match term {
        T::CMap(f, x) => T::CMap(f, Box::new(pull_term(*x))),
        T::GroupBy(x) => T::GroupBy(Box::new(pull_term(*x))),
        T::CoGroup(a, b) => T::CoGroup(Box::new(pull_term(*a)), Box::new(pull_term(*b))),
        T::Reduce(m, x) => T::Reduce(m, Box::new(pull_term(*x))),
        T::SMap1(f, x) => T::SMap1(f, Box::new(pull_term(*x))),
        T::SMap2(f, x) => T::SMap2(f, Box::new(pull_term(*x))),
        T::SMap3(f, x) => T::SMap3(f, Box::new(pull_term(*x))),
        T::Swap(x) => T::Swap(Box::new(pull_term(*x))),
        T::Mix(x) => T::Mix(Box::new(pull_term(*x))),
        T::KMap(f, x) => T::KMap(f, Box::new(pull_term(*x))),
        leaf => leaf,
    };
    contract(term)
}

fn contract<F: Scalar>(term: AlgebraTerm<F>) -> AlgebraTerm<F> {
    use AlgebraTerm as T;
    match term {
        // kMap o kMap fuse.
        T::KMap(f, x) => match *x {
            T::KMap(g, y) => contract(T::KMap(compose(f, g), y)),
            other => T::KMap(f, Box::new(other)),
        },
        // Grouped maps absorb an inner kMap into their body.
        T::SMap1(g, x) => match *x {
            T::KMap(f, y) => {
                let g2 = absorb_keyed(g, f);
                contract(T::SMap1(g2, y))
            }
            other => T::SMap1(g, Box::new(other)),
        },
        T::SMap2(g, x) => match *x {
            T::KMap(f, y) => {
                let g2 = absorb_keyed(g, f);
                contract(T::SMap2(g2, y))
            }
            other => T::SMap2(g, Box::new(other)),
        },
        // groupBy(kMap(f, X)) -> kMap(\s. map(f, s), groupBy(X))
        T::GroupBy(x) => match *x {
            T::KMap(f, y) => {
                let s = Expr::Lambda(
                    Pattern::var("__s"),
                    Box::new(map_over(&f, Expr::Var("__s".into()))),
                );
                contract(T::KMap(s, Box::new(T::GroupBy(y))))
            }
            other => T::GroupBy(Box::new(other)),
        },
        // coGroup over kMaps -> kMap over coGroup, mapping each side's group.
        T::CoGroup(a, b) => {
            let (fa, a) = strip_kmap(*a);
            let (fb, b) = strip_kmap(*b);
            if fa.is_none() && fb.is_none() {
                return T::CoGroup(Box::new(a), Box::new(b));
            }
            let xs = Expr::Var("__xs".into());
            let ys = Expr::Var("__ys".into());
            let left = match &fa {
                Some(f) => map_over(f, xs),
                None => xs,
            };
            let right = match &fb {
                Some(f) => map_over(f, ys),
                None => ys,
            };
            let f = Expr::Lambda(
                Pattern::pair(Pattern::var("__xs"), Pattern::var("__ys")),
                Box::new(Expr::Tuple(vec![left, right])),
            );
            contract(T::KMap(f, Box::new(T::CoGroup(Box::new(a), Box::new(b)))))
        }
        other => other,
    }
}

fn strip_kmap<F: Scalar>(t: AlgebraTerm<F>) -> (Option<Expr<F>>, AlgebraTerm<F>) {
    match t {
        AlgebraTerm::KMap(f, x) => (Some(f), *x),
        other => (None, other),
    }
}

/// `\(k,v). g((k, f(v)))`
fn absorb_keyed<F: Scalar>(g: Expr<F>, f: Expr<F>) -> Expr<F> {
    Expr::Lambda(
        Pattern::pair(Pattern::var("__k"), Pattern::var("__v")),
        Box::new(Expr::Apply(
            Box::new(g),
            Box::new(Expr::Tuple(vec![
                Expr::Var("__k".into()),
                Expr::Apply(Box::new(f), Box::new(Expr::Var("__v".into()))),
            ])),
        )),
    )
}

/// Structural measure used by the fixpoint-termination test: total depth of
/// kMap nodes below grouping operators.
pub fn kmap_depth_below_groups<F: Scalar>(term: &AlgebraTerm<F>) -> usize {
    fn walk<F: Scalar>(t: &AlgebraTerm<F>, groups_above: usize) -> usize {
        use AlgebraTerm as T;
        match t {
            T::KMap(_, x) => groups_above + walk(x, groups_above),
            T::GroupBy(x) | T::Swap(x) | T::Mix(x) => walk(x, groups_above + 1),
            T::CoGroup(a, b) => walk(a, groups_above + 1) + walk(b, groups_above + 1),
            T::CMap(_, x) | T::SMap1(_, x) | T::SMap2(_, x) | T::SMap3(_, x) => {
                walk(x, groups_above)
            }
            T::Reduce(_, x) => walk(x, groups_above),
            T::Repeat { init, body, .. } => walk(init, groups_above) + walk(body, groups_above),
            T::Source(_) | T::Var(_) | T::Embedded(_) => 0,
        }
    }
    walk(term, 0)
}
