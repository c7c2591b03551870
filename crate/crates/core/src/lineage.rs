//! Lineage injection and the incremental query triple.
//!
//! A normalized query is rewritten so that every output value carries its
//! lineage: the tree of group-by and join keys that produced it, encoded at
//! runtime as nested tuples `()`, `(key, rest)`, `(key, (left, right))`. The
//! rewritten term is a homomorphism keyed by lineage; the merger monoid
//! combines states across batches and the answer function recovers the
//! original query's result from the state.

use std::fmt;

use crate::error::{Error, Result};
use crate::factor::{pull_kmaps, split_non_hom};
use crate::infer::{infer, infer_required, InferenceResult, MonoidEnv};
use crate::monoid::Monoid;
use crate::normalize::NormalizedTerm;
use crate::scalar::Scalar;
use crate::term::{AlgebraTerm, Expr, Pattern};
use crate::value::Value;

/// Static lineage shape: one node per groupBy/coGroup in the query body.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LineageShape {
    Unit,
    Group(Box<LineageShape>),
    Join(Box<LineageShape>, Box<LineageShape>),
}

impl fmt::Display for LineageShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LineageShape::Unit => write!(f, "()"),
            LineageShape::Group(r) => write!(f, "(k,{r})"),
            LineageShape::Join(l, r) => write!(f, "(k,({l},{r}))"),
        }
    }
}

/// A concrete lineage: the shape with its keys.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Lineage<F: Scalar> {
    Unit,
    Group { key: Value<F>, rest: Box<Lineage<F>> },
    Join { key: Value<F>, left: Box<Lineage<F>>, right: Box<Lineage<F>> },
}

impl<F: Scalar> Lineage<F> {
    /// Reads a runtime lineage value against its static shape.
    pub fn parse(v: &Value<F>, shape: &LineageShape) -> Result<Lineage<F>> {
        match shape {
            LineageShape::Unit => match v {
                Value::Unit => Ok(Lineage::Unit),
                other => Err(Error::Type(format!("expected unit lineage, found {}", other.render()))),
            },
            LineageShape::Group(rest) => {
                let (k, r) = v.as_pair()?;
                Ok(Lineage::Group {
                    key: k.clone(),
                    rest: Box::new(Lineage::parse(r, rest)?),
                })
            }
            LineageShape::Join(ls, rs) => {
                let (k, lr) = v.as_pair()?;
                let (l, r) = lr.as_pair()?;
                Ok(Lineage::Join {
                    key: k.clone(),
                    left: Box::new(Lineage::parse(l, ls)?),
                    right: Box::new(Lineage::parse(r, rs)?),
                })
            }
        }
    }

    pub fn to_value(&self) -> Value<F> {
        match self {
            Lineage::Unit => Value::Unit,
            Lineage::Group { key, rest } => Value::pair(key.clone(), rest.to_value()),
            Lineage::Join { key, left, right } => Value::pair(
                key.clone(),
                Value::pair(left.to_value(), right.to_value()),
            ),
        }
    }
}

/// How the answer function reads the state, by the shape of the original
/// query.
#[derive(Debug, Clone, PartialEq)]
pub enum QueryShape {
    /// `cMap(f, source)`: the state holds the output values directly.
    SourceCMap,
    /// `reduce(m, cMap(f, e))`: the state aggregates per lineage key.
    ReduceHead(Monoid),
    /// `cMap(f, e)` over a groupBy/coGroup body.
    DeepCMap,
}

/// The compiled triple: homomorphic term, merger monoid, answer function.
#[derive(Debug, Clone)]
pub struct CompiledQuery<F: Scalar> {
    pub original: NormalizedTerm<F>,
    pub h: AlgebraTerm<F>,
    pub merger: Monoid,
    /// A function of the state value.
    pub answer: Expr<F>,
    pub shape: QueryShape,
    pub lineage: LineageShape,
    /// The factoring wrapper, when non-homomorphic parts were pulled out.
    pub wrapper: Option<Expr<F>>,
    /// Explain-mode notes gathered during compilation.
    pub notes: Vec<String>,
}

/// Rewrites a normalized query so every value carries its lineage.
pub fn annotate<F: Scalar>(q: &NormalizedTerm<F>) -> AlgebraTerm<F> {
    annotate_q(q.term())
}

fn is_leaf<F: Scalar>(t: &AlgebraTerm<F>) -> bool {
    matches!(t, AlgebraTerm::Source(_) | AlgebraTerm::Var(_))
}

fn annotate_q<F: Scalar>(q: &AlgebraTerm<F>) -> AlgebraTerm<F> {
    use AlgebraTerm as T;
    match q {
        T::Reduce(m, c) => match &**c {
            T::CMap(f, e) if is_leaf(e) => T::Reduce(
                Monoid::lifted(m.clone()),
                Box::new(T::CMap(unit_tag(f), e.clone())),
            ),
            T::CMap(f, e) => T::Reduce(
                Monoid::lifted(m.clone()),
                Box::new(T::SMap1(f.clone(), Box::new(annotate_e(e)))),
            ),
            other => unreachable!("normalized reduce over {}", other.constructor_name()),
        },
        T::CMap(f, e) if is_leaf(e) => T::CMap(unit_tag(f), e.clone()),
        T::CMap(f, e) => T::SMap1(f.clone(), Box::new(annotate_e(e))),
        other => unreachable!("not a normalized query: {}", other.constructor_name()),
    }
}

fn annotate_e<F: Scalar>(e: &AlgebraTerm<F>) -> AlgebraTerm<F> {
    use AlgebraTerm as T;
    match e {
        T::GroupBy(c) => T::GroupBy(Box::new(T::Swap(Box::new(annotate_c(c))))),
        T::CoGroup(c1, c2) => T::Mix(Box::new(T::CoGroup(
            Box::new(annotate_c(c1)),
            Box::new(annotate_c(c2)),
        ))),
        other => unreachable!("not a grouping body: {}", other.constructor_name()),
    }
}

fn annotate_c<F: Scalar>(c: &AlgebraTerm<F>) -> AlgebraTerm<F> {
    use AlgebraTerm as T;
    match c {
        T::CMap(f, e) if is_leaf(e) => T::SMap3(f.clone(), e.clone()),
        T::CMap(f, e) => T::SMap2(f.clone(), Box::new(annotate_e(e))),
        other => unreachable!("not a map stage: {}", other.constructor_name()),
    }
}

/// `\a. cMap(\b. {((), b)}, f(a))`: tags a source-level map's output with the
/// unit lineage.
fn unit_tag<F: Scalar>(f: &Expr<F>) -> Expr<F> {
    Expr::Lambda(
        Pattern::var("__a"),
        Box::new(Expr::Alg(Box::new(AlgebraTerm::CMap(
            Expr::Lambda(
                Pattern::var("__b"),
                Box::new(Expr::Singleton(Box::new(Expr::Tuple(vec![
                    Expr::Lit(Value::Unit),
                    Expr::Var("__b".into()),
                ])))),
            ),
            Box::new(AlgebraTerm::Embedded(Box::new(Expr::Apply(
                Box::new(f.clone()),
                Box::new(Expr::Var("__a".into())),
            )))),
        )))),
    )
}

/// Lineage shape of a normalized query.
pub fn lineage_shape<F: Scalar>(q: &NormalizedTerm<F>) -> LineageShape {
    fn shape_q<F: Scalar>(q: &AlgebraTerm<F>) -> LineageShape {
        use AlgebraTerm as T;
        match q {
            T::Reduce(_, c) => shape_c(c),
            other => shape_c(other),
        }
    }
    fn shape_c<F: Scalar>(c: &AlgebraTerm<F>) -> LineageShape {
        use AlgebraTerm as T;
        match c {
            T::CMap(_, e) if is_leaf(e) => LineageShape::Unit,
            T::CMap(_, e) => shape_e(e),
            _ => LineageShape::Unit,
        }
    }
    fn shape_e<F: Scalar>(e: &AlgebraTerm<F>) -> LineageShape {
        use AlgebraTerm as T;
        match e {
            T::GroupBy(c) => LineageShape::Group(Box::new(shape_c(c))),
            T::CoGroup(a, b) => {
                LineageShape::Join(Box::new(shape_c(a)), Box::new(shape_c(b)))
            }
            _ => LineageShape::Unit,
        }
    }
    shape_q(q.term())
}

/// Compiles a normalized query into its incremental triple under the given
/// source/variable monoid environment.
pub fn compile_query<F: Scalar>(
    q: &NormalizedTerm<F>,
    env: &MonoidEnv,
) -> Result<CompiledQuery<F>> {
    let mut notes = Vec::new();
    let annotated = annotate(q);
    let (h, wrapper, crossed_reduce) = match infer(env, &annotated) {
        InferenceResult::Inferred(_) => (annotated, None, false),
        InferenceResult::Failure { path, reason } => {
            notes.push(format!("factoring: inference failed at {path}: {reason}"));
            let split = split_non_hom(&annotated, env)?;
            let factored = pull_kmaps(&split);
            notes.push(format!("factoring wrapper: {}", factored.wrapper));
            (factored.hom, Some(factored.wrapper), factored.crossed_reduce)
        }
    };
    if crossed_reduce {
        notes.push(
            "a non-homomorphic map crossed the reduce head; its wrapper applies after the \
             answer-side reduce"
                .to_string(),
        );
    }
    let inferred = infer_required(env, &h)?;

    let shape = query_shape(q);
    let merger = match &shape {
        QueryShape::ReduceHead(m) => Monoid::lifted(m.clone()),
        QueryShape::SourceCMap => Monoid::Union,
        QueryShape::DeepCMap => inferred.clone(),
    };
    if merger != inferred {
        return Err(Error::Inference {
            path: "root".into(),
            reason: format!(
                "merger {merger} derived from the query shape disagrees with the inferred {inferred}"
            ),
        });
    }
    let answer = answer_expr(&shape, &merger, wrapper.as_ref())?;
    Ok(CompiledQuery {
        original: q.clone(),
        h,
        merger,
        answer,
        shape,
        lineage: lineage_shape(q),
        wrapper,
        notes,
    })
}

fn query_shape<F: Scalar>(q: &NormalizedTerm<F>) -> QueryShape {
    use AlgebraTerm as T;
    match q.term() {
        T::Reduce(m, _) => QueryShape::ReduceHead(m.clone()),
        T::CMap(_, e) if is_leaf(e) => QueryShape::SourceCMap,
        _ => QueryShape::DeepCMap,
    }
}

/// The merger monoid of a normalized query.
pub fn merger_monoid<F: Scalar>(q: &NormalizedTerm<F>, env: &MonoidEnv) -> Result<Monoid> {
    Ok(compile_query(q, env)?.merger)
}

/// The answer function of a normalized query, a function over the state.
pub fn answer_function<F: Scalar>(q: &NormalizedTerm<F>, env: &MonoidEnv) -> Result<Expr<F>> {
    Ok(compile_query(q, env)?.answer)
}

/// Builds the answer function for a query shape:
/// - source map: project the values out of the state pairs;
/// - reduce head: fold the state values with the reduce monoid;
/// - deep map: strip the lineage down to its top key, re-merge per key, and
///   map the wrapper over the merged values.
fn answer_expr<F: Scalar>(
    shape: &QueryShape,
    merger: &Monoid,
    wrapper: Option<&Expr<F>>,
) -> Result<Expr<F>> {
    let state = "__state";
    let body = match shape {
        QueryShape::SourceCMap => values_of(Expr::Var(state.into())),
        QueryShape::ReduceHead(m) => {
            let folded = Expr::Alg(Box::new(AlgebraTerm::Reduce(
                m.clone(),
                Box::new(AlgebraTerm::Embedded(Box::new(values_of(Expr::Var(state.into()))))),
            )));
            match wrapper {
                Some(w) => Expr::Apply(Box::new(w.clone()), Box::new(folded)),
                None => folded,
            }
        }
        QueryShape::DeepCMap => {
            let value_monoid = match merger {
                Monoid::Lifted(inner) => (**inner).clone(),
                other => {
                    return Err(Error::Inference {
                        path: "root".into(),
                        reason: format!("a deep query must merge lifted, found {other}"),
                    })
                }
            };
            // T(state): ((k, rest), a) -> (k, a)
            let strip = AlgebraTerm::CMap(
                Expr::Lambda(
                    Pattern::pair(Pattern::var("__l"), Pattern::var("__a")),
                    Box::new(Expr::Singleton(Box::new(Expr::Tuple(vec![
                        Expr::Proj(0, Box::new(Expr::Var("__l".into()))),
                        Expr::Var("__a".into()),
                    ])))),
                ),
                Box::new(AlgebraTerm::Embedded(Box::new(Expr::Var(state.into())))),
            );
            let remerged = AlgebraTerm::Reduce(
                Monoid::lifted(value_monoid),
                Box::new(strip),
            );
            let out_value: Expr<F> = match wrapper {
                Some(w) => Expr::Apply(
                    Box::new(w.clone()),
                    Box::new(Expr::Proj(1, Box::new(Expr::Var("__kv".into())))),
                ),
                None => Expr::Proj(1, Box::new(Expr::Var("__kv".into()))),
            };
            Expr::Alg(Box::new(AlgebraTerm::CMap(
                Expr::Lambda(Pattern::var("__kv"), Box::new(Expr::Singleton(Box::new(out_value)))),
                Box::new(remerged),
            )))
        }
    };
    Ok(Expr::Lambda(Pattern::var(state), Box::new(body)))
}

/// `{snd p | p in state}`
fn values_of<F: Scalar>(state: Expr<F>) -> Expr<F> {
    Expr::Alg(Box::new(AlgebraTerm::CMap(
        Expr::Lambda(
            Pattern::var("__p"),
            Box::new(Expr::Singleton(Box::new(Expr::Proj(
                1,
                Box::new(Expr::Var("__p".into())),
            )))),
        ),
        Box::new(AlgebraTerm::Embedded(Box::new(state))),
    )))
}


#[cfg(test)]
mod crossed_reduce_tests {
    use super::*;
    use crate::normalize::normalize;
    use crate::term::build::*;
    use crate::term::BinOp;

    /// A reduce head over a non-homomorphic group body: the extracted map
    /// has to cross the reduce and lands in the answer after the fold. The
    /// case compiles and is flagged; the wrapper applies to the folded
    /// total, which only matches the original when the wrapped map
    /// distributes over the fold.
    #[test]
    fn kmap_crossing_a_reduce_head_is_flagged() {
        let body = bin(
            BinOp::Add,
            float(0.25),
            bin(
                BinOp::Mul,
                float(2.0),
                alg(reduce(Monoid::Sum, tvar("s"))),
            ),
        );
        let q = normalize(&reduce::<f64>(
            Monoid::Sum,
            cmap(
                lam2("k", "s", single(body)),
                group_by(cmap(
                    lam1("p", single(pair(fst(var("p")), snd(var("p"))))),
                    source(0),
                )),
            ),
        ))
        .unwrap();
        let env = MonoidEnv::streams([0]);
        let compiled = compile_query(&q, &env).unwrap();
        assert!(matches!(compiled.shape, QueryShape::ReduceHead(Monoid::Sum)));
        assert!(compiled.wrapper.is_some());
        assert!(
            compiled.notes.iter().any(|n| n.contains("crossed the reduce head")),
            "{:?}",
            compiled.notes
        );
    }
}
