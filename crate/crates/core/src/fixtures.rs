//! Built-in benchmark queries: groupBy-avg, join-groupBy-avg, k-means
//! clustering, and PageRank, with the source schemas and compile options the
//! workbench uses for them.

use std::collections::BTreeSet;

use crate::data::ColumnType;
use crate::monoid::Monoid;
use crate::runtime::{CheckLevel, CompileOpts};
use crate::scalar::Scalar;
use crate::term::build::*;
use crate::term::{AlgebraTerm, BinOp, Builtin, Expr, Pattern};
use crate::value::Value;

#[derive(Debug, Clone)]
pub struct Fixture<F: Scalar> {
    pub name: &'static str,
    pub term: AlgebraTerm<F>,
    pub invariant_sources: BTreeSet<usize>,
    pub epsilon: Option<F>,
    /// CSV column types per source index.
    pub schemas: Vec<(usize, Vec<ColumnType>)>,
}

impl<F: Scalar> Fixture<F> {
    pub fn compile_opts(&self, checks: CheckLevel) -> CompileOpts<F> {
        CompileOpts {
            invariant_sources: self.invariant_sources.clone(),
            epsilon: self.epsilon,
            checks,
        }
    }
}

pub const FIXTURE_NAMES: [&str; 4] = ["groupby-avg", "join-groupby-avg", "kmeans", "pagerank"];

/// Looks up a fixture by name. `iterations` applies to the iterative
/// fixtures only.
pub fn fixture<F: Scalar>(name: &str, iterations: usize) -> Option<Fixture<F>> {
    match name {
        "groupby-avg" => Some(Fixture {
            name: "groupby-avg",
            term: groupby_avg(),
            invariant_sources: BTreeSet::new(),
            epsilon: None,
            schemas: vec![(0, vec![ColumnType::Int, ColumnType::Int])],
        }),
        "join-groupby-avg" => Some(Fixture {
            name: "join-groupby-avg",
            term: join_groupby_avg(),
            invariant_sources: BTreeSet::new(),
            epsilon: None,
            schemas: vec![
                (0, vec![ColumnType::Int, ColumnType::Int]),
                (1, vec![ColumnType::Int, ColumnType::Int]),
            ],
        }),
        "kmeans" => Some(Fixture {
            name: "kmeans",
            term: kmeans(iterations),
            invariant_sources: [1].into(),
            epsilon: Some(F::from_f64(0.25).expect("epsilon")),
            schemas: vec![
                (0, vec![ColumnType::Float, ColumnType::Float]),
                (1, vec![ColumnType::Float, ColumnType::Float]),
            ],
        }),
        "pagerank" => Some(Fixture {
            name: "pagerank",
            term: pagerank(iterations),
            invariant_sources: BTreeSet::new(),
            epsilon: None,
            schemas: vec![(0, vec![ColumnType::Int, ColumnType::Int, ColumnType::Float])],
        }),
        _ => None,
    }
}

/// `avg(s) = reduce(+, s) / reduce(+, cMap(\v.{1}, s))`
pub fn avg_of<F: Scalar>(s: &str) -> Expr<F> {
    bin(
        BinOp::Div,
        alg(reduce(Monoid::Sum, tvar(s))),
        alg(reduce(Monoid::Sum, cmap(lam1("v", single(int(1))), tvar(s)))),
    )
}

/// `select (k, avg(v)) from (k,v) in S0 group by k`
pub fn groupby_avg<F: Scalar>() -> AlgebraTerm<F> {
    cmap(
        lam2("k", "s", single(pair(var("k"), avg_of("s")))),
        group_by(cmap(
            lam1("p", single(pair(fst(var("p")), snd(var("p"))))),
            source(0),
        )),
    )
}

/// `select (x.A, avg(y.D)) from x in S0, y in S1 where x.B = y.C group by x.A`
/// with x = (A,B) and y = (C,D).
pub fn join_groupby_avg<F: Scalar>() -> AlgebraTerm<F> {
    // g(xs, ys) = cMap(\x. cMap(\y. {(x.A, y.D)}, ys), xs)
    let flatten = lam(
        Pattern::pair(
            Pattern::var("j"),
            Pattern::pair(Pattern::var("xs"), Pattern::var("ys")),
        ),
        alg(cmap(
            lam1(
                "x",
                alg(cmap(
                    lam1("y", single(pair(fst(var("x")), snd(var("y"))))),
                    tvar("ys"),
                )),
            ),
            tvar("xs"),
        )),
    );
    cmap(
        lam2("k", "s", single(pair(var("k"), avg_of("s")))),
        group_by(cmap(
            flatten,
            cogroup(
                cmap(lam1("x", single(pair(snd(var("x")), var("x")))), source(0)),
                cmap(lam1("y", single(pair(fst(var("y")), var("y")))), source(1)),
            ),
        )),
    )
}

/// K-means clustering: points stream on source 0, initial centroids are the
/// invariant source 1, and each step regroups the points by their nearest
/// centroid and averages per cluster.
pub fn kmeans<F: Scalar>(iterations: usize) -> AlgebraTerm<F> {
    let sum_of = |proj: Expr<F>| {
        alg(reduce(
            Monoid::Sum,
            cmap(lam1("q", single(proj)), tvar("s")),
        ))
    };
    let count = alg(reduce(
        Monoid::Sum,
        cmap(lam1("q", single(int(1))), tvar("s")),
    ));
    let centroid = Expr::Tuple(vec![
        bin(BinOp::Div, sum_of(fst(var("q"))), count.clone()),
        bin(BinOp::Div, sum_of(snd(var("q"))), count),
    ]);
    let assign = lam1(
        "p",
        single(pair(
            Expr::Call(Builtin::Closest, vec![var("cents"), var("p")]),
            var("p"),
        )),
    );
    AlgebraTerm::Repeat {
        param: "cents".into(),
        rounds: iterations,
        init: Box::new(source(1)),
        body: Box::new(cmap(
            lam2("k", "s", single(centroid)),
            group_by(cmap(assign, source(0))),
        )),
    }
}

/// Default starting centroids for the four-squares dataset: one seed near
/// each square, off-center so the iteration has work to do.
pub fn kmeans_default_centroids<F: Scalar>() -> Value<F> {
    let p = |x: f64, y: f64| {
        Value::Tuple(vec![
            Value::Float(F::from_f64(x).expect("coord")),
            Value::Float(F::from_f64(y).expect("coord")),
        ])
    };
    crate::value::bag([p(2.5, 2.5), p(2.5, 6.5), p(6.5, 2.5), p(6.5, 6.5)])
}

/// PageRank over weighted edges `(src, dst, 1/outdeg(src))` on source 0.
/// Each step joins the current ranks with the edges on the source node,
/// sends `rank * weight` along each edge, and regroups by target:
/// `rank(m) = 0.15 + 0.85 * sum of incoming contributions`.
pub fn pagerank<F: Scalar>(iterations: usize) -> AlgebraTerm<F> {
    let damp = F::from_f64(0.85).expect("damping");
    let base = F::from_f64(0.15).expect("damping");
    // Initial ranks: every node mentioned by an edge starts at 1.
    let init = cmap(
        lam2("n", "g", single(pair(var("n"), float(F::one())))),
        group_by(cmap(
            lam1(
                "e",
                Expr::Union(
                    Box::new(single(pair(fst(var("e")), int(0)))),
                    Box::new(single(pair(get(1, var("e")), int(0)))),
                ),
            ),
            source(0),
        )),
    );
    // Per join group (n, (rs, ds)): for each rank r and out-edge (d, w),
    // contribute (d, r*w).
    let contribute = lam(
        Pattern::pair(
            Pattern::var("n"),
            Pattern::pair(Pattern::var("rs"), Pattern::var("ds")),
        ),
        alg(cmap(
            lam1(
                "r",
                alg(cmap(
                    lam1("q", single(pair(fst(var("q")), bin(BinOp::Mul, var("r"), snd(var("q")))))),
                    tvar("ds"),
                )),
            ),
            tvar("rs"),
        )),
    );
    let rank = bin(
        BinOp::Add,
        float(base),
        bin(
            BinOp::Mul,
            float(damp),
            alg(reduce(Monoid::Sum, tvar("cs"))),
        ),
    );
    AlgebraTerm::Repeat {
        param: "ranks".into(),
        rounds: iterations,
        init: Box::new(init),
        body: Box::new(cmap(
            lam2("m", "cs", single(pair(var("m"), rank))),
            group_by(cmap(
                contribute,
                cogroup(
                    cmap(lam1("p", single(pair(fst(var("p")), snd(var("p"))))), tvar("ranks")),
                    cmap(
                        lam1("e", single(pair(fst(var("e")), pair(get(1, var("e")), get(2, var("e")))))),
                        source(0),
                    ),
                ),
            )),
        )),
    }
}
