//! Seeded generators for the property and law suites.
//!
//! Float data is dyadic (multiples of 1/64) so sums are exact regardless of
//! association and the homomorphism laws can be checked with exact equality.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Deterministic across platforms and runs.
pub type TestRng = ChaCha8Rng;

use crate::monoid::Monoid;
use crate::scalar::Scalar;
use crate::term::build::*;
use crate::term::{AlgebraTerm, BinOp, Expr, Pattern};
use crate::value::{Bag, Value};

pub fn rng(seed: u64) -> TestRng {
    TestRng::seed_from_u64(seed)
}

/// A float that sums exactly: k/64 with |k| bounded.
pub fn dyadic<F: Scalar>(rng: &mut TestRng, lo: i64, hi: i64) -> F {
    let k = rng.gen_range(lo * 64..=hi * 64);
    F::from_i64(k).expect("dyadic") / F::from_i64(64).expect("dyadic")
}

/// Bag of `(int, int)` pairs with keys in `0..=key_max`.
pub fn int_pairs<F: Scalar>(rng: &mut TestRng, n: usize, key_max: i64, val_max: i64) -> Value<F> {
    let mut bag = Bag::new();
    for _ in 0..n {
        bag.insert(
            Value::pair(
                Value::Int(rng.gen_range(0..=key_max)),
                Value::Int(rng.gen_range(0..=val_max)),
            ),
            1,
        );
    }
    Value::Bag(bag)
}

/// Bag of dyadic 2-d points in `[0, 10)`.
pub fn float_points<F: Scalar>(rng: &mut TestRng, n: usize) -> Value<F> {
    let mut bag = Bag::new();
    for _ in 0..n {
        bag.insert(
            Value::Tuple(vec![
                Value::Float(dyadic(rng, 0, 9)),
                Value::Float(dyadic(rng, 0, 9)),
            ]),
            1,
        );
    }
    Value::Bag(bag)
}

/// Splits a bag element-wise into two halves, uniformly at random.
pub fn split_elements<F: Scalar>(rng: &mut TestRng, v: &Value<F>) -> (Value<F>, Value<F>) {
    let b = v.as_bag().expect("bag");
    let mut left = Bag::new();
    let mut right = Bag::new();
    for (e, n) in b.iter() {
        for _ in 0..n {
            if rng.gen_bool(0.5) {
                left.insert(e.clone(), 1);
            } else {
                right.insert(e.clone(), 1);
            }
        }
    }
    (Value::Bag(left), Value::Bag(right))
}

/// One-to-many join data: the left side gets globally unique join keys
/// starting at `key_offset`, the right side references only keys from this
/// call. Returns `(left, right)` with left rows `(A, B)` and right rows
/// `(C, D)` joined on `B = C`.
pub fn join_clusters<F: Scalar>(
    rng: &mut TestRng,
    clusters: usize,
    key_offset: i64,
    max_fanout: usize,
) -> (Value<F>, Value<F>) {
    let mut left = Bag::new();
    let mut right = Bag::new();
    for i in 0..clusters {
        let b = key_offset + i as i64;
        let a = rng.gen_range(0..20i64);
        left.insert(Value::pair(Value::Int(a), Value::Int(b)), 1);
        for _ in 0..rng.gen_range(0..=max_fanout) {
            right.insert(
                Value::pair(Value::Int(b), Value::Int(rng.gen_range(0..1000i64))),
                1,
            );
        }
    }
    (Value::Bag(left), Value::Bag(right))
}

/// Splits join data so that each join-key cluster (the left row plus all its
/// right rows) lands wholly on one side, per the one-to-many premise.
pub fn split_join_clusters<F: Scalar>(
    rng: &mut TestRng,
    left: &Value<F>,
    right: &Value<F>,
) -> ((Value<F>, Value<F>), (Value<F>, Value<F>)) {
    let mut go_left: BTreeMap<Value<F>, bool> = BTreeMap::new();
    let mut l1 = Bag::new();
    let mut l2 = Bag::new();
    for (e, n) in left.as_bag().expect("bag").iter() {
        let key = e.proj(1).expect("pair").clone();
        let side = *go_left.entry(key).or_insert_with(|| rng.gen_bool(0.5));
        if side {
            l1.insert(e.clone(), n);
        } else {
            l2.insert(e.clone(), n);
        }
    }
    let mut r1 = Bag::new();
    let mut r2 = Bag::new();
    for (e, n) in right.as_bag().expect("bag").iter() {
        let key = e.proj(0).expect("pair").clone();
        let side = *go_left.entry(key).or_insert_with(|| rng.gen_bool(0.5));
        if side {
            r1.insert(e.clone(), n);
        } else {
            r2.insert(e.clone(), n);
        }
    }
    ((Value::Bag(l1), Value::Bag(r1)), (Value::Bag(l2), Value::Bag(r2)))
}

/// Weighted edges `(src, dst, 1/outdeg(src))` with dyadic weights: every
/// outdegree is 1, 2, or 4.
pub fn weighted_edges<F: Scalar>(rng: &mut TestRng, nodes: i64, srcs: usize) -> Value<F> {
    let mut bag = Bag::new();
    for _ in 0..srcs {
        let s = rng.gen_range(0..nodes);
        let deg = [1usize, 2, 4][rng.gen_range(0..3)];
        let w = F::one() / F::from_usize(deg).expect("deg");
        for _ in 0..deg {
            bag.insert(
                Value::Tuple(vec![
                    Value::Int(s),
                    Value::Int(rng.gen_range(0..nodes)),
                    Value::Float(w),
                ]),
                1,
            );
        }
    }
    Value::Bag(bag)
}

/// A random atom; floats are integer-valued so merges stay exact.
pub fn atom<F: Scalar>(rng: &mut TestRng) -> Value<F> {
    match rng.gen_range(0..5) {
        0 => Value::Unit,
        1 => Value::Bool(rng.gen()),
        2 => Value::Int(rng.gen_range(-50..50)),
        3 => Value::Float(F::from_i64(rng.gen_range(-20..20)).expect("int-valued float")),
        _ => Value::str(format!("s{}", rng.gen_range(0..9))),
    }
}

/// A random monoid, optionally including the invariance monoid at the leaves.
pub fn monoid(rng: &mut TestRng, depth: usize, with_box: bool) -> Monoid {
    let leaf = |rng: &mut TestRng| match rng.gen_range(0..if with_box { 6 } else { 5 }) {
        0 => Monoid::Union,
        1 => Monoid::Sum,
        2 => Monoid::Prod,
        3 => Monoid::And,
        4 => Monoid::Or,
        _ => Monoid::Box,
    };
    if depth == 0 {
        return leaf(rng);
    }
    match rng.gen_range(0..4) {
        0 | 1 => leaf(rng),
        2 => Monoid::lifted(monoid(rng, depth - 1, with_box)),
        _ => Monoid::product(monoid(rng, depth - 1, with_box), monoid(rng, depth - 1, with_box)),
    }
}

/// A value in the monoid's carrier. Values mimic reachable states: counts
/// and sums are strictly positive and bags are nonempty, because an
/// aggregation of real tuples never contributes an identity.
pub fn carrier_value<F: Scalar>(rng: &mut TestRng, m: &Monoid) -> Value<F> {
    match m {
        Monoid::Union => {
            let mut b = Bag::new();
            for _ in 0..rng.gen_range(1..4) {
                b.insert(Value::Int(rng.gen_range(0..6)), 1);
            }
            Value::Bag(b)
        }
        Monoid::Sum => Value::Int(rng.gen_range(1..100)),
        Monoid::Prod => Value::Int(rng.gen_range(2..4)),
        Monoid::And | Monoid::Or => Value::Bool(rng.gen()),
        Monoid::Box => Value::Int(7),
        Monoid::Product(l, r) => Value::pair(carrier_value(rng, l), carrier_value(rng, r)),
        Monoid::Lifted(inner) => {
            let mut b = Bag::new();
            for k in 0..rng.gen_range(0..5i64) {
                if rng.gen_bool(0.7) {
                    b.insert(Value::pair(Value::Int(k), carrier_value(rng, inner)), 1);
                }
            }
            Value::Bag(b)
        }
    }
}

/// A small random normalized single-source query drawn from templates the
/// compiler supports: keyed sums/pairs over a groupBy, nested groupBys,
/// plain source maps, and reduce heads.
pub fn normalized_template<F: Scalar>(rng: &mut TestRng) -> AlgebraTerm<F> {
    let shift = rng.gen_range(0..5i64);
    let kv = lam1(
        "p",
        single(pair(fst(var("p")), bin(BinOp::Add, snd(var("p")), int(shift)))),
    );
    let sum_s = alg(reduce(Monoid::Sum, embedded(var("s"))));
    let count_s = alg(reduce(
        Monoid::Sum,
        cmap(lam1("v", single(int(1))), embedded(var("s"))),
    ));
    match rng.gen_range(0..7) {
        // keyed sum per group
        0 => cmap(
            lam2("k", "s", single(pair(var("k"), sum_s))),
            group_by(cmap(kv, source(0))),
        ),
        // keyed (sum, count) pair per group
        1 => cmap(
            lam2("k", "s", single(pair(var("k"), pair(sum_s, count_s)))),
            group_by(cmap(kv, source(0))),
        ),
        // unnest: group then flatten the groups back out
        2 => cmap(
            lam2("k", "s", alg(cmap(lam1("v", single(pair(var("k"), var("v")))), embedded(var("s"))))),
            group_by(cmap(kv, source(0))),
        ),
        // total over groups
        3 => reduce(
            Monoid::Sum,
            cmap(lam2("k", "s", single(sum_s)), group_by(cmap(kv, source(0)))),
        ),
        // plain source map
        4 => cmap(kv, source(0)),
        // total over the source
        5 => reduce(Monoid::Sum, cmap(lam1("p", single(snd(var("p")))), source(0))),
        // two-level grouping: re-key group sums by parity-ish constant key
        _ => cmap(
            lam2("k2", "s2", single(pair(var("k2"), sum_s2()))),
            group_by(cmap(
                lam2("k", "s", single(pair(int(rng.gen_range(0..2)), sum_s))),
                group_by(cmap(kv, source(0))),
            )),
        ),
    }
}

fn sum_s2<F: Scalar>() -> Expr<F> {
    alg(reduce(Monoid::Sum, embedded(var("s2"))))
}

/// Applies a lambda pattern-style substitution-free binding for tests.
pub fn lam_pair2<F: Scalar>(a: &str, b: &str, c: &str, body: Expr<F>) -> Expr<F> {
    Expr::Lambda(
        Pattern::pair(
            Pattern::var(a),
            Pattern::pair(Pattern::var(b), Pattern::var(c)),
        ),
        Box::new(body),
    )
}
