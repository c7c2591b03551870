//! Homomorphism and correctness laws for the compiled benchmarks and for
//! randomly generated queries.
//!
//! Law sheet:
//!
//! | Law        | Statement                                                    |
//! |------------|--------------------------------------------------------------|
//! | HOM        | h(S u dS) = h(S) (x) h(dS), exact                            |
//! | ANSWER     | a(h(S)) = q(S), exact (1e-12 on float divisions)             |
//! | SMAP2-DIST | sMap2(f, X lift-merge Y) = sMap2(f, X) u sMap2(f, Y)         |
//! | SWAP-DIST  | swap(X u Y) = swap(X) u swap(Y)                              |
//! | MIX-DIST   | mix(X lift-merge Y) = mix(X) lift-merge mix(Y), matched keys |
//!
//! The join benchmark's HOM law splits data by join-key cluster: the
//! one-to-many judgment treats the left group per key as invariant, so a
//! split may not separate a left row from its matches.

use std::collections::BTreeMap;

use incrq_core::eval::{apply_fn, evaluate, Env, EvalCtx};
use incrq_core::fixtures;
use incrq_core::monoid::{monoid_merge, MergeOpts, Monoid};
use incrq_core::runtime::{compile, CompileOpts, IncrementalPlan, PlanMode};
use incrq_core::term::build::*;
use incrq_core::term::{AlgebraTerm, Expr};
use incrq_core::testkit;
use incrq_core::value::{bag_equals, Bag, Value};
use incrq_core::{Error, Monoid as M};

type V = Value<f64>;
type T = AlgebraTerm<f64>;

fn eval_term(term: &T, sources: &BTreeMap<usize, V>, env_bind: Option<(&str, V)>) -> V {
    let ctx = EvalCtx::new(sources);
    let mut env = Env::new();
    if let Some((n, v)) = env_bind {
        env.bind(n, v);
    }
    evaluate(term, &ctx, &mut env).expect("evaluation")
}

fn merge(m: &Monoid, a: &V, b: &V) -> V {
    monoid_merge(m, a, b, &MergeOpts::EXACT).expect("merge")
}

/// h(S u dS) must equal h(S) (x) h(dS) exactly.
fn check_hom(
    plan: &IncrementalPlan<f64>,
    full: &BTreeMap<usize, V>,
    part1: &BTreeMap<usize, V>,
    part2: &BTreeMap<usize, V>,
    env_bind: Option<(&str, V)>,
) {
    let whole = eval_term(&plan.query.h, full, env_bind.clone());
    let a = eval_term(&plan.query.h, part1, env_bind.clone());
    let b = eval_term(&plan.query.h, part2, env_bind);
    let merged = merge(&plan.query.merger, &a, &b);
    assert_eq!(whole, merged, "h is not a homomorphism for this split");
}

fn union_all(a: &V, b: &V) -> V {
    Value::Bag(a.as_bag().unwrap().union(b.as_bag().unwrap()))
}

fn one_source(v: V) -> BTreeMap<usize, V> {
    let mut m = BTreeMap::new();
    m.insert(0, v);
    m
}

fn two_sources(a: V, b: V) -> BTreeMap<usize, V> {
    let mut m = BTreeMap::new();
    m.insert(0, a);
    m.insert(1, b);
    m
}

#[test]
fn hom_law_groupby_avg_on_100_random_splits() {
    let plan = compile(&fixtures::groupby_avg::<f64>(), CompileOpts::default()).unwrap();
    for seed in 0..100u64 {
        let mut rng = testkit::rng(1000 + seed);
        let data = testkit::int_pairs::<f64>(&mut rng, 200, 40, 1000);
        let (s, ds) = testkit::split_elements(&mut rng, &data);
        check_hom(&plan, &one_source(data), &one_source(s), &one_source(ds), None);
    }
}

#[test]
fn hom_law_join_groupby_avg_on_100_cluster_splits() {
    let plan = compile(&fixtures::join_groupby_avg::<f64>(), CompileOpts::default()).unwrap();
    for seed in 0..100u64 {
        let mut rng = testkit::rng(2000 + seed);
        let (left, right) = testkit::join_clusters::<f64>(&mut rng, 60, 0, 5);
        let ((l1, r1), (l2, r2)) = testkit::split_join_clusters(&mut rng, &left, &right);
        check_hom(
            &plan,
            &two_sources(left, right),
            &two_sources(l1, r1),
            &two_sources(l2, r2),
            None,
        );
    }
}

#[test]
fn hom_law_kmeans_step_on_100_random_splits() {
    let fx = fixtures::fixture::<f64>("kmeans", 3).unwrap();
    // The step compiles against the loop variable held invariant; epsilon
    // stays off here so the law is exact.
    let plan = compile(
        &fx.term,
        CompileOpts { invariant_sources: fx.invariant_sources.clone(), ..Default::default() },
    )
    .unwrap();
    let cents = fixtures::kmeans_default_centroids::<f64>();
    for seed in 0..100u64 {
        let mut rng = testkit::rng(3000 + seed);
        let data = testkit::float_points::<f64>(&mut rng, 150);
        let (s, ds) = testkit::split_elements(&mut rng, &data);
        let with_cents = |v: V| {
            let mut m = one_source(v);
            m.insert(1, cents.clone());
            m
        };
        check_hom(
            &plan,
            &with_cents(data),
            &with_cents(s),
            &with_cents(ds),
            Some(("cents", cents.clone())),
        );
    }
}

#[test]
fn hom_law_pagerank_step_on_100_random_splits() {
    let plan = compile(&fixtures::pagerank::<f64>(3), CompileOpts::default()).unwrap();
    let PlanMode::Iterative { init, param, .. } = plan.mode.clone() else {
        panic!("pagerank is iterative")
    };
    for seed in 0..100u64 {
        let mut rng = testkit::rng(4000 + seed);
        let edges = testkit::weighted_edges::<f64>(&mut rng, 30, 60);
        let sources = one_source(edges.clone());
        let ranks = eval_term(&init, &sources, None);
        let (s, ds) = testkit::split_elements(&mut rng, &edges);
        check_hom(
            &plan,
            &sources,
            &one_source(s),
            &one_source(ds),
            Some((param.as_str(), ranks)),
        );
    }
}

#[test]
fn hom_law_on_generated_templates() {
    let mut compiled = 0usize;
    let mut rejected = 0usize;
    for seed in 0..100u64 {
        let mut rng = testkit::rng(5000 + seed);
        let term = testkit::normalized_template::<f64>(&mut rng);
        match compile(&term, CompileOpts::default()) {
            Ok(plan) => {
                compiled += 1;
                let data = testkit::int_pairs::<f64>(&mut rng, 120, 15, 50);
                let (s, ds) = testkit::split_elements(&mut rng, &data);
                check_hom(&plan, &one_source(data), &one_source(s), &one_source(ds), None);
            }
            Err(Error::NotIncrementalizable { .. } | Error::Inference { .. }) => {
                rejected += 1;
            }
            Err(other) => panic!("unexpected compile error: {other}"),
        }
    }
    assert!(compiled >= 50, "only {compiled} templates compiled");
    assert!(rejected > 0, "expected some templates to be rejected");
}

/// a(h(S)) must reproduce the original query on S.
fn check_answer(
    plan: &IncrementalPlan<f64>,
    original: &T,
    sources: &BTreeMap<usize, V>,
    env_bind: Option<(&str, V)>,
    tol: f64,
) {
    let state = eval_term(&plan.query.h, sources, env_bind.clone());
    let empty = BTreeMap::new();
    let ctx = EvalCtx::new(&empty);
    let answered = apply_fn(&plan.query.answer, state, &ctx, &mut Env::new()).expect("answer");
    let direct = eval_term(original, sources, env_bind);
    assert!(
        bag_equals(&answered, &direct, tol),
        "answer mismatch:\n  got      {answered}\n  expected {direct}"
    );
}

#[test]
fn answer_law_groupby_avg() {
    let original = fixtures::groupby_avg::<f64>();
    let plan = compile(&original, CompileOpts::default()).unwrap();
    for seed in 0..100u64 {
        let mut rng = testkit::rng(6000 + seed);
        let data = testkit::int_pairs::<f64>(&mut rng, 200, 40, 1000);
        check_answer(&plan, &original, &one_source(data), None, 1e-12);
    }
}

#[test]
fn answer_law_join_groupby_avg() {
    let original = fixtures::join_groupby_avg::<f64>();
    let plan = compile(&original, CompileOpts::default()).unwrap();
    for seed in 0..100u64 {
        let mut rng = testkit::rng(7000 + seed);
        let (left, right) = testkit::join_clusters::<f64>(&mut rng, 60, 0, 5);
        check_answer(&plan, &original, &two_sources(left, right), None, 1e-12);
    }
}

#[test]
fn answer_law_kmeans_step() {
    let fx = fixtures::fixture::<f64>("kmeans", 3).unwrap();
    let plan = compile(
        &fx.term,
        CompileOpts { invariant_sources: fx.invariant_sources.clone(), ..Default::default() },
    )
    .unwrap();
    // The original step: one assignment-and-average round.
    let T::Repeat { body, param, .. } = fixtures::kmeans::<f64>(3) else { panic!() };
    let cents = fixtures::kmeans_default_centroids::<f64>();
    for seed in 0..100u64 {
        let mut rng = testkit::rng(8000 + seed);
        let data = testkit::float_points::<f64>(&mut rng, 150);
        let mut sources = one_source(data);
        sources.insert(1, cents.clone());
        check_answer(&plan, &body, &sources, Some((param.as_str(), cents.clone())), 1e-12);
    }
}

#[test]
fn answer_law_pagerank_step() {
    let plan = compile(&fixtures::pagerank::<f64>(3), CompileOpts::default()).unwrap();
    let T::Repeat { body, param, init, .. } = fixtures::pagerank::<f64>(3) else { panic!() };
    for seed in 0..100u64 {
        let mut rng = testkit::rng(9000 + seed);
        let edges = testkit::weighted_edges::<f64>(&mut rng, 30, 60);
        let sources = one_source(edges);
        let ranks = eval_term(&init, &sources, None);
        check_answer(&plan, &body, &sources, Some((param.as_str(), ranks)), 1e-12);
    }
}

#[test]
fn answer_law_on_generated_templates() {
    for seed in 0..100u64 {
        let mut rng = testkit::rng(10_000 + seed);
        let term = testkit::normalized_template::<f64>(&mut rng);
        if let Ok(plan) = compile(&term, CompileOpts::default()) {
            let data = testkit::int_pairs::<f64>(&mut rng, 120, 15, 50);
            check_answer(&plan, &term, &one_source(data), None, 1e-12);
        }
    }
}

#[test]
fn lineage_keys_in_h_output_are_unique() {
    let plan = compile(&fixtures::join_groupby_avg::<f64>(), CompileOpts::default()).unwrap();
    for seed in 0..50u64 {
        let mut rng = testkit::rng(11_000 + seed);
        let (left, right) = testkit::join_clusters::<f64>(&mut rng, 40, 0, 4);
        let state = eval_term(&plan.query.h, &two_sources(left, right), None);
        let b = state.as_bag().unwrap();
        let mut keys = std::collections::BTreeSet::new();
        for (e, n) in b.iter() {
            assert_eq!(n, 1);
            assert!(keys.insert(e.proj(0).unwrap().clone()), "duplicate lineage");
        }
    }
}

// --- transformed-primitive distribution laws ---

fn lit_term(v: V) -> T {
    AlgebraTerm::Embedded(Box::new(Expr::Lit(v)))
}

fn eval_prim(term: &T) -> V {
    let empty = BTreeMap::new();
    eval_term(term, &empty, None)
}

/// Random lifted-union carrier keyed by (k, theta) lineage pairs.
fn lineage_keyed_groups(rng: &mut testkit::TestRng, keys: i64) -> V {
    let mut b = Bag::new();
    for k in 0..keys {
        if rand::Rng::gen_bool(rng, 0.6) {
            let lin = V::pair(V::Int(k), V::Unit);
            let members: Bag<f64> = (0..rand::Rng::gen_range(rng, 1..4i64))
                .map(|i| V::Int(10 * k + i))
                .collect();
            b.insert(V::pair(lin, Value::Bag(members)), 1);
        }
    }
    Value::Bag(b)
}

#[test]
fn smap2_distributes_over_lifted_merge_as_union() {
    let f = lam2(
        "k",
        "s",
        alg(cmap(
            lam1("v", single(pair(var("k"), bin(incrq_core::BinOp::Add, var("v"), int(1))))),
            embedded(var("s")),
        )),
    );
    let lift = M::lifted(M::Union);
    for seed in 0..200u64 {
        let mut rng = testkit::rng(12_000 + seed);
        let x = lineage_keyed_groups(&mut rng, 6);
        let y = lineage_keyed_groups(&mut rng, 6);
        let merged = merge(&lift, &x, &y);
        let lhs = eval_prim(&T::SMap2(f.clone(), Box::new(lit_term(merged))));
        let sx = eval_prim(&T::SMap2(f.clone(), Box::new(lit_term(x))));
        let sy = eval_prim(&T::SMap2(f.clone(), Box::new(lit_term(y))));
        assert_eq!(lhs, union_all(&sx, &sy));
    }
}

#[test]
fn swap_distributes_over_union() {
    for seed in 0..200u64 {
        let mut rng = testkit::rng(13_000 + seed);
        let make = |rng: &mut testkit::TestRng| {
            let mut b = Bag::new();
            for _ in 0..rand::Rng::gen_range(rng, 0..8) {
                let k = V::Int(rand::Rng::gen_range(rng, 0..5i64));
                let theta = V::Unit;
                let v = V::Int(rand::Rng::gen_range(rng, 0..50i64));
                b.insert(V::pair(k, V::pair(theta, v)), 1);
            }
            Value::Bag(b)
        };
        let x = make(&mut rng);
        let y = make(&mut rng);
        let lhs = eval_prim(&T::Swap(Box::new(lit_term(union_all(&x, &y)))));
        let rx = eval_prim(&T::Swap(Box::new(lit_term(x))));
        let ry = eval_prim(&T::Swap(Box::new(lit_term(y))));
        assert_eq!(lhs, union_all(&rx, &ry));
    }
}

/// coGroup-shaped values whose per-key sides are both nonempty (the matched
/// regime of the join restriction; an empty side has no lineage to group).
fn cogroup_like(rng: &mut testkit::TestRng, keys: i64) -> V {
    let mut b = Bag::new();
    for k in 0..keys {
        if rand::Rng::gen_bool(rng, 0.6) {
            let tagged = |n: i64| -> V {
                let mut s = Bag::new();
                for i in 0..n {
                    s.insert(V::pair(V::Unit, V::Int(100 * k + i)), 1);
                }
                Value::Bag(s)
            };
            let nx = rand::Rng::gen_range(rng, 1..3i64);
            let ny = rand::Rng::gen_range(rng, 1..4i64);
            b.insert(V::pair(V::Int(k), V::pair(tagged(nx), tagged(ny))), 1);
        }
    }
    Value::Bag(b)
}

#[test]
fn mix_distributes_over_pairwise_lifted_merge_on_matched_keys() {
    let m = M::lifted(M::product(M::Union, M::Union));
    for seed in 0..200u64 {
        let mut rng = testkit::rng(14_000 + seed);
        let x = cogroup_like(&mut rng, 5);
        let y = cogroup_like(&mut rng, 5);
        let merged = merge(&m, &x, &y);
        let lhs = eval_prim(&T::Mix(Box::new(lit_term(merged))));
        let mx = eval_prim(&T::Mix(Box::new(lit_term(x))));
        let my = eval_prim(&T::Mix(Box::new(lit_term(y))));
        let rhs = merge(&m, &mx, &my);
        assert_eq!(lhs, rhs);
    }
}

#[test]
fn mix_and_swap_examples() {
    // swap({(1, ((), "A"))}) = {((1, ()), "A")}
    let x = incrq_core::value::bag::<f64>([V::pair(V::Int(1), V::pair(V::Unit, V::str("A")))]);
    let got = eval_prim(&T::Swap(Box::new(lit_term(x))));
    assert_eq!(
        got,
        incrq_core::value::bag::<f64>([V::pair(V::pair(V::Int(1), V::Unit), V::str("A"))])
    );

    // mix over unit-lineage sides yields ((k,((),())),(xs,ys)) with the full
    // groups.
    let xs: Bag<f64> = [V::pair(V::Unit, V::Int(1)), V::pair(V::Unit, V::Int(2))]
        .into_iter()
        .collect();
    let ys: Bag<f64> = [V::pair(V::Unit, V::Int(9))].into_iter().collect();
    let input = incrq_core::value::bag::<f64>([V::pair(
        V::Int(4),
        V::pair(Value::Bag(xs), Value::Bag(ys)),
    )]);
    let got = eval_prim(&T::Mix(Box::new(lit_term(input))));
    let expect = incrq_core::value::bag::<f64>([V::pair(
        V::pair(V::Int(4), V::pair(V::Unit, V::Unit)),
        V::pair(
            Value::Bag([V::Int(1), V::Int(2)].into_iter().collect()),
            Value::Bag([V::Int(9)].into_iter().collect()),
        ),
    )]);
    assert_eq!(got, expect);
}

#[test]
fn smap3_annotates_with_unit_lineage() {
    // sMap3(\x.{(x.B, x)}, {r}) = {(r.B, ((), r))}
    let f = lam1("x", single(pair(snd(var("x")), var("x"))));
    let r = V::pair(V::Int(10), V::Int(77));
    let input = incrq_core::value::bag::<f64>([r.clone()]);
    let got = eval_prim(&T::SMap3(f, Box::new(lit_term(input))));
    assert_eq!(
        got,
        incrq_core::value::bag::<f64>([V::pair(V::Int(77), V::pair(V::Unit, r))])
    );
}

#[test]
fn f32_instantiation_compiles_and_answers() {
    // The core is scalar-generic; drive one benchmark end to end on f32.
    let plan = compile(&fixtures::groupby_avg::<f32>(), CompileOpts::default()).unwrap();
    let mut rng = testkit::rng(99);
    let data = testkit::int_pairs::<f32>(&mut rng, 50, 5, 100);
    let mut sources = BTreeMap::new();
    sources.insert(0usize, data);
    let state = incrq_core::runtime::init_state(&plan, &sources).unwrap();
    let answer = plan.answer_of(&state.value).unwrap();
    assert!(matches!(answer, Value::Bag(_)));
}
