//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line.
//!
//! Run with `cargo test --test acceptance -- --nocapture` to see the lines.
//!
//! Criterion 6 checks the diffusion property `T(x)(T(x^)dT) = T(x)(T(x)dT)`
//! literally, over unconstrained random values. The property does not hold
//! in general: it fails exactly when the state holds a key the delta lacks,
//! because the right side then merges that entry with itself. The test
//! records this defect instead of constraining the generator; the restricted
//! guarantee that does hold (key coverage plus agreement on delta keys) is
//! proven in the incremental law suite.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use incrq_core::compare::{centroid_linf, normalized_rank_l1, points_of, top_k_overlap};
use incrq_core::eval::{apply_fn, evaluate, Env, EvalCtx};
use incrq_core::fixtures;
use incrq_core::gen;
use incrq_core::monoid::{diffusion, diminisher, monoid_merge, MergeOpts, Monoid};
use incrq_core::runtime::{compile, init_state, run_iterative, CheckLevel, CompileOpts};
use incrq_core::session::{law_merger_shapes, MemorySession};
use incrq_core::term::AlgebraTerm;
use incrq_core::testkit;
use incrq_core::value::{bag_equals, Bag, Value};

type V = Value<f64>;
type T = AlgebraTerm<f64>;

const EXACT: MergeOpts<f64> = MergeOpts::EXACT;

fn verdict(criterion: u32, pass: bool, detail: &str) -> bool {
    let tag = if pass { "PASS" } else { "FAIL" };
    println!("{tag}: criterion {criterion} — {detail}");
    pass
}

fn one(i: usize, v: V) -> BTreeMap<usize, V> {
    let mut m = BTreeMap::new();
    m.insert(i, v);
    m
}

fn pairs_value(rng: &mut testkit::TestRng, n: usize) -> V {
    incrq_core::value::bag(
        gen::pairs(rng, n)
            .into_iter()
            .map(|(k, v)| V::pair(V::Int(k), V::Int(v))),
    )
}

fn join_value(rng: &mut testkit::TestRng, n: usize, offset: i64) -> (V, V) {
    let (l, r) = gen::join_pairs(rng, n, n, offset);
    let to_bag = |rows: Vec<(i64, i64)>| {
        incrq_core::value::bag(
            rows.into_iter().map(|(a, b)| V::pair(V::Int(a), V::Int(b))),
        )
    };
    (to_bag(l), to_bag(r))
}

fn squares_value(rng: &mut testkit::TestRng, n: usize) -> V {
    incrq_core::value::bag(
        gen::squares::<f64>(rng, n)
            .into_iter()
            .map(|(x, y)| V::Tuple(vec![V::Float(x), V::Float(y)])),
    )
}

fn edges_value(edges: &[(i64, i64)]) -> V {
    incrq_core::value::bag(gen::weight_edges::<f64>(edges).into_iter().map(|(s, d, w)| {
        V::Tuple(vec![V::Int(s), V::Int(d), V::Float(w)])
    }))
}

fn eval_term(term: &T, sources: &BTreeMap<usize, V>, bind: Option<(&str, V)>) -> V {
    let ctx = EvalCtx::new(sources);
    let mut env = Env::new();
    if let Some((n, v)) = bind {
        env.bind(n, v);
    }
    evaluate(term, &ctx, &mut env).expect("evaluation")
}

#[test]
fn criterion_01_groupby_avg_oracle_equivalence() {
    let t0 = Instant::now();
    let original = fixtures::groupby_avg::<f64>();
    let mut rng = testkit::rng(101);
    let initial = pairs_value(&mut rng, 10_000);
    let mut session = MemorySession::start(
        &original,
        CompileOpts::default(),
        &one(0, initial),
    )
    .unwrap();
    let mut ok = bag_equals(&session.answer().unwrap(), &session.oracle().unwrap(), 1e-9);
    for _ in 0..9 {
        let batch = pairs_value(&mut rng, 1_000);
        let answer = session.insert(&one(0, batch)).unwrap();
        let oracle = session.oracle().unwrap();
        ok &= bag_equals(&answer, &oracle, 1e-9);
        // Sums and counts are integers: the state equals an exact h
        // recomputation on the cumulative stream.
        ok &= session.state.last.h_tuples == session.state.last.batch_size;
    }
    let pass = verdict(
        1,
        ok,
        &format!(
            "groupBy-avg incremental = oracle for 10 epochs (10k + 9x1k) in {:.1}s",
            t0.elapsed().as_secs_f64()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_02_join_groupby_avg_oracle_equivalence() {
    let t0 = Instant::now();
    let original = fixtures::join_groupby_avg::<f64>();
    let mut rng = testkit::rng(102);
    let (l0, r0) = join_value(&mut rng, 2_000, 0);
    let mut init = one(0, l0);
    init.insert(1, r0);
    let mut session =
        MemorySession::start(&original, CompileOpts::default(), &init).unwrap();
    let mut ok = bag_equals(&session.answer().unwrap(), &session.oracle().unwrap(), 1e-9);
    for b in 0..9i64 {
        let (l, r) = join_value(&mut rng, 200, 2_000 + 200 * b);
        let mut delta = one(0, l);
        delta.insert(1, r);
        // A violated one-to-many assumption would surface as an error here.
        let answer = session.insert(&delta).unwrap();
        ok &= bag_equals(&answer, &session.oracle().unwrap(), 1e-9);
    }
    let pass = verdict(
        2,
        ok,
        &format!(
            "join-groupBy-avg incremental = oracle, no invariance conflicts, in {:.1}s",
            t0.elapsed().as_secs_f64()
        ),
    );
    assert!(pass);
}

struct Benchmark {
    name: &'static str,
    plan: incrq_core::runtime::IncrementalPlan<f64>,
    original: T,
    bind: Option<(String, V)>,
    /// Split-respecting data generator: (full, part1, part2) source maps.
    gen: Box<dyn Fn(&mut testkit::TestRng) -> (BTreeMap<usize, V>, BTreeMap<usize, V>, BTreeMap<usize, V>)>,
}

fn benchmarks() -> Vec<Benchmark> {
    let mut out = Vec::new();
    out.push(Benchmark {
        name: "groupby-avg",
        plan: compile(&fixtures::groupby_avg::<f64>(), CompileOpts::default()).unwrap(),
        original: fixtures::groupby_avg::<f64>(),
        bind: None,
        gen: Box::new(|rng| {
            let data = testkit::int_pairs::<f64>(rng, 300, 40, 500);
            let (a, b) = testkit::split_elements(rng, &data);
            (one(0, data), one(0, a), one(0, b))
        }),
    });
    out.push(Benchmark {
        name: "join-groupby-avg",
        plan: compile(&fixtures::join_groupby_avg::<f64>(), CompileOpts::default()).unwrap(),
        original: fixtures::join_groupby_avg::<f64>(),
        bind: None,
        gen: Box::new(|rng| {
            let (l, r) = testkit::join_clusters::<f64>(rng, 80, 0, 4);
            let ((l1, r1), (l2, r2)) = testkit::split_join_clusters(rng, &l, &r);
            let mk = |l: V, r: V| {
                let mut m = one(0, l);
                m.insert(1, r);
                m
            };
            (mk(l, r), mk(l1, r1), mk(l2, r2))
        }),
    });
    let kfx = fixtures::fixture::<f64>("kmeans", 10).unwrap();
    let kplan = compile(
        &kfx.term,
        CompileOpts { invariant_sources: kfx.invariant_sources.clone(), ..Default::default() },
    )
    .unwrap();
    let T::Repeat { body: kbody, param: kparam, .. } = fixtures::kmeans::<f64>(10) else {
        panic!()
    };
    let cents = fixtures::kmeans_default_centroids::<f64>();
    let kcents = cents.clone();
    out.push(Benchmark {
        name: "kmeans-step",
        plan: kplan,
        original: *kbody,
        bind: Some((kparam, cents.clone())),
        gen: Box::new(move |rng| {
            let data = testkit::float_points::<f64>(rng, 250);
            let (a, b) = testkit::split_elements(rng, &data);
            let mk = |v: V| {
                let mut m = one(0, v);
                m.insert(1, kcents.clone());
                m
            };
            (mk(data), mk(a), mk(b))
        }),
    });
    let pplan = compile(&fixtures::pagerank::<f64>(10), CompileOpts::default()).unwrap();
    let T::Repeat { body: pbody, param: pparam, init: pinit, .. } =
        fixtures::pagerank::<f64>(10)
    else {
        panic!()
    };
    // A fixed dyadic rank assignment for the step's loop variable.
    let mut prng = testkit::rng(1040);
    let fixed_edges = testkit::weighted_edges::<f64>(&mut prng, 40, 80);
    let ranks = eval_term(&pinit, &one(0, fixed_edges), None);
    out.push(Benchmark {
        name: "pagerank-step",
        plan: pplan,
        original: *pbody,
        bind: Some((pparam, ranks)),
        gen: Box::new(|rng| {
            let data = testkit::weighted_edges::<f64>(rng, 40, 80);
            let (a, b) = testkit::split_elements(rng, &data);
            (one(0, data), one(0, a), one(0, b))
        }),
    });
    out
}

#[test]
fn criterion_03_homomorphism_property() {
    let t0 = Instant::now();
    let mut ok = true;
    for bench in benchmarks() {
        for seed in 0..100u64 {
            let mut rng = testkit::rng(103_000 + seed);
            let (full, p1, p2) = (bench.gen)(&mut rng);
            let bind = bench.bind.as_ref().map(|(n, v)| (n.as_str(), v.clone()));
            let whole = eval_term(&bench.plan.query.h, &full, bind.clone());
            let a = eval_term(&bench.plan.query.h, &p1, bind.clone());
            let b = eval_term(&bench.plan.query.h, &p2, bind);
            let merged = monoid_merge(&bench.plan.query.merger, &a, &b, &EXACT).unwrap();
            if whole != merged {
                ok = false;
                eprintln!("homomorphism broke for {} at seed {seed}", bench.name);
            }
        }
    }
    let pass = verdict(
        3,
        ok,
        &format!(
            "h(S u dS) = h(S) (x) h(dS) exactly, 100 splits x 4 benchmarks, in {:.1}s",
            t0.elapsed().as_secs_f64()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_04_answer_property() {
    let t0 = Instant::now();
    let mut ok = true;
    for bench in benchmarks() {
        for seed in 0..100u64 {
            let mut rng = testkit::rng(104_000 + seed);
            let (full, _, _) = (bench.gen)(&mut rng);
            let bind = bench.bind.as_ref().map(|(n, v)| (n.as_str(), v.clone()));
            let state = eval_term(&bench.plan.query.h, &full, bind.clone());
            let empty = BTreeMap::new();
            let ctx = EvalCtx::new(&empty);
            let answered =
                apply_fn(&bench.plan.query.answer, state, &ctx, &mut Env::new()).unwrap();
            let direct = eval_term(&bench.original, &full, bind);
            if !bag_equals(&answered, &direct, 1e-12) {
                ok = false;
                eprintln!("answer law broke for {} at seed {seed}", bench.name);
            }
        }
    }
    let pass = verdict(
        4,
        ok,
        &format!(
            "a(h(S)) = q(S) at 1e-12, 100 inputs x 4 benchmarks, in {:.1}s",
            t0.elapsed().as_secs_f64()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_05_algebra_identities() {
    use incrq_core::term::build::*;
    let t0 = Instant::now();
    let mut ok = true;
    let unnest: T = cmap(
        lam2(
            "k",
            "s",
            alg(cmap(lam1("v", single(pair(var("k"), var("v")))), embedded(var("s")))),
        ),
        group_by(cmap(identity_fn(), source(0))),
    );
    for seed in 0..200u64 {
        let mut rng = testkit::rng(105_000 + seed);
        let x = testkit::int_pairs::<f64>(&mut rng, 60, 10, 40);
        let y = testkit::int_pairs::<f64>(&mut rng, 60, 10, 40);

        // Unnesting a groupBy returns the input bag.
        ok &= eval_term(&unnest, &one(0, x.clone()), None) == x;

        // Both coGroup inputs rebuild from the result.
        let mut sources = one(0, x.clone());
        sources.insert(1, y.clone());
        let cg: T = cogroup(cmap(identity_fn(), source(0)), cmap(identity_fn(), source(1)));
        let grouped = eval_term(&cg, &sources, None);
        let rebuild = |side: usize| -> V {
            let mut out = Bag::new();
            for (e, _) in grouped.as_bag().unwrap().iter() {
                let (k, both) = e.as_pair().unwrap();
                for (v, n) in both.proj(side).unwrap().as_bag().unwrap().iter() {
                    out.insert(V::pair(k.clone(), v.clone()), n);
                }
            }
            Value::Bag(out)
        };
        ok &= rebuild(0) == x && rebuild(1) == y;

        // coGroup with one empty input is the groupBy lift.
        let mut with_empty = one(0, x.clone());
        with_empty.insert(1, Value::Bag(Bag::new()));
        let got = eval_term(&cg, &with_empty, None);
        let grouped_x = eval_term(&group_by(cmap(identity_fn(), source(0))), &one(0, x), None);
        let mut lifted = Bag::new();
        for (e, n) in grouped_x.as_bag().unwrap().iter() {
            let (k, s) = e.as_pair().unwrap();
            lifted.insert(V::pair(k.clone(), V::pair(s.clone(), Value::Bag(Bag::new()))), n);
        }
        ok &= got == Value::Bag(lifted);
    }
    let pass = verdict(
        5,
        ok,
        &format!(
            "unnest, coGroup reconstruction, and empty-side lift on 200 bags in {:.1}s",
            t0.elapsed().as_secs_f64()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_06_diffusion_law() {
    let t0 = Instant::now();
    let mut failures = 0usize;
    let mut cases = 0usize;
    let mut example = None;
    for m in law_merger_shapes() {
        let d = diffusion(&m);
        for seed in 0..500u64 {
            let mut rng = testkit::rng(106_000 + seed);
            let t: V = testkit::carrier_value(&mut rng, &m);
            let dt: V = testkit::carrier_value(&mut rng, &m);
            cases += 1;
            let lhs = monoid_merge(&m, &t, &d.apply(&t, &dt, &EXACT).unwrap(), &EXACT).unwrap();
            let rhs_inner = monoid_merge(&m, &t, &dt, &EXACT).unwrap();
            let rhs = monoid_merge(&m, &t, &rhs_inner, &EXACT).unwrap();
            if lhs != rhs {
                failures += 1;
                if example.is_none() {
                    example = Some(format!("{m}: T={t}, dT={dt}: {lhs} vs {rhs}"));
                }
            }
        }
    }
    let ok = failures == 0;
    verdict(
        6,
        ok,
        &format!(
            "T(x)(T(x^)dT) = T(x)(T(x)dT): {failures}/{cases} random cases violate the stated \
             property in {:.1}s — it fails exactly when T has a key dT lacks (the right side \
             then merges that entry with itself); see the decisions ledger",
            t0.elapsed().as_secs_f64()
        ),
    );
    if let Some(e) = example {
        println!("      first counterexample: {e}");
    }
    assert!(ok, "the diffusion property as stated does not hold on unconstrained values");
}

#[test]
fn criterion_07_deletion_laws() {
    let t0 = Instant::now();
    let mut ok = true;
    // Retraction law on reachable-style values.
    for m in law_merger_shapes() {
        let d = diminisher(&m).unwrap();
        for seed in 0..500u64 {
            let mut rng = testkit::rng(107_000 + seed);
            let x: V = testkit::carrier_value(&mut rng, &m);
            let y: V = testkit::carrier_value(&mut rng, &m);
            let merged = monoid_merge(&m, &x, &y, &EXACT).unwrap();
            if d.apply(&merged, &y, &EXACT).unwrap() != x {
                ok = false;
            }
        }
    }
    // End to end: f(S - dS') = f(S) (/) f(dS').
    let gb = fixtures::groupby_avg::<f64>();
    let plan = compile(&gb, CompileOpts::default()).unwrap();
    for seed in 0..10u64 {
        let mut rng = testkit::rng(107_600 + seed);
        let data = testkit::int_pairs::<f64>(&mut rng, 400, 25, 200);
        let mut del = Bag::new();
        for (e, n) in data.as_bag().unwrap().iter() {
            for _ in 0..n {
                if rand::Rng::gen_bool(&mut rng, 0.3) {
                    del.insert(e.clone(), 1);
                }
            }
        }
        let state = init_state(&plan, &one(0, data.clone())).unwrap();
        let (after, answer) =
            incrq_core::runtime::ingest_deletion(&plan, &state, &one(0, Value::Bag(del.clone())))
                .unwrap();
        let net = Value::Bag(data.as_bag().unwrap().difference(&del));
        let direct = init_state(&plan, &one(0, net.clone())).unwrap();
        ok &= after.value == direct.value;
        ok &= answer == eval_term(&gb, &one(0, net), None);
    }
    // Join benchmark: deletions retract whole join-key clusters.
    let jq = fixtures::join_groupby_avg::<f64>();
    let jplan = compile(&jq, CompileOpts::default()).unwrap();
    for seed in 0..10u64 {
        let mut rng = testkit::rng(107_800 + seed);
        let (l, r) = testkit::join_clusters::<f64>(&mut rng, 60, 0, 4);
        let mut dl = Bag::new();
        let mut dr = Bag::new();
        let mut kept: BTreeSet<V> = BTreeSet::new();
        for (e, n) in l.as_bag().unwrap().iter() {
            if rand::Rng::gen_bool(&mut rng, 0.4) {
                dl.insert(e.clone(), n);
            } else {
                kept.insert(e.proj(1).unwrap().clone());
            }
        }
        for (e, n) in r.as_bag().unwrap().iter() {
            if !kept.contains(e.proj(0).unwrap()) {
                dr.insert(e.clone(), n);
            }
        }
        let mut init = one(0, l.clone());
        init.insert(1, r.clone());
        let state = init_state(&jplan, &init).unwrap();
        let mut delta = one(0, Value::Bag(dl.clone()));
        delta.insert(1, Value::Bag(dr.clone()));
        let (_, answer) = incrq_core::runtime::ingest_deletion(&jplan, &state, &delta).unwrap();
        let mut net = one(0, Value::Bag(l.as_bag().unwrap().difference(&dl)));
        net.insert(1, Value::Bag(r.as_bag().unwrap().difference(&dr)));
        ok &= answer == eval_term(&jq, &net, None);
    }
    let pass = verdict(
        7,
        ok,
        &format!(
            "(X(x)Y)(/)Y = X on 1500 cases and end-to-end deletions match net recomputation \
             in {:.1}s",
            t0.elapsed().as_secs_f64()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_08_kmeans() {
    let t0 = Instant::now();
    let fx = fixtures::fixture::<f64>("kmeans", 10).unwrap();
    let mut rng = testkit::rng(108);

    // Batch mode: 10k four-square points, 10 iterations.
    let initial = squares_value(&mut rng, 10_000);
    let mut sources = one(0, initial.clone());
    sources.insert(1, fixtures::kmeans_default_centroids::<f64>());
    let batch_result = eval_term(&fx.term, &sources, None);
    let expected = incrq_core::value::bag::<f64>(
        [(3.0, 3.0), (3.0, 7.0), (7.0, 3.0), (7.0, 7.0)]
            .into_iter()
            .map(|(x, y)| V::Tuple(vec![V::Float(x), V::Float(y)])),
    );
    let batch_dist = centroid_linf(&batch_result, &expected).unwrap();
    let mut ok = batch_dist <= 0.2;

    // Incremental mode with approximate float keys.
    let mut session = MemorySession::start(&fx.term, fx.compile_opts(CheckLevel::Lax), &sources)
        .unwrap();
    let mut answer = session.answer().unwrap();
    for _ in 0..9 {
        let batch = squares_value(&mut rng, 1_000);
        answer = session.insert(&one(0, batch)).unwrap();
    }
    let oracle = session.oracle().unwrap();
    let inc_dist = centroid_linf(&answer, &oracle).unwrap();
    ok &= inc_dist <= 0.1;
    ok &= points_of(&answer).unwrap().len() == 4;

    let pass = verdict(
        8,
        ok,
        &format!(
            "k-means batch L-inf {batch_dist:.3} (<= 0.2) to the square centers; incremental \
             L-inf {inc_dist:.4} (<= 0.1) to batch recomputation in {:.1}s",
            t0.elapsed().as_secs_f64()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_09_pagerank() {
    let t0 = Instant::now();
    // Pinned from the seeded oracle run at this scale (measured ~0.012,
    // leaving four-fold headroom for seed drift).
    const L1_THRESHOLD: f64 = 0.05;

    let fx = fixtures::fixture::<f64>("pagerank", 10).unwrap();
    let mut rng = gen::rng(109);
    let base = gen::rmat(&mut rng, 1_000, 10_000, Default::default(), true).unwrap();
    let plan = compile(&fx.term, fx.compile_opts(CheckLevel::Lax)).unwrap();
    let mut state = init_state(&plan, &one(0, edges_value(&base))).unwrap();

    // Adjacency of the cumulative graph, for the reachability oracle.
    let mut adjacency: BTreeMap<i64, BTreeSet<i64>> = BTreeMap::new();
    for (s, d) in &base {
        adjacency.entry(*s).or_default().insert(*d);
    }
    let mut cumulative = base.clone();
    let mut node_count = 1_000i64;
    let mut bfs_ok = true;
    let mut last_answer = plan.answer_of(&state.value).unwrap();
    for _ in 0..9 {
        let inc = gen::rmat_increment(&mut rng, node_count, 100, 200, true);
        node_count += 100;
        for (s, d) in &inc {
            adjacency.entry(*s).or_default().insert(*d);
        }
        cumulative.extend(inc.iter().copied());

        let (next, answer, trace) =
            run_iterative(&plan, &state, &one(0, edges_value(&inc))).unwrap();
        state = next;
        last_answer = answer;

        // Affected nodes after i iterations stay inside the i-hop
        // out-neighborhood of the increment-touched nodes.
        let mut frontier: BTreeSet<i64> = inc
            .iter()
            .flat_map(|(s, d)| [*s, *d])
            .collect();
        for keys in &trace {
            // One hop.
            let mut next_frontier = frontier.clone();
            for n in &frontier {
                if let Some(out) = adjacency.get(n) {
                    next_frontier.extend(out.iter().copied());
                }
            }
            frontier = next_frontier;
            let affected: BTreeSet<i64> = keys
                .iter()
                .filter_map(|k| match k.proj(0) {
                    Ok(Value::Int(m)) => Some(*m),
                    _ => None,
                })
                .collect();
            if !affected.is_subset(&frontier) {
                bfs_ok = false;
            }
        }
    }

    // Batch recomputation on the cumulative graph.
    let oracle = eval_term(&fx.term, &one(0, edges_value(&cumulative)), None);
    let l1 = normalized_rank_l1(&last_answer, &oracle).unwrap();
    let overlap = top_k_overlap(&last_answer, &oracle, 20).unwrap();
    let ok = bfs_ok && l1 <= L1_THRESHOLD;
    let pass = verdict(
        9,
        ok,
        &format!(
            "PageRank normalized-rank L1 {l1:.5} (<= {L1_THRESHOLD}), top-20 overlap \
             {overlap}/20 (reported), affected nodes inside the i-hop neighborhood: {bfs_ok}, \
             in {:.1}s",
            t0.elapsed().as_secs_f64()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_10_incremental_work_trend() {
    let t0 = Instant::now();
    // State:batch ratio 300:1 (the criterion requires at least 100:1).
    let mut rng = testkit::rng(110);
    let original = fixtures::groupby_avg::<f64>();
    let initial = pairs_value(&mut rng, 300_000);
    let mut session =
        MemorySession::start(&original, CompileOpts::default(), &one(0, initial)).unwrap();
    let mut work_exact = true;
    let mut inc_walls = Vec::new();
    let mut oracle_walls = Vec::new();
    for epoch in 0..9 {
        let batch = pairs_value(&mut rng, 1_000);
        let t = Instant::now();
        session.insert(&one(0, batch)).unwrap();
        let wall = t.elapsed().as_secs_f64() * 1e3;
        work_exact &= session.state.last.h_tuples == session.state.last.batch_size;
        let (_, owall) = session.oracle_timed().unwrap();
        if epoch >= 1 {
            inc_walls.push(wall);
            oracle_walls.push(owall);
        }
    }
    let median = |xs: &mut Vec<f64>| {
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        xs[xs.len() / 2]
    };
    let med_inc = median(&mut inc_walls);
    let med_oracle = median(&mut oracle_walls);
    let speed_ok = med_inc <= med_oracle / 5.0;
    let ok = work_exact && speed_ok;
    let pass = verdict(
        10,
        ok,
        &format!(
            "h tuples = |batch| exactly every epoch: {work_exact}; median incremental \
             {med_inc:.1} ms <= 1/5 median oracle {med_oracle:.1} ms: {speed_ok} (ratio \
             {:.1}x at 300:1) in {:.1}s",
            med_oracle / med_inc,
            t0.elapsed().as_secs_f64()
        ),
    );
    assert!(pass);
}
