//! incrq: compile batch bag-algebra queries into incremental stream programs
//! and replay batch directories through them.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use incrq_core::compare::{centroid_linf, normalized_rank_l1, top_k_overlap};
use incrq_core::data::{parse_schema, ColumnType};
use incrq_core::dsl::parse_plan;
use incrq_core::fixtures::{fixture, Fixture, FIXTURE_NAMES};
use incrq_core::gen::{generate_dataset, DatasetKind};
use incrq_core::session::{
    explain, gnuplot_script, run_session, MemorySession, MetricsRow, Mode, SessionConfig,
    SourceSpec, METRICS_HEADER,
};
use incrq_core::term::AlgebraTerm;
use incrq_core::value::Value;
use incrq_core::{gen, runtime::CheckLevel};

#[derive(Parser)]
#[command(name = "incrq", version, about = "Incremental query workbench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Replay batch directories through a compiled plan.
    Run(RunArgs),
    /// Print the compiled triple (h, merger, answer) for a plan.
    Explain(ExplainArgs),
    /// Generate seeded datasets.
    Generate(GenerateArgs),
    /// Run a named benchmark end to end and report timings.
    Bench(BenchArgs),
}

#[derive(Args)]
struct PlanSource {
    /// Plan file in the parenthesized prefix syntax.
    #[arg(long, conflicts_with = "fixture")]
    plan: Option<PathBuf>,
    /// Built-in benchmark query.
    #[arg(long, value_parser = FIXTURE_NAMES)]
    fixture: Option<String>,
    /// Iteration count for iterative plans.
    #[arg(long, default_value_t = 10)]
    iterations: usize,
    /// Sources bound once at start and never rebound (plan files only;
    /// fixtures declare their own).
    #[arg(long = "invariant")]
    invariants: Vec<usize>,
}

struct LoadedPlan {
    term: AlgebraTerm<f64>,
    invariant_sources: BTreeSet<usize>,
    schemas: BTreeMap<usize, Vec<ColumnType>>,
    epsilon: Option<f64>,
}

impl PlanSource {
    fn load(&self) -> Result<LoadedPlan> {
        if let Some(name) = &self.fixture {
            let fx: Fixture<f64> = fixture(name, self.iterations)
                .ok_or_else(|| anyhow!("unknown fixture `{name}`"))?;
            return Ok(LoadedPlan {
                term: fx.term,
                invariant_sources: fx.invariant_sources,
                schemas: fx.schemas.into_iter().collect(),
                epsilon: fx.epsilon,
            });
        }
        let path = self
            .plan
            .as_ref()
            .ok_or_else(|| anyhow!("one of --plan or --fixture is required"))?;
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))?;
        Ok(LoadedPlan {
            term: parse_plan(&text)?,
            invariant_sources: self.invariants.iter().copied().collect(),
            schemas: BTreeMap::new(),
            epsilon: None,
        })
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    plan: PlanSource,
    /// Initial data per source, as N=PATH.
    #[arg(long = "source")]
    sources: Vec<String>,
    /// Batch replay directory per source, as N=DIR.
    #[arg(long = "batches")]
    batches: Vec<String>,
    /// Deletion replay directory per source, as N=DIR.
    #[arg(long = "deletes")]
    deletes: Vec<String>,
    /// CSV column types per source, as N=SPEC (e.g. 0=int,int).
    #[arg(long = "schema")]
    schemas: Vec<String>,
    #[arg(long, default_value = "incremental")]
    mode: Mode,
    /// Tolerance for float comparisons against the oracle.
    #[arg(long, default_value_t = 1e-9)]
    float_tol: f64,
    /// Approximate key equality threshold for float-keyed plans.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Accepted for reproducibility bookkeeping; replay itself is
    /// deterministic.
    #[arg(long)]
    seed: Option<u64>,
    /// Snapshot output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Metrics CSV path.
    #[arg(long)]
    metrics: Option<PathBuf>,
    /// Verify deletion batches against shadow multisets.
    #[arg(long)]
    strict_deletes: bool,
}

#[derive(Args)]
struct ExplainArgs {
    #[command(flatten)]
    plan: PlanSource,
}

#[derive(Args)]
struct GenerateArgs {
    /// pairs | join-pairs | squares | rmat
    #[arg(long)]
    kind: String,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 10_000)]
    initial: usize,
    #[arg(long, default_value_t = 9)]
    batches: usize,
    #[arg(long, default_value_t = 1_000)]
    batch_size: usize,
    #[arg(long, default_value_t = 1_000)]
    nodes: i64,
    #[arg(long, default_value_t = 10_000)]
    edges: usize,
    #[arg(long, default_value_t = 100)]
    increment_nodes: i64,
    #[arg(long, default_value_t = 200)]
    increment_edges: usize,
    /// Drop duplicate edges during graph generation.
    #[arg(long)]
    dedup: bool,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_parser = FIXTURE_NAMES)]
    fixture: String,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    iterations: usize,
}

fn parse_kv(list: &[String], what: &str) -> Result<BTreeMap<usize, String>> {
    let mut out = BTreeMap::new();
    for item in list {
        let (n, v) = item
            .split_once('=')
            .ok_or_else(|| anyhow!("--{what} expects N=VALUE, got `{item}`"))?;
        out.insert(n.parse::<usize>().context("source index")?, v.to_string());
    }
    Ok(out)
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter("INCRQ_LOG")).init();
    if let Err(e) = run() {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run() -> Result<()> {
    match Cli::parse().command {
        Command::Run(args) => cmd_run(args),
        Command::Explain(args) => {
            let plan = args.plan.load()?;
            print!("{}", explain(&plan.term, &plan.invariant_sources)?);
            Ok(())
        }
        Command::Generate(args) => cmd_generate(args),
        Command::Bench(args) => cmd_bench(args),
    }
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let plan = args.plan.load()?;
    let initial = parse_kv(&args.sources, "source")?;
    let batches = parse_kv(&args.batches, "batches")?;
    let deletes = parse_kv(&args.deletes, "deletes")?;
    let mut schemas = plan.schemas.clone();
    for (i, spec) in parse_kv(&args.schemas, "schema")? {
        schemas.insert(i, parse_schema(&spec)?);
    }

    let mut sources: BTreeMap<usize, SourceSpec> = BTreeMap::new();
    let ids: BTreeSet<usize> = initial
        .keys()
        .chain(batches.keys())
        .chain(deletes.keys())
        .copied()
        .collect();
    for i in ids {
        sources.insert(
            i,
            SourceSpec {
                initial: initial.get(&i).map(PathBuf::from),
                batches: batches.get(&i).map(PathBuf::from),
                deletes: deletes.get(&i).map(PathBuf::from),
                schema: schemas.get(&i).cloned(),
            },
        );
    }
    if let Some(seed) = args.seed {
        log::debug!("seed {seed} recorded; directory replay is already deterministic");
    }
    let cfg = SessionConfig {
        term: plan.term,
        invariant_sources: plan.invariant_sources,
        sources,
        mode: args.mode,
        float_tol: args.float_tol,
        epsilon: args.epsilon.or(plan.epsilon),
        strict_deletes: args.strict_deletes,
        out_dir: args.out,
        metrics_path: args.metrics,
    };
    let report = run_session(&cfg)?;
    println!(
        "{} epoch(s), {} snapshot(s), {} mismatch(es)",
        report.epochs,
        report.snapshots.len(),
        report.mismatches
    );
    Ok(())
}

fn cmd_generate(args: GenerateArgs) -> Result<()> {
    let kind = match args.kind.as_str() {
        "pairs" => DatasetKind::Pairs {
            initial: args.initial,
            batches: args.batches,
            batch_size: args.batch_size,
        },
        "join-pairs" => DatasetKind::JoinPairs {
            initial: args.initial,
            batches: args.batches,
            batch_size: args.batch_size,
        },
        "squares" => DatasetKind::Squares {
            initial: args.initial,
            batches: args.batches,
            batch_size: args.batch_size,
        },
        "rmat" => DatasetKind::Rmat {
            nodes: args.nodes,
            edges: args.edges,
            increments: args.batches,
            increment_nodes: args.increment_nodes,
            increment_edges: args.increment_edges,
            dedup: args.dedup,
        },
        other => bail!("unknown dataset kind `{other}`"),
    };
    let files = generate_dataset(&kind, args.seed, &args.out)?;
    println!("wrote {} file(s) under {}", files.len(), args.out.display());
    Ok(())
}

fn median(xs: &mut [f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    xs[xs.len() / 2]
}

fn cmd_bench(args: BenchArgs) -> Result<()> {
    let fx: Fixture<f64> = fixture(&args.fixture, args.iterations)
        .ok_or_else(|| anyhow!("unknown fixture"))?;
    fs::create_dir_all(&args.out)?;
    let mut rng = gen::rng(args.seed);
    let mut rows: Vec<MetricsRow> = Vec::new();

    // Build the initial data and batches in memory, per fixture.
    let (initial, batches): (BTreeMap<usize, Value<f64>>, Vec<BTreeMap<usize, Value<f64>>>) =
        match args.fixture.as_str() {
            "groupby-avg" => {
                let init = pairs_value(&mut rng, 10_000);
                let batches = (0..9).map(|_| one(0, pairs_value(&mut rng, 1_000))).collect();
                (one(0, init), batches)
            }
            "join-groupby-avg" => {
                let (l, r) = join_value(&mut rng, 2_000, 0);
                let mut init = one(0, l);
                init.insert(1, r);
                let batches = (0..9)
                    .map(|b| {
                        let (l, r) = join_value(&mut rng, 200, 2_000 + 200 * b);
                        let mut m = one(0, l);
                        m.insert(1, r);
                        m
                    })
                    .collect();
                (init, batches)
            }
            "kmeans" => {
                let mut init = one(0, squares_value(&mut rng, 10_000));
                init.insert(1, incrq_core::fixtures::kmeans_default_centroids());
                let batches = (0..9).map(|_| one(0, squares_value(&mut rng, 1_000))).collect();
                (init, batches)
            }
            "pagerank" => {
                let base = gen::rmat(&mut rng, 1_000, 10_000, Default::default(), true)?;
                let init = one(0, edges_value(&base));
                let mut node_count = 1_000i64;
                let mut batches = Vec::new();
                for _ in 0..9 {
                    let inc = gen::rmat_increment(&mut rng, node_count, 100, 200, true);
                    node_count += 100;
                    batches.push(one(0, edges_value(&inc)));
                }
                (init, batches)
            }
            other => bail!("unknown fixture `{other}`"),
        };

    let mut session =
        MemorySession::start(&fx.term, fx.compile_opts(CheckLevel::Lax), &initial)?;
    let exact = matches!(args.fixture.as_str(), "groupby-avg" | "join-groupby-avg");
    let mut inc_walls = Vec::new();
    let mut oracle_walls = Vec::new();
    let mut last_answer = session.answer()?;
    for (i, batch) in batches.iter().enumerate() {
        let t0 = std::time::Instant::now();
        last_answer = session.insert(batch)?;
        let wall = t0.elapsed().as_secs_f64() * 1e3;
        inc_walls.push(wall);
        rows.push(MetricsRow {
            epoch: (i + 1) as u64,
            batch_size: session.state.last.batch_size,
            h_tuples: session.state.last.h_tuples,
            state_size: session.state.last.state_size,
            merge_pairs: session.state.last.merge_pairs,
            wall_ms: wall,
            mode: "incremental",
        });
        let (oracle, owall) = session.oracle_timed()?;
        oracle_walls.push(owall);
        rows.push(MetricsRow {
            epoch: (i + 1) as u64,
            batch_size: session.state.last.batch_size,
            h_tuples: 0,
            state_size: 0,
            merge_pairs: 0,
            wall_ms: owall,
            mode: "oracle",
        });
        if exact && !incrq_core::value::bag_equals(&last_answer, &oracle, 1e-9) {
            bail!("epoch {}: incremental diverged from the oracle", i + 1);
        }
    }

    let metrics_path = args.out.join("metrics.csv");
    let mut text = String::from(METRICS_HEADER);
    text.push('\n');
    for r in &rows {
        text.push_str(&r.to_csv());
        text.push('\n');
    }
    fs::write(&metrics_path, text)?;
    fs::write(args.out.join("plot.gnu"), gnuplot_script(&metrics_path))?;

    let med_inc = median(&mut inc_walls.clone());
    let med_oracle = median(&mut oracle_walls.clone());
    println!("fixture:            {}", args.fixture);
    println!("median incremental: {med_inc:.2} ms/epoch");
    println!("median oracle:      {med_oracle:.2} ms/epoch");
    if med_inc > 0.0 {
        println!("speedup:            {:.1}x", med_oracle / med_inc);
    }
    let final_oracle = session.oracle()?;
    match args.fixture.as_str() {
        "kmeans" => {
            let d = centroid_linf(&last_answer, &final_oracle)?;
            println!("final centroid L-inf vs batch recomputation: {d:.4}");
        }
        "pagerank" => {
            let l1 = normalized_rank_l1(&last_answer, &final_oracle)?;
            let overlap = top_k_overlap(&last_answer, &final_oracle, 20)?;
            println!("final normalized rank L1 vs batch recomputation: {l1:.5}");
            println!("top-20 overlap: {overlap}/20");
        }
        _ => println!("exact fixture: all epochs matched the oracle"),
    }
    Ok(())
}

fn one(i: usize, v: Value<f64>) -> BTreeMap<usize, Value<f64>> {
    let mut m = BTreeMap::new();
    m.insert(i, v);
    m
}

fn pairs_value(rng: &mut gen::TestRng, n: usize) -> Value<f64> {
    let rows = gen::pairs(rng, n);
    incrq_core::value::bag(rows.into_iter().map(|(k, v)| {
        Value::pair(Value::Int(k), Value::Int(v))
    }))
}

fn join_value(
    rng: &mut gen::TestRng,
    n: usize,
    offset: usize,
) -> (Value<f64>, Value<f64>) {
    let (l, r) = gen::join_pairs(rng, n, n, offset as i64);
    let to_bag = |rows: Vec<(i64, i64)>| {
        incrq_core::value::bag(
            rows.into_iter().map(|(a, b)| Value::pair(Value::Int(a), Value::Int(b))),
        )
    };
    (to_bag(l), to_bag(r))
}

fn squares_value(rng: &mut gen::TestRng, n: usize) -> Value<f64> {
    let rows = gen::squares::<f64>(rng, n);
    incrq_core::value::bag(rows.into_iter().map(|(x, y)| {
        Value::Tuple(vec![Value::Float(x), Value::Float(y)])
    }))
}

fn edges_value(edges: &[(i64, i64)]) -> Value<f64> {
    let weighted = gen::weight_edges::<f64>(edges);
    incrq_core::value::bag(weighted.into_iter().map(|(s, d, w)| {
        Value::Tuple(vec![Value::Int(s), Value::Int(d), Value::Float(w)])
    }))
}
