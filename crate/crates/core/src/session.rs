//! Directory-replay sessions: batch files feed the incremental engine in
//! lexicographic order, one epoch per file tuple, with optional per-epoch
//! deletions, answer snapshots, a metrics CSV, and a full-recompute oracle
//! for comparison.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::data::{load_batch, write_snapshot, ColumnType};
use crate::error::{Error, Result};
use crate::eval::{evaluate, Env, EvalCtx};
use crate::monoid::Monoid;
use crate::runtime::{
    compile, ingest_batch, ingest_deletion, init_state, CheckLevel, CompileOpts, IncrementalPlan,
    State,
};
use crate::scalar::Scalar;
use crate::term::AlgebraTerm;
use crate::value::{bag_equals, Bag, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    #[default]
    Incremental,
    BatchOracle,
    /// Run both engines on identical inputs and fail on any mismatch beyond
    /// the float tolerance.
    Both,
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "incremental" => Ok(Mode::Incremental),
            "batch-oracle" => Ok(Mode::BatchOracle),
            "both" => Ok(Mode::Both),
            other => Err(Error::Session(format!("unknown mode `{other}`"))),
        }
    }
}

/// Where one source's data comes from.
#[derive(Debug, Clone, Default)]
pub struct SourceSpec {
    pub initial: Option<PathBuf>,
    pub batches: Option<PathBuf>,
    pub deletes: Option<PathBuf>,
    pub schema: Option<Vec<ColumnType>>,
}

#[derive(Debug, Clone)]
pub struct SessionConfig<F: Scalar> {
    pub term: AlgebraTerm<F>,
    pub invariant_sources: BTreeSet<usize>,
    pub sources: BTreeMap<usize, SourceSpec>,
    pub mode: Mode,
    pub float_tol: F,
    pub epsilon: Option<F>,
    pub strict_deletes: bool,
    pub out_dir: Option<PathBuf>,
    pub metrics_path: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct MetricsRow {
    pub epoch: u64,
    pub batch_size: u64,
    pub h_tuples: u64,
    pub state_size: u64,
    pub merge_pairs: u64,
    pub wall_ms: f64,
    pub mode: &'static str,
}

pub const METRICS_HEADER: &str = "epoch,batch_size,h_tuples,state_size,merge_pairs,wall_ms,mode";

impl MetricsRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{:.3},{}",
            self.epoch,
            self.batch_size,
            self.h_tuples,
            self.state_size,
            self.merge_pairs,
            self.wall_ms,
            self.mode
        )
    }
}

#[derive(Debug, Default)]
pub struct SessionReport {
    pub epochs: u64,
    pub mismatches: u64,
    pub snapshots: Vec<PathBuf>,
    pub metrics: Vec<MetricsRow>,
}

fn sorted_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_file())
        .collect();
    out.sort();
    Ok(out)
}

struct Replay<F: Scalar> {
    /// Batch files per stream source, aligned by position.
    batches: BTreeMap<usize, Vec<PathBuf>>,
    deletes: BTreeMap<usize, Vec<PathBuf>>,
    schemas: BTreeMap<usize, Vec<ColumnType>>,
    epochs: usize,
    _marker: std::marker::PhantomData<F>,
}

impl<F: Scalar> Replay<F> {
    fn load(cfg: &SessionConfig<F>) -> Result<Self> {
        let mut batches = BTreeMap::new();
        let mut deletes = BTreeMap::new();
        let mut schemas = BTreeMap::new();
        let mut epochs = 0usize;
        for (i, spec) in &cfg.sources {
            if let Some(schema) = &spec.schema {
                schemas.insert(*i, schema.clone());
            }
            if let Some(dir) = &spec.batches {
                let files = sorted_files(dir)?;
                epochs = epochs.max(files.len());
                batches.insert(*i, files);
            }
            if let Some(dir) = &spec.deletes {
                let files = sorted_files(dir)?;
                epochs = epochs.max(files.len());
                deletes.insert(*i, files);
            }
        }
        Ok(Replay { batches, deletes, schemas, epochs, _marker: Default::default() })
    }

    fn batch_at(
        &self,
        files: &BTreeMap<usize, Vec<PathBuf>>,
        epoch: usize,
    ) -> Result<BTreeMap<usize, Value<F>>> {
        let mut out = BTreeMap::new();
        for (i, list) in files {
            if let Some(path) = list.get(epoch) {
                let v = load_batch(path, self.schemas.get(i).map(|s| s.as_slice()))?;
                out.insert(*i, v);
            }
        }
        Ok(out)
    }
}

/// The cumulative (net) stream per source, for the batch oracle.
struct Cumulative<F: Scalar> {
    bags: BTreeMap<usize, Bag<F>>,
}

impl<F: Scalar> Cumulative<F> {
    fn add(&mut self, delta: &BTreeMap<usize, Value<F>>) -> Result<()> {
        for (i, v) in delta {
            self.bags.entry(*i).or_default().add_scaled(v.as_bag()?, 1);
        }
        Ok(())
    }

    fn remove(&mut self, delta: &BTreeMap<usize, Value<F>>) -> Result<()> {
        for (i, v) in delta {
            let b = self.bags.entry(*i).or_default();
            *b = b.difference(v.as_bag()?);
        }
        Ok(())
    }

    fn sources(&self, invariants: &BTreeMap<usize, Value<F>>) -> BTreeMap<usize, Value<F>> {
        let mut out: BTreeMap<usize, Value<F>> = self
            .bags
            .iter()
            .map(|(i, b)| (*i, Value::Bag(b.clone())))
            .collect();
        out.extend(invariants.clone());
        out
    }
}

fn oracle_answer<F: Scalar>(
    term: &AlgebraTerm<F>,
    sources: &BTreeMap<usize, Value<F>>,
) -> Result<(Value<F>, u64)> {
    let counted: BTreeSet<usize> = sources.keys().copied().collect();
    let ctx = EvalCtx::counting(sources, &counted);
    let v = evaluate(term, &ctx, &mut Env::new())?;
    Ok((v, ctx.tuples_read()))
}

/// Runs a configured session to completion. In `both` mode any divergence
/// between the incremental answer and the batch recomputation beyond the
/// float tolerance is an error.
pub fn run_session<F: Scalar>(cfg: &SessionConfig<F>) -> Result<SessionReport> {
    let replay = Replay::load(cfg)?;
    let opts = CompileOpts {
        invariant_sources: cfg.invariant_sources.clone(),
        epsilon: cfg.epsilon,
        checks: if cfg.strict_deletes { CheckLevel::Strict } else { CheckLevel::Lax },
    };
    let plan: Option<IncrementalPlan<F>> = if cfg.mode == Mode::BatchOracle {
        None
    } else {
        Some(compile(&cfg.term, opts)?)
    };

    // Initial bindings.
    let mut initial: BTreeMap<usize, Value<F>> = BTreeMap::new();
    for (i, spec) in &cfg.sources {
        if let Some(path) = &spec.initial {
            initial.insert(*i, load_batch(path, replay.schemas.get(i).map(|s| s.as_slice()))?);
        }
    }
    let invariants: BTreeMap<usize, Value<F>> = initial
        .iter()
        .filter(|(i, _)| cfg.invariant_sources.contains(i))
        .map(|(i, v)| (*i, v.clone()))
        .collect();
    let mut cumulative = Cumulative {
        bags: initial
            .iter()
            .filter(|(i, _)| !cfg.invariant_sources.contains(i))
            .map(|(i, v)| Ok((*i, v.as_bag()?.clone())))
            .collect::<Result<_>>()?,
    };

    let mut report = SessionReport::default();
    let mut state: Option<State<F>> = match &plan {
        Some(p) => Some(init_state(p, &initial)?),
        None => None,
    };

    let write_epoch = |report: &mut SessionReport, epoch: u64, answer: &Value<F>| -> Result<()> {
        if let Some(dir) = &cfg.out_dir {
            report.snapshots.push(write_snapshot(dir, epoch, answer)?);
        }
        Ok(())
    };

    // Epoch 0: the initial data.
    let epoch0_answer: Option<Value<F>> = match (&plan, &state) {
        (Some(p), Some(s)) => Some(p.answer_of(&s.value)?),
        _ => None,
    };
    let oracle0 = if cfg.mode != Mode::Incremental {
        let t0 = Instant::now();
        let (v, tuples) = oracle_answer(&cfg.term, &cumulative.sources(&invariants))?;
        report.metrics.push(MetricsRow {
            epoch: 0,
            batch_size: 0,
            h_tuples: tuples,
            state_size: 0,
            merge_pairs: 0,
            wall_ms: t0.elapsed().as_secs_f64() * 1e3,
            mode: "oracle",
        });
        Some(v)
    } else {
        None
    };
    if let (Some(inc), Some(orc)) = (&epoch0_answer, &oracle0) {
        if !bag_equals(inc, orc, cfg.float_tol) {
            report.mismatches += 1;
        }
    }
    match (&epoch0_answer, &oracle0) {
        (Some(a), _) => write_epoch(&mut report, 0, a)?,
        (None, Some(o)) => write_epoch(&mut report, 0, o)?,
        _ => {}
    }

    for epoch in 0..replay.epochs {
        let epoch_no = (epoch + 1) as u64;
        let inserts = replay.batch_at(&replay.batches, epoch)?;
        let deletions = replay.batch_at(&replay.deletes, epoch)?;
        cumulative.add(&inserts)?;

        let mut answer: Option<Value<F>> = None;
        if let (Some(p), Some(s)) = (&plan, state.take()) {
            let t0 = Instant::now();
            let (mut next, mut a) = ingest_batch(p, &s, &inserts)?;
            let mut wall = t0.elapsed().as_secs_f64() * 1e3;
            report.metrics.push(MetricsRow {
                epoch: epoch_no,
                batch_size: next.last.batch_size,
                h_tuples: next.last.h_tuples,
                state_size: next.last.state_size,
                merge_pairs: next.last.merge_pairs,
                wall_ms: wall,
                mode: "incremental",
            });
            if !deletions.is_empty() {
                let t1 = Instant::now();
                let (after_delete, da) = ingest_deletion(p, &next, &deletions)?;
                wall = t1.elapsed().as_secs_f64() * 1e3;
                report.metrics.push(MetricsRow {
                    epoch: epoch_no,
                    batch_size: after_delete.last.batch_size,
                    h_tuples: after_delete.last.h_tuples,
                    state_size: after_delete.last.state_size,
                    merge_pairs: after_delete.last.merge_pairs,
                    wall_ms: wall,
                    mode: "delete",
                });
                next = after_delete;
                a = da;
            }
            state = Some(next);
            answer = Some(a);
        }
        cumulative.remove(&deletions)?;

        let oracle = if cfg.mode != Mode::Incremental {
            let t0 = Instant::now();
            let (v, tuples) = oracle_answer(&cfg.term, &cumulative.sources(&invariants))?;
            let wall = t0.elapsed().as_secs_f64() * 1e3;
            report.metrics.push(MetricsRow {
                epoch: epoch_no,
                batch_size: inserts
                    .values()
                    .map(|v| v.as_bag().map(|b| b.len()).unwrap_or(0))
                    .sum(),
                h_tuples: tuples,
                state_size: 0,
                merge_pairs: 0,
                wall_ms: wall,
                mode: "oracle",
            });
            Some(v)
        } else {
            None
        };

        if let (Some(inc), Some(orc)) = (&answer, &oracle) {
            if !bag_equals(inc, orc, cfg.float_tol) {
                report.mismatches += 1;
                log::warn!("epoch {epoch_no}: incremental answer diverged from the oracle");
            }
        }
        match (&answer, &oracle) {
            (Some(a), _) => write_epoch(&mut report, epoch_no, a)?,
            (None, Some(o)) => write_epoch(&mut report, epoch_no, o)?,
            _ => {}
        }
        report.epochs = epoch_no;
    }

    if let Some(path) = &cfg.metrics_path {
        let mut text = String::from(METRICS_HEADER);
        text.push('\n');
        for row in &report.metrics {
            text.push_str(&row.to_csv());
            text.push('\n');
        }
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(path, text)?;
    }

    if cfg.mode == Mode::Both && report.mismatches > 0 {
        return Err(Error::Session(format!(
            "{} epoch(s) diverged from the batch oracle",
            report.mismatches
        )));
    }
    Ok(report)
}

/// Human-readable compilation summary: original term, homomorphic term,
/// merger monoid, answer function, lineage shape, and factoring notes.
pub fn explain<F: Scalar>(
    term: &AlgebraTerm<F>,
    invariant_sources: &BTreeSet<usize>,
) -> Result<String> {
    let opts = CompileOpts {
        invariant_sources: invariant_sources.clone(),
        epsilon: None,
        checks: CheckLevel::Lax,
    };
    let plan = compile(term, opts)?;
    let mut out = String::new();
    let _ = writeln!(out, "query:    {term}");
    let _ = writeln!(out, "original: {}", plan.query.original);
    let _ = writeln!(out, "h:        {}", plan.query.h);
    let _ = writeln!(out, "merger:   {}", plan.query.merger);
    let _ = writeln!(out, "answer:   {}", plan.query.answer);
    let _ = writeln!(out, "lineage:  {}", plan.query.lineage);
    let _ = writeln!(out, "diffuse:  {}", plan.diffuse);
    match &plan.diminish {
        Some(d) => {
            let _ = writeln!(out, "diminish: {d}");
        }
        None => {
            let _ = writeln!(out, "diminish: unavailable (deletions unsupported)");
        }
    }
    if let crate::runtime::PlanMode::Iterative { rounds, init, param } = &plan.mode {
        let _ = writeln!(out, "iterate:  {rounds} rounds, {param} <- {init}");
    }
    for note in &plan.query.notes {
        let _ = writeln!(out, "note:     {note}");
    }
    Ok(out)
}

/// A gnuplot script for a metrics file: wall time per epoch by mode.
pub fn gnuplot_script(metrics_csv: &Path) -> String {
    format!(
        "set datafile separator ','\n\
         set key outside\n\
         set xlabel 'epoch'\n\
         set ylabel 'wall ms'\n\
         plot '{0}' using 1:($7 eq 'incremental' ? $6 : 1/0) with linespoints title 'incremental', \\\n\
         \x20    '{0}' using 1:($7 eq 'oracle' ? $6 : 1/0) with linespoints title 'batch oracle'\n",
        metrics_csv.display()
    )
}

/// Convenience used by the laws and acceptance suites: runs one in-memory
/// session feeding pre-built batches, comparing against the oracle when
/// asked.
pub struct MemorySession<F: Scalar> {
    pub plan: IncrementalPlan<F>,
    pub state: State<F>,
    pub original: AlgebraTerm<F>,
    cumulative: Cumulative<F>,
    invariants: BTreeMap<usize, Value<F>>,
}

impl<F: Scalar> MemorySession<F> {
    pub fn start(
        term: &AlgebraTerm<F>,
        opts: CompileOpts<F>,
        initial: &BTreeMap<usize, Value<F>>,
    ) -> Result<Self> {
        let plan = compile(term, opts)?;
        let state = init_state(&plan, initial)?;
        let invariants = state.invariants().clone();
        let cumulative = Cumulative {
            bags: initial
                .iter()
                .filter(|(i, _)| !plan.invariant_sources.contains(i))
                .map(|(i, v)| Ok((*i, v.as_bag()?.clone())))
                .collect::<Result<_>>()?,
        };
        Ok(MemorySession { plan, state, original: term.clone(), cumulative, invariants })
    }

    pub fn answer(&self) -> Result<Value<F>> {
        self.plan.answer_of(&self.state.value)
    }

    pub fn insert(&mut self, delta: &BTreeMap<usize, Value<F>>) -> Result<Value<F>> {
        self.cumulative.add(delta)?;
        let (next, answer) = ingest_batch(&self.plan, &self.state, delta)?;
        self.state = next;
        Ok(answer)
    }

    pub fn delete(&mut self, delta: &BTreeMap<usize, Value<F>>) -> Result<Value<F>> {
        self.cumulative.remove(delta)?;
        let (next, answer) = ingest_deletion(&self.plan, &self.state, delta)?;
        self.state = next;
        Ok(answer)
    }

    /// Full recomputation on the net stream so far.
    pub fn oracle(&self) -> Result<Value<F>> {
        Ok(oracle_answer(&self.original, &self.cumulative.sources(&self.invariants))?.0)
    }

    pub fn oracle_timed(&self) -> Result<(Value<F>, f64)> {
        let t0 = Instant::now();
        let v = self.oracle()?;
        Ok((v, t0.elapsed().as_secs_f64() * 1e3))
    }
}

/// The merger monoid shapes exercised by the merge-law suites.
pub fn law_merger_shapes() -> [Monoid; 3] {
    [
        Monoid::lifted(Monoid::Union),
        Monoid::lifted(Monoid::Sum),
        Monoid::lifted(Monoid::product(
            Monoid::Box,
            Monoid::product(Monoid::Sum, Monoid::Sum),
        )),
    ]
}
