//! The incremental engine: plan compilation, state lifecycle, batch and
//! deletion ingestion, and the approximate iterative loop.
//!
//! A plan owns the compiled triple (h, merger, answer) plus the derived
//! diffusion and diminisher merges. A state is the materialized h-result,
//! replaced wholesale on every ingest:
//!
//! ```text
//! state <- state (x) h(delta)          insertions
//! state <- state (/) h(delta)          deletions
//! ```
//!
//! Iterative plans run the inner diffusion loop per batch: the state is held
//! fixed while a delta-state expands against it, then merges in once.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::eval::{apply_fn, evaluate, Env, EvalCtx};
use crate::infer::MonoidEnv;
use crate::lineage::{compile_query, CompiledQuery};
use crate::monoid::{
    diffusion, diminisher, monoid_merge, monoid_zero, MergeForm, MergeOpts, Monoid,
};
use crate::normalize::normalize;
use crate::scalar::Scalar;
use crate::term::AlgebraTerm;
use crate::value::{Bag, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CheckLevel {
    /// Trust the caller: no shadow multisets, no subset verification.
    #[default]
    Lax,
    /// Keep shadow multisets per stream source and verify deletion batches
    /// are subsets of the stream so far. Memory-costly; meant for tests.
    Strict,
}

#[derive(Debug, Clone)]
pub enum PlanMode<F: Scalar> {
    OneShot,
    Iterative { rounds: usize, param: String, init: AlgebraTerm<F> },
}

#[derive(Debug, Clone, Default)]
pub struct CompileOpts<F: Scalar> {
    /// Sources bound once at initialization and never rebound.
    pub invariant_sources: BTreeSet<usize>,
    /// Approximate key equality for float-keyed plans.
    pub epsilon: Option<F>,
    pub checks: CheckLevel,
}

#[derive(Debug, Clone)]
pub struct IncrementalPlan<F: Scalar> {
    pub query: CompiledQuery<F>,
    pub mode: PlanMode<F>,
    pub stream_sources: BTreeSet<usize>,
    pub invariant_sources: BTreeSet<usize>,
    pub epsilon: Option<F>,
    pub checks: CheckLevel,
    pub diffuse: MergeForm,
    /// Absent when the merger has no diminisher; deletions then error.
    pub diminish: Option<MergeForm>,
}

/// Per-ingest measurements.
#[derive(Debug, Clone, Copy, Default)]
pub struct EpochMetrics {
    pub batch_size: u64,
    /// Stream tuples read during this ingest; equals the batch size for
    /// one-shot plans (iterative plans re-read the batch once per round plus
    /// once for the init term), never the cumulative stream.
    pub h_tuples: u64,
    pub state_size: u64,
    /// Lineage keys matched during the state merge.
    pub merge_pairs: u64,
}

#[derive(Debug, Clone)]
pub struct State<F: Scalar> {
    pub value: Value<F>,
    pub epoch: u64,
    pub last: EpochMetrics,
    invariants: BTreeMap<usize, Value<F>>,
    shadow: Option<BTreeMap<usize, Bag<F>>>,
}

impl<F: Scalar> State<F> {
    pub fn invariants(&self) -> &BTreeMap<usize, Value<F>> {
        &self.invariants
    }
}

/// Lineage-key sets of the delta state after each inner iteration.
pub type IterTrace<F> = Vec<BTreeSet<Value<F>>>;

/// Compiles a query into an incremental plan. Iteration compiles through its
/// step with the loop variable held invariant.
pub fn compile<F: Scalar>(
    q: &AlgebraTerm<F>,
    opts: CompileOpts<F>,
) -> Result<IncrementalPlan<F>> {
    let sources = q.sources();
    let stream_sources: BTreeSet<usize> =
        sources.difference(&opts.invariant_sources).copied().collect();
    let mut env = MonoidEnv::streams(stream_sources.iter().copied());
    for s in &opts.invariant_sources {
        env.bind_source(*s, Monoid::Box);
    }

    let (normalized, mode) = match q {
        AlgebraTerm::Repeat { param, rounds, init, body } => {
            if *rounds == 0 {
                return Err(Error::Session("iterative plans need at least one round".into()));
            }
            env.bind_var(param.clone(), Monoid::Box);
            (
                normalize(body)?,
                PlanMode::Iterative {
                    rounds: *rounds,
                    param: param.clone(),
                    init: (**init).clone(),
                },
            )
        }
        other => (normalize(other)?, PlanMode::OneShot),
    };
    let query = compile_query(&normalized, &env)?;
    let diffuse = diffusion(&query.merger);
    let diminish = diminisher(&query.merger).ok();
    Ok(IncrementalPlan {
        query,
        mode,
        stream_sources,
        invariant_sources: opts.invariant_sources,
        epsilon: opts.epsilon,
        checks: opts.checks,
        diffuse,
        diminish,
    })
}

impl<F: Scalar> IncrementalPlan<F> {
    fn merge_opts(&self) -> MergeOpts<F> {
        MergeOpts { epsilon: self.epsilon }
    }

    /// The answer for a given state value.
    pub fn answer_of(&self, state_value: &Value<F>) -> Result<Value<F>> {
        let empty = BTreeMap::new();
        let ctx = EvalCtx::new(&empty);
        apply_fn(&self.query.answer, state_value.clone(), &ctx, &mut Env::new())
    }
}

/// Builds the initial state: the merger's zero when every stream is empty,
/// otherwise h evaluated over the initial data (a full iteration for
/// iterative plans).
pub fn init_state<F: Scalar>(
    plan: &IncrementalPlan<F>,
    initial: &BTreeMap<usize, Value<F>>,
) -> Result<State<F>> {
    let mut invariants = BTreeMap::new();
    for s in &plan.invariant_sources {
        let v = initial
            .get(s)
            .cloned()
            .ok_or(Error::UnboundSource(*s))?;
        invariants.insert(*s, v);
    }
    let mut streams = BTreeMap::new();
    for s in &plan.stream_sources {
        let v = initial.get(s).cloned().unwrap_or(Value::Bag(Bag::new()));
        streams.insert(*s, v);
    }
    let all_empty = streams.values().all(|v| matches!(v, Value::Bag(b) if b.is_empty()));

    let value = if all_empty {
        monoid_zero(&plan.query.merger)?
    } else {
        let mut sources = streams.clone();
        sources.extend(invariants.clone());
        match &plan.mode {
            PlanMode::OneShot => {
                let ctx = EvalCtx::new(&sources);
                evaluate(&plan.query.h, &ctx, &mut Env::new())?
            }
            PlanMode::Iterative { rounds, param, init } => {
                // Bootstrap: a full batch-mode iteration seeds the state.
                let ctx = EvalCtx::new(&sources);
                let mut x = evaluate(init, &ctx, &mut Env::new())?;
                let mut t = monoid_zero(&plan.query.merger)?;
                for _ in 0..*rounds {
                    let mut env = Env::with(param.clone(), x.clone());
                    t = evaluate(&plan.query.h, &ctx, &mut env)?;
                    x = plan.answer_of(&t)?;
                }
                t
            }
        }
    };
    check_state(plan, &value)?;
    let shadow = match plan.checks {
        CheckLevel::Strict => {
            let mut m = BTreeMap::new();
            for (s, v) in &streams {
                m.insert(*s, v.as_bag()?.clone());
            }
            Some(m)
        }
        CheckLevel::Lax => None,
    };
    Ok(State {
        value,
        epoch: 0,
        last: EpochMetrics::default(),
        invariants,
        shadow,
    })
}

/// Binds a delta against the plan's stream sources; missing sources are empty
/// batches, bindings for invariant sources are rejected.
fn delta_sources<F: Scalar>(
    plan: &IncrementalPlan<F>,
    state: &State<F>,
    delta: &BTreeMap<usize, Value<F>>,
) -> Result<(BTreeMap<usize, Value<F>>, u64)> {
    for s in delta.keys() {
        if plan.invariant_sources.contains(s) {
            return Err(Error::Session(format!("source {s} is invariant and cannot take batches")));
        }
        if !plan.stream_sources.contains(s) {
            return Err(Error::UnboundSource(*s));
        }
    }
    let mut sources = BTreeMap::new();
    let mut batch_size = 0u64;
    for s in &plan.stream_sources {
        let v = delta.get(s).cloned().unwrap_or(Value::Bag(Bag::new()));
        batch_size += v.as_bag()?.len();
        sources.insert(*s, v);
    }
    sources.extend(state.invariants.clone());
    Ok((sources, batch_size))
}

/// Ingests one insertion batch: `state <- state (x) h(delta)`. Iterative
/// plans run the diffusion loop instead.
pub fn ingest_batch<F: Scalar>(
    plan: &IncrementalPlan<F>,
    state: &State<F>,
    delta: &BTreeMap<usize, Value<F>>,
) -> Result<(State<F>, Value<F>)> {
    if matches!(plan.mode, PlanMode::Iterative { .. }) {
        let (state, answer, _) = run_iterative(plan, state, delta)?;
        return Ok((state, answer));
    }
    let (sources, batch_size) = delta_sources(plan, state, delta)?;
    let ctx = EvalCtx::counting(&sources, &plan.stream_sources);
    let hd = evaluate(&plan.query.h, &ctx, &mut Env::new())?;
    let merge_pairs = matched_keys(&state.value, &hd);
    let value = monoid_merge(&plan.query.merger, &state.value, &hd, &plan.merge_opts())
        .map_err(|e| match e {
            Error::BoxConflict { left, right } => Error::Session(format!(
                "one-to-many join violated by batch: {left} vs {right}"
            )),
            e => e,
        })?;
    check_state(plan, &value)?;
    let mut next = State {
        value,
        epoch: state.epoch + 1,
        last: EpochMetrics {
            batch_size,
            h_tuples: ctx.tuples_read(),
            state_size: 0,
            merge_pairs,
        },
        invariants: state.invariants.clone(),
        shadow: state.shadow.clone(),
    };
    next.last.state_size = state_size(&next.value);
    if let Some(shadow) = &mut next.shadow {
        for (s, v) in delta {
            shadow.entry(*s).or_default().add_scaled(v.as_bag()?, 1);
        }
    }
    let answer = plan.answer_of(&next.value)?;
    Ok((next, answer))
}

/// Ingests one deletion batch: `state <- state (/) h(delta)` with the
/// diminisher of the merger. The caller guarantees the deletions are a
/// subset of the stream so far; strict mode verifies it.
pub fn ingest_deletion<F: Scalar>(
    plan: &IncrementalPlan<F>,
    state: &State<F>,
    delta: &BTreeMap<usize, Value<F>>,
) -> Result<(State<F>, Value<F>)> {
    let diminish = plan
        .diminish
        .as_ref()
        .ok_or_else(|| Error::NoDiminisher(plan.query.merger.to_string()))?;
    let (sources, batch_size) = delta_sources(plan, state, delta)?;
    if let Some(shadow) = &state.shadow {
        for (s, v) in delta {
            let have = shadow.get(s).cloned().unwrap_or_default();
            if !v.as_bag()?.subset_of(&have) {
                return Err(Error::DeletionSubset(*s));
            }
        }
    }
    let ctx = EvalCtx::counting(&sources, &plan.stream_sources);
    let hd = evaluate(&plan.query.h, &ctx, &mut Env::new())?;
    let merge_pairs = matched_keys(&state.value, &hd);
    let value = diminish.apply(&state.value, &hd, &plan.merge_opts())?;
    check_state(plan, &value)?;
    let mut next = State {
        value,
        epoch: state.epoch + 1,
        last: EpochMetrics {
            batch_size,
            h_tuples: ctx.tuples_read(),
            state_size: 0,
            merge_pairs,
        },
        invariants: state.invariants.clone(),
        shadow: state.shadow.clone(),
    };
    next.last.state_size = state_size(&next.value);
    if let Some(shadow) = &mut next.shadow {
        for (s, v) in delta {
            let have = shadow.entry(*s).or_default();
            *have = have.difference(v.as_bag()?);
        }
    }
    let answer = plan.answer_of(&next.value)?;
    Ok((next, answer))
}

/// Runs the approximate iterative loop for one batch:
///
/// ```text
/// dx <- g(delta)
/// repeat rounds times:
///     dT <- state (x^) h(dx, delta)      (diffusion: right-outer merge)
///     dx <- a(dT)
/// state <- state (x) dT
/// ```
///
/// The state is held fixed through the inner loop. Returns the per-iteration
/// lineage-key trace alongside the new state and answer.
pub fn run_iterative<F: Scalar>(
    plan: &IncrementalPlan<F>,
    state: &State<F>,
    delta: &BTreeMap<usize, Value<F>>,
) -> Result<(State<F>, Value<F>, IterTrace<F>)> {
    let PlanMode::Iterative { rounds, param, init } = &plan.mode else {
        return Err(Error::Session("plan is not iterative".into()));
    };
    let (sources, batch_size) = delta_sources(plan, state, delta)?;
    let opts = plan.merge_opts();

    let ctx = EvalCtx::counting(&sources, &plan.stream_sources);
    let mut dx = evaluate(init, &ctx, &mut Env::new())?;
    let mut dt = monoid_zero(&plan.query.merger)?;
    let mut trace: IterTrace<F> = Vec::with_capacity(*rounds);
    for round in 0..*rounds {
        if round > 0 {
            dx = plan.answer_of(&dt)?;
        }
        let mut env = Env::with(param.clone(), dx.clone());
        let hd = evaluate(&plan.query.h, &ctx, &mut env)?;
        dt = plan.diffuse.apply(&state.value, &hd, &opts)?;
        trace.push(lineage_keys(&dt));
    }
    let merge_pairs = matched_keys(&state.value, &dt);
    let value = monoid_merge(&plan.query.merger, &state.value, &dt, &opts)?;
    check_state(plan, &value)?;
    let mut next = State {
        value,
        epoch: state.epoch + 1,
        last: EpochMetrics {
            batch_size,
            h_tuples: ctx.tuples_read(),
            state_size: 0,
            merge_pairs,
        },
        invariants: state.invariants.clone(),
        shadow: state.shadow.clone(),
    };
    next.last.state_size = state_size(&next.value);
    if let Some(shadow) = &mut next.shadow {
        for (s, v) in delta {
            shadow.entry(*s).or_default().add_scaled(v.as_bag()?, 1);
        }
    }
    let answer = plan.answer_of(&next.value)?;
    Ok((next, answer, trace))
}

fn state_size<F: Scalar>(v: &Value<F>) -> u64 {
    match v {
        Value::Bag(b) => b.len(),
        _ => 1,
    }
}

fn lineage_keys<F: Scalar>(v: &Value<F>) -> BTreeSet<Value<F>> {
    let mut out = BTreeSet::new();
    if let Value::Bag(b) = v {
        for (e, _) in b.iter() {
            if let Ok((k, _)) = e.as_pair() {
                out.insert(k.clone());
            }
        }
    }
    out
}

fn matched_keys<F: Scalar>(a: &Value<F>, b: &Value<F>) -> u64 {
    let ka = lineage_keys(a);
    let kb = lineage_keys(b);
    ka.intersection(&kb).count() as u64
}

/// States of lifted mergers are keyed bags: every lineage occurs exactly
/// once.
fn check_state<F: Scalar>(plan: &IncrementalPlan<F>, value: &Value<F>) -> Result<()> {
    if !matches!(plan.query.merger, Monoid::Lifted(_)) {
        return Ok(());
    }
    let b = value.as_bag()?;
    let mut seen = BTreeSet::new();
    for (e, n) in b.iter() {
        let (k, _) = e.as_pair()?;
        if n != 1 || !seen.insert(k.clone()) {
            return Err(Error::MalformedState(format!(
                "duplicate lineage key {}",
                k.render()
            )));
        }
    }
    Ok(())
}
