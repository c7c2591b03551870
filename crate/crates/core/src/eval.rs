//! Batch evaluation of algebra terms and expressions.
//!
//! This is the non-incremental semantics: eager, structural, and the oracle
//! every incremental result is checked against. Evaluation is pure; the only
//! bookkeeping is a counter of tuples read from counted (stream) sources,
//! which the runtime uses to assert that incremental evaluation touches only
//! the current batch.

use std::cell::Cell;
use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::monoid::{monoid_merge_n, monoid_unit, monoid_zero, to_float, MergeOpts, Monoid};
use crate::scalar::Scalar;
use crate::term::{AlgebraTerm, BinOp, Builtin, Expr, Pattern};
use crate::value::{Bag, Value};

/// Variable bindings, scoped with push/truncate.
#[derive(Debug, Clone, Default)]
pub struct Env<F: Scalar> {
    vars: Vec<(String, Value<F>)>,
}

impl<F: Scalar> Env<F> {
    pub fn new() -> Self {
        Env { vars: Vec::new() }
    }

    pub fn bind(&mut self, name: impl Into<String>, v: Value<F>) {
        self.vars.push((name.into(), v));
    }

    pub fn with(name: impl Into<String>, v: Value<F>) -> Self {
        let mut e = Env::new();
        e.bind(name, v);
        e
    }

    fn lookup(&self, name: &str) -> Option<&Value<F>> {
        self.vars.iter().rev().find(|(n, _)| n == name).map(|(_, v)| v)
    }

    fn mark(&self) -> usize {
        self.vars.len()
    }

    fn truncate(&mut self, mark: usize) {
        self.vars.truncate(mark);
    }
}

/// Source bindings plus the stream-tuple counter.
pub struct EvalCtx<'a, F: Scalar> {
    sources: &'a BTreeMap<usize, Value<F>>,
    counted: Option<&'a BTreeSet<usize>>,
    tuples_read: Cell<u64>,
}

impl<'a, F: Scalar> EvalCtx<'a, F> {
    pub fn new(sources: &'a BTreeMap<usize, Value<F>>) -> Self {
        EvalCtx { sources, counted: None, tuples_read: Cell::new(0) }
    }

    /// Counts tuples read from the given sources (the stream sources).
    pub fn counting(sources: &'a BTreeMap<usize, Value<F>>, counted: &'a BTreeSet<usize>) -> Self {
        EvalCtx { sources, counted: Some(counted), tuples_read: Cell::new(0) }
    }

    pub fn tuples_read(&self) -> u64 {
        self.tuples_read.get()
    }
}

/// Evaluates an algebra term against bound sources.
pub fn evaluate<F: Scalar>(
    term: &AlgebraTerm<F>,
    ctx: &EvalCtx<'_, F>,
    env: &mut Env<F>,
) -> Result<Value<F>> {
    match term {
        AlgebraTerm::Source(i) => {
            let v = ctx.sources.get(i).ok_or(Error::UnboundSource(*i))?;
            if ctx.counted.is_some_and(|c| c.contains(i)) {
                if let Value::Bag(b) = v {
                    ctx.tuples_read.set(ctx.tuples_read.get() + b.len());
                }
            }
            Ok(v.clone())
        }
        AlgebraTerm::Var(n) => {
            env.lookup(n).cloned().ok_or_else(|| Error::UnboundVar(n.clone()))
        }
        AlgebraTerm::Embedded(e) => eval_expr(e, ctx, env),
        AlgebraTerm::CMap(f, x) => {
            let input = evaluate(x, ctx, env)?.into_bag()?;
            let mut out = Bag::new();
            // One-output bodies skip the intermediate singleton bag.
            if let Expr::Lambda(p, body) = f {
                if let Expr::Singleton(inner) = &**body {
                    for (v, n) in input.iter() {
                        let mark = env.mark();
                        bind_pattern(p, v.clone(), env)?;
                        let e = eval_expr(inner, ctx, env);
                        env.truncate(mark);
                        out.insert(e?, n);
                    }
                    return Ok(Value::Bag(out));
                }
            }
            for (v, n) in input.iter() {
                let fb = apply_fn(f, v.clone(), ctx, env)?.into_bag()?;
                out.add_scaled(&fb, n);
            }
            Ok(Value::Bag(out))
        }
        AlgebraTerm::GroupBy(x) => {
            let input = evaluate(x, ctx, env)?.into_bag()?;
            Ok(Value::Bag(group_by_bag(&input)?))
        }
        AlgebraTerm::CoGroup(a, b) => {
            let left = evaluate(a, ctx, env)?.into_bag()?;
            let right = evaluate(b, ctx, env)?.into_bag()?;
            Ok(Value::Bag(cogroup_bags(&left, &right)?))
        }
        AlgebraTerm::Reduce(m, x) => {
            // Folding a one-output map: apply the body per element straight
            // into the fold, skipping the intermediate bag. Element order is
            // unchanged, so results are bit-identical to the unfused path.
            if let AlgebraTerm::CMap(Expr::Lambda(p, body), y) = &**x {
                if let Expr::Singleton(inner) = &**body {
                    let input = evaluate(y, ctx, env)?.into_bag()?;
                    let mut items = Vec::with_capacity(input.distinct_len());
                    for (v, n) in input.iter() {
                        let mark = env.mark();
                        bind_pattern(p, v.clone(), env)?;
                        let e = eval_expr(inner, ctx, env);
                        env.truncate(mark);
                        items.push((e?, n));
                    }
                    return reduce_items(m, items);
                }
            }
            let input = evaluate(x, ctx, env)?.into_bag()?;
            reduce_bag(m, &input)
        }
        AlgebraTerm::Repeat { param, rounds, init, body } => {
            let mut acc = evaluate(init, ctx, env)?;
            for _ in 0..*rounds {
                let mark = env.mark();
                env.bind(param.clone(), acc);
                let next = evaluate(body, ctx, env);
                env.truncate(mark);
                acc = next?;
            }
            Ok(acc)
        }
        AlgebraTerm::SMap1(f, x) => {
            let input = evaluate(x, ctx, env)?.into_bag()?;
            let mut out = Bag::new();
            for (v, n) in input.iter() {
                let (lin, a) = shaped_pair(v, "smap1")?;
                let key = lineage_key(lin, "smap1")?;
                let arg = Value::pair(key.clone(), a.clone());
                let fb = apply_fn(f, arg, ctx, env)?.into_bag()?;
                for (b, m) in fb.iter() {
                    out.insert(Value::pair(lin.clone(), b.clone()), n * m);
                }
            }
            Ok(Value::Bag(out))
        }
        AlgebraTerm::SMap2(f, x) => {
            let input = evaluate(x, ctx, env)?.into_bag()?;
            let mut out = Bag::new();
            for (v, n) in input.iter() {
                let (lin, a) = shaped_pair(v, "smap2")?;
                let key = lineage_key(lin, "smap2")?;
                let arg = Value::pair(key.clone(), a.clone());
                let fb = apply_fn(f, arg, ctx, env)?.into_bag()?;
                for (kb, m) in fb.iter() {
                    let (k2, b) = shaped_pair(kb, "smap2 function result")?;
                    out.insert(
                        Value::pair(k2.clone(), Value::pair(lin.clone(), b.clone())),
                        n * m,
                    );
                }
            }
            Ok(Value::Bag(out))
        }
        AlgebraTerm::SMap3(f, x) => {
            let input = evaluate(x, ctx, env)?.into_bag()?;
            let mut out = Bag::new();
            for (v, n) in input.iter() {
                let fb = apply_fn(f, v.clone(), ctx, env)?.into_bag()?;
                for (kb, m) in fb.iter() {
                    let (k, b) = shaped_pair(kb, "smap3 function result")?;
                    out.insert(
                        Value::pair(k.clone(), Value::pair(Value::Unit, b.clone())),
                        n * m,
                    );
                }
            }
            Ok(Value::Bag(out))
        }
        AlgebraTerm::Swap(x) => {
            let input = evaluate(x, ctx, env)?.into_bag()?;
            let mut out = Bag::new();
            for (v, n) in input.iter() {
                let (k, rest) = shaped_pair(v, "swap")?;
                let (theta, val) = shaped_pair(rest, "swap")?;
                out.insert(
                    Value::pair(Value::pair(k.clone(), theta.clone()), val.clone()),
                    n,
                );
            }
            Ok(Value::Bag(out))
        }
        AlgebraTerm::Mix(x) => {
            let input = evaluate(x, ctx, env)?.into_bag()?;
            let mut out = Bag::new();
            for (v, n) in input.iter() {
                let (k, groups) = shaped_pair(v, "mix")?;
                let (s1, s2) = shaped_pair(groups, "mix")?;
                let g1 = group_by_bag(s1.as_bag()?)?;
                let g2 = group_by_bag(s2.as_bag()?)?;
                for (p1, n1) in g1.iter() {
                    let (tx, xs) = shaped_pair(p1, "mix")?;
                    for (p2, n2) in g2.iter() {
                        let (ty, ys) = shaped_pair(p2, "mix")?;
                        let lin = Value::pair(k.clone(), Value::pair(tx.clone(), ty.clone()));
                        out.insert(
                            Value::pair(lin, Value::pair(xs.clone(), ys.clone())),
                            n * n1 * n2,
                        );
                    }
                }
            }
            Ok(Value::Bag(out))
        }
        AlgebraTerm::KMap(f, x) => {
            let input = evaluate(x, ctx, env)?.into_bag()?;
            let mut out = Bag::new();
            for (v, n) in input.iter() {
                let (theta, val) = shaped_pair(v, "kmap")?;
                let mapped = apply_fn(f, val.clone(), ctx, env)?;
                out.insert(Value::pair(theta.clone(), mapped), n);
            }
            Ok(Value::Bag(out))
        }
    }
}

fn shaped_pair<'v, F: Scalar>(
    v: &'v Value<F>,
    who: &str,
) -> Result<(&'v Value<F>, &'v Value<F>)> {
    v.as_pair()
        .map_err(|_| Error::Type(format!("{who}: expected a pair, found {}", v.render())))
}

/// The key component of a lineage: the first element of a lineage pair, or
/// the unit lineage itself.
fn lineage_key<'v, F: Scalar>(lin: &'v Value<F>, who: &str) -> Result<&'v Value<F>> {
    match lin {
        Value::Tuple(vs) if vs.len() == 2 => Ok(&vs[0]),
        Value::Unit => Ok(lin),
        other => Err(Error::Type(format!("{who}: malformed lineage {}", other.render()))),
    }
}

/// Groups a bag of pairs by first component into unique-keyed `(k, {a})`.
pub fn group_by_bag<F: Scalar>(input: &Bag<F>) -> Result<Bag<F>> {
    let mut groups: BTreeMap<Value<F>, Bag<F>> = BTreeMap::new();
    for (v, n) in input.iter() {
        let (k, a) = v.as_pair()?;
        groups.entry(k.clone()).or_default().insert(a.clone(), n);
    }
    let mut out = Bag::new();
    for (k, g) in groups {
        out.insert(Value::pair(k, Value::Bag(g)), 1);
    }
    Ok(out)
}

/// Full-outer grouping join: unique keys from both sides, each mapped to the
/// pair of its groups (one possibly empty).
pub fn cogroup_bags<F: Scalar>(left: &Bag<F>, right: &Bag<F>) -> Result<Bag<F>> {
    let mut l: BTreeMap<Value<F>, Bag<F>> = BTreeMap::new();
    let mut r: BTreeMap<Value<F>, Bag<F>> = BTreeMap::new();
    for (v, n) in left.iter() {
        let (k, a) = v.as_pair()?;
        l.entry(k.clone()).or_default().insert(a.clone(), n);
    }
    for (v, n) in right.iter() {
        let (k, b) = v.as_pair()?;
        r.entry(k.clone()).or_default().insert(b.clone(), n);
    }
    let mut keys: BTreeSet<Value<F>> = l.keys().cloned().collect();
    keys.extend(r.keys().cloned());
    let mut out = Bag::new();
    for k in keys {
        let xs = l.get(&k).cloned().unwrap_or_default();
        let ys = r.get(&k).cloned().unwrap_or_default();
        out.insert(
            Value::pair(k, Value::pair(Value::Bag(xs), Value::Bag(ys))),
            1,
        );
    }
    Ok(out)
}

/// Folds a bag with a monoid after injecting each element into the carrier;
/// the empty bag yields the monoid's zero.
pub fn reduce_bag<F: Scalar>(m: &Monoid, input: &Bag<F>) -> Result<Value<F>> {
    reduce_items(m, input.iter().map(|(v, n)| (v.clone(), n)).collect())
}

fn reduce_items<F: Scalar>(m: &Monoid, items: Vec<(Value<F>, u64)>) -> Result<Value<F>> {
    // Lifted folds group per key instead of re-joining a growing keyed bag
    // on every element. The monoids are commutative, so the grouped order
    // merges to the same value.
    if let Monoid::Lifted(inner) = m {
        let mut groups: BTreeMap<Value<F>, Value<F>> = BTreeMap::new();
        for (v, n) in items {
            let (k, a) = v.as_pair()?;
            let u = monoid_unit(inner, a.clone())?;
            let merged = match groups.remove(k) {
                None => monoid_merge_n(inner, &u, &u, n - 1, &MergeOpts::EXACT)?,
                Some(acc) => monoid_merge_n(inner, &acc, &u, n, &MergeOpts::EXACT)?,
            };
            groups.insert(k.clone(), merged);
        }
        let mut out = Bag::new();
        for (k, v) in groups {
            out.insert(Value::pair(k, v), 1);
        }
        return Ok(Value::Bag(out));
    }
    let mut acc: Option<Value<F>> = None;
    for (v, n) in items {
        let u = monoid_unit(m, v)?;
        acc = Some(match acc {
            None => monoid_merge_n(m, &u, &u, n - 1, &MergeOpts::EXACT)?,
            Some(a) => monoid_merge_n(m, &a, &u, n, &MergeOpts::EXACT)?,
        });
    }
    match acc {
        Some(v) => Ok(v),
        None => monoid_zero(m),
    }
}

/// Applies a syntactic lambda to an argument.
pub fn apply_fn<F: Scalar>(
    f: &Expr<F>,
    arg: Value<F>,
    ctx: &EvalCtx<'_, F>,
    env: &mut Env<F>,
) -> Result<Value<F>> {
    match f {
        Expr::Lambda(p, body) => {
            let mark = env.mark();
            bind_pattern(p, arg, env)?;
            let r = eval_expr(body, ctx, env);
            env.truncate(mark);
            r
        }
        other => Err(Error::Type(format!("cannot apply non-function {other}"))),
    }
}

fn bind_pattern<F: Scalar>(p: &Pattern, v: Value<F>, env: &mut Env<F>) -> Result<()> {
    match p {
        Pattern::Var(n) => {
            env.bind(n.clone(), v);
            Ok(())
        }
        Pattern::Wildcard => Ok(()),
        Pattern::Tuple(ps) => match v {
            Value::Tuple(vs) if vs.len() == ps.len() => {
                for (p, v) in ps.iter().zip(vs) {
                    bind_pattern(p, v, env)?;
                }
                Ok(())
            }
            other => Err(Error::Type(format!(
                "pattern {p} does not match {}",
                other.render()
            ))),
        },
    }
}

/// Call-by-value expression evaluation.
pub fn eval_expr<F: Scalar>(
    e: &Expr<F>,
    ctx: &EvalCtx<'_, F>,
    env: &mut Env<F>,
) -> Result<Value<F>> {
    match e {
        Expr::Var(n) => env.lookup(n).cloned().ok_or_else(|| Error::UnboundVar(n.clone())),
        Expr::Lit(v) => Ok(v.clone()),
        Expr::Tuple(es) => {
            let mut vs = Vec::with_capacity(es.len());
            for e in es {
                vs.push(eval_expr(e, ctx, env)?);
            }
            Ok(Value::Tuple(vs))
        }
        Expr::Proj(i, e) => Ok(eval_expr(e, ctx, env)?.proj(*i)?.clone()),
        Expr::Bin(op, a, b) => eval_bin(*op, a, b, ctx, env),
        Expr::Not(e) => Ok(Value::Bool(!eval_expr(e, ctx, env)?.as_bool()?)),
        Expr::If(c, t, f) => {
            if eval_expr(c, ctx, env)?.as_bool()? {
                eval_expr(t, ctx, env)
            } else {
                eval_expr(f, ctx, env)
            }
        }
        Expr::Singleton(e) => Ok(Value::Bag(Bag::singleton(eval_expr(e, ctx, env)?))),
        Expr::EmptyBag => Ok(Value::Bag(Bag::new())),
        Expr::Union(a, b) => {
            let x = eval_expr(a, ctx, env)?.into_bag()?;
            let y = eval_expr(b, ctx, env)?.into_bag()?;
            Ok(Value::Bag(x.union(&y)))
        }
        Expr::Lambda(..) => Err(Error::Type("a function is not a value".to_string())),
        Expr::Apply(f, a) => {
            let arg = eval_expr(a, ctx, env)?;
            apply_fn(f, arg, ctx, env)
        }
        Expr::Alg(t) => evaluate(t, ctx, env),
        Expr::Call(Builtin::Closest, args) => {
            let [cents, point] = two_args(args, "closest")?;
            let cents = eval_expr(cents, ctx, env)?.into_bag()?;
            let point = eval_expr(point, ctx, env)?;
            closest(&cents, &point)
        }
        Expr::Call(Builtin::Elem, args) => {
            let [inner] = one_arg(args, "elem")?;
            let b = eval_expr(inner, ctx, env)?.into_bag()?;
            if b.len() != 1 {
                return Err(Error::MalformedState(format!(
                    "elem of a bag with {} elements",
                    b.len()
                )));
            }
            let v = b.iter().next().expect("nonempty").0.clone();
            Ok(v)
        }
    }
}

fn one_arg<'e, F: Scalar>(args: &'e [Expr<F>], who: &str) -> Result<[&'e Expr<F>; 1]> {
    match args {
        [a] => Ok([a]),
        _ => Err(Error::Type(format!("{who} takes 1 argument, got {}", args.len()))),
    }
}

fn two_args<'e, F: Scalar>(args: &'e [Expr<F>], who: &str) -> Result<[&'e Expr<F>; 2]> {
    match args {
        [a, b] => Ok([a, b]),
        _ => Err(Error::Type(format!("{who} takes 2 arguments, got {}", args.len()))),
    }
}

fn eval_bin<F: Scalar>(
    op: BinOp,
    a: &Expr<F>,
    b: &Expr<F>,
    ctx: &EvalCtx<'_, F>,
    env: &mut Env<F>,
) -> Result<Value<F>> {
    // Boolean connectives short-circuit.
    if op == BinOp::And {
        return if !eval_expr(a, ctx, env)?.as_bool()? {
            Ok(Value::Bool(false))
        } else {
            eval_expr(b, ctx, env)
        };
    }
    if op == BinOp::Or {
        return if eval_expr(a, ctx, env)?.as_bool()? {
            Ok(Value::Bool(true))
        } else {
            eval_expr(b, ctx, env)
        };
    }
    let x = eval_expr(a, ctx, env)?;
    let y = eval_expr(b, ctx, env)?;
    match op {
        BinOp::Add => match (&x, &y) {
            (Value::Int(p), Value::Int(q)) => {
                p.checked_add(*q).map(Value::Int).ok_or(Error::Overflow)
            }
            _ => Ok(Value::Float(to_float(&x)? + to_float(&y)?)),
        },
        BinOp::Sub => match (&x, &y) {
            (Value::Int(p), Value::Int(q)) => {
                p.checked_sub(*q).map(Value::Int).ok_or(Error::Overflow)
            }
            _ => Ok(Value::Float(to_float(&x)? - to_float(&y)?)),
        },
        BinOp::Mul => match (&x, &y) {
            (Value::Int(p), Value::Int(q)) => {
                p.checked_mul(*q).map(Value::Int).ok_or(Error::Overflow)
            }
            _ => Ok(Value::Float(to_float(&x)? * to_float(&y)?)),
        },
        // Division is true division: it always yields a float.
        BinOp::Div => {
            let d = to_float(&y)?;
            if d == F::zero() {
                return Err(Error::DivByZero);
            }
            Ok(Value::Float(to_float(&x)? / d))
        }
        BinOp::Eq => Ok(Value::Bool(x == y)),
        BinOp::Ne => Ok(Value::Bool(x != y)),
        BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => {
            let ord = compare(&x, &y)?;
            Ok(Value::Bool(match op {
                BinOp::Lt => ord.is_lt(),
                BinOp::Le => ord.is_le(),
                BinOp::Gt => ord.is_gt(),
                _ => ord.is_ge(),
            }))
        }
        BinOp::And | BinOp::Or => unreachable!("handled above"),
    }
}

fn compare<F: Scalar>(x: &Value<F>, y: &Value<F>) -> Result<std::cmp::Ordering> {
    use crate::scalar::canonical_cmp;
    match (x, y) {
        (Value::Int(_), Value::Float(_)) | (Value::Float(_), Value::Int(_)) => {
            Ok(canonical_cmp(to_float(x)?, to_float(y)?))
        }
        (a, b) if a.type_name() == b.type_name() => Ok(a.cmp(b)),
        (a, b) => Err(Error::Type(format!(
            "cannot order {} against {}",
            a.type_name(),
            b.type_name()
        ))),
    }
}

fn closest<F: Scalar>(cents: &Bag<F>, point: &Value<F>) -> Result<Value<F>> {
    let mut best: Option<(F, &Value<F>)> = None;
    for (c, _) in cents.iter() {
        let d = dist2(c, point)?;
        let better = match &best {
            None => true,
            Some((bd, bc)) => d < *bd || (d == *bd && c < *bc),
        };
        if better {
            best = Some((d, c));
        }
    }
    best.map(|(_, c)| c.clone())
        .ok_or_else(|| Error::Type("closest over an empty bag".to_string()))
}

fn dist2<F: Scalar>(a: &Value<F>, b: &Value<F>) -> Result<F> {
    match (a, b) {
        (Value::Tuple(xs), Value::Tuple(ys)) if xs.len() == ys.len() => {
            let mut acc = F::zero();
            for (x, y) in xs.iter().zip(ys) {
                let d = to_float(x)? - to_float(y)?;
                acc = acc + d * d;
            }
            Ok(acc)
        }
        _ => {
            let d = to_float(a)? - to_float(b)?;
            Ok(d * d)
        }
    }
}
