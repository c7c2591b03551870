//! Merge monoids and derived merge forms.
//!
//! The fixed monoid set: bag union, numeric sum and product, boolean and/or,
//! the invariance monoid (merging two unequal values is an error), lifted
//! monoids (a full outer join of keyed bags that merges same-key values with
//! the inner monoid), and binary products. Diffusion and diminisher forms are
//! derived from a monoid; they are merge operations but not monoids
//! themselves.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::value::{Bag, Value};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Monoid {
    /// Additive bag union.
    Union,
    /// Numeric addition; 64-bit integers fail loudly on overflow.
    Sum,
    /// Numeric multiplication.
    Prod,
    And,
    Or,
    /// The invariance monoid: merging succeeds only on equal values.
    Box,
    /// Full outer join of keyed bags, merging matched values with the inner monoid.
    Lifted(std::boxed::Box<Monoid>),
    /// Componentwise merge of pairs.
    Product(std::boxed::Box<Monoid>, std::boxed::Box<Monoid>),
}

impl Monoid {
    pub fn lifted(inner: Monoid) -> Monoid {
        Monoid::Lifted(std::boxed::Box::new(inner))
    }

    pub fn product(l: Monoid, r: Monoid) -> Monoid {
        Monoid::Product(std::boxed::Box::new(l), std::boxed::Box::new(r))
    }

    pub fn is_commutative_primitive(&self) -> bool {
        matches!(self, Monoid::Union | Monoid::Sum | Monoid::Prod | Monoid::And | Monoid::Or)
    }
}

impl fmt::Display for Monoid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Monoid::Union => write!(f, "union"),
            Monoid::Sum => write!(f, "+"),
            Monoid::Prod => write!(f, "*"),
            Monoid::And => write!(f, "and"),
            Monoid::Or => write!(f, "or"),
            Monoid::Box => write!(f, "box"),
            Monoid::Lifted(m) => write!(f, "lift({m})"),
            Monoid::Product(l, r) => write!(f, "({l} x {r})"),
        }
    }
}

/// Options threaded through merges. `epsilon` enables approximate key
/// equality for float-keyed plans; it relaxes lifted-key matching and the
/// invariance check, nothing else.
#[derive(Debug, Clone, Copy, Default)]
pub struct MergeOpts<F: Scalar> {
    pub epsilon: Option<F>,
}

impl<F: Scalar> MergeOpts<F> {
    pub const EXACT: MergeOpts<F> = MergeOpts { epsilon: None };
}

/// The identity of a monoid. The invariance monoid has none.
pub fn monoid_zero<F: Scalar>(m: &Monoid) -> Result<Value<F>> {
    Ok(match m {
        Monoid::Union | Monoid::Lifted(_) => Value::Bag(Bag::new()),
        Monoid::Sum => Value::Int(0),
        Monoid::Prod => Value::Int(1),
        Monoid::And => Value::Bool(true),
        Monoid::Or => Value::Bool(false),
        Monoid::Box => return Err(Error::NoZero),
        Monoid::Product(l, r) => Value::pair(monoid_zero(l)?, monoid_zero(r)?),
    })
}

/// Merges two values of the monoid's carrier.
pub fn monoid_merge<F: Scalar>(
    m: &Monoid,
    a: &Value<F>,
    b: &Value<F>,
    opts: &MergeOpts<F>,
) -> Result<Value<F>> {
    match m {
        Monoid::Union => Ok(Value::Bag(a.as_bag()?.union(b.as_bag()?))),
        Monoid::Sum => num_add(a, b),
        Monoid::Prod => num_mul(a, b),
        Monoid::And => Ok(Value::Bool(a.as_bool()? && b.as_bool()?)),
        Monoid::Or => Ok(Value::Bool(a.as_bool()? || b.as_bool()?)),
        Monoid::Box => box_merge(a, b, opts),
        Monoid::Product(l, r) => {
            let (a1, a2) = a.as_pair()?;
            let (b1, b2) = b.as_pair()?;
            Ok(Value::pair(monoid_merge(l, a1, b1, opts)?, monoid_merge(r, a2, b2, opts)?))
        }
        Monoid::Lifted(inner) => {
            let form = MergeForm::Monoid((**inner).clone());
            Ok(Value::Bag(outer_join(
                a.as_bag()?,
                b.as_bag()?,
                &form,
                JoinKind::Full,
                opts,
            )?))
        }
    }
}

/// Injects a bag element into the monoid's carrier before folding:
/// union wraps the element in a singleton bag, a lifted monoid wraps a
/// key-value pair in a singleton keyed bag with the value injected into the
/// inner monoid, and scalar monoids take the element as is. This is what
/// makes `reduce(union, X) = X` and `reduce(lift(union), X) = groupBy(X)`.
pub fn monoid_unit<F: Scalar>(m: &Monoid, v: Value<F>) -> Result<Value<F>> {
    Ok(match m {
        Monoid::Union => Value::Bag(Bag::singleton(v)),
        Monoid::Sum | Monoid::Prod | Monoid::And | Monoid::Or | Monoid::Box => v,
        Monoid::Product(l, r) => match v {
            Value::Tuple(vs) if vs.len() == 2 => {
                let mut it = vs.into_iter();
                let a = it.next().expect("pair");
                let b = it.next().expect("pair");
                Value::pair(monoid_unit(l, a)?, monoid_unit(r, b)?)
            }
            other => {
                return Err(Error::Type(format!(
                    "product carrier expects a pair, found {}",
                    other.render()
                )))
            }
        },
        Monoid::Lifted(inner) => match v {
            Value::Tuple(vs) if vs.len() == 2 => {
                let mut it = vs.into_iter();
                let k = it.next().expect("pair");
                let a = it.next().expect("pair");
                Value::Bag(Bag::singleton(Value::pair(k, monoid_unit(inner, a)?)))
            }
            other => {
                return Err(Error::Type(format!(
                    "lifted carrier expects key-value pairs, found {}",
                    other.render()
                )))
            }
        },
    })
}

/// Merges `v` into `acc` `n` times; used when folding counted bags.
pub fn monoid_merge_n<F: Scalar>(
    m: &Monoid,
    acc: &Value<F>,
    v: &Value<F>,
    n: u64,
    opts: &MergeOpts<F>,
) -> Result<Value<F>> {
    if n == 0 {
        return Ok(acc.clone());
    }
    match m {
        Monoid::Sum => {
            let scaled = num_scale(v, n)?;
            num_add(acc, &scaled)
        }
        Monoid::Union => {
            let mut out = acc.as_bag()?.clone();
            out.add_scaled(v.as_bag()?, n);
            Ok(Value::Bag(out))
        }
        Monoid::And | Monoid::Or | Monoid::Box => monoid_merge(m, acc, v, opts),
        Monoid::Product(l, r) => {
            let (a1, a2) = acc.as_pair()?;
            let (v1, v2) = v.as_pair()?;
            Ok(Value::pair(
                monoid_merge_n(l, a1, v1, n, opts)?,
                monoid_merge_n(r, a2, v2, n, opts)?,
            ))
        }
        _ => {
            let mut out = acc.clone();
            for _ in 0..n {
                out = monoid_merge(m, &out, v, opts)?;
            }
            Ok(out)
        }
    }
}

fn box_merge<F: Scalar>(a: &Value<F>, b: &Value<F>, opts: &MergeOpts<F>) -> Result<Value<F>> {
    let equal = match opts.epsilon {
        Some(eps) => eps_eq(a, b, eps),
        None => a == b,
    };
    if equal {
        // Under approximate equality the newer value wins so float keys track
        // the latest estimate.
        Ok(if opts.epsilon.is_some() { b.clone() } else { a.clone() })
    } else {
        Err(Error::BoxConflict { left: a.render(), right: b.render() })
    }
}

fn num_add<F: Scalar>(a: &Value<F>, b: &Value<F>) -> Result<Value<F>> {
    match (a, b) {
        (Value::Int(x), Value::Int(y)) => x.checked_add(*y).map(Value::Int).ok_or(Error::Overflow),
        _ => Ok(Value::Float(to_float(a)? + to_float(b)?)),
    }
}

fn num_mul<F: Scalar>(a: &Value<F>, b: &Value<F>) -> Result<Value<F>> {
    match (a, b) {
        (Value::Int(x), Value::Int(y)) => x.checked_mul(*y).map(Value::Int).ok_or(Error::Overflow),
        _ => Ok(Value::Float(to_float(a)? * to_float(b)?)),
    }
}

fn num_scale<F: Scalar>(v: &Value<F>, n: u64) -> Result<Value<F>> {
    match v {
        Value::Int(x) => {
            let n = i64::try_from(n).map_err(|_| Error::Overflow)?;
            x.checked_mul(n).map(Value::Int).ok_or(Error::Overflow)
        }
        Value::Float(x) => {
            let k = F::from_u64(n).ok_or(Error::Overflow)?;
            Ok(Value::Float(*x * k))
        }
        other => Err(Error::Type(format!("expected a number, found {}", other.type_name()))),
    }
}

pub(crate) fn to_float<F: Scalar>(v: &Value<F>) -> Result<F> {
    match v {
        Value::Int(x) => F::from_i64(*x).ok_or(Error::Overflow),
        Value::Float(x) => Ok(*x),
        other => Err(Error::Type(format!("expected a number, found {}", other.type_name()))),
    }
}

/// Structural equality with float leaves compared within `eps`.
pub fn eps_eq<F: Scalar>(a: &Value<F>, b: &Value<F>, eps: F) -> bool {
    match (a, b) {
        (Value::Float(x), Value::Float(y)) => (*x - *y).abs() <= eps,
        (Value::Tuple(xs), Value::Tuple(ys)) => {
            xs.len() == ys.len() && xs.iter().zip(ys).all(|(x, y)| eps_eq(x, y, eps))
        }
        _ => a == b,
    }
}

/// Largest float deviation between two structurally-equal-shaped keys, or
/// `None` when the non-float parts differ or a float pair exceeds `eps`.
fn eps_distance<F: Scalar>(a: &Value<F>, b: &Value<F>, eps: F) -> Option<F> {
    match (a, b) {
        (Value::Float(x), Value::Float(y)) => {
            let d = (*x - *y).abs();
            if d <= eps {
                Some(d)
            } else {
                None
            }
        }
        (Value::Tuple(xs), Value::Tuple(ys)) if xs.len() == ys.len() => {
            let mut worst = F::zero();
            for (x, y) in xs.iter().zip(ys) {
                let d = eps_distance(x, y, eps)?;
                if d > worst {
                    worst = d;
                }
            }
            Some(worst)
        }
        _ => {
            if a == b {
                Some(F::zero())
            } else {
                None
            }
        }
    }
}

/// Derived merge operations: monoids used as merges, plus the outer-join and
/// difference forms that diffusion and diminishers produce.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MergeForm {
    Monoid(Monoid),
    /// Multiset difference.
    BagDiff,
    /// Numeric subtraction.
    NumDiff,
    /// Componentwise on pairs.
    Pairwise(std::boxed::Box<MergeForm>, std::boxed::Box<MergeForm>),
    /// Right-outer keyed merge: matched keys merge, unmatched right pairs
    /// survive, unmatched left pairs are dropped.
    DownRight(std::boxed::Box<MergeForm>),
    /// Left-outer keyed merge with the `a != b` filter: matched unequal pairs
    /// merge, matched equal pairs are dropped, unmatched left pairs survive.
    DownLeft(std::boxed::Box<MergeForm>),
}

impl MergeForm {
    pub fn apply<F: Scalar>(&self, a: &Value<F>, b: &Value<F>, opts: &MergeOpts<F>) -> Result<Value<F>> {
        match self {
            MergeForm::Monoid(m) => monoid_merge(m, a, b, opts),
            MergeForm::BagDiff => Ok(Value::Bag(a.as_bag()?.difference(b.as_bag()?))),
            MergeForm::NumDiff => match (a, b) {
                (Value::Int(x), Value::Int(y)) => {
                    x.checked_sub(*y).map(Value::Int).ok_or(Error::Overflow)
                }
                _ => Ok(Value::Float(to_float(a)? - to_float(b)?)),
            },
            MergeForm::Pairwise(l, r) => {
                let (a1, a2) = a.as_pair()?;
                let (b1, b2) = b.as_pair()?;
                Ok(Value::pair(l.apply(a1, b1, opts)?, r.apply(a2, b2, opts)?))
            }
            MergeForm::DownRight(inner) => Ok(Value::Bag(outer_join(
                a.as_bag()?,
                b.as_bag()?,
                inner,
                JoinKind::Right,
                opts,
            )?)),
            MergeForm::DownLeft(inner) => Ok(Value::Bag(outer_join(
                a.as_bag()?,
                b.as_bag()?,
                inner,
                JoinKind::LeftDiff,
                opts,
            )?)),
        }
    }
}

impl fmt::Display for MergeForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MergeForm::Monoid(m) => write!(f, "{m}"),
            MergeForm::BagDiff => write!(f, "bag-"),
            MergeForm::NumDiff => write!(f, "-"),
            MergeForm::Pairwise(l, r) => write!(f, "({l} x {r})"),
            MergeForm::DownRight(m) => write!(f, "down-right({m})"),
            MergeForm::DownLeft(m) => write!(f, "down-left({m})"),
        }
    }
}

/// Right-outer merge of keyed bags: `merge_down_right(inner, X, Y)` keeps
/// matched keys (merged with `inner`) and Y-only pairs; X-only pairs drop.
pub fn merge_down_right<F: Scalar>(
    inner: &MergeForm,
    x: &Value<F>,
    y: &Value<F>,
    opts: &MergeOpts<F>,
) -> Result<Value<F>> {
    Ok(Value::Bag(outer_join(x.as_bag()?, y.as_bag()?, inner, JoinKind::Right, opts)?))
}

/// Left-outer merge of keyed bags with the `a != b` filter.
pub fn merge_down_left<F: Scalar>(
    inner: &MergeForm,
    x: &Value<F>,
    y: &Value<F>,
    opts: &MergeOpts<F>,
) -> Result<Value<F>> {
    Ok(Value::Bag(outer_join(x.as_bag()?, y.as_bag()?, inner, JoinKind::LeftDiff, opts)?))
}

/// Diffusion of a merger monoid: lifted monoids become right-outer joins so
/// the result carries only the state entries touched by the new data.
pub fn diffusion(m: &Monoid) -> MergeForm {
    match m {
        Monoid::Lifted(inner) => MergeForm::DownRight(std::boxed::Box::new(diffusion(inner))),
        Monoid::Product(l, r) => {
            MergeForm::Pairwise(std::boxed::Box::new(diffusion(l)), std::boxed::Box::new(diffusion(r)))
        }
        other => MergeForm::Monoid(other.clone()),
    }
}

/// Diminisher of a merger monoid, used to retract deleted contributions.
/// Product, and, and or aggregations cannot be diminished.
pub fn diminisher(m: &Monoid) -> Result<MergeForm> {
    Ok(match m {
        Monoid::Union => MergeForm::BagDiff,
        Monoid::Sum => MergeForm::NumDiff,
        Monoid::Box => MergeForm::Monoid(Monoid::Box),
        Monoid::Product(l, r) => MergeForm::Pairwise(
            std::boxed::Box::new(diminisher(l)?),
            std::boxed::Box::new(diminisher(r)?),
        ),
        Monoid::Lifted(inner) => MergeForm::DownLeft(std::boxed::Box::new(diminisher(inner)?)),
        Monoid::Prod | Monoid::And | Monoid::Or => {
            return Err(Error::NoDiminisher(m.to_string()))
        }
    })
}

#[derive(Clone, Copy, PartialEq)]
enum JoinKind {
    Full,
    Right,
    LeftDiff,
}

type Groups<F> = BTreeMap<Value<F>, Vec<(Value<F>, u64)>>;

fn group_pairs<F: Scalar>(bag: &Bag<F>) -> Result<Groups<F>> {
    let mut out: Groups<F> = BTreeMap::new();
    for (v, n) in bag.iter() {
        let (k, val) = v.as_pair()?;
        out.entry(k.clone()).or_default().push((val.clone(), n));
    }
    Ok(out)
}

/// Merge-join over two unique-keyed bags of pairs. Bags iterate in canonical
/// order, which for same-arity pairs is key-major, so a single linear pass
/// suffices. Returns `None` (fall back to the grouped join) when either side
/// repeats a key.
fn merge_join_unique<F: Scalar>(
    x: &Bag<F>,
    y: &Bag<F>,
    inner: &MergeForm,
    kind: JoinKind,
    opts: &MergeOpts<F>,
) -> Result<Option<Bag<F>>> {
    let mut xs = x.iter().peekable();
    let mut ys = y.iter().peekable();
    let mut out = Bag::new();
    let mut last_x: Option<Value<F>> = None;
    let mut last_y: Option<Value<F>> = None;
    loop {
        let take_x = match (xs.peek(), ys.peek()) {
            (None, None) => break,
            (Some(_), None) => true,
            (None, Some(_)) => false,
            (Some((ex, _)), Some((ey, _))) => {
                let (kx, _) = ex.as_pair()?;
                let (ky, _) = ey.as_pair()?;
                match kx.cmp(ky) {
                    std::cmp::Ordering::Less => true,
                    std::cmp::Ordering::Greater => false,
                    std::cmp::Ordering::Equal => {
                        // Matched pair.
                        let (ex, nx) = xs.next().expect("peeked");
                        let (ey, ny) = ys.next().expect("peeked");
                        if nx != 1 || ny != 1 {
                            return Ok(None);
                        }
                        let (kx, vx) = ex.as_pair()?;
                        let (ky, vy) = ey.as_pair()?;
                        if last_x.as_ref() == Some(kx) || last_y.as_ref() == Some(ky) {
                            return Ok(None);
                        }
                        last_x = Some(kx.clone());
                        last_y = Some(ky.clone());
                        match kind {
                            JoinKind::Full | JoinKind::Right => {
                                out.insert(
                                    Value::pair(ky.clone(), inner.apply(vx, vy, opts)?),
                                    1,
                                );
                            }
                            JoinKind::LeftDiff => {
                                if vx != vy {
                                    out.insert(
                                        Value::pair(kx.clone(), inner.apply(vx, vy, opts)?),
                                        1,
                                    );
                                }
                            }
                        }
                        continue;
                    }
                }
            }
        };
        if take_x {
            let (ex, nx) = xs.next().expect("peeked");
            if nx != 1 {
                return Ok(None);
            }
            let (kx, _) = ex.as_pair()?;
            if last_x.as_ref() == Some(kx) {
                return Ok(None);
            }
            last_x = Some(kx.clone());
            if kind != JoinKind::Right {
                out.insert(ex.clone(), 1);
            }
        } else {
            let (ey, ny) = ys.next().expect("peeked");
            if ny != 1 {
                return Ok(None);
            }
            let (ky, _) = ey.as_pair()?;
            if last_y.as_ref() == Some(ky) {
                return Ok(None);
            }
            last_y = Some(ky.clone());
            if kind != JoinKind::LeftDiff {
                out.insert(ey.clone(), 1);
            }
        }
    }
    Ok(Some(out))
}

/// Keyed join of two bags of pairs. With approximate keys enabled, each right
/// key is matched to the nearest left key within epsilon and the right key
/// survives in the output; exact mode joins on structural key equality.
fn outer_join<F: Scalar>(
    x: &Bag<F>,
    y: &Bag<F>,
    inner: &MergeForm,
    kind: JoinKind,
    opts: &MergeOpts<F>,
) -> Result<Bag<F>> {
    if opts.epsilon.is_none() {
        if let Some(out) = merge_join_unique(x, y, inner, kind, opts)? {
            return Ok(out);
        }
    }
    let gx = group_pairs(x)?;
    let gy = group_pairs(y)?;
    let mut out = Bag::new();

    // Pairing of y keys to x keys. Exact keys pair to themselves.
    let mut matched_x: std::collections::BTreeSet<Value<F>> = Default::default();
    let mut pairs: Vec<(Option<&Value<F>>, &Value<F>)> = Vec::new();
    match opts.epsilon {
        None => {
            for ky in gy.keys() {
                let mx = gx.get_key_value(ky).map(|(k, _)| k);
                if let Some(k) = mx {
                    matched_x.insert(k.clone());
                }
                pairs.push((mx, ky));
            }
        }
        Some(eps) => {
            for ky in gy.keys() {
                let mut best: Option<(&Value<F>, F)> = None;
                for kx in gx.keys() {
                    if let Some(d) = eps_distance(kx, ky, eps) {
                        if best.is_none_or(|(_, bd)| d < bd) {
                            best = Some((kx, d));
                        }
                    }
                }
                if let Some((kx, _)) = best {
                    matched_x.insert(kx.clone());
                    pairs.push((Some(kx), ky));
                } else {
                    pairs.push((None, ky));
                }
            }
        }
    }

    for (mx, ky) in pairs {
        match mx {
            Some(kx) => {
                let xs = &gx[kx];
                let ys = &gy[ky];
                for (va, ca) in xs {
                    for (vb, cb) in ys {
                        match kind {
                            JoinKind::Full | JoinKind::Right => {
                                out.insert(Value::pair(ky.clone(), inner.apply(va, vb, opts)?), ca * cb);
                            }
                            JoinKind::LeftDiff => {
                                if va != vb {
                                    out.insert(
                                        Value::pair(kx.clone(), inner.apply(va, vb, opts)?),
                                        ca * cb,
                                    );
                                }
                            }
                        }
                    }
                }
            }
            None => {
                // Y-only keys survive in full and right joins.
                if kind != JoinKind::LeftDiff {
                    for (vb, cb) in &gy[ky] {
                        out.insert(Value::pair(ky.clone(), vb.clone()), *cb);
                    }
                }
            }
        }
    }

    // X-only keys survive in full and left joins.
    if kind != JoinKind::Right {
        for (kx, xs) in &gx {
            if !matched_x.contains(kx) {
                for (va, ca) in xs {
                    out.insert(Value::pair(kx.clone(), va.clone()), *ca);
                }
            }
        }
    }

    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::value::bag;

    type V = Value<f64>;
    const EXACT: MergeOpts<f64> = MergeOpts::EXACT;

    fn kv(k: i64, v: V) -> V {
        V::pair(V::Int(k), v)
    }

    #[test]
    fn zeros() {
        assert_eq!(monoid_zero::<f64>(&Monoid::Sum).unwrap(), V::Int(0));
        assert_eq!(monoid_zero::<f64>(&Monoid::Union).unwrap(), bag::<f64>([]));
        assert_eq!(
            monoid_zero::<f64>(&Monoid::product(Monoid::Sum, Monoid::Sum)).unwrap(),
            V::pair(V::Int(0), V::Int(0))
        );
        assert!(matches!(monoid_zero::<f64>(&Monoid::Box), Err(Error::NoZero)));
    }

    #[test]
    fn sum_merges_numbers() {
        assert_eq!(
            monoid_merge(&Monoid::Sum, &V::Int(2), &V::Int(3), &EXACT).unwrap(),
            V::Int(5)
        );
    }

    #[test]
    fn lifted_union_is_a_full_outer_join() {
        // Hand-applied from the lifted-merge definition: matched keys union
        // their groups, unmatched pairs pass through.
        let x = bag::<f64>([
            kv(1, bag([V::str("A"), V::str("C")])),
            kv(2, bag([V::str("B")])),
        ]);
        let y = bag::<f64>([kv(1, bag([V::str("D")])), kv(3, bag([V::str("F")]))]);
        let expect = bag::<f64>([
            kv(1, bag([V::str("A"), V::str("C"), V::str("D")])),
            kv(2, bag([V::str("B")])),
            kv(3, bag([V::str("F")])),
        ]);
        let got = monoid_merge(&Monoid::lifted(Monoid::Union), &x, &y, &EXACT).unwrap();
        assert_eq!(got, expect);
        // Oracle: the definition's three comprehensions, written out directly.
        assert_eq!(naive_full_outer(&x, &y), expect);
    }

    fn naive_full_outer(x: &V, y: &V) -> V {
        let xs: Vec<(V, V)> = pairs_of(x);
        let ys: Vec<(V, V)> = pairs_of(y);
        let mut out = Bag::new();
        for (k, a) in &xs {
            for (k2, b) in &ys {
                if k == k2 {
                    out.insert(
                        V::pair(k.clone(), monoid_merge(&Monoid::Union, a, b, &EXACT).unwrap()),
                        1,
                    );
                }
            }
        }
        for (k, a) in &xs {
            if !ys.iter().any(|(k2, _)| k2 == k) {
                out.insert(V::pair(k.clone(), a.clone()), 1);
            }
        }
        for (k, b) in &ys {
            if !xs.iter().any(|(k2, _)| k2 == k) {
                out.insert(V::pair(k.clone(), b.clone()), 1);
            }
        }
        Value::Bag(out)
    }

    fn pairs_of(v: &V) -> Vec<(V, V)> {
        let mut out = Vec::new();
        for (e, n) in v.as_bag().unwrap().iter() {
            let (k, val) = e.as_pair().unwrap();
            for _ in 0..n {
                out.push((k.clone(), val.clone()));
            }
        }
        out
    }

    #[test]
    fn box_rejects_unequal_values() {
        let err = monoid_merge(&Monoid::Box, &V::str("a"), &V::str("b"), &EXACT).unwrap_err();
        assert!(matches!(err, Error::BoxConflict { .. }), "{err}");
        assert_eq!(
            monoid_merge(&Monoid::Box, &V::Int(4), &V::Int(4), &EXACT).unwrap(),
            V::Int(4)
        );
    }

    #[test]
    fn down_right_examples() {
        let inner = MergeForm::Monoid(Monoid::Sum);
        let x = bag::<f64>([kv(1, V::Int(5))]);
        let y = bag::<f64>([kv(1, V::Int(2)), kv(2, V::Int(7))]);
        let got = merge_down_right(&inner, &x, &y, &EXACT).unwrap();
        assert_eq!(got, bag::<f64>([kv(1, V::Int(7)), kv(2, V::Int(7))]));

        let empty = bag::<f64>([]);
        assert_eq!(merge_down_right(&inner, &empty, &y, &EXACT).unwrap(), y);
        assert_eq!(merge_down_right(&inner, &x, &empty, &EXACT).unwrap(), empty);
    }

    #[test]
    fn down_left_examples() {
        let inner = MergeForm::NumDiff;
        let x = bag::<f64>([kv(1, V::Int(5)), kv(2, V::Int(3))]);
        let y = bag::<f64>([kv(1, V::Int(2))]);
        let got = merge_down_left(&inner, &x, &y, &EXACT).unwrap();
        assert_eq!(got, bag::<f64>([kv(1, V::Int(3)), kv(2, V::Int(3))]));

        let empty = bag::<f64>([]);
        assert_eq!(merge_down_left(&inner, &x, &empty, &EXACT).unwrap(), x);
        let same = bag::<f64>([kv(1, V::Int(5))]);
        assert_eq!(merge_down_left(&inner, &same, &same, &EXACT).unwrap(), empty);
    }

    #[test]
    fn diffusion_table() {
        assert_eq!(diffusion(&Monoid::Sum), MergeForm::Monoid(Monoid::Sum));
        let m = Monoid::lifted(Monoid::product(Monoid::Box, Monoid::Sum));
        match diffusion(&m) {
            MergeForm::DownRight(inner) => match *inner {
                MergeForm::Pairwise(l, r) => {
                    assert_eq!(*l, MergeForm::Monoid(Monoid::Box));
                    assert_eq!(*r, MergeForm::Monoid(Monoid::Sum));
                }
                other => panic!("unexpected inner {other}"),
            },
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn diminisher_table() {
        let m = Monoid::lifted(Monoid::product(
            Monoid::Box,
            Monoid::product(Monoid::Sum, Monoid::Sum),
        ));
        let d = diminisher(&m).unwrap();
        // State {((1,()),(1,(12,3)))} minus the deletion image {((1,()),(1,(6,1)))}
        // leaves (1,(6,2)): the (sx-sy, cx-cy) merge.
        let lin = V::pair(V::Int(1), V::Unit);
        let state = bag::<f64>([V::pair(
            lin.clone(),
            V::pair(V::Int(1), V::pair(V::Int(12), V::Int(3))),
        )]);
        let del = bag::<f64>([V::pair(
            lin.clone(),
            V::pair(V::Int(1), V::pair(V::Int(6), V::Int(1))),
        )]);
        let got = d.apply(&state, &del, &EXACT).unwrap();
        assert_eq!(
            got,
            bag::<f64>([V::pair(lin, V::pair(V::Int(1), V::pair(V::Int(6), V::Int(2))))])
        );
        assert!(diminisher(&Monoid::Prod).is_err());
        assert!(diminisher(&Monoid::And).is_err());
    }

    #[test]
    fn bag_difference_by_multiplicity() {
        let d = diminisher(&Monoid::Union).unwrap();
        let a = bag::<f64>([V::Int(1), V::Int(1), V::Int(2)]);
        let b = bag::<f64>([V::Int(1)]);
        assert_eq!(d.apply(&a, &b, &EXACT).unwrap(), bag::<f64>([V::Int(1), V::Int(2)]));
    }

    #[test]
    fn duplicate_keys_take_the_general_cross_merge_path() {
        // Non-unique keys follow the comprehension: matched keys cross-merge
        // per occurrence.
        let m = Monoid::lifted(Monoid::Union);
        let x = bag::<f64>([
            kv(1, bag([V::str("a")])),
            kv(1, bag([V::str("b")])),
        ]);
        let y = bag::<f64>([kv(1, bag([V::str("c")]))]);
        let got = monoid_merge(&m, &x, &y, &EXACT).unwrap();
        let expect = bag::<f64>([
            kv(1, bag([V::str("a"), V::str("c")])),
            kv(1, bag([V::str("b"), V::str("c")])),
        ]);
        assert_eq!(got, expect);
        assert_eq!(naive_full_outer(&x, &y), expect);
    }

    #[test]
    fn epsilon_matches_nearby_float_keys() {
        let opts = MergeOpts { epsilon: Some(0.1) };
        let m = Monoid::lifted(Monoid::product(Monoid::Sum, Monoid::Sum));
        let key = |x: f64, y: f64| V::Tuple(vec![V::Float(x), V::Float(y)]);
        let x = bag::<f64>([V::pair(key(3.0, 3.0), V::pair(V::Int(10), V::Int(2)))]);
        let y = bag::<f64>([V::pair(key(3.05, 2.96), V::pair(V::Int(4), V::Int(1)))]);
        let got = monoid_merge(&m, &x, &y, &opts).unwrap();
        // The newer key survives.
        assert_eq!(
            got,
            bag::<f64>([V::pair(key(3.05, 2.96), V::pair(V::Int(14), V::Int(3)))])
        );
    }
}
