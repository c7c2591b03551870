//! Runtime values: atoms, tuples, and bags.
//!
//! A bag is a counted multiset with a canonical total order on values
//! (type tag first, then structure), so iteration order, serialization, and
//! golden test output are deterministic. Bags share their storage through an
//! `Arc`, which makes cloning a state snapshot cheap.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::scalar::{canonical_cmp, render, Scalar};

/// The universal runtime datum.
#[derive(Debug, Clone)]
pub enum Value<F: Scalar> {
    Unit,
    Bool(bool),
    Int(i64),
    Float(F),
    Str(Arc<str>),
    Tuple(Vec<Value<F>>),
    Bag(Bag<F>),
}

impl<F: Scalar> Value<F> {
    pub fn str(s: impl AsRef<str>) -> Self {
        Value::Str(Arc::from(s.as_ref()))
    }

    pub fn pair(a: Value<F>, b: Value<F>) -> Self {
        Value::Tuple(vec![a, b])
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            Value::Unit => "unit",
            Value::Bool(_) => "bool",
            Value::Int(_) => "int",
            Value::Float(_) => "float",
            Value::Str(_) => "string",
            Value::Tuple(_) => "tuple",
            Value::Bag(_) => "bag",
        }
    }

    fn tag_rank(&self) -> u8 {
        match self {
            Value::Unit => 0,
            Value::Bool(_) => 1,
            Value::Int(_) => 2,
            Value::Float(_) => 3,
            Value::Str(_) => 4,
            Value::Tuple(_) => 5,
            Value::Bag(_) => 6,
        }
    }

    pub fn as_bag(&self) -> Result<&Bag<F>> {
        match self {
            Value::Bag(b) => Ok(b),
            other => Err(Error::Type(format!("expected a bag, found {}", other.type_name()))),
        }
    }

    pub fn into_bag(self) -> Result<Bag<F>> {
        match self {
            Value::Bag(b) => Ok(b),
            other => Err(Error::Type(format!("expected a bag, found {}", other.type_name()))),
        }
    }

    pub fn as_tuple(&self) -> Result<&[Value<F>]> {
        match self {
            Value::Tuple(vs) => Ok(vs),
            other => Err(Error::Type(format!("expected a tuple, found {}", other.type_name()))),
        }
    }

    /// Positional projection; defined on tuples of arity >= 2.
    pub fn proj(&self, i: usize) -> Result<&Value<F>> {
        let vs = self.as_tuple()?;
        if vs.len() < 2 {
            return Err(Error::Type(format!("projection on tuple of arity {}", vs.len())));
        }
        vs.get(i)
            .ok_or_else(|| Error::Type(format!("projection index {i} on tuple of arity {}", vs.len())))
    }

    /// Splits a key-value pair (a 2-tuple).
    pub fn as_pair(&self) -> Result<(&Value<F>, &Value<F>)> {
        match self {
            Value::Tuple(vs) if vs.len() == 2 => Ok((&vs[0], &vs[1])),
            other => Err(Error::Type(format!(
                "expected a key-value pair, found {}",
                other.render()
            ))),
        }
    }

    pub fn as_bool(&self) -> Result<bool> {
        match self {
            Value::Bool(b) => Ok(*b),
            other => Err(Error::Type(format!("expected a bool, found {}", other.type_name()))),
        }
    }

    /// Canonical text form, used by snapshots and diagnostics.
    pub fn render(&self) -> String {
        format!("{self}")
    }
}

impl<F: Scalar> PartialEq for Value<F> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl<F: Scalar> Eq for Value<F> {}

impl<F: Scalar> PartialOrd for Value<F> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<F: Scalar> Ord for Value<F> {
    fn cmp(&self, other: &Self) -> Ordering {
        let t = self.tag_rank().cmp(&other.tag_rank());
        if t != Ordering::Equal {
            return t;
        }
        match (self, other) {
            (Value::Unit, Value::Unit) => Ordering::Equal,
            (Value::Bool(a), Value::Bool(b)) => a.cmp(b),
            (Value::Int(a), Value::Int(b)) => a.cmp(b),
            (Value::Float(a), Value::Float(b)) => canonical_cmp(*a, *b),
            (Value::Str(a), Value::Str(b)) => a.cmp(b),
            (Value::Tuple(a), Value::Tuple(b)) => a
                .len()
                .cmp(&b.len())
                .then_with(|| a.iter().cmp(b.iter())),
            (Value::Bag(a), Value::Bag(b)) => a.iter().cmp(b.iter()),
            _ => unreachable!("tag ranks matched"),
        }
    }
}

impl<F: Scalar> fmt::Display for Value<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Unit => write!(f, "()"),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Int(i) => write!(f, "{i}"),
            Value::Float(x) => write!(f, "{}", render(*x)),
            Value::Str(s) => write!(f, "{:?}", s.as_ref()),
            Value::Tuple(vs) => {
                write!(f, "(")?;
                for (i, v) in vs.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{v}")?;
                }
                write!(f, ")")
            }
            Value::Bag(b) => {
                write!(f, "{{")?;
                let mut first = true;
                for (v, n) in b.iter() {
                    for _ in 0..n {
                        if !first {
                            write!(f, ",")?;
                        }
                        first = false;
                        write!(f, "{v}")?;
                    }
                }
                write!(f, "}}")
            }
        }
    }
}

/// Counted multiset of values, kept in canonical order.
#[derive(Debug, Clone)]
pub struct Bag<F: Scalar> {
    elems: Arc<BTreeMap<Value<F>, u64>>,
}

impl<F: Scalar> Default for Bag<F> {
    fn default() -> Self {
        Bag::new()
    }
}

impl<F: Scalar> Bag<F> {
    pub fn new() -> Self {
        Bag { elems: Arc::new(BTreeMap::new()) }
    }

    pub fn singleton(v: Value<F>) -> Self {
        let mut m = BTreeMap::new();
        m.insert(v, 1);
        Bag { elems: Arc::new(m) }
    }

    pub fn insert(&mut self, v: Value<F>, n: u64) {
        if n == 0 {
            return;
        }
        *Arc::make_mut(&mut self.elems).entry(v).or_insert(0) += n;
    }

    /// Iterates distinct elements with their multiplicities.
    pub fn iter(&self) -> impl Iterator<Item = (&Value<F>, u64)> {
        self.elems.iter().map(|(v, n)| (v, *n))
    }

    /// Total multiplicity.
    pub fn len(&self) -> u64 {
        self.elems.values().sum()
    }

    pub fn distinct_len(&self) -> usize {
        self.elems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elems.is_empty()
    }

    pub fn count(&self, v: &Value<F>) -> u64 {
        self.elems.get(v).copied().unwrap_or(0)
    }

    /// Additive union.
    pub fn union(&self, other: &Bag<F>) -> Bag<F> {
        if self.is_empty() {
            return other.clone();
        }
        let mut out = self.clone();
        out.add_scaled(other, 1);
        out
    }

    /// Adds `other` with every multiplicity scaled by `k`.
    pub fn add_scaled(&mut self, other: &Bag<F>, k: u64) {
        if k == 0 || other.is_empty() {
            return;
        }
        let m = Arc::make_mut(&mut self.elems);
        for (v, n) in other.iter() {
            *m.entry(v.clone()).or_insert(0) += n * k;
        }
    }

    /// Bag difference: multiplicities subtract and clamp at zero.
    pub fn difference(&self, other: &Bag<F>) -> Bag<F> {
        let mut out = self.clone();
        let m = Arc::make_mut(&mut out.elems);
        for (v, n) in other.iter() {
            if let Some(c) = m.get_mut(v) {
                if *c > n {
                    *c -= n;
                } else {
                    m.remove(v);
                }
            }
        }
        out
    }

    /// True when every element of `self` occurs in `other` with at least the
    /// same multiplicity.
    pub fn subset_of(&self, other: &Bag<F>) -> bool {
        self.iter().all(|(v, n)| other.count(v) >= n)
    }
}

impl<F: Scalar> FromIterator<Value<F>> for Bag<F> {
    fn from_iter<T: IntoIterator<Item = Value<F>>>(iter: T) -> Self {
        let mut b = Bag::new();
        for v in iter {
            b.insert(v, 1);
        }
        b
    }
}

impl<F: Scalar> PartialEq for Bag<F> {
    fn eq(&self, other: &Self) -> bool {
        self.elems.len() == other.elems.len()
            && self.iter().zip(other.iter()).all(|(a, b)| a == b)
    }
}
impl<F: Scalar> Eq for Bag<F> {}

/// Builds a bag value from a vector of values.
pub fn bag<F: Scalar>(vs: impl IntoIterator<Item = Value<F>>) -> Value<F> {
    Value::Bag(vs.into_iter().collect())
}

/// Multiset equality with a float tolerance.
///
/// Float atoms compare within `tol`; every other atom compares exactly. The
/// comparison recurses through tuples and bags; bags are matched in canonical
/// order after expanding multiplicities.
pub fn bag_equals<F: Scalar>(a: &Value<F>, b: &Value<F>, tol: F) -> bool {
    if tol <= F::zero() {
        return a == b;
    }
    match (a, b) {
        (Value::Float(x), Value::Float(y)) => {
            (*x - *y).abs() <= tol || (x.is_nan() && y.is_nan())
        }
        (Value::Tuple(xs), Value::Tuple(ys)) => {
            xs.len() == ys.len() && xs.iter().zip(ys).all(|(x, y)| bag_equals(x, y, tol))
        }
        (Value::Bag(xs), Value::Bag(ys)) => {
            if xs.len() != ys.len() {
                return false;
            }
            let ex = expand(xs);
            let ey = expand(ys);
            ex.iter().zip(ey.iter()).all(|(x, y)| bag_equals(x, y, tol))
        }
        _ => a == b,
    }
}

fn expand<F: Scalar>(b: &Bag<F>) -> Vec<&Value<F>> {
    let mut out = Vec::with_capacity(b.len() as usize);
    for (v, n) in b.iter() {
        for _ in 0..n {
            out.push(v);
        }
    }
    out
}
