//! Distance measures between answers, used by the benchmark reports and the
//! acceptance suite.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::monoid::to_float;
use crate::scalar::Scalar;
use crate::value::Value;

/// Reads a bag of 2-d points into sorted (x, y) rows.
pub fn points_of<F: Scalar>(v: &Value<F>) -> Result<Vec<(F, F)>> {
    let mut out = Vec::new();
    for (e, n) in v.as_bag()?.iter() {
        let t = e.as_tuple()?;
        if t.len() != 2 {
            return Err(Error::Type(format!("expected a point, found {}", e.render())));
        }
        for _ in 0..n {
            out.push((to_float(&t[0])?, to_float(&t[1])?));
        }
    }
    out.sort_by(|a, b| {
        a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal)
    });
    Ok(out)
}

/// Greedy L-infinity matching of two centroid sets of equal size: each left
/// point pairs with its nearest unused right point; returns the largest
/// coordinate deviation over all pairs.
pub fn centroid_linf<F: Scalar>(a: &Value<F>, b: &Value<F>) -> Result<F> {
    let pa = points_of(a)?;
    let mut pb = points_of(b)?;
    if pa.len() != pb.len() {
        return Err(Error::Session(format!(
            "centroid sets differ in size: {} vs {}",
            pa.len(),
            pb.len()
        )));
    }
    let mut worst = F::zero();
    for p in pa {
        let (idx, _) = pb
            .iter()
            .enumerate()
            .min_by(|(_, x), (_, y)| {
                let dx = dist_linf(p, **x);
                let dy = dist_linf(p, **y);
                dx.partial_cmp(&dy).unwrap_or(std::cmp::Ordering::Equal)
            })
            .ok_or_else(|| Error::Session("empty centroid set".into()))?;
        let q = pb.remove(idx);
        let d = dist_linf(p, q);
        if d > worst {
            worst = d;
        }
    }
    Ok(worst)
}

fn dist_linf<F: Scalar>(a: (F, F), b: (F, F)) -> F {
    let dx = (a.0 - b.0).abs();
    let dy = (a.1 - b.1).abs();
    if dx > dy {
        dx
    } else {
        dy
    }
}

/// Reads a bag of `(node, rank)` pairs into a map.
pub fn ranks_of<F: Scalar>(v: &Value<F>) -> Result<BTreeMap<Value<F>, F>> {
    let mut out = BTreeMap::new();
    for (e, _) in v.as_bag()?.iter() {
        let (k, r) = e.as_pair()?;
        out.insert(k.clone(), to_float(r)?);
    }
    Ok(out)
}

/// L1 distance between two rank vectors after normalizing each to sum 1;
/// nodes missing on one side count with rank 0.
pub fn normalized_rank_l1<F: Scalar>(a: &Value<F>, b: &Value<F>) -> Result<F> {
    let ra = ranks_of(a)?;
    let rb = ranks_of(b)?;
    let sum = |m: &BTreeMap<Value<F>, F>| m.values().fold(F::zero(), |acc, x| acc + *x);
    let sa = sum(&ra);
    let sb = sum(&rb);
    if sa == F::zero() || sb == F::zero() {
        return Err(Error::Session("cannot normalize an all-zero rank vector".into()));
    }
    let mut keys: std::collections::BTreeSet<&Value<F>> = ra.keys().collect();
    keys.extend(rb.keys());
    let mut l1 = F::zero();
    for k in keys {
        let x = ra.get(k).copied().unwrap_or(F::zero()) / sa;
        let y = rb.get(k).copied().unwrap_or(F::zero()) / sb;
        l1 = l1 + (x - y).abs();
    }
    Ok(l1)
}

/// Overlap between the top-k nodes of two rank vectors, as a count in 0..=k.
pub fn top_k_overlap<F: Scalar>(a: &Value<F>, b: &Value<F>, k: usize) -> Result<usize> {
    let top = |v: &Value<F>| -> Result<std::collections::BTreeSet<Value<F>>> {
        let m = ranks_of(v)?;
        let mut rows: Vec<(Value<F>, F)> = m.into_iter().collect();
        rows.sort_by(|(ka, xa), (kb, xb)| {
            xb.partial_cmp(xa)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| ka.cmp(kb))
        });
        Ok(rows.into_iter().take(k).map(|(k, _)| k).collect())
    };
    let ta = top(a)?;
    let tb = top(b)?;
    Ok(ta.intersection(&tb).count())
}
