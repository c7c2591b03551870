//! Seeded dataset generators: uniform integer pairs, four-square point
//! clouds, and R-MAT graphs with per-edge link weights.

use std::path::Path;

use rand::Rng;

use crate::data::write_csv;
use crate::error::{Error, Result};
use crate::scalar::{render, Scalar};
pub use crate::testkit::TestRng;
use rand::SeedableRng;

pub fn rng(seed: u64) -> TestRng {
    TestRng::seed_from_u64(seed)
}

/// Uniform pairs of integers in `[0, 10000]`.
pub fn pairs(rng: &mut TestRng, n: usize) -> Vec<(i64, i64)> {
    (0..n)
        .map(|_| (rng.gen_range(0..=10_000), rng.gen_range(0..=10_000)))
        .collect()
}

/// One-to-many join data for one epoch: left rows `(A, B)` with fresh unique
/// join keys starting at `key_offset`, right rows `(C, D)` referencing only
/// this epoch's keys. Epochs are therefore self-contained joins.
pub fn join_pairs(
    rng: &mut TestRng,
    n_left: usize,
    n_right: usize,
    key_offset: i64,
) -> (Vec<(i64, i64)>, Vec<(i64, i64)>) {
    let left: Vec<(i64, i64)> = (0..n_left)
        .map(|i| (rng.gen_range(0..=10_000), key_offset + i as i64))
        .collect();
    let right: Vec<(i64, i64)> = (0..n_right)
        .map(|_| {
            (
                key_offset + rng.gen_range(0..n_left as i64),
                rng.gen_range(0..=10_000),
            )
        })
        .collect();
    (left, right)
}

/// Points uniform over the four squares with X and Y each in
/// `[2,4] u [6,8]`; the expected cluster centers are (3,3), (3,7), (7,3),
/// and (7,7).
pub fn squares<F: Scalar>(rng: &mut TestRng, n: usize) -> Vec<(F, F)> {
    (0..n)
        .map(|_| {
            let pick = |rng: &mut TestRng| {
                let lo = if rng.gen_bool(0.5) { 2.0 } else { 6.0 };
                F::from_f64(lo + rng.gen_range(0.0..2.0f64)).expect("coordinate")
            };
            (pick(rng), pick(rng))
        })
        .collect()
}

/// R-MAT parameters; the four quadrant probabilities must sum to 1.
#[derive(Debug, Clone, Copy)]
pub struct RmatParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl Default for RmatParams {
    fn default() -> Self {
        RmatParams { a: 0.30, b: 0.25, c: 0.25, d: 0.20 }
    }
}

impl RmatParams {
    pub fn validate(&self) -> Result<()> {
        let total = self.a + self.b + self.c + self.d;
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Session(format!(
                "R-MAT probabilities sum to {total}, expected 1.0"
            )));
        }
        Ok(())
    }
}

/// Recursive Kronecker edge sampling. Samples land in the power-of-two
/// enclosing grid and get rejected until both endpoints are below `nodes`.
/// Self-loops and (without `dedup`) duplicate edges are kept.
pub fn rmat(
    rng: &mut TestRng,
    nodes: i64,
    edges: usize,
    params: RmatParams,
    dedup: bool,
) -> Result<Vec<(i64, i64)>> {
    params.validate()?;
    if nodes < 2 {
        return Err(Error::Session("R-MAT needs at least 2 nodes".into()));
    }
    let scale = (64 - (nodes - 1).leading_zeros()) as usize;
    let mut out = Vec::with_capacity(edges);
    let mut seen = std::collections::BTreeSet::new();
    while out.len() < edges {
        let (mut lo_s, mut lo_d) = (0i64, 0i64);
        let mut half = 1i64 << (scale - 1);
        for _ in 0..scale {
            let r: f64 = rng.gen();
            let (ds, dd) = if r < params.a {
                (0, 0)
            } else if r < params.a + params.b {
                (0, 1)
            } else if r < params.a + params.b + params.c {
                (1, 0)
            } else {
                (1, 1)
            };
            lo_s += ds * half;
            lo_d += dd * half;
            half /= 2;
        }
        if lo_s >= nodes || lo_d >= nodes {
            continue;
        }
        if dedup && !seen.insert((lo_s, lo_d)) {
            continue;
        }
        out.push((lo_s, lo_d));
    }
    Ok(out)
}

/// Attaches link weights `1/outdeg(src)` to a batch of edges. Weights are
/// correct forever as long as later batches only add edges from new nodes.
pub fn weight_edges<F: Scalar>(edges: &[(i64, i64)]) -> Vec<(i64, i64, F)> {
    let mut outdeg: std::collections::BTreeMap<i64, usize> = Default::default();
    for (s, _) in edges {
        *outdeg.entry(*s).or_default() += 1;
    }
    edges
        .iter()
        .map(|(s, d)| {
            let w = F::one() / F::from_usize(outdeg[s]).expect("outdeg");
            (*s, *d, w)
        })
        .collect()
}

/// A graph increment: `new_nodes` fresh nodes, each the source of its share
/// of `new_edges`, targeting earlier (or same-increment) nodes uniformly at
/// random.
pub fn rmat_increment(
    rng: &mut TestRng,
    existing_nodes: i64,
    new_nodes: i64,
    new_edges: usize,
    dedup: bool,
) -> Vec<(i64, i64)> {
    let total = existing_nodes + new_nodes;
    let mut out = Vec::with_capacity(new_edges);
    let mut seen = std::collections::BTreeSet::new();
    let mut i = 0usize;
    while out.len() < new_edges {
        let s = existing_nodes + (i as i64 % new_nodes);
        i += 1;
        let d = rng.gen_range(0..total);
        if dedup && !seen.insert((s, d)) {
            continue;
        }
        out.push((s, d));
    }
    out
}

fn int_rows(rows: &[(i64, i64)]) -> Vec<Vec<String>> {
    rows.iter().map(|(a, b)| vec![a.to_string(), b.to_string()]).collect()
}

fn point_rows<F: Scalar>(rows: &[(F, F)]) -> Vec<Vec<String>> {
    rows.iter().map(|(a, b)| vec![render(*a), render(*b)]).collect()
}

fn edge_rows<F: Scalar>(rows: &[(i64, i64, F)]) -> Vec<Vec<String>> {
    rows.iter()
        .map(|(s, d, w)| vec![s.to_string(), d.to_string(), render(*w)])
        .collect()
}

/// What `generate` can produce on disk.
#[derive(Debug, Clone)]
pub enum DatasetKind {
    Pairs { initial: usize, batches: usize, batch_size: usize },
    JoinPairs { initial: usize, batches: usize, batch_size: usize },
    Squares { initial: usize, batches: usize, batch_size: usize },
    Rmat {
        nodes: i64,
        edges: usize,
        increments: usize,
        increment_nodes: i64,
        increment_edges: usize,
        dedup: bool,
    },
}

/// Writes a dataset under `dir`: `initial-N.csv` per source plus
/// `batches-N/batch-KKKK.csv` replay directories. Output is a pure function
/// of the seed.
pub fn generate_dataset(kind: &DatasetKind, seed: u64, dir: &Path) -> Result<Vec<String>> {
    let mut rng = rng(seed);
    let mut written = Vec::new();
    let mut emit = |rel: String, rows: Vec<Vec<String>>| -> Result<()> {
        write_csv(&dir.join(&rel), &rows)?;
        written.push(rel);
        Ok(())
    };
    match kind {
        DatasetKind::Pairs { initial, batches, batch_size } => {
            emit("initial-0.csv".into(), int_rows(&pairs(&mut rng, *initial)))?;
            for b in 0..*batches {
                emit(
                    format!("batches-0/batch-{b:04}.csv"),
                    int_rows(&pairs(&mut rng, *batch_size)),
                )?;
            }
        }
        DatasetKind::JoinPairs { initial, batches, batch_size } => {
            let (l, r) = join_pairs(&mut rng, *initial, *initial, 0);
            emit("initial-0.csv".into(), int_rows(&l))?;
            emit("initial-1.csv".into(), int_rows(&r))?;
            for b in 0..*batches {
                let offset = (initial + b * batch_size) as i64;
                let (l, r) = join_pairs(&mut rng, *batch_size, *batch_size, offset);
                emit(format!("batches-0/batch-{b:04}.csv"), int_rows(&l))?;
                emit(format!("batches-1/batch-{b:04}.csv"), int_rows(&r))?;
            }
        }
        DatasetKind::Squares { initial, batches, batch_size } => {
            emit(
                "initial-0.csv".into(),
                point_rows(&squares::<f64>(&mut rng, *initial)),
            )?;
            let centroids: Vec<(f64, f64)> =
                vec![(2.5, 2.5), (2.5, 6.5), (6.5, 2.5), (6.5, 6.5)];
            emit("initial-1.csv".into(), point_rows(&centroids))?;
            for b in 0..*batches {
                emit(
                    format!("batches-0/batch-{b:04}.csv"),
                    point_rows(&squares::<f64>(&mut rng, *batch_size)),
                )?;
            }
        }
        DatasetKind::Rmat { nodes, edges, increments, increment_nodes, increment_edges, dedup } => {
            let base = rmat(&mut rng, *nodes, *edges, RmatParams::default(), *dedup)?;
            emit("initial-0.csv".into(), edge_rows(&weight_edges::<f64>(&base)))?;
            let mut node_count = *nodes;
            for b in 0..*increments {
                let inc = rmat_increment(
                    &mut rng,
                    node_count,
                    *increment_nodes,
                    *increment_edges,
                    *dedup,
                );
                node_count += increment_nodes;
                emit(
                    format!("batches-0/batch-{b:04}.csv"),
                    edge_rows(&weight_edges::<f64>(&inc)),
                )?;
            }
        }
    }
    Ok(written)
}
