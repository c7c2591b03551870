//! incrq-core: a compiler and runtime that turns batch queries over bags into
//! incremental stream programs.
//!
//! A batch query built from `cMap` / `groupBy` / `coGroup` / `reduce` /
//! `repeat` is compiled into a homomorphic term `h`, a merger monoid, and an
//! answer function. The runtime maintains a state across batches of
//! insertions and deletions:
//!
//! ```text
//! state <- state (x) h(batch);    answer = a(state)
//! ```
//!
//! and every incremental answer can be checked against full batch
//! recomputation through the evaluator.
//!
//! The core is generic over the float scalar (`f32`/`f64`); the `*64` aliases
//! at the crate root pin the default used by the CLI and the fixtures.

pub mod compare;
pub mod data;
pub mod dsl;
pub mod error;
pub mod eval;
pub mod factor;
pub mod fixtures;
pub mod gen;
pub mod infer;
pub mod lineage;
pub mod monoid;
pub mod normalize;
pub mod runtime;
pub mod scalar;
pub mod session;
pub mod term;
pub mod testkit;
pub mod value;

pub use error::{Error, Result};
pub use monoid::{MergeForm, MergeOpts, Monoid};
pub use scalar::Scalar;
pub use term::{AlgebraTerm, BinOp, Builtin, Expr, Pattern};
pub use value::{bag_equals, Bag, Value};

pub type Value64 = value::Value<f64>;
pub type Bag64 = value::Bag<f64>;
pub type Expr64 = term::Expr<f64>;
pub type Term64 = term::AlgebraTerm<f64>;
pub type Plan64 = runtime::IncrementalPlan<f64>;
