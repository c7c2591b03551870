//! Floating-point scalar abstraction.
//!
//! All runtime values are generic over the float type carried by float atoms
//! and float keys. `f64` is the default throughout the workbench; `f32` is
//! exercised in tests to keep the core scalar-agnostic.

use std::fmt::{Debug, Display};
use std::str::FromStr;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// The scalar type of float atoms: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Display + Debug + FromStr + Send + Sync + 'static
{
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Total order on scalars for the canonical `Value` order: `-0.0 == 0.0`,
/// NaN sorts after every finite value and equals itself.
pub fn canonical_cmp<F: Scalar>(a: F, b: F) -> std::cmp::Ordering {
    use std::cmp::Ordering;
    match a.partial_cmp(&b) {
        Some(o) => o,
        None => match (a.is_nan(), b.is_nan()) {
            (true, true) => Ordering::Equal,
            (true, false) => Ordering::Greater,
            (false, true) => Ordering::Less,
            (false, false) => Ordering::Equal,
        },
    }
}

/// Renders a scalar so that it can never be mistaken for an integer literal:
/// integral finite values keep a trailing `.0`.
pub fn render<F: Scalar>(x: F) -> String {
    let s = format!("{x}");
    if s.contains('.') || s.contains('e') || s.contains('E') || s.contains("inf") || s.contains("NaN")
    {
        s
    } else {
        format!("{s}.0")
    }
}
