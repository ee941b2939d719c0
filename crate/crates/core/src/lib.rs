//! Sharp Bellman functions for the weak John–Nirenberg inequality on the
//! parabolic strip `x₁² ≤ x₂ ≤ x₁² + ε²`.
//!
//! - [`geometry`]: parameters, regimes and the region partition.
//! - [`closed_form`]: `B`, `B_max`, `B_min` with gradients and Hessians.
//! - [`extremizer`]: piecewise test functions attaining `B` (large regime).
//! - [`analysis`]: moments, BMO norms, superlevel sets, delivery curves.
//! - [`oracle`]: `B` recomputed from boundary data by concave relaxation.
//! - [`verify`]: the seeded invariant suite.
//!
//! The closed forms and the extremizers are generic over [`Scalar`]
//! (`f32` or `f64`); the oracle and the suite work in `f64`.
//!
//! ```
//! use jn_bellman::{eval_b, Params64, StripPoint64};
//!
//! let p = Params64::new(3.0, 1.0).unwrap();
//! let b = eval_b(&StripPoint64::new(0.0, 1.0), &p).unwrap();
//! assert!((b.value - 0.25 * (-1.0f64).exp()).abs() < 1e-12);
//! ```

pub mod analysis;
pub mod closed_form;
pub mod error;
pub mod extremizer;
pub mod geometry;
pub mod oracle;
pub mod scalar;
pub mod verify;

pub use analysis::{
    bmo_norm, bmo_norm_search, delivery_curve, moments, superlevel_measure, Interval, LevelMode,
};
pub use closed_form::{
    eval_b, eval_b_with_derivatives, eval_bmax, eval_bmin, grad_b, hessian_b, weak_jn_bound,
    BellmanValue, Sym2,
};
pub use error::{Error, Result};
pub use extremizer::{build_extremizer, sample, PiecewiseFunction, Segment, SegmentForm};
pub use geometry::{
    classify_one_jump, classify_weak, in_strip, regime, Layout, Params, Region, Regime, StripPoint,
};
pub use oracle::{chord_feasible, init_field, relax, solve, BoundarySet, GridField, StripGrid};
pub use scalar::Scalar;

pub type Params64 = Params<f64>;
pub type Params32 = Params<f32>;
pub type StripPoint64 = StripPoint<f64>;
pub type StripPoint32 = StripPoint<f32>;
pub type BellmanValue64 = BellmanValue<f64>;
pub type BellmanValue32 = BellmanValue<f32>;
pub type PiecewiseFunction64 = PiecewiseFunction<f64>;
pub type PiecewiseFunction32 = PiecewiseFunction<f32>;
