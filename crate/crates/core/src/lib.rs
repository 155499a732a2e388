//! Distills long sequential scan logs into compact maps by streaming
//! submodular maximization of a clustering reward over unit-norm global
//! descriptors.

// `!(x > 0)` style checks reject NaN along with out-of-range values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod approx;
pub mod baselines;
pub mod domain;
pub mod error;
pub mod geometry;
pub mod reduction;
pub mod rewards;
pub mod scalar;
pub mod store;
pub mod streaming;
pub mod synth;

pub use approx::{ApproxKind, GapChannel};
pub use domain::{
    filter_constraints, recompute_value, Ball, ConstraintSet, Descriptor, Element, GuessLadder, InputLog, ReducedSet,
    Solution, TimeWindow,
};
pub use error::{Error, Result};
pub use geometry::{fit_cap_overlap, CapOverlapModel, PsiCache};
pub use reduction::reduce;
pub use rewards::{ebc_value, value_of_members, RewardKind};
pub use scalar::Scalar;
pub use streaming::{dr_stream, sieve_stream, PreloadSignal, RunConfig, RunReport, StreamOrder};

pub type DescriptorF64 = Descriptor<f64>;
pub type DescriptorF32 = Descriptor<f32>;
pub type InputLogF64 = InputLog<f64>;
pub type InputLogF32 = InputLog<f32>;
pub type ReducedSetF64 = ReducedSet<f64>;
pub type ReducedSetF32 = ReducedSet<f32>;
pub type SolutionF64 = Solution<f64>;
pub type SolutionF32 = Solution<f32>;
