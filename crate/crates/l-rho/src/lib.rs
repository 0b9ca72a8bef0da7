//! Rolling-horizon optimization toolkit for long-horizon flexible job-shop
//! scheduling (FJSP).
//!
//! The library decomposes a long-horizon FJSP into overlapping windowed
//! subproblems, solves each with an anytime local-search subsolver, and
//! accelerates consecutive iterations by fixing machine assignments of
//! overlapping operations — via heuristics, a look-ahead oracle, or a
//! learned classifier imitating that oracle. A closed-form error analysis
//! of the fix-set heuristics is included alongside a Monte-Carlo validator.

pub mod analysis;
pub mod cli;
pub mod core;
pub mod gen;
pub mod learn;
pub mod rho;
pub mod subsolver;

/// Scalar type used by the learning and analysis math. The numerics are
/// generic over `num_traits::Float`; this alias pins the concrete type the
/// rest of the toolkit (training, CLI, reports) runs on.
pub type Scalar = f64;

/// Single-precision alias for callers that want the generic math in f32.
pub type Scalar32 = f32;

/// Integer time base. Durations, starts, ends, releases and targets are all
/// exact integers; there is no float drift in feasibility checks.
pub type Time = i64;

pub type MachineId = usize;
pub type JobId = usize;
