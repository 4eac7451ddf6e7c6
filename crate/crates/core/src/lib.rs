//! Multi-capacity CNN models and resource-aware scheduling of concurrent
//! inference workloads.
//!
//! The offline stage trains a small CNN, prunes it filter by filter while
//! recording a roadmap ([`pruning`]), then regrows the pruned filters in
//! reverse order while freezing everything that already exists
//! ([`recovery`]). The result is one parameter store that contains several
//! nested descendant models. [`profiling`] turns each descendant into an
//! (accuracy, latency, memory) row, and the online stage ([`scheduler`],
//! [`simulator`]) picks a descendant and a compute share for every running
//! application.

pub mod error;
pub mod nn;
pub mod pipeline;
pub mod profiling;
pub mod pruning;
pub mod recovery;
pub mod scheduler;
pub mod schema;
pub mod seed;
pub mod simulator;

pub use error::{Error, Result};
