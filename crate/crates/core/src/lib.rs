//! Online algorithm selection with bandit solvers for losses of unknown scale.
//!
//! The crate plays an algorithm-selection game over a stream of problem
//! instances. Each instance is solved by a portfolio of `K` algorithms sharing
//! one machine; a time allocator decides the shares, and an
//! [`Exp3LightA`](bandit::Exp3LightA) bandit picks the allocator per instance,
//! paying the portfolio's wall-clock time as its loss.

pub mod allocators;
pub mod bandit;
pub mod bounds;
pub mod csvio;
pub mod error;
pub mod exec;
pub mod experiment;
pub mod external;
pub mod gambleta;
pub mod manifest;
pub mod runtime_model;
pub mod synth;
pub mod trace;

pub use error::{Error, Result};
