//! Cutpoints of (1,2) and (2,1) random walks on the nonnegative integers in
//! varying environments.
//!
//! The (2,1) walk `X` steps `+1` with probability `q_k` and `-1`, `-2` with
//! `p_k1`, `p_k2`; the (1,2) walk `Y` steps `-1` with `q_k` and `+1`, `+2`
//! with `p_k1`, `p_k2`. Both start at 2. Sites 0 and 1 have forced moves
//! (`X`: 0 -> 1 -> 2; `Y`: 1 -> 0 -> 2).
//!
//! A cutpoint of `X` is a site visited exactly once; a cutpoint of `Y` is a
//! site never visited.

pub mod cli;
pub mod contfrac;
pub mod env;
pub mod error;
pub mod experiments;
pub mod matprod;
pub mod oracle;
pub mod prob;
#[cfg(test)]
mod proptests;
pub mod sim;

pub use env::{EnvConfig, Environment, Kind, LimitConstants, Sign, SiteParams};
pub use error::{Error, Result};
