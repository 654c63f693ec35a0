//! Short-term load forecasting with copula-derived peak indicators feeding
//! a deep belief network.

// `!(x > 0.0)` style guards reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod copula;
pub mod dbn;
pub mod error;
pub mod eval;
pub mod ingest;
pub mod persist;
pub mod seed;
pub mod synthgen;
pub mod transform;

pub use error::{Error, Result};
