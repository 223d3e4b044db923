//! Semi-symbolic streaming inference: a symbolic state of random variables
//! whose dependencies are rewritten by conjugate swaps, falling back to
//! sampling only when no closed form applies.

pub mod conjugacy;
pub mod dist;
pub mod error;
pub mod expr;
pub mod interface;
pub mod models;
pub mod oracle;
pub mod rng;
pub mod runtime;
pub mod state;

pub use dist::{ClosedDist, Dist};
pub use error::{Error, Result};
pub use expr::{Expr, Op, RvId};
pub use rng::RandomSource;
pub use state::SymbolicState;
