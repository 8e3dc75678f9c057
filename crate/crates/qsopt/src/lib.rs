//! Grover search with an a-priori distribution over the database.
//!
//! The crate evaluates the average success probability of a generalized
//! Grover iteration (arbitrary initial state ψ and reflection axis φ), its
//! first and second variations, and the perturbative optimizer that trades a
//! small failure probability for fewer oracle calls. Closed forms for the
//! two-value prior live in [`two_value`]; [`verify`] holds the brute-force
//! oracles used to check everything else.

// `!(x > 0.0)` is how inputs reject NaN alongside the range check
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// the 2×2 block loops read closer to the algebra with explicit indices
#![allow(clippy::needless_range_loop)]

pub mod engine;
pub mod error;
pub mod gradient;
mod num;
pub mod optimizer;
mod par;
pub mod state;
pub mod two_value;
pub mod verify;

pub use error::{Error, ErrorKind, Result};
pub use num::theta;
