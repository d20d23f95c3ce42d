//! Scalar plant stabilization over noisy channels.
//!
//! The crate simulates an unstable scalar plant `X_{t+1} = λX_t + U_t + W_t`
//! closed over a noisy link, the reduction that turns any stabilizing
//! observer/controller pair into an anytime code with feedback, the
//! constructive stabilizers with and without channel-output feedback, the
//! linear scheme over a power-limited Gaussian channel, and a Monte Carlo
//! harness for moments, tails and error-versus-delay curves.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod awgn;
pub mod channels;
pub mod codec;
pub mod control;
pub mod error;
pub mod feedback;
pub mod harness;
pub mod model;
pub mod nofeedback;
pub mod rate;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
pub use rate::Rate;
