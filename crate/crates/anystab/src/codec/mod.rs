//! Anytime codes built from stabilizers.
//!
//! Bits are embedded into a simulated bounded disturbance so that the
//! undisturbed plant state traces a point of a Cantor set
//! ([`cantor`]). Any observer/controller pair that keeps the plant small
//! then yields a decoder that reads the bits back out of its own copy of
//! the controls ([`reduction`]).

pub mod cantor;
pub mod exact;
pub mod reduction;
pub mod table;

pub use cantor::{BitStream, CantorEncoder, CantorParams};
pub use exact::ExactCantor;
pub use reduction::{run_reduction, ReductionConfig, ReductionStep, ReductionTrace};
pub use table::{estimate_reliability, DelayPoint, EstimateTable, ExpFit, ReliabilityReport};
