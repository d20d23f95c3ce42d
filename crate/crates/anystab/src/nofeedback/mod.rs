//! Stabilization when the observer does not see the channel outputs.

pub mod dance;
pub mod lattice;
pub mod trellis;
