//! Test support: generators and reference computations that are independent
//! of the code they check. Enabled with the `testkit` feature.

pub mod collisions;
pub mod frames;
pub mod gravity;
pub mod routing;
