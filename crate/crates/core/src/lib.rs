//! Bit-accurate emulation of approximate floating-point multipliers and the
//! tooling to measure how they change a small CNN's behavior under
//! adversarial attack.

pub mod approx;
pub mod attacks;
pub mod error;
pub mod experiments;
pub mod float_mul;
pub mod nn;
pub mod rng;
pub mod tensor;

pub use approx::{AdderKind, Bit, CellRoles, CellSignal, Word};
pub use error::{Error, Result};
pub use float_mul::{Backend, FpmConfig};
pub use tensor::Tensor;
