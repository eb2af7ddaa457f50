//! Differentiation core: a matrix tape for reverse mode, and dual numbers so the
//! same reverse pass can be replayed forward-over-reverse for nested gradients.

mod scalar;
mod tape;

pub use scalar::{Dual, Scalar};
pub use tape::{Gradients, Mat, Tape, Var};
