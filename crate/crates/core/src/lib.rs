//! Decomposition of a 1-D signal into a smooth, high-amplitude component and
//! a small transient component.
//!
//! Every stage is an instance of the box-constrained filtering problem
//!
//! ```text
//! minimize  lambda/2 |y - x|^2 + 1/2 x' C^{-1} x   subject to  a <= x <= b
//! ```
//!
//! where `C` is a truncated squared-exponential covariance. It is solved
//! through its dual with a Douglas-Rachford iteration whose linear step is a
//! circulant resolvent applied by FFT (see [`solver`]).

pub mod baseline;
pub mod bench;
pub mod error;
pub mod io;
pub mod kernel;
pub mod peaks;
pub mod pipeline;
pub mod prox;
pub mod signal;
pub mod solver;
pub mod synth;

pub use error::{Error, ErrorKind, Result};
pub use signal::{mse, project_box, BoxConstraint, Signal};
