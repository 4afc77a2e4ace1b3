//! Dense `f64` tensors and a tape-based reverse-mode differentiation engine.
//!
//! The engine is deliberately small: row-major storage, explicit reshapes,
//! and broadcasting only along leading axes. Each forward pass records onto
//! a fresh [`Tape`]; [`Tape::backward`] then returns exact adjoints for
//! every leaf created with [`Tape::param`].
//!
//! ```
//! use bridgeflow_tensor::{Tape, Tensor};
//!
//! let tape = Tape::new();
//! let x = tape.param(Tensor::vector(vec![1.0, -2.0, 3.0]));
//! let loss = x.square().unwrap().sum_all().unwrap();
//! let grads = tape.backward(loss).unwrap();
//! assert_eq!(grads.get(x).unwrap().data(), &[2.0, -4.0, 6.0]);
//! ```

mod error;
mod gemm;
pub mod gradcheck;
pub mod params;
mod tape;
mod tensor;

pub use error::{Result, TensorError};
pub use gradcheck::{GradCheck, GradCheckReport};
pub use params::ParamSet;
pub use tape::{concat, Gradients, Tape, Var};
pub use tensor::Tensor;
