//! A small dense-tensor engine with a recorded tape for reverse-mode
//! gradients, the layers a vision transformer needs, AdamW, learning-rate
//! scheduling, early stopping and a binary checkpoint format.

pub mod checkpoint;
pub mod gradcheck;
pub mod layers;
pub mod optim;
pub mod params;
pub mod schedule;
pub mod tape;
pub mod tensor;

pub use params::{Param, ParamId, ParamStore};
pub use tape::{Tape, Var};
pub use tensor::{Scalar, Tensor};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("{op}: shape mismatch between {left:?} and {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("backward needs a scalar loss, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("data length {len} does not match shape {shape:?}")]
    BadData { len: usize, shape: Vec<usize> },
}

pub type Result<T> = std::result::Result<T, NnError>;
