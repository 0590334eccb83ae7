//! Minimal reverse-mode differentiable numerics: dense tensors, a tape of
//! primitive applications, Xavier initialization, Adam and a plateau
//! learning-rate scheduler.

mod init;
mod nn;
mod optim;
mod tape;
mod tensor;
mod weights;

pub use init::{xavier_bound, xavier_uniform, xavier_uniform_with};
pub use nn::{BoundMlp, Linear, Mlp};
pub use optim::{AdamState, PlateauScheduler};
pub use tape::{sigmoid, Gradients, Tape, Var};
pub use tensor::Tensor;
pub use weights::{NamedTensor, WeightSet, WEIGHTS_FORMAT_VERSION};

#[allow(unused_imports)]
pub(crate) use tape::row_softmax;
