//! Tensors, a tape-based reverse-mode engine, loss, ADAM and gradient checks.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod model;
pub mod ops;
pub mod param;
pub mod tape;
pub mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{load_params, read_params, save_params, write_params};
pub use gradcheck::{gradient_check, GradCheckReport};
pub use model::{argmax, logits, loss_and_gradients, Classifier, LinearClassifier};
pub use ops::{
    contiguous_groups, cross_entropy, fully_connected, gather_rows, max_over_groups, max_pool_groups, relu,
    softmax_cross_entropy,
};
pub use param::{uniform_init, Gradients, ParamId, ParamStore, Parameter};
pub use tape::{Backward, GradSink, Tape, Var};
pub use tensor::Tensor;
