//! Minimal dense-tensor deep-learning engine: forward and backward passes for
//! every layer the column template needs, exact shape inference, and the
//! softmax cross-entropy loss. Everything runs in double precision so
//! finite-difference gradient checks are trustworthy.

pub mod checkpoint;
pub mod layers;
pub mod loss;
pub mod shapes;
pub mod tensor;

pub use layers::{BatchNorm2d, Conv2d, Dense, Dropout, MaxPool2, Mode, Relu};
pub use loss::{argmax_rows, cross_entropy_with_grad, one_hot, softmax};
pub use shapes::{conv_out_side, pool_out_side, same_pad};
pub use tensor::Tensor;
