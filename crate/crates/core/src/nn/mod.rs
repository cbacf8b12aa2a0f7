//! Dense tensor kernels and the segmentation network.

pub mod checkpoint;
pub mod gradcheck;
pub mod network;
pub mod ops;
pub mod optim;
pub mod step;
pub mod tensor;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use gradcheck::{gradient_check, perturb_for_check, GradCheckReport};
pub use network::{Network, NetworkConfig, Param};
pub use optim::{OptimizerConfig, OptimizerKind, OptimizerState};
pub use step::{batch_gradients, train_step, Sample};
pub use tensor::{Scalar, Tensor};
