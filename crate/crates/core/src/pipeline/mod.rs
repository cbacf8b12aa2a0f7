//! Dataset production, training orchestration, evaluation and inference.

pub mod dataset;
pub mod eval;
pub mod infer;
pub mod normalize;
pub mod train;

pub use dataset::{
    generate_dataset, generate_in_memory, read_dataset, write_dataset, Dataset, Provenance,
    TextureSpec,
};
pub use eval::{argmax_labels, evaluate, ConfusionCounts, EvalReport};
pub use infer::{predict, read_depth_input};
pub use normalize::normalize_depth;
pub use train::{fit, train, EpochMetrics, TrainConfig, TrainReport};
