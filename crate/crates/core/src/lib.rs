//! Synthetic depth maps of automated-fiber-placement lay-ups, a from-scratch
//! U-Net variant for per-pixel defect segmentation, and the tooling to train
//! and evaluate it.
//!
//! * [`scene`] draws the latent description of one scene.
//! * [`raster`] turns it into a clean depth map, labels and a noisy observable.
//! * [`nn`] holds the tensor kernels, the network and its optimizers.
//! * [`pipeline`] produces datasets, trains, evaluates and runs inference.
//! * [`cli`] is the `afpseg` command-line front end.

pub mod cli;
pub mod error;
pub mod io;
pub mod nn;
pub mod pipeline;
pub mod raster;
pub mod rng;
pub mod scene;

pub use error::{Error, Result};
pub use raster::{render_scene, Class, DepthMap, LabelMap, TextureSource, TrainingExample};
pub use scene::{sample_scene, GeneratorConfig, SceneSample};
