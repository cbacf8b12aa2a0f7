use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::{generate_in_memory, read_dataset, Dataset, TextureSpec};
use super::eval::{evaluate, EvalReport};
use super::infer::padded_extent;
use super::normalize::normalize_depth;
use crate::error::{Error, Result};
use crate::nn::ops::{loss_and_grad, pad_to};
use crate::nn::{
    save_checkpoint, train_step, Network, NetworkConfig, OptimizerConfig, OptimizerState, Tensor,
};
use crate::raster::{DepthMap, LabelMap};
use crate::rng::{stream_rng, validation_seed};
use crate::scene::GeneratorConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub generator: GeneratorConfig,
    pub network: NetworkConfig,
    pub optimizer: OptimizerConfig,
    pub textures: TextureSpec,
    pub epochs: usize,
    pub batch_size: usize,
    pub train_count: usize,
    pub val_count: usize,
    pub seed: u64,
    /// Pre-generated training set; generated in memory when absent.
    pub train_data: Option<PathBuf>,
    pub val_data: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub metrics_log: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            generator: GeneratorConfig::desk_scale(),
            network: NetworkConfig::desk_scale(),
            optimizer: OptimizerConfig::default(),
            textures: TextureSpec::default(),
            epochs: 10,
            batch_size: 8,
            train_count: 500,
            val_count: 100,
            seed: 0,
            train_data: None,
            val_data: None,
            checkpoint: None,
            metrics_log: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.generator.validate()?;
        self.network.validate()?;
        self.optimizer.validate()?;
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 || self.train_count == 0 || self.val_count == 0 {
            return Err(Error::Config(
                "batch_size, train_count and val_count must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// One line of the metrics log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    /// Fraction of correctly classified validation pixels.
    pub val_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    /// Validation loss of the freshly initialized network.
    pub initial_val_loss: f64,
    pub epochs: Vec<EpochMetrics>,
    pub final_eval: EvalReport,
}

/// Normalized input padded to the network divisor.
fn prepare_input(depth: &DepthMap, divisor: usize) -> Result<Tensor<f32>> {
    let x = normalize_depth(depth);
    pad_to(
        &x,
        padded_extent(depth.height, divisor),
        padded_extent(depth.width, divisor),
    )
}

/// Mean cross-entropy of `net` on the given maps.
pub fn mean_loss(net: &Network<f32>, samples: &[(&DepthMap, &LabelMap)]) -> Result<f64> {
    let d = net.config().divisor();
    let losses = samples
        .par_iter()
        .map(|(x, y)| {
            let probs = net.forward(&prepare_input(x, d)?)?;
            let probs = crate::nn::ops::crop_to(&probs, y.height, y.width)?;
            Ok(loss_and_grad(&probs, &y.data)?.0)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len().max(1) as f64)
}

/// Trains a fresh network on in-memory datasets. `on_epoch` sees each
/// epoch's metrics as soon as they are known.
pub fn fit(
    config: &TrainConfig,
    train: &Dataset,
    val: &Dataset,
    mut on_epoch: impl FnMut(&EpochMetrics) -> Result<()>,
) -> Result<(Network<f32>, TrainReport)> {
    config.validate()?;
    if train.samples.is_empty() || val.samples.is_empty() {
        return Err(Error::Data(
            "training and validation sets must be non-empty".into(),
        ));
    }
    let mut net = Network::<f32>::new(config.network.clone(), config.seed)?;
    let mut opt = OptimizerState::new(config.optimizer.clone(), net.params())?;
    let divisor = config.network.divisor();

    let inputs = train
        .samples
        .par_iter()
        .map(|ex| prepare_input(&ex.x, divisor))
        .collect::<Result<Vec<_>>>()?;
    let val_pairs: Vec<(&DepthMap, &LabelMap)> =
        val.samples.iter().map(|ex| (&ex.x, &ex.y)).collect();
    let initial_val_loss = mean_loss(&net, &val_pairs)?;

    let mut order: Vec<usize> = (0..train.samples.len()).collect();
    let mut epochs = Vec::with_capacity(config.epochs);
    let mut final_eval = None;
    for epoch in 1..=config.epochs {
        order.shuffle(&mut stream_rng(config.seed, 0x5eed_0000 + epoch as u64));
        let mut loss_sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<_> = chunk
                .iter()
                .map(|&i| (&inputs[i], &train.samples[i].y))
                .collect();
            let loss = train_step(&mut net, &mut opt, &batch)?;
            loss_sum += loss * chunk.len() as f64;
        }
        let train_loss = loss_sum / order.len() as f64;
        let report = evaluate(&net, val)?;
        let metrics = EpochMetrics {
            epoch,
            train_loss,
            val_accuracy: report.accuracy / 100.0,
        };
        on_epoch(&metrics)?;
        epochs.push(metrics);
        final_eval = Some(report);
    }

    Ok((
        net,
        TrainReport {
            initial_val_loss,
            epochs,
            final_eval: final_eval.expect("epochs >= 1"),
        },
    ))
}

fn load_or_generate(
    path: Option<&Path>,
    config: &TrainConfig,
    count: usize,
    seed: u64,
) -> Result<Dataset> {
    match path {
        Some(p) => read_dataset(p),
        None => generate_in_memory(&config.generator, count, seed, &config.textures),
    }
}

/// Full training run: datasets, epochs, metrics log (JSON lines) and final
/// checkpoint.
pub fn train(config: &TrainConfig) -> Result<(Network<f32>, TrainReport)> {
    config.validate()?;
    let train_set = load_or_generate(
        config.train_data.as_deref(),
        config,
        config.train_count,
        config.seed,
    )?;
    let val_set = load_or_generate(
        config.val_data.as_deref(),
        config,
        config.val_count,
        validation_seed(config.seed),
    )?;

    let mut log = match &config.metrics_log {
        Some(path) => Some((
            BufWriter::new(File::create(path).map_err(|e| Error::file(path, e))?),
            path,
        )),
        None => None,
    };
    let (net, report) = fit(config, &train_set, &val_set, |m| {
        if !m.train_loss.is_finite() {
            return Err(Error::Diverged(format!(
                "epoch {} train loss {}",
                m.epoch, m.train_loss
            )));
        }
        if let Some((out, path)) = log.as_mut() {
            serde_json::to_writer(&mut *out, m)?;
            out.write_all(b"\n")
                .map_err(|e| Error::file(path.as_path(), e))?;
            out.flush().map_err(|e| Error::file(path.as_path(), e))?;
        }
        Ok(())
    })?;

    if let Some(path) = &config.checkpoint {
        save_checkpoint(path, &net)?;
    }
    Ok((net, report))
}
