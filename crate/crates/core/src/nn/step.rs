use rayon::prelude::*;

use super::network::Network;
use super::ops;
use super::optim::OptimizerState;
use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};
use crate::raster::LabelMap;

/// One training example: a `[1, H, W, c]` input and a label map. The input
/// may be zero-padded beyond the label extents; padded pixels carry no loss.
pub type Sample<'a, T> = (&'a Tensor<T>, &'a LabelMap);

/// Loss and parameter gradients averaged over `batch`.
///
/// Samples are processed in parallel; gradients are summed in batch order,
/// so the result does not depend on the thread count.
pub fn batch_gradients<T: Scalar>(
    net: &Network<T>,
    batch: &[Sample<'_, T>],
) -> Result<(f64, Vec<Tensor<T>>)> {
    if batch.is_empty() {
        return Err(Error::Data("empty batch".into()));
    }
    let shape = batch[0].0.shape();
    if batch.iter().any(|(x, _)| x.shape() != shape) {
        return Err(Error::Shape(
            "inconsistent input shapes within batch".into(),
        ));
    }
    let per_sample: Vec<(f64, Vec<Tensor<T>>)> = batch
        .par_iter()
        .map(|(x, labels)| {
            let (probs, cache) = net.forward_cached(x)?;
            let [_, ph, pw, _] = probs.dims4()?;
            if labels.height > ph || labels.width > pw {
                return Err(Error::Shape(format!(
                    "labels {}x{} exceed network output {ph}x{pw}",
                    labels.height, labels.width
                )));
            }
            let (loss, grad) = if (labels.height, labels.width) == (ph, pw) {
                ops::loss_and_grad(&probs, &labels.data)?
            } else {
                let cropped = ops::crop_to(&probs, labels.height, labels.width)?;
                let (loss, grad) = ops::loss_and_grad(&cropped, &labels.data)?;
                (loss, ops::pad_to(&grad, ph, pw)?)
            };
            Ok((loss, net.backward(&cache, &grad)?))
        })
        .collect::<Result<_>>()?;

    let scale = T::of(1.0 / batch.len() as f64);
    let mut iter = per_sample.into_iter();
    let (mut loss, mut grads) = iter.next().expect("non-empty batch");
    for (l, g) in iter {
        loss += l;
        for (acc, gi) in grads.iter_mut().zip(&g) {
            acc.add_scaled(gi, T::one());
        }
    }
    for g in &mut grads {
        for v in g.data_mut() {
            *v *= scale;
        }
    }
    Ok((loss / batch.len() as f64, grads))
}

/// Forward/backward over the batch followed by one optimizer update. Returns
/// the mean loss before the update.
pub fn train_step<T: Scalar>(
    net: &mut Network<T>,
    opt: &mut OptimizerState<T>,
    batch: &[Sample<'_, T>],
) -> Result<f64> {
    let (loss, grads) = batch_gradients(net, batch)?;
    if !loss.is_finite() {
        return Err(Error::Diverged(format!("non-finite batch loss {loss}")));
    }
    opt.apply(net.params_mut(), &grads)?;
    Ok(loss)
}
