use crate::nn::Tensor;
use crate::raster::DepthMap;

/// Per-image standardization to zero mean and unit variance, as a
/// `[1, h, w, 1]` tensor. Near-constant maps become all zeros.
pub fn normalize_depth(x: &DepthMap) -> Tensor<f32> {
    let n = x.len().max(1) as f64;
    let mean = x.data.iter().sum::<f64>() / n;
    let var = x.data.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    let data = if std < 1e-8 {
        vec![0.0; x.len()]
    } else {
        x.data.iter().map(|v| ((v - mean) / std) as f32).collect()
    };
    Tensor::from_vec(&[1, x.height, x.width, 1], data).expect("raster length matches extents")
}
