use std::path::Path;

use super::dataset::read_dataset;
use super::eval::argmax_labels;
use super::normalize::normalize_depth;
use crate::error::{Error, Result};
use crate::io::read_gray_png;
use crate::nn::ops::{crop_to, pad_to};
use crate::nn::{Network, Scalar};
use crate::raster::{DepthMap, LabelMap};

/// Smallest multiple of `divisor` that is at least `n`.
pub fn padded_extent(n: usize, divisor: usize) -> usize {
    n.div_ceil(divisor) * divisor
}

/// Segments one depth map of any size. The normalized map is zero-padded at
/// the bottom/right to the network's divisor and the labels cropped back.
pub fn predict<T: Scalar>(net: &Network<T>, depth: &DepthMap) -> Result<LabelMap> {
    let (h, w) = (depth.height, depth.width);
    if h == 0 || w == 0 {
        return Err(Error::Shape("empty depth map".into()));
    }
    let d = net.config().divisor();
    let x = normalize_depth(depth).cast::<T>();
    let x = pad_to(&x, padded_extent(h, d), padded_extent(w, d))?;
    let probs = net.forward(&x)?;
    argmax_labels(&crop_to(&probs, h, w)?)
}

/// Reads a depth map from an `AFPD` container (sample `index`) or a grayscale
/// PNG (values in [0, 1]).
pub fn read_depth_input(path: &Path, index: usize) -> Result<DepthMap> {
    let mut magic = [0u8; 4];
    {
        use std::io::Read;
        let mut f = std::fs::File::open(path).map_err(|e| Error::file(path, e))?;
        f.read_exact(&mut magic).map_err(|e| Error::file(path, e))?;
    }
    if &magic == super::dataset::MAGIC {
        let ds = read_dataset(path)?;
        let count = ds.samples.len();
        ds.samples
            .into_iter()
            .nth(index)
            .map(|ex| ex.x)
            .ok_or_else(|| Error::Data(format!("sample {index} out of range ({count} samples)")))
    } else {
        read_gray_png(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::NetworkConfig;
    use crate::raster::Raster;

    #[test]
    fn padding_arithmetic() {
        assert_eq!(padded_extent(200, 8), 200);
        assert_eq!(padded_extent(201, 8), 208);
        assert_eq!(padded_extent(800, 8), 800);
        assert_eq!(padded_extent(5, 4), 8);
    }

    #[test]
    fn output_matches_input_extent() {
        let net = Network::<f32>::new(
            NetworkConfig {
                levels: 3,
                base_features: 2,
                ..Default::default()
            },
            1,
        )
        .unwrap();
        let depth = Raster::from_fn(13, 22, |r, c| ((r * c) % 5) as f64);
        let labels = predict(&net, &depth).unwrap();
        assert_eq!((labels.height, labels.width), (13, 22));
        assert_eq!(predict(&net, &depth).unwrap(), labels);
    }
}
