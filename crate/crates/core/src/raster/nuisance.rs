use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{DepthMap, Mask, TextureSource};
use crate::error::{Error, Result};
use crate::scene::{GeneratorConfig, NuisanceParams};

/// Observable map `x = z + ramp + texture + noise`; `z` is left untouched.
///
/// The ramp is zero at the horizontal centre, the top texture is blended over
/// `top_mask` and the bottom texture everywhere else.
pub fn apply_nuisance(
    z: &DepthMap,
    top_mask: &Mask,
    nuisance: &NuisanceParams,
    textures: &TextureSource,
    config: &GeneratorConfig,
) -> Result<DepthMap> {
    let (h, w) = (z.height, z.width);
    if !z.same_shape(top_mask) {
        return Err(Error::Shape("depth map and top mask differ in size".into()));
    }
    let mut x = z.clone();

    let centre = w as f64 / 2.0;
    for r in 0..h {
        for c in 0..w {
            x[(r, c)] += nuisance.ramp_slope * (c as f64 - centre);
        }
    }

    if config.texture_alpha != 0.0 {
        let [top_off, bottom_off] = nuisance.texture_offsets;
        let top = textures.crop(nuisance.texture_top_id, top_off, h, w)?;
        let bottom = textures.crop(nuisance.texture_bottom_id, bottom_off, h, w)?;
        for i in 0..h * w {
            let t = if top_mask.data[i] {
                top.data[i]
            } else {
                bottom.data[i]
            };
            x.data[i] += config.texture_alpha * (t - 0.5);
        }
    }

    if config.noise_sigma > 0.0 {
        let noise = Normal::new(0.0, config.noise_sigma)
            .map_err(|e| Error::Config(format!("noise distribution: {e}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(nuisance.noise_seed);
        for v in x.data.iter_mut() {
            *v += noise.sample(&mut rng);
        }
    }
    Ok(x)
}
