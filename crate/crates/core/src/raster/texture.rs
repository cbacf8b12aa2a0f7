//! Texture sources for the blend layer: a directory of grayscale photos or
//! seeded multi-octave value noise.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Raster;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseDescriptor {
    pub octaves: u32,
    /// Lattice frequency of the first octave in cycles per pixel.
    pub base_frequency: f64,
    pub seed: u64,
}

impl Default for NoiseDescriptor {
    fn default() -> Self {
        Self {
            octaves: 5,
            base_frequency: 1.0 / 48.0,
            seed: 0x7e57_u64,
        }
    }
}

/// Extent of the noise plane that procedural crop offsets range over.
const PROCEDURAL_EXTENT: f64 = 4096.0;

#[derive(Clone, Debug, PartialEq)]
pub enum TextureSource {
    Images(Vec<Raster<f64>>),
    Procedural {
        descriptor: NoiseDescriptor,
        variants: usize,
    },
}

impl Default for TextureSource {
    fn default() -> Self {
        TextureSource::Procedural {
            descriptor: NoiseDescriptor::default(),
            variants: 32,
        }
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn lattice_value(seed: u64, octave: u32, ix: i64, iy: i64) -> f64 {
    let h = splitmix(seed ^ splitmix(octave as u64 ^ splitmix(ix as u64 ^ splitmix(iy as u64))));
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn smoothstep(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

/// Multi-octave value noise over the window starting at `origin`. Octaves are
/// a convex combination of values in [0, 1], so the output stays in [0, 1].
pub fn procedural_texture(
    width: usize,
    height: usize,
    descriptor: &NoiseDescriptor,
    origin: [f64; 2],
) -> Result<Raster<f64>> {
    if descriptor.octaves == 0 {
        return Err(Error::Config("noise needs at least one octave".into()));
    }
    if !(descriptor.base_frequency.is_finite() && descriptor.base_frequency >= 0.0) {
        return Err(Error::Config(
            "noise base_frequency must be finite and >= 0".into(),
        ));
    }
    let weights: Vec<f64> = (0..descriptor.octaves)
        .map(|o| 0.5f64.powi(o as i32))
        .collect();
    let total: f64 = weights.iter().sum();

    Ok(Raster::from_fn(height, width, |r, c| {
        let mut acc = 0.0;
        for (o, weight) in weights.iter().enumerate() {
            let f = descriptor.base_frequency * (1u64 << o) as f64;
            let x = (c as f64 + origin[0]) * f;
            let y = (r as f64 + origin[1]) * f;
            let (x0, y0) = (x.floor(), y.floor());
            let (tx, ty) = (smoothstep(x - x0), smoothstep(y - y0));
            let (ix, iy) = (x0 as i64, y0 as i64);
            let v = |dx: i64, dy: i64| lattice_value(descriptor.seed, o as u32, ix + dx, iy + dy);
            let top = v(0, 0) + (v(1, 0) - v(0, 0)) * tx;
            let bottom = v(0, 1) + (v(1, 1) - v(0, 1)) * tx;
            acc += weight * (top + (bottom - top) * ty);
        }
        (acc / total).clamp(0.0, 1.0)
    }))
}

impl TextureSource {
    /// Loads every `.png` under `dir` (sorted by file name) as grayscale in
    /// [0, 1]. An empty directory yields the procedural source when
    /// `fallback` is set and a configuration error otherwise.
    pub fn from_dir(dir: &Path, fallback: bool) -> Result<Self> {
        let entries = std::fs::read_dir(dir).map_err(|e| Error::file(dir, e))?;
        let mut paths = Vec::new();
        for entry in entries {
            let path = entry.map_err(|e| Error::file(dir, e))?.path();
            let is_png = path
                .extension()
                .is_some_and(|ext| ext.eq_ignore_ascii_case("png"));
            if is_png {
                paths.push(path);
            }
        }
        paths.sort();
        if paths.is_empty() {
            return if fallback {
                Ok(Self::default())
            } else {
                Err(Error::Config(format!(
                    "no PNG textures in {} and procedural fallback disabled",
                    dir.display()
                )))
            };
        }
        let images = paths
            .iter()
            .map(|p| crate::io::read_gray_png(p))
            .collect::<Result<Vec<_>>>()?;
        Ok(TextureSource::Images(images))
    }

    pub fn len(&self) -> usize {
        match self {
            TextureSource::Images(images) => images.len(),
            TextureSource::Procedural { variants, .. } => *variants,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `height x width` window of texture `id`; `offset` holds unit fractions
    /// of the admissible crop origin range.
    pub fn crop(
        &self,
        id: usize,
        offset: [f64; 2],
        height: usize,
        width: usize,
    ) -> Result<Raster<f64>> {
        match self {
            TextureSource::Images(images) => {
                let img = images.get(id).ok_or_else(|| {
                    Error::Config(format!(
                        "texture id {id} out of range ({} images)",
                        images.len()
                    ))
                })?;
                if img.height < height || img.width < width {
                    return Err(Error::Config(format!(
                        "texture {id} is {}x{}, smaller than the {height}x{width} canvas",
                        img.height, img.width
                    )));
                }
                let pick =
                    |frac: f64, slack: usize| ((frac * (slack + 1) as f64) as usize).min(slack);
                let c0 = pick(offset[0], img.width - width);
                let r0 = pick(offset[1], img.height - height);
                Ok(Raster::from_fn(height, width, |r, c| img[(r0 + r, c0 + c)]))
            }
            TextureSource::Procedural {
                descriptor,
                variants,
            } => {
                if id >= *variants {
                    return Err(Error::Config(format!(
                        "texture id {id} out of range ({variants} variants)"
                    )));
                }
                let variant = NoiseDescriptor {
                    seed: descriptor.seed ^ splitmix(id as u64),
                    ..descriptor.clone()
                };
                let origin = [
                    (offset[0] * PROCEDURAL_EXTENT).floor(),
                    (offset[1] * PROCEDURAL_EXTENT).floor(),
                ];
                procedural_texture(width, height, &variant, origin)
            }
        }
    }
}
