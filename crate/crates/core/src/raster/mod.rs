//! Plain depth map, labels and the randomized observable map.

mod distance;
mod fuzzball;
mod nuisance;
mod polygon;
mod texture;
mod tows;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::SceneSample;

pub use distance::{distance_to_nearest, one_sided_distance_transform};
pub use fuzzball::{render_fuzzball, FIBER_DEPTH};
pub use nuisance::apply_nuisance;
pub use polygon::{fill_polygon, for_each_covered_pixel};
pub use texture::{procedural_texture, NoiseDescriptor, TextureSource};
pub use tows::{
    rasterize_tows, rasterize_tows_with, sigmoid_profile, tow_polygon, transition_px, TowRaster,
};

/// Pixel classes. The discriminant is the on-disk class id.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum Class {
    Gap = 0,
    Tow = 1,
    Overlap = 2,
    Fuzzball = 3,
}

impl Class {
    pub const COUNT: usize = 4;
    pub const ALL: [Class; 4] = [Class::Gap, Class::Tow, Class::Overlap, Class::Fuzzball];

    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn from_id(id: u8) -> Option<Class> {
        Self::ALL.get(id as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Class::Gap => "Gap",
            Class::Tow => "Tow",
            Class::Overlap => "Overlap",
            Class::Fuzzball => "Fuzzball",
        }
    }

    /// Display colour: gap red, tow green, overlap blue, fuzzball yellow.
    pub fn color(self) -> [u8; 3] {
        match self {
            Class::Gap => [255, 0, 0],
            Class::Tow => [0, 255, 0],
            Class::Overlap => [0, 0, 255],
            Class::Fuzzball => [255, 255, 0],
        }
    }

    pub fn from_color(rgb: [u8; 3]) -> Option<Class> {
        Self::ALL.into_iter().find(|c| c.color() == rgb)
    }
}

/// Dense row-major 2-D raster.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Raster<T> {
    pub height: usize,
    pub width: usize,
    pub data: Vec<T>,
}

pub type DepthMap = Raster<f64>;
pub type LabelMap = Raster<u8>;
pub type Mask = Raster<bool>;

impl<T: Clone> Raster<T> {
    pub fn filled(height: usize, width: usize, value: T) -> Self {
        Self {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    pub fn from_vec(height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::Shape(format!(
                "raster {height}x{width} needs {} values, got {}",
                height * width,
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Self {
            height,
            width,
            data,
        }
    }

    pub fn same_shape<U>(&self, other: &Raster<U>) -> bool {
        self.height == other.height && self.width == other.width
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

impl<T> std::ops::Index<(usize, usize)> for Raster<T> {
    type Output = T;
    fn index(&self, (r, c): (usize, usize)) -> &T {
        &self.data[r * self.width + c]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for Raster<T> {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut T {
        &mut self.data[r * self.width + c]
    }
}

impl LabelMap {
    /// Fraction of pixels per class.
    pub fn class_frequencies(&self) -> [f64; Class::COUNT] {
        let mut counts = [0usize; Class::COUNT];
        for &id in &self.data {
            counts[id as usize] += 1;
        }
        let n = self.data.len().max(1) as f64;
        counts.map(|c| c as f64 / n)
    }
}

/// One rendered scene: observable depth `x`, ground truth `y` and optionally
/// the clean depth `z`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingExample {
    pub x: DepthMap,
    pub y: LabelMap,
    pub z: Option<DepthMap>,
}

/// Renders the full observable example for a sampled scene. Labels are final
/// before the nuisance layer runs.
pub fn render_scene(scene: &SceneSample, textures: &TextureSource) -> Result<TrainingExample> {
    let config = &scene.config;
    let TowRaster {
        mut depth,
        mut labels,
        top_mask,
    } = rasterize_tows(&scene.grid, config)?;
    if let Some(fuzzball) = &scene.fuzzball {
        render_fuzzball(fuzzball, &mut depth, &mut labels);
    }
    let x = apply_nuisance(&depth, &top_mask, &scene.nuisance, textures, config)?;
    Ok(TrainingExample {
        x,
        y: labels,
        z: Some(depth),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{sample_scene, GeneratorConfig};

    #[test]
    fn palette_round_trip() {
        for c in Class::ALL {
            assert_eq!(Class::from_color(c.color()), Some(c));
            assert_eq!(Class::from_id(c.id()), Some(c));
        }
        assert_eq!(Class::from_id(4), None);
    }

    #[test]
    fn defect_free_scene_without_nuisance_is_flat_tow() {
        let cfg = GeneratorConfig {
            shift_probability: 0.0,
            fuzzball_probability: 0.0,
            jitter_rel_sigma: 0.0,
            ..GeneratorConfig::paper_scale().without_nuisance()
        };
        let scene = sample_scene(&cfg, 3, 1).unwrap();
        let ex = render_scene(&scene, &TextureSource::default()).unwrap();
        assert!(ex.x.data.iter().all(|&v| v == 1.0));
        assert!(ex.y.data.iter().all(|&l| l == Class::Tow.id()));
    }

    #[test]
    fn render_is_deterministic_and_labels_ignore_nuisance() {
        let cfg = GeneratorConfig::desk_scale();
        let textures = TextureSource::default();
        let scene = sample_scene(&cfg, 17, textures.len()).unwrap();
        let a = render_scene(&scene, &textures).unwrap();
        let b = render_scene(&scene, &textures).unwrap();
        assert_eq!(a, b);

        let mut plain = rasterize_tows(&scene.grid, &cfg).unwrap();
        render_fuzzball(
            scene.fuzzball.as_ref().unwrap(),
            &mut plain.depth,
            &mut plain.labels,
        );
        assert_eq!(plain.labels, a.y);
        assert_eq!(Some(plain.depth), a.z);
        assert_ne!(a.x, a.z.clone().unwrap());
    }
}
