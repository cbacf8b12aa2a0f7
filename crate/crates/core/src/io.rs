//! PNG import/export of depth and label rasters.

use std::path::Path;

use image::{GrayImage, ImageFormat, RgbImage};

use crate::error::{Error, Result};
use crate::raster::{Class, DepthMap, LabelMap, Raster};

fn image_err(path: &Path) -> impl FnOnce(image::ImageError) -> Error + '_ {
    move |source| Error::Image {
        path: path.to_path_buf(),
        source,
    }
}

/// 8-bit grayscale, min-max scaled per image (a constant map becomes black).
pub fn write_depth_png(path: &Path, depth: &DepthMap) -> Result<()> {
    let (lo, hi) = depth
        .data
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        });
    let span = hi - lo;
    let pixels: Vec<u8> = depth
        .data
        .iter()
        .map(|&v| {
            if span > 0.0 {
                ((v - lo) / span * 255.0).round() as u8
            } else {
                0
            }
        })
        .collect();
    let img = GrayImage::from_raw(depth.width as u32, depth.height as u32, pixels)
        .expect("buffer length matches dimensions");
    img.save_with_format(path, ImageFormat::Png)
        .map_err(image_err(path))
}

pub fn write_label_png(path: &Path, labels: &LabelMap) -> Result<()> {
    let mut pixels = Vec::with_capacity(labels.len() * 3);
    for &id in &labels.data {
        let class = Class::from_id(id)
            .ok_or_else(|| Error::Data(format!("label id {id} is not a known class")))?;
        pixels.extend_from_slice(&class.color());
    }
    let img = RgbImage::from_raw(labels.width as u32, labels.height as u32, pixels)
        .expect("buffer length matches dimensions");
    img.save_with_format(path, ImageFormat::Png)
        .map_err(image_err(path))
}

/// Inverse of [`write_label_png`]; any colour outside the palette is an error.
pub fn read_label_png(path: &Path) -> Result<LabelMap> {
    let img = image::open(path).map_err(image_err(path))?.to_rgb8();
    let (w, h) = img.dimensions();
    let mut data = Vec::with_capacity((w * h) as usize);
    for px in img.pixels() {
        let class = Class::from_color(px.0).ok_or_else(|| {
            Error::Data(format!(
                "{}: colour {:?} is not in the label palette",
                path.display(),
                px.0
            ))
        })?;
        data.push(class.id());
    }
    Raster::from_vec(h as usize, w as usize, data)
}

/// Grayscale image of any bit depth mapped to [0, 1].
pub fn read_gray_png(path: &Path) -> Result<Raster<f64>> {
    let img = image::open(path).map_err(image_err(path))?.to_luma16();
    let (w, h) = img.dimensions();
    let data = img
        .into_raw()
        .into_iter()
        .map(|v| v as f64 / 65535.0)
        .collect();
    Raster::from_vec(h as usize, w as usize, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.png");
        let labels = Raster::from_fn(7, 9, |r, c| ((r * 3 + c) % 4) as u8);
        write_label_png(&path, &labels).unwrap();
        assert_eq!(read_label_png(&path).unwrap(), labels);

        let bad = Raster::filled(2, 2, 9u8);
        assert!(matches!(write_label_png(&path, &bad), Err(Error::Data(_))));
    }

    #[test]
    fn depth_png_is_min_max_scaled() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("depth.png");
        let depth = Raster::from_fn(4, 5, |_, c| c as f64 * 0.5 - 1.0);
        write_depth_png(&path, &depth).unwrap();
        let back = read_gray_png(&path).unwrap();
        assert_eq!(back[(0, 0)], 0.0);
        assert_eq!(back[(3, 4)], 1.0);

        let missing = dir.path().join("nope.png");
        assert!(matches!(read_gray_png(&missing), Err(Error::Image { .. })));
    }
}
