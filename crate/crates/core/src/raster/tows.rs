use super::distance::distance_to_nearest;
use super::polygon::for_each_covered_pixel;
use super::{Class, DepthMap, LabelMap, Mask, Raster};
use crate::error::{Error, Result};
use crate::scene::{ControlGrid, GeneratorConfig};

/// Width of the buried-edge depth transition relative to the tow width
/// (6 px for 36 px tows).
const TRANSITION_REL: f64 = 6.0 / 36.0;

pub fn transition_px(config: &GeneratorConfig) -> f64 {
    TRANSITION_REL * config.tow_width_px
}

/// Logistic ramp centred on `transition_px / 2` with slope `8 / transition_px`,
/// so it runs from about 0.018 at `d = 0` to about 0.982 at `d = transition_px`.
pub fn sigmoid_profile(d: f64, transition_px: f64) -> Result<f64> {
    if !(transition_px > 0.0) {
        return Err(Error::Config(format!(
            "sigmoid transition must be positive, got {transition_px}"
        )));
    }
    let k = 8.0 / transition_px;
    Ok(1.0 / (1.0 + (-k * (d - transition_px / 2.0)).exp()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct TowRaster {
    pub depth: DepthMap,
    pub labels: LabelMap,
    /// Footprints of every tow lying on top of some other tow.
    pub top_mask: Mask,
}

/// Outline of one tow: a strip of width `t` centred on its control points,
/// extended one tow width past the first and last row so the tow ends never
/// show up inside the map.
pub fn tow_polygon(grid: &ControlGrid, col: usize) -> Vec<[f64; 2]> {
    let half = grid.tow_width / 2.0;
    let mut centre: Vec<[f64; 2]> = grid.column(col).collect();
    let first = centre[0];
    let last = centre[centre.len() - 1];
    centre.insert(0, [first[0], first[1] - grid.tow_width]);
    centre.push([last[0], last[1] + grid.tow_width]);

    let mut outline: Vec<[f64; 2]> = centre.iter().map(|p| [p[0] - half, p[1]]).collect();
    outline.extend(centre.iter().rev().map(|p| [p[0] + half, p[1]]));
    outline
}

pub fn rasterize_tows(grid: &ControlGrid, config: &GeneratorConfig) -> Result<TowRaster> {
    rasterize_tows_with(grid, config, transition_px(config))
}

/// Plain depth and labels of the tow layer.
///
/// The shifted column is laid first and every other tow left to right, so a
/// later tow lies on top. Inside an overlap the depth climbs from the buried
/// edge as `1 + sigmoid(d)`, with `d` measured only towards the part of the
/// top tow that covers nothing else; the top tow's own edge stays a sharp
/// step.
pub fn rasterize_tows_with(
    grid: &ControlGrid,
    config: &GeneratorConfig,
    transition_px: f64,
) -> Result<TowRaster> {
    sigmoid_profile(0.0, transition_px)?;
    let (h, w) = (config.height_px as usize, config.width_px as usize);

    let mut order: Vec<usize> = Vec::with_capacity(grid.columns);
    order.extend(grid.shifted_column);
    order.extend((0..grid.columns).filter(|&c| Some(c) != grid.shifted_column));

    let mut coverage: Raster<u8> = Raster::filled(h, w, 0);
    let mut overlap_depth: Raster<f64> = Raster::filled(h, w, 0.0);
    let mut top_mask: Mask = Raster::filled(h, w, false);
    let mut footprint: Mask = Raster::filled(h, w, false);

    for col in order {
        footprint.data.fill(false);
        let mut any = false;
        for_each_covered_pixel(&tow_polygon(grid, col), h, w, |r, c| {
            footprint[(r, c)] = true;
            any = true;
        })?;
        if !any {
            continue;
        }

        let exclusive = Raster::from_fn(h, w, |r, c| footprint[(r, c)] && coverage[(r, c)] == 0);
        let overlaps = footprint
            .data
            .iter()
            .zip(&coverage.data)
            .any(|(&f, &cov)| f && cov > 0);
        if overlaps {
            let dist = distance_to_nearest(&exclusive);
            for i in 0..h * w {
                if footprint.data[i] && coverage.data[i] > 0 {
                    let d = (dist.data[i] - 0.5).max(0.0);
                    let z = 1.0 + sigmoid_profile(d, transition_px)?;
                    overlap_depth.data[i] = overlap_depth.data[i].max(z);
                }
            }
            for (t, &f) in top_mask.data.iter_mut().zip(&footprint.data) {
                *t |= f;
            }
        }
        for (cov, &f) in coverage.data.iter_mut().zip(&footprint.data) {
            *cov = cov.saturating_add(f as u8);
        }
    }

    let mut depth = Raster::filled(h, w, 0.0);
    let mut labels = Raster::filled(h, w, Class::Gap.id());
    for i in 0..h * w {
        match coverage.data[i] {
            0 => {}
            1 => {
                depth.data[i] = 1.0;
                labels.data[i] = Class::Tow.id();
            }
            _ => {
                depth.data[i] = overlap_depth.data[i];
                labels.data[i] = Class::Overlap.id();
            }
        }
    }
    Ok(TowRaster {
        depth,
        labels,
        top_mask,
    })
}
