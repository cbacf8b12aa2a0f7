//! Even-odd scanline polygon fill with the pixel-centre coverage rule.

use super::Raster;
use crate::error::{Error, Result};

/// Calls `visit(row, col)` for every pixel of a `height x width` canvas whose
/// centre `(col + 0.5, row + 0.5)` lies inside the polygon.
///
/// Edges are half-open in y and spans half-open in x, so two polygons sharing
/// an edge never both claim a pixel centre lying exactly on it.
pub fn for_each_covered_pixel(
    vertices: &[[f64; 2]],
    height: usize,
    width: usize,
    mut visit: impl FnMut(usize, usize),
) -> Result<()> {
    if vertices.len() < 3 {
        return Err(Error::Geometry(format!(
            "polygon needs at least 3 vertices, got {}",
            vertices.len()
        )));
    }
    if vertices.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Geometry("polygon has non-finite coordinates".into()));
    }

    let (ymin, ymax) = vertices
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v[1]), hi.max(v[1]))
        });
    let row_start = (ymin - 0.5).ceil().max(0.0) as usize;
    let row_end = ((ymax - 0.5).ceil().max(0.0) as usize).min(height);

    let mut crossings: Vec<f64> = Vec::with_capacity(8);
    for row in row_start..row_end {
        let yc = row as f64 + 0.5;
        crossings.clear();
        let n = vertices.len();
        for i in 0..n {
            let [x0, y0] = vertices[i];
            let [x1, y1] = vertices[(i + 1) % n];
            if (y0 <= yc && yc < y1) || (y1 <= yc && yc < y0) {
                crossings.push(x0 + (yc - y0) * (x1 - x0) / (y1 - y0));
            }
        }
        crossings.sort_by(f64::total_cmp);
        for span in crossings.chunks_exact(2) {
            let start = (span[0] - 0.5).ceil().max(0.0);
            let end = (span[1] - 0.5).ceil().min(width as f64);
            if end <= start {
                continue;
            }
            for col in start as usize..end as usize {
                visit(row, col);
            }
        }
    }
    Ok(())
}

/// Sets every covered pixel of `canvas` to `value`; geometry outside the
/// canvas is clipped.
pub fn fill_polygon<T: Clone>(
    vertices: &[[f64; 2]],
    canvas: &mut Raster<T>,
    value: T,
) -> Result<()> {
    let (h, w) = (canvas.height, canvas.width);
    for_each_covered_pixel(vertices, h, w, |r, c| {
        canvas.data[r * w + c] = value.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn count(vertices: &[[f64; 2]], h: usize, w: usize) -> usize {
        let mut canvas = Raster::filled(h, w, 0u8);
        fill_polygon(vertices, &mut canvas, 1).unwrap();
        canvas.data.iter().filter(|&&v| v == 1).count()
    }

    #[test]
    fn rectangle_covers_twelve_pixels() {
        let rect = [[0.0, 0.0], [4.0, 0.0], [4.0, 3.0], [0.0, 3.0]];
        let mut canvas = Raster::filled(6, 6, 0.0);
        fill_polygon(&rect, &mut canvas, 1.0).unwrap();
        assert_eq!(canvas.data.iter().filter(|&&v| v == 1.0).count(), 12);
        assert_eq!(canvas[(2, 3)], 1.0);
        assert_eq!(canvas[(3, 3)], 0.0);
        assert_eq!(canvas[(2, 4)], 0.0);
    }

    #[test]
    fn collinear_polygon_is_empty() {
        assert_eq!(count(&[[0.0, 0.0], [3.0, 3.0], [6.0, 6.0]], 8, 8), 0);
        assert_eq!(count(&[[0.0, 2.5], [7.0, 2.5], [3.0, 2.5]], 8, 8), 0);
    }

    #[test]
    fn shared_edges_tile_exactly() {
        // pixel centres at 2.5 sit exactly on the shared edge
        let left = [[-1.0, -1.0], [2.5, -1.0], [2.5, 9.0], [-1.0, 9.0]];
        let right = [[2.5, -1.0], [9.0, -1.0], [9.0, 9.0], [2.5, 9.0]];
        let mut canvas = Raster::filled(8, 8, 0u8);
        for_each_covered_pixel(&left, 8, 8, |r, c| canvas[(r, c)] += 1).unwrap();
        for_each_covered_pixel(&right, 8, 8, |r, c| canvas[(r, c)] += 1).unwrap();
        assert!(canvas.data.iter().all(|&v| v == 1));
    }

    #[test]
    fn clipping_and_errors() {
        assert_eq!(
            count(
                &[[-10.0, -10.0], [20.0, -10.0], [20.0, 20.0], [-10.0, 20.0]],
                4,
                5
            ),
            20
        );
        let mut canvas = Raster::filled(4, 4, 0u8);
        assert!(matches!(
            fill_polygon(&[[0.0, 0.0], [1.0, 1.0]], &mut canvas, 1),
            Err(Error::Geometry(_))
        ));
        assert!(fill_polygon(&[[0.0, 0.0], [f64::NAN, 1.0], [2.0, 0.0]], &mut canvas, 1).is_err());
    }

    #[test]
    fn self_intersecting_bowtie_uses_even_odd() {
        // a pentagram's inner pentagon is outside under even-odd
        let star: Vec<[f64; 2]> = (0..5)
            .map(|k| {
                let a = -std::f64::consts::FRAC_PI_2 + k as f64 * 4.0 * std::f64::consts::PI / 5.0;
                [16.0 + 14.0 * a.cos(), 16.0 + 14.0 * a.sin()]
            })
            .collect();
        let mut canvas = Raster::filled(32, 32, false);
        fill_polygon(&star, &mut canvas, true).unwrap();
        assert!(!canvas[(16, 16)]);
        assert!(canvas[(5, 16)]);
    }
}
