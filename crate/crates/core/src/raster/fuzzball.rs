use super::{Class, DepthMap, LabelMap};
use crate::scene::FuzzballGeometry;

/// Height added by one fiber crossing a pixel.
pub const FIBER_DEPTH: f64 = 0.15;

/// Integer Bresenham line between the pixels containing `p0` and `p1`.
pub(crate) fn bresenham(p0: [f64; 2], p1: [f64; 2], mut visit: impl FnMut(i64, i64)) {
    let (mut x, mut y) = (p0[0].floor() as i64, p0[1].floor() as i64);
    let (x1, y1) = (p1[0].floor() as i64, p1[1].floor() as i64);
    let dx = (x1 - x).abs();
    let dy = -(y1 - y).abs();
    let sx = if x < x1 { 1 } else { -1 };
    let sy = if y < y1 { 1 } else { -1 };
    let mut err = dx + dy;
    loop {
        visit(x, y);
        if x == x1 && y == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

/// Accumulates each fiber as a one-pixel line; touched pixels become fuzzball
/// whatever they were before.
pub fn render_fuzzball(geom: &FuzzballGeometry, depth: &mut DepthMap, labels: &mut LabelMap) {
    let (h, w) = (depth.height as i64, depth.width as i64);
    for fiber in &geom.fibers {
        bresenham(fiber.p0, fiber.p1, |x, y| {
            if (0..w).contains(&x) && (0..h).contains(&y) {
                let i = (y * w + x) as usize;
                depth.data[i] += FIBER_DEPTH;
                labels.data[i] = Class::Fuzzball.id();
            }
        });
    }
}
