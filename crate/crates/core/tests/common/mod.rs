//! Brute-force reference implementations shared by the integration tests.
#![allow(dead_code)]

use afpseg::nn::Tensor;
use afpseg::raster::{Mask, Raster};

/// Even-odd crossing test for the point `p` (x, y).
pub fn point_in_polygon(p: [f64; 2], poly: &[[f64; 2]]) -> bool {
    let mut inside = false;
    let mut j = poly.len() - 1;
    for i in 0..poly.len() {
        let (a, b) = (poly[i], poly[j]);
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
            if p[0] < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// A pixel is covered iff its centre is inside.
pub fn naive_fill(poly: &[[f64; 2]], h: usize, w: usize) -> Mask {
    Raster::from_fn(h, w, |r, c| {
        point_in_polygon([c as f64 + 0.5, r as f64 + 0.5], poly)
    })
}

/// Distance from each mask pixel to the nearest pixel outside the mask, with
/// everything beyond the canvas counting as outside.
pub fn naive_one_sided_edt(mask: &Mask) -> Raster<f64> {
    let (h, w) = (mask.height as i64, mask.width as i64);
    Raster::from_fn(mask.height, mask.width, |r, c| {
        if !mask[(r, c)] {
            return 0.0;
        }
        let (r, c) = (r as i64, c as i64);
        let mut best = f64::INFINITY;
        for rr in -1..=h {
            for cc in -1..=w {
                let outside =
                    rr < 0 || cc < 0 || rr >= h || cc >= w || !mask[(rr as usize, cc as usize)];
                if outside {
                    best = best.min((((rr - r).pow(2) + (cc - c).pow(2)) as f64).sqrt());
                }
            }
        }
        best
    })
}

/// Direct seven-fold loop, zero padding, stride 1.
pub fn naive_conv(x: &Tensor<f64>, k: &Tensor<f64>, b: &Tensor<f64>, pad: usize) -> Tensor<f64> {
    let [n, h, w, ci] = [x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]];
    let [kh, kw, _, co] = [k.shape()[0], k.shape()[1], k.shape()[2], k.shape()[3]];
    let oh = h + 2 * pad + 1 - kh;
    let ow = w + 2 * pad + 1 - kw;
    let mut out = Tensor::zeros(&[n, oh, ow, co]);
    for s in 0..n {
        for i in 0..oh {
            for j in 0..ow {
                for o in 0..co {
                    let mut acc = b.data()[o];
                    for di in 0..kh {
                        for dj in 0..kw {
                            let (yi, xj) =
                                ((i + di) as i64 - pad as i64, (j + dj) as i64 - pad as i64);
                            if yi < 0 || xj < 0 || yi >= h as i64 || xj >= w as i64 {
                                continue;
                            }
                            for c in 0..ci {
                                acc += x[[s, yi as usize, xj as usize, c]] * k[[di, dj, c, o]];
                            }
                        }
                    }
                    out[[s, i, j, o]] = acc;
                }
            }
        }
    }
    out
}

pub fn naive_maxpool(x: &Tensor<f64>) -> Tensor<f64> {
    let s = x.shape();
    let mut out = Tensor::zeros(&[s[0], s[1] / 2, s[2] / 2, s[3]]);
    for n in 0..s[0] {
        for i in 0..s[1] / 2 {
            for j in 0..s[2] / 2 {
                for c in 0..s[3] {
                    let mut m = f64::NEG_INFINITY;
                    for (di, dj) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                        m = m.max(x[[n, 2 * i + di, 2 * j + dj, c]]);
                    }
                    out[[n, i, j, c]] = m;
                }
            }
        }
    }
    out
}

pub fn naive_upsample(x: &Tensor<f64>) -> Tensor<f64> {
    let s = x.shape();
    let mut out = Tensor::zeros(&[s[0], 2 * s[1], 2 * s[2], s[3]]);
    for n in 0..s[0] {
        for i in 0..2 * s[1] {
            for j in 0..2 * s[2] {
                for c in 0..s[3] {
                    out[[n, i, j, c]] = x[[n, i / 2, j / 2, c]];
                }
            }
        }
    }
    out
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Relative agreement with an absolute floor for values near zero.
pub fn close(a: &[f64], b: &[f64], rel: f64) -> bool {
    a.len() == b.len()
        && a.iter()
            .zip(b)
            .all(|(x, y)| (x - y).abs() <= rel * x.abs().max(y.abs()).max(1.0))
}

pub fn tensor(shape: &[usize], data: Vec<f64>) -> Tensor<f64> {
    Tensor::from_vec(shape, data).unwrap()
}
