//! Exact Euclidean distance transform (separable two-pass lower-envelope
//! method of Felzenszwalb and Huttenlocher).

use super::{Mask, Raster};

/// Squared distance transform of a sampled function along one line.
/// `f[i]` is 0 at sites and infinite elsewhere (or any finite seed cost).
fn edt_1d(f: &[f64], out: &mut [f64], hull: &mut Vec<usize>, bounds: &mut Vec<f64>) {
    hull.clear();
    bounds.clear();
    for (q, &fq) in f.iter().enumerate() {
        if !fq.is_finite() {
            continue;
        }
        loop {
            match hull.last() {
                None => {
                    hull.push(q);
                    bounds.push(f64::NEG_INFINITY);
                    break;
                }
                Some(&p) => {
                    let (qf, pf) = (q as f64, p as f64);
                    let s = ((fq + qf * qf) - (f[p] + pf * pf)) / (2.0 * qf - 2.0 * pf);
                    if s <= *bounds.last().unwrap() {
                        hull.pop();
                        bounds.pop();
                    } else {
                        hull.push(q);
                        bounds.push(s);
                        break;
                    }
                }
            }
        }
    }
    if hull.is_empty() {
        out.fill(f64::INFINITY);
        return;
    }
    let mut k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        let qf = q as f64;
        while k + 1 < hull.len() && bounds[k + 1] < qf {
            k += 1;
        }
        let p = hull[k];
        let d = qf - p as f64;
        *o = d * d + f[p];
    }
}

/// Euclidean distance from every pixel to the nearest `true` pixel of
/// `seeds`. Without any seed every distance is infinite.
pub fn distance_to_nearest(seeds: &Mask) -> Raster<f64> {
    let (h, w) = (seeds.height, seeds.width);
    let mut sq: Vec<f64> = seeds
        .data
        .iter()
        .map(|&s| if s { 0.0 } else { f64::INFINITY })
        .collect();

    let n = h.max(w);
    let (mut line, mut out) = (vec![0.0; n], vec![0.0; n]);
    let (mut hull, mut bounds) = (Vec::with_capacity(n), Vec::with_capacity(n));

    // columns
    for c in 0..w {
        for r in 0..h {
            line[r] = sq[r * w + c];
        }
        edt_1d(&line[..h], &mut out[..h], &mut hull, &mut bounds);
        for r in 0..h {
            sq[r * w + c] = out[r];
        }
    }
    // rows
    for r in 0..h {
        let row = &mut sq[r * w..(r + 1) * w];
        line[..w].copy_from_slice(row);
        edt_1d(&line[..w], &mut out[..w], &mut hull, &mut bounds);
        row.copy_from_slice(&out[..w]);
    }

    Raster {
        height: h,
        width: w,
        data: sq.into_iter().map(f64::sqrt).collect(),
    }
}

/// Distance from each pixel inside `mask` to the nearest pixel outside it,
/// where everything beyond the raster border counts as outside. Pixels
/// outside the mask get 0.
pub fn one_sided_distance_transform(mask: &Mask) -> Raster<f64> {
    let (h, w) = (mask.height, mask.width);
    let padded = Raster::from_fn(h + 2, w + 2, |r, c| {
        r == 0 || c == 0 || r == h + 1 || c == w + 1 || !mask[(r - 1, c - 1)]
    });
    let dist = distance_to_nearest(&padded);
    Raster::from_fn(h, w, |r, c| dist[(r + 1, c + 1)])
}
