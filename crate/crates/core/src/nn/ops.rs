//! Forward and backward kernels on `[n, h, w, c]` tensors.

use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

#[inline]
fn axpy<T: Scalar>(y: &mut [T], a: T, x: &[T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

fn conv_dims<T: Scalar>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    pad: usize,
) -> Result<([usize; 4], [usize; 4], [usize; 2])> {
    let [n, h, w, ci] = input.dims4()?;
    let kd = kernel.dims4()?;
    let [kh, kw, kci, _] = kd;
    if kci != ci {
        return Err(Error::Shape(format!(
            "conv kernel expects {kci} input channels, input has {ci}"
        )));
    }
    if h + 2 * pad < kh || w + 2 * pad < kw {
        return Err(Error::Shape(format!(
            "{kh}x{kw} kernel does not fit a {h}x{w} input with padding {pad}"
        )));
    }
    let out = [h + 2 * pad + 1 - kh, w + 2 * pad + 1 - kw];
    Ok(([n, h, w, ci], kd, out))
}

/// Range of output columns `ox` whose input column `ox + kx - pad` exists.
#[inline]
fn valid_range(kx: usize, pad: usize, w: usize, ow: usize) -> std::ops::Range<usize> {
    let lo = pad.saturating_sub(kx);
    let hi = (w + pad).saturating_sub(kx).min(ow);
    lo..hi.max(lo)
}

/// Cross-correlation with zero padding. `kernel` is `[kh, kw, in, out]`.
pub fn conv2d<T: Scalar>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    bias: &Tensor<T>,
    pad: usize,
) -> Result<Tensor<T>> {
    let ([n, h, w, ci], [kh, kw, _, co], [oh, ow]) = conv_dims(input, kernel, pad)?;
    if bias.len() != co {
        return Err(Error::Shape(format!(
            "bias has {} entries, kernel has {co} outputs",
            bias.len()
        )));
    }
    let x = input.data();
    let k = kernel.data();
    let b = bias.data();
    let mut out = vec![T::zero(); n * oh * ow * co];

    for bi in 0..n {
        for oy in 0..oh {
            let out_row = &mut out[(bi * oh + oy) * ow * co..][..ow * co];
            for px in out_row.chunks_exact_mut(co) {
                px.copy_from_slice(b);
            }
            for ky in 0..kh {
                let iy = oy + ky;
                if iy < pad || iy - pad >= h {
                    continue;
                }
                let in_row = &x[(bi * h + iy - pad) * w * ci..][..w * ci];
                for kx in 0..kw {
                    let wk = &k[(ky * kw + kx) * ci * co..][..ci * co];
                    for ox in valid_range(kx, pad, w, ow) {
                        let xin = &in_row[(ox + kx - pad) * ci..][..ci];
                        let o = &mut out_row[ox * co..][..co];
                        for (c, &a) in xin.iter().enumerate() {
                            axpy(o, a, &wk[c * co..][..co]);
                        }
                    }
                }
            }
        }
    }
    Tensor::from_vec(&[n, oh, ow, co], out)
}

pub struct ConvGrads<T> {
    pub input: Option<Tensor<T>>,
    pub kernel: Tensor<T>,
    pub bias: Tensor<T>,
}

/// Exact gradients of [`conv2d`] given the upstream gradient `grad_out`.
pub fn conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    grad_out: &Tensor<T>,
    pad: usize,
    need_input: bool,
) -> Result<ConvGrads<T>> {
    let ([n, h, w, ci], [kh, kw, _, co], [oh, ow]) = conv_dims(input, kernel, pad)?;
    if grad_out.shape() != [n, oh, ow, co] {
        return Err(Error::Shape(format!(
            "conv upstream gradient has shape {:?}, expected {:?}",
            grad_out.shape(),
            [n, oh, ow, co]
        )));
    }
    let x = input.data();
    let g = grad_out.data();
    let k = kernel.data();

    let mut gb = vec![T::zero(); co];
    for px in g.chunks_exact(co) {
        for (acc, &v) in gb.iter_mut().zip(px) {
            *acc += v;
        }
    }

    // kernel transposed to [kh, kw, out, in] so the input gradient is an axpy
    let mut kt = vec![T::zero(); k.len()];
    for tap in 0..kh * kw {
        for c in 0..ci {
            for j in 0..co {
                kt[(tap * co + j) * ci + c] = k[(tap * ci + c) * co + j];
            }
        }
    }

    let mut gk = vec![T::zero(); k.len()];
    let mut gx = if need_input {
        vec![T::zero(); x.len()]
    } else {
        Vec::new()
    };

    for bi in 0..n {
        for oy in 0..oh {
            let g_row = &g[(bi * oh + oy) * ow * co..][..ow * co];
            for ky in 0..kh {
                let iy = oy + ky;
                if iy < pad || iy - pad >= h {
                    continue;
                }
                let row_base = (bi * h + iy - pad) * w * ci;
                let in_row = &x[row_base..][..w * ci];
                for kx in 0..kw {
                    let tap = ky * kw + kx;
                    let gk_tap = &mut gk[tap * ci * co..][..ci * co];
                    for ox in valid_range(kx, pad, w, ow) {
                        let ix = ox + kx - pad;
                        let go = &g_row[ox * co..][..co];
                        let xin = &in_row[ix * ci..][..ci];
                        for (c, &a) in xin.iter().enumerate() {
                            axpy(&mut gk_tap[c * co..][..co], a, go);
                        }
                    }
                    if need_input {
                        let kt_tap = &kt[tap * co * ci..][..co * ci];
                        let gx_row = &mut gx[row_base..][..w * ci];
                        for ox in valid_range(kx, pad, w, ow) {
                            let ix = ox + kx - pad;
                            let go = &g_row[ox * co..][..co];
                            let gxi = &mut gx_row[ix * ci..][..ci];
                            for (j, &a) in go.iter().enumerate() {
                                axpy(gxi, a, &kt_tap[j * ci..][..ci]);
                            }
                        }
                    }
                }
            }
        }
    }

    Ok(ConvGrads {
        input: if need_input {
            Some(Tensor::from_vec(input.shape(), gx)?)
        } else {
            None
        },
        kernel: Tensor::from_vec(kernel.shape(), gk)?,
        bias: Tensor::from_vec(&[co], gb)?,
    })
}

pub fn relu_inplace<T: Scalar>(t: &mut Tensor<T>) {
    for v in t.data_mut() {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
}

/// Zeroes `grad` wherever the ReLU output was not positive.
pub fn relu_backward_inplace<T: Scalar>(grad: &mut Tensor<T>, output: &Tensor<T>) {
    for (g, &o) in grad.data_mut().iter_mut().zip(output.data()) {
        if o <= T::zero() {
            *g = T::zero();
        }
    }
}

/// 2x2 stride-2 max pooling. Returns the pooled tensor and, per output element,
/// the winning window position (0..4, row-major); ties go to the first.
pub fn maxpool2<T: Scalar>(input: &Tensor<T>) -> Result<(Tensor<T>, Vec<u8>)> {
    let [n, h, w, c] = input.dims4()?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::Shape(format!(
            "max pooling needs even extents, got {h}x{w}"
        )));
    }
    let (oh, ow) = (h / 2, w / 2);
    let x = input.data();
    let mut out = Vec::with_capacity(n * oh * ow * c);
    let mut arg = Vec::with_capacity(n * oh * ow * c);
    for b in 0..n {
        for oy in 0..oh {
            for ox in 0..ow {
                for ch in 0..c {
                    let mut best = T::neg_infinity();
                    let mut best_i = 0u8;
                    for i in 0..4u8 {
                        let (dy, dx) = ((i / 2) as usize, (i % 2) as usize);
                        let v = x[((b * h + 2 * oy + dy) * w + 2 * ox + dx) * c + ch];
                        if v > best {
                            best = v;
                            best_i = i;
                        }
                    }
                    out.push(best);
                    arg.push(best_i);
                }
            }
        }
    }
    Ok((Tensor::from_vec(&[n, oh, ow, c], out)?, arg))
}

/// Routes each upstream gradient to the recorded argmax position.
pub fn maxpool2_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    argmax: &[u8],
    input_shape: &[usize],
) -> Result<Tensor<T>> {
    let [n, oh, ow, c] = grad_out.dims4()?;
    if input_shape != [n, 2 * oh, 2 * ow, c] || argmax.len() != grad_out.len() {
        return Err(Error::Shape("max pooling backward shapes disagree".into()));
    }
    let (h, w) = (2 * oh, 2 * ow);
    let mut gx = Tensor::zeros(input_shape);
    let gxd = gx.data_mut();
    let g = grad_out.data();
    let mut idx = 0;
    for b in 0..n {
        for oy in 0..oh {
            for ox in 0..ow {
                for ch in 0..c {
                    let i = argmax[idx];
                    let (dy, dx) = ((i / 2) as usize, (i % 2) as usize);
                    gxd[((b * h + 2 * oy + dy) * w + 2 * ox + dx) * c + ch] += g[idx];
                    idx += 1;
                }
            }
        }
    }
    Ok(gx)
}

/// Nearest-neighbour 2x spatial up-scaling.
pub fn upsample2<T: Scalar>(input: &Tensor<T>) -> Result<Tensor<T>> {
    let [n, h, w, c] = input.dims4()?;
    let x = input.data();
    let mut out = Vec::with_capacity(n * 4 * h * w * c);
    for b in 0..n {
        for y in 0..2 * h {
            let row = &x[(b * h + y / 2) * w * c..][..w * c];
            for px in row.chunks_exact(c) {
                out.extend_from_slice(px);
                out.extend_from_slice(px);
            }
        }
    }
    Tensor::from_vec(&[n, 2 * h, 2 * w, c], out)
}

/// Sums each 2x2 block of the upstream gradient onto its source pixel.
pub fn upsample2_backward<T: Scalar>(grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    let [n, h2, w2, c] = grad_out.dims4()?;
    if h2 % 2 != 0 || w2 % 2 != 0 {
        return Err(Error::Shape(format!(
            "up-scaling gradient must have even extents, got {h2}x{w2}"
        )));
    }
    let (h, w) = (h2 / 2, w2 / 2);
    let g = grad_out.data();
    let mut gx = Tensor::zeros(&[n, h, w, c]);
    let gxd = gx.data_mut();
    for b in 0..n {
        for y in 0..h2 {
            for x in 0..w2 {
                let src = &g[((b * h2 + y) * w2 + x) * c..][..c];
                let dst = &mut gxd[((b * h + y / 2) * w + x / 2) * c..][..c];
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d += s;
                }
            }
        }
    }
    Ok(gx)
}

/// Zero-pads at the bottom and right up to `target_h x target_w`.
pub fn pad_to<T: Scalar>(input: &Tensor<T>, target_h: usize, target_w: usize) -> Result<Tensor<T>> {
    let [n, h, w, c] = input.dims4()?;
    if target_h < h || target_w < w {
        return Err(Error::Shape(format!(
            "cannot pad {h}x{w} down to {target_h}x{target_w}"
        )));
    }
    if (target_h, target_w) == (h, w) {
        return Ok(input.clone());
    }
    let mut out = Tensor::zeros(&[n, target_h, target_w, c]);
    let od = out.data_mut();
    for b in 0..n {
        for y in 0..h {
            let src = &input.data()[(b * h + y) * w * c..][..w * c];
            od[(b * target_h + y) * target_w * c..][..w * c].copy_from_slice(src);
        }
    }
    Ok(out)
}

/// Keeps the top-left `h x w` window; the adjoint of [`pad_to`].
pub fn crop_to<T: Scalar>(input: &Tensor<T>, h: usize, w: usize) -> Result<Tensor<T>> {
    let [n, ih, iw, c] = input.dims4()?;
    if h > ih || w > iw {
        return Err(Error::Shape(format!("cannot crop {ih}x{iw} to {h}x{w}")));
    }
    let mut out = Vec::with_capacity(n * h * w * c);
    for b in 0..n {
        for y in 0..h {
            out.extend_from_slice(&input.data()[(b * ih + y) * iw * c..][..w * c]);
        }
    }
    Tensor::from_vec(&[n, h, w, c], out)
}

/// Channel-wise concatenation `[a, b]`.
pub fn concat_channels<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let [n, h, w, ca] = a.dims4()?;
    let [nb, hb, wb, cb] = b.dims4()?;
    if (n, h, w) != (nb, hb, wb) {
        return Err(Error::Shape(format!(
            "cannot concatenate {:?} with {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let mut out = Vec::with_capacity(n * h * w * (ca + cb));
    for (pa, pb) in a.data().chunks_exact(ca).zip(b.data().chunks_exact(cb)) {
        out.extend_from_slice(pa);
        out.extend_from_slice(pb);
    }
    Tensor::from_vec(&[n, h, w, ca + cb], out)
}

/// Splits a gradient of [`concat_channels`] back into its two parts.
pub fn split_channels<T: Scalar>(t: &Tensor<T>, first: usize) -> Result<(Tensor<T>, Tensor<T>)> {
    let [n, h, w, c] = t.dims4()?;
    if first > c {
        return Err(Error::Shape(format!(
            "cannot split {first} of {c} channels"
        )));
    }
    let mut a = Vec::with_capacity(n * h * w * first);
    let mut b = Vec::with_capacity(n * h * w * (c - first));
    for px in t.data().chunks_exact(c) {
        a.extend_from_slice(&px[..first]);
        b.extend_from_slice(&px[first..]);
    }
    Ok((
        Tensor::from_vec(&[n, h, w, first], a)?,
        Tensor::from_vec(&[n, h, w, c - first], b)?,
    ))
}

/// Soft-max over the channel axis.
pub fn softmax<T: Scalar>(logits: &Tensor<T>) -> Result<Tensor<T>> {
    let [_, _, _, c] = logits.dims4()?;
    let mut out = logits.clone();
    for px in out.data_mut().chunks_exact_mut(c) {
        let max = px.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
        let mut sum = T::zero();
        for v in px.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in px.iter_mut() {
            *v /= sum;
        }
    }
    Ok(out)
}

/// Mean pixel-wise cross-entropy of soft-max outputs `probs` against class
/// ids `labels` (one per pixel, row-major over `[n, h, w]`), and its gradient
/// with respect to the pre-soft-max logits: `(q - onehot) / pixels`.
pub fn loss_and_grad<T: Scalar>(probs: &Tensor<T>, labels: &[u8]) -> Result<(f64, Tensor<T>)> {
    let [n, h, w, c] = probs.dims4()?;
    let pixels = n * h * w;
    if labels.len() != pixels {
        return Err(Error::Shape(format!(
            "{} labels for {pixels} pixels",
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l as usize >= c) {
        return Err(Error::Data(format!(
            "label id {bad} out of range for {c} classes"
        )));
    }
    let scale = T::of(1.0 / pixels as f64);
    let mut grad = probs.clone();
    let mut loss = 0.0f64;
    for (px, &label) in grad.data_mut().chunks_exact_mut(c).zip(labels) {
        let q = px[label as usize].as_f64();
        loss -= q.max(f64::MIN_POSITIVE).ln();
        px[label as usize] -= T::one();
        for v in px.iter_mut() {
            *v *= scale;
        }
    }
    Ok((loss / pixels as f64, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t4(shape: [usize; 4], data: Vec<f64>) -> Tensor<f64> {
        Tensor::from_vec(&shape, data).unwrap()
    }

    #[test]
    fn identity_1x1_conv() {
        let x = t4([1, 3, 4, 1], (0..12).map(|v| v as f64).collect());
        let k = t4([1, 1, 1, 1], vec![1.0]);
        let b = Tensor::from_vec(&[1], vec![0.0]).unwrap();
        assert_eq!(conv2d(&x, &k, &b, 0).unwrap(), x);
    }

    #[test]
    fn ones_kernel_zero_padding() {
        let c = 2.5;
        let x = Tensor::full(&[1, 5, 6, 1], c);
        let k = Tensor::full(&[3, 3, 1, 1], 1.0);
        let b = Tensor::zeros(&[1]);
        let y = conv2d(&x, &k, &b, 1).unwrap();
        assert_eq!(y.shape(), &[1, 5, 6, 1]);
        assert_eq!(y[[0, 2, 2, 0]], 9.0 * c);
        assert_eq!(y[[0, 0, 0, 0]], 4.0 * c);
        assert_eq!(y[[0, 4, 5, 0]], 4.0 * c);
        assert_eq!(y[[0, 0, 3, 0]], 6.0 * c);
    }

    #[test]
    fn conv_shape_errors() {
        let x = Tensor::<f64>::zeros(&[1, 4, 4, 2]);
        let k = Tensor::zeros(&[3, 3, 3, 1]);
        assert!(matches!(
            conv2d(&x, &k, &Tensor::zeros(&[1]), 1),
            Err(Error::Shape(_))
        ));
        let k = Tensor::zeros(&[3, 3, 2, 1]);
        assert!(conv2d(&x, &k, &Tensor::zeros(&[2]), 1).is_err());
    }

    #[test]
    fn maxpool_window_and_ties() {
        let x = t4([1, 2, 2, 1], vec![1.0, 2.0, 3.0, 4.0]);
        let (y, arg) = maxpool2(&x).unwrap();
        assert_eq!(y.data(), &[4.0]);
        assert_eq!(arg, vec![3]);

        let (y, arg) = maxpool2(&Tensor::<f64>::full(&[1, 4, 4, 2], 7.0)).unwrap();
        assert!(y.data().iter().all(|&v| v == 7.0));
        assert!(arg.iter().all(|&a| a == 0));

        assert!(maxpool2(&Tensor::<f64>::zeros(&[1, 3, 4, 1])).is_err());

        let g = t4([1, 1, 1, 1], vec![2.0]);
        let gx = maxpool2_backward(&g, &[3], &[1, 2, 2, 1]).unwrap();
        assert_eq!(gx.data(), &[0.0, 0.0, 0.0, 2.0]);
    }

    #[test]
    fn upsample_and_adjoint() {
        let y = upsample2(&t4([1, 1, 1, 1], vec![5.0])).unwrap();
        assert_eq!(y.shape(), &[1, 2, 2, 1]);
        assert!(y.data().iter().all(|&v| v == 5.0));
        let x = Tensor::<f64>::zeros(&[2, 3, 5, 4]);
        assert_eq!(upsample2(&x).unwrap().shape(), &[2, 6, 10, 4]);
        let g = upsample2_backward(&Tensor::<f64>::full(&[1, 4, 6, 2], 1.0)).unwrap();
        assert!(g.data().iter().all(|&v| v == 4.0));
    }

    #[test]
    fn pad_and_crop() {
        let x = t4([1, 3, 5, 1], (0..15).map(|v| v as f64 + 1.0).collect());
        assert_eq!(pad_to(&x, 3, 5).unwrap(), x);
        let p = pad_to(&x, 4, 6).unwrap();
        assert_eq!(p.shape(), &[1, 4, 6, 1]);
        assert_eq!(p[[0, 2, 4, 0]], 15.0);
        assert_eq!(p[[0, 3, 0, 0]], 0.0);
        assert_eq!(p[[0, 0, 5, 0]], 0.0);
        assert_eq!(p.data().iter().filter(|&&v| v == 0.0).count(), 24 - 15);
        assert_eq!(crop_to(&p, 3, 5).unwrap(), x);
        assert!(matches!(pad_to(&x, 2, 5), Err(Error::Shape(_))));
    }

    #[test]
    fn concat_split_round_trip() {
        let a = t4([1, 2, 2, 1], vec![1.0, 2.0, 3.0, 4.0]);
        let b = t4([1, 2, 2, 2], (10..18).map(|v| v as f64).collect());
        let c = concat_channels(&a, &b).unwrap();
        assert_eq!(&c.data()[..6], &[1.0, 10.0, 11.0, 2.0, 12.0, 13.0]);
        let (a2, b2) = split_channels(&c, 1).unwrap();
        assert_eq!((a2, b2), (a, b));
        assert!(concat_channels(
            &Tensor::<f64>::zeros(&[1, 2, 3, 1]),
            &Tensor::zeros(&[1, 2, 2, 1])
        )
        .is_err());
    }

    #[test]
    fn softmax_and_loss() {
        let probs = softmax(&Tensor::<f64>::zeros(&[1, 2, 3, 4])).unwrap();
        assert!(probs.data().iter().all(|&p| (p - 0.25).abs() < 1e-15));
        let (loss, _) = loss_and_grad(&probs, &[0, 1, 2, 3, 0, 1]).unwrap();
        assert!((loss - 4f64.ln()).abs() < 1e-12);

        let mut onehot = Tensor::<f64>::zeros(&[1, 1, 2, 4]);
        onehot[[0, 0, 0, 2]] = 1.0;
        onehot[[0, 0, 1, 0]] = 1.0;
        let (loss, grad) = loss_and_grad(&onehot, &[2, 0]).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.data().iter().all(|&g| g == 0.0));

        assert!(matches!(
            loss_and_grad(&onehot, &[2, 4]),
            Err(Error::Data(_))
        ));
        assert!(matches!(loss_and_grad(&onehot, &[2]), Err(Error::Shape(_))));
    }
}
