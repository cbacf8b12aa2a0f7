mod common;

use afpseg::nn::ops::{
    concat_channels, conv2d, conv2d_backward, crop_to, loss_and_grad, maxpool2, maxpool2_backward,
    pad_to, relu_inplace, softmax, split_channels, upsample2, upsample2_backward,
};
use afpseg::nn::{Network, NetworkConfig, Tensor};
use common::*;
use proptest::prelude::*;

fn values(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0f64..2.0, n)
}

/// (n, h, w, ci, co, k, pad) with a non-empty output.
fn conv_dims() -> impl Strategy<Value = (usize, usize, usize, usize, usize, usize, usize)> {
    (
        1usize..3,
        1usize..7,
        1usize..7,
        1usize..4,
        1usize..4,
        prop::sample::select(vec![1usize, 3, 5]),
        0usize..3,
    )
        .prop_filter("output must be non-empty", |&(_, h, w, _, _, k, p)| {
            h + 2 * p >= k && w + 2 * p >= k
        })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn conv_matches_direct_loop(
        (dims, data) in conv_dims().prop_flat_map(|d| {
            let (n, h, w, ci, co, k, _) = d;
            (Just(d), values(n * h * w * ci + k * k * ci * co + co))
        })
    ) {
        let (n, h, w, ci, co, k, pad) = dims;
        let (xs, rest) = data.split_at(n * h * w * ci);
        let (ks, bs) = rest.split_at(k * k * ci * co);
        let x = tensor(&[n, h, w, ci], xs.to_vec());
        let kern = tensor(&[k, k, ci, co], ks.to_vec());
        let b = tensor(&[co], bs.to_vec());
        let fast = conv2d(&x, &kern, &b, pad).unwrap();
        let slow = naive_conv(&x, &kern, &b, pad);
        prop_assert_eq!(fast.shape(), slow.shape());
        prop_assert!(close(fast.data(), slow.data(), 1e-9));
    }

    /// <conv(x), g> is bilinear, so the backward pass must satisfy the
    /// adjoint identities against the forward oracle.
    #[test]
    fn conv_backward_is_adjoint(
        (dims, data) in conv_dims().prop_flat_map(|d| {
            let (n, h, w, ci, co, k, p) = d;
            let (oh, ow) = (h + 2 * p + 1 - k, w + 2 * p + 1 - k);
            (Just(d), values(n * h * w * ci + k * k * ci * co + n * oh * ow * co))
        })
    ) {
        let (n, h, w, ci, co, k, pad) = dims;
        let (oh, ow) = (h + 2 * pad + 1 - k, w + 2 * pad + 1 - k);
        let (xs, rest) = data.split_at(n * h * w * ci);
        let (ks, gs) = rest.split_at(k * k * ci * co);
        let x = tensor(&[n, h, w, ci], xs.to_vec());
        let kern = tensor(&[k, k, ci, co], ks.to_vec());
        let g = tensor(&[n, oh, ow, co], gs.to_vec());
        let zero_b = Tensor::zeros(&[co]);
        let y = naive_conv(&x, &kern, &zero_b, pad);
        let grads = conv2d_backward(&x, &kern, &g, pad, true).unwrap();
        let reference = dot(y.data(), g.data());
        let tol = 1e-9 * reference.abs().max(1.0);
        prop_assert!((dot(grads.input.as_ref().unwrap().data(), x.data()) - reference).abs() <= tol);
        prop_assert!((dot(grads.kernel.data(), kern.data()) - reference).abs() <= tol);
        let bias_sum: Vec<f64> = (0..co).map(|o| g.data().iter().skip(o).step_by(co).sum()).collect();
        prop_assert!(close(grads.bias.data(), &bias_sum, 1e-12));
    }

    #[test]
    fn maxpool_matches_naive_and_routes_gradient(
        (n, h, w, c, data) in (1usize..3, 1usize..5, 1usize..5, 1usize..4)
            .prop_flat_map(|(n, h, w, c)| (Just(n), Just(2 * h), Just(2 * w), Just(c), values(n * 4 * h * w * c)))
    ) {
        let x = tensor(&[n, h, w, c], data);
        let (y, argmax) = maxpool2(&x).unwrap();
        let oracle = naive_maxpool(&x);
        prop_assert_eq!(y.data(), oracle.data());
        let g = Tensor::full(y.shape(), 1.0);
        let gx = maxpool2_backward(&g, &argmax, x.shape()).unwrap();
        // Each window sends its whole gradient to exactly one element holding the max.
        prop_assert_eq!(gx.data().iter().sum::<f64>(), y.len() as f64);
        for (gi, xi) in gx.data().iter().zip(x.data()) {
            if *gi != 0.0 {
                prop_assert!(oracle.data().contains(xi));
            }
        }
    }

    #[test]
    fn upsample_matches_naive_and_adjoint(
        (shape, data, gdata) in (1usize..3, 1usize..5, 1usize..5, 1usize..4)
            .prop_flat_map(|(n, h, w, c)| (Just([n, h, w, c]), values(n * h * w * c), values(4 * n * h * w * c)))
    ) {
        let x = tensor(&shape, data);
        let y = upsample2(&x).unwrap();
        let oracle = naive_upsample(&x);
        prop_assert_eq!(y.data(), oracle.data());
        let g = tensor(y.shape(), gdata);
        let gx = upsample2_backward(&g).unwrap();
        prop_assert!((dot(gx.data(), x.data()) - dot(g.data(), y.data())).abs() < 1e-9);
    }

    #[test]
    fn loss_gradient_matches_finite_differences(
        (c, logits, labels) in (2usize..5, 1usize..7).prop_flat_map(|(c, px)| {
            (Just(c), values(px * c), prop::collection::vec(0u8..c as u8, px))
        })
    ) {
        let px = labels.len();
        let loss_of = |l: &[f64]| {
            let probs = softmax(&tensor(&[1, 1, px, c], l.to_vec())).unwrap();
            loss_and_grad(&probs, &labels).unwrap().0
        };
        let probs = softmax(&tensor(&[1, 1, px, c], logits.clone())).unwrap();
        let (_, grad) = loss_and_grad(&probs, &labels).unwrap();
        let eps = 1e-6;
        for i in 0..logits.len() {
            let mut plus = logits.clone();
            plus[i] += eps;
            let mut minus = logits.clone();
            minus[i] -= eps;
            let numeric = (loss_of(&plus) - loss_of(&minus)) / (2.0 * eps);
            prop_assert!((grad.data()[i] - numeric).abs() < 1e-7, "{} vs {}", grad.data()[i], numeric);
        }
    }

    #[test]
    fn softmax_rows_are_distributions(data in values(24)) {
        let p = softmax(&tensor(&[1, 2, 3, 4], data)).unwrap();
        for px in p.data().chunks(4) {
            prop_assert!(px.iter().all(|&v| (0.0..=1.0).contains(&v)));
            prop_assert!((px.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn relu_output_is_non_negative(data in values(30)) {
        let mut t = tensor(&[1, 2, 5, 3], data.clone());
        relu_inplace(&mut t);
        for (y, x) in t.data().iter().zip(&data) {
            prop_assert!(*y >= 0.0);
            prop_assert_eq!(*y, x.max(0.0));
        }
    }

    #[test]
    fn pad_concat_shape_law(
        h in 1usize..6, w in 1usize..6, dh in 0usize..3, dw in 0usize..3, ca in 1usize..4, cb in 1usize..4
    ) {
        let a = Tensor::<f64>::full(&[1, h, w, ca], 1.0);
        let padded = pad_to(&a, h + dh, w + dw).unwrap();
        prop_assert_eq!(padded.shape(), &[1, h + dh, w + dw, ca][..]);
        prop_assert_eq!(padded.data().iter().sum::<f64>(), (h * w * ca) as f64);
        prop_assert_eq!(crop_to(&padded, h, w).unwrap(), a.clone());
        let b = Tensor::<f64>::full(&[1, h + dh, w + dw, cb], 2.0);
        let cat = concat_channels(&padded, &b).unwrap();
        prop_assert_eq!(cat.shape(), &[1, h + dh, w + dw, ca + cb][..]);
        let (left, right) = split_channels(&cat, ca).unwrap();
        prop_assert_eq!(left, padded);
        prop_assert_eq!(right, b);
    }

    #[test]
    fn encoder_shapes_halve_per_level(levels in 2usize..5, base in 1usize..4, hm in 1usize..4, wm in 1usize..4) {
        let cfg = NetworkConfig { levels, base_features: base, ..NetworkConfig::default() };
        let d = cfg.divisor();
        let (h, w) = (hm * d, wm * d);
        let net = Network::<f64>::new(cfg, 1).unwrap();
        let x = Tensor::full(&[1, h, w, 1], 0.5);
        let (probs, cache) = net.forward_cached(&x).unwrap();
        prop_assert_eq!(probs.shape(), &[1, h, w, 4][..]);
        let shapes = cache.encoder_shapes();
        prop_assert_eq!(shapes.len(), levels);
        for (l, s) in shapes.iter().enumerate() {
            prop_assert_eq!(s.as_slice(), &[1, h >> l, w >> l, base << l][..]);
        }
    }
}

#[test]
fn maxpool_rejects_odd_extents() {
    assert!(maxpool2(&Tensor::<f64>::zeros(&[1, 3, 4, 1])).is_err());
}

#[test]
fn shapes_for_default_network() {
    let net = Network::<f32>::new(
        NetworkConfig {
            levels: 3,
            ..NetworkConfig::default()
        },
        0,
    )
    .unwrap();
    let probs = net.forward(&Tensor::zeros(&[1, 200, 300, 1])).unwrap();
    assert_eq!(probs.shape(), &[1, 200, 300, 4]);
}
