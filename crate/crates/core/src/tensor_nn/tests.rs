use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

const EPS: f64 = 1e-6;
const TOL: f64 = 1e-5;

/// Central differences of `f` around `x`, one coordinate at a time.
fn numeric_grad(x: &[f64], f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + EPS;
            let plus = f(&probe);
            probe[i] = x[i] - EPS;
            let minus = f(&probe);
            probe[i] = x[i];
            (plus - minus) / (2.0 * EPS)
        })
        .collect()
}

fn max_rel(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-8))
        .fold(0.0, f64::max)
}

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// Values bounded away from zero so ReLU kinks and pooling ties stay out of
/// the finite-difference stencil.
fn random_separated(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|i| {
            let mag = 0.1 + 0.9 * (i as f64 + rng.gen::<f64>()) / n as f64;
            if rng.gen::<bool>() { mag } else { -mag }
        })
        .collect();
    Tensor::new(shape, data).unwrap()
}

#[test]
fn conv_identity_kernel() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = random(&[1, 5, 4], &mut rng);
    let k = Tensor::filled([1, 1, 1, 1], 1.0);
    assert_eq!(conv2d(&x, &k, 1, 0).unwrap(), x);
}

#[test]
fn conv_ones() {
    let x = Tensor::filled([1, 3, 3], 1.0);
    let k = Tensor::filled([1, 1, 2, 2], 1.0);
    let y = conv2d(&x, &k, 1, 0).unwrap();
    assert_eq!(y.shape(), &[1, 2, 2]);
    assert!(y.data().iter().all(|&v| v == 4.0));
}

/// Direct quadruple-loop correlation used to cross-check the row kernels.
fn naive_conv(x: &Tensor, k: &Tensor, stride: usize, pad: usize) -> Tensor {
    let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (o, kh, kw) = (k.shape()[0], k.shape()[2], k.shape()[3]);
    let oh = (h + 2 * pad - kh) / stride + 1;
    let ow = (w + 2 * pad - kw) / stride + 1;
    let mut y = Tensor::zeros([o, oh, ow]);
    for oc in 0..o {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut s = 0.0;
                for ic in 0..c {
                    for ky in 0..kh {
                        for kx in 0..kw {
                            let iy = (oy * stride + ky) as isize - pad as isize;
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                continue;
                            }
                            s += x.data()[(ic * h + iy as usize) * w + ix as usize]
                                * k.data()[((oc * c + ic) * kh + ky) * kw + kx];
                        }
                    }
                }
                y.data_mut()[(oc * oh + oy) * ow + ox] = s;
            }
        }
    }
    y
}

#[test]
fn conv_matches_naive_loops() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for &(c, h, w, o, kh, kw, stride, pad) in &[
        (2, 7, 6, 3, 3, 3, 1, 1),
        (1, 5, 5, 2, 2, 3, 2, 0),
        (3, 6, 9, 2, 3, 2, 3, 2),
        (1, 4, 4, 1, 5, 5, 1, 2),
    ] {
        let x = random(&[c, h, w], &mut rng);
        let k = random(&[o, c, kh, kw], &mut rng);
        let fast = conv2d(&x, &k, stride, pad).unwrap();
        let slow = naive_conv(&x, &k, stride, pad);
        assert_eq!(fast.shape(), slow.shape());
        for (a, b) in fast.data().iter().zip(slow.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn conv_shape_errors() {
    let x = Tensor::zeros([2, 3, 3]);
    assert!(matches!(conv2d(&x, &Tensor::zeros([1, 1, 2, 2]), 1, 0), Err(NnError::ShapeMismatch(_))));
    assert!(matches!(conv2d(&x, &Tensor::zeros([1, 2, 4, 4]), 1, 0), Err(NnError::ShapeMismatch(_))));
    assert!(matches!(conv2d(&x, &Tensor::zeros([1, 2, 2, 2]), 0, 0), Err(NnError::ShapeMismatch(_))));
}

fn conv_grad_error(seed: u64, shape_x: [usize; 3], shape_k: [usize; 4], stride: usize, pad: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = random(&shape_x, &mut rng);
    let k = random(&shape_k, &mut rng);
    let y = conv2d(&x, &k, stride, pad).unwrap();
    let r = random(y.shape(), &mut rng);
    let (dx, dk) = conv2d_backward(&x, &k, stride, pad, &r).unwrap();
    let nx = numeric_grad(x.data(), |v| {
        conv2d(&Tensor::new(x.shape(), v.to_vec()).unwrap(), &k, stride, pad).unwrap().dot(&r)
    });
    let nk = numeric_grad(k.data(), |v| {
        conv2d(&x, &Tensor::new(k.shape(), v.to_vec()).unwrap(), stride, pad).unwrap().dot(&r)
    });
    max_rel(dx.data(), &nx).max(max_rel(dk.data(), &nk))
}

#[test]
fn conv_gradients() {
    for seed in 0..5 {
        assert!(conv_grad_error(seed, [1, 4, 4], [1, 1, 2, 2], 1, 0) <= TOL);
        assert!(conv_grad_error(seed, [2, 5, 6], [3, 2, 3, 3], 1, 1) <= TOL);
        assert!(conv_grad_error(seed, [2, 7, 7], [2, 2, 3, 3], 2, 1) <= TOL);
    }
}

#[test]
fn bias_and_relu_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = random_separated(&[2, 3, 3], &mut rng);
    let b = random(&[2], &mut rng);
    let r = random(&[2, 3, 3], &mut rng);
    let f = |xv: &Tensor, bv: &Tensor| {
        let mut y = xv.clone();
        add_channel_bias(&mut y, bv).unwrap();
        y.dot(&r)
    };
    let nb = numeric_grad(b.data(), |v| f(&x, &Tensor::from_vec(v.to_vec())));
    assert!(max_rel(channel_bias_grad(&r).data(), &nb) <= TOL);

    let dx = relu_backward(&x, &r);
    let nx = numeric_grad(x.data(), |v| relu(&Tensor::new(x.shape(), v.to_vec()).unwrap()).dot(&r));
    assert!(max_rel(dx.data(), &nx) <= TOL);
}

#[test]
fn maxpool_cases() {
    let x = Tensor::new([1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
    let (y, _) = maxpool2(&x).unwrap();
    assert_eq!(y.data(), &[4.0]);

    let c = Tensor::filled([1, 4, 4], 0.5);
    let (y, arg) = maxpool2(&c).unwrap();
    assert!(y.data().iter().all(|&v| v == 0.5));
    assert_eq!(arg, vec![0, 2, 8, 10]);
    let dx = maxpool2_backward(c.shape(), &arg, &Tensor::filled([1, 2, 2], 1.0));
    let hot: Vec<usize> = dx.data().iter().enumerate().filter(|(_, &v)| v != 0.0).map(|(i, _)| i).collect();
    assert_eq!(hot, vec![0, 2, 8, 10]);

    assert!(matches!(maxpool2(&Tensor::zeros([1, 3, 4])), Err(NnError::OddDimension(3, 4))));
}

#[test]
fn maxpool_gradients() {
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_separated(&[1, 4, 4], &mut rng);
        let r = random(&[1, 2, 2], &mut rng);
        let (_, arg) = maxpool2(&x).unwrap();
        let dx = maxpool2_backward(x.shape(), &arg, &r);
        let nx = numeric_grad(x.data(), |v| maxpool2(&Tensor::new(x.shape(), v.to_vec()).unwrap()).unwrap().0.dot(&r));
        assert!(max_rel(dx.data(), &nx) <= TOL);
    }
}

#[test]
fn global_avg_pool_cases() {
    let x = Tensor::new([3, 1, 1], vec![0.2, -1.0, 7.0]).unwrap();
    assert_eq!(global_avg_pool(&x).unwrap().data(), x.data());
    let half = Tensor::new([1, 2, 2], vec![0.0, 1.0, 1.0, 0.0]).unwrap();
    assert_eq!(global_avg_pool(&half).unwrap().data(), &[0.5]);
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random(&[2, 3, 3], &mut rng);
        let r = random(&[2], &mut rng);
        let dx = global_avg_pool_backward(x.shape(), &r);
        let nx = numeric_grad(x.data(), |v| global_avg_pool(&Tensor::new(x.shape(), v.to_vec()).unwrap()).unwrap().dot(&r));
        assert!(max_rel(dx.data(), &nx) <= TOL);
    }
}

#[test]
fn avg_pool_downsamples() {
    let x = Tensor::new([1, 2, 4], vec![1.0, 3.0, 5.0, 7.0, 1.0, 3.0, 5.0, 7.0]).unwrap();
    assert_eq!(avg_pool(&x, 2).unwrap().data(), &[2.0, 6.0]);
    assert!(avg_pool(&x, 3).is_err());
}

#[test]
fn dense_cases() {
    let x = Tensor::from_vec(vec![1.0, 2.0]);
    let w = Tensor::new([1, 2], vec![3.0, 4.0]).unwrap();
    let b = Tensor::from_vec(vec![5.0]);
    assert_eq!(dense(&x, &w, &b).unwrap().data(), &[16.0]);

    let eye = Tensor::new([3, 3], vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
    let v = Tensor::from_vec(vec![0.3, -2.0, 9.0]);
    assert_eq!(dense(&v, &eye, &Tensor::zeros([3])).unwrap(), v);
    assert!(dense(&v, &w, &b).is_err());
}

#[test]
fn dense_gradients() {
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random(&[4], &mut rng);
        let w = random(&[3, 4], &mut rng);
        let b = random(&[3], &mut rng);
        let r = random(&[3], &mut rng);
        let (dx, dw, db) = dense_backward(&x, &w, &r).unwrap();
        let nx = numeric_grad(x.data(), |v| dense(&Tensor::from_vec(v.to_vec()), &w, &b).unwrap().dot(&r));
        let nw = numeric_grad(w.data(), |v| dense(&x, &Tensor::new([3, 4], v.to_vec()).unwrap(), &b).unwrap().dot(&r));
        let nb = numeric_grad(b.data(), |v| dense(&x, &w, &Tensor::from_vec(v.to_vec())).unwrap().dot(&r));
        assert!(max_rel(dx.data(), &nx) <= TOL);
        assert!(max_rel(dw.data(), &nw) <= TOL);
        assert!(max_rel(db.data(), &nb) <= TOL);
    }
}

#[test]
fn lstm_zero_weights_stay_zero() {
    let layer = LstmLayer::zeros(3, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let xs = random(&[5, 3], &mut rng);
    let (hs, _) = layer.forward(&xs, &Tensor::zeros([4]), &Tensor::zeros([4])).unwrap();
    assert!(hs.data().iter().all(|&v| v == 0.0));
}

#[test]
fn lstm_single_step_by_hand() {
    // input 1, hidden 1: rows i, f, g, o over [x, h].
    let w = Tensor::new([4, 2], vec![0.5, -0.3, 0.2, 0.1, -0.7, 0.4, 0.9, 0.6]).unwrap();
    let b = Tensor::from_vec(vec![0.1, 1.0, -0.2, 0.05]);
    let (x, h0, c0) = (0.8, 0.3, -0.5);
    let sig = |z: f64| 1.0 / (1.0 + (-z).exp());
    let i = sig(0.5 * x - 0.3 * h0 + 0.1);
    let f = sig(0.2 * x + 0.1 * h0 + 1.0);
    let g = (-0.7 * x + 0.4 * h0 - 0.2).tanh();
    let o = sig(0.9 * x + 0.6 * h0 + 0.05);
    let c1 = f * c0 + i * g;
    let h1 = o * c1.tanh();
    let (hs, _) = lstm_sequence(
        &w,
        &b,
        &Tensor::new([1, 1], vec![x]).unwrap(),
        &Tensor::from_vec(vec![h0]),
        &Tensor::from_vec(vec![c0]),
    )
    .unwrap();
    assert!((hs.data()[0] - h1).abs() < 1e-14);
}

fn lstm_grad_error(seed: u64, steps: usize, input: usize, hidden: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = random(&[4 * hidden, input + hidden], &mut rng);
    let b = random(&[4 * hidden], &mut rng);
    let xs = random(&[steps, input], &mut rng);
    let h0 = random(&[hidden], &mut rng);
    let c0 = random(&[hidden], &mut rng);
    let r = random(&[steps, hidden], &mut rng);
    let loss = |w: &Tensor, b: &Tensor, xs: &Tensor, h0: &Tensor, c0: &Tensor| {
        lstm_sequence(w, b, xs, h0, c0).unwrap().0.dot(&r)
    };
    let (_, cache) = lstm_sequence(&w, &b, &xs, &h0, &c0).unwrap();
    let g = lstm_backward(&w, &cache, &r).unwrap();
    let nw = numeric_grad(w.data(), |v| loss(&Tensor::new(w.shape(), v.to_vec()).unwrap(), &b, &xs, &h0, &c0));
    let nb = numeric_grad(b.data(), |v| loss(&w, &Tensor::from_vec(v.to_vec()), &xs, &h0, &c0));
    let nx = numeric_grad(xs.data(), |v| loss(&w, &b, &Tensor::new(xs.shape(), v.to_vec()).unwrap(), &h0, &c0));
    let nh = numeric_grad(h0.data(), |v| loss(&w, &b, &xs, &Tensor::from_vec(v.to_vec()), &c0));
    let nc = numeric_grad(c0.data(), |v| loss(&w, &b, &xs, &h0, &Tensor::from_vec(v.to_vec())));
    [
        max_rel(g.weight.data(), &nw),
        max_rel(g.bias.data(), &nb),
        max_rel(g.inputs.data(), &nx),
        max_rel(g.h0.data(), &nh),
        max_rel(g.c0.data(), &nc),
    ]
    .into_iter()
    .fold(0.0, f64::max)
}

#[test]
fn lstm_bptt_gradients() {
    for seed in 0..5 {
        let err = lstm_grad_error(seed, 3, 2, 3);
        assert!(err <= TOL, "seed {seed}: {err}");
    }
    assert!(lstm_grad_error(11, 1, 1, 1) <= TOL);
}

#[test]
fn lstm_shape_errors() {
    let w = Tensor::zeros([8, 5]);
    let b = Tensor::zeros([8]);
    assert!(lstm_sequence(&w, &b, &Tensor::zeros([2, 2]), &Tensor::zeros([2]), &Tensor::zeros([2])).is_err());
    assert!(lstm_sequence(&w, &b, &Tensor::zeros([0, 3]), &Tensor::zeros([2]), &Tensor::zeros([2])).is_err());
}

#[test]
fn dropout_modes() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let x = random(&[50], &mut rng);
    assert_eq!(dropout(&x, 0.5, Mode::Eval, &mut rng).0, x);
    assert_eq!(dropout(&x, 0.0, Mode::Train, &mut rng).0, x);
}

#[test]
fn dropout_mean_within_binomial_bound() {
    // Each output is 0 or 2 with equal probability: mean 1, per-element
    // variance 1, so the sample mean has σ = 1/sqrt(n).
    let n = 100_000;
    let x = Tensor::filled([n], 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (y, mask) = dropout(&x, 0.5, Mode::Train, &mut rng);
    let mean = y.data().iter().sum::<f64>() / n as f64;
    assert!((mean - 1.0).abs() <= 3.0 / (n as f64).sqrt(), "mean {mean}");
    let dy = Tensor::filled([n], 1.0);
    assert_eq!(dropout_backward(&dy, mask.as_deref()), y);
}

#[test]
fn dropout_same_seed_same_mask() {
    let x = Tensor::filled([64], 1.0);
    let a = dropout(&x, 0.3, Mode::Train, &mut ChaCha8Rng::seed_from_u64(5)).0;
    let b = dropout(&x, 0.3, Mode::Train, &mut ChaCha8Rng::seed_from_u64(5)).0;
    assert_eq!(a, b);
}

#[test]
fn softmax_cases() {
    let p = softmax(&Tensor::from_vec(vec![0.0, 0.0]));
    assert_eq!(p.data(), &[0.5, 0.5]);
    let big = softmax(&Tensor::from_vec(vec![1000.0, 0.0]));
    assert!(big.is_finite());
    assert!((big.data()[0] - 1.0).abs() < 1e-12 && big.data()[1] < 1e-300 + 1e-12);
}

#[test]
fn cross_entropy_cases() {
    let y = one_hot(0, 2);
    let perfect = categorical_cross_entropy(&y, &Tensor::from_vec(vec![1.0 - 1e-12, 1e-12])).unwrap();
    assert!(perfect.abs() < 1e-11);
    let half = categorical_cross_entropy(&y, &Tensor::from_vec(vec![0.5, 0.5])).unwrap();
    assert!((half - std::f64::consts::LN_2).abs() < 1e-12);

    assert!(matches!(
        categorical_cross_entropy(&Tensor::from_vec(vec![1.0, 1.0]), &Tensor::from_vec(vec![0.5, 0.5])),
        Err(NnError::InvalidDistribution(_))
    ));
    assert!(matches!(
        categorical_cross_entropy(&y, &Tensor::from_vec(vec![0.7, 0.7])),
        Err(NnError::InvalidDistribution(_))
    ));
    assert!(matches!(
        categorical_cross_entropy(&y, &Tensor::from_vec(vec![1.0, 0.0])),
        Err(NnError::InvalidDistribution(_))
    ));
}

#[test]
fn softmax_ce_fused_gradient() {
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z = random(&[4], &mut rng);
        let y = one_hot(rng.gen_range(0..4), 4);
        let p = softmax(&z);
        let fused = softmax_ce_grad(&p, &y);
        let chained = softmax_backward(&p, &cross_entropy_backward(&y, &p));
        for (a, b) in fused.data().iter().zip(chained.data()) {
            assert!((a - b).abs() <= 1e-10);
        }
        let nz = numeric_grad(z.data(), |v| {
            categorical_cross_entropy(&y, &softmax(&Tensor::from_vec(v.to_vec()))).unwrap()
        });
        assert!(max_rel(fused.data(), &nz) <= 1e-6);
    }
}

#[test]
fn adam_zero_gradient_is_noop() {
    let mut p = ParamSet::new();
    p.add("w", Tensor::from_vec(vec![0.3, -1.2]));
    let before = p.value(0).clone();
    p.adam_step(&AdamConfig::default());
    assert_eq!(p.value(0), &before);
    assert_eq!(p.step(), 1);
}

#[test]
fn adam_first_step_magnitude() {
    // m̂ = g = 1 and v̂ = g² = 1 after bias correction, so Δ = −lr / (1 + eps).
    let cfg = AdamConfig::default();
    let mut p = ParamSet::new();
    p.add("w", Tensor::from_vec(vec![2.0]));
    p.grad_mut(0).data_mut()[0] = 1.0;
    p.adam_step(&cfg);
    let delta = p.value(0).data()[0] - 2.0;
    let expected = -cfg.lr / (1.0 + cfg.eps);
    assert!(((delta - expected) / expected).abs() <= 1e-6);
    assert!(((delta + cfg.lr) / cfg.lr).abs() <= 1e-6);
}

#[test]
fn adam_is_deterministic() {
    let build = || {
        let mut p = ParamSet::new();
        p.add("a", Tensor::from_vec(vec![0.1, 0.2, 0.3]));
        p.add("b", Tensor::filled([2, 2], -0.5));
        p
    };
    let (mut x, mut y) = (build(), build());
    for step in 0..5 {
        for p in [&mut x, &mut y] {
            p.grad_mut(0).data_mut().copy_from_slice(&[step as f64, -1.0, 0.5]);
            p.grad_mut(1).data_mut().fill(0.25 * step as f64);
            p.adam_step(&AdamConfig { lr: 1e-2, ..AdamConfig::default() });
        }
    }
    assert_eq!(x, y);
}

#[test]
fn grad_check_dense_and_empty() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut p = ParamSet::new();
    let wi = p.add("w", random(&[3, 4], &mut rng));
    let bi = p.add("b", random(&[3], &mut rng));
    let x = random(&[4], &mut rng);
    let r = random(&[3], &mut rng);
    let err = grad_check(&mut p, EPS, 0, |p, need_grad| {
        let y = dense(&x, p.value(wi), p.value(bi)).unwrap();
        if need_grad {
            let (_, dw, db) = dense_backward(&x, p.value(wi), &r).unwrap();
            *p.grad_mut(wi) = dw;
            *p.grad_mut(bi) = db;
        }
        y.dot(&r)
    });
    assert!(err <= 1e-7, "{err}");

    let mut empty = ParamSet::new();
    assert_eq!(grad_check(&mut empty, EPS, 0, |_, _| 1.0), 0.0);
}

#[test]
fn grad_check_detects_wrong_gradient() {
    let mut p = ParamSet::new();
    let i = p.add("w", Tensor::from_vec(vec![1.5, -0.5]));
    let err = grad_check(&mut p, EPS, 0, |p, need_grad| {
        let v = p.value(i).data().to_vec();
        if need_grad {
            // Off by a factor of two on the first coordinate.
            p.grad_mut(i).data_mut().copy_from_slice(&[4.0 * v[0], 2.0 * v[1]]);
        }
        v[0] * v[0] + v[1] * v[1]
    });
    assert!(err > 0.4);
}

#[test]
fn dfnn_roundtrip_and_errors() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut p = ParamSet::new();
    p.add("conv0.weight", random(&[2, 1, 3, 3], &mut rng));
    p.add("ü-bias", random(&[2], &mut rng));
    p.add("scalar", Tensor::new(Vec::<usize>::new(), vec![f64::MIN_POSITIVE]).unwrap());
    let bytes = p.to_bytes();
    assert_eq!(&bytes[..4], b"DFNN");
    let back = ParamSet::from_bytes(&bytes).unwrap();
    assert_eq!(back.to_bytes(), bytes);
    for (a, b) in back.params().iter().zip(p.params()) {
        assert_eq!(a.name, b.name);
        assert_eq!(a.value, b.value);
    }
    assert!(ParamSet::from_bytes(b"NOPE\x01\x00\x00\x00").is_err());
    assert!(ParamSet::from_bytes(&bytes[..bytes.len() - 3]).is_err());
    let mut wrong_version = bytes.clone();
    wrong_version[4] = 9;
    assert!(ParamSet::from_bytes(&wrong_version).is_err());
}

proptest! {
    #[test]
    fn softmax_is_a_shift_invariant_distribution(
        z in proptest::collection::vec(-50.0f64..50.0, 1..8),
        shift in -100.0f64..100.0,
    ) {
        let p = softmax(&Tensor::from_vec(z.clone()));
        let q = softmax(&Tensor::from_vec(z.iter().map(|v| v + shift).collect()));
        prop_assert!((p.data().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(p.data().iter().all(|&v| v > 0.0));
        for (a, b) in p.data().iter().zip(q.data()) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn cross_entropy_nonnegative(z in proptest::collection::vec(-20.0f64..20.0, 2..6), k in 0usize..6) {
        let k = k % z.len();
        let p = softmax(&Tensor::from_vec(z.clone()));
        let loss = categorical_cross_entropy(&one_hot(k, z.len()), &p).unwrap();
        prop_assert!(loss >= 0.0);
    }

    #[test]
    fn lstm_hidden_state_bounded(seed in any::<u64>(), steps in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut w = random(&[12, 5], &mut rng);
        w.scale(5.0);
        let b = random(&[12], &mut rng);
        let xs = random(&[steps, 2], &mut rng);
        let (hs, _) = lstm_sequence(&w, &b, &xs, &Tensor::zeros([3]), &Tensor::zeros([3])).unwrap();
        prop_assert!(hs.data().iter().all(|h| h.abs() <= 1.0));
    }

    #[test]
    fn dfnn_bit_exact(vals in proptest::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 1..40)) {
        let mut p = ParamSet::new();
        p.add("t", Tensor::from_vec(vals));
        let bytes = p.to_bytes();
        prop_assert_eq!(ParamSet::from_bytes(&bytes).unwrap().to_bytes(), bytes);
    }
}
