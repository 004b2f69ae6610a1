mod common;

use approx::assert_abs_diff_eq;
use attrib_bench::attribution::{
    cam, deeplift, deepshap, integrated_gradients, modified_backprop, noise_ensemble,
    BackpropVariant, Explainer, Method, MethodConfig, NoiseMode,
};
use attrib_bench::autodiff::{CnnWidths, Layer, Model};
use attrib_bench::masking::Masker;
use attrib_bench::segmentation::Segmentation;
use attrib_bench::Tensor;
use common::{linear_image_model, random_cnn, random_tensor, rng};

fn image(values: &[f64], h: usize, w: usize) -> Tensor {
    Tensor::new(vec![1, h, w], values.to_vec()).unwrap()
}

fn assert_close(a: &Tensor, b: &Tensor, tol: f64) {
    assert_eq!(a.shape(), b.shape());
    for (x, y) in a.data().iter().zip(b.data()) {
        assert_abs_diff_eq!(x, y, epsilon = tol);
    }
}

#[test]
fn gradient_and_input_x_gradient_on_linear_model() {
    let w = [1.0, -2.0, 3.0];
    let m = linear_image_model(&w, 1, 3);
    let x = image(&[2.0, 0.0, -1.0], 1, 3);
    let g = modified_backprop(&m, &x, 0, BackpropVariant::Gradient).unwrap();
    assert_eq!(g.data(), &w);
    let ixg = modified_backprop(&m, &x, 0, BackpropVariant::InputXGradient).unwrap();
    assert_eq!(ixg.data(), &[2.0, 0.0, -3.0]);
}

#[test]
fn deconvolution_matches_gradient_without_relu() {
    let mut r = rng(4);
    let layers = vec![
        Layer::Conv2d {
            weight: random_tensor(&mut r, &[2, 1, 3, 3], 1.0),
            bias: random_tensor(&mut r, &[2], 0.1),
            stride: 1,
            padding: 1,
        },
        Layer::Flatten,
        Layer::Dense {
            weight: random_tensor(&mut r, &[3, 2 * 36], 1.0),
            bias: Tensor::zeros(&[3]),
        },
    ];
    let m = Model::new(vec![1, 6, 6], layers).unwrap();
    let x = random_tensor(&mut r, &[1, 6, 6], 1.0);
    for c in 0..3 {
        let g = modified_backprop(&m, &x, c, BackpropVariant::Gradient).unwrap();
        let d = modified_backprop(&m, &x, c, BackpropVariant::Deconvolution).unwrap();
        assert_eq!(g, d);
    }
}

#[test]
fn integrated_gradients_linear_and_zero_path() {
    let w = [0.5, -1.0, 2.0, 0.25];
    let m = linear_image_model(&w, 2, 2);
    let x = image(&[1.0, 2.0, -3.0, 4.0], 2, 2);
    let expected = x.mul(&image(&w, 2, 2)).unwrap();
    for n in [2, 7, 64] {
        let ig = integrated_gradients(&m, &x, 0, &Tensor::zeros(&[1, 2, 2]), n).unwrap();
        assert_close(&ig, &expected, 1e-12);
    }
    let ig = integrated_gradients(&m, &x, 0, &x, 16).unwrap();
    assert!(ig.data().iter().all(|&v| v == 0.0));
    assert!(integrated_gradients(&m, &x, 0, &x, 1).is_err());
}

#[test]
fn integrated_gradients_completeness_on_cnn() {
    let base = Tensor::zeros(&[1, 12, 12]);
    let x = random_tensor(&mut rng(9), &[1, 12, 12], 1.0);
    let gap = |m: &Model, n: usize| {
        let diff = m.logits(&x).unwrap().data()[2] - m.logits(&base).unwrap().data()[2];
        (integrated_gradients(m, &x, 2, &base, n).unwrap().sum() - diff).abs()
    };
    let fresh = Model::small_cnn([1, 12, 12], 4, CnnWidths::desk(), 8).unwrap();
    assert!(gap(&fresh, 256) <= 1e-3);
    // Random biases put ReLU kinks on the path; the midpoint rule still converges.
    let jittered = random_cnn(8, [1, 12, 12], 4);
    assert!(gap(&jittered, 4096) <= 1e-3);
}

#[test]
fn noise_ensembles() {
    let m = random_cnn(1, [1, 10, 10], 3);
    let x = random_tensor(&mut rng(2), &[1, 10, 10], 1.0);
    let g = modified_backprop(&m, &x, 1, BackpropVariant::Gradient).unwrap();
    let sg = noise_ensemble(&m, &x, 1, NoiseMode::SmoothGrad, 5, 1e-12, &mut rng(3)).unwrap();
    assert_close(&sg, &g, 1e-6);

    let lin = linear_image_model(&[1.0, -1.0, 0.5, 2.0], 2, 2);
    let xl = image(&[0.1, 0.2, 0.3, 0.4], 2, 2);
    let vg = noise_ensemble(&lin, &xl, 0, NoiseMode::VarGrad, 10, 0.5, &mut rng(3)).unwrap();
    assert!(vg.data().iter().all(|&v| v.abs() < 1e-15));
    assert!(noise_ensemble(&lin, &xl, 0, NoiseMode::VarGrad, 1, 0.5, &mut rng(3)).is_err());
}

#[test]
fn stochastic_methods_are_seeded() {
    let m = random_cnn(5, [1, 16, 16], 3);
    let refs: Vec<Tensor> = (0..20).map(|i| random_tensor(&mut rng(100 + i), &[1, 16, 16], 1.0)).collect();
    let cfg = MethodConfig {
        eg_draws: 10,
        noise_samples: 5,
        deepshap_references: 4,
        surrogate_samples: 40,
        superpixels: 10,
        ..Default::default()
    };
    let ex = Explainer::new(&m, cfg).with_references(&refs);
    let x = random_tensor(&mut rng(7), &[1, 16, 16], 1.0);
    for method in [
        Method::ExpectedGradients,
        Method::SmoothGrad,
        Method::VarGrad,
        Method::DeepShap,
        Method::Lime,
        Method::KernelShap,
        Method::Random,
    ] {
        let a = ex.explain(method, &x, 0, 11).unwrap();
        let b = ex.explain(method, &x, 0, 11).unwrap();
        assert_eq!(a, b, "{method}");
        assert_eq!(a.values.shape(), x.shape());
    }
}

#[test]
fn every_method_keeps_input_shape() {
    let m = random_cnn(6, [1, 16, 16], 3);
    let refs: Vec<Tensor> = (0..4).map(|i| random_tensor(&mut rng(i), &[1, 16, 16], 1.0)).collect();
    let cfg = MethodConfig {
        ig_steps: 4,
        eg_draws: 4,
        noise_samples: 3,
        deepshap_references: 2,
        surrogate_samples: 30,
        superpixels: 9,
        ..Default::default()
    };
    let ex = Explainer::new(&m, cfg).with_references(&refs);
    let x = random_tensor(&mut rng(8), &[1, 16, 16], 1.0);
    for method in Method::ALL.iter().chain(&[Method::Random, Method::Edge]) {
        let map = ex.explain(*method, &x, 1, 0).unwrap();
        assert_eq!(map.values.shape(), x.shape(), "{method}");
        assert!(map.values.all_finite());
    }
}

/// conv(1 filter, k=1, bias 1) -> flatten -> dense(-1): activations positive, gradients negative.
fn negative_cam_model(h: usize, w: usize) -> Model {
    Model::new(
        vec![1, h, w],
        vec![
            Layer::Conv2d {
                weight: Tensor::full(&[1, 1, 1, 1], 1.0),
                bias: Tensor::full(&[1], 1.0),
                stride: 1,
                padding: 0,
            },
            Layer::Flatten,
            Layer::Dense {
                weight: Tensor::full(&[2, h * w], -1.0),
                bias: Tensor::zeros(&[2]),
            },
        ],
    )
    .unwrap()
}

#[test]
fn grad_cam_rectifies_and_upsamples() {
    let m = negative_cam_model(4, 4);
    let x = Tensor::full(&[1, 4, 4], 0.5);
    assert!(cam(&m, &x, 0, false).unwrap().data().iter().all(|&v| v == 0.0));

    // A 4x4 kernel without padding leaves a 1x1 feature map.
    let mut r = rng(1);
    let m = Model::new(
        vec![1, 4, 4],
        vec![
            Layer::Conv2d {
                weight: random_tensor(&mut r, &[3, 1, 4, 4], 1.0),
                bias: Tensor::zeros(&[3]),
                stride: 1,
                padding: 0,
            },
            Layer::Flatten,
            Layer::Dense {
                weight: random_tensor(&mut r, &[2, 3], 1.0),
                bias: Tensor::zeros(&[2]),
            },
        ],
    )
    .unwrap();
    let x = random_tensor(&mut r, &[1, 4, 4], 1.0);
    let (_, tape) = m.forward(&x).unwrap();
    let act = tape.activation(1).unwrap().data().to_vec();
    for c in 0..2 {
        let wts = match &m.layers()[2] {
            Layer::Dense { weight, .. } => weight.data()[c * 3..c * 3 + 3].to_vec(),
            _ => unreachable!(),
        };
        let expected = act.iter().zip(&wts).map(|(a, w)| a * w).sum::<f64>().max(0.0);
        let map = cam(&m, &x, c, false).unwrap();
        assert!(map.data().iter().all(|&v| (v - expected).abs() < 1e-12));
    }

    let no_conv = linear_image_model(&[1.0; 4], 2, 2);
    assert!(cam(&no_conv, &Tensor::zeros(&[1, 2, 2]), 0, false).is_err());
}

#[test]
fn guided_grad_cam_is_elementwise_product() {
    let m = random_cnn(12, [1, 12, 12], 3);
    let x = random_tensor(&mut rng(13), &[1, 12, 12], 1.0);
    let gc = cam(&m, &x, 0, false).unwrap();
    let guided = modified_backprop(&m, &x, 0, BackpropVariant::Guided).unwrap();
    assert_eq!(cam(&m, &x, 0, true).unwrap(), gc.mul(&guided).unwrap());
}

#[test]
fn deeplift_and_deepshap() {
    let w = [1.5, -2.0, 0.0, 1.0];
    let m = linear_image_model(&w, 2, 2);
    let x = image(&[1.0, 1.0, 3.0, -2.0], 2, 2);
    let zero = Tensor::zeros(&[1, 2, 2]);
    let dl = deeplift(&m, &x, 0, &zero).unwrap();
    assert_close(&dl, &x.mul(&image(&w, 2, 2)).unwrap(), 1e-15);
    assert!(deeplift(&m, &x, 0, &x).unwrap().data().iter().all(|&v| v == 0.0));

    let cnn = random_cnn(2, [1, 8, 8], 3);
    let xc = random_tensor(&mut rng(3), &[1, 8, 8], 1.0);
    let refs: Vec<Tensor> = (0..5).map(|i| random_tensor(&mut rng(20 + i), &[1, 8, 8], 1.0)).collect();
    assert_eq!(
        deepshap(&cnn, &xc, 1, &refs[..1]).unwrap(),
        deeplift(&cnn, &xc, 1, &refs[0]).unwrap()
    );
    let mut sum = Tensor::zeros(&[1, 8, 8]);
    for r in &refs {
        sum.add_assign(&deeplift(&cnn, &xc, 1, r).unwrap()).unwrap();
    }
    let mean = sum.map(|v| v / refs.len() as f64);
    assert_eq!(deepshap(&cnn, &xc, 1, &refs).unwrap(), mean);
    assert!(deepshap(&cnn, &xc, 1, &[]).is_err());
}

#[test]
fn kernel_shap_recovers_segment_effects() {
    // 2x3 image, one segment per column, pixel weights chosen so segment effects are (2, -1, 0).
    let w = [1.0, -0.5, 0.3, 1.0, -0.5, -0.3];
    let m = linear_image_model(&w, 2, 3);
    let s = Segmentation::new(2, 3, vec![0, 1, 2, 0, 1, 2]).unwrap();
    let x = Tensor::full(&[1, 2, 3], 1.0);
    let cfg = MethodConfig {
        surrogate_samples: 6,
        superpixels: 3,
        ridge: 0.0,
        ..Default::default()
    };
    let ex = Explainer::new(&m, cfg).with_segmentation(&s).with_masker(Masker::DatasetMean);
    let map = ex.explain(Method::KernelShap, &x, 0, 0).unwrap();
    let effects = [2.0, -1.0, 0.0];
    for (p, v) in map.values.data().iter().enumerate() {
        assert_abs_diff_eq!(*v, effects[p % 3], epsilon = 1e-6);
    }
}

#[test]
fn sampled_surrogates_are_reproducible() {
    let m = random_cnn(3, [1, 16, 16], 2);
    let x = random_tensor(&mut rng(4), &[1, 16, 16], 1.0);
    let s = Segmentation::grid(16, 16, 4).unwrap();
    let cfg = MethodConfig {
        surrogate_samples: 60,
        superpixels: 16,
        ..Default::default()
    };
    let ex = Explainer::new(&m, cfg).with_segmentation(&s);
    for method in [Method::Lime, Method::KernelShap] {
        let a = ex.explain(method, &x, 0, 5).unwrap();
        assert_eq!(a, ex.explain(method, &x, 0, 5).unwrap());
        assert_ne!(a, ex.explain(method, &x, 0, 6).unwrap());
    }
}

#[test]
fn kernel_shap_with_too_few_samples_is_rejected() {
    let m = linear_image_model(&[1.0; 16], 4, 4);
    let s = Segmentation::per_pixel(4, 4);
    let cfg = MethodConfig {
        surrogate_samples: 10,
        superpixels: 16,
        ..Default::default()
    };
    let ex = Explainer::new(&m, cfg).with_segmentation(&s);
    assert!(ex.explain(Method::KernelShap, &Tensor::zeros(&[1, 4, 4]), 0, 0).is_err());
}

#[test]
fn uniform_baseline_is_fixed_per_seed() {
    let m = linear_image_model(&[1.0; 4], 2, 2);
    let ex = Explainer::new(&m, MethodConfig::default());
    let x = Tensor::zeros(&[1, 2, 2]);
    let a = ex.explain(Method::Random, &x, 0, 42).unwrap();
    let other = image(&[5.0, 1.0, 2.0, 3.0], 2, 2);
    assert_eq!(a.values, ex.explain(Method::Random, &other, 0, 42).unwrap().values);
}
