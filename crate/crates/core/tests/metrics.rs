mod common;

use approx::assert_abs_diff_eq;
use attrib_bench::attribution::{Explainer, Method, MethodConfig};
use attrib_bench::autodiff::{Layer, Model};
use attrib_bench::data::{synth_generate, Normalization};
use attrib_bench::masking::{Masker, Order};
use attrib_bench::metrics::{
    deletion, impact_coverage, infidelity, infidelity_terms, insertion, irof, max_sensitivity,
    minimal_subset, optimal_scaling, AdversarialPatch, sensitivity_n, seg_sensitivity_n, train_patch, Flag,
    MinimalSubsetMode, PatchConfig, Perturbation,
};
use attrib_bench::segmentation::Segmentation;
use attrib_bench::Tensor;
use common::{linear_image_model, random_cnn, random_tensor, rng};

fn image(values: &[f64], h: usize, w: usize) -> Tensor {
    Tensor::new(vec![1, h, w], values.to_vec()).unwrap()
}

/// Two-logit model over a `(1, h, w)` image: logit 0 = `w.x + b`, logit 1 = 0.
fn margin_model(weights: &[f64], bias: f64, h: usize, w: usize) -> Model {
    let mut wt = weights.to_vec();
    wt.extend(std::iter::repeat_n(0.0, weights.len()));
    Model::new(
        vec![1, h, w],
        vec![
            Layer::Flatten,
            Layer::Dense {
                weight: Tensor::new(vec![2, h * w], wt).unwrap(),
                bias: Tensor::new(vec![2], vec![bias, 0.0]).unwrap(),
            },
        ],
    )
    .unwrap()
}

#[test]
fn deletion_hand_examples() {
    let m = linear_image_model(&[1.0, 2.0], 1, 2);
    let x = image(&[1.0, 1.0], 1, 2);
    let e = image(&[1.0, 2.0], 1, 2);
    let morf = deletion(&m, &x, &e, 0, Order::MoRF, &Masker::DatasetMean, 2, 1.0).unwrap();
    assert_eq!(morf, 0.5);
    let lerf = deletion(&m, &x, &e, 0, Order::LeRF, &Masker::DatasetMean, 2, 1.0).unwrap();
    assert_eq!(lerf, 1.0);
}

#[test]
fn insertion_matches_deletion_at_full_resolution() {
    let m = random_cnn(3, [1, 8, 8], 3);
    let mut r = rng(5);
    let x = random_tensor(&mut r, &[1, 8, 8], 1.0);
    let e = random_tensor(&mut r, &[1, 8, 8], 1.0);
    for masker in [Masker::DatasetMean, Masker::blur()] {
        let del = |o| deletion(&m, &x, &e, 1, o, &masker, 64, 1.0).unwrap();
        let ins = |o| insertion(&m, &x, &e, 1, o, &masker, 64, 1.0).unwrap();
        assert_eq!(ins(Order::MoRF).to_bits(), del(Order::LeRF).to_bits());
        assert_eq!(ins(Order::LeRF).to_bits(), del(Order::MoRF).to_bits());
    }
}

#[test]
fn insertion_starts_from_blank() {
    // With one step the only point is the fully masked image.
    let m = linear_image_model(&[1.0, 2.0, 3.0, 4.0], 2, 2);
    let x = image(&[1.0, 1.0, 1.0, 1.0], 2, 2);
    let e = image(&[4.0, 3.0, 2.0, 1.0], 2, 2);
    assert_eq!(insertion(&m, &x, &e, 0, Order::MoRF, &Masker::DatasetMean, 1, 1.0).unwrap(), 0.0);
    // Two steps over the whole image: blank, then the top two pixels (weights 1, 2).
    let two = insertion(&m, &x, &e, 0, Order::MoRF, &Masker::DatasetMean, 2, 1.0).unwrap();
    assert_eq!(two, 1.5);
}

#[test]
fn minimal_subset_examples() {
    let constant = margin_model(&[0.0; 4], 1.0, 2, 2);
    let x = image(&[0.5, -0.5, 1.0, 2.0], 2, 2);
    let e = image(&[1.0, 2.0, 3.0, 4.0], 2, 2);
    let r = minimal_subset(&constant, &x, &e, MinimalSubsetMode::Deletion, &Masker::DatasetMean, None)
        .unwrap();
    assert_eq!((r.score, r.flag), (5.0, Flag::Censored));

    // Margin 0.5; removing the top pixel (weight 1, value 1) makes it -0.5.
    let m = margin_model(&[0.1, 0.1, 0.1, 1.0], -0.8, 2, 2);
    let x = image(&[1.0, 1.0, 1.0, 1.0], 2, 2);
    let r = minimal_subset(&m, &x, &e, MinimalSubsetMode::Deletion, &Masker::DatasetMean, None).unwrap();
    assert_eq!(r.score, 1.0);

    // The blank image is already classified as the original class.
    let m = margin_model(&[0.1, 0.1, 0.1, 0.1], 1.0, 2, 2);
    let r = minimal_subset(&m, &x, &e, MinimalSubsetMode::Insertion, &Masker::DatasetMean, None).unwrap();
    assert_eq!((r.score, r.flag), (0.0, Flag::None));
}

#[test]
fn irof_examples() {
    let m = linear_image_model(&[1.0, 2.0, 3.0, 4.0], 2, 2);
    let x = image(&[1.0, 1.0, 1.0, 1.0], 2, 2);
    let e = image(&[0.1, 0.2, 0.3, 0.4], 2, 2);
    let single = Segmentation::single(2, 2);
    let blur = Masker::blur();
    let full = blur.fill(&x).unwrap();
    let expected = m.logits(&full).unwrap().data()[0];
    let got = irof(&m, &x, &e, 0, Order::MoRF, &blur, &single).unwrap();
    assert_eq!(got, expected);

    let halves = Segmentation::new(2, 2, vec![0, 0, 1, 1]).unwrap();
    let flat = Tensor::full(&[1, 2, 2], 0.3);
    let a = irof(&m, &x, &flat, 0, Order::MoRF, &Masker::DatasetMean, &halves).unwrap();
    let b = irof(&m, &x, &flat, 0, Order::LeRF, &Masker::DatasetMean, &halves).unwrap();
    assert_eq!(a, b);

    // MoRF removes the bottom row first (higher scores): f = 3, then 0.
    let morf = irof(&m, &x, &e, 0, Order::MoRF, &Masker::DatasetMean, &halves).unwrap();
    assert_eq!(morf, (3.0 + 0.0) / 2.0);
    let lerf = irof(&m, &x, &e, 0, Order::LeRF, &Masker::DatasetMean, &halves).unwrap();
    assert_eq!(lerf, (7.0 + 0.0) / 2.0);
}

#[test]
fn sensitivity_n_on_linear_model() {
    let w: Vec<f64> = (0..36).map(|i| (i as f64 * 0.37).sin()).collect();
    let m = linear_image_model(&w, 6, 6);
    let x = random_tensor(&mut rng(1), &[1, 6, 6], 1.0);
    let e = x.mul(&image(&w, 6, 6)).unwrap();
    let r = sensitivity_n(&m, &x, &e, 0, 4, 100, &Masker::DatasetMean, 3).unwrap();
    assert_abs_diff_eq!(r.score, 1.0, epsilon = 1e-12);
    let r = sensitivity_n(&m, &x, &e.scale(-1.0), 0, 4, 100, &Masker::DatasetMean, 3).unwrap();
    assert_abs_diff_eq!(r.score, -1.0, epsilon = 1e-12);
    assert!(sensitivity_n(&m, &x, &e, 0, 36, 100, &Masker::DatasetMean, 3).is_err());

    let cnn = random_cnn(2, [1, 6, 6], 2);
    let r = sensitivity_n(&cnn, &x, &e, 0, 10, 50, &Masker::blur(), 9).unwrap();
    assert!((-1.0..=1.0).contains(&r.score));
}

#[test]
fn seg_sensitivity_n_examples() {
    // Equal-size blocks with one weight per block: segment means track the effects.
    let s = Segmentation::grid(4, 4, 2).unwrap();
    let block_w = [1.0, -2.0, 0.5, 3.0];
    let w: Vec<f64> = (0..16).map(|p| block_w[s.label(p)]).collect();
    let m = linear_image_model(&w, 4, 4);
    let x = Tensor::full(&[1, 4, 4], 1.0);
    let e = image(&w, 4, 4);
    let r = seg_sensitivity_n(&m, &x, &e, 0, &s, 2, 100, &Masker::DatasetMean, 1).unwrap();
    assert_abs_diff_eq!(r.score, 1.0, epsilon = 1e-12);

    let halves = Segmentation::new(4, 4, (0..16).map(|p| p / 8).collect()).unwrap();
    let r = seg_sensitivity_n(&m, &x, &e, 0, &halves, 1, 100, &Masker::DatasetMean, 1).unwrap();
    assert!(r.score.is_finite() && (-1.0..=1.0).contains(&r.score));
}

#[test]
fn infidelity_linear_and_scaling() {
    let w: Vec<f64> = (0..25).map(|i| (i as f64).cos()).collect();
    let m = linear_image_model(&w, 5, 5);
    let x = random_tensor(&mut rng(2), &[1, 5, 5], 1.0);
    let e = image(&w, 5, 5);
    for p in [Perturbation::NoisyBaseline { sigma: 0.2 }, Perturbation::Square { side: 2 }] {
        let base = infidelity(&m, &x, &e, 0, p, 200, 4).unwrap();
        assert!(base.score.abs() < 1e-20, "{p:?}: {}", base.score);
        let scaled = infidelity(&m, &x, &e.scale(10.0), 0, p, 200, 4).unwrap();
        assert!(scaled.score.abs() < 1e-20);
    }

    let cnn = random_cnn(7, [1, 8, 8], 3);
    let xc = random_tensor(&mut rng(3), &[1, 8, 8], 1.0);
    let ec = random_tensor(&mut rng(4), &[1, 8, 8], 1.0);
    let p = Perturbation::NoisyBaseline { sigma: 0.2 };
    let (a, b) = infidelity_terms(&cnn, &xc, &ec, 0, p, 100, 5).unwrap();
    let (beta, infd) = optimal_scaling(&a, &b).unwrap();
    // Independent fit: the vertex of the quadratic q(beta) sampled at -1, 0, 1.
    let q = |t: f64| a.iter().zip(&b).map(|(x, y)| (t * x - y).powi(2)).sum::<f64>() / a.len() as f64;
    let curv = (q(1.0) + q(-1.0)) / 2.0 - q(0.0);
    let slope = (q(1.0) - q(-1.0)) / 2.0;
    let vertex = -slope / (2.0 * curv);
    assert!((beta - vertex).abs() <= 1e-12 * beta.abs().max(1.0));
    assert_eq!(infidelity(&cnn, &xc, &ec, 0, p, 100, 5).unwrap().score, infd);

    let zero = Tensor::zeros(&[1, 8, 8]);
    let r = infidelity(&cnn, &xc, &zero, 0, p, 10, 5).unwrap();
    assert_eq!(r.flag, Flag::Degenerate);
}

#[test]
fn max_sensitivity_examples() {
    let m = linear_image_model(&[1.0, -1.0, 2.0, 0.5], 2, 2);
    let x = image(&[0.1, 0.2, 0.3, 0.4], 2, 2);
    let constant = |_: &Tensor, _: usize| Ok(Tensor::full(&[1, 2, 2], 1.0));
    assert_eq!(max_sensitivity(&constant, &x, 0, 0.1, 20, 1).unwrap().score, 0.0);
    let ex = Explainer::new(&m, MethodConfig::default());
    let grad = ex.bind(Method::Gradient, 0);
    assert_eq!(max_sensitivity(&grad, &x, 0, 0.1, 20, 1).unwrap().score, 0.0);

    let cnn = random_cnn(1, [1, 8, 8], 2);
    let ex = Explainer::new(&cnn, MethodConfig::default());
    let xc = random_tensor(&mut rng(6), &[1, 8, 8], 1.0);
    let r = max_sensitivity(&ex.bind(Method::Gradient, 0), &xc, 1, 0.1, 10, 2).unwrap();
    assert!(r.score >= 0.0);
    let zero = |_: &Tensor, _: usize| Ok(Tensor::zeros(&[1, 8, 8]));
    assert_eq!(max_sensitivity(&zero, &xc, 1, 0.1, 3, 2).unwrap().flag, Flag::Degenerate);
}

#[test]
fn patch_training_and_coverage() {
    let raw = synth_generate(3, 120, 16, 3).unwrap();
    let stats = raw.fit_normalization().unwrap();
    let ds = raw.normalized(&stats).unwrap();
    let images: Vec<Tensor> = (0..ds.len()).map(|i| ds.image(i)).collect();
    let model = random_cnn(4, [1, 16, 16], 3);
    let cfg = PatchConfig {
        side: Some(4),
        steps: 0,
        seed: 9,
        ..Default::default()
    };
    let a = train_patch(&model, &images[..60], &images[60..], 1, &cfg, &stats).unwrap();
    let b = train_patch(&model, &images[..60], &images[60..], 1, &cfg, &stats).unwrap();
    assert_eq!(a.patch, b.patch);
    assert_eq!(a.history.len(), 1);
    let (lo, hi) = stats.valid_range(0);
    assert!(a.patch.data().iter().all(|v| (lo..=hi).contains(v)));
    assert!((0.0..=1.0).contains(&a.success_rate));

    let trained = PatchConfig {
        steps: 10,
        eval_every: 5,
        ..cfg
    };
    let p = train_patch(&model, &images[..60], &images[60..], 1, &trained, &stats).unwrap();
    assert_eq!(p.history.len(), 3);
    assert!(p.patch.data().iter().all(|v| (lo..=hi).contains(v)));
    assert!(train_patch(&model, &images, &images, 1, &PatchConfig { side: Some(9), ..cfg.clone() }, &Normalization::identity(1)).is_err());
}

#[test]
fn impact_coverage_examples() {
    // Always predicts class 0, so any patch targeting 0 "succeeds".
    let model = margin_model(&[0.0; 64], 1.0, 8, 8);
    let patch = AdversarialPatch {
        patch: Tensor::full(&[1, 2, 2], 9.0),
        target: 0,
        success_rate: 1.0,
        history: vec![1.0],
    };
    let highlight = |x: &Tensor, _: usize| Ok(x.map(|v| if v == 9.0 { 1.0 } else { 0.0 }));
    let avoid = |x: &Tensor, _: usize| Ok(x.map(|v| if v == 9.0 { -1.0 } else { 0.0 }));
    let x = Tensor::zeros(&[1, 8, 8]);
    for seed in 0..10 {
        assert_eq!(impact_coverage(&model, &x, &highlight, &patch, seed).unwrap().score, 1.0);
        assert_eq!(impact_coverage(&model, &x, &avoid, &patch, seed).unwrap().score, 0.0);
    }
    let unreachable_target = AdversarialPatch {
        target: 1,
        ..patch
    };
    let r = impact_coverage(&model, &x, &highlight, &unreachable_target, 0).unwrap();
    assert_eq!(r.flag, Flag::Skipped);
}
