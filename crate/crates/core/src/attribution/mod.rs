//! Attribution methods and baselines.

mod baseline;
mod gradient;
mod surrogate;

use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use baseline::{edge_map, uniform_map};
pub use gradient::{
    cam, deeplift, deepshap, expected_gradients, integrated_gradients, modified_backprop,
    noise_ensemble, BackpropVariant, NoiseMode,
};
pub use surrogate::{broadcast, surrogate_coefficients, SurrogateMode, SurrogateParams};

use crate::autodiff::Model;
use crate::error::{Error, Result};
use crate::masking::Masker;
use crate::segmentation::{slic, Segmentation, SlicParams};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Gradient,
    InputXGradient,
    GradCam,
    Deconvolution,
    GuidedBackprop,
    GuidedGradCam,
    IntegratedGradients,
    ExpectedGradients,
    SmoothGrad,
    VarGrad,
    Lime,
    KernelShap,
    DeepLift,
    DeepShap,
    /// Uniform-random baseline map.
    Random,
    /// Sobel edge-detector baseline.
    Edge,
}

impl Method {
    /// The fourteen explanation methods, baselines excluded.
    pub const ALL: [Method; 14] = [
        Method::Gradient,
        Method::InputXGradient,
        Method::GradCam,
        Method::Deconvolution,
        Method::GuidedBackprop,
        Method::GuidedGradCam,
        Method::IntegratedGradients,
        Method::ExpectedGradients,
        Method::SmoothGrad,
        Method::VarGrad,
        Method::Lime,
        Method::KernelShap,
        Method::DeepLift,
        Method::DeepShap,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Method::Gradient => "gradient",
            Method::InputXGradient => "input_x_gradient",
            Method::GradCam => "grad_cam",
            Method::Deconvolution => "deconvolution",
            Method::GuidedBackprop => "guided_backprop",
            Method::GuidedGradCam => "guided_grad_cam",
            Method::IntegratedGradients => "integrated_gradients",
            Method::ExpectedGradients => "expected_gradients",
            Method::SmoothGrad => "smooth_grad",
            Method::VarGrad => "var_grad",
            Method::Lime => "lime",
            Method::KernelShap => "kernel_shap",
            Method::DeepLift => "deep_lift",
            Method::DeepShap => "deep_shap",
            Method::Random => "random",
            Method::Edge => "edge",
        }
    }

    pub fn is_baseline(self) -> bool {
        matches!(self, Method::Random | Method::Edge)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .iter()
            .chain(&[Method::Random, Method::Edge])
            .copied()
            .find(|m| m.id() == s)
            .ok_or_else(|| Error::config(format!("unknown method {s:?}")))
    }
}

/// Hyperparameters of the stochastic and path-based methods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MethodConfig {
    pub ig_steps: usize,
    pub eg_draws: usize,
    pub noise_samples: usize,
    /// Noise std as a fraction of the input's value range.
    pub noise_level: f64,
    pub deepshap_references: usize,
    pub surrogate_samples: usize,
    pub superpixels: usize,
    pub ridge: f64,
    pub lime_kernel_width: f64,
}

impl Default for MethodConfig {
    fn default() -> Self {
        Self {
            ig_steps: 64,
            eg_draws: 100,
            noise_samples: 50,
            noise_level: 0.15,
            deepshap_references: 16,
            surrogate_samples: 300,
            superpixels: 50,
            ridge: 1e-6,
            lime_kernel_width: 0.25,
        }
    }
}

impl MethodConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::config(format!("invalid method config: {what}")));
        if self.ig_steps < 2 {
            return bad("ig_steps < 2");
        }
        if self.eg_draws == 0 || self.noise_samples < 2 || self.deepshap_references == 0 {
            return bad("sample counts must be positive (noise_samples >= 2)");
        }
        if !(self.noise_level > 0.0) || !(self.lime_kernel_width > 0.0) || !(self.ridge >= 0.0) {
            return bad("noise level and kernel width must be positive, ridge non-negative");
        }
        if self.superpixels == 0 || self.surrogate_samples < self.superpixels + 2 {
            return bad("surrogate_samples must be at least superpixels + 2");
        }
        Ok(())
    }

    fn surrogate(&self) -> SurrogateParams {
        SurrogateParams {
            samples: self.surrogate_samples,
            ridge: self.ridge,
            kernel_width: self.lime_kernel_width,
        }
    }
}

/// Relevance scores for one (input, class) pair, shaped like the input.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributionMap {
    pub values: Tensor,
    pub method: Method,
    pub class: usize,
}

/// Anything that maps `(x, class)` to an attribution of `x`'s shape.
pub trait Explain: Sync {
    fn explain(&self, x: &Tensor, class: usize) -> Result<Tensor>;
}

impl<F> Explain for F
where
    F: Fn(&Tensor, usize) -> Result<Tensor> + Sync,
{
    fn explain(&self, x: &Tensor, class: usize) -> Result<Tensor> {
        self(x, class)
    }
}

/// Runs any method against one model with shared configuration.
#[derive(Debug, Clone)]
pub struct Explainer<'a> {
    model: &'a Model,
    config: MethodConfig,
    references: &'a [Tensor],
    baseline: Option<Tensor>,
    masker: Masker,
    segmentation: Option<&'a Segmentation>,
}

impl<'a> Explainer<'a> {
    pub fn new(model: &'a Model, config: MethodConfig) -> Self {
        Self {
            model,
            config,
            references: &[],
            baseline: None,
            masker: Masker::DatasetMean,
            segmentation: None,
        }
    }

    /// Training images used by ExpectedGradients and DeepSHAP.
    pub fn with_references(mut self, references: &'a [Tensor]) -> Self {
        self.references = references;
        self
    }

    /// Baseline for IntegratedGradients and reference for DeepLIFT (default zeros).
    pub fn with_baseline(mut self, baseline: Tensor) -> Self {
        self.baseline = Some(baseline);
        self
    }

    /// Fill rule for absent surrogate segments.
    pub fn with_masker(mut self, masker: Masker) -> Self {
        self.masker = masker;
        self
    }

    /// Fixed segmentation for LIME/KernelSHAP instead of per-image SLIC.
    pub fn with_segmentation(mut self, segmentation: &'a Segmentation) -> Self {
        self.segmentation = Some(segmentation);
        self
    }

    pub fn model(&self) -> &Model {
        self.model
    }

    pub fn config(&self) -> &MethodConfig {
        &self.config
    }

    /// Attribution of `x` for class `c`; stochastic methods draw from `seed` only.
    pub fn explain(&self, method: Method, x: &Tensor, c: usize, seed: u64) -> Result<AttributionMap> {
        let model = self.model;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let zero = || Tensor::zeros(x.shape());
        let values = match method {
            Method::Gradient => modified_backprop(model, x, c, BackpropVariant::Gradient)?,
            Method::InputXGradient => modified_backprop(model, x, c, BackpropVariant::InputXGradient)?,
            Method::Deconvolution => modified_backprop(model, x, c, BackpropVariant::Deconvolution)?,
            Method::GuidedBackprop => modified_backprop(model, x, c, BackpropVariant::Guided)?,
            Method::GradCam => cam(model, x, c, false)?,
            Method::GuidedGradCam => cam(model, x, c, true)?,
            Method::IntegratedGradients => {
                let b = self.baseline.clone().unwrap_or_else(zero);
                integrated_gradients(model, x, c, &b, self.config.ig_steps)?
            }
            Method::ExpectedGradients => {
                expected_gradients(model, x, c, self.references, self.config.eg_draws, &mut rng)?
            }
            Method::SmoothGrad | Method::VarGrad => {
                let mode = if method == Method::SmoothGrad {
                    NoiseMode::SmoothGrad
                } else {
                    NoiseMode::VarGrad
                };
                let sigma = self.config.noise_level * (x.max() - x.min());
                noise_ensemble(model, x, c, mode, self.config.noise_samples, sigma, &mut rng)?
            }
            Method::DeepLift => {
                let r = self.baseline.clone().unwrap_or_else(zero);
                deeplift(model, x, c, &r)?
            }
            Method::DeepShap => {
                let n = self.references.len();
                let k = self.config.deepshap_references.min(n);
                if k == 0 {
                    return Err(Error::config("DeepSHAP needs at least one reference image"));
                }
                let mut picked: Vec<usize> = sample(&mut rng, n, k).into_vec();
                picked.sort_unstable();
                let refs: Vec<Tensor> = picked.iter().map(|&i| self.references[i].clone()).collect();
                deepshap(model, x, c, &refs)?
            }
            Method::Lime | Method::KernelShap => {
                let mode = if method == Method::Lime {
                    SurrogateMode::Lime
                } else {
                    SurrogateMode::KernelShap
                };
                let owned;
                let s = match self.segmentation {
                    Some(s) => s,
                    None => {
                        owned = slic(x, &SlicParams::with_target(self.config.superpixels))?;
                        &owned
                    }
                };
                let fill = self.masker.fill(x)?;
                let coef = surrogate_coefficients(
                    model,
                    x,
                    c,
                    mode,
                    s,
                    &fill,
                    &self.config.surrogate(),
                    &mut rng,
                )?;
                broadcast(&coef, s, x.shape())?
            }
            Method::Random => uniform_map(x.shape(), seed),
            Method::Edge => edge_map(x)?,
        };
        if !values.all_finite() {
            return Err(Error::Degenerate(format!("{method} produced non-finite values")));
        }
        Ok(AttributionMap {
            values,
            method,
            class: c,
        })
    }

    /// Binds a method and seed into a re-executable [`Explain`] implementation.
    pub fn bind(&self, method: Method, seed: u64) -> BoundMethod<'_, 'a> {
        BoundMethod {
            explainer: self,
            method,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BoundMethod<'e, 'a> {
    explainer: &'e Explainer<'a>,
    method: Method,
    seed: u64,
}

impl Explain for BoundMethod<'_, '_> {
    fn explain(&self, x: &Tensor, class: usize) -> Result<Tensor> {
        Ok(self.explainer.explain(self.method, x, class, self.seed)?.values)
    }
}
