use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::layer::{Layer, LayerKind};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Forward activations of one pass. Activation `0` is the model input and
/// activation `i + 1` is the output of layer `i`.
#[derive(Debug, Clone)]
pub struct Tape {
    activations: Vec<Tensor>,
}

/// View of one layer's cached input and output.
#[derive(Debug, Clone, Copy)]
pub struct TapeNode<'a> {
    pub layer: usize,
    pub input: &'a Tensor,
    pub output: &'a Tensor,
}

impl Tape {
    pub fn len(&self) -> usize {
        self.activations.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn node(&self, layer: usize) -> TapeNode<'_> {
        TapeNode {
            layer,
            input: &self.activations[layer],
            output: &self.activations[layer + 1],
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = TapeNode<'_>> {
        (0..self.len()).map(|i| self.node(i))
    }

    pub fn activation(&self, index: usize) -> Option<&Tensor> {
        self.activations.get(index)
    }

    pub fn input(&self) -> &Tensor {
        &self.activations[0]
    }

    pub fn logits(&self) -> &Tensor {
        self.activations.last().expect("tape has at least the input")
    }
}

/// How gradients pass through ReLU (and, for DeepLIFT, max-pool) layers on the way back.
#[derive(Debug, Clone, Copy)]
pub enum BackpropRule<'a> {
    /// Exact chain rule.
    Standard,
    /// Only non-negative gradients pass ReLU, regardless of the forward input.
    Deconv,
    /// Gradients pass ReLU only when both the gradient and the forward input are positive.
    Guided,
    /// DeepLIFT Rescale multipliers relative to the activations of a reference pass.
    DeepLiftRescale(&'a Tape),
}

/// Per-layer parameter gradients, `(weight, bias)` for layers with parameters.
#[derive(Debug, Clone)]
pub struct ParamGrads {
    grads: Vec<Option<(Tensor, Tensor)>>,
}

impl ParamGrads {
    pub fn zeros_like(model: &Model) -> Self {
        let grads = model
            .layers
            .iter()
            .map(|l| match l {
                Layer::Dense { weight, bias } | Layer::Conv2d { weight, bias, .. } => {
                    Some((Tensor::zeros(weight.shape()), Tensor::zeros(bias.shape())))
                }
                _ => None,
            })
            .collect();
        Self { grads }
    }

    /// Gradient tensors in the same order as [`Model::params_mut`].
    pub fn tensors(&self) -> impl Iterator<Item = &Tensor> {
        self.grads.iter().flatten().flat_map(|(w, b)| [w, b])
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.grads
            .iter_mut()
            .flatten()
            .flat_map(|(w, b)| [w, b])
    }

    pub fn clear(&mut self) {
        for t in self.tensors_mut() {
            t.data_mut().fill(0.0);
        }
    }
}

/// Widths of the two-conv classifier used throughout the benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct CnnWidths {
    pub conv1: usize,
    pub conv2: usize,
    pub hidden: usize,
    #[serde(default = "default_kernel")]
    pub kernel: usize,
    /// Stride of the first convolution; 2 halves the cost on large inputs.
    #[serde(default = "default_stride")]
    pub first_stride: usize,
}

fn default_kernel() -> usize {
    3
}

fn default_stride() -> usize {
    1
}

impl Default for CnnWidths {
    fn default() -> Self {
        Self {
            conv1: 32,
            conv2: 64,
            hidden: 128,
            kernel: 3,
            first_stride: 1,
        }
    }
}

impl CnnWidths {
    /// Narrow variant for fast desk runs on a single core.
    pub fn desk() -> Self {
        Self {
            conv1: 8,
            conv2: 16,
            hidden: 32,
            kernel: 3,
            first_stride: 1,
        }
    }
}

/// Feed-forward differentiable classifier. Parameters are immutable during evaluation,
/// so a `&Model` can be shared across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    input_shape: Vec<usize>,
    layers: Vec<Layer>,
    shapes: Vec<Vec<usize>>,
}

impl Model {
    /// Builds a model, type-checking every layer against the shape flowing into it.
    pub fn new(input_shape: Vec<usize>, layers: Vec<Layer>) -> Result<Self> {
        if input_shape.is_empty() || input_shape.contains(&0) {
            return Err(Error::shape(format!("invalid input shape {input_shape:?}")));
        }
        let mut shapes = vec![input_shape.clone()];
        for (i, layer) in layers.iter().enumerate() {
            let next = layer
                .output_shape(shapes.last().unwrap())
                .map_err(|e| Error::shape(format!("layer {i} ({:?}): {e}", layer.kind())))?;
            shapes.push(next);
        }
        if shapes.last().unwrap().len() != 1 {
            return Err(Error::shape("model must end in a vector of logits"));
        }
        Ok(Self {
            input_shape,
            layers,
            shapes,
        })
    }

    /// `f(x) = w·x + b` with a single logit.
    pub fn linear(weights: &[f64], bias: f64) -> Self {
        let w = Tensor::new(vec![1, weights.len()], weights.to_vec()).expect("non-empty weights");
        Self::new(
            vec![weights.len()],
            vec![Layer::Dense {
                weight: w,
                bias: Tensor::from_slice(&[bias]),
            }],
        )
        .expect("linear model")
    }

    /// The two-conv CNN: conv-relu-pool, conv-relu-pool, dense-relu, dense.
    pub fn small_cnn(
        input: [usize; 3],
        classes: usize,
        widths: CnnWidths,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = widths.kernel;
        let [c, ..] = input;
        let conv1 = he_tensor(&mut rng, &[widths.conv1, c, k, k], c * k * k);
        let conv2 = he_tensor(
            &mut rng,
            &[widths.conv2, widths.conv1, k, k],
            widths.conv1 * k * k,
        );
        let mut layers = vec![
            Layer::Conv2d {
                weight: conv1,
                bias: Tensor::zeros(&[widths.conv1]),
                stride: widths.first_stride,
                padding: k / 2,
            },
            Layer::Relu,
            Layer::MaxPool2d { size: 2, stride: 2 },
            Layer::Conv2d {
                weight: conv2,
                bias: Tensor::zeros(&[widths.conv2]),
                stride: 1,
                padding: k / 2,
            },
            Layer::Relu,
            Layer::MaxPool2d { size: 2, stride: 2 },
            Layer::Flatten,
        ];
        let flat = Model::new(input.to_vec(), layers.clone())?.output_shape()[0];
        layers.push(Layer::Dense {
            weight: he_tensor(&mut rng, &[widths.hidden, flat], flat),
            bias: Tensor::zeros(&[widths.hidden]),
        });
        layers.push(Layer::Relu);
        layers.push(Layer::Dense {
            weight: he_tensor(&mut rng, &[classes, widths.hidden], widths.hidden),
            bias: Tensor::zeros(&[classes]),
        });
        Model::new(input.to_vec(), layers)
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn output_shape(&self) -> &[usize] {
        self.shapes.last().unwrap()
    }

    pub fn classes(&self) -> usize {
        self.output_shape()[0]
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Shape of activation `index` (0 = input).
    pub fn activation_shape(&self, index: usize) -> Option<&[usize]> {
        self.shapes.get(index).map(Vec::as_slice)
    }

    /// Trainable tensors in layer order, weight before bias.
    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.layers.iter_mut().flat_map(|l| match l {
            Layer::Dense { weight, bias } | Layer::Conv2d { weight, bias, .. } => {
                vec![weight, bias]
            }
            _ => vec![],
        })
    }

    pub fn params(&self) -> impl Iterator<Item = &Tensor> {
        self.layers.iter().flat_map(|l| match l {
            Layer::Dense { weight, bias } | Layer::Conv2d { weight, bias, .. } => {
                vec![weight, bias]
            }
            _ => vec![],
        })
    }

    /// Index of the last convolution layer, if any.
    pub fn last_conv(&self) -> Option<usize> {
        self.layers
            .iter()
            .rposition(|l| l.kind() == LayerKind::Conv2d)
    }

    /// Runs the model, caching every activation. Returns raw logits (no softmax).
    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, Tape)> {
        self.check_input(x)?;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(x.clone());
        for (i, layer) in self.layers.iter().enumerate() {
            let next = layer.forward(activations.last().unwrap(), &self.shapes[i + 1]);
            activations.push(next);
        }
        let logits = activations.last().unwrap().clone();
        Ok((logits, Tape { activations }))
    }

    /// Logits only; intermediate activations are dropped as soon as they are consumed.
    pub fn logits(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let mut current = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            current = layer.forward(&current, &self.shapes[i + 1]);
        }
        Ok(current)
    }

    pub fn predict(&self, x: &Tensor) -> Result<usize> {
        Ok(self.logits(x)?.argmax())
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.shape() != self.input_shape.as_slice() {
            return Err(Error::shape(format!(
                "model expects input {:?}, got {:?}",
                self.input_shape,
                x.shape()
            )));
        }
        Ok(())
    }

    fn check_tape(&self, tape: &Tape) -> Result<()> {
        if tape.activations.len() != self.shapes.len()
            || tape
                .activations
                .iter()
                .zip(&self.shapes)
                .any(|(a, s)| a.shape() != s.as_slice())
        {
            return Err(Error::shape("tape was not produced by this model"));
        }
        Ok(())
    }

    /// Gradient of `logit[class]` with respect to the input under `rule`.
    ///
    /// For [`BackpropRule::DeepLiftRescale`] the result holds multipliers; multiply by
    /// `(x - reference)` to get contributions.
    pub fn backward(&self, tape: &Tape, rule: BackpropRule<'_>, class: usize) -> Result<Tensor> {
        self.grad_at_layer(tape, rule, class, 0)
    }

    /// Gradient of `logit[class]` with respect to activation `index`
    /// (0 = input, `i + 1` = output of layer `i`).
    pub fn grad_at_layer(
        &self,
        tape: &Tape,
        rule: BackpropRule<'_>,
        class: usize,
        index: usize,
    ) -> Result<Tensor> {
        self.check_tape(tape)?;
        if class >= self.classes() {
            return Err(Error::shape(format!(
                "class {class} out of range for {} outputs",
                self.classes()
            )));
        }
        if index > self.layers.len() {
            return Err(Error::shape(format!(
                "activation index {index} out of range (model has {} layers)",
                self.layers.len()
            )));
        }
        let mut seed = Tensor::zeros(self.output_shape());
        seed.data_mut()[class] = 1.0;
        self.backward_from(tape, rule, seed, index, None)
    }

    /// Backpropagates an arbitrary output gradient, accumulating parameter gradients.
    pub fn backward_with_params(
        &self,
        tape: &Tape,
        output_grad: Tensor,
        grads: &mut ParamGrads,
    ) -> Result<Tensor> {
        self.check_tape(tape)?;
        output_grad.check_same_shape(tape.logits())?;
        self.backward_from(tape, BackpropRule::Standard, output_grad, 0, Some(grads))
    }

    fn backward_from(
        &self,
        tape: &Tape,
        rule: BackpropRule<'_>,
        seed: Tensor,
        stop: usize,
        mut grads: Option<&mut ParamGrads>,
    ) -> Result<Tensor> {
        if let BackpropRule::DeepLiftRescale(reference) = rule {
            self.check_tape(reference).map_err(|_| {
                Error::config("DeepLIFT reference activations do not match the model")
            })?;
        }
        let mut g = seed;
        for i in (stop..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let node = tape.node(i);
            g = match (layer, rule) {
                (Layer::Relu, BackpropRule::Deconv) => g.map(|v| v.max(0.0)),
                (Layer::Relu, BackpropRule::Guided) => node
                    .input
                    .zip_with(&g, |x, gv| if x > 0.0 && gv > 0.0 { gv } else { 0.0 })?,
                (Layer::Relu, BackpropRule::DeepLiftRescale(reference)) => {
                    let r = reference.node(i);
                    rescale_relu(node.input, node.output, r.input, r.output, &g)
                }
                _ => {
                    let pg = grads.as_deref_mut().and_then(|pg| pg.grads[i].as_mut());
                    layer.backward_linear(node.input, &g, pg.map(|(w, b)| (w, b)))
                }
            };
        }
        Ok(g)
    }
}

/// Rescale rule: multiplier `Δy/Δx`, falling back to the local gradient when `Δx ≈ 0`.
fn rescale_relu(x: &Tensor, y: &Tensor, x_ref: &Tensor, y_ref: &Tensor, g: &Tensor) -> Tensor {
    const EPS: f64 = 1e-10;
    let data = x
        .data()
        .iter()
        .zip(y.data())
        .zip(x_ref.data().iter().zip(y_ref.data()))
        .zip(g.data())
        .map(|(((&xi, &yi), (&xr, &yr)), &gi)| {
            let dx = xi - xr;
            let m = if dx.abs() > EPS {
                (yi - yr) / dx
            } else if xi > 0.0 {
                1.0
            } else {
                0.0
            };
            gi * m
        })
        .collect();
    Tensor::new(x.shape().to_vec(), data).expect("relu shape")
}

fn he_tensor(rng: &mut ChaCha8Rng, shape: &[usize], fan_in: usize) -> Tensor {
    let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("valid std");
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| normal.sample(rng)).collect())
        .expect("init shape")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn relu_dense() -> Model {
        let w = Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let out = Tensor::new(vec![2, 2], vec![-1.0, 2.0, 0.5, 0.5]).unwrap();
        Model::new(
            vec![2],
            vec![
                Layer::Dense {
                    weight: w,
                    bias: Tensor::zeros(&[2]),
                },
                Layer::Relu,
                Layer::Dense {
                    weight: out,
                    bias: Tensor::zeros(&[2]),
                },
            ],
        )
        .unwrap()
    }

    #[test]
    fn linear_forward_and_gradient() {
        let m = Model::linear(&[1.0, -2.0, 3.0], 0.0);
        let (logits, tape) = m.forward(&Tensor::from_slice(&[1.0, 1.0, 1.0])).unwrap();
        assert_eq!(logits.data(), &[2.0]);
        let g = m.backward(&tape, BackpropRule::Standard, 0).unwrap();
        assert_eq!(g.data(), &[1.0, -2.0, 3.0]);
    }

    #[test]
    fn rejects_wrong_input_shape() {
        let m = Model::linear(&[1.0, 2.0], 0.0);
        assert!(matches!(
            m.forward(&Tensor::from_slice(&[1.0])),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn deconv_passes_positive_upstream_only() {
        // upstream gradient at the relu output for class 0 is [-1, 2]
        let m = relu_dense();
        for x in [[1.0, 1.0], [-1.0, -1.0], [1.0, -3.0]] {
            let (_, tape) = m.forward(&Tensor::from_slice(&x)).unwrap();
            let g = m.backward(&tape, BackpropRule::Deconv, 0).unwrap();
            assert_eq!(g.data(), &[0.0, 2.0]);
        }
    }

    #[test]
    fn guided_requires_positive_input() {
        let m = relu_dense();
        let (_, tape) = m.forward(&Tensor::from_slice(&[1.0, -3.0])).unwrap();
        let g = m.backward(&tape, BackpropRule::Guided, 0).unwrap();
        assert_eq!(g.data(), &[0.0, 0.0]);
        let (_, tape) = m.forward(&Tensor::from_slice(&[1.0, 3.0])).unwrap();
        let g = m.backward(&tape, BackpropRule::Guided, 0).unwrap();
        assert_eq!(g.data(), &[0.0, 2.0]);
    }

    #[test]
    fn grad_at_logits_is_one_hot() {
        let m = Model::linear(&[1.0, 2.0], 0.5);
        let (_, tape) = m.forward(&Tensor::from_slice(&[1.0, 1.0])).unwrap();
        let g = m.grad_at_layer(&tape, BackpropRule::Standard, 0, 1).unwrap();
        assert_eq!(g.data(), &[1.0]);
        assert!(m.grad_at_layer(&tape, BackpropRule::Standard, 0, 2).is_err());
        assert!(m.grad_at_layer(&tape, BackpropRule::Standard, 1, 0).is_err());
    }

    #[test]
    fn deeplift_rejects_foreign_reference() {
        let m = relu_dense();
        let other = Model::linear(&[1.0, 2.0], 0.0);
        let (_, tape) = m.forward(&Tensor::from_slice(&[1.0, 1.0])).unwrap();
        let (_, foreign) = other.forward(&Tensor::from_slice(&[1.0, 1.0])).unwrap();
        let err = m
            .backward(&tape, BackpropRule::DeepLiftRescale(&foreign), 0)
            .unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn small_cnn_shapes() {
        let m = Model::small_cnn([1, 28, 28], 10, CnnWidths::default(), 0).unwrap();
        assert_eq!(m.output_shape(), &[10]);
        assert_eq!(m.activation_shape(7).unwrap(), &[64 * 7 * 7]);
        assert_eq!(m.last_conv(), Some(3));
    }
}
