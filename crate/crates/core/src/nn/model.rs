use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use super::layers::{self, ConvGeometry};
use super::params::{GradientSet, ParameterVector};
use super::tensor::Tensor;

/// Architecture description of one layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerSpec {
    /// Stride-1, unpadded square convolution.
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
    },
    Relu,
    Flatten,
    Dense {
        in_dim: usize,
        out_dim: usize,
    },
    Softmax,
}

#[derive(Debug, Clone, PartialEq)]
enum Layer {
    Conv2d {
        geometry: ConvGeometry,
        weight: Tensor,
        bias: Tensor,
    },
    Relu,
    Flatten,
    Dense {
        in_dim: usize,
        out_dim: usize,
        weight: Tensor,
        bias: Tensor,
    },
    Softmax,
}

impl Layer {
    fn spec(&self) -> LayerSpec {
        match self {
            Layer::Conv2d { geometry, .. } => LayerSpec::Conv2d {
                in_channels: geometry.in_channels,
                out_channels: geometry.out_channels,
                kernel: geometry.kernel,
            },
            Layer::Relu => LayerSpec::Relu,
            Layer::Flatten => LayerSpec::Flatten,
            Layer::Dense { in_dim, out_dim, .. } => LayerSpec::Dense {
                in_dim: *in_dim,
                out_dim: *out_dim,
            },
            Layer::Softmax => LayerSpec::Softmax,
        }
    }
}

/// Loss reduction over a batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reduction {
    Mean,
    Sum,
}

/// A layered classifier ending in softmax, plus the seed it was initialised from.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    input_shape: Vec<usize>,
    /// `shapes[i]` is the per-sample input shape of layer `i`; the last entry is the output.
    shapes: Vec<Vec<usize>>,
    layers: Vec<Layer>,
    seed: u64,
}

/// Cached activations of one forward pass: `acts[0]` is the input batch,
/// `acts[i + 1]` the output of layer `i`.
struct Trace {
    batch: usize,
    acts: Vec<Vec<f64>>,
}

impl ModelState {
    /// Builds a model, checking that consecutive layer dimensions agree, and
    /// initialises weights from `seed` (He-uniform ahead of a ReLU, Glorot-uniform
    /// elsewhere; zero biases).
    pub fn new(input_shape: Vec<usize>, specs: &[LayerSpec], seed: u64) -> Result<Self> {
        if specs.last() != Some(&LayerSpec::Softmax) {
            return Err(Error::Config("model must end with a softmax layer".into()));
        }
        if specs[..specs.len() - 1].contains(&LayerSpec::Softmax) {
            return Err(Error::Config("softmax is only supported as the final layer".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut shapes = vec![input_shape.clone()];
        let mut layers = Vec::with_capacity(specs.len());
        for (i, spec) in specs.iter().enumerate() {
            let shape = shapes.last().unwrap().clone();
            let feeds_relu = specs.get(i + 1) == Some(&LayerSpec::Relu);
            let (layer, out_shape) = match *spec {
                LayerSpec::Conv2d {
                    in_channels,
                    out_channels,
                    kernel,
                } => {
                    if shape.len() != 3 || shape[0] != in_channels {
                        return Err(Error::Config(format!(
                            "layer {i}: conv expects [{in_channels}, h, w] input, got {shape:?}"
                        )));
                    }
                    if kernel == 0 || shape[1] < kernel || shape[2] < kernel {
                        return Err(Error::Config(format!(
                            "layer {i}: kernel {kernel} does not fit input {shape:?}"
                        )));
                    }
                    let geometry = ConvGeometry {
                        in_channels,
                        out_channels,
                        kernel,
                        in_h: shape[1],
                        in_w: shape[2],
                    };
                    let fan_in = in_channels * kernel * kernel;
                    let fan_out = out_channels * kernel * kernel;
                    let weight = init_weights(
                        &mut rng,
                        vec![out_channels, in_channels, kernel, kernel],
                        fan_in,
                        fan_out,
                        feeds_relu,
                    );
                    let out = vec![out_channels, geometry.out_h(), geometry.out_w()];
                    (
                        Layer::Conv2d {
                            geometry,
                            weight,
                            bias: Tensor::zeros(vec![out_channels]),
                        },
                        out,
                    )
                }
                LayerSpec::Dense { in_dim, out_dim } => {
                    if shape != [in_dim] {
                        return Err(Error::Config(format!(
                            "layer {i}: dense expects [{in_dim}] input, got {shape:?}"
                        )));
                    }
                    let weight =
                        init_weights(&mut rng, vec![out_dim, in_dim], in_dim, out_dim, feeds_relu);
                    (
                        Layer::Dense {
                            in_dim,
                            out_dim,
                            weight,
                            bias: Tensor::zeros(vec![out_dim]),
                        },
                        vec![out_dim],
                    )
                }
                LayerSpec::Relu => (Layer::Relu, shape),
                LayerSpec::Flatten => (Layer::Flatten, vec![shape.iter().product()]),
                LayerSpec::Softmax => {
                    if shape.len() != 1 {
                        return Err(Error::Config(format!(
                            "layer {i}: softmax expects flat logits, got {shape:?}"
                        )));
                    }
                    (Layer::Softmax, shape)
                }
            };
            layers.push(layer);
            shapes.push(out_shape);
        }
        Ok(Self {
            input_shape,
            shapes,
            layers,
            seed,
        })
    }

    /// conv(c→20, 5×5) → ReLU → conv(20→50, 5×5) → ReLU → flatten → dense(→200) → ReLU
    /// → dense(200→classes) → softmax.
    pub fn reference_cnn(
        channels: usize,
        height: usize,
        width: usize,
        classes: usize,
        seed: u64,
    ) -> Result<Self> {
        if height < 9 || width < 9 {
            return Err(Error::Config(format!(
                "reference CNN needs at least 9×9 inputs, got {height}×{width}"
            )));
        }
        let flat = 50 * (height - 8) * (width - 8);
        Self::new(
            vec![channels, height, width],
            &[
                LayerSpec::Conv2d {
                    in_channels: channels,
                    out_channels: 20,
                    kernel: 5,
                },
                LayerSpec::Relu,
                LayerSpec::Conv2d {
                    in_channels: 20,
                    out_channels: 50,
                    kernel: 5,
                },
                LayerSpec::Relu,
                LayerSpec::Flatten,
                LayerSpec::Dense {
                    in_dim: flat,
                    out_dim: 200,
                },
                LayerSpec::Relu,
                LayerSpec::Dense {
                    in_dim: 200,
                    out_dim: classes,
                },
                LayerSpec::Softmax,
            ],
            seed,
        )
    }

    /// Fully connected variant: dense/ReLU blocks for each hidden width, then a
    /// dense classifier head and softmax.
    pub fn mlp(input_dim: usize, hidden: &[usize], classes: usize, seed: u64) -> Result<Self> {
        let mut specs = Vec::new();
        let mut prev = input_dim;
        for &h in hidden {
            specs.push(LayerSpec::Dense {
                in_dim: prev,
                out_dim: h,
            });
            specs.push(LayerSpec::Relu);
            prev = h;
        }
        specs.push(LayerSpec::Dense {
            in_dim: prev,
            out_dim: classes,
        });
        specs.push(LayerSpec::Softmax);
        Self::new(vec![input_dim], &specs, seed)
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn num_classes(&self) -> usize {
        self.shapes.last().unwrap()[0]
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn layer_specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(Layer::spec).collect()
    }

    /// Parameter tensors in canonical order (weight then bias, layer by layer).
    pub fn parameters(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match layer {
                Layer::Conv2d { weight, bias, .. } | Layer::Dense { weight, bias, .. } => {
                    out.push(weight);
                    out.push(bias);
                }
                _ => {}
            }
        }
        out
    }

    pub(crate) fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            match layer {
                Layer::Conv2d { weight, bias, .. } | Layer::Dense { weight, bias, .. } => {
                    out.push(weight);
                    out.push(bias);
                }
                _ => {}
            }
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.parameters().iter().map(|t| t.len()).sum()
    }

    pub fn to_vector(&self) -> ParameterVector {
        let mut out = Vec::with_capacity(self.param_count());
        for t in self.parameters() {
            out.extend_from_slice(t.data());
        }
        ParameterVector::new(out)
    }

    pub fn load_vector(&mut self, params: &ParameterVector) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::Dimension(format!(
                "parameter vector has {} values, model has {}",
                params.len(),
                self.param_count()
            )));
        }
        let mut offset = 0;
        for t in self.parameters_mut() {
            let n = t.len();
            t.data_mut()
                .copy_from_slice(&params.as_slice()[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    /// Copy of this architecture carrying `params`.
    pub fn with_vector(&self, params: &ParameterVector) -> Result<Self> {
        let mut m = self.clone();
        m.load_vector(params)?;
        Ok(m)
    }

    /// Zero-filled gradient set congruent with the parameters.
    pub fn zero_gradients(&self) -> GradientSet {
        GradientSet::new(
            self.parameters()
                .iter()
                .map(|t| Tensor::zeros(t.shape().to_vec()))
                .collect(),
        )
    }

    fn check_batch(&self, batch: &Tensor) -> Result<usize> {
        if batch.shape().len() != self.input_shape.len() + 1
            || batch.shape()[1..] != self.input_shape[..]
        {
            return Err(Error::Dimension(format!(
                "batch shape {:?} does not match model input {:?}",
                batch.shape(),
                self.input_shape
            )));
        }
        Ok(batch.rows())
    }

    fn check_labels(&self, labels: &[usize], batch: usize) -> Result<()> {
        if labels.len() != batch {
            return Err(Error::Dimension(format!(
                "{} labels for a batch of {batch}",
                labels.len()
            )));
        }
        let c = self.num_classes();
        if let Some(&bad) = labels.iter().find(|&&y| y >= c) {
            return Err(Error::Domain(format!("label {bad} out of range for {c} classes")));
        }
        Ok(())
    }

    /// Runs layers `0..upto` and keeps every intermediate activation.
    fn trace(&self, batch: &Tensor, upto: usize) -> Result<Trace> {
        let n = self.check_batch(batch)?;
        let mut acts = Vec::with_capacity(upto + 1);
        acts.push(batch.data().to_vec());
        for (i, layer) in self.layers[..upto].iter().enumerate() {
            let x = &acts[i];
            let y = match layer {
                Layer::Conv2d {
                    geometry,
                    weight,
                    bias,
                } => layers::conv_forward(x, n, weight.data(), bias.data(), geometry),
                Layer::Dense {
                    in_dim,
                    out_dim,
                    weight,
                    bias,
                } => layers::dense_forward(x, n, weight.data(), bias.data(), *in_dim, *out_dim),
                Layer::Relu => x.iter().map(|v| v.max(0.0)).collect(),
                Layer::Flatten => x.clone(),
                Layer::Softmax => layers::softmax_rows(x, n, self.shapes[i][0]),
            };
            acts.push(y);
        }
        Ok(Trace { batch: n, acts })
    }

    /// Class probabilities, one row per sample.
    pub fn forward(&self, batch: &Tensor) -> Result<Tensor> {
        let mut trace = self.trace(batch, self.layers.len())?;
        let probs = trace.acts.pop().unwrap();
        Tensor::new(vec![trace.batch, self.num_classes()], probs)
    }

    pub fn predict(&self, batch: &Tensor) -> Result<Vec<usize>> {
        Ok(self.forward(batch)?.argmax_rows())
    }

    /// Mean cross-entropy of the model on a labelled batch.
    pub fn loss(&self, batch: &Tensor, labels: &[usize]) -> Result<f64> {
        let probs = self.forward(batch)?;
        cross_entropy(&probs, labels)
    }

    /// Exact gradient of the mean cross-entropy with respect to every parameter.
    pub fn backward(&self, batch: &Tensor, labels: &[usize]) -> Result<GradientSet> {
        self.backward_reduced(batch, labels, Reduction::Mean)
    }

    pub fn backward_reduced(
        &self,
        batch: &Tensor,
        labels: &[usize],
        reduction: Reduction,
    ) -> Result<GradientSet> {
        let trace = self.trace(batch, self.layers.len())?;
        let n = trace.batch;
        self.check_labels(labels, n)?;
        let c = self.num_classes();
        let scale = match reduction {
            Reduction::Mean => 1.0 / n as f64,
            Reduction::Sum => 1.0,
        };
        // Softmax + cross-entropy: dL/dz = (p - onehot(y)) * scale.
        let mut grad = trace.acts.last().unwrap().clone();
        for (b, &y) in labels.iter().enumerate() {
            grad[b * c + y] -= 1.0;
        }
        grad.iter_mut().for_each(|g| *g *= scale);

        let mut out_rev: Vec<Tensor> = Vec::new();
        for i in (0..self.layers.len() - 1).rev() {
            let x = &trace.acts[i];
            let need_input = i > 0;
            match &self.layers[i] {
                Layer::Dense {
                    in_dim,
                    out_dim,
                    weight,
                    bias,
                } => {
                    let (dx, dw, db) = layers::dense_backward(
                        x,
                        &grad,
                        n,
                        weight.data(),
                        *in_dim,
                        *out_dim,
                        need_input,
                    );
                    out_rev.push(Tensor::new(bias.shape().to_vec(), db)?);
                    out_rev.push(Tensor::new(weight.shape().to_vec(), dw)?);
                    grad = dx.unwrap_or_default();
                }
                Layer::Conv2d {
                    geometry,
                    weight,
                    bias,
                } => {
                    let (dx, dw, db) = layers::conv_backward(
                        x,
                        &grad,
                        n,
                        weight.data(),
                        geometry,
                        need_input,
                    );
                    out_rev.push(Tensor::new(bias.shape().to_vec(), db)?);
                    out_rev.push(Tensor::new(weight.shape().to_vec(), dw)?);
                    grad = dx.unwrap_or_default();
                }
                Layer::Relu => {
                    for (g, v) in grad.iter_mut().zip(x) {
                        if *v <= 0.0 {
                            *g = 0.0;
                        }
                    }
                }
                Layer::Flatten => {}
                Layer::Softmax => unreachable!("softmax is validated to be last"),
            }
        }
        out_rev.reverse();
        Ok(GradientSet::new(out_rev))
    }

    fn last_dense_index(&self) -> Option<usize> {
        self.layers
            .iter()
            .rposition(|l| matches!(l, Layer::Dense { .. }))
    }

    /// Index `i` such that the feature vector is the input of layer `i`: the
    /// input of the classifier head, i.e. the activated output of the
    /// penultimate dense layer.
    fn feature_tap(&self) -> Result<usize> {
        let last = self
            .last_dense_index()
            .ok_or_else(|| Error::Config("model has no dense layer".into()))?;
        let has_hidden_dense = self.layers[..last]
            .iter()
            .any(|l| matches!(l, Layer::Dense { .. }));
        if !has_hidden_dense {
            return Err(Error::Config(
                "model has no hidden dense layer to extract features from".into(),
            ));
        }
        Ok(last)
    }

    pub fn feature_dim(&self) -> Result<usize> {
        Ok(self.shapes[self.feature_tap()?][0])
    }

    /// Latent features (post-activation output of the penultimate dense
    /// layer), one row per sample.
    pub fn extract_features(&self, batch: &Tensor) -> Result<Tensor> {
        let tap = self.feature_tap()?;
        let mut trace = self.trace(batch, tap)?;
        let feats = trace.acts.pop().unwrap();
        Tensor::new(vec![trace.batch, self.shapes[tap][0]], feats)
    }

    /// Forward pass over `samples` retaining what is needed to compute
    /// last-layer gradients for any assigned class.
    pub fn last_layer_probe(&self, samples: &Tensor) -> Result<LastLayerProbe> {
        let last = self
            .last_dense_index()
            .ok_or_else(|| Error::Config("model has no dense layer".into()))?;
        if last + 2 != self.layers.len() {
            return Err(Error::Config(
                "last dense layer must feed the softmax directly".into(),
            ));
        }
        if samples.shape().first() == Some(&0) {
            return Err(Error::Domain("empty sample set".into()));
        }
        let mut trace = self.trace(samples, self.layers.len())?;
        let probs = trace.acts.pop().unwrap();
        let _logits = trace.acts.pop();
        let hidden = trace.acts.pop().unwrap();
        Ok(LastLayerProbe {
            batch: trace.batch,
            classes: self.num_classes(),
            in_dim: self.shapes[last][0],
            hidden,
            probs,
        })
    }

    /// Gradient of `Σ_x CE(f(x), 1_c)` over `samples` with respect to the last
    /// dense layer (weights, and the bias when `include_bias` is set).
    pub fn last_fc_gradient(
        &self,
        samples: &Tensor,
        assigned_class: usize,
        include_bias: bool,
    ) -> Result<LastLayerGradient> {
        self.last_layer_probe(samples)?
            .gradient(assigned_class, include_bias)
    }
}

/// Cached penultimate activations and output probabilities for a sample set.
#[derive(Debug, Clone)]
pub struct LastLayerProbe {
    batch: usize,
    classes: usize,
    in_dim: usize,
    hidden: Vec<f64>,
    probs: Vec<f64>,
}

impl LastLayerProbe {
    pub fn samples(&self) -> usize {
        self.batch
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }

    pub fn gradient(&self, assigned_class: usize, include_bias: bool) -> Result<LastLayerGradient> {
        if assigned_class >= self.classes {
            return Err(Error::Domain(format!(
                "assigned class {assigned_class} out of range for {} classes",
                self.classes
            )));
        }
        let (c, d) = (self.classes, self.in_dim);
        let mut weight = vec![0.0; c * d];
        let mut bias = vec![0.0; c];
        for b in 0..self.batch {
            let h = &self.hidden[b * d..(b + 1) * d];
            for o in 0..c {
                let mut g = self.probs[b * c + o];
                if o == assigned_class {
                    g -= 1.0;
                }
                bias[o] += g;
                for (w, hi) in weight[o * d..(o + 1) * d].iter_mut().zip(h) {
                    *w += g * hi;
                }
            }
        }
        Ok(LastLayerGradient {
            weight: Tensor::new(vec![c, d], weight)?,
            bias: if include_bias {
                Some(Tensor::new(vec![c], bias)?)
            } else {
                None
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LastLayerGradient {
    pub weight: Tensor,
    pub bias: Option<Tensor>,
}

impl LastLayerGradient {
    pub fn norm(&self) -> f64 {
        let w = self.weight.data().iter().map(|v| v * v).sum::<f64>();
        let b = self
            .bias
            .as_ref()
            .map(|t| t.data().iter().map(|v| v * v).sum::<f64>())
            .unwrap_or(0.0);
        (w + b).sqrt()
    }
}

/// Mean of `-ln p[y]` over the rows of `probs`.
pub fn cross_entropy(probs: &Tensor, labels: &[usize]) -> Result<f64> {
    if probs.shape().len() != 2 {
        return Err(Error::Dimension(format!(
            "expected [batch, classes] probabilities, got {:?}",
            probs.shape()
        )));
    }
    let (n, c) = (probs.shape()[0], probs.shape()[1]);
    if labels.len() != n {
        return Err(Error::Dimension(format!("{} labels for {n} rows", labels.len())));
    }
    let mut total = 0.0;
    for (b, &y) in labels.iter().enumerate() {
        if y >= c {
            return Err(Error::Domain(format!("label {y} out of range for {c} classes")));
        }
        let p = probs.data()[b * c + y].max(f64::MIN_POSITIVE);
        total -= p.ln();
    }
    Ok(total / n as f64)
}

fn init_weights(
    rng: &mut ChaCha8Rng,
    shape: Vec<usize>,
    fan_in: usize,
    fan_out: usize,
    feeds_relu: bool,
) -> Tensor {
    let limit = if feeds_relu {
        (6.0 / fan_in as f64).sqrt()
    } else {
        (6.0 / (fan_in + fan_out) as f64).sqrt()
    };
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-limit..limit)).collect();
    Tensor::new(shape, data).expect("shape product matches")
}
