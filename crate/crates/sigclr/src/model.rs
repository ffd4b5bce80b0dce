//! Desk-scale encoder and projector: dense layers with exact forward and
//! backward passes. The projector follows the three-layer MLP shape
//! (ReLU hidden layers, linear output); the encoder is a configurable MLP
//! standing in for a convolutional backbone. Linear evaluation consumes
//! the encoder output `h`, never the projector output `z`.

use crate::checkpoint::NamedTensor;
use crate::error::{Error, Result};
use crate::kernel::{matmul, Matrix};
use crate::streams;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Linear,
}

#[derive(Debug, Clone, Copy)]
pub struct LayerSpec {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        LayerSpec {
            in_dim,
            out_dim,
            activation,
        }
    }
}

/// Encoder + projector architecture.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub encoder: Vec<LayerSpec>,
    pub projector: Vec<LayerSpec>,
}

impl ModelSpec {
    /// Encoder: ReLU layers through `hidden` widths to `embed_dim`.
    /// Projector: ReLU hidden layers, linear output.
    pub fn mlp(input_dim: usize, hidden: &[usize], embed_dim: usize, projector: &[usize]) -> Self {
        let mut encoder = Vec::new();
        let mut prev = input_dim;
        for &w in hidden {
            encoder.push(LayerSpec::new(prev, w, Activation::Relu));
            prev = w;
        }
        encoder.push(LayerSpec::new(prev, embed_dim, Activation::Relu));
        let mut proj = Vec::new();
        let mut prev = embed_dim;
        for (idx, &w) in projector.iter().enumerate() {
            let act = if idx + 1 == projector.len() {
                Activation::Linear
            } else {
                Activation::Relu
            };
            proj.push(LayerSpec::new(prev, w, act));
            prev = w;
        }
        ModelSpec {
            encoder,
            projector: proj,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.encoder.is_empty() || self.projector.is_empty() {
            return Err(Error::Config(
                "model needs at least one encoder and one projector layer".into(),
            ));
        }
        let mut prev = None;
        for (name, layers) in [("encoder", &self.encoder), ("projector", &self.projector)] {
            for (i, spec) in layers.iter().enumerate() {
                if spec.in_dim == 0 || spec.out_dim == 0 {
                    return Err(Error::Config(format!("{name}.{i} has a zero dimension")));
                }
                if let Some(p) = prev {
                    if spec.in_dim != p {
                        return Err(Error::Config(format!(
                            "{name}.{i} expects input {} but previous layer outputs {p}",
                            spec.in_dim
                        )));
                    }
                }
                prev = Some(spec.out_dim);
            }
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.encoder[0].in_dim
    }

    /// Width of the encoder embedding `h` consumed by linear evaluation.
    pub fn embed_dim(&self) -> usize {
        self.encoder.last().unwrap().out_dim
    }

    /// Width of the projector output `z` consumed by the loss.
    pub fn projection_dim(&self) -> usize {
        self.projector.last().unwrap().out_dim
    }
}

#[derive(Debug, Clone)]
pub struct DenseLayer {
    pub spec: LayerSpec,
    /// `in_dim x out_dim`, so `y = x W + b` on row-major batches.
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

/// Activations cached by a forward pass: per-layer inputs and
/// pre-activations, in encoder-then-projector order.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    inputs: Vec<Matrix>,
    preacts: Vec<Matrix>,
}

/// Per-layer parameter gradients, mirroring the model layout.
#[derive(Debug, Clone)]
pub struct ModelGrads {
    pub encoder: Vec<(Matrix, Vec<f64>)>,
    pub projector: Vec<(Matrix, Vec<f64>)>,
}

impl ModelGrads {
    pub fn named(&self) -> Vec<(String, &[f64])> {
        let mut out = Vec::new();
        for (i, (w, b)) in self.encoder.iter().enumerate() {
            out.push((format!("encoder.{i}.weight"), w.data()));
            out.push((format!("encoder.{i}.bias"), b.as_slice()));
        }
        for (i, (w, b)) in self.projector.iter().enumerate() {
            out.push((format!("projector.{i}.weight"), w.data()));
            out.push((format!("projector.{i}.bias"), b.as_slice()));
        }
        out
    }
}

/// Encoder + projector with owned parameters and an activation cache.
/// One trainer owns a model exclusively; `forward_frozen` is the
/// read-only path safe to share.
#[derive(Debug, Clone)]
pub struct Model {
    spec: ModelSpec,
    pub(crate) encoder: Vec<DenseLayer>,
    pub(crate) projector: Vec<DenseLayer>,
    cache: Option<ForwardCache>,
}

fn glorot_bound(spec: &LayerSpec) -> f64 {
    (6.0 / (spec.in_dim + spec.out_dim) as f64).sqrt()
}

fn init_layer(spec: LayerSpec, rng: &mut ChaCha8Rng) -> DenseLayer {
    let s = glorot_bound(&spec);
    let weight = Matrix::from_fn(spec.in_dim, spec.out_dim, |_, _| rng.gen_range(-s..s));
    DenseLayer {
        spec,
        weight,
        bias: vec![0.0; spec.out_dim],
    }
}

impl Model {
    /// Deterministic seeded initialization: Glorot-uniform weights
    /// (`|w| <= sqrt(6/(in+out))`), zero biases.
    pub fn init(spec: ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(streams::INIT);
        let encoder = spec.encoder.iter().map(|s| init_layer(*s, &mut rng)).collect();
        let projector = spec
            .projector
            .iter()
            .map(|s| init_layer(*s, &mut rng))
            .collect();
        Ok(Model {
            spec,
            encoder,
            projector,
            cache: None,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    fn layers(&self) -> impl Iterator<Item = &DenseLayer> {
        self.encoder.iter().chain(self.projector.iter())
    }

    fn apply_layer(layer: &DenseLayer, input: &Matrix) -> Result<(Matrix, Matrix)> {
        let mut pre = matmul(input, &layer.weight)?;
        for r in 0..pre.rows() {
            let row = pre.row_mut(r);
            for (v, b) in row.iter_mut().zip(layer.bias.iter()) {
                *v += *b;
            }
        }
        let mut post = pre.clone();
        if layer.spec.activation == Activation::Relu {
            for v in post.data_mut() {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
        }
        Ok((pre, post))
    }

    /// Forward pass caching activations for a subsequent [`Model::backward`].
    /// Returns the encoder embeddings `h` and projector embeddings `z`.
    pub fn forward(&mut self, images: &Matrix) -> Result<(Matrix, Matrix)> {
        if images.cols() != self.spec.input_dim() {
            return Err(Error::Shape(format!(
                "model expects input width {}, got {}",
                self.spec.input_dim(),
                images.cols()
            )));
        }
        let mut inputs = Vec::new();
        let mut preacts = Vec::new();
        let mut a = images.clone();
        let mut h = None;
        let encoder_len = self.encoder.len();
        for (idx, layer) in self.layers().enumerate() {
            let (pre, post) = Self::apply_layer(layer, &a)?;
            inputs.push(a);
            preacts.push(pre);
            a = post;
            if idx + 1 == encoder_len {
                h = Some(a.clone());
            }
        }
        self.cache = Some(ForwardCache { inputs, preacts });
        Ok((h.unwrap(), a))
    }

    /// Forward without caching; usable on a shared reference.
    pub fn forward_frozen(&self, images: &Matrix) -> Result<(Matrix, Matrix)> {
        if images.cols() != self.spec.input_dim() {
            return Err(Error::Shape(format!(
                "model expects input width {}, got {}",
                self.spec.input_dim(),
                images.cols()
            )));
        }
        let mut a = images.clone();
        let mut h = None;
        let encoder_len = self.encoder.len();
        for (idx, layer) in self.layers().enumerate() {
            let (_, post) = Self::apply_layer(layer, &a)?;
            a = post;
            if idx + 1 == encoder_len {
                h = Some(a.clone());
            }
        }
        Ok((h.unwrap(), a))
    }

    /// Exact backward pass from the gradient w.r.t. the projector output.
    /// Consumes the cache: calling backward twice without an interleaved
    /// forward is a state error.
    pub fn backward(&mut self, grad_projector_out: &Matrix) -> Result<ModelGrads> {
        let cache = self
            .cache
            .take()
            .ok_or_else(|| Error::State("backward called without a cached forward".into()))?;
        let total_layers = self.encoder.len() + self.projector.len();
        if grad_projector_out.rows() != cache.preacts[total_layers - 1].rows()
            || grad_projector_out.cols() != self.spec.projection_dim()
        {
            return Err(Error::Shape(format!(
                "upstream gradient {}x{} does not match projector output",
                grad_projector_out.rows(),
                grad_projector_out.cols()
            )));
        }

        let mut grads: Vec<(Matrix, Vec<f64>)> = Vec::with_capacity(total_layers);
        let mut upstream = grad_projector_out.clone();
        let layer_refs: Vec<&DenseLayer> = self.layers().collect();
        for l in (0..total_layers).rev() {
            let layer = layer_refs[l];
            let pre = &cache.preacts[l];
            let input = &cache.inputs[l];
            // dz = upstream * act'(pre); relu' pinned to 0 at exactly 0.
            let mut dz = upstream.clone();
            if layer.spec.activation == Activation::Relu {
                for (v, p) in dz.data_mut().iter_mut().zip(pre.data().iter()) {
                    if *p <= 0.0 {
                        *v = 0.0;
                    }
                }
            }
            let dw = matmul(&input.transpose(), &dz)?;
            let mut db = vec![0.0; layer.spec.out_dim];
            for r in 0..dz.rows() {
                for (acc, v) in db.iter_mut().zip(dz.row(r).iter()) {
                    *acc += *v;
                }
            }
            if l > 0 {
                upstream = matmul(&dz, &layer.weight.transpose())?;
            }
            grads.push((dw, db));
        }
        grads.reverse();
        let projector = grads.split_off(self.encoder.len());
        Ok(ModelGrads {
            encoder: grads,
            projector,
        })
    }

    /// Mutable named parameter views in a fixed order, for the optimizer.
    pub fn named_tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out: Vec<(String, &mut [f64])> = Vec::new();
        for (i, layer) in self.encoder.iter_mut().enumerate() {
            out.push((format!("encoder.{i}.weight"), layer.weight.data_mut()));
            out.push((format!("encoder.{i}.bias"), layer.bias.as_mut_slice()));
        }
        for (i, layer) in self.projector.iter_mut().enumerate() {
            out.push((format!("projector.{i}.weight"), layer.weight.data_mut()));
            out.push((format!("projector.{i}.bias"), layer.bias.as_mut_slice()));
        }
        out
    }

    /// Names of bias tensors, the parameters excluded from LARS trust
    /// scaling and weight decay.
    pub fn bias_tensor_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for i in 0..self.encoder.len() {
            out.push(format!("encoder.{i}.bias"));
        }
        for i in 0..self.projector.len() {
            out.push(format!("projector.{i}.bias"));
        }
        out
    }

    /// Snapshot all parameters as named f32 tensors for checkpointing.
    pub fn to_named_tensors(&self) -> Vec<NamedTensor> {
        let mut out = Vec::new();
        let mut push = |name: String, rows: usize, cols: usize, data: &[f64]| {
            out.push(NamedTensor {
                name,
                rows: rows as u32,
                cols: cols as u32,
                data: data.iter().map(|&v| v as f32).collect(),
            });
        };
        for (i, layer) in self.encoder.iter().enumerate() {
            push(
                format!("encoder.{i}.weight"),
                layer.weight.rows(),
                layer.weight.cols(),
                layer.weight.data(),
            );
            push(format!("encoder.{i}.bias"), 1, layer.bias.len(), &layer.bias);
        }
        for (i, layer) in self.projector.iter().enumerate() {
            push(
                format!("projector.{i}.weight"),
                layer.weight.rows(),
                layer.weight.cols(),
                layer.weight.data(),
            );
            push(format!("projector.{i}.bias"), 1, layer.bias.len(), &layer.bias);
        }
        out
    }

    /// Load parameters from named tensors, validating shapes. Unknown
    /// names (e.g. the loss scalars stored alongside) are ignored.
    pub fn load_named_tensors(&mut self, tensors: &[NamedTensor]) -> Result<()> {
        for (name, values) in self.named_tensors_mut() {
            let tensor = tensors
                .iter()
                .find(|t| t.name == name)
                .ok_or_else(|| Error::Config(format!("checkpoint is missing tensor `{name}`")))?;
            if tensor.data.len() != values.len() {
                return Err(Error::Shape(format!(
                    "tensor `{name}` has {} values, model expects {}",
                    tensor.data.len(),
                    values.len()
                )));
            }
            for (dst, src) in values.iter_mut().zip(tensor.data.iter()) {
                *dst = *src as f64;
            }
        }
        Ok(())
    }
}
