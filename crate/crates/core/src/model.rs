//! Fully connected ReLU classifier trained with momentum SGD under a poly
//! learning-rate schedule.
//!
//! The network produces two logits per sample. Losses are summed over the
//! batch, and any sample whose mask entry is zero is removed from both the
//! loss and the gradient.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numerics::{cross_entropy, matmul, matmul_nt, matmul_tn, relu, softmax, Matrix};
use crate::scalar::Scalar;

/// Number of output classes produced by [`Mlp`].
pub const OUTPUT_CLASSES: usize = 2;

const CHECKPOINT_MAGIC: &str = "acl-mlp 1";

/// One affine layer: `y = x · weights + bias`, with `weights` shaped `in × out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub weights: Matrix<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> Dense<T> {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weights: Matrix::zeros(input, output),
            bias: vec![T::zero(); output],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.cols()
    }

    fn apply(&self, input: &Matrix<T>) -> Result<Matrix<T>> {
        let mut z = matmul(input, &self.weights)?;
        z.add_row(&self.bias)?;
        Ok(z)
    }
}

/// Multi-layer perceptron with ReLU between layers and linear output.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    layers: Vec<Dense<T>>,
}

/// Per-layer parameter gradients, shaped like the model's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub layers: Vec<Dense<T>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn zeros_like(model: &Mlp<T>) -> Self {
        Self {
            layers: model
                .layers
                .iter()
                .map(|l| Dense::zeros(l.input_dim(), l.output_dim()))
                .collect(),
        }
    }

    /// Element-wise `self += other`.
    pub fn accumulate(&mut self, other: &Gradients<T>) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, &y) in a
                .weights
                .as_mut_slice()
                .iter_mut()
                .zip(b.weights.as_slice())
            {
                *x += y;
            }
            for (x, &y) in a.bias.iter_mut().zip(&b.bias) {
                *x += y;
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.layers.iter().all(|l| {
            l.weights.as_slice().iter().all(|v| *v == T::zero())
                && l.bias.iter().all(|v| *v == T::zero())
        })
    }
}

/// Activations retained by the forward pass for backpropagation.
struct ForwardCache<T> {
    /// Input to each layer (the network input followed by every hidden activation).
    inputs: Vec<Matrix<T>>,
    /// Pre-activation output of each layer.
    pre_activations: Vec<Matrix<T>>,
}

impl<T: Scalar> Mlp<T> {
    /// Seeded uniform initialisation scaled by fan-in, zero biases.
    ///
    /// Hidden layers use the He bound `√(6/fan_in)`. The output layer is
    /// drawn like a freshly attached classifier head, `U(±1/√fan_in)`, so an
    /// untrained model predicts close to uniform probabilities.
    pub fn new(input_dim: usize, hidden: &[usize], seed: u64) -> Result<Self> {
        if input_dim == 0 || hidden.contains(&0) {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut dims = Vec::with_capacity(hidden.len() + 2);
        dims.push(input_dim);
        dims.extend_from_slice(hidden);
        dims.push(OUTPUT_CLASSES);
        let last = dims.len() - 2;
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = if i == last {
                    (1.0 / fan_in as f64).sqrt()
                } else {
                    (6.0 / fan_in as f64).sqrt()
                };
                let data = (0..fan_in * fan_out)
                    .map(|_| T::of(rng.random_range(-limit..limit)))
                    .collect();
                Dense {
                    weights: Matrix::from_vec(fan_in, fan_out, data).expect("sized above"),
                    bias: vec![T::zero(); fan_out],
                }
            })
            .collect();
        Ok(Self { layers })
    }

    /// Builds a model from explicit layers, checking that shapes chain and
    /// that the last layer emits [`OUTPUT_CLASSES`] logits.
    pub fn from_layers(layers: Vec<Dense<T>>) -> Result<Self> {
        let last = layers
            .last()
            .ok_or_else(|| Error::Config("model needs at least one layer".into()))?;
        if last.output_dim() != OUTPUT_CLASSES {
            return Err(Error::Config(format!(
                "final layer emits {} outputs, expected {OUTPUT_CLASSES}",
                last.output_dim()
            )));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.output_dim() {
                return Err(Error::Config(format!("layer {i}: bias length mismatch")));
            }
        }
        for (i, w) in layers.windows(2).enumerate() {
            if w[0].output_dim() != w[1].input_dim() {
                return Err(Error::Config(format!(
                    "layer {i} emits {} values but layer {} expects {}",
                    w[0].output_dim(),
                    i + 1,
                    w[1].input_dim()
                )));
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Dense<T>] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.as_slice().len() + l.bias.len())
            .sum()
    }

    fn check_input(&self, features: &Matrix<T>) -> Result<()> {
        if features.cols() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                op: "forward",
                left: features.shape(),
                right: self.layers[0].weights.shape(),
            });
        }
        Ok(())
    }

    fn forward_cached(&self, features: &Matrix<T>) -> Result<(Matrix<T>, ForwardCache<T>)> {
        self.check_input(features)?;
        let mut cache = ForwardCache {
            inputs: Vec::with_capacity(self.layers.len()),
            pre_activations: Vec::with_capacity(self.layers.len()),
        };
        let mut h = features.clone();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let z = layer.apply(&h)?;
            let next = if i == last { z.clone() } else { z.map(relu) };
            cache.inputs.push(h);
            cache.pre_activations.push(z);
            h = next;
        }
        Ok((h, cache))
    }

    /// Logits, one row of two per input row.
    pub fn forward(&self, features: &Matrix<T>) -> Result<Matrix<T>> {
        self.check_input(features)?;
        let mut h = features.clone();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let z = layer.apply(&h)?;
            h = if i == last { z } else { z.map(relu) };
        }
        Ok(h)
    }

    /// Gradients of the summed cross-entropy over samples with `mask[i] == true`.
    ///
    /// Returns the gradients together with that masked summed loss. Masked-out
    /// samples contribute exactly zero to both.
    pub fn backward_masked(
        &self,
        features: &Matrix<T>,
        labels: &[usize],
        mask: &[bool],
    ) -> Result<(Gradients<T>, T)> {
        let n = features.rows();
        if labels.len() != n {
            return Err(Error::LengthMismatch {
                op: "backward_masked labels",
                expected: n,
                actual: labels.len(),
            });
        }
        if mask.len() != n {
            return Err(Error::LengthMismatch {
                op: "backward_masked mask",
                expected: n,
                actual: mask.len(),
            });
        }
        let (logits, cache) = self.forward_cached(features)?;

        let mut loss = T::zero();
        let mut delta = Matrix::zeros(n, OUTPUT_CLASSES);
        for (i, (&label, &keep)) in labels.iter().zip(mask).enumerate() {
            if !keep {
                continue;
            }
            let probs = softmax(logits.row(i))?;
            loss += cross_entropy(&probs, label)?;
            let row = delta.row_mut(i);
            row.copy_from_slice(probs.values());
            row[label] -= T::one();
        }

        let mut grads = Vec::with_capacity(self.layers.len());
        for l in (0..self.layers.len()).rev() {
            let weights = matmul_tn(&cache.inputs[l], &delta)?;
            let bias = delta.column_sums();
            if l > 0 {
                let mut upstream = matmul_nt(&delta, &self.layers[l].weights)?;
                for (g, &z) in upstream
                    .as_mut_slice()
                    .iter_mut()
                    .zip(cache.pre_activations[l - 1].as_slice())
                {
                    if z <= T::zero() {
                        *g = T::zero();
                    }
                }
                delta = upstream;
            }
            grads.push(Dense { weights, bias });
        }
        grads.reverse();
        Ok((Gradients { layers: grads }, loss))
    }

    /// Unmasked backward pass.
    pub fn backward(&self, features: &Matrix<T>, labels: &[usize]) -> Result<(Gradients<T>, T)> {
        self.backward_masked(features, labels, &vec![true; labels.len()])
    }

    /// Writes the text checkpoint described in the README.
    pub fn write_checkpoint<W: Write>(&self, mut out: W) -> Result<()> {
        let mut s = String::new();
        writeln!(s, "{CHECKPOINT_MAGIC}").unwrap();
        writeln!(s, "layers {}", self.layers.len()).unwrap();
        for layer in &self.layers {
            writeln!(s, "dense {} {}", layer.input_dim(), layer.output_dim()).unwrap();
            for row in layer.weights.row_iter() {
                push_values(&mut s, row);
            }
            push_values(&mut s, &layer.bias);
        }
        out.write_all(s.as_bytes())?;
        Ok(())
    }

    pub fn read_checkpoint<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines().enumerate().map(|(i, l)| (i + 1, l));
        let mut next = |what: &str| -> Result<(usize, String)> {
            match lines.next() {
                Some((n, Ok(l))) => Ok((n, l)),
                Some((_, Err(e))) => Err(e.into()),
                None => Err(Error::Parse {
                    line: 0,
                    message: format!("unexpected end of checkpoint, expected {what}"),
                }),
            }
        };
        let (n, magic) = next("header")?;
        if magic.trim() != CHECKPOINT_MAGIC {
            return Err(Error::Parse {
                line: n,
                message: format!("bad header {magic:?}"),
            });
        }
        let (n, count) = next("layer count")?;
        let count: usize = parse_tagged(&count, "layers", n)?[0];
        let mut layers = Vec::with_capacity(count);
        for _ in 0..count {
            let (n, header) = next("layer header")?;
            let dims: Vec<usize> = parse_tagged(&header, "dense", n)?;
            if dims.len() != 2 {
                return Err(Error::Parse {
                    line: n,
                    message: "expected `dense <in> <out>`".into(),
                });
            }
            let (rows, cols) = (dims[0], dims[1]);
            let mut data = Vec::with_capacity(rows * cols);
            for _ in 0..rows {
                let (n, line) = next("weight row")?;
                data.extend(parse_values::<T>(&line, cols, n)?);
            }
            let (n, line) = next("bias row")?;
            let bias = parse_values::<T>(&line, cols, n)?;
            layers.push(Dense {
                weights: Matrix::from_vec(rows, cols, data)?,
                bias,
            });
        }
        Self::from_layers(layers)
    }
}

fn push_values<T: Scalar>(s: &mut String, values: &[T]) {
    let mut first = true;
    for v in values {
        if !first {
            s.push(' ');
        }
        first = false;
        write!(s, "{v}").unwrap();
    }
    s.push('\n');
}

fn parse_tagged(line: &str, tag: &str, n: usize) -> Result<Vec<usize>> {
    let mut parts = line.split_whitespace();
    if parts.next() != Some(tag) {
        return Err(Error::Parse {
            line: n,
            message: format!("expected `{tag}`"),
        });
    }
    let values = parts
        .map(|p| {
            p.parse::<usize>().map_err(|e| Error::Parse {
                line: n,
                message: format!("{p:?}: {e}"),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if values.is_empty() {
        return Err(Error::Parse {
            line: n,
            message: format!("`{tag}` needs a value"),
        });
    }
    Ok(values)
}

fn parse_values<T: Scalar>(line: &str, expected: usize, n: usize) -> Result<Vec<T>> {
    let values = line
        .split_whitespace()
        .map(|p| {
            p.parse::<T>().map_err(|_| Error::Parse {
                line: n,
                message: format!("not a number: {p:?}"),
            })
        })
        .collect::<Result<Vec<T>>>()?;
    if values.len() != expected {
        return Err(Error::Parse {
            line: n,
            message: format!("expected {expected} values, found {}", values.len()),
        });
    }
    Ok(values)
}

/// Learning-rate schedule position and SGD hyper-parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<T> {
    pub initial_lr: T,
    pub current_epoch: usize,
    pub total_epochs: usize,
    pub power: T,
    pub momentum: T,
    pub weight_decay: T,
}

impl<T: Scalar> OptimizerState<T> {
    pub fn new(initial_lr: T, total_epochs: usize) -> Result<Self> {
        let state = Self {
            initial_lr,
            current_epoch: 0,
            total_epochs,
            power: T::of(0.9),
            momentum: T::of(0.9),
            weight_decay: T::zero(),
        };
        state.validate()?;
        Ok(state)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.initial_lr > T::zero()) {
            return Err(Error::Config(
                "initial learning rate must be positive".into(),
            ));
        }
        if self.total_epochs == 0 {
            return Err(Error::Config("total epochs must be positive".into()));
        }
        if self.current_epoch > self.total_epochs {
            return Err(Error::Config("current epoch beyond total epochs".into()));
        }
        if !(self.momentum >= T::zero() && self.momentum < T::one()) {
            return Err(Error::Config("momentum must lie in [0, 1)".into()));
        }
        if !(self.weight_decay >= T::zero()) {
            return Err(Error::Config("weight decay must be non-negative".into()));
        }
        Ok(())
    }

    /// Moves the schedule to `epoch`, clamped to `total_epochs`.
    pub fn set_epoch(&mut self, epoch: usize) {
        self.current_epoch = epoch.min(self.total_epochs);
    }
}

/// `lr_init · (1 − epoch / total)^power`.
pub fn poly_lr<T: Scalar>(opt: &OptimizerState<T>) -> T {
    let progress = T::of_usize(opt.current_epoch) / T::of_usize(opt.total_epochs);
    let base = (T::one() - progress).max(T::zero());
    opt.initial_lr * base.powf(opt.power)
}

/// Momentum SGD: `v ← μ·v + g`, `p ← p − lr·v`, with the learning rate
/// taken from [`poly_lr`].
#[derive(Debug, Clone)]
pub struct Sgd<T> {
    pub state: OptimizerState<T>,
    velocity: Option<Gradients<T>>,
}

impl<T: Scalar> Sgd<T> {
    pub fn new(state: OptimizerState<T>) -> Self {
        Self {
            state,
            velocity: None,
        }
    }

    pub fn learning_rate(&self) -> T {
        poly_lr(&self.state)
    }

    pub fn step(&mut self, model: &mut Mlp<T>, grads: &Gradients<T>) -> Result<()> {
        if grads.layers.len() != model.layers.len() {
            return Err(Error::LengthMismatch {
                op: "sgd_step layers",
                expected: model.layers.len(),
                actual: grads.layers.len(),
            });
        }
        for (i, (g, p)) in grads.layers.iter().zip(&model.layers).enumerate() {
            if g.weights.shape() != p.weights.shape() || g.bias.len() != p.bias.len() {
                return Err(Error::DimensionMismatch {
                    op: "sgd_step",
                    left: g.weights.shape(),
                    right: p.weights.shape(),
                });
            }
            if !g.weights.is_finite() || g.bias.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("gradient of layer {i}")));
            }
        }

        let lr = self.learning_rate();
        let momentum = self.state.momentum;
        let decay = self.state.weight_decay;
        let velocity = self
            .velocity
            .get_or_insert_with(|| Gradients::zeros_like(model));

        for (layer, (grad, vel)) in model
            .layers
            .iter_mut()
            .zip(grads.layers.iter().zip(velocity.layers.iter_mut()))
        {
            let params = layer
                .weights
                .as_mut_slice()
                .iter_mut()
                .chain(layer.bias.iter_mut());
            let g = grad.weights.as_slice().iter().chain(&grad.bias);
            let v = vel
                .weights
                .as_mut_slice()
                .iter_mut()
                .chain(vel.bias.iter_mut());
            for ((p, &g), v) in params.zip(g).zip(v) {
                let g = g + decay * *p;
                *v = momentum * *v + g;
                *p -= lr * *v;
            }
        }
        for (i, layer) in model.layers.iter().enumerate() {
            if !layer.weights.is_finite() || layer.bias.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("parameters of layer {i}")));
            }
        }
        Ok(())
    }
}
