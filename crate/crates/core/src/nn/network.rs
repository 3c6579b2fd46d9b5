//! Network topologies, parameter initialization, forward pass, and
//! reverse-mode gradients.
//!
//! Both architectures end in a softmax over the type universe. NeuType1
//! concatenates the active inputs straight into a two-layer merge stack;
//! NeuType2 first runs each active input through its own two-layer stack
//! and concatenates the stack outputs. Dropout (inverted scaling) can sit
//! before the first merge layer, between the two merge layers, or after
//! the second one.

use rand::Rng;

use super::matrix::Matrix;
use crate::features::{FeatureBundle, InputMask};
use crate::{Error, Result};

pub const DEFAULT_HIDDEN_SIZE: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Architecture {
    NeuType1,
    NeuType2,
}

impl Architecture {
    pub fn id(self) -> u8 {
        match self {
            Architecture::NeuType1 => 1,
            Architecture::NeuType2 => 2,
        }
    }

    pub fn from_id(id: u8) -> Result<Self> {
        match id {
            1 => Ok(Architecture::NeuType1),
            2 => Ok(Architecture::NeuType2),
            other => Err(Error::Data(format!("unknown architecture id {other}"))),
        }
    }
}

impl std::str::FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "neutype1" | "1" => Ok(Architecture::NeuType1),
            "neutype2" | "2" => Ok(Architecture::NeuType2),
            other => Err(Error::Config(format!(
                "unknown architecture {other:?} (expected neutype1|neutype2)"
            ))),
        }
    }
}

impl std::fmt::Display for Architecture {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Architecture::NeuType1 => "neutype1",
            Architecture::NeuType2 => "neutype2",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropoutPosition {
    BeforeM1,
    BetweenM1M2,
    AfterM2,
}

impl std::str::FromStr for DropoutPosition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "before_m1" => Ok(DropoutPosition::BeforeM1),
            "between_m1_m2" => Ok(DropoutPosition::BetweenM1M2),
            "after_m2" => Ok(DropoutPosition::AfterM2),
            other => Err(Error::Config(format!(
                "unknown dropout position {other:?} (expected before_m1|between_m1_m2|after_m2)"
            ))),
        }
    }
}

impl std::fmt::Display for DropoutPosition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DropoutPosition::BeforeM1 => "before_m1",
            DropoutPosition::BetweenM1M2 => "between_m1_m2",
            DropoutPosition::AfterM2 => "after_m2",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkTopology {
    pub architecture: Architecture,
    pub mask: InputMask,
    /// Dimensionality of each active input, in A, B, C order.
    pub input_dims: Vec<usize>,
    pub hidden_size: usize,
    pub output_size: usize,
    pub dropout: Vec<(DropoutPosition, f64)>,
}

impl NetworkTopology {
    pub fn validate(&self) -> Result<()> {
        if !self.mask.any() {
            return Err(Error::Config("empty input mask".into()));
        }
        if self.input_dims.len() != self.mask.active_count() {
            return Err(Error::Config(format!(
                "mask {} selects {} inputs but {} dimensions were given",
                self.mask,
                self.mask.active_count(),
                self.input_dims.len()
            )));
        }
        if self.input_dims.iter().any(|&d| d == 0) {
            return Err(Error::Config("input dimensions must be positive".into()));
        }
        if self.hidden_size < 1 {
            return Err(Error::Config("hidden size must be at least 1".into()));
        }
        if self.output_size < 2 {
            return Err(Error::Config("output size must be at least 2".into()));
        }
        let mut seen = Vec::new();
        for (position, p) in &self.dropout {
            if !(0.0..1.0).contains(p) {
                return Err(Error::Config(format!(
                    "dropout probability {p} at {position} is outside [0, 1)"
                )));
            }
            if seen.contains(position) {
                return Err(Error::Config(format!(
                    "dropout position {position} given twice"
                )));
            }
            seen.push(*position);
        }
        Ok(())
    }

    /// Weight-matrix shapes `(fan_in, fan_out)` in layer order: per-input
    /// stacks first (NeuType2 only), then merge.1, merge.2, output.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = Vec::new();
        let merge_in = match self.architecture {
            Architecture::NeuType1 => self.input_dims.iter().sum(),
            Architecture::NeuType2 => {
                for &d in &self.input_dims {
                    shapes.push((d, self.hidden_size));
                    shapes.push((self.hidden_size, self.hidden_size));
                }
                self.hidden_size * self.input_dims.len()
            }
        };
        shapes.push((merge_in, self.hidden_size));
        shapes.push((self.hidden_size, self.hidden_size));
        shapes.push((self.hidden_size, self.output_size));
        shapes
    }

    pub fn param_count(&self) -> usize {
        self.layer_shapes()
            .iter()
            .map(|&(fan_in, fan_out)| fan_in * fan_out + fan_out)
            .sum()
    }

    /// Widths of the blocks feeding the merge concatenation.
    fn branch_widths(&self) -> Vec<usize> {
        match self.architecture {
            Architecture::NeuType1 => self.input_dims.clone(),
            Architecture::NeuType2 => vec![self.hidden_size; self.input_dims.len()],
        }
    }

    fn dropout_at(&self, position: DropoutPosition) -> Option<f64> {
        self.dropout
            .iter()
            .find(|(pos, _)| *pos == position)
            .map(|&(_, p)| p)
            .filter(|&p| p > 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    None,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// `fan_in x fan_out`; a layer computes `x · W + b`.
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub layers: Vec<DenseLayer>,
    pub topology: NetworkTopology,
    pub seed: u64,
}

impl ModelParams {
    /// Glorot-uniform weights (`±sqrt(6 / (fan_in + fan_out))`), zero biases,
    /// generated in layer order from a ChaCha stream seeded by `seed`.
    pub fn init(topology: NetworkTopology, seed: u64) -> Result<Self> {
        topology.validate()?;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let shapes = topology.layer_shapes();
        let last = shapes.len() - 1;
        let layers = shapes
            .iter()
            .enumerate()
            .map(|(i, &(fan_in, fan_out))| {
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let data: Vec<f64> = (0..fan_in * fan_out)
                    .map(|_| rng.random_range(-limit..limit))
                    .collect();
                DenseLayer {
                    weights: Matrix::from_vec(fan_in, fan_out, data),
                    bias: vec![0.0; fan_out],
                    activation: if i == last { Activation::None } else { Activation::Relu },
                }
            })
            .collect();
        Ok(ModelParams {
            layers,
            topology,
            seed,
        })
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.rows() * l.weights.cols() + l.bias.len())
            .sum()
    }
}

/// Spec entry point: a validated topology plus freshly initialized
/// parameters.
#[allow(clippy::too_many_arguments)]
pub fn build_topology(
    architecture: Architecture,
    mask: InputMask,
    input_dims: Vec<usize>,
    hidden_size: usize,
    output_size: usize,
    dropout: Vec<(DropoutPosition, f64)>,
    seed: u64,
) -> Result<(NetworkTopology, ModelParams)> {
    let topology = NetworkTopology {
        architecture,
        mask,
        input_dims,
        hidden_size,
        output_size,
        dropout,
    };
    let params = ModelParams::init(topology.clone(), seed)?;
    Ok((topology, params))
}

/// Gradients with the same shapes and order as `ModelParams::layers`.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub layers: Vec<(Matrix, Vec<f64>)>,
}

struct LayerTrace {
    input: Matrix,
    post: Matrix,
}

/// Everything backward needs from a training-mode forward pass.
pub struct ForwardCache {
    branch_traces: Vec<Vec<LayerTrace>>,
    branch_widths: Vec<usize>,
    merge: Vec<LayerTrace>, // M.1, M.2
    out_input: Matrix,
    d0: Option<Matrix>,
    d1: Option<Matrix>,
    d2: Option<Matrix>,
    pub probs: Matrix,
}

/// Stack the per-input vectors of a batch of bundles into one matrix per
/// active input, validating masks and dimensions.
pub fn batch_inputs(topology: &NetworkTopology, batch: &[FeatureBundle]) -> Result<Vec<Matrix>> {
    if batch.is_empty() {
        return Err(Error::Config("empty batch".into()));
    }
    for bundle in batch {
        if bundle.mask != topology.mask {
            return Err(Error::Config(format!(
                "bundle mask {} for {} does not match model mask {}",
                bundle.mask, bundle.entity, topology.mask
            )));
        }
    }
    let rows = batch.len();
    let mut inputs = Vec::with_capacity(topology.input_dims.len());
    for (slot, &dim) in topology.input_dims.iter().enumerate() {
        let mut m = Matrix::zeros(rows, dim);
        for (i, bundle) in batch.iter().enumerate() {
            let vector = bundle.active_vectors()[slot];
            if vector.len() != dim {
                return Err(Error::Shape {
                    layer: slot,
                    msg: format!(
                        "input {slot} of {} has length {}, model expects {dim}",
                        bundle.entity,
                        vector.len()
                    ),
                });
            }
            m.row_mut(i).copy_from_slice(vector);
        }
        inputs.push(m);
    }
    Ok(inputs)
}

fn dense_forward(layer: &DenseLayer, input: &Matrix, layer_idx: usize) -> Result<Matrix> {
    input.check_shape(input.rows(), layer.weights.rows(), layer_idx)?;
    let mut out = input.matmul(&layer.weights);
    out.add_bias(&layer.bias);
    if layer.activation == Activation::Relu {
        for x in out.data_mut() {
            if *x < 0.0 {
                *x = 0.0;
            }
        }
    }
    Ok(out)
}

/// Inverted-dropout mask: 0 with probability p, otherwise 1/(1-p).
fn dropout_mask<R: Rng>(rows: usize, cols: usize, p: f64, rng: &mut R) -> Matrix {
    let keep_scale = 1.0 / (1.0 - p);
    let data: Vec<f64> = (0..rows * cols)
        .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep_scale })
        .collect();
    Matrix::from_vec(rows, cols, data)
}

fn softmax_rows(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for x in row.iter_mut() {
            *x = (*x - max).exp();
            sum += *x;
        }
        for x in row.iter_mut() {
            *x /= sum;
        }
    }
    out
}

/// Run the network over a batch. In training mode the configured dropout
/// masks are sampled from `rng` with inverted scaling, so evaluation-mode
/// outputs need no rescaling.
pub fn forward<R: Rng>(
    params: &ModelParams,
    batch: &[FeatureBundle],
    train_mode: bool,
    rng: &mut R,
) -> Result<(Matrix, ForwardCache)> {
    let inputs = batch_inputs(&params.topology, batch)?;
    forward_from_inputs(params, inputs, train_mode, rng)
}

pub(crate) fn forward_from_inputs<R: Rng>(
    params: &ModelParams,
    inputs: Vec<Matrix>,
    train_mode: bool,
    rng: &mut R,
) -> Result<(Matrix, ForwardCache)> {
    let topology = &params.topology;
    let n_branches = inputs.len();
    let mut layer_idx = 0;

    // Per-input stacks (NeuType2); identity branches otherwise.
    let mut branch_traces: Vec<Vec<LayerTrace>> = Vec::with_capacity(n_branches);
    let mut branch_outputs: Vec<Matrix> = Vec::with_capacity(n_branches);
    match topology.architecture {
        Architecture::NeuType1 => {
            for input in inputs {
                branch_traces.push(Vec::new());
                branch_outputs.push(input);
            }
        }
        Architecture::NeuType2 => {
            for input in inputs {
                let mut traces = Vec::with_capacity(2);
                let mut x = input;
                for _ in 0..2 {
                    let out = dense_forward(&params.layers[layer_idx], &x, layer_idx)?;
                    layer_idx += 1;
                    traces.push(LayerTrace {
                        input: x,
                        post: out.clone(),
                    });
                    x = out;
                }
                branch_traces.push(traces);
                branch_outputs.push(x);
            }
        }
    }

    let refs: Vec<&Matrix> = branch_outputs.iter().collect();
    let mut merged = Matrix::concat_cols(&refs);

    let mut sample_dropout = |m: &mut Matrix, position| -> Option<Matrix> {
        let p = topology.dropout_at(position)?;
        if !train_mode {
            return None;
        }
        let mask = dropout_mask(m.rows(), m.cols(), p, rng);
        m.hadamard_assign(&mask);
        Some(mask)
    };

    let d0 = sample_dropout(&mut merged, DropoutPosition::BeforeM1);
    let m1_out = dense_forward(&params.layers[layer_idx], &merged, layer_idx)?;
    let m1 = LayerTrace {
        input: merged,
        post: m1_out.clone(),
    };
    layer_idx += 1;

    let mut h = m1_out;
    let d1 = sample_dropout(&mut h, DropoutPosition::BetweenM1M2);
    let m2_out = dense_forward(&params.layers[layer_idx], &h, layer_idx)?;
    let m2 = LayerTrace {
        input: h,
        post: m2_out.clone(),
    };
    layer_idx += 1;

    let mut out_input = m2_out;
    let d2 = sample_dropout(&mut out_input, DropoutPosition::AfterM2);
    let logits = dense_forward(&params.layers[layer_idx], &out_input, layer_idx)?;

    let probs = softmax_rows(&logits);
    let cache = ForwardCache {
        branch_traces,
        branch_widths: topology.branch_widths(),
        merge: vec![m1, m2],
        out_input,
        d0,
        d1,
        d2,
        probs: probs.clone(),
    };
    Ok((probs, cache))
}

fn relu_grad_assign(delta: &mut Matrix, post: &Matrix) {
    // ReLU subgradient at exactly 0 is 0, so gating on post > 0 is exact.
    for (d, &y) in delta.data_mut().iter_mut().zip(post.data()) {
        if y <= 0.0 {
            *d = 0.0;
        }
    }
}

/// Mean cross-entropy over the batch plus gradients for every layer,
/// computed by backpropagation through the fused softmax-cross-entropy
/// head, the dense layers, the concatenation, and any dropout masks.
pub fn loss_and_grad<R: Rng>(
    params: &ModelParams,
    batch: &[FeatureBundle],
    labels: &[usize],
    train_mode: bool,
    rng: &mut R,
) -> Result<(f64, Gradients)> {
    let (loss, grads, _) = loss_grad_probs(params, batch, labels, train_mode, rng)?;
    Ok((loss, grads))
}

/// As [`loss_and_grad`], also returning the batch probabilities from the
/// same pass (the training loop reuses them for its running accuracy).
pub(crate) fn loss_grad_probs<R: Rng>(
    params: &ModelParams,
    batch: &[FeatureBundle],
    labels: &[usize],
    train_mode: bool,
    rng: &mut R,
) -> Result<(f64, Gradients, Matrix)> {
    let inputs = batch_inputs(&params.topology, batch)?;
    let n = labels.len();
    if n != batch.len() {
        return Err(Error::Config(format!(
            "{} labels for a batch of {}",
            n,
            batch.len()
        )));
    }
    let out_size = params.topology.output_size;
    for &label in labels {
        if label >= out_size {
            return Err(Error::Config(format!(
                "label index {label} outside the {out_size}-type universe"
            )));
        }
    }

    let (probs, cache) = forward_from_inputs(params, inputs, train_mode, rng)?;
    let probs_out = probs.clone();

    let mut loss = 0.0;
    for (i, &label) in labels.iter().enumerate() {
        loss -= probs.get(i, label).ln();
    }
    loss /= n as f64;
    if !loss.is_finite() {
        let names: Vec<&str> = batch.iter().take(3).map(|b| b.entity.as_str()).collect();
        return Err(Error::Training(format!(
            "non-finite loss on batch starting with {names:?}"
        )));
    }

    // Fused softmax + cross-entropy delta: (p - onehot) / n.
    let mut delta = probs;
    for (i, &label) in labels.iter().enumerate() {
        let row = delta.row_mut(i);
        row[label] -= 1.0;
    }
    let scale = 1.0 / n as f64;
    for x in delta.data_mut() {
        *x *= scale;
    }

    let n_layers = params.layers.len();
    let mut grads: Vec<Option<(Matrix, Vec<f64>)>> = (0..n_layers).map(|_| None).collect();
    let mut layer_idx = n_layers - 1;

    // Output layer.
    grads[layer_idx] = Some((cache.out_input.matmul_tn(&delta), delta.col_sums()));
    delta = delta.matmul_nt(&params.layers[layer_idx].weights);
    if let Some(mask) = &cache.d2 {
        delta.hadamard_assign(mask);
    }

    // Merge stack, M.2 then M.1.
    for trace in cache.merge.iter().rev() {
        layer_idx -= 1;
        relu_grad_assign(&mut delta, &trace.post);
        grads[layer_idx] = Some((trace.input.matmul_tn(&delta), delta.col_sums()));
        delta = delta.matmul_nt(&params.layers[layer_idx].weights);
        let mask = if layer_idx == n_layers - 2 { &cache.d1 } else { &cache.d0 };
        if let Some(mask) = mask {
            delta.hadamard_assign(mask);
        }
    }

    // Per-input stacks (NeuType2); for NeuType1 the split gradients are
    // with respect to the raw inputs and are discarded.
    let parts = delta.split_cols(&cache.branch_widths);
    if params.topology.architecture == Architecture::NeuType2 {
        for (branch_no, (traces, mut d)) in cache.branch_traces.iter().zip(parts).enumerate() {
            let base = branch_no * 2;
            for (k, trace) in traces.iter().enumerate().rev() {
                let idx = base + k;
                relu_grad_assign(&mut d, &trace.post);
                grads[idx] = Some((trace.input.matmul_tn(&d), d.col_sums()));
                if k > 0 {
                    d = d.matmul_nt(&params.layers[idx].weights);
                }
            }
        }
    }

    let layers = grads
        .into_iter()
        .map(|g| g.expect("every layer received a gradient"))
        .collect();
    Ok((loss, Gradients { layers }, probs_out))
}

/// Highest-probability type index for a single bundle (ties broken by the
/// lowest index) plus its probability. Inference only; no dropout.
pub fn predict_index(params: &ModelParams, bundle: &FeatureBundle) -> Result<(usize, f64)> {
    let mut rng = NoRng;
    let batch = std::slice::from_ref(bundle);
    let (probs, _) = forward(params, batch, false, &mut rng)?;
    let row = probs.row(0);
    let mut best = 0;
    for (i, &p) in row.iter().enumerate() {
        if p > row[best] {
            best = i;
        }
    }
    Ok((best, row[best]))
}

/// Rng placeholder for evaluation-mode passes, which must not draw.
struct NoRng;

impl rand::RngCore for NoRng {
    fn next_u32(&mut self) -> u32 {
        unreachable!("evaluation mode must not consume randomness")
    }

    fn next_u64(&mut self) -> u64 {
        unreachable!("evaluation mode must not consume randomness")
    }

    fn fill_bytes(&mut self, _dest: &mut [u8]) {
        unreachable!("evaluation mode must not consume randomness")
    }
}
