//! Feedforward neural lifting map with exact reverse-mode gradients,
//! inverted dropout, and configurable activations.
//!
//! The lifted vector is `[y ; network(y)]`: the raw observables are always
//! the first `input_dim` entries, mirroring the polynomial dictionary's
//! identity prefix. Gradients are computed by a hand-rolled tape rather than
//! a general autodiff graph; the objective's structure is fixed, so the tape
//! only needs pre-activations, layer outputs, and dropout masks.

use crate::error::{Error, Result};
use crate::numerics::{Mat, Rng};
use serde::{Deserialize, Serialize};

/// Activation function applied at every layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Elu,
    Relu,
    Crelu,
    Tanh,
}

impl Activation {
    /// Scalar value for the single-output activations. cReLU produces a pair;
    /// see [`crelu`].
    pub fn value(self, z: f64) -> f64 {
        match self {
            Activation::Elu => {
                if z > 0.0 {
                    z
                } else {
                    z.exp() - 1.0
                }
            }
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Crelu => panic!("crelu produces a pair; use crelu(z)"),
        }
    }

    /// Derivative of the scalar activations. Conventions pinned for
    /// determinism: ReLU gradient at exactly 0 is 0; ELU gradient at 0 is 1.
    pub fn grad(self, z: f64) -> f64 {
        match self {
            Activation::Elu => {
                if z > 0.0 {
                    1.0
                } else {
                    z.exp()
                }
            }
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            Activation::Crelu => panic!("crelu produces a pair; use crelu_grad(z)"),
        }
    }

    fn is_pair(self) -> bool {
        matches!(self, Activation::Crelu)
    }
}

/// Concatenated ReLU: (max(0, z), max(0, -z)).
pub fn crelu(z: f64) -> (f64, f64) {
    (z.max(0.0), (-z).max(0.0))
}

/// Gradients of the cReLU pair with respect to z.
pub fn crelu_grad(z: f64) -> (f64, f64) {
    (
        if z > 0.0 { 1.0 } else { 0.0 },
        if z < 0.0 { -1.0 } else { 0.0 },
    )
}

/// Architecture of the neural dictionary.
///
/// Depth (the number of weight layers) is `hidden_widths.len() + 1`. With the
/// cReLU activation each layer's output width doubles, which widens the next
/// layer's input and the terminal lifted block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden_widths: Vec<usize>,
    pub output_width: usize,
    pub activation: Activation,
    pub dropout_rate: f64,
    /// Adds h_{j-1} to layer output h_j when the widths match. Off by
    /// default: the plain feedforward chain is the primary architecture.
    #[serde(default)]
    pub skip_connections: bool,
}

impl MlpSpec {
    /// Default dictionary for small systems: width 20, depth 5, ELU,
    /// dropout 0.1.
    pub fn default_for(input_dim: usize) -> Self {
        Self {
            input_dim,
            hidden_widths: vec![20; 4],
            output_width: 20,
            activation: Activation::Elu,
            dropout_rate: 0.1,
            skip_connections: false,
        }
    }

    /// Named preset for the power benchmark: a 20-layer dropout ELU network.
    pub fn power_preset(input_dim: usize) -> Self {
        Self {
            input_dim,
            hidden_widths: vec![20; 19],
            output_width: 20,
            activation: Activation::Elu,
            dropout_rate: 0.1,
            skip_connections: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_width == 0 {
            return Err(Error::InvalidArgument("widths must be >= 1".into()));
        }
        if self.hidden_widths.contains(&0) {
            return Err(Error::InvalidArgument("widths must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::InvalidArgument(format!(
                "dropout_rate {} outside [0, 1)",
                self.dropout_rate
            )));
        }
        Ok(())
    }

    /// Number of weight layers.
    pub fn depth(&self) -> usize {
        self.hidden_widths.len() + 1
    }

    /// Raw output widths per layer (before activation).
    pub fn layer_widths(&self) -> Vec<usize> {
        let mut w = self.hidden_widths.clone();
        w.push(self.output_width);
        w
    }

    /// Width of a layer's output after activation (cReLU doubles it).
    fn act_width(&self, raw: usize) -> usize {
        if self.activation.is_pair() {
            2 * raw
        } else {
            raw
        }
    }

    /// Input width of each layer.
    pub fn layer_inputs(&self) -> Vec<usize> {
        let mut ins = Vec::with_capacity(self.depth());
        let mut cur = self.input_dim;
        for w in self.layer_widths() {
            ins.push(cur);
            cur = self.act_width(w);
        }
        ins
    }

    /// Lifted dimension: input_dim + terminal activated width.
    pub fn lifted_dim(&self) -> usize {
        self.input_dim + self.act_width(self.output_width)
    }
}

/// Network parameters: one weight matrix and bias vector per layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub weights: Vec<Mat>,
    pub biases: Vec<Vec<f64>>,
}

impl MlpParams {
    pub fn validate_shapes(&self, spec: &MlpSpec) -> Result<()> {
        let widths = spec.layer_widths();
        let inputs = spec.layer_inputs();
        if self.weights.len() != spec.depth() || self.biases.len() != spec.depth() {
            return Err(Error::InvalidArgument(format!(
                "params have {} layers, spec has {}",
                self.weights.len(),
                spec.depth()
            )));
        }
        for j in 0..spec.depth() {
            if self.weights[j].rows() != widths[j]
                || self.weights[j].cols() != inputs[j]
                || self.biases[j].len() != widths[j]
            {
                return Err(Error::InvalidArgument(format!(
                    "layer {j} shape mismatch: weights {}x{}, expected {}x{}",
                    self.weights[j].rows(),
                    self.weights[j].cols(),
                    widths[j],
                    inputs[j]
                )));
            }
        }
        Ok(())
    }

    /// Sum of |theta| over all weights and biases.
    pub fn l1_norm(&self) -> f64 {
        let w: f64 = self
            .weights
            .iter()
            .map(|m| m.data().iter().map(|v| v.abs()).sum::<f64>())
            .sum();
        let b: f64 = self
            .biases
            .iter()
            .map(|v| v.iter().map(|x| x.abs()).sum::<f64>())
            .sum();
        w + b
    }

    /// Order-stable FNV hash of the parameter bytes.
    pub fn content_hash(&self) -> u64 {
        let mut h = 0xcbf29ce484222325u64;
        let mut mix = |x: f64| {
            for b in x.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        };
        for w in &self.weights {
            for &v in w.data() {
                mix(v);
            }
        }
        for b in &self.biases {
            for &v in b {
                mix(v);
            }
        }
        h
    }
}

/// Gradients with the same shapes as [`MlpParams`], plus the gradient with
/// respect to the network input.
#[derive(Debug, Clone)]
pub struct MlpGrads {
    pub weights: Vec<Mat>,
    pub biases: Vec<Vec<f64>>,
    pub input: Vec<f64>,
}

impl MlpGrads {
    pub fn zeros(spec: &MlpSpec) -> Self {
        let widths = spec.layer_widths();
        let inputs = spec.layer_inputs();
        Self {
            weights: (0..spec.depth())
                .map(|j| Mat::zeros(widths[j], inputs[j]))
                .collect(),
            biases: widths.iter().map(|&w| vec![0.0; w]).collect(),
            input: vec![0.0; spec.input_dim],
        }
    }

    pub fn add_assign(&mut self, other: &MlpGrads) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            for (x, y) in a.data_mut().iter_mut().zip(b.data()) {
                *x += y;
            }
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        for (x, y) in self.input.iter_mut().zip(&other.input) {
            *x += y;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for a in &mut self.weights {
            for x in a.data_mut() {
                *x *= s;
            }
        }
        for a in &mut self.biases {
            for x in a.iter_mut() {
                *x *= s;
            }
        }
        for x in &mut self.input {
            *x *= s;
        }
    }
}

/// Inverted-dropout masks for each hidden layer: entries are either 0 or
/// 1/(1-rate), drawn per sample and reusable across that sample's lifts.
#[derive(Debug, Clone)]
pub struct DropoutMasks {
    pub layers: Vec<Vec<f64>>,
}

/// Draw fresh masks for one sample. With rate 0 the masks are all-ones.
pub fn sample_masks(spec: &MlpSpec, rng: &mut Rng) -> DropoutMasks {
    let widths = spec.layer_widths();
    let rate = spec.dropout_rate;
    let keep_scale = if rate > 0.0 { 1.0 / (1.0 - rate) } else { 1.0 };
    let mut layers = Vec::with_capacity(spec.depth().saturating_sub(1));
    for &w in widths.iter().take(spec.depth() - 1) {
        let aw = if spec.activation.is_pair() { 2 * w } else { w };
        let mask = (0..aw)
            .map(|_| {
                if rate > 0.0 && rng.uniform() < rate {
                    0.0
                } else {
                    keep_scale
                }
            })
            .collect();
        layers.push(mask);
    }
    DropoutMasks { layers }
}

/// Execution mode for [`forward`].
pub enum ForwardMode<'a> {
    /// No dropout, no scaling.
    Eval,
    /// Fresh inverted-dropout masks drawn from the given stream.
    Train(&'a mut Rng),
}

/// Record of one forward pass, consumed by [`backward`].
#[derive(Debug, Clone)]
pub struct Tape {
    input: Vec<f64>,
    /// Pre-activations z_j per layer.
    pre: Vec<Vec<f64>>,
    /// Post-activation, post-dropout outputs h_j per layer.
    post: Vec<Vec<f64>>,
    masks: Option<DropoutMasks>,
    skip_used: Vec<bool>,
}

/// Lift one observable vector: `[y ; network(y)]`.
pub fn forward(
    spec: &MlpSpec,
    params: &MlpParams,
    y: &[f64],
    mode: ForwardMode,
) -> Result<(Vec<f64>, Tape)> {
    let masks = match mode {
        ForwardMode::Eval => None,
        ForwardMode::Train(rng) => Some(sample_masks(spec, rng)),
    };
    forward_with_masks(spec, params, y, masks)
}

/// Forward pass with explicit masks (`None` = eval mode). Exposed so a
/// training step can share one sample's masks between its two lifts.
pub fn forward_with_masks(
    spec: &MlpSpec,
    params: &MlpParams,
    y: &[f64],
    masks: Option<DropoutMasks>,
) -> Result<(Vec<f64>, Tape)> {
    if y.len() != spec.input_dim {
        return Err(Error::InvalidArgument(format!(
            "input dim {} does not match spec input_dim {}",
            y.len(),
            spec.input_dim
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite network input".into()));
    }

    let depth = spec.depth();
    let mut pre = Vec::with_capacity(depth);
    let mut post = Vec::with_capacity(depth);
    let mut skip_used = vec![false; depth];
    let mut h: Vec<f64> = y.to_vec();

    #[allow(clippy::needless_range_loop)]
    for j in 0..depth {
        let z: Vec<f64> = params.weights[j]
            .matvec(&h)
            .iter()
            .zip(&params.biases[j])
            .map(|(wz, b)| wz + b)
            .collect();
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalFailure(format!(
                "non-finite pre-activation at layer {j}"
            )));
        }

        let mut a: Vec<f64> = if spec.activation.is_pair() {
            let mut out = Vec::with_capacity(2 * z.len());
            for &zi in &z {
                out.push(crelu(zi).0);
            }
            for &zi in &z {
                out.push(crelu(zi).1);
            }
            out
        } else {
            z.iter().map(|&zi| spec.activation.value(zi)).collect()
        };

        let hidden = j + 1 < depth;
        if hidden {
            if let Some(m) = &masks {
                for (ai, &mi) in a.iter_mut().zip(&m.layers[j]) {
                    *ai *= mi;
                }
            }
        }

        if spec.skip_connections && a.len() == h.len() {
            for (ai, &hi) in a.iter_mut().zip(&h) {
                *ai += hi;
            }
            skip_used[j] = true;
        }

        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalFailure(format!(
                "non-finite activation at layer {j}"
            )));
        }

        pre.push(z);
        post.push(a.clone());
        h = a;
    }

    let mut lifted = Vec::with_capacity(spec.lifted_dim());
    lifted.extend_from_slice(y);
    lifted.extend_from_slice(&h);

    Ok((
        lifted,
        Tape {
            input: y.to_vec(),
            pre,
            post,
            masks,
            skip_used,
        },
    ))
}

/// Exact reverse-mode gradients through the forward pass recorded on `tape`.
///
/// `upstream` is the loss gradient with respect to the lifted vector; its
/// identity-prefix components contribute only to the input gradient.
pub fn backward(
    spec: &MlpSpec,
    params: &MlpParams,
    tape: &Tape,
    upstream: &[f64],
) -> Result<MlpGrads> {
    if upstream.len() != spec.lifted_dim() {
        return Err(Error::InvalidArgument(format!(
            "upstream length {} does not match lifted dim {}",
            upstream.len(),
            spec.lifted_dim()
        )));
    }
    if tape.pre.len() != spec.depth() {
        return Err(Error::InvalidArgument(
            "tape does not match the spec's layer count".into(),
        ));
    }
    params.validate_shapes(spec)?;

    let p = spec.input_dim;
    let depth = spec.depth();
    let mut grads = MlpGrads::zeros(spec);

    // Gradient w.r.t. the current layer output h_j.
    let mut g: Vec<f64> = upstream[p..].to_vec();

    #[allow(clippy::needless_range_loop)]
    for j in (0..depth).rev() {
        let z = &tape.pre[j];
        let layer_input: &[f64] = if j == 0 { &tape.input } else { &tape.post[j - 1] };
        let hidden = j + 1 < depth;

        // Skip connection: h_j = branch(z_j) + h_{j-1}; the identity branch
        // passes g through untouched.
        let skip_grad: Option<Vec<f64>> = if tape.skip_used[j] { Some(g.clone()) } else { None };

        // Through dropout (mask entries already carry the 1/(1-rate) scale).
        if hidden {
            if let Some(m) = &tape.masks {
                for (gi, &mi) in g.iter_mut().zip(&m.layers[j]) {
                    *gi *= mi;
                }
            }
        }

        // Through the activation to dL/dz.
        let w = z.len();
        let dz: Vec<f64> = if spec.activation.is_pair() {
            (0..w)
                .map(|i| {
                    let (gp, gn) = crelu_grad(z[i]);
                    g[i] * gp + g[w + i] * gn
                })
                .collect()
        } else {
            z.iter()
                .zip(&g)
                .map(|(&zi, &gi)| gi * spec.activation.grad(zi))
                .collect()
        };

        // Parameter gradients: dW = dz outer input, db = dz.
        for (r, &dzr) in dz.iter().enumerate() {
            grads.biases[j][r] += dzr;
            if dzr == 0.0 {
                continue;
            }
            let row = grads.weights[j].row_mut(r);
            for (c, &xi) in layer_input.iter().enumerate() {
                row[c] += dzr * xi;
            }
        }

        // Gradient w.r.t. the layer input.
        let mut g_prev = params.weights[j].matvec_t(&dz);
        if let Some(sg) = skip_grad {
            for (a, b) in g_prev.iter_mut().zip(&sg) {
                *a += b;
            }
        }
        g = g_prev;
    }

    // g now holds dL/d(input) through the network; add the identity prefix.
    for (acc, (net, &up)) in grads.input.iter_mut().zip(g.iter().zip(&upstream[..p])) {
        *acc = net + up;
    }

    Ok(grads)
}

/// He-style initialization: weights ~ N(0, 2 / fan_in), biases zero.
pub fn init_params(spec: &MlpSpec, rng: &mut Rng) -> MlpParams {
    let widths = spec.layer_widths();
    let inputs = spec.layer_inputs();
    let mut weights = Vec::with_capacity(spec.depth());
    let mut biases = Vec::with_capacity(spec.depth());
    for j in 0..spec.depth() {
        let std = (2.0 / inputs[j] as f64).sqrt();
        weights.push(Mat::from_fn(widths[j], inputs[j], |_, _| std * rng.gauss()));
        biases.push(vec![0.0; widths[j]]);
    }
    MlpParams { weights, biases }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec(act: Activation) -> MlpSpec {
        MlpSpec {
            input_dim: 3,
            hidden_widths: vec![5, 4],
            output_width: 6,
            activation: act,
            dropout_rate: 0.0,
            skip_connections: false,
        }
    }

    #[test]
    fn activation_conventions() {
        assert_eq!(Activation::Elu.value(0.0), 0.0);
        assert_eq!(Activation::Elu.grad(0.0), 1.0);
        assert_eq!(Activation::Relu.grad(0.0), 0.0);
        assert_eq!(crelu(-2.0), (0.0, 2.0));
        assert_eq!(crelu(1.5), (1.5, 0.0));
    }

    #[test]
    fn tanh_grad_matches_finite_difference() {
        let eps = 1e-6;
        for &z in &[-1.3, -0.2, 0.0, 0.7, 2.1] {
            let fd = (Activation::Tanh.value(z + eps) - Activation::Tanh.value(z - eps))
                / (2.0 * eps);
            assert!((Activation::Tanh.grad(z) - fd).abs() < 1e-8);
        }
    }

    #[test]
    fn init_is_deterministic_with_zero_biases() {
        let spec = small_spec(Activation::Elu);
        let a = init_params(&spec, &mut Rng::new(5));
        let b = init_params(&spec, &mut Rng::new(5));
        assert_eq!(a, b);
        assert!(a.biases.iter().all(|bv| bv.iter().all(|&x| x == 0.0)));
    }

    #[test]
    fn init_weight_std_near_he_target() {
        let spec = MlpSpec {
            input_dim: 64,
            hidden_widths: vec![],
            output_width: 64,
            activation: Activation::Relu,
            dropout_rate: 0.0,
            skip_connections: false,
        };
        let params = init_params(&spec, &mut Rng::new(17));
        let w = &params.weights[0];
        let n = (w.rows() * w.cols()) as f64; // 4096 samples
        let mean: f64 = w.data().iter().sum::<f64>() / n;
        let var: f64 = w.data().iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        let target = (2.0 / 64.0f64).sqrt();
        assert!((var.sqrt() - target).abs() / target < 0.2);
    }

    #[test]
    fn zero_params_relu_lifts_to_identity_prefix_plus_zeros() {
        let spec = small_spec(Activation::Relu);
        let params = MlpParams {
            weights: spec
                .layer_widths()
                .iter()
                .zip(spec.layer_inputs())
                .map(|(&w, i)| Mat::zeros(w, i))
                .collect(),
            biases: spec.layer_widths().iter().map(|&w| vec![0.0; w]).collect(),
        };
        let y = [1.0, -2.0, 3.0];
        let (lifted, _) = forward(&spec, &params, &y, ForwardMode::Eval).unwrap();
        assert_eq!(&lifted[..3], &y);
        assert!(lifted[3..].iter().all(|&v| v == 0.0));
        assert_eq!(lifted.len(), spec.lifted_dim());
    }

    #[test]
    fn dropout_zero_train_equals_eval() {
        let spec = small_spec(Activation::Elu);
        let params = init_params(&spec, &mut Rng::new(1));
        let y = [0.3, -0.4, 0.9];
        let (ev, _) = forward(&spec, &params, &y, ForwardMode::Eval).unwrap();
        let mut rng = Rng::new(2);
        let (tr, _) = forward(&spec, &params, &y, ForwardMode::Train(&mut rng)).unwrap();
        assert_eq!(ev, tr);
    }

    #[test]
    fn single_layer_tanh_matches_hand_computation() {
        let spec = MlpSpec {
            input_dim: 2,
            hidden_widths: vec![],
            output_width: 2,
            activation: Activation::Tanh,
            dropout_rate: 0.0,
            skip_connections: false,
        };
        let params = MlpParams {
            weights: vec![Mat::new(2, 2, vec![0.1, -0.2, 0.3, 0.4]).unwrap()],
            biases: vec![vec![0.05, -0.1]],
        };
        let y = [1.0, 2.0];
        let (lifted, _) = forward(&spec, &params, &y, ForwardMode::Eval).unwrap();
        let z0: f64 = 0.1 * 1.0 - 0.2 * 2.0 + 0.05;
        let z1: f64 = 0.3 * 1.0 + 0.4 * 2.0 - 0.1;
        assert!((lifted[2] - z0.tanh()).abs() < 1e-12);
        assert!((lifted[3] - z1.tanh()).abs() < 1e-12);
    }

    #[test]
    fn crelu_lifted_dim_doubles_terminal_width() {
        let mut spec = small_spec(Activation::Crelu);
        assert_eq!(spec.lifted_dim(), 3 + 12);
        spec.activation = Activation::Elu;
        assert_eq!(spec.lifted_dim(), 3 + 6);
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let spec = small_spec(Activation::Elu);
        let params = init_params(&spec, &mut Rng::new(3));
        let y = [0.1, 0.2, -0.3];
        let (_, tape) = forward(&spec, &params, &y, ForwardMode::Eval).unwrap();
        let grads = backward(&spec, &params, &tape, &vec![0.0; spec.lifted_dim()]).unwrap();
        for w in &grads.weights {
            assert!(w.data().iter().all(|&v| v == 0.0));
        }
        assert!(grads.input.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn prefix_upstream_routes_to_input_gradient_only() {
        let spec = small_spec(Activation::Elu);
        let params = init_params(&spec, &mut Rng::new(4));
        let y = [0.1, 0.2, -0.3];
        let (_, tape) = forward(&spec, &params, &y, ForwardMode::Eval).unwrap();
        let mut upstream = vec![0.0; spec.lifted_dim()];
        upstream[0] = 2.0;
        upstream[2] = -1.5;
        let grads = backward(&spec, &params, &tape, &upstream).unwrap();
        for w in &grads.weights {
            assert!(w.data().iter().all(|&v| v == 0.0));
        }
        assert_eq!(grads.input, vec![2.0, 0.0, -1.5]);
    }

    /// Richardson-extrapolated central difference: kills the eps^2 term so
    /// the oracle's own error sits below the 1e-10 absolute floor.
    fn rich_fd(mut f: impl FnMut(f64) -> f64, eps: f64) -> f64 {
        let d1 = (f(eps) - f(-eps)) / (2.0 * eps);
        let d2 = (f(eps / 2.0) - f(-eps / 2.0)) / eps;
        (4.0 * d2 - d1) / 3.0
    }

    fn grad_matches(an: f64, fd: f64, tol: f64) -> bool {
        let diff = (an - fd).abs();
        diff <= 1e-10 || diff / an.abs().max(fd.abs()) < tol
    }

    fn finite_diff_check(spec: &MlpSpec, seed: u64, tol: f64) {
        let mut rng = Rng::new(seed);
        let params = init_params(spec, &mut rng);
        let y: Vec<f64> = (0..spec.input_dim).map(|_| rng.gauss() * 0.5).collect();
        let mut upstream: Vec<f64> = (0..spec.lifted_dim()).map(|_| rng.gauss()).collect();
        let unorm = upstream.iter().map(|v| v * v).sum::<f64>().sqrt();
        for u in &mut upstream {
            *u /= unorm; // keep the probe loss O(1) so fd roundoff stays tiny
        }

        let loss = |p: &MlpParams| -> f64 {
            let (lifted, _) = forward_with_masks(spec, p, &y, None).unwrap();
            lifted.iter().zip(&upstream).map(|(a, b)| a * b).sum()
        };

        let (_, tape) = forward_with_masks(spec, &params, &y, None).unwrap();
        let grads = backward(spec, &params, &tape, &upstream).unwrap();

        let eps = 1e-4;
        let mut p = params.clone();
        for j in 0..spec.depth() {
            for idx in 0..p.weights[j].data().len() {
                let orig = p.weights[j].data()[idx];
                let fd = rich_fd(
                    |d| {
                        p.weights[j].data_mut()[idx] = orig + d;
                        let v = loss(&p);
                        p.weights[j].data_mut()[idx] = orig;
                        v
                    },
                    eps,
                );
                let an = grads.weights[j].data()[idx];
                assert!(
                    grad_matches(an, fd, tol),
                    "layer {j} weight {idx}: analytic {an}, fd {fd}"
                );
            }
            for idx in 0..p.biases[j].len() {
                let orig = p.biases[j][idx];
                let fd = rich_fd(
                    |d| {
                        p.biases[j][idx] = orig + d;
                        let v = loss(&p);
                        p.biases[j][idx] = orig;
                        v
                    },
                    eps,
                );
                let an = grads.biases[j][idx];
                assert!(
                    grad_matches(an, fd, tol),
                    "layer {j} bias {idx}: analytic {an}, fd {fd}"
                );
            }
        }
    }

    #[test]
    fn finite_difference_three_layer_elu() {
        let spec = MlpSpec {
            input_dim: 3,
            hidden_widths: vec![6, 5],
            output_width: 4,
            activation: Activation::Elu,
            dropout_rate: 0.0,
            skip_connections: false,
        };
        finite_diff_check(&spec, 11, 1e-5);
    }

    #[test]
    fn finite_difference_random_instances() {
        // 20 random (spec, params, y, upstream) instances, widths <= 16,
        // depth <= 5, across all activations.
        let acts = [
            Activation::Elu,
            Activation::Relu,
            Activation::Crelu,
            Activation::Tanh,
        ];
        let mut seed_rng = Rng::new(2024);
        for trial in 0..20 {
            let depth = 1 + seed_rng.below(5);
            let hidden: Vec<usize> = (0..depth - 1).map(|_| 1 + seed_rng.below(16)).collect();
            let spec = MlpSpec {
                input_dim: 1 + seed_rng.below(6),
                hidden_widths: hidden,
                output_width: 1 + seed_rng.below(16),
                activation: acts[trial % acts.len()],
                dropout_rate: 0.0,
                skip_connections: trial % 7 == 3,
            };
            finite_diff_check(&spec, 100 + trial as u64, 1e-5);
        }
    }

    #[test]
    fn relu_positive_preactivations_match_linear_chain() {
        // With strictly positive pre-activations, ReLU is the identity, so
        // the network gradient equals the linear-chain product.
        let spec = MlpSpec {
            input_dim: 2,
            hidden_widths: vec![2],
            output_width: 2,
            activation: Activation::Relu,
            dropout_rate: 0.0,
            skip_connections: false,
        };
        let w0 = Mat::new(2, 2, vec![0.5, 0.1, 0.2, 0.4]).unwrap();
        let w1 = Mat::new(2, 2, vec![0.3, 0.2, 0.1, 0.6]).unwrap();
        let params = MlpParams {
            weights: vec![w0.clone(), w1.clone()],
            biases: vec![vec![1.0, 1.0], vec![1.0, 1.0]],
        };
        let y = [1.0, 1.0]; // all pre-activations positive
        let (_, tape) = forward(&spec, &params, &y, ForwardMode::Eval).unwrap();
        let mut upstream = vec![0.0; spec.lifted_dim()];
        upstream[2] = 1.0; // d/d(first net output)
        let grads = backward(&spec, &params, &tape, &upstream).unwrap();
        // dL/d(input) = W0^T W1^T e_0
        let expect = w0.transpose().matmul(&w1.transpose());
        assert!((grads.input[0] - expect[(0, 0)]).abs() < 1e-14);
        assert!((grads.input[1] - expect[(1, 0)]).abs() < 1e-14);
    }

    #[test]
    fn train_mode_is_deterministic_given_seed() {
        let mut spec = small_spec(Activation::Elu);
        spec.dropout_rate = 0.5;
        let params = init_params(&spec, &mut Rng::new(8));
        let y = [0.5, 0.5, 0.5];
        let mut r1 = Rng::new(77);
        let mut r2 = Rng::new(77);
        let (a, _) = forward(&spec, &params, &y, ForwardMode::Train(&mut r1)).unwrap();
        let (b, _) = forward(&spec, &params, &y, ForwardMode::Train(&mut r2)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn inverted_dropout_preserves_expectation_through_linear_map() {
        // Inverted scaling makes E[mask . h] = h, so the expectation is
        // preserved exactly through the linear map that consumes the masked
        // activations: compare the terminal layer's pre-activation. Rate 0.5,
        // 10^4 masks, within 2%.
        let spec = MlpSpec {
            input_dim: 2,
            hidden_widths: vec![8],
            output_width: 4,
            activation: Activation::Tanh,
            dropout_rate: 0.5,
            skip_connections: false,
        };
        let params = init_params(&spec, &mut Rng::new(9));
        let y = [0.4, -0.2];
        let (_, ev_tape) = forward_with_masks(&spec, &params, &y, None).unwrap();
        let ev = &ev_tape.pre[1];
        let mut rng = Rng::new(10);
        let n = 10_000;
        let mut mean = vec![0.0; ev.len()];
        for _ in 0..n {
            let (_, tape) = forward(&spec, &params, &y, ForwardMode::Train(&mut rng)).unwrap();
            for (m, v) in mean.iter_mut().zip(&tape.pre[1]) {
                *m += v / n as f64;
            }
        }
        let scale = ev.iter().map(|v| v.abs()).fold(0.0f64, f64::max);
        for (i, (&m, &e)) in mean.iter().zip(ev).enumerate() {
            assert!(
                (m - e).abs() <= 0.02 * scale,
                "entry {i}: mean {m} vs eval {e}"
            );
        }
    }

    #[test]
    fn dropout_masks_shared_across_two_lifts() {
        let mut spec = small_spec(Activation::Elu);
        spec.dropout_rate = 0.5;
        let params = init_params(&spec, &mut Rng::new(12));
        let mut rng = Rng::new(13);
        let masks = sample_masks(&spec, &mut rng);
        let (a1, _) =
            forward_with_masks(&spec, &params, &[0.1, 0.2, 0.3], Some(masks.clone())).unwrap();
        let (a2, _) =
            forward_with_masks(&spec, &params, &[0.1, 0.2, 0.3], Some(masks)).unwrap();
        assert_eq!(a1, a2);
    }
}
