//! The mixture density network: an MLP trunk feeding three parallel affine
//! heads that emit per-sample mixing weights, component means, and component
//! standard deviations of a univariate Gaussian mixture.
//!
//! The conditional density is
//!
//! ```text
//! p(y | x) = sum_i pi_i(x) * N(y | mu_i(x), sigma_i(x)^2)
//! ```
//!
//! evaluated in the log domain throughout. The loss is the batch mean of
//! -log p(y | x), and the backward pass is derived analytically through the
//! posterior responsibilities of the components; there is no autodiff tape,
//! only the explicit `ForwardCache`.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::matrix::Matrix;
use crate::rng::Rng;

pub const DEFAULT_SIGMA_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => math::relu(z),
            Activation::Tanh => math::tanh(z),
        }
    }

    /// Derivative as a function of the pre-activation.
    #[inline]
    pub fn grad(self, z: f64) -> f64 {
        match self {
            Activation::Relu => math::relu_grad(z),
            Activation::Tanh => math::tanh_grad(z),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
        }
    }
}

impl core::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            other => Err(Error::InvalidArgument {
                op: "Activation::from_str",
                reason: format!("unknown activation `{other}` (expected relu or tanh)"),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MdnConfig {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub activation: Activation,
    pub num_components: usize,
    pub sigma_floor: f64,
}

impl MdnConfig {
    pub fn new(input_dim: usize, hidden_dims: Vec<usize>, num_components: usize) -> Self {
        MdnConfig {
            input_dim,
            hidden_dims,
            activation: Activation::Relu,
            num_components,
            sigma_floor: DEFAULT_SIGMA_FLOOR,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |reason: String| {
            Err(Error::InvalidArgument {
                op: "MdnConfig::validate",
                reason,
            })
        };
        if self.input_dim == 0 {
            return fail("input_dim must be >= 1".into());
        }
        if self.num_components == 0 {
            return fail("num_components must be >= 1".into());
        }
        if self.hidden_dims.iter().any(|&h| h == 0) {
            return fail("hidden dims must all be >= 1".into());
        }
        // < 1 keeps the unit-spread head initialization solvable.
        if !(self.sigma_floor > 0.0 && self.sigma_floor < 1.0) {
            return fail(format!(
                "sigma_floor must be in (0, 1), got {}",
                self.sigma_floor
            ));
        }
        Ok(())
    }
}

/// One affine layer: weight is input_dim x output_dim, bias has output_dim.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn zeros(input_dim: usize, output_dim: usize) -> Self {
        Layer {
            weight: Matrix::zeros(input_dim, output_dim),
            bias: vec![0.0; output_dim],
        }
    }

    fn shape_matches(&self, other: &Layer) -> bool {
        self.weight.shape() == other.weight.shape() && self.bias.len() == other.bias.len()
    }
}

/// All learnable state of the network, plus the two pieces of configuration
/// the forward pass needs on its own (activation kind and sigma floor).
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub activation: Activation,
    pub sigma_floor: f64,
    pub trunk: Vec<Layer>,
    pub head_pi: Layer,
    pub head_mu: Layer,
    pub head_sigma: Layer,
}

/// Loss gradients, one block per parameter block of `NetworkParams`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub trunk: Vec<Layer>,
    pub head_pi: Layer,
    pub head_mu: Layer,
    pub head_sigma: Layer,
}

impl NetworkParams {
    /// All-zero parameters with the shapes implied by `config`.
    pub fn zeros(config: &MdnConfig) -> Result<Self> {
        config.validate()?;
        let mut trunk = Vec::with_capacity(config.hidden_dims.len());
        let mut fan_in = config.input_dim;
        for &h in &config.hidden_dims {
            trunk.push(Layer::zeros(fan_in, h));
            fan_in = h;
        }
        let k = config.num_components;
        Ok(NetworkParams {
            activation: config.activation,
            sigma_floor: config.sigma_floor,
            trunk,
            head_pi: Layer::zeros(fan_in, k),
            head_mu: Layer::zeros(fan_in, k),
            head_sigma: Layer::zeros(fan_in, k),
        })
    }

    pub fn input_dim(&self) -> usize {
        match self.trunk.first() {
            Some(l) => l.weight.rows(),
            None => self.head_mu.weight.rows(),
        }
    }

    pub fn num_components(&self) -> usize {
        self.head_mu.weight.cols()
    }

    pub fn layers(&self) -> impl Iterator<Item = &Layer> {
        self.trunk
            .iter()
            .chain([&self.head_pi, &self.head_mu, &self.head_sigma])
    }

    pub fn layers_mut(&mut self) -> impl Iterator<Item = &mut Layer> {
        self.trunk
            .iter_mut()
            .chain([&mut self.head_pi, &mut self.head_mu, &mut self.head_sigma])
    }

    /// Block names in layer order: trunk[i], head_pi, head_mu, head_sigma.
    pub fn block_names(&self) -> Vec<String> {
        let mut names: Vec<String> = (0..self.trunk.len()).map(|i| format!("trunk[{i}]")).collect();
        names.extend(["head_pi".into(), "head_mu".into(), "head_sigma".into()]);
        names
    }

    pub fn shape_congruent(&self, grads: &Gradients) -> bool {
        self.trunk.len() == grads.trunk.len()
            && self
                .trunk
                .iter()
                .zip(&grads.trunk)
                .all(|(a, b)| a.shape_matches(b))
            && self.head_pi.shape_matches(&grads.head_pi)
            && self.head_mu.shape_matches(&grads.head_mu)
            && self.head_sigma.shape_matches(&grads.head_sigma)
    }

    pub fn param_count(&self) -> usize {
        self.layers()
            .map(|l| l.weight.as_slice().len() + l.bias.len())
            .sum()
    }

    /// All parameters in block order, weights (row-major) before biases.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in self.layers() {
            out.extend_from_slice(l.weight.as_slice());
            out.extend_from_slice(&l.bias);
        }
        out
    }

    /// Inverse of `flatten` for the same shapes.
    pub fn load_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::InvalidArgument {
                op: "NetworkParams::load_flat",
                reason: format!("expected {} values, got {}", self.param_count(), flat.len()),
            });
        }
        let mut at = 0;
        for l in self.layers_mut() {
            let w = l.weight.as_mut_slice();
            w.copy_from_slice(&flat[at..at + w.len()]);
            at += w.len();
            let b_len = l.bias.len();
            l.bias.copy_from_slice(&flat[at..at + b_len]);
            at += b_len;
        }
        Ok(())
    }
}

impl Gradients {
    pub fn zeros_like(params: &NetworkParams) -> Self {
        let zero = |l: &Layer| Layer::zeros(l.weight.rows(), l.weight.cols());
        Gradients {
            trunk: params.trunk.iter().map(zero).collect(),
            head_pi: zero(&params.head_pi),
            head_mu: zero(&params.head_mu),
            head_sigma: zero(&params.head_sigma),
        }
    }

    pub fn layers(&self) -> impl Iterator<Item = &Layer> {
        self.trunk
            .iter()
            .chain([&self.head_pi, &self.head_mu, &self.head_sigma])
    }

    pub fn layers_mut(&mut self) -> impl Iterator<Item = &mut Layer> {
        self.trunk
            .iter_mut()
            .chain([&mut self.head_pi, &mut self.head_mu, &mut self.head_sigma])
    }

    /// Same ordering as `NetworkParams::flatten`.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in self.layers() {
            out.extend_from_slice(l.weight.as_slice());
            out.extend_from_slice(&l.bias);
        }
        out
    }

    /// Name of the first block containing a non-finite entry, if any.
    pub fn find_non_finite(&self, params: &NetworkParams) -> Option<String> {
        for (name, l) in params.block_names().into_iter().zip(self.layers()) {
            if !l.weight.all_finite() {
                return Some(format!("{name}.weight"));
            }
            if l.bias.iter().any(|x| !x.is_finite()) {
                return Some(format!("{name}.bias"));
            }
        }
        None
    }
}

/// Mixture parameters for a batch; each field is n x K.
#[derive(Debug, Clone, PartialEq)]
pub struct MdnOutput {
    pub pi: Matrix,
    pub mu: Matrix,
    pub sigma: Matrix,
}

impl MdnOutput {
    pub fn len(&self) -> usize {
        self.pi.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn num_components(&self) -> usize {
        self.pi.cols()
    }
}

/// Per-layer intermediates retained by `forward` for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    input: Matrix,
    pre_activations: Vec<Matrix>,
    activations: Vec<Matrix>,
    sigma_pre: Matrix,
}

/// He initialization for relu trunks, Xavier for tanh; biases zero except
/// the sigma head, whose bias is set so the initial spread is 1.
pub fn init_params(config: &MdnConfig, rng: &mut Rng) -> Result<NetworkParams> {
    config.validate()?;
    let gain = match config.activation {
        Activation::Relu => 2.0,
        Activation::Tanh => 1.0,
    };
    let mut params = NetworkParams::zeros(config)?;
    for layer in params.layers_mut() {
        let fan_in = layer.weight.rows();
        let std = math::sqrt(gain / fan_in as f64);
        for w in layer.weight.as_mut_slice() {
            *w = std * rng.normal();
        }
    }
    let bias = math::inverse_softplus(1.0 - config.sigma_floor)?;
    for b in &mut params.head_sigma.bias {
        *b = bias;
    }
    Ok(params)
}

/// Run the network on a batch (one sample per row of `x`).
pub fn forward(params: &NetworkParams, x: &Matrix) -> Result<(MdnOutput, ForwardCache)> {
    if x.cols() != params.input_dim() {
        return Err(Error::ShapeMismatch {
            op: "forward",
            left: x.shape(),
            right: (params.input_dim(), params.num_components()),
        });
    }
    let act = params.activation;
    let mut pre_activations = Vec::with_capacity(params.trunk.len());
    let mut activations = Vec::with_capacity(params.trunk.len());
    let mut h = x;
    for layer in &params.trunk {
        let z = h.affine(&layer.weight, &layer.bias)?;
        let a = z.map(|v| act.apply(v));
        pre_activations.push(z);
        activations.push(a);
        h = activations.last().unwrap();
    }
    let feats = h;

    let mut pi = feats.affine(&params.head_pi.weight, &params.head_pi.bias)?;
    for r in 0..pi.rows() {
        math::softmax_in_place(pi.row_mut(r));
    }
    let mu = feats.affine(&params.head_mu.weight, &params.head_mu.bias)?;
    let sigma_pre = feats.affine(&params.head_sigma.weight, &params.head_sigma.bias)?;
    let floor = params.sigma_floor;
    let sigma = sigma_pre.map(|z| math::softplus(z) + floor);

    let out = MdnOutput { pi, mu, sigma };
    let cache = ForwardCache {
        input: x.clone(),
        pre_activations,
        activations,
        sigma_pre,
    };
    Ok((out, cache))
}

fn check_targets(op: &'static str, out: &MdnOutput, y: &[f64]) -> Result<()> {
    if y.len() != out.len() {
        return Err(Error::ShapeMismatch {
            op,
            left: (out.len(), out.num_components()),
            right: (y.len(), 1),
        });
    }
    Ok(())
}

/// Per-sample log p(y | x) under the mixture.
pub fn log_density(out: &MdnOutput, y: &[f64]) -> Result<Vec<f64>> {
    check_targets("log_density", out, y)?;
    let k = out.num_components();
    let mut terms = vec![0.0; k];
    let mut result = Vec::with_capacity(y.len());
    for (r, &yr) in y.iter().enumerate() {
        fill_log_terms(out, r, yr, &mut terms)?;
        result.push(crate::math::log_sum_exp(&terms)?);
    }
    Ok(result)
}

fn fill_log_terms(out: &MdnOutput, r: usize, yr: f64, terms: &mut [f64]) -> Result<()> {
    let pi = out.pi.row(r);
    let mu = out.mu.row(r);
    let sigma = out.sigma.row(r);
    for i in 0..terms.len() {
        if !(sigma[i] > 0.0) {
            return Err(Error::InvalidArgument {
                op: "log_density",
                reason: format!("sigma[{i}] = {} must be positive", sigma[i]),
            });
        }
        terms[i] = math::ln(pi[i]) + math::gaussian_log_pdf_raw(yr, mu[i], sigma[i]);
    }
    Ok(())
}

/// Batch-mean negative log likelihood.
pub fn nll_loss(out: &MdnOutput, y: &[f64]) -> Result<f64> {
    if y.is_empty() {
        return Err(Error::EmptyInput { op: "nll_loss" });
    }
    let ld = log_density(out, y)?;
    Ok(-ld.iter().sum::<f64>() / ld.len() as f64)
}

/// Posterior responsibility of each component for each target, n x K.
pub fn responsibilities(out: &MdnOutput, y: &[f64]) -> Result<Matrix> {
    check_targets("responsibilities", out, y)?;
    let k = out.num_components();
    let mut gamma = Matrix::zeros(y.len(), k);
    let mut terms = vec![0.0; k];
    for (r, &yr) in y.iter().enumerate() {
        fill_log_terms(out, r, yr, &mut terms)?;
        let lnp = crate::math::log_sum_exp(&terms)?;
        for (g, &t) in gamma.row_mut(r).iter_mut().zip(terms.iter()) {
            *g = math::exp(t - lnp);
        }
    }
    Ok(gamma)
}

/// Analytic gradient of `nll_loss` with respect to every parameter.
pub fn backward(
    params: &NetworkParams,
    cache: &ForwardCache,
    out: &MdnOutput,
    y: &[f64],
) -> Result<Gradients> {
    let n = y.len();
    let k = params.num_components();
    if n == 0 {
        return Err(Error::EmptyInput { op: "backward" });
    }
    check_targets("backward", out, y)?;
    if out.len() != cache.input.rows() {
        return Err(Error::MismatchedCache {
            reason: format!(
                "cache holds {} samples but output has {}",
                cache.input.rows(),
                out.len()
            ),
        });
    }
    if cache.input.cols() != params.input_dim()
        || cache.activations.len() != params.trunk.len()
        || out.num_components() != k
        || cache.sigma_pre.shape() != (n, k)
    {
        return Err(Error::MismatchedCache {
            reason: "cache was produced by a different network or batch".into(),
        });
    }
    for (layer, a) in params.trunk.iter().zip(&cache.activations) {
        if a.shape() != (n, layer.weight.cols()) {
            return Err(Error::MismatchedCache {
                reason: "trunk activation shapes do not match the parameters".into(),
            });
        }
    }

    let gamma = responsibilities(out, y)?;
    let inv_n = 1.0 / n as f64;

    // Head-input gradients per sample and component.
    let mut d_pi_logits = Matrix::zeros(n, k);
    let mut d_mu = Matrix::zeros(n, k);
    let mut d_sigma_pre = Matrix::zeros(n, k);
    for r in 0..n {
        let yr = y[r];
        let pi = out.pi.row(r);
        let mu = out.mu.row(r);
        let sigma = out.sigma.row(r);
        let g = gamma.row(r);
        let sp = cache.sigma_pre.row(r);
        for i in 0..k {
            d_pi_logits.set(r, i, (pi[i] - g[i]) * inv_n);
            let z = (yr - mu[i]) / sigma[i];
            d_mu.set(r, i, g[i] * (mu[i] - yr) / (sigma[i] * sigma[i]) * inv_n);
            let d_sigma = g[i] * (1.0 - z * z) / sigma[i] * inv_n;
            d_sigma_pre.set(r, i, d_sigma * math::softplus_prime(sp[i]));
        }
    }

    let feats = match cache.activations.last() {
        Some(a) => a,
        None => &cache.input,
    };
    let feats_t = feats.transpose();
    let head_grad = |d: &Matrix| -> Result<Layer> {
        Ok(Layer {
            weight: feats_t.matmul(d)?,
            bias: d.column_sums(),
        })
    };
    let g_head_pi = head_grad(&d_pi_logits)?;
    let g_head_mu = head_grad(&d_mu)?;
    let g_head_sigma = head_grad(&d_sigma_pre)?;

    // Gradient wrt the shared representation feeding the heads.
    let mut delta = d_pi_logits.matmul(&params.head_pi.weight.transpose())?;
    for (d, term) in [
        (&d_mu, &params.head_mu.weight),
        (&d_sigma_pre, &params.head_sigma.weight),
    ] {
        let extra = d.matmul(&term.transpose())?;
        for (a, b) in delta
            .as_mut_slice()
            .iter_mut()
            .zip(extra.as_slice())
        {
            *a += b;
        }
    }

    // Walk the trunk backwards.
    let act = params.activation;
    let mut trunk_grads: Vec<Layer> = Vec::with_capacity(params.trunk.len());
    for l in (0..params.trunk.len()).rev() {
        let dz = delta.hadamard(&cache.pre_activations[l].map(|z| act.grad(z)))?;
        let below = if l == 0 {
            &cache.input
        } else {
            &cache.activations[l - 1]
        };
        trunk_grads.push(Layer {
            weight: below.transpose().matmul(&dz)?,
            bias: dz.column_sums(),
        });
        if l > 0 {
            delta = dz.matmul(&params.trunk[l].weight.transpose())?;
        }
    }
    trunk_grads.reverse();

    Ok(Gradients {
        trunk: trunk_grads,
        head_pi: g_head_pi,
        head_mu: g_head_mu,
        head_sigma: g_head_sigma,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::HALF_LN_TWO_PI;

    fn cfg(input_dim: usize, hidden: &[usize], k: usize, act: Activation) -> MdnConfig {
        MdnConfig {
            input_dim,
            hidden_dims: hidden.to_vec(),
            activation: act,
            num_components: k,
            sigma_floor: DEFAULT_SIGMA_FLOOR,
        }
    }

    /// Hand-built output with explicit mixture parameters for one sample.
    fn single_row_output(pi: &[f64], mu: &[f64], sigma: &[f64]) -> MdnOutput {
        MdnOutput {
            pi: Matrix::from_vec(1, pi.len(), pi.to_vec()).unwrap(),
            mu: Matrix::from_vec(1, mu.len(), mu.to_vec()).unwrap(),
            sigma: Matrix::from_vec(1, sigma.len(), sigma.to_vec()).unwrap(),
        }
    }

    #[test]
    fn init_is_deterministic() {
        let c = cfg(4, &[8, 8], 3, Activation::Relu);
        let a = init_params(&c, &mut Rng::new(11)).unwrap();
        let b = init_params(&c, &mut Rng::new(11)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn init_without_trunk_wires_heads_to_input() {
        let c = cfg(5, &[], 3, Activation::Relu);
        let p = init_params(&c, &mut Rng::new(1)).unwrap();
        assert!(p.trunk.is_empty());
        assert_eq!(p.head_pi.weight.shape(), (5, 3));
        assert_eq!(p.head_mu.weight.shape(), (5, 3));
        assert_eq!(p.head_sigma.weight.shape(), (5, 3));
    }

    #[test]
    fn he_init_variance_matches_fan_in() {
        // fan_in 100 with relu gain 2 -> variance 2/100 = 0.02.
        let c = cfg(100, &[100], 1, Activation::Relu);
        let p = init_params(&c, &mut Rng::new(123)).unwrap();
        let w = p.trunk[0].weight.as_slice();
        assert_eq!(w.len(), 10_000);
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        let var = w.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / w.len() as f64;
        assert!((var - 0.02).abs() < 0.15 * 0.02, "var = {var}");
    }

    #[test]
    fn sigma_head_bias_gives_unit_initial_spread() {
        let c = cfg(3, &[4], 2, Activation::Tanh);
        let p = init_params(&c, &mut Rng::new(5)).unwrap();
        let sigma0 = math::softplus(p.head_sigma.bias[0]) + c.sigma_floor;
        assert!((sigma0 - 1.0).abs() < 1e-9, "sigma0 = {sigma0}");
    }

    #[test]
    fn zero_network_outputs_uniform_mixture() {
        let c = cfg(3, &[4], 4, Activation::Relu);
        let p = NetworkParams::zeros(&c).unwrap();
        let x = Matrix::from_vec(2, 3, vec![0.5, -1.0, 2.0, 0.0, 0.0, 1.0]).unwrap();
        let (out, _) = forward(&p, &x).unwrap();
        let expect_sigma = math::softplus(0.0) + c.sigma_floor;
        for r in 0..2 {
            for i in 0..4 {
                assert!((out.pi.get(r, i) - 0.25).abs() < 1e-12);
                assert_eq!(out.mu.get(r, i), 0.0);
                assert!((out.sigma.get(r, i) - expect_sigma).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn empty_batch_forward_is_fine() {
        let c = cfg(3, &[4], 2, Activation::Relu);
        let p = NetworkParams::zeros(&c).unwrap();
        let (out, _) = forward(&p, &Matrix::zeros(0, 3)).unwrap();
        assert!(out.is_empty());
        assert_eq!(log_density(&out, &[]).unwrap(), Vec::<f64>::new());
        assert!(nll_loss(&out, &[]).is_err());
    }

    #[test]
    fn forward_rejects_wrong_input_width() {
        let c = cfg(3, &[4], 2, Activation::Relu);
        let p = NetworkParams::zeros(&c).unwrap();
        assert!(matches!(
            forward(&p, &Matrix::zeros(2, 5)),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn perturbing_a_trunk_weight_moves_every_sample() {
        let c = cfg(2, &[6], 2, Activation::Tanh);
        let mut rng = Rng::new(9);
        let p = init_params(&c, &mut rng).unwrap();
        let x = Matrix::from_vec(4, 2, rng.normal_vec(8)).unwrap();
        let (base, _) = forward(&p, &x).unwrap();
        let mut p2 = p.clone();
        let w00 = p2.trunk[0].weight.get(0, 0);
        p2.trunk[0].weight.set(0, 0, w00 + 1e-3);
        let (moved, _) = forward(&p2, &x).unwrap();
        for r in 0..4 {
            assert_ne!(base.mu.row(r), moved.mu.row(r), "row {r} unchanged");
        }
    }

    #[test]
    fn log_density_standard_normal_component() {
        let out = single_row_output(&[1.0], &[0.0], &[1.0]);
        let ld = log_density(&out, &[0.0]).unwrap()[0];
        assert!((ld - (-HALF_LN_TWO_PI)).abs() < 1e-12);
        assert!((math::exp(ld) - 0.398_942_280_401_432_7).abs() < 1e-12);
    }

    #[test]
    fn identical_components_collapse() {
        let out = single_row_output(&[0.5, 0.5], &[0.0, 0.0], &[1.0, 1.0]);
        let ld = log_density(&out, &[0.0]).unwrap()[0];
        assert!((ld - (-HALF_LN_TWO_PI)).abs() < 1e-12);
    }

    #[test]
    fn symmetric_two_component_mixture_at_midpoint() {
        // 0.5 N(-1,1) + 0.5 N(1,1) at y=0: both terms exp(-0.5)/sqrt(2 pi).
        let out = single_row_output(&[0.5, 0.5], &[-1.0, 1.0], &[1.0, 1.0]);
        let ld = log_density(&out, &[0.0]).unwrap()[0];
        assert!((ld - (-0.5 - HALF_LN_TWO_PI)).abs() < 1e-12);
        assert!((ld - (-1.418_938_533_204_672_7)).abs() < 1e-9);
    }

    #[test]
    fn nll_zero_residual_single_component() {
        let out = single_row_output(&[1.0], &[1.3], &[1.0]);
        let loss = nll_loss(&out, &[1.3]).unwrap();
        assert!((loss - HALF_LN_TWO_PI).abs() < 1e-12);
    }

    #[test]
    fn nll_is_mean_so_duplication_is_identity() {
        let pi = Matrix::from_vec(2, 1, vec![1.0, 1.0]).unwrap();
        let mu = Matrix::from_vec(2, 1, vec![0.0, 0.0]).unwrap();
        let sigma = Matrix::from_vec(2, 1, vec![1.0, 1.0]).unwrap();
        let out2 = MdnOutput { pi, mu, sigma };
        let single = single_row_output(&[1.0], &[0.0], &[1.0]);
        let l1 = nll_loss(&single, &[0.7]).unwrap();
        let l2 = nll_loss(&out2, &[0.7, 0.7]).unwrap();
        assert!((l1 - l2).abs() < 1e-15);
    }

    #[test]
    fn nll_composes_from_log_densities() {
        let rows = [
            (vec![1.0], vec![0.0], vec![1.0], 0.0),
            (vec![0.5, 0.5], vec![0.0, 0.0], vec![1.0, 1.0], 0.0),
            (vec![0.5, 0.5], vec![-1.0, 1.0], vec![1.0, 1.0], 0.0),
        ];
        let mut sum = 0.0;
        for (pi, mu, sigma, y) in &rows {
            let out = single_row_output(pi, mu, sigma);
            sum += -log_density(&out, &[*y]).unwrap()[0];
        }
        // Batch them as a K=2 output (first row padded with a dead component).
        let pi = Matrix::from_vec(3, 2, vec![1.0, 0.0, 0.5, 0.5, 0.5, 0.5]).unwrap();
        let mu = Matrix::from_vec(3, 2, vec![0.0, 0.0, 0.0, 0.0, -1.0, 1.0]).unwrap();
        let sigma = Matrix::from_vec(3, 2, vec![1.0, 1.0, 1.0, 1.0, 1.0, 1.0]).unwrap();
        let out = MdnOutput { pi, mu, sigma };
        let loss = nll_loss(&out, &[0.0, 0.0, 0.0]).unwrap();
        assert!((loss - sum / 3.0).abs() < 1e-12);
    }

    #[test]
    fn log_density_handles_vanished_weight() {
        // pi = 0 contributes a -inf term, not a NaN.
        let out = single_row_output(&[0.0, 1.0], &[5.0, 0.0], &[1.0, 1.0]);
        let ld = log_density(&out, &[0.0]).unwrap()[0];
        assert!((ld - (-HALF_LN_TWO_PI)).abs() < 1e-12);
    }

    #[test]
    fn responsibilities_equal_components_are_uniform() {
        let out = single_row_output(&[0.25; 4], &[1.0; 4], &[0.5; 4]);
        let g = responsibilities(&out, &[0.3]).unwrap();
        for i in 0..4 {
            assert!((g.get(0, i) - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn mu_gradient_vanishes_at_zero_residual() {
        let c = cfg(2, &[], 1, Activation::Relu);
        let p = NetworkParams::zeros(&c).unwrap();
        let x = Matrix::from_vec(1, 2, vec![0.4, -0.2]).unwrap();
        let (out, cache) = forward(&p, &x).unwrap();
        // mu = 0 for the zero network, so y = 0 is a zero residual.
        let g = backward(&p, &cache, &out, &[0.0]).unwrap();
        assert!(g.head_mu.weight.as_slice().iter().all(|&v| v == 0.0));
        assert!(g.head_mu.bias.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_rejects_mismatched_cache() {
        let c = cfg(2, &[3], 2, Activation::Tanh);
        let p = init_params(&c, &mut Rng::new(3)).unwrap();
        let x1 = Matrix::from_vec(2, 2, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let x2 = Matrix::from_vec(3, 2, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]).unwrap();
        let (_, cache1) = forward(&p, &x1).unwrap();
        let (out2, _) = forward(&p, &x2).unwrap();
        assert!(matches!(
            backward(&p, &cache1, &out2, &[0.0, 0.0, 0.0]),
            Err(Error::MismatchedCache { .. })
        ));
    }

    /// Central finite differences of the scalar loss over every parameter.
    fn finite_difference_grad(
        params: &NetworkParams,
        x: &Matrix,
        y: &[f64],
        h: f64,
    ) -> Vec<f64> {
        let flat = params.flatten();
        let mut fd = Vec::with_capacity(flat.len());
        let mut probe = params.clone();
        for i in 0..flat.len() {
            let mut plus = flat.clone();
            plus[i] += h;
            probe.load_flat(&plus).unwrap();
            let (out, _) = forward(&probe, x).unwrap();
            let up = nll_loss(&out, y).unwrap();
            let mut minus = flat.clone();
            minus[i] -= h;
            probe.load_flat(&minus).unwrap();
            let (out, _) = forward(&probe, x).unwrap();
            let down = nll_loss(&out, y).unwrap();
            fd.push((up - down) / (2.0 * h));
        }
        fd
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let c = cfg(3, &[5, 4], 2, Activation::Tanh);
        let mut rng = Rng::new(2024);
        let p = init_params(&c, &mut rng).unwrap();
        let x = Matrix::from_vec(4, 3, rng.normal_vec(12)).unwrap();
        let y: Vec<f64> = rng.normal_vec(4);
        let (out, cache) = forward(&p, &x).unwrap();
        let analytic = backward(&p, &cache, &out, &y).unwrap().flatten();
        let fd = finite_difference_grad(&p, &x, &y, 1e-5);
        assert_eq!(analytic.len(), fd.len());
        for (i, (a, f)) in analytic.iter().zip(&fd).enumerate() {
            let rel = (a - f).abs() / a.abs().max(f.abs()).max(1e-7);
            assert!(rel < 1e-4, "param {i}: analytic {a}, fd {f}, rel {rel}");
        }
    }

    #[test]
    fn five_small_steps_decrease_the_loss() {
        let c = cfg(2, &[8], 2, Activation::Tanh);
        let mut rng = Rng::new(77);
        let mut p = init_params(&c, &mut rng).unwrap();
        let x = Matrix::from_vec(16, 2, rng.normal_vec(32)).unwrap();
        let y: Vec<f64> = rng.normal_vec(16);
        let (out, _) = forward(&p, &x).unwrap();
        let initial = nll_loss(&out, &y).unwrap();
        let mut last = initial;
        for _ in 0..5 {
            let (out, cache) = forward(&p, &x).unwrap();
            let g = backward(&p, &cache, &out, &y).unwrap();
            let mut flat = p.flatten();
            for (w, gw) in flat.iter_mut().zip(g.flatten()) {
                *w -= 1e-3 * gw;
            }
            p.load_flat(&flat).unwrap();
            let (out, _) = forward(&p, &x).unwrap();
            let loss = nll_loss(&out, &y).unwrap();
            assert!(loss < last, "loss went {last} -> {loss}");
            last = loss;
        }
        assert!(last < initial);
    }

    #[test]
    fn log_density_invariant_under_component_permutation() {
        let out = single_row_output(&[0.2, 0.5, 0.3], &[-1.0, 0.3, 2.0], &[0.4, 1.0, 2.5]);
        let permuted = single_row_output(&[0.3, 0.2, 0.5], &[2.0, -1.0, 0.3], &[2.5, 0.4, 1.0]);
        for y in [-2.0, 0.0, 0.7, 3.0] {
            let a = log_density(&out, &[y]).unwrap()[0];
            let b = log_density(&permuted, &[y]).unwrap()[0];
            assert!((a - b).abs() < 1e-12);
        }
    }
}
