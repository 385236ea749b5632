//! First-order optimizers sharing one step interface over the parameter
//! tree: SGD with momentum, RMSProp, Adam, AdamW, and AdaBelief.
//!
//! All five use the standard published update rules. AdaBelief adds epsilon
//! inside the second-moment accumulator, not only in the denominator; the
//! published variants differ on this point, so it is spelled out here.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::model::{Gradients, NetworkParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OptimizerKind {
    Sgd,
    RmsProp,
    Adam,
    AdamW,
    AdaBelief,
}

impl OptimizerKind {
    pub const ALL: [OptimizerKind; 5] = [
        OptimizerKind::Sgd,
        OptimizerKind::RmsProp,
        OptimizerKind::Adam,
        OptimizerKind::AdamW,
        OptimizerKind::AdaBelief,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::RmsProp => "rmsprop",
            OptimizerKind::Adam => "adam",
            OptimizerKind::AdamW => "adamw",
            OptimizerKind::AdaBelief => "adabelief",
        }
    }
}

impl core::str::FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        OptimizerKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument {
                op: "OptimizerKind::from_str",
                reason: format!(
                    "unknown optimizer `{s}` (valid: sgd, rmsprop, adam, adamw, adabelief)"
                ),
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerSpec {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    /// SGD momentum coefficient.
    pub momentum: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Decoupled weight decay (AdamW only).
    pub weight_decay: f64,
}

impl OptimizerSpec {
    /// Standard defaults: lr 1e-3 (sgd 1e-2), momentum 0.9, beta1 0.9,
    /// beta2 0.999, epsilon 1e-8, weight_decay 1e-2.
    pub fn default_for(kind: OptimizerKind) -> Self {
        OptimizerSpec {
            kind,
            learning_rate: match kind {
                OptimizerKind::Sgd => 1e-2,
                _ => 1e-3,
            },
            momentum: 0.9,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 1e-2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |reason: String| {
            Err(Error::InvalidArgument {
                op: "OptimizerSpec::validate",
                reason,
            })
        };
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return fail(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return fail(format!("momentum must be in [0,1), got {}", self.momentum));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return fail(format!(
                "beta1/beta2 must be in [0,1), got {}/{}",
                self.beta1, self.beta2
            ));
        }
        if !(self.epsilon > 0.0) {
            return fail(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if self.weight_decay < 0.0 {
            return fail(format!("weight_decay must be >= 0, got {}", self.weight_decay));
        }
        Ok(())
    }
}

/// Per-parameter moment buffers; allocated lazily on the first step.
#[derive(Debug, Clone, Default)]
pub struct OptimizerState {
    pub step_count: u64,
    pub first_moment: Option<Gradients>,
    pub second_moment: Option<Gradients>,
}

impl OptimizerState {
    pub fn new() -> Self {
        OptimizerState::default()
    }

    /// Zero the moments and the step counter; the next step behaves as a
    /// first step.
    pub fn reset(&mut self) {
        self.step_count = 0;
        self.first_moment = None;
        self.second_moment = None;
    }
}

fn needs_first_moment(kind: OptimizerKind) -> bool {
    !matches!(kind, OptimizerKind::RmsProp)
}

fn needs_second_moment(kind: OptimizerKind) -> bool {
    !matches!(kind, OptimizerKind::Sgd)
}

/// Apply one optimizer step in place.
pub fn step(
    spec: &OptimizerSpec,
    state: &mut OptimizerState,
    params: &mut NetworkParams,
    grads: &Gradients,
) -> Result<()> {
    spec.validate()?;
    if !params.shape_congruent(grads) {
        return Err(Error::InvalidArgument {
            op: "optim::step",
            reason: "gradient tree is not shape-congruent with the parameters".into(),
        });
    }
    if let Some(block) = grads.find_non_finite(params) {
        return Err(Error::NonFinite {
            op: "optim::step",
            what: format!("gradient in block {block}"),
        });
    }
    if needs_first_moment(spec.kind) && state.first_moment.is_none() {
        state.first_moment = Some(Gradients::zeros_like(params));
    }
    if needs_second_moment(spec.kind) && state.second_moment.is_none() {
        state.second_moment = Some(Gradients::zeros_like(params));
    }
    state.step_count += 1;
    let t = state.step_count;

    let lr = spec.learning_rate;
    let eps = spec.epsilon;
    let bc1 = 1.0 - math::powi(spec.beta1, t);
    let bc2 = 1.0 - math::powi(spec.beta2, t);

    let mut p_bufs = layer_slices_mut(params.layers_mut());
    let g_bufs = layer_slices(grads.layers());
    match spec.kind {
        OptimizerKind::Sgd => {
            let m = state.first_moment.as_mut().unwrap();
            let mut m_bufs = layer_slices_mut(m.layers_mut());
            for ((p, g), v) in p_bufs.iter_mut().zip(&g_bufs).zip(m_bufs.iter_mut()) {
                for i in 0..p.len() {
                    v[i] = spec.momentum * v[i] + g[i];
                    p[i] -= lr * v[i];
                }
            }
        }
        OptimizerKind::RmsProp => {
            let s = state.second_moment.as_mut().unwrap();
            let mut s_bufs = layer_slices_mut(s.layers_mut());
            for ((p, g), s) in p_bufs.iter_mut().zip(&g_bufs).zip(s_bufs.iter_mut()) {
                for i in 0..p.len() {
                    s[i] = spec.beta2 * s[i] + (1.0 - spec.beta2) * g[i] * g[i];
                    p[i] -= lr * g[i] / (math::sqrt(s[i]) + eps);
                }
            }
        }
        OptimizerKind::Adam | OptimizerKind::AdamW => {
            let decay = if spec.kind == OptimizerKind::AdamW {
                spec.weight_decay
            } else {
                0.0
            };
            let (m, v) = first_and_second(state);
            let mut m_bufs = layer_slices_mut(m.layers_mut());
            let mut v_bufs = layer_slices_mut(v.layers_mut());
            for (((p, g), m), v) in p_bufs
                .iter_mut()
                .zip(&g_bufs)
                .zip(m_bufs.iter_mut())
                .zip(v_bufs.iter_mut())
            {
                for i in 0..p.len() {
                    m[i] = spec.beta1 * m[i] + (1.0 - spec.beta1) * g[i];
                    v[i] = spec.beta2 * v[i] + (1.0 - spec.beta2) * g[i] * g[i];
                    let m_hat = m[i] / bc1;
                    let v_hat = v[i] / bc2;
                    // Decoupled decay: applied to the parameter itself, not
                    // folded into the gradient.
                    p[i] -= lr * (m_hat / (math::sqrt(v_hat) + eps) + decay * p[i]);
                }
            }
        }
        OptimizerKind::AdaBelief => {
            let (m, s) = first_and_second(state);
            let mut m_bufs = layer_slices_mut(m.layers_mut());
            let mut s_bufs = layer_slices_mut(s.layers_mut());
            for (((p, g), m), s) in p_bufs
                .iter_mut()
                .zip(&g_bufs)
                .zip(m_bufs.iter_mut())
                .zip(s_bufs.iter_mut())
            {
                for i in 0..p.len() {
                    m[i] = spec.beta1 * m[i] + (1.0 - spec.beta1) * g[i];
                    let belief = g[i] - m[i];
                    // Epsilon joins the accumulator here, matching the
                    // original formulation.
                    s[i] = spec.beta2 * s[i] + (1.0 - spec.beta2) * belief * belief + eps;
                    let m_hat = m[i] / bc1;
                    let s_hat = s[i] / bc2;
                    p[i] -= lr * m_hat / (math::sqrt(s_hat) + eps);
                }
            }
        }
    }
    Ok(())
}

fn first_and_second(state: &mut OptimizerState) -> (&mut Gradients, &mut Gradients) {
    let OptimizerState {
        first_moment,
        second_moment,
        ..
    } = state;
    (
        first_moment.as_mut().unwrap(),
        second_moment.as_mut().unwrap(),
    )
}

fn layer_slices<'a>(layers: impl Iterator<Item = &'a crate::model::Layer>) -> Vec<&'a [f64]> {
    let mut bufs = Vec::new();
    for l in layers {
        bufs.push(l.weight.as_slice());
        bufs.push(l.bias.as_slice());
    }
    bufs
}

fn layer_slices_mut<'a>(
    layers: impl Iterator<Item = &'a mut crate::model::Layer>,
) -> Vec<&'a mut [f64]> {
    let mut bufs = Vec::new();
    for l in layers {
        let crate::model::Layer { weight, bias } = l;
        bufs.push(weight.as_mut_slice());
        bufs.push(bias.as_mut_slice());
    }
    bufs
}
