//! Numerically stable scalar/vector primitives: log-domain Gaussian math,
//! softmax, softplus, and the elementwise activations used by the trunk.
//!
//! Transcendentals are routed through `libm` so that results do not depend
//! on the platform's libm or on whether the crate is built with `std`.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// 0.5 * ln(2 * pi)
pub const HALF_LN_TWO_PI: f64 = 0.918_938_533_204_672_7;

#[inline]
pub(crate) fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub(crate) fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub(crate) fn ln_1p(x: f64) -> f64 {
    libm::log1p(x)
}

#[inline]
pub(crate) fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub(crate) fn cos(x: f64) -> f64 {
    libm::cos(x)
}

#[inline]
pub(crate) fn sin(x: f64) -> f64 {
    libm::sin(x)
}

#[inline]
pub(crate) fn tanh_raw(x: f64) -> f64 {
    libm::tanh(x)
}

#[inline]
pub(crate) fn round(x: f64) -> f64 {
    libm::round(x)
}

#[inline]
pub(crate) fn ceil(x: f64) -> f64 {
    libm::ceil(x)
}

#[inline]
pub(crate) fn powi(x: f64, n: u64) -> f64 {
    libm::pow(x, n as f64)
}

/// log(sum_i exp(v_i)), computed with a max shift so that no intermediate
/// overflows. Entries may be -inf (vanished terms); at least one entry must
/// be finite.
pub fn log_sum_exp(v: &[f64]) -> Result<f64> {
    if v.is_empty() {
        return Err(Error::EmptyInput { op: "log_sum_exp" });
    }
    let mut max = f64::NEG_INFINITY;
    for &x in v {
        if x.is_nan() || x == f64::INFINITY {
            return Err(Error::NonFinite {
                op: "log_sum_exp",
                what: format!("entry {x}"),
            });
        }
        if x > max {
            max = x;
        }
    }
    if max == f64::NEG_INFINITY {
        return Err(Error::DegenerateMixture);
    }
    Ok(lse_shifted(v, max))
}

/// Shift-and-sum step of `log_sum_exp`; `max` must be the finite maximum of `v`.
#[inline]
pub(crate) fn lse_shifted(v: &[f64], max: f64) -> f64 {
    let mut sum = 0.0;
    for &x in v {
        sum += exp(x - max);
    }
    max + ln(sum)
}

/// Log density of a univariate Gaussian at `y`.
pub fn gaussian_log_pdf(y: f64, mu: f64, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidArgument {
            op: "gaussian_log_pdf",
            reason: format!("sigma must be positive and finite, got {sigma}"),
        });
    }
    if !y.is_finite() || !mu.is_finite() {
        return Err(Error::NonFinite {
            op: "gaussian_log_pdf",
            what: format!("y={y}, mu={mu}"),
        });
    }
    Ok(gaussian_log_pdf_raw(y, mu, sigma))
}

/// Unchecked variant for hot paths where `sigma > 0` is guaranteed.
#[inline]
pub(crate) fn gaussian_log_pdf_raw(y: f64, mu: f64, sigma: f64) -> f64 {
    let z = (y - mu) / sigma;
    -HALF_LN_TWO_PI - ln(sigma) - 0.5 * z * z
}

/// Max-shifted softmax. Output sums to 1 and preserves the argmax.
pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(Error::EmptyInput { op: "softmax" });
    }
    if let Some(&bad) = logits.iter().find(|x| !x.is_finite()) {
        return Err(Error::NonFinite {
            op: "softmax",
            what: format!("logit {bad}"),
        });
    }
    let mut out = logits.to_vec();
    softmax_in_place(&mut out);
    Ok(out)
}

/// In-place softmax over one row of finite logits.
pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let mut max = f64::NEG_INFINITY;
    for &x in row.iter() {
        if x > max {
            max = x;
        }
    }
    let mut sum = 0.0;
    for x in row.iter_mut() {
        *x = exp(*x - max);
        sum += *x;
    }
    for x in row.iter_mut() {
        *x /= sum;
    }
}

/// ln(1 + e^z) via the overflow-free branch max(z, 0) + ln(1 + e^-|z|).
///
/// Total on the extended reals: softplus(-inf) = 0, softplus(+inf) = +inf.
/// For z below roughly -745 the true value underflows f64 and 0.0 is
/// returned; the model guards positivity separately with its sigma floor.
#[inline]
pub fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + ln_1p(exp(-z))
    } else {
        ln_1p(exp(z))
    }
}

/// d/dz softplus(z) = logistic sigmoid, evaluated without overflow.
#[inline]
pub fn softplus_prime(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + exp(-z))
    } else {
        let e = exp(z);
        e / (1.0 + e)
    }
}

/// Inverse of `softplus` on (0, inf): ln(e^y - 1) = y + ln(1 - e^-y).
pub fn inverse_softplus(y: f64) -> Result<f64> {
    if !(y > 0.0) || !y.is_finite() {
        return Err(Error::InvalidArgument {
            op: "inverse_softplus",
            reason: format!("argument must be positive and finite, got {y}"),
        });
    }
    Ok(y + ln_1p(-exp(-y)))
}

#[inline]
pub fn relu(z: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        0.0
    }
}

/// Subgradient of relu; the value at exactly 0 is fixed to 0.
#[inline]
pub fn relu_grad(z: f64) -> f64 {
    if z > 0.0 {
        1.0
    } else {
        0.0
    }
}

#[inline]
pub fn tanh(z: f64) -> f64 {
    tanh_raw(z)
}

#[inline]
pub fn tanh_grad(z: f64) -> f64 {
    let t = tanh_raw(z);
    1.0 - t * t
}
