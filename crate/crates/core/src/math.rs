//! Scalar special functions shared by the head, the preference probabilities
//! and the quadrature setup. Everything here is written to stay finite over
//! the full `f64` range of its argument.

use std::f64::consts::SQRT_2;

use libm::erfc;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Logistic function, evaluated on the branch that cannot overflow.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)`.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `ln sigmoid(x) = -softplus(-x)`.
pub fn log_sigmoid(x: f64) -> f64 {
    -softplus(-x)
}

pub fn norm_pdf(z: f64) -> f64 {
    (-0.5 * z * z - LN_SQRT_2PI).exp()
}

pub fn log_norm_pdf(z: f64) -> f64 {
    -0.5 * z * z - LN_SQRT_2PI
}

/// Standard normal CDF.
pub fn norm_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / SQRT_2)
}

/// `ln Φ(z)`, accurate deep into the lower tail where `Φ` underflows.
pub fn log_norm_cdf(z: f64) -> f64 {
    if z > 0.0 {
        (-0.5 * erfc(z / SQRT_2)).ln_1p()
    } else if z > -35.0 {
        (0.5 * erfc(-z / SQRT_2)).ln()
    } else {
        // Mills-ratio asymptotic series; truncation error < 1e-12 relative here.
        let r = 1.0 / (z * z);
        let series = 1.0 - r + 3.0 * r * r - 15.0 * r * r * r + 105.0 * r * r * r * r;
        log_norm_pdf(z) - (-z).ln() + series.ln()
    }
}

/// Inverse Mills ratio `φ(z) / Φ(z)`.
pub fn inverse_mills(z: f64) -> f64 {
    (log_norm_pdf(z) - log_norm_cdf(z)).exp()
}

/// Exact GELU, `x Φ(x)`.
pub fn gelu(x: f64) -> f64 {
    x * norm_cdf(x)
}

pub fn gelu_derivative(x: f64) -> f64 {
    norm_cdf(x) + x * norm_pdf(x)
}

/// `ln Σ exp(xᵢ)`; returns `-inf` for an empty or all `-inf` input.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}
