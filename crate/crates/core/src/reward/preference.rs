use std::f64::consts::PI;

use super::head::ScoreDistribution;
use super::quadrature::QuadratureRule;
use crate::math::{inverse_mills, log_norm_cdf, log_sum_exp, norm_cdf, sigmoid};

/// `P(x₁ ≻ x₂) = sigmoid(r₁ - r₂)`.
pub fn preference_prob_deterministic(r1: f64, r2: f64) -> f64 {
    sigmoid(r1 - r2)
}

/// Spread of the score difference, `√(σ₁² + σ₂²)`.
pub fn spread(d1: &ScoreDistribution, d2: &ScoreDistribution) -> f64 {
    d1.sigma.hypot(d2.sigma)
}

/// `P(x₁ ≻ x₂) = ∬ sigmoid(r₁ - r₂) N(r₁ | μ₁, σ₁) N(r₂ | μ₂, σ₂) dr₁ dr₂`.
///
/// The difference of two independent Gaussians is `N(μ₁ - μ₂, σ₁² + σ₂²)`,
/// which turns the double integral into `E[sigmoid(Δμ + sZ)]`; see
/// [`super::quadrature`] for how that expectation is evaluated.
pub fn preference_prob_uncertain(
    d1: &ScoreDistribution,
    d2: &ScoreDistribution,
    rule: &QuadratureRule,
) -> f64 {
    win_probability(d1.mu - d2.mu, spread(d1, d2), rule)
}

/// `E[sigmoid(delta + spread · Z)]`, evaluated on the Kolmogorov scale
/// mixture described in [`super::quadrature`].
pub fn win_probability(delta: f64, spread: f64, rule: &QuadratureRule) -> f64 {
    let s2 = spread * spread;
    rule.mixture_weights()
        .iter()
        .zip(rule.mixture_variances())
        .map(|(&w, &c)| w * norm_cdf(delta / (s2 + c).sqrt()))
        .sum()
}

/// Probit-style closed form `sigmoid(Δμ / √(1 + π s² / 8))`. Cheap and
/// usually within a percent; never used as a reference value.
pub fn preference_prob_probit_approx(d1: &ScoreDistribution, d2: &ScoreDistribution) -> f64 {
    let s = spread(d1, d2);
    sigmoid((d1.mu - d2.mu) / (1.0 + PI * s * s / 8.0).sqrt())
}

/// `ln P` with its partial derivatives in `delta` and `spread`.
#[derive(Debug, Clone, Copy)]
pub struct LogPreference {
    pub log_p: f64,
    pub d_delta: f64,
    pub d_spread: f64,
}

/// Log-space evaluation of [`win_probability`] for the loss and its gradient.
/// Per-node terms are combined with log-sum-exp so `ln P` stays finite when
/// `P` underflows; the derivatives are posterior-weighted sums over nodes.
pub fn log_win_probability(delta: f64, spread: f64, rule: &QuadratureRule) -> LogPreference {
    let n = rule.order();
    let mut terms = Vec::with_capacity(n);
    let mut fd = Vec::with_capacity(n);
    let mut fs = Vec::with_capacity(n);
    let s2 = spread * spread;
    for (&w, &c) in rule.mixture_weights().iter().zip(rule.mixture_variances()) {
        let v = s2 + c;
        let root = v.sqrt();
        let z = delta / root;
        // d ln Φ(z) = λ(z) dz, with dz/dΔ = 1/√v and dz/ds = -Δ s / v^{3/2}
        let mills = inverse_mills(z);
        terms.push(w.ln() + log_norm_cdf(z));
        fd.push(mills / root);
        fs.push(-mills * delta * spread / (v * root));
    }
    let log_p = log_sum_exp(&terms);
    let (mut d_delta, mut d_spread) = (0.0, 0.0);
    for i in 0..terms.len() {
        let post = (terms[i] - log_p).exp();
        d_delta += post * fd[i];
        d_spread += post * fs[i];
    }
    LogPreference {
        log_p,
        d_delta,
        d_spread,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dist(mu: f64, sigma: f64) -> ScoreDistribution {
        ScoreDistribution::new(mu, sigma).unwrap()
    }

    #[test]
    fn deterministic_examples() {
        assert_eq!(preference_prob_deterministic(0.0, 0.0), 0.5);
        // sigmoid(3) = 0.95257412682243321912... (50-digit reference)
        assert!((preference_prob_deterministic(3.0, 0.0) - 0.952_574_126_822_433_2).abs() < 1e-15);
        let tiny = preference_prob_deterministic(-50.0, 50.0);
        assert!(tiny > 0.0 && tiny < 1e-40);
    }

    #[test]
    fn equal_means_give_one_half() {
        let rule = QuadratureRule::default();
        for s in [1e-4, 0.3, 1.0, 2.5, 7.0] {
            let p = preference_prob_uncertain(&dist(1.7, s), &dist(1.7, s), &rule);
            assert!((p - 0.5).abs() < 1e-14, "s={s} p={p}");
        }
    }

    #[test]
    fn zero_variance_limit_is_the_sigmoid() {
        let rule = QuadratureRule::default();
        let p = preference_prob_uncertain(&dist(3.0, 1e-4), &dist(0.0, 1e-4), &rule);
        assert!((p - 0.952_574_126_822_433_2).abs() < 1e-6);
    }

    #[test]
    fn log_form_matches_direct_sum() {
        let rule = QuadratureRule::default();
        for &(d, s) in &[(0.0, 0.1), (1.0, 0.7), (-2.0, 1.0), (3.5, 2.2), (-0.4, 4.9)] {
            let lp = log_win_probability(d, s, &rule);
            assert!((lp.log_p.exp() - win_probability(d, s, &rule)).abs() < 1e-14);
        }
        let far = log_win_probability(-60.0, 0.5, &rule);
        assert!(far.log_p.is_finite() && far.log_p < -55.0);
        let far = log_win_probability(-60.0, 3.0, &rule);
        assert!(far.log_p.is_finite());
    }

    #[test]
    fn probit_approximation_is_close() {
        let p = preference_prob_probit_approx(&dist(1.0, 1.0), &dist(0.0, 1.0));
        let rule = QuadratureRule::default();
        let q = preference_prob_uncertain(&dist(1.0, 1.0), &dist(0.0, 1.0), &rule);
        assert!((p - q).abs() < 0.01);
    }
}
