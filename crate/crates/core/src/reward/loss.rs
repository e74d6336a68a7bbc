use serde::{Deserialize, Serialize};

use super::head::RewardHead;
use super::preference::log_win_probability;
use super::quadrature::QuadratureRule;
use crate::domain::{EmbeddingVector, Side};
use crate::error::Result;
use crate::math::{log_sum_exp, sigmoid, softplus};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    #[default]
    Uncertain,
    Deterministic,
}

/// Softmax/KL form: `Σᵢ yᵢ (ln yᵢ - ln ŷᵢ)` with `y = [1, 0]` for
/// `(r_h, r_l)` and `ŷ = softmax(r)`; `0 ln 0` is taken as 0.
pub fn kl_form_loss(r_h: f64, r_l: f64) -> f64 {
    let scores = [r_h, r_l];
    let target = [1.0f64, 0.0];
    let log_norm = log_sum_exp(&scores);
    target
        .iter()
        .zip(scores)
        .filter(|(&y, _)| y > 0.0)
        .map(|(&y, r)| y * (y.ln() - (r - log_norm)))
        .sum()
}

/// Bradley-Terry form: `-ln sigmoid(r_h - r_l) = ln(1 + e^{r_l - r_h})`.
pub fn bradley_terry_loss(r_h: f64, r_l: f64) -> f64 {
    softplus(r_l - r_h)
}

fn ordered<'a>(
    a: &'a EmbeddingVector,
    b: &'a EmbeddingVector,
    winner: Side,
) -> (&'a EmbeddingVector, &'a EmbeddingVector) {
    match winner {
        Side::A => (a, b),
        Side::B => (b, a),
    }
}

/// `-ln P(x_h ≻ x_l)` under the uncertainty-aware model.
pub fn pair_loss(
    head: &RewardHead,
    a: &EmbeddingVector,
    b: &EmbeddingVector,
    winner: Side,
    rule: &QuadratureRule,
) -> Result<f64> {
    let (h, l) = ordered(a, b, winner);
    let (dh, dl) = (head.forward(h)?, head.forward(l)?);
    Ok(-log_win_probability(dh.mu - dl.mu, dh.sigma.hypot(dl.sigma), rule).log_p)
}

/// Logistic ranking loss on `mu` alone; `sigma` is ignored.
pub fn pair_loss_deterministic(
    head: &RewardHead,
    a: &EmbeddingVector,
    b: &EmbeddingVector,
    winner: Side,
) -> Result<f64> {
    let (h, l) = ordered(a, b, winner);
    Ok(bradley_terry_loss(head.score(h)?, head.score(l)?))
}

/// Loss together with its gradient over the head's flat parameter vector.
#[derive(Debug, Clone)]
pub struct PairGradient {
    pub loss: f64,
    pub grad: Vec<f64>,
}

pub fn grad_pair_loss(
    head: &RewardHead,
    a: &EmbeddingVector,
    b: &EmbeddingVector,
    winner: Side,
    rule: &QuadratureRule,
) -> Result<PairGradient> {
    let (h, l) = ordered(a, b, winner);
    let (ah, al) = (head.forward_cached(h)?, head.forward_cached(l)?);
    let (sh, sl) = (ah.score.sigma, al.score.sigma);
    let s = sh.hypot(sl);
    let lp = log_win_probability(ah.score.mu - al.score.mu, s, rule);
    let mut grad = vec![0.0; head.num_params()];
    head.backward(&ah, -lp.d_delta, -lp.d_spread * sh / s, &mut grad);
    head.backward(&al, lp.d_delta, -lp.d_spread * sl / s, &mut grad);
    Ok(PairGradient {
        loss: -lp.log_p,
        grad,
    })
}

pub fn grad_pair_loss_deterministic(
    head: &RewardHead,
    a: &EmbeddingVector,
    b: &EmbeddingVector,
    winner: Side,
) -> Result<PairGradient> {
    let (h, l) = ordered(a, b, winner);
    let (ah, al) = (head.forward_cached(h)?, head.forward_cached(l)?);
    let diff = al.score.mu - ah.score.mu;
    // d softplus(r_l - r_h) / d r_l = sigmoid(r_l - r_h)
    let slope = sigmoid(diff);
    let mut grad = vec![0.0; head.num_params()];
    head.backward(&ah, -slope, 0.0, &mut grad);
    head.backward(&al, slope, 0.0, &mut grad);
    Ok(PairGradient {
        loss: softplus(diff),
        grad,
    })
}

pub fn pair_loss_kind(
    kind: LossKind,
    head: &RewardHead,
    a: &EmbeddingVector,
    b: &EmbeddingVector,
    winner: Side,
    rule: &QuadratureRule,
) -> Result<f64> {
    match kind {
        LossKind::Uncertain => pair_loss(head, a, b, winner, rule),
        LossKind::Deterministic => pair_loss_deterministic(head, a, b, winner),
    }
}

pub fn grad_pair_loss_kind(
    kind: LossKind,
    head: &RewardHead,
    a: &EmbeddingVector,
    b: &EmbeddingVector,
    winner: Side,
    rule: &QuadratureRule,
) -> Result<PairGradient> {
    match kind {
        LossKind::Uncertain => grad_pair_loss(head, a, b, winner, rule),
        LossKind::Deterministic => grad_pair_loss_deterministic(head, a, b, winner),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn emb(v: &[f32]) -> EmbeddingVector {
        EmbeddingVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn loss_forms_agree() {
        assert!((kl_form_loss(1.3, 0.4) - bradley_terry_loss(1.3, 0.4)).abs() < 1e-12);
        assert!((bradley_terry_loss(0.7, 0.7) - 2f64.ln()).abs() < 1e-15);
        // ln(1 + e^-10) = 4.5398899216870535e-5
        assert!((bradley_terry_loss(10.0, 0.0) - 4.539_889_921_686_464e-5).abs() < 1e-15);
    }

    #[test]
    fn symmetric_pair_costs_ln2() {
        let mut rng = Rng::new(5);
        let head = RewardHead::init(&[3, 4, 2], 1e-4, &mut rng).unwrap();
        let x = emb(&[0.2, -0.1, 0.9]);
        let rule = QuadratureRule::default();
        let l = pair_loss(&head, &x, &x, Side::A, &rule).unwrap();
        assert!((l - 2f64.ln()).abs() < 1e-12);
        let l = pair_loss_deterministic(&head, &x, &x, Side::B).unwrap();
        assert!((l - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn deterministic_limit_of_uncertain_loss() {
        // mu row picks the first coordinate; sigma pinned at the floor by a
        // large negative sigma bias.
        let mut head = RewardHead::linear_probe(&[1.0, 0.0], 1e-4).unwrap();
        let p = head.params_mut();
        p[5] = -60.0;
        let rule = QuadratureRule::default();
        let l = pair_loss(&head, &emb(&[2.0, 0.0]), &emb(&[0.0, 0.0]), Side::A, &rule).unwrap();
        // ln(1 + e^-2) = 0.12692801104297263
        assert!((l - 0.126_928_011_042_972_6).abs() < 1e-6, "{l}");
    }

    #[test]
    fn relabeling_symmetry() {
        let mut rng = Rng::new(8);
        let head = RewardHead::init(&[2, 3, 2], 1e-4, &mut rng).unwrap();
        let (a, b) = (emb(&[0.5, 1.0]), emb(&[-0.3, 0.2]));
        let rule = QuadratureRule::default();
        let l1 = pair_loss(&head, &a, &b, Side::A, &rule).unwrap();
        let l2 = pair_loss(&head, &b, &a, Side::B, &rule).unwrap();
        assert_eq!(l1, l2);
    }

    #[test]
    fn dimension_mismatch_propagates() {
        let head = RewardHead::zeros(&[3, 2], 1e-4).unwrap();
        let rule = QuadratureRule::default();
        assert!(pair_loss(&head, &emb(&[1.0]), &emb(&[1.0]), Side::A, &rule).is_err());
        assert!(grad_pair_loss(&head, &emb(&[1.0]), &emb(&[1.0]), Side::A, &rule).is_err());
    }
}
