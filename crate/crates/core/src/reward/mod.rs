//! Uncertainty-aware reward model.
//!
//! A [`RewardHead`] maps an embedding to a Gaussian score `N(mu, sigma)`.
//! The preference probability integrates the logistic of the score
//! difference over both Gaussians; training minimizes its negative log.

mod head;
mod loss;
mod preference;
pub mod quadrature;

pub use head::{RewardHead, ScoreDistribution, DEFAULT_SIGMA_FLOOR};
pub(crate) use head::param_count;
pub use loss::{
    bradley_terry_loss, grad_pair_loss, grad_pair_loss_deterministic, grad_pair_loss_kind,
    kl_form_loss, pair_loss, pair_loss_deterministic, pair_loss_kind, LossKind, PairGradient,
};
pub use preference::{
    log_win_probability, preference_prob_deterministic, preference_prob_probit_approx,
    preference_prob_uncertain, spread, win_probability, LogPreference,
};
pub use quadrature::QuadratureRule;
