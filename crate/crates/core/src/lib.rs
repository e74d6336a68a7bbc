//! Preference-ranking engine: an uncertainty-aware pairwise reward head over
//! precomputed embeddings, the corpus construction pipeline that feeds it,
//! rank-agreement evaluation, and two-stage generator/sample selection.
//!
//! Module map:
//! - [`domain`]: samples, preference records, vote agreement and winners.
//! - [`rng`]: seeded, splittable ChaCha streams.
//! - [`io`]: `PRNK` embedding matrices, `PRNH` checkpoints and JSONL corpora.
//! - [`reward`]: the (μ, σ) head, preference probabilities, losses, gradients.
//! - [`train`]: mini-batch training with warm-up.
//! - [`datapipe`]: agreement filtering, aesthetic selection, category alignment, pairing.
//! - [`eval`]: score tables, Spearman / Kendall tau-b / normalized MSE.
//! - [`cohp`]: model-wise then sample-wise best-of selection against generators.
//! - [`synth`]: synthetic corpora with a known utility direction.
//! - [`cli`]: the `prefrank` command line.

pub mod cli;
pub mod cohp;
pub mod datapipe;
pub mod domain;
pub mod error;
pub mod eval;
pub mod io;
pub mod math;
pub mod reference;
pub mod reward;
pub mod rng;
pub mod selftest;
pub mod synth;
pub mod train;

pub use domain::{
    agreement, winner, Category, EmbeddingVector, PreferenceRecord, Prompt, Sample, Side,
};
pub use error::{Error, Result};
pub use reward::{QuadratureRule, RewardHead, ScoreDistribution};
pub use rng::Rng;
