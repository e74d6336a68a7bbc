//! Mini-batch training of a [`RewardHead`] on winner-ordered pairs.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{winner, EmbeddingVector, PreferenceRecord, Sample, Side};
use crate::error::{Error, Result};
use crate::reward::{grad_pair_loss_kind, LossKind, QuadratureRule, RewardHead};
use crate::rng::Rng;

/// One training example with the preferred side resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPair {
    pub pair_id: String,
    pub a: EmbeddingVector,
    pub b: EmbeddingVector,
    pub winner: Side,
    pub repeat: u32,
}

/// Records turned into training pairs, plus the ids left out as ties.
#[derive(Debug, Clone, Default)]
pub struct PairSet {
    pub pairs: Vec<TrainingPair>,
    pub excluded_ties: Vec<String>,
}

/// Joins records with sample embeddings. Tied records are excluded and
/// listed; unknown sample ids and unvoted records are errors.
pub fn pairs_from_records(samples: &[Sample], records: &[PreferenceRecord]) -> Result<PairSet> {
    let by_id: HashMap<&str, &Sample> = samples.iter().map(|s| (s.sample_id.as_str(), s)).collect();
    let lookup = |id: &str| {
        by_id
            .get(id)
            .copied()
            .ok_or_else(|| Error::InvalidArgument(format!("unknown sample_id {id:?}")))
    };
    let mut set = PairSet::default();
    for r in records {
        let side = match winner(r) {
            Ok(side) => side,
            Err(Error::TiedPair { .. }) => {
                set.excluded_ties.push(r.pair_id.clone());
                continue;
            }
            Err(e) => return Err(e),
        };
        set.pairs.push(TrainingPair {
            pair_id: r.pair_id.clone(),
            a: lookup(&r.sample_a)?.embedding.clone(),
            b: lookup(&r.sample_b)?.embedding.clone(),
            winner: side,
            repeat: r.repeat,
        });
    }
    Ok(set)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Optimizer {
    Sgd,
    Adam {
        #[serde(default = "default_beta1")]
        beta1: f64,
        #[serde(default = "default_beta2")]
        beta2: f64,
        #[serde(default = "default_eps")]
        eps: f64,
    },
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::Adam {
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_eps(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub warmup_ratio: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub loss_kind: LossKind,
    pub optimizer: Optimizer,
    pub quadrature_order: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            warmup_ratio: 0.05,
            epochs: 2,
            batch_size: 32,
            seed: 0,
            loss_kind: LossKind::Uncertain,
            optimizer: Optimizer::default(),
            quadrature_order: crate::reward::quadrature::DEFAULT_ORDER,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad(format!("learning_rate must be > 0, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.warmup_ratio) {
            return bad(format!("warmup_ratio must be in [0, 1), got {}", self.warmup_ratio));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch_size must be positive".into());
        }
        if let Optimizer::Adam { beta1, beta2, eps } = self.optimizer {
            if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || eps <= 0.0 {
                return bad("adam needs beta1, beta2 in [0, 1) and eps > 0".into());
            }
        }
        QuadratureRule::new(self.quadrature_order).map(|_| ())
    }

    pub fn steps_per_epoch(&self, entries: usize) -> usize {
        entries.div_ceil(self.batch_size)
    }

    /// `floor(warmup_ratio × total_steps)`.
    pub fn warmup_steps(&self, total_steps: usize) -> usize {
        (self.warmup_ratio * total_steps as f64).floor() as usize
    }

    /// Linear ramp from 0 over the warm-up steps, constant afterwards.
    pub fn learning_rate_at(&self, step: usize, total_steps: usize) -> f64 {
        let warmup = self.warmup_steps(total_steps);
        if step < warmup {
            self.learning_rate * (step + 1) as f64 / warmup as f64
        } else {
            self.learning_rate
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub lr: f64,
    pub mean_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub head: RewardHead,
    pub history: Vec<StepRecord>,
}

enum OptState {
    Sgd,
    Adam {
        beta1: f64,
        beta2: f64,
        eps: f64,
        m: Vec<f64>,
        v: Vec<f64>,
        t: i32,
    },
}

impl OptState {
    fn new(opt: Optimizer, n: usize) -> Self {
        match opt {
            Optimizer::Sgd => OptState::Sgd,
            Optimizer::Adam { beta1, beta2, eps } => OptState::Adam {
                beta1,
                beta2,
                eps,
                m: vec![0.0; n],
                v: vec![0.0; n],
                t: 0,
            },
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        match self {
            OptState::Sgd => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p -= lr * g;
                }
            }
            OptState::Adam {
                beta1,
                beta2,
                eps,
                m,
                v,
                t,
            } => {
                *t += 1;
                let c1 = 1.0 - beta1.powi(*t);
                let c2 = 1.0 - beta2.powi(*t);
                for i in 0..params.len() {
                    m[i] = *beta1 * m[i] + (1.0 - *beta1) * grad[i];
                    v[i] = *beta2 * v[i] + (1.0 - *beta2) * grad[i] * grad[i];
                    params[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + *eps);
                }
            }
        }
    }
}

/// Canonical epoch entries: pairs sorted by id, each repeated `repeat` times.
fn canonical_entries(corpus: &[TrainingPair]) -> Result<Vec<usize>> {
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    order.sort_by(|&i, &j| corpus[i].pair_id.cmp(&corpus[j].pair_id));
    if let Some(w) = order.windows(2).find(|w| corpus[w[0]].pair_id == corpus[w[1]].pair_id) {
        return Err(Error::InvalidArgument(format!(
            "duplicate pair_id {:?} in training corpus",
            corpus[w[0]].pair_id
        )));
    }
    Ok(order
        .into_iter()
        .flat_map(|i| std::iter::repeat_n(i, corpus[i].repeat as usize))
        .collect())
}

/// Summed loss and gradient over `batch`, computed in parallel and reduced
/// in batch order so the result does not depend on thread scheduling.
pub fn batch_gradient(
    head: &RewardHead,
    corpus: &[TrainingPair],
    batch: &[usize],
    kind: LossKind,
    rule: &QuadratureRule,
    step: usize,
) -> Result<(f64, Vec<f64>)> {
    let parts = batch
        .par_iter()
        .map(|&i| {
            let p = &corpus[i];
            grad_pair_loss_kind(kind, head, &p.a, &p.b, p.winner, rule)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut loss = 0.0;
    let mut grad = vec![0.0; head.num_params()];
    for (pg, &i) in parts.iter().zip(batch) {
        if !pg.loss.is_finite() || pg.grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteLoss {
                step,
                pair_id: corpus[i].pair_id.clone(),
            });
        }
        loss += pg.loss;
        for (g, d) in grad.iter_mut().zip(&pg.grad) {
            *g += d;
        }
    }
    Ok((loss, grad))
}

/// Trains `head0` on `corpus`. Each epoch visits the canonical entries in an
/// order drawn from the `epoch` sub-stream of `cfg.seed`; the final short
/// batch is kept. Every step records its learning rate and mean batch loss.
pub fn train(corpus: &[TrainingPair], head0: RewardHead, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if corpus.is_empty() {
        return Err(Error::Empty("training corpus"));
    }
    for p in corpus {
        for e in [&p.a, &p.b] {
            if e.dim() != head0.input_dim() {
                return Err(Error::DimensionMismatch {
                    expected: head0.input_dim(),
                    got: e.dim(),
                });
            }
        }
    }
    let rule = QuadratureRule::new(cfg.quadrature_order)?;
    let entries = canonical_entries(corpus)?;
    if entries.is_empty() {
        return Err(Error::Empty("training corpus after repeats"));
    }
    let per_epoch = cfg.steps_per_epoch(entries.len());
    let total = cfg.epochs * per_epoch;
    let root = Rng::new(cfg.seed);
    let mut head = head0;
    let mut opt = OptState::new(cfg.optimizer, head.num_params());
    let mut history = Vec::with_capacity(total);
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        let mut order = entries.clone();
        root.substream(epoch as u64).shuffle(&mut order);
        for batch in order.chunks(cfg.batch_size) {
            let (loss, mut grad) = batch_gradient(&head, corpus, batch, cfg.loss_kind, &rule, step)?;
            let n = batch.len() as f64;
            grad.iter_mut().for_each(|g| *g /= n);
            let lr = cfg.learning_rate_at(step, total);
            opt.step(head.params_mut(), &grad, lr);
            if head.params().iter().any(|p| !p.is_finite()) {
                return Err(Error::NonFiniteLoss {
                    step,
                    pair_id: corpus[batch[0]].pair_id.clone(),
                });
            }
            history.push(StepRecord {
                step,
                lr,
                mean_loss: loss / n,
            });
            step += 1;
        }
    }
    Ok(TrainOutcome { head, history })
}

/// Fraction of pairs whose `mu` ordering matches the winner; ties count half.
pub fn evaluate_accuracy(head: &RewardHead, pairs: &[TrainingPair]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Empty("evaluation pairs"));
    }
    let credit = pairs
        .par_iter()
        .map(|p| {
            let (a, b) = (head.score(&p.a)?, head.score(&p.b)?);
            let (h, l) = match p.winner {
                Side::A => (a, b),
                Side::B => (b, a),
            };
            Ok(if h > l {
                1.0
            } else if h == l {
                0.5
            } else {
                0.0
            })
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(credit.iter().sum::<f64>() / pairs.len() as f64)
}

/// Training metadata written beside a checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainMetadata {
    pub seed: u64,
    pub epochs: usize,
    pub steps: usize,
    pub pairs: usize,
    pub excluded_ties: usize,
    pub layer_dims: Vec<usize>,
    pub sigma_floor: f64,
    pub loss_kind: LossKind,
    pub final_mean_loss: f64,
    pub train_accuracy: f64,
    pub loss_curve: Vec<f64>,
}

/// `step,lr,mean_loss` rows.
pub fn loss_history_csv(history: &[StepRecord]) -> String {
    let mut out = String::from("step,lr,mean_loss\n");
    for r in history {
        out.push_str(&format!("{},{:e},{:.10}\n", r.step, r.lr, r.mean_loss));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{separable_corpus, SeparableSpec};

    fn emb(v: &[f32]) -> EmbeddingVector {
        EmbeddingVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn warmup_schedule() {
        let cfg = TrainConfig {
            learning_rate: 1.0,
            warmup_ratio: 0.05,
            ..Default::default()
        };
        assert_eq!(cfg.warmup_steps(100), 5);
        assert_eq!(cfg.warmup_steps(19), 0);
        let lrs: Vec<f64> = (0..7).map(|t| cfg.learning_rate_at(t, 100)).collect();
        assert_eq!(lrs, vec![0.2, 0.4, 0.6, 0.8, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn single_pair_sgd_converges_monotonically() {
        let pair = TrainingPair {
            pair_id: "p".into(),
            a: emb(&[1.0, 0.5]),
            b: emb(&[-0.5, 1.0]),
            winner: Side::A,
            repeat: 1,
        };
        let cfg = TrainConfig {
            learning_rate: 2.0,
            warmup_ratio: 0.0,
            epochs: 3000,
            batch_size: 1,
            loss_kind: LossKind::Deterministic,
            optimizer: Optimizer::Sgd,
            ..Default::default()
        };
        let head = RewardHead::zeros(&[2, 2], 1e-4).unwrap();
        let out = train(std::slice::from_ref(&pair), head, &cfg).unwrap();
        let losses: Vec<f64> = out.history.iter().map(|r| r.mean_loss).collect();
        assert!(losses.windows(2).all(|w| w[1] < w[0]));
        assert!(*losses.last().unwrap() < 1e-3);
    }

    #[test]
    fn history_length_and_determinism() {
        let corpus = separable_corpus(&SeparableSpec {
            pairs: 70,
            dim: 4,
            seed: 5,
            ..Default::default()
        });
        let set = pairs_from_records(&corpus.samples, &corpus.records).unwrap();
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 16,
            seed: 11,
            ..Default::default()
        };
        let head = RewardHead::init(&[4, 3, 2], 1e-4, &mut Rng::new(1)).unwrap();
        let a = train(&set.pairs, head.clone(), &cfg).unwrap();
        let b = train(&set.pairs, head.clone(), &cfg).unwrap();
        assert_eq!(a.history.len(), 3 * 70usize.div_ceil(16));
        assert_eq!(a.head, b.head);
        assert_eq!(a.history, b.history);

        let mut reversed = set.pairs.clone();
        reversed.reverse();
        let c = train(&reversed, head, &cfg).unwrap();
        assert_eq!(a.head, c.head);
    }

    #[test]
    fn repeats_extend_the_epoch() {
        let mut p = TrainingPair {
            pair_id: "x".into(),
            a: emb(&[1.0]),
            b: emb(&[0.0]),
            winner: Side::A,
            repeat: 3,
        };
        let cfg = TrainConfig {
            epochs: 2,
            batch_size: 2,
            ..Default::default()
        };
        let head = RewardHead::zeros(&[1, 2], 1e-4).unwrap();
        assert_eq!(train(std::slice::from_ref(&p), head.clone(), &cfg).unwrap().history.len(), 4);
        p.repeat = 0;
        assert!(train(&[p], head, &cfg).is_err());
    }

    #[test]
    fn accuracy_counts_ties_half_and_rejects_empty() {
        let head = RewardHead::zeros(&[1, 2], 1e-4).unwrap();
        let p = TrainingPair {
            pair_id: "t".into(),
            a: emb(&[1.0]),
            b: emb(&[2.0]),
            winner: Side::B,
            repeat: 1,
        };
        assert_eq!(evaluate_accuracy(&head, &[p]).unwrap(), 0.5);
        assert!(evaluate_accuracy(&head, &[]).is_err());
    }

    #[test]
    fn random_head_scores_near_chance() {
        let mut rng = Rng::new(77);
        let head = RewardHead::init(&[3, 2], 1e-4, &mut rng.substream(0)).unwrap();
        let pairs: Vec<TrainingPair> = (0..10_000)
            .map(|i| {
                let mut v = || emb(&[rng.normal() as f32, rng.normal() as f32, rng.normal() as f32]);
                TrainingPair {
                    pair_id: i.to_string(),
                    a: v(),
                    b: v(),
                    winner: if rng.below(2) == 0 { Side::A } else { Side::B },
                    repeat: 1,
                }
            })
            .collect();
        let acc = evaluate_accuracy(&head, &pairs).unwrap();
        assert!((acc - 0.5).abs() < 0.02, "{acc}");
    }

    #[test]
    fn ties_are_excluded_and_listed() {
        let corpus = separable_corpus(&SeparableSpec {
            pairs: 3,
            dim: 2,
            seed: 1,
            ..Default::default()
        });
        let mut recs = corpus.records.clone();
        recs[1].votes_a = 4;
        recs[1].votes_b = 4;
        let set = pairs_from_records(&corpus.samples, &recs).unwrap();
        assert_eq!(set.pairs.len(), 2);
        assert_eq!(set.excluded_ties, vec![recs[1].pair_id.clone()]);
    }

    #[test]
    fn config_rejects_unknown_keys() {
        let ok: TrainConfig = serde_json::from_str(r#"{"epochs": 3, "optimizer": {"kind": "sgd"}}"#).unwrap();
        assert_eq!(ok.epochs, 3);
        assert_eq!(ok.optimizer, Optimizer::Sgd);
        assert!(serde_json::from_str::<TrainConfig>(r#"{"epochz": 3}"#).is_err());
    }
}
