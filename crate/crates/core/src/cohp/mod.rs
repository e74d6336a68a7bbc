//! Two-stage best-of selection against a pool of generators.
//!
//! The model-wise stage lets every generator produce one fresh sample per
//! round for `N` rounds and picks the generator `m*` with the highest mean
//! score. The sample-wise stage then runs `S` rounds on `m*`: each round
//! produces `B` samples conditioned on the previous round's best at that
//! round's denoise strength. The golden sample is the best scored sample
//! over all sample-wise rounds.
//!
//! Ties always go to the lowest index. Randomness comes from sub-streams of
//! the caller's [`Rng`] keyed by stage, model, round and slot, so a run
//! depends only on the seed.

mod ablation;
mod subprocess;
mod synthetic;

pub use ablation::{round_ablation, AblationGrid, AblationTable};
pub use subprocess::{
    serve_synthetic, GenerationRequestLine, GenerationResponseLine, ReferenceLine, ResponseSample,
    SubprocessGenerator,
};
pub use synthetic::{SyntheticGenerator, SyntheticModel, DEFAULT_GAIN};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{Prompt, Sample};
use crate::error::{Error, Result};
use crate::reward::RewardHead;
use crate::rng::Rng;

/// One generation call.
#[derive(Debug, Clone, Copy)]
pub struct GenerationRequest<'a> {
    pub prompt: &'a Prompt,
    /// Sample to refine; `None` for a fresh draw.
    pub reference: Option<&'a Sample>,
    /// Refinement strength in `(0, 1]`; 1 ignores the reference.
    pub denoise_strength: f64,
    pub batch: usize,
    /// Unique within a run; generators derive sample ids from it.
    pub request_id: &'a str,
}

/// A candidate model. Implementations must return exactly `batch` samples
/// and depend only on the request and `rng`.
pub trait GeneratorPort: Send + Sync {
    fn name(&self) -> &str;
    fn generate(&self, request: &GenerationRequest<'_>, rng: &Rng) -> Result<Vec<Sample>>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CohpConfig {
    /// Model-wise rounds `N`.
    pub model_rounds: usize,
    /// Sample-wise rounds `S`.
    pub sample_rounds: usize,
    /// Samples per sample-wise round `B`.
    pub batch_size: usize,
    /// Samples per model per model-wise round; a round's score is their mean.
    pub model_batch: usize,
    /// One denoise strength per sample-wise round.
    pub denoise_schedule: Vec<f64>,
    pub seed: u64,
    /// Let the golden sample also range over the model-wise samples of `m*`.
    pub final_over_model_wise: bool,
}

impl Default for CohpConfig {
    fn default() -> Self {
        CohpConfig {
            model_rounds: 4,
            sample_rounds: 4,
            batch_size: 4,
            model_batch: 1,
            denoise_schedule: crate::reference::settings::DENOISE_SCHEDULE.to_vec(),
            seed: 0,
            final_over_model_wise: false,
        }
    }
}

impl CohpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.model_rounds == 0 || self.sample_rounds == 0 || self.batch_size == 0 || self.model_batch == 0 {
            return Err(Error::InvalidArgument(
                "cohp rounds and batch sizes must be positive".into(),
            ));
        }
        if self.denoise_schedule.len() != self.sample_rounds {
            return Err(Error::InvalidArgument(format!(
                "denoise schedule has {} entries for {} sample-wise rounds",
                self.denoise_schedule.len(),
                self.sample_rounds
            )));
        }
        if let Some(d) = self.denoise_schedule.iter().find(|d| !(**d > 0.0 && **d <= 1.0)) {
            return Err(Error::InvalidArgument(format!("denoise strength {d} outside (0, 1]")));
        }
        Ok(())
    }

    /// Same config with `S = rounds` and the schedule truncated or padded
    /// with its last entry.
    pub fn with_sample_rounds(&self, rounds: usize) -> CohpConfig {
        let last = *self.denoise_schedule.last().unwrap_or(&1.0);
        let mut schedule: Vec<f64> = self.denoise_schedule.iter().copied().take(rounds).collect();
        schedule.resize(rounds, last);
        CohpConfig {
            sample_rounds: rounds,
            denoise_schedule: schedule,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub sample_id: String,
    pub mu: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRound {
    pub candidates: Vec<Candidate>,
    /// `r_ij`: mean `mu` of the round's candidates.
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelTrace {
    pub name: String,
    pub rounds: Vec<ModelRound>,
    /// `r̄_i`: mean of the round scores.
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelWiseTrace {
    pub models: Vec<ModelTrace>,
    pub chosen: usize,
    pub chosen_name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRound {
    pub denoise_strength: f64,
    pub reference_id: String,
    pub reference_mu: f64,
    pub candidates: Vec<Candidate>,
    /// Index of `I_k★` within `candidates`.
    pub best: usize,
}

impl SampleRound {
    pub fn best_candidate(&self) -> &Candidate {
        &self.candidates[self.best]
    }
}

/// Where the golden sample was found.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    ModelWise,
    SampleWise,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldenPick {
    pub stage: Stage,
    /// Round index (0-based) within the stage.
    pub round: usize,
    pub index: usize,
    pub sample_id: String,
    pub mu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohpTrace {
    pub prompt_id: String,
    pub config: CohpConfig,
    pub model_wise: ModelWiseTrace,
    pub sample_wise: Vec<SampleRound>,
    pub golden: GoldenPick,
}

fn mean(v: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = v.len() as f64;
    v.sum::<f64>() / n
}

/// First index of the maximum.
pub fn argmax_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

impl CohpTrace {
    /// Per-round best scores `I_k★` of the sample-wise stage.
    pub fn round_bests(&self) -> Vec<f64> {
        self.sample_wise.iter().map(|r| r.best_candidate().mu).collect()
    }

    /// Checks the internal consistency of a trace: means recomputable from
    /// rounds, selections are lowest-index argmaxes, golden = overall max.
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidArgument(format!("inconsistent trace: {m}")));
        let mw = &self.model_wise;
        for m in &mw.models {
            for r in &m.rounds {
                if r.score != mean(r.candidates.iter().map(|c| c.mu)) {
                    return fail(format!("round score of {} is not its candidate mean", m.name));
                }
            }
            if m.mean != mean(m.rounds.iter().map(|r| r.score)) {
                return fail(format!("mean of {} is not its round mean", m.name));
            }
        }
        let means: Vec<f64> = mw.models.iter().map(|m| m.mean).collect();
        if mw.chosen != argmax_first(&means) {
            return fail("chosen model is not the first argmax".into());
        }
        for (k, r) in self.sample_wise.iter().enumerate() {
            let mus: Vec<f64> = r.candidates.iter().map(|c| c.mu).collect();
            if r.best != argmax_first(&mus) {
                return fail(format!("round {k} best is not the first argmax"));
            }
        }
        let mut max = f64::NEG_INFINITY;
        for r in &self.sample_wise {
            for c in &r.candidates {
                max = max.max(c.mu);
            }
        }
        if self.config.final_over_model_wise {
            for r in &mw.models[mw.chosen].rounds {
                for c in &r.candidates {
                    max = max.max(c.mu);
                }
            }
        }
        if self.golden.mu != max {
            return fail("golden score is not the maximum recorded score".into());
        }
        Ok(())
    }
}

/// A finished run: the trace and the golden sample itself.
#[derive(Debug, Clone)]
pub struct CohpRun {
    pub trace: CohpTrace,
    pub golden: Sample,
}

fn generate_checked(
    generator: &dyn GeneratorPort,
    request: &GenerationRequest<'_>,
    rng: &Rng,
) -> Result<Vec<Sample>> {
    let out = generator.generate(request, rng)?;
    if out.len() != request.batch {
        return Err(Error::BatchSize {
            generator: generator.name().to_string(),
            expected: request.batch,
            got: out.len(),
        });
    }
    Ok(out)
}

fn score_all(head: &RewardHead, samples: &[Sample]) -> Result<Vec<Candidate>> {
    samples
        .par_iter()
        .map(|s| {
            let d = head.forward(&s.embedding)?;
            Ok(Candidate {
                sample_id: s.sample_id.clone(),
                mu: d.mu,
                sigma: d.sigma,
            })
        })
        .collect()
}

/// Result of the model-wise stage, keeping the samples of the chosen model.
#[derive(Debug, Clone)]
pub struct ModelWiseOutcome {
    pub trace: ModelWiseTrace,
    /// Every model-wise sample of `m*`, in round then slot order.
    pub chosen_samples: Vec<Sample>,
}

pub fn model_wise(
    models: &[&dyn GeneratorPort],
    prompt: &Prompt,
    head: &RewardHead,
    cfg: &CohpConfig,
    rng: &Rng,
) -> Result<ModelWiseOutcome> {
    if models.is_empty() {
        return Err(Error::InvalidArgument("cohp needs at least one model".into()));
    }
    cfg.validate()?;
    let stage = rng.substream_named("model_wise");
    let mut traces = Vec::with_capacity(models.len());
    let mut samples_by_model = Vec::with_capacity(models.len());
    for (i, g) in models.iter().enumerate() {
        let mut rounds = Vec::with_capacity(cfg.model_rounds);
        let mut kept = Vec::new();
        for j in 0..cfg.model_rounds {
            let request_id = format!("{}-mw{i}-r{j}", prompt.prompt_id);
            let req = GenerationRequest {
                prompt,
                reference: None,
                denoise_strength: 1.0,
                batch: cfg.model_batch,
                request_id: &request_id,
            };
            let samples = generate_checked(*g, &req, &stage.substream(i as u64).substream(j as u64))?;
            let candidates = score_all(head, &samples)?;
            let score = mean(candidates.iter().map(|c| c.mu));
            rounds.push(ModelRound { candidates, score });
            kept.extend(samples);
        }
        let m = mean(rounds.iter().map(|r| r.score));
        traces.push(ModelTrace {
            name: g.name().to_string(),
            rounds,
            mean: m,
        });
        samples_by_model.push(kept);
    }
    let means: Vec<f64> = traces.iter().map(|t| t.mean).collect();
    let chosen = argmax_first(&means);
    Ok(ModelWiseOutcome {
        trace: ModelWiseTrace {
            chosen_name: traces[chosen].name.clone(),
            models: traces,
            chosen,
        },
        chosen_samples: samples_by_model.swap_remove(chosen),
    })
}

/// Sample-wise refinement on the chosen model, starting from its best
/// model-wise sample.
pub fn sample_wise(
    generator: &dyn GeneratorPort,
    model_stage: ModelWiseOutcome,
    prompt: &Prompt,
    head: &RewardHead,
    cfg: &CohpConfig,
    rng: &Rng,
) -> Result<CohpRun> {
    cfg.validate()?;
    let mw = model_stage.trace;
    let chosen_candidates: Vec<&Candidate> = mw.models[mw.chosen]
        .rounds
        .iter()
        .flat_map(|r| &r.candidates)
        .collect();
    let mus: Vec<f64> = chosen_candidates.iter().map(|c| c.mu).collect();
    let first = argmax_first(&mus);
    let mut reference = model_stage.chosen_samples[first].clone();
    let mut reference_mu = mus[first];

    let stage = rng.substream_named("sample_wise");
    let mut rounds = Vec::with_capacity(cfg.sample_rounds);
    let mut golden: Option<(GoldenPick, Sample)> = None;
    if cfg.final_over_model_wise {
        let per_round = cfg.model_batch;
        golden = Some((
            GoldenPick {
                stage: Stage::ModelWise,
                round: first / per_round,
                index: first % per_round,
                sample_id: reference.sample_id.clone(),
                mu: reference_mu,
            },
            reference.clone(),
        ));
    }
    for (k, &d) in cfg.denoise_schedule.iter().enumerate() {
        let request_id = format!("{}-sw-r{k}", prompt.prompt_id);
        let req = GenerationRequest {
            prompt,
            reference: Some(&reference),
            denoise_strength: d,
            batch: cfg.batch_size,
            request_id: &request_id,
        };
        let samples = generate_checked(generator, &req, &stage.substream(k as u64))?;
        let candidates = score_all(head, &samples)?;
        let mus: Vec<f64> = candidates.iter().map(|c| c.mu).collect();
        let best = argmax_first(&mus);
        let round = SampleRound {
            denoise_strength: d,
            reference_id: reference.sample_id.clone(),
            reference_mu,
            candidates,
            best,
        };
        if golden.as_ref().is_none_or(|(g, _)| mus[best] > g.mu) {
            golden = Some((
                GoldenPick {
                    stage: Stage::SampleWise,
                    round: k,
                    index: best,
                    sample_id: samples[best].sample_id.clone(),
                    mu: mus[best],
                },
                samples[best].clone(),
            ));
        }
        reference_mu = mus[best];
        reference = samples.into_iter().nth(best).expect("best index in range");
        rounds.push(round);
    }
    let (pick, sample) = golden.expect("at least one sample-wise round");
    Ok(CohpRun {
        trace: CohpTrace {
            prompt_id: prompt.prompt_id.clone(),
            config: cfg.clone(),
            model_wise: mw,
            sample_wise: rounds,
            golden: pick,
        },
        golden: sample,
    })
}

/// Both stages for one prompt.
pub fn run_cohp(
    models: &[&dyn GeneratorPort],
    prompt: &Prompt,
    head: &RewardHead,
    cfg: &CohpConfig,
    rng: &Rng,
) -> Result<CohpRun> {
    let stage = model_wise(models, prompt, head, cfg, rng)?;
    let chosen = models[stage.trace.chosen];
    sample_wise(chosen, stage, prompt, head, cfg, rng)
}

#[cfg(test)]
mod tests;
