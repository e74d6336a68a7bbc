use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{GenerationRequest, GeneratorPort};
use crate::domain::{EmbeddingVector, Sample};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Parameters of one synthetic model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticModel {
    pub name: String,
    /// Expected score `q` of a fresh draw.
    pub quality: f64,
    /// Standard deviation of a fresh draw's score.
    #[serde(default)]
    pub noise: f64,
}

/// Stand-in generator whose samples score predictably under a linear probe
/// head. A fresh draw has quality `q + noise·ε`; refining a reference of
/// quality `q_ref` at strength `d` gives `(1 - d)·q_ref + d·(q + noise·ε) + gain`.
/// The embedding is `quality · w / |w|²` plus optional noise orthogonal to
/// `w`, so `wᵀe` recovers the quality.
#[derive(Debug, Clone)]
pub struct SyntheticGenerator {
    model: SyntheticModel,
    probe: Vec<f64>,
    probe_norm2: f64,
    gain: f64,
    off_probe_noise: f64,
}

pub const DEFAULT_GAIN: f64 = 0.3;

impl SyntheticGenerator {
    pub fn new(model: SyntheticModel, probe: Vec<f64>, gain: f64) -> Result<Self> {
        let probe_norm2: f64 = probe.iter().map(|w| w * w).sum();
        if probe.is_empty() || !probe_norm2.is_finite() || probe_norm2 == 0.0 {
            return Err(Error::InvalidArgument("synthetic probe must be finite and non-zero".into()));
        }
        if !(model.quality.is_finite() && model.noise.is_finite() && model.noise >= 0.0 && gain.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "bad synthetic model parameters for {:?}",
                model.name
            )));
        }
        Ok(SyntheticGenerator {
            model,
            probe,
            probe_norm2,
            gain,
            off_probe_noise: 0.0,
        })
    }

    /// Adds isotropic noise in the directions the probe cannot see.
    pub fn with_off_probe_noise(mut self, sd: f64) -> Self {
        self.off_probe_noise = sd;
        self
    }

    pub fn model(&self) -> &SyntheticModel {
        &self.model
    }

    pub fn quality_of(&self, e: &EmbeddingVector) -> f64 {
        self.probe.iter().zip(e.values()).map(|(w, &x)| w * x as f64).sum()
    }

    fn embed(&self, quality: f64, rng: &mut Rng) -> Result<EmbeddingVector> {
        let mut v: Vec<f64> = self.probe.iter().map(|w| quality * w / self.probe_norm2).collect();
        if self.off_probe_noise > 0.0 {
            let xi: Vec<f64> = (0..v.len()).map(|_| rng.normal() * self.off_probe_noise).collect();
            let along: f64 = xi.iter().zip(&self.probe).map(|(x, w)| x * w).sum::<f64>() / self.probe_norm2;
            for ((vi, x), w) in v.iter_mut().zip(&xi).zip(&self.probe) {
                *vi += x - along * w;
            }
        }
        EmbeddingVector::new(v.into_iter().map(|x| x as f32).collect())
    }

    /// Quality of one slot's output.
    pub fn draw_quality(&self, reference: Option<f64>, denoise: f64, rng: &mut Rng) -> f64 {
        let fresh = self.model.quality + self.model.noise * rng.normal();
        match reference {
            None => fresh,
            Some(q_ref) => (1.0 - denoise) * q_ref + denoise * fresh + self.gain,
        }
    }

    /// One slot: quality from the slot's stream, then its embedding.
    pub fn generate_slot(&self, reference: Option<f64>, denoise: f64, rng: &mut Rng) -> Result<EmbeddingVector> {
        let q = self.draw_quality(reference, denoise, rng);
        self.embed(q, rng)
    }
}

impl GeneratorPort for SyntheticGenerator {
    fn name(&self) -> &str {
        &self.model.name
    }

    fn generate(&self, req: &GenerationRequest<'_>, rng: &Rng) -> Result<Vec<Sample>> {
        if req.reference.is_some_and(|r| r.embedding.dim() != self.probe.len()) {
            return Err(Error::DimensionMismatch {
                expected: self.probe.len(),
                got: req.reference.unwrap().embedding.dim(),
            });
        }
        let q_ref = req.reference.map(|r| self.quality_of(&r.embedding));
        (0..req.batch)
            .into_par_iter()
            .map(|slot| {
                let mut r = rng.substream(slot as u64);
                Ok(Sample {
                    sample_id: format!("{}:{}:{slot}", self.model.name, req.request_id),
                    prompt_id: req.prompt.prompt_id.clone(),
                    prompt_text: req.prompt.prompt_text.clone(),
                    category: req.prompt.category,
                    source: self.model.name.clone(),
                    embedding: self.generate_slot(q_ref, req.denoise_strength, &mut r)?,
                    aesthetic_score: None,
                })
            })
            .collect()
    }
}
