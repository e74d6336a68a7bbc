//! Synthetic corpora with a known linear utility, for tests, demos and the
//! acceptance suite.

use serde::{Deserialize, Serialize};

use crate::domain::{Category, EmbeddingVector, PreferenceRecord, Sample};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeparableSpec {
    pub pairs: usize,
    pub dim: usize,
    pub samples_per_prompt: usize,
    pub seed: u64,
    /// Prefix for generated ids, so several corpora can be merged.
    pub id_prefix: String,
    /// Pairs whose utility gap is below this get a near-even vote split.
    pub contested_gap: f64,
}

impl Default for SeparableSpec {
    fn default() -> Self {
        SeparableSpec {
            pairs: 1000,
            dim: 16,
            samples_per_prompt: 4,
            seed: 0,
            id_prefix: String::new(),
            contested_gap: 0.05,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    /// Unit-norm utility direction `w`; a sample's utility is `wᵀe`.
    pub probe: Vec<f64>,
    pub samples: Vec<Sample>,
    pub records: Vec<PreferenceRecord>,
}

pub fn utility(probe: &[f64], e: &EmbeddingVector) -> f64 {
    probe.iter().zip(e.values()).map(|(w, &x)| w * x as f64).sum()
}

/// Unit-norm direction drawn from `seed`'s `probe` sub-stream.
pub fn random_probe(dim: usize, seed: u64) -> Vec<f64> {
    let mut rng = Rng::new(seed).substream_named("probe");
    let v: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / norm).collect()
}

/// Gaussian embeddings grouped by prompt. Every same-prompt pair gets 9 to
/// 19 voters and a majority for the side with higher utility: unanimous
/// when the utility gap is at least `contested_gap`, otherwise the smallest
/// possible majority (or an exact tie for an even panel), so that an
/// agreement filter removes near-ties. Takes the first `spec.pairs` pairs. The probe
/// depends only on `seed` and `dim`, so corpora from one seed with
/// different prefixes share it.
pub fn separable_corpus(spec: &SeparableSpec) -> SyntheticCorpus {
    let probe = random_probe(spec.dim, spec.seed);
    let root = Rng::new(spec.seed);
    let mut emb_rng = root.substream_named(&format!("{}embeddings", spec.id_prefix));
    let mut vote_rng = root.substream_named(&format!("{}votes", spec.id_prefix));
    let k = spec.samples_per_prompt.max(2);
    let per_prompt = k * (k - 1) / 2;
    let prompts = spec.pairs.div_ceil(per_prompt);
    let mut samples = Vec::with_capacity(prompts * k);
    let mut records = Vec::with_capacity(spec.pairs);
    for p in 0..prompts {
        let prompt_id = format!("{}p{p:05}", spec.id_prefix);
        let category = Category::ALL[p % Category::ALL.len()];
        let first = samples.len();
        for j in 0..k {
            let values: Vec<f32> = (0..spec.dim).map(|_| emb_rng.normal() as f32).collect();
            let embedding = EmbeddingVector::new(values).expect("finite normals");
            let u = utility(&probe, &embedding);
            samples.push(Sample {
                sample_id: format!("{prompt_id}s{j}"),
                prompt_id: prompt_id.clone(),
                prompt_text: format!("synthetic prompt {p}"),
                category,
                source: "synthetic".into(),
                embedding,
                aesthetic_score: Some(5.0 + 0.5 * u),
            });
        }
        for i in 0..k {
            for j in i + 1..k {
                if records.len() == spec.pairs {
                    break;
                }
                let (a, b): (&Sample, &Sample) = (&samples[first + i], &samples[first + j]);
                let voters = 9 + vote_rng.below(11) as u32;
                let gap = utility(&probe, &a.embedding) - utility(&probe, &b.embedding);
                let a_wins = gap > 0.0;
                let dissent = if gap.abs() < spec.contested_gap { voters / 2 } else { 0 };
                let (va, vb) = if a_wins {
                    (voters - dissent, dissent)
                } else {
                    (dissent, voters - dissent)
                };
                records.push(PreferenceRecord::new(
                    format!("{prompt_id}:{}:{}", a.sample_id, b.sample_id),
                    prompt_id.clone(),
                    a.sample_id.clone(),
                    b.sample_id.clone(),
                    va,
                    vb,
                ));
            }
        }
    }
    SyntheticCorpus {
        probe,
        samples,
        records,
    }
}
