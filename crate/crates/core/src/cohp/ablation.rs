use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{model_wise, run_cohp, CohpConfig, GeneratorPort};
use crate::domain::Prompt;
use crate::error::{Error, Result};
use crate::reward::RewardHead;
use crate::rng::Rng;

/// Round counts to evaluate, e.g. `1..=5`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationGrid {
    pub rounds: Vec<usize>,
}

impl Default for AblationGrid {
    fn default() -> Self {
        AblationGrid {
            rounds: (1..=5).collect(),
        }
    }
}

/// Mean scores over prompts per round count.
///
/// The model-wise row runs only the model-wise stage with `N` set to the
/// round count and reports the chosen model's mean score `r̄_{m*}`. The
/// sample-wise row keeps `N` from the config, sets `S` to the round count and
/// reports the golden score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub rounds: Vec<usize>,
    pub model_wise: Vec<f64>,
    pub sample_wise: Vec<f64>,
}

impl AblationTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("stage");
        for r in &self.rounds {
            out.push_str(&format!(",round_{r}"));
        }
        out.push('\n');
        for (name, row) in [("model_wise", &self.model_wise), ("sample_wise", &self.sample_wise)] {
            out.push_str(name);
            for v in row {
                out.push_str(&format!(",{:.4}", (v * 1e4).round() / 1e4 + 0.0));
            }
            out.push('\n');
        }
        out
    }
}

/// Every grid point reuses each prompt's random streams, so rows compare
/// round counts on paired draws.
pub fn round_ablation(
    models: &[&dyn GeneratorPort],
    prompts: &[Prompt],
    head: &RewardHead,
    cfg: &CohpConfig,
    grid: &AblationGrid,
    rng: &Rng,
) -> Result<AblationTable> {
    if prompts.is_empty() {
        return Err(Error::Empty("ablation prompts"));
    }
    if grid.rounds.contains(&0) {
        return Err(Error::InvalidArgument("ablation round counts must be positive".into()));
    }
    let per_prompt = |f: &(dyn Fn(&Prompt, &Rng) -> Result<f64> + Sync)| -> Result<f64> {
        let values = prompts
            .par_iter()
            .map(|p| f(p, &rng.substream_named(&p.prompt_id)))
            .collect::<Result<Vec<f64>>>()?;
        Ok(values.iter().sum::<f64>() / values.len() as f64)
    };
    let mut model_row = Vec::with_capacity(grid.rounds.len());
    let mut sample_row = Vec::with_capacity(grid.rounds.len());
    for &n in &grid.rounds {
        let mcfg = CohpConfig {
            model_rounds: n,
            ..cfg.clone()
        };
        model_row.push(per_prompt(&|p, r| {
            let out = model_wise(models, p, head, &mcfg, r)?;
            Ok(out.trace.models[out.trace.chosen].mean)
        })?);
        let scfg = cfg.with_sample_rounds(n);
        sample_row.push(per_prompt(&|p, r| Ok(run_cohp(models, p, head, &scfg, r)?.trace.golden.mu))?);
    }
    Ok(AblationTable {
        rounds: grid.rounds.clone(),
        model_wise: model_row,
        sample_wise: sample_row,
    })
}
