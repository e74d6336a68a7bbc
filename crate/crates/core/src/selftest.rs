//! Small hand-checkable cases run by `prefrank selftest`.

use std::collections::BTreeMap;

use crate::cohp::{
    model_wise, round_ablation, run_cohp, AblationGrid, CohpConfig, GeneratorPort, SyntheticGenerator,
    SyntheticModel,
};
use crate::datapipe::{
    aesthetic_select, align_distribution, build_pairs, corpus_stats, filter_by_agreement,
    CategoryDistribution,
};
use crate::domain::{agreement, winner, Category, EmbeddingVector, PreferenceRecord, Prompt, Sample, Side};
use crate::error::Error;
use crate::eval::{kendall, normalized_mse, rank_agreement, spearman, ModelScoreTable, ScoredSample};
use crate::reward::{
    bradley_terry_loss, kl_form_loss, pair_loss, preference_prob_deterministic,
    preference_prob_uncertain, QuadratureRule, RewardHead, ScoreDistribution, DEFAULT_SIGMA_FLOOR,
};
use crate::rng::Rng;

pub struct Check {
    pub name: &'static str,
    pub outcome: Result<(), String>,
}

type Outcome = Result<(), String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Outcome {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn close(got: f64, want: f64, tol: f64) -> Outcome {
    ensure((got - want).abs() <= tol, || format!("got {got}, expected {want} ± {tol}"))
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn emb(v: &[f32]) -> EmbeddingVector {
    EmbeddingVector::new(v.to_vec()).expect("finite")
}

fn sample(id: &str, prompt: &str, category: Category, score: Option<f64>) -> Sample {
    Sample {
        sample_id: id.into(),
        prompt_id: prompt.into(),
        prompt_text: String::new(),
        category,
        source: "selftest".into(),
        embedding: emb(&[0.0]),
        aesthetic_score: score,
    }
}

fn rec(a: u32, b: u32) -> PreferenceRecord {
    PreferenceRecord::new("p", "q", "x", "y", a, b)
}

fn synthetic(name: &str, quality: f64) -> SyntheticGenerator {
    let model = SyntheticModel {
        name: name.into(),
        quality,
        noise: 0.5,
    };
    SyntheticGenerator::new(model, vec![1.0, 0.0], 0.3).expect("valid model")
}

fn prompt() -> Prompt {
    Prompt {
        prompt_id: "p0".into(),
        prompt_text: String::new(),
        category: Category::Others,
    }
}

fn probe_head() -> RewardHead {
    RewardHead::linear_probe(&[1.0, 0.0], DEFAULT_SIGMA_FLOOR).expect("valid head")
}

fn checks() -> Vec<(&'static str, fn() -> Outcome)> {
    vec![
        ("domain.agreement unanimous", || close(agreement(&rec(9, 0)).map_err(err)?, 1.0, 0.0)),
        ("domain.winner majority", || {
            ensure(winner(&rec(8, 1)).map_err(err)? == Side::A, || "expected A".into())
        }),
        ("domain.winner label override", || {
            ensure(
                winner(&rec(3, 3).with_label(Side::B)).map_err(err)? == Side::B,
                || "expected B".into(),
            )
        }),
        ("domain.winner tie", || match winner(&rec(5, 5)) {
            Err(e @ Error::TiedPair { .. }) => ensure(e.to_string().contains("tied pair"), || e.to_string()),
            other => Err(format!("expected tied pair error, got {other:?}")),
        }),
        ("reward.forward zero network", || {
            let head = RewardHead::zeros(&[3, 4, 2], 0.01).map_err(err)?;
            let d = head.forward(&emb(&[0.3, -1.0, 2.0])).map_err(err)?;
            close(d.mu, 0.0, 0.0)?;
            close(d.sigma, 0.01 + std::f64::consts::LN_2, 1e-15)
        }),
        ("reward.forward linearity", || {
            let head = RewardHead::linear_probe(&[0.5, -2.0], DEFAULT_SIGMA_FLOOR).map_err(err)?;
            let one = head.score(&emb(&[1.0, 0.25])).map_err(err)?;
            let two = head.score(&emb(&[2.0, 0.5])).map_err(err)?;
            close(two, 2.0 * one, 1e-15)
        }),
        ("reward.deterministic symmetry", || close(preference_prob_deterministic(0.0, 0.0), 0.5, 0.0)),
        ("reward.deterministic saturation", || {
            let p = preference_prob_deterministic(-50.0, 50.0);
            ensure(p > 0.0 && p < 1e-40, || format!("got {p}"))
        }),
        ("reward.uncertain equal means", || {
            let rule = QuadratureRule::default();
            let d = ScoreDistribution::new(1.5, 0.7).map_err(err)?;
            close(preference_prob_uncertain(&d, &d, &rule), 0.5, 1e-15)
        }),
        ("reward.pair_loss symmetric pair", || {
            let head = RewardHead::init(&[2, 3, 2], DEFAULT_SIGMA_FLOOR, &mut Rng::new(1)).map_err(err)?;
            let e = emb(&[0.4, -0.2]);
            let loss = pair_loss(&head, &e, &e, Side::A, &QuadratureRule::default()).map_err(err)?;
            close(loss, std::f64::consts::LN_2, 1e-12)
        }),
        ("reward.pair_loss relabeling", || {
            let head = RewardHead::init(&[2, 3, 2], DEFAULT_SIGMA_FLOOR, &mut Rng::new(2)).map_err(err)?;
            let (a, b) = (emb(&[0.4, -0.2]), emb(&[-1.0, 0.3]));
            let rule = QuadratureRule::default();
            let l1 = pair_loss(&head, &a, &b, Side::A, &rule).map_err(err)?;
            let l2 = pair_loss(&head, &b, &a, Side::B, &rule).map_err(err)?;
            close(l1, l2, 0.0)
        }),
        ("reward.loss forms agree", || close(kl_form_loss(1.3, 0.4), bradley_terry_loss(1.3, 0.4), 1e-12)),
        ("reward.loss equal scores", || close(bradley_terry_loss(0.7, 0.7), std::f64::consts::LN_2, 1e-15)),
        ("datapipe.filter keeps 19/19", || {
            ensure(filter_by_agreement(&[rec(19, 0)], 0.95).len() == 1, || "dropped".into())
        }),
        ("datapipe.filter vacuous threshold", || {
            let records = [rec(10, 9), rec(1, 1), rec(0, 3)];
            ensure(filter_by_agreement(&records, 0.5).len() == 3, || "dropped a record".into())
        }),
        ("datapipe.aesthetic_select top tenth", || {
            let samples: Vec<Sample> = (0..100)
                .map(|i| sample(&format!("s{i}"), "q", Category::Arts, Some(5.0 + i as f64 / 100.0)))
                .collect();
            let kept = aesthetic_select(&samples, 4.0, 0.10).map_err(err)?;
            ensure(kept.len() == 10, || format!("kept {}", kept.len()))
        }),
        ("datapipe.align_distribution even split", || {
            let samples: Vec<Sample> = (0..20)
                .map(|i| {
                    let c = if i % 2 == 0 { Category::Arts } else { Category::Food };
                    sample(&format!("s{i}"), "q", c, None)
                })
                .collect();
            let target = CategoryDistribution::uniform(&[Category::Arts, Category::Food]).map_err(err)?;
            let out = align_distribution(&samples, &target, 10, &Rng::new(0)).map_err(err)?;
            let arts = out.iter().filter(|s| s.category == Category::Arts).count();
            ensure(out.len() == 10 && arts == 5, || format!("{} total, {arts} arts", out.len()))
        }),
        ("datapipe.align_distribution shortfall", || {
            let samples: Vec<Sample> = (0..5).map(|i| sample(&format!("s{i}"), "q", Category::Arts, None)).collect();
            let target = CategoryDistribution::uniform(&[Category::Arts]).map_err(err)?;
            match align_distribution(&samples, &target, 7, &Rng::new(0)) {
                Err(e) => ensure(e.to_string().contains("shortfall 2"), || e.to_string()),
                Ok(_) => Err("expected a shortfall".into()),
            }
        }),
        ("datapipe.build_pairs two samples", || {
            let samples = [sample("a", "q", Category::Arts, None), sample("b", "q", Category::Arts, None)];
            ensure(build_pairs(&samples).len() == 1, || "expected 1 pair".into())
        }),
        ("datapipe.corpus_stats no records", || {
            let stats = corpus_stats(&[sample("a", "q", Category::Arts, None)], &[]);
            ensure(stats.overall_mean_agreement.is_none(), || "mean should be absent".into())
        }),
        ("eval.score_table single cell", || {
            let scores = (1..=3)
                .map(|i| ScoredSample {
                    model: "m".into(),
                    category: Category::Arts,
                    sample_id: format!("s{i}"),
                    score: i as f64,
                })
                .collect();
            let table = ModelScoreTable::from_scores(scores).map_err(err)?;
            close(table.all_scores()["m"], 2.0, 1e-15)
        }),
        ("eval.spearman identical", || {
            close(spearman(&[1.0, 2.0, 3.0, 4.0], &[1.0, 2.0, 3.0, 4.0]).map_err(err)?, 1.0, 0.0)
        }),
        ("eval.spearman reversed", || {
            let x = [1.0, 2.0, 3.0, 4.0, 5.0];
            let y = [5.0, 4.0, 3.0, 2.0, 1.0];
            close(spearman(&x, &y).map_err(err)?, -1.0, 0.0)
        }),
        ("eval.kendall identical", || {
            close(kendall(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).map_err(err)?, 1.0, 0.0)
        }),
        ("eval.normalized_mse affine", || {
            let x = [0.5, 1.0, 3.0, -2.0];
            let y: Vec<f64> = x.iter().map(|v| 3.0 * v + 7.0).collect();
            close(normalized_mse(&x, &y).map_err(err)?, 0.0, 1e-15)
        }),
        ("eval.rank_agreement identity", || {
            let t: BTreeMap<String, f64> = [("a", 1.0), ("b", 3.0), ("c", 2.0)]
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect();
            let r = rank_agreement(&t, &t).map_err(err)?;
            close(r.spearman, 1.0, 0.0)?;
            close(r.kendall, 1.0, 0.0)?;
            close(r.normalized_mse, 0.0, 0.0)
        }),
        ("cohp.model_wise single model", || {
            let g = synthetic("only", -3.0);
            let models: [&dyn GeneratorPort; 1] = [&g];
            let out = model_wise(&models, &prompt(), &probe_head(), &CohpConfig::default(), &Rng::new(0))
                .map_err(err)?;
            ensure(out.trace.chosen == 0, || "expected model 0".into())
        }),
        ("cohp.model_wise tie goes to index 0", || {
            let model = SyntheticModel {
                name: "same".into(),
                quality: 1.0,
                noise: 0.0,
            };
            let a = SyntheticGenerator::new(model.clone(), vec![1.0, 0.0], 0.3).map_err(err)?;
            let b = SyntheticGenerator::new(SyntheticModel { name: "twin".into(), ..model }, vec![1.0, 0.0], 0.3)
                .map_err(err)?;
            let models: [&dyn GeneratorPort; 2] = [&a, &b];
            let out = model_wise(&models, &prompt(), &probe_head(), &CohpConfig::default(), &Rng::new(0))
                .map_err(err)?;
            ensure(out.trace.chosen == 0, || format!("chose {}", out.trace.chosen))
        }),
        ("cohp.sample_wise single sample", || {
            let g = synthetic("g", 1.0);
            let models: [&dyn GeneratorPort; 1] = [&g];
            let cfg = CohpConfig {
                batch_size: 1,
                ..CohpConfig::default()
            }
            .with_sample_rounds(1);
            let run = run_cohp(&models, &prompt(), &probe_head(), &cfg, &Rng::new(0)).map_err(err)?;
            let only = &run.trace.sample_wise[0].candidates[0];
            ensure(run.golden.sample_id == only.sample_id, || "golden is not the only sample".into())
        }),
        ("cohp.round_ablation single point", || {
            let g = synthetic("g", 1.0);
            let models: [&dyn GeneratorPort; 1] = [&g];
            let cfg = CohpConfig::default();
            let grid = AblationGrid { rounds: vec![1] };
            let root = Rng::new(4);
            let p = prompt();
            let table = round_ablation(&models, std::slice::from_ref(&p), &probe_head(), &cfg, &grid, &root)
                .map_err(err)?;
            let run = run_cohp(&models, &p, &probe_head(), &cfg.with_sample_rounds(1), &root.substream_named(&p.prompt_id))
                .map_err(err)?;
            close(table.sample_wise[0], run.trace.golden.mu, 0.0)
        }),
    ]
}

/// Runs every check; panics inside a check are reported as failures.
pub fn run_all() -> Vec<Check> {
    checks()
        .into_iter()
        .map(|(name, f)| {
            let outcome = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
            Check { name, outcome }
        })
        .collect()
}
