use super::*;
use crate::domain::{Category, EmbeddingVector};
use crate::synth::random_probe;

fn prompt(id: &str) -> Prompt {
    Prompt {
        prompt_id: id.into(),
        prompt_text: "a lighthouse at dusk".into(),
        category: Category::Architecture,
    }
}

fn synthetic(qualities: &[f64], noise: f64, gain: f64) -> (Vec<SyntheticGenerator>, RewardHead) {
    let probe = random_probe(8, 99);
    let gens = qualities
        .iter()
        .enumerate()
        .map(|(i, &q)| {
            SyntheticGenerator::new(
                SyntheticModel {
                    name: format!("m{i}"),
                    quality: q,
                    noise,
                },
                probe.clone(),
                gain,
            )
            .unwrap()
        })
        .collect();
    (gens, RewardHead::linear_probe(&probe, 1e-4).unwrap())
}

fn ports(g: &[SyntheticGenerator]) -> Vec<&dyn GeneratorPort> {
    g.iter().map(|g| g as &dyn GeneratorPort).collect()
}

/// Emits fixed scores (on a 1-d identity probe) chosen by request id suffix.
struct Scripted {
    model_wise: Vec<f64>,
    rounds: Vec<Vec<f64>>,
    short_by: usize,
}

impl GeneratorPort for Scripted {
    fn name(&self) -> &str {
        "scripted"
    }

    fn generate(&self, req: &GenerationRequest<'_>, _rng: &Rng) -> Result<Vec<Sample>> {
        let scores: Vec<f64> = match req.request_id.rsplit_once("-sw-r") {
            Some((_, k)) => self.rounds[k.parse::<usize>().unwrap()].clone(),
            None => {
                let j: usize = req.request_id.rsplit_once("-r").unwrap().1.parse().unwrap();
                vec![self.model_wise[j]; req.batch]
            }
        };
        Ok(scores
            .iter()
            .take(scores.len() - self.short_by)
            .enumerate()
            .map(|(i, &v)| Sample {
                sample_id: format!("{}:{i}", req.request_id),
                prompt_id: req.prompt.prompt_id.clone(),
                prompt_text: String::new(),
                category: req.prompt.category,
                source: "scripted".into(),
                embedding: EmbeddingVector::new(vec![v as f32]).unwrap(),
                aesthetic_score: None,
            })
            .collect())
    }
}

fn identity_head() -> RewardHead {
    RewardHead::linear_probe(&[1.0], 1e-4).unwrap()
}

#[test]
fn single_model_is_selected() {
    let (g, head) = synthetic(&[-3.0], 0.5, 0.3);
    let out = model_wise(&ports(&g), &prompt("p"), &head, &CohpConfig::default(), &Rng::new(1)).unwrap();
    assert_eq!(out.trace.chosen, 0);
}

#[test]
fn best_quality_model_wins_and_matches_brute_force() {
    let (g, head) = synthetic(&[2.0, 5.0, 3.0], 1e-6, 0.3);
    let out = model_wise(&ports(&g), &prompt("p"), &head, &CohpConfig::default(), &Rng::new(4)).unwrap();
    assert_eq!(out.trace.chosen, 1);
    let means: Vec<f64> = out
        .trace
        .models
        .iter()
        .map(|m| m.rounds.iter().map(|r| r.candidates[0].mu).sum::<f64>() / m.rounds.len() as f64)
        .collect();
    let mut brute = 0;
    for i in 1..means.len() {
        if means[i] > means[brute] {
            brute = i;
        }
    }
    assert_eq!(out.trace.chosen, brute);
    assert_eq!(out.chosen_samples.len(), 4);
}

#[test]
fn equal_models_tie_to_index_zero() {
    let (g, head) = synthetic(&[1.0, 1.0], 0.0, 0.3);
    let out = model_wise(&ports(&g), &prompt("p"), &head, &CohpConfig::default(), &Rng::new(2)).unwrap();
    assert_eq!(out.trace.models[0].mean, out.trace.models[1].mean);
    assert_eq!(out.trace.chosen, 0);
}

#[test]
fn single_round_single_sample_is_golden() {
    let (g, head) = synthetic(&[1.0, 2.0], 0.4, 0.3);
    let cfg = CohpConfig {
        sample_rounds: 1,
        batch_size: 1,
        denoise_schedule: vec![0.8],
        ..Default::default()
    };
    let run = run_cohp(&ports(&g), &prompt("p"), &head, &cfg, &Rng::new(3)).unwrap();
    assert_eq!(run.trace.sample_wise.len(), 1);
    assert_eq!(run.trace.golden.sample_id, run.trace.sample_wise[0].candidates[0].sample_id);
    assert_eq!(run.golden.sample_id, run.trace.golden.sample_id);
}

#[test]
fn golden_is_max_over_recorded_rounds() {
    let gen = Scripted {
        model_wise: vec![0.0],
        rounds: vec![vec![1.0, 3.0, 2.0], vec![2.5, 2.9, 3.4]],
        short_by: 0,
    };
    let cfg = CohpConfig {
        model_rounds: 1,
        sample_rounds: 2,
        batch_size: 3,
        denoise_schedule: vec![0.8, 0.5],
        ..Default::default()
    };
    let run = run_cohp(&[&gen], &prompt("p"), &identity_head(), &cfg, &Rng::new(0)).unwrap();
    let t = &run.trace;
    assert_eq!(t.round_bests(), vec![3.0, 3.4f32 as f64]);
    assert_eq!((t.golden.round, t.golden.index), (1, 2));
    assert!((t.golden.mu - 3.4).abs() < 1e-6);
    assert_eq!(t.golden.stage, Stage::SampleWise);
    assert_eq!(t.sample_wise[1].reference_id, t.sample_wise[0].best_candidate().sample_id);
    t.validate().unwrap();
}

#[test]
fn final_over_model_wise_flag_widens_the_argmax() {
    let gen = Scripted {
        model_wise: vec![10.0, 1.0],
        rounds: vec![vec![1.0, 3.0]],
        short_by: 0,
    };
    let mut cfg = CohpConfig {
        model_rounds: 2,
        sample_rounds: 1,
        batch_size: 2,
        denoise_schedule: vec![0.8],
        ..Default::default()
    };
    let narrow = run_cohp(&[&gen], &prompt("p"), &identity_head(), &cfg, &Rng::new(0)).unwrap();
    assert_eq!(narrow.trace.golden.stage, Stage::SampleWise);
    cfg.final_over_model_wise = true;
    let wide = run_cohp(&[&gen], &prompt("p"), &identity_head(), &cfg, &Rng::new(0)).unwrap();
    assert_eq!(wide.trace.golden.stage, Stage::ModelWise);
    assert_eq!(wide.trace.golden.mu, 10.0);
    wide.trace.validate().unwrap();
}

#[test]
fn wrong_batch_size_is_an_error() {
    let gen = Scripted {
        model_wise: vec![0.0; 4],
        rounds: vec![vec![1.0, 2.0, 3.0, 4.0]; 4],
        short_by: 1,
    };
    let err = run_cohp(&[&gen], &prompt("p"), &identity_head(), &CohpConfig::default(), &Rng::new(0)).unwrap_err();
    assert!(matches!(err, Error::BatchSize { expected: 1, got: 0, .. }), "{err}");
}

#[test]
fn reruns_are_byte_identical() {
    let (g, head) = synthetic(&[2.0, 5.0, 3.0], 0.5, 0.3);
    let a = run_cohp(&ports(&g), &prompt("p"), &head, &CohpConfig::default(), &Rng::new(8)).unwrap();
    let b = run_cohp(&ports(&g), &prompt("p"), &head, &CohpConfig::default(), &Rng::new(8)).unwrap();
    assert_eq!(serde_json::to_vec(&a.trace).unwrap(), serde_json::to_vec(&b.trace).unwrap());
    a.trace.validate().unwrap();
}

#[test]
fn selection_ignores_a_constant_score_shift() {
    let (g, mut head) = synthetic(&[2.0, 2.1, 1.9], 0.5, 0.3);
    let a = run_cohp(&ports(&g), &prompt("p"), &head, &CohpConfig::default(), &Rng::new(5)).unwrap();
    head.shift_mu(7.5);
    let b = run_cohp(&ports(&g), &prompt("p"), &head, &CohpConfig::default(), &Rng::new(5)).unwrap();
    assert_eq!(a.trace.model_wise.chosen, b.trace.model_wise.chosen);
    assert_eq!(a.trace.golden.sample_id, b.trace.golden.sample_id);
}

#[test]
fn no_noise_no_gain_keeps_round_bests_constant() {
    let (g, head) = synthetic(&[1.5, 0.5], 0.0, 0.0);
    let run = run_cohp(&ports(&g), &prompt("p"), &head, &CohpConfig::default(), &Rng::new(6)).unwrap();
    let bests = run.trace.round_bests();
    for b in &bests {
        assert!((b - 1.5).abs() < 1e-5, "{bests:?}");
    }
}

#[test]
fn validate_catches_tampering() {
    let (g, head) = synthetic(&[2.0, 5.0], 0.5, 0.3);
    let run = run_cohp(&ports(&g), &prompt("p"), &head, &CohpConfig::default(), &Rng::new(9)).unwrap();
    let mut t = run.trace.clone();
    t.golden.mu += 1.0;
    assert!(t.validate().is_err());
    let mut t = run.trace.clone();
    t.model_wise.models[0].mean += 0.1;
    assert!(t.validate().is_err());
}

#[test]
fn schedule_is_padded_or_truncated() {
    let cfg = CohpConfig::default();
    assert_eq!(cfg.with_sample_rounds(2).denoise_schedule, vec![0.8, 0.8]);
    assert_eq!(cfg.with_sample_rounds(5).denoise_schedule, vec![0.8, 0.8, 0.5, 0.5, 0.5]);
    let bad = CohpConfig {
        denoise_schedule: vec![0.8],
        ..Default::default()
    };
    assert!(bad.validate().is_err());
}

#[test]
fn ablation_single_point_equals_the_run() {
    let (g, head) = synthetic(&[2.0, 3.0], 0.3, 0.3);
    let cfg = CohpConfig::default();
    let rng = Rng::new(12);
    let p = prompt("only");
    let table = round_ablation(&ports(&g), std::slice::from_ref(&p), &head, &cfg, &AblationGrid { rounds: vec![1] }, &rng).unwrap();
    let run = run_cohp(&ports(&g), &p, &head, &cfg.with_sample_rounds(1), &rng.substream_named("only")).unwrap();
    assert_eq!(table.sample_wise, vec![run.trace.golden.mu]);
}

#[test]
fn ablation_csv_layout() {
    let t = AblationTable {
        rounds: (1..=5).collect(),
        model_wise: crate::reference::rounds::MODEL_WISE.to_vec(),
        sample_wise: crate::reference::rounds::SAMPLE_WISE.to_vec(),
    };
    assert_eq!(
        t.to_csv(),
        "stage,round_1,round_2,round_3,round_4,round_5\n\
         model_wise,11.3400,11.4600,11.6800,11.6900,11.6500\n\
         sample_wise,11.5900,12.6900,12.6400,12.8400,12.8200\n"
    );
}

#[test]
fn synthetic_protocol_round_trip_in_memory() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("gen.prnk");
    let probe = random_probe(4, 1);
    let g = SyntheticGenerator::new(
        SyntheticModel {
            name: "s".into(),
            quality: 2.0,
            noise: 0.0,
        },
        probe.clone(),
        0.3,
    )
    .unwrap();
    let req = GenerationRequestLine {
        request_id: "r0".into(),
        prompt_id: "p".into(),
        prompt_text: String::new(),
        category: Category::Food,
        reference: None,
        denoise_strength: 1.0,
        batch: 3,
        seed: 5,
    };
    let input = format!("{}\nnot json\n", serde_json::to_string(&req).unwrap());
    let mut out = Vec::new();
    serve_synthetic(&g, &path, input.as_bytes(), &mut out).unwrap();
    let lines: Vec<GenerationResponseLine> = String::from_utf8(out)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines[0].samples.len(), 3);
    assert_eq!(lines[0].samples[2].embedding_row, 2);
    assert!(lines[1].error.is_some());
    let (_, row) = crate::io::read_matrix_rows(&path, 1, 1).unwrap();
    let q = g.quality_of(&EmbeddingVector::new(row).unwrap());
    assert!((q - 2.0).abs() < 1e-6);
}
