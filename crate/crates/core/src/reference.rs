//! Published full-scale figures for the method this crate implements.
//!
//! They come from a 7B vision-language backbone trained on about a million
//! annotated pairs and from real diffusion models, so nothing at desk scale
//! reproduces them. They serve as documentation and as values injected into
//! report-layout fixtures.

/// Pairwise preference accuracy on public test sets.
pub mod accuracy {
    pub const IMAGE_REWARD_TEST: f64 = 0.668;
    pub const PICK_SCORE_TEST: f64 = 0.728;
    pub const HPD_V2_TEST: f64 = 0.854;
    pub const HPD_V3_TEST: f64 = 0.769;
}

/// Agreement of model rankings with human rankings.
pub mod rank_agreement {
    pub const SPEARMAN: f64 = 0.94;
    pub const KENDALL: f64 = 0.8222;
    pub const NORMALIZED_MSE: f64 = 0.029;
}

/// Mean annotator convergence of two preference corpora.
pub mod convergence {
    pub const HPD_V2: f64 = 0.599;
    pub const HPD_V3: f64 = 0.765;
}

/// Best-of selection score by number of rounds (1 to 5).
pub mod rounds {
    pub const MODEL_WISE: [f64; 5] = [11.34, 11.46, 11.68, 11.69, 11.65];
    pub const SAMPLE_WISE: [f64; 5] = [11.59, 12.69, 12.64, 12.84, 12.82];
}

/// Benchmark table: the leading row, per category in canonical order, and
/// its overall mean.
pub mod benchmark {
    pub const KOLORS_ALL: f64 = 10.55;
    pub const KOLORS_BY_CATEGORY: [f64; 12] = [
        11.79, 10.47, 9.87, 10.82, 10.60, 9.89, 10.68, 10.93, 10.50, 10.63, 11.06, 9.51,
    ];
}

/// Full-scale training and data settings.
pub mod settings {
    pub const LEARNING_RATE: f64 = 2e-6;
    pub const WARMUP_RATIO: f64 = 0.05;
    pub const BATCH_SIZE: usize = 384;
    pub const EPOCHS: usize = 2;
    pub const TRAIN_AGREEMENT: f64 = 0.95;
    pub const VALIDATION_AGREEMENT: f64 = 0.90;
    pub const AESTHETIC_FLOOR: f64 = 4.0;
    pub const AESTHETIC_TOP_FRACTION: f64 = 0.10;
    pub const DENOISE_SCHEDULE: [f64; 4] = [0.8, 0.8, 0.5, 0.5];
    pub const SELECTION_ROUNDS: usize = 4;
    pub const ANNOTATORS_MIN: u32 = 9;
    pub const ANNOTATORS_MAX: u32 = 19;
}
