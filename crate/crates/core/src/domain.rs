//! Domain values shared by every module: embeddings, samples, annotated
//! pairs and the vote arithmetic on them.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A finite, non-empty `f32` feature vector produced by an external encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f32>", into = "Vec<f32>")]
pub struct EmbeddingVector(Vec<f32>);

impl EmbeddingVector {
    pub fn new(values: Vec<f32>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidEmbedding("empty vector".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidEmbedding(format!(
                "element {i} is {}",
                values[i]
            )));
        }
        Ok(EmbeddingVector(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f32] {
        &self.0
    }

    pub fn into_values(self) -> Vec<f32> {
        self.0
    }
}

impl TryFrom<Vec<f32>> for EmbeddingVector {
    type Error = Error;

    fn try_from(values: Vec<f32>) -> Result<Self> {
        EmbeddingVector::new(values)
    }
}

impl From<EmbeddingVector> for Vec<f32> {
    fn from(e: EmbeddingVector) -> Self {
        e.0
    }
}

/// The closed set of twelve prompt categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Characters,
    Arts,
    Design,
    Architecture,
    Animals,
    NaturalScenery,
    Transportation,
    Products,
    Plants,
    Food,
    Science,
    Others,
}

impl Category {
    pub const ALL: [Category; 12] = [
        Category::Characters,
        Category::Arts,
        Category::Design,
        Category::Architecture,
        Category::Animals,
        Category::NaturalScenery,
        Category::Transportation,
        Category::Products,
        Category::Plants,
        Category::Food,
        Category::Science,
        Category::Others,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Characters => "characters",
            Category::Arts => "arts",
            Category::Design => "design",
            Category::Architecture => "architecture",
            Category::Animals => "animals",
            Category::NaturalScenery => "natural_scenery",
            Category::Transportation => "transportation",
            Category::Products => "products",
            Category::Plants => "plants",
            Category::Food => "food",
            Category::Science => "science",
            Category::Others => "others",
        }
    }

    /// Column title used in score tables.
    pub fn title(self) -> &'static str {
        match self {
            Category::Characters => "Characters",
            Category::Arts => "Arts",
            Category::Design => "Design",
            Category::Architecture => "Architecture",
            Category::Animals => "Animals",
            Category::NaturalScenery => "Natural Scenery",
            Category::Transportation => "Transportation",
            Category::Products => "Products",
            Category::Plants => "Plants",
            Category::Food => "Food",
            Category::Science => "Science",
            Category::Others => "Others",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Category::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown category {s:?}")))
    }
}

/// A prompt the generators are asked to render.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prompt {
    pub prompt_id: String,
    pub prompt_text: String,
    pub category: Category,
}

/// One image stand-in: its embedding plus the metadata the pipeline needs.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub sample_id: String,
    pub prompt_id: String,
    pub prompt_text: String,
    pub category: Category,
    /// Generator name, or `"real"` for photographs.
    pub source: String,
    pub embedding: EmbeddingVector,
    pub aesthetic_score: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    A,
    B,
}

impl Side {
    pub fn flip(self) -> Side {
        match self {
            Side::A => Side::B,
            Side::B => Side::A,
        }
    }
}

fn default_repeat() -> u32 {
    1
}

fn is_one(v: &u32) -> bool {
    *v == 1
}

/// One annotated pair of samples rendered for the same prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreferenceRecord {
    pub pair_id: String,
    pub prompt_id: String,
    pub sample_a: String,
    pub sample_b: String,
    #[serde(default)]
    pub votes_a: u32,
    #[serde(default)]
    pub votes_b: u32,
    /// Authoritative choice (e.g. the user's own pick); overrides votes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<Side>,
    /// How many times the pair enters a training epoch (golden-set duplication).
    #[serde(default = "default_repeat", skip_serializing_if = "is_one")]
    pub repeat: u32,
}

impl PreferenceRecord {
    pub fn new(
        pair_id: impl Into<String>,
        prompt_id: impl Into<String>,
        sample_a: impl Into<String>,
        sample_b: impl Into<String>,
        votes_a: u32,
        votes_b: u32,
    ) -> Self {
        PreferenceRecord {
            pair_id: pair_id.into(),
            prompt_id: prompt_id.into(),
            sample_a: sample_a.into(),
            sample_b: sample_b.into(),
            votes_a,
            votes_b,
            label: None,
            repeat: 1,
        }
    }

    pub fn with_label(mut self, label: Side) -> Self {
        self.label = Some(label);
        self
    }

    /// Same judgment with the two sides exchanged.
    pub fn swapped(&self) -> Self {
        PreferenceRecord {
            pair_id: self.pair_id.clone(),
            prompt_id: self.prompt_id.clone(),
            sample_a: self.sample_b.clone(),
            sample_b: self.sample_a.clone(),
            votes_a: self.votes_b,
            votes_b: self.votes_a,
            label: self.label.map(Side::flip),
            repeat: self.repeat,
        }
    }

    pub fn total_votes(&self) -> u32 {
        self.votes_a + self.votes_b
    }
}

/// Majority-vote fraction `max(a, b) / (a + b)`, in `[0.5, 1]`.
/// An authoritative label counts as unanimous.
pub fn agreement(record: &PreferenceRecord) -> Result<f64> {
    if record.label.is_some() {
        return Ok(1.0);
    }
    let total = record.total_votes();
    if total == 0 {
        return Err(Error::UnvotedPair {
            pair_id: record.pair_id.clone(),
        });
    }
    Ok(record.votes_a.max(record.votes_b) as f64 / total as f64)
}

/// The preferred side: the label when present, otherwise the vote majority.
pub fn winner(record: &PreferenceRecord) -> Result<Side> {
    if let Some(label) = record.label {
        return Ok(label);
    }
    match record.votes_a.cmp(&record.votes_b) {
        std::cmp::Ordering::Greater => Ok(Side::A),
        std::cmp::Ordering::Less => Ok(Side::B),
        std::cmp::Ordering::Equal if record.votes_a == 0 => Err(Error::UnvotedPair {
            pair_id: record.pair_id.clone(),
        }),
        std::cmp::Ordering::Equal => Err(Error::TiedPair {
            pair_id: record.pair_id.clone(),
            votes: record.votes_a,
        }),
    }
}
