//! Benchmark score tables and rank agreement with human judgments.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{Category, Sample};
use crate::error::{Error, Result};
use crate::reward::RewardHead;

/// Mean score and the number of samples behind it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub mean: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRow {
    pub cells: BTreeMap<Category, Cell>,
    /// Mean over every scored sample of the model, not over cell means.
    pub all: Cell,
}

/// Per-model, per-category mean scores. Empty cells are absent.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ModelScoreTable {
    pub rows: BTreeMap<String, ModelRow>,
}

/// One scored sample, as fed to [`ModelScoreTable::from_scores`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredSample {
    pub model: String,
    pub category: Category,
    pub sample_id: String,
    pub score: f64,
}

impl ModelScoreTable {
    /// Builds the table from scores. Sums run over samples sorted by id, so
    /// the table does not depend on input order.
    pub fn from_scores(mut scores: Vec<ScoredSample>) -> Result<Self> {
        if let Some(s) = scores.iter().find(|s| !s.score.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite score for sample {:?}",
                s.sample_id
            )));
        }
        scores.sort_by(|a, b| {
            (&a.model, &a.sample_id, a.category).cmp(&(&b.model, &b.sample_id, b.category))
        });
        let mut sums: BTreeMap<&str, (BTreeMap<Category, (f64, usize)>, f64, usize)> =
            BTreeMap::new();
        for s in &scores {
            let row = sums.entry(s.model.as_str()).or_default();
            let cell = row.0.entry(s.category).or_default();
            cell.0 += s.score;
            cell.1 += 1;
            row.1 += s.score;
            row.2 += 1;
        }
        let rows = sums
            .into_iter()
            .map(|(model, (cells, sum, n))| {
                let cells = cells
                    .into_iter()
                    .map(|(c, (s, k))| {
                        (
                            c,
                            Cell {
                                mean: s / k as f64,
                                count: k,
                            },
                        )
                    })
                    .collect();
                let all = Cell {
                    mean: sum / n as f64,
                    count: n,
                };
                (model.to_string(), ModelRow { cells, all })
            })
            .collect();
        Ok(ModelScoreTable { rows })
    }

    /// Categories with at least one cell, in canonical order.
    pub fn categories(&self) -> Vec<Category> {
        let set: BTreeSet<Category> = self
            .rows
            .values()
            .flat_map(|r| r.cells.keys().copied())
            .collect();
        set.into_iter().collect()
    }

    /// Per-model "All" means.
    pub fn all_scores(&self) -> BTreeMap<String, f64> {
        self.rows
            .iter()
            .map(|(m, r)| (m.clone(), r.all.mean))
            .collect()
    }

    /// Models ordered by "All" descending, ties by name.
    pub fn ranked_models(&self) -> Vec<&str> {
        let mut models: Vec<(&str, f64)> =
            self.rows.iter().map(|(m, r)| (m.as_str(), r.all.mean)).collect();
        models.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        models.into_iter().map(|(m, _)| m).collect()
    }

    /// `model,<categories...>,All` with two decimals; empty cells left blank.
    pub fn to_csv(&self) -> String {
        let cats = self.categories();
        let mut out = String::from("model");
        for c in &cats {
            out.push(',');
            out.push_str(c.title());
        }
        out.push_str(",All\n");
        for model in self.ranked_models() {
            let row = &self.rows[model];
            out.push_str(model);
            for c in &cats {
                out.push(',');
                if let Some(cell) = row.cells.get(c) {
                    out.push_str(&fixed2(cell.mean));
                }
            }
            out.push_str(&format!(",{}\n", fixed2(row.all.mean)));
        }
        out
    }
}

/// Two decimals, without a sign on values that round to zero.
fn fixed2(v: f64) -> String {
    let s = format!("{v:.2}");
    if s == "-0.00" {
        "0.00".into()
    } else {
        s
    }
}

/// Scores every sample's `mu` with `head` and tabulates by source model.
pub fn score_table(head: &RewardHead, samples: &[Sample]) -> Result<ModelScoreTable> {
    let scores = samples
        .par_iter()
        .map(|s| {
            Ok(ScoredSample {
                model: s.source.clone(),
                category: s.category,
                sample_id: s.sample_id.clone(),
                score: head.score(&s.embedding)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    ModelScoreTable::from_scores(scores)
}

fn check_pair(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::InvalidArgument(format!(
            "length mismatch: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::InvalidArgument("need at least two items".into()));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite score".into()));
    }
    Ok(())
}

/// Average ranks, doubled so they stay integral: a value tied across
/// positions `i..j` (1-based) gets `i + j`.
fn doubled_ranks(v: &[f64]) -> Vec<i64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0i64; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        for &k in &idx[i..=j] {
            ranks[k] = (i + 1 + j + 1) as i64;
        }
        i = j + 1;
    }
    ranks
}

/// Pearson correlation of integer vectors, accumulated exactly in `i128`.
pub(crate) fn pearson_exact(r: &[i64], s: &[i64]) -> Option<f64> {
    let n = r.len() as i128;
    let (mut sr, mut ss, mut srr, mut sss, mut srs) = (0i128, 0i128, 0i128, 0i128, 0i128);
    for (&a, &b) in r.iter().zip(s) {
        let (a, b) = (a as i128, b as i128);
        sr += a;
        ss += b;
        srr += a * a;
        sss += b * b;
        srs += a * b;
    }
    let vr = n * srr - sr * sr;
    let vs = n * sss - ss * ss;
    if vr == 0 || vs == 0 {
        return None;
    }
    Some((n * srs - sr * ss) as f64 / ((vr as f64) * (vs as f64)).sqrt())
}

/// Spearman's rho: Pearson correlation of tie-averaged ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    pearson_exact(&doubled_ranks(x), &doubled_ranks(y))
        .ok_or(Error::DegenerateRanking("spearman: a side has zero rank variance"))
}

fn tied_pairs(sorted: &[f64]) -> u64 {
    let mut total = 0u64;
    let mut run = 1u64;
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            total += run * (run - 1) / 2;
            run = 1;
        }
    }
    total + run * (run - 1) / 2
}

/// Merge sort that counts inversions (strictly greater element before smaller).
fn sort_counting_swaps(v: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = sort_counting_swaps(&mut v[..mid], &mut buf[..mid]);
    swaps += sort_counting_swaps(&mut v[mid..], &mut buf[mid..]);
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[j] < v[i] {
            buf[k] = v[j];
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            buf[k] = v[i];
            i += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&v[i..mid]);
    k += mid - i;
    buf[k..k + n - j].copy_from_slice(&v[j..n]);
    v.copy_from_slice(&buf[..n]);
    swaps
}

/// Integer pieces of tau-b: `(concordant - discordant, n0 - n1, n0 - n2)`
/// where `n1`, `n2` count pairs tied in `x`, `y`.
pub(crate) fn kendall_counts(x: &[f64], y: &[f64]) -> (i64, u64, u64) {
    let n = x.len() as u64;
    let n0 = n * (n - 1) / 2;
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(y[a].total_cmp(&y[b])));
    let xs: Vec<f64> = idx.iter().map(|&i| x[i]).collect();
    let mut ys: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
    let n1 = tied_pairs(&xs);
    // pairs tied in both x and y
    let mut n3 = 0u64;
    let mut run = 1u64;
    for k in 1..idx.len() {
        if xs[k] == xs[k - 1] && ys[k] == ys[k - 1] {
            run += 1;
        } else {
            n3 += run * (run - 1) / 2;
            run = 1;
        }
    }
    n3 += run * (run - 1) / 2;
    let mut buf = vec![0.0; ys.len()];
    let swaps = sort_counting_swaps(&mut ys, &mut buf);
    let n2 = tied_pairs(&ys);
    let diff = n0 as i64 - n1 as i64 - n2 as i64 + n3 as i64 - 2 * swaps as i64;
    (diff, n0 - n1, n0 - n2)
}

/// Kendall's tau-b, in `O(n log n)`.
pub fn kendall(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    let (diff, dx, dy) = kendall_counts(x, y);
    if dx == 0 || dy == 0 {
        return Err(Error::DegenerateRanking("kendall: a side is entirely tied"));
    }
    Ok(diff as f64 / ((dx as f64) * (dy as f64)).sqrt())
}

fn min_max(v: &[f64]) -> Result<Vec<f64>> {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi == lo {
        return Err(Error::DegenerateRanking("normalized_mse: constant vector"));
    }
    Ok(v.iter().map(|x| (x - lo) / (hi - lo)).collect())
}

/// Mean squared difference after min-max scaling each vector to `[0, 1]`
/// independently. This definition is ours.
pub fn normalized_mse(metric: &[f64], human: &[f64]) -> Result<f64> {
    check_pair(metric, human)?;
    let (a, b) = (min_max(metric)?, min_max(human)?);
    Ok(a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64)
}

pub const NORMALIZED_MSE_DEFINITION: &str =
    "project-defined: mean squared difference after independent min-max scaling of both score vectors to [0, 1]";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankAgreement {
    pub spearman: f64,
    pub kendall: f64,
    pub normalized_mse: f64,
}

/// Compares two per-model score maps on their common model set, which must
/// be the whole of both.
pub fn rank_agreement(
    metric: &BTreeMap<String, f64>,
    human: &BTreeMap<String, f64>,
) -> Result<RankAgreement> {
    let a: BTreeSet<&String> = metric.keys().collect();
    let b: BTreeSet<&String> = human.keys().collect();
    if a != b {
        return Err(Error::ModelSetMismatch {
            symmetric_difference: a.symmetric_difference(&b).map(|s| s.to_string()).collect(),
        });
    }
    let x: Vec<f64> = metric.values().copied().collect();
    let y: Vec<f64> = human.values().copied().collect();
    Ok(RankAgreement {
        spearman: spearman(&x, &y)?,
        kendall: kendall(&x, &y)?,
        normalized_mse: normalized_mse(&x, &y)?,
    })
}
