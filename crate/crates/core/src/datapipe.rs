//! Corpus construction: ingestion and validation, agreement filtering,
//! per-category aesthetic selection, category-distribution alignment and
//! same-prompt pair building.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::{agreement, Category, EmbeddingVector, PreferenceRecord, Sample};
use crate::error::{Error, Result};
use crate::io::{read_jsonl, EmbeddingMatrix, SampleRow};
use crate::rng::Rng;

/// A fully joined in-memory corpus.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub dim: usize,
    pub samples: Vec<Sample>,
    pub records: Vec<PreferenceRecord>,
}

impl Corpus {
    pub fn sample_index(&self) -> HashMap<&str, &Sample> {
        self.samples
            .iter()
            .map(|s| (s.sample_id.as_str(), s))
            .collect()
    }
}

/// Loads `samples.jsonl`, `annotations.jsonl` (optional) and the `PRNK`
/// matrix, joins them and checks every cross reference.
pub fn ingest(
    samples_path: impl AsRef<Path>,
    annotations_path: Option<&Path>,
    embeddings_path: impl AsRef<Path>,
) -> Result<Corpus> {
    let samples_path = samples_path.as_ref();
    let matrix = EmbeddingMatrix::read(embeddings_path.as_ref())?;
    let rows: Vec<(usize, SampleRow)> = read_jsonl(samples_path)?;

    let mut seen = HashMap::new();
    let mut samples = Vec::with_capacity(rows.len());
    for (line, row) in rows {
        if let Some(first) = seen.insert(row.sample_id.clone(), line) {
            return Err(Error::parse(
                samples_path,
                line,
                format!("duplicate sample_id {:?} (first on line {first})", row.sample_id),
            ));
        }
        let values = matrix.row(row.embedding_row).ok_or_else(|| {
            Error::parse(
                samples_path,
                line,
                format!(
                    "embedding_row {} out of range (matrix has {} rows)",
                    row.embedding_row,
                    matrix.count()
                ),
            )
        })?;
        let embedding = EmbeddingVector::new(values.to_vec())
            .map_err(|e| Error::parse(samples_path, line, e))?;
        if let Some(score) = row.aesthetic_score {
            if !score.is_finite() {
                return Err(Error::parse(samples_path, line, "non-finite aesthetic_score"));
            }
        }
        samples.push(row.into_sample(embedding));
    }

    let mut records = Vec::new();
    if let Some(path) = annotations_path {
        let by_id: HashMap<&str, &Sample> =
            samples.iter().map(|s| (s.sample_id.as_str(), s)).collect();
        let mut pair_ids = HashMap::new();
        for (line, rec) in read_jsonl::<PreferenceRecord>(path)? {
            if let Some(first) = pair_ids.insert(rec.pair_id.clone(), line) {
                return Err(Error::parse(
                    path,
                    line,
                    format!("duplicate pair_id {:?} (first on line {first})", rec.pair_id),
                ));
            }
            validate_record(&rec, &by_id).map_err(|m| Error::parse(path, line, m))?;
            records.push(rec);
        }
    }
    Ok(Corpus {
        dim: matrix.dim(),
        samples,
        records,
    })
}

fn validate_record(
    rec: &PreferenceRecord,
    by_id: &HashMap<&str, &Sample>,
) -> std::result::Result<(), String> {
    let a = by_id
        .get(rec.sample_a.as_str())
        .ok_or_else(|| format!("unknown sample_id {:?}", rec.sample_a))?;
    let b = by_id
        .get(rec.sample_b.as_str())
        .ok_or_else(|| format!("unknown sample_id {:?}", rec.sample_b))?;
    if rec.sample_a == rec.sample_b {
        return Err(format!("pair {:?} compares a sample with itself", rec.pair_id));
    }
    if a.prompt_id != rec.prompt_id || b.prompt_id != rec.prompt_id {
        return Err(format!(
            "pair {:?} spans prompts ({:?}, {:?}) but claims {:?}",
            rec.pair_id, a.prompt_id, b.prompt_id, rec.prompt_id
        ));
    }
    if rec.total_votes() == 0 && rec.label.is_none() {
        return Err(format!("unvoted pair {:?}", rec.pair_id));
    }
    if rec.repeat == 0 {
        return Err(format!("pair {:?} has repeat 0", rec.pair_id));
    }
    Ok(())
}

/// Keeps records whose agreement is at least `threshold`, in input order.
/// Labelled records count as unanimous; unvoted ones never pass.
pub fn filter_by_agreement(records: &[PreferenceRecord], threshold: f64) -> Vec<PreferenceRecord> {
    records
        .iter()
        .filter(|r| agreement(r).is_ok_and(|a| a >= threshold))
        .cloned()
        .collect()
}

/// `ceil(fraction × n)`, treating products within 1e-9 of an integer as
/// that integer so `0.1 × 30` keeps 3, not 4.
pub fn top_count(fraction: f64, n: usize) -> usize {
    let x = fraction * n as f64;
    let r = x.round();
    if (x - r).abs() < 1e-9 {
        r as usize
    } else {
        x.ceil() as usize
    }
}

/// Per category: drop samples without a score or scoring below `floor`,
/// then keep the `top_count(top_fraction, remaining)` best, breaking ties at
/// the cut by ascending `sample_id`. Output preserves input order.
pub fn aesthetic_select(samples: &[Sample], floor: f64, top_fraction: f64) -> Result<Vec<Sample>> {
    if !(top_fraction > 0.0 && top_fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "top_fraction must be in (0, 1], got {top_fraction}"
        )));
    }
    let mut by_category: BTreeMap<Category, Vec<(f64, &str, usize)>> = BTreeMap::new();
    for (i, s) in samples.iter().enumerate() {
        if let Some(score) = s.aesthetic_score {
            if score >= floor {
                by_category
                    .entry(s.category)
                    .or_default()
                    .push((score, s.sample_id.as_str(), i));
            }
        }
    }
    let mut keep = vec![false; samples.len()];
    for group in by_category.values_mut() {
        group.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
        for &(_, _, i) in group.iter().take(top_count(top_fraction, group.len())) {
            keep[i] = true;
        }
    }
    Ok(samples
        .iter()
        .zip(keep)
        .filter_map(|(s, k)| k.then(|| s.clone()))
        .collect())
}

/// Target share of each category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<Category, f64>", into = "BTreeMap<Category, f64>")]
pub struct CategoryDistribution(BTreeMap<Category, f64>);

impl CategoryDistribution {
    pub fn new(fractions: BTreeMap<Category, f64>) -> Result<Self> {
        if fractions.values().any(|f| !f.is_finite() || *f < 0.0) {
            return Err(Error::InvalidArgument(
                "category fractions must be finite and non-negative".into(),
            ));
        }
        let total: f64 = fractions.values().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "category fractions sum to {total}, expected 1"
            )));
        }
        Ok(CategoryDistribution(fractions))
    }

    pub fn uniform(categories: &[Category]) -> Result<Self> {
        let share = 1.0 / categories.len() as f64;
        Self::new(categories.iter().map(|&c| (c, share)).collect())
    }

    pub fn fractions(&self) -> &BTreeMap<Category, f64> {
        &self.0
    }

    /// Largest-remainder apportionment of `total`. Remainders equal to 1e-9
    /// go to the earlier category.
    pub fn allocate(&self, total: usize) -> BTreeMap<Category, usize> {
        let mut counts = BTreeMap::new();
        let mut remainders = Vec::new();
        let mut assigned = 0;
        for (&c, &f) in &self.0 {
            let quota = f * total as f64;
            let base = quota.floor();
            counts.insert(c, base as usize);
            assigned += base as usize;
            remainders.push((((quota - base) * 1e9).round() as i64, c));
        }
        remainders.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        for &(_, c) in remainders.iter().take(total.saturating_sub(assigned)) {
            *counts.get_mut(&c).unwrap() += 1;
        }
        counts
    }
}

impl TryFrom<BTreeMap<Category, f64>> for CategoryDistribution {
    type Error = Error;

    fn try_from(m: BTreeMap<Category, f64>) -> Result<Self> {
        CategoryDistribution::new(m)
    }
}

impl From<CategoryDistribution> for BTreeMap<Category, f64> {
    fn from(d: CategoryDistribution) -> Self {
        d.0
    }
}

/// Draws `allocate(total)[c]` samples without replacement from each
/// category. Each category draws from its own sub-stream of `rng` over its
/// samples in `sample_id` order, so the result depends on the seed and the
/// sample set but not on input order. Output is sorted by category, then id.
pub fn align_distribution(
    samples: &[Sample],
    target: &CategoryDistribution,
    total: usize,
    rng: &Rng,
) -> Result<Vec<Sample>> {
    let mut pools: BTreeMap<Category, Vec<&Sample>> = BTreeMap::new();
    for s in samples {
        pools.entry(s.category).or_default().push(s);
    }
    let allocation = target.allocate(total);
    for (&c, &need) in &allocation {
        let available = pools.get(&c).map_or(0, Vec::len);
        if need > available {
            return Err(Error::Shortfall {
                category: c.to_string(),
                needed: need,
                available,
                shortfall: need - available,
            });
        }
    }
    let mut out = Vec::with_capacity(total);
    for (&c, &need) in &allocation {
        if need == 0 {
            continue;
        }
        let pool = pools.get_mut(&c).unwrap();
        pool.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
        let mut order: Vec<usize> = (0..pool.len()).collect();
        rng.substream(c.index() as u64).shuffle(&mut order);
        let mut chosen: Vec<&Sample> = order[..need].iter().map(|&i| pool[i]).collect();
        chosen.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
        out.extend(chosen.into_iter().cloned());
    }
    Ok(out)
}

/// All unordered same-prompt pairs, `sample_a < sample_b` by id, with no
/// votes yet. Pair ids are `prompt_id:sample_a:sample_b`.
pub fn build_pairs(samples: &[Sample]) -> Vec<PreferenceRecord> {
    let mut by_prompt: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for s in samples {
        by_prompt
            .entry(s.prompt_id.as_str())
            .or_default()
            .push(s.sample_id.as_str());
    }
    let mut pairs = Vec::new();
    for (prompt, mut ids) in by_prompt {
        ids.sort_unstable();
        ids.dedup();
        for i in 0..ids.len() {
            for j in i + 1..ids.len() {
                pairs.push(PreferenceRecord::new(
                    format!("{prompt}:{}:{}", ids[i], ids[j]),
                    prompt,
                    ids[i],
                    ids[j],
                    0,
                    0,
                ));
            }
        }
    }
    pairs
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct CategoryStats {
    pub samples: usize,
    pub pairs: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_agreement: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct CorpusStats {
    pub sample_count: usize,
    pub pair_count: usize,
    /// Mean agreement over every voted or labelled record; absent when there are none.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub overall_mean_agreement: Option<f64>,
    pub per_category: BTreeMap<Category, CategoryStats>,
}

/// Counts and mean agreement. A record contributes to a category's mean
/// when both of its samples belong to that category.
pub fn corpus_stats(samples: &[Sample], records: &[PreferenceRecord]) -> CorpusStats {
    let category_of: HashMap<&str, Category> = samples
        .iter()
        .map(|s| (s.sample_id.as_str(), s.category))
        .collect();
    let mut per: BTreeMap<Category, (CategoryStats, f64, usize)> = BTreeMap::new();
    for s in samples {
        per.entry(s.category).or_default().0.samples += 1;
    }
    let (mut sum, mut n) = (0.0, 0usize);
    for r in records {
        let ag = agreement(r).ok();
        if let Some(a) = ag {
            sum += a;
            n += 1;
        }
        let (ca, cb) = (
            category_of.get(r.sample_a.as_str()),
            category_of.get(r.sample_b.as_str()),
        );
        if let (Some(ca), Some(cb)) = (ca, cb) {
            if ca == cb {
                let entry = per.entry(*ca).or_default();
                entry.0.pairs += 1;
                if let Some(a) = ag {
                    entry.1 += a;
                    entry.2 += 1;
                }
            }
        }
    }
    let per_category = per
        .into_iter()
        .map(|(c, (mut st, s, k))| {
            st.mean_agreement = (k > 0).then(|| s / k as f64);
            (c, st)
        })
        .collect();
    CorpusStats {
        sample_count: samples.len(),
        pair_count: records.len(),
        overall_mean_agreement: (n > 0).then(|| sum / n as f64),
        per_category,
    }
}

/// Side-by-side convergence summary of several corpora, one row each:
/// `dataset,samples,pairs,convergence` with convergence as a percentage.
pub fn convergence_report(rows: &[(&str, &CorpusStats)]) -> String {
    let mut out = String::from("dataset,samples,pairs,convergence\n");
    for (name, st) in rows {
        let conv = st
            .overall_mean_agreement
            .map_or_else(String::new, |m| format!("{:.1}%", m * 100.0));
        out.push_str(&format!("{name},{},{},{conv}\n", st.sample_count, st.pair_count));
    }
    out
}

/// Distinct-id check used by callers that assemble corpora in memory.
pub fn assert_unique_ids(samples: &[Sample]) -> Result<()> {
    let mut seen = HashSet::new();
    for s in samples {
        if !seen.insert(s.sample_id.as_str()) {
            return Err(Error::InvalidArgument(format!(
                "duplicate sample_id {:?}",
                s.sample_id
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Side;

    fn sample(id: &str, prompt: &str, cat: Category, score: Option<f64>) -> Sample {
        Sample {
            sample_id: id.into(),
            prompt_id: prompt.into(),
            prompt_text: String::new(),
            category: cat,
            source: "real".into(),
            embedding: EmbeddingVector::new(vec![0.0]).unwrap(),
            aesthetic_score: score,
        }
    }

    #[test]
    fn filter_examples() {
        let all = PreferenceRecord::new("a", "p", "x", "y", 19, 0);
        let most = PreferenceRecord::new("b", "p", "x", "y", 18, 1);
        let split = PreferenceRecord::new("c", "p", "x", "y", 5, 5);
        let labelled = PreferenceRecord::new("d", "p", "x", "y", 0, 0).with_label(Side::B);
        let recs = vec![all.clone(), most.clone(), split.clone(), labelled.clone()];
        let kept = filter_by_agreement(&recs, 0.95);
        assert_eq!(kept, vec![all.clone(), labelled.clone()]);
        assert_eq!(filter_by_agreement(&recs, 0.5), recs);
        assert_eq!(filter_by_agreement(&kept, 0.95), kept);
    }

    #[test]
    fn top_count_tolerates_representation_error() {
        assert_eq!(top_count(0.1, 100), 10);
        assert_eq!(top_count(0.1, 30), 3);
        assert_eq!(top_count(0.1, 50), 5);
        assert_eq!(top_count(0.1, 3), 1);
        assert_eq!(top_count(1.0, 7), 7);
        assert_eq!(top_count(0.1, 0), 0);
    }

    #[test]
    fn aesthetic_floor_drops_regardless_of_rank() {
        let s = vec![
            sample("a", "p", Category::Food, Some(3.9)),
            sample("b", "p", Category::Food, Some(4.0)),
            sample("c", "p", Category::Food, None),
        ];
        let kept = aesthetic_select(&s, 4.0, 1.0).unwrap();
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].sample_id, "b");
    }

    #[test]
    fn aesthetic_selection_is_per_category() {
        let mut s = Vec::new();
        for i in 0..100 {
            s.push(sample(&format!("f{i:03}"), "p", Category::Food, Some(5.0 + i as f64)));
        }
        for i in 0..50 {
            s.push(sample(&format!("a{i:03}"), "p", Category::Arts, Some(4.0 + i as f64 / 100.0)));
        }
        let kept = aesthetic_select(&s, 4.0, 0.1).unwrap();
        let food = kept.iter().filter(|x| x.category == Category::Food).count();
        let arts = kept.iter().filter(|x| x.category == Category::Arts).count();
        assert_eq!((food, arts), (10, 5));
        assert!(kept.iter().any(|x| x.sample_id == "a049"));
    }

    #[test]
    fn aesthetic_ties_at_cut_break_by_id() {
        let s = vec![
            sample("z", "p", Category::Food, Some(5.0)),
            sample("m", "p", Category::Food, Some(5.0)),
            sample("a", "p", Category::Food, Some(5.0)),
        ];
        let kept = aesthetic_select(&s, 0.0, 0.5).unwrap();
        let ids: Vec<_> = kept.iter().map(|x| x.sample_id.as_str()).collect();
        assert_eq!(ids, vec!["m", "a"]);
    }

    #[test]
    fn largest_remainder_examples() {
        let half = CategoryDistribution::uniform(&[Category::Arts, Category::Food]).unwrap();
        let alloc = half.allocate(10);
        assert_eq!(alloc[&Category::Arts], 5);
        assert_eq!(alloc[&Category::Food], 5);

        let skew = CategoryDistribution::new(BTreeMap::from([
            (Category::Arts, 0.55),
            (Category::Food, 0.45),
        ]))
        .unwrap();
        let alloc = skew.allocate(10);
        assert_eq!((alloc[&Category::Arts], alloc[&Category::Food]), (6, 4));

        let thirds = CategoryDistribution::uniform(&[
            Category::Arts,
            Category::Food,
            Category::Plants,
        ])
        .unwrap();
        assert_eq!(thirds.allocate(10).values().sum::<usize>(), 10);
        assert!(CategoryDistribution::new(BTreeMap::from([(Category::Arts, 0.7)])).is_err());
    }

    #[test]
    fn align_reports_shortfall() {
        let mut s = Vec::new();
        for i in 0..5 {
            s.push(sample(&format!("a{i}"), "p", Category::Arts, None));
        }
        for i in 0..10 {
            s.push(sample(&format!("f{i}"), "p", Category::Food, None));
        }
        let target = CategoryDistribution::new(BTreeMap::from([
            (Category::Arts, 0.7),
            (Category::Food, 0.3),
        ]))
        .unwrap();
        let err = align_distribution(&s, &target, 10, &Rng::new(1)).unwrap_err();
        assert!(err.to_string().contains("shortfall 2"), "{err}");
    }

    #[test]
    fn align_is_deterministic_and_order_free() {
        let mut s: Vec<Sample> = (0..30)
            .map(|i| sample(&format!("s{i:02}"), "p", if i % 2 == 0 { Category::Arts } else { Category::Food }, None))
            .collect();
        let target = CategoryDistribution::uniform(&[Category::Arts, Category::Food]).unwrap();
        let a = align_distribution(&s, &target, 10, &Rng::new(9)).unwrap();
        s.reverse();
        let b = align_distribution(&s, &target, 10, &Rng::new(9)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 10);
    }

    #[test]
    fn pairs_examples() {
        let two = vec![sample("b", "p", Category::Arts, None), sample("a", "p", Category::Arts, None)];
        let p = build_pairs(&two);
        assert_eq!(p.len(), 1);
        assert_eq!((p[0].sample_a.as_str(), p[0].sample_b.as_str()), ("a", "b"));

        let five: Vec<_> = (0..5).map(|i| sample(&format!("s{i}"), "p", Category::Arts, None)).collect();
        assert_eq!(build_pairs(&five).len(), 10);

        let mut six: Vec<_> = (0..3).map(|i| sample(&format!("x{i}"), "p1", Category::Arts, None)).collect();
        six.extend((0..3).map(|i| sample(&format!("y{i}"), "p2", Category::Arts, None)));
        let p = build_pairs(&six);
        assert_eq!(p.len(), 6);
        assert!(p.iter().all(|r| r.sample_a[..1] == r.sample_b[..1]));
    }

    #[test]
    fn stats_examples() {
        let s = vec![sample("x", "p", Category::Arts, None), sample("y", "p", Category::Arts, None)];
        let r = vec![PreferenceRecord::new("r", "p", "x", "y", 8, 1)];
        let st = corpus_stats(&s, &r);
        assert!((st.overall_mean_agreement.unwrap() - 8.0 / 9.0).abs() < 1e-15);
        assert_eq!(st.per_category[&Category::Arts].pairs, 1);
        let empty = corpus_stats(&s, &[]);
        assert_eq!(empty.overall_mean_agreement, None);
        assert_eq!(empty.per_category[&Category::Arts].mean_agreement, None);
        let json = serde_json::to_value(&empty).unwrap();
        assert!(json.get("overall_mean_agreement").is_none());
    }

    #[test]
    fn convergence_report_layout() {
        let v2 = CorpusStats {
            sample_count: 100,
            pair_count: 50,
            overall_mean_agreement: Some(0.599),
            ..Default::default()
        };
        let v3 = CorpusStats {
            sample_count: 200,
            pair_count: 80,
            overall_mean_agreement: Some(0.765),
            ..Default::default()
        };
        let report = convergence_report(&[("HPDv2", &v2), ("HPDv3", &v3)]);
        assert_eq!(
            report,
            "dataset,samples,pairs,convergence\nHPDv2,100,50,59.9%\nHPDv3,200,80,76.5%\n"
        );
    }
}
