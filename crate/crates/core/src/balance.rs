//! Class balancing: SMOTE over numeric features and synonym-replacement
//! augmentation over raw text.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayView1, Axis};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::corpus::LabeledReview;
use crate::embedding::{EmbeddingRecord, EmbeddingStore, Provenance, StoreError, StoreMode};
use crate::schemes::{ClassLabel, SentimentScheme};

pub const DEFAULT_K: usize = 5;
pub const DEFAULT_RATE: f64 = 0.3;

/// Function words never replaced by augmentation.
pub const STOPWORDS: &[&str] = &[
    "a", "about", "after", "all", "also", "an", "and", "any", "are", "as", "at", "be", "been", "but", "by", "can",
    "could", "did", "do", "does", "for", "from", "had", "has", "have", "he", "her", "him", "his", "how", "i", "if",
    "in", "into", "is", "it", "its", "me", "my", "no", "not", "of", "on", "or", "our", "she", "so", "than", "that",
    "the", "their", "them", "then", "there", "these", "they", "this", "those", "to", "too", "us", "very", "was",
    "we", "were", "what", "when", "which", "who", "will", "with", "would", "you", "your",
];

#[derive(Debug, Error)]
pub enum BalanceError {
    #[error("class {class} has {count} sample(s); at least 2 are needed to oversample")]
    InsufficientSamples { class: usize, count: usize },
    #[error("class {class} already has {count} samples, above target {target}")]
    InvalidTarget { class: usize, count: usize, target: usize },
    #[error("neighbour count k must be at least 1")]
    InvalidK,
    #[error("replacement rate {0} is outside (0, 1]")]
    InvalidRate(f64),
    #[error("{0} rows but {1} labels")]
    LengthMismatch(usize, usize),
    #[error("label {label} is outside the {classes}-class scheme")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("scheme {0} does not match {1}")]
    SchemeMismatch(SentimentScheme, SentimentScheme),
    #[error("feature width {0} does not match {1}")]
    WidthMismatch(usize, usize),
    #[error("word table is empty")]
    EmptyTable,
    #[error("word table line {line}: {reason}")]
    Table { line: usize, reason: String },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// Feature rows with aligned class indices. Rows added by balancing are
/// flagged in `synthetic`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    scheme: SentimentScheme,
    rows: Array2<f64>,
    labels: Vec<usize>,
    synthetic: Vec<bool>,
}

impl FeatureMatrix {
    pub fn new(scheme: SentimentScheme, rows: Array2<f64>, labels: Vec<usize>) -> Result<Self, BalanceError> {
        if rows.nrows() != labels.len() {
            return Err(BalanceError::LengthMismatch(rows.nrows(), labels.len()));
        }
        let classes = scheme.arity();
        if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
            return Err(BalanceError::LabelOutOfRange { label, classes });
        }
        let synthetic = vec![false; labels.len()];
        Ok(Self { scheme, rows, labels, synthetic })
    }

    /// Pooled vectors of every record.
    pub fn from_store(store: &EmbeddingStore, scheme: SentimentScheme) -> Result<Self, BalanceError> {
        let d = store.dim();
        let mut rows = Array2::zeros((store.len(), d));
        for (mut row, r) in rows.axis_iter_mut(Axis(0)).zip(store.records()) {
            row.iter_mut().zip(r.pooled_vector()).for_each(|(x, &v)| *x = v as f64);
        }
        Self::new(scheme, rows, store.labels())
    }

    /// A pooled store; original rows keep the ids of `source`, synthetic
    /// rows get `smote-<class>-<n>`.
    pub fn to_store(&self, source: &EmbeddingStore) -> Result<EmbeddingStore, BalanceError> {
        let originals = self.synthetic.iter().filter(|s| !**s).count();
        if originals != source.len() {
            return Err(BalanceError::LengthMismatch(originals, source.len()));
        }
        let mut per_class = vec![0usize; self.scheme.arity()];
        let mut records = Vec::with_capacity(self.len());
        let mut orig = source.records().iter();
        for (i, row) in self.rows.axis_iter(Axis(0)).enumerate() {
            let label = self.labels[i];
            let id = if self.synthetic[i] {
                per_class[label] += 1;
                format!("smote-{label}-{:06}", per_class[label])
            } else {
                orig.next().expect("counted above").id.clone()
            };
            records.push(EmbeddingRecord::pooled(id, label, row.iter().map(|&x| x as f32).collect()));
        }
        Ok(EmbeddingStore::new(self.width(), StoreMode::Pooled, records, Provenance::InMemory)?)
    }

    pub fn scheme(&self) -> SentimentScheme {
        self.scheme
    }

    pub fn rows(&self) -> &Array2<f64> {
        &self.rows
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.rows.row(i)
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_labels(&self) -> Vec<ClassLabel> {
        self.labels.iter().map(|&l| ClassLabel::new(self.scheme, l).expect("checked on construction")).collect()
    }

    pub fn synthetic(&self) -> &[bool] {
        &self.synthetic
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn width(&self) -> usize {
        self.rows.ncols()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.scheme.arity()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Size of the largest class.
    pub fn majority_count(&self) -> usize {
        self.class_counts().into_iter().max().unwrap_or(0)
    }
}

/// Originals first, unchanged, then the additions flagged synthetic.
pub fn merge_balanced(original: &FeatureMatrix, additions: &FeatureMatrix) -> Result<FeatureMatrix, BalanceError> {
    if original.scheme != additions.scheme {
        return Err(BalanceError::SchemeMismatch(original.scheme, additions.scheme));
    }
    if additions.is_empty() {
        return Ok(original.clone());
    }
    if original.width() != additions.width() {
        return Err(BalanceError::WidthMismatch(original.width(), additions.width()));
    }
    let rows = ndarray::concatenate(Axis(0), &[original.rows.view(), additions.rows.view()])
        .expect("widths agree");
    let mut labels = original.labels.clone();
    labels.extend_from_slice(&additions.labels);
    let mut synthetic = original.synthetic.clone();
    synthetic.extend(std::iter::repeat_n(true, additions.len()));
    Ok(FeatureMatrix { scheme: original.scheme, rows, labels, synthetic })
}

fn squared_distance(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// For each member, the positions (within `members`) of its `k` nearest
/// other members by Euclidean distance; ties go to the lower position.
fn nearest_neighbours(rows: &Array2<f64>, members: &[usize], k: usize) -> Vec<Vec<usize>> {
    members
        .iter()
        .enumerate()
        .map(|(a, &ra)| {
            let mut others: Vec<(f64, usize)> = members
                .iter()
                .enumerate()
                .filter(|&(b, _)| b != a)
                .map(|(b, &rb)| (squared_distance(rows.row(ra), rows.row(rb)), b))
                .collect();
            others.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
            others.into_iter().take(k).map(|(_, b)| b).collect()
        })
        .collect()
}

/// The synthetic rows SMOTE would add to bring every class to `target`.
///
/// Each row is `x + λ(x_nn − x)` for a uniformly drawn class member `x`, one
/// of its `k` nearest same-class neighbours `x_nn` and `λ ~ U[0, 1)`. Each
/// class draws from its own stream of the seed, so classes are independent.
pub fn smote_synthesize(features: &FeatureMatrix, k: usize, target: usize, seed: u64) -> Result<FeatureMatrix, BalanceError> {
    if k == 0 {
        return Err(BalanceError::InvalidK);
    }
    let counts = features.class_counts();
    for (class, &count) in counts.iter().enumerate() {
        if count > target {
            return Err(BalanceError::InvalidTarget { class, count, target });
        }
    }
    for (class, &count) in counts.iter().enumerate() {
        if count < target && count < 2 {
            return Err(BalanceError::InsufficientSamples { class, count });
        }
    }
    let d = features.width();
    let per_class: Vec<(usize, Vec<f64>)> = (0..counts.len())
        .into_par_iter()
        .map(|class| {
            let needed = target - counts[class];
            if needed == 0 {
                return (class, Vec::new());
            }
            let members: Vec<usize> = (0..features.len()).filter(|&i| features.labels[i] == class).collect();
            let neighbours = nearest_neighbours(&features.rows, &members, k);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(class as u64);
            let mut out = Vec::with_capacity(needed * d);
            for _ in 0..needed {
                let a = rng.random_range(0..members.len());
                let b = neighbours[a][rng.random_range(0..neighbours[a].len())];
                let lambda: f64 = rng.random();
                let x = features.rows.row(members[a]);
                let nn = features.rows.row(members[b]);
                out.extend(x.iter().zip(nn.iter()).map(|(xi, ni)| xi + lambda * (ni - xi)));
            }
            (class, out)
        })
        .collect();
    let mut labels = Vec::new();
    let mut values = Vec::new();
    for (class, rows) in per_class {
        labels.extend(std::iter::repeat_n(class, rows.len() / d.max(1)));
        values.extend(rows);
    }
    let rows = Array2::from_shape_vec((labels.len(), d), values).expect("row-major synthetic rows");
    let synthetic = vec![true; labels.len()];
    Ok(FeatureMatrix { scheme: features.scheme, rows, labels, synthetic })
}

/// Oversamples every class to `target` rows; see [`smote_synthesize`].
pub fn smote_resample(features: &FeatureMatrix, k: usize, target: usize, seed: u64) -> Result<FeatureMatrix, BalanceError> {
    merge_balanced(features, &smote_synthesize(features, k, target, seed)?)
}

/// Word vectors for synonym lookup, one `word v1 .. vd` per line.
#[derive(Debug, Clone)]
pub struct WordTable {
    words: Vec<String>,
    index: HashMap<String, usize>,
    vectors: Array2<f64>,
    norms: Vec<f64>,
}

impl WordTable {
    pub fn parse(text: &str) -> Result<Self, BalanceError> {
        let mut words = Vec::new();
        let mut index = HashMap::new();
        let mut values = Vec::new();
        let mut dim = None;
        for (n, line) in text.lines().enumerate() {
            let line_no = n + 1;
            let mut fields = line.split_whitespace();
            let Some(word) = fields.next() else { continue };
            let vector: Vec<f64> = fields
                .map(|f| f.parse::<f64>().ok().filter(|v| v.is_finite()))
                .collect::<Option<_>>()
                .ok_or_else(|| BalanceError::Table { line: line_no, reason: "bad number".into() })?;
            match dim {
                None if vector.is_empty() => {
                    return Err(BalanceError::Table { line: line_no, reason: "no vector".into() })
                }
                None => dim = Some(vector.len()),
                Some(d) if d != vector.len() => {
                    return Err(BalanceError::Table { line: line_no, reason: format!("width {} != {d}", vector.len()) })
                }
                _ => {}
            }
            let word = word.to_lowercase();
            if index.insert(word.clone(), words.len()).is_some() {
                return Err(BalanceError::Table { line: line_no, reason: format!("duplicate word {word:?}") });
            }
            words.push(word);
            values.extend(vector);
        }
        let Some(d) = dim else { return Err(BalanceError::EmptyTable) };
        let vectors = Array2::from_shape_vec((words.len(), d), values).expect("rows checked");
        let norms = vectors.axis_iter(Axis(0)).map(|r| r.dot(&r).sqrt()).collect();
        Ok(Self { words, index, vectors, norms })
    }

    pub fn load(path: &Path) -> Result<Self, BalanceError> {
        let text = fs::read_to_string(path).map_err(|source| BalanceError::Io { path: path.display().to_string(), source })?;
        Self::parse(&text)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn vector(&self, word: &str) -> Option<ArrayView1<'_, f64>> {
        self.index.get(word).map(|&i| self.vectors.row(i))
    }

    /// Cosine similarity between two table rows; 0 if either is the zero vector.
    fn similarity(&self, a: usize, b: usize) -> f64 {
        let denom = self.norms[a] * self.norms[b];
        if denom == 0.0 {
            0.0
        } else {
            self.vectors.row(a).dot(&self.vectors.row(b)) / denom
        }
    }

    /// Most cosine-similar other word; ties go to the earlier table entry.
    pub fn nearest(&self, word: &str) -> Option<&str> {
        let &i = self.index.get(word)?;
        let mut best: Option<(usize, f64)> = None;
        for j in (0..self.words.len()).filter(|&j| j != i) {
            let s = self.similarity(i, j);
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((j, s));
            }
        }
        best.map(|(j, _)| self.words[j].as_str())
    }
}

/// Texts in, augmented texts out, with `mapping[i]` the output index of
/// input `i` (always `i`).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AugmentationBatch {
    pub v_in: Vec<String>,
    pub v_aug: Vec<String>,
    pub mapping: Vec<usize>,
}

/// Splits a whitespace token into leading punctuation, a word core and
/// trailing punctuation.
fn split_token(token: &str) -> (&str, &str, &str) {
    let start = token.find(|c: char| c.is_alphanumeric()).unwrap_or(token.len());
    let end = token.rfind(|c: char| c.is_alphanumeric()).map_or(start, |i| i + token[i..].chars().next().map_or(1, char::len_utf8));
    (&token[..start], &token[start..end], &token[end..])
}

fn match_case(original: &str, replacement: &str) -> String {
    if original.chars().next().is_some_and(char::is_uppercase) {
        let mut chars = replacement.chars();
        chars.next().map(|c| c.to_uppercase().chain(chars).collect()).unwrap_or_default()
    } else {
        replacement.to_string()
    }
}

fn augment_one(text: &str, table: &WordTable, rate: f64, rng: &mut ChaCha8Rng) -> String {
    let tokens: Vec<&str> = text.split_whitespace().collect();
    let candidates: Vec<(usize, &str)> = tokens
        .iter()
        .enumerate()
        .filter_map(|(i, tok)| {
            let core = split_token(tok).1.to_lowercase();
            let usable = !STOPWORDS.contains(&core.as_str()) && table.contains(&core);
            usable.then(|| (i, table.nearest(&core)))
        })
        .filter_map(|(i, n)| n.map(|n| (i, n)))
        .collect();
    let n = ((rate * candidates.len() as f64).ceil() as usize).min(candidates.len());
    let mut out: Vec<String> = tokens.iter().map(|t| t.to_string()).collect();
    let mut chosen = sample(rng, candidates.len(), n).into_vec();
    chosen.sort_unstable();
    for c in chosen {
        let (i, neighbour) = candidates[c];
        let (pre, core, post) = split_token(tokens[i]);
        out[i] = format!("{pre}{}{post}", match_case(core, neighbour));
    }
    out.join(" ")
}

/// Replaces `ceil(rate * m)` of the `m` in-table content words of each text
/// by their nearest table neighbour. Text `i` uses stream `i` of the seed.
pub fn augment_texts(v_in: &[String], table: &WordTable, rate: f64, seed: u64) -> Result<AugmentationBatch, BalanceError> {
    if !(rate > 0.0 && rate <= 1.0) {
        return Err(BalanceError::InvalidRate(rate));
    }
    if table.is_empty() {
        return Err(BalanceError::EmptyTable);
    }
    let v_aug: Vec<String> = v_in
        .par_iter()
        .enumerate()
        .map(|(i, text)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            augment_one(text, table, rate, &mut rng)
        })
        .collect();
    Ok(AugmentationBatch { v_in: v_in.to_vec(), mapping: (0..v_in.len()).collect(), v_aug })
}

/// Reviews plus a flag per review marking augmented additions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AugmentedReviews {
    pub reviews: Vec<LabeledReview>,
    pub synthetic: Vec<bool>,
}

/// Augmented copies of minority-class reviews until every class of `scheme`
/// matches the largest. Reviews of a class are cycled in order; the n-th
/// copy of review `id` is named `id~aug<n>`.
pub fn augment_minority(
    reviews: &[LabeledReview],
    scheme: SentimentScheme,
    table: &WordTable,
    rate: f64,
    seed: u64,
) -> Result<Vec<LabeledReview>, BalanceError> {
    let mut by_class: Vec<Vec<&LabeledReview>> = vec![Vec::new(); scheme.arity()];
    for r in reviews {
        if r.label.scheme() != scheme {
            return Err(BalanceError::SchemeMismatch(scheme, r.label.scheme()));
        }
        by_class[r.label.index()].push(r);
    }
    let target = by_class.iter().map(Vec::len).max().unwrap_or(0);
    let mut sources = Vec::new();
    for (class, members) in by_class.iter().enumerate() {
        if members.is_empty() && target > 0 {
            return Err(BalanceError::InsufficientSamples { class, count: 0 });
        }
        for n in 0..target - members.len() {
            sources.push((members[n % members.len()], n / members.len() + 1));
        }
    }
    let texts: Vec<String> = sources.iter().map(|(r, _)| r.text.clone()).collect();
    let batch = augment_texts(&texts, table, rate, seed)?;
    Ok(sources
        .iter()
        .zip(batch.v_aug)
        .map(|((r, copy), text)| LabeledReview { id: format!("{}~aug{copy}", r.id), text, score: r.score, label: r.label })
        .collect())
}

/// Originals first, unchanged, then the additions flagged synthetic.
pub fn merge_reviews(original: &[LabeledReview], additions: Vec<LabeledReview>) -> Result<AugmentedReviews, BalanceError> {
    if let (Some(a), Some(b)) = (original.first(), additions.first()) {
        if a.label.scheme() != b.label.scheme() {
            return Err(BalanceError::SchemeMismatch(a.label.scheme(), b.label.scheme()));
        }
    }
    let mut synthetic = vec![false; original.len()];
    synthetic.extend(std::iter::repeat_n(true, additions.len()));
    let mut reviews = original.to_vec();
    reviews.extend(additions);
    Ok(AugmentedReviews { reviews, synthetic })
}
