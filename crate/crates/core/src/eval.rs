//! Accuracy, experiment reports and the end-to-end experiment runner.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use log::info;
use thiserror::Error;

use crate::balance::{smote_resample, BalanceError, FeatureMatrix, DEFAULT_K};
use crate::corpus::{ingest, CorpusDescriptor, CorpusError, CorpusLayout, LabeledReview};
use crate::embedding::{load_store, separated_clusters, synthetic_store, EmbeddingStore, Provenance, StoreError, StoreMode};
use crate::head::{predict, train, DecayMode, HeadConfig, HeadError, Hyperparams, InputMode};
use crate::kv::{KvError, KvMap};
use crate::polarity::{overall_polarity, ClassCounts, OverallPolarity, PolarityError, PolarityThresholds};
use crate::remote::{fetch_remote, RemoteConfig, RemoteError};
use crate::schemes::{ScoreScale, SentimentScheme};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("config: {0}")]
    Config(String),
    #[error("config: {0}")]
    Kv(#[from] KvError),
    #[error("accuracy: {predicted} predictions for {gold} gold labels")]
    LengthMismatch { predicted: usize, gold: usize },
    #[error("accuracy: no predictions")]
    Empty,
    #[error("prepare: {0}")]
    Prepare(#[from] CorpusError),
    #[error("embed: {0}")]
    Embed(#[from] StoreError),
    #[error("embed: {0}")]
    Remote(#[from] RemoteError),
    #[error("balance: {0}")]
    Balance(#[from] BalanceError),
    #[error("train: {0}")]
    Train(HeadError),
    #[error("predict: {0}")]
    Predict(HeadError),
    #[error("aggregate: {0}")]
    Aggregate(#[from] PolarityError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

fn head_exit_code(e: &HeadError) -> i32 {
    match e {
        HeadError::InvalidHyper(_) | HeadError::LossKindMismatch { .. } | HeadError::InputMode { .. } => 1,
        HeadError::NonFiniteGradient { .. } | HeadError::NonFiniteLoss { .. } => 3,
        _ => 2,
    }
}

impl EvalError {
    /// 1 for usage or configuration problems, 2 for bad data, 3 for
    /// numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            EvalError::Config(_) | EvalError::Kv(_) => 1,
            EvalError::Train(e) | EvalError::Predict(e) => head_exit_code(e),
            EvalError::Balance(BalanceError::InvalidK | BalanceError::InvalidRate(_) | BalanceError::InvalidTarget { .. }) => 1,
            EvalError::Aggregate(PolarityError::InvalidThreshold(_) | PolarityError::NegativeDelta(_)) => 1,
            _ => 2,
        }
    }
}

/// Percentage of positions where `predicted` equals `gold`.
pub fn accuracy<T: PartialEq>(predicted: &[T], gold: &[T]) -> Result<f64, EvalError> {
    if predicted.len() != gold.len() {
        return Err(EvalError::LengthMismatch { predicted: predicted.len(), gold: gold.len() });
    }
    if gold.is_empty() {
        return Err(EvalError::Empty);
    }
    let correct = predicted.iter().zip(gold).filter(|(p, g)| p == g).count();
    Ok(correct as f64 * 100.0 / gold.len() as f64)
}

/// Everything an experiment reports. Both renderings come from this struct.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub dataset: String,
    pub scheme: SentimentScheme,
    pub preset: String,
    pub seed: u64,
    pub thresholds: PolarityThresholds,
    pub train_size: usize,
    pub epochs: usize,
    pub initial_loss: f64,
    pub final_loss: Option<f64>,
    pub accuracy: f64,
    pub correct: u64,
    /// `confusion[gold][predicted]`.
    pub confusion: Vec<Vec<u64>>,
    pub original_op: OverallPolarity,
    pub computed_op: OverallPolarity,
}

impl EvalReport {
    /// Assembles a report from aligned test predictions and gold labels.
    #[allow(clippy::too_many_arguments)]
    pub fn from_predictions(
        dataset: &str,
        scheme: SentimentScheme,
        preset: &str,
        seed: u64,
        thresholds: PolarityThresholds,
        predicted: &[usize],
        gold: &[usize],
    ) -> Result<Self, EvalError> {
        let accuracy = accuracy(predicted, gold)?;
        let k = scheme.arity();
        let mut confusion = vec![vec![0u64; k]; k];
        for (&p, &g) in predicted.iter().zip(gold) {
            if p >= k || g >= k {
                return Err(EvalError::Config(format!("label {} outside the {scheme} scheme", p.max(g))));
            }
            confusion[g][p] += 1;
        }
        let correct = (0..k).map(|i| confusion[i][i]).sum();
        let mut report = Self {
            dataset: dataset.to_string(),
            scheme,
            preset: preset.to_string(),
            seed,
            thresholds,
            train_size: 0,
            epochs: 0,
            initial_loss: f64::NAN,
            final_loss: None,
            accuracy,
            correct,
            confusion,
            original_op: OverallPolarity::Neutral,
            computed_op: OverallPolarity::Neutral,
        };
        report.original_op = overall_polarity(&report.gold_counts()?, &thresholds)?;
        report.computed_op = overall_polarity(&report.predicted_counts()?, &thresholds)?;
        Ok(report)
    }

    pub fn total(&self) -> u64 {
        self.confusion.iter().flatten().sum()
    }

    /// Row sums of the confusion matrix.
    pub fn gold_counts(&self) -> Result<ClassCounts, PolarityError> {
        ClassCounts::new(self.scheme, self.confusion.iter().map(|row| row.iter().sum()).collect())
    }

    /// Column sums of the confusion matrix.
    pub fn predicted_counts(&self) -> Result<ClassCounts, PolarityError> {
        let k = self.scheme.arity();
        ClassCounts::new(self.scheme, (0..k).map(|j| self.confusion.iter().map(|row| row[j]).sum()).collect())
    }

    pub fn to_kv(&self) -> KvMap {
        let mut kv = KvMap::new();
        kv.set("dataset", &self.dataset);
        kv.set("scheme", self.scheme);
        kv.set("preset", &self.preset);
        kv.set("seed", self.seed);
        kv.set("thresholds", self.thresholds);
        kv.set("train.size", self.train_size);
        kv.set("train.epochs", self.epochs);
        kv.set("train.initial_loss", format!("{:.6}", self.initial_loss));
        kv.set("train.final_loss", self.final_loss.map_or("none".to_string(), |l| format!("{l:.6}")));
        kv.set("accuracy", format!("{:.2}", self.accuracy));
        kv.set("correct", self.correct);
        kv.set("total", self.total());
        let gold = self.gold_counts().map(|c| c.as_slice().to_vec()).unwrap_or_default();
        let pred = self.predicted_counts().map(|c| c.as_slice().to_vec()).unwrap_or_default();
        for (i, class) in self.scheme.classes().iter().enumerate() {
            let row: Vec<String> = self.confusion[i].iter().map(u64::to_string).collect();
            kv.set(format!("confusion.{}", class.symbol()), row.join(" "));
            kv.set(format!("gold.{}", class.symbol()), gold.get(i).copied().unwrap_or(0));
            kv.set(format!("predicted.{}", class.symbol()), pred.get(i).copied().unwrap_or(0));
        }
        kv.set("original_op", self.original_op.name());
        kv.set("computed_op", self.computed_op.name());
        kv
    }

    /// Aligned text tables for reading.
    pub fn render_text(&self) -> String {
        let classes = self.scheme.classes();
        let mut out = String::new();
        let _ = writeln!(out, "Dataset   {} ({} classes, scheme {})", self.dataset, classes.len(), self.scheme);
        let _ = writeln!(out, "Preset    {} seed {} thresholds {}", self.preset, self.seed, self.thresholds);
        let final_loss = self.final_loss.map_or("-".to_string(), |l| format!("{l:.6}"));
        let _ = writeln!(
            out,
            "Training  {} reviews, {} epochs, loss {:.6} -> {}",
            self.train_size, self.epochs, self.initial_loss, final_loss
        );
        let _ = writeln!(out, "Accuracy  {:.2}% ({}/{})", self.accuracy, self.correct, self.total());
        let _ = writeln!(out);
        let _ = writeln!(out, "Confusion (rows gold, columns predicted)");
        let mut header = format!("{:<10}", "");
        for c in classes {
            let _ = write!(header, "{:>10}", c.symbol());
        }
        let _ = writeln!(out, "{header}");
        for (c, row) in classes.iter().zip(&self.confusion) {
            let _ = write!(out, "{:<10}", c.symbol());
            for n in row {
                let _ = write!(out, "{n:>10}");
            }
            let _ = writeln!(out);
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "{header}");
        for (name, counts) in [("Gold", self.gold_counts()), ("Predicted", self.predicted_counts())] {
            let _ = write!(out, "{name:<10}");
            for n in counts.map(|c| c.as_slice().to_vec()).unwrap_or_default() {
                let _ = write!(out, "{n:>10}");
            }
            let _ = writeln!(out);
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "{:<13}{}", "Original OP", self.original_op);
        let _ = writeln!(out, "{:<13}{}", "Computed OP", self.computed_op);
        out
    }
}

/// Where an experiment gets its embeddings.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    /// Gaussian clusters, one per class, drawn from the experiment seed.
    Synthetic { dim: usize, per_class: usize, test_per_class: usize, separation: f64 },
    /// Precomputed train and test stores.
    Stores { train: PathBuf, test: PathBuf },
    /// A labelled corpus embedded by the external service.
    Corpus { descriptor: CorpusDescriptor, remote: RemoteConfig },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BalanceMethod {
    None,
    Smote { k: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: String,
    pub scheme: SentimentScheme,
    pub preset: String,
    pub hyper: Hyperparams,
    pub head: HeadConfig,
    pub thresholds: PolarityThresholds,
    pub balance: BalanceMethod,
    pub source: DataSource,
}

const KNOWN_KEYS: &[&str] = &[
    "dataset.name",
    "dataset.source",
    "dataset.path",
    "dataset.layout",
    "dataset.scale",
    "dataset.test_fraction",
    "scheme",
    "preset",
    "seed",
    "synthetic.dim",
    "synthetic.per_class",
    "synthetic.test_per_class",
    "synthetic.separation",
    "embedding.train",
    "embedding.test",
    "embedding.endpoint",
    "embedding.dim",
    "embedding.retries",
    "embedding.backoff_ms",
    "embedding.batch_size",
    "embedding.timeout_s",
    "head.hidden",
    "head.input",
    "head.epochs",
    "head.batch_size",
    "head.lr",
    "head.epsilon",
    "head.decay",
    "head.decay_mode",
    "head.max_len",
    "balance.method",
    "balance.k",
    "thresholds.neu",
    "thresholds.base",
    "thresholds.sub",
];

fn config_err(key: &str, e: impl std::fmt::Display) -> EvalError {
    EvalError::Config(format!("{key}: {e}"))
}

impl ExperimentConfig {
    pub fn from_kv(kv: &KvMap) -> Result<Self, EvalError> {
        if let Some((key, _)) = kv.iter().find(|(k, _)| !KNOWN_KEYS.contains(k)) {
            return Err(EvalError::Config(format!("unknown key {key:?}")));
        }
        let scheme: SentimentScheme = kv.require("scheme")?.parse().map_err(|e| config_err("scheme", e))?;
        let default_preset = if scheme == SentimentScheme::Binary { "binary" } else { "fine-grained" };
        let preset = kv.get("preset").unwrap_or(default_preset).to_string();
        let base = Hyperparams::preset(&preset).map_err(|e| config_err("preset", e))?;
        let hyper = Hyperparams {
            batch_size: kv.parse_or("head.batch_size", base.batch_size)?,
            lr: kv.parse_or("head.lr", base.lr)?,
            epsilon: kv.parse_or("head.epsilon", base.epsilon)?,
            decay: kv.parse_or("head.decay", base.decay)?,
            decay_mode: match kv.get("head.decay_mode") {
                None => base.decay_mode,
                Some(v) => v.parse::<DecayMode>().map_err(|e| config_err("head.decay_mode", e))?,
            },
            max_len: kv.parse_or("head.max_len", base.max_len)?,
            epochs: kv.parse_or("head.epochs", base.epochs)?,
            loss: base.loss,
            seed: kv.parse_or("seed", 0u64)?,
        };
        hyper.validate().map_err(|e| config_err("head", e))?;
        let head = HeadConfig {
            hidden: kv.parse_or("head.hidden", HeadConfig::DEFAULT_HIDDEN)?,
            classes: scheme.arity(),
            input: match kv.get("head.input") {
                None => InputMode::Pooled,
                Some(v) => v.parse::<InputMode>().map_err(|e| config_err("head.input", e))?,
            },
        };
        let defaults = PolarityThresholds::default();
        let ratio = |key: &str, default| -> Result<_, EvalError> {
            kv.get(key).map_or(Ok(default), |v| v.parse().map_err(|e| config_err(key, e)))
        };
        let thresholds = PolarityThresholds {
            neutral_fraction: ratio("thresholds.neu", defaults.neutral_fraction)?,
            base_ratio: ratio("thresholds.base", defaults.base_ratio)?,
            sub_ratio: ratio("thresholds.sub", defaults.sub_ratio)?,
        };
        thresholds.validate().map_err(|e| config_err("thresholds", e))?;
        let balance = match kv.get("balance.method").unwrap_or("none") {
            "none" => BalanceMethod::None,
            "smote" => BalanceMethod::Smote { k: kv.parse_or("balance.k", DEFAULT_K)? },
            other => return Err(config_err("balance.method", format!("unknown method {other:?}"))),
        };
        let source = match kv.get("dataset.source").unwrap_or("synthetic") {
            "synthetic" => DataSource::Synthetic {
                dim: kv.parse_or("synthetic.dim", 16)?,
                per_class: kv.parse_or("synthetic.per_class", 500)?,
                test_per_class: kv.parse_or("synthetic.test_per_class", 100)?,
                separation: kv.parse_or("synthetic.separation", 10.0)?,
            },
            "store" => DataSource::Stores {
                train: PathBuf::from(kv.require("embedding.train")?),
                test: PathBuf::from(kv.require("embedding.test")?),
            },
            "corpus" => {
                let layout: CorpusLayout = kv.require("dataset.layout")?.parse().map_err(|e| config_err("dataset.layout", e))?;
                let scale: ScoreScale = kv.require("dataset.scale")?.parse().map_err(|e| config_err("dataset.scale", e))?;
                let mut descriptor =
                    CorpusDescriptor::new(kv.get("dataset.name").unwrap_or("corpus"), layout, kv.require("dataset.path")?, scale);
                descriptor.test_fraction = kv.parse_or("dataset.test_fraction", descriptor.test_fraction)?;
                let mut remote = RemoteConfig::new(kv.require("embedding.endpoint")?, kv.parse_required("embedding.dim")?);
                remote.retries = kv.parse_or("embedding.retries", remote.retries)?;
                remote.batch_size = kv.parse_or("embedding.batch_size", remote.batch_size)?;
                if let Some(ms) = kv.parse_opt::<u64>("embedding.backoff_ms")? {
                    remote.backoff = Duration::from_millis(ms);
                }
                if let Some(s) = kv.parse_opt::<u64>("embedding.timeout_s")? {
                    remote.timeout = Duration::from_secs(s);
                }
                DataSource::Corpus { descriptor, remote }
            }
            other => return Err(config_err("dataset.source", format!("unknown source {other:?}"))),
        };
        if let DataSource::Synthetic { dim, per_class, test_per_class, separation } = &source {
            if *dim == 0 || *per_class == 0 || *test_per_class == 0 || !(separation.is_finite() && *separation >= 0.0) {
                return Err(EvalError::Config("synthetic source needs positive sizes and a finite separation".into()));
            }
        }
        if head.input == InputMode::Tokens && matches!(balance, BalanceMethod::Smote { .. }) {
            return Err(EvalError::Config("SMOTE works on pooled vectors; set head.input = pooled".into()));
        }
        Ok(Self {
            dataset: kv.get("dataset.name").unwrap_or("synthetic").to_string(),
            scheme,
            preset,
            hyper,
            head,
            thresholds,
            balance,
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, EvalError> {
        let text = fs::read_to_string(path).map_err(|source| EvalError::Io { path: path.display().to_string(), source })?;
        Self::from_kv(&KvMap::parse(&text)?)
    }
}

fn embed_reviews(remote: &RemoteConfig, reviews: &[LabeledReview]) -> Result<EmbeddingStore, EvalError> {
    let ids: Vec<String> = reviews.iter().map(|r| r.id.clone()).collect();
    let texts: Vec<String> = reviews.iter().map(|r| r.text.clone()).collect();
    let labels: Vec<usize> = reviews.iter().map(|r| r.label.index()).collect();
    let records = fetch_remote(remote, &ids, &texts, &labels)?;
    Ok(EmbeddingStore::new(remote.dim, StoreMode::Pooled, records, Provenance::Service(remote.endpoint.clone()))?)
}

fn load_data(config: &ExperimentConfig) -> Result<(EmbeddingStore, EmbeddingStore), EvalError> {
    let seed = config.hyper.seed;
    let k = config.scheme.arity();
    match &config.source {
        DataSource::Synthetic { dim, per_class, test_per_class, separation } => {
            let train = synthetic_store(seed, *dim, &separated_clusters(*dim, k, *per_class, *separation))?;
            let test_seed = seed.wrapping_add(0x9e37_79b9_7f4a_7c15);
            let test = synthetic_store(test_seed, *dim, &separated_clusters(*dim, k, *test_per_class, *separation))?;
            Ok((train, test))
        }
        DataSource::Stores { train, test } => Ok((load_store(train)?, load_store(test)?)),
        DataSource::Corpus { descriptor, remote } => {
            let (split, stats, check) = ingest(descriptor, config.scheme, seed)?;
            info!(
                "prepared {}: {} train, {} test, {} dropped, reference {}",
                split.name,
                split.train.len(),
                split.test.len(),
                stats.dropped,
                check.name()
            );
            Ok((embed_reviews(remote, &split.train)?, embed_reviews(remote, &split.test)?))
        }
    }
}

/// Loads data, optionally balances, trains, predicts the test store and
/// reports. Deterministic in the config.
pub fn run_experiment(config: &ExperimentConfig) -> Result<EvalReport, EvalError> {
    let (mut train_store, test_store) = load_data(config)?;
    if let BalanceMethod::Smote { k } = config.balance {
        let features = FeatureMatrix::from_store(&train_store, config.scheme)?;
        let target = features.majority_count();
        train_store = smote_resample(&features, k, target, config.hyper.seed)?.to_store(&train_store)?;
    }
    let outcome = train(&config.head, &train_store, &config.hyper).map_err(EvalError::Train)?;
    let predicted = predict(&outcome.params, &test_store, config.head.input, config.hyper.max_len).map_err(EvalError::Predict)?;
    let gold = test_store.labels();
    let mut report = EvalReport::from_predictions(
        &config.dataset,
        config.scheme,
        &config.preset,
        config.hyper.seed,
        config.thresholds,
        &predicted,
        &gold,
    )?;
    report.train_size = train_store.len();
    report.epochs = outcome.history.len();
    report.initial_loss = outcome.initial_loss;
    report.final_loss = outcome.history.last().map(|h| h.loss);
    Ok(report)
}
