use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use log::info;
use sentiment_core::balance::{augment_minority, merge_reviews, smote_resample, FeatureMatrix, WordTable};
use sentiment_core::corpus::{ingest, manifest, read_review_table, write_review_table, CorpusDescriptor};
use sentiment_core::embedding::{load_store, EmbeddingStore, StoreMode};
use sentiment_core::eval::{run_experiment, EvalError, EvalReport, ExperimentConfig};
use sentiment_core::head::{
    load_params, predict as predict_labels, save_params, train as train_head, HeadConfig, Hyperparams,
    InputMode, SavedHead,
};
use sentiment_core::polarity::{overall_polarity, ClassCounts, PolarityThresholds};
use sentiment_core::schemes::SentimentScheme;
use sentiment_core::tokenizer::{encode as encode_example, InputExample, Vocab};

use crate::{
    AggregateArgs, BalanceArgs, EncodeArgs, Method, PredictArgs, PrepareArgs, ReportArgs, RunArgs, TrainArgs,
};

type Result<T> = std::result::Result<T, EvalError>;

fn usage(msg: impl Into<String>) -> EvalError {
    EvalError::Config(msg.into())
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|source| EvalError::Io { path: path.display().to_string(), source })
}

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| EvalError::Io { path: path.display().to_string(), source })
}

fn data_error(path: &Path, line: usize, reason: impl std::fmt::Display) -> EvalError {
    EvalError::Io {
        path: format!("{}:{line}", path.display()),
        source: std::io::Error::new(std::io::ErrorKind::InvalidData, reason.to_string()),
    }
}

fn thresholds(arg: Option<&str>) -> Result<PolarityThresholds> {
    Ok(arg.map(str::parse).transpose()?.unwrap_or_default())
}

/// The scheme with one class per label up to the largest seen (at least two).
fn infer_scheme(labels: impl Iterator<Item = usize>) -> Result<SentimentScheme> {
    let arity = labels.max().map_or(2, |m| (m + 1).max(2));
    SentimentScheme::from_arity(arity).ok_or_else(|| usage(format!("labels span {arity} classes; at most 5 are supported")))
}

pub fn prepare(a: PrepareArgs) -> Result<()> {
    let layout = a.layout.parse().map_err(usage)?;
    let scale = a.scale.parse().map_err(|e| usage(format!("{e}")))?;
    if !(0.0..=1.0).contains(&a.test_fraction) {
        return Err(usage(format!("test fraction {} is outside [0, 1]", a.test_fraction)));
    }
    let source = CorpusDescriptor { test_fraction: a.test_fraction, ..CorpusDescriptor::new(&a.dataset, layout, &a.input, scale) };
    let (split, stats, check) = ingest(&source, a.scheme, a.seed)?;
    fs::create_dir_all(&a.out).map_err(|source| EvalError::Io { path: a.out.display().to_string(), source })?;
    write_review_table(&a.out.join("train.tsv"), &split.train)?;
    write_review_table(&a.out.join("test.tsv"), &split.test)?;
    let kv = manifest(&split, &stats, &check, a.seed)?;
    write_file(&a.out.join("manifest.txt"), &kv.render())?;
    print!("{}", kv.render());
    Ok(())
}

pub fn encode(a: EncodeArgs) -> Result<()> {
    let vocab = Vocab::load(&a.vocab).map_err(|e| data_error(&a.vocab, 0, e))?;
    if a.max_len < 2 {
        return Err(usage(format!("max length must be at least 2, got {}", a.max_len)));
    }
    let reviews = read_review_table(&a.input, a.scheme)?;
    let join = |xs: &mut dyn Iterator<Item = String>| xs.collect::<Vec<_>>().join(" ");
    let mut out = String::new();
    for r in &reviews {
        let e = encode_example(&InputExample::new(r.text.as_str(), r.label), &vocab, a.max_len)
            .map_err(|e| usage(e.to_string()))?;
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            r.id,
            r.label.index(),
            join(&mut e.input_ids.iter().map(u32::to_string)),
            join(&mut e.attention_mask.iter().map(u8::to_string)),
            join(&mut e.segment_ids.iter().map(u8::to_string)),
        );
    }
    write_file(&a.out, &out)?;
    info!("encoded {} reviews to {}", reviews.len(), a.out.display());
    Ok(())
}

pub fn train(a: TrainArgs) -> Result<()> {
    let mut hyper = Hyperparams::preset(&a.preset).map_err(EvalError::Train)?;
    if let Some(seed) = a.seed {
        hyper.seed = seed;
    }
    if let Some(epochs) = a.epochs {
        hyper.epochs = epochs;
    }
    let store = load_store(&a.store)?;
    let classes = match a.classes {
        Some(k) => k,
        None => infer_scheme(store.labels().into_iter())?.arity(),
    };
    let input = match a.input.as_deref() {
        Some(s) => s.parse().map_err(|e| usage(format!("{e}")))?,
        None if store.mode() == StoreMode::Tokens => InputMode::Tokens,
        None => InputMode::Pooled,
    };
    let mut config = HeadConfig { input, ..HeadConfig::new(classes) };
    if let Some(h) = a.hidden {
        config.hidden = h;
    }
    let outcome = train_head(&config, &store, &hyper).map_err(EvalError::Train)?;
    for e in &outcome.history {
        info!("epoch {}: loss {:.6}, accuracy {:.4}", e.epoch, e.loss, e.accuracy);
    }
    save_params(&a.out, &SavedHead { params: outcome.params, input, max_len: hyper.max_len }).map_err(EvalError::Train)?;
    println!("train.size = {}", store.len());
    println!("train.epochs = {}", outcome.history.len());
    println!("train.initial_loss = {:.6}", outcome.initial_loss);
    if let Some(last) = outcome.history.last() {
        println!("train.final_loss = {:.6}", last.loss);
        println!("train.accuracy = {:.2}", last.accuracy * 100.0);
    }
    Ok(())
}

pub fn predict(a: PredictArgs) -> Result<()> {
    let head = load_params(&a.params).map_err(EvalError::Predict)?;
    let store = load_store(&a.store)?;
    let labels = predict_labels(&head.params, &store, head.input, head.max_len).map_err(EvalError::Predict)?;
    let mut out = String::new();
    for (r, p) in store.records().iter().zip(&labels) {
        let _ = writeln!(out, "{}\t{}\t{}", r.id, p, r.label);
    }
    write_file(&a.out, &out)?;
    info!("wrote {} predictions to {}", labels.len(), a.out.display());
    Ok(())
}

/// One prediction line: id, predicted index and optional gold index.
struct LabelLine {
    predicted: usize,
    gold: Option<usize>,
}

fn read_labels(path: &Path) -> Result<Vec<LabelLine>> {
    let text = read_file(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let index = |s: &str| s.trim().parse::<usize>().map_err(|_| data_error(path, i + 1, format!("bad label {s:?}")));
        let (predicted, gold) = match fields.as_slice() {
            [_, p] => (index(p)?, None),
            [_, p, g] => (index(p)?, Some(index(g)?)),
            _ => return Err(data_error(path, i + 1, "expected id, label and optional gold label")),
        };
        out.push(LabelLine { predicted, gold });
    }
    Ok(out)
}

pub fn aggregate(a: AggregateArgs) -> Result<()> {
    let th = thresholds(a.thresholds.as_deref())?;
    let lines = read_labels(&a.labels)?;
    let counts = ClassCounts::from_indices(a.scheme, lines.iter().map(|l| l.predicted))?;
    let verdict = overall_polarity(&counts, &th)?;
    println!("verdict = {}", verdict.name());
    println!("scheme = {}", a.scheme);
    println!("thresholds = {th}");
    println!("total = {}", counts.total());
    for (class, n) in a.scheme.classes().iter().zip(counts.as_slice()) {
        println!("count.{} = {n}", class.symbol());
    }
    Ok(())
}

pub fn report(a: ReportArgs) -> Result<()> {
    let th = thresholds(a.thresholds.as_deref())?;
    let lines = read_labels(&a.labels)?;
    let predicted: Vec<usize> = lines.iter().map(|l| l.predicted).collect();
    let gold: Vec<usize> = lines
        .iter()
        .map(|l| l.gold.ok_or_else(|| usage("the label file has no gold column")))
        .collect::<Result<_>>()?;
    let report = EvalReport::from_predictions(&a.dataset, a.scheme, &a.preset, a.seed, th, &predicted, &gold)?;
    print!("{}", report.render_text());
    if let Some(out) = &a.out {
        write_file(out, &report.to_kv().render())?;
    }
    Ok(())
}

fn balance_store(a: &BalanceArgs) -> Result<()> {
    let store: EmbeddingStore = load_store(&a.input)?;
    let scheme = match a.scheme {
        Some(s) => s,
        None => infer_scheme(store.labels().into_iter())?,
    };
    let features = FeatureMatrix::from_store(&store, scheme)?;
    let balanced = smote_resample(&features, a.k, features.majority_count(), a.seed)?;
    let out = balanced.to_store(&store)?;
    out.write(&a.out)?;
    println!("records.original = {}", store.len());
    println!("records.synthetic = {}", out.len() - store.len());
    Ok(())
}

fn balance_reviews(a: &BalanceArgs) -> Result<()> {
    let table_path = a.table.as_ref().ok_or_else(|| usage("nlpaug needs --table"))?;
    let table = WordTable::load(table_path)?;
    let scheme = match a.scheme {
        Some(s) => s,
        None => {
            let widest = read_review_table(&a.input, SentimentScheme::Five)?;
            infer_scheme(widest.iter().map(|r| r.label.index()))?
        }
    };
    let reviews = read_review_table(&a.input, scheme)?;
    let additions = augment_minority(&reviews, scheme, &table, a.rate, a.seed)?;
    let merged = merge_reviews(&reviews, additions)?;
    write_review_table(&a.out, &merged.reviews)?;
    println!("records.original = {}", reviews.len());
    println!("records.synthetic = {}", merged.synthetic.iter().filter(|&&s| s).count());
    Ok(())
}

pub fn balance(a: BalanceArgs) -> Result<()> {
    match a.method {
        Method::Smote => balance_store(&a),
        Method::Nlpaug => balance_reviews(&a),
    }
}

pub fn run(a: RunArgs) -> Result<()> {
    let config = ExperimentConfig::load(&a.config)?;
    let report = run_experiment(&config)?;
    print!("{}", report.render_text());
    if let Some(out) = &a.out {
        write_file(out, &report.to_kv().render())?;
    }
    Ok(())
}
