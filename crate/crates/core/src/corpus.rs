//! Review corpus ingestion: cleaning, label construction, train/test splits
//! and reference split statistics.
//!
//! Two input layouts are supported, chosen explicitly by the descriptor:
//!
//! * [`CorpusLayout::Delimited`] has one review per line,
//!   `id<TAB>split<TAB>score<TAB>label<TAB>text`. `split` is `train`, `test`
//!   or `auto`; either `score` or `label` may be empty. Lines starting with
//!   `#` are comments.
//! * [`CorpusLayout::Tree`] reads `<root>/<train|test>/<class>/<id>_<score>.txt`,
//!   the usual distribution form of the IMDb corpus. `unsup` directories are
//!   skipped.

use std::fs;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::kv::KvMap;
use crate::polarity::{ClassCounts, PolarityError};
use crate::schemes::{score_to_label, ClassLabel, LabelOutcome, RawScore, SchemeError, Sentiment, SentimentScheme, ScoreScale};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{}: {source}", .path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}:{line}: {reason}", .path.display())]
    Malformed { path: PathBuf, line: usize, reason: String },
    #[error("review {id}: {source}")]
    Label { id: String, source: SchemeError },
    #[error("{dataset} {part} counts {actual} differ from reference {expected}")]
    CountMismatch { dataset: String, part: &'static str, expected: ClassCounts, actual: ClassCounts },
    #[error(transparent)]
    Counts(#[from] PolarityError),
}

impl CorpusError {
    fn io(path: &Path, source: io::Error) -> Self {
        CorpusError::Io { path: path.to_path_buf(), source }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledReview {
    pub id: String,
    pub text: String,
    pub score: Option<RawScore>,
    pub label: ClassLabel,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSplit {
    pub name: String,
    pub scheme: SentimentScheme,
    pub train: Vec<LabeledReview>,
    pub test: Vec<LabeledReview>,
    /// Reference (train, test) counts, set only when they were verified.
    pub expected: Option<(ClassCounts, ClassCounts)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusLayout {
    Delimited,
    Tree,
}

impl std::str::FromStr for CorpusLayout {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "delimited" | "tsv" => Ok(CorpusLayout::Delimited),
            "tree" => Ok(CorpusLayout::Tree),
            other => Err(format!("unknown corpus layout {other:?} (expected delimited or tree)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusDescriptor {
    pub name: String,
    pub layout: CorpusLayout,
    pub path: PathBuf,
    /// Scale of the score column / filename score.
    pub scale: ScoreScale,
    /// Share of `auto` rows sent to the test part.
    pub test_fraction: f64,
}

impl CorpusDescriptor {
    pub fn new(name: impl Into<String>, layout: CorpusLayout, path: impl Into<PathBuf>, scale: ScoreScale) -> Self {
        Self { name: name.into(), layout, path: path.into(), scale, test_fraction: 0.2 }
    }
}

/// Record accounting; `raw = ingested + dropped + empty_removed`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IngestStats {
    pub raw: usize,
    pub ingested: usize,
    /// Excluded by label construction, including `rejected`.
    pub dropped: usize,
    /// Subset of `dropped` whose score is invalid on the scale (e.g. IMDb 5 or 6).
    pub rejected: usize,
    pub empty_removed: usize,
}

/// Outcome of comparing a split against the reference statistics.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ReferenceCheck {
    Matched,
    /// Sizes differ from the full corpus (e.g. a bundled fixture).
    Skipped,
    /// The dataset has no reference row.
    Unknown,
}

impl ReferenceCheck {
    pub fn name(&self) -> &'static str {
        match self {
            ReferenceCheck::Matched => "matched",
            ReferenceCheck::Skipped => "skipped",
            ReferenceCheck::Unknown => "unknown",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Part {
    Train,
    Test,
    Auto,
}

struct RawRecord {
    id: String,
    part: Part,
    score: Option<RawScore>,
    label: Option<ClassLabel>,
    text: String,
    origin: (PathBuf, usize),
}

/// Published per-class counts of the full benchmark splits, columns in the
/// order HP, P, NEU, N, HN; `None` marks classes absent from the scheme.
type ReferenceRow = (&'static str, SentimentScheme, [Option<u64>; 5], [Option<u64>; 5]);

const REFERENCE_COUNTS: [ReferenceRow; 8] = [
    ("IMDb-2", SentimentScheme::Binary, [None, Some(12500), None, Some(12500), None], [None, Some(12500), None, Some(12500), None]),
    ("MR", SentimentScheme::Binary, [None, Some(4264), None, Some(4265), None], [None, Some(1067), None, Some(1066), None]),
    ("SST-2", SentimentScheme::Binary, [None, Some(4300), None, Some(4244), None], [None, Some(886), None, Some(1116), None]),
    ("Amazon-2", SentimentScheme::Binary, [None, Some(239660), None, Some(37056), None], [None, Some(59949), None, Some(9231), None]),
    ("IMDb-3", SentimentScheme::Three, [None, Some(18227), Some(4816), Some(14958), None], [None, Some(4556), Some(1204), Some(3739), None]),
    ("IMDb-4", SentimentScheme::Four, [Some(11471), Some(8530), None, Some(8234), Some(11767)], [Some(2867), Some(2132), None, Some(2058), Some(2941)]),
    ("SST-5", SentimentScheme::Five, [Some(1482), Some(2489), Some(1794), Some(2512), Some(1208)], [Some(370), Some(622), Some(448), Some(628), Some(302)]),
    ("Amazon-5", SentimentScheme::Five, [Some(182000), Some(57688), Some(27767), Some(15168), Some(21863)], [Some(45500), Some(14421), Some(6941), Some(3791), Some(5465)]),
];

const REFERENCE_COLUMNS: [Sentiment; 5] = [
    Sentiment::HighlyPositive,
    Sentiment::Positive,
    Sentiment::Neutral,
    Sentiment::Negative,
    Sentiment::HighlyNegative,
];

/// Names of the datasets with reference statistics.
pub fn reference_datasets() -> impl Iterator<Item = &'static str> {
    REFERENCE_COUNTS.iter().map(|r| r.0)
}

/// Reference (train, test) class counts of a full benchmark split.
pub fn reference_counts(name: &str) -> Option<(ClassCounts, ClassCounts)> {
    let (_, scheme, train, test) = REFERENCE_COUNTS.iter().find(|r| r.0.eq_ignore_ascii_case(name))?;
    let build = |row: &[Option<u64>; 5]| {
        let pairs: Vec<(Sentiment, u64)> = REFERENCE_COLUMNS
            .iter()
            .zip(row)
            .filter_map(|(&s, n)| n.map(|n| (s, n)))
            .collect();
        ClassCounts::from_pairs(*scheme, &pairs).expect("reference rows match their scheme")
    };
    Some((build(train), build(test)))
}

/// Tallies the labels of a list of reviews.
pub fn class_counts(reviews: &[LabeledReview], scheme: SentimentScheme) -> Result<ClassCounts, CorpusError> {
    Ok(ClassCounts::from_labels(scheme, reviews.iter().map(|r| r.label))?)
}

/// Checks a split against the reference row for its name. Counts are compared
/// exactly whenever the part sizes equal the full corpus sizes.
pub fn verify_reference(split: &DatasetSplit) -> Result<ReferenceCheck, CorpusError> {
    let Some((train_ref, test_ref)) = reference_counts(&split.name) else {
        return Ok(ReferenceCheck::Unknown);
    };
    if train_ref.scheme() != split.scheme {
        return Ok(ReferenceCheck::Unknown);
    }
    let train = class_counts(&split.train, split.scheme)?;
    let test = class_counts(&split.test, split.scheme)?;
    if train.total() != train_ref.total() || test.total() != test_ref.total() {
        info!(
            "{}: {} train / {} test reviews, reference has {} / {}; skipping reference count check",
            split.name,
            train.total(),
            test.total(),
            train_ref.total(),
            test_ref.total()
        );
        return Ok(ReferenceCheck::Skipped);
    }
    for (part, actual, expected) in [("train", train, train_ref), ("test", test, test_ref)] {
        if actual != expected {
            return Err(CorpusError::CountMismatch { dataset: split.name.clone(), part, expected, actual });
        }
    }
    Ok(ReferenceCheck::Matched)
}

/// Loads, cleans and labels a corpus.
///
/// Reviews are ordered by id and then shuffled with `seed`, so the result is
/// a function of (source, scheme, seed) alone.
pub fn ingest(
    source: &CorpusDescriptor,
    scheme: SentimentScheme,
    seed: u64,
) -> Result<(DatasetSplit, IngestStats, ReferenceCheck), CorpusError> {
    let mut records = match source.layout {
        CorpusLayout::Delimited => read_delimited(&source.path, source.scale, scheme)?,
        CorpusLayout::Tree => read_tree(&source.path, source.scale)?,
    };
    records.sort_by(|a, b| a.id.cmp(&b.id));

    let mut stats = IngestStats { raw: records.len(), ..Default::default() };
    let mut train = Vec::new();
    let mut test = Vec::new();
    let mut auto = Vec::new();
    for rec in records {
        if rec.text.trim().is_empty() {
            stats.empty_removed += 1;
            continue;
        }
        let label = match construct_label(&rec, scheme)? {
            Some(label) => label,
            None => {
                stats.dropped += 1;
                if rec.score.is_some_and(|s| !s.scale.admits(s.value)) {
                    stats.rejected += 1;
                    warn!("{}:{}: rejected score for review {}", rec.origin.0.display(), rec.origin.1, rec.id);
                }
                continue;
            }
        };
        let review = LabeledReview { id: rec.id, text: rec.text, score: rec.score, label };
        match rec.part {
            Part::Train => train.push(review),
            Part::Test => test.push(review),
            Part::Auto => auto.push(review),
        }
    }
    stats.ingested = train.len() + test.len() + auto.len();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if !auto.is_empty() {
        auto.shuffle(&mut rng);
        let n_test = (auto.len() as f64 * source.test_fraction).round() as usize;
        let rest = auto.split_off(n_test.min(auto.len()));
        test.extend(auto);
        train.extend(rest);
        train.sort_by(|a, b| a.id.cmp(&b.id));
        test.sort_by(|a, b| a.id.cmp(&b.id));
    }
    train.shuffle(&mut rng);
    test.shuffle(&mut rng);

    let mut split = DatasetSplit { name: source.name.clone(), scheme, train, test, expected: None };
    let check = verify_reference(&split)?;
    if check == ReferenceCheck::Matched {
        split.expected = reference_counts(&split.name);
    }
    Ok((split, stats, check))
}

fn construct_label(rec: &RawRecord, scheme: SentimentScheme) -> Result<Option<ClassLabel>, CorpusError> {
    let label_err = |source| CorpusError::Label { id: rec.id.clone(), source };
    let from_score = match rec.score {
        Some(score) => match score_to_label(score, scheme) {
            Ok(LabelOutcome::Label(label)) => Some(label),
            Ok(LabelOutcome::Dropped) | Err(SchemeError::InvalidScore { .. }) => return Ok(None),
            Err(e) => return Err(label_err(e)),
        },
        None => None,
    };
    match (from_score, rec.label) {
        (Some(a), Some(b)) if a != b => Err(label_err(SchemeError::Inconsistent {
            parent: b.sentiment(),
            score: rec.score.map_or(0, |s| s.value),
        })),
        (Some(a), _) => Ok(Some(a)),
        (None, Some(b)) => Ok(Some(b)),
        (None, None) => Err(CorpusError::Malformed {
            path: rec.origin.0.clone(),
            line: rec.origin.1,
            reason: format!("review {} has neither score nor label", rec.id),
        }),
    }
}

fn parse_label(field: &str, scheme: SentimentScheme) -> Result<ClassLabel, String> {
    if let Ok(index) = field.parse::<usize>() {
        return ClassLabel::new(scheme, index).map_err(|e| e.to_string());
    }
    let sentiment: Sentiment = field.parse().map_err(|e: SchemeError| e.to_string())?;
    scheme.label(sentiment).map_err(|e| e.to_string())
}

fn read_delimited(path: &Path, scale: ScoreScale, scheme: SentimentScheme) -> Result<Vec<RawRecord>, CorpusError> {
    let file = fs::File::open(path).map_err(|e| CorpusError::io(path, e))?;
    let mut records = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CorpusError::io(path, e))?;
        let lineno = i + 1;
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let malformed = |reason: String| CorpusError::Malformed { path: path.to_path_buf(), line: lineno, reason };
        let fields: Vec<&str> = line.splitn(5, '\t').collect();
        if fields.len() != 5 {
            return Err(malformed(format!("expected 5 tab-separated fields, found {}", fields.len())));
        }
        let part = match fields[1] {
            "train" => Part::Train,
            "test" => Part::Test,
            "auto" => Part::Auto,
            other => return Err(malformed(format!("unknown split {other:?}"))),
        };
        let score = match fields[2].trim() {
            "" => None,
            s => Some(s.parse::<i32>().map_err(|_| malformed(format!("score {s:?} is not an integer")))?),
        };
        let label = match fields[3].trim() {
            "" => None,
            s => Some(parse_label(s, scheme).map_err(malformed)?),
        };
        if fields[0].is_empty() {
            return Err(malformed("empty id".into()));
        }
        records.push(RawRecord {
            id: fields[0].to_string(),
            part,
            score: score.map(|value| RawScore { value, scale }),
            label,
            text: fields[4].to_string(),
            origin: (path.to_path_buf(), lineno),
        });
    }
    Ok(records)
}

fn read_tree(root: &Path, scale: ScoreScale) -> Result<Vec<RawRecord>, CorpusError> {
    let mut files = Vec::new();
    for (dir, part) in [("train", Part::Train), ("test", Part::Test)] {
        let part_dir = root.join(dir);
        if !part_dir.is_dir() {
            continue;
        }
        let mut classes: Vec<PathBuf> = fs::read_dir(&part_dir)
            .map_err(|e| CorpusError::io(&part_dir, e))?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| p.is_dir() && p.file_name().is_some_and(|n| n != "unsup"))
            .collect();
        classes.sort();
        for class_dir in classes {
            let entries = fs::read_dir(&class_dir).map_err(|e| CorpusError::io(&class_dir, e))?;
            for entry in entries {
                let path = entry.map_err(|e| CorpusError::io(&class_dir, e))?.path();
                if path.extension().is_some_and(|e| e == "txt") {
                    files.push((path, part));
                }
            }
        }
    }
    if files.is_empty() && !root.is_dir() {
        return Err(CorpusError::io(root, io::Error::new(io::ErrorKind::NotFound, "corpus directory not found")));
    }
    files
        .par_iter()
        .map(|(path, part)| {
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
            let malformed =
                |reason: String| CorpusError::Malformed { path: path.clone(), line: 0, reason };
            let (_, score) = stem
                .rsplit_once('_')
                .ok_or_else(|| malformed("file name is not <id>_<score>.txt".into()))?;
            let value: i32 = score.parse().map_err(|_| malformed(format!("score {score:?} is not an integer")))?;
            let text = fs::read_to_string(path).map_err(|e| CorpusError::io(path, e))?;
            let id = path
                .strip_prefix(root)
                .unwrap_or(path)
                .with_extension("")
                .to_string_lossy()
                .replace(std::path::MAIN_SEPARATOR, "/");
            Ok(RawRecord {
                id,
                part: *part,
                score: Some(RawScore { value, scale }),
                label: None,
                text,
                origin: (path.clone(), 0),
            })
        })
        .collect()
}

/// Escapes tabs, newlines, carriage returns and backslashes for one-line storage.
pub fn escape_field(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

pub fn unescape_field(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut chars = text.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            Some('\\') => out.push('\\'),
            Some(other) => {
                out.push('\\');
                out.push(other);
            }
            None => out.push('\\'),
        }
    }
    out
}

/// Writes the cleaned review table: `id<TAB>label index<TAB>escaped text`.
pub fn write_review_table(path: &Path, reviews: &[LabeledReview]) -> Result<(), CorpusError> {
    let file = fs::File::create(path).map_err(|e| CorpusError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in reviews {
        writeln!(w, "{}\t{}\t{}", r.id, r.label.index(), escape_field(&r.text)).map_err(|e| CorpusError::io(path, e))?;
    }
    w.flush().map_err(|e| CorpusError::io(path, e))
}

pub fn read_review_table(path: &Path, scheme: SentimentScheme) -> Result<Vec<LabeledReview>, CorpusError> {
    let text = fs::read_to_string(path).map_err(|e| CorpusError::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, line)| {
            let malformed = |reason: String| CorpusError::Malformed { path: path.to_path_buf(), line: i + 1, reason };
            let mut fields = line.splitn(3, '\t');
            let (Some(id), Some(label), Some(text)) = (fields.next(), fields.next(), fields.next()) else {
                return Err(malformed("expected id, label index and text".into()));
            };
            let index: usize = label.parse().map_err(|_| malformed(format!("bad label index {label:?}")))?;
            let label = ClassLabel::new(scheme, index).map_err(|e| malformed(e.to_string()))?;
            Ok(LabeledReview { id: id.to_string(), text: unescape_field(text), score: None, label })
        })
        .collect()
}

/// Key/value manifest describing a prepared split.
pub fn manifest(split: &DatasetSplit, stats: &IngestStats, check: &ReferenceCheck, seed: u64) -> Result<KvMap, CorpusError> {
    let mut kv = KvMap::new();
    kv.set("dataset.name", &split.name);
    kv.set("scheme", split.scheme);
    kv.set("seed", seed);
    kv.set("records.raw", stats.raw);
    kv.set("records.ingested", stats.ingested);
    kv.set("records.dropped", stats.dropped);
    kv.set("records.rejected", stats.rejected);
    kv.set("records.empty_removed", stats.empty_removed);
    for (part, reviews) in [("train", &split.train), ("test", &split.test)] {
        let counts = class_counts(reviews, split.scheme)?;
        kv.set(format!("{part}.count"), reviews.len());
        for (class, n) in split.scheme.classes().iter().zip(counts.as_slice()) {
            kv.set(format!("{part}.{}", class.symbol()), n);
        }
    }
    kv.set("reference_check", check.name());
    Ok(kv)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let path = dir.join(name);
        fs::write(&path, body).unwrap();
        path
    }

    #[test]
    fn six_record_imdb_fixture() {
        let dir = tempfile::tempdir().unwrap();
        let body = "r1\ttrain\t1\t\tawful\nr2\ttrain\t3\t\tweak\nr3\ttrain\t5\t\tmeh\n\
                    r4\ttrain\t7\t\tfine\nr5\ttrain\t9\t\tgreat\nr6\ttrain\t10\t\tsuperb\n";
        let path = write(dir.path(), "imdb.tsv", body);
        let desc = CorpusDescriptor::new("fixture", CorpusLayout::Delimited, path, ScoreScale::Imdb);
        let (split, stats, check) = ingest(&desc, SentimentScheme::Four, 1).unwrap();
        assert_eq!(split.train.len(), 5);
        assert_eq!(stats, IngestStats { raw: 6, ingested: 5, dropped: 1, rejected: 1, empty_removed: 0 });
        assert_eq!(check, ReferenceCheck::Unknown);
        let mut labels: Vec<_> = split.train.iter().map(|r| (r.id.clone(), r.label.sentiment())).collect();
        labels.sort();
        use Sentiment::*;
        let expected = [HighlyNegative, Negative, Positive, HighlyPositive, HighlyPositive];
        assert_eq!(labels.iter().map(|l| l.1).collect::<Vec<_>>(), expected);
    }

    #[test]
    fn empty_reviews_are_removed_and_accounted() {
        let dir = tempfile::tempdir().unwrap();
        let body = "a\ttrain\t\tPositive\t  \t\nb\ttest\t\tN\t!!!\nc\ttrain\t\t1\tok\n";
        let path = write(dir.path(), "c.tsv", body);
        let desc = CorpusDescriptor::new("x", CorpusLayout::Delimited, path, ScoreScale::Imdb);
        let (split, stats, _) = ingest(&desc, SentimentScheme::Binary, 0).unwrap();
        assert_eq!(stats.empty_removed, 1);
        assert_eq!(stats.raw, stats.ingested + stats.dropped + stats.empty_removed);
        assert_eq!(split.test[0].text, "!!!");
        assert_eq!(split.train[0].label.sentiment(), Sentiment::Positive);
    }

    #[test]
    fn five_star_binary_drops_threes() {
        let dir = tempfile::tempdir().unwrap();
        let body = "a\ttrain\t1\t\tbad\nb\ttrain\t3\t\tso so\nc\ttrain\t5\t\tgood\n";
        let path = write(dir.path(), "amazon.tsv", body);
        let desc = CorpusDescriptor::new("a", CorpusLayout::Delimited, path, ScoreScale::FiveStar);
        let (split, stats, _) = ingest(&desc, SentimentScheme::Binary, 0).unwrap();
        assert_eq!(stats.dropped, 1);
        assert_eq!(stats.rejected, 0);
        assert_eq!(split.train.len(), 2);
    }

    #[test]
    fn malformed_lines_report_position() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(dir.path(), "bad.tsv", "# header\nx\ttrain\t1\n");
        let desc = CorpusDescriptor::new("b", CorpusLayout::Delimited, path, ScoreScale::Imdb);
        match ingest(&desc, SentimentScheme::Binary, 0) {
            Err(CorpusError::Malformed { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        let path = write(dir.path(), "bad2.tsv", "x\tvalid\t1\t\ttext\n");
        let desc = CorpusDescriptor::new("b", CorpusLayout::Delimited, path, ScoreScale::Imdb);
        assert!(matches!(ingest(&desc, SentimentScheme::Binary, 0), Err(CorpusError::Malformed { .. })));
        let missing = CorpusDescriptor::new("m", CorpusLayout::Delimited, dir.path().join("nope"), ScoreScale::Imdb);
        assert!(matches!(ingest(&missing, SentimentScheme::Binary, 0), Err(CorpusError::Io { .. })));
    }

    #[test]
    fn score_label_conflict_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(dir.path(), "c.tsv", "x\ttrain\t9\tNegative\ttext\n");
        let desc = CorpusDescriptor::new("c", CorpusLayout::Delimited, path, ScoreScale::Imdb);
        assert!(matches!(ingest(&desc, SentimentScheme::Binary, 0), Err(CorpusError::Label { .. })));
        let path = write(dir.path(), "d.tsv", "x\ttrain\t9\t\ttext\n");
        let desc = CorpusDescriptor::new("d", CorpusLayout::Delimited, path, ScoreScale::Imdb);
        assert!(matches!(ingest(&desc, SentimentScheme::Five, 0), Err(CorpusError::Label { .. })));
    }

    #[test]
    fn tree_layout_and_determinism() {
        let dir = tempfile::tempdir().unwrap();
        for (part, class, name, body) in [
            ("train", "pos", "0_9.txt", "loved it"),
            ("train", "pos", "1_7.txt", "nice"),
            ("train", "neg", "2_1.txt", "hated it"),
            ("train", "neg", "3_4.txt", ""),
            ("test", "neg", "4_2.txt", "boring"),
            ("train", "unsup", "5_0.txt", "ignored"),
        ] {
            let d = dir.path().join(part).join(class);
            fs::create_dir_all(&d).unwrap();
            fs::write(d.join(name), body).unwrap();
        }
        let desc = CorpusDescriptor::new("tree", CorpusLayout::Tree, dir.path(), ScoreScale::Imdb);
        let (a, stats, _) = ingest(&desc, SentimentScheme::Four, 42).unwrap();
        let (b, _, _) = ingest(&desc, SentimentScheme::Four, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(stats.raw, 5);
        assert_eq!(stats.empty_removed, 1);
        assert_eq!(a.train.len(), 3);
        assert_eq!(a.test[0].id, "test/neg/4_2");
        assert_eq!(a.test[0].label.sentiment(), Sentiment::HighlyNegative);
    }

    #[test]
    fn auto_rows_are_split_by_seed() {
        let dir = tempfile::tempdir().unwrap();
        let body: String = (0..50).map(|i| format!("r{i:02}\tauto\t{}\t\ttext {i}\n", if i % 2 == 0 { 1 } else { 5 })).collect();
        let path = write(dir.path(), "auto.tsv", &body);
        let desc = CorpusDescriptor::new("auto", CorpusLayout::Delimited, path, ScoreScale::FiveStar);
        let (a, _, _) = ingest(&desc, SentimentScheme::Binary, 3).unwrap();
        let (b, _, _) = ingest(&desc, SentimentScheme::Binary, 3).unwrap();
        let (c, _, _) = ingest(&desc, SentimentScheme::Binary, 4).unwrap();
        assert_eq!(a.test.len(), 10);
        assert_eq!(a, b);
        assert_ne!(a.test, c.test);
    }

    #[test]
    fn counts_and_reference_rows() {
        assert_eq!(class_counts(&[], SentimentScheme::Five).unwrap().total(), 0);
        let b = SentimentScheme::Binary;
        let mk = |s| LabeledReview { id: "x".into(), text: "t".into(), score: None, label: b.label(s).unwrap() };
        let reviews = vec![mk(Sentiment::Positive), mk(Sentiment::Positive), mk(Sentiment::Positive), mk(Sentiment::Negative)];
        let counts = class_counts(&reviews, b).unwrap();
        assert_eq!(counts.get(Sentiment::Positive), 3);
        assert_eq!(counts.get(Sentiment::Negative), 1);
        assert!(class_counts(&reviews, SentimentScheme::Three).is_err());

        let (_, sst5_test) = reference_counts("SST-5").unwrap();
        assert_eq!(sst5_test.as_slice(), &[302, 628, 448, 622, 370]);
        let (amazon2, _) = reference_counts("Amazon-2").unwrap();
        assert_eq!(amazon2.get(Sentiment::Positive), 239660);
        assert_eq!(amazon2.get(Sentiment::Negative), 37056);
        assert_eq!(reference_datasets().count(), 8);
    }

    #[test]
    fn full_size_split_is_checked_exactly() {
        let b = SentimentScheme::Binary;
        let mk = |i: usize, s| LabeledReview { id: format!("{i}"), text: "t".into(), score: None, label: b.label(s).unwrap() };
        let part = |neg: usize, pos: usize| -> Vec<LabeledReview> {
            (0..neg).map(|i| mk(i, Sentiment::Negative)).chain((0..pos).map(|i| mk(i, Sentiment::Positive))).collect()
        };
        let mut split = DatasetSplit { name: "MR".into(), scheme: b, train: part(4265, 4264), test: part(1066, 1067), expected: None };
        assert_eq!(verify_reference(&split).unwrap(), ReferenceCheck::Matched);
        split.train = part(4264, 4265);
        assert!(matches!(verify_reference(&split), Err(CorpusError::CountMismatch { .. })));
        split.train = part(10, 10);
        assert_eq!(verify_reference(&split).unwrap(), ReferenceCheck::Skipped);
    }

    #[test]
    fn review_table_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let b = SentimentScheme::Binary;
        let reviews = vec![LabeledReview {
            id: "r1".into(),
            text: "tab\there\nnew line \\ back".into(),
            score: None,
            label: b.label(Sentiment::Positive).unwrap(),
        }];
        let path = dir.path().join("t.tsv");
        write_review_table(&path, &reviews).unwrap();
        let raw = fs::read_to_string(&path).unwrap();
        assert_eq!(raw.lines().count(), 1);
        assert_eq!(read_review_table(&path, b).unwrap(), reviews);
    }
}
