//! Overall sentiment polarity of a prediction vector.
//!
//! The occurrences of each class are tallied into [`ClassCounts`] and fed to a
//! scheme-specific threshold heuristic. Every ratio gate is strict and is
//! evaluated in exact integer arithmetic: `a > 1.2 * b` is checked as
//! `10 * a > 12 * b`, so boundary values never depend on float rounding.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::schemes::{ClassLabel, SchemeError, Sentiment, SentimentScheme};

/// The dominant sentiment verdict for a collection of reviews.
pub type OverallPolarity = Sentiment;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolarityError {
    #[error("prediction vector is empty")]
    EmptyVector,
    #[error("counts are for the {actual} scheme, expected {expected}")]
    SchemeMismatch { expected: SentimentScheme, actual: SentimentScheme },
    #[error("expected {expected} counts, got {actual}")]
    WrongArity { expected: usize, actual: usize },
    #[error("invalid threshold: {0}")]
    InvalidThreshold(String),
    #[error("delta must be nonnegative, got {0}")]
    NegativeDelta(f64),
    #[error(transparent)]
    Scheme(#[from] SchemeError),
}

/// Per-class tally of a label vector.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ClassCounts {
    scheme: SentimentScheme,
    counts: Vec<u64>,
}

impl ClassCounts {
    pub fn zeros(scheme: SentimentScheme) -> Self {
        Self { scheme, counts: vec![0; scheme.arity()] }
    }

    /// Counts in scheme class order (most negative first).
    pub fn new(scheme: SentimentScheme, counts: Vec<u64>) -> Result<Self, PolarityError> {
        if counts.len() != scheme.arity() {
            return Err(PolarityError::WrongArity { expected: scheme.arity(), actual: counts.len() });
        }
        Ok(Self { scheme, counts })
    }

    /// Builds counts from `(sentiment, count)` pairs; classes not mentioned are zero.
    pub fn from_pairs(
        scheme: SentimentScheme,
        pairs: &[(Sentiment, u64)],
    ) -> Result<Self, PolarityError> {
        let mut counts = Self::zeros(scheme);
        for &(sentiment, n) in pairs {
            let index = scheme.label(sentiment)?.index();
            counts.counts[index] += n;
        }
        Ok(counts)
    }

    pub fn from_labels<I>(scheme: SentimentScheme, labels: I) -> Result<Self, PolarityError>
    where
        I: IntoIterator<Item = ClassLabel>,
    {
        let mut counts = Self::zeros(scheme);
        for label in labels {
            if label.scheme() != scheme {
                return Err(PolarityError::SchemeMismatch { expected: scheme, actual: label.scheme() });
            }
            counts.counts[label.index()] += 1;
        }
        Ok(counts)
    }

    pub fn from_indices<I>(scheme: SentimentScheme, indices: I) -> Result<Self, PolarityError>
    where
        I: IntoIterator<Item = usize>,
    {
        let mut counts = Self::zeros(scheme);
        for index in indices {
            let label = ClassLabel::new(scheme, index)?;
            counts.counts[label.index()] += 1;
        }
        Ok(counts)
    }

    pub fn scheme(&self) -> SentimentScheme {
        self.scheme
    }

    pub fn as_slice(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Count for a sentiment; zero when the scheme lacks that class.
    pub fn get(&self, sentiment: Sentiment) -> u64 {
        self.scheme.index_of(sentiment).map_or(0, |i| self.counts[i])
    }

    pub fn scaled(&self, factor: u64) -> Self {
        Self { scheme: self.scheme, counts: self.counts.iter().map(|c| c * factor).collect() }
    }
}

impl fmt::Display for ClassCounts {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .scheme
            .classes()
            .iter()
            .zip(&self.counts)
            .map(|(c, n)| format!("{} {}", c.symbol(), n))
            .collect();
        write!(f, "({})", parts.join(", "))
    }
}

/// A nonnegative decimal threshold held as an exact fraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ratio {
    num: u64,
    den: u64,
}

impl Ratio {
    pub const fn new(num: u64, den: u64) -> Self {
        Self { num, den }
    }

    /// `lhs > self * rhs`, exactly.
    pub fn exceeded_by(self, lhs: u64, rhs: u64) -> bool {
        lhs as u128 * self.den as u128 > self.num as u128 * rhs as u128
    }

    pub fn as_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_f64())
    }
}

impl FromStr for Ratio {
    type Err = PolarityError;

    /// Parses a plain decimal such as `1.2` or `0.85` without going through a float.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || PolarityError::InvalidThreshold(s.to_string());
        let s = s.trim();
        let (int, frac) = s.split_once('.').unwrap_or((s, ""));
        if int.is_empty() && frac.is_empty() {
            return Err(bad());
        }
        if !int.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) || frac.len() > 12 {
            return Err(bad());
        }
        let den = 10u64.pow(frac.len() as u32);
        let int: u64 = if int.is_empty() { 0 } else { int.parse().map_err(|_| bad())? };
        let frac: u64 = if frac.is_empty() { 0 } else { frac.parse().map_err(|_| bad())? };
        let num = int.checked_mul(den).and_then(|v| v.checked_add(frac)).ok_or_else(bad)?;
        Ok(Ratio { num, den })
    }
}

/// Thresholds of the overall-polarity heuristics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PolarityThresholds {
    /// Share of neutral predictions above which the verdict is neutral.
    pub neutral_fraction: Ratio,
    /// Dominance ratio between the negative and positive base classes.
    pub base_ratio: Ratio,
    /// Dominance ratio between a "highly" sub-class and its sibling.
    pub sub_ratio: Ratio,
}

impl Default for PolarityThresholds {
    fn default() -> Self {
        Self {
            neutral_fraction: Ratio::new(85, 100),
            base_ratio: Ratio::new(12, 10),
            sub_ratio: Ratio::new(15, 10),
        }
    }
}

impl PolarityThresholds {
    pub fn validate(&self) -> Result<(), PolarityError> {
        let Ratio { num, den } = self.neutral_fraction;
        if num == 0 || num >= den {
            return Err(PolarityError::InvalidThreshold(format!(
                "neutral fraction {} must lie in (0, 1)",
                self.neutral_fraction
            )));
        }
        for (name, r) in [("base", self.base_ratio), ("sub", self.sub_ratio)] {
            if r.num <= r.den {
                return Err(PolarityError::InvalidThreshold(format!("{name} ratio {r} must exceed 1")));
            }
        }
        Ok(())
    }
}

impl fmt::Display for PolarityThresholds {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "neu={},base={},sub={}", self.neutral_fraction, self.base_ratio, self.sub_ratio)
    }
}

impl FromStr for PolarityThresholds {
    type Err = PolarityError;

    /// Parses `neu=0.85,base=1.2,sub=1.5`; omitted keys keep their defaults.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut th = PolarityThresholds::default();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| PolarityError::InvalidThreshold(part.to_string()))?;
            let value: Ratio = value.parse()?;
            match key.trim() {
                "neu" | "neutral" => th.neutral_fraction = value,
                "base" => th.base_ratio = value,
                "sub" => th.sub_ratio = value,
                other => return Err(PolarityError::InvalidThreshold(format!("unknown key {other:?}"))),
            }
        }
        th.validate()?;
        Ok(th)
    }
}

fn expect_scheme(counts: &ClassCounts, scheme: SentimentScheme) -> Result<(), PolarityError> {
    if counts.scheme != scheme {
        return Err(PolarityError::SchemeMismatch { expected: scheme, actual: counts.scheme });
    }
    if counts.total() == 0 {
        return Err(PolarityError::EmptyVector);
    }
    Ok(())
}

fn neutral_dominates(counts: &ClassCounts, th: &PolarityThresholds) -> bool {
    th.neutral_fraction.exceeded_by(counts.get(Sentiment::Neutral), counts.total())
}

/// Hierarchical base-class then sub-class comparison shared by the four and
/// five class heuristics. Neutral counts play no part here.
fn hierarchical(counts: &ClassCounts, th: &PolarityThresholds) -> OverallPolarity {
    let hneg = counts.get(Sentiment::HighlyNegative);
    let neg = counts.get(Sentiment::Negative);
    let pos = counts.get(Sentiment::Positive);
    let hpos = counts.get(Sentiment::HighlyPositive);
    let (neg_total, pos_total) = (hneg + neg, pos + hpos);
    if th.base_ratio.exceeded_by(neg_total, pos_total) {
        if th.sub_ratio.exceeded_by(hneg, neg) {
            Sentiment::HighlyNegative
        } else {
            Sentiment::Negative
        }
    } else if th.base_ratio.exceeded_by(pos_total, neg_total) {
        if th.sub_ratio.exceeded_by(hpos, pos) {
            Sentiment::HighlyPositive
        } else {
            Sentiment::Positive
        }
    } else {
        Sentiment::Neutral
    }
}

pub fn overall_binary(counts: &ClassCounts, th: &PolarityThresholds) -> Result<OverallPolarity, PolarityError> {
    expect_scheme(counts, SentimentScheme::Binary)?;
    let pos = counts.get(Sentiment::Positive);
    let neg = counts.get(Sentiment::Negative);
    Ok(if th.base_ratio.exceeded_by(pos, neg) {
        Sentiment::Positive
    } else if th.base_ratio.exceeded_by(neg, pos) {
        Sentiment::Negative
    } else {
        Sentiment::Neutral
    })
}

pub fn overall_three(counts: &ClassCounts, th: &PolarityThresholds) -> Result<OverallPolarity, PolarityError> {
    expect_scheme(counts, SentimentScheme::Three)?;
    if neutral_dominates(counts, th) {
        return Ok(Sentiment::Neutral);
    }
    let pos = counts.get(Sentiment::Positive);
    let neg = counts.get(Sentiment::Negative);
    Ok(if th.sub_ratio.exceeded_by(pos, neg) {
        Sentiment::Positive
    } else if th.sub_ratio.exceeded_by(neg, pos) {
        Sentiment::Negative
    } else {
        Sentiment::Neutral
    })
}

pub fn overall_four(counts: &ClassCounts, th: &PolarityThresholds) -> Result<OverallPolarity, PolarityError> {
    expect_scheme(counts, SentimentScheme::Four)?;
    Ok(hierarchical(counts, th))
}

/// The neutral gate uses the full total (neutral included); after it, the
/// four-class hierarchy runs on the remaining classes.
pub fn overall_five(counts: &ClassCounts, th: &PolarityThresholds) -> Result<OverallPolarity, PolarityError> {
    expect_scheme(counts, SentimentScheme::Five)?;
    if neutral_dominates(counts, th) {
        return Ok(Sentiment::Neutral);
    }
    Ok(hierarchical(counts, th))
}

/// Runs the heuristic matching the counts' scheme.
pub fn overall_polarity(counts: &ClassCounts, th: &PolarityThresholds) -> Result<OverallPolarity, PolarityError> {
    match counts.scheme {
        SentimentScheme::Binary => overall_binary(counts, th),
        SentimentScheme::Three => overall_three(counts, th),
        SentimentScheme::Four => overall_four(counts, th),
        SentimentScheme::Five => overall_five(counts, th),
    }
}

/// Class probabilities of a binary classifier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinaryProbs {
    pub negative: f64,
    pub positive: f64,
}

/// Turns a binary prediction into a three class label: `Neutral` when the
/// probability gap is strictly below `delta`, otherwise the argmax class
/// (ties resolve to `Negative`).
pub fn delta_neutralize(p: BinaryProbs, delta: f64) -> Result<ClassLabel, PolarityError> {
    if !(delta >= 0.0) {
        return Err(PolarityError::NegativeDelta(delta));
    }
    let scheme = SentimentScheme::Three;
    let sentiment = if (p.positive - p.negative).abs() < delta {
        Sentiment::Neutral
    } else if p.positive > p.negative {
        Sentiment::Positive
    } else {
        Sentiment::Negative
    };
    Ok(scheme.label(sentiment)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use Sentiment::*;

    fn counts(scheme: SentimentScheme, pairs: &[(Sentiment, u64)]) -> ClassCounts {
        ClassCounts::from_pairs(scheme, pairs).unwrap()
    }

    fn th() -> PolarityThresholds {
        PolarityThresholds::default()
    }

    #[test]
    fn binary_examples() {
        let b = SentimentScheme::Binary;
        assert_eq!(overall_binary(&counts(b, &[(Positive, 60), (Negative, 40)]), &th()).unwrap(), Positive);
        assert_eq!(overall_binary(&counts(b, &[(Positive, 12500), (Negative, 12500)]), &th()).unwrap(), Neutral);
        assert_eq!(overall_binary(&counts(b, &[(Positive, 239660), (Negative, 37056)]), &th()).unwrap(), Positive);
        // exact boundary: 6 = 1.2 * 5 falls through
        assert_eq!(overall_binary(&counts(b, &[(Positive, 6), (Negative, 5)]), &th()).unwrap(), Neutral);
        assert_eq!(overall_binary(&ClassCounts::zeros(b), &th()), Err(PolarityError::EmptyVector));
    }

    #[test]
    fn three_examples() {
        let s = SentimentScheme::Three;
        assert_eq!(
            overall_three(&counts(s, &[(Negative, 10), (Neutral, 900), (Positive, 90)]), &th()).unwrap(),
            Neutral
        );
        assert_eq!(
            overall_three(&counts(s, &[(Negative, 14958), (Neutral, 4816), (Positive, 18227)]), &th()).unwrap(),
            Neutral
        );
        assert_eq!(overall_three(&counts(s, &[(Negative, 100), (Positive, 151)]), &th()).unwrap(), Positive);
        assert_eq!(overall_three(&counts(s, &[(Negative, 100), (Positive, 150)]), &th()).unwrap(), Neutral);
        assert_eq!(overall_three(&counts(s, &[(Negative, 151), (Positive, 100)]), &th()).unwrap(), Negative);
    }

    #[test]
    fn four_examples() {
        let s = SentimentScheme::Four;
        let imdb4 = counts(s, &[(HighlyPositive, 11471), (Positive, 8530), (Negative, 8234), (HighlyNegative, 11767)]);
        assert_eq!(overall_four(&imdb4, &th()).unwrap(), Neutral);
        let hn = counts(s, &[(HighlyNegative, 60), (Negative, 30), (Positive, 20), (HighlyPositive, 20)]);
        assert_eq!(overall_four(&hn, &th()).unwrap(), HighlyNegative);
        let n = counts(s, &[(HighlyNegative, 10), (Negative, 50), (Positive, 20), (HighlyPositive, 20)]);
        assert_eq!(overall_four(&n, &th()).unwrap(), Negative);
    }

    #[test]
    fn five_examples() {
        let s = SentimentScheme::Five;
        let neu = ClassCounts::new(s, vec![0, 0, 86, 10, 4]).unwrap();
        assert_eq!(overall_five(&neu, &th()).unwrap(), Neutral);
        let sst5 = ClassCounts::new(s, vec![1208, 2512, 1794, 2489, 1482]).unwrap();
        assert_eq!(overall_five(&sst5, &th()).unwrap(), Neutral);
        let hp = ClassCounts::new(s, vec![1, 2, 3, 10, 20]).unwrap();
        assert_eq!(overall_five(&hp, &th()).unwrap(), HighlyPositive);
    }

    #[test]
    fn scheme_mismatch_is_rejected() {
        let c = ClassCounts::new(SentimentScheme::Four, vec![1, 1, 1, 1]).unwrap();
        assert!(matches!(overall_five(&c, &th()), Err(PolarityError::SchemeMismatch { .. })));
        assert!(ClassCounts::new(SentimentScheme::Four, vec![1, 1]).is_err());
        assert!(ClassCounts::from_pairs(SentimentScheme::Binary, &[(Neutral, 1)]).is_err());
    }

    #[test]
    fn delta_examples() {
        let p = |positive: f64| BinaryProbs { negative: 1.0 - positive, positive };
        assert_eq!(delta_neutralize(p(0.51), 0.05).unwrap().sentiment(), Neutral);
        assert_eq!(delta_neutralize(p(0.9), 0.05).unwrap().sentiment(), Positive);
        assert_eq!(delta_neutralize(p(0.2), 0.05).unwrap().sentiment(), Negative);
        assert_eq!(delta_neutralize(p(0.5), 0.0).unwrap().sentiment(), Negative);
        assert_eq!(delta_neutralize(p(0.500001), 0.0).unwrap().sentiment(), Positive);
        assert!(delta_neutralize(p(0.5), -0.1).is_err());
        assert!(delta_neutralize(p(0.5), f64::NAN).is_err());
    }

    #[test]
    fn thresholds_parse() {
        let parsed: PolarityThresholds = "neu=0.85,base=1.2,sub=1.5".parse().unwrap();
        assert_eq!(parsed, PolarityThresholds::default());
        let partial: PolarityThresholds = "base=1.3".parse().unwrap();
        assert!(partial.base_ratio.exceeded_by(14, 10) && !partial.base_ratio.exceeded_by(13, 10));
        assert!("neu=1.0".parse::<PolarityThresholds>().is_err());
        assert!("base=1".parse::<PolarityThresholds>().is_err());
        assert!("foo=2".parse::<PolarityThresholds>().is_err());
        assert!("base=x".parse::<PolarityThresholds>().is_err());
        assert_eq!(".5".parse::<Ratio>().unwrap(), Ratio::new(5, 10));
    }

    fn flip(p: Sentiment) -> Sentiment {
        match p {
            Positive => Negative,
            Negative => Positive,
            other => other,
        }
    }

    proptest! {
        #[test]
        fn scale_invariance(c in proptest::collection::vec(0u64..500, 5), k in 1u64..50) {
            prop_assume!(c.iter().sum::<u64>() > 0);
            for scheme in SentimentScheme::ALL {
                let base = ClassCounts::new(scheme, c[..scheme.arity()].to_vec()).unwrap();
                if base.total() == 0 { continue; }
                let a = overall_polarity(&base, &th()).unwrap();
                let b = overall_polarity(&base.scaled(k), &th()).unwrap();
                prop_assert_eq!(a, b);
            }
        }

        #[test]
        fn binary_swap_antisymmetry(neg in 0u64..10_000, pos in 0u64..10_000) {
            prop_assume!(neg + pos > 0);
            let b = SentimentScheme::Binary;
            let v = overall_binary(&ClassCounts::new(b, vec![neg, pos]).unwrap(), &th()).unwrap();
            let w = overall_binary(&ClassCounts::new(b, vec![pos, neg]).unwrap(), &th()).unwrap();
            prop_assert_eq!(flip(v), w);
        }
    }
}
