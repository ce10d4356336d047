//! Sentiment label universes and the score-to-label rules used to build the
//! binary, three, four and five class dataset variants.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// An ordered sentiment category, most negative first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Sentiment {
    HighlyNegative,
    Negative,
    Neutral,
    Positive,
    HighlyPositive,
}

impl Sentiment {
    pub const ALL: [Sentiment; 5] = [
        Sentiment::HighlyNegative,
        Sentiment::Negative,
        Sentiment::Neutral,
        Sentiment::Positive,
        Sentiment::HighlyPositive,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Sentiment::HighlyNegative => "HighlyNegative",
            Sentiment::Negative => "Negative",
            Sentiment::Neutral => "Neutral",
            Sentiment::Positive => "Positive",
            Sentiment::HighlyPositive => "HighlyPositive",
        }
    }

    /// Short column symbol (`HN`, `N`, `NEU`, `P`, `HP`).
    pub fn symbol(self) -> &'static str {
        match self {
            Sentiment::HighlyNegative => "HN",
            Sentiment::Negative => "N",
            Sentiment::Neutral => "NEU",
            Sentiment::Positive => "P",
            Sentiment::HighlyPositive => "HP",
        }
    }
}

impl fmt::Display for Sentiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Sentiment {
    type Err = SchemeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Sentiment::ALL
            .iter()
            .copied()
            .find(|c| c.name().eq_ignore_ascii_case(s) || c.symbol().eq_ignore_ascii_case(s))
            .ok_or_else(|| SchemeError::UnknownSentiment(s.to_string()))
    }
}

/// A categorical label universe of 2, 3, 4 or 5 ordered classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SentimentScheme {
    Binary,
    Three,
    Four,
    Five,
}

impl SentimentScheme {
    pub const ALL: [SentimentScheme; 4] = [
        SentimentScheme::Binary,
        SentimentScheme::Three,
        SentimentScheme::Four,
        SentimentScheme::Five,
    ];

    pub fn arity(self) -> usize {
        self.classes().len()
    }

    pub fn from_arity(arity: usize) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.arity() == arity)
    }

    /// Classes of the scheme, strictly ordered most negative to most positive.
    pub fn classes(self) -> &'static [Sentiment] {
        use Sentiment::*;
        match self {
            SentimentScheme::Binary => &[Negative, Positive],
            SentimentScheme::Three => &[Negative, Neutral, Positive],
            SentimentScheme::Four => &[HighlyNegative, Negative, Positive, HighlyPositive],
            SentimentScheme::Five => &[HighlyNegative, Negative, Neutral, Positive, HighlyPositive],
        }
    }

    pub fn index_of(self, sentiment: Sentiment) -> Option<usize> {
        self.classes().iter().position(|&c| c == sentiment)
    }

    pub fn label(self, sentiment: Sentiment) -> Result<ClassLabel, SchemeError> {
        self.index_of(sentiment)
            .map(|index| ClassLabel { scheme: self, index })
            .ok_or(SchemeError::NotInScheme { sentiment, scheme: self })
    }

    /// Serialized name used in configs and report files.
    pub fn name(self) -> &'static str {
        match self {
            SentimentScheme::Binary => "binary",
            SentimentScheme::Three => "three",
            SentimentScheme::Four => "four",
            SentimentScheme::Five => "five",
        }
    }
}

impl fmt::Display for SentimentScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SentimentScheme {
    type Err = SchemeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|scheme| scheme.name() == s)
            .ok_or_else(|| SchemeError::UnknownScheme(s.to_string()))
    }
}

/// A class index valid for its scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ClassLabel {
    scheme: SentimentScheme,
    index: usize,
}

impl ClassLabel {
    pub fn new(scheme: SentimentScheme, index: usize) -> Result<Self, SchemeError> {
        if index < scheme.arity() {
            Ok(Self { scheme, index })
        } else {
            Err(SchemeError::LabelOutOfRange { index, scheme })
        }
    }

    pub fn scheme(self) -> SentimentScheme {
        self.scheme
    }

    pub fn index(self) -> usize {
        self.index
    }

    pub fn sentiment(self) -> Sentiment {
        self.scheme.classes()[self.index]
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.sentiment())
    }
}

/// The two rating scales of the supported corpora.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScoreScale {
    /// 1..=10, with the neutral ground 5 and 6 absent.
    Imdb,
    /// 1..=5 star ratings.
    FiveStar,
}

impl ScoreScale {
    pub fn name(self) -> &'static str {
        match self {
            ScoreScale::Imdb => "imdb",
            ScoreScale::FiveStar => "five-star",
        }
    }

    pub fn admits(self, value: i32) -> bool {
        match self {
            ScoreScale::Imdb => matches!(value, 1..=4 | 7..=10),
            ScoreScale::FiveStar => (1..=5).contains(&value),
        }
    }
}

impl FromStr for ScoreScale {
    type Err = SchemeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "imdb" => Ok(ScoreScale::Imdb),
            "five-star" => Ok(ScoreScale::FiveStar),
            other => Err(SchemeError::UnknownScale(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RawScore {
    pub value: i32,
    pub scale: ScoreScale,
}

impl RawScore {
    pub fn imdb(value: i32) -> Self {
        Self { value, scale: ScoreScale::Imdb }
    }

    pub fn five_star(value: i32) -> Self {
        Self { value, scale: ScoreScale::FiveStar }
    }

    fn check(self, scale: ScoreScale) -> Result<i32, SchemeError> {
        if self.scale != scale || !scale.admits(self.value) {
            return Err(SchemeError::InvalidScore { value: self.value, scale: self.scale });
        }
        Ok(self.value)
    }
}

/// Result of mapping a score that may be omitted from a scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelOutcome {
    Label(ClassLabel),
    Dropped,
}

impl LabelOutcome {
    pub fn label(self) -> Option<ClassLabel> {
        match self {
            LabelOutcome::Label(label) => Some(label),
            LabelOutcome::Dropped => None,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SchemeError {
    #[error("score {value} is not valid on the {} scale", .scale.name())]
    InvalidScore { value: i32, scale: ScoreScale },
    #[error("the {} scale defines no {scheme} scheme", .scale.name())]
    UnsupportedScheme { scheme: SentimentScheme, scale: ScoreScale },
    #[error("parent label {parent} is inconsistent with score {score}")]
    Inconsistent { parent: Sentiment, score: i32 },
    #[error("class index {index} is outside the {scheme} scheme")]
    LabelOutOfRange { index: usize, scheme: SentimentScheme },
    #[error("{sentiment} is not a class of the {scheme} scheme")]
    NotInScheme { sentiment: Sentiment, scheme: SentimentScheme },
    #[error("unknown scheme {0:?} (expected binary, three, four or five)")]
    UnknownScheme(String),
    #[error("unknown sentiment {0:?}")]
    UnknownSentiment(String),
    #[error("unknown score scale {0:?} (expected imdb or five-star)")]
    UnknownScale(String),
}

/// Maps an IMDb 1..10 rating into the binary, three or four class scheme.
///
/// The three class rule sends both 4 and 7 to `Neutral`, even though 4 is
/// negative under the binary rule.
pub fn imdb_score_to_label(score: RawScore, scheme: SentimentScheme) -> Result<ClassLabel, SchemeError> {
    let value = score.check(ScoreScale::Imdb)?;
    use Sentiment::*;
    let sentiment = match scheme {
        SentimentScheme::Binary => {
            if value <= 4 {
                Negative
            } else {
                Positive
            }
        }
        SentimentScheme::Three => match value {
            1..=3 => Negative,
            4 | 7 => Neutral,
            _ => Positive,
        },
        SentimentScheme::Four => match value {
            1 | 2 => HighlyNegative,
            3 | 4 => Negative,
            7 | 8 => Positive,
            _ => HighlyPositive,
        },
        SentimentScheme::Five => {
            return Err(SchemeError::UnsupportedScheme { scheme, scale: ScoreScale::Imdb })
        }
    };
    scheme.label(sentiment)
}

/// Maps a 1..5 star rating into the binary or five class scheme. In the
/// binary scheme a 3 is dropped.
pub fn amazon_score_to_label(score: RawScore, scheme: SentimentScheme) -> Result<LabelOutcome, SchemeError> {
    let value = score.check(ScoreScale::FiveStar)?;
    match scheme {
        SentimentScheme::Binary => Ok(match value {
            1 | 2 => LabelOutcome::Label(scheme.label(Sentiment::Negative)?),
            3 => LabelOutcome::Dropped,
            _ => LabelOutcome::Label(scheme.label(Sentiment::Positive)?),
        }),
        SentimentScheme::Five => Ok(LabelOutcome::Label(ClassLabel::new(scheme, (value - 1) as usize)?)),
        _ => Err(SchemeError::UnsupportedScheme { scheme, scale: ScoreScale::FiveStar }),
    }
}

/// Dispatches on the score's scale.
pub fn score_to_label(score: RawScore, scheme: SentimentScheme) -> Result<LabelOutcome, SchemeError> {
    match score.scale {
        ScoreScale::Imdb => imdb_score_to_label(score, scheme).map(LabelOutcome::Label),
        ScoreScale::FiveStar => amazon_score_to_label(score, scheme),
    }
}

/// Refines a binary IMDb label into its four class child using the score.
pub fn binary_tree_split(parent: ClassLabel, score: RawScore) -> Result<ClassLabel, SchemeError> {
    if parent.scheme() != SentimentScheme::Binary {
        return Err(SchemeError::NotInScheme { sentiment: parent.sentiment(), scheme: SentimentScheme::Binary });
    }
    let coarse = imdb_score_to_label(score, SentimentScheme::Binary)?;
    if coarse != parent {
        return Err(SchemeError::Inconsistent { parent: parent.sentiment(), score: score.value });
    }
    imdb_score_to_label(score, SentimentScheme::Four)
}

/// Collapses a four class label onto its binary parent.
pub fn coarsen(label: ClassLabel) -> Result<ClassLabel, SchemeError> {
    use Sentiment::*;
    let parent = match label.sentiment() {
        HighlyNegative | Negative => Negative,
        Positive | HighlyPositive => Positive,
        Neutral => {
            return Err(SchemeError::NotInScheme { sentiment: Neutral, scheme: SentimentScheme::Binary })
        }
    };
    SentimentScheme::Binary.label(parent)
}
