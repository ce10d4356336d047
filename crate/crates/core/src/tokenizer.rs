//! BERT-style preprocessing: lowercasing, basic tokenization, WordPiece
//! splitting, vocab lookup, special tokens and fixed-length padding.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::schemes::ClassLabel;

pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";
pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";

/// Prefix marking a non-initial word piece.
pub const CONTINUATION: &str = "##";

#[derive(Debug, Error)]
pub enum TokenizerError {
    #[error("reading vocab {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("vocab token {token:?} appears at lines {first} and {second}")]
    DuplicateToken { token: String, first: usize, second: usize },
    #[error("vocab is missing special token {0}")]
    MissingSpecial(&'static str),
    #[error("vocab line {0} is empty")]
    EmptyToken(usize),
    #[error("max length must be at least 2, got {0}")]
    MaxLenTooSmall(usize),
}

/// Token to index map loaded from a one-token-per-line vocab file.
#[derive(Debug, Clone)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
    pad: u32,
    unk: u32,
    cls: u32,
    sep: u32,
}

impl Vocab {
    /// Line number (from zero) is the token index.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self, TokenizerError> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, tok) in tokens.iter().enumerate() {
            if tok.is_empty() {
                return Err(TokenizerError::EmptyToken(i));
            }
            if let Some(first) = index.insert(tok.clone(), i as u32) {
                return Err(TokenizerError::DuplicateToken { token: tok.clone(), first: first as usize, second: i });
            }
        }
        let special = |name: &'static str| index.get(name).copied().ok_or(TokenizerError::MissingSpecial(name));
        let (pad, unk, cls, sep) = (special(PAD)?, special(UNK)?, special(CLS)?, special(SEP)?);
        Ok(Self { tokens, index, pad, unk, cls, sep })
    }

    pub fn parse(text: &str) -> Result<Self, TokenizerError> {
        Self::from_tokens(text.lines().map(|l| l.trim_end_matches('\r').to_string()).collect())
    }

    pub fn load(path: &Path) -> Result<Self, TokenizerError> {
        let text = fs::read_to_string(path)
            .map_err(|source| TokenizerError::Io { path: path.display().to_string(), source })?;
        Self::parse(&text)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn pad_id(&self) -> u32 {
        self.pad
    }

    pub fn unk_id(&self) -> u32 {
        self.unk
    }

    pub fn cls_id(&self) -> u32 {
        self.cls
    }

    pub fn sep_id(&self) -> u32 {
        self.sep
    }

    /// Id of a token, falling back to `[UNK]`.
    pub fn id_or_unk(&self, token: &str) -> u32 {
        self.id(token).unwrap_or(self.unk)
    }
}

fn is_punctuation(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(c as u32, 0x2000..=0x206F | 0x3000..=0x303F | 0xFF01..=0xFF0F | 0xFF1A..=0xFF20)
        || matches!(c, '¡' | '¿' | '«' | '»' | '§' | '¶' | '·')
}

/// Lowercases, splits on whitespace and breaks punctuation into standalone
/// tokens. Control characters are removed.
pub fn basic_tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current = String::new();
    for c in text.chars().flat_map(char::to_lowercase) {
        if c.is_whitespace() {
            if !current.is_empty() {
                out.push(std::mem::take(&mut current));
            }
        } else if is_punctuation(c) {
            if !current.is_empty() {
                out.push(std::mem::take(&mut current));
            }
            out.push(c.to_string());
        } else if !c.is_control() {
            current.push(c);
        }
    }
    if !current.is_empty() {
        out.push(current);
    }
    out
}

/// Greedy longest-match-first decomposition of one basic token. Pieces after
/// the first carry the `##` prefix. A token with no full decomposition becomes
/// a single `[UNK]`.
pub fn wordpiece_split(token: &str, vocab: &Vocab) -> Vec<String> {
    if token.is_empty() {
        return Vec::new();
    }
    if vocab.contains(token) {
        return vec![token.to_string()];
    }
    // byte offsets of every char boundary, including the end
    let bounds: Vec<usize> = token.char_indices().map(|(i, _)| i).chain([token.len()]).collect();
    let mut pieces = Vec::new();
    let mut start = 0;
    let mut candidate = String::new();
    while start < bounds.len() - 1 {
        let mut found = None;
        for end in (start + 1..bounds.len()).rev() {
            candidate.clear();
            if start > 0 {
                candidate.push_str(CONTINUATION);
            }
            candidate.push_str(&token[bounds[start]..bounds[end]]);
            if vocab.contains(&candidate) {
                found = Some(end);
                break;
            }
        }
        match found {
            Some(end) => {
                pieces.push(candidate.clone());
                start = end;
            }
            None => return vec![UNK.to_string()],
        }
    }
    pieces
}

/// Full piece sequence of a text (no special tokens).
pub fn tokenize(text: &str, vocab: &Vocab) -> Vec<String> {
    basic_tokenize(text).iter().flat_map(|t| wordpiece_split(t, vocab)).collect()
}

/// A single-sequence classification example. `text_b` is kept for the
/// sentence-pair interface and is always empty here.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InputExample {
    pub text_a: String,
    pub text_b: String,
    pub label: ClassLabel,
}

impl InputExample {
    pub fn new(text_a: impl Into<String>, label: ClassLabel) -> Self {
        Self { text_a: text_a.into(), text_b: String::new(), label }
    }
}

/// Model-ready encoding: `[CLS] pieces [SEP]` right-padded with `[PAD]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedExample {
    pub input_ids: Vec<u32>,
    pub attention_mask: Vec<u8>,
    /// All zeros: single-sequence input.
    pub segment_ids: Vec<u8>,
    pub label: ClassLabel,
}

impl EncodedExample {
    /// Number of unmasked positions.
    pub fn len_unmasked(&self) -> usize {
        self.attention_mask.iter().filter(|&&m| m == 1).count()
    }
}

/// Encodes to exactly `max_len` ids. Pieces beyond `max_len - 2` are dropped
/// from the tail; `[CLS]` and `[SEP]` are always kept.
pub fn encode(example: &InputExample, vocab: &Vocab, max_len: usize) -> Result<EncodedExample, TokenizerError> {
    if max_len < 2 {
        return Err(TokenizerError::MaxLenTooSmall(max_len));
    }
    let pieces = tokenize(&example.text_a, vocab);
    let kept = pieces.len().min(max_len - 2);
    let mut input_ids = Vec::with_capacity(max_len);
    input_ids.push(vocab.cls_id());
    input_ids.extend(pieces[..kept].iter().map(|p| vocab.id_or_unk(p)));
    input_ids.push(vocab.sep_id());
    let used = input_ids.len();
    input_ids.resize(max_len, vocab.pad_id());
    let mut attention_mask = vec![1u8; used];
    attention_mask.resize(max_len, 0);
    Ok(EncodedExample { input_ids, attention_mask, segment_ids: vec![0; max_len], label: example.label })
}
