//! Token-level explanations for text scorers.
//!
//! A sentence is split into whitespace-separated words (punctuation stays
//! attached to its word). Each word is kept in turn while every other word
//! is replaced by a mask token, so the sequence length never changes.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{EngineError, Error, PartContext};
use crate::scorer::TextScorer;

pub const DEFAULT_MASK_TOKEN: &str = "[MASK]";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    tokens: Vec<String>,
    mask_token: String,
}

impl TokenSequence {
    pub fn new(tokens: Vec<String>, mask_token: impl Into<String>) -> Result<Self, Error> {
        let mask_token = mask_token.into();
        if tokens.is_empty() {
            return Err(Error::Empty("token sequence"));
        }
        if mask_token.is_empty() {
            return Err(Error::Empty("mask token"));
        }
        Ok(TokenSequence { tokens, mask_token })
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn mask_token(&self) -> &str {
        &self.mask_token
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn with_mask_token(self, mask_token: impl Into<String>) -> Result<Self, Error> {
        TokenSequence::new(self.tokens, mask_token)
    }

    /// The sentence with tokens outside `keep` replaced by the mask token.
    pub fn masked(&self, keep: core::ops::Range<usize>) -> String {
        let mut out = String::new();
        for (i, t) in self.tokens.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            out.push_str(if keep.contains(&i) { t } else { &self.mask_token });
        }
        out
    }
}

/// Whitespace tokenization with the default mask token.
pub fn partition_tokens(text: &str) -> Result<TokenSequence, Error> {
    let tokens: Vec<String> = text.split_whitespace().map(String::from).collect();
    if tokens.is_empty() {
        return Err(Error::Empty("text"));
    }
    TokenSequence::new(tokens, DEFAULT_MASK_TOKEN)
}

/// Per-token class scores with each word preserved alone.
pub fn explain_tokens(seq: &TokenSequence, scorer: &dyn TextScorer, class: usize) -> Result<Vec<f64>, EngineError> {
    explain_token_windows(seq, scorer, class, 1)
}

/// Phrase windows of `width` consecutive tokens sliding by one; each token
/// gets the mean score of the windows containing it. Width 1 is the plain
/// per-word explanation; a width beyond the sequence length keeps everything.
pub fn explain_token_windows(
    seq: &TokenSequence,
    scorer: &dyn TextScorer,
    class: usize,
    width: usize,
) -> Result<Vec<f64>, EngineError> {
    if width == 0 {
        return Err(Error::InvalidParameter {
            name: "width",
            reason: "phrase width must be at least 1".into(),
        }
        .into());
    }
    let n = seq.len();
    let width = width.min(n);
    let windows: Vec<core::ops::Range<usize>> = (0..=n - width).map(|s| s..s + width).collect();
    let texts: Vec<String> = windows.iter().map(|r| seq.masked(r.clone())).collect();
    let scores = scorer.score_text_batch(&texts).map_err(|e| EngineError::Score {
        context: PartContext::Token { index: e.index },
        source: e.source,
    })?;
    let mut sum = alloc::vec![0.0; n];
    let mut count = alloc::vec![0u32; n];
    for (r, v) in windows.iter().zip(&scores) {
        let s = v.get(class).ok_or(EngineError::InvalidClass {
            class,
            arity: v.len(),
        })?;
        for i in r.clone() {
            sum[i] += s;
            count[i] += 1;
        }
    }
    Ok(sum.iter().zip(&count).map(|(s, &c)| s / f64::from(c)).collect())
}
