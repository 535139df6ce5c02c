use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TokenizerError {
    #[error("budget must be positive")]
    ZeroBudget,
    #[error("subword tokenizer needs a merges file")]
    MissingVocab,
    #[error("cannot read merges file {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: expected two space-separated symbols")]
    BadMerge { path: PathBuf, line: usize },
    #[error("unknown tokenizer `{0}` (expected `whitespace-punct` or `bpe:<merges-file>`)")]
    UnknownKind(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TokenizerKind {
    WhitespacePunct,
    SubwordVocabFile,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TokenizerSpec {
    pub kind: TokenizerKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vocab_path: Option<PathBuf>,
    #[serde(default = "default_budget")]
    pub budget: usize,
}

fn default_budget() -> usize {
    512
}

impl Default for TokenizerSpec {
    fn default() -> Self {
        Self {
            kind: TokenizerKind::WhitespacePunct,
            vocab_path: None,
            budget: default_budget(),
        }
    }
}

impl TokenizerSpec {
    pub fn with_budget(mut self, budget: usize) -> Self {
        self.budget = budget;
        self
    }

    pub fn build(&self) -> Result<Tokenizer, TokenizerError> {
        if self.budget == 0 {
            return Err(TokenizerError::ZeroBudget);
        }
        let merges = match self.kind {
            TokenizerKind::WhitespacePunct => None,
            TokenizerKind::SubwordVocabFile => {
                let path = self.vocab_path.as_ref().ok_or(TokenizerError::MissingVocab)?;
                Some(Bpe::load(path)?)
            }
        };
        Ok(Tokenizer { merges })
    }
}

/// `whitespace-punct` or `bpe:<path>`.
impl FromStr for TokenizerSpec {
    type Err = TokenizerError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "whitespace-punct" | "whitespace" => Ok(Self::default()),
            _ => match s.strip_prefix("bpe:") {
                Some(path) if !path.is_empty() => Ok(Self {
                    kind: TokenizerKind::SubwordVocabFile,
                    vocab_path: Some(PathBuf::from(path)),
                    budget: default_budget(),
                }),
                _ => Err(TokenizerError::UnknownKind(s.to_string())),
            },
        }
    }
}

impl fmt::Display for TokenizerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.kind, &self.vocab_path) {
            (TokenizerKind::SubwordVocabFile, Some(p)) => write!(f, "bpe:{}", p.display()),
            _ => f.write_str("whitespace-punct"),
        }
    }
}

/// Byte-pair merges in rank order, one `left right` pair per line.
#[derive(Debug, Clone)]
struct Bpe {
    ranks: HashMap<(String, String), usize>,
}

impl Bpe {
    fn load(path: &Path) -> Result<Self, TokenizerError> {
        let text = fs::read_to_string(path).map_err(|source| TokenizerError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, path)
    }

    fn parse(text: &str, path: &Path) -> Result<Self, TokenizerError> {
        let mut ranks = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split_whitespace();
            match (parts.next(), parts.next(), parts.next()) {
                (Some(a), Some(b), None) => {
                    let rank = ranks.len();
                    ranks.entry((a.to_string(), b.to_string())).or_insert(rank);
                }
                _ => {
                    return Err(TokenizerError::BadMerge {
                        path: path.to_path_buf(),
                        line: i + 1,
                    })
                }
            }
        }
        Ok(Self { ranks })
    }

    fn apply(&self, word: &str, out: &mut Vec<String>) {
        let mut symbols: Vec<String> = word.chars().map(String::from).collect();
        while symbols.len() > 1 {
            let best = symbols
                .windows(2)
                .enumerate()
                .filter_map(|(i, w)| {
                    self.ranks
                        .get(&(w[0].clone(), w[1].clone()))
                        .map(|r| (*r, i))
                })
                .min();
            let Some((_, i)) = best else { break };
            let right = symbols.remove(i + 1);
            symbols[i].push_str(&right);
        }
        out.extend(symbols);
    }
}

/// Splits source text into tokens. Runs of letters, digits and `_` form one
/// word; every other non-space character is its own token. With merges
/// loaded, each word is further split by byte-pair merging.
///
/// Code text can never yield one of the special marker tokens, since those
/// all contain punctuation that this splitter separates.
#[derive(Debug, Clone, Default)]
pub struct Tokenizer {
    merges: Option<Bpe>,
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

impl Tokenizer {
    pub fn whitespace_punct() -> Self {
        Self { merges: None }
    }

    pub fn tokenize_into(&self, text: &str, out: &mut Vec<String>) {
        let mut chars = text.char_indices().peekable();
        while let Some((start, c)) = chars.next() {
            if c.is_whitespace() {
                continue;
            }
            if !is_word_char(c) {
                out.push(c.to_string());
                continue;
            }
            let mut end = start + c.len_utf8();
            while let Some(&(i, d)) = chars.peek() {
                if !is_word_char(d) {
                    break;
                }
                end = i + d.len_utf8();
                chars.next();
            }
            let word = &text[start..end];
            match &self.merges {
                Some(bpe) => bpe.apply(word, out),
                None => out.push(word.to_string()),
            }
        }
    }

    pub fn tokenize(&self, text: &str) -> Vec<String> {
        let mut out = Vec::new();
        self.tokenize_into(text, &mut out);
        out
    }

    pub fn count(&self, text: &str) -> usize {
        self.tokenize(text).len()
    }
}
