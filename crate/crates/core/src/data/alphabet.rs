use std::collections::HashMap;

use crate::error::{DsdError, Result};
use crate::numeric::Tensor;

/// The 86 dataset characters in index order. The blank follows at index 86.
pub const DEFAULT_CHARACTERS: &str = concat!(
    " ",
    "0123456789",
    "abcdefghijklmnopqrstuvwxyz",
    "ABCDEFGHIJKLMNOPQRSTUVWXYZ",
    "!?\"'*+-=:;,.<>\\/[]()#$",
    "%",
);

/// Ordered character set plus a trailing blank token.
#[derive(Clone, Debug, PartialEq)]
pub struct Alphabet {
    chars: Vec<char>,
    index: HashMap<char, usize>,
}

impl Default for Alphabet {
    fn default() -> Self {
        Alphabet::new(DEFAULT_CHARACTERS).expect("default alphabet is duplicate-free")
    }
}

impl Alphabet {
    pub fn new(chars: &str) -> Result<Self> {
        let chars: Vec<char> = chars.chars().collect();
        if chars.is_empty() {
            return Err(DsdError::Empty("alphabet".into()));
        }
        let mut index = HashMap::with_capacity(chars.len());
        for (i, &c) in chars.iter().enumerate() {
            if index.insert(c, i).is_some() {
                return Err(DsdError::Invalid(format!("duplicate character {c:?}")));
            }
        }
        Ok(Alphabet { chars, index })
    }

    /// Number of characters, excluding the blank.
    pub fn num_chars(&self) -> usize {
        self.chars.len()
    }

    /// One-hot width `Q`, including the blank.
    pub fn size(&self) -> usize {
        self.chars.len() + 1
    }

    pub fn blank(&self) -> usize {
        self.chars.len()
    }

    pub fn chars(&self) -> &[char] {
        &self.chars
    }

    pub fn index_of(&self, c: char) -> Result<usize> {
        self.index.get(&c).copied().ok_or(DsdError::UnknownCharacter(c))
    }

    pub fn char_at(&self, i: usize) -> Option<char> {
        self.chars.get(i).copied()
    }

    pub fn contains(&self, c: char) -> bool {
        self.index.contains_key(&c)
    }

    pub fn indices(&self, text: &str) -> Result<Vec<usize>> {
        text.chars().map(|c| self.index_of(c)).collect()
    }
}

/// A label as alphabet indices, convertible to an `M x Q` one-hot matrix.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CharacterSequence {
    pub indices: Vec<usize>,
    pub q: usize,
}

impl CharacterSequence {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn one_hot(&self) -> Tensor {
        let mut t = Tensor::zeros(self.indices.len(), self.q);
        for (r, &i) in self.indices.iter().enumerate() {
            t.set(r, i, 1.0);
        }
        t
    }

    pub fn prefix(&self, len: usize) -> CharacterSequence {
        CharacterSequence {
            indices: self.indices[..len].to_vec(),
            q: self.q,
        }
    }
}

pub fn one_hot_encode(text: &str, alphabet: &Alphabet) -> Result<CharacterSequence> {
    if text.is_empty() {
        return Err(DsdError::Empty("text".into()));
    }
    Ok(CharacterSequence {
        indices: alphabet.indices(text)?,
        q: alphabet.size(),
    })
}
