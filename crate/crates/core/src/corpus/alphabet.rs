use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rendering of the mask (the "empty character") in decoded strings.
pub const MASK_GLYPH: char = '∘';

/// Ordered set of password symbols plus two reserved indices.
///
/// Content symbols occupy `0..content_len()`, the mask sits at
/// `content_len()` and padding at `content_len() + 1`, so a model over this
/// alphabet has `cardinality() = content_len() + 2` output classes.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<char>", into = "Vec<char>")]
pub struct Alphabet {
    symbols: Vec<char>,
    index: HashMap<char, usize>,
}

impl fmt::Debug for Alphabet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Alphabet")
            .field("symbols", &self.symbols.iter().collect::<String>())
            .finish()
    }
}

impl TryFrom<Vec<char>> for Alphabet {
    type Error = Error;

    fn try_from(symbols: Vec<char>) -> Result<Self> {
        Alphabet::new(symbols)
    }
}

impl From<Alphabet> for Vec<char> {
    fn from(a: Alphabet) -> Self {
        a.symbols
    }
}

impl Alphabet {
    pub fn new(symbols: Vec<char>) -> Result<Self> {
        if symbols.is_empty() {
            return Err(Error::invalid("alphabet needs at least one symbol"));
        }
        let mut index = HashMap::with_capacity(symbols.len());
        for (i, &c) in symbols.iter().enumerate() {
            if c == MASK_GLYPH {
                return Err(Error::invalid(format!("{MASK_GLYPH:?} is reserved for the mask")));
            }
            if index.insert(c, i).is_some() {
                return Err(Error::invalid(format!("duplicate alphabet symbol {c:?}")));
            }
        }
        Ok(Self { symbols, index })
    }

    /// The 95 printable ASCII characters, space through tilde.
    pub fn printable_ascii() -> Self {
        Self::new((b' '..=b'~').map(char::from).collect()).expect("printable ASCII is a valid alphabet")
    }

    /// Content symbols only.
    pub fn content_len(&self) -> usize {
        self.symbols.len()
    }

    /// Content symbols plus mask and pad.
    pub fn cardinality(&self) -> usize {
        self.symbols.len() + 2
    }

    pub fn mask(&self) -> usize {
        self.symbols.len()
    }

    pub fn pad(&self) -> usize {
        self.symbols.len() + 1
    }

    pub fn symbols(&self) -> &[char] {
        &self.symbols
    }

    pub fn index_of(&self, c: char) -> Option<usize> {
        self.index.get(&c).copied()
    }

    pub fn symbol(&self, index: usize) -> Option<char> {
        self.symbols.get(index).copied()
    }

    pub fn contains(&self, c: char) -> bool {
        self.index.contains_key(&c)
    }

    /// Maps a password to content indices without padding.
    pub fn indices(&self, password: &str) -> Result<Vec<usize>> {
        password
            .chars()
            .enumerate()
            .map(|(position, ch)| self.index_of(ch).ok_or(Error::OutOfAlphabet { ch, position }))
            .collect()
    }

    /// Inverse of [`Alphabet::indices`]; the mask renders as [`MASK_GLYPH`]
    /// and padding is dropped.
    pub fn string_from(&self, indices: &[usize]) -> String {
        indices
            .iter()
            .filter_map(|&i| {
                if i == self.mask() {
                    Some(MASK_GLYPH)
                } else {
                    self.symbol(i)
                }
            })
            .collect()
    }

    pub fn encode(&self, password: &str, max_len: usize) -> Result<EncodedPassword> {
        let mut indices = self.indices(password)?;
        let len = indices.len();
        if len == 0 || len > max_len {
            return Err(Error::Length {
                len,
                min: 1,
                max: max_len,
            });
        }
        indices.resize(max_len, self.pad());
        Ok(EncodedPassword { indices, len })
    }

    pub fn decode(&self, encoded: &EncodedPassword) -> String {
        self.string_from(encoded.content())
    }
}

/// Fixed-width index sequence: content symbols, then padding.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct EncodedPassword {
    indices: Vec<usize>,
    len: usize,
}

impl EncodedPassword {
    /// True password length (number of non-padding positions).
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn max_len(&self) -> usize {
        self.indices.len()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn content(&self) -> &[usize] {
        &self.indices[..self.len]
    }

    /// Replaces the symbol at 0-based `position` with `symbol`.
    pub(crate) fn with_symbol(&self, position: usize, symbol: usize) -> Self {
        let mut out = self.clone();
        out.indices[position] = symbol;
        out
    }
}
