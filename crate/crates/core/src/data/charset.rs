use std::fmt;

use super::DataError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CharsetKind {
    /// ASCII '0'..='9'.
    Digits,
    /// ASCII 'A'..='Z' followed by 'a'..='z'.
    Letters,
    /// An explicit character list (small experiments).
    Custom,
}

impl CharsetKind {
    pub fn tag(self) -> u8 {
        match self {
            CharsetKind::Digits => 1,
            CharsetKind::Letters => 0,
            CharsetKind::Custom => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(CharsetKind::Letters),
            1 => Some(CharsetKind::Digits),
            2 => Some(CharsetKind::Custom),
            _ => None,
        }
    }
}

impl fmt::Display for CharsetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CharsetKind::Digits => "digits",
            CharsetKind::Letters => "letters",
            CharsetKind::Custom => "custom",
        })
    }
}

impl std::str::FromStr for CharsetKind {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "digits" => Ok(CharsetKind::Digits),
            "letters" => Ok(CharsetKind::Letters),
            other => Err(DataError::UnknownCharset(other.to_string())),
        }
    }
}

/// A conditioned character: its ASCII code and its position in the charset.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CharCode {
    pub ascii: u8,
    pub index: usize,
}

impl CharCode {
    pub fn as_char(self) -> char {
        self.ascii as char
    }
}

/// Ordered set of ASCII characters with an index <-> code bijection.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Charset {
    kind: CharsetKind,
    chars: Vec<u8>,
}

impl Charset {
    /// # Panics
    /// For [`CharsetKind::Custom`], which has no fixed members; use [`Charset::from_chars`].
    pub fn new(kind: CharsetKind) -> Self {
        let chars = match kind {
            CharsetKind::Digits => (b'0'..=b'9').collect(),
            CharsetKind::Letters => (b'A'..=b'Z').chain(b'a'..=b'z').collect(),
            CharsetKind::Custom => panic!("custom charsets are built with Charset::from_chars"),
        };
        Self { kind, chars }
    }

    /// Charset of the given distinct printable ASCII characters, in order.
    /// Lists equal to the digit or letter sets get those kinds.
    pub fn from_chars(chars: &[u8]) -> Result<Self, DataError> {
        if chars.is_empty() {
            return Err(DataError::UnknownCharset(String::new()));
        }
        for (i, &c) in chars.iter().enumerate() {
            if !c.is_ascii_graphic() || chars[..i].contains(&c) {
                return Err(DataError::UnknownCharset(String::from_utf8_lossy(chars).into_owned()));
            }
        }
        for kind in [CharsetKind::Digits, CharsetKind::Letters] {
            let known = Self::new(kind);
            if known.chars == chars {
                return Ok(known);
            }
        }
        Ok(Self {
            kind: CharsetKind::Custom,
            chars: chars.to_vec(),
        })
    }

    pub fn digits() -> Self {
        Self::new(CharsetKind::Digits)
    }

    pub fn letters() -> Self {
        Self::new(CharsetKind::Letters)
    }

    pub fn kind(&self) -> CharsetKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.chars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chars.is_empty()
    }

    pub fn chars(&self) -> &[u8] {
        &self.chars
    }

    pub fn contains(&self, ascii: u8) -> bool {
        self.code(ascii).is_ok()
    }

    pub fn code(&self, ascii: u8) -> Result<CharCode, DataError> {
        self.chars
            .iter()
            .position(|&c| c == ascii)
            .map(|index| CharCode { ascii, index })
            .ok_or(DataError::OutOfCharset(ascii as u32))
    }

    pub fn code_for_char(&self, c: char) -> Result<CharCode, DataError> {
        u8::try_from(c as u32)
            .map_err(|_| DataError::OutOfCharset(c as u32))
            .and_then(|a| self.code(a))
    }

    pub fn at(&self, index: usize) -> Result<CharCode, DataError> {
        self.chars
            .get(index)
            .map(|&ascii| CharCode { ascii, index })
            .ok_or(DataError::OutOfCharset(index as u32))
    }

    /// Maps a dataset class id to its character: digit `d` -> ASCII `48 + d`,
    /// other charsets index into their ordered characters.
    pub fn label_to_ascii(&self, label: usize) -> Result<CharCode, DataError> {
        self.at(label)
    }

    /// All characters of `word` as codes.
    pub fn encode(&self, word: &str) -> Result<Vec<CharCode>, DataError> {
        word.chars().map(|c| self.code_for_char(c)).collect()
    }
}

pub fn label_to_ascii(label: usize, charset: &Charset) -> Result<CharCode, DataError> {
    charset.label_to_ascii(label)
}
