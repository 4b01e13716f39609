use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::SymlangError;
use crate::waveform::{ParamName, SubType, WaveformType};

/// Largest numeric token value.
pub const MAX_NUM: u16 = 1023;

/// A vocabulary item.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Token {
    Pad,
    Sos,
    Eos,
    Type(WaveformType),
    Sub(SubType),
    Param(ParamName),
    /// Quantized value `NUM_k`.
    Num(u16),
}

impl Token {
    pub fn is_special(self) -> bool {
        matches!(self, Token::Pad | Token::Sos | Token::Eos)
    }
}

/// Surface form: specials in angle brackets, keywords by name, numeric
/// tokens as their bare integer (`NUM_234` is written `234`).
impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Token::Pad => f.write_str("<pad>"),
            Token::Sos => f.write_str("<sos>"),
            Token::Eos => f.write_str("<eos>"),
            Token::Type(t) => t.fmt(f),
            Token::Sub(s) => s.fmt(f),
            Token::Param(p) => p.fmt(f),
            Token::Num(n) => n.fmt(f),
        }
    }
}

impl FromStr for Token {
    type Err = SymlangError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let tok = match s {
            "<pad>" => Token::Pad,
            "<sos>" => Token::Sos,
            "<eos>" => Token::Eos,
            "FM" => Token::Type(WaveformType::FM),
            "PM" => Token::Type(WaveformType::PM),
            "FC" => Token::Type(WaveformType::FC),
            _ => {
                if let Ok(sub) = s.parse::<SubType>() {
                    Token::Sub(sub)
                } else if let Ok(p) = s.parse::<ParamName>() {
                    Token::Param(p)
                } else if s.bytes().all(|b| b.is_ascii_digit()) && !s.is_empty() {
                    match s.parse::<u16>() {
                        Ok(n) if n <= MAX_NUM => Token::Num(n),
                        _ => return Err(SymlangError::UnknownToken(s.to_string())),
                    }
                } else {
                    return Err(SymlangError::UnknownToken(s.to_string()));
                }
            }
        };
        Ok(tok)
    }
}

/// Dense bijection between tokens and ids.
///
/// Layout: `<pad>`=0, `<sos>`=1, `<eos>`=2, then the 25 keywords (types,
/// subtypes, parameter names), then `NUM_0..=NUM_max`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    max_num: u16,
}

const TYPES: [WaveformType; 3] = [WaveformType::FM, WaveformType::PM, WaveformType::FC];
const KEYWORDS: usize = 3 + SubType::ALL.len() + ParamName::ALL.len();
const NUM_BASE: u32 = 3 + KEYWORDS as u32;

impl Default for Vocabulary {
    fn default() -> Self {
        Self { max_num: MAX_NUM }
    }
}

impl Vocabulary {
    pub const PAD: u32 = 0;
    pub const SOS: u32 = 1;
    pub const EOS: u32 = 2;

    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        NUM_BASE as usize + self.max_num as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn max_num(&self) -> u16 {
        self.max_num
    }

    pub fn id(&self, tok: Token) -> Result<u32, SymlangError> {
        let id = match tok {
            Token::Pad => Self::PAD,
            Token::Sos => Self::SOS,
            Token::Eos => Self::EOS,
            Token::Type(t) => 3 + TYPES.iter().position(|x| *x == t).unwrap_or(0) as u32,
            Token::Sub(s) => 6 + SubType::ALL.iter().position(|x| *x == s).unwrap_or(0) as u32,
            Token::Param(p) => {
                6 + SubType::ALL.len() as u32
                    + ParamName::ALL.iter().position(|x| *x == p).unwrap_or(0) as u32
            }
            Token::Num(n) => {
                if n > self.max_num {
                    return Err(SymlangError::NumericOverflow {
                        value: n as i64,
                        max: self.max_num,
                    });
                }
                NUM_BASE + n as u32
            }
        };
        Ok(id)
    }

    pub fn token(&self, id: u32) -> Result<Token, SymlangError> {
        let tok = match id {
            Self::PAD => Token::Pad,
            Self::SOS => Token::Sos,
            Self::EOS => Token::Eos,
            3..=5 => Token::Type(TYPES[(id - 3) as usize]),
            _ if id < 6 + SubType::ALL.len() as u32 => Token::Sub(SubType::ALL[(id - 6) as usize]),
            _ if id < NUM_BASE => {
                Token::Param(ParamName::ALL[(id - 6 - SubType::ALL.len() as u32) as usize])
            }
            _ if (id as usize) < self.len() => Token::Num((id - NUM_BASE) as u16),
            _ => return Err(SymlangError::UnknownId(id)),
        };
        Ok(tok)
    }

    pub fn ids(&self, toks: &[Token]) -> Result<Vec<u32>, SymlangError> {
        toks.iter().map(|&t| self.id(t)).collect()
    }

    pub fn tokens(&self, ids: &[u32]) -> Result<Vec<Token>, SymlangError> {
        ids.iter().map(|&i| self.token(i)).collect()
    }

    /// Whitespace-separated surface string → ids.
    pub fn tokenize(&self, text: &str) -> Result<Vec<u32>, SymlangError> {
        text.split_whitespace()
            .map(|w| w.parse::<Token>().and_then(|t| self.id(t)))
            .collect()
    }

    pub fn detokenize(&self, ids: &[u32]) -> Result<String, SymlangError> {
        let toks = self.tokens(ids)?;
        Ok(toks
            .iter()
            .map(Token::to_string)
            .collect::<Vec<_>>()
            .join(" "))
    }
}

/// Token ids framed by `<sos>` … `<eos>`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    pub ids: Vec<u32>,
}

impl TokenSequence {
    pub const DEFAULT_MAX_LEN: usize = 50;

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn is_complete(&self) -> bool {
        self.ids.first() == Some(&Vocabulary::SOS) && self.ids.last() == Some(&Vocabulary::EOS)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_are_dense_and_round_trip() {
        let v = Vocabulary::new();
        assert_eq!(v.len(), 3 + 25 + 1024);
        for id in 0..v.len() as u32 {
            let t = v.token(id).unwrap();
            assert_eq!(v.id(t).unwrap(), id);
        }
        assert!(v.token(v.len() as u32).is_err());
        assert!(v.id(Token::Num(1024)).is_err());
    }

    #[test]
    fn surface_round_trips() {
        let v = Vocabulary::new();
        for text in ["<sos> <eos> <pad>", "FM LFM cf B T FH Code Frank T4 deltaF", "0 234 1023"] {
            let ids = v.tokenize(text).unwrap();
            assert_eq!(v.detokenize(&ids).unwrap(), text);
        }
        assert!(v.tokenize("FM QPSK").is_err());
        assert!(v.tokenize("1024").is_err());
        assert!(v.tokenize("-3").is_err());
    }
}
