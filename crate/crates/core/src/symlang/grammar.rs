//! Context-free grammar of the waveform description language.

use std::collections::HashMap;
use std::fmt;

use super::vocab::Token;
use super::SymlangError;
use crate::waveform::{ParamName, SubType, WaveformType};

/// Grammar terminal. All numeric tokens share the `Num` class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Terminal {
    Type(WaveformType),
    Sub(SubType),
    Param(ParamName),
    Num,
}

impl Terminal {
    /// Every terminal, in a fixed order (`index` is the position here).
    pub fn all() -> Vec<Terminal> {
        let mut v = vec![
            Terminal::Type(WaveformType::FM),
            Terminal::Type(WaveformType::PM),
            Terminal::Type(WaveformType::FC),
        ];
        v.extend(SubType::ALL.iter().map(|&s| Terminal::Sub(s)));
        v.extend(ParamName::ALL.iter().map(|&p| Terminal::Param(p)));
        v.push(Terminal::Num);
        v
    }

    pub fn count() -> usize {
        3 + SubType::ALL.len() + ParamName::ALL.len() + 1
    }

    pub fn index(self) -> usize {
        match self {
            Terminal::Type(t) => t as usize,
            Terminal::Sub(s) => 3 + s as usize,
            Terminal::Param(p) => 3 + SubType::ALL.len() + p as usize,
            Terminal::Num => Self::count() - 1,
        }
    }

    /// Terminal class of a vocabulary token; specials have none.
    pub fn of(tok: Token) -> Option<Terminal> {
        match tok {
            Token::Type(t) => Some(Terminal::Type(t)),
            Token::Sub(s) => Some(Terminal::Sub(s)),
            Token::Param(p) => Some(Terminal::Param(p)),
            Token::Num(_) => Some(Terminal::Num),
            Token::Pad | Token::Sos | Token::Eos => None,
        }
    }

    fn parse(word: &str) -> Option<Terminal> {
        if word == "NUM" {
            return Some(Terminal::Num);
        }
        let inner = word.strip_prefix('"')?.strip_suffix('"')?;
        match inner.parse::<Token>().ok()? {
            t @ (Token::Type(_) | Token::Sub(_) | Token::Param(_)) => Terminal::of(t),
            _ => None,
        }
    }
}

impl fmt::Display for Terminal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Terminal::Type(t) => write!(f, "\"{t}\""),
            Terminal::Sub(s) => write!(f, "\"{s}\""),
            Terminal::Param(p) => write!(f, "\"{p}\""),
            Terminal::Num => f.write_str("NUM"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Symbol {
    T(Terminal),
    N(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Production {
    pub lhs: usize,
    pub rhs: Vec<Symbol>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grammar {
    pub nonterminals: Vec<String>,
    pub productions: Vec<Production>,
    pub start: usize,
}

/// Waveform description grammar. Every subtype gets its own parameter
/// production so that only legal type/subtype/parameter combinations parse.
pub const RADAR_GRAMMAR: &str = r#"
S -> SimpleString | S SimpleString
SimpleString -> FMString | PMString | FCString
FMString -> "FM" "LFM" LFMpara | "FM" SinTri SinTripara
SinTri -> "Sin" | "Tri"
PMString -> "PM" PCode Ppara | "PM" T12 T12para | "PM" T34 T34para
PCode -> "Frank" | "P1" | "P2" | "P3" | "P4"
T12 -> "T1" | "T2"
T34 -> "T3" | "T4"
FCString -> "FC" "Costas" Costaspara
LFMpara -> "cf" Cf "B" Bv
SinTripara -> "cf" Cf "B" Bv "T" Tv
Costaspara -> "cf" Cf "FH" FHv "Code" CS
T12para -> "cf" Cf "seg_num" SN "phasestate_num" PSN
T34para -> "cf" Cf "seg_num" SN "phasestate_num" PSN "deltaF" DF
Ppara -> "cf" Cf "code_length" CL
Cf -> NUM
Bv -> NUM
Tv -> NUM
FHv -> NUM
CS -> NUM | NUM CS
SN -> NUM
PSN -> NUM
DF -> NUM
CL -> NUM
"#;

impl Grammar {
    pub fn radar() -> Self {
        Self::from_text(RADAR_GRAMMAR).expect("built-in grammar is well formed")
    }

    /// Parse `LHS -> RHS | RHS ...` lines. Quoted words are keyword
    /// terminals, `NUM` is the numeric class, anything else a non-terminal.
    /// The first left-hand side is the start symbol.
    pub fn from_text(text: &str) -> Result<Self, SymlangError> {
        let mut names: Vec<String> = Vec::new();
        let mut index: HashMap<String, usize> = HashMap::new();
        let mut intern = |name: &str, names: &mut Vec<String>| -> usize {
            *index.entry(name.to_string()).or_insert_with(|| {
                names.push(name.to_string());
                names.len() - 1
            })
        };
        let mut productions = Vec::new();
        let mut defined = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |msg: &str| SymlangError::GrammarText {
                line: lineno + 1,
                msg: msg.to_string(),
            };
            let (lhs, rhs) = line.split_once("->").ok_or_else(|| bad("missing `->`"))?;
            let lhs = lhs.trim();
            if lhs.is_empty() || lhs.contains(char::is_whitespace) || lhs.starts_with('"') {
                return Err(bad("left side must be a single non-terminal"));
            }
            let lhs = intern(lhs, &mut names);
            defined.push(lhs);
            for alt in rhs.split('|') {
                let mut syms = Vec::new();
                for word in alt.split_whitespace() {
                    if word.starts_with('"') || word == "NUM" {
                        let t = Terminal::parse(word).ok_or_else(|| bad(&format!("unknown terminal {word}")))?;
                        syms.push(Symbol::T(t));
                    } else {
                        syms.push(Symbol::N(intern(word, &mut names)));
                    }
                }
                if syms.is_empty() {
                    return Err(bad("empty alternative"));
                }
                productions.push(Production { lhs, rhs: syms });
            }
        }
        if productions.is_empty() {
            return Err(SymlangError::GrammarText {
                line: 0,
                msg: "no productions".into(),
            });
        }
        if let Some(undef) = (0..names.len()).find(|n| !defined.contains(n)) {
            return Err(SymlangError::GrammarText {
                line: 0,
                msg: format!("non-terminal {} has no productions", names[undef]),
            });
        }
        Ok(Self {
            nonterminals: names,
            productions,
            start: 0,
        })
    }

    /// One `LHS -> RHS` line per production.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for p in &self.productions {
            out.push_str(&self.nonterminals[p.lhs]);
            out.push_str(" ->");
            for s in &p.rhs {
                out.push(' ');
                match s {
                    Symbol::T(t) => out.push_str(&t.to_string()),
                    Symbol::N(n) => out.push_str(&self.nonterminals[*n]),
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn nonterminal(&self, name: &str) -> Option<usize> {
        self.nonterminals.iter().position(|n| n == name)
    }

    pub fn productions_of(&self, nt: usize) -> impl Iterator<Item = (usize, &Production)> {
        self.productions
            .iter()
            .enumerate()
            .filter(move |(_, p)| p.lhs == nt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn terminal_indices_are_dense() {
        let all = Terminal::all();
        assert_eq!(all.len(), Terminal::count());
        for (i, t) in all.iter().enumerate() {
            assert_eq!(t.index(), i);
        }
    }

    #[test]
    fn builtin_grammar_is_context_free_and_recursive() {
        let g = Grammar::radar();
        assert_eq!(g.nonterminals[g.start], "S");
        let s = g.start;
        // S -> S SimpleString
        assert!(g
            .productions_of(s)
            .any(|(_, p)| p.rhs.first() == Some(&Symbol::N(s))));
        for p in &g.productions {
            assert!(!p.rhs.is_empty());
        }
    }

    #[test]
    fn text_form_round_trips() {
        let g = Grammar::radar();
        let text = g.to_text();
        assert!(text.contains("LFMpara -> \"cf\" Cf \"B\" Bv\n"));
        let again = Grammar::from_text(&text).unwrap();
        assert_eq!(again, g);
    }

    #[test]
    fn malformed_text_is_rejected() {
        assert!(Grammar::from_text("S SimpleString").is_err());
        assert!(Grammar::from_text("S -> \"QPSK\"").is_err());
        assert!(Grammar::from_text("S -> A").is_err());
        assert!(Grammar::from_text("A B -> \"FM\"").is_err());
    }
}
