//! Waveform description language: grammar, vocabulary, quantization,
//! serialization and parsing.

pub mod cyk;
pub mod grammar;
pub mod lr;
pub mod quant;
pub mod serialize;
pub mod vocab;

use thiserror::Error;

use crate::waveform::{ParamName, WaveformError};

pub use cyk::{CnfGrammar, PrefixChart};
pub use grammar::{Grammar, Production, Symbol, Terminal, RADAR_GRAMMAR};
pub use lr::{ParseTree, SlrParser, SyntaxError};
pub use quant::QuantizationScheme;
pub use serialize::{
    display_to_tokens, membership, parse, parse_display, quantize_spec, serialize, tokens_to_display, Language,
};
pub use vocab::{Token, TokenSequence, Vocabulary, MAX_NUM};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SymlangError {
    #[error("unknown token {0:?}")]
    UnknownToken(String),
    #[error("unknown token id {0}")]
    UnknownId(u32),
    #[error("numeric value {value} outside 0..={max}")]
    NumericOverflow { value: i64, max: u16 },
    #[error("quantization unit for {param} must be positive, got {unit}")]
    BadUnit { param: ParamName, unit: f64 },
    #[error("grammar text line {line}: {msg}")]
    GrammarText { line: usize, msg: String },
    #[error("grammar is not SLR(1): state {state}: {detail}")]
    Conflict { state: usize, detail: String },
    #[error("cannot serialize an empty waveform description")]
    EmptySpec,
    #[error("syntax error at token {position}: found {found}, expected one of [{expected}]")]
    Syntax {
        position: usize,
        found: String,
        expected: String,
    },
    #[error("token sequence is not framed by <sos> ... <eos>")]
    Unterminated,
    #[error("parsed description is invalid: {0}")]
    Invalid(#[from] WaveformError),
}

impl SymlangError {
    /// Token index of a syntax failure, if this is one.
    pub fn position(&self) -> Option<usize> {
        match self {
            SymlangError::Syntax { position, .. } => Some(*position),
            _ => None,
        }
    }
}
