//! Waveform descriptions to token sequences and back.

use std::fmt::Write as _;

use super::cyk::CnfGrammar;
use super::grammar::{Grammar, Terminal};
use super::lr::{SlrParser, SyntaxError};
use super::quant::QuantizationScheme;
use super::vocab::{Token, TokenSequence, Vocabulary};
use super::SymlangError;
use crate::waveform::{ParamName, ParamValue, WaveformComponent, WaveformSpec};

/// Keyword/value tokens of a description, without `<sos>`/`<eos>`.
pub fn spec_tokens(spec: &WaveformSpec, q: &QuantizationScheme, max_num: u16) -> Result<Vec<Token>, SymlangError> {
    if spec.components.is_empty() {
        return Err(SymlangError::EmptySpec);
    }
    let mut out = Vec::new();
    for comp in &spec.components {
        out.push(Token::Type(comp.wf_type));
        out.push(Token::Sub(comp.sub_type));
        for &p in comp.sub_type.params() {
            out.push(Token::Param(p));
            match comp.params.get(&p) {
                Some(ParamValue::Scalar(x)) => out.push(Token::Num(q.quantize(p, *x, max_num)?)),
                Some(ParamValue::Sequence(code)) => {
                    for &c in code {
                        if c > max_num as u32 {
                            return Err(SymlangError::NumericOverflow {
                                value: c as i64,
                                max: max_num,
                            });
                        }
                        out.push(Token::Num(c as u16));
                    }
                }
                None => {
                    return Err(SymlangError::Invalid(crate::waveform::WaveformError::MissingParam {
                        sub: comp.sub_type,
                        param: p,
                    }))
                }
            }
        }
    }
    Ok(out)
}

/// `<sos>` type subtype params … `<eos>`; every component carries its own
/// carrier token.
pub fn serialize(spec: &WaveformSpec, q: &QuantizationScheme) -> Result<TokenSequence, SymlangError> {
    let vocab = Vocabulary::new();
    let mut ids = vec![Vocabulary::SOS];
    ids.extend(vocab.ids(&spec_tokens(spec, q, vocab.max_num())?)?);
    ids.push(Vocabulary::EOS);
    Ok(TokenSequence { ids })
}

/// The spec that survives a serialize/parse round trip: values snapped to
/// the quantization grid, carrier of the first component everywhere.
pub fn quantize_spec(spec: &WaveformSpec, q: &QuantizationScheme) -> Result<WaveformSpec, SymlangError> {
    let toks = spec_tokens(spec, q, u16::MAX)?;
    build_spec(&toks, &group_by_type(&toks), q)
}

/// Grammar-driven parser bundled with the pieces it needs.
#[derive(Debug, Clone)]
pub struct Language {
    pub grammar: Grammar,
    pub vocab: Vocabulary,
    pub quant: QuantizationScheme,
    parser: SlrParser,
    cnf: CnfGrammar,
    simple: Option<usize>,
}

impl Language {
    pub fn new(grammar: Grammar, quant: QuantizationScheme) -> Result<Self, SymlangError> {
        quant.validate()?;
        let parser = SlrParser::new(&grammar)?;
        let cnf = CnfGrammar::from_grammar(&grammar);
        let simple = grammar.nonterminal("SimpleString");
        Ok(Self {
            grammar,
            vocab: Vocabulary::new(),
            quant,
            parser,
            cnf,
            simple,
        })
    }

    pub fn radar() -> Self {
        Self::new(Grammar::radar(), QuantizationScheme::default()).expect("built-in grammar is SLR(1)")
    }

    pub fn parser(&self) -> &SlrParser {
        &self.parser
    }

    pub fn cnf(&self) -> &CnfGrammar {
        &self.cnf
    }

    pub fn serialize(&self, spec: &WaveformSpec) -> Result<TokenSequence, SymlangError> {
        serialize(spec, &self.quant)
    }

    /// Parse model output given as ids. A leading `<sos>` and the first
    /// `<eos>` (and anything after it) are stripped; positions in errors
    /// index the remaining content.
    pub fn parse_ids(&self, ids: &[u32]) -> Result<WaveformSpec, SymlangError> {
        self.parse_tokens(&self.vocab.tokens(ids)?)
    }

    pub fn parse_tokens(&self, tokens: &[Token]) -> Result<WaveformSpec, SymlangError> {
        let content = strip_frame(tokens);
        let classes = classes(content).map_err(|pos| syntax_error(content, pos, &[]))?;
        let tree = self
            .parser
            .parse(&classes)
            .map_err(|e| self.to_error(content, e))?;
        let groups = match self.simple {
            Some(nt) => tree
                .find_all(nt)
                .into_iter()
                .map(|t| {
                    let leaves = t.leaves();
                    leaves[0]..leaves[leaves.len() - 1] + 1
                })
                .collect(),
            None => group_by_type(content),
        };
        build_spec(content, &groups, &self.quant)
    }

    /// Parse the display form, e.g. `FM LFM cf 100.0 B 10.0`.
    pub fn parse_display(&self, text: &str) -> Result<WaveformSpec, SymlangError> {
        self.parse_tokens(&display_to_tokens(text, &self.quant, self.vocab.max_num())?)
    }

    /// CYK membership of the framed or unframed token string.
    pub fn membership(&self, tokens: &[Token]) -> bool {
        match classes(strip_frame(tokens)) {
            Ok(c) => self.cnf.accepts(&c),
            Err(_) => false,
        }
    }

    fn to_error(&self, content: &[Token], e: SyntaxError) -> SymlangError {
        syntax_error(content, e.position, &e.expected)
    }
}

fn syntax_error(content: &[Token], position: usize, expected: &[Terminal]) -> SymlangError {
    SymlangError::Syntax {
        position,
        found: content
            .get(position)
            .map_or_else(|| "end of input".to_string(), Token::to_string),
        expected: expected
            .iter()
            .map(Terminal::to_string)
            .collect::<Vec<_>>()
            .join(", "),
    }
}

fn strip_frame(tokens: &[Token]) -> &[Token] {
    let body = match tokens.first() {
        Some(Token::Sos) => &tokens[1..],
        _ => tokens,
    };
    match body.iter().position(|t| *t == Token::Eos) {
        Some(end) => &body[..end],
        None => body,
    }
}

/// Terminal classes, or the index of the first special token.
fn classes(content: &[Token]) -> Result<Vec<Terminal>, usize> {
    content
        .iter()
        .enumerate()
        .map(|(i, &t)| Terminal::of(t).ok_or(i))
        .collect()
}

fn group_by_type(content: &[Token]) -> Vec<std::ops::Range<usize>> {
    let starts: Vec<usize> = content
        .iter()
        .enumerate()
        .filter(|(_, t)| matches!(t, Token::Type(_)))
        .map(|(i, _)| i)
        .collect();
    starts
        .iter()
        .enumerate()
        .map(|(k, &s)| s..starts.get(k + 1).copied().unwrap_or(content.len()))
        .collect()
}

/// Components from grammatical token groups. The first carrier seen is
/// applied to every component.
fn build_spec(
    content: &[Token],
    groups: &[std::ops::Range<usize>],
    q: &QuantizationScheme,
) -> Result<WaveformSpec, SymlangError> {
    let mut components = Vec::with_capacity(groups.len());
    let mut carrier: Option<f64> = None;
    for g in groups {
        let toks = &content[g.clone()];
        let Some(&Token::Sub(sub)) = toks.get(1) else {
            return Err(syntax_error(content, g.start + 1, &[]));
        };
        let mut params = Vec::new();
        let mut i = 2;
        while i < toks.len() {
            let Token::Param(p) = toks[i] else {
                return Err(syntax_error(content, g.start + i, &[]));
            };
            let mut vals = Vec::new();
            i += 1;
            while let Some(Token::Num(n)) = toks.get(i) {
                vals.push(*n);
                i += 1;
            }
            let value = if p == ParamName::Code {
                ParamValue::Sequence(vals.iter().map(|&v| v as u32).collect())
            } else {
                match vals[..] {
                    [v] => ParamValue::Scalar(q.dequantize(p, v)),
                    _ => return Err(syntax_error(content, g.start + i, &[])),
                }
            };
            params.push((p, value));
        }
        let mut comp = WaveformComponent::new(sub, params);
        if let Some(ParamValue::Scalar(cf)) = comp.params.get(&ParamName::Cf) {
            let cf = *carrier.get_or_insert(*cf);
            comp.params.insert(ParamName::Cf, ParamValue::Scalar(cf));
        }
        components.push(comp);
    }
    if components.is_empty() {
        return Err(SymlangError::EmptySpec);
    }
    Ok(WaveformSpec::new(components))
}

/// Decimal places needed to print multiples of `unit` exactly.
fn decimals(unit: f64) -> usize {
    let mut d = 0;
    let mut u = unit;
    while d < 6 && (u - u.round()).abs() > 1e-9 {
        u *= 10.0;
        d += 1;
    }
    d
}

/// Physical display form: numerics are dequantized by the parameter they
/// follow (`cf 1000` is shown as `cf 100.0`).
pub fn tokens_to_display(tokens: &[Token], q: &QuantizationScheme) -> String {
    let mut out = String::new();
    let mut current: Option<ParamName> = None;
    for t in tokens {
        if !out.is_empty() {
            out.push(' ');
        }
        match t {
            Token::Param(p) => {
                current = Some(*p);
                out.push_str(p.as_str());
            }
            Token::Num(n) => match current {
                Some(p) if p != ParamName::Code && q.unit(p) != 1.0 => {
                    let _ = write!(out, "{:.*}", decimals(q.unit(p)), q.dequantize(p, *n));
                }
                _ => {
                    let _ = write!(out, "{n}");
                }
            },
            other => {
                current = None;
                let _ = write!(out, "{other}");
            }
        }
    }
    out
}

/// Inverse of [`tokens_to_display`]: a number is quantized with the unit of
/// the parameter keyword before it; a number with no such keyword must be
/// a plain integer token.
pub fn display_to_tokens(text: &str, q: &QuantizationScheme, max_num: u16) -> Result<Vec<Token>, SymlangError> {
    let mut current: Option<ParamName> = None;
    let mut out = Vec::new();
    for word in text.split_whitespace() {
        let tok = match word.parse::<Token>() {
            Ok(Token::Num(n)) => match current {
                Some(p) if p != ParamName::Code => Token::Num(q.quantize(p, n as f64, max_num)?),
                _ => Token::Num(n),
            },
            Ok(t) => t,
            Err(e) => {
                let x: f64 = word.parse().map_err(|_| e)?;
                match current {
                    Some(p) if p != ParamName::Code => Token::Num(q.quantize(p, x, max_num)?),
                    _ => return Err(SymlangError::UnknownToken(word.to_string())),
                }
            }
        };
        current = match tok {
            Token::Param(p) => Some(p),
            Token::Num(_) => current,
            _ => None,
        };
        out.push(tok);
    }
    Ok(out)
}

/// Parse against an arbitrary grammar.
pub fn parse(tokens: &TokenSequence, grammar: &Grammar, q: &QuantizationScheme) -> Result<WaveformSpec, SymlangError> {
    Language::new(grammar.clone(), q.clone())?.parse_ids(&tokens.ids)
}

pub fn parse_display(text: &str, grammar: &Grammar, q: &QuantizationScheme) -> Result<WaveformSpec, SymlangError> {
    Language::new(grammar.clone(), q.clone())?.parse_display(text)
}

/// CYK membership in the built-in language.
pub fn membership(tokens: &TokenSequence) -> bool {
    let vocab = Vocabulary::new();
    match vocab.tokens(&tokens.ids) {
        Ok(toks) => Language::radar().membership(&toks),
        Err(_) => false,
    }
}
