//! Chomsky normal form and CYK recognition, used to cross-check the
//! shift-reduce parser.

use std::collections::{BTreeSet, HashMap};

use super::grammar::{Grammar, Production, Symbol, Terminal};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct NtSet(Vec<u64>);

impl NtSet {
    fn new(n: usize) -> Self {
        NtSet(vec![0; n.div_ceil(64)])
    }
    fn insert(&mut self, i: usize) {
        self.0[i / 64] |= 1 << (i % 64);
    }
    fn contains(&self, i: usize) -> bool {
        self.0[i / 64] >> (i % 64) & 1 == 1
    }
    fn is_empty(&self) -> bool {
        self.0.iter().all(|w| *w == 0)
    }
}

/// Grammar in CNF: rules `A -> B C` and `A -> t` only. Non-terminal ids
/// of the source grammar are preserved; helpers are numbered after them.
#[derive(Debug, Clone)]
pub struct CnfGrammar {
    pub n_nonterminals: usize,
    pub start: usize,
    /// `binary[b]` lists `(a, c)` for every rule `a -> b c`.
    binary: Vec<Vec<(usize, usize)>>,
    /// `lexical[t]` lists every `a` with `a -> t`.
    lexical: Vec<Vec<usize>>,
}

impl CnfGrammar {
    /// Convert an ε-free grammar. Terminals inside long right sides get
    /// wrapper non-terminals, long right sides are split right-recursively
    /// (helpers shared between equal suffixes), then unit rules are
    /// eliminated by closure.
    pub fn from_grammar(g: &Grammar) -> Self {
        let mut n = g.nonterminals.len();
        let mut wrap: HashMap<Terminal, usize> = HashMap::new();
        let mut suffix: HashMap<Vec<usize>, usize> = HashMap::new();
        // rules after wrapping and binarization
        let mut unit: Vec<(usize, usize)> = Vec::new();
        let mut lex: Vec<(usize, Terminal)> = Vec::new();
        let mut bin: Vec<(usize, usize, usize)> = Vec::new();

        for p in &g.productions {
            if let [Symbol::T(t)] = p.rhs[..] {
                lex.push((p.lhs, t));
                continue;
            }
            if let [Symbol::N(b)] = p.rhs[..] {
                unit.push((p.lhs, b));
                continue;
            }
            let ids: Vec<usize> = p
                .rhs
                .iter()
                .map(|s| match *s {
                    Symbol::N(b) => b,
                    Symbol::T(t) => *wrap.entry(t).or_insert_with(|| {
                        n += 1;
                        lex.push((n - 1, t));
                        n - 1
                    }),
                })
                .collect();
            // a -> x0 H(x1..), H(x1..) -> x1 H(x2..), ... , H(xk-1 xk) -> xk-1 xk
            let mut lhs = p.lhs;
            let mut rest = &ids[..];
            while rest.len() > 2 {
                let tail = rest[1..].to_vec();
                let (h, fresh) = match suffix.get(&tail) {
                    Some(&h) => (h, false),
                    None => {
                        n += 1;
                        suffix.insert(tail, n - 1);
                        (n - 1, true)
                    }
                };
                bin.push((lhs, rest[0], h));
                if !fresh {
                    rest = &[];
                    break;
                }
                lhs = h;
                rest = &rest[1..];
            }
            if rest.len() == 2 {
                bin.push((lhs, rest[0], rest[1]));
            }
        }

        // unit closure: reach[a] = {b : a =>* b by unit rules}
        let mut reach: Vec<BTreeSet<usize>> = (0..n).map(|a| [a].into_iter().collect()).collect();
        let mut changed = true;
        while changed {
            changed = false;
            for &(a, b) in &unit {
                let add: Vec<usize> = reach[b].iter().copied().collect();
                for x in add {
                    changed |= reach[a].insert(x);
                }
            }
        }

        let mut binary = vec![Vec::new(); n];
        let mut lexical = vec![Vec::new(); Terminal::count()];
        let mut seen_bin = BTreeSet::new();
        let mut seen_lex = BTreeSet::new();
        for a in 0..n {
            for &b in &reach[a] {
                for &(x, y, z) in &bin {
                    if x == b && seen_bin.insert((a, y, z)) {
                        binary[y].push((a, z));
                    }
                }
                for &(x, t) in &lex {
                    if x == b && seen_lex.insert((a, t.index())) {
                        lexical[t.index()].push(a);
                    }
                }
            }
        }
        Self {
            n_nonterminals: n,
            start: g.start,
            binary,
            lexical,
        }
    }

    fn empty_set(&self) -> NtSet {
        NtSet::new(self.n_nonterminals)
    }

    fn lexical_set(&self, t: Terminal) -> NtSet {
        let mut s = self.empty_set();
        for &a in &self.lexical[t.index()] {
            s.insert(a);
        }
        s
    }

    fn combine(&self, left: &NtSet, right: &NtSet, out: &mut NtSet) {
        for (w, word) in left.0.iter().enumerate() {
            let mut bits = *word;
            while bits != 0 {
                let b = w * 64 + bits.trailing_zeros() as usize;
                bits &= bits - 1;
                for &(a, c) in &self.binary[b] {
                    if right.contains(c) {
                        out.insert(a);
                    }
                }
            }
        }
    }

    /// Does `nt` derive `input`?
    pub fn derives(&self, nt: usize, input: &[Terminal]) -> bool {
        let mut chart = PrefixChart::new(self);
        for &t in input {
            chart.push(t);
        }
        chart.derives(nt)
    }

    pub fn accepts(&self, input: &[Terminal]) -> bool {
        self.derives(self.start, input)
    }
}

/// CYK chart that grows and shrinks one token at a time at the right end.
#[derive(Debug, Clone)]
pub struct PrefixChart<'g> {
    cnf: &'g CnfGrammar,
    /// `cols[j][i]` holds the non-terminals deriving `input[i..=j]`.
    cols: Vec<Vec<NtSet>>,
}

impl<'g> PrefixChart<'g> {
    pub fn new(cnf: &'g CnfGrammar) -> Self {
        Self {
            cnf,
            cols: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.cols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cols.is_empty()
    }

    pub fn push(&mut self, t: Terminal) {
        let j = self.cols.len();
        let mut col = vec![self.cnf.empty_set(); j + 1];
        col[j] = self.cnf.lexical_set(t);
        for i in (0..j).rev() {
            let mut cell = self.cnf.empty_set();
            // split: input[i..k] and input[k..=j]
            for k in i + 1..=j {
                let left = &self.cols[k - 1][i];
                let right = &col[k];
                if !left.is_empty() && !right.is_empty() {
                    self.cnf.combine(left, right, &mut cell);
                }
            }
            col[i] = cell;
        }
        self.cols.push(col);
    }

    pub fn pop(&mut self) {
        self.cols.pop();
    }

    /// Does `nt` derive the whole current input?
    pub fn derives(&self, nt: usize) -> bool {
        self.cols.last().is_some_and(|c| c[0].contains(nt))
    }
}

/// Extend `g` with a non-terminal `A'` for each `A` deriving exactly the
/// non-empty prefixes of `A`'s strings: `A' -> X1 .. X(i-1) Xi'` for every
/// rule `A -> X1 .. Xn` and every `i`, with `t' = t`. Returns the grammar
/// (same start) and the id of `S'`. Assumes every non-terminal is
/// productive.
pub fn prefix_grammar(g: &Grammar) -> (Grammar, usize) {
    let n = g.nonterminals.len();
    let mut out = g.clone();
    out.nonterminals
        .extend(g.nonterminals.iter().map(|name| format!("{name}'")));
    let primed = |s: Symbol| match s {
        Symbol::N(a) => Symbol::N(a + n),
        t => t,
    };
    for p in &g.productions {
        for i in 0..p.rhs.len() {
            let mut rhs = p.rhs[..i].to_vec();
            rhs.push(primed(p.rhs[i]));
            let prod = Production { lhs: p.lhs + n, rhs };
            if !out.productions.contains(&prod) {
                out.productions.push(prod);
            }
        }
    }
    (out, g.start + n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn kw(s: &str) -> Terminal {
        if s == "N" {
            Terminal::Num
        } else {
            Terminal::of(s.parse().unwrap()).unwrap()
        }
    }

    fn terms(s: &str) -> Vec<Terminal> {
        s.split_whitespace().map(kw).collect()
    }

    /// Naive top-down derivation search; exponential, for tiny inputs only.
    fn derives_naive(g: &Grammar, sym: Symbol, w: &[Terminal]) -> bool {
        match sym {
            Symbol::T(t) => w == [t],
            Symbol::N(a) => g
                .productions_of(a)
                .any(|(_, p)| split_match(g, &p.rhs, w)),
        }
    }

    fn split_match(g: &Grammar, rhs: &[Symbol], w: &[Terminal]) -> bool {
        match rhs {
            [] => w.is_empty(),
            [x] => derives_naive(g, *x, w),
            [x, rest @ ..] => {
                // every symbol derives at least one terminal
                (1..=w.len().saturating_sub(rest.len()))
                    .any(|k| derives_naive(g, *x, &w[..k]) && split_match(g, rest, &w[k..]))
            }
        }
    }

    #[test]
    fn radar_examples() {
        let cnf = CnfGrammar::from_grammar(&Grammar::radar());
        assert!(cnf.accepts(&terms("FM LFM cf N B N")));
        assert!(cnf.accepts(&terms("FM LFM cf N B N PM P1 cf N code_length N")));
        assert!(cnf.accepts(&terms("FC Costas cf N FH N Code N N N")));
        assert!(!cnf.accepts(&terms("B FM cf")));
        assert!(!cnf.accepts(&[]));
        assert!(!cnf.accepts(&terms("FM Sin cf N B N")));
    }

    #[test]
    fn agrees_with_naive_derivation_on_random_strings() {
        let g = Grammar::from_text(
            "S -> A S B | \"FM\" | C\nA -> \"PM\" | \"PM\" A\nB -> NUM\nC -> A B \"FC\" NUM",
        )
        .unwrap();
        let cnf = CnfGrammar::from_grammar(&g);
        let alphabet = [
            Terminal::Type(crate::waveform::WaveformType::FM),
            Terminal::Type(crate::waveform::WaveformType::PM),
            Terminal::Type(crate::waveform::WaveformType::FC),
            Terminal::Num,
        ];
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut hits = 0;
        for _ in 0..3000 {
            let len = rng.random_range(1..=7);
            let w: Vec<Terminal> = (0..len).map(|_| alphabet[rng.random_range(0..4)]).collect();
            let naive = derives_naive(&g, Symbol::N(g.start), &w);
            assert_eq!(cnf.accepts(&w), naive, "{w:?}");
            hits += naive as usize;
        }
        assert!(hits > 20);
    }

    #[test]
    fn prefix_grammar_accepts_exactly_prefixes() {
        let g = Grammar::radar();
        let (pg, ps) = prefix_grammar(&g);
        let cnf = CnfGrammar::from_grammar(&pg);
        let full = terms("FM Tri cf N B N T N FC Costas cf N FH N Code N N");
        for k in 1..=full.len() {
            assert!(cnf.derives(ps, &full[..k]), "prefix {k}");
        }
        assert!(cnf.derives(cnf.start, &full));
        assert!(!cnf.derives(cnf.start, &full[..5]));
        assert!(!cnf.derives(ps, &terms("FM LFM cf N T")));
        assert!(!cnf.derives(ps, &terms("N")));
    }

    #[test]
    fn chart_pop_restores_state() {
        let cnf = CnfGrammar::from_grammar(&Grammar::radar());
        let mut chart = PrefixChart::new(&cnf);
        for t in terms("FM LFM cf N B N") {
            chart.push(t);
        }
        assert!(chart.derives(cnf.start));
        chart.push(Terminal::Num);
        assert!(!chart.derives(cnf.start));
        chart.pop();
        assert!(chart.derives(cnf.start));
        assert_eq!(chart.len(), 6);
    }
}
