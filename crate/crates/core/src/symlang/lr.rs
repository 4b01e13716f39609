//! SLR(1) table construction and the shift-reduce driver.

use std::collections::{BTreeSet, HashMap};

use super::grammar::{Grammar, Symbol, Terminal};
use super::SymlangError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Action {
    Error,
    Shift(usize),
    /// Reduce by production index (in the augmented grammar).
    Reduce(usize),
    Accept,
}

/// LR(0) item: production and dot position.
type Item = (usize, usize);

/// A node of the concrete parse tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseTree {
    Leaf {
        terminal: Terminal,
        /// Index of the token in the parsed input.
        position: usize,
    },
    Node {
        nonterminal: usize,
        production: usize,
        children: Vec<ParseTree>,
    },
}

impl ParseTree {
    /// Token positions covered by this subtree, left to right.
    pub fn leaves(&self) -> Vec<usize> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves(&self, out: &mut Vec<usize>) {
        match self {
            ParseTree::Leaf { position, .. } => out.push(*position),
            ParseTree::Node { children, .. } => {
                for c in children {
                    c.collect_leaves(out);
                }
            }
        }
    }

    /// All subtrees rooted at `nonterminal`, outermost first, left to right;
    /// matches are not searched further.
    pub fn find_all(&self, nonterminal: usize) -> Vec<&ParseTree> {
        let mut out = Vec::new();
        self.find_into(nonterminal, &mut out);
        out
    }

    fn find_into<'a>(&'a self, nt: usize, out: &mut Vec<&'a ParseTree>) {
        if let ParseTree::Node {
            nonterminal,
            children,
            ..
        } = self
        {
            if *nonterminal == nt {
                out.push(self);
                return;
            }
            for c in children {
                c.find_into(nt, out);
            }
        }
    }
}

/// A syntax error at `position` (index into the input; `input.len()` for
/// unexpected end of input).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntaxError {
    pub position: usize,
    pub found: Option<Terminal>,
    pub expected: Vec<Terminal>,
}

/// Deterministic bottom-up parser for a grammar with an SLR(1) table.
#[derive(Debug, Clone)]
pub struct SlrParser {
    grammar: Grammar,
    /// Augmented productions: index 0 is `S' -> S`, then the grammar's own
    /// productions shifted by one.
    prods: Vec<(usize, Vec<Symbol>)>,
    action: Vec<Vec<Action>>,
    goto: Vec<Vec<Option<usize>>>,
}

impl SlrParser {
    pub fn new(grammar: &Grammar) -> Result<Self, SymlangError> {
        let n_nt = grammar.nonterminals.len();
        let aug = n_nt; // S'
        let mut prods = vec![(aug, vec![Symbol::N(grammar.start)])];
        prods.extend(grammar.productions.iter().map(|p| (p.lhs, p.rhs.clone())));

        let first = first_sets(&prods, n_nt + 1);
        let follow = follow_sets(&prods, n_nt + 1, aug, &first);

        let closure = |items: BTreeSet<Item>| -> BTreeSet<Item> {
            let mut set = items;
            let mut stack: Vec<Item> = set.iter().copied().collect();
            while let Some((p, dot)) = stack.pop() {
                if let Some(Symbol::N(b)) = prods[p].1.get(dot) {
                    for (q, (lhs, _)) in prods.iter().enumerate() {
                        if lhs == b && set.insert((q, 0)) {
                            stack.push((q, 0));
                        }
                    }
                }
            }
            set
        };

        let mut states: Vec<BTreeSet<Item>> = vec![closure([(0, 0)].into_iter().collect())];
        let mut index: HashMap<BTreeSet<Item>, usize> = HashMap::new();
        index.insert(states[0].clone(), 0);
        let mut transitions: Vec<Vec<(Symbol, usize)>> = Vec::new();
        let mut i = 0;
        while i < states.len() {
            let mut by_sym: std::collections::BTreeMap<Symbol, BTreeSet<Item>> = Default::default();
            for &(p, dot) in &states[i] {
                if let Some(&sym) = prods[p].1.get(dot) {
                    by_sym.entry(sym).or_default().insert((p, dot + 1));
                }
            }
            let mut edges = Vec::new();
            for (sym, kernel) in by_sym {
                let target = closure(kernel);
                let id = match index.get(&target) {
                    Some(&id) => id,
                    None => {
                        states.push(target.clone());
                        index.insert(target, states.len() - 1);
                        states.len() - 1
                    }
                };
                edges.push((sym, id));
            }
            transitions.push(edges);
            i += 1;
        }

        let n_t = Terminal::count() + 1; // + end of input
        let eof = n_t - 1;
        let mut action = vec![vec![Action::Error; n_t]; states.len()];
        let mut goto = vec![vec![None; n_nt]; states.len()];
        let mut set = |state: usize, t: usize, a: Action| -> Result<(), SymlangError> {
            let cell = &mut action[state][t];
            if *cell != Action::Error && *cell != a {
                return Err(SymlangError::Conflict {
                    state,
                    detail: format!("{:?} vs {:?} on terminal #{t}", *cell, a),
                });
            }
            *cell = a;
            Ok(())
        };
        for (s, edges) in transitions.iter().enumerate() {
            for &(sym, target) in edges {
                match sym {
                    Symbol::T(t) => set(s, t.index(), Action::Shift(target))?,
                    Symbol::N(nt) => goto[s][nt] = Some(target),
                }
            }
            for &(p, dot) in &states[s] {
                if dot == prods[p].1.len() {
                    if p == 0 {
                        set(s, eof, Action::Accept)?;
                    } else {
                        for &t in &follow[prods[p].0] {
                            set(s, t, Action::Reduce(p))?;
                        }
                    }
                }
            }
        }
        Ok(Self {
            grammar: grammar.clone(),
            prods,
            action,
            goto,
        })
    }

    pub fn grammar(&self) -> &Grammar {
        &self.grammar
    }

    pub fn state_count(&self) -> usize {
        self.action.len()
    }

    /// Parse a terminal string, returning the tree for the start symbol.
    pub fn parse(&self, input: &[Terminal]) -> Result<ParseTree, SyntaxError> {
        let eof = Terminal::count();
        let mut states = vec![0usize];
        let mut nodes: Vec<ParseTree> = Vec::new();
        let mut pos = 0;
        loop {
            let la = input.get(pos).map_or(eof, |t| t.index());
            let state = *states.last().unwrap_or(&0);
            match self.action[state][la] {
                Action::Shift(next) => {
                    nodes.push(ParseTree::Leaf {
                        terminal: input[pos],
                        position: pos,
                    });
                    states.push(next);
                    pos += 1;
                }
                Action::Reduce(p) => {
                    let (lhs, rhs) = &self.prods[p];
                    let k = rhs.len();
                    let children = nodes.split_off(nodes.len() - k);
                    states.truncate(states.len() - k);
                    let top = *states.last().unwrap_or(&0);
                    let Some(next) = self.goto[top][*lhs] else {
                        return Err(self.error_at(state, pos, input));
                    };
                    states.push(next);
                    nodes.push(ParseTree::Node {
                        nonterminal: *lhs,
                        production: p - 1,
                        children,
                    });
                }
                Action::Accept => return Ok(nodes.pop().expect("accepted parse has a root")),
                Action::Error => return Err(self.error_at(state, pos, input)),
            }
        }
    }

    pub fn accepts(&self, input: &[Terminal]) -> bool {
        self.parse(input).is_ok()
    }

    fn error_at(&self, state: usize, pos: usize, input: &[Terminal]) -> SyntaxError {
        let all = Terminal::all();
        let expected = all
            .iter()
            .copied()
            .filter(|t| self.action[state][t.index()] != Action::Error)
            .collect();
        SyntaxError {
            position: pos,
            found: input.get(pos).copied(),
            expected,
        }
    }
}

/// FIRST sets over terminal indices. The grammar has no ε-productions.
fn first_sets(prods: &[(usize, Vec<Symbol>)], n_nt: usize) -> Vec<BTreeSet<usize>> {
    let mut first = vec![BTreeSet::new(); n_nt];
    let mut changed = true;
    while changed {
        changed = false;
        for (lhs, rhs) in prods {
            let add: BTreeSet<usize> = match rhs[0] {
                Symbol::T(t) => [t.index()].into_iter().collect(),
                Symbol::N(b) => first[b].clone(),
            };
            let before = first[*lhs].len();
            first[*lhs].extend(add);
            changed |= first[*lhs].len() != before;
        }
    }
    first
}

fn follow_sets(
    prods: &[(usize, Vec<Symbol>)],
    n_nt: usize,
    aug: usize,
    first: &[BTreeSet<usize>],
) -> Vec<BTreeSet<usize>> {
    let eof = Terminal::count();
    let mut follow = vec![BTreeSet::new(); n_nt];
    follow[aug].insert(eof);
    let mut changed = true;
    while changed {
        changed = false;
        for (lhs, rhs) in prods {
            for (i, sym) in rhs.iter().enumerate() {
                let Symbol::N(b) = *sym else { continue };
                let add: BTreeSet<usize> = match rhs.get(i + 1) {
                    Some(Symbol::T(t)) => [t.index()].into_iter().collect(),
                    Some(Symbol::N(c)) => first[*c].clone(),
                    None => follow[*lhs].clone(),
                };
                let before = follow[b].len();
                follow[b].extend(add);
                changed |= follow[b].len() != before;
            }
        }
    }
    follow
}
