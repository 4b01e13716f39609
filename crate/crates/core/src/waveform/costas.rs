//! Costas frequency-hopping codes.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

/// Smallest and largest code orders kept in the precomputed table.
pub const MIN_ORDER: usize = 3;
pub const MAX_ORDER: usize = 12;

/// A validated Costas sequence: a permutation of `1..=L` whose displacement
/// vectors are pairwise distinct.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<u32>", into = "Vec<u32>")]
pub struct CostasCode(Vec<u32>);

impl CostasCode {
    pub fn new(seq: Vec<u32>) -> Option<Self> {
        is_costas(&seq).then_some(Self(seq))
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl TryFrom<Vec<u32>> for CostasCode {
    type Error = String;

    fn try_from(v: Vec<u32>) -> Result<Self, Self::Error> {
        CostasCode::new(v).ok_or_else(|| "not a Costas sequence".to_string())
    }
}

impl From<CostasCode> for Vec<u32> {
    fn from(c: CostasCode) -> Self {
        c.0
    }
}

pub(crate) fn is_permutation(seq: &[u32]) -> bool {
    let n = seq.len();
    let mut seen = vec![false; n];
    for &v in seq {
        let v = v as usize;
        if v == 0 || v > n || seen[v - 1] {
            return false;
        }
        seen[v - 1] = true;
    }
    true
}

/// True iff `seq` is a permutation of `1..=L` and every displacement vector
/// `(j - i, seq[j] - seq[i])`, `i < j`, occurs once.
pub fn is_costas(seq: &[u32]) -> bool {
    if !is_permutation(seq) {
        return false;
    }
    let n = seq.len();
    // one row per index distance; a displacement repeats iff some row repeats a value
    for d in 1..n {
        let mut seen = vec![false; 2 * n];
        for i in 0..n - d {
            let diff = seq[i + d] as i64 - seq[i] as i64 + n as i64;
            let slot = &mut seen[diff as usize];
            if *slot {
                return false;
            }
            *slot = true;
        }
    }
    true
}

/// All Costas sequences of the given order, in lexicographic order.
pub fn enumerate_costas(order: usize) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    if order == 0 {
        return out;
    }
    let mut seq = Vec::with_capacity(order);
    let mut used = vec![false; order + 1];
    // used_diff[d][diff + order]
    let mut used_diff = vec![vec![false; 2 * order + 1]; order];
    search(order, &mut seq, &mut used, &mut used_diff, &mut out);
    out
}

fn search(
    n: usize,
    seq: &mut Vec<u32>,
    used: &mut [bool],
    used_diff: &mut [Vec<bool>],
    out: &mut Vec<Vec<u32>>,
) {
    let pos = seq.len();
    if pos == n {
        out.push(seq.clone());
        return;
    }
    for v in 1..=n as u32 {
        if used[v as usize] {
            continue;
        }
        let ok = (1..=pos).all(|d| {
            let diff = v as i64 - seq[pos - d] as i64 + n as i64;
            !used_diff[d][diff as usize]
        });
        if !ok {
            continue;
        }
        for d in 1..=pos {
            let diff = v as i64 - seq[pos - d] as i64 + n as i64;
            used_diff[d][diff as usize] = true;
        }
        used[v as usize] = true;
        seq.push(v);
        search(n, seq, used, used_diff, out);
        seq.pop();
        used[v as usize] = false;
        for d in 1..=pos {
            let diff = v as i64 - seq[pos - d] as i64 + n as i64;
            used_diff[d][diff as usize] = false;
        }
    }
}

/// Costas sequences for orders `MIN_ORDER..=MAX_ORDER`, computed once by
/// exhaustive search. Index with `table[order - MIN_ORDER]`.
pub fn costas_table() -> &'static [Vec<Vec<u32>>] {
    static TABLE: OnceLock<Vec<Vec<Vec<u32>>>> = OnceLock::new();
    TABLE.get_or_init(|| (MIN_ORDER..=MAX_ORDER).map(enumerate_costas).collect())
}
