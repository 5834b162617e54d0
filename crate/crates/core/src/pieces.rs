//! Vertical n-gram action subtrees ("pieces"), their canonical keys and
//! the per-query score table.

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::align::{apply_rewrite, CopyRewrite};
use crate::grammar::{Grammar, RuleId};
use crate::retrieval::{similarity, Neighbor, RetrievalIndex};
use crate::transducer::{Action, ActionTree, Frontier};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PieceError {
    #[error("normalization needs at least 2 training examples, index has {0}")]
    NormalizationUnavailable(usize),
    #[error("piece table is already normalized")]
    AlreadyNormalized,
    #[error("corrupt piece: {0}")]
    CorruptPiece(String),
    #[error("n_max must be at least 1")]
    InvalidOrder,
}

/// One element of a piece: an action and the frontier it was taken at.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PieceAtom {
    pub frontier: Frontier,
    pub action: Action,
}

/// A parent-to-child chain of actions, root-most first. Copy positions
/// index the sentence the piece currently refers to.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Piece {
    pub atoms: Vec<PieceAtom>,
}

impl Piece {
    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// Canonical key, with copy positions resolved against `sentence`.
    pub fn key(&self, sentence: &[String]) -> Result<PieceKey, PieceError> {
        self.atoms
            .iter()
            .map(|a| {
                KeyAtom::new(a.frontier, &a.action, sentence).ok_or_else(|| {
                    PieceError::CorruptPiece(format!(
                        "copy position out of range for a sentence of {} tokens",
                        sentence.len()
                    ))
                })
            })
            .collect::<Result<Vec<_>, _>>()
            .map(PieceKey)
    }

    pub fn copy_positions(&self) -> impl Iterator<Item = usize> + '_ {
        self.atoms.iter().filter_map(|a| match a.action {
            Action::GenTokenCopy(i) => Some(i),
            _ => None,
        })
    }
}

/// Action as it appears in a key. Copies are keyed by the copied string.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum KeyAction {
    Rule(RuleId),
    End,
    Copy(String),
    Token(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct KeyAtom {
    pub frontier: Frontier,
    pub action: KeyAction,
}

impl KeyAtom {
    /// `None` when a copy position is outside `sentence`.
    pub fn new(frontier: Frontier, action: &Action, sentence: &[String]) -> Option<KeyAtom> {
        let action = match action {
            Action::ApplyRule(r) => KeyAction::Rule(*r),
            Action::GenTokenEnd => KeyAction::End,
            Action::GenTokenCopy(i) => KeyAction::Copy(sentence.get(*i)?.clone()),
            Action::GenTokenVocab(t) => KeyAction::Token(t.clone()),
        };
        Some(KeyAtom { frontier, action })
    }

    pub fn describe(&self, grammar: &Grammar) -> String {
        let action = match &self.action {
            KeyAction::Rule(r) => grammar.rule(*r).name.clone(),
            KeyAction::End => "<end>".into(),
            KeyAction::Copy(t) => format!("copy({t})"),
            KeyAction::Token(t) => format!("gen({t})"),
        };
        format!("{} -> {}", self.frontier.describe(grammar), action)
    }
}

/// Canonical identity of a piece: its (frontier, action) sequence.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PieceKey(pub Vec<KeyAtom>);

impl PieceKey {
    pub fn order(&self) -> usize {
        self.0.len()
    }

    /// Length-prefixed byte encoding; distinct keys give distinct bytes.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&(self.0.len() as u32).to_be_bytes());
        for atom in &self.0 {
            out.extend_from_slice(&atom.frontier.ty.0.to_be_bytes());
            match atom.frontier.field {
                None => out.push(0),
                Some(f) => {
                    out.push(1);
                    out.extend_from_slice(&f.rule.0.to_be_bytes());
                    out.extend_from_slice(&f.index.to_be_bytes());
                }
            }
            let mut text = |tag: u8, s: &str| {
                out.push(tag);
                out.extend_from_slice(&(s.len() as u32).to_be_bytes());
                out.extend_from_slice(s.as_bytes());
            };
            match &atom.action {
                KeyAction::Rule(r) => {
                    out.push(0);
                    out.extend_from_slice(&r.0.to_be_bytes());
                }
                KeyAction::End => out.push(1),
                KeyAction::Copy(s) => text(2, s),
                KeyAction::Token(s) => text(3, s),
            }
        }
        out
    }

    pub fn describe(&self, grammar: &Grammar) -> String {
        self.0
            .iter()
            .map(|a| a.describe(grammar))
            .collect::<Vec<_>>()
            .join(" ; ")
    }
}

/// All downward parent chains of length `1..=n_max`; a node at depth `d`
/// ends exactly `min(d + 1, n_max)` of them.
pub fn extract_pieces(tree: &ActionTree, n_max: usize) -> Vec<Piece> {
    let mut pieces = Vec::new();
    if n_max == 0 {
        return pieces;
    }
    for (idx, node) in tree.nodes().iter().enumerate() {
        // Chain from the node upwards, at most n_max long.
        let mut chain = vec![idx];
        let mut cur = node.parent;
        while let (Some(p), true) = (cur, chain.len() < n_max) {
            chain.push(p);
            cur = tree.node(p).parent;
        }
        chain.reverse();
        for start in (0..chain.len()).rev() {
            pieces.push(Piece {
                atoms: chain[start..]
                    .iter()
                    .map(|&i| PieceAtom {
                        frontier: tree.node(i).frontier,
                        action: tree.node(i).action.clone(),
                    })
                    .collect(),
            });
        }
    }
    pieces
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PieceEntry {
    pub score: f64,
    /// Largest number of occurrences in any single contributing tree.
    pub count: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PieceTable {
    entries: BTreeMap<PieceKey, PieceEntry>,
    n_max: usize,
    normalized: bool,
}

impl PieceTable {
    pub fn new(n_max: usize) -> Self {
        PieceTable {
            entries: BTreeMap::new(),
            n_max,
            normalized: false,
        }
    }

    /// Empty table already marked normalized, for base-only decoding.
    pub fn empty(n_max: usize) -> Self {
        PieceTable {
            normalized: true,
            ..PieceTable::new(n_max)
        }
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, key: &PieceKey) -> Option<&PieceEntry> {
        self.entries.get(key)
    }

    pub fn score(&self, key: &PieceKey) -> Option<f64> {
        self.entries.get(key).map(|e| e.score)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&PieceKey, &PieceEntry)> {
        self.entries.iter()
    }

    /// Keeps the larger score and the larger count.
    pub fn offer(&mut self, key: PieceKey, score: f64, count: u32) {
        self.entries
            .entry(key)
            .and_modify(|e| {
                e.score = e.score.max(score);
                e.count = e.count.max(count);
            })
            .or_insert(PieceEntry { score, count });
    }

    /// Entries sorted by score descending, then key.
    pub fn ranked(&self) -> Vec<(&PieceKey, &PieceEntry)> {
        let mut v: Vec<_> = self.entries.iter().collect();
        v.sort_by(|a, b| b.1.score.total_cmp(&a.1.score).then_with(|| a.0.cmp(b.0)));
        v
    }

    /// One line per piece: `score<TAB>k<TAB>chain`.
    pub fn render(&self, grammar: &Grammar) -> String {
        let mut out = String::new();
        for (key, entry) in self.ranked() {
            out.push_str(&format!(
                "{}\t{}\t{}\n",
                entry.score,
                key.order(),
                key.describe(grammar)
            ));
        }
        out
    }
}

/// Scores every piece of every neighbor by the best similarity among the
/// neighbors containing it. `rewrites[i]` re-points the copies of
/// neighbor `i` at `q`. Neighbors with zero similarity contribute nothing.
pub fn collect_scored_pieces(
    neighbors: &[Neighbor<'_>],
    n_max: usize,
    q: &[String],
    rewrites: &[CopyRewrite],
) -> Result<PieceTable, PieceError> {
    if n_max == 0 {
        return Err(PieceError::InvalidOrder);
    }
    if rewrites.len() != neighbors.len() {
        return Err(PieceError::CorruptPiece(format!(
            "{} rewrites for {} neighbors",
            rewrites.len(),
            neighbors.len()
        )));
    }
    let mut table = PieceTable::new(n_max);
    for (neighbor, rewrite) in neighbors.iter().zip(rewrites) {
        if neighbor.similarity <= 0.0 {
            continue;
        }
        let pieces = extract_pieces(&neighbor.example.tree, n_max);
        let pieces = apply_rewrite(pieces, rewrite, neighbor.example.nl.len())?;
        let mut counts: BTreeMap<PieceKey, u32> = BTreeMap::new();
        for piece in &pieces {
            *counts.entry(piece.key(q)?).or_default() += 1;
        }
        for (key, count) in counts {
            table.offer(key, neighbor.similarity, count);
        }
    }
    Ok(table)
}

/// Mean over training examples of the similarity to their most similar
/// other example.
pub fn compute_norm_constant(index: &RetrievalIndex) -> Result<f64, PieceError> {
    let n = index.len();
    if n < 2 {
        return Err(PieceError::NormalizationUnavailable(n));
    }
    let best: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let q = index.key(i);
            let mut best = 0.0f64;
            for j in (0..n).filter(|&j| j != i) {
                let k = index.key(j);
                // sim <= 1 - |len diff| / max len; skip hopeless candidates.
                let longest = q.len().max(k.len());
                let bound = 1.0 - q.len().abs_diff(k.len()) as f64 / longest as f64;
                if bound <= best {
                    continue;
                }
                best = best.max(similarity(q, k).unwrap_or(0.0));
                if best >= 1.0 {
                    break;
                }
            }
            best
        })
        .collect();
    Ok(best.iter().sum::<f64>() / n as f64)
}

/// Subtracts `norm_constant` from every score and drops non-positive
/// entries.
pub fn normalize(mut table: PieceTable, norm_constant: f64) -> Result<PieceTable, PieceError> {
    if table.normalized {
        return Err(PieceError::AlreadyNormalized);
    }
    table.entries.retain(|_, e| {
        e.score -= norm_constant;
        e.score > 0.0
    });
    table.normalized = true;
    Ok(table)
}

impl fmt::Display for PieceKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::load_grammar;
    use crate::grammars;
    use crate::transducer::{ast_to_actions, parse_code};

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    /// Brute force: every (start, end) pair where start is an ancestor of
    /// end (or end itself) within n_max - 1 steps.
    fn brute_force_count(tree: &ActionTree, n_max: usize) -> usize {
        let n = tree.len();
        let mut count = 0;
        for end in 0..n {
            for start in 0..n {
                let mut len = 1;
                let mut cur = end;
                let mut found = cur == start;
                while !found {
                    match tree.node(cur).parent {
                        Some(p) => {
                            cur = p;
                            len += 1;
                            found = cur == start;
                        }
                        None => break,
                    }
                }
                if found && len <= n_max {
                    count += 1;
                }
            }
        }
        count
    }

    #[test]
    fn chain_of_five_yields_twelve_trigram_pieces() {
        let g = load_grammar("a = A(b x)\nb = B(c x)\nc = C(d x)\nd = D(e x)\ne = E\n").unwrap();
        let actions: Vec<Action> = (0..5).map(|i| Action::ApplyRule(RuleId(i))).collect();
        let tree = ActionTree::from_actions(&g, &actions, &[]).unwrap();
        let pieces = extract_pieces(&tree, 3);
        assert_eq!(pieces.len(), 12);
        assert_eq!(pieces.len(), brute_force_count(&tree, 3));
        assert_eq!(pieces.iter().filter(|p| p.len() == 1).count(), 5);
        assert_eq!(pieces.iter().filter(|p| p.len() == 2).count(), 4);
        assert_eq!(pieces.iter().filter(|p| p.len() == 3).count(), 3);
    }

    #[test]
    fn single_node_tree_has_one_piece() {
        let g = load_grammar("a = A\n").unwrap();
        let tree = ActionTree::from_actions(&g, &[Action::ApplyRule(RuleId(0))], &[]).unwrap();
        for n in 1..6 {
            assert_eq!(extract_pieces(&tree, n).len(), 1);
        }
    }

    #[test]
    fn assign_list_epsilon_trigram() {
        let g = load_grammar(grammars::PYTHON_MINI).unwrap();
        let nl = toks("x is an empty list");
        let ast = parse_code(&g, &toks("x = [ ]")).unwrap();
        let tree = ast_to_actions(&g, &ast, &nl).unwrap();
        let want: Vec<Action> = ["Assign", "List", "List.elts*.end"]
            .iter()
            .map(|n| Action::ApplyRule(g.rule_by_name(n).unwrap()))
            .collect();
        let pieces = extract_pieces(&tree, 3);
        let hit = pieces
            .iter()
            .find(|p| p.atoms.iter().map(|a| a.action.clone()).collect::<Vec<_>>() == want)
            .expect("trigram present");
        assert_eq!(
            hit.key(&nl).unwrap().describe(&g),
            "stmt(body) -> Assign ; expr(value) -> List ; List.elts*(elts) -> List.elts*.end"
        );
    }

    #[test]
    fn normalize_examples() {
        let key = |t: &str| {
            PieceKey(vec![KeyAtom {
                frontier: Frontier {
                    ty: crate::grammar::TypeId(0),
                    field: None,
                },
                action: KeyAction::Token(t.into()),
            }])
        };
        let mut table = PieceTable::new(4);
        table.offer(key("a"), 0.9, 1);
        table.offer(key("b"), 0.3, 1);
        let normed = normalize(table.clone(), 0.4).unwrap();
        assert!((normed.score(&key("a")).unwrap() - 0.5).abs() < 1e-12);
        assert!(normed.score(&key("b")).is_none());
        assert_eq!(normalize(normed, 0.0), Err(PieceError::AlreadyNormalized));
        let same = normalize(table.clone(), 0.0).unwrap();
        assert_eq!(same.score(&key("a")), Some(0.9));
        assert_eq!(same.len(), 2);
        assert!(same.is_normalized());
    }

    #[test]
    fn offer_keeps_max_score() {
        let key = PieceKey(vec![]);
        let mut table = PieceTable::new(2);
        table.offer(key.clone(), 0.5, 1);
        table.offer(key.clone(), 0.9, 2);
        table.offer(key.clone(), 0.7, 1);
        assert_eq!(
            table.get(&key),
            Some(&PieceEntry {
                score: 0.9,
                count: 2
            })
        );
    }
}
