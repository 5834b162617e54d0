//! One-to-one word alignment from the edit-distance backtrace, and the
//! copy rewriting it drives.

use std::collections::{BTreeMap, BTreeSet};

use crate::pieces::{Piece, PieceError};
use crate::transducer::Action;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PairKind {
    Match,
    Substitution,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct AlignedPair {
    pub input: usize,
    pub retrieved: usize,
    pub kind: PairKind,
}

/// Monotone one-to-one alignment between an input sentence and a
/// retrieved sentence.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Alignment {
    pub pairs: Vec<AlignedPair>,
}

impl Alignment {
    pub fn substitutions(&self) -> impl Iterator<Item = &AlignedPair> {
        self.pairs
            .iter()
            .filter(|p| p.kind == PairKind::Substitution)
    }

    /// Same pairs with the two sides swapped.
    pub fn transposed(&self) -> Alignment {
        Alignment {
            pairs: self
                .pairs
                .iter()
                .map(|p| AlignedPair {
                    input: p.retrieved,
                    retrieved: p.input,
                    kind: p.kind,
                })
                .collect(),
        }
    }
}

/// Which non-diagonal backtrace step wins when both are optimal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TieBreak {
    /// Diagonal, then skip a retrieved word, then skip an input word.
    #[default]
    SkipRetrievedFirst,
    /// Diagonal, then skip an input word, then skip a retrieved word.
    SkipInputFirst,
}

pub fn align_sentences<S: AsRef<str>>(q: &[S], qm: &[S]) -> Alignment {
    align_sentences_with(q, qm, TieBreak::default())
}

pub fn align_sentences_with<S: AsRef<str>>(q: &[S], qm: &[S], tie: TieBreak) -> Alignment {
    let (n, m) = (q.len(), qm.len());
    let w = m + 1;
    let mut dp = vec![0usize; (n + 1) * w];
    for i in 0..=n {
        dp[i * w] = i;
    }
    for (j, cell) in dp[..w].iter_mut().enumerate() {
        *cell = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let sub =
                dp[(i - 1) * w + j - 1] + usize::from(q[i - 1].as_ref() != qm[j - 1].as_ref());
            dp[i * w + j] = sub.min(dp[(i - 1) * w + j] + 1).min(dp[i * w + j - 1] + 1);
        }
    }

    let mut pairs = Vec::new();
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = dp[i * w + j];
        if i > 0 && j > 0 {
            let same = q[i - 1].as_ref() == qm[j - 1].as_ref();
            if here == dp[(i - 1) * w + j - 1] + usize::from(!same) {
                pairs.push(AlignedPair {
                    input: i - 1,
                    retrieved: j - 1,
                    kind: if same {
                        PairKind::Match
                    } else {
                        PairKind::Substitution
                    },
                });
                i -= 1;
                j -= 1;
                continue;
            }
        }
        let skip_retrieved = j > 0 && here == dp[i * w + j - 1] + 1;
        let skip_input = i > 0 && here == dp[(i - 1) * w + j] + 1;
        let take_retrieved = match tie {
            TieBreak::SkipRetrievedFirst => skip_retrieved,
            TieBreak::SkipInputFirst => skip_retrieved && !skip_input,
        };
        if take_retrieved {
            j -= 1;
        } else {
            debug_assert!(skip_input);
            i -= 1;
        }
    }
    pairs.reverse();
    Alignment { pairs }
}

/// Copy remapping derived from an alignment: aligned retrieved positions
/// map to their input counterpart, unaligned ones are dead.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CopyRewrite {
    pub remap: BTreeMap<usize, usize>,
    pub dead_positions: BTreeSet<usize>,
}

impl CopyRewrite {
    pub fn from_alignment(alignment: &Alignment, retrieved_len: usize) -> Self {
        let remap: BTreeMap<usize, usize> = alignment
            .pairs
            .iter()
            .map(|p| (p.retrieved, p.input))
            .collect();
        let dead_positions = (0..retrieved_len)
            .filter(|j| !remap.contains_key(j))
            .collect();
        CopyRewrite {
            remap,
            dead_positions,
        }
    }

    /// Leaves every position where it is.
    pub fn identity(len: usize) -> Self {
        CopyRewrite {
            remap: (0..len).map(|i| (i, i)).collect(),
            dead_positions: BTreeSet::new(),
        }
    }
}

/// Re-points copies in pieces extracted from the sentence `qm` at `q`;
/// pieces copying an unaligned word are dropped.
pub fn rewrite_copies<S: AsRef<str>>(
    pieces: Vec<Piece>,
    alignment: &Alignment,
    _q: &[S],
    qm: &[S],
) -> Result<Vec<Piece>, PieceError> {
    apply_rewrite(
        pieces,
        &CopyRewrite::from_alignment(alignment, qm.len()),
        qm.len(),
    )
}

pub fn apply_rewrite(
    pieces: Vec<Piece>,
    rewrite: &CopyRewrite,
    retrieved_len: usize,
) -> Result<Vec<Piece>, PieceError> {
    let mut out = Vec::with_capacity(pieces.len());
    'pieces: for mut piece in pieces {
        for atom in &mut piece.atoms {
            if let Action::GenTokenCopy(j) = atom.action {
                if j >= retrieved_len {
                    return Err(PieceError::CorruptPiece(format!(
                        "copy position {j} out of range for a sentence of {retrieved_len} tokens"
                    )));
                }
                match rewrite.remap.get(&j) {
                    Some(&i) => atom.action = Action::GenTokenCopy(i),
                    None => continue 'pieces,
                }
            }
        }
        out.push(piece);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    fn pair(input: usize, retrieved: usize, kind: PairKind) -> AlignedPair {
        AlignedPair {
            input,
            retrieved,
            kind,
        }
    }

    #[test]
    fn params_lst_substitution() {
        let a = align_sentences(
            &toks("params is an empty list"),
            &toks("lst is an empty list"),
        );
        let mut want = vec![pair(0, 0, PairKind::Substitution)];
        want.extend((1..5).map(|i| pair(i, i, PairKind::Match)));
        assert_eq!(a.pairs, want);
    }

    #[test]
    fn identical_sentences_all_match() {
        let s = toks("a b c d");
        let a = align_sentences(&s, &s);
        assert_eq!(a.pairs.len(), 4);
        assert_eq!(a.substitutions().count(), 0);
    }

    #[test]
    fn insertion_leaves_retrieved_word_unaligned() {
        let a = align_sentences(&toks("a b"), &toks("a x b"));
        assert_eq!(
            a.pairs,
            vec![pair(0, 0, PairKind::Match), pair(1, 2, PairKind::Match)]
        );
        let rw = CopyRewrite::from_alignment(&a, 3);
        assert_eq!(rw.dead_positions, BTreeSet::from([1]));
    }

    fn words() -> impl Strategy<Value = Vec<String>> {
        prop::collection::vec(
            prop::sample::select(vec!["a", "b", "c"]).prop_map(String::from),
            1..8,
        )
    }

    proptest! {
        #[test]
        fn alignment_is_monotone_one_to_one(q in words(), qm in words()) {
            let a = align_sentences(&q, &qm);
            for w in a.pairs.windows(2) {
                prop_assert!(w[0].input < w[1].input && w[0].retrieved < w[1].retrieved);
            }
            for p in &a.pairs {
                prop_assert_eq!(p.kind == PairKind::Match, q[p.input] == qm[p.retrieved]);
            }
            let d = crate::retrieval::edit_distance(&q, &qm);
            prop_assert!(a.pairs.len() + d >= q.len());
        }

        #[test]
        fn mirrored_alignment_is_transposed(q in words(), qm in words()) {
            let forward = align_sentences_with(&q, &qm, TieBreak::SkipRetrievedFirst);
            let backward = align_sentences_with(&qm, &q, TieBreak::SkipInputFirst);
            prop_assert_eq!(forward.transposed(), backward);
        }
    }
}
