//! Grammar-constrained beam search with piece boosts.

mod scorer;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grammar::Grammar;
use crate::pieces::{KeyAtom, PieceEntry, PieceKey, PieceTable};
use crate::transducer::{Action, ActionTree, Derivation, Frontier, SlotKind, TransduceError};

pub use scorer::{
    BaseScorer, CountScorer, CountScorerConfig, Lexicon, ScorerFactory, ScorerInputs,
    ScorerRegistry, ScoringContext, UniformScorer,
};

#[derive(Debug, Error)]
pub enum DecodeError {
    #[error("invalid decoder configuration: {0}")]
    InvalidConfig(String),
    #[error("piece table must be normalized before decoding")]
    TableNotNormalized,
    #[error("hypothesis is already complete")]
    CompleteHypothesis,
    #[error("scorer `{scorer}` returned an invalid distribution: {message}")]
    Scorer { scorer: String, message: String },
    #[error("unknown scorer `{0}`")]
    UnknownScorer(String),
    #[error("no complete derivation within {max_steps} steps; best partials: {}", partials.join(" | "))]
    Timeout {
        max_steps: usize,
        partials: Vec<String>,
    },
    #[error("no legal continuation for any hypothesis")]
    DeadEnd,
    #[error(transparent)]
    Transduce(#[from] TransduceError),
}

/// How boosts from several matching piece orders combine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    #[default]
    Sum,
    Max,
}

impl std::str::FromStr for Aggregation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sum" => Ok(Aggregation::Sum),
            "max" => Ok(Aggregation::Max),
            other => Err(format!(
                "unknown aggregation `{other}` (expected sum or max)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodeConfig {
    pub beam: usize,
    pub lambda: f64,
    pub n_max: usize,
    pub max_steps: usize,
    pub agg: Aggregation,
    /// Stop boosting a piece once the hypothesis holds it as many times as
    /// the most generous retrieved tree did.
    pub repeat_limit: bool,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig {
            beam: 15,
            lambda: 3.0,
            n_max: 4,
            max_steps: 300,
            agg: Aggregation::Sum,
            repeat_limit: true,
        }
    }
}

impl DecodeConfig {
    pub fn validate(&self) -> Result<(), DecodeError> {
        let bad = |m: &str| Err(DecodeError::InvalidConfig(m.to_string()));
        if self.beam == 0 {
            return bad("beam must be at least 1");
        }
        if self.n_max == 0 {
            return bad("n_max must be at least 1");
        }
        if self.max_steps == 0 {
            return bad("max_steps must be at least 1");
        }
        if !self.lambda.is_finite() || self.lambda < 0.0 {
            return bad("lambda must be a finite non-negative number");
        }
        Ok(())
    }
}

/// Next actions allowed by the grammar at the derivation's frontier.
pub fn legal_actions(
    grammar: &Grammar,
    scorer: &dyn BaseScorer,
    derivation: &Derivation,
    nl: &[String],
) -> Result<Vec<Action>, DecodeError> {
    Ok(legal_with_frontiers(grammar, scorer, derivation, nl)?
        .into_iter()
        .map(|(a, _)| a)
        .collect())
}

fn legal_with_frontiers(
    grammar: &Grammar,
    scorer: &dyn BaseScorer,
    derivation: &Derivation,
    nl: &[String],
) -> Result<Vec<(Action, Frontier)>, DecodeError> {
    let slot = derivation
        .frontier()
        .ok_or(DecodeError::CompleteHypothesis)?;
    let ty = grammar.node_type(slot.frontier.ty);
    let mut candidates: Vec<Action> = Vec::new();
    if ty.terminal_class().is_none() {
        candidates.extend(
            grammar
                .rule_ids_for(slot.frontier.ty)
                .iter()
                .map(|&r| Action::ApplyRule(r)),
        );
        if let SlotKind::Optional { none: c } | SlotKind::Sequence { end: c } = slot.kind {
            candidates.push(Action::ApplyRule(c));
        }
    } else {
        if slot.kind == SlotKind::TokenContinue {
            candidates.push(Action::GenTokenEnd);
        }
        candidates.extend((0..nl.len()).map(Action::GenTokenCopy));
        candidates.extend(
            scorer
                .lexicon(slot.frontier.ty)
                .iter()
                .cloned()
                .map(Action::GenTokenVocab),
        );
    }
    candidates.sort();
    candidates.dedup();
    Ok(candidates
        .into_iter()
        .filter_map(|a| derivation.check(grammar, &a, nl).ok().map(|f| (a, f)))
        .collect())
}

/// `λ` times the aggregated table scores of the pieces that `candidate`
/// would complete, for every order from 1 to `n_max`. `ancestors` is the
/// chain from the root to the candidate's parent.
pub fn boost_for(
    candidate: &KeyAtom,
    ancestors: &[KeyAtom],
    table: &PieceTable,
    lambda: f64,
    n_max: usize,
    agg: Aggregation,
) -> f64 {
    boost_filtered(candidate, ancestors, table, lambda, n_max, agg, |_, _| true)
}

fn boost_filtered(
    candidate: &KeyAtom,
    ancestors: &[KeyAtom],
    table: &PieceTable,
    lambda: f64,
    n_max: usize,
    agg: Aggregation,
    allow: impl Fn(&PieceKey, &PieceEntry) -> bool,
) -> f64 {
    if lambda == 0.0 || table.is_empty() {
        return 0.0;
    }
    let mut total = 0.0f64;
    for k in 1..=n_max.min(ancestors.len() + 1) {
        let mut atoms = ancestors[ancestors.len() + 1 - k..].to_vec();
        atoms.push(candidate.clone());
        let key = PieceKey(atoms);
        if let Some(entry) = table.get(&key).filter(|e| allow(&key, e)) {
            total = match agg {
                Aggregation::Sum => total + entry.score,
                Aggregation::Max => total.max(entry.score),
            };
        }
    }
    lambda * total
}

/// Adds boosts to base log-probabilities and renormalizes with
/// log-sum-exp. Without any boost the base values pass through untouched.
pub fn renormalize(base: &[f64], boosts: &[f64]) -> Vec<f64> {
    if boosts.iter().all(|&b| b == 0.0) {
        return base.to_vec();
    }
    let raw: Vec<f64> = base.iter().zip(boosts).map(|(l, b)| l + b).collect();
    let peak = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = peak + raw.iter().map(|r| (r - peak).exp()).sum::<f64>().ln();
    raw.iter().map(|r| r - lse).collect()
}

/// One expansion of one hypothesis, as seen by an observer.
pub struct StepInfo<'a> {
    pub step: usize,
    pub legal: &'a [Action],
    pub base: &'a [f64],
    pub boosts: &'a [f64],
    pub log_probs: &'a [f64],
}

#[derive(Debug, Clone)]
pub struct Hypothesis {
    pub derivation: Derivation,
    /// Sum of base-model log-probabilities.
    pub base_logprob: f64,
    /// Sum of renormalized boosted log-probabilities; used for ranking.
    pub score: f64,
    /// Key atom of every node, parallel to the derivation's nodes.
    atoms: Vec<KeyAtom>,
    /// Occurrences so far of each table key.
    matched: HashMap<PieceKey, u32>,
}

impl Hypothesis {
    fn new(grammar: &Grammar) -> Self {
        Hypothesis {
            derivation: Derivation::new(grammar),
            base_logprob: 0.0,
            score: 0.0,
            atoms: Vec::new(),
            matched: HashMap::new(),
        }
    }

    pub fn is_complete(&self) -> bool {
        self.derivation.is_complete()
    }

    pub fn matched_pieces(&self) -> usize {
        self.matched.values().map(|&c| c as usize).sum()
    }

    fn ancestor_atoms(&self, parent: Option<usize>) -> Vec<KeyAtom> {
        self.derivation
            .path_to(parent)
            .into_iter()
            .map(|i| self.atoms[i].clone())
            .collect()
    }

    fn record_matches(&mut self, node: usize, table: &PieceTable, n_max: usize) {
        if table.is_empty() {
            return;
        }
        let path = self.derivation.path_to(Some(node));
        for k in 1..=n_max.min(path.len()) {
            let key = PieceKey(
                path[path.len() - k..]
                    .iter()
                    .map(|&i| self.atoms[i].clone())
                    .collect(),
            );
            if table.get(&key).is_some() {
                *self.matched.entry(key).or_default() += 1;
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct DecodedTree {
    pub tree: ActionTree,
    pub score: f64,
    pub base_logprob: f64,
    /// Table pieces present in the tree, counted per occurrence.
    pub matched_pieces: usize,
}

pub fn decode(
    grammar: &Grammar,
    scorer: &dyn BaseScorer,
    q: &[String],
    table: &PieceTable,
    config: &DecodeConfig,
) -> Result<Vec<DecodedTree>, DecodeError> {
    decode_with_observer(grammar, scorer, q, table, config, &mut |_| {})
}

struct Candidate {
    score: f64,
    base: f64,
    rank: usize,
    action: Action,
    frontier: Frontier,
}

/// Beam search; `observer` sees every step's distribution.
pub fn decode_with_observer(
    grammar: &Grammar,
    scorer: &dyn BaseScorer,
    q: &[String],
    table: &PieceTable,
    config: &DecodeConfig,
    observer: &mut dyn FnMut(&StepInfo<'_>),
) -> Result<Vec<DecodedTree>, DecodeError> {
    config.validate()?;
    if !table.is_normalized() && !table.is_empty() {
        return Err(DecodeError::TableNotNormalized);
    }
    // With no boost the table plays no part, not even in match counts.
    let empty = PieceTable::empty(config.n_max);
    let table = if config.lambda == 0.0 { &empty } else { table };
    let mut live = vec![Hypothesis::new(grammar)];
    let mut finished: Vec<Hypothesis> = Vec::new();

    for step in 0..config.max_steps {
        if live.is_empty() || finished.len() >= config.beam {
            break;
        }
        let mut candidates = Vec::new();
        for (rank, hyp) in live.iter().enumerate() {
            let slot = *hyp
                .derivation
                .frontier()
                .ok_or(DecodeError::CompleteHypothesis)?;
            let legal = legal_with_frontiers(grammar, scorer, &hyp.derivation, q)?;
            if legal.is_empty() {
                continue;
            }
            let actions: Vec<Action> = legal.iter().map(|(a, _)| a.clone()).collect();
            let ancestors = hyp.derivation.path_to(slot.parent);
            let ctx = ScoringContext {
                grammar,
                nl: q,
                derivation: &hyp.derivation,
                slot: &slot,
                ancestors: &ancestors,
            };
            let base = scorer.log_probs(&ctx, &actions);
            if base.len() != actions.len() || base.iter().any(|l| !l.is_finite()) {
                return Err(DecodeError::Scorer {
                    scorer: scorer.name().to_string(),
                    message: format!("{} values for {} legal actions", base.len(), actions.len()),
                });
            }
            let ancestor_atoms = hyp.ancestor_atoms(slot.parent);
            let boosts: Vec<f64> = legal
                .iter()
                .map(|(a, f)| {
                    let atom = KeyAtom::new(*f, a, q).expect("legal copies are in range");
                    boost_filtered(
                        &atom,
                        &ancestor_atoms,
                        table,
                        config.lambda,
                        config.n_max,
                        config.agg,
                        |k, e| {
                            !config.repeat_limit
                                || hyp.matched.get(k).copied().unwrap_or(0) < e.count
                        },
                    )
                })
                .collect();
            let log_probs = renormalize(&base, &boosts);
            observer(&StepInfo {
                step,
                legal: &actions,
                base: &base,
                boosts: &boosts,
                log_probs: &log_probs,
            });
            for (i, (action, frontier)) in legal.into_iter().enumerate() {
                candidates.push(Candidate {
                    score: hyp.score + log_probs[i],
                    base: hyp.base_logprob + base[i],
                    rank,
                    action,
                    frontier,
                });
            }
        }
        candidates.sort_by(|a, b| {
            b.score
                .total_cmp(&a.score)
                .then(a.rank.cmp(&b.rank))
                .then_with(|| a.action.cmp(&b.action))
        });
        let width = config.beam - finished.len();
        let mut next = Vec::with_capacity(width);
        for cand in candidates.into_iter().take(width) {
            let mut hyp = live[cand.rank].clone();
            let atom =
                KeyAtom::new(cand.frontier, &cand.action, q).expect("legal copies are in range");
            let node = hyp.derivation.apply(grammar, cand.action, q)?;
            hyp.atoms.push(atom);
            hyp.record_matches(node, table, config.n_max);
            hyp.score = cand.score;
            hyp.base_logprob = cand.base;
            if hyp.is_complete() {
                finished.push(hyp);
            } else {
                next.push(hyp);
            }
        }
        live = next;
    }

    if finished.is_empty() {
        if live.is_empty() {
            return Err(DecodeError::DeadEnd);
        }
        return Err(DecodeError::Timeout {
            max_steps: config.max_steps,
            partials: live
                .iter()
                .take(3)
                .map(|h| h.derivation.partial_tree().render(grammar, q))
                .collect(),
        });
    }
    finished.sort_by(|a, b| b.score.total_cmp(&a.score));
    finished
        .into_iter()
        .map(|h| {
            let matched_pieces = h.matched_pieces();
            Ok(DecodedTree {
                score: h.score,
                base_logprob: h.base_logprob,
                matched_pieces,
                tree: h.derivation.into_tree()?,
            })
        })
        .collect()
}
