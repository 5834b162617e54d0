//! Base action scorers.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::grammar::{Grammar, RuleId, TypeId};
use crate::retrieval::TrainingExample;
use crate::transducer::{Action, Derivation, Frontier, Slot};

use super::DecodeError;

/// Everything a scorer may condition on at one decoding step.
pub struct ScoringContext<'a> {
    pub grammar: &'a Grammar,
    pub nl: &'a [String],
    pub derivation: &'a Derivation,
    pub slot: &'a Slot,
    /// Node indices from the root down to the new action's parent.
    pub ancestors: &'a [usize],
}

/// Base model over next actions.
///
/// `log_probs` returns one finite log-probability per entry of `legal`,
/// and the probabilities sum to one.
pub trait BaseScorer: Send + Sync {
    fn name(&self) -> &str;

    /// Vocabulary tokens proposed for a terminal type.
    fn lexicon(&self, terminal: TypeId) -> &[String];

    fn log_probs(&self, ctx: &ScoringContext<'_>, legal: &[Action]) -> Vec<f64>;
}

/// Terminal vocabulary observed in training trees.
#[derive(Debug, Clone, Default)]
pub struct Lexicon {
    vocab: BTreeMap<TypeId, Vec<String>>,
    seen: BTreeSet<String>,
}

impl Lexicon {
    pub fn from_examples(examples: &[TrainingExample]) -> Self {
        let mut vocab: BTreeMap<TypeId, BTreeSet<String>> = BTreeMap::new();
        let mut seen = BTreeSet::new();
        for ex in examples {
            for node in ex.tree.nodes() {
                match &node.action {
                    Action::GenTokenVocab(t) => {
                        vocab.entry(node.frontier.ty).or_default().insert(t.clone());
                        seen.insert(t.clone());
                    }
                    Action::GenTokenCopy(i) => {
                        if let Some(t) = ex.nl.get(*i) {
                            seen.insert(t.clone());
                        }
                    }
                    _ => {}
                }
            }
        }
        Lexicon {
            vocab: vocab
                .into_iter()
                .map(|(k, v)| (k, v.into_iter().collect()))
                .collect(),
            seen,
        }
    }

    pub fn tokens(&self, terminal: TypeId) -> &[String] {
        self.vocab.get(&terminal).map_or(&[], Vec::as_slice)
    }

    /// Whether the token filled a terminal anywhere in training.
    pub fn seen_as_terminal(&self, token: &str) -> bool {
        self.seen.contains(token)
    }
}

/// Every legal action equally likely.
#[derive(Debug, Clone, Default)]
pub struct UniformScorer {
    lexicon: Lexicon,
}

impl UniformScorer {
    pub fn new(lexicon: Lexicon) -> Self {
        UniformScorer { lexicon }
    }
}

impl BaseScorer for UniformScorer {
    fn name(&self) -> &str {
        "uniform"
    }

    fn lexicon(&self, terminal: TypeId) -> &[String] {
        self.lexicon.tokens(terminal)
    }

    fn log_probs(&self, _ctx: &ScoringContext<'_>, legal: &[Action]) -> Vec<f64> {
        let lp = -(legal.len() as f64).ln();
        vec![lp; legal.len()]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum Outcome {
    Rule(RuleId),
    End,
    Copy,
    Token(String),
}

impl Outcome {
    fn of(action: &Action) -> Outcome {
        match action {
            Action::ApplyRule(r) => Outcome::Rule(*r),
            Action::GenTokenEnd => Outcome::End,
            Action::GenTokenCopy(_) => Outcome::Copy,
            Action::GenTokenVocab(t) => Outcome::Token(t.clone()),
        }
    }
}

type Context = (Frontier, Vec<Outcome>);

#[derive(Debug, Default, Clone)]
struct Counts {
    outcomes: HashMap<Outcome, u32>,
    total: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CountScorerConfig {
    /// Number of ancestor actions in the conditioning context.
    pub context: usize,
    /// Add-α smoothing constant.
    pub alpha: f64,
}

impl Default for CountScorerConfig {
    fn default() -> Self {
        CountScorerConfig {
            context: 2,
            alpha: 0.5,
        }
    }
}

/// Relative frequencies of actions given the frontier and the last `k`
/// ancestor actions, with add-α smoothing over the legal set. Unseen
/// contexts back off to shorter ones.
///
/// Copies are counted as one outcome; at scoring time that mass is shared
/// by the input positions whose word filled a terminal in training.
#[derive(Debug, Clone)]
pub struct CountScorer {
    config: CountScorerConfig,
    lexicon: Lexicon,
    /// `levels[j]` conditions on the last `j` ancestors.
    levels: Vec<HashMap<Context, Counts>>,
}

impl CountScorer {
    pub fn train(
        grammar: &Grammar,
        examples: &[TrainingExample],
        config: CountScorerConfig,
    ) -> Self {
        let mut levels: Vec<HashMap<Context, Counts>> = vec![HashMap::new(); config.context + 1];
        for ex in examples {
            let nodes = ex.tree.nodes();
            for node in nodes {
                let mut ancestors = Vec::new();
                let mut cur = node.parent;
                while let (Some(p), true) = (cur, ancestors.len() < config.context) {
                    ancestors.push(Outcome::of(&nodes[p].action));
                    cur = nodes[p].parent;
                }
                ancestors.reverse();
                let outcome = Outcome::of(&node.action);
                for (j, level) in levels.iter_mut().enumerate() {
                    if j > ancestors.len() {
                        break;
                    }
                    let ctx = (
                        slot_frontier(grammar, node.frontier),
                        ancestors[ancestors.len() - j..].to_vec(),
                    );
                    let counts = level.entry(ctx).or_default();
                    *counts.outcomes.entry(outcome.clone()).or_default() += 1;
                    counts.total += 1;
                }
            }
        }
        CountScorer {
            config,
            lexicon: Lexicon::from_examples(examples),
            levels,
        }
    }

    pub fn config(&self) -> CountScorerConfig {
        self.config
    }
}

/// Frontier of the slot a node filled. Closer nodes record their synthetic
/// head type; the slot itself had the field's declared type.
fn slot_frontier(grammar: &Grammar, frontier: Frontier) -> Frontier {
    match frontier.field {
        Some(f) => Frontier {
            ty: grammar.rule(f.rule).fields[usize::from(f.index)].ty,
            field: Some(f),
        },
        None => frontier,
    }
}

impl BaseScorer for CountScorer {
    fn name(&self) -> &str {
        "count"
    }

    fn lexicon(&self, terminal: TypeId) -> &[String] {
        self.lexicon.tokens(terminal)
    }

    fn log_probs(&self, ctx: &ScoringContext<'_>, legal: &[Action]) -> Vec<f64> {
        let nodes = ctx.derivation.nodes();
        let history: Vec<Outcome> = ctx
            .ancestors
            .iter()
            .rev()
            .take(self.config.context)
            .rev()
            .map(|&i| Outcome::of(&nodes[i].action))
            .collect();
        let frontier = ctx.slot.frontier;
        let counts = (0..=history.len()).rev().find_map(|j| {
            self.levels[j]
                .get(&(frontier, history[history.len() - j..].to_vec()))
                .filter(|c| c.total > 0)
        });
        let alpha = self.config.alpha;
        let count =
            |o: &Outcome| counts.and_then(|c| c.outcomes.get(o)).copied().unwrap_or(0) as f64;

        let copy_mass = count(&Outcome::Copy);
        let eligible: Vec<bool> = legal
            .iter()
            .map(|a| match a {
                Action::GenTokenCopy(i) => ctx
                    .nl
                    .get(*i)
                    .is_some_and(|t| self.lexicon.seen_as_terminal(t)),
                _ => false,
            })
            .collect();
        let n_eligible = eligible.iter().filter(|&&e| e).count();

        let weights: Vec<f64> = legal
            .iter()
            .zip(&eligible)
            .map(|(a, &el)| match a {
                Action::GenTokenCopy(_) => {
                    alpha
                        + if el {
                            copy_mass / n_eligible as f64
                        } else {
                            0.0
                        }
                }
                other => alpha + count(&Outcome::of(other)),
            })
            .collect();
        let total: f64 = weights.iter().sum();
        weights.iter().map(|w| (w / total).ln()).collect()
    }
}

/// Inputs available to scorer factories.
pub struct ScorerInputs<'a> {
    pub grammar: &'a Grammar,
    pub examples: &'a [TrainingExample],
    pub count: CountScorerConfig,
}

pub type ScorerFactory = fn(&ScorerInputs<'_>) -> Box<dyn BaseScorer>;

/// Scorer implementations by name.
#[derive(Clone)]
pub struct ScorerRegistry {
    factories: BTreeMap<String, ScorerFactory>,
}

impl Default for ScorerRegistry {
    fn default() -> Self {
        let mut registry = ScorerRegistry {
            factories: BTreeMap::new(),
        };
        registry.register("uniform", |inputs| {
            Box::new(UniformScorer::new(Lexicon::from_examples(inputs.examples)))
        });
        registry.register("count", |inputs| {
            Box::new(CountScorer::train(
                inputs.grammar,
                inputs.examples,
                inputs.count,
            ))
        });
        registry
    }
}

impl ScorerRegistry {
    pub fn register(&mut self, name: &str, factory: ScorerFactory) {
        self.factories.insert(name.to_string(), factory);
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }

    pub fn build(
        &self,
        name: &str,
        inputs: &ScorerInputs<'_>,
    ) -> Result<Box<dyn BaseScorer>, DecodeError> {
        let factory = self
            .factories
            .get(name)
            .ok_or_else(|| DecodeError::UnknownScorer(name.to_string()))?;
        Ok(factory(inputs))
    }
}
