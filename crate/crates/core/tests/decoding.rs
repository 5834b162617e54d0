use std::sync::Arc;

use piecegen::corpus::example_from_ast;
use piecegen::decoder::{
    decode, legal_actions, renormalize, BaseScorer, CountScorer, CountScorerConfig, DecodeConfig,
    Lexicon, ScorerInputs, ScorerRegistry, UniformScorer,
};
use piecegen::pipeline::{guide, Generator};
use piecegen::retrieval::{build_index, IndexOptions, TrainingExample};
use piecegen::synth::{duplicate_query_corpus, AstGenerator};
use piecegen::transducer::{actions_to_ast, ast_to_code, Action, Derivation};
use piecegen::{grammars, load_grammar, Grammar, RuleId};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn toy_examples(g: &Grammar) -> Vec<TrainingExample> {
    duplicate_query_corpus(g)
        .iter()
        .map(|p| example_from_ast(g, &p.id, p.nl.clone(), &p.ast).unwrap())
        .collect()
}

#[test]
fn legal_actions_match_exhaustive_check() {
    let g = load_grammar(grammars::TOY).unwrap();
    let train = toy_examples(&g);
    let scorer = UniformScorer::new(Lexicon::from_examples(&train));
    let nl: Vec<String> = "set x to 5 and print it"
        .split(' ')
        .map(String::from)
        .collect();
    let mut universe: Vec<Action> = (0..g.rule_count() as u32)
        .map(|r| Action::ApplyRule(RuleId(r)))
        .collect();
    universe.push(Action::GenTokenEnd);
    universe.extend((0..nl.len()).map(Action::GenTokenCopy));
    for ty in g.types() {
        if ty.terminal_class().is_some() {
            universe.extend(
                scorer
                    .lexicon(ty.id)
                    .iter()
                    .cloned()
                    .map(Action::GenTokenVocab),
            );
        }
    }
    universe.sort();
    universe.dedup();

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut states = 0;
    for _ in 0..200 {
        let mut d = Derivation::new(&g);
        for _ in 0..12 {
            if d.is_complete() {
                break;
            }
            let legal = legal_actions(&g, &scorer, &d, &nl).unwrap();
            let mut oracle: Vec<Action> = universe
                .iter()
                .filter(|a| d.check(&g, a, &nl).is_ok())
                .cloned()
                .collect();
            oracle.sort();
            assert_eq!(legal, oracle);
            states += 1;
            let next = legal.choose(&mut rng).unwrap().clone();
            d.apply(&g, next, &nl).unwrap();
        }
    }
    assert!(states > 1000);
}

proptest! {
    #[test]
    fn raising_one_boost_never_lowers_its_probability(
        base in prop::collection::vec(0.01f64..1.0, 2..8),
        boosts in prop::collection::vec(0.0f64..3.0, 8),
        pick in 0usize..8,
        extra in 0.0f64..3.0,
    ) {
        let total: f64 = base.iter().sum();
        let base: Vec<f64> = base.iter().map(|p| (p / total).ln()).collect();
        let n = base.len();
        let pick = pick % n;
        let before = renormalize(&base, &boosts[..n]);
        let mut raised = boosts[..n].to_vec();
        raised[pick] += extra;
        let after = renormalize(&base, &raised);
        prop_assert!(after[pick] >= before[pick] - 1e-12);
        let sum: f64 = after.iter().map(|l| l.exp()).sum();
        prop_assert!((sum - 1.0).abs() <= 1e-9);
    }
}

#[test]
fn decoded_trees_are_well_formed() {
    let g = Arc::new(load_grammar(grammars::TOY).unwrap());
    let gen = AstGenerator::new(&g);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let train: Vec<TrainingExample> = (0..50)
        .map(|i| {
            let ast = gen.generate(&mut rng);
            let nl: Vec<String> = ["make", "x", "from", "alpha", "and", "7"]
                .iter()
                .map(|s| s.to_string())
                .collect();
            example_from_ast(&g, &format!("e{i}"), nl, &ast).unwrap()
        })
        .collect();
    let index = build_index(g.clone(), train.clone(), IndexOptions::default()).unwrap();
    let registry = ScorerRegistry::default();
    let inputs = ScorerInputs {
        grammar: &g,
        examples: &train,
        count: CountScorerConfig::default(),
    };
    for name in ["uniform", "count"] {
        let scorer = registry.build(name, &inputs).unwrap();
        for ex in train.iter().take(10) {
            let table = guide(&index, &ex.nl, 3, 4).unwrap().table;
            let ranked = match decode(
                &g,
                scorer.as_ref(),
                &ex.nl,
                &table,
                &DecodeConfig::default(),
            ) {
                Ok(r) => r,
                Err(e) => panic!("{name} {}: {e}", ex.id),
            };
            assert!(!ranked.is_empty() && ranked.len() <= 15);
            for pair in ranked.windows(2) {
                assert!(pair[0].score >= pair[1].score);
            }
            for d in &ranked {
                d.tree.check_invariants().unwrap();
                assert!(d.base_logprob <= 0.0);
                let ast = actions_to_ast(&g, &d.tree, &ex.nl).unwrap();
                ast_to_code(&g, &ast).unwrap();
            }
        }
    }
}

#[test]
fn registry_knows_both_scorers() {
    let registry = ScorerRegistry::default();
    assert_eq!(registry.names().collect::<Vec<_>>(), ["count", "uniform"]);
    let g = load_grammar(grammars::TOY).unwrap();
    let inputs = ScorerInputs {
        grammar: &g,
        examples: &[],
        count: CountScorerConfig::default(),
    };
    assert!(registry.build("lstm", &inputs).is_err());
}

#[test]
fn no_index_matches_lambda_zero() {
    let g = Arc::new(load_grammar(grammars::TOY).unwrap());
    let train = toy_examples(&g);
    let index = build_index(g.clone(), train.clone(), IndexOptions::default()).unwrap();
    let scorer = CountScorer::train(&g, &train, CountScorerConfig::default());
    let plain = Generator {
        grammar: &g,
        index: None,
        scorer: &scorer,
        m: 3,
        decode: DecodeConfig {
            beam: 3,
            max_steps: 60,
            ..DecodeConfig::default()
        },
    };
    let zero = Generator {
        index: Some(&index),
        decode: DecodeConfig {
            lambda: 0.0,
            ..plain.decode
        },
        ..plain
    };
    let mut decoded = 0;
    for ex in &train {
        match (plain.generate(&ex.nl), zero.generate(&ex.nl)) {
            (Ok(a), Ok(b)) => {
                assert_eq!(a.code_tokens, b.code_tokens);
                assert_eq!(a.best.score.to_bits(), b.best.score.to_bits());
                assert_eq!(b.best.matched_pieces, 0);
                decoded += 1;
            }
            (Err(a), Err(b)) => assert_eq!(a.to_string(), b.to_string()),
            (a, b) => panic!(
                "{}: outcomes differ: {:?} vs {:?}",
                ex.id,
                a.is_ok(),
                b.is_ok()
            ),
        }
    }
    assert!(decoded > 0);
}
