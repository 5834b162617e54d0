//! Synthetic fixtures shared by the benchmarks.

use std::sync::Arc;

use piecegen::corpus::example_from_ast;
use piecegen::synth::AstGenerator;
use piecegen::transducer::ast_to_code;
use piecegen::{grammars, load_grammar, Grammar, TrainingExample};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FILLER: [&str; 8] = ["set", "make", "then", "call", "with", "the", "value", "of"];

pub fn toy_grammar() -> Arc<Grammar> {
    Arc::new(load_grammar(grammars::TOY).expect("bundled grammar loads"))
}

/// `n` random toy programs whose descriptions are their code tokens mixed
/// with filler words, so copies resolve against the description.
pub fn corpus(grammar: &Grammar, n: usize, seed: u64) -> Vec<TrainingExample> {
    let gen = AstGenerator::new(grammar);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let ast = gen.generate(&mut rng);
            let mut nl = vec![FILLER.choose(&mut rng).unwrap().to_string()];
            for tok in ast_to_code(grammar, &ast).expect("generated trees unparse") {
                nl.push(tok);
                if nl.len() % 3 == 0 {
                    nl.push(FILLER.choose(&mut rng).unwrap().to_string());
                }
            }
            example_from_ast(grammar, &format!("b{i}"), nl, &ast)
                .expect("generated trees transduce")
        })
        .collect()
}
