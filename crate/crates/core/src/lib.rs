//! Retrieval-guided syntactic code generation.
//!
//! Training pairs of natural-language descriptions and grammar-derived
//! action trees are stored in a [`retrieval::RetrievalIndex`]. At query
//! time the most similar descriptions are retrieved, their action trees
//! are cut into vertical n-gram [`pieces`], copy actions are re-pointed at
//! the query through a word [`align`]ment, and the resulting scored pieces
//! boost matching actions during grammar-constrained beam search
//! ([`decoder`]).

pub mod align;
pub mod config;
pub mod corpus;
pub mod decoder;
pub mod evalkit;
pub mod grammar;
pub mod grammars;
pub mod pieces;
pub mod pipeline;
pub mod retrieval;
pub mod synth;
pub mod transducer;

pub use align::{align_sentences, Alignment, CopyRewrite};
pub use decoder::{decode, BaseScorer, DecodeConfig, DecodeError, DecodedTree};
pub use grammar::{load_grammar, Grammar, GrammarError, RuleId, TypeId};
pub use pieces::{PieceKey, PieceTable};
pub use retrieval::{build_index, retrieve, RetrievalIndex, TrainingExample};
pub use transducer::{Action, ActionTree, Ast, TransduceError};
