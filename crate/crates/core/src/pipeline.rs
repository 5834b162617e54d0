//! Query-time pipeline: retrieve neighbors, align their descriptions with
//! the query, collect and normalize pieces, then decode.

use thiserror::Error;

use crate::align::{align_sentences, Alignment, CopyRewrite};
use crate::decoder::{
    decode_with_observer, BaseScorer, DecodeConfig, DecodeError, DecodedTree, StepInfo,
};
use crate::grammar::Grammar;
use crate::pieces::{collect_scored_pieces, normalize, PieceError, PieceTable};
use crate::retrieval::{retrieve, RetrievalError, RetrievalIndex};
use crate::transducer::{actions_to_ast, ast_to_code, TransduceError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Pieces(#[from] PieceError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error(transparent)]
    Transduce(#[from] TransduceError),
}

/// What one retrieved neighbor contributed.
#[derive(Debug, Clone)]
pub struct NeighborTrace {
    pub id: String,
    pub similarity: f64,
    pub alignment: Alignment,
    /// Neighbor description positions left unaligned; pieces copying them
    /// were dropped.
    pub dead_positions: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct Guidance {
    pub table: PieceTable,
    pub neighbors: Vec<NeighborTrace>,
}

/// Normalized piece table for query `q` from its `m` nearest neighbors.
pub fn guide(
    index: &RetrievalIndex,
    q: &[String],
    m: usize,
    n_max: usize,
) -> Result<Guidance, PipelineError> {
    let neighbors = retrieve(index, q, m)?;
    let qn = index.normalize(q);
    let mut rewrites = Vec::with_capacity(neighbors.len());
    let mut traces = Vec::with_capacity(neighbors.len());
    for n in &neighbors {
        let key = index.normalize(&n.example.nl);
        let alignment = align_sentences(&qn, &key);
        let rewrite = CopyRewrite::from_alignment(&alignment, key.len());
        traces.push(NeighborTrace {
            id: n.example.id.clone(),
            similarity: n.similarity,
            alignment,
            dead_positions: rewrite.dead_positions.iter().copied().collect(),
        });
        rewrites.push(rewrite);
    }
    let table = collect_scored_pieces(&neighbors, n_max, q, &rewrites)?;
    let table = normalize(table, index.norm_constant())?;
    Ok(Guidance {
        table,
        neighbors: traces,
    })
}

/// Decoding output for one query.
#[derive(Debug, Clone)]
pub struct Generation {
    pub best: DecodedTree,
    pub code_tokens: Vec<String>,
    pub guidance: Option<Guidance>,
}

/// Decodes queries with an optional retrieval index.
pub struct Generator<'a> {
    pub grammar: &'a Grammar,
    pub index: Option<&'a RetrievalIndex>,
    pub scorer: &'a dyn BaseScorer,
    /// Neighbors retrieved per query.
    pub m: usize,
    pub decode: DecodeConfig,
}

impl Generator<'_> {
    pub fn generate(&self, q: &[String]) -> Result<Generation, PipelineError> {
        self.generate_observed(q, &mut |_| {})
    }

    pub fn generate_observed(
        &self,
        q: &[String],
        observer: &mut dyn FnMut(&StepInfo<'_>),
    ) -> Result<Generation, PipelineError> {
        let guidance = match self.index {
            Some(index) => Some(guide(index, q, self.m, self.decode.n_max)?),
            None => None,
        };
        let empty = PieceTable::empty(self.decode.n_max);
        let table = guidance.as_ref().map_or(&empty, |g| &g.table);
        let mut ranked =
            decode_with_observer(self.grammar, self.scorer, q, table, &self.decode, observer)?;
        let best = ranked.swap_remove(0);
        let ast = actions_to_ast(self.grammar, &best.tree, q)?;
        let code_tokens = ast_to_code(self.grammar, &ast)?;
        Ok(Generation {
            best,
            code_tokens,
            guidance,
        })
    }
}
