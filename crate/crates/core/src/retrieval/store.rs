//! JSON index container.

use std::io::{Read, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::grammar::Grammar;
use crate::transducer::{decode_actions, encode_actions, ActionRecord};

use super::{check_norm_constant, RetrievalError, RetrievalIndex, TrainingExample};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexHeader {
    pub format_version: u32,
    pub grammar_hash: String,
    pub norm_constant: f64,
    pub example_count: usize,
    pub lowercase: bool,
}

#[derive(Serialize, Deserialize)]
struct StoredExample {
    id: String,
    nl: Vec<String>,
    code_tokens: Vec<String>,
    actions: Vec<ActionRecord>,
}

#[derive(Serialize, Deserialize)]
struct StoredIndex {
    header: IndexHeader,
    examples: Vec<StoredExample>,
}

pub fn save_index<W: Write>(index: &RetrievalIndex, mut out: W) -> Result<(), RetrievalError> {
    let grammar = index.grammar();
    let stored = StoredIndex {
        header: IndexHeader {
            format_version: FORMAT_VERSION,
            grammar_hash: grammar.content_hash(),
            norm_constant: index.norm_constant(),
            example_count: index.len(),
            lowercase: index.lowercase(),
        },
        examples: index
            .examples()
            .iter()
            .map(|e| StoredExample {
                id: e.id.clone(),
                nl: e.nl.clone(),
                code_tokens: e.code_tokens.clone(),
                actions: encode_actions(grammar, &e.tree),
            })
            .collect(),
    };
    serde_json::to_writer_pretty(&mut out, &stored)
        .map_err(|e| RetrievalError::Corrupt(e.to_string()))?;
    out.write_all(b"\n")?;
    Ok(())
}

/// Reads only the header, checking the format version.
pub fn read_header(value: &serde_json::Value) -> Result<IndexHeader, RetrievalError> {
    let header = value
        .get("header")
        .ok_or_else(|| RetrievalError::Corrupt("missing header".into()))?;
    let version = header
        .get("format_version")
        .and_then(serde_json::Value::as_u64);
    match version {
        Some(v) if v == u64::from(FORMAT_VERSION) => {}
        Some(v) => {
            return Err(RetrievalError::VersionMismatch {
                found: u32::try_from(v).unwrap_or(u32::MAX),
                expected: FORMAT_VERSION,
            })
        }
        None => {
            return Err(RetrievalError::VersionMismatch {
                found: 0,
                expected: FORMAT_VERSION,
            })
        }
    }
    serde_json::from_value(header.clone())
        .map_err(|e| RetrievalError::Corrupt(format!("header: {e}")))
}

pub fn load_index<R: Read>(
    reader: R,
    grammar: Arc<Grammar>,
) -> Result<RetrievalIndex, RetrievalError> {
    let value: serde_json::Value =
        serde_json::from_reader(reader).map_err(|e| RetrievalError::Corrupt(e.to_string()))?;
    let header = read_header(&value)?;
    let expected = grammar.content_hash();
    if header.grammar_hash != expected {
        return Err(RetrievalError::GrammarMismatch {
            found: header.grammar_hash,
            expected,
        });
    }
    let stored: StoredIndex =
        serde_json::from_value(value).map_err(|e| RetrievalError::Corrupt(e.to_string()))?;
    if stored.examples.len() != header.example_count {
        return Err(RetrievalError::Corrupt(format!(
            "header announces {} examples, found {}",
            header.example_count,
            stored.examples.len()
        )));
    }
    let norm_constant = check_norm_constant(header.norm_constant)?;
    let examples = stored
        .examples
        .into_iter()
        .map(|s| {
            let tree = decode_actions(&grammar, &s.actions, &s.nl).map_err(|source| {
                RetrievalError::Example {
                    id: s.id.clone(),
                    source,
                }
            })?;
            Ok(TrainingExample {
                id: s.id,
                nl: s.nl,
                tree,
                code_tokens: s.code_tokens,
            })
        })
        .collect::<Result<Vec<_>, RetrievalError>>()?;
    Ok(RetrievalIndex::assemble(
        grammar,
        examples,
        norm_constant,
        header.lowercase,
    ))
}
