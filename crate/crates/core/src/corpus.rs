//! JSON Lines corpora.
//!
//! Each line is an object with `id`, `nl` (token array) and at most one of
//! `code` (a whitespace-separated string or a token array, parsed with the
//! grammar's templates) or `actions` (serialized action records). Query
//! files may omit both.

use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grammar::Grammar;
use crate::retrieval::TrainingExample;
use crate::transducer::{
    actions_to_ast, ast_to_actions, ast_to_code, decode_actions, parse_code, ActionRecord, Ast,
};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CodeField {
    Text(String),
    Tokens(Vec<String>),
}

impl CodeField {
    pub fn tokens(&self) -> Vec<String> {
        match self {
            CodeField::Text(s) => s.split_whitespace().map(str::to_string).collect(),
            CodeField::Tokens(t) => t.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusRecord {
    pub id: String,
    pub nl: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub code: Option<CodeField>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub actions: Option<Vec<ActionRecord>>,
}

/// A record with its line number in the source file.
#[derive(Debug, Clone)]
pub struct Numbered<T> {
    pub line: usize,
    pub value: T,
}

pub fn read_records<R: BufRead>(reader: R) -> Result<Vec<Numbered<CorpusRecord>>, CorpusError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: CorpusRecord = serde_json::from_str(&line).map_err(|e| CorpusError::Line {
            line: line_no,
            message: e.to_string(),
        })?;
        if record.code.is_some() && record.actions.is_some() {
            return Err(CorpusError::Line {
                line: line_no,
                message: "record has both `code` and `actions`".into(),
            });
        }
        out.push(Numbered {
            line: line_no,
            value: record,
        });
    }
    Ok(out)
}

/// Builds a training example from an AST; copies point at the first
/// matching description word.
pub fn example_from_ast(
    grammar: &Grammar,
    id: &str,
    nl: Vec<String>,
    ast: &Ast,
) -> Result<TrainingExample, String> {
    let tree = ast_to_actions(grammar, ast, &nl).map_err(|e| e.to_string())?;
    let code_tokens = ast_to_code(grammar, ast).map_err(|e| e.to_string())?;
    Ok(TrainingExample {
        id: id.to_string(),
        nl,
        tree,
        code_tokens,
    })
}

pub fn record_to_example(
    grammar: &Grammar,
    record: &CorpusRecord,
) -> Result<TrainingExample, String> {
    if record.nl.is_empty() {
        return Err("empty `nl`".into());
    }
    match (&record.code, &record.actions) {
        (Some(code), None) => {
            let ast = parse_code(grammar, &code.tokens()).map_err(|e| e.to_string())?;
            example_from_ast(grammar, &record.id, record.nl.clone(), &ast)
        }
        (None, Some(actions)) => {
            let tree = decode_actions(grammar, actions, &record.nl).map_err(|e| e.to_string())?;
            let ast = actions_to_ast(grammar, &tree, &record.nl).map_err(|e| e.to_string())?;
            let code_tokens = ast_to_code(grammar, &ast).map_err(|e| e.to_string())?;
            Ok(TrainingExample {
                id: record.id.clone(),
                nl: record.nl.clone(),
                tree,
                code_tokens,
            })
        }
        (None, None) => Err("record needs `code` or `actions`".into()),
        (Some(_), Some(_)) => Err("record has both `code` and `actions`".into()),
    }
}

/// Reads a training corpus; the first bad line aborts with its number.
pub fn load_examples<R: BufRead>(
    grammar: &Grammar,
    reader: R,
) -> Result<Vec<TrainingExample>, CorpusError> {
    read_records(reader)?
        .into_iter()
        .map(|r| {
            record_to_example(grammar, &r.value).map_err(|message| CorpusError::Line {
                line: r.line,
                message,
            })
        })
        .collect()
}

/// Gold code tokens of a record, if it carries code or actions.
pub fn gold_tokens(
    grammar: &Grammar,
    record: &CorpusRecord,
) -> Result<Option<Vec<String>>, String> {
    match (&record.code, &record.actions) {
        (None, None) => Ok(None),
        (Some(code), None) => Ok(Some(code.tokens())),
        _ => record_to_example(grammar, record).map(|e| Some(e.code_tokens)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub examples: usize,
    pub avg_nl_tokens: f64,
    pub avg_ast_nodes: f64,
    pub avg_actions: f64,
}

pub fn corpus_stats(
    grammar: &Grammar,
    examples: &[TrainingExample],
) -> Result<CorpusStats, String> {
    let n = examples.len();
    let mut nl = 0usize;
    let mut nodes = 0usize;
    let mut actions = 0usize;
    for ex in examples {
        nl += ex.nl.len();
        actions += ex.tree.len();
        nodes += actions_to_ast(grammar, &ex.tree, &ex.nl)
            .map_err(|e| format!("{}: {e}", ex.id))?
            .node_count();
    }
    let avg = |total: usize| if n == 0 { 0.0 } else { total as f64 / n as f64 };
    Ok(CorpusStats {
        examples: n,
        avg_nl_tokens: avg(nl),
        avg_ast_nodes: avg(nodes),
        avg_actions: avg(actions),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::load_grammar;
    use crate::grammars;

    #[test]
    fn loads_code_and_action_records() {
        let g = load_grammar(grammars::TOY).unwrap();
        let text = r#"{"id": "a", "nl": ["x", "is", "5"], "code": "x = 5"}

{"id": "b", "nl": ["return"], "actions": [{"rule": "Return"}, {"rule": "Return.value?.none"}]}
"#;
        let examples = load_examples(&g, text.as_bytes()).unwrap();
        assert_eq!(examples.len(), 2);
        assert_eq!(examples[0].code_tokens, ["x", "=", "5"]);
        assert_eq!(examples[1].code_tokens, ["return"]);
        let stats = corpus_stats(&g, &examples).unwrap();
        assert_eq!(stats.avg_nl_tokens, 2.0);
    }

    #[test]
    fn bad_line_is_reported_with_its_number() {
        let g = load_grammar(grammars::TOY).unwrap();
        let text = "{\"id\": \"a\", \"nl\": [\"x\"], \"code\": \"x = 5\"}\n{not json\n";
        match load_examples(&g, text.as_bytes()) {
            Err(CorpusError::Line { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected a line error, got {other:?}"),
        }
        let text = "{\"id\": \"a\", \"nl\": [\"x\"], \"code\": \"x = = 5\"}\n";
        assert!(matches!(
            load_examples(&g, text.as_bytes()),
            Err(CorpusError::Line { line: 1, .. })
        ));
    }
}
