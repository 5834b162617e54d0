//! Surface code: template-driven unparsing and a memoizing parser.
//!
//! Every terminal value maps to exactly one code token (its tokens joined
//! by a space), so unparsing never merges or splits terminal values.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::rc::Rc;

use crate::grammar::{Cardinality, Grammar, ProductionRule, TemplateItem, TerminalClass, TypeId};

use super::ast::Ast;
use super::TransduceError;

pub fn ast_to_code(grammar: &Grammar, ast: &Ast) -> Result<Vec<String>, TransduceError> {
    let mut out = Vec::new();
    unparse(grammar, ast, &mut out)?;
    Ok(out)
}

fn unparse(grammar: &Grammar, ast: &Ast, out: &mut Vec<String>) -> Result<(), TransduceError> {
    if let Some(tokens) = &ast.value {
        out.push(tokens.join(" "));
        return Ok(());
    }
    let rid = ast
        .rule
        .ok_or_else(|| TransduceError::Unparse("composite node without a rule".into()))?;
    let rule = grammar.rule(rid);
    let template = rule
        .template
        .as_ref()
        .ok_or_else(|| TransduceError::Unparse(format!("no template for `{}`", rule.name)))?;
    for item in template {
        match item {
            TemplateItem::Literal(lit) => out.push(lit.clone()),
            TemplateItem::Field { index, separator } => {
                let kids = ast.children.get(*index).ok_or_else(|| {
                    TransduceError::Unparse(format!("`{}` is missing a field", rule.name))
                })?;
                for (i, kid) in kids.iter().enumerate() {
                    if i > 0 {
                        if let Some(sep) = separator {
                            out.push(sep.clone());
                        }
                    }
                    unparse(grammar, kid, out)?;
                }
            }
        }
    }
    Ok(())
}

/// Parses code tokens into an AST of the grammar's root type.
///
/// All parses are explored with memoization on (type, position); left
/// recursive templates are handled by iterating each memo entry to a
/// fixpoint. When several derivations cover the input, the first one in
/// rule order wins.
pub fn parse_code(grammar: &Grammar, tokens: &[String]) -> Result<Ast, TransduceError> {
    let mut parser = Parser {
        grammar,
        tokens,
        memo: HashMap::new(),
        furthest: 0,
    };
    let (results, _) = parser.parse_type(grammar.root(), 0);
    if let Some(ast) = results.get(&tokens.len()) {
        return Ok((**ast).clone());
    }
    let longest = results.keys().next_back().copied().unwrap_or(0);
    let position = parser.furthest.max(longest);
    let message = match tokens.get(position) {
        Some(tok) => format!("unexpected token {tok:?}"),
        None => "unexpected end of input".to_string(),
    };
    Err(TransduceError::Parse { position, message })
}

type Results = BTreeMap<usize, Rc<Ast>>;
type Deps = BTreeSet<(TypeId, usize)>;

struct MemoEntry {
    results: Results,
    done: bool,
}

struct Parser<'a> {
    grammar: &'a Grammar,
    tokens: &'a [String],
    memo: HashMap<(TypeId, usize), MemoEntry>,
    furthest: usize,
}

/// Partial match of a template: position reached and the field values so
/// far.
#[derive(Clone)]
struct State {
    pos: usize,
    children: Vec<Vec<Ast>>,
}

impl<'a> Parser<'a> {
    fn fail_at(&mut self, pos: usize) {
        self.furthest = self.furthest.max(pos);
    }

    fn terminal(&mut self, ty: TypeId, class: TerminalClass, pos: usize) -> Option<Ast> {
        let Some(tok) = self.tokens.get(pos) else {
            self.fail_at(pos);
            return None;
        };
        let ok = !self.grammar.reserved_tokens().contains(tok)
            && !tok.trim().is_empty()
            && (class != TerminalClass::IntToken || tok.parse::<i64>().is_ok());
        if !ok {
            self.fail_at(pos);
            return None;
        }
        Some(Ast::terminal(
            ty,
            tok.split_whitespace().map(str::to_string).collect(),
        ))
    }

    /// All (end position -> first AST) parses of `ty` starting at `pos`,
    /// plus the in-progress memo entries that were consulted.
    fn parse_type(&mut self, ty: TypeId, pos: usize) -> (Results, Deps) {
        if let Some(class) = self.grammar.node_type(ty).terminal_class() {
            let mut results = Results::new();
            if let Some(ast) = self.terminal(ty, class, pos) {
                results.insert(pos + 1, Rc::new(ast));
            }
            return (results, Deps::new());
        }
        let key = (ty, pos);
        if let Some(entry) = self.memo.get(&key) {
            let mut deps = Deps::new();
            if !entry.done {
                deps.insert(key);
            }
            return (entry.results.clone(), deps);
        }
        self.memo.insert(
            key,
            MemoEntry {
                results: Results::new(),
                done: false,
            },
        );
        let grammar = self.grammar;
        let mut outer_deps;
        loop {
            let mut found: Vec<(usize, Ast)> = Vec::new();
            let mut deps = Deps::new();
            for &rid in grammar.rule_ids_for(ty) {
                let rule = grammar.rule(rid);
                if rule.is_synthetic() {
                    continue;
                }
                for state in self.parse_rule(rule, pos, &mut deps) {
                    found.push((state.pos, Ast::composite(grammar, rid, state.children)));
                }
            }
            let entry = self.memo.get_mut(&key).expect("inserted above");
            let mut changed = false;
            for (end, ast) in found {
                if let std::collections::btree_map::Entry::Vacant(slot) = entry.results.entry(end) {
                    slot.insert(Rc::new(ast));
                    changed = true;
                }
            }
            let self_dep = deps.remove(&key);
            outer_deps = deps;
            if !(self_dep && changed) {
                break;
            }
        }
        let entry = self.memo.get_mut(&key).expect("inserted above");
        let results = entry.results.clone();
        if outer_deps.is_empty() {
            entry.done = true;
        } else {
            // Depends on an enclosing left-recursive entry that is still
            // growing; recompute on the next request.
            self.memo.remove(&key);
        }
        (results, outer_deps)
    }

    fn parse_element(&mut self, ty: TypeId, pos: usize, deps: &mut Deps) -> Results {
        let (results, d) = self.parse_type(ty, pos);
        deps.extend(d);
        results
    }

    fn parse_rule(&mut self, rule: &ProductionRule, pos: usize, deps: &mut Deps) -> Vec<State> {
        let Some(template) = &rule.template else {
            return Vec::new();
        };
        let mut states = vec![State {
            pos,
            children: vec![Vec::new(); rule.fields.len()],
        }];
        for item in template {
            let mut next: BTreeMap<usize, State> = BTreeMap::new();
            match item {
                TemplateItem::Literal(lit) => {
                    for st in states {
                        if self.tokens.get(st.pos) == Some(lit) {
                            next.entry(st.pos + 1).or_insert(State {
                                pos: st.pos + 1,
                                children: st.children,
                            });
                        } else {
                            self.fail_at(st.pos);
                        }
                    }
                }
                TemplateItem::Field { index, separator } => {
                    let field = &rule.fields[*index];
                    for st in states {
                        for (end, values) in self.parse_field(
                            field.ty,
                            field.cardinality,
                            separator.as_deref(),
                            st.pos,
                            deps,
                        ) {
                            next.entry(end).or_insert_with(|| {
                                let mut children = st.children.clone();
                                children[*index] = values;
                                State { pos: end, children }
                            });
                        }
                    }
                }
            }
            states = next.into_values().collect();
            if states.is_empty() {
                break;
            }
        }
        states
    }

    fn parse_field(
        &mut self,
        ty: TypeId,
        cardinality: Cardinality,
        separator: Option<&str>,
        pos: usize,
        deps: &mut Deps,
    ) -> Vec<(usize, Vec<Ast>)> {
        match cardinality {
            Cardinality::Single => self
                .parse_element(ty, pos, deps)
                .into_iter()
                .map(|(end, ast)| (end, vec![(*ast).clone()]))
                .collect(),
            Cardinality::Optional => {
                let mut out: BTreeMap<usize, Vec<Ast>> = BTreeMap::new();
                out.insert(pos, Vec::new());
                for (end, ast) in self.parse_element(ty, pos, deps) {
                    out.entry(end).or_insert_with(|| vec![(*ast).clone()]);
                }
                out.into_iter().collect()
            }
            Cardinality::Sequence => {
                let mut out: BTreeMap<usize, Vec<Ast>> = BTreeMap::new();
                out.insert(pos, Vec::new());
                let mut frontier: BTreeMap<usize, Vec<Ast>> = out.clone();
                while !frontier.is_empty() {
                    let mut grown: BTreeMap<usize, Vec<Ast>> = BTreeMap::new();
                    for (at, values) in frontier {
                        let start = if values.is_empty() {
                            at
                        } else if let Some(sep) = separator {
                            if self.tokens.get(at).map(String::as_str) == Some(sep) {
                                at + 1
                            } else {
                                self.fail_at(at);
                                continue;
                            }
                        } else {
                            at
                        };
                        for (end, ast) in self.parse_element(ty, start, deps) {
                            // Zero-width elements would repeat forever.
                            if end <= at || out.contains_key(&end) || grown.contains_key(&end) {
                                continue;
                            }
                            let mut extended = values.clone();
                            extended.push((*ast).clone());
                            grown.insert(end, extended);
                        }
                    }
                    for (end, values) in &grown {
                        out.insert(*end, values.clone());
                    }
                    frontier = grown;
                }
                out.into_iter().collect()
            }
        }
    }
}
