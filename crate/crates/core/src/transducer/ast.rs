use std::fmt;

use crate::grammar::{Cardinality, Grammar, RuleId, RuleKind, TerminalClass, TypeId};

use super::action::{Action, ActionTree, Derivation};
use super::TransduceError;

/// Abstract syntax tree node.
///
/// Composite nodes carry a rule and one child list per rule field;
/// terminal nodes carry a non-empty token list and no children.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Ast {
    pub node_type: TypeId,
    pub rule: Option<RuleId>,
    pub children: Vec<Vec<Ast>>,
    pub value: Option<Vec<String>>,
}

impl Ast {
    pub fn composite(grammar: &Grammar, rule: RuleId, children: Vec<Vec<Ast>>) -> Ast {
        Ast {
            node_type: grammar.rule(rule).head,
            rule: Some(rule),
            children,
            value: None,
        }
    }

    pub fn terminal(node_type: TypeId, tokens: Vec<String>) -> Ast {
        Ast {
            node_type,
            rule: None,
            children: Vec::new(),
            value: Some(tokens),
        }
    }

    /// Total number of nodes, terminals included.
    pub fn node_count(&self) -> usize {
        1 + self
            .children
            .iter()
            .flatten()
            .map(Ast::node_count)
            .sum::<usize>()
    }

    pub fn display<'a>(&'a self, grammar: &'a Grammar) -> impl fmt::Display + 'a {
        DisplayAst { ast: self, grammar }
    }

    /// Checks the node against the grammar, reporting the path of the
    /// first offending node.
    pub fn validate(&self, grammar: &Grammar) -> Result<(), TransduceError> {
        let root = grammar.root();
        if self.node_type != root {
            return Err(structure(
                "$",
                format!("root has type `{}`", grammar.node_type(self.node_type).name),
            ));
        }
        self.validate_at(grammar, "$")
    }

    fn validate_at(&self, grammar: &Grammar, path: &str) -> Result<(), TransduceError> {
        if self.node_type.index() >= grammar.types().len() {
            return Err(structure(path, "unknown node type".into()));
        }
        let ty = grammar.node_type(self.node_type);
        match (ty.terminal_class(), self.rule, &self.value) {
            (Some(class), None, Some(tokens)) => {
                if !self.children.is_empty() {
                    return Err(structure(path, "terminal node has children".into()));
                }
                if tokens.is_empty() {
                    return Err(structure(path, "terminal value is empty".into()));
                }
                for t in tokens {
                    if t.is_empty() || t.chars().any(char::is_whitespace) {
                        return Err(structure(path, format!("invalid token {t:?}")));
                    }
                    if class == TerminalClass::IntToken && t.parse::<i64>().is_err() {
                        return Err(structure(path, format!("{t:?} is not an integer")));
                    }
                }
                Ok(())
            }
            (None, Some(rid), None) => {
                if rid.index() >= grammar.rule_count() {
                    return Err(structure(path, format!("rule id {} out of range", rid.0)));
                }
                let rule = grammar.rule(rid);
                if rule.kind != RuleKind::Declared {
                    return Err(structure(
                        path,
                        format!("synthetic rule `{}` in an AST", rule.name),
                    ));
                }
                if rule.head != self.node_type {
                    return Err(structure(
                        path,
                        format!("rule `{}` does not expand `{}`", rule.name, ty.name),
                    ));
                }
                if self.children.len() != rule.fields.len() {
                    return Err(structure(
                        path,
                        format!(
                            "`{}` expects {} fields, found {}",
                            rule.name,
                            rule.fields.len(),
                            self.children.len()
                        ),
                    ));
                }
                for (field, kids) in rule.fields.iter().zip(&self.children) {
                    let ok = match field.cardinality {
                        Cardinality::Single => kids.len() == 1,
                        Cardinality::Optional => kids.len() <= 1,
                        Cardinality::Sequence => true,
                    };
                    if !ok {
                        return Err(structure(
                            path,
                            format!(
                                "field `{}` of `{}` has {} values",
                                field.name,
                                rule.name,
                                kids.len()
                            ),
                        ));
                    }
                    for (i, kid) in kids.iter().enumerate() {
                        let kid_path = format!("{path}.{}.{}[{i}]", rule.name, field.name);
                        if kid.node_type != field.ty {
                            return Err(structure(
                                &kid_path,
                                format!(
                                    "expected `{}`, found `{}`",
                                    grammar.node_type(field.ty).name,
                                    grammar.node_type(kid.node_type).name
                                ),
                            ));
                        }
                        kid.validate_at(grammar, &kid_path)?;
                    }
                }
                Ok(())
            }
            _ => Err(structure(path, format!("malformed `{}` node", ty.name))),
        }
    }
}

fn structure(path: &str, message: String) -> TransduceError {
    TransduceError::Structure {
        path: path.to_string(),
        message,
    }
}

struct DisplayAst<'a> {
    ast: &'a Ast,
    grammar: &'a Grammar,
}

impl fmt::Display for DisplayAst<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.ast.value, self.ast.rule) {
            (Some(tokens), _) => write!(f, "{:?}", tokens.join(" ")),
            (None, Some(rid)) => {
                write!(f, "({}", self.grammar.rule(rid).name)?;
                for kids in &self.ast.children {
                    f.write_str(" [")?;
                    for (i, kid) in kids.iter().enumerate() {
                        if i > 0 {
                            f.write_str(" ")?;
                        }
                        write!(f, "{}", kid.display(self.grammar))?;
                    }
                    f.write_str("]")?;
                }
                f.write_str(")")
            }
            (None, None) => f.write_str("(?)"),
        }
    }
}

/// Converts an AST into its preorder action tree. Terminal tokens that
/// occur in `nl` become copies of their first occurrence.
pub fn ast_to_actions(
    grammar: &Grammar,
    ast: &Ast,
    nl: &[String],
) -> Result<ActionTree, TransduceError> {
    ast.validate(grammar)?;
    let mut actions = Vec::with_capacity(ast.node_count() * 2);
    emit(grammar, ast, nl, &mut actions);
    let mut derivation = Derivation::new(grammar);
    for action in actions {
        derivation.apply(grammar, action, nl)?;
    }
    derivation.into_tree()
}

fn emit(grammar: &Grammar, ast: &Ast, nl: &[String], out: &mut Vec<Action>) {
    if let Some(tokens) = &ast.value {
        for t in tokens {
            match nl.iter().position(|w| w == t) {
                Some(i) => out.push(Action::GenTokenCopy(i)),
                None => out.push(Action::GenTokenVocab(t.clone())),
            }
        }
        out.push(Action::GenTokenEnd);
        return;
    }
    let rid = ast.rule.expect("validated composite");
    out.push(Action::ApplyRule(rid));
    let rule = grammar.rule(rid);
    for (field, kids) in rule.fields.iter().zip(&ast.children) {
        for kid in kids {
            emit(grammar, kid, nl, out);
        }
        match field.cardinality {
            Cardinality::Single => {}
            Cardinality::Optional if !kids.is_empty() => {}
            Cardinality::Optional | Cardinality::Sequence => {
                out.push(Action::ApplyRule(field.closer.expect("closer")))
            }
        }
    }
}

/// Rebuilds the AST whose derivation is `tree`. Copy actions resolve
/// against `nl`.
pub fn actions_to_ast(
    grammar: &Grammar,
    tree: &ActionTree,
    nl: &[String],
) -> Result<Ast, TransduceError> {
    let replayed = ActionTree::from_actions(grammar, &tree.action_vec(), nl)?;
    for (given, derived) in tree.nodes().iter().zip(replayed.nodes()) {
        if given.parent != derived.parent || given.children != derived.children {
            return Err(TransduceError::Derivation {
                timestep: given.timestep,
                message: "tree structure does not match the action sequence".into(),
            });
        }
    }
    if replayed.is_empty() {
        return Err(TransduceError::Derivation {
            timestep: 0,
            message: "empty action tree".into(),
        });
    }
    Ok(rebuild(grammar, &replayed, 0, nl))
}

fn rebuild(grammar: &Grammar, tree: &ActionTree, idx: usize, nl: &[String]) -> Ast {
    let node = tree.node(idx);
    let Action::ApplyRule(rid) = node.action else {
        unreachable!("rebuild starts at rule nodes")
    };
    let rule = grammar.rule(rid);
    let mut kids = node.children.iter().copied();
    let mut children = Vec::with_capacity(rule.fields.len());
    for field in &rule.fields {
        let mut values = Vec::new();
        loop {
            let child = kids.next().expect("replayed derivation is complete");
            let child_node = tree.node(child);
            if let Action::ApplyRule(r) = child_node.action {
                if Some(r) == field.closer {
                    break;
                }
            }
            values.push(element(grammar, tree, child, field.ty, nl));
            if field.cardinality == Cardinality::Single
                || (field.cardinality == Cardinality::Optional && !values.is_empty())
            {
                break;
            }
        }
        children.push(values);
    }
    Ast::composite(grammar, rid, children)
}

fn element(grammar: &Grammar, tree: &ActionTree, idx: usize, ty: TypeId, nl: &[String]) -> Ast {
    if grammar.node_type(ty).is_composite() {
        return rebuild(grammar, tree, idx, nl);
    }
    let mut tokens = Vec::new();
    let mut cur = idx;
    loop {
        let node = tree.node(cur);
        match &node.action {
            Action::GenTokenEnd => break,
            Action::GenTokenCopy(i) => tokens.push(nl[*i].clone()),
            Action::GenTokenVocab(t) => tokens.push(t.clone()),
            Action::ApplyRule(_) => unreachable!("rule inside terminal chain"),
        }
        cur = node.children[0];
    }
    Ast::terminal(ty, tokens)
}
