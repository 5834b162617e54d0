//! Actions, action trees and the preorder derivation state machine.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::grammar::{Cardinality, Grammar, RuleId, TerminalClass, TypeId};

use super::TransduceError;

/// One generation step.
///
/// The derived ordering (rules first, then end, copies, vocabulary tokens)
/// is the deterministic tie-break order used during decoding.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Action {
    ApplyRule(RuleId),
    GenTokenEnd,
    GenTokenCopy(usize),
    GenTokenVocab(String),
}

impl Action {
    pub fn is_token(&self) -> bool {
        !matches!(self, Action::ApplyRule(_))
    }

    pub fn display<'a>(
        &'a self,
        grammar: &'a Grammar,
        nl: Option<&'a [String]>,
    ) -> impl fmt::Display + 'a {
        DisplayAction {
            action: self,
            grammar,
            nl,
        }
    }
}

struct DisplayAction<'a> {
    action: &'a Action,
    grammar: &'a Grammar,
    nl: Option<&'a [String]>,
}

impl fmt::Display for DisplayAction<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.action {
            Action::ApplyRule(r) => write!(f, "{}", self.grammar.rule(*r).name),
            Action::GenTokenEnd => f.write_str("<end>"),
            Action::GenTokenCopy(i) => match self.nl.and_then(|nl| nl.get(*i)) {
                Some(tok) => write!(f, "copy[{i}]({tok})"),
                None => write!(f, "copy[{i}]"),
            },
            Action::GenTokenVocab(t) => write!(f, "gen({t})"),
        }
    }
}

/// The field a node fills: field `index` of rule `rule`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FieldRef {
    pub rule: RuleId,
    pub index: u16,
}

/// What a node was generated for: its node type plus the parent field it
/// fills (`None` for the root).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Frontier {
    pub ty: TypeId,
    pub field: Option<FieldRef>,
}

impl Frontier {
    pub fn describe(&self, grammar: &Grammar) -> String {
        let ty = &grammar.node_type(self.ty).name;
        match self.field {
            Some(fr) => {
                let rule = grammar.rule(fr.rule);
                format!("{}({})", ty, rule.fields[fr.index as usize].name)
            }
            None => ty.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionNode {
    pub action: Action,
    pub timestep: usize,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    pub frontier: Frontier,
}

/// Actions arranged as a tree whose preorder is the generation order.
///
/// Children of an `ApplyRule` node are the nodes expanding its fields, in
/// field order, including the synthetic closers of optional and sequence
/// fields. The tokens of one terminal value form a chain: the first token
/// hangs off the rule node, every further token (and the closing
/// `GenTokenEnd`) hangs off the previous token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionTree {
    nodes: Vec<ActionNode>,
}

impl ActionTree {
    /// Replays a preorder action sequence against the grammar.
    pub fn from_actions(
        grammar: &Grammar,
        actions: &[Action],
        nl: &[String],
    ) -> Result<Self, TransduceError> {
        let mut derivation = Derivation::new(grammar);
        for action in actions {
            derivation.apply(grammar, action.clone(), nl)?;
        }
        derivation.into_tree()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[ActionNode] {
        &self.nodes
    }

    pub fn node(&self, idx: usize) -> &ActionNode {
        &self.nodes[idx]
    }

    pub fn actions(&self) -> impl Iterator<Item = &Action> + '_ {
        self.nodes.iter().map(|n| &n.action)
    }

    pub fn action_vec(&self) -> Vec<Action> {
        self.actions().cloned().collect()
    }

    pub fn depth(&self, mut idx: usize) -> usize {
        let mut depth = 0;
        while let Some(p) = self.nodes[idx].parent {
            depth += 1;
            idx = p;
        }
        depth
    }

    /// Checks the structural invariants: timesteps equal preorder rank,
    /// parents precede children, the root is the only parentless node and
    /// child lists agree with parent links.
    pub fn check_invariants(&self) -> Result<(), String> {
        let mut order = Vec::with_capacity(self.nodes.len());
        if self.nodes.is_empty() {
            return Ok(());
        }
        let mut stack = vec![0usize];
        while let Some(n) = stack.pop() {
            order.push(n);
            for &c in self.nodes[n].children.iter().rev() {
                stack.push(c);
            }
        }
        if order.len() != self.nodes.len() {
            return Err("tree is not connected".into());
        }
        for (rank, &idx) in order.iter().enumerate() {
            let node = &self.nodes[idx];
            if node.timestep != rank || idx != rank {
                return Err(format!(
                    "node {idx} has timestep {} but preorder rank {rank}",
                    node.timestep
                ));
            }
            match node.parent {
                None if idx != 0 => return Err(format!("node {idx} has no parent")),
                Some(p) if p >= idx => return Err(format!("node {idx} has parent {p} after it")),
                Some(p) if !self.nodes[p].children.contains(&idx) => {
                    return Err(format!("node {idx} missing from children of {p}"))
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn render(&self, grammar: &Grammar, nl: &[String]) -> String {
        self.nodes
            .iter()
            .map(|n| format!("t{}:{}", n.timestep, n.action.display(grammar, Some(nl))))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotKind {
    Single,
    Optional {
        none: RuleId,
    },
    Sequence {
        end: RuleId,
    },
    /// Inside a terminal value: another token or `GenTokenEnd`.
    TokenContinue,
}

/// A pending position on the derivation agenda.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Slot {
    pub parent: Option<usize>,
    pub frontier: Frontier,
    pub kind: SlotKind,
}

/// Preorder derivation in progress: the partial tree plus the agenda of
/// unexpanded slots (top of stack is the frontier).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Derivation {
    nodes: Vec<ActionNode>,
    agenda: Vec<Slot>,
}

impl Derivation {
    pub fn new(grammar: &Grammar) -> Self {
        Derivation {
            nodes: Vec::new(),
            agenda: vec![Slot {
                parent: None,
                frontier: Frontier {
                    ty: grammar.root(),
                    field: None,
                },
                kind: SlotKind::Single,
            }],
        }
    }

    pub fn frontier(&self) -> Option<&Slot> {
        self.agenda.last()
    }

    pub fn is_complete(&self) -> bool {
        self.agenda.is_empty()
    }

    pub fn nodes(&self) -> &[ActionNode] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Node indices from the root down to `idx` inclusive.
    pub fn path_to(&self, idx: Option<usize>) -> Vec<usize> {
        let mut path = Vec::new();
        let mut cur = idx;
        while let Some(i) = cur {
            path.push(i);
            cur = self.nodes[i].parent;
        }
        path.reverse();
        path
    }

    /// Whether `action` may be applied at the current frontier.
    pub fn check(
        &self,
        grammar: &Grammar,
        action: &Action,
        nl: &[String],
    ) -> Result<Frontier, String> {
        let slot = self.agenda.last().ok_or("derivation is already complete")?;
        let slot_ty = grammar.node_type(slot.frontier.ty);
        match action {
            Action::ApplyRule(r) => {
                if r.index() >= grammar.rule_count() {
                    return Err(format!("rule id {} out of range", r.0));
                }
                let rule = grammar.rule(*r);
                match slot.kind {
                    SlotKind::Optional { none: c } | SlotKind::Sequence { end: c } if c == *r => {
                        Ok(Frontier {
                            ty: rule.head,
                            field: slot.frontier.field,
                        })
                    }
                    SlotKind::TokenContinue => Err(format!(
                        "rule `{}` applied inside a terminal value",
                        rule.name
                    )),
                    _ if rule.head == slot.frontier.ty => Ok(slot.frontier),
                    _ => Err(format!(
                        "rule `{}` has head `{}` but the frontier is `{}`",
                        rule.name,
                        grammar.node_type(rule.head).name,
                        slot_ty.name
                    )),
                }
            }
            Action::GenTokenEnd => match slot.kind {
                SlotKind::TokenContinue => Ok(slot.frontier),
                _ => Err("GenTokenEnd outside a terminal value".into()),
            },
            Action::GenTokenCopy(_) | Action::GenTokenVocab(_) => {
                let Some(class) = slot_ty.terminal_class() else {
                    return Err(format!(
                        "token generated at composite frontier `{}`",
                        slot_ty.name
                    ));
                };
                let token = match action {
                    Action::GenTokenCopy(i) => nl.get(*i).ok_or_else(|| {
                        format!(
                            "copy position {i} out of range for input of length {}",
                            nl.len()
                        )
                    })?,
                    Action::GenTokenVocab(t) => t,
                    _ => unreachable!(),
                };
                if token.is_empty() || token.chars().any(char::is_whitespace) {
                    return Err(format!("invalid token {token:?}"));
                }
                if class == TerminalClass::IntToken && token.parse::<i64>().is_err() {
                    return Err(format!("token {token:?} is not an integer"));
                }
                Ok(slot.frontier)
            }
        }
    }

    /// Applies one action, returning the index of the new node.
    pub fn apply(
        &mut self,
        grammar: &Grammar,
        action: Action,
        nl: &[String],
    ) -> Result<usize, TransduceError> {
        let timestep = self.nodes.len();
        let frontier = self
            .check(grammar, &action, nl)
            .map_err(|message| TransduceError::Derivation { timestep, message })?;
        let slot = self.agenda.pop().expect("checked above");
        let idx = self.nodes.len();
        self.nodes.push(ActionNode {
            action: action.clone(),
            timestep,
            parent: slot.parent,
            children: Vec::new(),
            frontier,
        });
        if let Some(p) = slot.parent {
            self.nodes[p].children.push(idx);
        }
        match action {
            Action::ApplyRule(r) => {
                let closes = matches!(slot.kind,
                    SlotKind::Optional { none: c } | SlotKind::Sequence { end: c } if c == r);
                if closes {
                    return Ok(idx);
                }
                if let SlotKind::Sequence { .. } = slot.kind {
                    self.agenda.push(slot);
                }
                let rule = grammar.rule(r);
                for (i, field) in rule.fields.iter().enumerate().rev() {
                    let kind = match field.cardinality {
                        Cardinality::Single => SlotKind::Single,
                        Cardinality::Optional => SlotKind::Optional {
                            none: field.closer.expect("optional field has a closer"),
                        },
                        Cardinality::Sequence => SlotKind::Sequence {
                            end: field.closer.expect("sequence field has a closer"),
                        },
                    };
                    self.agenda.push(Slot {
                        parent: Some(idx),
                        frontier: Frontier {
                            ty: field.ty,
                            field: Some(FieldRef {
                                rule: r,
                                index: i as u16,
                            }),
                        },
                        kind,
                    });
                }
            }
            Action::GenTokenEnd => {}
            Action::GenTokenCopy(_) | Action::GenTokenVocab(_) => {
                if let SlotKind::Sequence { .. } = slot.kind {
                    self.agenda.push(slot);
                }
                self.agenda.push(Slot {
                    parent: Some(idx),
                    frontier: slot.frontier,
                    kind: SlotKind::TokenContinue,
                });
            }
        }
        Ok(idx)
    }

    pub fn into_tree(self) -> Result<ActionTree, TransduceError> {
        if !self.agenda.is_empty() {
            return Err(TransduceError::Derivation {
                timestep: self.nodes.len(),
                message: format!("derivation incomplete: {} open slot(s)", self.agenda.len()),
            });
        }
        Ok(ActionTree { nodes: self.nodes })
    }

    /// Snapshot of the partial tree, complete or not.
    pub fn partial_tree(&self) -> ActionTree {
        ActionTree {
            nodes: self.nodes.clone(),
        }
    }
}

/// Serialized form of an action inside corpora and index files. Rules are
/// referenced by constructor name so files survive grammar edits that only
/// append constructors.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ActionRecord {
    Rule { rule: String },
    Token { token: String },
    Copy { copy: usize },
    End(EndMarker),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EndMarker {
    #[serde(rename = "end")]
    End,
}

impl ActionRecord {
    pub fn from_action(grammar: &Grammar, action: &Action) -> Self {
        match action {
            Action::ApplyRule(r) => ActionRecord::Rule {
                rule: grammar.rule(*r).name.clone(),
            },
            Action::GenTokenEnd => ActionRecord::End(EndMarker::End),
            Action::GenTokenCopy(i) => ActionRecord::Copy { copy: *i },
            Action::GenTokenVocab(t) => ActionRecord::Token { token: t.clone() },
        }
    }

    pub fn to_action(&self, grammar: &Grammar) -> Result<Action, TransduceError> {
        Ok(match self {
            ActionRecord::Rule { rule } => Action::ApplyRule(
                grammar
                    .rule_by_name(rule)
                    .ok_or_else(|| TransduceError::UnknownRule(rule.clone()))?,
            ),
            ActionRecord::Token { token } => Action::GenTokenVocab(token.clone()),
            ActionRecord::Copy { copy } => Action::GenTokenCopy(*copy),
            ActionRecord::End(_) => Action::GenTokenEnd,
        })
    }
}

pub fn encode_actions(grammar: &Grammar, tree: &ActionTree) -> Vec<ActionRecord> {
    tree.actions()
        .map(|a| ActionRecord::from_action(grammar, a))
        .collect()
}

pub fn decode_actions(
    grammar: &Grammar,
    records: &[ActionRecord],
    nl: &[String],
) -> Result<ActionTree, TransduceError> {
    let actions = records
        .iter()
        .map(|r| r.to_action(grammar))
        .collect::<Result<Vec<_>, _>>()?;
    ActionTree::from_actions(grammar, &actions, nl)
}
