//! Abstract syntax grammars.
//!
//! A grammar is loaded from a line-oriented text format:
//!
//! ```text
//! # comment
//! stmt = Assign(expr target, expr value) | Return(expr? value)
//! expr = Name(identifier id) | List(expr* elts)
//! terminal identifier : string
//! Assign -> $target "=" $value
//! List -> "[" $elts:"," "]"
//! ```
//!
//! The first declared type is the root. `*` marks a sequence field and `?`
//! an optional one. Lines of the form `Ctor -> ...` are unparse templates.
//!
//! Every optional or sequence field gets a synthetic node type and a
//! synthetic zero-field rule (`Ctor.field?.none`, `Ctor.field*.end`) so
//! that closing an optional or a sequence is itself an `ApplyRule` action.
//! Synthetic rules are numbered after all declared constructors.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TypeId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RuleId(pub u32);

impl TypeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl RuleId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TerminalClass {
    StringToken,
    IntToken,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TypeKind {
    Composite,
    Terminal(TerminalClass),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeType {
    pub id: TypeId,
    pub name: String,
    pub kind: TypeKind,
    /// Introduced for an optional or sequence field rather than declared.
    pub synthetic: bool,
}

impl NodeType {
    pub fn is_composite(&self) -> bool {
        matches!(self.kind, TypeKind::Composite)
    }

    pub fn terminal_class(&self) -> Option<TerminalClass> {
        match self.kind {
            TypeKind::Terminal(class) => Some(class),
            TypeKind::Composite => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Cardinality {
    Single,
    Optional,
    Sequence,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Field {
    pub name: String,
    pub ty: TypeId,
    pub cardinality: Cardinality,
    /// Synthetic rule closing this field: `none` for optionals, `end` for
    /// sequences.
    pub closer: Option<RuleId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RuleKind {
    Declared,
    OptionalNone { owner: RuleId, field: usize },
    SequenceEnd { owner: RuleId, field: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TemplateItem {
    Literal(String),
    Field {
        index: usize,
        separator: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProductionRule {
    pub id: RuleId,
    pub name: String,
    pub head: TypeId,
    pub fields: Vec<Field>,
    pub kind: RuleKind,
    pub template: Option<Vec<TemplateItem>>,
}

impl ProductionRule {
    pub fn is_synthetic(&self) -> bool {
        !matches!(self.kind, RuleKind::Declared)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GrammarError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("line {line}: undefined type `{name}`")]
    UndefinedType { name: String, line: usize },
    #[error("line {line}: duplicate type `{name}`")]
    DuplicateType { name: String, line: usize },
    #[error("line {line}: duplicate constructor `{name}`")]
    DuplicateConstructor { name: String, line: usize },
    #[error("line {line}: {message}")]
    Invalid { line: usize, message: String },
    #[error("grammar declares no types")]
    Empty,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grammar {
    types: Vec<NodeType>,
    rules: Vec<ProductionRule>,
    root: TypeId,
    declared_rule_count: usize,
    by_head: Vec<Vec<RuleId>>,
    type_index: HashMap<String, TypeId>,
    rule_index: HashMap<String, RuleId>,
    reserved: BTreeSet<String>,
    unreachable: Vec<String>,
}

/// Parses and validates grammar text.
pub fn load_grammar(source: &str) -> Result<Grammar, GrammarError> {
    let decls = parse_source(source)?;
    build(decls)
}

impl Grammar {
    pub fn root(&self) -> TypeId {
        self.root
    }

    pub fn types(&self) -> &[NodeType] {
        &self.types
    }

    pub fn node_type(&self, id: TypeId) -> &NodeType {
        &self.types[id.index()]
    }

    /// All rules, declared constructors first, synthetic rules after.
    pub fn rules(&self) -> &[ProductionRule] {
        &self.rules
    }

    pub fn rule(&self, id: RuleId) -> &ProductionRule {
        &self.rules[id.index()]
    }

    pub fn rule_count(&self) -> usize {
        self.rules.len()
    }

    /// Number of constructors written in the grammar file.
    pub fn declared_rule_count(&self) -> usize {
        self.declared_rule_count
    }

    pub fn type_by_name(&self, name: &str) -> Option<TypeId> {
        self.type_index.get(name).copied()
    }

    pub fn rule_by_name(&self, name: &str) -> Option<RuleId> {
        self.rule_index.get(name).copied()
    }

    /// Rules whose head is `ty`, in rule id order.
    pub fn rules_for(&self, ty: TypeId) -> Result<Vec<&ProductionRule>, GrammarError> {
        let node = self
            .types
            .get(ty.index())
            .ok_or_else(|| GrammarError::InvalidArgument(format!("unknown type id {}", ty.0)))?;
        if !node.is_composite() {
            return Err(GrammarError::InvalidArgument(format!(
                "`{}` is a terminal type and has no production rules",
                node.name
            )));
        }
        Ok(self.by_head[ty.index()]
            .iter()
            .map(|&r| self.rule(r))
            .collect())
    }

    /// Same as [`Grammar::rules_for`] without the check; terminal types
    /// yield an empty slice.
    pub fn rule_ids_for(&self, ty: TypeId) -> &[RuleId] {
        &self.by_head[ty.index()]
    }

    /// Literal tokens used by any template. Terminal values never match
    /// these when parsing code.
    pub fn reserved_tokens(&self) -> &BTreeSet<String> {
        &self.reserved
    }

    /// Declared types that cannot be reached from the root.
    pub fn unreachable_types(&self) -> &[String] {
        &self.unreachable
    }

    /// Writes the grammar back to text; loading the result yields an equal
    /// grammar.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        for ty in self.types.iter().filter(|t| !t.synthetic) {
            match ty.kind {
                TypeKind::Terminal(class) => {
                    let class = match class {
                        TerminalClass::StringToken => "string",
                        TerminalClass::IntToken => "int",
                    };
                    let _ = writeln!(out, "terminal {} : {}", ty.name, class);
                }
                TypeKind::Composite => {
                    let ctors: Vec<String> = self.by_head[ty.id.index()]
                        .iter()
                        .map(|&r| {
                            let rule = self.rule(r);
                            if rule.fields.is_empty() {
                                rule.name.clone()
                            } else {
                                let fields: Vec<String> = rule
                                    .fields
                                    .iter()
                                    .map(|f| {
                                        let suffix = match f.cardinality {
                                            Cardinality::Single => "",
                                            Cardinality::Optional => "?",
                                            Cardinality::Sequence => "*",
                                        };
                                        format!(
                                            "{}{} {}",
                                            self.node_type(f.ty).name,
                                            suffix,
                                            f.name
                                        )
                                    })
                                    .collect();
                                format!("{}({})", rule.name, fields.join(", "))
                            }
                        })
                        .collect();
                    let _ = writeln!(out, "{} = {}", ty.name, ctors.join(" | "));
                }
            }
        }
        for rule in self.rules.iter().filter(|r| !r.is_synthetic()) {
            let Some(template) = &rule.template else {
                continue;
            };
            let _ = write!(out, "{} ->", rule.name);
            for item in template {
                match item {
                    TemplateItem::Literal(lit) => {
                        let _ = write!(out, " {}", quote(lit));
                    }
                    TemplateItem::Field { index, separator } => {
                        let _ = write!(out, " ${}", rule.fields[*index].name);
                        if let Some(sep) = separator {
                            let _ = write!(out, ":{}", quote(sep));
                        }
                    }
                }
            }
            out.push('\n');
        }
        out
    }

    /// Hex SHA-256 of the serialized grammar.
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.serialize().as_bytes()))
    }
}

impl fmt::Display for Grammar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.serialize())
    }
}

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        if c == '"' || c == '\\' {
            out.push('\\');
        }
        out.push(c);
    }
    out.push('"');
    out
}

// ---------------------------------------------------------------------------
// Text parsing

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Str(String),
    FieldRef(String),
    Arrow,
    Punct(char),
}

struct Lexed {
    tok: Tok,
    column: usize,
}

fn lex_line(line: &str, line_no: usize) -> Result<Vec<Lexed>, GrammarError> {
    let chars: Vec<char> = line.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    let err = |column: usize, message: String| GrammarError::Syntax {
        line: line_no,
        column,
        message,
    };
    while i < chars.len() {
        let c = chars[i];
        let column = i + 1;
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Lexed {
                tok: Tok::Ident(chars[start..i].iter().collect()),
                column,
            });
        } else if c == '$' {
            i += 1;
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            if start == i {
                return Err(err(column, "expected field name after `$`".into()));
            }
            out.push(Lexed {
                tok: Tok::FieldRef(chars[start..i].iter().collect()),
                column,
            });
        } else if c == '"' {
            i += 1;
            let mut lit = String::new();
            loop {
                match chars.get(i) {
                    None => return Err(err(column, "unterminated string literal".into())),
                    Some('"') => {
                        i += 1;
                        break;
                    }
                    Some('\\') => {
                        match chars.get(i + 1) {
                            Some(&e) => lit.push(e),
                            None => return Err(err(i + 1, "dangling escape".into())),
                        }
                        i += 2;
                    }
                    Some(&ch) => {
                        lit.push(ch);
                        i += 1;
                    }
                }
            }
            if lit.is_empty() || lit.chars().any(char::is_whitespace) {
                return Err(err(
                    column,
                    "template literals must be non-empty single tokens".into(),
                ));
            }
            out.push(Lexed {
                tok: Tok::Str(lit),
                column,
            });
        } else if c == '-' && chars.get(i + 1) == Some(&'>') {
            out.push(Lexed {
                tok: Tok::Arrow,
                column,
            });
            i += 2;
        } else if "=|(),*?:".contains(c) {
            out.push(Lexed {
                tok: Tok::Punct(c),
                column,
            });
            i += 1;
        } else {
            return Err(err(column, format!("unexpected character `{c}`")));
        }
    }
    Ok(out)
}

struct RawField {
    ty: String,
    cardinality: Cardinality,
    name: String,
}

struct RawCtor {
    name: String,
    fields: Vec<RawField>,
    line: usize,
}

enum RawTemplateItem {
    Literal(String),
    Field {
        name: String,
        separator: Option<String>,
    },
}

enum Decl {
    Composite {
        name: String,
        ctors: Vec<RawCtor>,
        line: usize,
    },
    Terminal {
        name: String,
        class: TerminalClass,
        line: usize,
    },
    Template {
        ctor: String,
        items: Vec<RawTemplateItem>,
        line: usize,
    },
}

struct Cursor<'a> {
    toks: &'a [Lexed],
    pos: usize,
    line: usize,
    eol_column: usize,
}

impl<'a> Cursor<'a> {
    fn peek(&self) -> Option<&'a Tok> {
        self.toks.get(self.pos).map(|l| &l.tok)
    }

    fn column(&self) -> usize {
        self.toks
            .get(self.pos)
            .map_or(self.eol_column, |l| l.column)
    }

    fn error(&self, message: impl Into<String>) -> GrammarError {
        GrammarError::Syntax {
            line: self.line,
            column: self.column(),
            message: message.into(),
        }
    }

    fn next(&mut self) -> Option<&'a Tok> {
        let tok = self.toks.get(self.pos).map(|l| &l.tok);
        self.pos += 1;
        tok
    }

    fn ident(&mut self, what: &str) -> Result<String, GrammarError> {
        match self.peek() {
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                Ok(name.clone())
            }
            _ => Err(self.error(format!("expected {what}"))),
        }
    }

    fn punct(&mut self, c: char) -> Result<(), GrammarError> {
        match self.peek() {
            Some(Tok::Punct(p)) if *p == c => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(self.error(format!("expected `{c}`"))),
        }
    }

    fn eat_punct(&mut self, c: char) -> bool {
        if matches!(self.peek(), Some(Tok::Punct(p)) if *p == c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn done(&self) -> bool {
        self.pos >= self.toks.len()
    }
}

fn parse_source(source: &str) -> Result<Vec<Decl>, GrammarError> {
    let mut decls = Vec::new();
    for (idx, raw) in source.lines().enumerate() {
        let line_no = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let toks = lex_line(raw, line_no)?;
        let mut cur = Cursor {
            toks: &toks,
            pos: 0,
            line: line_no,
            eol_column: raw.chars().count() + 1,
        };
        let head = cur.ident("a type or constructor name")?;
        match cur.peek() {
            Some(Tok::Ident(_)) if head == "terminal" => {
                let name = cur.ident("terminal type name")?;
                cur.punct(':')?;
                let class = match cur.ident("`string` or `int`")?.as_str() {
                    "string" => TerminalClass::StringToken,
                    "int" => TerminalClass::IntToken,
                    other => {
                        cur.pos -= 1;
                        return Err(cur.error(format!("unknown terminal class `{other}`")));
                    }
                };
                decls.push(Decl::Terminal {
                    name,
                    class,
                    line: line_no,
                });
            }
            Some(Tok::Arrow) => {
                cur.pos += 1;
                let mut items = Vec::new();
                while let Some(tok) = cur.next() {
                    match tok {
                        Tok::Str(lit) => items.push(RawTemplateItem::Literal(lit.clone())),
                        Tok::FieldRef(name) => {
                            let separator = if cur.eat_punct(':') {
                                match cur.next() {
                                    Some(Tok::Str(sep)) => Some(sep.clone()),
                                    _ => {
                                        cur.pos -= 1;
                                        return Err(
                                            cur.error("expected separator literal after `:`")
                                        );
                                    }
                                }
                            } else {
                                None
                            };
                            items.push(RawTemplateItem::Field {
                                name: name.clone(),
                                separator,
                            });
                        }
                        _ => {
                            cur.pos -= 1;
                            return Err(cur.error("expected a quoted literal or `$field`"));
                        }
                    }
                }
                decls.push(Decl::Template {
                    ctor: head,
                    items,
                    line: line_no,
                });
            }
            Some(Tok::Punct('=')) => {
                cur.pos += 1;
                let mut ctors = Vec::new();
                loop {
                    let name = cur.ident("constructor name")?;
                    let mut fields = Vec::new();
                    if cur.eat_punct('(') && !cur.eat_punct(')') {
                        loop {
                            let ty = cur.ident("field type")?;
                            let cardinality = if cur.eat_punct('*') {
                                Cardinality::Sequence
                            } else if cur.eat_punct('?') {
                                Cardinality::Optional
                            } else {
                                Cardinality::Single
                            };
                            let fname = cur.ident("field name")?;
                            fields.push(RawField {
                                ty,
                                cardinality,
                                name: fname,
                            });
                            if cur.eat_punct(')') {
                                break;
                            }
                            cur.punct(',')?;
                        }
                    }
                    ctors.push(RawCtor {
                        name,
                        fields,
                        line: line_no,
                    });
                    if cur.done() {
                        break;
                    }
                    cur.punct('|')?;
                }
                decls.push(Decl::Composite {
                    name: head,
                    ctors,
                    line: line_no,
                });
            }
            _ => return Err(cur.error("expected `=`, `->` or a terminal declaration")),
        }
        if !cur.done() {
            return Err(cur.error("unexpected trailing input"));
        }
    }
    Ok(decls)
}

fn build(decls: Vec<Decl>) -> Result<Grammar, GrammarError> {
    let mut types: Vec<NodeType> = Vec::new();
    let mut type_index: HashMap<String, TypeId> = HashMap::new();

    for decl in &decls {
        let (name, kind, line) = match decl {
            Decl::Composite { name, line, .. } => (name, TypeKind::Composite, *line),
            Decl::Terminal { name, class, line } => (name, TypeKind::Terminal(*class), *line),
            Decl::Template { .. } => continue,
        };
        if type_index.contains_key(name) {
            return Err(GrammarError::DuplicateType {
                name: name.clone(),
                line,
            });
        }
        let id = TypeId(types.len() as u32);
        type_index.insert(name.clone(), id);
        types.push(NodeType {
            id,
            name: name.clone(),
            kind,
            synthetic: false,
        });
    }
    let Some(root) = types.first() else {
        return Err(GrammarError::Empty);
    };
    if !root.is_composite() {
        return Err(GrammarError::Invalid {
            line: decls
                .iter()
                .find_map(|d| match d {
                    Decl::Terminal { line, .. } => Some(*line),
                    _ => None,
                })
                .unwrap_or(1),
            message: format!("root type `{}` must be composite", root.name),
        });
    }
    let root = root.id;

    let mut rules: Vec<ProductionRule> = Vec::new();
    let mut rule_index: HashMap<String, RuleId> = HashMap::new();
    for decl in &decls {
        let Decl::Composite { name, ctors, .. } = decl else {
            continue;
        };
        let head = type_index[name];
        for ctor in ctors {
            if rule_index.contains_key(&ctor.name) {
                return Err(GrammarError::DuplicateConstructor {
                    name: ctor.name.clone(),
                    line: ctor.line,
                });
            }
            let mut fields = Vec::with_capacity(ctor.fields.len());
            for raw in &ctor.fields {
                let ty = *type_index
                    .get(&raw.ty)
                    .ok_or_else(|| GrammarError::UndefinedType {
                        name: raw.ty.clone(),
                        line: ctor.line,
                    })?;
                if fields.iter().any(|f: &Field| f.name == raw.name) {
                    return Err(GrammarError::Invalid {
                        line: ctor.line,
                        message: format!("duplicate field `{}` in `{}`", raw.name, ctor.name),
                    });
                }
                fields.push(Field {
                    name: raw.name.clone(),
                    ty,
                    cardinality: raw.cardinality,
                    closer: None,
                });
            }
            let id = RuleId(rules.len() as u32);
            rule_index.insert(ctor.name.clone(), id);
            rules.push(ProductionRule {
                id,
                name: ctor.name.clone(),
                head,
                fields,
                kind: RuleKind::Declared,
                template: None,
            });
        }
    }
    let declared_rule_count = rules.len();

    let mut reserved = BTreeSet::new();
    for decl in &decls {
        let Decl::Template { ctor, items, line } = decl else {
            continue;
        };
        let rid = *rule_index.get(ctor).ok_or_else(|| GrammarError::Invalid {
            line: *line,
            message: format!("template for unknown constructor `{ctor}`"),
        })?;
        let rule = &rules[rid.index()];
        if rule.template.is_some() {
            return Err(GrammarError::Invalid {
                line: *line,
                message: format!("duplicate template for `{ctor}`"),
            });
        }
        let mut seen = vec![false; rule.fields.len()];
        let mut template = Vec::with_capacity(items.len());
        for item in items {
            match item {
                RawTemplateItem::Literal(lit) => {
                    reserved.insert(lit.clone());
                    template.push(TemplateItem::Literal(lit.clone()));
                }
                RawTemplateItem::Field { name, separator } => {
                    let index = rule
                        .fields
                        .iter()
                        .position(|f| &f.name == name)
                        .ok_or_else(|| GrammarError::Invalid {
                            line: *line,
                            message: format!("`{ctor}` has no field `{name}`"),
                        })?;
                    if std::mem::replace(&mut seen[index], true) {
                        return Err(GrammarError::Invalid {
                            line: *line,
                            message: format!("field `{name}` used twice in template for `{ctor}`"),
                        });
                    }
                    if separator.is_some()
                        && rule.fields[index].cardinality != Cardinality::Sequence
                    {
                        return Err(GrammarError::Invalid {
                            line: *line,
                            message: format!("separator on non-sequence field `{name}`"),
                        });
                    }
                    if let Some(sep) = separator {
                        reserved.insert(sep.clone());
                    }
                    template.push(TemplateItem::Field {
                        index,
                        separator: separator.clone(),
                    });
                }
            }
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(GrammarError::Invalid {
                line: *line,
                message: format!(
                    "template for `{ctor}` omits field `{}`",
                    rule.fields[missing].name
                ),
            });
        }
        rules[rid.index()].template = Some(template);
    }

    // Synthetic closers for optional and sequence fields.
    for owner in 0..declared_rule_count {
        for field_idx in 0..rules[owner].fields.len() {
            let field = &rules[owner].fields[field_idx];
            let (suffix, rule_suffix) = match field.cardinality {
                Cardinality::Single => continue,
                Cardinality::Optional => ("?", "none"),
                Cardinality::Sequence => ("*", "end"),
            };
            let type_name = format!("{}.{}{}", rules[owner].name, field.name, suffix);
            let ty = TypeId(types.len() as u32);
            type_index.insert(type_name.clone(), ty);
            types.push(NodeType {
                id: ty,
                name: type_name.clone(),
                kind: TypeKind::Composite,
                synthetic: true,
            });
            let rid = RuleId(rules.len() as u32);
            let owner_id = RuleId(owner as u32);
            let kind = match field.cardinality {
                Cardinality::Optional => RuleKind::OptionalNone {
                    owner: owner_id,
                    field: field_idx,
                },
                _ => RuleKind::SequenceEnd {
                    owner: owner_id,
                    field: field_idx,
                },
            };
            let name = format!("{type_name}.{rule_suffix}");
            rule_index.insert(name.clone(), rid);
            rules.push(ProductionRule {
                id: rid,
                name,
                head: ty,
                fields: Vec::new(),
                kind,
                template: Some(Vec::new()),
            });
            rules[owner].fields[field_idx].closer = Some(rid);
        }
    }

    let mut by_head = vec![Vec::new(); types.len()];
    for rule in &rules {
        by_head[rule.head.index()].push(rule.id);
    }
    for ty in &types {
        if ty.is_composite() && by_head[ty.id.index()].is_empty() {
            // Unreachable through the parser (a decl always has a ctor) but
            // kept as a guard on the invariant.
            return Err(GrammarError::Invalid {
                line: 0,
                message: format!("composite type `{}` has no rules", ty.name),
            });
        }
    }

    let mut reachable = vec![false; types.len()];
    let mut queue = VecDeque::from([root]);
    reachable[root.index()] = true;
    while let Some(ty) = queue.pop_front() {
        for &rid in &by_head[ty.index()] {
            for field in &rules[rid.index()].fields {
                if !std::mem::replace(&mut reachable[field.ty.index()], true) {
                    queue.push_back(field.ty);
                }
                if let Some(closer) = field.closer {
                    let head = rules[closer.index()].head;
                    if !std::mem::replace(&mut reachable[head.index()], true) {
                        queue.push_back(head);
                    }
                }
            }
        }
    }
    let unreachable: Vec<String> = types
        .iter()
        .filter(|t| !reachable[t.id.index()])
        .map(|t| t.name.clone())
        .collect();
    for name in &unreachable {
        log::warn!("grammar type `{name}` is unreachable from the root");
    }

    Ok(Grammar {
        types,
        rules,
        root,
        declared_rule_count,
        by_head,
        type_index,
        rule_index,
        reserved,
        unreachable,
    })
}
