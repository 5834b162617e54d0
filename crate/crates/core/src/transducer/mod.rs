//! Conversions between ASTs, preorder action trees and surface code.

mod action;
mod ast;
mod code;

pub use action::{
    decode_actions, encode_actions, Action, ActionNode, ActionRecord, ActionTree, Derivation,
    EndMarker, FieldRef, Frontier, Slot, SlotKind,
};
pub use ast::{actions_to_ast, ast_to_actions, Ast};
pub use code::{ast_to_code, parse_code};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TransduceError {
    #[error("invalid AST at {path}: {message}")]
    Structure { path: String, message: String },
    #[error("derivation error at timestep {timestep}: {message}")]
    Derivation { timestep: usize, message: String },
    #[error("unparse error: {0}")]
    Unparse(String),
    #[error("parse error at token {position}: {message}")]
    Parse { position: usize, message: String },
    #[error("unknown rule `{0}`")]
    UnknownRule(String),
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::{load_grammar, Grammar, RuleId};
    use crate::grammars;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    fn rule(g: &Grammar, name: &str) -> RuleId {
        g.rule_by_name(name)
            .unwrap_or_else(|| panic!("no rule {name}"))
    }

    fn name(g: &Grammar, id: &str) -> Ast {
        let ident = g.type_by_name("identifier").unwrap();
        Ast::composite(
            g,
            rule(g, "Name"),
            vec![vec![Ast::terminal(ident, vec![id.into()])]],
        )
    }

    /// `<target> = []` in python-mini, wrapped in a module.
    fn assign_empty_list(g: &Grammar, target: &str) -> Ast {
        let list = Ast::composite(g, rule(g, "List"), vec![vec![]]);
        let assign = Ast::composite(
            g,
            rule(g, "Assign"),
            vec![vec![name(g, target)], vec![list]],
        );
        Ast::composite(g, rule(g, "Module"), vec![vec![assign]])
    }

    #[test]
    fn empty_list_assignment_chain() {
        let g = load_grammar(grammars::PYTHON_MINI).unwrap();
        let nl = toks("x is an empty list");
        let tree = ast_to_actions(&g, &assign_empty_list(&g, "x"), &nl).unwrap();
        let actions = tree.action_vec();
        let expected = vec![
            Action::ApplyRule(rule(&g, "Module")),
            Action::ApplyRule(rule(&g, "Assign")),
            Action::ApplyRule(rule(&g, "Name")),
            Action::GenTokenCopy(0),
            Action::GenTokenEnd,
            Action::ApplyRule(rule(&g, "Assign.targets*.end")),
            Action::ApplyRule(rule(&g, "List")),
            Action::ApplyRule(rule(&g, "List.elts*.end")),
            Action::ApplyRule(rule(&g, "Module.body*.end")),
        ];
        assert_eq!(actions, expected);
        // assign -> List -> epsilon is a parent/child chain.
        let list = tree
            .nodes()
            .iter()
            .position(|n| n.action == expected[6])
            .unwrap();
        let eps = tree.node(list).children[0];
        assert_eq!(tree.node(eps).action, expected[7]);
        assert_eq!(tree.node(list).parent, Some(1));
        tree.check_invariants().unwrap();
    }

    #[test]
    fn single_terminal_without_copy_candidate() {
        let g = load_grammar("num = Num(int n)\nterminal int : int\n").unwrap();
        let int = g.type_by_name("int").unwrap();
        let ast = Ast::composite(
            &g,
            RuleId(0),
            vec![vec![Ast::terminal(int, vec!["42".into()])]],
        );
        let tree = ast_to_actions(&g, &ast, &toks("the answer")).unwrap();
        assert_eq!(
            tree.action_vec(),
            vec![
                Action::ApplyRule(RuleId(0)),
                Action::GenTokenVocab("42".into()),
                Action::GenTokenEnd
            ]
        );
    }

    #[test]
    fn params_chain_rebuilds_assignment() {
        let g = load_grammar(grammars::PYTHON_MINI).unwrap();
        let nl = toks("params is an empty list");
        let actions = vec![
            Action::ApplyRule(rule(&g, "Module")),
            Action::ApplyRule(rule(&g, "Assign")),
            Action::ApplyRule(rule(&g, "Name")),
            Action::GenTokenCopy(0),
            Action::GenTokenEnd,
            Action::ApplyRule(rule(&g, "Assign.targets*.end")),
            Action::ApplyRule(rule(&g, "List")),
            Action::ApplyRule(rule(&g, "List.elts*.end")),
            Action::ApplyRule(rule(&g, "Module.body*.end")),
        ];
        let tree = ActionTree::from_actions(&g, &actions, &nl).unwrap();
        let ast = actions_to_ast(&g, &tree, &nl).unwrap();
        assert_eq!(ast, assign_empty_list(&g, "params"));
        assert_eq!(ast_to_code(&g, &ast).unwrap(), toks("params = [ ]"));
    }

    #[test]
    fn wrong_head_reports_timestep() {
        let g = load_grammar(grammars::TOY).unwrap();
        let nl = toks("x");
        let mut d = Derivation::new(&g);
        d.apply(&g, Action::ApplyRule(rule(&g, "Assign")), &nl)
            .unwrap();
        // `target` expects an expr, not a stmt rule.
        let err = d
            .apply(&g, Action::ApplyRule(rule(&g, "Return")), &nl)
            .unwrap_err();
        assert!(
            matches!(err, TransduceError::Derivation { timestep: 1, .. }),
            "{err}"
        );
    }

    #[test]
    fn copy_out_of_range_is_rejected() {
        let g = load_grammar(grammars::TOY).unwrap();
        let nl = toks("x");
        let actions = [
            Action::ApplyRule(rule(&g, "Assign")),
            Action::ApplyRule(rule(&g, "Name")),
            Action::GenTokenCopy(3),
        ];
        let err = ActionTree::from_actions(&g, &actions, &nl).unwrap_err();
        assert!(matches!(
            err,
            TransduceError::Derivation { timestep: 2, .. }
        ));
    }

    #[test]
    fn missing_sequence_terminator() {
        let g = load_grammar(grammars::TOY).unwrap();
        let actions = [Action::ApplyRule(rule(&g, "Print"))];
        let err = ActionTree::from_actions(&g, &actions, &[]).unwrap_err();
        assert!(matches!(
            err,
            TransduceError::Derivation { timestep: 1, .. }
        ));
    }

    #[test]
    fn invalid_ast_names_node() {
        let g = load_grammar(grammars::TOY).unwrap();
        let ident = g.type_by_name("identifier").unwrap();
        // Name with a missing value list.
        let bad = Ast::composite(
            &g,
            rule(&g, "Assign"),
            vec![vec![Ast::terminal(ident, vec!["x".into()])], vec![]],
        );
        let err = ast_to_actions(&g, &bad, &[]).unwrap_err();
        match err {
            TransduceError::Structure { path, .. } => assert!(path.starts_with('$'), "{path}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unparse_examples() {
        let g = load_grammar(grammars::TOY).unwrap();
        let int = g.type_by_name("int").unwrap();
        let list = Ast::composite(&g, rule(&g, "List"), vec![vec![]]);
        let assign = Ast::composite(
            &g,
            rule(&g, "Assign"),
            vec![vec![name(&g, "x")], vec![list]],
        );
        assert_eq!(ast_to_code(&g, &assign).unwrap(), toks("x = [ ]"));
        let zero = Ast::composite(
            &g,
            rule(&g, "Num"),
            vec![vec![Ast::terminal(int, vec!["0".into()])]],
        );
        assert_eq!(ast_to_code(&g, &zero).unwrap(), toks("0"));
        assert_eq!(parse_code(&g, &toks("x = [ ]")).unwrap(), assign);
    }

    #[test]
    fn missing_template_is_unparse_error() {
        let g = load_grammar("a = A(b x)\nterminal b : int\n").unwrap();
        let b = g.type_by_name("b").unwrap();
        let ast = Ast::composite(
            &g,
            RuleId(0),
            vec![vec![Ast::terminal(b, vec!["1".into()])]],
        );
        assert!(matches!(
            ast_to_code(&g, &ast),
            Err(TransduceError::Unparse(_))
        ));
    }

    #[test]
    fn ungrammatical_code_reports_position() {
        let g = load_grammar(grammars::TOY).unwrap();
        let err = parse_code(&g, &toks("x = =")).unwrap_err();
        assert_eq!(
            err,
            TransduceError::Parse {
                position: 2,
                message: "unexpected token \"=\"".into()
            }
        );
    }

    #[test]
    fn multi_token_string_is_one_code_token() {
        let g = load_grammar(grammars::TOY).unwrap();
        let string = g.type_by_name("string").unwrap();
        let s = Ast::composite(
            &g,
            rule(&g, "Str"),
            vec![vec![Ast::terminal(string, toks("Earth Elemental"))]],
        );
        let stmt = Ast::composite(
            &g,
            rule(&g, "Assign"),
            vec![vec![name(&g, "card")], vec![s]],
        );
        let code = ast_to_code(&g, &stmt).unwrap();
        assert_eq!(code, vec!["card", "=", "'", "Earth Elemental", "'"]);
        assert_eq!(parse_code(&g, &code).unwrap(), stmt);
        let nl = toks("card named Earth Elemental");
        let tree = ast_to_actions(&g, &stmt, &nl).unwrap();
        assert!(tree.action_vec().windows(3).any(|w| w
            == [
                Action::GenTokenCopy(2),
                Action::GenTokenCopy(3),
                Action::GenTokenEnd
            ]));
        assert_eq!(actions_to_ast(&g, &tree, &nl).unwrap(), stmt);
    }

    #[test]
    fn left_recursive_templates_parse() {
        let g = load_grammar(grammars::PYTHON_MINI).unwrap();
        let code = toks("x = foo . bar ( a , k = 1 ) [ 0 ]");
        let ast = parse_code(&g, &code).unwrap();
        assert_eq!(ast_to_code(&g, &ast).unwrap(), code);
        let text = ast.display(&g).to_string();
        assert!(text.contains("(Subscript [(Call [(Attribute"), "{text}");
    }

    #[test]
    fn python_mini_compound_statement() {
        let g = load_grammar(grammars::PYTHON_MINI).unwrap();
        let code = toks("def f ( a , b ) : INDENT return a + b DEDENT NEWLINE pass");
        let ast = parse_code(&g, &code).unwrap();
        assert_eq!(ast_to_code(&g, &ast).unwrap(), code);
    }
}
