//! Grammars bundled with the crate.

/// Small statement/expression grammar with unambiguous templates.
pub const TOY: &str = include_str!("../grammars/toy.grammar");

/// Compact Python subset: modules, defs, classes, control flow, calls.
pub const PYTHON_MINI: &str = include_str!("../grammars/python-mini.grammar");

/// Looks up a bundled grammar by name (`toy`, `python-mini`).
pub fn bundled(name: &str) -> Option<&'static str> {
    match name {
        "toy" => Some(TOY),
        "python-mini" => Some(PYTHON_MINI),
        _ => None,
    }
}
