//! Bundled language definitions and corpora.

use std::sync::OnceLock;

use crate::dataset::{parse_corpus, CorpusEntry};
use crate::language::{parse_language, LanguageDef};

pub const STLC_SOURCE: &str = include_str!("../../../languages/stlc.lang");
pub const STLC_EXT_SOURCE: &str = include_str!("../../../languages/stlc-ext.lang");
pub const EXAMPLE_RULE1_SOURCE: &str = include_str!("../../../languages/example-rule1.lang");

const STLC_CORPUS: &str = include_str!("../../../corpus/stlc.jsonl");
const STLC_EXT_CORPUS: &str = include_str!("../../../corpus/stlc-ext.jsonl");

/// Names accepted by [`builtin`].
pub const BUILTIN_NAMES: [&str; 3] = ["stlc", "stlc-ext", "example-rule1"];

fn load(cell: &'static OnceLock<LanguageDef>, src: &str) -> LanguageDef {
    cell.get_or_init(|| parse_language(src).unwrap_or_else(|e| panic!("bundled language is invalid:\n{e}")))
        .clone()
}

/// Simply typed lambda calculus with booleans.
pub fn stlc() -> LanguageDef {
    static CELL: OnceLock<LanguageDef> = OnceLock::new();
    load(&CELL, STLC_SOURCE)
}

/// [`stlc`] plus conditionals, pairs with projections, and let.
pub fn stlc_ext() -> LanguageDef {
    static CELL: OnceLock<LanguageDef> = OnceLock::new();
    load(&CELL, STLC_EXT_SOURCE)
}

/// A small system whose main rule has an acquired conclusion variable and
/// a constraint over it.
pub fn example_rule1() -> LanguageDef {
    static CELL: OnceLock<LanguageDef> = OnceLock::new();
    load(&CELL, EXAMPLE_RULE1_SOURCE)
}

pub fn builtin(name: &str) -> Option<LanguageDef> {
    match name {
        "stlc" => Some(stlc()),
        "stlc-ext" => Some(stlc_ext()),
        "example-rule1" => Some(example_rule1()),
        _ => None,
    }
}

pub fn builtin_source(name: &str) -> Option<&'static str> {
    match name {
        "stlc" => Some(STLC_SOURCE),
        "stlc-ext" => Some(STLC_EXT_SOURCE),
        "example-rule1" => Some(EXAMPLE_RULE1_SOURCE),
        _ => None,
    }
}

/// The bundled task corpus of a language (empty for languages without one).
pub fn corpus(name: &str) -> Vec<CorpusEntry> {
    let text = match name {
        "stlc" => STLC_CORPUS,
        "stlc-ext" => STLC_EXT_CORPUS,
        _ => return Vec::new(),
    };
    parse_corpus(text).expect("bundled corpus is well-formed")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::language::validate;
    use crate::typecheck::{check_program, verify_tree};

    const WORKED_PROMPT: &str = "Implement an identity function that takes a boolean input and returns the same value; then apply it to the value true.";

    #[test]
    fn bundled_languages_validate() {
        for name in BUILTIN_NAMES {
            let def = builtin(name).unwrap();
            assert_eq!(validate(&def), Ok(()), "{name}");
        }
        assert_eq!(stlc().rules().len(), 6);
        assert_eq!(stlc_ext().rules().len(), 11);
    }

    #[test]
    fn corpora_type_check() {
        for name in ["stlc", "stlc-ext"] {
            let def = builtin(name).unwrap();
            let entries = corpus(name);
            assert!(entries.len() >= 20, "{name}");
            assert!(entries.iter().any(|e| e.prompt == WORKED_PROMPT && e.program == "(app (abs x bool (var x)) true)"));
            for e in &entries {
                let p = def.parse_term(&e.program, "Prog").unwrap();
                assert_eq!(p.to_string(), e.program);
                let tree = check_program(&def, &p).unwrap_or_else(|err| panic!("{}: {err}", e.id));
                assert_eq!(verify_tree(&def, &tree), Ok(()));
            }
        }
    }

    #[test]
    fn ext_examples() {
        let def = stlc_ext();
        let p = def.parse_term("(fst (pair true false))", "Prog").unwrap();
        let tree = check_program(&def, &p).unwrap();
        assert_eq!(tree.children[0].judgment.args[2].to_string(), "bool");
        let p = def.parse_term("(if true true (var x))", "Prog").unwrap();
        assert!(check_program(&def, &p).is_err());
    }
}
