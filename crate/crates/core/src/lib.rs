//! Type-guided program synthesis over languages whose typing rules are
//! constrained Horn clauses.
//!
//! A [`LanguageDef`] is loaded from a declarative definition file. Each
//! typing rule is translated into a synthesis rule, and the [`engine`] builds
//! synthesis derivation trees by asking an oracle two kinds of question:
//! which rule to apply to the current goal, and which constructor, constant
//! or name to emit next while assigning a rule's free variables. Every
//! completed tree yields a program that type-checks, and every type
//! derivation tree can be turned back into the decision sequence that
//! rebuilds it.

pub mod dataset;
pub mod engine;
pub mod language;
pub mod languages;
pub mod policy;
pub mod terms;
pub mod translate;
pub mod typecheck;
pub mod unify;

pub use engine::{DecisionToken, SynthConfig, SynthState, SynthTree};
pub use language::{Constraint, Judgment, LanguageDef, TypingRule};
pub use terms::{Substitution, Sym, Term, Var};
pub use translate::SynthesisRule;
pub use typecheck::TypeTree;
