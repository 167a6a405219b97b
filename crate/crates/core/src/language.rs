//! Language definitions: sorts, predicates, constraints and typing rules,
//! read from a small declarative file format.
//!
//! ```text
//! language stlc
//! names x y z
//! sort Prog = true | false | var(String) | app(Prog, Prog) | abs(String, Type, Prog)
//! sort Type = bool | arrow(Type, Type)
//! sort Context = empty | bind(Context, String, Type)
//! pred typed(Context, Prog, Type)
//! pred well_typed(Prog)
//! root well_typed
//! rule T-VAR: [lookup(G, x, t)] --- typed(G, var(x), t)
//! rule T-ROOT: typed(empty, p, t) --- well_typed(p)
//! ```
//!
//! Rule bodies are `;`-separated premises and bracketed constraint lists,
//! followed by `---` and the conclusion. Identifiers inside rules are
//! schematic variables unless they name a constant or constructor.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::terms::{
    free_vars_all, is_atom, rename_with, sym, Alternative, Renaming, Signature, SortKind, Sym, Term, Var,
};
use crate::translate::{to_synthesis_rule, SynthesisRule};

/// A problem in a definition file or a term, with an optional source position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub line: usize,
    pub col: usize,
    pub message: String,
}

impl Diagnostic {
    pub fn at(line: usize, col: usize, message: impl Into<String>) -> Diagnostic {
        Diagnostic { line, col, message: message.into() }
    }

    pub fn plain(message: impl Into<String>) -> Diagnostic {
        Diagnostic { line: 0, col: 0, message: message.into() }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line > 0 {
            write!(f, "{}:{}: {}", self.line, self.col, self.message)
        } else {
            f.write_str(&self.message)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct Diagnostics(pub Vec<Diagnostic>);

impl fmt::Display for Diagnostics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, d) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("\n")?;
            }
            write!(f, "{d}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredSig {
    pub name: Sym,
    pub params: Vec<Sym>,
}

/// A predicate applied to terms.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Judgment {
    pub pred: Sym,
    pub args: Vec<Term>,
}

impl Judgment {
    pub fn new(pred: &str, args: Vec<Term>) -> Judgment {
        Judgment { pred: sym(pred), args }
    }

    pub fn is_ground(&self) -> bool {
        self.args.iter().all(Term::is_ground)
    }

    pub fn map_terms(&self, f: impl FnMut(&Term) -> Term) -> Judgment {
        Judgment { pred: self.pred.clone(), args: self.args.iter().map(f).collect() }
    }
}

impl fmt::Display for Judgment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.pred)?;
        for (i, a) in self.args.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{a}")?;
        }
        f.write_str(")")
    }
}

/// A call to a registered builtin constraint.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Constraint {
    pub name: Sym,
    pub args: Vec<Term>,
}

impl Constraint {
    pub fn map_terms(&self, f: impl FnMut(&Term) -> Term) -> Constraint {
        Constraint { name: self.name.clone(), args: self.args.iter().map(f).collect() }
    }
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.name)?;
        for (i, a) in self.args.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{a}")?;
        }
        f.write_str(")")
    }
}

/// A constrained Horn clause. An empty constraint list means `True`;
/// several constraints are a conjunction.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TypingRule {
    pub id: Sym,
    pub premises: Vec<Judgment>,
    pub constraints: Vec<Constraint>,
    pub conclusion: Judgment,
}

impl TypingRule {
    /// Variables of the rule, conclusion first, then premises and constraints.
    pub fn vars(&self) -> Vec<Var> {
        free_vars_all(
            self.conclusion
                .args
                .iter()
                .chain(self.premises.iter().flat_map(|p| p.args.iter()))
                .chain(self.constraints.iter().flat_map(|c| c.args.iter())),
        )
    }

    /// Copy with every schematic variable replaced by a fresh one.
    pub fn rename(&self) -> (TypingRule, Renaming) {
        let mut renaming = Renaming::new();
        let rule = self.rename_with(&mut renaming);
        (rule, renaming)
    }

    pub(crate) fn rename_with(&self, renaming: &mut Renaming) -> TypingRule {
        let mut r = |t: &Term| rename_with(t, renaming);
        TypingRule {
            id: self.id.clone(),
            conclusion: self.conclusion.map_terms(&mut r),
            premises: self.premises.iter().map(|p| p.map_terms(&mut r)).collect(),
            constraints: self.constraints.iter().map(|c| c.map_terms(&mut r)).collect(),
        }
    }
}

impl fmt::Display for TypingRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "rule {}:", self.id)?;
        let mut items: Vec<String> = self.premises.iter().map(fmt_rule_judgment).collect();
        if !self.constraints.is_empty() {
            let cs: Vec<String> =
                self.constraints.iter().map(|c| fmt_call(&c.name, &c.args)).collect();
            items.push(format!("[{}]", cs.join(", ")));
        }
        if !items.is_empty() {
            write!(f, " {}", items.join("; "))?;
        }
        write!(f, " --- {}", fmt_rule_judgment(&self.conclusion))
    }
}

fn fmt_rule_judgment(j: &Judgment) -> String {
    fmt_call(&j.pred, &j.args)
}

fn fmt_call(name: &str, args: &[Term]) -> String {
    let args: Vec<String> = args.iter().map(fmt_rule_term).collect();
    format!("{name}({})", args.join(", "))
}

/// Function-call notation used inside definition files.
pub fn fmt_rule_term(t: &Term) -> String {
    match t {
        Term::Var(v) => v.name().to_string(),
        Term::Const { name, sort } if &**sort == crate::terms::TEXT_SORT => format!("\"{name}\""),
        Term::Const { name, .. } => name.to_string(),
        Term::App { ctor, args, .. } => fmt_call(ctor, args),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConstraintError {
    #[error("unknown constraint {0}")]
    Unknown(Sym),
    #[error("constraint {name} called with non-ground argument {arg}")]
    NonGround { name: Sym, arg: Term },
    #[error("constraint {name} expects {expected} arguments, got {got}")]
    Arity { name: Sym, expected: usize, got: usize },
}

pub type ConstraintFn = Arc<dyn Fn(&[Term]) -> bool + Send + Sync>;

/// Computes the arguments a partially known constraint must take, or `None`
/// when the known arguments do not determine them.
pub type SolverFn = Arc<dyn Fn(&[Term]) -> Option<Vec<Term>> + Send + Sync>;

/// Named constraint implementations. The builtins cover context lookup and
/// (in)equality; hosts may register more before building a language.
#[derive(Clone)]
pub struct ConstraintRegistry {
    entries: BTreeMap<Sym, (Option<usize>, ConstraintFn)>,
    solvers: BTreeMap<Sym, SolverFn>,
}

impl fmt::Debug for ConstraintRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.entries.keys()).finish()
    }
}

impl PartialEq for ConstraintRegistry {
    fn eq(&self, other: &Self) -> bool {
        self.entries.keys().eq(other.entries.keys())
    }
}

impl Default for ConstraintRegistry {
    fn default() -> Self {
        let mut r = ConstraintRegistry { entries: BTreeMap::new(), solvers: BTreeMap::new() };
        r.register("lookup", Some(3), |a: &[Term]| lookup(&a[0], &a[1]) == Some(&a[2]));
        r.register_solver("lookup", |a: &[Term]| {
            if !a[0].is_ground() || !a[1].is_ground() {
                return None;
            }
            let found = lookup(&a[0], &a[1])?;
            Some(vec![a[0].clone(), a[1].clone(), found.clone()])
        });
        r.register("not_bound", Some(2), |a: &[Term]| lookup(&a[0], &a[1]).is_none());
        r.register("eq", Some(2), |a: &[Term]| a[0] == a[1]);
        r.register_solver("eq", |a: &[Term]| match (a[0].is_ground(), a[1].is_ground()) {
            (true, _) => Some(vec![a[0].clone(), a[0].clone()]),
            (_, true) => Some(vec![a[1].clone(), a[1].clone()]),
            _ => None,
        });
        r.register("neq", Some(2), |a: &[Term]| a[0] != a[1]);
        r.register("true_k", Some(0), |_: &[Term]| true);
        r
    }
}

/// Innermost binding of `name` in a context built from a constant (the empty
/// context) and ternary `(rest, name, type)` constructors.
fn lookup<'a>(ctx: &'a Term, name: &Term) -> Option<&'a Term> {
    let mut cur = ctx;
    loop {
        match cur {
            Term::App { args, .. } if args.len() == 3 => {
                if &args[1] == name {
                    return Some(&args[2]);
                }
                cur = &args[0];
            }
            _ => return None,
        }
    }
}

impl ConstraintRegistry {
    pub fn register(
        &mut self,
        name: &str,
        arity: Option<usize>,
        f: impl Fn(&[Term]) -> bool + Send + Sync + 'static,
    ) {
        self.entries.insert(sym(name), (arity, Arc::new(f)));
    }

    /// Registers a mode in which `name` computes some of its arguments.
    /// Used by proof search when a constraint is reached before all of its
    /// variables are known.
    pub fn register_solver(&mut self, name: &str, f: impl Fn(&[Term]) -> Option<Vec<Term>> + Send + Sync + 'static) {
        self.solvers.insert(sym(name), Arc::new(f));
    }

    pub fn solve(&self, name: &Sym, args: &[Term]) -> Option<Vec<Term>> {
        let f = self.solvers.get(name)?;
        if self.arity(name).is_some_and(|n| n != args.len()) {
            return None;
        }
        f(args)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn arity(&self, name: &str) -> Option<usize> {
        self.entries.get(name).and_then(|e| e.0)
    }

    pub fn eval(&self, name: &Sym, args: &[Term]) -> Result<bool, ConstraintError> {
        let (arity, f) = self.entries.get(name).ok_or_else(|| ConstraintError::Unknown(name.clone()))?;
        if let Some(n) = arity {
            if *n != args.len() {
                return Err(ConstraintError::Arity { name: name.clone(), expected: *n, got: args.len() });
            }
        }
        if let Some(arg) = args.iter().find(|a| !a.is_ground()) {
            return Err(ConstraintError::NonGround { name: name.clone(), arg: arg.clone() });
        }
        Ok(f(args))
    }
}

/// A loaded language. Immutable once built; the translated synthesis rules
/// are computed at construction and indexed like the typing rules.
#[derive(Debug, Clone)]
pub struct LanguageDef {
    name: Sym,
    sig: Signature,
    preds: Vec<PredSig>,
    rules: Vec<TypingRule>,
    root: Sym,
    registry: ConstraintRegistry,
    synthesis: Vec<SynthesisRule>,
}

impl LanguageDef {
    /// Assembles a definition without validating it. See [`validate`].
    pub fn from_parts(
        name: &str,
        sig: Signature,
        preds: Vec<PredSig>,
        rules: Vec<TypingRule>,
        root: &str,
        registry: ConstraintRegistry,
    ) -> LanguageDef {
        let synthesis = rules.iter().map(to_synthesis_rule).collect();
        LanguageDef { name: sym(name), sig, preds, rules, root: sym(root), registry, synthesis }
    }

    /// Assembles and validates.
    pub fn build(
        name: &str,
        sig: Signature,
        preds: Vec<PredSig>,
        rules: Vec<TypingRule>,
        root: &str,
        registry: ConstraintRegistry,
    ) -> Result<LanguageDef, Diagnostics> {
        let def = LanguageDef::from_parts(name, sig, preds, rules, root, registry);
        validate(&def).map_err(Diagnostics)?;
        Ok(def)
    }

    pub fn name(&self) -> &Sym {
        &self.name
    }

    pub fn signature(&self) -> &Signature {
        &self.sig
    }

    pub fn preds(&self) -> &[PredSig] {
        &self.preds
    }

    pub fn pred(&self, name: &str) -> Option<&PredSig> {
        self.preds.iter().find(|p| &*p.name == name)
    }

    pub fn rules(&self) -> &[TypingRule] {
        &self.rules
    }

    pub fn rule_index(&self, id: &str) -> Option<usize> {
        self.rules.iter().position(|r| &*r.id == id)
    }

    pub fn synthesis_rules(&self) -> &[SynthesisRule] {
        &self.synthesis
    }

    pub fn root(&self) -> &Sym {
        &self.root
    }

    pub fn registry(&self) -> &ConstraintRegistry {
        &self.registry
    }

    pub fn eval_constraint(&self, c: &Constraint) -> Result<bool, ConstraintError> {
        self.registry.eval(&c.name, &c.args)
    }

    /// Same language with the builtin text pool replaced.
    pub fn with_names(&self, names: &[&str]) -> LanguageDef {
        let mut def = self.clone();
        def.sig.set_names(names.iter().map(|n| sym(n)).collect());
        def
    }

    /// Same language with extra atoms appended to the text pool.
    pub fn with_extra_names<'a>(&self, names: impl IntoIterator<Item = &'a Sym>) -> LanguageDef {
        let mut def = self.clone();
        def.sig.add_names(names);
        def
    }

    /// Parses a term of sort `expected` in canonical syntax.
    pub fn parse_term(&self, text: &str, expected: &str) -> Result<Term, Diagnostic> {
        parse_term(text, expected, self)
    }

    /// The root judgment over a fresh program variable, e.g. `well_typed(?p)`.
    pub fn root_goal(&self) -> (Judgment, Var) {
        let sort = self.pred(&self.root).map(|p| p.params[0].clone()).expect("validated root predicate");
        let p = Var::fresh_sym(sym("p"), sort);
        (Judgment { pred: self.root.clone(), args: vec![Term::var(&p)] }, p)
    }

    /// Root judgment for a concrete program.
    pub fn root_judgment(&self, program: &Term) -> Judgment {
        Judgment { pred: self.root.clone(), args: vec![program.clone()] }
    }

    /// Sort of the root predicate's single argument.
    pub fn program_sort(&self) -> &Sym {
        &self.pred(&self.root).expect("validated root predicate").params[0]
    }
}

impl fmt::Display for LanguageDef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "language {}", self.name)?;
        let names: Vec<&str> = self.sig.names().iter().map(|n| &**n).collect();
        writeln!(f, "names {}", names.join(" "))?;
        let ints: Vec<&str> = self.sig.ints().iter().map(|n| &**n).collect();
        writeln!(f, "ints {}", ints.join(" "))?;
        for decl in self.sig.sorts() {
            if decl.kind != SortKind::Inductive {
                continue;
            }
            let alts: Vec<String> = decl
                .alternatives
                .iter()
                .map(|a| match a {
                    Alternative::Constant(c) => c.to_string(),
                    Alternative::Ctor(c) => {
                        let sig = self.sig.ctor(c).expect("declared constructor");
                        let ps: Vec<&str> = sig.params.iter().map(|p| &**p).collect();
                        format!("{c}({})", ps.join(", "))
                    }
                })
                .collect();
            writeln!(f, "sort {} = {}", decl.name, alts.join(" | "))?;
        }
        for p in &self.preds {
            let ps: Vec<&str> = p.params.iter().map(|s| &**s).collect();
            writeln!(f, "pred {}({})", p.name, ps.join(", "))?;
        }
        writeln!(f, "root {}", self.root)?;
        for r in &self.rules {
            writeln!(f, "{r}")?;
        }
        Ok(())
    }
}

/// Checks the well-formedness conditions of a definition.
pub fn validate(def: &LanguageDef) -> Result<(), Vec<Diagnostic>> {
    let mut diags = Vec::new();
    let sig = &def.sig;
    for e in sig.check_params() {
        diags.push(Diagnostic::plain(e.to_string()));
    }

    let mut pred_names = BTreeSet::new();
    for p in &def.preds {
        if !pred_names.insert(p.name.clone()) {
            diags.push(Diagnostic::plain(format!("predicate {} is declared twice", p.name)));
        }
        for s in &p.params {
            if sig.sort(s).is_none() {
                diags.push(Diagnostic::plain(format!("predicate {} uses undeclared sort {s}", p.name)));
            }
        }
    }

    match def.pred(&def.root) {
        None => diags.push(Diagnostic::plain(format!("no root predicate: {} is not declared", def.root))),
        Some(p) if p.params.len() != 1 => diags.push(Diagnostic::plain(format!(
            "root predicate {} must take exactly one argument",
            def.root
        ))),
        Some(_) => {
            if !def.rules.iter().any(|r| r.conclusion.pred == def.root) {
                diags.push(Diagnostic::plain(format!("no rule concludes the root predicate {}", def.root)));
            }
        }
    }

    let mut ids = BTreeSet::new();
    for rule in &def.rules {
        let at = |m: String| Diagnostic::plain(format!("rule {}: {m}", rule.id));
        if !ids.insert(rule.id.clone()) {
            diags.push(at("duplicate rule id".into()));
        }
        for j in std::iter::once(&rule.conclusion).chain(&rule.premises) {
            match def.pred(&j.pred) {
                None => diags.push(at(format!("undeclared predicate {}", j.pred))),
                Some(p) if p.params.len() != j.args.len() => diags.push(at(format!(
                    "{} expects {} arguments, got {}",
                    j.pred,
                    p.params.len(),
                    j.args.len()
                ))),
                Some(p) => {
                    for (a, s) in j.args.iter().zip(&p.params) {
                        if let Err(e) = sig.check_sort(a, s) {
                            diags.push(at(e.to_string()));
                        }
                    }
                }
            }
        }
        let bound: BTreeSet<Var> = free_vars_all(
            rule.conclusion.args.iter().chain(rule.premises.iter().flat_map(|p| p.args.iter())),
        )
        .into_iter()
        .collect();
        for c in &rule.constraints {
            if !def.registry.contains(&c.name) {
                diags.push(at(format!("unregistered constraint {}", c.name)));
            } else if let Some(n) = def.registry.arity(&c.name) {
                if n != c.args.len() {
                    diags.push(at(format!("constraint {} expects {n} arguments, got {}", c.name, c.args.len())));
                }
            }
            for a in &c.args {
                if let Err(e) = sig.check_sort(a, a.sort()) {
                    diags.push(at(e.to_string()));
                }
            }
            for v in free_vars_all(&c.args) {
                if !bound.contains(&v) {
                    diags.push(at(format!(
                        "constraint variable {} does not occur in any premise or the conclusion",
                        v.name()
                    )));
                }
            }
        }
        let mut by_name: HashMap<&str, &Var> = HashMap::new();
        for v in rule.vars().iter() {
            if let Some(prev) = by_name.insert(v.name(), v) {
                if prev.sort() != v.sort() {
                    diags.push(at(format!("variable {} used at sorts {} and {}", v.name(), prev.sort(), v.sort())));
                }
            }
        }
    }

    if diags.is_empty() {
        Ok(())
    } else {
        Err(diags)
    }
}

// ---------------------------------------------------------------------------
// Lexing

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Int(String),
    Str(String),
    Var(String, u64),
    Punct(char),
    Sep,
}

#[derive(Debug, Clone)]
struct Lexeme {
    tok: Tok,
    line: usize,
    col: usize,
}

fn lex(text: &str) -> Result<Vec<Lexeme>, Diagnostic> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0, 1, 1);
    let ident_char = |c: char| c.is_ascii_alphanumeric() || c == '_' || c == '\'';
    while i < chars.len() {
        let c = chars[i];
        let (l0, c0) = (line, col);
        let mut advance = |n: usize, i: &mut usize| {
            *i += n;
            col += n;
        };
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            advance(1, &mut i);
            continue;
        }
        if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        if c == '-' && chars.get(i + 1) == Some(&'-') && chars.get(i + 2) == Some(&'-') {
            let mut n = 0;
            while chars.get(i + n) == Some(&'-') {
                n += 1;
            }
            advance(n, &mut i);
            out.push(Lexeme { tok: Tok::Sep, line: l0, col: c0 });
            continue;
        }
        if c.is_ascii_digit() || (c == '-' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            let start = i;
            advance(1, &mut i);
            while i < chars.len() && chars[i].is_ascii_digit() {
                advance(1, &mut i);
            }
            out.push(Lexeme { tok: Tok::Int(chars[start..i].iter().collect()), line: l0, col: c0 });
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len()
                && (ident_char(chars[i])
                    || (chars[i] == '-' && chars.get(i + 1).is_some_and(|d| d.is_ascii_alphanumeric())))
            {
                advance(1, &mut i);
            }
            out.push(Lexeme { tok: Tok::Ident(chars[start..i].iter().collect()), line: l0, col: c0 });
            continue;
        }
        if c == '?' {
            advance(1, &mut i);
            let start = i;
            while i < chars.len() && ident_char(chars[i]) {
                advance(1, &mut i);
            }
            let name: String = chars[start..i].iter().collect();
            if name.is_empty() || chars.get(i) != Some(&'.') {
                return Err(Diagnostic::at(l0, c0, "malformed variable, expected ?name.id"));
            }
            advance(1, &mut i);
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                advance(1, &mut i);
            }
            let id: String = chars[start..i].iter().collect();
            let id = id.parse().map_err(|_| Diagnostic::at(l0, c0, "malformed variable id"))?;
            out.push(Lexeme { tok: Tok::Var(name, id), line: l0, col: c0 });
            continue;
        }
        if c == '"' {
            advance(1, &mut i);
            let start = i;
            while i < chars.len() && chars[i] != '"' && chars[i] != '\n' {
                advance(1, &mut i);
            }
            if chars.get(i) != Some(&'"') {
                return Err(Diagnostic::at(l0, c0, "unterminated string literal"));
            }
            let s: String = chars[start..i].iter().collect();
            advance(1, &mut i);
            out.push(Lexeme { tok: Tok::Str(s), line: l0, col: c0 });
            continue;
        }
        if "()[],;|=:".contains(c) {
            advance(1, &mut i);
            out.push(Lexeme { tok: Tok::Punct(c), line: l0, col: c0 });
            continue;
        }
        return Err(Diagnostic::at(l0, c0, format!("unexpected character {c:?}")));
    }
    Ok(out)
}

struct Cursor {
    toks: Vec<Lexeme>,
    pos: usize,
    end: (usize, usize),
}

impl Cursor {
    fn new(text: &str) -> Result<Cursor, Diagnostic> {
        let toks = lex(text)?;
        let lines = text.lines().count().max(1);
        let last = text.lines().last().map(|l| l.chars().count() + 1).unwrap_or(1);
        Ok(Cursor { toks, pos: 0, end: (lines, last) })
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|l| &l.tok)
    }

    fn here(&self) -> (usize, usize) {
        self.toks.get(self.pos).map(|l| (l.line, l.col)).unwrap_or(self.end)
    }

    fn err(&self, msg: impl Into<String>) -> Diagnostic {
        let (l, c) = self.here();
        Diagnostic::at(l, c, msg)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|l| l.tok.clone());
        self.pos += 1;
        t
    }

    fn at_end(&self) -> bool {
        self.pos >= self.toks.len()
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(&Tok::Punct(c)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<(), Diagnostic> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.err(format!("expected '{c}'")))
        }
    }

    fn ident(&mut self, what: &str) -> Result<String, Diagnostic> {
        match self.peek() {
            Some(Tok::Ident(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => Err(self.err(format!("expected {what}"))),
        }
    }
}

// ---------------------------------------------------------------------------
// Definition files

const KEYWORDS: [&str; 7] = ["language", "names", "ints", "sort", "pred", "root", "rule"];

#[derive(Debug, Clone)]
enum Raw {
    Name(String, usize, usize),
    Int(String, usize, usize),
    Str(String, usize, usize),
    Call(String, Vec<Raw>, usize, usize),
}

impl Raw {
    fn pos(&self) -> (usize, usize) {
        match self {
            Raw::Name(_, l, c) | Raw::Int(_, l, c) | Raw::Str(_, l, c) | Raw::Call(_, _, l, c) => (*l, *c),
        }
    }
}

struct RawRule {
    id: String,
    line: usize,
    col: usize,
    premises: Vec<Raw>,
    constraints: Vec<Raw>,
    conclusion: Raw,
}

fn parse_raw(cur: &mut Cursor) -> Result<Raw, Diagnostic> {
    let (l, c) = cur.here();
    match cur.next() {
        Some(Tok::Ident(name)) => {
            if cur.eat('(') {
                let mut args = Vec::new();
                if !cur.eat(')') {
                    loop {
                        args.push(parse_raw(cur)?);
                        if cur.eat(')') {
                            break;
                        }
                        cur.expect(',')?;
                    }
                }
                Ok(Raw::Call(name, args, l, c))
            } else {
                Ok(Raw::Name(name, l, c))
            }
        }
        Some(Tok::Int(n)) => Ok(Raw::Int(n, l, c)),
        Some(Tok::Str(s)) => Ok(Raw::Str(s, l, c)),
        _ => Err(Diagnostic::at(l, c, "expected a term")),
    }
}

/// Parses and validates a language definition file.
pub fn parse_language(text: &str) -> Result<LanguageDef, Diagnostics> {
    parse_language_with(text, ConstraintRegistry::default())
}

/// As [`parse_language`], with a caller-supplied constraint registry.
pub fn parse_language_with(text: &str, registry: ConstraintRegistry) -> Result<LanguageDef, Diagnostics> {
    let one = |d: Diagnostic| Diagnostics(vec![d]);
    let mut cur = Cursor::new(text).map_err(one)?;
    let mut name = String::from("unnamed");
    let mut sig = Signature::default();
    let mut preds: Vec<PredSig> = Vec::new();
    let mut root: Option<String> = None;
    let mut raw_rules = Vec::new();
    let mut diags = Vec::new();

    while !cur.at_end() {
        let (l, c) = cur.here();
        let kw = cur.ident("a declaration keyword").map_err(one)?;
        match kw.as_str() {
            "language" => name = cur.ident("language name").map_err(one)?,
            "names" | "ints" => {
                let mut atoms = Vec::new();
                loop {
                    match cur.peek() {
                        Some(Tok::Ident(s)) if !KEYWORDS.contains(&s.as_str()) && kw == "names" => {
                            atoms.push(sym(s));
                            cur.pos += 1;
                        }
                        Some(Tok::Int(s)) if kw == "ints" => {
                            atoms.push(sym(s));
                            cur.pos += 1;
                        }
                        _ => break,
                    }
                }
                if kw == "names" {
                    sig.set_names(atoms);
                } else {
                    sig.set_ints(atoms);
                }
            }
            "sort" => {
                let sort = cur.ident("sort name").map_err(one)?;
                cur.expect('=').map_err(one)?;
                let mut alts = Vec::new();
                loop {
                    let alt = cur.ident("constant or constructor").map_err(one)?;
                    let mut params = Vec::new();
                    if cur.eat('(') {
                        loop {
                            params.push(cur.ident("parameter sort").map_err(one)?);
                            if cur.eat(')') {
                                break;
                            }
                            cur.expect(',').map_err(one)?;
                        }
                    }
                    alts.push((alt, params));
                    if !cur.eat('|') {
                        break;
                    }
                }
                if let Err(e) = sig.add_sort(&sort, alts) {
                    diags.push(Diagnostic::at(l, c, e.to_string()));
                }
            }
            "pred" => {
                let pname = cur.ident("predicate name").map_err(one)?;
                cur.expect('(').map_err(one)?;
                let mut params = Vec::new();
                if !cur.eat(')') {
                    loop {
                        params.push(sym(&cur.ident("parameter sort").map_err(one)?));
                        if cur.eat(')') {
                            break;
                        }
                        cur.expect(',').map_err(one)?;
                    }
                }
                preds.push(PredSig { name: sym(&pname), params });
            }
            "root" => root = Some(cur.ident("root predicate").map_err(one)?),
            "rule" => {
                let id = cur.ident("rule id").map_err(one)?;
                cur.expect(':').map_err(one)?;
                let mut premises = Vec::new();
                let mut constraints = Vec::new();
                if cur.peek() != Some(&Tok::Sep) {
                    loop {
                        if cur.eat('[') {
                            loop {
                                constraints.push(parse_raw(&mut cur).map_err(one)?);
                                if cur.eat(']') {
                                    break;
                                }
                                if !cur.eat(',') {
                                    cur.expect(';').map_err(one)?;
                                }
                            }
                        } else {
                            premises.push(parse_raw(&mut cur).map_err(one)?);
                        }
                        if !cur.eat(';') {
                            break;
                        }
                    }
                }
                if cur.next() != Some(Tok::Sep) {
                    cur.pos -= 1;
                    return Err(one(cur.err("expected '---' before the conclusion")));
                }
                let conclusion = parse_raw(&mut cur).map_err(one)?;
                raw_rules.push(RawRule { id, line: l, col: c, premises, constraints, conclusion });
            }
            other => return Err(one(Diagnostic::at(l, c, format!("unknown declaration {other:?}")))),
        }
    }

    for e in sig.check_params() {
        diags.push(Diagnostic::plain(e.to_string()));
    }
    let Some(root) = root else {
        diags.push(Diagnostic::plain("no root predicate declared"));
        return Err(Diagnostics(diags));
    };
    if !diags.is_empty() {
        return Err(Diagnostics(diags));
    }

    let mut rules = Vec::new();
    for raw in &raw_rules {
        match resolve_rule(raw, &sig, &preds) {
            Ok(r) => rules.push(r),
            Err(mut ds) => diags.append(&mut ds),
        }
    }
    if !diags.is_empty() {
        return Err(Diagnostics(diags));
    }
    LanguageDef::build(&name, sig, preds, rules, &root, registry)
}

struct RuleScope<'a> {
    sig: &'a Signature,
    vars: HashMap<String, Var>,
}

impl RuleScope<'_> {
    fn resolve(&mut self, raw: &Raw, expected: &str) -> Result<Term, Diagnostic> {
        let (l, c) = raw.pos();
        let kind = self.sig.kind(expected).ok_or_else(|| Diagnostic::at(l, c, format!("unknown sort {expected}")))?;
        match raw {
            Raw::Call(name, args, ..) => {
                let ctor = self
                    .sig
                    .ctor(name)
                    .ok_or_else(|| Diagnostic::at(l, c, format!("undeclared constructor {name}")))?
                    .clone();
                if &*ctor.result != expected {
                    return Err(Diagnostic::at(
                        l,
                        c,
                        format!("constructor {name} builds {}, expected {expected}", ctor.result),
                    ));
                }
                if ctor.params.len() != args.len() {
                    return Err(Diagnostic::at(
                        l,
                        c,
                        format!("constructor {name} takes {} arguments, got {}", ctor.params.len(), args.len()),
                    ));
                }
                let args = args.iter().zip(&ctor.params).map(|(a, p)| self.resolve(a, p)).collect::<Result<Vec<_>, _>>()?;
                Ok(Term::app(name, expected, args))
            }
            Raw::Int(n, ..) => {
                if kind != SortKind::Int {
                    return Err(Diagnostic::at(l, c, format!("integer literal where {expected} is expected")));
                }
                Ok(Term::constant(n, expected))
            }
            Raw::Str(s, ..) => {
                if kind != SortKind::Text || !is_atom(s) {
                    return Err(Diagnostic::at(l, c, format!("text literal \"{s}\" where {expected} is expected")));
                }
                Ok(Term::constant(s, expected))
            }
            Raw::Name(name, ..) => {
                if let Some(sort) = self.sig.constant_sort(name) {
                    if &**sort != expected {
                        return Err(Diagnostic::at(l, c, format!("constant {name} has sort {sort}, expected {expected}")));
                    }
                    return Ok(Term::constant(name, expected));
                }
                if self.sig.ctor(name).is_some() {
                    return Err(Diagnostic::at(l, c, format!("constructor {name} used without arguments")));
                }
                let v = self.vars.entry(name.clone()).or_insert_with(|| Var::fresh(name, expected));
                if &**v.sort() != expected {
                    return Err(Diagnostic::at(
                        l,
                        c,
                        format!("variable {name} has sort {}, used where {expected} is expected", v.sort()),
                    ));
                }
                Ok(Term::var(v))
            }
        }
    }

    // Constraint arguments have no declared sorts; infer them.
    fn resolve_free(&mut self, raw: &Raw) -> Result<Term, Diagnostic> {
        let (l, c) = raw.pos();
        match raw {
            Raw::Call(name, ..) => {
                let sort = self
                    .sig
                    .ctor(name)
                    .ok_or_else(|| Diagnostic::at(l, c, format!("undeclared constructor {name}")))?
                    .result
                    .clone();
                self.resolve(raw, &sort)
            }
            Raw::Int(..) => self.resolve(raw, crate::terms::INT_SORT),
            Raw::Str(..) => self.resolve(raw, crate::terms::TEXT_SORT),
            Raw::Name(name, ..) => {
                if let Some(sort) = self.sig.constant_sort(name) {
                    return Ok(Term::constant(name, sort));
                }
                match self.vars.get(name) {
                    Some(v) => Ok(Term::var(v)),
                    None => Err(Diagnostic::at(
                        l,
                        c,
                        format!("constraint variable {name} does not occur in any premise or the conclusion"),
                    )),
                }
            }
        }
    }
}

fn resolve_judgment(scope: &mut RuleScope, raw: &Raw, preds: &[PredSig]) -> Result<Judgment, Diagnostic> {
    let (l, c) = raw.pos();
    let Raw::Call(name, args, ..) = raw else {
        return Err(Diagnostic::at(l, c, "expected a judgment pred(args)"));
    };
    let pred = preds
        .iter()
        .find(|p| &*p.name == name)
        .ok_or_else(|| Diagnostic::at(l, c, format!("undeclared predicate {name}")))?;
    if pred.params.len() != args.len() {
        return Err(Diagnostic::at(
            l,
            c,
            format!("predicate {name} takes {} arguments, got {}", pred.params.len(), args.len()),
        ));
    }
    let args = args.iter().zip(&pred.params).map(|(a, s)| scope.resolve(a, s)).collect::<Result<_, _>>()?;
    Ok(Judgment { pred: pred.name.clone(), args })
}

fn resolve_rule(raw: &RawRule, sig: &Signature, preds: &[PredSig]) -> Result<TypingRule, Vec<Diagnostic>> {
    let mut scope = RuleScope { sig, vars: HashMap::new() };
    let mut diags = Vec::new();
    let mut wrap = |r: Result<Judgment, Diagnostic>| match r {
        Ok(j) => Some(j),
        Err(d) => {
            diags.push(Diagnostic::at(d.line, d.col, format!("rule {}: {}", raw.id, d.message)));
            None
        }
    };
    // Conclusion first so that variable sorts are fixed by it when possible.
    let conclusion = wrap(resolve_judgment(&mut scope, &raw.conclusion, preds));
    let premises: Vec<Option<Judgment>> =
        raw.premises.iter().map(|p| wrap(resolve_judgment(&mut scope, p, preds))).collect();
    let mut constraints = Vec::new();
    for c in &raw.constraints {
        let (l, col) = c.pos();
        let Raw::Call(name, args, ..) = c else {
            diags.push(Diagnostic::at(l, col, format!("rule {}: expected a constraint call", raw.id)));
            continue;
        };
        let mut out = Vec::new();
        for a in args {
            match scope.resolve_free(a) {
                Ok(t) => out.push(t),
                Err(d) => diags.push(Diagnostic::at(d.line, d.col, format!("rule {}: {}", raw.id, d.message))),
            }
        }
        constraints.push(Constraint { name: sym(name), args: out });
    }
    if !diags.is_empty() {
        return Err(diags);
    }
    let _ = (raw.line, raw.col);
    Ok(TypingRule {
        id: sym(&raw.id),
        premises: premises.into_iter().map(|p| p.expect("checked")).collect(),
        constraints,
        conclusion: conclusion.expect("checked"),
    })
}

// ---------------------------------------------------------------------------
// Canonical term syntax

/// Parses a term in canonical s-expression syntax against `expected`.
pub fn parse_term(text: &str, expected: &str, def: &LanguageDef) -> Result<Term, Diagnostic> {
    let mut cur = Cursor::new(text)?;
    let t = parse_sexpr(&mut cur, expected, def.signature())?;
    if !cur.at_end() {
        return Err(cur.err("trailing input after term"));
    }
    Ok(t)
}

fn parse_sexpr(cur: &mut Cursor, expected: &str, sig: &Signature) -> Result<Term, Diagnostic> {
    let kind = sig.kind(expected).ok_or_else(|| cur.err(format!("unknown sort {expected}")))?;
    let (l, c) = cur.here();
    match cur.next() {
        Some(Tok::Punct('(')) => {
            let name = cur.ident("constructor name")?;
            let ctor = sig.ctor(&name).ok_or_else(|| Diagnostic::at(l, c, format!("unknown constructor {name}")))?;
            if &*ctor.result != expected {
                return Err(Diagnostic::at(l, c, format!("{name} builds {}, expected {expected}", ctor.result)));
            }
            let params = ctor.params.clone();
            let mut args = Vec::with_capacity(params.len());
            for p in &params {
                if cur.peek() == Some(&Tok::Punct(')')) {
                    return Err(cur.err(format!("{name} expects {} arguments", params.len())));
                }
                args.push(parse_sexpr(cur, p, sig)?);
            }
            if !cur.eat(')') {
                return Err(cur.err(format!("{name} expects {} arguments", params.len())));
            }
            Ok(Term::app(&name, expected, args))
        }
        Some(Tok::Ident(name)) => match kind {
            SortKind::Text => Ok(Term::constant(&name, expected)),
            SortKind::Int => Err(Diagnostic::at(l, c, format!("expected an integer, found {name}"))),
            SortKind::Inductive => match sig.constant_sort(&name) {
                Some(s) if &**s == expected => Ok(Term::constant(&name, expected)),
                Some(s) => Err(Diagnostic::at(l, c, format!("{name} has sort {s}, expected {expected}"))),
                None if sig.ctor(&name).is_some() => {
                    Err(Diagnostic::at(l, c, format!("constructor {name} must be parenthesized")))
                }
                None => Err(Diagnostic::at(l, c, format!("unknown constant {name} of sort {expected}"))),
            },
        },
        Some(Tok::Int(n)) if kind == SortKind::Int => Ok(Term::constant(&n, expected)),
        Some(Tok::Var(name, id)) => Ok(Term::var(&Var::new(id, &name, expected))),
        _ => Err(Diagnostic::at(l, c, format!("expected a term of sort {expected}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::languages;

    fn stlc() -> LanguageDef {
        languages::stlc()
    }

    #[test]
    fn stlc_fixture_parses() {
        let def = stlc();
        let ids: Vec<&str> = def.rules().iter().map(|r| &*r.id).collect();
        assert_eq!(ids, ["T-TRUE", "T-FALSE", "T-VAR", "T-ABS", "T-APP", "T-ROOT"]);
        assert_eq!(&**def.root(), "well_typed");
        let app = &def.rules()[4];
        assert_eq!(app.to_string(), "rule T-APP: typed(G, p1, arrow(t1, t2)); typed(G, p2, t1) --- typed(G, app(p1, p2), t2)");
        let var = &def.rules()[2];
        assert_eq!(var.constraints.len(), 1);
        assert_eq!(&*var.constraints[0].name, "lookup");
    }

    #[test]
    fn empty_file_has_no_root() {
        let e = parse_language("").unwrap_err();
        assert!(e.to_string().contains("no root predicate"), "{e}");
    }

    #[test]
    fn undeclared_constructor_is_reported() {
        let text = "sort A = a\npred p(A)\nroot p\nrule R: --- p(b(a))";
        let e = parse_language(text).unwrap_err();
        assert!(e.to_string().contains("undeclared constructor b"), "{e}");
        assert_eq!(e.0[0].line, 4);
    }

    #[test]
    fn syntax_errors_carry_positions() {
        let e = parse_language("sort A = a\npred p(A\nroot p").unwrap_err();
        assert_eq!((e.0[0].line, e.0[0].col), (3, 1));
        let e = parse_language("sort A = a\npred p(A)\nroot p\nrule R: p(x) typed").unwrap_err();
        assert!(e.to_string().contains("'---'"), "{e}");
    }

    #[test]
    fn arity_mismatch_is_reported() {
        let text = "sort A = a | f(A, A)\npred p(A)\nroot p\nrule R: --- p(f(a))";
        let e = parse_language(text).unwrap_err();
        assert!(e.to_string().contains("takes 2 arguments"), "{e}");
    }

    #[test]
    fn constraint_variable_condition() {
        let text = "sort A = a\npred p(A)\nroot p\nrule R: [eq(z, z)] --- p(a)";
        let e = parse_language(text).unwrap_err();
        assert!(e.to_string().contains("does not occur"), "{e}");

        // Same condition when the definition is built programmatically.
        let def = stlc();
        let z = Var::new(1, "z", "Type");
        let mut rules = def.rules().to_vec();
        rules[0].constraints.push(Constraint { name: sym("eq"), args: vec![Term::var(&z), Term::var(&z)] });
        let bad = LanguageDef::from_parts(
            "bad",
            def.signature().clone(),
            def.preds().to_vec(),
            rules,
            "well_typed",
            ConstraintRegistry::default(),
        );
        let ds = validate(&bad).unwrap_err();
        assert_eq!(ds.len(), 1);
        assert!(ds[0].message.contains("T-TRUE") && ds[0].message.contains("z"));
    }

    #[test]
    fn undeclared_predicate_in_conclusion() {
        let text = "sort A = a\npred p(A)\nroot p\nrule R: --- q(a)";
        let e = parse_language(text).unwrap_err();
        assert!(e.to_string().contains("undeclared predicate q"), "{e}");

        let def = stlc();
        let mut rules = def.rules().to_vec();
        rules[0].conclusion.pred = sym("typed_nowhere");
        let bad = LanguageDef::from_parts(
            "bad",
            def.signature().clone(),
            def.preds().to_vec(),
            rules,
            "well_typed",
            ConstraintRegistry::default(),
        );
        assert!(validate(&bad).unwrap_err()[0].message.contains("undeclared predicate"));
    }

    #[test]
    fn unregistered_constraint() {
        let text = "sort A = a\npred p(A)\nroot p\nrule R: [frobnicate(a)] --- p(a)";
        let e = parse_language(text).unwrap_err();
        assert!(e.to_string().contains("unregistered constraint frobnicate"), "{e}");
    }

    #[test]
    fn validate_accepts_stlc() {
        assert_eq!(validate(&stlc()), Ok(()));
    }

    #[test]
    fn lookup_semantics() {
        let def = stlc();
        let ctx = def.parse_term("(bind empty x bool)", "Context").unwrap();
        let x = Term::constant("x", "String");
        let boolean = Term::constant("bool", "Type");
        let lookup = |ctx: &Term, ty: &Term| {
            def.eval_constraint(&Constraint { name: sym("lookup"), args: vec![ctx.clone(), x.clone(), ty.clone()] })
        };
        assert_eq!(lookup(&ctx, &boolean), Ok(true));
        assert_eq!(lookup(&Term::constant("empty", "Context"), &boolean), Ok(false));
        let shadowed = def.parse_term("(bind (bind empty x bool) x (arrow bool bool))", "Context").unwrap();
        assert_eq!(lookup(&shadowed, &boolean), Ok(false));
        assert_eq!(lookup(&shadowed, &def.parse_term("(arrow bool bool)", "Type").unwrap()), Ok(true));
    }

    #[test]
    fn constraint_faults() {
        let def = stlc();
        let v = Var::new(1, "t", "Type");
        let c = Constraint { name: sym("eq"), args: vec![Term::var(&v), Term::constant("bool", "Type")] };
        assert!(matches!(def.eval_constraint(&c), Err(ConstraintError::NonGround { .. })));
        let c = Constraint { name: sym("nope"), args: vec![] };
        assert!(matches!(def.eval_constraint(&c), Err(ConstraintError::Unknown(_))));
        let r = def.registry();
        let b = Term::constant("bool", "Type");
        assert_eq!(r.eval(&sym("neq"), &[b.clone(), b.clone()]), Ok(false));
        assert_eq!(r.eval(&sym("true_k"), &[]), Ok(true));
        let empty = Term::constant("empty", "Context");
        assert_eq!(r.eval(&sym("not_bound"), &[empty, Term::constant("x", "String")]), Ok(true));
    }

    #[test]
    fn parse_term_examples() {
        let def = stlc();
        let p = def.parse_term("(app (abs x bool (var x)) true)", "Prog").unwrap();
        assert_eq!(p.to_string(), "(app (abs x bool (var x)) true)");
        assert!(def.signature().check_sort(&p, "Prog").is_ok());
        assert!(def.parse_term("true", "Type").is_err());
        let t = def.parse_term("(arrow bool bool)", "Type").unwrap();
        assert_eq!(t, Term::app("arrow", "Type", vec![Term::constant("bool", "Type"), Term::constant("bool", "Type")]));
        let e = def.parse_term("(app true\n  bool)", "Prog").unwrap_err();
        assert_eq!((e.line, e.col), (2, 3));
        assert!(def.parse_term("(app true)", "Prog").is_err());
        assert!(def.parse_term("true true", "Prog").is_err());
        let v = def.parse_term("(var ?x.12)", "Prog").unwrap();
        assert_eq!(v.to_string(), "(var ?x.12)");
    }

    #[test]
    fn language_print_parse_round_trip() {
        for def in [languages::stlc(), languages::stlc_ext(), languages::example_rule1()] {
            let printed = def.to_string();
            let again = parse_language(&printed).unwrap();
            assert_eq!(again.to_string(), printed);
            assert_eq!(again.rules().len(), def.rules().len());
            for (a, b) in again.rules().iter().zip(def.rules()) {
                // equal up to the choice of variable ids
                assert_eq!(a.to_string(), b.to_string());
                assert_eq!(a.vars().len(), b.vars().len());
            }
        }
    }
}
