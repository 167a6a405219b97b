//! Sorted first-order terms, substitutions, and the language signature they
//! are checked against.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use thiserror::Error;

/// Interned-ish symbol. Cheap to clone and shareable across threads.
pub type Sym = Arc<str>;

pub fn sym(s: &str) -> Sym {
    Arc::from(s)
}

/// Name of the builtin text sort.
pub const TEXT_SORT: &str = "String";
/// Name of the builtin integer sort.
pub const INT_SORT: &str = "Int";

/// First id handed out by [`Var::fresh`]. Ids below this are free for
/// hand-built fixtures.
pub const FRESH_BASE: u64 = 1_000_000;
/// Ids at or above this are reserved for synthesis-rule conclusion slots.
pub const SLOT_BASE: u64 = 1 << 62;

static NEXT_VAR: AtomicU64 = AtomicU64::new(FRESH_BASE);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SortKind {
    Inductive,
    Text,
    Int,
}

/// A sorted variable. Identity is the numeric id; the name is only a
/// printing hint.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var {
    id: u64,
    name: Sym,
    sort: Sym,
}

impl Var {
    pub fn new(id: u64, name: &str, sort: &str) -> Var {
        Var { id, name: sym(name), sort: sym(sort) }
    }

    /// A variable with a process-wide fresh id.
    pub fn fresh(name: &str, sort: &str) -> Var {
        Var::fresh_sym(sym(name), sym(sort))
    }

    pub fn fresh_sym(name: Sym, sort: Sym) -> Var {
        let id = NEXT_VAR.fetch_add(1, Ordering::Relaxed);
        Var { id, name, sort }
    }

    /// Placeholder for the `index`-th conclusion argument of a synthesis rule.
    pub fn slot(index: usize, sort: &Sym) -> Var {
        Var { id: SLOT_BASE + index as u64, name: sym(&format!("s{index}")), sort: sort.clone() }
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn name(&self) -> &Sym {
        &self.name
    }

    pub fn sort(&self) -> &Sym {
        &self.sort
    }

    /// Same name and sort, new id.
    pub fn refresh(&self) -> Var {
        Var::fresh_sym(self.name.clone(), self.sort.clone())
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "?{}.{}", self.name, self.id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Const { name: Sym, sort: Sym },
    Var(Var),
    App { ctor: Sym, sort: Sym, args: Arc<[Term]> },
}

impl Term {
    pub fn constant(name: &str, sort: &str) -> Term {
        Term::Const { name: sym(name), sort: sym(sort) }
    }

    pub fn var(v: &Var) -> Term {
        Term::Var(v.clone())
    }

    pub fn app(ctor: &str, sort: &str, args: Vec<Term>) -> Term {
        Term::App { ctor: sym(ctor), sort: sym(sort), args: args.into() }
    }

    pub fn sort(&self) -> &Sym {
        match self {
            Term::Const { sort, .. } | Term::App { sort, .. } => sort,
            Term::Var(v) => &v.sort,
        }
    }

    pub fn is_ground(&self) -> bool {
        match self {
            Term::Const { .. } => true,
            Term::Var(_) => false,
            Term::App { args, .. } => args.iter().all(Term::is_ground),
        }
    }

    pub fn as_var(&self) -> Option<&Var> {
        match self {
            Term::Var(v) => Some(v),
            _ => None,
        }
    }

    /// Number of nodes.
    pub fn size(&self) -> usize {
        match self {
            Term::App { args, .. } => 1 + args.iter().map(Term::size).sum::<usize>(),
            _ => 1,
        }
    }

    /// Node labels in pre-order (constructor or constant names, `?` for variables).
    pub fn labels(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.walk(&mut |t| {
            out.push(match t {
                Term::Const { name, .. } => name.to_string(),
                Term::Var(_) => "?".to_string(),
                Term::App { ctor, .. } => ctor.to_string(),
            })
        });
        out
    }

    pub fn walk(&self, f: &mut impl FnMut(&Term)) {
        f(self);
        if let Term::App { args, .. } = self {
            for a in args.iter() {
                a.walk(f);
            }
        }
    }

    pub fn occurs(&self, v: &Var) -> bool {
        match self {
            Term::Const { .. } => false,
            Term::Var(w) => w == v,
            Term::App { args, .. } => args.iter().any(|a| a.occurs(v)),
        }
    }

    /// Structural map over variables.
    pub fn map_vars(&self, f: &mut impl FnMut(&Var) -> Term) -> Term {
        match self {
            Term::Const { .. } => self.clone(),
            Term::Var(v) => f(v),
            Term::App { ctor, sort, args } => Term::App {
                ctor: ctor.clone(),
                sort: sort.clone(),
                args: args.iter().map(|a| a.map_vars(f)).collect(),
            },
        }
    }

    /// Canonical printing with variables shown as `?name` (no id). Used for
    /// rule schemata where names are unique within the rule.
    pub fn display_named(&self) -> NamedTerm<'_> {
        NamedTerm(self)
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_term(self, f, &|v, f| write!(f, "{v}"))
    }
}

pub struct NamedTerm<'a>(&'a Term);

impl fmt::Display for NamedTerm<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_term(self.0, f, &|v, f| write!(f, "?{}", v.name))
    }
}

fn write_term(
    t: &Term,
    f: &mut fmt::Formatter<'_>,
    var: &dyn Fn(&Var, &mut fmt::Formatter<'_>) -> fmt::Result,
) -> fmt::Result {
    match t {
        Term::Const { name, .. } => f.write_str(name),
        Term::Var(v) => var(v, f),
        Term::App { ctor, args, .. } => {
            write!(f, "({ctor}")?;
            for a in args.iter() {
                f.write_str(" ")?;
                write_term(a, f, var)?;
            }
            f.write_str(")")
        }
    }
}

/// Variables of `t` in first-occurrence pre-order, without repeats.
pub fn free_vars(t: &Term) -> Vec<Var> {
    free_vars_all(std::slice::from_ref(t))
}

/// Ordered union of the variables of a term list.
pub fn free_vars_all<'a>(ts: impl IntoIterator<Item = &'a Term>) -> Vec<Var> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for t in ts {
        t.walk(&mut |n| {
            if let Term::Var(v) = n {
                if seen.insert(v.clone()) {
                    out.push(v.clone());
                }
            }
        });
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TermError {
    #[error("sort mismatch: {var} has sort {}, bound to {term} of sort {}", var.sort, term.sort())]
    SortMismatch { var: Var, term: Term },
    #[error("substitution would not be idempotent: {var} is both bound and used in a binding")]
    NotIdempotent { var: Var },
}

/// A finite, idempotent, sort-preserving mapping from variables to terms.
///
/// No variable of the domain occurs in any range term, so applying a
/// substitution once is the same as applying it to a fixpoint.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct Substitution {
    map: BTreeMap<Var, Term>,
}

impl Substitution {
    pub fn new() -> Substitution {
        Substitution::default()
    }

    /// Builds a substitution, checking sorts and idempotency. Trivial
    /// bindings `v ↦ v` are dropped.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (Var, Term)>) -> Result<Substitution, TermError> {
        let mut map = BTreeMap::new();
        for (v, t) in pairs {
            if v.sort != *t.sort() {
                return Err(TermError::SortMismatch { var: v, term: t });
            }
            if t.as_var() == Some(&v) {
                continue;
            }
            map.insert(v, t);
        }
        let s = Substitution { map };
        s.check_idempotent()?;
        Ok(s)
    }

    /// Single binding.
    pub fn singleton(v: Var, t: Term) -> Result<Substitution, TermError> {
        Substitution::from_pairs([(v, t)])
    }

    fn check_idempotent(&self) -> Result<(), TermError> {
        for t in self.map.values() {
            for v in free_vars(t) {
                if self.map.contains_key(&v) {
                    return Err(TermError::NotIdempotent { var: v });
                }
            }
        }
        Ok(())
    }

    pub fn get(&self, v: &Var) -> Option<&Term> {
        self.map.get(v)
    }

    pub fn contains(&self, v: &Var) -> bool {
        self.map.contains_key(v)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn domain(&self) -> impl Iterator<Item = &Var> {
        self.map.keys()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Var, &Term)> {
        self.map.iter()
    }

    /// True when every range term is ground.
    pub fn is_assignment(&self) -> bool {
        self.map.values().all(Term::is_ground)
    }

    /// Simultaneous replacement of the mapped variables.
    pub fn apply(&self, t: &Term) -> Term {
        if self.map.is_empty() {
            return t.clone();
        }
        t.map_vars(&mut |v| self.map.get(v).cloned().unwrap_or_else(|| Term::Var(v.clone())))
    }

    pub fn apply_all(&self, ts: &[Term]) -> Vec<Term> {
        ts.iter().map(|t| self.apply(t)).collect()
    }

    /// `self ∘ other`: applying the result equals applying `other` then `self`.
    pub fn compose(&self, other: &Substitution) -> Result<Substitution, TermError> {
        let mut pairs: Vec<(Var, Term)> =
            other.map.iter().map(|(v, t)| (v.clone(), self.apply(t))).collect();
        for (v, t) in &self.map {
            if !other.map.contains_key(v) {
                pairs.push((v.clone(), t.clone()));
            }
        }
        Substitution::from_pairs(pairs)
    }

    /// Keeps only the bindings for variables in `vars`.
    pub fn restrict<'a>(&self, vars: impl IntoIterator<Item = &'a Var>) -> Substitution {
        let mut map = BTreeMap::new();
        for v in vars {
            if let Some(t) = self.map.get(v) {
                map.insert(v.clone(), t.clone());
            }
        }
        Substitution { map }
    }

    /// Inserts a binding whose term is ground, pushing it through existing
    /// range terms. Used while accumulating acquisitions.
    pub(crate) fn extend_ground(&mut self, v: Var, t: Term) -> Result<(), TermError> {
        debug_assert!(t.is_ground());
        let single = Substitution::singleton(v, t)?;
        *self = single.compose(self)?;
        Ok(())
    }
}

impl fmt::Display for Substitution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, (v, t)) in self.map.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{v} ↦ {t}")?;
        }
        f.write_str("}")
    }
}

/// Variable-to-variable renaming produced by [`fresh_rename`].
pub type Renaming = BTreeMap<Var, Var>;

/// Replaces every variable of `terms` by a globally fresh variable of the
/// same sort. Shared variables stay shared.
pub fn fresh_rename(terms: &[Term]) -> (Vec<Term>, Renaming) {
    let mut renaming = Renaming::new();
    let out = terms.iter().map(|t| rename_with(t, &mut renaming)).collect();
    (out, renaming)
}

/// Renames through `renaming`, extending it with fresh variables as needed.
pub fn rename_with(t: &Term, renaming: &mut Renaming) -> Term {
    t.map_vars(&mut |v| Term::Var(renaming.entry(v.clone()).or_insert_with(|| v.refresh()).clone()))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Alternative {
    Constant(Sym),
    Ctor(Sym),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SortDecl {
    pub name: Sym,
    pub kind: SortKind,
    pub alternatives: Vec<Alternative>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CtorSig {
    pub name: Sym,
    pub result: Sym,
    pub params: Vec<Sym>,
}

/// Sorts, constants, constructors, and the atom pools for builtin sorts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Signature {
    sorts: Vec<SortDecl>,
    sort_index: HashMap<Sym, usize>,
    ctors: HashMap<Sym, CtorSig>,
    constants: HashMap<Sym, Sym>,
    names: Vec<Sym>,
    ints: Vec<Sym>,
}

pub const DEFAULT_NAMES: [&str; 9] = ["x", "y", "z", "f", "g", "h", "u", "v", "w"];
pub const DEFAULT_INTS: [&str; 2] = ["0", "1"];

impl Default for Signature {
    fn default() -> Self {
        let mut sig = Signature {
            sorts: Vec::new(),
            sort_index: HashMap::new(),
            ctors: HashMap::new(),
            constants: HashMap::new(),
            names: DEFAULT_NAMES.iter().map(|n| sym(n)).collect(),
            ints: DEFAULT_INTS.iter().map(|n| sym(n)).collect(),
        };
        sig.push_sort(SortDecl { name: sym(TEXT_SORT), kind: SortKind::Text, alternatives: vec![] });
        sig.push_sort(SortDecl { name: sym(INT_SORT), kind: SortKind::Int, alternatives: vec![] });
        sig
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SignatureError {
    #[error("sort {0} is declared twice")]
    DuplicateSort(Sym),
    #[error("symbol {0} is declared twice")]
    DuplicateSymbol(Sym),
    #[error("constructor {ctor} uses undeclared sort {sort}")]
    UnknownParamSort { ctor: Sym, sort: Sym },
}

impl Signature {
    fn push_sort(&mut self, decl: SortDecl) {
        self.sort_index.insert(decl.name.clone(), self.sorts.len());
        self.sorts.push(decl);
    }

    /// Declares an inductive sort. Parameter sorts are checked by [`Signature::check_params`].
    pub fn add_sort(&mut self, name: &str, alternatives: Vec<(String, Vec<String>)>) -> Result<(), SignatureError> {
        let name = sym(name);
        if self.sort_index.contains_key(&name) {
            return Err(SignatureError::DuplicateSort(name));
        }
        let mut alts = Vec::new();
        for (alt, params) in alternatives {
            let alt = sym(&alt);
            if self.ctors.contains_key(&alt) || self.constants.contains_key(&alt) {
                return Err(SignatureError::DuplicateSymbol(alt));
            }
            if params.is_empty() {
                self.constants.insert(alt.clone(), name.clone());
                alts.push(Alternative::Constant(alt));
            } else {
                let sig = CtorSig {
                    name: alt.clone(),
                    result: name.clone(),
                    params: params.iter().map(|p| sym(p)).collect(),
                };
                self.ctors.insert(alt.clone(), sig);
                alts.push(Alternative::Ctor(alt));
            }
        }
        self.push_sort(SortDecl { name, kind: SortKind::Inductive, alternatives: alts });
        Ok(())
    }

    /// Every constructor parameter names a declared sort.
    pub fn check_params(&self) -> Vec<SignatureError> {
        let mut errs = Vec::new();
        for decl in &self.sorts {
            for alt in &decl.alternatives {
                if let Alternative::Ctor(c) = alt {
                    for p in &self.ctors[c].params {
                        if !self.sort_index.contains_key(p) {
                            errs.push(SignatureError::UnknownParamSort { ctor: c.clone(), sort: p.clone() });
                        }
                    }
                }
            }
        }
        errs
    }

    pub fn set_names(&mut self, names: Vec<Sym>) {
        self.names = names;
    }

    pub fn add_names<'a>(&mut self, names: impl IntoIterator<Item = &'a Sym>) {
        for n in names {
            if !self.names.contains(n) {
                self.names.push(n.clone());
            }
        }
    }

    pub fn set_ints(&mut self, ints: Vec<Sym>) {
        self.ints = ints;
    }

    pub fn names(&self) -> &[Sym] {
        &self.names
    }

    pub fn ints(&self) -> &[Sym] {
        &self.ints
    }

    pub fn sorts(&self) -> &[SortDecl] {
        &self.sorts
    }

    pub fn sort(&self, name: &str) -> Option<&SortDecl> {
        self.sort_index.get(name).map(|&i| &self.sorts[i])
    }

    pub fn kind(&self, sort: &str) -> Option<SortKind> {
        self.sort(sort).map(|d| d.kind)
    }

    pub fn ctor(&self, name: &str) -> Option<&CtorSig> {
        self.ctors.get(name)
    }

    /// Sort of a declared constant of an inductive sort.
    pub fn constant_sort(&self, name: &str) -> Option<&Sym> {
        self.constants.get(name)
    }

    /// The ground term built from a pool atom or integer literal of a builtin sort.
    pub fn atom(&self, name: &str, sort: &str) -> Term {
        Term::constant(name, sort)
    }

    /// Checks that `t` is a well-formed term of sort `expected`.
    pub fn check_sort(&self, t: &Term, expected: &str) -> Result<(), SortDiagnostic> {
        let found = |actual: &str| SortDiagnostic {
            subterm: t.to_string(),
            expected: expected.to_string(),
            found: actual.to_string(),
        };
        let kind = self.kind(expected).ok_or_else(|| found("<undeclared sort>"))?;
        match t {
            Term::Var(v) => {
                if &*v.sort != expected {
                    return Err(found(&v.sort));
                }
                Ok(())
            }
            Term::Const { name, sort } => {
                if &**sort != expected {
                    return Err(found(sort));
                }
                let ok = match kind {
                    SortKind::Inductive => self.constants.get(name).map(|s| &**s == expected).unwrap_or(false),
                    SortKind::Text => is_atom(name),
                    SortKind::Int => name.parse::<i64>().is_ok(),
                };
                if ok {
                    Ok(())
                } else {
                    Err(found(&format!("{sort} (no such constant)")))
                }
            }
            Term::App { ctor, sort, args } => {
                let sig = self.ctors.get(ctor).ok_or_else(|| found(&format!("{sort} (unknown constructor)")))?;
                if &*sig.result != expected || sort != &sig.result {
                    return Err(found(&sig.result));
                }
                if sig.params.len() != args.len() {
                    return Err(found(&format!("{} (arity {} instead of {})", sig.result, args.len(), sig.params.len())));
                }
                for (a, p) in args.iter().zip(&sig.params) {
                    self.check_sort(a, p)?;
                }
                Ok(())
            }
        }
    }
}

/// Identifier-shaped atom usable as a builtin text value.
pub fn is_atom(s: &str) -> bool {
    let mut cs = s.chars();
    matches!(cs.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && cs.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '\'')
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("ill-sorted term {subterm}: expected {expected}, found {found}")]
pub struct SortDiagnostic {
    pub subterm: String,
    pub expected: String,
    pub found: String,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn stlc_sig() -> Signature {
        let mut sig = Signature::default();
        let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
        sig.add_sort(
            "Prog",
            vec![
                ("true".into(), vec![]),
                ("false".into(), vec![]),
                ("var".into(), s(&["String"])),
                ("app".into(), s(&["Prog", "Prog"])),
                ("abs".into(), s(&["String", "Type", "Prog"])),
            ],
        )
        .unwrap();
        sig.add_sort("Type", vec![("bool".into(), vec![]), ("arrow".into(), s(&["Type", "Type"]))]).unwrap();
        sig.add_sort("Context", vec![("empty".into(), vec![]), ("bind".into(), s(&["Context", "String", "Type"]))])
            .unwrap();
        sig
    }

    fn tru() -> Term {
        Term::constant("true", "Prog")
    }
    fn boolean() -> Term {
        Term::constant("bool", "Type")
    }
    fn name(n: &str) -> Term {
        Term::constant(n, "String")
    }
    fn app(a: Term, b: Term) -> Term {
        Term::app("app", "Prog", vec![a, b])
    }
    fn bind(g: Term, x: Term, t: Term) -> Term {
        Term::app("bind", "Context", vec![g, x, t])
    }
    fn empty() -> Term {
        Term::constant("empty", "Context")
    }

    #[test]
    fn free_vars_examples() {
        assert!(free_vars(&tru()).is_empty());
        let p1 = Var::new(1, "p1", "Prog");
        let p2 = Var::new(2, "p2", "Prog");
        assert_eq!(free_vars(&app(Term::var(&p1), Term::var(&p2))), vec![p1.clone(), p2.clone()]);
        let x1 = Var::new(3, "x1", "String");
        let t3 = Var::new(4, "t3", "Type");
        assert_eq!(free_vars(&bind(empty(), Term::var(&x1), Term::var(&t3))), vec![x1, t3]);
        // repeated occurrences appear once, in first-occurrence order
        assert_eq!(free_vars(&app(Term::var(&p2), app(Term::var(&p1), Term::var(&p2)))), vec![p2, p1]);
    }

    #[test]
    fn apply_examples() {
        let t = app(tru(), tru());
        assert_eq!(Substitution::new().apply(&t), t);

        let p = Var::new(1, "p", "Prog");
        let ty = Var::new(2, "t", "Type");
        let p1 = Var::new(3, "p1", "Prog");
        let p2 = Var::new(4, "p2", "Prog");
        let t2 = Var::new(5, "t2", "Type");
        let s = Substitution::from_pairs([
            (p.clone(), app(Term::var(&p1), Term::var(&p2))),
            (ty.clone(), Term::var(&t2)),
        ])
        .unwrap();
        assert_eq!(s.apply_all(&[Term::var(&p), Term::var(&ty)]), vec![app(Term::var(&p1), Term::var(&p2)), Term::var(&t2)]);

        let x1 = Var::new(10, "x1", "String");
        let x2 = Var::new(11, "x2", "String");
        let t3 = Var::new(12, "t3", "Type");
        let t5 = Var::new(13, "t5", "Type");
        let s4 = Substitution::from_pairs([
            (x1.clone(), name("x")),
            (x2, name("x")),
            (t3.clone(), boolean()),
            (t5, boolean()),
        ])
        .unwrap();
        assert_eq!(s4.apply(&bind(empty(), Term::var(&x1), Term::var(&t3))), bind(empty(), name("x"), boolean()));
    }

    #[test]
    fn sort_mismatch_is_rejected() {
        let p = Var::new(1, "p", "Prog");
        let err = Substitution::singleton(p, boolean()).unwrap_err();
        assert!(matches!(err, TermError::SortMismatch { .. }));
    }

    #[test]
    fn compose_examples() {
        let a = Var::new(1, "a", "Type");
        let s = Substitution::singleton(a.clone(), boolean()).unwrap();
        assert_eq!(s.compose(&Substitution::new()).unwrap(), s);
        assert_eq!(Substitution::new().compose(&s).unwrap(), s);

        let t1 = Var::new(2, "t1", "Type");
        let t3 = Var::new(3, "t3", "Type");
        let outer = Substitution::singleton(t3.clone(), boolean()).unwrap();
        let inner = Substitution::singleton(t1.clone(), Term::var(&t3)).unwrap();
        let c = outer.compose(&inner).unwrap();
        assert_eq!(c.apply(&Term::var(&t1)), boolean());
        assert_eq!(c.apply(&Term::var(&t3)), boolean());
    }

    #[test]
    fn compose_worked_example_step3() {
        let g3 = Var::new(1, "G3", "Context");
        let p3 = Var::new(2, "p3", "Prog");
        let t4 = Var::new(3, "t4", "Type");
        let x1 = Var::new(4, "x1", "String");
        let t3 = Var::new(5, "t3", "Type");
        let x2 = Var::new(6, "x2", "String");
        let t5 = Var::new(7, "t5", "Type");
        let var = |t: Term| Term::app("var", "Prog", vec![t]);
        let s3 = Substitution::from_pairs([
            (g3.clone(), bind(empty(), Term::var(&x1), Term::var(&t3))),
            (p3.clone(), var(Term::var(&x2))),
            (t4.clone(), Term::var(&t5)),
        ])
        .unwrap();
        let s4 = Substitution::from_pairs([
            (x1.clone(), name("x")),
            (x2.clone(), name("x")),
            (t3.clone(), boolean()),
            (t5.clone(), boolean()),
        ])
        .unwrap();
        let c = s4.compose(&s3).unwrap();
        let expected = Substitution::from_pairs([
            (g3.clone(), bind(empty(), name("x"), boolean())),
            (p3.clone(), var(name("x"))),
            (t4.clone(), boolean()),
            (x1, name("x")),
            (x2, name("x")),
            (t3, boolean()),
            (t5, boolean()),
        ])
        .unwrap();
        assert_eq!(c, expected);

        let r = c.restrict([&g3, &p3, &t4]);
        assert_eq!(r.len(), 3);
        assert_eq!(r.get(&p3), Some(&var(name("x"))));
    }

    #[test]
    fn restrict_examples() {
        let a = Var::new(1, "a", "Type");
        let b = Var::new(2, "b", "Type");
        let s = Substitution::from_pairs([(a.clone(), boolean()), (b, Term::app("arrow", "Type", vec![boolean(), boolean()]))])
            .unwrap();
        assert!(s.restrict([]).is_empty());
        assert_eq!(s.restrict([&a]), Substitution::singleton(a, boolean()).unwrap());
    }

    #[test]
    fn non_idempotent_composition_is_reported() {
        let a = Var::new(1, "a", "Type");
        let b = Var::new(2, "b", "Type");
        let c = Var::new(3, "c", "Type");
        // outer maps c to a term mentioning a, which inner binds
        let outer = Substitution::singleton(c.clone(), Term::app("arrow", "Type", vec![Term::var(&a), boolean()])).unwrap();
        let inner = Substitution::singleton(a, Term::var(&b)).unwrap();
        assert!(matches!(outer.compose(&inner), Err(TermError::NotIdempotent { .. })));
    }

    #[test]
    fn fresh_rename_examples() {
        let g = Var::new(1, "G", "Context");
        let p1 = Var::new(2, "p1", "Prog");
        let p2 = Var::new(3, "p2", "Prog");
        let t = app(Term::var(&p1), Term::var(&p2));
        let ctx = Term::var(&g);
        let (r1, m1) = fresh_rename(&[ctx.clone(), t.clone()]);
        let (r2, _) = fresh_rename(&[ctx, t.clone()]);
        assert_eq!(m1.len(), 3);
        assert!(m1.values().all(|v| v.id() >= FRESH_BASE));
        let v1: BTreeSet<_> = free_vars_all(&r1).into_iter().collect();
        let v2: BTreeSet<_> = free_vars_all(&r2).into_iter().collect();
        assert!(v1.is_disjoint(&v2));
        assert_eq!(r1[1].labels(), t.labels());

        let ground = app(tru(), tru());
        let (rg, mg) = fresh_rename(std::slice::from_ref(&ground));
        assert_eq!(rg, vec![ground]);
        assert!(mg.is_empty());
    }

    #[test]
    fn check_sort_examples() {
        let sig = stlc_sig();
        assert!(sig.check_sort(&tru(), "Prog").is_ok());
        let bad = Term::constant("true", "Type");
        assert!(sig.check_sort(&bad, "Type").is_err());
        let e = sig.check_sort(&app(tru(), boolean()), "Prog").unwrap_err();
        assert_eq!(e.subterm, "bool");
        assert_eq!(e.expected, "Prog");
        assert_eq!(e.found, "Type");
        assert!(sig.check_sort(&name("x"), "String").is_ok());
    }

    #[test]
    fn display_is_canonical() {
        let x = Term::app("abs", "Prog", vec![name("x"), boolean(), Term::app("var", "Prog", vec![name("x")])]);
        assert_eq!(app(x, tru()).to_string(), "(app (abs x bool (var x)) true)");
        let v = Var::new(7, "p", "Prog");
        assert_eq!(Term::var(&v).to_string(), "?p.7");
    }

    // Random terms over a Type-only signature: bool | arrow(Type, Type).
    fn arb_type(vars: Vec<Var>) -> impl Strategy<Value = Term> {
        let leaf = prop_oneof![
            Just(boolean()),
            proptest::sample::select(vars).prop_map(|v| Term::var(&v)),
        ];
        leaf.prop_recursive(4, 24, 2, |inner| {
            (inner.clone(), inner).prop_map(|(a, b)| Term::app("arrow", "Type", vec![a, b]))
        })
    }

    fn pool() -> Vec<Var> {
        (1..=5).map(|i| Var::new(i, &format!("v{i}"), "Type")).collect()
    }

    // Idempotent substitution over vars drawn from `dom`, with range vars from `range`.
    fn arb_subst(dom: Vec<Var>, range: Vec<Var>) -> impl Strategy<Value = Substitution> {
        proptest::collection::vec((proptest::sample::select(dom), arb_type(range)), 0..4)
            .prop_map(|pairs| Substitution::from_pairs(pairs).unwrap())
    }

    proptest! {
        #[test]
        fn compose_agrees_with_sequential_apply(
            s2 in arb_subst(pool()[..3].to_vec(), pool()[3..].to_vec()),
            s1 in arb_subst(pool()[3..4].to_vec(), pool()[4..].to_vec()),
            t in arb_type(pool()),
        ) {
            let c = s1.compose(&s2).unwrap();
            prop_assert_eq!(c.apply(&t), s1.apply(&s2.apply(&t)));
            // idempotency
            prop_assert_eq!(c.apply(&c.apply(&t)), c.apply(&t));
        }

        #[test]
        fn restrict_agrees_inside(s in arb_subst(pool()[..3].to_vec(), pool()[3..].to_vec()), keep in proptest::sample::subsequence(pool(), 0..5)) {
            let r = s.restrict(keep.iter());
            for v in &keep {
                prop_assert_eq!(r.apply(&Term::var(v)), s.apply(&Term::var(v)));
            }
        }

        #[test]
        fn groundness_follows_coverage(s in arb_subst(pool()[..3].to_vec(), pool()[3..].to_vec()), t in arb_type(pool())) {
            let covered = free_vars(&t).iter().all(|v| s.get(v).map(Term::is_ground).unwrap_or(false));
            prop_assert_eq!(s.apply(&t).is_ground(), covered);
        }

        #[test]
        fn rename_is_injective_and_shape_preserving(t in arb_type(pool())) {
            let (r, m) = fresh_rename(std::slice::from_ref(&t));
            prop_assert_eq!(r[0].size(), t.size());
            prop_assert_eq!(r[0].labels(), t.labels());
            let targets: BTreeSet<_> = m.values().collect();
            prop_assert_eq!(targets.len(), m.len());
            prop_assert_eq!(m.len(), free_vars(&t).len());
        }
    }
}
