//! Proof search over typing rules: builds type derivation trees for ground
//! judgments and re-checks given trees.

use std::cell::Cell;
use std::fmt;

use thiserror::Error;

use crate::language::{Judgment, LanguageDef, TypingRule};
use crate::terms::{Renaming, Substitution, Sym, Term};
use crate::unify::unify_lists;

pub const DEFAULT_DEPTH_LIMIT: usize = 64;

/// A type derivation tree. `instantiation` maps the original (unrenamed)
/// variables of the rule to ground terms.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TypeTree {
    pub judgment: Judgment,
    pub rule: Sym,
    pub instantiation: Substitution,
    pub children: Vec<TypeTree>,
}

impl TypeTree {
    pub fn node_count(&self) -> usize {
        1 + self.children.iter().map(TypeTree::node_count).sum::<usize>()
    }

    pub fn depth(&self) -> usize {
        1 + self.children.iter().map(TypeTree::depth).max().unwrap_or(0)
    }

    pub fn at(&self, path: &[usize]) -> Option<&TypeTree> {
        match path.split_first() {
            None => Some(self),
            Some((i, rest)) => self.children.get(*i)?.at(rest),
        }
    }

    /// Rule ids in pre-order.
    pub fn rules(&self) -> Vec<Sym> {
        let mut out = vec![self.rule.clone()];
        for c in &self.children {
            out.extend(c.rules());
        }
        out
    }

    /// Indented layout, one judgment per line, with evaluated constraints
    /// shown under the node that checks them.
    pub fn pretty(&self, def: &LanguageDef) -> String {
        let mut out = String::new();
        self.pretty_into(def, 0, &mut out);
        out
    }

    fn pretty_into(&self, def: &LanguageDef, indent: usize, out: &mut String) {
        let pad = "  ".repeat(indent);
        out.push_str(&format!("{pad}{}  [{}]\n", self.judgment, self.rule));
        if let Some(r) = def.rule_index(&self.rule).map(|i| &def.rules()[i]) {
            for c in &r.constraints {
                let c = c.map_terms(|t| self.instantiation.apply(t));
                out.push_str(&format!("{pad}  {c}\n"));
            }
        }
        for ch in &self.children {
            ch.pretty_into(def, indent + 1, out);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DeriveError {
    #[error("no derivation of {0}")]
    NoDerivation(Judgment),
    #[error("depth limit {limit} exceeded while deriving {goal}")]
    DepthExceeded { goal: Judgment, limit: usize },
    #[error("goal {0} is not well-formed")]
    IllFormed(Judgment),
}

/// Derives `goal` with the default depth limit.
pub fn derive(def: &LanguageDef, goal: &Judgment) -> Result<TypeTree, DeriveError> {
    derive_with_limit(def, goal, DEFAULT_DEPTH_LIMIT)
}

/// Derivation of `well_typed(program)` (or whatever the root predicate is).
pub fn check_program(def: &LanguageDef, program: &Term) -> Result<TypeTree, DeriveError> {
    derive(def, &def.root_judgment(program))
}

/// Depth-first search trying rules in file order and premises left to
/// right; constraints are evaluated once all premises are solved. The first
/// success wins.
pub fn derive_with_limit(def: &LanguageDef, goal: &Judgment, limit: usize) -> Result<TypeTree, DeriveError> {
    match def.pred(&goal.pred) {
        Some(p) if p.params.len() == goal.args.len() => {
            for (a, s) in goal.args.iter().zip(&p.params) {
                if def.signature().check_sort(a, s).is_err() {
                    return Err(DeriveError::IllFormed(goal.clone()));
                }
            }
        }
        _ => return Err(DeriveError::IllFormed(goal.clone())),
    }
    let search = Search { def, limit, hit_limit: Cell::new(false) };
    let found = search.solve(goal, Substitution::new(), 1, &mut |s, node| node.finish(def, &s));
    match found {
        Some(t) => Ok(t),
        None if search.hit_limit.get() => Err(DeriveError::DepthExceeded { goal: goal.clone(), limit }),
        None => Err(DeriveError::NoDerivation(goal.clone())),
    }
}

struct Search<'a> {
    def: &'a LanguageDef,
    limit: usize,
    hit_limit: Cell<bool>,
}

// A node whose variables are still being solved.
#[derive(Clone)]
struct Pending {
    rule: usize,
    renaming: Renaming,
    conclusion: Judgment,
    children: Vec<Pending>,
}

impl Pending {
    fn finish(&self, def: &LanguageDef, s: &Substitution) -> Option<TypeTree> {
        let judgment = self.conclusion.map_terms(|t| s.apply(t));
        if !judgment.is_ground() {
            return None;
        }
        let rule = &def.rules()[self.rule];
        let pairs = rule.vars().into_iter().map(|v| {
            let renamed = self.renaming.get(&v).cloned().unwrap_or_else(|| v.clone());
            (v, s.apply(&Term::var(&renamed)))
        });
        let instantiation = Substitution::from_pairs(pairs).ok()?;
        if !instantiation.is_assignment() {
            return None;
        }
        for c in &rule.constraints {
            if def.eval_constraint(&c.map_terms(|t| instantiation.apply(t))) != Ok(true) {
                return None;
            }
        }
        let children = self.children.iter().map(|c| c.finish(def, s)).collect::<Option<Vec<_>>>()?;
        Some(TypeTree { judgment, rule: rule.id.clone(), instantiation, children })
    }
}

type Cont<'k, T> = &'k mut dyn FnMut(Substitution, T) -> Option<TypeTree>;

impl Search<'_> {
    fn solve(&self, goal: &Judgment, s: Substitution, depth: usize, k: Cont<'_, Pending>) -> Option<TypeTree> {
        if depth > self.limit {
            self.hit_limit.set(true);
            return None;
        }
        let goal_args = s.apply_all(&goal.args);
        for (idx, rule) in self.def.rules().iter().enumerate() {
            if rule.conclusion.pred != goal.pred {
                continue;
            }
            let (r, renaming) = rule.rename();
            let Ok(mgu) = unify_lists(&goal_args, &r.conclusion.args) else { continue };
            let Ok(s1) = mgu.compose(&s) else { continue };
            let found = self.premises(&r, 0, s1, depth, Vec::new(), &mut |s2, children| {
                let s2 = self.constraints(&r, s2)?;
                let node = Pending { rule: idx, renaming: renaming.clone(), conclusion: r.conclusion.clone(), children };
                k(s2, node)
            });
            if found.is_some() {
                return found;
            }
        }
        None
    }

    // Evaluates ground constraints and lets the registry fill in the outputs
    // of partially known ones, until nothing changes. Constraints that stay
    // open are checked again when the tree is finished.
    fn constraints(&self, r: &TypingRule, mut s: Substitution) -> Option<Substitution> {
        let mut open: Vec<_> = r.constraints.iter().collect();
        loop {
            let before = open.len();
            let mut still = Vec::new();
            for c in open {
                let c_now = c.map_terms(|t| s.apply(t));
                if c_now.args.iter().all(Term::is_ground) {
                    if self.def.eval_constraint(&c_now) != Ok(true) {
                        return None;
                    }
                    continue;
                }
                match self.def.registry().solve(&c_now.name, &c_now.args) {
                    Some(args) => {
                        let mgu = unify_lists(&c_now.args, &args).ok()?;
                        s = mgu.compose(&s).ok()?;
                        if self.def.eval_constraint(&c.map_terms(|t| s.apply(t))) != Ok(true) {
                            return None;
                        }
                    }
                    None => still.push(c),
                }
            }
            if still.is_empty() || still.len() == before {
                return Some(s);
            }
            open = still;
        }
    }

    fn premises(
        &self,
        r: &TypingRule,
        i: usize,
        s: Substitution,
        depth: usize,
        done: Vec<Pending>,
        k: Cont<'_, Vec<Pending>>,
    ) -> Option<TypeTree> {
        if i == r.premises.len() {
            return k(s, done);
        }
        self.solve(&r.premises[i], s, depth + 1, &mut |s2, node| {
            let mut done = done.clone();
            done.push(node);
            self.premises(r, i + 1, s2, depth, done, k)
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct TreeError {
    /// Child indices from the root to the offending node.
    pub path: Vec<usize>,
    pub message: String,
}

impl fmt::Display for TreeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let path: Vec<String> = self.path.iter().map(|i| i.to_string()).collect();
        write!(f, "node [{}]: {}", path.join("."), self.message)
    }
}

/// Checks every node of `tree` against its rule without any search.
pub fn verify_tree(def: &LanguageDef, tree: &TypeTree) -> Result<(), TreeError> {
    verify_at(def, tree, &mut Vec::new())
}

fn verify_at(def: &LanguageDef, tree: &TypeTree, path: &mut Vec<usize>) -> Result<(), TreeError> {
    let fail = |m: String| Err(TreeError { path: path.clone(), message: m });
    let Some(idx) = def.rule_index(&tree.rule) else {
        return fail(format!("unknown rule {}", tree.rule));
    };
    let rule = &def.rules()[idx];
    if !tree.judgment.is_ground() {
        return fail(format!("judgment {} is not ground", tree.judgment));
    }
    if !tree.instantiation.is_assignment() {
        return fail("instantiation is not an assignment".into());
    }
    for v in rule.vars() {
        if !tree.instantiation.contains(&v) {
            return fail(format!("rule variable {} is not instantiated", v.name()));
        }
    }
    let inst = |j: &Judgment| j.map_terms(|t| tree.instantiation.apply(t));
    if inst(&rule.conclusion) != tree.judgment {
        return fail(format!("{} does not instantiate the conclusion of {}", tree.judgment, rule.id));
    }
    if tree.children.len() != rule.premises.len() {
        return fail(format!("{} has {} premises but the node has {} children", rule.id, rule.premises.len(), tree.children.len()));
    }
    for (i, (p, c)) in rule.premises.iter().zip(&tree.children).enumerate() {
        if inst(p) != c.judgment {
            return fail(format!("premise {} is {} but child judgment is {}", i + 1, inst(p), c.judgment));
        }
    }
    for c in &rule.constraints {
        let c = c.map_terms(|t| tree.instantiation.apply(t));
        match def.eval_constraint(&c) {
            Ok(true) => {}
            Ok(false) => return fail(format!("constraint {c} is false")),
            Err(e) => return fail(e.to_string()),
        }
    }
    for (i, c) in tree.children.iter().enumerate() {
        path.push(i);
        verify_at(def, c, path)?;
        path.pop();
    }
    Ok(())
}
