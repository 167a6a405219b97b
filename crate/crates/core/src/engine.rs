//! Construction of synthesis derivation trees.
//!
//! [`SynthState`] is an explicit state machine: it either waits for a rule
//! token (which rule to apply to the current goal) or for a term token (the
//! next pre-order symbol of the term being acquired for a free variable).
//! Everything else (unification, subgoal creation, constraint checks,
//! returning results to the parent) happens eagerly inside [`SynthState::advance`].
//! States are cheap to clone, which is how enumeration and beam search
//! explore alternatives without backtracking inside a run.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::language::{Constraint, Judgment, LanguageDef};
use crate::terms::{free_vars_all, sym, Alternative, Renaming, SortKind, Substitution, Sym, Term, Var};
use crate::typecheck::TypeTree;
use crate::unify::{match_terms, unify_lists};

/// One oracle decision.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DecisionToken {
    Rule(Sym),
    Con(Sym),
    Const(Sym),
    Name(Sym),
}

impl DecisionToken {
    pub fn is_rule(&self) -> bool {
        matches!(self, DecisionToken::Rule(_))
    }

    pub fn symbol(&self) -> &Sym {
        match self {
            DecisionToken::Rule(s) | DecisionToken::Con(s) | DecisionToken::Const(s) | DecisionToken::Name(s) => s,
        }
    }
}

impl fmt::Display for DecisionToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DecisionToken::Rule(s) => write!(f, "R:{s}"),
            DecisionToken::Con(s) => write!(f, "C:{s}"),
            DecisionToken::Const(s) => write!(f, "K:{s}"),
            DecisionToken::Name(s) => write!(f, "N:{s}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("malformed decision token {0:?}")]
pub struct TokenParseError(pub String);

impl FromStr for DecisionToken {
    type Err = TokenParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || TokenParseError(s.to_string());
        let (kind, body) = s.split_once(':').ok_or_else(bad)?;
        if body.is_empty() || body.chars().any(char::is_whitespace) {
            return Err(bad());
        }
        let body = sym(body);
        match kind {
            "R" => Ok(DecisionToken::Rule(body)),
            "C" => Ok(DecisionToken::Con(body)),
            "K" => Ok(DecisionToken::Const(body)),
            "N" => Ok(DecisionToken::Name(body)),
            _ => Err(bad()),
        }
    }
}

/// Parses a whitespace-separated token stream.
pub fn parse_tokens(text: &str) -> Result<Vec<DecisionToken>, TokenParseError> {
    text.split_whitespace().map(str::parse).collect()
}

pub fn format_tokens(tokens: &[DecisionToken]) -> String {
    tokens.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(" ")
}

/// Pre-order tokens that rebuild a ground term during acquisition.
pub fn term_tokens(def: &LanguageDef, t: &Term) -> Vec<DecisionToken> {
    let mut out = Vec::new();
    t.walk(&mut |n| match n {
        Term::App { ctor, .. } => out.push(DecisionToken::Con(ctor.clone())),
        Term::Const { name, sort } => match def.signature().kind(sort) {
            Some(SortKind::Inductive) => out.push(DecisionToken::Const(name.clone())),
            _ => out.push(DecisionToken::Name(name.clone())),
        },
        Term::Var(_) => {}
    });
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthConfig {
    /// Rule and term tokens together.
    pub max_tokens: usize,
    /// Maximum number of nested rule applications.
    pub max_depth: usize,
    /// Kill a branch as soon as unification or a constraint fails. When off,
    /// the branch keeps going and is rejected only at the end.
    pub type_pruning: bool,
    /// Count groundness violations at every completed rule application.
    pub check_groundness: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig { max_tokens: 256, max_depth: 64, type_pruning: true, check_groundness: true }
    }
}

impl SynthConfig {
    pub fn with_max_tokens(mut self, n: usize) -> Self {
        self.max_tokens = n;
        self
    }

    pub fn with_type_pruning(mut self, on: bool) -> Self {
        self.type_pruning = on;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FailureSite {
    Unification,
    Acquisition,
    Constraint,
    NoRule,
    Budget,
    Depth,
    IllegalToken,
    OracleExhausted,
    TrailingTokens,
}

impl fmt::Display for FailureSite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            FailureSite::Unification => "unification",
            FailureSite::Acquisition => "acquisition",
            FailureSite::Constraint => "constraint",
            FailureSite::NoRule => "no applicable rule",
            FailureSite::Budget => "token budget",
            FailureSite::Depth => "depth limit",
            FailureSite::IllegalToken => "illegal token",
            FailureSite::OracleExhausted => "oracle exhausted",
            FailureSite::TrailingTokens => "trailing tokens",
        };
        f.write_str(s)
    }
}

/// Why a run produced no tree.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct SynthError {
    pub site: FailureSite,
    /// Index of the offending token, or of the token that was missing.
    pub token_index: usize,
    /// Subgoal indices from the root goal to the failing goal.
    pub path: Vec<usize>,
    pub message: String,
}

impl fmt::Display for SynthError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} failure at token {}", self.site, self.token_index)?;
        if !self.path.is_empty() {
            let p: Vec<String> = self.path.iter().map(|i| i.to_string()).collect();
            write!(f, " (subgoal path {})", p.join("."))?;
        }
        if !self.message.is_empty() {
            write!(f, ": {}", self.message)?;
        }
        Ok(())
    }
}

/// A synthesis derivation tree. `theta` is the result returned for the goal,
/// restricted to the goal's variables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthTree {
    pub goal: Judgment,
    pub rule: Sym,
    pub unifier: Substitution,
    pub acquisition: Substitution,
    pub theta: Substitution,
    pub children: Vec<SynthTree>,
}

impl SynthTree {
    pub fn node_count(&self) -> usize {
        1 + self.children.iter().map(SynthTree::node_count).sum::<usize>()
    }

    /// The goal with its result applied.
    pub fn solved_goal(&self) -> Judgment {
        self.goal.map_terms(|t| self.theta.apply(t))
    }

    pub fn rules(&self) -> Vec<Sym> {
        let mut out = vec![self.rule.clone()];
        for c in &self.children {
            out.extend(c.rules());
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExtractError {
    #[error("root goal {0} is not the root predicate over a single variable")]
    RootShape(Judgment),
    #[error("program {0} is not ground")]
    NotGround(Term),
    #[error("rule {0} is not part of the language")]
    UnknownRule(Sym),
    #[error("node {goal} does not match rule {rule}")]
    Mismatch { goal: Judgment, rule: Sym },
}

/// θ(p) for a tree rooted at `root(p)`.
pub fn extract_program(def: &LanguageDef, tree: &SynthTree) -> Result<Term, ExtractError> {
    let shape_ok = tree.goal.pred == *def.root() && tree.goal.args.len() == 1 && tree.goal.args[0].as_var().is_some();
    if !shape_ok {
        return Err(ExtractError::RootShape(tree.goal.clone()));
    }
    let p = tree.theta.apply(&tree.goal.args[0]);
    if !p.is_ground() {
        return Err(ExtractError::NotGround(p));
    }
    Ok(p)
}

/// Relabels each node with its solved goal. The rule instantiation is
/// recovered by matching the rule's conclusion and premises against the
/// node's and children's judgments.
pub fn synth_to_type_tree(def: &LanguageDef, tree: &SynthTree) -> Result<TypeTree, ExtractError> {
    let judgment = tree.solved_goal();
    let idx = def.rule_index(&tree.rule).ok_or_else(|| ExtractError::UnknownRule(tree.rule.clone()))?;
    let rule = &def.rules()[idx];
    let children = tree.children.iter().map(|c| synth_to_type_tree(def, c)).collect::<Result<Vec<_>, _>>()?;
    let mismatch = || ExtractError::Mismatch { goal: judgment.clone(), rule: tree.rule.clone() };
    if rule.premises.len() != children.len() || rule.conclusion.pred != judgment.pred {
        return Err(mismatch());
    }
    let mut pairs: Vec<(Term, Term)> = rule.conclusion.args.iter().cloned().zip(judgment.args.iter().cloned()).collect();
    for (p, c) in rule.premises.iter().zip(&children) {
        if p.pred != c.judgment.pred {
            return Err(mismatch());
        }
        pairs.extend(p.args.iter().cloned().zip(c.judgment.args.iter().cloned()));
    }
    let instantiation = match_terms(&pairs).map_err(|_| mismatch())?;
    Ok(TypeTree { judgment, rule: tree.rule.clone(), instantiation, children })
}

// Pre-order construction of one ground term.
#[derive(Debug, Clone)]
struct Builder {
    target: Sym,
    stack: Vec<(Sym, Sym, Vec<Sym>, Vec<Term>)>,
    done: Option<Term>,
}

impl Builder {
    fn new(target: Sym) -> Builder {
        Builder { target, stack: Vec::new(), done: None }
    }

    fn expected(&self) -> &Sym {
        match self.stack.last() {
            Some((_, _, params, args)) => &params[args.len()],
            None => &self.target,
        }
    }

    fn open(&mut self, ctor: Sym, sort: Sym, params: Vec<Sym>) {
        self.stack.push((ctor, sort, params, Vec::new()));
    }

    fn leaf(&mut self, mut t: Term) {
        loop {
            match self.stack.last_mut() {
                None => {
                    self.done = Some(t);
                    return;
                }
                Some((_, _, params, args)) => {
                    args.push(t);
                    if args.len() < params.len() {
                        return;
                    }
                }
            }
            let (ctor, sort, _, args) = self.stack.pop().expect("non-empty");
            t = Term::App { ctor, sort, args: args.into() };
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Rule,
    Acquire,
    Subgoal(usize),
}

#[derive(Debug, Clone)]
struct Frame {
    goal: Judgment,
    index_in_parent: usize,
    phase: Phase,
    rule: Option<usize>,
    subgoals: Vec<Judgment>,
    constraints: Vec<Constraint>,
    unifier: Substitution,
    acc: Substitution,
    acq_vars: Vec<Var>,
    acq_next: usize,
    acquisition: Substitution,
    builder: Option<Builder>,
    children: Vec<SynthTree>,
}

impl Frame {
    fn new(goal: Judgment, index_in_parent: usize) -> Frame {
        Frame {
            goal,
            index_in_parent,
            phase: Phase::Rule,
            rule: None,
            subgoals: Vec::new(),
            constraints: Vec::new(),
            unifier: Substitution::new(),
            acc: Substitution::new(),
            acq_vars: Vec::new(),
            acq_next: 0,
            acquisition: Substitution::new(),
            builder: None,
            children: Vec::new(),
        }
    }
}

/// What the state is waiting for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status<'a> {
    AwaitRule,
    AwaitTerm(&'a Sym),
    Done(&'a SynthTree),
    Failed(&'a SynthError),
}

/// Progress of the acquisition step of the innermost goal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AcquisitionView<'a> {
    /// `FV(σ(x_f))` in acquisition order.
    pub vars: &'a [Var],
    /// Index of the variable whose term is being built.
    pub next: usize,
    /// Whether some tokens of that term were already consumed.
    pub in_term: bool,
}

#[derive(Debug, Clone)]
pub struct SynthState<'d> {
    def: &'d LanguageDef,
    config: SynthConfig,
    root: Judgment,
    frames: Vec<Frame>,
    tokens: Vec<DecisionToken>,
    outcome: Option<Result<SynthTree, SynthError>>,
    poison: Option<SynthError>,
    groundness_violations: usize,
}

impl<'d> SynthState<'d> {
    pub fn new(def: &'d LanguageDef, goal: Judgment, config: SynthConfig) -> SynthState<'d> {
        let mut s = SynthState {
            def,
            config,
            root: goal.clone(),
            frames: vec![Frame::new(goal, 0)],
            tokens: Vec::new(),
            outcome: None,
            poison: None,
            groundness_violations: 0,
        };
        s.settle();
        s
    }

    /// A state for the language's root goal `root(?p)`.
    pub fn for_root(def: &'d LanguageDef, config: SynthConfig) -> SynthState<'d> {
        let (goal, _) = def.root_goal();
        SynthState::new(def, goal, config)
    }

    pub fn def(&self) -> &'d LanguageDef {
        self.def
    }

    pub fn config(&self) -> &SynthConfig {
        &self.config
    }

    pub fn root_goal(&self) -> &Judgment {
        &self.root
    }

    pub fn tokens(&self) -> &[DecisionToken] {
        &self.tokens
    }

    pub fn groundness_violations(&self) -> usize {
        self.groundness_violations
    }

    pub fn status(&self) -> Status<'_> {
        match &self.outcome {
            Some(Ok(t)) => Status::Done(t),
            Some(Err(e)) => Status::Failed(e),
            None => {
                let top = self.frames.last().expect("live state has a frame");
                match (&top.phase, &top.builder) {
                    (Phase::Acquire, Some(b)) => Status::AwaitTerm(b.expected()),
                    _ => Status::AwaitRule,
                }
            }
        }
    }

    pub fn is_live(&self) -> bool {
        self.outcome.is_none()
    }

    pub fn result(&self) -> Option<&Result<SynthTree, SynthError>> {
        self.outcome.as_ref()
    }

    pub fn into_result(self) -> Option<Result<SynthTree, SynthError>> {
        self.outcome
    }

    /// Sort of the term position awaiting a token, if any.
    pub fn expected_sort(&self) -> Option<&Sym> {
        match self.status() {
            Status::AwaitTerm(s) => Some(s),
            _ => None,
        }
    }

    /// The innermost open goal with everything known so far applied.
    pub fn current_goal(&self) -> Option<Judgment> {
        if self.outcome.is_some() {
            return None;
        }
        let top = self.frames.last()?;
        Some(top.goal.map_terms(|t| top.acc.apply(t)))
    }

    /// Subgoal indices from the root to the innermost open goal.
    pub fn path(&self) -> Vec<usize> {
        self.frames.iter().skip(1).map(|f| f.index_in_parent).collect()
    }

    pub fn acquisition(&self) -> Option<AcquisitionView<'_>> {
        let top = self.frames.last()?;
        if self.outcome.is_some() || top.phase != Phase::Acquire {
            return None;
        }
        let in_term = top.builder.as_ref().is_some_and(|b| !b.stack.is_empty());
        Some(AcquisitionView { vars: &top.acq_vars, next: top.acq_next, in_term })
    }

    /// Legal next tokens in canonical order: rules by file position, term
    /// symbols by declaration order, atoms by pool order.
    pub fn legal_tokens(&self) -> Vec<DecisionToken> {
        match self.status() {
            Status::AwaitRule => {
                let goal = &self.frames.last().expect("live").goal;
                self.def
                    .rules()
                    .iter()
                    .filter(|r| r.conclusion.pred == goal.pred)
                    .map(|r| DecisionToken::Rule(r.id.clone()))
                    .collect()
            }
            Status::AwaitTerm(sort) => sort_tokens(self.def, sort),
            _ => Vec::new(),
        }
    }

    /// Consumes one token. An illegal token is a fault that ends the run.
    pub fn advance(&mut self, tok: &DecisionToken) -> Result<(), SynthError> {
        if let Some(o) = &self.outcome {
            let e = SynthError {
                site: FailureSite::TrailingTokens,
                token_index: self.tokens.len(),
                path: Vec::new(),
                message: match o {
                    Ok(_) => "run already complete".into(),
                    Err(e) => format!("run already failed: {e}"),
                },
            };
            return Err(e);
        }
        if !self.legal_tokens().contains(tok) {
            let msg = format!("{tok} is not legal here");
            self.tokens.push(tok.clone());
            return Err(self.fail(FailureSite::IllegalToken, self.tokens.len() - 1, msg));
        }
        self.tokens.push(tok.clone());
        match tok {
            DecisionToken::Rule(id) => {
                let idx = self.def.rule_index(id).expect("legal rule");
                self.apply_rule(idx);
            }
            _ => self.apply_term_token(tok),
        }
        if self.outcome.is_none() {
            self.settle();
        }
        match &self.outcome {
            Some(Err(e)) => Err(e.clone()),
            _ => Ok(()),
        }
    }

    /// Ends the run with the given failure (used by drivers, e.g. when the
    /// oracle has no answer).
    pub fn abort(&mut self, site: FailureSite, message: impl Into<String>) -> SynthError {
        let idx = self.tokens.len();
        self.fail(site, idx, message.into())
    }

    fn fail(&mut self, site: FailureSite, token_index: usize, message: String) -> SynthError {
        let e = SynthError { site, token_index, path: self.path(), message };
        self.outcome = Some(Err(e.clone()));
        e
    }

    // Type failure: fatal with pruning, otherwise remembered and reported at the end.
    fn type_failure(&mut self, site: FailureSite, message: String) {
        let idx = self.tokens.len().saturating_sub(1);
        if self.config.type_pruning {
            self.fail(site, idx, message);
        } else if self.poison.is_none() {
            self.poison = Some(SynthError { site, token_index: idx, path: self.path(), message });
        }
    }

    fn apply_rule(&mut self, idx: usize) {
        let def = self.def;
        let rule = &def.rules()[idx];
        let syn = &def.synthesis_rules()[idx];
        let mut renaming = Renaming::new();
        let r = rule.rename_with(&mut renaming);
        let free: Vec<Term> = syn.free_vars.iter().map(|v| Term::var(&renaming[v])).collect();
        let top = self.frames.last_mut().expect("live");
        top.rule = Some(idx);
        top.subgoals = r.premises;
        top.constraints = r.constraints;
        match unify_lists(&top.goal.args, &r.conclusion.args) {
            Ok(s) => {
                top.unifier = s.clone();
                top.acc = s;
            }
            Err(e) => {
                let msg = format!("{} against {}: {e}", top.goal, rule.id);
                top.unifier = Substitution::new();
                top.acc = Substitution::new();
                let acq = free_vars_all(&top.acc.apply_all(&free));
                top.acq_vars = acq;
                top.phase = Phase::Acquire;
                self.type_failure(FailureSite::Unification, msg);
                return;
            }
        }
        top.acq_vars = free_vars_all(&top.acc.apply_all(&free));
        top.acq_next = 0;
        top.phase = Phase::Acquire;
    }

    fn apply_term_token(&mut self, tok: &DecisionToken) {
        let def = self.def;
        let top = self.frames.last_mut().expect("live");
        let b = top.builder.as_mut().expect("awaiting a term");
        let sort = b.expected().clone();
        match tok {
            DecisionToken::Con(c) => {
                let sig = def.signature().ctor(c).expect("legal constructor");
                b.open(c.clone(), sort, sig.params.clone());
            }
            DecisionToken::Const(c) | DecisionToken::Name(c) => b.leaf(Term::Const { name: c.clone(), sort }),
            DecisionToken::Rule(_) => unreachable!("rule tokens are handled separately"),
        }
    }

    // Runs every step that needs no oracle input.
    fn settle(&mut self) {
        loop {
            if self.outcome.is_some() {
                return;
            }
            let max_depth = self.config.max_depth;
            let depth = self.frames.len();
            let top = self.frames.last_mut().expect("live");
            match top.phase {
                Phase::Rule => return self.need_token(),
                Phase::Acquire => {
                    if let Some(b) = &top.builder {
                        let Some(t) = b.done.clone() else { return self.need_token() };
                        let v = top.acq_vars[top.acq_next].clone();
                        top.acquisition.extend_ground(v, t).expect("acquired terms are ground and well-sorted");
                        top.acq_next += 1;
                        top.builder = None;
                        continue;
                    }
                    if top.acq_next < top.acq_vars.len() {
                        let sort = top.acq_vars[top.acq_next].sort().clone();
                        top.builder = Some(Builder::new(sort));
                        return self.need_token();
                    }
                    match top.acquisition.compose(&top.acc) {
                        Ok(acc) => top.acc = acc,
                        Err(e) => {
                            let msg = e.to_string();
                            top.phase = Phase::Subgoal(0);
                            self.type_failure(FailureSite::Acquisition, msg);
                            continue;
                        }
                    }
                    top.phase = Phase::Subgoal(0);
                }
                Phase::Subgoal(i) if i < top.subgoals.len() => {
                    if depth >= max_depth {
                        let idx = self.tokens.len().saturating_sub(1);
                        self.fail(FailureSite::Depth, idx, format!("more than {max_depth} nested goals"));
                        return;
                    }
                    let goal = top.subgoals[i].map_terms(|t| top.acc.apply(t));
                    self.frames.push(Frame::new(goal, i));
                }
                Phase::Subgoal(_) => self.complete_top(),
            }
        }
    }

    fn need_token(&mut self) {
        if self.legal_tokens().is_empty() {
            let site = match self.status() {
                Status::AwaitRule => FailureSite::NoRule,
                _ => FailureSite::Acquisition,
            };
            let goal = self.current_goal().map(|g| g.to_string()).unwrap_or_default();
            let idx = self.tokens.len();
            self.fail(site, idx, format!("nothing can be chosen for {goal}"));
        } else if self.tokens.len() >= self.config.max_tokens {
            let idx = self.tokens.len();
            self.fail(FailureSite::Budget, idx, format!("budget of {} tokens used up", self.config.max_tokens));
        }
    }

    // Constraint check, result restriction, and hand-back to the parent.
    fn complete_top(&mut self) {
        let frame = self.frames.pop().expect("live");
        let def = self.def;
        let clean = self.poison.is_none();
        for c in &frame.constraints {
            let c = c.map_terms(|t| frame.acc.apply(t));
            match def.eval_constraint(&c) {
                Ok(true) => {}
                Ok(false) => {
                    self.frames.push(frame.clone());
                    self.type_failure(FailureSite::Constraint, format!("{c} is false"));
                    self.frames.pop();
                }
                Err(e) => {
                    if clean && self.config.check_groundness {
                        self.groundness_violations += 1;
                    }
                    self.frames.push(frame.clone());
                    self.type_failure(FailureSite::Constraint, e.to_string());
                    self.frames.pop();
                }
            }
            if self.outcome.is_some() {
                return;
            }
        }
        if self.poison.is_none() && self.config.check_groundness {
            let grounded = frame.goal.args.iter().chain(frame.subgoals.iter().flat_map(|s| s.args.iter()));
            if !grounded.map(|t| frame.acc.apply(t)).all(|t| t.is_ground()) {
                self.groundness_violations += 1;
            }
        }
        let goal_vars = free_vars_all(&frame.goal.args);
        let theta = frame.acc.restrict(&goal_vars);
        let rule = def.rules()[frame.rule.expect("rule chosen")].id.clone();
        let index = frame.index_in_parent;
        let node = SynthTree {
            goal: frame.goal,
            rule,
            unifier: frame.unifier,
            acquisition: frame.acquisition,
            theta: theta.clone(),
            children: frame.children,
        };
        match self.frames.last_mut() {
            None => {
                self.outcome = Some(match self.poison.take() {
                    None => Ok(node),
                    Some(e) => Err(e),
                });
            }
            Some(parent) => {
                parent.children.push(node);
                parent.phase = Phase::Subgoal(index + 1);
                match theta.compose(&parent.acc) {
                    Ok(acc) => parent.acc = acc,
                    Err(e) => self.type_failure(FailureSite::Unification, e.to_string()),
                }
            }
        }
    }
}

/// Term tokens of a sort in canonical order.
pub fn sort_tokens(def: &LanguageDef, sort: &str) -> Vec<DecisionToken> {
    let sig = def.signature();
    match sig.sort(sort) {
        None => Vec::new(),
        Some(decl) => match decl.kind {
            SortKind::Text => sig.names().iter().map(|n| DecisionToken::Name(n.clone())).collect(),
            SortKind::Int => sig.ints().iter().map(|n| DecisionToken::Name(n.clone())).collect(),
            SortKind::Inductive => decl
                .alternatives
                .iter()
                .map(|a| match a {
                    Alternative::Constant(c) => DecisionToken::Const(c.clone()),
                    Alternative::Ctor(c) => DecisionToken::Con(c.clone()),
                })
                .collect(),
        },
    }
}

/// What the oracle is asked.
#[derive(Debug, Clone)]
pub struct Query<'a> {
    pub prompt: &'a str,
    pub prefix: &'a [DecisionToken],
    pub goal: Judgment,
    /// `None` for rule selection, the term sort for acquisition.
    pub expected: Option<Sym>,
    pub legal: &'a [DecisionToken],
}

/// Resolves the engine's two kinds of question. Answers outside the legal
/// set are faults; `None` means the oracle has nothing to offer.
pub trait Oracle {
    fn select_rule(&mut self, q: &Query<'_>) -> Option<DecisionToken>;
    fn acquire_token(&mut self, q: &Query<'_>) -> Option<DecisionToken>;
}

/// Plays back a fixed token sequence.
#[derive(Debug, Clone)]
pub struct ReplayOracle {
    tokens: Vec<DecisionToken>,
    cursor: usize,
}

impl ReplayOracle {
    pub fn new(tokens: Vec<DecisionToken>) -> ReplayOracle {
        ReplayOracle { tokens, cursor: 0 }
    }

    pub fn consumed(&self) -> usize {
        self.cursor
    }

    pub fn remaining(&self) -> usize {
        self.tokens.len() - self.cursor
    }

    fn next(&mut self) -> Option<DecisionToken> {
        let t = self.tokens.get(self.cursor).cloned();
        if t.is_some() {
            self.cursor += 1;
        }
        t
    }
}

impl Oracle for ReplayOracle {
    fn select_rule(&mut self, _: &Query<'_>) -> Option<DecisionToken> {
        self.next()
    }

    fn acquire_token(&mut self, _: &Query<'_>) -> Option<DecisionToken> {
        self.next()
    }
}

/// Uniform choice over the legal set from a seeded generator.
#[derive(Debug, Clone)]
pub struct RandomOracle {
    rng: ChaCha8Rng,
}

impl RandomOracle {
    pub fn new(seed: u64) -> RandomOracle {
        RandomOracle { rng: ChaCha8Rng::seed_from_u64(seed) }
    }
}

impl Oracle for RandomOracle {
    fn select_rule(&mut self, q: &Query<'_>) -> Option<DecisionToken> {
        q.legal.choose(&mut self.rng).cloned()
    }

    fn acquire_token(&mut self, q: &Query<'_>) -> Option<DecisionToken> {
        q.legal.choose(&mut self.rng).cloned()
    }
}

/// Odometer over choice indices. Each run follows the current choice
/// vector (defaulting to the first legal token past its end); [`CursorOracle::next_run`]
/// then moves to the next unexplored prefix.
#[derive(Debug, Clone, Default)]
pub struct CursorOracle {
    choices: Vec<usize>,
    sizes: Vec<usize>,
    depth: usize,
}

impl CursorOracle {
    pub fn new() -> CursorOracle {
        CursorOracle::default()
    }

    fn pick(&mut self, legal: &[DecisionToken]) -> Option<DecisionToken> {
        let d = self.depth;
        if d == self.choices.len() {
            self.choices.push(0);
            self.sizes.push(legal.len());
        }
        self.sizes[d] = legal.len();
        self.depth += 1;
        legal.get(self.choices[d]).cloned()
    }

    /// Advances to the next choice vector; false once everything is explored.
    pub fn next_run(&mut self) -> bool {
        self.choices.truncate(self.depth);
        self.sizes.truncate(self.depth);
        self.depth = 0;
        while let Some(last) = self.choices.last_mut() {
            let size = *self.sizes.last().expect("parallel vectors");
            if *last + 1 < size {
                *last += 1;
                return true;
            }
            self.choices.pop();
            self.sizes.pop();
        }
        false
    }
}

impl Oracle for CursorOracle {
    fn select_rule(&mut self, q: &Query<'_>) -> Option<DecisionToken> {
        self.pick(q.legal)
    }

    fn acquire_token(&mut self, q: &Query<'_>) -> Option<DecisionToken> {
        self.pick(q.legal)
    }
}

/// Runs `state` to completion, asking `oracle` at every choice point.
pub fn drive(state: &mut SynthState<'_>, oracle: &mut dyn Oracle, prompt: &str) -> Result<SynthTree, SynthError> {
    loop {
        let (legal, expected) = match state.status() {
            Status::Done(t) => return Ok(t.clone()),
            Status::Failed(e) => return Err(e.clone()),
            Status::AwaitRule => (state.legal_tokens(), None),
            Status::AwaitTerm(s) => (state.legal_tokens(), Some(s.clone())),
        };
        let goal = state.current_goal().expect("live state");
        let q = Query { prompt, prefix: state.tokens(), goal, expected, legal: &legal };
        let choice = if q.expected.is_none() { oracle.select_rule(&q) } else { oracle.acquire_token(&q) };
        match choice {
            None => return Err(state.abort(FailureSite::OracleExhausted, "oracle gave no answer")),
            Some(tok) => {
                let _ = state.advance(&tok);
            }
        }
    }
}

/// One synthesis run for `goal`.
pub fn gen_synth_tree(
    def: &LanguageDef,
    goal: Judgment,
    oracle: &mut dyn Oracle,
    config: &SynthConfig,
) -> Result<SynthTree, SynthError> {
    let mut state = SynthState::new(def, goal, config.clone());
    drive(&mut state, oracle, "")
}

/// Result of a complete run from the root goal.
#[derive(Debug, Clone)]
pub struct SynthRun {
    pub tokens: Vec<DecisionToken>,
    pub result: Result<(SynthTree, Term), SynthError>,
    pub groundness_violations: usize,
}

/// Runs from the root goal and extracts the program.
pub fn synthesize(def: &LanguageDef, oracle: &mut dyn Oracle, config: &SynthConfig, prompt: &str) -> SynthRun {
    let mut state = SynthState::for_root(def, config.clone());
    let result = drive(&mut state, oracle, prompt).map(|tree| {
        let p = extract_program(def, &tree).expect("root goal has root shape");
        (tree, p)
    });
    SynthRun { tokens: state.tokens().to_vec(), result, groundness_violations: state.groundness_violations() }
}

/// All accepting decision sequences within the budget.
#[derive(Debug, Clone, Default)]
pub struct Enumeration {
    pub accepted: Vec<(Vec<DecisionToken>, Term)>,
    /// Number of states reached by consuming a token.
    pub nodes: usize,
    pub groundness_violations: usize,
}

impl Enumeration {
    pub fn programs(&self) -> Vec<Term> {
        self.accepted.iter().map(|(_, p)| p.clone()).collect()
    }
}

/// Exhaustive depth-first search over every choice point from the root
/// goal. Results come in lexicographic order of canonical token positions.
pub fn enumerate_all(def: &LanguageDef, config: &SynthConfig) -> Enumeration {
    let mut out = Enumeration::default();
    let state = SynthState::for_root(def, config.clone());
    if let Some(Ok(tree)) = state.result() {
        let p = extract_program(def, tree).expect("root shape");
        out.accepted.push((Vec::new(), p));
    }
    if state.is_live() {
        dfs(def, &state, &mut out);
    }
    out
}

fn dfs(def: &LanguageDef, state: &SynthState<'_>, out: &mut Enumeration) {
    for tok in state.legal_tokens() {
        let mut next = state.clone();
        out.nodes += 1;
        let _ = next.advance(&tok);
        match next.result() {
            None => dfs(def, &next, out),
            Some(Ok(tree)) => {
                out.groundness_violations += next.groundness_violations();
                let p = extract_program(def, tree).expect("root shape");
                out.accepted.push((next.tokens().to_vec(), p));
            }
            Some(Err(_)) => out.groundness_violations += next.groundness_violations(),
        }
    }
}

/// The same search by restarting runs under a [`CursorOracle`]. Slower;
/// kept as an independent route for cross-checking [`enumerate_all`].
pub fn enumerate_by_restart(def: &LanguageDef, config: &SynthConfig) -> Vec<(Vec<DecisionToken>, Term)> {
    let mut cursor = CursorOracle::new();
    let mut out = Vec::new();
    loop {
        let run = synthesize(def, &mut cursor, config, "");
        if let Ok((_, p)) = run.result {
            out.push((run.tokens, p));
        }
        if !cursor.next_run() {
            return out;
        }
    }
}
