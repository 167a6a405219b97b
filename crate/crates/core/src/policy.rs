//! Scoring policies over legal decision tokens, and beam search.

use std::collections::hash_map::DefaultHasher;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::hash::{Hash, Hasher};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dataset::TaskRecord;
use crate::engine::{extract_program, parse_tokens, DecisionToken, Oracle, Query, Status, SynthConfig, SynthState};
use crate::language::{Judgment, LanguageDef};
use crate::terms::{Sym, Term};

/// What a policy may look at when scoring the next token.
#[derive(Debug, Clone)]
pub struct ScoreContext<'a> {
    pub prompt: &'a str,
    pub prefix: &'a [DecisionToken],
    pub goal: Option<&'a Judgment>,
    /// `None` while selecting a rule.
    pub expected: Option<&'a Sym>,
}

impl ScoreContext<'_> {
    /// Predicate of the goal plus what is expected, e.g. `typed/rule` or
    /// `typed/Type`.
    pub fn head(&self) -> String {
        let pred = self.goal.map(|g| &*g.pred).unwrap_or("-");
        match self.expected {
            None => format!("{pred}/rule"),
            Some(s) => format!("{pred}/{s}"),
        }
    }
}

/// Assigns a finite log-weight to every legal token. Implementations must
/// not mutate shared state while scoring.
pub trait Policy: Sync {
    fn score(&self, ctx: &ScoreContext<'_>, legal: &[DecisionToken]) -> Vec<f64>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Uniform;

impl Policy for Uniform {
    fn score(&self, _: &ScoreContext<'_>, legal: &[DecisionToken]) -> Vec<f64> {
        let w = -(legal.len() as f64).ln();
        vec![w; legal.len()]
    }
}

const BEGIN: &str = "<s>";

/// Token n-gram counts with add-one smoothing over the legal set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NGram {
    n: usize,
    conditioned: bool,
    counts: BTreeMap<Vec<String>, u64>,
}

#[derive(Debug, Error)]
pub enum NGramError {
    #[error("order must be at least 1")]
    Order,
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("record {id}: {message}")]
    Record { id: String, message: String },
}

impl NGram {
    pub fn order(&self) -> usize {
        self.n
    }

    pub fn is_conditioned(&self) -> bool {
        self.conditioned
    }

    pub fn count(&self, key: &[&str]) -> u64 {
        let key: Vec<String> = key.iter().map(|s| s.to_string()).collect();
        self.counts.get(&key).copied().unwrap_or(0)
    }

    /// Counts n-grams over each record's tokens, padded with begin markers.
    pub fn train(records: &[TaskRecord], n: usize) -> Result<NGram, NGramError> {
        if n == 0 {
            return Err(NGramError::Order);
        }
        let mut m = NGram { n, conditioned: false, counts: BTreeMap::new() };
        for r in records {
            let mut hist: Vec<String> = vec![BEGIN.to_string(); n - 1];
            for t in &r.tokens {
                hist.push(t.clone());
                *m.counts.entry(hist[hist.len() - n..].to_vec()).or_default() += 1;
            }
        }
        Ok(m)
    }

    /// Like [`NGram::train`], with the goal head prepended to every key.
    /// Records are replayed to recover the goals.
    pub fn train_conditioned(def: &LanguageDef, records: &[TaskRecord], n: usize) -> Result<NGram, NGramError> {
        if n == 0 {
            return Err(NGramError::Order);
        }
        let mut m = NGram { n, conditioned: true, counts: BTreeMap::new() };
        for r in records {
            let bad = |message: String| NGramError::Record { id: r.id.clone(), message };
            let tokens = parse_tokens(&r.tokens.join(" ")).map_err(|e| bad(e.to_string()))?;
            let config = SynthConfig { max_tokens: usize::MAX, max_depth: usize::MAX, ..SynthConfig::default() };
            let mut state = SynthState::for_root(def, config);
            for tok in &tokens {
                let goal = state.current_goal();
                let ctx = ScoreContext { prompt: "", prefix: state.tokens(), goal: goal.as_ref(), expected: state.expected_sort() };
                let key = m.key(&ctx, &tok.to_string());
                *m.counts.entry(key).or_default() += 1;
                state.advance(tok).map_err(|e| bad(e.to_string()))?;
            }
        }
        Ok(m)
    }

    fn key(&self, ctx: &ScoreContext<'_>, tok: &str) -> Vec<String> {
        let mut key = Vec::with_capacity(self.n + 1);
        if self.conditioned {
            key.push(format!("@{}", ctx.head()));
        }
        let h = self.n - 1;
        let have = ctx.prefix.len().min(h);
        for _ in have..h {
            key.push(BEGIN.to_string());
        }
        for t in &ctx.prefix[ctx.prefix.len() - have..] {
            key.push(t.to_string());
        }
        key.push(tok.to_string());
        key
    }

    /// Count file: a header line, then `<tokens> <count>` per n-gram.
    pub fn to_text(&self) -> String {
        let mut out = format!("# ngram order={} conditioned={}\n", self.n, self.conditioned);
        for (k, c) in &self.counts {
            let _ = writeln!(out, "{} {c}", k.join(" "));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<NGram, NGramError> {
        let mut lines = text.lines().enumerate();
        let header_err = |m: &str| NGramError::Format { line: 1, message: m.to_string() };
        let (_, header) = lines.next().ok_or_else(|| header_err("missing header"))?;
        let mut n = None;
        let mut conditioned = None;
        for field in header.trim_start_matches('#').split_whitespace() {
            match field.split_once('=') {
                Some(("order", v)) => n = v.parse::<usize>().ok(),
                Some(("conditioned", v)) => conditioned = v.parse::<bool>().ok(),
                _ => {}
            }
        }
        let n = n.filter(|n| *n >= 1).ok_or_else(|| header_err("header must give order=N"))?;
        let conditioned = conditioned.unwrap_or(false);
        let width = n + usize::from(conditioned);
        let mut counts = BTreeMap::new();
        for (i, line) in lines {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |m: String| NGramError::Format { line: i + 1, message: m };
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != width + 1 {
                return Err(err(format!("expected {width} tokens and a count")));
            }
            let c: u64 = parts[width].parse().map_err(|_| err(format!("bad count {:?}", parts[width])))?;
            counts.insert(parts[..width].iter().map(|s| s.to_string()).collect(), c);
        }
        Ok(NGram { n, conditioned, counts })
    }
}

impl Policy for NGram {
    fn score(&self, ctx: &ScoreContext<'_>, legal: &[DecisionToken]) -> Vec<f64> {
        let counts: Vec<u64> = legal
            .iter()
            .map(|t| self.counts.get(&self.key(ctx, &t.to_string())).copied().unwrap_or(0))
            .collect();
        let total = counts.iter().sum::<u64>() as f64 + legal.len() as f64;
        counts.iter().map(|c| ((*c as f64 + 1.0) / total).ln()).collect()
    }
}

/// Pseudo-random but reproducible weights: a function of the seed, the
/// prefix, and the legal set.
#[derive(Debug, Clone, Copy)]
pub struct SeededRandom {
    pub seed: u64,
}

impl Policy for SeededRandom {
    fn score(&self, ctx: &ScoreContext<'_>, legal: &[DecisionToken]) -> Vec<f64> {
        let mut h = DefaultHasher::new();
        self.seed.hash(&mut h);
        ctx.prefix.hash(&mut h);
        legal.hash(&mut h);
        let mut rng = ChaCha8Rng::seed_from_u64(h.finish());
        let raw: Vec<f64> = legal.iter().map(|_| rng.gen_range(0.05..1.0)).collect();
        let total: f64 = raw.iter().sum();
        raw.iter().map(|w| (w / total).ln()).collect()
    }
}

/// Greedy oracle over a policy: the best-scoring legal token, earliest on ties.
pub struct PolicyOracle<'p> {
    pub policy: &'p dyn Policy,
}

impl PolicyOracle<'_> {
    fn best(&self, q: &Query<'_>) -> Option<DecisionToken> {
        let ctx = ScoreContext { prompt: q.prompt, prefix: q.prefix, goal: Some(&q.goal), expected: q.expected.as_ref() };
        let scores = self.policy.score(&ctx, q.legal);
        let mut best: Option<(usize, f64)> = None;
        for (i, s) in scores.iter().enumerate() {
            if best.is_none_or(|(_, b)| *s > b) {
                best = Some((i, *s));
            }
        }
        best.map(|(i, _)| q.legal[i].clone())
    }
}

impl Oracle for PolicyOracle<'_> {
    fn select_rule(&mut self, q: &Query<'_>) -> Option<DecisionToken> {
        self.best(q)
    }

    fn acquire_token(&mut self, q: &Query<'_>) -> Option<DecisionToken> {
        self.best(q)
    }
}

#[derive(Debug, Clone)]
pub struct BeamConfig {
    pub k: usize,
    pub synth: SynthConfig,
    /// Let the next-best expansions take the slots of pruned ones.
    pub refill: bool,
}

impl BeamConfig {
    pub fn new(k: usize, max_tokens: usize) -> BeamConfig {
        BeamConfig { k, synth: SynthConfig::default().with_max_tokens(max_tokens), refill: true }
    }
}

/// A completed beam candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub program: Term,
    pub log_weight: f64,
    pub tokens: Vec<DecisionToken>,
    /// Position of each token in its legal set; the tie-break key.
    pub ranks: Vec<usize>,
}

/// Work counters of a beam search.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BeamStats {
    pub steps: usize,
    pub expansions: usize,
    pub pruned: usize,
    pub groundness_violations: usize,
}

struct Branch<'d> {
    state: SynthState<'d>,
    log_weight: f64,
    ranks: Vec<usize>,
}

fn better(a: (f64, &[usize]), b: (f64, &[usize])) -> std::cmp::Ordering {
    b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal).then_with(|| a.1.cmp(b.1))
}

/// Token-synchronous beam search from the root goal.
///
/// Each step expands every live branch over its legal tokens and walks the
/// expansions best-first (higher cumulative weight, then lexicographically
/// smaller rank vector). The first `k` expansions that survive the engine
/// are kept; those that complete the program leave the beam for the output.
/// Without `refill`, pruned expansions still use up their slot.
pub fn beam_search(
    def: &LanguageDef,
    policy: &dyn Policy,
    prompt: &str,
    config: &BeamConfig,
) -> (Vec<Candidate>, BeamStats) {
    let mut stats = BeamStats::default();
    let mut out: Vec<Candidate> = Vec::new();
    let root = SynthState::for_root(def, config.synth.clone());
    let mut beam = vec![Branch { state: root, log_weight: 0.0, ranks: Vec::new() }];
    let k = config.k.max(1);
    while !beam.is_empty() {
        stats.steps += 1;
        let mut expansions: Vec<(usize, DecisionToken, usize, f64, Vec<usize>)> = Vec::new();
        for (bi, b) in beam.iter().enumerate() {
            let legal = b.state.legal_tokens();
            let goal = b.state.current_goal();
            let ctx = ScoreContext {
                prompt,
                prefix: b.state.tokens(),
                goal: goal.as_ref(),
                expected: b.state.expected_sort(),
            };
            let scores = policy.score(&ctx, &legal);
            for (rank, (tok, s)) in legal.into_iter().zip(scores).enumerate() {
                let mut ranks = b.ranks.clone();
                ranks.push(rank);
                expansions.push((bi, tok, rank, b.log_weight + s, ranks));
            }
        }
        expansions.sort_by(|a, b| better((a.3, &a.4), (b.3, &b.4)));
        let mut next = Vec::new();
        let mut taken = 0;
        for (bi, tok, _, w, ranks) in expansions {
            if taken >= k {
                break;
            }
            let mut state = beam[bi].state.clone();
            stats.expansions += 1;
            let _ = state.advance(&tok);
            match state.status() {
                Status::Failed(_) => {
                    stats.groundness_violations += state.groundness_violations();
                    stats.pruned += 1;
                    if !config.refill {
                        taken += 1;
                    }
                }
                Status::Done(tree) => {
                    stats.groundness_violations += state.groundness_violations();
                    let program = extract_program(def, tree).expect("root shape");
                    out.push(Candidate { program, log_weight: w, tokens: state.tokens().to_vec(), ranks });
                    taken += 1;
                }
                _ => {
                    next.push(Branch { state, log_weight: w, ranks });
                    taken += 1;
                }
            }
        }
        beam = next;
    }
    out.sort_by(|a, b| better((a.log_weight, &a.ranks), (b.log_weight, &b.ranks)));
    (out, stats)
}

/// Sum of the policy's log-weights along a fixed token sequence, computed by
/// stepping the engine. `None` if the sequence is not accepted.
pub fn sequence_weight(def: &LanguageDef, policy: &dyn Policy, prompt: &str, tokens: &[DecisionToken]) -> Option<f64> {
    let config = SynthConfig { max_tokens: usize::MAX, max_depth: usize::MAX, ..SynthConfig::default() };
    let mut state = SynthState::for_root(def, config);
    let mut total = 0.0;
    for tok in tokens {
        let legal = state.legal_tokens();
        let i = legal.iter().position(|t| t == tok)?;
        let goal = state.current_goal();
        let ctx = ScoreContext { prompt, prefix: state.tokens(), goal: goal.as_ref(), expected: state.expected_sort() };
        total += policy.score(&ctx, &legal)[i];
        state.advance(tok).ok()?;
    }
    matches!(state.status(), Status::Done(_)).then_some(total)
}
