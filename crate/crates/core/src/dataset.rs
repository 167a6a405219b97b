//! Decision sequences from type derivation trees, replay, and the JSON
//! Lines formats for corpora and extracted datasets.

use std::collections::{BTreeMap, VecDeque};
use std::io::{self, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{
    extract_program, format_tokens, parse_tokens, synthesize, term_tokens, DecisionToken, FailureSite, ReplayOracle,
    Status, SynthConfig, SynthError, SynthState, SynthTree,
};
use crate::language::{Diagnostic, Judgment, LanguageDef};
use crate::terms::{Sym, Term, Var, TEXT_SORT};
use crate::typecheck::{check_program, verify_tree, DeriveError, TreeError, TypeTree};
use crate::unify::match_terms;

/// A task: prompt plus expected program in canonical syntax.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub id: String,
    pub prompt: String,
    pub program: String,
}

/// Context and ground-truth decision at one step of a sequence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRecord {
    pub i: usize,
    pub goal: String,
    pub prefix: String,
    pub next: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskRecord {
    pub id: String,
    pub prompt: String,
    pub program: String,
    pub tokens: Vec<String>,
    pub steps: Vec<StepRecord>,
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("invalid derivation tree: {0}")]
    InvalidTree(#[from] TreeError),
    #[error("tree root {0} is not the root predicate")]
    RootShape(Judgment),
    #[error("engine rejected the derived decisions: {0}")]
    Engine(#[from] SynthError),
    #[error("reconstructed {got} instead of {expected}")]
    Mismatch { expected: String, got: String },
    #[error("program does not parse: {0}")]
    Program(Diagnostic),
    #[error("program does not type-check: {0}")]
    Typecheck(#[from] DeriveError),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Output of [`tree_to_decisions`].
#[derive(Debug, Clone)]
pub struct Decisions {
    pub tokens: Vec<DecisionToken>,
    pub steps: Vec<StepRecord>,
    pub synth_tree: SynthTree,
    pub program: Term,
}

/// Prints a judgment with variables renumbered from 0 in order of first
/// occurrence, so records do not depend on the global variable counter.
pub fn renormalize(j: &Judgment) -> String {
    let mut ids: BTreeMap<Var, Var> = BTreeMap::new();
    let renamed = j.map_terms(|t| {
        t.map_vars(&mut |v| {
            let n = ids.len() as u64;
            Term::var(ids.entry(v.clone()).or_insert_with(|| Var::new(n, v.name(), v.sort())))
        })
    });
    renamed.to_string()
}

/// Drives the engine along a type derivation tree: each rule choice is the
/// rule at the corresponding node, and each acquisition emits the pre-order
/// tokens of the values the node's judgment forces on the acquired variables.
pub fn tree_to_decisions(def: &LanguageDef, tree: &TypeTree) -> Result<Decisions, DatasetError> {
    verify_tree(def, tree)?;
    if tree.judgment.pred != *def.root() || tree.judgment.args.len() != 1 {
        return Err(DatasetError::RootShape(tree.judgment.clone()));
    }
    let config = SynthConfig { max_tokens: usize::MAX, max_depth: tree.depth() + 1, ..SynthConfig::default() };
    let mut state = SynthState::for_root(def, config);
    let mut queue: VecDeque<DecisionToken> = VecDeque::new();
    let mut steps = Vec::new();
    loop {
        let tok = match state.status() {
            Status::Done(_) => break,
            Status::Failed(e) => return Err(e.clone().into()),
            Status::AwaitRule => {
                let node = tree.at(&state.path()).expect("engine follows the tree shape");
                DecisionToken::Rule(node.rule.clone())
            }
            Status::AwaitTerm(_) => {
                if queue.is_empty() {
                    let view = state.acquisition().expect("acquiring");
                    debug_assert!(!view.in_term);
                    let goal = state.current_goal().expect("live");
                    let node = tree.at(&state.path()).expect("engine follows the tree shape");
                    let pairs: Vec<(Term, Term)> =
                        goal.args.iter().cloned().zip(node.judgment.args.iter().cloned()).collect();
                    let theta = match_terms(&pairs).map_err(|e| DatasetError::Mismatch {
                        expected: node.judgment.to_string(),
                        got: e.to_string(),
                    })?;
                    for v in &view.vars[view.next..] {
                        let t = theta.get(v).cloned().unwrap_or_else(|| Term::var(v));
                        queue.extend(term_tokens(def, &t));
                    }
                }
                queue.pop_front().expect("acquisition tokens available")
            }
        };
        let goal = state.current_goal().expect("live");
        steps.push(StepRecord {
            i: steps.len(),
            goal: renormalize(&goal),
            prefix: format_tokens(state.tokens()),
            next: tok.to_string(),
        });
        let _ = state.advance(&tok);
    }
    let tokens = state.tokens().to_vec();
    let Some(Ok(synth_tree)) = state.into_result() else { unreachable!("loop exits on success") };
    let program = extract_program(def, &synth_tree).expect("root shape checked");
    if program != tree.judgment.args[0] {
        return Err(DatasetError::Mismatch { expected: tree.judgment.args[0].to_string(), got: program.to_string() });
    }
    Ok(Decisions { tokens, steps, synth_tree, program })
}

/// Rebuilds the program a decision sequence encodes.
pub fn replay(def: &LanguageDef, tokens: &[DecisionToken]) -> Result<Term, SynthError> {
    replay_tree(def, tokens).map(|(_, p)| p)
}

pub fn replay_tree(def: &LanguageDef, tokens: &[DecisionToken]) -> Result<(SynthTree, Term), SynthError> {
    let config = SynthConfig { max_tokens: usize::MAX, max_depth: usize::MAX, ..SynthConfig::default() };
    let mut oracle = ReplayOracle::new(tokens.to_vec());
    let run = synthesize(def, &mut oracle, &config, "");
    let out = run.result?;
    if oracle.remaining() > 0 {
        return Err(SynthError {
            site: FailureSite::TrailingTokens,
            token_index: oracle.consumed(),
            path: Vec::new(),
            message: format!("{} token(s) after the program is complete", oracle.remaining()),
        });
    }
    Ok(out)
}

/// Text atoms occurring in a term.
pub fn text_atoms(t: &Term) -> Vec<Sym> {
    let mut out = Vec::new();
    t.walk(&mut |n| {
        if let Term::Const { name, sort } = n {
            if &**sort == TEXT_SORT && !out.contains(name) {
                out.push(name.clone());
            }
        }
    });
    out
}

/// The language with every text atom of the corpus programs added to its
/// name pool, so that their decision sequences are legal.
pub fn corpus_language(def: &LanguageDef, entries: &[CorpusEntry]) -> LanguageDef {
    let mut atoms = Vec::new();
    for e in entries {
        if let Ok(p) = def.parse_term(&e.program, def.program_sort()) {
            for a in text_atoms(&p) {
                if !atoms.contains(&a) {
                    atoms.push(a);
                }
            }
        }
    }
    def.with_extra_names(&atoms)
}

/// Type-checks a corpus entry and extracts its record.
pub fn extract_record(def: &LanguageDef, entry: &CorpusEntry) -> Result<TaskRecord, DatasetError> {
    let program = def.parse_term(&entry.program, def.program_sort()).map_err(DatasetError::Program)?;
    let tree = check_program(def, &program)?;
    let d = tree_to_decisions(def, &tree)?;
    Ok(TaskRecord {
        id: entry.id.clone(),
        prompt: entry.prompt.clone(),
        program: program.to_string(),
        tokens: d.tokens.iter().map(|t| t.to_string()).collect(),
        steps: d.steps,
    })
}

/// Checks a record against the engine: the tokens replay to the program
/// and each step matches the replayed state.
pub fn validate_record(def: &LanguageDef, rec: &TaskRecord) -> Result<(), String> {
    let tokens = parse_tokens(&rec.tokens.join(" ")).map_err(|e| e.to_string())?;
    let program = replay(def, &tokens).map_err(|e| e.to_string())?;
    if program.to_string() != rec.program {
        return Err(format!("tokens replay to {program}, record says {}", rec.program));
    }
    if rec.steps.len() != tokens.len() {
        return Err(format!("{} steps for {} tokens", rec.steps.len(), tokens.len()));
    }
    let config = SynthConfig { max_tokens: usize::MAX, max_depth: usize::MAX, ..SynthConfig::default() };
    let mut state = SynthState::for_root(def, config);
    for (i, (step, tok)) in rec.steps.iter().zip(&tokens).enumerate() {
        let goal = state.current_goal().map(|g| renormalize(&g)).unwrap_or_default();
        if step.i != i || step.goal != goal || step.prefix != format_tokens(state.tokens()) || step.next != tok.to_string() {
            return Err(format!("step {i} does not match the replayed state (goal {goal})"));
        }
        state.advance(tok).map_err(|e| e.to_string())?;
    }
    Ok(())
}

pub fn write_jsonl<W: Write>(mut w: W, records: &[TaskRecord]) -> io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

fn parse_lines<T: for<'de> Deserialize<'de>>(text: &str) -> Result<Vec<T>, DatasetError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let v = serde_json::from_str(line).map_err(|e| DatasetError::Parse { line: i + 1, message: e.to_string() })?;
        out.push(v);
    }
    Ok(out)
}

pub fn read_jsonl(text: &str) -> Result<Vec<TaskRecord>, DatasetError> {
    parse_lines(text)
}

pub fn parse_corpus(text: &str) -> Result<Vec<CorpusEntry>, DatasetError> {
    parse_lines(text)
}

/// Deterministic shuffle, e.g. for train/test splits.
pub fn shuffle<T>(items: &mut [T], seed: u64) {
    items.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::languages;

    const WORKED: &str = "(app (abs x bool (var x)) true)";

    fn decisions(def: &LanguageDef, program: &str) -> Decisions {
        let p = def.parse_term(program, "Prog").unwrap();
        tree_to_decisions(def, &check_program(def, &p).unwrap()).unwrap()
    }

    #[test]
    fn worked_tree_gives_its_sequence() {
        let def = languages::stlc();
        let d = decisions(&def, WORKED);
        assert_eq!(format_tokens(&d.tokens), "R:T-ROOT R:T-APP R:T-ABS R:T-VAR N:x K:bool N:x K:bool R:T-TRUE");
        assert_eq!(d.steps.len(), 9);
        assert_eq!(d.steps[0].goal, "well_typed(?p.0)");
        assert_eq!(d.steps[1].goal, "typed(empty, ?p.0, ?t.1)");
        assert_eq!(d.steps[8].goal, "typed(empty, ?p2.0, bool)");
        assert_eq!(d.steps[4].prefix, "R:T-ROOT R:T-APP R:T-ABS R:T-VAR");
        assert_eq!(format_tokens(&decisions(&def, "true").tokens), "R:T-ROOT R:T-TRUE");
    }

    #[test]
    fn replay_errors() {
        let def = languages::stlc();
        let e = replay(&def, &parse_tokens("R:T-ROOT R:T-TRUE K:bool").unwrap()).unwrap_err();
        assert_eq!((e.site, e.token_index), (FailureSite::TrailingTokens, 2));
        let e = replay(&def, &parse_tokens("R:T-VAR N:x").unwrap()).unwrap_err();
        assert_eq!((e.site, e.token_index), (FailureSite::IllegalToken, 0));
        let e = replay(&def, &parse_tokens("R:T-ROOT R:T-VAR N:x K:bool").unwrap()).unwrap_err();
        assert_eq!((e.site, e.token_index), (FailureSite::Constraint, 3));
        let e = replay(&def, &parse_tokens("R:T-ROOT R:T-APP").unwrap()).unwrap_err();
        assert_eq!((e.site, e.token_index), (FailureSite::OracleExhausted, 2));
    }

    #[test]
    fn corpus_round_trip_and_records() {
        for name in ["stlc", "stlc-ext"] {
            let entries = languages::corpus(name);
            let def = corpus_language(&languages::builtin(name).unwrap(), &entries);
            let records: Vec<TaskRecord> = entries.iter().map(|e| extract_record(&def, e).unwrap()).collect();
            for r in &records {
                let toks = parse_tokens(&r.tokens.join(" ")).unwrap();
                assert_eq!(replay(&def, &toks).unwrap().to_string(), r.program);
                assert_eq!(validate_record(&def, r), Ok(()));
            }
            let mut buf = Vec::new();
            write_jsonl(&mut buf, &records).unwrap();
            let again = read_jsonl(std::str::from_utf8(&buf).unwrap()).unwrap();
            assert_eq!(again, records);
        }
    }

    #[test]
    fn name_pool_is_extended_from_corpus() {
        let base = languages::stlc();
        let entries = languages::corpus("stlc");
        assert!(!base.signature().names().iter().any(|n| &**n == "flag"));
        let def = corpus_language(&base, &entries);
        assert!(def.signature().names().iter().any(|n| &**n == "flag"));
        let e = entries.iter().find(|e| e.program.contains("flag")).unwrap();
        assert!(extract_record(&base, e).is_err());
        assert!(extract_record(&def, e).is_ok());
    }

    #[test]
    fn inconsistent_record_is_flagged() {
        let def = languages::stlc();
        let entry = CorpusEntry { id: "t".into(), prompt: "p".into(), program: WORKED.into() };
        let mut rec = extract_record(&def, &entry).unwrap();
        rec.tokens[8] = "R:T-FALSE".into();
        let mut buf = Vec::new();
        write_jsonl(&mut buf, std::slice::from_ref(&rec)).unwrap();
        let back = read_jsonl(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert!(validate_record(&def, &back[0]).is_err());
    }

    #[test]
    fn parse_errors_have_lines() {
        let e = read_jsonl("\n{\"id\":1}\n").unwrap_err();
        assert!(matches!(e, DatasetError::Parse { line: 2, .. }));
    }

    #[test]
    fn shuffle_is_seeded() {
        let mut a: Vec<u32> = (0..20).collect();
        let mut b = a.clone();
        shuffle(&mut a, 7);
        shuffle(&mut b, 7);
        assert_eq!(a, b);
        assert_ne!(a, (0..20).collect::<Vec<_>>());
    }
}
