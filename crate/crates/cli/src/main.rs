use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use tyflow::dataset::{self, corpus_language, extract_record, CorpusEntry, TaskRecord};
use tyflow::engine::{enumerate_all, format_tokens, parse_tokens, synthesize, RandomOracle, SynthConfig};
use tyflow::language::{parse_language, LanguageDef};
use tyflow::languages;
use tyflow::policy::{beam_search, sequence_weight, BeamConfig, NGram, Policy, SeededRandom, Uniform};
use tyflow::typecheck::check_program;

#[derive(Parser)]
#[command(name = "tyflow", version, about = "Type-guided program synthesis over rule-defined languages")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Type-check a program against the root predicate.
    Check {
        #[arg(long)]
        lang: String,
        #[arg(long, conflicts_with = "file", required_unless_present = "file")]
        program: Option<String>,
        #[arg(long)]
        file: Option<PathBuf>,
        /// Print the derivation tree.
        #[arg(long)]
        tree: bool,
    },
    /// Print the synthesis rules derived from the typing rules.
    TranslateRules {
        #[arg(long)]
        lang: String,
    },
    /// Turn a corpus into decision-sequence records.
    Extract {
        #[arg(long)]
        lang: String,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(short = 'o', long = "out")]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Rebuild a program from a decision sequence.
    Replay {
        #[arg(long)]
        lang: String,
        /// File with whitespace-separated tokens.
        #[arg(long)]
        tokens: PathBuf,
        /// Extra text atoms for the name pool, comma separated.
        #[arg(long, value_delimiter = ',')]
        names: Vec<String>,
    },
    /// Count n-grams of a corpus's decision sequences into a model file.
    Train {
        #[arg(long)]
        lang: String,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = 2)]
        order: usize,
        /// Prefix every key with the goal head.
        #[arg(long)]
        conditioned: bool,
        #[arg(short = 'o', long = "out")]
        out: Option<PathBuf>,
    },
    /// Synthesize programs with beam search (or random sampling).
    Synth {
        #[arg(long)]
        lang: String,
        #[arg(long, default_value = "")]
        prompt: String,
        /// uniform, random, or ngram:MODEL
        #[arg(long, default_value = "uniform")]
        policy: String,
        #[arg(long, default_value_t = 4)]
        beam: usize,
        #[arg(long, default_value_t = 64)]
        max_tokens: usize,
        #[arg(long, env = "TYFLOW_SEED", default_value_t = 0)]
        seed: u64,
        /// Draw this many programs by uniform random decisions instead of
        /// running beam search.
        #[arg(long)]
        sample: Option<usize>,
        #[arg(long)]
        no_refill: bool,
        #[arg(short = 'o', long = "out")]
        out: Option<PathBuf>,
    },
    /// List every program reachable within a token budget.
    Enumerate {
        #[arg(long)]
        lang: String,
        #[arg(long)]
        max_tokens: usize,
        /// Replace the text name pool, comma separated.
        #[arg(long, value_delimiter = ',')]
        names: Option<Vec<String>>,
        #[arg(long)]
        no_type_pruning: bool,
    },
    /// Check, extract and replay every corpus entry.
    Roundtrip {
        #[arg(long)]
        lang: String,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
}

enum Fail {
    Usage(String),
    Domain(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Fail {
    fn from(e: E) -> Self {
        Fail::Domain(e.into())
    }
}

type Res<T = ()> = Result<T, Fail>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Fail::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Fail::Domain(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

/// A path to a definition file, or the name of a bundled language.
fn load_lang(spec: &str) -> Res<LanguageDef> {
    let path = Path::new(spec);
    if path.is_file() {
        let text = fs::read_to_string(path)?;
        return parse_language(&text).map_err(|d| Fail::Domain(anyhow!("{}:\n{d}", path.display())));
    }
    languages::builtin(spec).ok_or_else(|| {
        Fail::Usage(format!("{spec} is neither a file nor a bundled language ({})", languages::BUILTIN_NAMES.join(", ")))
    })
}

fn read_input(path: &Path) -> Res<String> {
    fs::read_to_string(path).map_err(|e| Fail::Usage(format!("cannot read {}: {e}", path.display())))
}

fn read_corpus(path: &Path) -> Res<Vec<CorpusEntry>> {
    let text = read_input(path)?;
    dataset::parse_corpus(&text).with_context(|| path.display().to_string()).map_err(Fail::Domain)
}

fn output(path: Option<&Path>) -> Res<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(io::BufWriter::new(fs::File::create(p).with_context(|| p.display().to_string())?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn pool(jobs: usize) -> Res<rayon::ThreadPool> {
    if jobs == 0 {
        return Err(Fail::Usage("--jobs must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new().num_threads(jobs).build().map_err(|e| Fail::Domain(e.into()))
}

fn run(cmd: Cmd) -> Res {
    match cmd {
        Cmd::Check { lang, program, file, tree } => {
            let def = load_lang(&lang)?;
            let text = match (program, file) {
                (Some(p), _) => p,
                (None, Some(f)) => read_input(&f)?,
                (None, None) => unreachable!("clap requires one of them"),
            };
            let p = def.parse_term(text.trim(), def.program_sort()).map_err(|d| anyhow!("{d}"))?;
            let t = check_program(&def, &p)?;
            if tree {
                print!("{}", t.pretty(&def));
            } else {
                let line = serde_json::json!({ "program": p.to_string(), "well_typed": true, "nodes": t.node_count() });
                println!("{line}");
            }
            Ok(())
        }
        Cmd::TranslateRules { lang } => {
            let def = load_lang(&lang)?;
            let texts: Vec<String> = def.synthesis_rules().iter().map(|r| r.to_string()).collect();
            println!("{}", texts.join("\n\n"));
            Ok(())
        }
        Cmd::Extract { lang, corpus, out, jobs } => {
            let base = load_lang(&lang)?;
            let entries = read_corpus(&corpus)?;
            let def = corpus_language(&base, &entries);
            let results: Vec<_> =
                pool(jobs)?.install(|| entries.par_iter().map(|e| extract_record(&def, e)).collect());
            let mut records = Vec::new();
            for (e, r) in entries.iter().zip(results) {
                records.push(r.with_context(|| format!("entry {}", e.id))?);
            }
            let mut w = output(out.as_deref())?;
            dataset::write_jsonl(&mut w, &records)?;
            w.flush()?;
            Ok(())
        }
        Cmd::Replay { lang, tokens, names } => {
            let def = load_lang(&lang)?;
            let extra: Vec<_> = names.iter().map(|n| tyflow::terms::sym(n)).collect();
            let def = def.with_extra_names(&extra);
            let toks = parse_tokens(&read_input(&tokens)?).map_err(|e| anyhow!("{e}"))?;
            match dataset::replay(&def, &toks) {
                Ok(p) => {
                    println!("{p}");
                    Ok(())
                }
                Err(e) => Err(Fail::Domain(anyhow!("token {}: {e}", e.token_index))),
            }
        }
        Cmd::Train { lang, corpus, order, conditioned, out } => {
            let base = load_lang(&lang)?;
            let entries = read_corpus(&corpus)?;
            let def = corpus_language(&base, &entries);
            let records = entries
                .iter()
                .map(|e| extract_record(&def, e).with_context(|| format!("entry {}", e.id)))
                .collect::<anyhow::Result<Vec<TaskRecord>>>()?;
            let model = if conditioned {
                NGram::train_conditioned(&def, &records, order)
            } else {
                NGram::train(&records, order)
            }
            .map_err(|e| Fail::Usage(e.to_string()))?;
            let mut w = output(out.as_deref())?;
            w.write_all(model.to_text().as_bytes())?;
            w.flush()?;
            Ok(())
        }
        Cmd::Synth { lang, prompt, policy, beam, max_tokens, seed, sample, no_refill, out } => {
            let def = load_lang(&lang)?;
            synth(&def, &prompt, &policy, beam, max_tokens, seed, sample, !no_refill, out.as_deref())
        }
        Cmd::Enumerate { lang, max_tokens, names, no_type_pruning } => {
            let mut def = load_lang(&lang)?;
            if let Some(names) = names {
                let names: Vec<&str> = names.iter().map(String::as_str).collect();
                def = def.with_names(&names);
            }
            let config = SynthConfig::default().with_max_tokens(max_tokens).with_type_pruning(!no_type_pruning);
            let e = enumerate_all(&def, &config);
            let mut w = io::stdout().lock();
            for (toks, p) in &e.accepted {
                writeln!(w, "{}", serde_json::json!({ "program": p.to_string(), "tokens": format_tokens(toks) }))?;
            }
            writeln!(w, "{}", serde_json::json!({ "count": e.accepted.len(), "nodes": e.nodes }))?;
            Ok(())
        }
        Cmd::Roundtrip { lang, corpus, jobs } => {
            let base = load_lang(&lang)?;
            let entries = read_corpus(&corpus)?;
            let def = corpus_language(&base, &entries);
            let rows: Vec<Result<(), (&str, String)>> =
                pool(jobs)?.install(|| entries.par_iter().map(|e| roundtrip_one(&def, e)).collect());
            let width = entries.iter().map(|e| e.id.len()).max().unwrap_or(0);
            let mut failed = 0;
            for (e, row) in entries.iter().zip(&rows) {
                match row {
                    Ok(()) => println!("{:width$}  pass", e.id),
                    Err((stage, msg)) => {
                        failed += 1;
                        println!("{:width$}  FAIL  {stage}: {msg}", e.id);
                    }
                }
            }
            println!("{}/{} passed", rows.len() - failed, rows.len());
            if failed > 0 {
                return Err(Fail::Domain(anyhow!("{failed} entr{} failed", if failed == 1 { "y" } else { "ies" })));
            }
            Ok(())
        }
    }
}

fn roundtrip_one(def: &LanguageDef, e: &CorpusEntry) -> Result<(), (&'static str, String)> {
    let p = def.parse_term(&e.program, def.program_sort()).map_err(|d| ("parse", d.to_string()))?;
    let tree = check_program(def, &p).map_err(|err| ("check", err.to_string()))?;
    let d = dataset::tree_to_decisions(def, &tree).map_err(|err| ("extract", err.to_string()))?;
    let back = dataset::replay(def, &d.tokens).map_err(|err| ("replay", err.to_string()))?;
    let text = back.to_string();
    if text != e.program {
        return Err(("compare", format!("got {text}")));
    }
    Ok(())
}

#[derive(Serialize)]
struct CandidateLine<'a> {
    rank: usize,
    program: String,
    weight: f64,
    well_typed: bool,
    token_count: usize,
    tokens: &'a str,
}

#[derive(Serialize)]
struct Summary {
    candidates: usize,
    elapsed_ms: u128,
    seed: u64,
}

#[allow(clippy::too_many_arguments)]
fn synth(
    def: &LanguageDef,
    prompt: &str,
    policy: &str,
    k: usize,
    max_tokens: usize,
    seed: u64,
    sample: Option<usize>,
    refill: bool,
    out: Option<&Path>,
) -> Res {
    let start = Instant::now();
    let mut found: Vec<(tyflow::Term, f64, Vec<tyflow::DecisionToken>)> = Vec::new();
    if let Some(n) = sample {
        if policy != "uniform" {
            return Err(Fail::Usage("--sample draws uniformly; drop --policy".into()));
        }
        let config = SynthConfig::default().with_max_tokens(max_tokens);
        for i in 0..n as u64 {
            let mut oracle = RandomOracle::new(seed.wrapping_add(i));
            let run = synthesize(def, &mut oracle, &config, prompt);
            if let Ok((_, p)) = run.result {
                let w = sequence_weight(def, &Uniform, prompt, &run.tokens).expect("accepted sequence");
                found.push((p, w, run.tokens));
            }
        }
    } else {
        if k == 0 {
            return Err(Fail::Usage("--beam must be at least 1".into()));
        }
        let scorer: Box<dyn Policy> = match policy {
            "uniform" => Box::new(Uniform),
            "random" => Box::new(SeededRandom { seed }),
            p if p.starts_with("ngram:") => {
                let path = Path::new(&p["ngram:".len()..]);
                let text = read_input(path)?;
                Box::new(NGram::from_text(&text).with_context(|| path.display().to_string())?)
            }
            other => return Err(Fail::Usage(format!("unknown policy {other}"))),
        };
        let mut config = BeamConfig::new(k, max_tokens);
        config.refill = refill;
        let (cands, _) = beam_search(def, scorer.as_ref(), prompt, &config);
        found.extend(cands.into_iter().map(|c| (c.program, c.log_weight, c.tokens)));
    }
    let mut w = output(out)?;
    for (i, (p, weight, toks)) in found.iter().enumerate() {
        let line = CandidateLine {
            rank: i + 1,
            program: p.to_string(),
            weight: *weight,
            well_typed: check_program(def, p).is_ok(),
            token_count: toks.len(),
            tokens: &format_tokens(toks),
        };
        writeln!(w, "{}", serde_json::to_string(&line)?)?;
    }
    let summary = Summary { candidates: found.len(), elapsed_ms: start.elapsed().as_millis(), seed };
    writeln!(w, "{}", serde_json::to_string(&summary)?)?;
    w.flush()?;
    if found.is_empty() {
        return Err(Fail::Domain(anyhow!("no candidate completed within {max_tokens} tokens")));
    }
    Ok(())
}
