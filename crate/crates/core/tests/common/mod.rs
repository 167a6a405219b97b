//! Random first-order problems over a small signature: sort `T` with
//! constants `a`, `b`, unary `f`, binary `g`.

#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use tyflow::terms::{Substitution, Term, Var};

pub const SORT: &str = "T";

pub fn var(id: u64) -> Var {
    Var::new(id, "v", SORT)
}

pub fn ground(rng: &mut ChaCha8Rng, depth: usize) -> Term {
    term(rng, depth, &[])
}

/// A random term whose variables come from `vars`.
pub fn term(rng: &mut ChaCha8Rng, depth: usize, vars: &[Var]) -> Term {
    let leaf = depth == 0 || rng.gen_bool(0.3);
    if leaf {
        let k = rng.gen_range(0..2 + vars.len());
        return match k {
            0 => Term::constant("a", SORT),
            1 => Term::constant("b", SORT),
            _ => Term::var(&vars[k - 2]),
        };
    }
    if rng.gen_bool(0.5) {
        Term::app("f", SORT, vec![term(rng, depth - 1, vars)])
    } else {
        Term::app("g", SORT, vec![term(rng, depth - 1, vars), term(rng, depth - 1, vars)])
    }
}

/// Replaces random subterms of `t` by variables taken from `next`, recording
/// what each variable stands for.
fn generalize(rng: &mut ChaCha8Rng, t: &Term, next: &mut u64, sol: &mut Vec<(Var, Term)>) -> Term {
    if rng.gen_bool(0.25) {
        let v = var(*next);
        *next += 1;
        sol.push((v.clone(), t.clone()));
        return Term::var(&v);
    }
    match t {
        Term::App { ctor, sort, args } => {
            let args = args.iter().map(|a| generalize(rng, a, next, sol)).collect();
            Term::App { ctor: ctor.clone(), sort: sort.clone(), args }
        }
        _ => t.clone(),
    }
}

/// A solvable problem together with one ground unifier of it.
pub struct Solvable {
    pub pairs: Vec<(Term, Term)>,
    pub vars: Vec<Var>,
    pub solution: Substitution,
}

/// Left sides use variables 0..4 (shared across pairs); right sides are
/// generalizations of the instantiated left sides with variables from 100 on.
pub fn solvable(rng: &mut ChaCha8Rng) -> Solvable {
    let left_vars: Vec<Var> = (0..4).map(var).collect();
    let gamma: Vec<(Var, Term)> = left_vars.iter().map(|v| (v.clone(), ground(rng, 2))).collect();
    let gamma_s = Substitution::from_pairs(gamma.clone()).unwrap();
    let mut next = 100;
    let mut sol = gamma;
    let mut pairs = Vec::new();
    for _ in 0..rng.gen_range(1..=3) {
        let l = term(rng, 3, &left_vars);
        let r = generalize(rng, &gamma_s.apply(&l), &mut next, &mut sol);
        if rng.gen_bool(0.5) {
            pairs.push((l, r));
        } else {
            pairs.push((r, l));
        }
    }
    let vars: Vec<Var> = sol.iter().map(|(v, _)| v.clone()).collect();
    Solvable { pairs, vars, solution: Substitution::from_pairs(sol).unwrap() }
}

/// Expected failure kind of an unsolvable problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Expect {
    Clash,
    Occurs,
}

fn context(rng: &mut ChaCha8Rng, hole: Term, depth: usize, vars: &[Var]) -> Term {
    if depth == 0 {
        return hole;
    }
    let inner = context(rng, hole, depth - 1, vars);
    match rng.gen_range(0..3) {
        0 => Term::app("f", SORT, vec![inner]),
        1 => Term::app("g", SORT, vec![inner, term(rng, 1, vars)]),
        _ => Term::app("g", SORT, vec![term(rng, 1, vars), inner]),
    }
}

/// A solvable prefix over variables 500.. followed by one failing pair: a
/// constructor clash inside a shared context, or `x = C[x]` for a non-empty
/// context `C`.
pub fn unsolvable(rng: &mut ChaCha8Rng) -> (Vec<(Term, Term)>, Expect) {
    let mut pairs: Vec<(Term, Term)> = solvable(rng)
        .pairs
        .into_iter()
        .map(|(l, r)| {
            let shift = |t: &Term| t.map_vars(&mut |v| Term::var(&var(v.id() + 500)));
            (shift(&l), shift(&r))
        })
        .collect();
    let vars: Vec<Var> = (0..3).map(var).collect();
    if rng.gen_bool(0.5) {
        let depth = rng.gen_range(0..3);
        let (p, q) = match rng.gen_range(0..3) {
            0 => (Term::constant("a", SORT), Term::constant("b", SORT)),
            1 => (Term::app("f", SORT, vec![term(rng, 1, &vars)]), Term::constant("a", SORT)),
            _ => (
                Term::app("f", SORT, vec![term(rng, 1, &vars)]),
                Term::app("g", SORT, vec![term(rng, 1, &vars), term(rng, 1, &vars)]),
            ),
        };
        // The same context on both sides: build it once around a marker
        // variable, then plug in each side.
        let marker = var(999);
        let c = context(rng, Term::var(&marker), depth, &vars);
        let plug = |t: &Term| c.map_vars(&mut |v| if *v == marker { t.clone() } else { Term::var(v) });
        let (l, r) = if rng.gen_bool(0.5) { (plug(&p), plug(&q)) } else { (plug(&q), plug(&p)) };
        pairs.push((l, r));
        (pairs, Expect::Clash)
    } else {
        let x = var(rng.gen_range(0..3));
        let depth = rng.gen_range(1..4);
        // Context terms must not mention x, or an earlier clash could not
        // happen but a different occurs check might fire first.
        let others: Vec<Var> = vars.iter().filter(|v| **v != x).cloned().collect();
        let c = context(rng, Term::var(&x), depth, &others);
        if rng.gen_bool(0.5) {
            pairs.push((Term::var(&x), c));
        } else {
            pairs.push((c, Term::var(&x)));
        }
        (pairs, Expect::Occurs)
    }
}

/// Every variable of the problem.
pub fn problem_vars(pairs: &[(Term, Term)]) -> Vec<Var> {
    let mut out = Vec::new();
    for (l, r) in pairs {
        for t in [l, r] {
            for v in tyflow::terms::free_vars(t) {
                if !out.contains(&v) {
                    out.push(v);
                }
            }
        }
    }
    out
}

/// `tau ∘ mgu` for a random `tau` sending the variables left open by the
/// MGU to ground terms.
pub fn instance_of(rng: &mut ChaCha8Rng, mgu: &Substitution, vars: &[Var]) -> Substitution {
    let mut open = Vec::new();
    for v in vars {
        for w in tyflow::terms::free_vars(&mgu.apply(&Term::var(v))) {
            if !open.contains(&w) {
                open.push(w);
            }
        }
    }
    let tau = Substitution::from_pairs(open.into_iter().map(|w| (w, ground(rng, 2)))).unwrap();
    Substitution::from_pairs(vars.iter().map(|v| (v.clone(), tau.apply(&mgu.apply(&Term::var(v)))))).unwrap()
}
