//! Typing rule to synthesis rule translation and its inverse.

use std::collections::BTreeSet;
use std::fmt;

use crate::language::{fmt_rule_term, Constraint, Judgment, TypingRule};
use crate::terms::{free_vars_all, Sym, Term, Var};

/// A typing rule read as a synthesis procedure.
///
/// The goal `pred(s0, .., sn)` is unified against `pattern`; the `free_vars`
/// cannot be reached from any premise and are acquired from the oracle; the
/// premises become subgoals solved left to right; the constraints run last.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SynthesisRule {
    pub id: Sym,
    pub source_id: Sym,
    pub predicate: Sym,
    /// One placeholder per conclusion argument, standing for the goal.
    pub conclusion_vars: Vec<Var>,
    pub pattern: Vec<Term>,
    pub free_vars: Vec<Var>,
    pub subgoals: Vec<Judgment>,
    pub constraints: Vec<Constraint>,
}

/// `T-NAME` becomes `S-NAME`; other ids get an `S-` prefix.
pub fn synthesis_id(typing_id: &str) -> String {
    match typing_id.strip_prefix("T-") {
        Some(rest) => format!("S-{rest}"),
        None => format!("S-{typing_id}"),
    }
}

/// Variables of the conclusion that occur in no premise, in pre-order of
/// first occurrence.
pub fn conclusion_only_vars(conclusion: &[Term], premises: &[Judgment]) -> Vec<Var> {
    let reachable: BTreeSet<Var> = free_vars_all(premises.iter().flat_map(|p| p.args.iter())).into_iter().collect();
    free_vars_all(conclusion).into_iter().filter(|v| !reachable.contains(v)).collect()
}

pub fn to_synthesis_rule(r: &TypingRule) -> SynthesisRule {
    let conclusion_vars = r.conclusion.args.iter().enumerate().map(|(i, a)| Var::slot(i, a.sort())).collect();
    SynthesisRule {
        id: crate::terms::sym(&synthesis_id(&r.id)),
        source_id: r.id.clone(),
        predicate: r.conclusion.pred.clone(),
        conclusion_vars,
        pattern: r.conclusion.args.clone(),
        free_vars: conclusion_only_vars(&r.conclusion.args, &r.premises),
        subgoals: r.premises.clone(),
        constraints: r.constraints.clone(),
    }
}

pub fn to_typing_rule(s: &SynthesisRule) -> TypingRule {
    TypingRule {
        id: s.source_id.clone(),
        premises: s.subgoals.clone(),
        constraints: s.constraints.clone(),
        conclusion: Judgment { pred: s.predicate.clone(), args: s.pattern.clone() },
    }
}

fn join<T>(items: &[T], sep: &str, f: impl Fn(&T) -> String) -> String {
    items.iter().map(f).collect::<Vec<_>>().join(sep)
}

fn judgment(j: &Judgment) -> String {
    format!("{}({})", j.pred, join(&j.args, ", ", fmt_rule_term))
}

impl fmt::Display for SynthesisRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let slots = join(&self.conclusion_vars, ", ", |v| v.name().to_string());
        writeln!(f, "{} (from {})", self.id, self.source_id)?;
        writeln!(f, "  goal        {}({slots})", self.predicate)?;
        let eqs: Vec<String> = self
            .conclusion_vars
            .iter()
            .zip(&self.pattern)
            .map(|(v, p)| format!("{} = {}", v.name(), fmt_rule_term(p)))
            .collect();
        writeln!(f, "  unify       {}", eqs.join(", "))?;
        writeln!(f, "  acquire     [{}]", join(&self.free_vars, ", ", |v| v.name().to_string()))?;
        if self.subgoals.is_empty() {
            writeln!(f, "  subgoals    none")?;
        } else {
            for (i, s) in self.subgoals.iter().enumerate() {
                writeln!(f, "  subgoal {}   {}", i + 1, judgment(s))?;
            }
        }
        if self.constraints.is_empty() {
            writeln!(f, "  constraint  true")?;
        } else {
            let cs = join(&self.constraints, ", ", |c| format!("{}({})", c.name, join(&c.args, ", ", fmt_rule_term)));
            writeln!(f, "  constraint  {cs}")?;
        }
        write!(f, "  result      restricted to FV({slots})")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::languages;

    fn names(vs: &[Var]) -> Vec<&str> {
        vs.iter().map(|v| &**v.name()).collect()
    }

    #[test]
    fn stlc_free_vars() {
        let def = languages::stlc();
        let get = |id: &str| def.synthesis_rules()[def.rule_index(id).unwrap()].clone();
        assert!(get("T-APP").free_vars.is_empty());
        assert!(get("T-ABS").free_vars.is_empty());
        assert_eq!(names(&get("T-VAR").free_vars), ["G", "x", "t"]);
        assert_eq!(names(&get("T-TRUE").free_vars), ["G"]);
        assert!(get("T-ROOT").free_vars.is_empty());
        assert_eq!(&*get("T-APP").id, "S-APP");
    }

    #[test]
    fn example_rule_acquires_x0() {
        let def = languages::example_rule1();
        let s = &def.synthesis_rules()[def.rule_index("T-Rule1").unwrap()];
        assert_eq!(&*s.id, "S-Rule1");
        assert_eq!(names(&s.free_vars), ["x0"]);
        assert_eq!(s.subgoals.len(), 2);
        assert_eq!(s.to_string().lines().nth(3).unwrap().trim(), "acquire     [x0]");
    }

    #[test]
    fn bijection_on_bundled_rules() {
        for def in [languages::stlc(), languages::stlc_ext(), languages::example_rule1()] {
            for (r, s) in def.rules().iter().zip(def.synthesis_rules()) {
                assert_eq!(&to_typing_rule(s), r);
                assert_eq!(&to_synthesis_rule(&to_typing_rule(s)), s);
                let reachable: BTreeSet<Var> = free_vars_all(s.subgoals.iter().flat_map(|j| j.args.iter())).into_iter().collect();
                assert!(s.free_vars.iter().all(|v| !reachable.contains(v)));
            }
        }
    }

    #[test]
    fn layout_is_stable() {
        let def = languages::stlc();
        let s = &def.synthesis_rules()[def.rule_index("T-APP").unwrap()];
        let expected = "\
S-APP (from T-APP)
  goal        typed(s0, s1, s2)
  unify       s0 = G, s1 = app(p1, p2), s2 = t2
  acquire     []
  subgoal 1   typed(G, p1, arrow(t1, t2))
  subgoal 2   typed(G, p2, t1)
  constraint  true
  result      restricted to FV(s0, s1, s2)";
        assert_eq!(s.to_string(), expected);
    }
}
