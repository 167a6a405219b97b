//! Syntactic first-order unification with occurs check.

use thiserror::Error;

use crate::terms::{Substitution, Term, TermError, Var};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum UnifyError {
    #[error("sort mismatch between {left} and {right}")]
    SortMismatch { left: Term, right: Term },
    #[error("cannot unify {left} with {right}")]
    Clash { left: Term, right: Term },
    #[error("occurs check: {var} occurs in {term}")]
    Occurs { var: Var, term: Term },
    #[error("equation list lengths differ ({left} vs {right})")]
    Arity { left: usize, right: usize },
}

impl UnifyError {
    /// Short tag used in diagnostics and reports.
    pub fn kind(&self) -> &'static str {
        match self {
            UnifyError::SortMismatch { .. } => "sort",
            UnifyError::Clash { .. } => "clash",
            UnifyError::Occurs { .. } => "occurs",
            UnifyError::Arity { .. } => "arity",
        }
    }
}

/// Most general unifier of the equations, processed left to right and
/// depth first. When two variables meet, the one with the larger id is
/// bound to the other.
pub fn unify(pairs: &[(Term, Term)]) -> Result<Substitution, UnifyError> {
    let mut subst = Substitution::new();
    for (l, r) in pairs {
        unify_into(l, r, &mut subst)?;
    }
    Ok(subst)
}

/// Unifies two equal-length term lists pointwise.
pub fn unify_lists(left: &[Term], right: &[Term]) -> Result<Substitution, UnifyError> {
    if left.len() != right.len() {
        return Err(UnifyError::Arity { left: left.len(), right: right.len() });
    }
    let pairs: Vec<_> = left.iter().cloned().zip(right.iter().cloned()).collect();
    unify(&pairs)
}

fn unify_into(l: &Term, r: &Term, subst: &mut Substitution) -> Result<(), UnifyError> {
    let l = subst.apply(l);
    let r = subst.apply(r);
    if l.sort() != r.sort() {
        return Err(UnifyError::SortMismatch { left: l, right: r });
    }
    if l == r {
        return Ok(());
    }
    match (&l, &r) {
        (Term::Var(a), Term::Var(b)) => {
            let (hi, lo) = if a.id() > b.id() { (a, &r) } else { (b, &l) };
            bind(hi.clone(), lo.clone(), subst)
        }
        (Term::Var(v), t) | (t, Term::Var(v)) => {
            if t.occurs(v) {
                return Err(UnifyError::Occurs { var: v.clone(), term: t.clone() });
            }
            bind(v.clone(), t.clone(), subst)
        }
        (Term::App { ctor: c1, args: a1, .. }, Term::App { ctor: c2, args: a2, .. })
            if c1 == c2 && a1.len() == a2.len() =>
        {
            for (x, y) in a1.iter().zip(a2.iter()) {
                unify_into(x, y, subst)?;
            }
            Ok(())
        }
        _ => Err(UnifyError::Clash { left: l.clone(), right: r.clone() }),
    }
}

fn bind(v: Var, t: Term, subst: &mut Substitution) -> Result<(), UnifyError> {
    let single = Substitution::singleton(v, t).map_err(term_fault)?;
    *subst = single.compose(subst).map_err(term_fault)?;
    Ok(())
}

// Both sides are already fully applied and sort-checked, so composition
// cannot fail here.
fn term_fault(e: TermError) -> UnifyError {
    unreachable!("unifier invariant broken: {e}")
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FactorError {
    #[error("{other} is not an instance of {general}")]
    Mismatch { general: Term, other: Term },
    #[error("witness is not a substitution: {0}")]
    Witness(TermError),
}

/// Finds `rho` with `other(v) = rho(general(v))` for every `v` in `vars`.
///
/// Succeeds exactly when `other` is an instance of `general` on `vars`.
pub fn factor_witness<'a>(
    general: &Substitution,
    other: &Substitution,
    vars: impl IntoIterator<Item = &'a Var>,
) -> Result<Substitution, FactorError> {
    let mut pairs: Vec<(Term, Term)> = Vec::new();
    for v in vars {
        let g = general.apply(&Term::var(v));
        let o = other.apply(&Term::var(v));
        pairs.push((g, o));
    }
    let rho = match_terms(&pairs)?;
    Ok(rho)
}

/// One-way matching: finds `rho` with `rho(pattern) = target` for every pair.
pub fn match_terms(pairs: &[(Term, Term)]) -> Result<Substitution, FactorError> {
    let mut binds: std::collections::BTreeMap<Var, Term> = Default::default();
    for (p, t) in pairs {
        match_into(p, t, &mut binds)?;
    }
    Substitution::from_pairs(binds).map_err(FactorError::Witness)
}

fn match_into(
    pattern: &Term,
    target: &Term,
    binds: &mut std::collections::BTreeMap<Var, Term>,
) -> Result<(), FactorError> {
    let fail = || FactorError::Mismatch { general: pattern.clone(), other: target.clone() };
    if pattern.sort() != target.sort() {
        return Err(fail());
    }
    match pattern {
        Term::Var(v) => match binds.get(v) {
            Some(prev) if prev != target => Err(fail()),
            Some(_) => Ok(()),
            None => {
                binds.insert(v.clone(), target.clone());
                Ok(())
            }
        },
        Term::Const { .. } => {
            if pattern == target {
                Ok(())
            } else {
                Err(fail())
            }
        }
        Term::App { ctor, args, .. } => match target {
            Term::App { ctor: c2, args: a2, .. } if ctor == c2 && args.len() == a2.len() => {
                for (p, t) in args.iter().zip(a2.iter()) {
                    match_into(p, t, binds)?;
                }
                Ok(())
            }
            _ => Err(fail()),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::terms::free_vars_all;

    fn ty(name: &str) -> Term {
        Term::constant(name, "Type")
    }
    fn arrow(a: Term, b: Term) -> Term {
        Term::app("arrow", "Type", vec![a, b])
    }
    fn v(id: u64, name: &str, sort: &str) -> Var {
        Var::new(id, name, sort)
    }

    #[test]
    fn reflexive_is_empty() {
        let x = Term::var(&v(1, "x", "Type"));
        assert!(unify(&[(x.clone(), x)]).unwrap().is_empty());
    }

    #[test]
    fn occurs_check_fails() {
        let t = v(1, "t", "Type");
        let err = unify(&[(Term::var(&t), arrow(Term::var(&t), ty("bool")))]).unwrap_err();
        assert!(matches!(err, UnifyError::Occurs { .. }));
    }

    #[test]
    fn clash_and_sort_mismatch() {
        let e = unify(&[(ty("bool"), arrow(ty("bool"), ty("bool")))]).unwrap_err();
        assert_eq!(e.kind(), "clash");
        let e = unify(&[(ty("bool"), Term::constant("true", "Prog"))]).unwrap_err();
        assert_eq!(e.kind(), "sort");
    }

    #[test]
    fn abstraction_against_arrow_goal() {
        // empty ⊢ p1 : t1 → t2   against   G2 ⊢ abs(x1, t3, p3) : t3 → t4
        let p1 = v(1, "p1", "Prog");
        let t1 = v(2, "t1", "Type");
        let t2 = v(3, "t2", "Type");
        let g2 = v(4, "G2", "Context");
        let x1 = v(5, "x1", "String");
        let t3 = v(6, "t3", "Type");
        let p3 = v(7, "p3", "Prog");
        let t4 = v(8, "t4", "Type");
        let empty = Term::constant("empty", "Context");
        let abs = Term::app("abs", "Prog", vec![Term::var(&x1), Term::var(&t3), Term::var(&p3)]);
        let left = vec![empty.clone(), Term::var(&p1), arrow(Term::var(&t1), Term::var(&t2))];
        let right = vec![Term::var(&g2), abs.clone(), arrow(Term::var(&t3), Term::var(&t4))];
        let mgu = unify_lists(&left, &right).unwrap();

        // Older goal variables are the representatives.
        let ours = Substitution::from_pairs([
            (g2.clone(), empty.clone()),
            (p1.clone(), Term::app("abs", "Prog", vec![Term::var(&x1), Term::var(&t1), Term::var(&p3)])),
            (t3.clone(), Term::var(&t1)),
            (t4.clone(), Term::var(&t2)),
        ])
        .unwrap();
        assert_eq!(mgu, ours);

        // The textbook orientation {G2 ↦ empty, p1 ↦ abs(x1,t3,p3), t1 ↦ t3, t2 ↦ t4}
        // is the same unifier up to variable renaming: each factors through the other.
        let textbook = Substitution::from_pairs([
            (g2, empty),
            (p1, abs),
            (t1, Term::var(&t3)),
            (t2, Term::var(&t4)),
        ])
        .unwrap();
        let vars = free_vars_all(left.iter().chain(right.iter()));
        assert!(factor_witness(&mgu, &textbook, &vars).is_ok());
        assert!(factor_witness(&textbook, &mgu, &vars).is_ok());
        for (l, r) in left.iter().zip(&right) {
            assert_eq!(textbook.apply(l), textbook.apply(r));
        }
    }

    #[test]
    fn deterministic() {
        let a = v(1, "a", "Type");
        let b = v(2, "b", "Type");
        let pairs = vec![(Term::var(&b), arrow(Term::var(&a), ty("bool"))), (Term::var(&a), ty("bool"))];
        assert_eq!(unify(&pairs).unwrap(), unify(&pairs).unwrap());
        let s = unify(&pairs).unwrap();
        assert_eq!(s.get(&b), Some(&arrow(ty("bool"), ty("bool"))));
    }

    #[test]
    fn factor_witness_examples() {
        let a = v(1, "a", "Type");
        let b = v(2, "b", "Type");
        let s = Substitution::singleton(a.clone(), Term::var(&b)).unwrap();
        assert!(factor_witness(&s, &s, [&a, &b]).unwrap().is_empty());

        let other = Substitution::from_pairs([(a.clone(), ty("bool")), (b.clone(), ty("bool"))]).unwrap();
        let rho = factor_witness(&s, &other, [&a, &b]).unwrap();
        assert_eq!(rho, Substitution::singleton(b.clone(), ty("bool")).unwrap());

        let one = Substitution::singleton(a.clone(), Term::constant("true", "Type")).unwrap();
        let two = Substitution::singleton(a.clone(), Term::constant("false", "Type")).unwrap();
        assert!(factor_witness(&one, &two, [&a]).is_err());
    }
}
