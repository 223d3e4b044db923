//! Conjugate swaps: reverse the dependency `x1 → x2` while preserving the
//! joint distribution of the pair.
//!
//! Supported pairs are Gaussian/Gaussian with an affine mean and constant
//! variances, Beta/Bernoulli, and Bernoulli/Bernoulli. All parameter
//! construction is symbolic; produced parameters are partially evaluated
//! right away so later affine analysis sees folded terms.

use crate::dist::Dist;
use crate::error::{Error, Result};
use crate::expr::{affine_of, eval, is_const, subst, Expr, RvId};
use crate::state::SymbolicState;

/// Swaps parent `x1` with child `x2`. Returns `false` (leaving `g`
/// untouched) when no closed-form rewrite applies. Legality (`can_swap`) is
/// the caller's obligation.
pub fn swap(g: &mut SymbolicState, x1: RvId, x2: RvId) -> Result<bool> {
    let d1 = g.dist(x1)?.clone();
    let d2 = g.dist(x2)?.clone();
    if !g.parents(x2)?.contains(&x1) {
        return Err(Error::NotParent {
            parent: x1,
            child: x2,
        });
    }
    g.swap_count += 1;

    let rewritten = match (&d1, &d2) {
        (
            Dist::Gaussian {
                mean: mu0,
                var: var0,
            },
            Dist::Gaussian { mean: mu, var },
        ) => gaussian(g, x1, x2, mu0, var0, mu, var)?,
        (Dist::Beta { alpha, beta }, Dist::Bernoulli(p)) => {
            beta_bernoulli(g, x1, x2, alpha, beta, p)?
        }
        (Dist::Bernoulli(p1), Dist::Bernoulli(p2)) => bernoulli_bernoulli(x1, x2, p1, p2),
        _ => None,
    };

    let Some((new1, new2)) = rewritten else {
        g.log(|| format!("swap {x1} {x2}: no conjugacy"));
        return Ok(false);
    };
    let new1 = new1.try_map(|e| eval(e, g))?;
    let new2 = new2.try_map(|e| eval(e, g))?;
    g.log(|| format!("swap {x1} {x2}: {x1} ~ {new1}; {x2} ~ {new2}"));
    g.set(x1, new1);
    g.set(x2, new2);
    Ok(true)
}

fn gaussian(
    g: &SymbolicState,
    x1: RvId,
    x2: RvId,
    mu0: &Expr,
    var0: &Expr,
    mu: &Expr,
    var: &Expr,
) -> Result<Option<(Dist, Dist)>> {
    if !(is_const(var0, g) && is_const(var, g)) {
        return Ok(None);
    }
    let Some(form) = affine_of(mu, x1, g)? else {
        return Ok(None);
    };
    let (a, b) = (form.a, form.b);
    // The mention of x1 cancels: x2 is independent of x1 and the edge just
    // disappears.
    if a.as_f64() == Some(0.0) {
        return Ok(Some((
            Dist::gaussian(mu0.clone(), var0.clone()),
            Dist::gaussian(b, var.clone()),
        )));
    }

    // Prior of x1 pushed through the affine map.
    let mu0_t = a.clone() * mu0.clone() + b.clone();
    let var0_t = (a.clone() * a.clone()) * var0.clone();
    // Conjugate update, in the transformed coordinates.
    let var_post = Expr::Int(1) / (Expr::Int(1) / var0_t.clone() + Expr::Int(1) / var.clone());
    let mu_post = (mu0_t.clone() / var0_t.clone() + Expr::Var(x2) / var.clone()) * var_post.clone();

    let new1 = Dist::gaussian((mu_post - b) / a.clone(), var_post / (a.clone() * a));
    let new2 = Dist::gaussian(mu0_t, var0_t + var.clone());
    Ok(Some((new1, new2)))
}

fn beta_bernoulli(
    g: &SymbolicState,
    x1: RvId,
    x2: RvId,
    alpha: &Expr,
    beta: &Expr,
    p: &Expr,
) -> Result<Option<(Dist, Dist)>> {
    if eval(p, g)? != Expr::Var(x1) {
        return Ok(None);
    }
    let hit = Expr::ite(Expr::Var(x2), Expr::Int(1), Expr::Int(0));
    let miss = Expr::ite(Expr::Var(x2), Expr::Int(0), Expr::Int(1));
    let new1 = Dist::beta(alpha.clone() + hit, beta.clone() + miss);
    let new2 = Dist::bernoulli(alpha.clone() / (alpha.clone() + beta.clone()));
    Ok(Some((new1, new2)))
}

fn bernoulli_bernoulli(x1: RvId, x2: RvId, p1: &Expr, p2: &Expr) -> Option<(Dist, Dist)> {
    let one = Expr::Int(1);
    let zero = Expr::Int(0);
    let p2_marg =
        p1.clone() * subst(p2, x1, &one) + (Expr::Int(1) - p1.clone()) * subst(p2, x1, &zero);
    let lik = Expr::ite(Expr::Var(x2), p2.clone(), Expr::Int(1) - p2.clone());
    let evidence = Expr::ite(
        Expr::Var(x2),
        p2_marg.clone(),
        Expr::Int(1) - p2_marg.clone(),
    );
    let p1_post = p1.clone() * subst(&lik, x1, &one) / evidence;
    Some((Dist::bernoulli(p1_post), Dist::bernoulli(p2_marg)))
}

/// Every binding is Gaussian with constant variance and a mean that is affine
/// with constant coefficients in each variable it mentions. Delta bindings
/// with constant values (conditioned variables) are admitted.
pub fn is_linear_gaussian(g: &SymbolicState) -> bool {
    g.iter().all(|(_, d)| match d {
        Dist::Gaussian { mean, var } => {
            is_const(var, g)
                && crate::expr::free_rvs(mean)
                    .into_iter()
                    .all(|y| matches!(affine_of(mean, y, g), Ok(Some(f)) if f.a.is_constant()))
        }
        Dist::Delta(v) => is_const(v, g),
        _ => false,
    })
}

/// Every binding is Bernoulli (or a constant Delta from conditioning).
pub fn is_finite_discrete(g: &SymbolicState) -> bool {
    g.iter().all(|(_, d)| match d {
        Dist::Bernoulli(_) => true,
        Dist::Delta(v) => is_const(v, g),
        _ => false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::{close, ClosedDist};

    #[test]
    fn wheels_first_swap() {
        let mut g = SymbolicState::new();
        let xo = g.assume(Dist::gaussian(0i64, 2500i64)).unwrap();
        let xv = g.assume(Dist::gaussian(0i64, 2500i64)).unwrap();
        let xl = g
            .assume(Dist::gaussian(
                Expr::Var(xv) - Expr::Int(2) * Expr::Var(xo),
                1i64,
            ))
            .unwrap();
        assert!(swap(&mut g, xv, xl).unwrap());
        assert_eq!(g.parents(xl).unwrap(), vec![xo]);
        let Dist::Gaussian { mean, var } = g.dist(xl).unwrap().clone() else {
            panic!()
        };
        assert_eq!(var, Expr::Int(2501));
        for xo_val in [-3.0, 0.0, 1.25] {
            let mut h = g.clone();
            h.intervene(xo, xo_val).unwrap();
            let m = eval(&mean, &h).unwrap().as_f64().unwrap();
            assert!((m - (-2.0 * xo_val)).abs() < 1e-12);
        }
        let mut xv_parents = g.parents(xv).unwrap();
        xv_parents.sort();
        assert_eq!(xv_parents, vec![xo, xl]);
    }

    #[test]
    fn beta_bernoulli_pair() {
        let mut g = SymbolicState::new();
        let x1 = g.assume(Dist::beta(1i64, 1i64)).unwrap();
        let x2 = g.assume(Dist::bernoulli(Expr::Var(x1))).unwrap();
        assert!(swap(&mut g, x1, x2).unwrap());
        assert_eq!(
            close(g.dist(x2).unwrap(), &g).unwrap(),
            ClosedDist::Bernoulli(0.5)
        );
        for (obs, expected) in [(1.0, (2.0, 1.0)), (0.0, (1.0, 2.0))] {
            let mut h = g.clone();
            h.intervene(x2, obs).unwrap();
            assert_eq!(
                close(h.dist(x1).unwrap(), &h).unwrap(),
                ClosedDist::Beta {
                    alpha: expected.0,
                    beta: expected.1
                }
            );
        }
    }

    #[test]
    fn beta_bernoulli_requires_literal_pattern() {
        let mut g = SymbolicState::new();
        let x1 = g.assume(Dist::beta(1i64, 1i64)).unwrap();
        let x2 = g
            .assume(Dist::bernoulli(Expr::Var(x1) * Expr::Real(0.5)))
            .unwrap();
        let before = g.clone();
        assert!(!swap(&mut g, x1, x2).unwrap());
        assert_eq!(
            g.iter().collect::<Vec<_>>(),
            before.iter().collect::<Vec<_>>()
        );
    }

    #[test]
    fn gaussian_with_symbolic_variance_is_refused() {
        let mut g = SymbolicState::new();
        let s = g.assume(Dist::gaussian(1.0, 0.25)).unwrap();
        let m = g.assume(Dist::gaussian(0.0, 1.0)).unwrap();
        let y = g
            .assume(Dist::gaussian(Expr::Var(m), Expr::Var(s) * Expr::Var(s)))
            .unwrap();
        assert!(!swap(&mut g, m, y).unwrap());
        assert!(!swap(&mut g, s, y).unwrap());
    }

    #[test]
    fn cancelled_dependence_drops_the_edge() {
        let mut g = SymbolicState::new();
        let x = g.assume(Dist::gaussian(1.0, 2.0)).unwrap();
        let y = g
            .assume(Dist::gaussian(
                Expr::Var(x) - Expr::Var(x) + Expr::Real(4.0),
                0.5,
            ))
            .unwrap();
        assert!(swap(&mut g, x, y).unwrap());
        assert_eq!(g.dist(x).unwrap(), &Dist::gaussian(1.0, 2.0));
        assert_eq!(g.dist(y).unwrap(), &Dist::gaussian(4.0, 0.5));
    }

    #[test]
    fn swap_requires_parent() {
        let mut g = SymbolicState::new();
        let a = g.assume(Dist::gaussian(0.0, 1.0)).unwrap();
        let b = g.assume(Dist::gaussian(0.0, 1.0)).unwrap();
        assert!(matches!(swap(&mut g, a, b), Err(Error::NotParent { .. })));
        assert_eq!(
            swap(&mut g, a, RvId(77)),
            Err(Error::UnboundVariable(RvId(77)))
        );
    }

    #[test]
    fn reversible_on_gaussian_chain() {
        let mut g = SymbolicState::new();
        let x = g.assume(Dist::gaussian(1.5, 2.0)).unwrap();
        let y = g
            .assume(Dist::gaussian(
                Expr::Real(3.0) * Expr::Var(x) - Expr::Real(1.0),
                0.5,
            ))
            .unwrap();
        let before_x = close(g.dist(x).unwrap(), &g).unwrap();
        assert!(swap(&mut g, x, y).unwrap());
        assert!(swap(&mut g, y, x).unwrap());
        g.eval_star(x).unwrap();
        g.eval_star(y).unwrap();
        let after_x = close(g.dist(x).unwrap(), &g).unwrap();
        let (
            ClosedDist::Gaussian { mean: m0, var: v0 },
            ClosedDist::Gaussian { mean: m1, var: v1 },
        ) = (before_x, after_x)
        else {
            panic!()
        };
        assert!((m0 - m1).abs() < 1e-9 && (v0 - v1).abs() < 1e-9);
        // y is back to an affine function of x with the original coefficients
        let f = affine_of(
            match g.dist(y).unwrap() {
                Dist::Gaussian { mean, .. } => mean,
                _ => panic!(),
            },
            x,
            &g,
        )
        .unwrap()
        .unwrap();
        assert!((f.a.as_f64().unwrap() - 3.0).abs() < 1e-9);
        assert!((f.b.as_f64().unwrap() + 1.0).abs() < 1e-9);
    }

    #[test]
    fn family_predicates() {
        let mut g = SymbolicState::new();
        let a = g.assume(Dist::gaussian(0.0, 1.0)).unwrap();
        let _ = g
            .assume(Dist::gaussian(Expr::Real(2.0) * Expr::Var(a), 1.0))
            .unwrap();
        assert!(is_linear_gaussian(&g));
        let _ = g
            .assume(Dist::gaussian(Expr::Var(a) * Expr::Var(a), 1.0))
            .unwrap();
        assert!(!is_linear_gaussian(&g));

        let mut h = SymbolicState::new();
        let p = h.assume(Dist::bernoulli(0.3)).unwrap();
        let _ = h
            .assume(Dist::bernoulli(Expr::ite(
                Expr::Var(p),
                Expr::Real(0.9),
                Expr::Real(0.2),
            )))
            .unwrap();
        assert!(is_finite_discrete(&h));
        let _ = h.assume(Dist::beta(1.0, 1.0)).unwrap();
        assert!(!is_finite_discrete(&h));
    }
}
