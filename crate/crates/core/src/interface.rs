//! Hoisting and the `value` / `observe` operations built on it.

use std::collections::BTreeSet;

use crate::conjugacy::swap;
use crate::dist::{close, draw, score, ClosedDist};
use crate::error::{Error, Result};
use crate::expr::{eval, Expr, RvId};
use crate::rng::RandomSource;
use crate::state::SymbolicState;

/// Failure modes of [`hoist_helper`]. `NonConjugate` is a control signal
/// consumed by [`hoist`]; it never escapes the public operations.
#[derive(Debug, Clone, PartialEq)]
pub enum HoistError {
    NonConjugate { parent: RvId, child: RvId },
    Fatal(Error),
}

impl From<Error> for HoistError {
    fn from(e: Error) -> Self {
        HoistError::Fatal(e)
    }
}

/// Makes `x_cur` a root, except that it may still depend on `roots`.
pub fn hoist_helper(
    g: &mut SymbolicState,
    x_cur: RvId,
    roots: &BTreeSet<RvId>,
) -> Result<(), HoistError> {
    // Delta parents fold away here instead of being swapped.
    g.eval_star(x_cur)?;
    let candidates: Vec<RvId> = g
        .parents(x_cur)?
        .into_iter()
        .filter(|p| !roots.contains(p))
        .collect();
    let pars = g.topo_sort(&candidates)?;

    let mut hoisted = roots.clone();
    for &p in &pars {
        hoist_helper(g, p, &hoisted)?;
        hoisted.insert(p);
    }

    for &p in pars.iter().rev() {
        if !g.parents(x_cur)?.contains(&p) {
            continue;
        }
        if !g.can_swap(p, x_cur)? {
            return Err(HoistError::Fatal(Error::InternalCycle {
                parent: p,
                child: x_cur,
            }));
        }
        if !swap(g, p, x_cur)? {
            return Err(HoistError::NonConjugate {
                parent: p,
                child: x_cur,
            });
        }
    }
    Ok(())
}

/// Makes `x_in` a root, sampling non-conjugate blockers as needed. Each
/// blocker is valued on the pre-hoist state and the hoist restarts.
pub fn hoist(g: &mut SymbolicState, x_in: RvId, rng: &mut RandomSource) -> Result<()> {
    loop {
        g.eval_star(x_in)?;
        if g.is_root(x_in)? {
            return Ok(());
        }
        let mut work = g.clone();
        match hoist_helper(&mut work, x_in, &BTreeSet::new()) {
            Ok(()) => {
                *g = work;
                return Ok(());
            }
            Err(HoistError::NonConjugate { parent, child }) => {
                g.swap_count = work.swap_count;
                g.log(|| format!("non-conjugate {parent} {child}"));
                value(g, parent, rng)?;
                g.eval_star(child)?;
            }
            Err(HoistError::Fatal(e)) => return Err(e),
        }
    }
}

/// Draws `x` from its marginal given everything conditioned so far and
/// fixes it to the drawn value.
pub fn value(g: &mut SymbolicState, x: RvId, rng: &mut RandomSource) -> Result<f64> {
    hoist(g, x, rng)?;
    g.eval_star(x)?;
    let d = close(g.dist(x)?, g)?;
    let v = draw(&d, rng);
    if !matches!(d, ClosedDist::Delta(_)) {
        g.draw_count += 1;
        g.log(|| format!("sample {x} ~ {d} = {v}"));
    }
    g.intervene(x, v)?;
    Ok(v)
}

/// Conditions on `x = v`. Returns the log density of `x`'s marginal at `v`.
pub fn observe(g: &mut SymbolicState, x: RvId, v: f64, rng: &mut RandomSource) -> Result<f64> {
    hoist(g, x, rng)?;
    g.eval_star(x)?;
    let d = close(g.dist(x)?, g)?;
    let w = score(&d, v);
    g.log(|| format!("observe {x} ~ {d} at {v}: log weight {w}"));
    g.intervene(x, v)?;
    Ok(w)
}

/// Closed marginal of a constant or single-variable value. `g` is unchanged;
/// any forced sampling happens on a private copy.
pub fn marginal_of(v: &Expr, g: &SymbolicState, rng: &mut RandomSource) -> Result<ClosedDist> {
    match eval(v, g)? {
        Expr::Real(c) => Ok(ClosedDist::Delta(c)),
        Expr::Int(c) => Ok(ClosedDist::Delta(c as f64)),
        Expr::Var(x) => {
            let mut h = g.clone();
            h.disable_trace();
            hoist(&mut h, x, rng)?;
            h.eval_star(x)?;
            close(h.dist(x)?, &h)
        }
        other => Err(Error::Unsupported(format!(
            "marginal of composite value {other}"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::Dist;

    fn wheels_left() -> (SymbolicState, RvId, RvId, RvId) {
        let mut g = SymbolicState::with_trace();
        let xo = g.assume(Dist::gaussian(0i64, 2500i64)).unwrap();
        let xv = g.assume(Dist::gaussian(0i64, 2500i64)).unwrap();
        let xl = g
            .assume(Dist::gaussian(
                Expr::Var(xv) - Expr::Int(2) * Expr::Var(xo),
                1i64,
            ))
            .unwrap();
        (g, xo, xv, xl)
    }

    fn gaussian_params(g: &SymbolicState, x: RvId) -> (f64, f64) {
        match close(g.dist(x).unwrap(), g).unwrap() {
            ClosedDist::Gaussian { mean, var } => (mean, var),
            other => panic!("expected gaussian, got {other}"),
        }
    }

    #[test]
    fn helper_swaps_velocity_then_omega() {
        let (mut g, xo, xv, xl) = wheels_left();
        hoist_helper(&mut g, xl, &BTreeSet::new()).unwrap();
        let lines = g.take_trace();
        assert_eq!(lines.len(), 2);
        assert!(lines[0].starts_with(&format!("swap {xv} {xl}")));
        assert!(lines[1].starts_with(&format!("swap {xo} {xl}")));
        assert!(g.is_root(xl).unwrap());
        assert_eq!(
            g.dist(xl).unwrap(),
            &Dist::gaussian(Expr::Int(0), Expr::Int(12501))
        );
        assert_eq!(g.draw_count, 0);
    }

    #[test]
    fn helper_on_root_is_identity() {
        let (mut g, xo, _, _) = wheels_left();
        let before = g.clone();
        hoist_helper(&mut g, xo, &BTreeSet::new()).unwrap();
        assert_eq!(g, before);
    }

    #[test]
    fn left_observation_golden_values() {
        let (mut g, xo, xv, xl) = wheels_left();
        let mut rng = RandomSource::from_seed(0);
        let w = observe(&mut g, xl, -1.0, &mut rng).unwrap();
        let expected_w = score(
            &ClosedDist::Gaussian {
                mean: 0.0,
                var: 12501.0,
            },
            -1.0,
        );
        assert!((w - expected_w).abs() < 1e-12);
        assert_eq!(g.draw_count, 0);
        assert_eq!(g.dist(xl).unwrap(), &Dist::delta(-1.0));

        g.eval_star(xo).unwrap();
        let (m, v) = gaussian_params(&g, xo);
        // Exact conditioning: cov(o, l) = -5000, var(l) = 12501.
        assert!((m - 5000.0 / 12501.0).abs() < 1e-12);
        assert!((v - (2500.0 - 25e6 / 12501.0)).abs() < 1e-9);
        assert!((m - 0.4).abs() / 0.4 < 1e-3);
        assert!((v - 500.0).abs() / 500.0 < 1e-3);

        // Velocity keeps a symbolic dependence on omega.
        g.eval_star(xv).unwrap();
        assert_eq!(g.parents(xv).unwrap(), vec![xo]);
    }

    #[test]
    fn hoist_of_delta_root_is_noop() {
        let mut g = SymbolicState::new();
        let x = g.assume(Dist::delta(3.0)).unwrap();
        let before = g.clone();
        hoist(&mut g, x, &mut RandomSource::from_seed(1)).unwrap();
        assert_eq!(g, before);
        assert_eq!(
            value(&mut g, x, &mut RandomSource::from_seed(1)).unwrap(),
            3.0
        );
        assert_eq!(g.draw_count, 0);
    }

    #[test]
    fn non_conjugate_variance_forces_a_draw() {
        let mut g = SymbolicState::with_trace();
        let mu = g.assume(Dist::gaussian(0.0, 1.0)).unwrap();
        let s = g.assume(Dist::gaussian(1.0, 0.25)).unwrap();
        let y = g
            .assume(Dist::gaussian(Expr::Var(mu), Expr::Var(s) * Expr::Var(s)))
            .unwrap();
        let mut rng = RandomSource::from_seed(3);
        let w = observe(&mut g, y, 0.5, &mut rng).unwrap();
        assert!(w.is_finite());
        assert!(g.draw_count >= 1);
        assert!(g.trace().iter().any(|l| l.starts_with("non-conjugate")));
        // With sigma fixed, mu's posterior is an exact Gaussian update.
        let sv = match g.dist(s).unwrap() {
            Dist::Delta(e) => e.as_f64().unwrap(),
            d => panic!("sigma not sampled: {d}"),
        };
        g.eval_star(mu).unwrap();
        let (m, v) = gaussian_params(&g, mu);
        let r = sv * sv;
        assert!((v - r / (1.0 + r)).abs() < 1e-12);
        assert!((m - 0.5 / (1.0 + r)).abs() < 1e-12);
    }

    #[test]
    fn observe_root_standard_normal() {
        let mut g = SymbolicState::new();
        let x = g.assume(Dist::gaussian(0.0, 1.0)).unwrap();
        let w = observe(&mut g, x, 0.0, &mut RandomSource::from_seed(0)).unwrap();
        assert!((w + 0.5 * (2.0 * std::f64::consts::PI).ln()).abs() < 1e-15);
        assert_eq!(g.dist(x).unwrap(), &Dist::delta(0.0));
    }

    #[test]
    fn beta_bernoulli_observe() {
        let mut g = SymbolicState::new();
        let p = g.assume(Dist::beta(1i64, 1i64)).unwrap();
        let c = g.assume(Dist::bernoulli(Expr::Var(p))).unwrap();
        let mut rng = RandomSource::from_seed(0);
        assert_eq!(
            marginal_of(&Expr::Var(c), &g, &mut rng).unwrap(),
            ClosedDist::Bernoulli(0.5)
        );
        let w = observe(&mut g, c, 1.0, &mut rng).unwrap();
        assert!((w - 0.5f64.ln()).abs() < 1e-15);
        assert_eq!(
            marginal_of(&Expr::Var(p), &g, &mut rng).unwrap(),
            ClosedDist::Beta {
                alpha: 2.0,
                beta: 1.0
            }
        );
        assert_eq!(g.draw_count, 0);
    }

    #[test]
    fn marginal_of_leaves_state_untouched() {
        let (g, xo, _, xl) = wheels_left();
        let mut rng = RandomSource::from_seed(0);
        let before = g.clone();
        assert_eq!(
            marginal_of(&Expr::Var(xl), &g, &mut rng).unwrap(),
            ClosedDist::Gaussian {
                mean: 0.0,
                var: 12501.0
            }
        );
        assert_eq!(
            marginal_of(&Expr::Var(xo), &g, &mut rng).unwrap(),
            ClosedDist::Gaussian {
                mean: 0.0,
                var: 2500.0
            }
        );
        assert_eq!(
            marginal_of(&Expr::Real(2.0), &g, &mut rng).unwrap(),
            ClosedDist::Delta(2.0)
        );
        assert!(matches!(
            marginal_of(&(Expr::Var(xo) + Expr::Var(xl)), &g, &mut rng),
            Err(Error::Unsupported(_))
        ));
        assert_eq!(g, before);
    }

    #[test]
    fn value_on_chain_child_matches_marginal() {
        let n = 20_000;
        let mut sum = 0.0;
        let mut sq = 0.0;
        for i in 0..n {
            let mut g = SymbolicState::new();
            let a = g.assume(Dist::gaussian(1.0, 2.0)).unwrap();
            let b = g.assume(Dist::gaussian(Expr::Var(a), 3.0)).unwrap();
            let v = value(&mut g, b, &mut RandomSource::for_particle(11, i)).unwrap();
            assert_eq!(g.draw_count, 1);
            sum += v;
            sq += v * v;
        }
        let mean = sum / n as f64;
        let var = sq / n as f64 - mean * mean;
        let se_mean = (5.0 / n as f64).sqrt();
        let se_var = 5.0 * (2.0 / n as f64).sqrt();
        assert!((mean - 1.0).abs() < 4.0 * se_mean, "mean {mean}");
        assert!((var - 5.0).abs() < 4.0 * se_var, "var {var}");
    }
}
