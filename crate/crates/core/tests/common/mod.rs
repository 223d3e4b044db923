//! Random network builders shared by the integration tests.
#![allow(dead_code)]

use rand::seq::IndexedRandom;
use rand::Rng;
use ssi_core::oracle::LinearNode;
use ssi_core::{Dist, Expr, RvId, SymbolicState};

/// A Bernoulli parameter over earlier variables, always inside [0.05, 0.95].
pub fn random_prob(rng: &mut impl Rng, earlier: &[RvId], depth: u32) -> Expr {
    if earlier.is_empty() || depth == 0 || rng.random_bool(0.3) {
        return Expr::Real(rng.random_range(0.05..0.95));
    }
    let c = *earlier.choose(rng).unwrap();
    Expr::ite(
        Expr::Var(c),
        random_prob(rng, earlier, depth - 1),
        random_prob(rng, earlier, depth - 1),
    )
}

pub fn random_bernoulli_net(rng: &mut impl Rng, n: usize) -> SymbolicState {
    let mut g = SymbolicState::new();
    let mut ids = Vec::new();
    for _ in 0..n {
        let p = random_prob(rng, &ids, 2);
        ids.push(g.assume(Dist::bernoulli(p)).unwrap());
    }
    g
}

/// A linear-Gaussian network and its numeric description (node `i` is
/// `RvId(i)` when built on an empty state).
pub fn random_linear_gaussian(rng: &mut impl Rng, n: usize) -> (SymbolicState, Vec<LinearNode>) {
    let mut g = SymbolicState::new();
    let mut nodes = Vec::new();
    for i in 0..n {
        let offset = rng.random_range(-2.0..2.0);
        let var = rng.random_range(0.5..3.0);
        let mut weights = Vec::new();
        let mut mean = Expr::Real(offset);
        for j in 0..i {
            if rng.random_bool(0.5) {
                let w: f64 =
                    rng.random_range(0.3..1.5) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                weights.push((j, w));
                mean = mean + Expr::Real(w) * Expr::Var(RvId(j as u64));
            }
        }
        let x = g.assume(Dist::gaussian(mean, var)).unwrap();
        assert_eq!(x, RvId(i as u64));
        nodes.push(LinearNode {
            offset,
            weights,
            var,
        });
    }
    (g, nodes)
}

/// Every (parent, child) edge whose reversal is legal.
pub fn legal_edges(g: &SymbolicState) -> Vec<(RvId, RvId)> {
    let mut out = Vec::new();
    for x2 in g.ids() {
        for x1 in g.parents(x2).unwrap() {
            if !out.contains(&(x1, x2)) && g.can_swap(x1, x2).unwrap() {
                out.push((x1, x2));
            }
        }
    }
    out
}
