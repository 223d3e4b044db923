//! Independent reference computations. Nothing here touches the symbolic
//! machinery: expressions are interpreted numerically by a separate walker,
//! and Gaussian problems are solved with dense linear algebra.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Beta, Distribution, Normal};

use crate::dist::Dist;
use crate::expr::{Expr, Op, RvId};
use crate::state::SymbolicState;

/// Scalar Kalman filter. Step 0 uses the prior `(m0, p0)` directly; later
/// steps predict with random-walk noise `q` first. `None` skips the update.
pub fn kalman_filter(m0: f64, p0: f64, q: f64, r: f64, obs: &[Option<f64>]) -> Vec<(f64, f64)> {
    let (mut m, mut p) = (m0, p0);
    let mut out = Vec::with_capacity(obs.len());
    for (t, y) in obs.iter().enumerate() {
        if t > 0 {
            p += q;
        }
        if let Some(y) = y {
            let k = p / (p + r);
            m += k * (y - m);
            p *= 1.0 - k;
        }
        out.push((m, p));
    }
    out
}

/// Linear-Gaussian state-space model `x_t = F x_{t-1} + N(0, Q)`,
/// `y_t = H x_t + N(0, R)`.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    pub f: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub h: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub m0: DVector<f64>,
    pub p0: DMatrix<f64>,
}

/// Multivariate Kalman filter with the same step-0 convention as
/// [`kalman_filter`].
pub fn mv_kalman_filter(
    sys: &LinearSystem,
    obs: &[Option<DVector<f64>>],
) -> Vec<(DVector<f64>, DMatrix<f64>)> {
    let mut m = sys.m0.clone();
    let mut p = sys.p0.clone();
    let mut out = Vec::with_capacity(obs.len());
    for (t, y) in obs.iter().enumerate() {
        if t > 0 {
            m = &sys.f * &m;
            p = &sys.f * &p * sys.f.transpose() + &sys.q;
        }
        if let Some(y) = y {
            let s = &sys.h * &p * sys.h.transpose() + &sys.r;
            let s_inv = s
                .try_inverse()
                .expect("innovation covariance is invertible");
            let k = &p * sys.h.transpose() * s_inv;
            m = &m + &k * (y - &sys.h * &m);
            let n = p.nrows();
            p = (DMatrix::identity(n, n) - &k * &sys.h) * &p;
            p = (&p + p.transpose()) * 0.5;
        }
        out.push((m.clone(), p.clone()));
    }
    out
}

/// One node of a linear-Gaussian network: `x_i ~ N(offset + Σ w·x_j, var)`
/// with every parent index `j < i`.
#[derive(Debug, Clone)]
pub struct LinearNode {
    pub offset: f64,
    pub weights: Vec<(usize, f64)>,
    pub var: f64,
}

/// Joint mean and covariance of a linear-Gaussian network.
pub fn linear_gaussian_joint(nodes: &[LinearNode]) -> (DVector<f64>, DMatrix<f64>) {
    let n = nodes.len();
    // x = B x + offset + e  =>  x = (I - B)^{-1} (offset + e)
    let mut b = DMatrix::<f64>::zeros(n, n);
    let mut c = DVector::<f64>::zeros(n);
    let mut d = DMatrix::<f64>::zeros(n, n);
    for (i, node) in nodes.iter().enumerate() {
        for &(j, w) in &node.weights {
            assert!(j < i, "parents must precede children");
            b[(i, j)] += w;
        }
        c[i] = node.offset;
        d[(i, i)] = node.var;
    }
    let a = (DMatrix::identity(n, n) - b)
        .try_inverse()
        .expect("unit lower-triangular");
    let mean = &a * c;
    let cov = &a * d * a.transpose();
    (mean, cov)
}

/// Conditions a joint Gaussian on `x_i = v` for each `(i, v)`. Returns the
/// full posterior; observed coordinates become exact with zero variance.
pub fn gaussian_condition(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    observed: &[(usize, f64)],
) -> (DVector<f64>, DMatrix<f64>) {
    let n = mean.len();
    let obs_idx: Vec<usize> = observed.iter().map(|o| o.0).collect();
    let k = obs_idx.len();
    let mut s_oo = DMatrix::<f64>::zeros(k, k);
    let mut s_xo = DMatrix::<f64>::zeros(n, k);
    let mut resid = DVector::<f64>::zeros(k);
    for (a, &(i, v)) in observed.iter().enumerate() {
        resid[a] = v - mean[i];
        for (b, &j) in obs_idx.iter().enumerate() {
            s_oo[(a, b)] = cov[(i, j)];
        }
        for r in 0..n {
            s_xo[(r, a)] = cov[(r, i)];
        }
    }
    let inv = s_oo.try_inverse().expect("observed block is invertible");
    let gain = &s_xo * inv;
    let post_mean = mean + &gain * resid;
    let post_cov = cov - &gain * s_xo.transpose();
    (post_mean, (&post_cov + post_cov.transpose()) * 0.5)
}

pub fn beta_bernoulli_posterior(a: f64, b: f64, flips: &[bool]) -> (f64, f64) {
    let ones = flips.iter().filter(|f| **f).count() as f64;
    (a + ones, b + flips.len() as f64 - ones)
}

/// Numeric interpretation of an expression under a full assignment.
pub fn eval_numeric(e: &Expr, env: &BTreeMap<RvId, f64>) -> f64 {
    match e {
        Expr::Real(r) => *r,
        Expr::Int(i) => *i as f64,
        Expr::Var(x) => *env.get(x).unwrap_or_else(|| panic!("{x} unassigned")),
        Expr::App(op, args) => {
            let arg = |k: usize| eval_numeric(&args[k], env);
            let truth = |b: bool| if b { 1.0 } else { 0.0 };
            match op {
                Op::Add => arg(0) + arg(1),
                Op::Sub => arg(0) - arg(1),
                Op::Mul => arg(0) * arg(1),
                Op::Div => arg(0) / arg(1),
                Op::Sqrt => arg(0).sqrt(),
                Op::Ite => {
                    if arg(0) != 0.0 {
                        arg(1)
                    } else {
                        arg(2)
                    }
                }
                Op::Eq => truth(arg(0) == arg(1)),
                Op::Neq => truth(arg(0) != arg(1)),
                Op::Lt => truth(arg(0) < arg(1)),
                Op::Lte => truth(arg(0) <= arg(1)),
            }
        }
    }
}

/// Resolves Delta-bound variables that depend only on `env`, in place.
fn resolve_deltas(deltas: &[(RvId, &Expr)], env: &mut BTreeMap<RvId, f64>) {
    let mut pending: Vec<(RvId, &Expr)> = deltas.to_vec();
    while !pending.is_empty() {
        let before = pending.len();
        pending.retain(|(x, e)| {
            if crate::expr::free_rvs(e).iter().all(|y| env.contains_key(y)) {
                let v = eval_numeric(e, env);
                env.insert(*x, v);
                false
            } else {
                true
            }
        });
        assert!(pending.len() < before, "cyclic delta bindings");
    }
}

/// Probability table over the Bernoulli variables of a state; bit `k` of
/// the index is the value of `vars[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointTable {
    pub vars: Vec<RvId>,
    pub probs: Vec<f64>,
}

impl JointTable {
    fn bit(&self, x: RvId) -> usize {
        self.vars
            .iter()
            .position(|v| *v == x)
            .unwrap_or_else(|| panic!("{x} not in table"))
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// Renormalized table restricted to assignments consistent with `given`.
    pub fn condition(&self, given: &[(RvId, bool)]) -> JointTable {
        let masks: Vec<(usize, bool)> = given.iter().map(|(x, v)| (self.bit(*x), *v)).collect();
        let mut probs: Vec<f64> = self
            .probs
            .iter()
            .enumerate()
            .map(|(idx, p)| {
                if masks.iter().all(|(b, v)| ((idx >> b) & 1 == 1) == *v) {
                    *p
                } else {
                    0.0
                }
            })
            .collect();
        let z: f64 = probs.iter().sum();
        for p in &mut probs {
            *p /= z;
        }
        JointTable {
            vars: self.vars.clone(),
            probs,
        }
    }

    /// `P(x = 1)`.
    pub fn marginal(&self, x: RvId) -> f64 {
        let b = self.bit(x);
        self.probs
            .iter()
            .enumerate()
            .filter(|(idx, _)| (idx >> b) & 1 == 1)
            .map(|(_, p)| p)
            .sum()
    }
}

/// Brute-force joint of a state whose bindings are all Bernoulli or Delta.
pub fn enumerate_bernoulli_joint(g: &SymbolicState) -> JointTable {
    let mut vars = Vec::new();
    let mut deltas = Vec::new();
    for (x, d) in g.iter() {
        match d {
            Dist::Bernoulli(_) => vars.push(x),
            Dist::Delta(e) => deltas.push((x, e)),
            other => panic!("{x} ~ {other} is not discrete"),
        }
    }
    assert!(vars.len() <= 16, "too many variables to enumerate");
    let mut probs = Vec::with_capacity(1 << vars.len());
    for idx in 0..(1usize << vars.len()) {
        let mut env: BTreeMap<RvId, f64> = vars
            .iter()
            .enumerate()
            .map(|(k, x)| (*x, ((idx >> k) & 1) as f64))
            .collect();
        resolve_deltas(&deltas, &mut env);
        let mut p = 1.0;
        for x in &vars {
            let Some(Dist::Bernoulli(e)) = g.get(*x) else {
                unreachable!()
            };
            let theta = eval_numeric(e, &env);
            p *= if env[x] == 1.0 { theta } else { 1.0 - theta };
        }
        probs.push(p);
    }
    JointTable { vars, probs }
}

/// Sample moments with CLT standard errors.
#[derive(Debug, Clone)]
pub struct Moments {
    pub vars: Vec<RvId>,
    pub mean: Vec<f64>,
    pub mean_se: Vec<f64>,
    /// Central second moments, row-major over `vars`.
    pub cov: Vec<Vec<f64>>,
    pub cov_se: Vec<Vec<f64>>,
}

impl Moments {
    pub fn index(&self, x: RvId) -> usize {
        self.vars
            .iter()
            .position(|v| *v == x)
            .expect("variable sampled")
    }
}

fn ancestral_order(g: &SymbolicState) -> Vec<RvId> {
    fn visit(g: &SymbolicState, x: RvId, done: &mut Vec<RvId>, active: &mut Vec<RvId>) {
        if done.contains(&x) {
            return;
        }
        assert!(!active.contains(&x), "state is cyclic");
        active.push(x);
        for p in g.get(x).expect("closed state").params() {
            for y in crate::expr::free_rvs(p) {
                visit(g, y, done, active);
            }
        }
        active.pop();
        done.push(x);
    }
    let mut done = Vec::new();
    for x in g.ids() {
        visit(g, x, &mut done, &mut Vec::new());
    }
    done
}

/// Ancestral-sampling moments of every variable in `g`.
pub fn mc_moments(g: &SymbolicState, n_samples: usize, seed: u64) -> Moments {
    let order = ancestral_order(g);
    let vars: Vec<RvId> = g.ids().collect();
    let k = vars.len();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut samples = vec![vec![0.0; k]; n_samples];
    let mut env = BTreeMap::new();
    for row in samples.iter_mut() {
        env.clear();
        for &x in &order {
            let v = match g.get(x).unwrap() {
                Dist::Gaussian { mean, var } => {
                    let m = eval_numeric(mean, &env);
                    let s = eval_numeric(var, &env).sqrt();
                    Normal::new(m, s).expect("valid gaussian").sample(&mut rng)
                }
                Dist::Beta { alpha, beta } => {
                    let a = eval_numeric(alpha, &env);
                    let b = eval_numeric(beta, &env);
                    Beta::new(a, b).expect("valid beta").sample(&mut rng)
                }
                Dist::Bernoulli(p) => {
                    let p = eval_numeric(p, &env);
                    if rng.random::<f64>() < p {
                        1.0
                    } else {
                        0.0
                    }
                }
                Dist::Delta(e) => eval_numeric(e, &env),
            };
            env.insert(x, v);
        }
        for (slot, x) in row.iter_mut().zip(&vars) {
            *slot = env[x];
        }
    }

    let n = n_samples as f64;
    let mean: Vec<f64> = (0..k)
        .map(|i| samples.iter().map(|r| r[i]).sum::<f64>() / n)
        .collect();
    let mut cov = vec![vec![0.0; k]; k];
    let mut cov_se = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in 0..k {
            let prods: Vec<f64> = samples
                .iter()
                .map(|r| (r[i] - mean[i]) * (r[j] - mean[j]))
                .collect();
            let c = prods.iter().sum::<f64>() / n;
            let v = prods.iter().map(|p| (p - c) * (p - c)).sum::<f64>() / (n - 1.0);
            cov[i][j] = c;
            cov_se[i][j] = (v / n).sqrt();
        }
    }
    let mean_se = (0..k).map(|i| (cov[i][i] / n).sqrt()).collect();
    Moments {
        vars,
        mean,
        mean_se,
        cov,
        cov_se,
    }
}
