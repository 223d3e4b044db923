//! Streaming particle filter over symbolic states.
//!
//! Each step runs the model once per particle with a fresh weight, then
//! normalizes, summarizes the weighted mixture of output marginals, and
//! resamples systematically. Particles keep their own RNG slot across
//! resampling; only memory and state are copied from the ancestor.

use std::collections::BTreeSet;

use rand::Rng;

use crate::dist::{ClosedDist, Dist};
use crate::error::{Error, Result};
use crate::expr::{eval, free_rvs, Expr, RvId};
use crate::interface::{marginal_of, observe, value};
use crate::rng::{mix, RandomSource};
use crate::state::SymbolicState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Semi-symbolic inference: random variables stay symbolic until needed.
    Ssi,
    /// Plain bootstrap particle filter: every sampled variable is drawn at once.
    Pf,
}

/// Random variables reachable from a model memory; everything else is
/// garbage after a step.
pub trait LiveVars {
    fn live_vars(&self, out: &mut BTreeSet<RvId>);
}

impl LiveVars for Expr {
    fn live_vars(&self, out: &mut BTreeSet<RvId>) {
        out.extend(free_rvs(self));
    }
}

impl LiveVars for RvId {
    fn live_vars(&self, out: &mut BTreeSet<RvId>) {
        out.insert(*self);
    }
}

impl LiveVars for () {
    fn live_vars(&self, _: &mut BTreeSet<RvId>) {}
}

impl LiveVars for f64 {
    fn live_vars(&self, _: &mut BTreeSet<RvId>) {}
}

impl<T: LiveVars> LiveVars for Option<T> {
    fn live_vars(&self, out: &mut BTreeSet<RvId>) {
        if let Some(x) = self {
            x.live_vars(out);
        }
    }
}

impl<T: LiveVars> LiveVars for Vec<T> {
    fn live_vars(&self, out: &mut BTreeSet<RvId>) {
        for x in self {
            x.live_vars(out);
        }
    }
}

impl<A: LiveVars, B: LiveVars> LiveVars for (A, B) {
    fn live_vars(&self, out: &mut BTreeSet<RvId>) {
        self.0.live_vars(out);
        self.1.live_vars(out);
    }
}

impl<A: LiveVars, B: LiveVars, C: LiveVars> LiveVars for (A, B, C) {
    fn live_vars(&self, out: &mut BTreeSet<RvId>) {
        self.0.live_vars(out);
        self.1.live_vars(out);
        self.2.live_vars(out);
    }
}

/// The probabilistic operations available to a model step. Threads the
/// particle's state, weight and RNG.
pub struct InferCtx<'a> {
    state: &'a mut SymbolicState,
    log_weight: &'a mut f64,
    rng: &'a mut RandomSource,
    mode: Mode,
}

impl<'a> InferCtx<'a> {
    pub fn new(
        state: &'a mut SymbolicState,
        log_weight: &'a mut f64,
        rng: &'a mut RandomSource,
        mode: Mode,
    ) -> Self {
        InferCtx {
            state,
            log_weight,
            rng,
            mode,
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn state(&self) -> &SymbolicState {
        self.state
    }

    /// Introduces a random variable. Under `Pf` it is drawn immediately and
    /// the result is a constant.
    pub fn sample(&mut self, d: Dist) -> Result<Expr> {
        let x = self.state.assume(d)?;
        match self.mode {
            Mode::Ssi => Ok(Expr::Var(x)),
            Mode::Pf => Ok(Expr::Real(value(self.state, x, self.rng)?)),
        }
    }

    /// Forces a concrete value, sampling every random variable `e` mentions.
    pub fn value(&mut self, e: &Expr) -> Result<f64> {
        let mut folded = eval(e, self.state)?;
        while let Some(&x) = free_rvs(&folded).first() {
            value(self.state, x, self.rng)?;
            folded = eval(&folded, self.state)?;
        }
        folded
            .as_f64()
            .ok_or_else(|| Error::NotClosed(folded.to_string()))
    }

    /// Conditions on a fresh draw from `d` taking value `v` and accumulates
    /// its log density into the particle weight.
    pub fn observe(&mut self, d: Dist, v: f64) -> Result<()> {
        let x = self.state.assume(d)?;
        *self.log_weight += observe(self.state, x, v, self.rng)?;
        Ok(())
    }
}

/// A streaming model: an initial memory and a step function.
pub trait Model {
    type Memory: Clone + LiveVars;
    type Input;

    fn init(&self) -> Self::Memory;

    /// One time step. Returns the outputs to summarize and the next memory.
    fn step(
        &self,
        memory: &Self::Memory,
        input: &Self::Input,
        ctx: &mut InferCtx<'_>,
    ) -> Result<(Vec<Expr>, Self::Memory)>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct Particle<M> {
    pub memory: M,
    pub state: SymbolicState,
    pub log_weight: f64,
    pub rng: RandomSource,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferState<M> {
    pub particles: Vec<Particle<M>>,
    pub mode: Mode,
    resample_rng: RandomSource,
    pub draw_count_cum: u64,
    pub steps_done: u64,
}

/// Weighted mixture of one output's marginals across particles.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputSummary {
    pub components: Vec<(f64, ClosedDist)>,
    pub mean: f64,
    pub var: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub outputs: Vec<OutputSummary>,
    pub ess: f64,
    /// Log of the mean unnormalized particle weight.
    pub log_evidence: f64,
    pub draws: u64,
    pub draw_count_cum: u64,
}

pub fn infer_init<M: Model>(
    model: &M,
    n: usize,
    seed: u64,
    mode: Mode,
) -> Result<InferState<M::Memory>> {
    if n == 0 {
        return Err(Error::InvalidParticleCount);
    }
    let particles = (0..n)
        .map(|i| Particle {
            memory: model.init(),
            state: SymbolicState::new(),
            log_weight: 0.0,
            rng: RandomSource::for_particle(seed, i as u64),
        })
        .collect();
    Ok(InferState {
        particles,
        mode,
        resample_rng: RandomSource::from_seed(mix(seed, u64::MAX)),
        draw_count_cum: 0,
        steps_done: 0,
    })
}

impl<M> InferState<M> {
    pub fn enable_trace(&mut self) {
        for p in &mut self.particles {
            p.state.enable_trace();
        }
    }
}

/// Normalized weights from log weights via log-sum-exp; also returns the
/// log of the mean unnormalized weight.
pub fn normalize(log_weights: &[f64]) -> Result<(Vec<f64>, f64)> {
    let max = log_weights
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::AllParticlesDead);
    }
    let unnorm: Vec<f64> = log_weights.iter().map(|lw| (lw - max).exp()).collect();
    let total: f64 = unnorm.iter().sum();
    let log_evidence = max + total.ln() - (log_weights.len() as f64).ln();
    Ok((
        unnorm.into_iter().map(|w| w / total).collect(),
        log_evidence,
    ))
}

/// Systematic resampling: one uniform offset, `n` evenly spaced pointers.
pub fn systematic_resample(weights: &[f64], rng: &mut impl Rng) -> Vec<usize> {
    let n = weights.len();
    let u0: f64 = rng.random::<f64>() / n as f64;
    let mut out = Vec::with_capacity(n);
    let mut cum = weights[0];
    let mut i = 0;
    for k in 0..n {
        let u = u0 + k as f64 / n as f64;
        while u > cum && i + 1 < n {
            i += 1;
            cum += weights[i];
        }
        out.push(i);
    }
    out
}

fn summarize(components: Vec<(f64, ClosedDist)>) -> OutputSummary {
    let mean: f64 = components.iter().map(|(w, d)| w * d.mean()).sum();
    let second: f64 = components
        .iter()
        .map(|(w, d)| w * (d.variance() + d.mean() * d.mean()))
        .sum();
    OutputSummary {
        components,
        mean,
        var: (second - mean * mean).max(0.0),
    }
}

pub fn infer_step<M: Model>(
    model: &M,
    s: &mut InferState<M::Memory>,
    input: &M::Input,
) -> Result<StepOutput> {
    let mode = s.mode;
    let mut outs = Vec::with_capacity(s.particles.len());
    let mut draws = 0;
    for p in &mut s.particles {
        p.log_weight = 0.0;
        let before = p.state.draw_count;
        let mut ctx = InferCtx::new(&mut p.state, &mut p.log_weight, &mut p.rng, mode);
        let (out, memory) = model.step(&p.memory, input, &mut ctx)?;
        p.memory = memory;
        draws += p.state.draw_count - before;
        outs.push(out);
    }

    let log_weights: Vec<f64> = s.particles.iter().map(|p| p.log_weight).collect();
    let (weights, log_evidence) = normalize(&log_weights)?;
    let ess = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();

    let n_out = outs.first().map_or(0, Vec::len);
    let mut outputs = Vec::with_capacity(n_out);
    for k in 0..n_out {
        let mut components = Vec::with_capacity(s.particles.len());
        for ((p, out), w) in s.particles.iter_mut().zip(&outs).zip(&weights) {
            components.push((*w, marginal_of(&out[k], &p.state, &mut p.rng)?));
        }
        outputs.push(summarize(components));
    }

    if s.particles.len() > 1 {
        let ancestors = systematic_resample(&weights, &mut s.resample_rng);
        let copies: Vec<(M::Memory, SymbolicState)> = ancestors
            .iter()
            .map(|&a| (s.particles[a].memory.clone(), s.particles[a].state.clone()))
            .collect();
        for (p, (memory, state)) in s.particles.iter_mut().zip(copies) {
            p.memory = memory;
            p.state = state;
        }
    }
    for p in &mut s.particles {
        p.log_weight = 0.0;
        let mut live = BTreeSet::new();
        p.memory.live_vars(&mut live);
        p.state.gc(&live);
    }

    s.draw_count_cum += draws;
    s.steps_done += 1;
    Ok(StepOutput {
        outputs,
        ess,
        log_evidence,
        draws,
        draw_count_cum: s.draw_count_cum,
    })
}

pub fn run_stream<M: Model>(
    model: &M,
    inputs: &[M::Input],
    n: usize,
    seed: u64,
    mode: Mode,
) -> Result<Vec<StepOutput>> {
    let mut s = infer_init(model, n, seed, mode)?;
    inputs
        .iter()
        .map(|i| infer_step(model, &mut s, i))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::kalman_filter;

    struct RandomWalk;

    impl Model for RandomWalk {
        type Memory = Option<Expr>;
        type Input = f64;

        fn init(&self) -> Self::Memory {
            None
        }

        fn step(
            &self,
            prev: &Option<Expr>,
            y: &f64,
            ctx: &mut InferCtx<'_>,
        ) -> Result<(Vec<Expr>, Option<Expr>)> {
            let x = match prev {
                None => ctx.sample(Dist::gaussian(0.0, 100.0))?,
                Some(p) => ctx.sample(Dist::gaussian(p.clone(), 1.0))?,
            };
            ctx.observe(Dist::gaussian(x.clone(), 1.0), *y)?;
            Ok((vec![x.clone()], Some(x)))
        }
    }

    fn ys() -> Vec<f64> {
        (0..40)
            .map(|t| (t as f64 * 0.37).sin() * 3.0 + 0.1 * t as f64)
            .collect()
    }

    #[test]
    fn zero_particles_rejected() {
        assert_eq!(
            infer_init(&RandomWalk, 0, 0, Mode::Ssi).unwrap_err(),
            Error::InvalidParticleCount
        );
    }

    #[test]
    fn init_is_deterministic_with_distinct_streams() {
        let a = infer_init(&RandomWalk, 4, 9, Mode::Ssi).unwrap();
        let b = infer_init(&RandomWalk, 4, 9, Mode::Ssi).unwrap();
        assert_eq!(a, b);
        for i in 0..4 {
            for j in i + 1..4 {
                assert_ne!(a.particles[i].rng, a.particles[j].rng);
            }
        }
        assert!(a
            .particles
            .iter()
            .all(|p| p.state.is_empty() && p.log_weight == 0.0));
    }

    #[test]
    fn empty_stream_gives_empty_output() {
        assert!(run_stream(&RandomWalk, &[], 3, 0, Mode::Pf)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn single_particle_ssi_is_exact() {
        let ys = ys();
        let out = run_stream(&RandomWalk, &ys, 1, 0, Mode::Ssi).unwrap();
        let obs: Vec<Option<f64>> = ys.iter().map(|y| Some(*y)).collect();
        let oracle = kalman_filter(0.0, 100.0, 1.0, 1.0, &obs);
        for (o, (m, v)) in out.iter().zip(oracle) {
            assert!((o.outputs[0].mean - m).abs() <= 1e-10 * (1.0 + m.abs()));
            assert!((o.outputs[0].var - v).abs() <= 1e-10 * v);
            assert_eq!(o.draws, 0);
        }
    }

    #[test]
    fn ssi_particles_collapse_to_identical_components() {
        let out = run_stream(&RandomWalk, &ys(), 8, 3, Mode::Ssi).unwrap();
        for o in &out {
            let first = o.outputs[0].components[0].1;
            for (w, d) in &o.outputs[0].components {
                assert!((w - 1.0 / 8.0).abs() < 1e-12);
                assert!((d.mean() - first.mean()).abs() < 1e-9);
                assert!((d.variance() - first.variance()).abs() < 1e-9);
            }
            assert!((o.ess - 8.0).abs() < 1e-9);
        }
    }

    #[test]
    fn pf_weights_normalize_and_replay() {
        let a = run_stream(&RandomWalk, &ys(), 50, 1, Mode::Pf).unwrap();
        let b = run_stream(&RandomWalk, &ys(), 50, 1, Mode::Pf).unwrap();
        assert_eq!(a, b);
        for o in &a {
            let total: f64 = o.outputs[0].components.iter().map(|c| c.0).sum();
            assert!((total - 1.0).abs() < 1e-12);
            assert_eq!(o.draws, 50);
        }
    }

    #[test]
    fn state_stays_bounded() {
        let ys: Vec<f64> = (0..500).map(|t| (t as f64).cos()).collect();
        let mut s = infer_init(&RandomWalk, 1, 0, Mode::Ssi).unwrap();
        for y in &ys {
            infer_step(&RandomWalk, &mut s, y).unwrap();
            assert!(s.particles[0].state.len() <= 3);
        }
    }

    #[test]
    fn impossible_observation_kills_all_particles() {
        struct Impossible;
        impl Model for Impossible {
            type Memory = ();
            type Input = ();
            fn init(&self) {}
            fn step(&self, _: &(), _: &(), ctx: &mut InferCtx<'_>) -> Result<(Vec<Expr>, ())> {
                ctx.observe(Dist::bernoulli(0.0), 1.0)?;
                Ok((vec![], ()))
            }
        }
        let mut s = infer_init(&Impossible, 3, 0, Mode::Ssi).unwrap();
        assert_eq!(
            infer_step(&Impossible, &mut s, &()),
            Err(Error::AllParticlesDead)
        );
    }

    #[test]
    fn systematic_resampling_follows_weights() {
        let mut rng = RandomSource::from_seed(0);
        assert_eq!(
            systematic_resample(&[0.0, 1.0, 0.0], &mut rng),
            vec![1, 1, 1]
        );
        let idx = systematic_resample(&[0.5, 0.25, 0.25, 0.0], &mut rng);
        assert_eq!(idx.iter().filter(|i| **i == 0).count(), 2);
        assert_eq!(idx.iter().filter(|i| **i == 3).count(), 0);
    }
}
