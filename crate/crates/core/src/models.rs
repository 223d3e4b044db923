//! Benchmark models, their synthetic data generators, and a run harness
//! producing per-step CSV rows.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use rand::Rng;
use rand_distr::{Beta as BetaSampler, Distribution, Normal};

use crate::dist::Dist;
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::rng::{mix, RandomSource};
use crate::runtime::{infer_init, infer_step, InferCtx, Mode, Model};

/// Inputs for a run plus the latent ground truth (one vector per step,
/// aligned with the model outputs).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<I> {
    pub inputs: Vec<I>,
    pub truth: Vec<Vec<f64>>,
}

fn data_rng(data_seed: u64) -> RandomSource {
    RandomSource::from_seed(mix(data_seed, 0xDA7A))
}

fn normal(rng: &mut RandomSource, mean: f64, var: f64) -> f64 {
    Normal::new(mean, var.sqrt())
        .expect("positive variance")
        .sample(rng)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaBernoulli {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for BetaBernoulli {
    fn default() -> Self {
        BetaBernoulli {
            alpha: 1.0,
            beta: 1.0,
        }
    }
}

impl BetaBernoulli {
    pub fn generate(&self, steps: usize, data_seed: u64) -> Dataset<bool> {
        let mut rng = data_rng(data_seed);
        let p = BetaSampler::new(self.alpha, self.beta)
            .unwrap()
            .sample(&mut rng);
        let inputs = (0..steps).map(|_| rng.random::<f64>() < p).collect();
        Dataset {
            inputs,
            truth: vec![vec![p]; steps],
        }
    }
}

impl Model for BetaBernoulli {
    type Memory = Option<Expr>;
    type Input = bool;

    fn init(&self) -> Option<Expr> {
        None
    }

    fn step(
        &self,
        mem: &Option<Expr>,
        flip: &bool,
        ctx: &mut InferCtx<'_>,
    ) -> Result<(Vec<Expr>, Option<Expr>)> {
        let p = match mem {
            Some(p) => p.clone(),
            None => ctx.sample(Dist::beta(self.alpha, self.beta))?,
        };
        ctx.observe(Dist::bernoulli(p.clone()), if *flip { 1.0 } else { 0.0 })?;
        Ok((vec![p.clone()], Some(p)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kalman1D {
    pub m0: f64,
    pub p0: f64,
    pub q: f64,
    pub r: f64,
}

impl Default for Kalman1D {
    fn default() -> Self {
        Kalman1D {
            m0: 0.0,
            p0: 100.0,
            q: 1.0,
            r: 1.0,
        }
    }
}

impl Kalman1D {
    fn latent(&self, prev: &Option<Expr>, ctx: &mut InferCtx<'_>) -> Result<Expr> {
        match prev {
            None => ctx.sample(Dist::gaussian(self.m0, self.p0)),
            Some(x) => ctx.sample(Dist::gaussian(x.clone(), self.q)),
        }
    }

    fn walk(&self, rng: &mut RandomSource, steps: usize) -> Vec<f64> {
        let mut x = normal(rng, self.m0, self.p0);
        let mut out = Vec::with_capacity(steps);
        for t in 0..steps {
            if t > 0 {
                x = normal(rng, x, self.q);
            }
            out.push(x);
        }
        out
    }

    pub fn generate(&self, steps: usize, data_seed: u64) -> Dataset<f64> {
        let mut rng = data_rng(data_seed);
        let xs = self.walk(&mut rng, steps);
        let inputs = xs.iter().map(|x| normal(&mut rng, *x, self.r)).collect();
        Dataset {
            inputs,
            truth: xs.into_iter().map(|x| vec![x]).collect(),
        }
    }
}

impl Model for Kalman1D {
    type Memory = Option<Expr>;
    type Input = f64;

    fn init(&self) -> Option<Expr> {
        None
    }

    fn step(
        &self,
        prev: &Option<Expr>,
        y: &f64,
        ctx: &mut InferCtx<'_>,
    ) -> Result<(Vec<Expr>, Option<Expr>)> {
        let x = self.latent(prev, ctx)?;
        ctx.observe(Dist::gaussian(x.clone(), self.r), *y)?;
        Ok((vec![x.clone()], Some(x)))
    }
}

/// Unknown mean and noise scale. The observation variance is the square
/// of a Gaussian variable, so the scale is never conjugate and gets sampled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianGaussian {
    pub mu_mean: f64,
    pub mu_var: f64,
    pub sigma_mean: f64,
    pub sigma_var: f64,
}

impl Default for GaussianGaussian {
    fn default() -> Self {
        GaussianGaussian {
            mu_mean: 0.0,
            mu_var: 1.0,
            sigma_mean: 1.0,
            sigma_var: 0.25,
        }
    }
}

impl GaussianGaussian {
    /// Only `sigma²` is identified by the data, so the true scale is taken
    /// as a magnitude.
    pub fn generate(&self, steps: usize, data_seed: u64) -> Dataset<f64> {
        let mut rng = data_rng(data_seed);
        let mu = normal(&mut rng, self.mu_mean, self.mu_var);
        let sigma = normal(&mut rng, self.sigma_mean, self.sigma_var).abs();
        let inputs = (0..steps)
            .map(|_| normal(&mut rng, mu, sigma * sigma))
            .collect();
        Dataset {
            inputs,
            truth: vec![vec![mu, sigma]; steps],
        }
    }
}

impl Model for GaussianGaussian {
    type Memory = Option<(Expr, Expr)>;
    type Input = f64;

    fn init(&self) -> Self::Memory {
        None
    }

    fn step(
        &self,
        mem: &Self::Memory,
        y: &f64,
        ctx: &mut InferCtx<'_>,
    ) -> Result<(Vec<Expr>, Self::Memory)> {
        let (mu, sigma) = match mem {
            Some(m) => m.clone(),
            None => (
                ctx.sample(Dist::gaussian(self.mu_mean, self.mu_var))?,
                ctx.sample(Dist::gaussian(self.sigma_mean, self.sigma_var))?,
            ),
        };
        ctx.observe(
            Dist::gaussian(mu.clone(), sigma.clone() * sigma.clone()),
            *y,
        )?;
        Ok((vec![mu.clone(), sigma.clone()], Some((mu, sigma))))
    }
}

/// A random walk observed through a sensor that sometimes reports garbage.
/// The outlier indicator is valued every step; the branch then selects the
/// observation variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outlier {
    pub walk: Kalman1D,
    pub prob: f64,
    pub r_bad: f64,
}

impl Default for Outlier {
    fn default() -> Self {
        Outlier {
            walk: Kalman1D::default(),
            prob: 0.1,
            r_bad: 1000.0,
        }
    }
}

impl Outlier {
    pub fn generate(&self, steps: usize, data_seed: u64) -> Dataset<f64> {
        let mut rng = data_rng(data_seed);
        let xs = self.walk.walk(&mut rng, steps);
        let inputs = xs
            .iter()
            .map(|x| {
                let r = if rng.random::<f64>() < self.prob {
                    self.r_bad
                } else {
                    self.walk.r
                };
                normal(&mut rng, *x, r)
            })
            .collect();
        Dataset {
            inputs,
            truth: xs.into_iter().map(|x| vec![x]).collect(),
        }
    }
}

impl Model for Outlier {
    type Memory = Option<Expr>;
    type Input = f64;

    fn init(&self) -> Option<Expr> {
        None
    }

    fn step(
        &self,
        prev: &Option<Expr>,
        y: &f64,
        ctx: &mut InferCtx<'_>,
    ) -> Result<(Vec<Expr>, Option<Expr>)> {
        let x = self.walk.latent(prev, ctx)?;
        let is_outlier = ctx.sample(Dist::bernoulli(self.prob))?;
        ctx.value(&is_outlier)?;
        let r = Expr::ite(is_outlier, Expr::Real(self.r_bad), Expr::Real(self.walk.r));
        ctx.observe(Dist::gaussian(x.clone(), r), *y)?;
        Ok((vec![x.clone()], Some(x)))
    }
}

/// Per step, a three-level Gaussian binary tree hanging off a random-walk
/// root: two children of the root, two leaves under each child. The
/// outermost leaves are observed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tree {
    pub m0: f64,
    pub p0: f64,
    pub q: f64,
    pub child_var: f64,
    pub leaf_var: f64,
    pub left_first: bool,
}

impl Default for Tree {
    fn default() -> Self {
        Tree {
            m0: 0.0,
            p0: 100.0,
            q: 1.0,
            child_var: 1.0,
            leaf_var: 0.5,
            left_first: true,
        }
    }
}

impl Tree {
    pub fn generate(&self, steps: usize, data_seed: u64) -> Dataset<(f64, f64)> {
        let mut rng = data_rng(data_seed);
        let walk = Kalman1D {
            m0: self.m0,
            p0: self.p0,
            q: self.q,
            r: 1.0,
        };
        let roots = walk.walk(&mut rng, steps);
        let inputs = roots
            .iter()
            .map(|r| {
                let c1 = normal(&mut rng, *r, self.child_var);
                let c2 = normal(&mut rng, *r, self.child_var);
                (
                    normal(&mut rng, c1, self.leaf_var),
                    normal(&mut rng, c2, self.leaf_var),
                )
            })
            .collect();
        Dataset {
            inputs,
            truth: roots.into_iter().map(|r| vec![r]).collect(),
        }
    }
}

impl Model for Tree {
    type Memory = Option<Expr>;
    type Input = (f64, f64);

    fn init(&self) -> Option<Expr> {
        None
    }

    fn step(
        &self,
        prev: &Option<Expr>,
        obs: &(f64, f64),
        ctx: &mut InferCtx<'_>,
    ) -> Result<(Vec<Expr>, Option<Expr>)> {
        let root = match prev {
            None => ctx.sample(Dist::gaussian(self.m0, self.p0))?,
            Some(r) => ctx.sample(Dist::gaussian(r.clone(), self.q))?,
        };
        let c1 = ctx.sample(Dist::gaussian(root.clone(), self.child_var))?;
        let c2 = ctx.sample(Dist::gaussian(root.clone(), self.child_var))?;
        // Inner leaves are part of the tree but never observed.
        ctx.sample(Dist::gaussian(c1.clone(), self.leaf_var))?;
        ctx.sample(Dist::gaussian(c2.clone(), self.leaf_var))?;
        let left = Dist::gaussian(c1, self.leaf_var);
        let right = Dist::gaussian(c2, self.leaf_var);
        if self.left_first {
            ctx.observe(left, obs.0)?;
            ctx.observe(right, obs.1)?;
        } else {
            ctx.observe(right, obs.1)?;
            ctx.observe(left, obs.0)?;
        }
        Ok((vec![root.clone()], Some(root)))
    }
}

/// Differential-drive robot: random-walk angular and linear velocity,
/// observed through the two wheel speed sensors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wheels {
    pub omega_var: f64,
    pub vel_var: f64,
    pub wb: f64,
    pub sensor_err: f64,
}

impl Default for Wheels {
    fn default() -> Self {
        Wheels {
            omega_var: 2500.0,
            vel_var: 2500.0,
            wb: 2.0,
            sensor_err: 1.0,
        }
    }
}

impl Wheels {
    /// Outputs and truth are ordered (vel, omega).
    pub fn generate(&self, steps: usize, data_seed: u64) -> Dataset<(f64, f64)> {
        let mut rng = data_rng(data_seed);
        let (mut omega, mut vel) = (0.0, 0.0);
        let mut inputs = Vec::with_capacity(steps);
        let mut truth = Vec::with_capacity(steps);
        for _ in 0..steps {
            omega = normal(&mut rng, omega, self.omega_var);
            vel = normal(&mut rng, vel, self.vel_var);
            let left = normal(&mut rng, vel - self.wb * omega, self.sensor_err);
            let right = normal(&mut rng, vel + self.wb * omega, self.sensor_err);
            inputs.push((left, right));
            truth.push(vec![vel, omega]);
        }
        Dataset { inputs, truth }
    }
}

impl Model for Wheels {
    type Memory = Option<(Expr, Expr)>;
    type Input = (f64, f64);

    fn init(&self) -> Self::Memory {
        None
    }

    fn step(
        &self,
        mem: &Self::Memory,
        rates: &(f64, f64),
        ctx: &mut InferCtx<'_>,
    ) -> Result<(Vec<Expr>, Self::Memory)> {
        let (prev_omega, prev_vel) = match mem {
            Some((v, o)) => (o.clone(), v.clone()),
            None => (Expr::Real(0.0), Expr::Real(0.0)),
        };
        let omega = ctx.sample(Dist::gaussian(prev_omega, self.omega_var))?;
        let vel = ctx.sample(Dist::gaussian(prev_vel, self.vel_var))?;
        let wb = Expr::Real(self.wb);
        ctx.observe(
            Dist::gaussian(vel.clone() - wb.clone() * omega.clone(), self.sensor_err),
            rates.0,
        )?;
        ctx.observe(
            Dist::gaussian(vel.clone() + wb * omega.clone(), self.sensor_err),
            rates.1,
        )?;
        Ok((vec![vel.clone(), omega.clone()], Some((vel, omega))))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Benchmark {
    BetaBernoulli,
    GaussianGaussian,
    Kalman1D,
    Outlier,
    Tree,
    Wheels,
}

impl Benchmark {
    pub const ALL: [Benchmark; 6] = [
        Benchmark::BetaBernoulli,
        Benchmark::GaussianGaussian,
        Benchmark::Kalman1D,
        Benchmark::Outlier,
        Benchmark::Tree,
        Benchmark::Wheels,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Benchmark::BetaBernoulli => "beta-bernoulli",
            Benchmark::GaussianGaussian => "gaussian-gaussian",
            Benchmark::Kalman1D => "kalman1d",
            Benchmark::Outlier => "outlier",
            Benchmark::Tree => "tree",
            Benchmark::Wheels => "wheels",
        }
    }

    /// Fixed model constants, for reports.
    pub fn constants(self) -> String {
        match self {
            Benchmark::BetaBernoulli => format!("{:?}", BetaBernoulli::default()),
            Benchmark::GaussianGaussian => format!("{:?}", GaussianGaussian::default()),
            Benchmark::Kalman1D => format!("{:?}", Kalman1D::default()),
            Benchmark::Outlier => format!("{:?}", Outlier::default()),
            Benchmark::Tree => format!("{:?}", Tree::default()),
            Benchmark::Wheels => format!("{:?}", Wheels::default()),
        }
    }

    pub fn run(self, cfg: &RunConfig) -> Result<RunReport> {
        let (steps, ds) = (cfg.steps, cfg.data_seed);
        match self {
            Benchmark::BetaBernoulli => {
                let m = BetaBernoulli::default();
                run_model(&m, &m.generate(steps, ds), cfg)
            }
            Benchmark::GaussianGaussian => {
                let m = GaussianGaussian::default();
                run_model(&m, &m.generate(steps, ds), cfg)
            }
            Benchmark::Kalman1D => {
                let m = Kalman1D::default();
                run_model(&m, &m.generate(steps, ds), cfg)
            }
            Benchmark::Outlier => {
                let m = Outlier::default();
                run_model(&m, &m.generate(steps, ds), cfg)
            }
            Benchmark::Tree => {
                let m = Tree::default();
                run_model(&m, &m.generate(steps, ds), cfg)
            }
            Benchmark::Wheels => {
                let m = Wheels::default();
                run_model(&m, &m.generate(steps, ds), cfg)
            }
        }
    }
}

impl fmt::Display for Benchmark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Benchmark {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Benchmark::ALL
            .into_iter()
            .find(|b| b.name() == s)
            .ok_or_else(|| Error::Unsupported(format!("unknown model `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mode: Mode,
    pub particles: usize,
    pub steps: usize,
    pub seed: u64,
    pub data_seed: u64,
    /// Collect the swap/sample log of particle 0.
    pub trace: bool,
    /// Record wall-clock step latency; otherwise the column is 0.
    pub timing: bool,
    /// Capture particle 0's dependency graph after the first step.
    pub dot: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mode: Mode::Ssi,
            particles: 1,
            steps: 500,
            seed: 0,
            data_seed: 0,
            trace: false,
            timing: false,
            dot: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub step: usize,
    pub estimate_mean: f64,
    pub estimate_var: f64,
    pub truth: f64,
    pub sq_error: f64,
    pub ess: f64,
    pub draw_count_cum: u64,
    pub step_latency_ns: u128,
}

pub const CSV_HEADER: [&str; 8] = [
    "step",
    "estimate_mean",
    "estimate_var",
    "truth",
    "sq_error",
    "ess",
    "draw_count_cum",
    "step_latency_ns",
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub rows: Vec<Row>,
    /// Per step, (mean, variance) of every output.
    pub estimates: Vec<Vec<(f64, f64)>>,
    pub draw_count: u64,
    pub trace: Vec<String>,
    pub dot: Option<String>,
}

impl RunReport {
    /// Mean over steps of the per-step squared error.
    pub fn mse(&self) -> f64 {
        if self.rows.is_empty() {
            return 0.0;
        }
        self.rows.iter().map(|r| r.sq_error).sum::<f64>() / self.rows.len() as f64
    }

    pub fn mean_latency_ns(&self) -> f64 {
        if self.rows.is_empty() {
            return 0.0;
        }
        self.rows
            .iter()
            .map(|r| r.step_latency_ns as f64)
            .sum::<f64>()
            / self.rows.len() as f64
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), csv::Error> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(CSV_HEADER)?;
        for r in &self.rows {
            out.write_record([
                r.step.to_string(),
                r.estimate_mean.to_string(),
                r.estimate_var.to_string(),
                r.truth.to_string(),
                r.sq_error.to_string(),
                r.ess.to_string(),
                r.draw_count_cum.to_string(),
                r.step_latency_ns.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

pub fn run_model<M: Model>(
    model: &M,
    data: &Dataset<M::Input>,
    cfg: &RunConfig,
) -> Result<RunReport> {
    let mut s = infer_init(model, cfg.particles, cfg.seed, cfg.mode)?;
    if cfg.trace {
        s.enable_trace();
    }
    let mut report = RunReport {
        rows: Vec::with_capacity(data.inputs.len()),
        estimates: Vec::with_capacity(data.inputs.len()),
        draw_count: 0,
        trace: Vec::new(),
        dot: None,
    };
    for (t, (input, truth)) in data.inputs.iter().zip(&data.truth).enumerate() {
        let start = cfg.timing.then(Instant::now);
        let out = infer_step(model, &mut s, input)?;
        let latency = start.map_or(0, |s| s.elapsed().as_nanos());

        if cfg.trace {
            for (i, p) in s.particles.iter_mut().enumerate() {
                let lines = p.state.take_trace();
                if i == 0 {
                    report
                        .trace
                        .extend(lines.into_iter().map(|l| format!("step {t}: {l}")));
                }
            }
        }
        if cfg.dot && t == 0 {
            report.dot = Some(s.particles[0].state.to_dot());
        }

        let sq_error = out
            .outputs
            .iter()
            .zip(truth)
            .map(|(o, x)| (o.mean - x) * (o.mean - x))
            .sum::<f64>()
            / out.outputs.len().max(1) as f64;
        report.rows.push(Row {
            step: t,
            estimate_mean: out.outputs[0].mean,
            estimate_var: out.outputs[0].var,
            truth: truth[0],
            sq_error,
            ess: out.ess,
            draw_count_cum: out.draw_count_cum,
            step_latency_ns: latency,
        });
        report
            .estimates
            .push(out.outputs.iter().map(|o| (o.mean, o.var)).collect());
        report.draw_count = out.draw_count_cum;
    }
    Ok(report)
}
