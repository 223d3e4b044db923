//! Symbolic distributions, their closed numeric forms, and the `draw` /
//! `score` primitives. Scores are natural-log densities throughout.

use std::f64::consts::PI;
use std::fmt;

use rand::Rng;
use rand_distr::{Beta as BetaSampler, Distribution, Normal};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::expr::{eval, Expr};
use crate::rng::RandomSource;
use crate::state::SymbolicState;

/// A distribution whose parameters are symbolic expressions. Parameter
/// order (mean before variance, alpha before beta) is fixed and determines
/// parent ordering.
#[derive(Debug, Clone, PartialEq)]
pub enum Dist {
    Gaussian { mean: Expr, var: Expr },
    Beta { alpha: Expr, beta: Expr },
    Bernoulli(Expr),
    Delta(Expr),
}

impl Dist {
    pub fn gaussian(mean: impl Into<Expr>, var: impl Into<Expr>) -> Dist {
        Dist::Gaussian {
            mean: mean.into(),
            var: var.into(),
        }
    }

    pub fn beta(alpha: impl Into<Expr>, beta: impl Into<Expr>) -> Dist {
        Dist::Beta {
            alpha: alpha.into(),
            beta: beta.into(),
        }
    }

    pub fn bernoulli(p: impl Into<Expr>) -> Dist {
        Dist::Bernoulli(p.into())
    }

    pub fn delta(v: impl Into<Expr>) -> Dist {
        Dist::Delta(v.into())
    }

    pub fn params(&self) -> Vec<&Expr> {
        match self {
            Dist::Gaussian { mean, var } => vec![mean, var],
            Dist::Beta { alpha, beta } => vec![alpha, beta],
            Dist::Bernoulli(p) | Dist::Delta(p) => vec![p],
        }
    }

    /// Applies `f` to every parameter, keeping the shape.
    pub fn try_map(&self, mut f: impl FnMut(&Expr) -> Result<Expr>) -> Result<Dist> {
        Ok(match self {
            Dist::Gaussian { mean, var } => Dist::Gaussian {
                mean: f(mean)?,
                var: f(var)?,
            },
            Dist::Beta { alpha, beta } => Dist::Beta {
                alpha: f(alpha)?,
                beta: f(beta)?,
            },
            Dist::Bernoulli(p) => Dist::Bernoulli(f(p)?),
            Dist::Delta(v) => Dist::Delta(f(v)?),
        })
    }

    pub fn is_delta(&self) -> bool {
        matches!(self, Dist::Delta(_))
    }
}

impl fmt::Display for Dist {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Dist::Gaussian { mean, var } => write!(f, "N({mean}, {var})"),
            Dist::Beta { alpha, beta } => write!(f, "Beta({alpha}, {beta})"),
            Dist::Bernoulli(p) => write!(f, "Bern({p})"),
            Dist::Delta(v) => write!(f, "δ({v})"),
        }
    }
}

/// A distribution with all parameters folded to range-checked reals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClosedDist {
    Gaussian { mean: f64, var: f64 },
    Beta { alpha: f64, beta: f64 },
    Bernoulli(f64),
    Delta(f64),
}

impl fmt::Display for ClosedDist {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClosedDist::Gaussian { mean, var } => write!(f, "N({mean}, {var})"),
            ClosedDist::Beta { alpha, beta } => write!(f, "Beta({alpha}, {beta})"),
            ClosedDist::Bernoulli(p) => write!(f, "Bern({p})"),
            ClosedDist::Delta(v) => write!(f, "δ({v})"),
        }
    }
}

fn constant(e: &Expr, g: &SymbolicState) -> Result<f64> {
    let folded = eval(e, g)?;
    folded
        .as_f64()
        .ok_or_else(|| Error::NotClosed(folded.to_string()))
}

/// Folds every parameter of `d` under `g` and range-checks the result.
pub fn close(d: &Dist, g: &SymbolicState) -> Result<ClosedDist> {
    let closed = match d {
        Dist::Gaussian { mean, var } => ClosedDist::Gaussian {
            mean: constant(mean, g)?,
            var: constant(var, g)?,
        },
        Dist::Beta { alpha, beta } => ClosedDist::Beta {
            alpha: constant(alpha, g)?,
            beta: constant(beta, g)?,
        },
        Dist::Bernoulli(p) => ClosedDist::Bernoulli(constant(p, g)?),
        Dist::Delta(v) => ClosedDist::Delta(constant(v, g)?),
    };
    closed.validate()?;
    Ok(closed)
}

impl ClosedDist {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParam(msg));
        match *self {
            ClosedDist::Gaussian { mean, var } => {
                if !(var > 0.0 && var.is_finite()) || !mean.is_finite() {
                    return bad(format!("gaussian mean {mean}, variance {var}"));
                }
            }
            ClosedDist::Beta { alpha, beta } => {
                if !(alpha > 0.0 && beta > 0.0 && alpha.is_finite() && beta.is_finite()) {
                    return bad(format!("beta parameters {alpha}, {beta}"));
                }
            }
            ClosedDist::Bernoulli(p) => {
                if !(0.0..=1.0).contains(&p) {
                    return bad(format!("bernoulli probability {p}"));
                }
            }
            ClosedDist::Delta(v) => {
                if !v.is_finite() {
                    return bad(format!("delta value {v}"));
                }
            }
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        match *self {
            ClosedDist::Gaussian { mean, .. } => mean,
            ClosedDist::Beta { alpha, beta } => alpha / (alpha + beta),
            ClosedDist::Bernoulli(p) => p,
            ClosedDist::Delta(v) => v,
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            ClosedDist::Gaussian { var, .. } => var,
            ClosedDist::Beta { alpha, beta } => {
                let s = alpha + beta;
                alpha * beta / (s * s * (s + 1.0))
            }
            ClosedDist::Bernoulli(p) => p * (1.0 - p),
            ClosedDist::Delta(_) => 0.0,
        }
    }
}

/// Draws one sample. Bernoulli yields 1.0 / 0.0; Delta is deterministic.
pub fn draw(d: &ClosedDist, rng: &mut RandomSource) -> f64 {
    match *d {
        ClosedDist::Gaussian { mean, var } => Normal::new(mean, var.sqrt())
            .expect("validated gaussian")
            .sample(rng),
        ClosedDist::Beta { alpha, beta } => BetaSampler::new(alpha, beta)
            .expect("validated beta")
            .sample(rng),
        ClosedDist::Bernoulli(p) => {
            if rng.random::<f64>() < p {
                1.0
            } else {
                0.0
            }
        }
        ClosedDist::Delta(v) => v,
    }
}

const DELTA_TOL: f64 = 1e-12;

/// Log density (or log mass) of `v`. Values outside the support score −∞.
pub fn score(d: &ClosedDist, v: f64) -> f64 {
    match *d {
        ClosedDist::Gaussian { mean, var } => {
            let z = v - mean;
            -0.5 * (2.0 * PI * var).ln() - z * z / (2.0 * var)
        }
        ClosedDist::Beta { alpha, beta } => {
            if v <= 0.0 || v >= 1.0 {
                return f64::NEG_INFINITY;
            }
            let ln_b = ln_gamma(alpha) + ln_gamma(beta) - ln_gamma(alpha + beta);
            (alpha - 1.0) * v.ln() + (beta - 1.0) * (1.0 - v).ln() - ln_b
        }
        ClosedDist::Bernoulli(p) => {
            if v == 1.0 {
                p.ln()
            } else if v == 0.0 {
                (1.0 - p).ln()
            } else {
                f64::NEG_INFINITY
            }
        }
        ClosedDist::Delta(w) => {
            if (v - w).abs() <= DELTA_TOL * (1.0 + w.abs()) {
                0.0
            } else {
                f64::NEG_INFINITY
            }
        }
    }
}
