//! Symbolic expressions over constants and random-variable references.
//!
//! Terms are plain immutable trees. The partial evaluator [`eval`] folds
//! constants and substitutes Delta-distributed variables; [`affine_of`] is
//! the structural analysis that gates Gaussian swaps.

use std::collections::BTreeSet;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::dist::Dist;
use crate::error::{Error, Result};
use crate::state::SymbolicState;

/// Identifier of a random variable. Ids come from a monotone counter and are
/// never reused within one state lineage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RvId(pub u64);

impl fmt::Display for RvId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "X{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Op {
    Add,
    Sub,
    Mul,
    Div,
    Sqrt,
    Ite,
    Eq,
    Neq,
    Lt,
    Lte,
}

impl Op {
    pub fn arity(self) -> usize {
        match self {
            Op::Sqrt => 1,
            Op::Ite => 3,
            _ => 2,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Op::Add => "+",
            Op::Sub => "-",
            Op::Mul => "*",
            Op::Div => "/",
            Op::Sqrt => "sqrt",
            Op::Ite => "ite",
            Op::Eq => "=",
            Op::Neq => "!=",
            Op::Lt => "<",
            Op::Lte => "<=",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Real(f64),
    Int(i64),
    Var(RvId),
    App(Op, Vec<Expr>),
}

/// `e = a * x + b` for the analyzed variable `x`; neither side mentions `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineForm {
    pub a: Expr,
    pub b: Expr,
}

impl Expr {
    /// Builds an application, checking the operator's arity.
    pub fn app(op: Op, args: Vec<Expr>) -> Result<Expr> {
        if args.len() != op.arity() {
            return Err(Error::Arity {
                op: op.symbol(),
                expected: op.arity(),
                got: args.len(),
            });
        }
        Ok(Expr::App(op, args))
    }

    fn binary(op: Op, l: Expr, r: Expr) -> Expr {
        Expr::App(op, vec![l, r])
    }

    pub fn sqrt(e: Expr) -> Expr {
        Expr::App(Op::Sqrt, vec![e])
    }

    pub fn ite(cond: Expr, then: Expr, otherwise: Expr) -> Expr {
        Expr::App(Op::Ite, vec![cond, then, otherwise])
    }

    pub fn eq(l: Expr, r: Expr) -> Expr {
        Expr::binary(Op::Eq, l, r)
    }

    pub fn neq(l: Expr, r: Expr) -> Expr {
        Expr::binary(Op::Neq, l, r)
    }

    pub fn lt(l: Expr, r: Expr) -> Expr {
        Expr::binary(Op::Lt, l, r)
    }

    pub fn lte(l: Expr, r: Expr) -> Expr {
        Expr::binary(Op::Lte, l, r)
    }

    pub fn var(x: RvId) -> Expr {
        Expr::Var(x)
    }

    /// The numeric value of a constant term.
    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            Expr::Real(r) => Some(r),
            Expr::Int(c) => Some(c as f64),
            _ => None,
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, Expr::Real(_) | Expr::Int(_))
    }

    /// Whether `x` occurs anywhere in the term.
    pub fn mentions(&self, x: RvId) -> bool {
        match self {
            Expr::Var(y) => *y == x,
            Expr::App(_, args) => args.iter().any(|a| a.mentions(x)),
            _ => false,
        }
    }

    /// Number of nodes in the term tree.
    pub fn size(&self) -> usize {
        match self {
            Expr::App(_, args) => 1 + args.iter().map(Expr::size).sum::<usize>(),
            _ => 1,
        }
    }

    pub(crate) fn collect_rvs(&self, out: &mut Vec<RvId>) {
        match self {
            Expr::Var(x) => {
                if !out.contains(x) {
                    out.push(*x);
                }
            }
            Expr::App(_, args) => args.iter().for_each(|a| a.collect_rvs(out)),
            _ => {}
        }
    }
}

impl From<f64> for Expr {
    fn from(r: f64) -> Self {
        Expr::Real(r)
    }
}

impl From<i64> for Expr {
    fn from(c: i64) -> Self {
        Expr::Int(c)
    }
}

impl From<RvId> for Expr {
    fn from(x: RvId) -> Self {
        Expr::Var(x)
    }
}

macro_rules! impl_binop {
    ($trait:ident, $method:ident, $op:expr) => {
        impl<R: Into<Expr>> $trait<R> for Expr {
            type Output = Expr;
            fn $method(self, rhs: R) -> Expr {
                Expr::binary($op, self, rhs.into())
            }
        }

        impl $trait<Expr> for f64 {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                Expr::binary($op, Expr::Real(self), rhs)
            }
        }

        impl $trait<Expr> for i64 {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                Expr::binary($op, Expr::Int(self), rhs)
            }
        }
    };
}

impl_binop!(Add, add, Op::Add);
impl_binop!(Sub, sub, Op::Sub);
impl_binop!(Mul, mul, Op::Mul);
impl_binop!(Div, div, Op::Div);

impl Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::binary(Op::Sub, Expr::Int(0), self)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Real(r) => write!(f, "{r}"),
            Expr::Int(c) => write!(f, "{c}"),
            Expr::Var(x) => write!(f, "{x}"),
            Expr::App(op, args) => {
                write!(f, "app({}", op.symbol())?;
                for a in args {
                    write!(f, ", {a}")?;
                }
                write!(f, ")")
            }
        }
    }
}

/// Random variables occurring in `e`, deduplicated in first-occurrence order.
pub fn free_rvs(e: &Expr) -> Vec<RvId> {
    let mut out = Vec::new();
    e.collect_rvs(&mut out);
    out
}

pub fn free_rv_set(e: &Expr) -> BTreeSet<RvId> {
    free_rvs(e).into_iter().collect()
}

/// `e[x <- r]`.
pub fn subst(e: &Expr, x: RvId, r: &Expr) -> Expr {
    match e {
        Expr::Var(y) if *y == x => r.clone(),
        Expr::App(op, args) => Expr::App(*op, args.iter().map(|a| subst(a, x, r)).collect()),
        _ => e.clone(),
    }
}

#[derive(Clone, Copy)]
enum Num {
    Int(i64),
    Real(f64),
}

impl Num {
    fn of(e: &Expr) -> Option<Num> {
        match *e {
            Expr::Int(c) => Some(Num::Int(c)),
            Expr::Real(r) => Some(Num::Real(r)),
            _ => None,
        }
    }

    fn f(self) -> f64 {
        match self {
            Num::Int(c) => c as f64,
            Num::Real(r) => r,
        }
    }

    fn into_expr(self) -> Expr {
        match self {
            Num::Int(c) => Expr::Int(c),
            Num::Real(r) => Expr::Real(r),
        }
    }
}

fn truth(b: bool) -> Num {
    Num::Int(b as i64)
}

fn fold(op: Op, args: &[Num]) -> Result<Num> {
    use Num::*;
    let int_arith =
        |l: Num, r: Num, checked: fn(i64, i64) -> Option<i64>, real: fn(f64, f64) -> f64| match (
            l, r,
        ) {
            (Int(a), Int(b)) => checked(a, b)
                .map(Int)
                .unwrap_or(Real(real(a as f64, b as f64))),
            _ => Real(real(l.f(), r.f())),
        };
    Ok(match op {
        Op::Add => int_arith(args[0], args[1], i64::checked_add, |a, b| a + b),
        Op::Sub => int_arith(args[0], args[1], i64::checked_sub, |a, b| a - b),
        Op::Mul => int_arith(args[0], args[1], i64::checked_mul, |a, b| a * b),
        Op::Div => {
            let d = args[1].f();
            if d == 0.0 {
                return Err(Error::DivisionByZero);
            }
            Real(args[0].f() / d)
        }
        Op::Sqrt => {
            let v = args[0].f();
            if v < 0.0 {
                return Err(Error::NegativeSqrt(v));
            }
            Real(v.sqrt())
        }
        Op::Eq => truth(cmp_eq(args[0], args[1])),
        Op::Neq => truth(!cmp_eq(args[0], args[1])),
        Op::Lt => truth(match (args[0], args[1]) {
            (Int(a), Int(b)) => a < b,
            (l, r) => l.f() < r.f(),
        }),
        Op::Lte => truth(match (args[0], args[1]) {
            (Int(a), Int(b)) => a <= b,
            (l, r) => l.f() <= r.f(),
        }),
        Op::Ite => unreachable!("ite is folded lazily"),
    })
}

fn cmp_eq(l: Num, r: Num) -> bool {
    match (l, r) {
        (Num::Int(a), Num::Int(b)) => a == b,
        (l, r) => l.f() == r.f(),
    }
}

/// Partial evaluator: folds constant subterms and replaces Delta-distributed
/// variables by their (evaluated) point value. Variables that are unbound or
/// not Delta stay symbolic.
pub fn eval(e: &Expr, g: &SymbolicState) -> Result<Expr> {
    match e {
        Expr::Real(_) | Expr::Int(_) => Ok(e.clone()),
        Expr::Var(x) => match g.get(*x) {
            Some(Dist::Delta(inner)) => eval(inner, g),
            _ => Ok(e.clone()),
        },
        Expr::App(Op::Ite, args) => {
            let cond = eval(&args[0], g)?;
            match cond.as_f64() {
                Some(c) if c != 0.0 => eval(&args[1], g),
                Some(_) => eval(&args[2], g),
                None => Ok(Expr::App(
                    Op::Ite,
                    vec![cond, eval(&args[1], g)?, eval(&args[2], g)?],
                )),
            }
        }
        Expr::App(op, args) => {
            let args = args
                .iter()
                .map(|a| eval(a, g))
                .collect::<Result<Vec<_>>>()?;
            let nums: Option<Vec<Num>> = args.iter().map(Num::of).collect();
            match nums {
                Some(nums) => Ok(fold(*op, &nums)?.into_expr()),
                None => Ok(Expr::App(*op, args)),
            }
        }
    }
}

/// True iff `e` partially evaluates to a constant under `g`.
pub fn is_const(e: &Expr, g: &SymbolicState) -> bool {
    matches!(eval(e, g), Ok(c) if c.is_constant())
}

/// Recognizes `e` as `a * x + b` with `a`, `b` free of `x`.
///
/// The term is partially evaluated first so Delta chains do not block
/// recognition; the returned coefficients are folded as well.
pub fn affine_of(e: &Expr, x: RvId, g: &SymbolicState) -> Result<Option<AffineForm>> {
    let e = eval(e, g)?;
    match affine_rec(&e, x) {
        Some((a, b)) => Ok(Some(AffineForm {
            a: eval(&a, g)?,
            b: eval(&b, g)?,
        })),
        None => Ok(None),
    }
}

fn affine_rec(e: &Expr, x: RvId) -> Option<(Expr, Expr)> {
    if !e.mentions(x) {
        return Some((Expr::Int(0), e.clone()));
    }
    match e {
        Expr::Var(_) => Some((Expr::Int(1), Expr::Int(0))),
        Expr::App(Op::Add, args) => {
            let (al, bl) = affine_rec(&args[0], x)?;
            let (ar, br) = affine_rec(&args[1], x)?;
            Some((al + ar, bl + br))
        }
        Expr::App(Op::Sub, args) => {
            let (al, bl) = affine_rec(&args[0], x)?;
            let (ar, br) = affine_rec(&args[1], x)?;
            Some((al - ar, bl - br))
        }
        Expr::App(Op::Mul, args) => {
            let (l, r) = (&args[0], &args[1]);
            let (k, other) = match (l.mentions(x), r.mentions(x)) {
                (false, true) => (l, r),
                (true, false) => (r, l),
                _ => return None,
            };
            let (a, b) = affine_rec(other, x)?;
            Some((k.clone() * a, k.clone() * b))
        }
        Expr::App(Op::Div, args) => {
            if args[1].mentions(x) {
                return None;
            }
            let (a, b) = affine_rec(&args[0], x)?;
            Some((a / args[1].clone(), b / args[1].clone()))
        }
        _ => None,
    }
}
