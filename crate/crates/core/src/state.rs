//! The symbolic state: a finite map from random variables to symbolic
//! distributions, plus the dependency queries built on it.
//!
//! Edges run parent → child, where the parents of `x` are the free random
//! variables of `x`'s distribution parameters. Every mutator keeps the graph
//! acyclic and closed (every referenced variable is bound).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use crate::dist::Dist;
use crate::error::{Error, Result};
use crate::expr::{eval, Expr, RvId};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SymbolicState {
    bindings: BTreeMap<RvId, Dist>,
    next_id: u64,
    /// Number of non-degenerate draws performed by `value`.
    pub draw_count: u64,
    /// Number of `swap` calls attempted (instrumentation for termination checks).
    pub swap_count: u64,
    trace: Option<Vec<String>>,
}

impl SymbolicState {
    pub fn new() -> Self {
        Self::default()
    }

    /// A state that records one line per swap, sample, and intervention.
    pub fn with_trace() -> Self {
        SymbolicState {
            trace: Some(Vec::new()),
            ..Self::default()
        }
    }

    pub fn enable_trace(&mut self) {
        self.trace.get_or_insert_with(Vec::new);
    }

    pub fn disable_trace(&mut self) {
        self.trace = None;
    }

    pub fn trace(&self) -> &[String] {
        self.trace.as_deref().unwrap_or(&[])
    }

    pub fn take_trace(&mut self) -> Vec<String> {
        match &mut self.trace {
            Some(t) => std::mem::take(t),
            None => Vec::new(),
        }
    }

    pub(crate) fn log(&mut self, line: impl FnOnce() -> String) {
        if let Some(t) = &mut self.trace {
            t.push(line());
        }
    }

    pub fn get(&self, x: RvId) -> Option<&Dist> {
        self.bindings.get(&x)
    }

    pub fn dist(&self, x: RvId) -> Result<&Dist> {
        self.bindings.get(&x).ok_or(Error::UnboundVariable(x))
    }

    pub fn contains(&self, x: RvId) -> bool {
        self.bindings.contains_key(&x)
    }

    pub fn len(&self) -> usize {
        self.bindings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bindings.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = RvId> + '_ {
        self.bindings.keys().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (RvId, &Dist)> {
        self.bindings.iter().map(|(k, v)| (*k, v))
    }

    /// Rebinds `x` without checks. Callers (swap) maintain the invariants.
    pub(crate) fn set(&mut self, x: RvId, d: Dist) {
        self.bindings.insert(x, d);
    }

    /// Binds a fresh variable to `d`.
    pub fn assume(&mut self, d: Dist) -> Result<RvId> {
        for p in d.params() {
            let mut refs = Vec::new();
            p.collect_rvs(&mut refs);
            if let Some(&missing) = refs.iter().find(|x| !self.contains(**x)) {
                return Err(Error::UnboundVariable(missing));
            }
        }
        let x = RvId(self.next_id);
        self.next_id += 1;
        self.bindings.insert(x, d);
        Ok(x)
    }

    /// `g[x ↦ δ(v)]`. Conditions on `x = v` when `x` is a root.
    pub fn intervene(&mut self, x: RvId, v: f64) -> Result<()> {
        let slot = self.bindings.get_mut(&x).ok_or(Error::UnboundVariable(x))?;
        *slot = Dist::Delta(Expr::Real(v));
        self.log(|| format!("intervene {x} := {v}"));
        Ok(())
    }

    /// Replaces every parameter of `x`'s distribution by its partial evaluation.
    pub fn eval_star(&mut self, x: RvId) -> Result<()> {
        let d = self.dist(x)?.try_map(|p| eval(p, self))?;
        self.bindings.insert(x, d);
        Ok(())
    }

    /// Parents of `x` in first-occurrence order over its parameters.
    pub fn parents(&self, x: RvId) -> Result<Vec<RvId>> {
        let mut out = Vec::new();
        for p in self.dist(x)?.params() {
            p.collect_rvs(&mut out);
        }
        Ok(out)
    }

    pub fn is_root(&self, x: RvId) -> Result<bool> {
        Ok(self.parents(x)?.is_empty())
    }

    /// All strict ancestors of the given variables.
    pub fn ancestors(&self, xs: &[RvId]) -> Result<BTreeSet<RvId>> {
        let mut seen = BTreeSet::new();
        let mut stack: Vec<RvId> = Vec::new();
        for &x in xs {
            stack.extend(self.parents(x)?);
        }
        while let Some(y) = stack.pop() {
            if seen.insert(y) {
                stack.extend(self.parents(y)?);
            }
        }
        Ok(seen)
    }

    /// Orders `xs` so every element precedes its descendants within `xs`;
    /// ties go to the smaller id.
    pub fn topo_sort(&self, xs: &[RvId]) -> Result<Vec<RvId>> {
        let members: BTreeSet<RvId> = xs.iter().copied().collect();
        let mut preds: BTreeMap<RvId, BTreeSet<RvId>> = BTreeMap::new();
        for &x in &members {
            let anc = self.ancestors(&[x])?;
            if anc.contains(&x) {
                return Err(Error::CycleDetected);
            }
            preds.insert(x, anc.intersection(&members).copied().collect());
        }
        let mut out = Vec::with_capacity(members.len());
        while !preds.is_empty() {
            let next = preds
                .iter()
                .find(|(_, p)| p.is_empty())
                .map(|(x, _)| *x)
                .ok_or(Error::CycleDetected)?;
            preds.remove(&next);
            for p in preds.values_mut() {
                p.remove(&next);
            }
            out.push(next);
        }
        Ok(out)
    }

    /// Whether reversing the edge `x1 → x2` keeps the graph acyclic: false
    /// exactly when some other parent of `x2` descends from `x1`, i.e. there
    /// is an indirect path `x1 ⇝ x2`.
    pub fn can_swap(&self, x1: RvId, x2: RvId) -> Result<bool> {
        self.dist(x1)?;
        let parents = self.parents(x2)?;
        if !parents.contains(&x1) {
            return Err(Error::NotParent {
                parent: x1,
                child: x2,
            });
        }
        for p in parents.into_iter().filter(|&p| p != x1) {
            if self.ancestors(&[p])?.contains(&x1) {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Restricts the state to `live` and its ancestors.
    pub fn gc(&mut self, live: &BTreeSet<RvId>) {
        let roots: Vec<RvId> = live.iter().copied().filter(|x| self.contains(*x)).collect();
        let mut keep = self.ancestors(&roots).expect("closed state");
        keep.extend(roots);
        self.bindings.retain(|x, _| keep.contains(x));
    }

    /// Graphviz rendering of the dependency graph.
    pub fn to_dot(&self) -> String {
        let mut s = String::from("digraph symbolic_state {\n");
        for (x, d) in &self.bindings {
            let label = format!("{x} ~ {d}").replace('"', "\\\"");
            let _ = writeln!(s, "  \"{x}\" [label=\"{label}\"];");
        }
        for x in self.bindings.keys() {
            for p in self.parents(*x).unwrap_or_default() {
                let _ = writeln!(s, "  \"{p}\" -> \"{x}\";");
            }
        }
        s.push_str("}\n");
        s
    }

    /// Structural invariants: closure and acyclicity.
    pub fn check_invariants(&self) -> Result<()> {
        for x in self.bindings.keys() {
            for p in self.parents(*x)? {
                if !self.contains(p) {
                    return Err(Error::UnboundVariable(p));
                }
            }
        }
        let all: Vec<RvId> = self.ids().collect();
        self.topo_sort(&all).map(|_| ())
    }
}
