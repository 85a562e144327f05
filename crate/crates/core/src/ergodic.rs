//! Finite-carrier oracles for the ergodic value: maximum mean cycles,
//! greedy maximizing orbits and holonomy defects of empirical measures.

use crate::limits::subaction_residual;
use crate::operators::{OperatorError, ValueFunction};
use crate::process::{extend_history, DecisionProcess, FeasibleHistory, Point, ProcessError};
use serde::Serialize;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ErgodicError {
    #[error(transparent)]
    Process(#[from] ProcessError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error("action graph needs a finite state space")]
    NotFinite,
    #[error("graph has no cycle")]
    NoCycle,
    #[error("subaction residual {residual:e} exceeds tolerance {tol:e}")]
    NotCalibrated { residual: f64, tol: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Arc {
    pub from: usize,
    pub action: usize,
    pub to: usize,
    pub weight: f64,
}

/// States as nodes, feasible actions as weighted arcs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ActionGraph {
    pub nodes: usize,
    pub arcs: Vec<Arc>,
}

impl ActionGraph {
    pub fn new(nodes: usize, arcs: Vec<Arc>) -> Result<Self, ErgodicError> {
        if arcs.iter().any(|a| a.from >= nodes || a.to >= nodes) {
            return Err(ProcessError::Structure("arc endpoint out of range".into()).into());
        }
        Ok(ActionGraph { nodes, arcs })
    }

    pub fn from_process(p: &DecisionProcess) -> Result<Self, ErgodicError> {
        if p.space().is_grid() {
            return Err(ErgodicError::NotFinite);
        }
        let mut arcs = Vec::new();
        for x in 0..p.num_states() {
            for c in p.choices(x) {
                let Point::State(y) = c.target else {
                    return Err(ErgodicError::NotFinite);
                };
                arcs.push(Arc {
                    from: x,
                    action: c.action,
                    to: y,
                    weight: c.reward,
                });
            }
        }
        Self::new(p.num_states(), arcs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaxMeanCycle {
    pub value: f64,
    pub cycle: Vec<Arc>,
}

impl MaxMeanCycle {
    /// Uniform measure on the cycle's (state, action) atoms.
    pub fn measure(&self) -> EmpiricalMeasure {
        let w = 1.0 / self.cycle.len() as f64;
        EmpiricalMeasure::from_atoms(
            self.cycle
                .iter()
                .map(|a| Atom {
                    state: Point::State(a.from),
                    action: a.action,
                    weight: w,
                })
                .collect(),
        )
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("state,action,weight\n");
        for a in &self.cycle {
            s.push_str(&format!("{},{},{}\n", a.from, a.action, a.weight));
        }
        s
    }
}

fn cycle_mean(c: &[Arc]) -> f64 {
    c.iter().map(|a| a.weight).sum::<f64>() / c.len() as f64
}

/// Karp's maximum mean cycle with a virtual source joined to every node.
pub fn max_mean_cycle(g: &ActionGraph) -> Result<MaxMeanCycle, ErgodicError> {
    let n = g.nodes;
    if n == 0 || g.arcs.is_empty() {
        return Err(ErgodicError::NoCycle);
    }
    // d[k][v]: heaviest walk with exactly k arcs ending at v.
    let mut d = vec![vec![f64::NEG_INFINITY; n]; n + 1];
    let mut pred = vec![vec![usize::MAX; n]; n + 1];
    d[0].iter_mut().for_each(|x| *x = 0.0);
    for k in 1..=n {
        let (prev, cur) = d.split_at_mut(k);
        let (prev, cur) = (&prev[k - 1], &mut cur[0]);
        for (i, a) in g.arcs.iter().enumerate() {
            if prev[a.from] == f64::NEG_INFINITY {
                continue;
            }
            let w = prev[a.from] + a.weight;
            if w > cur[a.to] {
                cur[a.to] = w;
                pred[k][a.to] = i;
            }
        }
    }
    let mut best = (f64::NEG_INFINITY, usize::MAX);
    for v in 0..n {
        if d[n][v] == f64::NEG_INFINITY {
            continue;
        }
        let worst = (0..n)
            .filter(|&k| d[k][v] > f64::NEG_INFINITY)
            .map(|k| (d[n][v] - d[k][v]) / (n - k) as f64)
            .fold(f64::INFINITY, f64::min);
        if worst > best.0 {
            best = (worst, v);
        }
    }
    if best.1 == usize::MAX {
        return Err(ErgodicError::NoCycle);
    }
    // Walk back from the critical node and split the walk into cycles.
    let mut walk = Vec::with_capacity(n);
    let mut v = best.1;
    for k in (1..=n).rev() {
        let a = g.arcs[pred[k][v]];
        walk.push(a);
        v = a.from;
    }
    walk.reverse();
    let mut stack: Vec<Arc> = Vec::new();
    let mut pos: Vec<Option<usize>> = vec![None; n];
    pos[walk[0].from] = Some(0);
    let mut cycles = Vec::new();
    for a in walk {
        stack.push(a);
        match pos[a.to] {
            Some(start) => {
                let cyc: Vec<Arc> = stack.drain(start..).collect();
                for c in &cyc {
                    pos[c.to] = None;
                }
                pos[a.to] = Some(stack.len());
                cycles.push(cyc);
            }
            None => pos[a.to] = Some(stack.len()),
        }
    }
    let cycle = cycles
        .into_iter()
        .max_by(|a, b| cycle_mean(a).total_cmp(&cycle_mean(b)))
        .ok_or(ErgodicError::NoCycle)?;
    let value = cycle_mean(&cycle);
    debug_assert!((value - best.0).abs() <= 1e-9 * (1.0 + best.0.abs()));
    Ok(MaxMeanCycle { value, cycle })
}

/// One weighted atom of an empirical measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Atom {
    pub state: Point,
    pub action: usize,
    pub weight: f64,
}

/// A probability measure on (state, action) pairs with finitely many atoms.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalMeasure {
    pub atoms: Vec<Atom>,
}

impl EmpiricalMeasure {
    /// Merges atoms sitting on the same finite state and action.
    pub fn from_atoms(atoms: Vec<Atom>) -> Self {
        let mut merged: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        let mut rest = Vec::new();
        for a in atoms {
            match a.state {
                Point::State(x) => *merged.entry((x, a.action)).or_default() += a.weight,
                _ => rest.push(a),
            }
        }
        let mut out: Vec<Atom> = merged
            .into_iter()
            .map(|((x, action), weight)| Atom {
                state: Point::State(x),
                action,
                weight,
            })
            .collect();
        out.extend(rest);
        EmpiricalMeasure { atoms: out }
    }

    /// `μ_K = (1/K) Σ δ_{(x_i, a_i)}` along `h`.
    pub fn from_history(h: &FeasibleHistory) -> Self {
        let w = 1.0 / h.len() as f64;
        Self::from_atoms(
            h.states
                .iter()
                .zip(&h.actions)
                .map(|(&state, &action)| Atom {
                    state,
                    action,
                    weight: w,
                })
                .collect(),
        )
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.weight).sum()
    }

    /// `Σ μ(x, a) u(x, a)`.
    pub fn integrate_reward(&self, p: &DecisionProcess) -> Result<f64, ProcessError> {
        let mut s = 0.0;
        for a in &self.atoms {
            s += a.weight * p.step(a.state, a.action)?.1;
        }
        Ok(s)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("state,action,weight\n");
        for a in &self.atoms {
            s.push_str(&format!("{},{},{}\n", a.state, a.action, a.weight));
        }
        s
    }
}

/// `max_g |Σ μ(x, a) (g(f(x, a)) − g(x))|` over state indicators (finite) or
/// node hat functions (grid).
pub fn holonomy_defect(p: &DecisionProcess, m: &EmpiricalMeasure) -> Result<f64, ProcessError> {
    let space = p.space();
    let mut acc = vec![0.0; space.len()];
    for a in &m.atoms {
        let (next, _) = p.step(a.state, a.action)?;
        for (i, w) in space.stencil(next)?.terms() {
            acc[i] += a.weight * w;
        }
        for (i, w) in space.stencil(a.state)?.terms() {
            acc[i] -= a.weight * w;
        }
    }
    Ok(acc.iter().fold(0.0, |m, x| m.max(x.abs())))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaximizingOrbit {
    pub history: FeasibleHistory,
    pub measure: EmpiricalMeasure,
    pub mean_reward: f64,
    /// `ū − 2 max|h| / K − tol`.
    pub guaranteed_lower_bound: f64,
}

/// Greedy orbit `a_i ∈ argmax_a u(x_i, a) − ū + h(f(x_i, a))` of length `k`.
pub fn maximizing_orbit(
    p: &DecisionProcess,
    h: &ValueFunction,
    ubar: f64,
    start: Point,
    k: usize,
    tol: f64,
) -> Result<MaximizingOrbit, ErgodicError> {
    let residual = subaction_residual(p, h, ubar)?;
    if residual > tol {
        return Err(ErgodicError::NotCalibrated { residual, tol });
    }
    if k == 0 {
        return Err(ProcessError::Invalid("orbit length must be positive".into()).into());
    }
    let all: Vec<usize> = (0..p.num_actions()).collect();
    let mut hist = FeasibleHistory::new(start);
    for _ in 0..k {
        let x = hist.last_state();
        let actions = match x {
            Point::State(i) => p.feasible_actions(i),
            _ => all.clone(),
        };
        let mut best = (f64::NEG_INFINITY, usize::MAX);
        for a in actions {
            let (y, r) = p.step(x, a)?;
            let q = r + h.eval(y)?;
            if q > best.0 {
                best = (q, a);
            }
        }
        hist = extend_history(p, &hist, best.1)?;
    }
    let mean_reward = hist.rewards.iter().sum::<f64>() / k as f64;
    let hmax = h.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(MaximizingOrbit {
        measure: EmpiricalMeasure::from_history(&hist),
        history: hist,
        mean_reward,
        guaranteed_lower_bound: ubar - 2.0 * hmax / k as f64 - tol,
    })
}
