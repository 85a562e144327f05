//! Deterministic sequential decision processes `S = {X, A, Ψ, f, u, δ}`.
//!
//! Two state backends are supported: a finite set of states and a uniform
//! grid on `[0, 1)` (optionally periodic). Grid processes keep the continuous
//! map and reward so that histories may start anywhere in `[0, 1)`; operator
//! sweeps only touch grid nodes and read values at `f(x, a)` through an
//! interpolation [`Stencil`].

use crate::discounts::{DiscountError, DiscountFunction};
use crate::report::{Check, PropertyReport};
use serde::Serialize;
use std::fmt;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProcessError {
    #[error("action {action} is not feasible at state {state}")]
    Infeasible { state: String, action: usize },
    #[error("malformed process: {0}")]
    Structure(String),
    #[error("process failed validation: {0}")]
    Invalid(String),
    #[error(transparent)]
    Discount(#[from] DiscountError),
}

/// The state representation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "backend")]
pub enum StateSpace {
    Finite {
        count: usize,
    },
    /// Nodes `x_i = i / nodes`, `i = 0..nodes`.
    UnitGrid {
        nodes: usize,
        periodic: bool,
    },
    /// Pairs of grid nodes, flattened as `i * nodes + j`.
    GridPairs {
        nodes: usize,
        periodic: bool,
    },
}

/// A location in a state space, possibly between grid nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Point {
    State(usize),
    Coord(f64),
    Coords(f64, f64),
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Point::State(i) => write!(f, "#{i}"),
            Point::Coord(x) => write!(f, "{x}"),
            Point::Coords(x, y) => write!(f, "({x}, {y})"),
        }
    }
}

/// Convex interpolation weights over at most three nodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stencil {
    idx: [usize; 3],
    w: [f64; 3],
    len: u8,
}

impl Stencil {
    pub fn node(i: usize) -> Self {
        Stencil {
            idx: [i, 0, 0],
            w: [1.0, 0.0, 0.0],
            len: 1,
        }
    }

    fn from_terms(terms: &[(usize, f64)]) -> Self {
        let mut s = Stencil {
            idx: [0; 3],
            w: [0.0; 3],
            len: 0,
        };
        for &(i, w) in terms {
            if w == 0.0 {
                continue;
            }
            s.idx[s.len as usize] = i;
            s.w[s.len as usize] = w;
            s.len += 1;
        }
        if s.len == 0 {
            // all weight on the first vertex
            return Stencil::node(terms[0].0);
        }
        s
    }

    #[inline]
    pub fn apply(&self, values: &[f64]) -> f64 {
        match self.len {
            1 => values[self.idx[0]],
            2 => self.w[0] * values[self.idx[0]] + self.w[1] * values[self.idx[1]],
            _ => {
                self.w[0] * values[self.idx[0]]
                    + self.w[1] * values[self.idx[1]]
                    + self.w[2] * values[self.idx[2]]
            }
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        (0..self.len as usize).map(move |k| (self.idx[k], self.w[k]))
    }
}

/// Splits a coordinate into the bracketing node pair and the fraction.
fn axis(x: f64, nodes: usize, periodic: bool) -> (usize, usize, f64) {
    let n = nodes as f64;
    if periodic {
        let s = (x * n).rem_euclid(n);
        let lo = s.floor();
        let frac = s - lo;
        let i = (lo as usize) % nodes;
        (i, (i + 1) % nodes, frac)
    } else {
        let s = (x * n).clamp(0.0, n - 1.0);
        let lo = s.floor();
        let i = lo as usize;
        if i + 1 >= nodes {
            (nodes - 1, nodes - 1, 0.0)
        } else {
            (i, i + 1, s - lo)
        }
    }
}

impl StateSpace {
    pub fn len(&self) -> usize {
        match *self {
            StateSpace::Finite { count } => count,
            StateSpace::UnitGrid { nodes, .. } => nodes,
            StateSpace::GridPairs { nodes, .. } => nodes * nodes,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_grid(&self) -> bool {
        !matches!(self, StateSpace::Finite { .. })
    }

    /// Coordinate of grid node `i`.
    pub fn node_coord(nodes: usize, i: usize) -> f64 {
        i as f64 / nodes as f64
    }

    /// The point represented by state index `i`.
    pub fn point(&self, i: usize) -> Point {
        match *self {
            StateSpace::Finite { .. } => Point::State(i),
            StateSpace::UnitGrid { nodes, .. } => Point::Coord(Self::node_coord(nodes, i)),
            StateSpace::GridPairs { nodes, .. } => Point::Coords(
                Self::node_coord(nodes, i / nodes),
                Self::node_coord(nodes, i % nodes),
            ),
        }
    }

    /// Interpolation stencil for `p`.
    ///
    /// Grids use linear interpolation between neighbouring nodes. Pair grids
    /// use the Kuhn triangulation whose cells are split along `x = y`, so the
    /// diagonal is interpolated from diagonal nodes only and the stencil
    /// commutes with swapping the coordinates.
    pub fn stencil(&self, p: Point) -> Result<Stencil, ProcessError> {
        match (*self, p) {
            (StateSpace::Finite { count }, Point::State(i)) => {
                if i < count {
                    Ok(Stencil::node(i))
                } else {
                    Err(ProcessError::Structure(format!(
                        "state {i} out of range 0..{count}"
                    )))
                }
            }
            (StateSpace::UnitGrid { nodes, periodic }, Point::Coord(x)) => {
                if !x.is_finite() {
                    return Err(ProcessError::Structure(format!(
                        "non-finite coordinate {x}"
                    )));
                }
                let (i, j, f) = axis(x, nodes, periodic);
                Ok(Stencil::from_terms(&[(i, 1.0 - f), (j, f)]))
            }
            (StateSpace::GridPairs { nodes, periodic }, Point::Coords(x, y)) => {
                if !x.is_finite() || !y.is_finite() {
                    return Err(ProcessError::Structure(format!(
                        "non-finite coordinates ({x}, {y})"
                    )));
                }
                let (i0, i1, fx) = axis(x, nodes, periodic);
                let (j0, j1, fy) = axis(y, nodes, periodic);
                let at = |i: usize, j: usize| i * nodes + j;
                let terms = if fx >= fy {
                    [
                        (at(i0, j0), 1.0 - fx),
                        (at(i1, j0), fx - fy),
                        (at(i1, j1), fy),
                    ]
                } else {
                    [
                        (at(i0, j0), 1.0 - fy),
                        (at(i0, j1), fy - fx),
                        (at(i1, j1), fx),
                    ]
                };
                Ok(Stencil::from_terms(&terms))
            }
            (space, p) => Err(ProcessError::Structure(format!(
                "point {p} does not belong to {space:?}"
            ))),
        }
    }
}

/// One feasible action at a state.
#[derive(Debug, Clone, PartialEq)]
pub struct Choice {
    pub action: usize,
    pub target: Point,
    pub stencil: Stencil,
    pub reward: f64,
    pub weight: f64,
}

type MapFn = Arc<dyn Fn(f64, usize) -> f64 + Send + Sync>;

#[derive(Clone)]
struct Continuous {
    map: MapFn,
    reward: MapFn,
    weights: Vec<f64>,
}

/// Weights `ν_x` over feasible actions.
#[derive(Debug, Clone, PartialEq)]
pub enum Weights {
    Uniform,
    /// `table[x][a]`, indexed by action id.
    Table(Vec<Vec<f64>>),
}

/// A deterministic decision process with a variable discount.
#[derive(Clone)]
pub struct DecisionProcess {
    space: StateSpace,
    actions: Vec<String>,
    choices: Vec<Vec<Choice>>,
    weight_totals: Vec<f64>,
    /// Weight placed on infeasible actions, per state.
    stray_weight: Vec<f64>,
    discount: DiscountFunction,
    continuous: Option<Continuous>,
    reward_offset: f64,
}

impl fmt::Debug for DecisionProcess {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DecisionProcess")
            .field("space", &self.space)
            .field("actions", &self.actions)
            .field("discount", &self.discount)
            .finish()
    }
}

fn action_labels(n: usize) -> Vec<String> {
    (0..n).map(|a| a.to_string()).collect()
}

impl DecisionProcess {
    /// A finite process from tables indexed `[state][action]`.
    ///
    /// `next[x][a] = None` marks `a` infeasible at `x`; the reward entry of an
    /// infeasible action is ignored.
    pub fn from_tables(
        next: &[Vec<Option<usize>>],
        rewards: &[Vec<f64>],
        weights: Weights,
        discount: DiscountFunction,
    ) -> Result<Self, ProcessError> {
        let count = next.len();
        if count == 0 {
            return Err(ProcessError::Structure("no states".into()));
        }
        let n_actions = next.iter().map(Vec::len).max().unwrap_or(0);
        if rewards.len() != count {
            return Err(ProcessError::Structure(format!(
                "reward table has {} rows for {count} states",
                rewards.len()
            )));
        }
        if let Weights::Table(t) = &weights {
            if t.len() != count {
                return Err(ProcessError::Structure(format!(
                    "weight table has {} rows for {count} states",
                    t.len()
                )));
            }
        }
        let space = StateSpace::Finite { count };
        let mut choices = Vec::with_capacity(count);
        let mut stray = vec![0.0; count];
        for x in 0..count {
            let mut row = Vec::new();
            for (a, target) in next[x].iter().enumerate() {
                let w = match &weights {
                    Weights::Uniform => None,
                    Weights::Table(t) => Some(t[x].get(a).copied().unwrap_or(0.0)),
                };
                let Some(y) = *target else {
                    stray[x] += w.unwrap_or(0.0).abs();
                    continue;
                };
                let reward = *rewards[x].get(a).ok_or_else(|| {
                    ProcessError::Structure(format!("missing reward for state {x}, action {a}"))
                })?;
                let target = Point::State(y);
                row.push(Choice {
                    action: a,
                    target,
                    stencil: space.stencil(target)?,
                    reward,
                    weight: w.unwrap_or(f64::NAN),
                });
            }
            if matches!(weights, Weights::Uniform) {
                let k = row.len() as f64;
                for c in &mut row {
                    c.weight = 1.0 / k;
                }
            }
            choices.push(row);
        }
        Ok(Self::assemble(
            space,
            action_labels(n_actions),
            choices,
            stray,
            discount,
            None,
        ))
    }

    /// A process on the grid `x_i = i/nodes` with `Ψ(x) = A` everywhere.
    ///
    /// `weights` are the state-independent `ν(a)`.
    pub fn on_grid<F, G>(
        nodes: usize,
        periodic: bool,
        n_actions: usize,
        map: F,
        reward: G,
        weights: Vec<f64>,
        discount: DiscountFunction,
    ) -> Result<Self, ProcessError>
    where
        F: Fn(f64, usize) -> f64 + Send + Sync + 'static,
        G: Fn(f64, usize) -> f64 + Send + Sync + 'static,
    {
        if nodes < 2 {
            return Err(ProcessError::Structure(
                "grid needs at least 2 nodes".into(),
            ));
        }
        if n_actions == 0 || weights.len() != n_actions {
            return Err(ProcessError::Structure(format!(
                "{} weights for {n_actions} actions",
                weights.len()
            )));
        }
        let continuous = Continuous {
            map: Arc::new(map),
            reward: Arc::new(reward),
            weights,
        };
        let space = StateSpace::UnitGrid { nodes, periodic };
        let choices = Self::grid_choices(space, &continuous, 0.0)?;
        Ok(Self::assemble(
            space,
            action_labels(n_actions),
            choices,
            vec![0.0; nodes],
            discount,
            Some(continuous),
        ))
    }

    fn grid_choices(
        space: StateSpace,
        c: &Continuous,
        offset: f64,
    ) -> Result<Vec<Vec<Choice>>, ProcessError> {
        let StateSpace::UnitGrid { nodes, .. } = space else {
            unreachable!()
        };
        (0..nodes)
            .map(|i| {
                let x = StateSpace::node_coord(nodes, i);
                (0..c.weights.len())
                    .map(|a| {
                        let target = Point::Coord((c.map)(x, a));
                        Ok(Choice {
                            action: a,
                            target,
                            stencil: space.stencil(target)?,
                            reward: (c.reward)(x, a) + offset,
                            weight: c.weights[a],
                        })
                    })
                    .collect()
            })
            .collect()
    }

    /// Low-level constructor from prebuilt choice lists.
    pub fn from_choices(
        space: StateSpace,
        actions: Vec<String>,
        choices: Vec<Vec<Choice>>,
        discount: DiscountFunction,
    ) -> Result<Self, ProcessError> {
        if choices.len() != space.len() {
            return Err(ProcessError::Structure(format!(
                "{} choice rows for {} states",
                choices.len(),
                space.len()
            )));
        }
        for row in &choices {
            for c in row {
                if c.action >= actions.len() {
                    return Err(ProcessError::Structure(format!(
                        "action {} out of range",
                        c.action
                    )));
                }
                if c.stencil.terms().any(|(i, _)| i >= space.len()) {
                    return Err(ProcessError::Structure("stencil out of range".into()));
                }
            }
        }
        let n = space.len();
        Ok(Self::assemble(
            space,
            actions,
            choices,
            vec![0.0; n],
            discount,
            None,
        ))
    }

    fn assemble(
        space: StateSpace,
        actions: Vec<String>,
        choices: Vec<Vec<Choice>>,
        stray_weight: Vec<f64>,
        discount: DiscountFunction,
        continuous: Option<Continuous>,
    ) -> Self {
        let weight_totals = choices
            .iter()
            .map(|row| row.iter().map(|c| c.weight).sum())
            .collect();
        DecisionProcess {
            space,
            actions,
            choices,
            weight_totals,
            stray_weight,
            discount,
            continuous,
            reward_offset: 0.0,
        }
    }

    pub fn space(&self) -> StateSpace {
        self.space
    }

    pub fn num_states(&self) -> usize {
        self.space.len()
    }

    pub fn num_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn action_label(&self, a: usize) -> &str {
        &self.actions[a]
    }

    pub fn set_action_labels(&mut self, labels: Vec<String>) -> Result<(), ProcessError> {
        if labels.len() != self.actions.len() {
            return Err(ProcessError::Structure(format!(
                "{} labels for {} actions",
                labels.len(),
                self.actions.len()
            )));
        }
        self.actions = labels;
        Ok(())
    }

    pub fn discount(&self) -> &DiscountFunction {
        &self.discount
    }

    /// Feasible choices at state `x`, in increasing action order.
    #[inline]
    pub fn choices(&self, x: usize) -> &[Choice] {
        &self.choices[x]
    }

    pub(crate) fn weight_total(&self, x: usize) -> f64 {
        self.weight_totals[x]
    }

    pub fn feasible_actions(&self, x: usize) -> Vec<usize> {
        self.choices[x].iter().map(|c| c.action).collect()
    }

    pub fn choice(&self, x: usize, action: usize) -> Option<&Choice> {
        self.choices[x].iter().find(|c| c.action == action)
    }

    /// The same process with a different discount.
    pub fn with_discount(&self, discount: DiscountFunction) -> Self {
        DecisionProcess {
            discount,
            ..self.clone()
        }
    }

    /// The same process with weights `table[x][a]` (by action id).
    pub fn with_weights(&self, table: &[Vec<f64>]) -> Result<Self, ProcessError> {
        if table.len() != self.num_states() {
            return Err(ProcessError::Structure("weight table size mismatch".into()));
        }
        let mut out = self.clone();
        for (x, row) in out.choices.iter_mut().enumerate() {
            let mut stray = 0.0;
            for (a, &w) in table[x].iter().enumerate() {
                match row.iter_mut().find(|c| c.action == a) {
                    Some(c) => c.weight = w,
                    None => stray += w.abs(),
                }
            }
            out.stray_weight[x] = stray;
            out.weight_totals[x] = row.iter().map(|c| c.weight).sum();
        }
        Ok(out)
    }

    /// The same process with `c` added to every reward.
    pub fn shifted(&self, c: f64) -> Self {
        let mut out = self.clone();
        for row in &mut out.choices {
            for ch in row {
                ch.reward += c;
            }
        }
        out.reward_offset += c;
        out
    }

    /// Smallest reward over feasible pairs.
    pub fn reward_min(&self) -> f64 {
        self.choices
            .iter()
            .flatten()
            .map(|c| c.reward)
            .fold(f64::INFINITY, f64::min)
    }

    /// `‖u‖∞` over feasible pairs (grid nodes for grid processes).
    pub fn reward_sup_norm(&self) -> f64 {
        self.choices
            .iter()
            .flatten()
            .map(|c| c.reward.abs())
            .fold(0.0, f64::max)
    }

    /// Shift making every reward nonnegative: returns `(u − min u, −min u)`.
    pub fn shift_to_nonnegative(&self) -> (Self, f64) {
        let c = -self.reward_min();
        if c == 0.0 {
            (self.clone(), 0.0)
        } else {
            (self.shifted(c), c)
        }
    }

    /// Common feasible set when `Ψ(x)` is the same for every state.
    pub fn uniform_feasible_set(&self) -> Option<Vec<usize>> {
        let first = self.feasible_actions(0);
        (1..self.num_states())
            .all(|x| self.feasible_actions(x) == first)
            .then_some(first)
    }

    pub fn is_grid(&self) -> bool {
        self.continuous.is_some()
    }

    /// Whether the transition and reward can be evaluated off the grid nodes.
    pub(crate) fn grid_map(&self, x: f64, a: usize) -> Option<f64> {
        self.continuous.as_ref().map(|c| (c.map)(x, a))
    }

    pub(crate) fn grid_reward(&self, x: f64, a: usize) -> Option<f64> {
        self.continuous
            .as_ref()
            .map(|c| (c.reward)(x, a) + self.reward_offset)
    }

    /// Structural and probabilistic sanity checks.
    pub fn validate(&self) -> PropertyReport {
        let mut r = PropertyReport::new("decision process");
        let empty: Vec<usize> = (0..self.num_states())
            .filter(|&x| self.choices[x].is_empty())
            .collect();
        r.push(if empty.is_empty() {
            Check::pass("feasibility-nonempty", "every state has a feasible action")
        } else {
            Check {
                name: "feasibility-nonempty".into(),
                passed: false,
                worst_margin: None,
                witness: Some(format!("{}", self.space.point(empty[0]))),
                detail: format!("{} states with empty feasible set", empty.len()),
            }
        });

        let mut worst = (0.0f64, None);
        for x in 0..self.num_states() {
            if self.choices[x].is_empty() {
                continue;
            }
            let negative = self.choices[x].iter().any(|c| !(c.weight >= 0.0));
            let err = if negative {
                f64::INFINITY
            } else {
                (self.weight_totals[x] - 1.0).abs() + self.stray_weight[x]
            };
            if err > worst.0 || (err.is_nan() && worst.1.is_none()) {
                worst = (err, Some(x));
            }
        }
        let detail = "weights nonnegative, supported on feasible actions, summing to 1";
        r.push(match worst.1 {
            Some(x) if !(worst.0 <= 1e-12) => Check::from_margin(
                "weights-normalized",
                -worst.0,
                format!("{}", self.space.point(x)),
                format!("{detail}; state total {}", self.weight_totals[x]),
            ),
            _ => Check::pass("weights-normalized", detail),
        });

        if let StateSpace::UnitGrid { nodes, .. } = self.space {
            let c = self.continuous.as_ref();
            let mut bad = None;
            'outer: for i in 0..nodes {
                let x = StateSpace::node_coord(nodes, i);
                for ch in &self.choices[i] {
                    let y = match (c, ch.target) {
                        (Some(c), _) => (c.map)(x, ch.action),
                        (None, Point::Coord(y)) => y,
                        _ => continue,
                    };
                    if !(0.0..1.0).contains(&y) {
                        bad = Some((x, ch.action, y));
                        break 'outer;
                    }
                }
            }
            r.push(match bad {
                None => Check::pass("transition-range", "f(x, a) in [0, 1) on every node"),
                Some((x, a, y)) => Check {
                    name: "transition-range".into(),
                    passed: false,
                    worst_margin: None,
                    witness: Some(format!("x={x}, a={a}")),
                    detail: format!("f(x, a) = {y} outside [0, 1)"),
                },
            });
        }

        let bad = self
            .choices
            .iter()
            .enumerate()
            .flat_map(|(x, row)| row.iter().map(move |c| (x, c)))
            .find(|(_, c)| !c.reward.is_finite());
        r.push(match bad {
            None => Check::pass("reward-finite", "all rewards finite"),
            Some((x, c)) => Check {
                name: "reward-finite".into(),
                passed: false,
                worst_margin: None,
                witness: Some(format!("{}, a={}", self.space.point(x), c.action)),
                detail: format!("reward {}", c.reward),
            },
        });
        r
    }

    /// `Ok` when [`DecisionProcess::validate`] passes.
    pub fn ensure_valid(&self) -> Result<(), ProcessError> {
        let report = self.validate();
        if report.passed() {
            Ok(())
        } else {
            let msg: Vec<String> = report
                .failures()
                .map(|c| format!("{}: {}", c.name, c.detail))
                .collect();
            Err(ProcessError::Invalid(msg.join("; ")))
        }
    }

    /// `f(x, a)` and `u(x, a)` at an arbitrary point, checking feasibility.
    pub fn step(&self, x: Point, a: usize) -> Result<(Point, f64), ProcessError> {
        match x {
            Point::State(i) if i < self.num_states() && !self.space.is_grid() => {
                let ch = self.choice(i, a).ok_or(ProcessError::Infeasible {
                    state: x.to_string(),
                    action: a,
                })?;
                Ok((ch.target, ch.reward))
            }
            Point::Coord(y) if self.continuous.is_some() => {
                if a >= self.num_actions() {
                    return Err(ProcessError::Infeasible {
                        state: x.to_string(),
                        action: a,
                    });
                }
                Ok((
                    Point::Coord(self.grid_map(y, a).unwrap()),
                    self.grid_reward(y, a).unwrap(),
                ))
            }
            _ => Err(ProcessError::Structure(format!(
                "point {x} does not belong to {:?}",
                self.space
            ))),
        }
    }
}

/// A finite feasible action sequence from an origin, with its realized states.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeasibleHistory {
    pub origin: Point,
    pub actions: Vec<usize>,
    /// `x_0 = origin, …, x_H`; one longer than `actions`.
    pub states: Vec<Point>,
    /// `u(x_i, a_i)` for each step.
    pub rewards: Vec<f64>,
}

impl FeasibleHistory {
    pub fn new(origin: Point) -> Self {
        FeasibleHistory {
            origin,
            actions: Vec::new(),
            states: vec![origin],
            rewards: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn last_state(&self) -> Point {
        *self.states.last().unwrap()
    }

    /// Builds a history by following `actions` from `origin`.
    pub fn from_actions(
        p: &DecisionProcess,
        origin: Point,
        actions: &[usize],
    ) -> Result<Self, ProcessError> {
        let mut h = FeasibleHistory::new(origin);
        for &a in actions {
            h = extend_history(p, &h, a)?;
        }
        Ok(h)
    }
}

/// Appends a feasible action to `h`.
pub fn extend_history(
    p: &DecisionProcess,
    h: &FeasibleHistory,
    a: usize,
) -> Result<FeasibleHistory, ProcessError> {
    let (next, reward) = p.step(h.last_state(), a)?;
    let mut out = h.clone();
    out.actions.push(a);
    out.states.push(next);
    out.rewards.push(reward);
    Ok(out)
}

/// A truncated star-sum together with the bound on the discarded tail.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InductiveSum {
    pub value: f64,
    /// `γ^H(K)` with `K` bounding every star-sum of the process.
    pub tail_bound: f64,
    pub utility_bound: f64,
}

/// `u₀ + δ(u₁ + δ(… + δ(u_{H−1})))` along `h`.
pub fn inductive_sum(
    p: &DecisionProcess,
    h: &FeasibleHistory,
) -> Result<InductiveSum, ProcessError> {
    if h.is_empty() {
        return Err(ProcessError::Structure("history of length 0".into()));
    }
    let d = p.discount();
    let value = star_sum(d, &h.rewards)?;
    let k = d.star_sum_bound(p.reward_sup_norm());
    Ok(InductiveSum {
        value,
        tail_bound: d.iterate_modulus(k, h.len()),
        utility_bound: k,
    })
}

/// Nested discounted sum of `rewards`, innermost term last.
pub fn star_sum(d: &DiscountFunction, rewards: &[f64]) -> Result<f64, DiscountError> {
    let mut acc = 0.0;
    for (k, &u) in rewards.iter().rev().enumerate() {
        acc = if k == 0 { u } else { u + d.eval(acc)? };
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn doubling() -> DecisionProcess {
        DecisionProcess::on_grid(
            16,
            true,
            2,
            |x, a| 0.5 * x + 0.5 * a as f64,
            |_, _| 1.0,
            vec![0.5, 0.5],
            DiscountFunction::linear(0.5).unwrap(),
        )
        .unwrap()
    }

    fn full_shift() -> DecisionProcess {
        DecisionProcess::from_tables(
            &[vec![Some(0), Some(1)], vec![Some(0), Some(1)]],
            &[vec![0.0, 1.0], vec![2.0, 0.5]],
            Weights::Uniform,
            DiscountFunction::linear(0.5).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn validate_full_shift() {
        let r = full_shift().validate();
        assert!(r.passed(), "{r}");
        assert!(doubling().validate().passed());
    }

    #[test]
    fn validate_reports_empty_feasible_set() {
        let p = DecisionProcess::from_tables(
            &[vec![Some(0), Some(1)], vec![None, None]],
            &[vec![0.0, 1.0], vec![0.0, 0.0]],
            Weights::Uniform,
            DiscountFunction::log(),
        )
        .unwrap();
        let r = p.validate();
        assert!(!r.get("feasibility-nonempty").unwrap().passed);
        assert!(p.ensure_valid().is_err());
    }

    #[test]
    fn validate_reports_bad_weights() {
        let p = DecisionProcess::from_tables(
            &[vec![Some(0), Some(1)], vec![Some(0), Some(1)]],
            &[vec![0.0, 1.0], vec![0.0, 0.0]],
            Weights::Table(vec![vec![0.6, 0.5], vec![0.5, 0.5]]),
            DiscountFunction::log(),
        )
        .unwrap();
        let c = p.validate();
        let c = c.get("weights-normalized").unwrap();
        assert!(!c.passed);
        assert_abs_diff_eq!(c.worst_margin.unwrap(), -0.1, epsilon = 1e-12);

        // weight on an infeasible action
        let p = DecisionProcess::from_tables(
            &[vec![Some(0), None]],
            &[vec![0.0, 0.0]],
            Weights::Table(vec![vec![0.5, 0.5]]),
            DiscountFunction::log(),
        )
        .unwrap();
        assert!(!p.validate().get("weights-normalized").unwrap().passed);
    }

    #[test]
    fn validate_reports_out_of_range_map() {
        let p = DecisionProcess::on_grid(
            8,
            false,
            1,
            |x, _| 2.0 * x,
            |_, _| 0.0,
            vec![1.0],
            DiscountFunction::log(),
        )
        .unwrap();
        assert!(!p.validate().get("transition-range").unwrap().passed);
    }

    #[test]
    fn validate_reports_nonfinite_reward() {
        let p = DecisionProcess::from_tables(
            &[vec![Some(0)]],
            &[vec![f64::NAN]],
            Weights::Uniform,
            DiscountFunction::log(),
        )
        .unwrap();
        assert!(!p.validate().get("reward-finite").unwrap().passed);
    }

    #[test]
    fn extend_history_on_doubling() {
        let p = doubling();
        let h = FeasibleHistory::new(Point::Coord(0.3));
        let h0 = extend_history(&p, &h, 0).unwrap();
        assert_eq!(h0.last_state(), Point::Coord(0.15));
        let h1 = extend_history(&p, &h, 1).unwrap();
        assert_eq!(h1.last_state(), Point::Coord(0.65));
    }

    #[test]
    fn extend_history_rejects_infeasible() {
        // Adjacency forbids prepending 1 in front of 0: Ψ(0) = {0}.
        let p = DecisionProcess::from_tables(
            &[vec![Some(0), None], vec![Some(0), Some(1)]],
            &[vec![0.0, 0.0], vec![0.0, 0.0]],
            Weights::Uniform,
            DiscountFunction::log(),
        )
        .unwrap();
        let h = FeasibleHistory::new(Point::State(0));
        match extend_history(&p, &h, 1) {
            Err(ProcessError::Infeasible { state, action }) => {
                assert_eq!(state, "#0");
                assert_eq!(action, 1);
            }
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn inductive_sum_examples() {
        let p = doubling();
        let h = FeasibleHistory::from_actions(&p, Point::Coord(0.3), &[0, 1, 0]).unwrap();
        let s = inductive_sum(&p, &h).unwrap();
        assert_abs_diff_eq!(s.value, 1.75, epsilon = 1e-15);
        // K = 2, tail γ^3(2) = 0.25
        assert_abs_diff_eq!(s.tail_bound, 0.25, epsilon = 1e-12);

        let zero = p.shifted(-1.0).with_discount(DiscountFunction::log());
        let h = FeasibleHistory::from_actions(&zero, Point::Coord(0.1), &[1, 1, 0, 1]).unwrap();
        assert_eq!(inductive_sum(&zero, &h).unwrap().value, 0.0);

        let logp = p.with_discount(DiscountFunction::log());
        let h = FeasibleHistory::from_actions(&logp, Point::Coord(0.7), &[1, 0]).unwrap();
        assert_abs_diff_eq!(
            inductive_sum(&logp, &h).unwrap().value,
            1.0 + 2f64.ln(),
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(1.0 + 2f64.ln(), 1.693147, epsilon = 1e-6);
    }

    #[test]
    fn inductive_sum_negative_reward_is_domain_error() {
        let p = doubling().shifted(-2.0);
        let h = FeasibleHistory::from_actions(&p, Point::Coord(0.5), &[0, 0]).unwrap();
        assert!(matches!(
            inductive_sum(&p, &h),
            Err(ProcessError::Discount(DiscountError::Domain { .. }))
        ));
        let empty = FeasibleHistory::new(Point::Coord(0.5));
        assert!(inductive_sum(&p, &empty).is_err());
    }

    #[test]
    fn grid_stencil_interpolates_and_wraps() {
        let s = StateSpace::UnitGrid {
            nodes: 4,
            periodic: true,
        };
        let v = [0.0, 1.0, 2.0, 3.0];
        assert_abs_diff_eq!(s.stencil(Point::Coord(0.375)).unwrap().apply(&v), 1.5);
        // between node 3 (x = 0.75) and node 0 (x = 1 ≡ 0)
        assert_abs_diff_eq!(s.stencil(Point::Coord(0.875)).unwrap().apply(&v), 1.5);
        let s = StateSpace::UnitGrid {
            nodes: 4,
            periodic: false,
        };
        assert_abs_diff_eq!(s.stencil(Point::Coord(0.9)).unwrap().apply(&v), 3.0);
    }

    #[test]
    fn pair_stencil_is_exact_on_diagonal_and_symmetric() {
        let nodes = 5;
        let s = StateSpace::GridPairs {
            nodes,
            periodic: true,
        };
        // |x - y| on the nodes, zero on the diagonal.
        let v: Vec<f64> = (0..nodes * nodes)
            .map(|k| ((k / nodes) as f64 - (k % nodes) as f64).abs())
            .collect();
        for &(x, y) in &[(0.13, 0.13), (0.31, 0.5), (0.5, 0.31), (0.05, 0.75)] {
            let a = s.stencil(Point::Coords(x, y)).unwrap().apply(&v);
            let b = s.stencil(Point::Coords(y, x)).unwrap().apply(&v);
            assert_abs_diff_eq!(a, b, epsilon = 1e-14);
            if x == y {
                assert_eq!(a, 0.0);
            }
        }
        assert_abs_diff_eq!(
            s.stencil(Point::Coords(0.31, 0.5)).unwrap().apply(&v),
            (0.5 - 0.31) * nodes as f64,
            epsilon = 1e-12
        );
    }

    #[test]
    fn shift_to_nonnegative_records_constant() {
        let p = full_shift().shifted(-3.0);
        let (q, c) = p.shift_to_nonnegative();
        assert_eq!(c, 3.0);
        assert_eq!(q.reward_min(), 0.0);
        assert_eq!(q.reward_sup_norm(), 2.0);
    }
}
