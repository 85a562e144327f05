//! The joint process on pairs of states, its value `V̂*`, and the
//! regularity bounds it certifies for Bellman and transfer fixed points.
//!
//! `V̂*` dominates the transfer fixed point only when the weights `ν` do not
//! depend on the state; grid processes always satisfy this.

use crate::operators::{
    fixed_point, FixedPointOptions, FixedPointResult, Operator, OperatorError, ValueFunction,
};
use crate::process::{Choice, DecisionProcess, Point, ProcessError, StateSpace};
use crate::report::{Check, PropertyReport};
use serde::Serialize;
use thiserror::Error;

/// Default cap on the number of pair nodes of a joint grid.
pub const DEFAULT_PAIR_BUDGET: usize = 65_536;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegularityError {
    #[error(transparent)]
    Process(#[from] ProcessError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error("feasible actions depend on the state; the joint process needs Ψ(x) = Ψ(y)")]
    NonUniformFeasibility,
    #[error("transition is not contractive (estimated λ = {lambda})")]
    NotContractive { lambda: f64 },
    #[error("operation needs a grid process")]
    NotGrid,
}

/// The joint process over pairs `(x, y)` with reward `|u(x, a) − u(y, a)|`
/// and discount `γ`.
#[derive(Debug, Clone)]
pub struct JointProcess {
    pub process: DecisionProcess,
    pub base_space: StateSpace,
    /// Nodes per axis of the pair grid (states for finite processes).
    pub pair_nodes: usize,
    /// Whether the pair grid is coarser than the base grid.
    pub subsampled: bool,
}

impl JointProcess {
    /// `V̂*(x, y)` for base state indices `x`, `y`.
    pub fn value(&self, vhat: &ValueFunction, x: usize, y: usize) -> Result<f64, ProcessError> {
        match self.base_space {
            StateSpace::Finite { count } => Ok(vhat.values[x * count + y]),
            StateSpace::UnitGrid { nodes, .. } if !self.subsampled => {
                Ok(vhat.values[x * nodes + y])
            }
            StateSpace::UnitGrid { nodes, .. } => vhat.eval(Point::Coords(
                StateSpace::node_coord(nodes, x),
                StateSpace::node_coord(nodes, y),
            )),
            StateSpace::GridPairs { .. } => Err(ProcessError::Structure(
                "base process is already a pair process".into(),
            )),
        }
    }
}

pub fn build_joint(p: &DecisionProcess) -> Result<JointProcess, RegularityError> {
    build_joint_with_budget(p, DEFAULT_PAIR_BUDGET)
}

/// Joint process; grid bases whose pair count exceeds `budget` get a
/// coarser pair grid.
pub fn build_joint_with_budget(
    p: &DecisionProcess,
    budget: usize,
) -> Result<JointProcess, RegularityError> {
    let actions = p
        .uniform_feasible_set()
        .ok_or(RegularityError::NonUniformFeasibility)?;
    let gamma = p.discount().modulus_discount();
    let labels: Vec<String> = (0..p.num_actions())
        .map(|a| p.action_label(a).to_string())
        .collect();
    let w = 1.0 / actions.len() as f64;
    match p.space() {
        StateSpace::Finite { count } => {
            let space = StateSpace::Finite {
                count: count * count,
            };
            let mut rows = Vec::with_capacity(count * count);
            for x in 0..count {
                for y in 0..count {
                    let row = actions
                        .iter()
                        .map(|&a| {
                            let cx = p.choice(x, a).unwrap();
                            let cy = p.choice(y, a).unwrap();
                            let (Point::State(fx), Point::State(fy)) = (cx.target, cy.target)
                            else {
                                unreachable!()
                            };
                            let target = Point::State(fx * count + fy);
                            Ok(Choice {
                                action: a,
                                target,
                                stencil: space.stencil(target)?,
                                reward: (cx.reward - cy.reward).abs(),
                                weight: w,
                            })
                        })
                        .collect::<Result<Vec<_>, ProcessError>>()?;
                    rows.push(row);
                }
            }
            Ok(JointProcess {
                process: DecisionProcess::from_choices(space, labels, rows, gamma)?,
                base_space: p.space(),
                pair_nodes: count,
                subsampled: false,
            })
        }
        StateSpace::UnitGrid { nodes, periodic } => {
            let m = if nodes * nodes <= budget {
                nodes
            } else {
                ((budget as f64).sqrt().floor() as usize).max(2)
            };
            let space = StateSpace::GridPairs { nodes: m, periodic };
            let mut rows = Vec::with_capacity(m * m);
            for i in 0..m {
                let x = StateSpace::node_coord(m, i);
                for j in 0..m {
                    let y = StateSpace::node_coord(m, j);
                    let row = actions
                        .iter()
                        .map(|&a| {
                            let (fx, ux) = p.step(Point::Coord(x), a)?;
                            let (fy, uy) = p.step(Point::Coord(y), a)?;
                            let (Point::Coord(fx), Point::Coord(fy)) = (fx, fy) else {
                                unreachable!()
                            };
                            let target = Point::Coords(fx, fy);
                            Ok(Choice {
                                action: a,
                                target,
                                stencil: space.stencil(target)?,
                                reward: (ux - uy).abs(),
                                weight: w,
                            })
                        })
                        .collect::<Result<Vec<_>, ProcessError>>()?;
                    rows.push(row);
                }
            }
            Ok(JointProcess {
                process: DecisionProcess::from_choices(space, labels, rows, gamma)?,
                base_space: p.space(),
                pair_nodes: m,
                subsampled: m < nodes,
            })
        }
        StateSpace::GridPairs { .. } => Err(RegularityError::NotGrid),
    }
}

/// `V̂*`, the Bellman fixed point of the joint process.
pub fn vhat_solve(
    j: &JointProcess,
    opts: &FixedPointOptions,
) -> Result<FixedPointResult, RegularityError> {
    Ok(fixed_point(Operator::Bellman, &j.process, None, opts)?)
}

fn base_len(j: &JointProcess) -> usize {
    j.base_space.len()
}

/// Nonnegativity, symmetry and the zero diagonal of `V̂*`, within `slack`.
pub fn check_vhat_properties(
    j: &JointProcess,
    vhat: &ValueFunction,
    slack: f64,
) -> Result<PropertyReport, RegularityError> {
    let n = base_len(j);
    let mut neg = (f64::INFINITY, String::new());
    let mut asym = (f64::INFINITY, String::new());
    let mut diag = (f64::INFINITY, String::new());
    for x in 0..n {
        for y in 0..n {
            let v = j.value(vhat, x, y)?;
            if v < neg.0 {
                neg = (v, format!("({x}, {y})"));
            }
            let m = -(v - j.value(vhat, y, x)?).abs();
            if m < asym.0 {
                asym = (m, format!("({x}, {y})"));
            }
            if x == y && -v.abs() < diag.0 {
                diag = (-v.abs(), format!("({x}, {x})"));
            }
        }
    }
    let mut r = PropertyReport::new("joint value");
    r.push(Check::from_margin(
        "nonnegative",
        neg.0 + slack,
        neg.1,
        format!("min V̂* = {:e}", neg.0),
    ));
    r.push(Check::from_margin(
        "symmetric",
        asym.0 + slack,
        asym.1,
        format!("max asymmetry {:e}", -asym.0),
    ));
    r.push(Check::from_margin(
        "zero-diagonal",
        diag.0 + slack,
        diag.1,
        format!("max |V̂*(x, x)| {:e}", -diag.0),
    ));
    Ok(r)
}

/// `|sol(x) − sol(y)| ≤ V̂*(x, y) + slack` over all pairs of base states.
pub fn check_domination_bound(
    j: &JointProcess,
    solution: &ValueFunction,
    vhat: &ValueFunction,
    slack: f64,
) -> Result<PropertyReport, RegularityError> {
    let n = base_len(j);
    if solution.len() != n {
        return Err(OperatorError::SpaceMismatch {
            expected: j.base_space,
            found: solution.space,
        }
        .into());
    }
    let mut worst = (f64::INFINITY, String::new());
    for x in 0..n {
        for y in 0..n {
            let m = j.value(vhat, x, y)? + slack - (solution.values[x] - solution.values[y]).abs();
            if m < worst.0 {
                worst = (m, format!("({x}, {y})"));
            }
        }
    }
    let mut r = PropertyReport::new("domination by the joint value");
    r.push(Check::from_margin(
        "domination",
        worst.0,
        worst.1,
        format!("worst margin {:e}", worst.0),
    ));
    Ok(r)
}

/// Off-diagonal zeros of `V̂*` on `pairs`; zeros are degeneracy witnesses.
pub fn check_separating(
    j: &JointProcess,
    vhat: &ValueFunction,
    pairs: &[(usize, usize)],
) -> Result<PropertyReport, RegularityError> {
    let mut r = PropertyReport::new("separation");
    let mut zeros = Vec::new();
    let mut smallest = f64::INFINITY;
    let mut diag_worst: f64 = 0.0;
    for &(x, y) in pairs {
        let v = j.value(vhat, x, y)?;
        if x == y {
            diag_worst = diag_worst.max(v.abs());
        } else {
            smallest = smallest.min(v);
            if v <= 0.0 {
                zeros.push(format!("({x}, {y})"));
            }
        }
    }
    if zeros.is_empty() {
        r.push(Check::pass(
            "separating",
            format!("smallest off-diagonal value {smallest:e}"),
        ));
    } else {
        r.push(Check {
            name: "separating".into(),
            passed: false,
            worst_margin: Some(smallest),
            witness: Some(zeros[0].clone()),
            detail: format!("{} degenerate pairs", zeros.len()),
        });
    }
    r.push(Check {
        name: "diagonal-zero".into(),
        passed: diag_worst == 0.0,
        worst_margin: Some(-diag_worst),
        witness: None,
        detail: format!("max |V̂*(x, x)| = {diag_worst:e}"),
    });
    Ok(r)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipschitzOptions {
    /// Hölder exponent; 1 gives the Lipschitz case.
    pub alpha: f64,
    /// Supplied contraction factor of the transitions.
    pub lambda: Option<f64>,
    /// Supplied Hölder constant of the reward.
    pub reward_constant: Option<f64>,
    /// Whether the pair `(x_{N−1}, x_0)` of a periodic grid counts as adjacent.
    pub include_wrap: bool,
}

impl Default for LipschitzOptions {
    fn default() -> Self {
        LipschitzOptions {
            alpha: 1.0,
            lambda: None,
            reward_constant: None,
            include_wrap: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LipschitzCertificate {
    pub alpha: f64,
    pub lambda: f64,
    pub reward_constant: f64,
    /// Whether `λ` and `C` came from the caller rather than node differences.
    pub supplied: bool,
    /// `C / (1 − λ^α)`.
    pub bound: f64,
    pub slack: f64,
    /// Largest `|v(x_{i+1}) − v(x_i)| / h^α` over adjacent nodes.
    pub empirical: f64,
    pub worst_node: usize,
}

impl LipschitzCertificate {
    pub fn holds(&self) -> bool {
        self.empirical <= self.bound + self.slack
    }
}

/// Contraction factor and reward constant from interior adjacent nodes.
pub fn estimate_constants(p: &DecisionProcess, alpha: f64) -> Result<(f64, f64), RegularityError> {
    let StateSpace::UnitGrid { nodes, .. } = p.space() else {
        return Err(RegularityError::NotGrid);
    };
    let h = 1.0 / nodes as f64;
    let mut lambda: f64 = 0.0;
    let mut c: f64 = 0.0;
    for i in 0..nodes - 1 {
        let (x0, x1) = (
            StateSpace::node_coord(nodes, i),
            StateSpace::node_coord(nodes, i + 1),
        );
        for a in 0..p.num_actions() {
            let (Point::Coord(f0), u0) = p.step(Point::Coord(x0), a)? else {
                unreachable!()
            };
            let (Point::Coord(f1), u1) = p.step(Point::Coord(x1), a)? else {
                unreachable!()
            };
            lambda = lambda.max((f1 - f0).abs() / h);
            c = c.max((u1 - u0).abs() / h.powf(alpha));
        }
    }
    Ok((lambda, c))
}

/// Empirical Hölder constant of `solution` against `C / (1 − λ^α)`.
///
/// The slack `C·h^α/(1 − λ^α)` absorbs the difference between interior
/// estimates and the wrap-around pair of periodic grids.
pub fn lipschitz_certificate(
    p: &DecisionProcess,
    solution: &ValueFunction,
    opts: &LipschitzOptions,
) -> Result<LipschitzCertificate, RegularityError> {
    let StateSpace::UnitGrid { nodes, periodic } = p.space() else {
        return Err(RegularityError::NotGrid);
    };
    let periodic = periodic && opts.include_wrap;
    let (est_lambda, est_c) = estimate_constants(p, opts.alpha)?;
    let lambda = opts.lambda.unwrap_or(est_lambda);
    let c = opts.reward_constant.unwrap_or(est_c);
    if lambda >= 1.0 {
        return Err(RegularityError::NotContractive { lambda });
    }
    let h = 1.0 / nodes as f64;
    let pairs = if periodic { nodes } else { nodes - 1 };
    let mut empirical: f64 = 0.0;
    let mut worst_node = 0;
    for i in 0..pairs {
        let s = (solution.values[(i + 1) % nodes] - solution.values[i]).abs() / h.powf(opts.alpha);
        if s > empirical {
            empirical = s;
            worst_node = i;
        }
    }
    let denom = 1.0 - lambda.powf(opts.alpha);
    Ok(LipschitzCertificate {
        alpha: opts.alpha,
        lambda,
        reward_constant: c,
        supplied: opts.lambda.is_some() || opts.reward_constant.is_some(),
        bound: c / denom,
        slack: c * h.powf(opts.alpha) / denom,
        empirical,
        worst_node,
    })
}

/// Everything the regularity command reports.
#[derive(Debug, Clone, Serialize)]
pub struct RegularityReport {
    pub pair_nodes: usize,
    pub subsampled: bool,
    pub vhat_iterations: usize,
    /// `max V̂*`, the uniform bound on oscillations.
    pub uniform_bound: f64,
    pub properties: PropertyReport,
    pub bellman_domination: PropertyReport,
    pub transfer_domination: Option<PropertyReport>,
    pub separation: PropertyReport,
    pub lipschitz: Option<LipschitzCertificate>,
}

impl RegularityReport {
    pub fn passed(&self) -> bool {
        self.properties.passed()
            && self.bellman_domination.passed()
            && self.transfer_domination.as_ref().is_none_or(|r| r.passed())
            && self.lipschitz.is_none_or(|l| l.holds())
    }
}

/// Builds the joint process, solves both fixed points and checks every bound.
pub fn regularity_report(
    p: &DecisionProcess,
    opts: &FixedPointOptions,
    lip: &LipschitzOptions,
    slack: f64,
) -> Result<RegularityReport, RegularityError> {
    let (q, _) = if p.reward_min() < 0.0 {
        p.shift_to_nonnegative()
    } else {
        (p.clone(), 0.0)
    };
    let j = build_joint(&q)?;
    let vr = vhat_solve(&j, opts)?;
    let vhat = &vr.solution;
    let tol2 = 2.0 * opts.tol + slack;
    let v = fixed_point(Operator::Bellman, &q, None, opts)?.solution;
    let state_free_weights = q.space().is_grid() || weights_state_free(&q);
    let transfer_domination = if state_free_weights {
        let w = fixed_point(Operator::Transfer, &q, None, opts)?.solution;
        Some(check_domination_bound(&j, &w, vhat, tol2)?)
    } else {
        None
    };
    let n = q.num_states();
    let step = (n / 64).max(1);
    let pairs: Vec<(usize, usize)> = (0..n)
        .step_by(step)
        .flat_map(|x| (0..n).step_by(step).map(move |y| (x, y)))
        .collect();
    Ok(RegularityReport {
        pair_nodes: j.pair_nodes,
        subsampled: j.subsampled,
        vhat_iterations: vr.iterations(),
        uniform_bound: vhat.max(),
        properties: check_vhat_properties(&j, vhat, tol2)?,
        bellman_domination: check_domination_bound(&j, &v, vhat, tol2)?,
        transfer_domination,
        separation: check_separating(&j, vhat, &pairs)?,
        lipschitz: if q.space().is_grid() {
            Some(lipschitz_certificate(&q, &v, lip)?)
        } else {
            None
        },
    })
}

fn weights_state_free(p: &DecisionProcess) -> bool {
    let first: Vec<(usize, f64)> = p.choices(0).iter().map(|c| (c.action, c.weight)).collect();
    (1..p.num_states()).all(|x| {
        p.choices(x)
            .iter()
            .map(|c| (c.action, c.weight))
            .eq(first.iter().copied())
    })
}
