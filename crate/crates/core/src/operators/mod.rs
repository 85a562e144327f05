//! Bellman, discounted transfer, Ruelle and Koopman operators, and the
//! generalized-contraction fixed-point engine.
//!
//! Every sweep evaluates states independently against an immutable input
//! vector. Large state spaces are swept in parallel.

mod fixed_point;
mod koopman;

pub use fixed_point::{
    fixed_point, iterate_contraction, FixedPointOptions, FixedPointResult, FixedPointStats,
    Operator, TraceRow,
};
pub use koopman::{
    koopman_apply, koopman_fixed_point, sample_histories, HistorySet, HistoryValues,
    KoopmanFixedPoint,
};

use crate::discounts::DiscountError;
use crate::process::{DecisionProcess, Point, ProcessError, StateSpace};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OperatorError {
    #[error(transparent)]
    Discount(#[from] DiscountError),
    #[error(transparent)]
    Process(#[from] ProcessError),
    #[error("no convergence after {iterations} iterations (last update {residual:e})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        trace: Vec<f64>,
    },
    #[error("value function lives on {found:?}, process on {expected:?}")]
    SpaceMismatch {
        expected: StateSpace,
        found: StateSpace,
    },
    #[error("iteration produced a non-finite value")]
    NonFinite,
}

/// A real function on the state representation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValueFunction {
    pub values: Vec<f64>,
    pub space: StateSpace,
}

impl ValueFunction {
    pub fn new(space: StateSpace, values: Vec<f64>) -> Self {
        assert_eq!(space.len(), values.len(), "value vector length");
        ValueFunction { values, space }
    }

    pub fn zeros(space: StateSpace) -> Self {
        Self::constant(space, 0.0)
    }

    pub fn constant(space: StateSpace, c: f64) -> Self {
        ValueFunction {
            values: vec![c; space.len()],
            space,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Value at an arbitrary point, interpolated between grid nodes.
    pub fn eval(&self, p: Point) -> Result<f64, ProcessError> {
        Ok(self.space.stencil(p)?.apply(&self.values))
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn sup_distance(&self, other: &ValueFunction) -> f64 {
        sup_distance(&self.values, &other.values)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ValueFunction {
        ValueFunction {
            values: self.values.iter().map(|&v| f(v)).collect(),
            space: self.space,
        }
    }
}

pub(crate) fn sup_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

const PARALLEL_THRESHOLD: usize = 2048;

fn sweep<F>(n: usize, f: F) -> Result<Vec<f64>, OperatorError>
where
    F: Fn(usize) -> Result<f64, OperatorError> + Sync + Send,
{
    if n >= PARALLEL_THRESHOLD {
        (0..n).into_par_iter().map(f).collect()
    } else {
        (0..n).map(f).collect()
    }
}

fn check_space(p: &DecisionProcess, v: &[f64]) -> Result<(), OperatorError> {
    if v.len() != p.num_states() {
        return Err(OperatorError::SpaceMismatch {
            expected: p.space(),
            found: StateSpace::Finite { count: v.len() },
        });
    }
    Ok(())
}

pub(crate) fn bellman_values(p: &DecisionProcess, v: &[f64]) -> Result<Vec<f64>, OperatorError> {
    check_space(p, v)?;
    let d = p.discount();
    sweep(p.num_states(), |x| {
        let mut best = f64::NEG_INFINITY;
        for c in p.choices(x) {
            let q = c.reward + d.eval(c.stencil.apply(v))?;
            if q > best {
                best = q;
            }
        }
        Ok(best)
    })
}

pub(crate) fn transfer_values(p: &DecisionProcess, w: &[f64]) -> Result<Vec<f64>, OperatorError> {
    check_space(p, w)?;
    let d = p.discount();
    sweep(p.num_states(), |x| {
        let choices = p.choices(x);
        let mut terms = [0.0f64; 16];
        let mut heap;
        let terms: &mut [f64] = if choices.len() <= 16 {
            &mut terms[..choices.len()]
        } else {
            heap = vec![0.0; choices.len()];
            &mut heap
        };
        let mut m = f64::NEG_INFINITY;
        for (t, c) in terms.iter_mut().zip(choices) {
            *t = c.reward + d.eval(c.stencil.apply(w))?;
            if c.weight > 0.0 && *t > m {
                m = *t;
            }
        }
        let s: f64 = terms
            .iter()
            .zip(choices)
            .map(|(t, c)| c.weight * (t - m).exp())
            .sum();
        Ok(m + (s / p.weight_total(x)).ln())
    })
}

pub(crate) fn ruelle_values(p: &DecisionProcess, g: &[f64]) -> Result<Vec<f64>, OperatorError> {
    check_space(p, g)?;
    sweep(p.num_states(), |x| {
        Ok(p.choices(x)
            .iter()
            .map(|c| c.weight * c.reward.exp() * c.stencil.apply(g))
            .sum())
    })
}

/// `B(v)(x) = max_{a ∈ Ψ(x)} u(x, a) + δ(v(f(x, a)))`.
pub fn bellman_apply(
    p: &DecisionProcess,
    v: &ValueFunction,
) -> Result<ValueFunction, OperatorError> {
    Ok(ValueFunction::new(p.space(), bellman_values(p, &v.values)?))
}

/// `P(w)(x) = ln Σ_a ν_x(a) exp(u(x, a) + δ(w(f(x, a))))`, evaluated with
/// max subtraction.
pub fn transfer_apply(
    p: &DecisionProcess,
    w: &ValueFunction,
) -> Result<ValueFunction, OperatorError> {
    Ok(ValueFunction::new(
        p.space(),
        transfer_values(p, &w.values)?,
    ))
}

/// `L(g)(x) = Σ_a ν_x(a) e^{u(x, a)} g(f(x, a))`.
pub fn ruelle_apply(
    p: &DecisionProcess,
    g: &ValueFunction,
) -> Result<ValueFunction, OperatorError> {
    Ok(ValueFunction::new(p.space(), ruelle_values(p, &g.values)?))
}

/// A stationary action choice per state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Policy {
    pub choice: Vec<usize>,
}

/// Greedy policy for `vstar`; ties go to the lowest action index.
pub fn extract_policy(p: &DecisionProcess, vstar: &ValueFunction) -> Result<Policy, OperatorError> {
    check_space(p, &vstar.values)?;
    let d = p.discount();
    let choice = (0..p.num_states())
        .map(|x| {
            let mut best = (f64::NEG_INFINITY, usize::MAX);
            for c in p.choices(x) {
                let q = c.reward + d.eval(c.stencil.apply(&vstar.values))?;
                if q > best.0 {
                    best = (q, c.action);
                }
            }
            Ok(best.1)
        })
        .collect::<Result<Vec<_>, OperatorError>>()?;
    Ok(Policy { choice })
}

/// `sup_x |u(x, π(x)) + δ(v(f(x, π(x)))) − v(x)|`.
pub fn policy_equation_gap(
    p: &DecisionProcess,
    policy: &Policy,
    v: &ValueFunction,
) -> Result<f64, OperatorError> {
    let d = p.discount();
    let mut gap: f64 = 0.0;
    for x in 0..p.num_states() {
        let c = p
            .choice(x, policy.choice[x])
            .ok_or(ProcessError::Infeasible {
                state: p.space().point(x).to_string(),
                action: policy.choice[x],
            })?;
        let rhs = c.reward + d.eval(c.stencil.apply(&v.values))?;
        gap = gap.max((rhs - v.values[x]).abs());
    }
    Ok(gap)
}

/// Weights putting all mass on the action chosen by `policy`.
pub fn dirac_weights(p: &DecisionProcess, policy: &Policy) -> Vec<Vec<f64>> {
    (0..p.num_states())
        .map(|x| {
            let mut row = vec![0.0; p.num_actions()];
            row[policy.choice[x]] = 1.0;
            row
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discounts::DiscountFunction;
    use crate::process::Weights;
    use approx::assert_abs_diff_eq;

    fn constant_process(c: f64, d: DiscountFunction) -> DecisionProcess {
        DecisionProcess::from_tables(
            &[
                vec![Some(0), Some(1)],
                vec![Some(1), Some(0)],
                vec![Some(2), Some(0)],
            ],
            &[vec![c, c], vec![c, c], vec![c, c]],
            Weights::Table(vec![vec![0.3, 0.7], vec![0.5, 0.5], vec![0.9, 0.1]]),
            d,
        )
        .unwrap()
    }

    fn two_state() -> DecisionProcess {
        DecisionProcess::from_tables(
            &[vec![Some(0), Some(1)], vec![Some(0), Some(1)]],
            &[vec![1.0, 0.0], vec![0.0, 2.0]],
            Weights::Uniform,
            DiscountFunction::linear(0.5).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn bellman_examples() {
        let p = constant_process(1.0, DiscountFunction::linear(0.5).unwrap());
        let v = ValueFunction::constant(p.space(), 2.0);
        let b = bellman_apply(&p, &v).unwrap();
        assert!(b.values.iter().all(|&x| x == 2.0));

        let p = constant_process(0.0, DiscountFunction::log());
        let z = ValueFunction::zeros(p.space());
        assert_eq!(bellman_apply(&p, &z).unwrap().values, vec![0.0; 3]);

        let p = two_state();
        let b = bellman_apply(&p, &ValueFunction::zeros(p.space())).unwrap();
        assert_eq!(b.values, vec![1.0, 2.0]);
    }

    #[test]
    fn bellman_rejects_negative_continuation() {
        let p = two_state();
        let v = ValueFunction::constant(p.space(), -1.0);
        assert!(matches!(
            bellman_apply(&p, &v),
            Err(OperatorError::Discount(DiscountError::Domain { .. }))
        ));
        assert!(transfer_apply(&p, &v).is_err());
    }

    #[test]
    fn transfer_examples() {
        let p = constant_process(0.7, DiscountFunction::linear(0.25).unwrap());
        let w = ValueFunction::constant(p.space(), 3.0);
        let out = transfer_apply(&p, &w).unwrap();
        for v in out.values {
            assert_abs_diff_eq!(v, 0.7 + 0.75, epsilon = 1e-14);
        }
        let p = constant_process(0.0, DiscountFunction::log());
        let out = transfer_apply(&p, &ValueFunction::zeros(p.space())).unwrap();
        assert!(out.values.iter().all(|&v| v == 0.0));

        let p = DecisionProcess::from_tables(
            &[vec![Some(0), Some(0)]],
            &[vec![0.0, 3f64.ln()]],
            Weights::Uniform,
            DiscountFunction::log(),
        )
        .unwrap();
        let out = transfer_apply(&p, &ValueFunction::zeros(p.space())).unwrap();
        assert_abs_diff_eq!(out.values[0], 2f64.ln(), epsilon = 1e-15);
    }

    #[test]
    fn transfer_is_stable_for_large_arguments() {
        let p = constant_process(800.0, DiscountFunction::linear(0.5).unwrap());
        let w = ValueFunction::constant(p.space(), 1000.0);
        let out = transfer_apply(&p, &w).unwrap();
        assert!(out.values.iter().all(|&v| (v - 1300.0).abs() < 1e-10));
    }

    #[test]
    fn ruelle_examples() {
        let p = constant_process(0.0, DiscountFunction::log());
        let one = ValueFunction::constant(p.space(), 1.0);
        for v in ruelle_apply(&p, &one).unwrap().values {
            assert_abs_diff_eq!(v, 1.0, epsilon = 1e-15);
        }
        let p = constant_process(0.4, DiscountFunction::log());
        for v in ruelle_apply(&p, &one).unwrap().values {
            assert_abs_diff_eq!(v, 0.4f64.exp(), epsilon = 1e-14);
        }
    }

    #[test]
    fn transfer_matches_log_ruelle_at_zero() {
        let base = two_state();
        for eps in [0.5, 0.1, 1e-3] {
            let p = base.with_discount(DiscountFunction::linear(1.0 - eps).unwrap());
            let z = ValueFunction::zeros(p.space());
            let one = ValueFunction::constant(p.space(), 1.0);
            let lhs = transfer_apply(&p, &z).unwrap();
            let rhs = ruelle_apply(&p, &one).unwrap();
            for (a, b) in lhs.values.iter().zip(&rhs.values) {
                assert_abs_diff_eq!(*a, b.ln(), epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn policy_examples() {
        let p = two_state();
        let v = fixed_point(Operator::Bellman, &p, None, &FixedPointOptions::default())
            .unwrap()
            .solution;
        let pol = extract_policy(&p, &v).unwrap();
        assert_eq!(pol.choice[1], 1);
        assert!(policy_equation_gap(&p, &pol, &v).unwrap() <= 2e-10);

        let p = constant_process(1.0, DiscountFunction::log());
        let v = ValueFunction::constant(p.space(), 5.0);
        assert_eq!(extract_policy(&p, &v).unwrap().choice, vec![0, 0, 0]);
    }

    #[test]
    fn space_mismatch_is_reported() {
        let p = two_state();
        let v = ValueFunction::zeros(StateSpace::Finite { count: 3 });
        assert!(matches!(
            bellman_apply(&p, &v),
            Err(OperatorError::SpaceMismatch { .. })
        ));
    }
}
