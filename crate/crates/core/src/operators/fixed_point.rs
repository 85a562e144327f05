use super::{bellman_values, sup_distance, transfer_values, OperatorError, ValueFunction};
use crate::discounts::DiscountFunction;
use crate::process::DecisionProcess;
use serde::Serialize;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Operator {
    Bellman,
    Transfer,
}

impl fmt::Display for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Operator::Bellman => "bellman",
            Operator::Transfer => "transfer",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPointOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub keep_trace: bool,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        FixedPointOptions {
            tol: 1e-10,
            max_iter: 1_000_000,
            keep_trace: false,
        }
    }
}

/// One iteration of the residual trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub update: f64,
    /// `γ^k(Δ₀)`.
    pub certificate: f64,
    /// `Δ_k / γ(Δ_{k−1})`, when `Δ_{k−1}` is above the rounding floor.
    pub ratio: Option<f64>,
}

/// Convergence diagnostics of a contraction iteration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FixedPointStats {
    pub iterations: usize,
    /// Sup-norm of the last update.
    pub final_residual: f64,
    /// `γ^n(Δ₀)` with `Δ₀` the first update.
    pub certified_bound: f64,
    pub max_contraction_ratio: f64,
    pub trace: Vec<TraceRow>,
}

impl FixedPointStats {
    /// Whether every measured ratio stayed below `1 + 1e-9`.
    pub fn contraction_ok(&self) -> bool {
        self.max_contraction_ratio <= 1.0 + 1e-9
    }

    pub fn trace_csv(&self) -> String {
        let mut s = String::from("iteration,update,certificate,ratio\n");
        for r in &self.trace {
            let ratio = r.ratio.map(|x| format!("{x:e}")).unwrap_or_default();
            s.push_str(&format!(
                "{},{:e},{:e},{}\n",
                r.iteration, r.update, r.certificate, ratio
            ));
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FixedPointResult {
    pub solution: ValueFunction,
    pub operator: Operator,
    /// Constant added to the rewards before iterating; the solution belongs
    /// to the shifted process when nonzero.
    pub shift: f64,
    #[serde(flatten)]
    pub stats: FixedPointStats,
}

impl FixedPointResult {
    pub fn iterations(&self) -> usize {
        self.stats.iterations
    }

    pub fn final_residual(&self) -> f64 {
        self.stats.final_residual
    }

    pub fn certified_bound(&self) -> f64 {
        self.stats.certified_bound
    }
}

/// Iterates `step` from `v0` until the sup-norm update is at most `tol`.
///
/// `modulus` is the contraction modulus used for the certificate and the
/// ratio diagnostics.
pub fn iterate_contraction<F>(
    v0: Vec<f64>,
    modulus: &DiscountFunction,
    opts: &FixedPointOptions,
    mut step: F,
) -> Result<(Vec<f64>, FixedPointStats), OperatorError>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>, OperatorError>,
{
    let mut v = v0;
    let mut trace = Vec::new();
    let mut all_updates = Vec::new();
    let mut certificate = f64::NAN;
    let mut prev: Option<f64> = None;
    let mut max_ratio: f64 = 0.0;
    for k in 0..opts.max_iter {
        let next = step(&v)?;
        if next.iter().any(|x| !x.is_finite()) {
            return Err(OperatorError::NonFinite);
        }
        let delta = sup_distance(&next, &v);
        let scale = next.iter().fold(1.0f64, |m, x| m.max(x.abs()));
        certificate = if k == 0 {
            delta
        } else {
            modulus.modulus(certificate)
        };
        let mut ratio = None;
        if let Some(p) = prev {
            if p > 64.0 * f64::EPSILON * scale {
                let r = delta / modulus.modulus(p);
                max_ratio = max_ratio.max(r);
                ratio = Some(r);
            }
        }
        if opts.keep_trace {
            trace.push(TraceRow {
                iteration: k + 1,
                update: delta,
                certificate,
                ratio,
            });
        }
        all_updates.push(delta);
        v = next;
        prev = Some(delta);
        if delta <= opts.tol {
            return Ok((
                v,
                FixedPointStats {
                    iterations: k + 1,
                    final_residual: delta,
                    certified_bound: certificate,
                    max_contraction_ratio: max_ratio,
                    trace,
                },
            ));
        }
    }
    Err(OperatorError::NonConvergence {
        iterations: opts.max_iter,
        residual: prev.unwrap_or(f64::NAN),
        trace: all_updates,
    })
}

/// Fixed point of the Bellman or transfer operator of `p`.
///
/// Rewards are shifted to be nonnegative first when some reward is
/// negative; the applied constant is returned in `shift`.
pub fn fixed_point(
    op: Operator,
    p: &DecisionProcess,
    v0: Option<&ValueFunction>,
    opts: &FixedPointOptions,
) -> Result<FixedPointResult, OperatorError> {
    if !(opts.tol > 0.0) {
        return Err(
            crate::process::ProcessError::Invalid("tolerance must be positive".into()).into(),
        );
    }
    p.ensure_valid()?;
    let (q, shift) = if p.reward_min() < 0.0 {
        p.shift_to_nonnegative()
    } else {
        (p.clone(), 0.0)
    };
    let v0 = match v0 {
        Some(v) => {
            if v.space != q.space() {
                return Err(OperatorError::SpaceMismatch {
                    expected: q.space(),
                    found: v.space,
                });
            }
            v.values.clone()
        }
        None => vec![0.0; q.num_states()],
    };
    let (values, stats) = iterate_contraction(v0, q.discount(), opts, |v| match op {
        Operator::Bellman => bellman_values(&q, v),
        Operator::Transfer => transfer_values(&q, v),
    })?;
    Ok(FixedPointResult {
        solution: ValueFunction::new(q.space(), values),
        operator: op,
        shift,
        stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{bellman_apply, dirac_weights, extract_policy, transfer_apply};
    use crate::process::{StateSpace, Weights};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn constant_reward(d: DiscountFunction) -> DecisionProcess {
        DecisionProcess::from_tables(
            &[vec![Some(1), Some(0)], vec![Some(0), Some(1)]],
            &[vec![1.0, 1.0], vec![1.0, 1.0]],
            Weights::Uniform,
            d,
        )
        .unwrap()
    }

    // Root of v = 1 + ln(1 + v) by bisection.
    fn log_scalar_root() -> f64 {
        let (mut lo, mut hi) = (1.0f64, 10.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid - 1.0 - (1.0 + mid).ln() > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn linear_constant_reward() {
        let p = constant_reward(DiscountFunction::linear(0.5).unwrap());
        let r = fixed_point(Operator::Bellman, &p, None, &FixedPointOptions::default()).unwrap();
        for v in &r.solution.values {
            assert_abs_diff_eq!(*v, 2.0, epsilon = 1e-10);
        }
        assert!(r.final_residual() <= 1e-10);
        assert!(r.stats.contraction_ok());
        assert_eq!(r.shift, 0.0);
    }

    #[test]
    fn log_constant_reward() {
        let vbar = log_scalar_root();
        assert_abs_diff_eq!(vbar, 2.14619, epsilon = 1e-5);
        let p = constant_reward(DiscountFunction::log());
        for op in [Operator::Bellman, Operator::Transfer] {
            let r = fixed_point(op, &p, None, &FixedPointOptions::default()).unwrap();
            for v in &r.solution.values {
                assert_abs_diff_eq!(*v, vbar, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn dirac_weights_recover_bellman() {
        let p = DecisionProcess::from_tables(
            &[
                vec![Some(0), Some(1), Some(2)],
                vec![Some(2), None, Some(0)],
                vec![Some(1), Some(1), Some(0)],
            ],
            &[
                vec![0.3, 1.2, 0.1],
                vec![0.9, 0.0, 0.2],
                vec![0.0, 0.5, 1.5],
            ],
            Weights::Uniform,
            DiscountFunction::log(),
        )
        .unwrap();
        let opts = FixedPointOptions::default();
        let v = fixed_point(Operator::Bellman, &p, None, &opts)
            .unwrap()
            .solution;
        let pol = extract_policy(&p, &v).unwrap();
        let q = p.with_weights(&dirac_weights(&p, &pol)).unwrap();
        let w = fixed_point(Operator::Transfer, &q, None, &opts)
            .unwrap()
            .solution;
        for (a, b) in v.values.iter().zip(&w.values) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-9);
        }
        let w_uniform = fixed_point(Operator::Transfer, &p, None, &opts)
            .unwrap()
            .solution;
        for (a, b) in w_uniform.values.iter().zip(&v.values) {
            assert!(*a <= *b + 2e-10);
        }
    }

    #[test]
    fn negative_rewards_are_shifted() {
        let p = constant_reward(DiscountFunction::linear(0.5).unwrap()).shifted(-3.0);
        let r = fixed_point(Operator::Bellman, &p, None, &FixedPointOptions::default()).unwrap();
        assert_eq!(r.shift, 2.0);
        assert_abs_diff_eq!(r.solution.values[0], 0.0, epsilon = 1e-10);
    }

    #[test]
    fn non_convergence_carries_trace() {
        let p = constant_reward(DiscountFunction::linear(0.99).unwrap());
        let opts = FixedPointOptions {
            tol: 1e-12,
            max_iter: 5,
            keep_trace: false,
        };
        match fixed_point(Operator::Bellman, &p, None, &opts) {
            Err(OperatorError::NonConvergence {
                iterations, trace, ..
            }) => {
                assert_eq!(iterations, 5);
                assert_eq!(trace.len(), 5);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn certificate_tracks_updates() {
        let p = constant_reward(DiscountFunction::linear(0.5).unwrap());
        let opts = FixedPointOptions {
            keep_trace: true,
            ..Default::default()
        };
        let r = fixed_point(Operator::Bellman, &p, None, &opts).unwrap();
        for row in &r.stats.trace {
            assert!(row.update <= row.certificate * (1.0 + 1e-12));
        }
        assert!(r.stats.trace_csv().starts_with("iteration,update"));
    }

    fn random_process(
        n: usize,
        m: usize,
        targets: &[usize],
        rewards: &[f64],
        weights: &[f64],
        d: DiscountFunction,
    ) -> DecisionProcess {
        let next: Vec<Vec<Option<usize>>> = (0..n)
            .map(|x| (0..m).map(|a| Some(targets[x * m + a] % n)).collect())
            .collect();
        let u: Vec<Vec<f64>> = (0..n)
            .map(|x| rewards[x * m..(x + 1) * m].to_vec())
            .collect();
        let w: Vec<Vec<f64>> = (0..n)
            .map(|x| {
                let row = &weights[x * m..(x + 1) * m];
                let s: f64 = row.iter().sum();
                row.iter().map(|v| v / s).collect()
            })
            .collect();
        DecisionProcess::from_tables(&next, &u, Weights::Table(w), d).unwrap()
    }

    fn discount_strategy() -> impl Strategy<Value = DiscountFunction> {
        prop_oneof![
            (0.05f64..0.99).prop_map(|b| DiscountFunction::linear(b).unwrap()),
            Just(DiscountFunction::log()),
            Just(DiscountFunction::root(2.0).unwrap()),
            (0.1f64..1.0).prop_map(|b| DiscountFunction::piecewise_linear(b).unwrap()),
        ]
    }

    fn case() -> impl Strategy<Value = (usize, usize, Vec<usize>, Vec<f64>, Vec<f64>)> {
        (1usize..6, 1usize..4).prop_flat_map(|(n, m)| {
            (
                Just(n),
                Just(m),
                prop::collection::vec(0usize..64, n * m),
                prop::collection::vec(0.0f64..3.0, n * m),
                prop::collection::vec(0.01f64..1.0, n * m),
            )
        })
    }

    proptest! {
        #[test]
        fn operators_are_generalized_contractions(
            (n, m, t, u, w) in case(),
            d in discount_strategy(),
            v1 in prop::collection::vec(0.0f64..20.0, 6),
            v2 in prop::collection::vec(0.0f64..20.0, 6),
        ) {
            let p = random_process(n, m, &t, &u, &w, d.clone());
            let s = StateSpace::Finite { count: n };
            let a = ValueFunction::new(s, v1[..n].to_vec());
            let b = ValueFunction::new(s, v2[..n].to_vec());
            let gap = d.modulus(a.sup_distance(&b));
            let bb = bellman_apply(&p, &a).unwrap().sup_distance(&bellman_apply(&p, &b).unwrap());
            let pp = transfer_apply(&p, &a).unwrap().sup_distance(&transfer_apply(&p, &b).unwrap());
            prop_assert!(bb <= gap + 1e-12);
            prop_assert!(pp <= gap + 1e-12);
        }

        #[test]
        fn operators_are_monotone(
            (n, m, t, u, w) in case(),
            d in discount_strategy(),
            v1 in prop::collection::vec(0.0f64..20.0, 6),
            bump in prop::collection::vec(0.0f64..5.0, 6),
        ) {
            let p = random_process(n, m, &t, &u, &w, d);
            let s = StateSpace::Finite { count: n };
            let lo = ValueFunction::new(s, v1[..n].to_vec());
            let hi = ValueFunction::new(s, v1[..n].iter().zip(&bump).map(|(a, b)| a + b).collect());
            for (x, y) in bellman_apply(&p, &lo).unwrap().values.iter()
                .zip(&bellman_apply(&p, &hi).unwrap().values) {
                prop_assert!(x <= y);
            }
            for (x, y) in transfer_apply(&p, &lo).unwrap().values.iter()
                .zip(&transfer_apply(&p, &hi).unwrap().values) {
                prop_assert!(*x <= *y + 1e-12);
            }
        }

        #[test]
        fn fixed_points_are_monotone_in_discount(
            (n, m, t, u, w) in case(),
            b1 in 0.1f64..0.9,
            db in 0.0f64..0.09,
        ) {
            let lo = random_process(n, m, &t, &u, &w, DiscountFunction::linear(b1).unwrap());
            let hi = lo.with_discount(DiscountFunction::linear(b1 + db).unwrap());
            let opts = FixedPointOptions::default();
            for op in [Operator::Bellman, Operator::Transfer] {
                let a = fixed_point(op, &lo, None, &opts).unwrap().solution;
                let b = fixed_point(op, &hi, None, &opts).unwrap().solution;
                for (x, y) in a.values.iter().zip(&b.values) {
                    prop_assert!(*x <= *y + 2e-10);
                }
            }
        }

        #[test]
        fn sub_and_supersolutions_bracket_the_fixed_point(
            (n, m, t, u, w) in case(),
            d in discount_strategy(),
            v in prop::collection::vec(0.0f64..30.0, 6),
        ) {
            let p = random_process(n, m, &t, &u, &w, d);
            let s = StateSpace::Finite { count: n };
            let v = ValueFunction::new(s, v[..n].to_vec());
            let bv = bellman_apply(&p, &v).unwrap();
            let star = fixed_point(Operator::Bellman, &p, None, &FixedPointOptions::default())
                .unwrap()
                .solution;
            let super_sol = bv.values.iter().zip(&v.values).all(|(a, b)| a <= b);
            let sub_sol = bv.values.iter().zip(&v.values).all(|(a, b)| a >= b);
            for (x, y) in star.values.iter().zip(&v.values) {
                if super_sol {
                    prop_assert!(*x <= *y + 2e-10);
                }
                if sub_sol {
                    prop_assert!(*x >= *y - 2e-10);
                }
            }
        }

        #[test]
        fn transfer_is_dominated_by_bellman(
            (n, m, t, u, w) in case(),
            d in discount_strategy(),
        ) {
            let p = random_process(n, m, &t, &u, &w, d);
            let opts = FixedPointOptions::default();
            let v = fixed_point(Operator::Bellman, &p, None, &opts).unwrap().solution;
            let w = fixed_point(Operator::Transfer, &p, None, &opts).unwrap().solution;
            for (a, b) in w.values.iter().zip(&v.values) {
                prop_assert!(*a <= *b + 2e-10);
            }
        }
    }
}
