//! Vanishing-discount limits: the ergodic value with a calibrated subaction,
//! and the Ruelle eigenpair, along a schedule of family members.

use crate::discounts::{check_assumption_limits, DiscountError, DiscountFamily};
use crate::operators::{fixed_point, FixedPointOptions, Operator, OperatorError, ValueFunction};
use crate::process::{DecisionProcess, ProcessError};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LimitError {
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Discount(#[from] DiscountError),
    #[error(transparent)]
    Process(#[from] ProcessError),
    #[error("schedule must be a nonempty increasing list of positive indices")]
    Schedule,
    #[error("limit unstable: last gap {gap:e} exceeds {threshold:e} (sequence {sequence:?})")]
    Unstable {
        gap: f64,
        threshold: f64,
        n_sequence: Vec<u32>,
        sequence: Vec<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum LimitKind {
    Subaction,
    Eigenpair,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LimitOptions {
    pub schedule: Vec<u32>,
    /// Cauchy tolerance; gaps above `10·tol` are rejected.
    pub tol: f64,
    pub fixed_point: FixedPointOptions,
    pub extrapolate: bool,
}

/// `2, 4, 8, …, 1024`.
pub fn default_schedule() -> Vec<u32> {
    (1..=10).map(|k| 1u32 << k).collect()
}

impl Default for LimitOptions {
    fn default() -> Self {
        LimitOptions {
            schedule: default_schedule(),
            tol: 1e-4,
            fixed_point: FixedPointOptions::default(),
            extrapolate: false,
        }
    }
}

/// Per-member diagnostics, in the shifted regime.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitRow {
    pub n: u32,
    pub max_value: f64,
    pub ubar: f64,
    pub iterations: usize,
    pub inner_residual: f64,
    pub min_normalized: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscountLimitResult {
    pub kind: LimitKind,
    pub family: String,
    pub n_sequence: Vec<u32>,
    /// `M_n − δ_n(M_n)` for the shifted reward.
    pub ubar_sequence: Vec<f64>,
    /// `ū` or `k`, un-shifted.
    pub limit_value: f64,
    /// `e^k` for eigenpairs.
    pub eigenvalue: Option<f64>,
    /// `h`, with maximum 0.
    pub limit_function: ValueFunction,
    pub residual: f64,
    /// The constant `c = −min u` added before solving.
    pub shift_record: f64,
    /// `‖u + c‖∞`.
    pub shifted_reward_sup: f64,
    pub cauchy_gap: Option<f64>,
    /// Linear-in-`1/n` extrapolation through the last two members, un-shifted.
    pub extrapolated: Option<f64>,
    /// Whether the family passed the translation-limit check on the schedule.
    pub calibrated: bool,
    pub rows: Vec<LimitRow>,
    /// `v_n − M_n` for every member.
    #[serde(skip)]
    pub normalized: Vec<ValueFunction>,
}

impl DiscountLimitResult {
    pub fn diagnostics_csv(&self) -> String {
        let mut s = String::from("n,M_n,ubar_n,iterations,inner_residual\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{:.17e},{:.17e},{},{:e}\n",
                r.n, r.max_value, r.ubar, r.iterations, r.inner_residual
            ));
        }
        s
    }
}

/// `sup_x |max_a (u(x, a) − ū + h(f(x, a))) − h(x)|`.
pub fn subaction_residual(
    p: &DecisionProcess,
    h: &ValueFunction,
    ubar: f64,
) -> Result<f64, OperatorError> {
    if h.len() != p.num_states() {
        return Err(OperatorError::SpaceMismatch {
            expected: p.space(),
            found: h.space,
        });
    }
    let mut worst: f64 = 0.0;
    for x in 0..p.num_states() {
        let best = p
            .choices(x)
            .iter()
            .map(|c| c.reward - ubar + c.stencil.apply(&h.values))
            .fold(f64::NEG_INFINITY, f64::max);
        worst = worst.max((best - h.values[x]).abs());
    }
    Ok(worst)
}

/// `sup_x |e^k e^{h(x)} − Σ_a ν_x(a) e^{u(x, a)} e^{h(f(x, a))}| / e^k`.
pub fn eigen_residual(
    p: &DecisionProcess,
    h: &ValueFunction,
    k: f64,
) -> Result<f64, OperatorError> {
    if h.len() != p.num_states() {
        return Err(OperatorError::SpaceMismatch {
            expected: p.space(),
            found: h.space,
        });
    }
    let mut worst: f64 = 0.0;
    for x in 0..p.num_states() {
        let rhs: f64 = p
            .choices(x)
            .iter()
            .map(|c| c.weight * (c.reward - k + c.stencil.apply(&h.values)).exp())
            .sum();
        worst = worst.max((h.values[x].exp() - rhs).abs());
    }
    Ok(worst)
}

/// Subaction limit from the Bellman fixed points of the family members.
pub fn subaction_limit(
    p: &DecisionProcess,
    fam: &DiscountFamily,
    opts: &LimitOptions,
) -> Result<DiscountLimitResult, LimitError> {
    run_limit(LimitKind::Subaction, p, fam, opts)
}

/// Ruelle eigenpair limit from the transfer fixed points of the family members.
pub fn eigenpair_limit(
    p: &DecisionProcess,
    fam: &DiscountFamily,
    opts: &LimitOptions,
) -> Result<DiscountLimitResult, LimitError> {
    run_limit(LimitKind::Eigenpair, p, fam, opts)
}

fn run_limit(
    kind: LimitKind,
    p: &DecisionProcess,
    fam: &DiscountFamily,
    opts: &LimitOptions,
) -> Result<DiscountLimitResult, LimitError> {
    let sched = &opts.schedule;
    if sched.is_empty() || sched[0] == 0 || sched.windows(2).any(|w| w[0] >= w[1]) {
        return Err(LimitError::Schedule);
    }
    p.ensure_valid()?;
    let (q, c) = p.shift_to_nonnegative();
    let op = match kind {
        LimitKind::Subaction => Operator::Bellman,
        LimitKind::Eigenpair => Operator::Transfer,
    };
    let solved = sched
        .par_iter()
        .map(|&n| {
            let d = fam.member(n)?;
            let qn = q.with_discount(d.clone());
            let r = fixed_point(op, &qn, None, &opts.fixed_point)?;
            let m = r.solution.max();
            let row = LimitRow {
                n,
                max_value: m,
                ubar: d.shortfall(m),
                iterations: r.iterations(),
                inner_residual: r.final_residual(),
                min_normalized: r.solution.min() - m,
            };
            Ok((row, r.solution.map(|v| v - m)))
        })
        .collect::<Result<Vec<_>, LimitError>>()?;
    let (rows, normalized): (Vec<_>, Vec<_>) = solved.into_iter().unzip();
    let ubar_sequence: Vec<f64> = rows.iter().map(|r| r.ubar).collect();
    let last = *ubar_sequence.last().unwrap();
    let cauchy_gap =
        (ubar_sequence.len() >= 2).then(|| (last - ubar_sequence[ubar_sequence.len() - 2]).abs());
    if let Some(gap) = cauchy_gap {
        if gap > 10.0 * opts.tol {
            return Err(LimitError::Unstable {
                gap,
                threshold: 10.0 * opts.tol,
                n_sequence: sched.clone(),
                sequence: ubar_sequence,
            });
        }
    }
    let h = normalized.last().unwrap().clone();
    let limit_value = last - c;
    let residual = match kind {
        LimitKind::Subaction => subaction_residual(p, &h, limit_value)?,
        LimitKind::Eigenpair => eigen_residual(p, &h, limit_value)?,
    };
    let extrapolated = (opts.extrapolate && rows.len() >= 2).then(|| {
        let (a, b) = (&rows[rows.len() - 2], &rows[rows.len() - 1]);
        let (na, nb) = (a.n as f64, b.n as f64);
        (nb * b.ubar - na * a.ubar) / (nb - na) - c
    });
    let t_max = rows.last().unwrap().max_value.max(10.0);
    let ts: Vec<f64> = (0..=64).map(|i| t_max * i as f64 / 64.0).collect();
    let (report, _) = check_assumption_limits(fam, &[1.0], &ts, sched, 0.05)?;
    let last_name = format!("near-identity[n={},alpha=1]", sched.last().unwrap());
    let calibrated = report
        .get("non-increasing[alpha=1]")
        .is_some_and(|c| c.passed)
        && report.get(&last_name).is_some_and(|c| c.passed);
    Ok(DiscountLimitResult {
        kind,
        family: fam.kind().to_string(),
        n_sequence: sched.clone(),
        ubar_sequence,
        limit_value,
        eigenvalue: (kind == LimitKind::Eigenpair).then(|| limit_value.exp()),
        limit_function: h,
        residual,
        shift_record: c,
        shifted_reward_sup: q.reward_sup_norm(),
        cauchy_gap,
        extrapolated,
        calibrated,
        rows,
        normalized,
    })
}
