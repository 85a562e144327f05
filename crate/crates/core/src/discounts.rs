//! Variable discount functions and their contraction-modulus witnesses.
//!
//! A discount `δ` is an increasing map on `[0, ∞)` with `δ(0) = 0`. Every
//! discount carries an explicit witness `γ` with `|δ(t₂) − δ(t₁)| ≤ γ(|t₂ − t₁|)`
//! and `γⁿ(t) → 0`. The witness is what turns the Bellman and transfer
//! operators into generalized contractions, so it is never inferred.

use crate::report::{Check, PropertyReport};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiscountError {
    #[error("invalid discount parameter: {0}")]
    Parameter(String),
    #[error("discount `{name}` evaluated at t = {t} outside its domain [0, inf)")]
    Domain { name: String, t: f64 },
    #[error("unknown discount kind `{0}`")]
    UnknownKind(String),
}

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Shape {
    Linear {
        beta: f64,
    },
    Log,
    Root {
        p: f64,
    },
    PiecewiseLinear {
        beta: f64,
    },
    /// `w·t + (1 − w)·base(t)`.
    Blend {
        identity_weight: f64,
        base: Box<DiscountFunction>,
    },
    Custom {
        eval: ScalarFn,
        modulus: ScalarFn,
    },
}

/// A variable discount function together with its contraction-modulus witness.
#[derive(Clone)]
pub struct DiscountFunction {
    shape: Shape,
    name: String,
    idempotent: bool,
    subadditive: bool,
}

impl fmt::Debug for DiscountFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DiscountFunction")
            .field("name", &self.name)
            .field("idempotent", &self.idempotent)
            .field("subadditive", &self.subadditive)
            .finish()
    }
}

fn open_unit(beta: f64, what: &str) -> Result<(), DiscountError> {
    if beta > 0.0 && beta < 1.0 {
        Ok(())
    } else {
        Err(DiscountError::Parameter(format!(
            "{what} requires beta in (0, 1), got {beta}"
        )))
    }
}

impl DiscountFunction {
    /// `δ(t) = βt`, its own witness.
    pub fn linear(beta: f64) -> Result<Self, DiscountError> {
        open_unit(beta, "linear discount")?;
        Ok(DiscountFunction {
            shape: Shape::Linear { beta },
            name: format!("linear({beta})"),
            idempotent: true,
            subadditive: true,
        })
    }

    /// `δ(t) = ln(1 + t)`, its own witness.
    pub fn log() -> Self {
        DiscountFunction {
            shape: Shape::Log,
            name: "log".to_string(),
            idempotent: true,
            subadditive: true,
        }
    }

    /// `δ(t) = (1 + t)^{1/p} − 1` with the linear witness `γ(t) = t/p`.
    pub fn root(p: f64) -> Result<Self, DiscountError> {
        if !(p > 1.0) || !p.is_finite() {
            return Err(DiscountError::Parameter(format!(
                "root discount requires p > 1, got {p}"
            )));
        }
        Ok(DiscountFunction {
            shape: Shape::Root { p },
            name: format!("root({p})"),
            idempotent: false,
            subadditive: true,
        })
    }

    /// `βt` up to 1 and `βt/2 + β/2` beyond, with witness `γ(t) = βt`.
    pub fn piecewise_linear(beta: f64) -> Result<Self, DiscountError> {
        open_unit(beta, "piecewise-linear discount")?;
        Ok(DiscountFunction {
            shape: Shape::PiecewiseLinear { beta },
            name: format!("piecewise-linear({beta})"),
            idempotent: false,
            subadditive: true,
        })
    }

    /// A user supplied discount. The witness is mandatory.
    pub fn custom<F, G>(
        name: impl Into<String>,
        eval: F,
        modulus: G,
        idempotent: bool,
        subadditive: bool,
    ) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
        G: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        DiscountFunction {
            shape: Shape::Custom {
                eval: Arc::new(eval),
                modulus: Arc::new(modulus),
            },
            name: name.into(),
            idempotent,
            subadditive,
        }
    }

    /// Convex combination `w·t + (1 − w)·base(t)` with witness
    /// `w·t + (1 − w)·γ_base(t)`. Requires `w ∈ [0, 1)`.
    pub fn blend_with_identity(
        base: &DiscountFunction,
        identity_weight: f64,
    ) -> Result<Self, DiscountError> {
        if !(0.0..1.0).contains(&identity_weight) {
            return Err(DiscountError::Parameter(format!(
                "identity weight must lie in [0, 1), got {identity_weight}"
            )));
        }
        Ok(DiscountFunction {
            name: format!("blend({identity_weight}, {})", base.name),
            idempotent: base.idempotent,
            subadditive: base.subadditive,
            shape: Shape::Blend {
                identity_weight,
                base: Box::new(base.clone()),
            },
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn is_idempotent(&self) -> bool {
        self.idempotent
    }

    pub fn is_subadditive(&self) -> bool {
        self.subadditive
    }

    /// `δ(t)`; negative arguments are a domain error.
    pub fn eval(&self, t: f64) -> Result<f64, DiscountError> {
        if t < 0.0 || t.is_nan() {
            return Err(DiscountError::Domain {
                name: self.name.clone(),
                t,
            });
        }
        Ok(self.eval_raw(t))
    }

    fn eval_raw(&self, t: f64) -> f64 {
        match &self.shape {
            Shape::Linear { beta } => beta * t,
            Shape::Log => t.ln_1p(),
            Shape::Root { p } => (t.ln_1p() / p).exp_m1(),
            Shape::PiecewiseLinear { beta } => {
                if t <= 1.0 {
                    beta * t
                } else {
                    0.5 * beta * t + 0.5 * beta
                }
            }
            Shape::Blend {
                identity_weight,
                base,
            } => identity_weight * t + (1.0 - identity_weight) * base.eval_raw(t),
            Shape::Custom { eval, .. } => eval(t),
        }
    }

    /// The witness `γ(t)` for `t ≥ 0`.
    pub fn modulus(&self, t: f64) -> f64 {
        match &self.shape {
            Shape::Linear { beta } | Shape::PiecewiseLinear { beta } => beta * t,
            Shape::Log => t.ln_1p(),
            Shape::Root { p } => t / p,
            Shape::Blend {
                identity_weight,
                base,
            } => identity_weight * t + (1.0 - identity_weight) * base.modulus(t),
            Shape::Custom { modulus, .. } => modulus(t),
        }
    }

    /// `t − δ(t)`, evaluated without cancellation for the built-in shapes.
    pub fn shortfall(&self, t: f64) -> f64 {
        match &self.shape {
            Shape::Linear { beta } => (1.0 - beta) * t,
            Shape::Log => t - t.ln_1p(),
            Shape::Blend {
                identity_weight,
                base,
            } => (1.0 - identity_weight) * base.shortfall(t),
            _ => t - self.eval_raw(t),
        }
    }

    /// `γⁿ(t)`.
    pub fn iterate_modulus(&self, t: f64, n: usize) -> f64 {
        let mut s = t;
        for _ in 0..n {
            let next = self.modulus(s);
            if next == s || next == 0.0 {
                return next;
            }
            s = next;
        }
        s
    }

    /// The witness promoted to a discount in its own right (`eval = modulus = γ`).
    ///
    /// Valid whenever `γ` is concave, which holds for every built-in shape.
    pub fn modulus_discount(&self) -> DiscountFunction {
        let shape = match &self.shape {
            Shape::Linear { beta } | Shape::PiecewiseLinear { beta } => {
                Shape::Linear { beta: *beta }
            }
            Shape::Log => Shape::Log,
            Shape::Root { p } => Shape::Linear { beta: 1.0 / p },
            Shape::Blend {
                identity_weight,
                base,
            } => Shape::Blend {
                identity_weight: *identity_weight,
                base: Box::new(base.modulus_discount()),
            },
            Shape::Custom { modulus, .. } => Shape::Custom {
                eval: modulus.clone(),
                modulus: modulus.clone(),
            },
        };
        DiscountFunction {
            shape,
            name: format!("modulus[{}]", self.name),
            idempotent: true,
            subadditive: true,
        }
    }

    /// Smallest upper bound `K` with `K ≥ a + δ(K)`, i.e. the scalar fixed point
    /// of `t ↦ a + δ(t)` approached from above. Bounds every star-sum of
    /// rewards in `[0, a]`.
    pub fn star_sum_bound(&self, a: f64) -> f64 {
        if a <= 0.0 {
            return 0.0;
        }
        let excess = |t: f64| a + self.eval_raw(t) - t;
        let mut hi = a.max(1.0);
        while excess(hi) > 0.0 {
            hi *= 2.0;
            if !hi.is_finite() {
                return f64::INFINITY;
            }
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if excess(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    }
}

/// Serializable description of a built-in discount.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscountSpec {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
}

impl DiscountSpec {
    pub fn build(&self) -> Result<DiscountFunction, DiscountError> {
        let need = |v: Option<f64>, key: &str| {
            v.ok_or_else(|| {
                DiscountError::Parameter(format!("discount kind `{}` needs `{key}`", self.kind))
            })
        };
        match self.kind.as_str() {
            "linear" => DiscountFunction::linear(need(self.beta, "beta")?),
            "log" => Ok(DiscountFunction::log()),
            "root" | "sqrt" => DiscountFunction::root(self.p.unwrap_or(2.0)),
            "piecewise-linear" => DiscountFunction::piecewise_linear(need(self.beta, "beta")?),
            other => Err(DiscountError::UnknownKind(other.to_string())),
        }
    }
}

/// Built-in shapes of discount families `δ_n → id`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyKind {
    /// `δ_n(t) = n/(n+1)·t`.
    LinearBeta,
    /// `δ_n(t) = (n−1)/n·t + (1/n)·ln(1+t)`.
    ConvexCombinationLog,
    /// `δ_n(t) = (n−1)/n·t + (1/n)·((1+t)^{1/p} − 1)`.
    ConvexCombinationSqrt,
    Custom,
}

impl FromStr for FamilyKind {
    type Err = DiscountError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "linear-beta" => Ok(FamilyKind::LinearBeta),
            "convex-combination-log" => Ok(FamilyKind::ConvexCombinationLog),
            "convex-combination-sqrt" => Ok(FamilyKind::ConvexCombinationSqrt),
            "custom" => Ok(FamilyKind::Custom),
            other => Err(DiscountError::UnknownKind(other.to_string())),
        }
    }
}

impl fmt::Display for FamilyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            FamilyKind::LinearBeta => "linear-beta",
            FamilyKind::ConvexCombinationLog => "convex-combination-log",
            FamilyKind::ConvexCombinationSqrt => "convex-combination-sqrt",
            FamilyKind::Custom => "custom",
        };
        f.write_str(s)
    }
}

/// Parameters for [`DiscountFamily::new`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FamilyParams {
    /// Exponent of the root base for `convex-combination-sqrt`.
    pub root_p: f64,
}

impl Default for FamilyParams {
    fn default() -> Self {
        FamilyParams { root_p: 2.0 }
    }
}

type MemberFn = Arc<dyn Fn(u32) -> DiscountFunction + Send + Sync>;

/// An indexed sequence `δ_n`, `n ≥ 1`, converging pointwise to the identity.
#[derive(Clone)]
pub struct DiscountFamily {
    kind: FamilyKind,
    params: FamilyParams,
    custom: Option<MemberFn>,
}

impl fmt::Debug for DiscountFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DiscountFamily")
            .field("kind", &self.kind)
            .field("params", &self.params)
            .finish()
    }
}

impl DiscountFamily {
    /// One of the built-in families; `Custom` must go through [`DiscountFamily::custom`].
    pub fn new(kind: FamilyKind, params: FamilyParams) -> Result<Self, DiscountError> {
        if kind == FamilyKind::Custom {
            return Err(DiscountError::Parameter(
                "custom families need a member constructor".into(),
            ));
        }
        if kind == FamilyKind::ConvexCombinationSqrt {
            DiscountFunction::root(params.root_p)?;
        }
        Ok(DiscountFamily {
            kind,
            params,
            custom: None,
        })
    }

    pub fn from_name(name: &str, params: FamilyParams) -> Result<Self, DiscountError> {
        DiscountFamily::new(name.parse()?, params)
    }

    pub fn custom<F>(member: F) -> Self
    where
        F: Fn(u32) -> DiscountFunction + Send + Sync + 'static,
    {
        DiscountFamily {
            kind: FamilyKind::Custom,
            params: FamilyParams::default(),
            custom: Some(Arc::new(member)),
        }
    }

    pub fn kind(&self) -> FamilyKind {
        self.kind
    }

    pub fn params(&self) -> FamilyParams {
        self.params
    }

    /// The member `δ_n`; `n` starts at 1.
    pub fn member(&self, n: u32) -> Result<DiscountFunction, DiscountError> {
        if n == 0 {
            return Err(DiscountError::Parameter("family index starts at 1".into()));
        }
        let weight = (n - 1) as f64 / n as f64;
        let mut d = match self.kind {
            FamilyKind::LinearBeta => DiscountFunction::linear(n as f64 / (n as f64 + 1.0))?,
            FamilyKind::ConvexCombinationLog => {
                DiscountFunction::blend_with_identity(&DiscountFunction::log(), weight)?
            }
            FamilyKind::ConvexCombinationSqrt => DiscountFunction::blend_with_identity(
                &DiscountFunction::root(self.params.root_p)?,
                weight,
            )?,
            FamilyKind::Custom => {
                let f = self
                    .custom
                    .as_ref()
                    .expect("custom family without constructor");
                return Ok(f(n));
            }
        };
        d.name = format!("{}[n={n}]", self.kind);
        Ok(d)
    }
}

/// Sampling grid used by [`verify_discount`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleSpec {
    pub lower: f64,
    pub upper: f64,
    pub points: usize,
    /// Points of the coarser grid whose every pair is tested.
    pub pair_points: usize,
    pub iterate_steps: usize,
    pub iterate_eps: f64,
    pub slack: f64,
}

impl Default for SampleSpec {
    fn default() -> Self {
        SampleSpec {
            lower: 0.0,
            upper: 10.0,
            points: 1000,
            pair_points: 100,
            iterate_steps: 100_000,
            iterate_eps: 1e-4,
            slack: 1e-12,
        }
    }
}

fn uniform_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![lo];
    }
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

/// Sample-based check of the definitional properties of a discount.
pub fn verify_discount(d: &DiscountFunction, spec: &SampleSpec) -> PropertyReport {
    let mut report = PropertyReport::new(format!("discount {}", d.name()));
    let lower = spec.lower.max(0.0);
    let grid = uniform_grid(lower, spec.upper, spec.points);
    let coarse = uniform_grid(lower, spec.upper, spec.pair_points);
    let ev = |t: f64| d.eval_raw(t);

    let at_zero = ev(0.0);
    report.push(Check::from_margin(
        "normalization",
        -at_zero.abs(),
        "t=0",
        format!("delta(0) = {at_zero}"),
    ));

    let mut worst = (f64::INFINITY, String::new());
    for w in grid.windows(2) {
        let m = ev(w[1]) - ev(w[0]);
        if m < worst.0 {
            worst = (m, format!("t1={}, t2={}", w[0], w[1]));
        }
    }
    report.push(Check::from_margin(
        "monotone",
        worst.0,
        worst.1,
        "delta(t2) - delta(t1) >= 0 on consecutive samples",
    ));

    let gamma0 = d.modulus(0.0);
    let mut worst = (-gamma0.abs(), "t=0".to_string());
    for &t in grid.iter().filter(|&&t| t > 0.0) {
        let m = t - d.modulus(t);
        let m = if m > 0.0 {
            m
        } else {
            m.min(-f64::MIN_POSITIVE)
        };
        if m < worst.0 {
            worst = (m, format!("t={t}"));
        }
    }
    report.push(Check::from_margin(
        "modulus-below-identity",
        worst.0,
        worst.1,
        "gamma(0) = 0 and gamma(t) < t",
    ));

    let mut pairs: Vec<(f64, f64)> = grid.windows(2).map(|w| (w[0], w[1])).collect();
    for (i, &a) in coarse.iter().enumerate() {
        for &b in &coarse[i + 1..] {
            pairs.push((a, b));
        }
    }
    let mut worst = (f64::INFINITY, String::new());
    for &(a, b) in &pairs {
        let lhs = (ev(b) - ev(a)).abs();
        let rhs = d.modulus((b - a).abs());
        let m = rhs - lhs + spec.slack * (1.0 + rhs.abs());
        if m < worst.0 {
            worst = (m, format!("t1={a}, t2={b}"));
        }
    }
    report.push(Check::from_margin(
        "witness-inequality",
        worst.0,
        worst.1,
        "|delta(t2) - delta(t1)| <= gamma(|t2 - t1|)",
    ));

    let start = spec.upper;
    let last = d.iterate_modulus(start, spec.iterate_steps);
    report.push(Check::from_margin(
        "modulus-iterates-vanish",
        spec.iterate_eps - last,
        format!("t={start}"),
        format!(
            "gamma^{}({start}) = {last:e} vs eps {:e}",
            spec.iterate_steps, spec.iterate_eps
        ),
    ));

    let max_gap = grid
        .iter()
        .map(|&t| (ev(t) - d.modulus(t)).abs())
        .fold(0.0, f64::max);
    let same = max_gap <= spec.slack * (1.0 + spec.upper);
    let flag = if d.is_idempotent() == same {
        Check::pass(
            "declared-idempotent",
            format!(
                "declared {}; max |delta - gamma| = {max_gap:e}",
                d.is_idempotent()
            ),
        )
    } else {
        Check::fail(
            "declared-idempotent",
            format!(
                "declared {} but max |delta - gamma| = {max_gap:e}",
                d.is_idempotent()
            ),
        )
    };
    report.push(flag);

    let mut worst = (f64::INFINITY, String::new());
    for (i, &a) in coarse.iter().enumerate() {
        for &b in &coarse[i..] {
            if a + b > spec.upper {
                continue;
            }
            let m = ev(a) + ev(b) - ev(a + b) + spec.slack * (1.0 + ev(a + b).abs());
            if m < worst.0 {
                worst = (m, format!("t1={a}, t2={b}"));
            }
        }
    }
    let observed = worst.0 >= 0.0;
    let flag = if observed == d.is_subadditive() {
        Check {
            name: "declared-subadditive".into(),
            passed: true,
            worst_margin: Some(worst.0),
            witness: Some(worst.1),
            detail: format!("declared {}", d.is_subadditive()),
        }
    } else {
        Check {
            name: "declared-subadditive".into(),
            passed: false,
            worst_margin: Some(worst.0),
            witness: Some(worst.1),
            detail: format!(
                "declared {} but sampling says {observed}",
                d.is_subadditive()
            ),
        }
    };
    report.push(flag);
    report
}

/// Deviation of one family member from a translation, `sup_t |δ_n(t+α) − δ_n(t) − α|`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TranslationDeviation {
    pub n: u32,
    pub alpha: f64,
    pub deviation: f64,
}

/// Checks the translation limit `δ_n(t+α) − δ_n(t) → α` on samples.
///
/// Reports one entry per `(n, α)` and requires the deviation to be
/// non-increasing along `ns`. A member whose relative deviation exceeds
/// `near_identity` is flagged as far from the identity.
pub fn check_assumption_limits(
    fam: &DiscountFamily,
    alphas: &[f64],
    ts: &[f64],
    ns: &[u32],
    near_identity: f64,
) -> Result<(PropertyReport, Vec<TranslationDeviation>), DiscountError> {
    let mut report = PropertyReport::new(format!("translation limit of family {}", fam.kind()));
    let mut rows = Vec::new();
    for &alpha in alphas {
        let mut prev: Option<f64> = None;
        let mut monotone = true;
        for &n in ns {
            let d = fam.member(n)?;
            let mut dev: f64 = 0.0;
            for &t in ts {
                dev = dev.max((d.eval(t + alpha)? - d.eval(t)? - alpha).abs());
            }
            if let Some(p) = prev {
                if dev > p * (1.0 + 1e-12) + 1e-15 {
                    monotone = false;
                }
            }
            prev = Some(dev);
            let relative = if alpha > 0.0 { dev / alpha } else { 0.0 };
            let name = format!("near-identity[n={n},alpha={alpha}]");
            report.push(Check {
                name,
                passed: relative <= near_identity,
                worst_margin: Some(near_identity - relative),
                witness: None,
                detail: format!("sup deviation {dev:e}"),
            });
            rows.push(TranslationDeviation {
                n,
                alpha,
                deviation: dev,
            });
        }
        let name = format!("non-increasing[alpha={alpha}]");
        if monotone {
            report.push(Check::pass(name, "deviation non-increasing in n"));
        } else {
            report.push(Check::fail(name, "deviation increases along the schedule"));
        }
    }
    Ok((report, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn linear_values() {
        let d = DiscountFunction::linear(0.5).unwrap();
        assert_eq!(d.eval(1.0).unwrap(), 0.5);
        assert_eq!(d.eval(0.0).unwrap(), 0.0);
        let d = DiscountFunction::linear(0.9).unwrap();
        assert_abs_diff_eq!(d.modulus(2.0), 1.8, epsilon = 1e-15);
        assert!(d.modulus(2.0) < 2.0);
    }

    #[test]
    fn linear_rejects_bad_beta() {
        for beta in [0.0, 1.0, -0.3, 1.5, f64::NAN] {
            assert!(matches!(
                DiscountFunction::linear(beta),
                Err(DiscountError::Parameter(_))
            ));
        }
    }

    #[test]
    fn log_values() {
        let d = DiscountFunction::log();
        assert_eq!(d.eval(0.0).unwrap(), 0.0);
        assert_abs_diff_eq!(
            d.eval(std::f64::consts::E - 1.0).unwrap(),
            1.0,
            epsilon = 1e-15
        );
        let sub = d.eval(1.0).unwrap() + d.eval(2.0).unwrap() - d.eval(3.0).unwrap();
        assert_abs_diff_eq!(sub, (6.0f64 / 4.0).ln(), epsilon = 1e-15);
        assert!(sub > 0.0);
        assert!(matches!(d.eval(-0.1), Err(DiscountError::Domain { .. })));
    }

    #[test]
    fn root_values() {
        let d = DiscountFunction::root(2.0).unwrap();
        assert_abs_diff_eq!(d.eval(3.0).unwrap(), 1.0, epsilon = 1e-15);
        assert_eq!(d.eval(0.0).unwrap(), 0.0);
        let gap = (d.eval(8.0).unwrap() - d.eval(3.0).unwrap()).abs();
        assert_abs_diff_eq!(gap, 1.0, epsilon = 1e-14);
        assert!(gap <= d.modulus(5.0));
        assert!(DiscountFunction::root(1.0).is_err());
        assert!(DiscountFunction::root(0.5).is_err());
    }

    #[test]
    fn piecewise_values() {
        let d = DiscountFunction::piecewise_linear(0.5).unwrap();
        assert_eq!(d.eval(1.0).unwrap(), 0.5);
        assert_eq!(d.eval(3.0).unwrap(), 1.0);
        assert_eq!(d.modulus(3.0), 1.5);
        assert!(!d.is_idempotent());
        assert!(d.is_subadditive());
        assert!(DiscountFunction::piecewise_linear(1.0).is_err());
    }

    #[test]
    fn family_members() {
        let fam =
            DiscountFamily::new(FamilyKind::ConvexCombinationLog, FamilyParams::default()).unwrap();
        let first = fam.member(1).unwrap();
        let log = DiscountFunction::log();
        for t in [0.0, 0.5, 1.0, 7.0] {
            assert_eq!(first.eval(t).unwrap(), log.eval(t).unwrap());
        }
        let tenth = fam.member(10).unwrap();
        assert_abs_diff_eq!(
            tenth.eval(1.0).unwrap(),
            0.9 + 0.1 * 2f64.ln(),
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(tenth.eval(1.0).unwrap(), 0.969314718, epsilon = 1e-9);
        for n in [1, 2, 100] {
            assert_eq!(fam.member(n).unwrap().eval(0.0).unwrap(), 0.0);
        }
        assert!(fam.member(0).is_err());
    }

    #[test]
    fn family_unknown_kind() {
        assert!(matches!(
            DiscountFamily::from_name("geometric", FamilyParams::default()),
            Err(DiscountError::UnknownKind(_))
        ));
        assert!(matches!(
            DiscountSpec {
                kind: "hyperbolic".into(),
                beta: None,
                p: None
            }
            .build(),
            Err(DiscountError::UnknownKind(_))
        ));
    }

    #[test]
    fn family_below_identity_and_converging() {
        for kind in [
            FamilyKind::LinearBeta,
            FamilyKind::ConvexCombinationLog,
            FamilyKind::ConvexCombinationSqrt,
        ] {
            let fam = DiscountFamily::new(kind, FamilyParams::default()).unwrap();
            for t in [0.1, 1.0, 5.0, 50.0] {
                let mut prev_gap = f64::INFINITY;
                for n in [1, 2, 4, 8, 16, 64, 256] {
                    let d = fam.member(n).unwrap();
                    let gap = t - d.eval(t).unwrap();
                    assert!(gap >= 0.0, "{kind} n={n} t={t}");
                    assert!(gap <= prev_gap + 1e-15);
                    prev_gap = gap;
                }
            }
        }
    }

    #[test]
    fn blend_distance_to_identity_is_order_one_over_n() {
        // |t - δ_n(t)| = (1/n)(t - base(t)) exactly for the convex-combination kinds.
        let fam =
            DiscountFamily::new(FamilyKind::ConvexCombinationLog, FamilyParams::default()).unwrap();
        for n in [1u32, 3, 17, 1024] {
            let d = fam.member(n).unwrap();
            for t in [0.5f64, 2.0, 9.0] {
                let c_t = t - t.ln_1p();
                assert_abs_diff_eq!(t - d.eval(t).unwrap(), c_t / n as f64, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn iterate_decay_linear() {
        let d = DiscountFunction::linear(0.9).unwrap();
        let v = d.iterate_modulus(10.0, 200);
        assert!(v < 1e-6);
        assert_abs_diff_eq!(v, 10.0 * 0.9f64.powi(200), epsilon = 1e-20);
    }

    #[test]
    fn verify_log_passes() {
        let report = verify_discount(&DiscountFunction::log(), &SampleSpec::default());
        assert!(report.passed(), "{report}");
    }

    #[test]
    fn verify_all_builtins_pass() {
        for d in [
            DiscountFunction::linear(0.5).unwrap(),
            DiscountFunction::root(2.0).unwrap(),
            DiscountFunction::root(3.5).unwrap(),
            DiscountFunction::piecewise_linear(0.5).unwrap(),
        ] {
            let report = verify_discount(&d, &SampleSpec::default());
            assert!(report.passed(), "{report}");
        }
    }

    #[test]
    fn verify_identity_fails_witness() {
        let d = DiscountFunction::custom("identity", |t| t, |t| 0.99 * t, false, true);
        let report = verify_discount(&d, &SampleSpec::default());
        assert!(!report.get("witness-inequality").unwrap().passed);
        assert!(!report.passed());
    }

    #[test]
    fn verify_piecewise_flags() {
        let d = DiscountFunction::piecewise_linear(0.5).unwrap();
        let report = verify_discount(&d, &SampleSpec::default());
        assert!(report.get("declared-subadditive").unwrap().passed);
        assert!(report.get("declared-idempotent").unwrap().passed);
        // Declaring it idempotent would be caught.
        let lying =
            DiscountFunction::custom("pw", move |t| d.eval(t).unwrap(), |t| 0.5 * t, true, true);
        let report = verify_discount(&lying, &SampleSpec::default());
        assert!(!report.get("declared-idempotent").unwrap().passed);
    }

    #[test]
    fn verify_detects_false_subadditivity_claim() {
        // Convex on [0, 10]: t^2/40 is not subadditive.
        let d = DiscountFunction::custom("convex", |t| t * t / 40.0, |t| 0.5 * t, false, true);
        let report = verify_discount(&d, &SampleSpec::default());
        assert!(!report.get("declared-subadditive").unwrap().passed);
    }

    #[test]
    fn modulus_discount_of_builtins() {
        let g = DiscountFunction::root(2.0).unwrap().modulus_discount();
        assert_eq!(g.eval(4.0).unwrap(), 2.0);
        let g = DiscountFunction::log().modulus_discount();
        assert_eq!(g.eval(1.0).unwrap(), 2f64.ln());
        let report = verify_discount(&g, &SampleSpec::default());
        assert!(report.passed(), "{report}");
    }

    #[test]
    fn star_sum_bound_solves_scalar_equation() {
        let d = DiscountFunction::linear(0.5).unwrap();
        assert_abs_diff_eq!(d.star_sum_bound(1.0), 2.0, epsilon = 1e-12);
        let d = DiscountFunction::log();
        let k = d.star_sum_bound(1.0);
        assert!(k >= 1.0 + k.ln_1p());
        assert_abs_diff_eq!(k, 1.0 + k.ln_1p(), epsilon = 1e-12);
    }

    #[test]
    fn translation_limit_report() {
        let fam =
            DiscountFamily::new(FamilyKind::ConvexCombinationLog, FamilyParams::default()).unwrap();
        let ts = uniform_grid(0.0, 10.0, 1001);
        let (report, rows) = check_assumption_limits(&fam, &[1.0], &ts, &[1, 10], 0.05).unwrap();
        // n = 10: (1/10)(1 - min_t ln((t+2)/(t+1))), attained at t = 10.
        let expected = 0.1 * (1.0 - (12.0f64 / 11.0).ln());
        assert_abs_diff_eq!(rows[1].deviation, expected, epsilon = 1e-14);
        assert!(rows[1].deviation <= 0.1);
        assert!(!report.get("near-identity[n=1,alpha=1]").unwrap().passed);
        assert!(report.get("non-increasing[alpha=1]").unwrap().passed);

        let (_, rows) = check_assumption_limits(&fam, &[0.0], &ts, &[5], 0.05).unwrap();
        assert_eq!(rows[0].deviation, 0.0);
    }
}
