//! Builders for subshifts of finite type, the doubling map and iterated
//! function systems with place dependent probabilities, and the check that
//! the last two describe the same transfer problem.

use crate::discounts::{DiscountFamily, DiscountFunction};
use crate::limits::{eigenpair_limit, LimitError, LimitOptions};
use crate::process::{Choice, DecisionProcess, Point, ProcessError, StateSpace};
use crate::report::{Check, PropertyReport};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ApplicationError {
    #[error(transparent)]
    Process(#[from] ProcessError),
    #[error(transparent)]
    Limit(#[from] LimitError),
    #[error("symbol {0} can never be preceded by a symbol (empty feasible set)")]
    DeadColumn(usize),
    #[error("potential reads {depth} symbols but cylinders of depth {kappa} only carry {max}")]
    PotentialTooDeep {
        depth: usize,
        kappa: usize,
        max: usize,
    },
    #[error("probability of map {map} is {value} at x = {x}; its logarithm is undefined")]
    NonPositiveProbability { map: usize, x: f64, value: f64 },
    #[error("map {map} has scale {scale}; contractions need |scale| < 1")]
    NotContractive { map: usize, scale: f64 },
    #[error("{0}")]
    Invalid(String),
}

/// Named potentials on `[0, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Potential {
    Constant {
        value: f64,
    },
    /// `slope · x + intercept`.
    Linear {
        #[serde(default = "one")]
        slope: f64,
        #[serde(default)]
        intercept: f64,
    },
    /// `amplitude · cos(2π · frequency · x)`.
    Cosine {
        #[serde(default = "one")]
        frequency: f64,
        #[serde(default = "one")]
        amplitude: f64,
    },
    /// Values at `i / len`, interpolated linearly with wrap-around.
    Tabulated {
        values: Vec<f64>,
    },
}

fn one() -> f64 {
    1.0
}

impl Potential {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Potential::Constant { value } => *value,
            Potential::Linear { slope, intercept } => slope * x + intercept,
            Potential::Cosine {
                frequency,
                amplitude,
            } => amplitude * (2.0 * PI * frequency * x).cos(),
            Potential::Tabulated { values } => {
                let n = values.len() as f64;
                let s = (x * n).rem_euclid(n);
                let i = s.floor() as usize % values.len();
                let f = s - s.floor();
                (1.0 - f) * values[i] + f * values[(i + 1) % values.len()]
            }
        }
    }

    pub fn validate(&self) -> Result<(), ApplicationError> {
        match self {
            Potential::Tabulated { values } if values.is_empty() => Err(ApplicationError::Invalid(
                "tabulated potential has no values".into(),
            )),
            _ => Ok(()),
        }
    }
}

/// A potential on symbol sequences reading the first `depth` symbols.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymbolPotential {
    pub depth: usize,
    /// Indexed by the first `depth` symbols read as base-`m` digits, most
    /// significant first.
    pub values: Vec<f64>,
}

impl SymbolPotential {
    pub fn constant(c: f64) -> Self {
        SymbolPotential {
            depth: 0,
            values: vec![c],
        }
    }

    pub fn from_fn(depth: usize, symbols: usize, f: impl Fn(&[usize]) -> f64) -> Self {
        let total = symbols.pow(depth as u32);
        let values = (0..total).map(|k| f(&digits(k, depth, symbols))).collect();
        SymbolPotential { depth, values }
    }

    fn eval(&self, word: &[usize], symbols: usize) -> f64 {
        let k = word[..self.depth]
            .iter()
            .fold(0usize, |acc, &s| acc * symbols + s);
        self.values[k]
    }
}

fn digits(mut k: usize, len: usize, base: usize) -> Vec<usize> {
    let mut out = vec![0; len];
    for d in out.iter_mut().rev() {
        *d = k % base;
        k /= base;
    }
    out
}

/// A subshift process together with the cylinder word of each state.
#[derive(Debug, Clone)]
pub struct Subshift {
    pub process: DecisionProcess,
    /// `words[x]` are the first `κ` symbols of the sequences in state `x`.
    pub words: Vec<Vec<usize>>,
}

impl Subshift {
    pub fn state_of(&self, word: &[usize]) -> Option<usize> {
        self.words.iter().position(|w| w == word)
    }
}

/// Options of [`build_subshift`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubshiftOptions {
    /// Cylinder depth `κ ≥ 1`.
    pub depth: usize,
    /// Read the adjacency as `c_{x₀, a}` instead of `c_{a, x₀}`.
    pub transpose: bool,
}

impl Default for SubshiftOptions {
    fn default() -> Self {
        SubshiftOptions {
            depth: 1,
            transpose: false,
        }
    }
}

/// Subshift of finite type: prepending symbol `a` to `x` is feasible iff
/// `c[a][x₀] = 1`, and the reward is the potential of the new sequence.
pub fn build_subshift(
    adjacency: &[Vec<u8>],
    potential: &SymbolPotential,
    opts: SubshiftOptions,
    discount: DiscountFunction,
) -> Result<Subshift, ApplicationError> {
    let m = adjacency.len();
    if m == 0 || adjacency.iter().any(|r| r.len() != m) {
        return Err(ApplicationError::Invalid(
            "adjacency must be a nonempty square matrix".into(),
        ));
    }
    if opts.depth == 0 {
        return Err(ApplicationError::Invalid(
            "cylinder depth must be at least 1".into(),
        ));
    }
    if potential.depth > opts.depth + 1 {
        return Err(ApplicationError::PotentialTooDeep {
            depth: potential.depth,
            kappa: opts.depth,
            max: opts.depth + 1,
        });
    }
    if potential.values.len() != m.pow(potential.depth as u32) {
        return Err(ApplicationError::Invalid(format!(
            "potential of depth {} over {m} symbols needs {} values",
            potential.depth,
            m.pow(potential.depth as u32)
        )));
    }
    let c = |a: usize, x0: usize| {
        if opts.transpose {
            adjacency[x0][a] == 1
        } else {
            adjacency[a][x0] == 1
        }
    };
    for x0 in 0..m {
        if !(0..m).any(|a| c(a, x0)) {
            return Err(ApplicationError::DeadColumn(x0));
        }
    }
    let words: Vec<Vec<usize>> = (0..m.pow(opts.depth as u32))
        .map(|k| digits(k, opts.depth, m))
        .filter(|w| w.windows(2).all(|p| c(p[0], p[1])))
        .collect();
    let index = |w: &[usize]| words.iter().position(|v| v == w);
    let space = StateSpace::Finite { count: words.len() };
    let mut rows = Vec::with_capacity(words.len());
    for w in &words {
        let feasible: Vec<usize> = (0..m).filter(|&a| c(a, w[0])).collect();
        let weight = 1.0 / feasible.len() as f64;
        let mut row = Vec::new();
        for a in feasible {
            let mut seq = Vec::with_capacity(opts.depth + 1);
            seq.push(a);
            seq.extend_from_slice(w);
            let y = index(&seq[..opts.depth]).ok_or_else(|| {
                ProcessError::Structure(format!(
                    "prefix {:?} is not admissible",
                    &seq[..opts.depth]
                ))
            })?;
            let target = Point::State(y);
            row.push(Choice {
                action: a,
                target,
                stencil: space.stencil(target)?,
                reward: potential.eval(&seq, m),
                weight,
            });
        }
        rows.push(row);
    }
    let labels = (0..m).map(|a| a.to_string()).collect();
    let process = DecisionProcess::from_choices(space, labels, rows, discount)?;
    process.ensure_valid()?;
    Ok(Subshift { process, words })
}

/// Inverse branches `x/2`, `x/2 + 1/2` of the doubling map on the periodic
/// grid, with reward `φ(f(x, a))` and uniform weights.
pub fn build_doubling(
    nodes: usize,
    potential: &Potential,
    discount: DiscountFunction,
) -> Result<DecisionProcess, ApplicationError> {
    if nodes < 8 {
        return Err(ApplicationError::Invalid(format!(
            "doubling map needs at least 8 nodes, got {nodes}"
        )));
    }
    potential.validate()?;
    let phi = potential.clone();
    Ok(DecisionProcess::on_grid(
        nodes,
        true,
        2,
        |x, a| 0.5 * x + 0.5 * a as f64,
        move |x, a| phi.eval(0.5 * x + 0.5 * a as f64),
        vec![0.5, 0.5],
        discount,
    )?)
}

/// Affine contraction `x ↦ scale · x + offset`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineMap {
    pub scale: f64,
    pub offset: f64,
}

impl AffineMap {
    pub fn apply(&self, x: f64) -> f64 {
        self.scale * x + self.offset
    }
}

pub type ProbabilityFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// IFS with place dependent probabilities: `f(x, a) = φ_a(x)` and
/// `u(x, a) = ln p_a(x)`, uniform weights, every map feasible everywhere.
pub fn build_ifspdp(
    maps: &[AffineMap],
    probs: &[ProbabilityFn],
    nodes: usize,
    periodic: bool,
    discount: DiscountFunction,
) -> Result<DecisionProcess, ApplicationError> {
    if maps.is_empty() || maps.len() != probs.len() {
        return Err(ApplicationError::Invalid(format!(
            "{} maps with {} probability functions",
            maps.len(),
            probs.len()
        )));
    }
    for (i, m) in maps.iter().enumerate() {
        if !(m.scale.abs() < 1.0) {
            return Err(ApplicationError::NotContractive {
                map: i,
                scale: m.scale,
            });
        }
    }
    for i in 0..nodes {
        let x = StateSpace::node_coord(nodes, i);
        for (a, p) in probs.iter().enumerate() {
            let v = p(x);
            if !(v > 0.0) {
                return Err(ApplicationError::NonPositiveProbability {
                    map: a,
                    x,
                    value: v,
                });
            }
        }
    }
    let k = maps.len();
    let maps = maps.to_vec();
    let probs = probs.to_vec();
    Ok(DecisionProcess::on_grid(
        nodes,
        periodic,
        k,
        move |x, a| maps[a].apply(x),
        move |x, a| probs[a](x).ln(),
        vec![1.0 / k as f64; k],
        discount,
    )?)
}

/// The two inverse branches of the doubling map with `p_a = e^{φ∘φ_a}`.
pub fn doubling_as_ifspdp(
    nodes: usize,
    potential: &Potential,
    discount: DiscountFunction,
) -> Result<DecisionProcess, ApplicationError> {
    let maps = [
        AffineMap {
            scale: 0.5,
            offset: 0.0,
        },
        AffineMap {
            scale: 0.5,
            offset: 0.5,
        },
    ];
    let probs: Vec<ProbabilityFn> = maps
        .iter()
        .map(|m| {
            let (m, phi) = (*m, potential.clone());
            Arc::new(move |x: f64| phi.eval(m.apply(x)).exp()) as ProbabilityFn
        })
        .collect();
    build_ifspdp(&maps, &probs, nodes, true, discount)
}

/// Perron root of `g ↦ Σ_a e^{φ(f(x, a))} g(f(x, a))` on the grid, by power
/// iteration on `L + I`.
pub fn counting_eigenvalue(p: &DecisionProcess, max_iter: usize) -> f64 {
    let n = p.num_states();
    let mut g = vec![1.0; n];
    let mut lambda = f64::NAN;
    for _ in 0..max_iter {
        let mut next: Vec<f64> = (0..n)
            .map(|x| {
                g[x] + p
                    .choices(x)
                    .iter()
                    .map(|c| c.reward.exp() * c.stencil.apply(&g))
                    .sum::<f64>()
            })
            .collect();
        let m = next.iter().copied().fold(0.0, f64::max);
        next.iter_mut().for_each(|v| *v /= m);
        let change = next
            .iter()
            .zip(&g)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        g = next;
        lambda = m - 1.0;
        if change < 1e-15 {
            break;
        }
    }
    lambda
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TranslationCheck {
    pub k_doubling: f64,
    pub k_ifspdp: f64,
    /// `sup |e^{h₁} − e^{h₂}|` with both normalized to maximum 1.
    pub eigenfunction_gap: f64,
    pub counting_eigenvalue: f64,
    /// `2 e^k`.
    pub predicted_counting: f64,
    pub report: PropertyReport,
}

/// Runs the eigenpair limit on the doubling process and on its IFS form and
/// compares them, including the counting-measure eigenvalue `2 e^k`.
pub fn check_translation(
    nodes: usize,
    potential: &Potential,
    fam: &DiscountFamily,
    opts: &LimitOptions,
    tol: f64,
) -> Result<TranslationCheck, ApplicationError> {
    let d1 = fam.member(1).map_err(LimitError::from)?;
    let doubling = build_doubling(nodes, potential, d1.clone())?;
    let ifs = doubling_as_ifspdp(nodes, potential, d1)?;
    let a = eigenpair_limit(&doubling, fam, opts)?;
    let b = eigenpair_limit(&ifs, fam, opts)?;
    let gap = a
        .limit_function
        .values
        .iter()
        .zip(&b.limit_function.values)
        .map(|(x, y)| (x.exp() - y.exp()).abs())
        .fold(0.0, f64::max);
    let counting = counting_eigenvalue(&doubling, 1_000_000);
    let predicted = 2.0 * a.limit_value.exp();
    let mut report = PropertyReport::new(format!("translation check, {nodes} nodes"));
    let dk = (a.limit_value - b.limit_value).abs();
    report.push(Check::from_margin(
        "equal-k",
        tol - dk,
        "",
        format!("|k₁ − k₂| = {dk:e}"),
    ));
    report.push(Check::from_margin(
        "equal-eigenfunction",
        tol - gap,
        "",
        format!("sup |e^h₁ − e^h₂| = {gap:e}"),
    ));
    let rel = (counting / predicted - 1.0).abs();
    report.push(Check::from_margin(
        "counting-eigenvalue",
        tol - rel,
        "",
        format!("counting {counting:.12} vs 2e^k {predicted:.12} (relative {rel:e})"),
    ));
    Ok(TranslationCheck {
        k_doubling: a.limit_value,
        k_ifspdp: b.limit_value,
        eigenfunction_gap: gap,
        counting_eigenvalue: counting,
        predicted_counting: predicted,
        report,
    })
}
