//! TOML experiment configs.
//!
//! ```toml
//! [process]
//! kind = "finite"
//! next = [[0, 1], [0, 1]]        # next[x][a]; -1 marks an infeasible action
//! reward = [[0.0, 1.0], [2.0, 0.5]]
//! weights = "uniform"            # or a table weights[x][a]
//!
//! [discount]
//! kind = "linear"
//! beta = 0.5
//! ```
//!
//! Other process kinds are `grid` (affine `maps` with a reward `potential`
//! evaluated at the image), `doubling`, `subshift` and `ifspdp`; see
//! [`ProcessConfig`] for their keys. Optional sections: `[solver]`,
//! `[family]`, `[limit]`, `[koopman]`, `[regularity]`, `[verify]`,
//! `[translation]`.

use crate::applications::{
    build_doubling, build_ifspdp, build_subshift, AffineMap, Potential, ProbabilityFn,
    SubshiftOptions, SymbolPotential,
};
use crate::discounts::{DiscountFamily, DiscountFunction, DiscountSpec, FamilyParams, SampleSpec};
use crate::process::{DecisionProcess, Weights};
use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub process: ProcessConfig,
    #[serde(default = "default_discount")]
    pub discount: DiscountSpec,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub family: FamilyConfig,
    #[serde(default)]
    pub limit: LimitConfig,
    #[serde(default)]
    pub koopman: KoopmanConfig,
    #[serde(default)]
    pub regularity: RegularityConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub translation: Option<TranslationConfig>,
}

fn default_discount() -> DiscountSpec {
    DiscountSpec {
        kind: "log".into(),
        beta: None,
        p: None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WeightsConfig {
    Named(String),
    /// One weight per action, the same at every state.
    Vector(Vec<f64>),
    Table(Vec<Vec<f64>>),
}

impl Default for WeightsConfig {
    fn default() -> Self {
        WeightsConfig::Named("uniform".into())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProcessKind {
    Finite,
    Grid,
    Doubling,
    Subshift,
    Ifspdp,
}

/// The `[process]` section; which keys are required depends on `kind`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessConfig {
    pub kind: ProcessKind,
    /// finite: `next[x][a]`, with -1 for an infeasible action.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub next: Option<Vec<Vec<i64>>>,
    /// finite: `reward[x][a]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub weights: WeightsConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub actions: Option<Vec<String>>,
    /// grid, doubling, ifspdp.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nodes: Option<usize>,
    #[serde(default = "yes")]
    pub periodic: bool,
    /// grid, ifspdp: affine maps, one per action.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub maps: Option<Vec<AffineMap>>,
    /// grid, doubling: reward `φ(f(x, a))`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub potential: Option<Potential>,
    /// ifspdp: `p_a` as functions of `x`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probabilities: Option<Vec<Potential>>,
    /// subshift: the 0/1 matrix `c`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adjacency: Option<Vec<Vec<u8>>>,
    /// subshift: number of leading symbols the potential reads.
    #[serde(default)]
    pub potential_depth: usize,
    /// subshift: potential values indexed by the leading symbols in base `m`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub symbol_potential: Option<Vec<f64>>,
    #[serde(default = "one_usize")]
    pub cylinder_depth: usize,
    #[serde(default)]
    pub transpose: bool,
}

fn required<'a, T>(v: &'a Option<T>, key: &str, kind: ProcessKind) -> Result<&'a T> {
    v.as_ref().with_context(|| {
        format!(
            "key `process.{key}` is required for kind `{}`",
            kind_name(kind)
        )
    })
}

fn kind_name(k: ProcessKind) -> &'static str {
    match k {
        ProcessKind::Finite => "finite",
        ProcessKind::Grid => "grid",
        ProcessKind::Doubling => "doubling",
        ProcessKind::Subshift => "subshift",
        ProcessKind::Ifspdp => "ifspdp",
    }
}

fn yes() -> bool {
    true
}

fn one_usize() -> usize {
    1
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyConfig {
    pub kind: String,
    #[serde(default = "two")]
    pub root_p: f64,
}

fn two() -> f64 {
    2.0
}

impl Default for FamilyConfig {
    fn default() -> Self {
        FamilyConfig {
            kind: "convex-combination-log".into(),
            root_p: 2.0,
        }
    }
}

impl FamilyConfig {
    pub fn build(&self) -> Result<DiscountFamily> {
        DiscountFamily::from_name(
            &self.kind,
            FamilyParams {
                root_p: self.root_p,
            },
        )
        .context("key `family.kind`")
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitConfig {
    pub schedule: Option<Vec<u32>>,
    pub tol: Option<f64>,
    #[serde(default)]
    pub extrapolate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KoopmanConfig {
    /// State indices the sampled histories start from.
    pub origins: Vec<usize>,
    pub horizon: usize,
    pub count: usize,
    pub seed: u64,
}

impl Default for KoopmanConfig {
    fn default() -> Self {
        KoopmanConfig {
            origins: vec![0],
            horizon: 20,
            count: 20,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegularityConfig {
    pub alpha: f64,
    pub lambda: Option<f64>,
    pub reward_constant: Option<f64>,
    pub slack: f64,
}

impl Default for RegularityConfig {
    fn default() -> Self {
        RegularityConfig {
            alpha: 1.0,
            lambda: None,
            reward_constant: None,
            slack: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    pub lower: f64,
    pub upper: f64,
    pub points: usize,
    pub pair_points: usize,
    pub iterate_steps: usize,
    pub iterate_eps: f64,
    pub slack: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        let s = SampleSpec::default();
        VerifyConfig {
            lower: s.lower,
            upper: s.upper,
            points: s.points,
            pair_points: s.pair_points,
            iterate_steps: s.iterate_steps,
            iterate_eps: s.iterate_eps,
            slack: 1e-9,
        }
    }
}

impl VerifyConfig {
    pub fn sample_spec(&self) -> SampleSpec {
        SampleSpec {
            lower: self.lower,
            upper: self.upper,
            points: self.points,
            pair_points: self.pair_points,
            iterate_steps: self.iterate_steps,
            iterate_eps: self.iterate_eps,
            slack: self.slack,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TranslationConfig {
    pub nodes: usize,
    pub potential: Potential,
    #[serde(default = "translation_tol")]
    pub tol: f64,
}

fn translation_tol() -> f64 {
    1e-4
}

impl Config {
    pub fn parse(text: &str) -> Result<Config> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &std::path::Path) -> Result<Config> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        Config::parse(&text).with_context(|| format!("in config {}", path.display()))
    }

    pub fn discount(&self) -> Result<DiscountFunction> {
        self.discount.build().context("key `discount.kind`")
    }

    pub fn is_grid(&self) -> bool {
        !matches!(
            self.process.kind,
            ProcessKind::Finite | ProcessKind::Subshift
        )
    }

    /// The translation check parameters, taken from the doubling process
    /// itself when no `[translation]` section is given.
    pub fn translation(&self) -> Result<TranslationConfig> {
        let pc = &self.process;
        match (&self.translation, pc.kind, pc.nodes, &pc.potential) {
            (Some(t), ..) => Ok(t.clone()),
            (None, ProcessKind::Doubling, Some(nodes), Some(potential)) => Ok(TranslationConfig {
                nodes,
                potential: potential.clone(),
                tol: translation_tol(),
            }),
            _ => bail!("check-translation needs a `[translation]` section or a doubling process"),
        }
    }

    pub fn build_process(&self) -> Result<DecisionProcess> {
        let d = self.discount()?;
        let pc = &self.process;
        let kind = pc.kind;
        let p = match kind {
            ProcessKind::Finite => {
                let next: Vec<Vec<Option<usize>>> = required(&pc.next, "next", kind)?
                    .iter()
                    .map(|row| {
                        row.iter()
                            .map(|&y| {
                                if y < 0 {
                                    Ok(None)
                                } else {
                                    usize::try_from(y).map(Some)
                                }
                            })
                            .collect::<Result<_, _>>()
                    })
                    .collect::<Result<_, _>>()
                    .context("key `process.next`")?;
                let reward = required(&pc.reward, "reward", kind)?;
                let w = match &pc.weights {
                    WeightsConfig::Named(n) if n == "uniform" => Weights::Uniform,
                    WeightsConfig::Named(n) => {
                        bail!("key `process.weights`: unknown weights `{n}`")
                    }
                    WeightsConfig::Vector(v) => Weights::Table(vec![v.clone(); next.len()]),
                    WeightsConfig::Table(t) => Weights::Table(t.clone()),
                };
                let mut p =
                    DecisionProcess::from_tables(&next, reward, w, d).context("key `process`")?;
                if let Some(labels) = &pc.actions {
                    p.set_action_labels(labels.clone())
                        .context("key `process.actions`")?;
                }
                p
            }
            ProcessKind::Grid => {
                let maps = required(&pc.maps, "maps", kind)?.clone();
                let phi = required(&pc.potential, "potential", kind)?.clone();
                let nodes = *required(&pc.nodes, "nodes", kind)?;
                let k = maps.len();
                let w = match &pc.weights {
                    WeightsConfig::Named(n) if n == "uniform" => vec![1.0 / k as f64; k],
                    WeightsConfig::Vector(v) => v.clone(),
                    _ => {
                        bail!("key `process.weights`: grid weights are \"uniform\" or one per map")
                    }
                };
                let m2 = maps.clone();
                DecisionProcess::on_grid(
                    nodes,
                    pc.periodic,
                    k,
                    move |x, a| maps[a].apply(x),
                    move |x, a| phi.eval(m2[a].apply(x)),
                    w,
                    d,
                )
                .context("key `process`")?
            }
            ProcessKind::Doubling => build_doubling(
                *required(&pc.nodes, "nodes", kind)?,
                required(&pc.potential, "potential", kind)?,
                d,
            )
            .context("key `process`")?,
            ProcessKind::Subshift => {
                let pot = SymbolPotential {
                    depth: pc.potential_depth,
                    values: required(&pc.symbol_potential, "symbol_potential", kind)?.clone(),
                };
                let opts = SubshiftOptions {
                    depth: pc.cylinder_depth,
                    transpose: pc.transpose,
                };
                build_subshift(required(&pc.adjacency, "adjacency", kind)?, &pot, opts, d)
                    .context("key `process`")?
                    .process
            }
            ProcessKind::Ifspdp => {
                let probs: Vec<ProbabilityFn> = required(&pc.probabilities, "probabilities", kind)?
                    .iter()
                    .map(|q| {
                        let q = q.clone();
                        Arc::new(move |x: f64| q.eval(x)) as ProbabilityFn
                    })
                    .collect();
                build_ifspdp(
                    required(&pc.maps, "maps", kind)?,
                    &probs,
                    *required(&pc.nodes, "nodes", kind)?,
                    pc.periodic,
                    d,
                )
                .context("key `process`")?
            }
        };
        Ok(p)
    }
}
