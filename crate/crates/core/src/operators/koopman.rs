use super::{iterate_contraction, FixedPointOptions, FixedPointStats, OperatorError};
use crate::process::{extend_history, DecisionProcess, FeasibleHistory, Point, ProcessError};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
struct SuffixNode {
    reward: f64,
    /// Index of the suffix obtained by dropping the first step.
    tail: Option<usize>,
}

/// Sampled histories together with all their nonempty suffixes.
///
/// The empty history carries the value 0 and is not stored.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistorySet {
    histories: Vec<FeasibleHistory>,
    nodes: Vec<SuffixNode>,
    roots: Vec<usize>,
}

impl HistorySet {
    pub fn new(histories: Vec<FeasibleHistory>) -> Self {
        let mut nodes = Vec::new();
        let mut roots = Vec::with_capacity(histories.len());
        for h in &histories {
            let mut tail = None;
            for &r in h.rewards.iter().rev() {
                nodes.push(SuffixNode { reward: r, tail });
                tail = Some(nodes.len() - 1);
            }
            roots.push(tail.unwrap_or(usize::MAX));
        }
        HistorySet {
            histories,
            nodes,
            roots,
        }
    }

    pub fn histories(&self) -> &[FeasibleHistory] {
        &self.histories
    }

    /// Number of stored suffixes.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn horizon(&self) -> usize {
        self.histories.iter().map(|h| h.len()).max().unwrap_or(0)
    }
}

/// A function on the suffixes of a [`HistorySet`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistoryValues {
    pub values: Vec<f64>,
}

impl HistoryValues {
    pub fn zeros(set: &HistorySet) -> Self {
        HistoryValues {
            values: vec![0.0; set.len()],
        }
    }

    /// Values at the full sampled histories, in sampling order.
    pub fn at_histories(&self, set: &HistorySet) -> Vec<f64> {
        set.roots
            .iter()
            .map(|&r| self.values.get(r).copied().unwrap_or(0.0))
            .collect()
    }
}

fn koopman_values(
    p: &DecisionProcess,
    set: &HistorySet,
    u: &[f64],
) -> Result<Vec<f64>, OperatorError> {
    let d = p.discount();
    set.nodes
        .iter()
        .map(|n| {
            let r = n.tail.map_or(0.0, |t| u[t]);
            Ok(n.reward + d.eval(r)?)
        })
        .collect()
}

/// `K(U)(h) = u(x₀, a₀) + δ(U(σ̂ h))` on every stored suffix.
pub fn koopman_apply(
    p: &DecisionProcess,
    set: &HistorySet,
    u: &HistoryValues,
) -> Result<HistoryValues, OperatorError> {
    if u.values.len() != set.len() {
        return Err(ProcessError::Structure(format!(
            "{} values for {} suffixes",
            u.values.len(),
            set.len()
        ))
        .into());
    }
    Ok(HistoryValues {
        values: koopman_values(p, set, &u.values)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KoopmanFixedPoint {
    pub values: HistoryValues,
    pub stats: FixedPointStats,
    /// `K`, the bound on every star-sum of the process.
    pub utility_bound: f64,
    /// `γ^H(K)`: distance from the truncated values to the infinite-history
    /// utilities.
    pub tail_bound: f64,
}

/// Iterates the Koopman operator from 0 on `set`.
pub fn koopman_fixed_point(
    p: &DecisionProcess,
    set: &HistorySet,
    opts: &FixedPointOptions,
) -> Result<KoopmanFixedPoint, OperatorError> {
    let (values, stats) = iterate_contraction(vec![0.0; set.len()], p.discount(), opts, |u| {
        koopman_values(p, set, u)
    })?;
    let d = p.discount();
    let k = d.star_sum_bound(p.reward_sup_norm());
    Ok(KoopmanFixedPoint {
        values: HistoryValues { values },
        stats,
        utility_bound: k,
        tail_bound: d.iterate_modulus(k, set.horizon()),
    })
}

/// `count` histories of length `horizon` with uniformly random feasible
/// actions, starting from `origins` in turn.
pub fn sample_histories(
    p: &DecisionProcess,
    origins: &[Point],
    horizon: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<FeasibleHistory>, ProcessError> {
    if origins.is_empty() {
        return Err(ProcessError::Invalid("no origins to sample from".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let all: Vec<usize> = (0..p.num_actions()).collect();
    (0..count)
        .map(|i| {
            let mut h = FeasibleHistory::new(origins[i % origins.len()]);
            for _ in 0..horizon {
                let actions = match h.last_state() {
                    Point::State(x) => p.feasible_actions(x),
                    _ => all.clone(),
                };
                let a = *actions
                    .choose(&mut rng)
                    .ok_or_else(|| ProcessError::Invalid("dead end while sampling".into()))?;
                h = extend_history(p, &h, a)?;
            }
            Ok(h)
        })
        .collect()
}
