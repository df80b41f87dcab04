//! MCTS mechanics: UCT/PUCT scoring, selection, the simulation walk,
//! expansion and max-backup.
//!
//! Seed selection and direction selection draw on disjoint visit pools: the
//! forest keeps one [`DirectionStats`] per root, independent of the stats on
//! the roots' own directions.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::forest::{Forest, NodeId, SearchNode, Trajectory};
use crate::types::{CandidateSolution, DirectionId, DirectionStats};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("invalid score input: {0}")]
    InvalidInput(String),
    #[error("unscattered node {0:?}")]
    UnscatteredNode(NodeId),
    #[error("double expansion of {direction} at node {node:?}")]
    DoubleExpansion { node: NodeId, direction: DirectionId },
    #[error("unknown direction {direction} at node {node:?}")]
    UnknownDirection { node: NodeId, direction: DirectionId },
    #[error("empty forest")]
    EmptyForest,
    #[error("node {0:?} has no directions to select from")]
    NoDirections(NodeId),
    #[error("reward {0} outside [0,1]")]
    RewardOutOfRange(f64),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Policy {
    #[default]
    Uct,
    Puct,
}

impl std::str::FromStr for Policy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "uct" => Ok(Policy::Uct),
            "puct" => Ok(Policy::Puct),
            other => Err(format!("unknown policy {other:?}")),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PriorSource {
    #[default]
    Uniform,
    GeneratorLogprob,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PuctConfig {
    pub c_base: f64,
    pub c: f64,
    pub prior_source: PriorSource,
}

impl Default for PuctConfig {
    fn default() -> Self {
        Self {
            c_base: 19652.0,
            c: 1.25,
            prior_source: PriorSource::GeneratorLogprob,
        }
    }
}

/// Step size schedule for the max-backup.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub enum AlphaRule {
    /// alpha = 1 / (1 + n): a running average over visits.
    #[default]
    RunningAverage,
    Constant(f64),
}

impl AlphaRule {
    pub fn alpha(self, visits: u32) -> f64 {
        match self {
            AlphaRule::RunningAverage => 1.0 / (1.0 + f64::from(visits)),
            AlphaRule::Constant(a) => a,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EngineConfig {
    pub exploration: f64,
    pub alpha: AlphaRule,
    pub policy: Policy,
    pub puct: PuctConfig,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            exploration: 1.0,
            alpha: AlphaRule::RunningAverage,
            policy: Policy::Uct,
            puct: PuctConfig::default(),
        }
    }
}

/// Selection score. `Unvisited` ranks above every finite score, which keeps
/// the ordering total without relying on floating-point infinity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Score {
    Finite(f64),
    Unvisited,
}

impl Score {
    pub fn value(self) -> Option<f64> {
        match self {
            Score::Finite(v) => Some(v),
            Score::Unvisited => None,
        }
    }
}

impl Eq for Score {}

impl PartialOrd for Score {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Score {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Score::Unvisited, Score::Unvisited) => Ordering::Equal,
            (Score::Unvisited, _) => Ordering::Greater,
            (_, Score::Unvisited) => Ordering::Less,
            (Score::Finite(a), Score::Finite(b)) => a.total_cmp(b),
        }
    }
}

fn check_stats(stats: &DirectionStats) -> Result<(), EngineError> {
    if !(0.0..=1.0).contains(&stats.q_value) {
        return Err(EngineError::InvalidInput(format!(
            "q-value {} outside [0,1]",
            stats.q_value
        )));
    }
    Ok(())
}

/// `Q + c * sqrt(ln(total) / visits)`, or [`Score::Unvisited`] when the
/// branch has never been visited.
pub fn uct_score(stats: &DirectionStats, sibling_visit_total: u64, c: f64) -> Result<Score, EngineError> {
    if !c.is_finite() || c < 0.0 {
        return Err(EngineError::InvalidInput(format!("exploration constant {c}")));
    }
    check_stats(stats)?;
    if sibling_visit_total < u64::from(stats.visits) {
        return Err(EngineError::InvalidInput(format!(
            "sibling visit total {sibling_visit_total} below branch visits {}",
            stats.visits
        )));
    }
    if stats.visits == 0 {
        return Ok(Score::Unvisited);
    }
    let explore = ((sibling_visit_total as f64).ln() / f64::from(stats.visits)).sqrt();
    Ok(Score::Finite(stats.q_value + c * explore))
}

/// Exploration weight `ln((n + c_base + 1) / c_base) + c`.
pub fn puct_beta(node_visit_total: u64, cfg: &PuctConfig) -> Result<f64, EngineError> {
    if !(cfg.c_base.is_finite() && cfg.c_base > 0.0) {
        return Err(EngineError::InvalidInput(format!(
            "c_base {} must be positive",
            cfg.c_base
        )));
    }
    if !(cfg.c.is_finite() && cfg.c >= 0.0) {
        return Err(EngineError::InvalidInput(format!("puct c {}", cfg.c)));
    }
    Ok(((node_visit_total as f64 + cfg.c_base + 1.0) / cfg.c_base).ln() + cfg.c)
}

/// `Q + beta * prior * sqrt(ln(n) / (1 + visits))`. With `n <= 1` the
/// exploration term is zero.
pub fn puct_score(
    stats: &DirectionStats,
    prior: f64,
    node_visit_total: u64,
    cfg: &PuctConfig,
) -> Result<f64, EngineError> {
    check_stats(stats)?;
    if !(0.0..=1.0).contains(&prior) {
        return Err(EngineError::InvalidInput(format!("prior {prior} outside [0,1]")));
    }
    let beta = puct_beta(node_visit_total, cfg)?;
    let log_n = if node_visit_total <= 1 {
        0.0
    } else {
        (node_visit_total as f64).ln()
    };
    Ok(stats.q_value + beta * prior * (log_n / (1.0 + f64::from(stats.visits))).sqrt())
}

/// The max-backup: `(1 - a) * q + a * max(q, target)` with `a` taken from the
/// visit count before it is incremented.
pub fn backup_value(q_old: f64, target: f64, visits: u32, rule: AlphaRule) -> f64 {
    if target <= q_old {
        // algebraically q_old; computed, it can round one ulp below
        return q_old;
    }
    let alpha = rule.alpha(visits);
    ((1.0 - alpha) * q_old + alpha * target).max(q_old)
}

/// Softmax over log-probabilities; uniform when any is missing.
pub fn priors_from_log_probs(log_probs: &[Option<f64>]) -> Vec<f64> {
    let n = log_probs.len();
    if n == 0 {
        return Vec::new();
    }
    let all: Option<Vec<f64>> = log_probs.iter().copied().collect();
    match all {
        Some(lp) if lp.iter().all(|v| v.is_finite()) => {
            let max = lp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = lp.iter().map(|v| (v - max).exp()).collect();
            let z: f64 = exps.iter().sum();
            exps.into_iter().map(|e| e / z).collect()
        }
        _ => vec![1.0 / n as f64; n],
    }
}

/// Index of the best-scoring entry. Unvisited entries beat visited ones and
/// ties resolve to the lowest index.
fn argmax_scores(stats: &[DirectionStats], priors: &[f64], cfg: &EngineConfig) -> Result<Option<usize>, EngineError> {
    let total: u64 = stats.iter().map(|s| u64::from(s.visits)).sum();
    let mut best: Option<(usize, Score)> = None;
    for (i, s) in stats.iter().enumerate() {
        let score = match cfg.policy {
            Policy::Uct => uct_score(s, total, cfg.exploration)?,
            Policy::Puct if s.visits == 0 => {
                check_stats(s)?;
                Score::Unvisited
            }
            Policy::Puct => Score::Finite(puct_score(s, priors[i], total, &cfg.puct)?),
        };
        if best.is_none_or(|(_, b)| score > b) {
            best = Some((i, score));
        }
    }
    Ok(best.map(|(i, _)| i))
}

/// Picks the direction to follow at `node`.
pub fn select_child(node: &SearchNode, cfg: &EngineConfig) -> Result<DirectionId, EngineError> {
    let mut order: Vec<usize> = (0..node.directions.len()).collect();
    order.sort_by_key(|&i| node.directions[i].id);
    let stats: Vec<DirectionStats> = order.iter().map(|&i| node.directions[i].stats).collect();
    let priors = match cfg.puct.prior_source {
        PriorSource::Uniform => vec![1.0 / stats.len().max(1) as f64; stats.len()],
        PriorSource::GeneratorLogprob => {
            let lps: Vec<Option<f64>> = order.iter().map(|&i| node.directions[i].log_prob).collect();
            priors_from_log_probs(&lps)
        }
    };
    let pick = argmax_scores(&stats, &priors, cfg)?
        .ok_or_else(|| EngineError::InvalidInput("node has no directions".into()))?;
    Ok(node.directions[order[pick]].id)
}

/// Picks the root to simulate from, scored on the forest's seed pool.
pub fn select_seed(forest: &Forest, cfg: &EngineConfig) -> Result<usize, EngineError> {
    let stats = forest.seed_stats();
    let priors = vec![1.0 / stats.len().max(1) as f64; stats.len()];
    argmax_scores(stats, &priors, cfg)?.ok_or(EngineError::EmptyForest)
}

/// Walks from `root` along selected directions until reaching a node with at
/// least one childless direction.
pub fn simulate_path(forest: &Forest, root: NodeId, cfg: &EngineConfig) -> Result<(NodeId, Trajectory), EngineError> {
    let mut current = root;
    let mut trajectory = Trajectory::default();
    loop {
        let node = forest.node(current);
        if node.directions.is_empty() {
            return Err(EngineError::UnscatteredNode(current));
        }
        if node.is_leaf() {
            return Ok((current, trajectory));
        }
        let d = select_child(node, cfg)?;
        let Some(&child) = node.children.get(&d) else {
            return Ok((current, trajectory));
        };
        trajectory.steps.push((current, d));
        current = child;
    }
}

/// Attaches `solution` under `direction` at `leaf`. The new node starts
/// without directions.
pub fn expand_leaf(
    forest: &mut Forest,
    leaf: NodeId,
    direction: DirectionId,
    mut solution: CandidateSolution,
) -> Result<NodeId, EngineError> {
    let node = forest.node(leaf);
    if node.direction(direction).is_none() {
        return Err(EngineError::UnknownDirection { node: leaf, direction });
    }
    if node.children.contains_key(&direction) {
        return Err(EngineError::DoubleExpansion { node: leaf, direction });
    }
    solution.parent_id = Some(node.solution.solution_id);
    solution.direction_id = Some(direction);
    let child = forest.push(SearchNode::new(solution, Some(leaf)));
    forest.node_mut(leaf).children.insert(direction, child);
    Ok(child)
}

/// Backs `leaf_reward` up from `(leaf, leaf_direction)` through the trajectory
/// in reverse, then into the seed pool of the tree's root. Every touched stat
/// gets exactly one more visit.
pub fn backpropagate(
    forest: &mut Forest,
    trajectory: &Trajectory,
    leaf: NodeId,
    leaf_direction: DirectionId,
    leaf_reward: f64,
    cfg: &EngineConfig,
) -> Result<(), EngineError> {
    if !(0.0..=1.0).contains(&leaf_reward) {
        return Err(EngineError::RewardOutOfRange(leaf_reward));
    }
    let mut target = update_direction(forest, leaf, leaf_direction, leaf_reward, cfg)?;
    for &(node, direction) in trajectory.steps.iter().rev() {
        target = update_direction(forest, node, direction, target, cfg)?;
    }
    let top = trajectory.steps.first().map_or(leaf, |(n, _)| *n);
    if let Some(idx) = forest.root_index_of(top) {
        let s = &mut forest.seed_stats_mut()[idx];
        s.q_value = backup_value(s.q_value, target, s.visits, cfg.alpha).clamp(0.0, 1.0);
        s.visits += 1;
    }
    Ok(())
}

fn update_direction(
    forest: &mut Forest,
    node: NodeId,
    direction: DirectionId,
    target: f64,
    cfg: &EngineConfig,
) -> Result<f64, EngineError> {
    let d = forest
        .node_mut(node)
        .direction_mut(direction)
        .ok_or(EngineError::UnknownDirection { node, direction })?;
    let s = &mut d.stats;
    s.q_value = backup_value(s.q_value, target, s.visits, cfg.alpha).clamp(0.0, 1.0);
    s.visits += 1;
    Ok(s.q_value)
}
