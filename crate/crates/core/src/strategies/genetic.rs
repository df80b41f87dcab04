//! Steady-state genetic search: reward-proportional parent pairs, the child
//! replaces the weakest member of the population.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{CallPurpose, RunContext, StrategyError, StrategyOutcome};
use crate::generators::prompts;
use crate::generators::{GenerationKind, Generator};
use crate::types::{DirectionId, Method, RunConfig, SolutionId, TaskView};
use crate::verifier::Verifier;

/// Picks an index with probability proportional to `weights`, uniformly
/// when every weight is zero.
pub fn roulette<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return rng.random_range(0..weights.len());
    }
    let mut x = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if x < *w {
            return i;
        }
        x -= w;
    }
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}

/// Index of the member to evict: lowest reward, oldest on ties.
pub fn weakest(rewards: &[(SolutionId, f64)]) -> usize {
    let mut best = 0;
    for (i, (id, r)) in rewards.iter().enumerate() {
        let (bid, br) = rewards[best];
        if *r < br || (*r == br && *id < bid) {
            best = i;
        }
    }
    best
}

pub fn run_genetic(
    task: &TaskView,
    cfg: &RunConfig,
    generator: &mut dyn Generator,
    verifier: &mut dyn Verifier,
) -> Result<StrategyOutcome, StrategyError> {
    let mut ctx = RunContext::prepare(task, cfg, generator, verifier)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut population: Vec<SolutionId> = Vec::new();

    while ctx.has_budget() && population.len() < cfg.seed_count as usize {
        let c = ctx.base_context();
        match ctx.call(CallPurpose::Seed, GenerationKind::Seed, c, cfg.seed_temperature) {
            Ok(r) => population.push(ctx.add_solution(prompts::parse_code(&r.text), None)?),
            Err(_) => ctx.note_failure(),
        }
    }

    while ctx.has_budget() && !population.is_empty() {
        let weights: Vec<f64> = population.iter().map(|id| ctx.reward(*id)).collect();
        let a = roulette(&weights, &mut rng);
        let b = if population.len() == 1 {
            a
        } else {
            let mut rest = weights.clone();
            rest[a] = 0.0;
            if rest.iter().all(|w| *w <= 0.0) {
                let j = rng.random_range(0..population.len() - 1);
                if j >= a {
                    j + 1
                } else {
                    j
                }
            } else {
                roulette(&rest, &mut rng)
            }
        };
        let (pa, pb) = (population[a], population[b]);
        let mut c = ctx.base_context();
        c.parents = vec![ctx.parent_context(pa), ctx.parent_context(pb)];
        let Ok(r) = ctx.call(
            CallPurpose::Solution,
            GenerationKind::Solution,
            c,
            cfg.refine_temperature,
        ) else {
            ctx.note_failure();
            continue;
        };
        let child = ctx.add_solution(prompts::parse_code(&r.text), Some((pa, DirectionId(0))))?;
        let scored: Vec<(SolutionId, f64)> = population.iter().map(|id| (*id, ctx.reward(*id))).collect();
        let w = weakest(&scored);
        population[w] = child;
    }
    ctx.finish(Method::Genetic, None)
}
