//! Forest search with direction scattering and insight scouting, and the
//! plain tree search it reduces to when all three are switched off.

use super::{themes, CallPurpose, RunContext, StrategyError, StrategyOutcome};
use crate::engine::{
    backpropagate, expand_leaf, select_child, select_seed, simulate_path, AlphaRule, EngineConfig, EngineError,
};
use crate::forest::{Forest, NodeId};
use crate::generators::prompts;
use crate::generators::{GenerationContext, GenerationKind, GenerationResponse, Generator, GeneratorError, Reflection};
use crate::types::{Direction, Insight, InsightMemory, Method, Outcome, RunConfig, SeedTheme, TaskView};
use crate::verifier::Verifier;

/// Attempts at getting `k` distinct directions before falling back to
/// suffixing duplicates.
pub const SCATTER_ATTEMPTS: u32 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct MctsFlags {
    seeds: u32,
    theme: SeedTheme,
    scattering: bool,
    scouting: bool,
}

/// Directions produced for one node, plus the insight line if the reply
/// carried one.
#[derive(Clone, Debug, PartialEq)]
pub struct Scattered {
    pub directions: Vec<Direction>,
    pub insight: Option<String>,
}

/// Asks for `k` improvement directions. Duplicate texts trigger up to two
/// more requests; any remaining shortfall is filled by suffixing copies so
/// exactly `k` distinct texts come back.
pub fn scattering<F>(mut request: F, context: GenerationContext, k: u32) -> Result<Scattered, GeneratorError>
where
    F: FnMut(&GenerationContext) -> Result<GenerationResponse, GeneratorError>,
{
    let k = k.max(1) as usize;
    let mut ctx = context;
    ctx.count = Some(k as u32);
    let mut texts: Vec<(String, Option<f64>)> = Vec::new();
    let mut insight = None;
    for attempt in 0..SCATTER_ATTEMPTS {
        let resp = match request(&ctx) {
            Ok(r) => r,
            Err(e) if texts.is_empty() => return Err(e),
            Err(_) => break,
        };
        if attempt == 0 {
            insight = prompts::parse_insight(&resp.text);
        }
        let dirs = prompts::parse_directions(&resp.text);
        let lps = resp
            .token_log_probs
            .as_ref()
            .and_then(|t| prompts::direction_log_probs(&resp.text, t));
        for (i, d) in dirs.into_iter().enumerate() {
            if !texts.iter().any(|(t, _)| *t == d) {
                texts.push((d, lps.as_ref().and_then(|l| l.get(i).copied())));
            }
        }
        if texts.len() >= k {
            break;
        }
        ctx.reflection = None;
    }
    if texts.is_empty() {
        return Err(GeneratorError::Malformed("reply contained no directions".into()));
    }
    texts.truncate(k);
    let distinct = texts.len();
    let mut variant = 2;
    while texts.len() < k {
        for i in 0..distinct {
            if texts.len() == k {
                break;
            }
            let t = format!("{} (variant {variant})", texts[i].0);
            texts.push((t, None));
        }
        variant += 1;
    }
    let directions = texts
        .into_iter()
        .enumerate()
        .map(|(i, (text, lp))| {
            let mut d = Direction::new(i as u32, text);
            d.log_prob = lp;
            d
        })
        .collect();
    Ok(Scattered { directions, insight })
}

/// Records how a direction worked out. Without a generated insight the
/// direction text itself is stored.
pub fn scouting(
    memory: &mut InsightMemory,
    parent_reward: f64,
    direction: &str,
    child_reward: f64,
    insight: Option<String>,
) -> Outcome {
    let outcome = Outcome::classify(parent_reward, child_reward);
    let text = insight
        .filter(|t| !t.trim().is_empty())
        .unwrap_or_else(|| direction.trim().to_string());
    memory.push(Insight {
        text,
        origin: direction.to_string(),
        outcome,
    });
    outcome
}

pub fn run_sfs(
    task: &TaskView,
    cfg: &RunConfig,
    generator: &mut dyn Generator,
    verifier: &mut dyn Verifier,
) -> Result<StrategyOutcome, StrategyError> {
    let flags = MctsFlags {
        seeds: cfg.seed_count,
        theme: cfg.seed_theme,
        scattering: cfg.scattering,
        scouting: cfg.scouting,
    };
    run_mcts(Method::Sfs, task, cfg, generator, verifier, flags)
}

/// Single-seed MCTS where every child is generated from the same context.
pub fn run_tree(
    task: &TaskView,
    cfg: &RunConfig,
    generator: &mut dyn Generator,
    verifier: &mut dyn Verifier,
) -> Result<StrategyOutcome, StrategyError> {
    let flags = MctsFlags {
        seeds: 1,
        theme: SeedTheme::None,
        scattering: false,
        scouting: false,
    };
    run_mcts(Method::Tree, task, cfg, generator, verifier, flags)
}

fn engine_config(cfg: &RunConfig) -> EngineConfig {
    EngineConfig {
        exploration: cfg.exploration,
        alpha: AlphaRule::RunningAverage,
        policy: cfg.selection_policy,
        puct: cfg.puct,
    }
}

/// Gives `node` its directions (and produces the pending insight, if any).
/// Returns the insight text; leaves the node unscattered on failure.
fn scatter_node(
    ctx: &mut RunContext<'_>,
    forest: &mut Forest,
    node: NodeId,
    memory: &InsightMemory,
    reflection: Option<Reflection>,
    flags: MctsFlags,
    purpose: CallPurpose,
) -> Result<Option<String>, GeneratorError> {
    let k = ctx.cfg.branching;
    let sol_id = forest.node(node).solution.solution_id;
    if !flags.scattering {
        forest.set_directions(node, (0..k).map(|i| Direction::new(i, "")).collect());
        let Some(r) = reflection else { return Ok(None) };
        let mut c = ctx.base_context();
        c.reflection = Some(r);
        let resp = ctx.call(purpose, GenerationKind::Insight, c, ctx.cfg.refine_temperature)?;
        let text = prompts::parse_insight(&resp.text).unwrap_or_else(|| resp.text.trim().to_string());
        return Ok(Some(text));
    }
    let mut c = ctx.base_context();
    c.parents = vec![ctx.parent_context(sol_id)];
    if flags.scouting {
        c.insights = memory.render();
    }
    c.reflection = reflection;
    let temperature = ctx.cfg.seed_temperature;
    let scattered = scattering(
        |c| ctx.call(purpose, GenerationKind::Directions, c.clone(), temperature),
        c,
        k,
    )?;
    forest.set_directions(node, scattered.directions);
    Ok(scattered.insight)
}

fn run_mcts(
    method: Method,
    task: &TaskView,
    cfg: &RunConfig,
    generator: &mut dyn Generator,
    verifier: &mut dyn Verifier,
    flags: MctsFlags,
) -> Result<StrategyOutcome, StrategyError> {
    let mut ctx = RunContext::prepare(task, cfg, generator, verifier)?;
    let engine = engine_config(cfg);
    let mut forest = Forest::new();
    let mut memory = InsightMemory::new(cfg.insight_capacity);

    for theme in themes::instructions(flags.theme, flags.seeds as usize) {
        if !ctx.has_budget() {
            break;
        }
        let mut c = ctx.base_context();
        c.theme = theme;
        let Ok(resp) = ctx.call(CallPurpose::Seed, GenerationKind::Seed, c, cfg.seed_temperature) else {
            ctx.note_failure();
            continue;
        };
        let id = ctx.add_solution(prompts::parse_code(&resp.text), None)?;
        let root = forest.add_root(ctx.solutions[id as usize].clone());
        if ctx.has_budget() {
            if let Err(e) = scatter_node(
                &mut ctx,
                &mut forest,
                root,
                &memory,
                None,
                flags,
                CallPurpose::SeedDirections,
            ) {
                tracing::warn!(task = %task.id, error = %e, "seed scattering failed");
            }
        }
    }
    if forest.is_empty() {
        return ctx.finish(method, None);
    }

    while ctx.has_budget() {
        let seed = select_seed(&forest, &engine)?;
        let root = forest.roots()[seed];
        let (leaf, trajectory) = match simulate_path(&forest, root, &engine) {
            Ok(found) => found,
            Err(EngineError::UnscatteredNode(n)) => {
                let purpose = if forest.node(n).parent.is_none() {
                    CallPurpose::SeedDirections
                } else {
                    CallPurpose::Reflection
                };
                if scatter_node(&mut ctx, &mut forest, n, &memory, None, flags, purpose).is_err() {
                    ctx.note_failure();
                }
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        let direction = select_child(forest.node(leaf), &engine)?;
        let parent_id = forest.node(leaf).solution.solution_id;
        let direction_text = forest
            .node(leaf)
            .direction(direction)
            .map(|d| d.text.clone())
            .unwrap_or_default();

        let mut c = ctx.base_context();
        c.parents = vec![ctx.parent_context(parent_id)];
        if flags.scattering {
            c.direction = Some(direction_text.clone());
        }
        if flags.scouting {
            c.insights = memory.render();
        }
        let Ok(resp) = ctx.call(
            CallPurpose::Solution,
            GenerationKind::Solution,
            c,
            cfg.refine_temperature,
        ) else {
            ctx.note_failure();
            continue;
        };
        let id = ctx.add_solution(prompts::parse_code(&resp.text), Some((parent_id, direction)))?;
        let child = expand_leaf(&mut forest, leaf, direction, ctx.solutions[id as usize].clone())?;
        let parent_reward = ctx.reward(parent_id);
        let child_reward = ctx.reward(id);
        backpropagate(&mut forest, &trajectory, leaf, direction, child_reward, &engine)?;

        let reflection = flags.scouting.then(|| Reflection {
            direction: direction_text.clone(),
            parent_reward,
            child_reward,
            outcome: Outcome::classify(parent_reward, child_reward),
            child_feedback: ctx.feedback_text(id),
        });
        let insight = if ctx.has_budget() {
            match scatter_node(
                &mut ctx,
                &mut forest,
                child,
                &memory,
                reflection,
                flags,
                CallPurpose::Reflection,
            ) {
                Ok(i) => i,
                Err(e) => {
                    tracing::warn!(task = %task.id, error = %e, "scattering failed");
                    None
                }
            }
        } else {
            None
        };
        if flags.scouting {
            scouting(&mut memory, parent_reward, &direction_text, child_reward, insight);
        }
    }
    ctx.finish(method, Some(forest))
}
