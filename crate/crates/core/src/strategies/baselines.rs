//! Sequential refinement and independent sampling.

use super::{themes, CallPurpose, RunContext, StrategyError, StrategyOutcome};
use crate::generators::prompts;
use crate::generators::{GenerationKind, Generator};
use crate::types::{DirectionId, Method, RunConfig, TaskView};
use crate::verifier::Verifier;

/// One seed followed by a chain where each step refines the previous
/// candidate using its feedback.
pub fn run_line(
    task: &TaskView,
    cfg: &RunConfig,
    generator: &mut dyn Generator,
    verifier: &mut dyn Verifier,
) -> Result<StrategyOutcome, StrategyError> {
    let mut ctx = RunContext::prepare(task, cfg, generator, verifier)?;
    while ctx.has_budget() {
        let Some(last) = ctx.solutions.last().map(|s| s.solution_id) else {
            let c = ctx.base_context();
            match ctx.call(CallPurpose::Seed, GenerationKind::Seed, c, cfg.seed_temperature) {
                Ok(r) => {
                    ctx.add_solution(prompts::parse_code(&r.text), None)?;
                }
                Err(_) => ctx.note_failure(),
            }
            continue;
        };
        let mut c = ctx.base_context();
        c.parents = vec![ctx.parent_context(last)];
        match ctx.call(
            CallPurpose::Solution,
            GenerationKind::Solution,
            c,
            cfg.refine_temperature,
        ) {
            Ok(r) => {
                ctx.add_solution(prompts::parse_code(&r.text), Some((last, DirectionId(0))))?;
            }
            Err(_) => ctx.note_failure(),
        }
    }
    ctx.finish(Method::Line, None)
}

/// `budget` independent samples from the plain (or themed) seed prompt.
pub fn run_bon(
    task: &TaskView,
    cfg: &RunConfig,
    generator: &mut dyn Generator,
    verifier: &mut dyn Verifier,
) -> Result<StrategyOutcome, StrategyError> {
    let mut ctx = RunContext::prepare(task, cfg, generator, verifier)?;
    let mut themes = themes::instructions(cfg.bon_theme, cfg.budget as usize)
        .into_iter()
        .cycle();
    while ctx.has_budget() {
        let mut c = ctx.base_context();
        c.theme = themes.next().flatten();
        match ctx.call(CallPurpose::Seed, GenerationKind::Seed, c, cfg.seed_temperature) {
            Ok(r) => {
                ctx.add_solution(prompts::parse_code(&r.text), None)?;
            }
            Err(_) => ctx.note_failure(),
        }
    }
    ctx.finish(Method::Bon, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{
        GenerationResponse, GeneratorError, ScriptedGenerator, SyntheticGenerator, SyntheticLandscape,
    };
    use crate::types::{SeedTheme, ValidationTest};
    use crate::verifier::SyntheticVerifier;

    fn task() -> TaskView {
        TaskView {
            id: "t".into(),
            prompt: "p".into(),
            entry_point: "synth".into(),
            validation_tests: (1..=6)
                .map(|j| ValidationTest::new(&format!("assert synth_grade() >= {j}")).unwrap())
                .collect(),
        }
    }

    fn cfg(budget: u32) -> RunConfig {
        RunConfig {
            budget,
            seed_count: 1,
            early_stop: false,
            ..RunConfig::default()
        }
    }

    #[test]
    fn line_is_a_chain() {
        let l = SyntheticLandscape::default();
        let mut g = SyntheticGenerator::new(l.clone(), 3);
        let mut v = SyntheticVerifier::new(l);
        let out = run_line(&task(), &cfg(6), &mut g, &mut v).unwrap();
        let s = &out.run_record.solutions;
        assert_eq!(s.len(), 6);
        assert!(s[0].is_seed());
        for (i, c) in s.iter().enumerate().skip(1) {
            assert_eq!(c.parent_id, Some(i as u32 - 1));
            assert_eq!(c.direction_id, Some(DirectionId(0)));
        }
        assert_eq!(out.calls.total(), 6);
    }

    #[test]
    fn line_feeds_back_the_previous_candidate() {
        let l = SyntheticLandscape::default();
        let mut g = ScriptedGenerator::new(vec![
            Ok(GenerationResponse::text("SYNTH 0 0")),
            Ok(GenerationResponse::text("SYNTH 0 1")),
        ]);
        let mut v = SyntheticVerifier::new(l);
        run_line(&task(), &cfg(2), &mut g, &mut v).unwrap();
        let req = &g.requests()[1];
        assert_eq!(req.kind, GenerationKind::Solution);
        assert_eq!(req.context.parents[0].code, "SYNTH 0 0");
        assert!(req.context.parents[0].feedback.contains("incorrect"));
    }

    #[test]
    fn bon_samples_are_independent() {
        let l = SyntheticLandscape::default();
        let mut g = SyntheticGenerator::new(l.clone(), 4);
        let mut v = SyntheticVerifier::new(l);
        let out = run_bon(&task(), &cfg(5), &mut g, &mut v).unwrap();
        assert_eq!(out.run_record.solutions.len(), 5);
        assert!(out.run_record.solutions.iter().all(|s| s.is_seed()));
        assert_eq!(out.calls.total(), 5);
    }

    #[test]
    fn bon_theme_cycles() {
        let c = RunConfig {
            bon_theme: SeedTheme::Style,
            ..cfg(3)
        };
        let mut g = ScriptedGenerator::new((0..3).map(|_| Ok(GenerationResponse::text("SYNTH 0 0"))).collect());
        let mut v = SyntheticVerifier::new(SyntheticLandscape::default());
        run_bon(&task(), &c, &mut g, &mut v).unwrap();
        let got: Vec<_> = g.requests().iter().map(|r| r.context.theme.clone().unwrap()).collect();
        assert_eq!(got, themes::bank(SeedTheme::Style)[..3]);
    }

    #[test]
    fn failed_calls_are_retried_then_skipped() {
        let mut g = ScriptedGenerator::new(vec![
            Err(GeneratorError::Timeout),
            Err(GeneratorError::Timeout),
            Err(GeneratorError::Timeout),
            Ok(GenerationResponse::text("SYNTH 0 0")),
            Ok(GenerationResponse::text("SYNTH 0 1")),
        ]);
        let mut v = SyntheticVerifier::new(SyntheticLandscape::default());
        let out = run_bon(&task(), &cfg(2), &mut g, &mut v).unwrap();
        assert_eq!(out.run_record.solutions.len(), 2);
        assert_eq!(out.calls.seeds, 5);
    }
}
