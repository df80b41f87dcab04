//! Prompt templates and parsers for model output.
//!
//! Templates are plain text with `{{field}}` placeholders, one system and one
//! user file per generation kind.

use std::collections::BTreeMap;
use std::sync::LazyLock;

use regex::Regex;

use super::{GenerationContext, GenerationKind, GeneratorError};

struct Templates {
    system: &'static str,
    user: &'static str,
}

fn templates(kind: GenerationKind) -> Templates {
    match kind {
        GenerationKind::Seed => Templates {
            system: include_str!("../../templates/seed.system.txt"),
            user: include_str!("../../templates/seed.user.txt"),
        },
        GenerationKind::Directions => Templates {
            system: include_str!("../../templates/directions.system.txt"),
            user: include_str!("../../templates/directions.user.txt"),
        },
        GenerationKind::Solution => Templates {
            system: include_str!("../../templates/solution.system.txt"),
            user: include_str!("../../templates/solution.user.txt"),
        },
        GenerationKind::Insight => Templates {
            system: include_str!("../../templates/insight.system.txt"),
            user: include_str!("../../templates/insight.user.txt"),
        },
        GenerationKind::Tests => Templates {
            system: include_str!("../../templates/tests.system.txt"),
            user: include_str!("../../templates/tests.user.txt"),
        },
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RenderedPrompt {
    pub system: String,
    pub user: String,
}

static PLACEHOLDER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\{\{\s*([a-z_]+)\s*\}\}").unwrap());
static BLANK_RUNS: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\n{3,}").unwrap());

/// Substitutes every `{{field}}` in `template`. Unknown placeholders are an
/// error so a template can never silently drop context.
pub fn render_template(template: &str, fields: &BTreeMap<&str, String>) -> Result<String, GeneratorError> {
    let mut missing = None;
    let out = PLACEHOLDER.replace_all(template, |caps: &regex::Captures<'_>| {
        let name = &caps[1];
        match fields.get(name) {
            Some(v) => v.clone(),
            None => {
                missing.get_or_insert_with(|| name.to_string());
                String::new()
            }
        }
    });
    if let Some(name) = missing {
        return Err(GeneratorError::InvalidRequest(format!(
            "template field {name:?} has no value"
        )));
    }
    let collapsed = BLANK_RUNS.replace_all(out.trim(), "\n\n");
    Ok(collapsed.into_owned())
}

/// Placeholder names used by a template, in order of first appearance.
pub fn template_fields(template: &str) -> Vec<String> {
    let mut seen = Vec::new();
    for c in PLACEHOLDER.captures_iter(template) {
        let n = c[1].to_string();
        if !seen.contains(&n) {
            seen.push(n);
        }
    }
    seen
}

pub fn template_source(kind: GenerationKind) -> (&'static str, &'static str) {
    let t = templates(kind);
    (t.system, t.user)
}

fn or_none(s: &str) -> String {
    if s.trim().is_empty() {
        "(none)".to_string()
    } else {
        s.trim_end().to_string()
    }
}

fn fmt_reward(r: Option<f64>) -> String {
    r.map_or_else(|| "unknown".to_string(), |r| format!("{r:.4}"))
}

fn insights_block(ctx: &GenerationContext) -> String {
    if ctx.insights.is_empty() {
        "(none)".into()
    } else {
        ctx.insights
            .iter()
            .map(|i| format!("- {i}"))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// Context fields made available to the templates of `kind`.
pub fn context_fields(kind: GenerationKind, ctx: &GenerationContext) -> BTreeMap<&'static str, String> {
    let mut f = BTreeMap::new();
    f.insert("prompt", ctx.prompt.trim_end().to_string());
    f.insert("entry_point", ctx.entry_point.clone());
    f.insert("count", ctx.count.map_or_else(String::new, |c| c.to_string()));
    f.insert("insights", insights_block(ctx));
    let theme = ctx.theme.as_deref().unwrap_or("").trim();
    f.insert(
        "theme",
        if theme.is_empty() {
            String::new()
        } else {
            format!("\n{theme}\n")
        },
    );
    let first = ctx.parents.first();
    f.insert(
        "code",
        first.map_or_else(String::new, |p| p.code.trim_end().to_string()),
    );
    f.insert("feedback", or_none(first.map_or("", |p| p.feedback.as_str())));
    f.insert("reward", fmt_reward(first.and_then(|p| p.reward)));

    let parents = match ctx.parents.len() {
        0 => String::new(),
        1 => {
            let p = &ctx.parents[0];
            format!(
                "Previous solution (score {}):\n```python\n{}\n```\n\nTest feedback:\n{}\n",
                fmt_reward(p.reward),
                p.code.trim_end(),
                or_none(&p.feedback)
            )
        }
        _ => {
            let mut s = String::from("Combine the strengths of these earlier solutions.\n");
            for (i, p) in ctx.parents.iter().enumerate() {
                s.push_str(&format!(
                    "\nSolution {} (score {}):\n```python\n{}\n```\n\nTest feedback:\n{}\n",
                    i + 1,
                    fmt_reward(p.reward),
                    p.code.trim_end(),
                    or_none(&p.feedback)
                ));
            }
            s
        }
    };
    f.insert("parents", parents);
    let direction = match (kind, &ctx.direction) {
        (GenerationKind::Solution, Some(d)) if !d.trim().is_empty() => {
            format!("Implement this improvement direction:\n{}\n", d.trim())
        }
        (_, Some(d)) => d.trim().to_string(),
        (_, None) => String::new(),
    };
    f.insert("direction", direction);

    let reflection = match &ctx.reflection {
        Some(r) => {
            if kind == GenerationKind::Insight {
                f.insert("direction", r.direction.trim().to_string());
                f.insert("feedback", or_none(&r.child_feedback));
            }
            f.insert("parent_reward", format!("{:.4}", r.parent_reward));
            f.insert("child_reward", format!("{:.4}", r.child_reward));
            f.insert("outcome", r.outcome.as_str().to_string());
            format!(
                "\nThe previous change applied the direction \"{}\" and the score went from {:.4} to {:.4} ({}).\n\
                 Start your reply with one line \"Insight: <general lesson>\" that summarizes what this shows, then give the directions.\n",
                r.direction.trim(),
                r.parent_reward,
                r.child_reward,
                r.outcome.as_str()
            )
        }
        None => String::new(),
    };
    f.insert("reflection", reflection);
    f
}

pub fn render(kind: GenerationKind, ctx: &GenerationContext) -> Result<RenderedPrompt, GeneratorError> {
    let t = templates(kind);
    let fields = context_fields(kind, ctx);
    Ok(RenderedPrompt {
        system: render_template(t.system, &fields)?,
        user: render_template(t.user, &fields)?,
    })
}

static FENCE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?s)```[ \t]*([A-Za-z0-9_+-]*)[ \t]*\r?\n(.*?)```").unwrap());

/// Extracts program text: the first ```python block, else the first fenced
/// block, else the whole reply.
pub fn parse_code(text: &str) -> String {
    let blocks: Vec<(String, String)> = FENCE
        .captures_iter(text)
        .map(|c| (c[1].to_ascii_lowercase(), c[2].to_string()))
        .collect();
    let pick = blocks
        .iter()
        .find(|(lang, _)| lang == "python" || lang == "py")
        .or_else(|| blocks.first());
    match pick {
        Some((_, body)) => body.trim_end().to_string(),
        None => text.trim().to_string(),
    }
}

static DIRECTION_HEAD: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)^\s*[*#_]*\s*direction\s*(\d+)\s*[*_]*\s*[:.)\-]\s*[*_]*\s*(.*)$").unwrap());
static NUMBERED: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\s*(\d+)[.)]\s+(.+)$").unwrap());
static INSIGHT_HEAD: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)^\s*[*#_]*\s*insight\s*\d*\s*[*_]*\s*:\s*[*_]*\s*(.*)$").unwrap());
static THOUGHTS_HEAD: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)^\s*[*#_]*\s*thoughts?\s*[*_]*\s*:").unwrap());

/// Byte span of every parsed direction in `text`.
fn direction_spans(text: &str) -> Vec<(usize, usize, String)> {
    let mut out: Vec<(usize, usize, String)> = Vec::new();
    let use_numbered = !text.lines().any(|l| DIRECTION_HEAD.is_match(l));
    let mut offset = 0;
    let mut open = false;
    for raw in text.split_inclusive('\n') {
        let line = raw.trim_end_matches(['\n', '\r']);
        let start = offset;
        offset += raw.len();
        let head = if use_numbered {
            NUMBERED.captures(line).map(|c| c[2].to_string())
        } else {
            DIRECTION_HEAD.captures(line).map(|c| c[2].to_string())
        };
        if let Some(body) = head {
            out.push((start, start + line.len(), body.trim().to_string()));
            open = true;
            continue;
        }
        if line.trim().is_empty()
            || INSIGHT_HEAD.is_match(line)
            || THOUGHTS_HEAD.is_match(line)
            || line.trim_start().starts_with("```")
        {
            open = false;
            continue;
        }
        if open {
            let last = out.last_mut().expect("open direction");
            if !last.2.is_empty() {
                last.2.push(' ');
            }
            last.2.push_str(line.trim());
            last.1 = start + line.len();
        }
    }
    out.retain(|(_, _, t)| !t.is_empty());
    out
}

/// Parses "Direction N: ..." lines (falling back to a numbered list).
/// Continuation lines are folded into the preceding direction.
pub fn parse_directions(text: &str) -> Vec<String> {
    direction_spans(text).into_iter().map(|(_, _, t)| t).collect()
}

/// Sums per-token log-probabilities over each parsed direction. Returns
/// `None` if the tokens do not reassemble the text.
pub fn direction_log_probs(text: &str, tokens: &[(String, f64)]) -> Option<Vec<f64>> {
    let joined: String = tokens.iter().map(|(t, _)| t.as_str()).collect();
    if joined != text {
        return None;
    }
    let spans = direction_spans(text);
    let mut sums = vec![0.0; spans.len()];
    let mut pos = 0;
    for (tok, lp) in tokens {
        let (s, e) = (pos, pos + tok.len());
        pos = e;
        for (i, (a, b, _)) in spans.iter().enumerate() {
            if s < *b && e > *a {
                sums[i] += lp;
            }
        }
    }
    Some(sums)
}

/// The "Insight: ..." line of a reflection reply, if any.
pub fn parse_insight(text: &str) -> Option<String> {
    text.lines()
        .find_map(|l| INSIGHT_HEAD.captures(l).map(|c| c[1].trim().to_string()))
        .filter(|s| !s.is_empty())
}

/// Assert lines from a tests reply. Fenced blocks are preferred when present.
pub fn parse_assert_lines(text: &str) -> Vec<String> {
    let fenced: Vec<String> = FENCE.captures_iter(text).map(|c| c[2].to_string()).collect();
    let body = if fenced.is_empty() {
        text.to_string()
    } else {
        fenced.join("\n")
    };
    body.lines()
        .map(str::trim)
        .filter(|l| {
            l.strip_prefix("assert")
                .and_then(|r| r.chars().next())
                .is_some_and(|c| c.is_whitespace() || c == '(')
        })
        .map(str::to_string)
        .collect()
}
