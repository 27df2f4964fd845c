use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::DecisionContext;
use crate::agent::{ReflectionFlag, TradeAction};

const TRAIN: &str = include_str!("../../templates/train.txt");
const TEST: &str = include_str!("../../templates/test.txt");
const DEBATE: &str = include_str!("../../templates/debate.txt");

/// Memory text beyond this many characters is cut in prompts.
pub const MAX_MEMORY_CHARS: usize = 240;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    Train,
    Test,
    Debate,
}

fn clip(text: &str) -> String {
    let one_line = text.replace('\n', " ");
    match one_line.char_indices().nth(MAX_MEMORY_CHARS) {
        Some((i, _)) => format!("{}...", &one_line[..i]),
        None => one_line,
    }
}

fn or_none(s: String) -> String {
    if s.is_empty() {
        "(none)".to_string()
    } else {
        s.trim_end().to_string()
    }
}

fn memories(ctx: &DecisionContext) -> String {
    let mut out = String::new();
    for layer in &ctx.memories {
        let _ = writeln!(out, "[{}]", layer.layer);
        if layer.events.is_empty() {
            out.push_str("  (none)\n");
        }
        for e in &layer.events {
            let _ = writeln!(
                out,
                "  - [{:.2}] {} {}",
                e.score.gamma,
                e.timestamp.format("%Y-%m-%d %H:%M"),
                clip(&e.text)
            );
        }
    }
    out.trim_end().to_string()
}

fn facts(ctx: &DecisionContext) -> String {
    let mut out = format!("- close on {}: {:.2}\n", ctx.date, ctx.facts.close);
    let closes: Vec<String> = ctx
        .facts
        .recent_closes
        .iter()
        .map(|(t, c)| format!("{} {:.2}", t.date(), c))
        .collect();
    let _ = write!(out, "- recent closes: {}", closes.join(", "));
    out
}

fn holdings(ctx: &DecisionContext) -> String {
    or_none(ctx.facts.holdings.iter().fold(String::new(), |mut s, h| {
        let side = if h.shares_delta > 0 { "bought" } else { "sold" };
        let _ = writeln!(s, "- {} {} {} shares", h.fund, side, h.shares_delta.unsigned_abs());
        s
    }))
}

fn reflections(ctx: &DecisionContext) -> String {
    or_none(ctx.reflections.iter().fold(String::new(), |mut s, r| {
        let what = match (r.flag, &r.recommendation) {
            (ReflectionFlag::Immediate, Some(rec)) => rec.action.phrase().to_string(),
            _ => "weekly review".to_string(),
        };
        let _ = writeln!(
            s,
            "- {} {}: {}, volume {}, return {:+.2}%",
            r.timestamp.date(),
            r.ticker.as_deref().unwrap_or("portfolio"),
            what,
            r.trade_volume,
            r.realized_return * 100.0
        );
        s
    }))
}

fn feedback(ctx: &DecisionContext) -> String {
    or_none(ctx.feedback.iter().fold(String::new(), |mut s, f| {
        let _ = writeln!(s, "- {} (round {}): {}", f.sender_id, f.round, clip(&f.feedback.text));
        s
    }))
}

fn peers(ctx: &DecisionContext) -> String {
    or_none(ctx.peers.iter().fold(String::new(), |mut s, p| {
        let r = &p.reflection;
        let _ = writeln!(
            s,
            "- {} plans to {}; traded {} shares ({:.2}), position return {:+.2}%",
            p.sender_id,
            p.action.phrase(),
            r.trade_volume,
            r.trade_value,
            r.realized_return * 100.0
        );
        for m in &p.memories {
            let _ = writeln!(s, "    [{} {:.2}] {}", m.layer, m.gamma, clip(&m.text));
        }
        s
    }))
}

fn actions() -> String {
    TradeAction::ALL
        .iter()
        .rev()
        .map(|a| a.phrase())
        .collect::<Vec<_>>()
        .join("\n")
}

/// Expands the template for `kind` with the context. Deterministic.
pub fn render_prompt(ctx: &DecisionContext, kind: PromptKind) -> String {
    let template = match kind {
        PromptKind::Train => TRAIN,
        PromptKind::Test => TEST,
        PromptKind::Debate => DEBATE,
    };
    let sectors: Vec<&str> = ctx.character.sectors.iter().map(String::as_str).collect();
    let body = template.split_once('\n').map_or(template, |(_, rest)| rest);
    let mut out = body.to_string();
    let vars: [(&str, String); 12] = [
        ("risk", ctx.character.risk.to_string()),
        ("sectors", sectors.join(", ")),
        ("date", ctx.date.to_string()),
        ("ticker", ctx.ticker.clone()),
        ("shares", ctx.shares_held.to_string()),
        ("cash", format!("{:.2}", ctx.cash)),
        ("memories", memories(ctx)),
        ("facts", facts(ctx)),
        ("holdings", holdings(ctx)),
        ("reflections", reflections(ctx)),
        ("feedback", feedback(ctx)),
        ("peers", peers(ctx)),
    ];
    for (name, value) in vars.iter() {
        out = out.replace(&format!("{{{{{name}}}}}"), value);
    }
    out.replace("{{actions}}", &actions())
}
