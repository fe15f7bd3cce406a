//! Rule-based cleanup of planner completions before parsing.

use std::sync::LazyLock;

use regex::Regex;

use super::parse::{scan_groups, Unbalanced};

/// A step header in any case, optionally behind list/quote/heading markers
/// or markdown emphasis.
static LOOSE_STEP: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?i)^\s*(?:[-*>#]+\s*)?(?:\*\*|__)?\s*step\s+([0-9]+(?:\.[0-9]+)*)\.?\s*(?:\*\*|__)?\s*:\s*(?:\*\*|__)?\s*(.*)$",
    )
    .unwrap()
});

/// Normalizes raw planner output into parseable SOP text. Never fails; text
/// without any step header comes back empty.
///
/// Rules, applied in this order:
/// 1. lines before the first `STEP <label>:` header (any case) are dropped;
/// 2. headers are rewritten as `STEP <label>: `;
/// 3. non-header lines are joined onto the preceding step line with one
///    space (none against an opening or closing bracket), blank lines are
///    dropped;
/// 4. anything after the third bracket field is cut, and brackets left open
///    at the end of a line are closed;
/// 5. a line with exactly two fields gets an empty jump field `[]`.
///
/// The output is a fixpoint: repairing it again changes nothing.
pub fn repair_raw_output(text: &str) -> String {
    let mut lines: Vec<String> = Vec::new();
    for raw in text.lines() {
        if let Some(caps) = LOOSE_STEP.captures(raw) {
            let body = caps.get(2).map_or("", |m| m.as_str()).trim();
            lines.push(format!("STEP {}: {}", &caps[1], body).trim_end().to_string());
            continue;
        }
        let Some(last) = lines.last_mut() else {
            continue;
        };
        let piece = raw.trim();
        if piece.is_empty() {
            continue;
        }
        let head = last.trim_end();
        let glue = if head.ends_with('[') || piece.starts_with(']') { "" } else { " " };
        *last = format!("{head}{glue}{piece}");
    }
    lines
        .into_iter()
        .map(|line| fix_fields(&line))
        .collect::<Vec<_>>()
        .join("\n")
}

fn fix_fields(line: &str) -> String {
    let header_end = line.find(':').map_or(line.len(), |i| i + 1);
    let (header, body) = line.split_at(header_end);
    let mut body = trim_after_fields(body);
    if let Ok(groups) = scan_groups(&body, &[]) {
        if groups.fields.len() == 2 {
            body.push_str("[]");
        }
    }
    format!("{header}{body}")
}

/// Cuts text after the third top-level group (or after the last group when
/// there are fewer) and closes groups still open at end of line.
fn trim_after_fields(body: &str) -> String {
    let mut depth = 0usize;
    let mut groups = 0usize;
    let mut last_end = None;
    for (i, ch) in body.char_indices() {
        match ch {
            '[' => depth += 1,
            ']' if depth == 0 => break,
            ']' => {
                depth -= 1;
                if depth == 0 {
                    groups += 1;
                    last_end = Some(i + 1);
                    if groups == 3 {
                        return body[..i + 1].to_string();
                    }
                }
            }
            _ => {}
        }
    }
    // A stray `]` or trailing prose: keep up to the last complete group.
    match scan_groups(body, &[]) {
        Err(Unbalanced::Unclosed(open)) => {
            let mut fixed = body.trim_end().to_string();
            fixed.push_str(&"]".repeat(open));
            fixed
        }
        _ => match last_end {
            Some(end) => body[..end].to_string(),
            None => body.to_string(),
        },
    }
}
