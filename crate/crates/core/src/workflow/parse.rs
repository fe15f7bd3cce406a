use std::collections::HashSet;
use std::sync::LazyLock;

use regex::Regex;
use thiserror::Error;

use super::{Condition, DraftJump, StepDraft, StepLabel, StepText, Workflow};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("no STEP lines found")]
    Empty,
    #[error("line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("line {line}: unbalanced square brackets")]
    UnbalancedBrackets { line: usize },
    #[error("line {line}: expected 2 or 3 bracket fields, found {found}")]
    FieldCountError { line: usize, found: usize },
    #[error("line {line}: STEP {label} has no parent step")]
    OrphanChild { line: usize, label: StepLabel },
    #[error("line {line}: STEP {label} appears more than once")]
    DuplicateLabel { line: usize, label: StepLabel },
    #[error("line {line}: STEP {label} is not inside STEP {target}")]
    OutsideTarget {
        line: usize,
        label: StepLabel,
        target: StepLabel,
    },
}

static STEP_LINE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^STEP[ \t]+([0-9]+(?:\.[0-9]+)*)[ \t]*:[ \t]*(.*)$").unwrap());

static JUMP_TARGET: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)^\s*jump\s+to\s+step\s+([0-9]+(?:\.[0-9]+)*)\s*\.?\s*$").unwrap()
});

/// Bracket groups found at depth zero of a string.
#[derive(Debug, Default)]
pub(crate) struct Groups<'a> {
    /// Contents of each group, without the outer brackets.
    pub fields: Vec<&'a str>,
    /// Byte offset just past each group's closing bracket.
    pub ends: Vec<usize>,
    /// Non-whitespace text found between or around groups.
    pub stray: String,
}

#[derive(Debug, PartialEq, Eq)]
pub(crate) enum Unbalanced {
    /// A `]` with no matching `[`, at this byte offset.
    ExtraClose(usize),
    /// Input ended with this many groups still open.
    Unclosed(usize),
}

/// Splits `s` into top-level `[...]` groups using depth counting. `allowed`
/// lists the characters permitted between groups besides whitespace.
pub(crate) fn scan_groups<'a>(s: &'a str, allowed: &[char]) -> Result<Groups<'a>, Unbalanced> {
    let mut groups = Groups::default();
    let mut depth = 0usize;
    let mut start = 0usize;
    for (i, ch) in s.char_indices() {
        match ch {
            '[' => {
                if depth == 0 {
                    start = i + 1;
                }
                depth += 1;
            }
            ']' => {
                if depth == 0 {
                    return Err(Unbalanced::ExtraClose(i));
                }
                depth -= 1;
                if depth == 0 {
                    groups.fields.push(&s[start..i]);
                    groups.ends.push(i + 1);
                }
            }
            c if depth == 0 && !c.is_whitespace() && !allowed.contains(&c) => groups.stray.push(c),
            _ => {}
        }
    }
    if depth > 0 {
        return Err(Unbalanced::Unclosed(depth));
    }
    Ok(groups)
}

struct ParsedLine {
    line: usize,
    label: StepLabel,
    draft: StepDraft,
}

fn parse_text(line: usize, field: &str, what: &str) -> Result<StepText, ParseError> {
    StepText::new(field).map_err(|e| ParseError::MalformedLine {
        line,
        reason: format!("{what}: {e}"),
    })
}

fn parse_target(line: usize, field: &str) -> Result<StepLabel, ParseError> {
    JUMP_TARGET
        .captures(field)
        .and_then(|c| c[1].parse().ok())
        .ok_or_else(|| ParseError::MalformedLine {
            line,
            reason: format!("expected `Jump to STEP <label>`, found `{field}`"),
        })
}

fn parse_condition(line: usize, field: &str) -> Result<Condition, ParseError> {
    Condition::new(field).map_err(|e| ParseError::MalformedLine {
        line,
        reason: format!("jump condition: {e}"),
    })
}

/// Parses the content of the third field into rules. Accepts the canonical
/// `[[if c][Jump to STEP n]], ...` list, rules without separators, and a bare
/// `[c][Jump to STEP n]` pair.
fn parse_jump_field(line: usize, field: &str) -> Result<Vec<DraftJump>, ParseError> {
    if field.trim().is_empty() {
        return Ok(Vec::new());
    }
    let groups =
        scan_groups(field, &[',']).map_err(|_| ParseError::UnbalancedBrackets { line })?;
    if !groups.stray.is_empty() {
        return Err(ParseError::MalformedLine {
            line,
            reason: format!("unexpected text `{}` in jump field", groups.stray),
        });
    }
    let mut rules = Vec::new();
    let mut i = 0;
    while i < groups.fields.len() {
        let group = groups.fields[i];
        let inner = scan_groups(group, &[]).map_err(|_| ParseError::UnbalancedBrackets { line })?;
        if !inner.fields.is_empty() {
            if inner.fields.len() != 2 || !inner.stray.is_empty() {
                return Err(ParseError::MalformedLine {
                    line,
                    reason: format!("jump rule `[{group}]` must be `[condition][Jump to STEP n]`"),
                });
            }
            rules.push(DraftJump {
                condition: parse_condition(line, inner.fields[0])?,
                target: parse_target(line, inner.fields[1])?,
            });
            i += 1;
        } else {
            let Some(target) = groups.fields.get(i + 1) else {
                return Err(ParseError::MalformedLine {
                    line,
                    reason: format!("jump condition `{group}` has no target"),
                });
            };
            rules.push(DraftJump {
                condition: parse_condition(line, group)?,
                target: parse_target(line, target)?,
            });
            i += 2;
        }
    }
    Ok(rules)
}

fn parse_line(line: usize, raw: &str) -> Result<ParsedLine, ParseError> {
    let caps = STEP_LINE.captures(raw).ok_or_else(|| ParseError::MalformedLine {
        line,
        reason: "missing `STEP <label>:` prefix".to_string(),
    })?;
    let label: StepLabel = caps[1].parse().map_err(|e: super::LabelError| {
        ParseError::MalformedLine {
            line,
            reason: e.to_string(),
        }
    })?;
    let body = caps.get(2).map_or("", |m| m.as_str());
    let groups = scan_groups(body, &[]).map_err(|_| ParseError::UnbalancedBrackets { line })?;
    if !groups.stray.is_empty() {
        return Err(ParseError::MalformedLine {
            line,
            reason: format!("text outside bracket fields: `{}`", groups.stray),
        });
    }
    let found = groups.fields.len();
    if !(2..=3).contains(&found) {
        return Err(ParseError::FieldCountError { line, found });
    }
    let name = parse_text(line, groups.fields[0], "step name")?;
    let description = parse_text(line, groups.fields[1], "step description")?;
    let jumps = match groups.fields.get(2) {
        Some(field) => parse_jump_field(line, field)?,
        None => Vec::new(),
    };
    Ok(ParsedLine {
        line,
        label: label.clone(),
        draft: StepDraft {
            label,
            name,
            description,
            jumps,
            children: Vec::new(),
        },
    })
}

fn parse_lines(text: &str) -> Result<Vec<ParsedLine>, ParseError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| parse_line(i + 1, l.trim()))
        .collect()
}

fn find_draft_mut<'a>(forest: &'a mut [StepDraft], label: &StepLabel) -> Option<&'a mut StepDraft> {
    for draft in forest {
        if &draft.label == label {
            return Some(draft);
        }
        if label.is_within(&draft.label) {
            return find_draft_mut(&mut draft.children, label);
        }
    }
    None
}

/// Attaches each line under the step whose label is its prefix. Lines at
/// `root_depth + 1` form the forest roots.
fn build_forest(lines: Vec<ParsedLine>, root_depth: usize) -> Result<Vec<StepDraft>, ParseError> {
    if lines.is_empty() {
        return Err(ParseError::Empty);
    }
    let mut seen = HashSet::new();
    let mut forest: Vec<StepDraft> = Vec::new();
    for parsed in lines {
        if !seen.insert(parsed.label.clone()) {
            return Err(ParseError::DuplicateLabel {
                line: parsed.line,
                label: parsed.label,
            });
        }
        if parsed.label.depth() == root_depth + 1 {
            forest.push(parsed.draft);
            continue;
        }
        let parent = parsed.label.parent().expect("depth > 1 has a parent");
        match find_draft_mut(&mut forest, &parent) {
            Some(node) => node.children.push(parsed.draft),
            None => {
                return Err(ParseError::OrphanChild {
                    line: parsed.line,
                    label: parsed.label,
                })
            }
        }
    }
    Ok(forest)
}

/// Parses SOP text into a workflow. Labels are kept as written; jump targets
/// are bound to step uids after the whole text is read, and targets that name
/// no step stay label-addressed for validation to report.
pub fn parse_workflow(text: &str) -> Result<Workflow, ParseError> {
    let forest = build_forest(parse_lines(text)?, 0)?;
    let mut workflow = Workflow::new("");
    let steps = forest.iter().map(|d| workflow.materialize(d)).collect();
    *workflow.steps_mut() = steps;
    workflow.resolve_label_targets();
    Ok(workflow)
}

/// Parses an extension reply for the step labelled `target`: every line must
/// sit strictly inside `target`'s subtree.
pub fn parse_extension(text: &str, target: &StepLabel) -> Result<Vec<StepDraft>, ParseError> {
    let lines = parse_lines(text)?;
    if let Some(outside) = lines
        .iter()
        .find(|l| l.label.depth() <= target.depth() || !l.label.is_within(target))
    {
        return Err(ParseError::OutsideTarget {
            line: outside.line,
            label: outside.label.clone(),
            target: target.clone(),
        });
    }
    build_forest(lines, target.depth())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workflow::JumpTarget;

    const PLANNING_EXAMPLE: &str = "STEP 1: [Brainstorming][Choose a topic or prompt, and generate ideas and organize them into an outline][]\n\
STEP 2: [Research][Gather information, take notes and organize them into the outline][[[lack of ideas][Jump to STEP 1]]]";

    #[test]
    fn parses_planning_prompt_example() {
        let w = parse_workflow(PLANNING_EXAMPLE).unwrap();
        assert_eq!(w.steps().len(), 2);
        let step2 = &w.steps()[1];
        assert_eq!(step2.name().as_str(), "Research");
        assert_eq!(step2.jumps().len(), 1);
        assert_eq!(step2.jumps()[0].condition.as_str(), "lack of ideas");
        assert_eq!(step2.jumps()[0].target, JumpTarget::Step(w.steps()[0].uid()));
    }

    #[test]
    fn minimal_step() {
        let w = parse_workflow("STEP 1: [A][B][]").unwrap();
        assert_eq!(w.steps().len(), 1);
        assert!(w.steps()[0].jumps().is_empty());
        assert!(w.steps()[0].children().is_empty());
    }

    #[test]
    fn accepts_jump_field_variants() {
        let variants = [
            "STEP 2: [B][b][[[if 'x'][Jump to STEP 1]]]",
            "STEP 2: [B][b][[[x][Jump to STEP 1]]]",
            "STEP 2: [B][b][[x][Jump to STEP 1]]",
            "STEP 2: [B][b] [[[If x][jump to step 1.]]]",
        ];
        for v in variants {
            let w = parse_workflow(&format!("STEP 1: [A][a][]\n{v}")).unwrap();
            let rule = &w.steps()[1].jumps()[0];
            assert_eq!(rule.condition.as_str(), "x", "{v}");
        }
        let multi = "STEP 1: [A][a][]\nSTEP 2: [B][b][[[if p][Jump to STEP 1]], [[if q][Jump to STEP 3]]]\nSTEP 3: [C][c][]";
        let w = parse_workflow(multi).unwrap();
        let conds: Vec<_> = w.steps()[1].jumps().iter().map(|j| j.condition.as_str()).collect();
        assert_eq!(conds, ["p", "q"]);
        let adjacent = "STEP 1: [A][a][[[p][Jump to STEP 1]][[q][Jump to STEP 1]]]";
        assert_eq!(parse_workflow(adjacent).unwrap().steps()[0].jumps().len(), 2);
    }

    #[test]
    fn two_fields_means_no_jumps() {
        let w = parse_workflow("STEP 1: [A][B]").unwrap();
        assert!(w.steps()[0].jumps().is_empty());
    }

    #[test]
    fn children_attach_by_label_prefix() {
        let w = parse_workflow("STEP 1: [A][a][]\nSTEP 1.1: [B][b][]\nSTEP 1.1.1: [C][c][]\nSTEP 2: [D][d][]")
            .unwrap();
        assert_eq!(w.steps().len(), 2);
        assert_eq!(w.steps()[0].children()[0].children()[0].name().as_str(), "C");
    }

    #[test]
    fn unresolved_targets_stay_labels() {
        let w = parse_workflow("STEP 1: [A][a][]\nSTEP 2: [B][b][[[x][Jump to STEP 9]]]").unwrap();
        assert_eq!(w.steps()[1].jumps()[0].target, JumpTarget::Label(StepLabel::top(9)));
    }

    #[test]
    fn error_cases() {
        assert_eq!(parse_workflow(""), Err(ParseError::Empty));
        assert_eq!(parse_workflow("\n  \n"), Err(ParseError::Empty));
        assert!(matches!(
            parse_workflow("Here is the plan"),
            Err(ParseError::MalformedLine { line: 1, .. })
        ));
        assert_eq!(
            parse_workflow("STEP 1: [A][B"),
            Err(ParseError::UnbalancedBrackets { line: 1 })
        );
        assert_eq!(
            parse_workflow("STEP 1: [A]]"),
            Err(ParseError::UnbalancedBrackets { line: 1 })
        );
        assert_eq!(
            parse_workflow("STEP 1: [A]"),
            Err(ParseError::FieldCountError { line: 1, found: 1 })
        );
        assert_eq!(
            parse_workflow("STEP 1: [A][B][][x]"),
            Err(ParseError::FieldCountError { line: 1, found: 4 })
        );
        assert!(matches!(
            parse_workflow("STEP 1: [A][a][]\nSTEP 2.1: [B][b][]"),
            Err(ParseError::OrphanChild { line: 2, .. })
        ));
        assert!(matches!(
            parse_workflow("STEP 1: [A][a][]\nSTEP 1: [B][b][]"),
            Err(ParseError::DuplicateLabel { line: 2, .. })
        ));
        assert!(matches!(
            parse_workflow("STEP 1: [A][a][] trailing"),
            Err(ParseError::MalformedLine { line: 1, .. })
        ));
        assert!(matches!(
            parse_workflow("STEP 1: [A [x]][a][]"),
            Err(ParseError::MalformedLine { line: 1, .. })
        ));
        assert!(matches!(
            parse_workflow("STEP 1: [A][a][[[x][Go to 2]]]"),
            Err(ParseError::MalformedLine { line: 1, .. })
        ));
    }

    #[test]
    fn extension_lines_must_sit_under_target() {
        let text = "STEP 3.1: [Write the title][write the title of the essay][]\n\
STEP 3.2: [Write the body][write the body of the essay][[[if lack of materials][Jump to STEP 2]]]\n\
STEP 3.3: [Write the conclusion][write the conclusion of the essay][]";
        let drafts = parse_extension(text, &StepLabel::top(3)).unwrap();
        assert_eq!(drafts.len(), 3);
        assert_eq!(drafts[1].jumps[0].target, StepLabel::top(2));

        let wrong = "STEP 4.1: [A][a][]";
        assert!(matches!(
            parse_extension(wrong, &StepLabel::top(3)),
            Err(ParseError::OutsideTarget { .. })
        ));
        assert!(matches!(
            parse_extension("STEP 3: [A][a][]", &StepLabel::top(3)),
            Err(ParseError::OutsideTarget { .. })
        ));
    }
}
