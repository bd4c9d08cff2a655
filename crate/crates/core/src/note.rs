//! Hierarchical step representation of an Assessment & Plan note.
//!
//! A note is a list of problems. Each problem contributes one step for its
//! description, one step per sentence, and a problem-level completeness step.
//! The note closes with a note-level completeness step and an end-of-note
//! step. Every step carries a [`ScoreLabel`].
//!
//! Free text goes through [`parse_note`] / [`render_note`]; the annotated
//! interchange form goes through [`to_annotated_json`] /
//! [`from_annotated_json`].

use std::fmt;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

/// Description used for the trailing follow-up section.
pub const FOLLOW_UP_DESCRIPTION: &str = "Follow-up instructions";

const BULLET_GLYPHS: &[char] = &['-', '•', '*', '◦', '▪', '‣'];

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum NoteError {
    #[error("note contains no parsable problem")]
    EmptyNote,
    #[error("malformed problem numbering: expected {expected}, found {found}")]
    MalformedNumbering { expected: u32, found: u32 },
    #[error("schema violation at {path}: {reason}")]
    SchemaViolation { path: String, reason: String },
    #[error("invalid note: {0}")]
    Invalid(String),
}

/// Correctness label attached to a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScoreLabel {
    #[serde(rename = "+")]
    Plus,
    #[serde(rename = "-")]
    Minus,
    /// Neutral label used in inference-time and vanilla-ORM token streams.
    #[serde(rename = "?")]
    Placeholder,
}

impl ScoreLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            ScoreLabel::Plus => "+",
            ScoreLabel::Minus => "-",
            ScoreLabel::Placeholder => "?",
        }
    }

    /// Accepts `+`, ASCII `-` and the unicode minus sign.
    pub fn parse_label(s: &str) -> Option<ScoreLabel> {
        match s.trim() {
            "+" => Some(ScoreLabel::Plus),
            "-" | "\u{2212}" => Some(ScoreLabel::Minus),
            _ => None,
        }
    }

    pub fn is_minus(self) -> bool {
        self == ScoreLabel::Minus
    }
}

impl fmt::Display for ScoreLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Structural role of a scored step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRole {
    Problem,
    Step,
    ProblemCompleteness,
    NoteCompleteness,
    EndOfNote,
}

impl StepRole {
    pub const ALL: [StepRole; 5] = [
        StepRole::Problem,
        StepRole::Step,
        StepRole::ProblemCompleteness,
        StepRole::NoteCompleteness,
        StepRole::EndOfNote,
    ];
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step {
    pub number: u32,
    pub content: String,
    pub label: ScoreLabel,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Problem {
    pub number: u32,
    pub description: String,
    pub label: ScoreLabel,
    pub steps: Vec<Step>,
    pub completeness_label: ScoreLabel,
}

impl Problem {
    pub fn new(number: u32, description: impl Into<String>, steps: Vec<String>) -> Self {
        Problem {
            number,
            description: description.into(),
            label: ScoreLabel::Plus,
            steps: steps
                .into_iter()
                .enumerate()
                .map(|(i, content)| Step {
                    number: i as u32 + 1,
                    content,
                    label: ScoreLabel::Plus,
                })
                .collect(),
            completeness_label: ScoreLabel::Plus,
        }
    }

    pub fn is_follow_up(&self) -> bool {
        self.description == FOLLOW_UP_DESCRIPTION
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuredNote {
    pub problems: Vec<Problem>,
    pub note_completeness_label: ScoreLabel,
    pub end_of_note_label: ScoreLabel,
}

impl StructuredNote {
    /// Builds an all-"+" note from `(description, sentences)` pairs.
    pub fn from_parts<I, D>(parts: I) -> Self
    where
        I: IntoIterator<Item = (D, Vec<String>)>,
        D: Into<String>,
    {
        let problems = parts
            .into_iter()
            .enumerate()
            .map(|(i, (desc, steps))| Problem::new(i as u32 + 1, desc, steps))
            .collect();
        StructuredNote {
            problems,
            note_completeness_label: ScoreLabel::Plus,
            end_of_note_label: ScoreLabel::Plus,
        }
    }

    pub fn step_count(&self) -> usize {
        self.problems.iter().map(|p| p.steps.len()).sum()
    }

    /// Number of scored positions: descriptions, sentences, problem
    /// completeness steps, note completeness and end-of-note.
    pub fn score_position_count(&self) -> usize {
        2 * self.problems.len() + self.step_count() + 2
    }

    /// Labels in serialization order.
    pub fn labels(&self) -> Vec<(StepRole, ScoreLabel)> {
        let mut out = Vec::with_capacity(self.score_position_count());
        for p in &self.problems {
            out.push((StepRole::Problem, p.label));
            out.extend(p.steps.iter().map(|s| (StepRole::Step, s.label)));
            out.push((StepRole::ProblemCompleteness, p.completeness_label));
        }
        out.push((StepRole::NoteCompleteness, self.note_completeness_label));
        out.push((StepRole::EndOfNote, self.end_of_note_label));
        out
    }

    /// True if any label other than end-of-note is "−".
    pub fn has_negative_step(&self) -> bool {
        self.note_completeness_label.is_minus()
            || self.problems.iter().any(|p| {
                p.label.is_minus()
                    || p.completeness_label.is_minus()
                    || p.steps.iter().any(|s| s.label.is_minus())
            })
    }

    /// Re-derives the end-of-note label from the other labels.
    pub fn sync_end_of_note(&mut self) {
        self.end_of_note_label = if self.has_negative_step() {
            ScoreLabel::Minus
        } else {
            ScoreLabel::Plus
        };
    }

    pub fn set_all_labels(&mut self, label: ScoreLabel) {
        for p in &mut self.problems {
            p.label = label;
            p.completeness_label = label;
            for s in &mut p.steps {
                s.label = label;
            }
        }
        self.note_completeness_label = label;
        self.end_of_note_label = label;
    }

    /// Restores consecutive numbering from 1 for problems and steps.
    pub fn renumber(&mut self) {
        for (i, p) in self.problems.iter_mut().enumerate() {
            p.number = i as u32 + 1;
            for (j, s) in p.steps.iter_mut().enumerate() {
                s.number = j as u32 + 1;
            }
        }
    }

    pub fn problem(&self, number: u32) -> Option<&Problem> {
        self.problems.iter().find(|p| p.number == number)
    }

    pub fn problem_mut(&mut self, number: u32) -> Option<&mut Problem> {
        self.problems.iter_mut().find(|p| p.number == number)
    }

    pub fn validate(&self) -> Result<(), NoteError> {
        if self.problems.is_empty() {
            return Err(NoteError::EmptyNote);
        }
        for (i, p) in self.problems.iter().enumerate() {
            let expected = i as u32 + 1;
            if p.number != expected {
                return Err(NoteError::MalformedNumbering {
                    expected,
                    found: p.number,
                });
            }
            if normalize_whitespace(&p.description).is_empty() {
                return Err(NoteError::Invalid(format!("problem {expected} has empty description")));
            }
            for (j, s) in p.steps.iter().enumerate() {
                if s.number != j as u32 + 1 {
                    return Err(NoteError::Invalid(format!(
                        "problem {expected}: step numbering expected {}, found {}",
                        j + 1,
                        s.number
                    )));
                }
                if normalize_whitespace(&s.content).is_empty() {
                    return Err(NoteError::Invalid(format!(
                        "problem {expected} step {} is empty",
                        s.number
                    )));
                }
                if s.content.trim_start().starts_with(BULLET_GLYPHS) || s.content.contains('•') {
                    return Err(NoteError::Invalid(format!(
                        "problem {expected} step {} contains a bullet glyph",
                        s.number
                    )));
                }
            }
        }
        let labeled: Vec<ScoreLabel> = self.labels().into_iter().map(|(_, l)| l).collect();
        if !labeled.contains(&ScoreLabel::Placeholder) {
            let any_minus = self.has_negative_step();
            if any_minus != self.end_of_note_label.is_minus() {
                return Err(NoteError::Invalid(
                    "end-of-note label must be \"-\" exactly when another label is \"-\"".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Collapses whitespace runs to a single space and trims.
pub fn normalize_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn strip_bullets(s: &str) -> String {
    let mut rest = s.trim();
    loop {
        let trimmed = rest.trim_start_matches(BULLET_GLYPHS).trim_start();
        if trimmed.len() == rest.len() {
            break;
        }
        rest = trimmed;
    }
    normalize_whitespace(&rest.replace('•', " "))
}

/// Rule-based sentence splitter with an abbreviation guard.
///
/// A sentence ends at `.`, `!` or `?` followed by whitespace and an
/// uppercase letter or digit, unless the word carrying the period is a
/// protected abbreviation.
#[derive(Debug, Clone)]
pub struct Segmenter {
    abbreviations: Vec<String>,
}

impl Default for Segmenter {
    fn default() -> Self {
        Segmenter::with_abbreviations(
            [
                "Dr.", "Mr.", "Mrs.", "Ms.", "Prof.", "St.", "mg.", "mcg.", "ml.", "q.d.", "b.i.d.",
                "t.i.d.", "q.i.d.", "p.o.", "p.r.n.", "vs.", "e.g.", "i.e.", "etc.", "approx.", "wks.",
                "yrs.", "No.",
            ]
            .iter()
            .map(|s| s.to_string()),
        )
    }
}

impl Segmenter {
    pub fn with_abbreviations(abbrevs: impl IntoIterator<Item = String>) -> Self {
        Segmenter {
            abbreviations: abbrevs.into_iter().map(|a| a.to_lowercase()).collect(),
        }
    }

    fn is_protected(&self, word: &str) -> bool {
        let word = word.trim_start_matches(['(', '"', '\'']).to_lowercase();
        self.abbreviations.iter().any(|a| *a == word)
    }

    /// Splits one line of text into sentences.
    pub fn split_sentences(&self, line: &str) -> Vec<String> {
        let chars: Vec<(usize, char)> = line.char_indices().collect();
        let mut out = Vec::new();
        let mut start = 0usize;
        for (k, &(byte_idx, c)) in chars.iter().enumerate() {
            if !matches!(c, '.' | '!' | '?') {
                continue;
            }
            let Some(&(_, next)) = chars.get(k + 1) else {
                continue;
            };
            if !next.is_whitespace() {
                continue;
            }
            let Some(&(_, following)) = chars[k + 1..].iter().find(|(_, ch)| !ch.is_whitespace()) else {
                continue;
            };
            if !(following.is_uppercase() || following.is_ascii_digit()) {
                continue;
            }
            let end = byte_idx + c.len_utf8();
            let word_start = line[..byte_idx]
                .rfind(char::is_whitespace)
                .map(|i| i + 1)
                .unwrap_or(0);
            if c == '.' && self.is_protected(&line[word_start..end]) {
                continue;
            }
            let sentence = normalize_whitespace(&line[start..end]);
            if !sentence.is_empty() {
                out.push(sentence);
            }
            start = end;
        }
        let tail = normalize_whitespace(&line[start..]);
        if !tail.is_empty() {
            out.push(tail);
        }
        out
    }

    /// Splits a problem body into steps, one per sentence.
    ///
    /// Bullet glyphs are dropped; a bare `Assessment:` / `Plan:` line is
    /// attached to the first sentence that follows it.
    pub fn segment(&self, block: &str) -> Vec<String> {
        let mut out = Vec::new();
        let mut pending: Option<String> = None;
        for raw in block.lines() {
            let mut line = strip_bullets(raw);
            if line.is_empty() {
                continue;
            }
            if let Some((marker, rest)) = split_marker(&line) {
                let rest = strip_bullets(rest);
                if rest.is_empty() {
                    pending = Some(match pending.take() {
                        Some(p) => format!("{p} {marker}"),
                        None => marker.to_string(),
                    });
                    continue;
                }
                line = format!("{marker} {rest}");
            }
            for sentence in self.split_sentences(&line) {
                let sentence = match pending.take() {
                    Some(p) => format!("{p} {sentence}"),
                    None => sentence,
                };
                out.push(sentence);
            }
        }
        if let Some(p) = pending {
            out.push(p);
        }
        out
    }
}

fn split_marker(line: &str) -> Option<(&'static str, &str)> {
    for marker in ["Assessment:", "Plan:"] {
        if line.len() >= marker.len()
            && line.is_char_boundary(marker.len())
            && line[..marker.len()].eq_ignore_ascii_case(marker)
        {
            return Some((marker, &line[marker.len()..]));
        }
    }
    None
}

/// Splits a problem body into sentence steps using the default abbreviation list.
pub fn segment_steps(block: &str) -> Vec<String> {
    Segmenter::default().segment(block)
}

fn heading_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\s*(\d+)\.\s+(.*\S)\s*$").unwrap())
}

fn follow_up_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)^\s*follow[- ]up instructions\s*:\s*(.*)$").unwrap())
}

fn ap_header_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)^\s*assessment\s+(and|&)\s+plan\s*:?\s*$").unwrap())
}

/// Parses free-form A&P text into a [`StructuredNote`] with every label "+".
pub fn parse_note(text: &str) -> Result<StructuredNote, NoteError> {
    parse_note_with(text, &Segmenter::default())
}

pub fn parse_note_with(text: &str, segmenter: &Segmenter) -> Result<StructuredNote, NoteError> {
    struct Draft {
        description: String,
        body: Vec<String>,
    }
    let mut drafts: Vec<Draft> = Vec::new();
    let mut next_number = 1u32;
    let mut heading_from_next_line = false;

    for line in text.lines() {
        if line.trim().is_empty() || ap_header_re().is_match(line) {
            continue;
        }
        if heading_from_next_line {
            heading_from_next_line = false;
            drafts.push(Draft {
                description: strip_bullets(line),
                body: Vec::new(),
            });
            continue;
        }
        if let Some(c) = heading_re().captures(line) {
            let found: u32 = c[1].parse().map_err(|_| NoteError::MalformedNumbering {
                expected: next_number,
                found: 0,
            })?;
            if found != next_number {
                return Err(NoteError::MalformedNumbering {
                    expected: next_number,
                    found,
                });
            }
            next_number += 1;
            let description = normalize_whitespace(&c[2]);
            // "1. ASSESSMENT AND PLAN:" followed by the problem title on the next line.
            if ap_header_re().is_match(&description) {
                heading_from_next_line = true;
                continue;
            }
            drafts.push(Draft {
                description,
                body: Vec::new(),
            });
            continue;
        }
        if let Some(c) = follow_up_re().captures(line) {
            let mut body = Vec::new();
            if !c[1].trim().is_empty() {
                body.push(c[1].to_string());
            }
            drafts.push(Draft {
                description: FOLLOW_UP_DESCRIPTION.to_string(),
                body,
            });
            continue;
        }
        // Text before the first problem heading is outside the problem list.
        if let Some(d) = drafts.last_mut() {
            d.body.push(line.to_string());
        }
    }
    if drafts.is_empty() {
        return Err(NoteError::EmptyNote);
    }
    let parts = drafts
        .into_iter()
        .map(|d| (d.description, segmenter.segment(&d.body.join("\n"))));
    Ok(StructuredNote::from_parts(parts))
}

/// Canonical free text for a note. Labels are not rendered.
pub fn render_note(note: &StructuredNote) -> String {
    let mut lines = Vec::new();
    let last = note.problems.len().saturating_sub(1);
    for (i, p) in note.problems.iter().enumerate() {
        if i == last && p.is_follow_up() {
            lines.push(format!("{FOLLOW_UP_DESCRIPTION}:"));
        } else {
            lines.push(format!("{}. {}", p.number, p.description));
        }
        lines.extend(p.steps.iter().map(|s| s.content.clone()));
    }
    lines.join("\n")
}

/// Exports the annotated interchange document.
pub fn to_annotated_json(note: &StructuredNote) -> Value {
    let problems: Vec<Value> = note
        .problems
        .iter()
        .map(|p| {
            let steps: Vec<Value> = p
                .steps
                .iter()
                .map(|s| {
                    let mut m = Map::new();
                    m.insert("Step".into(), Value::String(s.content.clone()));
                    m.insert("Step_no".into(), Value::String(s.number.to_string()));
                    m.insert("Step_score".into(), Value::String(s.label.as_str().into()));
                    Value::Object(m)
                })
                .collect();
            let mut m = Map::new();
            m.insert("Problem".into(), Value::String(p.description.clone()));
            m.insert("Problem_no".into(), Value::String(p.number.to_string()));
            m.insert("Problem_score".into(), Value::String(p.label.as_str().into()));
            m.insert("Steps".into(), Value::Array(steps));
            m.insert(
                "Problem_completeness_score".into(),
                Value::String(p.completeness_label.as_str().into()),
            );
            Value::Object(m)
        })
        .collect();
    let mut root = Map::new();
    root.insert("Problems".into(), Value::Array(problems));
    root.insert(
        "Note_completeness_score".into(),
        Value::String(note.note_completeness_label.as_str().into()),
    );
    root.insert(
        "End_of_note_score".into(),
        Value::String(note.end_of_note_label.as_str().into()),
    );
    Value::Object(root)
}

fn violation(path: impl Into<String>, reason: impl Into<String>) -> NoteError {
    NoteError::SchemaViolation {
        path: path.into(),
        reason: reason.into(),
    }
}

fn as_object<'a>(v: &'a Value, path: &str) -> Result<&'a Map<String, Value>, NoteError> {
    v.as_object().ok_or_else(|| violation(path, "expected an object"))
}

fn check_keys(obj: &Map<String, Value>, allowed: &[&str], path: &str) -> Result<(), NoteError> {
    match obj.keys().find(|k| !allowed.contains(&k.as_str())) {
        Some(k) => Err(violation(format!("{path}.{k}"), "unknown field")),
        None => Ok(()),
    }
}

fn get_str<'a>(obj: &'a Map<String, Value>, key: &str, path: &str) -> Result<&'a str, NoteError> {
    match obj.get(key) {
        None => Err(violation(format!("{path}.{key}"), "missing field")),
        Some(v) => v
            .as_str()
            .ok_or_else(|| violation(format!("{path}.{key}"), "expected a string")),
    }
}

fn get_label(obj: &Map<String, Value>, key: &str, path: &str) -> Result<ScoreLabel, NoteError> {
    let raw = get_str(obj, key, path)?;
    ScoreLabel::parse_label(raw)
        .ok_or_else(|| violation(format!("{path}.{key}"), format!("expected \"+\" or \"-\", found {raw:?}")))
}

fn get_number(obj: &Map<String, Value>, key: &str, path: &str, expected: u32) -> Result<u32, NoteError> {
    let raw = get_str(obj, key, path)?;
    let n: u32 = raw
        .trim()
        .parse()
        .map_err(|_| violation(format!("{path}.{key}"), format!("expected a numeric string, found {raw:?}")))?;
    if n != expected {
        return Err(violation(
            format!("{path}.{key}"),
            format!("expected \"{expected}\", found \"{n}\""),
        ));
    }
    Ok(n)
}

/// Imports an annotated interchange document.
///
/// `End_of_note_score` is optional on input; when absent it is derived from
/// the other labels.
pub fn from_annotated_json(doc: &Value) -> Result<StructuredNote, NoteError> {
    let root = as_object(doc, "$")?;
    check_keys(
        root,
        &["Problems", "Note_completeness_score", "End_of_note_score"],
        "$",
    )?;
    let problems_v = root
        .get("Problems")
        .ok_or_else(|| violation("$.Problems", "missing field"))?
        .as_array()
        .ok_or_else(|| violation("$.Problems", "expected an array"))?;
    if problems_v.is_empty() {
        return Err(violation("$.Problems", "at least one problem is required"));
    }
    let mut problems = Vec::with_capacity(problems_v.len());
    for (i, pv) in problems_v.iter().enumerate() {
        let path = format!("$.Problems[{i}]");
        let p = as_object(pv, &path)?;
        check_keys(
            p,
            &["Problem", "Problem_no", "Problem_score", "Steps", "Problem_completeness_score"],
            &path,
        )?;
        let number = get_number(p, "Problem_no", &path, i as u32 + 1)?;
        let description = get_str(p, "Problem", &path)?.to_string();
        let label = get_label(p, "Problem_score", &path)?;
        let completeness_label = get_label(p, "Problem_completeness_score", &path)?;
        let steps_v = p
            .get("Steps")
            .ok_or_else(|| violation(format!("{path}.Steps"), "missing field"))?
            .as_array()
            .ok_or_else(|| violation(format!("{path}.Steps"), "expected an array"))?;
        let mut steps = Vec::with_capacity(steps_v.len());
        for (j, sv) in steps_v.iter().enumerate() {
            let spath = format!("{path}.Steps[{j}]");
            let s = as_object(sv, &spath)?;
            check_keys(s, &["Step", "Step_no", "Step_score"], &spath)?;
            steps.push(Step {
                number: get_number(s, "Step_no", &spath, j as u32 + 1)?,
                content: get_str(s, "Step", &spath)?.to_string(),
                label: get_label(s, "Step_score", &spath)?,
            });
        }
        problems.push(Problem {
            number,
            description,
            label,
            steps,
            completeness_label,
        });
    }
    let mut note = StructuredNote {
        problems,
        note_completeness_label: get_label(root, "Note_completeness_score", "$")?,
        end_of_note_label: ScoreLabel::Plus,
    };
    note.sync_end_of_note();
    if root.contains_key("End_of_note_score") {
        let given = get_label(root, "End_of_note_score", "$")?;
        if given != note.end_of_note_label {
            return Err(violation(
                "$.End_of_note_score",
                "must be \"-\" exactly when another score is \"-\"",
            ));
        }
    }
    note.validate().map_err(|e| match e {
        NoteError::SchemaViolation { .. } => e,
        other => violation("$", other.to_string()),
    })?;
    Ok(note)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MIGRAINE: &str = "ASSESSMENT AND PLAN:\n\
1. Migraine Headaches\n\
Assessment: The patient reports recurring migraines for three months, worse with bright light.\n\
Plan:\n\
- Continue Sumatriptan as needed.\n\
- Prescribe Propranolol 20mg twice daily.\n\
- Start a headache diary to look for triggers.\n\
Follow-up instructions:\n\
- Return in four weeks with the headache diary.";

    #[test]
    fn parses_migraine_example() {
        let note = parse_note(MIGRAINE).unwrap();
        assert_eq!(note.problems.len(), 2);
        let p1 = &note.problems[0];
        assert_eq!(p1.description, "Migraine Headaches");
        assert_eq!(p1.steps.len(), 4);
        assert!(p1.steps[0].content.starts_with("Assessment: The patient"));
        assert_eq!(p1.steps[1].content, "Plan: Continue Sumatriptan as needed.");
        assert_eq!(p1.steps[2].content, "Prescribe Propranolol 20mg twice daily.");
        let p2 = &note.problems[1];
        assert!(p2.is_follow_up());
        assert_eq!(p2.number, 2);
        assert_eq!(p2.steps.len(), 1);
        assert!(note.labels().iter().all(|(_, l)| *l == ScoreLabel::Plus));
        note.validate().unwrap();
    }

    #[test]
    fn empty_text_is_an_error() {
        assert_eq!(parse_note(""), Err(NoteError::EmptyNote));
        assert_eq!(parse_note("just some prose."), Err(NoteError::EmptyNote));
    }

    #[test]
    fn numbering_must_be_consecutive() {
        let err = parse_note("1. Asthma\nStep one.\n3. Gout\nStep two.").unwrap_err();
        assert_eq!(err, NoteError::MalformedNumbering { expected: 2, found: 3 });
        let err = parse_note("1. Asthma\n1. Gout").unwrap_err();
        assert_eq!(err, NoteError::MalformedNumbering { expected: 2, found: 1 });
    }

    #[test]
    fn segments_assessment_prefix() {
        assert_eq!(
            segment_steps("Assessment: The patient has asthma. Exam shows wheezing."),
            vec!["Assessment: The patient has asthma.", "Exam shows wheezing."]
        );
        assert_eq!(segment_steps("One sentence only."), vec!["One sentence only."]);
    }

    #[test]
    fn abbreviation_does_not_split() {
        assert_eq!(
            segment_steps("Follow up with Dr. Smith in 3 wks."),
            vec!["Follow up with Dr. Smith in 3 wks."]
        );
        assert_eq!(segment_steps("Take 5 mg. Daily dosing vs. Weekly.").len(), 1);
    }

    #[test]
    fn splits_before_digit_and_keeps_decimals() {
        assert_eq!(segment_steps("Dose is 2.5 units. 3 refills given."), vec!["Dose is 2.5 units.", "3 refills given."]);
    }

    #[test]
    fn render_minimal_note() {
        let note = StructuredNote::from_parts([("Gout", vec!["Start colchicine.".to_string()])]);
        assert_eq!(render_note(&note), "1. Gout\nStart colchicine.");
    }

    #[test]
    fn labels_are_not_rendered() {
        let a = StructuredNote::from_parts([("Gout", vec!["Start colchicine.".to_string()])]);
        let mut b = a.clone();
        b.problems[0].steps[0].label = ScoreLabel::Minus;
        b.sync_end_of_note();
        assert_eq!(render_note(&a), render_note(&b));
    }

    #[test]
    fn json_field_names_match_schema() {
        let note = StructuredNote::from_parts([("Gout", vec!["Start colchicine.".to_string()])]);
        let doc = to_annotated_json(&note);
        let root: Vec<&str> = doc.as_object().unwrap().keys().map(String::as_str).collect();
        assert_eq!(root, ["Problems", "Note_completeness_score", "End_of_note_score"]);
        let p = &doc["Problems"][0];
        let keys: Vec<&str> = p.as_object().unwrap().keys().map(String::as_str).collect();
        assert_eq!(
            keys,
            ["Problem", "Problem_no", "Problem_score", "Steps", "Problem_completeness_score"]
        );
        let s: Vec<&str> = p["Steps"][0].as_object().unwrap().keys().map(String::as_str).collect();
        assert_eq!(s, ["Step", "Step_no", "Step_score"]);
        assert_eq!(p["Steps"][0]["Step_score"], "+");
        assert_eq!(p["Problem_no"], "1");
        assert_eq!(from_annotated_json(&doc).unwrap(), note);
    }

    #[test]
    fn schema_violation_reports_path() {
        let note = StructuredNote::from_parts([("Gout", vec!["Start colchicine.".to_string()])]);
        let mut doc = to_annotated_json(&note);
        doc["Problems"][0]["Steps"][0]["Step_score"] = Value::String("maybe".into());
        match from_annotated_json(&doc) {
            Err(NoteError::SchemaViolation { path, .. }) => {
                assert_eq!(path, "$.Problems[0].Steps[0].Step_score")
            }
            other => panic!("unexpected {other:?}"),
        }
        let mut doc = to_annotated_json(&note);
        doc["Problems"][0]["Extra"] = Value::Null;
        assert!(matches!(
            from_annotated_json(&doc),
            Err(NoteError::SchemaViolation { path, .. }) if path == "$.Problems[0].Extra"
        ));
    }

    #[test]
    fn end_of_note_is_derived_and_checked() {
        let note = StructuredNote::from_parts([("Gout", vec!["Start colchicine.".to_string()])]);
        let mut doc = to_annotated_json(&note);
        doc["Problems"][0]["Problem_score"] = Value::String("\u{2212}".into());
        doc.as_object_mut().unwrap().remove("End_of_note_score");
        let parsed = from_annotated_json(&doc).unwrap();
        assert_eq!(parsed.end_of_note_label, ScoreLabel::Minus);
        doc["End_of_note_score"] = Value::String("+".into());
        assert!(matches!(
            from_annotated_json(&doc),
            Err(NoteError::SchemaViolation { path, .. }) if path == "$.End_of_note_score"
        ));
    }

    #[test]
    fn numbered_ap_header_promotes_next_line() {
        let note = parse_note("1. ASSESSMENT AND PLAN:\nHepatitis C\nAssessment: HCV Ab was positive.\n2. Fatigue\nRest.").unwrap();
        assert_eq!(note.problems[0].description, "Hepatitis C");
        assert_eq!(note.problems[1].description, "Fatigue");
    }
}
