//! Templated mini-clinic used for desk-scale runs.
//!
//! Each case is a short musculoskeletal visit with two or three complaints
//! and a follow-up. The gold note is derived from the dialogue by template
//! and the error pools come from [`LocalCorruptor`], a rule-based stand-in
//! for a remote generator.

use std::collections::BTreeSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use super::generator::{
    annotate_quality, build_error_pool, build_paraphrase_pool, GeneratorClient, GeneratorError, GeneratorRequest,
    GeneratorTask,
};
use super::{case_seed, Case, CorruptionError, ErrorType, QualityLevel};
use crate::note::{StructuredNote, FOLLOW_UP_DESCRIPTION};

pub const SIDES: [&str; 2] = ["left", "right"];
pub const SITES: [&str; 6] = ["knee", "shoulder", "ankle", "wrist", "hip", "elbow"];
pub const SYMPTOMS: [&str; 4] = ["pain", "swelling", "stiffness", "weakness"];
pub const UNITS: [&str; 3] = ["days", "weeks", "months"];
pub const MEDS: [&str; 5] = ["ibuprofen", "naproxen", "acetaminophen", "meloxicam", "celecoxib"];
pub const DOSES: [&str; 5] = ["200", "400", "500", "600", "800"];
pub const TESTS: [&str; 3] = ["x-ray", "MRI", "ultrasound"];
pub const DENIABLE: [&str; 6] = ["fever", "cough", "rash", "nausea", "headache", "dizziness"];
pub const MAX_COUNT: u32 = 12;

const TEMPLATE_WORDS: &[&str] = &[
    // dialogue
    "doctor", "patient", "what", "brings", "you", "in", "today", "my", "has", "for", "take", "mg", "daily", "and",
    "get", "an", "any", "no", "come", "back",
    // gold note
    "Assessment", "reports", "Plan", "start", "Order", "of", "the", "Return", "to", "clinic", "Follow-up",
    "instructions",
    // corruptions
    "also", "chronic", "chest", "Refer", "neurology", "some", "issues", "issue", "is", "not", "feeling", "well",
    "medicine", "continue", "as", "needed", "tests", "Check", "things", "later", "Follow", "up", "problem",
    // paraphrases
    "reported", "begin", "once", "Obtain", "Get",
];

/// Punctuation emitted as separate glue tokens.
pub const GLUE: [&str; 3] = [".", ":", "?"];

/// Every word the toy generator and corruptor can emit.
pub fn toy_lexicon() -> Vec<String> {
    let mut words: BTreeSet<String> = BTreeSet::new();
    let lists: [&[&str]; 9] = [&SIDES, &SITES, &SYMPTOMS, &UNITS, &MEDS, &DOSES, &TESTS, &DENIABLE, TEMPLATE_WORDS];
    for list in lists {
        words.extend(list.iter().map(|w| w.to_string()));
    }
    words.extend((1..=MAX_COUNT).map(|n| n.to_string()));
    words.extend(GLUE.iter().map(|w| w.to_string()));
    words.into_iter().collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToyComplaint {
    pub side: &'static str,
    pub site: &'static str,
    pub symptom: &'static str,
    pub duration: u32,
    pub unit: &'static str,
    pub med: &'static str,
    pub dose: &'static str,
    pub test: &'static str,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToyVisit {
    pub complaints: Vec<ToyComplaint>,
    pub denied: Vec<&'static str>,
    pub follow_up_weeks: u32,
}

impl ToyVisit {
    pub fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let k = rng.random_range(2..=3);
        let sites: Vec<&str> = SITES.choose_multiple(rng, k).copied().collect();
        let meds: Vec<&str> = MEDS.choose_multiple(rng, k).copied().collect();
        let complaints = (0..k)
            .map(|i| ToyComplaint {
                side: *SIDES.choose(rng).expect("non-empty"),
                site: sites[i],
                symptom: *SYMPTOMS.choose(rng).expect("non-empty"),
                duration: rng.random_range(1..=MAX_COUNT),
                unit: *UNITS.choose(rng).expect("non-empty"),
                med: meds[i],
                dose: *DOSES.choose(rng).expect("non-empty"),
                test: *TESTS.choose(rng).expect("non-empty"),
            })
            .collect();
        let denied = DENIABLE.choose_multiple(rng, 2).copied().collect();
        ToyVisit {
            complaints,
            denied,
            follow_up_weeks: rng.random_range(1..=8),
        }
    }

    pub fn dialogue(&self) -> String {
        let mut lines = vec!["doctor: what brings you in today?".to_string()];
        for c in &self.complaints {
            lines.push(format!(
                "patient: my {} {} has {} for {} {}.",
                c.side, c.site, c.symptom, c.duration, c.unit
            ));
            lines.push(format!("doctor: take {} {} mg daily and get an {}.", c.med, c.dose, c.test));
        }
        for d in &self.denied {
            lines.push(format!("doctor: any {d}? patient: no."));
        }
        lines.push(format!("doctor: come back in {} weeks.", self.follow_up_weeks));
        lines.join("\n")
    }

    pub fn gold_note(&self) -> StructuredNote {
        let mut parts: Vec<(String, Vec<String>)> = self
            .complaints
            .iter()
            .map(|c| {
                (
                    format!("{} {} {}", c.side, c.site, c.symptom),
                    vec![
                        format!(
                            "Assessment: patient reports {} {} {} for {} {}.",
                            c.side, c.site, c.symptom, c.duration, c.unit
                        ),
                        format!("Plan: start {} {} mg daily.", c.med, c.dose),
                        format!("Order {} of the {} {}.", c.test, c.side, c.site),
                    ],
                )
            })
            .collect();
        parts.push((
            FOLLOW_UP_DESCRIPTION.to_string(),
            vec![format!("Return to clinic in {} weeks.", self.follow_up_weeks)],
        ));
        StructuredNote::from_parts(parts)
    }
}

/// One toy case with its error pools, paraphrase pool and quality rating.
pub fn generate_toy_case(seed: u64) -> Case {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let visit = ToyVisit::sample(&mut rng);
    local_pools(&format!("toy-{seed:016x}"), &visit.dialogue(), &visit.gold_note(), seed)
        .expect("toy notes always have targets")
}

/// `n` toy cases whose seeds are derived from `seed` and the case index.
pub fn generate_toy_cases(seed: u64, n: usize) -> Vec<Case> {
    (0..n).map(|i| generate_toy_case(case_seed(seed, &i.to_string()))).collect()
}

/// Rule-based generator over the toy lexicon.
///
/// It answers error, paraphrase and quality prompts by rewriting the note's
/// sentences with side swaps, substituted drugs, doses, spans and tests,
/// entities absent from the dialogue, and vague rewrites.
#[derive(Debug, Clone)]
pub struct LocalCorruptor {
    pub seed: u64,
    pub max_errors_per_type: usize,
    pub max_paraphrases: usize,
}

impl LocalCorruptor {
    pub fn new(seed: u64) -> Self {
        LocalCorruptor {
            seed,
            max_errors_per_type: 16,
            max_paraphrases: 20,
        }
    }
}

fn words(text: &str) -> Vec<&str> {
    text.split_whitespace()
        .map(|w| w.trim_end_matches(|c| GLUE.iter().any(|g| g.starts_with(c))))
        .collect()
}

fn find<'a>(list: &[&'a str], text: &str) -> Option<&'a str> {
    let ws = words(text);
    list.iter().copied().find(|x| ws.contains(x))
}

/// Replaces the whole-word occurrence of `from` with `to`.
fn swap_word(text: &str, from: &str, to: &str) -> String {
    text.split(' ')
        .map(|chunk| {
            let core = chunk.trim_end_matches(|c| GLUE.iter().any(|g| g.starts_with(c)));
            if core == from {
                format!("{to}{}", &chunk[core.len()..])
            } else {
                chunk.to_string()
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn other<'a, R: Rng + ?Sized>(list: &[&'a str], exclude: &[&str], rng: &mut R) -> Option<&'a str> {
    let pool: Vec<&str> = list.iter().copied().filter(|x| !exclude.contains(x)).collect();
    pool.choose(rng).copied()
}

fn other_count<R: Rng + ?Sized>(n: u32, rng: &mut R) -> u32 {
    let choices: Vec<u32> = (1..=MAX_COUNT).filter(|&k| k != n).collect();
    *choices.choose(rng).expect("non-empty")
}

struct Target<'n> {
    problem_no: u32,
    step_no: Option<u32>,
    text: &'n str,
    follow_up: bool,
}

fn targets(note: &StructuredNote) -> Vec<Target<'_>> {
    let mut out = Vec::new();
    for p in &note.problems {
        let follow_up = p.is_follow_up();
        if !follow_up {
            out.push(Target {
                problem_no: p.number,
                step_no: None,
                text: &p.description,
                follow_up,
            });
        }
        for s in &p.steps {
            out.push(Target {
                problem_no: p.number,
                step_no: Some(s.number),
                text: &s.content,
                follow_up,
            });
        }
    }
    out
}

fn number_before(text: &str, unit_words: &[&str]) -> Option<(u32, &'static str)> {
    let ws = words(text);
    ws.windows(2).find_map(|w| {
        let n: u32 = w[0].parse().ok()?;
        let unit = unit_words.iter().find(|u| **u == w[1])?;
        Some((n, UNITS.iter().copied().find(|x| x == unit).unwrap_or("weeks")))
    })
}

struct Mentioned {
    sites: Vec<&'static str>,
    meds: Vec<&'static str>,
}

fn mentioned(dialogue: &str) -> Mentioned {
    let ws = words(dialogue);
    let pick = |list: &[&'static str]| list.iter().copied().filter(|x| ws.contains(x)).collect::<Vec<_>>();
    Mentioned {
        sites: pick(&SITES),
        meds: pick(&MEDS),
    }
}

fn record(t: &Target<'_>, error_type: ErrorType, detail: String, new: String) -> Value {
    json!({
        "Error_type": error_type.name(),
        "Problem_no": t.problem_no.to_string(),
        "Step_no": t.step_no.map(|s| s.to_string()),
        "Error_level": if t.step_no.is_some() { "Step" } else { "Problem" },
        "Detailed_error": detail,
        "New_content": new,
        "Original_content": t.text,
    })
}

impl LocalCorruptor {
    fn factual<R: Rng + ?Sized>(&self, note: &StructuredNote, dialogue: &str, rng: &mut R) -> Vec<Value> {
        let seen = mentioned(dialogue);
        let mut out = Vec::new();
        for t in targets(note) {
            let ty = ErrorType::FactualInaccuracy;
            if let Some(side) = find(&SIDES, t.text) {
                let to = other(&SIDES, &[side], rng).expect("two sides");
                out.push(record(&t, ty, format!("changed {side} to {to}"), swap_word(t.text, side, to)));
            }
            if t.step_no.is_none() {
                if let Some(sym) = find(&SYMPTOMS, t.text) {
                    let to = other(&SYMPTOMS, &[sym], rng).expect("several symptoms");
                    out.push(record(&t, ty, format!("changed {sym} to {to}"), swap_word(t.text, sym, to)));
                }
                continue;
            }
            if let Some(med) = find(&MEDS, t.text) {
                if let Some(to) = other(&MEDS, &seen.meds, rng).or_else(|| other(&MEDS, &[med], rng)) {
                    out.push(record(&t, ty, format!("changed {med} to {to}"), swap_word(t.text, med, to)));
                }
            }
            if let Some(dose) = find(&DOSES, t.text) {
                let to = other(&DOSES, &[dose], rng).expect("several doses");
                out.push(record(&t, ty, format!("changed dose {dose} to {to}"), swap_word(t.text, dose, to)));
            }
            if let Some(test) = find(&TESTS, t.text) {
                let to = other(&TESTS, &[test], rng).expect("several tests");
                out.push(record(&t, ty, format!("changed {test} to {to}"), swap_word(t.text, test, to)));
            }
            if let Some((n, unit)) = number_before(t.text, &UNITS) {
                let to = other_count(n, rng);
                let new = t.text.replacen(&format!("{n} {unit}"), &format!("{to} {unit}"), 1);
                out.push(record(&t, ty, format!("changed {n} {unit} to {to} {unit}"), new));
                if !t.follow_up {
                    let u2 = other(&UNITS, &[unit], rng).expect("several units");
                    out.push(record(&t, ty, format!("changed {unit} to {u2}"), swap_word(t.text, unit, u2)));
                }
            }
        }
        out
    }

    fn hallucination<R: Rng + ?Sized>(&self, note: &StructuredNote, dialogue: &str, rng: &mut R) -> Vec<Value> {
        let seen = mentioned(dialogue);
        let ty = ErrorType::Hallucination;
        let mut out = Vec::new();
        for t in targets(note) {
            let x = *DENIABLE.choose(rng).expect("non-empty");
            let absent_site = other(&SITES, &seen.sites, rng);
            let absent_med = other(&MEDS, &seen.meds, rng).unwrap_or("celecoxib");
            let side = find(&SIDES, t.text).unwrap_or("left");
            let detail = |what: &str| format!("added {what} that was not discussed");
            match t.step_no {
                None => {
                    if let (Some(site), Some(sym)) = (absent_site, find(&SYMPTOMS, t.text)) {
                        out.push(record(&t, ty, detail(site), format!("{side} {site} {sym}")));
                    }
                    out.push(record(&t, ty, detail(x), format!("chronic {x}")));
                }
                Some(_) if t.follow_up => {
                    out.push(record(&t, ty, detail("referral"), format!("Refer to neurology for {x}.")));
                }
                Some(_) => {
                    let new = if t.text.starts_with("Assessment:") {
                        let (n, unit) = number_before(t.text, &UNITS).unwrap_or((2, "weeks"));
                        format!("Assessment: patient also reports {x} for {n} {unit}.")
                    } else if t.text.starts_with("Plan:") {
                        let dose = find(&DOSES, t.text).unwrap_or("200");
                        format!("Plan: start {absent_med} {dose} mg daily for {x}.")
                    } else {
                        let test = find(&TESTS, t.text).unwrap_or("x-ray");
                        format!("Order {test} of the chest for {x}.")
                    };
                    out.push(record(&t, ty, detail(x), new));
                    if let Some(site) = absent_site {
                        if t.text.starts_with("Order") {
                            let test = find(&TESTS, t.text).unwrap_or("x-ray");
                            out.push(record(&t, ty, detail(site), format!("Order {test} of the {side} {site}.")));
                        }
                    }
                }
            }
        }
        out
    }

    fn unhelpful(&self, note: &StructuredNote) -> Vec<Value> {
        let ty = ErrorType::Unhelpfulness;
        let mut out = Vec::new();
        for t in targets(note) {
            let site = find(&SITES, t.text).unwrap_or("joint");
            let rewrites: Vec<String> = match t.step_no {
                None if site == "joint" => vec!["some issue".into()],
                None => vec![format!("{site} problem"), "some issue".into()],
                Some(_) if t.follow_up => vec!["Return later.".into(), "Follow up as needed.".into()],
                Some(_) if t.text.starts_with("Assessment:") => vec![
                    if site == "joint" {
                        "Assessment: patient has some issues.".into()
                    } else {
                        format!("Assessment: patient has some {site} issues.")
                    },
                    "Assessment: patient is not feeling well.".into(),
                ],
                Some(_) if t.text.starts_with("Plan:") => {
                    vec!["Plan: take some medicine.".into(), "Plan: continue as needed.".into()]
                }
                Some(_) => vec!["Order some tests.".into(), "Check things as needed.".into()],
            };
            for r in rewrites {
                out.push(record(&t, ty, "removed the specific details".into(), r));
            }
        }
        out
    }

    fn paraphrases(&self, note: &StructuredNote) -> Vec<Value> {
        let mut out = Vec::new();
        for t in targets(note) {
            let Some(step_no) = t.step_no else { continue };
            let side = find(&SIDES, t.text);
            let site = find(&SITES, t.text);
            let variants: Vec<String> = if t.follow_up {
                match number_before(t.text, &["weeks"]) {
                    Some((f, _)) => vec![format!("Follow up in clinic in {f} weeks."), format!("Return in {f} weeks.")],
                    None => vec![],
                }
            } else if t.text.starts_with("Assessment:") {
                match (side, site, find(&SYMPTOMS, t.text), number_before(t.text, &UNITS)) {
                    (Some(a), Some(b), Some(c), Some((n, u))) => vec![
                        format!("Assessment: {a} {b} {c} reported for {n} {u}."),
                        format!("Assessment: {c} of the {a} {b} for {n} {u}."),
                    ],
                    _ => vec![],
                }
            } else if t.text.starts_with("Plan:") {
                match (find(&MEDS, t.text), find(&DOSES, t.text)) {
                    (Some(m), Some(d)) => vec![
                        format!("Plan: begin {m} {d} mg daily."),
                        format!("Plan: {m} {d} mg once daily."),
                    ],
                    _ => vec![],
                }
            } else {
                match (find(&TESTS, t.text), side, site) {
                    (Some(x), Some(a), Some(b)) => {
                        vec![format!("Obtain {x} of the {a} {b}."), format!("Get {x} of the {a} {b}.")]
                    }
                    _ => vec![],
                }
            };
            for v in variants {
                out.push(json!({
                    "Problem_no": t.problem_no.to_string(),
                    "Step_no": step_no.to_string(),
                    "New_content": v,
                    "Original_content": t.text,
                }));
            }
        }
        out
    }

    fn quality(&self, dialogue: &str) -> Value {
        let u = (case_seed(self.seed, dialogue) >> 11) as f64 / (1u64 << 53) as f64;
        let level = if u < 0.534 {
            QualityLevel::High
        } else if u < 0.921 {
            QualityLevel::Medium
        } else {
            QualityLevel::Low
        };
        json!({
            "Conversation_quality": { "Rational": "templated toy visit", "Quality": level, "Confidence": "High" },
            "Note_quality": { "Rational": "derived from the dialogue by template", "Quality": "High", "Confidence": "High" },
        })
    }
}

impl GeneratorClient for LocalCorruptor {
    fn generate(&self, request: &GeneratorRequest<'_>) -> Result<Value, GeneratorError> {
        let mut rng = ChaCha8Rng::seed_from_u64(case_seed(
            self.seed,
            &format!("{:?}\n{}", request.task, request.dialogue),
        ));
        let note = request.note;
        let mut truncate = |mut items: Vec<Value>, max: usize| {
            items.shuffle(&mut rng);
            items.truncate(max);
            items
        };
        Ok(match request.task {
            GeneratorTask::Errors(t) => {
                let mut inner = ChaCha8Rng::seed_from_u64(case_seed(self.seed, t.name()));
                let items = match t {
                    ErrorType::FactualInaccuracy => self.factual(note, request.dialogue, &mut inner),
                    ErrorType::Hallucination => self.hallucination(note, request.dialogue, &mut inner),
                    ErrorType::Unhelpfulness => self.unhelpful(note),
                };
                json!({ "Errors": truncate(items, self.max_errors_per_type) })
            }
            GeneratorTask::Paraphrases => {
                json!({ "Paraphrases": truncate(self.paraphrases(note), self.max_paraphrases) })
            }
            GeneratorTask::Quality => self.quality(request.dialogue),
        })
    }
}

/// Builds a case with the local corruptor. Error types it cannot produce
/// for this note are left out of the pool.
pub fn local_pools(case_id: &str, dialogue: &str, note: &StructuredNote, seed: u64) -> Result<Case, CorruptionError> {
    let corruptor = LocalCorruptor::new(seed);
    let mut error_pool = Vec::new();
    for t in ErrorType::ALL {
        match build_error_pool(dialogue, note, t, &corruptor) {
            Ok(pool) => error_pool.extend(pool),
            Err(CorruptionError::InvalidResponse(_)) => {}
            Err(e) => return Err(e),
        }
    }
    let paraphrase_pool = build_paraphrase_pool(dialogue, note, &corruptor)?;
    Ok(Case {
        case_id: case_id.to_string(),
        dialogue: dialogue.to_string(),
        gold: note.clone(),
        error_pool,
        paraphrase_pool,
        quality: annotate_quality(dialogue, note, &corruptor).ok(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corruption::ErrorLevel;
    use crate::note::{parse_note, render_note};
    use regex::Regex;

    /// Facts recovered from dialogue text alone.
    struct Checked {
        complaints: Vec<[String; 8]>,
        denied: Vec<String>,
        weeks: String,
    }

    fn read_dialogue(d: &str) -> Checked {
        let pat = Regex::new(r"patient: my (\w+) (\w+) has (\w+) for (\d+) (\w+)\.").unwrap();
        let rx = Regex::new(r"doctor: take (\S+) (\d+) mg daily and get an (\S+)\.").unwrap();
        let den = Regex::new(r"any (\w+)\? patient: no\.").unwrap();
        let back = Regex::new(r"come back in (\d+) weeks").unwrap();
        let complaints = pat
            .captures_iter(d)
            .zip(rx.captures_iter(d))
            .map(|(a, b)| {
                [
                    a[1].to_string(),
                    a[2].to_string(),
                    a[3].to_string(),
                    a[4].to_string(),
                    a[5].to_string(),
                    b[1].to_string(),
                    b[2].to_string(),
                    b[3].to_string(),
                ]
            })
            .collect();
        Checked {
            complaints,
            denied: den.captures_iter(d).map(|c| c[1].to_string()).collect(),
            weeks: back.captures(d).unwrap()[1].to_string(),
        }
    }

    /// True when `text`, placed in `problem_no`, is fully supported by the
    /// dialogue: every content word agrees with that complaint and the
    /// sentence carries at least one specific fact.
    fn supported(c: &Checked, problem_no: u32, text: &str) -> bool {
        let tokens: Vec<String> = text
            .split_whitespace()
            .map(|w| w.trim_end_matches(['.', ':', '?']).to_string())
            .collect();
        let vocab_facts: Vec<&str> = SIDES
            .iter()
            .chain(&SITES)
            .chain(&SYMPTOMS)
            .chain(&UNITS)
            .chain(&MEDS)
            .chain(&DOSES)
            .chain(&TESTS)
            .chain(&DENIABLE)
            .copied()
            .collect();
        let allowed: Vec<String> = match c.complaints.get(problem_no as usize - 1) {
            Some(f) => f.to_vec(),
            None => vec![c.weeks.clone(), "weeks".into()],
        };
        let unsupported = ["some", "later", "needed", "well", "problem", "issue", "issues", "chronic", "chest", "neurology"];
        let mut specific = 0;
        for t in &tokens {
            if unsupported.contains(&t.as_str()) {
                return false;
            }
            let is_fact = vocab_facts.contains(&t.as_str()) || t.parse::<u32>().is_ok();
            if is_fact {
                if !allowed.contains(t) || c.denied.contains(t) {
                    return false;
                }
                specific += 1;
            }
        }
        specific > 0
    }

    #[test]
    fn same_seed_same_case() {
        assert_eq!(generate_toy_case(0), generate_toy_case(0));
        assert_ne!(generate_toy_case(0).dialogue, generate_toy_case(1).dialogue);
    }

    #[test]
    fn gold_notes_round_trip_and_are_supported() {
        for seed in 0..50 {
            let case = generate_toy_case(seed);
            let parsed = parse_note(&render_note(&case.gold)).unwrap();
            assert_eq!(parsed, case.gold);
            let checked = read_dialogue(&case.dialogue);
            for p in &case.gold.problems {
                if !p.is_follow_up() {
                    assert!(supported(&checked, p.number, &p.description), "{}", p.description);
                }
                for s in &p.steps {
                    assert!(supported(&checked, p.number, &s.content), "{}", s.content);
                }
            }
        }
    }

    #[test]
    fn every_pool_entry_contradicts_the_dialogue() {
        for seed in 0..50 {
            let case = generate_toy_case(seed);
            let checked = read_dialogue(&case.dialogue);
            assert!(!case.error_pool.is_empty());
            for r in &case.error_pool {
                assert!(
                    !supported(&checked, r.problem_no, &r.new_content),
                    "{:?} passed the checker: {}",
                    r.error_type,
                    r.new_content
                );
                assert_eq!(r.error_level == ErrorLevel::Problem, r.step_no.is_none());
            }
            for p in &case.paraphrase_pool {
                assert!(supported(&checked, p.problem_no, &p.new_content), "{}", p.new_content);
            }
        }
    }

    #[test]
    fn factual_swap_changes_left_to_right() {
        let note = StructuredNote::from_parts([("left knee pain", vec!["Order MRI of the left knee.".to_string()])]);
        let pool = build_error_pool("", &note, ErrorType::FactualInaccuracy, &LocalCorruptor::new(3)).unwrap();
        assert!(pool.iter().any(|r| r.new_content == "right knee pain"));
        assert!(pool.iter().any(|r| r.new_content == "Order MRI of the right knee."));
    }

    #[test]
    fn toy_text_stays_inside_the_lexicon() {
        let lexicon = toy_lexicon();
        let check = |text: &str| {
            for w in text.split_whitespace() {
                let core = w.trim_end_matches(['.', ':', '?']);
                assert!(lexicon.iter().any(|l| l == core), "{core:?} missing from lexicon");
            }
        };
        for seed in 0..30 {
            let case = generate_toy_case(seed);
            check(&case.dialogue);
            check(&render_note(&case.gold));
            for r in &case.error_pool {
                check(&r.new_content);
            }
            for p in &case.paraphrase_pool {
                check(&p.new_content);
            }
        }
    }
}
