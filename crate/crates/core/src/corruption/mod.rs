//! Error and paraphrase injection, score-label assignment, and dataset
//! construction.
//!
//! A negative sample is produced from a gold note by swapping steps for
//! entries of per-type error pools, removing steps or whole problems, and
//! finally paraphrasing some of the remaining correct steps. Every error
//! pool entry is consumed at most once per case.

pub mod generator;
pub mod prompts;
pub mod toy;

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::note::{NoteError, ScoreLabel, StructuredNote};

pub use generator::{
    annotate_quality, build_case, build_error_pool, build_paraphrase_pool, GeneratorClient, GeneratorError,
    GeneratorRequest, GeneratorTask, HttpGenerator, HttpGeneratorConfig,
};
pub use toy::{generate_toy_case, generate_toy_cases, LocalCorruptor};

#[derive(Debug, thiserror::Error)]
pub enum CorruptionError {
    #[error("generator unavailable: {0}")]
    GeneratorUnavailable(String),
    #[error("invalid generator response: {0}")]
    InvalidResponse(String),
    #[error("note has no targetable content")]
    NoTargetableContent,
    #[error("{pool} pool exhausted: requested {requested}, available {available}")]
    PoolExhausted {
        pool: String,
        requested: usize,
        available: usize,
    },
    #[error("target missing: problem {problem_no}, step {step_no:?}")]
    TargetMissing { problem_no: u32, step_no: Option<u32> },
    #[error("nothing removable with mode {0:?}")]
    NothingRemovable(RemovalMode),
    #[error("inconsistent provenance: {0}")]
    InconsistentProvenance(String),
    #[error("missing quality annotation for case {0}")]
    MissingAnnotation(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Note(#[from] NoteError),
}

impl From<GeneratorError> for CorruptionError {
    fn from(e: GeneratorError) -> Self {
        match e {
            GeneratorError::Unavailable(m) => CorruptionError::GeneratorUnavailable(m),
            GeneratorError::InvalidResponse(m) => CorruptionError::InvalidResponse(m),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ErrorType {
    #[serde(rename = "Factual Inaccuracy", alias = "FactualInaccuracy")]
    FactualInaccuracy,
    #[serde(rename = "Hallucination")]
    Hallucination,
    #[serde(rename = "Unhelpfulness")]
    Unhelpfulness,
}

impl ErrorType {
    pub const ALL: [ErrorType; 3] = [
        ErrorType::FactualInaccuracy,
        ErrorType::Hallucination,
        ErrorType::Unhelpfulness,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ErrorType::FactualInaccuracy => "Factual Inaccuracy",
            ErrorType::Hallucination => "Hallucination",
            ErrorType::Unhelpfulness => "Unhelpfulness",
        }
    }
}

impl fmt::Display for ErrorType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ErrorLevel {
    Problem,
    Step,
}

/// Numbers are exchanged as strings ("1", "2") but generators sometimes
/// emit bare integers; both are accepted.
mod numbered {
    use super::*;

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Str(String),
        Num(u64),
    }

    fn to_u32<E: serde::de::Error>(raw: Raw) -> Result<u32, E> {
        match raw {
            Raw::Num(n) => u32::try_from(n).map_err(E::custom),
            Raw::Str(s) => s.trim().parse().map_err(E::custom),
        }
    }

    pub fn serialize<S: Serializer>(n: &u32, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&n.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u32, D::Error> {
        to_u32(Raw::deserialize(d)?)
    }

    pub mod option {
        use super::*;

        pub fn serialize<S: Serializer>(n: &Option<u32>, s: S) -> Result<S::Ok, S::Error> {
            match n {
                Some(n) => s.serialize_str(&n.to_string()),
                None => s.serialize_none(),
            }
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<u32>, D::Error> {
            match Option::<Raw>::deserialize(d)? {
                None => Ok(None),
                Some(Raw::Str(s)) if s.trim().is_empty() || s.trim().eq_ignore_ascii_case("null") => Ok(None),
                Some(raw) => to_u32(raw).map(Some),
            }
        }
    }
}

/// One injected corruption, in the generator's recording format.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ErrorRecord {
    #[serde(rename = "Error_type")]
    pub error_type: ErrorType,
    #[serde(rename = "Problem_no", with = "numbered")]
    pub problem_no: u32,
    #[serde(rename = "Step_no", with = "numbered::option", default)]
    pub step_no: Option<u32>,
    #[serde(rename = "Error_level")]
    pub error_level: ErrorLevel,
    #[serde(rename = "Detailed_error")]
    pub detailed_error: String,
    #[serde(rename = "New_content")]
    pub new_content: String,
    #[serde(rename = "Original_content")]
    pub original_content: String,
}

impl ErrorRecord {
    pub fn is_well_formed(&self) -> bool {
        let level_ok = match self.error_level {
            ErrorLevel::Problem => self.step_no.is_none(),
            ErrorLevel::Step => self.step_no.is_some(),
        };
        level_ok && self.new_content.trim() != self.original_content.trim() && !self.new_content.trim().is_empty()
    }

    fn coord(&self) -> Coord {
        Coord {
            problem: self.problem_no,
            step: self.step_no,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParaphraseRecord {
    #[serde(rename = "Problem_no", with = "numbered")]
    pub problem_no: u32,
    #[serde(rename = "Step_no", with = "numbered")]
    pub step_no: u32,
    #[serde(rename = "New_content")]
    pub new_content: String,
    #[serde(rename = "Original_content")]
    pub original_content: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RemovalMode {
    RemoveSteps,
    RemoveProblem,
}

/// Provenance of one removal.
///
/// `problem_no` is the parent problem in the final numbering (step removals
/// only); `original_*` refer to the gold note's numbering.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemovalRecord {
    pub level: ErrorLevel,
    pub problem_no: Option<u32>,
    pub original_problem_no: u32,
    pub original_step_no: Option<u32>,
    pub removed_content: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleKind {
    Gold,
    Negative,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupervisionSample {
    pub case_id: String,
    pub dialogue: String,
    pub note: StructuredNote,
    pub kind: SampleKind,
    pub applied_errors: Vec<ErrorRecord>,
    pub removed: Vec<RemovalRecord>,
    #[serde(default)]
    pub paraphrases: Vec<ParaphraseRecord>,
    pub paraphrase_count: usize,
}

impl SupervisionSample {
    pub fn gold(case_id: impl Into<String>, dialogue: impl Into<String>, mut note: StructuredNote) -> Self {
        note.set_all_labels(ScoreLabel::Plus);
        SupervisionSample {
            case_id: case_id.into(),
            dialogue: dialogue.into(),
            note,
            kind: SampleKind::Gold,
            applied_errors: Vec::new(),
            removed: Vec::new(),
            paraphrases: Vec::new(),
            paraphrase_count: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum QualityLevel {
    Low,
    Medium,
    High,
}

impl FromStr for QualityLevel {
    type Err = CorruptionError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "high" => Ok(QualityLevel::High),
            "medium" => Ok(QualityLevel::Medium),
            "low" => Ok(QualityLevel::Low),
            other => Err(CorruptionError::InvalidConfig(format!("unknown quality level {other:?}"))),
        }
    }
}

/// One rated dimension of a quality annotation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseQuality {
    #[serde(rename = "Quality")]
    pub conversation_quality: QualityLevel,
    #[serde(rename = "Confidence")]
    pub confidence: QualityLevel,
    #[serde(rename = "Rational", alias = "Rationale", default)]
    pub rationale: String,
}

/// Generator output for the quality prompt. Only the conversation rating
/// takes part in filtering.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QualityAnnotation {
    #[serde(rename = "Conversation_quality")]
    pub conversation: CaseQuality,
    #[serde(rename = "Note_quality", default, skip_serializing_if = "Option::is_none")]
    pub note: Option<CaseQuality>,
}

/// A dialogue with its gold note and generator-built pools.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Case {
    pub case_id: String,
    pub dialogue: String,
    pub gold: StructuredNote,
    pub error_pool: Vec<ErrorRecord>,
    pub paraphrase_pool: Vec<ParaphraseRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quality: Option<QualityAnnotation>,
}

/// Keeps cases whose conversation rating is at least `minimum`.
pub fn filter_by_quality<'a>(
    cases: &'a [Case],
    annotations: &BTreeMap<String, QualityAnnotation>,
    minimum: QualityLevel,
) -> Result<Vec<&'a Case>, CorruptionError> {
    let mut kept = Vec::new();
    for c in cases {
        let a = annotations
            .get(&c.case_id)
            .ok_or_else(|| CorruptionError::MissingAnnotation(c.case_id.clone()))?;
        if a.conversation.conversation_quality >= minimum {
            kept.push(c);
        }
    }
    Ok(kept)
}

/// Single-use error pools for one case.
#[derive(Debug, Clone, Default)]
pub struct ErrorPools {
    entries: BTreeMap<ErrorType, Vec<(ErrorRecord, bool)>>,
}

impl ErrorPools {
    pub fn new(records: impl IntoIterator<Item = ErrorRecord>) -> Self {
        let mut entries: BTreeMap<ErrorType, Vec<(ErrorRecord, bool)>> = BTreeMap::new();
        let mut seen = HashSet::new();
        for r in records {
            if seen.insert((r.coord(), r.new_content.clone())) {
                entries.entry(r.error_type).or_default().push((r, false));
            }
        }
        ErrorPools { entries }
    }

    pub fn remaining(&self, t: ErrorType) -> usize {
        self.entries.get(&t).map_or(0, |v| v.iter().filter(|(_, used)| !used).count())
    }

    pub fn len(&self, t: ErrorType) -> usize {
        self.entries.get(&t).map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.values().all(Vec::is_empty)
    }

    pub fn used_records(&self) -> Vec<&ErrorRecord> {
        self.entries
            .values()
            .flat_map(|v| v.iter().filter(|(_, u)| *u).map(|(r, _)| r))
            .collect()
    }
}

/// Per-type error counts for one sample.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorCounts {
    pub factual_inaccuracy: usize,
    pub hallucination: usize,
    pub unhelpfulness: usize,
}

impl ErrorCounts {
    pub fn get(&self, t: ErrorType) -> usize {
        match t {
            ErrorType::FactualInaccuracy => self.factual_inaccuracy,
            ErrorType::Hallucination => self.hallucination,
            ErrorType::Unhelpfulness => self.unhelpfulness,
        }
    }

    pub fn set(&mut self, t: ErrorType, n: usize) {
        match t {
            ErrorType::FactualInaccuracy => self.factual_inaccuracy = n,
            ErrorType::Hallucination => self.hallucination = n,
            ErrorType::Unhelpfulness => self.unhelpfulness = n,
        }
    }

    pub fn total(&self) -> usize {
        self.factual_inaccuracy + self.hallucination + self.unhelpfulness
    }
}

/// Location in gold-note numbering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct Coord {
    problem: u32,
    step: Option<u32>,
}

#[derive(Debug, Clone)]
struct ProblemOrigin {
    problem: u32,
    steps: Vec<u32>,
}

/// Applies corruptions to one note while tracking where each gold position
/// ended up after removals.
#[derive(Debug, Clone)]
pub struct SampleBuilder {
    case_id: String,
    dialogue: String,
    note: StructuredNote,
    origin: Vec<ProblemOrigin>,
    applied: Vec<(Coord, ErrorRecord)>,
    removed: Vec<RemovalRecord>,
    paraphrased: Vec<(Coord, ParaphraseRecord)>,
    touched: HashSet<Coord>,
}

impl SampleBuilder {
    /// Positions already labeled "−" in `note` count as touched.
    pub fn new(case_id: impl Into<String>, dialogue: impl Into<String>, note: StructuredNote) -> Self {
        let origin = note
            .problems
            .iter()
            .map(|p| ProblemOrigin {
                problem: p.number,
                steps: p.steps.iter().map(|s| s.number).collect(),
            })
            .collect();
        let mut touched = HashSet::new();
        for p in &note.problems {
            if p.label.is_minus() {
                touched.insert(Coord { problem: p.number, step: None });
            }
            for s in &p.steps {
                if s.label.is_minus() {
                    touched.insert(Coord { problem: p.number, step: Some(s.number) });
                }
            }
        }
        SampleBuilder {
            case_id: case_id.into(),
            dialogue: dialogue.into(),
            note,
            origin,
            applied: Vec::new(),
            removed: Vec::new(),
            paraphrased: Vec::new(),
            touched,
        }
    }

    pub fn note(&self) -> &StructuredNote {
        &self.note
    }

    fn locate(&self, c: Coord) -> Option<(usize, Option<usize>)> {
        let pi = self.origin.iter().position(|o| o.problem == c.problem)?;
        match c.step {
            None => Some((pi, None)),
            Some(s) => self.origin[pi].steps.iter().position(|&x| x == s).map(|si| (pi, Some(si))),
        }
    }

    fn current_coord(&self, c: Coord) -> Option<(u32, Option<u32>)> {
        self.locate(c)
            .map(|(pi, si)| (pi as u32 + 1, si.map(|s| s as u32 + 1)))
    }

    fn content_at(&self, (pi, si): (usize, Option<usize>)) -> &str {
        let p = &self.note.problems[pi];
        match si {
            None => &p.description,
            Some(si) => &p.steps[si].content,
        }
    }

    fn is_available(&self, c: Coord) -> bool {
        !self.touched.contains(&c) && self.locate(c).is_some()
    }

    /// Replaces the record's target (gold numbering) with its new content.
    pub fn apply_error(&mut self, record: &ErrorRecord) -> Result<(), CorruptionError> {
        let c = record.coord();
        let missing = CorruptionError::TargetMissing {
            problem_no: record.problem_no,
            step_no: record.step_no,
        };
        if !record.is_well_formed() {
            return Err(CorruptionError::InconsistentProvenance(format!(
                "malformed error record for problem {} step {:?}",
                record.problem_no, record.step_no
            )));
        }
        if self.touched.contains(&c) {
            return Err(missing);
        }
        let loc = self.locate(c).ok_or(missing)?;
        if self.content_at(loc).trim() != record.original_content.trim() {
            return Err(CorruptionError::TargetMissing {
                problem_no: record.problem_no,
                step_no: record.step_no,
            });
        }
        let p = &mut self.note.problems[loc.0];
        match loc.1 {
            None => {
                p.description = record.new_content.clone();
                p.label = ScoreLabel::Minus;
            }
            Some(si) => {
                p.steps[si].content = record.new_content.clone();
                p.steps[si].label = ScoreLabel::Minus;
            }
        }
        self.note.sync_end_of_note();
        self.touched.insert(c);
        self.applied.push((c, record.clone()));
        Ok(())
    }

    /// Removes one untouched step (gold numbering) from a problem that keeps
    /// at least one step.
    pub fn remove_step(&mut self, problem_no: u32, step_no: u32) -> Result<(), CorruptionError> {
        let c = Coord { problem: problem_no, step: Some(step_no) };
        let missing = CorruptionError::TargetMissing {
            problem_no,
            step_no: Some(step_no),
        };
        if !self.is_available(c) {
            return Err(missing);
        }
        let (pi, si) = self.locate(c).ok_or(missing)?;
        let si = si.expect("step coordinate");
        if self.note.problems[pi].steps.len() < 2 || self.paraphrased.iter().any(|(pc, _)| *pc == c) {
            return Err(CorruptionError::NothingRemovable(RemovalMode::RemoveSteps));
        }
        let step = self.note.problems[pi].steps.remove(si);
        self.origin[pi].steps.remove(si);
        self.note.problems[pi].completeness_label = ScoreLabel::Minus;
        self.note.renumber();
        self.note.sync_end_of_note();
        self.touched.insert(c);
        self.removed.push(RemovalRecord {
            level: ErrorLevel::Step,
            problem_no: None,
            original_problem_no: problem_no,
            original_step_no: Some(step_no),
            removed_content: step.content,
        });
        Ok(())
    }

    fn problem_untouched(&self, pi: usize) -> bool {
        let o = &self.origin[pi];
        let p = &self.note.problems[pi];
        let coord_free = |step| !self.touched.contains(&Coord { problem: o.problem, step });
        coord_free(None)
            && o.steps.iter().all(|&s| coord_free(Some(s)))
            && !p.completeness_label.is_minus()
            && !self.removed.iter().any(|r| r.original_problem_no == o.problem)
    }

    /// Removes an entire untouched problem (gold numbering).
    pub fn remove_problem(&mut self, problem_no: u32) -> Result<(), CorruptionError> {
        let c = Coord { problem: problem_no, step: None };
        let pi = self
            .locate(c)
            .ok_or(CorruptionError::TargetMissing { problem_no, step_no: None })?
            .0;
        if self.note.problems.len() < 2 || !self.problem_untouched(pi) {
            return Err(CorruptionError::NothingRemovable(RemovalMode::RemoveProblem));
        }
        let problem = self.note.problems.remove(pi);
        self.origin.remove(pi);
        self.note.note_completeness_label = ScoreLabel::Minus;
        self.note.renumber();
        self.note.sync_end_of_note();
        self.removed.push(RemovalRecord {
            level: ErrorLevel::Problem,
            problem_no: None,
            original_problem_no: problem_no,
            original_step_no: None,
            removed_content: problem.description,
        });
        Ok(())
    }

    /// Replaces a correct step with a paraphrase; its label stays "+".
    pub fn apply_paraphrase(&mut self, record: &ParaphraseRecord) -> Result<(), CorruptionError> {
        let c = Coord {
            problem: record.problem_no,
            step: Some(record.step_no),
        };
        let missing = CorruptionError::TargetMissing {
            problem_no: record.problem_no,
            step_no: Some(record.step_no),
        };
        if !self.is_available(c) {
            return Err(missing);
        }
        let loc = self.locate(c).ok_or(missing)?;
        let (pi, si) = (loc.0, loc.1.expect("step coordinate"));
        let step = &mut self.note.problems[pi].steps[si];
        if step.label != ScoreLabel::Plus || step.content.trim() != record.original_content.trim() {
            return Err(CorruptionError::TargetMissing {
                problem_no: record.problem_no,
                step_no: Some(record.step_no),
            });
        }
        step.content = record.new_content.clone();
        self.touched.insert(c);
        self.paraphrased.push((c, record.clone()));
        Ok(())
    }

    /// Draws `counts` unused entries per type and applies them at distinct
    /// targets. Consumed entries are marked used in `pools`.
    pub fn inject_errors<R: Rng + ?Sized>(
        &mut self,
        pools: &mut ErrorPools,
        counts: &ErrorCounts,
        rng: &mut R,
    ) -> Result<(), CorruptionError> {
        for t in ErrorType::ALL {
            let want = counts.get(t);
            if want == 0 {
                continue;
            }
            let remaining = pools.remaining(t);
            if want > remaining {
                return Err(CorruptionError::PoolExhausted {
                    pool: t.name().to_string(),
                    requested: want,
                    available: remaining,
                });
            }
            let entries = pools.entries.get_mut(&t).expect("non-empty pool");
            let mut order: Vec<usize> = (0..entries.len()).filter(|&i| !entries[i].1).collect();
            order.shuffle(rng);
            let mut applied = 0;
            for i in order {
                if applied == want {
                    break;
                }
                let c = entries[i].0.coord();
                if self.touched.contains(&c) {
                    continue;
                }
                if self.locate(c).is_none() {
                    continue;
                }
                self.apply_error(&entries[i].0)?;
                entries[i].1 = true;
                applied += 1;
            }
            if applied < want {
                return Err(CorruptionError::PoolExhausted {
                    pool: t.name().to_string(),
                    requested: want,
                    available: applied,
                });
            }
        }
        Ok(())
    }

    /// Removes one randomly chosen eligible unit.
    pub fn inject_incompleteness<R: Rng + ?Sized>(
        &mut self,
        rng: &mut R,
        mode: RemovalMode,
    ) -> Result<(), CorruptionError> {
        match mode {
            RemovalMode::RemoveSteps => {
                let mut eligible = Vec::new();
                for (pi, o) in self.origin.iter().enumerate() {
                    if o.steps.len() < 2 {
                        continue;
                    }
                    for (si, &s) in o.steps.iter().enumerate() {
                        let c = Coord { problem: o.problem, step: Some(s) };
                        if !self.touched.contains(&c) && self.note.problems[pi].steps[si].label == ScoreLabel::Plus {
                            eligible.push((o.problem, s));
                        }
                    }
                }
                let &(p, s) = eligible
                    .get(rng.random_range(0..eligible.len().max(1)))
                    .filter(|_| !eligible.is_empty())
                    .ok_or(CorruptionError::NothingRemovable(mode))?;
                self.remove_step(p, s)
            }
            RemovalMode::RemoveProblem => {
                if self.note.problems.len() < 2 {
                    return Err(CorruptionError::NothingRemovable(mode));
                }
                let eligible: Vec<u32> = (0..self.origin.len())
                    .filter(|&pi| self.problem_untouched(pi))
                    .map(|pi| self.origin[pi].problem)
                    .collect();
                if eligible.is_empty() {
                    return Err(CorruptionError::NothingRemovable(mode));
                }
                let p = eligible[rng.random_range(0..eligible.len())];
                self.remove_problem(p)
            }
        }
    }

    /// Applies up to `count` paraphrases to remaining correct steps.
    /// Entries whose target is erroneous, removed, or already paraphrased
    /// are skipped.
    pub fn inject_paraphrases<R: Rng + ?Sized>(
        &mut self,
        pool: &[ParaphraseRecord],
        count: usize,
        rng: &mut R,
    ) -> Result<usize, CorruptionError> {
        let mut order: Vec<usize> = (0..pool.len()).collect();
        order.shuffle(rng);
        let mut applied = 0;
        for i in order {
            if applied == count {
                break;
            }
            if self.apply_paraphrase(&pool[i]).is_ok() {
                applied += 1;
            }
        }
        if applied < count {
            return Err(CorruptionError::PoolExhausted {
                pool: "Paraphrase".into(),
                requested: count,
                available: applied,
            });
        }
        Ok(applied)
    }

    /// Number of paraphrase pool entries that could still be applied.
    pub fn eligible_paraphrases(&self, pool: &[ParaphraseRecord]) -> usize {
        let mut targets = HashSet::new();
        for r in pool {
            let c = Coord { problem: r.problem_no, step: Some(r.step_no) };
            if let Some(loc) = self.locate(c) {
                if !self.touched.contains(&c) && self.content_at(loc).trim() == r.original_content.trim() {
                    targets.insert(c);
                }
            }
        }
        targets.len()
    }

    pub fn applied_count(&self) -> usize {
        self.applied.len()
    }

    pub fn removal_count(&self) -> usize {
        self.removed.len()
    }

    /// Finalizes provenance in current numbering and re-derives labels.
    pub fn finish(self) -> Result<SupervisionSample, CorruptionError> {
        let mut applied_errors = Vec::with_capacity(self.applied.len());
        for (c, rec) in &self.applied {
            let (p, s) = self.current_coord(*c).ok_or_else(|| {
                CorruptionError::InconsistentProvenance(format!("error target {c:?} was removed"))
            })?;
            let mut rec = rec.clone();
            rec.problem_no = p;
            rec.step_no = s;
            applied_errors.push(rec);
        }
        let mut removed = self.removed.clone();
        for r in &mut removed {
            if r.level == ErrorLevel::Step {
                let (p, _) = self
                    .current_coord(Coord { problem: r.original_problem_no, step: None })
                    .ok_or_else(|| CorruptionError::InconsistentProvenance("parent problem removed".into()))?;
                r.problem_no = Some(p);
            }
        }
        let mut paraphrases = Vec::with_capacity(self.paraphrased.len());
        for (c, rec) in &self.paraphrased {
            let (p, s) = self
                .current_coord(*c)
                .ok_or_else(|| CorruptionError::InconsistentProvenance("paraphrased step removed".into()))?;
            let mut rec = rec.clone();
            rec.problem_no = p;
            rec.step_no = s.expect("step");
            paraphrases.push(rec);
        }
        let kind = if applied_errors.is_empty() && removed.is_empty() {
            SampleKind::Gold
        } else {
            SampleKind::Negative
        };
        let sample = SupervisionSample {
            case_id: self.case_id,
            dialogue: self.dialogue,
            paraphrase_count: paraphrases.len(),
            paraphrases,
            note: self.note,
            kind,
            applied_errors,
            removed,
        };
        let labeled = assign_labels(&sample)?;
        if labeled.note != sample.note {
            return Err(CorruptionError::InconsistentProvenance(
                "incremental labels disagree with provenance".into(),
            ));
        }
        Ok(labeled)
    }
}

/// Replaces errors drawn from `pools` into `note`.
pub fn inject_errors<R: Rng + ?Sized>(
    note: &StructuredNote,
    pools: &mut ErrorPools,
    counts: &ErrorCounts,
    rng: &mut R,
) -> Result<(StructuredNote, Vec<ErrorRecord>), CorruptionError> {
    let mut b = SampleBuilder::new("", "", note.clone());
    b.inject_errors(pools, counts, rng)?;
    let applied = b.applied.iter().map(|(_, r)| r.clone()).collect();
    Ok((b.note, applied))
}

/// Removes one step or one whole problem.
pub fn inject_incompleteness<R: Rng + ?Sized>(
    note: &StructuredNote,
    rng: &mut R,
    mode: RemovalMode,
) -> Result<StructuredNote, CorruptionError> {
    let mut b = SampleBuilder::new("", "", note.clone());
    b.inject_incompleteness(rng, mode)?;
    Ok(b.note)
}

/// Paraphrases `count` correct steps. Returns the note and the number applied.
pub fn inject_paraphrases<R: Rng + ?Sized>(
    note: &StructuredNote,
    pool: &[ParaphraseRecord],
    count: usize,
    rng: &mut R,
) -> Result<(StructuredNote, usize), CorruptionError> {
    let mut b = SampleBuilder::new("", "", note.clone());
    let n = b.inject_paraphrases(pool, count, rng)?;
    Ok((b.note, n))
}

/// Derives every label of `sample.note` from its provenance records.
pub fn assign_labels(sample: &SupervisionSample) -> Result<SupervisionSample, CorruptionError> {
    let has_provenance = !sample.applied_errors.is_empty() || !sample.removed.is_empty();
    match sample.kind {
        SampleKind::Gold if has_provenance => {
            return Err(CorruptionError::InconsistentProvenance(
                "gold sample carries error or removal records".into(),
            ))
        }
        SampleKind::Negative if !has_provenance => {
            return Err(CorruptionError::InconsistentProvenance(
                "negative sample has no error or removal records".into(),
            ))
        }
        _ => {}
    }
    let mut note = sample.note.clone();
    note.set_all_labels(ScoreLabel::Plus);
    for rec in &sample.applied_errors {
        let inconsistent = || {
            CorruptionError::InconsistentProvenance(format!(
                "error record does not match problem {} step {:?}",
                rec.problem_no, rec.step_no
            ))
        };
        let p = note.problem_mut(rec.problem_no).ok_or_else(inconsistent)?;
        let (content, label) = match rec.step_no {
            None => (&p.description, &mut p.label),
            Some(s) => {
                let step = p.steps.iter_mut().find(|x| x.number == s).ok_or_else(inconsistent)?;
                (&step.content, &mut step.label)
            }
        };
        if content.trim() != rec.new_content.trim() || label.is_minus() {
            return Err(inconsistent());
        }
        *label = ScoreLabel::Minus;
    }
    for r in &sample.removed {
        match r.level {
            ErrorLevel::Step => {
                let no = r.problem_no.ok_or_else(|| {
                    CorruptionError::InconsistentProvenance("step removal without parent problem".into())
                })?;
                note.problem_mut(no)
                    .ok_or_else(|| CorruptionError::InconsistentProvenance(format!("no problem {no}")))?
                    .completeness_label = ScoreLabel::Minus;
            }
            ErrorLevel::Problem => note.note_completeness_label = ScoreLabel::Minus,
        }
    }
    note.end_of_note_label = if has_provenance {
        ScoreLabel::Minus
    } else {
        ScoreLabel::Plus
    };
    let mut out = sample.clone();
    out.note = note;
    Ok(out)
}

/// Count distribution over `0..=max` obtained by linearly tilting the
/// uniform distribution until its mean equals `mean`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountDistribution {
    pub max: usize,
    pub mean: f64,
}

impl CountDistribution {
    pub fn new(max: usize, mean: f64) -> Self {
        CountDistribution { max, mean }
    }

    pub fn weights(&self) -> Result<Vec<f64>, CorruptionError> {
        let n = self.max + 1;
        let center = self.max as f64 / 2.0;
        let spread: f64 = (0..n).map(|k| (k as f64 - center).powi(2)).sum();
        let tilt = if spread > 0.0 { (self.mean - center) / spread } else { 0.0 };
        let w: Vec<f64> = (0..n).map(|k| 1.0 / n as f64 + tilt * (k as f64 - center)).collect();
        if w.iter().any(|&x| x < 0.0) || (self.max == 0 && self.mean != 0.0) {
            return Err(CorruptionError::InvalidConfig(format!(
                "mean {} is not reachable by tilting a uniform over 0..={}",
                self.mean, self.max
            )));
        }
        Ok(w)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<usize, CorruptionError> {
        let w = self.weights()?;
        let dist = WeightedIndex::new(&w).map_err(|e| CorruptionError::InvalidConfig(e.to_string()))?;
        Ok(dist.sample(rng))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub seed: u64,
    pub factual_inaccuracy: CountDistribution,
    pub hallucination: CountDistribution,
    pub unhelpfulness: CountDistribution,
    /// Number of removal events per negative.
    pub incompleteness: CountDistribution,
    pub paraphrases: CountDistribution,
    /// Mean negatives per case; each case gets the floor or the ceiling.
    pub negatives_per_case: f64,
    /// Probability that a removal drops a whole problem rather than a step.
    pub remove_problem_probability: f64,
    pub paraphrase_gold: bool,
    pub include_gold: bool,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            seed: 0,
            factual_inaccuracy: CountDistribution::new(2, 1.16),
            hallucination: CountDistribution::new(2, 1.18),
            unhelpfulness: CountDistribution::new(2, 1.19),
            incompleteness: CountDistribution::new(2, 1.27),
            paraphrases: CountDistribution::new(4, 2.38),
            negatives_per_case: 7.61,
            remove_problem_probability: 0.3,
            paraphrase_gold: false,
            include_gold: true,
        }
    }
}

impl DatasetConfig {
    fn error_distribution(&self, t: ErrorType) -> &CountDistribution {
        match t {
            ErrorType::FactualInaccuracy => &self.factual_inaccuracy,
            ErrorType::Hallucination => &self.hallucination,
            ErrorType::Unhelpfulness => &self.unhelpfulness,
        }
    }
}

/// Dataset statistics computed over negative samples only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub cases: usize,
    pub gold_samples: usize,
    pub negative_samples: usize,
    pub mean_samples_per_case: f64,
    pub mean_factual_inaccuracy: f64,
    pub mean_hallucination: f64,
    pub mean_unhelpfulness: f64,
    pub mean_incompleteness: f64,
    pub mean_paraphrases: f64,
}

impl DatasetSummary {
    pub fn from_samples(cases: usize, samples: &[SupervisionSample]) -> Self {
        let negatives: Vec<&SupervisionSample> =
            samples.iter().filter(|s| s.kind == SampleKind::Negative).collect();
        let n = negatives.len().max(1) as f64;
        let mean_of = |f: &dyn Fn(&SupervisionSample) -> usize| negatives.iter().map(|s| f(s)).sum::<usize>() as f64 / n;
        let count_type = |t: ErrorType| {
            move |s: &SupervisionSample| s.applied_errors.iter().filter(|e| e.error_type == t).count()
        };
        DatasetSummary {
            cases,
            gold_samples: samples.len() - negatives.len(),
            negative_samples: negatives.len(),
            mean_samples_per_case: negatives.len() as f64 / cases.max(1) as f64,
            mean_factual_inaccuracy: mean_of(&count_type(ErrorType::FactualInaccuracy)),
            mean_hallucination: mean_of(&count_type(ErrorType::Hallucination)),
            mean_unhelpfulness: mean_of(&count_type(ErrorType::Unhelpfulness)),
            mean_incompleteness: mean_of(&|s| s.removed.len()),
            mean_paraphrases: mean_of(&|s| s.paraphrase_count),
        }
    }

    /// Two-column summary table.
    pub fn to_table(&self) -> String {
        let rows = [
            ("Total No. of cases".to_string(), self.cases.to_string()),
            ("Total No. of samples".to_string(), self.negative_samples.to_string()),
            ("Mean No. of samples per case".to_string(), format!("{:.2}", self.mean_samples_per_case)),
            ("Mean No. of errors per sample".to_string(), String::new()),
            ("  Factual Inaccuracy".to_string(), format!("{:.2}", self.mean_factual_inaccuracy)),
            ("  Hallucination".to_string(), format!("{:.2}", self.mean_hallucination)),
            ("  Unhelpfulness".to_string(), format!("{:.2}", self.mean_unhelpfulness)),
            ("  Incompleteness".to_string(), format!("{:.2}", self.mean_incompleteness)),
            ("Mean No. of paraphrases per sample".to_string(), format!("{:.2}", self.mean_paraphrases)),
        ];
        let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        let mut out = format!("{:width$}  Counts\n", "");
        for (k, v) in rows {
            out.push_str(&format!("{k:width$}  {v}\n"));
        }
        out
    }
}

/// Derives a per-case RNG seed from the global seed and the case id.
pub fn case_seed(seed: u64, case_id: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(case_id.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// Builds the gold sample and the negatives for one case.
///
/// Requested counts are clipped to what the case can still supply (unused
/// pool entries, removable units, eligible paraphrase targets), so summary
/// statistics report what was actually applied.
pub fn build_case_samples(case: &Case, config: &DatasetConfig) -> Result<Vec<SupervisionSample>, CorruptionError> {
    let mut rng = ChaCha8Rng::seed_from_u64(case_seed(config.seed, &case.case_id));
    let mut pools = ErrorPools::new(case.error_pool.iter().cloned());
    let mut out = Vec::new();
    if config.include_gold {
        let mut b = SampleBuilder::new(&case.case_id, &case.dialogue, case.gold.clone());
        if config.paraphrase_gold {
            let want = config.paraphrases.sample(&mut rng)?;
            let n = want.min(b.eligible_paraphrases(&case.paraphrase_pool));
            b.inject_paraphrases(&case.paraphrase_pool, n, &mut rng)?;
        }
        out.push(b.finish()?);
    }
    let floor = config.negatives_per_case.floor();
    let frac = config.negatives_per_case - floor;
    let negatives = floor as usize + usize::from(rng.random_bool(frac.clamp(0.0, 1.0)));
    for _ in 0..negatives {
        let mut b = SampleBuilder::new(&case.case_id, &case.dialogue, case.gold.clone());
        let (counts, removals) = loop {
            let mut counts = ErrorCounts::default();
            for t in ErrorType::ALL {
                counts.set(t, config.error_distribution(t).sample(&mut rng)?);
            }
            let removals = config.incompleteness.sample(&mut rng)?;
            if counts.total() + removals > 0 {
                break (counts, removals);
            }
        };
        let mut clipped = counts;
        for t in ErrorType::ALL {
            clipped.set(t, counts.get(t).min(pools.remaining(t)));
        }
        match b.inject_errors(&mut pools, &clipped, &mut rng) {
            Ok(()) | Err(CorruptionError::PoolExhausted { .. }) => {}
            Err(e) => return Err(e),
        }
        for _ in 0..removals {
            let first = if rng.random_bool(config.remove_problem_probability) {
                RemovalMode::RemoveProblem
            } else {
                RemovalMode::RemoveSteps
            };
            let second = match first {
                RemovalMode::RemoveProblem => RemovalMode::RemoveSteps,
                RemovalMode::RemoveSteps => RemovalMode::RemoveProblem,
            };
            match b.inject_incompleteness(&mut rng, first) {
                Err(CorruptionError::NothingRemovable(_)) => match b.inject_incompleteness(&mut rng, second) {
                    Err(CorruptionError::NothingRemovable(_)) => break,
                    other => other?,
                },
                other => other?,
            }
        }
        if b.applied_count() + b.removal_count() == 0 {
            // Everything was clipped away; the sample would be a duplicate gold.
            continue;
        }
        let want = config.paraphrases.sample(&mut rng)?;
        let n = want.min(b.eligible_paraphrases(&case.paraphrase_pool));
        b.inject_paraphrases(&case.paraphrase_pool, n, &mut rng)?;
        out.push(b.finish()?);
    }
    Ok(out)
}

/// Builds the full dataset. Per-case work is seeded by `(seed, case_id)`.
pub fn build_dataset(
    cases: &[Case],
    config: &DatasetConfig,
) -> Result<(Vec<SupervisionSample>, DatasetSummary), CorruptionError> {
    let mut samples = Vec::new();
    for case in cases {
        samples.extend(build_case_samples(case, config)?);
    }
    let summary = DatasetSummary::from_samples(cases.len(), &samples);
    Ok((samples, summary))
}

/// One JSON object per line.
pub fn write_jsonl<T: Serialize>(items: &[T]) -> Result<String, serde_json::Error> {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn read_jsonl<T: serde::de::DeserializeOwned>(text: &str) -> Result<Vec<T>, serde_json::Error> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn note(shape: &[usize]) -> StructuredNote {
        StructuredNote::from_parts(shape.iter().enumerate().map(|(p, &n)| {
            (
                format!("problem {}", p + 1),
                (0..n).map(|s| format!("Step {} of problem {}.", s + 1, p + 1)).collect(),
            )
        }))
    }

    fn err(t: ErrorType, p: u32, s: Option<u32>, original: &str, new: &str) -> ErrorRecord {
        ErrorRecord {
            error_type: t,
            problem_no: p,
            step_no: s,
            error_level: if s.is_some() { ErrorLevel::Step } else { ErrorLevel::Problem },
            detailed_error: "test".into(),
            new_content: new.into(),
            original_content: original.into(),
        }
    }

    #[test]
    fn two_errors_label_two_positions() {
        let n = note(&[3, 2]);
        let mut pools = ErrorPools::new([
            err(ErrorType::FactualInaccuracy, 1, Some(2), "Step 2 of problem 1.", "Wrong 2."),
            err(ErrorType::Hallucination, 2, None, "problem 2", "made up"),
        ]);
        let counts = ErrorCounts {
            factual_inaccuracy: 1,
            hallucination: 1,
            unhelpfulness: 0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (out, applied) = inject_errors(&n, &mut pools, &counts, &mut rng).unwrap();
        assert_eq!(applied.len(), 2);
        assert_eq!(out.problems[0].steps[1].label, ScoreLabel::Minus);
        assert_eq!(out.problems[1].label, ScoreLabel::Minus);
        assert_eq!(out.end_of_note_label, ScoreLabel::Minus);
        let minus = out.labels().iter().filter(|(_, l)| l.is_minus()).count();
        assert_eq!(minus, 3);
        assert_eq!(pools.remaining(ErrorType::FactualInaccuracy), 0);
    }

    #[test]
    fn pool_exhaustion_is_reported() {
        let n = note(&[2]);
        let mut pools = ErrorPools::new([err(ErrorType::Unhelpfulness, 1, Some(1), "Step 1 of problem 1.", "Vague.")]);
        let counts = ErrorCounts {
            unhelpfulness: 2,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            inject_errors(&n, &mut pools, &counts, &mut rng),
            Err(CorruptionError::PoolExhausted { requested: 2, available: 1, .. })
        ));
    }

    #[test]
    fn step_removal_marks_problem_completeness() {
        let n = note(&[2, 3]);
        let mut b = SampleBuilder::new("c", "d", n);
        b.remove_step(2, 2).unwrap();
        let s = b.finish().unwrap();
        assert_eq!(s.note.problems[1].steps.len(), 2);
        assert_eq!(s.note.problems[1].steps[1].number, 2);
        assert_eq!(s.note.problems[1].completeness_label, ScoreLabel::Minus);
        assert_eq!(s.note.note_completeness_label, ScoreLabel::Plus);
        assert_eq!(s.note.end_of_note_label, ScoreLabel::Minus);
        assert_eq!(s.removed[0].problem_no, Some(2));
        assert_eq!(s.removed[0].original_step_no, Some(2));
    }

    #[test]
    fn problem_removal_marks_note_completeness() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = note(&[1, 1, 1]);
        let mut b = SampleBuilder::new("c", "d", n);
        b.remove_problem(3).unwrap();
        let s = b.finish().unwrap();
        assert_eq!(s.note.problems.len(), 2);
        assert_eq!(s.note.note_completeness_label, ScoreLabel::Minus);
        let single = note(&[1]);
        assert!(matches!(
            inject_incompleteness(&single, &mut rng, RemovalMode::RemoveProblem),
            Err(CorruptionError::NothingRemovable(RemovalMode::RemoveProblem))
        ));
        assert!(matches!(
            inject_incompleteness(&single, &mut rng, RemovalMode::RemoveSteps),
            Err(CorruptionError::NothingRemovable(RemovalMode::RemoveSteps))
        ));
    }

    #[test]
    fn renumbering_tracks_error_targets() {
        let n = note(&[1, 2]);
        let mut b = SampleBuilder::new("c", "d", n);
        b.apply_error(&err(ErrorType::Hallucination, 2, Some(2), "Step 2 of problem 2.", "Fabricated."))
            .unwrap();
        b.remove_problem(1).unwrap();
        let s = b.finish().unwrap();
        assert_eq!(s.applied_errors[0].problem_no, 1);
        assert_eq!(s.applied_errors[0].step_no, Some(2));
        assert_eq!(s.note.problems[0].steps[1].label, ScoreLabel::Minus);
    }

    #[test]
    fn paraphrase_skips_erroneous_steps() {
        let n = note(&[2]);
        let mut b = SampleBuilder::new("c", "d", n);
        b.apply_error(&err(ErrorType::Unhelpfulness, 1, Some(1), "Step 1 of problem 1.", "Vague."))
            .unwrap();
        let pool = vec![
            ParaphraseRecord {
                problem_no: 1,
                step_no: 1,
                new_content: "First step, reworded.".into(),
                original_content: "Step 1 of problem 1.".into(),
            },
            ParaphraseRecord {
                problem_no: 1,
                step_no: 2,
                new_content: "Second step, reworded.".into(),
                original_content: "Step 2 of problem 1.".into(),
            },
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(b.inject_paraphrases(&pool, 1, &mut rng).unwrap(), 1);
        let s = b.finish().unwrap();
        assert_eq!(s.note.problems[0].steps[1].content, "Second step, reworded.");
        assert_eq!(s.note.problems[0].steps[1].label, ScoreLabel::Plus);
        assert_eq!(s.paraphrase_count, 1);
    }

    #[test]
    fn paraphrased_gold_stays_gold() {
        let n = note(&[2]);
        let pool = vec![ParaphraseRecord {
            problem_no: 1,
            step_no: 2,
            new_content: "Reworded.".into(),
            original_content: "Step 2 of problem 1.".into(),
        }];
        let mut b = SampleBuilder::new("c", "d", n);
        b.inject_paraphrases(&pool, 1, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let s = b.finish().unwrap();
        assert_eq!(s.kind, SampleKind::Gold);
        assert!(s.note.labels().iter().all(|(_, l)| *l == ScoreLabel::Plus));
    }

    #[test]
    fn assign_labels_rejects_inconsistent_provenance() {
        let mut s = SupervisionSample::gold("c", "d", note(&[1]));
        s.applied_errors.push(err(ErrorType::Hallucination, 1, None, "problem 1", "other"));
        assert!(matches!(assign_labels(&s), Err(CorruptionError::InconsistentProvenance(_))));
        s.kind = SampleKind::Negative;
        // record claims new content that is not in the note
        assert!(matches!(assign_labels(&s), Err(CorruptionError::InconsistentProvenance(_))));
        s.note.problems[0].description = "other".into();
        let labeled = assign_labels(&s).unwrap();
        assert_eq!(labeled.note.problems[0].label, ScoreLabel::Minus);
        assert_eq!(labeled.note.end_of_note_label, ScoreLabel::Minus);
    }

    #[test]
    fn gold_sample_is_all_plus() {
        let s = assign_labels(&SupervisionSample::gold("c", "d", note(&[2, 1]))).unwrap();
        assert!(s.note.labels().iter().all(|(_, l)| *l == ScoreLabel::Plus));
    }

    #[test]
    fn tilted_counts_hit_their_mean() {
        for (max, mean) in [(2, 1.16), (2, 1.27), (4, 2.38)] {
            let d = CountDistribution::new(max, mean);
            let w = d.weights().unwrap();
            let m: f64 = w.iter().enumerate().map(|(k, p)| k as f64 * p).sum();
            assert!((m - mean).abs() < 1e-12);
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert!(CountDistribution::new(2, 2.5).weights().is_err());
    }

    #[test]
    fn quality_filter() {
        let mk = |id: &str| Case {
            case_id: id.into(),
            dialogue: String::new(),
            gold: note(&[1]),
            error_pool: vec![],
            paraphrase_pool: vec![],
            quality: None,
        };
        let cases = vec![mk("h"), mk("m"), mk("l")];
        let q = |level| QualityAnnotation {
            conversation: CaseQuality {
                conversation_quality: level,
                confidence: QualityLevel::High,
                rationale: String::new(),
            },
            note: None,
        };
        let mut ann = BTreeMap::new();
        ann.insert("h".to_string(), q(QualityLevel::High));
        ann.insert("m".to_string(), q(QualityLevel::Medium));
        ann.insert("l".to_string(), q(QualityLevel::Low));
        let ids = |v: Vec<&Case>| v.into_iter().map(|c| c.case_id.clone()).collect::<Vec<_>>();
        assert_eq!(ids(filter_by_quality(&cases, &ann, QualityLevel::Medium).unwrap()), ["h", "m"]);
        assert_eq!(ids(filter_by_quality(&cases, &ann, QualityLevel::Low).unwrap()).len(), 3);
        ann.remove("m");
        assert!(matches!(
            filter_by_quality(&cases, &ann, QualityLevel::Low),
            Err(CorruptionError::MissingAnnotation(id)) if id == "m"
        ));
    }

    #[test]
    fn error_record_json_uses_recording_field_names() {
        let r = err(ErrorType::FactualInaccuracy, 1, None, "left knee pain", "right knee pain");
        let v = serde_json::to_value(&r).unwrap();
        assert_eq!(v["Error_type"], "Factual Inaccuracy");
        assert_eq!(v["Problem_no"], "1");
        assert!(v["Step_no"].is_null());
        let back: ErrorRecord =
            serde_json::from_str(r#"{"Error_type":"Hallucination","Problem_no":2,"Step_no":"3","Error_level":"Step","Detailed_error":"x","New_content":"a","Original_content":"b"}"#)
                .unwrap();
        assert_eq!((back.problem_no, back.step_no), (2, Some(3)));
    }
}
