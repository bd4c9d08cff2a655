//! Token streams, loss masks and corpus files.
//!
//! A sample serializes as the dialogue, a note boundary, then every step
//! as `step-token content score`. Completeness and end-of-note steps have
//! no content, so their step token is followed directly by the score.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corruption::{toy, SampleKind, SupervisionSample};
use crate::note::{Problem, ScoreLabel, Step, StepRole, StructuredNote};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("symbol {0:?} is not in the vocabulary")]
    UnknownSymbol(String),
    #[error("vocabulary mismatch: expected {expected}, found {found}")]
    VocabMismatch { expected: String, found: String },
    #[error("malformed stream: {0}")]
    Malformed(String),
    #[error("corpus file: {0}")]
    Format(String),
}

/// Reserved symbols. Their ids are fixed and precede every base symbol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Special {
    NoteBoundary,
    Problem,
    Step,
    ProblemComplete,
    NoteComplete,
    EndOfNote,
    Plus,
    Minus,
    Placeholder,
}

impl Special {
    pub const ALL: [Special; 9] = [
        Special::NoteBoundary,
        Special::Problem,
        Special::Step,
        Special::ProblemComplete,
        Special::NoteComplete,
        Special::EndOfNote,
        Special::Plus,
        Special::Minus,
        Special::Placeholder,
    ];

    pub const fn id(self) -> u32 {
        self as u32
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Special::NoteBoundary => "<note>",
            Special::Problem => "<problem>",
            Special::Step => "<step>",
            Special::ProblemComplete => "<problem_complete>",
            Special::NoteComplete => "<note_complete>",
            Special::EndOfNote => "<end_of_note>",
            Special::Plus => "<+>",
            Special::Minus => "<->",
            Special::Placeholder => "<?>",
        }
    }

    pub fn from_id(id: u32) -> Option<Special> {
        Special::ALL.get(id as usize).copied()
    }

    pub fn for_step_role(role: StepRole) -> Special {
        match role {
            StepRole::Problem => Special::Problem,
            StepRole::Step => Special::Step,
            StepRole::ProblemCompleteness => Special::ProblemComplete,
            StepRole::NoteCompleteness => Special::NoteComplete,
            StepRole::EndOfNote => Special::EndOfNote,
        }
    }

    pub fn step_role(self) -> Option<StepRole> {
        Some(match self {
            Special::Problem => StepRole::Problem,
            Special::Step => StepRole::Step,
            Special::ProblemComplete => StepRole::ProblemCompleteness,
            Special::NoteComplete => StepRole::NoteCompleteness,
            Special::EndOfNote => StepRole::EndOfNote,
            _ => return None,
        })
    }

    pub fn for_label(label: ScoreLabel) -> Special {
        match label {
            ScoreLabel::Plus => Special::Plus,
            ScoreLabel::Minus => Special::Minus,
            ScoreLabel::Placeholder => Special::Placeholder,
        }
    }

    pub fn label(self) -> Option<ScoreLabel> {
        match self {
            Special::Plus => Some(ScoreLabel::Plus),
            Special::Minus => Some(ScoreLabel::Minus),
            Special::Placeholder => Some(ScoreLabel::Placeholder),
            _ => None,
        }
    }
}

pub const NUM_SPECIAL: u32 = Special::ALL.len() as u32;
pub const PLUS: u32 = Special::Plus.id();
pub const MINUS: u32 = Special::Minus.id();
pub const PLACEHOLDER: u32 = Special::Placeholder.id();

/// Trailing punctuation split off words and re-attached on decode.
const WORD_GLUE: &[char] = &['.', ',', ':', ';', '?', '!'];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VocabKind {
    Words,
    Bytes,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(into = "VocabFile", try_from = "VocabFile")]
pub struct Vocabulary {
    kind: VocabKind,
    base: Vec<String>,
    index: HashMap<String, u32>,
}

#[derive(Serialize, Deserialize)]
struct VocabFile {
    kind: VocabKind,
    #[serde(default)]
    symbols: Vec<String>,
}

impl From<Vocabulary> for VocabFile {
    fn from(v: Vocabulary) -> Self {
        VocabFile {
            kind: v.kind,
            symbols: if v.kind == VocabKind::Words { v.base } else { Vec::new() },
        }
    }
}

impl TryFrom<VocabFile> for Vocabulary {
    type Error = CorpusError;
    fn try_from(f: VocabFile) -> Result<Self, Self::Error> {
        match f.kind {
            VocabKind::Bytes => Ok(Vocabulary::bytes()),
            VocabKind::Words => Vocabulary::words(f.symbols),
        }
    }
}

impl PartialEq for Vocabulary {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind && self.base == other.base
    }
}

impl Vocabulary {
    /// Closed word-level vocabulary. Symbols must be unique, whitespace
    /// free, and must not collide with the reserved symbols.
    pub fn words(symbols: impl IntoIterator<Item = impl Into<String>>) -> Result<Self, CorpusError> {
        let base: Vec<String> = symbols.into_iter().map(Into::into).collect();
        let mut index = HashMap::new();
        for (i, s) in base.iter().enumerate() {
            let reserved = Special::ALL.iter().any(|sp| sp.symbol() == s);
            if s.is_empty() || s.chars().any(char::is_whitespace) || reserved {
                return Err(CorpusError::Format(format!("invalid base symbol {s:?}")));
            }
            if index.insert(s.clone(), NUM_SPECIAL + i as u32).is_some() {
                return Err(CorpusError::Format(format!("duplicate base symbol {s:?}")));
            }
        }
        Ok(Vocabulary {
            kind: VocabKind::Words,
            base,
            index,
        })
    }

    pub fn toy() -> Self {
        Vocabulary::words(toy::toy_lexicon()).expect("toy lexicon is well formed")
    }

    /// Byte-level fallback able to encode any UTF-8 text.
    pub fn bytes() -> Self {
        Vocabulary {
            kind: VocabKind::Bytes,
            base: (0..=255u8).map(|b| format!("<0x{b:02X}>")).collect(),
            index: HashMap::new(),
        }
    }

    pub fn kind(&self) -> VocabKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        NUM_SPECIAL as usize + self.base.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn symbol(&self, id: u32) -> Option<&str> {
        match Special::from_id(id) {
            Some(s) => Some(s.symbol()),
            None => self.base.get((id - NUM_SPECIAL) as usize).map(String::as_str),
        }
    }

    /// Hex SHA-256 over the kind and the ordered symbol table.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(format!("{:?}\n", self.kind));
        for s in Special::ALL {
            h.update(s.symbol());
            h.update("\n");
        }
        for s in &self.base {
            h.update(s);
            h.update("\n");
        }
        hex::encode(h.finalize())
    }

    pub fn encode_text(&self, text: &str) -> Result<Vec<u32>, CorpusError> {
        match self.kind {
            VocabKind::Bytes => Ok(text.bytes().map(|b| NUM_SPECIAL + u32::from(b)).collect()),
            VocabKind::Words => {
                let mut out = Vec::new();
                for chunk in text.split_whitespace() {
                    let core = chunk.trim_end_matches(WORD_GLUE);
                    let (core, tail) = if core.is_empty() { (chunk, "") } else { (core, &chunk[core.len()..]) };
                    for piece in std::iter::once(core).chain(tail.char_indices().map(|(i, c)| &tail[i..i + c.len_utf8()])) {
                        let id = self
                            .index
                            .get(piece)
                            .ok_or_else(|| CorpusError::UnknownSymbol(piece.to_string()))?;
                        out.push(*id);
                    }
                }
                Ok(out)
            }
        }
    }

    /// Inverse of [`encode_text`](Self::encode_text) up to whitespace
    /// normalization.
    pub fn decode_text(&self, ids: &[u32]) -> Result<String, CorpusError> {
        let base = |id: u32| -> Result<&str, CorpusError> {
            if id < NUM_SPECIAL {
                return Err(CorpusError::Malformed(format!("special id {id} inside text")));
            }
            self.base
                .get((id - NUM_SPECIAL) as usize)
                .map(String::as_str)
                .ok_or_else(|| CorpusError::Malformed(format!("id {id} out of range")))
        };
        match self.kind {
            VocabKind::Bytes => {
                let bytes: Vec<u8> = ids
                    .iter()
                    .map(|&id| {
                        base(id)?;
                        Ok((id - NUM_SPECIAL) as u8)
                    })
                    .collect::<Result<_, CorpusError>>()?;
                String::from_utf8(bytes).map_err(|e| CorpusError::Malformed(e.to_string()))
            }
            VocabKind::Words => {
                let mut out = String::new();
                for &id in ids {
                    let s = base(id)?;
                    let glue = s.chars().count() == 1 && s.starts_with(WORD_GLUE);
                    if !out.is_empty() && !glue {
                        out.push(' ');
                    }
                    out.push_str(s);
                }
                Ok(out)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Dialogue,
    NoteText,
    StepToken,
    ScoreToken,
    Boundary,
}

impl Role {
    pub fn code(self) -> char {
        match self {
            Role::Dialogue => 'd',
            Role::NoteText => 'n',
            Role::StepToken => 's',
            Role::ScoreToken => 'c',
            Role::Boundary => 'b',
        }
    }

    pub fn from_code(c: char) -> Option<Role> {
        Some(match c {
            'd' => Role::Dialogue,
            'n' => Role::NoteText,
            's' => Role::StepToken,
            'c' => Role::ScoreToken,
            'b' => Role::Boundary,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenStream {
    pub tokens: Vec<u32>,
    pub roles: Vec<Role>,
}

impl TokenStream {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    fn push(&mut self, token: u32, role: Role) {
        self.tokens.push(token);
        self.roles.push(role);
    }

    pub fn score_positions(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.roles[i] == Role::ScoreToken).collect()
    }

    /// Structural role of each score position, read from the step token
    /// that opened it.
    pub fn score_roles(&self) -> Result<Vec<StepRole>, CorpusError> {
        let mut out = Vec::new();
        let mut open = None;
        for (i, (&t, &r)) in self.tokens.iter().zip(&self.roles).enumerate() {
            match r {
                Role::StepToken => {
                    open = Special::from_id(t).and_then(Special::step_role);
                    if open.is_none() {
                        return Err(CorpusError::Malformed(format!("position {i} is not a step token")));
                    }
                }
                Role::ScoreToken => out.push(
                    open.take()
                        .ok_or_else(|| CorpusError::Malformed(format!("score at {i} without a step")))?,
                ),
                _ => {}
            }
        }
        Ok(out)
    }

    pub fn score_labels(&self) -> Vec<ScoreLabel> {
        self.score_positions()
            .into_iter()
            .map(|i| Special::from_id(self.tokens[i]).and_then(Special::label).unwrap_or(ScoreLabel::Placeholder))
            .collect()
    }

    /// Role codes, one character per position.
    pub fn role_codes(&self) -> String {
        self.roles.iter().map(|r| r.code()).collect()
    }
}

/// Serializes a dialogue and a note. Labels become score tokens.
pub fn serialize_note(dialogue: &str, note: &StructuredNote, vocab: &Vocabulary) -> Result<TokenStream, CorpusError> {
    let mut s = TokenStream {
        tokens: Vec::new(),
        roles: Vec::new(),
    };
    for t in vocab.encode_text(dialogue)? {
        s.push(t, Role::Dialogue);
    }
    s.push(Special::NoteBoundary.id(), Role::Boundary);
    let step = |s: &mut TokenStream, role: StepRole, text: Option<&str>, label: ScoreLabel| -> Result<(), CorpusError> {
        s.push(Special::for_step_role(role).id(), Role::StepToken);
        if let Some(text) = text {
            let ids = vocab.encode_text(text)?;
            if ids.is_empty() {
                return Err(CorpusError::Malformed("empty step content".into()));
            }
            for t in ids {
                s.push(t, Role::NoteText);
            }
        }
        s.push(Special::for_label(label).id(), Role::ScoreToken);
        Ok(())
    };
    for p in &note.problems {
        step(&mut s, StepRole::Problem, Some(&p.description), p.label)?;
        for st in &p.steps {
            step(&mut s, StepRole::Step, Some(&st.content), st.label)?;
        }
        step(&mut s, StepRole::ProblemCompleteness, None, p.completeness_label)?;
    }
    step(&mut s, StepRole::NoteCompleteness, None, note.note_completeness_label)?;
    step(&mut s, StepRole::EndOfNote, None, note.end_of_note_label)?;
    Ok(s)
}

pub fn serialize_sample(sample: &SupervisionSample, vocab: &Vocabulary) -> Result<TokenStream, CorpusError> {
    serialize_note(&sample.dialogue, &sample.note, vocab)
}

/// Recovers the dialogue and the labeled note from a stream.
pub fn deserialize_stream(stream: &TokenStream, vocab: &Vocabulary) -> Result<(String, StructuredNote), CorpusError> {
    let malformed = |m: &str| CorpusError::Malformed(m.to_string());
    if stream.tokens.len() != stream.roles.len() {
        return Err(malformed("token and role counts differ"));
    }
    let boundary = stream
        .roles
        .iter()
        .position(|&r| r == Role::Boundary)
        .ok_or_else(|| malformed("no note boundary"))?;
    let dialogue = vocab.decode_text(&stream.tokens[..boundary])?;
    let mut problems: Vec<Problem> = Vec::new();
    let mut note_completeness = None;
    let mut end_of_note = None;
    let mut i = boundary + 1;
    while i < stream.len() {
        let role = Special::from_id(stream.tokens[i])
            .and_then(Special::step_role)
            .filter(|_| stream.roles[i] == Role::StepToken)
            .ok_or_else(|| malformed("expected a step token"))?;
        let start = i + 1;
        let mut j = start;
        while j < stream.len() && stream.roles[j] == Role::NoteText {
            j += 1;
        }
        if j >= stream.len() || stream.roles[j] != Role::ScoreToken {
            return Err(malformed("step without a score token"));
        }
        let label = Special::from_id(stream.tokens[j])
            .and_then(Special::label)
            .ok_or_else(|| malformed("score position holds a non-score symbol"))?;
        let text = (j > start).then(|| vocab.decode_text(&stream.tokens[start..j])).transpose()?;
        match (role, text) {
            (StepRole::Problem, Some(desc)) => {
                let mut p = Problem::new(problems.len() as u32 + 1, desc, Vec::new());
                p.label = label;
                problems.push(p);
            }
            (StepRole::Step, Some(content)) => {
                let p = problems.last_mut().ok_or_else(|| malformed("step before any problem"))?;
                p.steps.push(Step {
                    number: p.steps.len() as u32 + 1,
                    content,
                    label,
                });
            }
            (StepRole::ProblemCompleteness, None) => {
                problems.last_mut().ok_or_else(|| malformed("completeness before any problem"))?.completeness_label =
                    label
            }
            (StepRole::NoteCompleteness, None) => note_completeness = Some(label),
            (StepRole::EndOfNote, None) => end_of_note = Some(label),
            _ => return Err(malformed("step content does not match its role")),
        }
        i = j + 1;
    }
    let note = StructuredNote {
        problems,
        note_completeness_label: note_completeness.ok_or_else(|| malformed("no note-completeness step"))?,
        end_of_note_label: end_of_note.ok_or_else(|| malformed("no end-of-note step"))?,
    };
    Ok((dialogue, note))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskVariant {
    Vanilla,
    ScoreOnly,
    Special,
    NotesOnly,
}

impl MaskVariant {
    pub const ALL: [MaskVariant; 4] = [
        MaskVariant::Vanilla,
        MaskVariant::ScoreOnly,
        MaskVariant::Special,
        MaskVariant::NotesOnly,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MaskVariant::Vanilla => "vanilla",
            MaskVariant::ScoreOnly => "score_only",
            MaskVariant::Special => "special",
            MaskVariant::NotesOnly => "notes_only",
        }
    }

    pub fn includes(self, role: Role) -> bool {
        match self {
            MaskVariant::Vanilla => true,
            MaskVariant::ScoreOnly => role == Role::ScoreToken,
            MaskVariant::Special => matches!(role, Role::ScoreToken | Role::StepToken),
            MaskVariant::NotesOnly => role != Role::Dialogue,
        }
    }
}

impl fmt::Display for MaskVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MaskVariant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        MaskVariant::ALL
            .into_iter()
            .find(|v| v.name() == norm)
            .ok_or_else(|| format!("unknown mask variant {s:?} (expected vanilla, score_only, special or notes_only)"))
    }
}

/// Positions whose target token enters the loss.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LossMask {
    pub variant: MaskVariant,
    pub positions: Vec<usize>,
}

pub fn build_loss_mask(stream: &TokenStream, variant: MaskVariant) -> LossMask {
    LossMask {
        variant,
        positions: (0..stream.len()).filter(|&i| variant.includes(stream.roles[i])).collect(),
    }
}

/// Keeps only the end-of-note label; all other score tokens become the
/// placeholder.
pub fn make_vanilla_orm_corpus(stream: &TokenStream) -> TokenStream {
    let mut out = stream.clone();
    let positions = stream.score_positions();
    if let Some((_, rest)) = positions.split_last() {
        for &i in rest {
            out.tokens[i] = PLACEHOLDER;
        }
    }
    out
}

/// Replaces every score token with the placeholder.
pub fn mask_for_inference(stream: &TokenStream) -> TokenStream {
    let mut out = stream.clone();
    for i in stream.score_positions() {
        out.tokens[i] = PLACEHOLDER;
    }
    out
}

pub const CORPUS_FORMAT: &str = "clinic-prm-corpus";
pub const CORPUS_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusHeader {
    pub format: String,
    pub version: u32,
    pub vocab_hash: String,
    pub vocab: Vocabulary,
    /// Mask variant selected when the corpus was built.
    pub mask: MaskVariant,
    pub vanilla_orm: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusMasks {
    pub vanilla: Vec<usize>,
    pub score_only: Vec<usize>,
    pub special: Vec<usize>,
    pub notes_only: Vec<usize>,
}

impl CorpusMasks {
    pub fn get(&self, v: MaskVariant) -> &[usize] {
        match v {
            MaskVariant::Vanilla => &self.vanilla,
            MaskVariant::ScoreOnly => &self.score_only,
            MaskVariant::Special => &self.special,
            MaskVariant::NotesOnly => &self.notes_only,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub case_id: String,
    pub kind: SampleKind,
    pub tokens: Vec<u32>,
    /// One role code per position.
    pub roles: String,
    pub masks: CorpusMasks,
}

impl CorpusRecord {
    pub fn new(case_id: &str, kind: SampleKind, stream: &TokenStream) -> Self {
        CorpusRecord {
            case_id: case_id.to_string(),
            kind,
            tokens: stream.tokens.clone(),
            roles: stream.role_codes(),
            masks: CorpusMasks {
                vanilla: build_loss_mask(stream, MaskVariant::Vanilla).positions,
                score_only: build_loss_mask(stream, MaskVariant::ScoreOnly).positions,
                special: build_loss_mask(stream, MaskVariant::Special).positions,
                notes_only: build_loss_mask(stream, MaskVariant::NotesOnly).positions,
            },
        }
    }

    pub fn stream(&self) -> Result<TokenStream, CorpusError> {
        let roles = self
            .roles
            .chars()
            .map(|c| Role::from_code(c).ok_or_else(|| CorpusError::Format(format!("bad role code {c:?}"))))
            .collect::<Result<Vec<_>, _>>()?;
        if roles.len() != self.tokens.len() {
            return Err(CorpusError::Format("token and role counts differ".into()));
        }
        Ok(TokenStream {
            tokens: self.tokens.clone(),
            roles,
        })
    }

    pub fn mask(&self, variant: MaskVariant) -> LossMask {
        LossMask {
            variant,
            positions: self.masks.get(variant).to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub header: CorpusHeader,
    pub records: Vec<CorpusRecord>,
}

impl Corpus {
    pub fn build(
        samples: &[SupervisionSample],
        vocab: &Vocabulary,
        mask: MaskVariant,
        vanilla_orm: bool,
    ) -> Result<Corpus, CorpusError> {
        let mut records = Vec::with_capacity(samples.len());
        for s in samples {
            let mut stream = serialize_sample(s, vocab)?;
            if vanilla_orm {
                stream = make_vanilla_orm_corpus(&stream);
            }
            records.push(CorpusRecord::new(&s.case_id, s.kind, &stream));
        }
        Ok(Corpus {
            header: CorpusHeader {
                format: CORPUS_FORMAT.into(),
                version: CORPUS_VERSION,
                vocab_hash: vocab.hash(),
                vocab: vocab.clone(),
                mask,
                vanilla_orm,
            },
            records,
        })
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&self.header).expect("serializable");
        out.push('\n');
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("serializable"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Corpus, CorpusError> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: CorpusHeader = serde_json::from_str(lines.next().ok_or_else(|| CorpusError::Format("empty file".into()))?)
            .map_err(|e| CorpusError::Format(format!("header: {e}")))?;
        if header.format != CORPUS_FORMAT || header.version != CORPUS_VERSION {
            return Err(CorpusError::Format(format!(
                "unsupported corpus {} v{}",
                header.format, header.version
            )));
        }
        if header.vocab.hash() != header.vocab_hash {
            return Err(CorpusError::VocabMismatch {
                expected: header.vocab_hash.clone(),
                found: header.vocab.hash(),
            });
        }
        let records = lines
            .enumerate()
            .map(|(i, l)| serde_json::from_str(l).map_err(|e| CorpusError::Format(format!("record {}: {e}", i + 1))))
            .collect::<Result<Vec<CorpusRecord>, _>>()?;
        Ok(Corpus { header, records })
    }

    /// Streams and masks for the requested variant.
    pub fn training_pairs(&self, variant: MaskVariant) -> Result<Vec<(TokenStream, LossMask)>, CorpusError> {
        self.records.iter().map(|r| Ok((r.stream()?, r.mask(variant)))).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corruption::generate_toy_case;
    use crate::note::render_note;

    fn sample() -> SupervisionSample {
        let c = generate_toy_case(4);
        SupervisionSample::gold(c.case_id, c.dialogue, c.gold)
    }

    #[test]
    fn score_positions_follow_the_step_count() {
        let note = StructuredNote::from_parts([
            ("left knee pain", vec!["Order MRI of the left knee.".to_string()]),
            ("right hip pain", vec!["Order x-ray of the right hip.".into(), "Return to clinic in 2 weeks.".into()]),
        ]);
        let s = serialize_note("doctor: any fever?", &note, &Vocabulary::toy()).unwrap();
        assert_eq!(s.score_positions().len(), 9);
        assert_eq!(build_loss_mask(&s, MaskVariant::ScoreOnly).positions.len(), 9);
        assert!(s.score_labels().iter().all(|l| *l == ScoreLabel::Plus));
        let roles = s.score_roles().unwrap();
        assert_eq!(roles, note.labels().into_iter().map(|(r, _)| r).collect::<Vec<_>>());
    }

    #[test]
    fn stream_round_trips_and_detokenizes_to_render() {
        let s = sample();
        for vocab in [Vocabulary::toy(), Vocabulary::bytes()] {
            let stream = serialize_sample(&s, &vocab).unwrap();
            let (dialogue, note) = deserialize_stream(&stream, &vocab).unwrap();
            assert_eq!(note, s.note);
            assert_eq!(render_note(&note), render_note(&s.note));
            assert_eq!(
                dialogue.split_whitespace().collect::<Vec<_>>(),
                s.dialogue.split_whitespace().collect::<Vec<_>>()
            );
        }
    }

    #[test]
    fn grammar_holds() {
        let stream = serialize_sample(&sample(), &Vocabulary::toy()).unwrap();
        for i in 0..stream.len() {
            if stream.roles[i] == Role::StepToken {
                assert!(matches!(stream.roles[i + 1], Role::NoteText | Role::ScoreToken));
            }
        }
    }

    #[test]
    fn unknown_word_is_reported() {
        let err = Vocabulary::toy().encode_text("patient reports vertigo.").unwrap_err();
        assert!(matches!(err, CorpusError::UnknownSymbol(w) if w == "vertigo"));
    }

    #[test]
    fn masks_nest() {
        let stream = serialize_sample(&sample(), &Vocabulary::toy()).unwrap();
        let sets: Vec<Vec<usize>> = [MaskVariant::ScoreOnly, MaskVariant::Special, MaskVariant::NotesOnly, MaskVariant::Vanilla]
            .iter()
            .map(|&v| build_loss_mask(&stream, v).positions)
            .collect();
        for w in sets.windows(2) {
            assert!(w[0].iter().all(|p| w[1].contains(p)));
            assert!(w[0].len() < w[1].len());
        }
        assert!(sets[2].iter().all(|&p| stream.roles[p] != Role::Dialogue));
    }

    #[test]
    fn vanilla_orm_keeps_only_the_last_label() {
        let stream = serialize_sample(&sample(), &Vocabulary::toy()).unwrap();
        let orm = make_vanilla_orm_corpus(&stream);
        let labels = orm.score_labels();
        let (last, rest) = labels.split_last().unwrap();
        assert_eq!(*last, ScoreLabel::Plus);
        assert!(rest.iter().all(|l| *l == ScoreLabel::Placeholder));
        let score: Vec<usize> = stream.score_positions();
        for i in 0..stream.len() {
            if !score.contains(&i) {
                assert_eq!(orm.tokens[i], stream.tokens[i]);
            }
        }
    }

    #[test]
    fn inference_masking_is_idempotent() {
        let stream = serialize_sample(&sample(), &Vocabulary::toy()).unwrap();
        let once = mask_for_inference(&stream);
        assert_eq!(mask_for_inference(&once), once);
        assert_eq!(once.roles, stream.roles);
        assert!(once.score_labels().iter().all(|l| *l == ScoreLabel::Placeholder));
    }

    #[test]
    fn corpus_file_round_trips() {
        let samples = vec![sample()];
        let corpus = Corpus::build(&samples, &Vocabulary::toy(), MaskVariant::NotesOnly, false).unwrap();
        let text = corpus.to_jsonl();
        assert!(text.lines().next().unwrap().contains("\"vocab_hash\""));
        assert_eq!(Corpus::from_jsonl(&text).unwrap(), corpus);
    }

    #[test]
    fn vocab_hash_depends_on_symbols() {
        let a = Vocabulary::words(["a", "b"]).unwrap();
        let b = Vocabulary::words(["b", "a"]).unwrap();
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash(), Vocabulary::words(["a", "b"]).unwrap().hash());
        assert!(Vocabulary::words(["<+>"]).is_err());
    }
}
