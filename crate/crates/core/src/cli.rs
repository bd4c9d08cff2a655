//! Pipeline commands behind the `clinic-prm` binary. Every command reads
//! and writes files in a run directory and leaves `resolved_config.json`
//! next to its outputs.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, CorpusError, MaskVariant, Vocabulary};
use crate::corruption::{
    build_case, build_dataset, read_jsonl, write_jsonl, Case, CorruptionError, DatasetConfig,
    HttpGenerator, HttpGeneratorConfig, LocalCorruptor, SupervisionSample,
};
use crate::eval::{
    build_eval_set, default_temperature_bins, eval_cases, rouge_scores, score_cases, strategy_sweep, temperature_histogram,
    EvalCase, EvalError, TaskKind,
};
use crate::model::{
    train_pairs, ModelConfig, ModelError, OracleScorer, PrmScorer, ScoreNormalization, ScorerBackend, StepScoreVector, ToyPrm,
    TrainConfig,
};
use crate::note::{parse_note, StructuredNote};
use crate::scoring::{aggregate, best_of_n, AggregationStrategy};
use crate::study::StudyError;

pub const CASES_FILE: &str = "cases.jsonl";
pub const EVAL_SET_FILE: &str = "evalset.jsonl";
pub const DATASET_FILE: &str = "dataset.jsonl";
pub const CORPUS_FILE: &str = "corpus.jsonl";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const RESOLVED_CONFIG_FILE: &str = "resolved_config.json";

/// Failure classes with their process exit codes.
#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Backend(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Usage(_) => 1,
            RunError::Data(_) => 2,
            RunError::Backend(_) => 3,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            RunError::Usage(_) => "usage",
            RunError::Data(_) => "data",
            RunError::Backend(_) => "backend",
        }
    }

    pub fn to_record(&self) -> serde_json::Value {
        serde_json::json!({ "error": self.kind(), "exit_code": self.exit_code(), "message": self.to_string() })
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Data(e.to_string())
    }
}

impl From<serde_json::Error> for RunError {
    fn from(e: serde_json::Error) -> Self {
        RunError::Data(e.to_string())
    }
}

impl From<CorruptionError> for RunError {
    fn from(e: CorruptionError) -> Self {
        match e {
            CorruptionError::GeneratorUnavailable(_) | CorruptionError::InvalidResponse(_) => RunError::Backend(e.to_string()),
            other => RunError::Data(other.to_string()),
        }
    }
}

impl From<CorpusError> for RunError {
    fn from(e: CorpusError) -> Self {
        RunError::Data(e.to_string())
    }
}

impl From<ModelError> for RunError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::NonFiniteLoss { .. } => RunError::Backend(e.to_string()),
            other => RunError::Data(other.to_string()),
        }
    }
}

impl From<EvalError> for RunError {
    fn from(e: EvalError) -> Self {
        RunError::Data(e.to_string())
    }
}

impl From<StudyError> for RunError {
    fn from(e: StudyError) -> Self {
        RunError::Data(e.to_string())
    }
}

/// Architecture of the trainable scorer; the vocabulary size comes from
/// the corpus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelShape {
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub context: usize,
    pub init_std: f64,
    pub init_seed: u64,
}

impl Default for ModelShape {
    fn default() -> Self {
        let t = ModelConfig::toy(0);
        ModelShape {
            d_model: t.d_model,
            n_layers: t.n_layers,
            n_heads: t.n_heads,
            d_ff: t.d_ff,
            context: t.context,
            init_std: t.init_std,
            init_seed: 7,
        }
    }
}

impl ModelShape {
    pub fn config(&self, vocab_size: usize) -> ModelConfig {
        ModelConfig {
            vocab_size,
            d_model: self.d_model,
            n_layers: self.n_layers,
            n_heads: self.n_heads,
            d_ff: self.d_ff,
            context: self.context,
            init_std: self.init_std,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ScorerKind {
    /// The trained checkpoint.
    #[default]
    Prm,
    /// Reads the candidate's own labels.
    Oracle,
    InvertedOracle,
}

impl std::str::FromStr for ScorerKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "prm" => Ok(ScorerKind::Prm),
            "oracle" => Ok(ScorerKind::Oracle),
            "inverted-oracle" => Ok(ScorerKind::InvertedOracle),
            _ => Err(format!("unknown scorer {s:?} (prm, oracle, inverted-oracle)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PoolSource {
    /// Pools already stored with the cases.
    #[default]
    Stored,
    /// Rebuild pools with the rule-based local corruptor.
    Local,
    /// Rebuild pools through the HTTP generator.
    Http,
}

impl std::str::FromStr for PoolSource {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "stored" => Ok(PoolSource::Stored),
            "local" => Ok(PoolSource::Local),
            "http" => Ok(PoolSource::Http),
            _ => Err(format!("unknown pool source {s:?} (stored, local, http)")),
        }
    }
}

/// Everything a run depends on. Loaded from TOML, then overridden by flags.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub run_dir: PathBuf,
    pub study_dir: Option<PathBuf>,
    pub toy_cases: usize,
    pub eval_cases: usize,
    pub eval_negatives: usize,
    pub pool_source: PoolSource,
    pub mask: MaskVariant,
    pub vanilla_orm: bool,
    pub strategy: AggregationStrategy,
    pub scorer: ScorerKind,
    pub oracle_noise: f64,
    pub normalization: ScoreNormalization,
    pub top_k: usize,
    pub generator: HttpGeneratorConfig,
    pub dataset: DatasetConfig,
    pub model: ModelShape,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            run_dir: PathBuf::from("run"),
            study_dir: None,
            toy_cases: 200,
            eval_cases: 50,
            eval_negatives: 7,
            pool_source: PoolSource::Stored,
            mask: MaskVariant::NotesOnly,
            vanilla_orm: false,
            strategy: AggregationStrategy::Product,
            scorer: ScorerKind::Prm,
            oracle_noise: 0.0,
            normalization: ScoreNormalization::Raw,
            top_k: 10,
            generator: HttpGeneratorConfig::default(),
            dataset: DatasetConfig::default(),
            model: ModelShape::default(),
            train: TrainConfig::toy(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, RunError> {
        toml::from_str(text).map_err(|e| RunError::Usage(format!("config: {e}")))
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.run_dir.join(name)
    }

    pub fn study_root(&self) -> PathBuf {
        self.study_dir.clone().unwrap_or_else(|| self.run_dir.join("studies"))
    }

    /// Creates the run directory and writes the resolved configuration.
    pub fn prepare(&self) -> Result<(), RunError> {
        fs::create_dir_all(&self.run_dir)?;
        write(&self.path(RESOLVED_CONFIG_FILE), &serde_json::to_string_pretty(self)?)
    }
}

fn write(path: &Path, text: &str) -> Result<(), RunError> {
    fs::write(path, text).map_err(|e| RunError::Data(format!("{}: {e}", path.display())))
}

fn read(path: &Path) -> Result<String, RunError> {
    fs::read_to_string(path).map_err(|e| RunError::Data(format!("{}: {e}", path.display())))
}

fn read_records<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, RunError> {
    read_jsonl(&read(path)?).map_err(|e| RunError::Data(format!("{}: {e}", path.display())))
}

/// Writes `cases.jsonl` and, when `eval_cases > 0`, a held-out
/// `evalset.jsonl` built from further toy cases.
pub fn gen_toy(cfg: &RunConfig) -> Result<String, RunError> {
    let all = crate::corruption::generate_toy_cases(cfg.seed, cfg.toy_cases + cfg.eval_cases);
    let (train, held_out) = all.split_at(cfg.toy_cases);
    write(&cfg.path(CASES_FILE), &write_jsonl(train)?)?;
    let mut msg = format!("{} toy cases -> {}\n", train.len(), cfg.path(CASES_FILE).display());
    if !held_out.is_empty() {
        let set = build_eval_set(held_out, cfg.eval_negatives, &DatasetConfig { seed: cfg.seed, ..cfg.dataset.clone() })?;
        write(&cfg.path(EVAL_SET_FILE), &write_jsonl(&set)?)?;
        msg.push_str(&format!(
            "{} held-out eval cases (1 gold + {} negatives) -> {}\n",
            set.len(),
            cfg.eval_negatives,
            cfg.path(EVAL_SET_FILE).display()
        ));
    }
    Ok(msg)
}

pub fn build_data(cfg: &RunConfig) -> Result<String, RunError> {
    let mut cases: Vec<Case> = read_records(&cfg.path(CASES_FILE))?;
    match cfg.pool_source {
        PoolSource::Stored => {}
        PoolSource::Local => {
            let gen = LocalCorruptor::new(cfg.seed);
            for c in &mut cases {
                *c = build_case(&c.case_id, &c.dialogue, &c.gold, &gen)?;
            }
        }
        PoolSource::Http => {
            let gen = HttpGenerator::new(cfg.generator.clone()).map_err(|e| RunError::Backend(e.to_string()))?;
            for c in &mut cases {
                *c = build_case(&c.case_id, &c.dialogue, &c.gold, &gen)?;
            }
        }
    }
    let dataset = DatasetConfig {
        seed: cfg.seed,
        ..cfg.dataset.clone()
    };
    let (samples, summary) = build_dataset(&cases, &dataset)?;
    write(&cfg.path(DATASET_FILE), &write_jsonl(&samples)?)?;
    let table = summary.to_table();
    write(&cfg.path("dataset_summary.txt"), &table)?;
    write(&cfg.path("dataset_summary.json"), &serde_json::to_string_pretty(&summary)?)?;
    Ok(format!("{} samples -> {}\n{table}", samples.len(), cfg.path(DATASET_FILE).display()))
}

pub fn build_corpus(cfg: &RunConfig) -> Result<String, RunError> {
    let samples: Vec<SupervisionSample> = read_records(&cfg.path(DATASET_FILE))?;
    let corpus = Corpus::build(&samples, &Vocabulary::toy(), cfg.mask, cfg.vanilla_orm)?;
    write(&cfg.path(CORPUS_FILE), &corpus.to_jsonl())?;
    let tokens: usize = corpus.records.iter().map(|r| r.tokens.len()).sum();
    let masked: usize = corpus.records.iter().map(|r| r.masks.get(cfg.mask).len()).sum();
    Ok(format!(
        "{} records, {tokens} tokens, {masked} in the {} mask{} -> {}\n",
        corpus.records.len(),
        cfg.mask,
        if cfg.vanilla_orm { " (vanilla ORM labels)" } else { "" },
        cfg.path(CORPUS_FILE).display()
    ))
}

pub fn train(cfg: &RunConfig) -> Result<String, RunError> {
    let corpus = Corpus::from_jsonl(&read(&cfg.path(CORPUS_FILE))?)?;
    let pairs = corpus.training_pairs(corpus.header.mask)?;
    let mut model = ToyPrm::init(cfg.model.config(corpus.header.vocab.len()), cfg.model.init_seed)?;
    let report = train_pairs(&mut model, &pairs, &cfg.train)?;
    write(&cfg.path(CHECKPOINT_FILE), &model.to_checkpoint(&corpus.header.vocab)?)?;
    write(&cfg.path("loss.csv"), &report.to_csv())?;
    let last = report.loss_trace.last().copied().unwrap_or(f64::NAN);
    Ok(format!(
        "{} steps on {} records ({} mask), {} parameters, final loss {last:.4}, {:.1}s -> {}\n",
        report.loss_trace.len(),
        pairs.len(),
        corpus.header.mask,
        model.parameter_count(),
        report.elapsed_secs,
        cfg.path(CHECKPOINT_FILE).display()
    ))
}

/// The configured scorer and the vocabulary it reads.
pub fn load_scorer(cfg: &RunConfig) -> Result<(Box<dyn ScorerBackend>, Vocabulary), RunError> {
    Ok(match cfg.scorer {
        ScorerKind::Prm => {
            let (model, vocab) = ToyPrm::from_checkpoint(&read(&cfg.path(CHECKPOINT_FILE))?)?;
            (Box::new(PrmScorer::new(model, cfg.normalization)), vocab)
        }
        ScorerKind::Oracle => (Box::new(OracleScorer::noisy(cfg.oracle_noise, cfg.seed)), Vocabulary::toy()),
        ScorerKind::InvertedOracle => (Box::new(OracleScorer::inverted()), Vocabulary::toy()),
    })
}

/// A candidate note given as text or as a structured note.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NoteInput {
    Text(String),
    Structured(StructuredNote),
}

impl NoteInput {
    pub fn note(&self) -> Result<StructuredNote, RunError> {
        match self {
            NoteInput::Text(t) => parse_note(t).map_err(|e| RunError::Data(e.to_string())),
            NoteInput::Structured(n) => Ok(n.clone()),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub case_id: String,
    pub dialogue: String,
    pub note: NoteInput,
    /// Sampling temperature, read by `temp-hist`.
    #[serde(default)]
    pub temperature: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoredCandidate {
    pub case_id: String,
    pub index: usize,
    pub step_scores: StepScoreVector,
    pub note_score: f64,
    pub strategy: AggregationStrategy,
    pub best_in_case: bool,
}

/// Groups candidate records by case id, keeping first-seen order.
fn group_candidates(records: &[CandidateRecord]) -> Result<Vec<(EvalCase, Vec<Option<f64>>)>, RunError> {
    let mut groups: Vec<(EvalCase, Vec<Option<f64>>)> = Vec::new();
    for r in records {
        let note = r.note.note()?;
        match groups.iter_mut().find(|(c, _)| c.case_id == r.case_id) {
            Some((c, temps)) => {
                c.candidates.push(note);
                temps.push(r.temperature);
            }
            None => groups.push((
                EvalCase {
                    case_id: r.case_id.clone(),
                    dialogue: r.dialogue.clone(),
                    candidates: vec![note],
                    target_index: 0,
                    task: TaskKind::Preference,
                },
                vec![r.temperature],
            )),
        }
    }
    Ok(groups)
}

fn score_groups(cfg: &RunConfig, groups: &[(EvalCase, Vec<Option<f64>>)]) -> Result<Vec<Vec<StepScoreVector>>, RunError> {
    let (scorer, vocab) = load_scorer(cfg)?;
    // Single candidates are legal here; scoring does not need a rival.
    let padded: Vec<EvalCase> = groups
        .iter()
        .map(|(c, _)| {
            let mut c = c.clone();
            if c.candidates.len() == 1 {
                c.candidates.push(c.candidates[0].clone());
            }
            c
        })
        .collect();
    let mut scores = score_cases(&padded, scorer.as_ref(), &vocab)?;
    for ((c, _), s) in groups.iter().zip(&mut scores) {
        s.truncate(c.candidates.len());
    }
    Ok(scores)
}

pub fn score(cfg: &RunConfig, candidates: &Path) -> Result<String, RunError> {
    let records: Vec<CandidateRecord> = read_records(candidates)?;
    let groups = group_candidates(&records)?;
    let scores = score_groups(cfg, &groups)?;
    let mut out = Vec::new();
    let mut table = String::new();
    for ((case, _), s) in groups.iter().zip(scores) {
        let best = best_of_n(&s, cfg.strategy).map_err(|e| RunError::Data(e.to_string()))?;
        for (i, v) in s.into_iter().enumerate() {
            let note_score = aggregate(&v, cfg.strategy).map_err(|e| RunError::Data(e.to_string()))?.value;
            table.push_str(&format!(
                "{:<24} {i:>3} {note_score:>12.5}{}\n",
                case.case_id,
                if i == best { "  *" } else { "" }
            ));
            out.push(ScoredCandidate {
                case_id: case.case_id.clone(),
                index: i,
                step_scores: v,
                note_score,
                strategy: cfg.strategy,
                best_in_case: i == best,
            });
        }
    }
    write(&cfg.path("scores.jsonl"), &write_jsonl(&out)?)?;
    Ok(format!("case                     idx {:>12}\n{table}", cfg.strategy.title()))
}

fn eval_set_path(cfg: &RunConfig, explicit: Option<&Path>) -> PathBuf {
    explicit.map_or_else(|| cfg.path(EVAL_SET_FILE), Path::to_path_buf)
}

pub fn eval(cfg: &RunConfig, eval_set: Option<&Path>) -> Result<String, RunError> {
    let cases: Vec<EvalCase> = read_records(&eval_set_path(cfg, eval_set))?;
    let (scorer, vocab) = load_scorer(cfg)?;
    let report = eval_cases(&cases, scorer.as_ref(), cfg.strategy, &vocab)?;
    write(&cfg.path("eval_report.json"), &serde_json::to_string_pretty(&report)?)?;
    let table = report.to_table();
    write(&cfg.path("eval_report.txt"), &table)?;
    Ok(table)
}

pub fn sweep(cfg: &RunConfig, eval_set: Option<&Path>) -> Result<String, RunError> {
    let cases: Vec<EvalCase> = read_records(&eval_set_path(cfg, eval_set))?;
    let (scorer, vocab) = load_scorer(cfg)?;
    let table = strategy_sweep(&cases, scorer.as_ref(), &vocab)?;
    write(&cfg.path("sweep.json"), &serde_json::to_string_pretty(&table)?)?;
    let text = table.to_table();
    write(&cfg.path("sweep.txt"), &text)?;
    Ok(text)
}

pub fn rouge(cfg: &RunConfig, candidate: &Path, reference: &Path) -> Result<String, RunError> {
    let r = rouge_scores(&read(candidate)?, &read(reference)?);
    let json = serde_json::to_string_pretty(&r)?;
    write(&cfg.path("rouge.json"), &json)?;
    Ok(format!(
        "rouge1 {:.4}\nrougeL {:.4}\nrougeLsum {:.4}\n",
        r.rouge1.fmeasure, r.rouge_l.fmeasure, r.rouge_lsum.fmeasure
    ))
}

pub fn temp_hist(cfg: &RunConfig, samples: &Path) -> Result<String, RunError> {
    let records: Vec<CandidateRecord> = read_records(samples)?;
    let groups = group_candidates(&records)?;
    let scores = score_groups(cfg, &groups)?;
    let mut cases = Vec::with_capacity(groups.len());
    for ((case, temps), s) in groups.iter().zip(scores) {
        let mut rows = Vec::with_capacity(s.len());
        for (t, v) in temps.iter().zip(s) {
            let t = t.ok_or_else(|| RunError::Data(format!("case {}: sample without temperature", case.case_id)))?;
            rows.push((t, v));
        }
        cases.push(rows);
    }
    let bins = temperature_histogram(&cases, cfg.top_k, cfg.strategy, &default_temperature_bins())?;
    write(&cfg.path("temp_hist.json"), &serde_json::to_string_pretty(&bins)?)?;
    let mut text = format!("temperature  top-{} count\n", cfg.top_k);
    for b in &bins {
        text.push_str(&format!("{:>11.1}  {:>5}\n", b.temperature, b.count));
    }
    write(&cfg.path("temp_hist.txt"), &text)?;
    Ok(text)
}

pub fn report_study(cfg: &RunConfig, study_id: &str, partial: bool) -> Result<String, RunError> {
    let study = crate::study::Study::read_only(&cfg.study_root().join(study_id))?;
    let rates = study.win_rates(partial)?;
    write(&cfg.path(&format!("study_{study_id}.json")), &serde_json::to_string_pretty(&rates)?)?;
    Ok(rates.to_table())
}
