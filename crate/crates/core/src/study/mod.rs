//! Blinded pairwise reader study: seeded assignments, an append-only vote
//! log, and majority-vote win rates.
//!
//! On-disk layout of a study directory:
//!
//! ```text
//! study.json      config, seed and every assignment (written once)
//! votes.jsonl     one vote per line, fsynced before acknowledgment
//! snapshot.json   vote count and win rates, rewritten every SNAPSHOT_EVERY votes
//! study.lock      held with an OS file lock while a process serves the study
//! ```

pub mod server;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corruption::case_seed;

pub const MIN_READERS: usize = 3;
pub const SNAPSHOT_EVERY: usize = 50;

const STUDY_FILE: &str = "study.json";
const LOG_FILE: &str = "votes.jsonl";
const SNAPSHOT_FILE: &str = "snapshot.json";
const LOCK_FILE: &str = "study.lock";

#[derive(Debug, thiserror::Error)]
pub enum StudyError {
    #[error("invalid study config: {0}")]
    InvalidConfig(String),
    #[error("case {case_id} has no note from arm {arm}")]
    MissingNote { case_id: String, arm: String },
    #[error("unknown study {0}")]
    UnknownStudy(String),
    #[error("study {0} already exists")]
    StudyExists(String),
    #[error("unknown reader {0}")]
    UnknownReader(String),
    #[error("no pending comparisons for reader {0}")]
    NoPending(String),
    #[error("pair {pair_id} is not assigned to reader {reader_id}")]
    UnknownPair { reader_id: String, pair_id: String },
    #[error("reader {reader_id} already voted on pair {pair_id}")]
    DuplicateVote { reader_id: String, pair_id: String },
    #[error("{missing} of {cases} cases have fewer than {min} votes")]
    IncompleteStudy { missing: usize, cases: usize, min: usize },
    #[error("study {0} is locked by another process")]
    Locked(String),
    #[error("corrupt study log: {0}")]
    CorruptLog(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Arm {
    pub name: String,
    /// Free-form provenance such as checkpoint accuracies.
    #[serde(default)]
    pub metadata: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyCase {
    pub case_id: String,
    pub dialogue: String,
    /// Note text keyed by arm name.
    pub notes: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub study_id: String,
    pub arms: Vec<Arm>,
    pub cases: Vec<StudyCase>,
    pub readers: Vec<String>,
    #[serde(default = "default_min_readers")]
    pub min_readers_per_comparison: usize,
}

fn default_min_readers() -> usize {
    MIN_READERS
}

impl StudyConfig {
    pub fn validate(&self) -> Result<(), StudyError> {
        let bad = |m: String| Err(StudyError::InvalidConfig(m));
        let id_ok = !self.study_id.is_empty()
            && self.study_id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
        if !id_ok {
            return bad(format!("study id {:?} must be non-empty [A-Za-z0-9_-]", self.study_id));
        }
        if self.arms.len() != 2 {
            return bad(format!("a study compares exactly two arms, got {}", self.arms.len()));
        }
        if self.arms[0].name == self.arms[1].name || self.arms.iter().any(|a| a.name.is_empty()) {
            return bad("arm names must be distinct and non-empty".into());
        }
        if self.min_readers_per_comparison < MIN_READERS {
            return bad(format!("at least {MIN_READERS} readers per comparison are required"));
        }
        let readers: HashSet<&String> = self.readers.iter().collect();
        if readers.len() != self.readers.len() {
            return bad("duplicate reader ids".into());
        }
        if self.readers.len() < self.min_readers_per_comparison {
            return bad(format!(
                "{} readers cannot cover {} votes per comparison",
                self.readers.len(),
                self.min_readers_per_comparison
            ));
        }
        if self.cases.is_empty() {
            return bad("no cases".into());
        }
        let ids: HashSet<&String> = self.cases.iter().map(|c| &c.case_id).collect();
        if ids.len() != self.cases.len() {
            return bad("duplicate case ids".into());
        }
        for case in &self.cases {
            for arm in &self.arms {
                if !case.notes.contains_key(&arm.name) {
                    return Err(StudyError::MissingNote {
                        case_id: case.case_id.clone(),
                        arm: arm.name.clone(),
                    });
                }
            }
        }
        Ok(())
    }
}

/// One (case, reader) comparison. `left_arm` indexes `StudyConfig::arms`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub reader_id: String,
    pub case_id: String,
    pub pair_id: String,
    pub left_arm: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Choice {
    FirstShown,
    SecondShown,
    Tie,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vote {
    pub reader_id: String,
    pub case_id: String,
    pub pair_id: String,
    pub choice: Choice,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comment: Option<String>,
    /// Milliseconds since the Unix epoch; filled in on receipt when absent.
    #[serde(default)]
    pub timestamp: Option<u64>,
}

/// What a reader is shown. Carries no arm identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlindedPair {
    pub pair_id: String,
    pub case_id: String,
    pub dialogue: String,
    pub note_left: String,
    pub note_right: String,
    pub completed: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteAck {
    pub pair_id: String,
    pub remaining: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "arm", rename_all = "snake_case")]
pub enum Outcome {
    Majority(usize),
    NoMajority,
}

/// Majority over non-tie votes: the arm with strictly more votes wins.
pub fn majority(votes_for: [usize; 2]) -> Outcome {
    match votes_for[0].cmp(&votes_for[1]) {
        std::cmp::Ordering::Greater => Outcome::Majority(0),
        std::cmp::Ordering::Less => Outcome::Majority(1),
        std::cmp::Ordering::Equal => Outcome::NoMajority,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    pub case_id: String,
    pub votes_for: [usize; 2],
    pub ties: usize,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WinRates {
    pub study_id: String,
    pub arms: [String; 2],
    /// False when some case is below the reader quorum.
    pub complete: bool,
    pub cases: Vec<CaseResult>,
    pub majority_wins: [usize; 2],
    pub decided_cases: usize,
    pub no_majority_cases: usize,
    /// Majority wins over cases with a majority; zero when none is decided.
    pub win_rate: [f64; 2],
}

impl WinRates {
    pub fn to_table(&self) -> String {
        let mut out = format!(
            "study {}{}\n{:<24} {:>6} {:>6} {:>5}  outcome\n",
            self.study_id,
            if self.complete { "" } else { " (partial)" },
            "case",
            &self.arms[0],
            &self.arms[1],
            "tie"
        );
        for c in &self.cases {
            let o = match c.outcome {
                Outcome::Majority(a) => self.arms[a].clone(),
                Outcome::NoMajority => "no majority".into(),
            };
            out.push_str(&format!(
                "{:<24} {:>6} {:>6} {:>5}  {o}\n",
                c.case_id, c.votes_for[0], c.votes_for[1], c.ties
            ));
        }
        out.push_str(&format!(
            "win rate: {} {:.3}, {} {:.3} over {} decided cases ({} without majority)\n",
            self.arms[0], self.win_rate[0], self.arms[1], self.win_rate[1], self.decided_cases, self.no_majority_cases
        ));
        out
    }
}

/// Win rates as a pure function of the config, assignments and vote log.
pub fn compute_win_rates(
    config: &StudyConfig,
    assignments: &[Assignment],
    votes: &[Vote],
    partial: bool,
) -> Result<WinRates, StudyError> {
    let by_pair: HashMap<&str, &Assignment> = assignments.iter().map(|a| (a.pair_id.as_str(), a)).collect();
    let mut tallies: BTreeMap<&str, ([usize; 2], usize)> = BTreeMap::new();
    for v in votes {
        let a = by_pair.get(v.pair_id.as_str()).ok_or_else(|| StudyError::UnknownPair {
            reader_id: v.reader_id.clone(),
            pair_id: v.pair_id.clone(),
        })?;
        let entry = tallies.entry(a.case_id.as_str()).or_default();
        match v.choice {
            Choice::FirstShown => entry.0[a.left_arm] += 1,
            Choice::SecondShown => entry.0[1 - a.left_arm] += 1,
            Choice::Tie => entry.1 += 1,
        }
    }
    let mut cases = Vec::with_capacity(config.cases.len());
    let mut missing = 0;
    for case in &config.cases {
        let (votes_for, ties) = tallies.get(case.case_id.as_str()).copied().unwrap_or_default();
        if votes_for[0] + votes_for[1] + ties < config.min_readers_per_comparison {
            missing += 1;
        }
        cases.push(CaseResult {
            case_id: case.case_id.clone(),
            votes_for,
            ties,
            outcome: majority(votes_for),
        });
    }
    if missing > 0 && !partial {
        return Err(StudyError::IncompleteStudy {
            missing,
            cases: config.cases.len(),
            min: config.min_readers_per_comparison,
        });
    }
    let mut majority_wins = [0, 0];
    for c in &cases {
        if let Outcome::Majority(a) = c.outcome {
            majority_wins[a] += 1;
        }
    }
    let decided = majority_wins[0] + majority_wins[1];
    let rate = |w: usize| if decided == 0 { 0.0 } else { w as f64 / decided as f64 };
    Ok(WinRates {
        study_id: config.study_id.clone(),
        arms: [config.arms[0].name.clone(), config.arms[1].name.clone()],
        complete: missing == 0,
        no_majority_cases: cases.len() - decided,
        cases,
        majority_wins,
        decided_cases: decided,
        win_rate: [rate(majority_wins[0]), rate(majority_wins[1])],
    })
}

fn pair_id(study_id: &str, seed: u64, case_id: &str, reader_id: &str) -> String {
    let mut h = Sha256::new();
    h.update(study_id.as_bytes());
    h.update([0]);
    h.update(seed.to_le_bytes());
    h.update(case_id.as_bytes());
    h.update([0]);
    h.update(reader_id.as_bytes());
    format!("p{}", hex::encode(&h.finalize()[..10]))
}

/// Every (case, reader) comparison with seeded left/right placement. Each
/// reader sees the cases in an independently shuffled order.
pub fn make_assignments(config: &StudyConfig, seed: u64) -> Vec<Assignment> {
    let mut rng = ChaCha8Rng::seed_from_u64(case_seed(seed, &config.study_id));
    let mut out = Vec::with_capacity(config.readers.len() * config.cases.len());
    for reader in &config.readers {
        let mut order: Vec<&StudyCase> = config.cases.iter().collect();
        order.shuffle(&mut rng);
        for case in order {
            out.push(Assignment {
                reader_id: reader.clone(),
                case_id: case.case_id.clone(),
                pair_id: pair_id(&config.study_id, seed, &case.case_id, reader),
                left_arm: usize::from(rng.random_bool(0.5)),
            });
        }
    }
    out
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct StudyFile {
    format: String,
    seed: u64,
    config: StudyConfig,
    assignments: Vec<Assignment>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Snapshot {
    votes: usize,
    log_bytes: u64,
    win_rates: WinRates,
}

struct Persistence {
    dir: PathBuf,
    log: File,
    _lock: File,
}

pub struct Study {
    pub config: StudyConfig,
    pub seed: u64,
    assignments: Vec<Assignment>,
    votes: Vec<Vote>,
    voted: HashSet<String>,
    persistence: Option<Persistence>,
}

impl std::fmt::Debug for Study {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Study")
            .field("study_id", &self.config.study_id)
            .field("votes", &self.votes.len())
            .finish()
    }
}

fn now_millis() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
}

fn lock_dir(dir: &Path, study_id: &str) -> Result<File, StudyError> {
    let f = OpenOptions::new().create(true).truncate(false).write(true).open(dir.join(LOCK_FILE))?;
    match f.try_lock() {
        Ok(()) => Ok(f),
        Err(fs::TryLockError::WouldBlock) => Err(StudyError::Locked(study_id.to_string())),
        Err(fs::TryLockError::Error(e)) => Err(e.into()),
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StudyError> {
    let tmp = path.with_extension("tmp");
    let mut f = File::create(&tmp)?;
    f.write_all(bytes)?;
    f.sync_all()?;
    fs::rename(&tmp, path)?;
    Ok(())
}

impl Study {
    /// In-memory study.
    pub fn create(config: StudyConfig, seed: u64) -> Result<Study, StudyError> {
        config.validate()?;
        let assignments = make_assignments(&config, seed);
        Ok(Study {
            config,
            seed,
            assignments,
            votes: Vec::new(),
            voted: HashSet::new(),
            persistence: None,
        })
    }

    /// Creates `dir` and persists the assignments before returning.
    pub fn create_in(dir: &Path, config: StudyConfig, seed: u64) -> Result<Study, StudyError> {
        let mut study = Study::create(config, seed)?;
        if dir.join(STUDY_FILE).exists() {
            return Err(StudyError::StudyExists(study.config.study_id.clone()));
        }
        fs::create_dir_all(dir)?;
        let lock = lock_dir(dir, &study.config.study_id)?;
        let file = StudyFile {
            format: "clinic-prm-study".into(),
            seed,
            config: study.config.clone(),
            assignments: study.assignments.clone(),
        };
        let json = serde_json::to_vec_pretty(&file).map_err(|e| StudyError::CorruptLog(e.to_string()))?;
        write_atomic(&dir.join(STUDY_FILE), &json)?;
        let log = OpenOptions::new().create(true).append(true).open(dir.join(LOG_FILE))?;
        log.sync_all()?;
        study.persistence = Some(Persistence {
            dir: dir.to_path_buf(),
            log,
            _lock: lock,
        });
        Ok(study)
    }

    /// Reopens a persisted study by replaying its vote log. A trailing
    /// partial line left by a crash mid-append was never acknowledged and
    /// is cut off.
    pub fn open(dir: &Path) -> Result<Study, StudyError> {
        Study::load(dir, true)
    }

    /// Replays the log without taking the lock or repairing the file, for
    /// reporting while a server holds the study.
    pub fn read_only(dir: &Path) -> Result<Study, StudyError> {
        Study::load(dir, false)
    }

    fn load(dir: &Path, writable: bool) -> Result<Study, StudyError> {
        let text = fs::read_to_string(dir.join(STUDY_FILE))?;
        let file: StudyFile = serde_json::from_str(&text).map_err(|e| StudyError::CorruptLog(e.to_string()))?;
        let lock = if writable { Some(lock_dir(dir, &file.config.study_id)?) } else { None };
        let mut raw = String::new();
        let log = if writable {
            let mut log = OpenOptions::new().create(true).read(true).append(true).open(dir.join(LOG_FILE))?;
            log.seek(SeekFrom::Start(0))?;
            log.read_to_string(&mut raw)?;
            Some(log)
        } else {
            raw = fs::read_to_string(dir.join(LOG_FILE)).or_else(|e| match e.kind() {
                std::io::ErrorKind::NotFound => Ok(String::new()),
                _ => Err(e),
            })?;
            None
        };
        let complete = raw.rfind('\n').map_or(0, |i| i + 1);
        if let Some(log) = &log {
            if complete < raw.len() {
                log.set_len(complete as u64)?;
                log.sync_all()?;
            }
        }
        let votes: Vec<Vote> = raw[..complete]
            .lines()
            .enumerate()
            .map(|(i, l)| serde_json::from_str(l).map_err(|e| StudyError::CorruptLog(format!("line {}: {e}", i + 1))))
            .collect::<Result<_, _>>()?;
        let mut study = Study {
            config: file.config,
            seed: file.seed,
            assignments: file.assignments,
            votes: Vec::new(),
            voted: HashSet::new(),
            persistence: None,
        };
        for v in votes {
            study.check_vote(&v)?;
            study.voted.insert(v.pair_id.clone());
            study.votes.push(v);
        }
        if let Ok(text) = fs::read_to_string(dir.join(SNAPSHOT_FILE)) {
            let snap: Snapshot = serde_json::from_str(&text).map_err(|e| StudyError::CorruptLog(e.to_string()))?;
            if snap.votes > study.votes.len() {
                return Err(StudyError::CorruptLog(format!(
                    "snapshot covers {} votes, log has {}",
                    snap.votes,
                    study.votes.len()
                )));
            }
            let replayed = compute_win_rates(&study.config, &study.assignments, &study.votes[..snap.votes], true)?;
            if replayed != snap.win_rates {
                return Err(StudyError::CorruptLog("log prefix disagrees with snapshot".into()));
            }
        }
        if let (Some(log), Some(lock)) = (log, lock) {
            study.persistence = Some(Persistence {
                dir: dir.to_path_buf(),
                log,
                _lock: lock,
            });
        }
        Ok(study)
    }

    pub fn study_id(&self) -> &str {
        &self.config.study_id
    }

    pub fn assignments(&self) -> &[Assignment] {
        &self.assignments
    }

    pub fn votes(&self) -> &[Vote] {
        &self.votes
    }

    fn reader_assignments<'a>(&'a self, reader_id: &'a str) -> Result<impl Iterator<Item = &'a Assignment> + 'a, StudyError> {
        if !self.config.readers.iter().any(|r| r == reader_id) {
            return Err(StudyError::UnknownReader(reader_id.to_string()));
        }
        Ok(self.assignments.iter().filter(move |a| a.reader_id == reader_id))
    }

    pub fn pending(&self, reader_id: &str) -> Result<usize, StudyError> {
        Ok(self.reader_assignments(reader_id)?.filter(|a| !self.voted.contains(&a.pair_id)).count())
    }

    /// The reader's first unvoted comparison. Repeated calls return the
    /// same pair until a vote on it arrives.
    pub fn next_pair(&self, reader_id: &str) -> Result<BlindedPair, StudyError> {
        let mine: Vec<&Assignment> = self.reader_assignments(reader_id)?.collect();
        let total = mine.len();
        let completed = mine.iter().filter(|a| self.voted.contains(&a.pair_id)).count();
        let a = mine
            .into_iter()
            .find(|a| !self.voted.contains(&a.pair_id))
            .ok_or_else(|| StudyError::NoPending(reader_id.to_string()))?;
        let case = self
            .config
            .cases
            .iter()
            .find(|c| c.case_id == a.case_id)
            .expect("assignments reference configured cases");
        let note = |arm: usize| case.notes[&self.config.arms[arm].name].clone();
        Ok(BlindedPair {
            pair_id: a.pair_id.clone(),
            case_id: a.case_id.clone(),
            dialogue: case.dialogue.clone(),
            note_left: note(a.left_arm),
            note_right: note(1 - a.left_arm),
            completed,
            total,
        })
    }

    fn check_vote(&self, vote: &Vote) -> Result<(), StudyError> {
        let unknown = || StudyError::UnknownPair {
            reader_id: vote.reader_id.clone(),
            pair_id: vote.pair_id.clone(),
        };
        let a = self
            .reader_assignments(&vote.reader_id)?
            .find(|a| a.pair_id == vote.pair_id)
            .ok_or_else(unknown)?;
        if a.case_id != vote.case_id {
            return Err(unknown());
        }
        if self.voted.contains(&vote.pair_id) {
            return Err(StudyError::DuplicateVote {
                reader_id: vote.reader_id.clone(),
                pair_id: vote.pair_id.clone(),
            });
        }
        Ok(())
    }

    /// Validates, appends and fsyncs the vote, then updates memory.
    pub fn submit_vote(&mut self, mut vote: Vote) -> Result<VoteAck, StudyError> {
        self.check_vote(&vote)?;
        vote.timestamp.get_or_insert_with(now_millis);
        if let Some(p) = &mut self.persistence {
            let mut line = serde_json::to_string(&vote).map_err(|e| StudyError::CorruptLog(e.to_string()))?;
            line.push('\n');
            p.log.write_all(line.as_bytes())?;
            p.log.sync_data()?;
        }
        self.voted.insert(vote.pair_id.clone());
        let reader = vote.reader_id.clone();
        let pair_id = vote.pair_id.clone();
        self.votes.push(vote);
        if self.votes.len() % SNAPSHOT_EVERY == 0 {
            self.snapshot()?;
        }
        Ok(VoteAck {
            pair_id,
            remaining: self.pending(&reader)?,
        })
    }

    /// Rewrites the snapshot for the current log. No-op for in-memory studies.
    pub fn snapshot(&mut self) -> Result<(), StudyError> {
        let Some(p) = &self.persistence else {
            return Ok(());
        };
        let snap = Snapshot {
            votes: self.votes.len(),
            log_bytes: p.log.metadata()?.len(),
            win_rates: compute_win_rates(&self.config, &self.assignments, &self.votes, true)?,
        };
        let json = serde_json::to_vec_pretty(&snap).map_err(|e| StudyError::CorruptLog(e.to_string()))?;
        write_atomic(&p.dir.join(SNAPSHOT_FILE), &json)
    }

    pub fn win_rates(&self, partial: bool) -> Result<WinRates, StudyError> {
        compute_win_rates(&self.config, &self.assignments, &self.votes, partial)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn config(cases: usize, readers: usize) -> StudyConfig {
        StudyConfig {
            study_id: "s1".into(),
            arms: vec![
                Arm {
                    name: "ARM_ALPHA".into(),
                    metadata: serde_json::Value::Null,
                },
                Arm {
                    name: "ARM_BETA".into(),
                    metadata: serde_json::Value::Null,
                },
            ],
            cases: (0..cases)
                .map(|i| StudyCase {
                    case_id: format!("case-{i:03}"),
                    dialogue: format!("dialogue {i}"),
                    notes: BTreeMap::from([
                        ("ARM_ALPHA".to_string(), format!("note a{i}")),
                        ("ARM_BETA".to_string(), format!("note b{i}")),
                    ]),
                })
                .collect(),
            readers: (0..readers).map(|r| format!("reader-{r}")).collect(),
            min_readers_per_comparison: 3,
        }
    }

    fn vote(s: &Study, reader: &str, choice: Choice) -> Vote {
        let p = s.next_pair(reader).unwrap();
        Vote {
            reader_id: reader.into(),
            case_id: p.case_id,
            pair_id: p.pair_id,
            choice,
            comment: None,
            timestamp: None,
        }
    }

    #[test]
    fn assignment_counts_and_seeding() {
        let s = Study::create(config(40, 3), 1).unwrap();
        assert_eq!(s.assignments().len(), 120);
        let pairs: HashSet<(&str, &str)> =
            s.assignments().iter().map(|a| (a.reader_id.as_str(), a.case_id.as_str())).collect();
        assert_eq!(pairs.len(), 120);
        assert_eq!(s.assignments(), Study::create(config(40, 3), 1).unwrap().assignments());
        assert_ne!(s.assignments(), Study::create(config(40, 3), 2).unwrap().assignments());
    }

    #[test]
    fn config_rules() {
        let mut c = config(2, 3);
        c.min_readers_per_comparison = 2;
        assert!(matches!(Study::create(c, 0), Err(StudyError::InvalidConfig(_))));
        assert!(matches!(Study::create(config(2, 2), 0), Err(StudyError::InvalidConfig(_))));
        let mut c = config(2, 3);
        c.cases[1].notes.remove("ARM_BETA");
        assert!(matches!(Study::create(c, 0), Err(StudyError::MissingNote { .. })));
    }

    #[test]
    fn serving_and_voting() {
        let mut s = Study::create(config(2, 3), 4).unwrap();
        let a = s.next_pair("reader-0").unwrap();
        assert_eq!(a, s.next_pair("reader-0").unwrap());
        assert_eq!((a.completed, a.total), (0, 2));
        let v = vote(&s, "reader-0", Choice::Tie);
        assert_eq!(s.submit_vote(v.clone()).unwrap().remaining, 1);
        assert!(matches!(s.submit_vote(v), Err(StudyError::DuplicateVote { .. })));
        assert_ne!(s.next_pair("reader-0").unwrap().pair_id, a.pair_id);
        let v = vote(&s, "reader-0", Choice::Tie);
        s.submit_vote(v).unwrap();
        assert!(matches!(s.next_pair("reader-0"), Err(StudyError::NoPending(_))));
        assert!(matches!(s.next_pair("nobody"), Err(StudyError::UnknownReader(_))));
        let mut stray = vote(&s, "reader-1", Choice::Tie);
        stray.pair_id = a.pair_id;
        assert!(matches!(s.submit_vote(stray), Err(StudyError::UnknownPair { .. })));
    }

    #[test]
    fn choices_resolve_through_placement() {
        let mut s = Study::create(config(1, 3), 9).unwrap();
        // Everyone picks whichever side shows ARM_BETA.
        for r in ["reader-0", "reader-1", "reader-2"] {
            let p = s.next_pair(r).unwrap();
            let choice = if p.note_left.starts_with("note b") { Choice::FirstShown } else { Choice::SecondShown };
            let v = vote(&s, r, choice);
            s.submit_vote(v).unwrap();
        }
        let w = s.win_rates(false).unwrap();
        assert_eq!(w.cases[0].votes_for, [0, 3]);
        assert_eq!(w.win_rate, [0.0, 1.0]);
    }

    #[test]
    fn incomplete_studies_need_the_partial_flag() {
        let mut s = Study::create(config(2, 3), 0).unwrap();
        let v = vote(&s, "reader-0", Choice::FirstShown);
        s.submit_vote(v).unwrap();
        assert!(matches!(s.win_rates(false), Err(StudyError::IncompleteStudy { missing: 2, .. })));
        assert!(!s.win_rates(true).unwrap().complete);
    }

    #[test]
    fn persisted_study_replays_and_cuts_torn_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s1");
        let mut s = Study::create_in(&path, config(3, 3), 5).unwrap();
        assert!(matches!(Study::open(&path), Err(StudyError::Locked(_))));
        assert_eq!(Study::read_only(&path).unwrap().votes().len(), 0);
        for r in ["reader-0", "reader-1"] {
            let v = vote(&s, r, Choice::FirstShown);
            s.submit_vote(v).unwrap();
        }
        let before = s.win_rates(true).unwrap();
        drop(s);
        let mut f = OpenOptions::new().append(true).open(path.join(LOG_FILE)).unwrap();
        f.write_all(b"{\"reader_id\":\"reader-2\",\"ca").unwrap();
        drop(f);
        let s = Study::open(&path).unwrap();
        assert_eq!(s.votes().len(), 2);
        assert_eq!(s.win_rates(true).unwrap(), before);
        assert!(fs::read_to_string(path.join(LOG_FILE)).unwrap().ends_with('\n'));
        drop(s);
        assert!(matches!(Study::create_in(&path, config(3, 3), 5), Err(StudyError::StudyExists(_))));
    }
}
