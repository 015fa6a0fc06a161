use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ControllerError;
use crate::evaluator::{AlignmentBreakdown, DiscrepancyReport, DEFAULT_THRESHOLD};
use crate::llm::LlmMode;
use crate::sandbox::{ErrorPhase, ErrorReport, ExecutionLimits};
use crate::spec_gen::ReferenceSource;

pub const LEDGER_FILE: &str = "run.json";
pub const LEDGER_VERSION: u32 = 1;
pub const DEFAULT_MAX_ATTEMPTS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub threshold: u8,
    pub max_attempts: usize,
    pub limits: ExecutionLimits,
    pub judge_enabled: bool,
    pub llm_mode: LlmMode,
    #[serde(default)]
    pub strict_replay: bool,
    /// Replay source or record destination. Record mode defaults to
    /// `transcript.jsonl` in the run directory.
    #[serde(default)]
    pub transcript: Option<PathBuf>,
    pub harness: Vec<String>,
    #[serde(default)]
    pub alias_file: Option<PathBuf>,
    /// Where the ledger lives; not stored in it.
    #[serde(skip)]
    pub out_dir: PathBuf,
}

impl RunConfig {
    pub fn new(out_dir: impl Into<PathBuf>, harness: Vec<String>, llm_mode: LlmMode) -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD,
            max_attempts: DEFAULT_MAX_ATTEMPTS,
            limits: ExecutionLimits::default(),
            judge_enabled: false,
            llm_mode,
            strict_replay: false,
            transcript: None,
            harness,
            alias_file: None,
            out_dir: out_dir.into(),
        }
    }

    pub fn validate(&self) -> Result<(), ControllerError> {
        let bad = |m: &str| Err(ControllerError::InvalidConfig(m.to_string()));
        if self.threshold == 0 || self.threshold > 100 {
            return bad("threshold must be in 1..=100");
        }
        if self.max_attempts == 0 {
            return bad("max_attempts must be at least 1");
        }
        if self.harness.is_empty() {
            return bad("harness command is empty");
        }
        if self.llm_mode == LlmMode::Replay && self.transcript.is_none() {
            return bad("replay mode needs a transcript");
        }
        self.limits.validate().or_else(|_| bad("execution limits must be positive"))
    }

    pub fn transcript_path(&self) -> Option<PathBuf> {
        match (&self.transcript, self.llm_mode) {
            (Some(p), _) => Some(p.clone()),
            (None, LlmMode::Record) => Some(self.out_dir.join("transcript.jsonl")),
            (None, _) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunInputs {
    pub paper: PathBuf,
    pub codebook: PathBuf,
    pub data: PathBuf,
    pub target: String,
    #[serde(default)]
    pub reference: Option<PathBuf>,
    #[serde(default)]
    pub paper_document: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Success,
    Exhausted,
    Aborted,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub trials: usize,
    pub errors: usize,
    pub completed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum AttemptOutcome {
    Scored {
        breakdown: AlignmentBreakdown,
        report: DiscrepancyReport,
    },
    Failed {
        error: ErrorReport,
    },
}

/// One loop iteration as kept in memory and reconstructed on resume.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attempt {
    pub index: usize,
    pub prompt_digest: String,
    pub template_sha256: String,
    pub source: Option<String>,
    pub outcome: AttemptOutcome,
    pub duration_seconds: f64,
    /// Relative to the attempt directory.
    pub figure_files: Vec<PathBuf>,
}

impl Attempt {
    pub fn score(&self) -> Option<u8> {
        match &self.outcome {
            AttemptOutcome::Scored { breakdown, .. } => Some(breakdown.score),
            AttemptOutcome::Failed { .. } => None,
        }
    }
}

/// The per-attempt line stored in the ledger; full artifacts live in the
/// attempt directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptRecord {
    pub index: usize,
    pub dir: String,
    pub prompt_digest: String,
    pub template_sha256: String,
    pub source_sha256: Option<String>,
    pub score: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_phase: Option<ErrorPhase>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exception_type: Option<String>,
    pub duration_seconds: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub figure_files: Vec<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BestTracker {
    pub best_index: Option<usize>,
    pub best_score: Option<u8>,
    pub best_source: Option<String>,
    pub best_report: Option<DiscrepancyReport>,
}

/// Replaces the tracker only on a strictly higher score; ties keep the
/// earlier attempt and failed attempts never count.
pub fn update_best(tracker: &BestTracker, attempt: &Attempt) -> BestTracker {
    match (&attempt.outcome, tracker.best_score) {
        (AttemptOutcome::Scored { breakdown, report }, best) if best.is_none_or(|b| breakdown.score > b) => BestTracker {
            best_index: Some(attempt.index),
            best_score: Some(breakdown.score),
            best_source: attempt.source.clone(),
            best_report: Some(report.clone()),
        },
        _ => tracker.clone(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLedger {
    pub version: u32,
    pub config: RunConfig,
    pub inputs: RunInputs,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_source: Option<ReferenceSource>,
    pub attempts: Vec<AttemptRecord>,
    pub best: BestTracker,
    pub status: RunStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abort_cause: Option<String>,
    pub counters: Counters,
    /// Model calls consumed so far; a resumed replay starts here.
    pub llm_calls: usize,
}

impl RunLedger {
    pub fn new(config: RunConfig, inputs: RunInputs) -> Self {
        Self {
            version: LEDGER_VERSION,
            config,
            inputs,
            reference_source: None,
            attempts: Vec::new(),
            best: BestTracker::default(),
            status: RunStatus::Running,
            abort_cause: None,
            counters: Counters::default(),
            llm_calls: 0,
        }
    }

    pub fn record(&mut self, attempt: &Attempt, dir: String) {
        let (error_phase, exception_type) = match &attempt.outcome {
            AttemptOutcome::Failed { error } => (Some(error.phase), Some(error.exception_type.clone())),
            AttemptOutcome::Scored { .. } => (None, None),
        };
        self.attempts.push(AttemptRecord {
            index: attempt.index,
            dir,
            prompt_digest: attempt.prompt_digest.clone(),
            template_sha256: attempt.template_sha256.clone(),
            source_sha256: attempt.source.as_deref().map(super::sha256_hex),
            score: attempt.score(),
            error_phase,
            exception_type,
            duration_seconds: attempt.duration_seconds,
            figure_files: attempt.figure_files.clone(),
        });
        self.counters.trials += 1;
        if attempt.score().is_some() {
            self.counters.completed += 1;
        } else {
            self.counters.errors += 1;
        }
        self.best = update_best(&self.best, attempt);
    }

    pub fn abort(&mut self, cause: impl std::fmt::Display) {
        self.status = RunStatus::Aborted;
        self.abort_cause = Some(cause.to_string());
    }

    /// Copy with all wall-clock durations zeroed, for comparing runs.
    pub fn without_durations(&self) -> Self {
        let mut l = self.clone();
        for a in &mut l.attempts {
            a.duration_seconds = 0.0;
        }
        l
    }

    pub fn load(out_dir: &Path) -> Result<Self, ControllerError> {
        let path = out_dir.join(LEDGER_FILE);
        let bytes = std::fs::read(&path)
            .map_err(|e| ControllerError::CorruptLedger(format!("{}: {e}", path.display())))?;
        let mut ledger: RunLedger = serde_json::from_slice(&bytes)
            .map_err(|e| ControllerError::CorruptLedger(format!("{}: {e}", path.display())))?;
        if ledger.version != LEDGER_VERSION {
            return Err(ControllerError::CorruptLedger(format!(
                "unsupported ledger version {}",
                ledger.version
            )));
        }
        let c = ledger.counters;
        if c.trials != c.errors + c.completed || c.trials != ledger.attempts.len() {
            return Err(ControllerError::CorruptLedger("counters disagree with attempts".into()));
        }
        ledger.config.out_dir = out_dir.to_path_buf();
        Ok(ledger)
    }

    /// Write-then-rename so a crash never leaves a half-written ledger.
    pub fn save(&self) -> Result<(), ControllerError> {
        let dir = &self.config.out_dir;
        let tmp = dir.join(format!("{LEDGER_FILE}.tmp"));
        let mut bytes = serde_json::to_vec_pretty(self).expect("ledger serializes");
        bytes.push(b'\n');
        std::fs::write(&tmp, bytes).map_err(|e| ControllerError::io(&tmp, e))?;
        std::fs::rename(&tmp, dir.join(LEDGER_FILE)).map_err(|e| ControllerError::io(&tmp, e))
    }
}
