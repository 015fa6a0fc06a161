//! The outer loop: Step 1 once, then generate, execute, score and revise
//! until the score reaches the threshold or attempts run out. Every attempt
//! is persisted before the ledger is updated, so a run can be resumed.
//!
//! Run directory:
//!
//! ```text
//! run.json  summary.md  instructions.md  reference.json
//! attempts/NNN/  prompt.txt response.txt code.src
//!                output.json | error.json  score.json report.md report.json
//!                figures/  work/
//! ```

mod ledger;

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::canonical::{serialize, AliasTable, CanonicalResult};
use crate::code_loop::{build_codegen_prompt, extract_code, AttemptContext, Feedback, PriorAttempt};
use crate::evaluator::{compose_discrepancy, judge, score_with, AlignmentBreakdown, DiscrepancyReport, ScoreConfig};
use crate::ingest::{load_bundle, load_reference, preview_dataset, DataPreview, PaperBundle, DEFAULT_PREVIEW_ROWS};
use crate::llm::{ChatProvider, GatewayError, LlmMode, LlmSession, RetryPolicy};
use crate::prompts;
use crate::sandbox::{CancelToken, ErrorPhase, ErrorReport, RunOutput, Sandbox, SandboxError};
use crate::spec_gen::{self, InstructionSummary, ReferenceSource, TargetSummary};

pub use ledger::{
    update_best, Attempt, AttemptOutcome, AttemptRecord, BestTracker, Counters, RunConfig, RunInputs, RunLedger,
    RunStatus, DEFAULT_MAX_ATTEMPTS, LEDGER_FILE,
};

pub const ATTEMPTS_DIR: &str = "attempts";

#[derive(Debug, Error)]
pub enum ControllerError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("corrupt ledger: {0}")]
    CorruptLedger(String),
    #[error("{0} already holds a run; resume it instead")]
    RunExists(PathBuf),
    #[error("run was aborted ({0}); start a new run")]
    ResumeAborted(String),
    #[error("live and record modes need a model provider")]
    NoProvider,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl ControllerError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        ControllerError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

pub(crate) fn sha256_hex(s: &str) -> String {
    hex::encode(Sha256::digest(s.as_bytes()))
}

pub fn attempt_dir_name(index: usize) -> String {
    format!("{ATTEMPTS_DIR}/{index:03}")
}

pub type AttemptObserver<'a> = Box<dyn FnMut(&RunLedger) + 'a>;

/// Cancellation and an observer called after each attempt is persisted.
#[derive(Default)]
pub struct RunHooks<'a> {
    pub cancel: CancelToken,
    pub on_attempt: Option<AttemptObserver<'a>>,
}

fn json_bytes<T: serde::Serialize>(value: &T) -> Vec<u8> {
    let mut b = serde_json::to_vec_pretty(value).expect("serializable");
    b.push(b'\n');
    b
}

fn open_session(
    config: &RunConfig,
    provider: Option<Arc<dyn ChatProvider>>,
    consumed: usize,
) -> Result<LlmSession, ControllerError> {
    let transcript = config.transcript_path();
    let gateway = |e: GatewayError| ControllerError::InvalidConfig(e.to_string());
    match config.llm_mode {
        LlmMode::Replay => {
            let path = transcript.expect("validated");
            LlmSession::replay(&path, config.strict_replay, consumed).map_err(gateway)
        }
        LlmMode::Record => {
            let provider = provider.ok_or(ControllerError::NoProvider)?;
            LlmSession::record(provider, RetryPolicy::default(), &transcript.expect("record path"), consumed)
                .map_err(gateway)
        }
        LlmMode::Live => Ok(LlmSession::live(
            provider.ok_or(ControllerError::NoProvider)?,
            RetryPolicy::default(),
        )),
    }
}

fn score_config(config: &RunConfig) -> Result<ScoreConfig, ControllerError> {
    let mut aliases = AliasTable::default();
    if let Some(path) = &config.alias_file {
        aliases
            .extend_from_file(path)
            .map_err(|e| ControllerError::io(path, e))?;
    }
    Ok(ScoreConfig {
        aliases,
        ..ScoreConfig::default()
    })
}

pub fn load_inputs(inputs: &RunInputs) -> Result<PaperBundle, crate::ingest::IngestError> {
    let bundle = load_bundle(&inputs.paper, &inputs.codebook, &inputs.data, &inputs.target)?;
    match &inputs.paper_document {
        Some(p) => {
            let bytes = fs::read(p).map_err(|source| crate::ingest::IngestError::MissingInput {
                path: p.clone(),
                source,
            })?;
            Ok(bundle.with_document(bytes))
        }
        None => Ok(bundle),
    }
}

/// Everything the loop needs besides the ledger.
struct LoopState<'s> {
    bundle: PaperBundle,
    summary: TargetSummary,
    instructions: InstructionSummary,
    reference: CanonicalResult,
    preview: DataPreview,
    scoring: ScoreConfig,
    sandbox: Sandbox,
    session: LlmSession,
    history: Vec<PriorAttempt>,
    hooks: RunHooks<'s>,
}

fn prior(attempt: &Attempt) -> PriorAttempt {
    let feedback = match &attempt.outcome {
        AttemptOutcome::Scored { report, .. } => Feedback::Discrepancy(report.clone()),
        AttemptOutcome::Failed { error } => Feedback::Error(error.clone()),
    };
    PriorAttempt {
        attempt_index: attempt.index,
        source: attempt.source.clone(),
        score: attempt.score(),
        feedback,
    }
}

/// Starts a fresh run in `config.out_dir`. Operational failures during the
/// run (missing harness, exhausted transcript, bad reference) end it with
/// status `aborted`; the returned error is reserved for problems that
/// prevent writing a ledger at all.
pub fn run(
    inputs: RunInputs,
    config: RunConfig,
    provider: Option<Arc<dyn ChatProvider>>,
    hooks: RunHooks<'_>,
) -> Result<RunLedger, ControllerError> {
    config.validate()?;
    let out = config.out_dir.clone();
    if out.join(LEDGER_FILE).exists() {
        return Err(ControllerError::RunExists(out));
    }
    fs::create_dir_all(&out).map_err(|e| ControllerError::io(&out, e))?;
    let scoring = score_config(&config)?;
    let mut session = open_session(&config, provider, 0)?;
    let mut ledger = RunLedger::new(config, inputs);

    let bundle = match load_inputs(&ledger.inputs) {
        Ok(b) => b,
        Err(e) => {
            ledger.abort(e);
            ledger.save()?;
            return Ok(ledger);
        }
    };
    let user_reference = match &ledger.inputs.reference {
        Some(p) => match load_reference(p) {
            Ok(r) => Some(r),
            Err(e) => {
                ledger.abort(e);
                ledger.save()?;
                return Ok(ledger);
            }
        },
        None => None,
    };
    let spec = spec_gen::generate(&mut session, &bundle, user_reference, &out);
    ledger.llm_calls = session.calls();
    let spec = match spec {
        Ok(s) => s,
        Err(e) => {
            ledger.abort(e);
            ledger.save()?;
            return Ok(ledger);
        }
    };
    ledger.reference_source = Some(spec.reference_source);
    let preview = match preview_dataset(&bundle.dataset, DEFAULT_PREVIEW_ROWS) {
        Ok(p) => p,
        Err(e) => {
            ledger.abort(e);
            ledger.save()?;
            return Ok(ledger);
        }
    };
    ledger.save()?;

    let sandbox = Sandbox::new(ledger.config.harness.clone());
    let mut state = LoopState {
        bundle,
        summary: spec.summary,
        instructions: spec.instructions,
        reference: spec.reference,
        preview,
        scoring,
        sandbox,
        session,
        history: Vec::new(),
        hooks,
    };
    run_loop(&mut ledger, &mut state)?;
    Ok(ledger)
}

fn run_loop(ledger: &mut RunLedger, st: &mut LoopState<'_>) -> Result<(), ControllerError> {
    while ledger.status == RunStatus::Running {
        if ledger.attempts.len() >= ledger.config.max_attempts {
            ledger.status = RunStatus::Exhausted;
            ledger.save()?;
            break;
        }
        if st.hooks.cancel.is_cancelled() {
            tracing::info!("run cancelled");
            break;
        }
        let index = ledger.attempts.len() + 1;
        let attempt = match run_attempt(ledger, st, index) {
            Ok(Some(a)) => a,
            Ok(None) => break,
            Err(Abort(cause)) => {
                ledger.llm_calls = st.session.calls();
                ledger.abort(cause);
                ledger.save()?;
                break;
            }
        };
        ledger.llm_calls = st.session.calls();
        ledger.record(&attempt, attempt_dir_name(index));
        st.history.push(prior(&attempt));
        tracing::info!(attempt = index, score = ?attempt.score(), best = ?ledger.best.best_score, "attempt finished");
        if attempt.score().is_some_and(|s| s >= ledger.config.threshold) {
            ledger.status = RunStatus::Success;
        } else if ledger.attempts.len() >= ledger.config.max_attempts {
            ledger.status = RunStatus::Exhausted;
        }
        ledger.save()?;
        if let Some(f) = st.hooks.on_attempt.as_mut() {
            f(ledger);
        }
    }
    Ok(())
}

struct Abort(String);

impl<E: std::fmt::Display> From<E> for Abort {
    fn from(e: E) -> Self {
        Abort(e.to_string())
    }
}

/// Ok(None) means the attempt was cancelled and nothing was recorded.
fn run_attempt(ledger: &RunLedger, st: &mut LoopState<'_>, index: usize) -> Result<Option<Attempt>, Abort> {
    let started = Instant::now();
    let out = ledger.config.out_dir.clone();
    let dir = out.join(attempt_dir_name(index));
    if dir.exists() {
        fs::remove_dir_all(&dir)?;
    }
    fs::create_dir_all(&dir)?;

    let best = ledger
        .best
        .best_index
        .and_then(|i| st.history.iter().find(|p| p.attempt_index == i));
    let ctx = AttemptContext {
        attempt_index: index,
        target_id: &st.bundle.target_id,
        summary: &st.summary,
        instructions: &st.instructions,
        preview: &st.preview,
        row_count: st.bundle.dataset.row_count,
        best,
        previous: st.history.last(),
    };
    let request = build_codegen_prompt(&ctx)?;
    fs::write(dir.join("prompt.txt"), &request.user_text)?;
    let reply = st.session.complete(&request)?;
    fs::write(dir.join("response.txt"), &reply.text)?;

    let (source, outcome, figure_files) = match extract_code(&reply.text, index) {
        Err(e) => {
            let error = ErrorReport::new(ErrorPhase::Extraction, "NoCodeFound", e.to_string());
            (None, AttemptOutcome::Failed { error }, Vec::new())
        }
        Ok(artifact) => {
            fs::write(dir.join("code.src"), &artifact.code_text)?;
            let executed = st.sandbox.execute(
                &artifact.code_text,
                &st.bundle.dataset.path,
                &ledger.config.limits,
                &dir.join("work"),
                Some(&st.hooks.cancel),
            );
            let exec = match executed {
                Ok(x) => x,
                Err(SandboxError::Cancelled) => {
                    let _ = fs::remove_dir_all(&dir);
                    return Ok(None);
                }
                Err(e) => return Err(e.into()),
            };
            let figures = copy_figures(&dir, &exec.figure_files)?;
            let outcome = match exec.output {
                RunOutput::Result(result) => {
                    fs::write(dir.join("output.json"), serialize(&result))?;
                    let (breakdown, report) = evaluate(ledger, st, &result, &dir, &figures)?;
                    AttemptOutcome::Scored { breakdown, report }
                }
                RunOutput::Error(error) => AttemptOutcome::Failed { error },
            };
            (Some(artifact.code_text), outcome, figures)
        }
    };
    match &outcome {
        AttemptOutcome::Scored { breakdown, report } => {
            fs::write(dir.join("score.json"), json_bytes(breakdown))?;
            fs::write(dir.join("report.json"), json_bytes(report))?;
            fs::write(dir.join("report.md"), report.to_markdown())?;
        }
        AttemptOutcome::Failed { error } => {
            fs::write(dir.join("error.json"), json_bytes(error))?;
        }
    }
    Ok(Some(Attempt {
        index,
        prompt_digest: request.digest(),
        template_sha256: prompts::CODEGEN.sha256(),
        source,
        outcome,
        duration_seconds: started.elapsed().as_secs_f64(),
        figure_files,
    }))
}

fn copy_figures(dir: &Path, files: &[PathBuf]) -> std::io::Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    if files.is_empty() {
        return Ok(out);
    }
    let fig_dir = dir.join("figures");
    fs::create_dir_all(&fig_dir)?;
    for f in files {
        if let Some(name) = f.file_name() {
            fs::copy(f, fig_dir.join(name))?;
            out.push(Path::new("figures").join(name));
        }
    }
    Ok(out)
}

fn evaluate(
    ledger: &RunLedger,
    st: &mut LoopState<'_>,
    result: &CanonicalResult,
    dir: &Path,
    figures: &[PathBuf],
) -> Result<(AlignmentBreakdown, DiscrepancyReport), GatewayError> {
    let breakdown = score_with(&st.reference, result, &st.scoring);
    let mut report = compose_discrepancy(&st.reference, result, &breakdown, &st.scoring);
    if ledger.config.judge_enabled && breakdown.score < ledger.config.threshold {
        let paths: Vec<PathBuf> = figures.iter().map(|f| dir.join(f)).collect();
        let refs: Vec<&Path> = paths.iter().map(PathBuf::as_path).collect();
        if let Some(opinion) = judge(&mut st.session, &st.reference, result, &refs)? {
            report.narrative = Some(opinion.narrative);
        }
    }
    Ok((breakdown, report))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, ControllerError> {
    let bytes = fs::read(path).map_err(|e| ControllerError::CorruptLedger(format!("{}: {e}", path.display())))?;
    serde_json::from_slice(&bytes).map_err(|e| ControllerError::CorruptLedger(format!("{}: {e}", path.display())))
}

/// Rebuilds attempt `record` from its directory and checks it against the
/// ledger line.
fn load_attempt(out: &Path, record: &AttemptRecord, expected_index: usize) -> Result<Attempt, ControllerError> {
    let corrupt = |m: String| ControllerError::CorruptLedger(format!("attempt {}: {m}", record.index));
    if record.index != expected_index || record.dir != attempt_dir_name(expected_index) {
        return Err(corrupt(format!("expected index {expected_index}")));
    }
    let dir = out.join(&record.dir);
    if !dir.is_dir() {
        return Err(corrupt(format!("directory {} is missing", dir.display())));
    }
    let source = match &record.source_sha256 {
        Some(hash) => {
            let code = fs::read_to_string(dir.join("code.src")).map_err(|e| corrupt(format!("code.src: {e}")))?;
            if &sha256_hex(&code) != hash {
                return Err(corrupt("code.src does not match the recorded hash".into()));
            }
            Some(code)
        }
        None => None,
    };
    let outcome = match record.score {
        Some(score) => {
            let breakdown: AlignmentBreakdown = read_json(&dir.join("score.json"))?;
            let report: DiscrepancyReport = read_json(&dir.join("report.json"))?;
            if breakdown.score != score || !dir.join("output.json").is_file() {
                return Err(corrupt("score.json or output.json disagrees with the ledger".into()));
            }
            AttemptOutcome::Scored { breakdown, report }
        }
        None => {
            let error: ErrorReport = read_json(&dir.join("error.json"))?;
            if Some(error.phase) != record.error_phase {
                return Err(corrupt("error.json disagrees with the ledger".into()));
            }
            AttemptOutcome::Failed { error }
        }
    };
    Ok(Attempt {
        index: record.index,
        prompt_digest: record.prompt_digest.clone(),
        template_sha256: record.template_sha256.clone(),
        source,
        outcome,
        duration_seconds: record.duration_seconds,
        figure_files: record.figure_files.clone(),
    })
}

/// Reads the ledger and every attempt it lists, replaying the best-attempt
/// tracker to check the two agree.
pub fn load_run(out_dir: &Path) -> Result<(RunLedger, Vec<Attempt>), ControllerError> {
    let ledger = RunLedger::load(out_dir)?;
    let mut tracker = BestTracker::default();
    let mut attempts = Vec::new();
    for (i, record) in ledger.attempts.iter().enumerate() {
        let attempt = load_attempt(out_dir, record, i + 1)?;
        tracker = update_best(&tracker, &attempt);
        attempts.push(attempt);
    }
    if tracker != ledger.best {
        return Err(ControllerError::CorruptLedger("best attempt disagrees with attempt files".into()));
    }
    Ok((ledger, attempts))
}

/// Continues the run stored in `out_dir` under its recorded configuration.
/// `max_attempts` may be raised to extend an exhausted run.
pub fn resume(
    out_dir: &Path,
    provider: Option<Arc<dyn ChatProvider>>,
    max_attempts: Option<usize>,
    hooks: RunHooks<'_>,
) -> Result<RunLedger, ControllerError> {
    let (mut ledger, attempts) = load_run(out_dir)?;
    match ledger.status {
        RunStatus::Success => return Ok(ledger),
        RunStatus::Aborted => {
            return Err(ControllerError::ResumeAborted(
                ledger.abort_cause.clone().unwrap_or_default(),
            ))
        }
        RunStatus::Running | RunStatus::Exhausted => {}
    }

    let history = attempts.iter().map(prior).collect();
    remove_stale_attempts(out_dir, ledger.attempts.len())?;

    if let Some(m) = max_attempts {
        ledger.config.max_attempts = m;
    }
    ledger.config.validate()?;
    if ledger.status == RunStatus::Exhausted && ledger.attempts.len() < ledger.config.max_attempts {
        ledger.status = RunStatus::Running;
    }
    if ledger.status != RunStatus::Running {
        return Ok(ledger);
    }

    let bundle = load_inputs(&ledger.inputs).map_err(|e| ControllerError::CorruptLedger(e.to_string()))?;
    let user_reference = ledger.reference_source == Some(ReferenceSource::User);
    let (summary, instructions, reference) = spec_gen::load_persisted(&bundle, out_dir, user_reference)
        .map_err(|e| ControllerError::CorruptLedger(format!("step 1 outputs: {e}")))?;
    let preview = preview_dataset(&bundle.dataset, DEFAULT_PREVIEW_ROWS)
        .map_err(|e| ControllerError::CorruptLedger(e.to_string()))?;
    let scoring = score_config(&ledger.config)?;
    let session = open_session(&ledger.config, provider, ledger.llm_calls)?;
    let sandbox = Sandbox::new(ledger.config.harness.clone());
    let mut state = LoopState {
        bundle,
        summary,
        instructions,
        reference,
        preview,
        scoring,
        sandbox,
        session,
        history,
        hooks,
    };
    run_loop(&mut ledger, &mut state)?;
    Ok(ledger)
}

fn remove_stale_attempts(out_dir: &Path, kept: usize) -> Result<(), ControllerError> {
    let attempts = out_dir.join(ATTEMPTS_DIR);
    let Ok(entries) = fs::read_dir(&attempts) else {
        return Ok(());
    };
    for entry in entries.flatten() {
        let name = entry.file_name();
        let stale = name
            .to_str()
            .and_then(|n| n.parse::<usize>().ok())
            .is_some_and(|i| i > kept);
        if stale {
            tracing::info!(dir = ?entry.path(), "removing attempt left by an interrupted run");
            fs::remove_dir_all(entry.path()).map_err(|e| ControllerError::io(&entry.path(), e))?;
        }
    }
    Ok(())
}
