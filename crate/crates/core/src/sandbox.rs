//! Runs generated code in a separate worker process: fresh working
//! directory, wall-clock deadline with escalating termination, capped output
//! and stderr, and cooperative cancellation.
//!
//! Worker contract: `<harness...> <code_path> <data_path> <output_path>`.
//! Exit 0 leaves a canonical result at `output_path`, exit 1 leaves an error
//! document there, anything else is a raw failure.

use std::fmt;
use std::fs::{self, File};
use std::io::{Read, Seek, SeekFrom};
use std::os::unix::process::{CommandExt, ExitStatusExt};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, ExitStatus, Stdio};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical::{parse_result, CanonicalResult};

pub const DEFAULT_WALL_CLOCK_SECONDS: u64 = 300;
pub const DEFAULT_MAX_OUTPUT_BYTES: u64 = 10 * 1024 * 1024;
pub const DEFAULT_GRACE_SECONDS: u64 = 5;
pub const DEFAULT_STDERR_LIMIT: usize = 64 * 1024;

pub const CODE_FILE: &str = "analysis.py";
pub const OUTPUT_FILE: &str = "output.json";
pub const STDERR_FILE: &str = "stderr.log";
pub const STDOUT_FILE: &str = "stdout.log";

const FIGURE_EXTENSIONS: &[&str] = &["png", "jpg", "jpeg", "svg", "pdf"];
const POLL: Duration = Duration::from_millis(20);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionLimits {
    pub wall_clock_seconds: u64,
    pub max_output_bytes: u64,
    /// Time between SIGTERM and SIGKILL once the deadline passes.
    #[serde(default = "default_grace")]
    pub grace_seconds: u64,
    #[serde(default = "default_stderr_limit")]
    pub stderr_limit: usize,
}

fn default_grace() -> u64 {
    DEFAULT_GRACE_SECONDS
}

fn default_stderr_limit() -> usize {
    DEFAULT_STDERR_LIMIT
}

impl Default for ExecutionLimits {
    fn default() -> Self {
        Self {
            wall_clock_seconds: DEFAULT_WALL_CLOCK_SECONDS,
            max_output_bytes: DEFAULT_MAX_OUTPUT_BYTES,
            grace_seconds: DEFAULT_GRACE_SECONDS,
            stderr_limit: DEFAULT_STDERR_LIMIT,
        }
    }
}

impl ExecutionLimits {
    pub fn validate(&self) -> Result<(), SandboxError> {
        if self.wall_clock_seconds == 0 || self.max_output_bytes == 0 {
            return Err(SandboxError::InvalidLimits);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ErrorPhase {
    #[serde(rename = "spawn")]
    Spawn,
    #[serde(rename = "runtime")]
    Runtime,
    #[serde(rename = "timeout")]
    Timeout,
    #[serde(rename = "output-parse")]
    OutputParse,
    /// No code block could be taken from the model's reply.
    #[serde(rename = "extraction")]
    Extraction,
}

impl fmt::Display for ErrorPhase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ErrorPhase::Spawn => "spawn",
            ErrorPhase::Runtime => "runtime",
            ErrorPhase::Timeout => "timeout",
            ErrorPhase::OutputParse => "output-parse",
            ErrorPhase::Extraction => "extraction",
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorContext {
    pub columns: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape: Option<[u64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub phase: ErrorPhase,
    pub exception_type: String,
    pub message: String,
    pub stack_trace: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context: Option<ErrorContext>,
    #[serde(default)]
    pub raw_stderr: String,
}

impl ErrorReport {
    pub fn new(phase: ErrorPhase, exception_type: impl Into<String>, message: impl Into<String>) -> Self {
        let mut message = message.into();
        if message.trim().is_empty() {
            message = "(no message)".into();
        }
        Self {
            phase,
            exception_type: exception_type.into(),
            message,
            stack_trace: String::new(),
            context: None,
            raw_stderr: String::new(),
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "Phase: {}\nException: {}\nMessage: {}\n",
            self.phase, self.exception_type, self.message
        );
        if let Some(ctx) = &self.context {
            s.push_str(&format!("Columns present: {}\n", ctx.columns.join(", ")));
            if let Some([r, c]) = ctx.shape {
                s.push_str(&format!("Data dimensions: {r} rows x {c} columns\n"));
            }
        }
        if !self.stack_trace.is_empty() {
            s.push_str("Stack trace:\n");
            s.push_str(self.stack_trace.trim_end());
            s.push('\n');
        }
        if !self.raw_stderr.is_empty() && self.stack_trace.is_empty() {
            s.push_str("Stderr:\n");
            s.push_str(self.raw_stderr.trim_end());
            s.push('\n');
        }
        s
    }
}

/// Error document a harness writes to the output path before exiting 1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HarnessErrorDocument {
    pub exception_type: String,
    pub message: String,
    #[serde(default)]
    pub traceback: String,
    #[serde(default)]
    pub context: Option<HarnessContext>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HarnessContext {
    #[serde(default)]
    pub columns: Vec<String>,
    #[serde(default)]
    pub shape: Option<[u64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunOutput {
    Result(CanonicalResult),
    Error(ErrorReport),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionOutcome {
    pub output: RunOutput,
    pub duration_seconds: f64,
    pub figure_files: Vec<PathBuf>,
}

impl ExecutionOutcome {
    pub fn result(&self) -> Option<&CanonicalResult> {
        match &self.output {
            RunOutput::Result(r) => Some(r),
            RunOutput::Error(_) => None,
        }
    }

    pub fn error(&self) -> Option<&ErrorReport> {
        match &self.output {
            RunOutput::Result(_) => None,
            RunOutput::Error(e) => Some(e),
        }
    }
}

#[derive(Debug, Error)]
pub enum SandboxError {
    #[error("cannot start harness {command:?}: {source}")]
    SpawnFailure {
        command: String,
        #[source]
        source: std::io::Error,
    },
    #[error("harness command is empty")]
    NoHarness,
    #[error("execution limits must be positive")]
    InvalidLimits,
    #[error("work directory {0} is not empty")]
    WorkdirNotEmpty(PathBuf),
    #[error("work directory {path}: {source}")]
    Workdir {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("execution cancelled")]
    Cancelled,
}

/// Shared flag checked between steps and while a worker runs.
#[derive(Debug, Clone, Default)]
pub struct CancelToken(Arc<AtomicBool>);

impl CancelToken {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn cancel(&self) {
        self.0.store(true, Ordering::SeqCst);
    }

    pub fn is_cancelled(&self) -> bool {
        self.0.load(Ordering::SeqCst)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sandbox {
    /// Program and leading arguments; the three contract paths are appended.
    pub harness: Vec<String>,
}

enum Ended {
    Exited(ExitStatus),
    TimedOut,
    Cancelled,
}

fn signal_group(child: &Child, signal: libc::c_int) {
    // The worker leads its own process group, so this also reaches anything
    // it spawned.
    unsafe {
        libc::kill(-(child.id() as libc::pid_t), signal);
    }
}

fn wait_until(child: &mut Child, until: Instant) -> std::io::Result<Option<ExitStatus>> {
    loop {
        if let Some(status) = child.try_wait()? {
            return Ok(Some(status));
        }
        if Instant::now() >= until {
            return Ok(None);
        }
        std::thread::sleep(POLL);
    }
}

/// SIGTERM, then SIGKILL after the grace period.
fn terminate(child: &mut Child, grace: Duration) -> std::io::Result<()> {
    signal_group(child, libc::SIGTERM);
    if wait_until(child, Instant::now() + grace)?.is_none() {
        signal_group(child, libc::SIGKILL);
        child.wait()?;
    }
    Ok(())
}

fn read_tail(path: &Path, limit: usize) -> String {
    let Ok(mut f) = File::open(path) else {
        return String::new();
    };
    let len = f.metadata().map(|m| m.len()).unwrap_or(0);
    let skip = len.saturating_sub(limit as u64);
    if f.seek(SeekFrom::Start(skip)).is_err() {
        return String::new();
    }
    let mut buf = Vec::new();
    let _ = f.read_to_end(&mut buf);
    let text = String::from_utf8_lossy(&buf).into_owned();
    if skip > 0 {
        format!("[... {skip} bytes truncated ...]\n{text}")
    } else {
        text
    }
}

fn read_capped(path: &Path, cap: u64) -> Result<Vec<u8>, String> {
    let meta = fs::metadata(path).map_err(|_| "no output document was written".to_string())?;
    if meta.len() > cap {
        return Err(format!("output document is {} bytes, limit is {cap}", meta.len()));
    }
    fs::read(path).map_err(|e| e.to_string())
}

fn collect_figures(workdir: &Path) -> Vec<PathBuf> {
    let mut out: Vec<PathBuf> = fs::read_dir(workdir)
        .into_iter()
        .flatten()
        .flatten()
        .map(|e| e.path())
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| FIGURE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        })
        .collect();
    out.sort();
    out
}

fn absolute(path: &Path) -> PathBuf {
    fs::canonicalize(path).unwrap_or_else(|_| {
        std::env::current_dir()
            .map(|d| d.join(path))
            .unwrap_or_else(|_| path.to_path_buf())
    })
}

impl Sandbox {
    pub fn new(harness: Vec<String>) -> Self {
        Self { harness }
    }

    pub fn command_line(&self) -> String {
        self.harness.join(" ")
    }

    pub fn execute(
        &self,
        source: &str,
        dataset_path: &Path,
        limits: &ExecutionLimits,
        workdir: &Path,
        cancel: Option<&CancelToken>,
    ) -> Result<ExecutionOutcome, SandboxError> {
        limits.validate()?;
        let (program, args) = self.harness.split_first().ok_or(SandboxError::NoHarness)?;
        let wd_err = |source| SandboxError::Workdir {
            path: workdir.to_path_buf(),
            source,
        };
        fs::create_dir_all(workdir).map_err(wd_err)?;
        if fs::read_dir(workdir).map_err(wd_err)?.next().is_some() {
            return Err(SandboxError::WorkdirNotEmpty(workdir.to_path_buf()));
        }
        let workdir = absolute(workdir);
        let code_path = workdir.join(CODE_FILE);
        let output_path = workdir.join(OUTPUT_FILE);
        let stderr_path = workdir.join(STDERR_FILE);
        fs::write(&code_path, source).map_err(wd_err)?;
        let stderr = File::create(&stderr_path).map_err(wd_err)?;
        let stdout = File::create(workdir.join(STDOUT_FILE)).map_err(wd_err)?;

        let start = Instant::now();
        let mut child = Command::new(program)
            .args(args)
            .arg(&code_path)
            .arg(absolute(dataset_path))
            .arg(&output_path)
            .current_dir(&workdir)
            .stdin(Stdio::null())
            .stdout(stdout)
            .stderr(stderr)
            .process_group(0)
            .spawn()
            .map_err(|source| SandboxError::SpawnFailure {
                command: self.command_line(),
                source,
            })?;

        let deadline = start + Duration::from_secs(limits.wall_clock_seconds);
        let grace = Duration::from_secs(limits.grace_seconds);
        let ended = loop {
            match child.try_wait() {
                Ok(Some(status)) => break Ended::Exited(status),
                Ok(None) => {}
                Err(_) => {
                    let _ = terminate(&mut child, grace);
                    break Ended::Cancelled;
                }
            }
            if cancel.is_some_and(|c| c.is_cancelled()) {
                let _ = terminate(&mut child, grace);
                break Ended::Cancelled;
            }
            if Instant::now() >= deadline {
                let _ = terminate(&mut child, grace);
                break Ended::TimedOut;
            }
            std::thread::sleep(POLL);
        };
        // Reap anything the worker left behind in its group.
        signal_group(&child, libc::SIGKILL);
        let duration_seconds = start.elapsed().as_secs_f64();

        let raw_stderr = read_tail(&stderr_path, limits.stderr_limit);
        let output = match ended {
            Ended::Cancelled => return Err(SandboxError::Cancelled),
            Ended::TimedOut => {
                let mut e = ErrorReport::new(
                    ErrorPhase::Timeout,
                    "Timeout",
                    format!("worker exceeded the wall-clock limit of {} s", limits.wall_clock_seconds),
                );
                e.raw_stderr = raw_stderr;
                RunOutput::Error(e)
            }
            Ended::Exited(status) => interpret_exit(status, &output_path, limits, raw_stderr),
        };
        Ok(ExecutionOutcome {
            output,
            duration_seconds,
            figure_files: collect_figures(&workdir),
        })
    }
}

fn interpret_exit(status: ExitStatus, output_path: &Path, limits: &ExecutionLimits, raw_stderr: String) -> RunOutput {
    let with_stderr = |mut e: ErrorReport| {
        e.raw_stderr = raw_stderr.clone();
        RunOutput::Error(e)
    };
    match status.code() {
        Some(0) => match read_capped(output_path, limits.max_output_bytes) {
            Ok(bytes) => match parse_result(&bytes) {
                Ok(r) => RunOutput::Result(r),
                Err(v) => with_stderr(ErrorReport::new(ErrorPhase::OutputParse, "SchemaViolation", v.to_string())),
            },
            Err(m) => with_stderr(ErrorReport::new(ErrorPhase::OutputParse, "MissingOutput", m)),
        },
        Some(1) => {
            let doc = read_capped(output_path, limits.max_output_bytes)
                .ok()
                .and_then(|b| serde_json::from_slice::<HarnessErrorDocument>(&b).ok());
            match doc {
                Some(d) => {
                    let mut e = ErrorReport::new(ErrorPhase::Runtime, d.exception_type, d.message);
                    e.stack_trace = d.traceback;
                    e.context = d.context.map(|c| ErrorContext {
                        columns: c.columns,
                        shape: c.shape,
                    });
                    with_stderr(e)
                }
                None => with_stderr(ErrorReport::new(
                    ErrorPhase::Runtime,
                    "WorkerFailure",
                    "worker exited with code 1 without a readable error document",
                )),
            }
        }
        Some(code) => with_stderr(ErrorReport::new(
            ErrorPhase::Runtime,
            "WorkerFailure",
            format!("worker exited with code {code}"),
        )),
        None => with_stderr(ErrorReport::new(
            ErrorPhase::Runtime,
            "WorkerFailure",
            format!("worker killed by signal {}", status.signal().unwrap_or(0)),
        )),
    }
}
