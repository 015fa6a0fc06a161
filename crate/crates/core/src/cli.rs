//! Command-line surface. Machine-readable results go to stdout, diagnostics
//! to stderr.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use crate::canonical::parse_result;
use crate::controller::{self, RunConfig, RunHooks, RunInputs, RunLedger, RunStatus};
use crate::evaluator::{score_with, ScoreConfig, DEFAULT_THRESHOLD};
use crate::llm::{ChatProvider, HttpProvider, LlmMode};
use crate::sandbox::ExecutionLimits;

pub const EXIT_SUCCESS: i32 = 0;
pub const EXIT_EXHAUSTED: i32 = 2;
pub const EXIT_ABORTED: i32 = 3;
pub const EXIT_USAGE: i32 = 4;

pub const ENV_HARNESS: &str = "REPCHECK_HARNESS";
const DEFAULT_HARNESS: &str = "repcheck-harness";

#[derive(Debug, Parser)]
#[command(name = "repcheck", version, about = "Reproduce a published statistical result with generated code")]
#[command(args_override_self = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
#[allow(clippy::large_enum_variant)]
pub enum Command {
    /// Start a new run.
    Run(RunArgs),
    /// Continue an interrupted or exhausted run.
    Resume(ResumeArgs),
    /// Score a candidate result against a reference.
    Score(ScoreArgs),
    /// Summarize a run directory.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Key=value file providing defaults for any of these flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub paper: PathBuf,
    #[arg(long)]
    pub codebook: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Table or figure to reproduce, e.g. "Table 1".
    #[arg(long)]
    pub target: String,
    /// Published result in the canonical schema; skips transcription.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// Raw paper document forwarded to the model as an attachment.
    #[arg(long)]
    pub paper_document: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD, value_parser = clap::value_parser!(u8).range(1..=100))]
    pub threshold: u8,
    #[arg(long, default_value_t = controller::DEFAULT_MAX_ATTEMPTS, value_parser = positive)]
    pub max_attempts: usize,
    #[arg(long, value_enum, default_value_t = LlmMode::Live)]
    pub llm: LlmMode,
    #[arg(long)]
    pub transcript: Option<PathBuf>,
    #[arg(long)]
    pub judge: bool,
    #[arg(long)]
    pub strict_replay: bool,
    #[arg(long, default_value = "repcheck-run")]
    pub out: PathBuf,
    /// Worker command; the code, data and output paths are appended.
    #[arg(long, env = ENV_HARNESS, default_value = DEFAULT_HARNESS)]
    pub harness: String,
    /// Wall-clock limit per execution in seconds.
    #[arg(long, default_value_t = crate::sandbox::DEFAULT_WALL_CLOCK_SECONDS, value_parser = positive_u64)]
    pub timeout: u64,
    /// Extra label aliases, one `alias = canonical` per line.
    #[arg(long)]
    pub aliases: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ResumeArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Raise the attempt limit of an exhausted run.
    #[arg(long, value_parser = positive)]
    pub max_attempts: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub reference: PathBuf,
    #[arg(long)]
    pub candidate: PathBuf,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD, value_parser = clap::value_parser!(u8).range(1..=100))]
    pub threshold: u8,
    #[arg(long)]
    pub aliases: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    pub run_dir: PathBuf,
}

fn positive(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(n) if n >= 1 => Ok(n),
        _ => Err("must be a positive integer".into()),
    }
}

fn positive_u64(s: &str) -> Result<u64, String> {
    positive(s).map(|n| n as u64)
}

/// Turns `key = value` lines into flags placed before the real arguments,
/// so anything given on the command line wins.
pub fn config_args(text: &str) -> Result<Vec<OsString>, String> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("config line {}: expected key = value", n + 1))?;
        let key = key.trim().trim_start_matches("--").replace('_', "-");
        let value = value.trim().trim_matches('"');
        if key == "config" {
            return Err(format!("config line {}: nested config files are not supported", n + 1));
        }
        match value {
            "true" => out.push(format!("--{key}").into()),
            "false" => {}
            _ => {
                out.push(format!("--{key}").into());
                out.push(value.into());
            }
        }
    }
    Ok(out)
}

fn expand_config(args: Vec<OsString>) -> Result<Vec<OsString>, String> {
    let pos = args.iter().position(|a| a == "--config");
    let path = match pos {
        Some(i) => args.get(i + 1).cloned().ok_or("--config needs a file")?,
        None => match args.iter().find_map(|a| a.to_str()?.strip_prefix("--config=").map(OsString::from)) {
            Some(p) => p,
            None => return Ok(args),
        },
    };
    let text = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", Path::new(&path).display()))?;
    let extra = config_args(&text)?;
    let sub = args.iter().position(|a| a == "run").ok_or("--config applies to the run command")?;
    let mut out: Vec<OsString> = args[..=sub].to_vec();
    out.extend(extra);
    out.extend(args[sub + 1..].iter().cloned());
    Ok(out)
}

fn absolute(p: &Path) -> PathBuf {
    std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf())
}

fn provider_for(mode: LlmMode) -> Result<Option<Arc<dyn ChatProvider>>, String> {
    match mode {
        LlmMode::Replay => Ok(None),
        LlmMode::Live | LlmMode::Record => HttpProvider::from_env()
            .map(|p| Some(Arc::new(p) as Arc<dyn ChatProvider>))
            .map_err(|e| e.to_string()),
    }
}

fn status_code(ledger: &RunLedger) -> i32 {
    match ledger.status {
        RunStatus::Success => EXIT_SUCCESS,
        RunStatus::Exhausted => EXIT_EXHAUSTED,
        RunStatus::Aborted | RunStatus::Running => EXIT_ABORTED,
    }
}

fn final_line(ledger: &RunLedger) -> String {
    let best = ledger.best.best_score.map_or("none".to_string(), |s| s.to_string());
    let attempt = ledger.best.best_index.map_or("none".to_string(), |i| i.to_string());
    let report = ledger.best.best_index.map_or("none".to_string(), |i| {
        ledger
            .config
            .out_dir
            .join(controller::attempt_dir_name(i))
            .join("report.md")
            .display()
            .to_string()
    });
    let c = ledger.counters;
    format!(
        "status={} best={best} attempt={attempt} trials={} errors={} completed={} report={report}",
        serde_json::to_value(ledger.status).expect("status").as_str().unwrap_or("?"),
        c.trials,
        c.errors,
        c.completed
    )
}

fn finish(ledger: &RunLedger, out: &mut String) -> i32 {
    if let Some(cause) = &ledger.abort_cause {
        tracing::error!(%cause, "run aborted");
    }
    let _ = writeln!(out, "{}", final_line(ledger));
    status_code(ledger)
}

fn cmd_run(a: RunArgs, out: &mut String) -> i32 {
    let provider = match provider_for(a.llm) {
        Ok(p) => p,
        Err(e) => {
            tracing::error!("{e}");
            return EXIT_USAGE;
        }
    };
    let mut config = RunConfig::new(absolute(&a.out), a.harness.split_whitespace().map(String::from).collect(), a.llm);
    config.threshold = a.threshold;
    config.max_attempts = a.max_attempts;
    config.judge_enabled = a.judge;
    config.strict_replay = a.strict_replay;
    config.transcript = a.transcript.as_deref().map(absolute);
    config.alias_file = a.aliases.as_deref().map(absolute);
    config.limits = ExecutionLimits {
        wall_clock_seconds: a.timeout,
        ..ExecutionLimits::default()
    };
    let inputs = RunInputs {
        paper: absolute(&a.paper),
        codebook: absolute(&a.codebook),
        data: absolute(&a.data),
        target: a.target,
        reference: a.reference.as_deref().map(absolute),
        paper_document: a.paper_document.as_deref().map(absolute),
    };
    match controller::run(inputs, config, provider, RunHooks::default()) {
        Ok(ledger) => finish(&ledger, out),
        Err(e @ controller::ControllerError::InvalidConfig(_)) => {
            tracing::error!("{e}");
            EXIT_USAGE
        }
        Err(e) => {
            tracing::error!("{e}");
            EXIT_ABORTED
        }
    }
}

fn cmd_resume(a: ResumeArgs, out: &mut String) -> i32 {
    let mode = match RunLedger::load(&a.out) {
        Ok(l) => l.config.llm_mode,
        Err(e) => {
            tracing::error!("{e}");
            return EXIT_ABORTED;
        }
    };
    let provider = match provider_for(mode) {
        Ok(p) => p,
        Err(e) => {
            tracing::error!("{e}");
            return EXIT_USAGE;
        }
    };
    match controller::resume(&a.out, provider, a.max_attempts, RunHooks::default()) {
        Ok(ledger) => finish(&ledger, out),
        Err(e) => {
            tracing::error!("{e}");
            EXIT_ABORTED
        }
    }
}

fn cmd_score(a: ScoreArgs, out: &mut String) -> i32 {
    let load = |p: &Path| -> Result<_, String> {
        let bytes = std::fs::read(p).map_err(|e| format!("{}: {e}", p.display()))?;
        parse_result(&bytes).map_err(|v| format!("{}: {v}", p.display()))
    };
    let (reference, candidate) = match (load(&a.reference), load(&a.candidate)) {
        (Ok(r), Ok(c)) => (r, c),
        (Err(e), _) | (_, Err(e)) => {
            tracing::error!("{e}");
            return EXIT_ABORTED;
        }
    };
    let mut config = ScoreConfig::default();
    if let Some(p) = &a.aliases {
        if let Err(e) = config.aliases.extend_from_file(p) {
            tracing::error!("{}: {e}", p.display());
            return EXIT_USAGE;
        }
    }
    let breakdown = score_with(&reference, &candidate, &config);
    let _ = writeln!(out, "{}", serde_json::to_string_pretty(&breakdown).expect("serializable"));
    if breakdown.passes(a.threshold) {
        EXIT_SUCCESS
    } else {
        EXIT_EXHAUSTED
    }
}

pub fn render_run_report(ledger: &RunLedger, attempts: &[controller::Attempt]) -> String {
    let mut s = String::new();
    let c = &ledger.config;
    let _ = writeln!(s, "# Run report: {}\n", ledger.inputs.target);
    let _ = writeln!(s, "Status: {}", serde_json::to_value(ledger.status).expect("status").as_str().unwrap_or("?"));
    if let Some(cause) = &ledger.abort_cause {
        let _ = writeln!(s, "Abort cause: {cause}");
    }
    let _ = writeln!(
        s,
        "Threshold: {}, max attempts: {}, timeout: {} s, model mode: {}, judge: {}",
        c.threshold,
        c.max_attempts,
        c.limits.wall_clock_seconds,
        serde_json::to_value(c.llm_mode).expect("mode").as_str().unwrap_or("?"),
        if c.judge_enabled { "on" } else { "off" }
    );
    let _ = writeln!(s, "Harness: {}\n", c.harness.join(" "));
    let n = ledger.counters;
    let best = |v: Option<String>| v.unwrap_or_else(|| "-".into());
    let _ = writeln!(s, "| Trials | Errors | Completed | Best score | Best attempt |");
    let _ = writeln!(s, "|---|---|---|---|---|");
    let _ = writeln!(
        s,
        "| {} | {} | {} | {} | {} |\n",
        n.trials,
        n.errors,
        n.completed,
        best(ledger.best.best_score.map(|x| x.to_string())),
        best(ledger.best.best_index.map(|x| x.to_string()))
    );
    let _ = writeln!(s, "## Score trajectory\n");
    let _ = writeln!(s, "| Attempt | Outcome | Score | Best so far | Duration (s) |");
    let _ = writeln!(s, "|---|---|---|---|---|");
    let mut running: Option<u8> = None;
    for a in attempts {
        let outcome = match &a.outcome {
            controller::AttemptOutcome::Scored { .. } => "scored".to_string(),
            controller::AttemptOutcome::Failed { error } => format!("error ({}: {})", error.phase, error.exception_type),
        };
        if let Some(score) = a.score() {
            running = Some(running.map_or(score, |r| r.max(score)));
        }
        let _ = writeln!(
            s,
            "| {} | {} | {} | {} | {:.1} |",
            a.index,
            outcome,
            best(a.score().map(|x| x.to_string())),
            best(running.map(|x| x.to_string())),
            a.duration_seconds
        );
    }
    if let Some(report) = &ledger.best.best_report {
        let _ = writeln!(s, "\n## Best attempt (attempt {})\n", ledger.best.best_index.unwrap_or(0));
        let body = report.to_markdown();
        // Demote the report's own headings under this section.
        for line in body.lines() {
            if line.starts_with('#') {
                let _ = writeln!(s, "##{line}");
            } else {
                let _ = writeln!(s, "{line}");
            }
        }
    }
    s
}

fn cmd_report(a: ReportArgs, out: &mut String) -> i32 {
    match controller::load_run(&a.run_dir) {
        Ok((ledger, attempts)) => {
            out.push_str(&render_run_report(&ledger, &attempts));
            EXIT_SUCCESS
        }
        Err(e) => {
            tracing::error!("{e}");
            EXIT_ABORTED
        }
    }
}

/// Parses `args` (including the program name), runs the command and
/// returns the exit code together with everything meant for stdout.
pub fn main_with_args(args: Vec<OsString>) -> (i32, String) {
    let mut out = String::new();
    let args = match expand_config(args) {
        Ok(a) => a,
        Err(e) => {
            tracing::error!("{e}");
            return (EXIT_USAGE, out);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_SUCCESS };
            if e.use_stderr() {
                eprint!("{}", e.render());
            } else {
                out.push_str(&e.render().to_string());
            }
            return (code, out);
        }
    };
    let code = match cli.command {
        Command::Run(a) => cmd_run(a, &mut out),
        Command::Resume(a) => cmd_resume(a, &mut out),
        Command::Score(a) => cmd_score(a, &mut out),
        Command::Report(a) => cmd_report(a, &mut out),
    };
    (code, out)
}
