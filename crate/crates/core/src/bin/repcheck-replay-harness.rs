//! Deterministic stand-in for the Python worker. It looks up the submitted
//! code in a recordings file and reproduces the recorded outcome.
//!
//! Usage: repcheck-replay-harness --recordings <dir> <code> <data> <output>

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use serde::Deserialize;

const EXIT_UNKNOWN_CODE: u8 = 70;
const EXIT_USAGE: u8 = 64;

#[derive(Debug, Deserialize)]
struct Recordings {
    entries: Vec<Recording>,
}

#[derive(Debug, Deserialize)]
struct Recording {
    /// File holding the code this entry answers, compared after trimming.
    code: PathBuf,
    #[serde(default)]
    exit_code: u8,
    /// File copied to the output path, if any.
    #[serde(default)]
    document: Option<PathBuf>,
    #[serde(default)]
    stderr: String,
    #[serde(default)]
    delay_seconds: f64,
    /// Ignore SIGTERM so only SIGKILL ends the process.
    #[serde(default)]
    ignore_term: bool,
    /// Files written next to the output, e.g. rendered figures.
    #[serde(default)]
    figures: Vec<PathBuf>,
}

fn fail(code: u8, msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("repcheck-replay-harness: {msg}");
    ExitCode::from(code)
}

fn error_document(output: &Path, exception_type: &str, message: &str) {
    let doc = serde_json::json!({
        "exception_type": exception_type,
        "message": message,
        "traceback": "",
    });
    let _ = std::fs::write(output, serde_json::to_vec_pretty(&doc).expect("json"));
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let (dir, rest) = match args.as_slice() {
        [flag, dir, rest @ ..] if flag == "--recordings" => (PathBuf::from(dir), rest),
        _ => return fail(EXIT_USAGE, "usage: --recordings <dir> <code> <data> <output>"),
    };
    let [code_path, data_path, output_path] = rest else {
        return fail(EXIT_USAGE, "usage: --recordings <dir> <code> <data> <output>");
    };
    let output = Path::new(output_path);
    let recordings: Recordings = match std::fs::read(dir.join("recordings.json"))
        .map_err(|e| e.to_string())
        .and_then(|b| serde_json::from_slice(&b).map_err(|e| e.to_string()))
    {
        Ok(r) => r,
        Err(e) => return fail(EXIT_USAGE, format!("recordings: {e}")),
    };
    let code = match std::fs::read_to_string(code_path) {
        Ok(c) => c,
        Err(e) => return fail(EXIT_USAGE, format!("{code_path}: {e}")),
    };
    if !Path::new(data_path).is_file() {
        error_document(output, "FileNotFoundError", &format!("No such file: '{data_path}'"));
        return ExitCode::from(1);
    }
    let entry = recordings.entries.iter().find(|e| {
        std::fs::read_to_string(dir.join(&e.code)).is_ok_and(|known| known.trim() == code.trim())
    });
    let Some(entry) = entry else {
        return fail(EXIT_UNKNOWN_CODE, "no recording matches the submitted code");
    };
    if entry.ignore_term {
        // SAFETY: installing SIG_IGN has no handler code to race with.
        unsafe {
            libc::signal(libc::SIGTERM, libc::SIG_IGN);
        }
    }
    if entry.delay_seconds > 0.0 {
        std::thread::sleep(Duration::from_secs_f64(entry.delay_seconds));
    }
    if !entry.stderr.is_empty() {
        eprint!("{}", entry.stderr);
    }
    if let Some(doc) = &entry.document {
        if let Err(e) = std::fs::copy(dir.join(doc), output) {
            return fail(EXIT_USAGE, format!("{}: {e}", doc.display()));
        }
    }
    let out_dir = output.parent().unwrap_or(Path::new("."));
    for fig in &entry.figures {
        let name = fig.file_name().unwrap_or(fig.as_os_str());
        if let Err(e) = std::fs::copy(dir.join(fig), out_dir.join(name)) {
            return fail(EXIT_USAGE, format!("{}: {e}", fig.display()));
        }
    }
    ExitCode::from(entry.exit_code)
}
