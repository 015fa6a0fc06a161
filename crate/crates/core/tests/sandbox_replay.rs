mod common;

use std::time::{Duration, Instant};

use common::*;
use repcheck::canonical::ResultKind;
use repcheck::sandbox::{CancelToken, ErrorPhase, ExecutionLimits, Sandbox, SandboxError};

fn code(name: &str) -> String {
    read(&replay_dir().join("code").join(name))
}

fn sandbox() -> Sandbox {
    Sandbox::new(replay_harness())
}

fn limits(seconds: u64) -> ExecutionLimits {
    ExecutionLimits {
        wall_clock_seconds: seconds,
        ..ExecutionLimits::default()
    }
}

#[test]
fn correct_code_yields_the_oracle_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = sandbox()
        .execute(&code("correct.py"), &fixture("data.csv"), &limits(30), dir.path(), None)
        .unwrap();
    let result = out.result().expect("result");
    assert_eq!(result.kind(), ResultKind::RegressionTable);
    assert_eq!(result, &load_result(&fixture("reference.json")));
    assert!(out.duration_seconds < 10.0);
    assert!(dir.path().join("analysis.py").exists());
}

#[test]
fn name_error_is_reported_with_context() {
    let dir = tempfile::tempdir().unwrap();
    let out = sandbox()
        .execute(&code("name_error.py"), &fixture("data.csv"), &limits(30), dir.path(), None)
        .unwrap();
    let e = out.error().expect("error");
    assert_eq!(e.phase, ErrorPhase::Runtime);
    assert_eq!(e.exception_type, "NameError");
    assert!(e.message.contains("standardise"));
    assert!(e.stack_trace.contains("analysis.py"));
    let ctx = e.context.as_ref().expect("context");
    assert_eq!(ctx.columns.len(), 20);
    assert_eq!(ctx.shape, Some([600, 20]));
    assert!(e.raw_stderr.contains("NameError"));
}

#[test]
fn missing_dataset_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = sandbox()
        .execute(&code("correct.py"), &fixture("absent.csv"), &limits(30), dir.path(), None)
        .unwrap();
    let e = out.error().expect("error");
    assert_eq!(e.exception_type, "FileNotFoundError");
}

#[test]
fn abnormal_exit_without_document_keeps_stderr() {
    let dir = tempfile::tempdir().unwrap();
    let out = sandbox()
        .execute(&code("crash.py"), &fixture("data.csv"), &limits(30), dir.path(), None)
        .unwrap();
    let e = out.error().expect("error");
    assert_eq!(e.phase, ErrorPhase::Runtime);
    assert!(e.raw_stderr.contains("Segmentation fault"));
}

#[test]
fn figures_are_collected() {
    let dir = tempfile::tempdir().unwrap();
    let out = sandbox()
        .execute(&code("figure.py"), &fixture("data.csv"), &limits(30), dir.path(), None)
        .unwrap();
    assert_eq!(out.result().unwrap().kind(), ResultKind::FigureSeries);
    assert_eq!(out.figure_files.len(), 1);
    assert!(out.figure_files[0].ends_with("figure1.png"));
}

#[test]
fn infinite_loop_times_out() {
    let dir = tempfile::tempdir().unwrap();
    let started = Instant::now();
    let out = sandbox()
        .execute(&code("infinite_loop.py"), &fixture("data.csv"), &limits(1), dir.path(), None)
        .unwrap();
    assert_eq!(out.error().unwrap().phase, ErrorPhase::Timeout);
    assert!(started.elapsed() < Duration::from_secs(4));
}

#[test]
fn worker_ignoring_term_is_killed_after_grace() {
    let dir = tempfile::tempdir().unwrap();
    let limits = ExecutionLimits {
        wall_clock_seconds: 1,
        grace_seconds: 1,
        ..ExecutionLimits::default()
    };
    let started = Instant::now();
    let out = sandbox()
        .execute(&code("ignores_term.py"), &fixture("data.csv"), &limits, dir.path(), None)
        .unwrap();
    let elapsed = started.elapsed();
    assert_eq!(out.error().unwrap().phase, ErrorPhase::Timeout);
    assert!(elapsed >= Duration::from_secs(2), "{elapsed:?}");
    assert!(elapsed < Duration::from_secs(5), "{elapsed:?}");
}

#[test]
fn cancellation_stops_the_worker() {
    let dir = tempfile::tempdir().unwrap();
    let token = CancelToken::new();
    let t = token.clone();
    let canceller = std::thread::spawn(move || {
        std::thread::sleep(Duration::from_millis(300));
        t.cancel();
    });
    let started = Instant::now();
    let r = sandbox().execute(&code("infinite_loop.py"), &fixture("data.csv"), &limits(60), dir.path(), Some(&token));
    canceller.join().unwrap();
    assert!(matches!(r, Err(SandboxError::Cancelled)));
    assert!(started.elapsed() < Duration::from_secs(10));
}

#[test]
fn unknown_code_is_a_worker_failure() {
    let dir = tempfile::tempdir().unwrap();
    let out = sandbox()
        .execute("def run_analysis(data):\n    return None\n", &fixture("data.csv"), &limits(30), dir.path(), None)
        .unwrap();
    let e = out.error().expect("error");
    assert_eq!(e.phase, ErrorPhase::Runtime);
    assert!(e.raw_stderr.contains("no recording"));
}

#[test]
fn same_source_twice_gives_equal_results() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let run = |d: &std::path::Path| {
        sandbox()
            .execute(&code("partial.py"), &fixture("data.csv"), &limits(30), d, None)
            .unwrap()
            .output
    };
    assert_eq!(run(a.path()), run(b.path()));
}
