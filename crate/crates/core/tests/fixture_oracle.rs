//! The committed survey fixtures are reproduced here from seed 42 and the
//! regression oracle is cross-checked against an independent QR fit.
//! `cargo test --test fixture_oracle -- --ignored` rewrites every generated
//! fixture, including the replay transcripts.

mod common;

use std::fs;
use std::path::Path;

use serde_json::json;

use common::*;
use repcheck::canonical::{serialize, CanonicalResult};
use repcheck::controller::{self, RunConfig, RunHooks, RunStatus};
use repcheck::evaluator::score;
use repcheck::llm::LlmMode;

fn reference() -> CanonicalResult {
    oracle_reference(SEED)
}

fn regression(r: &CanonicalResult) -> &repcheck::canonical::ModelColumn {
    match r {
        CanonicalResult::RegressionTable(t) => &t.models[0],
        _ => panic!("regression expected"),
    }
}

fn paper_text(reference: &CanonicalResult) -> String {
    let m = regression(reference);
    let mut rows = String::new();
    for c in &m.cells {
        rows.push_str(&format!("{:<24}{:>8.3}{}\n", c.variable, c.estimate, c.stars));
    }
    format!(
        "Education, Income and Musical Exclusiveness\n\n\
         Abstract\n\
         We ask whether respondents with more schooling reject fewer musical genres. \
         Using a 1993 survey with ratings of six genres on a five-point scale, we regress \
         the number of genres a respondent dislikes on education, household income per \
         capita and occupational prestige.\n\n\
         Data and measures\n\
         Musical exclusiveness is the count of genres rated \"dislike it\" or \"dislike very \
         much\". Respondents who answered \"don't know much about it\" or gave no answer on \
         any genre are dropped, as are respondents with missing education or prestige.\n\n\
         Table 1. Standardized OLS coefficients predicting musical exclusiveness\n\n\
         {:<24}{:>8}\n{rows}\
         {:<24}{:>8}\n{:<24}{:>8.3}\n{:<24}{:>8.3}\n{:<24}{:>8.3}\n\n\
         Note: standardized coefficients with unstandardized constant. \
         * p < .05, ** p < .01, *** p < .001 (two-tailed).\n\n\
         Results\n\
         Education is the strongest predictor: better educated respondents dislike fewer \
         genres, net of income and prestige.\n",
        "", "Model 1",
        "N", m.n.unwrap(),
        "R-squared", m.r2.unwrap(),
        "Adjusted R-squared", m.adj_r2.unwrap(),
        "Constant", m.constant.unwrap(),
    )
}

fn error_document() -> serde_json::Value {
    let message = "name 'standardise' is not defined";
    json!({
        "exception_type": "NameError",
        "message": message,
        "traceback": format!(
            "Traceback (most recent call last):\n  \
             File \"harness.py\", line 41, in main\n    result = module.run_analysis(data)\n  \
             File \"analysis.py\", line 9, in run_analysis\n    \
             X = standardise(df[[\"EDUC\", \"INCOME\", \"PRESTIGE\"]])\n\
             NameError: {message}\n"
        ),
        "context": {"columns": COLUMNS, "shape": [ROWS, COLUMNS.len()]},
    })
}

fn recordings() -> serde_json::Value {
    let mut entries = vec![
        json!({"code": "code/correct.py", "document": "outputs/correct.json"}),
        json!({"code": "code/partial.py", "document": "outputs/partial.json"}),
        json!({
            "code": "code/name_error.py",
            "exit_code": 1,
            "document": "outputs/name_error.json",
            "stderr": "Traceback (most recent call last):\nNameError: name 'standardise' is not defined\n",
        }),
        json!({"code": "code/infinite_loop.py", "delay_seconds": 120.0}),
        json!({"code": "code/ignores_term.py", "delay_seconds": 120.0, "ignore_term": true}),
        json!({"code": "code/figure.py", "document": "outputs/figure.json", "figures": ["outputs/figure1.png"]}),
        json!({"code": "code/crash.py", "exit_code": 139, "stderr": "Segmentation fault\n"}),
    ];
    for i in 1..=EXHAUSTION.len() {
        entries.push(json!({
            "code": format!("code/exhaust_{i}.py"),
            "document": format!("outputs/exhaust_{i}.json"),
        }));
    }
    json!({ "entries": entries })
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) {
    fs::create_dir_all(path.parent().unwrap()).unwrap();
    fs::write(path, bytes).unwrap();
}

fn record_transcript(name: &str, code_files: &[&str]) {
    let llm = replay_dir().join("llm");
    let mut replies = vec![read(&llm.join("summary.md")), read(&llm.join("instructions.md"))];
    replies.extend(code_files.iter().map(|f| codegen_reply(f)));
    let out = tempfile::tempdir().unwrap();
    let mut config = RunConfig::new(out.path(), replay_harness(), LlmMode::Record);
    config.transcript = Some(replay_dir().join(name));
    config.max_attempts = code_files.len();
    let ledger = controller::run(run_inputs(), config, Some(Scripted::new(replies)), RunHooks::default()).unwrap();
    assert_ne!(ledger.status, RunStatus::Aborted, "{:?}", ledger.abort_cause);
    assert_eq!(ledger.attempts.len(), code_files.len());
}

#[test]
#[ignore]
fn regenerate_fixtures() {
    let survey = generate(SEED);
    let reference = reference();
    write(&fixture("data.csv"), survey.to_csv());
    write(&fixture("reference.json"), serialize(&reference));
    write(&fixture("paper.txt"), paper_text(&reference));

    let dir = replay_dir();
    write(&dir.join("outputs/correct.json"), serialize(&reference));
    write(&dir.join("outputs/partial.json"), serialize(&degrade(&reference, &PARTIAL)));
    for (i, (plan, _)) in EXHAUSTION.iter().enumerate() {
        write(
            &dir.join(format!("outputs/exhaust_{}.json", i + 1)),
            serialize(&degrade(&reference, plan)),
        );
    }
    write(
        &dir.join("outputs/name_error.json"),
        serde_json::to_vec_pretty(&error_document()).unwrap(),
    );
    write(&dir.join("recordings.json"), serde_json::to_vec_pretty(&recordings()).unwrap());

    record_transcript(THREE_ATTEMPTS, &["name_error.py", "partial.py", "correct.py"]);
    let exhaust: Vec<String> = (1..=EXHAUSTION.len()).map(|i| format!("exhaust_{i}.py")).collect();
    let exhaust: Vec<&str> = exhaust.iter().map(String::as_str).collect();
    record_transcript(EXHAUSTION_TRANSCRIPT, &exhaust);
}

#[test]
fn committed_dataset_matches_seed_42() {
    let survey = generate(SEED);
    assert_eq!(survey.rows.len(), ROWS);
    assert_eq!(read(&fixture("data.csv")), survey.to_csv());
}

#[test]
fn same_seed_same_bytes_other_seed_other_estimates() {
    assert_eq!(generate(SEED).to_csv(), generate(SEED).to_csv());
    let a = regression(&oracle_reference(SEED)).cells[0].estimate;
    let b = regression(&oracle_reference(7)).cells[0].estimate;
    assert_ne!(a, b);
}

#[test]
fn committed_reference_matches_oracle() {
    let bytes = fs::read(fixture("reference.json")).unwrap();
    assert_eq!(String::from_utf8(bytes).unwrap(), String::from_utf8(serialize(&reference())).unwrap());
    let m = regression(&reference()).clone();
    assert_eq!(m.cells.len(), 3);
    assert!(m.n.unwrap() > 300 && m.n.unwrap() < ROWS as u64);
}

#[test]
fn oracle_agrees_with_independent_qr_fit() {
    let (y, x) = generate(SEED).analytic_sample();
    let a = standardized_ols(&y, &x);
    let b = qr_ols(&y, &x);
    assert_eq!(a.n, b.n);
    for j in 0..3 {
        assert!((a.beta[j] - b.beta[j]).abs() < 1e-8, "beta {j}: {} vs {}", a.beta[j], b.beta[j]);
        assert!((a.se[j] - b.se[j]).abs() < 1e-8, "se {j}");
        assert_eq!(stars_for(a.p[j]), stars_for(b.p[j]));
    }
    assert!((a.r2 - b.r2).abs() < 1e-8);
    assert!((a.adj_r2 - b.adj_r2).abs() < 1e-8);
    assert!((a.constant - b.constant).abs() < 1e-8);
}

#[test]
fn education_effect_is_negative_and_significant() {
    let m = regression(&reference()).clone();
    assert_eq!(m.cells[0].variable, "Education");
    assert!(m.cells[0].estimate < -0.1);
    assert!(m.cells[0].stars.get() >= 2);
}

#[test]
fn authored_candidates_score_as_planned() {
    let reference = reference();
    let dir = replay_dir().join("outputs");
    assert_eq!(score(&reference, &load_result(&dir.join("correct.json"))).score, 100);
    let partial = load_result(&dir.join("partial.json"));
    assert_eq!(partial, degrade(&reference, &PARTIAL));
    assert_eq!(score(&reference, &partial).score, 60);
    for (i, (plan, expected)) in EXHAUSTION.iter().enumerate() {
        let cand = load_result(&dir.join(format!("exhaust_{}.json", i + 1)));
        assert_eq!(cand, degrade(&reference, plan));
        assert_eq!(score(&reference, &cand).score, *expected, "exhaust_{}", i + 1);
    }
}

#[test]
fn fixture_bundle_shape() {
    let b = repcheck::ingest::load_bundle(&fixture("paper.txt"), &fixture("codebook.txt"), &fixture("data.csv"), TARGET)
        .unwrap();
    assert_eq!(b.dataset.columns.len(), 20);
    assert_eq!(b.dataset.row_count, 600);
    let educ = b.codebook.variables.iter().find(|v| v.name == "EDUC").unwrap();
    assert_eq!(educ.missing_codes, vec![98, 99]);
    let jazz = b.codebook.variables.iter().find(|v| v.name == "JAZZ").unwrap();
    assert_eq!(jazz.missing_codes, vec![8, 9]);
    assert!(b.codebook.warnings.is_empty(), "{:?}", b.codebook.warnings);
}
