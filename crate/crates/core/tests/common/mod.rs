//! Shared fixtures: the synthetic survey, its regression oracle and the
//! scripted replay material built on top of it.

#![allow(dead_code)]

use std::collections::VecDeque;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use statrs::distribution::{ContinuousCDF, StudentsT};

use repcheck::canonical::{
    serialize, CanonicalResult, Cell, ModelColumn, RegressionTable, Stars,
};
use repcheck::controller::{RunConfig, RunInputs};
use repcheck::llm::{ChatProvider, CompletionText, LlmMode, PromptRequest, ProviderError};

pub const SEED: u64 = 42;
pub const ROWS: usize = 600;
pub const TARGET: &str = "Table 1";

pub const COLUMNS: [&str; 20] = [
    "ID", "YEAR", "SEX", "AGE", "RACE", "REGION", "MARITAL", "CHILDS", "WRKSTAT", "EDUC", "INCOME",
    "PRESTIGE", "POLVIEWS", "RELIG", "LATIN", "JAZZ", "BLUES", "COUNTRY", "RAP", "OPERA",
];
pub const GENRES: [&str; 6] = ["LATIN", "JAZZ", "BLUES", "COUNTRY", "RAP", "OPERA"];
pub const PREDICTORS: [(&str, &str); 3] = [
    ("EDUC", "Education"),
    ("INCOME", "Income per capita"),
    ("PRESTIGE", "Occupational prestige"),
];

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn fixture(name: &str) -> PathBuf {
    fixtures().join(name)
}

pub fn replay_dir() -> PathBuf {
    fixture("replay")
}

pub fn replay_harness() -> Vec<String> {
    vec![
        env!("CARGO_BIN_EXE_repcheck-replay-harness").to_string(),
        "--recordings".to_string(),
        replay_dir().display().to_string(),
    ]
}

pub fn repcheck_bin() -> &'static str {
    env!("CARGO_BIN_EXE_repcheck")
}

pub fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

pub fn load_result(path: &Path) -> CanonicalResult {
    repcheck::canonical::parse_result(&std::fs::read(path).unwrap()).unwrap()
}

// ---------------------------------------------------------------------------
// Synthetic survey

pub struct Survey {
    pub rows: Vec<[i64; 20]>,
}

fn col(name: &str) -> usize {
    COLUMNS.iter().position(|c| *c == name).unwrap()
}

fn pick(rng: &mut ChaCha8Rng, weights: &[f64]) -> i64 {
    let mut u: f64 = rng.gen();
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i as i64 + 1;
        }
        u -= w;
    }
    weights.len() as i64
}

/// Fixed linear process: education drives income and prestige, and all three
/// shift a latent dislike propensity shared by the six genre items.
pub fn generate(seed: u64) -> Survey {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let std: Normal<f64> = Normal::new(0.0, 1.0).unwrap();
    let mut rows = Vec::with_capacity(ROWS);
    for id in 1..=ROWS as i64 {
        let mut r = [0i64; 20];
        r[col("ID")] = id;
        r[col("YEAR")] = 1993;
        r[col("SEX")] = pick(&mut rng, &[0.45, 0.55]);
        r[col("AGE")] = rng.gen_range(18..=89);
        r[col("RACE")] = pick(&mut rng, &[0.80, 0.12, 0.08]);
        r[col("REGION")] = rng.gen_range(1..=4);
        r[col("MARITAL")] = rng.gen_range(1..=5);
        r[col("CHILDS")] = rng.gen_range(0..=6);
        r[col("WRKSTAT")] = rng.gen_range(1..=8);
        r[col("POLVIEWS")] = rng.gen_range(1..=7);
        r[col("RELIG")] = pick(&mut rng, &[0.6, 0.25, 0.03, 0.12]);

        let educ = (13.0 + 3.0 * std.sample(&mut rng)).round().clamp(0.0, 20.0);
        let income = (30.0 + 3.0 * (educ - 13.0) + 12.0 * std.sample(&mut rng)).round().max(1.0);
        let prestige = (43.0 + 2.5 * (educ - 13.0) + 10.0 * std.sample(&mut rng))
            .round()
            .clamp(17.0, 86.0);
        let latent = -0.30 * (educ - 13.0) / 3.0 - 0.10 * (income - 30.0) / 15.0
            + 0.05 * (prestige - 43.0) / 12.0
            + std.sample(&mut rng);

        r[col("EDUC")] = match rng.gen::<f64>() {
            u if u < 0.01 => 98,
            u if u < 0.02 => 99,
            _ => educ as i64,
        };
        r[col("INCOME")] = income as i64;
        r[col("PRESTIGE")] = if rng.gen::<f64>() < 0.02 { 0 } else { prestige as i64 };
        for (offset, g) in [-0.3, 0.2, 0.0, 0.1, 0.6, 0.4].iter().zip(GENRES) {
            let rating = (3.0 + 0.9 * latent + offset + 0.9 * std.sample(&mut rng))
                .round()
                .clamp(1.0, 5.0) as i64;
            r[col(g)] = match rng.gen::<f64>() {
                u if u < 0.03 => 8,
                u if u < 0.04 => 9,
                _ => rating,
            };
        }
        rows.push(r);
    }
    Survey { rows }
}

impl Survey {
    pub fn to_csv(&self) -> String {
        let mut s = COLUMNS.join(",");
        s.push('\n');
        for r in &self.rows {
            let line: Vec<String> = r.iter().map(|v| v.to_string()).collect();
            s.push_str(&line.join(","));
            s.push('\n');
        }
        s
    }

    /// Listwise deletion of every missing code, then the dislike count and
    /// the three predictors.
    pub fn analytic_sample(&self) -> (Vec<f64>, Vec<[f64; 3]>) {
        let mut y = Vec::new();
        let mut x = Vec::new();
        for r in &self.rows {
            let educ = r[col("EDUC")];
            let prestige = r[col("PRESTIGE")];
            let items: Vec<i64> = GENRES.iter().map(|g| r[col(g)]).collect();
            if educ >= 98 || prestige == 0 || items.iter().any(|v| *v == 8 || *v == 9) {
                continue;
            }
            y.push(items.iter().filter(|v| **v >= 4).count() as f64);
            x.push([educ as f64, r[col("INCOME")] as f64, prestige as f64]);
        }
        (y, x)
    }
}

// ---------------------------------------------------------------------------
// Regression oracle

#[derive(Debug, Clone)]
pub struct OlsFit {
    pub n: usize,
    pub beta: Vec<f64>,
    pub se: Vec<f64>,
    pub p: Vec<f64>,
    pub r2: f64,
    pub adj_r2: f64,
    pub constant: f64,
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, var.sqrt())
}

fn two_sided_p(t: f64, df: f64) -> f64 {
    let dist = StudentsT::new(0.0, 1.0, df).unwrap();
    2.0 * (1.0 - dist.cdf(t.abs()))
}

/// Standardized OLS by solving the normal equations on z-scores.
pub fn standardized_ols(y: &[f64], x: &[[f64; 3]]) -> OlsFit {
    let n = y.len();
    let k = 3;
    let (my, sy) = mean_sd(y);
    let stats: Vec<(f64, f64)> = (0..k)
        .map(|j| mean_sd(&x.iter().map(|r| r[j]).collect::<Vec<_>>()))
        .collect();
    let z = DMatrix::from_fn(n, k, |i, j| (x[i][j] - stats[j].0) / stats[j].1);
    let zy = DVector::from_iterator(n, y.iter().map(|v| (v - my) / sy));
    let xtx = z.transpose() * &z;
    let xty = z.transpose() * &zy;
    let chol = xtx.clone().cholesky().expect("positive definite");
    let beta = chol.solve(&xty);
    let r2 = beta.dot(&xty) / (n as f64 - 1.0);
    let df = (n - k - 1) as f64;
    let sigma2 = (1.0 - r2) * (n as f64 - 1.0) / df;
    let inv = chol.inverse();
    let se: Vec<f64> = (0..k).map(|j| (sigma2 * inv[(j, j)]).sqrt()).collect();
    let p = (0..k).map(|j| two_sided_p(beta[j] / se[j], df)).collect();
    let constant = my
        - (0..k)
            .map(|j| beta[j] * sy / stats[j].1 * stats[j].0)
            .sum::<f64>();
    OlsFit {
        n,
        beta: beta.iter().copied().collect(),
        se,
        p,
        r2,
        adj_r2: 1.0 - (1.0 - r2) * (n as f64 - 1.0) / df,
        constant,
    }
}

/// Raw-scale OLS with an intercept via Householder QR, converted to
/// standardized coefficients afterwards.
pub fn qr_ols(y: &[f64], x: &[[f64; 3]]) -> OlsFit {
    let n = y.len();
    let k = 3;
    let design = DMatrix::from_fn(n, k + 1, |i, j| if j == 0 { 1.0 } else { x[i][j - 1] });
    let yv = DVector::from_column_slice(y);
    let qr = design.clone().qr();
    let qty = qr.q().transpose() * &yv;
    let b = qr.r().solve_upper_triangular(&qty).expect("full rank");
    let resid = &yv - &design * &b;
    let sse = resid.dot(&resid);
    let (my, sy) = mean_sd(y);
    let sst: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let df = (n - k - 1) as f64;
    let r_inv = qr.r().try_inverse().expect("invertible");
    let cov_unscaled = &r_inv * r_inv.transpose();
    let sigma2 = sse / df;
    let mut beta = Vec::new();
    let mut se = Vec::new();
    let mut p = Vec::new();
    for j in 0..k {
        let (_, sx) = mean_sd(&x.iter().map(|r| r[j]).collect::<Vec<_>>());
        let se_b = (sigma2 * cov_unscaled[(j + 1, j + 1)]).sqrt();
        beta.push(b[j + 1] * sx / sy);
        se.push(se_b * sx / sy);
        p.push(two_sided_p(b[j + 1] / se_b, df));
    }
    let r2 = 1.0 - sse / sst;
    OlsFit {
        n,
        beta,
        se,
        p,
        r2,
        adj_r2: 1.0 - (1.0 - r2) * (n as f64 - 1.0) / df,
        constant: b[0],
    }
}

pub fn stars_for(p: f64) -> Stars {
    let n = if p < 0.001 {
        3
    } else if p < 0.01 {
        2
    } else if p < 0.05 {
        1
    } else {
        0
    };
    Stars::new(n).unwrap()
}

pub fn reference_table(fit: &OlsFit) -> CanonicalResult {
    let cells = PREDICTORS
        .iter()
        .enumerate()
        .map(|(j, (_, label))| Cell {
            variable: label.to_string(),
            estimate: fit.beta[j],
            se: Some(fit.se[j]),
            stars: stars_for(fit.p[j]),
        })
        .collect();
    CanonicalResult::RegressionTable(RegressionTable {
        models: vec![ModelColumn {
            label: "Model 1".into(),
            n: Some(fit.n as u64),
            r2: Some(fit.r2),
            adj_r2: Some(fit.adj_r2),
            constant: Some(fit.constant),
            cells,
        }],
    })
}

pub fn oracle_reference(seed: u64) -> CanonicalResult {
    let (y, x) = generate(seed).analytic_sample();
    reference_table(&standardized_ols(&y, &x))
}

// ---------------------------------------------------------------------------
// Degraded candidates with hand-computable scores

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Credit {
    Full,
    Half,
    Zero,
}

/// One plan per authored candidate: credit class for each of the three
/// cells, whether each cell keeps its stars, and the credit class for
/// n, r2, adj_r2 and the constant.
#[derive(Debug, Clone, Copy)]
pub struct Plan {
    pub cells: [Credit; 3],
    pub stars_kept: [bool; 3],
    pub fit: [Credit; 4],
}

fn shift(v: f64, credit: Credit) -> f64 {
    match credit {
        Credit::Full => v,
        Credit::Half => v + v.signum() * (0.2 * v.abs()).max(0.03),
        Credit::Zero => -v,
    }
}

fn shift_r2(v: f64, credit: Credit) -> f64 {
    match credit {
        Credit::Full => v,
        Credit::Half => v + 0.03,
        Credit::Zero => v + 0.1,
    }
}

fn shift_n(n: u64, credit: Credit) -> u64 {
    let f = n as f64;
    match credit {
        Credit::Full => n,
        Credit::Half => n - (0.03 * f).round() as u64,
        Credit::Zero => n - (0.2 * f).round() as u64,
    }
}

pub fn degrade(reference: &CanonicalResult, plan: &Plan) -> CanonicalResult {
    let CanonicalResult::RegressionTable(t) = reference else {
        panic!("regression reference expected")
    };
    let m = &t.models[0];
    let cells = m
        .cells
        .iter()
        .enumerate()
        .map(|(j, c)| Cell {
            variable: c.variable.clone(),
            estimate: shift(c.estimate, plan.cells[j]),
            se: None,
            stars: if plan.stars_kept[j] {
                c.stars
            } else {
                Stars::new((c.stars.get() + 1) % 4).unwrap()
            },
        })
        .collect();
    CanonicalResult::RegressionTable(RegressionTable {
        models: vec![ModelColumn {
            label: m.label.clone(),
            n: m.n.map(|n| shift_n(n, plan.fit[0])),
            r2: m.r2.map(|v| shift_r2(v, plan.fit[1])),
            adj_r2: m.adj_r2.map(|v| shift_r2(v, plan.fit[2])),
            constant: m.constant.map(|v| shift(v, plan.fit[3])),
            cells,
        }],
    })
}

use Credit::{Full, Half, Zero};

/// Partial candidate of the three-attempt run: 25 + 20 + 5 + 10 = 60.
pub const PARTIAL: Plan = Plan {
    cells: [Full, Half, Zero],
    stars_kept: [true, false, false],
    fit: [Half, Half, Half, Half],
};

/// The five candidates of the exhaustion run and their hand-computed
/// scores (coverage 25 each; value 40 x mean credit; stars 15 x share;
/// fit 20 x mean credit).
pub const EXHAUSTION: [(Plan, u8); 5] = [
    // 25 + 0 + 5 + 10
    (
        Plan {
            cells: [Zero, Zero, Zero],
            stars_kept: [true, false, false],
            fit: [Half, Half, Half, Half],
        },
        40,
    ),
    // 25 + 20 + 5 + 5
    (
        Plan {
            cells: [Full, Half, Zero],
            stars_kept: [true, false, false],
            fit: [Zero, Zero, Half, Half],
        },
        55,
    ),
    // 25 + 20 + 5 + 20
    (
        Plan {
            cells: [Full, Half, Zero],
            stars_kept: [true, false, false],
            fit: [Full, Full, Full, Full],
        },
        70,
    ),
    (PARTIAL, 60),
    // 25 + 20 + 0 + 5
    (
        Plan {
            cells: [Full, Half, Zero],
            stars_kept: [false, false, false],
            fit: [Zero, Zero, Half, Half],
        },
        50,
    ),
];

// ---------------------------------------------------------------------------
// Runs

/// Serves canned replies in order, for recording transcripts.
pub struct Scripted(Mutex<VecDeque<String>>);

impl Scripted {
    pub fn new(replies: Vec<String>) -> Arc<Self> {
        Arc::new(Self(Mutex::new(replies.into())))
    }
}

impl ChatProvider for Scripted {
    fn send(&self, _request: &PromptRequest) -> Result<CompletionText, ProviderError> {
        self.0
            .lock()
            .unwrap()
            .pop_front()
            .map(CompletionText::complete)
            .ok_or_else(|| ProviderError::fatal("script exhausted"))
    }
}

pub fn run_inputs() -> RunInputs {
    RunInputs {
        paper: fixture("paper.txt"),
        codebook: fixture("codebook.txt"),
        data: fixture("data.csv"),
        target: TARGET.into(),
        reference: Some(fixture("reference.json")),
        paper_document: None,
    }
}

pub const THREE_ATTEMPTS: &str = "three_attempts.jsonl";
pub const EXHAUSTION_TRANSCRIPT: &str = "exhaustion.jsonl";

pub fn replay_config(out_dir: &Path, transcript: &str, max_attempts: usize) -> RunConfig {
    let mut config = RunConfig::new(out_dir, replay_harness(), LlmMode::Replay);
    config.transcript = Some(replay_dir().join(transcript));
    config.strict_replay = true;
    config.max_attempts = max_attempts;
    config
}

pub fn codegen_reply(code_file: &str) -> String {
    let code = read(&replay_dir().join("code").join(code_file));
    format!("Here is the updated analysis.\n\n```python\n{}\n```\n", code.trim_end())
}

pub fn result_bytes(r: &CanonicalResult) -> Vec<u8> {
    serialize(r)
}
