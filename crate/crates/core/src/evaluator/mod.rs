//! Deterministic alignment scoring between a reference result and a
//! candidate produced by generated code.
//!
//! Regression tables are scored as
//!
//! ```text
//! score = round_half_up(100 * (0.25 coverage + 0.40 value_accuracy
//!                              + 0.15 stars_match + 0.20 fit_match))
//! ```
//!
//! Frequency tables use `0.8 * exact counts + 0.2 * mean proximity` and
//! figure series use `0.25 coverage + 0.55 value accuracy + 0.20 order
//! agreement`. Components a kind does not use are reported as 1.

mod judge;
mod kendall;
mod report;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::canonical::{
    AliasTable, CanonicalResult, FigureSeries, FrequencyTable, ModelColumn, RegressionTable,
};

pub use judge::{judge, JudgeOpinion};
pub use kendall::{inversions, order_similarity};
pub use report::{compose_discrepancy, DiscrepancyReport, ReportSection};

pub const DEFAULT_THRESHOLD: u8 = 95;

/// Slack for floating-point noise in tolerance comparisons, so a published
/// 0.021 vs 0.016 counts as exactly 0.005 apart.
const EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TableWeights {
    pub coverage: f64,
    pub value_accuracy: f64,
    pub stars: f64,
    pub fit: f64,
}

impl Default for TableWeights {
    fn default() -> Self {
        Self {
            coverage: 0.25,
            value_accuracy: 0.40,
            stars: 0.15,
            fit: 0.20,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyWeights {
    pub counts: f64,
    pub means: f64,
}

impl Default for FrequencyWeights {
    fn default() -> Self {
        Self {
            counts: 0.8,
            means: 0.2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FigureWeights {
    pub coverage: f64,
    pub value_accuracy: f64,
    pub order: f64,
}

impl Default for FigureWeights {
    fn default() -> Self {
        Self {
            coverage: 0.25,
            value_accuracy: 0.55,
            order: 0.20,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Full credit: |Δ| ≤ max(full_abs, full_rel·|ref|).
    pub full_abs: f64,
    pub full_rel: f64,
    /// Half credit (same sign): |Δ| ≤ max(partial_abs, partial_rel·|ref|).
    pub partial_abs: f64,
    pub partial_rel: f64,
    /// Sample size half credit within this relative distance.
    pub n_rel: f64,
    pub r2_full: f64,
    pub r2_partial: f64,
    pub mean_full: f64,
    pub mean_partial: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            full_abs: 0.005,
            full_rel: 0.05,
            partial_abs: 0.05,
            partial_rel: 0.5,
            n_rel: 0.05,
            r2_full: 0.01,
            r2_partial: 0.05,
            mean_full: 0.005,
            mean_partial: 0.05,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ScoreConfig {
    pub table: TableWeights,
    pub frequency: FrequencyWeights,
    pub figure: FigureWeights,
    pub tolerances: Tolerances,
    pub aliases: AliasTable,
}

impl ScoreConfig {
    /// Credit for a coefficient-like value: 1, 0.5 or 0.
    pub fn coefficient_credit(&self, reference: f64, candidate: f64) -> f64 {
        let t = &self.tolerances;
        let delta = (candidate - reference).abs();
        if delta <= t.full_abs.max(t.full_rel * reference.abs()) + EPS {
            1.0
        } else if same_sign(reference, candidate)
            && delta <= t.partial_abs.max(t.partial_rel * reference.abs()) + EPS
        {
            0.5
        } else {
            0.0
        }
    }

    pub fn n_credit(&self, reference: u64, candidate: u64) -> f64 {
        if reference == candidate {
            1.0
        } else if (candidate as f64 - reference as f64).abs()
            <= self.tolerances.n_rel * reference as f64 + EPS
        {
            0.5
        } else {
            0.0
        }
    }

    pub fn r2_credit(&self, reference: f64, candidate: f64) -> f64 {
        band_credit(
            (candidate - reference).abs(),
            self.tolerances.r2_full,
            self.tolerances.r2_partial,
        )
    }

    pub fn mean_credit(&self, reference: f64, candidate: f64) -> f64 {
        band_credit(
            (candidate - reference).abs(),
            self.tolerances.mean_full,
            self.tolerances.mean_partial,
        )
    }
}

fn band_credit(delta: f64, full: f64, partial: f64) -> f64 {
    if delta <= full + EPS {
        1.0
    } else if delta <= partial + EPS {
        0.5
    } else {
        0.0
    }
}

/// Zero agrees with either sign.
fn same_sign(a: f64, b: f64) -> bool {
    a == 0.0 || b == 0.0 || (a > 0.0) == (b > 0.0)
}

pub fn round_half_up(x: f64) -> u8 {
    (x + 0.5 + EPS).floor().clamp(0.0, 100.0) as u8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellDiff {
    pub key: String,
    #[serde(rename = "ref")]
    pub reference: f64,
    pub cand: Option<f64>,
    pub credit: f64,
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentBreakdown {
    pub score: u8,
    pub coverage: f64,
    pub value_accuracy: f64,
    pub stars_match: f64,
    pub fit_match: f64,
    /// Figure series only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order_agreement: Option<f64>,
    pub per_cell: Vec<CellDiff>,
}

impl AlignmentBreakdown {
    fn zero() -> Self {
        Self {
            score: 0,
            coverage: 0.0,
            value_accuracy: 0.0,
            stars_match: 0.0,
            fit_match: 0.0,
            order_agreement: None,
            per_cell: Vec::new(),
        }
    }

    pub fn passes(&self, threshold: u8) -> bool {
        self.score >= threshold
    }
}

fn ratio(num: f64, den: usize, empty: f64) -> f64 {
    if den == 0 {
        empty
    } else {
        num / den as f64
    }
}

fn mean(values: &[f64]) -> f64 {
    ratio(values.iter().sum(), values.len(), 1.0)
}

/// First occurrence wins for duplicate normalized keys.
fn index_first<'a, T>(
    items: &'a [T],
    aliases: &AliasTable,
    label: impl Fn(&T) -> &str,
) -> HashMap<String, &'a T> {
    let mut map = HashMap::new();
    for item in items {
        map.entry(aliases.normalize(label(item))).or_insert(item);
    }
    map
}

pub fn cell_key(model: &str, variable: &str) -> String {
    format!("{model} / {variable}")
}

pub fn score(reference: &CanonicalResult, candidate: &CanonicalResult) -> AlignmentBreakdown {
    score_with(reference, candidate, &ScoreConfig::default())
}

pub fn score_with(
    reference: &CanonicalResult,
    candidate: &CanonicalResult,
    config: &ScoreConfig,
) -> AlignmentBreakdown {
    match (reference, candidate) {
        (CanonicalResult::RegressionTable(r), CanonicalResult::RegressionTable(c)) => {
            score_regression(r, c, config)
        }
        (CanonicalResult::FrequencyTable(r), CanonicalResult::FrequencyTable(c)) => {
            score_frequency(r, c, config)
        }
        (CanonicalResult::FigureSeries(r), CanonicalResult::FigureSeries(c)) => {
            score_figure(r, c, config)
        }
        _ => AlignmentBreakdown::zero(),
    }
}

fn model_fit_credits(rm: &ModelColumn, cm: Option<&ModelColumn>, config: &ScoreConfig) -> Vec<f64> {
    let mut credits = Vec::new();
    if let Some(n) = rm.n {
        credits.push(cm.and_then(|c| c.n).map_or(0.0, |cn| config.n_credit(n, cn)));
    }
    if let Some(r2) = rm.r2 {
        credits.push(cm.and_then(|c| c.r2).map_or(0.0, |c| config.r2_credit(r2, c)));
    }
    if let Some(adj) = rm.adj_r2 {
        credits.push(cm.and_then(|c| c.adj_r2).map_or(0.0, |c| config.r2_credit(adj, c)));
    }
    if let Some(k) = rm.constant {
        credits.push(
            cm.and_then(|c| c.constant)
                .map_or(0.0, |c| config.coefficient_credit(k, c)),
        );
    }
    credits
}

fn score_regression(
    reference: &RegressionTable,
    candidate: &RegressionTable,
    config: &ScoreConfig,
) -> AlignmentBreakdown {
    let aliases = &config.aliases;
    let cand_models = index_first(&candidate.models, aliases, |m| &m.label);

    let mut total = 0usize;
    let mut matched = 0usize;
    let mut credit_sum = 0.0;
    let mut stars_equal = 0usize;
    let mut fit_credits = Vec::new();
    let mut per_cell = Vec::new();

    for rm in &reference.models {
        let model_key = aliases.normalize(&rm.label);
        let cm = cand_models.get(&model_key).copied();
        let cand_cells = cm
            .map(|m| index_first(&m.cells, aliases, |c| &c.variable))
            .unwrap_or_default();
        for rc in &rm.cells {
            total += 1;
            let key = cell_key(&model_key, &aliases.normalize(&rc.variable));
            let diff = match cand_cells.get(&aliases.normalize(&rc.variable)) {
                Some(cc) => {
                    matched += 1;
                    if cc.stars == rc.stars {
                        stars_equal += 1;
                    }
                    let credit = config.coefficient_credit(rc.estimate, cc.estimate);
                    credit_sum += credit;
                    CellDiff {
                        key,
                        reference: rc.estimate,
                        cand: Some(cc.estimate),
                        credit,
                        delta: Some(cc.estimate - rc.estimate),
                    }
                }
                None => CellDiff {
                    key,
                    reference: rc.estimate,
                    cand: None,
                    credit: 0.0,
                    delta: None,
                },
            };
            per_cell.push(diff);
        }
        fit_credits.extend(model_fit_credits(rm, cm, config));
    }

    let coverage = ratio(matched as f64, total, 1.0);
    let value_accuracy = ratio(credit_sum, total, 1.0);
    let stars_match = if matched == 0 {
        if total == 0 { 1.0 } else { 0.0 }
    } else {
        stars_equal as f64 / matched as f64
    };
    let fit_match = mean(&fit_credits);
    let w = &config.table;
    let raw = 100.0
        * (w.coverage * coverage
            + w.value_accuracy * value_accuracy
            + w.stars * stars_match
            + w.fit * fit_match);
    AlignmentBreakdown {
        score: round_half_up(raw),
        coverage,
        value_accuracy,
        stars_match,
        fit_match,
        order_agreement: None,
        per_cell,
    }
}

fn score_frequency(
    reference: &FrequencyTable,
    candidate: &FrequencyTable,
    config: &ScoreConfig,
) -> AlignmentBreakdown {
    let aliases = &config.aliases;
    let cand_groups = index_first(&candidate.groups, aliases, |g| &g.label);

    let mut total = 0usize;
    let mut matched = 0usize;
    let mut exact = 0usize;
    let mut mean_credits = Vec::new();
    let mut per_cell = Vec::new();

    for rg in &reference.groups {
        let group_key = aliases.normalize(&rg.label);
        let cg = cand_groups.get(&group_key).copied();
        let cand_rows = cg
            .map(|g| index_first(&g.rows, aliases, |r| &r.category))
            .unwrap_or_default();
        for row in &rg.rows {
            total += 1;
            let key = cell_key(&group_key, &aliases.normalize(&row.category));
            let cand = cand_rows.get(&aliases.normalize(&row.category)).map(|r| r.count);
            let credit = match cand {
                Some(c) => {
                    matched += 1;
                    if c == row.count {
                        exact += 1;
                        1.0
                    } else {
                        0.0
                    }
                }
                None => 0.0,
            };
            per_cell.push(CellDiff {
                key,
                reference: row.count as f64,
                cand: cand.map(|c| c as f64),
                credit,
                delta: cand.map(|c| c as f64 - row.count as f64),
            });
        }
        if let Some(m) = rg.mean {
            mean_credits.push(
                cg.and_then(|g| g.mean)
                    .map_or(0.0, |c| config.mean_credit(m, c)),
            );
        }
    }

    let coverage = ratio(matched as f64, total, 1.0);
    let exact_fraction = ratio(exact as f64, total, 1.0);
    let mean_proximity = mean(&mean_credits);
    let w = &config.frequency;
    AlignmentBreakdown {
        score: round_half_up(100.0 * (w.counts * exact_fraction + w.means * mean_proximity)),
        coverage,
        value_accuracy: exact_fraction,
        stars_match: 1.0,
        fit_match: mean_proximity,
        order_agreement: None,
        per_cell,
    }
}

fn score_figure(
    reference: &FigureSeries,
    candidate: &FigureSeries,
    config: &ScoreConfig,
) -> AlignmentBreakdown {
    let aliases = &config.aliases;
    let ref_cats: Vec<String> = reference.categories.iter().map(|c| aliases.normalize(c)).collect();
    let cand_cats: Vec<String> = candidate.categories.iter().map(|c| aliases.normalize(c)).collect();
    let cand_series = index_first(&candidate.series, aliases, |s| &s.label);

    let mut total = 0usize;
    let mut matched = 0usize;
    let mut credit_sum = 0.0;
    let mut per_cell = Vec::new();

    for rs in &reference.series {
        let series_key = aliases.normalize(&rs.label);
        let cs = cand_series.get(&series_key).copied();
        for (cat, &rv) in ref_cats.iter().zip(&rs.values) {
            total += 1;
            let cand = cs.and_then(|s| {
                cand_cats
                    .iter()
                    .position(|c| c == cat)
                    .and_then(|i| s.values.get(i).copied())
            });
            let credit = match cand {
                Some(cv) => {
                    matched += 1;
                    config.coefficient_credit(rv, cv)
                }
                None => 0.0,
            };
            credit_sum += credit;
            per_cell.push(CellDiff {
                key: cell_key(&series_key, cat),
                reference: rv,
                cand,
                credit,
                delta: cand.map(|cv| cv - rv),
            });
        }
    }

    let coverage = ratio(matched as f64, total, 1.0);
    let value_accuracy = ratio(credit_sum, total, 1.0);
    let order = order_similarity(&ref_cats, &cand_cats);
    let w = &config.figure;
    let raw = 100.0 * (w.coverage * coverage + w.value_accuracy * value_accuracy + w.order * order);
    AlignmentBreakdown {
        score: round_half_up(raw),
        coverage,
        value_accuracy,
        stars_match: 1.0,
        fit_match: 1.0,
        order_agreement: Some(order),
        per_cell,
    }
}
