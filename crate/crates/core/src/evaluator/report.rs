//! Structured discrepancy reports.
//!
//! Sections always appear in the same order so successive reports for a run
//! can be diffed line by line.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{inversions, AlignmentBreakdown, ScoreConfig};
use crate::canonical::{
    AliasTable, CanonicalResult, FigureSeries, FrequencyTable, ModelColumn, RegressionTable, Stars,
};

const MAX_INVERSIONS_LISTED: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportSection {
    pub title: String,
    pub lines: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscrepancyReport {
    pub score: u8,
    pub sections: Vec<ReportSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub narrative: Option<String>,
}

impl DiscrepancyReport {
    pub fn is_clean(&self) -> bool {
        self.sections.is_empty()
    }

    pub fn section(&self, title: &str) -> Option<&ReportSection> {
        self.sections.iter().find(|s| s.title == title)
    }

    pub fn to_markdown(&self) -> String {
        let mut out = format!("# Discrepancy report\n\nAlignment score: {}/100\n", self.score);
        if self.sections.is_empty() {
            out.push_str("\nNo discrepancies found.\n");
        }
        for section in &self.sections {
            out.push_str(&format!("\n## {}\n\n", section.title));
            for line in &section.lines {
                out.push_str(&format!("- {line}\n"));
            }
        }
        if let Some(narrative) = &self.narrative {
            out.push_str("\n## Reviewer narrative\n\n");
            out.push_str(narrative.trim_end());
            out.push('\n');
        }
        out
    }
}

struct Builder {
    sections: Vec<ReportSection>,
}

impl Builder {
    fn new() -> Self {
        Self { sections: Vec::new() }
    }

    fn add(&mut self, title: &str, lines: Vec<String>) {
        if !lines.is_empty() {
            self.sections.push(ReportSection {
                title: title.to_string(),
                lines,
            });
        }
    }
}

fn num(v: f64) -> String {
    format!("{v:.3}")
}

fn delta(v: f64) -> String {
    format!("{v:+.4}")
}

fn stars(s: Stars) -> String {
    if s.get() == 0 {
        "(none)".to_string()
    } else {
        s.as_asterisks().to_string()
    }
}

/// Labels in `items` whose normalized key repeats an earlier one.
fn duplicates<T>(items: &[T], aliases: &AliasTable, label: impl Fn(&T) -> &str) -> Vec<String> {
    let mut seen = HashSet::new();
    items
        .iter()
        .map(|i| label(i).to_string())
        .filter(|l| !seen.insert(aliases.normalize(l)))
        .collect()
}

fn index<'a, T>(items: &'a [T], aliases: &AliasTable, label: impl Fn(&T) -> &str) -> HashMap<String, &'a T> {
    let mut map = HashMap::new();
    for item in items {
        map.entry(aliases.normalize(label(item))).or_insert(item);
    }
    map
}

pub fn compose_discrepancy(
    reference: &CanonicalResult,
    candidate: &CanonicalResult,
    breakdown: &AlignmentBreakdown,
    config: &ScoreConfig,
) -> DiscrepancyReport {
    let mut b = Builder::new();
    match (reference, candidate) {
        (CanonicalResult::RegressionTable(r), CanonicalResult::RegressionTable(c)) => {
            regression_sections(&mut b, r, c, config)
        }
        (CanonicalResult::FrequencyTable(r), CanonicalResult::FrequencyTable(c)) => {
            frequency_sections(&mut b, r, c, config)
        }
        (CanonicalResult::FigureSeries(r), CanonicalResult::FigureSeries(c)) => {
            figure_sections(&mut b, r, c, config)
        }
        _ => b.add(
            "Kind and structure",
            vec![format!(
                "result kind differs: candidate is {}, reference is {}",
                candidate.kind(),
                reference.kind()
            )],
        ),
    }
    DiscrepancyReport {
        score: breakdown.score,
        sections: b.sections,
        narrative: None,
    }
}

fn regression_sections(b: &mut Builder, r: &RegressionTable, c: &RegressionTable, config: &ScoreConfig) {
    let aliases = &config.aliases;
    let cand_models = index(&c.models, aliases, |m| &m.label);
    let ref_models = index(&r.models, aliases, |m| &m.label);

    let mut structure = Vec::new();
    for dup in duplicates(&c.models, aliases, |m| &m.label) {
        structure.push(format!("duplicate model {dup:?} in candidate; first occurrence used"));
    }
    for m in &c.models {
        for dup in duplicates(&m.cells, aliases, |c| &c.variable) {
            structure.push(format!(
                "duplicate variable {dup:?} in candidate model {:?}; first occurrence used",
                m.label
            ));
        }
    }
    if r.models.len() != c.models.len() {
        structure.push(format!(
            "candidate has {} models, reference has {}",
            c.models.len(),
            r.models.len()
        ));
    }
    b.add("Kind and structure", structure);

    let pairs: Vec<(&ModelColumn, Option<&ModelColumn>)> = r
        .models
        .iter()
        .map(|rm| (rm, cand_models.get(&aliases.normalize(&rm.label)).copied()))
        .collect();

    let mut sizes = Vec::new();
    for (rm, cm) in &pairs {
        if let Some(n) = rm.n {
            match cm.and_then(|m| m.n) {
                Some(cn) if cn == n => {}
                Some(cn) => sizes.push(format!(
                    "{}: {cn} vs {n} (Δ {:+})",
                    rm.label,
                    cn as i64 - n as i64
                )),
                None => sizes.push(format!("{}: not reported vs {n}", rm.label)),
            }
        }
    }
    b.add("Sample sizes", sizes);

    let mut coefs = Vec::new();
    let mut star_lines = Vec::new();
    let mut missing = Vec::new();
    for (rm, cm) in &pairs {
        let cand_cells = cm.map(|m| index(&m.cells, aliases, |c| &c.variable)).unwrap_or_default();
        for rc in &rm.cells {
            let Some(cc) = cand_cells.get(&aliases.normalize(&rc.variable)) else {
                missing.push(format!("missing in candidate: {} / {}", rm.label, rc.variable));
                continue;
            };
            let credit = config.coefficient_credit(rc.estimate, cc.estimate);
            if credit < 1.0 {
                let sign = if rc.estimate * cc.estimate < 0.0 { ", sign differs" } else { "" };
                coefs.push(format!(
                    "{} / {}: {} vs {} (Δ {}, credit {credit}{sign})",
                    rm.label,
                    rc.variable,
                    num(cc.estimate),
                    num(rc.estimate),
                    delta(cc.estimate - rc.estimate)
                ));
            }
            if cc.stars != rc.stars {
                star_lines.push(format!(
                    "{} / {}: {} vs {}",
                    rm.label,
                    rc.variable,
                    stars(cc.stars),
                    stars(rc.stars)
                ));
            }
        }
        if let Some(cm) = cm {
            let ref_cells = index(&rm.cells, aliases, |c| &c.variable);
            for cc in &cm.cells {
                if !ref_cells.contains_key(&aliases.normalize(&cc.variable)) {
                    missing.push(format!("extra in candidate: {} / {}", rm.label, cc.variable));
                }
            }
        }
    }
    b.add("Coefficients", coefs);
    b.add("Significance stars", star_lines);

    let mut fit = Vec::new();
    for (rm, cm) in &pairs {
        let stats = [
            ("R²", rm.r2, cm.and_then(|m| m.r2), true),
            ("adjusted R²", rm.adj_r2, cm.and_then(|m| m.adj_r2), true),
            ("constant", rm.constant, cm.and_then(|m| m.constant), false),
        ];
        for (name, rv, cv, is_r2) in stats {
            let Some(rv) = rv else { continue };
            match cv {
                Some(cv) => {
                    let credit = if is_r2 {
                        config.r2_credit(rv, cv)
                    } else {
                        config.coefficient_credit(rv, cv)
                    };
                    if credit < 1.0 {
                        fit.push(format!(
                            "{} {name}: {} vs {} (Δ {})",
                            rm.label,
                            num(cv),
                            num(rv),
                            delta(cv - rv)
                        ));
                    }
                }
                None => fit.push(format!("{} {name}: not reported vs {}", rm.label, num(rv))),
            }
        }
    }
    b.add("Fit statistics", fit);

    for (rm, cm) in &pairs {
        if cm.is_none() {
            missing.insert(0, format!("missing in candidate: model {:?}", rm.label));
        }
    }
    for cm in &c.models {
        if !ref_models.contains_key(&aliases.normalize(&cm.label)) {
            missing.push(format!("extra in candidate: model {:?}", cm.label));
        }
    }
    b.add("Missing and extra labels", missing);
}

fn frequency_sections(b: &mut Builder, r: &FrequencyTable, c: &FrequencyTable, config: &ScoreConfig) {
    let aliases = &config.aliases;
    let cand_groups = index(&c.groups, aliases, |g| &g.label);
    let ref_groups = index(&r.groups, aliases, |g| &g.label);

    let mut structure = Vec::new();
    for dup in duplicates(&c.groups, aliases, |g| &g.label) {
        structure.push(format!("duplicate group {dup:?} in candidate; first occurrence used"));
    }
    b.add("Kind and structure", structure);

    let mut counts = Vec::new();
    let mut means = Vec::new();
    let mut missing = Vec::new();
    for rg in &r.groups {
        let Some(cg) = cand_groups.get(&aliases.normalize(&rg.label)) else {
            missing.push(format!("missing in candidate: group {:?}", rg.label));
            continue;
        };
        let cand_rows = index(&cg.rows, aliases, |r| &r.category);
        for row in &rg.rows {
            match cand_rows.get(&aliases.normalize(&row.category)) {
                Some(cr) if cr.count != row.count => counts.push(format!(
                    "{} / {}: {} vs {} (Δ {:+})",
                    rg.label,
                    row.category,
                    cr.count,
                    row.count,
                    cr.count as i64 - row.count as i64
                )),
                Some(_) => {}
                None => missing.push(format!("missing in candidate: {} / {}", rg.label, row.category)),
            }
        }
        if let Some(m) = rg.mean {
            match cg.mean {
                Some(cm) if config.mean_credit(m, cm) < 1.0 => {
                    means.push(format!("{}: {} vs {} (Δ {})", rg.label, num(cm), num(m), delta(cm - m)))
                }
                Some(_) => {}
                None => means.push(format!("{}: not reported vs {}", rg.label, num(m))),
            }
        }
    }
    for cg in &c.groups {
        if !ref_groups.contains_key(&aliases.normalize(&cg.label)) {
            missing.push(format!("extra in candidate: group {:?}", cg.label));
        }
    }
    b.add("Counts", counts);
    b.add("Group means", means);
    b.add("Missing and extra labels", missing);
}

fn figure_sections(b: &mut Builder, r: &FigureSeries, c: &FigureSeries, config: &ScoreConfig) {
    let aliases = &config.aliases;
    let ref_cats: Vec<String> = r.categories.iter().map(|x| aliases.normalize(x)).collect();
    let cand_cats: Vec<String> = c.categories.iter().map(|x| aliases.normalize(x)).collect();

    let mut structure = Vec::new();
    for dup in duplicates(&c.series, aliases, |s| &s.label) {
        structure.push(format!("duplicate series {dup:?} in candidate; first occurrence used"));
    }
    if r.series.len() != c.series.len() {
        structure.push(format!(
            "candidate has {} series, reference has {}",
            c.series.len(),
            r.series.len()
        ));
    }
    b.add("Kind and structure", structure);

    let inv = inversions(&ref_cats, &cand_cats);
    let mut order = Vec::new();
    if !inv.is_empty() {
        let shared = ref_cats.iter().filter(|x| cand_cats.contains(x)).count();
        let pairs = shared * shared.saturating_sub(1) / 2;
        if pairs > 0 && inv.len() == pairs {
            order.push("category order is reversed".to_string());
        }
        order.push(format!("{} of {pairs} category pairs are inverted", inv.len()));
        for (a, z) in inv.iter().take(MAX_INVERSIONS_LISTED) {
            order.push(format!("{a:?} should precede {z:?}"));
        }
        if inv.len() > MAX_INVERSIONS_LISTED {
            order.push(format!("... {} more", inv.len() - MAX_INVERSIONS_LISTED));
        }
        order.push(format!("reference order: {}", r.categories.join(", ")));
        order.push(format!("candidate order: {}", c.categories.join(", ")));
    }
    b.add("Category order", order);

    let cand_series = index(&c.series, aliases, |s| &s.label);
    let mut values = Vec::new();
    let mut missing = Vec::new();
    for rs in &r.series {
        let Some(cs) = cand_series.get(&aliases.normalize(&rs.label)) else {
            missing.push(format!("missing in candidate: series {:?}", rs.label));
            continue;
        };
        for ((cat, label), &rv) in ref_cats.iter().zip(&r.categories).zip(&rs.values) {
            match cand_cats.iter().position(|x| x == cat).and_then(|i| cs.values.get(i)) {
                Some(&cv) if config.coefficient_credit(rv, cv) < 1.0 => values.push(format!(
                    "{} / {label}: {} vs {} (Δ {})",
                    rs.label,
                    num(cv),
                    num(rv),
                    delta(cv - rv)
                )),
                Some(_) => {}
                None => missing.push(format!("missing in candidate: {} / {label}", rs.label)),
            }
        }
    }
    b.add("Series values", values);

    let cand_lines = index(&c.reference_lines, aliases, |l| &l.label);
    let mut lines = Vec::new();
    for rl in &r.reference_lines {
        match cand_lines.get(&aliases.normalize(&rl.label)) {
            Some(cl) if config.coefficient_credit(rl.value, cl.value) < 1.0 => lines.push(format!(
                "{}: {} vs {} (Δ {})",
                rl.label,
                num(cl.value),
                num(rl.value),
                delta(cl.value - rl.value)
            )),
            Some(_) => {}
            None => lines.push(format!("{}: missing in candidate", rl.label)),
        }
    }
    b.add("Reference lines", lines);

    let ref_series = index(&r.series, aliases, |s| &s.label);
    for cs in &c.series {
        if !ref_series.contains_key(&aliases.normalize(&cs.label)) {
            missing.push(format!("extra in candidate: series {:?}", cs.label));
        }
    }
    for (cat, label) in cand_cats.iter().zip(&c.categories) {
        if !ref_cats.contains(cat) {
            missing.push(format!("extra in candidate: category {label:?}"));
        }
    }
    b.add("Missing and extra labels", missing);
}
