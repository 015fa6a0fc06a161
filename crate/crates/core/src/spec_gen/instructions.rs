use std::collections::HashSet;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::markdown::{sections, strip_emphasis, strip_marker};
use super::SpecWarning;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariableMapping {
    pub concept: String,
    /// Column names referenced by the mapping, e.g. both columns of
    /// `REALINC / HOMPOP`.
    pub columns: Vec<String>,
    pub expression: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MissingRule {
    pub column: String,
    pub codes: Vec<i64>,
    pub text: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructionSummary {
    pub narrative: String,
    pub variable_map: Vec<VariableMapping>,
    pub recodes: Vec<String>,
    pub derived_rules: Vec<String>,
    pub missing_rules: Vec<MissingRule>,
    pub warnings: Vec<SpecWarning>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Topic {
    Map,
    Recode,
    Derived,
    Missing,
}

fn topic(heading: &str) -> Topic {
    let h = heading.to_lowercase();
    if h.contains("missing") {
        Topic::Missing
    } else if h.contains("recode") || h.contains("coding") {
        Topic::Recode
    } else if h.contains("derived") || h.contains("scale") || h.contains("index") {
        Topic::Derived
    } else {
        Topic::Map
    }
}

fn identifiers(expr: &str) -> Vec<String> {
    let re = Regex::new(r"[A-Za-z_][A-Za-z0-9_]*").expect("valid regex");
    let mut out: Vec<String> = Vec::new();
    for m in re.find_iter(expr) {
        let id = m.as_str();
        if !["and", "or", "not", "if", "in", "is"].contains(&id) && !out.iter().any(|o| o == id) {
            out.push(id.to_string());
        }
    }
    out
}

fn clean(s: &str) -> String {
    strip_emphasis(s).replace('*', "").trim().to_string()
}

fn mappings_from_line(line: &str) -> Vec<VariableMapping> {
    let tick = Regex::new(r"`([^`]+)`").expect("valid regex");
    let ticks: Vec<_> = tick.captures_iter(line).collect();
    if ticks.is_empty() {
        return Vec::new();
    }
    let t = line.trim();
    if t.starts_with('|') {
        let cells: Vec<&str> = t.trim_matches('|').split('|').map(str::trim).collect();
        if cells.len() >= 2 {
            let expr = ticks[0][1].to_string();
            return vec![VariableMapping {
                concept: clean(cells[0]),
                columns: identifiers(&expr),
                expression: expr,
            }];
        }
    }
    let first = ticks[0].get(0).expect("match").start();
    // "Concept: `COL`" puts a label before the first backtick.
    let prefix = clean(&line[..first]);
    let prefix = strip_marker(&prefix).trim_end_matches(['-', '–', '—']).trim();
    if let Some(concept) = prefix.strip_suffix(':').or_else(|| prefix.split_once(':').map(|(c, _)| c)) {
        let concept = clean(concept);
        if !concept.is_empty() {
            let expr = ticks[0][1].to_string();
            return vec![VariableMapping {
                concept,
                columns: identifiers(&expr),
                expression: expr,
            }];
        }
    }
    // Lists like "1. `LATIN` (Latin/Salsa)   10. `BLUGRASS` (Bluegrass)".
    let paren = Regex::new(r"`([^`]+)`\s*(?:\(([^)]*)\))?").expect("valid regex");
    paren
        .captures_iter(line)
        .map(|c| {
            let expr = c[1].to_string();
            let concept = c.get(2).map(|m| m.as_str().trim().to_string()).unwrap_or_else(|| expr.clone());
            VariableMapping {
                concept,
                columns: identifiers(&expr),
                expression: expr,
            }
        })
        .collect()
}

fn missing_from_line(line: &str) -> Option<MissingRule> {
    let text = clean(strip_marker(line));
    let (head, rest) = text.split_once(':')?;
    let column = head.trim().trim_matches('`').trim().to_string();
    if column.is_empty() || column.contains(' ') {
        return None;
    }
    let codes = Regex::new(r"-?\d+")
        .expect("valid regex")
        .find_iter(rest)
        .filter_map(|m| m.as_str().parse().ok())
        .collect();
    Some(MissingRule {
        column,
        codes,
        text: rest.trim().to_string(),
    })
}

/// Recovers the variable map and rule lists and checks every mapped column
/// against `columns`. Unknown columns are kept and reported as warnings.
pub fn parse_instructions(narrative: &str, columns: &[String]) -> InstructionSummary {
    let mut out = InstructionSummary {
        narrative: narrative.to_string(),
        ..Default::default()
    };
    for section in sections(narrative) {
        let t = topic(&section.heading);
        for line in &section.lines {
            let text = clean(strip_marker(line));
            if text.is_empty() || text.chars().all(|c| "|-: ".contains(c)) {
                continue;
            }
            match t {
                Topic::Map => out.variable_map.extend(mappings_from_line(line)),
                Topic::Recode => out.recodes.push(text),
                Topic::Derived => out.derived_rules.push(text),
                Topic::Missing => match missing_from_line(line) {
                    Some(rule) => out.missing_rules.push(rule),
                    None => out.recodes.push(text),
                },
            }
        }
    }

    let known: HashSet<String> = columns.iter().map(|c| c.to_uppercase()).collect();
    let mut reported = HashSet::new();
    for m in &out.variable_map {
        for col in &m.columns {
            if !known.contains(&col.to_uppercase()) && reported.insert(col.clone()) {
                out.warnings.push(SpecWarning::UnknownColumn {
                    concept: m.concept.clone(),
                    column: col.clone(),
                });
            }
        }
    }
    out
}
