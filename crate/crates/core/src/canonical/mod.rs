//! Structured interchange form for regression tables, frequency tables and
//! figure data series.
//!
//! The same JSON document is produced by the analysis harness, by the
//! transcription prompt and by hand-written reference files, so everything
//! downstream (scoring, reports, persistence) goes through one parser.

mod labels;

use std::collections::HashSet;
use std::fmt;

use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

pub use labels::{fold_label, normalize_label, AliasTable};

#[derive(Debug, Error, Clone, PartialEq)]
#[error("schema violation at {locus}: {message}")]
pub struct SchemaViolation {
    /// JSON-path style location, e.g. `$.models[0].cells[2].stars`.
    pub locus: String,
    pub message: String,
}

impl SchemaViolation {
    pub fn new(locus: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            locus: locus.into(),
            message: message.into(),
        }
    }
}

/// Significance level as a star count: 0 = none, 1 = p<.05, 2 = p<.01,
/// 3 = p<.001.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Stars(u8);

impl Stars {
    pub const NONE: Stars = Stars(0);

    pub fn new(n: u8) -> Option<Self> {
        (n <= 3).then_some(Stars(n))
    }

    pub fn get(self) -> u8 {
        self.0
    }

    pub fn as_asterisks(self) -> &'static str {
        ["", "*", "**", "***"][self.0 as usize]
    }
}

impl fmt::Display for Stars {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_asterisks())
    }
}

impl Serialize for Stars {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_u8(self.0)
    }
}

impl<'de> Deserialize<'de> for Stars {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct StarsVisitor;

        impl Visitor<'_> for StarsVisitor {
            type Value = Stars;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("an integer 0-3 or one of \"\", \"*\", \"**\", \"***\"")
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Stars, E> {
                u8::try_from(v)
                    .ok()
                    .and_then(Stars::new)
                    .ok_or_else(|| E::custom(format!("stars out of range: {v}")))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Stars, E> {
                u64::try_from(v)
                    .map_err(|_| E::custom(format!("stars out of range: {v}")))
                    .and_then(|v| self.visit_u64(v))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<Stars, E> {
                let t = v.trim();
                if t.chars().all(|c| c == '*') && t.len() <= 3 {
                    Ok(Stars(t.len() as u8))
                } else {
                    Err(E::custom(format!("invalid star string: {v:?}")))
                }
            }
        }

        deserializer.deserialize_any(StarsVisitor)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cell {
    pub variable: String,
    /// Standardized coefficient.
    pub estimate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub se: Option<f64>,
    #[serde(default)]
    pub stars: Stars,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelColumn {
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adj_r2: Option<f64>,
    /// Unstandardized intercept.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constant: Option<f64>,
    #[serde(default)]
    pub cells: Vec<Cell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegressionTable {
    pub models: Vec<ModelColumn>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrequencyRow {
    pub category: String,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Group {
    pub label: String,
    pub rows: Vec<FrequencyRow>,
    /// Mean on the 1-5 response scale, when the table reports one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrequencyTable {
    pub groups: Vec<Group>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Series {
    pub label: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceLine {
    pub label: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FigureSeries {
    pub categories: Vec<String>,
    pub series: Vec<Series>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub reference_lines: Vec<ReferenceLine>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResultKind {
    RegressionTable,
    FrequencyTable,
    FigureSeries,
}

impl ResultKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ResultKind::RegressionTable => "regression_table",
            ResultKind::FrequencyTable => "frequency_table",
            ResultKind::FigureSeries => "figure_series",
        }
    }
}

impl fmt::Display for ResultKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A parsed and validated result document. The `kind` tag of the JSON form
/// is carried by the enum variant, so kind and payload cannot disagree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CanonicalResult {
    RegressionTable(RegressionTable),
    FrequencyTable(FrequencyTable),
    FigureSeries(FigureSeries),
}

impl CanonicalResult {
    pub fn kind(&self) -> ResultKind {
        match self {
            CanonicalResult::RegressionTable(_) => ResultKind::RegressionTable,
            CanonicalResult::FrequencyTable(_) => ResultKind::FrequencyTable,
            CanonicalResult::FigureSeries(_) => ResultKind::FigureSeries,
        }
    }

    /// Checks the structural invariants the type system cannot express.
    pub fn validate(&self) -> Result<(), SchemaViolation> {
        match self {
            CanonicalResult::RegressionTable(t) => validate_regression(t),
            CanonicalResult::FrequencyTable(t) => validate_frequency(t),
            CanonicalResult::FigureSeries(f) => validate_figure(f),
        }
    }
}

fn check_finite(v: f64, locus: impl FnOnce() -> String) -> Result<(), SchemaViolation> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(SchemaViolation::new(locus(), "number must be finite"))
    }
}

fn validate_regression(t: &RegressionTable) -> Result<(), SchemaViolation> {
    if t.models.is_empty() {
        return Err(SchemaViolation::new("$.models", "at least one model is required"));
    }
    let mut labels = HashSet::new();
    for (mi, m) in t.models.iter().enumerate() {
        if !labels.insert(normalize_label(&m.label)) {
            return Err(SchemaViolation::new(
                format!("$.models[{mi}].label"),
                format!("duplicate model label {:?}", m.label),
            ));
        }
        for (name, v) in [("r2", m.r2), ("adj_r2", m.adj_r2), ("constant", m.constant)] {
            if let Some(v) = v {
                check_finite(v, || format!("$.models[{mi}].{name}"))?;
            }
        }
        let mut keys = HashSet::new();
        for (ci, c) in m.cells.iter().enumerate() {
            if !keys.insert(normalize_label(&c.variable)) {
                return Err(SchemaViolation::new(
                    format!("$.models[{mi}].cells[{ci}].variable"),
                    format!("duplicate variable {:?}", c.variable),
                ));
            }
            check_finite(c.estimate, || format!("$.models[{mi}].cells[{ci}].estimate"))?;
            if let Some(se) = c.se {
                check_finite(se, || format!("$.models[{mi}].cells[{ci}].se"))?;
                if se < 0.0 {
                    return Err(SchemaViolation::new(
                        format!("$.models[{mi}].cells[{ci}].se"),
                        "standard error must be non-negative",
                    ));
                }
            }
        }
    }
    Ok(())
}

fn validate_frequency(t: &FrequencyTable) -> Result<(), SchemaViolation> {
    if t.groups.is_empty() {
        return Err(SchemaViolation::new("$.groups", "at least one group is required"));
    }
    let mut labels = HashSet::new();
    for (gi, g) in t.groups.iter().enumerate() {
        if !labels.insert(normalize_label(&g.label)) {
            return Err(SchemaViolation::new(
                format!("$.groups[{gi}].label"),
                format!("duplicate group label {:?}", g.label),
            ));
        }
        if let Some(mean) = g.mean {
            check_finite(mean, || format!("$.groups[{gi}].mean"))?;
        }
        let mut cats = HashSet::new();
        for (ri, r) in g.rows.iter().enumerate() {
            if !cats.insert(normalize_label(&r.category)) {
                return Err(SchemaViolation::new(
                    format!("$.groups[{gi}].rows[{ri}].category"),
                    format!("duplicate category {:?}", r.category),
                ));
            }
        }
    }
    Ok(())
}

fn validate_figure(f: &FigureSeries) -> Result<(), SchemaViolation> {
    if f.categories.is_empty() {
        return Err(SchemaViolation::new("$.categories", "at least one category is required"));
    }
    let mut cats = HashSet::new();
    for (i, c) in f.categories.iter().enumerate() {
        if !cats.insert(normalize_label(c)) {
            return Err(SchemaViolation::new(
                format!("$.categories[{i}]"),
                format!("duplicate category {c:?}"),
            ));
        }
    }
    let mut labels = HashSet::new();
    for (si, s) in f.series.iter().enumerate() {
        if !labels.insert(normalize_label(&s.label)) {
            return Err(SchemaViolation::new(
                format!("$.series[{si}].label"),
                format!("duplicate series label {:?}", s.label),
            ));
        }
        if s.values.len() != f.categories.len() {
            return Err(SchemaViolation::new(
                format!("$.series[{si}].values"),
                format!(
                    "expected {} values (one per category), found {}",
                    f.categories.len(),
                    s.values.len()
                ),
            ));
        }
        for (vi, v) in s.values.iter().enumerate() {
            check_finite(*v, || format!("$.series[{si}].values[{vi}]"))?;
        }
    }
    for (li, l) in f.reference_lines.iter().enumerate() {
        check_finite(l.value, || format!("$.reference_lines[{li}].value"))?;
    }
    Ok(())
}

fn render_path(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::from("$");
    for seg in path.iter() {
        match seg {
            Segment::Seq { index } => out.push_str(&format!("[{index}]")),
            Segment::Map { key } => {
                out.push('.');
                out.push_str(key);
            }
            Segment::Enum { variant } => {
                out.push('.');
                out.push_str(variant);
            }
            Segment::Unknown => out.push_str(".?"),
        }
    }
    out
}

/// Parses and validates a canonical-result document.
pub fn parse_result(bytes: &[u8]) -> Result<CanonicalResult, SchemaViolation> {
    let value: serde_json::Value = serde_json::from_slice(bytes)
        .map_err(|e| SchemaViolation::new("$", format!("invalid JSON: {e}")))?;
    parse_value(value)
}

pub fn parse_value(value: serde_json::Value) -> Result<CanonicalResult, SchemaViolation> {
    let kind = match value.get("kind") {
        Some(serde_json::Value::String(k)) => k.clone(),
        Some(_) => return Err(SchemaViolation::new("$.kind", "kind must be a string")),
        None => return Err(SchemaViolation::new("$.kind", "missing field `kind`")),
    };
    let mut payload = value;
    if let Some(obj) = payload.as_object_mut() {
        obj.remove("kind");
    }
    let result = match kind.as_str() {
        "regression_table" => CanonicalResult::RegressionTable(from_value(payload)?),
        "frequency_table" => CanonicalResult::FrequencyTable(from_value(payload)?),
        "figure_series" => CanonicalResult::FigureSeries(from_value(payload)?),
        other => {
            return Err(SchemaViolation::new(
                "$.kind",
                format!("unknown kind {other:?}"),
            ))
        }
    };
    result.validate()?;
    Ok(result)
}

fn from_value<T: de::DeserializeOwned>(v: serde_json::Value) -> Result<T, SchemaViolation> {
    serde_path_to_error::deserialize(v).map_err(|e| {
        let locus = render_path(e.path());
        SchemaViolation::new(locus, e.into_inner().to_string())
    })
}

/// Pretty-printed JSON with a trailing newline. Field order follows the type
/// definitions, so equal results always produce identical bytes.
pub fn serialize(result: &CanonicalResult) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(result).expect("canonical results always serialize");
    out.push(b'\n');
    out
}
