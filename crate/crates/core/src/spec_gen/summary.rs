use regex::Regex;
use serde::{Deserialize, Serialize};

use super::markdown::{sections, strip_emphasis, strip_marker, Section};
use super::SpecWarning;
use crate::canonical::ResultKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    RegressionTable,
    FrequencyTable,
    Figure,
}

impl TargetKind {
    pub fn result_kind(self) -> ResultKind {
        match self {
            TargetKind::RegressionTable => ResultKind::RegressionTable,
            TargetKind::FrequencyTable => ResultKind::FrequencyTable,
            TargetKind::Figure => ResultKind::FigureSeries,
        }
    }

    pub fn from_result_kind(kind: ResultKind) -> Self {
        match kind {
            ResultKind::RegressionTable => TargetKind::RegressionTable,
            ResultKind::FrequencyTable => TargetKind::FrequencyTable,
            ResultKind::FigureSeries => TargetKind::Figure,
        }
    }

    fn from_text(s: &str) -> Option<Self> {
        let s = s.to_lowercase();
        if s.contains("regression") {
            Some(TargetKind::RegressionTable)
        } else if s.contains("frequency") {
            Some(TargetKind::FrequencyTable)
        } else if s.contains("figure") {
            Some(TargetKind::Figure)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub label: String,
    pub dependent_variable: Option<String>,
    pub independent_variables: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Checklist {
    pub dependent_variable: Option<String>,
    pub independent_variables: Vec<String>,
    pub models: Vec<ModelSpec>,
    pub transformations: Vec<String>,
    pub sample_restrictions: Vec<String>,
    pub missing_rules: Vec<String>,
    pub axes: Vec<String>,
    pub series: Vec<String>,
    pub reference_lines: Vec<String>,
    pub annotations: Vec<String>,
}

impl Checklist {
    pub fn is_empty(&self) -> bool {
        self.dependent_variable.is_none()
            && self.independent_variables.is_empty()
            && self.models.is_empty()
            && self.transformations.is_empty()
            && self.sample_restrictions.is_empty()
            && self.missing_rules.is_empty()
            && self.axes.is_empty()
            && self.series.is_empty()
            && self.reference_lines.is_empty()
            && self.annotations.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetSummary {
    pub target_id: String,
    pub kind: TargetKind,
    /// The model's reply, verbatim. This, not the checklist, goes into
    /// code-generation prompts.
    pub narrative: String,
    pub checklist: Checklist,
    pub warnings: Vec<SpecWarning>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Topic {
    Kind,
    Dv,
    Ivs,
    Models,
    Model,
    Transform,
    Sample,
    Missing,
    Axes,
    Series,
    RefLines,
    Annotations,
    Plot,
    Other,
}

fn topic(heading: &str) -> Topic {
    let h = heading.to_lowercase();
    let has = |k: &str| h.contains(k);
    if model_label(heading).is_some() {
        Topic::Model
    } else if h == "kind" {
        Topic::Kind
    } else if has("dependent variable") || has("outcome") {
        Topic::Dv
    } else if has("independent variable") || has("predictor") {
        Topic::Ivs
    } else if h == "models" {
        Topic::Models
    } else if has("missing") {
        Topic::Missing
    } else if has("reference line") {
        Topic::RefLines
    } else if has("annotation") {
        Topic::Annotations
    } else if has("axes") || has("axis") {
        Topic::Axes
    } else if h == "series" {
        Topic::Series
    } else if has("plot") {
        Topic::Plot
    } else if has("sample") || has("restriction") || has("data source") || has("filter") {
        Topic::Sample
    } else if has("transform") || has("recode") || has("coding") || has("construct") || has("step") {
        Topic::Transform
    } else {
        Topic::Other
    }
}

fn model_label(s: &str) -> Option<String> {
    let re = Regex::new(r"(?i)^model\s+([A-Za-z0-9]+)").expect("valid regex");
    let plain = strip_emphasis(s);
    re.captures(&plain).map(|c| format!("Model {}", &c[1]))
}

fn clean(line: &str) -> String {
    strip_emphasis(strip_marker(line)).replace('*', "").trim().to_string()
}

/// `DV: x` / `IVs: a, b` style labels inside a section.
fn labelled(line: &str) -> Option<(&'static str, String)> {
    let c = clean(line);
    let (label, rest) = c.split_once(':')?;
    let label = label.trim().to_lowercase();
    let rest = rest.trim().to_string();
    match label.as_str() {
        "dv" | "dependent variable" | "outcome" => Some(("dv", rest)),
        "ivs" | "iv" | "independent variables" | "predictors" => Some(("ivs", rest)),
        _ => None,
    }
}

fn split_list(s: &str) -> Vec<String> {
    s.split(',')
        .map(|x| x.trim().trim_end_matches('.').to_string())
        .filter(|x| !x.is_empty())
        .collect()
}

fn dv_text(line: &str) -> String {
    let c = clean(line);
    match c.split_once('=') {
        Some((_, rhs)) => rhs.trim().to_string(),
        None => c,
    }
}

fn mentions_missing(line: &str) -> bool {
    let l = line.to_lowercase();
    l.contains("missing") || l.contains("don't know") || l.contains("dont know")
}

fn is_numbered(line: &str) -> bool {
    let t = line.trim();
    let digits = t.chars().take_while(|c| c.is_ascii_digit()).count();
    digits > 0 && (t[digits..].starts_with(". ") || t[digits..].starts_with(") "))
}

fn classify_plot_line(c: &mut Checklist, line: &str, in_series: &mut bool) {
    let l = line.to_lowercase();
    let text = clean(line);
    if *in_series && is_numbered(line) {
        c.series.push(text);
        return;
    }
    *in_series = l.contains("series");
    if l.contains("horizontal") || l.contains("reference line") || l.contains("dotted line") {
        c.reference_lines.push(text);
    } else if l.contains("annotation") || l.contains("arrow") {
        c.annotations.push(text);
    } else if l.contains("axis") || l.contains("axes") {
        c.axes.push(text);
    } else if !*in_series {
        c.transformations.push(text);
    }
}

fn apply_section(c: &mut Checklist, section: &Section, kind_text: &mut Option<String>) {
    let t = topic(&section.heading);
    if t == Topic::Model {
        let mut model = ModelSpec {
            label: model_label(&section.heading).unwrap_or_default(),
            ..Default::default()
        };
        for line in &section.lines {
            match labelled(line) {
                Some(("dv", v)) => model.dependent_variable = Some(dv_text(&v)),
                Some((_, v)) => model.independent_variables = split_list(&v),
                None => {}
            }
        }
        c.models.push(model);
        return;
    }
    let mut in_series = false;
    for (i, line) in section.lines.iter().enumerate() {
        let text = clean(line);
        if text.is_empty() || text.starts_with('|') {
            continue;
        }
        if let Some((which, v)) = labelled(line) {
            if which == "dv" {
                c.dependent_variable.get_or_insert_with(|| dv_text(&v));
            } else {
                c.independent_variables.extend(split_list(&v));
            }
            continue;
        }
        match t {
            Topic::Kind => *kind_text = Some(text),
            Topic::Dv if i == 0 && c.dependent_variable.is_none() => c.dependent_variable = Some(dv_text(line)),
            Topic::Dv => {
                if mentions_missing(line) {
                    c.missing_rules.push(text)
                } else {
                    c.transformations.push(text)
                }
            }
            Topic::Ivs => c.independent_variables.extend(split_list(&text)),
            Topic::Models => match model_label(&text) {
                Some(label) => {
                    let ivs = text.split_once(':').map(|(_, r)| split_list(r)).unwrap_or_default();
                    c.models.push(ModelSpec {
                        label,
                        dependent_variable: None,
                        independent_variables: ivs,
                    });
                }
                None => c.transformations.push(text),
            },
            Topic::Transform | Topic::Sample if mentions_missing(line) => c.missing_rules.push(text),
            Topic::Transform => c.transformations.push(text),
            Topic::Sample => c.sample_restrictions.push(text),
            Topic::Missing => c.missing_rules.push(text),
            Topic::Axes => c.axes.push(text),
            Topic::Series => c.series.push(text),
            Topic::RefLines => c.reference_lines.push(text),
            Topic::Annotations => c.annotations.push(text),
            Topic::Plot => classify_plot_line(c, line, &mut in_series),
            Topic::Model | Topic::Other => {
                if mentions_missing(line) {
                    c.missing_rules.push(text);
                }
            }
        }
    }
}

/// Best-effort recovery of the checklist from a model-written summary. The
/// kind comes from the reference when one is known, then from an explicit
/// `Kind:` section, then from the target id.
pub fn parse_summary(target_id: &str, narrative: &str, reference_kind: Option<ResultKind>) -> TargetSummary {
    let mut checklist = Checklist::default();
    let mut kind_text = None;
    let secs = sections(narrative);
    let headed = secs.iter().any(|s| !s.heading.is_empty());
    if headed {
        for s in &secs {
            apply_section(&mut checklist, s, &mut kind_text);
        }
    }
    for m in &checklist.models {
        if checklist.dependent_variable.is_none() {
            checklist.dependent_variable = m.dependent_variable.clone();
        }
    }

    let mut warnings = Vec::new();
    if checklist.is_empty() {
        warnings.push(SpecWarning::UnparseableSummary);
    }
    let stated = kind_text.as_deref().and_then(TargetKind::from_text);
    let from_target = if target_id.to_lowercase().starts_with("fig") {
        TargetKind::Figure
    } else if narrative.to_lowercase().contains("frequenc") && !narrative.to_lowercase().contains("regression") {
        TargetKind::FrequencyTable
    } else {
        TargetKind::RegressionTable
    };
    let kind = match (reference_kind.map(TargetKind::from_result_kind), stated) {
        (Some(r), Some(s)) if r != s => {
            warnings.push(SpecWarning::KindConflict {
                stated: s,
                reference: r,
            });
            r
        }
        (Some(r), _) => r,
        (None, Some(s)) => s,
        (None, None) => from_target,
    };
    TargetSummary {
        target_id: target_id.to_string(),
        kind,
        narrative: narrative.to_string(),
        checklist,
        warnings,
    }
}
