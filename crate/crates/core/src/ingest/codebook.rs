//! Codebook parsing.
//!
//! Grammar: variable blocks are separated by blank lines and the first token
//! of a block is the variable name. The rest of the block is split into
//! segments on `;` and line breaks. A segment made only of `code=label`
//! pairs contributes value labels, `missing: 8, 9` (or `missing: none`)
//! overrides automatic missing-code detection, and anything else is
//! description text. Blocks whose first token is not an identifier are kept
//! as description-only entries.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::IngestError;

/// Label texts that mark a code as missing rather than substantive.
const MISSING_LABELS: &[&str] = &[
    "dont know",
    "no answer",
    "refused",
    "not applicable",
    "na",
    "dk",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariableDoc {
    pub name: String,
    pub description: String,
    pub value_labels: BTreeMap<i64, String>,
    pub missing_codes: Vec<i64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "warning", rename_all = "snake_case")]
pub enum CodebookWarning {
    DuplicateVariable { name: String, block: usize },
    UnparsedBlock { name: String, block: usize },
    MissingCodeOverlap { name: String, code: i64, label: String },
}

impl fmt::Display for CodebookWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CodebookWarning::DuplicateVariable { name, block } => {
                write!(f, "duplicate variable {name} in block {block}; first definition kept")
            }
            CodebookWarning::UnparsedBlock { name, block } => {
                write!(f, "block {block} ({name}) kept as description only")
            }
            CodebookWarning::MissingCodeOverlap { name, code, label } => {
                write!(f, "{name}: missing code {code} has substantive label {label:?}")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Codebook {
    pub variables: Vec<VariableDoc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<CodebookWarning>,
}

impl Codebook {
    pub fn get(&self, name: &str) -> Option<&VariableDoc> {
        let key = name.to_lowercase();
        self.variables.iter().find(|v| v.name.to_lowercase() == key)
    }

    /// Renders the codebook back into the text grammar. Parsing the output
    /// yields a structurally equal codebook (warnings aside).
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (i, var) in self.variables.iter().enumerate() {
            if i > 0 {
                out.push('\n');
            }
            out.push_str(&var.name);
            if !var.description.is_empty() {
                out.push_str(if is_identifier(&var.name) { " — " } else { " " });
                out.push_str(&var.description);
            }
            out.push('\n');
            if is_identifier(&var.name) {
                for (code, label) in &var.value_labels {
                    out.push_str(&format!("  {code} = {label}\n"));
                }
                let list = if var.missing_codes.is_empty() {
                    "none".to_string()
                } else {
                    var.missing_codes
                        .iter()
                        .map(i64::to_string)
                        .collect::<Vec<_>>()
                        .join(", ")
                };
                out.push_str(&format!("  missing: {list}\n"));
            }
        }
        out
    }
}

fn is_identifier(token: &str) -> bool {
    let mut chars = token.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
}

fn label_pair_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^(-?\d+)\s*[=:]\s*(\S.*)$").unwrap())
}

fn missing_directive_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)^missing\s*[:=]\s*(.*)$").unwrap())
}

/// True when a value label denotes a non-substantive response.
pub fn is_missing_label(label: &str) -> bool {
    let folded: String = label
        .to_lowercase()
        .chars()
        .filter(|c| *c != '\'' && *c != '\u{2019}')
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect();
    let words: Vec<&str> = folded.split_whitespace().collect();
    let joined = words.join(" ");
    MISSING_LABELS.iter().any(|m| {
        if m.contains(' ') {
            joined == *m || joined.starts_with(&format!("{m} "))
        } else {
            joined == *m
        }
    })
}

fn split_segments(body: &str) -> Vec<String> {
    body.split(['\n', ';'])
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

fn parse_label_segment(segment: &str) -> Option<Vec<(i64, String)>> {
    let mut pairs = Vec::new();
    for piece in segment.split(',') {
        let caps = label_pair_re().captures(piece.trim())?;
        let code = caps[1].parse().ok()?;
        pairs.push((code, caps[2].trim().to_string()));
    }
    Some(pairs)
}

fn parse_code_list(list: &str) -> Option<Vec<i64>> {
    let list = list.trim();
    if list.eq_ignore_ascii_case("none") || list.is_empty() {
        return Some(Vec::new());
    }
    list.split(',').map(|c| c.trim().parse().ok()).collect()
}

/// Strips a dash-like separator between the name and the description. Only
/// the first line is considered, and `-` must be followed by whitespace so a
/// negative value code is never mistaken for a separator.
fn strip_separator(rest: &str) -> &str {
    let head = rest.trim_start_matches([' ', '\t']);
    for sep in ["—", "–", ":", "--", "-"] {
        if let Some(stripped) = head.strip_prefix(sep) {
            if sep.starts_with('-') && !stripped.starts_with(char::is_whitespace) {
                continue;
            }
            return stripped.trim_start();
        }
    }
    rest.trim_start()
}

/// Splits a block into its leading variable name and the remainder. Returns
/// `None` when the block does not open with an identifier.
fn split_name(block: &str) -> Option<(&str, &str)> {
    let end = block
        .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_' || c == '.'))
        .unwrap_or(block.len());
    let (name, rest) = block.split_at(end);
    let boundary_ok = rest.is_empty()
        || rest.starts_with(char::is_whitespace)
        || ["—", "–", ":", "-"].iter().any(|s| rest.starts_with(s));
    (is_identifier(name) && boundary_ok).then_some((name, rest))
}

fn blocks(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current = String::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            if !current.trim().is_empty() {
                out.push(std::mem::take(&mut current));
            }
            current.clear();
        } else {
            current.push_str(line);
            current.push('\n');
        }
    }
    if !current.trim().is_empty() {
        out.push(current);
    }
    out
}

pub fn parse_codebook(text: &str) -> Result<Codebook, IngestError> {
    if text.trim().is_empty() {
        return Err(IngestError::EmptyCodebook);
    }
    let mut book = Codebook::default();
    let mut seen = HashSet::new();

    for (block_index, block) in blocks(text).into_iter().enumerate() {
        let block = block.trim();
        let doc = if let Some((name, rest)) = split_name(block) {
            parse_variable_block(name, strip_separator(rest), &mut book.warnings)
        } else {
            let name = block.split_whitespace().next().unwrap_or_default().to_string();
            book.warnings.push(CodebookWarning::UnparsedBlock {
                name: name.clone(),
                block: block_index,
            });
            let description = block[name.len()..]
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .collect::<Vec<_>>()
                .join(" ");
            VariableDoc {
                name,
                description,
                value_labels: BTreeMap::new(),
                missing_codes: Vec::new(),
            }
        };

        if !seen.insert(doc.name.to_lowercase()) {
            book.warnings.push(CodebookWarning::DuplicateVariable {
                name: doc.name,
                block: block_index,
            });
            continue;
        }
        book.variables.push(doc);
    }
    Ok(book)
}

fn parse_variable_block(
    name: &str,
    body: &str,
    warnings: &mut Vec<CodebookWarning>,
) -> VariableDoc {
    let mut description = Vec::new();
    let mut value_labels = BTreeMap::new();
    let mut explicit_missing: Option<Vec<i64>> = None;

    for segment in split_segments(body) {
        if let Some(caps) = missing_directive_re().captures(&segment) {
            if let Some(codes) = parse_code_list(&caps[1]) {
                explicit_missing = Some(codes);
                continue;
            }
        }
        match parse_label_segment(&segment) {
            Some(pairs) => {
                for (code, label) in pairs {
                    value_labels.entry(code).or_insert(label);
                }
            }
            None => description.push(segment),
        }
    }

    let missing_codes = match explicit_missing {
        Some(codes) => {
            for code in &codes {
                if let Some(label) = value_labels.get(code) {
                    if !is_missing_label(label) {
                        warnings.push(CodebookWarning::MissingCodeOverlap {
                            name: name.to_string(),
                            code: *code,
                            label: label.clone(),
                        });
                    }
                }
            }
            codes
        }
        None => value_labels
            .iter()
            .filter(|(_, label)| is_missing_label(label))
            .map(|(code, _)| *code)
            .collect(),
    };

    VariableDoc {
        name: name.to_string(),
        description: description.join("; "),
        value_labels,
        missing_codes,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn inline_labels_tag_missing_codes() {
        let book = parse_codebook("EDUC — years of education; 98=DK, 99=NA").unwrap();
        let educ = &book.variables[0];
        assert_eq!(educ.name, "EDUC");
        assert_eq!(educ.description, "years of education");
        assert_eq!(educ.missing_codes, vec![98, 99]);
        assert_eq!(educ.value_labels[&98], "DK");
    }

    #[test]
    fn multiline_labels_and_phrases() {
        let text = "JAZZ: How do you feel about jazz?\n\
                    1 = like very much\n2 = like it\n3 = mixed feelings\n\
                    4 = dislike it\n5 = dislike very much\n\
                    8 = Don't know much about it\n9 = No answer\n";
        let book = parse_codebook(text).unwrap();
        assert_eq!(book.variables[0].missing_codes, vec![8, 9]);
        assert_eq!(book.variables[0].value_labels.len(), 7);
        assert!(book.warnings.is_empty());
    }

    #[test]
    fn explicit_missing_overrides_detection() {
        let text = "AGE age of respondent\n89 = 89 or older\n98 = DK\nmissing: 0, 98";
        let book = parse_codebook(text).unwrap();
        assert_eq!(book.variables[0].missing_codes, vec![0, 98]);

        let overlap = "AGE age\n89 = 89 or older\nmissing: 89";
        let book = parse_codebook(overlap).unwrap();
        assert!(matches!(
            book.warnings[0],
            CodebookWarning::MissingCodeOverlap { code: 89, .. }
        ));
    }

    #[test]
    fn empty_text_is_an_error() {
        assert!(matches!(parse_codebook(""), Err(IngestError::EmptyCodebook)));
        assert!(matches!(parse_codebook(" \n\n"), Err(IngestError::EmptyCodebook)));
    }

    #[test]
    fn duplicate_block_first_wins() {
        let text = "SEX respondent sex; 1=male, 2=female\n\nsex second copy; 1=m";
        let book = parse_codebook(text).unwrap();
        assert_eq!(book.variables.len(), 1);
        assert_eq!(book.variables[0].value_labels[&2], "female");
        assert!(matches!(
            &book.warnings[0],
            CodebookWarning::DuplicateVariable { name, block: 1 } if name == "sex"
        ));
    }

    #[test]
    fn prose_block_is_retained() {
        let text = "(Note) this file documents the 1993 extract.\n\nEDUC years";
        let book = parse_codebook(text).unwrap();
        assert_eq!(book.variables.len(), 2);
        assert_eq!(book.variables[0].name, "(Note)");
        assert!(book.variables[0].description.contains("1993 extract"));
        assert!(matches!(book.warnings[0], CodebookWarning::UnparsedBlock { block: 0, .. }));
    }

    #[test]
    fn missing_label_matching() {
        for l in ["DK", "na", "Don't know", "DONT KNOW MUCH ABOUT IT", "Refused", "not applicable"] {
            assert!(is_missing_label(l), "{l}");
        }
        for l in ["dislike it", "national", "dkr", "no answers given?"] {
            assert!(!is_missing_label(l), "{l}");
        }
    }

    fn doc_strategy() -> impl Strategy<Value = VariableDoc> {
        (
            "[A-Z][A-Z0-9_]{0,8}",
            "[a-z][a-z ]{0,20}[a-z]",
            proptest::collection::btree_map(-5i64..100, "[a-z][a-z ]{0,10}[a-z]", 0..5),
            proptest::collection::vec(-5i64..100, 0..3),
        )
            .prop_map(|(name, description, value_labels, missing_codes)| VariableDoc {
                name,
                description,
                value_labels,
                missing_codes,
            })
    }

    proptest! {
        #[test]
        fn text_round_trip(docs in proptest::collection::vec(doc_strategy(), 1..6)) {
            let mut seen = HashSet::new();
            let variables: Vec<_> = docs
                .into_iter()
                .filter(|d| seen.insert(d.name.to_lowercase()))
                .collect();
            let book = Codebook { variables, warnings: Vec::new() };
            let reparsed = parse_codebook(&book.to_text()).unwrap();
            prop_assert_eq!(&reparsed.variables, &book.variables);
            let again = parse_codebook(&reparsed.to_text()).unwrap();
            prop_assert_eq!(again.variables, reparsed.variables);
        }
    }
}
