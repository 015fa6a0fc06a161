//! Just enough structure recovery for model-written markdown: headed
//! sections and their lines, with emphasis markers removed.

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Section {
    pub heading: String,
    pub lines: Vec<String>,
}

pub fn strip_emphasis(s: &str) -> String {
    s.replace("**", "").replace("__", "").trim().to_string()
}

/// Bullet, numbered-list and table-row markers removed.
pub fn strip_marker(line: &str) -> &str {
    let t = line.trim();
    for p in ["- ", "* ", "+ ", "• "] {
        if let Some(rest) = t.strip_prefix(p) {
            return rest.trim();
        }
    }
    let digits = t.chars().take_while(|c| c.is_ascii_digit()).count();
    if digits > 0 {
        let rest = &t[digits..];
        if let Some(r) = rest.strip_prefix(". ").or_else(|| rest.strip_prefix(") ")) {
            return r.trim();
        }
    }
    t
}

/// Labels recognized as headings when written as `Label: content` lines.
const COLON_HEADINGS: &[&str] = &[
    "kind",
    "dependent variable",
    "independent variables",
    "models",
    "transformations",
    "sample restrictions",
    "missing values",
    "axes",
    "series",
    "reference lines",
    "annotations",
    "variable map",
    "recodes",
    "derived variables",
];

/// `## Heading`, or a `Label: content` line whose label is one of the
/// section names the prompts ask for. Returns the heading and any inline
/// content.
fn heading_of(line: &str) -> Option<(String, String)> {
    let t = line.trim();
    if t.starts_with('#') {
        let h = t.trim_start_matches('#').trim();
        if !h.is_empty() {
            return Some((strip_emphasis(h), String::new()));
        }
    }
    if t.starts_with('|') || strip_marker(t) != t {
        return None;
    }
    let plain = strip_emphasis(t);
    let (label, rest) = plain.split_once(':')?;
    let label = label.trim();
    if COLON_HEADINGS.contains(&label.to_lowercase().as_str()) {
        return Some((label.to_string(), rest.trim().to_string()));
    }
    None
}

/// Splits text into sections. Lines before the first heading land in a
/// section with an empty heading.
pub fn sections(text: &str) -> Vec<Section> {
    let mut out = vec![Section {
        heading: String::new(),
        lines: Vec::new(),
    }];
    for line in text.lines() {
        if line.trim().is_empty() || line.trim_start().starts_with("```") {
            continue;
        }
        if let Some((heading, inline)) = heading_of(line) {
            let mut lines = Vec::new();
            if !inline.is_empty() {
                lines.push(inline);
            }
            out.push(Section { heading, lines });
        } else {
            out.last_mut().expect("non-empty").lines.push(line.trim_end().to_string());
        }
    }
    out.retain(|s| !s.heading.is_empty() || !s.lines.is_empty());
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn markdown_and_colon_headings() {
        let text = "intro\n## Data source\n- a\n\nDependent variable: count of things\n- b\n1. c\n";
        let s = sections(text);
        assert_eq!(s.len(), 3);
        assert_eq!(s[0].heading, "");
        assert_eq!(s[1].heading, "Data source");
        assert_eq!(s[2].heading, "Dependent variable");
        assert_eq!(s[2].lines, ["count of things", "- b", "1. c"]);
    }

    #[test]
    fn only_known_labels_are_colon_headings() {
        assert!(heading_of("**Dependent variable:** count").is_some());
        assert!(heading_of("**DV:** number of music genres disliked").is_none());
        assert!(heading_of("Note: something").is_none());
        assert!(heading_of("- Education: `EDUC`").is_none());
    }

    #[test]
    fn markers() {
        assert_eq!(strip_marker("  - item"), "item");
        assert_eq!(strip_marker("12. item"), "item");
        assert_eq!(strip_marker("1993 was"), "1993 was");
    }
}
