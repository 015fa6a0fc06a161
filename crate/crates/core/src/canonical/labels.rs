//! Label normalization shared by the scorer and the result validator.
//!
//! Generated and published tables rarely spell variable names identically
//! ("Occ. Prestige" vs "occupational prestige"), so every comparison goes
//! through [`AliasTable::normalize`].

use std::collections::BTreeMap;
use std::path::Path;

/// Built-in aliases. Keys and values are already in normalized form.
const DEFAULT_ALIASES: &[(&str, &str)] = &[
    ("occ prestige", "occupational prestige"),
    ("prestige", "occupational prestige"),
    ("prestg80", "occupational prestige"),
    ("occupational prestige score", "occupational prestige"),
    ("educ", "education"),
    ("education years", "education"),
    ("years of education", "education"),
    ("income", "income per capita"),
    ("household income per capita", "income per capita"),
    ("hh income per capita", "income per capita"),
    ("sex female", "female"),
    ("age years", "age"),
    ("age in years", "age"),
    ("african american", "black"),
    ("latino", "hispanic"),
    ("other race", "other"),
    ("cons protestant", "conservative protestant"),
    ("none religion", "no religion"),
    ("south", "southern"),
    ("pol intolerance", "political intolerance"),
    ("intercept", "constant"),
    ("const", "constant"),
];

/// Case-folds, trims, strips punctuation and collapses whitespace, without
/// consulting any alias table.
pub fn fold_label(s: &str) -> String {
    let mut spaced = String::with_capacity(s.len());
    for ch in s.chars().flat_map(char::to_lowercase) {
        if ch == '\'' || ch == '\u{2019}' {
            continue;
        }
        if ch.is_alphanumeric() {
            spaced.push(ch);
        } else {
            spaced.push(' ');
        }
    }
    spaced.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AliasTable {
    entries: BTreeMap<String, String>,
}

impl Default for AliasTable {
    fn default() -> Self {
        let entries = DEFAULT_ALIASES
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        Self { entries }
    }
}

impl AliasTable {
    pub fn empty() -> Self {
        Self {
            entries: BTreeMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Adds an alias. Both sides are folded; a target that is itself an alias
    /// key is resolved first so lookups never chain.
    pub fn insert(&mut self, alias: &str, canonical: &str) {
        let key = fold_label(alias);
        let mut value = fold_label(canonical);
        if let Some(resolved) = self.entries.get(&value) {
            value = resolved.clone();
        }
        if key.is_empty() || key == value {
            return;
        }
        // Existing entries pointing at the new key would otherwise chain.
        for target in self.entries.values_mut() {
            if *target == key {
                *target = value.clone();
            }
        }
        self.entries.insert(key, value);
    }

    /// Reads `alias = canonical` lines; `#` starts a comment.
    pub fn extend_from_file(&mut self, path: &Path) -> std::io::Result<usize> {
        let text = std::fs::read_to_string(path)?;
        let mut added = 0;
        for line in text.lines() {
            let line = line.split('#').next().unwrap_or("").trim();
            if let Some((alias, canonical)) = line.split_once('=') {
                self.insert(alias, canonical);
                added += 1;
            }
        }
        Ok(added)
    }

    pub fn normalize(&self, s: &str) -> String {
        let folded = fold_label(s);
        match self.entries.get(&folded) {
            Some(canonical) => canonical.clone(),
            None => folded,
        }
    }
}

/// Normalizes with the built-in alias table.
pub fn normalize_label(s: &str) -> String {
    thread_local! {
        static DEFAULT: AliasTable = AliasTable::default();
    }
    DEFAULT.with(|t| t.normalize(s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn alias_applies_after_folding() {
        assert_eq!(normalize_label("Occ. Prestige "), "occupational prestige");
        assert_eq!(normalize_label("EDUCATION"), "education");
        assert_eq!(normalize_label(""), "");
        assert_eq!(normalize_label("Income (per capita)"), "income per capita");
        assert_eq!(normalize_label("  Cons.   Protestant"), "conservative protestant");
    }

    #[test]
    fn default_table_has_no_chains() {
        let table = AliasTable::default();
        assert!(table.len() >= 20);
        for (k, v) in &table.entries {
            assert_eq!(&fold_label(k), k);
            assert_eq!(&fold_label(v), v);
            assert!(!table.entries.contains_key(v), "{k} -> {v} chains");
        }
    }

    #[test]
    fn inserted_aliases_resolve_without_chaining() {
        let mut table = AliasTable::empty();
        table.insert("SES", "socioeconomic status");
        table.insert("socioeconomic status", "ses index");
        assert_eq!(table.normalize("ses"), "ses index");
        assert_eq!(table.normalize("Socioeconomic Status"), "ses index");
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(s in "\\PC{0,40}") {
            let once = normalize_label(&s);
            prop_assert_eq!(normalize_label(&once), once.clone());
        }
    }
}
