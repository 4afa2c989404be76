//! Checked-in identity manifest: one line per registry key with its source
//! location, settings and a verbatim quote. Cross-checked against the
//! compiled registry.

use crate::error::{Error, Result};
use crate::verifier::registry;
use serde::Serialize;
use std::collections::{BTreeSet, HashMap};

pub const MANIFEST: &str = include_str!("../data/identities.manifest");

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ManifestEntry {
    pub key: String,
    pub location: String,
    pub settings: String,
    pub quote: String,
}

/// Parses the tab-separated manifest. Blank lines and `#` comments are skipped.
pub fn parse_manifest(text: &str) -> Result<Vec<ManifestEntry>> {
    let mut out = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 4 {
            return Err(Error::Spec(format!(
                "manifest line {}: expected 4 tab-separated columns, found {}",
                ln + 1,
                cols.len()
            )));
        }
        out.push(ManifestEntry {
            key: cols[0].trim().to_string(),
            location: cols[1].trim().to_string(),
            settings: cols[2].trim().to_string(),
            quote: cols[3].trim().to_string(),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ManifestCheck {
    pub passed: bool,
    /// In the registry, not in the manifest.
    pub missing: Vec<String>,
    /// In the manifest, not in the registry.
    pub extra: Vec<String>,
    pub duplicates: Vec<String>,
    pub without_quote: Vec<String>,
    pub without_location: Vec<String>,
    pub setting_mismatch: Vec<String>,
}

impl ManifestCheck {
    pub fn to_json(&self) -> String {
        crate::spec::canonical_json(&serde_json::to_value(self).expect("check serializes"))
    }
}

/// Compares manifest text against `(key, setting)` pairs of a registry.
pub fn check_against(registry_keys: &[(&str, &str)], text: &str) -> Result<ManifestCheck> {
    let entries = parse_manifest(text)?;
    let mut seen = BTreeSet::new();
    let mut r = ManifestCheck::default();
    let by_key: HashMap<&str, &str> = registry_keys.iter().copied().collect();
    for e in &entries {
        if !seen.insert(e.key.as_str()) {
            r.duplicates.push(e.key.clone());
        }
        if e.quote.is_empty() {
            r.without_quote.push(e.key.clone());
        }
        if e.location.is_empty() {
            r.without_location.push(e.key.clone());
        }
        match by_key.get(e.key.as_str()) {
            None => r.extra.push(e.key.clone()),
            Some(s) if *s != e.settings => r.setting_mismatch.push(e.key.clone()),
            _ => {}
        }
    }
    for (k, _) in registry_keys {
        if !seen.contains(k) {
            r.missing.push(k.to_string());
        }
    }
    r.passed = r.missing.is_empty()
        && r.extra.is_empty()
        && r.duplicates.is_empty()
        && r.without_quote.is_empty()
        && r.without_location.is_empty()
        && r.setting_mismatch.is_empty();
    Ok(r)
}

/// The checked-in manifest against the compiled registry.
pub fn manifest_check() -> Result<ManifestCheck> {
    let reg = registry();
    let keys: Vec<(&str, &str)> = reg.iter().map(|c| (c.key, c.setting.as_str())).collect();
    check_against(&keys, MANIFEST)
}

/// Markdown index of the manifest, used for docs/identities.md. Quotes are
/// left out on purpose.
pub fn render_markdown(entries: &[ManifestEntry]) -> String {
    let mut s = String::from(
        "# Identity registry\n\n\
         Generated from `crates/slantkit/data/identities.manifest`; do not edit by hand.\n\
         Regenerate with `slantkit identities --manifest-markdown`.\n\
         Statements and their locations stay in the manifest itself.\n\n\
         | key | settings | dual |\n|---|---|---|\n",
    );
    for e in entries {
        let dual = if crate::verifier::is_dual_key(&e.key) { "yes" } else { "" };
        s.push_str(&format!("| `{}` | {} | {dual} |\n", e.key, e.settings));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pristine_manifest_matches_registry() {
        let r = manifest_check().unwrap();
        assert!(r.passed, "{r:#?}");
        assert_eq!(parse_manifest(MANIFEST).unwrap().len(), registry().len());
    }

    #[test]
    fn removed_registry_key_is_reported() {
        let reg = registry();
        let keys: Vec<(&str, &str)> = reg
            .iter()
            .filter(|c| c.key != "lemma1.b")
            .map(|c| (c.key, c.setting.as_str()))
            .collect();
        let r = check_against(&keys, MANIFEST).unwrap();
        assert!(!r.passed);
        assert_eq!(r.extra, vec!["lemma1.b".to_string()]);
    }

    #[test]
    fn missing_manifest_line_is_reported() {
        let text: String = MANIFEST
            .lines()
            .filter(|l| !l.starts_with("cor-p19.ii\t"))
            .map(|l| format!("{l}\n"))
            .collect();
        let reg = registry();
        let keys: Vec<(&str, &str)> = reg.iter().map(|c| (c.key, c.setting.as_str())).collect();
        let r = check_against(&keys, &text).unwrap();
        assert_eq!(r.missing, vec!["cor-p19.ii".to_string()]);
    }

    #[test]
    fn entry_without_quote_fails() {
        let r = check_against(&[("a.b", "all")], "a.b\tsomewhere\tall\t\n").unwrap();
        assert!(!r.passed);
        assert_eq!(r.without_quote, vec!["a.b".to_string()]);
    }

    #[test]
    fn malformed_line_is_an_error() {
        assert!(parse_manifest("only\ttwo\n").is_err());
    }

    #[test]
    fn docs_are_in_sync() {
        let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/identities.md");
        let want = render_markdown(&parse_manifest(MANIFEST).unwrap());
        if std::env::var_os("SLANTKIT_BLESS").is_some() {
            std::fs::write(&path, &want).unwrap();
        }
        assert_eq!(std::fs::read_to_string(&path).unwrap(), want);
    }
}
