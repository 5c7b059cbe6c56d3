//! Versioned prompt template assets.
//!
//! The bundled set is compiled into the binary; an alternative directory can
//! be loaded at runtime as long as every file matches the digests listed in
//! its `MANIFEST.sha256`.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::PromptError;

pub const MANIFEST_FILE: &str = "MANIFEST.sha256";

const BUNDLED: &[(&str, &str)] = &[
    (
        "system_role.txt",
        include_str!("../../assets/templates/system_role.txt"),
    ),
    (
        "system_knowledge.txt",
        include_str!("../../assets/templates/system_knowledge.txt"),
    ),
    ("system_cot.txt", include_str!("../../assets/templates/system_cot.txt")),
    (
        "user_header.txt",
        include_str!("../../assets/templates/user_header.txt"),
    ),
    (
        "user_location.txt",
        include_str!("../../assets/templates/user_location.txt"),
    ),
    (
        "user_weather.txt",
        include_str!("../../assets/templates/user_weather.txt"),
    ),
    (
        "user_region.txt",
        include_str!("../../assets/templates/user_region.txt"),
    ),
    ("user_time.txt", include_str!("../../assets/templates/user_time.txt")),
    (
        "user_history.txt",
        include_str!("../../assets/templates/user_history.txt"),
    ),
    (
        "user_instruction.txt",
        include_str!("../../assets/templates/user_instruction.txt"),
    ),
    (
        "user_instruction_explain.txt",
        include_str!("../../assets/templates/user_instruction_explain.txt"),
    ),
    (
        "fewshot_explanations.json",
        include_str!("../../assets/templates/fewshot_explanations.json"),
    ),
];

const BUNDLED_MANIFEST: &str = include_str!("../../assets/templates/MANIFEST.sha256");

/// One aligned (prompt, answer-with-explanation) demonstration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExplanationExample {
    pub user: String,
    pub assistant: String,
}

#[derive(Debug, Deserialize)]
struct ExplanationFile {
    #[allow(dead_code)]
    note: Option<String>,
    examples: Vec<ExplanationExample>,
}

#[derive(Debug, Clone)]
pub struct TemplateSet {
    pub system_role: String,
    pub system_knowledge: String,
    pub system_cot: String,
    pub user_header: String,
    pub user_location: String,
    pub user_weather: String,
    pub user_region: String,
    pub user_time: String,
    pub user_history: String,
    pub user_instruction: String,
    pub user_instruction_explain: String,
    pub explanations: Vec<ExplanationExample>,
}

impl TemplateSet {
    /// The templates shipped with this crate.
    pub fn bundled() -> &'static TemplateSet {
        static SET: OnceLock<TemplateSet> = OnceLock::new();
        SET.get_or_init(|| {
            let files: BTreeMap<String, String> = BUNDLED
                .iter()
                .map(|(name, body)| (name.to_string(), body.to_string()))
                .collect();
            verify_manifest(BUNDLED_MANIFEST, &files).expect("bundled templates match their manifest");
            Self::from_files(files).expect("bundled templates are well formed")
        })
    }

    /// Loads a template directory after checking it against its manifest.
    pub fn load_dir(dir: &Path) -> Result<TemplateSet, PromptError> {
        let manifest_path = dir.join(MANIFEST_FILE);
        let manifest = std::fs::read_to_string(&manifest_path)
            .map_err(|e| PromptError::Template(format!("{}: {e}", manifest_path.display())))?;
        let mut files = BTreeMap::new();
        for (name, _) in BUNDLED {
            let path = dir.join(name);
            let body = std::fs::read_to_string(&path)
                .map_err(|e| PromptError::Template(format!("{}: {e}", path.display())))?;
            files.insert(name.to_string(), body);
        }
        verify_manifest(&manifest, &files)?;
        Self::from_files(files)
    }

    fn from_files(mut files: BTreeMap<String, String>) -> Result<TemplateSet, PromptError> {
        let mut take = |name: &str| {
            files
                .remove(name)
                .ok_or_else(|| PromptError::Template(format!("missing template {name}")))
        };
        let explanations: ExplanationFile = serde_json::from_str(&take("fewshot_explanations.json")?)
            .map_err(|e| PromptError::Template(format!("fewshot_explanations.json: {e}")))?;
        Ok(TemplateSet {
            system_role: take("system_role.txt")?,
            system_knowledge: take("system_knowledge.txt")?,
            system_cot: take("system_cot.txt")?,
            user_header: take("user_header.txt")?,
            user_location: take("user_location.txt")?,
            user_weather: take("user_weather.txt")?,
            user_region: take("user_region.txt")?,
            user_time: take("user_time.txt")?,
            user_history: take("user_history.txt")?,
            user_instruction: take("user_instruction.txt")?,
            user_instruction_explain: take("user_instruction_explain.txt")?,
            explanations: explanations.examples,
        })
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Parses `sha256sum`-style lines (`<hex>  <file>`) and checks every listed
/// file, and every provided file, is covered with a matching digest.
pub fn verify_manifest(manifest: &str, files: &BTreeMap<String, String>) -> Result<(), PromptError> {
    let mut expected = BTreeMap::new();
    for line in manifest.lines().filter(|l| !l.trim().is_empty()) {
        let (digest, name) = line
            .split_once(char::is_whitespace)
            .ok_or_else(|| PromptError::Template(format!("bad manifest line {line:?}")))?;
        expected.insert(
            name.trim().trim_start_matches('*').to_string(),
            digest.to_ascii_lowercase(),
        );
    }
    for (name, body) in files {
        let want = expected
            .get(name)
            .ok_or_else(|| PromptError::Template(format!("{name} is not listed in the manifest")))?;
        let got = sha256_hex(body.as_bytes());
        if &got != want {
            return Err(PromptError::Template(format!(
                "{name}: digest {got} does not match manifest {want}"
            )));
        }
    }
    Ok(())
}

/// Replaces `${key}` placeholders.
pub(crate) fn fill(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (key, value) in vars {
        out = out.replace(&format!("${{{key}}}"), value);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bundled_files() -> BTreeMap<String, String> {
        BUNDLED.iter().map(|(n, b)| (n.to_string(), b.to_string())).collect()
    }

    #[test]
    fn bundled_assets_match_manifest() {
        verify_manifest(BUNDLED_MANIFEST, &bundled_files()).unwrap();
    }

    #[test]
    fn tampered_asset_is_rejected() {
        let mut files = bundled_files();
        files.get_mut("system_cot.txt").unwrap().push(' ');
        let err = verify_manifest(BUNDLED_MANIFEST, &files).unwrap_err();
        assert!(err.to_string().contains("system_cot.txt"));
    }

    #[test]
    fn load_dir_reads_the_asset_directory() {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("assets/templates");
        let set = TemplateSet::load_dir(&dir).unwrap();
        assert_eq!(set.system_role, TemplateSet::bundled().system_role);
        assert!(set.explanations.len() >= 2);
    }

    #[test]
    fn fill_substitutes_every_occurrence() {
        assert_eq!(fill("${a} and ${a} {b}", &[("a", "x")]), "x and x {b}");
    }
}
