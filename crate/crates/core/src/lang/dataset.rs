use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{build_project_cpg, parse_program};
use crate::cpg::CodePropertyGraph;
use crate::error::FrontendError;

/// One labeled vulnerability. `project_dir` is relative to the manifest and
/// `sink_file` relative to `project_dir`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VulnExample {
    pub id: String,
    pub vuln_type: String,
    pub project_dir: String,
    pub sink_file: String,
    pub sink_lines: (u32, u32),
    #[serde(default)]
    pub description: String,
}

impl VulnExample {
    pub fn covers(&self, file: &str, line: u32) -> bool {
        file == self.sink_file && line >= self.sink_lines.0 && line <= self.sink_lines.1
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Manifest {
    examples: Vec<VulnExample>,
}

/// A `dataset.json` manifest together with the directory it lives in.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub base: PathBuf,
    pub examples: Vec<VulnExample>,
}

impl Dataset {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, FrontendError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        Self::from_json(&text, base)
    }

    pub fn from_json(text: &str, base: PathBuf) -> Result<Self, FrontendError> {
        let ds = Self::labels_from_json(text, base)?;
        for ex in &ds.examples {
            if mini_files(&ds.project_path(ex))?.is_empty() {
                return Err(FrontendError::Config(format!(
                    "example {}: project_dir {} has no .mini files",
                    ex.id, ex.project_dir
                )));
            }
        }
        Ok(ds)
    }

    /// Load a manifest for its labels only, without requiring the project
    /// directories to exist.
    pub fn load_labels(path: impl AsRef<Path>) -> Result<Self, FrontendError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        Self::labels_from_json(&text, base)
    }

    pub fn labels_from_json(text: &str, base: PathBuf) -> Result<Self, FrontendError> {
        let manifest: Manifest =
            serde_json::from_str(text).map_err(|e| FrontendError::Config(e.to_string()))?;
        let ds = Dataset {
            base,
            examples: manifest.examples,
        };
        ds.check()?;
        Ok(ds)
    }

    fn check(&self) -> Result<(), FrontendError> {
        let mut ids = std::collections::BTreeSet::new();
        for ex in &self.examples {
            if !ids.insert(ex.id.as_str()) {
                return Err(FrontendError::Config(format!("duplicate example id {}", ex.id)));
            }
            let (s, e) = ex.sink_lines;
            if s == 0 || e < s {
                return Err(FrontendError::Config(format!(
                    "example {}: empty sink_lines [{s}, {e}]",
                    ex.id
                )));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let m = Manifest {
            examples: self.examples.clone(),
        };
        serde_json::to_string_pretty(&m).expect("manifest serializes")
    }

    pub fn project_path(&self, ex: &VulnExample) -> PathBuf {
        self.base.join(&ex.project_dir)
    }

    pub fn example(&self, id: &str) -> Option<&VulnExample> {
        self.examples.iter().find(|e| e.id == id)
    }

    pub fn of_type<'a>(&'a self, vuln_type: &'a str) -> impl Iterator<Item = &'a VulnExample> {
        self.examples.iter().filter(move |e| e.vuln_type == vuln_type)
    }

    /// Every label sharing a project with `ex` (including `ex`).
    pub fn project_labels(&self, ex: &VulnExample) -> Vec<VulnExample> {
        self.examples
            .iter()
            .filter(|e| e.project_dir == ex.project_dir)
            .cloned()
            .collect()
    }

    pub fn vuln_types(&self) -> Vec<String> {
        let mut t: Vec<String> = self.examples.iter().map(|e| e.vuln_type.clone()).collect();
        t.sort();
        t.dedup();
        t
    }
}

/// `.mini` files under `dir`, recursively, as sorted `/`-separated paths
/// relative to `dir`.
fn mini_files(dir: &Path) -> Result<Vec<String>, FrontendError> {
    let mut out = Vec::new();
    for entry in walkdir::WalkDir::new(dir) {
        let entry = entry.map_err(|e| FrontendError::Io(e.into()))?;
        let path = entry.path();
        if entry.file_type().is_file() && path.extension().is_some_and(|e| e == "mini") {
            let rel = path.strip_prefix(dir).unwrap_or(path);
            let parts: Vec<_> = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect();
            out.push(parts.join("/"));
        }
    }
    out.sort();
    Ok(out)
}

/// Parse every `.mini` file under `dir` and build one project CPG. Node
/// `file` fields are paths relative to `dir`.
pub fn load_project(dir: impl AsRef<Path>) -> Result<CodePropertyGraph, FrontendError> {
    let dir = dir.as_ref();
    if !dir.is_dir() {
        return Err(FrontendError::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("{} is not a directory", dir.display()),
        )));
    }
    let files = mini_files(dir)?;
    if files.is_empty() {
        return Err(FrontendError::NoSourceFiles(dir.display().to_string()));
    }
    let mut asts = Vec::with_capacity(files.len());
    for f in files {
        let src = fs::read_to_string(dir.join(&f))?;
        asts.push(parse_program(&src, &f)?);
    }
    Ok(build_project_cpg(&asts))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_round_trip_and_checks() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir(dir.path().join("p")).unwrap();
        fs::write(dir.path().join("p/a.mini"), "exec(input());").unwrap();
        let json = r#"{"examples":[{"id":"e1","vuln_type":"cmd-injection","project_dir":"p",
            "sink_file":"a.mini","sink_lines":[1,1],"description":"d"}]}"#;
        let ds = Dataset::from_json(json, dir.path().to_path_buf()).unwrap();
        assert_eq!(ds.examples[0].sink_lines, (1, 1));
        let again = Dataset::from_json(&ds.to_json(), dir.path().to_path_buf()).unwrap();
        assert_eq!(again.examples, ds.examples);

        let bad = json.replace("[1,1]", "[3,2]");
        assert!(matches!(
            Dataset::from_json(&bad, dir.path().to_path_buf()),
            Err(FrontendError::Config(_))
        ));
        let empty_proj = json.replace("\"p\"", "\".\"").replace("a.mini", "x");
        fs::create_dir(dir.path().join("q")).unwrap();
        let no_src = empty_proj.replace("\".\"", "\"q\"");
        assert!(Dataset::from_json(&no_src, dir.path().to_path_buf()).is_err());
    }

    #[test]
    fn empty_project_has_no_source_files() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_project(dir.path()).unwrap_err();
        assert!(err.to_string().contains("no source files"));
    }
}
