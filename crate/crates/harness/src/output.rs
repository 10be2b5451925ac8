//! Named output files and writing them to a directory.

use std::fs;
use std::path::Path;

use loopscope_core::table::Table;

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone)]
pub enum Content {
    Csv(Table),
    Json(serde_json::Value),
    Text(String),
}

#[derive(Debug, Clone)]
pub struct Artifact {
    pub name: String,
    pub content: Content,
}

/// Output files of one experiment, in write order.
#[derive(Debug, Clone, Default)]
pub struct Artifacts {
    pub files: Vec<Artifact>,
}

impl Artifacts {
    pub fn csv(&mut self, name: impl Into<String>, table: Table) {
        self.push(name, Content::Csv(table));
    }

    pub fn json(&mut self, name: impl Into<String>, value: serde_json::Value) {
        self.push(name, Content::Json(value));
    }

    pub fn text(&mut self, name: impl Into<String>, text: String) {
        self.push(name, Content::Text(text));
    }

    fn push(&mut self, name: impl Into<String>, content: Content) {
        let name = name.into();
        self.files.retain(|a| a.name != name);
        self.files.push(Artifact { name, content });
    }

    pub fn get(&self, name: &str) -> Option<&Content> {
        self.files.iter().find(|a| a.name == name).map(|a| &a.content)
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        match self.get(name) {
            Some(Content::Csv(t)) => Some(t),
            _ => None,
        }
    }

    pub fn json_value(&self, name: &str) -> Option<&serde_json::Value> {
        match self.get(name) {
            Some(Content::Json(v)) => Some(v),
            _ => None,
        }
    }

    pub fn names(&self) -> Vec<&str> {
        self.files.iter().map(|a| a.name.as_str()).collect()
    }
}

impl Content {
    pub fn render(&self) -> Result<String> {
        Ok(match self {
            Content::Csv(t) => {
                t.validate()?;
                t.to_csv_string()
            }
            Content::Json(v) => {
                let mut s = serde_json::to_string_pretty(v)?;
                s.push('\n');
                s
            }
            Content::Text(s) => s.clone(),
        })
    }
}

/// Create `dir` if needed and fail early if it cannot be written to.
pub fn ensure_writable(dir: &Path) -> Result<()> {
    let wrap = |source| HarnessError::Output {
        path: dir.to_path_buf(),
        source,
    };
    fs::create_dir_all(dir).map_err(wrap)?;
    let probe = dir.join(".write_probe");
    fs::write(&probe, b"").map_err(wrap)?;
    fs::remove_file(&probe).map_err(wrap)?;
    Ok(())
}

/// Write every artifact under `dir`. Tables are checked against their
/// schema before anything is written.
pub fn emit_outputs(artifacts: &Artifacts, dir: &Path) -> Result<()> {
    let rendered = artifacts
        .files
        .iter()
        .map(|a| Ok((a.name.as_str(), a.content.render()?)))
        .collect::<Result<Vec<_>>>()?;
    ensure_writable(dir)?;
    for (name, body) in rendered {
        fs::write(dir.join(name), body)?;
    }
    Ok(())
}
