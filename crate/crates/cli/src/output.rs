//! Plain-text writers shared by the subcommands. Floats use the shortest
//! round-trip scientific form, so reruns produce identical bytes.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::Context;

pub struct Csv {
    text: String,
}

impl Csv {
    pub fn new(columns: &[&str]) -> Self {
        let mut text = columns.join(",");
        text.push('\n');
        Self { text }
    }

    /// Appends one row of leading text fields followed by numbers.
    pub fn row(&mut self, labels: &[&str], values: &[f64]) {
        let mut first = true;
        for l in labels {
            if !first {
                self.text.push(',');
            }
            self.text.push_str(l);
            first = false;
        }
        for v in values {
            if !first {
                self.text.push(',');
            }
            let _ = write!(self.text, "{v:e}");
            first = false;
        }
        self.text.push('\n');
    }

    pub fn into_string(self) -> String {
        self.text
    }
}

pub fn write_file(dir: &Path, name: &str, contents: &str) -> anyhow::Result<PathBuf> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}
