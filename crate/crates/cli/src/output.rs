//! Output directory handling and provenance stamping.
//!
//! Every file written here carries the resolved config and master seed: CSV
//! files as leading `#` comment lines, JSON files as `seed` and `config`
//! fields, JSON-lines files as a first `{"provenance": ...}` line.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rampflow::RunConfig;
use serde::Serialize;
use serde_json::{json, Value};

#[derive(Debug, Clone)]
pub struct Provenance {
    pub seed: u64,
    pub config: Value,
}

impl Provenance {
    pub fn new(config: &RunConfig) -> Self {
        Self {
            seed: config.run.seed,
            config: serde_json::to_value(config).expect("config serializes"),
        }
    }

    pub fn json(&self) -> Value {
        json!({ "seed": self.seed, "config": self.config })
    }

    fn csv_preamble(&self) -> String {
        format!("# seed={}\n# config={}\n", self.seed, self.config)
    }
}

/// A writable output directory.
pub struct OutDir {
    root: PathBuf,
    provenance: Provenance,
}

impl OutDir {
    /// Creates `root` and writes `config.json` into it, so an unwritable
    /// location fails before any work starts.
    pub fn create(root: &Path, config: &RunConfig) -> Result<Self> {
        fs::create_dir_all(root)
            .with_context(|| format!("cannot create output directory {}", root.display()))?;
        let out = Self {
            root: root.to_path_buf(),
            provenance: Provenance::new(config),
        };
        out.write_text("config.json", &(config.resolved_json() + "\n"))?;
        Ok(out)
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write_text(&self, name: &str, text: &str) -> Result<PathBuf> {
        let path = self.path(name);
        fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))?;
        Ok(path)
    }

    /// Writes `body` merged with the provenance fields.
    pub fn write_json<T: Serialize>(&self, name: &str, body: &T) -> Result<PathBuf> {
        let mut value = self.provenance.json();
        match serde_json::to_value(body)? {
            Value::Object(fields) => value.as_object_mut().expect("object").extend(fields),
            other => {
                value["data"] = other;
            }
        }
        self.write_text(name, &(serde_json::to_string_pretty(&value)? + "\n"))
    }

    /// Writes a CSV file with the provenance preamble, a header and `rows`.
    pub fn write_csv<I, R>(&self, name: &str, header: &[&str], rows: I) -> Result<PathBuf>
    where
        I: IntoIterator<Item = R>,
        R: IntoIterator,
        R::Item: AsRef<[u8]>,
    {
        let path = self.path(name);
        let mut file = BufWriter::new(
            File::create(&path).with_context(|| format!("cannot write {}", path.display()))?,
        );
        file.write_all(self.provenance.csv_preamble().as_bytes())?;
        let mut w = csv::Writer::from_writer(file);
        w.write_record(header)?;
        for row in rows {
            w.write_record(row)?;
        }
        w.flush()?;
        Ok(path)
    }

    /// Writes a raw CSV body (already containing its header) after the preamble.
    pub fn write_csv_text(&self, name: &str, body: &str) -> Result<PathBuf> {
        self.write_text(name, &(self.provenance.csv_preamble() + body))
    }

    /// JSON-lines: a provenance line, then one line per item.
    pub fn write_jsonl<T: Serialize>(&self, name: &str, items: &[T]) -> Result<PathBuf> {
        let path = self.path(name);
        let mut file = BufWriter::new(
            File::create(&path).with_context(|| format!("cannot write {}", path.display()))?,
        );
        serde_json::to_writer(&mut file, &json!({ "provenance": self.provenance.json() }))?;
        file.write_all(b"\n")?;
        for item in items {
            serde_json::to_writer(&mut file, item)?;
            file.write_all(b"\n")?;
        }
        file.flush()?;
        Ok(path)
    }
}

/// Fixed-precision float for CSV cells; `None` is an empty cell.
pub fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}
