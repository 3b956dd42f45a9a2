//! Result files: CSV tables and JSON reports stamped with config and version.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{Map, Value};

use crate::failure::Failure;
use crate::settings::Settings;

pub struct Output {
    dir: PathBuf,
    command: &'static str,
}

impl Output {
    pub fn create(dir: &Path, command: &'static str) -> Result<Self, Failure> {
        std::fs::create_dir_all(dir)
            .map_err(|e| Failure::usage(format!("cannot create output directory {}: {e}", dir.display())))?;
        Ok(Self { dir: dir.to_path_buf(), command })
    }

    pub fn csv(
        &self,
        name: &str,
        write: impl FnOnce(&mut dyn Write) -> addsv::Result<()>,
    ) -> Result<(), Failure> {
        let mut out = BufWriter::new(File::create(self.dir.join(name))?);
        write(&mut out)?;
        out.flush()?;
        Ok(())
    }

    /// Writes `body`'s fields next to `command`, `version` and the resolved `config`.
    pub fn json(&self, name: &str, settings: &Settings, body: &impl Serialize) -> Result<(), Failure> {
        let mut doc = Map::new();
        doc.insert("command".into(), Value::from(self.command));
        doc.insert("version".into(), Value::from(env!("CARGO_PKG_VERSION")));
        doc.insert("config".into(), settings.resolved());
        match serde_json::to_value(body).map_err(|e| Failure::Numeric(e.to_string()))? {
            Value::Object(fields) => doc.extend(fields),
            other => {
                doc.insert("result".into(), other);
            }
        }
        let mut text = serde_json::to_string_pretty(&Value::Object(doc)).map_err(|e| Failure::Numeric(e.to_string()))?;
        text.push('\n');
        std::fs::write(self.dir.join(name), text)?;
        Ok(())
    }
}
