//! Output files. Every file carries the configuration text and the code
//! version: JSON under a `run` key, CSV as leading `#` lines, SVG as a
//! comment.

use serde_json::{json, Value};
use std::fs;
use std::path::{Path, PathBuf};

use crate::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Provenance of one invocation.
pub struct Run {
    pub command: &'static str,
    pub config_text: String,
    pub dir: PathBuf,
}

impl Run {
    pub fn json(&self) -> Value {
        json!({ "program": "torus", "version": VERSION, "command": self.command, "config": self.config_text })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn header_lines(&self) -> String {
        let mut s = format!("# torus {VERSION} {}\n", self.command);
        for line in self.config_text.lines() {
            s.push_str("# |");
            if !line.is_empty() {
                s.push(' ');
                s.push_str(line);
            }
            s.push('\n');
        }
        s
    }

    pub fn write_json(&self, name: &str, text: &str) -> Result<PathBuf, CliError> {
        let path = self.path(name);
        fs::write(&path, text).map_err(|e| io_err(&path, e))?;
        Ok(path)
    }

    /// Writes a CSV file with the provenance header.
    pub fn write_csv<R>(&self, name: &str, header: &[&str], rows: R) -> Result<PathBuf, CliError>
    where
        R: IntoIterator<Item = Vec<String>>,
    {
        let path = self.path(name);
        let mut buf = self.header_lines().into_bytes();
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            w.write_record(header).map_err(|e| CliError::Io(e.to_string()))?;
            for row in rows {
                w.write_record(&row).map_err(|e| CliError::Io(e.to_string()))?;
            }
            w.flush().map_err(|e| io_err(&path, e))?;
        }
        fs::write(&path, buf).map_err(|e| io_err(&path, e))?;
        Ok(path)
    }

    /// Writes an SVG document with the provenance as its first comment.
    pub fn write_svg(&self, name: &str, svg: &str) -> Result<PathBuf, CliError> {
        let path = self.path(name);
        let comment = format!("<!--\n{}-->\n", self.header_lines().replace("--", "- -"));
        let body = match svg.find("?>") {
            Some(i) => format!("{}\n{comment}{}", &svg[..i + 2], svg[i + 2..].trim_start()),
            None => format!("{comment}{svg}"),
        };
        fs::write(&path, body).map_err(|e| io_err(&path, e))?;
        Ok(path)
    }
}

pub fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

/// Shortest round-trip formatting.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

/// Reads a CSV written by [`Run::write_csv`], returning the column names and
/// the numeric rows.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>), CliError> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| io_err(path, e))?;
    let header = r.headers().map_err(|e| io_err(path, e))?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| io_err(path, e))?;
        let row = rec
            .iter()
            .map(|f| f.parse::<f64>().map_err(|e| io_err(path, format!("field {f:?}: {e}"))))
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}
