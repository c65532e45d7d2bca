use std::fmt;
use std::io::Write;
use std::path::Path;

use optrisk_core::tree::EventTree;
use optrisk_core::Error;
use serde::Serialize;

use crate::args::Format;

#[derive(Debug)]
pub enum Failure {
    /// Exit code 2.
    Input(String),
    /// Exit code 3.
    Eval(String),
}

impl Failure {
    pub fn code(&self) -> i32 {
        match self {
            Failure::Input(_) => 2,
            Failure::Eval(_) => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Input(m) => write!(f, "invalid input: {m}"),
            Failure::Eval(m) => write!(f, "evaluation failed: {m}"),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_input_error() {
            Failure::Input(e.to_string())
        } else {
            Failure::Eval(e.to_string())
        }
    }
}

/// Long-format table row; `value` is empty (null) where infinite.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Row {
    pub time: usize,
    pub node: u64,
    pub quantity: &'static str,
    pub value: Option<f64>,
}

pub fn node_rows(tree: &EventTree, quantity: &'static str, values: impl IntoIterator<Item = Option<f64>>) -> Vec<Row> {
    values
        .into_iter()
        .enumerate()
        .map(|(n, value)| Row { time: tree.time(n), node: tree.id(n), quantity, value })
        .collect()
}

/// Rendered report plus the exit status it implies.
pub struct Output {
    pub body: String,
    pub passed: bool,
}

impl Output {
    pub fn json<T: Serialize>(value: &T, passed: bool) -> Self {
        let mut body = serde_json::to_string_pretty(value).expect("reports serialize");
        body.push('\n');
        Output { body, passed }
    }

    pub fn csv(rows: &[Row], passed: bool) -> Result<Self, Failure> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in rows {
            w.serialize(row).map_err(|e| Failure::Eval(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Failure::Eval(e.to_string()))?;
        Ok(Output { body: String::from_utf8(bytes).expect("csv is utf-8"), passed })
    }

    pub fn rows<T: Serialize>(format: Format, json: &T, rows: &[Row], passed: bool) -> Result<Self, Failure> {
        match format {
            Format::Json => Ok(Output::json(json, passed)),
            Format::Csv => Output::csv(rows, passed),
        }
    }
}

/// Replaces `path` in one rename so readers never see a partial report.
pub fn write_atomic(path: &Path, body: &str) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(body.as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}
