//! Question/program pairs and their JSONL encoding.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::query::{Answers, Lang, ParseError, Program};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Seed,
    Synthetic,
    Pseudo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataPair {
    pub question: String,
    pub program_text: String,
    pub program_lang: Lang,
    /// Answer values in their display form (ids raw, literals quoted with datatype).
    pub answers: Vec<String>,
    pub source: Source,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kept_by: Option<Vec<String>>,
}

impl DataPair {
    pub fn new(question: impl Into<String>, program: &Program, answers: &Answers, source: Source) -> DataPair {
        DataPair {
            question: question.into(),
            program_text: program.canonical().to_owned(),
            program_lang: program.lang(),
            answers: answers.values().iter().map(ToString::to_string).collect(),
            source,
            kept_by: None,
        }
    }

    pub fn program(&self) -> Result<Program, ParseError> {
        Program::parse(self.program_lang, &self.program_text)
    }
}

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {source}")]
    Json { path: PathBuf, line: usize, source: serde_json::Error },
}

pub fn to_jsonl<T: Serialize>(items: &[T]) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("serializable"));
        out.push('\n');
    }
    out
}

pub fn write_jsonl<T: Serialize>(path: impl AsRef<Path>, items: &[T]) -> Result<(), DataError> {
    let path = path.as_ref();
    let io = |source| DataError::Io { path: path.to_owned(), source };
    let mut f = fs::File::create(path).map_err(io)?;
    f.write_all(to_jsonl(items).as_bytes()).map_err(io)
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<Vec<T>, DataError> {
    let path = path.as_ref();
    let io = |source| DataError::Io { path: path.to_owned(), source };
    let reader = BufReader::new(fs::File::open(path).map_err(io)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|source| DataError::Json { path: path.to_owned(), line: i + 1, source })?,
        );
    }
    Ok(out)
}
