use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::schema::{SchemaSet, TaskId};
use super::split::{DatasetSplit, Sample, SplitName};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataFormat {
    /// Header row, then `id`, `text` and one column per task.
    #[default]
    Tsv,
    /// One `{"id", "text", "labels": {task: label}}` object per line.
    Jsonl,
}

impl DataFormat {
    /// Guess from a file extension, defaulting to TSV.
    pub fn from_path(path: &Path) -> DataFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("json") => DataFormat::Jsonl,
            _ => DataFormat::Tsv,
        }
    }
}

impl fmt::Display for DataFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DataFormat::Tsv => "tsv",
            DataFormat::Jsonl => "jsonl",
        })
    }
}

impl FromStr for DataFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tsv" => Ok(DataFormat::Tsv),
            "jsonl" => Ok(DataFormat::Jsonl),
            _ => Err(Error::Validation(format!("unknown data format {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    pub format: DataFormat,
    /// Task that a bare `label` column/field belongs to. Single-subtask
    /// releases name their only label column `label`.
    pub label_task: Option<TaskId>,
}

/// Reads and validates one split. Input order is preserved.
pub fn load_split(path: &Path, name: SplitName, schemas: &SchemaSet, format: DataFormat) -> Result<DatasetSplit> {
    load_split_with(
        path,
        name,
        schemas,
        &LoadOptions {
            format,
            label_task: None,
        },
    )
}

pub fn load_split_with(
    path: &Path,
    name: SplitName,
    schemas: &SchemaSet,
    options: &LoadOptions,
) -> Result<DatasetSplit> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let source = path.display().to_string();
    read_split(BufReader::new(file), &source, name, schemas, options)
}

/// Same as [`load_split_with`] over any reader; `source` names the input in
/// error messages.
pub fn read_split<R: Read>(
    reader: R,
    source: &str,
    name: SplitName,
    schemas: &SchemaSet,
    options: &LoadOptions,
) -> Result<DatasetSplit> {
    let samples = match options.format {
        DataFormat::Tsv => read_tsv(reader, source, schemas, options.label_task)?,
        DataFormat::Jsonl => read_jsonl(reader, source, schemas, options.label_task)?,
    };
    let split = DatasetSplit { name, samples };
    split.validate(schemas)?;
    Ok(split)
}

enum Column {
    Id,
    Text,
    Task(TaskId),
    Ignored,
}

fn parse_err(source: &str, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: source.to_string(),
        line,
        message: message.into(),
    }
}

fn resolve_task(name: &str, label_task: Option<TaskId>) -> Option<TaskId> {
    TaskId::from_alias(name).or_else(|| {
        if name.trim().eq_ignore_ascii_case("label") {
            label_task
        } else {
            None
        }
    })
}

fn read_tsv<R: Read>(reader: R, source: &str, schemas: &SchemaSet, label_task: Option<TaskId>) -> Result<Vec<Sample>> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .quoting(false)
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);

    let headers = rdr.headers().map_err(|e| csv_err(source, &e))?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Ok(Vec::new());
    }
    let mut columns = Vec::with_capacity(headers.len());
    let (mut has_id, mut has_text) = (false, false);
    let mut seen_tasks = Vec::new();
    for h in headers.iter() {
        let h = h.trim_start_matches('\u{feff}').trim();
        let col = if h.eq_ignore_ascii_case("id") {
            has_id = true;
            Column::Id
        } else if h.eq_ignore_ascii_case("text") {
            has_text = true;
            Column::Text
        } else if let Some(task) = resolve_task(h, label_task) {
            if seen_tasks.contains(&task) {
                return Err(parse_err(source, 1, format!("two columns map to task {task}")));
            }
            seen_tasks.push(task);
            Column::Task(task)
        } else if h.eq_ignore_ascii_case("label") {
            return Err(parse_err(
                source,
                1,
                "ambiguous `label` column; say which task it holds",
            ));
        } else {
            Column::Ignored
        };
        columns.push(col);
    }
    if !has_id || !has_text {
        return Err(parse_err(source, 1, "header must contain `id` and `text` columns"));
    }

    let mut samples = Vec::new();
    let mut record = csv::StringRecord::new();
    loop {
        match rdr.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => return Err(csv_err(source, &e)),
        }
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let mut sample = Sample::new(String::new(), String::new());
        for (col, value) in columns.iter().zip(record.iter()) {
            match col {
                Column::Id => sample.id = value.trim().to_string(),
                Column::Text => sample.text = value.to_string(),
                Column::Task(task) => {
                    let label = value.trim();
                    if !label.is_empty() {
                        if !schemas.get(*task).contains(label) {
                            return Err(parse_err(
                                source,
                                line,
                                format!("unknown label {label:?} for task {task}"),
                            ));
                        }
                        sample.gold.insert(*task, label.to_string());
                    }
                }
                Column::Ignored => {}
            }
        }
        if sample.id.is_empty() {
            return Err(parse_err(source, line, "empty id"));
        }
        samples.push(sample);
    }
    Ok(samples)
}

fn csv_err(source: &str, e: &csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    let message = match e.kind() {
        csv::ErrorKind::UnequalLengths { expected_len, len, .. } => {
            format!("expected {expected_len} fields, found {len}")
        }
        csv::ErrorKind::Utf8 { .. } => "invalid UTF-8".to_string(),
        _ => e.to_string(),
    };
    parse_err(source, line, message)
}

#[derive(Serialize)]
struct JsonRecord<'a> {
    id: &'a str,
    text: &'a str,
    labels: &'a std::collections::BTreeMap<TaskId, String>,
}

fn read_jsonl<R: Read>(
    reader: R,
    source: &str,
    schemas: &SchemaSet,
    label_task: Option<TaskId>,
) -> Result<Vec<Sample>> {
    let mut samples = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| parse_err(source, lineno, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value =
            serde_json::from_str(&line).map_err(|e| parse_err(source, lineno, format!("invalid JSON: {e}")))?;
        let obj = value
            .as_object()
            .ok_or_else(|| parse_err(source, lineno, "record is not a JSON object"))?;
        let id = match obj.get("id") {
            Some(Value::String(s)) => s.clone(),
            Some(Value::Number(n)) => n.to_string(),
            _ => return Err(parse_err(source, lineno, "missing or invalid `id`")),
        };
        let text = match obj.get("text") {
            Some(Value::String(s)) => s.clone(),
            _ => return Err(parse_err(source, lineno, "missing or invalid `text`")),
        };
        let mut sample = Sample::new(id, text);

        let mut add = |key: &str, v: &Value| -> Result<()> {
            let Some(task) = resolve_task(key, label_task) else {
                return Ok(());
            };
            let label = match v {
                Value::String(s) => s.trim(),
                Value::Null => return Ok(()),
                _ => return Err(parse_err(source, lineno, format!("label for {task} is not a string"))),
            };
            if label.is_empty() {
                return Ok(());
            }
            if !schemas.get(task).contains(label) {
                return Err(parse_err(
                    source,
                    lineno,
                    format!("unknown label {label:?} for task {task}"),
                ));
            }
            if sample.gold.insert(task, label.to_string()).is_some() {
                return Err(parse_err(source, lineno, format!("task {task} labeled twice")));
            }
            Ok(())
        };
        if let Some(labels) = obj.get("labels") {
            let labels = labels
                .as_object()
                .ok_or_else(|| parse_err(source, lineno, "`labels` is not an object"))?;
            for (k, v) in labels {
                add(k, v)?;
            }
        }
        for (k, v) in obj {
            if k != "id" && k != "text" && k != "labels" {
                add(k, v)?;
            }
        }
        samples.push(sample);
    }
    Ok(samples)
}

/// Writes a split so that [`load_split`] gives it back unchanged. TSV cannot
/// carry tabs or line breaks inside a field; such splits must use JSONL.
pub fn write_split(split: &DatasetSplit, path: &Path, format: DataFormat) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_split_to(split, &mut w, format).map_err(|e| match e {
        Error::Runtime(m) => Error::Io {
            path: path.to_path_buf(),
            source: std::io::Error::other(m),
        },
        other => other,
    })?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_split_to<W: Write>(split: &DatasetSplit, w: &mut W, format: DataFormat) -> Result<()> {
    let io = |e: std::io::Error| Error::Runtime(e.to_string());
    match format {
        DataFormat::Tsv => {
            let tasks = split.labeled_tasks();
            let mut header = vec!["id", "text"];
            header.extend(tasks.iter().map(|t| t.as_str()));
            writeln!(w, "{}", header.join("\t")).map_err(io)?;
            for s in &split.samples {
                for field in [&s.id, &s.text] {
                    if field.contains(['\t', '\n', '\r']) {
                        return Err(Error::Validation(format!(
                            "sample {:?} contains a tab or line break; write it as JSONL",
                            s.id
                        )));
                    }
                }
                if s.id.trim() != s.id || s.id.is_empty() {
                    return Err(Error::Validation(format!(
                        "sample id {:?} is empty or padded with whitespace",
                        s.id
                    )));
                }
                write!(w, "{}\t{}", s.id, s.text).map_err(io)?;
                for t in &tasks {
                    write!(w, "\t{}", s.label(*t).unwrap_or("")).map_err(io)?;
                }
                writeln!(w).map_err(io)?;
            }
        }
        DataFormat::Jsonl => {
            for s in &split.samples {
                let rec = JsonRecord {
                    id: &s.id,
                    text: &s.text,
                    labels: &s.gold,
                };
                let line = serde_json::to_string(&rec).map_err(|e| Error::Runtime(e.to_string()))?;
                writeln!(w, "{line}").map_err(io)?;
            }
        }
    }
    Ok(())
}
