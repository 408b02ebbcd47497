//! CSV upload parsing.
//!
//! Uploads are UTF-8 CSV with a header row naming any of `ID`, `Text` and
//! `Label` (case-insensitive); `Text` is required and other columns are
//! ignored. Row problems are collected into an [`IngestReport`] rather than
//! failing the upload.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UploadRow {
    pub external_id: Option<String>,
    pub text: String,
    pub pre_label: Option<String>,
    pub upload_order: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IssueKind {
    EmptyText,
    UnknownLabel,
    DuplicateText,
    DuplicateId,
    Malformed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowIssue {
    /// 1-based line of the offending row (the header is line 1).
    pub line: u64,
    pub kind: IssueKind,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub rows_read: usize,
    pub rows_accepted: usize,
    pub duplicates_dropped: usize,
    pub issues: Vec<RowIssue>,
}

struct Columns {
    id: Option<usize>,
    text: usize,
    label: Option<usize>,
}

fn locate_columns(headers: &csv::StringRecord) -> Result<Columns> {
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim().eq_ignore_ascii_case(name))
    };
    Ok(Columns {
        id: find("ID"),
        text: find("Text").ok_or(Error::MissingTextColumn)?,
        label: find("Label"),
    })
}

fn cell(record: &csv::StringRecord, column: Option<usize>) -> Option<&str> {
    column
        .and_then(|c| record.get(c))
        .map(str::trim)
        .filter(|s| !s.is_empty())
}

pub fn parse_upload(bytes: &[u8], declared_labels: &[String]) -> Result<(Vec<UploadRow>, IngestReport)> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::Encoding(e.to_string()))?;
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::InvalidInput(format!("unreadable header: {e}")))?
        .clone();
    if headers.is_empty() {
        return Err(Error::MissingTextColumn);
    }
    let columns = locate_columns(&headers)?;

    let labels: HashSet<&str> = declared_labels.iter().map(String::as_str).collect();
    let mut seen_text = HashSet::new();
    let mut seen_id = HashSet::new();
    let mut rows = Vec::new();
    let mut report = IngestReport::default();
    for result in reader.records() {
        report.rows_read += 1;
        let record = match result {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                report.issues.push(RowIssue {
                    line,
                    kind: IssueKind::Malformed,
                    message: e.to_string(),
                });
                continue;
            }
        };
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let mut issue = |kind, message: String| report.issues.push(RowIssue { line, kind, message });

        let Some(text) = cell(&record, Some(columns.text)) else {
            issue(IssueKind::EmptyText, "empty text".into());
            continue;
        };
        let pre_label = cell(&record, columns.label).map(str::to_string);
        if let Some(label) = &pre_label {
            if !labels.contains(label.as_str()) {
                issue(IssueKind::UnknownLabel, format!("unknown label {label:?}"));
                continue;
            }
        }
        if !seen_text.insert(text.to_string()) {
            issue(IssueKind::DuplicateText, "duplicate text".into());
            report.duplicates_dropped += 1;
            continue;
        }
        let external_id = cell(&record, columns.id).map(str::to_string);
        if let Some(id) = &external_id {
            if !seen_id.insert(id.clone()) {
                issue(IssueKind::DuplicateId, format!("duplicate ID {id:?}"));
                continue;
            }
        }
        rows.push(UploadRow {
            external_id,
            text: text.to_string(),
            pre_label,
            upload_order: rows.len(),
        });
    }
    report.rows_accepted = rows.len();
    Ok((rows, report))
}
