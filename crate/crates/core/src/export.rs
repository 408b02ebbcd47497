//! Export archives: labeled data as CSV, and the trained model as a portable
//! JSON bundle with a README describing how to score new text.
//!
//! Zip entries carry the fixed DOS epoch timestamp (1980-01-01) so identical
//! project state yields identical archives.

use std::io::{Cursor, Read, Write};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use zip::write::SimpleFileOptions;
use zip::{CompressionMethod, ZipArchive, ZipWriter};

use crate::classifier::{softmax, ModelSnapshot};
use crate::coordinator::ProjectState;
use crate::domain::Project;
use crate::error::{Error, Result};
use crate::vectorizer::{Vocabulary, TOKENIZER_NAME};

pub const LABELED_DATA_FILE: &str = "labeled_data.csv";
pub const MODEL_FILE: &str = "model.json";
pub const VECTORIZER_FILE: &str = "vectorizer.json";
pub const README_FILE: &str = "README.md";

fn archive_error(e: impl std::fmt::Display) -> Error {
    Error::Archive(e.to_string())
}

fn write_zip(entries: &[(&str, &[u8])]) -> Result<Vec<u8>> {
    let mut zip = ZipWriter::new(Cursor::new(Vec::new()));
    let options = SimpleFileOptions::default()
        .compression_method(CompressionMethod::Deflated)
        .last_modified_time(zip::DateTime::default());
    for (name, bytes) in entries {
        zip.start_file(*name, options).map_err(archive_error)?;
        zip.write_all(bytes).map_err(archive_error)?;
    }
    Ok(zip.finish().map_err(archive_error)?.into_inner())
}

/// Reads every entry of a zip archive into `(name, bytes)` pairs.
pub fn read_zip(bytes: &[u8]) -> Result<Vec<(String, Vec<u8>)>> {
    let mut archive = ZipArchive::new(Cursor::new(bytes)).map_err(archive_error)?;
    (0..archive.len())
        .map(|i| {
            let mut file = archive.by_index(i).map_err(archive_error)?;
            let mut buf = Vec::new();
            file.read_to_end(&mut buf).map_err(archive_error)?;
            Ok((file.name().to_string(), buf))
        })
        .collect()
}

/// `ID,Text,Label` rows for every labeled record, sorted by label name and
/// then upload order.
pub fn labeled_csv(state: &ProjectState) -> Result<String> {
    let mut rows: Vec<(&str, usize, String, &str)> = state
        .labeled_records()
        .map(|(record, label)| {
            let name = state
                .project
                .label(label)
                .map(|l| l.name.as_str())
                .ok_or(Error::NotFound("label"))?;
            Ok((name, record.upload_order, record.export_id(), record.text.as_str()))
        })
        .collect::<Result<_>>()?;
    rows.sort_by(|a, b| a.0.cmp(b.0).then(a.1.cmp(&b.1)));

    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(["ID", "Text", "Label"]).map_err(archive_error)?;
    for (label, _, id, text) in rows {
        writer.write_record([id.as_str(), text, label]).map_err(archive_error)?;
    }
    let bytes = writer.into_inner().map_err(archive_error)?;
    String::from_utf8(bytes).map_err(archive_error)
}

pub fn export_labeled_zip(state: &ProjectState) -> Result<Vec<u8>> {
    let csv = labeled_csv(state)?;
    write_zip(&[(LABELED_DATA_FILE, csv.as_bytes())])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleMetadata {
    pub project_name: String,
    pub batch_index: usize,
    pub created_at: DateTime<Utc>,
    pub tokenizer: String,
    pub l2_lambda: f64,
}

/// The trained classifier plus everything needed to featurize text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub classes: Vec<String>,
    pub vocabulary: Vec<String>,
    pub idf: Vec<f64>,
    /// `classes × vocabulary`.
    pub coefficients: Vec<Vec<f64>>,
    pub intercepts: Vec<f64>,
    pub metadata: BundleMetadata,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorizerFile {
    pub tokenizer: String,
    pub tokens: Vec<String>,
    pub idf: Vec<f64>,
}

impl ModelBundle {
    pub fn from_snapshot(
        project: &Project,
        vocabulary: &Vocabulary,
        snapshot: &ModelSnapshot,
    ) -> Result<Self> {
        let model = &snapshot.model;
        let classes = model
            .classes
            .iter()
            .map(|id| {
                project
                    .label(*id)
                    .map(|l| l.name.clone())
                    .ok_or(Error::NotFound("label"))
            })
            .collect::<Result<_>>()?;
        let bundle = Self {
            classes,
            vocabulary: vocabulary.tokens().to_vec(),
            idf: vocabulary.idf().to_vec(),
            coefficients: (0..model.n_classes()).map(|c| model.row(c).to_vec()).collect(),
            intercepts: model.intercepts.clone(),
            metadata: BundleMetadata {
                project_name: project.name.clone(),
                batch_index: snapshot.batch_index,
                created_at: snapshot.trained_at,
                tokenizer: TOKENIZER_NAME.to_string(),
                l2_lambda: model.l2_lambda,
            },
        };
        bundle.validate()?;
        Ok(bundle)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.vocabulary.len();
        let shape_ok = self.idf.len() == d
            && self.coefficients.len() == self.classes.len()
            && self.intercepts.len() == self.classes.len()
            && self.coefficients.iter().all(|row| row.len() == d);
        if !shape_ok {
            return Err(Error::InvalidInput("model bundle has inconsistent shapes".into()));
        }
        Ok(())
    }

    pub fn vectorizer(&self) -> VectorizerFile {
        VectorizerFile {
            tokenizer: self.metadata.tokenizer.clone(),
            tokens: self.vocabulary.clone(),
            idf: self.idf.clone(),
        }
    }

    /// Class probabilities for `text`, in `classes` order.
    pub fn predict_proba(&self, text: &str) -> Result<Vec<f64>> {
        let vocabulary = Vocabulary::from_parts(self.vocabulary.clone(), self.idf.clone())?;
        let x = vocabulary.transform(text);
        let scores: Vec<f64> = self
            .coefficients
            .iter()
            .zip(&self.intercepts)
            .map(|(row, b)| b + x.dot(row))
            .collect();
        Ok(softmax(&scores))
    }
}

/// Zip with `model.json`, `vectorizer.json` and `README.md` for the latest
/// model snapshot.
pub fn export_model_bundle(state: &ProjectState) -> Result<Vec<u8>> {
    let bundle = latest_bundle(state)?;
    let model = serde_json::to_vec_pretty(&bundle).map_err(archive_error)?;
    let vectorizer = serde_json::to_vec_pretty(&bundle.vectorizer()).map_err(archive_error)?;
    let readme = generate_readme(&state.project, Some(&bundle));
    write_zip(&[
        (MODEL_FILE, &model),
        (VECTORIZER_FILE, &vectorizer),
        (README_FILE, readme.as_bytes()),
    ])
}

pub fn latest_bundle(state: &ProjectState) -> Result<ModelBundle> {
    if state.project.settings.al_method.uncertainty().is_none() {
        return Err(Error::ModelUnavailable);
    }
    let snapshot = state.snapshots().last().ok_or(Error::ModelUnavailable)?;
    ModelBundle::from_snapshot(&state.project, &state.vocabulary(), snapshot)
}

/// Parsed contents of a model bundle archive.
#[derive(Debug, Clone, PartialEq)]
pub struct BundleArchive {
    pub model: ModelBundle,
    pub vectorizer: VectorizerFile,
    pub readme: String,
}

pub fn read_model_bundle(bytes: &[u8]) -> Result<BundleArchive> {
    let entries = read_zip(bytes)?;
    let find = |name: &str| {
        entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, b)| b.as_slice())
            .ok_or_else(|| Error::Archive(format!("missing {name}")))
    };
    let model: ModelBundle = serde_json::from_slice(find(MODEL_FILE)?).map_err(archive_error)?;
    model.validate()?;
    Ok(BundleArchive {
        model,
        vectorizer: serde_json::from_slice(find(VECTORIZER_FILE)?).map_err(archive_error)?,
        readme: String::from_utf8(find(README_FILE)?.to_vec()).map_err(archive_error)?,
    })
}

pub fn generate_readme(project: &Project, bundle: Option<&ModelBundle>) -> String {
    let mut out = String::new();
    out.push_str(&format!("# Model export for project \"{}\"\n\n", project.name));
    if let Some(b) = bundle {
        out.push_str(&format!(
            "Trained after batch {} on {}. Classes: {}. Vocabulary size: {}.\n\n",
            b.metadata.batch_index,
            b.metadata.created_at.format("%Y-%m-%d %H:%M:%S UTC"),
            b.classes.join(", "),
            b.vocabulary.len(),
        ));
    }
    out.push_str(README_BODY);
    out
}

const README_BODY: &str = r#"## Files

- `model.json`: the classifier. Keys:
  - `classes`: label names; position `c` is class `c`.
  - `vocabulary`: feature tokens; position `j` is feature `j`.
  - `idf`: inverse document frequency weight of each feature.
  - `coefficients`: one row per class, one column per feature.
  - `intercepts`: one value per class.
  - `metadata`: project name, batch index, creation time, tokenizer name
    and the L2 penalty used in training.
- `vectorizer.json`: the featurizer alone. Keys `tokenizer` (always
  `unicode_alnum_min2_lower`), `tokens` and `idf`, identical to the
  vocabulary and idf in `model.json`.
- `README.md`: this file.

## Scoring procedure

Given a text, compute class probabilities as follows.

```
# 1. tokenize
runs   = maximal runs of Unicode alphanumeric characters in text
tokens = [lowercase(r) for r in runs if character_count(r) >= 2]

# 2. tf-idf
x = zeros(len(vocabulary))
for t in tokens:
    if t in vocabulary:
        j = index of t in vocabulary
        x[j] = x[j] + 1
for j in 0 .. len(x):
    x[j] = x[j] * idf[j]
norm = sqrt(sum(x[j]^2 for all j))
if norm > 0:
    x = x / norm            # all-unknown text stays the zero vector

# 3. linear scores
for c in 0 .. len(classes):
    score[c] = intercepts[c] + sum(coefficients[c][j] * x[j] for all j)

# 4. softmax
m = max(score)
e[c] = exp(score[c] - m)
p[c] = e[c] / sum(e)
```

The predicted label is `classes[argmax(p)]`. The idf weights were computed
as `ln((1 + N) / (1 + df)) + 1` over all N project texts, where `df` is the
number of texts containing the token; they are shipped, so new data must not
refit them.
"#;
