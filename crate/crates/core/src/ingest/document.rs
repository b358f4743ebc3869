//! Run file format, version 1.
//!
//! ```json
//! {
//!   "version": 1,
//!   "classes": ["A", "B", "C"],
//!   "epochs": 3,
//!   "metadata": {"dataset": "toy"},
//!   "instances": [
//!     {"id": "i1", "label": "A", "predictions": ["A", 0, "A"], "image": "file:///i1.png"}
//!   ]
//! }
//! ```
//!
//! Predictions may be written as labels or as class indices. The canonical
//! form keeps the keys in the order above, instances in input order,
//! predictions as indices and omits absent images.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::IngestError;
use crate::model::{ClassId, InstanceRecord, TrainingRun, ValidationError};

pub const FORMAT_VERSION: u32 = 1;

/// Length of the hex run id taken from the content digest.
const RUN_ID_HEX_LEN: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunDocument {
    pub version: u32,
    pub classes: Vec<String>,
    pub epochs: usize,
    pub metadata: BTreeMap<String, serde_json::Value>,
    pub instances: Vec<DocumentInstance>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DocumentInstance {
    pub id: String,
    pub label: String,
    pub predictions: Vec<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub image: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDocument {
    version: u32,
    classes: Vec<String>,
    epochs: usize,
    #[serde(default)]
    metadata: Option<BTreeMap<String, serde_json::Value>>,
    instances: Vec<RawInstance>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInstance {
    id: String,
    label: String,
    predictions: Vec<LabelOrIndex>,
    #[serde(default)]
    image: Option<String>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum LabelOrIndex {
    Index(u32),
    Label(String),
}

/// Parses a run document, resolving label predictions to class indices.
pub fn parse_run_document(text: &str) -> Result<RunDocument, IngestError> {
    let mut de = serde_json::Deserializer::from_str(text);
    let raw: RawDocument = match serde_path_to_error::deserialize(&mut de) {
        Ok(raw) => raw,
        Err(err) => {
            let path = err.path().to_string();
            let inner = err.into_inner();
            return Err(match inner.classify() {
                serde_json::error::Category::Data => IngestError::Schema {
                    path,
                    message: inner.to_string(),
                },
                _ => IngestError::Parse {
                    line: inner.line(),
                    column: inner.column(),
                    message: inner.to_string(),
                },
            });
        }
    };
    de.end().map_err(|e| IngestError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;

    if raw.version != FORMAT_VERSION {
        return Err(IngestError::Schema {
            path: "version".into(),
            message: format!("unsupported format version {}", raw.version),
        });
    }

    let lookup: BTreeMap<&str, u32> = raw
        .classes
        .iter()
        .enumerate()
        .map(|(i, l)| (l.as_str(), i as u32))
        .collect();

    let mut instances = Vec::with_capacity(raw.instances.len());
    for (pos, inst) in raw.instances.into_iter().enumerate() {
        if !lookup.contains_key(inst.label.as_str()) {
            return Err(IngestError::Schema {
                path: format!("instances[{pos}].label"),
                message: format!("unknown label {:?}", inst.label),
            });
        }
        if inst.predictions.len() != raw.epochs {
            return Err(IngestError::Schema {
                path: format!("instances[{pos}].predictions"),
                message: format!(
                    "length mismatch: {} predictions for {} epochs",
                    inst.predictions.len(),
                    raw.epochs
                ),
            });
        }
        let predictions = inst
            .predictions
            .into_iter()
            .enumerate()
            .map(|(j, p)| match p {
                LabelOrIndex::Index(i) => Ok(i),
                LabelOrIndex::Label(l) => {
                    lookup.get(l.as_str()).copied().ok_or_else(|| IngestError::Schema {
                        path: format!("instances[{pos}].predictions[{j}]"),
                        message: format!("unknown label {l:?}"),
                    })
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        instances.push(DocumentInstance {
            id: inst.id,
            label: inst.label,
            predictions,
            image: inst.image,
        });
    }

    Ok(RunDocument {
        version: raw.version,
        classes: raw.classes,
        epochs: raw.epochs,
        metadata: raw.metadata.unwrap_or_default(),
        instances,
    })
}

impl RunDocument {
    /// Compact canonical bytes; the content digest is taken over these.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("run documents always serialize")
    }

    /// Hex SHA-256 of the canonical bytes.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_bytes()))
    }

    pub fn run_id(&self) -> String {
        let mut d = self.digest();
        d.truncate(RUN_ID_HEX_LEN);
        d
    }

    /// Canonical document of an existing run.
    pub fn from_run(run: &TrainingRun) -> Self {
        RunDocument {
            version: FORMAT_VERSION,
            classes: run.class_labels().to_vec(),
            epochs: run.epoch_count(),
            metadata: run.metadata().clone(),
            instances: run
                .instances()
                .iter()
                .map(|inst| DocumentInstance {
                    id: inst.instance_id.clone(),
                    label: run.label(inst.true_class).to_string(),
                    predictions: inst.predictions.iter().map(|p| p.0 as u32).collect(),
                    image: inst.payload_ref.clone(),
                })
                .collect(),
        }
    }
}

/// Validates a parsed document into a run whose id is its content address.
pub fn build_run(doc: &RunDocument) -> Result<TrainingRun, ValidationError> {
    let n = doc.classes.len();
    let to_class = |instance: &str, raw: u32| {
        if (raw as usize) < n && raw <= u16::MAX as u32 {
            Ok(ClassId(raw as u16))
        } else {
            Err(ValidationError::ClassOutOfRange {
                instance: instance.to_string(),
                index: raw as usize,
                classes: n,
            })
        }
    };

    let mut instances = Vec::with_capacity(doc.instances.len());
    for inst in &doc.instances {
        let true_class = doc
            .classes
            .iter()
            .position(|c| *c == inst.label)
            .ok_or_else(|| ValidationError::UnknownLabel {
                instance: inst.id.clone(),
                label: inst.label.clone(),
            })?;
        let predictions = inst
            .predictions
            .iter()
            .map(|&p| to_class(&inst.id, p))
            .collect::<Result<Vec<_>, _>>()?;
        instances.push(InstanceRecord {
            instance_id: inst.id.clone(),
            true_class: ClassId(true_class as u16),
            predictions,
            payload_ref: inst.image.clone(),
        });
    }

    TrainingRun::new(
        doc.run_id(),
        doc.classes.clone(),
        instances,
        doc.epochs,
        doc.metadata.clone(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    const WORKED: &str = r#"{
        "version": 1,
        "classes": ["A", "B", "C"],
        "epochs": 3,
        "metadata": {"dataset": "worked"},
        "instances": [
            {"id": "i1", "label": "A", "predictions": ["A", "A", "A"]},
            {"id": "i2", "label": "A", "predictions": ["B", "A", "A"]},
            {"id": "i3", "label": "B", "predictions": [1, 2, 1]},
            {"id": "i4", "label": "C", "predictions": ["A", "B", "C"], "image": "file:///i4.png"}
        ]
    }"#;

    #[test]
    fn parses_minimal_document() {
        let doc = parse_run_document(WORKED).unwrap();
        assert_eq!(doc.instances.len(), 4);
        assert_eq!(doc.classes.len(), 3);
        assert_eq!(doc.epochs, 3);
        assert_eq!(doc.instances[1].predictions, vec![1, 0, 0]);
        assert_eq!(doc.instances[2].predictions, vec![1, 2, 1]);
        assert_eq!(doc.instances[3].image.as_deref(), Some("file:///i4.png"));
    }

    #[test]
    fn unknown_label_is_schema_error() {
        let text = WORKED.replace(r#""label": "C""#, r#""label": "D""#);
        match parse_run_document(&text).unwrap_err() {
            IngestError::Schema { path, message } => {
                assert_eq!(path, "instances[3].label");
                assert!(message.contains("unknown label"));
            }
            other => panic!("unexpected {other:?}"),
        }
        let text = WORKED.replace(r#"["A", "A", "A"]"#, r#"["A", "Z", "A"]"#);
        assert!(matches!(
            parse_run_document(&text).unwrap_err(),
            IngestError::Schema { .. }
        ));
    }

    #[test]
    fn length_mismatch_is_schema_error() {
        let text = WORKED.replace(r#"["A", "A", "A"]"#, r#"["A", "A", "A", "B"]"#);
        match parse_run_document(&text).unwrap_err() {
            IngestError::Schema { path, message } => {
                assert_eq!(path, "instances[0].predictions");
                assert!(message.contains("length mismatch"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn syntax_error_reports_line() {
        let err = parse_run_document("{\n  \"version\": 1,\n  \"classes\": [\n").unwrap_err();
        assert!(matches!(err, IngestError::Parse { line: 4, .. }), "{err:?}");
        let err = parse_run_document("{\"version\": 1,,}").unwrap_err();
        assert!(matches!(err, IngestError::Parse { line: 1, .. }));
    }

    #[test]
    fn missing_field_and_bad_version_are_schema_errors() {
        let err = parse_run_document(r#"{"version": 1, "classes": ["A","B"], "instances": []}"#)
            .unwrap_err();
        assert!(matches!(err, IngestError::Schema { .. }), "{err:?}");
        let text = WORKED.replace(r#""version": 1"#, r#""version": 2"#);
        assert!(matches!(
            parse_run_document(&text).unwrap_err(),
            IngestError::Schema { path, .. } if path == "version"
        ));
    }

    #[test]
    fn canonical_form_has_fixed_key_order_and_indices() {
        let doc = parse_run_document(WORKED).unwrap();
        let text = String::from_utf8(doc.canonical_bytes()).unwrap();
        assert!(text.starts_with(
            r#"{"version":1,"classes":["A","B","C"],"epochs":3,"metadata":{"dataset":"worked"},"instances":[{"id":"i1","label":"A","predictions":[0,0,0]}"#
        ));
        assert!(text.contains(r#""predictions":[0,1,2],"image":"file:///i4.png"}"#));
        // canonical text parses back to the same document
        assert_eq!(parse_run_document(&text).unwrap(), doc);
    }

    #[test]
    fn build_run_is_deterministic_and_content_addressed() {
        let doc = parse_run_document(WORKED).unwrap();
        let a = build_run(&doc).unwrap();
        let b = build_run(&parse_run_document(WORKED).unwrap()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.run_id(), doc.run_id());
        assert_eq!(
            RunDocument::from_run(&a).canonical_bytes(),
            RunDocument::from_run(&b).canonical_bytes()
        );
        assert_eq!(RunDocument::from_run(&a), doc);
    }

    #[test]
    fn build_run_catches_index_out_of_range() {
        let text = WORKED.replace("[1, 2, 1]", "[1, 7, 1]");
        let doc = parse_run_document(&text).unwrap();
        assert!(matches!(
            build_run(&doc).unwrap_err(),
            ValidationError::ClassOutOfRange { index: 7, .. }
        ));
    }
}
