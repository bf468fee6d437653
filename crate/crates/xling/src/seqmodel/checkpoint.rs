//! JSON checkpoint format for translator models.
//!
//! Parameters are stored as full-precision decimal strings so the round trip
//! is bit-exact on the parameter array.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::seqmodel::{ConditionalSeqModel, ModelKind, ParamSlice, ParameterVector, Vocabulary};

#[derive(Serialize, Deserialize)]
struct ModelCheckpoint {
    kind: ModelKind,
    source_vocab: Vocabulary,
    target_vocab: Vocabulary,
    layout: Vec<ParamSlice>,
    values: Vec<String>,
}

pub fn model_to_json(model: &ConditionalSeqModel) -> Result<String> {
    let doc = ModelCheckpoint {
        kind: model.kind(),
        source_vocab: model.source_vocab().clone(),
        target_vocab: model.target_vocab().clone(),
        layout: model.phi().layout().to_vec(),
        values: model.phi().to_decimal_strings(),
    };
    Ok(serde_json::to_string_pretty(&doc)?)
}

pub fn model_from_json(json: &str) -> Result<ConditionalSeqModel> {
    let doc: ModelCheckpoint = serde_json::from_str(json)?;
    let phi = ParameterVector::from_decimal_strings(doc.layout, &doc.values)?;
    ConditionalSeqModel::from_parts(doc.kind, doc.source_vocab, doc.target_vocab, phi)
}

pub fn save_model(model: &ConditionalSeqModel, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, model_to_json(model)?)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<ConditionalSeqModel> {
    let json = fs::read_to_string(path)?;
    model_from_json(&json)
}
