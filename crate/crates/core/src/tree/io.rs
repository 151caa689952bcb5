use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TreeModel;
use crate::error::{Error, Result};

pub const MODEL_FORMAT: &str = "foldtree-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Serialize)]
struct Envelope<'a> {
    format: &'a str,
    version: u32,
    #[serde(flatten)]
    model: &'a TreeModel,
}

#[derive(Deserialize)]
struct Header {
    format: Option<String>,
    version: Option<u32>,
}

impl TreeModel {
    pub fn to_json(&self) -> Result<String> {
        let env = Envelope {
            format: MODEL_FORMAT,
            version: MODEL_VERSION,
            model: self,
        };
        serde_json::to_string(&env).map_err(|e| Error::ModelFormat(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<TreeModel> {
        let header: Header =
            serde_json::from_str(text).map_err(|e| Error::ModelFormat(e.to_string()))?;
        if header.format.as_deref() != Some(MODEL_FORMAT) {
            return Err(Error::ModelFormat(format!(
                "not a {MODEL_FORMAT} file (format = {:?})",
                header.format
            )));
        }
        if header.version != Some(MODEL_VERSION) {
            return Err(Error::ModelFormat(format!(
                "unsupported model version {:?}, expected {MODEL_VERSION}",
                header.version
            )));
        }
        let model: TreeModel =
            serde_json::from_str(text).map_err(|e| Error::ModelFormat(e.to_string()))?;
        model.validate()?;
        Ok(model)
    }
}

pub fn save_model(model: &TreeModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let json = model.to_json()?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(json.as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<TreeModel> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut text = String::new();
    std::io::Read::read_to_string(&mut BufReader::new(file), &mut text)
        .map_err(|e| Error::io(path, e))?;
    TreeModel::from_json(&text)
}
