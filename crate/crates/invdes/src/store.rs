//! Model directories. A directory may hold a forward model, a classifier
//! or both, each as a weight file plus a JSON sidecar.

use std::path::Path;

use invdes_core::classifier::{ClassifierMeta, ClassifierModel};
use invdes_core::diffnum::WeightSet;
use invdes_core::forward::{ForwardMeta, ForwardModel};
use sha2::{Digest, Sha256};

use crate::{io, Error, Result};

pub const FORWARD_WEIGHTS: &str = "forward.weights.json";
pub const FORWARD_META: &str = "forward.meta.json";
pub const CLASSIFIER_WEIGHTS: &str = "classifier.weights.json";
pub const CLASSIFIER_META: &str = "classifier.meta.json";

pub fn save_forward(dir: &Path, model: &ForwardModel) -> Result<()> {
    io::write_json(&dir.join(FORWARD_META), &model.meta())?;
    io::write_json(&dir.join(FORWARD_WEIGHTS), &model.to_weights())
}

pub fn has_forward(dir: &Path) -> bool {
    dir.join(FORWARD_WEIGHTS).is_file()
}

pub fn load_forward(dir: &Path) -> Result<ForwardModel> {
    if !has_forward(dir) {
        return Err(Error::Invalid(format!("{} holds no forward model", dir.display())));
    }
    let meta: ForwardMeta = io::read_json(&dir.join(FORWARD_META))?;
    let weights: WeightSet = io::read_json(&dir.join(FORWARD_WEIGHTS))?;
    Ok(ForwardModel::from_parts(meta, &weights)?)
}

pub fn save_classifier(dir: &Path, model: &ClassifierModel) -> Result<()> {
    io::write_json(&dir.join(CLASSIFIER_META), &model.meta())?;
    io::write_json(&dir.join(CLASSIFIER_WEIGHTS), &model.to_weights())
}

pub fn has_classifier(dir: &Path) -> bool {
    dir.join(CLASSIFIER_WEIGHTS).is_file()
}

pub fn load_classifier(dir: &Path) -> Result<ClassifierModel> {
    if !has_classifier(dir) {
        return Err(Error::Invalid(format!("{} holds no classifier", dir.display())));
    }
    let meta: ClassifierMeta = io::read_json(&dir.join(CLASSIFIER_META))?;
    let weights: WeightSet = io::read_json(&dir.join(CLASSIFIER_WEIGHTS))?;
    Ok(ClassifierModel::from_parts(meta, &weights)?)
}

/// SHA-256 over shapes and little-endian values of the encoder, message
/// and update tensors.
pub fn trunk_hash(model: &ForwardModel) -> String {
    let mut h = Sha256::new();
    for t in model.trunk_tensors() {
        for &d in t.shape() {
            h.update((d as u64).to_le_bytes());
        }
        for &x in t.data() {
            h.update(x.to_le_bytes());
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}
