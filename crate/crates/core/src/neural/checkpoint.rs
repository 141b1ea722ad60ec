//! JSON checkpoints holding the architecture, training options, seed and
//! every parameter. Floats are written in shortest round-trip form, so a
//! reload is bit-exact.

use serde::{Deserialize, Serialize};

use super::{Model, NeuralError, Result};

pub const CHECKPOINT_VERSION: u32 = 1;
const FORMAT: &str = "handedness-model";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub model: Model,
}

pub fn save_checkpoint(model: &Model) -> String {
    let ck = Checkpoint {
        format: FORMAT.to_string(),
        version: CHECKPOINT_VERSION,
        model: model.clone(),
    };
    serde_json::to_string_pretty(&ck).expect("model parameters are finite")
}

pub fn load_checkpoint(text: &str) -> Result<Model> {
    let ck: Checkpoint =
        serde_json::from_str(text).map_err(|e| NeuralError::Checkpoint(e.to_string()))?;
    if ck.format != FORMAT {
        return Err(NeuralError::Checkpoint(format!(
            "unknown format {:?}",
            ck.format
        )));
    }
    if ck.version != CHECKPOINT_VERSION {
        return Err(NeuralError::Checkpoint(format!(
            "unsupported version {}",
            ck.version
        )));
    }
    let mut model = ck.model;
    let expected = model.arch.build()?;
    let shapes_match = expected.layers.len() == model.network.layers.len()
        && expected.shapes() == model.network.shapes();
    if !shapes_match {
        return Err(NeuralError::Checkpoint(
            "layers do not match the architecture".into(),
        ));
    }
    for layer in &mut model.network.layers {
        layer.reset_grads();
    }
    Ok(model)
}
