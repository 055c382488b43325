use std::path::Path;

use super::config::ModelConfig;
use super::nets::{ModelMeta, Nets};
use crate::nn::{load_checkpoint, read_meta, save_checkpoint, NnError, ParamSet, Real};

/// Writes a model checkpoint: architecture constants in the metadata plus
/// every named parameter tensor.
pub fn save_model<R: Real>(
    path: impl AsRef<Path>,
    params: &ParamSet<R>,
    nets: &Nets,
) -> Result<(), NnError> {
    let meta = ModelMeta {
        format: "stacklab-model".into(),
        dtype: format!("{:?}", R::DTYPE),
        config: nets.config.clone(),
    };
    let meta = serde_json::to_string(&meta).expect("metadata serializes");
    save_checkpoint(path, &meta, params)
}

/// Loads a model checkpoint, rebuilding the network handles and verifying
/// the stored architecture constants against the tensor manifest.
pub fn load_model<R: Real>(path: impl AsRef<Path>) -> Result<(ParamSet<R>, Nets), NnError> {
    let (meta, params) = load_checkpoint::<R>(&path)?;
    let meta: ModelMeta =
        serde_json::from_str(&meta).map_err(|e| NnError::Format(format!("model metadata: {e}")))?;
    if meta.format != "stacklab-model" {
        return Err(NnError::Format(format!(
            "not a model checkpoint (format `{}`)",
            meta.format
        )));
    }
    meta.config
        .validate()
        .map_err(NnError::Format)?;
    let nets = Nets::attach(&meta.config, &params).map_err(NnError::Format)?;
    Ok((params, nets))
}

/// Reads just the stored architecture constants.
pub fn load_model_meta(path: impl AsRef<Path>) -> Result<ModelMeta, NnError> {
    let meta = read_meta(path)?;
    serde_json::from_str(&meta).map_err(|e| NnError::Format(format!("model metadata: {e}")))
}

/// Verifies a checkpoint carries the canonical full-scale architecture.
pub fn verify_canonical(meta: &ModelMeta) -> Result<(), String> {
    let want = ModelConfig::default();
    if meta.config != want {
        return Err(format!(
            "checkpoint architecture differs from the canonical constants: {:?}",
            meta.config
        ));
    }
    Ok(())
}
