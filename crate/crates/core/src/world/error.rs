use thiserror::Error;

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("dataset io: {0}")]
    Io(#[from] std::io::Error),

    #[error("image codec: {0}")]
    Image(#[from] image::ImageError),

    #[error("metadata: {0}")]
    Json(#[from] serde_json::Error),

    #[error("{0}")]
    Format(String),
}
