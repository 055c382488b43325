//! The three learned modules — perception, physics, rendering — as pure
//! forward functions over object sets.
//!
//! Object vectors are the only interface between the modules: the perception
//! encoder maps each masked segment to one vector, the physics predictor
//! maps a set of vectors to their settled counterparts in a single shot, and
//! the renderer decodes each vector to an image plus a visibility heatmap
//! that a soft depth test composites into one frame.

mod config;
mod forward;
mod io;
mod nets;

pub use config::ModelConfig;
pub use forward::{
    chw_image, composite, composite_tape, composite_weights, encode_segments,
    encode_segments_tape, frame_segments, image_chw, l2_distance, predict_image, render_objects,
    render_objects_tape, segment_image, segments_input, simulate_physics, simulate_physics_tape,
    ObjectSet, ObjectVec,
};
pub use io::{load_model, load_model_meta, save_model, verify_canonical};
pub use nets::{
    ConvLayer, Decoder, LinearLayer, Mlp, ModelMeta, Nets, PerceptionNet, PhysicsNet, RenderNet,
};
