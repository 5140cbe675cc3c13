//! Occluded-pixel reconstruction and person re-identification, desk scale.
//!
//! The pipeline routes each frame through an occlusion detector; occluded
//! frames are coarsely reconstructed (Conv-LSTM for video tracks, autoencoder
//! for single images), refined by a conditional GAN, and finally matched by a
//! Siamese network. The `book/` directory walks through each stage.

pub mod autoencoder;
pub mod cgan;
pub mod config;
pub mod convlstm;
pub mod detector;
pub mod io;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod rng;
pub mod siamese;
pub mod synth;
pub mod tensor;
pub mod train;
