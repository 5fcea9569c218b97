//! Acoustic environment transfer on spectrograms.
//!
//! The crate moves the texture of one audio clip (the "style", typically a
//! background recording) onto another (the "content", a foreground event) by
//! optimizing a log-magnitude spectrogram against Gram-matrix statistics of a
//! wide random convolutional layer, then inverting the result with
//! Griffin-Lim. A waveform mixing baseline and an evaluation harness
//! (classifier accuracy, autoencoder embedding distances) quantify how much
//! style was transferred and how much content survived.

pub mod audio;
pub mod cli;
pub mod config;
pub mod corpus;
pub mod dsp;
pub mod eval;
pub mod mix;
pub mod nn;
pub mod report;
pub(crate) mod rng;
pub mod tensor;
pub mod transfer;

pub use audio::Waveform;
pub use tensor::Tensor;

/// Crate-wide error type; each pipeline stage contributes its own variant.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Audio(#[from] audio::AudioError),
    #[error(transparent)]
    Dsp(#[from] dsp::DspError),
    #[error(transparent)]
    Nn(#[from] nn::NnError),
    #[error(transparent)]
    Transfer(#[from] transfer::TransferError),
    #[error(transparent)]
    Mix(#[from] mix::MixError),
    #[error(transparent)]
    Corpus(#[from] corpus::CorpusError),
    #[error(transparent)]
    Eval(#[from] eval::EvalError),
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
