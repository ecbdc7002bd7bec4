//! LSTM encoder / additive-attention decoder translator.

mod attention;
mod checkpoint;
mod decode;
mod gradcheck;
mod lstm;
mod model;
mod params;
mod train;
pub mod vocab;

use thiserror::Error;

pub use attention::{attend, log_softmax, softmax};
pub use checkpoint::{load_model, read_model, save_model, write_model, CHECKPOINT_HEADER};
pub use decode::{beam_search, greedy_decode, BeamConfig, DEFAULT_MAX_LEN};
pub use gradcheck::{gradient_check, TensorCheck};
pub use lstm::lstm_step;
pub use model::{EmbeddingSide, ForwardCache, Qep2SeqModel};
pub use params::{recurrent_parameter_count, AttentionParams, LstmParams, ModelDims, Params, GATES};
pub use train::{teacher_forcing_accuracy, train, train_with, Sample, TrainConfig, TrainReport};
pub use vocab::Vocab;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid vocabulary: {0}")]
    BadVocab(String),
    #[error("empty input sequence")]
    EmptyInput,
    #[error("empty training corpus")]
    EmptyCorpus,
    #[error("parameters are not finite")]
    NonFinite,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("corrupt checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
