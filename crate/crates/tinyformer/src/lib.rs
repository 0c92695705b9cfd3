//! A small encoder-decoder transformer with its own reverse-mode autodiff.
//!
//! Pre-LN blocks, sinusoidal positions, GELU feed-forward layers and an output
//! projection tied to the input embedding. All arithmetic is `f64`.

pub mod checkpoint;
pub mod error;
pub mod kernels;
pub mod model;
pub mod tape;
pub mod tensor;

pub use checkpoint::Checkpoint;
pub use error::ModelError;
pub use model::{
    argmax, attention, decoder_ids, label_ids, positional_encoding, source_ids, Decoded,
    ModelConfig, TeacherForced, TransformerModel,
};
pub use tape::{Mask, Tape, Var};
pub use tensor::Tensor;
