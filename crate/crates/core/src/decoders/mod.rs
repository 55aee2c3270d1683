//! Bit decisions from a received polynomial: direct zero testing and the
//! neural decoder fed with the received zeros.

mod dizet;
mod mlp;

pub use dizet::{dizet_decode, dizet_tau, dizet_taus};
pub use mlp::{
    mlp_forward, nn_decode, nn_decode_batch, nn_logits, real_bijection, real_bijection_inv, Dense, DenseFile,
    ForwardCache, LogitVector, MlpFile, MlpGrads, MlpParams, DEFAULT_DROPOUT, DEFAULT_SLOPE, MAX_NN_K,
};
