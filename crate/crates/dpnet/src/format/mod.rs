//! Compressed model storage.
//!
//! The on-disk `DPNQ` container stores each quantized tensor as its
//! codebooks (32-bit floats) plus bit-packed codebook indices, optionally
//! canonical-Huffman coded. Everything multi-byte is little-endian and all
//! bit streams fill bytes LSB-first, so the format is bit-exact across
//! implementations. A plain manifest+blob format is provided for dense
//! (uncompressed) models entering or leaving the pipeline.

mod bitpack;
mod container;
mod huffman;
mod manifest;
mod prune;

pub use bitpack::{pack_indices, packed_len, unpack_indices};
pub use container::{
    deserialize_model, read_model, serialize_model, serialized_len, write_model, Coding,
    CompressedModel, ModelTensor, QuantizedRecord, DPNQ_MAGIC, DPNQ_VERSION,
};
pub use huffman::{huffman_decode, huffman_encode, HuffmanTable};
pub use manifest::{read_dense_model, write_dense_model, DenseModel};
pub use prune::{prune_columns, PruneMask};

use thiserror::Error;

use crate::quant::QuantError;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("bit width must be in 1..=8, got {bits}")]
    InvalidBitWidth { bits: u8 },
    #[error("index {value} at position {position} does not fit in {bits} bits")]
    IndexOverflow { position: usize, value: u32, bits: u8 },
    #[error("packed length mismatch: expected {expected} bytes, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("cannot Huffman-code an empty index stream")]
    EmptyStream,
    #[error("invalid Huffman table: {0}")]
    InvalidTable(String),
    #[error("corrupt Huffman stream at bit {bit_position}")]
    CorruptStream { bit_position: u64 },
    #[error("Huffman stream ended after {decoded} of {expected} symbols")]
    TruncatedStream { decoded: usize, expected: usize },
    #[error("sparsity must be in [0, 1), got {sparsity}")]
    InvalidSparsity { sparsity: f64 },
    #[error("pruning needs a rank-2 tensor, got rank {rank}")]
    PruneRank { rank: usize },
    #[error("not a DPNQ file (bad magic)")]
    BadMagic,
    #[error("unsupported DPNQ version {version}")]
    UnsupportedVersion { version: u16 },
    #[error("k={k} not storable (DPNQ needs 2 <= k <= 256)")]
    UnsupportedK { k: usize },
    #[error("truncated input at offset {offset}: needed {needed} more bytes")]
    Truncated { offset: usize, needed: usize },
    #[error("malformed model: {0}")]
    Malformed(String),
    #[error(transparent)]
    Quant(#[from] QuantError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("manifest error: {0}")]
    Json(#[from] serde_json::Error),
}
