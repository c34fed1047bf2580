//! DP-Net: compressing neural-network weights with provably optimal scalar
//! quantization.
//!
//! The crate is organized around a small pipeline:
//!
//! * [`kmeans1d`] — exact one-dimensional k-means via dynamic programming,
//!   together with the exhaustive and Lloyd baselines used to check it.
//! * [`quant`] — fine-grained (per-row / per-filter) tensor quantization,
//!   codebooks and compression-ratio arithmetic.
//! * [`format`] — the `DPNQ` on-disk container: bit-packed indices, optional
//!   canonical Huffman coding, column pruning, plus a plain manifest+blob
//!   format for dense models.
//! * [`infer`] — compressed forward computation: the grouped dot product
//!   that performs `K` multiplications per output element instead of `n`.
//! * [`train`] — a small clustering-friendly training harness (alternating
//!   SGD / re-clustering) with a TRADES-style robust extension and PGD.
//!
//! The `dpnet` CLI in this workspace drives the whole pipeline; the book
//! under `book/` walks through each stage with runnable snippets.

pub mod format;
pub mod infer;
pub mod kmeans1d;
pub mod quant;
pub mod train;
