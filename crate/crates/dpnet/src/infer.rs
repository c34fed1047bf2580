//! Compressed forward computation.
//!
//! For a quantized row `b = [c[p_1], ..., c[p_n]]` the dot product
//! `a . b` equals `sum_k c_k * (sum of a_i with p_i = k)`: activations are
//! first summed per cluster, then multiplied by the K codebook entries —
//! K multiplications instead of n, with n + K - 1 additions. Matrix-vector
//! products and (im2col-lowered) convolutions apply this row by row, and
//! the counted variants instrument every floating-point operation so the
//! reduction can be asserted rather than estimated.

use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::quant::{
    dequantize_tensor, GroupingMode, GroupingScheme, QuantError, QuantizedTensor, Tensor,
    TensorMeta,
};

#[derive(Debug, Error, PartialEq)]
pub enum InferError {
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("codebook is empty")]
    EmptyCodebook,
    #[error("index {index} at position {position} exceeds codebook of {len} entries")]
    IndexOutOfRange { position: usize, index: usize, len: usize },
    #[error("tensor {name} is not in {expected:?} grouping")]
    ModeMismatch { name: String, expected: GroupingMode },
    #[error("bad geometry: {0}")]
    BadGeometry(String),
    #[error(transparent)]
    Quant(#[from] QuantError),
}

/// Exact counts of floating-point work performed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OpCount {
    pub multiplications: u64,
    pub additions: u64,
}

trait OpSink {
    fn mul(&mut self);
    fn add(&mut self);
}

impl OpSink for OpCount {
    #[inline]
    fn mul(&mut self) {
        self.multiplications += 1;
    }
    #[inline]
    fn add(&mut self) {
        self.additions += 1;
    }
}

/// Zero-cost sink for the uncounted fast paths.
struct NoCount;

impl OpSink for NoCount {
    #[inline(always)]
    fn mul(&mut self) {}
    #[inline(always)]
    fn add(&mut self) {}
}

#[inline]
fn grouped_dot_impl<S: OpSink>(
    a: &[f64],
    codebook: &[f32],
    indices: &[u32],
    ops: &mut S,
) -> Result<f64, InferError> {
    if codebook.is_empty() {
        return Err(InferError::EmptyCodebook);
    }
    if a.len() != indices.len() {
        return Err(InferError::LengthMismatch { expected: indices.len(), got: a.len() });
    }
    // Per-cluster partial sums accumulate in input order.
    let mut buckets = vec![0.0f64; codebook.len()];
    for (position, (&x, &p)) in a.iter().zip(indices).enumerate() {
        let p = p as usize;
        if p >= codebook.len() {
            return Err(InferError::IndexOutOfRange { position, index: p, len: codebook.len() });
        }
        buckets[p] += x;
        ops.add();
    }
    // K multiplications; the K-term reduction runs in ascending cluster index.
    let mut total = codebook[0] as f64 * buckets[0];
    ops.mul();
    for k in 1..codebook.len() {
        let term = codebook[k] as f64 * buckets[k];
        ops.mul();
        total += term;
        ops.add();
    }
    Ok(total)
}

/// Dot product of `a` against a quantized row, using K multiplications and
/// n + K - 1 additions. Equals the dense dot with the dequantized row.
pub fn grouped_dot(a: &[f64], codebook: &[f32], indices: &[u32]) -> Result<f64, InferError> {
    grouped_dot_impl(a, codebook, indices, &mut NoCount)
}

/// [`grouped_dot`] with instrumented operation counts.
pub fn grouped_dot_counted(
    a: &[f64],
    codebook: &[f32],
    indices: &[u32],
    ops: &mut OpCount,
) -> Result<f64, InferError> {
    grouped_dot_impl(a, codebook, indices, ops)
}

/// Plain dense dot product with instrumented counts (the baseline the
/// grouped kernel is measured against: n multiplications per output).
pub fn dense_dot_counted(a: &[f64], b: &[f64], ops: &mut OpCount) -> Result<f64, InferError> {
    if a.len() != b.len() {
        return Err(InferError::LengthMismatch { expected: b.len(), got: a.len() });
    }
    if a.is_empty() {
        return Ok(0.0);
    }
    let mut total = a[0] * b[0];
    ops.mul();
    for i in 1..a.len() {
        total += a[i] * b[i];
        ops.mul();
        ops.add();
    }
    Ok(total)
}

/// Dense matrix-vector product over a row-major `rows x cols` weight slice.
pub fn dense_matvec(weights: &[f64], rows: usize, cols: usize, x: &[f64]) -> Vec<f64> {
    assert_eq!(weights.len(), rows * cols);
    assert_eq!(x.len(), cols);
    (0..rows)
        .map(|r| {
            let row = &weights[r * cols..(r + 1) * cols];
            row.iter().zip(x).map(|(&w, &v)| w * v).sum()
        })
        .collect()
}

fn compressed_matvec_impl<S: OpSink>(
    qt: &QuantizedTensor,
    x: &[f64],
    ops: &mut S,
) -> Result<Vec<f64>, InferError> {
    if qt.scheme.mode != GroupingMode::PerRow {
        return Err(InferError::ModeMismatch {
            name: qt.meta.name.clone(),
            expected: GroupingMode::PerRow,
        });
    }
    let rows = qt.meta.shape[0];
    let cols = qt.meta.shape[1];
    if x.len() != cols {
        return Err(InferError::LengthMismatch { expected: cols, got: x.len() });
    }
    let mut out = Vec::with_capacity(rows);
    for r in 0..rows {
        let indices = &qt.indices[r * cols..(r + 1) * cols];
        out.push(grouped_dot_impl(x, &qt.codebooks[r], indices, ops)?);
    }
    Ok(out)
}

/// Matrix-vector product of a per-row quantized matrix with `x`: one
/// grouped dot per row, so `rows * K` multiplications instead of
/// `rows * cols`.
pub fn compressed_matvec(qt: &QuantizedTensor, x: &[f64]) -> Result<Vec<f64>, InferError> {
    compressed_matvec_impl(qt, x, &mut NoCount)
}

/// [`compressed_matvec`] with instrumented operation counts.
pub fn compressed_matvec_counted(
    qt: &QuantizedTensor,
    x: &[f64],
    ops: &mut OpCount,
) -> Result<Vec<f64>, InferError> {
    compressed_matvec_impl(qt, x, ops)
}

/// A rank-3 activation volume in channel-major (c, h, w) layout.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl FeatureMap {
    pub fn new(
        channels: usize,
        height: usize,
        width: usize,
        data: Vec<f64>,
    ) -> Result<Self, InferError> {
        if data.len() != channels * height * width {
            return Err(InferError::LengthMismatch {
                expected: channels * height * width,
                got: data.len(),
            });
        }
        Ok(Self { channels, height, width, data })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self { channels, height, width, data: vec![0.0; channels * height * width] }
    }

    #[inline]
    pub fn at(&self, c: usize, h: usize, w: usize) -> f64 {
        self.data[(c * self.height + h) * self.width + w]
    }
}

fn conv_geometry(
    qt: &QuantizedTensor,
    input: &FeatureMap,
    stride: usize,
    padding: usize,
) -> Result<(usize, usize, usize, usize, usize, usize), InferError> {
    if qt.meta.shape.len() != 4 || qt.scheme.mode != GroupingMode::PerFilter {
        return Err(InferError::ModeMismatch {
            name: qt.meta.name.clone(),
            expected: GroupingMode::PerFilter,
        });
    }
    let [filters, channels, kh, kw] =
        [qt.meta.shape[0], qt.meta.shape[1], qt.meta.shape[2], qt.meta.shape[3]];
    if channels != input.channels {
        return Err(InferError::BadGeometry(format!(
            "kernel expects {channels} channels, input has {}",
            input.channels
        )));
    }
    if stride == 0 {
        return Err(InferError::BadGeometry("stride must be positive".into()));
    }
    if input.height + 2 * padding < kh || input.width + 2 * padding < kw {
        return Err(InferError::BadGeometry(format!(
            "kernel {kh}x{kw} larger than padded input {}x{}",
            input.height + 2 * padding,
            input.width + 2 * padding
        )));
    }
    let out_h = (input.height + 2 * padding - kh) / stride + 1;
    let out_w = (input.width + 2 * padding - kw) / stride + 1;
    Ok((filters, channels, kh, kw, out_h, out_w))
}

fn conv_impl<S: OpSink>(
    qt: &QuantizedTensor,
    input: &FeatureMap,
    stride: usize,
    padding: usize,
    ops: &mut S,
) -> Result<FeatureMap, InferError> {
    let (filters, channels, kh, kw, out_h, out_w) = conv_geometry(qt, input, stride, padding)?;
    let patch_len = channels * kh * kw;
    let mut patch = vec![0.0f64; patch_len];
    let mut out = FeatureMap::zeros(filters, out_h, out_w);
    for oh in 0..out_h {
        for ow in 0..out_w {
            // im2col: extract one zero-padded patch in (c, kh, kw) order,
            // matching the row-major filter layout.
            let mut slot = 0;
            for c in 0..channels {
                for dh in 0..kh {
                    for dw in 0..kw {
                        let ih = (oh * stride + dh) as isize - padding as isize;
                        let iw = (ow * stride + dw) as isize - padding as isize;
                        patch[slot] = if ih >= 0
                            && (ih as usize) < input.height
                            && iw >= 0
                            && (iw as usize) < input.width
                        {
                            input.at(c, ih as usize, iw as usize)
                        } else {
                            0.0
                        };
                        slot += 1;
                    }
                }
            }
            for f in 0..filters {
                let indices = &qt.indices[f * patch_len..(f + 1) * patch_len];
                let value = grouped_dot_impl(&patch, &qt.codebooks[f], indices, ops)?;
                out.data[(f * out_h + oh) * out_w + ow] = value;
            }
        }
    }
    Ok(out)
}

/// Convolution of a per-filter quantized rank-4 tensor with an input
/// volume, lowered to grouped dot products over im2col patches. Equals the
/// direct dense convolution with the dequantized weights.
pub fn conv_as_matmul(
    qt: &QuantizedTensor,
    input: &FeatureMap,
    stride: usize,
    padding: usize,
) -> Result<FeatureMap, InferError> {
    conv_impl(qt, input, stride, padding, &mut NoCount)
}

/// [`conv_as_matmul`] with instrumented operation counts.
pub fn conv_as_matmul_counted(
    qt: &QuantizedTensor,
    input: &FeatureMap,
    stride: usize,
    padding: usize,
    ops: &mut OpCount,
) -> Result<FeatureMap, InferError> {
    conv_impl(qt, input, stride, padding, ops)
}

/// Multiplication counts of a compressed layer against its dense baseline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpCountReport {
    pub multiplications: u64,
    pub additions: u64,
    pub baseline_multiplications: u64,
    pub reduction_factor: f64,
}

impl OpCountReport {
    fn new(compressed: OpCount, baseline_multiplications: u64) -> Self {
        Self {
            multiplications: compressed.multiplications,
            additions: compressed.additions,
            baseline_multiplications,
            reduction_factor: baseline_multiplications as f64
                / compressed.multiplications as f64,
        }
    }
}

/// A layer shape to benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchLayer {
    Fc {
        rows: usize,
        cols: usize,
        k: usize,
    },
    Conv {
        filters: usize,
        channels: usize,
        kernel: usize,
        input: usize,
        k: usize,
        stride: usize,
        padding: usize,
    },
}

/// Counted and timed comparison of the grouped kernel against the dense
/// baseline. Counts are exact and deterministic; the wall-clock numbers are
/// informational only (they depend on the machine).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchResult {
    pub report: OpCountReport,
    pub compressed_secs: f64,
    pub dense_secs: f64,
    pub max_rel_deviation: f64,
}

/// Build a random quantized tensor: strictly ascending random codebooks,
/// uniform random indices. Deterministic given the seed.
pub fn random_quantized_tensor(
    name: &str,
    shape: Vec<usize>,
    mode: GroupingMode,
    k: usize,
    seed: u64,
) -> Result<QuantizedTensor, InferError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scheme = GroupingScheme::for_shape(&shape, mode).map_err(InferError::Quant)?;
    let meta = TensorMeta::new(name, shape);
    let mut codebooks = Vec::with_capacity(scheme.group_count());
    let mut indices = Vec::with_capacity(meta.element_count());
    for &size in &scheme.group_sizes {
        let k_group = k.min(size);
        let codebook = loop {
            let mut entries: Vec<f32> =
                (0..k_group).map(|_| rng.random_range(-1.0f32..1.0)).collect();
            entries.sort_by(f32::total_cmp);
            entries.dedup();
            if entries.len() == k_group {
                break entries;
            }
        };
        for _ in 0..size {
            indices.push(rng.random_range(0..k_group as u32));
        }
        codebooks.push(codebook);
    }
    Ok(QuantizedTensor { meta, scheme, k, codebooks, indices })
}

fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn max_rel_deviation(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(1e-30f64, |m, &v| m.max(v.abs()));
    a.iter().zip(b).fold(0.0f64, |m, (&x, &y)| m.max((x - y).abs() / scale))
}

/// Benchmark one layer shape: deterministic op counts plus wall-clock
/// seconds per run for the compressed and dense paths.
pub fn bench(layer: &BenchLayer, reps: usize, seed: u64) -> Result<BenchResult, InferError> {
    match *layer {
        BenchLayer::Fc { rows, cols, k } => {
            let qt = random_quantized_tensor(
                "bench.fc",
                vec![rows, cols],
                GroupingMode::PerRow,
                k,
                seed,
            )?;
            bench_fc_tensor(&qt, reps, seed)
        }
        BenchLayer::Conv { filters, channels, kernel, input, k, stride, padding } => {
            let qt = random_quantized_tensor(
                "bench.conv",
                vec![filters, channels, kernel, kernel],
                GroupingMode::PerFilter,
                k,
                seed,
            )?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
            let x = FeatureMap::new(
                channels,
                input,
                input,
                random_vector(&mut rng, channels * input * input),
            )?;
            let mut ops = OpCount::default();
            let compressed = conv_as_matmul_counted(&qt, &x, stride, padding, &mut ops)?;

            let dense = dequantize_tensor(&qt).map_err(InferError::Quant)?;
            let weights: Vec<f64> = dense.data.iter().map(|&v| v as f64).collect();
            let patch_len = channels * kernel * kernel;
            let baseline_multiplications =
                (filters * compressed.height * compressed.width * patch_len) as u64;
            let reference = dense_conv(&weights, filters, channels, kernel, &x, stride, padding);

            let timer = Instant::now();
            for _ in 0..reps {
                std::hint::black_box(conv_as_matmul(&qt, &x, stride, padding)?);
            }
            let compressed_secs = timer.elapsed().as_secs_f64() / reps.max(1) as f64;
            let timer = Instant::now();
            for _ in 0..reps {
                std::hint::black_box(dense_conv(
                    &weights, filters, channels, kernel, &x, stride, padding,
                ));
            }
            let dense_secs = timer.elapsed().as_secs_f64() / reps.max(1) as f64;

            Ok(BenchResult {
                report: OpCountReport::new(ops, baseline_multiplications),
                compressed_secs,
                dense_secs,
                max_rel_deviation: max_rel_deviation(&compressed.data, &reference.data),
            })
        }
    }
}

/// Benchmark an existing per-row quantized tensor (e.g. one loaded from a
/// DPNQ file).
pub fn bench_fc_tensor(
    qt: &QuantizedTensor,
    reps: usize,
    seed: u64,
) -> Result<BenchResult, InferError> {
    if qt.scheme.mode != GroupingMode::PerRow {
        return Err(InferError::ModeMismatch {
            name: qt.meta.name.clone(),
            expected: GroupingMode::PerRow,
        });
    }
    let rows = qt.meta.shape[0];
    let cols = qt.meta.shape[1];
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let x = random_vector(&mut rng, cols);

    let mut ops = OpCount::default();
    let compressed = compressed_matvec_counted(qt, &x, &mut ops)?;

    let dense = dequantize_tensor(qt).map_err(InferError::Quant)?;
    let weights: Vec<f64> = dense.data.iter().map(|&v| v as f64).collect();
    let mut baseline_ops = OpCount::default();
    let mut reference = Vec::with_capacity(rows);
    for r in 0..rows {
        reference.push(dense_dot_counted(
            &x,
            &weights[r * cols..(r + 1) * cols],
            &mut baseline_ops,
        )?);
    }

    let timer = Instant::now();
    for _ in 0..reps {
        std::hint::black_box(compressed_matvec(qt, &x)?);
    }
    let compressed_secs = timer.elapsed().as_secs_f64() / reps.max(1) as f64;
    let timer = Instant::now();
    for _ in 0..reps {
        std::hint::black_box(dense_matvec(&weights, rows, cols, &x));
    }
    let dense_secs = timer.elapsed().as_secs_f64() / reps.max(1) as f64;

    Ok(BenchResult {
        report: OpCountReport::new(ops, baseline_ops.multiplications),
        compressed_secs,
        dense_secs,
        max_rel_deviation: max_rel_deviation(&compressed, &reference),
    })
}

/// Direct-loop dense convolution (the baseline bench times against).
fn dense_conv(
    weights: &[f64],
    filters: usize,
    channels: usize,
    kernel: usize,
    input: &FeatureMap,
    stride: usize,
    padding: usize,
) -> FeatureMap {
    let out_h = (input.height + 2 * padding - kernel) / stride + 1;
    let out_w = (input.width + 2 * padding - kernel) / stride + 1;
    let mut out = FeatureMap::zeros(filters, out_h, out_w);
    for f in 0..filters {
        for oh in 0..out_h {
            for ow in 0..out_w {
                let mut acc = 0.0;
                for c in 0..channels {
                    for dh in 0..kernel {
                        for dw in 0..kernel {
                            let ih = (oh * stride + dh) as isize - padding as isize;
                            let iw = (ow * stride + dw) as isize - padding as isize;
                            if ih >= 0
                                && (ih as usize) < input.height
                                && iw >= 0
                                && (iw as usize) < input.width
                            {
                                let w =
                                    weights[((f * channels + c) * kernel + dh) * kernel + dw];
                                acc += w * input.at(c, ih as usize, iw as usize);
                            }
                        }
                    }
                }
                out.data[(f * out_h + oh) * out_w + ow] = acc;
            }
        }
    }
    out
}
