//! Fine-grained tensor quantization.
//!
//! A tensor is split into groups — one per matrix row for fully-connected
//! layers, one per filter for convolutional layers, or the whole tensor —
//! and each group is clustered independently with [`dp_cluster`], giving a
//! small ascending codebook per group plus one codebook index per element.
//! Group-local codebooks barely change the compression ratio (the index
//! bits dominate) but greatly expand the parameter space available to the
//! quantizer.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kmeans1d::{assign, dp_cluster, ClusterError, SortedWeights};

#[derive(Debug, Error, PartialEq)]
pub enum QuantError {
    #[error("shape {shape:?} does not describe {len} elements")]
    ShapeMismatch { shape: Vec<usize>, len: usize },
    #[error("shape must be non-empty with positive dimensions, got {shape:?}")]
    InvalidShape { shape: Vec<usize> },
    #[error("non-finite tensor element at flat index {index}")]
    NonFinite { index: usize },
    #[error("{mode:?} grouping needs rank {expected}, tensor has rank {rank}")]
    ModeIncompatible { mode: GroupingMode, expected: usize, rank: usize },
    #[error("k must be at least {min}, got {k}")]
    InvalidK { k: usize, min: usize },
    #[error("mismatched structure: {0}")]
    StructureMismatch(String),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
}

/// A dense row-major tensor of 32-bit floats.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self, QuantError> {
        if shape.is_empty() || shape.iter().any(|&d| d == 0) {
            return Err(QuantError::InvalidShape { shape });
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(QuantError::ShapeMismatch { shape, len: data.len() });
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(QuantError::NonFinite { index });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self, QuantError> {
        let len: usize = shape.iter().product();
        Self::new(shape, vec![0.0; len])
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn element_count(&self) -> usize {
        self.data.len()
    }

    /// Same data under a different shape (row-major order is preserved).
    pub fn reshaped(&self, shape: Vec<usize>) -> Result<Self, QuantError> {
        Self::new(shape, self.data.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LayerKind {
    FullyConnected,
    Convolutional,
    Other,
}

impl LayerKind {
    /// Conventional kind for a tensor rank: matrices are fully-connected
    /// weights, rank-4 tensors are convolution filters.
    pub fn infer(shape: &[usize]) -> Self {
        match shape.len() {
            2 => LayerKind::FullyConnected,
            4 => LayerKind::Convolutional,
            _ => LayerKind::Other,
        }
    }
}

/// Name, shape and kind of one weight tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorMeta {
    pub name: String,
    pub shape: Vec<usize>,
    pub layer_kind: LayerKind,
}

impl TensorMeta {
    pub fn new(name: impl Into<String>, shape: Vec<usize>) -> Self {
        let layer_kind = LayerKind::infer(&shape);
        Self { name: name.into(), shape, layer_kind }
    }

    pub fn element_count(&self) -> usize {
        self.shape.iter().product()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GroupingMode {
    /// One group per row of a rank-2 matrix.
    PerRow,
    /// One group per output filter of a rank-4 convolution tensor.
    PerFilter,
    /// A single group over all elements.
    WholeTensor,
}

impl GroupingMode {
    /// The grouping conventionally used for a tensor of this rank: per-row
    /// for matrices, per-filter for convolutions, whole-tensor otherwise.
    pub fn auto(shape: &[usize]) -> Self {
        match shape.len() {
            2 => GroupingMode::PerRow,
            4 => GroupingMode::PerFilter,
            _ => GroupingMode::WholeTensor,
        }
    }
}

/// How a tensor's elements are split into quantization groups. Elements of
/// a group are consecutive in row-major order, so group `i` covers the flat
/// range starting where group `i-1` ended.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupingScheme {
    pub mode: GroupingMode,
    pub group_sizes: Vec<usize>,
}

impl GroupingScheme {
    pub fn for_shape(shape: &[usize], mode: GroupingMode) -> Result<Self, QuantError> {
        if shape.is_empty() || shape.iter().any(|&d| d == 0) {
            return Err(QuantError::InvalidShape { shape: shape.to_vec() });
        }
        let total: usize = shape.iter().product();
        let group_sizes = match mode {
            GroupingMode::PerRow => {
                if shape.len() != 2 {
                    return Err(QuantError::ModeIncompatible {
                        mode,
                        expected: 2,
                        rank: shape.len(),
                    });
                }
                vec![shape[1]; shape[0]]
            }
            GroupingMode::PerFilter => {
                if shape.len() != 4 {
                    return Err(QuantError::ModeIncompatible {
                        mode,
                        expected: 4,
                        rank: shape.len(),
                    });
                }
                vec![shape[1] * shape[2] * shape[3]; shape[0]]
            }
            GroupingMode::WholeTensor => vec![total],
        };
        Ok(Self { mode, group_sizes })
    }

    pub fn group_count(&self) -> usize {
        self.group_sizes.len()
    }

    pub fn total_elements(&self) -> usize {
        self.group_sizes.iter().sum()
    }

    /// Flat element ranges of each group, in order.
    pub fn group_ranges(&self) -> impl Iterator<Item = std::ops::Range<usize>> + '_ {
        self.group_sizes.iter().scan(0usize, |offset, &size| {
            let start = *offset;
            *offset += size;
            Some(start..*offset)
        })
    }
}

/// Split a tensor into quantization groups (row-major slices).
pub fn partition_tensor(tensor: &Tensor, mode: GroupingMode) -> Result<Vec<&[f32]>, QuantError> {
    let scheme = GroupingScheme::for_shape(&tensor.shape, mode)?;
    Ok(scheme.group_ranges().map(|r| &tensor.data[r]).collect())
}

/// A quantized tensor: per-group ascending codebooks plus one codebook
/// index per element (flat, original row-major order).
///
/// `k` is the requested cluster count; a group's codebook can be shorter
/// when the group has fewer than `k` distinct values (identical adjacent
/// centers are collapsed and the indices remapped).
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedTensor {
    pub meta: TensorMeta,
    pub scheme: GroupingScheme,
    pub k: usize,
    pub codebooks: Vec<Vec<f32>>,
    pub indices: Vec<u32>,
}

impl QuantizedTensor {
    pub fn element_count(&self) -> usize {
        self.indices.len()
    }

    /// Structural sanity check: group sizes cover the shape, codebooks are
    /// non-empty, strictly ascending and no longer than `k`, and every
    /// index addresses an existing codebook entry.
    pub fn validate(&self) -> Result<(), QuantError> {
        if self.scheme.total_elements() != self.meta.element_count()
            || self.indices.len() != self.meta.element_count()
            || self.codebooks.len() != self.scheme.group_count()
        {
            return Err(QuantError::StructureMismatch(format!(
                "tensor {}: scheme/codebook/index sizes disagree",
                self.meta.name
            )));
        }
        for (group, range) in self.scheme.group_ranges().enumerate() {
            let codebook = &self.codebooks[group];
            if codebook.is_empty()
                || codebook.len() > self.k
                || codebook.windows(2).any(|w| w[0] >= w[1])
            {
                return Err(QuantError::StructureMismatch(format!(
                    "tensor {}: group {group} codebook is not strictly ascending (len {})",
                    self.meta.name,
                    codebook.len()
                )));
            }
            if self.indices[range].iter().any(|&i| i as usize >= codebook.len()) {
                return Err(QuantError::StructureMismatch(format!(
                    "tensor {}: group {group} has an out-of-range index",
                    self.meta.name
                )));
            }
        }
        Ok(())
    }
}

fn quantize_group(group: &[f32], k: usize) -> Result<(Vec<f32>, Vec<u32>), QuantError> {
    let wide: Vec<f64> = group.iter().map(|&v| v as f64).collect();
    let sorted = SortedWeights::new(&wide)?;
    let effective_k = k.min(group.len());
    let solution = dp_cluster(&sorted, effective_k)?;

    // Emit the codebook as f32 and collapse identical adjacent entries
    // (duplicate centers arise when k exceeds the number of distinct
    // values); indices are remapped onto the collapsed codebook.
    let mut codebook: Vec<f32> = Vec::with_capacity(effective_k);
    let mut remap = vec![0u32; effective_k];
    for (cluster, &center) in solution.centers.iter().enumerate() {
        let center = center as f32;
        if codebook.last() != Some(&center) {
            codebook.push(center);
        }
        remap[cluster] = (codebook.len() - 1) as u32;
    }
    let input_order = sorted.to_input_order(&solution.assignment);
    let indices = input_order.iter().map(|&c| remap[c]).collect();
    Ok((codebook, indices))
}

/// Quantize a tensor group by group with the optimal 1-D clustering.
///
/// Groups are processed in parallel; the result is deterministic regardless
/// of the thread count.
pub fn quantize_tensor(
    meta: &TensorMeta,
    tensor: &Tensor,
    mode: GroupingMode,
    k: usize,
) -> Result<QuantizedTensor, QuantError> {
    if k == 0 {
        return Err(QuantError::InvalidK { k, min: 1 });
    }
    if meta.shape != tensor.shape {
        return Err(QuantError::StructureMismatch(format!(
            "tensor {}: meta shape {:?} != data shape {:?}",
            meta.name, meta.shape, tensor.shape
        )));
    }
    let scheme = GroupingScheme::for_shape(&tensor.shape, mode)?;
    let groups: Vec<&[f32]> = scheme.group_ranges().map(|r| &tensor.data[r]).collect();
    let quantized: Vec<(Vec<f32>, Vec<u32>)> = groups
        .par_iter()
        .map(|group| quantize_group(group, k))
        .collect::<Result<_, _>>()?;

    let mut codebooks = Vec::with_capacity(quantized.len());
    let mut indices = Vec::with_capacity(tensor.element_count());
    for (codebook, group_indices) in quantized {
        codebooks.push(codebook);
        indices.extend_from_slice(&group_indices);
    }
    Ok(QuantizedTensor { meta: meta.clone(), scheme, k, codebooks, indices })
}

/// Reconstruct the dense tensor a [`QuantizedTensor`] encodes.
pub fn dequantize_tensor(qt: &QuantizedTensor) -> Result<Tensor, QuantError> {
    qt.validate()?;
    let mut data = Vec::with_capacity(qt.element_count());
    for (group, range) in qt.scheme.group_ranges().enumerate() {
        let codebook = &qt.codebooks[group];
        data.extend(qt.indices[range].iter().map(|&i| codebook[i as usize]));
    }
    Tensor::new(qt.meta.shape.clone(), data)
}

/// Total squared distance of every tensor element to the nearest codebook
/// entry of its group — the quantization penalty a codebook incurs on a
/// tensor. Zero exactly when every element sits on a codebook entry.
pub fn quantization_error(
    tensor: &Tensor,
    scheme: &GroupingScheme,
    codebooks: &[Vec<f32>],
) -> Result<f64, QuantError> {
    if scheme.total_elements() != tensor.element_count()
        || codebooks.len() != scheme.group_count()
    {
        return Err(QuantError::StructureMismatch(format!(
            "quantization_error: scheme covers {} elements in {} groups; tensor has {} elements and {} codebooks were given",
            scheme.total_elements(),
            scheme.group_count(),
            tensor.element_count(),
            codebooks.len()
        )));
    }
    let mut total = 0.0f64;
    for (group, range) in scheme.group_ranges().enumerate() {
        let centers: Vec<f64> = codebooks[group].iter().map(|&c| c as f64).collect();
        let values: Vec<f64> = tensor.data[range].iter().map(|&v| v as f64).collect();
        let nearest = assign(&values, &centers)?;
        for (&v, &c) in values.iter().zip(&nearest) {
            let d = v - centers[c];
            total += d * d;
        }
    }
    Ok(total)
}

/// Group and element counts of one quantized layer, the quantities the
/// compression-ratio formula needs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerCounts {
    pub groups: usize,
    pub elements: usize,
}

impl From<&QuantizedTensor> for LayerCounts {
    fn from(qt: &QuantizedTensor) -> Self {
        Self { groups: qt.scheme.group_count(), elements: qt.element_count() }
    }
}

/// Bits needed to index one of `k` codebook entries: `ceil(log2 k)`.
pub fn index_bit_width(k: usize) -> u32 {
    match k {
        0 | 1 => 0,
        _ => (k - 1).ilog2() + 1,
    }
}

/// Compression ratio of storing every element as a `ceil(log2 k)`-bit
/// codebook index plus `k` 32-bit centers per group, relative to plain
/// 32-bit floats:
///
/// `r = 32 * N / (ceil(log2 k) * N + 32 * m * k)`
///
/// with `N` the total element count and `m` the total group count over all
/// layers. Needs `k >= 2` (a zero-bit index is meaningless).
pub fn compression_ratio(layers: &[LayerCounts], k: usize) -> Result<f64, QuantError> {
    if k < 2 {
        return Err(QuantError::InvalidK { k, min: 2 });
    }
    if layers.is_empty() || layers.iter().any(|l| l.groups == 0 || l.elements == 0) {
        return Err(QuantError::StructureMismatch(
            "compression_ratio: layer counts must be positive".into(),
        ));
    }
    let elements: usize = layers.iter().map(|l| l.elements).sum();
    let groups: usize = layers.iter().map(|l| l.groups).sum();
    let bits = index_bit_width(k) as f64;
    let numerator = 32.0 * elements as f64;
    let denominator = bits * elements as f64 + 32.0 * (groups * k) as f64;
    Ok(numerator / denominator)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kmeans1d::brute_force_cluster;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rel_close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * a.abs().max(b.abs()) + 1e-12
    }

    fn random_tensor(rng: &mut ChaCha8Rng, shape: Vec<usize>) -> Tensor {
        let len = shape.iter().product();
        let data = (0..len).map(|_| rng.random_range(-1.0f32..1.0)).collect();
        Tensor::new(shape, data).unwrap()
    }

    #[test]
    fn partition_per_row() {
        let t = Tensor::new(vec![3, 5], (0..15).map(|i| i as f32).collect()).unwrap();
        let groups = partition_tensor(&t, GroupingMode::PerRow).unwrap();
        assert_eq!(groups.len(), 3);
        assert!(groups.iter().all(|g| g.len() == 5));
        assert_eq!(groups[1], &[5.0, 6.0, 7.0, 8.0, 9.0]);
    }

    #[test]
    fn partition_per_filter() {
        let t = Tensor::new(vec![4, 3, 2, 2], vec![0.5; 48]).unwrap();
        let groups = partition_tensor(&t, GroupingMode::PerFilter).unwrap();
        assert_eq!(groups.len(), 4);
        assert!(groups.iter().all(|g| g.len() == 12));
    }

    #[test]
    fn partition_whole_tensor() {
        let t = Tensor::new(vec![2, 3, 4], vec![1.0; 24]).unwrap();
        let groups = partition_tensor(&t, GroupingMode::WholeTensor).unwrap();
        assert_eq!(groups.len(), 1);
        assert_eq!(groups[0].len(), 24);
    }

    #[test]
    fn partition_rejects_incompatible_rank() {
        let t = Tensor::new(vec![2, 3, 4], vec![1.0; 24]).unwrap();
        assert!(matches!(
            partition_tensor(&t, GroupingMode::PerRow),
            Err(QuantError::ModeIncompatible { expected: 2, rank: 3, .. })
        ));
        let t2 = Tensor::new(vec![6], vec![1.0; 6]).unwrap();
        assert!(matches!(
            partition_tensor(&t2, GroupingMode::PerFilter),
            Err(QuantError::ModeIncompatible { expected: 4, rank: 1, .. })
        ));
    }

    #[test]
    fn quantize_two_row_example() {
        let t = Tensor::new(
            vec![2, 4],
            vec![1.0, 2.0, 3.0, 4.0, 10.0, 20.0, 30.0, 40.0],
        )
        .unwrap();
        let meta = TensorMeta::new("fc", vec![2, 4]);
        let qt = quantize_tensor(&meta, &t, GroupingMode::PerRow, 2).unwrap();
        assert_eq!(qt.codebooks, vec![vec![1.5, 3.5], vec![15.0, 35.0]]);
        assert_eq!(qt.indices, vec![0, 0, 1, 1, 0, 0, 1, 1]);

        let dense = dequantize_tensor(&qt).unwrap();
        assert_eq!(
            dense.data,
            vec![1.5, 1.5, 3.5, 3.5, 15.0, 15.0, 35.0, 35.0]
        );
    }

    #[test]
    fn quantize_constant_tensor_single_center() {
        let t = Tensor::new(vec![3, 3], vec![0.75; 9]).unwrap();
        let meta = TensorMeta::new("c", vec![3, 3]);
        for mode in [GroupingMode::PerRow, GroupingMode::WholeTensor] {
            let qt = quantize_tensor(&meta, &t, mode, 1).unwrap();
            assert!(qt.codebooks.iter().all(|cb| cb == &vec![0.75]));
            assert_eq!(dequantize_tensor(&qt).unwrap(), t);
        }
    }

    #[test]
    fn quantize_k_equals_group_size_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t = random_tensor(&mut rng, vec![4, 6]);
        let meta = TensorMeta::new("w", vec![4, 6]);
        let qt = quantize_tensor(&meta, &t, GroupingMode::PerRow, 6).unwrap();
        assert_eq!(dequantize_tensor(&qt).unwrap(), t);
    }

    #[test]
    fn quantize_dequantize_quantize_is_a_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let t = random_tensor(&mut rng, vec![5, 9]);
        let meta = TensorMeta::new("w", vec![5, 9]);
        let qt = quantize_tensor(&meta, &t, GroupingMode::PerRow, 3).unwrap();
        let dense = dequantize_tensor(&qt).unwrap();
        let qt2 = quantize_tensor(&meta, &dense, GroupingMode::PerRow, 3).unwrap();
        assert_eq!(qt, qt2);
        assert_eq!(dequantize_tensor(&qt2).unwrap(), dense);
        assert_eq!(quantization_error(&dense, &qt.scheme, &qt.codebooks).unwrap(), 0.0);
    }

    #[test]
    fn quantize_collapses_duplicate_centers() {
        // 2 distinct values per row but k=3: codebooks shrink, indices stay valid.
        let t = Tensor::new(vec![2, 4], vec![0.0, 0.0, 1.0, 1.0, 5.0, 5.0, 5.0, 5.0]).unwrap();
        let meta = TensorMeta::new("w", vec![2, 4]);
        let qt = quantize_tensor(&meta, &t, GroupingMode::PerRow, 3).unwrap();
        assert_eq!(qt.codebooks[0], vec![0.0, 1.0]);
        assert_eq!(qt.codebooks[1], vec![5.0]);
        qt.validate().unwrap();
        assert_eq!(dequantize_tensor(&qt).unwrap(), t);
    }

    #[test]
    fn per_group_losses_match_the_exhaustive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let t = random_tensor(&mut rng, vec![6, 10]);
        let meta = TensorMeta::new("w", vec![6, 10]);
        let qt = quantize_tensor(&meta, &t, GroupingMode::PerRow, 3).unwrap();
        for (row, range) in qt.scheme.group_ranges().enumerate() {
            let group: Vec<f64> = t.data[range.clone()].iter().map(|&v| v as f64).collect();
            let oracle = brute_force_cluster(&group, 3).unwrap();
            let row_tensor = Tensor::new(vec![1, 10], t.data[range].to_vec()).unwrap();
            let row_scheme = GroupingScheme::for_shape(&[1, 10], GroupingMode::PerRow).unwrap();
            let err = quantization_error(
                &row_tensor,
                &row_scheme,
                std::slice::from_ref(&qt.codebooks[row]),
            )
            .unwrap();
            assert!(rel_close(err, oracle.loss, 1e-9), "row={row} {err} vs {}", oracle.loss);
        }
    }

    #[test]
    fn quantization_error_examples() {
        let row = Tensor::new(vec![1, 4], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let scheme = GroupingScheme::for_shape(&[1, 4], GroupingMode::PerRow).unwrap();
        let err = quantization_error(&row, &scheme, &[vec![1.5, 3.5]]).unwrap();
        assert_eq!(err, 1.0);

        let single = Tensor::new(vec![1], vec![0.0]).unwrap();
        let whole = GroupingScheme::for_shape(&[1], GroupingMode::WholeTensor).unwrap();
        assert_eq!(quantization_error(&single, &whole, &[vec![3.0]]).unwrap(), 9.0);
    }

    #[test]
    fn quantization_error_rejects_structure_mismatch() {
        let row = Tensor::new(vec![1, 4], vec![1.0; 4]).unwrap();
        let scheme = GroupingScheme::for_shape(&[2, 4], GroupingMode::PerRow).unwrap();
        assert!(matches!(
            quantization_error(&row, &scheme, &[vec![1.0], vec![1.0]]),
            Err(QuantError::StructureMismatch(_))
        ));
    }

    #[test]
    fn quantization_error_equals_total_dp_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for trial in 0..20 {
            let rows = rng.random_range(1..=6);
            let cols = rng.random_range(2..=30);
            let t = random_tensor(&mut rng, vec![rows, cols]);
            let meta = TensorMeta::new("w", vec![rows, cols]);
            let k = rng.random_range(1..=4);
            let qt = quantize_tensor(&meta, &t, GroupingMode::PerRow, k).unwrap();
            let mut dp_total = 0.0;
            for range in qt.scheme.group_ranges() {
                let group: Vec<f64> = t.data[range].iter().map(|&v| v as f64).collect();
                let w = SortedWeights::new(&group).unwrap();
                dp_total += dp_cluster(&w, k.min(cols)).unwrap().loss;
            }
            let err = quantization_error(&t, &qt.scheme, &qt.codebooks).unwrap();
            assert!(rel_close(err, dp_total, 1e-9), "trial={trial} {err} vs {dp_total}");
        }
    }

    #[test]
    fn fine_grained_never_loses_to_whole_tensor() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            let rows = rng.random_range(2..=5);
            let cols = rng.random_range(4..=20);
            let t = random_tensor(&mut rng, vec![rows, cols]);
            let meta = TensorMeta::new("w", vec![rows, cols]);
            let k = rng.random_range(2..=4);
            let per_row = quantize_tensor(&meta, &t, GroupingMode::PerRow, k).unwrap();
            let whole = quantize_tensor(&meta, &t, GroupingMode::WholeTensor, k).unwrap();
            let per_row_err = quantization_error(&t, &per_row.scheme, &per_row.codebooks).unwrap();
            let whole_err = quantization_error(&t, &whole.scheme, &whole.codebooks).unwrap();
            assert!(per_row_err <= whole_err + 1e-9 * (1.0 + whole_err));
        }
    }

    #[test]
    fn index_bit_widths() {
        assert_eq!(index_bit_width(1), 0);
        assert_eq!(index_bit_width(2), 1);
        assert_eq!(index_bit_width(3), 2);
        assert_eq!(index_bit_width(4), 2);
        assert_eq!(index_bit_width(8), 3);
        assert_eq!(index_bit_width(9), 4);
        assert_eq!(index_bit_width(16), 4);
        assert_eq!(index_bit_width(256), 8);
    }

    #[test]
    fn compression_ratio_nine_weight_example() {
        // One group of 9 weights at k=2: 32*9 / (1*9 + 32*1*2) = 288/73.
        let layers = [LayerCounts { groups: 1, elements: 9 }];
        let r = compression_ratio(&layers, 2).unwrap();
        assert!((r - 288.0 / 73.0).abs() < 1e-12);
    }

    #[test]
    fn compression_ratio_monotonics() {
        let layers = [LayerCounts { groups: 10, elements: 100_000 }];
        let mut previous = f64::INFINITY;
        for k in [2usize, 4, 8, 16, 32] {
            let r = compression_ratio(&layers, k).unwrap();
            assert!(r < previous);
            previous = r;
        }
        // Growing element count approaches the 32/ceil(log2 k) asymptote.
        let mut last = 0.0;
        for elements in [1_000usize, 100_000, 10_000_000] {
            let r = compression_ratio(&[LayerCounts { groups: 1, elements }], 8).unwrap();
            assert!(r > last);
            last = r;
        }
        assert!((last - 32.0 / 3.0).abs() < 0.01);
    }

    #[test]
    fn compression_ratio_rejects_k_below_two() {
        let layers = [LayerCounts { groups: 1, elements: 10 }];
        assert_eq!(
            compression_ratio(&layers, 1).unwrap_err(),
            QuantError::InvalidK { k: 1, min: 2 }
        );
    }

    #[test]
    fn tensor_validation() {
        assert!(matches!(
            Tensor::new(vec![2, 3], vec![0.0; 5]),
            Err(QuantError::ShapeMismatch { .. })
        ));
        assert!(matches!(
            Tensor::new(vec![0], vec![]),
            Err(QuantError::InvalidShape { .. })
        ));
        assert!(matches!(
            Tensor::new(vec![2], vec![1.0, f32::NAN]),
            Err(QuantError::NonFinite { index: 1 })
        ));
    }
}
