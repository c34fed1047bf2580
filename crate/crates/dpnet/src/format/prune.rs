//! Structured magnitude pruning.
//!
//! Pruning zeroes whole columns of a rank-2 weight view (convolution
//! tensors are reshaped to `filters x rest` first), picking the columns
//! with the smallest L2 norm. Zeroed columns quantize essentially for free
//! afterwards, which is what makes the prune → quantize → entropy-code
//! pipeline compound.

use super::FormatError;
use crate::quant::Tensor;

/// Which columns survived pruning (`true` = kept).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PruneMask {
    pub kept: Vec<bool>,
}

impl PruneMask {
    pub fn pruned_count(&self) -> usize {
        self.kept.iter().filter(|&&k| !k).count()
    }
}

/// Zero the `floor(sparsity * columns)` columns with the smallest L2 norm.
///
/// Ties go to the lower column index. `sparsity` must lie in `[0, 1)`; the
/// input must be rank-2.
pub fn prune_columns(tensor: &Tensor, sparsity: f64) -> Result<(Tensor, PruneMask), FormatError> {
    if tensor.rank() != 2 {
        return Err(FormatError::PruneRank { rank: tensor.rank() });
    }
    if !(0.0..1.0).contains(&sparsity) {
        return Err(FormatError::InvalidSparsity { sparsity });
    }
    let rows = tensor.shape[0];
    let cols = tensor.shape[1];
    let mut norms = vec![0.0f64; cols];
    for r in 0..rows {
        for c in 0..cols {
            let v = tensor.data[r * cols + c] as f64;
            norms[c] += v * v;
        }
    }
    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by(|&a, &b| norms[a].total_cmp(&norms[b]).then(a.cmp(&b)));

    let prune_count = (sparsity * cols as f64).floor() as usize;
    let mut kept = vec![true; cols];
    for &c in order.iter().take(prune_count) {
        kept[c] = false;
    }
    let mut data = tensor.data.clone();
    for r in 0..rows {
        for c in 0..cols {
            if !kept[c] {
                data[r * cols + c] = 0.0;
            }
        }
    }
    Ok((Tensor::new(tensor.shape.clone(), data)?, PruneMask { kept }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prunes_smallest_norm_column() {
        let t = Tensor::new(vec![2, 2], vec![1.0, 5.0, 1.0, 5.0]).unwrap();
        let (pruned, mask) = prune_columns(&t, 0.5).unwrap();
        assert_eq!(pruned.data, vec![0.0, 5.0, 0.0, 5.0]);
        assert_eq!(mask.kept, vec![false, true]);
        assert_eq!(mask.pruned_count(), 1);
    }

    #[test]
    fn zero_sparsity_is_identity() {
        let t = Tensor::new(vec![2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let (pruned, mask) = prune_columns(&t, 0.0).unwrap();
        assert_eq!(pruned, t);
        assert!(mask.kept.iter().all(|&k| k));
    }

    #[test]
    fn equal_columns_prune_lowest_index_first() {
        let t = Tensor::new(vec![2, 4], vec![1.0; 8]).unwrap();
        let (_, mask) = prune_columns(&t, 0.5).unwrap();
        assert_eq!(mask.kept, vec![false, false, true, true]);
    }

    #[test]
    fn rejects_bad_inputs() {
        let t = Tensor::new(vec![2, 2], vec![1.0; 4]).unwrap();
        assert!(matches!(prune_columns(&t, 1.0), Err(FormatError::InvalidSparsity { .. })));
        assert!(matches!(prune_columns(&t, -0.1), Err(FormatError::InvalidSparsity { .. })));
        let t3 = Tensor::new(vec![2, 2, 2], vec![1.0; 8]).unwrap();
        assert!(matches!(prune_columns(&t3, 0.5), Err(FormatError::PruneRank { rank: 3 })));
    }

    #[test]
    fn conv_tensor_prunes_through_reshape() {
        let t = Tensor::new(vec![2, 2, 1, 2], vec![0.1, 9.0, 0.1, 9.0, 0.2, 9.0, 0.2, 9.0])
            .unwrap();
        let flat = t.reshaped(vec![2, 4]).unwrap();
        let (pruned, mask) = prune_columns(&flat, 0.5).unwrap();
        assert_eq!(mask.kept, vec![false, true, false, true]);
        let back = pruned.reshaped(t.shape.clone()).unwrap();
        assert_eq!(back.data, vec![0.0, 9.0, 0.0, 9.0, 0.0, 9.0, 0.0, 9.0]);
    }
}
