//! Exact one-dimensional k-means.
//!
//! For scalars `x_1 <= ... <= x_n` an optimal k-means clustering assigns
//! contiguous runs of the sorted values to clusters, so the global optimum
//! can be found by dynamic programming over segment boundaries in
//! `O(n^2 k)` time. [`dp_cluster`] implements that recurrence;
//! [`brute_force_cluster`] and [`brute_force_all_assignments`] are the
//! exhaustive oracles used to verify it, and [`lloyd_cluster`] is the
//! heuristic baseline it provably dominates.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Largest input accepted by [`brute_force_cluster`].
pub const BRUTE_FORCE_CAP: usize = 12;
/// Largest input accepted by [`brute_force_all_assignments`].
pub const ALL_ASSIGNMENTS_CAP: usize = 8;

#[derive(Debug, Error, PartialEq)]
pub enum ClusterError {
    #[error("input is empty")]
    EmptyInput,
    #[error("k must be at least 1")]
    ZeroClusters,
    #[error("more clusters than points: k={k}, n={n}")]
    MoreClustersThanPoints { k: usize, n: usize },
    #[error("segment [{l}, {q}] out of range for {n} values")]
    SegmentOutOfRange { l: usize, q: usize, n: usize },
    #[error("non-finite value at position {index}")]
    NonFinite { index: usize },
    #[error("values must be sorted ascending")]
    NotSorted,
    #[error("centers must be non-empty, finite and ascending")]
    BadCenters,
    #[error("input too large for exhaustive search: n={n}, cap={cap}")]
    TooLarge { n: usize, cap: usize },
}

fn check_finite(values: &[f64]) -> Result<(), ClusterError> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(ClusterError::NonFinite { index }),
        None => Ok(()),
    }
}

/// A sorted multiset of scalar weights with prefix sums.
///
/// The prefix arrays make the cost of grouping any contiguous run of sorted
/// values into one cluster an O(1) lookup (see [`SortedWeights::segment_cost`]),
/// which is what keeps the DP at `O(n^2 k)`. The original positions of the
/// values are retained so cluster assignments can be reported in input order.
#[derive(Debug, Clone, PartialEq)]
pub struct SortedWeights {
    values: Vec<f64>,
    prefix_sum: Vec<f64>,
    prefix_sq_sum: Vec<f64>,
    order: Vec<usize>,
}

impl SortedWeights {
    /// Sort `values` (stably) and build the prefix arrays.
    ///
    /// Accumulation is always done in f64, even when the weights originate
    /// from an f32 tensor.
    pub fn new(values: &[f64]) -> Result<Self, ClusterError> {
        if values.is_empty() {
            return Err(ClusterError::EmptyInput);
        }
        check_finite(values)?;
        let mut order: Vec<usize> = (0..values.len()).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let sorted: Vec<f64> = order.iter().map(|&i| values[i]).collect();
        Ok(Self::build(sorted, order))
    }

    /// Wrap an already-sorted array (ascending). Fails on unsorted input.
    pub fn from_sorted(values: Vec<f64>) -> Result<Self, ClusterError> {
        if values.is_empty() {
            return Err(ClusterError::EmptyInput);
        }
        check_finite(&values)?;
        if values.windows(2).any(|w| w[0] > w[1]) {
            return Err(ClusterError::NotSorted);
        }
        let order = (0..values.len()).collect();
        Ok(Self::build(values, order))
    }

    fn build(values: Vec<f64>, order: Vec<usize>) -> Self {
        let mut prefix_sum = Vec::with_capacity(values.len());
        let mut prefix_sq_sum = Vec::with_capacity(values.len());
        let mut sum = 0.0f64;
        let mut sq_sum = 0.0f64;
        for &v in &values {
            sum += v;
            sq_sum += v * v;
            prefix_sum.push(sum);
            prefix_sq_sum.push(sq_sum);
        }
        Self { values, prefix_sum, prefix_sq_sum, order }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// The sorted values.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `original_positions()[i]` is where the i-th smallest value sat in the
    /// input passed to [`SortedWeights::new`].
    pub fn original_positions(&self) -> &[usize] {
        &self.order
    }

    fn sum_range(&self, l: usize, q: usize) -> f64 {
        let lead = if l > 0 { self.prefix_sum[l - 1] } else { 0.0 };
        self.prefix_sum[q] - lead
    }

    fn sq_sum_range(&self, l: usize, q: usize) -> f64 {
        let lead = if l > 0 { self.prefix_sq_sum[l - 1] } else { 0.0 };
        self.prefix_sq_sum[q] - lead
    }

    #[inline]
    fn cost(&self, l: usize, q: usize) -> f64 {
        debug_assert!(l <= q && q < self.len());
        if l == q {
            return 0.0;
        }
        let count = (q - l + 1) as f64;
        let s = self.sum_range(l, q);
        let cost = self.sq_sum_range(l, q) - s * s / count;
        // The difference form cancels catastrophically; tiny negative
        // round-off is clamped.
        cost.max(0.0)
    }

    /// Minimum loss of grouping the sorted values `l..=q` into one cluster:
    /// `sum(x_i^2) - sum(x_i)^2 / (q - l + 1)`, evaluated in O(1) from the
    /// prefix arrays. Always >= 0.
    pub fn segment_cost(&self, l: usize, q: usize) -> Result<f64, ClusterError> {
        if l > q || q >= self.len() {
            return Err(ClusterError::SegmentOutOfRange { l, q, n: self.len() });
        }
        Ok(self.cost(l, q))
    }

    /// Mean of the sorted values `l..=q`.
    ///
    /// Summed directly over the segment (not from the prefix arrays, whose
    /// cancellation error could push the result outside the segment) and
    /// clamped into `[values[l], values[q]]` where the exact mean lies.
    pub fn segment_mean(&self, l: usize, q: usize) -> f64 {
        let sum: f64 = self.values[l..=q].iter().sum();
        (sum / (q - l + 1) as f64).clamp(self.values[l], self.values[q])
    }

    /// Re-order a sorted-domain assignment back to the input order of the
    /// values passed to [`SortedWeights::new`].
    pub fn to_input_order(&self, assignment: &[usize]) -> Vec<usize> {
        assert_eq!(assignment.len(), self.len());
        let mut out = vec![0usize; self.len()];
        for (sorted_pos, &original_pos) in self.order.iter().enumerate() {
            out[original_pos] = assignment[sorted_pos];
        }
        out
    }
}

/// A k-means clustering of scalars.
///
/// `centers` are ascending (duplicates can appear when `k` exceeds the
/// number of distinct values), each center is the mean of its assigned
/// elements, and `loss` is the total squared distance of every value to its
/// center.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusteringSolution {
    pub centers: Vec<f64>,
    pub assignment: Vec<usize>,
    pub loss: f64,
}

/// Work counters for one [`dp_cluster`] run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DpStats {
    /// Inner relaxations performed; bounded by `n^2 * k`.
    pub relaxations: u64,
}

/// Globally optimal k-means of sorted scalars, with work counters.
///
/// See [`dp_cluster`].
pub fn dp_cluster_with_stats(
    w: &SortedWeights,
    k: usize,
) -> Result<(ClusteringSolution, DpStats), ClusterError> {
    let n = w.len();
    if k == 0 {
        return Err(ClusterError::ZeroClusters);
    }
    if k > n {
        return Err(ClusterError::MoreClustersThanPoints { k, n });
    }

    // g[i][c] = minimum loss of clustering the first i values into c
    // clusters; start[i][c] = start index of the last segment in that
    // optimum. Ties in the minimization are broken toward the smallest
    // split index so backtracking is deterministic.
    let cols = k + 1;
    let mut g = vec![f64::INFINITY; (n + 1) * cols];
    let mut start = vec![0usize; (n + 1) * cols];
    g[0] = 0.0;
    let mut relaxations = 0u64;
    for c in 1..=k {
        for i in c..=n {
            let mut best = f64::INFINITY;
            let mut best_j = c - 1;
            for j in (c - 1)..i {
                relaxations += 1;
                let candidate = g[j * cols + c - 1] + w.cost(j, i - 1);
                if candidate < best {
                    best = candidate;
                    best_j = j;
                }
            }
            g[i * cols + c] = best;
            start[i * cols + c] = best_j;
        }
    }

    let mut centers = vec![0.0f64; k];
    let mut assignment = vec![0usize; n];
    let mut end = n;
    for cluster in (0..k).rev() {
        let seg_start = start[end * cols + cluster + 1];
        centers[cluster] = w.segment_mean(seg_start, end - 1);
        for slot in &mut assignment[seg_start..end] {
            *slot = cluster;
        }
        end = seg_start;
    }
    debug_assert_eq!(end, 0);

    let solution = ClusteringSolution { centers, assignment, loss: g[n * cols + k] };
    Ok((solution, DpStats { relaxations }))
}

/// Globally optimal k-means of sorted scalars by dynamic programming.
///
/// Runs in `O(n^2 k)` time and `O(n k)` space. The returned assignment is in
/// the sorted domain (non-decreasing); use
/// [`SortedWeights::to_input_order`] to map it back to input positions.
pub fn dp_cluster(w: &SortedWeights, k: usize) -> Result<ClusteringSolution, ClusterError> {
    dp_cluster_with_stats(w, k).map(|(solution, _)| solution)
}

fn for_each_partition(n: usize, k: usize, f: &mut impl FnMut(&[usize])) {
    // Enumerates all k-tuples of segment start indices
    // 0 = s_0 < s_1 < ... < s_{k-1} <= n-1.
    fn go(splits: &mut Vec<usize>, from: usize, n: usize, k: usize, f: &mut impl FnMut(&[usize])) {
        if splits.len() == k {
            f(splits);
            return;
        }
        let remaining = k - splits.len();
        for s in from..=(n - remaining) {
            splits.push(s);
            go(splits, s + 1, n, k, f);
            splits.pop();
        }
    }
    let mut splits = vec![0usize];
    go(&mut splits, 1, n, k, f);
}

/// Exhaustive minimum over all contiguous partitions of the sorted values
/// into `k` segments. This is the oracle [`dp_cluster`] is tested against;
/// capped at [`BRUTE_FORCE_CAP`] values. The assignment is reported in
/// input order.
pub fn brute_force_cluster(values: &[f64], k: usize) -> Result<ClusteringSolution, ClusterError> {
    let n = values.len();
    if n > BRUTE_FORCE_CAP {
        return Err(ClusterError::TooLarge { n, cap: BRUTE_FORCE_CAP });
    }
    let w = SortedWeights::new(values)?;
    if k == 0 {
        return Err(ClusterError::ZeroClusters);
    }
    if k > n {
        return Err(ClusterError::MoreClustersThanPoints { k, n });
    }

    let mut best_loss = f64::INFINITY;
    let mut best_splits: Vec<usize> = Vec::new();
    for_each_partition(n, k, &mut |splits| {
        let mut loss = 0.0;
        for (seg, &start) in splits.iter().enumerate() {
            let end = if seg + 1 < splits.len() { splits[seg + 1] } else { n };
            loss += w.cost(start, end - 1);
        }
        if loss < best_loss {
            best_loss = loss;
            best_splits = splits.to_vec();
        }
    });

    let mut centers = Vec::with_capacity(k);
    let mut assignment = vec![0usize; n];
    for (seg, &start) in best_splits.iter().enumerate() {
        let end = if seg + 1 < best_splits.len() { best_splits[seg + 1] } else { n };
        centers.push(w.segment_mean(start, end - 1));
        for slot in &mut assignment[start..end] {
            *slot = seg;
        }
    }
    Ok(ClusteringSolution {
        centers,
        assignment: w.to_input_order(&assignment),
        loss: best_loss,
    })
}

/// Exhaustive minimum over ALL `k^n` assignments (clusters need not be
/// contiguous runs). Exponentially slower than [`brute_force_cluster`] and
/// capped at [`ALL_ASSIGNMENTS_CAP`] values; comparing the two minima on
/// small instances validates that restricting the search to contiguous
/// partitions loses nothing.
pub fn brute_force_all_assignments(
    values: &[f64],
    k: usize,
) -> Result<ClusteringSolution, ClusterError> {
    let n = values.len();
    if n > ALL_ASSIGNMENTS_CAP {
        return Err(ClusterError::TooLarge { n, cap: ALL_ASSIGNMENTS_CAP });
    }
    if values.is_empty() {
        return Err(ClusterError::EmptyInput);
    }
    check_finite(values)?;
    if k == 0 {
        return Err(ClusterError::ZeroClusters);
    }
    if k > n {
        return Err(ClusterError::MoreClustersThanPoints { k, n });
    }

    let mut assignment = vec![0usize; n];
    let mut best_loss = f64::INFINITY;
    let mut best_assignment = assignment.clone();
    let mut counts = vec![0usize; k];
    let mut sums = vec![0.0f64; k];
    let mut sq_sums = vec![0.0f64; k];
    loop {
        counts.fill(0);
        sums.fill(0.0);
        sq_sums.fill(0.0);
        for (i, &c) in assignment.iter().enumerate() {
            counts[c] += 1;
            sums[c] += values[i];
            sq_sums[c] += values[i] * values[i];
        }
        let mut loss = 0.0;
        for c in 0..k {
            if counts[c] > 0 {
                loss += (sq_sums[c] - sums[c] * sums[c] / counts[c] as f64).max(0.0);
            }
        }
        if loss < best_loss {
            best_loss = loss;
            best_assignment.copy_from_slice(&assignment);
        }

        // Next assignment in base-k odometer order.
        let mut pos = 0;
        loop {
            if pos == n {
                // Done: rebuild the best solution with clusters ordered by center.
                counts.fill(0);
                sums.fill(0.0);
                for (i, &c) in best_assignment.iter().enumerate() {
                    counts[c] += 1;
                    sums[c] += values[i];
                }
                let mut used: Vec<usize> = (0..k).filter(|&c| counts[c] > 0).collect();
                used.sort_by(|&a, &b| {
                    (sums[a] / counts[a] as f64).total_cmp(&(sums[b] / counts[b] as f64))
                });
                let mut remap = vec![usize::MAX; k];
                let mut centers = Vec::with_capacity(used.len());
                for (new_idx, &c) in used.iter().enumerate() {
                    remap[c] = new_idx;
                    centers.push(sums[c] / counts[c] as f64);
                }
                let assignment =
                    best_assignment.iter().map(|&c| remap[c]).collect::<Vec<_>>();
                return Ok(ClusteringSolution { centers, assignment, loss: best_loss });
            }
            assignment[pos] += 1;
            if assignment[pos] < k {
                break;
            }
            assignment[pos] = 0;
            pos += 1;
        }
    }
}

/// Center initialization for [`lloyd_cluster`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LloydInit {
    /// Seed centers with the classic distance-squared-weighted sampling.
    KMeansPlusPlus,
    /// Deterministic centers at evenly spaced quantiles of the sorted data.
    UniformQuantile,
}

#[derive(Debug, Clone)]
pub struct LloydConfig {
    pub init: LloydInit,
    pub restarts: usize,
    pub max_iters: usize,
    pub seed: u64,
}

impl Default for LloydConfig {
    fn default() -> Self {
        Self { init: LloydInit::KMeansPlusPlus, restarts: 10, max_iters: 100, seed: 0 }
    }
}

fn kmeanspp_init(values: &[f64], k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = values.len();
    let mut centers = Vec::with_capacity(k);
    centers.push(values[rng.random_range(0..n)]);
    let mut d2: Vec<f64> = values.iter().map(|&v| (v - centers[0]).powi(2)).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let r = rng.random_range(0.0..total);
            let mut acc = 0.0;
            let mut pick = n - 1;
            for (i, &weight) in d2.iter().enumerate() {
                acc += weight;
                if r < acc {
                    pick = i;
                    break;
                }
            }
            values[pick]
        } else {
            // All points coincide with a center already; any point works.
            values[rng.random_range(0..n)]
        };
        centers.push(next);
        for (i, &v) in values.iter().enumerate() {
            d2[i] = d2[i].min((v - next).powi(2));
        }
    }
    centers
}

fn quantile_init(sorted: &[f64], k: usize) -> Vec<f64> {
    let n = sorted.len();
    (0..k)
        .map(|j| {
            let idx = ((j as f64 + 0.5) * n as f64 / k as f64) as usize;
            sorted[idx.min(n - 1)]
        })
        .collect()
}

/// One Lloyd run from the given initial centers; returns a solution whose
/// centers are the means of its reported assignment.
fn lloyd_run(
    values: &[f64],
    mut centers: Vec<f64>,
    max_iters: usize,
) -> Result<ClusteringSolution, ClusterError> {
    centers.sort_by(f64::total_cmp);
    let k = centers.len();
    let mut assignment = assign(values, &centers)?;
    let mut counts = vec![0usize; k];
    let mut sums = vec![0.0f64; k];
    for _ in 0..max_iters {
        counts.fill(0);
        sums.fill(0.0);
        for (i, &c) in assignment.iter().enumerate() {
            counts[c] += 1;
            sums[c] += values[i];
        }
        let mut new_centers = centers.clone();
        for c in 0..k {
            if counts[c] > 0 {
                new_centers[c] = sums[c] / counts[c] as f64;
            }
        }
        // An empty cluster is re-seeded at the point farthest from its
        // current center (lowest index on ties), one cluster at a time.
        let mut taken: Vec<usize> = Vec::new();
        for c in 0..k {
            if counts[c] == 0 {
                let mut far_idx = usize::MAX;
                let mut far_d = -1.0;
                for (i, &v) in values.iter().enumerate() {
                    if taken.contains(&i) {
                        continue;
                    }
                    let d = (v - centers[assignment[i]]).abs();
                    if d > far_d {
                        far_d = d;
                        far_idx = i;
                    }
                }
                if far_idx != usize::MAX {
                    new_centers[c] = values[far_idx];
                    taken.push(far_idx);
                }
            }
        }
        new_centers.sort_by(f64::total_cmp);
        let new_assignment = assign(values, &new_centers)?;
        let converged = new_assignment == assignment && new_centers == centers;
        centers = new_centers;
        assignment = new_assignment;
        if converged {
            break;
        }
    }
    // Make the reported centers the means of the reported assignment (the
    // iteration above may have been cut off mid-step).
    counts.fill(0);
    sums.fill(0.0);
    for (i, &c) in assignment.iter().enumerate() {
        counts[c] += 1;
        sums[c] += values[i];
    }
    for c in 0..k {
        if counts[c] > 0 {
            centers[c] = sums[c] / counts[c] as f64;
        }
    }
    let loss = assignment
        .iter()
        .enumerate()
        .map(|(i, &c)| (values[i] - centers[c]).powi(2))
        .sum();
    Ok(ClusteringSolution { centers, assignment, loss })
}

/// Heuristic k-means by Lloyd iteration, best of `cfg.restarts` seeded
/// initializations. Deterministic given `cfg.seed`. Converges to a local
/// fixed point only; [`dp_cluster`] never does worse.
pub fn lloyd_cluster(
    values: &[f64],
    k: usize,
    cfg: &LloydConfig,
) -> Result<ClusteringSolution, ClusterError> {
    if values.is_empty() {
        return Err(ClusterError::EmptyInput);
    }
    check_finite(values)?;
    if k == 0 {
        return Err(ClusterError::ZeroClusters);
    }
    if k > values.len() {
        return Err(ClusterError::MoreClustersThanPoints { k, n: values.len() });
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<ClusteringSolution> = None;
    for _ in 0..cfg.restarts.max(1) {
        let initial = match cfg.init {
            LloydInit::KMeansPlusPlus => kmeanspp_init(values, k, &mut rng),
            LloydInit::UniformQuantile => quantile_init(&sorted, k),
        };
        let solution = lloyd_run(values, initial, cfg.max_iters)?;
        if best.as_ref().is_none_or(|b| solution.loss < b.loss) {
            best = Some(solution);
        }
    }
    Ok(best.expect("at least one restart"))
}

pub(crate) fn nearest_center(v: f64, centers: &[f64]) -> usize {
    let pos = centers.partition_point(|&c| c < v);
    let best = if pos == 0 {
        0
    } else if pos == centers.len() {
        centers.len() - 1
    } else {
        // Exact midpoint ties go to the lower-index center.
        if v - centers[pos - 1] <= centers[pos] - v {
            pos - 1
        } else {
            pos
        }
    };
    // With duplicate center values the lowest index of the winning value wins.
    centers.partition_point(|&c| c < centers[best])
}

/// Map each value to its nearest center (centers must be ascending).
///
/// Exact midpoint ties resolve to the lower-index center; on sorted input
/// the output is non-decreasing.
pub fn assign(values: &[f64], centers: &[f64]) -> Result<Vec<usize>, ClusterError> {
    if centers.is_empty()
        || centers.iter().any(|c| !c.is_finite())
        || centers.windows(2).any(|w| w[0] > w[1])
    {
        return Err(ClusterError::BadCenters);
    }
    values
        .iter()
        .enumerate()
        .map(|(index, &v)| {
            if !v.is_finite() {
                return Err(ClusterError::NonFinite { index });
            }
            Ok(nearest_center(v, centers))
        })
        .collect()
}
