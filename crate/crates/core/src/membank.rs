// SPDX-License-Identifier: MIT OR Apache-2.0

//! Memory bank of reference representations.
//!
//! Holds the training representations (optionally compressed with greedy
//! k-Center), answers exact nearest-neighbor queries by linear scan, and
//! gates test-time insertions with a percentile novelty threshold.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::EmbeddingMatrix;

#[derive(Debug, Error, PartialEq)]
pub enum BankError {
    #[error("memory bank is empty")]
    EmptyBank,
    #[error("training embeddings are empty")]
    EmptyTraining,
    #[error("dimension mismatch: bank has d_model {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("coreset size must be at least 1")]
    ZeroCoresetSize,
    #[error("percentile {0} outside (0, 100]")]
    InvalidPercentile(f64),
    #[error("requested {requested} neighbors from a bank of {available}")]
    NotEnoughItems { requested: usize, available: usize },
    #[error("no training row has a neighbor other than itself")]
    NoNoveltyDistances,
    #[error("provenance/reference-time lengths do not match item count")]
    Inconsistent,
    #[error("index {index} out of range for a bank of {len}")]
    IndexOutOfRange { index: usize, len: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Train,
    Adapted,
}

/// Ordered set of stored representations.
///
/// Each item remembers the reference time it was embedded at, which is also
/// how training rows recognise themselves when fitting the novelty threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryBank {
    dim: usize,
    data: Vec<f32>,
    reference_times: Vec<u64>,
    provenance: Vec<Provenance>,
    capacity_limit: Option<usize>,
    capacity_events: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub distance: f64,
}

#[inline]
pub fn squared_euclidean(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = f64::from(x) - f64::from(y);
            d * d
        })
        .sum()
}

impl MemoryBank {
    pub fn with_dim(dim: usize) -> Self {
        Self {
            dim,
            data: Vec::new(),
            reference_times: Vec::new(),
            provenance: Vec::new(),
            capacity_limit: None,
            capacity_events: 0,
        }
    }

    pub fn from_parts(
        dim: usize,
        data: Vec<f32>,
        reference_times: Vec<u64>,
        provenance: Vec<Provenance>,
    ) -> Result<Self, BankError> {
        if data.len() != reference_times.len() * dim || provenance.len() != reference_times.len() {
            return Err(BankError::Inconsistent);
        }
        Ok(Self {
            dim,
            data,
            reference_times,
            provenance,
            capacity_limit: None,
            capacity_events: 0,
        })
    }

    pub fn with_capacity_limit(mut self, limit: Option<usize>) -> Self {
        self.capacity_limit = limit;
        self
    }

    pub fn len(&self) -> usize {
        self.provenance.len()
    }

    pub fn is_empty(&self) -> bool {
        self.provenance.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn item(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn items(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        self.data.chunks_exact(self.dim.max(1))
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn reference_times(&self) -> &[u64] {
        &self.reference_times
    }

    pub fn provenance(&self) -> &[Provenance] {
        &self.provenance
    }

    pub fn capacity_limit(&self) -> Option<usize> {
        self.capacity_limit
    }

    /// Number of insertions refused because the bank was full.
    pub fn capacity_events(&self) -> usize {
        self.capacity_events
    }

    pub fn count(&self, tag: Provenance) -> usize {
        self.provenance.iter().filter(|&&p| p == tag).count()
    }

    /// Items as an embedding matrix, for TREP serialization.
    pub fn to_matrix(&self) -> Result<EmbeddingMatrix, crate::embedding::EmbeddingError> {
        EmbeddingMatrix::new(self.dim, self.data.clone(), self.reference_times.clone())
    }

    fn check_dim(&self, query: &[f32]) -> Result<(), BankError> {
        if query.len() != self.dim {
            return Err(BankError::DimensionMismatch {
                expected: self.dim,
                actual: query.len(),
            });
        }
        Ok(())
    }

    fn push(&mut self, item: &[f32], reference_time: u64, tag: Provenance) {
        self.data.extend_from_slice(item);
        self.reference_times.push(reference_time);
        self.provenance.push(tag);
    }

    fn subset(&self, indices: &[usize]) -> Self {
        let mut out = Self::with_dim(self.dim).with_capacity_limit(self.capacity_limit);
        for &i in indices {
            out.push(self.item(i), self.reference_times[i], self.provenance[i]);
        }
        out
    }
}

/// Memory bank holding every training row, in order.
pub fn build_bank(train: &EmbeddingMatrix) -> Result<MemoryBank, BankError> {
    if train.is_empty() {
        return Err(BankError::EmptyBank);
    }
    MemoryBank::from_parts(
        train.dim(),
        train.data().to_vec(),
        train.reference_times().to_vec(),
        vec![Provenance::Train; train.rows()],
    )
}

/// Exact nearest neighbor by linear scan; ties go to the lowest index.
pub fn nearest_neighbor(bank: &MemoryBank, query: &[f32]) -> Result<Neighbor, BankError> {
    if bank.is_empty() {
        return Err(BankError::EmptyBank);
    }
    bank.check_dim(query)?;
    let mut best = 0;
    let mut best_sq = f64::INFINITY;
    for (i, item) in bank.items().enumerate() {
        let d = squared_euclidean(item, query);
        if d < best_sq {
            best_sq = d;
            best = i;
        }
    }
    Ok(Neighbor {
        index: best,
        distance: best_sq.sqrt(),
    })
}

/// The `k` nearest items ordered by (distance, index), skipping `exclude`.
pub fn k_nearest(
    bank: &MemoryBank,
    query: &[f32],
    k: usize,
    exclude: Option<usize>,
) -> Result<Vec<Neighbor>, BankError> {
    bank.check_dim(query)?;
    let available = bank.len() - usize::from(exclude.is_some_and(|e| e < bank.len()));
    if k > available {
        return Err(BankError::NotEnoughItems {
            requested: k,
            available,
        });
    }
    let mut all: Vec<(f64, usize)> = bank
        .items()
        .enumerate()
        .filter(|(i, _)| Some(*i) != exclude)
        .map(|(i, item)| (squared_euclidean(item, query), i))
        .collect();
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < all.len() {
        all.select_nth_unstable_by(k, cmp);
        all.truncate(k);
    }
    all.sort_unstable_by(cmp);
    Ok(all
        .into_iter()
        .map(|(sq, index)| Neighbor {
            index,
            distance: sq.sqrt(),
        })
        .collect())
}

/// Result of greedy k-Center selection.
#[derive(Debug, Clone, PartialEq)]
pub struct KCenterSelection {
    /// Selected indices in the order they were picked.
    pub picked: Vec<usize>,
    /// Max over all items of the distance to the nearest selected item.
    pub coverage_radius: f64,
}

/// Greedy farthest-point selection of `max_size` items starting at `first`.
///
/// Keeps each item's distance to the current selection and updates it after
/// every pick, so the whole run is O(K * max_size * d).
pub fn greedy_kcenter_from(bank: &MemoryBank, max_size: usize, first: usize) -> Result<KCenterSelection, BankError> {
    if max_size == 0 {
        return Err(BankError::ZeroCoresetSize);
    }
    if bank.is_empty() {
        return Err(BankError::EmptyBank);
    }
    let n = bank.len();
    if first >= n {
        return Err(BankError::IndexOutOfRange { index: first, len: n });
    }
    let target = max_size.min(n);
    let mut min_sq = vec![f64::INFINITY; n];
    let mut picked = Vec::with_capacity(target);
    let mut next = first;
    loop {
        picked.push(next);
        let center = bank.item(next);
        min_sq.par_iter_mut().enumerate().for_each(|(i, d)| {
            let sq = squared_euclidean(bank.item(i), center);
            if sq < *d {
                *d = sq;
            }
        });
        if picked.len() == target {
            break;
        }
        // Farthest item; strict comparison keeps the lowest index on ties.
        let mut far = 0;
        for (i, &d) in min_sq.iter().enumerate() {
            if d > min_sq[far] {
                far = i;
            }
        }
        next = far;
    }
    let coverage_radius = min_sq.iter().copied().fold(0.0, f64::max).sqrt();
    Ok(KCenterSelection {
        picked,
        coverage_radius,
    })
}

/// Greedy k-Center with a seed-chosen starting item.
pub fn greedy_kcenter(bank: &MemoryBank, max_size: usize, seed: u64) -> Result<KCenterSelection, BankError> {
    if bank.is_empty() {
        return Err(BankError::EmptyBank);
    }
    let first = ChaCha8Rng::seed_from_u64(seed).random_range(0..bank.len());
    greedy_kcenter_from(bank, max_size, first)
}

/// Compresses the bank to at most `max_size` items, preserving original order.
pub fn kcenter_coreset(bank: &MemoryBank, max_size: usize, seed: u64) -> Result<MemoryBank, BankError> {
    if max_size == 0 {
        return Err(BankError::ZeroCoresetSize);
    }
    if bank.len() <= max_size {
        return Ok(bank.clone());
    }
    let mut selection = greedy_kcenter(bank, max_size, seed)?.picked;
    selection.sort_unstable();
    Ok(bank.subset(&selection))
}

/// Max distance from any item of `bank` to its nearest member of `centers`.
pub fn coverage_radius(bank: &MemoryBank, centers: &MemoryBank) -> Result<f64, BankError> {
    bank.items()
        .map(|item| nearest_neighbor(centers, item).map(|n| n.distance))
        .try_fold(0.0, |acc, d| d.map(|d| f64::max(acc, d)))
}

/// Novelty gate for test-time insertions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoveltyModel {
    #[serde(rename = "q")]
    pub percentile: f64,
    #[serde(rename = "tau")]
    pub threshold: f64,
}

/// Nearest-rank percentile: the ⌈q·n/100⌉-th smallest value.
pub fn nearest_rank_percentile(values: &mut [f64], q: f64) -> Result<f64, BankError> {
    if !(q > 0.0 && q <= 100.0) {
        return Err(BankError::InvalidPercentile(q));
    }
    if values.is_empty() {
        return Err(BankError::NoNoveltyDistances);
    }
    values.sort_unstable_by(f64::total_cmp);
    let n = values.len();
    let rank = ((q * n as f64) / 100.0).ceil() as usize;
    Ok(values[rank.clamp(1, n) - 1])
}

/// Fits the novelty threshold from training NN distances to `bank`.
///
/// A training row that is itself a bank item (same reference time, train
/// provenance) is scored against its nearest *other* item. If that leaves it
/// with no candidate (single-item bank) the row is skipped.
pub fn fit_novelty(bank: &MemoryBank, train: &EmbeddingMatrix, q: f64) -> Result<NoveltyModel, BankError> {
    if !(q > 0.0 && q <= 100.0) {
        return Err(BankError::InvalidPercentile(q));
    }
    if bank.is_empty() {
        return Err(BankError::EmptyBank);
    }
    if train.is_empty() {
        return Err(BankError::EmptyTraining);
    }
    if train.dim() != bank.dim() {
        return Err(BankError::DimensionMismatch {
            expected: bank.dim(),
            actual: train.dim(),
        });
    }
    let self_index = |t: u64| -> Option<usize> {
        let i = bank.reference_times.partition_point(|&x| x < t);
        // Reference times are sorted within the train-provenance prefix.
        (i < bank.len() && bank.reference_times[i] == t && bank.provenance[i] == Provenance::Train).then_some(i)
    };
    let mut distances: Vec<f64> = train
        .iter_rows()
        .zip(train.reference_times())
        .collect::<Vec<_>>()
        .into_par_iter()
        .filter_map(|(row, &t)| {
            let exclude = self_index(t);
            let mut best = f64::INFINITY;
            for (i, item) in bank.items().enumerate() {
                if Some(i) == exclude {
                    continue;
                }
                best = best.min(squared_euclidean(item, row));
            }
            best.is_finite().then(|| best.sqrt())
        })
        .collect();
    let threshold = nearest_rank_percentile(&mut distances, q)?;
    Ok(NoveltyModel {
        percentile: q,
        threshold,
    })
}

/// Inserts `candidate` iff `nn_distance` (its distance to the current bank)
/// strictly exceeds the novelty threshold and the bank has room.
pub fn ttamb_insert(
    bank: &mut MemoryBank,
    novelty: &NoveltyModel,
    candidate: &[f32],
    reference_time: u64,
    nn_distance: f64,
) -> Result<bool, BankError> {
    bank.check_dim(candidate)?;
    // NaN distances are never novel.
    if nn_distance.partial_cmp(&novelty.threshold) != Some(std::cmp::Ordering::Greater) {
        return Ok(false);
    }
    if bank.capacity_limit.is_some_and(|cap| bank.len() >= cap) {
        bank.capacity_events += 1;
        return Ok(false);
    }
    bank.push(candidate, reference_time, Provenance::Adapted);
    Ok(true)
}
