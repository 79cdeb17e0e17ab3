// SPDX-License-Identifier: MIT OR Apache-2.0

//! Per-time-step anomaly scores against a memory bank.
//!
//! Every score starts from the Euclidean nearest neighbor `m*` of the query
//! and then measures `d(r, m*)` with one of three distances: plain
//! Euclidean, Mahalanobis under the (ridge-regularized) bank covariance, or a
//! density-weighted distance that discounts queries sitting in dense regions.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::EmbeddingMatrix;
use crate::membank::{self, BankError, MemoryBank, Neighbor, NoveltyModel};

pub const DEFAULT_DENSITY_NEIGHBORS: usize = 5;
pub const DEFAULT_RIDGE: f64 = 1e-3;

#[derive(Debug, Error, PartialEq)]
pub enum ScoringError {
    #[error(transparent)]
    Bank(#[from] BankError),
    #[error("dimension mismatch: {expected} vs {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error(
        "covariance needs at least 2 memory items, bank has {items}; \
         raise the coreset size or use the euclidean distance"
    )]
    TooFewItems { items: usize },
    #[error("sample covariance is not finite")]
    NonFiniteCovariance,
    #[error(
        "covariance is singular (not positive definite) with ridge lambda = {lambda}; \
         increase the ridge, e.g. `--set ridge=1e-2`"
    )]
    CovarianceSingular { lambda: f64 },
    #[error("invalid distance spec: {0}")]
    InvalidSpec(String),
    #[error("no embeddings to score")]
    EmptyEmbeddings,
}

/// Which bank items make up the density neighborhood of `m*`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Neighborhood {
    /// `m*` plus its `b - 1` nearest other items. Bounds the weight in `[0, 1)`.
    IncludeNearest,
    /// The `b` nearest items other than `m*`.
    ExcludeNearest,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DistanceSpec {
    #[default]
    Euclidean,
    Mahalanobis {
        ridge: f64,
    },
    Density {
        neighbors: usize,
        neighborhood: Neighborhood,
    },
}

impl DistanceSpec {
    pub fn mahalanobis() -> Self {
        DistanceSpec::Mahalanobis { ridge: DEFAULT_RIDGE }
    }

    pub fn density(neighbors: usize) -> Self {
        DistanceSpec::Density {
            neighbors,
            neighborhood: Neighborhood::IncludeNearest,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            DistanceSpec::Euclidean => "euclidean",
            DistanceSpec::Mahalanobis { .. } => "mahalanobis",
            DistanceSpec::Density { .. } => "density",
        }
    }

    pub fn validate(&self) -> Result<(), ScoringError> {
        match *self {
            DistanceSpec::Euclidean => Ok(()),
            DistanceSpec::Mahalanobis { ridge } if !(ridge >= 0.0 && ridge.is_finite()) => Err(
                ScoringError::InvalidSpec(format!("ridge must be finite and >= 0, got {ridge}")),
            ),
            DistanceSpec::Mahalanobis { .. } => Ok(()),
            DistanceSpec::Density {
                neighbors,
                neighborhood,
            } => {
                let min = match neighborhood {
                    Neighborhood::IncludeNearest => 2,
                    Neighborhood::ExcludeNearest => 1,
                };
                if neighbors < min {
                    return Err(ScoringError::InvalidSpec(format!(
                        "density needs at least {min} neighbors, got {neighbors}"
                    )));
                }
                Ok(())
            }
        }
    }
}

fn check_dims(a: &[f32], b: &[f32]) -> Result<(), ScoringError> {
    if a.len() != b.len() {
        return Err(ScoringError::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    Ok(())
}

pub fn distance_euclidean(r: &[f32], m: &[f32]) -> Result<f64, ScoringError> {
    check_dims(r, m)?;
    Ok(membank::squared_euclidean(r, m).sqrt())
}

/// Bank covariance with its Cholesky factor.
#[derive(Debug, Clone)]
pub struct CovarianceModel {
    sigma: DMatrix<f64>,
    lower: DMatrix<f64>,
    lambda: f64,
    ridge: f64,
}

impl CovarianceModel {
    /// Wraps an explicit covariance matrix.
    pub fn from_matrix(sigma: DMatrix<f64>) -> Result<Self, ScoringError> {
        Self::factor(sigma, 0.0, 0.0)
    }

    fn factor(sigma: DMatrix<f64>, lambda: f64, ridge: f64) -> Result<Self, ScoringError> {
        if sigma.iter().any(|v| !v.is_finite()) {
            return Err(ScoringError::NonFiniteCovariance);
        }
        let chol = sigma
            .clone()
            .cholesky()
            .ok_or(ScoringError::CovarianceSingular { lambda })?;
        Ok(Self {
            lower: chol.l(),
            sigma,
            lambda,
            ridge,
        })
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn dim(&self) -> usize {
        self.sigma.nrows()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Absolute ridge added to the diagonal.
    pub fn ridge(&self) -> f64 {
        self.ridge
    }
}

/// Sample covariance of the bank items plus `λ · trace/d · I`.
///
/// When the sample covariance is identically zero the relative scale is
/// undefined, so the ridge falls back to `λ · I`.
pub fn fit_covariance(bank: &MemoryBank, lambda: f64) -> Result<CovarianceModel, ScoringError> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(ScoringError::InvalidSpec(format!(
            "ridge must be finite and >= 0, got {lambda}"
        )));
    }
    let k = bank.len();
    if k < 2 {
        return Err(ScoringError::TooFewItems { items: k });
    }
    let d = bank.dim();
    let mut mean = DVector::<f64>::zeros(d);
    for item in bank.items() {
        for (m, &x) in mean.iter_mut().zip(item) {
            *m += f64::from(x);
        }
    }
    mean /= k as f64;
    let centered = DMatrix::<f64>::from_fn(k, d, |i, j| f64::from(bank.item(i)[j]) - mean[j]);
    let mut sigma = centered.transpose() * &centered;
    sigma /= (k - 1) as f64;
    // Symmetrize away accumulation noise from the product.
    sigma = (&sigma + sigma.transpose()) * 0.5;

    let trace = sigma.trace();
    if !trace.is_finite() {
        return Err(ScoringError::NonFiniteCovariance);
    }
    let scale = if trace > 0.0 { trace / d as f64 } else { 1.0 };
    let ridge = lambda * scale;
    for i in 0..d {
        sigma[(i, i)] += ridge;
    }
    CovarianceModel::factor(sigma, lambda, ridge)
}

pub fn distance_mahalanobis(r: &[f32], m: &[f32], cov: &CovarianceModel) -> Result<f64, ScoringError> {
    check_dims(r, m)?;
    if r.len() != cov.dim() {
        return Err(ScoringError::DimensionMismatch {
            expected: cov.dim(),
            actual: r.len(),
        });
    }
    let diff = DVector::<f64>::from_iterator(r.len(), r.iter().zip(m).map(|(&a, &b)| f64::from(a) - f64::from(b)));
    let y = cov
        .lower
        .solve_lower_triangular(&diff)
        .ok_or(ScoringError::CovarianceSingular { lambda: cov.lambda })?;
    Ok(y.norm_squared().sqrt())
}

/// Density-weighted distance given a precomputed nearest neighbor.
fn density_with_nn(
    r: &[f32],
    bank: &MemoryBank,
    nn: Neighbor,
    neighbors: usize,
    neighborhood: Neighborhood,
) -> Result<f64, ScoringError> {
    let anchor = bank.item(nn.index);
    let members: Vec<usize> = match neighborhood {
        Neighborhood::IncludeNearest => std::iter::once(nn.index)
            .chain(
                membank::k_nearest(bank, anchor, neighbors - 1, Some(nn.index))?
                    .into_iter()
                    .map(|n| n.index),
            )
            .collect(),
        Neighborhood::ExcludeNearest => membank::k_nearest(bank, anchor, neighbors, Some(nn.index))?
            .into_iter()
            .map(|n| n.index)
            .collect(),
    };

    let scale = 1.0 / (bank.dim() as f64).sqrt();
    let scaled: Vec<f64> = members
        .iter()
        .map(|&i| membank::squared_euclidean(r, bank.item(i)).sqrt() * scale)
        .collect();
    let shift = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let denom: f64 = scaled.iter().map(|s| (s - shift).exp()).sum();
    let numer = (nn.distance * scale - shift).exp();
    let weight = 1.0 - numer / denom;
    Ok(weight * nn.distance)
}

/// Density-aware score of `r` against the bank.
pub fn distance_density(r: &[f32], bank: &MemoryBank, neighbors: usize) -> Result<f64, ScoringError> {
    distance_density_with(r, bank, neighbors, Neighborhood::IncludeNearest)
}

pub fn distance_density_with(
    r: &[f32],
    bank: &MemoryBank,
    neighbors: usize,
    neighborhood: Neighborhood,
) -> Result<f64, ScoringError> {
    DistanceSpec::Density {
        neighbors,
        neighborhood,
    }
    .validate()?;
    if bank.is_empty() {
        return Err(BankError::EmptyBank.into());
    }
    let nn = membank::nearest_neighbor(bank, r)?;
    density_with_nn(r, bank, nn, neighbors, neighborhood)
}

/// Distance spec bound to a bank, with the covariance fitted once up front.
#[derive(Debug, Clone)]
pub struct Scorer {
    spec: DistanceSpec,
    covariance: Option<CovarianceModel>,
}

impl Scorer {
    pub fn prepare(spec: DistanceSpec, bank: &MemoryBank) -> Result<Self, ScoringError> {
        spec.validate()?;
        let covariance = match spec {
            DistanceSpec::Mahalanobis { ridge } => Some(fit_covariance(bank, ridge)?),
            _ => None,
        };
        Ok(Self { spec, covariance })
    }

    pub fn spec(&self) -> &DistanceSpec {
        &self.spec
    }

    pub fn covariance(&self) -> Option<&CovarianceModel> {
        self.covariance.as_ref()
    }

    /// Score of `r` and its Euclidean nearest neighbor in `bank`.
    pub fn score(&self, bank: &MemoryBank, r: &[f32]) -> Result<(f64, Neighbor), ScoringError> {
        let nn = membank::nearest_neighbor(bank, r)?;
        let score = match (&self.spec, &self.covariance) {
            (DistanceSpec::Euclidean, _) => nn.distance,
            (DistanceSpec::Mahalanobis { .. }, Some(cov)) => distance_mahalanobis(r, bank.item(nn.index), cov)?,
            (DistanceSpec::Mahalanobis { .. }, None) => unreachable!("prepare fits the covariance"),
            (
                DistanceSpec::Density {
                    neighbors,
                    neighborhood,
                },
                _,
            ) => density_with_nn(r, bank, nn, *neighbors, *neighborhood)?,
        };
        Ok((score, nn))
    }
}

/// Anomaly scores keyed by reference time. `None` marks a time step in the
/// scored region that no window could reach.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreSeries {
    pub scores: BTreeMap<u64, Option<f64>>,
    pub threshold: Option<f64>,
}

impl ScoreSeries {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (u64, f64)>) -> Self {
        Self {
            scores: pairs.into_iter().map(|(t, s)| (t, Some(s))).collect(),
            threshold: None,
        }
    }

    /// Marks every time in `range` without a score as undefined.
    pub fn mark_undefined(&mut self, range: std::ops::Range<u64>) {
        for t in range {
            self.scores.entry(t).or_insert(None);
        }
    }

    pub fn defined(&self) -> impl Iterator<Item = (u64, f64)> + '_ {
        self.scores.iter().filter_map(|(&t, s)| s.map(|s| (t, s)))
    }

    pub fn defined_count(&self) -> usize {
        self.scores.values().filter(|s| s.is_some()).count()
    }

    pub fn get(&self, t: u64) -> Option<f64> {
        self.scores.get(&t).copied().flatten()
    }

    /// Labels from `score > θ` for every defined time step.
    pub fn predict(&self, theta: f64) -> Vec<(u64, bool)> {
        self.defined().map(|(t, s)| (t, s > theta)).collect()
    }

    /// `reference_time,score` CSV; undefined steps are omitted.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("reference_time,score\n");
        for (t, s) in self.defined() {
            let _ = writeln!(out, "{t},{s}");
        }
        out
    }
}

/// One adaptation decision taken while streaming.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InsertionRecord {
    pub reference_time: u64,
    pub nn_distance: f64,
    pub inserted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamOutcome {
    pub scores: ScoreSeries,
    /// Empty when adaptation is off.
    pub decisions: Vec<InsertionRecord>,
}

impl StreamOutcome {
    pub fn insertion_count(&self) -> usize {
        self.decisions.iter().filter(|d| d.inserted).count()
    }
}

/// Scores `embeddings` in reference-time order against `bank`.
///
/// With a novelty model each row is scored first and then offered to the
/// bank, so a row never matches itself. Without one the bank is untouched and
/// rows are scored in parallel.
pub fn score_stream(
    bank: &mut MemoryBank,
    novelty: Option<&NoveltyModel>,
    embeddings: &EmbeddingMatrix,
    dist: &DistanceSpec,
) -> Result<StreamOutcome, ScoringError> {
    if bank.is_empty() {
        return Err(BankError::EmptyBank.into());
    }
    if embeddings.is_empty() {
        return Err(ScoringError::EmptyEmbeddings);
    }
    if embeddings.dim() != bank.dim() {
        return Err(ScoringError::DimensionMismatch {
            expected: bank.dim(),
            actual: embeddings.dim(),
        });
    }
    let scorer = Scorer::prepare(*dist, bank)?;
    let times = embeddings.reference_times();

    let Some(novelty) = novelty else {
        let bank = &*bank;
        let scores = (0..embeddings.rows())
            .into_par_iter()
            .map(|i| scorer.score(bank, embeddings.row(i)).map(|(s, _)| (times[i], s)))
            .collect::<Result<Vec<_>, _>>()?;
        return Ok(StreamOutcome {
            scores: ScoreSeries::from_pairs(scores),
            decisions: Vec::new(),
        });
    };

    let mut scores = Vec::with_capacity(embeddings.rows());
    let mut decisions = Vec::with_capacity(embeddings.rows());
    for (row, &t) in embeddings.iter_rows().zip(times) {
        let (score, nn) = scorer.score(bank, row)?;
        scores.push((t, score));
        let inserted = membank::ttamb_insert(bank, novelty, row, t, nn.distance)?;
        decisions.push(InsertionRecord {
            reference_time: t,
            nn_distance: nn.distance,
            inserted,
        });
    }
    Ok(StreamOutcome {
        scores: ScoreSeries::from_pairs(scores),
        decisions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::membank::build_bank;

    fn bank_of(points: &[&[f32]]) -> MemoryBank {
        let dim = points[0].len();
        let data = points.iter().flat_map(|p| p.iter().copied()).collect();
        build_bank(&EmbeddingMatrix::new(dim, data, (0..points.len() as u64).collect()).unwrap()).unwrap()
    }

    fn matrix(points: &[&[f32]], first_time: u64) -> EmbeddingMatrix {
        let dim = points[0].len();
        let data = points.iter().flat_map(|p| p.iter().copied()).collect();
        EmbeddingMatrix::new(dim, data, (first_time..first_time + points.len() as u64).collect()).unwrap()
    }

    #[test]
    fn euclidean_examples() {
        assert_eq!(distance_euclidean(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(distance_euclidean(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 5.0);
        assert!(distance_euclidean(&[0.0], &[3.0, 4.0]).is_err());
    }

    #[test]
    fn covariance_of_centered_triangle() {
        // Three points 120° apart at radius 2/√3: sample covariance (K-1 = 2) is I.
        let r = 2.0 / 3f64.sqrt();
        let b = bank_of(&[&[r as f32, 0.0], &[(-r / 2.0) as f32, 1.0], &[(-r / 2.0) as f32, -1.0]]);
        let cov = fit_covariance(&b, 0.0).unwrap();
        let eye = DMatrix::<f64>::identity(2, 2);
        assert!((cov.sigma() - eye).amax() < 1e-6, "{}", cov.sigma());
    }

    #[test]
    fn covariance_of_identical_items() {
        let b = bank_of(&[&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]]);
        let cov = fit_covariance(&b, 0.5).unwrap();
        assert_eq!(cov.sigma(), &(DMatrix::<f64>::identity(3, 3) * 0.5));
        assert!(matches!(
            fit_covariance(&b, 0.0),
            Err(ScoringError::CovarianceSingular { lambda }) if lambda == 0.0
        ));
    }

    #[test]
    fn covariance_needs_two_items() {
        let b = bank_of(&[&[1.0, 2.0]]);
        let err = fit_covariance(&b, 1e-3).unwrap_err();
        assert_eq!(err, ScoringError::TooFewItems { items: 1 });
        assert!(err.to_string().contains("euclidean"));
    }

    #[test]
    fn ridge_is_relative_to_trace() {
        let b = bank_of(&[&[0.0, 0.0], &[2.0, 0.0]]);
        // var_x = 2, var_y = 0 → trace/d = 1.
        let cov = fit_covariance(&b, 0.1).unwrap();
        assert!((cov.ridge() - 0.1).abs() < 1e-15);
        assert!((cov.sigma()[(0, 0)] - 2.1).abs() < 1e-12);
        assert!((cov.sigma()[(1, 1)] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn mahalanobis_examples() {
        let eye = CovarianceModel::from_matrix(DMatrix::identity(3, 3)).unwrap();
        let r = [0.3f32, -1.2, 4.0];
        let m = [1.0f32, 0.5, -2.0];
        let de = distance_euclidean(&r, &m).unwrap();
        assert!((distance_mahalanobis(&r, &m, &eye).unwrap() - de).abs() < 1e-9);
        assert_eq!(distance_mahalanobis(&r, &r, &eye).unwrap(), 0.0);

        let four = CovarianceModel::from_matrix(DMatrix::from_element(1, 1, 4.0)).unwrap();
        assert_eq!(distance_mahalanobis(&[0.0], &[2.0], &four).unwrap(), 1.0);

        assert!(matches!(
            CovarianceModel::from_matrix(DMatrix::from_element(1, 1, -1.0)),
            Err(ScoringError::CovarianceSingular { .. })
        ));
    }

    #[test]
    fn density_worked_example() {
        // Independent scalar evaluation: 1 - e^-0.5/(e^-0.5 + 1) = 0.6224593312018545.
        let b = bank_of(&[&[0.0], &[1.0]]);
        let s = distance_density(&[0.25], &b, 2).unwrap();
        assert!((s - 0.15561483280046362).abs() < 1e-12, "{s}");
    }

    #[test]
    fn density_zero_at_member() {
        let b = bank_of(&[&[0.0, 1.0], &[1.0, 0.0], &[5.0, 5.0]]);
        assert_eq!(distance_density(&[1.0, 0.0], &b, 2).unwrap(), 0.0);
    }

    #[test]
    fn density_equidistant() {
        // r at the origin, bank on the ±axes: every item is exactly 1 away.
        let b = bank_of(&[
            &[1.0, 0.0, 0.0],
            &[-1.0, 0.0, 0.0],
            &[0.0, 1.0, 0.0],
            &[0.0, -1.0, 0.0],
            &[0.0, 0.0, 1.0],
        ]);
        for nb in 2..=5 {
            let s = distance_density(&[0.0, 0.0, 0.0], &b, nb).unwrap();
            assert!((s - (1.0 - 1.0 / nb as f64)).abs() < 1e-12);
        }
    }

    #[test]
    fn density_errors() {
        let b = bank_of(&[&[0.0], &[1.0]]);
        assert!(matches!(
            distance_density(&[0.5], &b, 3),
            Err(ScoringError::Bank(BankError::NotEnoughItems { .. }))
        ));
        assert!(matches!(
            distance_density(&[0.5], &b, 1),
            Err(ScoringError::InvalidSpec(_))
        ));
        assert!(matches!(
            distance_density(&[0.5], &MemoryBank::with_dim(1), 2),
            Err(ScoringError::Bank(BankError::EmptyBank))
        ));
    }

    #[test]
    fn density_exclude_mode() {
        let b = bank_of(&[&[0.0], &[1.0], &[3.0]]);
        // m* = 0; neighbors of m* other than itself: {1, 3} at distances 0.75, 2.75 from r.
        let s = distance_density_with(&[0.25], &b, 2, Neighborhood::ExcludeNearest).unwrap();
        let num = 0.25f64.exp();
        let den = 0.75f64.exp() + 2.75f64.exp();
        assert!((s - (1.0 - num / den) * 0.25).abs() < 1e-12);
        assert!(s <= 0.25);
    }

    #[test]
    fn stream_self_coverage() {
        let pts: [&[f32]; 3] = [&[0.0, 1.0], &[2.0, 2.0], &[5.0, 1.0]];
        let mut b = bank_of(&pts);
        let out = score_stream(&mut b, None, &matrix(&pts, 100), &DistanceSpec::Euclidean).unwrap();
        assert!(out.scores.defined().all(|(_, s)| s == 0.0));
        assert_eq!(out.scores.defined_count(), 3);
    }

    #[test]
    fn stream_infinite_threshold_matches_plain() {
        let train: [&[f32]; 3] = [&[0.0, 1.0], &[2.0, 2.0], &[5.0, 1.0]];
        let test: [&[f32]; 3] = [&[9.0, 9.0], &[1.0, 1.0], &[-3.0, 2.0]];
        let mut plain_bank = bank_of(&train);
        let plain = score_stream(&mut plain_bank, None, &matrix(&test, 10), &DistanceSpec::Euclidean).unwrap();
        let mut bank = bank_of(&train);
        let novelty = NoveltyModel {
            percentile: 80.0,
            threshold: f64::INFINITY,
        };
        let adapted = score_stream(&mut bank, Some(&novelty), &matrix(&test, 10), &DistanceSpec::Euclidean).unwrap();
        assert_eq!(adapted.scores, plain.scores);
        assert_eq!(adapted.insertion_count(), 0);
        assert_eq!(bank.len(), 3);
    }

    #[test]
    fn stream_two_identical_novel_rows() {
        let mut bank = bank_of(&[&[0.0, 0.0], &[1.0, 0.0]]);
        let novelty = NoveltyModel {
            percentile: 80.0,
            threshold: 1.0,
        };
        let test: [&[f32]; 2] = [&[4.0, 4.0], &[4.0, 4.0]];
        let out = score_stream(&mut bank, Some(&novelty), &matrix(&test, 50), &DistanceSpec::Euclidean).unwrap();
        assert_eq!(out.scores.get(50), Some(5.0));
        assert_eq!(out.scores.get(51), Some(0.0));
        assert_eq!(out.insertion_count(), 1);
        assert!(out.decisions[0].inserted && !out.decisions[1].inserted);
    }

    #[test]
    fn mahalanobis_on_single_item_bank() {
        let mut bank = bank_of(&[&[0.0, 0.0]]);
        let err = score_stream(
            &mut bank,
            None,
            &matrix(&[&[1.0, 1.0]], 0),
            &DistanceSpec::mahalanobis(),
        )
        .unwrap_err();
        assert_eq!(err, ScoringError::TooFewItems { items: 1 });
    }

    #[test]
    fn score_series_csv_and_labels() {
        let mut s = ScoreSeries::from_pairs([(5, 0.5), (6, 1.25)]);
        s.mark_undefined(4..9);
        assert_eq!(s.scores.len(), 5);
        assert_eq!(s.defined_count(), 2);
        assert_eq!(s.to_csv(), "reference_time,score\n5,0.5\n6,1.25\n");
        assert_eq!(s.predict(1.0), vec![(5, false), (6, true)]);
    }
}
