// SPDX-License-Identifier: MIT OR Apache-2.0

//! Embedding matrices and the provider contract.
//!
//! A provider turns one window into the representation of its reference
//! patch. Real foundation-model embeddings arrive as TREP files produced out
//! of process (see [`crate::trep`]); [`SyntheticProvider`] is a deterministic
//! in-process stand-in used for tests and synthetic suites.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{Window, WindowSpec};

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("embedding provider {0:?} is unavailable")]
    ProviderUnavailable(String),
    #[error("provider returned {actual} values, expected d_model = {expected}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("window at reference time {reference_time} has length {actual}, expected {expected}")]
    WindowLength {
        reference_time: usize,
        expected: usize,
        actual: usize,
    },
    #[error("reference times must be strictly increasing (row {row})")]
    UnorderedReferenceTimes { row: usize },
    #[error("non-finite embedding value at row {row}, column {column}")]
    NonFinite { row: usize, column: usize },
    #[error("matrix data length {actual} does not match rows x dim = {expected}")]
    Shape { expected: usize, actual: usize },
    #[error("invalid embedding config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingConfig {
    /// Opaque layer index (1-based block output for real models).
    pub layer: u32,
    pub d_model: usize,
    pub window: WindowSpec,
    pub provider_id: String,
}

impl EmbeddingConfig {
    pub fn new(provider_id: impl Into<String>, d_model: usize, window: WindowSpec) -> Self {
        Self {
            layer: 16,
            d_model,
            window,
            provider_id: provider_id.into(),
        }
    }

    pub fn with_layer(mut self, layer: u32) -> Self {
        self.layer = layer;
        self
    }

    pub fn validate(&self) -> Result<(), EmbeddingError> {
        if self.d_model == 0 {
            return Err(EmbeddingError::InvalidConfig("d_model must be positive".into()));
        }
        if self.layer == 0 {
            return Err(EmbeddingError::InvalidConfig("layer is 1-based".into()));
        }
        self.window
            .validate()
            .map_err(|e| EmbeddingError::InvalidConfig(e.to_string()))
    }
}

/// Row-major `rows x dim` matrix of f32 representations, one row per reference time.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    dim: usize,
    data: Vec<f32>,
    reference_times: Vec<u64>,
}

impl EmbeddingMatrix {
    pub fn new(dim: usize, data: Vec<f32>, reference_times: Vec<u64>) -> Result<Self, EmbeddingError> {
        let expected = reference_times.len() * dim;
        if data.len() != expected {
            return Err(EmbeddingError::Shape {
                expected,
                actual: data.len(),
            });
        }
        if let Some(row) = reference_times.windows(2).position(|w| w[0] >= w[1]) {
            return Err(EmbeddingError::UnorderedReferenceTimes { row: row + 1 });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(EmbeddingError::NonFinite {
                row: pos / dim.max(1),
                column: pos % dim.max(1),
            });
        }
        Ok(Self {
            dim,
            data,
            reference_times,
        })
    }

    pub fn empty(dim: usize) -> Self {
        Self {
            dim,
            data: Vec::new(),
            reference_times: Vec::new(),
        }
    }

    pub fn rows(&self) -> usize {
        self.reference_times.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.reference_times.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter_rows(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        // chunks_exact on dim=0 would panic; an empty-width matrix has no usable rows anyway.
        self.data.chunks_exact(self.dim.max(1))
    }

    pub fn reference_times(&self) -> &[u64] {
        &self.reference_times
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_parts(self) -> (usize, Vec<f32>, Vec<u64>) {
        (self.dim, self.data, self.reference_times)
    }
}

/// Produces the reference-patch representation of a window.
pub trait EmbeddingProvider: Send + Sync {
    fn provider_id(&self) -> &str;

    fn embed_window(&self, window: &Window<'_>, config: &EmbeddingConfig) -> Result<Vec<f32>, EmbeddingError>;
}

/// Embeds `windows` in order, one row per window.
pub fn embed<P: EmbeddingProvider + ?Sized>(
    provider: &P,
    windows: &[Window<'_>],
    config: &EmbeddingConfig,
) -> Result<EmbeddingMatrix, EmbeddingError> {
    config.validate()?;
    let mut data = Vec::with_capacity(windows.len() * config.d_model);
    let mut times = Vec::with_capacity(windows.len());
    for window in windows {
        if window.values.len() != config.window.window_length {
            return Err(EmbeddingError::WindowLength {
                reference_time: window.reference_time,
                expected: config.window.window_length,
                actual: window.values.len(),
            });
        }
        let row = provider.embed_window(window, config)?;
        if row.len() != config.d_model {
            return Err(EmbeddingError::DimensionMismatch {
                expected: config.d_model,
                actual: row.len(),
            });
        }
        data.extend_from_slice(&row);
        times.push(window.reference_time as u64);
    }
    EmbeddingMatrix::new(config.d_model, data, times)
}

const ZNORM_EPS: f64 = 1e-8;

/// Z-normalized reference patch followed by a fixed random projection and tanh.
#[derive(Debug, Clone)]
pub struct SyntheticProvider {
    seed: u64,
    id: String,
}

impl SyntheticProvider {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            id: format!("synthetic:{seed}"),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// The `d_model x patch_length` projection, drawn from N(0, 1/P).
    fn projection(&self, d_model: usize, patch_length: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let scale = 1.0 / (patch_length as f64).sqrt();
        (0..d_model * patch_length)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z * scale
            })
            .collect()
    }
}

impl EmbeddingProvider for SyntheticProvider {
    fn provider_id(&self) -> &str {
        &self.id
    }

    fn embed_window(&self, window: &Window<'_>, config: &EmbeddingConfig) -> Result<Vec<f32>, EmbeddingError> {
        Ok(synthetic_embed(window, config, self.seed))
    }
}

/// Deterministic synthetic embedding of one window.
///
/// Shift- and scale-invariant per window. A constant window maps to zeros.
pub fn synthetic_embed(window: &Window<'_>, config: &EmbeddingConfig, seed: u64) -> Vec<f32> {
    let spec = &config.window;
    let values = window.values;
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();

    let patch: Vec<f64> = if std < ZNORM_EPS {
        vec![0.0; spec.patch_length]
    } else {
        values[spec.reference_patch_range()]
            .iter()
            .map(|v| (v - mean) / std)
            .collect()
    };

    // Rebuilt per call; at P=8 this is cheap next to the window statistics.
    let weights = SyntheticProvider::new(seed).projection(config.d_model, spec.patch_length);
    weights
        .chunks_exact(spec.patch_length)
        .map(|w| {
            let acc: f64 = w.iter().zip(&patch).map(|(a, b)| a * b).sum();
            acc.tanh() as f32
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config() -> EmbeddingConfig {
        EmbeddingConfig::new("synthetic:7", 16, WindowSpec::center(32, 4))
    }

    fn window(values: &[f64]) -> Window<'_> {
        Window {
            reference_time: 31,
            window_start: 0,
            values,
        }
    }

    fn sine(len: usize, phase: f64) -> Vec<f64> {
        (0..len).map(|i| (i as f64 * 0.3 + phase).sin()).collect()
    }

    #[test]
    fn constant_window_is_zero() {
        let v = vec![0.1; 32];
        let out = synthetic_embed(&window(&v), &config(), 7);
        assert_eq!(out.len(), 16);
        assert!(out.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn deterministic() {
        let v = sine(32, 0.0);
        let a = synthetic_embed(&window(&v), &config(), 7);
        let b = synthetic_embed(&window(&v), &config(), 7);
        assert_eq!(a, b);
        let c = synthetic_embed(&window(&v), &config(), 8);
        assert_ne!(a, c);
    }

    #[test]
    fn scale_and_shift_invariant() {
        let v = sine(32, 0.4);
        let scaled: Vec<f64> = v.iter().map(|x| x * 5.0).collect();
        let shifted: Vec<f64> = v.iter().map(|x| x * 5.0 - 17.0).collect();
        let base = synthetic_embed(&window(&v), &config(), 7);
        for other in [&scaled, &shifted] {
            let out = synthetic_embed(&window(other), &config(), 7);
            let max_diff = base.iter().zip(&out).map(|(a, b)| (a - b).abs()).fold(0.0f32, f32::max);
            assert!(max_diff < 1e-6, "max diff {max_diff}");
        }
    }

    #[test]
    fn embed_preserves_order_and_distinguishes() {
        let v1 = sine(32, 0.0);
        let v2 = sine(32, 1.3);
        let windows = [
            Window {
                reference_time: 3,
                window_start: 0,
                values: &v1,
            },
            Window {
                reference_time: 4,
                window_start: 1,
                values: &v1,
            },
            Window {
                reference_time: 9,
                window_start: 2,
                values: &v2,
            },
        ];
        let m = embed(&SyntheticProvider::new(7), &windows, &config()).unwrap();
        assert_eq!(m.rows(), 3);
        assert_eq!(m.reference_times(), &[3, 4, 9]);
        assert_eq!(m.row(0), m.row(1));
        assert_ne!(m.row(0), m.row(2));
    }

    #[test]
    fn embed_empty() {
        let m = embed(&SyntheticProvider::new(1), &[], &config()).unwrap();
        assert_eq!(m.rows(), 0);
        assert!(m.is_empty());
    }

    struct Broken;
    impl EmbeddingProvider for Broken {
        fn provider_id(&self) -> &str {
            "broken"
        }
        fn embed_window(&self, _: &Window<'_>, _: &EmbeddingConfig) -> Result<Vec<f32>, EmbeddingError> {
            Ok(vec![0.0; 3])
        }
    }

    #[test]
    fn dimension_and_length_errors() {
        let v = sine(32, 0.0);
        let w = [window(&v)];
        assert!(matches!(
            embed(&Broken, &w, &config()),
            Err(EmbeddingError::DimensionMismatch {
                expected: 16,
                actual: 3
            })
        ));
        let short = sine(10, 0.0);
        assert!(matches!(
            embed(&SyntheticProvider::new(1), &[window(&short)], &config()),
            Err(EmbeddingError::WindowLength { .. })
        ));
    }

    #[test]
    fn matrix_invariants() {
        assert!(matches!(
            EmbeddingMatrix::new(2, vec![0.0; 4], vec![5, 5]),
            Err(EmbeddingError::UnorderedReferenceTimes { row: 1 })
        ));
        assert!(matches!(
            EmbeddingMatrix::new(2, vec![0.0, f32::NAN, 0.0, 0.0], vec![1, 2]),
            Err(EmbeddingError::NonFinite { row: 0, column: 1 })
        ));
        assert!(matches!(
            EmbeddingMatrix::new(2, vec![0.0; 3], vec![1, 2]),
            Err(EmbeddingError::Shape { .. })
        ));
    }
}
