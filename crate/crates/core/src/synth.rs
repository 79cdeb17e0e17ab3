// SPDX-License-Identifier: MIT OR Apache-2.0

//! Seeded sine-wave series with one injected anomaly each, written in the
//! archive's filename-labeled format. Anomaly positions are known by
//! construction, which makes these suites usable as end-to-end oracles.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::ingest::TimeSeriesRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnomalyKind {
    /// A short burst of a few large excursions.
    Spike,
    /// High-variance noise over a segment.
    NoiseBurst,
    /// The waveform swings at several times its usual amplitude.
    AmplitudeBurst,
    /// The waveform briefly runs at a much higher frequency.
    FrequencyShift,
}

impl AnomalyKind {
    pub const ALL: [AnomalyKind; 4] = [
        AnomalyKind::Spike,
        AnomalyKind::NoiseBurst,
        AnomalyKind::AmplitudeBurst,
        AnomalyKind::FrequencyShift,
    ];

    fn tag(&self) -> &'static str {
        match self {
            AnomalyKind::Spike => "spike",
            AnomalyKind::NoiseBurst => "noise",
            AnomalyKind::AmplitudeBurst => "amplitude",
            AnomalyKind::FrequencyShift => "frequency",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub length: usize,
    pub train_end: usize,
    pub noise_std: f64,
    /// Minimum gap between `train_end` and the anomaly start.
    pub lead: usize,
    /// Minimum gap between the anomaly end and the series end. Keep at least
    /// half a window so center-aligned scoring can reach the anomaly.
    pub tail: usize,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            length: 4000,
            train_end: 2000,
            noise_std: 0.05,
            lead: 300,
            tail: 600,
        }
    }
}

/// One seeded series of the given anomaly kind.
pub fn sine_with_anomaly(name: &str, seed: u64, kind: AnomalyKind, spec: &SynthSpec) -> TimeSeriesRecord {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let period = rng.random_range(40.0..120.0);
    let phase = rng.random_range(0.0..std::f64::consts::TAU);
    let harmonic = rng.random_range(0.0..0.3);
    let omega = std::f64::consts::TAU / period;
    let noise = Normal::new(0.0, spec.noise_std).expect("noise std is finite and non-negative");

    let wave = |t: f64, freq_mult: f64| {
        (omega * freq_mult * t + phase).sin() + harmonic * (2.0 * omega * freq_mult * t + phase).sin()
    };
    let mut values: Vec<f64> = (0..spec.length)
        .map(|t| wave(t as f64, 1.0) + noise.sample(&mut rng))
        .collect();

    let width = match kind {
        AnomalyKind::Spike => rng.random_range(1..4),
        _ => rng.random_range(30..80),
    };
    let lo = spec.train_end + spec.lead;
    let hi = spec.length - spec.tail - width;
    let begin = rng.random_range(lo..=hi.max(lo));
    let end = begin + width - 1;

    match kind {
        AnomalyKind::Spike => {
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            for v in &mut values[begin..=end] {
                *v += sign * rng.random_range(4.0..6.0);
            }
        }
        AnomalyKind::NoiseBurst => {
            let burst = Normal::new(0.0, 0.8).unwrap();
            for v in &mut values[begin..=end] {
                *v += burst.sample(&mut rng);
            }
        }
        AnomalyKind::AmplitudeBurst => {
            let gain = rng.random_range(3.0..4.0);
            for (t, v) in values.iter_mut().enumerate().take(end + 1).skip(begin) {
                *v += (gain - 1.0) * wave(t as f64, 1.0);
            }
        }
        AnomalyKind::FrequencyShift => {
            let mult = rng.random_range(4.0..6.0);
            for (t, v) in values.iter_mut().enumerate().take(end + 1).skip(begin) {
                *v += wave(t as f64, mult) - wave(t as f64, 1.0);
            }
        }
    }

    TimeSeriesRecord::new(format!("{name}_{}", kind.tag()), values, spec.train_end, begin, end)
        .expect("generated record satisfies its invariants")
}

/// `count` series cycling through every anomaly kind, each with its own
/// seed derived from `seed`.
pub fn anomaly_suite(count: usize, seed: u64, spec: &SynthSpec) -> Vec<TimeSeriesRecord> {
    (0..count)
        .map(|i| {
            let kind = AnomalyKind::ALL[i % AnomalyKind::ALL.len()];
            let series_seed = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(i as u64);
            sine_with_anomaly(&format!("{i:03}_synth"), series_seed, kind, spec)
        })
        .collect()
}
