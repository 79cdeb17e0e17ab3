// SPDX-License-Identifier: MIT OR Apache-2.0

//! UCR-format series parsing and sliding-window generation.
//!
//! Archive files carry their labels in the filename:
//! `<name>_<train_end>_<anomaly_begin>_<anomaly_end>.txt`, with the body a
//! whitespace-separated list of reals. All indices are zero-based time steps.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed filename {0:?}: expected `<name>_<train_end>_<begin>_<end>.<ext>`")]
    MalformedFilename(String),
    #[error("non-numeric token {token:?} at position {position}")]
    NonNumericToken { token: String, position: usize },
    #[error("non-finite value {value} at position {position}")]
    NonFiniteValue { value: f64, position: usize },
    #[error("train_end {train_end} must satisfy 0 < train_end < length {length}")]
    TrainEndOutOfRange { train_end: usize, length: usize },
    #[error("anomaly begins at {begin}, before train_end {train_end}")]
    AnomalyPrecedesTrainEnd { begin: usize, train_end: usize },
    #[error("anomaly interval [{begin}, {end}] is inverted")]
    InvertedAnomaly { begin: usize, end: usize },
    #[error("anomaly end {end} lies beyond the series (length {length})")]
    AnomalyPastEnd { end: usize, length: usize },
    #[error("{region} region is shorter than the window length {window_length}")]
    EmptyRegion { region: Region, window_length: usize },
    #[error("invalid window spec: {0}")]
    InvalidWindowSpec(String),
}

/// One univariate series with its train/test split and labeled anomaly interval.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesRecord {
    pub name: String,
    pub values: Vec<f64>,
    /// Exclusive end of the training region.
    pub train_end: usize,
    pub anomaly_begin: usize,
    /// Inclusive end of the anomaly interval.
    pub anomaly_end: usize,
}

impl TimeSeriesRecord {
    pub fn new(
        name: impl Into<String>,
        values: Vec<f64>,
        train_end: usize,
        anomaly_begin: usize,
        anomaly_end: usize,
    ) -> Result<Self, IngestError> {
        let record = Self {
            name: name.into(),
            values,
            train_end,
            anomaly_begin,
            anomaly_end,
        };
        record.validate()?;
        Ok(record)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        let length = self.len();
        if let Some((position, &value)) = self.values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(IngestError::NonFiniteValue { value, position });
        }
        if self.train_end == 0 || self.train_end >= length {
            return Err(IngestError::TrainEndOutOfRange {
                train_end: self.train_end,
                length,
            });
        }
        if self.anomaly_begin < self.train_end {
            return Err(IngestError::AnomalyPrecedesTrainEnd {
                begin: self.anomaly_begin,
                train_end: self.train_end,
            });
        }
        if self.anomaly_end < self.anomaly_begin {
            return Err(IngestError::InvertedAnomaly {
                begin: self.anomaly_begin,
                end: self.anomaly_end,
            });
        }
        if self.anomaly_end >= length {
            return Err(IngestError::AnomalyPastEnd {
                end: self.anomaly_end,
                length,
            });
        }
        Ok(())
    }

    /// Ground-truth label of time step `t`.
    pub fn is_anomalous(&self, t: usize) -> bool {
        (self.anomaly_begin..=self.anomaly_end).contains(&t)
    }

    /// Archive filename that encodes this record's labels.
    pub fn file_name(&self) -> String {
        format!(
            "{}_{}_{}_{}.txt",
            self.name, self.train_end, self.anomaly_begin, self.anomaly_end
        )
    }

    /// Serialize the body in the archive's one-value-per-line layout.
    pub fn to_ucr_string(&self) -> String {
        let mut out = String::with_capacity(self.values.len() * 12);
        for v in &self.values {
            // `Display` for f64 is shortest-round-trip, so re-parsing is exact.
            out.push_str(&v.to_string());
            out.push('\n');
        }
        out
    }

    /// Writes `<dir>/<file_name()>`, creating `dir` if needed, and returns the path.
    pub fn write_ucr(&self, dir: &Path) -> Result<PathBuf, IngestError> {
        let path = dir.join(self.file_name());
        fs::create_dir_all(dir).map_err(|source| IngestError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        fs::write(&path, self.to_ucr_string()).map_err(|source| IngestError::Io {
            path: path.clone(),
            source,
        })?;
        Ok(path)
    }

    pub fn manifest(&self, source: Option<&Path>) -> RecordManifest {
        RecordManifest {
            name: self.name.clone(),
            length: self.len(),
            train_end: self.train_end,
            anomaly_begin: self.anomaly_begin,
            anomaly_end: self.anomaly_end,
            source: source.map(|p| p.display().to_string()),
        }
    }
}

/// JSON bookkeeping entry for a parsed record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordManifest {
    pub name: String,
    #[serde(rename = "T")]
    pub length: usize,
    pub train_end: usize,
    #[serde(rename = "a")]
    pub anomaly_begin: usize,
    #[serde(rename = "b")]
    pub anomaly_end: usize,
    pub source: Option<String>,
}

/// Splits `<name>_<train_end>_<a>_<b>.<ext>` into its parts.
pub fn parse_ucr_filename(file_name: &str) -> Result<(String, usize, usize, usize), IngestError> {
    let malformed = || IngestError::MalformedFilename(file_name.to_string());
    let stem = match file_name.rsplit_once('.') {
        Some((stem, _ext)) => stem,
        None => file_name,
    };
    let mut parts = stem.rsplitn(4, '_');
    let mut next_index = || -> Result<usize, IngestError> {
        parts
            .next()
            .filter(|s| !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit()))
            .and_then(|s| s.parse().ok())
            .ok_or_else(malformed)
    };
    let end = next_index()?;
    let begin = next_index()?;
    let train_end = next_index()?;
    let name = parts.next().unwrap_or("").to_string();
    Ok((name, train_end, begin, end))
}

/// Parses whitespace- or newline-separated reals.
pub fn parse_values(body: &str) -> Result<Vec<f64>, IngestError> {
    body.split_whitespace()
        .enumerate()
        .map(|(position, token)| {
            let value: f64 = token.parse().map_err(|_| IngestError::NonNumericToken {
                token: token.to_string(),
                position,
            })?;
            if !value.is_finite() {
                return Err(IngestError::NonFiniteValue { value, position });
            }
            Ok(value)
        })
        .collect()
}

pub fn parse_ucr_file(path: &Path) -> Result<TimeSeriesRecord, IngestError> {
    let file_name = path
        .file_name()
        .and_then(|f| f.to_str())
        .ok_or_else(|| IngestError::MalformedFilename(path.display().to_string()))?;
    let (name, train_end, begin, end) = parse_ucr_filename(file_name)?;
    let body = fs::read_to_string(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let values = parse_values(&body)?;
    TimeSeriesRecord::new(name, values, train_end, begin, end)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    Train,
    Test,
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Region::Train => "train",
            Region::Test => "test",
        })
    }
}

/// Sliding-window geometry. `reference_patch` is 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub window_length: usize,
    pub stride: usize,
    pub patch_length: usize,
    pub reference_patch: usize,
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self::center(512, 8)
    }
}

impl WindowSpec {
    /// Reference patch at the temporal center (`N / 2`).
    pub fn center(window_length: usize, patch_length: usize) -> Self {
        let patches = window_length / patch_length.max(1);
        Self {
            window_length,
            stride: 1,
            patch_length,
            reference_patch: (patches / 2).max(1),
        }
    }

    /// Reference patch at the final position (`N`).
    pub fn last(window_length: usize, patch_length: usize) -> Self {
        Self {
            window_length,
            stride: 1,
            patch_length,
            reference_patch: window_length / patch_length.max(1),
        }
    }

    pub fn with_reference_patch(mut self, reference_patch: usize) -> Self {
        self.reference_patch = reference_patch;
        self
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    pub fn num_patches(&self) -> usize {
        self.window_length / self.patch_length
    }

    /// Offset of the reference time step from the window start: the last
    /// step covered by the reference patch.
    pub fn reference_offset(&self) -> usize {
        self.reference_patch * self.patch_length - 1
    }

    /// Range of the reference patch relative to the window start.
    pub fn reference_patch_range(&self) -> std::ops::Range<usize> {
        let start = (self.reference_patch - 1) * self.patch_length;
        start..start + self.patch_length
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        let invalid = |msg: String| Err(IngestError::InvalidWindowSpec(msg));
        if self.window_length == 0 || self.patch_length == 0 || self.stride == 0 {
            return invalid(format!(
                "window_length, patch_length and stride must be positive (got {}, {}, {})",
                self.window_length, self.patch_length, self.stride
            ));
        }
        if !self.window_length.is_multiple_of(self.patch_length) {
            return invalid(format!(
                "window_length {} is not a multiple of patch_length {}",
                self.window_length, self.patch_length
            ));
        }
        if self.reference_patch == 0 || self.reference_patch > self.num_patches() {
            return invalid(format!(
                "reference_patch {} outside [1, {}]",
                self.reference_patch,
                self.num_patches()
            ));
        }
        Ok(())
    }
}

/// A subsequence borrowed from its series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window<'a> {
    pub reference_time: usize,
    pub window_start: usize,
    pub values: &'a [f64],
}

/// Every window of `region` in ascending reference-time order.
///
/// Training windows lie entirely inside `[0, train_end)`. Test windows are
/// those whose reference time is at or after `train_end`; their left extent
/// may reach back into the training region.
pub fn generate_windows<'a>(
    record: &'a TimeSeriesRecord,
    spec: &WindowSpec,
    region: Region,
) -> Result<Vec<Window<'a>>, IngestError> {
    spec.validate()?;
    let len = spec.window_length;
    let offset = spec.reference_offset();
    let empty = || IngestError::EmptyRegion {
        region,
        window_length: len,
    };
    let (first_start, last_start) = match region {
        Region::Train => {
            if record.train_end < len {
                return Err(empty());
            }
            (0, record.train_end - len)
        }
        Region::Test => {
            if record.len() < len {
                return Err(empty());
            }
            (record.train_end.saturating_sub(offset), record.len() - len)
        }
    };
    if first_start > last_start {
        return Err(empty());
    }
    Ok((first_start..=last_start)
        .step_by(spec.stride)
        .map(|start| Window {
            reference_time: start + offset,
            window_start: start,
            values: &record.values[start..start + len],
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn record(values: Vec<f64>, train_end: usize) -> TimeSeriesRecord {
        // Bypasses validation so edge geometries (train_end == T) can be exercised.
        TimeSeriesRecord {
            name: "t".into(),
            values,
            train_end,
            anomaly_begin: train_end,
            anomaly_end: train_end,
        }
    }

    #[test]
    fn filename_decomposition() {
        let (name, t, a, b) = parse_ucr_filename("001_X_2500_5400_5600.txt").unwrap();
        assert_eq!((name.as_str(), t, a, b), ("001_X", 2500, 5400, 5600));
    }

    #[test]
    fn parse_full_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("001_X_2500_5400_5600.txt");
        let body: String = (0..8000).map(|i| format!("{}\n", i as f64 * 0.5)).collect();
        fs::write(&path, body).unwrap();
        let rec = parse_ucr_file(&path).unwrap();
        assert_eq!(rec.len(), 8000);
        assert_eq!((rec.train_end, rec.anomaly_begin, rec.anomaly_end), (2500, 5400, 5600));
        assert_eq!(rec.values[3], 1.5);
    }

    #[test]
    fn minimal_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x_3_5_6.txt");
        fs::write(&path, "1 2 3 4 5 6 7 8").unwrap();
        let rec = parse_ucr_file(&path).unwrap();
        assert_eq!(rec.len(), 8);
        assert_eq!((rec.train_end, rec.anomaly_begin, rec.anomaly_end), (3, 5, 6));
        assert_eq!(rec.name, "x");
    }

    #[test]
    fn anomaly_before_train_end() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x_10_5_6.txt");
        fs::write(&path, "0 ".repeat(20)).unwrap();
        assert!(matches!(
            parse_ucr_file(&path),
            Err(IngestError::AnomalyPrecedesTrainEnd {
                begin: 5,
                train_end: 10
            })
        ));
    }

    #[test]
    fn malformed_names_and_bodies() {
        for bad in ["x_5_6.txt", "plain.txt", "a_b_1_2_x.txt", "x_1_-2_3.txt"] {
            assert!(
                matches!(parse_ucr_filename(bad), Err(IngestError::MalformedFilename(_))),
                "{bad}"
            );
        }
        assert!(matches!(
            parse_values("1 2 abc 4"),
            Err(IngestError::NonNumericToken { position: 2, .. })
        ));
        assert!(matches!(
            parse_values("1\nNaN\n"),
            Err(IngestError::NonFiniteValue { position: 1, .. })
        ));
        assert!(matches!(parse_values("inf"), Err(IngestError::NonFiniteValue { .. })));
    }

    #[test]
    fn record_invariants() {
        let v = vec![0.0; 10];
        assert!(matches!(
            TimeSeriesRecord::new("r", v.clone(), 0, 5, 6),
            Err(IngestError::TrainEndOutOfRange { .. })
        ));
        assert!(matches!(
            TimeSeriesRecord::new("r", v.clone(), 3, 6, 5),
            Err(IngestError::InvertedAnomaly { .. })
        ));
        assert!(matches!(
            TimeSeriesRecord::new("r", v.clone(), 3, 6, 10),
            Err(IngestError::AnomalyPastEnd { .. })
        ));
        assert!(TimeSeriesRecord::new("r", v, 3, 3, 9).is_ok());
    }

    #[test]
    fn train_windows_last_aligned() {
        let rec = record((0..10).map(f64::from).collect(), 10);
        let spec = WindowSpec {
            window_length: 4,
            stride: 1,
            patch_length: 2,
            reference_patch: 2,
        };
        let w = generate_windows(&rec, &spec, Region::Train).unwrap();
        assert_eq!(w.len(), 7);
        let times: Vec<_> = w.iter().map(|w| w.reference_time).collect();
        assert_eq!(times, (3..=9).collect::<Vec<_>>());
        assert_eq!(w[0].values, &[0.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn test_windows_first_patch_reference() {
        // Hand enumeration: starts 0..=6, reference = start + 1, keep reference >= 4.
        let rec = record((0..10).map(f64::from).collect(), 4);
        let spec = WindowSpec {
            window_length: 4,
            stride: 1,
            patch_length: 2,
            reference_patch: 1,
        };
        let w = generate_windows(&rec, &spec, Region::Test).unwrap();
        let starts: Vec<_> = w.iter().map(|w| w.window_start).collect();
        let times: Vec<_> = w.iter().map(|w| w.reference_time).collect();
        assert_eq!(starts, vec![3, 4, 5, 6]);
        assert_eq!(times, vec![4, 5, 6, 7]);
    }

    #[test]
    fn short_train_region() {
        let rec = record(vec![0.0; 10], 3);
        let spec = WindowSpec {
            window_length: 4,
            stride: 1,
            patch_length: 2,
            reference_patch: 2,
        };
        assert!(matches!(
            generate_windows(&rec, &spec, Region::Train),
            Err(IngestError::EmptyRegion {
                region: Region::Train,
                ..
            })
        ));
        let short = record(vec![0.0; 3], 1);
        assert!(matches!(
            generate_windows(&short, &spec, Region::Test),
            Err(IngestError::EmptyRegion {
                region: Region::Test,
                ..
            })
        ));
    }

    #[test]
    fn presets() {
        assert_eq!(WindowSpec::center(512, 8).reference_patch, 32);
        assert_eq!(WindowSpec::last(512, 8).reference_patch, 64);
        assert_eq!(WindowSpec::last(512, 8).reference_offset(), 511);
        assert!(WindowSpec::center(500, 8).validate().is_err());
    }

    #[test]
    fn stride_spacing() {
        let rec = record(vec![0.0; 50], 30);
        let spec = WindowSpec::last(8, 2).with_stride(3);
        let w = generate_windows(&rec, &spec, Region::Train).unwrap();
        assert!(w.windows(2).all(|p| p[1].reference_time - p[0].reference_time == 3));
        assert!(w.iter().all(|w| w.window_start + 8 <= 30));
    }

    proptest! {
        #[test]
        fn window_geometry(
            patches in 1usize..12,
            patch_length in 1usize..6,
            pick in 0usize..100,
            extra in 0usize..40,
            split in 0usize..40,
        ) {
            let window_length = patches * patch_length;
            let reference_patch = 1 + pick % patches;
            let spec = WindowSpec { window_length, stride: 1, patch_length, reference_patch };
            let train_end = window_length + split;
            let rec = record(vec![1.0; train_end + extra + 1], train_end);

            let train = generate_windows(&rec, &spec, Region::Train).unwrap();
            prop_assert_eq!(train.len(), train_end - window_length + 1);
            for w in &train {
                prop_assert_eq!(w.reference_time, w.window_start + reference_patch * patch_length - 1);
                prop_assert!(w.window_start + window_length <= train_end);
            }

            if let Ok(test) = generate_windows(&rec, &spec, Region::Test) {
                for w in &test {
                    prop_assert_eq!(w.reference_time, w.window_start + reference_patch * patch_length - 1);
                    prop_assert!(w.reference_time >= train_end);
                    prop_assert!(w.window_start + window_length <= rec.len());
                }
                prop_assert!(test.windows(2).all(|p| p[0].reference_time + 1 == p[1].reference_time));
            }
        }

        #[test]
        fn ucr_round_trip(values in proptest::collection::vec(-1e12f64..1e12, 12..40)) {
            let n = values.len();
            let rec = TimeSeriesRecord::new("rt_case", values, 4, 5, n - 1).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let path = rec.write_ucr(dir.path()).unwrap();
            prop_assert_eq!(parse_ucr_file(&path).unwrap(), rec);
        }
    }
}
