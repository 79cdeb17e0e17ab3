// SPDX-License-Identifier: MIT OR Apache-2.0

//! Run configuration: a flat `key = value` document with a fixed schema.
//!
//! Blank lines and `#` comments are ignored. Unknown keys are rejected.
//! Every key can be overridden with `--set key=value`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::hash::Hasher;
use std::path::{Path, PathBuf};

use thiserror::Error;
use tsmem_core::eval::EvalConfig;
use tsmem_core::scoring::{DEFAULT_DENSITY_NEIGHBORS, DEFAULT_RIDGE};
use tsmem_core::{DistanceSpec, Neighborhood, WindowSpec};

pub const ENV_WORKERS: &str = "TSMEM_WORKERS";
pub const ENV_OUTPUT_DIR: &str = "TSMEM_OUTPUT_DIR";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("unknown config key {0:?}")]
    UnknownKey(String),
    #[error("invalid value {value:?} for {key}: {reason}")]
    InvalidValue { key: String, value: String, reason: String },
    #[error("no datasets matched {0:?}")]
    NoDatasets(String),
    #[error("bad dataset pattern {pattern:?}: {reason}")]
    BadPattern { pattern: String, reason: String },
    #[error("path does not exist: {0}")]
    MissingPath(PathBuf),
    #[error("failed to read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ReferencePosition {
    Center,
    Last,
    Patch(usize),
}

impl ReferencePosition {
    pub fn resolve(&self, window_length: usize, patch_length: usize) -> WindowSpec {
        match self {
            ReferencePosition::Center => WindowSpec::center(window_length, patch_length),
            ReferencePosition::Last => WindowSpec::last(window_length, patch_length),
            ReferencePosition::Patch(p) => WindowSpec::center(window_length, patch_length).with_reference_patch(*p),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EmbeddingSource {
    Synthetic,
    Trep,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub datasets: String,
    pub window_length: usize,
    pub patch_length: usize,
    pub stride: usize,
    pub reference_patch: ReferencePosition,
    pub source: EmbeddingSource,
    pub trep_dir: Option<PathBuf>,
    pub d_model: usize,
    pub layer: u32,
    pub coreset: Option<usize>,
    pub seed: u64,
    pub distance: String,
    pub density_neighbors: usize,
    pub density_neighborhood: Neighborhood,
    pub ridge: f64,
    pub ttamb: bool,
    pub novelty_q: f64,
    pub capacity_limit: Option<usize>,
    pub tolerance: u64,
    pub alphas: Vec<f64>,
    pub output_dir: PathBuf,
    pub workers: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            datasets: String::new(),
            window_length: 512,
            patch_length: 8,
            stride: 1,
            reference_patch: ReferencePosition::Center,
            source: EmbeddingSource::Synthetic,
            trep_dir: None,
            d_model: 1024,
            layer: 16,
            coreset: None,
            seed: 0,
            distance: "euclidean".into(),
            density_neighbors: DEFAULT_DENSITY_NEIGHBORS,
            density_neighborhood: Neighborhood::IncludeNearest,
            ridge: DEFAULT_RIDGE,
            ttamb: true,
            novelty_q: 80.0,
            capacity_limit: None,
            tolerance: 100,
            alphas: vec![0.03, 0.10],
            output_dir: PathBuf::from("runs"),
            workers: 0,
        }
    }
}

pub const KEYS: &[&str] = &[
    "datasets",
    "window_length",
    "patch_length",
    "stride",
    "reference_patch",
    "source",
    "trep_dir",
    "d_model",
    "layer",
    "coreset",
    "seed",
    "distance",
    "density_neighbors",
    "density_neighborhood",
    "ridge",
    "ttamb",
    "novelty_q",
    "capacity_limit",
    "tolerance",
    "alphas",
    "output_dir",
    "workers",
];

fn invalid(key: &str, value: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::InvalidValue {
        key: key.into(),
        value: value.into(),
        reason: reason.into(),
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| invalid(key, value, e.to_string()))
}

fn parse_optional(key: &str, value: &str, none_word: &str) -> Result<Option<usize>, ConfigError> {
    if value.eq_ignore_ascii_case(none_word) {
        Ok(None)
    } else {
        parse_num(key, value).map(Some)
    }
}

fn parse_switch(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value {
        "on" | "true" | "yes" | "1" => Ok(true),
        "off" | "false" | "no" | "0" => Ok(false),
        _ => Err(invalid(key, value, "expected on or off")),
    }
}

impl RunConfig {
    pub fn from_text(text: &str) -> Result<Self, ConfigError> {
        let mut config = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: i + 1,
                text: raw.to_string(),
            })?;
            config.set(key.trim(), value.trim())?;
        }
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_text(&text)
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<(), ConfigError> {
        let (key, value) = assignment.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line: 0,
            text: assignment.to_string(),
        })?;
        self.set(key.trim(), value.trim())
    }

    /// Applies the environment overrides for worker count and output directory.
    pub fn apply_env(&mut self) -> Result<(), ConfigError> {
        if let Ok(v) = std::env::var(ENV_WORKERS) {
            self.set("workers", &v)?;
        }
        if let Ok(v) = std::env::var(ENV_OUTPUT_DIR) {
            self.set("output_dir", &v)?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "datasets" => self.datasets = value.to_string(),
            "window_length" => self.window_length = parse_num(key, value)?,
            "patch_length" => self.patch_length = parse_num(key, value)?,
            "stride" => self.stride = parse_num(key, value)?,
            "reference_patch" => {
                self.reference_patch = match value {
                    "center" => ReferencePosition::Center,
                    "last" => ReferencePosition::Last,
                    v => ReferencePosition::Patch(parse_num(key, v)?),
                }
            }
            "source" => {
                self.source = match value {
                    "synthetic" => EmbeddingSource::Synthetic,
                    "trep" => EmbeddingSource::Trep,
                    _ => return Err(invalid(key, value, "expected synthetic or trep")),
                }
            }
            "trep_dir" => self.trep_dir = (!value.is_empty()).then(|| PathBuf::from(value)),
            "d_model" => self.d_model = parse_num(key, value)?,
            "layer" => self.layer = parse_num(key, value)?,
            "coreset" => self.coreset = parse_optional(key, value, "unbounded")?,
            "seed" => self.seed = parse_num(key, value)?,
            "distance" => match value {
                "euclidean" | "mahalanobis" | "density" => self.distance = value.to_string(),
                _ => return Err(invalid(key, value, "expected euclidean, mahalanobis or density")),
            },
            "density_neighbors" => self.density_neighbors = parse_num(key, value)?,
            "density_neighborhood" => {
                self.density_neighborhood = match value {
                    "include" => Neighborhood::IncludeNearest,
                    "exclude" => Neighborhood::ExcludeNearest,
                    _ => return Err(invalid(key, value, "expected include or exclude")),
                }
            }
            "ridge" => self.ridge = parse_num(key, value)?,
            "ttamb" => self.ttamb = parse_switch(key, value)?,
            "novelty_q" => self.novelty_q = parse_num(key, value)?,
            "capacity_limit" => self.capacity_limit = parse_optional(key, value, "none")?,
            "tolerance" => self.tolerance = parse_num(key, value)?,
            "alphas" => {
                self.alphas = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| parse_num(key, s))
                    .collect::<Result<_, _>>()?
            }
            "output_dir" => self.output_dir = PathBuf::from(value),
            "workers" => self.workers = parse_num(key, value)?,
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "datasets" => self.datasets.clone(),
            "window_length" => self.window_length.to_string(),
            "patch_length" => self.patch_length.to_string(),
            "stride" => self.stride.to_string(),
            "reference_patch" => self.window_spec().reference_patch.to_string(),
            "source" => match self.source {
                EmbeddingSource::Synthetic => "synthetic".into(),
                EmbeddingSource::Trep => "trep".into(),
            },
            "trep_dir" => self
                .trep_dir
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default(),
            "d_model" => self.d_model.to_string(),
            "layer" => self.layer.to_string(),
            "coreset" => self.coreset.map_or("unbounded".into(), |c| c.to_string()),
            "seed" => self.seed.to_string(),
            "distance" => self.distance.clone(),
            "density_neighbors" => self.density_neighbors.to_string(),
            "density_neighborhood" => match self.density_neighborhood {
                Neighborhood::IncludeNearest => "include".into(),
                Neighborhood::ExcludeNearest => "exclude".into(),
            },
            "ridge" => self.ridge.to_string(),
            "ttamb" => if self.ttamb { "on" } else { "off" }.into(),
            "novelty_q" => self.novelty_q.to_string(),
            "capacity_limit" => self.capacity_limit.map_or("none".into(), |c| c.to_string()),
            "tolerance" => self.tolerance.to_string(),
            "alphas" => self.alphas.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(","),
            "output_dir" => self.output_dir.display().to_string(),
            "workers" => self.workers.to_string(),
            _ => return None,
        })
    }

    /// Fully resolved configuration, presets expanded.
    pub fn echo(&self) -> BTreeMap<String, String> {
        KEYS.iter()
            .map(|&k| (k.to_string(), self.get(k).expect("every schema key resolves")))
            .collect()
    }

    /// Canonical text form; parsing it back yields the same configuration.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for &k in KEYS {
            let _ = writeln!(out, "{k} = {}", self.get(k).unwrap_or_default());
        }
        out
    }

    pub fn window_spec(&self) -> WindowSpec {
        self.reference_patch
            .resolve(self.window_length, self.patch_length)
            .with_stride(self.stride)
    }

    pub fn distance_spec(&self) -> DistanceSpec {
        match self.distance.as_str() {
            "mahalanobis" => DistanceSpec::Mahalanobis { ridge: self.ridge },
            "density" => DistanceSpec::Density {
                neighbors: self.density_neighbors,
                neighborhood: self.density_neighborhood,
            },
            _ => DistanceSpec::Euclidean,
        }
    }

    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            tolerance: self.tolerance,
            alphas: self.alphas.clone(),
        }
    }

    /// Checks value ranges and that referenced paths exist.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.window_spec().validate().map_err(|e| {
            let spec = format!(
                "window_length={}, patch_length={}, reference_patch={}",
                self.window_length,
                self.patch_length,
                self.get("reference_patch").unwrap_or_default()
            );
            invalid("window", &spec, e.to_string())
        })?;
        self.distance_spec()
            .validate()
            .map_err(|e| invalid("distance", &self.distance, e.to_string()))?;
        if self.d_model == 0 {
            return Err(invalid("d_model", "0", "must be positive"));
        }
        if self.layer == 0 {
            return Err(invalid("layer", "0", "layers are 1-based"));
        }
        if self.coreset == Some(0) {
            return Err(invalid("coreset", "0", "must be positive or `unbounded`"));
        }
        if !(self.novelty_q > 0.0 && self.novelty_q <= 100.0) {
            return Err(invalid("novelty_q", &self.novelty_q.to_string(), "outside (0, 100]"));
        }
        if let Some(a) = self.alphas.iter().find(|a| !(**a > 0.0 && **a <= 1.0)) {
            return Err(invalid("alphas", &a.to_string(), "outside (0, 1]"));
        }
        if self.source == EmbeddingSource::Trep {
            match &self.trep_dir {
                None => return Err(invalid("trep_dir", "", "required when source = trep")),
                Some(dir) if !dir.is_dir() => return Err(ConfigError::MissingPath(dir.clone())),
                Some(_) => {}
            }
        }
        Ok(())
    }

    /// Expands the comma-separated dataset patterns, sorted and deduplicated.
    pub fn resolve_datasets(&self) -> Result<Vec<PathBuf>, ConfigError> {
        let mut paths = Vec::new();
        for pattern in self.datasets.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let entries = glob::glob(pattern).map_err(|e| ConfigError::BadPattern {
                pattern: pattern.to_string(),
                reason: e.to_string(),
            })?;
            for entry in entries {
                let path = entry.map_err(|e| ConfigError::BadPattern {
                    pattern: pattern.to_string(),
                    reason: e.to_string(),
                })?;
                if path.is_file() {
                    paths.push(path);
                }
            }
        }
        paths.sort();
        paths.dedup();
        if paths.is_empty() {
            return Err(ConfigError::NoDatasets(self.datasets.clone()));
        }
        Ok(paths)
    }
}

/// Per-dataset seed: master seed XOR the FNV-1a hash of the dataset name.
pub fn dataset_seed(master: u64, name: &str) -> u64 {
    let mut hasher = fnv::FnvHasher::default();
    hasher.write(name.as_bytes());
    master ^ hasher.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_echo() {
        let text = "\
# experiment
datasets = data/*.txt
reference_patch = last
coreset = 1000
distance = density   # b defaults to 5
ttamb = off
alphas = 0.03, 0.1
";
        let c = RunConfig::from_text(text).unwrap();
        assert_eq!(c.window_spec().reference_patch, 64);
        assert_eq!(c.coreset, Some(1000));
        assert!(!c.ttamb);
        assert_eq!(c.alphas, vec![0.03, 0.1]);
        assert_eq!(
            c.distance_spec(),
            DistanceSpec::Density {
                neighbors: 5,
                neighborhood: Neighborhood::IncludeNearest
            }
        );
        let echo = c.echo();
        assert_eq!(echo["reference_patch"], "64");
        assert_eq!(echo.len(), KEYS.len());
    }

    #[test]
    fn text_round_trip() {
        let mut c = RunConfig::default();
        c.apply_override("coreset=500").unwrap();
        c.apply_override("capacity_limit = 9000").unwrap();
        c.apply_override("source=trep").unwrap();
        c.apply_override("trep_dir=/tmp/x").unwrap();
        let back = RunConfig::from_text(&c.to_text()).unwrap();
        assert_eq!(back.to_text(), c.to_text());
        assert_eq!(back.capacity_limit, Some(9000));
    }

    #[test]
    fn presets_expand() {
        let mut c = RunConfig::default();
        assert_eq!(c.window_spec().reference_patch, 32);
        c.set("reference_patch", "last").unwrap();
        assert_eq!(c.window_spec().reference_patch, 64);
        c.set("reference_patch", "7").unwrap();
        assert_eq!(c.window_spec().reference_patch, 7);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            RunConfig::from_text("bogus = 1"),
            Err(ConfigError::UnknownKey(_))
        ));
        assert!(matches!(
            RunConfig::from_text("just words"),
            Err(ConfigError::Syntax { line: 1, .. })
        ));
        assert!(matches!(
            RunConfig::from_text("distance = cosine"),
            Err(ConfigError::InvalidValue { .. })
        ));
        let mut c = RunConfig::default();
        c.set("reference_patch", "65").unwrap();
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.set("source", "trep").unwrap();
        assert!(c.validate().is_err());
        c.set("trep_dir", "/definitely/not/here").unwrap();
        assert!(matches!(c.validate(), Err(ConfigError::MissingPath(_))));
    }

    #[test]
    fn empty_glob_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = RunConfig::default();
        c.set("datasets", &format!("{}/*.txt", dir.path().display())).unwrap();
        assert!(matches!(c.resolve_datasets(), Err(ConfigError::NoDatasets(_))));
        std::fs::write(dir.path().join("b_1_2_3.txt"), "1").unwrap();
        std::fs::write(dir.path().join("a_1_2_3.txt"), "1").unwrap();
        let found = c.resolve_datasets().unwrap();
        assert_eq!(found.len(), 2);
        assert!(found[0] < found[1]);
    }

    #[test]
    fn seeds_are_stable() {
        assert_eq!(dataset_seed(0, "abc"), dataset_seed(0, "abc"));
        assert_ne!(dataset_seed(0, "abc"), dataset_seed(0, "abd"));
        assert_eq!(dataset_seed(5, "abc") ^ dataset_seed(0, "abc"), 5);
        // FNV-1a 64 of "a".
        assert_eq!(dataset_seed(0, "a"), 0xaf63dc4c8601ec8c);
    }
}
