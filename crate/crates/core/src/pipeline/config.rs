//! Run configuration, read from TOML.
//!
//! Relative input paths and the output directory resolve against the
//! directory holding the configuration file.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::cluster::{ApParams, GmmParams, Linkage};
use crate::ingest::{MarketSchema, SegmentSchema};
use crate::shares::{ODKey, QuarterSpan, SelectionCriteria};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub input: InputConfig,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub span: QuarterSpan,
    #[serde(default)]
    pub selection: SelectionCriteria,
    #[serde(default)]
    pub aggregation: AggregationConfig,
    #[serde(default)]
    pub distance: DistanceConfig,
    #[serde(default)]
    pub figures: FigureConfig,
    pub methods: Vec<MethodSpec>,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputConfig {
    pub market: PathBuf,
    pub categories: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segment: Option<PathBuf>,
    /// Single-character field delimiter shared by all input files.
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
    /// Skip malformed rows (and report them) instead of failing.
    #[serde(default = "yes")]
    pub lenient: bool,
    #[serde(default)]
    pub market_schema: MarketSchema,
    #[serde(default)]
    pub segment_schema: SegmentSchema,
}

fn default_delimiter() -> char {
    ','
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AggregationConfig {
    /// Cluster calendar-year series instead of quarterly ones.
    pub yearly: bool,
    pub drop_partial_final_year: bool,
}

impl Default for AggregationConfig {
    fn default() -> Self {
        Self {
            yearly: true,
            drop_partial_final_year: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistanceConfig {
    /// Divide DTW matrices by their maximum before linkage.
    pub normalize_by_max: bool,
    /// Sakoe-Chiba band half-width for DTW; unconstrained when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dtw_window: Option<usize>,
    /// Also write each pairwise matrix as a text sidecar under `distances/`.
    pub write_sidecars: bool,
}

impl Default for DistanceConfig {
    fn default() -> Self {
        Self {
            normalize_by_max: true,
            dtw_window: None,
            write_sidecars: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FigureConfig {
    pub enabled: bool,
    /// Pairs per cluster in the representatives figure.
    pub top_n: usize,
    /// Pairs drawn in the accent style wherever they appear.
    pub highlight: Vec<ODKey>,
    /// Cluster shown in the original-magnitude overlay; every cluster when
    /// absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub overlay_cluster: Option<usize>,
}

impl Default for FigureConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            top_n: 5,
            highlight: Vec::new(),
            overlay_cluster: None,
        }
    }
}

/// One clustering to run. `normalize` picks standardized (z-score) series
/// over raw shares; `seed` drives every random choice of the method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MethodSpec {
    HcDtw {
        k: usize,
        normalize: bool,
        #[serde(default)]
        seed: u64,
        #[serde(default = "ward")]
        linkage: Linkage,
        /// Cut at this height instead of at exactly `k` clusters.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cut_height: Option<f64>,
    },
    Kshape {
        k: usize,
        normalize: bool,
        #[serde(default)]
        seed: u64,
        #[serde(default = "kshape_max_iter")]
        max_iter: usize,
        #[serde(default = "kshape_n_init")]
        n_init: usize,
    },
    Som {
        rows: usize,
        cols: usize,
        normalize: bool,
        #[serde(default)]
        seed: u64,
        #[serde(default = "som_epochs")]
        epochs: usize,
        #[serde(default = "som_learning_rate")]
        learning_rate: f64,
        #[serde(default = "som_final_radius")]
        final_radius: f64,
    },
    SbdAp {
        normalize: bool,
        #[serde(default)]
        seed: u64,
        #[serde(default = "ap_damping")]
        damping: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        preference: Option<f64>,
        #[serde(default = "ap_max_iter")]
        max_iter: usize,
        #[serde(default = "ap_convergence_iter")]
        convergence_iter: usize,
        /// Merge the exemplars down to this many clusters by average
        /// linkage on SBD.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        consolidate_to: Option<usize>,
    },
    DbaGmm {
        k: usize,
        normalize: bool,
        #[serde(default)]
        seed: u64,
        /// Run k-means at this larger count first and merge down to `k`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        initial_k: Option<usize>,
        #[serde(default = "kmeans_max_iter")]
        kmeans_max_iter: usize,
        #[serde(default)]
        gmm: GmmParams,
    },
}

fn ward() -> Linkage {
    Linkage::Ward
}
fn kshape_max_iter() -> usize {
    100
}
fn kshape_n_init() -> usize {
    10
}
fn som_epochs() -> usize {
    1000
}
fn som_learning_rate() -> f64 {
    0.5
}
fn som_final_radius() -> f64 {
    crate::cluster::FINAL_RADIUS
}
fn ap_damping() -> f64 {
    ApParams::default().damping
}
fn ap_max_iter() -> usize {
    ApParams::default().max_iter
}
fn ap_convergence_iter() -> usize {
    ApParams::default().convergence_iter
}
fn kmeans_max_iter() -> usize {
    50
}

impl MethodSpec {
    pub fn normalize(&self) -> bool {
        match self {
            Self::HcDtw { normalize, .. }
            | Self::Kshape { normalize, .. }
            | Self::Som { normalize, .. }
            | Self::SbdAp { normalize, .. }
            | Self::DbaGmm { normalize, .. } => *normalize,
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            Self::HcDtw { seed, .. }
            | Self::Kshape { seed, .. }
            | Self::Som { seed, .. }
            | Self::SbdAp { seed, .. }
            | Self::DbaGmm { seed, .. } => *seed,
        }
    }

    pub fn set_seed(&mut self, value: u64) {
        match self {
            Self::HcDtw { seed, .. }
            | Self::Kshape { seed, .. }
            | Self::Som { seed, .. }
            | Self::SbdAp { seed, .. }
            | Self::DbaGmm { seed, .. } => *seed = value,
        }
    }

    /// Short method family name as used in the metrics table.
    pub fn family(&self) -> &'static str {
        match self {
            Self::HcDtw { .. } => "HC with DTW",
            Self::Kshape { .. } => "k-Shape",
            Self::Som { .. } => "SOM",
            Self::SbdAp { .. } => "SBD with AP",
            Self::DbaGmm { .. } => "DBA with GMM",
        }
    }

    /// Directory-safe identifier, e.g. `hc-dtw-k5-raw`.
    pub fn slug(&self) -> String {
        let space = if self.normalize() { "norm" } else { "raw" };
        let body = match self {
            Self::HcDtw { k, .. } => format!("hc-dtw-k{k}"),
            Self::Kshape { k, .. } => format!("kshape-k{k}"),
            Self::Som { rows, cols, .. } => format!("som-{rows}x{cols}"),
            Self::SbdAp { consolidate_to: None, .. } => "sbd-ap".to_string(),
            Self::SbdAp {
                consolidate_to: Some(t), ..
            } => format!("sbd-ap-hc-k{t}"),
            Self::DbaGmm { k, initial_k: None, .. } => format!("dba-gmm-k{k}"),
            Self::DbaGmm {
                k, initial_k: Some(m), ..
            } => format!("dba-gmm-k{m}-to-k{k}"),
        };
        format!("{body}-{space}")
    }

    fn validate(&self) -> Result<(), String> {
        match self {
            Self::HcDtw { k, .. } | Self::Kshape { k, .. } if *k == 0 => Err("k must be at least 1".into()),
            Self::Kshape { n_init: 0, .. } => Err("n_init must be at least 1".into()),
            Self::Som { rows, cols, .. } if rows * cols < 2 => Err("SOM grid needs at least 2 neurons".into()),
            Self::SbdAp {
                consolidate_to: Some(0), ..
            } => Err("consolidate_to must be at least 1".into()),
            Self::DbaGmm { k, initial_k, .. } => {
                if *k == 0 {
                    Err("k must be at least 1".into())
                } else if initial_k.is_some_and(|m| m < *k) {
                    Err("initial_k must not be below k".into())
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for MethodSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.slug())
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        let cfg: Self = toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Reads a config file and resolves its relative paths against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|source| PipelineError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.input.market);
        fix(&mut self.input.categories);
        if let Some(s) = self.input.segment.as_mut() {
            fix(s);
        }
        fix(&mut self.out_dir);
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.methods.is_empty() {
            return Err(PipelineError::Config("at least one method is required".into()));
        }
        if self.span.is_empty() {
            return Err(PipelineError::Config(format!(
                "span {}..{} is empty",
                self.span.start, self.span.end
            )));
        }
        if !self.input.delimiter.is_ascii() {
            return Err(PipelineError::Config("delimiter must be a single ASCII character".into()));
        }
        for (i, m) in self.methods.iter().enumerate() {
            m.validate()
                .map_err(|e| PipelineError::Config(format!("method {} ({m}): {e}", i + 1)))?;
        }
        Ok(())
    }

    /// Replaces every method's seed.
    pub fn override_seed(&mut self, seed: u64) {
        for m in &mut self.methods {
            m.set_seed(seed);
        }
    }
}
