//! Run artifacts: membership documents, the metrics table and the hashed
//! manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::MethodSpec;
use super::PipelineError;
use crate::cluster::ClusteringResult;
use crate::shares::ODKey;
use crate::validate::ValidityReport;

pub const METRICS_HEADER: [&str; 7] = ["Method", "Clusters", "Norm.", "Silhouette", "D-B", "Dunn", "C-H"];

/// Cluster assignment of one method run, keyed by O&D pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MembershipDoc {
    pub method: String,
    pub spec: MethodSpec,
    pub params: BTreeMap<String, serde_json::Value>,
    pub seed: u64,
    pub k_requested: usize,
    pub k_actual: usize,
    /// Clusters column as printed in the metrics table.
    pub clusters: String,
    pub sizes: Vec<usize>,
    pub labels: BTreeMap<ODKey, usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub centroids: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub soft: Option<BTreeMap<ODKey, Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<ValidityReport>,
}

impl MembershipDoc {
    pub fn new(spec: &MethodSpec, keys: &[ODKey], result: &ClusteringResult, scores: Option<ValidityReport>) -> Self {
        Self {
            method: result.method.name.clone(),
            spec: spec.clone(),
            params: result.method.params.clone(),
            seed: result.seed,
            k_requested: result.k_requested,
            k_actual: result.k_actual,
            clusters: clusters_label(spec, result),
            sizes: result.sizes(),
            labels: keys.iter().cloned().zip(result.labels.iter().copied()).collect(),
            centroids: result.centroids.clone(),
            soft: result
                .soft
                .as_ref()
                .map(|s| keys.iter().cloned().zip(s.iter().cloned()).collect()),
            scores,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("membership serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        serde_json::from_str(text).map_err(|e| PipelineError::Config(format!("membership document: {e}")))
    }

    /// Rebuilds the clustering result over `keys`, which must all be present.
    pub fn to_result(&self, keys: &[ODKey]) -> Result<ClusteringResult, PipelineError> {
        let missing = |k: &ODKey| PipelineError::Config(format!("membership document has no label for {k}"));
        let labels = keys
            .iter()
            .map(|k| self.labels.get(k).copied().ok_or_else(|| missing(k)))
            .collect::<Result<Vec<_>, _>>()?;
        let soft = match &self.soft {
            Some(map) => Some(
                keys.iter()
                    .map(|k| map.get(k).cloned().ok_or_else(|| missing(k)))
                    .collect::<Result<Vec<_>, _>>()?,
            ),
            None => None,
        };
        let mut method = crate::cluster::MethodInfo::new(&self.method);
        method.params = self.params.clone();
        if labels.iter().any(|&l| l >= self.k_requested.max(1)) {
            return Err(PipelineError::Config(format!(
                "membership document label exceeds k_requested = {}",
                self.k_requested
            )));
        }
        let mut r = ClusteringResult::new(method, labels, self.k_requested, self.seed);
        r.centroids = self.centroids.clone();
        r.soft = soft;
        Ok(r)
    }
}

fn with_actual(base: String, requested: usize, actual: usize) -> String {
    if actual < requested {
        format!("{base} ({actual})")
    } else {
        base
    }
}

fn param_usize(result: &ClusteringResult, key: &str) -> Option<usize> {
    result.method.params.get(key).and_then(|v| v.as_u64()).map(|v| v as usize)
}

/// Clusters column: the requested count with the actual count in
/// parentheses when fewer clusters are occupied, `R x C = N` for SOM grids
/// and `first → final` for two-step runs.
pub fn clusters_label(spec: &MethodSpec, result: &ClusteringResult) -> String {
    let actual = result.k_actual;
    match spec {
        MethodSpec::HcDtw { cut_height: Some(_), .. } => actual.to_string(),
        MethodSpec::HcDtw { k, .. } | MethodSpec::Kshape { k, .. } => with_actual(k.to_string(), *k, actual),
        MethodSpec::Som { rows, cols, .. } => {
            with_actual(format!("{rows}x{cols}={}", rows * cols), rows * cols, actual)
        }
        MethodSpec::SbdAp { consolidate_to: None, .. } => actual.to_string(),
        MethodSpec::SbdAp {
            consolidate_to: Some(t), ..
        } => {
            let first = param_usize(result, "first_pass_clusters").unwrap_or(actual);
            with_actual(format!("{first} → {t}"), *t, actual)
        }
        MethodSpec::DbaGmm { k, initial_k: None, .. } => with_actual(k.to_string(), *k, actual),
        MethodSpec::DbaGmm {
            k, initial_k: Some(m), ..
        } => with_actual(format!("{m} → {k}"), *k, actual),
    }
}

/// Fixed-precision rendering; undefined indices print as `NA`.
pub fn fmt_score(v: Option<f64>) -> String {
    match v {
        Some(x) if x.is_finite() => format!("{x:.4}"),
        _ => "NA".to_string(),
    }
}

/// One row of the metrics table.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub method: String,
    pub clusters: String,
    pub normalized: bool,
    pub report: ValidityReport,
}

pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(METRICS_HEADER).expect("in-memory write");
    for r in rows {
        w.write_record([
            r.method.clone(),
            r.clusters.clone(),
            if r.normalized { "Yes" } else { "No" }.to_string(),
            fmt_score(r.report.silhouette),
            fmt_score(r.report.davies_bouldin),
            fmt_score(r.report.dunn),
            fmt_score(r.report.calinski_harabasz),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    /// Path relative to the output directory, `/`-separated.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

/// Every file a run wrote, in write order, plus the inputs it read. Holds
/// no timestamps or absolute paths, so reruns compare byte for byte.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub inputs: Vec<ArtifactEntry>,
    pub artifacts: Vec<ArtifactEntry>,
}

impl Manifest {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        serde_json::from_str(text).map_err(|e| PipelineError::Config(format!("manifest: {e}")))
    }

    pub fn get(&self, path: &str) -> Option<&ArtifactEntry> {
        self.artifacts.iter().find(|a| a.path == path)
    }
}

/// Writes files under one root and records each in a manifest.
#[derive(Debug)]
pub struct ArtifactWriter {
    root: PathBuf,
    manifest: Manifest,
}

impl ArtifactWriter {
    pub fn new(root: &Path) -> Result<Self, PipelineError> {
        std::fs::create_dir_all(root).map_err(|source| PipelineError::Io {
            path: root.to_path_buf(),
            source,
        })?;
        Ok(Self {
            root: root.to_path_buf(),
            manifest: Manifest::default(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, relative: &str, bytes: &[u8]) -> Result<(), PipelineError> {
        let path = self.root.join(relative);
        let io = |source| PipelineError::Io {
            path: path.clone(),
            source,
        };
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(io)?;
        }
        std::fs::write(&path, bytes).map_err(io)?;
        self.manifest.artifacts.push(ArtifactEntry {
            path: relative.to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }

    /// Records an input file by name and content hash.
    pub fn record_input(&mut self, name: &str, bytes: &[u8]) {
        self.manifest.inputs.push(ArtifactEntry {
            path: name.to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
        });
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    /// Writes `manifest.json` (not listed in itself) and returns the manifest.
    pub fn finish(self) -> Result<Manifest, PipelineError> {
        let path = self.root.join("manifest.json");
        std::fs::write(&path, self.manifest.to_json()).map_err(|source| PipelineError::Io { path, source })?;
        Ok(self.manifest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::MethodInfo;
    use crate::validate::MetricSpace;

    fn result(labels: Vec<usize>, k: usize) -> ClusteringResult {
        ClusteringResult::new(MethodInfo::new("x").with("first_pass_clusters", 190), labels, k, 0)
    }

    fn spec(text: &str) -> MethodSpec {
        toml::from_str(text).unwrap()
    }

    #[test]
    fn clusters_column_formats() {
        let hc = spec("method = \"hc-dtw\"\nk = 5\nnormalize = true");
        assert_eq!(clusters_label(&hc, &result(vec![0, 1, 2, 2], 5)), "5 (3)");
        assert_eq!(clusters_label(&hc, &result(vec![0, 1, 2, 3, 4], 5)), "5");
        let som = spec("method = \"som\"\nrows = 4\ncols = 4\nnormalize = false");
        assert_eq!(clusters_label(&som, &result((0..16).collect(), 16)), "4x4=16");
        let ap = spec("method = \"sbd-ap\"\nnormalize = false\nconsolidate_to = 10");
        assert_eq!(clusters_label(&ap, &result((0..10).collect(), 10)), "190 → 10");
        let gmm = spec("method = \"dba-gmm\"\nk = 10\ninitial_k = 30\nnormalize = true");
        assert_eq!(clusters_label(&gmm, &result((0..10).collect(), 10)), "30 → 10");
    }

    #[test]
    fn metrics_table_layout() {
        let report = ValidityReport {
            silhouette: Some(0.38079),
            davies_bouldin: Some(1.0381),
            dunn: None,
            calinski_harabasz: Some(6698.78),
            gini: 0.1,
            metric_space: MetricSpace::PrecomputedDistance,
        };
        let text = metrics_csv(&[MetricsRow {
            method: "HC with DTW".into(),
            clusters: "5".into(),
            normalized: false,
            report,
        }]);
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("Method,Clusters,Norm.,Silhouette,D-B,Dunn,C-H"));
        assert_eq!(lines.next(), Some("HC with DTW,5,No,0.3808,1.0381,NA,6698.7800"));
    }

    #[test]
    fn membership_round_trip() {
        let keys = vec![ODKey::new("A", "B"), ODKey::new("C", "D"), ODKey::new("E", "F")];
        let mut r = result(vec![1, 0, 1], 2);
        r.soft = Some(vec![vec![0.1, 0.9], vec![1.0, 0.0], vec![0.3, 0.7]]);
        let s = spec("method = \"kshape\"\nk = 2\nnormalize = true");
        let doc = MembershipDoc::new(&s, &keys, &r, None);
        let back = MembershipDoc::from_json(&doc.to_json()).unwrap();
        assert_eq!(back, doc);
        assert_eq!(back.to_result(&keys).unwrap(), r);
        assert!(back.to_result(&[ODKey::new("X", "Y")]).is_err());
    }

    #[test]
    fn writer_hashes_what_it_writes() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = ArtifactWriter::new(dir.path()).unwrap();
        w.write("a/b.txt", b"abc").unwrap();
        let m = w.finish().unwrap();
        assert_eq!(
            m.artifacts[0].sha256,
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        assert_eq!(std::fs::read(dir.path().join("a/b.txt")).unwrap(), b"abc");
        let on_disk = Manifest::from_json(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
        assert_eq!(on_disk, m);
    }
}
