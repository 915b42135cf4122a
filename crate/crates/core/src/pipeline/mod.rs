//! Configuration-driven runs: ingest, share series, selection, clustering,
//! evaluation and reporting.
//!
//! Each stage is a public function so that the CLI can stop after any of
//! them. [`run`] chains them and writes every artifact through an
//! [`ArtifactWriter`], finishing with a hashed `manifest.json`. Methods
//! cluster in parallel but their outputs are written in config order.

pub mod config;
pub mod figures;
pub mod report;

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

pub use config::{AggregationConfig, DistanceConfig, FigureConfig, InputConfig, MethodSpec, RunConfig};
pub use figures::{FigureError, FigureKind, FigureSpec};
pub use report::{ArtifactEntry, ArtifactWriter, Manifest, MembershipDoc, MetricsRow};

use crate::cluster::{
    affinity_propagation, cut_height, cut_tree, hierarchical, kshape, som_assign, som_train, two_step_ap_hc,
    two_step_kmeans_gmm, ApParams, ClusterError, ClusteringResult, SomParams, TwoStepGmmParams,
};
use crate::distance::{
    normalize_by_max, pairwise_condensed, sbd_similarity, CondensedDistanceMatrix, DistanceError, Metric,
    SeriesMatrix,
};
use crate::ingest::{
    accumulate_leg_counts, parse_market_file, parse_segment_file, AirportCategoryTable, IngestError, LegCountLedger,
    ParseOptions, RowIssue, SegmentRecord,
};
use crate::shares::{
    aggregate_yearly, build_all_quarterly, select_od_pairs, write_series_csv, z_normalize, ODKey, ShareSeries,
    TimePoint,
};
use crate::validate::ValidityReport;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("ingest stage, {}: {source}", file.display())]
    Ingest { file: PathBuf, source: IngestError },
    #[error("select stage: no O&D pair meets the criteria ({criteria})")]
    SelectionEmpty { criteria: String },
    #[error("series stage: {kept} complete series after dropping {dropped} with missing shares; need at least 2")]
    TooFewSeries { kept: usize, dropped: usize },
    #[error("cluster stage, method {index} ({slug}): {source}")]
    Cluster {
        index: usize,
        slug: String,
        source: ClusterError,
    },
    #[error("cluster stage, method {index} ({slug}): affinity propagation did not converge")]
    NotConverged { index: usize, slug: String },
    #[error("evaluate stage, method {index} ({slug}): {source}")]
    Evaluate {
        index: usize,
        slug: String,
        source: DistanceError,
    },
    #[error("report stage, {figure}: {source}")]
    Figure { figure: String, source: FigureError },
}

impl PipelineError {
    /// Name of the stage the error came from.
    pub fn stage(&self) -> &'static str {
        match self {
            Self::Config(_) | Self::Io { .. } => "setup",
            Self::Ingest { .. } => "ingest",
            Self::SelectionEmpty { .. } => "select",
            Self::TooFewSeries { .. } => "series",
            Self::Cluster { .. } | Self::NotConverged { .. } => "cluster",
            Self::Evaluate { .. } => "evaluate",
            Self::Figure { .. } => "report",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Fail on malformed input rows and on non-converged affinity
    /// propagation instead of reporting and continuing.
    pub strict: bool,
}

fn read_file(path: &Path) -> Result<Vec<u8>, PipelineError> {
    std::fs::read(path).map_err(|source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// Parsed inputs plus the raw bytes they came from (for hashing).
#[derive(Debug, Clone)]
pub struct Inputs {
    pub ledger: LegCountLedger,
    pub categories: AirportCategoryTable,
    pub segments: Option<Vec<SegmentRecord>>,
    pub market_records: usize,
    /// Rows skipped in lenient mode, by file name.
    pub skipped: BTreeMap<String, Vec<RowIssue>>,
    /// `(file name, bytes)` for every input read, in a fixed order.
    pub sources: Vec<(String, Vec<u8>)>,
}

/// Reads the market, category and optional segment files.
pub fn load_inputs(cfg: &RunConfig, opts: RunOptions) -> Result<Inputs, PipelineError> {
    let parse_opts = ParseOptions {
        delimiter: cfg.input.delimiter as u8,
        lenient: cfg.input.lenient && !opts.strict,
    };
    fn ingest(file: &Path) -> impl FnOnce(IngestError) -> PipelineError + '_ {
        move |source| PipelineError::Ingest {
            file: file.to_path_buf(),
            source,
        }
    }
    let mut skipped = BTreeMap::new();
    let mut sources = Vec::new();

    let market_bytes = read_file(&cfg.input.market)?;
    let market = parse_market_file(market_bytes.as_slice(), &cfg.input.market_schema, parse_opts)
        .map_err(ingest(&cfg.input.market))?;
    let ledger = accumulate_leg_counts(&market.records);
    if !market.skipped.is_empty() {
        skipped.insert(file_name(&cfg.input.market), market.skipped);
    }
    sources.push((file_name(&cfg.input.market), market_bytes));

    let cat_bytes = read_file(&cfg.input.categories)?;
    let categories = AirportCategoryTable::parse(cat_bytes.as_slice(), parse_opts.delimiter)
        .map_err(ingest(&cfg.input.categories))?;
    sources.push((file_name(&cfg.input.categories), cat_bytes));

    let segments = match &cfg.input.segment {
        Some(path) => {
            let bytes = read_file(path)?;
            let parsed = parse_segment_file(bytes.as_slice(), &cfg.input.segment_schema, parse_opts)
                .map_err(ingest(path))?;
            if !parsed.skipped.is_empty() {
                skipped.insert(file_name(path), parsed.skipped);
            }
            sources.push((file_name(path), bytes));
            Some(parsed.records)
        }
        None => None,
    };

    Ok(Inputs {
        ledger,
        categories,
        segments,
        market_records: market.records.len(),
        skipped,
        sources,
    })
}

/// The series that enter clustering, in key order, in both raw and
/// standardized form.
#[derive(Debug, Clone)]
pub struct Dataset {
    /// Quarterly series of every leg in the ledger.
    pub all_quarterly: BTreeMap<ODKey, ShareSeries>,
    /// Pairs passing the selection rules.
    pub selected: Vec<ODKey>,
    /// Selected pairs dropped for an undefined share after aggregation.
    pub dropped: Vec<ODKey>,
    /// Clustering series (yearly or quarterly) of the kept pairs.
    pub series: BTreeMap<ODKey, ShareSeries>,
    pub raw: SeriesMatrix,
    pub standardized: SeriesMatrix,
    pub time_labels: Vec<String>,
}

impl Dataset {
    pub fn keys(&self) -> &[ODKey] {
        self.raw.keys()
    }

    pub fn space(&self, normalized: bool) -> &SeriesMatrix {
        if normalized {
            &self.standardized
        } else {
            &self.raw
        }
    }

    /// Summed total passengers per kept pair, aligned with [`Self::keys`].
    pub fn volumes(&self) -> Vec<f64> {
        self.keys().iter().map(|k| self.series[k].total_passengers()).collect()
    }
}

fn time_label(tp: &TimePoint) -> String {
    match tp {
        TimePoint::Quarter(q) => q.to_string(),
        TimePoint::Year(y) => y.to_string(),
    }
}

/// Quarterly series for every leg, then selection, aggregation and
/// standardization.
pub fn build_dataset(inputs: &Inputs, cfg: &RunConfig) -> Result<Dataset, PipelineError> {
    let all_quarterly = build_all_quarterly(&inputs.ledger, cfg.span);
    let selected = select_od_pairs(&all_quarterly, &cfg.selection, &inputs.categories);
    if selected.is_empty() {
        return Err(PipelineError::SelectionEmpty {
            criteria: cfg.selection.to_string(),
        });
    }
    let mut series = BTreeMap::new();
    let mut dropped = Vec::new();
    let (mut keys, mut rows) = (Vec::new(), Vec::new());
    for key in &selected {
        let q = &all_quarterly[key];
        let s = if cfg.aggregation.yearly {
            aggregate_yearly(q, cfg.aggregation.drop_partial_final_year)
        } else {
            q.clone()
        };
        match s.complete_shares() {
            Ok(values) if !values.is_empty() => {
                keys.push(key.clone());
                rows.push(values);
                series.insert(key.clone(), s);
            }
            _ => dropped.push(key.clone()),
        }
    }
    if keys.len() < 2 {
        return Err(PipelineError::TooFewSeries {
            kept: keys.len(),
            dropped: dropped.len(),
        });
    }
    let time_labels = series.values().next().map(|s| s.index.iter().map(time_label).collect()).unwrap_or_default();
    let raw = SeriesMatrix::new(keys, rows).map_err(|e| PipelineError::Config(e.to_string()))?;
    let standardized = raw.map_rows(z_normalize);
    Ok(Dataset {
        all_quarterly,
        selected,
        dropped,
        series,
        raw,
        standardized,
        time_labels,
    })
}

/// Distance used for Silhouette and Dunn of a method's partition.
pub fn evaluation_metric(spec: &MethodSpec) -> Metric {
    match spec {
        MethodSpec::HcDtw { .. } | MethodSpec::DbaGmm { .. } => Metric::Dtw,
        MethodSpec::Kshape { .. } | MethodSpec::SbdAp { .. } => Metric::Sbd,
        MethodSpec::Som { .. } => Metric::Euclidean,
    }
}

/// One method's clustering with its 1-based position in the config.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodRun {
    pub index: usize,
    pub spec: MethodSpec,
    pub result: ClusteringResult,
}

fn method_dir(index: usize, spec: &MethodSpec) -> String {
    format!("methods/{index:02}-{}", spec.slug())
}

impl MethodRun {
    /// Output subdirectory, relative to the run's output directory.
    pub fn dir(&self) -> String {
        method_dir(self.index, &self.spec)
    }
}

/// Reads the membership documents an earlier `cluster` stage wrote for the
/// configured methods.
pub fn load_memberships(cfg: &RunConfig, data: &Dataset) -> Result<Vec<MethodRun>, PipelineError> {
    cfg.methods
        .iter()
        .enumerate()
        .map(|(i, spec)| {
            let index = i + 1;
            let path = cfg.out_dir.join(method_dir(index, spec)).join("membership.json");
            let text = std::fs::read_to_string(&path).map_err(|source| PipelineError::Io {
                path: path.clone(),
                source,
            })?;
            let doc = MembershipDoc::from_json(&text)?;
            if &doc.spec != spec {
                return Err(PipelineError::Config(format!(
                    "{} was written for a different method spec; rerun the cluster stage",
                    path.display()
                )));
            }
            Ok(MethodRun {
                index,
                spec: spec.clone(),
                result: doc.to_result(data.keys())?,
            })
        })
        .collect()
}

/// One `membership.json` per run, with scores when given.
pub fn write_memberships(
    out: &mut ArtifactWriter,
    data: &Dataset,
    runs: &[MethodRun],
    reports: Option<&[ValidityReport]>,
) -> Result<(), PipelineError> {
    for (i, r) in runs.iter().enumerate() {
        let doc = MembershipDoc::new(&r.spec, data.keys(), &r.result, reports.map(|rep| rep[i].clone()));
        out.write(&format!("{}/membership.json", r.dir()), doc.to_json().as_bytes())?;
    }
    Ok(())
}

fn annotate(mut r: ClusteringResult, name: &str, spec: &MethodSpec, extra: &[(&str, serde_json::Value)]) -> ClusteringResult {
    let mut params = std::mem::take(&mut r.method.params);
    params.insert("normalize".into(), spec.normalize().into());
    for (k, v) in extra {
        params.insert((*k).into(), v.clone());
    }
    r.method.name = name.to_string();
    r.method.params = params;
    r.seed = spec.seed();
    r
}

enum Failure {
    Cluster(ClusterError),
    NotConverged,
}

impl From<ClusterError> for Failure {
    fn from(e: ClusterError) -> Self {
        Failure::Cluster(e)
    }
}

impl From<DistanceError> for Failure {
    fn from(e: DistanceError) -> Self {
        Failure::Cluster(e.into())
    }
}

fn cluster_one(data: &Dataset, spec: &MethodSpec, dist: &DistanceConfig, strict: bool) -> Result<ClusteringResult, Failure> {
    let x = data.space(spec.normalize());
    let r = match *spec {
        MethodSpec::HcDtw {
            k,
            linkage,
            cut_height: height,
            ..
        } => {
            let mut cond = pairwise_condensed(x, Metric::Dtw, dist.dtw_window)?;
            if dist.normalize_by_max {
                cond = normalize_by_max(&cond)?;
            }
            let tree = hierarchical(&cond, linkage)?;
            let (r, cut) = match height {
                Some(h) => (cut_height(&tree, h, k), serde_json::json!({ "height": h })),
                None => (cut_tree(&tree, k)?, "maxclust".into()),
            };
            annotate(
                r,
                "hc-dtw",
                spec,
                &[
                    ("k", k.into()),
                    ("linkage", serde_json::to_value(linkage).expect("linkage serializes")),
                    ("normalize_distances", dist.normalize_by_max.into()),
                    ("dtw_window", dist.dtw_window.into()),
                    ("cut", cut),
                ],
            )
        }
        MethodSpec::Kshape {
            k, seed, max_iter, n_init, ..
        } => {
            let out = kshape(&data.standardized, k, seed, max_iter, n_init)?;
            annotate(
                out.result,
                "kshape",
                spec,
                &[
                    ("input", "z-normalized".into()),
                    ("iterations", out.iterations.into()),
                    ("converged", out.converged.into()),
                ],
            )
        }
        MethodSpec::Som {
            rows,
            cols,
            seed,
            epochs,
            learning_rate,
            final_radius,
            ..
        } => {
            let grid = som_train(
                x,
                &SomParams {
                    rows,
                    cols,
                    epochs,
                    learning_rate,
                    final_radius,
                    seed,
                },
            )?;
            let qe = grid.quantization_trace.last().copied().unwrap_or(f64::NAN);
            annotate(som_assign(&grid, x), "som", spec, &[("quantization_error", qe.into())])
        }
        MethodSpec::SbdAp {
            seed,
            damping,
            preference,
            max_iter,
            convergence_iter,
            consolidate_to,
            ..
        } => {
            let ap = ApParams {
                damping,
                preference,
                max_iter,
                convergence_iter,
                seed,
            };
            match consolidate_to {
                Some(t) => {
                    let r = two_step_ap_hc(x, t, &ap)?;
                    if strict && r.method.params.get("converged") == Some(&false.into()) {
                        return Err(Failure::NotConverged);
                    }
                    annotate(r, "sbd-ap-hc", spec, &[])
                }
                None => {
                    let out = match affinity_propagation(&sbd_similarity(x)?, &ap) {
                        Ok(o) => o,
                        Err(ClusterError::NonConvergence { .. }) if strict => return Err(Failure::NotConverged),
                        Err(ClusterError::NonConvergence { partial, .. }) => *partial,
                        Err(e) => return Err(e.into()),
                    };
                    annotate(out.result, "sbd-ap", spec, &[("iterations", out.iterations.into())])
                }
            }
        }
        MethodSpec::DbaGmm {
            k,
            seed,
            initial_k,
            kmeans_max_iter,
            gmm,
            ..
        } => {
            let out = two_step_kmeans_gmm(
                x,
                k,
                seed,
                &TwoStepGmmParams {
                    initial_k,
                    kmeans_max_iter,
                    gmm,
                },
            )?;
            annotate(out.result, "dba-gmm", spec, &[])
        }
    };
    Ok(r)
}

/// Runs one method spec (`index` is its 1-based config position).
pub fn cluster_method(
    data: &Dataset,
    index: usize,
    spec: &MethodSpec,
    cfg: &RunConfig,
    opts: RunOptions,
) -> Result<MethodRun, PipelineError> {
    cluster_one(data, spec, &cfg.distance, opts.strict)
        .map(|result| MethodRun {
            index,
            spec: spec.clone(),
            result,
        })
        .map_err(|f| match f {
            Failure::Cluster(source) => PipelineError::Cluster {
                index,
                slug: spec.slug(),
                source,
            },
            Failure::NotConverged => PipelineError::NotConverged {
                index,
                slug: spec.slug(),
            },
        })
}

/// Every configured method, run in parallel and returned in config order.
/// The first failing method (in config order) is reported.
pub fn cluster_all(data: &Dataset, cfg: &RunConfig, opts: RunOptions) -> Result<Vec<MethodRun>, PipelineError> {
    cfg.methods
        .par_iter()
        .enumerate()
        .map(|(i, spec)| cluster_method(data, i + 1, spec, cfg, opts))
        .collect::<Vec<_>>()
        .into_iter()
        .collect()
}

/// Pairwise matrices needed to score `runs`, one per (space, metric).
pub fn evaluation_matrices(
    data: &Dataset,
    runs: &[MethodRun],
    cfg: &RunConfig,
) -> Result<BTreeMap<(bool, Metric), CondensedDistanceMatrix>, PipelineError> {
    let mut needed: BTreeMap<(bool, Metric), &MethodRun> = BTreeMap::new();
    for r in runs {
        needed.entry((r.spec.normalize(), evaluation_metric(&r.spec))).or_insert(r);
    }
    needed
        .into_iter()
        .map(|((norm, metric), r)| {
            let window = if metric == Metric::Dtw { cfg.distance.dtw_window } else { None };
            pairwise_condensed(data.space(norm), metric, window)
                .map(|m| ((norm, metric), m))
                .map_err(|source| PipelineError::Evaluate {
                    index: r.index,
                    slug: r.spec.slug(),
                    source,
                })
        })
        .collect()
}

/// Validity indices for each run: Silhouette and Dunn under the method's
/// metric, Davies-Bouldin and Calinski-Harabasz on the series vectors, all
/// in the space selected by the method's `normalize` flag.
pub fn evaluate(data: &Dataset, runs: &[MethodRun], cfg: &RunConfig) -> Result<Vec<ValidityReport>, PipelineError> {
    let matrices = evaluation_matrices(data, runs, cfg)?;
    Ok(runs
        .par_iter()
        .map(|r| {
            let norm = r.spec.normalize();
            let cond = &matrices[&(norm, evaluation_metric(&r.spec))];
            ValidityReport::compute(cond, data.space(norm), &r.result.labels)
        })
        .collect())
}

pub fn metrics_rows(runs: &[MethodRun], reports: &[ValidityReport]) -> Vec<MetricsRow> {
    runs.iter()
        .zip(reports)
        .map(|(r, rep)| MetricsRow {
            method: r.spec.family().to_string(),
            clusters: report::clusters_label(&r.spec, &r.result),
            normalized: r.spec.normalize(),
            report: rep.clone(),
        })
        .collect()
}

fn figure_err(figure: String) -> impl FnOnce(FigureError) -> PipelineError {
    move |source| PipelineError::Figure { figure, source }
}

/// SVG documents for one run, as `(file name, contents)`.
pub fn method_figures(data: &Dataset, run: &MethodRun, cfg: &RunConfig) -> Result<Vec<(String, String)>, PipelineError> {
    let norm = run.spec.normalize();
    let space = data.space(norm);
    let rows: Vec<&[f64]> = space.rows().collect();
    let labels = &run.result.labels;
    let units = if norm { "standardized" } else { "local share" };
    let title = format!("{} {} ({units})", run.spec.family(), report::clusters_label(&run.spec, &run.result));
    let highlight = cfg.figures.highlight.clone();
    let mut out = Vec::new();

    let kind = FigureKind::ClusterMeansCi;
    let name = format!("{}.svg", kind.file_stem());
    let spec = FigureSpec {
        highlight: highlight.clone(),
        ..FigureSpec::new(kind)
    };
    let svg = figures::plot_cluster_means(&rows, labels, &data.time_labels, &title, &spec)
        .map_err(figure_err(format!("{}/{name}", run.dir())))?;
    out.push((name, svg));

    let kind = FigureKind::Representatives;
    let name = format!("{}.svg", kind.file_stem());
    let spec = FigureSpec {
        highlight: highlight.clone(),
        ..FigureSpec::new(kind)
    };
    let svg = figures::plot_representatives(
        &rows,
        labels,
        data.keys(),
        &data.volumes(),
        &data.time_labels,
        cfg.figures.top_n,
        &format!("{title}: top {} pairs by passengers", cfg.figures.top_n),
        &spec,
    )
    .map_err(figure_err(format!("{}/{name}", run.dir())))?;
    out.push((name, svg));

    if norm {
        let kind = FigureKind::OriginalMagnitudeOverlay;
        let name = format!("{}.svg", kind.file_stem());
        let spec = FigureSpec {
            kind,
            clusters: cfg.figures.overlay_cluster.map(|c| vec![c]),
            highlight,
        };
        let svg = figures::plot_original_magnitude_overlay(
            labels,
            data.keys(),
            &data.series,
            &data.time_labels,
            &format!("{title} in original local-share units"),
            &spec,
        )
        .map_err(figure_err(format!("{}/{name}", run.dir())))?;
        out.push((name, svg));
    }
    Ok(out)
}

pub fn size_distribution_figure(runs: &[MethodRun]) -> Result<String, PipelineError> {
    let methods: Vec<(String, Vec<usize>)> = runs
        .iter()
        .map(|r| {
            (
                format!("{} {}", r.spec.family(), report::clusters_label(&r.spec, &r.result)),
                r.result.occupied_sizes(),
            )
        })
        .collect();
    figures::plot_size_distribution(&methods, "O&D pairs per cluster").map_err(figure_err("size-distribution.svg".into()))
}

/// Yearly passengers, departures and seats per selected pair from the
/// segment file, summed over carriers and periods.
pub fn segment_summary(segments: &[SegmentRecord], selected: &[ODKey]) -> String {
    let wanted: BTreeSet<&ODKey> = selected.iter().collect();
    let mut sums: BTreeMap<(ODKey, i32), [f64; 3]> = BTreeMap::new();
    for s in segments {
        let key = ODKey::new(&s.origin, &s.dest);
        if wanted.contains(&key) {
            let e = sums.entry((key, s.year)).or_insert([0.0; 3]);
            e[0] += s.passengers;
            e[1] += s.departures;
            e[2] += s.seats;
        }
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["origin", "dest", "year", "passengers", "departures", "seats", "load_factor"])
        .expect("in-memory write");
    for ((k, year), [pax, deps, seats]) in sums {
        let lf = if seats > 0.0 { format!("{:.4}", pax / seats) } else { String::new() };
        w.write_record([k.origin, k.dest, year.to_string(), pax.to_string(), deps.to_string(), seats.to_string(), lf])
            .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

fn series_csv<'a>(series: impl IntoIterator<Item = &'a ShareSeries>) -> Vec<u8> {
    let mut buf = Vec::new();
    write_series_csv(&mut buf, series).expect("in-memory write");
    buf
}

fn standardized_csv(data: &Dataset) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["origin".to_string(), "dest".to_string()];
    header.extend(data.time_labels.iter().cloned());
    w.write_record(&header).expect("in-memory write");
    for (k, row) in data.keys().iter().zip(data.standardized.rows()) {
        let mut rec = vec![k.origin.clone(), k.dest.clone()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

/// Metrics table plus, when enabled, every figure. Figures render in
/// parallel and are written in config order.
pub fn write_report(
    out: &mut ArtifactWriter,
    data: &Dataset,
    runs: &[MethodRun],
    reports: &[ValidityReport],
    cfg: &RunConfig,
) -> Result<(), PipelineError> {
    out.write("metrics.csv", report::metrics_csv(&metrics_rows(runs, reports)).as_bytes())?;
    if !cfg.figures.enabled {
        return Ok(());
    }
    let svgs: Vec<Vec<(String, String)>> = runs
        .par_iter()
        .map(|r| method_figures(data, r, cfg))
        .collect::<Result<_, _>>()?;
    for (r, figs) in runs.iter().zip(&svgs) {
        for (name, svg) in figs {
            out.write(&format!("{}/{name}", r.dir()), svg.as_bytes())?;
        }
    }
    out.write("size-distribution.svg", size_distribution_figure(runs)?.as_bytes())
}

/// Counts and outcomes of one run, written as `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub market_records: usize,
    pub skipped_rows: BTreeMap<String, usize>,
    pub legs: usize,
    pub selected: usize,
    pub dropped_missing: Vec<ODKey>,
    pub clustered: usize,
    pub series_length: usize,
    pub methods: Vec<MethodSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodSummary {
    pub dir: String,
    pub method: String,
    pub clusters: String,
    pub k_requested: usize,
    pub k_actual: usize,
}

/// Writes the selected pairs' series: quarterly, clustering (yearly or
/// quarterly) and standardized.
pub fn write_series(out: &mut ArtifactWriter, data: &Dataset) -> Result<(), PipelineError> {
    out.write(
        "series/quarterly.csv",
        &series_csv(data.selected.iter().map(|k| &data.all_quarterly[k])),
    )?;
    out.write("series/clustering.csv", &series_csv(data.series.values()))?;
    out.write("series/standardized.csv", &standardized_csv(data))
}

/// Highlight keys in the figure settings must be clustered pairs.
pub fn check_highlights(cfg: &RunConfig, data: &Dataset) -> Result<(), PipelineError> {
    match cfg.figures.highlight.iter().find(|h| !data.keys().contains(h)) {
        Some(h) => Err(PipelineError::Figure {
            figure: "highlight".into(),
            source: FigureError::UnknownHighlight(h.clone()),
        }),
        None => Ok(()),
    }
}

/// Full pipeline. Returns the manifest, also written to
/// `<out_dir>/manifest.json`.
pub fn run(cfg: &RunConfig, opts: RunOptions) -> Result<Manifest, PipelineError> {
    cfg.validate()?;
    let inputs = load_inputs(cfg, opts)?;
    let data = build_dataset(&inputs, cfg)?;
    check_highlights(cfg, &data)?;
    let runs = cluster_all(&data, cfg, opts)?;
    let reports = evaluate(&data, &runs, cfg)?;
    let mut out = ArtifactWriter::new(&cfg.out_dir)?;
    for (name, bytes) in &inputs.sources {
        out.record_input(name, bytes);
    }
    write_series(&mut out, &data)?;
    if let Some(segments) = &inputs.segments {
        out.write("series/segments.csv", segment_summary(segments, &data.selected).as_bytes())?;
    }
    if cfg.distance.write_sidecars {
        for ((norm, metric), m) in evaluation_matrices(&data, &runs, cfg)? {
            let mut buf = Vec::new();
            m.write_sidecar(&mut buf).expect("in-memory write");
            let space = if norm { "norm" } else { "raw" };
            out.write(&format!("distances/{metric}-{space}.txt"), &buf)?;
        }
    }
    write_memberships(&mut out, &data, &runs, Some(&reports))?;
    write_report(&mut out, &data, &runs, &reports, cfg)?;
    let summary = RunSummary {
        market_records: inputs.market_records,
        skipped_rows: inputs.skipped.iter().map(|(k, v)| (k.clone(), v.len())).collect(),
        legs: data.all_quarterly.len(),
        selected: data.selected.len(),
        dropped_missing: data.dropped.clone(),
        clustered: data.keys().len(),
        series_length: data.raw.len(),
        methods: runs
            .iter()
            .map(|r| MethodSummary {
                dir: r.dir(),
                method: r.result.method.name.clone(),
                clusters: report::clusters_label(&r.spec, &r.result),
                k_requested: r.result.k_requested,
                k_actual: r.result.k_actual,
            })
            .collect(),
    };
    let mut text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    text.push('\n');
    out.write("summary.json", text.as_bytes())?;
    out.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{write_market_file, MarketSchema};
    use crate::synthetic::market_fixture;

    fn write_inputs(dir: &Path) {
        let fx = market_fixture(7);
        let mut f = std::fs::File::create(dir.join("market.csv")).unwrap();
        write_market_file(&mut f, &MarketSchema::default(), b',', &fx.records).unwrap();
        fx.categories.write(std::fs::File::create(dir.join("categories.csv")).unwrap()).unwrap();
    }

    fn config(dir: &Path, methods: &str) -> RunConfig {
        let text = format!(
            "[input]\nmarket = \"market.csv\"\ncategories = \"categories.csv\"\n{methods}"
        );
        let mut cfg = RunConfig::from_toml(&text).unwrap();
        cfg.resolve_paths(dir);
        cfg
    }

    const TWO_METHODS: &str = r#"
[[methods]]
method = "hc-dtw"
k = 5
normalize = false

[[methods]]
method = "kshape"
k = 5
normalize = true
seed = 4
"#;

    #[test]
    fn dataset_drops_nothing_on_fixture() {
        let dir = tempfile::tempdir().unwrap();
        write_inputs(dir.path());
        let cfg = config(dir.path(), TWO_METHODS);
        let inputs = load_inputs(&cfg, RunOptions::default()).unwrap();
        let data = build_dataset(&inputs, &cfg).unwrap();
        assert_eq!(data.selected, market_fixture(7).expected_selected);
        assert!(data.dropped.is_empty());
        // 2006..=2023; 2024 has three quarters and is dropped
        assert_eq!(data.raw.len(), 18);
        assert_eq!(data.time_labels.first().map(String::as_str), Some("2006"));
    }

    #[test]
    fn run_writes_manifested_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        write_inputs(dir.path());
        let cfg = config(dir.path(), TWO_METHODS);
        let manifest = run(&cfg, RunOptions::default()).unwrap();
        for p in [
            "methods/01-hc-dtw-k5-raw/membership.json",
            "methods/02-kshape-k5-norm/membership.json",
            "methods/02-kshape-k5-norm/original-magnitude.svg",
            "metrics.csv",
            "size-distribution.svg",
        ] {
            assert!(manifest.get(p).is_some(), "{p}");
        }
        for a in &manifest.artifacts {
            let bytes = std::fs::read(cfg.out_dir.join(&a.path)).unwrap();
            assert_eq!(report::sha256_hex(&bytes), a.sha256, "{}", a.path);
        }
        assert_eq!(manifest.inputs.len(), 2);
    }

    #[test]
    fn empty_selection_names_criteria() {
        let dir = tempfile::tempdir().unwrap();
        write_inputs(dir.path());
        let mut cfg = config(dir.path(), TWO_METHODS);
        cfg.selection.min_share_exclusive = 0.99;
        let inputs = load_inputs(&cfg, RunOptions::default()).unwrap();
        let err = build_dataset(&inputs, &cfg).unwrap_err();
        assert_eq!(err.stage(), "select");
        assert!(err.to_string().contains("share > 0.99"), "{err}");
    }

    #[test]
    fn cluster_errors_carry_method_provenance() {
        let dir = tempfile::tempdir().unwrap();
        write_inputs(dir.path());
        let cfg = config(
            dir.path(),
            "[[methods]]\nmethod = \"sbd-ap\"\nnormalize = true\nconsolidate_to = 5000\n",
        );
        let err = run(&cfg, RunOptions::default()).unwrap_err();
        assert!(matches!(err, PipelineError::Cluster { index: 1, .. }), "{err}");
        assert!(err.to_string().starts_with("cluster stage, method 1 (sbd-ap-hc-k5000-norm)"), "{err}");
    }

    #[test]
    fn strict_mode_rejects_non_convergence() {
        let dir = tempfile::tempdir().unwrap();
        write_inputs(dir.path());
        let cfg = config(
            dir.path(),
            "[[methods]]\nmethod = \"sbd-ap\"\nnormalize = true\nmax_iter = 5\nconvergence_iter = 50\n",
        );
        let inputs = load_inputs(&cfg, RunOptions::default()).unwrap();
        let data = build_dataset(&inputs, &cfg).unwrap();
        let lenient = cluster_method(&data, 1, &cfg.methods[0], &cfg, RunOptions::default()).unwrap();
        assert_eq!(lenient.result.method.params["converged"], serde_json::Value::Bool(false));
        let strict = cluster_method(&data, 1, &cfg.methods[0], &cfg, RunOptions { strict: true });
        assert!(matches!(strict, Err(PipelineError::NotConverged { index: 1, .. })));
    }

    #[test]
    fn unknown_highlight_is_rejected_before_clustering() {
        let dir = tempfile::tempdir().unwrap();
        write_inputs(dir.path());
        let mut cfg = config(dir.path(), TWO_METHODS);
        cfg.figures.highlight = vec![ODKey::new("ZZZ", "YYY")];
        let err = run(&cfg, RunOptions::default()).unwrap_err();
        assert!(matches!(
            err,
            PipelineError::Figure {
                source: FigureError::UnknownHighlight(_),
                ..
            }
        ));
    }

    #[test]
    fn segment_summary_sums_selected_pairs() {
        let seg = |o: &str, d: &str, pax: f64| SegmentRecord {
            year: 2020,
            quarter: 1,
            carrier: "AA".into(),
            origin: o.into(),
            dest: d.into(),
            passengers: pax,
            departures: 2.0,
            seats: 200.0,
        };
        let text = segment_summary(&[seg("A", "B", 50.0), seg("A", "B", 100.0), seg("B", "A", 1.0)], &[ODKey::new("A", "B")]);
        assert_eq!(text, "origin,dest,year,passengers,departures,seats,load_factor\nA,B,2020,150,4,400,0.3750\n");
    }
}
