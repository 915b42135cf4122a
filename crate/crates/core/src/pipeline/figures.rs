//! SVG figures: cluster means with confidence bands, representative pairs,
//! cluster-size distributions and original-magnitude overlays.
//!
//! Output is plain SVG text built with fixed-precision number formatting,
//! so identical inputs render to identical bytes.

use std::collections::BTreeMap;
use std::fmt::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::shares::{ODKey, ShareSeries};
use crate::validate::gini;

/// Normal multiplier for a two-sided 95% interval.
pub const Z_95: f64 = 1.96;

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf", "#393b79",
];
const ACCENT: &str = "#d62728";

const PANEL_W: f64 = 360.0;
const PANEL_H: f64 = 220.0;
const MARGIN_L: f64 = 48.0;
const MARGIN_R: f64 = 16.0;
const MARGIN_T: f64 = 28.0;
const MARGIN_B: f64 = 36.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FigureError {
    #[error("no raw series for member {0}")]
    MissingRawSeries(ODKey),
    #[error("highlight key {0} is not part of the run")]
    UnknownHighlight(ODKey),
    #[error("cluster {0} has no members")]
    EmptyCluster(usize),
    #[error("nothing to plot")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FigureKind {
    ClusterMeansCi,
    Representatives,
    SizeDistribution,
    OriginalMagnitudeOverlay,
}

impl FigureKind {
    pub fn file_stem(self) -> &'static str {
        match self {
            Self::ClusterMeansCi => "cluster-means",
            Self::Representatives => "representatives",
            Self::SizeDistribution => "size-distribution",
            Self::OriginalMagnitudeOverlay => "original-magnitude",
        }
    }
}

/// One figure request: which clusters to draw (all when `None`) and which
/// pairs to accent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FigureSpec {
    pub kind: FigureKind,
    pub clusters: Option<Vec<usize>>,
    pub highlight: Vec<ODKey>,
}

impl FigureSpec {
    pub fn new(kind: FigureKind) -> Self {
        Self {
            kind,
            clusters: None,
            highlight: Vec::new(),
        }
    }

    /// Every highlight key must be one of `keys`.
    pub fn check_highlights(&self, keys: &[ODKey]) -> Result<(), FigureError> {
        match self.highlight.iter().find(|h| !keys.contains(h)) {
            Some(h) => Err(FigureError::UnknownHighlight(h.clone())),
            None => Ok(()),
        }
    }

    fn wants(&self, label: usize) -> bool {
        self.clusters.as_ref().is_none_or(|c| c.contains(&label))
    }
}

/// Pointwise mean and half-width `Z_95 * sd / sqrt(m)` of a group of equal
/// length rows, using the population standard deviation.
pub fn mean_band(rows: &[&[f64]]) -> (Vec<f64>, Vec<f64>) {
    let len = rows.first().map_or(0, |r| r.len());
    let m = rows.len() as f64;
    let mut mean = vec![0.0; len];
    let mut half = vec![0.0; len];
    for t in 0..len {
        let mu = rows.iter().map(|r| r[t]).sum::<f64>() / m;
        let var = rows.iter().map(|r| (r[t] - mu).powi(2)).sum::<f64>() / m;
        mean[t] = mu;
        half[t] = Z_95 * var.sqrt() / m.sqrt();
    }
    (mean, half)
}

/// Occupied labels in increasing order with their member indices.
fn groups(labels: &[usize]) -> BTreeMap<usize, Vec<usize>> {
    let mut g: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        g.entry(l).or_default().push(i);
    }
    g
}

/// Occupied clusters the figure asks for; naming an empty one is an error.
fn selected_groups(labels: &[usize], spec: &FigureSpec) -> Result<Vec<(usize, Vec<usize>)>, FigureError> {
    let all = groups(labels);
    if let Some(&c) = spec.clusters.iter().flatten().find(|c| !all.contains_key(c)) {
        return Err(FigureError::EmptyCluster(c));
    }
    let chosen: Vec<_> = all.into_iter().filter(|(l, _)| spec.wants(*l)).collect();
    if chosen.is_empty() {
        return Err(FigureError::Empty);
    }
    Ok(chosen)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn colour(i: usize) -> &'static str {
    PALETTE[i % PALETTE.len()]
}

struct Svg {
    body: String,
    width: f64,
    height: f64,
}

impl Svg {
    fn new(width: f64, height: f64, title: &str) -> Self {
        let mut s = Self {
            body: String::new(),
            width,
            height,
        };
        s.text(width / 2.0, 18.0, title, "middle", "title");
        s
    }

    fn text(&mut self, x: f64, y: f64, content: &str, anchor: &str, class: &str) {
        let _ = writeln!(
            self.body,
            r#"<text x="{x:.2}" y="{y:.2}" text-anchor="{anchor}" class="{class}">{}</text>"#,
            escape(content)
        );
    }

    fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, class: &str) {
        let _ = writeln!(
            self.body,
            r#"<line x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}" class="{class}"/>"#
        );
    }

    fn points(pts: &[(f64, f64)]) -> String {
        pts.iter()
            .map(|(x, y)| format!("{x:.2},{y:.2}"))
            .collect::<Vec<_>>()
            .join(" ")
    }

    fn polyline(&mut self, pts: &[(f64, f64)], stroke: &str, width: f64, attrs: &str) {
        let _ = writeln!(
            self.body,
            r#"<polyline points="{}" fill="none" stroke="{stroke}" stroke-width="{width:.1}"{attrs}/>"#,
            Self::points(pts)
        );
    }

    fn polygon(&mut self, pts: &[(f64, f64)], fill: &str, attrs: &str) {
        let _ = writeln!(
            self.body,
            r#"<polygon points="{}" fill="{fill}" fill-opacity="0.25" stroke="none"{attrs}/>"#,
            Self::points(pts)
        );
    }

    fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str, attrs: &str) {
        let _ = writeln!(
            self.body,
            r#"<rect x="{x:.2}" y="{y:.2}" width="{w:.2}" height="{h:.2}" fill="{fill}"{attrs}/>"#
        );
    }

    fn finish(self) -> String {
        format!(
            concat!(
                r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.0} {h:.0}">"#,
                "\n<style>text{{font-family:sans-serif;font-size:10px}} .title{{font-size:13px}} ",
                ".axis{{stroke:#333;stroke-width:1}} .grid{{stroke:#ddd;stroke-width:0.5}}</style>\n",
                r#"<rect x="0" y="0" width="{w:.0}" height="{h:.0}" fill="white"/>"#,
                "\n{body}</svg>\n"
            ),
            w = self.width,
            h = self.height,
            body = self.body
        )
    }
}

/// Maps data coordinates into one panel.
struct Frame {
    left: f64,
    top: f64,
    width: f64,
    height: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Frame {
    fn new(origin: (f64, f64), n_points: usize, y_range: (f64, f64)) -> Self {
        let (mut lo, mut hi) = y_range;
        if !(hi > lo) {
            lo -= 0.5;
            hi += 0.5;
        }
        Self {
            left: origin.0 + MARGIN_L,
            top: origin.1 + MARGIN_T,
            width: PANEL_W - MARGIN_L - MARGIN_R,
            height: PANEL_H - MARGIN_T - MARGIN_B,
            x_max: n_points.saturating_sub(1).max(1) as f64,
            y_min: lo,
            y_max: hi,
        }
    }

    fn x(&self, t: f64) -> f64 {
        self.left + self.width * t / self.x_max
    }

    fn y(&self, v: f64) -> f64 {
        self.top + self.height * (1.0 - (v - self.y_min) / (self.y_max - self.y_min))
    }

    fn curve(&self, values: &[f64]) -> Vec<(f64, f64)> {
        values
            .iter()
            .enumerate()
            .map(|(t, &v)| (self.x(t as f64), self.y(v)))
            .collect()
    }

    fn axes(&self, svg: &mut Svg, x_labels: &[String], title: &str) {
        let bottom = self.top + self.height;
        for i in 0..=4 {
            let v = self.y_min + (self.y_max - self.y_min) * i as f64 / 4.0;
            let y = self.y(v);
            svg.line(self.left, y, self.left + self.width, y, "grid");
            svg.text(self.left - 4.0, y + 3.0, &format!("{v:.2}"), "end", "tick");
        }
        svg.line(self.left, self.top, self.left, bottom, "axis");
        svg.line(self.left, bottom, self.left + self.width, bottom, "axis");
        let step = x_labels.len().div_ceil(6).max(1);
        for (t, label) in x_labels.iter().enumerate().step_by(step) {
            let x = self.x(t as f64);
            svg.line(x, bottom, x, bottom + 3.0, "axis");
            svg.text(x, bottom + 14.0, label, "middle", "tick");
        }
        svg.text(self.left + self.width / 2.0, self.top - 6.0, title, "middle", "panel-title");
    }
}

fn extent<'a>(values: impl IntoIterator<Item = &'a f64>) -> (f64, f64) {
    values
        .into_iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

fn grid_layout(panels: usize) -> (usize, usize) {
    let cols = panels.clamp(1, 3);
    (cols, panels.div_ceil(cols).max(1))
}

fn panel_origin(i: usize, cols: usize) -> (f64, f64) {
    ((i % cols) as f64 * PANEL_W, 24.0 + (i / cols) as f64 * PANEL_H)
}

/// Mean curve per cluster with a shaded 95% band, all clusters on one set of
/// axes. Rows of `data` are grouped by `labels`; the legend gives the
/// cluster label and size.
pub fn plot_cluster_means(
    data: &[&[f64]],
    labels: &[usize],
    x_labels: &[String],
    title: &str,
    spec: &FigureSpec,
) -> Result<String, FigureError> {
    let groups = selected_groups(labels, spec)?;
    let bands: Vec<(usize, usize, Vec<f64>, Vec<f64>)> = groups
        .iter()
        .map(|(l, m)| {
            let rows: Vec<&[f64]> = m.iter().map(|&i| data[i]).collect();
            let (mean, half) = mean_band(&rows);
            (*l, m.len(), mean, half)
        })
        .collect();
    let lows: Vec<f64> = bands
        .iter()
        .flat_map(|(_, _, m, h)| m.iter().zip(h).map(|(a, b)| a - b))
        .collect();
    let highs: Vec<f64> = bands
        .iter()
        .flat_map(|(_, _, m, h)| m.iter().zip(h).map(|(a, b)| a + b))
        .collect();
    let y_range = (extent(&lows).0, extent(&highs).1);
    let legend_h = 14.0 * bands.len() as f64;
    let mut svg = Svg::new(PANEL_W + 140.0, (PANEL_H + 24.0).max(64.0 + legend_h), title);
    let frame = Frame::new((0.0, 24.0), x_labels.len(), y_range);
    frame.axes(&mut svg, x_labels, "mean with 95% interval");
    for (slot, (label, size, mean, half)) in bands.iter().enumerate() {
        let c = colour(slot);
        let upper: Vec<f64> = mean.iter().zip(half).map(|(m, h)| m + h).collect();
        let lower: Vec<f64> = mean.iter().zip(half).map(|(m, h)| m - h).collect();
        let mut outline = frame.curve(&upper);
        outline.extend(frame.curve(&lower).into_iter().rev());
        svg.polygon(&outline, c, &format!(r#" class="band" data-cluster="{label}""#));
        svg.polyline(&frame.curve(mean), c, 1.8, &format!(r#" class="mean" data-cluster="{label}" data-size="{size}""#));
        let y = 24.0 + MARGIN_T + 14.0 * slot as f64;
        svg.rect(PANEL_W + 4.0, y - 8.0, 10.0, 10.0, c, "");
        svg.text(PANEL_W + 18.0, y, &format!("cluster {label} (n={size})"), "start", "legend");
    }
    Ok(svg.finish())
}

/// Members of one cluster ranked by summed total passengers, descending,
/// ties broken by key.
pub fn top_by_volume(members: &[usize], keys: &[ODKey], volumes: &[f64], top_n: usize) -> Vec<usize> {
    let mut ranked = members.to_vec();
    ranked.sort_by(|&a, &b| volumes[b].total_cmp(&volumes[a]).then_with(|| keys[a].cmp(&keys[b])));
    ranked.truncate(top_n);
    ranked
}

/// One panel per cluster with its `top_n` pairs by total passengers drawn
/// as labeled lines; highlighted pairs use the accent colour.
pub fn plot_representatives(
    data: &[&[f64]],
    labels: &[usize],
    keys: &[ODKey],
    volumes: &[f64],
    x_labels: &[String],
    top_n: usize,
    title: &str,
    spec: &FigureSpec,
) -> Result<String, FigureError> {
    spec.check_highlights(keys)?;
    let groups = selected_groups(labels, spec)?;
    let (cols, rows) = grid_layout(groups.len());
    let mut svg = Svg::new(cols as f64 * PANEL_W, 24.0 + rows as f64 * PANEL_H, title);
    for (p, (label, members)) in groups.iter().enumerate() {
        let chosen = top_by_volume(members, keys, volumes, top_n);
        let y_range = extent(chosen.iter().flat_map(|&i| data[i].iter()));
        let frame = Frame::new(panel_origin(p, cols), x_labels.len(), y_range);
        frame.axes(&mut svg, x_labels, &format!("cluster {label} (n={})", members.len()));
        for (rank, &i) in chosen.iter().enumerate() {
            let highlighted = spec.highlight.contains(&keys[i]);
            let (stroke, width, class) = if highlighted {
                (ACCENT, 2.4, "representative highlight")
            } else {
                (colour(rank), 1.2, "representative")
            };
            let pts = frame.curve(data[i]);
            svg.polyline(&pts, stroke, width, &format!(r#" class="{class}" data-key="{}""#, keys[i]));
            if let Some(&(x, y)) = pts.last() {
                svg.text(x - 2.0, y - 3.0, &keys[i].to_string(), "end", "line-label");
            }
        }
    }
    Ok(svg.finish())
}

/// One bar chart of occupied cluster sizes per method, in the order given,
/// each annotated with the Gini coefficient of its sizes.
pub fn plot_size_distribution(methods: &[(String, Vec<usize>)], title: &str) -> Result<String, FigureError> {
    if methods.is_empty() {
        return Err(FigureError::Empty);
    }
    let mut svg = Svg::new(PANEL_W * 1.5, 24.0 + methods.len() as f64 * PANEL_H, title);
    for (m, (name, sizes)) in methods.iter().enumerate() {
        let top = 24.0 + m as f64 * PANEL_H;
        let left = MARGIN_L;
        let width = PANEL_W * 1.5 - MARGIN_L - MARGIN_R;
        let height = PANEL_H - MARGIN_T - MARGIN_B;
        let base = top + MARGIN_T + height;
        let tallest = sizes.iter().copied().max().unwrap_or(0).max(1) as f64;
        svg.text(left + width / 2.0, top + MARGIN_T - 6.0, name, "middle", "panel-title");
        svg.line(left, top + MARGIN_T, left, base, "axis");
        svg.line(left, base, left + width, base, "axis");
        svg.text(left - 4.0, top + MARGIN_T + 3.0, &format!("{tallest:.0}"), "end", "tick");
        svg.text(left - 4.0, base + 3.0, "0", "end", "tick");
        let slot = width / sizes.len().max(1) as f64;
        for (c, &s) in sizes.iter().enumerate() {
            let h = height * s as f64 / tallest;
            let x = left + slot * c as f64 + slot * 0.1;
            svg.rect(x, base - h, slot * 0.8, h, colour(m), &format!(r#" class="bar" data-size="{s}""#));
            if sizes.len() <= 30 {
                svg.text(x + slot * 0.4, base + 12.0, &c.to_string(), "middle", "tick");
            }
        }
        svg.text(
            left + width - 4.0,
            top + MARGIN_T + 12.0,
            &format!("Gini = {:.4}", gini(sizes)),
            "end",
            "gini",
        );
    }
    Ok(svg.finish())
}

/// Members of each selected cluster of a standardized-series clustering,
/// drawn in raw share units on a fixed [0, 1] axis.
pub fn plot_original_magnitude_overlay(
    labels: &[usize],
    keys: &[ODKey],
    raw: &BTreeMap<ODKey, ShareSeries>,
    x_labels: &[String],
    title: &str,
    spec: &FigureSpec,
) -> Result<String, FigureError> {
    spec.check_highlights(keys)?;
    let groups = selected_groups(labels, spec)?;
    let (cols, rows) = grid_layout(groups.len());
    let mut svg = Svg::new(cols as f64 * PANEL_W, 24.0 + rows as f64 * PANEL_H, title);
    for (p, (label, members)) in groups.iter().enumerate() {
        let frame = Frame::new(panel_origin(p, cols), x_labels.len(), (0.0, 1.0));
        frame.axes(&mut svg, x_labels, &format!("cluster {label} (n={})", members.len()));
        for &i in members {
            let series = raw.get(&keys[i]).ok_or_else(|| FigureError::MissingRawSeries(keys[i].clone()))?;
            let values: Vec<f64> = series.share.iter().map(|s| s.unwrap_or(0.0).clamp(0.0, 1.0)).collect();
            let highlighted = spec.highlight.contains(&keys[i]);
            let (stroke, width, class) = if highlighted {
                (ACCENT, 2.4, "member highlight")
            } else {
                (colour(*label), 0.8, "member")
            };
            svg.polyline(&frame.curve(&values), stroke, width, &format!(r#" class="{class}" data-key="{}""#, keys[i]));
        }
    }
    Ok(svg.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shares::TimePoint;

    fn x_labels(n: usize) -> Vec<String> {
        (0..n).map(|i| (2006 + i).to_string()).collect()
    }

    fn parse(svg: &str) -> roxmltree::Document<'_> {
        roxmltree::Document::parse(svg).expect("well-formed SVG")
    }

    fn with_class<'a>(doc: &'a roxmltree::Document, tag: &str, class: &str) -> Vec<roxmltree::Node<'a, 'a>> {
        doc.descendants()
            .filter(|n| n.has_tag_name(tag) && n.attribute("class").is_some_and(|c| c.split(' ').any(|p| p == class)))
            .collect()
    }

    #[test]
    fn band_of_identical_rows_is_zero() {
        let r = [0.3, 0.5, 0.7];
        let (mean, half) = mean_band(&[&r, &r, &r]);
        assert!(mean.iter().zip(&r).all(|(m, x)| (m - x).abs() < 1e-15));
        assert!(half.iter().all(|h| h.abs() < 1e-15));
    }

    #[test]
    fn band_of_zero_and_one_rows() {
        // population sd of {0, 1} is 0.5, so the half-width is 1.96 * 0.5 / sqrt(2)
        let (mean, half) = mean_band(&[&[0.0; 4], &[1.0; 4]]);
        let expected = 1.96 * 0.5 / 2f64.sqrt();
        for (m, h) in mean.iter().zip(&half) {
            assert_eq!(*m, 0.5);
            assert!((h - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn cluster_means_has_one_polyline_per_cluster() {
        let rows: Vec<Vec<f64>> = vec![vec![0.0; 5], vec![1.0; 5], vec![0.2, 0.3, 0.4, 0.5, 0.6], vec![0.1; 5]];
        let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let svg = plot_cluster_means(&refs, &[0, 0, 2, 2], &x_labels(5), "means", &FigureSpec::new(FigureKind::ClusterMeansCi))
            .unwrap();
        let doc = parse(&svg);
        let means = with_class(&doc, "polyline", "mean");
        assert_eq!(means.len(), 2);
        assert_eq!(means[0].attribute("data-cluster"), Some("0"));
        assert_eq!(means[1].attribute("data-size"), Some("2"));
        assert_eq!(with_class(&doc, "polygon", "band").len(), 2);
        assert!(svg.contains("cluster 2 (n=2)"));
    }

    #[test]
    fn representatives_rank_by_volume_then_key() {
        let keys = vec![ODKey::new("B", "C"), ODKey::new("A", "C"), ODKey::new("A", "D")];
        let ranked = top_by_volume(&[0, 1, 2], &keys, &[10.0, 10.0, 20.0], 5);
        assert_eq!(ranked, vec![2, 1, 0]);
        assert_eq!(top_by_volume(&[0, 1, 2], &keys, &[10.0, 10.0, 20.0], 2), vec![2, 1]);
    }

    #[test]
    fn representatives_draw_small_clusters_whole_and_accent_highlights() {
        let keys: Vec<ODKey> = ["MSP-ANC", "MSP-BOI", "ATL-SAV"].iter().map(|k| k.parse().unwrap()).collect();
        let rows = [vec![0.1, 0.2], vec![0.3, 0.1], vec![0.5, 0.5]];
        let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let spec = FigureSpec {
            highlight: vec![keys[0].clone()],
            ..FigureSpec::new(FigureKind::Representatives)
        };
        let svg = plot_representatives(&refs, &[0, 0, 1], &keys, &[5.0, 9.0, 1.0], &x_labels(2), 5, "top", &spec).unwrap();
        let doc = parse(&svg);
        let lines = with_class(&doc, "polyline", "representative");
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0].attribute("data-key"), Some("MSP-BOI"));
        let hl = with_class(&doc, "polyline", "highlight");
        assert_eq!(hl.len(), 1);
        assert_eq!(hl[0].attribute("stroke"), Some(ACCENT));
        assert_eq!(hl[0].attribute("data-key"), Some("MSP-ANC"));
    }

    #[test]
    fn unknown_highlight_is_rejected() {
        let keys = vec![ODKey::new("A", "B")];
        let spec = FigureSpec {
            highlight: vec![ODKey::new("X", "Y")],
            ..FigureSpec::new(FigureKind::Representatives)
        };
        let err = plot_representatives(&[&[0.0]], &[0], &keys, &[1.0], &x_labels(1), 5, "t", &spec).unwrap_err();
        assert_eq!(err, FigureError::UnknownHighlight(ODKey::new("X", "Y")));
    }

    #[test]
    fn size_distribution_annotates_gini_in_given_order() {
        let methods = vec![("balanced".to_string(), vec![2, 2, 2]), ("skewed".to_string(), vec![3, 1])];
        let svg = plot_size_distribution(&methods, "sizes").unwrap();
        let doc = parse(&svg);
        let notes: Vec<&str> = with_class(&doc, "text", "gini").iter().filter_map(|n| n.text()).collect();
        assert_eq!(notes, vec!["Gini = 0.0000", "Gini = 0.2500"]);
        let titles: Vec<&str> = with_class(&doc, "text", "panel-title").iter().filter_map(|n| n.text()).collect();
        assert_eq!(titles, vec!["balanced", "skewed"]);
        let bars = with_class(&doc, "rect", "bar");
        assert_eq!(bars.len(), 5);
        let heights: Vec<&str> = bars[..3].iter().filter_map(|b| b.attribute("height")).collect();
        assert!(heights.windows(2).all(|w| w[0] == w[1]));
    }

    fn raw_series(key: &str, shares: &[f64]) -> (ODKey, ShareSeries) {
        let k: ODKey = key.parse().unwrap();
        let n = shares.len();
        (
            k.clone(),
            ShareSeries {
                key: k,
                index: (0..n).map(|i| TimePoint::Year(2006 + i as i32)).collect(),
                local: shares.to_vec(),
                total: vec![1.0; n],
                share: shares.iter().map(|s| Some(*s)).collect(),
            },
        )
    }

    #[test]
    fn overlay_uses_unit_axis_and_keeps_disjoint_bands_together() {
        let raw: BTreeMap<_, _> = [raw_series("A-B", &[0.1, 0.15]), raw_series("C-D", &[0.8, 0.85])].into();
        let keys: Vec<ODKey> = raw.keys().cloned().collect();
        let svg = plot_original_magnitude_overlay(
            &[0, 0],
            &keys,
            &raw,
            &x_labels(2),
            "overlay",
            &FigureSpec::new(FigureKind::OriginalMagnitudeOverlay),
        )
        .unwrap();
        let doc = parse(&svg);
        assert_eq!(with_class(&doc, "polyline", "member").len(), 2);
        let ticks: Vec<&str> = with_class(&doc, "text", "tick").iter().filter_map(|n| n.text()).collect();
        assert!(ticks.contains(&"0.00") && ticks.contains(&"1.00"));
        // every plotted y lies inside the unit frame
        let frame = Frame::new(panel_origin(0, 1), 2, (0.0, 1.0));
        for line in with_class(&doc, "polyline", "member") {
            for pt in line.attribute("points").unwrap().split(' ') {
                let y: f64 = pt.split(',').nth(1).unwrap().parse().unwrap();
                assert!(y >= frame.y(1.0) - 1e-9 && y <= frame.y(0.0) + 1e-9);
            }
        }
    }

    #[test]
    fn overlay_single_member_and_missing_raw() {
        let raw: BTreeMap<_, _> = [raw_series("A-B", &[0.4, 0.5])].into();
        let keys = vec![ODKey::new("A", "B"), ODKey::new("X", "Y")];
        let spec = FigureSpec {
            clusters: Some(vec![0]),
            ..FigureSpec::new(FigureKind::OriginalMagnitudeOverlay)
        };
        let svg = plot_original_magnitude_overlay(&[0, 1], &keys, &raw, &x_labels(2), "o", &spec).unwrap();
        assert_eq!(with_class(&parse(&svg), "polyline", "member").len(), 1);
        let all = FigureSpec::new(FigureKind::OriginalMagnitudeOverlay);
        let err = plot_original_magnitude_overlay(&[0, 1], &keys, &raw, &x_labels(2), "o", &all).unwrap_err();
        assert_eq!(err, FigureError::MissingRawSeries(ODKey::new("X", "Y")));
        let empty = FigureSpec {
            clusters: Some(vec![7]),
            ..FigureSpec::new(FigureKind::OriginalMagnitudeOverlay)
        };
        let err = plot_original_magnitude_overlay(&[0, 1], &keys, &raw, &x_labels(2), "o", &empty).unwrap_err();
        assert_eq!(err, FigureError::EmptyCluster(7));
    }

    #[test]
    fn out_of_range_shares_are_clamped() {
        let raw: BTreeMap<_, _> = [raw_series("A-B", &[1.5, -0.2])].into();
        let keys = vec![ODKey::new("A", "B")];
        let a = plot_original_magnitude_overlay(&[0], &keys, &raw, &x_labels(2), "o", &FigureSpec::new(FigureKind::OriginalMagnitudeOverlay)).unwrap();
        let raw2: BTreeMap<_, _> = [raw_series("A-B", &[1.0, 0.0])].into();
        let b = plot_original_magnitude_overlay(&[0], &keys, &raw2, &x_labels(2), "o", &FigureSpec::new(FigureKind::OriginalMagnitudeOverlay)).unwrap();
        assert_eq!(a, b);
    }
}
