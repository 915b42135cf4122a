//! Local-share time series per directional O&D pair.
//!
//! The local share of a leg in a period is `n_local / (n_local + n_transfer)`;
//! the transfer share is its complement. Periods with no traffic carry a
//! missing share rather than zero.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::ingest::{AirportCategoryTable, LegCountLedger};

#[derive(Debug, Error, PartialEq)]
pub enum SharesError {
    #[error("series {key} has {count} missing point(s)")]
    MissingValues { key: ODKey, count: usize },
    #[error("invalid quarter `{0}`")]
    InvalidQuarter(String),
}

/// Directional origin→destination pair. `A→B` and `B→A` are distinct.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ODKey {
    pub origin: String,
    pub dest: String,
}

impl ODKey {
    pub fn new(origin: &str, dest: &str) -> Self {
        Self {
            origin: origin.to_string(),
            dest: dest.to_string(),
        }
    }

    pub fn reversed(&self) -> Self {
        Self::new(&self.dest, &self.origin)
    }
}

impl fmt::Display for ODKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.origin, self.dest)
    }
}

impl FromStr for ODKey {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (o, d) = s
            .split_once(['-', '>', ':'])
            .ok_or_else(|| format!("expected ORIGIN-DEST, got `{s}`"))?;
        let (o, d) = (o.trim().to_ascii_uppercase(), d.trim_start_matches('>').trim().to_ascii_uppercase());
        if o.is_empty() || d.is_empty() || o == d {
            return Err(format!("invalid O&D pair `{s}`"));
        }
        Ok(Self::new(&o, &d))
    }
}

impl Serialize for ODKey {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ODKey {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// A calendar quarter, ordered chronologically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Quarter {
    pub year: i32,
    pub quarter: u8,
}

impl Quarter {
    pub fn new(year: i32, quarter: u8) -> Option<Self> {
        (1..=4).contains(&quarter).then_some(Self { year, quarter })
    }

    pub fn next(self) -> Self {
        if self.quarter == 4 {
            Self {
                year: self.year + 1,
                quarter: 1,
            }
        } else {
            Self {
                year: self.year,
                quarter: self.quarter + 1,
            }
        }
    }

    fn ordinal(self) -> i64 {
        self.year as i64 * 4 + (self.quarter as i64 - 1)
    }
}

impl fmt::Display for Quarter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}Q{}", self.year, self.quarter)
    }
}

impl FromStr for Quarter {
    type Err = SharesError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || SharesError::InvalidQuarter(s.to_string());
        let up = s.trim().to_ascii_uppercase();
        let (y, q) = up.split_once('Q').ok_or_else(bad)?;
        let year = y.trim_end_matches(['-', ' ']).parse().map_err(|_| bad())?;
        let q = q.parse().map_err(|_| bad())?;
        Quarter::new(year, q).ok_or_else(bad)
    }
}

impl Serialize for Quarter {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Quarter {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// Inclusive range of quarters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuarterSpan {
    pub start: Quarter,
    pub end: Quarter,
}

impl QuarterSpan {
    pub fn new(start: Quarter, end: Quarter) -> Self {
        Self { start, end }
    }

    pub fn quarters(&self) -> impl Iterator<Item = Quarter> {
        let end = self.end;
        std::iter::successors(Some(self.start), |q| Some(q.next())).take_while(move |q| *q <= end)
    }

    pub fn len(&self) -> usize {
        (self.end.ordinal() - self.start.ordinal() + 1).max(0) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl Default for QuarterSpan {
    fn default() -> Self {
        Self {
            start: Quarter { year: 2006, quarter: 1 },
            end: Quarter { year: 2024, quarter: 3 },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TimePoint {
    Quarter(Quarter),
    Year(i32),
}

impl TimePoint {
    pub fn year(&self) -> i32 {
        match self {
            TimePoint::Quarter(q) => q.year,
            TimePoint::Year(y) => *y,
        }
    }
}

impl fmt::Display for TimePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TimePoint::Quarter(q) => q.fmt(f),
            TimePoint::Year(y) => y.fmt(f),
        }
    }
}

/// Local/total counts and local share for one O&D pair over time.
#[derive(Debug, Clone, PartialEq)]
pub struct ShareSeries {
    pub key: ODKey,
    pub index: Vec<TimePoint>,
    pub local: Vec<f64>,
    pub total: Vec<f64>,
    /// `None` where total is zero.
    pub share: Vec<Option<f64>>,
}

fn share_of(local: f64, total: f64) -> Option<f64> {
    (total > 0.0).then(|| (local / total).clamp(0.0, 1.0))
}

impl ShareSeries {
    fn from_counts(key: ODKey, index: Vec<TimePoint>, local: Vec<f64>, total: Vec<f64>) -> Self {
        let share = local.iter().zip(&total).map(|(&l, &t)| share_of(l, t)).collect();
        Self {
            key,
            index,
            local,
            total,
            share,
        }
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn missing_count(&self) -> usize {
        self.share.iter().filter(|s| s.is_none()).count()
    }

    /// Share values, or `MissingValues` if any point is undefined.
    pub fn complete_shares(&self) -> Result<Vec<f64>, SharesError> {
        self.share
            .iter()
            .copied()
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| SharesError::MissingValues {
                key: self.key.clone(),
                count: self.missing_count(),
            })
    }

    pub fn total_passengers(&self) -> f64 {
        self.total.iter().sum()
    }
}

pub fn build_quarterly_series(ledger: &LegCountLedger, key: &ODKey, span: QuarterSpan) -> ShareSeries {
    let mut index = Vec::with_capacity(span.len());
    let mut local = Vec::with_capacity(span.len());
    let mut total = Vec::with_capacity(span.len());
    for q in span.quarters() {
        let counts = ledger.get(key, q).unwrap_or_default();
        index.push(TimePoint::Quarter(q));
        local.push(counts.n_local());
        total.push(counts.n_total());
    }
    ShareSeries::from_counts(key.clone(), index, local, total)
}

/// Quarterly series for every leg present in the ledger.
pub fn build_all_quarterly(ledger: &LegCountLedger, span: QuarterSpan) -> BTreeMap<ODKey, ShareSeries> {
    ledger
        .legs()
        .into_iter()
        .map(|k| {
            let s = build_quarterly_series(ledger, &k, span);
            (k, s)
        })
        .collect()
}

pub fn transfer_share(series: &ShareSeries) -> Vec<Option<f64>> {
    series.share.iter().map(|s| s.map(|v| 1.0 - v)).collect()
}

/// Collapses quarters into calendar years by summing counts; the yearly
/// share is the ratio of the yearly sums.
pub fn aggregate_yearly(series: &ShareSeries, drop_partial_final_year: bool) -> ShareSeries {
    let mut years: BTreeMap<i32, (f64, f64, usize)> = BTreeMap::new();
    for ((tp, &l), &t) in series.index.iter().zip(&series.local).zip(&series.total) {
        let slot = years.entry(tp.year()).or_insert((0.0, 0.0, 0));
        slot.0 += l;
        slot.1 += t;
        slot.2 += 1;
    }
    if drop_partial_final_year {
        if let Some((&y, &(_, _, n))) = years.iter().next_back() {
            if n < 4 {
                years.remove(&y);
            }
        }
    }
    let index = years.keys().map(|&y| TimePoint::Year(y)).collect();
    let local = years.values().map(|v| v.0).collect();
    let total = years.values().map(|v| v.1).collect();
    ShareSeries::from_counts(series.key.clone(), index, local, total)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionCriteria {
    pub activity_start: Quarter,
    pub require_large_hub: bool,
    pub min_share_exclusive: f64,
}

impl Default for SelectionCriteria {
    fn default() -> Self {
        Self {
            activity_start: Quarter { year: 2021, quarter: 1 },
            require_large_hub: true,
            min_share_exclusive: 0.0,
        }
    }
}

impl fmt::Display for SelectionCriteria {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "share > {} at every quarter since {}{}",
            self.min_share_exclusive,
            self.activity_start,
            if self.require_large_hub {
                ", at least one large-hub endpoint"
            } else {
                ""
            }
        )
    }
}

fn qualifies(series: &ShareSeries, criteria: &SelectionCriteria) -> bool {
    let mut window = series
        .index
        .iter()
        .zip(&series.share)
        .filter(|(tp, _)| match tp {
            TimePoint::Quarter(q) => *q >= criteria.activity_start,
            TimePoint::Year(y) => *y >= criteria.activity_start.year,
        })
        .peekable();
    window.peek().is_some()
        && window.all(|(_, s)| matches!(s, Some(v) if *v > criteria.min_share_exclusive))
}

/// Keys meeting the hub and consistent-activity rules, sorted by (origin, dest).
pub fn select_od_pairs(
    all: &BTreeMap<ODKey, ShareSeries>,
    criteria: &SelectionCriteria,
    categories: &AirportCategoryTable,
) -> Vec<ODKey> {
    all.iter()
        .filter(|(k, _)| {
            !criteria.require_large_hub || categories.is_large(&k.origin) || categories.is_large(&k.dest)
        })
        .filter(|(_, s)| qualifies(s, criteria))
        .map(|(k, _)| k.clone())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizedSeries {
    pub key: ODKey,
    pub values: Vec<f64>,
}

/// Z-score with population standard deviation; constant input maps to zeros.
pub fn z_normalize(values: &[f64]) -> Vec<f64> {
    let n = values.len() as f64;
    if values.is_empty() {
        return Vec::new();
    }
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();
    if sd <= f64::EPSILON * mean.abs().max(1.0) {
        return vec![0.0; values.len()];
    }
    values.iter().map(|v| (v - mean) / sd).collect()
}

pub fn standardize(series: &ShareSeries) -> Result<StandardizedSeries, SharesError> {
    let values = series.complete_shares()?;
    Ok(StandardizedSeries {
        key: series.key.clone(),
        values: z_normalize(&values),
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes series rows as `origin,dest,year[,quarter],local,total,share`.
/// Missing shares are empty fields. The quarter column is present only when
/// the first series is quarterly.
pub fn write_series_csv<'a, W, I>(sink: W, series: I) -> csv::Result<()>
where
    W: Write,
    I: IntoIterator<Item = &'a ShareSeries>,
{
    let mut w = csv::Writer::from_writer(sink);
    let mut header_done = false;
    for s in series {
        let quarterly = matches!(s.index.first(), Some(TimePoint::Quarter(_)));
        if !header_done {
            let mut h = vec!["origin", "dest", "year"];
            if quarterly {
                h.push("quarter");
            }
            h.extend(["local", "total", "share"]);
            w.write_record(&h)?;
            header_done = true;
        }
        for i in 0..s.len() {
            let mut row = vec![s.key.origin.clone(), s.key.dest.clone()];
            match s.index[i] {
                TimePoint::Quarter(q) => {
                    row.push(q.year.to_string());
                    row.push(q.quarter.to_string());
                }
                TimePoint::Year(y) => row.push(y.to_string()),
            }
            row.push(s.local[i].to_string());
            row.push(s.total[i].to_string());
            row.push(fmt_opt(s.share[i]));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{accumulate_leg_counts, AirportCategory, MarketItineraryRecord};
    use proptest::prelude::*;

    fn q(y: i32, n: u8) -> Quarter {
        Quarter::new(y, n).unwrap()
    }

    fn itin(year: i32, quarter: u8, routing: &[&str], pax: f64) -> MarketItineraryRecord {
        MarketItineraryRecord {
            year,
            quarter,
            routing: routing.iter().map(|s| s.to_string()).collect(),
            passengers: pax,
        }
    }

    fn fig1_ledger() -> LegCountLedger {
        accumulate_leg_counts(&[
            itin(2023, 1, &["ATL", "MEM"], 20.0),
            itin(2023, 1, &["ANC", "SEA", "ATL", "MEM"], 30.0),
            itin(2023, 1, &["DCA", "ATL", "MEM"], 40.0),
            itin(2023, 1, &["MCO", "ATL", "MEM"], 10.0),
            itin(2023, 2, &["ATL", "MEM"], 7.0),
        ])
    }

    fn series(key: ODKey, local: &[f64], total: &[f64], start: Quarter) -> ShareSeries {
        let index = std::iter::successors(Some(start), |q| Some(q.next()))
            .take(local.len())
            .map(TimePoint::Quarter)
            .collect();
        ShareSeries::from_counts(key, index, local.to_vec(), total.to_vec())
    }

    #[test]
    fn quarterly_series_from_fig1() {
        let key = ODKey::new("ATL", "MEM");
        let s = build_quarterly_series(&fig1_ledger(), &key, QuarterSpan::new(q(2023, 1), q(2023, 3)));
        assert_eq!(s.len(), 3);
        assert_eq!(s.local, vec![20.0, 7.0, 0.0]);
        assert_eq!(s.total, vec![100.0, 7.0, 0.0]);
        assert_eq!(s.share, vec![Some(0.2), Some(1.0), None]);
        assert_eq!(transfer_share(&s), vec![Some(0.8), Some(0.0), None]);
    }

    #[test]
    fn transfer_of_quarter_share() {
        let s = series(ODKey::new("A", "B"), &[1.0], &[4.0], q(2020, 1));
        assert_eq!(transfer_share(&s), vec![Some(0.75)]);
    }

    #[test]
    fn yearly_is_ratio_of_sums() {
        let s = series(ODKey::new("A", "B"), &[10., 10., 0., 0.], &[40., 40., 20., 20.], q(2020, 1));
        let y = aggregate_yearly(&s, true);
        assert_eq!(y.index, vec![TimePoint::Year(2020)]);
        assert_eq!((y.local[0], y.total[0]), (20.0, 120.0));
        assert!((y.share[0].unwrap() - 20.0 / 120.0).abs() < 1e-15);
        // mean of quarterly shares would have been 0.125
        assert!((y.share[0].unwrap() - 0.125).abs() > 0.04);
    }

    #[test]
    fn homogeneous_year_keeps_share() {
        let s = series(ODKey::new("A", "B"), &[3.; 4], &[8.; 4], q(2020, 1));
        assert_eq!(aggregate_yearly(&s, false).share, vec![Some(3.0 / 8.0)]);
    }

    #[test]
    fn partial_final_year_dropped_only_when_asked() {
        let s = series(ODKey::new("A", "B"), &[1.; 7], &[2.; 7], q(2023, 1));
        assert_eq!(s.index.last(), Some(&TimePoint::Quarter(q(2024, 3))));
        let kept = aggregate_yearly(&s, false);
        assert_eq!(kept.index, vec![TimePoint::Year(2023), TimePoint::Year(2024)]);
        let dropped = aggregate_yearly(&s, true);
        assert_eq!(dropped.index, vec![TimePoint::Year(2023)]);
    }

    fn cats() -> AirportCategoryTable {
        let mut t = AirportCategoryTable::new();
        t.insert("ATL", AirportCategory::Large);
        t.insert("MEM", AirportCategory::Medium);
        t.insert("BTV", AirportCategory::NonHub);
        t.insert("PWM", AirportCategory::NonHub);
        t
    }

    #[test]
    fn selection_rules() {
        let start = q(2020, 1);
        let mut all = BTreeMap::new();
        let good = ODKey::new("ATL", "MEM");
        all.insert(good.clone(), series(good.clone(), &[1.; 16], &[2.; 16], start));
        // zero local share in 2022Q3 (index 10)
        let mut local = [1.; 16];
        local[10] = 0.0;
        let zero = ODKey::new("MEM", "ATL");
        all.insert(zero.clone(), series(zero, &local, &[2.; 16], start));
        let nonhub = ODKey::new("BTV", "PWM");
        all.insert(nonhub.clone(), series(nonhub.clone(), &[1.; 16], &[2.; 16], start));
        // missing quarter in the window
        let mut total = [2.; 16];
        total[14] = 0.0;
        let gap = ODKey::new("ATL", "BTV");
        all.insert(gap.clone(), series(gap, &[1.; 16], &total, start));
        // zero share before the window does not matter
        let mut early = [1.; 16];
        early[0] = 0.0;
        let old = ODKey::new("BTV", "ATL");
        all.insert(old.clone(), series(old.clone(), &early, &[2.; 16], start));

        let crit = SelectionCriteria::default();
        assert_eq!(select_od_pairs(&all, &crit, &cats()), vec![good.clone(), old.clone()]);

        let loose = SelectionCriteria {
            require_large_hub: false,
            ..crit
        };
        assert_eq!(select_od_pairs(&all, &loose, &cats()), vec![good, old, nonhub]);

        let tight = SelectionCriteria {
            min_share_exclusive: 0.5,
            ..crit
        };
        assert!(select_od_pairs(&all, &tight, &cats()).is_empty());
    }

    #[test]
    fn standardize_examples() {
        let z = z_normalize(&[1., 2., 3.]);
        let expect = [-1.224744871391589, 0.0, 1.224744871391589];
        for (a, b) in z.iter().zip(expect) {
            assert!((a - b).abs() < 1e-6);
        }
        assert_eq!(z_normalize(&[0.4, 0.4, 0.4]), vec![0.0; 3]);
        let zz = z_normalize(&z);
        for (a, b) in z.iter().zip(&zz) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn standardize_rejects_missing() {
        let s = series(ODKey::new("A", "B"), &[1., 0.], &[2., 0.], q(2020, 1));
        assert_eq!(
            standardize(&s),
            Err(SharesError::MissingValues {
                key: ODKey::new("A", "B"),
                count: 1
            })
        );
        let ok = series(ODKey::new("A", "B"), &[1., 3.], &[4., 4.], q(2020, 1));
        assert_eq!(standardize(&ok).unwrap().values, vec![-1.0, 1.0]);
    }

    #[test]
    fn export_has_empty_missing_field() {
        let s = series(ODKey::new("A", "B"), &[1., 0.], &[2., 0.], q(2020, 1));
        let mut buf = Vec::new();
        write_series_csv(&mut buf, [&s]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "origin,dest,year,quarter,local,total,share\nA,B,2020,1,1,2,0.5\nA,B,2020,2,0,0,\n"
        );
    }

    #[test]
    fn parse_keys_and_quarters() {
        assert_eq!("msp->anc".parse::<ODKey>().unwrap(), ODKey::new("MSP", "ANC"));
        assert_eq!("ATL-MEM".parse::<ODKey>().unwrap(), ODKey::new("ATL", "MEM"));
        assert!("ATL-ATL".parse::<ODKey>().is_err());
        assert_eq!("2021Q1".parse::<Quarter>().unwrap(), q(2021, 1));
        assert_eq!("2024-q3".parse::<Quarter>().unwrap(), q(2024, 3));
        assert!("2024Q5".parse::<Quarter>().is_err());
        assert_eq!(QuarterSpan::default().len(), 75);
    }

    proptest! {
        #[test]
        fn share_bounds_complement_and_scale_invariance(
            counts in prop::collection::vec((0.0..500.0f64, 0.0..500.0f64), 1..16),
            scale in 0.01..1000.0f64,
        ) {
            let local: Vec<f64> = counts.iter().map(|c| c.0).collect();
            let total: Vec<f64> = counts.iter().map(|c| c.0 + c.1).collect();
            let s = series(ODKey::new("A", "B"), &local, &total, q(2019, 1));
            let scaled = series(
                ODKey::new("A", "B"),
                &local.iter().map(|v| v * scale).collect::<Vec<_>>(),
                &total.iter().map(|v| v * scale).collect::<Vec<_>>(),
                q(2019, 1),
            );
            for ((sh, tr), sc) in s.share.iter().zip(transfer_share(&s)).zip(&scaled.share) {
                match (sh, tr, sc) {
                    (Some(a), Some(b), Some(c)) => {
                        prop_assert!((0.0..=1.0).contains(a));
                        prop_assert!((a + b - 1.0).abs() <= 1e-12);
                        prop_assert!((a - c).abs() <= 1e-12);
                    }
                    (None, None, None) => {}
                    other => prop_assert!(false, "mismatch {:?}", other),
                }
            }
            let y = aggregate_yearly(&s, false);
            prop_assert!((y.local.iter().sum::<f64>() - local.iter().sum::<f64>()).abs() <= 1e-9);
            prop_assert!((y.total.iter().sum::<f64>() - total.iter().sum::<f64>()).abs() <= 1e-9);
        }

        #[test]
        fn z_scores_have_unit_moments(values in prop::collection::vec(-5.0..5.0f64, 2..30)) {
            let z = z_normalize(&values);
            let n = z.len() as f64;
            let mean = z.iter().sum::<f64>() / n;
            let var = z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            if z.iter().all(|v| *v == 0.0) {
                prop_assert!(values.iter().all(|v| (v - values[0]).abs() < 1e-12));
            } else {
                prop_assert!(mean.abs() < 1e-9);
                prop_assert!((var.sqrt() - 1.0).abs() < 1e-9);
            }
        }

        #[test]
        fn selection_is_monotone_in_threshold(
            shares in prop::collection::vec(prop::collection::vec(0.0..1.0f64, 8), 1..10),
            lo in 0.0..0.5f64,
            bump in 0.0..0.5f64,
        ) {
            let mut all = BTreeMap::new();
            for (i, sh) in shares.iter().enumerate() {
                let key = ODKey::new("ATL", &format!("X{i:02}"));
                let total = vec![10.0; sh.len()];
                let local: Vec<f64> = sh.iter().map(|v| v * 10.0).collect();
                all.insert(key.clone(), series(key, &local, &total, q(2021, 1)));
            }
            let a = SelectionCriteria { min_share_exclusive: lo, ..Default::default() };
            let b = SelectionCriteria { min_share_exclusive: lo + bump, ..Default::default() };
            let wide = select_od_pairs(&all, &a, &cats());
            let narrow = select_od_pairs(&all, &b, &cats());
            prop_assert!(narrow.iter().all(|k| wide.contains(k)));
        }
    }
}
