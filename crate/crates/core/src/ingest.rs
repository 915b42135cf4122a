//! Itinerary and segment file parsing, plus final-leg passenger accounting.
//!
//! Market files carry one sampled itinerary per row with a colon-separated
//! routing (`ANC:SEA:ATL:MEM`). Only the final leg of each routing is
//! credited: routings of exactly two airports count as local passengers on
//! that leg, longer routings count as transfer passengers.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::shares::{ODKey, Quarter};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("column `{0}` not found in header")]
    MissingColumn(String),
    #[error("line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("input has no header row or no data rows")]
    EmptyFile,
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// A data row rejected by the parser in lenient mode.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RowIssue {
    pub line: u64,
    pub reason: String,
}

/// Records parsed from one file, plus the rows skipped in lenient mode.
#[derive(Debug, Clone, PartialEq)]
pub struct Parsed<T> {
    pub records: Vec<T>,
    pub skipped: Vec<RowIssue>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParseOptions {
    pub delimiter: u8,
    /// Skip and count malformed rows instead of failing.
    pub lenient: bool,
}

impl Default for ParseOptions {
    fn default() -> Self {
        Self {
            delimiter: b',',
            lenient: true,
        }
    }
}

/// Column names of a market (itinerary) file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct MarketSchema {
    pub year: String,
    pub quarter: String,
    pub routing: String,
    pub passengers: String,
}

impl Default for MarketSchema {
    fn default() -> Self {
        Self {
            year: "Year".into(),
            quarter: "Quarter".into(),
            routing: "AirportGroup".into(),
            passengers: "Passengers".into(),
        }
    }
}

/// Whether segment rows are keyed by month or by quarter.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PeriodColumn {
    Month(String),
    Quarter(String),
}

/// Column names of a segment file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmentSchema {
    pub year: String,
    pub period: PeriodColumn,
    pub carrier: String,
    pub origin: String,
    pub dest: String,
    pub passengers: String,
    pub departures: String,
    pub seats: String,
}

impl Default for SegmentSchema {
    fn default() -> Self {
        Self {
            year: "YEAR".into(),
            period: PeriodColumn::Month("MONTH".into()),
            carrier: "UNIQUE_CARRIER".into(),
            origin: "ORIGIN".into(),
            dest: "DEST".into(),
            passengers: "PASSENGERS".into(),
            departures: "DEPARTURES_PERFORMED".into(),
            seats: "SEATS".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketItineraryRecord {
    pub year: i32,
    pub quarter: u8,
    pub routing: Vec<String>,
    pub passengers: f64,
}

impl MarketItineraryRecord {
    pub fn period(&self) -> Quarter {
        Quarter::new(self.year, self.quarter).expect("validated record")
    }

    /// The leg the itinerary ends on.
    pub fn final_leg(&self) -> ODKey {
        let m = self.routing.len();
        ODKey::new(&self.routing[m - 2], &self.routing[m - 1])
    }

    pub fn is_local(&self) -> bool {
        self.routing.len() == 2
    }

    fn validate(&self) -> Result<(), String> {
        if !(1..=4).contains(&self.quarter) {
            return Err(format!("quarter {} outside 1..4", self.quarter));
        }
        if self.routing.len() < 2 {
            return Err("routing needs at least two airports".into());
        }
        if self.routing.iter().any(|a| a.is_empty()) {
            return Err("empty airport code in routing".into());
        }
        if let Some(w) = self.routing.windows(2).find(|w| w[0] == w[1]) {
            return Err(format!("repeated consecutive airport {}", w[0]));
        }
        check_count("passengers", self.passengers)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRecord {
    pub year: i32,
    pub quarter: u8,
    pub carrier: String,
    pub origin: String,
    pub dest: String,
    pub passengers: f64,
    pub departures: f64,
    pub seats: f64,
}

fn check_count(name: &str, v: f64) -> Result<(), String> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(format!("{name} must be a nonnegative number, got {v}"))
    }
}

pub fn normalize_airport(code: &str) -> String {
    code.trim().to_ascii_uppercase()
}

fn column_index(headers: &csv::StringRecord, name: &str) -> Result<usize, IngestError> {
    headers
        .iter()
        .position(|h| h.trim().eq_ignore_ascii_case(name.trim()))
        .ok_or_else(|| IngestError::MissingColumn(name.to_string()))
}

fn field(row: &csv::StringRecord, idx: usize) -> Result<&str, String> {
    row.get(idx)
        .map(str::trim)
        .ok_or_else(|| format!("missing field {}", idx + 1))
}

fn parse_num<T: FromStr>(row: &csv::StringRecord, idx: usize, what: &str) -> Result<T, String> {
    let raw = field(row, idx)?;
    raw.parse::<T>()
        .map_err(|_| format!("cannot parse {what} from `{raw}`"))
}

/// Shared driver: read the header, map each data row, and apply the
/// lenient/strict policy to rows the mapper rejects.
fn parse_rows<R, T, H, F>(
    source: R,
    opts: ParseOptions,
    resolve: H,
    mut map_row: F,
) -> Result<Parsed<T>, IngestError>
where
    R: Read,
    H: FnOnce(&csv::StringRecord) -> Result<Vec<usize>, IngestError>,
    F: FnMut(&csv::StringRecord, &[usize]) -> Result<T, String>,
{
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(opts.delimiter)
        .flexible(true)
        .has_headers(true)
        .from_reader(source);
    let headers = reader.headers()?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].trim().is_empty()) {
        return Err(IngestError::EmptyFile);
    }
    let cols = resolve(&headers)?;

    let mut records = Vec::new();
    let mut skipped = Vec::new();
    let mut seen_rows = 0usize;
    for row in reader.records() {
        let row = row?;
        seen_rows += 1;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let outcome = if row.len() != headers.len() {
            Err(format!(
                "expected {} fields, found {}",
                headers.len(),
                row.len()
            ))
        } else {
            map_row(&row, &cols)
        };
        match outcome {
            Ok(rec) => records.push(rec),
            Err(reason) if opts.lenient => skipped.push(RowIssue { line, reason }),
            Err(reason) => return Err(IngestError::MalformedRow { line, reason }),
        }
    }
    if seen_rows == 0 {
        return Err(IngestError::EmptyFile);
    }
    Ok(Parsed { records, skipped })
}

/// Parse a market (itinerary) file.
pub fn parse_market_file<R: Read>(
    source: R,
    schema: &MarketSchema,
    opts: ParseOptions,
) -> Result<Parsed<MarketItineraryRecord>, IngestError> {
    parse_rows(
        source,
        opts,
        |h| {
            Ok(vec![
                column_index(h, &schema.year)?,
                column_index(h, &schema.quarter)?,
                column_index(h, &schema.routing)?,
                column_index(h, &schema.passengers)?,
            ])
        },
        |row, c| {
            let rec = MarketItineraryRecord {
                year: parse_num(row, c[0], "year")?,
                quarter: parse_num(row, c[1], "quarter")?,
                routing: field(row, c[2])?.split(':').map(normalize_airport).collect(),
                passengers: parse_num(row, c[3], "passengers")?,
            };
            rec.validate()?;
            Ok(rec)
        },
    )
}

/// Write market records back out with the given schema's column names.
pub fn write_market_file<W: Write>(
    sink: W,
    schema: &MarketSchema,
    delimiter: u8,
    records: &[MarketItineraryRecord],
) -> Result<(), IngestError> {
    let mut w = csv::WriterBuilder::new().delimiter(delimiter).from_writer(sink);
    w.write_record([&schema.year, &schema.quarter, &schema.routing, &schema.passengers])?;
    for r in records {
        w.write_record([
            r.year.to_string(),
            r.quarter.to_string(),
            r.routing.join(":"),
            r.passengers.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn month_to_quarter(month: u8) -> Option<u8> {
    match month {
        1..=12 => Some((month - 1) / 3 + 1),
        _ => None,
    }
}

/// Parse a segment file. Monthly rows are mapped onto quarters; nothing is
/// aggregated.
pub fn parse_segment_file<R: Read>(
    source: R,
    schema: &SegmentSchema,
    opts: ParseOptions,
) -> Result<Parsed<SegmentRecord>, IngestError> {
    let monthly = matches!(schema.period, PeriodColumn::Month(_));
    let period_name = match &schema.period {
        PeriodColumn::Month(n) | PeriodColumn::Quarter(n) => n.clone(),
    };
    parse_rows(
        source,
        opts,
        |h| {
            [
                &schema.year,
                &period_name,
                &schema.carrier,
                &schema.origin,
                &schema.dest,
                &schema.passengers,
                &schema.departures,
                &schema.seats,
            ]
            .into_iter()
            .map(|n| column_index(h, n))
            .collect()
        },
        |row, c| {
            let period: u8 = parse_num(row, c[1], "period")?;
            let quarter = if monthly {
                month_to_quarter(period).ok_or_else(|| format!("invalid month {period}"))?
            } else if (1..=4).contains(&period) {
                period
            } else {
                return Err(format!("invalid quarter {period}"));
            };
            let rec = SegmentRecord {
                year: parse_num(row, c[0], "year")?,
                quarter,
                carrier: field(row, c[2])?.to_ascii_uppercase(),
                origin: normalize_airport(field(row, c[3])?),
                dest: normalize_airport(field(row, c[4])?),
                passengers: parse_num(row, c[5], "passengers")?,
                departures: parse_num(row, c[6], "departures")?,
                seats: parse_num(row, c[7], "seats")?,
            };
            if rec.origin.is_empty() || rec.dest.is_empty() {
                return Err("empty airport code".into());
            }
            if rec.origin == rec.dest {
                return Err(format!("origin equals destination ({})", rec.origin));
            }
            check_count("passengers", rec.passengers)?;
            check_count("departures", rec.departures)?;
            check_count("seats", rec.seats)?;
            Ok(rec)
        },
    )
}

/// Write segment records with the given schema's column names. A monthly
/// schema gets the first month of each record's quarter.
pub fn write_segment_file<W: Write>(
    sink: W,
    schema: &SegmentSchema,
    delimiter: u8,
    records: &[SegmentRecord],
) -> Result<(), IngestError> {
    let (period_name, monthly) = match &schema.period {
        PeriodColumn::Month(n) => (n, true),
        PeriodColumn::Quarter(n) => (n, false),
    };
    let mut w = csv::WriterBuilder::new().delimiter(delimiter).from_writer(sink);
    w.write_record([
        &schema.year,
        period_name,
        &schema.carrier,
        &schema.origin,
        &schema.dest,
        &schema.passengers,
        &schema.departures,
        &schema.seats,
    ])?;
    for r in records {
        let period = if monthly { (r.quarter - 1) * 3 + 1 } else { r.quarter };
        w.write_record([
            r.year.to_string(),
            period.to_string(),
            r.carrier.clone(),
            r.origin.clone(),
            r.dest.clone(),
            r.passengers.to_string(),
            r.departures.to_string(),
            r.seats.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AirportCategory {
    Large,
    Medium,
    Small,
    NonHub,
    Unknown,
}

impl FromStr for AirportCategory {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace(['-', '_', ' '], "").as_str() {
            "large" => Ok(Self::Large),
            "medium" => Ok(Self::Medium),
            "small" => Ok(Self::Small),
            "nonhub" => Ok(Self::NonHub),
            other => Err(format!("unknown airport category `{other}`")),
        }
    }
}

impl fmt::Display for AirportCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::Large => "large",
            Self::Medium => "medium",
            Self::Small => "small",
            Self::NonHub => "nonhub",
            Self::Unknown => "unknown",
        };
        f.write_str(s)
    }
}

/// Hub classification of airports. Unlisted airports are `Unknown`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AirportCategoryTable {
    map: BTreeMap<String, AirportCategory>,
}

impl AirportCategoryTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, airport: &str, category: AirportCategory) {
        self.map.insert(normalize_airport(airport), category);
    }

    pub fn get(&self, airport: &str) -> AirportCategory {
        self.map
            .get(&normalize_airport(airport))
            .copied()
            .unwrap_or(AirportCategory::Unknown)
    }

    pub fn is_large(&self, airport: &str) -> bool {
        self.get(airport) == AirportCategory::Large
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Reads a two-column `airport,category` file. A header row is optional.
    pub fn parse<R: Read>(source: R, delimiter: u8) -> Result<Self, IngestError> {
        let mut reader = csv::ReaderBuilder::new()
            .delimiter(delimiter)
            .has_headers(false)
            .flexible(true)
            .from_reader(source);
        let mut table = Self::new();
        for (i, row) in reader.records().enumerate() {
            let row = row?;
            let line = row.position().map(|p| p.line()).unwrap_or(i as u64 + 1);
            if row.len() != 2 {
                return Err(IngestError::MalformedRow {
                    line,
                    reason: format!("expected 2 fields, found {}", row.len()),
                });
            }
            if i == 0 && row[0].trim().eq_ignore_ascii_case("airport") {
                continue;
            }
            let cat = row[1]
                .parse::<AirportCategory>()
                .map_err(|reason| IngestError::MalformedRow { line, reason })?;
            table.insert(&row[0], cat);
        }
        Ok(table)
    }

    pub fn write<W: Write>(&self, sink: W) -> Result<(), IngestError> {
        let mut w = csv::Writer::from_writer(sink);
        w.write_record(["airport", "category"])?;
        for (airport, cat) in &self.map {
            w.write_record([airport.as_str(), &cat.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Passenger count accumulated without rounding drift.
///
/// Values are held as integer multiples of 2^-40 so that addition is exact,
/// associative and commutative; any accumulation order gives the same bits.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PaxCount(i128);

const PAX_SCALE: f64 = (1u64 << 40) as f64;

impl PaxCount {
    pub const ZERO: Self = Self(0);

    pub fn from_f64(v: f64) -> Self {
        Self((v * PAX_SCALE).round() as i128)
    }

    pub fn to_f64(self) -> f64 {
        self.0 as f64 / PAX_SCALE
    }
}

impl std::ops::Add for PaxCount {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self(self.0 + rhs.0)
    }
}

impl std::ops::AddAssign for PaxCount {
    fn add_assign(&mut self, rhs: Self) {
        self.0 += rhs.0;
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LegPeriod {
    pub leg: ODKey,
    pub quarter: Quarter,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LegCounts {
    pub local: PaxCount,
    pub transfer: PaxCount,
}

impl LegCounts {
    pub fn n_local(&self) -> f64 {
        self.local.to_f64()
    }

    pub fn n_transfer(&self) -> f64 {
        self.transfer.to_f64()
    }

    pub fn n_total(&self) -> f64 {
        (self.local + self.transfer).to_f64()
    }
}

/// Local and transfer passengers per (final leg, quarter).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LegCountLedger {
    entries: BTreeMap<LegPeriod, LegCounts>,
}

impl LegCountLedger {
    pub fn get(&self, leg: &ODKey, quarter: Quarter) -> Option<LegCounts> {
        self.entries
            .get(&LegPeriod {
                leg: leg.clone(),
                quarter,
            })
            .copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&LegPeriod, &LegCounts)> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Distinct legs, in key order.
    pub fn legs(&self) -> Vec<ODKey> {
        let mut legs: Vec<ODKey> = self.entries.keys().map(|k| k.leg.clone()).collect();
        legs.dedup();
        legs
    }

    pub fn add(&mut self, record: &MarketItineraryRecord) {
        let slot = self
            .entries
            .entry(LegPeriod {
                leg: record.final_leg(),
                quarter: record.period(),
            })
            .or_default();
        let pax = PaxCount::from_f64(record.passengers);
        if record.is_local() {
            slot.local += pax;
        } else {
            slot.transfer += pax;
        }
    }

    /// Fold another ledger into this one.
    pub fn merge(&mut self, other: &LegCountLedger) {
        for (k, v) in &other.entries {
            let slot = self.entries.entry(k.clone()).or_default();
            slot.local += v.local;
            slot.transfer += v.transfer;
        }
    }

    pub fn total_passengers(&self) -> f64 {
        self.entries
            .values()
            .fold(PaxCount::ZERO, |acc, c| acc + c.local + c.transfer)
            .to_f64()
    }

    pub fn write_csv<W: Write>(&self, sink: W) -> Result<(), IngestError> {
        let mut w = csv::Writer::from_writer(sink);
        w.write_record(["origin", "dest", "year", "quarter", "n_local", "n_transfer"])?;
        for (k, c) in &self.entries {
            w.write_record([
                k.leg.origin.clone(),
                k.leg.dest.clone(),
                k.quarter.year.to_string(),
                k.quarter.quarter.to_string(),
                c.n_local().to_string(),
                c.n_transfer().to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn accumulate_leg_counts<'a, I>(records: I) -> LegCountLedger
where
    I: IntoIterator<Item = &'a MarketItineraryRecord>,
{
    let mut ledger = LegCountLedger::default();
    for r in records {
        ledger.add(r);
    }
    ledger
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const HEADER: &str = "Year,Quarter,AirportGroup,Passengers\n";

    fn parse(body: &str, lenient: bool) -> Result<Parsed<MarketItineraryRecord>, IngestError> {
        parse_market_file(
            format!("{HEADER}{body}").as_bytes(),
            &MarketSchema::default(),
            ParseOptions {
                lenient,
                ..Default::default()
            },
        )
    }

    fn rec(routing: &[&str], pax: f64) -> MarketItineraryRecord {
        MarketItineraryRecord {
            year: 2023,
            quarter: 1,
            routing: routing.iter().map(|s| s.to_string()).collect(),
            passengers: pax,
        }
    }

    #[test]
    fn parses_direct_and_connecting_rows() {
        let p = parse("2023,1,ATL:MEM,5\n2023,1,ANC:SEA:ATL:MEM,3\n", false).unwrap();
        assert_eq!(p.records, vec![rec(&["ATL", "MEM"], 5.0), rec(&["ANC", "SEA", "ATL", "MEM"], 3.0)]);
        assert!(p.skipped.is_empty());
    }

    #[test]
    fn codes_are_trimmed_and_uppercased() {
        let p = parse("2023,1, atl : mem ,5\n", false).unwrap();
        assert_eq!(p.records[0].routing, vec!["ATL", "MEM"]);
    }

    #[test]
    fn repeated_airport_is_malformed() {
        match parse("2023,1,ATL:MEM,5\n2023,1,ATL:ATL,5\n", false) {
            Err(IngestError::MalformedRow { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let p = parse("2023,1,ATL:MEM,5\n2023,1,ATL:ATL,5\n", true).unwrap();
        assert_eq!(p.records.len(), 1);
        assert_eq!(p.skipped.len(), 1);
        assert_eq!(p.skipped[0].line, 3);
    }

    #[test]
    fn bad_quarter_negative_pax_and_short_rows() {
        let p = parse("2023,5,ATL:MEM,5\n2023,1,ATL:MEM,-1\n2023,1,ATL\n2023,1,ATL,4\n", true).unwrap();
        assert!(p.records.is_empty());
        assert_eq!(p.skipped.len(), 4);
    }

    #[test]
    fn missing_column_and_empty_file() {
        let err = parse_market_file(
            "Year,Quarter,Passengers\n2023,1,4\n".as_bytes(),
            &MarketSchema::default(),
            ParseOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, IngestError::MissingColumn(c) if c == "AirportGroup"));
        let err = parse_market_file("".as_bytes(), &MarketSchema::default(), ParseOptions::default())
            .unwrap_err();
        assert!(matches!(err, IngestError::EmptyFile));
        assert!(matches!(parse("", true), Err(IngestError::EmptyFile)));
    }

    #[test]
    fn tab_delimited() {
        let src = "Year\tQuarter\tAirportGroup\tPassengers\n2023\t2\tDCA:ATL:MEM\t4\n";
        let p = parse_market_file(
            src.as_bytes(),
            &MarketSchema::default(),
            ParseOptions {
                delimiter: b'\t',
                lenient: false,
            },
        )
        .unwrap();
        assert_eq!(p.records[0].quarter, 2);
        assert_eq!(p.records[0].routing.len(), 3);
    }

    #[test]
    fn segment_month_maps_to_quarter() {
        let src = "YEAR,MONTH,UNIQUE_CARRIER,ORIGIN,DEST,PASSENGERS,DEPARTURES_PERFORMED,SEATS\n\
                   2012,7,DL,MEM,DTW,4100,62,5200\n2012,8,DL,MEM,DTW,4000,60,5000\n2012,13,DL,MEM,DTW,1,1,1\n";
        let p = parse_segment_file(src.as_bytes(), &SegmentSchema::default(), ParseOptions::default())
            .unwrap();
        assert_eq!(
            p.records[0],
            SegmentRecord {
                year: 2012,
                quarter: 3,
                carrier: "DL".into(),
                origin: "MEM".into(),
                dest: "DTW".into(),
                passengers: 4100.0,
                departures: 62.0,
                seats: 5200.0,
            }
        );
        // no aggregation of same carrier/segment/quarter
        assert_eq!(p.records.len(), 2);
        assert_eq!(p.skipped.len(), 1);
        let strict = parse_segment_file(
            src.as_bytes(),
            &SegmentSchema::default(),
            ParseOptions {
                lenient: false,
                ..Default::default()
            },
        );
        assert!(matches!(strict, Err(IngestError::MalformedRow { line: 4, .. })));
    }

    #[test]
    fn segment_file_round_trips() {
        let recs = vec![SegmentRecord {
            year: 2019,
            quarter: 4,
            carrier: "AA".into(),
            origin: "ORD".into(),
            dest: "ICT".into(),
            passengers: 900.0,
            departures: 8.0,
            seats: 1100.0,
        }];
        let quarterly = SegmentSchema {
            period: PeriodColumn::Quarter("QUARTER".into()),
            ..Default::default()
        };
        for schema in [SegmentSchema::default(), quarterly] {
            let mut buf = Vec::new();
            write_segment_file(&mut buf, &schema, b',', &recs).unwrap();
            let back = parse_segment_file(buf.as_slice(), &schema, ParseOptions::default()).unwrap();
            assert_eq!(back.records, recs);
        }
    }

    #[test]
    fn month_quarter_table() {
        let q: Vec<u8> = (1..=12).map(|m| month_to_quarter(m).unwrap()).collect();
        assert_eq!(q, vec![1, 1, 1, 2, 2, 2, 3, 3, 3, 4, 4, 4]);
        assert_eq!(month_to_quarter(0), None);
        assert_eq!(month_to_quarter(13), None);
    }

    #[test]
    fn fig1_itineraries_accumulate_on_final_leg() {
        let records = vec![
            rec(&["ATL", "MEM"], 20.0),
            rec(&["ANC", "SEA", "ATL", "MEM"], 30.0),
            rec(&["DCA", "ATL", "MEM"], 40.0),
            rec(&["MCO", "ATL", "MEM"], 10.0),
        ];
        let ledger = accumulate_leg_counts(&records);
        let c = ledger.get(&ODKey::new("ATL", "MEM"), Quarter::new(2023, 1).unwrap()).unwrap();
        assert_eq!((c.n_local(), c.n_transfer()), (20.0, 80.0));
        assert_eq!(ledger.len(), 1);
    }

    #[test]
    fn only_final_leg_is_credited() {
        let ledger = accumulate_leg_counts(&[rec(&["A", "B", "C"], 7.0)]);
        let q = Quarter::new(2023, 1).unwrap();
        let c = ledger.get(&ODKey::new("B", "C"), q).unwrap();
        assert_eq!((c.n_local(), c.n_transfer()), (0.0, 7.0));
        assert!(ledger.get(&ODKey::new("A", "B"), q).is_none());
        let single = accumulate_leg_counts(&[rec(&["ATL", "MEM"], 5.0)]);
        assert_eq!(single.get(&ODKey::new("ATL", "MEM"), q).unwrap().n_transfer(), 0.0);
        assert!(accumulate_leg_counts(&[]).is_empty());
    }

    #[test]
    fn category_table_lookup() {
        let t = AirportCategoryTable::parse(
            "airport,category\nATL,large\nmem,medium\nBTV,non-hub\n".as_bytes(),
            b',',
        )
        .unwrap();
        assert_eq!(t.get("ATL"), AirportCategory::Large);
        assert_eq!(t.get("MEM"), AirportCategory::Medium);
        assert_eq!(t.get("BTV"), AirportCategory::NonHub);
        assert_eq!(t.get("XYZ"), AirportCategory::Unknown);
        assert!(AirportCategoryTable::parse("ATL,huge\n".as_bytes(), b',').is_err());
    }

    fn arb_record() -> impl Strategy<Value = MarketItineraryRecord> {
        let airports = prop::sample::select(vec!["ATL", "MEM", "SEA", "ANC", "DCA", "MCO", "ORD"]);
        (
            2019..2024i32,
            1..=4u8,
            prop::collection::vec(airports, 2..5),
            prop_oneof![(0u32..500).prop_map(f64::from), 0.0..250.0f64],
        )
            .prop_filter_map("consecutive duplicates", |(year, quarter, routing, pax)| {
                if routing.windows(2).any(|w| w[0] == w[1]) {
                    return None;
                }
                Some(MarketItineraryRecord {
                    year,
                    quarter,
                    routing: routing.into_iter().map(String::from).collect(),
                    passengers: pax,
                })
            })
    }

    proptest! {
        #[test]
        fn accumulation_is_order_independent_and_conserves_mass(
            records in prop::collection::vec(arb_record(), 0..60),
            seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let base = accumulate_leg_counts(&records);
            let mut shuffled = records.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(&accumulate_leg_counts(&shuffled), &base);

            let input: f64 = records.iter().map(|r| r.passengers).sum();
            prop_assert!((base.total_passengers() - input).abs() <= 1e-9 * input.max(1.0));

            // split-and-merge gives the same ledger
            let (a, b) = records.split_at(records.len() / 2);
            let mut merged = accumulate_leg_counts(b);
            merged.merge(&accumulate_leg_counts(a));
            prop_assert_eq!(merged, base);
        }

        #[test]
        fn market_file_round_trips(records in prop::collection::vec(arb_record(), 1..30)) {
            let schema = MarketSchema::default();
            let mut buf = Vec::new();
            write_market_file(&mut buf, &schema, b',', &records).unwrap();
            let parsed = parse_market_file(buf.as_slice(), &schema, ParseOptions { lenient: false, ..Default::default() }).unwrap();
            prop_assert_eq!(parsed.records, records);
        }
    }
}
