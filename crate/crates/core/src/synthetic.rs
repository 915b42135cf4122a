//! Seeded synthetic data: labelled shape families for recovery checks and a
//! small itinerary-level market fixture with known structure.

use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::cluster::seeded_rng;
use crate::distance::SeriesMatrix;
use crate::ingest::{
    accumulate_leg_counts, write_market_file, write_segment_file, AirportCategory, AirportCategoryTable, IngestError,
    MarketItineraryRecord, MarketSchema, SegmentRecord, SegmentSchema,
};
use crate::shares::{z_normalize, ODKey};

pub const SHAPE_LENGTH: usize = 19;

/// The three template families, indexed by ground-truth label.
pub fn shape_template(family: usize, t: usize) -> f64 {
    let t = t as f64;
    match family {
        0 => 0.2 + 0.6 * t / 18.0,
        1 => 0.8 - 0.6 * t / 18.0,
        2 => 0.2 + 0.6 * (t / 6.0).min(1.0),
        _ => panic!("no template {family}"),
    }
}

/// Noisy copies of the templates, family-major, with their true labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeSet {
    pub keys: Vec<ODKey>,
    pub rows: Vec<Vec<f64>>,
    pub truth: Vec<usize>,
}

impl ShapeSet {
    pub fn raw(&self) -> SeriesMatrix {
        SeriesMatrix::new(self.keys.clone(), self.rows.clone()).expect("equal-length rows")
    }

    pub fn standardized(&self) -> SeriesMatrix {
        self.raw().map_rows(z_normalize)
    }
}

/// `per_class` series from each template plus Gaussian noise of standard
/// deviation `sigma`.
pub fn shape_recovery_set(per_class: usize, sigma: f64, seed: u64) -> ShapeSet {
    let mut rng = seeded_rng(seed, 0);
    let noise = Normal::new(0.0, sigma).expect("finite sigma");
    let mut set = ShapeSet {
        keys: Vec::new(),
        rows: Vec::new(),
        truth: Vec::new(),
    };
    for family in 0..3 {
        for i in 0..per_class {
            set.keys.push(ODKey::new(&format!("F{family}"), &format!("S{i:03}")));
            set.rows
                .push((0..SHAPE_LENGTH).map(|t| shape_template(family, t) + noise.sample(&mut rng)).collect());
            set.truth.push(family);
        }
    }
    set
}

const HUBS: [&str; 8] = ["ATL", "BWI", "DEN", "DFW", "MSP", "ORD", "PHX", "SEA"];
const SPOKES: [&str; 12] = ["ALB", "ANC", "BOI", "BTV", "CHS", "GEG", "MEM", "OMA", "PVD", "SAV", "TUL", "XNA"];
const FEEDERS: [&str; 4] = ["BDL", "ICT", "LIT", "MSN"];

/// Yearly local-share trajectory families used by the fixture, in the
/// spirit of step-wise increases, decreases and stable levels.
fn trajectory(family: usize, level: f64, step_year: f64, x: f64) -> f64 {
    let ramp = |a: f64, b: f64| ((x - a) / (b - a)).clamp(0.0, 1.0);
    match family {
        0 => level,
        1 => level - 0.25 * ramp(2006.0, 2024.0),
        2 => level + 0.25 * ramp(2006.0, 2024.0),
        3 => level + 0.2 * ramp(step_year, step_year + 1.0),
        4 => level - 0.2 * ramp(step_year, step_year + 1.0),
        _ => level - 0.15 * ramp(2007.0, 2014.0) + 0.15 * ramp(2016.0, 2023.0),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarketFixture {
    pub records: Vec<MarketItineraryRecord>,
    pub categories: AirportCategoryTable,
    /// Pairs generated to pass the default selection, sorted.
    pub expected_selected: Vec<ODKey>,
}

/// Itinerary records for 2006Q1 through 2024Q3. Every hub-to-spoke pair
/// carries a local share that follows one of six trajectory families plus
/// seasonality and noise; a few extra pairs exercise the selection rules
/// (no large-hub endpoint, service ending before 2021, a quarter without
/// local traffic).
pub fn market_fixture(seed: u64) -> MarketFixture {
    let mut rng = seeded_rng(seed, 0);
    let noise = Normal::new(0.0, 0.02).expect("valid");
    let mut categories = AirportCategoryTable::new();
    for h in HUBS {
        categories.insert(h, AirportCategory::Large);
    }
    for (i, s) in SPOKES.iter().enumerate() {
        let cat = [AirportCategory::Medium, AirportCategory::Small, AirportCategory::NonHub][i % 3];
        categories.insert(s, cat);
    }
    for f in FEEDERS {
        categories.insert(f, AirportCategory::Small);
    }

    let quarters: Vec<(i32, u8)> = (2006..=2024)
        .flat_map(|y| (1..=4u8).map(move |q| (y, q)))
        .filter(|&(y, q)| y < 2024 || q <= 3)
        .collect();

    let mut records = Vec::new();
    let mut expected = Vec::new();
    let mut emit = |origin: &str, dest: &str, share: f64, total: f64, year: i32, quarter: u8, f1: &str, f2: &str| {
        let local = (share * total).round();
        let transfer = total - local;
        if local > 0.0 {
            records.push(MarketItineraryRecord {
                year,
                quarter,
                routing: vec![origin.into(), dest.into()],
                passengers: local,
            });
        }
        let first = (transfer * 0.6).round();
        for (feeder, pax) in [(f1, first), (f2, transfer - first)] {
            if pax > 0.0 {
                records.push(MarketItineraryRecord {
                    year,
                    quarter,
                    routing: vec![feeder.into(), origin.into(), dest.into()],
                    passengers: pax,
                });
            }
        }
    };

    let mut pair_index = 0usize;
    for (h, hub) in HUBS.iter().enumerate() {
        for (s, spoke) in SPOKES.iter().enumerate() {
            // a sparse but regular subset of hub-to-spoke markets
            if (h * 5 + s * 3) % 4 == 1 {
                continue;
            }
            let family = pair_index % 6;
            pair_index += 1;
            let level = rng.random_range(0.3..0.7);
            let step_year = rng.random_range(2009.0..2020.0);
            let seasonal = rng.random_range(0.0..0.06);
            let volume: f64 = rng.random_range(400.0..4000.0);
            let f1 = FEEDERS[(h + s) % FEEDERS.len()];
            let f2 = FEEDERS[(h + s + 1) % FEEDERS.len()];
            for &(y, q) in &quarters {
                let x = y as f64 + (q as f64 - 1.0) / 4.0;
                let season = seasonal * if q == 2 || q == 3 { 1.0 } else { -1.0 };
                let share = (trajectory(family, level, step_year, x) + season + noise.sample(&mut rng)).clamp(0.05, 0.95);
                let covid = if y == 2020 && q >= 2 { 0.4 } else { 1.0 };
                let total = (volume * covid * rng.random_range(0.9..1.1f64)).round();
                emit(hub, spoke, share, total, y, q, f1, f2);
            }
            expected.push(ODKey::new(hub, spoke));
        }
    }

    // spoke-to-spoke: no large-hub endpoint
    for &(y, q) in &quarters {
        emit("ALB", "BTV", 0.5, 300.0, y, q, "BDL", "ICT");
    }
    // service ends in 2019
    for &(y, q) in quarters.iter().filter(|(y, _)| *y < 2020) {
        emit("ORD", "ICT", 0.4, 800.0, y, q, "MSN", "LIT");
    }
    // a quarter with transfer traffic only after 2021
    for &(y, q) in &quarters {
        let share = if (y, q) == (2022, 1) { 0.0 } else { 0.35 };
        emit("DEN", "LIT", share, 900.0, y, q, "BDL", "MSN");
    }

    expected.sort();
    MarketFixture {
        records,
        categories,
        expected_selected: expected,
    }
}

/// Segment rows consistent with a market fixture: every leg with traffic
/// in a quarter gets two carriers' rows, with passengers scaled up from the
/// 10% itinerary sample and seats at an 82% load factor.
pub fn segment_fixture(market: &MarketFixture) -> Vec<SegmentRecord> {
    let ledger = accumulate_leg_counts(&market.records);
    let mut out = Vec::new();
    for (lp, counts) in ledger.iter() {
        let pax = counts.n_total() * 10.0;
        for (carrier, part) in [("AA", 0.7), ("BB", 0.3)] {
            let passengers = (pax * part).round();
            let seats = (passengers / 0.82).round();
            out.push(SegmentRecord {
                year: lp.quarter.year,
                quarter: lp.quarter.quarter,
                carrier: carrier.into(),
                origin: lp.leg.origin.clone(),
                dest: lp.leg.dest.clone(),
                passengers,
                departures: (seats / 150.0).ceil(),
                seats,
            });
        }
    }
    out
}

pub const FIXTURE_FILES: [&str; 3] = ["market.csv", "categories.csv", "segment.csv"];

/// Writes the market, category and segment fixture files (default schemas,
/// comma-delimited) into `dir`.
pub fn write_fixture(dir: &Path, seed: u64) -> Result<Vec<PathBuf>, IngestError> {
    std::fs::create_dir_all(dir)?;
    let fx = market_fixture(seed);
    let paths: Vec<PathBuf> = FIXTURE_FILES.iter().map(|f| dir.join(f)).collect();
    write_market_file(std::fs::File::create(&paths[0])?, &MarketSchema::default(), b',', &fx.records)?;
    fx.categories.write(std::fs::File::create(&paths[1])?)?;
    write_segment_file(
        std::fs::File::create(&paths[2])?,
        &SegmentSchema::default(),
        b',',
        &segment_fixture(&fx),
    )?;
    Ok(paths)
}
