//! Local and transfer passenger shares on directional O&D legs, built from
//! itinerary-level market samples, and clustering of their yearly series.
//!
//! The crate covers the whole chain: [`ingest`] reads market and segment
//! files into per-leg counts, [`shares`] turns them into share series,
//! [`distance`] and [`cluster`] group the series, [`validate`] scores the
//! groupings and [`pipeline`] ties everything to a configuration file.

pub mod cluster;
pub mod distance;
pub mod ingest;
pub mod pipeline;
pub mod shares;
pub mod synthetic;
pub mod validate;
