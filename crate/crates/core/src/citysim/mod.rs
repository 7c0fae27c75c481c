//! Synthetic smart-city: POI kernel mixture, AP deployment, citizens with
//! weekly schedules, and the raw Wi-Fi association events they produce.

mod density;
mod io;
mod population;
mod simulate;

pub use density::{build_density, sample_point, DensityGrid, GridSpec, KernelMixture};
pub use io::{
    generate_city, load_aps, load_pois, read_raw_events, write_aps, write_pois, write_raw_events, CityGenConfig,
};
pub use population::{generate_citizens, Citizen, CitizenPois};
pub use simulate::{
    nearest_ap, simulate, trace_legs, ApIndex, Leg, Simulator, Venues, DEFAULT_BANDWIDTH, DEFAULT_CELL_SIZE,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CitySimError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("no points of interest")]
    EmptyInput,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("configuration error: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance_squared(self, other: Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    pub fn distance(self, other: Point) -> f64 {
        self.distance_squared(other).sqrt()
    }
}

/// Axis-aligned city bounding box in local planar meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub min: Point,
    pub max: Point,
}

impl Bounds {
    pub fn new(min: Point, max: Point) -> Self {
        Bounds { min, max }
    }

    /// Smallest box containing every POI and AP, grown by `margin` meters.
    pub fn enclosing(pois: &[Poi], aps: &[AccessPoint], margin: f64) -> Option<Bounds> {
        let mut points = pois.iter().map(|p| p.position).chain(aps.iter().map(|a| a.position));
        let first = points.next()?;
        let (mut min, mut max) = (first, first);
        for p in points {
            min.x = min.x.min(p.x);
            min.y = min.y.min(p.y);
            max.x = max.x.max(p.x);
            max.y = max.y.max(p.y);
        }
        Some(Bounds {
            min: Point::new(min.x - margin, min.y - margin),
            max: Point::new(max.x + margin, max.y + margin),
        })
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn clamp(&self, p: Point) -> Point {
        Point::new(p.x.clamp(self.min.x, self.max.x), p.y.clamp(self.min.y, self.max.y))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoiCategory {
    Employer,
    Food,
    Health,
    Recreation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Poi {
    pub id: String,
    pub category: PoiCategory,
    pub position: Point,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccessPoint {
    pub bssid: String,
    pub position: Point,
    pub radius: f64,
}

/// A device association change before anonymization. `None` is the
/// out-of-coverage state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawEvent {
    pub mac: String,
    pub from: Option<String>,
    pub to: Option<String>,
    #[serde(rename = "ts")]
    pub timestamp: u64,
}
