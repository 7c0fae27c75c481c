use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{AccessPoint, Bounds, CitySimError, KernelMixture, Poi, PoiCategory, Point, RawEvent};
use crate::knowlet::NULL_AP;
use crate::pipeline::START;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PoiRecord {
    id: String,
    category: PoiCategory,
    x: f64,
    y: f64,
    weight: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ApRecord {
    bssid: String,
    x: f64,
    y: f64,
    radius: f64,
}

/// Parses a JSON-lines file, skipping blank lines; errors carry the 1-based
/// line number.
fn read_json_lines<T, U>(
    path: &Path,
    mut convert: impl FnMut(T, usize) -> Result<U, CitySimError>,
) -> Result<Vec<U>, CitySimError>
where
    T: for<'de> Deserialize<'de>,
{
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let record: T = serde_json::from_str(&line).map_err(|e| CitySimError::Format {
            line: lineno,
            message: e.to_string(),
        })?;
        out.push(convert(record, lineno)?);
    }
    Ok(out)
}

fn write_json_lines<T: Serialize>(path: &Path, records: impl Iterator<Item = T>) -> Result<(), CitySimError> {
    let mut out = BufWriter::new(File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut out, &r).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn load_pois(path: &Path) -> Result<Vec<Poi>, CitySimError> {
    read_json_lines(path, |r: PoiRecord, line| {
        if !(r.weight > 0.0 && r.weight.is_finite()) {
            return Err(CitySimError::Format {
                line,
                message: format!("weight must be positive, got {}", r.weight),
            });
        }
        if !(r.x.is_finite() && r.y.is_finite()) {
            return Err(CitySimError::Format {
                line,
                message: "non-finite coordinates".into(),
            });
        }
        Ok(Poi {
            id: r.id,
            category: r.category,
            position: Point::new(r.x, r.y),
            weight: r.weight,
        })
    })
}

/// Loads an AP deployment, rejecting reserved or duplicate bssids.
pub fn load_aps(path: &Path) -> Result<Vec<AccessPoint>, CitySimError> {
    let mut seen = HashSet::new();
    read_json_lines(path, |r: ApRecord, line| {
        let fail = |message: String| Err(CitySimError::Format { line, message });
        if r.bssid.is_empty() || r.bssid == NULL_AP || r.bssid == START {
            return fail(format!("reserved bssid {:?}", r.bssid));
        }
        if r.bssid.contains(',') {
            return fail(format!("bssid {:?} contains a comma", r.bssid));
        }
        if !seen.insert(r.bssid.clone()) {
            return fail(format!("duplicate bssid {:?}", r.bssid));
        }
        if !(r.radius > 0.0 && r.radius.is_finite()) {
            return fail(format!("radius must be positive, got {}", r.radius));
        }
        Ok(AccessPoint {
            bssid: r.bssid,
            position: Point::new(r.x, r.y),
            radius: r.radius,
        })
    })
}

pub fn write_pois(path: &Path, pois: &[Poi]) -> Result<(), CitySimError> {
    write_json_lines(
        path,
        pois.iter().map(|p| PoiRecord {
            id: p.id.clone(),
            category: p.category,
            x: p.position.x,
            y: p.position.y,
            weight: p.weight,
        }),
    )
}

pub fn write_aps(path: &Path, aps: &[AccessPoint]) -> Result<(), CitySimError> {
    write_json_lines(
        path,
        aps.iter().map(|a| ApRecord {
            bssid: a.bssid.clone(),
            x: a.position.x,
            y: a.position.y,
            radius: a.radius,
        }),
    )
}

pub fn write_raw_events(path: &Path, events: &[RawEvent]) -> Result<(), CitySimError> {
    write_json_lines(path, events.iter())
}

pub fn read_raw_events(path: &Path) -> Result<Vec<RawEvent>, CitySimError> {
    read_json_lines(path, |e: RawEvent, _| Ok(e))
}

/// Knobs for the synthetic city written by `gen-city`.
#[derive(Debug, Clone, PartialEq)]
pub struct CityGenConfig {
    pub seed: u64,
    /// Side of the square city in meters.
    pub extent: f64,
    pub zones: usize,
    pub pois_per_zone: usize,
    pub aps: usize,
    pub ap_radius: (f64, f64),
    pub bandwidth: f64,
}

impl Default for CityGenConfig {
    fn default() -> Self {
        CityGenConfig {
            seed: 1,
            extent: 6000.0,
            zones: 6,
            pois_per_zone: 10,
            aps: 220,
            ap_radius: (60.0, 110.0),
            bandwidth: super::DEFAULT_BANDWIDTH,
        }
    }
}

/// Commercial zones with clustered POIs, and APs placed by sampling the POI
/// kernel mixture (campus-style coverage of busy areas).
pub fn generate_city(cfg: &CityGenConfig) -> Result<(Vec<Poi>, Vec<AccessPoint>), CitySimError> {
    if cfg.zones == 0 || cfg.pois_per_zone == 0 || cfg.extent.is_nan() || cfg.extent <= 0.0 {
        return Err(CitySimError::InvalidParameter("empty city".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let bounds = Bounds::new(Point::new(0.0, 0.0), Point::new(cfg.extent, cfg.extent));
    let categories = [
        PoiCategory::Employer,
        PoiCategory::Food,
        PoiCategory::Health,
        PoiCategory::Recreation,
    ];
    let spread = cfg.extent / 12.0;
    let mut pois = Vec::with_capacity(cfg.zones * cfg.pois_per_zone);
    for z in 0..cfg.zones {
        let center = Point::new(
            rng.random_range(0.15 * cfg.extent..0.85 * cfg.extent),
            rng.random_range(0.15 * cfg.extent..0.85 * cfg.extent),
        );
        for k in 0..cfg.pois_per_zone {
            let offset = Point::new(rng.random_range(-spread..spread), rng.random_range(-spread..spread));
            pois.push(Poi {
                id: format!("poi-{z}-{k}"),
                category: categories[k % categories.len()],
                position: bounds.clamp(Point::new(center.x + offset.x, center.y + offset.y)),
                weight: rng.random_range(1.0..10.0_f64).round(),
            });
        }
    }

    let mixture = KernelMixture::new(&pois, cfg.bandwidth)?;
    let min_spacing = cfg.ap_radius.0;
    let mut aps: Vec<AccessPoint> = Vec::with_capacity(cfg.aps);
    let mut attempts = 0;
    while aps.len() < cfg.aps && attempts < cfg.aps * 50 {
        attempts += 1;
        let p = mixture.sample(&mut rng, &bounds);
        if aps.iter().any(|a| a.position.distance(p) < min_spacing) {
            continue;
        }
        let n = aps.len();
        aps.push(AccessPoint {
            bssid: format!("0a:5e:00:00:{:02x}:{:02x}", n >> 8, n & 0xff),
            position: p,
            radius: rng.random_range(cfg.ap_radius.0..cfg.ap_radius.1).round(),
        });
    }
    Ok((pois, aps))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let path = dir.path().join(name);
        File::create(&path).unwrap().write_all(body.as_bytes()).unwrap();
        path
    }

    #[test]
    fn loads_pois_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(
            &dir,
            "pois.jsonl",
            concat!(
                r#"{"id":"u","category":"employer","x":1,"y":2,"weight":3}"#,
                "\n",
                r#"{"id":"f","category":"food","x":4,"y":5,"weight":1.5}"#,
                "\n",
                r#"{"id":"g","category":"health","x":0,"y":0,"weight":1}"#,
                "\n"
            ),
        );
        let pois = load_pois(&path).unwrap();
        assert_eq!(pois.iter().map(|p| p.id.as_str()).collect::<Vec<_>>(), ["u", "f", "g"]);
        assert_eq!(pois[1].category, PoiCategory::Food);
        assert_eq!(pois[1].position, Point::new(4.0, 5.0));
    }

    #[test]
    fn empty_poi_file() {
        let dir = tempfile::tempdir().unwrap();
        assert!(load_pois(&write(&dir, "e.jsonl", "")).unwrap().is_empty());
    }

    #[test]
    fn poi_format_error_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(
            &dir,
            "bad.jsonl",
            concat!(
                r#"{"id":"u","category":"employer","x":1,"y":2,"weight":3}"#,
                "\n",
                r#"{"id":"f","category":"food","x":4,"y":5}"#,
                "\n"
            ),
        );
        match load_pois(&path) {
            Err(CitySimError::Format { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            load_pois(&dir.path().join("missing")),
            Err(CitySimError::Io(_))
        ));
    }

    #[test]
    fn ap_file_rejects_sentinels_and_duplicates() {
        let dir = tempfile::tempdir().unwrap();
        for (body, bad_line) in [
            (r#"{"bssid":"null","x":0,"y":0,"radius":5}"#.to_string(), 1),
            (r#"{"bssid":"^","x":0,"y":0,"radius":5}"#.to_string(), 1),
            (
                format!(
                    "{}\n{}",
                    r#"{"bssid":"a","x":0,"y":0,"radius":5}"#, r#"{"bssid":"a","x":1,"y":0,"radius":5}"#
                ),
                2,
            ),
            (r#"{"bssid":"a","x":0,"y":0,"radius":0}"#.to_string(), 1),
        ] {
            match load_aps(&write(&dir, "aps.jsonl", &body)) {
                Err(CitySimError::Format { line, .. }) => assert_eq!(line, bad_line),
                other => panic!("unexpected {other:?} for {body}"),
            }
        }
    }

    #[test]
    fn generated_city_round_trips_through_files() {
        let dir = tempfile::tempdir().unwrap();
        let (pois, aps) = generate_city(&CityGenConfig::default()).unwrap();
        assert_eq!(pois.len(), 60);
        assert!(aps.len() > 100);
        write_pois(&dir.path().join("p.jsonl"), &pois).unwrap();
        write_aps(&dir.path().join("a.jsonl"), &aps).unwrap();
        assert_eq!(load_pois(&dir.path().join("p.jsonl")).unwrap(), pois);
        assert_eq!(load_aps(&dir.path().join("a.jsonl")).unwrap(), aps);
        assert_eq!(generate_city(&CityGenConfig::default()).unwrap(), (pois, aps));
    }

    #[test]
    fn raw_events_use_json_null() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("raw.jsonl");
        let ev = vec![RawEvent {
            mac: "m".into(),
            from: None,
            to: Some("a".into()),
            timestamp: 3,
        }];
        write_raw_events(&path, &ev).unwrap();
        assert_eq!(
            std::fs::read_to_string(&path).unwrap(),
            "{\"mac\":\"m\",\"from\":null,\"to\":\"a\",\"ts\":3}\n"
        );
        assert_eq!(read_raw_events(&path).unwrap(), ev);
    }
}
