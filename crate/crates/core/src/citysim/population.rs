use std::collections::HashSet;
use std::ops::Range;

use rand::Rng;

use super::{Bounds, CitySimError, KernelMixture, Poi, Point};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CitizenPois {
    pub home: Point,
    pub job: Point,
    pub gym: Point,
    pub club: Point,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Citizen {
    pub mac: String,
    pub pois: CitizenPois,
    /// Walking/cycling speed in m/s.
    pub speed: f64,
}

/// Random unicast, locally administered MAC.
fn random_mac<R: Rng + ?Sized>(rng: &mut R) -> String {
    let mut bytes: [u8; 6] = rng.random();
    bytes[0] = (bytes[0] & 0xfc) | 0x02;
    bytes.iter().map(|b| format!("{b:02x}")).collect::<Vec<_>>().join(":")
}

pub fn generate_citizens<R: Rng + ?Sized>(
    n: usize,
    pois: &[Poi],
    bandwidth: f64,
    bounds: &Bounds,
    rng: &mut R,
    speed_range: Range<f64>,
) -> Result<Vec<Citizen>, CitySimError> {
    if n == 0 {
        return Ok(Vec::new());
    }
    if !(speed_range.start > 0.0 && speed_range.start < speed_range.end) {
        return Err(CitySimError::InvalidParameter(format!(
            "speed range must be positive and non-empty, got {speed_range:?}"
        )));
    }
    let mixture = KernelMixture::new(pois, bandwidth)?;
    let mut seen = HashSet::with_capacity(n);
    let mut citizens = Vec::with_capacity(n);
    while citizens.len() < n {
        let mac = random_mac(rng);
        if !seen.insert(mac.clone()) {
            continue;
        }
        let pois = CitizenPois {
            home: mixture.sample(rng, bounds),
            job: mixture.sample(rng, bounds),
            gym: mixture.sample(rng, bounds),
            club: mixture.sample(rng, bounds),
        };
        let speed = rng.random_range(speed_range.clone());
        citizens.push(Citizen { mac, pois, speed });
    }
    Ok(citizens)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::citysim::PoiCategory;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup() -> (Vec<Poi>, Bounds) {
        let pois = vec![
            Poi {
                id: "a".into(),
                category: PoiCategory::Employer,
                position: Point::new(1000.0, 1000.0),
                weight: 2.0,
            },
            Poi {
                id: "b".into(),
                category: PoiCategory::Food,
                position: Point::new(3000.0, 2000.0),
                weight: 1.0,
            },
        ];
        (pois, Bounds::new(Point::new(0.0, 0.0), Point::new(4000.0, 4000.0)))
    }

    #[test]
    fn zero_citizens() {
        let (pois, b) = setup();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(generate_citizens(0, &pois, 400.0, &b, &mut rng, 1.0..2.0)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn macs_are_unique_and_positions_in_bounds() {
        let (pois, b) = setup();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cs = generate_citizens(100, &pois, 400.0, &b, &mut rng, 1.0..2.0).unwrap();
        let macs: HashSet<_> = cs.iter().map(|c| c.mac.clone()).collect();
        assert_eq!(macs.len(), 100);
        for c in &cs {
            assert_eq!(c.mac.len(), 17);
            assert!((1.0..2.0).contains(&c.speed));
            for p in [c.pois.home, c.pois.job, c.pois.gym, c.pois.club] {
                assert!(b.contains(p));
            }
        }
    }

    #[test]
    fn seeded_generation_is_reproducible() {
        let (pois, b) = setup();
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            format!(
                "{:?}",
                generate_citizens(20, &pois, 400.0, &b, &mut rng, 1.0..2.0).unwrap()
            )
        };
        assert_eq!(run(5), run(5));
        assert_ne!(run(5), run(6));
    }
}
