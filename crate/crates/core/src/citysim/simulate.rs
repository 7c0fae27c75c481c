use std::collections::HashMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use super::{AccessPoint, Bounds, Citizen, CitySimError, KernelMixture, Poi, PoiCategory, Point, RawEvent};
use crate::knowlet::SECONDS_PER_DAY;

pub const DEFAULT_BANDWIDTH: f64 = 400.0;
pub const DEFAULT_CELL_SIZE: f64 = 50.0;

const HOUR: u64 = 3600;

/// Nearest in-range AP by linear scan. Ties go to the smallest bssid.
pub fn nearest_ap(position: Point, aps: &[AccessPoint]) -> Option<&str> {
    aps.iter()
        .filter_map(|ap| {
            let d2 = ap.position.distance_squared(position);
            (d2 <= ap.radius * ap.radius).then_some((d2, ap.bssid.as_str()))
        })
        .min_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1)))
        .map(|(_, bssid)| bssid)
}

/// Uniform-grid bucket index over APs; answers the same queries as
/// [`nearest_ap`] without scanning the whole deployment.
#[derive(Debug, Clone)]
pub struct ApIndex {
    aps: Vec<AccessPoint>,
    cell: f64,
    buckets: HashMap<(i64, i64), Vec<usize>>,
}

impl ApIndex {
    pub fn new(aps: Vec<AccessPoint>) -> Self {
        let cell = aps.iter().map(|a| a.radius).fold(1.0_f64, f64::max);
        let mut buckets: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for (i, ap) in aps.iter().enumerate() {
            buckets.entry(Self::key(cell, ap.position)).or_default().push(i);
        }
        ApIndex { aps, cell, buckets }
    }

    fn key(cell: f64, p: Point) -> (i64, i64) {
        ((p.x / cell).floor() as i64, (p.y / cell).floor() as i64)
    }

    pub fn aps(&self) -> &[AccessPoint] {
        &self.aps
    }

    pub fn nearest(&self, p: Point) -> Option<usize> {
        let (cx, cy) = Self::key(self.cell, p);
        let mut best: Option<(f64, usize)> = None;
        for dx in -1..=1 {
            for dy in -1..=1 {
                let Some(bucket) = self.buckets.get(&(cx + dx, cy + dy)) else {
                    continue;
                };
                for &i in bucket {
                    let ap = &self.aps[i];
                    let d2 = ap.position.distance_squared(p);
                    if d2 > ap.radius * ap.radius {
                        continue;
                    }
                    let better = match best {
                        None => true,
                        Some((bd, bi)) => d2 < bd || (d2 == bd && ap.bssid < self.aps[bi].bssid),
                    };
                    if better {
                        best = Some((d2, i));
                    }
                }
            }
        }
        best.map(|(_, i)| i)
    }
}

/// Destinations shared by all citizens: lunch and weekend venues drawn from
/// the POI file, falling back to the kernel mixture when a category is absent.
#[derive(Debug, Clone)]
pub struct Venues {
    food: Option<(Vec<Point>, WeightedIndex<f64>)>,
    recreation: Option<(Vec<Point>, WeightedIndex<f64>)>,
    mixture: KernelMixture,
    bounds: Bounds,
}

impl Venues {
    pub fn new(pois: &[Poi], bandwidth: f64, bounds: Bounds) -> Result<Self, CitySimError> {
        let pick = |cat: PoiCategory| {
            let chosen: Vec<&Poi> = pois.iter().filter(|p| p.category == cat).collect();
            if chosen.is_empty() {
                return None;
            }
            let idx = WeightedIndex::new(chosen.iter().map(|p| p.weight)).ok()?;
            Some((chosen.iter().map(|p| p.position).collect(), idx))
        };
        Ok(Venues {
            food: pick(PoiCategory::Food),
            recreation: pick(PoiCategory::Recreation),
            mixture: KernelMixture::new(pois, bandwidth)?,
            bounds,
        })
    }

    fn draw<R: Rng + ?Sized>(&self, which: &Option<(Vec<Point>, WeightedIndex<f64>)>, rng: &mut R) -> Point {
        match which {
            Some((points, idx)) => points[idx.sample(rng)],
            None => self.mixture.sample(rng, &self.bounds),
        }
    }
}

/// Move to `dest`, leaving no earlier than `depart_at`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Leg {
    pub depart_at: u64,
    pub dest: Point,
}

/// Weekly schedule: commute on weekdays with optional lunch and evening
/// activity, one recreation outing per weekend day.
fn plan_itinerary<R: Rng + ?Sized>(c: &Citizen, venues: &Venues, start: u64, end: u64, rng: &mut R) -> Vec<Leg> {
    let mut legs = Vec::new();
    let first_day = start / SECONDS_PER_DAY;
    let last_day = (end - 1) / SECONDS_PER_DAY;
    for day in first_day..=last_day {
        let day0 = day * SECONDS_PER_DAY;
        let mut push = |at: u64, dest: Point| legs.push(Leg { depart_at: at, dest });
        if day % 7 < 5 {
            let morning = day0 + rng.random_range(7 * HOUR..=9 * HOUR + HOUR / 2);
            push(morning, c.pois.job);
            if rng.random_bool(0.5) {
                let lunch = day0 + rng.random_range(12 * HOUR..=13 * HOUR);
                push(lunch, venues.draw(&venues.food, rng));
                push(lunch + HOUR, c.pois.job);
            }
            let evening = day0 + rng.random_range(16 * HOUR + HOUR / 2..=18 * HOUR + HOUR / 2);
            if rng.random_bool(0.4) {
                let activity = if rng.random_bool(0.5) { c.pois.gym } else { c.pois.club };
                push(evening, activity);
                push(evening + rng.random_range(HOUR..=2 * HOUR), c.pois.home);
            } else {
                push(evening, c.pois.home);
            }
        } else {
            let out = day0 + rng.random_range(10 * HOUR..=14 * HOUR);
            push(out, venues.draw(&venues.recreation, rng));
            push(out + rng.random_range(2 * HOUR..=4 * HOUR), c.pois.home);
        }
    }
    legs.retain(|l| l.depart_at >= start && l.depart_at < end);
    legs
}

/// Walks `legs` from `origin` in one-second ticks over `[start, end)`,
/// emitting an event whenever the associated AP changes.
pub fn trace_legs(
    mac: &str,
    speed: f64,
    origin: Point,
    legs: &[Leg],
    index: &ApIndex,
    start: u64,
    end: u64,
) -> Vec<RawEvent> {
    let aps = index.aps();
    let mut events = Vec::new();
    let mut emit = |from: Option<usize>, to: Option<usize>, t: u64| {
        events.push(RawEvent {
            mac: mac.to_string(),
            from: from.map(|i| aps[i].bssid.clone()),
            to: to.map(|i| aps[i].bssid.clone()),
            timestamp: t,
        })
    };
    if start >= end {
        return events;
    }
    let mut current = index.nearest(origin);
    if current.is_some() {
        emit(None, current, start);
    }
    let mut pos = origin;
    let mut clock = start;
    'legs: for leg in legs {
        let depart = leg.depart_at.max(clock);
        if depart >= end {
            break;
        }
        let dist = pos.distance(leg.dest);
        if dist == 0.0 {
            clock = depart;
            continue;
        }
        let travel = ((dist / speed).ceil() as u64).max(1);
        for step in 1..=travel {
            let tick = depart + step;
            if tick >= end {
                break 'legs;
            }
            let p = if step == travel {
                leg.dest
            } else {
                let f = speed * step as f64 / dist;
                Point::new(pos.x + (leg.dest.x - pos.x) * f, pos.y + (leg.dest.y - pos.y) * f)
            };
            let ap = index.nearest(p);
            if ap != current {
                emit(current, ap, tick);
                current = ap;
            }
        }
        pos = leg.dest;
        clock = depart + travel;
    }
    events
}

/// Runs citizens through their schedules over one AP deployment.
#[derive(Debug, Clone)]
pub struct Simulator {
    index: ApIndex,
    venues: Venues,
}

impl Simulator {
    pub fn new(aps: Vec<AccessPoint>, venues: Venues) -> Result<Self, CitySimError> {
        if aps.is_empty() {
            return Err(CitySimError::Config("no access points".into()));
        }
        Ok(Simulator {
            index: ApIndex::new(aps),
            venues,
        })
    }

    pub fn run<R: Rng + ?Sized>(
        &self,
        citizens: &[Citizen],
        start_epoch: u64,
        duration: u64,
        rng: &mut R,
    ) -> Result<Vec<RawEvent>, CitySimError> {
        if duration == 0 {
            return Err(CitySimError::Config("duration must be positive".into()));
        }
        let end = start_epoch + duration;
        let mut events = Vec::new();
        for c in citizens {
            let legs = plan_itinerary(c, &self.venues, start_epoch, end, rng);
            events.extend(trace_legs(
                &c.mac,
                c.speed,
                c.pois.home,
                &legs,
                &self.index,
                start_epoch,
                end,
            ));
        }
        // stable: per-device order is already chronological
        events.sort_by(|a, b| a.timestamp.cmp(&b.timestamp).then_with(|| a.mac.cmp(&b.mac)));
        Ok(events)
    }
}

pub fn simulate<R: Rng + ?Sized>(
    citizens: &[Citizen],
    aps: &[AccessPoint],
    venues: &Venues,
    start_epoch: u64,
    duration_seconds: u64,
    rng: &mut R,
) -> Result<Vec<RawEvent>, CitySimError> {
    Simulator::new(aps.to_vec(), venues.clone())?.run(citizens, start_epoch, duration_seconds, rng)
}
