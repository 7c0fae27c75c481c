use std::f64::consts::PI;
use std::io::Write;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::Normal;

use super::{Bounds, CitySimError, Poi, Point};

/// Placement and resolution of a density raster.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub origin: Point,
    pub nx: usize,
    pub ny: usize,
    pub cell_size: f64,
}

impl GridSpec {
    /// Grid covering `bounds` with square cells of `cell_size` meters.
    pub fn covering(bounds: &Bounds, cell_size: f64) -> GridSpec {
        let nx = ((bounds.max.x - bounds.min.x) / cell_size).ceil().max(1.0) as usize;
        let ny = ((bounds.max.y - bounds.min.y) / cell_size).ceil().max(1.0) as usize;
        GridSpec {
            origin: bounds.min,
            nx,
            ny,
            cell_size,
        }
    }
}

/// Normalized 2D density raster; `values` is row-major (`y` outer).
#[derive(Debug, Clone, PartialEq)]
pub struct DensityGrid {
    pub origin: Point,
    pub cell_size: f64,
    pub nx: usize,
    pub ny: usize,
    pub values: Vec<f64>,
}

impl DensityGrid {
    pub fn value(&self, ix: usize, iy: usize) -> f64 {
        self.values[iy * self.nx + ix]
    }

    pub fn cell_center(&self, ix: usize, iy: usize) -> Point {
        Point::new(
            self.origin.x + (ix as f64 + 0.5) * self.cell_size,
            self.origin.y + (iy as f64 + 0.5) * self.cell_size,
        )
    }

    pub fn cell_area(&self) -> f64 {
        self.cell_size * self.cell_size
    }

    /// Integral of the density over the grid (1 after normalization).
    pub fn total_mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.cell_area()
    }

    /// Mass of the cells whose centers lie within `radius` of `center`.
    pub fn mass_within(&self, center: Point, radius: f64) -> f64 {
        let r2 = radius * radius;
        let mut sum = 0.0;
        for iy in 0..self.ny {
            for ix in 0..self.nx {
                if self.cell_center(ix, iy).distance_squared(center) <= r2 {
                    sum += self.value(ix, iy);
                }
            }
        }
        sum * self.cell_area()
    }

    /// `(ix, iy)` of the largest value; first in row-major order on ties.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (i, v) in self.values.iter().enumerate() {
            if *v > self.values[best] {
                best = i;
            }
        }
        (best % self.nx, best / self.nx)
    }

    /// Writes `x,y,density` rows (cell centers) with a header line.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "x,y,density")?;
        for iy in 0..self.ny {
            for ix in 0..self.nx {
                let c = self.cell_center(ix, iy);
                writeln!(out, "{},{},{:e}", c.x, c.y, self.value(ix, iy))?;
            }
        }
        Ok(())
    }
}

fn gaussian_kernel(distance_squared: f64, bandwidth: f64) -> f64 {
    let h2 = bandwidth * bandwidth;
    (-0.5 * distance_squared / h2).exp() / (2.0 * PI * h2)
}

fn check_inputs(pois: &[Poi], bandwidth: f64) -> Result<(), CitySimError> {
    if pois.is_empty() {
        return Err(CitySimError::EmptyInput);
    }
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(CitySimError::InvalidParameter(format!(
            "bandwidth must be positive, got {bandwidth}"
        )));
    }
    Ok(())
}

/// Weighted sum of isotropic Gaussian kernels evaluated at cell centers,
/// normalized so the raster integrates to one.
pub fn build_density(pois: &[Poi], bandwidth: f64, grid: &GridSpec) -> Result<DensityGrid, CitySimError> {
    check_inputs(pois, bandwidth)?;
    if grid.nx == 0 || grid.ny == 0 || grid.cell_size.is_nan() || grid.cell_size <= 0.0 {
        return Err(CitySimError::InvalidParameter("empty density grid".into()));
    }
    let mut out = DensityGrid {
        origin: grid.origin,
        cell_size: grid.cell_size,
        nx: grid.nx,
        ny: grid.ny,
        values: vec![0.0; grid.nx * grid.ny],
    };
    for iy in 0..grid.ny {
        for ix in 0..grid.nx {
            let c = out.cell_center(ix, iy);
            out.values[iy * grid.nx + ix] = pois
                .iter()
                .map(|p| p.weight * gaussian_kernel(c.distance_squared(p.position), bandwidth))
                .sum();
        }
    }
    let mass = out.total_mass();
    if mass.is_nan() || mass <= 0.0 {
        return Err(CitySimError::InvalidParameter(
            "kernel mass vanishes on the grid; enlarge the grid or bandwidth".into(),
        ));
    }
    out.values.iter_mut().for_each(|v| *v /= mass);
    Ok(out)
}

/// The POI kernel mixture as a sampler: pick a POI by weight, then add an
/// isotropic Gaussian offset.
#[derive(Debug, Clone)]
pub struct KernelMixture {
    centers: Vec<Point>,
    selector: WeightedIndex<f64>,
    offset: Normal<f64>,
}

impl KernelMixture {
    pub fn new(pois: &[Poi], bandwidth: f64) -> Result<Self, CitySimError> {
        check_inputs(pois, bandwidth)?;
        let selector = WeightedIndex::new(pois.iter().map(|p| p.weight))
            .map_err(|e| CitySimError::InvalidParameter(format!("POI weights: {e}")))?;
        let offset = Normal::new(0.0, bandwidth).map_err(|e| CitySimError::InvalidParameter(e.to_string()))?;
        Ok(KernelMixture {
            centers: pois.iter().map(|p| p.position).collect(),
            selector,
            offset,
        })
    }

    /// Draws a component index and the point around it.
    pub fn sample_with_component<R: Rng + ?Sized>(&self, rng: &mut R, bounds: &Bounds) -> (usize, Point) {
        let i = self.selector.sample(rng);
        let c = self.centers[i];
        let dx = self.offset.sample(rng);
        let dy = self.offset.sample(rng);
        (i, bounds.clamp(Point::new(c.x + dx, c.y + dy)))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, bounds: &Bounds) -> Point {
        self.sample_with_component(rng, bounds).1
    }
}

pub fn sample_point<R: Rng + ?Sized>(
    pois: &[Poi],
    bandwidth: f64,
    bounds: &Bounds,
    rng: &mut R,
) -> Result<Point, CitySimError> {
    Ok(KernelMixture::new(pois, bandwidth)?.sample(rng, bounds))
}
