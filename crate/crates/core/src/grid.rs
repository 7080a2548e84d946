//! Rectangular sample grids over a truncation of ℂ.

use std::io::{BufRead, BufReader};
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::fmt_f64;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub nx: usize,
    pub ny: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self::square(2.5, 401)
    }
}

impl GridSpec {
    /// `n × n` grid on `[-half_width, half_width]²`.
    pub fn square(half_width: f64, n: usize) -> Self {
        Self { x_min: -half_width, x_max: half_width, y_min: -half_width, y_max: half_width, nx: n, ny: n }
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx < 5 || self.ny < 5 {
            return Err(Error::Config(format!("grid needs at least 5x5 points, got {}x{}", self.nx, self.ny)));
        }
        if !(self.x_max > self.x_min && self.y_max > self.y_min) {
            return Err(Error::Config("grid box is empty".into()));
        }
        Ok(())
    }

    pub fn hx(&self) -> f64 {
        (self.x_max - self.x_min) / (self.nx - 1) as f64
    }

    pub fn hy(&self) -> f64 {
        (self.y_max - self.y_min) / (self.ny - 1) as f64
    }

    /// Larger of the two spacings.
    pub fn spacing(&self) -> f64 {
        self.hx().max(self.hy())
    }

    pub fn cell_area(&self) -> f64 {
        self.hx() * self.hy()
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.nx + ix
    }

    #[inline]
    pub fn point(&self, ix: usize, iy: usize) -> Complex64 {
        Complex64::new(self.x_min + ix as f64 * self.hx(), self.y_min + iy as f64 * self.hy())
    }

    pub fn point_at(&self, idx: usize) -> Complex64 {
        self.point(idx % self.nx, idx / self.nx)
    }

    pub fn is_boundary(&self, ix: usize, iy: usize) -> bool {
        ix == 0 || iy == 0 || ix == self.nx - 1 || iy == self.ny - 1
    }

    /// Distance (in cells) from the outer edge.
    pub fn edge_distance(&self, ix: usize, iy: usize) -> usize {
        ix.min(iy).min(self.nx - 1 - ix).min(self.ny - 1 - iy)
    }

    /// Radius of the largest centered disk inside the box.
    pub fn inscribed_radius(&self) -> f64 {
        let c = self.center();
        (c.re - self.x_min).min(self.x_max - c.re).min(c.im - self.y_min).min(self.y_max - c.im)
    }

    pub fn center(&self) -> Complex64 {
        Complex64::new(0.5 * (self.x_min + self.x_max), 0.5 * (self.y_min + self.y_max))
    }

    pub fn contains(&self, z: Complex64) -> bool {
        z.re >= self.x_min && z.re <= self.x_max && z.im >= self.y_min && z.im <= self.y_max
    }

    /// Same box, roughly `factor` times fewer points per side.
    pub fn coarsened(&self, factor: usize) -> Self {
        Self { nx: (self.nx - 1) / factor + 1, ny: (self.ny - 1) / factor + 1, ..*self }
    }

    /// Same box with `2(n-1)+1` points per side.
    pub fn refined(&self) -> Self {
        Self { nx: 2 * (self.nx - 1) + 1, ny: 2 * (self.ny - 1) + 1, ..*self }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridKind {
    Weight,
    Envelope,
    LogBergman,
    UN,
    Density,
    Mask,
}

/// Scalar field sampled on a [`GridSpec`], row-major in `y`.
#[derive(Clone, Debug)]
pub struct PotentialGrid {
    pub spec: GridSpec,
    pub values: Vec<f64>,
    pub kind: GridKind,
}

impl PotentialGrid {
    pub fn from_fn<F: Fn(Complex64) -> f64>(spec: GridSpec, kind: GridKind, f: F) -> Self {
        let values = (0..spec.len()).map(|i| f(spec.point_at(i))).collect();
        Self { spec, values, kind }
    }

    pub fn get(&self, ix: usize, iy: usize) -> f64 {
        self.values[self.spec.index(ix, iy)]
    }

    /// Bilinear interpolation, clamped to the box.
    pub fn interpolate(&self, z: Complex64) -> f64 {
        let s = &self.spec;
        let fx = ((z.re - s.x_min) / s.hx()).clamp(0.0, (s.nx - 1) as f64);
        let fy = ((z.im - s.y_min) / s.hy()).clamp(0.0, (s.ny - 1) as f64);
        let ix = (fx.floor() as usize).min(s.nx - 2);
        let iy = (fy.floor() as usize).min(s.ny - 2);
        let tx = fx - ix as f64;
        let ty = fy - iy as f64;
        let v00 = self.get(ix, iy);
        let v10 = self.get(ix + 1, iy);
        let v01 = self.get(ix, iy + 1);
        let v11 = self.get(ix + 1, iy + 1);
        (1.0 - ty) * ((1.0 - tx) * v00 + tx * v10) + ty * ((1.0 - tx) * v01 + tx * v11)
    }

    /// Resample onto another grid by bilinear interpolation.
    pub fn resample(&self, spec: GridSpec) -> Self {
        Self::from_fn(spec, self.kind, |z| self.interpolate(z))
    }

    /// `sup |self - other|` over grid points accepted by `region`.
    pub fn sup_distance<F: Fn(Complex64) -> bool>(&self, other: &PotentialGrid, region: F) -> f64 {
        assert_eq!(self.spec, other.spec, "grids must share a spec");
        self.values
            .iter()
            .zip(&other.values)
            .enumerate()
            .filter(|(i, _)| region(self.spec.point_at(*i)))
            .map(|(_, (a, b))| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Write as CSV: a header row naming the box, the box values, then one
    /// row of `nx` values per grid line from `y_min` upward.
    pub fn write_csv<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let mut w = csv::WriterBuilder::new().flexible(true).from_path(path)?;
        w.write_record(["x_min", "x_max", "y_min", "y_max", "nx", "ny"])?;
        let s = &self.spec;
        w.write_record([
            fmt_f64(s.x_min),
            fmt_f64(s.x_max),
            fmt_f64(s.y_min),
            fmt_f64(s.y_max),
            s.nx.to_string(),
            s.ny.to_string(),
        ])?;
        for row in self.values.chunks(s.nx) {
            w.write_record(row.iter().map(|v| fmt_f64(*v)))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<P: AsRef<Path>>(path: P, kind: GridKind) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let mut lines = BufReader::new(file).lines();
        let bad = |m: &str| Error::Config(format!("malformed grid CSV: {m}"));
        lines.next().ok_or_else(|| bad("missing header"))??;
        let dims = lines.next().ok_or_else(|| bad("missing box row"))??;
        let f: Vec<&str> = dims.split(',').collect();
        if f.len() != 6 {
            return Err(bad("box row needs 6 fields"));
        }
        let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad(s));
        let spec = GridSpec {
            x_min: num(f[0])?,
            x_max: num(f[1])?,
            y_min: num(f[2])?,
            y_max: num(f[3])?,
            nx: f[4].trim().parse().map_err(|_| bad(f[4]))?,
            ny: f[5].trim().parse().map_err(|_| bad(f[5]))?,
        };
        let mut values = Vec::with_capacity(spec.len());
        for line in lines {
            let line = line?;
            for v in line.split(',') {
                values.push(num(v)?);
            }
        }
        if values.len() != spec.len() {
            return Err(bad("value count does not match nx*ny"));
        }
        Ok(Self { spec, values, kind })
    }
}

/// Five-point Laplacian at an interior point.
#[inline]
pub fn laplacian_at(values: &[f64], spec: &GridSpec, ix: usize, iy: usize) -> f64 {
    let c = values[spec.index(ix, iy)];
    let hx2 = spec.hx() * spec.hx();
    let hy2 = spec.hy() * spec.hy();
    (values[spec.index(ix + 1, iy)] + values[spec.index(ix - 1, iy)] - 2.0 * c) / hx2
        + (values[spec.index(ix, iy + 1)] + values[spec.index(ix, iy - 1)] - 2.0 * c) / hy2
}
