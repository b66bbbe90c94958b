//! Dense equirectangular rasters: saliency maps and binary fixation maps.

use crate::error::{Error, Result};
use crate::sphere::EquirectGrid;

/// A dense `height × width` grid of reals, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyMap {
    grid: EquirectGrid,
    values: Vec<f64>,
}

impl SaliencyMap {
    pub fn zeros(grid: EquirectGrid) -> Self {
        Self::filled(grid, 0.0)
    }

    pub fn filled(grid: EquirectGrid, value: f64) -> Self {
        SaliencyMap {
            grid,
            values: vec![value; grid.len()],
        }
    }

    pub fn from_values(grid: EquirectGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::input(format!(
                "expected {} values for a {}x{} grid, got {}",
                grid.len(),
                grid.width(),
                grid.height(),
                values.len()
            )));
        }
        Ok(SaliencyMap { grid, values })
    }

    /// Builds a map by evaluating `f(x, y)` at every pixel.
    pub fn from_fn(grid: EquirectGrid, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for y in 0..grid.height() {
            for x in 0..grid.width() {
                values.push(f(x, y));
            }
        }
        SaliencyMap { grid, values }
    }

    pub fn grid(&self) -> EquirectGrid {
        self.grid
    }

    pub fn width(&self) -> usize {
        self.grid.width()
    }

    pub fn height(&self) -> usize {
        self.grid.height()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.grid.width() + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        let w = self.grid.width();
        self.values[y * w + x] = v;
    }

    pub fn row(&self, y: usize) -> &[f64] {
        let w = self.grid.width();
        &self.values[y * w..(y + 1) * w]
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Index of the largest value (first occurrence) as `(x, y)`.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (i, &v) in self.values.iter().enumerate() {
            if v > self.values[best] {
                best = i;
            }
        }
        (best % self.width(), best / self.width())
    }

    pub fn ensure_same_grid(&self, other: &SaliencyMap) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::input(format!(
                "grid mismatch: {}x{} vs {}x{}",
                self.width(),
                self.height(),
                other.width(),
                other.height()
            )));
        }
        Ok(())
    }

    pub fn ensure_finite(&self) -> Result<()> {
        match self.values.iter().position(|v| !v.is_finite()) {
            Some(i) => Err(Error::data(format!(
                "non-finite value {} at pixel ({}, {})",
                self.values[i],
                i % self.width(),
                i / self.width()
            ))),
            None => Ok(()),
        }
    }

    /// Mirror across the prime meridian's antipode: column `x` becomes `width-1-x`.
    /// On the sphere this is the reflection λ → −λ.
    pub fn flip_horizontal(&self) -> SaliencyMap {
        let w = self.width();
        SaliencyMap::from_fn(self.grid, |x, y| self.values[y * w + (w - 1 - x)])
    }

    /// Row reversal: φ → −φ.
    pub fn flip_vertical(&self) -> SaliencyMap {
        let (w, h) = (self.width(), self.height());
        SaliencyMap::from_fn(self.grid, |x, y| self.values[(h - 1 - y) * w + x])
    }

    /// Bilinear sample at continuous pixel coordinates (pixel centers at
    /// integer + 0.5 map to integer coordinates here). Longitude wraps,
    /// latitude clamps to the edge rows.
    pub fn sample_bilinear(&self, fx: f64, fy: f64) -> f64 {
        let (w, h) = (self.width() as isize, self.height() as isize);
        let x0f = fx.floor();
        let y0f = fy.floor();
        let tx = fx - x0f;
        let ty = fy - y0f;
        let x0 = (x0f as isize).rem_euclid(w) as usize;
        let x1 = (x0f as isize + 1).rem_euclid(w) as usize;
        let y0 = (y0f as isize).clamp(0, h - 1) as usize;
        let y1 = (y0f as isize + 1).clamp(0, h - 1) as usize;
        let top = self.get(x0, y0) * (1.0 - tx) + self.get(x1, y0) * tx;
        let bottom = self.get(x0, y1) * (1.0 - tx) + self.get(x1, y1) * tx;
        top * (1.0 - ty) + bottom * ty
    }

    /// Bilinear resampling onto another grid with half-pixel alignment
    /// (the `align_corners = false` convention). Longitude wraps.
    pub fn resize_bilinear(&self, target: EquirectGrid) -> SaliencyMap {
        if target == self.grid {
            return self.clone();
        }
        let sx = self.width() as f64 / target.width() as f64;
        let sy = self.height() as f64 / target.height() as f64;
        let rows = sal360_par::map_range(target.height(), |y| {
            let fy = (y as f64 + 0.5) * sy - 0.5;
            (0..target.width())
                .map(|x| {
                    let fx = (x as f64 + 0.5) * sx - 0.5;
                    self.sample_bilinear(fx, fy)
                })
                .collect::<Vec<_>>()
        });
        SaliencyMap {
            grid: target,
            values: rows.into_iter().flatten().collect(),
        }
    }
}

/// Binary per-pixel record of which pixels received at least one fixation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixationMap {
    grid: EquirectGrid,
    hits: Vec<bool>,
}

impl FixationMap {
    pub fn empty(grid: EquirectGrid) -> Self {
        FixationMap {
            grid,
            hits: vec![false; grid.len()],
        }
    }

    pub fn from_hits(grid: EquirectGrid, hits: Vec<bool>) -> Result<Self> {
        if hits.len() != grid.len() {
            return Err(Error::input(format!(
                "expected {} hits, got {}",
                grid.len(),
                hits.len()
            )));
        }
        Ok(FixationMap { grid, hits })
    }

    pub fn grid(&self) -> EquirectGrid {
        self.grid
    }

    pub fn mark(&mut self, x: usize, y: usize) {
        let w = self.grid.width();
        self.hits[y * w + x] = true;
    }

    #[inline]
    pub fn is_hit(&self, x: usize, y: usize) -> bool {
        self.hits[y * self.grid.width() + x]
    }

    pub fn hits(&self) -> &[bool] {
        &self.hits
    }

    pub fn count(&self) -> usize {
        self.hits.iter().filter(|&&h| h).count()
    }

    /// Linear indices of fixated pixels in row-major order.
    pub fn hit_indices(&self) -> Vec<usize> {
        self.hits
            .iter()
            .enumerate()
            .filter_map(|(i, &h)| h.then_some(i))
            .collect()
    }

    pub fn flip_horizontal(&self) -> FixationMap {
        let w = self.grid.width();
        let mut out = FixationMap::empty(self.grid);
        for i in self.hit_indices() {
            out.mark(w - 1 - i % w, i / w);
        }
        out
    }

    pub fn flip_vertical(&self) -> FixationMap {
        let (w, h) = (self.grid.width(), self.grid.height());
        let mut out = FixationMap::empty(self.grid);
        for i in self.hit_indices() {
            out.mark(i % w, h - 1 - i / w);
        }
        out
    }

    /// The map as 0/1 saliency values.
    pub fn to_saliency(&self) -> SaliencyMap {
        SaliencyMap {
            grid: self.grid,
            values: self.hits.iter().map(|&h| if h { 1.0 } else { 0.0 }).collect(),
        }
    }
}
