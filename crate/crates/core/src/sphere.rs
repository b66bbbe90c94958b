//! Equirectangular, spherical and cubemap coordinate machinery.
//!
//! Pixel `(x, y)` of a `width × height` equirectangular grid covers the
//! longitude/latitude cell whose center is
//!
//! ```text
//! λ = ((x + 0.5) / width  − 0.5) · 2π      ∈ [−π, π)
//! φ = (0.5 − (y + 0.5) / height) · π        ∈ (−π/2, π/2)
//! ```
//!
//! so row 0 is the northern-most band and the equator falls between rows
//! `height/2 − 1` and `height/2`. Points embed in R³ as
//! `(cos φ cos λ, cos φ sin λ, sin φ)`.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use crate::error::{Error, Result};
use crate::map::SaliencyMap;

/// Size of an equirectangular raster.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EquirectGrid {
    width: usize,
    height: usize,
}

impl EquirectGrid {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        if width < 2 || height < 1 {
            return Err(Error::input(format!(
                "equirectangular grid must be at least 2x1, got {width}x{height}"
            )));
        }
        Ok(EquirectGrid { width, height })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Number of pixels.
    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Longitude of the center of column `x`.
    #[inline]
    pub fn column_longitude(&self, x: usize) -> f64 {
        ((x as f64 + 0.5) / self.width as f64 - 0.5) * TAU
    }

    /// Latitude of the center of row `y`.
    #[inline]
    pub fn row_latitude(&self, y: usize) -> f64 {
        (0.5 - (y as f64 + 0.5) / self.height as f64) * PI
    }

    /// Continuous pixel coordinates of a point, with pixel centers at
    /// integer positions (suitable for bilinear sampling).
    pub fn continuous_coords(&self, p: SphericalPoint) -> (f64, f64) {
        let fx = (p.longitude + PI) / TAU * self.width as f64 - 0.5;
        let fy = (FRAC_PI_2 - p.latitude) / PI * self.height as f64 - 0.5;
        (fx, fy)
    }

    /// Unit vectors of every pixel center, row-major.
    pub fn unit_vectors(&self) -> Vec<[f64; 3]> {
        let cols: Vec<(f64, f64)> = (0..self.width)
            .map(|x| {
                let l = self.column_longitude(x);
                (l.cos(), l.sin())
            })
            .collect();
        let mut out = Vec::with_capacity(self.len());
        for y in 0..self.height {
            let phi = self.row_latitude(y);
            let (sp, cp) = phi.sin_cos();
            out.extend(cols.iter().map(|&(cl, sl)| [cp * cl, cp * sl, sp]));
        }
        out
    }
}

/// A direction on the unit sphere, in radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphericalPoint {
    longitude: f64,
    latitude: f64,
}

impl SphericalPoint {
    /// Validating constructor: longitude in `[−π, π)`, latitude in `[−π/2, π/2]`.
    pub fn new(longitude: f64, latitude: f64) -> Result<Self> {
        if !longitude.is_finite() || !(-PI..PI).contains(&longitude) {
            return Err(Error::input(format!(
                "longitude {longitude} outside [-pi, pi)"
            )));
        }
        if !latitude.is_finite() || !(-FRAC_PI_2..=FRAC_PI_2).contains(&latitude) {
            return Err(Error::input(format!(
                "latitude {latitude} outside [-pi/2, pi/2]"
            )));
        }
        Ok(SphericalPoint {
            longitude,
            latitude,
        })
    }

    /// Wraps any finite longitude into `[−π, π)`; latitude must be in range.
    pub fn wrapped(longitude: f64, latitude: f64) -> Result<Self> {
        if !longitude.is_finite() {
            return Err(Error::input(format!("longitude {longitude} is not finite")));
        }
        let mut lon = (longitude + PI).rem_euclid(TAU) - PI;
        if lon >= PI {
            lon -= TAU;
        }
        Self::new(lon, latitude)
    }

    pub fn from_degrees(longitude_deg: f64, latitude_deg: f64) -> Result<Self> {
        Self::wrapped(longitude_deg.to_radians(), latitude_deg.to_radians())
    }

    pub fn longitude(&self) -> f64 {
        self.longitude
    }

    pub fn latitude(&self) -> f64 {
        self.latitude
    }

    pub fn to_unit_vector(&self) -> [f64; 3] {
        let (sp, cp) = self.latitude.sin_cos();
        let (sl, cl) = self.longitude.sin_cos();
        [cp * cl, cp * sl, sp]
    }

    /// Inverse of [`to_unit_vector`](Self::to_unit_vector); `v` need not be normalized.
    pub fn from_vector(v: [f64; 3]) -> Self {
        let r = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        let lat = (v[2] / r).clamp(-1.0, 1.0).asin();
        let mut lon = v[1].atan2(v[0]);
        if lon >= PI {
            lon -= TAU;
        }
        SphericalPoint {
            longitude: lon,
            latitude: lat,
        }
    }

    /// Reflection λ → −λ (horizontal image flip).
    pub fn mirrored(&self) -> Self {
        let lon = if self.longitude == -PI {
            -PI
        } else {
            -self.longitude
        };
        SphericalPoint {
            longitude: lon,
            latitude: self.latitude,
        }
    }
}

pub fn pixel_to_sphere(grid: EquirectGrid, x: usize, y: usize) -> Result<SphericalPoint> {
    if x >= grid.width || y >= grid.height {
        return Err(Error::input(format!(
            "pixel ({x}, {y}) outside {}x{} grid",
            grid.width, grid.height
        )));
    }
    Ok(SphericalPoint {
        longitude: grid.column_longitude(x),
        latitude: grid.row_latitude(y),
    })
}

/// Pixel containing `p`. Longitude wraps; the poles belong to the edge rows.
pub fn sphere_to_pixel(grid: EquirectGrid, p: SphericalPoint) -> (usize, usize) {
    let fx = ((p.longitude + PI) / TAU * grid.width as f64).floor() as isize;
    let fy = ((FRAC_PI_2 - p.latitude) / PI * grid.height as f64).floor() as isize;
    let x = fx.rem_euclid(grid.width as isize) as usize;
    let y = fy.clamp(0, grid.height as isize - 1) as usize;
    (x, y)
}

/// Great-circle distance in `[0, π]`.
pub fn angular_distance(a: SphericalPoint, b: SphericalPoint) -> f64 {
    vector_angle(a.to_unit_vector(), b.to_unit_vector())
}

#[inline]
pub(crate) fn vector_angle(a: [f64; 3], b: [f64; 3]) -> f64 {
    let cross = [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ];
    let cn = (cross[0] * cross[0] + cross[1] * cross[1] + cross[2] * cross[2]).sqrt();
    let dot = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    cn.atan2(dot)
}

/// Per-row cos-latitude weights compensating equirectangular area distortion.
#[derive(Debug, Clone, PartialEq)]
pub struct LatitudeWeights {
    rows: Vec<f64>,
}

impl LatitudeWeights {
    pub fn rows(&self) -> &[f64] {
        &self.rows
    }

    #[inline]
    pub fn row(&self, y: usize) -> f64 {
        self.rows[y]
    }

    pub fn height(&self) -> usize {
        self.rows.len()
    }

    /// Weights expanded to one value per pixel (row-major).
    pub fn per_pixel(&self, width: usize) -> Vec<f64> {
        self.rows
            .iter()
            .flat_map(|&w| std::iter::repeat_n(w, width))
            .collect()
    }

    /// Sum of weights over a full grid of the given width.
    pub fn total(&self, width: usize) -> f64 {
        self.rows.iter().sum::<f64>() * width as f64
    }

    /// Uniform weights; used when the spherical correction is disabled.
    pub fn uniform(height: usize) -> Self {
        LatitudeWeights {
            rows: vec![1.0; height],
        }
    }
}

/// `weight(y) = cos(φ(y))` at each row's center latitude.
pub fn latitude_weights(grid: EquirectGrid) -> LatitudeWeights {
    LatitudeWeights {
        rows: (0..grid.height)
            .map(|y| grid.row_latitude(y).cos())
            .collect(),
    }
}

/// Cube faces in storage order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Face {
    Front,
    Right,
    Back,
    Left,
    Up,
    Down,
}

impl Face {
    pub const ALL: [Face; 6] = [
        Face::Front,
        Face::Right,
        Face::Back,
        Face::Left,
        Face::Up,
        Face::Down,
    ];

    /// `(forward, right, up)` axes. Front looks at λ = 0, φ = 0; a face's
    /// `right` axis points toward increasing longitude so face rasters are
    /// not mirrored relative to the equirectangular image.
    fn basis(self) -> ([f64; 3], [f64; 3], [f64; 3]) {
        match self {
            Face::Front => ([1., 0., 0.], [0., 1., 0.], [0., 0., 1.]),
            Face::Right => ([0., 1., 0.], [-1., 0., 0.], [0., 0., 1.]),
            Face::Back => ([-1., 0., 0.], [0., -1., 0.], [0., 0., 1.]),
            Face::Left => ([0., -1., 0.], [1., 0., 0.], [0., 0., 1.]),
            Face::Up => ([0., 0., 1.], [0., 1., 0.], [-1., 0., 0.]),
            Face::Down => ([0., 0., -1.], [0., 1., 0.], [1., 0., 0.]),
        }
    }

    /// Direction through face pixel `(i, j)` of an `n × n` face (not normalized).
    fn direction(self, i: usize, j: usize, n: usize) -> [f64; 3] {
        let (f, r, u) = self.basis();
        let a = 2.0 * (i as f64 + 0.5) / n as f64 - 1.0;
        let b = 2.0 * (j as f64 + 0.5) / n as f64 - 1.0;
        [
            f[0] + a * r[0] - b * u[0],
            f[1] + a * r[1] - b * u[1],
            f[2] + a * r[2] - b * u[2],
        ]
    }

    /// Face hit by direction `d` and the continuous face pixel coordinates.
    fn locate(d: [f64; 3], n: usize) -> (Face, f64, f64) {
        let mut best = Face::Front;
        let mut best_dot = f64::NEG_INFINITY;
        for face in Face::ALL {
            let (f, _, _) = face.basis();
            let dot = dot3(d, f);
            if dot > best_dot {
                best_dot = dot;
                best = face;
            }
        }
        let (_, r, u) = best.basis();
        let a = dot3(d, r) / best_dot;
        let b = -dot3(d, u) / best_dot;
        let fi = (a + 1.0) * 0.5 * n as f64 - 0.5;
        let fj = (b + 1.0) * 0.5 * n as f64 - 0.5;
        (best, fi, fj)
    }
}

#[inline]
fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Six square gnomonic face rasters of equal size.
#[derive(Debug, Clone, PartialEq)]
pub struct CubemapFaceSet {
    face_size: usize,
    faces: [Vec<f64>; 6],
}

impl CubemapFaceSet {
    pub fn face_size(&self) -> usize {
        self.face_size
    }

    pub fn face(&self, face: Face) -> &[f64] {
        &self.faces[face as usize]
    }

    pub fn face_mut(&mut self, face: Face) -> &mut [f64] {
        &mut self.faces[face as usize]
    }

    pub fn from_faces(face_size: usize, faces: [Vec<f64>; 6]) -> Result<Self> {
        if face_size == 0 {
            return Err(Error::input("face size must be positive"));
        }
        if faces.iter().any(|f| f.len() != face_size * face_size) {
            return Err(Error::input("every face must hold face_size² values"));
        }
        if faces.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::data("cubemap contains non-finite values"));
        }
        Ok(CubemapFaceSet { face_size, faces })
    }

    fn sample_bilinear(&self, face: Face, fi: f64, fj: f64) -> f64 {
        let n = self.face_size;
        let data = self.face(face);
        let clamp = |v: f64| v.clamp(0.0, (n - 1) as f64);
        let (fi, fj) = (clamp(fi), clamp(fj));
        let i0 = fi.floor() as usize;
        let j0 = fj.floor() as usize;
        let i1 = (i0 + 1).min(n - 1);
        let j1 = (j0 + 1).min(n - 1);
        let ti = fi - i0 as f64;
        let tj = fj - j0 as f64;
        let top = data[j0 * n + i0] * (1.0 - ti) + data[j0 * n + i1] * ti;
        let bottom = data[j1 * n + i0] * (1.0 - ti) + data[j1 * n + i1] * ti;
        top * (1.0 - tj) + bottom * tj
    }
}

/// Gnomonic projection of an equirectangular map onto six cube faces,
/// bilinearly sampling the source.
pub fn equirect_to_cubemap(map: &SaliencyMap, face_size: usize) -> Result<CubemapFaceSet> {
    if face_size == 0 {
        return Err(Error::input("face size must be positive"));
    }
    map.ensure_finite()?;
    let grid = map.grid();
    let faces = Face::ALL.map(|face| {
        let rows = sal360_par::map_range(face_size, |j| {
            (0..face_size)
                .map(|i| {
                    let p = SphericalPoint::from_vector(face.direction(i, j, face_size));
                    let (fx, fy) = grid.continuous_coords(p);
                    map.sample_bilinear(fx, fy)
                })
                .collect::<Vec<_>>()
        });
        rows.into_iter().flatten().collect::<Vec<_>>()
    });
    Ok(CubemapFaceSet { face_size, faces })
}

/// Inverse projection: every equirectangular pixel samples the face its
/// direction hits, clamping at face borders.
pub fn cubemap_to_equirect(faces: &CubemapFaceSet, grid: EquirectGrid) -> Result<SaliencyMap> {
    if faces.faces.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::data("cubemap contains non-finite values"));
    }
    let n = faces.face_size;
    let dirs = grid.unit_vectors();
    let rows = sal360_par::map_range(grid.height(), |y| {
        let w = grid.width();
        dirs[y * w..(y + 1) * w]
            .iter()
            .map(|&d| {
                let (face, fi, fj) = Face::locate(d, n);
                faces.sample_bilinear(face, fi, fj)
            })
            .collect::<Vec<_>>()
    });
    SaliencyMap::from_values(grid, rows.into_iter().flatten().collect())
}

/// `exp(−d² / 2σ²)` with `d` the great-circle distance from `center`.
pub fn angular_gaussian(
    sigma_deg: f64,
    center: SphericalPoint,
    grid: EquirectGrid,
) -> Result<SaliencyMap> {
    let kernel = AngularKernel::new(sigma_deg)?;
    let dirs = grid.unit_vectors();
    let c = center.to_unit_vector();
    let values = dirs.iter().map(|&d| kernel.eval(d, c)).collect();
    SaliencyMap::from_values(grid, values)
}

/// Angular Gaussian with precomputed `1 / 2σ²`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct AngularKernel {
    inv_two_var: f64,
}

impl AngularKernel {
    pub(crate) fn new(sigma_deg: f64) -> Result<Self> {
        if !(sigma_deg > 0.0) || !sigma_deg.is_finite() {
            return Err(Error::input(format!("sigma must be positive, got {sigma_deg}")));
        }
        let sigma = sigma_deg.to_radians();
        Ok(AngularKernel {
            inv_two_var: 1.0 / (2.0 * sigma * sigma),
        })
    }

    #[inline]
    pub(crate) fn eval(&self, pixel: [f64; 3], center: [f64; 3]) -> f64 {
        let d = vector_angle(pixel, center);
        (-d * d * self.inv_two_var).exp()
    }
}
