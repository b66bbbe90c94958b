//! Ground-truth saliency maps and fixation maps from viewing traces.
//!
//! Two pipelines are supported:
//! - angular traces (longitude/latitude): each fixation is splatted as an
//!   angular Gaussian directly on the sphere;
//! - normalized traces (`u, v ∈ [0,1]`): fixations are scaled to pixels,
//!   spread with a pixel-space Gaussian, projected to a cubemap, blurred per
//!   face and projected back.
//!
//! Contributions of all users are summed and each frame is normalized once.

use std::f64::consts::PI;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::map::{FixationMap, SaliencyMap};
use crate::sphere::{
    cubemap_to_equirect, equirect_to_cubemap, sphere_to_pixel, AngularKernel, CubemapFaceSet,
    EquirectGrid, Face, SphericalPoint,
};

/// Gaze position in normalized image coordinates (`u` across, `v` down).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizedPoint {
    u: f64,
    v: f64,
}

impl NormalizedPoint {
    pub fn new(u: f64, v: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&u) || !(0.0..=1.0).contains(&v) {
            return Err(Error::data(format!(
                "normalized point ({u}, {v}) outside [0,1]²"
            )));
        }
        Ok(NormalizedPoint { u, v })
    }

    pub fn u(&self) -> f64 {
        self.u
    }

    pub fn v(&self) -> f64 {
        self.v
    }

    /// Pixel containing the scaled point (the right/bottom edges belong to the last pixel).
    pub fn to_pixel(&self, grid: EquirectGrid) -> (usize, usize) {
        let x = ((self.u * grid.width() as f64).floor() as usize).min(grid.width() - 1);
        let y = ((self.v * grid.height() as f64).floor() as usize).min(grid.height() - 1);
        (x, y)
    }

    /// The same location read as an equirectangular direction.
    pub fn to_sphere(&self) -> SphericalPoint {
        let lon = (self.u - 0.5) * 2.0 * PI;
        let lat = (0.5 - self.v) * PI;
        SphericalPoint::wrapped(lon, lat).expect("normalized point maps inside the sphere")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CoordinateKind {
    Angular,
    Normalized,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TracePoint {
    Angular(SphericalPoint),
    Normalized(NormalizedPoint),
}

impl TracePoint {
    pub fn kind(&self) -> CoordinateKind {
        match self {
            TracePoint::Angular(_) => CoordinateKind::Angular,
            TracePoint::Normalized(_) => CoordinateKind::Normalized,
        }
    }

    pub fn to_pixel(&self, grid: EquirectGrid) -> (usize, usize) {
        match self {
            TracePoint::Angular(p) => sphere_to_pixel(grid, *p),
            TracePoint::Normalized(p) => p.to_pixel(grid),
        }
    }

    /// Horizontal mirror: λ → −λ, or u → 1 − u.
    pub fn mirrored(&self) -> TracePoint {
        match self {
            TracePoint::Angular(p) => TracePoint::Angular(p.mirrored()),
            TracePoint::Normalized(p) => TracePoint::Normalized(NormalizedPoint {
                u: 1.0 - p.u,
                v: p.v,
            }),
        }
    }

    fn sort_key(&self) -> (u64, u64) {
        let (a, b) = match self {
            TracePoint::Angular(p) => (p.longitude(), p.latitude()),
            TracePoint::Normalized(p) => (p.u, p.v),
        };
        (a.to_bits() ^ (1 << 63), b.to_bits() ^ (1 << 63))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceSample {
    pub timestamp: f64,
    pub point: TracePoint,
}

/// All samples of one viewer for one video, in time order.
#[derive(Debug, Clone, PartialEq)]
pub struct FixationTrace {
    user_id: String,
    kind: CoordinateKind,
    samples: Vec<TraceSample>,
}

impl FixationTrace {
    pub fn new(user_id: impl Into<String>, samples: Vec<TraceSample>) -> Result<Self> {
        let user_id = user_id.into();
        let kind = match samples.first() {
            Some(s) => s.point.kind(),
            None => return Err(Error::data(format!("trace for user {user_id} is empty"))),
        };
        if samples.iter().any(|s| s.point.kind() != kind) {
            return Err(Error::data(format!(
                "trace for user {user_id} mixes angular and normalized samples"
            )));
        }
        for pair in samples.windows(2) {
            if !(pair[1].timestamp > pair[0].timestamp) {
                return Err(Error::data(format!(
                    "trace for user {user_id}: timestamps not strictly increasing at t={}",
                    pair[1].timestamp
                )));
            }
        }
        if samples.iter().any(|s| !s.timestamp.is_finite()) {
            return Err(Error::data(format!(
                "trace for user {user_id} has a non-finite timestamp"
            )));
        }
        Ok(FixationTrace {
            user_id,
            kind,
            samples,
        })
    }

    pub fn user_id(&self) -> &str {
        &self.user_id
    }

    pub fn kind(&self) -> CoordinateKind {
        self.kind
    }

    pub fn samples(&self) -> &[TraceSample] {
        &self.samples
    }
}

/// Frames of one clip, stored as RGB planes in `[0,1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoClip {
    frame_rate: f64,
    frames: Vec<RgbFrame>,
}

impl VideoClip {
    pub fn new(frame_rate: f64, frames: Vec<RgbFrame>) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::data("a clip needs at least one frame"));
        }
        if !(frame_rate > 0.0) {
            return Err(Error::input(format!("frame rate must be positive, got {frame_rate}")));
        }
        let (h, w) = (frames[0].height(), frames[0].width());
        if frames.iter().any(|f| f.height() != h || f.width() != w) {
            return Err(Error::data("all frames of a clip must share one resolution"));
        }
        Ok(VideoClip { frame_rate, frames })
    }

    pub fn frame_rate(&self) -> f64 {
        self.frame_rate
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    pub fn frames(&self) -> &[RgbFrame] {
        &self.frames
    }

    pub fn frame(&self, t: usize) -> Option<&RgbFrame> {
        self.frames.get(t)
    }
}

/// Planar (channel-major) RGB raster with values in `[0,1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbFrame {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl RgbFrame {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != 3 * height * width || height == 0 || width == 0 {
            return Err(Error::input(format!(
                "RGB frame {height}x{width} needs {} values, got {}",
                3 * height * width,
                data.len()
            )));
        }
        Ok(RgbFrame {
            height,
            width,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn flip_horizontal(&self) -> RgbFrame {
        let (h, w) = (self.height, self.width);
        let mut data = vec![0.0; self.data.len()];
        for c in 0..3 {
            for y in 0..h {
                for x in 0..w {
                    data[(c * h + y) * w + x] = self.data[(c * h + y) * w + (w - 1 - x)];
                }
            }
        }
        RgbFrame { data, ..*self }
    }

    pub fn flip_vertical(&self) -> RgbFrame {
        let (h, w) = (self.height, self.width);
        let mut data = vec![0.0; self.data.len()];
        for c in 0..3 {
            for y in 0..h {
                let src = (c * h + (h - 1 - y)) * w;
                let dst = (c * h + y) * w;
                data[dst..dst + w].copy_from_slice(&self.data[src..src + w]);
            }
        }
        RgbFrame { data, ..*self }
    }

    /// Bilinear resize with half-pixel alignment.
    pub fn resize_bilinear(&self, height: usize, width: usize) -> RgbFrame {
        if height == self.height && width == self.width {
            return self.clone();
        }
        let (sh, sw) = (self.height, self.width);
        let sy = sh as f32 / height as f32;
        let sx = sw as f32 / width as f32;
        let mut data = Vec::with_capacity(3 * height * width);
        for c in 0..3 {
            let plane = self.channel(c);
            for y in 0..height {
                let fy = ((y as f32 + 0.5) * sy - 0.5).max(0.0);
                let y0 = (fy.floor() as usize).min(sh - 1);
                let y1 = (y0 + 1).min(sh - 1);
                let ty = fy - y0 as f32;
                for x in 0..width {
                    let fx = ((x as f32 + 0.5) * sx - 0.5).max(0.0);
                    let x0 = (fx.floor() as usize).min(sw - 1);
                    let x1 = (x0 + 1).min(sw - 1);
                    let tx = fx - x0 as f32;
                    let top = plane[y0 * sw + x0] * (1.0 - tx) + plane[y0 * sw + x1] * tx;
                    let bot = plane[y1 * sw + x0] * (1.0 - tx) + plane[y1 * sw + x1] * tx;
                    data.push(top * (1.0 - ty) + bot * ty);
                }
            }
        }
        RgbFrame {
            height,
            width,
            data,
        }
    }
}

/// Number of video frames covered by a trace starting at t = 0.
pub fn frames_spanned(trace: &FixationTrace, frame_rate: f64) -> usize {
    let last = trace.samples.last().map_or(0.0, |s| s.timestamp).max(0.0);
    (last * frame_rate + 1e-9).floor() as usize + 1
}

/// One sample per video frame: the sample nearest each frame timestamp
/// `t_f = f / frame_rate` (ties go to the earlier sample). The frame count
/// is the number of frames spanned by the trace.
pub fn downsample_trace(
    trace: &FixationTrace,
    trace_rate: f64,
    frame_rate: f64,
) -> Result<Vec<TracePoint>> {
    if !(frame_rate > 0.0) || !(trace_rate >= frame_rate) {
        return Err(Error::input(format!(
            "need trace_rate >= frame_rate > 0, got {trace_rate} and {frame_rate}"
        )));
    }
    let n = frames_spanned(trace, frame_rate);
    downsample_to_frames(trace, frame_rate, n)
}

/// Like [`downsample_trace`] with an explicit frame count.
pub fn downsample_to_frames(
    trace: &FixationTrace,
    frame_rate: f64,
    frame_count: usize,
) -> Result<Vec<TracePoint>> {
    let samples = &trace.samples;
    if samples.is_empty() {
        return Err(Error::data(format!("trace for user {} is empty", trace.user_id)));
    }
    Ok((0..frame_count)
        .map(|f| samples[nearest_sample(samples, f as f64 / frame_rate)].point)
        .collect())
}

fn nearest_sample(samples: &[TraceSample], t: f64) -> usize {
    // First index with timestamp >= t.
    let hi = samples.partition_point(|s| s.timestamp < t);
    if hi == 0 {
        return 0;
    }
    if hi == samples.len() {
        return samples.len() - 1;
    }
    let lo = hi - 1;
    if t - samples[lo].timestamp <= samples[hi].timestamp - t {
        lo
    } else {
        hi
    }
}

/// Sum of angular Gaussians, one per point.
pub fn splat_angular(
    points: &[SphericalPoint],
    grid: EquirectGrid,
    sigma_deg: f64,
) -> Result<SaliencyMap> {
    let kernel = AngularKernel::new(sigma_deg)?;
    let centers: Vec<[f64; 3]> = points.iter().map(|p| p.to_unit_vector()).collect();
    let dirs = grid.unit_vectors();
    let w = grid.width();
    let rows = sal360_par::map_range(grid.height(), |y| {
        dirs[y * w..(y + 1) * w]
            .iter()
            .map(|&d| centers.iter().fold(0.0, |acc, &c| acc + kernel.eval(d, c)))
            .collect::<Vec<_>>()
    });
    SaliencyMap::from_values(grid, rows.into_iter().flatten().collect())
}

/// Pixel-space σ equivalent to `sigma_deg` along the 360° longitude span.
pub fn sigma_pixels(sigma_deg: f64, grid: EquirectGrid) -> f64 {
    sigma_deg / 360.0 * grid.width() as f64
}

/// Default cube face size: one face spans 90° of longitude.
pub fn default_face_size(grid: EquirectGrid) -> usize {
    (grid.width() / 4).max(1)
}

/// Pixel-space splatting of normalized points followed by per-face cubemap
/// smoothing (σ_face = σ_px · face_size / width) and re-projection.
pub fn splat_normalized_cubemap(
    points: &[NormalizedPoint],
    grid: EquirectGrid,
    sigma_deg: f64,
    face_size: usize,
) -> Result<SaliencyMap> {
    if !(sigma_deg > 0.0) || !sigma_deg.is_finite() {
        return Err(Error::input(format!("sigma must be positive, got {sigma_deg}")));
    }
    let intermediate = splat_pixel_space(points, grid, sigma_deg);
    let mut faces = equirect_to_cubemap(&intermediate, face_size)?;
    let sigma_face = sigma_pixels(sigma_deg, grid) * face_size as f64 / grid.width() as f64;
    blur_faces(&mut faces, sigma_face);
    cubemap_to_equirect(&faces, grid)
}

/// Planar Gaussians at the points' pixel centers, wrapping horizontally.
pub fn splat_pixel_space(
    points: &[NormalizedPoint],
    grid: EquirectGrid,
    sigma_deg: f64,
) -> SaliencyMap {
    let (w, h) = (grid.width(), grid.height());
    let sigma = sigma_pixels(sigma_deg, grid);
    let inv = 1.0 / (2.0 * sigma * sigma);
    let centers: Vec<(usize, usize)> = points.iter().map(|p| p.to_pixel(grid)).collect();
    let rows = sal360_par::map_range(h, |y| {
        (0..w)
            .map(|x| {
                centers.iter().fold(0.0, |acc, &(cx, cy)| {
                    let dx = x.abs_diff(cx);
                    let dx = dx.min(w - dx) as f64;
                    let dy = y.abs_diff(cy) as f64;
                    acc + (-(dx * dx + dy * dy) * inv).exp()
                })
            })
            .collect::<Vec<_>>()
    });
    SaliencyMap::from_values(grid, rows.into_iter().flatten().collect())
        .expect("row count matches grid")
}

/// Separable Gaussian blur of each face; taps outside a face are dropped and
/// the remaining weights renormalized.
pub fn blur_faces(faces: &mut CubemapFaceSet, sigma: f64) {
    if !(sigma > 1e-3) {
        return;
    }
    let n = faces.face_size();
    let radius = (4.0 * sigma).ceil() as isize;
    let taps: Vec<f64> = (-radius..=radius)
        .map(|d| (-(d * d) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let blur_line = |src: &dyn Fn(usize) -> f64, i: usize| -> f64 {
        let (mut acc, mut norm) = (0.0, 0.0);
        for (k, &t) in taps.iter().enumerate() {
            let j = i as isize + k as isize - radius;
            if j >= 0 && (j as usize) < n {
                acc += t * src(j as usize);
                norm += t;
            }
        }
        acc / norm
    };
    for face in Face::ALL {
        let data = faces.face(face).to_vec();
        let mut horiz = vec![0.0; n * n];
        for r in 0..n {
            for c in 0..n {
                horiz[r * n + c] = blur_line(&|j| data[r * n + j], c);
            }
        }
        let out = faces.face_mut(face);
        for c in 0..n {
            for r in 0..n {
                out[r * n + c] = blur_line(&|j| horiz[j * n + c], r);
            }
        }
    }
}

/// Divides by the maximum. All-zero maps are returned unchanged.
pub fn normalize_map(map: &SaliencyMap) -> Result<SaliencyMap> {
    if let Some(i) = map.values().iter().position(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::data(format!(
            "cannot normalize: value {} at index {i}",
            map.values()[i]
        )));
    }
    let max = map.max();
    if max == 0.0 {
        return Ok(map.clone());
    }
    let mut out = map.clone();
    out.values_mut().iter_mut().for_each(|v| *v /= max);
    Ok(out)
}

/// Binary map with a hit at every fixated pixel.
pub fn build_fixation_map(points: &[TracePoint], grid: EquirectGrid) -> FixationMap {
    let mut map = FixationMap::empty(grid);
    for p in points {
        let (x, y) = p.to_pixel(grid);
        map.mark(x, y);
    }
    map
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Pipeline {
    Angular,
    /// Normalized traces with cubemap smoothing at the given face size.
    Cubemap { face_size: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundTruthConfig {
    pub grid: EquirectGrid,
    pub sigma_deg: f64,
    pub pipeline: Pipeline,
    pub frame_rate: f64,
    pub trace_rate: f64,
}

impl Default for GroundTruthConfig {
    fn default() -> Self {
        let grid = EquirectGrid::new(512, 256).expect("valid grid");
        GroundTruthConfig {
            grid,
            sigma_deg: 7.0,
            pipeline: Pipeline::Angular,
            frame_rate: 30.0,
            trace_rate: 60.0,
        }
    }
}

impl GroundTruthConfig {
    /// Sport360-style preset: 3.34° kernel on a 256×128 grid.
    pub fn sport360() -> Self {
        GroundTruthConfig {
            grid: EquirectGrid::new(256, 128).expect("valid grid"),
            sigma_deg: 3.34,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameGroundTruth {
    pub saliency: SaliencyMap,
    pub fixations: FixationMap,
}

/// Per-frame fixation points of every user, in frame order.
pub fn points_per_frame(
    traces: &[FixationTrace],
    config: &GroundTruthConfig,
    frame_count: usize,
) -> Result<Vec<Vec<TracePoint>>> {
    if traces.is_empty() {
        return Err(Error::data("no traces"));
    }
    if !(config.trace_rate >= config.frame_rate) || !(config.frame_rate > 0.0) {
        return Err(Error::input(format!(
            "need trace_rate >= frame_rate > 0, got {} and {}",
            config.trace_rate, config.frame_rate
        )));
    }
    let mut frames = vec![Vec::with_capacity(traces.len()); frame_count];
    for trace in traces {
        let pts = downsample_to_frames(trace, config.frame_rate, frame_count)?;
        for (f, p) in pts.into_iter().enumerate() {
            frames[f].push(p);
        }
    }
    // A canonical order makes every frame independent of user order.
    for pts in &mut frames {
        pts.sort_by_key(|p| p.sort_key());
    }
    Ok(frames)
}

/// Normalized saliency map and fixation map for one frame's points.
pub fn frame_ground_truth(
    points: &[TracePoint],
    config: &GroundTruthConfig,
) -> Result<FrameGroundTruth> {
    let raw = match config.pipeline {
        Pipeline::Angular => {
            let pts = points
                .iter()
                .map(|p| match p {
                    TracePoint::Angular(s) => Ok(*s),
                    TracePoint::Normalized(_) => Err(Error::data(
                        "angular pipeline received normalized coordinates",
                    )),
                })
                .collect::<Result<Vec<_>>>()?;
            splat_angular(&pts, config.grid, config.sigma_deg)?
        }
        Pipeline::Cubemap { face_size } => {
            let pts = points
                .iter()
                .map(|p| match p {
                    TracePoint::Normalized(n) => Ok(*n),
                    TracePoint::Angular(_) => Err(Error::data(
                        "cubemap pipeline received angular coordinates",
                    )),
                })
                .collect::<Result<Vec<_>>>()?;
            splat_normalized_cubemap(&pts, config.grid, config.sigma_deg, face_size)?
        }
    };
    // Re-projection can introduce tiny negative interpolation residue.
    let mut raw = raw;
    raw.values_mut().iter_mut().for_each(|v| *v = v.max(0.0));
    Ok(FrameGroundTruth {
        saliency: normalize_map(&raw)?,
        fixations: build_fixation_map(points, config.grid),
    })
}

/// Ground truth for `frame_count` frames; frames are processed in parallel.
pub fn generate_ground_truth(
    traces: &[FixationTrace],
    config: &GroundTruthConfig,
    frame_count: usize,
) -> Result<Vec<FrameGroundTruth>> {
    let frames = points_per_frame(traces, config, frame_count)?;
    sal360_par::map_slice(&frames, |pts| frame_ground_truth(pts, config))
        .into_iter()
        .collect()
}

#[derive(Debug, Deserialize)]
struct AngularRow {
    user_id: String,
    timestamp_s: f64,
    longitude_deg: f64,
    latitude_deg: f64,
}

#[derive(Debug, Deserialize)]
struct NormalizedRow {
    user_id: String,
    timestamp_s: f64,
    u: f64,
    v: f64,
}

/// Reads a trace CSV (with header) of the given kind, grouping rows by
/// `user_id` in order of first appearance.
pub fn read_trace_csv(path: &Path, kind: CoordinateKind) -> Result<Vec<FixationTrace>> {
    let file = std::fs::File::open(path)?;
    read_trace_csv_from(file, path, kind)
}

pub fn read_trace_csv_from<R: std::io::Read>(
    reader: R,
    path: &Path,
    kind: CoordinateKind,
) -> Result<Vec<FixationTrace>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut users: Vec<(String, Vec<TraceSample>)> = Vec::new();
    let parse_err = |line: u64, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut push = |user: String, sample: TraceSample, line: u64| -> Result<()> {
        let idx = match users.iter().position(|(u, _)| *u == user) {
            Some(i) => i,
            None => {
                users.push((user, Vec::new()));
                users.len() - 1
            }
        };
        let samples = &mut users[idx].1;
        if let Some(prev) = samples.last() {
            if !(sample.timestamp > prev.timestamp) {
                return Err(parse_err(
                    line,
                    "timestamps must be strictly increasing per user".into(),
                ));
            }
        }
        samples.push(sample);
        Ok(())
    };
    let mut record = csv::StringRecord::new();
    let headers = rdr
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .clone();
    loop {
        match rdr.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line());
                return Err(parse_err(line, e.to_string()));
            }
        }
        let line = record.position().map_or(0, |p| p.line());
        let point_err = |e: Error| parse_err(line, e.to_string());
        match kind {
            CoordinateKind::Angular => {
                let row: AngularRow = record
                    .deserialize(Some(&headers))
                    .map_err(|e| parse_err(line, e.to_string()))?;
                if !(-90.0..=90.0).contains(&row.latitude_deg) {
                    return Err(parse_err(
                        line,
                        format!("latitude {} outside [-90, 90]", row.latitude_deg),
                    ));
                }
                let p = SphericalPoint::from_degrees(row.longitude_deg, row.latitude_deg)
                    .map_err(point_err)?;
                push(
                    row.user_id,
                    TraceSample {
                        timestamp: row.timestamp_s,
                        point: TracePoint::Angular(p),
                    },
                    line,
                )?;
            }
            CoordinateKind::Normalized => {
                let row: NormalizedRow = record
                    .deserialize(Some(&headers))
                    .map_err(|e| parse_err(line, e.to_string()))?;
                let p = NormalizedPoint::new(row.u, row.v).map_err(point_err)?;
                push(
                    row.user_id,
                    TraceSample {
                        timestamp: row.timestamp_s,
                        point: TracePoint::Normalized(p),
                    },
                    line,
                )?;
            }
        }
    }
    if users.is_empty() {
        return Err(Error::data(format!("{}: trace file has no samples", path.display())));
    }
    users
        .into_iter()
        .map(|(u, s)| FixationTrace::new(u, s))
        .collect()
}
