//! Synthetic 360° clips with a known center-bias structure.
//!
//! Each clip shows one bright moving target over a smooth background.
//! Viewers start at the front direction and leave it for the target on a
//! schedule: the share of viewers still at the front at frame `t` is
//! `w*(t) = (1 − β*) e^{−α*(t/C)²} + β*`. Ground truth built from these
//! traces is therefore a blend of a front-facing prior and the target with
//! exactly the fusion weight's shape.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use sal360_core::gt::{TracePoint, TraceSample};
use sal360_core::{EquirectGrid, FixationTrace, GroundTruthConfig, Pipeline, RgbFrame, SphericalPoint, VideoClip};

use crate::data::FrameSource;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub clips: usize,
    /// Clips at the end of the list reserved for evaluation.
    pub held_out: usize,
    pub frames: usize,
    pub users: usize,
    pub frame_width: usize,
    pub frame_height: usize,
    pub frame_rate: f64,
    pub trace_rate: f64,
    pub alpha: f64,
    pub beta: f64,
    pub c_const: f64,
    /// Spread of viewers around the front direction (degrees).
    pub center_spread_deg: f64,
    /// Spread of viewers around the target (degrees).
    pub target_spread_deg: f64,
    /// Angular radius of the rendered target (degrees).
    pub target_radius_deg: f64,
    /// Range of the target's longitudinal speed (degrees per frame).
    pub speed_deg: (f64, f64),
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            clips: 40,
            held_out: 8,
            frames: 60,
            users: 30,
            frame_width: 128,
            frame_height: 64,
            frame_rate: 30.0,
            trace_rate: 60.0,
            alpha: 500.0,
            beta: 0.2,
            c_const: 600.0,
            center_spread_deg: 6.0,
            target_spread_deg: 3.0,
            target_radius_deg: 6.0,
            speed_deg: (1.5, 3.0),
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    /// Share of viewers at the front direction at (fractional) frame `t`.
    pub fn front_share(&self, t: f64) -> f64 {
        (1.0 - self.beta) * (-self.alpha * (t / self.c_const).powi(2)).exp() + self.beta
    }

    /// Angular ground-truth settings on the frame grid.
    pub fn ground_truth_config(&self, sigma_deg: f64) -> Result<GroundTruthConfig> {
        Ok(GroundTruthConfig {
            grid: EquirectGrid::new(self.frame_width, self.frame_height)?,
            sigma_deg,
            pipeline: Pipeline::Angular,
            frame_rate: self.frame_rate,
            trace_rate: self.trace_rate,
        })
    }

    fn validate(&self) -> Result<()> {
        if self.clips == 0 || self.held_out >= self.clips {
            return Err(Error::input(format!(
                "need at least one training clip: {} clips, {} held out",
                self.clips, self.held_out
            )));
        }
        if self.frames == 0 || self.users == 0 || self.frame_width < 2 || self.frame_height < 2 {
            return Err(Error::input("frames, users and frame size must be positive"));
        }
        if !(self.trace_rate >= self.frame_rate && self.frame_rate > 0.0) {
            return Err(Error::input("need trace_rate >= frame_rate > 0"));
        }
        if !(self.alpha > 0.0 && (0.0..=1.0).contains(&self.beta) && self.c_const > 0.0) {
            return Err(Error::input("need alpha > 0, beta in [0,1], C > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Wave {
    lon_freq: f64,
    lat_freq: f64,
    phase: f64,
    amplitude: f64,
}

/// One synthetic clip. Frames are rendered on demand.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticClip {
    pub id: String,
    frames: usize,
    width: usize,
    height: usize,
    frame_rate: f64,
    start_deg: (f64, f64),
    velocity_deg: (f64, f64),
    target_radius_deg: f64,
    base: [f64; 3],
    waves: [[Wave; 2]; 3],
    noise_seed: u64,
    traces: Vec<FixationTrace>,
}

/// Reflects a latitude path into `[−limit, limit]`.
fn reflect(v: f64, limit: f64) -> f64 {
    let period = 4.0 * limit;
    let u = (v + limit).rem_euclid(period);
    if u <= 2.0 * limit {
        u - limit
    } else {
        3.0 * limit - u
    }
}

const MAX_TARGET_LAT: f64 = 50.0;

impl SyntheticClip {
    fn generate(cfg: &SyntheticConfig, index: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        let gauss = |rng: &mut ChaCha8Rng, sd: f64| Normal::new(0.0, sd).expect("sd > 0").sample(rng);
        // Any starting longitude, so frame content says nothing about `t`.
        let start_deg = (rng.random_range(-180.0..180.0), gauss(rng, 10.0).clamp(-30.0, 30.0));
        let (lo, hi) = cfg.speed_deg;
        let speed = if lo < hi { rng.random_range(lo..hi) } else { lo };
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let velocity_deg = (sign * speed, rng.random_range(-0.5..0.5));
        let base = [0.0; 3].map(|_| rng.random_range(0.3..0.5));
        let wave = |rng: &mut ChaCha8Rng| Wave {
            lon_freq: rng.random_range(1..=3) as f64,
            lat_freq: rng.random_range(0.5..3.0),
            phase: rng.random_range(0.0..std::f64::consts::TAU),
            amplitude: rng.random_range(0.04..0.1),
        };
        let waves = [0; 3].map(|_| [wave(rng), wave(rng)]);
        let noise_seed = rng.random();
        let mut clip = SyntheticClip {
            id: format!("synth{index:03}"),
            frames: cfg.frames,
            width: cfg.frame_width,
            height: cfg.frame_height,
            frame_rate: cfg.frame_rate,
            start_deg,
            velocity_deg,
            target_radius_deg: cfg.target_radius_deg,
            base,
            waves,
            noise_seed,
            traces: Vec::new(),
        };
        clip.traces = clip.simulate_viewers(cfg, rng)?;
        Ok(clip)
    }

    /// Target direction at fractional frame `t`, in degrees.
    pub fn target_deg(&self, t: f64) -> (f64, f64) {
        let lon = self.start_deg.0 + self.velocity_deg.0 * t;
        let lat = reflect(self.start_deg.1 + self.velocity_deg.1 * t, MAX_TARGET_LAT);
        (lon, lat)
    }

    fn simulate_viewers(&self, cfg: &SyntheticConfig, rng: &mut ChaCha8Rng) -> Result<Vec<FixationTrace>> {
        let center = Normal::new(0.0, cfg.center_spread_deg.max(1e-9)).expect("sd > 0");
        let around = Normal::new(0.0, cfg.target_spread_deg.max(1e-9)).expect("sd > 0");
        let jitter = Normal::new(0.0, 0.5).expect("sd > 0");
        let duration = cfg.frames as f64 / cfg.frame_rate;
        let n_samples = (duration * cfg.trace_rate).ceil() as usize;
        (0..cfg.users)
            .map(|u| {
                // Stratified leaving times: the share still at the front is w*(t).
                let threshold = (u as f64 + 0.5) / cfg.users as f64;
                let front = (center.sample(rng), center.sample(rng) * 0.5);
                let offset = (around.sample(rng), around.sample(rng));
                let samples = (0..n_samples)
                    .map(|i| {
                        let time = i as f64 / cfg.trace_rate;
                        let f = time * cfg.frame_rate;
                        let (lon, lat) = if threshold < cfg.front_share(f) {
                            front
                        } else {
                            let (tl, ta) = self.target_deg(f);
                            (tl + offset.0, ta + offset.1)
                        };
                        let lon = lon + jitter.sample(rng);
                        let lat = (lat + jitter.sample(rng)).clamp(-89.0, 89.0);
                        Ok(TraceSample {
                            timestamp: time,
                            point: TracePoint::Angular(SphericalPoint::from_degrees(lon, lat)?),
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(FixationTrace::new(format!("user{u:02}"), samples)?)
            })
            .collect()
    }

    pub fn traces(&self) -> &[FixationTrace] {
        &self.traces
    }

    pub fn frame_rate(&self) -> f64 {
        self.frame_rate
    }

    /// Renders every frame into an in-memory clip.
    pub fn to_video(&self) -> Result<VideoClip> {
        let frames = (0..self.frames).map(|t| self.frame(t)).collect::<Result<Vec<_>>>()?;
        Ok(VideoClip::new(self.frame_rate, frames)?)
    }
}

impl FrameSource for SyntheticClip {
    fn frame_count(&self) -> usize {
        self.frames
    }

    fn frame(&self, t: usize) -> Result<RgbFrame> {
        if t >= self.frames {
            return Err(Error::data(format!("{}: frame {t} of {}", self.id, self.frames)));
        }
        let grid = EquirectGrid::new(self.width, self.height)?;
        let n = grid.len();
        let (tl, ta) = self.target_deg(t as f64);
        let target = SphericalPoint::from_degrees(tl, ta)?.to_unit_vector();
        let radius = self.target_radius_deg.to_radians();
        let color = [1.0, 0.85, 0.15];
        let mut noise = ChaCha8Rng::seed_from_u64(self.noise_seed ^ (t as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let mut data = vec![0f32; 3 * n];
        for (i, v) in grid.unit_vectors().iter().enumerate() {
            let (x, y) = (i % self.width, i / self.width);
            let lon = grid.column_longitude(x);
            let lat = grid.row_latitude(y);
            let dot = (v[0] * target[0] + v[1] * target[1] + v[2] * target[2]).clamp(-1.0, 1.0);
            let d = dot.acos() / radius;
            let a = (-0.5 * d * d).exp();
            for c in 0..3 {
                let bg = self.base[c]
                    + self.waves[c]
                        .iter()
                        .map(|w| w.amplitude * (w.lon_freq * lon + w.lat_freq * lat + w.phase).sin())
                        .sum::<f64>()
                    + noise.random_range(-0.02..0.02);
                data[c * n + i] = ((1.0 - a) * bg + a * color[c]).clamp(0.0, 1.0) as f32;
            }
        }
        Ok(RgbFrame::new(self.height, self.width, data)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub config: SyntheticConfig,
    pub clips: Vec<SyntheticClip>,
}

impl SyntheticDataset {
    pub fn generate(config: SyntheticConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let clips = (0..config.clips)
            .map(|i| SyntheticClip::generate(&config, i, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(SyntheticDataset { config, clips })
    }

    pub fn train_clips(&self) -> &[SyntheticClip] {
        &self.clips[..self.clips.len() - self.config.held_out]
    }

    pub fn test_clips(&self) -> &[SyntheticClip] {
        &self.clips[self.clips.len() - self.config.held_out..]
    }
}
