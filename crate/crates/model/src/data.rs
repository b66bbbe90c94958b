//! Training samples: frame pairs, ground truth and augmentation.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use sal360_core::gt::{frame_ground_truth, points_per_frame};
use sal360_core::{EquirectGrid, FixationMap, FixationTrace, GroundTruthConfig, RgbFrame, SaliencyMap, VideoClip};

use crate::config::Augment;
use crate::error::{Error, Result};

/// Anything that can produce the frame at a native frame index.
pub trait FrameSource {
    fn frame_count(&self) -> usize;
    fn frame(&self, t: usize) -> Result<RgbFrame>;
}

impl FrameSource for VideoClip {
    fn frame_count(&self) -> usize {
        VideoClip::frame_count(self)
    }

    fn frame(&self, t: usize) -> Result<RgbFrame> {
        VideoClip::frame(self, t)
            .cloned()
            .ok_or_else(|| Error::data(format!("frame {t} missing from a {}-frame clip", self.frame_count())))
    }
}

/// Ground-truth saliency maps of one clip keyed by frame index.
pub type GroundTruthSeries = BTreeMap<usize, SaliencyMap>;
/// Fixation maps of one clip keyed by frame index.
pub type FixationSeries = BTreeMap<usize, FixationMap>;

/// Frame indices `k, k + stride, k + 2·stride, …` below `frame_count`.
pub fn sample_frame_indices(frame_count: usize, k: usize, stride: usize) -> Vec<usize> {
    (k..frame_count).step_by(stride.max(1)).collect()
}

/// Ground truth for the listed frames only.
pub fn ground_truth_for_frames(
    traces: &[FixationTrace],
    config: &GroundTruthConfig,
    frame_count: usize,
    frames: &[usize],
) -> Result<(GroundTruthSeries, FixationSeries)> {
    let points = points_per_frame(traces, config, frame_count)?;
    let mut gts = GroundTruthSeries::new();
    let mut fixations = FixationSeries::new();
    for &t in frames {
        let pts = points
            .get(t)
            .ok_or_else(|| Error::data(format!("frame {t} beyond {frame_count} frames")))?;
        let g = frame_ground_truth(pts, config)?;
        gts.insert(t, g.saliency);
        fixations.insert(t, g.fixations);
    }
    Ok((gts, fixations))
}

/// One training example after augmentation.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub current: RgbFrame,
    pub previous: RgbFrame,
    pub gt: SaliencyMap,
    /// Native frame index of `current`.
    pub t: usize,
}

/// Sample positions of a training set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleRef {
    pub clip: usize,
    pub t: usize,
}

pub struct TrainingSet<'a, C: FrameSource> {
    clips: &'a [C],
    gts: &'a [GroundTruthSeries],
    refs: Vec<SampleRef>,
    k: usize,
    augment: Augment,
    grid: EquirectGrid,
}

/// Indexes every `stride`-th frame from `k` of each clip, checking that the
/// frame `t − k` and the ground truth at `t` exist.
pub fn build_training_set<'a, C: FrameSource>(
    clips: &'a [C],
    gts: &'a [GroundTruthSeries],
    k: usize,
    stride: usize,
    augment: Augment,
    grid: EquirectGrid,
) -> Result<TrainingSet<'a, C>> {
    if clips.len() != gts.len() {
        return Err(Error::input(format!(
            "{} clips but {} ground-truth series",
            clips.len(),
            gts.len()
        )));
    }
    if k == 0 {
        return Err(Error::input("k must be at least 1"));
    }
    let mut refs = Vec::new();
    for (ci, (clip, gt)) in clips.iter().zip(gts).enumerate() {
        for t in sample_frame_indices(clip.frame_count(), k, stride) {
            if !gt.contains_key(&t) {
                return Err(Error::data(format!("clip {ci}: no ground truth for frame {t}")));
            }
            refs.push(SampleRef { clip: ci, t });
        }
    }
    if refs.is_empty() {
        return Err(Error::data(format!("no clip has more than k = {k} frames")));
    }
    Ok(TrainingSet {
        clips,
        gts,
        refs,
        k,
        augment,
        grid,
    })
}

impl<'a, C: FrameSource> TrainingSet<'a, C> {
    pub fn len(&self) -> usize {
        self.refs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.refs.is_empty()
    }

    pub fn refs(&self) -> &[SampleRef] {
        &self.refs
    }

    /// A shuffled visiting order over all samples.
    pub fn epoch_order(&self, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.refs.len()).collect();
        order.shuffle(rng);
        order
    }

    /// Loads sample `i` and applies the random augmentation.
    pub fn sample(&self, i: usize, rng: &mut ChaCha8Rng) -> Result<Sample> {
        let r = *self
            .refs
            .get(i)
            .ok_or_else(|| Error::input(format!("sample {i} out of {}", self.refs.len())))?;
        let clip = &self.clips[r.clip];
        let mut gt = self.gts[r.clip][&r.t].clone();
        if gt.grid() != self.grid {
            gt = gt.resize_bilinear(self.grid);
        }
        let sample = Sample {
            current: clip.frame(r.t)?,
            previous: clip.frame(r.t - self.k)?,
            gt,
            t: r.t,
        };
        Ok(augment(sample, &self.augment, rng))
    }
}

/// Flips (frames and map together) and color jitter (frames only, with the
/// same factors for both frames).
pub fn augment(mut s: Sample, a: &Augment, rng: &mut ChaCha8Rng) -> Sample {
    if a.hflip > 0.0 && rng.random_bool(a.hflip) {
        s.current = s.current.flip_horizontal();
        s.previous = s.previous.flip_horizontal();
        s.gt = s.gt.flip_horizontal();
    }
    if a.vflip > 0.0 && rng.random_bool(a.vflip) {
        s.current = s.current.flip_vertical();
        s.previous = s.previous.flip_vertical();
        s.gt = s.gt.flip_vertical();
    }
    if let Some((lo, hi)) = a.jitter {
        let mut draw = || if lo < hi { rng.random_range(lo..hi) } else { lo };
        let f = ColorJitter {
            brightness: draw(),
            contrast: draw(),
            saturation: draw(),
        };
        f.apply(&mut s.current);
        f.apply(&mut s.previous);
    }
    s
}

#[derive(Debug, Clone, Copy)]
struct ColorJitter {
    brightness: f64,
    contrast: f64,
    saturation: f64,
}

impl ColorJitter {
    fn apply(&self, frame: &mut RgbFrame) {
        let n = frame.height() * frame.width();
        let data = frame.data_mut();
        let clamp = |v: f64| v.clamp(0.0, 1.0) as f32;
        for v in data.iter_mut() {
            *v = clamp(*v as f64 * self.brightness);
        }
        let gray = |d: &[f32], i: usize| 0.299 * d[i] as f64 + 0.587 * d[n + i] as f64 + 0.114 * d[2 * n + i] as f64;
        let mean = (0..n).map(|i| gray(data, i)).sum::<f64>() / n as f64;
        for v in data.iter_mut() {
            *v = clamp((*v as f64 - mean) * self.contrast + mean);
        }
        for i in 0..n {
            let g = gray(data, i);
            for c in 0..3 {
                let v = &mut data[c * n + i];
                *v = clamp((*v as f64 - g) * self.saturation + g);
            }
        }
    }
}
