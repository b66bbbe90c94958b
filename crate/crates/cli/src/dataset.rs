//! On-disk dataset layout.
//!
//! ```text
//! <root>/splits/train.txt        video ids, one per line
//! <root>/splits/test.txt
//! <root>/traces/<id>.csv         viewing traces
//! <root>/frames/<id>/00000.png   RGB frames from an external extractor
//! <out>/gt/<id>/00000.s360       ground-truth saliency maps
//! <out>/fix/<id>/00000.s360      fixation maps
//! <out>/pred/<id>/00000.s360     predicted maps
//! ```

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use sal360_core::io::{read_fixations, read_map};
use sal360_core::RgbFrame;
use sal360_model::data::{FixationSeries, GroundTruthSeries};
use sal360_model::FrameSource;

pub const GT_DIR: &str = "gt";
pub const FIX_DIR: &str = "fix";
pub const PRED_DIR: &str = "pred";
pub const MAP_EXT: &str = "s360";

pub fn indexed_file(dir: &Path, t: usize, ext: &str) -> PathBuf {
    dir.join(format!("{t:05}.{ext}"))
}

/// Video ids listed in a split file; blank lines and `#` comments skipped.
pub fn read_split(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading split list {}", path.display()))?;
    let ids: Vec<String> = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect();
    if ids.is_empty() {
        bail!("split list {} names no videos", path.display());
    }
    Ok(ids)
}

/// Checks that two split lists share no video.
pub fn ensure_disjoint(train: &[String], test: &[String]) -> Result<()> {
    if let Some(id) = train.iter().find(|id| test.contains(id)) {
        bail!("video {id:?} is in both the training and the test split");
    }
    Ok(())
}

/// Sorted frame indices of the `NNNNN.<ext>` files in `dir`.
pub fn list_indexed(dir: &Path, ext: &str) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let path = entry?.path();
        if path.extension().and_then(|e| e.to_str()) != Some(ext) {
            continue;
        }
        if let Some(t) = path.file_stem().and_then(|s| s.to_str()).and_then(|s| s.parse().ok()) {
            out.push(t);
        }
    }
    out.sort_unstable();
    Ok(out)
}

/// Number of frames of a video, requiring `00000.png … (n−1).png` with no gaps.
pub fn count_frames(dir: &Path) -> Result<usize> {
    let idx = list_indexed(dir, "png")?;
    if idx.is_empty() {
        bail!("no frames in {}", dir.display());
    }
    if let Some((expected, _)) = idx.iter().enumerate().find(|(i, t)| i != *t) {
        bail!("frame {expected} missing from {}", dir.display());
    }
    Ok(idx.len())
}

pub fn read_png_frame(path: &Path) -> sal360_core::Result<RgbFrame> {
    let img = image::open(path)?.to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let n = w * h;
    let mut data = vec![0f32; 3 * n];
    for (i, p) in img.pixels().enumerate() {
        for c in 0..3 {
            data[c * n + i] = p.0[c] as f32 / 255.0;
        }
    }
    RgbFrame::new(h, w, data)
}

pub fn write_png_frame(path: &Path, frame: &RgbFrame) -> Result<()> {
    let (w, h) = (frame.width(), frame.height());
    let n = w * h;
    let d = frame.data();
    let mut buf = Vec::with_capacity(3 * n);
    for i in 0..n {
        for c in 0..3 {
            buf.push((d[c * n + i] * 255.0).round().clamp(0.0, 255.0) as u8);
        }
    }
    image::RgbImage::from_raw(w as u32, h as u32, buf)
        .context("frame buffer size")?
        .save(path)
        .with_context(|| format!("writing {}", path.display()))
}

/// A video stored as numbered PNG frames, decoded on demand.
#[derive(Debug, Clone)]
pub struct PngClip {
    pub id: String,
    dir: PathBuf,
    count: usize,
}

impl PngClip {
    pub fn open(root: &Path, id: &str) -> Result<Self> {
        let dir = root.join("frames").join(id);
        let count = count_frames(&dir)?;
        Ok(PngClip {
            id: id.to_string(),
            dir,
            count,
        })
    }
}

impl FrameSource for PngClip {
    fn frame_count(&self) -> usize {
        self.count
    }

    fn frame(&self, t: usize) -> sal360_model::Result<RgbFrame> {
        if t >= self.count {
            return Err(sal360_model::Error::Data(format!("{}: frame {t} of {}", self.id, self.count)));
        }
        Ok(read_png_frame(&indexed_file(&self.dir, t, "png"))?)
    }
}

/// Ground-truth maps of one video at the listed frames.
pub fn load_gt(out: &Path, id: &str, frames: &[usize]) -> Result<GroundTruthSeries> {
    let dir = out.join(GT_DIR).join(id);
    frames
        .iter()
        .map(|&t| {
            let p = indexed_file(&dir, t, MAP_EXT);
            let m = read_map(&p).with_context(|| format!("reading ground truth {} (run gen-gt first)", p.display()))?;
            Ok((t, m))
        })
        .collect()
}

pub fn load_fixations(out: &Path, id: &str, frames: &[usize]) -> Result<FixationSeries> {
    let dir = out.join(FIX_DIR).join(id);
    frames
        .iter()
        .map(|&t| {
            let p = indexed_file(&dir, t, MAP_EXT);
            let m = read_fixations(&p).with_context(|| format!("reading fixations {} (run gen-gt first)", p.display()))?;
            Ok((t, m))
        })
        .collect()
}
