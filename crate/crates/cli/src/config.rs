//! Run configuration: a flat TOML file plus command-line overrides.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use sal360_core::gt::{default_face_size, CoordinateKind};
use sal360_core::{BiasComponents, EquirectGrid, GroundTruthConfig, LossTerms, NssNormalization, Pipeline};
use sal360_model::{Augment, ModelConfig, SyntheticConfig, TrainConfig};
use serde::Deserialize;

/// Every key is optional; missing keys take the defaults below.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub root: Option<PathBuf>,
    pub train_split: Option<PathBuf>,
    pub test_split: Option<PathBuf>,
    pub trace_kind: Option<String>,
    pub frame_rate: Option<f64>,
    pub trace_rate: Option<f64>,
    pub grid: Option<String>,
    pub sigma_deg: Option<f64>,
    pub pipeline: Option<String>,
    pub face_size: Option<usize>,
    pub seed: Option<u64>,

    pub input: Option<String>,
    pub k: Option<usize>,
    pub dims: Option<[usize; 4]>,
    pub depths: Option<[usize; 4]>,
    pub heads: Option<[usize; 4]>,
    pub reduction: Option<[usize; 4]>,
    pub mlp_ratio: Option<usize>,
    pub decoder_channels: Option<[usize; 4]>,
    pub dropout: Option<f64>,
    pub output_grid: Option<String>,

    pub steps: Option<usize>,
    pub batch_size: Option<usize>,
    pub lr_encoder: Option<f64>,
    pub lr_decoder: Option<f64>,
    pub lr_alpha: Option<f64>,
    pub lr_beta: Option<f64>,
    pub weight_decay: Option<f64>,
    pub sample_stride: Option<usize>,
    pub eval_stride: Option<usize>,
    pub hflip: Option<f64>,
    pub vflip: Option<f64>,
    pub jitter: Option<[f64; 2]>,
    /// `false` disables flips and color jitter.
    pub augment: Option<bool>,
    pub cb_delta: Option<bool>,
    pub cb_beta: Option<bool>,
    pub loss_terms: Option<Vec<String>>,
    pub nss: Option<String>,

    pub clips: Option<usize>,
    pub held_out: Option<usize>,
    pub frames: Option<usize>,
    pub users: Option<usize>,
    pub synth_alpha: Option<f64>,
    pub synth_beta: Option<f64>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

/// Values given on the command line; they win over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub grid: Option<String>,
    pub sigma_deg: Option<f64>,
    pub pipeline: Option<String>,
}

pub fn parse_size(s: &str) -> Result<(usize, usize)> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .with_context(|| format!("expected WxH, got {s:?}"))?;
    let w: usize = w.trim().parse().with_context(|| format!("bad width in {s:?}"))?;
    let h: usize = h.trim().parse().with_context(|| format!("bad height in {s:?}"))?;
    Ok((w, h))
}

pub fn parse_grid(s: &str) -> Result<EquirectGrid> {
    let (w, h) = parse_size(s)?;
    Ok(EquirectGrid::new(w, h)?)
}

/// Fully resolved settings for every command.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub root: PathBuf,
    pub train_split: PathBuf,
    pub test_split: PathBuf,
    pub trace_kind: CoordinateKind,
    pub gt: GroundTruthConfig,
    pub seed: u64,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub eval_stride: usize,
    pub nss: NssNormalization,
    pub synthetic: SyntheticConfig,
}

impl RunConfig {
    /// `out` is the default dataset root.
    pub fn resolve(file: FileConfig, over: Overrides, out: &Path) -> Result<Self> {
        let root = file.root.clone().unwrap_or_else(|| out.to_path_buf());
        let rel = |p: Option<PathBuf>, default: &str| {
            let p = p.unwrap_or_else(|| PathBuf::from(default));
            if p.is_absolute() {
                p
            } else {
                root.join(p)
            }
        };
        let train_split = rel(file.train_split.clone(), "splits/train.txt");
        let test_split = rel(file.test_split.clone(), "splits/test.txt");

        let trace_kind = match file.trace_kind.as_deref().unwrap_or("angular") {
            "angular" => CoordinateKind::Angular,
            "normalized" => CoordinateKind::Normalized,
            other => bail!("trace_kind must be angular or normalized, got {other:?}"),
        };
        let grid = parse_grid(over.grid.as_deref().or(file.grid.as_deref()).unwrap_or("128x64"))?;
        let pipeline = match over.pipeline.as_deref().or(file.pipeline.as_deref()).unwrap_or("angular") {
            "angular" => Pipeline::Angular,
            "cubemap" => Pipeline::Cubemap {
                face_size: file.face_size.unwrap_or_else(|| default_face_size(grid)),
            },
            other => bail!("pipeline must be angular or cubemap, got {other:?}"),
        };
        let sigma_deg = over.sigma_deg.or(file.sigma_deg).unwrap_or(10.0);
        if !(sigma_deg > 0.0) {
            bail!("sigma_deg must be positive, got {sigma_deg}");
        }
        let gt = GroundTruthConfig {
            grid,
            sigma_deg,
            pipeline,
            frame_rate: file.frame_rate.unwrap_or(30.0),
            trace_rate: file.trace_rate.unwrap_or(60.0),
        };
        let seed = over.seed.or(file.seed).unwrap_or(0);

        let output_grid = match &file.output_grid {
            Some(s) => parse_grid(s)?,
            None => grid,
        };
        let (input_width, input_height) = match &file.input {
            Some(s) => parse_size(s)?,
            None => (2 * grid.width(), 2 * grid.height()),
        };
        let d = ModelConfig::default();
        let model = ModelConfig {
            input_height,
            input_width,
            k: file.k.unwrap_or(d.k),
            dims: file.dims.unwrap_or(d.dims),
            depths: file.depths.unwrap_or(d.depths),
            heads: file.heads.unwrap_or(d.heads),
            strides: d.strides,
            reduction: file.reduction.unwrap_or(d.reduction),
            mlp_ratio: file.mlp_ratio.unwrap_or(d.mlp_ratio),
            decoder_channels: file.decoder_channels.unwrap_or(d.decoder_channels),
            dropout: file.dropout.unwrap_or(d.dropout),
            output_grid,
            attention: true,
        };
        model.validate()?;

        let t = TrainConfig::default();
        let a = Augment::default();
        let terms = match &file.loss_terms {
            None => LossTerms::ALL,
            Some(names) => {
                let mut terms = LossTerms {
                    cc: false,
                    kl: false,
                    smse: false,
                    bce: false,
                };
                for n in names {
                    match n.as_str() {
                        "cc" => terms.cc = true,
                        "kl" => terms.kl = true,
                        "smse" => terms.smse = true,
                        "bce" => terms.bce = true,
                        other => bail!("unknown loss term {other:?}"),
                    }
                }
                terms
            }
        };
        let train = TrainConfig {
            steps: file.steps.unwrap_or(t.steps),
            batch_size: file.batch_size.unwrap_or(t.batch_size),
            lr_encoder: file.lr_encoder.unwrap_or(t.lr_encoder),
            lr_decoder: file.lr_decoder.unwrap_or(t.lr_decoder),
            lr_alpha: file.lr_alpha.unwrap_or(t.lr_alpha),
            lr_beta: file.lr_beta.unwrap_or(t.lr_beta),
            weight_decay: file.weight_decay.unwrap_or(t.weight_decay),
            terms,
            components: BiasComponents {
                delta: file.cb_delta.unwrap_or(true),
                beta: file.cb_beta.unwrap_or(true),
            },
            sample_stride: file.sample_stride.unwrap_or(t.sample_stride),
            augment: if file.augment == Some(false) {
                Augment::NONE
            } else {
                Augment {
                    hflip: file.hflip.unwrap_or(a.hflip),
                    vflip: file.vflip.unwrap_or(a.vflip),
                    jitter: file.jitter.map(|[lo, hi]| (lo, hi)).or(a.jitter),
                }
            },
            seed,
        };
        if train.batch_size == 0 || train.sample_stride == 0 {
            bail!("batch_size and sample_stride must be positive");
        }
        if let Some((lo, hi)) = train.augment.jitter {
            if !(0.0 < lo && lo <= hi) {
                bail!("jitter range must satisfy 0 < lo <= hi, got [{lo}, {hi}]");
            }
        }
        for p in [train.augment.hflip, train.augment.vflip] {
            if !(0.0..=1.0).contains(&p) {
                bail!("flip probabilities must lie in [0, 1], got {p}");
            }
        }

        let nss = match file.nss.as_deref().unwrap_or("weighted") {
            "weighted" => NssNormalization::Weighted,
            "unweighted" => NssNormalization::Unweighted,
            other => bail!("nss must be weighted or unweighted, got {other:?}"),
        };

        let s = SyntheticConfig::default();
        let synthetic = SyntheticConfig {
            clips: file.clips.unwrap_or(s.clips),
            held_out: file.held_out.unwrap_or(s.held_out),
            frames: file.frames.unwrap_or(s.frames),
            users: file.users.unwrap_or(s.users),
            frame_width: grid.width(),
            frame_height: grid.height(),
            frame_rate: gt.frame_rate,
            trace_rate: gt.trace_rate,
            alpha: file.synth_alpha.unwrap_or(s.alpha),
            beta: file.synth_beta.unwrap_or(s.beta),
            seed,
            ..s
        };

        Ok(RunConfig {
            root,
            train_split,
            test_split,
            trace_kind,
            gt,
            seed,
            model,
            train,
            eval_stride: file.eval_stride.unwrap_or(5).max(1),
            nss,
            synthetic,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_resolve_against_the_output_directory() {
        let c = RunConfig::resolve(FileConfig::default(), Overrides::default(), Path::new("run")).unwrap();
        assert_eq!(c.root, PathBuf::from("run"));
        assert_eq!(c.train_split, PathBuf::from("run/splits/train.txt"));
        assert_eq!((c.gt.grid.width(), c.gt.grid.height()), (128, 64));
        assert_eq!((c.model.input_width, c.model.input_height), (256, 128));
        assert_eq!(c.train.batch_size, 4);
        assert_eq!(c.train.lr_alpha, 0.1);
    }

    #[test]
    fn flags_override_the_file() {
        let file: FileConfig = toml::from_str("seed = 3\ngrid = \"64x32\"\nsigma_deg = 5.0\npipeline = \"angular\"").unwrap();
        let over = Overrides {
            seed: Some(9),
            grid: Some("32x16".into()),
            sigma_deg: None,
            pipeline: Some("cubemap".into()),
        };
        let c = RunConfig::resolve(file, over, Path::new(".")).unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.train.seed, 9);
        assert_eq!(c.gt.grid.width(), 32);
        assert_eq!(c.gt.sigma_deg, 5.0);
        assert!(matches!(c.gt.pipeline, Pipeline::Cubemap { .. }));
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(toml::from_str::<FileConfig>("colour = 1").is_err());
        let bad = |s: &str| {
            let f: FileConfig = toml::from_str(s).unwrap();
            RunConfig::resolve(f, Overrides::default(), Path::new(".")).is_err()
        };
        assert!(bad("pipeline = \"sphere\""));
        assert!(bad("grid = \"12\""));
        assert!(bad("sigma_deg = -1.0"));
        assert!(bad("loss_terms = [\"l1\"]"));
        assert!(bad("hflip = 2.0"));
    }

    #[test]
    fn size_parsing() {
        assert_eq!(parse_size("256x128").unwrap(), (256, 128));
        assert!(parse_size("256").is_err());
        assert!(parse_size("ax2").is_err());
    }
}
