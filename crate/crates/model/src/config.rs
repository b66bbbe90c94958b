//! Network and training hyperparameters.

use sal360_core::{BiasComponents, EquirectGrid, LossTerms};

use crate::error::{Error, Result};

/// Architecture of the encoder–decoder network.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub input_height: usize,
    pub input_width: usize,
    /// Frame gap between the two inputs.
    pub k: usize,
    pub dims: [usize; 4],
    pub depths: [usize; 4],
    pub heads: [usize; 4],
    pub strides: [usize; 4],
    /// Key/value spatial reduction per stage (1 = full attention).
    pub reduction: [usize; 4],
    pub mlp_ratio: usize,
    /// Input channels of the three decoder blocks, then of the output conv.
    pub decoder_channels: [usize; 4],
    pub dropout: f64,
    /// Grid the predicted map is resized to.
    pub output_grid: EquirectGrid,
    /// Diagnostics switch: `false` replaces self-attention by the identity.
    pub attention: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            input_height: 224,
            input_width: 384,
            k: 5,
            dims: [8, 16, 24, 32],
            depths: [1, 1, 1, 1],
            heads: [1, 2, 3, 4],
            strides: [4, 2, 2, 2],
            reduction: [8, 4, 2, 1],
            mlp_ratio: 4,
            decoder_channels: [32, 24, 16, 8],
            dropout: 0.3,
            output_grid: EquirectGrid::new(384, 224).expect("valid grid"),
            attention: true,
        }
    }
}

/// Patch-embedding kernel and padding for a stage stride.
pub(crate) fn patch_geometry(stride: usize) -> (usize, usize) {
    let kernel = if stride >= 4 { 2 * stride - 1 } else { stride + 1 };
    (kernel, kernel / 2)
}

/// Output side length of a patch embedding.
pub(crate) fn embed_len(len: usize, stride: usize) -> Option<usize> {
    let (kernel, pad) = patch_geometry(stride);
    (len + 2 * pad).checked_sub(kernel).map(|v| v / stride + 1)
}

impl ModelConfig {
    /// Small configuration for quick experiments on a `width × height` grid,
    /// with inputs at the same size.
    pub fn toy(width: usize, height: usize) -> Result<Self> {
        let cfg = ModelConfig {
            input_height: height,
            input_width: width,
            output_grid: EquirectGrid::new(width, height)?,
            ..Self::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Spatial size `(h, w)` of each encoder stage.
    pub fn stage_sizes(&self) -> Result<[(usize, usize); 4]> {
        let mut out = [(0, 0); 4];
        let (mut h, mut w) = (self.input_height, self.input_width);
        for (i, &s) in self.strides.iter().enumerate() {
            match (embed_len(h, s), embed_len(w, s)) {
                (Some(nh), Some(nw)) if nh > 0 && nw > 0 => (h, w) = (nh, nw),
                _ => {
                    return Err(Error::input(format!(
                        "input {}x{} too small for stage {}",
                        self.input_height,
                        self.input_width,
                        i + 1
                    )))
                }
            }
            out[i] = (h, w);
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::input("k must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::input(format!("dropout {} outside [0,1)", self.dropout)));
        }
        for i in 0..4 {
            if self.dims[i] == 0 || self.heads[i] == 0 || !self.dims[i].is_multiple_of(self.heads[i]) {
                return Err(Error::input(format!(
                    "stage {}: dim {} not divisible into {} heads",
                    i + 1,
                    self.dims[i],
                    self.heads[i]
                )));
            }
            if self.depths[i] == 0 || self.strides[i] == 0 || self.reduction[i] == 0 {
                return Err(Error::input(format!("stage {}: zero depth, stride or reduction", i + 1)));
            }
        }
        if self.decoder_channels[0] != self.dims[3] {
            return Err(Error::input(format!(
                "decoder input channels {} must equal last stage dim {}",
                self.decoder_channels[0], self.dims[3]
            )));
        }
        if self.decoder_channels.contains(&0) || self.mlp_ratio == 0 {
            return Err(Error::input("zero decoder width or mlp ratio"));
        }
        let sizes = self.stage_sizes()?;
        for (i, &(h, w)) in sizes.iter().enumerate() {
            let r = self.reduction[i];
            if r > 1 && (h < r || w < r) {
                return Err(Error::input(format!(
                    "stage {} size {h}x{w} smaller than reduction {r}",
                    i + 1
                )));
            }
        }
        Ok(())
    }
}

/// Optimization settings.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub lr_encoder: f64,
    pub lr_decoder: f64,
    pub lr_alpha: f64,
    pub lr_beta: f64,
    pub weight_decay: f64,
    pub terms: LossTerms,
    pub components: BiasComponents,
    /// Sample every `sample_stride` frames starting at frame `k`.
    pub sample_stride: usize,
    pub augment: Augment,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 2000,
            batch_size: 4,
            lr_encoder: 1e-4,
            lr_decoder: 1e-3,
            lr_alpha: 0.1,
            lr_beta: 1e-4,
            weight_decay: 1e-4,
            terms: LossTerms::ALL,
            components: BiasComponents::default(),
            sample_stride: 5,
            augment: Augment::default(),
            seed: 0,
        }
    }
}

/// Random training-time transformations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Augment {
    pub hflip: f64,
    pub vflip: f64,
    /// Brightness, contrast and saturation factors drawn from this range.
    pub jitter: Option<(f64, f64)>,
}

impl Default for Augment {
    fn default() -> Self {
        Augment {
            hflip: 0.5,
            vflip: 0.05,
            jitter: Some((0.7, 1.3)),
        }
    }
}

impl Augment {
    pub const NONE: Augment = Augment {
        hflip: 0.0,
        vflip: 0.0,
        jitter: None,
    };
}
