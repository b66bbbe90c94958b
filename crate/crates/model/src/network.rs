//! The full two-frame network: encoder, decoder and center-bias fusion.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sal360_autodiff::{Element, NamedArray, Tensor};
use sal360_core::center_bias::fuse;
use sal360_core::{CenterBiasModel, RgbFrame, SaliencyMap};

use crate::config::ModelConfig;
use crate::encoder::{Encoder, FeaturePyramid, FRAME_CHANNELS};
use crate::error::{Error, Result};
use crate::layers::{BatchNorm, Conv, ParamBuilder};

/// How a forward pass treats batch norm and dropout.
pub struct Mode<'a> {
    /// Normalize with batch statistics (and update the running ones).
    pub batch_stats: bool,
    /// Dropout mask source; `None` disables dropout.
    pub dropout: Option<&'a mut ChaCha8Rng>,
}

impl<'a> Mode<'a> {
    pub fn train(rng: &'a mut ChaCha8Rng) -> Self {
        Mode {
            batch_stats: true,
            dropout: Some(rng),
        }
    }

    pub fn eval() -> Self {
        Mode {
            batch_stats: false,
            dropout: None,
        }
    }

    /// Batch statistics without dropout: a deterministic differentiable map.
    pub fn diagnostics() -> Self {
        Mode {
            batch_stats: true,
            dropout: None,
        }
    }
}

struct DecoderBlock<T: Element> {
    conv: Conv<T>,
    bn: BatchNorm<T>,
}

struct Decoder<T: Element> {
    blocks: Vec<DecoderBlock<T>>,
    out: Conv<T>,
    dropout: f64,
    grid: (usize, usize),
}

impl<T: Element> Decoder<T> {
    fn new(b: &mut ParamBuilder<'_, T>, cfg: &ModelConfig) -> Self {
        let ch = cfg.decoder_channels;
        let blocks = (0..3)
            .map(|i| {
                let name = format!("decoder.block{}", i + 1);
                DecoderBlock {
                    conv: Conv::new(b, &format!("{name}.conv"), ch[i], ch[i + 1], 3, 1, 1, false),
                    bn: BatchNorm::new(b, &format!("{name}.bn"), ch[i + 1]),
                }
            })
            .collect();
        let out = Conv::new(b, "decoder.out", ch[3], 1, 1, 1, 0, true);
        // Start from small logits so the first predictions are near 0.5.
        let small: Vec<T> = out.weight.data().iter().map(|v| *v * T::of(0.1)).collect();
        out.weight.set_data(small).expect("same length");
        Decoder {
            blocks,
            out,
            dropout: cfg.dropout,
            grid: (cfg.output_grid.height(), cfg.output_grid.width()),
        }
    }

    fn forward(&mut self, features: &Tensor<T>, mode: &mut Mode<'_>) -> Result<Tensor<T>> {
        let mut x = features.clone();
        for block in &mut self.blocks {
            let y = block.bn.forward(&block.conv.forward(&x)?, mode.batch_stats)?.relu();
            let y = y.dropout(self.dropout, mode.dropout.as_deref_mut())?;
            let (h, w) = (y.shape()[2], y.shape()[3]);
            x = y.upsample_bilinear(2 * h, 2 * w)?;
        }
        let s = self.out.forward(&x)?.sigmoid();
        if (s.shape()[2], s.shape()[3]) == self.grid {
            Ok(s)
        } else {
            Ok(s.upsample_bilinear(self.grid.0, self.grid.1)?)
        }
    }
}

/// Two-frame saliency network producing `S_init`.
pub struct SalModel<T: Element> {
    config: ModelConfig,
    encoder: Encoder<T>,
    decoder: Decoder<T>,
    params: Vec<(String, Tensor<T>)>,
}

impl<T: Element> SalModel<T> {
    /// Randomly initialized network; identical seeds give identical weights.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut b = ParamBuilder::new(&mut rng);
        let encoder = Encoder::new(&mut b, &config)?;
        let decoder = Decoder::new(&mut b, &config);
        let params = b.params;
        Ok(SalModel {
            config,
            encoder,
            decoder,
            params,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// All trainable tensors with their names, encoder first.
    pub fn params(&self) -> &[(String, Tensor<T>)] {
        &self.params
    }

    pub fn encoder_params(&self) -> Vec<Tensor<T>> {
        self.group("encoder.")
    }

    pub fn decoder_params(&self) -> Vec<Tensor<T>> {
        self.group("decoder.")
    }

    fn group(&self, prefix: &str) -> Vec<Tensor<T>> {
        self.params
            .iter()
            .filter(|(n, _)| n.starts_with(prefix))
            .map(|(_, t)| t.clone())
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(|(_, t)| t.len()).sum()
    }

    /// Stage-1 two-frame patch-embedding weight and bias.
    pub fn input_embedding(&self) -> (&Tensor<T>, Option<&Tensor<T>>) {
        self.encoder.first_embedding()
    }

    pub fn encoder_forward(&self, input: &Tensor<T>) -> Result<FeaturePyramid<T>> {
        self.encoder.forward(input)
    }

    /// `B × 1 × H_out × W_out` map in (0,1) from the last encoder stage.
    pub fn decoder_forward(&mut self, pyramid: &FeaturePyramid<T>, mode: &mut Mode<'_>) -> Result<Tensor<T>> {
        self.decoder.forward(pyramid.last(), mode)
    }

    pub fn forward(&mut self, input: &Tensor<T>, mode: &mut Mode<'_>) -> Result<Tensor<T>> {
        let pyramid = self.encoder_forward(input)?;
        self.decoder_forward(&pyramid, mode)
    }

    /// Stacks frame pairs into a `B × 6 × H × W` input tensor.
    pub fn input_tensor(&self, pairs: &[(&RgbFrame, &RgbFrame)]) -> Result<Tensor<T>> {
        let (h, w) = (self.config.input_height, self.config.input_width);
        let mut data = Vec::with_capacity(pairs.len() * 2 * FRAME_CHANNELS * h * w);
        for (current, previous) in pairs {
            data.extend(frame_pair_input(current, previous, h, w)?.into_iter().map(|v| T::of(v as f64)));
        }
        Ok(Tensor::new(&[pairs.len(), 2 * FRAME_CHANNELS, h, w], data)?)
    }

    /// `S_init` for each frame pair in evaluation mode.
    pub fn predict_init(&mut self, pairs: &[(&RgbFrame, &RgbFrame)]) -> Result<Vec<SaliencyMap>> {
        if pairs.is_empty() {
            return Ok(Vec::new());
        }
        let input = self.input_tensor(pairs)?;
        let out = self.forward(&input, &mut Mode::eval())?;
        split_maps(&out, self.config.output_grid)
    }

    /// Parameters followed by batch-norm running statistics.
    pub fn to_arrays(&self) -> Vec<NamedArray> {
        let to_f32 = |v: &[T]| v.iter().map(|x| x.as_f64() as f32).collect::<Vec<f32>>();
        let mut out: Vec<NamedArray> = self
            .params
            .iter()
            .map(|(name, t)| NamedArray {
                name: name.clone(),
                shape: t.shape().to_vec(),
                values: to_f32(&t.data()),
            })
            .collect();
        for (i, block) in self.decoder.blocks.iter().enumerate() {
            let c = block.bn.stats.mean.len();
            for (suffix, values) in [("running_mean", &block.bn.stats.mean), ("running_var", &block.bn.stats.var)] {
                out.push(NamedArray {
                    name: format!("decoder.block{}.bn.{suffix}", i + 1),
                    shape: vec![c],
                    values: to_f32(values),
                });
            }
        }
        out
    }

    /// Loads arrays written by [`SalModel::to_arrays`] for the same config.
    pub fn load_arrays(&mut self, arrays: &[NamedArray]) -> Result<()> {
        let expected = self.to_arrays();
        if arrays.len() != expected.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} arrays, found {}",
                expected.len(),
                arrays.len()
            )));
        }
        for (want, got) in expected.iter().zip(arrays) {
            if want.name != got.name || want.shape != got.shape {
                return Err(Error::Checkpoint(format!(
                    "expected {} {:?}, found {} {:?}",
                    want.name, want.shape, got.name, got.shape
                )));
            }
        }
        let conv = |a: &NamedArray| a.values.iter().map(|v| T::of(*v as f64)).collect::<Vec<T>>();
        for ((_, t), a) in self.params.iter().zip(arrays) {
            t.set_data(conv(a))?;
        }
        let stats = &arrays[self.params.len()..];
        for (i, block) in self.decoder.blocks.iter_mut().enumerate() {
            block.bn.stats.mean = conv(&stats[2 * i]);
            block.bn.stats.var = conv(&stats[2 * i + 1]);
        }
        Ok(())
    }
}

/// Splits a `B × 1 × H × W` tensor into saliency maps.
pub(crate) fn split_maps<T: Element>(out: &Tensor<T>, grid: sal360_core::EquirectGrid) -> Result<Vec<SaliencyMap>> {
    let plane = grid.len();
    let data = out.data();
    if !data.len().is_multiple_of(plane) {
        return Err(Error::input(format!("output {:?} does not tile grid {grid:?}", out.shape())));
    }
    data.chunks(plane)
        .map(|c| Ok(SaliencyMap::from_values(grid, c.iter().map(|v| v.as_f64()).collect())?))
        .collect()
}

/// Network input for one pair: the current frame's RGB planes then the
/// previous frame's, resized to `h × w` and standardized around 0.5.
pub fn frame_pair_input(current: &RgbFrame, previous: &RgbFrame, h: usize, w: usize) -> Result<Vec<f32>> {
    if (current.height(), current.width()) != (previous.height(), previous.width()) {
        return Err(Error::input(format!(
            "frame sizes differ: {}x{} vs {}x{}",
            current.height(),
            current.width(),
            previous.height(),
            previous.width()
        )));
    }
    let mut out = Vec::with_capacity(2 * FRAME_CHANNELS * h * w);
    for frame in [current, previous] {
        let resized;
        let f = if (frame.height(), frame.width()) == (h, w) {
            frame
        } else {
            resized = frame.resize_bilinear(h, w);
            &resized
        };
        out.extend(f.data().iter().map(|v| (v - 0.5) / 0.25));
    }
    Ok(out)
}

/// Fused prediction `S_t` for one frame pair at frame index `t`.
pub fn model_forward<T: Element>(
    model: &mut SalModel<T>,
    current: &RgbFrame,
    previous: &RgbFrame,
    t: usize,
    cb: &CenterBiasModel,
) -> Result<SaliencyMap> {
    let s_init = model.predict_init(&[(current, previous)])?.remove(0);
    Ok(fuse(&s_init, t as f64, cb)?)
}
