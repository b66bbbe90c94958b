//! Hierarchical transformer encoder with overlapping patch embeddings.

use sal360_autodiff::{Element, Tensor};

use crate::config::{patch_geometry, ModelConfig};
use crate::error::{Error, Result};
use crate::layers::{Conv, LayerNorm, Linear, ParamBuilder};

/// Channels per input frame.
pub const FRAME_CHANNELS: usize = 3;

/// Encoder activations of the four stages, each `B × C_i × H_i × W_i`.
#[derive(Debug, Clone)]
pub struct FeaturePyramid<T: Element> {
    pub stages: [Tensor<T>; 4],
}

impl<T: Element> FeaturePyramid<T> {
    pub fn last(&self) -> &Tensor<T> {
        &self.stages[3]
    }
}

/// Widens a 3-input-channel patch-embedding kernel `[Co, 3, kh, kw]` to
/// 6 channels by repeating the RGB taps for the second frame.
pub fn adapt_input_embedding<T: Element>(weights_3ch: &Tensor<T>) -> Result<Tensor<T>> {
    let s = weights_3ch.shape();
    if s.len() != 4 || s[1] != FRAME_CHANNELS {
        return Err(Error::input(format!(
            "patch embedding must have shape [Co, 3, kh, kw], got {s:?}"
        )));
    }
    let plane = s[2] * s[3];
    let src = weights_3ch.data();
    let mut out = Vec::with_capacity(2 * src.len());
    for o in 0..s[0] {
        let taps = &src[o * FRAME_CHANNELS * plane..(o + 1) * FRAME_CHANNELS * plane];
        out.extend_from_slice(taps);
        out.extend_from_slice(taps);
    }
    let shape = [s[0], 2 * FRAME_CHANNELS, s[2], s[3]];
    Ok(if weights_3ch.requires_grad() {
        Tensor::param(&shape, out)?
    } else {
        Tensor::new(&shape, out)?
    })
}

/// Token-space self-attention with optional key/value spatial reduction.
struct Attention<T: Element> {
    q: Linear<T>,
    k: Linear<T>,
    v: Linear<T>,
    proj: Linear<T>,
    reduce: Option<(Conv<T>, LayerNorm<T>)>,
    heads: usize,
}

impl<T: Element> Attention<T> {
    fn new(b: &mut ParamBuilder<'_, T>, name: &str, dim: usize, heads: usize, ratio: usize) -> Self {
        Attention {
            q: Linear::new(b, &format!("{name}.q"), dim, dim, 1.0),
            k: Linear::new(b, &format!("{name}.k"), dim, dim, 1.0),
            v: Linear::new(b, &format!("{name}.v"), dim, dim, 1.0),
            proj: Linear::new(b, &format!("{name}.proj"), dim, dim, 1.0),
            reduce: (ratio > 1).then(|| {
                (
                    Conv::new(b, &format!("{name}.reduce"), dim, dim, ratio, ratio, 0, true),
                    LayerNorm::new(b, &format!("{name}.reduce_norm"), dim),
                )
            }),
            heads,
        }
    }

    /// `x`: `[B·h·w, C]` tokens in row-major spatial order.
    fn forward(&self, x: &Tensor<T>, batch: usize, h: usize, w: usize) -> Result<Tensor<T>> {
        let c = x.shape()[1];
        let (heads, dh) = (self.heads, c / self.heads);
        let n = h * w;
        let kv = match &self.reduce {
            Some((conv, norm)) => {
                let img = x.reshape(&[batch, h, w, c])?.permute(&[0, 3, 1, 2])?;
                let r = conv.forward(&img)?;
                let m = r.shape()[2] * r.shape()[3];
                norm.forward(&r.permute(&[0, 2, 3, 1])?.reshape(&[batch * m, c])?)?
            }
            None => x.clone(),
        };
        let m = kv.shape()[0] / batch;
        let split = |t: Tensor<T>, rows: usize, perm: &[usize], shape: [usize; 3]| -> Result<Tensor<T>> {
            Ok(t.reshape(&[batch, rows, heads, dh])?.permute(perm)?.reshape(&shape)?)
        };
        let q = split(self.q.forward(x)?, n, &[0, 2, 1, 3], [batch * heads, n, dh])?;
        let k = split(self.k.forward(&kv)?, m, &[0, 2, 3, 1], [batch * heads, dh, m])?;
        let v = split(self.v.forward(&kv)?, m, &[0, 2, 1, 3], [batch * heads, m, dh])?;
        let scores = q.matmul(&k)?.scale(T::of(1.0 / (dh as f64).sqrt()));
        let out = scores.softmax()?.matmul(&v)?;
        let merged = out
            .reshape(&[batch, heads, n, dh])?
            .permute(&[0, 2, 1, 3])?
            .reshape(&[batch * n, c])?;
        self.proj.forward(&merged)
    }
}

/// Pre-norm transformer block: attention and feed-forward, each residual.
struct Block<T: Element> {
    norm1: LayerNorm<T>,
    attn: Attention<T>,
    norm2: LayerNorm<T>,
    fc1: Linear<T>,
    fc2: Linear<T>,
}

impl<T: Element> Block<T> {
    fn forward(&self, x: &Tensor<T>, batch: usize, h: usize, w: usize, attention: bool) -> Result<Tensor<T>> {
        let x = if attention {
            x.add(&self.attn.forward(&self.norm1.forward(x)?, batch, h, w)?)?
        } else {
            x.clone()
        };
        let hidden = self.fc1.forward(&self.norm2.forward(&x)?)?.relu();
        Ok(x.add(&self.fc2.forward(&hidden)?)?)
    }
}

struct Stage<T: Element> {
    embed: Conv<T>,
    embed_norm: LayerNorm<T>,
    blocks: Vec<Block<T>>,
    norm: LayerNorm<T>,
}

pub(crate) struct Encoder<T: Element> {
    stages: Vec<Stage<T>>,
    attention: bool,
    input_hw: (usize, usize),
}

impl<T: Element> Encoder<T> {
    pub fn new(b: &mut ParamBuilder<'_, T>, cfg: &ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let mut stages = Vec::with_capacity(4);
        let mut cin = FRAME_CHANNELS;
        for i in 0..4 {
            let name = format!("encoder.stage{}", i + 1);
            let (kernel, pad) = patch_geometry(cfg.strides[i]);
            let dim = cfg.dims[i];
            let embed = if i == 0 {
                // Initialized as an RGB embedding, then widened to two frames.
                let fan_in = (FRAME_CHANNELS * kernel * kernel) as f64;
                let values = b.normal_values(dim * FRAME_CHANNELS * kernel * kernel, (2.0 / fan_in).sqrt());
                let rgb = Tensor::param(&[dim, FRAME_CHANNELS, kernel, kernel], values)?;
                Conv {
                    weight: b.register(format!("{name}.embed.weight"), adapt_input_embedding(&rgb)?),
                    bias: Some(b.constant(format!("{name}.embed.bias"), &[dim], 0.0)),
                    stride: cfg.strides[i],
                    pad,
                }
            } else {
                Conv::new(b, &format!("{name}.embed"), cin, dim, kernel, cfg.strides[i], pad, true)
            };
            let embed_norm = LayerNorm::new(b, &format!("{name}.embed_norm"), dim);
            let blocks = (0..cfg.depths[i])
                .map(|j| {
                    let bn = format!("{name}.block{}", j + 1);
                    let hidden = dim * cfg.mlp_ratio;
                    Block {
                        norm1: LayerNorm::new(b, &format!("{bn}.norm1"), dim),
                        attn: Attention::new(b, &format!("{bn}.attn"), dim, cfg.heads[i], cfg.reduction[i]),
                        norm2: LayerNorm::new(b, &format!("{bn}.norm2"), dim),
                        fc1: Linear::new(b, &format!("{bn}.fc1"), dim, hidden, 2f64.sqrt()),
                        fc2: Linear::new(b, &format!("{bn}.fc2"), hidden, dim, 1.0),
                    }
                })
                .collect();
            let norm = LayerNorm::new(b, &format!("{name}.norm"), dim);
            stages.push(Stage {
                embed,
                embed_norm,
                blocks,
                norm,
            });
            cin = dim;
        }
        Ok(Encoder {
            stages,
            attention: cfg.attention,
            input_hw: (cfg.input_height, cfg.input_width),
        })
    }

    /// `input`: `B × 6 × H × W`, the current frame's channels first.
    pub fn forward(&self, input: &Tensor<T>) -> Result<FeaturePyramid<T>> {
        let s = input.shape();
        if s.len() != 4 || s[1] != 2 * FRAME_CHANNELS || (s[2], s[3]) != self.input_hw {
            return Err(Error::input(format!(
                "encoder expects [B, 6, {}, {}], got {s:?}",
                self.input_hw.0, self.input_hw.1
            )));
        }
        let batch = s[0];
        let mut x = input.clone();
        let mut outs = Vec::with_capacity(4);
        for stage in &self.stages {
            let e = stage.embed.forward(&x)?;
            let (c, h, w) = (e.shape()[1], e.shape()[2], e.shape()[3]);
            let mut tokens = stage
                .embed_norm
                .forward(&e.permute(&[0, 2, 3, 1])?.reshape(&[batch * h * w, c])?)?;
            for block in &stage.blocks {
                tokens = block.forward(&tokens, batch, h, w, self.attention)?;
            }
            x = stage
                .norm
                .forward(&tokens)?
                .reshape(&[batch, h, w, c])?
                .permute(&[0, 3, 1, 2])?;
            outs.push(x.clone());
        }
        let stages: [Tensor<T>; 4] = outs.try_into().expect("four stages");
        Ok(FeaturePyramid { stages })
    }

    /// The two-frame patch-embedding convolution of stage 1.
    pub fn first_embedding(&self) -> (&Tensor<T>, Option<&Tensor<T>>) {
        let e = &self.stages[0].embed;
        (&e.weight, e.bias.as_ref())
    }
}
