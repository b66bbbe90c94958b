//! Viewing center bias: a fixed prior map blended into the model output
//! with a time-decaying weight
//!
//! ```text
//! S   = w_t · CB + (1 − w_t) · S_init
//! w_t = (1 − β) · δ(t) + β,      δ(t) = exp(−α (t / C)²)
//! ```
//!
//! `t` is the frame index in the source video. α and β are learned per
//! dataset; `C` is fixed.

use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::gt::normalize_map;
use crate::io::{read_map_from, write_map_to};
use crate::map::SaliencyMap;

pub const DEFAULT_ALPHA: f64 = 600.0;
pub const DEFAULT_BETA: f64 = 0.15;
pub const DEFAULT_C: f64 = 600.0;
/// Lower bound keeping δ a decaying function.
pub const MIN_ALPHA: f64 = 1e-6;

/// Which parts of the fusion weight are active. Disabling δ makes
/// `w_t = β`; disabling β makes `w_t = δ(t)`; disabling both gives `w_t = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BiasComponents {
    pub delta: bool,
    pub beta: bool,
}

impl Default for BiasComponents {
    fn default() -> Self {
        BiasComponents {
            delta: true,
            beta: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CenterBiasModel {
    pub cb_map: SaliencyMap,
    pub alpha: f64,
    pub beta: f64,
    pub c_const: f64,
    pub components: BiasComponents,
}

impl CenterBiasModel {
    /// Default parameters (α = 600, β = 0.15, C = 600).
    pub fn new(cb_map: SaliencyMap) -> Self {
        CenterBiasModel {
            cb_map,
            alpha: DEFAULT_ALPHA,
            beta: DEFAULT_BETA,
            c_const: DEFAULT_C,
            components: BiasComponents::default(),
        }
    }

    pub fn with_params(cb_map: SaliencyMap, alpha: f64, beta: f64, c_const: f64) -> Result<Self> {
        if !(alpha > 0.0) || !(0.0..=1.0).contains(&beta) || !(c_const > 0.0) {
            return Err(Error::input(format!(
                "need alpha > 0, beta in [0,1], C > 0; got {alpha}, {beta}, {c_const}"
            )));
        }
        Ok(CenterBiasModel {
            alpha,
            beta,
            c_const,
            ..Self::new(cb_map)
        })
    }

    /// Effective β (zero when the static component is disabled).
    pub fn effective_beta(&self) -> f64 {
        if self.components.beta {
            self.beta
        } else {
            0.0
        }
    }

    /// Effective δ(t) (zero when the dynamic component is disabled).
    pub fn effective_delta(&self, t: f64) -> f64 {
        if self.components.delta {
            delta(t, self.alpha, self.c_const)
        } else {
            0.0
        }
    }

    /// Projects α and β back to their feasible sets after an update.
    pub fn clamp_parameters(&mut self) {
        self.alpha = clamp_alpha(self.alpha);
        self.beta = clamp_beta(self.beta);
    }
}

pub fn clamp_alpha(alpha: f64) -> f64 {
    alpha.max(MIN_ALPHA)
}

pub fn clamp_beta(beta: f64) -> f64 {
    beta.clamp(0.0, 1.0)
}

/// Element-wise mean of first-frame ground-truth maps, normalized to `[0,1]`.
pub fn compute_cb_map(first_frame_maps: &[SaliencyMap]) -> Result<SaliencyMap> {
    let first = first_frame_maps
        .first()
        .ok_or_else(|| Error::data("center bias needs at least one map"))?;
    for m in &first_frame_maps[1..] {
        first.ensure_same_grid(m)?;
    }
    normalize_map(&mean_map(first_frame_maps))
}

fn mean_map(maps: &[SaliencyMap]) -> SaliencyMap {
    let mut acc = SaliencyMap::zeros(maps[0].grid());
    for m in maps {
        acc.values_mut()
            .iter_mut()
            .zip(m.values())
            .for_each(|(a, v)| *a += v);
    }
    let n = maps.len() as f64;
    acc.values_mut().iter_mut().for_each(|a| *a /= n);
    acc
}

/// `δ(t) = exp(−α (t/C)²)`.
pub fn delta(t: f64, alpha: f64, c_const: f64) -> f64 {
    let r = t / c_const;
    (-alpha * r * r).exp()
}

/// Continuous frame index where δ reaches 1/2: `C · sqrt(ln 2 / α)`.
pub fn half_decay_point(alpha: f64, c_const: f64) -> f64 {
    c_const * (std::f64::consts::LN_2 / alpha).sqrt()
}

/// First integer frame index with δ(t) ≤ 1/2.
pub fn half_decay_frame(alpha: f64, c_const: f64) -> u64 {
    let mut t = half_decay_point(alpha, c_const).floor().max(0.0) as u64;
    // Step past rounding at the boundary in either direction.
    while t > 0 && delta((t - 1) as f64, alpha, c_const) <= 0.5 {
        t -= 1;
    }
    while delta(t as f64, alpha, c_const) > 0.5 {
        t += 1;
    }
    t
}

/// `w_t = (1 − β) δ(t) + β`, honoring disabled components.
pub fn fusion_weight(t: f64, model: &CenterBiasModel) -> f64 {
    let beta = model.effective_beta();
    // Same as (1 − β)δ + β, but exactly 1 when δ = 1 and exactly 0 when
    // β = δ = 0.
    1.0 - (1.0 - beta) * (1.0 - model.effective_delta(t))
}

/// Per-pixel convex blend of the prior and the model output.
pub fn fuse(s_init: &SaliencyMap, t: f64, model: &CenterBiasModel) -> Result<SaliencyMap> {
    s_init.ensure_same_grid(&model.cb_map)?;
    let w = fusion_weight(t, model);
    let values = model
        .cb_map
        .values()
        .iter()
        .zip(s_init.values())
        .map(|(&cb, &s)| w * cb + (1.0 - w) * s)
        .collect();
    SaliencyMap::from_values(s_init.grid(), values)
}

/// Gradient of the fused output with respect to `S_init`: `(1 − w_t) · ∂L/∂S`.
pub fn grad_s_init(loss_grad: &[f64], t: f64, model: &CenterBiasModel) -> Vec<f64> {
    let w = fusion_weight(t, model);
    loss_grad.iter().map(|g| (1.0 - w) * g).collect()
}

/// `(∂L/∂α, ∂L/∂β)` given `∂L/∂S`. Disabled components get zero gradient.
pub fn grad_alpha_beta(
    loss_grad: &SaliencyMap,
    s_init: &SaliencyMap,
    t: f64,
    model: &CenterBiasModel,
) -> Result<(f64, f64)> {
    loss_grad.ensure_same_grid(s_init)?;
    s_init.ensure_same_grid(&model.cb_map)?;
    // ∂L/∂w = Σ ∂L/∂S · (CB − S_init)
    let dl_dw: f64 = loss_grad
        .values()
        .iter()
        .zip(model.cb_map.values().iter().zip(s_init.values()))
        .map(|(g, (cb, s))| g * (cb - s))
        .sum();
    let beta = model.effective_beta();
    let d = model.effective_delta(t);
    let r = t / model.c_const;
    let d_alpha = if model.components.delta {
        dl_dw * (1.0 - beta) * d * (-r * r)
    } else {
        0.0
    };
    let d_beta = if model.components.beta {
        dl_dw * (1.0 - d)
    } else {
        0.0
    };
    Ok((d_alpha, d_beta))
}

/// Writes the `alpha=.. beta=.. c=..` header line followed by the map.
pub fn write_cb_model(path: &Path, model: &CenterBiasModel) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_cb_model_to(&mut f, model)?;
    f.flush()?;
    Ok(())
}

pub fn write_cb_model_to<W: Write>(w: &mut W, model: &CenterBiasModel) -> Result<()> {
    writeln!(
        w,
        "alpha={:?} beta={:?} c={:?}",
        model.alpha, model.beta, model.c_const
    )?;
    write_map_to(w, &model.cb_map)
}

pub fn read_cb_model(path: &Path) -> Result<CenterBiasModel> {
    let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
    read_cb_model_from(&mut r)
}

pub fn read_cb_model_from<R: BufRead>(r: &mut R) -> Result<CenterBiasModel> {
    let mut header = String::new();
    r.read_line(&mut header)?;
    let (mut alpha, mut beta, mut c) = (None, None, None);
    for field in header.split_whitespace() {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| Error::data(format!("malformed center-bias header field {field:?}")))?;
        let value: f64 = value
            .parse()
            .map_err(|_| Error::data(format!("bad number in center-bias header: {field:?}")))?;
        match key {
            "alpha" => alpha = Some(value),
            "beta" => beta = Some(value),
            "c" => c = Some(value),
            _ => return Err(Error::data(format!("unknown center-bias header key {key:?}"))),
        }
    }
    let (Some(alpha), Some(beta), Some(c)) = (alpha, beta, c) else {
        return Err(Error::data("center-bias header needs alpha, beta and c"));
    };
    let map = read_map_from(r)?;
    CenterBiasModel::with_params(map, alpha, beta, c)
}
