//! Training losses and their gradients with respect to the prediction.
//!
//! Every loss returns `(value, ∂value/∂pred)` with the gradient laid out
//! like the map. The total objective is the unweighted sum of the four
//! terms.

use crate::error::{Error, Result};
use crate::map::SaliencyMap;
use crate::sphere::LatitudeWeights;

/// Smoothing for KL distributions and clamping for BCE.
pub const EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub cc_term: f64,
    pub kl_term: f64,
    pub smse_term: f64,
    pub bce_term: f64,
    pub total: f64,
}

impl LossBreakdown {
    fn add_scaled(&mut self, other: &LossBreakdown, s: f64) {
        self.cc_term += s * other.cc_term;
        self.kl_term += s * other.kl_term;
        self.smse_term += s * other.smse_term;
        self.bce_term += s * other.bce_term;
        self.total += s * other.total;
    }

    /// Arithmetic mean of several breakdowns (zero for an empty slice).
    pub fn mean(items: &[LossBreakdown]) -> LossBreakdown {
        let mut out = LossBreakdown::default();
        if items.is_empty() {
            return out;
        }
        let s = 1.0 / items.len() as f64;
        for b in items {
            out.add_scaled(b, s);
        }
        out
    }
}

/// Which loss terms enter the total. Disabled terms report zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LossTerms {
    pub cc: bool,
    pub kl: bool,
    pub smse: bool,
    pub bce: bool,
}

impl LossTerms {
    pub const ALL: LossTerms = LossTerms {
        cc: true,
        kl: true,
        smse: true,
        bce: true,
    };

    /// All terms except one (for the loss ablation grid).
    pub fn without(name: &str) -> Result<LossTerms> {
        let mut t = LossTerms::ALL;
        match name {
            "cc" => t.cc = false,
            "kl" => t.kl = false,
            "smse" => t.smse = false,
            "bce" => t.bce = false,
            _ => return Err(Error::input(format!("unknown loss term {name:?}"))),
        }
        Ok(t)
    }

    pub fn label(&self) -> String {
        let names: Vec<&str> = [
            (self.cc, "cc"),
            (self.kl, "kl"),
            (self.smse, "smse"),
            (self.bce, "bce"),
        ]
        .iter()
        .filter_map(|&(on, n)| on.then_some(n))
        .collect();
        names.join("+")
    }
}

impl Default for LossTerms {
    fn default() -> Self {
        LossTerms::ALL
    }
}

fn check_pair(pred: &SaliencyMap, gt: &SaliencyMap) -> Result<()> {
    pred.ensure_same_grid(gt)?;
    pred.ensure_finite()?;
    gt.ensure_finite()
}

fn centered(v: &[f64]) -> Vec<f64> {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| x - mean).collect()
}

/// `1 − Pearson(pred, gt)` over all pixels.
pub fn loss_cc(pred: &SaliencyMap, gt: &SaliencyMap) -> Result<(f64, Vec<f64>)> {
    check_pair(pred, gt)?;
    let p = centered(pred.values());
    let g = centered(gt.values());
    let spp: f64 = p.iter().map(|x| x * x).sum();
    let sgg: f64 = g.iter().map(|x| x * x).sum();
    if crate::metrics::is_flat(spp, pred.values()) || crate::metrics::is_flat(sgg, gt.values()) {
        return Err(Error::Degenerate(
            "correlation loss needs non-constant prediction and target".into(),
        ));
    }
    let spg: f64 = p.iter().zip(&g).map(|(a, b)| a * b).sum();
    let norm = (spp * sgg).sqrt();
    let r = spg / norm;
    // dr/dp_i = g̃_i/√(Σp̃²Σg̃²) − r·p̃_i/Σp̃²; the centering terms cancel.
    let grad = p
        .iter()
        .zip(&g)
        .map(|(pi, gi)| -(gi / norm - r * pi / spp))
        .collect();
    Ok((1.0 - r, grad))
}

/// KL(gt ‖ pred) between the maps rescaled to sum to one (with ε smoothing).
pub fn loss_kl(pred: &SaliencyMap, gt: &SaliencyMap) -> Result<(f64, Vec<f64>)> {
    check_pair(pred, gt)?;
    if pred.values().iter().any(|&v| v < 0.0) || gt.values().iter().any(|&v| v < 0.0) {
        return Err(Error::input("KL loss needs non-negative maps"));
    }
    kl_with_grad(pred.values(), gt.values())
}

pub(crate) fn kl_with_grad(pred: &[f64], gt: &[f64]) -> Result<(f64, Vec<f64>)> {
    let sg: f64 = gt.iter().sum();
    if sg <= 0.0 {
        return Err(Error::Degenerate("KL target is all zero".into()));
    }
    let sp: f64 = pred.iter().sum();
    let zp = sp + EPS;
    let zg = sg + EPS;
    let mut value = 0.0;
    // ratio_i = P_i / (Q_i + ε)
    let mut ratio = vec![0.0; pred.len()];
    for (i, (&p, &g)) in pred.iter().zip(gt).enumerate() {
        let pg = g / zg;
        if pg > 0.0 {
            let q = p / zp + EPS;
            value += pg * (pg / q).ln();
            ratio[i] = pg / q;
        }
    }
    // ∂/∂pred_j = −ratio_j/zp + Σ_i ratio_i · pred_i / zp²
    let coupling: f64 = ratio.iter().zip(pred).map(|(r, p)| r * p).sum::<f64>() / (zp * zp);
    let grad = ratio.iter().map(|r| -r / zp + coupling).collect();
    Ok((value, grad))
}

/// Latitude-weighted mean squared error `Σψe² / Σψ`.
pub fn loss_smse(
    pred: &SaliencyMap,
    gt: &SaliencyMap,
    weights: &LatitudeWeights,
) -> Result<(f64, Vec<f64>)> {
    check_pair(pred, gt)?;
    check_weights(pred, weights)?;
    let w = pred.width();
    let total = weights.total(w);
    let mut value = 0.0;
    let mut grad = Vec::with_capacity(pred.values().len());
    for (i, (p, g)) in pred.values().iter().zip(gt.values()).enumerate() {
        let psi = weights.row(i / w);
        let e = p - g;
        value += psi * e * e;
        grad.push(2.0 * psi * e / total);
    }
    Ok((value / total, grad))
}

pub(crate) fn check_weights(map: &SaliencyMap, weights: &LatitudeWeights) -> Result<()> {
    if weights.height() != map.height() {
        return Err(Error::input(format!(
            "latitude weights have {} rows, map has {}",
            weights.height(),
            map.height()
        )));
    }
    Ok(())
}

/// Mean binary cross-entropy with the prediction clamped to `[ε, 1−ε]`.
/// The gradient is zero where the clamp is active.
pub fn loss_bce(pred: &SaliencyMap, gt: &SaliencyMap) -> Result<(f64, Vec<f64>)> {
    check_pair(pred, gt)?;
    let n = pred.values().len() as f64;
    let mut value = 0.0;
    let mut grad = Vec::with_capacity(pred.values().len());
    for (&p, &g) in pred.values().iter().zip(gt.values()) {
        let pc = p.clamp(EPS, 1.0 - EPS);
        value -= g * pc.ln() + (1.0 - g) * (1.0 - pc).ln();
        grad.push(if pc == p {
            (pc - g) / (pc * (1.0 - pc)) / n
        } else {
            0.0
        });
    }
    Ok((value / n, grad))
}

/// Sum of the enabled terms, with the summed gradient.
pub fn loss_total(
    pred: &SaliencyMap,
    gt: &SaliencyMap,
    weights: &LatitudeWeights,
    terms: LossTerms,
) -> Result<(LossBreakdown, Vec<f64>)> {
    let mut grad = vec![0.0; pred.values().len()];
    let mut out = LossBreakdown::default();
    let mut accumulate = |(v, g): (f64, Vec<f64>), slot: &mut f64| {
        *slot = v;
        grad.iter_mut().zip(g).for_each(|(a, b)| *a += b);
    };
    if terms.cc {
        accumulate(loss_cc(pred, gt)?, &mut out.cc_term);
    }
    if terms.kl {
        accumulate(loss_kl(pred, gt)?, &mut out.kl_term);
    }
    if terms.smse {
        accumulate(loss_smse(pred, gt, weights)?, &mut out.smse_term);
    }
    if terms.bce {
        accumulate(loss_bce(pred, gt)?, &mut out.bce_term);
    }
    out.total = out.cc_term + out.kl_term + out.smse_term + out.bce_term;
    Ok((out, grad))
}
