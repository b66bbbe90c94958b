//! Evaluation metrics with cos-latitude weighting: CC, NSS, KL and AUC-Judd.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::map::{FixationMap, SaliencyMap};
use crate::objectives::{check_weights, kl_with_grad};
use crate::sphere::LatitudeWeights;

/// How NSS standardizes the prediction before reading it at fixations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NssNormalization {
    /// Ψ-weighted mean and standard deviation.
    #[default]
    Weighted,
    /// Plain per-pixel mean and standard deviation.
    Unweighted,
}

fn undefined(msg: impl Into<String>) -> Error {
    Error::UndefinedMetric(msg.into())
}

struct Moments {
    mean: f64,
    var: f64,
}

fn weighted_moments(v: &[f64], w: &[f64]) -> Moments {
    let total: f64 = w.iter().sum();
    let mean = v.iter().zip(w).map(|(x, w)| x * w).sum::<f64>() / total;
    let var = v
        .iter()
        .zip(w)
        .map(|(x, w)| w * (x - mean) * (x - mean))
        .sum::<f64>()
        / total;
    Moments { mean, var }
}

pub(crate) fn is_flat(var: f64, values: &[f64]) -> bool {
    var <= 0.0 || values.iter().all(|&v| v == values[0])
}

fn check_map(map: &SaliencyMap, weights: &LatitudeWeights) -> Result<()> {
    check_weights(map, weights)?;
    map.ensure_finite()
}

/// Ψ-weighted Pearson correlation.
pub fn metric_cc(pred: &SaliencyMap, gt: &SaliencyMap, weights: &LatitudeWeights) -> Result<f64> {
    pred.ensure_same_grid(gt)?;
    check_map(pred, weights)?;
    check_map(gt, weights)?;
    let w = weights.per_pixel(pred.width());
    let mp = weighted_moments(pred.values(), &w);
    let mg = weighted_moments(gt.values(), &w);
    if is_flat(mp.var, pred.values()) || is_flat(mg.var, gt.values()) {
        return Err(undefined("CC of a constant map"));
    }
    let total: f64 = w.iter().sum();
    let cov = pred
        .values()
        .iter()
        .zip(gt.values())
        .zip(&w)
        .map(|((p, g), w)| w * (p - mp.mean) * (g - mg.mean))
        .sum::<f64>()
        / total;
    Ok((cov / (mp.var.sqrt() * mg.var.sqrt())).clamp(-1.0, 1.0))
}

/// Mean standardized prediction at fixated pixels.
pub fn metric_nss(
    pred: &SaliencyMap,
    fixations: &FixationMap,
    weights: &LatitudeWeights,
    mode: NssNormalization,
) -> Result<f64> {
    check_map(pred, weights)?;
    if fixations.grid() != pred.grid() {
        return Err(Error::input("fixation map grid differs from prediction"));
    }
    let hits = fixations.hit_indices();
    if hits.is_empty() {
        return Err(undefined("NSS with no fixations"));
    }
    let w = match mode {
        NssNormalization::Weighted => weights.per_pixel(pred.width()),
        NssNormalization::Unweighted => vec![1.0; pred.values().len()],
    };
    let m = weighted_moments(pred.values(), &w);
    if is_flat(m.var, pred.values()) {
        return Err(undefined("NSS of a constant map"));
    }
    let sd = m.var.sqrt();
    let sum: f64 = hits.iter().map(|&i| (pred.values()[i] - m.mean) / sd).sum();
    Ok(sum / hits.len() as f64)
}

/// KL(gt ‖ pred) between Ψ-weighted maps rescaled to distributions.
pub fn metric_kl(pred: &SaliencyMap, gt: &SaliencyMap, weights: &LatitudeWeights) -> Result<f64> {
    pred.ensure_same_grid(gt)?;
    check_map(pred, weights)?;
    check_map(gt, weights)?;
    if pred.values().iter().chain(gt.values()).any(|&v| v < 0.0) {
        return Err(Error::input("KL needs non-negative maps"));
    }
    let w = weights.per_pixel(pred.width());
    let p: Vec<f64> = pred.values().iter().zip(&w).map(|(v, w)| v * w).collect();
    let g: Vec<f64> = gt.values().iter().zip(&w).map(|(v, w)| v * w).collect();
    match kl_with_grad(&p, &g) {
        Ok((v, _)) => Ok(v),
        Err(Error::Degenerate(m)) => Err(undefined(m)),
        Err(e) => Err(e),
    }
}

/// ROC area with thresholds at the distinct fixated prediction values.
/// False positives are measured as Ψ-weighted area of non-fixated pixels.
pub fn metric_auc_judd(
    pred: &SaliencyMap,
    fixations: &FixationMap,
    weights: &LatitudeWeights,
) -> Result<f64> {
    check_map(pred, weights)?;
    if fixations.grid() != pred.grid() {
        return Err(Error::input("fixation map grid differs from prediction"));
    }
    let width = pred.width();
    let mut fixated = Vec::new();
    let mut others = Vec::new();
    for (i, (&v, &hit)) in pred.values().iter().zip(fixations.hits()).enumerate() {
        if hit {
            fixated.push(v);
        } else {
            others.push((v, weights.row(i / width)));
        }
    }
    if fixated.is_empty() || others.is_empty() {
        return Err(undefined("AUC needs fixated and non-fixated pixels"));
    }
    let other_mass: f64 = others.iter().map(|o| o.1).sum();
    if other_mass <= 0.0 {
        return Err(undefined("non-fixated pixels carry no weight"));
    }
    fixated.sort_by(|a, b| b.total_cmp(a));
    others.sort_by(|a, b| b.0.total_cmp(&a.0));

    let n_fix = fixated.len() as f64;
    let (mut area, mut prev_tp, mut prev_fp) = (0.0, 0.0, 0.0);
    let (mut fi, mut oi, mut fp_mass) = (0, 0, 0.0);
    while fi < fixated.len() {
        let thr = fixated[fi];
        while fi < fixated.len() && fixated[fi] >= thr {
            fi += 1;
        }
        while oi < others.len() && others[oi].0 >= thr {
            fp_mass += others[oi].1;
            oi += 1;
        }
        let tp = fi as f64 / n_fix;
        let fp = fp_mass / other_mass;
        area += (fp - prev_fp) * (tp + prev_tp) * 0.5;
        prev_tp = tp;
        prev_fp = fp;
    }
    area += (1.0 - prev_fp) * (1.0 + prev_tp) * 0.5;
    Ok(area)
}

/// Metrics for one frame; `None` marks an undefined value.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FrameMetrics {
    pub cc: Option<f64>,
    pub nss: Option<f64>,
    pub kl: Option<f64>,
    pub auc: Option<f64>,
}

/// Frame counts excluded from each mean because the metric was undefined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct Exclusions {
    pub cc: usize,
    pub nss: usize,
    pub kl: usize,
    pub auc: usize,
}

/// Per-metric means over frames. A metric undefined on every frame is NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub cc: f64,
    pub nss: f64,
    pub kl: f64,
    pub auc_judd: f64,
    pub frame_count: usize,
    pub excluded: Exclusions,
    pub frames: Vec<FrameMetrics>,
}

fn defined(r: Result<f64>) -> Result<Option<f64>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::UndefinedMetric(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

pub fn evaluate_frame(
    pred: &SaliencyMap,
    gt: &SaliencyMap,
    fixations: &FixationMap,
    weights: &LatitudeWeights,
    nss_mode: NssNormalization,
) -> Result<FrameMetrics> {
    Ok(FrameMetrics {
        cc: defined(metric_cc(pred, gt, weights))?,
        nss: defined(metric_nss(pred, fixations, weights, nss_mode))?,
        kl: defined(metric_kl(pred, gt, weights))?,
        auc: defined(metric_auc_judd(pred, fixations, weights))?,
    })
}

pub fn evaluate_frames(
    preds: &[SaliencyMap],
    gts: &[SaliencyMap],
    fixations: &[FixationMap],
    weights: &LatitudeWeights,
    nss_mode: NssNormalization,
) -> Result<MetricReport> {
    if preds.len() != gts.len() || preds.len() != fixations.len() {
        return Err(Error::input(format!(
            "sequence lengths differ: {} predictions, {} maps, {} fixation maps",
            preds.len(),
            gts.len(),
            fixations.len()
        )));
    }
    let frames = sal360_par::map_range(preds.len(), |i| {
        evaluate_frame(&preds[i], &gts[i], &fixations[i], weights, nss_mode)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(MetricReport::from_frames(frames))
}

impl MetricReport {
    pub fn from_frames(frames: Vec<FrameMetrics>) -> MetricReport {
        fn mean(vals: impl Iterator<Item = Option<f64>>) -> (f64, usize) {
            let (mut sum, mut n, mut missing) = (0.0, 0usize, 0usize);
            for v in vals {
                match v {
                    Some(v) => {
                        sum += v;
                        n += 1;
                    }
                    None => missing += 1,
                }
            }
            (if n == 0 { f64::NAN } else { sum / n as f64 }, missing)
        }
        let (cc, x_cc) = mean(frames.iter().map(|f| f.cc));
        let (nss, x_nss) = mean(frames.iter().map(|f| f.nss));
        let (kl, x_kl) = mean(frames.iter().map(|f| f.kl));
        let (auc, x_auc) = mean(frames.iter().map(|f| f.auc));
        MetricReport {
            cc,
            nss,
            kl,
            auc_judd: auc,
            frame_count: frames.len(),
            excluded: Exclusions {
                cc: x_cc,
                nss: x_nss,
                kl: x_kl,
                auc: x_auc,
            },
            frames,
        }
    }

    /// CSV with header `frame,cc,nss,kl,auc`, one row per frame and a final
    /// `mean` row. Undefined values are left empty.
    pub fn write_csv_to<W: Write>(&self, w: W) -> Result<()> {
        let labels: Vec<String> = (0..self.frames.len()).map(|i| i.to_string()).collect();
        self.write_labeled_csv_to(w, &labels)
    }

    /// Like [`MetricReport::write_csv_to`] with caller-supplied frame labels.
    pub fn write_labeled_csv_to<W: Write>(&self, w: W, labels: &[String]) -> Result<()> {
        if labels.len() != self.frames.len() {
            return Err(Error::input(format!(
                "{} labels for {} frames",
                labels.len(),
                self.frames.len()
            )));
        }
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["frame", "cc", "nss", "kl", "auc"])
            .map_err(csv_err)?;
        let cell = |v: Option<f64>| v.map(|v| format!("{v:?}")).unwrap_or_default();
        for (label, f) in labels.iter().zip(&self.frames) {
            out.write_record([label.clone(), cell(f.cc), cell(f.nss), cell(f.kl), cell(f.auc)])
                .map_err(csv_err)?;
        }
        let summary = |v: f64| if v.is_nan() { String::new() } else { format!("{v:?}") };
        out.write_record([
            "mean".to_string(),
            summary(self.cc),
            summary(self.nss),
            summary(self.kl),
            summary(self.auc_judd),
        ])
        .map_err(csv_err)?;
        out.flush()?;
        Ok(())
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        self.write_csv_to(std::fs::File::create(path)?)
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sphere::{latitude_weights, EquirectGrid};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid(w: usize, h: usize) -> EquirectGrid {
        EquirectGrid::new(w, h).unwrap()
    }

    fn random_map(rng: &mut ChaCha8Rng, g: EquirectGrid) -> SaliencyMap {
        SaliencyMap::from_fn(g, |_, _| rng.random_range(0.0..1.0))
    }

    fn random_fixations(rng: &mut ChaCha8Rng, g: EquirectGrid, n: usize) -> FixationMap {
        let mut f = FixationMap::empty(g);
        while f.count() < n {
            f.mark(rng.random_range(0..g.width()), rng.random_range(0..g.height()));
        }
        f
    }

    /// Enumerates every threshold independently, counting pixels per threshold.
    fn auc_brute_force(pred: &SaliencyMap, fix: &FixationMap, w: &LatitudeWeights) -> f64 {
        let width = pred.width();
        let mut thresholds: Vec<f64> = fix.hit_indices().iter().map(|&i| pred.values()[i]).collect();
        thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
        thresholds.dedup();
        let neg_mass: f64 = (0..pred.values().len())
            .filter(|&i| !fix.hits()[i])
            .map(|i| w.row(i / width))
            .sum();
        let mut pts = vec![(0.0, 0.0)];
        for t in thresholds {
            let tp = fix.hit_indices().iter().filter(|&&i| pred.values()[i] >= t).count() as f64
                / fix.count() as f64;
            let fp: f64 = (0..pred.values().len())
                .filter(|&i| !fix.hits()[i] && pred.values()[i] >= t)
                .map(|i| w.row(i / width))
                .sum::<f64>()
                / neg_mass;
            pts.push((fp, tp));
        }
        pts.push((1.0, 1.0));
        pts.windows(2)
            .map(|p| (p[1].0 - p[0].0) * (p[1].1 + p[0].1) / 2.0)
            .sum()
    }

    #[test]
    fn cc_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = grid(16, 8);
        let w = latitude_weights(g);
        let a = random_map(&mut rng, g);
        assert!((metric_cc(&a, &a, &w).unwrap() - 1.0).abs() < 1e-12);
        let affine = SaliencyMap::from_fn(g, |x, y| 3.0 * a.get(x, y) + 2.0);
        assert!((metric_cc(&affine, &a, &w).unwrap() - 1.0).abs() < 1e-12);
        let flat = SaliencyMap::filled(g, 0.7);
        assert!(matches!(metric_cc(&flat, &a, &w), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn cc_matches_weighted_covariance_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g = grid(16, 8);
        let w = latitude_weights(g);
        let a = random_map(&mut rng, g);
        let b = random_map(&mut rng, g);
        let (mut sw, mut sa, mut sb) = (0.0, 0.0, 0.0);
        for y in 0..8 {
            let psi = g.row_latitude(y).cos();
            for x in 0..16 {
                sw += psi;
                sa += psi * a.get(x, y);
                sb += psi * b.get(x, y);
            }
        }
        let (ma, mb) = (sa / sw, sb / sw);
        let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
        for y in 0..8 {
            let psi = g.row_latitude(y).cos();
            for x in 0..16 {
                let (da, db) = (a.get(x, y) - ma, b.get(x, y) - mb);
                cov += psi * da * db;
                va += psi * da * da;
                vb += psi * db * db;
            }
        }
        let oracle = cov / (va * vb).sqrt();
        assert!((metric_cc(&a, &b, &w).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn nss_single_peak_closed_form() {
        let g = grid(16, 8);
        let w = latitude_weights(g);
        let c = 0.2;
        let mut pred = SaliencyMap::filled(g, c);
        pred.set(5, 3, 1.0);
        let mut fix = FixationMap::empty(g);
        fix.mark(5, 3);
        // Weighted mean and variance of a two-valued map.
        let total = w.total(16);
        let p = w.row(3) / total;
        let mu = c + p * (1.0 - c);
        let var = p * (1.0 - mu).powi(2) + (1.0 - p) * (c - mu).powi(2);
        let expected = (1.0 - mu) / var.sqrt();
        let got = metric_nss(&pred, &fix, &w, NssNormalization::Weighted).unwrap();
        assert!((got - expected).abs() < 1e-10);
        assert!(got > 5.0);
    }

    #[test]
    fn nss_errors_and_modes() {
        let g = grid(8, 4);
        let w = latitude_weights(g);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pred = random_map(&mut rng, g);
        assert!(matches!(
            metric_nss(&pred, &FixationMap::empty(g), &w, NssNormalization::Weighted),
            Err(Error::UndefinedMetric(_))
        ));
        let fix = random_fixations(&mut rng, g, 3);
        let a = metric_nss(&pred, &fix, &w, NssNormalization::Weighted).unwrap();
        let b = metric_nss(&pred, &fix, &w, NssNormalization::Unweighted).unwrap();
        assert!(a.is_finite() && b.is_finite() && a != b);
    }

    #[test]
    fn nss_at_mean_valued_pixel_is_zero() {
        let g = grid(4, 2);
        let w = LatitudeWeights::uniform(2);
        let pred = SaliencyMap::from_values(g, vec![0.0, 1.0, 0.5, 0.5, 0.2, 0.8, 0.4, 0.6]).unwrap();
        let mut fix = FixationMap::empty(g);
        fix.mark(2, 0);
        assert!(metric_nss(&pred, &fix, &w, NssNormalization::Weighted).unwrap().abs() < 1e-12);
    }

    #[test]
    fn nss_permutation_null() {
        // Fixations drawn in proportion to Ψ have zero expected weighted z-score.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let g = grid(32, 16);
        let w = latitude_weights(g);
        let pred = random_map(&mut rng, g);
        let cdf: Vec<f64> = w
            .per_pixel(32)
            .iter()
            .scan(0.0, |acc, v| {
                *acc += v;
                Some(*acc)
            })
            .collect();
        let total = *cdf.last().unwrap();
        let trials: Vec<f64> = (0..100)
            .map(|_| {
                let mut fix = FixationMap::empty(g);
                for _ in 0..10 {
                    let u = rng.random_range(0.0..total);
                    let i = cdf.partition_point(|&c| c <= u);
                    fix.mark(i % 32, i / 32);
                }
                metric_nss(&pred, &fix, &w, NssNormalization::Weighted).unwrap()
            })
            .collect();
        let n = trials.len() as f64;
        let mean = trials.iter().sum::<f64>() / n;
        let sd = (trials.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!(mean.abs() < 3.0 * sd / n.sqrt(), "mean {mean}, se {}", sd / n.sqrt());
    }

    #[test]
    fn kl_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = grid(8, 4);
        let w = latitude_weights(g);
        let a = random_map(&mut rng, g);
        let scaled = SaliencyMap::from_fn(g, |x, y| 0.3 * a.get(x, y));
        assert!(metric_kl(&scaled, &a, &w).unwrap().abs() < 1e-5);
        assert!(matches!(
            metric_kl(&a, &SaliencyMap::zeros(g), &w),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn kl_matches_preweighted_direct_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let g = grid(16, 8);
        let w = latitude_weights(g);
        let p = random_map(&mut rng, g);
        let q = random_map(&mut rng, g);
        let pw: Vec<f64> = (0..128).map(|i| p.values()[i] * g.row_latitude(i / 16).cos()).collect();
        let qw: Vec<f64> = (0..128).map(|i| q.values()[i] * g.row_latitude(i / 16).cos()).collect();
        let sp = pw.iter().sum::<f64>() + 1e-7;
        let sq = qw.iter().sum::<f64>() + 1e-7;
        let direct: f64 = (0..128)
            .map(|i| {
                let gt = qw[i] / sq;
                gt * (gt / (pw[i] / sp + 1e-7)).ln()
            })
            .sum();
        assert!((metric_kl(&p, &q, &w).unwrap() - direct).abs() < 1e-10);
    }

    #[test]
    fn auc_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let g = grid(16, 8);
        let w = latitude_weights(g);
        let fix = random_fixations(&mut rng, g, 5);
        assert_eq!(metric_auc_judd(&fix.to_saliency(), &fix, &w).unwrap(), 1.0);
        let flat = SaliencyMap::filled(g, 0.4);
        assert!((metric_auc_judd(&flat, &fix, &w).unwrap() - 0.5).abs() < 1e-15);
        assert!(matches!(
            metric_auc_judd(&flat, &FixationMap::empty(g), &w),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn auc_matches_brute_force_on_4x4() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let g = grid(4, 4);
        let w = latitude_weights(g);
        for _ in 0..50 {
            // Coarse values so ties occur.
            let pred = SaliencyMap::from_fn(g, |_, _| rng.random_range(0..4) as f64);
            let fix = random_fixations(&mut rng, g, 2);
            let a = metric_auc_judd(&pred, &fix, &w).unwrap();
            assert!((a - auc_brute_force(&pred, &fix, &w)).abs() < 1e-12);
        }
    }

    #[test]
    fn random_auc_concentrates_at_chance() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        // The anchored trapezoid overestimates chance by 1/(2(k+1)) for k
        // fixations, so use enough fixations to keep that under 0.01.
        let n = 1000;
        let g = grid(32, 16);
        let w = latitude_weights(g);
        let mean: f64 = (0..n)
            .map(|_| {
                let pred = random_map(&mut rng, g);
                let fix = random_fixations(&mut rng, g, 60);
                metric_auc_judd(&pred, &fix, &w).unwrap()
            })
            .sum::<f64>()
            / n as f64;
        assert!((mean - 0.5).abs() < 0.02, "mean auc {mean}");
    }

    #[test]
    fn evaluate_frames_averages() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let g = grid(16, 8);
        let w = latitude_weights(g);
        let gts: Vec<SaliencyMap> = (0..5).map(|_| random_map(&mut rng, g)).collect();
        let preds: Vec<SaliencyMap> = (0..5).map(|_| random_map(&mut rng, g)).collect();
        let fix: Vec<FixationMap> = (0..5).map(|_| random_fixations(&mut rng, g, 4)).collect();
        let report = evaluate_frames(&preds, &gts, &fix, &w, NssNormalization::Weighted).unwrap();
        let singles: Vec<MetricReport> = (0..5)
            .map(|i| {
                evaluate_frames(&preds[i..=i], &gts[i..=i], &fix[i..=i], &w, Default::default())
                    .unwrap()
            })
            .collect();
        let mean_cc = singles.iter().map(|r| r.cc).sum::<f64>() / 5.0;
        let mean_auc = singles.iter().map(|r| r.auc_judd).sum::<f64>() / 5.0;
        assert!((report.cc - mean_cc).abs() < 1e-12);
        assert!((report.auc_judd - mean_auc).abs() < 1e-12);
        assert_eq!(singles[0].cc, metric_cc(&preds[0], &gts[0], &w).unwrap());
        assert!(evaluate_frames(&preds[..2], &gts, &fix, &w, Default::default()).is_err());
    }

    #[test]
    fn undefined_frames_are_excluded() {
        let frames = vec![
            FrameMetrics { cc: Some(1.0), nss: Some(2.0), kl: Some(0.0), auc: Some(1.0) },
            FrameMetrics { cc: Some(0.0), nss: None, kl: Some(1.0), auc: Some(0.5) },
        ];
        let r = MetricReport::from_frames(frames);
        assert_eq!(r.cc, 0.5);
        assert_eq!(r.nss, 2.0);
        assert_eq!(r.excluded.nss, 1);
        let mut buf = Vec::new();
        r.write_csv_to(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "frame,cc,nss,kl,auc\n0,1.0,2.0,0.0,1.0\n1,0.0,,1.0,0.5\nmean,0.5,2.0,0.5,0.75\n"
        );
    }

    proptest! {
        #[test]
        fn auc_matches_brute_force(seed in 0u64..10_000, w in 4usize..=16, h in 4usize..=8) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = grid(w, h);
            let lw = latitude_weights(g);
            let pred = SaliencyMap::from_fn(g, |_, _| rng.random_range(0..6) as f64 * 0.1);
            let nfix = rng.random_range(1..g.len());
            let fix = random_fixations(&mut rng, g, nfix.min(g.len() - 1));
            let a = metric_auc_judd(&pred, &fix, &lw).unwrap();
            prop_assert!((a - auc_brute_force(&pred, &fix, &lw)).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&a));
        }

        #[test]
        fn invariances(seed in 0u64..1000, scale in 0.1f64..10.0, shift in -5.0f64..5.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = grid(16, 8);
            let lw = latitude_weights(g);
            let pred = random_map(&mut rng, g);
            let gt = random_map(&mut rng, g);
            let fix = random_fixations(&mut rng, g, 6);
            let affine = SaliencyMap::from_fn(g, |x, y| scale * pred.get(x, y) + shift);
            let cc = metric_cc(&pred, &gt, &lw).unwrap();
            prop_assert!((metric_cc(&affine, &gt, &lw).unwrap() - cc).abs() < 1e-10);
            let nss = metric_nss(&pred, &fix, &lw, NssNormalization::Weighted).unwrap();
            let nss_a = metric_nss(&affine, &fix, &lw, NssNormalization::Weighted).unwrap();
            prop_assert!((nss - nss_a).abs() < 1e-9);
            let auc = metric_auc_judd(&pred, &fix, &lw).unwrap();
            let cubed = SaliencyMap::from_fn(g, |x, y| pred.get(x, y).powi(3).exp());
            prop_assert_eq!(metric_auc_judd(&cubed, &fix, &lw).unwrap(), auc);
            let kl = metric_kl(&pred, &gt, &lw).unwrap();
            prop_assert!(kl >= -1e-5);

            let (pf, gf, ff) = (pred.flip_horizontal(), gt.flip_horizontal(), fix.flip_horizontal());
            prop_assert!((metric_cc(&pf, &gf, &lw).unwrap() - cc).abs() < 1e-12);
            prop_assert!((metric_nss(&pf, &ff, &lw, NssNormalization::Weighted).unwrap() - nss).abs() < 1e-12);
            prop_assert!((metric_kl(&pf, &gf, &lw).unwrap() - kl).abs() < 1e-12);
            prop_assert!((metric_auc_judd(&pf, &ff, &lw).unwrap() - auc).abs() < 1e-12);
        }
    }
}
