//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.

use std::f64::consts::LN_2;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sal360_autodiff::gradcheck::{check_primitive, PRIMITIVES, VARIANTS};
use sal360_autodiff::Tensor;
use sal360_core::center_bias::{fuse, grad_alpha_beta, half_decay_frame};
use sal360_core::metrics::{metric_auc_judd, metric_cc, metric_kl, metric_nss};
use sal360_core::objectives::{loss_bce, loss_cc, loss_kl, loss_smse, loss_total, EPS};
use sal360_core::sphere::{cubemap_to_equirect, equirect_to_cubemap, pixel_to_sphere, sphere_to_pixel};
use sal360_core::{
    latitude_weights, CenterBiasModel, EquirectGrid, FixationMap, LatitudeWeights, LossTerms, NssNormalization,
    RgbFrame, SaliencyMap,
};
use sal360_model::experiment::{cb_ablation, prepare, run, ExperimentConfig};
use sal360_model::{adapt_input_embedding, model_forward, ModelConfig, SalModel, TrainConfig};

struct Outcome {
    pass: bool,
    detail: String,
}

type Check = anyhow::Result<Outcome>;
type Criterion = (&'static str, fn() -> Check);

fn outcome(pass: bool, detail: impl Into<String>) -> Check {
    Ok(Outcome {
        pass,
        detail: detail.into(),
    })
}

fn within(start: Instant, limit: Duration) -> (bool, String) {
    let e = start.elapsed();
    (e < limit, format!("{:.1?} of {:.0?}", e, limit))
}

fn random_map(rng: &mut ChaCha8Rng, grid: EquirectGrid, lo: f64, hi: f64) -> SaliencyMap {
    SaliencyMap::from_fn(grid, |_, _| rng.random_range(lo..hi))
}

fn random_fixations(rng: &mut ChaCha8Rng, grid: EquirectGrid, p: f64) -> FixationMap {
    let n = grid.len();
    let mut hits: Vec<bool> = (0..n).map(|_| rng.random_bool(p)).collect();
    let a = rng.random_range(0..n);
    let mut b = rng.random_range(0..n);
    while b == a {
        b = rng.random_range(0..n);
    }
    hits[a] = true;
    hits[b] = false;
    FixationMap::from_hits(grid, hits).expect("size matches")
}

fn delta_crossing() -> Check {
    let start = Instant::now();
    let cases = [(908.5013, 17u64), (573.5508, 21), (436.3028, 24)];
    let mut ok = true;
    let mut found = Vec::new();
    for (alpha, expected) in cases {
        let frame = half_decay_frame(alpha, 600.0);
        let scan = (0u64..).find(|&t| (-alpha * (t as f64 / 600.0).powi(2)).exp() <= 0.5).unwrap();
        let nearest = (600.0 * (LN_2 / alpha).sqrt()).round() as u64;
        ok &= frame == expected && scan == expected && nearest == expected;
        found.push(frame.to_string());
    }
    let (fast, t) = within(start, Duration::from_secs(1));
    outcome(ok && fast, format!("frames {} (want 17, 21, 24); {t}", found.join(", ")))
}

fn fusion_identities() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let config = ModelConfig::toy(64, 32)?;
    let mut model = SalModel::<f32>::new(config.clone(), 3)?;
    let frame = |rng: &mut ChaCha8Rng| RgbFrame::new(32, 64, (0..3 * 32 * 64).map(|_| rng.random::<f32>()).collect());
    let (cur, prev) = (frame(&mut rng)?, frame(&mut rng)?);
    let s_init = model.predict_init(&[(&cur, &prev)])?.remove(0);
    let mut exact = true;
    for beta in [0.0, 0.07, 0.15, 0.3, 0.61, 0.9] {
        let cb = CenterBiasModel::with_params(random_map(&mut rng, config.output_grid, 0.0, 1.0), 555.0, beta, 600.0)?;
        exact &= model_forward(&mut model, &cur, &prev, 0, &cb)?.values() == cb.cb_map.values();
    }
    let cb = CenterBiasModel::with_params(random_map(&mut rng, config.output_grid, 0.0, 1.0), 555.0, 0.0, 600.0)?;
    let late = model_forward(&mut model, &cur, &prev, 1_000_000, &cb)?;
    let gap = late
        .values()
        .iter()
        .zip(s_init.values())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let (fast, t) = within(start, Duration::from_secs(1));
    outcome(exact && gap < 1e-12 && fast, format!("t=0 bit-exact: {exact}; late gap {gap:.1e}; {t}"))
}

type LossFn = fn(&SaliencyMap, &SaliencyMap, &LatitudeWeights) -> sal360_core::Result<(f64, Vec<f64>)>;

/// Worst entry of `|analytic − numeric|`, relative to the largest numeric entry.
fn loss_fd_error(f: LossFn, pred: &SaliencyMap, gt: &SaliencyMap, w: &LatitudeWeights) -> anyhow::Result<f64> {
    let (_, analytic) = f(pred, gt, w)?;
    let h = 1e-6;
    let mut numeric = Vec::with_capacity(analytic.len());
    for i in 0..pred.values().len() {
        let mut plus = pred.clone();
        plus.values_mut()[i] += h;
        let mut minus = pred.clone();
        minus.values_mut()[i] -= h;
        numeric.push((f(&plus, gt, w)?.0 - f(&minus, gt, w)?.0) / (2.0 * h));
    }
    let scale = numeric.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    Ok(analytic.iter().zip(&numeric).map(|(a, n)| (a - n).abs()).fold(0.0, f64::max) / scale)
}

fn gradient_suite() -> Check {
    let start = Instant::now();
    let mut worst: (f64, String) = (0.0, String::new());
    let mut note = |err: f64, what: String| {
        if !(err <= worst.0) {
            worst = (err, what);
        }
    };
    for name in PRIMITIVES {
        for variant in 0..VARIANTS {
            for seed in [11, 22, 33] {
                note(check_primitive(name, variant, seed)?, format!("{name} v{variant} s{seed}"));
            }
        }
    }
    let losses: [(&str, LossFn); 5] = [
        ("cc", |p, g, _| loss_cc(p, g)),
        ("kl", |p, g, _| loss_kl(p, g)),
        ("smse", loss_smse),
        ("bce", |p, g, _| loss_bce(p, g)),
        ("total", |p, g, w| loss_total(p, g, w, LossTerms::ALL).map(|(b, g)| (b.total, g))),
    ];
    for seed in [1u64, 2, 3] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = rng.random_range(3..=8);
        let grid = EquirectGrid::new(rng.random_range(4..=12), h)?;
        let w = latitude_weights(grid);
        let pred = random_map(&mut rng, grid, 0.05, 0.95);
        let gt = random_map(&mut rng, grid, 0.0, 1.0);
        for (name, f) in losses {
            note(loss_fd_error(f, &pred, &gt, &w)?, format!("loss {name} s{seed}"));
        }

        let s_init = random_map(&mut rng, grid, 0.05, 0.95);
        let cb_map = random_map(&mut rng, grid, 0.05, 0.95);
        let alpha = rng.random_range(200.0..1000.0);
        let beta = rng.random_range(0.05..0.5);
        let t = rng.random_range(5.0..40.0);
        let loss_at = |a: f64, b: f64| -> anyhow::Result<(f64, Vec<f64>)> {
            let m = CenterBiasModel::with_params(cb_map.clone(), a, b, 600.0)?;
            let (l, g) = loss_total(&fuse(&s_init, t, &m)?, &gt, &w, LossTerms::ALL)?;
            Ok((l.total, g))
        };
        let (_, g) = loss_at(alpha, beta)?;
        let model = CenterBiasModel::with_params(cb_map.clone(), alpha, beta, 600.0)?;
        let (da, db) = grad_alpha_beta(&SaliencyMap::from_values(grid, g)?, &s_init, t, &model)?;
        let ha = 1e-5 * alpha;
        let na = (loss_at(alpha + ha, beta)?.0 - loss_at(alpha - ha, beta)?.0) / (2.0 * ha);
        let nb = (loss_at(alpha, beta + 1e-6)?.0 - loss_at(alpha, beta - 1e-6)?.0) / 2e-6;
        note((da - na).abs() / na.abs().max(1e-12), format!("d_alpha s{seed}"));
        note((db - nb).abs() / nb.abs().max(1e-12), format!("d_beta s{seed}"));
    }
    let (fast, t) = within(start, Duration::from_secs(120));
    outcome(worst.0 < 1e-4 && fast, format!("worst relative error {:.1e} ({}); {t}", worst.0, worst.1))
}

/// ROC area from every distinct fixated value used as a threshold,
/// counting each point directly.
fn auc_brute(pred: &SaliencyMap, fix: &FixationMap, w: &LatitudeWeights) -> f64 {
    let width = pred.width();
    let v = pred.values();
    let hits = fix.hits();
    let mut thresholds: Vec<f64> = (0..v.len()).filter(|&i| hits[i]).map(|i| v[i]).collect();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let n_fix = hits.iter().filter(|&&h| h).count() as f64;
    let neg_mass: f64 = (0..v.len()).filter(|&i| !hits[i]).map(|i| w.row(i / width)).sum();
    let mut pts = vec![(0.0, 0.0)];
    for thr in thresholds {
        let tp = (0..v.len()).filter(|&i| hits[i] && v[i] >= thr).count() as f64 / n_fix;
        let fp: f64 = (0..v.len()).filter(|&i| !hits[i] && v[i] >= thr).map(|i| w.row(i / width)).sum::<f64>() / neg_mass;
        pts.push((fp, tp));
    }
    pts.push((1.0, 1.0));
    pts.windows(2).map(|p| (p[1].0 - p[0].0) * (p[1].1 + p[0].1) / 2.0).sum()
}

fn weighted_stats(v: &[f64], w: &[f64]) -> (f64, f64) {
    let total: f64 = w.iter().sum();
    let mut mean = 0.0;
    for i in 0..v.len() {
        mean += w[i] * v[i];
    }
    mean /= total;
    let mut var = 0.0;
    for i in 0..v.len() {
        var += w[i] * (v[i] - mean) * (v[i] - mean);
    }
    (mean, (var / total).sqrt())
}

fn metric_oracles() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut auc_err, mut other_err) = (0.0f64, 0.0f64);
    for k in 0..200 {
        let grid = EquirectGrid::new(rng.random_range(4..=16), rng.random_range(4..=8))?;
        let lw = latitude_weights(grid);
        let w = lw.per_pixel(grid.width());
        let mut pred = random_map(&mut rng, grid, 0.0, 1.0);
        if k % 2 == 0 {
            // Coarse levels produce tied scores.
            pred.values_mut().iter_mut().for_each(|v| *v = (*v * 4.0).floor() / 4.0);
            pred.values_mut()[0] = 1.0;
        }
        let gt = random_map(&mut rng, grid, 0.0, 1.0);
        let fix = random_fixations(&mut rng, grid, 0.3);
        auc_err = auc_err.max((metric_auc_judd(&pred, &fix, &lw)? - auc_brute(&pred, &fix, &lw)).abs());

        let (p, g) = (pred.values(), gt.values());
        let (mp, sp) = weighted_stats(p, &w);
        let (mg, sg) = weighted_stats(g, &w);
        let cov: f64 = (0..p.len()).map(|i| w[i] * (p[i] - mp) * (g[i] - mg)).sum::<f64>() / w.iter().sum::<f64>();
        other_err = other_err.max((metric_cc(&pred, &gt, &lw)? - cov / (sp * sg)).abs());

        let pw: Vec<f64> = (0..p.len()).map(|i| p[i] * w[i]).collect();
        let gw: Vec<f64> = (0..p.len()).map(|i| g[i] * w[i]).collect();
        let zp = pw.iter().sum::<f64>() + EPS;
        let zg = gw.iter().sum::<f64>() + EPS;
        let kl: f64 = (0..p.len())
            .filter(|&i| gw[i] > 0.0)
            .map(|i| gw[i] / zg * ((gw[i] / zg) / (pw[i] / zp + EPS)).ln())
            .sum();
        other_err = other_err.max((metric_kl(&pred, &gt, &lw)? - kl).abs());

        for (mode, ww) in [(NssNormalization::Weighted, w.clone()), (NssNormalization::Unweighted, vec![1.0; p.len()])] {
            let (m, s) = weighted_stats(p, &ww);
            let idx = fix.hit_indices();
            let nss = idx.iter().map(|&i| (p[i] - m) / s).sum::<f64>() / idx.len() as f64;
            other_err = other_err.max((metric_nss(&pred, &fix, &lw, mode)? - nss).abs());
        }
    }

    // Null: fixations placed independently of a fixed map.
    let grid = EquirectGrid::new(16, 8)?;
    let lw = latitude_weights(grid);
    let pred = SaliencyMap::from_fn(grid, |x, y| ((x as f64 * 0.7).sin() + (y as f64 * 0.9).cos()).exp());
    let trials = 4000;
    let scores: Vec<f64> = (0..trials)
        .map(|_| {
            let mut hits = vec![false; grid.len()];
            for _ in 0..5 {
                hits[rng.random_range(0..grid.len())] = true;
            }
            let fix = FixationMap::from_hits(grid, hits).expect("size matches");
            metric_nss(&pred, &fix, &lw, NssNormalization::Unweighted).expect("defined")
        })
        .collect();
    let mean = scores.iter().sum::<f64>() / trials as f64;
    let se = (scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (trials - 1) as f64).sqrt() / (trials as f64).sqrt();

    let (fast, t) = within(start, Duration::from_secs(60));
    outcome(
        auc_err < 1e-12 && other_err < 1e-10 && mean.abs() < 3.0 * se && fast,
        format!("AUC gap {auc_err:.1e}; CC/KL/NSS gap {other_err:.1e}; null NSS {mean:.4} ± {se:.4}; {t}"),
    )
}

fn geometry_round_trips() -> Check {
    let start = Instant::now();
    let mut pixel_ok = true;
    for (w, h) in [(8, 4), (16, 8)] {
        let g = EquirectGrid::new(w, h)?;
        for y in 0..h {
            for x in 0..w {
                pixel_ok &= sphere_to_pixel(g, pixel_to_sphere(g, x, y)?) == (x, y);
            }
        }
    }
    let mut const_err = 0.0f64;
    for (w, h, face) in [(64, 32, 16), (128, 64, 64), (40, 20, 13)] {
        let g = EquirectGrid::new(w, h)?;
        for c in [0.0, 0.37, 1.0, 5.5] {
            let back = cubemap_to_equirect(&equirect_to_cubemap(&SaliencyMap::filled(g, c), face)?, g)?;
            const_err = back.values().iter().fold(const_err, |m, v| m.max((v - c).abs()));
        }
    }
    // Two low-order spherical harmonics: Y₁⁰ ∝ sin φ and Y₂² ∝ cos²φ cos 2λ.
    let g = EquirectGrid::new(128, 64)?;
    let smooth = SaliencyMap::from_fn(g, |x, y| {
        let (lon, lat) = (g.column_longitude(x), g.row_latitude(y));
        0.8 * lat.sin() + 0.5 * lat.cos().powi(2) * (2.0 * lon).cos()
    });
    let back = cubemap_to_equirect(&equirect_to_cubemap(&smooth, g.height())?, g)?;
    let range = smooth.max() - smooth.min();
    let smooth_err = back
        .values()
        .iter()
        .zip(smooth.values())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
        / range;
    let (fast, t) = within(start, Duration::from_secs(30));
    outcome(
        pixel_ok && const_err < 1e-6 && smooth_err < 0.02 && fast,
        format!("pixel identity {pixel_ok}; constant {const_err:.1e}; smooth {:.2}% of range; {t}", 100.0 * smooth_err),
    )
}

fn input_adaptation() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst = 0.0f64;
    for _ in 0..5 {
        let co = rng.random_range(2..6);
        let k = [3usize, 5, 7][rng.random_range(0..3)];
        let (h, w) = (rng.random_range(6..14), rng.random_range(6..14));
        let mut vals = |n: usize| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>();
        let weight = Tensor::<f64>::new(&[co, 3, k, k], vals(co * 3 * k * k))?;
        let bias = Tensor::<f64>::new(&[co], vals(co))?;
        let img = Tensor::<f64>::new(&[1, 3, h, w], vals(3 * h * w))?;
        let adapted = adapt_input_embedding(&weight)?;
        let pad = k / 2;
        let original = img.conv2d(&weight, Some(&bias), 2, pad)?;
        let doubled = Tensor::concat_channels(&[img.clone(), img.clone()])?.conv2d(&adapted, Some(&bias), 2, pad)?;
        let with_zero = Tensor::concat_channels(&[img.clone(), Tensor::zeros(&[1, 3, h, w])])?.conv2d(&adapted, Some(&bias), 2, pad)?;
        let o = original.data();
        let per_channel = o.len() / co;
        for (i, (d, z)) in doubled.data().iter().zip(with_zero.data().iter()).enumerate() {
            let b = bias.data()[i / per_channel];
            worst = worst.max((d - (2.0 * o[i] - b)).abs()).max((z - o[i]).abs());
        }
    }
    outcome(worst < 1e-6, format!("worst deviation {worst:.1e}"))
}

fn synthetic_training() -> Check {
    let start = Instant::now();
    let cfg = ExperimentConfig::synthetic_default()?;
    let prepared = prepare(&cfg)?;
    let full = run(&prepared.splits(), &cfg.model, &cfg.train, |_, _| {})?;
    let r = &full.report;
    let (fast, t) = within(start, Duration::from_secs(20 * 60));
    outcome(
        r.cc >= 0.9 && r.auc_judd >= 0.9 && fast && cfg.train.steps <= 2000,
        format!("held-out cc {:.4} auc {:.4} after {} steps; {t}", r.cc, r.auc_judd, cfg.train.steps),
    )
}

/// Steps per ablation run; every row gets the same budget.
const ABLATION_STEPS: usize = 1000;

fn ablation_ordering() -> Check {
    let start = Instant::now();
    let cfg = ExperimentConfig::synthetic_default()?;
    let prepared = prepare(&cfg)?;
    let train = TrainConfig {
        steps: ABLATION_STEPS,
        ..cfg.train.clone()
    };
    let rows = cb_ablation(&prepared.splits(), &cfg.model, &train)?;
    let cc: Vec<f64> = rows.iter().map(|r| r.result.report.cc).collect();
    // Rows: on/on, delta only, beta only, off/off.
    let ok = cc[0] >= cc[1] && cc[0] >= cc[2] && cc[1] >= cc[3] && cc[2] >= cc[3];
    outcome(
        ok,
        format!(
            "cc on/on {:.4}, delta only {:.4}, beta only {:.4}, off/off {:.4} at {ABLATION_STEPS} steps; {:.1?}",
            cc[0],
            cc[1],
            cc[2],
            cc[3],
            start.elapsed()
        ),
    )
}

const DETERMINISM_CONFIG: &str = "steps = 50\n";

fn pipeline(out: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(out)?;
    let cfg = out.join("run.toml");
    std::fs::write(&cfg, DETERMINISM_CONFIG)?;
    for step in ["synth", "gen-gt", "compute-cb", "train", "infer", "eval"] {
        let o = Command::new(env!("CARGO_BIN_EXE_sal360"))
            .arg(step)
            .arg("--config")
            .arg(&cfg)
            .arg("--out")
            .arg(out)
            .args(["--seed", "17"])
            .args(if step == "train" { &["--log-every", "0"][..] } else { &[] })
            .output()?;
        anyhow::ensure!(o.status.success(), "{step}: {}", String::from_utf8_lossy(&o.stderr));
    }
    Ok(())
}

fn determinism() -> Check {
    let start = Instant::now();
    let dir = tempfile::tempdir()?;
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    pipeline(&a)?;
    pipeline(&b)?;
    let mut same = Vec::new();
    for f in ["model.ckpt", "model.ckpt.manifest.txt", "cb_trained.cbm", "metrics.csv"] {
        same.push((f, std::fs::read(a.join(f))? == std::fs::read(b.join(f))?));
    }
    let ok = same.iter().all(|s| s.1);
    let differing: Vec<&str> = same.iter().filter(|s| !s.1).map(|s| s.0).collect();
    outcome(
        ok,
        if ok {
            format!("checkpoint, manifest, fusion model and metrics identical; {:.1?}", start.elapsed())
        } else {
            format!("differ: {}", differing.join(", "))
        },
    )
}

fn report(name: &str, result: Check, failures: &mut usize) {
    let (pass, detail) = match result {
        Ok(o) => (o.pass, o.detail),
        Err(e) => (false, format!("error: {e:#}")),
    };
    if !pass {
        *failures += 1;
    }
    println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
}

/// Runs every criterion, or only those whose name contains one of the
/// command-line arguments.
fn main() {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let criteria: [Criterion; 9] = [
        ("delta crossing frames", delta_crossing),
        ("fusion identities", fusion_identities),
        ("gradient suite", gradient_suite),
        ("metric oracles", metric_oracles),
        ("geometry round trips", geometry_round_trips),
        ("input adaptation", input_adaptation),
        ("synthetic training", synthetic_training),
        ("ablation ordering", ablation_ordering),
        ("determinism", determinism),
    ];
    let mut failures = 0;
    let mut ran = 0;
    for (name, check) in criteria {
        if !filters.is_empty() && !filters.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        ran += 1;
        report(name, check(), &mut failures);
    }
    println!("{} of {ran} criteria passed", ran - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
