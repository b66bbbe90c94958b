use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sal360_autodiff::checkpoint::{load_checkpoint, save_checkpoint};
use sal360_autodiff::{NamedArray, Tensor};
use sal360_core::center_bias::{fuse, fusion_weight};
use sal360_core::metrics::{evaluate_frame, NssNormalization};
use sal360_core::objectives::loss_total;
use sal360_core::{latitude_weights, CenterBiasModel, EquirectGrid, FixationMap, LossTerms, RgbFrame, SaliencyMap};
use sal360_model::data::{build_training_set, GroundTruthSeries, Sample};
use sal360_model::{Augment, Mode, ModelConfig, SalModel, TrainConfig, Trainer};

fn tiny_config() -> ModelConfig {
    ModelConfig {
        input_height: 32,
        input_width: 64,
        dims: [4, 8, 8, 8],
        heads: [1, 2, 2, 2],
        reduction: [4, 2, 1, 1],
        decoder_channels: [8, 6, 4, 4],
        output_grid: EquirectGrid::new(32, 16).unwrap(),
        ..ModelConfig::default()
    }
}

fn random_frame(rng: &mut ChaCha8Rng, h: usize, w: usize) -> RgbFrame {
    RgbFrame::new(h, w, (0..3 * h * w).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap()
}

fn blob_map(grid: EquirectGrid, cx: f64, cy: f64) -> SaliencyMap {
    SaliencyMap::from_fn(grid, |x, y| {
        let (dx, dy) = (x as f64 - cx, y as f64 - cy);
        (-(dx * dx + dy * dy) / 8.0).exp()
    })
}

fn samples(n: usize, seed: u64) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = tiny_config().output_grid;
    (0..n)
        .map(|i| Sample {
            current: random_frame(&mut rng, 32, 64),
            previous: random_frame(&mut rng, 32, 64),
            gt: blob_map(grid, 8.0 + 12.0 * i as f64, 6.0 + i as f64),
            t: 10 + 15 * i,
        })
        .collect()
}

fn prior(grid: EquirectGrid) -> CenterBiasModel {
    CenterBiasModel::new(blob_map(grid, 15.5, 7.5))
}

fn quiet(train: TrainConfig) -> TrainConfig {
    TrainConfig {
        augment: Augment::NONE,
        ..train
    }
}

#[test]
fn loss_decreases_across_every_fifty_step_window() {
    let cfg = ModelConfig {
        dropout: 0.0,
        ..tiny_config()
    };
    let model = SalModel::<f32>::new(cfg.clone(), 7).unwrap();
    let train = quiet(TrainConfig {
        lr_encoder: 1e-3,
        ..TrainConfig::default()
    });
    let mut trainer = Trainer::new(model, prior(cfg.output_grid), train).unwrap();
    let batch = samples(2, 1);
    let losses: Vec<f64> = (0..200).map(|_| trainer.train_step(&batch).unwrap().loss.total).collect();
    for i in 0..150 {
        assert!(losses[i + 50] < losses[i], "step {i}: {} -> {}", losses[i], losses[i + 50]);
    }
}

#[test]
fn zero_step_size_leaves_parameters_unchanged() {
    let cfg = tiny_config();
    let model = SalModel::<f32>::new(cfg.clone(), 3).unwrap();
    let before: Vec<Vec<f32>> = model.params().iter().map(|(_, t)| t.to_vec()).collect();
    let train = quiet(TrainConfig {
        lr_encoder: 0.0,
        lr_decoder: 0.0,
        lr_alpha: 0.0,
        lr_beta: 0.0,
        ..TrainConfig::default()
    });
    let cb = prior(cfg.output_grid);
    let mut trainer = Trainer::new(model, cb.clone(), train).unwrap();
    let batch = samples(4, 2);
    for _ in 0..5 {
        let r = trainer.train_step(&batch).unwrap();
        assert_eq!(r.used, 4);
    }
    let after: Vec<Vec<f32>> = trainer.model.params().iter().map(|(_, t)| t.to_vec()).collect();
    assert_eq!(before, after);
    assert_eq!(trainer.center_bias().alpha.to_bits(), cb.alpha.to_bits());
    assert_eq!(trainer.center_bias().beta.to_bits(), cb.beta.to_bits());
}

#[test]
fn frozen_fusion_keeps_alpha_and_beta_while_network_trains() {
    let cfg = tiny_config();
    let model = SalModel::<f32>::new(cfg.clone(), 4).unwrap();
    let before: Vec<Vec<f32>> = model.params().iter().map(|(_, t)| t.to_vec()).collect();
    let train = quiet(TrainConfig {
        lr_alpha: 0.0,
        lr_beta: 0.0,
        ..TrainConfig::default()
    });
    let cb = prior(cfg.output_grid);
    let mut trainer = Trainer::new(model, cb.clone(), train).unwrap();
    let batch = samples(4, 5);
    for _ in 0..10 {
        trainer.train_step(&batch).unwrap();
    }
    assert_eq!(trainer.center_bias().alpha.to_bits(), cb.alpha.to_bits());
    assert_eq!(trainer.center_bias().beta.to_bits(), cb.beta.to_bits());
    let after: Vec<Vec<f32>> = trainer.model.params().iter().map(|(_, t)| t.to_vec()).collect();
    assert_ne!(before, after);
}

#[test]
fn learned_fusion_parameters_move_and_stay_feasible() {
    let cfg = tiny_config();
    let model = SalModel::<f32>::new(cfg.clone(), 4).unwrap();
    let cb = prior(cfg.output_grid);
    let mut trainer = Trainer::new(model, cb.clone(), quiet(TrainConfig::default())).unwrap();
    let batch = samples(4, 6);
    for _ in 0..10 {
        trainer.train_step(&batch).unwrap();
    }
    let got = trainer.center_bias();
    assert_ne!(got.alpha, cb.alpha);
    assert!(got.alpha > 0.0 && (0.0..=1.0).contains(&got.beta));
}

#[test]
fn degenerate_targets_are_skipped_and_counted() {
    let cfg = tiny_config();
    let model = SalModel::<f32>::new(cfg.clone(), 8).unwrap();
    let mut trainer = Trainer::new(model, prior(cfg.output_grid), quiet(TrainConfig::default())).unwrap();
    let mut batch = samples(3, 9);
    batch[1].gt = SaliencyMap::zeros(cfg.output_grid);
    let r = trainer.train_step(&batch).unwrap();
    assert_eq!((r.used, r.skipped), (2, 1));
    for s in &mut batch {
        s.gt = SaliencyMap::zeros(cfg.output_grid);
    }
    let before: Vec<Vec<f32>> = trainer.model.params().iter().map(|(_, t)| t.to_vec()).collect();
    let r = trainer.train_step(&batch).unwrap();
    assert_eq!((r.used, r.skipped), (0, 3));
    assert_eq!(trainer.skipped_total(), 4);
    let after: Vec<Vec<f32>> = trainer.model.params().iter().map(|(_, t)| t.to_vec()).collect();
    assert_eq!(before, after);
    assert!(trainer.train_step(&[]).is_err());
}

/// Fused, batch-averaged training objective in diagnostics mode.
fn objective(model: &mut SalModel<f64>, input: &Tensor<f64>, batch: &[Sample], cb: &CenterBiasModel) -> (f64, Tensor<f64>, Vec<f64>) {
    let grid = model.config().output_grid;
    let weights = latitude_weights(grid);
    let out = model.forward(input, &mut Mode::diagnostics()).unwrap();
    let data = out.to_vec();
    let plane = grid.len();
    let mut total = 0.0;
    let mut seed = vec![0.0; data.len()];
    let n = batch.len() as f64;
    for (i, s) in batch.iter().enumerate() {
        let s_init = SaliencyMap::from_values(grid, data[i * plane..(i + 1) * plane].to_vec()).unwrap();
        let fused = fuse(&s_init, s.t as f64, cb).unwrap();
        let (b, g) = loss_total(&fused, &s.gt, &weights, LossTerms::ALL).unwrap();
        total += b.total / n;
        let keep = 1.0 - fusion_weight(s.t as f64, cb);
        for (j, v) in g.iter().enumerate() {
            seed[i * plane + j] = keep * v / n;
        }
    }
    (total, out, seed)
}

#[test]
fn full_model_gradient_matches_finite_differences() {
    let cfg = ModelConfig {
        dropout: 0.0,
        ..tiny_config()
    };
    let mut model = SalModel::<f64>::new(cfg.clone(), 11).unwrap();
    let batch = samples(2, 12);
    let pairs: Vec<_> = batch.iter().map(|s| (&s.current, &s.previous)).collect();
    let input = model.input_tensor(&pairs).unwrap();
    let cb = prior(cfg.output_grid);

    let (_, out, seed) = objective(&mut model, &input, &batch, &cb);
    for (_, p) in model.params() {
        p.zero_grad();
    }
    out.sum_product(&seed).unwrap().backward().unwrap();
    let params: Vec<(String, Tensor<f64>)> = model.params().to_vec();
    let grads: Vec<Vec<f64>> = params.iter().map(|(_, p)| p.grad_or_zeros()).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let h = 1e-5;
    let mut checked = 0;
    let mut attempts = 0;
    while checked < 10 {
        attempts += 1;
        assert!(attempts < 10_000, "too few parameters with a measurable gradient");
        let pi = rng.random_range(0..params.len());
        let (name, p) = &params[pi];
        let j = rng.random_range(0..p.len());
        let analytic = grads[pi][j];
        if analytic.abs() < 1e-6 {
            continue;
        }
        let base = p.to_vec();
        let mut eval_at = |v: f64| {
            let mut d = base.clone();
            d[j] = v;
            p.set_data(d).unwrap();
            objective(&mut model, &input, &batch, &cb).0
        };
        let fd = (eval_at(base[j] + h) - eval_at(base[j] - h)) / (2.0 * h);
        p.set_data(base).unwrap();
        let rel = (fd - analytic).abs() / fd.abs().max(analytic.abs());
        assert!(rel < 1e-3, "{name}[{j}]: analytic {analytic} vs numeric {fd} (rel {rel})");
        checked += 1;
    }
}

#[test]
fn checkpoint_file_round_trip_gives_identical_forward() {
    let cfg = tiny_config();
    let model = SalModel::<f32>::new(cfg.clone(), 21).unwrap();
    let mut trainer = Trainer::new(model, prior(cfg.output_grid), quiet(TrainConfig::default())).unwrap();
    let batch = samples(4, 22);
    for _ in 0..3 {
        trainer.train_step(&batch).unwrap();
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    save_checkpoint(&path, &trainer.model.to_arrays()).unwrap();
    let mut restored = SalModel::<f32>::new(cfg, 99).unwrap();
    restored.load_arrays(&load_checkpoint(&path).unwrap()).unwrap();
    let pairs: Vec<_> = batch.iter().map(|s| (&s.current, &s.previous)).collect();
    assert_eq!(trainer.model.predict_init(&pairs).unwrap(), restored.predict_init(&pairs).unwrap());
}

/// Reverses the last axis of a `[.., w]` array.
fn flip_last_axis(a: &NamedArray) -> NamedArray {
    let w = *a.shape.last().unwrap();
    let values = a
        .values
        .chunks(w)
        .flat_map(|row| row.iter().rev().copied().collect::<Vec<_>>())
        .collect();
    NamedArray {
        values,
        ..a.clone()
    }
}

#[test]
fn horizontal_flip_commutes_with_stage_one_without_attention() {
    // Width 4m + 1 makes the stride-4 windows symmetric under reversal.
    let cfg = ModelConfig {
        input_height: 33,
        input_width: 45,
        reduction: [1, 1, 1, 1],
        attention: false,
        output_grid: EquirectGrid::new(44, 22).unwrap(),
        ..tiny_config()
    };
    let mut a = SalModel::<f64>::new(cfg.clone(), 31).unwrap();
    let mut b = SalModel::<f64>::new(cfg.clone(), 0).unwrap();
    // Both models carry the same (f32-rounded) stored weights.
    let stored = a.to_arrays();
    a.load_arrays(&stored).unwrap();
    let arrays: Vec<NamedArray> = stored
        .iter()
        .map(|x| if x.name == "encoder.stage1.embed.weight" { flip_last_axis(x) } else { x.clone() })
        .collect();
    b.load_arrays(&arrays).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let (h, w) = (33, 45);
    let x: Vec<f64> = (0..6 * h * w).map(|_| rng.random_range(-1.0..1.0)).collect();
    let flipped: Vec<f64> = x
        .chunks(w)
        .flat_map(|row| row.iter().rev().copied().collect::<Vec<_>>())
        .collect();
    let on_flipped = a.encoder_forward(&Tensor::new(&[1, 6, h, w], flipped).unwrap()).unwrap();
    let on_original = b.encoder_forward(&Tensor::new(&[1, 6, h, w], x).unwrap()).unwrap();
    let s1 = on_flipped.stages[0].to_vec();
    let s2 = on_original.stages[0].to_vec();
    let ow = on_flipped.stages[0].shape()[3];
    assert_eq!(ow, 12);
    for (r1, r2) in s1.chunks(ow).zip(s2.chunks(ow)) {
        for (u, v) in r1.iter().zip(r2.iter().rev()) {
            assert!((u - v).abs() < 1e-10, "{u} vs {v}");
        }
    }
}

#[test]
fn forced_horizontal_flip_preserves_metrics() {
    let cfg = tiny_config();
    let grid = cfg.output_grid;
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let frames: Vec<RgbFrame> = (0..12).map(|_| random_frame(&mut rng, 32, 64)).collect();
    let clips = vec![sal360_core::VideoClip::new(30.0, frames).unwrap()];
    let gts: Vec<GroundTruthSeries> = vec![(0..12).map(|t| (t, blob_map(grid, 5.0 + t as f64, 4.0))).collect()];
    let plain = build_training_set(&clips, &gts, 5, 5, Augment::NONE, grid).unwrap();
    let flip = Augment {
        hflip: 1.0,
        ..Augment::NONE
    };
    let flipped = build_training_set(&clips, &gts, 5, 5, flip, grid).unwrap();
    let mut model = SalModel::<f32>::new(cfg, 42).unwrap();
    let weights = latitude_weights(grid);
    for i in 0..plain.len() {
        let s0 = plain.sample(i, &mut rng).unwrap();
        let s1 = flipped.sample(i, &mut rng).unwrap();
        assert_eq!(s1.gt, s0.gt.flip_horizontal());
        let pred = model.predict_init(&[(&s0.current, &s0.previous)]).unwrap().remove(0);
        let mut fix = FixationMap::empty(grid);
        fix.mark(3, 4);
        fix.mark(20, 9);
        let m0 = evaluate_frame(&pred, &s0.gt, &fix, &weights, NssNormalization::Weighted).unwrap();
        let m1 = evaluate_frame(
            &pred.flip_horizontal(),
            &s1.gt,
            &fix.flip_horizontal(),
            &weights,
            NssNormalization::Weighted,
        )
        .unwrap();
        for (a, b) in [(m0.cc, m1.cc), (m0.nss, m1.nss), (m0.kl, m1.kl), (m0.auc, m1.auc)] {
            let (a, b) = (a.unwrap(), b.unwrap());
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }
}
