//! Optimization loop and held-out evaluation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sal360_autodiff::{AdamW, Element, NamedArray, ParamGroup, Tensor};
use sal360_core::center_bias::{clamp_alpha, clamp_beta, fuse, fusion_weight, grad_alpha_beta};
use sal360_core::metrics::{evaluate_frames, NssNormalization};
use sal360_core::objectives::loss_total;
use sal360_core::{latitude_weights, CenterBiasModel, LatitudeWeights, LossBreakdown, MetricReport, SaliencyMap};

use crate::config::{ModelConfig, TrainConfig};
use crate::data::{FixationSeries, FrameSource, GroundTruthSeries, Sample, TrainingSet};
use crate::error::{Error, Result};
use crate::network::{split_maps, Mode, SalModel};

/// Outcome of one optimizer step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepReport {
    /// Mean over the samples that entered the update.
    pub loss: LossBreakdown,
    pub used: usize,
    /// Samples whose loss was undefined (for example an all-zero target).
    pub skipped: usize,
}

/// Owns the network, the fusion parameters and both optimizers.
pub struct Trainer<T: Element> {
    pub model: SalModel<T>,
    cb: CenterBiasModel,
    config: TrainConfig,
    opt: AdamW<T>,
    cb_opt: AdamW<f64>,
    alpha: Tensor<f64>,
    beta: Tensor<f64>,
    weights: LatitudeWeights,
    data_rng: ChaCha8Rng,
    dropout_rng: ChaCha8Rng,
    order: Vec<usize>,
    cursor: usize,
    skipped_total: usize,
}

impl<T: Element> Trainer<T> {
    /// The prior map is resampled to the network's output grid if needed.
    pub fn new(model: SalModel<T>, mut cb: CenterBiasModel, config: TrainConfig) -> Result<Self> {
        if config.batch_size == 0 {
            return Err(Error::input("batch size must be positive"));
        }
        let grid = model.config().output_grid;
        if cb.cb_map.grid() != grid {
            cb.cb_map = cb.cb_map.resize_bilinear(grid);
        }
        cb.components = config.components;
        let opt = AdamW::new(vec![
            ParamGroup::new("encoder", config.lr_encoder, config.weight_decay, model.encoder_params()),
            ParamGroup::new("decoder", config.lr_decoder, config.weight_decay, model.decoder_params()),
        ]);
        let alpha = Tensor::param(&[1], vec![cb.alpha])?;
        let beta = Tensor::param(&[1], vec![cb.beta])?;
        let cb_opt = AdamW::new(vec![
            ParamGroup::new("alpha", config.lr_alpha, 0.0, vec![alpha.clone()]),
            ParamGroup::new("beta", config.lr_beta, 0.0, vec![beta.clone()]),
        ]);
        Ok(Trainer {
            weights: latitude_weights(grid),
            data_rng: ChaCha8Rng::seed_from_u64(config.seed),
            dropout_rng: ChaCha8Rng::seed_from_u64(config.seed ^ 0xD50F_u64.rotate_left(40)),
            model,
            cb,
            config,
            opt,
            cb_opt,
            alpha,
            beta,
            order: Vec::new(),
            cursor: 0,
            skipped_total: 0,
        })
    }

    pub fn center_bias(&self) -> &CenterBiasModel {
        &self.cb
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    /// Degenerate samples skipped since construction.
    pub fn skipped_total(&self) -> usize {
        self.skipped_total
    }

    /// Next `batch_size` samples, reshuffling at the end of each pass.
    pub fn next_batch<C: FrameSource>(&mut self, set: &TrainingSet<'_, C>) -> Result<Vec<Sample>> {
        let mut batch = Vec::with_capacity(self.config.batch_size);
        while batch.len() < self.config.batch_size {
            if self.cursor >= self.order.len() {
                self.order = set.epoch_order(&mut self.data_rng);
                self.cursor = 0;
            }
            let i = self.order[self.cursor];
            self.cursor += 1;
            batch.push(set.sample(i, &mut self.data_rng)?);
        }
        Ok(batch)
    }

    /// Forward, fused loss averaged over the usable samples, backward and
    /// one update of every parameter group including α and β.
    pub fn train_step(&mut self, batch: &[Sample]) -> Result<StepReport> {
        if batch.is_empty() {
            return Err(Error::input("empty batch"));
        }
        let grid = self.model.config().output_grid;
        let pairs: Vec<_> = batch.iter().map(|s| (&s.current, &s.previous)).collect();
        let input = self.model.input_tensor(&pairs)?;
        self.opt.zero_grad();
        let out = self.model.forward(&input, &mut Mode::train(&mut self.dropout_rng))?;
        let s_init = split_maps(&out, grid)?;

        let mut per_sample = Vec::with_capacity(batch.len());
        let mut skipped = 0;
        for (i, (s, sample)) in s_init.iter().zip(batch).enumerate() {
            sample.gt.ensure_same_grid(s)?;
            let fused = fuse(s, sample.t as f64, &self.cb)?;
            match loss_total(&fused, &sample.gt, &self.weights, self.config.terms) {
                Ok((b, g)) => per_sample.push((i, b, g)),
                Err(sal360_core::Error::Degenerate(_)) => skipped += 1,
                Err(e) => return Err(e.into()),
            }
        }
        self.skipped_total += skipped;
        let used = per_sample.len();
        if used == 0 {
            return Ok(StepReport {
                loss: LossBreakdown::default(),
                used,
                skipped,
            });
        }

        let scale = 1.0 / used as f64;
        let plane = grid.len();
        let mut seed = vec![T::zero(); batch.len() * plane];
        let (mut d_alpha, mut d_beta) = (0.0, 0.0);
        for (i, _, g) in &per_sample {
            let t = batch[*i].t as f64;
            let keep = 1.0 - fusion_weight(t, &self.cb);
            let g: Vec<f64> = g.iter().map(|v| v * scale).collect();
            for (dst, v) in seed[i * plane..(i + 1) * plane].iter_mut().zip(&g) {
                *dst = T::of(keep * v);
            }
            let (da, db) = grad_alpha_beta(&SaliencyMap::from_values(grid, g)?, &s_init[*i], t, &self.cb)?;
            d_alpha += da;
            d_beta += db;
        }
        out.sum_product(&seed)?.backward()?;
        self.opt.step()?;

        self.alpha.set_grad(vec![d_alpha])?;
        self.beta.set_grad(vec![d_beta])?;
        self.cb_opt.step()?;
        self.cb.alpha = clamp_alpha(self.alpha.item()?);
        self.cb.beta = clamp_beta(self.beta.item()?);
        self.alpha.set_data(vec![self.cb.alpha])?;
        self.beta.set_data(vec![self.cb.beta])?;

        let losses: Vec<LossBreakdown> = per_sample.iter().map(|(_, b, _)| *b).collect();
        Ok(StepReport {
            loss: LossBreakdown::mean(&losses),
            used,
            skipped,
        })
    }

    /// Runs `steps` updates, calling `on_step(step_index, report)` after each.
    pub fn fit<C: FrameSource>(
        &mut self,
        set: &TrainingSet<'_, C>,
        steps: usize,
        mut on_step: impl FnMut(usize, &StepReport),
    ) -> Result<Vec<StepReport>> {
        let mut reports = Vec::with_capacity(steps);
        for step in 0..steps {
            let batch = self.next_batch(set)?;
            let r = self.train_step(&batch)?;
            on_step(step, &r);
            reports.push(r);
        }
        Ok(reports)
    }
}

/// Held-out clips with the ground truth of the frames to score.
pub struct EvalData<'a, C: FrameSource> {
    pub clips: &'a [C],
    pub gts: &'a [GroundTruthSeries],
    pub fixations: &'a [FixationSeries],
}

/// Per-frame fused predictions for `(clip, t)` jobs, computed in parallel
/// chunks, each with its own copy of the frozen network.
pub fn predict_frames<C: FrameSource + Sync>(
    arrays: &[NamedArray],
    config: &ModelConfig,
    cb: &CenterBiasModel,
    clips: &[C],
    jobs: &[(usize, usize)],
    chunk: usize,
) -> Result<Vec<SaliencyMap>> {
    let chunk = chunk.max(1);
    let mut cb = cb.clone();
    if cb.cb_map.grid() != config.output_grid {
        cb.cb_map = cb.cb_map.resize_bilinear(config.output_grid);
    }
    let n_chunks = jobs.len().div_ceil(chunk);
    let parts = sal360_par::map_range(n_chunks, |ci| -> Result<Vec<SaliencyMap>> {
        let mut model = SalModel::<f32>::new(config.clone(), 0)?;
        model.load_arrays(arrays)?;
        let part = &jobs[ci * chunk..((ci + 1) * chunk).min(jobs.len())];
        let mut frames = Vec::with_capacity(part.len());
        for &(c, t) in part {
            let clip = clips
                .get(c)
                .ok_or_else(|| Error::input(format!("clip {c} of {}", clips.len())))?;
            let prev = t
                .checked_sub(config.k)
                .ok_or_else(|| Error::data(format!("frame {t} has no frame {} before it", config.k)))?;
            frames.push((clip.frame(t)?, clip.frame(prev)?));
        }
        let pairs: Vec<_> = frames.iter().map(|(a, b)| (a, b)).collect();
        let s_init = model.predict_init(&pairs)?;
        s_init
            .iter()
            .zip(part)
            .map(|(s, &(_, t))| Ok(fuse(s, t as f64, &cb)?))
            .collect()
    });
    let mut out = Vec::with_capacity(jobs.len());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

/// Metrics of the fused predictions on every frame with ground truth.
/// Predictions are resized to the ground-truth grid before scoring.
pub fn evaluate<C: FrameSource + Sync>(
    arrays: &[NamedArray],
    config: &ModelConfig,
    cb: &CenterBiasModel,
    data: &EvalData<'_, C>,
) -> Result<MetricReport> {
    if data.clips.len() != data.gts.len() || data.clips.len() != data.fixations.len() {
        return Err(Error::input("clip, ground-truth and fixation counts differ"));
    }
    let mut jobs = Vec::new();
    let mut gts = Vec::new();
    let mut fixations = Vec::new();
    for (c, (g, f)) in data.gts.iter().zip(data.fixations).enumerate() {
        for (&t, map) in g {
            let fix = f
                .get(&t)
                .ok_or_else(|| Error::data(format!("clip {c}: no fixations for frame {t}")))?;
            jobs.push((c, t));
            gts.push(map.clone());
            fixations.push(fix.clone());
        }
    }
    if jobs.is_empty() {
        return Err(Error::data("nothing to evaluate"));
    }
    let preds = predict_frames(arrays, config, cb, data.clips, &jobs, 4)?;
    let preds: Vec<SaliencyMap> = preds
        .into_iter()
        .zip(&gts)
        .map(|(p, g)| if p.grid() == g.grid() { p } else { p.resize_bilinear(g.grid()) })
        .collect();
    let weights = latitude_weights(gts[0].grid());
    Ok(evaluate_frames(&preds, &gts, &fixations, &weights, NssNormalization::Weighted)?)
}
