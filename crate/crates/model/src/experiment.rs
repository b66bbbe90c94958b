//! End-to-end runs on the synthetic dataset: ground truth, prior map,
//! training and held-out evaluation.

use sal360_autodiff::NamedArray;
use sal360_core::center_bias::compute_cb_map;
use sal360_core::{BiasComponents, CenterBiasModel, GroundTruthConfig, LossTerms, MetricReport, SaliencyMap};

use crate::config::{ModelConfig, TrainConfig};
use crate::data::{build_training_set, FrameSource, ground_truth_for_frames, sample_frame_indices, FixationSeries, GroundTruthSeries};
use crate::error::Result;
use crate::network::SalModel;
use crate::synthetic::{SyntheticClip, SyntheticConfig, SyntheticDataset};
use crate::train::{evaluate, EvalData, StepReport, Trainer};

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub data: SyntheticConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub sigma_deg: f64,
    /// Held-out frames scored: `k, k + eval_stride, …`.
    pub eval_stride: usize,
}

impl ExperimentConfig {
    /// Default synthetic set with the toy network at the frame size.
    pub fn synthetic_default() -> Result<Self> {
        let data = SyntheticConfig::default();
        // Frames are upsampled 2× at the input so the last encoder stage
        // keeps a 4 × 8 grid of cells.
        let model = ModelConfig {
            input_width: 2 * data.frame_width,
            input_height: 2 * data.frame_height,
            ..ModelConfig::toy(data.frame_width, data.frame_height)?
        };
        Ok(ExperimentConfig {
            data,
            model,
            train: TrainConfig::default(),
            sigma_deg: 10.0,
            eval_stride: 5,
        })
    }
}

/// Dataset plus every ground-truth map the runs need.
pub struct Prepared {
    pub dataset: SyntheticDataset,
    pub gt_config: GroundTruthConfig,
    pub train_gts: Vec<GroundTruthSeries>,
    pub test_gts: Vec<GroundTruthSeries>,
    pub test_fixations: Vec<FixationSeries>,
    /// Mean first-frame map of the training clips.
    pub cb_map: SaliencyMap,
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    let dataset = SyntheticDataset::generate(cfg.data.clone())?;
    let gt_config = cfg.data.ground_truth_config(cfg.sigma_deg)?;
    let n = cfg.data.frames;
    let k = cfg.model.k;
    let mut train_frames = sample_frame_indices(n, k, cfg.train.sample_stride);
    train_frames.insert(0, 0);
    let eval_frames = sample_frame_indices(n, k, cfg.eval_stride);

    let per_clip = |clips: &[SyntheticClip], frames: &[usize]| {
        sal360_par::map_slice(clips, |c| ground_truth_for_frames(c.traces(), &gt_config, n, frames))
            .into_iter()
            .collect::<Result<Vec<_>>>()
    };
    let train = per_clip(dataset.train_clips(), &train_frames)?;
    let test = per_clip(dataset.test_clips(), &eval_frames)?;
    let first: Vec<SaliencyMap> = train.iter().map(|(g, _)| g[&0].clone()).collect();
    let cb_map = compute_cb_map(&first)?;
    let train_gts = train.into_iter().map(|(g, _)| g).collect();
    let (test_gts, test_fixations) = test.into_iter().unzip();
    Ok(Prepared {
        dataset,
        gt_config,
        train_gts,
        test_gts,
        test_fixations,
        cb_map,
    })
}

/// Training and held-out data for one run, with the prior map.
pub struct Splits<'a, C: FrameSource> {
    pub train_clips: &'a [C],
    pub train_gts: &'a [GroundTruthSeries],
    pub test: EvalData<'a, C>,
    pub cb_map: &'a SaliencyMap,
}

impl Prepared {
    pub fn splits(&self) -> Splits<'_, SyntheticClip> {
        Splits {
            train_clips: self.dataset.train_clips(),
            train_gts: &self.train_gts,
            test: EvalData {
                clips: self.dataset.test_clips(),
                gts: &self.test_gts,
                fixations: &self.test_fixations,
            },
            cb_map: &self.cb_map,
        }
    }
}

pub struct RunResult {
    pub arrays: Vec<NamedArray>,
    pub cb: CenterBiasModel,
    pub steps: Vec<StepReport>,
    pub report: MetricReport,
}

/// Trains a fresh network for `train.steps` updates and scores the
/// held-out clips. `on_step` sees every step report.
pub fn run<C: FrameSource + Sync>(
    splits: &Splits<'_, C>,
    model_cfg: &ModelConfig,
    train: &TrainConfig,
    on_step: impl FnMut(usize, &StepReport),
) -> Result<RunResult> {
    let set = build_training_set(
        splits.train_clips,
        splits.train_gts,
        model_cfg.k,
        train.sample_stride,
        train.augment,
        model_cfg.output_grid,
    )?;
    let model = SalModel::<f32>::new(model_cfg.clone(), train.seed)?;
    let cb = CenterBiasModel::new(splits.cb_map.clone());
    let mut trainer = Trainer::new(model, cb, train.clone())?;
    let steps = trainer.fit(&set, train.steps, on_step)?;
    let arrays = trainer.model.to_arrays();
    let cb = trainer.center_bias().clone();
    let report = evaluate(&arrays, model_cfg, &cb, &splits.test)?;
    Ok(RunResult {
        arrays,
        cb,
        steps,
        report,
    })
}

/// The four {δ on/off} × {β on/off} rows, both components first.
pub const CB_ABLATION: [BiasComponents; 4] = [
    BiasComponents { delta: true, beta: true },
    BiasComponents { delta: true, beta: false },
    BiasComponents { delta: false, beta: true },
    BiasComponents { delta: false, beta: false },
];

/// The full objective followed by the four leave-one-out objectives.
pub fn loss_ablation_rows() -> Vec<LossTerms> {
    let mut rows = vec![LossTerms::ALL];
    rows.extend(["cc", "kl", "smse", "bce"].map(|n| LossTerms::without(n).expect("known term")));
    rows
}

pub struct AblationRow {
    pub label: String,
    pub result: RunResult,
}

/// One training run per fusion-component setting, sharing seed and data.
pub fn cb_ablation<C: FrameSource + Sync>(splits: &Splits<'_, C>, model_cfg: &ModelConfig, train: &TrainConfig) -> Result<Vec<AblationRow>> {
    CB_ABLATION
        .iter()
        .map(|&components| {
            let cfg = TrainConfig {
                components,
                ..train.clone()
            };
            Ok(AblationRow {
                label: components_label(components),
                result: run(splits, model_cfg, &cfg, |_, _| {})?,
            })
        })
        .collect()
}

/// One training run per objective in [`loss_ablation_rows`].
pub fn loss_ablation<C: FrameSource + Sync>(splits: &Splits<'_, C>, model_cfg: &ModelConfig, train: &TrainConfig) -> Result<Vec<AblationRow>> {
    loss_ablation_rows()
        .into_iter()
        .map(|terms| {
            let cfg = TrainConfig { terms, ..train.clone() };
            Ok(AblationRow {
                label: terms.label(),
                result: run(splits, model_cfg, &cfg, |_, _| {})?,
            })
        })
        .collect()
}

pub fn components_label(c: BiasComponents) -> String {
    let on = |b: bool| if b { "on" } else { "off" };
    format!("delta={} beta={}", on(c.delta), on(c.beta))
}
