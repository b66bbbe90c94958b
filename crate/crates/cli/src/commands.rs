//! The subcommands. Each one stages its outputs and commits them only on
//! success.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use sal360_autodiff::checkpoint::{load_checkpoint, manifest_path, save_checkpoint};
use sal360_core::center_bias::{compute_cb_map, read_cb_model, write_cb_model};
use sal360_core::gt::{generate_ground_truth, read_trace_csv, CoordinateKind, NormalizedPoint};
use sal360_core::io::{read_map, write_fixations, write_map};
use sal360_core::{latitude_weights, metrics::evaluate_frames, CenterBiasModel, MetricReport};
use sal360_model::data::{build_training_set, sample_frame_indices, FixationSeries, GroundTruthSeries};
use sal360_model::experiment::{cb_ablation, loss_ablation, AblationRow, Splits};
use sal360_model::train::predict_frames;
use sal360_model::{EvalData, FrameSource, SalModel, StepReport, SyntheticDataset, Trainer};

use crate::config::RunConfig;
use crate::dataset::{
    count_frames, ensure_disjoint, indexed_file, list_indexed, load_fixations, load_gt, read_split, write_png_frame, PngClip,
    FIX_DIR, GT_DIR, MAP_EXT, PRED_DIR,
};
use crate::plot::{decay_curves, save_decay_png, DecayCurve};
use crate::staging::Staging;

pub const CB_FILE: &str = "cb.cbm";
pub const TRAINED_CB_FILE: &str = "cb_trained.cbm";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const LOSS_FILE: &str = "loss.csv";
pub const METRICS_FILE: &str = "metrics.csv";
pub const ABLATION_CB_FILE: &str = "ablation_cb.csv";
pub const ABLATION_LOSS_FILE: &str = "ablation_loss.csv";
pub const DECAY_PNG: &str = "decay.png";

fn splits(cfg: &RunConfig) -> Result<(Vec<String>, Vec<String>)> {
    let train = read_split(&cfg.train_split)?;
    let test = read_split(&cfg.test_split)?;
    ensure_disjoint(&train, &test)?;
    Ok((train, test))
}

fn open_clips(cfg: &RunConfig, ids: &[String]) -> Result<Vec<PngClip>> {
    ids.iter().map(|id| PngClip::open(&cfg.root, id)).collect()
}

/// Writes the synthetic dataset (split lists, trace CSVs and PNG frames)
/// under `out`. Returns the number of clips written.
pub fn synth(cfg: &RunConfig, out: &Path) -> Result<usize> {
    let data = SyntheticDataset::generate(cfg.synthetic.clone())?;
    let stage = Staging::new(out, "synth")?;
    let mut lists = [String::new(), String::new()];
    let sets = [data.train_clips(), data.test_clips()];
    let mut n = 0;
    for (list, clips) in lists.iter_mut().zip(sets) {
        for clip in clips {
            let id = format!("clip{n:03}");
            writeln!(list, "{id}")?;
            std::fs::write(stage.path(format!("traces/{id}.csv"))?, trace_csv(clip.traces(), cfg.trace_kind))?;
            for t in 0..clip.frame_count() {
                let frame = clip.frame(t)?;
                write_png_frame(&stage.path(indexed_file(&Path::new("frames").join(&id), t, "png"))?, &frame)?;
            }
            n += 1;
        }
    }
    std::fs::write(stage.path("splits/train.txt")?, &lists[0])?;
    std::fs::write(stage.path("splits/test.txt")?, &lists[1])?;
    stage.commit()?;
    Ok(n)
}

fn trace_csv(traces: &[sal360_core::FixationTrace], kind: CoordinateKind) -> String {
    let mut s = match kind {
        CoordinateKind::Angular => "user_id,timestamp_s,longitude_deg,latitude_deg\n",
        CoordinateKind::Normalized => "user_id,timestamp_s,u,v\n",
    }
    .to_string();
    for tr in traces {
        for sample in tr.samples() {
            let p = match sample.point {
                sal360_core::gt::TracePoint::Angular(p) => p,
                sal360_core::gt::TracePoint::Normalized(n) => n.to_sphere(),
            };
            let (a, b) = match kind {
                CoordinateKind::Angular => (p.longitude().to_degrees(), p.latitude().to_degrees()),
                CoordinateKind::Normalized => {
                    let u = (p.longitude() / (2.0 * std::f64::consts::PI) + 0.5).clamp(0.0, 1.0);
                    let v = (0.5 - p.latitude() / std::f64::consts::PI).clamp(0.0, 1.0);
                    let n = NormalizedPoint::new(u, v).expect("clamped into the unit square");
                    (n.u(), n.v())
                }
            };
            let _ = writeln!(s, "{},{:?},{a:?},{b:?}", tr.user_id(), sample.timestamp);
        }
    }
    s
}

/// Builds ground-truth and fixation maps for every frame of every listed
/// video. Returns the number of frames written.
pub fn gen_gt(cfg: &RunConfig, out: &Path) -> Result<usize> {
    let (train, test) = splits(cfg)?;
    let stage = Staging::new(out, "gen-gt")?;
    let mut written = 0;
    for id in train.iter().chain(&test) {
        let trace_path = cfg.root.join("traces").join(format!("{id}.csv"));
        let traces = read_trace_csv(&trace_path, cfg.trace_kind).with_context(|| format!("reading traces {}", trace_path.display()))?;
        if traces.is_empty() {
            bail!("{}: trace file has no samples", trace_path.display());
        }
        let frames = count_frames(&cfg.root.join("frames").join(id))?;
        let gts = generate_ground_truth(&traces, &cfg.gt, frames).with_context(|| format!("ground truth for {id}"))?;
        for (t, g) in gts.iter().enumerate() {
            write_map(&stage.path(indexed_file(&Path::new(GT_DIR).join(id), t, MAP_EXT))?, &g.saliency)?;
            write_fixations(&stage.path(indexed_file(&Path::new(FIX_DIR).join(id), t, MAP_EXT))?, &g.fixations)?;
        }
        written += gts.len();
    }
    stage.commit()?;
    Ok(written)
}

/// Mean first-frame ground truth of the training videos, saved as a
/// center-bias model with default fusion parameters.
pub fn compute_cb(cfg: &RunConfig, out: &Path) -> Result<CenterBiasModel> {
    let (train, _) = splits(cfg)?;
    let firsts = train
        .iter()
        .map(|id| {
            let p = indexed_file(&out.join(GT_DIR).join(id), 0, MAP_EXT);
            read_map(&p).with_context(|| format!("reading {} (run gen-gt first)", p.display()))
        })
        .collect::<Result<Vec<_>>>()?;
    let model = CenterBiasModel::new(compute_cb_map(&firsts)?);
    let stage = Staging::new(out, "compute-cb")?;
    write_cb_model(&stage.path(CB_FILE)?, &model)?;
    stage.commit()?;
    Ok(model)
}

fn read_cb(out: &Path, file: &str, hint: &str) -> Result<CenterBiasModel> {
    let p = out.join(file);
    read_cb_model(&p).with_context(|| format!("reading {} (run {hint} first)", p.display()))
}

fn train_data(cfg: &RunConfig, out: &Path, ids: &[String]) -> Result<(Vec<PngClip>, Vec<GroundTruthSeries>)> {
    let clips = open_clips(cfg, ids)?;
    let gts = clips
        .iter()
        .map(|c| load_gt(out, &c.id, &sample_frame_indices(c.frame_count(), cfg.model.k, cfg.train.sample_stride)))
        .collect::<Result<Vec<_>>>()?;
    Ok((clips, gts))
}

pub struct TrainSummary {
    pub steps: Vec<StepReport>,
    pub cb: CenterBiasModel,
    pub skipped: usize,
}

/// Trains the network and fusion parameters. `on_step` sees every step.
pub fn train(cfg: &RunConfig, out: &Path, mut on_step: impl FnMut(usize, &StepReport)) -> Result<TrainSummary> {
    let (ids, _) = splits(cfg)?;
    let cb = read_cb(out, CB_FILE, "compute-cb")?;
    let (clips, gts) = train_data(cfg, out, &ids)?;
    let set = build_training_set(&clips, &gts, cfg.model.k, cfg.train.sample_stride, cfg.train.augment, cfg.model.output_grid)?;
    let model = SalModel::<f32>::new(cfg.model.clone(), cfg.seed)?;
    let mut trainer = Trainer::new(model, cb, cfg.train.clone())?;
    let steps = trainer.fit(&set, cfg.train.steps, &mut on_step)?;

    let stage = Staging::new(out, "train")?;
    let ckpt = stage.path(CHECKPOINT_FILE)?;
    save_checkpoint(&ckpt, &trainer.model.to_arrays())?;
    debug_assert!(manifest_path(&ckpt).exists());
    let mut log = String::from("step,total,cc,kl,smse,bce,used,skipped\n");
    for (i, r) in steps.iter().enumerate() {
        let l = &r.loss;
        writeln!(log, "{i},{:?},{:?},{:?},{:?},{:?},{},{}", l.total, l.cc_term, l.kl_term, l.smse_term, l.bce_term, r.used, r.skipped)?;
    }
    std::fs::write(stage.path(LOSS_FILE)?, log)?;
    let cb = trainer.center_bias().clone();
    write_cb_model(&stage.path(TRAINED_CB_FILE)?, &cb)?;
    stage.commit()?;
    Ok(TrainSummary {
        skipped: trainer.skipped_total(),
        steps,
        cb,
    })
}

fn load_trained(out: &Path, checkpoint: Option<&Path>) -> Result<(Vec<sal360_autodiff::NamedArray>, CenterBiasModel)> {
    let ckpt = checkpoint.map(Path::to_path_buf).unwrap_or_else(|| out.join(CHECKPOINT_FILE));
    let arrays = load_checkpoint(&ckpt).with_context(|| format!("loading {} (run train first)", ckpt.display()))?;
    let cb = read_cb(out, TRAINED_CB_FILE, "train")?;
    Ok((arrays, cb))
}

/// Predicts every test frame `t ≥ k`. Returns the number of maps written.
pub fn infer(cfg: &RunConfig, out: &Path, checkpoint: Option<&Path>) -> Result<usize> {
    let (_, ids) = splits(cfg)?;
    let (arrays, cb) = load_trained(out, checkpoint)?;
    let clips = open_clips(cfg, &ids)?;
    let jobs: Vec<(usize, usize)> = clips
        .iter()
        .enumerate()
        .flat_map(|(c, clip)| (cfg.model.k..clip.frame_count()).map(move |t| (c, t)))
        .collect();
    if jobs.is_empty() {
        bail!("no test video has more than k = {} frames", cfg.model.k);
    }
    let preds = predict_frames(&arrays, &cfg.model, &cb, &clips, &jobs, 8)?;
    let stage = Staging::new(out, "infer")?;
    for (&(c, t), p) in jobs.iter().zip(&preds) {
        write_map(&stage.path(indexed_file(&Path::new(PRED_DIR).join(&clips[c].id), t, MAP_EXT))?, p)?;
    }
    stage.commit()?;
    Ok(preds.len())
}

/// Scores predicted maps against ground truth. Predictions are read from
/// `pred` (default `<out>/pred`) and ground truth from `gt_root` (default
/// `out`), both laid out as `<id>/NNNNN.s360`.
pub fn eval(cfg: &RunConfig, out: &Path, pred: Option<&Path>, gt_root: Option<&Path>) -> Result<MetricReport> {
    let (_, ids) = splits(cfg)?;
    let pred_dir = pred.map(Path::to_path_buf).unwrap_or_else(|| out.join(PRED_DIR));
    let gt_root = gt_root.unwrap_or(out);
    let mut labels = Vec::new();
    let (mut preds, mut gts, mut fixes) = (Vec::new(), Vec::new(), Vec::new());
    for id in &ids {
        let dir = pred_dir.join(id);
        let frames = list_indexed(&dir, MAP_EXT).with_context(|| format!("no predictions for {id} (run infer first)"))?;
        let g = load_gt(gt_root, id, &frames)?;
        let f = load_fixations(gt_root, id, &frames)?;
        for &t in &frames {
            let p = read_map(&indexed_file(&dir, t, MAP_EXT))?;
            let gt = g[&t].clone();
            preds.push(if p.grid() == gt.grid() { p } else { p.resize_bilinear(gt.grid()) });
            gts.push(gt);
            fixes.push(f[&t].clone());
            labels.push(format!("{id}:{t}"));
        }
    }
    if preds.is_empty() {
        bail!("no predicted frames under {}", pred_dir.display());
    }
    let report = evaluate_frames(&preds, &gts, &fixes, &latitude_weights(gts[0].grid()), cfg.nss)?;
    let stage = Staging::new(out, "eval")?;
    let file = std::fs::File::create(stage.path(METRICS_FILE)?)?;
    report.write_labeled_csv_to(std::io::BufWriter::new(file), &labels)?;
    stage.commit()?;
    Ok(report)
}

pub struct Ablation {
    pub cb_rows: Vec<AblationRow>,
    pub loss_rows: Vec<AblationRow>,
}

type EvalSeries = (Vec<GroundTruthSeries>, Vec<FixationSeries>);

fn eval_series(cfg: &RunConfig, out: &Path, clips: &[PngClip]) -> Result<EvalSeries> {
    let mut gts = Vec::new();
    let mut fixes = Vec::new();
    for c in clips {
        let frames = sample_frame_indices(c.frame_count(), cfg.model.k, cfg.eval_stride);
        gts.push(load_gt(out, &c.id, &frames)?);
        fixes.push(load_fixations(out, &c.id, &frames)?);
    }
    Ok((gts, fixes))
}

/// Retrains once per fusion-component setting and once per objective,
/// scoring each run on the test split.
pub fn ablate(cfg: &RunConfig, out: &Path) -> Result<Ablation> {
    let (train_ids, test_ids) = splits(cfg)?;
    let cb = read_cb(out, CB_FILE, "compute-cb")?;
    let (train_clips, train_gts) = train_data(cfg, out, &train_ids)?;
    let test_clips = open_clips(cfg, &test_ids)?;
    let (test_gts, test_fix) = eval_series(cfg, out, &test_clips)?;
    let splits = Splits {
        train_clips: &train_clips,
        train_gts: &train_gts,
        test: EvalData {
            clips: &test_clips,
            gts: &test_gts,
            fixations: &test_fix,
        },
        cb_map: &cb.cb_map,
    };
    let cb_rows = cb_ablation(&splits, &cfg.model, &cfg.train)?;
    let loss_rows = loss_ablation(&splits, &cfg.model, &cfg.train)?;

    let stage = Staging::new(out, "ablate")?;
    std::fs::write(stage.path(ABLATION_CB_FILE)?, ablation_csv("setting", &cb_rows))?;
    std::fs::write(stage.path(ABLATION_LOSS_FILE)?, ablation_csv("objective", &loss_rows))?;
    stage.commit()?;
    Ok(Ablation { cb_rows, loss_rows })
}

fn ablation_csv(key: &str, rows: &[AblationRow]) -> String {
    let mut s = format!("{key},cc,nss,kl,auc,alpha,beta\n");
    for r in rows {
        let m = &r.result.report;
        let _ = writeln!(
            s,
            "{},{:?},{:?},{:?},{:?},{:?},{:?}",
            r.label,
            m.cc,
            m.nss,
            m.kl,
            m.auc_judd,
            r.result.cb.alpha,
            r.result.cb.beta
        );
    }
    s
}

/// Writes the δ(t) chart for the given α values and returns each curve's
/// half-decay frame.
pub fn plot_decay(alphas: &[f64], c_const: f64, out: &Path) -> Result<(Vec<DecayCurve>, PathBuf)> {
    if alphas.is_empty() {
        bail!("give at least one --alpha");
    }
    if let Some(a) = alphas.iter().find(|a| !(**a > 0.0 && a.is_finite())) {
        bail!("alpha must be positive and finite, got {a}");
    }
    if !(c_const > 0.0 && c_const.is_finite()) {
        bail!("C must be positive and finite, got {c_const}");
    }
    let curves = decay_curves(alphas, c_const);
    let stage = Staging::new(out, "plot-decay")?;
    save_decay_png(&stage.path(DECAY_PNG)?, &curves, c_const)?;
    stage.commit()?;
    Ok((curves, out.join(DECAY_PNG)))
}
