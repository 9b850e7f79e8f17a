//! Two-stage training, evaluation metrics and checkpoints.
//!
//! Stage 1 fits the embedder and both heads with no relational reasoning,
//! seeing one random frame of each clip per epoch. Stage 2 freezes the
//! embedder, switches the graph branches on and trains the rest.

mod checkpoint;
mod metrics;
mod optim;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use metrics::{evaluate, metrics_from_predictions, Metrics};
pub use optim::Optimizer;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::TrainConfig;
use crate::data::{ClipSample, Dataset};
use crate::error::{Error, Result};
use crate::model::{clip_loss_and_grad, ModelDims, ModelParams};
use crate::numeric::Matrix;
use crate::relation::GraphOptions;

const INIT_STREAM: u64 = 0;
const STAGE1_STREAM: u64 = 1;
const STAGE2_STREAM: u64 = 2;

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// A trained model and the mean training loss of every epoch.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: ModelParams,
    pub loss_curve: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    One,
    Two,
}

pub fn has_training_signal(clip: &ClipSample, lambda: f64) -> bool {
    clip.activity_label.is_some() || (lambda > 0.0 && clip.actors.iter().any(|a| a.action_label.is_some()))
}

fn check_dataset(ds: &Dataset, cfg: &TrainConfig) -> Result<()> {
    cfg.validate()?;
    if ds.clips.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if !ds.clips.iter().any(|c| has_training_signal(c, cfg.lambda)) {
        return Err(Error::NoTrainingSignal("no clip carries a usable label".into()));
    }
    if let Some(a) = ds.clips.iter().flat_map(|c| &c.actors).find(|a| a.feature.len() != ds.feature_dim) {
        return Err(Error::FeatureDim { expected: ds.feature_dim, actual: a.feature.len() });
    }
    Ok(())
}

/// Randomly initialized model sized for `ds`.
pub fn init_model(ds: &Dataset, cfg: &TrainConfig) -> Result<ModelParams> {
    let dims = ModelDims {
        input_dim: ds.feature_dim,
        hidden_dim: cfg.hidden_dim.unwrap_or(ds.feature_dim),
        num_actions: ds.num_actions(),
        num_activities: ds.num_activities(),
    };
    ModelParams::init(dims, cfg, &mut rng_for(cfg.seed, INIT_STREAM))
}

/// Which tensors of [`ModelParams::tensors`] a stage updates.
pub fn trainable_mask(m: &ModelParams, stage: Stage) -> Vec<bool> {
    let mut mask = vec![stage == Stage::One; 2];
    for b in &m.branches {
        let relation = stage == Stage::Two && b.mode.is_learned();
        mask.extend([relation; 4]);
        mask.extend(std::iter::repeat_n(stage == Stage::Two, b.gcn.len()));
    }
    mask.extend([true; 4]);
    mask
}

/// Mean loss and mean gradient over a batch of clips.
pub fn batch_loss_and_grad(
    m: &ModelParams,
    clips: &[ClipSample],
    opts: &GraphOptions,
    lambda: f64,
) -> Result<(f64, Vec<Matrix>)> {
    if clips.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut total = 0.0;
    let mut sum: Vec<Matrix> = m.tensors().iter().map(|(_, t)| Matrix::zeros(t.rows(), t.cols())).collect();
    for clip in clips {
        let (l, grads) = clip_loss_and_grad(m, clip, opts, lambda)?;
        total += l;
        for (s, g) in sum.iter_mut().zip(&grads) {
            s.add_assign(g)?;
        }
    }
    let inv = 1.0 / clips.len() as f64;
    Ok((total * inv, sum.into_iter().map(|s| s.scale(inv)).collect()))
}

fn run_epochs(
    ds: &Dataset,
    cfg: &TrainConfig,
    mut model: ModelParams,
    stage: Stage,
    rng: &mut ChaCha8Rng,
    mut sample: impl FnMut(&ClipSample, &mut ChaCha8Rng) -> ClipSample,
) -> Result<TrainOutcome> {
    let opts = cfg.graph_options();
    let mask = trainable_mask(&model, stage);
    let mut opt = Optimizer::new(cfg.optimizer, cfg.learning_rate);
    let mut order: Vec<usize> = (0..ds.clips.len()).collect();
    let mut loss_curve = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        let mut epoch_loss = 0.0;
        let mut seen = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<ClipSample> = chunk
                .iter()
                .map(|&i| sample(&ds.clips[i], rng))
                .filter(|c| !c.actors.is_empty() && has_training_signal(c, cfg.lambda))
                .collect();
            if batch.is_empty() {
                continue;
            }
            let (loss, grads) = batch_loss_and_grad(&model, &batch, &opts, cfg.lambda)?;
            if !loss.is_finite() {
                return Err(Error::NumericNonFinite(format!("training loss {loss}")));
            }
            epoch_loss += loss * batch.len() as f64;
            seen += batch.len();
            opt.step(&mut model.tensors_mut(), &grads, &mask)?;
        }
        loss_curve.push(epoch_loss / seen.max(1) as f64);
    }
    if !model.is_finite() {
        return Err(Error::NumericNonFinite("parameters diverged".into()));
    }
    Ok(TrainOutcome { model, loss_curve })
}

/// Trains the embedder and heads from a fresh initialization with the graph
/// branches switched off, on one random frame of each clip.
pub fn train_stage1(ds: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    check_dataset(ds, cfg)?;
    let mut model = init_model(ds, cfg)?;
    model.relational = false;
    let mut rng = rng_for(cfg.seed, STAGE1_STREAM);
    run_epochs(ds, cfg, model, Stage::One, &mut rng, |clip, rng| {
        let frames = clip.occupied_frames();
        match frames.len() {
            0 | 1 => clip.clone(),
            n => clip.restrict_to_frames(&[frames[rng.gen_range(0..n)]]),
        }
    })
}

/// Continues from `m` with the embedder frozen and the graph branches on.
/// Each frame of a clip is dropped with probability `frame_dropout`; at least
/// one frame always survives.
pub fn train_stage2(ds: &Dataset, m: &ModelParams, cfg: &TrainConfig) -> Result<TrainOutcome> {
    check_dataset(ds, cfg)?;
    if m.dims().input_dim != ds.feature_dim {
        return Err(Error::FeatureDim { expected: m.dims().input_dim, actual: ds.feature_dim });
    }
    let mut model = m.clone();
    model.relational = true;
    let p = cfg.frame_dropout;
    let mut rng = rng_for(cfg.seed, STAGE2_STREAM);
    run_epochs(ds, cfg, model, Stage::Two, &mut rng, |clip, rng| {
        let frames = clip.occupied_frames();
        if p == 0.0 || frames.len() < 2 {
            return clip.clone();
        }
        let mut kept: Vec<usize> = frames.iter().copied().filter(|_| !rng.gen_bool(p)).collect();
        if kept.is_empty() {
            kept.push(frames[rng.gen_range(0..frames.len())]);
        }
        clip.restrict_to_frames(&kept)
    })
}

/// Stage 1, followed by stage 2 when `cfg.stage` is 2. The loss curve covers
/// both stages in order.
pub fn train(ds: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    let first = train_stage1(ds, cfg)?;
    if cfg.stage == 1 {
        return Ok(first);
    }
    let second = train_stage2(ds, &first.model, cfg)?;
    let mut loss_curve = first.loss_curve;
    loss_curve.extend(second.loss_curve);
    Ok(TrainOutcome { model: second.model, loss_curve })
}
