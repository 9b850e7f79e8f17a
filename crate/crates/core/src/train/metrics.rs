use std::fmt::Write as _;

use crate::config::TrainConfig;
use crate::data::{ClipSample, Dataset};
use crate::error::{Error, Result};
use crate::model::{predict, ModelParams, Prediction};

#[derive(Clone, Debug, PartialEq)]
pub struct Metrics {
    /// Fraction of activity-labeled clips predicted correctly.
    pub activity_accuracy: f64,
    /// Fraction of labeled actors whose action is predicted correctly.
    pub action_accuracy: f64,
    /// Per action class; `None` for classes with no labeled actor.
    pub per_class_action_accuracy: Vec<Option<f64>>,
    /// `confusion[true][predicted]` over activity-labeled clips.
    pub confusion: Vec<Vec<usize>>,
    pub loss_curve: Vec<f64>,
    pub num_clips: usize,
}

/// Metrics from predictions paired with their clips.
pub fn metrics_from_predictions(
    clips: &[ClipSample],
    preds: &[Prediction],
    num_actions: usize,
    num_activities: usize,
) -> Result<Metrics> {
    if clips.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if clips.len() != preds.len() {
        return Err(Error::Dimension(format!("{} predictions for {} clips", preds.len(), clips.len())));
    }
    let mut confusion = vec![vec![0usize; num_activities]; num_activities];
    let mut action_hits = vec![0usize; num_actions];
    let mut action_totals = vec![0usize; num_actions];
    for (clip, pred) in clips.iter().zip(preds) {
        if pred.action_classes.len() != clip.actors.len() {
            return Err(Error::Dimension(format!(
                "clip {}: {} action predictions for {} actors",
                clip.clip_id,
                pred.action_classes.len(),
                clip.actors.len()
            )));
        }
        if let Some(y) = clip.activity_label {
            if y >= num_activities || pred.activity_class >= num_activities {
                return Err(Error::Dimension(format!("clip {}: activity class out of range", clip.clip_id)));
            }
            confusion[y][pred.activity_class] += 1;
        }
        for (a, &p) in clip.actors.iter().zip(&pred.action_classes) {
            if let Some(y) = a.action_label {
                if y >= num_actions {
                    return Err(Error::Dimension(format!("clip {}: action class out of range", clip.clip_id)));
                }
                action_totals[y] += 1;
                action_hits[y] += usize::from(p == y);
            }
        }
    }
    let labeled: usize = confusion.iter().flatten().sum();
    if labeled == 0 {
        return Err(Error::NoTrainingSignal("no activity-labeled clip to evaluate".into()));
    }
    let correct: usize = (0..num_activities).map(|c| confusion[c][c]).sum();
    let total_actions: usize = action_totals.iter().sum();
    let action_accuracy = if total_actions == 0 {
        0.0
    } else {
        action_hits.iter().sum::<usize>() as f64 / total_actions as f64
    };
    Ok(Metrics {
        activity_accuracy: correct as f64 / labeled as f64,
        action_accuracy,
        per_class_action_accuracy: action_hits
            .iter()
            .zip(&action_totals)
            .map(|(&h, &t)| (t > 0).then(|| h as f64 / t as f64))
            .collect(),
        confusion,
        loss_curve: Vec::new(),
        num_clips: clips.len(),
    })
}

/// Predicts every clip of `ds` in order and scores the predictions.
pub fn evaluate(ds: &Dataset, m: &ModelParams, cfg: &TrainConfig) -> Result<Metrics> {
    if ds.clips.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let dims = m.dims();
    if dims.input_dim != ds.feature_dim {
        return Err(Error::FeatureDim { expected: dims.input_dim, actual: ds.feature_dim });
    }
    if dims.num_actions != ds.num_actions() || dims.num_activities != ds.num_activities() {
        return Err(Error::Dimension(format!(
            "model has {} actions / {} activities, dataset {} / {}",
            dims.num_actions,
            dims.num_activities,
            ds.num_actions(),
            ds.num_activities()
        )));
    }
    let preds = ds.clips.iter().map(|c| predict(c, m, cfg)).collect::<Result<Vec<_>>>()?;
    metrics_from_predictions(&ds.clips, &preds, ds.num_actions(), ds.num_activities())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_owned(), |x| x.to_string())
}

impl Metrics {
    pub fn with_loss_curve(mut self, curve: Vec<f64>) -> Self {
        self.loss_curve = curve;
        self
    }

    /// `key<TAB>value` lines followed by the activity confusion block. The
    /// resolved config is echoed under `config.*`.
    pub fn report(&self, cfg: &TrainConfig, action_names: &[String], activity_names: &[String]) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "clips\t{}", self.num_clips);
        let _ = writeln!(out, "activity_accuracy\t{}", self.activity_accuracy);
        let _ = writeln!(out, "action_accuracy\t{}", self.action_accuracy);
        for (i, acc) in self.per_class_action_accuracy.iter().enumerate() {
            let name = action_names.get(i).map_or_else(|| i.to_string(), Clone::clone);
            let _ = writeln!(out, "action_accuracy.{name}\t{}", fmt_opt(*acc));
        }
        for (e, l) in self.loss_curve.iter().enumerate() {
            let _ = writeln!(out, "loss.epoch{}\t{l}", e + 1);
        }
        for (k, v) in cfg.to_pairs() {
            let _ = writeln!(out, "config.{k}\t{v}");
        }
        let _ = writeln!(out, "confusion\t{}", self.confusion.len());
        for (i, row) in self.confusion.iter().enumerate() {
            let name = activity_names.get(i).map_or_else(|| i.to_string(), Clone::clone);
            let cells: Vec<String> = row.iter().map(usize::to_string).collect();
            let _ = writeln!(out, "{name}\t{}", cells.join("\t"));
        }
        out
    }
}
