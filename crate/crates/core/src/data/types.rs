use crate::error::{Error, Result};
use crate::numeric::Matrix;

/// Axis-aligned box in frame pixel coordinates, origin top-left.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundingBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl BoundingBox {
    /// Rejects non-finite coordinates and boxes with zero or negative extent.
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self> {
        let b = Self { x_min, y_min, x_max, y_max };
        if !b.is_valid() {
            return Err(Error::InvalidBox { line: 0, x_min, y_min, x_max, y_max });
        }
        Ok(b)
    }

    pub fn is_valid(&self) -> bool {
        [self.x_min, self.y_min, self.x_max, self.y_max].iter().all(|v| v.is_finite())
            && self.x_max > self.x_min
            && self.y_max > self.y_min
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0)
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        Self {
            x_min: self.x_min + dx,
            y_min: self.y_min + dy,
            x_max: self.x_max + dx,
            y_max: self.y_max + dy,
        }
    }
}

/// Center of a box.
pub fn box_center(b: &BoundingBox) -> (f64, f64) {
    b.center()
}

/// One actor observed in one frame of a clip.
#[derive(Clone, Debug, PartialEq)]
pub struct ActorInstance {
    pub frame_index: usize,
    pub bbox: BoundingBox,
    /// Appearance feature vector.
    pub feature: Vec<f64>,
    pub action_label: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClipSample {
    pub clip_id: String,
    pub frame_width: u32,
    pub frame_height: u32,
    /// Number of frames `T`.
    pub frame_count: usize,
    pub actors: Vec<ActorInstance>,
    pub activity_label: Option<usize>,
}

impl ClipSample {
    pub fn num_actors(&self) -> usize {
        self.actors.len()
    }

    /// Actor features stacked as an N×d matrix.
    pub fn feature_matrix(&self) -> Result<Matrix> {
        let d = self.actors.first().map_or(0, |a| a.feature.len());
        let mut data = Vec::with_capacity(self.actors.len() * d);
        for (i, a) in self.actors.iter().enumerate() {
            if a.feature.len() != d {
                return Err(Error::Dimension(format!(
                    "clip {}: actor {i} has {} features, expected {d}",
                    self.clip_id,
                    a.feature.len()
                )));
            }
            data.extend_from_slice(&a.feature);
        }
        Matrix::new(self.actors.len(), d, data)
    }

    pub fn centers(&self) -> Vec<(f64, f64)> {
        self.actors.iter().map(|a| a.bbox.center()).collect()
    }

    pub fn frame_indices(&self) -> Vec<usize> {
        self.actors.iter().map(|a| a.frame_index).collect()
    }

    pub fn action_labels(&self) -> Vec<Option<usize>> {
        self.actors.iter().map(|a| a.action_label).collect()
    }

    /// Copy of the clip keeping only the actors at `keep`, in that order.
    pub fn with_actors(&self, keep: &[usize]) -> ClipSample {
        ClipSample {
            actors: keep.iter().map(|&i| self.actors[i].clone()).collect(),
            ..self.clone_header()
        }
    }

    /// Copy of the clip keeping only actors observed in the given frames.
    pub fn restrict_to_frames(&self, frames: &[usize]) -> ClipSample {
        ClipSample {
            actors: self
                .actors
                .iter()
                .filter(|a| frames.contains(&a.frame_index))
                .cloned()
                .collect(),
            ..self.clone_header()
        }
    }

    /// Distinct frame indices that carry at least one actor, ascending.
    pub fn occupied_frames(&self) -> Vec<usize> {
        let mut frames: Vec<usize> = self.actors.iter().map(|a| a.frame_index).collect();
        frames.sort_unstable();
        frames.dedup();
        frames
    }

    fn clone_header(&self) -> ClipSample {
        ClipSample {
            clip_id: self.clip_id.clone(),
            frame_width: self.frame_width,
            frame_height: self.frame_height,
            frame_count: self.frame_count,
            actors: Vec::new(),
            activity_label: self.activity_label,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub clips: Vec<ClipSample>,
    pub action_names: Vec<String>,
    pub activity_names: Vec<String>,
    pub feature_dim: usize,
}

impl Dataset {
    /// Empty dataset with generated class names `action0..` and `activity0..`.
    pub fn new(feature_dim: usize, num_actions: usize, num_activities: usize) -> Self {
        Self {
            clips: Vec::new(),
            action_names: default_names("action", num_actions),
            activity_names: default_names("activity", num_activities),
            feature_dim,
        }
    }

    pub fn num_actions(&self) -> usize {
        self.action_names.len()
    }

    pub fn num_activities(&self) -> usize {
        self.activity_names.len()
    }

    pub fn clip(&self, id: &str) -> Option<&ClipSample> {
        self.clips.iter().find(|c| c.clip_id == id)
    }
}

pub(crate) fn default_names(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}
