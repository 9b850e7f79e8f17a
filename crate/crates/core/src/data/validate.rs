use std::fmt;

use super::types::Dataset;

/// One broken invariant, located by clip and (optionally) actor index.
#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub clip_id: Option<String>,
    pub actor: Option<usize>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.clip_id, self.actor) {
            (Some(c), Some(a)) => write!(f, "clip {c} actor {a}: {}", self.message),
            (Some(c), None) => write!(f, "clip {c}: {}", self.message),
            _ => write!(f, "{}", self.message),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks every dataset, clip and actor invariant without touching the input.
pub fn validate_dataset(ds: &Dataset) -> ValidationReport {
    let mut violations = Vec::new();
    let mut push = |clip: Option<&str>, actor: Option<usize>, message: String| {
        violations.push(Violation { clip_id: clip.map(str::to_owned), actor, message });
    };

    if ds.feature_dim == 0 {
        push(None, None, "feature dimension must be at least 1".into());
    }
    let (num_actions, num_activities) = (ds.num_actions(), ds.num_activities());

    for clip in &ds.clips {
        let id = Some(clip.clip_id.as_str());
        if clip.actors.is_empty() {
            push(id, None, "clip has no actors".into());
        }
        if clip.frame_width == 0 || clip.frame_height == 0 {
            push(id, None, format!("frame size {}x{} must be positive", clip.frame_width, clip.frame_height));
        }
        if let Some(label) = clip.activity_label {
            if label >= num_activities {
                push(id, None, format!("activity label {label} out of range [0, {num_activities})"));
            }
        }
        for (i, actor) in clip.actors.iter().enumerate() {
            if actor.frame_index >= clip.frame_count {
                push(
                    id,
                    Some(i),
                    format!("frame index {} not below frame count {}", actor.frame_index, clip.frame_count),
                );
            }
            if !actor.bbox.is_valid() {
                push(id, Some(i), format!("invalid bounding box {:?}", actor.bbox));
            }
            if actor.feature.len() != ds.feature_dim {
                push(
                    id,
                    Some(i),
                    format!("feature length {} differs from d={}", actor.feature.len(), ds.feature_dim),
                );
            }
            if actor.feature.iter().any(|v| !v.is_finite()) {
                push(id, Some(i), "non-finite feature entry".into());
            }
            if let Some(label) = actor.action_label {
                if label >= num_actions {
                    push(id, Some(i), format!("action label {label} out of range [0, {num_actions})"));
                }
            }
        }
    }
    ValidationReport { violations }
}
