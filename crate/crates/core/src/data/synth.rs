//! Seeded generator for clustered, labeled clips.
//!
//! Every action class owns a random center in feature space; an actor's
//! feature is its class center plus isotropic noise. Actors of a clip stand
//! around a shared point in the frame. The clip's activity is the majority
//! action, so recovering it requires looking at all actors together.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::types::{ActorInstance, BoundingBox, ClipSample, Dataset};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub clips: usize,
    /// Number of action classes `A`.
    pub actions: usize,
    /// Number of activity classes `C`; must be at least `A`.
    pub activities: usize,
    pub feature_dim: usize,
    /// Persons per clip, inclusive range.
    pub min_actors: usize,
    pub max_actors: usize,
    /// Frames per clip; every person appears once per frame.
    pub frames: usize,
    /// Standard deviation of the class centers.
    pub sigma_between: f64,
    /// Standard deviation of per-actor noise around the class center.
    pub sigma_within: f64,
    /// Probability that a person takes the clip's dominant action.
    pub dominant_prob: f64,
    pub frame_width: u32,
    pub frame_height: u32,
    /// Standard deviation (pixels) of person positions around the group point.
    pub position_spread: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            clips: 100,
            actions: 3,
            activities: 3,
            feature_dim: 16,
            min_actors: 4,
            max_actors: 8,
            frames: 1,
            sigma_between: 1.0,
            sigma_within: 0.2,
            dominant_prob: 0.6,
            frame_width: 640,
            frame_height: 480,
            position_spread: 30.0,
        }
    }
}

impl SynthConfig {
    pub const KEYS: &'static [&'static str] = &[
        "clips",
        "actions",
        "activities",
        "feature_dim",
        "min_actors",
        "max_actors",
        "frames",
        "sigma_between",
        "sigma_within",
        "dominant_prob",
        "frame_width",
        "frame_height",
        "position_spread",
    ];

    /// Sets one field from its textual `key=value` form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::Config(format!("{key}: cannot parse `{value}`")))
        }
        match key {
            "clips" => self.clips = parse(key, value)?,
            "actions" => self.actions = parse(key, value)?,
            "activities" => self.activities = parse(key, value)?,
            "feature_dim" => self.feature_dim = parse(key, value)?,
            "min_actors" => self.min_actors = parse(key, value)?,
            "max_actors" => self.max_actors = parse(key, value)?,
            "frames" => self.frames = parse(key, value)?,
            "sigma_between" => self.sigma_between = parse(key, value)?,
            "sigma_within" => self.sigma_within = parse(key, value)?,
            "dominant_prob" => self.dominant_prob = parse(key, value)?,
            "frame_width" => self.frame_width = parse(key, value)?,
            "frame_height" => self.frame_height = parse(key, value)?,
            "position_spread" => self.position_spread = parse(key, value)?,
            _ => return Err(Error::Config(format!("unknown synth key `{key}`"))),
        }
        Ok(())
    }

    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("clips", self.clips.to_string()),
            ("actions", self.actions.to_string()),
            ("activities", self.activities.to_string()),
            ("feature_dim", self.feature_dim.to_string()),
            ("min_actors", self.min_actors.to_string()),
            ("max_actors", self.max_actors.to_string()),
            ("frames", self.frames.to_string()),
            ("sigma_between", self.sigma_between.to_string()),
            ("sigma_within", self.sigma_within.to_string()),
            ("dominant_prob", self.dominant_prob.to_string()),
            ("frame_width", self.frame_width.to_string()),
            ("frame_height", self.frame_height.to_string()),
            ("position_spread", self.position_spread.to_string()),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_owned()));
        if self.clips == 0 || self.actions == 0 || self.activities == 0 || self.feature_dim == 0 {
            return bad("clips, actions, activities and feature_dim must be positive");
        }
        if self.activities < self.actions {
            return bad("activities must be at least actions (activity = majority action id)");
        }
        if self.min_actors == 0 || self.min_actors > self.max_actors {
            return bad("actor range must satisfy 1 <= min_actors <= max_actors");
        }
        if self.frames == 0 || self.frame_width == 0 || self.frame_height == 0 {
            return bad("frames and frame size must be positive");
        }
        if !(self.sigma_within > 0.0 && self.sigma_between > self.sigma_within && self.sigma_between.is_finite()) {
            return bad("sigmas must satisfy sigma_between > sigma_within > 0");
        }
        if !(0.0..=1.0).contains(&self.dominant_prob) {
            return bad("dominant_prob must lie in [0, 1]");
        }
        if !(self.position_spread >= 0.0 && self.position_spread.is_finite()) {
            return bad("position_spread must be non-negative");
        }
        Ok(())
    }
}

/// Majority id of a label multiset; ties go to the lowest id.
pub fn majority_label(labels: &[usize], num_classes: usize) -> usize {
    let mut counts = vec![0usize; num_classes];
    for &l in labels {
        counts[l] += 1;
    }
    let mut best = 0;
    for (c, &n) in counts.iter().enumerate() {
        if n > counts[best] {
            best = c;
        }
    }
    best
}

pub fn generate_synthetic_dataset(cfg: &SynthConfig, seed: u64) -> Result<Dataset> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let between = Normal::new(0.0, cfg.sigma_between).expect("validated sigma");
    let within = Normal::new(0.0, cfg.sigma_within).expect("validated sigma");
    let spread = Normal::new(0.0, cfg.position_spread).expect("validated spread");
    let jitter = Normal::new(0.0, 1.0).expect("unit normal");

    let centers: Vec<Vec<f64>> = (0..cfg.actions)
        .map(|_| (0..cfg.feature_dim).map(|_| between.sample(&mut rng)).collect())
        .collect();

    let (w, h) = (cfg.frame_width as f64, cfg.frame_height as f64);
    let mut ds = Dataset::new(cfg.feature_dim, cfg.actions, cfg.activities);
    for clip_idx in 0..cfg.clips {
        let persons = rng.gen_range(cfg.min_actors..=cfg.max_actors);
        let dominant = rng.gen_range(0..cfg.actions);
        let actions: Vec<usize> = (0..persons)
            .map(|_| {
                if rng.gen::<f64>() < cfg.dominant_prob {
                    dominant
                } else {
                    rng.gen_range(0..cfg.actions)
                }
            })
            .collect();
        let group = (rng.gen_range(0.3 * w..=0.7 * w), rng.gen_range(0.3 * h..=0.7 * h));
        let bodies: Vec<((f64, f64), f64)> = (0..persons)
            .map(|_| {
                let cx = (group.0 + spread.sample(&mut rng)).clamp(0.0, w);
                let cy = (group.1 + spread.sample(&mut rng)).clamp(0.0, h);
                let bw = rng.gen_range(0.04 * w..=0.08 * w);
                ((cx, cy), bw)
            })
            .collect();

        let mut actors = Vec::with_capacity(persons * cfg.frames);
        for frame_index in 0..cfg.frames {
            for (&action, &((cx, cy), bw)) in actions.iter().zip(&bodies) {
                let cx = cx + jitter.sample(&mut rng);
                let cy = cy + jitter.sample(&mut rng);
                let bh = 2.2 * bw;
                let bbox = BoundingBox::new(cx - bw / 2.0, cy - bh / 2.0, cx + bw / 2.0, cy + bh / 2.0)?;
                let feature = centers[action].iter().map(|c| c + within.sample(&mut rng)).collect();
                actors.push(ActorInstance { frame_index, bbox, feature, action_label: Some(action) });
            }
        }
        ds.clips.push(ClipSample {
            clip_id: format!("clip{clip_idx:04}"),
            frame_width: cfg.frame_width,
            frame_height: cfg.frame_height,
            frame_count: cfg.frames,
            actors,
            activity_label: Some(majority_label(&actions, cfg.actions)),
        });
    }
    Ok(ds)
}
