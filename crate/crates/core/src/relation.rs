//! Actor relation graphs.
//!
//! `G_ij = f_s(i, j) · exp(f_a(i, j)) / Σ_j f_s(i, j) · exp(f_a(i, j))`, where
//! `f_a` is an appearance relation and `f_s` is the indicator that the two box
//! centers lie within distance `μ` of each other.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::data::ClipSample;
use crate::error::{Error, Result};
use crate::numeric::{dot, masked_row_softmax, Matrix};

/// Appearance relation function.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RelationMode {
    /// `θ(x_i)ᵀ φ(x_j) / √d_k` with learned affine maps θ and φ.
    EmbeddedDotProduct,
    /// Zero-lag normalized cross-correlation of the two feature vectors.
    Ncc,
    /// Negated mean absolute difference, `−SAD(x_i, x_j) / d`.
    Sad,
}

impl RelationMode {
    pub const ALL: [RelationMode; 3] = [Self::EmbeddedDotProduct, Self::Ncc, Self::Sad];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::EmbeddedDotProduct => "dot",
            Self::Ncc => "ncc",
            Self::Sad => "sad",
        }
    }

    /// Whether gradients flow from the graph back into its inputs.
    pub fn is_learned(self) -> bool {
        self == Self::EmbeddedDotProduct
    }
}

impl fmt::Display for RelationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RelationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "dot" | "embedded-dot-product" | "embedded_dot_product" => Ok(Self::EmbeddedDotProduct),
            "ncc" => Ok(Self::Ncc),
            "sad" => Ok(Self::Sad),
            other => Err(Error::Config(format!("unknown relation mode `{other}` (dot, ncc, sad)"))),
        }
    }
}

/// How the distance threshold `μ` is obtained for a clip.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MuRule {
    /// `μ = f · frame_width`, `f ∈ (0, 1]`.
    FractionOfWidth(f64),
    /// Fixed `μ` in pixels.
    Pixels(f64),
}

impl Default for MuRule {
    fn default() -> Self {
        Self::FractionOfWidth(0.2)
    }
}

impl MuRule {
    pub fn validate(self) -> Result<()> {
        match self {
            Self::FractionOfWidth(f) if f > 0.0 && f <= 1.0 => Ok(()),
            Self::Pixels(p) if p > 0.0 && p.is_finite() => Ok(()),
            other => Err(Error::Config(format!("invalid distance threshold rule {other:?}"))),
        }
    }

    pub fn resolve(self, frame_width: u32) -> f64 {
        match self {
            Self::FractionOfWidth(f) => f * frame_width as f64,
            Self::Pixels(p) => p,
        }
    }
}

/// Switches that change how a graph is assembled.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GraphOptions {
    /// Only connect actors observed in the same frame.
    pub same_frame_only: bool,
    /// Mean-center vectors before correlating (off gives raw cosine).
    pub ncc_centered: bool,
}

impl Default for GraphOptions {
    fn default() -> Self {
        Self { same_frame_only: false, ncc_centered: true }
    }
}

/// Parameters of one relation graph.
#[derive(Clone, Debug, PartialEq)]
pub struct RelationParams {
    pub d_k: usize,
    /// d_k × d
    pub w_theta: Matrix,
    /// 1 × d_k
    pub b_theta: Matrix,
    /// d_k × d
    pub w_phi: Matrix,
    /// 1 × d_k
    pub b_phi: Matrix,
    pub mu: MuRule,
}

impl RelationParams {
    pub fn new(w_theta: Matrix, b_theta: Matrix, w_phi: Matrix, b_phi: Matrix, mu: MuRule) -> Result<Self> {
        let p = Self { d_k: w_theta.rows(), w_theta, b_theta, w_phi, b_phi, mu };
        p.validate()?;
        Ok(p)
    }

    /// Weights drawn uniformly from `±1/√d`.
    pub fn random<R: Rng + ?Sized>(d: usize, d_k: usize, mu: MuRule, rng: &mut R) -> Result<Self> {
        let bound = 1.0 / (d as f64).sqrt();
        let mut draw = |rows, cols| {
            let data = (0..rows * cols).map(|_| rng.gen_range(-bound..=bound)).collect();
            Matrix::new(rows, cols, data)
        };
        Self::new(draw(d_k, d)?, draw(1, d_k)?, draw(d_k, d)?, draw(1, d_k)?, mu)
    }

    /// θ = φ = 0 with zero biases; only usable where appearance scores are not
    /// taken from the embedding.
    pub fn zeros(d: usize, d_k: usize, mu: MuRule) -> Self {
        Self {
            d_k,
            w_theta: Matrix::zeros(d_k, d),
            b_theta: Matrix::zeros(1, d_k),
            w_phi: Matrix::zeros(d_k, d),
            b_phi: Matrix::zeros(1, d_k),
            mu,
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.w_theta.cols()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.w_theta.cols();
        if self.d_k == 0 {
            return Err(Error::Config("d_k must be at least 1".into()));
        }
        let shapes_ok = self.w_theta.shape() == (self.d_k, d)
            && self.w_phi.shape() == (self.d_k, d)
            && self.b_theta.shape() == (1, self.d_k)
            && self.b_phi.shape() == (1, self.d_k);
        if !shapes_ok {
            return Err(Error::Dimension("relation parameter shapes disagree".into()));
        }
        if ![&self.w_theta, &self.b_theta, &self.w_phi, &self.b_phi].iter().all(|m| m.is_finite()) {
            return Err(Error::NumericNonFinite("relation parameters".into()));
        }
        self.mu.validate()
    }

    pub fn score_scale(&self) -> f64 {
        1.0 / (self.d_k as f64).sqrt()
    }
}

/// Row-stochastic relation matrix over a clip's actors, in clip order.
#[derive(Clone, Debug, PartialEq)]
pub struct RelationGraph {
    pub g: Matrix,
    pub mode: RelationMode,
}

impl RelationGraph {
    pub fn num_actors(&self) -> usize {
        self.g.rows()
    }
}

fn check_same_len(x_i: &[f64], x_j: &[f64]) -> Result<()> {
    if x_i.len() != x_j.len() {
        return Err(Error::Dimension(format!("feature lengths {} and {}", x_i.len(), x_j.len())));
    }
    Ok(())
}

/// Embedded dot-product `θ(x_i)ᵀ φ(x_j) / √d_k`.
pub fn appearance_dot(x_i: &[f64], x_j: &[f64], p: &RelationParams) -> Result<f64> {
    check_same_len(x_i, x_j)?;
    if x_i.len() != p.feature_dim() {
        return Err(Error::Dimension(format!(
            "feature length {} for maps over d={}",
            x_i.len(),
            p.feature_dim()
        )));
    }
    let theta: Vec<f64> = (0..p.d_k).map(|k| dot(p.w_theta.row(k), x_i) + p.b_theta.get(0, k)).collect();
    let phi: Vec<f64> = (0..p.d_k).map(|k| dot(p.w_phi.row(k), x_j) + p.b_phi.get(0, k)).collect();
    Ok(dot(&theta, &phi) * p.score_scale())
}

/// Normalized cross-correlation at zero lag of the mean-centered vectors
/// (Pearson correlation). Lies in `[−1, 1]`; 0 when either vector is
/// constant.
pub fn appearance_ncc(x_i: &[f64], x_j: &[f64]) -> Result<f64> {
    check_same_len(x_i, x_j)?;
    if x_i.len() < 2 {
        return Err(Error::Dimension("correlation needs at least two feature entries".into()));
    }
    let n = x_i.len() as f64;
    let mean_i = x_i.iter().sum::<f64>() / n;
    let mean_j = x_j.iter().sum::<f64>() / n;
    let a: Vec<f64> = x_i.iter().map(|v| v - mean_i).collect();
    let b: Vec<f64> = x_j.iter().map(|v| v - mean_j).collect();
    Ok(normalized_correlation(&a, &b))
}

/// Uncentered variant of [`appearance_ncc`] (cosine similarity).
pub fn appearance_cosine(x_i: &[f64], x_j: &[f64]) -> Result<f64> {
    check_same_len(x_i, x_j)?;
    if x_i.is_empty() {
        return Err(Error::Dimension("empty feature vectors".into()));
    }
    Ok(normalized_correlation(x_i, x_j))
}

fn normalized_correlation(a: &[f64], b: &[f64]) -> f64 {
    let energy_a = dot(a, a);
    let energy_b = dot(b, b);
    if energy_a == 0.0 || energy_b == 0.0 {
        return 0.0;
    }
    (dot(a, b) / (energy_a * energy_b).sqrt()).clamp(-1.0, 1.0)
}

/// Sum of absolute differences.
pub fn sad(x_i: &[f64], x_j: &[f64]) -> Result<f64> {
    check_same_len(x_i, x_j)?;
    Ok(x_i.iter().zip(x_j).map(|(a, b)| (a - b).abs()).sum())
}

/// SAD as a relation value: `−SAD / d`, so identical actors score highest.
pub fn appearance_sad(x_i: &[f64], x_j: &[f64]) -> Result<f64> {
    check_same_len(x_i, x_j)?;
    if x_i.is_empty() {
        return Err(Error::Dimension("empty feature vectors".into()));
    }
    Ok(-sad(x_i, x_j)? / x_i.len() as f64)
}

/// `M_ij = 1` iff the Euclidean distance between centers is at most `μ`.
pub fn position_mask(centers: &[(f64, f64)], mu: f64) -> Result<Matrix> {
    position_mask_framed(centers, None, mu)
}

/// [`position_mask`], optionally also requiring equal frame indices.
pub fn position_mask_framed(centers: &[(f64, f64)], frames: Option<&[usize]>, mu: f64) -> Result<Matrix> {
    if mu.is_nan() || mu <= 0.0 {
        return Err(Error::Config(format!("distance threshold {mu} must be positive")));
    }
    if let Some(f) = frames {
        if f.len() != centers.len() {
            return Err(Error::Dimension("frame indices and centers differ in length".into()));
        }
    }
    let n = centers.len();
    let mut m = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let (dx, dy) = (centers[i].0 - centers[j].0, centers[i].1 - centers[j].1);
            let near = i == j || dx.hypot(dy) <= mu;
            let same_frame = frames.is_none_or(|f| f[i] == f[j]);
            if near && same_frame {
                m.set(i, j, 1.0);
            }
        }
    }
    Ok(m)
}

/// Pairwise appearance scores for the rows of `features`.
pub fn appearance_scores(
    features: &Matrix,
    mode: RelationMode,
    p: &RelationParams,
    opts: &GraphOptions,
) -> Result<Matrix> {
    let n = features.rows();
    match mode {
        RelationMode::EmbeddedDotProduct => {
            let theta = features.matmul_t(&p.w_theta)?.add_row_broadcast(&p.b_theta)?;
            let phi = features.matmul_t(&p.w_phi)?.add_row_broadcast(&p.b_phi)?;
            Ok(theta.matmul_t(&phi)?.scale(p.score_scale()))
        }
        RelationMode::Ncc | RelationMode::Sad => {
            let kernel: fn(&[f64], &[f64]) -> Result<f64> = match (mode, opts.ncc_centered) {
                (RelationMode::Sad, _) => appearance_sad,
                (_, true) => appearance_ncc,
                (_, false) => appearance_cosine,
            };
            let mut s = Matrix::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    s.set(i, j, kernel(features.row(i), features.row(j))?);
                }
            }
            Ok(s)
        }
    }
}

/// Normalizes precomputed appearance scores under a position mask.
pub fn graph_from_scores(scores: &Matrix, mask: &Matrix, mode: RelationMode) -> Result<RelationGraph> {
    Ok(RelationGraph { g: masked_row_softmax(scores, mask)?, mode })
}

/// Position mask for a clip under the given threshold rule.
pub fn clip_mask(clip: &ClipSample, mu: MuRule, opts: &GraphOptions) -> Result<Matrix> {
    mu.validate()?;
    let frames = clip.frame_indices();
    position_mask_framed(
        &clip.centers(),
        opts.same_frame_only.then_some(frames.as_slice()),
        mu.resolve(clip.frame_width),
    )
}

/// Relation graph over a clip's raw actor features with default options.
pub fn build_relation_graph(clip: &ClipSample, mode: RelationMode, p: &RelationParams) -> Result<RelationGraph> {
    build_relation_graph_with(clip, mode, p, &GraphOptions::default())
}

pub fn build_relation_graph_with(
    clip: &ClipSample,
    mode: RelationMode,
    p: &RelationParams,
    opts: &GraphOptions,
) -> Result<RelationGraph> {
    if clip.actors.is_empty() {
        return Err(Error::Dimension(format!("clip {} has no actors", clip.clip_id)));
    }
    let features = clip.feature_matrix()?;
    let scores = appearance_scores(&features, mode, p, opts)?;
    graph_from_scores(&scores, &clip_mask(clip, p.mu, opts)?, mode)
}

/// One independent graph per `(mode, params)` entry.
pub fn build_multi_graph(
    clip: &ClipSample,
    branches: &[(RelationMode, RelationParams)],
    opts: &GraphOptions,
) -> Result<Vec<RelationGraph>> {
    if branches.is_empty() {
        return Err(Error::Config("at least one relation graph is required".into()));
    }
    branches.iter().map(|(mode, p)| build_relation_graph_with(clip, *mode, p, opts)).collect()
}
