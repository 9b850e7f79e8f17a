//! Graph convolution over actor features and the two classification heads.
//!
//! For a clip with actor features `x` (N×d_in):
//!
//! ```text
//! X   = x Eᵀ + e                          (embedder)
//! Z_g = ReLU(G_g · X · W_g)               (per graph, repeated per layer)
//! X_f = X + Σ_g Z_g                       (fusion)
//! actions  = X_f Aᵀ + a                   (N×A)
//! activity = maxpool_rows(X_f) Cᵀ + c     (1×C)
//! ```
//!
//! Before stage 2 a model is not relational and `X_f = X`.

use rand::Rng;

use crate::config::TrainConfig;
use crate::data::ClipSample;
use crate::error::{Error, Result};
use crate::numeric::{argmax, masked_row_softmax, softmax, GradTape, Matrix, Var};
use crate::relation::{appearance_scores, clip_mask, GraphOptions, RelationGraph, RelationMode, RelationParams};

/// Affine map `x ↦ x Wᵀ + b`, weight stored out×in and bias as 1×out.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub weight: Matrix,
    pub bias: Matrix,
}

impl Linear {
    /// Uniform in `±1/√in` for weight and bias.
    pub fn random<R: Rng + ?Sized>(input: usize, output: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (input as f64).sqrt();
        Self {
            weight: uniform_matrix(output, input, bound, rng),
            bias: uniform_matrix(1, output, bound, rng),
        }
    }

    pub fn zeros(input: usize, output: usize) -> Self {
        Self { weight: Matrix::zeros(output, input), bias: Matrix::zeros(1, output) }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn apply(&self, x: &Matrix) -> Result<Matrix> {
        x.matmul_t(&self.weight)?.add_row_broadcast(&self.bias)
    }
}

pub(crate) fn uniform_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, bound: f64, rng: &mut R) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.gen_range(-bound..=bound)).collect();
    Matrix::from_raw(rows, cols, data)
}

/// One relation graph together with the graph convolution weights applied
/// over it.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphBranch {
    pub mode: RelationMode,
    pub relation: RelationParams,
    /// One d×d weight per layer.
    pub gcn: Vec<Matrix>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelDims {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub num_actions: usize,
    pub num_activities: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub embedder: Linear,
    pub branches: Vec<GraphBranch>,
    pub action_head: Linear,
    pub activity_head: Linear,
    /// Whether graph branches take part in the forward pass.
    pub relational: bool,
}

impl ModelParams {
    /// Fresh parameters, uniform in `±1/√fan_in`.
    pub fn init<R: Rng + ?Sized>(dims: ModelDims, cfg: &TrainConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        if dims.input_dim == 0 || dims.hidden_dim == 0 || dims.num_actions == 0 || dims.num_activities == 0 {
            return Err(Error::Config(format!("degenerate model dimensions {dims:?}")));
        }
        let h = dims.hidden_dim;
        let embedder = Linear::random(dims.input_dim, h, rng);
        let mut branches = Vec::with_capacity(cfg.num_graphs());
        for &mode in &cfg.relation_modes {
            let relation = RelationParams::random(h, cfg.d_k, cfg.mu, rng)?;
            let bound = 1.0 / (h as f64).sqrt();
            let gcn = (0..cfg.gcn_layers).map(|_| uniform_matrix(h, h, bound, rng)).collect();
            branches.push(GraphBranch { mode, relation, gcn });
        }
        Ok(Self {
            embedder,
            branches,
            action_head: Linear::random(h, dims.num_actions, rng),
            activity_head: Linear::random(h, dims.num_activities, rng),
            relational: false,
        })
    }

    pub fn dims(&self) -> ModelDims {
        ModelDims {
            input_dim: self.embedder.input_dim(),
            hidden_dim: self.embedder.output_dim(),
            num_actions: self.action_head.output_dim(),
            num_activities: self.activity_head.output_dim(),
        }
    }

    /// Every weight tensor with a stable name, in a fixed order.
    pub fn tensors(&self) -> Vec<(String, &Matrix)> {
        let mut out = vec![
            ("embedder.weight".to_owned(), &self.embedder.weight),
            ("embedder.bias".to_owned(), &self.embedder.bias),
        ];
        for (g, b) in self.branches.iter().enumerate() {
            out.push((format!("graph{g}.theta.weight"), &b.relation.w_theta));
            out.push((format!("graph{g}.theta.bias"), &b.relation.b_theta));
            out.push((format!("graph{g}.phi.weight"), &b.relation.w_phi));
            out.push((format!("graph{g}.phi.bias"), &b.relation.b_phi));
            for (l, w) in b.gcn.iter().enumerate() {
                out.push((format!("graph{g}.gcn{l}"), w));
            }
        }
        out.push(("action_head.weight".to_owned(), &self.action_head.weight));
        out.push(("action_head.bias".to_owned(), &self.action_head.bias));
        out.push(("activity_head.weight".to_owned(), &self.activity_head.weight));
        out.push(("activity_head.bias".to_owned(), &self.activity_head.bias));
        out
    }

    /// Mutable counterpart of [`Self::tensors`], same order.
    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = vec![&mut self.embedder.weight, &mut self.embedder.bias];
        for b in &mut self.branches {
            out.push(&mut b.relation.w_theta);
            out.push(&mut b.relation.b_theta);
            out.push(&mut b.relation.w_phi);
            out.push(&mut b.relation.b_phi);
            out.extend(b.gcn.iter_mut());
        }
        out.push(&mut self.action_head.weight);
        out.push(&mut self.action_head.bias);
        out.push(&mut self.activity_head.weight);
        out.push(&mut self.activity_head.bias);
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|(_, m)| m.data().len()).sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.tensors().iter().flat_map(|(_, m)| m.data().iter().copied()).collect()
    }

    /// Copy of `self` with every weight replaced from a flat vector laid out
    /// as in [`Self::flatten`].
    pub fn with_flat(&self, values: &[f64]) -> Result<Self> {
        if values.len() != self.num_parameters() {
            return Err(Error::Dimension(format!(
                "{} values for {} parameters",
                values.len(),
                self.num_parameters()
            )));
        }
        let mut out = self.clone();
        let mut offset = 0;
        for m in out.tensors_mut() {
            let n = m.data().len();
            m.data_mut().copy_from_slice(&values[offset..offset + n]);
            offset += n;
        }
        Ok(out)
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, m)| m.is_finite())
    }

    pub fn check_clip(&self, clip: &ClipSample) -> Result<()> {
        let expected = self.embedder.input_dim();
        if let Some(a) = clip.actors.iter().find(|a| a.feature.len() != expected) {
            return Err(Error::FeatureDim { expected, actual: a.feature.len() });
        }
        Ok(())
    }
}

/// `ReLU(G · X · W)`.
pub fn gcn_layer(g: &RelationGraph, x: &Matrix, w: &Matrix) -> Result<Matrix> {
    if g.g.cols() != x.rows() || x.cols() != w.rows() || w.rows() != w.cols() {
        return Err(Error::Dimension(format!(
            "gcn layer: G {:?}, X {:?}, W {:?}",
            g.g.shape(),
            x.shape(),
            w.shape()
        )));
    }
    Ok(g.g.matmul(x)?.matmul(w)?.relu())
}

/// `X + Σ Z`.
pub fn fuse_features(x: &Matrix, z_list: &[Matrix]) -> Result<Matrix> {
    let mut out = x.clone();
    for z in z_list {
        out.add_assign(z)?;
    }
    Ok(out)
}

/// Activity logits from the columnwise maximum over actors.
pub fn activity_logits(fused: &Matrix, head: &Linear) -> Result<Vec<f64>> {
    if fused.rows() == 0 {
        return Err(Error::Dimension("activity pooling over zero actors".into()));
    }
    let (pooled, _) = fused.column_max()?;
    Ok(head.apply(&pooled)?.into_data())
}

/// Per-actor action logits, N×A.
pub fn action_logits(fused: &Matrix, head: &Linear) -> Result<Matrix> {
    head.apply(fused)
}

/// A recorded forward pass.
pub struct Forward {
    pub tape: GradTape,
    /// Tape leaves for the model weights, aligned with [`ModelParams::tensors`].
    pub param_vars: Vec<Var>,
    pub features: Var,
    pub fused: Var,
    pub action_logits: Var,
    pub activity_logits: Var,
    /// Relation graph of each branch (empty when not relational).
    pub graphs: Vec<Var>,
    /// Smallest distance of any ReLU input from 0 and of any pooled maximum
    /// from the runner-up in its column. Finite differences are only
    /// meaningful when this exceeds the probe step.
    pub kink_margin: f64,
}

impl Forward {
    pub fn action_logits(&self) -> &Matrix {
        self.tape.value(self.action_logits)
    }

    pub fn activity_logits(&self) -> &[f64] {
        self.tape.value(self.activity_logits).data()
    }

    pub fn graph(&self, branch: usize) -> Option<&Matrix> {
        self.graphs.get(branch).map(|&v| self.tape.value(v))
    }
}

/// Runs the model on a clip, recording every step for backpropagation.
pub fn forward(m: &ModelParams, clip: &ClipSample, opts: &GraphOptions) -> Result<Forward> {
    forward_impl(m, clip, opts, None)
}

/// [`forward`] with each branch's relation graph replaced by a given matrix.
pub fn forward_with_graphs(m: &ModelParams, clip: &ClipSample, opts: &GraphOptions, graphs: &[Matrix]) -> Result<Forward> {
    if graphs.len() != m.branches.len() {
        return Err(Error::Dimension(format!("{} graphs for {} branches", graphs.len(), m.branches.len())));
    }
    forward_impl(m, clip, opts, Some(graphs))
}

fn forward_impl(m: &ModelParams, clip: &ClipSample, opts: &GraphOptions, graph_override: Option<&[Matrix]>) -> Result<Forward> {
    if clip.actors.is_empty() {
        return Err(Error::Dimension(format!("clip {} has no actors", clip.clip_id)));
    }
    m.check_clip(clip)?;
    let mut tape = GradTape::new();
    let param_vars: Vec<Var> = m.tensors().into_iter().map(|(_, t)| tape.leaf(t.clone())).collect();
    let (emb_w, emb_b) = (param_vars[0], param_vars[1]);
    let n = param_vars.len();
    let (act_w, act_b, grp_w, grp_b) = (param_vars[n - 4], param_vars[n - 3], param_vars[n - 2], param_vars[n - 1]);

    let raw = tape.leaf(clip.feature_matrix()?);
    let features = tape.linear(raw, emb_w, emb_b)?;
    let mut fused = features;
    let mut graphs = Vec::new();
    let mut kink_margin = f64::INFINITY;

    if m.relational {
        let mut slot = 2;
        for (b_idx, branch) in m.branches.iter().enumerate() {
            let rel = &param_vars[slot..slot + 4];
            slot += 4;
            let g = match graph_override {
                Some(gs) => tape.leaf(gs[b_idx].clone()),
                None => {
                    let mask = clip_mask(clip, branch.relation.mu, opts)?;
                    if branch.mode.is_learned() {
                        let theta = tape.linear(features, rel[0], rel[1])?;
                        let phi = tape.linear(features, rel[2], rel[3])?;
                        let scores = tape.matmul_t(theta, phi)?;
                        let scores = tape.scale(scores, branch.relation.score_scale())?;
                        tape.masked_softmax(scores, mask)?
                    } else {
                        // fixed kernels: no gradient path through the graph
                        let scores = appearance_scores(tape.value(features), branch.mode, &branch.relation, opts)?;
                        tape.leaf(masked_row_softmax(&scores, &mask)?)
                    }
                }
            };
            graphs.push(g);
            let mut z = features;
            for _ in &branch.gcn {
                let w = param_vars[slot];
                slot += 1;
                let gz = tape.matmul(g, z)?;
                let pre = tape.matmul(gz, w)?;
                kink_margin = tape.value(pre).data().iter().fold(kink_margin, |acc, v| acc.min(v.abs()));
                z = tape.relu(pre)?;
            }
            fused = tape.add(fused, z)?;
        }
    }

    let fused_value = tape.value(fused);
    if fused_value.rows() > 1 {
        for c in 0..fused_value.cols() {
            let mut col: Vec<f64> = (0..fused_value.rows()).map(|r| fused_value.get(r, c)).collect();
            col.sort_by(|a, b| b.total_cmp(a));
            kink_margin = kink_margin.min(col[0] - col[1]);
        }
    }

    let action_logits = tape.linear(fused, act_w, act_b)?;
    let pooled = tape.column_max(fused)?;
    let activity_logits = tape.linear(pooled, grp_w, grp_b)?;

    Ok(Forward {
        tape,
        param_vars,
        features,
        fused,
        action_logits,
        activity_logits,
        graphs,
        kink_margin,
    })
}

/// Appends `CE(activity) + λ · mean CE(actions over labeled actors)` to the
/// tape. Terms without labels are left out.
pub fn append_loss(
    f: &mut Forward,
    action_labels: &[Option<usize>],
    activity_label: Option<usize>,
    lambda: f64,
) -> Result<Var> {
    let activity_term = match activity_label {
        Some(y) => Some(f.tape.cross_entropy(f.activity_logits, vec![Some(y)])?),
        None => None,
    };
    let has_action_labels = action_labels.iter().any(Option::is_some);
    let action_term = if has_action_labels && lambda > 0.0 {
        let ce = f.tape.cross_entropy(f.action_logits, action_labels.to_vec())?;
        Some(f.tape.scale(ce, lambda)?)
    } else {
        None
    };
    match (activity_term, action_term) {
        (Some(a), Some(b)) => f.tape.add(a, b),
        (Some(a), None) | (None, Some(a)) => Ok(a),
        (None, None) => Err(Error::NoTrainingSignal("clip has no activity label and no weighted action labels".into())),
    }
}

/// Loss from precomputed logits: N×A action logits and a length-C activity
/// logit vector.
pub fn loss(
    action_logits: &Matrix,
    action_labels: &[Option<usize>],
    activity_logits: &[f64],
    activity_label: Option<usize>,
    lambda: f64,
) -> Result<f64> {
    let mut tape = GradTape::new();
    let action = tape.leaf(action_logits.clone());
    let activity = tape.leaf(Matrix::row_vector(activity_logits)?);
    let mut terms = Vec::new();
    if let Some(y) = activity_label {
        terms.push(tape.cross_entropy(activity, vec![Some(y)])?);
    }
    if lambda > 0.0 && action_labels.iter().any(Option::is_some) {
        let ce = tape.cross_entropy(action, action_labels.to_vec())?;
        terms.push(tape.scale(ce, lambda)?);
    }
    match terms.as_slice() {
        [] => Err(Error::NoTrainingSignal("no labels".into())),
        [a] => Ok(tape.value(*a).get(0, 0)),
        [a, b] => {
            let s = tape.add(*a, *b)?;
            Ok(tape.value(s).get(0, 0))
        }
        _ => unreachable!(),
    }
}

/// Loss on one clip and its gradient for every weight tensor, aligned with
/// [`ModelParams::tensors`].
pub fn clip_loss_and_grad(m: &ModelParams, clip: &ClipSample, opts: &GraphOptions, lambda: f64) -> Result<(f64, Vec<Matrix>)> {
    let mut f = forward(m, clip, opts)?;
    let loss = append_loss(&mut f, &clip.action_labels(), clip.activity_label, lambda)?;
    let grads = f.tape.backward(loss)?;
    let value = f.tape.value(loss).get(0, 0);
    let per_tensor = m
        .tensors()
        .iter()
        .zip(&f.param_vars)
        .map(|((_, t), &v)| grads.get_or_zeros(v, t.rows(), t.cols()))
        .collect();
    Ok((value, per_tensor))
}

/// Loss on one clip without recording gradients.
pub fn clip_loss(m: &ModelParams, clip: &ClipSample, opts: &GraphOptions, lambda: f64) -> Result<f64> {
    let mut f = forward(m, clip, opts)?;
    let loss = append_loss(&mut f, &clip.action_labels(), clip.activity_label, lambda)?;
    Ok(f.tape.value(loss).get(0, 0))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub action_classes: Vec<usize>,
    pub action_probs: Vec<Vec<f64>>,
    pub activity_class: usize,
    pub activity_probs: Vec<f64>,
}

impl Prediction {
    pub fn from_logits(action_logits: &Matrix, activity_logits: &[f64]) -> Self {
        let action_probs: Vec<Vec<f64>> = (0..action_logits.rows()).map(|r| softmax(action_logits.row(r))).collect();
        let activity_probs = softmax(activity_logits);
        Self {
            action_classes: action_probs.iter().map(|p| argmax(p)).collect(),
            action_probs,
            activity_class: argmax(&activity_probs),
            activity_probs,
        }
    }
}

pub fn predict(clip: &ClipSample, m: &ModelParams, cfg: &TrainConfig) -> Result<Prediction> {
    let f = forward(m, clip, &cfg.graph_options())?;
    Ok(Prediction::from_logits(f.action_logits(), f.activity_logits()))
}
