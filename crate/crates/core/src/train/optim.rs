use crate::config::OptimizerKind;
use crate::error::{Error, Result};
use crate::numeric::Matrix;

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

/// Gradient-descent state over a fixed list of tensors.
#[derive(Clone, Debug)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    step: u32,
    first: Vec<Matrix>,
    second: Vec<Matrix>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64) -> Self {
        Self { kind, lr, step: 0, first: Vec::new(), second: Vec::new() }
    }

    pub fn steps_taken(&self) -> u32 {
        self.step
    }

    /// Updates every tensor whose `trainable` flag is set; the rest are left
    /// untouched.
    pub fn step(&mut self, params: &mut [&mut Matrix], grads: &[Matrix], trainable: &[bool]) -> Result<()> {
        if params.len() != grads.len() || params.len() != trainable.len() {
            return Err(Error::Dimension(format!(
                "{} tensors, {} gradients, {} flags",
                params.len(),
                grads.len(),
                trainable.len()
            )));
        }
        for (p, g) in params.iter().zip(grads) {
            if p.shape() != g.shape() {
                return Err(Error::Dimension(format!("gradient {:?} for tensor {:?}", g.shape(), p.shape())));
            }
        }
        self.step += 1;
        match self.kind {
            OptimizerKind::Sgd => {
                for ((p, g), &on) in params.iter_mut().zip(grads).zip(trainable) {
                    if on {
                        for (w, d) in p.data_mut().iter_mut().zip(g.data()) {
                            *w -= self.lr * d;
                        }
                    }
                }
            }
            OptimizerKind::Adam => {
                if self.first.is_empty() {
                    self.first = grads.iter().map(|g| Matrix::zeros(g.rows(), g.cols())).collect();
                    self.second = self.first.clone();
                }
                let t = self.step as i32;
                let c1 = 1.0 - BETA1.powi(t);
                let c2 = 1.0 - BETA2.powi(t);
                for (i, ((p, g), &on)) in params.iter_mut().zip(grads).zip(trainable).enumerate() {
                    if !on {
                        continue;
                    }
                    let m = self.first[i].data_mut();
                    let v = self.second[i].data_mut();
                    for (k, (w, &d)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                        m[k] = BETA1 * m[k] + (1.0 - BETA1) * d;
                        v[k] = BETA2 * v[k] + (1.0 - BETA2) * d * d;
                        let m_hat = m[k] / c1;
                        let v_hat = v[k] / c2;
                        *w -= self.lr * m_hat / (v_hat.sqrt() + EPS);
                    }
                }
            }
        }
        Ok(())
    }
}
