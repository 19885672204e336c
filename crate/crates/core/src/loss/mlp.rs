use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_dim, Error, Result};
use crate::linalg::log_sum_exp;
use crate::par;

use super::{check_batch, Dataset, LossOracle};

const CHUNK: usize = 64;

/// Fully connected ReLU network with a softmax output, trained with mean
/// cross-entropy `L_n(ϑ) = (1/n) Σ_i -ln softmax(f_ϑ(x_i))_{y_i}`.
///
/// Parameters are flattened layer by layer as the row-major weight matrix
/// `(out × in)` followed by the bias vector.
#[derive(Debug, Clone)]
pub struct MicroMlp {
    layers: Vec<usize>,
    data: Arc<Dataset>,
    n_params: usize,
}

impl MicroMlp {
    pub const DEFAULT_LAYERS: [usize; 4] = [2, 16, 16, 2];

    pub fn new(layers: Vec<usize>, data: Arc<Dataset>) -> Result<Self> {
        if layers.len() < 2 {
            return Err(Error::invalid(
                "layers",
                "need at least input and output layer",
            ));
        }
        if layers[0] != 2 {
            return Err(Error::invalid("layers", "input layer must have width 2"));
        }
        if layers.contains(&0) || *layers.last().unwrap() < 2 {
            return Err(Error::invalid(
                "layers",
                "widths must be positive and output at least 2",
            ));
        }
        if data.labels.iter().any(|&l| l >= *layers.last().unwrap()) {
            return Err(Error::invalid(
                "dataset",
                "label exceeds number of output classes",
            ));
        }
        let n_params = layers.windows(2).map(|w| w[1] * (w[0] + 1)).sum();
        Ok(Self {
            layers,
            data,
            n_params,
        })
    }

    pub fn layers(&self) -> &[usize] {
        &self.layers
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    pub fn n_classes(&self) -> usize {
        *self.layers.last().unwrap()
    }

    /// He-normal weights, zero biases.
    pub fn init_params<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut theta = Vec::with_capacity(self.n_params);
        for w in self.layers.windows(2) {
            let std = (2.0 / w[0] as f64).sqrt();
            theta.extend((0..w[0] * w[1]).map(|_| std * rng.sample::<f64, _>(StandardNormal)));
            theta.extend(std::iter::repeat_n(0.0, w[1]));
        }
        theta
    }

    fn logits(&self, theta: &[f64], x: &[f64; 2], acts: &mut Vec<Vec<f64>>) {
        acts.clear();
        acts.push(x.to_vec());
        let mut offset = 0;
        let last = self.layers.len() - 2;
        for (l, w) in self.layers.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let weights = &theta[offset..offset + n_in * n_out];
            let bias = &theta[offset + n_in * n_out..offset + n_in * n_out + n_out];
            offset += n_out * (n_in + 1);
            let input = acts.last().unwrap();
            let mut z: Vec<f64> = (0..n_out)
                .map(|o| {
                    bias[o]
                        + weights[o * n_in..(o + 1) * n_in]
                            .iter()
                            .zip(input)
                            .map(|(a, b)| a * b)
                            .sum::<f64>()
                })
                .collect();
            if l < last {
                z.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            acts.push(z);
        }
    }

    /// Class probabilities for each input row.
    pub fn forward(&self, theta: &[f64], inputs: &[[f64; 2]]) -> Result<Vec<Vec<f64>>> {
        check_dim(self.n_params, theta.len())?;
        let rows = par::map_chunks(inputs, CHUNK, |chunk| {
            let mut acts = Vec::new();
            chunk
                .iter()
                .map(|x| {
                    self.logits(theta, x, &mut acts);
                    softmax(acts.last().unwrap())
                })
                .collect::<Vec<_>>()
        });
        Ok(rows.into_iter().flatten().collect())
    }

    /// Probability of `class` for each input.
    pub fn class_probability(
        &self,
        theta: &[f64],
        inputs: &[[f64; 2]],
        class: usize,
    ) -> Result<Vec<f64>> {
        Ok(self
            .forward(theta, inputs)?
            .into_iter()
            .map(|p| p[class])
            .collect())
    }

    pub fn accuracy(&self, theta: &[f64], data: &Dataset) -> Result<f64> {
        let probs = self.forward(theta, &data.inputs)?;
        Ok(accuracy_of(&probs, &data.labels))
    }

    /// Loss of one point; adds its gradient into `grad` when given.
    fn point(
        &self,
        theta: &[f64],
        i: usize,
        grad: Option<&mut [f64]>,
        acts: &mut Vec<Vec<f64>>,
    ) -> f64 {
        let x = &self.data.inputs[i];
        let y = self.data.labels[i];
        self.logits(theta, x, acts);
        let logits = acts.last().unwrap();
        let lse = log_sum_exp(logits);
        let loss = lse - logits[y];
        let Some(grad) = grad else {
            return loss;
        };

        let mut delta: Vec<f64> = logits.iter().map(|z| (z - lse).exp()).collect();
        delta[y] -= 1.0;
        let mut offset = self.n_params;
        for l in (1..self.layers.len()).rev() {
            let (n_in, n_out) = (self.layers[l - 1], self.layers[l]);
            offset -= n_out * (n_in + 1);
            let input = &acts[l - 1];
            let (gw, gb) = grad[offset..offset + n_out * (n_in + 1)].split_at_mut(n_in * n_out);
            for o in 0..n_out {
                gb[o] += delta[o];
                for (g, a) in gw[o * n_in..(o + 1) * n_in].iter_mut().zip(input) {
                    *g += delta[o] * a;
                }
            }
            if l > 1 {
                let weights = &theta[offset..offset + n_in * n_out];
                delta = (0..n_in)
                    .map(|j| {
                        if input[j] > 0.0 {
                            (0..n_out).map(|o| weights[o * n_in + j] * delta[o]).sum()
                        } else {
                            0.0
                        }
                    })
                    .collect();
            }
        }
        loss
    }

    fn sum_over(&self, theta: &[f64], idx: &[usize], with_grad: bool) -> (f64, Vec<f64>) {
        let parts = par::map_chunks(idx, CHUNK, |chunk| {
            let mut acts = Vec::new();
            let mut grad = if with_grad {
                vec![0.0; self.n_params]
            } else {
                Vec::new()
            };
            let mut loss = 0.0;
            for &i in chunk {
                let g = if with_grad {
                    Some(grad.as_mut_slice())
                } else {
                    None
                };
                loss += self.point(theta, i, g, &mut acts);
            }
            (loss, grad)
        });
        let mut loss = 0.0;
        let mut grad = if with_grad {
            vec![0.0; self.n_params]
        } else {
            Vec::new()
        };
        for (l, g) in parts {
            loss += l;
            grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
        }
        (loss, grad)
    }

    fn all_indices(&self) -> Vec<usize> {
        (0..self.data.len()).collect()
    }

    /// Mean loss (and gradient) over `idx`; a batch estimate is unbiased for
    /// the full-data mean.
    fn mean_over(&self, theta: &[f64], idx: &[usize], with_grad: bool) -> (f64, Vec<f64>) {
        let (loss, mut grad) = self.sum_over(theta, idx, with_grad);
        let inv = 1.0 / idx.len() as f64;
        grad.iter_mut().for_each(|g| *g *= inv);
        (loss * inv, grad)
    }
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(logits);
    logits.iter().map(|z| (z - lse).exp()).collect()
}

pub(crate) fn accuracy_of(probs: &[Vec<f64>], labels: &[usize]) -> f64 {
    let correct = probs
        .iter()
        .zip(labels)
        .filter(|(p, &y)| argmax(p) == y)
        .count();
    correct as f64 / labels.len().max(1) as f64
}

fn argmax(p: &[f64]) -> usize {
    p.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &v)| {
            if v > best.1 {
                (i, v)
            } else {
                best
            }
        })
        .0
}

impl LossOracle for MicroMlp {
    fn dim(&self) -> usize {
        self.n_params
    }

    fn n_points(&self) -> usize {
        self.data.len()
    }

    fn eval(&self, theta: &[f64]) -> Result<f64> {
        check_dim(self.n_params, theta.len())?;
        Ok(self.mean_over(theta, &self.all_indices(), false).0)
    }

    fn eval_grad(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        check_dim(self.n_params, theta.len())?;
        Ok(self.mean_over(theta, &self.all_indices(), true))
    }

    fn eval_batch(&self, theta: &[f64], batch: &[usize]) -> Result<f64> {
        check_dim(self.n_params, theta.len())?;
        check_batch(batch, self.data.len())?;
        Ok(self.mean_over(theta, batch, false).0)
    }

    fn eval_grad_batch(&self, theta: &[f64], batch: &[usize]) -> Result<(f64, Vec<f64>)> {
        check_dim(self.n_params, theta.len())?;
        check_batch(batch, self.data.len())?;
        Ok(self.mean_over(theta, batch, true))
    }
}
