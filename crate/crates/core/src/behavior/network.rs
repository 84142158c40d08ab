//! Feature MLP with mean and log-std heads, stored as one flat parameter
//! vector so the optimizer and the finite-difference audit can treat it
//! uniformly.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut2, Axis, Zip};
use serde::{Deserialize, Serialize};

/// `0.5 * ln(2 * pi)`
pub(crate) const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyArch {
    /// Widths of the ReLU feature layers.
    pub hidden: Vec<usize>,
    pub log_std_min: f64,
    pub log_std_max: f64,
}

impl Default for PolicyArch {
    fn default() -> Self {
        Self {
            hidden: vec![100, 100],
            log_std_min: -5.0,
            log_std_max: 2.0,
        }
    }
}

impl PolicyArch {
    /// Smooth saturating map from the raw head output into
    /// `(log_std_min, log_std_max)`.
    #[inline]
    pub fn squash_log_std(&self, raw: f64) -> f64 {
        self.log_std_min + 0.5 * (self.log_std_max - self.log_std_min) * (raw.tanh() + 1.0)
    }

    /// Inverse of [`squash_log_std`](Self::squash_log_std).
    pub fn unsquash_log_std(&self, log_std: f64) -> f64 {
        let t = 2.0 * (log_std - self.log_std_min) / (self.log_std_max - self.log_std_min) - 1.0;
        t.clamp(-1.0 + 1e-12, 1.0 - 1e-12).atanh()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Dense {
    pub fan_in: usize,
    pub fan_out: usize,
    /// Weight block offset; the block is `fan_in x fan_out`, row-major.
    pub w: usize,
    pub b: usize,
}

impl Dense {
    fn weights<'a>(&self, params: &'a [f64]) -> ArrayView2<'a, f64> {
        ArrayView2::from_shape((self.fan_in, self.fan_out), &params[self.w..self.b])
            .expect("layout is consistent")
    }

    fn bias<'a>(&self, params: &'a [f64]) -> ArrayView1<'a, f64> {
        ArrayView1::from(&params[self.b..self.b + self.fan_out])
    }

    fn end(&self) -> usize {
        self.b + self.fan_out
    }

    fn apply(&self, params: &[f64], input: &ArrayView2<f64>) -> Array2<f64> {
        let mut out = input.dot(&self.weights(params));
        out += &self.bias(params);
        out
    }

    /// Writes `dW = input^T * delta` and `db = sum_rows(delta)` into `grad`.
    fn accumulate(&self, grad: &mut [f64], input: &ArrayView2<f64>, delta: &Array2<f64>) {
        let (w_block, rest) = grad[self.w..self.end()].split_at_mut(self.b - self.w);
        let mut dw = ArrayViewMut2::from_shape((self.fan_in, self.fan_out), w_block)
            .expect("layout is consistent");
        general_mat_mul(1.0, &input.t(), delta, 0.0, &mut dw);
        for (db, col) in rest.iter_mut().zip(delta.axis_iter(Axis(1))) {
            *db = col.sum();
        }
    }
}

/// Parameter layout: feature layers, then the mean head, then the log-std
/// head.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Layout {
    pub features: Vec<Dense>,
    pub mean_head: Dense,
    pub log_std_head: Dense,
}

impl Layout {
    pub fn new(state_dim: usize, action_dim: usize, hidden: &[usize]) -> Self {
        let mut offset = 0;
        let mut dense = |fan_in: usize, fan_out: usize| {
            let layer = Dense {
                fan_in,
                fan_out,
                w: offset,
                b: offset + fan_in * fan_out,
            };
            offset = layer.end();
            layer
        };
        let mut fan_in = state_dim;
        let mut features = Vec::with_capacity(hidden.len());
        for &width in hidden {
            features.push(dense(fan_in, width));
            fan_in = width;
        }
        let mean_head = dense(fan_in, action_dim);
        let log_std_head = dense(fan_in, action_dim);
        Self {
            features,
            mean_head,
            log_std_head,
        }
    }

    pub fn n_params(&self) -> usize {
        self.log_std_head.end()
    }

    pub fn layers(&self) -> impl Iterator<Item = &Dense> {
        self.features
            .iter()
            .chain([&self.mean_head, &self.log_std_head])
    }
}

/// Intermediate values of a batched forward pass.
pub(crate) struct Forward {
    /// Post-ReLU activations of every feature layer.
    pub hidden: Vec<Array2<f64>>,
    pub mean: Array2<f64>,
    pub raw_log_std: Array2<f64>,
    pub log_std: Array2<f64>,
}

pub(crate) fn forward(
    layout: &Layout,
    arch: &PolicyArch,
    params: &[f64],
    inputs: ArrayView2<f64>,
) -> Forward {
    let mut hidden: Vec<Array2<f64>> = Vec::with_capacity(layout.features.len());
    for layer in &layout.features {
        let input = hidden.last().map(|h| h.view()).unwrap_or(inputs);
        let mut h = layer.apply(params, &input);
        h.mapv_inplace(|v| v.max(0.0));
        hidden.push(h);
    }
    let phi = hidden.last().map(|h| h.view()).unwrap_or(inputs);
    let mean = layout.mean_head.apply(params, &phi);
    let raw_log_std = layout.log_std_head.apply(params, &phi);
    let log_std = raw_log_std.mapv(|r| arch.squash_log_std(r));
    Forward {
        hidden,
        mean,
        raw_log_std,
        log_std,
    }
}

/// Per-row negative log-likelihood of the tanh-Gaussian.
///
/// `pre_tanh` holds `atanh(a)` and `log_jacobian` holds
/// `sum_k ln(1 - a_k^2)` for each row.
pub(crate) fn row_nll(
    fwd: &Forward,
    pre_tanh: &Array2<f64>,
    log_jacobian: &Array1<f64>,
) -> Array1<f64> {
    let mut out = log_jacobian.clone();
    Zip::from(&mut out)
        .and(fwd.mean.rows())
        .and(fwd.log_std.rows())
        .and(pre_tanh.rows())
        .for_each(|acc, mu, ls, u| {
            for k in 0..mu.len() {
                let z = (u[k] - mu[k]) * (-ls[k]).exp();
                *acc += HALF_LN_2PI + ls[k] + 0.5 * z * z;
            }
        });
    out
}

/// Mean NLL over the batch and its gradient with respect to every
/// parameter, written into `grad` (overwrite semantics).
pub(crate) fn loss_and_gradient(
    layout: &Layout,
    arch: &PolicyArch,
    params: &[f64],
    inputs: ArrayView2<f64>,
    pre_tanh: &Array2<f64>,
    log_jacobian: &Array1<f64>,
    grad: &mut [f64],
) -> f64 {
    let batch = inputs.nrows();
    let fwd = forward(layout, arch, params, inputs);
    let loss = row_nll(&fwd, pre_tanh, log_jacobian).sum() / batch as f64;

    let inv_b = 1.0 / batch as f64;
    let half_span = 0.5 * (arch.log_std_max - arch.log_std_min);
    let mut d_mean = Array2::<f64>::zeros(fwd.mean.raw_dim());
    let mut d_raw = Array2::<f64>::zeros(fwd.mean.raw_dim());
    Zip::from(&mut d_mean)
        .and(&mut d_raw)
        .and(&fwd.mean)
        .and(&fwd.log_std)
        .and(&fwd.raw_log_std)
        .and(pre_tanh)
        .for_each(|dm, dr, &mu, &ls, &raw, &u| {
            let inv_sigma = (-ls).exp();
            let z = (u - mu) * inv_sigma;
            *dm = -z * inv_sigma * inv_b;
            let t = raw.tanh();
            *dr = (1.0 - z * z) * half_span * (1.0 - t * t) * inv_b;
        });

    let phi = fwd.hidden.last().map(|h| h.view()).unwrap_or(inputs);
    layout.mean_head.accumulate(grad, &phi, &d_mean);
    layout.log_std_head.accumulate(grad, &phi, &d_raw);

    if layout.features.is_empty() {
        return loss;
    }
    let mut delta = d_mean.dot(&layout.mean_head.weights(params).t());
    general_mat_mul(
        1.0,
        &d_raw,
        &layout.log_std_head.weights(params).t(),
        1.0,
        &mut delta,
    );
    for (i, layer) in layout.features.iter().enumerate().rev() {
        // ReLU derivative: the post-activation is positive exactly where
        // the pre-activation was.
        Zip::from(&mut delta).and(&fwd.hidden[i]).for_each(|d, &h| {
            if h <= 0.0 {
                *d = 0.0;
            }
        });
        let input = if i == 0 {
            inputs
        } else {
            fwd.hidden[i - 1].view()
        };
        layer.accumulate(grad, &input, &delta);
        if i > 0 {
            delta = delta.dot(&layer.weights(params).t());
        }
    }
    loss
}

/// Sign pattern of every hidden pre-activation, used to detect ReLU kinks
/// between finite-difference probes.
pub(crate) fn activation_pattern(
    layout: &Layout,
    arch: &PolicyArch,
    params: &[f64],
    inputs: ArrayView2<f64>,
) -> Vec<bool> {
    forward(layout, arch, params, inputs)
        .hidden
        .iter()
        .flat_map(|h| h.iter().map(|&v| v > 0.0).collect::<Vec<_>>())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_counts_parameters() {
        let l = Layout::new(3, 2, &[100, 100]);
        assert_eq!(
            l.n_params(),
            (3 * 100 + 100) + (100 * 100 + 100) + 2 * (100 * 2 + 2)
        );
        let l = Layout::new(4, 1, &[]);
        assert_eq!(l.n_params(), 2 * (4 + 1));
        assert_eq!(l.layers().count(), 2);
    }

    #[test]
    fn squash_is_bounded_and_invertible() {
        let arch = PolicyArch::default();
        for raw in [-50.0, -3.0, -0.2, 0.0, 0.7, 4.0, 50.0] {
            let ls = arch.squash_log_std(raw);
            assert!((-5.0..=2.0).contains(&ls), "{raw} -> {ls}");
        }
        for ls in [-4.5, -1.0, 0.0, 1.5] {
            let back = arch.squash_log_std(arch.unsquash_log_std(ls));
            assert!((back - ls).abs() < 1e-12);
        }
    }
}
