//! Feed-forward regression probe: affine → ReLU → … → affine, scalar output,
//! with a hand-written backward pass and Adam.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::index::sample;
use rand::Rng;

use super::ProbeConfig;
use crate::error::{Error, Result};
use crate::seed::stream_rng;

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `in × out`
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Dense {
    fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Dense {
            w: Array2::zeros((fan_in, fan_out)),
            b: Array1::zeros(fan_out),
        }
    }

    fn len(&self) -> usize {
        self.w.len() + self.b.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Dense>,
    pub v: Vec<Dense>,
    pub step: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeModel {
    pub layers: Vec<Dense>,
    pub optimizer: AdamState,
}

/// Per-layer gradients, same shapes as the model.
pub type Gradients = Vec<Dense>;

struct Cache {
    /// Input to each layer (the batch, then post-ReLU activations).
    inputs: Vec<Array2<f64>>,
    /// Pre-activations of the hidden layers.
    pre: Vec<Array2<f64>>,
}

pub fn init_probe(dim: usize, config: &ProbeConfig) -> Result<ProbeModel> {
    if dim == 0 {
        return Err(Error::validation("probe input dimension must be positive"));
    }
    config.validate()?;
    let mut sizes = vec![dim];
    sizes.extend(&config.hidden_sizes);
    sizes.push(1);
    let mut rng = stream_rng(config.seed, "probe-init", 0);
    let layers: Vec<Dense> = sizes
        .windows(2)
        .map(|io| {
            let bound = 1.0 / (io[0] as f64).sqrt();
            let mut d = Dense::zeros(io[0], io[1]);
            d.w.mapv_inplace(|_| rng.gen_range(-bound..bound));
            d
        })
        .collect();
    let zeros = || layers.iter().map(|l| Dense::zeros(l.w.nrows(), l.w.ncols())).collect();
    Ok(ProbeModel {
        optimizer: AdamState {
            m: zeros(),
            v: zeros(),
            step: 0,
        },
        layers,
    })
}

impl ProbeModel {
    pub fn input_dim(&self) -> usize {
        self.layers[0].w.nrows()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(Dense::len).sum()
    }

    fn check_input(&self, x: &ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(Error::Shape {
                expected: self.input_dim(),
                actual: x.ncols(),
            });
        }
        Ok(())
    }

    fn forward_cached(&self, x: ArrayView2<f64>) -> (Array1<f64>, Cache) {
        let last = self.layers.len() - 1;
        let mut cache = Cache {
            inputs: Vec::with_capacity(self.layers.len()),
            pre: Vec::with_capacity(last),
        };
        let mut h = x.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = h.dot(&layer.w) + &layer.b;
            cache.inputs.push(h);
            if i == last {
                return (z.index_axis_move(Axis(1), 0), cache);
            }
            h = z.mapv(|v| v.max(0.0));
            cache.pre.push(z);
        }
        unreachable!("a probe has at least one layer")
    }

    /// One scalar per input row, in row order.
    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        self.check_input(&x)?;
        Ok(self.forward_cached(x).0)
    }

    /// Mean squared error over the batch.
    pub fn loss(&self, x: ArrayView2<f64>, targets: &[f64]) -> Result<f64> {
        let y = self.forward(x)?;
        if y.len() != targets.len() {
            return Err(Error::Shape {
                expected: y.len(),
                actual: targets.len(),
            });
        }
        Ok(y.iter().zip(targets).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / y.len() as f64)
    }

    /// Loss and analytic gradient of the batch MSE.
    pub fn gradients(&self, x: ArrayView2<f64>, targets: &[f64]) -> Result<(f64, Gradients)> {
        self.check_input(&x)?;
        if x.nrows() != targets.len() || targets.is_empty() {
            return Err(Error::Shape {
                expected: x.nrows(),
                actual: targets.len(),
            });
        }
        let (y, cache) = self.forward_cached(x);
        let n = targets.len() as f64;
        let resid: Array1<f64> = y.iter().zip(targets).map(|(p, t)| p - t).collect();
        let loss = resid.dot(&resid) / n;
        // dL/dz for the current layer, rows = batch
        let mut delta = (resid * (2.0 / n)).insert_axis(Axis(1));
        let mut grads: Vec<Dense> = Vec::with_capacity(self.layers.len());
        for i in (0..self.layers.len()).rev() {
            grads.push(Dense {
                w: cache.inputs[i].t().dot(&delta),
                b: delta.sum_axis(Axis(0)),
            });
            if i > 0 {
                let mut back = delta.dot(&self.layers[i].w.t());
                back.zip_mut_with(&cache.pre[i - 1], |d, &z| {
                    if z <= 0.0 {
                        *d = 0.0;
                    }
                });
                delta = back;
            }
        }
        grads.reverse();
        Ok((loss, grads))
    }

    pub fn adam_step(&mut self, grads: &Gradients, lr: f64) {
        let st = &mut self.optimizer;
        st.step += 1;
        let t = st.step as i32;
        let c1 = 1.0 - BETA1.powi(t);
        let c2 = 1.0 - BETA2.powi(t);
        for (((layer, g), m), v) in self.layers.iter_mut().zip(grads).zip(&mut st.m).zip(&mut st.v) {
            let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
                *m = BETA1 * *m + (1.0 - BETA1) * g;
                *v = BETA2 * *v + (1.0 - BETA2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
            };
            ndarray::Zip::from(&mut layer.w)
                .and(&g.w)
                .and(&mut m.w)
                .and(&mut v.w)
                .for_each(|p, &g, m, v| update(p, g, m, v));
            ndarray::Zip::from(&mut layer.b)
                .and(&g.b)
                .and(&mut m.b)
                .and(&mut v.b)
                .for_each(|p, &g, m, v| update(p, g, m, v));
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.w.iter().chain(l.b.iter()).all(|v| v.is_finite()))
    }

    /// Flat parameter addressing: layer by layer, weights (row-major) then biases.
    fn locate(&self, mut idx: usize) -> (usize, Option<(usize, usize)>, usize) {
        for (li, l) in self.layers.iter().enumerate() {
            if idx < l.w.len() {
                let c = l.w.ncols();
                return (li, Some((idx / c, idx % c)), 0);
            }
            idx -= l.w.len();
            if idx < l.b.len() {
                return (li, None, idx);
            }
            idx -= l.b.len();
        }
        panic!("parameter index out of range");
    }

    fn param_mut(&mut self, idx: usize) -> &mut f64 {
        match self.locate(idx) {
            (li, Some(rc), _) => &mut self.layers[li].w[rc],
            (li, None, j) => &mut self.layers[li].b[j],
        }
    }
}

fn grad_at(grads: &Gradients, model: &ProbeModel, idx: usize) -> f64 {
    match model.locate(idx) {
        (li, Some(rc), _) => grads[li].w[rc],
        (li, None, j) => grads[li].b[j],
    }
}

pub const GRADCHECK_STEP: f64 = 1e-5;
pub const GRADCHECK_MIN_PARAMS: usize = 200;

/// Central-difference check of `analytic` on the batch MSE. Every
/// output-layer parameter is checked, plus a seeded random subset of the rest,
/// at least `GRADCHECK_MIN_PARAMS` in total. Returns the largest
/// `|g_a − g_n| / max(|g_a|, |g_n|, 1e-8)`.
pub fn gradient_check_with<F>(
    model: &ProbeModel,
    x: ArrayView2<f64>,
    targets: &[f64],
    seed: u64,
    analytic: F,
) -> Result<f64>
where
    F: Fn(&ProbeModel, ArrayView2<f64>, &[f64]) -> Result<Gradients>,
{
    let grads = analytic(model, x, targets)?;
    let total = model.parameter_count();
    let out_len = model.layers.last().map(Dense::len).unwrap_or(0);
    let inner = total - out_len;
    let want = GRADCHECK_MIN_PARAMS.saturating_sub(out_len).max(GRADCHECK_MIN_PARAMS / 2).min(inner);
    let mut rng = stream_rng(seed, "gradcheck", 0);
    let mut idxs: Vec<usize> = sample(&mut rng, inner, want).into_vec();
    idxs.extend(inner..total);

    let mut probe = model.clone();
    let mut worst = 0.0f64;
    for idx in idxs {
        let orig = *probe.param_mut(idx);
        *probe.param_mut(idx) = orig + GRADCHECK_STEP;
        let up = probe.loss(x, targets)?;
        *probe.param_mut(idx) = orig - GRADCHECK_STEP;
        let down = probe.loss(x, targets)?;
        *probe.param_mut(idx) = orig;
        let g_n = (up - down) / (2.0 * GRADCHECK_STEP);
        let g_a = grad_at(&grads, model, idx);
        let rel = (g_a - g_n).abs() / g_a.abs().max(g_n.abs()).max(1e-8);
        worst = worst.max(rel);
    }
    Ok(worst)
}

pub fn gradient_check(model: &ProbeModel, x: ArrayView2<f64>, targets: &[f64], seed: u64) -> Result<f64> {
    gradient_check_with(model, x, targets, seed, |m, x, t| m.gradients(x, t).map(|(_, g)| g))
}
