//! Fully connected ReLU network with a linear head, batched forward and
//! reverse-mode backward passes.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use crate::optim::{Adam, AdamConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `inputs x outputs`
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

/// Gradients with the same shapes as the network parameters.
#[derive(Debug, Clone)]
pub struct MlpGrads {
    pub layers: Vec<Dense>,
}

impl Mlp {
    /// `sizes = [input, hidden.., output]`. Hidden layers use He-uniform
    /// weights; the output layer starts at zero.
    pub fn new(sizes: &[usize], rng: &mut impl Rng) -> Mlp {
        assert!(sizes.len() >= 2, "need at least input and output sizes");
        let last = sizes.len() - 2;
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, io)| {
                let (fan_in, fan_out) = (io[0], io[1]);
                let w = if i == last {
                    Array2::zeros((fan_in, fan_out))
                } else {
                    let bound = (6.0 / fan_in as f64).sqrt();
                    Array2::from_shape_simple_fn((fan_in, fan_out), || rng.random_range(-bound..bound))
                };
                Dense { w, b: Array1::zeros(fan_out) }
            })
            .collect();
        Mlp { layers }
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.layers[0].w.nrows()];
        s.extend(self.layers.iter().map(|l| l.w.ncols()));
        s
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// Parameters flattened layer by layer: weights row major, then biases.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend(l.w.iter());
            out.extend(l.b.iter());
        }
        out
    }

    pub fn from_flat(sizes: &[usize], params: &[f64]) -> Option<Mlp> {
        let mut layers = Vec::new();
        let mut at = 0;
        for io in sizes.windows(2) {
            let nw = io[0] * io[1];
            let w = Array2::from_shape_vec((io[0], io[1]), params.get(at..at + nw)?.to_vec()).ok()?;
            at += nw;
            let b = Array1::from(params.get(at..at + io[1])?.to_vec());
            at += io[1];
            layers.push(Dense { w, b });
        }
        (at == params.len() && !layers.is_empty()).then_some(Mlp { layers })
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut a = x.to_owned();
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            a = a.dot(&l.w) + &l.b;
            if i < last {
                a.mapv_inplace(|v| v.max(0.0));
            }
        }
        a
    }

    /// Forward pass, then backward from `loss_grad(output) -> (loss,
    /// d loss / d output)`.
    pub fn loss_and_grads(
        &self,
        x: ArrayView2<f64>,
        loss_grad: impl FnOnce(&Array2<f64>) -> (f64, Array2<f64>),
    ) -> (f64, MlpGrads) {
        let last = self.layers.len() - 1;
        // activations[i] is the input to layer i
        let mut activations: Vec<Array2<f64>> = Vec::with_capacity(self.layers.len());
        let mut a = x.to_owned();
        for (i, l) in self.layers.iter().enumerate() {
            let z = a.dot(&l.w) + &l.b;
            activations.push(a);
            a = if i < last { z.mapv_into(|v| v.max(0.0)) } else { z };
        }
        let (loss, mut delta) = loss_grad(&a);
        let mut grads: Vec<Dense> = Vec::with_capacity(self.layers.len());
        for i in (0..self.layers.len()).rev() {
            let input = &activations[i];
            let gw = input.t().dot(&delta).as_standard_layout().into_owned();
            let gb = delta.sum_axis(Axis(0));
            grads.push(Dense { w: gw, b: gb });
            if i > 0 {
                let mut d = delta.dot(&self.layers[i].w.t());
                // ReLU mask: the next layer's input is the activation of layer i-1
                ndarray::Zip::from(&mut d).and(input).for_each(|g, &act| {
                    if act <= 0.0 {
                        *g = 0.0;
                    }
                });
                delta = d;
            }
        }
        grads.reverse();
        (loss, MlpGrads { layers: grads })
    }
}

/// Per-tensor Adam state for an [`Mlp`].
#[derive(Debug, Clone)]
pub struct MlpAdam {
    states: Vec<(Adam, Adam)>,
}

impl MlpAdam {
    pub fn new(mlp: &Mlp, config: AdamConfig) -> MlpAdam {
        MlpAdam {
            states: mlp
                .layers
                .iter()
                .map(|l| (Adam::new(config, l.w.len()), Adam::new(config, l.b.len())))
                .collect(),
        }
    }

    pub fn step(&mut self, mlp: &mut Mlp, grads: &MlpGrads, lr: f64) {
        for ((layer, g), (aw, ab)) in mlp.layers.iter_mut().zip(&grads.layers).zip(&mut self.states) {
            aw.step_with_lr(
                layer.w.as_slice_mut().expect("standard layout"),
                g.w.as_slice().expect("standard layout"),
                lr,
            );
            ab.step_with_lr(
                layer.b.as_slice_mut().expect("standard layout"),
                g.b.as_slice().expect("standard layout"),
                lr,
            );
        }
    }
}
