//! Dense ReLU network with a flat parameter vector and exact gradients.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::PpoError;

/// Hidden widths of both actor and critic.
pub const HIDDEN: [usize; 6] = [64, 64, 32, 32, 16, 16];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
}

impl MlpSpec {
    pub fn new(input_dim: usize, hidden: Vec<usize>, output_dim: usize) -> Self {
        MlpSpec {
            input_dim,
            hidden,
            output_dim,
        }
    }

    /// The six-layer topology used for training.
    pub fn standard(input_dim: usize, output_dim: usize) -> Self {
        Self::new(input_dim, HIDDEN.to_vec(), output_dim)
    }

    /// (in, out) for every dense layer.
    pub fn layers(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden.len() + 2);
        dims.push(self.input_dim);
        dims.extend(&self.hidden);
        dims.push(self.output_dim);
        dims.windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn n_params(&self) -> usize {
        self.layers().iter().map(|(i, o)| i * o + o).sum()
    }

    pub fn validate(&self) -> Result<(), PpoError> {
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden.contains(&0) {
            return Err(PpoError::Config("network widths must be positive".into()));
        }
        Ok(())
    }
}

/// Layer inputs recorded by a forward pass, for backpropagation.
#[derive(Debug, Clone)]
pub struct Trace {
    inputs: Vec<Vec<f64>>,
    pub output: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    spec: MlpSpec,
    /// Per layer: weights (out × in, row-major) then biases.
    params: Vec<f64>,
}

impl Mlp {
    pub fn zeros(spec: MlpSpec) -> Self {
        let n = spec.n_params();
        Mlp {
            spec,
            params: vec![0.0; n],
        }
    }

    pub fn from_params(spec: MlpSpec, params: Vec<f64>) -> Result<Self, PpoError> {
        if params.len() != spec.n_params() {
            return Err(PpoError::ShapeMismatch {
                expected: spec.n_params(),
                got: params.len(),
            });
        }
        Ok(Mlp { spec, params })
    }

    /// Orthogonal weights scaled by `hidden_gain` (last layer: `output_gain`),
    /// zero biases.
    pub fn orthogonal<R: Rng + ?Sized>(spec: MlpSpec, hidden_gain: f64, output_gain: f64, rng: &mut R) -> Self {
        let mut params = Vec::with_capacity(spec.n_params());
        let layers = spec.layers();
        for (l, &(nin, nout)) in layers.iter().enumerate() {
            let gain = if l + 1 == layers.len() {
                output_gain
            } else {
                hidden_gain
            };
            let w = orthogonal_matrix(nout, nin, rng) * gain;
            for r in 0..nout {
                for c in 0..nin {
                    params.push(w[(r, c)]);
                }
            }
            params.extend(std::iter::repeat_n(0.0, nout));
        }
        Mlp { spec, params }
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn check_input(&self, x: &[f64]) -> Result<(), PpoError> {
        if x.len() != self.spec.input_dim {
            return Err(PpoError::ShapeMismatch {
                expected: self.spec.input_dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, PpoError> {
        Ok(self.trace(x)?.output)
    }

    pub fn trace(&self, x: &[f64]) -> Result<Trace, PpoError> {
        self.check_input(x)?;
        let layers = self.spec.layers();
        let mut inputs = Vec::with_capacity(layers.len());
        let mut a = x.to_vec();
        let mut off = 0;
        for (l, &(nin, nout)) in layers.iter().enumerate() {
            let (w, rest) = self.params[off..].split_at(nin * nout);
            let b = &rest[..nout];
            let mut z: Vec<f64> = b.to_vec();
            for (r, zr) in z.iter_mut().enumerate() {
                let row = &w[r * nin..(r + 1) * nin];
                *zr += row.iter().zip(&a).map(|(wi, ai)| wi * ai).sum::<f64>();
            }
            if l + 1 < layers.len() {
                for v in &mut z {
                    *v = v.max(0.0);
                }
            }
            inputs.push(std::mem::replace(&mut a, z));
            off += nin * nout + nout;
        }
        Ok(Trace { inputs, output: a })
    }

    /// Accumulate dL/dθ into `grad` given dL/d(output).
    pub fn backward(&self, trace: &Trace, d_out: &[f64], grad: &mut [f64]) {
        let layers = self.spec.layers();
        let mut offsets = Vec::with_capacity(layers.len());
        let mut off = 0;
        for &(nin, nout) in &layers {
            offsets.push(off);
            off += nin * nout + nout;
        }
        let mut delta = d_out.to_vec();
        for l in (0..layers.len()).rev() {
            let (nin, nout) = layers[l];
            let o = offsets[l];
            let a = &trace.inputs[l];
            for r in 0..nout {
                let d = delta[r];
                if d == 0.0 {
                    continue;
                }
                let g = &mut grad[o + r * nin..o + (r + 1) * nin];
                for (gi, ai) in g.iter_mut().zip(a) {
                    *gi += d * ai;
                }
                grad[o + nin * nout + r] += d;
            }
            if l == 0 {
                break;
            }
            let w = &self.params[o..o + nin * nout];
            let mut prev = vec![0.0; nin];
            for (r, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                for (p, wi) in prev.iter_mut().zip(&w[r * nin..(r + 1) * nin]) {
                    *p += d * wi;
                }
            }
            // ReLU: the layer input is the previous layer's activation.
            for (p, ai) in prev.iter_mut().zip(a) {
                if *ai <= 0.0 {
                    *p = 0.0;
                }
            }
            delta = prev;
        }
    }
}

/// Matrix with orthonormal rows or columns, whichever is fewer.
fn orthogonal_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    let (m, n) = if rows >= cols { (rows, cols) } else { (cols, rows) };
    let g = DMatrix::from_fn(m, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    if rows >= cols {
        q
    } else {
        q.transpose()
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-5,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    /// Descend along `grad`.
    pub fn step(&mut self, params: &mut [&mut [f64]], grad: &[f64]) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let mut k = 0;
        for block in params.iter_mut() {
            for p in block.iter_mut() {
                let g = grad[k];
                self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g;
                self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g;
                let mh = self.m[k] / bc1;
                let vh = self.v[k] / bc2;
                *p -= self.lr * mh / (vh.sqrt() + self.eps);
                k += 1;
            }
        }
    }
}
