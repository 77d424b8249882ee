//! Dense feed-forward network: affine + GELU on every hidden layer, affine on
//! the output layer.
//!
//! Two entry points exist. [`MlpParams::forward`] / [`MlpParams::backward`]
//! work on a single vector and validate shapes. The batched
//! [`MlpParams::forward_batch`] / [`MlpParams::backward_batch`] pair keeps a
//! [`MlpTape`] of intermediates and is what the training loops use; a batch
//! of inputs is a matrix with one sample per row.

use rand::Rng as _;

use super::activation::{normal_cdf, normal_pdf, Activation};
use super::matrix::{gemm, Matrix};
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// Shape `(out_dim, in_dim)`.
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Dense {
    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    layers: Vec<Dense>,
}

/// Gradients with the same layout as [`MlpParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
}

/// Intermediates of a batched forward pass.
#[derive(Debug, Clone)]
pub struct MlpTape {
    input: Matrix,
    /// Post-activation output of every layer.
    outputs: Vec<Matrix>,
    /// Pre-activations of GELU layers (empty matrix for identity layers).
    pre: Vec<Matrix>,
    /// `Phi(pre)` cached for GELU layers.
    cdf: Vec<Matrix>,
}

impl MlpTape {
    pub fn output(&self) -> &Matrix {
        self.outputs.last().unwrap_or(&self.input)
    }

    pub fn input(&self) -> &Matrix {
        &self.input
    }
}

impl MlpParams {
    pub fn new(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("an MLP needs at least one layer".into()));
        }
        for (k, layer) in layers.iter().enumerate() {
            if layer.bias.len() != layer.out_dim() {
                return Err(Error::Dimension(format!(
                    "layer {k}: bias length {} for out-dim {}",
                    layer.bias.len(),
                    layer.out_dim()
                )));
            }
            if k > 0 && layers[k - 1].out_dim() != layer.in_dim() {
                return Err(Error::Dimension(format!(
                    "layer {k}: in-dim {} does not chain with previous out-dim {}",
                    layer.in_dim(),
                    layers[k - 1].out_dim()
                )));
            }
        }
        Ok(Self { layers })
    }

    /// Zero weights and biases. `dims` lists every width from input to output.
    pub fn zeros(dims: &[usize]) -> Result<Self> {
        Self::build(dims, |_, _| 0.0)
    }

    /// Glorot-uniform weights, zero biases.
    pub fn glorot(dims: &[usize], rng: &mut Rng) -> Result<Self> {
        Self::build(dims, |fan_in, fan_out| {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            rng.random_range(-limit..limit)
        })
    }

    fn build(dims: &[usize], mut draw: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::InvalidArgument(format!("invalid MLP dims {dims:?}")));
        }
        let last = dims.len() - 2;
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(k, w)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                Dense {
                    weights: Matrix::from_fn(fan_out, fan_in, |_, _| draw(fan_in, fan_out)),
                    bias: vec![0.0; fan_out],
                    activation: if k == last {
                        Activation::Identity
                    } else {
                        Activation::Gelu
                    },
                }
            })
            .collect();
        Self::new(layers)
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    /// Widths from input to output, e.g. `[2, 128, 128, 128, 128]`.
    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.in_dim())
            .chain(self.layers.iter().map(Dense::out_dim))
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Appends parameters in layer order, weights (row-major) before bias.
    pub fn write_flat(&self, out: &mut Vec<f64>) {
        for layer in &self.layers {
            out.extend_from_slice(layer.weights.as_slice());
            out.extend_from_slice(&layer.bias);
        }
    }

    /// Inverse of [`write_flat`](Self::write_flat); returns the number of values consumed.
    pub fn read_flat(&mut self, src: &[f64]) -> Result<usize> {
        if src.len() < self.num_params() {
            return Err(Error::Dimension(format!(
                "need {} parameters, got {}",
                self.num_params(),
                src.len()
            )));
        }
        let mut at = 0;
        for layer in &mut self.layers {
            let w = layer.weights.as_mut_slice();
            w.copy_from_slice(&src[at..at + w.len()]);
            at += w.len();
            let n = layer.bias.len();
            layer.bias.copy_from_slice(&src[at..at + n]);
            at += n;
        }
        Ok(at)
    }

    pub fn zero_grads(&self) -> MlpGrads {
        MlpGrads {
            weights: self
                .layers
                .iter()
                .map(|l| Matrix::zeros(l.out_dim(), l.in_dim()))
                .collect(),
            biases: self.layers.iter().map(|l| vec![0.0; l.out_dim()]).collect(),
        }
    }

    /// Single-sample forward pass.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.in_dim() {
            return Err(Error::Dimension(format!(
                "layer 0 expects {} inputs, got {}",
                self.in_dim(),
                input.len()
            )));
        }
        let x = Matrix::from_vec(1, input.len(), input.to_vec())?;
        Ok(self.forward_batch(&x)?.output().as_slice().to_vec())
    }

    /// Reverse-mode gradients of `<cotangent, forward(input)>` with respect to
    /// every parameter and to the input.
    pub fn backward(&self, input: &[f64], cotangent: &[f64]) -> Result<(MlpGrads, Vec<f64>)> {
        if cotangent.len() != self.out_dim() {
            return Err(Error::Dimension(format!(
                "layer {} produces {} outputs, cotangent has {}",
                self.layers.len() - 1,
                self.out_dim(),
                cotangent.len()
            )));
        }
        let x = Matrix::from_vec(1, input.len(), input.to_vec())?;
        let tape = self.forward_batch(&x)?;
        let seed = Matrix::from_vec(1, cotangent.len(), cotangent.to_vec())?;
        let mut grads = self.zero_grads();
        let d_input = self.backward_batch(&tape, &seed, &mut grads, true)?;
        Ok((grads, d_input.map(Matrix::into_vec).unwrap_or_default()))
    }

    pub fn forward_batch(&self, input: &Matrix) -> Result<MlpTape> {
        if input.cols() != self.in_dim() {
            return Err(Error::Dimension(format!(
                "layer 0 expects {} inputs, batch has {} columns",
                self.in_dim(),
                input.cols()
            )));
        }
        let batch = input.rows();
        let mut outputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut cdf = Vec::with_capacity(self.layers.len());

        for (k, layer) in self.layers.iter().enumerate() {
            let x = if k == 0 { input } else { &outputs[k - 1] };
            let mut z = Matrix::zeros(batch, layer.out_dim());
            for r in 0..batch {
                z.row_mut(r).copy_from_slice(&layer.bias);
            }
            gemm(1.0, x, false, &layer.weights, true, 1.0, &mut z);
            match layer.activation {
                Activation::Identity => {
                    outputs.push(z);
                    pre.push(Matrix::zeros(0, 0));
                    cdf.push(Matrix::zeros(0, 0));
                }
                Activation::Gelu => {
                    let phi = z.map(normal_cdf);
                    let mut a = z.clone();
                    for (v, c) in a.as_mut_slice().iter_mut().zip(phi.as_slice()) {
                        *v *= c;
                    }
                    outputs.push(a);
                    pre.push(z);
                    cdf.push(phi);
                }
            }
        }
        Ok(MlpTape {
            input: input.clone(),
            outputs,
            pre,
            cdf,
        })
    }

    /// Accumulates parameter gradients of `sum(d_output .* output)` into
    /// `grads`; optionally returns the gradient with respect to the input batch.
    pub fn backward_batch(
        &self,
        tape: &MlpTape,
        d_output: &Matrix,
        grads: &mut MlpGrads,
        want_input_grad: bool,
    ) -> Result<Option<Matrix>> {
        let batch = tape.input.rows();
        if d_output.shape() != (batch, self.out_dim()) {
            return Err(Error::Dimension(format!(
                "cotangent batch {:?}, expected {:?}",
                d_output.shape(),
                (batch, self.out_dim())
            )));
        }
        if grads.weights.len() != self.layers.len() {
            return Err(Error::Dimension("gradient buffer layer count".into()));
        }

        let mut delta = d_output.clone();
        for k in (0..self.layers.len()).rev() {
            let layer = &self.layers[k];
            if layer.activation == Activation::Gelu {
                let z = tape.pre[k].as_slice();
                let phi = tape.cdf[k].as_slice();
                for ((d, &z), &c) in delta.as_mut_slice().iter_mut().zip(z).zip(phi) {
                    *d *= c + z * normal_pdf(z);
                }
            }
            let x = if k == 0 { &tape.input } else { &tape.outputs[k - 1] };
            gemm(1.0, &delta, true, x, false, 1.0, &mut grads.weights[k]);
            let db = &mut grads.biases[k];
            for r in 0..batch {
                for (g, d) in db.iter_mut().zip(delta.row(r)) {
                    *g += d;
                }
            }
            if k > 0 || want_input_grad {
                let mut next = Matrix::zeros(batch, layer.in_dim());
                gemm(1.0, &delta, false, &layer.weights, false, 0.0, &mut next);
                delta = next;
            }
        }
        Ok(want_input_grad.then_some(delta))
    }
}

impl MlpGrads {
    pub fn write_flat(&self, out: &mut Vec<f64>) {
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w.as_slice());
            out.extend_from_slice(b);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for w in &mut self.weights {
            for v in w.as_mut_slice() {
                *v *= factor;
            }
        }
        for b in &mut self.biases {
            for v in b {
                *v *= factor;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::activation::gelu;
    use crate::rng::{substream, Stream};

    fn tiny_net() -> MlpParams {
        MlpParams::new(vec![
            Dense {
                weights: Matrix::from_vec(2, 1, vec![0.5, -1.0]).unwrap(),
                bias: vec![0.1, 0.2],
                activation: Activation::Gelu,
            },
            Dense {
                weights: Matrix::from_vec(1, 2, vec![2.0, -1.0]).unwrap(),
                bias: vec![0.3],
                activation: Activation::Identity,
            },
        ])
        .unwrap()
    }

    #[test]
    fn zero_network_outputs_zero() {
        let net = MlpParams::zeros(&[3, 4, 2]).unwrap();
        assert_eq!(net.forward(&[1.0, -2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let net = MlpParams::new(vec![Dense {
            weights: Matrix::identity(3),
            bias: vec![0.0; 3],
            activation: Activation::Identity,
        }])
        .unwrap();
        assert_eq!(net.forward(&[1.5, -2.0, 0.25]).unwrap(), vec![1.5, -2.0, 0.25]);
    }

    #[test]
    fn hand_chained_1_2_1_network() {
        // 2*gelu(0.6) - gelu(-0.8) + 0.3, evaluated at 40 digits: 1.34038057756662905...
        let out = tiny_net().forward(&[1.0]).unwrap();
        assert!((out[0] - 1.340_380_577_566_629).abs() < 1e-14);
        assert!((out[0] - (2.0 * gelu(0.6) - gelu(-0.8) + 0.3)).abs() < 1e-15);
    }

    #[test]
    fn dimension_errors_name_the_layer() {
        let net = tiny_net();
        let err = net.forward(&[1.0, 2.0]).unwrap_err().to_string();
        assert!(err.contains("layer 0"), "{err}");
        assert!(net.backward(&[1.0], &[1.0, 2.0]).is_err());

        let bad = MlpParams::new(vec![
            Dense {
                weights: Matrix::zeros(3, 2),
                bias: vec![0.0; 3],
                activation: Activation::Gelu,
            },
            Dense {
                weights: Matrix::zeros(1, 4),
                bias: vec![0.0],
                activation: Activation::Identity,
            },
        ]);
        assert!(bad.unwrap_err().to_string().contains("layer 1"));
    }

    #[test]
    fn zero_cotangent_gives_zero_gradients() {
        let net = MlpParams::glorot(&[3, 5, 2], &mut substream(1, Stream::Init, 0)).unwrap();
        let (g, dx) = net.backward(&[0.3, -0.1, 0.7], &[0.0, 0.0]).unwrap();
        let mut flat = Vec::new();
        g.write_flat(&mut flat);
        assert!(flat.iter().all(|&v| v == 0.0));
        assert!(dx.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_layer_gradient_is_outer_product() {
        let net = MlpParams::new(vec![Dense {
            weights: Matrix::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap(),
            bias: vec![0.0; 2],
            activation: Activation::Identity,
        }])
        .unwrap();
        let x = [0.5, -1.0, 2.0];
        let c = [3.0, -2.0];
        let (g, dx) = net.backward(&x, &c).unwrap();
        for i in 0..2 {
            for j in 0..3 {
                assert_eq!(g.weights[0].get(i, j), c[i] * x[j]);
            }
        }
        assert_eq!(g.biases[0], c.to_vec());
        // dx = W^T c
        assert_eq!(dx, vec![3.0 - 8.0, 6.0 - 10.0, 9.0 - 12.0]);
    }

    #[test]
    fn flat_round_trip() {
        let net = MlpParams::glorot(&[2, 4, 3], &mut substream(2, Stream::Init, 0)).unwrap();
        let mut flat = Vec::new();
        net.write_flat(&mut flat);
        assert_eq!(flat.len(), net.num_params());
        let mut other = MlpParams::zeros(&[2, 4, 3]).unwrap();
        assert_eq!(other.read_flat(&flat).unwrap(), flat.len());
        assert_eq!(other, net);
    }

    #[test]
    fn batch_forward_matches_single_rows() {
        let net = MlpParams::glorot(&[2, 6, 6, 3], &mut substream(3, Stream::Init, 0)).unwrap();
        let x = Matrix::from_fn(4, 2, |i, j| (i as f64 - 1.5) * 0.3 + j as f64 * 0.1);
        let tape = net.forward_batch(&x).unwrap();
        for r in 0..4 {
            let single = net.forward(x.row(r)).unwrap();
            for (a, b) in single.iter().zip(tape.output().row(r)) {
                assert!((a - b).abs() < 1e-14);
            }
        }
    }
}
