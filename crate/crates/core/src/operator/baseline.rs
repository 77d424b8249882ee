use super::{Normalization, TrainingSet};
use crate::error::{Error, Result};
use crate::math::{Matrix, MlpGrads, MlpParams};
use crate::rng::{substream, Stream};

/// Plain coordinate regression `(x, t) -> speed`, no input function.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineModel {
    pub net: MlpParams,
    pub norm: Normalization,
}

impl BaselineModel {
    pub fn new(norm: Normalization, hidden: usize, hidden_layers: usize, seed: u64) -> Result<Self> {
        if hidden == 0 {
            return Err(Error::InvalidArgument("layer widths must be positive".into()));
        }
        let mut dims = vec![2];
        dims.extend(std::iter::repeat_n(hidden, hidden_layers));
        dims.push(1);
        let net = MlpParams::glorot(&dims, &mut substream(seed, Stream::Init, 2))?;
        Ok(Self { net, norm })
    }

    pub fn from_parts(net: MlpParams, norm: Normalization) -> Result<Self> {
        if net.in_dim() != 2 || net.out_dim() != 1 {
            return Err(Error::Dimension(format!(
                "baseline maps 2 -> 1, got {} -> {}",
                net.in_dim(),
                net.out_dim()
            )));
        }
        Ok(Self { net, norm })
    }

    pub fn num_params(&self) -> usize {
        self.net.num_params()
    }

    pub fn write_flat(&self, out: &mut Vec<f64>) {
        self.net.write_flat(out);
    }

    pub fn read_flat(&mut self, src: &[f64]) -> Result<usize> {
        self.net.read_flat(src)
    }

    /// Normalized speed at a normalized query point.
    pub fn eval(&self, query: [f64; 2]) -> Result<f64> {
        Ok(self.net.forward(&query)?[0])
    }

    pub fn predict_field(&self) -> Result<crate::dataio::GridField> {
        let out = self.net.forward_batch(&self.norm.grid_points())?;
        self.norm.to_field(out.output().as_slice())
    }

    /// Mean squared error over the labels and its gradient.
    pub fn loss_and_grad(&self, set: &TrainingSet) -> Result<(f64, MlpGrads)> {
        let n = set.num_labels();
        if n == 0 {
            return Err(Error::InvalidArgument("no labels".into()));
        }
        let tape = self.net.forward_batch(&set.points)?;
        let pred = tape.output().as_slice();
        let scale = 1.0 / n as f64;
        let mut loss = 0.0;
        let mut d = Vec::with_capacity(n);
        for (p, y) in pred.iter().zip(&set.labels) {
            let r = p - y;
            loss += r * r;
            d.push(2.0 * scale * r);
        }
        let mut grads = self.net.zero_grads();
        self.net
            .backward_batch(&tape, &Matrix::from_vec(n, 1, d)?, &mut grads, false)?;
        Ok((loss * scale, grads))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{make_mask, GridField};
    use crate::funcgen::{generate, Generator};
    use crate::operator::{build_training_set, sample_configuration_points};

    #[test]
    fn gradient_matches_finite_differences() {
        let field = GridField::new(Matrix::from_fn(5, 6, |i, j| (i as f64 * 0.7).sin() + j as f64), 30.0, 1.5).unwrap();
        let mask = make_mask(5, 6, 0.5, 1).unwrap();
        let funcs = generate(Generator::Grf, 5, 6, 1, 1, 0.2, 3).unwrap();
        let pts = sample_configuration_points(2, 1).unwrap();
        let set = build_training_set(&field, &mask, &funcs, &pts).unwrap();
        let model = BaselineModel::new(set.norm, 5, 2, 3).unwrap();
        let (_, grads) = model.loss_and_grad(&set).unwrap();
        let mut g = Vec::new();
        grads.write_flat(&mut g);
        let mut theta = Vec::new();
        model.write_flat(&mut theta);
        let h = 1e-6;
        for k in 0..theta.len() {
            let mut probe = model.clone();
            let mut p = theta.clone();
            p[k] += h;
            probe.read_flat(&p).unwrap();
            let up = probe.loss_and_grad(&set).unwrap().0;
            p[k] -= 2.0 * h;
            probe.read_flat(&p).unwrap();
            let down = probe.loss_and_grad(&set).unwrap().0;
            let fd = (up - down) / (2.0 * h);
            assert!((fd - g[k]).abs() <= 1e-5 * fd.abs().max(g[k].abs()) + 1e-9, "{k}: {fd} vs {}", g[k]);
        }
    }
}
