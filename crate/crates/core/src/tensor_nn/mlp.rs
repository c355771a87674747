use rand::Rng;
use serde::{Deserialize, Serialize};

use super::mat::Mat;
use crate::error::{Error, Result};

/// One dense layer: `y = x W^T + b` with `W` stored `out x in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weight: Mat,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn new(weight: Mat, bias: Vec<f64>) -> Result<Self> {
        if bias.len() != weight.rows() {
            return Err(Error::Shape(format!(
                "bias of length {} for a layer with {} outputs",
                bias.len(),
                weight.rows()
            )));
        }
        Ok(Layer { weight, bias })
    }

    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }
}

/// Hidden widths plus the output width of an MLP whose input width is fixed
/// by the data.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Backbone {
    pub hidden: Vec<usize>,
    pub embed_dim: usize,
}

impl Backbone {
    pub fn new(hidden: Vec<usize>, embed_dim: usize) -> Self {
        Backbone { hidden, embed_dim }
    }

    /// Full width list `[input, hidden.., embed_dim]`.
    pub fn dims(&self, input_dim: usize) -> Vec<usize> {
        let mut d = Vec::with_capacity(self.hidden.len() + 2);
        d.push(input_dim);
        d.extend(&self.hidden);
        d.push(self.embed_dim);
        d
    }
}

/// Parameters of a feed-forward network. Hidden layers use ReLU, the output
/// layer is the identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    layers: Vec<Layer>,
}

impl MlpParams {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Shape("an MLP needs at least one layer".into()));
        }
        for (i, w) in layers.windows(2).enumerate() {
            if w[0].out_dim() != w[1].in_dim() {
                return Err(Error::Shape(format!(
                    "layer {i} outputs {} features but layer {} expects {}",
                    w[0].out_dim(),
                    i + 1,
                    w[1].in_dim()
                )));
            }
        }
        Ok(MlpParams { layers })
    }

    /// Kaiming-uniform weights (`U(-sqrt(6/fan_in), sqrt(6/fan_in))`) and zero
    /// biases. `dims` lists the input width followed by each layer's width.
    pub fn kaiming<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::Shape(format!(
                "need at least input and output widths, got {dims:?}"
            )));
        }
        if dims.contains(&0) {
            return Err(Error::Shape(format!("zero-width layer in {dims:?}")));
        }
        let layers = dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = (6.0 / fan_in as f64).sqrt();
                let data = (0..fan_in * fan_out)
                    .map(|_| rng.random_range(-bound..bound))
                    .collect();
                Layer {
                    weight: Mat::from_vec(fan_out, fan_in, data).expect("sized above"),
                    bias: vec![0.0; fan_out],
                }
            })
            .collect();
        MlpParams::new(layers)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    /// Input width followed by every layer's output width.
    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.in_dim())
            .chain(self.layers.iter().map(Layer::out_dim))
            .collect()
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.data().len() + l.bias.len())
            .sum()
    }

    /// Weight and bias buffers in a fixed order (w0, b0, w1, b1, ...).
    pub fn tensors(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.data(), l.bias.as_slice()])
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weight.data_mut(), l.bias.as_mut_slice()])
            .collect()
    }

    pub fn flat(&self) -> Vec<f64> {
        self.tensors().concat()
    }

    pub fn set_flat(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.num_params() {
            return Err(Error::Shape(format!(
                "{} values for {} parameters",
                values.len(),
                self.num_params()
            )));
        }
        let mut offset = 0;
        for t in self.tensors_mut() {
            let n = t.len();
            t.copy_from_slice(&values[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|t| t.iter().all(|v| v.is_finite()))
    }

    /// Convenience forward pass that discards the cache.
    pub fn forward(&self, batch: &Mat) -> Result<Mat> {
        mlp_forward(self, batch).map(|(out, _)| out)
    }
}

/// Gradients with the same layout as an [`MlpParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    pub layers: Vec<Layer>,
}

impl Grads {
    pub fn zeros_like(params: &MlpParams) -> Self {
        Grads {
            layers: params
                .layers
                .iter()
                .map(|l| Layer {
                    weight: Mat::zeros(l.weight.rows(), l.weight.cols()),
                    bias: vec![0.0; l.bias.len()],
                })
                .collect(),
        }
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.data(), l.bias.as_slice()])
            .collect()
    }

    pub fn flat(&self) -> Vec<f64> {
        self.tensors().concat()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|t| t.iter().all(|v| v.is_finite()))
    }

    pub fn congruent_with(&self, params: &MlpParams) -> bool {
        self.layers.len() == params.layers.len()
            && self.layers.iter().zip(&params.layers).all(|(g, p)| {
                g.weight.rows() == p.weight.rows()
                    && g.weight.cols() == p.weight.cols()
                    && g.bias.len() == p.bias.len()
            })
    }

    pub fn add_assign(&mut self, other: &Grads) -> Result<()> {
        if self.layers.len() != other.layers.len() {
            return Err(Error::Shape("gradient layer counts differ".into()));
        }
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            if a.weight.data().len() != b.weight.data().len() || a.bias.len() != b.bias.len() {
                return Err(Error::Shape("gradient tensor shapes differ".into()));
            }
            for (x, y) in a.weight.data_mut().iter_mut().zip(b.weight.data()) {
                *x += y;
            }
            for (x, y) in a.bias.iter_mut().zip(&b.bias) {
                *x += y;
            }
        }
        Ok(())
    }
}

/// Activations retained by [`mlp_forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    inputs: Vec<Mat>,
    pre_activations: Vec<Mat>,
}

impl ForwardCache {
    pub fn batch_size(&self) -> usize {
        self.inputs[0].rows()
    }
}

pub fn mlp_forward(params: &MlpParams, batch: &Mat) -> Result<(Mat, ForwardCache)> {
    if batch.cols() != params.in_dim() {
        return Err(Error::Shape(format!(
            "batch has {} features but the network expects {}",
            batch.cols(),
            params.in_dim()
        )));
    }
    let n_layers = params.layers.len();
    let mut inputs = Vec::with_capacity(n_layers);
    let mut pre_activations = Vec::with_capacity(n_layers);
    let mut current = batch.clone();
    for (i, layer) in params.layers.iter().enumerate() {
        let mut z = current.matmul_t(&layer.weight)?;
        z.add_row_vector(&layer.bias)?;
        let next = if i + 1 < n_layers {
            let mut a = z.clone();
            a.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
            a
        } else {
            z.clone()
        };
        inputs.push(current);
        pre_activations.push(z);
        current = next;
    }
    Ok((
        current,
        ForwardCache {
            inputs,
            pre_activations,
        },
    ))
}

/// Reverse-mode pass. Returns parameter gradients and the gradient with
/// respect to the network input.
pub fn mlp_backward(
    params: &MlpParams,
    cache: &ForwardCache,
    output_grad: &Mat,
) -> Result<(Grads, Mat)> {
    let n_layers = params.layers.len();
    if cache.inputs.len() != n_layers {
        return Err(Error::Shape(format!(
            "cache holds {} layers but the network has {n_layers}",
            cache.inputs.len()
        )));
    }
    let last = &cache.pre_activations[n_layers - 1];
    if output_grad.rows() != last.rows() || output_grad.cols() != last.cols() {
        return Err(Error::Shape(format!(
            "output gradient is {}x{} but the forward output was {}x{}",
            output_grad.rows(),
            output_grad.cols(),
            last.rows(),
            last.cols()
        )));
    }
    let mut grads = Vec::with_capacity(n_layers);
    let mut delta = output_grad.clone();
    for i in (0..n_layers).rev() {
        let layer = &params.layers[i];
        let input = &cache.inputs[i];
        let weight = delta.t_matmul(input)?;
        let bias = delta.column_sums();
        grads.push(Layer { weight, bias });
        let mut upstream = delta.matmul(&layer.weight)?;
        if i > 0 {
            let pre = &cache.pre_activations[i - 1];
            for (g, z) in upstream.data_mut().iter_mut().zip(pre.data()) {
                if *z <= 0.0 {
                    *g = 0.0;
                }
            }
        }
        delta = upstream;
    }
    grads.reverse();
    Ok((Grads { layers: grads }, delta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from;

    /// Loop-based forward pass written independently of the gemm path.
    fn naive_forward(params: &MlpParams, x: &[f64]) -> Vec<f64> {
        let mut a = x.to_vec();
        let n = params.layers().len();
        for (li, l) in params.layers().iter().enumerate() {
            let mut z = vec![0.0; l.out_dim()];
            for o in 0..l.out_dim() {
                let mut s = l.bias[o];
                for i in 0..l.in_dim() {
                    s += l.weight.get(o, i) * a[i];
                }
                z[o] = if li + 1 < n && s < 0.0 { 0.0 } else { s };
            }
            a = z;
        }
        a
    }

    fn random_batch(rows: usize, cols: usize, seed: u64) -> Mat {
        let mut rng = rng_from(seed, &[]);
        Mat::from_vec(
            rows,
            cols,
            (0..rows * cols)
                .map(|_| rng.random_range(-2.0..2.0))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn identity_layer_is_identity() {
        let params =
            MlpParams::new(vec![Layer::new(Mat::identity(3), vec![0.0; 3]).unwrap()]).unwrap();
        let x = random_batch(5, 3, 1);
        let (y, _) = mlp_forward(&params, &x).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn relu_kills_negative_preactivations() {
        let hidden = Layer::new(Mat::identity(2), vec![-10.0, -10.0]).unwrap();
        let out = Layer::new(Mat::identity(2), vec![0.0, 0.0]).unwrap();
        let params = MlpParams::new(vec![hidden, out]).unwrap();
        let x = Mat::from_rows(&[[1.0, -3.0], [5.0, 2.0]]).unwrap();
        let (y, _) = mlp_forward(&params, &x).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn forward_matches_loop_oracle() {
        let mut rng = rng_from(11, &[]);
        let params = MlpParams::kaiming(&[4, 7, 3], &mut rng).unwrap();
        let mut params = params;
        for t in params.tensors_mut() {
            for v in t.iter_mut() {
                *v += rng.random_range(-0.3..0.3);
            }
        }
        let x = random_batch(9, 4, 2);
        let (y, _) = mlp_forward(&params, &x).unwrap();
        for r in 0..x.rows() {
            let want = naive_forward(&params, x.row(r));
            for (a, b) in want.iter().zip(y.row(r)) {
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn zero_output_grad_gives_zero_grads() {
        let mut rng = rng_from(3, &[]);
        let params = MlpParams::kaiming(&[3, 5, 2], &mut rng).unwrap();
        let x = random_batch(4, 3, 4);
        let (_, cache) = mlp_forward(&params, &x).unwrap();
        let (g, gin) = mlp_backward(&params, &cache, &Mat::zeros(4, 2)).unwrap();
        assert!(g.flat().iter().all(|&v| v == 0.0));
        assert!(gin.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_sum_loss_has_analytic_gradient() {
        // loss = sum of outputs of y = x W^T + b; dW[o][i] = sum_n x[n][i], db[o] = n.
        let mut rng = rng_from(5, &[]);
        let params = MlpParams::kaiming(&[3, 2], &mut rng).unwrap();
        let x = random_batch(6, 3, 6);
        let (_, cache) = mlp_forward(&params, &x).unwrap();
        let ones = Mat::from_vec(6, 2, vec![1.0; 12]).unwrap();
        let (g, _) = mlp_backward(&params, &cache, &ones).unwrap();
        let col = x.column_sums();
        for o in 0..2 {
            for i in 0..3 {
                assert!((g.layers[0].weight.get(o, i) - col[i]).abs() < 1e-12);
            }
            assert!((g.layers[0].bias[o] - 6.0).abs() < 1e-12);
        }
    }

    #[test]
    fn backward_matches_central_differences() {
        let mut rng = rng_from(9, &[]);
        let mut params = MlpParams::kaiming(&[3, 6, 4, 2], &mut rng).unwrap();
        for t in params.tensors_mut() {
            for v in t.iter_mut() {
                *v += rng.random_range(-0.2..0.2);
            }
        }
        let x = random_batch(5, 3, 10);
        let w = random_batch(5, 2, 12);
        // loss = sum(w .* f(x))
        let loss = |p: &MlpParams| -> f64 {
            let y = p.forward(&x).unwrap();
            y.data().iter().zip(w.data()).map(|(a, b)| a * b).sum()
        };
        let (_, cache) = mlp_forward(&params, &x).unwrap();
        let (g, gin) = mlp_backward(&params, &cache, &w).unwrap();
        let analytic = g.flat();
        let base = params.flat();
        let h = 1e-5;
        for (j, &a) in analytic.iter().enumerate() {
            let mut plus = base.clone();
            plus[j] += h;
            let mut minus = base.clone();
            minus[j] -= h;
            let mut pp = params.clone();
            pp.set_flat(&plus).unwrap();
            let mut pm = params.clone();
            pm.set_flat(&minus).unwrap();
            let fd = (loss(&pp) - loss(&pm)) / (2.0 * h);
            let rel = (a - fd).abs() / (a.abs() + fd.abs()).max(1e-8);
            assert!(
                rel < 1e-4 || (a - fd).abs() < 1e-9,
                "param {j}: {a} vs {fd}"
            );
        }
        // input gradient
        for r in 0..x.rows() {
            for c in 0..x.cols() {
                let mut xp = x.clone();
                xp.set(r, c, x.get(r, c) + h);
                let mut xm = x.clone();
                xm.set(r, c, x.get(r, c) - h);
                let f = |xx: &Mat| -> f64 {
                    let y = params.forward(xx).unwrap();
                    y.data().iter().zip(w.data()).map(|(a, b)| a * b).sum()
                };
                let fd = (f(&xp) - f(&xm)) / (2.0 * h);
                assert!((gin.get(r, c) - fd).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn shape_errors() {
        let mut rng = rng_from(1, &[]);
        let params = MlpParams::kaiming(&[3, 2], &mut rng).unwrap();
        assert!(mlp_forward(&params, &Mat::zeros(2, 4)).is_err());
        let (_, cache) = mlp_forward(&params, &Mat::zeros(2, 3)).unwrap();
        assert!(mlp_backward(&params, &cache, &Mat::zeros(2, 3)).is_err());
        assert!(MlpParams::kaiming(&[3], &mut rng).is_err());
        let a = Layer::new(Mat::zeros(2, 3), vec![0.0; 2]).unwrap();
        let b = Layer::new(Mat::zeros(2, 4), vec![0.0; 2]).unwrap();
        assert!(MlpParams::new(vec![a, b]).is_err());
    }
}
