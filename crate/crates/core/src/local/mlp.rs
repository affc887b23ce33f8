use nalgebra::{DMatrix, DMatrixView, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::discrete::{logsumexp, DiscreteBelief};
use crate::error::{check_dim, FusionError, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Tanh,
    Relu,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Fully connected softmax classifier.
///
/// Parameters are one flat vector; each layer stores its `out × in` weight
/// matrix row by row, followed by its bias.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    layer_sizes: Vec<usize>,
    activation: Activation,
}

struct Layer {
    weights: usize,
    bias: usize,
    fan_in: usize,
    fan_out: usize,
}

impl MlpSpec {
    /// `layer_sizes` = input width, hidden widths..., class count.
    pub fn new(layer_sizes: Vec<usize>, activation: Activation) -> Result<Self> {
        if layer_sizes.len() < 3 {
            return Err(FusionError::InvalidArgument(
                "an MLP needs input, output and at least one hidden layer".into(),
            ));
        }
        Self::unchecked(layer_sizes, activation)
    }

    /// Multinomial logistic regression (no hidden layer).
    pub fn softmax_regression(inputs: usize, classes: usize) -> Result<Self> {
        Self::unchecked(vec![inputs, classes], Activation::Tanh)
    }

    fn unchecked(layer_sizes: Vec<usize>, activation: Activation) -> Result<Self> {
        if layer_sizes.contains(&0) {
            return Err(FusionError::InvalidArgument("layer widths must be positive".into()));
        }
        if *layer_sizes.last().unwrap() < 2 {
            return Err(FusionError::InvalidArgument("need at least two classes".into()));
        }
        Ok(Self {
            layer_sizes,
            activation,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn inputs(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn classes(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn parameter_count(&self) -> usize {
        self.layer_sizes.windows(2).map(|w| w[1] * (w[0] + 1)).sum()
    }

    fn layers(&self) -> Vec<Layer> {
        let mut offset = 0;
        self.layer_sizes
            .windows(2)
            .map(|w| {
                let layer = Layer {
                    weights: offset,
                    bias: offset + w[0] * w[1],
                    fan_in: w[0],
                    fan_out: w[1],
                };
                offset += w[1] * (w[0] + 1);
                layer
            })
            .collect()
    }

    /// Uniform `±1/√fan_in` initialization for weights and biases.
    pub fn init_params<R: Rng>(&self, rng: &mut R) -> DVector<f64> {
        let mut params = DVector::zeros(self.parameter_count());
        for layer in self.layers() {
            let bound = 1.0 / (layer.fan_in as f64).sqrt();
            let end = layer.bias + layer.fan_out;
            for v in params.rows_mut(layer.weights, end - layer.weights).iter_mut() {
                *v = rng.random_range(-bound..bound);
            }
        }
        params
    }
}

/// `Wᵀ` (`in × out`) as a view into the flat parameters.
fn weights_t<'a>(params: &'a DVector<f64>, layer: &Layer) -> DMatrixView<'a, f64> {
    DMatrixView::from_slice(
        &params.as_slice()[layer.weights..layer.bias],
        layer.fan_in,
        layer.fan_out,
    )
}

struct Tape {
    /// Layer inputs `a_0 = X, a_1, …`.
    inputs: Vec<DMatrix<f64>>,
    /// Hidden pre-activations.
    pre: Vec<DMatrix<f64>>,
    logits: DMatrix<f64>,
}

fn forward(spec: &MlpSpec, params: &DVector<f64>, x: &DMatrix<f64>) -> Tape {
    let layers = spec.layers();
    let mut inputs = vec![x.clone()];
    let mut pre = Vec::with_capacity(layers.len() - 1);
    let mut logits = DMatrix::zeros(0, 0);
    for (l, layer) in layers.iter().enumerate() {
        let mut z = &inputs[l] * weights_t(params, layer);
        let bias = params.rows(layer.bias, layer.fan_out);
        for mut row in z.row_iter_mut() {
            row += bias.transpose();
        }
        if l + 1 == layers.len() {
            logits = z;
        } else {
            let act = spec.activation;
            inputs.push(z.map(|v| act.apply(v)));
            pre.push(z);
        }
    }
    Tape { inputs, pre, logits }
}

/// Row-wise log-softmax.
fn log_softmax(logits: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = logits.clone();
    for mut row in out.row_iter_mut() {
        let z = logsumexp(&row.iter().copied().collect::<Vec<_>>());
        row.add_scalar_mut(-z);
    }
    out
}

enum Accumulate {
    Gradient,
    SquaredPerSample,
}

/// Backpropagates `∂NLL/∂logits = softmax − onehot` and returns
/// `(Σ NLL, accumulated parameter vector)`.
fn backward(
    spec: &MlpSpec,
    params: &DVector<f64>,
    x: &DMatrix<f64>,
    labels: &[usize],
    mode: Accumulate,
) -> (f64, DVector<f64>) {
    let layers = spec.layers();
    let tape = forward(spec, params, x);
    let logp = log_softmax(&tape.logits);
    let nll: f64 = labels.iter().enumerate().map(|(n, &c)| -logp[(n, c)]).sum();
    let mut delta = logp.map(f64::exp);
    for (n, &c) in labels.iter().enumerate() {
        delta[(n, c)] -= 1.0;
    }
    let mut out = DVector::zeros(spec.parameter_count());
    for (l, layer) in layers.iter().enumerate().rev() {
        let a = &tape.inputs[l];
        let (gw, gb) = match mode {
            Accumulate::Gradient => (a.tr_mul(&delta), delta.row_sum()),
            Accumulate::SquaredPerSample => {
                let d2 = delta.map(|v| v * v);
                (a.map(|v| v * v).tr_mul(&d2), d2.row_sum())
            }
        };
        out.rows_mut(layer.weights, layer.fan_in * layer.fan_out)
            .copy_from_slice(gw.as_slice());
        out.rows_mut(layer.bias, layer.fan_out).copy_from_slice(gb.as_slice());
        if l > 0 {
            let mut next = &delta * weights_t(params, layer).transpose();
            let act = spec.activation;
            next.zip_zip_apply(&tape.pre[l - 1], a, |g, z, av| *g *= act.derivative(z, av));
            delta = next;
        }
    }
    (nll, out)
}

fn check_data(spec: &MlpSpec, params: &DVector<f64>, data: &Dataset) -> Result<Vec<usize>> {
    check_dim(spec.parameter_count(), params.len())?;
    check_dim(spec.inputs(), data.feature_dim())?;
    let (labels, classes) = data.labels()?;
    check_dim(spec.classes(), classes)?;
    Ok(labels.to_vec())
}

/// Summed negative log-likelihood and its gradient.
pub fn nll_and_gradient(spec: &MlpSpec, params: &DVector<f64>, data: &Dataset) -> Result<(f64, DVector<f64>)> {
    let labels = check_data(spec, params, data)?;
    Ok(backward(spec, params, data.features(), &labels, Accumulate::Gradient))
}

/// `Σ_n (∇ log p(y_n | x_n))²` coordinatewise.
pub(crate) fn squared_gradient_sum(spec: &MlpSpec, params: &DVector<f64>, data: &Dataset) -> Result<DVector<f64>> {
    let labels = check_data(spec, params, data)?;
    Ok(backward(spec, params, data.features(), &labels, Accumulate::SquaredPerSample).1)
}

/// Row-wise class log-probabilities.
pub fn log_probs_batch(spec: &MlpSpec, params: &DVector<f64>, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_dim(spec.parameter_count(), params.len())?;
    check_dim(spec.inputs(), x.ncols())?;
    Ok(log_softmax(&forward(spec, params, x).logits))
}

pub fn mlp_predict(spec: &MlpSpec, params: &DVector<f64>, query: &DVector<f64>) -> Result<DiscreteBelief> {
    let x = DMatrix::from_row_slice(1, query.len(), query.as_slice());
    let logp = log_probs_batch(spec, params, &x)?;
    DiscreteBelief::from_log_weights(logp.row(0).iter().copied().collect())
}

/// Fraction of rows whose most probable class matches the label.
pub fn accuracy(spec: &MlpSpec, params: &DVector<f64>, data: &Dataset) -> Result<f64> {
    let labels = check_data(spec, params, data)?;
    if labels.is_empty() {
        return Err(FusionError::EmptyInput("accuracy of an empty dataset"));
    }
    let logits = forward(spec, params, data.features()).logits;
    let hits = labels
        .iter()
        .enumerate()
        .filter(|&(n, &c)| {
            let row = logits.row(n);
            let best = (0..row.len()).fold(0, |b, j| if row[j] > row[b] { j } else { b });
            best == c
        })
        .count();
    Ok(hits as f64 / labels.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn parameter_layout() {
        let spec = MlpSpec::new(vec![10, 32, 8, 3], Activation::Tanh).unwrap();
        assert_eq!(spec.parameter_count(), 10 * 32 + 32 + 32 * 8 + 8 + 8 * 3 + 3);
        assert!(MlpSpec::new(vec![10, 3], Activation::Tanh).is_err());
        assert_eq!(MlpSpec::softmax_regression(2, 2).unwrap().parameter_count(), 6);
    }

    #[test]
    fn zero_params_give_uniform() {
        let spec = MlpSpec::new(vec![3, 4, 5], Activation::Relu).unwrap();
        let p = mlp_predict(
            &spec,
            &DVector::zeros(spec.parameter_count()),
            &DVector::from_element(3, 0.7),
        )
        .unwrap();
        for v in p.probs() {
            assert!((v - 0.2).abs() < 1e-15);
        }
    }

    #[test]
    fn large_output_bias_saturates() {
        let spec = MlpSpec::new(vec![2, 3, 4], Activation::Tanh).unwrap();
        let mut params = DVector::zeros(spec.parameter_count());
        let out_bias = spec.parameter_count() - 4;
        params[out_bias + 2] = 20.0;
        let p = mlp_predict(&spec, &params, &DVector::from_element(2, 1.0)).unwrap();
        assert!(p.probs()[2] > 0.99);
        assert!((p.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn softmax_regression_matches_hand_logits() {
        let spec = MlpSpec::softmax_regression(2, 2).unwrap();
        // W = [[1, 2], [3, 4]], b = [0.5, -0.5]
        let params = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0, 0.5, -0.5]);
        let logits = forward(&spec, &params, &dmatrix![1.0, -1.0]).logits;
        assert_eq!(logits, dmatrix![-0.5, -1.5]);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let spec = MlpSpec::new(vec![3, 5, 4, 3], Activation::Tanh).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let params = spec.init_params(&mut rng);
        let x = DMatrix::from_fn(7, 3, |i, j| ((i * 3 + j) as f64 * 0.37).sin());
        let data = Dataset::classification(x, vec![0, 1, 2, 2, 1, 0, 1], 3).unwrap();
        let (_, g) = nll_and_gradient(&spec, &params, &data).unwrap();
        let h = 1e-5;
        for k in 0..spec.parameter_count() {
            let mut plus = params.clone();
            plus[k] += h;
            let mut minus = params.clone();
            minus[k] -= h;
            let fd = (nll_and_gradient(&spec, &plus, &data).unwrap().0
                - nll_and_gradient(&spec, &minus, &data).unwrap().0)
                / (2.0 * h);
            assert!(
                (fd - g[k]).abs() <= 1e-6 * (1.0 + g[k].abs()),
                "k={k}: {fd} vs {}",
                g[k]
            );
        }
    }

    #[test]
    fn init_respects_fan_in_bound() {
        let spec = MlpSpec::new(vec![16, 4, 2], Activation::Tanh).unwrap();
        let p = spec.init_params(&mut ChaCha8Rng::seed_from_u64(0));
        assert!(p.rows(0, 16 * 4 + 4).iter().all(|v| v.abs() <= 0.25));
        assert!(p.rows(68, 10).iter().all(|v| v.abs() <= 0.5));
        assert!(p.iter().any(|v| *v != 0.0));
    }
}
