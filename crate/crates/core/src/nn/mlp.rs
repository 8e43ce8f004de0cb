use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
    Sigmoid,
}

impl Activation {
    pub(crate) fn code(self) -> u8 {
        match self {
            Activation::Identity => 0,
            Activation::Relu => 1,
            Activation::Sigmoid => 2,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Activation::Identity),
            1 => Some(Activation::Relu),
            2 => Some(Activation::Sigmoid),
            _ => None,
        }
    }

    fn apply(self, z: &Array2<f64>) -> Array2<f64> {
        match self {
            Activation::Identity => z.clone(),
            Activation::Relu => z.mapv(|v| v.max(0.0)),
            Activation::Sigmoid => z.mapv(sigmoid),
        }
    }

    /// Multiplies `grad` in place by the activation derivative at `z`.
    fn backprop(self, z: &Array2<f64>, out: &Array2<f64>, grad: &mut Array2<f64>) {
        match self {
            Activation::Identity => {}
            Activation::Relu => grad.zip_mut_with(z, |g, &v| {
                if v <= 0.0 {
                    *g = 0.0
                }
            }),
            Activation::Sigmoid => grad.zip_mut_with(out, |g, &s| *g *= s * (1.0 - s)),
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Fully connected layer `y = x Wᵀ + b` with `W` stored as `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self { weight: Array2::zeros((fan_out, fan_in)), bias: Array1::zeros(fan_out) }
    }

    pub fn fan_in(&self) -> usize {
        self.weight.ncols()
    }

    pub fn fan_out(&self) -> usize {
        self.weight.nrows()
    }

    pub fn affine(&self, x: &ArrayView2<f64>) -> Array2<f64> {
        let mut z = x.dot(&self.weight.t());
        z += &self.bias;
        z
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrad {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Row-major copy if `a` is not already row-major.
pub(crate) fn standard(a: Array2<f64>) -> Array2<f64> {
    if a.is_standard_layout() {
        a
    } else {
        a.as_standard_layout().into_owned()
    }
}

/// Gradients for every layer of one [`Mlp`], same shapes as its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub layers: Vec<DenseGrad>,
}

impl MlpGrads {
    pub fn zeros_like(mlp: &Mlp) -> Self {
        Self {
            layers: mlp
                .layers
                .iter()
                .map(|l| DenseGrad {
                    weight: Array2::zeros(l.weight.raw_dim()),
                    bias: Array1::zeros(l.bias.len()),
                })
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &MlpGrads) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weight += &b.weight;
            a.bias += &b.bias;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for l in &mut self.layers {
            l.weight *= s;
            l.bias *= s;
        }
    }

    pub fn slices(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| {
                [
                    l.weight.as_slice().expect("standard layout"),
                    l.bias.as_slice().expect("standard layout"),
                ]
            })
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.slices()
            .iter()
            .flat_map(|s| s.iter())
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

/// Values saved by a forward pass for the matching backward pass.
#[derive(Debug, Clone)]
pub struct MlpCache {
    /// Network input; absent when the first pre-activation was supplied directly.
    input: Option<Array2<f64>>,
    /// Pre-activations of every layer.
    preacts: Vec<Array2<f64>>,
    /// Post-activations of every layer (the last one is the output).
    acts: Vec<Array2<f64>>,
}

impl MlpCache {
    pub fn output(&self) -> &Array2<f64> {
        self.acts.last().expect("non-empty cache")
    }

    pub fn rows(&self) -> usize {
        self.output().nrows()
    }
}

/// Multilayer perceptron with ReLU hidden layers and a configurable output
/// activation.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Dense>,
    output: Activation,
}

impl Mlp {
    /// He-uniform weights, zero biases.
    pub fn init<R: Rng + ?Sized>(widths: &[usize], output: Activation, rng: &mut R) -> Result<Self> {
        let mut mlp = Self::zeros(widths, output)?;
        for layer in &mut mlp.layers {
            let bound = (6.0 / layer.fan_in() as f64).sqrt();
            layer.weight.mapv_inplace(|_| rng.random_range(-bound..bound));
        }
        Ok(mlp)
    }

    pub fn zeros(widths: &[usize], output: Activation) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "an mlp needs at least 2 widths, got {widths:?}"
            )));
        }
        if widths.contains(&0) {
            return Err(Error::InvalidArgument(format!("zero-width layer in {widths:?}")));
        }
        let layers = widths.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect();
        Ok(Self { layers, output })
    }

    pub fn from_layers(layers: Vec<Dense>, output: Activation) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("an mlp needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].fan_out() != pair[1].fan_in() {
                return Err(Error::Shape(format!(
                    "layer output {} does not feed layer input {}",
                    pair[0].fan_out(),
                    pair[1].fan_in()
                )));
            }
        }
        for l in &layers {
            if l.bias.len() != l.fan_out() {
                return Err(Error::Shape("bias length differs from layer width".into()));
            }
        }
        Ok(Self { layers, output })
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.layers[0].fan_in()];
        w.extend(self.layers.iter().map(Dense::fan_out));
        w
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().expect("non-empty").fan_out()
    }

    pub fn output_activation(&self) -> Activation {
        self.output
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn param_shapes(&self) -> Vec<usize> {
        self.layers.iter().flat_map(|l| [l.weight.len(), l.bias.len()]).collect()
    }

    pub fn param_slices(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| {
                [
                    l.weight.as_slice().expect("standard layout"),
                    l.bias.as_slice().expect("standard layout"),
                ]
            })
            .collect()
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| {
                [
                    l.weight.as_slice_mut().expect("standard layout"),
                    l.bias.as_slice_mut().expect("standard layout"),
                ]
            })
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.param_slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }

    /// Zeroes the final layer so the network emits `act(0)` everywhere.
    pub fn zero_output_layer(&mut self) {
        let last = self.layers.last_mut().expect("non-empty");
        last.weight.fill(0.0);
        last.bias.fill(0.0);
    }

    fn activation(&self, layer: usize) -> Activation {
        if layer + 1 == self.layers.len() {
            self.output
        } else {
            Activation::Relu
        }
    }

    fn check_input(&self, x: &ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.input_width() {
            return Err(Error::Shape(format!(
                "input width {} but network expects {}",
                x.ncols(),
                self.input_width()
            )));
        }
        Ok(())
    }

    /// Forward pass without keeping intermediates.
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(&x)?;
        let mut a = self.activation(0).apply(&self.layers[0].affine(&x));
        for (l, layer) in self.layers.iter().enumerate().skip(1) {
            a = self.activation(l).apply(&layer.affine(&a.view()));
        }
        Ok(a)
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Result<(Array2<f64>, MlpCache)> {
        self.check_input(&x)?;
        let z0 = self.layers[0].affine(&x);
        let mut cache = self.forward_from_preact(z0)?;
        cache.input = Some(x.to_owned());
        Ok((cache.output().clone(), cache))
    }

    /// Runs the network starting from an externally computed first-layer
    /// pre-activation. Used when part of the first layer's input is shared
    /// across many rows and is cheaper to project once.
    pub fn forward_from_preact(&self, z0: Array2<f64>) -> Result<MlpCache> {
        if z0.ncols() != self.layers[0].fan_out() {
            return Err(Error::Shape(format!(
                "pre-activation width {} but first layer has {} units",
                z0.ncols(),
                self.layers[0].fan_out()
            )));
        }
        let mut preacts = Vec::with_capacity(self.layers.len());
        let mut acts = Vec::with_capacity(self.layers.len());
        acts.push(self.activation(0).apply(&z0));
        preacts.push(z0);
        for (l, layer) in self.layers.iter().enumerate().skip(1) {
            let z = layer.affine(&acts[l - 1].view());
            acts.push(self.activation(l).apply(&z));
            preacts.push(z);
        }
        Ok(MlpCache { input: None, preacts, acts })
    }

    /// Reverse pass from `grad_out` down to the first pre-activation.
    ///
    /// Returns gradients for layers `1..` (layer 0 left zeroed) and the
    /// gradient with respect to the first pre-activation.
    pub fn backward_to_preact(
        &self,
        cache: &MlpCache,
        grad_out: ArrayView2<f64>,
    ) -> Result<(MlpGrads, Array2<f64>)> {
        if cache.preacts.len() != self.layers.len() {
            return Err(Error::Shape("cache does not match network depth".into()));
        }
        let out = cache.output();
        if grad_out.dim() != out.dim() {
            return Err(Error::Shape(format!(
                "output gradient {:?} but forward produced {:?}",
                grad_out.dim(),
                out.dim()
            )));
        }
        for (l, layer) in self.layers.iter().enumerate() {
            if cache.preacts[l].ncols() != layer.fan_out() {
                return Err(Error::Shape("stale cache: layer widths changed".into()));
            }
        }
        let mut grads = MlpGrads::zeros_like(self);
        let mut g = grad_out.to_owned();
        for l in (0..self.layers.len()).rev() {
            self.activation(l).backprop(&cache.preacts[l], &cache.acts[l], &mut g);
            if l == 0 {
                break;
            }
            let a_prev = &cache.acts[l - 1];
            grads.layers[l].weight = standard(g.t().dot(a_prev));
            grads.layers[l].bias = g.sum_axis(Axis(0));
            g = g.dot(&self.layers[l].weight);
        }
        Ok((grads, g))
    }

    /// Exact gradients of `sum(grad_out ⊙ output)` with respect to the
    /// parameters and to the input batch.
    pub fn backward(
        &self,
        cache: &MlpCache,
        grad_out: ArrayView2<f64>,
    ) -> Result<(MlpGrads, Array2<f64>)> {
        let input = cache
            .input
            .as_ref()
            .ok_or_else(|| Error::Shape("cache has no input; use backward_to_preact".into()))?;
        let (mut grads, dz0) = self.backward_to_preact(cache, grad_out)?;
        grads.layers[0].weight = standard(dz0.t().dot(input));
        grads.layers[0].bias = dz0.sum_axis(Axis(0));
        let dx = dz0.dot(&self.layers[0].weight);
        Ok((grads, dx))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn random_batch(rows: usize, cols: usize, r: &mut ChaCha8Rng) -> Array2<f64> {
        Array2::from_shape_fn((rows, cols), |_| r.random_range(-1.0..1.0))
    }

    #[test]
    fn init_is_deterministic() {
        let a = Mlp::init(&[4, 8, 1], Activation::Identity, &mut rng(3)).unwrap();
        let b = Mlp::init(&[4, 8, 1], Activation::Identity, &mut rng(3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_width_rejected() {
        assert!(Mlp::init(&[4], Activation::Identity, &mut rng(0)).is_err());
        assert!(Mlp::init(&[4, 0, 1], Activation::Identity, &mut rng(0)).is_err());
    }

    #[test]
    fn init_within_he_bound() {
        let m = Mlp::init(&[10, 20, 3], Activation::Identity, &mut rng(1)).unwrap();
        for layer in m.layers() {
            let bound = (6.0 / layer.fan_in() as f64).sqrt();
            assert!(layer.weight.iter().all(|w| w.is_finite() && w.abs() <= bound));
            assert!(layer.bias.iter().all(|&b| b == 0.0));
        }
    }

    #[test]
    fn zero_network_outputs_zero() {
        let m = Mlp::zeros(&[3, 4, 2], Activation::Identity).unwrap();
        let x = random_batch(5, 3, &mut rng(2));
        assert!(m.predict(x.view()).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_linear_layer_is_affine() {
        let layer = Dense { weight: array![[1.0, 2.0], [0.5, -1.0]], bias: array![0.25, -0.5] };
        let m = Mlp::from_layers(vec![layer], Activation::Identity).unwrap();
        let y = m.predict(array![[3.0, 4.0]].view()).unwrap();
        assert_eq!(y, array![[11.25, -3.0]]);
    }

    #[test]
    fn rows_are_independent() {
        let m = Mlp::init(&[3, 6, 2], Activation::Sigmoid, &mut rng(4)).unwrap();
        let x = random_batch(4, 3, &mut rng(5));
        let batched = m.predict(x.view()).unwrap();
        for i in 0..4 {
            let single = m.predict(x.slice(ndarray::s![i..i + 1, ..])).unwrap();
            assert_eq!(single.row(0), batched.row(i));
        }
    }

    #[test]
    fn input_width_mismatch_is_shape_error() {
        let m = Mlp::zeros(&[3, 2], Activation::Identity).unwrap();
        let x = Array2::zeros((1, 4));
        assert!(matches!(m.predict(x.view()), Err(Error::Shape(_))));
    }

    #[test]
    fn zero_output_gradient_gives_zero_grads() {
        let m = Mlp::init(&[3, 5, 2], Activation::Identity, &mut rng(6)).unwrap();
        let x = random_batch(4, 3, &mut rng(7));
        let (y, cache) = m.forward(x.view()).unwrap();
        let (g, dx) = m.backward(&cache, Array2::zeros(y.raw_dim()).view()).unwrap();
        assert_eq!(g.max_abs(), 0.0);
        assert!(dx.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn batch_gradient_is_sum_of_sample_gradients() {
        let m = Mlp::init(&[3, 5, 2], Activation::Sigmoid, &mut rng(8)).unwrap();
        let x = random_batch(3, 3, &mut rng(9));
        let (y, cache) = m.forward(x.view()).unwrap();
        let (batch, _) = m.backward(&cache, Array2::ones(y.raw_dim()).view()).unwrap();
        let mut total = MlpGrads::zeros_like(&m);
        for i in 0..3 {
            let xi = x.slice(ndarray::s![i..i + 1, ..]);
            let (yi, ci) = m.forward(xi).unwrap();
            let (gi, _) = m.backward(&ci, Array2::ones(yi.raw_dim()).view()).unwrap();
            total.add_assign(&gi);
        }
        for (a, b) in batch.slices().iter().zip(total.slices()) {
            for (u, v) in a.iter().zip(b) {
                assert!((u - v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn stale_cache_rejected() {
        let a = Mlp::init(&[3, 5, 2], Activation::Identity, &mut rng(1)).unwrap();
        let b = Mlp::init(&[3, 4, 2], Activation::Identity, &mut rng(1)).unwrap();
        let x = random_batch(2, 3, &mut rng(2));
        let (y, cache) = a.forward(x.view()).unwrap();
        assert!(b.backward(&cache, y.view()).is_err());
    }
}
