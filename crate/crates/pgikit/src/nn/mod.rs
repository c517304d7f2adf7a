//! Minimal shared-MLP machinery with hand-derived reverse-mode gradients.
//!
//! A stack applies the same dense layers independently to every row of its
//! input ("shared" across a point set), which is all the flattening and
//! embedding networks need. Training is plain gradient descent with
//! momentum; no adaptive state.

pub mod flatten;

use ndarray::{Array1, Array2, Axis};
use rand::Rng;

use crate::error::{Error, Result};
use crate::geom::PointCloud;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
    Identity,
}

impl Activation {
    pub fn tag(self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::Sigmoid => 1,
            Activation::Identity => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(Activation::Relu),
            1 => Ok(Activation::Sigmoid),
            2 => Ok(Activation::Identity),
            other => Err(Error::format(format!("unknown activation tag {other}"))),
        }
    }

    fn apply(self, z: &Array2<f64>) -> Array2<f64> {
        match self {
            Activation::Relu => z.mapv(|v| v.max(0.0)),
            Activation::Sigmoid => z.mapv(|v| 1.0 / (1.0 + (-v).exp())),
            Activation::Identity => z.clone(),
        }
    }

    /// Derivative as a mask over the upstream gradient, using whichever of
    /// pre-activation / output the activation needs.
    fn chain(self, upstream: &Array2<f64>, pre: &Array2<f64>, post: &Array2<f64>) -> Array2<f64> {
        match self {
            Activation::Relu => {
                let mut out = upstream.clone();
                out.zip_mut_with(pre, |g, &z| {
                    if z <= 0.0 {
                        *g = 0.0;
                    }
                });
                out
            }
            Activation::Sigmoid => {
                let mut out = upstream.clone();
                out.zip_mut_with(post, |g, &s| *g *= s * (1.0 - s));
                out
            }
            Activation::Identity => upstream.clone(),
        }
    }
}

/// One dense layer: `out = act(W x + b)` with `W` stored row-major as
/// `out x in`.
#[derive(Debug, Clone)]
pub struct Layer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn input_width(&self) -> usize {
        self.weights.ncols()
    }

    pub fn output_width(&self) -> usize {
        self.weights.nrows()
    }
}

/// A shared multi-layer perceptron applied row-wise to a set of vectors.
#[derive(Debug, Clone)]
pub struct MlpStack {
    layers: Vec<Layer>,
}

/// Forward intermediates kept for the backward pass.
pub struct MlpCache {
    pre: Vec<Array2<f64>>,
    post: Vec<Array2<f64>>,
}

/// Per-layer parameter gradients, shaped like the stack itself.
#[derive(Debug, Clone)]
pub struct MlpGradients {
    pub layers: Vec<(Array2<f64>, Array1<f64>)>,
}

impl MlpStack {
    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid_argument("mlp needs at least one layer"));
        }
        for w in layers.windows(2) {
            if w[0].output_width() != w[1].input_width() {
                return Err(Error::invalid_argument(format!(
                    "layer widths do not chain: {} -> {}",
                    w[0].output_width(),
                    w[1].input_width()
                )));
            }
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.output_width() {
                return Err(Error::invalid_argument(format!(
                    "layer {i} bias length {} does not match {} outputs",
                    l.bias.len(),
                    l.output_width()
                )));
            }
            if l.weights.iter().any(|v| !v.is_finite()) || l.bias.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid_input(format!(
                    "layer {i} holds non-finite parameters"
                )));
            }
        }
        Ok(Self { layers })
    }

    /// Xavier-uniform initialization, deterministic for a given rng state.
    pub fn seeded(dims: &[usize], activations: &[Activation], rng: &mut impl Rng) -> Self {
        assert_eq!(dims.len(), activations.len() + 1, "dims/activations mismatch");
        let layers = dims
            .windows(2)
            .zip(activations)
            .map(|(d, &activation)| {
                let (fan_in, fan_out) = (d[0], d[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let weights = Array2::from_shape_fn((fan_out, fan_in), |_| {
                    rng.random_range(-limit..limit)
                });
                Layer {
                    weights,
                    bias: Array1::zeros(fan_out),
                    activation,
                }
            })
            .collect();
        Self { layers }
    }

    /// All-zero parameters; handy for tests and deliberate blank heads.
    pub fn zeroed(dims: &[usize], activations: &[Activation]) -> Self {
        assert_eq!(dims.len(), activations.len() + 1, "dims/activations mismatch");
        let layers = dims
            .windows(2)
            .zip(activations)
            .map(|(d, &activation)| Layer {
                weights: Array2::zeros((d[1], d[0])),
                bias: Array1::zeros(d[1]),
                activation,
            })
            .collect();
        Self { layers }
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].input_width()
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().unwrap().output_width()
    }

    pub fn last_activation(&self) -> Activation {
        self.layers.last().unwrap().activation
    }

    /// Applies the stack independently to every row of `xs`.
    pub fn forward(&self, xs: &Array2<f64>) -> Result<Array2<f64>> {
        self.check_input(xs)?;
        let mut current = xs.clone();
        for layer in &self.layers {
            let z = current.dot(&layer.weights.t()) + &layer.bias;
            current = layer.activation.apply(&z);
        }
        Ok(current)
    }

    pub fn forward_cached(&self, xs: &Array2<f64>) -> Result<(Array2<f64>, MlpCache)> {
        self.check_input(xs)?;
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post = Vec::with_capacity(self.layers.len());
        let mut current = xs.clone();
        for layer in &self.layers {
            let z = current.dot(&layer.weights.t()) + &layer.bias;
            current = layer.activation.apply(&z);
            pre.push(z);
            post.push(current.clone());
        }
        Ok((current, MlpCache { pre, post }))
    }

    /// Reverse-mode gradients given a cached forward pass. Returns parameter
    /// gradients and the gradient with respect to `xs`.
    pub fn backward(
        &self,
        xs: &Array2<f64>,
        cache: &MlpCache,
        upstream: &Array2<f64>,
    ) -> (MlpGradients, Array2<f64>) {
        assert_eq!(upstream.ncols(), self.output_width(), "upstream width");
        assert_eq!(upstream.nrows(), xs.nrows(), "upstream rows");
        let mut grads = vec![(Array2::zeros((0, 0)), Array1::zeros(0)); self.layers.len()];
        let mut grad_out = upstream.clone();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let dz = layer
                .activation
                .chain(&grad_out, &cache.pre[l], &cache.post[l]);
            let input = if l == 0 { xs } else { &cache.post[l - 1] };
            let dw = dz.t().dot(input);
            let db = dz.sum_axis(Axis(0));
            grad_out = dz.dot(&layer.weights);
            grads[l] = (dw, db);
        }
        (MlpGradients { layers: grads }, grad_out)
    }

    /// Convenience wrapper: forward then backward in one call, validating
    /// the upstream shape against the forward output.
    pub fn backprop(
        &self,
        xs: &Array2<f64>,
        upstream: &Array2<f64>,
    ) -> Result<(MlpGradients, Array2<f64>)> {
        let (out, cache) = self.forward_cached(xs)?;
        if upstream.dim() != out.dim() {
            return Err(Error::invalid_argument(format!(
                "upstream gradient shape {:?} does not match output shape {:?}",
                upstream.dim(),
                out.dim()
            )));
        }
        Ok(self.backward(xs, &cache, upstream))
    }

    fn check_input(&self, xs: &Array2<f64>) -> Result<()> {
        if xs.ncols() != self.input_width() {
            return Err(Error::invalid_argument(format!(
                "input width {} does not match first layer width {}",
                xs.ncols(),
                self.input_width()
            )));
        }
        Ok(())
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }
}

/// Gradient-descent-with-momentum state for one stack.
pub struct MomentumSgd {
    learning_rate: f64,
    momentum: f64,
    velocity: Vec<(Array2<f64>, Array1<f64>)>,
}

impl MomentumSgd {
    pub fn new(net: &MlpStack, learning_rate: f64, momentum: f64) -> Self {
        let velocity = net
            .layers
            .iter()
            .map(|l| {
                (
                    Array2::zeros(l.weights.raw_dim()),
                    Array1::zeros(l.bias.raw_dim()),
                )
            })
            .collect();
        Self {
            learning_rate,
            momentum,
            velocity,
        }
    }

    pub fn step(&mut self, net: &mut MlpStack, grads: &MlpGradients) {
        for ((layer, vel), grad) in net
            .layers
            .iter_mut()
            .zip(&mut self.velocity)
            .zip(&grads.layers)
        {
            vel.0.zip_mut_with(&grad.0, |v, &g| {
                *v = self.momentum * *v - self.learning_rate * g
            });
            vel.1.zip_mut_with(&grad.1, |v, &g| {
                *v = self.momentum * *v - self.learning_rate * g
            });
            layer.weights += &vel.0;
            layer.bias += &vel.1;
        }
    }
}

/// A fixed-length set descriptor produced by channel-wise max pooling.
#[derive(Debug, Clone, PartialEq)]
pub struct Codeword {
    values: Array1<f64>,
}

impl Codeword {
    pub fn new(values: Array1<f64>) -> Self {
        Self { values }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &Array1<f64> {
        &self.values
    }
}

/// Channel-wise max over rows, also reporting which row won each channel
/// (lowest row index on ties) so gradients can be routed back.
pub(crate) fn maxpool_columns(xs: &Array2<f64>) -> (Array1<f64>, Vec<usize>) {
    assert!(xs.nrows() > 0);
    let mut values = Array1::from_elem(xs.ncols(), f64::NEG_INFINITY);
    let mut argmax = vec![0usize; xs.ncols()];
    for (r, row) in xs.rows().into_iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            if v > values[c] {
                values[c] = v;
                argmax[c] = r;
            }
        }
    }
    (values, argmax)
}

/// Runs the encoder over every point and max-pools channel-wise into a
/// codeword. Exactly permutation invariant: the pooled maxima do not depend
/// on row order.
pub fn encode_codeword(encoder: &MlpStack, pc: &PointCloud) -> Result<Codeword> {
    let xs = points_matrix(pc);
    let out = encoder.forward(&xs)?;
    let (values, _) = maxpool_columns(&out);
    Ok(Codeword::new(values))
}

pub(crate) fn points_matrix(pc: &PointCloud) -> Array2<f64> {
    let mut xs = Array2::zeros((pc.len(), 3));
    for (i, p) in pc.points().iter().enumerate() {
        xs[[i, 0]] = p[0];
        xs[[i, 1]] = p[1];
        xs[[i, 2]] = p[2];
    }
    xs
}

/// Broadcasts a codeword onto every row of `xs` as extra trailing columns.
pub(crate) fn concat_codeword(xs: &Array2<f64>, z: &Codeword) -> Array2<f64> {
    let (n, w) = xs.dim();
    let d = z.dim();
    let mut out = Array2::zeros((n, w + d));
    for r in 0..n {
        for c in 0..w {
            out[[r, c]] = xs[[r, c]];
        }
        for c in 0..d {
            out[[r, w + c]] = z.values()[c];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn seeded_net(dims: &[usize], acts: &[Activation], seed: u64) -> MlpStack {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        MlpStack::seeded(dims, acts, &mut rng)
    }

    #[test]
    fn identity_layer_passes_through() {
        let net = MlpStack::from_layers(vec![Layer {
            weights: Array2::eye(3),
            bias: Array1::zeros(3),
            activation: Activation::Identity,
        }])
        .unwrap();
        let xs = array![[1.0, -2.0, 3.0], [0.5, 0.0, -0.25]];
        assert_eq!(net.forward(&xs).unwrap(), xs);
    }

    #[test]
    fn zero_weights_relu_gives_relu_bias() {
        let mut net = MlpStack::zeroed(&[3, 2], &[Activation::Relu]);
        net.layers_mut()[0].bias = array![0.7, -0.4];
        let xs = array![[1.0, 2.0, 3.0], [-1.0, 0.0, 5.0]];
        let out = net.forward(&xs).unwrap();
        for r in 0..2 {
            assert_eq!(out[[r, 0]], 0.7);
            assert_eq!(out[[r, 1]], 0.0);
        }
    }

    #[test]
    fn forward_matches_scalar_oracle() {
        let net = seeded_net(&[3, 4, 2], &[Activation::Relu, Activation::Sigmoid], 42);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let xs = Array2::from_shape_fn((5, 3), |_| rng.random_range(-1.0..1.0));
        let got = net.forward(&xs).unwrap();

        // Independent scalar-arithmetic evaluation of the same dataflow.
        for r in 0..5 {
            let mut v: Vec<f64> = xs.row(r).to_vec();
            for layer in net.layers() {
                let mut next = vec![0.0; layer.output_width()];
                for o in 0..layer.output_width() {
                    let mut acc = layer.bias[o];
                    for i in 0..layer.input_width() {
                        acc += layer.weights[[o, i]] * v[i];
                    }
                    next[o] = match layer.activation {
                        Activation::Relu => acc.max(0.0),
                        Activation::Sigmoid => 1.0 / (1.0 + (-acc).exp()),
                        Activation::Identity => acc,
                    };
                }
                v = next;
            }
            for (c, &expect) in v.iter().enumerate() {
                assert!((got[[r, c]] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn forward_rejects_width_mismatch() {
        let net = seeded_net(&[3, 2], &[Activation::Identity], 0);
        let xs = Array2::<f64>::zeros((4, 5));
        assert!(net.forward(&xs).is_err());
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let net = seeded_net(&[3, 4, 2], &[Activation::Relu, Activation::Identity], 3);
        let xs = Array2::from_elem((6, 3), 0.3);
        let upstream = Array2::zeros((6, 2));
        let (grads, dx) = net.backprop(&xs, &upstream).unwrap();
        assert!(dx.iter().all(|&v| v == 0.0));
        for (dw, db) in &grads.layers {
            assert!(dw.iter().all(|&v| v == 0.0));
            assert!(db.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn linear_layer_sum_loss_grad_is_input_sum() {
        // loss = sum of outputs of a single identity-activation layer:
        // dW[o][i] = sum_r x[r][i], db[o] = n.
        let net = seeded_net(&[3, 2], &[Activation::Identity], 7);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let xs = Array2::from_shape_fn((5, 3), |_| rng.random_range(-1.0..1.0));
        let upstream = Array2::ones((5, 2));
        let (grads, _) = net.backprop(&xs, &upstream).unwrap();
        let col_sums = xs.sum_axis(Axis(0));
        for o in 0..2 {
            for i in 0..3 {
                assert!((grads.layers[0].0[[o, i]] - col_sums[i]).abs() < 1e-12);
            }
            assert_eq!(grads.layers[0].1[o], 5.0);
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut net = seeded_net(&[3, 5, 2], &[Activation::Relu, Activation::Sigmoid], 11);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let xs = Array2::from_shape_fn((4, 3), |_| rng.random_range(-1.0..1.0));
        // Generic scalar loss: weighted sum of outputs.
        let cs = Array2::from_shape_fn((4, 2), |_| rng.random_range(-1.0..1.0));
        let loss = |net: &MlpStack, xs: &Array2<f64>| -> f64 {
            (net.forward(xs).unwrap() * &cs).sum()
        };
        let (grads, _) = net.backprop(&xs, &cs).unwrap();

        let h = 1e-5;
        for l in 0..net.layers().len() {
            let shape = net.layers()[l].weights.raw_dim();
            for o in 0..shape[0] {
                for i in 0..shape[1] {
                    let orig = net.layers()[l].weights[[o, i]];
                    net.layers_mut()[l].weights[[o, i]] = orig + h;
                    let up = loss(&net, &xs);
                    net.layers_mut()[l].weights[[o, i]] = orig - h;
                    let dn = loss(&net, &xs);
                    net.layers_mut()[l].weights[[o, i]] = orig;
                    let fd = (up - dn) / (2.0 * h);
                    let an = grads.layers[l].0[[o, i]];
                    let denom = fd.abs().max(an.abs()).max(1e-8);
                    assert!(
                        (fd - an).abs() / denom < 1e-4,
                        "layer {l} w[{o},{i}]: fd {fd} vs analytic {an}"
                    );
                }
                let orig = net.layers()[l].bias[o];
                net.layers_mut()[l].bias[o] = orig + h;
                let up = loss(&net, &xs);
                net.layers_mut()[l].bias[o] = orig - h;
                let dn = loss(&net, &xs);
                net.layers_mut()[l].bias[o] = orig;
                let fd = (up - dn) / (2.0 * h);
                let an = grads.layers[l].1[o];
                let denom = fd.abs().max(an.abs()).max(1e-8);
                assert!((fd - an).abs() / denom < 1e-4);
            }
        }
    }

    #[test]
    fn codeword_single_point_is_embedding() {
        let net = seeded_net(&[3, 4], &[Activation::Relu], 21);
        let pc = PointCloud::from_points(vec![[0.2, -0.4, 0.8]]).unwrap();
        let z = encode_codeword(&net, &pc).unwrap();
        let direct = net.forward(&points_matrix(&pc)).unwrap();
        for c in 0..4 {
            assert_eq!(z.values()[c], direct[[0, c]]);
        }
    }

    #[test]
    fn codeword_permutation_and_duplication_invariant() {
        let net = seeded_net(&[3, 8, 16], &[Activation::Relu, Activation::Relu], 22);
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let pts: Vec<[f64; 3]> = (0..20)
            .map(|_| {
                [
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                ]
            })
            .collect();
        let pc = PointCloud::from_points(pts.clone()).unwrap();
        let z = encode_codeword(&net, &pc).unwrap();

        let mut shuffled = pts.clone();
        shuffled.reverse();
        shuffled.swap(3, 11);
        let zs = encode_codeword(&net, &PointCloud::from_points(shuffled).unwrap()).unwrap();
        assert_eq!(z, zs);

        let mut doubled = pts.clone();
        doubled.extend_from_slice(&pts);
        let zd = encode_codeword(&net, &PointCloud::from_points(doubled).unwrap()).unwrap();
        assert_eq!(z, zd);
    }
}
