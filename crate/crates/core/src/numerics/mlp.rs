//! Feed-forward networks with smooth activations.
//!
//! Batched inputs are row-major: one sample per row. Weights are stored as
//! `(out, in)` so a layer computes `x · Wᵀ + b`.
//!
//! Besides the usual forward/backward pair the network exposes two
//! derivative propagations that the geometry code relies on:
//! - forward-mode Jacobians (and their derivatives) w.r.t. the input, used
//!   to build pullback metrics of a decoder;
//! - a value-plus-tangent forward pass with a matching reverse pass, used to
//!   differentiate a curve network's time derivative w.r.t. its weights.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, Array3, Array4, ArrayView1, ArrayView2, Axis};
use rand::Rng;

use super::{Activation, Real};
use crate::error::{check_dim, Error, Result};

/// A dense layer `h = f(x · Wᵀ + b)`, optionally with an identity skip `h += x`.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer<T> {
    weight: Array2<T>,
    bias: Array1<T>,
    activation: Activation,
    residual: bool,
}

impl<T: Real> Layer<T> {
    pub fn new(weight: Array2<T>, bias: Array1<T>, activation: Activation, residual: bool) -> Result<Self> {
        let (rows, cols) = weight.dim();
        check_dim("layer bias", rows, bias.len())?;
        if residual && rows != cols {
            return Err(Error::InvalidNetwork(format!(
                "residual layer must be square, got {rows}x{cols}"
            )));
        }
        if weight.iter().chain(bias.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("layer parameters".into()));
        }
        Ok(Self {
            weight: weight.as_standard_layout().into_owned(),
            bias,
            activation,
            residual,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn weight(&self) -> &Array2<T> {
        &self.weight
    }

    pub fn bias(&self) -> &Array1<T> {
        &self.bias
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn is_residual(&self) -> bool {
        self.residual
    }

    fn affine(&self, x: ArrayView2<T>) -> Array2<T> {
        let mut a = standard(x.dot(&self.weight.t()));
        a += &self.bias;
        a
    }
}

/// Shape of one layer, used to initialize a network.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerSpec {
    pub units: usize,
    pub activation: Activation,
    pub residual: bool,
}

impl LayerSpec {
    pub fn dense(units: usize, activation: Activation) -> Self {
        Self {
            units,
            activation,
            residual: false,
        }
    }

    pub fn residual(units: usize, activation: Activation) -> Self {
        Self {
            units,
            activation,
            residual: true,
        }
    }
}

/// Multilayer perceptron. A network with no layers is the identity map.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp<T> {
    input_dim: usize,
    layers: Vec<Layer<T>>,
}

/// Intermediate values of a batched forward pass, needed by [`Mlp::backward`].
#[derive(Clone, Debug)]
pub struct Trace<T> {
    inputs: Vec<Array2<T>>,
    slopes: Vec<Array2<T>>,
    output: Array2<T>,
}

impl<T> Trace<T> {
    pub fn output(&self) -> &Array2<T> {
        &self.output
    }
}

/// Intermediate values of a value-plus-tangent forward pass.
#[derive(Clone, Debug)]
pub struct TangentTrace<T> {
    inputs: Vec<Array2<T>>,
    input_tangents: Vec<Array2<T>>,
    pre_tangents: Vec<Array2<T>>,
    slopes: Vec<Array2<T>>,
    curvatures: Vec<Array2<T>>,
    output: Array2<T>,
    output_tangent: Array2<T>,
}

impl<T> TangentTrace<T> {
    pub fn output(&self) -> &Array2<T> {
        &self.output
    }

    pub fn output_tangent(&self) -> &Array2<T> {
        &self.output_tangent
    }
}

/// Parameter gradients laid out like the network (weights then bias per layer).
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<T> {
    pub weights: Vec<Array2<T>>,
    pub biases: Vec<Array1<T>>,
}

impl<T: Real> Gradients<T> {
    pub fn zeros_for(net: &Mlp<T>) -> Self {
        Self {
            weights: net.layers.iter().map(|l| Array2::zeros(l.weight.raw_dim())).collect(),
            biases: net.layers.iter().map(|l| Array1::zeros(l.bias.len())).collect(),
        }
    }

    pub fn reset(&mut self) {
        self.weights.iter_mut().for_each(|w| w.fill(T::zero()));
        self.biases.iter_mut().for_each(|b| b.fill(T::zero()));
    }

    pub fn slices(&self) -> Vec<&[T]> {
        let mut out = Vec::with_capacity(2 * self.weights.len());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.push(w.as_slice().expect("standard layout"));
            out.push(b.as_slice().expect("standard layout"));
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }
}

/// Value, input Jacobian and (optionally) input second derivatives at a batch of points.
#[derive(Clone, Debug)]
pub struct Derivatives<T> {
    /// `(batch, out)`
    pub value: Array2<T>,
    /// `(batch, out, in)`, entry `[b, i, j] = ∂x_i/∂z_j`
    pub jacobian: Array3<T>,
    /// `(batch, out, in, in)`, entry `[b, i, j, k] = ∂²x_i/∂z_j∂z_k`
    pub second: Option<Array4<T>>,
}

fn standard<T: Clone, D: ndarray::Dimension>(a: ndarray::Array<T, D>) -> ndarray::Array<T, D> {
    if a.is_standard_layout() {
        a
    } else {
        a.as_standard_layout().into_owned()
    }
}

fn pair_index(dim: usize, j: usize, k: usize) -> usize {
    let (j, k) = if j <= k { (j, k) } else { (k, j) };
    // row-major upper triangle
    j * dim - j * (j + 1) / 2 + k
}

impl<T: Real> Mlp<T> {
    pub fn new(input_dim: usize, layers: Vec<Layer<T>>) -> Result<Self> {
        let mut dim = input_dim;
        let count = layers.len();
        for (i, layer) in layers.iter().enumerate() {
            check_dim("layer input", dim, layer.in_dim())?;
            if i + 1 < count && !layer.activation.has_curvature() {
                return Err(Error::InvalidNetwork(format!(
                    "hidden layer {i} is linear; hidden layers need a nonzero second derivative"
                )));
            }
            dim = layer.out_dim();
        }
        Ok(Self { input_dim, layers })
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init<R: Rng + ?Sized>(input_dim: usize, specs: &[LayerSpec], rng: &mut R) -> Result<Self> {
        let mut layers = Vec::with_capacity(specs.len());
        let mut fan_in = input_dim;
        for spec in specs {
            if spec.units == 0 {
                return Err(Error::InvalidNetwork("layer with zero units".into()));
            }
            let bound = (6.0 / (fan_in + spec.units) as f64).sqrt();
            let weight = Array2::from_shape_fn((spec.units, fan_in), |_| {
                T::lit(rng.random_range(-bound..bound))
            });
            layers.push(Layer::new(weight, Array1::zeros(spec.units), spec.activation, spec.residual)?);
            fan_in = spec.units;
        }
        Self::new(input_dim, layers)
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(self.input_dim, Layer::out_dim)
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// Mutable views of all parameters, in the same order as [`Gradients::slices`].
    pub fn param_slices_mut(&mut self) -> Vec<&mut [T]> {
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for layer in &mut self.layers {
            out.push(layer.weight.as_slice_mut().expect("standard layout"));
            out.push(layer.bias.as_slice_mut().expect("standard layout"));
        }
        out
    }

    pub fn cast<U: Real>(&self) -> Mlp<U> {
        Mlp {
            input_dim: self.input_dim,
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    weight: l.weight.mapv(|v| U::lit(v.as_f64())),
                    bias: l.bias.mapv(|v| U::lit(v.as_f64())),
                    activation: l.activation,
                    residual: l.residual,
                })
                .collect(),
        }
    }

    pub fn forward(&self, z: ArrayView1<T>) -> Result<Array1<T>> {
        check_dim("mlp input", self.input_dim, z.len())?;
        let x = z.insert_axis(Axis(0));
        Ok(self.forward_batch(x)?.index_axis_move(Axis(0), 0))
    }

    pub fn forward_batch(&self, x: ArrayView2<T>) -> Result<Array2<T>> {
        check_dim("mlp input", self.input_dim, x.ncols())?;
        let mut h = x.to_owned();
        for layer in &self.layers {
            let act = layer.activation;
            let mut a = layer.affine(h.view());
            a.mapv_inplace(|v| act.value(v));
            if layer.residual {
                a += &h;
            }
            h = a;
        }
        Ok(h)
    }

    /// Forward pass that keeps what [`Mlp::backward`] needs.
    pub fn forward_trace(&self, x: ArrayView2<T>) -> Result<Trace<T>> {
        check_dim("mlp input", self.input_dim, x.ncols())?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut slopes = Vec::with_capacity(self.layers.len());
        let mut h = x.to_owned();
        for layer in &self.layers {
            let act = layer.activation;
            let mut a = layer.affine(h.view());
            let mut slope = Array2::zeros(a.raw_dim());
            ndarray::Zip::from(&mut a).and(&mut slope).for_each(|v, d| {
                let (f, f1) = act.eval_d1(*v);
                *v = f;
                *d = f1;
            });
            if layer.residual {
                a += &h;
            }
            inputs.push(std::mem::replace(&mut h, a));
            slopes.push(slope);
        }
        Ok(Trace {
            inputs,
            slopes,
            output: h,
        })
    }

    /// Reverse pass. Accumulates parameter gradients into `grads` and returns
    /// the gradient w.r.t. the batch input.
    pub fn backward(&self, trace: &Trace<T>, d_out: ArrayView2<T>, grads: &mut Gradients<T>) -> Array2<T> {
        let mut d = d_out.to_owned();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let da = &d * &trace.slopes[l];
            general_mat_mul(T::one(), &da.t(), &trace.inputs[l], T::one(), &mut grads.weights[l]);
            grads.biases[l] += &da.sum_axis(Axis(0));
            let mut dx = da.dot(&layer.weight);
            if layer.residual {
                dx += &d;
            }
            d = dx;
        }
        d
    }

    /// Forward pass propagating each row's value together with one tangent
    /// (directional derivative along the matching row of `dx`).
    pub fn forward_tangent(&self, x: ArrayView2<T>, dx: ArrayView2<T>) -> Result<TangentTrace<T>> {
        check_dim("mlp input", self.input_dim, x.ncols())?;
        if x.dim() != dx.dim() {
            return Err(Error::ShapeMismatch("tangent seed must match input shape".into()));
        }
        let n = self.layers.len();
        let mut trace = TangentTrace {
            inputs: Vec::with_capacity(n),
            input_tangents: Vec::with_capacity(n),
            pre_tangents: Vec::with_capacity(n),
            slopes: Vec::with_capacity(n),
            curvatures: Vec::with_capacity(n),
            output: x.to_owned(),
            output_tangent: dx.to_owned(),
        };
        for layer in &self.layers {
            let act = layer.activation;
            let h = std::mem::take(&mut trace.output);
            let hd = std::mem::take(&mut trace.output_tangent);
            let mut a = layer.affine(h.view());
            let ad = standard(hd.dot(&layer.weight.t()));
            let mut slope = Array2::zeros(a.raw_dim());
            let mut curv = Array2::zeros(a.raw_dim());
            let mut out_t = Array2::zeros(a.raw_dim());
            ndarray::Zip::from(&mut a)
                .and(&mut slope)
                .and(&mut curv)
                .and(&mut out_t)
                .and(&ad)
                .for_each(|v, d1, d2, t, &adv| {
                    let (f, f1, f2) = act.eval(*v);
                    *v = f;
                    *d1 = f1;
                    *d2 = f2;
                    *t = f1 * adv;
                });
            if layer.residual {
                a += &h;
                out_t += &hd;
            }
            trace.inputs.push(h);
            trace.input_tangents.push(hd);
            trace.pre_tangents.push(ad);
            trace.slopes.push(slope);
            trace.curvatures.push(curv);
            trace.output = a;
            trace.output_tangent = out_t;
        }
        Ok(trace)
    }

    /// Reverse pass through [`Mlp::forward_tangent`]: given gradients w.r.t.
    /// the output values and output tangents, accumulates parameter gradients
    /// and returns gradients w.r.t. the input values and input tangents.
    pub fn backward_tangent(
        &self,
        trace: &TangentTrace<T>,
        d_out: ArrayView2<T>,
        d_tangent: ArrayView2<T>,
        grads: &mut Gradients<T>,
    ) -> (Array2<T>, Array2<T>) {
        let mut d = standard(d_out.to_owned());
        let mut dt = standard(d_tangent.to_owned());
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let mut da = Array2::zeros(d.raw_dim());
            let mut dad = Array2::zeros(d.raw_dim());
            {
                let (dv, dtv) = (d.as_slice().expect("standard"), dt.as_slice().expect("standard"));
                let f1 = trace.slopes[l].as_slice().expect("standard");
                let f2 = trace.curvatures[l].as_slice().expect("standard");
                let ad = trace.pre_tangents[l].as_slice().expect("standard");
                let das = da.as_slice_mut().expect("standard");
                let dads = dad.as_slice_mut().expect("standard");
                for i in 0..das.len() {
                    das[i] = dv[i] * f1[i] + dtv[i] * f2[i] * ad[i];
                    dads[i] = dtv[i] * f1[i];
                }
            }
            general_mat_mul(T::one(), &da.t(), &trace.inputs[l], T::one(), &mut grads.weights[l]);
            general_mat_mul(T::one(), &dad.t(), &trace.input_tangents[l], T::one(), &mut grads.weights[l]);
            grads.biases[l] += &da.sum_axis(Axis(0));
            let mut dx = standard(da.dot(&layer.weight));
            let mut dxt = standard(dad.dot(&layer.weight));
            if layer.residual {
                dx += &d;
                dxt += &dt;
            }
            d = dx;
            dt = dxt;
        }
        (d, dt)
    }

    /// Forward-mode input derivatives at every row of `z`.
    pub fn derivatives(&self, z: ArrayView2<T>, second_order: bool) -> Result<Derivatives<T>> {
        let dim = self.input_dim;
        check_dim("mlp input", dim, z.ncols())?;
        let batch = z.nrows();
        let pairs = if second_order { dim * (dim + 1) / 2 } else { 0 };
        let blocks = 1 + dim + pairs;

        // block 0: value, 1..=dim: first tangents, then upper-triangle second tangents
        let mut state = Array3::<T>::zeros((blocks, batch, dim));
        state.slice_mut(s![0, .., ..]).assign(&z);
        for j in 0..dim {
            state.slice_mut(s![1 + j, .., j]).fill(T::one());
        }

        for layer in &self.layers {
            let width = layer.out_dim();
            let in_width = layer.in_dim();
            let flat = state
                .view()
                .into_shape_with_order((blocks * batch, in_width))
                .expect("contiguous state");
            let a = standard(flat.dot(&layer.weight.t()));
            let mut a = a.into_shape_with_order((blocks, batch, width)).expect("contiguous");
            {
                let mut v = a.index_axis_mut(Axis(0), 0);
                v += &layer.bias;
            }
            let act = layer.activation;
            let av = a.as_slice().expect("standard layout");
            let mut next = Array3::<T>::zeros((blocks, batch, width));
            let nv = next.as_slice_mut().expect("standard layout");
            let stride = batch * width;
            for idx in 0..stride {
                let (f, f1, f2) = act.eval(av[idx]);
                nv[idx] = f;
                for j in 0..dim {
                    nv[(1 + j) * stride + idx] = f1 * av[(1 + j) * stride + idx];
                }
                if second_order {
                    for j in 0..dim {
                        for k in j..dim {
                            let p = 1 + dim + pair_index(dim, j, k);
                            nv[p * stride + idx] = f2 * av[(1 + j) * stride + idx] * av[(1 + k) * stride + idx]
                                + f1 * av[p * stride + idx];
                        }
                    }
                }
            }
            if layer.residual {
                next += &state;
            }
            state = next;
        }

        let out = self.output_dim();
        let value = state.index_axis(Axis(0), 0).to_owned();
        let mut jacobian = Array3::<T>::zeros((batch, out, dim));
        for j in 0..dim {
            jacobian
                .slice_mut(s![.., .., j])
                .assign(&state.index_axis(Axis(0), 1 + j));
        }
        let second = second_order.then(|| {
            let mut h = Array4::<T>::zeros((batch, out, dim, dim));
            for j in 0..dim {
                for k in 0..dim {
                    let p = 1 + dim + pair_index(dim, j, k);
                    h.slice_mut(s![.., .., j, k]).assign(&state.index_axis(Axis(0), p));
                }
            }
            h
        });
        Ok(Derivatives {
            value,
            jacobian,
            second,
        })
    }

    /// `∂x/∂z` at a single point, shape `(output_dim, input_dim)`.
    pub fn jacobian(&self, z: ArrayView1<T>) -> Result<Array2<T>> {
        let d = self.derivatives(z.insert_axis(Axis(0)), false)?;
        Ok(d.jacobian.index_axis_move(Axis(0), 0))
    }

    /// `∂²x_i/∂z_j∂z_k` at a single point, shape `(output_dim, input_dim, input_dim)`.
    pub fn jacobian_dz(&self, z: ArrayView1<T>) -> Result<Array3<T>> {
        let d = self.derivatives(z.insert_axis(Axis(0)), true)?;
        Ok(d.second.expect("requested").index_axis_move(Axis(0), 0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::finite_diff::{max_relative_error, FD_STEP};
    use ndarray::{array, Array};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn single(weight: Array2<f64>, act: Activation) -> Mlp<f64> {
        let n = weight.nrows();
        Mlp::new(weight.ncols(), vec![Layer::new(weight, Array1::zeros(n), act, false).unwrap()]).unwrap()
    }

    fn random_points(dim: usize, count: usize, seed: u64) -> Vec<Array1<f64>> {
        let mut r = rng(seed);
        (0..count)
            .map(|_| Array::from_shape_fn(dim, |_| r.random_range(-1.5..1.5)))
            .collect()
    }

    /// Straightforward per-sample evaluation, independent of the batched code.
    fn naive_forward(net: &Mlp<f64>, z: &[f64]) -> Vec<f64> {
        let mut h = z.to_vec();
        for layer in net.layers() {
            let w = layer.weight();
            let mut next = vec![0.0; w.nrows()];
            for (i, out) in next.iter_mut().enumerate() {
                let mut a = layer.bias()[i];
                for (j, hj) in h.iter().enumerate() {
                    a += w[[i, j]] * hj;
                }
                *out = layer.activation().value(a) + if layer.is_residual() { h[i] } else { 0.0 };
            }
            h = next;
        }
        h
    }

    #[test]
    fn identity_and_sigmoid_layers() {
        let id = single(Array2::eye(2), Activation::Linear);
        assert_eq!(id.forward(array![1.0, 2.0].view()).unwrap(), array![1.0, 2.0]);
        let sig = single(Array2::eye(2), Activation::Sigmoid);
        assert_eq!(sig.forward(array![0.0, 0.0].view()).unwrap(), array![0.5, 0.5]);
        let j = sig.jacobian(array![0.0, 0.0].view()).unwrap();
        assert_eq!(j, Array2::<f64>::eye(2) * 0.25);
    }

    #[test]
    fn linear_jacobian_is_weight() {
        let w = array![[1.0, -2.0], [0.5, 3.0], [4.0, 0.0]];
        let net = single(w.clone(), Activation::Linear);
        for z in random_points(2, 4, 1) {
            assert_eq!(net.jacobian(z.view()).unwrap(), w);
            assert!(net.jacobian_dz(z.view()).unwrap().iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn tanh_layer_second_derivative_vanishes_at_origin() {
        let net = single(Array2::eye(3), Activation::Tanh);
        let h = net.jacobian_dz(Array1::zeros(3).view()).unwrap();
        assert!(h.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn forward_matches_naive_evaluator() {
        let net = Mlp::<f64>::init(
            3,
            &[LayerSpec::dense(8, Activation::Tanh), LayerSpec::dense(4, Activation::Tanh)],
            &mut rng(42),
        )
        .unwrap();
        let z = array![0.3, -0.7, 1.1];
        let fast = net.forward(z.view()).unwrap();
        let slow = naive_forward(&net, z.as_slice().unwrap());
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let net = single(Array2::eye(2), Activation::Tanh);
        assert!(matches!(
            net.forward(array![1.0].view()),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(net.jacobian(array![1.0, 2.0, 3.0].view()).is_err());
    }

    #[test]
    fn hidden_linear_layers_are_rejected() {
        let l1 = Layer::new(Array2::<f64>::eye(2), Array1::zeros(2), Activation::Linear, false).unwrap();
        let l2 = Layer::new(Array2::<f64>::eye(2), Array1::zeros(2), Activation::Tanh, false).unwrap();
        assert!(matches!(Mlp::new(2, vec![l1, l2]), Err(Error::InvalidNetwork(_))));
    }

    #[test]
    fn jacobians_match_finite_differences() {
        let specs = [
            LayerSpec::dense(12, Activation::Tanh),
            LayerSpec::dense(9, Activation::Softplus),
            LayerSpec::dense(5, Activation::Sigmoid),
        ];
        let net = Mlp::<f64>::init(3, &specs, &mut rng(7)).unwrap();
        let pts = random_points(3, 10, 8);
        let err = max_relative_error(
            |z| net.forward(z).unwrap(),
            |z| net.jacobian(z).unwrap(),
            &pts,
            FD_STEP,
        );
        assert!(err < 1e-5, "jacobian err {err}");
    }

    #[test]
    fn jacobian_derivative_matches_finite_differences_and_is_symmetric() {
        let specs = [LayerSpec::dense(10, Activation::Softplus), LayerSpec::dense(4, Activation::Softplus)];
        let net = Mlp::<f64>::init(3, &specs, &mut rng(9)).unwrap();
        for z in random_points(3, 6, 10) {
            let h = net.jacobian_dz(z.view()).unwrap();
            let step = 1e-5;
            for k in 0..3 {
                let mut zp = z.clone();
                let mut zm = z.clone();
                zp[k] += step;
                zm[k] -= step;
                let fd = (net.jacobian(zp.view()).unwrap() - net.jacobian(zm.view()).unwrap()) / (2.0 * step);
                let an = h.slice(s![.., .., k]);
                let num = (&an - &fd).mapv(f64::abs).sum();
                let den = fd.mapv(f64::abs).sum().max(1e-12);
                assert!(num / den < 1e-4);
            }
            for i in 0..4 {
                for j in 0..3 {
                    for k in 0..3 {
                        assert!((h[[i, j, k]] - h[[i, k, j]]).abs() < 1e-10);
                    }
                }
            }
        }
    }

    #[test]
    fn residual_network_derivatives() {
        let specs = [
            LayerSpec::dense(6, Activation::Tanh),
            LayerSpec::residual(6, Activation::Tanh),
            LayerSpec::residual(6, Activation::Tanh),
            LayerSpec::dense(4, Activation::Sigmoid),
        ];
        let net = Mlp::<f64>::init(2, &specs, &mut rng(11)).unwrap();
        let z = array![0.2, -0.4];
        let slow = naive_forward(&net, z.as_slice().unwrap());
        let fast = net.forward(z.view()).unwrap();
        assert!(fast.iter().zip(&slow).all(|(a, b)| (a - b).abs() < 1e-14));
        let err = max_relative_error(
            |z| net.forward(z).unwrap(),
            |z| net.jacobian(z).unwrap(),
            &random_points(2, 5, 12),
            FD_STEP,
        );
        assert!(err < 1e-5);
    }

    fn loss_and_grads(net: &Mlp<f64>, x: &Array2<f64>, target: &Array2<f64>) -> (f64, Gradients<f64>) {
        let trace = net.forward_trace(x.view()).unwrap();
        let diff = trace.output() - target;
        let loss = 0.5 * diff.mapv(|v| v * v).sum();
        let mut g = Gradients::zeros_for(net);
        net.backward(&trace, diff.view(), &mut g);
        (loss, g)
    }

    #[test]
    fn parameter_gradients_match_finite_differences() {
        let specs = [LayerSpec::dense(5, Activation::Tanh), LayerSpec::residual(5, Activation::Softplus), LayerSpec::dense(2, Activation::Sigmoid)];
        let net = Mlp::<f64>::init(3, &specs, &mut rng(3)).unwrap();
        let x = Array2::from_shape_fn((4, 3), |(i, j)| 0.3 * i as f64 - 0.2 * j as f64);
        let target = Array2::from_shape_fn((4, 2), |(i, j)| 0.1 * (i + j) as f64);
        let (_, g) = loss_and_grads(&net, &x, &target);
        let analytic: Vec<f64> = g.slices().concat();
        let n = analytic.len();
        let h = 1e-6;
        for idx in (0..n).step_by(3) {
            let mut plus = net.clone();
            let mut minus = net.clone();
            bump(&mut plus, idx, h);
            bump(&mut minus, idx, -h);
            let fd = (loss_and_grads(&plus, &x, &target).0 - loss_and_grads(&minus, &x, &target).0) / (2.0 * h);
            assert!((fd - analytic[idx]).abs() < 1e-7 * (1.0 + fd.abs()), "param {idx}");
        }
    }

    fn bump(net: &mut Mlp<f64>, mut idx: usize, h: f64) {
        for s in net.param_slices_mut() {
            if idx < s.len() {
                s[idx] += h;
                return;
            }
            idx -= s.len();
        }
    }

    #[test]
    fn tangent_pass_matches_jacobian_and_its_gradients() {
        let specs = [LayerSpec::dense(7, Activation::Tanh), LayerSpec::dense(7, Activation::Tanh), LayerSpec::dense(2, Activation::Linear)];
        let net = Mlp::<f64>::init(1, &specs, &mut rng(5)).unwrap();
        let t = Array2::from_shape_fn((5, 1), |(i, _)| i as f64 / 4.0);
        let seed = Array2::ones((5, 1));
        let tr = net.forward_tangent(t.view(), seed.view()).unwrap();
        for i in 0..5 {
            let j = net.jacobian(t.row(i)).unwrap();
            for k in 0..2 {
                assert!((tr.output_tangent()[[i, k]] - j[[k, 0]]).abs() < 1e-13);
            }
        }
        // loss = Σ c·value + Σ e·tangent
        let c = Array2::from_shape_fn((5, 2), |(i, k)| 0.3 + 0.1 * i as f64 - 0.2 * k as f64);
        let e = Array2::from_shape_fn((5, 2), |(i, k)| -0.5 + 0.05 * (i * k) as f64);
        let loss = |n: &Mlp<f64>| {
            let tr = n.forward_tangent(t.view(), seed.view()).unwrap();
            (tr.output() * &c).sum() + (tr.output_tangent() * &e).sum()
        };
        let mut g = Gradients::zeros_for(&net);
        net.backward_tangent(&tr, c.view(), e.view(), &mut g);
        let analytic: Vec<f64> = g.slices().concat();
        let h = 1e-6;
        for idx in 0..analytic.len() {
            let mut plus = net.clone();
            let mut minus = net.clone();
            bump(&mut plus, idx, h);
            bump(&mut minus, idx, -h);
            let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
            assert!((fd - analytic[idx]).abs() < 1e-7 * (1.0 + fd.abs()), "param {idx}: {fd} vs {}", analytic[idx]);
        }
    }

    #[test]
    fn batched_derivatives_agree_with_single_point() {
        let specs = [LayerSpec::dense(6, Activation::Softplus), LayerSpec::dense(3, Activation::Tanh)];
        let net = Mlp::<f64>::init(2, &specs, &mut rng(21)).unwrap();
        let z = Array2::from_shape_fn((4, 2), |(i, j)| 0.25 * i as f64 - 0.5 * j as f64);
        let d = net.derivatives(z.view(), true).unwrap();
        for b in 0..4 {
            let j = net.jacobian(z.row(b)).unwrap();
            assert_eq!(d.jacobian.index_axis(Axis(0), b), j);
            let h = net.jacobian_dz(z.row(b)).unwrap();
            assert_eq!(d.second.as_ref().unwrap().index_axis(Axis(0), b), h);
            assert_eq!(d.value.row(b), net.forward(z.row(b)).unwrap());
        }
    }

    #[test]
    fn works_in_single_precision() {
        let net = Mlp::<f32>::init(2, &[LayerSpec::dense(4, Activation::Tanh), LayerSpec::dense(3, Activation::Sigmoid)], &mut rng(1)).unwrap();
        let j = net.jacobian(ndarray::arr1(&[0.1f32, 0.2]).view()).unwrap();
        assert_eq!(j.dim(), (3, 2));
        let wide: Mlp<f64> = net.cast();
        let j64 = wide.jacobian(ndarray::arr1(&[0.1, 0.2]).view()).unwrap();
        assert!((j64[[0, 0]] - j[[0, 0]] as f64).abs() < 1e-5);
    }
}
