use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::numerics::{Activation, Gradients, LayerSpec, Mlp, Real, TangentTrace};

/// Raw endpoint differences below this use the blended normalization.
pub const DEGENERATE_GAP: f64 = 1e-8;

/// Hidden width of the curve network.
pub const CURVE_HIDDEN: usize = 150;

/// How raw network outputs are mapped to a curve through the endpoints.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    /// Per-coordinate shift and rescale `z = z0 + A(ẑ(t) − ẑ(0))`,
    /// `A = (z0 − z1)/(ẑ(0) − ẑ(1))`; coordinates with a vanishing raw
    /// gap fall back to [`Normalization::Blend`].
    Rescale,
    /// Affine endpoint correction `z = ẑ(t) + (1−t)(z0 − ẑ(0)) + t(z1 − ẑ(1))`.
    Blend,
}

/// Axis-aligned latent box confining a curve. Coordinates inside
/// `[lower, upper]` pass unchanged; beyond an edge they saturate smoothly
/// (twice differentiable) and never move more than `margin` past it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub margin: Vec<f64>,
}

impl Domain {
    /// Bounding box of the rows of `points`, with a margin of `pad` times its extent per axis.
    pub fn around(points: ArrayView2<f64>, pad: f64) -> Result<Self> {
        if points.nrows() == 0 || !(pad > 0.0 && pad.is_finite()) {
            return Err(Error::InvalidConfig("a domain needs points and a positive pad".into()));
        }
        let mut d = Self {
            lower: Vec::new(),
            upper: Vec::new(),
            margin: Vec::new(),
        };
        for c in points.columns() {
            let (lo, hi) = c.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
            d.lower.push(lo);
            d.upper.push(hi);
            d.margin.push(pad * (hi - lo).max(1e-9));
        }
        d.validate(points.ncols())?;
        Ok(d)
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        check_dim("domain lower corner", dim, self.lower.len())?;
        check_dim("domain upper corner", dim, self.upper.len())?;
        check_dim("domain margin", dim, self.margin.len())?;
        let ok = (0..dim).all(|j| {
            self.lower[j].is_finite() && self.upper[j].is_finite() && self.lower[j] <= self.upper[j] && self.margin[j] > 0.0
        });
        if !ok || self.margin.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidConfig("domain needs finite corners with lower <= upper and positive margins".into()));
        }
        Ok(())
    }

    pub fn contains(&self, z: ArrayView1<f64>) -> bool {
        z.iter().enumerate().all(|(j, &v)| v >= self.lower[j] && v <= self.upper[j])
    }

    /// The confining map of coordinate `j` with its first and second derivative.
    fn squash<T: Real>(&self, j: usize, x: T) -> (T, T, T) {
        let (lo, hi, m) = (T::lit(self.lower[j]), T::lit(self.upper[j]), T::lit(self.margin[j]));
        let two = T::lit(2.0);
        if x > hi {
            let th = ((x - hi) / m).tanh();
            let d1 = T::one() - th * th;
            (hi + m * th, d1, -two * th * d1 / m)
        } else if x < lo {
            let th = ((lo - x) / m).tanh();
            let d1 = T::one() - th * th;
            (lo - m * th, d1, two * th * d1 / m)
        } else {
            (x, T::one(), T::zero())
        }
    }
}

/// A scalar-input network whose normalized output is a latent curve with fixed endpoints.
#[derive(Clone, Debug, PartialEq)]
pub struct CurveNet<T> {
    net: Mlp<T>,
    z0: Array1<T>,
    z1: Array1<T>,
    normalization: Normalization,
    domain: Option<Domain>,
}

/// Normalized samples of a curve plus what the backward pass needs.
pub(crate) struct CurvePass<T> {
    trace: TangentTrace<T>,
    times: Vec<T>,
    /// `(n, Nz)`
    pub z: Array2<T>,
    /// `(n, Nz)`
    pub dz: Array2<T>,
    /// Distance of the normalized ends from `z0` and `z1`.
    pub endpoint_error: T,
    /// Samples and velocities before the domain map, when there is one.
    unconfined: Option<(Array2<T>, Array2<T>)>,
}

impl<T: Real> CurveNet<T> {
    /// Two tanh layers of [`CURVE_HIDDEN`] units and a linear output, Glorot-initialized.
    pub fn new<R: Rng + ?Sized>(
        z0: ArrayView1<T>,
        z1: ArrayView1<T>,
        normalization: Normalization,
        rng: &mut R,
    ) -> Result<Self> {
        let net = Mlp::init(
            1,
            &[
                LayerSpec::dense(CURVE_HIDDEN, Activation::Tanh),
                LayerSpec::dense(CURVE_HIDDEN, Activation::Tanh),
                LayerSpec::dense(z0.len(), Activation::Linear),
            ],
            rng,
        )?;
        Self::from_net(net, z0, z1, normalization)
    }

    pub fn from_net(net: Mlp<T>, z0: ArrayView1<T>, z1: ArrayView1<T>, normalization: Normalization) -> Result<Self> {
        check_dim("curve endpoint", z0.len(), z1.len())?;
        check_dim("curve network input", 1, net.input_dim())?;
        check_dim("curve network output", z0.len(), net.output_dim())?;
        if z0.iter().chain(z1.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("curve endpoints".into()));
        }
        Ok(Self {
            net,
            z0: z0.to_owned(),
            z1: z1.to_owned(),
            normalization,
            domain: None,
        })
    }

    /// Confines the curve to `domain`, which must contain both endpoints.
    pub fn with_domain(mut self, domain: Domain) -> Result<Self> {
        domain.validate(self.dim())?;
        let ends = [self.z0.mapv(|v| v.as_f64()), self.z1.mapv(|v| v.as_f64())];
        if !ends.iter().all(|e| domain.contains(e.view())) {
            return Err(Error::InvalidConfig("curve endpoints lie outside the domain".into()));
        }
        self.domain = Some(domain);
        Ok(self)
    }

    pub fn domain(&self) -> Option<&Domain> {
        self.domain.as_ref()
    }

    pub fn net(&self) -> &Mlp<T> {
        &self.net
    }

    pub(crate) fn net_mut(&mut self) -> &mut Mlp<T> {
        &mut self.net
    }

    pub fn endpoints(&self) -> (ArrayView1<'_, T>, ArrayView1<'_, T>) {
        (self.z0.view(), self.z1.view())
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }

    pub fn dim(&self) -> usize {
        self.z0.len()
    }

    /// Raw outputs `ẑ(t)` and `dẑ/dt` at `times` followed by `t = 0` and `t = 1`.
    fn raw(&self, times: &[T]) -> Result<TangentTrace<T>> {
        let n = times.len();
        let mut x = Array2::zeros((n + 2, 1));
        for (i, &t) in times.iter().enumerate() {
            x[[i, 0]] = t;
        }
        x[[n + 1, 0]] = T::one();
        let dx = Array2::from_elem((n + 2, 1), T::one());
        self.net.forward_tangent(x.view(), dx.view())
    }

    fn is_blended(&self, gap: T) -> bool {
        self.normalization == Normalization::Blend || gap.abs() < T::lit(DEGENERATE_GAP)
    }

    pub(crate) fn pass(&self, times: &[T]) -> Result<CurvePass<T>> {
        let trace = self.raw(times)?;
        let n = times.len();
        let (raw, raw_dt) = (trace.output(), trace.output_tangent());
        let d = self.dim();
        let mut z = Array2::zeros((n + 2, d));
        let mut dz = Array2::zeros((n + 2, d));
        let all_t: Vec<T> = times.iter().copied().chain([T::zero(), T::one()]).collect();
        for j in 0..d {
            let (h0, h1) = (raw[[n, j]], raw[[n + 1, j]]);
            let gap = h0 - h1;
            if self.is_blended(gap) {
                let (c0, c1) = (self.z0[j] - h0, self.z1[j] - h1);
                for (i, &t) in all_t.iter().enumerate() {
                    z[[i, j]] = raw[[i, j]] + (T::one() - t) * c0 + t * c1;
                    dz[[i, j]] = raw_dt[[i, j]] - c0 + c1;
                }
            } else {
                let a = (self.z0[j] - self.z1[j]) / gap;
                for i in 0..n + 2 {
                    z[[i, j]] = self.z0[j] + a * (raw[[i, j]] - h0);
                    dz[[i, j]] = a * raw_dt[[i, j]];
                }
            }
        }
        let unconfined = self.domain.as_ref().map(|dom| {
            let (y, dy) = (z.clone(), dz.clone());
            for ((i, j), v) in z.indexed_iter_mut() {
                let (f, d1, _) = dom.squash(j, y[[i, j]]);
                *v = f;
                dz[[i, j]] = d1 * dy[[i, j]];
            }
            (y, dy)
        });
        let err0 = (&z.row(n) - &self.z0).iter().fold(T::zero(), |m, v| m.max(v.abs()));
        let err1 = (&z.row(n + 1) - &self.z1).iter().fold(T::zero(), |m, v| m.max(v.abs()));
        let keep = ndarray::s![..n, ..];
        Ok(CurvePass {
            z: z.slice(keep).to_owned(),
            dz: dz.slice(keep).to_owned(),
            endpoint_error: err0.max(err1),
            unconfined: unconfined.map(|(y, dy)| (y.slice(keep).to_owned(), dy.slice(keep).to_owned())),
            trace,
            times: times.to_vec(),
        })
    }

    /// Curve point and velocity `dz/dt` at `t`.
    pub fn eval(&self, t: T) -> Result<(Array1<T>, Array1<T>)> {
        let p = self.pass(&[t])?;
        Ok((p.z.row(0).to_owned(), p.dz.row(0).to_owned()))
    }

    /// Points and velocities at many parameters, rows in the order of `times`.
    pub fn eval_many(&self, times: &[T]) -> Result<(Array2<T>, Array2<T>)> {
        let p = self.pass(times)?;
        Ok((p.z, p.dz))
    }

    /// Backpropagates gradients w.r.t. the normalized samples of `pass` into
    /// the network parameters (accumulated into `grads`).
    pub(crate) fn backward(
        &self,
        pass: &CurvePass<T>,
        g_z: ArrayView2<T>,
        g_dz: ArrayView2<T>,
        grads: &mut Gradients<T>,
    ) {
        let n = pass.times.len();
        let d = self.dim();
        let confined = self.domain.as_ref().zip(pass.unconfined.as_ref()).map(|(dom, (y, dy))| {
            let (mut gy, mut gdy) = (g_z.to_owned(), g_dz.to_owned());
            for ((i, j), v) in gy.indexed_iter_mut() {
                let (_, d1, d2) = dom.squash(j, y[[i, j]]);
                *v = *v * d1 + g_dz[[i, j]] * d2 * dy[[i, j]];
                gdy[[i, j]] = g_dz[[i, j]] * d1;
            }
            (gy, gdy)
        });
        let (g_z, g_dz) = match &confined {
            Some((gy, gdy)) => (gy.view(), gdy.view()),
            None => (g_z, g_dz),
        };
        let (raw, raw_dt) = (pass.trace.output(), pass.trace.output_tangent());
        let mut d_raw = Array2::<T>::zeros((n + 2, d));
        let mut d_raw_dt = Array2::<T>::zeros((n + 2, d));
        for j in 0..d {
            let (h0, h1) = (raw[[n, j]], raw[[n + 1, j]]);
            let gap = h0 - h1;
            if self.is_blended(gap) {
                let (mut s0, mut s1) = (T::zero(), T::zero());
                for (i, &t) in pass.times.iter().enumerate() {
                    let (gz, gv) = (g_z[[i, j]], g_dz[[i, j]]);
                    d_raw[[i, j]] = gz;
                    d_raw_dt[[i, j]] = gv;
                    s0 += -(T::one() - t) * gz + gv;
                    s1 += -t * gz - gv;
                }
                d_raw[[n, j]] = s0;
                d_raw[[n + 1, j]] = s1;
            } else {
                let a = (self.z0[j] - self.z1[j]) / gap;
                let (mut da, mut sum_gz) = (T::zero(), T::zero());
                for i in 0..n {
                    let (gz, gv) = (g_z[[i, j]], g_dz[[i, j]]);
                    d_raw[[i, j]] = gz * a;
                    d_raw_dt[[i, j]] = gv * a;
                    da += gz * (raw[[i, j]] - h0) + gv * raw_dt[[i, j]];
                    sum_gz += gz;
                }
                let d_gap = -da * a / gap;
                d_raw[[n, j]] = -a * sum_gz + d_gap;
                d_raw[[n + 1, j]] = -d_gap;
            }
        }
        self.net.backward_tangent(&pass.trace, d_raw.view(), d_raw_dt.view(), grads);
    }
}

/// A Bézier curve given by its control points (one per row).
#[derive(Clone, Debug, PartialEq)]
pub struct Bezier<T> {
    control: Array2<T>,
}

/// Unit vectors spanning the orthogonal complement of `d`.
fn complement_basis<T: Real>(d: ArrayView1<T>) -> Vec<Array1<T>> {
    let n = d.len();
    let norm = d.dot(&d).sqrt();
    let mut basis: Vec<Array1<T>> = vec![d.mapv(|v| v / norm)];
    if n == 2 {
        return vec![Array1::from(vec![-d[1] / norm, d[0] / norm])];
    }
    for k in 0..n {
        let mut v = Array1::zeros(n);
        v[k] = T::one();
        for b in &basis {
            let c = v.dot(b);
            v = v - b * c;
        }
        let len = v.dot(&v).sqrt();
        if len > T::lit(1e-6) {
            basis.push(v / len);
        }
        if basis.len() == n {
            break;
        }
    }
    basis.remove(0);
    basis
}

impl<T: Real> Bezier<T> {
    pub fn new(control: Array2<T>) -> Result<Self> {
        if control.nrows() < 2 {
            return Err(Error::InvalidConfig("a Bézier curve needs at least two control points".into()));
        }
        Ok(Self { control })
    }

    /// Control points `z0 + (k/K̃)(z1 − z0) + Σ_m offsets[k−1, m]·e_m` with
    /// `e_m` an orthonormal basis of the complement of `z1 − z0`.
    pub fn from_offsets(z0: ArrayView1<T>, z1: ArrayView1<T>, offsets: ArrayView2<T>) -> Result<Self> {
        check_dim("Bézier endpoint", z0.len(), z1.len())?;
        let d = &z1 - &z0;
        if d.iter().all(|v| *v == T::zero()) {
            return Err(Error::InvalidConfig("Bézier endpoints coincide".into()));
        }
        let basis = complement_basis(d.view());
        check_dim("Bézier offset width", basis.len(), offsets.ncols())?;
        let k = offsets.nrows() + 1;
        let mut control = Array2::zeros((k + 1, z0.len()));
        for i in 0..=k {
            let f = T::lit(i as f64 / k as f64);
            let mut p = &z0 + &(&d * f);
            if i > 0 && i < k {
                for (m, e) in basis.iter().enumerate() {
                    p = p + e * offsets[[i - 1, m]];
                }
            }
            control.row_mut(i).assign(&p);
        }
        Self::new(control)
    }

    pub fn control_points(&self) -> &Array2<T> {
        &self.control
    }

    /// De Casteljau evaluation.
    pub fn eval(&self, t: T) -> Array1<T> {
        let mut pts = self.control.clone();
        let k = pts.nrows();
        for level in 1..k {
            for i in 0..k - level {
                let next = pts.row(i + 1).to_owned();
                let mut row = pts.row_mut(i);
                row *= T::one() - t;
                row.scaled_add(t, &next);
            }
        }
        pts.row(0).to_owned()
    }
}

/// Random Bézier curve between `z0` and `z1` with `control_count` segments:
/// interior control points are displaced orthogonally to `z1 − z0` by
/// independent uniform draws in `±‖z1 − z0‖/4`.
pub fn bezier_sample<T: Real, R: Rng + ?Sized>(
    z0: ArrayView1<T>,
    z1: ArrayView1<T>,
    control_count: usize,
    rng: &mut R,
) -> Result<Bezier<T>> {
    if control_count < 2 {
        return Err(Error::InvalidConfig("Bézier control count must be >= 2".into()));
    }
    let d = &z1 - &z0;
    let half_range = d.dot(&d).sqrt().as_f64() / 4.0;
    if half_range == 0.0 {
        return Err(Error::InvalidConfig("Bézier endpoints coincide".into()));
    }
    let offsets = Array2::from_shape_fn((control_count - 1, z0.len() - 1), |_| {
        T::lit(rng.random_range(-half_range..=half_range))
    });
    Bezier::from_offsets(z0, z1, offsets.view())
}
