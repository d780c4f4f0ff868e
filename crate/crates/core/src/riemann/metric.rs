use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::numerics::linalg::{determinant, symmetric_eigen, SymmetricEigen};
use crate::numerics::{Mlp, Real};

/// Tolerance below zero tolerated for quadratic forms and determinants of a metric.
pub const NEGATIVE_TOLERANCE: f64 = 1e-9;

/// Spectral smoothing of a metric: singular values `s ↦ s³/(s² + λ)`,
/// truncated to the leading `rank` of them.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Smoothing {
    pub lambda: f64,
    pub rank: usize,
}

impl Smoothing {
    pub fn new(lambda: f64, rank: usize) -> Result<Self> {
        let s = Self { lambda, rank };
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidConfig(format!("smoothing lambda must be >= 0, got {lambda}")));
        }
        if rank == 0 {
            return Err(Error::InvalidConfig("smoothing rank must be >= 1".into()));
        }
        Ok(s)
    }

    pub fn validate_for(&self, dim: usize) -> Result<()> {
        Self::new(self.lambda, self.rank)?;
        if self.rank > dim {
            return Err(Error::InvalidConfig(format!(
                "smoothing rank {} exceeds latent dimension {dim}",
                self.rank
            )));
        }
        Ok(())
    }

    /// `e³/(e² + λ)`; the identity when `λ = 0`.
    pub fn shrink<T: Real>(&self, e: T) -> T {
        let lambda = T::lit(self.lambda);
        if lambda == T::zero() {
            return e;
        }
        e * e * e / (e * e + lambda)
    }

    fn shrink_slope<T: Real>(&self, e: T) -> T {
        let lambda = T::lit(self.lambda);
        if lambda == T::zero() {
            return T::one();
        }
        let e2 = e * e;
        let den = e2 + lambda;
        (e2 * e2 + T::lit(3.0) * lambda * e2) / (den * den)
    }
}

/// A metric tensor at one latent point.
#[derive(Clone, Debug)]
pub struct MetricTensor<T> {
    matrix: Array2<T>,
}

impl<T: Real> MetricTensor<T> {
    pub fn new(matrix: Array2<T>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::ShapeMismatch(format!("metric must be square, got {:?}", matrix.dim())));
        }
        Ok(Self { matrix })
    }

    /// Pullback `JᵀJ`, symmetric by construction.
    pub fn from_jacobian(j: ArrayView2<T>) -> Self {
        let n = j.ncols();
        let mut g = Array2::zeros((n, n));
        for a in 0..n {
            for b in a..n {
                let v = j.column(a).dot(&j.column(b));
                g[[a, b]] = v;
                g[[b, a]] = v;
            }
        }
        Self { matrix: g }
    }

    pub fn matrix(&self) -> &Array2<T> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn eigen(&self) -> SymmetricEigen<T> {
        symmetric_eigen(self.matrix.view()).expect("square by construction")
    }

    /// Singular values in non-increasing order.
    pub fn singular_values(&self) -> Array1<T> {
        self.eigen().values.mapv(|v| v.abs())
    }

    pub fn min_eigenvalue(&self) -> T {
        self.eigen()
            .values
            .iter()
            .fold(T::infinity(), |m, &v| m.min(v))
    }

    pub fn asymmetry(&self) -> T {
        let d = &self.matrix - &self.matrix.t();
        d.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    /// `vᵀ G v`.
    pub fn quadratic(&self, v: ArrayView1<T>) -> T {
        v.dot(&self.matrix.dot(&v))
    }

    pub fn smoothed(&self, cfg: &Smoothing) -> Result<Self> {
        smooth_metric(self, cfg)
    }
}

/// Low-rank spectral reconstruction `Ĝ = U_r diag(s³/(s²+λ)) V_rᵀ`.
///
/// For symmetric input the SVD coincides with the eigen-decomposition
/// (`s = |e|`, `V = U·sign(e)`), so the shrinkage is applied to signed
/// eigenvalues, which keeps `Ĝ` exactly symmetric.
pub fn smooth_metric<T: Real>(g: &MetricTensor<T>, cfg: &Smoothing) -> Result<MetricTensor<T>> {
    cfg.validate_for(g.dim())?;
    let eig = g.eigen();
    let n = g.dim();
    let mut out = Array2::<T>::zeros((n, n));
    for i in 0..cfg.rank.min(n) {
        let s = cfg.shrink(eig.values[i]);
        let u = eig.vectors.column(i);
        for a in 0..n {
            for b in 0..n {
                out[[a, b]] += s * u[a] * u[b];
            }
        }
    }
    let sym = (&out + &out.t()) * T::lit(0.5);
    Ok(MetricTensor { matrix: sym })
}

pub fn metric_tensor<T: Real>(
    decoder: &Mlp<T>,
    z: ArrayView1<T>,
    smoothing: Option<&Smoothing>,
) -> Result<MetricTensor<T>> {
    let j = decoder.jacobian(z)?;
    let g = MetricTensor::from_jacobian(j.view());
    match smoothing {
        Some(cfg) => smooth_metric(&g, cfg),
        None => Ok(g),
    }
}

/// Metric tensors (optionally smoothed) at every row of `points`.
pub fn metric_batch<T: Real>(
    decoder: &Mlp<T>,
    points: ArrayView2<T>,
    smoothing: Option<&Smoothing>,
) -> Result<Vec<MetricTensor<T>>> {
    const CHUNK: usize = 2048;
    let mut out = Vec::with_capacity(points.nrows());
    for chunk in points.axis_chunks_iter(Axis(0), CHUNK) {
        let d = decoder.derivatives(chunk, false)?;
        for j in d.jacobian.outer_iter() {
            let g = MetricTensor::from_jacobian(j);
            out.push(match smoothing {
                Some(cfg) => smooth_metric(&g, cfg)?,
                None => g,
            });
        }
    }
    Ok(out)
}

fn checked_sqrt<T: Real>(q: T, what: &str) -> Result<T> {
    if q < -T::lit(NEGATIVE_TOLERANCE) || q.is_nan() {
        return Err(Error::BrokenMetric(format!("{what} = {q}")));
    }
    Ok(q.max(T::zero()).sqrt())
}

/// `√(dzᵀ G dz)` at `z`.
pub fn velocity<T: Real>(
    decoder: &Mlp<T>,
    z: ArrayView1<T>,
    dz: ArrayView1<T>,
    smoothing: Option<&Smoothing>,
) -> Result<T> {
    check_dim("velocity direction", z.len(), dz.len())?;
    let g = metric_tensor(decoder, z, smoothing)?;
    checked_sqrt(g.quadratic(dz), "squared velocity")
}

/// Velocities for matching rows of `points` and `directions`.
pub fn velocities<T: Real>(
    decoder: &Mlp<T>,
    points: ArrayView2<T>,
    directions: ArrayView2<T>,
    smoothing: Option<&Smoothing>,
) -> Result<Array1<T>> {
    if points.dim() != directions.dim() {
        return Err(Error::ShapeMismatch("points and directions differ in shape".into()));
    }
    let metrics = metric_batch(decoder, points, smoothing)?;
    metrics
        .iter()
        .zip(directions.outer_iter())
        .map(|(g, v)| checked_sqrt(g.quadratic(v), "squared velocity"))
        .collect()
}

/// Midpoint sample parameters `t_i = (i − ½)/n`, `i = 1..n`.
pub fn sample_times<T: Real>(n: usize) -> Vec<T> {
    let nf = T::lit(n as f64);
    (0..n).map(|i| (T::lit(i as f64) + T::lit(0.5)) / nf).collect()
}

/// Riemannian length `(1/n) Σ φ(t_i)` of a curve given as `t ↦ (z(t), ż(t))`.
pub fn curve_length<T, F>(decoder: &Mlp<T>, curve: F, n: usize, smoothing: Option<&Smoothing>) -> Result<T>
where
    T: Real,
    F: Fn(T) -> (Array1<T>, Array1<T>),
{
    if n < 2 {
        return Err(Error::InvalidConfig(format!("curve length needs n >= 2 samples, got {n}")));
    }
    let dim = decoder.input_dim();
    let mut pts = Array2::zeros((n, dim));
    let mut dirs = Array2::zeros((n, dim));
    for (i, t) in sample_times::<T>(n).into_iter().enumerate() {
        let (z, dz) = curve(t);
        check_dim("curve point", dim, z.len())?;
        pts.row_mut(i).assign(&z);
        dirs.row_mut(i).assign(&dz);
    }
    let v = velocities(decoder, pts.view(), dirs.view(), smoothing)?;
    Ok(v.sum() / T::lit(n as f64))
}

/// Riemannian length of the straight segment `z0 → z1`, plus its velocity profile.
pub fn straight_line_profile<T: Real>(
    decoder: &Mlp<T>,
    z0: ArrayView1<T>,
    z1: ArrayView1<T>,
    n: usize,
    smoothing: Option<&Smoothing>,
) -> Result<(T, Array1<T>)> {
    check_dim("segment end", z0.len(), z1.len())?;
    let dir = &z1 - &z0;
    let ts = sample_times::<T>(n);
    let mut pts = Array2::zeros((n, z0.len()));
    for (i, &t) in ts.iter().enumerate() {
        pts.row_mut(i).assign(&(&z0 + &(&dir * t)));
    }
    let dirs = dir.broadcast((n, z0.len())).expect("row broadcast").to_owned();
    let v = velocities(decoder, pts.view(), dirs.view(), smoothing)?;
    Ok((v.sum() / T::lit(n as f64), v))
}

/// `√det G` of the (unsmoothed) pullback metric.
pub fn magnification_factor<T: Real>(decoder: &Mlp<T>, z: ArrayView1<T>) -> Result<T> {
    let g = metric_tensor(decoder, z, None)?;
    mf_of(&g)
}

pub(crate) fn mf_of<T: Real>(g: &MetricTensor<T>) -> Result<T> {
    let det = determinant(g.matrix().view())?;
    checked_sqrt(det, "metric determinant")
}

/// `vᵀĜv` together with its gradients w.r.t. `G` and `v`.
#[derive(Clone, Debug)]
pub struct QuadraticGrad<T> {
    pub value: T,
    /// Symmetric `∂(vᵀĜv)/∂G`.
    pub d_metric: Array2<T>,
    /// `2Ĝv`.
    pub d_direction: Array1<T>,
}

/// Differentiates `vᵀ Ĝ(G) v` through the spectral smoothing map using
/// divided differences of the shrink function (Daleckii–Krein).
pub fn smoothed_quadratic_grad<T: Real>(
    g: ArrayView2<T>,
    v: ArrayView1<T>,
    cfg: &Smoothing,
) -> Result<QuadraticGrad<T>> {
    let n = g.nrows();
    check_dim("quadratic direction", n, v.len())?;
    cfg.validate_for(n)?;
    let eig = symmetric_eigen(g)?;
    let e = &eig.values;
    let u = &eig.vectors;
    let kept = |i: usize| i < cfg.rank;
    let h: Vec<T> = (0..n)
        .map(|i| if kept(i) { cfg.shrink(e[i]) } else { T::zero() })
        .collect();
    let w = u.t().dot(&v);

    let scale = e.iter().fold(T::one(), |m, x| m.max(x.abs()));
    let tol = T::lit(1e-10) * scale;
    let mut inner = Array2::<T>::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let divided = if (e[i] - e[j]).abs() > tol {
                (h[i] - h[j]) / (e[i] - e[j])
            } else {
                let mid = (e[i] + e[j]) * T::lit(0.5);
                let slope = cfg.shrink_slope(mid);
                match (kept(i), kept(j)) {
                    (true, true) => slope,
                    (false, false) => T::zero(),
                    _ => slope * T::lit(0.5),
                }
            };
            inner[[i, j]] = divided * w[i] * w[j];
        }
    }
    let d_metric = u.dot(&inner).dot(&u.t());
    let d_metric = (&d_metric + &d_metric.t()) * T::lit(0.5);

    let gs = Array1::from_iter((0..n).map(|i| h[i] * w[i]));
    let ghat_v = u.dot(&gs);
    let value = w.iter().zip(&h).map(|(&wi, &hi)| hi * wi * wi).sum();
    Ok(QuadraticGrad {
        value,
        d_metric,
        d_direction: ghat_v * T::lit(2.0),
    })
}
