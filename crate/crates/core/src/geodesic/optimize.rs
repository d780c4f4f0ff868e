use ndarray::{Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use super::curve::{bezier_sample, CurveNet, CurvePass, Domain, Normalization};
use crate::error::{check_dim, Error, Result};
use crate::iwae::IwaeModel;
use crate::numerics::rng::{indexed, substream};
use crate::numerics::{AdamConfig, AdamState, Gradients, Mlp, Real};
use crate::riemann::{sample_times, smoothed_quadratic_grad, straight_line_profile, velocities, Smoothing};

/// Settings for the curve optimizer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeodesicConfig {
    /// Midpoint samples used for the length integral.
    pub n: usize,
    pub learning_rate: f64,
    pub max_iters: usize,
    /// Stop once the validation value has not improved for this many iterations.
    pub patience: usize,
    pub smoothing: Option<Smoothing>,
    /// Weight of the maximum velocity in the validation value.
    pub lambda_phi: f64,
    pub pretrain_curves: usize,
    /// Number of Bézier segments `K̃` (control points are `K̃ + 1`).
    pub control_count: usize,
    pub fit_iters: usize,
    /// Midpoint samples used by the Bézier regression.
    pub pretrain_points: usize,
    pub normalization: Normalization,
    /// Weight `μ` of the speed spread penalty `μ·Var(φ)/L_straight` added to
    /// the length. It only selects the constant-speed parametrization among
    /// curves of equal length; 0 minimizes the bare length.
    #[serde(default)]
    pub speed_weight: f64,
    /// Latent box the curve is confined to; unbounded when absent.
    #[serde(default)]
    pub domain: Option<Domain>,
    pub seed: u64,
}

impl Default for GeodesicConfig {
    fn default() -> Self {
        Self {
            n: 500,
            learning_rate: 1e-2,
            max_iters: 2000,
            patience: 200,
            smoothing: None,
            lambda_phi: 1.0,
            pretrain_curves: 8,
            control_count: 5,
            fit_iters: 500,
            pretrain_points: 64,
            normalization: Normalization::Rescale,
            speed_weight: 0.0,
            domain: None,
            seed: 0,
        }
    }
}

impl GeodesicConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.n < 2 || self.pretrain_points < 2 {
            return bad("geodesic sample counts must be >= 2");
        }
        if self.pretrain_curves == 0 || self.control_count < 2 {
            return bad("geodesic pretraining needs >= 1 curve and >= 2 Bézier segments");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("geodesic learning rate must be positive");
        }
        if !(self.lambda_phi >= 0.0 && self.lambda_phi.is_finite()) {
            return bad("lambda_phi must be >= 0");
        }
        if !(self.speed_weight >= 0.0 && self.speed_weight.is_finite()) {
            return bad("speed weight must be >= 0");
        }
        if let Some(s) = &self.smoothing {
            Smoothing::new(s.lambda, s.rank)?;
        }
        Ok(())
    }
}

/// The curve a result refers to.
#[derive(Clone, Debug, PartialEq)]
pub enum PathCurve<T> {
    Network(CurveNet<T>),
    /// No optimized iterate beat the straight segment.
    Straight { z0: Array1<T>, z1: Array1<T> },
}

impl<T: Real> PathCurve<T> {
    /// Points and velocities at `times`.
    pub fn eval_many(&self, times: &[T]) -> Result<(Array2<T>, Array2<T>)> {
        match self {
            Self::Network(c) => c.eval_many(times),
            Self::Straight { z0, z1 } => {
                let d = z1 - z0;
                let mut pts = Array2::zeros((times.len(), z0.len()));
                for (i, &t) in times.iter().enumerate() {
                    pts.row_mut(i).assign(&(z0 + &(&d * t)));
                }
                let dirs = d.broadcast(pts.raw_dim()).expect("row broadcast").to_owned();
                Ok((pts, dirs))
            }
        }
    }

    pub fn is_straight(&self) -> bool {
        matches!(self, Self::Straight { .. })
    }
}

/// One optimizer iteration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub length: f64,
    pub max_velocity: f64,
    pub validation: f64,
    pub endpoint_error: f64,
}

/// Outcome of [`optimize_geodesic`]. Lengths and velocities use the
/// optimization metric (smoothed when smoothing is configured).
#[derive(Clone, Debug)]
pub struct GeodesicResult<T> {
    pub curve: PathCurve<T>,
    pub times: Vec<T>,
    /// `(n, Nz)`
    pub points: Array2<T>,
    pub velocities: Array1<T>,
    pub length: T,
    pub straight_length: T,
    pub straight_velocities: Array1<T>,
    pub euclidean_distance: T,
    pub validation: T,
    pub straight_validation: T,
    /// Lengths under the raw pullback metric, for reference.
    pub unsmoothed_length: T,
    pub unsmoothed_straight_length: T,
    pub iterations: usize,
    /// Iteration of the retained iterate; `None` when the straight line was kept.
    pub best_iteration: Option<usize>,
    pub pretrain_validations: Vec<f64>,
    pub trace: Vec<IterationRecord>,
    pub max_endpoint_error: f64,
    pub config: GeodesicConfig,
}

/// Length functional `(1/n) Σ φ_i` over a curve pass, with its gradient
/// w.r.t. the sampled points and velocities.
pub(crate) struct Objective<T> {
    pub length: T,
    pub velocities: Array1<T>,
    pub g_z: Array2<T>,
    pub g_dz: Array2<T>,
}

impl<T: Real> Objective<T> {
    pub fn max_velocity(&self) -> T {
        self.velocities.iter().fold(T::zero(), |m, &v| m.max(v))
    }

    pub fn validation(&self, lambda_phi: f64) -> T {
        self.length + T::lit(lambda_phi) * self.max_velocity()
    }

    /// Turns the length gradient into that of `L + c·Var(φ)`.
    pub fn add_speed_spread(&mut self, c: T) {
        for (i, &phi) in self.velocities.iter().enumerate() {
            let w = T::one() + T::lit(2.0) * c * (phi - self.length);
            self.g_z.row_mut(i).mapv_inplace(|v| v * w);
            self.g_dz.row_mut(i).mapv_inplace(|v| v * w);
        }
    }
}

pub(crate) fn objective<T: Real>(
    decoder: &Mlp<T>,
    z: &Array2<T>,
    dz: &Array2<T>,
    smoothing: Option<&Smoothing>,
    with_grad: bool,
) -> Result<Objective<T>> {
    let (n, dim) = z.dim();
    let der = decoder.derivatives(z.view(), with_grad)?;
    let nf = T::lit(n as f64);
    let mut phi = Array1::zeros(n);
    let mut g_z = Array2::zeros((n, dim));
    let mut g_dz = Array2::zeros((n, dim));
    for i in 0..n {
        let j = der.jacobian.index_axis(Axis(0), i);
        let g = j.t().dot(&j);
        let v = dz.row(i);
        let (q, d_metric, d_dir) = match smoothing {
            Some(cfg) => {
                let qg = smoothed_quadratic_grad(g.view(), v, cfg)?;
                (qg.value, qg.d_metric, qg.d_direction)
            }
            None => {
                let gv = g.dot(&v);
                let vv = v.to_owned().insert_axis(Axis(1));
                (v.dot(&gv), vv.dot(&vv.t()), gv * T::lit(2.0))
            }
        };
        if !q.is_finite() || q < -T::lit(crate::riemann::NEGATIVE_TOLERANCE) {
            return Err(Error::NonFinite(format!("squared velocity {q} at sample {i}")));
        }
        let q = q.max(T::zero());
        phi[i] = q.sqrt();
        if !with_grad || phi[i] <= T::lit(1e-300) {
            continue;
        }
        let scale = T::one() / (T::lit(2.0) * nf * phi[i]);
        g_dz.row_mut(i).assign(&(&d_dir * scale));
        // dq/dz_k = 2 Σ_{x,a} H[x,a,k] (J M)[x,a]
        let jm = j.dot(&d_metric);
        let h = der.second.as_ref().expect("second order requested").index_axis(Axis(0), i);
        for k in 0..dim {
            let mut s = T::zero();
            for (x, row) in jm.outer_iter().enumerate() {
                for a in 0..dim {
                    s += h[[x, a, k]] * row[a];
                }
            }
            g_z[[i, k]] = T::lit(2.0) * s * scale;
        }
    }
    let length = phi.sum() / nf;
    if !length.is_finite() {
        return Err(Error::NonFinite("curve length".into()));
    }
    Ok(Objective {
        length,
        velocities: phi,
        g_z,
        g_dz,
    })
}

fn curve_params<T: Real>(c: &mut CurveNet<T>) -> Vec<&mut [T]> {
    c.net_mut().param_slices_mut()
}

/// Fits the normalized curve to `target` (evaluated at `pretrain_points`
/// midpoints) by Adam on the squared error, then returns the validation value
/// `L + λ_φ max φ` of the fitted curve.
pub fn pretrain<T: Real, F>(
    decoder: &Mlp<T>,
    curve: &mut CurveNet<T>,
    target: F,
    cfg: &GeodesicConfig,
) -> Result<T>
where
    F: Fn(T) -> Array1<T>,
{
    let times = sample_times::<T>(cfg.pretrain_points);
    let mut goal = Array2::zeros((times.len(), curve.dim()));
    for (i, &t) in times.iter().enumerate() {
        goal.row_mut(i).assign(&target(t));
    }
    let mut adam = AdamState::new(AdamConfig::with_learning_rate(cfg.learning_rate));
    let mut grads = Gradients::zeros_for(curve.net());
    let zero = Array2::zeros(goal.raw_dim());
    let scale = T::lit(2.0 / times.len() as f64);
    for it in 0..cfg.fit_iters {
        let pass = curve.pass(&times)?;
        let resid = &pass.z - &goal;
        if resid.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("pretraining loss at iteration {it}")));
        }
        grads.reset();
        curve.backward(&pass, (resid * scale).view(), zero.view(), &mut grads);
        adam.step(&mut curve_params(curve), &grads.slices())?;
    }
    let pass = curve.pass(&sample_times::<T>(cfg.n))?;
    let obj = objective(decoder, &pass.z, &pass.dz, cfg.smoothing.as_ref(), false)?;
    Ok(obj.validation(cfg.lambda_phi))
}

fn check_endpoints<T: Real>(decoder: &Mlp<T>, z0: ArrayView1<T>, z1: ArrayView1<T>) -> Result<()> {
    check_dim("geodesic start", decoder.input_dim(), z0.len())?;
    check_dim("geodesic end", decoder.input_dim(), z1.len())?;
    if z0.iter().chain(z1.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("geodesic endpoints".into()));
    }
    Ok(())
}

/// Approximate geodesic between `z0` and `z1` under the pullback metric of `model`'s decoder.
pub fn optimize_geodesic<T: Real>(
    model: &IwaeModel<T>,
    z0: ArrayView1<T>,
    z1: ArrayView1<T>,
    cfg: &GeodesicConfig,
) -> Result<GeodesicResult<T>> {
    optimize_geodesic_on(model.decoder(), z0, z1, cfg)
}

/// [`optimize_geodesic`] for a bare decoder network.
pub fn optimize_geodesic_on<T: Real>(
    decoder: &Mlp<T>,
    z0: ArrayView1<T>,
    z1: ArrayView1<T>,
    cfg: &GeodesicConfig,
) -> Result<GeodesicResult<T>> {
    cfg.validate()?;
    check_endpoints(decoder, z0, z1)?;
    if let Some(s) = &cfg.smoothing {
        s.validate_for(z0.len())?;
    }
    if let Some(d) = &cfg.domain {
        d.validate(z0.len())?;
        if !d.contains(z0.mapv(|v| v.as_f64()).view()) || !d.contains(z1.mapv(|v| v.as_f64()).view()) {
            return Err(Error::InvalidConfig("geodesic endpoints lie outside the domain".into()));
        }
    }
    let smoothing = cfg.smoothing.as_ref();
    let times = sample_times::<T>(cfg.n);
    let straight = PathCurve::Straight {
        z0: z0.to_owned(),
        z1: z1.to_owned(),
    };
    let (straight_length, straight_velocities) = straight_line_profile(decoder, z0, z1, cfg.n, smoothing)?;
    let (unsmoothed_straight_length, _) = straight_line_profile(decoder, z0, z1, cfg.n, None)?;
    let straight_max = straight_velocities.iter().fold(T::zero(), |m, &v| m.max(v));
    let straight_validation = straight_length + T::lit(cfg.lambda_phi) * straight_max;
    let diff = &z1 - &z0;
    let euclidean_distance = diff.dot(&diff).sqrt();

    let finish = |curve: PathCurve<T>,
                  validation: T,
                  iterations: usize,
                  best_iteration: Option<usize>,
                  pretrain_validations: Vec<f64>,
                  trace: Vec<IterationRecord>,
                  max_endpoint_error: f64|
     -> Result<GeodesicResult<T>> {
        let (points, dirs) = curve.eval_many(&times)?;
        let vel = velocities(decoder, points.view(), dirs.view(), smoothing)?;
        let raw = velocities(decoder, points.view(), dirs.view(), None)?;
        let nf = T::lit(cfg.n as f64);
        Ok(GeodesicResult {
            curve,
            times: times.clone(),
            points,
            length: vel.sum() / nf,
            velocities: vel,
            straight_length,
            straight_velocities: straight_velocities.clone(),
            euclidean_distance,
            validation,
            straight_validation,
            unsmoothed_length: raw.sum() / nf,
            unsmoothed_straight_length,
            iterations,
            best_iteration,
            pretrain_validations,
            trace,
            max_endpoint_error,
            config: cfg.clone(),
        })
    };

    if euclidean_distance == T::zero() {
        return finish(straight, straight_validation, 0, None, Vec::new(), Vec::new(), 0.0);
    }

    // Bézier pretraining: every candidate starts from the same initial network.
    let mut init = CurveNet::new(z0, z1, cfg.normalization, &mut substream(cfg.seed, "curve-init"))?;
    if let Some(d) = &cfg.domain {
        init = init.with_domain(d.clone())?;
    }
    let mut best: Option<(T, CurveNet<T>)> = None;
    let mut pretrain_validations = Vec::with_capacity(cfg.pretrain_curves);
    for c in 0..cfg.pretrain_curves {
        let mut rng = indexed(cfg.seed, "bezier", c as u64);
        let bez = bezier_sample(z0, z1, cfg.control_count, &mut rng)?;
        let mut net = init.clone();
        let v = pretrain(decoder, &mut net, |t| bez.eval(t), cfg)?;
        pretrain_validations.push(v.as_f64());
        if best.as_ref().is_none_or(|(bv, _)| v < *bv) {
            best = Some((v, net));
        }
    }
    let (_, mut curve) = best.expect("at least one pretraining candidate");

    let spread = if straight_length > T::zero() {
        T::lit(cfg.speed_weight) / straight_length
    } else {
        T::zero()
    };
    let mut adam = AdamState::new(AdamConfig::with_learning_rate(cfg.learning_rate));
    let mut grads = Gradients::zeros_for(curve.net());
    let mut trace = Vec::new();
    let mut run_best = T::infinity();
    let mut stale = 0;
    let mut kept: Option<(T, usize, CurveNet<T>)> = None;
    let mut max_endpoint_error = 0.0f64;
    for it in 0..cfg.max_iters {
        let pass: CurvePass<T> = curve.pass(&times)?;
        let mut obj = objective(decoder, &pass.z, &pass.dz, smoothing, true)
            .map_err(|e| Error::NonFinite(format!("geodesic objective at iteration {it}: {e}")))?;
        let validation = obj.validation(cfg.lambda_phi);
        max_endpoint_error = max_endpoint_error.max(pass.endpoint_error.as_f64());
        trace.push(IterationRecord {
            iteration: it,
            length: obj.length.as_f64(),
            max_velocity: obj.max_velocity().as_f64(),
            validation: validation.as_f64(),
            endpoint_error: pass.endpoint_error.as_f64(),
        });
        if obj.length <= straight_length && kept.as_ref().is_none_or(|(v, _, _)| validation < *v) {
            kept = Some((validation, it, curve.clone()));
        }
        if validation < run_best {
            run_best = validation;
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
        if spread > T::zero() {
            obj.add_speed_spread(spread);
        }
        grads.reset();
        curve.backward(&pass, obj.g_z.view(), obj.g_dz.view(), &mut grads);
        if !grads.is_finite() {
            return Err(Error::NonFinite(format!("geodesic gradient at iteration {it}")));
        }
        adam.step(&mut curve_params(&mut curve), &grads.slices())?;
    }
    let iterations = trace.len();
    match kept {
        Some((v, it, net)) if v <= straight_validation => finish(
            PathCurve::Network(net),
            v,
            iterations,
            Some(it),
            pretrain_validations,
            trace,
            max_endpoint_error,
        ),
        _ => finish(straight, straight_validation, iterations, None, pretrain_validations, trace, max_endpoint_error),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{Activation, Layer, LayerSpec};
    use ndarray::array;
    use rand::SeedableRng;

    fn linear(w: Array2<f64>) -> Mlp<f64> {
        let out = w.nrows();
        let inp = w.ncols();
        Mlp::new(inp, vec![Layer::new(w, Array1::zeros(out), Activation::Linear, false).unwrap()]).unwrap()
    }

    fn quick() -> GeodesicConfig {
        GeodesicConfig {
            n: 64,
            max_iters: 300,
            patience: 50,
            pretrain_curves: 2,
            fit_iters: 100,
            pretrain_points: 16,
            ..GeodesicConfig::default()
        }
    }

    fn bumpy(seed: u64) -> Mlp<f64> {
        Mlp::init(
            2,
            &[LayerSpec::dense(12, Activation::Tanh), LayerSpec::dense(5, Activation::Softplus)],
            &mut rand_chacha::ChaCha8Rng::seed_from_u64(seed),
        )
        .unwrap()
    }

    #[test]
    fn objective_gradient_matches_finite_differences() {
        let dec = bumpy(1);
        let z = array![[0.1, -0.3], [0.5, 0.7], [-0.9, 0.2]];
        let dz = array![[1.0, 0.4], [-0.2, 0.8], [0.3, -1.1]];
        for smoothing in [None, Some(Smoothing::new(0.0, 2).unwrap()), Some(Smoothing::new(0.05, 2).unwrap()), Some(Smoothing::new(0.3, 1).unwrap())] {
            let obj = objective(&dec, &z, &dz, smoothing.as_ref(), true).unwrap();
            let h = 1e-6;
            for i in 0..3 {
                for k in 0..2 {
                    for (which, analytic) in [(0, obj.g_z[[i, k]]), (1, obj.g_dz[[i, k]])] {
                        let f = |d: f64| {
                            let (mut a, mut b) = (z.clone(), dz.clone());
                            if which == 0 {
                                a[[i, k]] += d;
                            } else {
                                b[[i, k]] += d;
                            }
                            objective(&dec, &a, &b, smoothing.as_ref(), false).unwrap().length
                        };
                        let fd = (f(h) - f(-h)) / (2.0 * h);
                        assert!((fd - analytic).abs() < 1e-6 * (1.0 + fd.abs()), "{smoothing:?} {which} {i} {k}: {fd} vs {analytic}");
                    }
                }
            }
        }
    }

    #[test]
    fn coincident_endpoints_have_zero_length() {
        let dec = bumpy(2);
        let z = array![0.3, 0.3];
        let r = optimize_geodesic_on(&dec, z.view(), z.view(), &quick()).unwrap();
        assert_eq!(r.length, 0.0);
        assert!(r.points.outer_iter().all(|p| p == z));
    }

    #[test]
    fn flat_metric_recovers_the_straight_line() {
        let w = array![[2.0, 0.0], [0.0, 3.0], [1.0, -1.0]];
        let dec = linear(w.clone());
        let (z0, z1) = (array![-0.5, 0.2], array![0.7, -0.4]);
        let exact = w.dot(&(&z1 - &z0)).mapv(|v| v * v).sum().sqrt();
        let cfg = GeodesicConfig { max_iters: 600, ..quick() };
        let r = optimize_geodesic_on(&dec, z0.view(), z1.view(), &cfg).unwrap();
        assert!(r.length <= r.straight_length + 1e-6);
        assert!((r.length - exact).abs() / exact < 1e-3, "{} vs {exact}", r.length);
        assert!((r.straight_length - exact).abs() < 1e-9);
        assert!(r.max_endpoint_error < 1e-9);
    }

    #[test]
    fn pretraining_a_straight_target_on_identity() {
        let dec = linear(Array2::eye(2));
        let (z0, z1) = (array![0.0, 0.0], array![1.0, 2.0]);
        let cfg = GeodesicConfig { fit_iters: 500, ..quick() };
        let mut c = CurveNet::new(z0.view(), z1.view(), Normalization::Rescale, &mut substream(3, "c")).unwrap();
        let d = &z1 - &z0;
        let v = pretrain(&dec, &mut c, |t| &z0 + &(&d * t), &cfg).unwrap();
        let exact = 5f64.sqrt() * 2.0;
        assert!((v - exact).abs() / exact < 0.02, "{v} vs {exact}");
        assert!(c.pass(&[0.5]).unwrap().endpoint_error < 1e-9);
    }

    #[test]
    fn never_longer_than_straight_and_deterministic() {
        let dec = bumpy(4);
        let (z0, z1) = (array![-1.5, 0.5], array![1.2, -0.8]);
        for smoothing in [None, Some(Smoothing::new(0.1, 2).unwrap())] {
            let cfg = GeodesicConfig { smoothing, seed: 9, ..quick() };
            let a = optimize_geodesic_on(&dec, z0.view(), z1.view(), &cfg).unwrap();
            let b = optimize_geodesic_on(&dec, z0.view(), z1.view(), &cfg).unwrap();
            assert!(a.length <= a.straight_length + 1e-6);
            assert_eq!(a.points, b.points);
            assert_eq!(a.trace, b.trace);
            assert!(a.max_endpoint_error < 1e-9);
            let ends = a.curve.eval_many(&[0.0, 1.0]).unwrap().0;
            assert!((&ends.row(0) - &z0).iter().all(|v| v.abs() < 1e-9));
            assert!((&ends.row(1) - &z1).iter().all(|v| v.abs() < 1e-9));
        }
    }

    #[test]
    fn rejects_bad_config() {
        let dec = bumpy(5);
        let z = array![0.0, 0.0];
        for cfg in [
            GeodesicConfig { n: 1, ..quick() },
            GeodesicConfig { pretrain_curves: 0, ..quick() },
            GeodesicConfig { control_count: 1, ..quick() },
            GeodesicConfig { smoothing: Some(Smoothing { lambda: 1.0, rank: 3 }), ..quick() },
        ] {
            assert!(optimize_geodesic_on(&dec, z.view(), array![1.0, 0.0].view(), &cfg).is_err());
        }
        assert!(optimize_geodesic_on(&dec, z.view(), array![1.0].view(), &quick()).is_err());
    }
}
