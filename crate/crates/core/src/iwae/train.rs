use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::model::{log_mean_exp, normalized_weights, IwaeModel, LikelihoodKind};
use crate::error::{Error, Result};
use crate::numerics::rng::{substream, RunRng};
use crate::numerics::{AdamConfig, AdamState, Gradients, Real};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Importance samples per data point.
    pub k: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.batch_size == 0 {
            return Err(Error::InvalidConfig("K and batch size must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        Ok(())
    }
}

/// Outcome of [`train`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean minibatch bound of each epoch.
    pub trace: Vec<f64>,
    /// Bound over the whole dataset before the first update, with a fixed noise stream.
    pub initial_bound: f64,
    /// Same evaluation after the last update.
    pub final_bound: f64,
}

/// Parameter gradients of every component of an [`IwaeModel`].
#[derive(Clone, Debug)]
pub(crate) struct ModelGradients<T> {
    pub trunk: Gradients<T>,
    pub mean: Gradients<T>,
    pub std: Gradients<T>,
    pub decoder: Gradients<T>,
    pub log_variance: [T; 1],
}

impl<T: Real> ModelGradients<T> {
    pub fn zeros_for(m: &IwaeModel<T>) -> Self {
        Self {
            trunk: Gradients::zeros_for(&m.encoder_trunk),
            mean: Gradients::zeros_for(&m.encoder_mean),
            std: Gradients::zeros_for(&m.encoder_std),
            decoder: Gradients::zeros_for(&m.decoder),
            log_variance: [T::zero()],
        }
    }

    pub fn reset(&mut self) {
        self.trunk.reset();
        self.mean.reset();
        self.std.reset();
        self.decoder.reset();
        self.log_variance = [T::zero()];
    }

    fn slices(&self, with_variance: bool) -> Vec<&[T]> {
        let mut out = self.trunk.slices();
        out.extend(self.mean.slices());
        out.extend(self.std.slices());
        out.extend(self.decoder.slices());
        if with_variance {
            out.push(&self.log_variance);
        }
        out
    }

    fn is_finite(&self) -> bool {
        self.trunk.is_finite()
            && self.mean.is_finite()
            && self.std.is_finite()
            && self.decoder.is_finite()
            && self.log_variance[0].is_finite()
    }
}

fn params_mut<T: Real>(m: &mut IwaeModel<T>) -> Vec<&mut [T]> {
    let gaussian = m.likelihood == LikelihoodKind::GaussianGlobalVar;
    let mut out = m.encoder_trunk.param_slices_mut();
    out.extend(m.encoder_mean.param_slices_mut());
    out.extend(m.encoder_std.param_slices_mut());
    out.extend(m.decoder.param_slices_mut());
    if gaussian {
        out.push(std::slice::from_mut(&mut m.log_variance));
    }
    out
}

pub(crate) fn normal_matrix<T: Real>(rng: &mut RunRng, rows: usize, cols: usize) -> Array2<T> {
    Array2::from_shape_fn((rows, cols), |_| T::lit(rng.sample::<f64, _>(StandardNormal)))
}

/// Mean IWAE bound of a minibatch and the gradient of its negation.
pub(crate) fn batch_gradients<T: Real>(
    model: &IwaeModel<T>,
    x: ArrayView2<T>,
    eps: ArrayView2<T>,
    k: usize,
    grads: &mut ModelGradients<T>,
) -> Result<T> {
    let b = x.nrows();
    let pass = model.batch_pass(x, eps, k)?;
    let scale = T::lit(b as f64);
    let mut bound = T::zero();
    let mut c = Array1::<T>::zeros(b * k);
    for i in 0..b {
        let row = pass.log_weights.row(i);
        bound += log_mean_exp(row);
        let w = normalized_weights(row);
        for j in 0..k {
            c[i * k + j] = -w[j] / scale;
        }
    }
    bound = bound / scale;

    let nx = model.data_dim();
    let mut d_mean = Array2::<T>::zeros((b * k, nx));
    let mut d_lv = T::zero();
    for (r, mut out) in d_mean.outer_iter_mut().enumerate() {
        let slice = out.as_slice_mut().expect("row of standard array");
        let dlv = model.likelihood_grad(x.row(r / k), pass.decoder.output().row(r), slice);
        slice.iter_mut().for_each(|v| *v *= c[r]);
        d_lv += c[r] * dlv;
    }
    if model.likelihood == LikelihoodKind::GaussianGlobalVar {
        grads.log_variance[0] += d_lv;
    }

    let mut dz = model.decoder.backward(&pass.decoder, d_mean.view(), &mut grads.decoder);
    for (r, mut row) in dz.outer_iter_mut().enumerate() {
        for (d, &zv) in row.iter_mut().zip(pass.z.row(r)) {
            *d -= c[r] * zv;
        }
    }

    let nz = model.latent_dim();
    let sigma = pass.std.output();
    let mut d_mu = Array2::<T>::zeros((b, nz));
    let mut d_sigma = Array2::<T>::zeros((b, nz));
    for r in 0..b * k {
        let i = r / k;
        for j in 0..nz {
            d_mu[[i, j]] += dz[[r, j]];
            // z depends on σ through ε, and −ln q contributes +ln σ.
            d_sigma[[i, j]] += dz[[r, j]] * eps[[r, j]] + c[r] / sigma[[i, j]];
        }
    }
    let mut dh = model.encoder_mean.backward(&pass.mean, d_mu.view(), &mut grads.mean);
    dh += &model.encoder_std.backward(&pass.std, d_sigma.view(), &mut grads.std);
    model.encoder_trunk.backward(&pass.trunk, dh.view(), &mut grads.trunk);
    Ok(bound)
}

/// Mean IWAE bound over all rows of `data` with `k` draws each, using the
/// noise substream `"evaluate"` of `seed`.
pub fn evaluate_bound<T: Real>(model: &IwaeModel<T>, data: ArrayView2<T>, k: usize, seed: u64) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidConfig("K must be >= 1".into()));
    }
    model.check_data(data)?;
    let mut rng = substream(seed, "evaluate");
    let mut total = 0.0;
    for chunk in data.axis_chunks_iter(Axis(0), 256) {
        let eps = normal_matrix::<T>(&mut rng, chunk.nrows() * k, model.latent_dim());
        let pass = model.batch_pass(chunk, eps.view(), k)?;
        for row in pass.log_weights.outer_iter() {
            total += log_mean_exp(row).as_f64();
        }
    }
    Ok(total / data.nrows() as f64)
}

/// Maximizes the IWAE bound by minibatch Adam, reshuffling every epoch.
pub fn train<T: Real>(model: &mut IwaeModel<T>, data: ArrayView2<T>, cfg: &TrainConfig) -> Result<TrainReport> {
    train_with(model, data, cfg, |_, _| {})
}

/// [`train`] with a callback receiving `(epoch, mean bound)` after each epoch.
pub fn train_with<T: Real, F: FnMut(usize, f64)>(
    model: &mut IwaeModel<T>,
    data: ArrayView2<T>,
    cfg: &TrainConfig,
    mut on_epoch: F,
) -> Result<TrainReport> {
    cfg.validate()?;
    if data.nrows() == 0 {
        return Err(Error::InvalidData("training set is empty".into()));
    }
    model.check_data(data)?;
    let initial_bound = evaluate_bound(model, data, cfg.k, cfg.seed)?;

    let gaussian = model.likelihood == LikelihoodKind::GaussianGlobalVar;
    let mut adam = AdamState::new(AdamConfig::with_learning_rate(cfg.learning_rate));
    let mut grads = ModelGradients::zeros_for(model);
    let mut shuffle_rng = substream(cfg.seed, "shuffle");
    let mut noise_rng = substream(cfg.seed, "noise");
    let mut order: Vec<usize> = (0..data.nrows()).collect();
    let mut trace = Vec::with_capacity(cfg.epochs);
    let nz = model.latent_dim();

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut sum = 0.0;
        let mut batches = 0usize;
        for (bi, idx) in order.chunks(cfg.batch_size).enumerate() {
            let x = data.select(Axis(0), idx);
            let eps = normal_matrix::<T>(&mut noise_rng, idx.len() * cfg.k, nz);
            grads.reset();
            let bound = batch_gradients(model, x.view(), eps.view(), cfg.k, &mut grads)?;
            if !bound.is_finite() || !grads.is_finite() {
                return Err(Error::NonFinite(format!("training loss at epoch {epoch}, batch {bi}")));
            }
            adam.step(&mut params_mut(model), &grads.slices(gaussian))?;
            sum += bound.as_f64();
            batches += 1;
        }
        let mean = sum / batches as f64;
        trace.push(mean);
        on_epoch(epoch, mean);
    }
    let final_bound = evaluate_bound(model, data, cfg.k, cfg.seed)?;
    Ok(TrainReport {
        trace,
        initial_bound,
        final_bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::iwae::model::ModelSpec;
    use rand::SeedableRng;

    fn toy(likelihood: LikelihoodKind) -> (IwaeModel<f64>, Array2<f64>) {
        let spec = ModelSpec {
            data_dim: 5,
            latent_dim: 2,
            encoder_hidden: vec![6],
            decoder_hidden: vec![6],
            residual_blocks: 1,
            likelihood,
        };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut m: IwaeModel<f64> = spec.build(&mut rng).unwrap();
        m.log_variance = -0.7;
        let data = Array2::from_shape_fn((4, 5), |(i, j)| match likelihood {
            LikelihoodKind::Bernoulli => ((i + 2 * j) % 3 == 0) as u8 as f64,
            _ => 0.1 + 0.15 * ((i * 3 + j) % 5) as f64,
        });
        (m, data)
    }

    fn objective(m: &IwaeModel<f64>, x: &Array2<f64>, eps: &Array2<f64>, k: usize) -> f64 {
        let pass = m.batch_pass(x.view(), eps.view(), k).unwrap();
        pass.log_weights.outer_iter().map(|r| log_mean_exp(r)).sum::<f64>() / x.nrows() as f64
    }

    #[test]
    fn gradients_match_finite_differences() {
        for lk in [LikelihoodKind::GaussianGlobalVar, LikelihoodKind::Bernoulli] {
            let (mut m, x) = toy(lk);
            let k = 3;
            let mut rng = substream(5, "t");
            let eps = normal_matrix::<f64>(&mut rng, x.nrows() * k, 2);
            let mut g = ModelGradients::zeros_for(&m);
            batch_gradients(&m, x.view(), eps.view(), k, &mut g).unwrap();
            let analytic: Vec<f64> = g.slices(true).iter().flat_map(|s| s.iter().copied()).collect();
            let count = analytic.len();
            let h = 1e-6;
            for idx in (0..count).step_by(7).chain([count - 1]) {
                let perturb = |m: &mut IwaeModel<f64>, d: f64| {
                    let mut seen = 0;
                    for s in params_mut(m) {
                        if idx < seen + s.len() {
                            s[idx - seen] += d;
                            return;
                        }
                        seen += s.len();
                    }
                    // Bernoulli models expose no variance slot.
                    m.log_variance += d;
                };
                perturb(&mut m, h);
                let up = objective(&m, &x, &eps, k);
                perturb(&mut m, -2.0 * h);
                let down = objective(&m, &x, &eps, k);
                perturb(&mut m, h);
                let fd = -(up - down) / (2.0 * h);
                let an = analytic[idx];
                if lk == LikelihoodKind::Bernoulli && idx == count - 1 {
                    assert!(fd.abs() < 1e-9 && an == 0.0);
                    continue;
                }
                assert!((fd - an).abs() < 1e-5 * (1.0 + fd.abs()), "{lk:?} param {idx}: fd {fd} vs {an}");
            }
        }
    }

    #[test]
    fn training_improves_and_is_reproducible() {
        let (m0, data) = toy(LikelihoodKind::GaussianGlobalVar);
        let cfg = TrainConfig {
            k: 5,
            learning_rate: 1e-2,
            batch_size: 2,
            epochs: 30,
            seed: 3,
        };
        let mut a = m0.clone();
        let ra = train(&mut a, data.view(), &cfg).unwrap();
        assert_eq!(ra.trace.len(), 30);
        assert!(ra.final_bound > ra.initial_bound);
        let mut b = m0.clone();
        let rb = train(&mut b, data.view(), &cfg).unwrap();
        assert_eq!(ra, rb);
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_inputs() {
        let (mut m, data) = toy(LikelihoodKind::Bernoulli);
        let cfg = TrainConfig {
            k: 0,
            learning_rate: 1e-3,
            batch_size: 2,
            epochs: 1,
            seed: 0,
        };
        assert!(train(&mut m, data.view(), &cfg).is_err());
        let cfg = TrainConfig { k: 2, ..cfg };
        assert!(train(&mut m, data.slice(ndarray::s![0..0, ..]), &cfg).is_err());
        let mut bad = data.clone();
        bad[[0, 0]] = 0.5;
        assert!(train(&mut m, bad.view(), &cfg).is_err());
    }

    #[test]
    fn non_finite_loss_is_reported() {
        let (mut m, data) = toy(LikelihoodKind::GaussianGlobalVar);
        m.log_variance = -800.0;
        let cfg = TrainConfig {
            k: 2,
            learning_rate: 1e-3,
            batch_size: 2,
            epochs: 1,
            seed: 0,
        };
        let err = train(&mut m, data.view(), &cfg).unwrap_err().to_string();
        assert!(err.contains("epoch 0") || err.contains("non-finite"), "{err}");
    }
}
