use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::numerics::{Activation, LayerSpec, Mlp, Real};

/// Floor and ceiling applied to Bernoulli means before taking logs.
pub const BERNOULLI_CLAMP: f64 = 1e-7;

/// Initial global log-variance of the Gaussian likelihood.
pub const INITIAL_LOG_VARIANCE: f64 = -4.605_170_185_988_091; // ln 0.01

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LikelihoodKind {
    /// Diagonal Gaussian whose variance is one scalar shared across outputs.
    GaussianGlobalVar,
    Bernoulli,
}

impl std::str::FromStr for LikelihoodKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" | "gaussian-global-var" => Ok(Self::GaussianGlobalVar),
            "bernoulli" => Ok(Self::Bernoulli),
            other => Err(Error::InvalidConfig(format!("unknown likelihood '{other}'"))),
        }
    }
}

/// Layer sizes of an [`IwaeModel`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub data_dim: usize,
    pub latent_dim: usize,
    pub encoder_hidden: Vec<usize>,
    pub decoder_hidden: Vec<usize>,
    /// Identity-skip tanh blocks appended after `decoder_hidden`, each as wide as its last layer.
    pub residual_blocks: usize,
    pub likelihood: LikelihoodKind,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.data_dim == 0 || self.latent_dim == 0 {
            return Err(Error::InvalidConfig("data and latent dimensions must be positive".into()));
        }
        if self.encoder_hidden.is_empty() || self.decoder_hidden.is_empty() {
            return Err(Error::InvalidConfig("encoder and decoder need at least one hidden layer".into()));
        }
        if self.encoder_hidden.iter().chain(&self.decoder_hidden).any(|&u| u == 0) {
            return Err(Error::InvalidConfig("hidden layers must have at least one unit".into()));
        }
        Ok(())
    }

    /// Glorot-uniform weights and zero biases.
    pub fn build<T: Real, R: Rng + ?Sized>(&self, rng: &mut R) -> Result<IwaeModel<T>> {
        self.validate()?;
        let trunk: Vec<_> = self.encoder_hidden.iter().map(|&u| LayerSpec::dense(u, Activation::Tanh)).collect();
        let width = *self.encoder_hidden.last().expect("validated");
        let encoder_trunk = Mlp::init(self.data_dim, &trunk, rng)?;
        let encoder_mean = Mlp::init(width, &[LayerSpec::dense(self.latent_dim, Activation::Linear)], rng)?;
        let encoder_std = Mlp::init(width, &[LayerSpec::dense(self.latent_dim, Activation::Softplus)], rng)?;

        let mut dec: Vec<_> = self.decoder_hidden.iter().map(|&u| LayerSpec::dense(u, Activation::Tanh)).collect();
        let dwidth = *self.decoder_hidden.last().expect("validated");
        dec.extend((0..self.residual_blocks).map(|_| LayerSpec::residual(dwidth, Activation::Tanh)));
        let head = match self.likelihood {
            LikelihoodKind::GaussianGlobalVar => Activation::Softplus,
            LikelihoodKind::Bernoulli => Activation::Sigmoid,
        };
        dec.push(LayerSpec::dense(self.data_dim, head));
        let decoder = Mlp::init(self.latent_dim, &dec, rng)?;
        IwaeModel::from_parts(
            encoder_trunk,
            encoder_mean,
            encoder_std,
            decoder,
            self.likelihood,
            T::lit(INITIAL_LOG_VARIANCE),
        )
    }
}

/// Diagonal-Gaussian inference network plus a decoder with a Gaussian
/// (global variance) or Bernoulli likelihood.
#[derive(Clone, Debug, PartialEq)]
pub struct IwaeModel<T> {
    pub(crate) encoder_trunk: Mlp<T>,
    pub(crate) encoder_mean: Mlp<T>,
    pub(crate) encoder_std: Mlp<T>,
    pub(crate) decoder: Mlp<T>,
    pub(crate) likelihood: LikelihoodKind,
    pub(crate) log_variance: T,
}

/// Encoder outputs, latent draws and decoder means for a batch, with the
/// traces needed to backpropagate.
pub(crate) struct BatchPass<T> {
    pub trunk: crate::numerics::Trace<T>,
    pub mean: crate::numerics::Trace<T>,
    pub std: crate::numerics::Trace<T>,
    pub decoder: crate::numerics::Trace<T>,
    /// `(B·K, Nz)`, row `b·K + k`
    pub z: Array2<T>,
    /// `(B, K)`
    pub log_weights: Array2<T>,
}

fn output_activation<T: Real>(net: &Mlp<T>) -> Activation {
    net.layers().last().map(|l| l.activation()).unwrap_or(Activation::Linear)
}

impl<T: Real> IwaeModel<T> {
    pub fn from_parts(
        encoder_trunk: Mlp<T>,
        encoder_mean: Mlp<T>,
        encoder_std: Mlp<T>,
        decoder: Mlp<T>,
        likelihood: LikelihoodKind,
        log_variance: T,
    ) -> Result<Self> {
        let width = encoder_trunk.output_dim();
        check_dim("encoder mean head input", width, encoder_mean.input_dim())?;
        check_dim("encoder std head input", width, encoder_std.input_dim())?;
        let nz = encoder_mean.output_dim();
        check_dim("encoder std head output", nz, encoder_std.output_dim())?;
        check_dim("decoder input", nz, decoder.input_dim())?;
        check_dim("decoder output", encoder_trunk.input_dim(), decoder.output_dim())?;
        if output_activation(&encoder_std) != Activation::Softplus {
            return Err(Error::InvalidNetwork("encoder std head must end in softplus".into()));
        }
        if likelihood == LikelihoodKind::Bernoulli && output_activation(&decoder) != Activation::Sigmoid {
            return Err(Error::InvalidNetwork("Bernoulli decoder must end in sigmoid".into()));
        }
        if !log_variance.is_finite() {
            return Err(Error::NonFinite("log-variance".into()));
        }
        Ok(Self {
            encoder_trunk,
            encoder_mean,
            encoder_std,
            decoder,
            likelihood,
            log_variance,
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.decoder.input_dim()
    }

    pub fn data_dim(&self) -> usize {
        self.decoder.output_dim()
    }

    pub fn likelihood(&self) -> LikelihoodKind {
        self.likelihood
    }

    pub fn log_variance(&self) -> T {
        self.log_variance
    }

    pub fn decoder(&self) -> &Mlp<T> {
        &self.decoder
    }

    pub fn encoder_trunk(&self) -> &Mlp<T> {
        &self.encoder_trunk
    }

    pub fn encoder_mean(&self) -> &Mlp<T> {
        &self.encoder_mean
    }

    pub fn encoder_std(&self) -> &Mlp<T> {
        &self.encoder_std
    }

    pub fn num_params(&self) -> usize {
        self.encoder_trunk.num_params()
            + self.encoder_mean.num_params()
            + self.encoder_std.num_params()
            + self.decoder.num_params()
            + usize::from(self.likelihood == LikelihoodKind::GaussianGlobalVar)
    }

    pub fn encode(&self, x: ArrayView1<T>) -> Result<(Array1<T>, Array1<T>)> {
        check_dim("encoder input", self.data_dim(), x.len())?;
        let (mu, sigma) = self.encode_batch(x.insert_axis(Axis(0)))?;
        Ok((mu.row(0).to_owned(), sigma.row(0).to_owned()))
    }

    pub fn encode_batch(&self, x: ArrayView2<T>) -> Result<(Array2<T>, Array2<T>)> {
        check_dim("encoder input", self.data_dim(), x.ncols())?;
        let h = self.encoder_trunk.forward_batch(x)?;
        Ok((self.encoder_mean.forward_batch(h.view())?, self.encoder_std.forward_batch(h.view())?))
    }

    pub fn decode(&self, z: ArrayView1<T>) -> Result<Array1<T>> {
        self.decoder.forward(z)
    }

    pub fn decode_batch(&self, z: ArrayView2<T>) -> Result<Array2<T>> {
        self.decoder.forward_batch(z)
    }

    /// `ln p(x|z)` for a decoder mean row.
    fn log_likelihood_of_mean(&self, x: ArrayView1<T>, mean: ArrayView1<T>) -> T {
        match self.likelihood {
            LikelihoodKind::GaussianGlobalVar => {
                let lv = self.log_variance;
                let inv = (-lv).exp();
                let c = T::lit(HALF_LN_2PI) + T::lit(0.5) * lv;
                x.iter()
                    .zip(mean.iter())
                    .map(|(&xi, &mi)| -c - T::lit(0.5) * (xi - mi) * (xi - mi) * inv)
                    .sum()
            }
            LikelihoodKind::Bernoulli => {
                let lo = T::lit(BERNOULLI_CLAMP);
                let hi = T::one() - lo;
                x.iter()
                    .zip(mean.iter())
                    .map(|(&xi, &pi)| {
                        let p = pi.max(lo).min(hi);
                        xi * p.ln() + (T::one() - xi) * (T::one() - p).ln()
                    })
                    .sum()
            }
        }
    }

    fn check_binary(&self, x: ArrayView1<T>) -> Result<()> {
        if self.likelihood == LikelihoodKind::Bernoulli && x.iter().any(|&v| v != T::zero() && v != T::one()) {
            return Err(Error::InvalidData("Bernoulli likelihood needs binary data".into()));
        }
        Ok(())
    }

    pub(crate) fn check_data(&self, data: ArrayView2<T>) -> Result<()> {
        check_dim("data dimension", self.data_dim(), data.ncols())?;
        for row in data.outer_iter() {
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidData("data contains non-finite values".into()));
            }
            self.check_binary(row)?;
        }
        Ok(())
    }

    /// `ln p(x|z)`.
    pub fn log_likelihood(&self, x: ArrayView1<T>, z: ArrayView1<T>) -> Result<T> {
        check_dim("data dimension", self.data_dim(), x.len())?;
        self.check_binary(x)?;
        let mean = self.decode(z)?;
        Ok(self.log_likelihood_of_mean(x, mean.view()))
    }

    /// Log importance weights `ln p(x|z_k) + ln p(z_k) − ln q(z_k|x)` for the
    /// draws `z_k = μ + σ ⊙ eps_k` (one row of `eps` per draw).
    pub fn log_weights(&self, x: ArrayView1<T>, eps: ArrayView2<T>) -> Result<Array1<T>> {
        check_dim("data dimension", self.data_dim(), x.len())?;
        check_dim("noise dimension", self.latent_dim(), eps.ncols())?;
        self.check_binary(x)?;
        let (mu, sigma) = self.encode(x)?;
        let z = &eps * &sigma + &mu;
        let means = self.decoder.forward_batch(z.view())?;
        Ok(Array1::from_iter((0..eps.nrows()).map(|k| {
            self.log_likelihood_of_mean(x, means.row(k)) + log_prior(z.row(k)) - log_proposal(sigma.view(), eps.row(k))
        })))
    }

    /// Single-draw evidence lower bound estimate.
    pub fn elbo_estimate(&self, x: ArrayView1<T>, eps: ArrayView1<T>) -> Result<T> {
        Ok(self.iwae_estimate(x, eps.insert_axis(Axis(0)))?)
    }

    /// `ln (1/K) Σ_k w_k` over the `K` rows of `eps`.
    pub fn iwae_estimate(&self, x: ArrayView1<T>, eps: ArrayView2<T>) -> Result<T> {
        if eps.nrows() == 0 {
            return Err(Error::InvalidConfig("need at least one importance sample".into()));
        }
        Ok(log_mean_exp(self.log_weights(x, eps)?.view()))
    }

    /// Forward pass for a minibatch with `K` draws per row.
    pub(crate) fn batch_pass(&self, x: ArrayView2<T>, eps: ArrayView2<T>, k: usize) -> Result<BatchPass<T>> {
        let b = x.nrows();
        check_dim("noise rows", b * k, eps.nrows())?;
        let trunk = self.encoder_trunk.forward_trace(x)?;
        let mean = self.encoder_mean.forward_trace(trunk.output().view())?;
        let std = self.encoder_std.forward_trace(trunk.output().view())?;
        let nz = self.latent_dim();
        let mut z = Array2::zeros((b * k, nz));
        for (r, mut row) in z.outer_iter_mut().enumerate() {
            let i = r / k;
            for j in 0..nz {
                row[j] = mean.output()[[i, j]] + std.output()[[i, j]] * eps[[r, j]];
            }
        }
        let decoder = self.decoder.forward_trace(z.view())?;
        let mut log_weights = Array2::zeros((b, k));
        for r in 0..b * k {
            let i = r / k;
            log_weights[[i, r % k]] = self.log_likelihood_of_mean(x.row(i), decoder.output().row(r)) + log_prior(z.row(r))
                - log_proposal(std.output().row(i), eps.row(r));
        }
        Ok(BatchPass {
            trunk,
            mean,
            std,
            decoder,
            z,
            log_weights,
        })
    }

    /// `∂ ln p(x|z)/∂mean` for one row, and `∂/∂ log-variance`.
    pub(crate) fn likelihood_grad(&self, x: ArrayView1<T>, mean: ArrayView1<T>, out: &mut [T]) -> T {
        match self.likelihood {
            LikelihoodKind::GaussianGlobalVar => {
                let inv = (-self.log_variance).exp();
                let mut dlv = T::zero();
                for ((o, &xi), &mi) in out.iter_mut().zip(x.iter()).zip(mean.iter()) {
                    let r = xi - mi;
                    *o = r * inv;
                    dlv += T::lit(0.5) * (r * r * inv - T::one());
                }
                dlv
            }
            LikelihoodKind::Bernoulli => {
                let lo = T::lit(BERNOULLI_CLAMP);
                let hi = T::one() - lo;
                for ((o, &xi), &pi) in out.iter_mut().zip(x.iter()).zip(mean.iter()) {
                    *o = if pi < lo || pi > hi {
                        T::zero()
                    } else {
                        xi / pi - (T::one() - xi) / (T::one() - pi)
                    };
                }
                T::zero()
            }
        }
    }
}

/// `z = μ + σ ⊙ eps`.
pub fn reparam_sample<T: Real>(mu: ArrayView1<T>, sigma: ArrayView1<T>, eps: ArrayView1<T>) -> Result<Array1<T>> {
    check_dim("sigma length", mu.len(), sigma.len())?;
    check_dim("noise length", mu.len(), eps.len())?;
    Ok(&mu + &(&sigma * &eps))
}

/// Standard-normal log-density.
pub fn log_prior<T: Real>(z: ArrayView1<T>) -> T {
    z.iter().map(|&v| -T::lit(HALF_LN_2PI) - T::lit(0.5) * v * v).sum()
}

/// `ln q(μ + σ ⊙ eps | x)` written in terms of the noise.
fn log_proposal<T: Real>(sigma: ArrayView1<T>, eps: ArrayView1<T>) -> T {
    sigma
        .iter()
        .zip(eps.iter())
        .map(|(&s, &e)| -T::lit(HALF_LN_2PI) - s.ln() - T::lit(0.5) * e * e)
        .sum()
}

/// Numerically stable `ln((1/n) Σ exp(v_i))`.
pub fn log_mean_exp<T: Real>(values: ArrayView1<T>) -> T {
    let m = values.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
    if !m.is_finite() {
        return m;
    }
    let s: T = values.iter().map(|&v| (v - m).exp()).sum();
    m + (s / T::lit(values.len() as f64)).ln()
}

/// Self-normalized importance weights `softmax(values)`.
pub(crate) fn normalized_weights<T: Real>(values: ArrayView1<T>) -> Array1<T> {
    let m = values.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
    let e = values.mapv(|v| (v - m).exp());
    let s = e.sum();
    e / s
}
