//! Exact and sigmoid-reformulated quantized log-likelihoods, their ascent
//! and projected-gradient solvers, the soft constellation projector and an
//! exhaustive ML detector.
//!
//! Both estimation and detection share one model: the unquantized signal is
//! `D v + z` with `z ~ N(0, (n0 / 2) I)`, and only the bin `(q_low, q_up]` of
//! every entry is observed. With `s = sqrt(2 rho) (q - D v)` the likelihood
//! of one entry is `Phi(s_up) - Phi(s_low)`.

use crate::bussgang::BussgangModel;
use crate::error::{Error, Result};
use crate::kernels::{log_cdf_diff, log_sigmoid_diff, sigmoid, SIGMOID_C};
use crate::linalg::{spd_inverse, LinearOperator, RMatrix, RVector};
use crate::quantizer::{relu, QuantizedObservation};
use crate::system::Constellation;

/// Design matrix, observed bins and SNR of one quantized observation.
#[derive(Debug)]
pub struct LikelihoodContext<'a, D: LinearOperator + ?Sized> {
    pub design: &'a D,
    pub q_up: &'a RVector,
    pub q_low: &'a RVector,
    pub rho: f64,
}

impl<D: LinearOperator + ?Sized> Clone for LikelihoodContext<'_, D> {
    fn clone(&self) -> Self {
        *self
    }
}

impl<D: LinearOperator + ?Sized> Copy for LikelihoodContext<'_, D> {}

impl<'a, D: LinearOperator + ?Sized> LikelihoodContext<'a, D> {
    pub fn new(design: &'a D, obs: &'a QuantizedObservation, rho: f64) -> Result<Self> {
        if design.nrows() != obs.len() {
            return Err(Error::LengthMismatch { left: design.nrows(), right: obs.len() });
        }
        if obs.q_low.iter().zip(obs.q_up.iter()).any(|(l, u)| !(l < u)) {
            return Err(Error::Config("bin edges must satisfy q_low < q_up".into()));
        }
        if !(rho > 0.0) {
            return Err(Error::NonPositiveVariance(rho));
        }
        Ok(Self { design, q_up: &obs.q_up, q_low: &obs.q_low, rho })
    }

    /// `sqrt(2 rho)`, the inverse noise standard deviation per real dimension.
    pub fn noise_scale(&self) -> f64 {
        (2.0 * self.rho).sqrt()
    }

    /// `c sqrt(2 rho)`
    pub fn sigmoid_scale(&self) -> f64 {
        SIGMOID_C * self.noise_scale()
    }

    fn forward(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.design.ncols(), "unknown has wrong length");
        let mut u = vec![0.0; self.design.nrows()];
        self.design.apply(v, &mut u);
        u
    }
}

/// `sum_i ln(Phi(s_up_i) - Phi(s_low_i))`; `-inf` when some bin has
/// vanishing probability.
pub fn ml_objective_exact<D: LinearOperator + ?Sized>(v: &[f64], ctx: &LikelihoodContext<D>) -> f64 {
    let s = ctx.noise_scale();
    let u = ctx.forward(v);
    u.iter()
        .enumerate()
        .map(|(i, &ui)| log_cdf_diff(s * (ctx.q_up[i] - ui), s * (ctx.q_low[i] - ui)))
        .sum()
}

/// The same objective with `Phi(t)` replaced by `sigmoid(c t)`.
pub fn ml_objective_reformulated<D: LinearOperator + ?Sized>(v: &[f64], ctx: &LikelihoodContext<D>) -> f64 {
    let s = ctx.sigmoid_scale();
    let u = ctx.forward(v);
    u.iter()
        .enumerate()
        .map(|(i, &ui)| log_sigmoid_diff(s * (ctx.q_up[i] - ui), s * (ctx.q_low[i] - ui)))
        .sum()
}

/// `g_i = 1 - sigmoid(beta (u_i - q_up_i)) - sigmoid(beta (u_i - q_low_i))`,
/// exact at the infinite edges.
pub fn bin_residual(u: &[f64], q_up: &RVector, q_low: &RVector, beta: f64, out: &mut [f64]) {
    for i in 0..u.len() {
        out[i] = 1.0 - sigmoid(beta * (u[i] - q_up[i])) - sigmoid(beta * (u[i] - q_low[i]));
    }
}

/// Gradient `c sqrt(2 rho) D^T g` of [`ml_objective_reformulated`].
pub fn ml_gradient_reformulated<D: LinearOperator + ?Sized>(v: &[f64], ctx: &LikelihoodContext<D>) -> RVector {
    let beta = ctx.sigmoid_scale();
    let u = ctx.forward(v);
    let mut g = vec![0.0; u.len()];
    bin_residual(&u, ctx.q_up, ctx.q_low, beta, &mut g);
    let mut out = RVector::zeros(ctx.design.ncols());
    ctx.design.apply_transpose(&g, out.as_mut_slice());
    out * beta
}

/// `h <- h + alpha_l * grad` for each step size, starting from zero.
pub fn gradient_ascent_channel<D: LinearOperator + ?Sized>(ctx: &LikelihoodContext<D>, steps: &[f64]) -> RVector {
    let mut h = RVector::zeros(ctx.design.ncols());
    for &alpha in steps {
        let g = ml_gradient_reformulated(h.as_slice(), ctx);
        h.axpy(alpha, &g, 1.0);
    }
    h
}

/// Per-dimension constellation geometry for the soft projector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstellationProjectorSpec {
    pub b_prime: u32,
    pub delta_prime: f64,
}

impl ConstellationProjectorSpec {
    pub fn for_constellation(c: Constellation) -> Self {
        match c {
            Constellation::Qpsk => Self { b_prime: 1, delta_prime: 2f64.sqrt() },
            Constellation::Qam16 => Self { b_prime: 2, delta_prime: 2.0 / 10f64.sqrt() },
        }
    }

    /// `B' = 2^(b'-1) - 1`
    pub fn half_span(&self) -> i32 {
        (1 << (self.b_prime - 1)) - 1
    }

    /// `(2^b' - 1) delta' / 2`
    pub fn bound(&self) -> f64 {
        ((1u32 << self.b_prime) - 1) as f64 * self.delta_prime / 2.0
    }
}

/// Derivatives of the projector output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectorValue {
    pub value: f64,
    pub d_x: f64,
    pub d_t: f64,
}

/// Piecewise-linear projection with ramps of half-width `t` at every
/// decision boundary.
pub fn projector_psi(x: f64, t: f64, spec: &ConstellationProjectorSpec) -> f64 {
    projector_with_grad(x, t, spec).value
}

pub fn projector_with_grad(x: f64, t: f64, spec: &ConstellationProjectorSpec) -> ProjectorValue {
    let d = spec.delta_prime;
    let k = d / (2.0 * t);
    let (mut sum, mut hits, mut edges) = (0.0, 0.0, 0.0);
    for i in -spec.half_span()..=spec.half_span() {
        let c = x + i as f64 * d;
        sum += relu(c + t) - relu(c - t);
        let (up, low) = (heaviside(c + t), heaviside(c - t));
        hits += up - low;
        edges += up + low;
    }
    ProjectorValue {
        value: -spec.bound() + k * sum,
        d_x: k * hits,
        d_t: -k / t * sum + k * edges,
    }
}

fn heaviside(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Which objective drives [`projected_gradient_detect`].
#[derive(Debug, Clone, Copy)]
pub enum DetectionObjective<'a> {
    /// Linearized model `y = A x + n`: descent on `(y - A x)^T Sigma_n^{-1} (y - A x)`.
    Bussgang { model: &'a BussgangModel, y: &'a RVector },
    /// Ascent on the reformulated quantized likelihood.
    Quantized(LikelihoodContext<'a, RMatrix>),
}

/// `x <- psi_{t_l}(x + alpha_l * d(x))` from `x = 0`, with `d` the ascent
/// direction of the chosen objective.
pub fn projected_gradient_detect(
    objective: DetectionObjective,
    alpha: &[f64],
    t: &[f64],
    spec: &ConstellationProjectorSpec,
) -> Result<RVector> {
    if alpha.len() != t.len() {
        return Err(Error::LengthMismatch { left: alpha.len(), right: t.len() });
    }
    let mut x = match objective {
        DetectionObjective::Bussgang { model, .. } => RVector::zeros(model.a.ncols()),
        DetectionObjective::Quantized(ctx) => RVector::zeros(ctx.design.ncols()),
    };
    let sigma_n_inv = match objective {
        DetectionObjective::Bussgang { model, .. } => Some(spd_inverse(&model.sigma_n)?),
        DetectionObjective::Quantized(_) => None,
    };
    for (&a, &tl) in alpha.iter().zip(t) {
        let dir = match objective {
            DetectionObjective::Bussgang { model, y } => {
                let w = sigma_n_inv.as_ref().expect("set for Bussgang mode");
                model.a.transpose() * (w * (y - &model.a * &x)) * 2.0
            }
            DetectionObjective::Quantized(ctx) => ml_gradient_reformulated(x.as_slice(), &ctx),
        };
        x.axpy(a, &dir, 1.0);
        x.apply(|xi| *xi = projector_psi(*xi, tl, spec));
    }
    Ok(x)
}

/// Largest constellation search [`exhaustive_ml_detect`] will attempt.
pub const MAX_SEARCH: u128 = 1_000_000;

/// Maximizes [`ml_objective_exact`] over all `M^K` symbol vectors. Candidates
/// are visited in lexicographic order of per-user symbol indices (user 0
/// most significant, real level before imaginary level) and the first
/// maximizer wins.
pub fn exhaustive_ml_detect(ctx: &LikelihoodContext<RMatrix>, constellation: Constellation, users: usize) -> Result<RVector> {
    let order = constellation.order() as u128;
    let size = order.checked_pow(users as u32).unwrap_or(u128::MAX);
    if size > MAX_SEARCH {
        return Err(Error::SearchTooLarge(size));
    }
    if ctx.design.ncols() != 2 * users {
        return Err(Error::LengthMismatch { left: ctx.design.ncols(), right: 2 * users });
    }
    let levels = constellation.levels();
    let per_dim = levels.len();
    let mut idx = vec![0usize; users];
    let mut x = vec![0.0; 2 * users];
    let mut best = (f64::NEG_INFINITY, RVector::zeros(2 * users));
    let mut found = false;
    for _ in 0..size {
        for k in 0..users {
            x[k] = levels[idx[k] / per_dim];
            x[users + k] = levels[idx[k] % per_dim];
        }
        let value = ml_objective_exact(&x, ctx);
        if !found || value > best.0 {
            best = (value, RVector::from_column_slice(&x));
            found = true;
        }
        for k in (0..users).rev() {
            idx[k] += 1;
            if idx[k] < order as usize {
                break;
            }
            idx[k] = 0;
        }
    }
    Ok(best.1)
}
