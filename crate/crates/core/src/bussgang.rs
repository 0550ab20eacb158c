//! Bussgang linearization `y = V r + d` of the quantized observation, its
//! covariances, and the linear estimators and detectors built on it.
//!
//! Everything here lives in the real domain, where each real dimension of a
//! `CN(0, s)` entry has variance `s / 2`. The familiar complex-domain
//! expressions for the gain and the arcsine law are rewritten accordingly:
//! the gain uses `2 sigma^2` in place of the complex variance and the one-bit
//! output power per real dimension is `(delta / 2)^2`.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::kernels::{normal_cdf, normal_pdf, normal_sf};
use crate::linalg::{regularize, spd_factor, spd_inverse, RMatrix, RVector};
use crate::pilot::PilotSet;
use crate::quantizer::{QuantizedObservation, QuantizerSpec};

/// Prior variance of one real dimension of a CN(0, 1) channel entry.
pub const CHANNEL_PRIOR_VAR: f64 = 0.5;
/// Prior variance of one real dimension of a unit-power symbol.
pub const SYMBOL_PRIOR_VAR: f64 = 0.5;

/// Linearization artifacts for one scenario.
#[derive(Debug, Clone)]
pub struct BussgangModel {
    /// Diagonal of the gain `V`.
    pub v: RVector,
    pub sigma_r: RMatrix,
    pub sigma_y: RMatrix,
    /// Effective noise covariance, symmetrized and jitter-regularized.
    pub sigma_n: RMatrix,
    /// Effective design `V P` or `V H`.
    pub a: RMatrix,
    pub eta: f64,
}

/// Diagonal Bussgang gain for inputs with the given real-domain variances:
/// `V_ii = delta / (sqrt(2 pi) s_i) * sum_l exp(-delta^2 (l - 2^(b-1))^2 / (2 s_i^2))`.
pub fn bussgang_gain(sigma_r_diag: &[f64], spec: &QuantizerSpec) -> Result<RVector> {
    let half = (1i64 << (spec.bits - 1)) as f64;
    let n_thr = (1usize << spec.bits) - 1;
    let mut v = RVector::zeros(sigma_r_diag.len());
    for (i, &var) in sigma_r_diag.iter().enumerate() {
        if !(var > 0.0) {
            return Err(Error::NonPositiveVariance(var));
        }
        let s = var.sqrt();
        let sum: f64 = (1..=n_thr)
            .map(|l| {
                let k = l as f64 - half;
                (-spec.delta * spec.delta * k * k / (2.0 * var)).exp()
            })
            .sum();
        v[i] = spec.delta / ((2.0 * PI).sqrt() * s) * sum;
    }
    Ok(v)
}

/// `prior_var * P P^T + (n0 / 2) I`
pub fn sigma_r_training(p: &RMatrix, prior_var: f64, n0: f64) -> RMatrix {
    let mut s = p * p.transpose() * prior_var;
    for i in 0..s.nrows() {
        s[(i, i)] += n0 / 2.0;
    }
    s
}

/// `(H H^T + n0 I) / 2`
pub fn sigma_r_detection(h: &RMatrix, n0: f64) -> RMatrix {
    let mut s = h * h.transpose();
    for i in 0..s.nrows() {
        s[(i, i)] += n0;
    }
    s * 0.5
}

/// `D^{-1/2} S D^{-1/2}` with entries clamped to `[-1, 1]`.
fn correlation(sigma_r: &RMatrix) -> Result<RMatrix> {
    let n = sigma_r.nrows();
    let mut inv_sd = vec![0.0; n];
    for i in 0..n {
        let d = sigma_r[(i, i)];
        if !(d > 0.0) {
            return Err(Error::NonPositiveVariance(d));
        }
        inv_sd[i] = 1.0 / d.sqrt();
    }
    Ok(RMatrix::from_fn(n, n, |i, j| {
        if i == j {
            1.0
        } else {
            (sigma_r[(i, j)] * inv_sd[i] * inv_sd[j]).clamp(-1.0, 1.0)
        }
    }))
}

/// One-bit arcsine law: `E[y y^T] = (delta^2 / (2 pi)) arcsin(C)`.
pub fn sigma_y_onebit(sigma_r: &RMatrix, delta: f64) -> Result<RMatrix> {
    let c = correlation(sigma_r)?;
    Ok(c.map(|x| x.asin()) * (delta * delta / (2.0 * PI)))
}

/// `V S V^T + eta diag(S)`
pub fn sigma_y_fewbit(v: &RVector, sigma_r: &RMatrix, eta: f64) -> RMatrix {
    let n = sigma_r.nrows();
    RMatrix::from_fn(n, n, |i, j| {
        let base = v[i] * sigma_r[(i, j)] * v[j];
        if i == j {
            base + eta * sigma_r[(i, i)]
        } else {
            base
        }
    })
}

pub fn sigma_y(v: &RVector, sigma_r: &RMatrix, spec: &QuantizerSpec) -> Result<RMatrix> {
    if spec.bits == 1 {
        sigma_y_onebit(sigma_r, spec.delta)
    } else {
        Ok(sigma_y_fewbit(v, sigma_r, spec.eta))
    }
}

/// Covariance of `n = V z + d`. Exact for one bit,
/// `(delta^2 / (2 pi)) [arcsin(C) - C + (n0 / 2) D^{-1}]`; otherwise the
/// approximation `(n0 / 2) V V^T + eta diag(S)`. Regularized for inversion.
pub fn sigma_n(sigma_r: &RMatrix, v: &RVector, spec: &QuantizerSpec, n0: f64) -> Result<RMatrix> {
    let n = sigma_r.nrows();
    let raw = if spec.bits == 1 {
        let c = correlation(sigma_r)?;
        let k = spec.delta * spec.delta / (2.0 * PI);
        RMatrix::from_fn(n, n, |i, j| {
            let mut x = c[(i, j)].asin() - c[(i, j)];
            if i == j {
                x += n0 / 2.0 / sigma_r[(i, i)];
            }
            k * x
        })
    } else {
        RMatrix::from_fn(n, n, |i, j| {
            if i == j {
                n0 / 2.0 * v[i] * v[i] + spec.eta * sigma_r[(i, i)]
            } else {
                0.0
            }
        })
    };
    Ok(regularize(&raw))
}

fn scale_rows(v: &RVector, m: &RMatrix) -> RMatrix {
    let mut a = m.clone();
    for (i, mut row) in a.row_iter_mut().enumerate() {
        row *= v[i];
    }
    a
}

/// Linearized training-phase model for a dense design `P`.
pub fn linearize_training(p: &RMatrix, prior_var: f64, n0: f64, spec: &QuantizerSpec) -> Result<BussgangModel> {
    let sigma_r = sigma_r_training(p, prior_var, n0);
    build_model(p, sigma_r, n0, spec)
}

/// Linearized data-phase model `y = A x + n` for a real-stacked channel `H`.
pub fn linearize_detection(h: &RMatrix, n0: f64, spec: &QuantizerSpec) -> Result<BussgangModel> {
    let sigma_r = sigma_r_detection(h, n0);
    build_model(h, sigma_r, n0, spec)
}

fn build_model(design: &RMatrix, sigma_r: RMatrix, n0: f64, spec: &QuantizerSpec) -> Result<BussgangModel> {
    let diag: Vec<f64> = sigma_r.diagonal().iter().copied().collect();
    let v = bussgang_gain(&diag, spec)?;
    let (sigma_y, sigma_n) = if spec.bits == 1 {
        // share the arcsine of the correlation matrix between both covariances
        let c = correlation(&sigma_r)?;
        let k = spec.delta * spec.delta / (2.0 * PI);
        let arc = c.map(|x| x.asin());
        let mut noise = (&arc - &c) * k;
        for i in 0..noise.nrows() {
            noise[(i, i)] += k * n0 / 2.0 / diag[i];
        }
        (arc * k, regularize(&noise))
    } else {
        (sigma_y_fewbit(&v, &sigma_r, spec.eta), sigma_n(&sigma_r, &v, spec, n0)?)
    };
    let a = scale_rows(&v, design);
    Ok(BussgangModel { v, sigma_r, sigma_y, sigma_n, a, eta: spec.eta })
}

/// Linear MMSE estimate `prior_var * A^T Sigma_y^{-1} y`.
pub fn bmmse_estimate(y: &RVector, a: &RMatrix, sigma_y: &RMatrix, prior_var: f64) -> Result<RVector> {
    let ch = spd_factor(sigma_y)?;
    let w = ch.solve(y);
    Ok(a.transpose() * w * prior_var)
}

/// Second moment of the distortion `d = y - V r` given the observed bin,
/// with `r ~ N(0, var)` truncated to `(q_low, q_up]`.
pub fn distortion_power(y: f64, q_low: f64, q_up: f64, var: f64, gain: f64) -> f64 {
    let s = var.sqrt();
    let (a, b) = (q_low / s, q_up / s);
    let z = if a > 0.0 { normal_sf(a) - normal_sf(b) } else { normal_cdf(b) - normal_cdf(a) };
    let (pa, pb) = (normal_pdf(a), normal_pdf(b));
    let apa = if a.is_finite() { a * pa } else { 0.0 };
    let bpb = if b.is_finite() { b * pb } else { 0.0 };
    if z > 1e-300 {
        let m1 = s * (pa - pb) / z;
        let m2 = var * (1.0 + (apa - bpb) / z);
        (y * y - 2.0 * y * gain * m1 + gain * gain * m2).max(0.0)
    } else {
        // bin far in the tail: r sits at the finite edge nearest the mean
        let edge = if a.is_finite() && (b.is_infinite() || a.abs() < b.abs()) { q_low } else { q_up };
        (y - gain * edge).powi(2)
    }
}

/// Per-entry weights `1 / (n0 / 2 + E[d_i^2 | y_i])`.
pub fn bwzf_weights(obs: &QuantizedObservation, sigma_r_diag: &[f64], v: &RVector, n0: f64) -> RVector {
    RVector::from_fn(obs.len(), |i, _| {
        let d2 = distortion_power(obs.y[i], obs.q_low[i], obs.q_up[i], sigma_r_diag[i], v[i]);
        1.0 / (n0 / 2.0 + d2)
    })
}

/// Weighted zero-forcing `(A^T W A)^{-1} A^T W y`.
pub fn bwzf_estimate(y: &RVector, a: &RMatrix, w: &RVector) -> Result<RVector> {
    let aw = RMatrix::from_fn(a.ncols(), a.nrows(), |i, j| a[(j, i)] * w[j]);
    let normal = &aw * a;
    let rhs = &aw * y;
    Ok(spd_factor(&normal)?.solve(&rhs))
}

/// Linear MMSE detector output `prior_var * A^T Sigma_y^{-1} y` before slicing.
pub fn bmmse_detect(y: &RVector, model: &BussgangModel) -> Result<RVector> {
    bmmse_estimate(y, &model.a, &model.sigma_y, SYMBOL_PRIOR_VAR)
}

/// BMMSE and BWZF channel estimators for a Kronecker-structured pilot.
///
/// The training observation decouples across antennas: antenna `n` sees
/// `stack(X^T) h_n` with the same `2T x 2K` design, so every covariance is
/// block diagonal with identical blocks. Estimates are exactly those of the
/// dense estimators on the full design.
#[derive(Debug, Clone)]
pub struct LinearChannelEstimator {
    antennas: usize,
    users: usize,
    pilot_len: usize,
    n0: f64,
    a: RMatrix,
    sigma_r_diag: Vec<f64>,
    v: RVector,
    bmmse: RMatrix,
}

impl LinearChannelEstimator {
    pub fn new(pilot: &PilotSet, spec: &QuantizerSpec, n0: f64) -> Result<Self> {
        let d = pilot.antenna_design();
        let model = linearize_training(&d, CHANNEL_PRIOR_VAR, n0, spec)?;
        let sigma_y_inv = spd_inverse(&model.sigma_y)?;
        let bmmse = model.a.transpose() * sigma_y_inv * CHANNEL_PRIOR_VAR;
        Ok(Self {
            antennas: pilot.antennas,
            users: pilot.users(),
            pilot_len: pilot.len(),
            n0,
            sigma_r_diag: model.sigma_r.diagonal().iter().copied().collect(),
            v: model.v,
            a: model.a,
            bmmse,
        })
    }

    fn gather(&self, global: &RVector, n: usize, len: usize) -> RVector {
        let half = self.antennas * len;
        RVector::from_fn(2 * len, |i, _| {
            if i < len {
                global[n + self.antennas * i]
            } else {
                global[half + n + self.antennas * (i - len)]
            }
        })
    }

    fn scatter(&self, local: &RVector, n: usize, out: &mut RVector) {
        let k = self.users;
        let half = self.antennas * k;
        for i in 0..k {
            out[n + self.antennas * i] = local[i];
            out[half + n + self.antennas * i] = local[k + i];
        }
    }

    fn local_obs(&self, obs: &QuantizedObservation, n: usize) -> QuantizedObservation {
        QuantizedObservation {
            y: self.gather(&obs.y, n, self.pilot_len),
            q_up: self.gather(&obs.q_up, n, self.pilot_len),
            q_low: self.gather(&obs.q_low, n, self.pilot_len),
        }
    }

    pub fn bmmse(&self, obs: &QuantizedObservation) -> RVector {
        let mut out = RVector::zeros(2 * self.antennas * self.users);
        for n in 0..self.antennas {
            let y = self.gather(&obs.y, n, self.pilot_len);
            self.scatter(&(&self.bmmse * y), n, &mut out);
        }
        out
    }

    pub fn bwzf(&self, obs: &QuantizedObservation) -> Result<RVector> {
        let mut out = RVector::zeros(2 * self.antennas * self.users);
        for n in 0..self.antennas {
            let local = self.local_obs(obs, n);
            let w = bwzf_weights(&local, &self.sigma_r_diag, &self.v, self.n0);
            let h = bwzf_estimate(&local.y, &self.a, &w)?;
            self.scatter(&h, n, &mut out);
        }
        Ok(out)
    }
}
