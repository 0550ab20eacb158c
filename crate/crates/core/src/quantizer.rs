//! Uniform mid-rise `b`-bit quantizer, bin edges, and the ReLU-based soft
//! quantizer used to backpropagate into the pilot.

use crate::error::{Error, Result};
use crate::linalg::RVector;
use crate::system::SystemConfig;

/// Optimal uniform step size for a unit-variance Gaussian input, indexed by `b - 1`.
const STEP: [f64; 4] = [1.595_769_121_605_730_7, 0.996, 0.586, 0.335]; // sqrt(8/pi), ...
/// Matching distortion factors.
const DISTORTION: [f64; 4] = [0.363_380_227_632_418_4, 0.1188, 0.0374, 0.0115]; // 1 - 2/pi, ...

pub fn relu(r: f64) -> f64 {
    r.max(0.0)
}

/// Derivative of [`relu`], taking 0 at the kink.
fn step(r: f64) -> f64 {
    if r > 0.0 {
        1.0
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantizerSpec {
    pub bits: u32,
    /// Step size.
    pub delta: f64,
    /// Distortion factor for the nominal input.
    pub eta: f64,
    /// RMS of the input the tabulated step was scaled to.
    pub scale: f64,
}

/// Output of the soft quantizer and its derivatives with respect to the input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SoftBin {
    pub q: f64,
    pub q_up: f64,
    pub q_low: f64,
    pub dq: f64,
    pub dq_up: f64,
    pub dq_low: f64,
}

/// Quantizer outputs with the edges of the bin each one came from.
///
/// Saturation bins carry `+inf` / `-inf` edges.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedObservation {
    pub y: RVector,
    pub q_up: RVector,
    pub q_low: RVector,
}

impl QuantizedObservation {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

pub fn make_quantizer(bits: u32, scale: f64, delta_override: Option<f64>) -> Result<QuantizerSpec> {
    if !(1..=4).contains(&bits) {
        return Err(Error::UnsupportedBits(bits));
    }
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::Config(format!("quantizer scale must be positive, got {scale}")));
    }
    let idx = bits as usize - 1;
    let delta = match delta_override {
        Some(d) if d > 0.0 && d.is_finite() => d,
        Some(d) => return Err(Error::Config(format!("step size must be positive, got {d}"))),
        None => scale * STEP[idx],
    };
    Ok(QuantizerSpec { bits, delta, eta: DISTORTION[idx], scale })
}

impl QuantizerSpec {
    /// Quantizer matched to the received-signal power of `cfg`.
    pub fn for_system(cfg: &SystemConfig) -> Result<Self> {
        make_quantizer(cfg.bits, cfg.received_real_variance().sqrt(), None)
    }

    /// `2^b`
    pub fn levels_count(&self) -> usize {
        1 << self.bits
    }

    /// `B = 2^(b-1) - 1`
    pub fn half_span(&self) -> i32 {
        (1 << (self.bits - 1)) - 1
    }

    /// Thresholds `tau_1 .. tau_{2^b - 1}`.
    pub fn thresholds(&self) -> Vec<f64> {
        let half = 1i64 << (self.bits - 1);
        (1..self.levels_count() as i64).map(|l| (l - half) as f64 * self.delta).collect()
    }

    /// Output levels, ascending.
    pub fn levels(&self) -> Vec<f64> {
        (1..=self.levels_count()).map(|l| self.level(l)).collect()
    }

    /// Saturation magnitude `(2^b - 1) delta / 2`.
    pub fn clip_level(&self) -> f64 {
        (self.levels_count() - 1) as f64 * self.delta / 2.0
    }

    fn level(&self, l: usize) -> f64 {
        let half = (1usize << (self.bits - 1)) as f64;
        (l as f64 - half - 0.5) * self.delta
    }

    /// 1-based bin index of `r`; bins are `(tau_{l-1}, tau_l]`.
    fn bin_of(&self, r: f64) -> usize {
        let half = (1usize << (self.bits - 1)) as f64;
        let l = (r / self.delta + half).ceil();
        l.clamp(1.0, self.levels_count() as f64) as usize
    }

    pub fn quantize(&self, r: f64) -> f64 {
        self.level(self.bin_of(r))
    }

    /// `(q_low, q_up)` of the bin whose output is `y`.
    pub fn bin_bounds(&self, y: f64) -> Result<(f64, f64)> {
        let half = (1usize << (self.bits - 1)) as f64;
        let l = (y / self.delta + half + 0.5).round();
        let top = self.levels_count() as f64;
        if !(1.0..=top).contains(&l) || (self.level(l as usize) - y).abs() > 1e-9 * self.delta {
            return Err(Error::NotALevel { value: y, bits: self.bits });
        }
        let l = l as usize;
        Ok(self.bounds_of_bin(l))
    }

    fn bounds_of_bin(&self, l: usize) -> (f64, f64) {
        let y = self.level(l);
        let up = if l < self.levels_count() { y + self.delta / 2.0 } else { f64::INFINITY };
        let low = if l > 1 { y - self.delta / 2.0 } else { f64::NEG_INFINITY };
        (low, up)
    }

    /// Quantizes every entry of `r` and records the bin edges.
    pub fn observe(&self, r: &[f64]) -> QuantizedObservation {
        let n = r.len();
        let mut obs = QuantizedObservation {
            y: RVector::zeros(n),
            q_up: RVector::zeros(n),
            q_low: RVector::zeros(n),
        };
        for (i, &ri) in r.iter().enumerate() {
            let l = self.bin_of(ri);
            let (low, up) = self.bounds_of_bin(l);
            obs.y[i] = self.level(l);
            obs.q_up[i] = up;
            obs.q_low[i] = low;
        }
        obs
    }

    /// Piecewise-linear surrogate of [`Self::quantize`] with ramps of
    /// half-width `c1` at each threshold and a saturation ramp of height
    /// `2 c1 c2` standing in for the infinite outer edges.
    pub fn soft_quantize(&self, r: f64, c1: f64, c2: f64) -> SoftBin {
        let d = self.delta;
        let big_b = self.half_span();
        let gain = d / (2.0 * c1);
        let mut q = -self.clip_level();
        let mut dq = 0.0;
        for i in -big_b..=big_b {
            let x = r + i as f64 * d;
            q += gain * (relu(x + c1) - relu(x - c1));
            dq += gain * (step(x + c1) - step(x - c1));
        }
        let edge = big_b as f64 * d;
        let up_ramp = relu(r - edge + c1) - relu(r - edge - c1);
        let dup_ramp = step(r - edge + c1) - step(r - edge - c1);
        let low_ramp = relu(-r - edge + c1) - relu(-r - edge - c1);
        let dlow_ramp = -(step(-r - edge + c1) - step(-r - edge - c1));
        SoftBin {
            q,
            q_up: q + d / 2.0 + c2 * up_ramp,
            q_low: q - d / 2.0 - c2 * low_ramp,
            dq,
            dq_up: dq + c2 * dup_ramp,
            dq_low: dq - c2 * dlow_ramp,
        }
    }
}
