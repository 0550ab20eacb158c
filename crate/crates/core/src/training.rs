//! Adam training of the unfolded networks on freshly sampled batches.
//!
//! One epoch is one batch. Samples are drawn from per-index RNG streams and
//! their gradients are summed in index order, so a run is reproducible
//! regardless of how the batch is split across threads.

use std::io::Write;

use rayon::prelude::*;

use crate::bussgang::linearize_detection;
use crate::error::{Error, Result};
use crate::kernels::{sigmoid, softplus, softplus_inverse};
use crate::likelihood::ConstellationProjectorSpec;
use crate::linalg::{stack_matrix, stack_matrix_as_vector, stack_vector, CMatrix, C64};
use crate::networks::{
    b_detnet_sample_grad, fbm_cenet_sample_grad, fbm_detnet_sample_grad, BDetNetInput, CeNetParams, DetNetGrad,
    DetNetParams, SoftQuantizer,
};
use crate::quantizer::QuantizerSpec;
use crate::sampling::{domain, sample_channel, sample_noise, sample_symbols, stream_rng};
use crate::system::SystemConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch: usize,
    pub lr0: f64,
    /// Multiplicative decay applied every [`Self::decay_every`] epochs.
    pub decay: f64,
    pub decay_every: usize,
    pub c1: f64,
    pub c2: f64,
    pub trainable_pilot: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 2000,
            batch: 1000,
            lr0: 0.002,
            decay: 0.97,
            decay_every: 100,
            c1: 0.01,
            c2: 1000.0,
            trainable_pilot: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr0 > 0.0) {
            return Err(Error::Config(format!("lr0 must be positive, got {}", self.lr0)));
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(Error::Config(format!("decay must lie in (0, 1], got {}", self.decay)));
        }
        if self.batch == 0 || self.decay_every == 0 {
            return Err(Error::Config("batch and decay interval must be at least 1".into()));
        }
        if !(self.c1 > 0.0 && self.c2 > 0.0) {
            return Err(Error::Config("soft quantizer constants must be positive".into()));
        }
        Ok(())
    }

    /// `lr0 * decay^floor(epoch / decay_every)`
    pub fn lr(&self, epoch: usize) -> f64 {
        self.lr0 * self.decay.powi((epoch / self.decay_every) as i32)
    }
}

/// The default schedule `0.002 * 0.97^floor(epoch / 100)`.
pub fn lr_schedule(epoch: usize) -> f64 {
    TrainConfig::default().lr(epoch)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    steps: i32,
}

impl Adam {
    pub fn new(len: usize) -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8, m: vec![0.0; len], v: vec![0.0; len], steps: 0 }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::LengthMismatch { left: self.m.len(), right: grads.len().min(params.len()) });
        }
        self.steps += 1;
        let c1 = 1.0 - self.beta1.powi(self.steps);
        let c2 = 1.0 - self.beta2.powi(self.steps);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grads[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grads[i] * grads[i];
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    pub epoch: usize,
    pub lr: f64,
    pub loss: f64,
}

pub type LossTrace = Vec<LossRecord>;

pub fn write_loss_csv<W: Write>(trace: &[LossRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["epoch", "lr", "loss"])?;
    for r in trace {
        w.write_record([r.epoch.to_string(), format!("{:e}", r.lr), format!("{:e}", r.loss)])?;
    }
    w.flush()?;
    Ok(())
}

/// Aborts a run whose loss stays above ten times its first value for 100
/// consecutive epochs.
struct DivergenceGuard {
    initial: Option<f64>,
    streak: usize,
}

impl DivergenceGuard {
    const FACTOR: f64 = 10.0;
    const PATIENCE: usize = 100;

    fn new() -> Self {
        Self { initial: None, streak: 0 }
    }

    fn observe(&mut self, epoch: usize, loss: f64) -> Result<()> {
        let initial = *self.initial.get_or_insert(loss);
        if !loss.is_finite() || loss > Self::FACTOR * initial {
            self.streak += 1;
        } else {
            self.streak = 0;
        }
        if self.streak >= Self::PATIENCE || (!loss.is_finite() && !initial.is_finite()) {
            return Err(Error::Diverged { epoch, loss, initial });
        }
        Ok(())
    }
}

fn sum_in_order<T, F>(items: Vec<(f64, T)>, mut add: F) -> f64
where
    F: FnMut(&T),
{
    let mut loss = 0.0;
    for (l, g) in &items {
        loss += l;
        add(g);
    }
    loss
}

/// Trains FBM-CENet on `(h, z)` samples. With `tcfg.trainable_pilot` the
/// pilot rows are updated too and then rescaled to unit power; the training
/// forward pass then sees soft bin edges so gradients reach the pilot.
pub fn train_cenet(cfg: &SystemConfig, tcfg: &TrainConfig, mut params: CeNetParams) -> Result<(CeNetParams, LossTrace)> {
    tcfg.validate()?;
    params.trainable_pilot = tcfg.trainable_pilot;
    let quant = QuantizerSpec::for_system(cfg)?;
    let soft = tcfg.trainable_pilot.then_some(SoftQuantizer { c1: tcfg.c1, c2: tcfg.c2 });
    let layers = params.layers();
    let (k, t) = (params.pilot.users(), params.pilot.len());
    let n_pilot = if tcfg.trainable_pilot { 2 * k * t } else { 0 };
    let mut adam = Adam::new(layers + 1 + n_pilot);
    let mut guard = DivergenceGuard::new();
    let mut trace = Vec::with_capacity(tcfg.epochs);
    let rows = 2 * cfg.antennas * t;
    for epoch in 0..tcfg.epochs {
        let base = (epoch * tcfg.batch) as u64;
        let results: Vec<_> = (0..tcfg.batch)
            .into_par_iter()
            .map(|i| {
                let mut rng = stream_rng(cfg.seed, domain::TRAIN_CENET, base + i as u64);
                let h = stack_matrix_as_vector(&sample_channel(cfg, &mut rng));
                let z = sample_noise(rows, cfg.n0(), &mut rng);
                fbm_cenet_sample_grad(&params, &h, &z, &quant, soft)
            })
            .collect();
        let mut grad = vec![0.0; adam.m.len()];
        let loss = sum_in_order(results, |g| {
            for l in 0..layers {
                grad[l] += g.alpha[l];
            }
            grad[layers] += g.beta;
            if let Some(p) = &g.pilot {
                for (j, z) in p.iter().enumerate() {
                    grad[layers + 1 + 2 * j] += z.re;
                    grad[layers + 2 + 2 * j] += z.im;
                }
            }
        }) / tcfg.batch as f64;
        grad.iter_mut().for_each(|g| *g /= tcfg.batch as f64);
        let lr = tcfg.lr(epoch);
        trace.push(LossRecord { epoch, lr, loss });
        guard.observe(epoch, loss)?;

        let mut flat = params.alpha.clone();
        flat.push(params.beta);
        if tcfg.trainable_pilot {
            for z in params.pilot.pilot.iter() {
                flat.push(z.re);
                flat.push(z.im);
            }
        }
        adam.step(&mut flat, &grad, lr)?;
        params.alpha.copy_from_slice(&flat[..layers]);
        params.beta = flat[layers].max(f64::EPSILON);
        if tcfg.trainable_pilot {
            let entries = &flat[layers + 1..];
            params.pilot.pilot = CMatrix::from_fn(k, t, |r, c| {
                let j = r + k * c;
                C64::new(entries[2 * j], entries[2 * j + 1])
            });
            params.pilot.normalize_rows();
        }
    }
    Ok((params, trace))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DetNetKind {
    /// B-DetNet, driven by the Bussgang-linearized model.
    Bussgang,
    /// FBM-DetNet, driven by the quantized likelihood.
    Fbm,
}

impl DetNetKind {
    pub fn name(self) -> &'static str {
        match self {
            DetNetKind::Bussgang => "b-detnet",
            DetNetKind::Fbm => "fbm-detnet",
        }
    }
}

/// Squared-error loss and gradient of one detection sample drawn from
/// stream `(seed, domain, index)`.
pub fn detnet_sample(
    cfg: &SystemConfig,
    quant: &QuantizerSpec,
    spec: &ConstellationProjectorSpec,
    params: &DetNetParams,
    kind: DetNetKind,
    domain: u64,
    index: u64,
) -> Result<(f64, DetNetGrad)> {
    let mut rng = stream_rng(cfg.seed, domain, index);
    let h = stack_matrix(&sample_channel(cfg, &mut rng));
    let (s, _) = sample_symbols(cfg, 1, &mut rng);
    let x = stack_vector(s.as_slice());
    let r = &h * &x + sample_noise(h.nrows(), cfg.n0(), &mut rng);
    let obs = quant.observe(r.as_slice());
    Ok(match kind {
        DetNetKind::Fbm => fbm_detnet_sample_grad(&obs, &h, &x, params, spec),
        DetNetKind::Bussgang => {
            let model = linearize_detection(&h, cfg.n0(), quant)?;
            let input = BDetNetInput::new(&obs.y, &model)?;
            b_detnet_sample_grad(&input, &x, params, spec)
        }
    })
}

/// Trains B-DetNet or FBM-DetNet on fresh `(H, x, z)` samples with the hard
/// quantizer. Projector scales are trained through `t = softplus(raw)`.
pub fn train_detnet(
    cfg: &SystemConfig,
    tcfg: &TrainConfig,
    mut params: DetNetParams,
    kind: DetNetKind,
) -> Result<(DetNetParams, LossTrace)> {
    tcfg.validate()?;
    params.validate()?;
    let quant = QuantizerSpec::for_system(cfg)?;
    let spec = ConstellationProjectorSpec::for_constellation(cfg.constellation);
    let layers = params.layers();
    let with_beta = kind == DetNetKind::Fbm;
    let len = 2 * layers + usize::from(with_beta);
    let mut adam = Adam::new(len);
    let mut guard = DivergenceGuard::new();
    let mut trace = Vec::with_capacity(tcfg.epochs);
    let mut raw_t: Vec<f64> = params.t.iter().map(|&t| softplus_inverse(t)).collect();
    for epoch in 0..tcfg.epochs {
        let base = (epoch * tcfg.batch) as u64;
        let results = (0..tcfg.batch)
            .into_par_iter()
            .map(|i| detnet_sample(cfg, &quant, &spec, &params, kind, domain::TRAIN_DETNET, base + i as u64))
            .collect::<Result<Vec<_>>>()?;
        let mut grad = vec![0.0; len];
        let loss = sum_in_order(results, |g| {
            for l in 0..layers {
                grad[l] += g.alpha[l];
                grad[layers + l] += g.t[l] * sigmoid(raw_t[l]);
            }
            if with_beta {
                grad[2 * layers] += g.beta;
            }
        }) / tcfg.batch as f64;
        grad.iter_mut().for_each(|g| *g /= tcfg.batch as f64);
        let lr = tcfg.lr(epoch);
        trace.push(LossRecord { epoch, lr, loss });
        guard.observe(epoch, loss)?;

        let mut flat = params.alpha.clone();
        flat.extend_from_slice(&raw_t);
        if with_beta {
            flat.push(params.beta);
        }
        adam.step(&mut flat, &grad, lr)?;
        params.alpha.copy_from_slice(&flat[..layers]);
        raw_t.copy_from_slice(&flat[layers..2 * layers]);
        params.t = raw_t.iter().map(|&r| softplus(r).max(f64::MIN_POSITIVE)).collect();
        if with_beta {
            params.beta = flat[2 * layers].max(f64::EPSILON);
        }
    }
    Ok((params, trace))
}
