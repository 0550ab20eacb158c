//! Monte-Carlo NMSE and BER sweeps.
//!
//! Every method at a grid point sees the same channel, noise and symbol
//! draws, and per-trial values are reduced in trial order, so a sweep is a
//! pure function of its configuration and seed.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rayon::prelude::*;

use crate::bussgang::{linearize_detection, LinearChannelEstimator, SYMBOL_PRIOR_VAR};
use crate::error::{Error, Result};
use crate::likelihood::{exhaustive_ml_detect, gradient_ascent_channel, ConstellationProjectorSpec, LikelihoodContext};
use crate::linalg::{spd_factor, stack_matrix, stack_matrix_as_vector, stack_vector, unstack_vector_as_matrix, CMatrix, LinearOperator, RMatrix, RVector};
use crate::networks::{b_detnet_forward, default_alpha, default_beta, fbm_cenet_forward, fbm_detnet_forward, hard_decision, BDetNetWeights, CeNetParams, DetNetParams};
use crate::pilot::{build_dft_pilot, PilotSet};
use crate::quantizer::QuantizerSpec;
use crate::sampling::{domain, sample_channel, sample_noise, sample_symbols, stream_rng};
use crate::system::SystemConfig;

/// Mean of `||H_hat - H||_F^2 / (K N)` over matched sets.
pub fn nmse(estimates: &[CMatrix], truth: &[CMatrix]) -> Result<f64> {
    if estimates.len() != truth.len() {
        return Err(Error::LengthMismatch { left: estimates.len(), right: truth.len() });
    }
    if truth.is_empty() {
        return Err(Error::Empty);
    }
    let mut total = 0.0;
    for (e, t) in estimates.iter().zip(truth) {
        if e.shape() != t.shape() {
            return Err(Error::Dimension(format!("estimate {:?} vs channel {:?}", e.shape(), t.shape())));
        }
        total += (e - t).norm_squared() / t.len() as f64;
    }
    Ok(total / truth.len() as f64)
}

/// Fraction of differing bits.
pub fn ber(bits_hat: &[u8], bits: &[u8]) -> Result<f64> {
    if bits_hat.len() != bits.len() {
        return Err(Error::LengthMismatch { left: bits_hat.len(), right: bits.len() });
    }
    if bits.is_empty() {
        return Err(Error::Empty);
    }
    Ok(bit_errors(bits_hat, bits) as f64 / bits.len() as f64)
}

fn bit_errors(a: &[u8], b: &[u8]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x != y).count()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub snr_db: f64,
    pub method: String,
    pub metric: String,
    pub value: f64,
    pub trials: usize,
    pub std_error: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

pub const CSV_HEADER: [&str; 6] = ["snr_db", "method", "metric", "value", "trials", "std_error"];

impl SweepResult {
    pub fn get(&self, snr_db: f64, method: &str) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.snr_db == snr_db && r.method == method)
    }

    pub fn extend(&mut self, other: SweepResult) {
        self.rows.extend(other.rows);
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        w.write_record(CSV_HEADER)?;
        for r in &self.rows {
            w.write_record([
                r.snr_db.to_string(),
                r.method.clone(),
                r.metric.clone(),
                r.value.to_string(),
                r.trials.to_string(),
                r.std_error.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(input);
        let header: Vec<String> = rd.headers()?.iter().map(str::to_owned).collect();
        if header != CSV_HEADER {
            return Err(Error::Config(format!("unexpected CSV header {header:?}")));
        }
        let mut rows = Vec::new();
        for rec in rd.records() {
            let rec = rec?;
            let num = |i: usize| -> Result<f64> {
                rec[i].parse().map_err(|_| Error::Config(format!("bad number `{}` in column {}", &rec[i], CSV_HEADER[i])))
            };
            rows.push(SweepRow {
                snr_db: num(0)?,
                method: rec[1].to_owned(),
                metric: rec[2].to_owned(),
                value: num(3)?,
                trials: rec[4].parse().map_err(|_| Error::Config(format!("bad trial count `{}`", &rec[4])))?,
                std_error: num(5)?,
            });
        }
        Ok(Self { rows })
    }
}

/// Export to a file path.
pub fn export_csv(result: &SweepResult, path: &std::path::Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut buf = std::io::BufWriter::new(file);
    result.write_csv(&mut buf)?;
    buf.flush()?;
    Ok(())
}

/// Mean and standard error of the mean.
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Trained parameters keyed by method label and SNR.
#[derive(Debug, Clone)]
pub struct ModelStore<P> {
    models: BTreeMap<(String, i64), P>,
}

impl<P> Default for ModelStore<P> {
    fn default() -> Self {
        Self::new()
    }
}

fn snr_key(snr_db: f64) -> i64 {
    (snr_db * 1000.0).round() as i64
}

impl<P> ModelStore<P> {
    pub fn new() -> Self {
        Self { models: BTreeMap::new() }
    }

    pub fn insert(&mut self, method: &str, snr_db: f64, params: P) {
        self.models.insert((method.to_owned(), snr_key(snr_db)), params);
    }

    pub fn get(&self, method: &str, snr_db: f64) -> Result<&P> {
        self.models
            .get(&(method.to_owned(), snr_key(snr_db)))
            .ok_or_else(|| Error::MissingCheckpoint { method: method.to_owned(), snr_db })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EstimationMethod {
    Bmmse,
    Bwzf,
    /// Untrained ascent on the reformulated likelihood with the default
    /// network step size, for the given number of iterations.
    GradientAscent { iterations: usize },
    /// A trained FBM-CENet looked up under this label; it observes the
    /// channel through its own pilot.
    FbmCenet(String),
}

impl EstimationMethod {
    pub fn label(&self) -> String {
        match self {
            EstimationMethod::Bmmse => "bmmse".into(),
            EstimationMethod::Bwzf => "bwzf".into(),
            EstimationMethod::GradientAscent { .. } => "ga-ml".into(),
            EstimationMethod::FbmCenet(label) => label.clone(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct NmseSweep {
    pub system: SystemConfig,
    pub snrs_db: Vec<f64>,
    pub trials: usize,
    pub methods: Vec<EstimationMethod>,
}

enum Estimator<'a> {
    Linear(LinearChannelEstimator, bool),
    Ascent(PilotSet, Vec<f64>),
    Net(&'a CeNetParams),
}

/// Per-trial (NMSE) or per-block (BER) values of every method at one grid
/// point, indexed `[method][sample]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSamples {
    pub snr_db: f64,
    pub per_method: Vec<Vec<f64>>,
}

/// Mean and standard error of the paired difference `a - b`.
pub fn paired_difference(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch { left: a.len(), right: b.len() });
    }
    if a.is_empty() {
        return Err(Error::Empty);
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    Ok(mean_and_se(&d))
}

/// NMSE per `(snr, method)` with the standard error over trials.
pub fn run_nmse_sweep(sweep: &NmseSweep, models: &ModelStore<CeNetParams>) -> Result<SweepResult> {
    Ok(run_nmse_sweep_samples(sweep, models)?.0)
}

/// [`run_nmse_sweep`] together with the per-trial values behind each row.
pub fn run_nmse_sweep_samples(sweep: &NmseSweep, models: &ModelStore<CeNetParams>) -> Result<(SweepResult, Vec<PointSamples>)> {
    if sweep.trials == 0 {
        return Err(Error::Empty);
    }
    let mut result = SweepResult::default();
    let mut samples = Vec::with_capacity(sweep.snrs_db.len());
    for &snr in &sweep.snrs_db {
        let cfg = sweep.system.with_snr_db(snr);
        let quant = QuantizerSpec::for_system(&cfg)?;
        let dft = build_dft_pilot(&cfg)?;
        let mut estimators = Vec::with_capacity(sweep.methods.len());
        for m in &sweep.methods {
            estimators.push(match m {
                EstimationMethod::Bmmse => Estimator::Linear(LinearChannelEstimator::new(&dft, &quant, cfg.n0())?, false),
                EstimationMethod::Bwzf => Estimator::Linear(LinearChannelEstimator::new(&dft, &quant, cfg.n0())?, true),
                EstimationMethod::GradientAscent { iterations } => {
                    let step = default_alpha(cfg.antennas) / default_beta(cfg.rho());
                    Estimator::Ascent(dft.clone(), vec![step; *iterations])
                }
                EstimationMethod::FbmCenet(label) => Estimator::Net(models.get(label, snr)?),
            });
        }
        let kn = (cfg.antennas * cfg.users) as f64;
        let per_trial = (0..sweep.trials)
            .into_par_iter()
            .map(|t| -> Result<Vec<f64>> {
                let mut rng = stream_rng(cfg.seed, domain::EVAL_NMSE, t as u64);
                let h = stack_matrix_as_vector(&sample_channel(&cfg, &mut rng));
                let z = sample_noise(2 * cfg.antennas * cfg.pilot_len, cfg.n0(), &mut rng);
                let observe = |pilot: &PilotSet| {
                    let mut r = vec![0.0; pilot.nrows()];
                    pilot.apply(h.as_slice(), &mut r);
                    for (ri, zi) in r.iter_mut().zip(z.iter()) {
                        *ri += zi;
                    }
                    quant.observe(&r)
                };
                let dft_obs = observe(&dft);
                estimators
                    .iter()
                    .map(|e| {
                        let est = match e {
                            Estimator::Linear(lin, false) => lin.bmmse(&dft_obs),
                            Estimator::Linear(lin, true) => lin.bwzf(&dft_obs)?,
                            Estimator::Ascent(pilot, steps) => {
                                let ctx = LikelihoodContext::new(pilot, &dft_obs, cfg.rho())?;
                                gradient_ascent_channel(&ctx, steps)
                            }
                            Estimator::Net(p) if p.pilot == dft => fbm_cenet_forward(&dft_obs, p),
                            Estimator::Net(p) => fbm_cenet_forward(&observe(&p.pilot), p),
                        };
                        Ok((est - &h).norm_squared() / kn)
                    })
                    .collect()
            })
            .collect::<Result<Vec<_>>>()?;
        let mut point = PointSamples { snr_db: snr, per_method: Vec::with_capacity(sweep.methods.len()) };
        for (j, m) in sweep.methods.iter().enumerate() {
            let values: Vec<f64> = per_trial.iter().map(|v| v[j]).collect();
            let (value, std_error) = mean_and_se(&values);
            result.rows.push(SweepRow {
                snr_db: snr,
                method: m.label(),
                metric: "nmse".into(),
                value,
                trials: sweep.trials,
                std_error,
            });
            point.per_method.push(values);
        }
        samples.push(point);
    }
    Ok((result, samples))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DetectionMethod {
    /// Bussgang linear MMSE detector followed by slicing.
    BmmseLinear,
    BDetNet(String),
    FbmDetNet(String),
    ExhaustiveMl,
}

impl DetectionMethod {
    pub fn label(&self) -> String {
        match self {
            DetectionMethod::BmmseLinear => "bmmse".into(),
            DetectionMethod::BDetNet(l) | DetectionMethod::FbmDetNet(l) => l.clone(),
            DetectionMethod::ExhaustiveMl => "exhaustive-ml".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Csi {
    Perfect,
    /// Channel estimated once per block by the FBM-CENet stored under this
    /// label, using its pilot.
    Estimated(String),
}

#[derive(Debug, Clone)]
pub struct BerSweep {
    pub system: SystemConfig,
    pub snrs_db: Vec<f64>,
    /// Channel realizations per point.
    pub channels: usize,
    /// Symbol vectors sent over each channel realization.
    pub vectors_per_channel: usize,
    pub methods: Vec<DetectionMethod>,
    pub csi: Csi,
}

/// Detection models for one grid point.
#[derive(Debug, Clone, Default)]
pub struct DetectionModels {
    pub detnets: ModelStore<DetNetParams>,
    pub cenets: ModelStore<CeNetParams>,
}

/// Quantized data-phase observations of one channel block.
#[derive(Debug, Clone)]
pub struct DataBlock {
    pub observations: Vec<crate::quantizer::QuantizedObservation>,
    pub bits: Vec<u8>,
}

enum Prepared<'a> {
    Bmmse(RMatrix),
    BDet(BDetNetWeights, &'a DetNetParams),
    FbmDet(&'a DetNetParams),
    Exhaustive,
}

/// Runs every detector on a block using only the channel estimate
/// `h_est`; returns bit errors per method.
pub fn detect_block(
    cfg: &SystemConfig,
    quant: &QuantizerSpec,
    h_est: &RMatrix,
    block: &DataBlock,
    methods: &[DetectionMethod],
    models: &DetectionModels,
) -> Result<Vec<usize>> {
    let snr = cfg.snr_db();
    let spec = ConstellationProjectorSpec::for_constellation(cfg.constellation);
    let needs_model = methods.iter().any(|m| matches!(m, DetectionMethod::BmmseLinear | DetectionMethod::BDetNet(_)));
    let model = if needs_model { Some(linearize_detection(h_est, cfg.n0(), quant)?) } else { None };
    let mut prepared = Vec::with_capacity(methods.len());
    for m in methods {
        prepared.push(match m {
            DetectionMethod::BmmseLinear => {
                let model = model.as_ref().expect("built above");
                let filter = spd_factor(&model.sigma_y)?.solve(&model.a) * SYMBOL_PRIOR_VAR;
                Prepared::Bmmse(filter)
            }
            DetectionMethod::BDetNet(label) => {
                Prepared::BDet(BDetNetWeights::new(model.as_ref().expect("built above"))?, models.detnets.get(label, snr)?)
            }
            DetectionMethod::FbmDetNet(label) => Prepared::FbmDet(models.detnets.get(label, snr)?),
            DetectionMethod::ExhaustiveMl => Prepared::Exhaustive,
        });
    }
    let bps = cfg.users * cfg.constellation.bits_per_symbol();
    let mut errors = vec![0usize; methods.len()];
    for (j, obs) in block.observations.iter().enumerate() {
        let truth = &block.bits[j * bps..(j + 1) * bps];
        for (i, p) in prepared.iter().enumerate() {
            let x = match p {
                Prepared::Bmmse(f) => f.tr_mul(&obs.y),
                Prepared::BDet(w, params) => b_detnet_forward(&w.input(&obs.y), params, &spec),
                Prepared::FbmDet(params) => fbm_detnet_forward(obs, h_est, params, &spec),
                Prepared::Exhaustive => {
                    let ctx = LikelihoodContext::new(h_est, obs, cfg.rho())?;
                    exhaustive_ml_detect(&ctx, cfg.constellation, cfg.users)?
                }
            };
            let (_, bits) = hard_decision(x.as_slice(), cfg.constellation);
            errors[i] += bit_errors(&bits, truth);
        }
    }
    Ok(errors)
}

/// Draws the channel of block `index` and its data-phase observations.
pub fn sample_block(cfg: &SystemConfig, quant: &QuantizerSpec, vectors: usize, index: u64) -> (CMatrix, DataBlock, RVector) {
    let mut rng = stream_rng(cfg.seed, domain::EVAL_BER, index);
    let h = sample_channel(cfg, &mut rng);
    let hr = stack_matrix(&h);
    let (symbols, bits) = sample_symbols(cfg, vectors, &mut rng);
    let observations = (0..vectors)
        .map(|j| {
            let x = stack_vector(symbols.column(j).as_slice());
            let r = &hr * x + sample_noise(hr.nrows(), cfg.n0(), &mut rng);
            quant.observe(r.as_slice())
        })
        .collect();
    let pilot_noise = sample_noise(2 * cfg.antennas * cfg.pilot_len, cfg.n0(), &mut rng);
    (h, DataBlock { observations, bits }, pilot_noise)
}

/// FBM-CENet estimate of `h` in stacked `2N x 2K` form from one pilot block.
pub fn estimate_channel(h: &CMatrix, pilot_noise: &RVector, params: &CeNetParams, quant: &QuantizerSpec) -> Result<RMatrix> {
    let hv = stack_matrix_as_vector(h);
    let mut r = vec![0.0; params.pilot.nrows()];
    params.pilot.apply(hv.as_slice(), &mut r);
    for (ri, zi) in r.iter_mut().zip(pilot_noise.iter()) {
        *ri += zi;
    }
    let est = fbm_cenet_forward(&quant.observe(&r), params);
    Ok(stack_matrix(&unstack_vector_as_matrix(est.as_slice(), h.nrows(), h.ncols())?))
}

/// BER per `(snr, method)`; the standard error is taken over channel blocks.
pub fn run_ber_sweep(sweep: &BerSweep, models: &DetectionModels) -> Result<SweepResult> {
    Ok(run_ber_sweep_samples(sweep, models)?.0)
}

/// [`run_ber_sweep`] together with the per-block BER behind each row.
pub fn run_ber_sweep_samples(sweep: &BerSweep, models: &DetectionModels) -> Result<(SweepResult, Vec<PointSamples>)> {
    if sweep.channels == 0 || sweep.vectors_per_channel == 0 {
        return Err(Error::Empty);
    }
    let mut result = SweepResult::default();
    let mut samples = Vec::with_capacity(sweep.snrs_db.len());
    for &snr in &sweep.snrs_db {
        let cfg = sweep.system.with_snr_db(snr);
        let quant = QuantizerSpec::for_system(&cfg)?;
        let cenet = match &sweep.csi {
            Csi::Perfect => None,
            Csi::Estimated(label) => Some(models.cenets.get(label, snr)?),
        };
        let per_block = (0..sweep.channels)
            .into_par_iter()
            .map(|c| -> Result<Vec<usize>> {
                let (h, block, pilot_noise) = sample_block(&cfg, &quant, sweep.vectors_per_channel, c as u64);
                let h_est = match cenet {
                    None => stack_matrix(&h),
                    Some(p) => estimate_channel(&h, &pilot_noise, p, &quant)?,
                };
                detect_block(&cfg, &quant, &h_est, &block, &sweep.methods, models)
            })
            .collect::<Result<Vec<_>>>()?;
        let bits_per_block = (sweep.vectors_per_channel * cfg.users * cfg.constellation.bits_per_symbol()) as f64;
        let mut point = PointSamples { snr_db: snr, per_method: Vec::with_capacity(sweep.methods.len()) };
        for (j, m) in sweep.methods.iter().enumerate() {
            let values: Vec<f64> = per_block.iter().map(|e| e[j] as f64 / bits_per_block).collect();
            let (value, std_error) = mean_and_se(&values);
            result.rows.push(SweepRow {
                snr_db: snr,
                method: m.label(),
                metric: "ber".into(),
                value,
                trials: sweep.channels * sweep.vectors_per_channel,
                std_error,
            });
            point.per_method.push(values);
        }
        samples.push(point);
    }
    Ok((result, samples))
}
