//! Unfolded networks and their reverse passes.
//!
//! FBM-CENet and FBM-DetNet share one layer:
//! `u = D x`, `g = 1 - sigmoid(beta (u - q_up)) - sigmoid(beta (u - q_low))`,
//! `v = x + alpha_l D^T g`, followed by the soft projector for detection.
//! B-DetNet replaces the likelihood term by `2 (b - M x)` with
//! `M = A^T Sigma_n^{-1} A` and `b = A^T Sigma_n^{-1} y`.

use crate::bussgang::BussgangModel;
use crate::error::{Error, Result};
use crate::kernels::{sigmoid, SIGMOID_C};
use crate::likelihood::{projector_psi, projector_with_grad, ConstellationProjectorSpec};
use crate::linalg::{spd_factor, CMatrix, LinearOperator, RMatrix, RVector, C64};
use crate::pilot::PilotSet;
use crate::quantizer::{QuantizedObservation, QuantizerSpec};
use crate::sampling::level_bits;
use crate::system::{Constellation, SystemConfig};

/// Initial step size `1 / (2N)`.
pub fn default_alpha(antennas: usize) -> f64 {
    1.0 / (2.0 * antennas as f64)
}

/// Initial sigmoid scale `c sqrt(2 rho)`, which makes the untrained network
/// plain gradient ascent on the reformulated likelihood.
pub fn default_beta(rho: f64) -> f64 {
    SIGMOID_C * (2.0 * rho).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CeNetParams {
    pub alpha: Vec<f64>,
    pub beta: f64,
    pub pilot: PilotSet,
    pub trainable_pilot: bool,
}

impl CeNetParams {
    pub fn initial(cfg: &SystemConfig, layers: usize, pilot: PilotSet, trainable_pilot: bool) -> Self {
        Self {
            alpha: vec![default_alpha(cfg.antennas); layers],
            beta: default_beta(cfg.rho()),
            pilot,
            trainable_pilot,
        }
    }

    pub fn layers(&self) -> usize {
        self.alpha.len()
    }
}

/// Parameters of either detection network; `beta` is unused by B-DetNet.
#[derive(Debug, Clone, PartialEq)]
pub struct DetNetParams {
    pub alpha: Vec<f64>,
    pub t: Vec<f64>,
    pub beta: f64,
}

impl DetNetParams {
    pub fn initial(cfg: &SystemConfig, layers: usize) -> Self {
        let spec = ConstellationProjectorSpec::for_constellation(cfg.constellation);
        Self {
            alpha: vec![default_alpha(cfg.antennas); layers],
            t: vec![spec.delta_prime / 2.0; layers],
            beta: default_beta(cfg.rho()),
        }
    }

    pub fn layers(&self) -> usize {
        self.alpha.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.alpha.len() != self.t.len() || self.alpha.is_empty() {
            return Err(Error::LengthMismatch { left: self.alpha.len(), right: self.t.len() });
        }
        if self.t.iter().any(|&t| !(t > 0.0)) {
            return Err(Error::Config("projector scales must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CeNetGrad {
    pub alpha: Vec<f64>,
    pub beta: f64,
    /// `dL/dRe + j dL/dIm` per pilot entry; `None` when the pilot is frozen.
    pub pilot: Option<CMatrix>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetNetGrad {
    pub alpha: Vec<f64>,
    pub t: Vec<f64>,
    pub beta: f64,
}

struct Layer {
    x: Vec<f64>,
    u: Vec<f64>,
    s_up: Vec<f64>,
    s_low: Vec<f64>,
    g: Vec<f64>,
    w: Vec<f64>,
    v: Vec<f64>,
}

struct Projection<'a> {
    t: &'a [f64],
    spec: &'a ConstellationProjectorSpec,
}

fn unfolded_forward<D: LinearOperator + ?Sized>(
    design: &D,
    q_up: &[f64],
    q_low: &[f64],
    alpha: &[f64],
    beta: f64,
    proj: Option<&Projection>,
    mut tape: Option<&mut Vec<Layer>>,
) -> Vec<f64> {
    let (m, n) = (design.nrows(), design.ncols());
    let mut x = vec![0.0; n];
    let mut u = vec![0.0; m];
    let mut w = vec![0.0; n];
    let (mut s_up, mut s_low, mut g) = (vec![0.0; m], vec![0.0; m], vec![0.0; m]);
    for (l, &a) in alpha.iter().enumerate() {
        design.apply(&x, &mut u);
        for i in 0..m {
            s_up[i] = sigmoid(beta * (u[i] - q_up[i]));
            s_low[i] = sigmoid(beta * (u[i] - q_low[i]));
            g[i] = 1.0 - s_up[i] - s_low[i];
        }
        design.apply_transpose(&g, &mut w);
        let v: Vec<f64> = x.iter().zip(&w).map(|(xi, wi)| xi + a * wi).collect();
        let next = match proj {
            Some(p) => v.iter().map(|&vi| projector_psi(vi, p.t[l], p.spec)).collect(),
            None => v.clone(),
        };
        if let Some(tape) = tape.as_deref_mut() {
            tape.push(Layer {
                x: std::mem::replace(&mut x, next),
                u: u.clone(),
                s_up: s_up.clone(),
                s_low: s_low.clone(),
                g: g.clone(),
                w: w.clone(),
                v,
            });
        } else {
            x = next;
        }
    }
    x
}

struct Adjoints {
    alpha: Vec<f64>,
    t: Vec<f64>,
    beta: f64,
    q_up: Vec<f64>,
    q_low: Vec<f64>,
}

fn unfolded_backward<D: LinearOperator + ?Sized>(
    design: &D,
    q_up: &[f64],
    q_low: &[f64],
    alpha: &[f64],
    beta: f64,
    proj: Option<&Projection>,
    tape: &[Layer],
    out_bar: Vec<f64>,
    mut pilot: Option<(&PilotSet, &mut CMatrix)>,
) -> Adjoints {
    let (m, n) = (design.nrows(), design.ncols());
    let mut adj = Adjoints {
        alpha: vec![0.0; alpha.len()],
        t: vec![0.0; alpha.len()],
        beta: 0.0,
        q_up: vec![0.0; m],
        q_low: vec![0.0; m],
    };
    let mut x_bar = out_bar;
    let mut g_bar = vec![0.0; m];
    let mut u_bar = vec![0.0; m];
    let mut back = vec![0.0; n];
    for (l, rec) in tape.iter().enumerate().rev() {
        let v_bar: Vec<f64> = match proj {
            Some(p) => {
                let mut t_bar = 0.0;
                let vb = rec
                    .v
                    .iter()
                    .zip(&x_bar)
                    .map(|(&v, &xb)| {
                        let d = projector_with_grad(v, p.t[l], p.spec);
                        t_bar += xb * d.d_t;
                        xb * d.d_x
                    })
                    .collect();
                adj.t[l] = t_bar;
                vb
            }
            None => x_bar.clone(),
        };
        adj.alpha[l] = v_bar.iter().zip(&rec.w).map(|(a, b)| a * b).sum();
        let w_bar: Vec<f64> = v_bar.iter().map(|vb| alpha[l] * vb).collect();
        design.apply(&w_bar, &mut g_bar);
        if let Some((p, grad)) = pilot.as_mut() {
            p.accumulate_transpose_grad(&rec.g, &w_bar, grad);
        }
        for i in 0..m {
            let a = rec.s_up[i] * (1.0 - rec.s_up[i]);
            let b = rec.s_low[i] * (1.0 - rec.s_low[i]);
            u_bar[i] = -g_bar[i] * beta * (a + b);
            if a > 0.0 {
                adj.beta -= g_bar[i] * a * (rec.u[i] - q_up[i]);
            }
            if b > 0.0 {
                adj.beta -= g_bar[i] * b * (rec.u[i] - q_low[i]);
            }
            adj.q_up[i] += g_bar[i] * beta * a;
            adj.q_low[i] += g_bar[i] * beta * b;
        }
        design.apply_transpose(&u_bar, &mut back);
        if let Some((p, grad)) = pilot.as_mut() {
            p.accumulate_apply_grad(&rec.x, &u_bar, grad);
        }
        for (xb, (vb, bk)) in x_bar.iter_mut().zip(v_bar.iter().zip(&back)) {
            *xb = vb + bk;
        }
    }
    adj
}

fn squared_error(out: &[f64], target: &[f64]) -> (f64, Vec<f64>) {
    let diff: Vec<f64> = out.iter().zip(target).map(|(a, b)| a - b).collect();
    let loss = diff.iter().map(|d| d * d).sum();
    (loss, diff.into_iter().map(|d| 2.0 * d).collect())
}

/// FBM-CENet on observed bins, with the pilot of `params` as the design.
pub fn fbm_cenet_forward(obs: &QuantizedObservation, params: &CeNetParams) -> RVector {
    let x = unfolded_forward(&params.pilot, obs.q_up.as_slice(), obs.q_low.as_slice(), &params.alpha, params.beta, None, None);
    RVector::from_vec(x)
}

/// Soft-quantizer sharpness used when training the pilot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SoftQuantizer {
    pub c1: f64,
    pub c2: f64,
}

/// Squared-error loss of one training sample `(h, z)` and its gradient.
///
/// The sample is observed through the hard quantizer, or through the soft
/// surrogate when `soft` is given; only the latter lets gradients reach the
/// pilot through the bin edges.
pub fn fbm_cenet_sample_grad(
    params: &CeNetParams,
    h: &RVector,
    noise: &RVector,
    quant: &QuantizerSpec,
    soft: Option<SoftQuantizer>,
) -> (f64, CeNetGrad) {
    let pilot = &params.pilot;
    let mut r = vec![0.0; pilot.nrows()];
    pilot.apply(h.as_slice(), &mut r);
    for (ri, zi) in r.iter_mut().zip(noise.iter()) {
        *ri += zi;
    }
    let (q_up, q_low, slopes) = match soft {
        Some(s) => {
            let bins: Vec<_> = r.iter().map(|&ri| quant.soft_quantize(ri, s.c1, s.c2)).collect();
            let up = bins.iter().map(|b| b.q_up).collect::<Vec<_>>();
            let low = bins.iter().map(|b| b.q_low).collect::<Vec<_>>();
            let slopes = bins.iter().map(|b| (b.dq_up, b.dq_low)).collect::<Vec<_>>();
            (up, low, Some(slopes))
        }
        None => {
            let obs = quant.observe(&r);
            (obs.q_up.as_slice().to_vec(), obs.q_low.as_slice().to_vec(), None)
        }
    };
    let mut tape = Vec::with_capacity(params.layers());
    let out = unfolded_forward(pilot, &q_up, &q_low, &params.alpha, params.beta, None, Some(&mut tape));
    let (loss, out_bar) = squared_error(&out, h.as_slice());
    let mut pilot_grad = params.trainable_pilot.then(|| CMatrix::zeros(pilot.users(), pilot.len()));
    let adj = unfolded_backward(
        pilot,
        &q_up,
        &q_low,
        &params.alpha,
        params.beta,
        None,
        &tape,
        out_bar,
        pilot_grad.as_mut().map(|g| (pilot, g)),
    );
    if let (Some(grad), Some(slopes)) = (pilot_grad.as_mut(), slopes) {
        let r_bar: Vec<f64> = slopes
            .iter()
            .enumerate()
            .map(|(i, &(du, dl))| adj.q_up[i] * du + adj.q_low[i] * dl)
            .collect();
        pilot.accumulate_apply_grad(h.as_slice(), &r_bar, grad);
    }
    (loss, CeNetGrad { alpha: adj.alpha, beta: adj.beta, pilot: pilot_grad })
}

/// FBM-DetNet on the observed bins of `y = Q(H x + z)`.
pub fn fbm_detnet_forward(
    obs: &QuantizedObservation,
    h: &RMatrix,
    params: &DetNetParams,
    spec: &ConstellationProjectorSpec,
) -> RVector {
    let proj = Projection { t: &params.t, spec };
    let x = unfolded_forward(h, obs.q_up.as_slice(), obs.q_low.as_slice(), &params.alpha, params.beta, Some(&proj), None);
    RVector::from_vec(x)
}

pub fn fbm_detnet_sample_grad(
    obs: &QuantizedObservation,
    h: &RMatrix,
    x_true: &RVector,
    params: &DetNetParams,
    spec: &ConstellationProjectorSpec,
) -> (f64, DetNetGrad) {
    let proj = Projection { t: &params.t, spec };
    let (q_up, q_low) = (obs.q_up.as_slice(), obs.q_low.as_slice());
    let mut tape = Vec::with_capacity(params.layers());
    let out = unfolded_forward(h, q_up, q_low, &params.alpha, params.beta, Some(&proj), Some(&mut tape));
    let (loss, out_bar) = squared_error(&out, x_true.as_slice());
    let adj = unfolded_backward(h, q_up, q_low, &params.alpha, params.beta, Some(&proj), &tape, out_bar, None);
    (loss, DetNetGrad { alpha: adj.alpha, t: adj.t, beta: adj.beta })
}

/// Per-realization weights of B-DetNet: `M = A^T Sigma_n^{-1} A` and the
/// map `y -> A^T Sigma_n^{-1} y`.
#[derive(Debug, Clone)]
pub struct BDetNetWeights {
    pub m: RMatrix,
    whitened: RMatrix,
}

impl BDetNetWeights {
    pub fn new(model: &BussgangModel) -> Result<Self> {
        let ch = spd_factor(&model.sigma_n)?;
        let whitened = ch.solve(&model.a);
        Ok(Self { m: model.a.transpose() * &whitened, whitened })
    }

    pub fn input(&self, y: &RVector) -> BDetNetInput {
        BDetNetInput { m: self.m.clone(), b: self.whitened.tr_mul(y) }
    }

    /// `A^T Sigma_n^{-1} y`
    pub fn matched(&self, y: &RVector) -> RVector {
        self.whitened.tr_mul(y)
    }
}

/// Inputs of one B-DetNet pass: `M` and `b = A^T Sigma_n^{-1} y`.
#[derive(Debug, Clone)]
pub struct BDetNetInput {
    pub m: RMatrix,
    pub b: RVector,
}

impl BDetNetInput {
    pub fn new(y: &RVector, model: &BussgangModel) -> Result<Self> {
        Ok(BDetNetWeights::new(model)?.input(y))
    }
}

pub fn b_detnet_forward(input: &BDetNetInput, params: &DetNetParams, spec: &ConstellationProjectorSpec) -> RVector {
    b_detnet_run(input, params, spec, None)
}

fn b_detnet_run(
    input: &BDetNetInput,
    params: &DetNetParams,
    spec: &ConstellationProjectorSpec,
    mut tape: Option<&mut Vec<(RVector, RVector)>>,
) -> RVector {
    let mut x = RVector::zeros(input.b.len());
    for (&a, &t) in params.alpha.iter().zip(&params.t) {
        let resid = &input.b - &input.m * &x;
        let v = &x + &resid * (2.0 * a);
        x = v.map(|vi| projector_psi(vi, t, spec));
        if let Some(tape) = tape.as_deref_mut() {
            tape.push((resid, v));
        }
    }
    x
}

pub fn b_detnet_sample_grad(
    input: &BDetNetInput,
    x_true: &RVector,
    params: &DetNetParams,
    spec: &ConstellationProjectorSpec,
) -> (f64, DetNetGrad) {
    let mut tape = Vec::with_capacity(params.layers());
    let out = b_detnet_run(input, params, spec, Some(&mut tape));
    let (loss, out_bar) = squared_error(out.as_slice(), x_true.as_slice());
    let mut grad = DetNetGrad { alpha: vec![0.0; params.layers()], t: vec![0.0; params.layers()], beta: 0.0 };
    let mut x_bar = RVector::from_vec(out_bar);
    for (l, (resid, v)) in tape.iter().enumerate().rev() {
        let mut t_bar = 0.0;
        let v_bar = RVector::from_fn(v.len(), |i, _| {
            let d = projector_with_grad(v[i], params.t[l], spec);
            t_bar += x_bar[i] * d.d_t;
            x_bar[i] * d.d_x
        });
        grad.t[l] = t_bar;
        grad.alpha[l] = 2.0 * v_bar.dot(resid);
        x_bar = &v_bar - input.m.tr_mul(&v_bar) * (2.0 * params.alpha[l]);
    }
    (loss, grad)
}

/// Nearest constellation point per real dimension (ties to the lower level)
/// and the Gray bits it carries, user by user.
pub fn hard_decision(x: &[f64], c: Constellation) -> (Vec<C64>, Vec<u8>) {
    let k = x.len() / 2;
    let levels = c.levels();
    let nearest = |v: f64| {
        let mut best = 0;
        for (i, &l) in levels.iter().enumerate() {
            if (v - l).abs() < (v - levels[best]).abs() {
                best = i;
            }
        }
        best
    };
    let mut symbols = Vec::with_capacity(k);
    let mut bits = Vec::with_capacity(k * c.bits_per_symbol());
    for u in 0..k {
        let (re, im) = (nearest(x[u]), nearest(x[k + u]));
        level_bits(c, re, &mut bits);
        level_bits(c, im, &mut bits);
        symbols.push(C64::new(levels[re], levels[im]));
    }
    (symbols, bits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bussgang::linearize_detection;
    use crate::likelihood::{gradient_ascent_channel, projected_gradient_detect, DetectionObjective, LikelihoodContext};
    use crate::linalg::{stack_matrix, stack_matrix_as_vector, stack_vector};
    use crate::pilot::{build_dft_pilot, dft_pilot};
    use crate::quantizer::make_quantizer;
    use crate::sampling::{complex_gaussian, sample_channel, sample_noise, sample_symbols, stream_rng};

    fn cfg(n: usize, k: usize, t: usize, bits: u32, snr: f64, c: Constellation) -> SystemConfig {
        SystemConfig::new(n, k, t, bits, snr, c, 11).unwrap()
    }

    fn detection_sample(cfg: &SystemConfig, idx: u64) -> (RMatrix, RVector, QuantizedObservation, QuantizerSpec) {
        let mut rng = stream_rng(cfg.seed, 50, idx);
        let h = stack_matrix(&sample_channel(cfg, &mut rng));
        let (s, _) = sample_symbols(cfg, 1, &mut rng);
        let x = stack_vector(s.as_slice());
        let q = QuantizerSpec::for_system(cfg).unwrap();
        let r = &h * &x + sample_noise(h.nrows(), cfg.n0(), &mut rng);
        let obs = q.observe(r.as_slice());
        (h, x, obs, q)
    }

    #[test]
    fn cenet_equals_gradient_ascent() {
        let c = cfg(4, 2, 6, 2, 5.0, Constellation::Qpsk);
        let pilot = build_dft_pilot(&c).unwrap();
        let q = QuantizerSpec::for_system(&c).unwrap();
        let mut rng = stream_rng(1, 0, 0);
        let h = stack_matrix_as_vector(&sample_channel(&c, &mut rng));
        let mut r = vec![0.0; pilot.nrows()];
        pilot.apply(h.as_slice(), &mut r);
        let obs = q.observe((RVector::from_vec(r) + sample_noise(pilot.nrows(), c.n0(), &mut rng)).as_slice());
        let steps = [0.01, 0.02, 0.005, 0.03];
        let ctx = LikelihoodContext::new(&pilot, &obs, c.rho()).unwrap();
        let beta = ctx.sigmoid_scale();
        let params = CeNetParams {
            alpha: steps.iter().map(|s| s * beta).collect(),
            beta,
            pilot: pilot.clone(),
            trainable_pilot: false,
        };
        let a = fbm_cenet_forward(&obs, &params);
        let b = gradient_ascent_channel(&ctx, &steps);
        assert!((a - b).amax() < 1e-12);
        let zero = CeNetParams { alpha: vec![0.0; 3], ..params };
        assert_eq!(fbm_cenet_forward(&obs, &zero), RVector::zeros(16));
    }

    #[test]
    fn detnets_equal_projected_gradient() {
        for constellation in [Constellation::Qpsk, Constellation::Qam16] {
            let c = cfg(6, 2, 10, 2, 12.0, constellation);
            let spec = ConstellationProjectorSpec::for_constellation(constellation);
            let (h, _, obs, q) = detection_sample(&c, 3);
            let steps = [0.02, 0.05, 0.01];
            let t = [0.3, 0.2, 0.1];
            let ctx = LikelihoodContext::new(&h, &obs, c.rho()).unwrap();
            let beta = ctx.sigmoid_scale();
            let params = DetNetParams { alpha: steps.iter().map(|s| s * beta).collect(), t: t.to_vec(), beta };
            let a = fbm_detnet_forward(&obs, &h, &params, &spec);
            let b = projected_gradient_detect(DetectionObjective::Quantized(ctx), &steps, &t, &spec).unwrap();
            assert!((a - b).amax() < 1e-12);

            let model = linearize_detection(&h, c.n0(), &q).unwrap();
            let input = BDetNetInput::new(&obs.y, &model).unwrap();
            let params = DetNetParams { alpha: steps.to_vec(), t: t.to_vec(), beta };
            let a = b_detnet_forward(&input, &params, &spec);
            let b = projected_gradient_detect(DetectionObjective::Bussgang { model: &model, y: &obs.y }, &steps, &t, &spec).unwrap();
            assert!((&a - &b).amax() < 1e-10, "{}", (a - b).amax());
        }
    }

    #[test]
    fn zero_steps_give_zero() {
        let c = cfg(4, 2, 10, 1, 5.0, Constellation::Qpsk);
        let spec = ConstellationProjectorSpec::for_constellation(c.constellation);
        let (h, _, obs, q) = detection_sample(&c, 0);
        let params = DetNetParams { alpha: vec![0.0; 2], t: vec![0.5; 2], beta: 3.0 };
        assert_eq!(fbm_detnet_forward(&obs, &h, &params, &spec), RVector::zeros(4));
        let model = linearize_detection(&h, c.n0(), &q).unwrap();
        let input = BDetNetInput::new(&obs.y, &model).unwrap();
        assert_eq!(b_detnet_forward(&input, &params, &spec), RVector::zeros(4));
    }

    #[test]
    fn b_detnet_step_descends() {
        let c = cfg(8, 2, 10, 2, 8.0, Constellation::Qpsk);
        let spec = ConstellationProjectorSpec::for_constellation(c.constellation);
        let (h, _, obs, q) = detection_sample(&c, 5);
        let model = linearize_detection(&h, c.n0(), &q).unwrap();
        let input = BDetNetInput::new(&obs.y, &model).unwrap();
        let params = DetNetParams { alpha: vec![1e-4], t: vec![10.0], beta: 0.0 };
        let step = b_detnet_forward(&input, &params, &spec);
        // at x = 0 the negative gradient of the weighted residual is 2 b
        let neg_grad = &input.b * 2.0;
        assert!(step.dot(&neg_grad) > 0.0);
    }

    #[test]
    fn detection_outputs_stay_in_range() {
        let c = cfg(8, 3, 10, 1, 20.0, Constellation::Qam16);
        let spec = ConstellationProjectorSpec::for_constellation(c.constellation);
        let (h, _, obs, _) = detection_sample(&c, 1);
        let params = DetNetParams { alpha: vec![5.0; 4], t: vec![0.01; 4], beta: 8.0 };
        let x = fbm_detnet_forward(&obs, &h, &params, &spec);
        assert!(x.iter().all(|v| v.abs() <= spec.bound() + 1e-12));
    }

    #[test]
    fn cenet_is_invariant_to_row_permutation() {
        // swapping two pilot symbols permutes rows of P together with their bins
        let c = cfg(2, 1, 3, 2, 5.0, Constellation::Qpsk);
        let pilot = build_dft_pilot(&c).unwrap();
        let q = QuantizerSpec::for_system(&c).unwrap();
        let mut rng = stream_rng(4, 0, 0);
        let h = stack_matrix_as_vector(&sample_channel(&c, &mut rng));
        let z = sample_noise(pilot.nrows(), c.n0(), &mut rng);
        let mut swapped = pilot.clone();
        swapped.pilot.swap_columns(0, 2);
        let mut outs = Vec::new();
        for p in [pilot, swapped] {
            let mut r = vec![0.0; p.nrows()];
            p.apply(h.as_slice(), &mut r);
            let mut noise = z.clone();
            if outs.len() == 1 {
                // the same noise sample follows its pilot symbol
                for base in [0, 6] {
                    for n in 0..2 {
                        noise.swap_rows(base + n, base + n + 4);
                    }
                }
            }
            let obs = q.observe((RVector::from_vec(r) + noise).as_slice());
            let params = CeNetParams::initial(&c, 3, p, false);
            outs.push(fbm_cenet_forward(&obs, &params));
        }
        assert!((&outs[0] - &outs[1]).amax() < 1e-12);
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-5)
    }

    #[test]
    fn cenet_alpha_adjoint_closed_form() {
        let pilot = dft_pilot(1, 2, 1).unwrap();
        let mut p1 = pilot.clone();
        p1.pilot = CMatrix::from_element(1, 1, C64::new(1.0, 0.0));
        let q = make_quantizer(2, 1.0, None).unwrap();
        let params = CeNetParams { alpha: vec![0.0], beta: 2.0, pilot: p1, trainable_pilot: false };
        let h = RVector::from_vec(vec![0.4, -0.9]);
        let z = RVector::from_vec(vec![0.1, 0.2]);
        let (_, grad) = fbm_cenet_sample_grad(&params, &h, &z, &q, None);
        let obs = q.observe((&h + &z).as_slice());
        let g0: Vec<f64> = (0..2)
            .map(|i| 1.0 - sigmoid(-2.0 * obs.q_up[i]) - sigmoid(-2.0 * obs.q_low[i]))
            .collect();
        let want = -2.0 * (h[0] * g0[0] + h[1] * g0[1]);
        assert!((grad.alpha[0] - want).abs() < 1e-14);
        assert!(grad.pilot.is_none());
    }

    fn cenet_loss(params: &CeNetParams, h: &RVector, z: &RVector, q: &QuantizerSpec, soft: Option<SoftQuantizer>) -> f64 {
        fbm_cenet_sample_grad(params, h, z, q, soft).0
    }

    #[test]
    fn cenet_adjoints_match_finite_differences() {
        let soft = Some(SoftQuantizer { c1: 0.01, c2: 1000.0 });
        for bits in 1..=3 {
            for seed in 0..4u64 {
                let c = cfg(2, 1, 2, bits, 5.0, Constellation::Qpsk);
                let mut rng = stream_rng(seed, 7, bits as u64);
                let mut pilot = build_dft_pilot(&c).unwrap();
                pilot.pilot = complex_gaussian(1, 2, 1.0, &mut rng);
                let q = QuantizerSpec::for_system(&c).unwrap();
                let params = CeNetParams { alpha: vec![0.3, 0.2], beta: 1.7, pilot, trainable_pilot: true };
                let h = stack_matrix_as_vector(&sample_channel(&c, &mut rng));
                let z = sample_noise(8, c.n0(), &mut rng);
                for sq in [None, soft] {
                    let (_, g) = fbm_cenet_sample_grad(&params, &h, &z, &q, sq);
                    let e = 1e-6;
                    for l in 0..2 {
                        let (mut p, mut m) = (params.clone(), params.clone());
                        p.alpha[l] += e;
                        m.alpha[l] -= e;
                        let fd = (cenet_loss(&p, &h, &z, &q, sq) - cenet_loss(&m, &h, &z, &q, sq)) / (2.0 * e);
                        assert!(rel_err(fd, g.alpha[l]) < 1e-4, "alpha {l}: {fd} vs {}", g.alpha[l]);
                    }
                    let (mut p, mut m) = (params.clone(), params.clone());
                    p.beta += e;
                    m.beta -= e;
                    let fd = (cenet_loss(&p, &h, &z, &q, sq) - cenet_loss(&m, &h, &z, &q, sq)) / (2.0 * e);
                    assert!(rel_err(fd, g.beta) < 1e-4, "beta: {fd} vs {}", g.beta);
                    let pg = g.pilot.unwrap();
                    if sq.is_none() {
                        continue;
                    }
                    for t in 0..2 {
                        for (part, dir) in [(0, C64::new(e, 0.0)), (1, C64::new(0.0, e))] {
                            let (mut p, mut m) = (params.clone(), params.clone());
                            p.pilot.pilot[(0, t)] += dir;
                            m.pilot.pilot[(0, t)] -= dir;
                            let fd = (cenet_loss(&p, &h, &z, &q, sq) - cenet_loss(&m, &h, &z, &q, sq)) / (2.0 * e);
                            let an = if part == 0 { pg[(0, t)].re } else { pg[(0, t)].im };
                            assert!(rel_err(fd, an) < 1e-4, "b={bits} seed={seed} pilot {t}/{part}: {fd} vs {an}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn detnet_adjoints_match_finite_differences() {
        for constellation in [Constellation::Qpsk, Constellation::Qam16] {
            for bits in 1..=3 {
                let c = cfg(4, 2, 10, bits, 6.0, constellation);
                let spec = ConstellationProjectorSpec::for_constellation(constellation);
                let (h, x, obs, q) = detection_sample(&c, bits as u64);
                let params = DetNetParams { alpha: vec![0.08, 0.05, 0.04], t: vec![0.45, 0.3, 0.2], beta: 2.5 };
                let model = linearize_detection(&h, c.n0(), &q).unwrap();
                let input = BDetNetInput::new(&obs.y, &model).unwrap();
                let fbm = |p: &DetNetParams| fbm_detnet_sample_grad(&obs, &h, &x, p, &spec);
                let bd = |p: &DetNetParams| b_detnet_sample_grad(&input, &x, p, &spec);
                for (name, f, with_beta) in [("fbm", &fbm as &dyn Fn(&DetNetParams) -> (f64, DetNetGrad), true), ("b", &bd, false)] {
                    let (_, g) = f(&params);
                    let e = 1e-6;
                    let check = |fd: f64, an: f64, what: &str| {
                        assert!(rel_err(fd, an) < 1e-4, "{name} b={bits} {what}: {fd} vs {an}");
                    };
                    for l in 0..3 {
                        let (mut p, mut m) = (params.clone(), params.clone());
                        p.alpha[l] += e;
                        m.alpha[l] -= e;
                        check((f(&p).0 - f(&m).0) / (2.0 * e), g.alpha[l], "alpha");
                        let (mut p, mut m) = (params.clone(), params.clone());
                        p.t[l] += e;
                        m.t[l] -= e;
                        check((f(&p).0 - f(&m).0) / (2.0 * e), g.t[l], "t");
                    }
                    if with_beta {
                        let (mut p, mut m) = (params.clone(), params.clone());
                        p.beta += e;
                        m.beta -= e;
                        check((f(&p).0 - f(&m).0) / (2.0 * e), g.beta, "beta");
                    }
                }
            }
        }
    }

    #[test]
    fn hard_decision_examples() {
        let s = 0.5f64.sqrt();
        let (sym, bits) = hard_decision(&[s, -s, 0.3, -2.0], Constellation::Qpsk);
        assert_eq!(sym, vec![C64::new(s, s), C64::new(-s, -s)]);
        assert_eq!(bits.len(), 4);
        let (sym, _) = hard_decision(&[0.0, 0.0], Constellation::Qpsk);
        assert_eq!(sym[0], C64::new(-s, -s));
        let l = Constellation::Qam16.levels();
        let (sym, _) = hard_decision(&[(l[1] + l[2]) / 2.0, l[3] - 0.1], Constellation::Qam16);
        assert_eq!(sym[0], C64::new(l[1], l[3]));
    }

    #[test]
    fn hard_decision_round_trips_bits() {
        for c in [Constellation::Qpsk, Constellation::Qam16] {
            let cfg = cfg(4, 3, 10, 2, 10.0, c);
            let mut rng = stream_rng(2, 0, 0);
            let (s, bits) = sample_symbols(&cfg, 1, &mut rng);
            let x = stack_vector(s.as_slice());
            let noisy: Vec<f64> = x.iter().enumerate().map(|(i, v)| v + 0.1 * ((i % 3) as f64 - 1.0)).collect();
            let (sym, got) = hard_decision(&noisy, c);
            assert_eq!(got, bits);
            assert_eq!(sym.as_slice(), s.as_slice());
        }
    }
}
