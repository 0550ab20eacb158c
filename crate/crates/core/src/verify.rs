//! Self-checks behind the `verify` command.
//!
//! Each check measures one scalar (a deviation, an error ratio or a
//! z-score) and passes when it does not exceed its tolerance times a
//! user-supplied scale. The measurement functions are public so that
//! larger runs can reuse them with their own instance counts.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::bussgang::{bmmse_estimate, bussgang_gain, linearize_detection, linearize_training, sigma_y_onebit, CHANNEL_PRIOR_VAR};
use crate::error::Result;
use crate::kernels::{normal_cdf, sigmoid_cdf};
use crate::likelihood::{
    exhaustive_ml_detect, gradient_ascent_channel, ml_gradient_reformulated, ml_objective_exact, ml_objective_reformulated,
    projected_gradient_detect, projector_psi, ConstellationProjectorSpec, DetectionObjective, LikelihoodContext,
};
use crate::linalg::{stack_matrix, stack_matrix_as_vector, stack_vector, LinearOperator, RMatrix, RVector, C64};
use crate::networks::{
    b_detnet_forward, b_detnet_sample_grad, fbm_cenet_forward, fbm_cenet_sample_grad, fbm_detnet_forward, fbm_detnet_sample_grad,
    BDetNetInput, CeNetParams, DetNetGrad, DetNetParams, SoftQuantizer,
};
use crate::pilot::{build_dft_pilot, expand_pilot};
use crate::quantizer::{make_quantizer, QuantizedObservation, QuantizerSpec};
use crate::sampling::{complex_gaussian, domain, sample_channel, sample_noise, sample_symbols, stream_rng};
use crate::system::{Constellation, SystemConfig};

fn normal<R: Rng>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor).max(ABSOLUTE_FLOOR)
}

/// Gradient entries smaller than this fraction of the largest entry of the
/// same instance are compared against that threshold instead of their own
/// magnitude, which would otherwise measure finite-difference round-off.
pub const FLOOR_FRACTION: f64 = 1e-3;
const ABSOLUTE_FLOOR: f64 = 1e-5;

/// `max |Phi(t) - sigmoid(1.702 t)|` over `[-10, 10]` on the given grid step.
pub fn sigmoid_cdf_gap(step: f64) -> f64 {
    let n = (20.0 / step).round() as usize;
    (0..=n)
        .map(|i| {
            let t = -10.0 + i as f64 * step;
            (normal_cdf(t) - sigmoid_cdf(t)).abs()
        })
        .fold(0.0, f64::max)
}

/// |Monte-Carlo - closed form| of the one-bit output correlation of a
/// unit-variance Gaussian pair, in standard errors.
pub fn arcsine_law_zscore(correlation: f64, draws: usize, seed: u64) -> Result<f64> {
    let q = make_quantizer(1, 1.0, None)?;
    let mut rng = stream_rng(seed, domain::VERIFY, (correlation * 1e6) as u64);
    let s = (1.0 - correlation * correlation).sqrt();
    let (mut sum, mut sq) = (0.0, 0.0);
    for _ in 0..draws {
        let a = normal(&mut rng);
        let b = correlation * a + s * normal(&mut rng);
        let p = q.quantize(a) * q.quantize(b);
        sum += p;
        sq += p * p;
    }
    let n = draws as f64;
    let mean = sum / n;
    let se = ((sq / n - mean * mean) / n).sqrt();
    let sigma_r = RMatrix::from_row_slice(2, 2, &[1.0, correlation, correlation, 1.0]);
    let theory = sigma_y_onebit(&sigma_r, q.delta)?[(0, 1)];
    Ok((mean - theory).abs() / se)
}

/// Relative error of the closed-form Bussgang gain against a Monte-Carlo
/// estimate `E[y r] / E[r^2]`, worst case over 1 to 3 bits.
pub fn bussgang_gain_error(draws: usize, seed: u64) -> Result<f64> {
    let mut worst = 0.0f64;
    for bits in 1..=3 {
        let q = make_quantizer(bits, 1.0, None)?;
        let var = 1.3;
        let v = bussgang_gain(&[var], &q)?[0];
        let mut rng = stream_rng(seed, domain::VERIFY, 100 + bits as u64);
        let (mut yr, mut rr) = (0.0, 0.0);
        for _ in 0..draws {
            let r = normal(&mut rng) * var.sqrt();
            yr += q.quantize(r) * r;
            rr += r * r;
        }
        worst = worst.max(rel_err(yr / rr, v, 1e-12));
    }
    Ok(worst)
}

/// Relative gap between one-bit scalar BMMSE and the exact conditional mean
/// `E[h | y]`, which coincide for a single one-bit observation.
pub fn bmmse_conditional_mean_gap() -> Result<f64> {
    let q = make_quantizer(1, 1.0, None)?;
    let mut worst = 0.0f64;
    for (p, n0) in [(1.0, 1.0), (0.7, 0.1), (1.5, 3.0)] {
        let pm = RMatrix::from_element(1, 1, p);
        let model = linearize_training(&pm, CHANNEL_PRIOR_VAR, n0, &q)?;
        let y = RVector::from_element(1, q.delta / 2.0);
        let est = bmmse_estimate(&y, &model.a, &model.sigma_y, CHANNEL_PRIOR_VAR)?[0];
        let sigma_r = (p * p * CHANNEL_PRIOR_VAR + n0 / 2.0).sqrt();
        let exact = p * CHANNEL_PRIOR_VAR / sigma_r * (2.0 / PI).sqrt();
        worst = worst.max(rel_err(est, exact, 1e-12));
    }
    Ok(worst)
}

/// Outcome of a likelihood gradient check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientCheck {
    pub max_rel_err: f64,
    /// Saturated observations among all instances.
    pub saturated: usize,
}

/// Analytic gradient of the reformulated likelihood against central
/// differences. Even instances use a pilot design, odd ones a detection
/// channel; sizes are drawn with `N <= 4`, `K <= 2`, `b` in 1..=3.
pub fn likelihood_gradient_check(instances: usize, seed: u64) -> Result<GradientCheck> {
    let mut out = GradientCheck { max_rel_err: 0.0, saturated: 0 };
    for i in 0..instances {
        let mut rng = stream_rng(seed, domain::VERIFY, 1000 + i as u64);
        let n = rng.random_range(1..=4usize);
        let k = rng.random_range(1..=2usize.min(n));
        let bits = rng.random_range(1..=3u32);
        let snr_db = rng.random_range(-5.0..20.0);
        let cfg = SystemConfig::new(n, k, k + 1 + rng.random_range(0..3usize), bits, snr_db, Constellation::Qpsk, seed)?;
        // undersized quantizer range so that saturation bins show up
        let q = make_quantizer(bits, cfg.received_real_variance().sqrt() * rng.random_range(0.3..1.0), None)?;
        let mut check = |design: &dyn LinearOperator, truth: &RVector, rng: &mut rand_chacha::ChaCha8Rng| -> Result<()> {
            let mut r = vec![0.0; design.nrows()];
            design.apply(truth.as_slice(), &mut r);
            let z = sample_noise(r.len(), cfg.n0(), rng);
            let obs = q.observe((RVector::from_vec(r) + z).as_slice());
            out.saturated += obs.q_up.iter().chain(obs.q_low.iter()).filter(|x| x.is_infinite()).count();
            let ctx = LikelihoodContext::new(design, &obs, cfg.rho())?;
            let v: Vec<f64> = truth.iter().map(|t| t + 0.3 * normal(rng)).collect();
            let g = ml_gradient_reformulated(&v, &ctx);
            let floor = FLOOR_FRACTION * g.amax();
            let e = 1e-6;
            for j in 0..v.len() {
                let (mut vp, mut vm) = (v.clone(), v.clone());
                vp[j] += e;
                vm[j] -= e;
                let fd = (ml_objective_reformulated(&vp, &ctx) - ml_objective_reformulated(&vm, &ctx)) / (2.0 * e);
                out.max_rel_err = out.max_rel_err.max(rel_err(fd, g[j], floor));
            }
            Ok(())
        };
        if i % 2 == 0 {
            let pilot = build_dft_pilot(&cfg)?;
            let h = stack_matrix_as_vector(&sample_channel(&cfg, &mut rng));
            check(&pilot, &h, &mut rng)?;
        } else {
            let h = stack_matrix(&sample_channel(&cfg, &mut rng));
            let (s, _) = sample_symbols(&cfg, 1, &mut rng);
            check(&h, &stack_vector(s.as_slice()), &mut rng)?;
        }
    }
    Ok(out)
}

/// FBM-CENet adjoints (step sizes, sigmoid scale and pilot entries through
/// the soft quantizer) against central differences on `N = 2`, `K = 1`,
/// `T = 2`, `L = 2` instances; worst relative error.
pub fn cenet_backprop_error(instances: usize, seed: u64) -> Result<f64> {
    let soft = Some(SoftQuantizer { c1: 0.01, c2: 1000.0 });
    let mut worst = 0.0f64;
    for i in 0..instances {
        let bits = 1 + (i % 3) as u32;
        let cfg = SystemConfig::new(2, 1, 2, bits, 5.0, Constellation::Qpsk, seed)?;
        let mut rng = stream_rng(seed, domain::VERIFY, 2000 + i as u64);
        let pilot = expand_pilot(&complex_gaussian(1, 2, 1.0, &mut rng), 2);
        let q = QuantizerSpec::for_system(&cfg)?;
        let params = CeNetParams {
            alpha: vec![rng.random_range(0.05..0.5), rng.random_range(0.05..0.5)],
            beta: rng.random_range(0.5..3.0),
            pilot,
            trainable_pilot: true,
        };
        let h = stack_matrix_as_vector(&sample_channel(&cfg, &mut rng));
        let z = sample_noise(8, cfg.n0(), &mut rng);
        let loss = |p: &CeNetParams| fbm_cenet_sample_grad(p, &h, &z, &q, soft).0;
        let (_, g) = fbm_cenet_sample_grad(&params, &h, &z, &q, soft);
        let pg = g.pilot.clone().expect("pilot is trainable");
        let floor = FLOOR_FRACTION * g.alpha.iter().chain(&[g.beta]).chain(pg.iter().flat_map(|z| [&z.re, &z.im])).fold(0.0f64, |m, x| m.max(x.abs()));
        let e = 1e-6;
        let fd = |f: &dyn Fn(&mut CeNetParams, f64)| {
            let (mut p, mut m) = (params.clone(), params.clone());
            f(&mut p, e);
            f(&mut m, -e);
            (loss(&p) - loss(&m)) / (2.0 * e)
        };
        for l in 0..2 {
            worst = worst.max(rel_err(fd(&|p, d| p.alpha[l] += d), g.alpha[l], floor));
        }
        worst = worst.max(rel_err(fd(&|p, d| p.beta += d), g.beta, floor));
        for t in 0..2 {
            worst = worst.max(rel_err(fd(&|p, d| p.pilot.pilot[(0, t)] += C64::new(d, 0.0)), pg[(0, t)].re, floor));
            worst = worst.max(rel_err(fd(&|p, d| p.pilot.pilot[(0, t)] += C64::new(0.0, d)), pg[(0, t)].im, floor));
        }
    }
    Ok(worst)
}

fn detection_instance(cfg: &SystemConfig, index: u64) -> (RMatrix, RVector, QuantizedObservation, QuantizerSpec) {
    let mut rng = stream_rng(cfg.seed, domain::VERIFY, index);
    let h = stack_matrix(&sample_channel(cfg, &mut rng));
    let (s, _) = sample_symbols(cfg, 1, &mut rng);
    let x = stack_vector(s.as_slice());
    let q = QuantizerSpec::for_system(cfg).expect("valid system");
    let r = &h * &x + sample_noise(h.nrows(), cfg.n0(), &mut rng);
    let obs = q.observe(r.as_slice());
    (h, x, obs, q)
}

/// B-DetNet and FBM-DetNet adjoints (step sizes, projector scales and, for
/// FBM-DetNet, the sigmoid scale) against central differences.
pub fn detnet_backprop_error(instances: usize, seed: u64) -> Result<f64> {
    let mut worst = 0.0f64;
    for i in 0..instances {
        let constellation = if i % 2 == 0 { Constellation::Qpsk } else { Constellation::Qam16 };
        let bits = 1 + (i % 3) as u32;
        let cfg = SystemConfig::new(2, 1, 2, bits, 8.0, constellation, seed)?;
        let spec = ConstellationProjectorSpec::for_constellation(constellation);
        let (h, x, obs, q) = detection_instance(&cfg, 3000 + i as u64);
        let mut rng = stream_rng(seed, domain::VERIFY, 3500 + i as u64);
        let params = DetNetParams {
            alpha: (0..2).map(|_| rng.random_range(0.02..0.2)).collect(),
            t: (0..2).map(|_| rng.random_range(0.1..0.6)).collect(),
            beta: rng.random_range(0.5..3.0),
        };
        let model = linearize_detection(&h, cfg.n0(), &q)?;
        let input = BDetNetInput::new(&obs.y, &model)?;
        let fbm = |p: &DetNetParams| fbm_detnet_sample_grad(&obs, &h, &x, p, &spec);
        let bd = |p: &DetNetParams| b_detnet_sample_grad(&input, &x, p, &spec);
        let nets: [(&dyn Fn(&DetNetParams) -> (f64, DetNetGrad), bool); 2] = [(&fbm, true), (&bd, false)];
        for (f, with_beta) in nets {
            let (_, g) = f(&params);
            let beta = if with_beta { g.beta } else { 0.0 };
            let floor = FLOOR_FRACTION * g.alpha.iter().chain(&g.t).chain(&[beta]).fold(0.0f64, |m, x| m.max(x.abs()));
            let e = 1e-6;
            let fd = |m: &dyn Fn(&mut DetNetParams, f64)| {
                let (mut p, mut n) = (params.clone(), params.clone());
                m(&mut p, e);
                m(&mut n, -e);
                (f(&p).0 - f(&n).0) / (2.0 * e)
            };
            for l in 0..2 {
                worst = worst.max(rel_err(fd(&|p, d| p.alpha[l] += d), g.alpha[l], floor));
                worst = worst.max(rel_err(fd(&|p, d| p.t[l] += d), g.t[l], floor));
            }
            if with_beta {
                worst = worst.max(rel_err(fd(&|p, d| p.beta += d), g.beta, floor));
            }
        }
    }
    Ok(worst)
}

/// Per-network largest deviation between the unfolded forward pass and the
/// iteration it was built from, under matched parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnfoldingDeviation {
    pub fbm_cenet: f64,
    pub fbm_detnet: f64,
    pub b_detnet: f64,
}

pub fn unfolding_deviation(instances: usize, seed: u64) -> Result<UnfoldingDeviation> {
    let mut out = UnfoldingDeviation { fbm_cenet: 0.0, fbm_detnet: 0.0, b_detnet: 0.0 };
    for i in 0..instances {
        let mut rng = stream_rng(seed, domain::VERIFY, 4000 + i as u64);
        let bits = 1 + (i % 3) as u32;
        let constellation = if i % 2 == 0 { Constellation::Qpsk } else { Constellation::Qam16 };
        let cfg = SystemConfig::new(8, 2, 6, bits, rng.random_range(0.0..15.0), constellation, seed)?;
        let layers = 6;
        let steps: Vec<f64> = (0..layers).map(|_| rng.random_range(0.005..0.05)).collect();
        let t: Vec<f64> = (0..layers).map(|_| rng.random_range(0.05..0.5)).collect();

        let pilot = build_dft_pilot(&cfg)?;
        let q = QuantizerSpec::for_system(&cfg)?;
        let h = stack_matrix_as_vector(&sample_channel(&cfg, &mut rng));
        let mut r = vec![0.0; pilot.nrows()];
        pilot.apply(h.as_slice(), &mut r);
        let obs = q.observe((RVector::from_vec(r) + sample_noise(pilot.nrows(), cfg.n0(), &mut rng)).as_slice());
        let ctx = LikelihoodContext::new(&pilot, &obs, cfg.rho())?;
        let beta = ctx.sigmoid_scale();
        let params = CeNetParams { alpha: steps.iter().map(|s| s * beta).collect(), beta, pilot: pilot.clone(), trainable_pilot: false };
        out.fbm_cenet = out.fbm_cenet.max((fbm_cenet_forward(&obs, &params) - gradient_ascent_channel(&ctx, &steps)).amax());

        let spec = ConstellationProjectorSpec::for_constellation(constellation);
        let (hd, _, obs, q) = detection_instance(&cfg, 4500 + i as u64);
        let ctx = LikelihoodContext::new(&hd, &obs, cfg.rho())?;
        let params = DetNetParams { alpha: steps.iter().map(|s| s * beta).collect(), t: t.clone(), beta };
        let net = fbm_detnet_forward(&obs, &hd, &params, &spec);
        let iter = projected_gradient_detect(DetectionObjective::Quantized(ctx), &steps, &t, &spec)?;
        out.fbm_detnet = out.fbm_detnet.max((net - iter).amax());

        let model = linearize_detection(&hd, cfg.n0(), &q)?;
        let input = BDetNetInput::new(&obs.y, &model)?;
        let params = DetNetParams { alpha: steps.clone(), t: t.clone(), beta };
        let net = b_detnet_forward(&input, &params, &spec);
        let iter = projected_gradient_detect(DetectionObjective::Bussgang { model: &model, y: &obs.y }, &steps, &t, &spec)?;
        out.b_detnet = out.b_detnet.max((net - iter).amax());
    }
    Ok(out)
}

/// `max |psi_t(x) - clamp(x)|` for QPSK with `t = delta' / 2`, where the
/// soft projector is exactly the box projection.
pub fn projector_box_gap() -> f64 {
    let spec = ConstellationProjectorSpec::for_constellation(Constellation::Qpsk);
    let b = spec.bound();
    (0..=4000)
        .map(|i| {
            let x = -3.0 + 6.0 * i as f64 / 4000.0;
            (projector_psi(x, spec.delta_prime / 2.0, &spec) - x.clamp(-b, b)).abs()
        })
        .fold(0.0, f64::max)
}

/// Largest amount by which an untrained projected-gradient detector's
/// hard decision beats exhaustive ML on the exact likelihood (zero when
/// ML is optimal, as it must be).
pub fn exhaustive_ml_excess(instances: usize, seed: u64) -> Result<f64> {
    let mut worst = 0.0f64;
    for i in 0..instances {
        let cfg = SystemConfig::new(4, 2, 4, 2, 10.0, Constellation::Qpsk, seed)?;
        let spec = ConstellationProjectorSpec::for_constellation(cfg.constellation);
        let (h, _, obs, _) = detection_instance(&cfg, 5000 + i as u64);
        let ctx = LikelihoodContext::new(&h, &obs, cfg.rho())?;
        let ml = exhaustive_ml_detect(&ctx, cfg.constellation, cfg.users)?;
        let pg = projected_gradient_detect(DetectionObjective::Quantized(ctx), &[0.05; 10], &[spec.delta_prime / 2.0; 10], &spec)?;
        let (sym, _) = crate::networks::hard_decision(pg.as_slice(), cfg.constellation);
        let pg = stack_vector(&sym);
        worst = worst.max(ml_objective_exact(pg.as_slice(), &ctx) - ml_objective_exact(ml.as_slice(), &ctx));
    }
    Ok(worst)
}

/// Largest gap between soft-quantizer bin edges at sharpness `c1` and the
/// hard edges, for inputs at least `margin` away from every threshold.
pub fn soft_quantizer_gap(c1: f64, margin: f64) -> Result<f64> {
    let mut worst = 0.0f64;
    for bits in 1..=3 {
        let q = make_quantizer(bits, 1.0, None)?;
        let thresholds = q.thresholds();
        for i in 0..=2000 {
            let r = -4.0 + 8.0 * i as f64 / 2000.0;
            if thresholds.iter().any(|t| (r - t).abs() < margin) {
                continue;
            }
            let soft = q.soft_quantize(r, c1, 1000.0);
            let (low, up) = q.bin_bounds(q.quantize(r))?;
            for (s, h) in [(soft.q_up, up), (soft.q_low, low)] {
                if h.is_finite() {
                    worst = worst.max((s - h).abs());
                }
            }
        }
    }
    Ok(worst)
}

pub struct Check {
    pub name: &'static str,
    pub description: &'static str,
    pub tolerance: f64,
    run: fn(u64) -> Result<f64>,
}

pub fn checks() -> Vec<Check> {
    vec![
        Check { name: "kernels/sigmoid-cdf-bound", description: "max |Phi(t) - sigmoid(1.702 t)| on [-10, 10]", tolerance: 0.0095, run: |_| Ok(sigmoid_cdf_gap(1e-3)) },
        Check {
            name: "bussgang/arcsine-law",
            description: "one-bit output correlation vs arcsine law, worst z-score",
            tolerance: 3.0,
            run: |s| [0.0, 0.5, 0.9].iter().try_fold(0.0f64, |m, &c| Ok(m.max(arcsine_law_zscore(c, 200_000, s)?))),
        },
        Check { name: "bussgang/gain", description: "closed-form Bussgang gain vs Monte-Carlo, relative", tolerance: 0.01, run: |s| bussgang_gain_error(200_000, s) },
        Check { name: "bussgang/bmmse-conditional-mean", description: "scalar one-bit BMMSE vs exact E[h|y], relative", tolerance: 1e-7, run: |_| bmmse_conditional_mean_gap() },
        Check {
            name: "gradients/likelihood",
            description: "reformulated likelihood gradient vs central differences, relative",
            tolerance: 1e-5,
            run: |s| Ok(likelihood_gradient_check(30, s)?.max_rel_err),
        },
        Check { name: "gradients/fbm-cenet", description: "FBM-CENet adjoints incl. soft-quantized pilot, relative", tolerance: 1e-4, run: |s| cenet_backprop_error(6, s) },
        Check { name: "gradients/detnets", description: "B-DetNet and FBM-DetNet adjoints, relative", tolerance: 1e-4, run: |s| detnet_backprop_error(6, s) },
        Check { name: "unfolding/fbm-cenet", description: "FBM-CENet vs gradient-ascent iteration, max deviation", tolerance: 1e-10, run: |s| Ok(unfolding_deviation(3, s)?.fbm_cenet) },
        Check { name: "unfolding/fbm-detnet", description: "FBM-DetNet vs projected-gradient iteration, max deviation", tolerance: 1e-10, run: |s| Ok(unfolding_deviation(3, s)?.fbm_detnet) },
        Check { name: "unfolding/b-detnet", description: "B-DetNet vs Bussgang projected-gradient iteration, max deviation", tolerance: 1e-10, run: |s| Ok(unfolding_deviation(3, s)?.b_detnet) },
        Check { name: "projector/box", description: "QPSK projector at t = delta'/2 vs box projection", tolerance: 1e-12, run: |_| Ok(projector_box_gap()) },
        Check { name: "oracle/exhaustive-ml", description: "projected-gradient likelihood excess over exhaustive ML", tolerance: 1e-9, run: |s| exhaustive_ml_excess(20, s) },
        Check { name: "quantizer/soft-limit", description: "soft bin edges at c1 = 1e-4 vs hard edges", tolerance: 1e-2, run: |_| soft_quantizer_gap(1e-4, 0.05) },
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: String,
    pub description: String,
    pub measured: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub seconds: f64,
    pub error: Option<String>,
}

/// Runs every check whose name contains `filter`.
pub fn run_checks(filter: Option<&str>, tolerance_scale: f64, seed: u64) -> Vec<CheckOutcome> {
    checks()
        .into_iter()
        .filter(|c| filter.is_none_or(|f| c.name.contains(f)))
        .map(|c| {
            let start = Instant::now();
            let tolerance = c.tolerance * tolerance_scale;
            let (measured, error) = match (c.run)(seed) {
                Ok(v) => (v, None),
                Err(e) => (f64::NAN, Some(e.to_string())),
            };
            CheckOutcome {
                name: c.name.into(),
                description: c.description.into(),
                measured,
                tolerance,
                passed: error.is_none() && measured <= tolerance,
                seconds: start.elapsed().as_secs_f64(),
                error,
            }
        })
        .collect()
}

pub fn format_report(outcomes: &[CheckOutcome], tolerance_scale: f64) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "tolerance scale {tolerance_scale}");
    for o in outcomes {
        let status = if o.passed { "PASS" } else { "FAIL" };
        let _ = write!(s, "{status} {:<34} measured {:.3e} tolerance {:.3e} ({:.2}s)  {}", o.name, o.measured, o.tolerance, o.seconds, o.description);
        if let Some(e) = &o.error {
            let _ = write!(s, " error: {e}");
        }
        s.push('\n');
    }
    let passed = outcomes.iter().filter(|o| o.passed).count();
    let _ = writeln!(s, "{passed}/{} checks passed", outcomes.len());
    s
}
