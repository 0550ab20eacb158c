//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Pass criterion numbers as arguments to run a subset, for example
//! `cargo test --test acceptance -- 7 8`.

use std::process::ExitCode;
use std::time::Instant;

use fewbit::harness::{
    mean_and_se, paired_difference, run_ber_sweep_samples, run_nmse_sweep_samples, sample_block, BerSweep, Csi,
    DetectionMethod, DetectionModels, EstimationMethod, ModelStore, NmseSweep, PointSamples, SweepResult, SweepRow,
};
use fewbit::likelihood::{exhaustive_ml_detect, ml_objective_exact, ConstellationProjectorSpec, LikelihoodContext};
use fewbit::linalg::stack_matrix;
use fewbit::networks::{fbm_detnet_forward, hard_decision, CeNetParams, DetNetParams};
use fewbit::pilot::build_dft_pilot;
use fewbit::quantizer::QuantizerSpec;
use fewbit::system::{Constellation, SystemConfig};
use fewbit::training::{train_cenet, train_detnet, DetNetKind, TrainConfig};
use fewbit::verify::{
    arcsine_law_zscore, cenet_backprop_error, detnet_backprop_error, likelihood_gradient_check, sigmoid_cdf_gap,
    unfolding_deviation,
};

const SEED: u64 = 2024;
const CE_SNRS: [f64; 5] = [0.0, 5.0, 10.0, 15.0, 20.0];
const CE_LAYERS: usize = 8;
const CE_TRIALS: usize = 1000;
const DET_SNRS: [f64; 3] = [0.0, 5.0, 10.0];
const DET_LAYERS: usize = 8;

struct Verdict {
    passed: bool,
    detail: String,
}

impl Verdict {
    fn new(passed: bool, detail: String) -> Self {
        Self { passed, detail }
    }
}

/// Criterion outcome plus the CSV it produced, if any.
struct Run {
    verdict: Verdict,
    csv: Option<Vec<u8>>,
    /// Training time spent elsewhere that this criterion's budget includes.
    borrowed_seconds: f64,
}

fn csv_bytes(r: &SweepResult) -> Vec<u8> {
    let mut buf = Vec::new();
    r.write_csv(&mut buf).expect("in-memory write");
    buf
}

fn row(snr_db: f64, method: &str, metric: &str, value: f64, trials: usize, std_error: f64) -> SweepRow {
    SweepRow { snr_db, method: method.into(), metric: metric.into(), value, trials, std_error }
}

fn ce_system(bits: u32, snr_db: f64) -> SystemConfig {
    SystemConfig::new(32, 4, 20, bits, snr_db, Constellation::Qpsk, SEED).expect("valid system")
}

fn ce_train() -> TrainConfig {
    TrainConfig { epochs: 200, batch: 100, ..TrainConfig::default() }
}

fn det_train() -> TrainConfig {
    TrainConfig { epochs: 1000, batch: 200, lr0: 0.01, ..TrainConfig::default() }
}

fn train_ce(cfg: &SystemConfig, trainable_pilot: bool) -> CeNetParams {
    let init = CeNetParams::initial(cfg, CE_LAYERS, build_dft_pilot(cfg).expect("pilot"), trainable_pilot);
    let tcfg = TrainConfig { trainable_pilot, ..ce_train() };
    train_cenet(cfg, &tcfg, init).expect("training converges").0
}

fn c1() -> Verdict {
    let gap = sigmoid_cdf_gap(1e-3);
    Verdict::new(gap <= 0.0095, format!("max |Phi - sigmoid(1.702 t)| = {gap:.6}"))
}

fn c2() -> Verdict {
    let g = likelihood_gradient_check(100, SEED).expect("check runs");
    Verdict::new(
        g.max_rel_err < 1e-5 && g.saturated > 0,
        format!("worst relative error {:.2e} over 100 instances, {} saturated observations", g.max_rel_err, g.saturated),
    )
}

fn c3() -> Verdict {
    let ce = cenet_backprop_error(12, SEED).expect("check runs");
    let det = detnet_backprop_error(12, SEED).expect("check runs");
    Verdict::new(ce < 1e-4 && det < 1e-4, format!("worst relative error: fbm-cenet {ce:.2e}, detnets {det:.2e}"))
}

fn c4() -> Verdict {
    let d = unfolding_deviation(12, SEED).expect("check runs");
    let worst = d.fbm_cenet.max(d.fbm_detnet).max(d.b_detnet);
    Verdict::new(
        worst < 1e-10,
        format!("max deviation: fbm-cenet {:.1e}, fbm-detnet {:.1e}, b-detnet {:.1e}", d.fbm_cenet, d.fbm_detnet, d.b_detnet),
    )
}

fn c5() -> Run {
    let mut rows = Vec::new();
    let mut worst = 0.0f64;
    for c in [0.0, 0.5, 0.9] {
        let z = arcsine_law_zscore(c, 1_000_000, SEED).expect("check runs");
        worst = worst.max(z);
        rows.push(row(c, "arcsine-law", "z", z, 1_000_000, 0.0));
    }
    Run {
        verdict: Verdict::new(worst <= 3.0, format!("worst |z| = {worst:.2} at correlations 0, 0.5, 0.9")),
        csv: Some(csv_bytes(&SweepResult { rows })),
        borrowed_seconds: 0.0,
    }
}

fn c6() -> Run {
    let cfg = SystemConfig::new(8, 2, 10, 2, 15.0, Constellation::Qpsk, SEED).expect("valid system");
    let spec = ConstellationProjectorSpec::for_constellation(cfg.constellation);
    let tcfg = TrainConfig { epochs: 500, batch: 200, lr0: 0.01, ..TrainConfig::default() };
    let (params, _) = train_detnet(&cfg, &tcfg, DetNetParams::initial(&cfg, DET_LAYERS), DetNetKind::Fbm).expect("training");
    let quant = QuantizerSpec::for_system(&cfg).expect("quantizer");
    let trials = 1000;
    let (mut agree, mut beats, mut worst_excess) = (0usize, 0usize, f64::NEG_INFINITY);
    for i in 0..trials {
        let (h, block, _) = sample_block(&cfg, &quant, 1, i as u64);
        let h = stack_matrix(&h);
        let obs = &block.observations[0];
        let ctx = LikelihoodContext::new(&h, obs, cfg.rho()).expect("context");
        let ml = exhaustive_ml_detect(&ctx, cfg.constellation, cfg.users).expect("small search");
        let (net_sym, _) = hard_decision(fbm_detnet_forward(obs, &h, &params, &spec).as_slice(), cfg.constellation);
        let (ml_sym, _) = hard_decision(ml.as_slice(), cfg.constellation);
        agree += usize::from(net_sym == ml_sym);
        let net = fewbit::linalg::stack_vector(&net_sym);
        let excess = ml_objective_exact(net.as_slice(), &ctx) - ml_objective_exact(ml.as_slice(), &ctx);
        worst_excess = worst_excess.max(excess);
        beats += usize::from(excess > 1e-9);
    }
    let rate = agree as f64 / trials as f64;
    let rows = vec![
        row(15.0, "fbm-detnet", "ml-agreement", rate, trials, (rate * (1.0 - rate) / trials as f64).sqrt()),
        row(15.0, "fbm-detnet", "ml-beaten", beats as f64, trials, 0.0),
    ];
    Run {
        verdict: Verdict::new(
            rate >= 0.9 && beats == 0,
            format!("agreement {:.1}%, instances beating ML {beats}, worst likelihood excess {worst_excess:.2e}", 100.0 * rate),
        ),
        csv: Some(csv_bytes(&SweepResult { rows })),
        borrowed_seconds: 0.0,
    }
}

fn c7(fixed: &mut ModelStore<CeNetParams>) -> Run {
    for &snr in &CE_SNRS {
        fixed.insert("fbm-cenet", snr, train_ce(&ce_system(2, snr), false));
    }
    let sweep = NmseSweep {
        system: ce_system(2, 0.0),
        snrs_db: CE_SNRS.to_vec(),
        trials: CE_TRIALS,
        methods: vec![EstimationMethod::Bmmse, EstimationMethod::Bwzf, EstimationMethod::FbmCenet("fbm-cenet".into())],
    };
    let (result, _) = run_nmse_sweep_samples(&sweep, fixed).expect("sweep");
    let mut ok = true;
    let mut parts = Vec::new();
    for &snr in &CE_SNRS {
        let net = result.get(snr, "fbm-cenet").expect("row");
        let mut margins = Vec::new();
        for base in ["bmmse", "bwzf"] {
            let b = result.get(snr, base).expect("row");
            let combined = (net.std_error.powi(2) + b.std_error.powi(2)).sqrt();
            let z = (b.value - net.value) / combined;
            ok &= z > 2.0;
            margins.push(format!("{base} {:.4} ({z:.1} se)", b.value));
        }
        parts.push(format!("{snr} dB: net {:.4} vs {}", net.value, margins.join(", ")));
    }
    Run { verdict: Verdict::new(ok, parts.join("; ")), csv: Some(csv_bytes(&result)), borrowed_seconds: 0.0 }
}

fn c8(fixed: &ModelStore<CeNetParams>, fixed_seconds: f64) -> Run {
    let mut models = fixed.clone();
    for &snr in &CE_SNRS {
        models.insert("fbm-cenet-pilot", snr, train_ce(&ce_system(2, snr), true));
    }
    let sweep = NmseSweep {
        system: ce_system(2, 0.0),
        snrs_db: CE_SNRS.to_vec(),
        trials: CE_TRIALS,
        methods: vec![EstimationMethod::FbmCenet("fbm-cenet".into()), EstimationMethod::FbmCenet("fbm-cenet-pilot".into())],
    };
    let (result, _) = run_nmse_sweep_samples(&sweep, &models).expect("sweep");
    let mut ok = true;
    let mut parts = Vec::new();
    for &snr in &CE_SNRS {
        let f = result.get(snr, "fbm-cenet").expect("row").value;
        let t = result.get(snr, "fbm-cenet-pilot").expect("row").value;
        let gap_db = 10.0 * (t / f).log10();
        ok &= gap_db <= 0.5;
        parts.push(format!("{snr} dB: {gap_db:+.2} dB"));
    }
    Run {
        verdict: Verdict::new(ok, format!("trainable minus fixed pilot NMSE: {}", parts.join(", "))),
        csv: Some(csv_bytes(&result)),
        borrowed_seconds: fixed_seconds,
    }
}

fn c9() -> Run {
    let system = SystemConfig::new(32, 4, 20, 1, 0.0, Constellation::Qpsk, SEED).expect("valid system");
    let mut models = DetectionModels::default();
    for &snr in &DET_SNRS {
        let cfg = system.with_snr_db(snr);
        for kind in [DetNetKind::Bussgang, DetNetKind::Fbm] {
            let (p, _) = train_detnet(&cfg, &det_train(), DetNetParams::initial(&cfg, DET_LAYERS), kind).expect("training");
            models.detnets.insert(kind.name(), snr, p);
        }
    }
    let sweep = BerSweep {
        system,
        snrs_db: DET_SNRS.to_vec(),
        channels: 1000,
        vectors_per_channel: 100,
        methods: vec![
            DetectionMethod::FbmDetNet("fbm-detnet".into()),
            DetectionMethod::BDetNet("b-detnet".into()),
            DetectionMethod::BmmseLinear,
        ],
        csi: Csi::Perfect,
    };
    let (result, samples) = run_ber_sweep_samples(&sweep, &models).expect("sweep");
    let mut ok = true;
    let mut parts = Vec::new();
    for p in &samples {
        let [fbm, bdet, bmmse] = &p.per_method[..] else { unreachable!() };
        let (m1, s1) = paired_difference(bdet, fbm).expect("paired");
        let (m2, s2) = paired_difference(bmmse, bdet).expect("paired");
        let (z1, z2) = (m1 / s1, m2 / s2);
        ok &= z1 > 2.0 && z2 > 2.0;
        parts.push(format!(
            "{} dB: fbm {:.2e} < b-detnet {:.2e} ({z1:.1} se) < bmmse {:.2e} ({z2:.1} se)",
            p.snr_db,
            mean_and_se(fbm).0,
            mean_and_se(bdet).0,
            mean_and_se(bmmse).0
        ));
    }
    Run { verdict: Verdict::new(ok, parts.join("; ")), csv: Some(csv_bytes(&result)), borrowed_seconds: 0.0 }
}

fn c10() -> Run {
    let snr = 10.0;
    let methods = ["bmmse", "bwzf", "ga-ml", "fbm-cenet"];
    let mut result = SweepResult::default();
    let mut by_bits: Vec<PointSamples> = Vec::new();
    for bits in 1..=3 {
        let cfg = ce_system(bits, snr);
        let mut models = ModelStore::new();
        models.insert("fbm-cenet", snr, train_ce(&cfg, false));
        let sweep = NmseSweep {
            system: cfg,
            snrs_db: vec![snr],
            trials: CE_TRIALS,
            methods: vec![
                EstimationMethod::Bmmse,
                EstimationMethod::Bwzf,
                EstimationMethod::GradientAscent { iterations: CE_LAYERS },
                EstimationMethod::FbmCenet("fbm-cenet".into()),
            ],
        };
        let (r, mut s) = run_nmse_sweep_samples(&sweep, &models).expect("sweep");
        for mut row in r.rows {
            row.metric = format!("nmse-b{bits}");
            result.rows.push(row);
        }
        by_bits.push(s.remove(0));
    }
    let mut ok = true;
    let mut parts = Vec::new();
    for (j, m) in methods.iter().enumerate() {
        let stats: Vec<(f64, f64)> = by_bits.iter().map(|p| mean_and_se(&p.per_method[j])).collect();
        let mut holds = true;
        for w in stats.windows(2) {
            let (lo_bits, hi_bits) = (w[0], w[1]);
            let combined = (lo_bits.1.powi(2) + hi_bits.1.powi(2)).sqrt();
            holds &= hi_bits.0 <= lo_bits.0 + 2.0 * combined;
        }
        ok &= holds;
        parts.push(format!("{m} {:.4}/{:.4}/{:.4}", stats[0].0, stats[1].0, stats[2].0));
    }
    Run { verdict: Verdict::new(ok, format!("NMSE at b=1/2/3: {}", parts.join(", "))), csv: Some(csv_bytes(&result)), borrowed_seconds: 0.0 }
}

fn report(n: usize, budget: f64, seconds: f64, v: &Verdict) -> bool {
    let in_time = seconds < budget;
    let passed = v.passed && in_time;
    let status = if passed { "PASS" } else { "FAIL" };
    let time = if in_time { String::new() } else { " over budget".into() };
    println!("criterion {n:>2}: {status}  {} [{seconds:.1}s of {budget:.0}s{time}]", v.detail);
    passed
}

/// Runs criteria 5 to 10 from the selection and returns their CSVs.
fn stochastic(selected: &dyn Fn(usize) -> bool, results: &mut Vec<bool>, print: bool) -> Vec<(usize, Vec<u8>)> {
    let mut csvs = Vec::new();
    let mut record = |n: usize, budget: f64, start: Instant, run: Run, results: &mut Vec<bool>| {
        let seconds = start.elapsed().as_secs_f64() + run.borrowed_seconds;
        if print {
            results.push(report(n, budget, seconds, &run.verdict));
        }
        if let Some(c) = run.csv {
            csvs.push((n, c));
        }
    };
    if selected(5) {
        let t = Instant::now();
        let run = c5();
        record(5, 30.0, t, run, results);
    }
    if selected(6) {
        let t = Instant::now();
        let run = c6();
        record(6, 300.0, t, run, results);
    }
    if selected(7) || selected(8) {
        let mut fixed = ModelStore::new();
        let t = Instant::now();
        let run = c7(&mut fixed);
        let fixed_seconds = t.elapsed().as_secs_f64();
        if selected(7) {
            record(7, 900.0, t, run, results);
        }
        if selected(8) {
            let t = Instant::now();
            let run = c8(&fixed, fixed_seconds);
            record(8, 1800.0, t, run, results);
        }
    }
    if selected(9) {
        let t = Instant::now();
        let run = c9();
        record(9, 1200.0, t, run, results);
    }
    if selected(10) {
        let t = Instant::now();
        let run = c10();
        record(10, 1200.0, t, run, results);
    }
    csvs
}

fn main() -> ExitCode {
    let picks: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let selected = |n: usize| picks.is_empty() || picks.contains(&n);
    let mut results = Vec::new();
    let timed = |n: usize, budget: f64, f: fn() -> Verdict, results: &mut Vec<bool>| {
        if selected(n) {
            let t = Instant::now();
            let v = f();
            results.push(report(n, budget, t.elapsed().as_secs_f64(), &v));
        }
    };
    timed(1, 1.0, c1, &mut results);
    timed(2, 10.0, c2, &mut results);
    timed(3, 30.0, c3, &mut results);
    timed(4, 5.0, c4, &mut results);
    let first = stochastic(&selected, &mut results, true);
    if selected(11) {
        let t = Instant::now();
        let second = stochastic(&|n| (5..=10).contains(&n) && selected(n) && !first.is_empty(), &mut results, false);
        let same = !first.is_empty() && first == second;
        let which: Vec<String> = first.iter().map(|(n, _)| n.to_string()).collect();
        let v = Verdict::new(same, format!("rerun CSVs of criteria {} byte-identical: {same}", which.join(", ")));
        println!(
            "criterion 11: {}  {} [{:.1}s]",
            if same { "PASS" } else { "FAIL" },
            v.detail,
            t.elapsed().as_secs_f64()
        );
        results.push(same);
    }
    let passed = results.iter().filter(|&&p| p).count();
    println!("{passed}/{} criteria passed", results.len());
    if passed == results.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
