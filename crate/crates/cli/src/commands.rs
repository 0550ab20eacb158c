use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use fewbit::checkpoint::{Checkpoint, NetKind, NetParams};
use fewbit::harness::{
    export_csv, run_ber_sweep, run_nmse_sweep, BerSweep, Csi, DetectionMethod, DetectionModels, EstimationMethod, ModelStore,
    NmseSweep,
};
use fewbit::networks::{CeNetParams, DetNetParams};
use fewbit::pilot::build_dft_pilot;
use fewbit::training::{train_cenet, train_detnet, write_loss_csv};
use fewbit::verify::{format_report, run_checks};

use crate::config::{RunConfig, RunManifest};

#[derive(Debug, Parser)]
#[command(name = "fewbit", version, about = "Channel estimation and detection with few-bit ADCs")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train one network and write its checkpoint, loss trace and manifest.
    Train(TrainArgs),
    /// Monte-Carlo NMSE or BER sweep over SNR.
    Sweep(SweepArgs),
    /// Run the built-in self-checks.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides `net.kind`.
    #[arg(long)]
    net: Option<String>,
    /// Overrides `train.epochs`.
    #[arg(long)]
    epochs: Option<usize>,
    /// Output directory; defaults to the directory of the config file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Metric {
    Nmse,
    Ber,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CsiArg {
    Perfect,
    Estimated,
}

#[derive(Debug, Args)]
struct SweepArgs {
    metric: Metric,
    #[arg(long)]
    config: PathBuf,
    /// Comma-separated SNR grid in dB; defaults to `system.snr_db`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    snrs: Vec<f64>,
    /// Comma-separated methods. Learned methods refer to checkpoint labels.
    #[arg(long, value_delimiter = ',')]
    methods: Vec<String>,
    /// Trained parameters as `path` or `label=path`; the label defaults to
    /// the network kind. Repeat for several checkpoints.
    #[arg(long = "checkpoint")]
    checkpoints: Vec<String>,
    /// Channel realizations per NMSE point.
    #[arg(long, default_value_t = 10_000)]
    trials: usize,
    /// Channel blocks per BER point.
    #[arg(long, default_value_t = 1000)]
    channels: usize,
    /// Symbol vectors per channel block.
    #[arg(long, default_value_t = 100)]
    vectors: usize,
    #[arg(long, value_enum, default_value = "perfect")]
    csi: CsiArg,
    /// Iterations of untrained gradient ascent; defaults to `net.layers`, else 8.
    #[arg(long)]
    ga_iterations: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    /// Only run checks whose name contains this text.
    #[arg(long)]
    only: Option<String>,
    /// Multiplies every tolerance.
    #[arg(long, default_value_t = 1.0)]
    tolerance_scale: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

pub fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Train(a) => train(a),
        Command::Sweep(a) => sweep(a),
        Command::Verify(a) => verify(a),
    }
}

fn sibling(dir: &Path, stem: &str, suffix: &str) -> PathBuf {
    dir.join(format!("{stem}{suffix}"))
}

fn train(args: TrainArgs) -> Result<ExitCode> {
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(n) = &args.net {
        cfg.net_kind = Some(NetKind::parse(n)?);
    }
    if let Some(e) = args.epochs {
        cfg.train.epochs = e;
    }
    let kind = cfg.net_kind.ok_or_else(|| anyhow!("missing key `net.kind` (or pass --net)"))?;
    let layers = cfg.layers_or_err()?;
    let stem = args.config.file_stem().and_then(|s| s.to_str()).unwrap_or("run").to_owned();
    let dir = match args.out {
        Some(d) => d,
        None => args.config.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;

    let system = &cfg.system;
    let (checkpoint, trace) = match kind.detnet() {
        None => {
            let init = CeNetParams::initial(system, layers, build_dft_pilot(system)?, cfg.train.trainable_pilot);
            let (p, trace) = train_cenet(system, &cfg.train, init)?;
            (Checkpoint::cenet(system.clone(), p), trace)
        }
        Some(which) => {
            let (p, trace) = train_detnet(system, &cfg.train, DetNetParams::initial(system, layers), which)?;
            (Checkpoint::detnet(which, system.clone(), p), trace)
        }
    };
    let ckpt = sibling(&dir, &stem, ".ckpt");
    let loss = sibling(&dir, &stem, "_loss.csv");
    checkpoint.save(&ckpt)?;
    let file = std::fs::File::create(&loss).with_context(|| format!("writing {}", loss.display()))?;
    write_loss_csv(&trace, std::io::BufWriter::new(file))?;
    let manifest = RunManifest {
        command: "train".into(),
        config: args.config.display().to_string(),
        output_dir: dir.display().to_string(),
        seed: cfg.seed,
        checkpoints: vec![ckpt.display().to_string()],
        outputs: vec![loss.display().to_string()],
    };
    manifest.write(&cfg, &sibling(&dir, &stem, "_manifest.toml"))?;
    if let Some(last) = trace.last() {
        println!("{}: {} epochs, final loss {:e}", kind.name(), trace.len(), last.loss);
    }
    println!("wrote {}", ckpt.display());
    Ok(ExitCode::SUCCESS)
}

struct Loaded {
    kinds: BTreeMap<String, NetKind>,
    cenets: ModelStore<CeNetParams>,
    detnets: ModelStore<DetNetParams>,
}

fn load_checkpoints(specs: &[String], cfg: &RunConfig) -> Result<Loaded> {
    let mut out = Loaded { kinds: BTreeMap::new(), cenets: ModelStore::new(), detnets: ModelStore::new() };
    for spec in specs {
        let (label, path) = match spec.split_once('=') {
            Some((l, p)) => (Some(l.to_owned()), PathBuf::from(p)),
            None => (None, PathBuf::from(spec)),
        };
        let ck = Checkpoint::load(&path).with_context(|| format!("loading checkpoint {}", path.display()))?;
        let (a, b) = (&ck.system, &cfg.system);
        if (a.antennas, a.users, a.pilot_len, a.bits, a.constellation) != (b.antennas, b.users, b.pilot_len, b.bits, b.constellation) {
            bail!("checkpoint {} was trained for a different system", path.display());
        }
        let label = label.unwrap_or_else(|| ck.kind.name().to_owned());
        if let Some(prev) = out.kinds.insert(label.clone(), ck.kind) {
            if prev != ck.kind {
                bail!("label `{label}` used for both {} and {}", prev.name(), ck.kind.name());
            }
        }
        let snr = a.snr_db();
        match ck.params {
            NetParams::CeNet(p) => out.cenets.insert(&label, snr, p),
            NetParams::DetNet(p) => out.detnets.insert(&label, snr, p),
        }
    }
    Ok(out)
}

fn sweep(args: SweepArgs) -> Result<ExitCode> {
    let cfg = RunConfig::load(&args.config)?;
    let snrs = if args.snrs.is_empty() { vec![cfg.snr_db] } else { args.snrs.clone() };
    let loaded = load_checkpoints(&args.checkpoints, &cfg)?;
    let missing = |label: &str| anyhow!("missing checkpoint for method `{label}`");
    let result = match args.metric {
        Metric::Nmse => {
            let names = if args.methods.is_empty() { vec!["bmmse".into(), "bwzf".into(), "ga-ml".into()] } else { args.methods.clone() };
            let iterations = args.ga_iterations.or(cfg.layers).unwrap_or(8);
            let methods = names
                .iter()
                .map(|m| match m.as_str() {
                    "bmmse" => Ok(EstimationMethod::Bmmse),
                    "bwzf" => Ok(EstimationMethod::Bwzf),
                    "ga-ml" => Ok(EstimationMethod::GradientAscent { iterations }),
                    label => match loaded.kinds.get(label) {
                        Some(NetKind::FbmCenet) => Ok(EstimationMethod::FbmCenet(label.into())),
                        Some(k) => bail!("checkpoint `{label}` is a {}, not a channel estimator", k.name()),
                        None => Err(missing(label)),
                    },
                })
                .collect::<Result<Vec<_>>>()?;
            let sweep = NmseSweep { system: cfg.system.clone(), snrs_db: snrs, trials: args.trials, methods };
            run_nmse_sweep(&sweep, &loaded.cenets)?
        }
        Metric::Ber => {
            let names = if args.methods.is_empty() { vec!["bmmse".into()] } else { args.methods.clone() };
            let methods = names
                .iter()
                .map(|m| match m.as_str() {
                    "bmmse" => Ok(DetectionMethod::BmmseLinear),
                    "exhaustive-ml" => Ok(DetectionMethod::ExhaustiveMl),
                    label => match loaded.kinds.get(label) {
                        Some(NetKind::BDetNet) => Ok(DetectionMethod::BDetNet(label.into())),
                        Some(NetKind::FbmDetNet) => Ok(DetectionMethod::FbmDetNet(label.into())),
                        Some(k) => bail!("checkpoint `{label}` is a {}, not a detector", k.name()),
                        None => Err(missing(label)),
                    },
                })
                .collect::<Result<Vec<_>>>()?;
            let csi = match args.csi {
                CsiArg::Perfect => Csi::Perfect,
                CsiArg::Estimated => {
                    let label = loaded
                        .kinds
                        .iter()
                        .find(|(_, k)| **k == NetKind::FbmCenet)
                        .map(|(l, _)| l.clone())
                        .ok_or_else(|| anyhow!("--csi estimated needs an fbm-cenet checkpoint"))?;
                    Csi::Estimated(label)
                }
            };
            let sweep = BerSweep {
                system: cfg.system.clone(),
                snrs_db: snrs,
                channels: args.channels,
                vectors_per_channel: args.vectors,
                methods,
                csi,
            };
            let models = DetectionModels { detnets: loaded.detnets, cenets: loaded.cenets };
            run_ber_sweep(&sweep, &models)?
        }
    };
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    export_csv(&result, &args.out)?;
    let dir = args.out.parent().map(Path::to_path_buf).unwrap_or_default();
    let stem = args.out.file_stem().and_then(|s| s.to_str()).unwrap_or("sweep");
    let manifest = RunManifest {
        command: format!("sweep {}", if args.metric == Metric::Nmse { "nmse" } else { "ber" }),
        config: args.config.display().to_string(),
        output_dir: dir.display().to_string(),
        seed: cfg.seed,
        checkpoints: args.checkpoints.clone(),
        outputs: vec![args.out.display().to_string()],
    };
    manifest.write(&cfg, &sibling(&dir, stem, "_manifest.toml"))?;
    for r in &result.rows {
        println!("{:>7} {:<14} {} {:.4e} ± {:.1e}", r.snr_db, r.method, r.metric, r.value, r.std_error);
    }
    Ok(ExitCode::SUCCESS)
}

fn verify(args: VerifyArgs) -> Result<ExitCode> {
    if !(args.tolerance_scale > 0.0) {
        bail!("--tolerance-scale must be positive");
    }
    let outcomes = run_checks(args.only.as_deref(), args.tolerance_scale, args.seed);
    if outcomes.is_empty() {
        bail!("no check matches `{}`", args.only.unwrap_or_default());
    }
    print!("{}", format_report(&outcomes, args.tolerance_scale));
    Ok(if outcomes.iter().all(|o| o.passed) { ExitCode::SUCCESS } else { ExitCode::from(3) })
}
