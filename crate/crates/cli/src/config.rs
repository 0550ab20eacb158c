//! TOML run configuration.
//!
//! Every value is read with its source span so that invalid values can be
//! reported against the line they came from. Missing keys are reported by
//! their dotted path, such as `system.N`.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use fewbit::checkpoint::NetKind;
use fewbit::system::{Constellation, SystemConfig};
use fewbit::training::TrainConfig;
use serde::{Deserialize, Serialize};
use toml::Spanned;

type Field<T> = Option<Spanned<T>>;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    seed: Field<u64>,
    system: Option<RawSystem>,
    train: Option<RawTrain>,
    net: Option<RawNet>,
    // written by manifests, ignored on input
    #[allow(dead_code)]
    run: Option<toml::Table>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSystem {
    #[serde(rename = "N")]
    antennas: Field<usize>,
    #[serde(rename = "K")]
    users: Field<usize>,
    #[serde(rename = "Tt")]
    pilot_len: Field<usize>,
    bits: Field<u32>,
    snr_db: Field<f64>,
    constellation: Field<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTrain {
    epochs: Field<usize>,
    batch: Field<usize>,
    lr0: Field<f64>,
    decay: Field<f64>,
    decay_every: Field<usize>,
    c1: Field<f64>,
    c2: Field<f64>,
    trainable_pilot: Field<bool>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNet {
    kind: Field<String>,
    layers: Field<usize>,
}

/// A fully resolved configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub system: SystemConfig,
    /// SNR exactly as written, kept so that manifests echo it verbatim.
    pub snr_db: f64,
    pub train: TrainConfig,
    pub net_kind: Option<NetKind>,
    pub layers: Option<usize>,
    pub seed: u64,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

fn required<T: Clone>(field: &Field<T>, key: &str) -> Result<T> {
    field.as_ref().map(|s| s.get_ref().clone()).ok_or_else(|| anyhow!("missing key `{key}`"))
}

fn optional<T: Clone>(field: &Field<T>, default: T) -> T {
    field.as_ref().map_or(default, |s| s.get_ref().clone())
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| line_of(text, s.start));
            match line {
                Some(l) => anyhow!("line {l}: {}", e.message()),
                None => anyhow!("{}", e.message()),
            }
        })?;
        let at = |span: std::ops::Range<usize>, msg: String| anyhow!("line {}: {msg}", line_of(text, span.start));

        let seed = required(&raw.seed, "seed")?;
        let sys = raw.system.ok_or_else(|| anyhow!("missing section `[system]`"))?;
        let constellation_field = sys.constellation.as_ref().ok_or_else(|| anyhow!("missing key `system.constellation`"))?;
        let constellation =
            Constellation::parse(constellation_field.get_ref()).map_err(|e| at(constellation_field.span(), e.to_string()))?;
        let snr_db = required(&sys.snr_db, "system.snr_db")?;
        let span = sys.antennas.as_ref().map_or(0..0, |s| s.span());
        let system = SystemConfig::new(
            required(&sys.antennas, "system.N")?,
            required(&sys.users, "system.K")?,
            required(&sys.pilot_len, "system.Tt")?,
            required(&sys.bits, "system.bits")?,
            snr_db,
            constellation,
            seed,
        )
        .map_err(|e| at(span, format!("[system] {e}")))?;

        let defaults = TrainConfig::default();
        let train = match &raw.train {
            None => defaults,
            Some(t) => TrainConfig {
                epochs: optional(&t.epochs, defaults.epochs),
                batch: optional(&t.batch, defaults.batch),
                lr0: optional(&t.lr0, defaults.lr0),
                decay: optional(&t.decay, defaults.decay),
                decay_every: optional(&t.decay_every, defaults.decay_every),
                c1: optional(&t.c1, defaults.c1),
                c2: optional(&t.c2, defaults.c2),
                trainable_pilot: optional(&t.trainable_pilot, defaults.trainable_pilot),
            },
        };
        if let Some(t) = &raw.train {
            let checks: [(&str, Option<std::ops::Range<usize>>, bool); 6] = [
                ("train.lr0 must be positive", t.lr0.as_ref().map(|s| s.span()), train.lr0 > 0.0),
                ("train.decay must lie in (0, 1]", t.decay.as_ref().map(|s| s.span()), train.decay > 0.0 && train.decay <= 1.0),
                ("train.batch must be at least 1", t.batch.as_ref().map(|s| s.span()), train.batch >= 1),
                ("train.decay_every must be at least 1", t.decay_every.as_ref().map(|s| s.span()), train.decay_every >= 1),
                ("train.c1 must be positive", t.c1.as_ref().map(|s| s.span()), train.c1 > 0.0),
                ("train.c2 must be positive", t.c2.as_ref().map(|s| s.span()), train.c2 > 0.0),
            ];
            for (msg, span, ok) in checks {
                if let (false, Some(span)) = (ok, span) {
                    return Err(at(span, msg.into()));
                }
            }
        }
        train.validate().map_err(|e| anyhow!("[train] {e}"))?;

        let (net_kind, layers) = match &raw.net {
            None => (None, None),
            Some(n) => {
                let kind = match &n.kind {
                    Some(k) => Some(NetKind::parse(k.get_ref()).map_err(|e| at(k.span(), e.to_string()))?),
                    None => None,
                };
                if let Some(l) = &n.layers {
                    if *l.get_ref() == 0 {
                        return Err(at(l.span(), "net.layers must be at least 1".into()));
                    }
                }
                (kind, n.layers.as_ref().map(|l| *l.get_ref()))
            }
        };
        Ok(Self { system, snr_db, train, net_kind, layers, seed })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("invalid config {}", path.display()))
    }

    pub fn layers_or_err(&self) -> Result<usize> {
        match self.layers {
            Some(l) => Ok(l),
            None => bail!("missing key `net.layers`"),
        }
    }
}

#[derive(Debug, Serialize)]
struct SystemOut {
    #[serde(rename = "N")]
    antennas: usize,
    #[serde(rename = "K")]
    users: usize,
    #[serde(rename = "Tt")]
    pilot_len: usize,
    bits: u32,
    snr_db: f64,
    constellation: &'static str,
}

#[derive(Debug, Serialize)]
struct TrainOut {
    epochs: usize,
    batch: usize,
    lr0: f64,
    decay: f64,
    decay_every: usize,
    c1: f64,
    c2: f64,
    trainable_pilot: bool,
}

#[derive(Debug, Serialize)]
struct NetOut {
    #[serde(skip_serializing_if = "Option::is_none")]
    kind: Option<&'static str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    layers: Option<usize>,
}

/// Record of one invocation: what ran, where it wrote, and the resolved
/// configuration, which can be fed back as a config file.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: String,
    pub output_dir: String,
    pub seed: u64,
    pub checkpoints: Vec<String>,
    pub outputs: Vec<String>,
}

#[derive(Serialize)]
struct ManifestFile<'a> {
    seed: u64,
    system: SystemOut,
    train: TrainOut,
    net: NetOut,
    run: &'a RunManifest,
}

impl RunManifest {
    pub fn to_toml(&self, cfg: &RunConfig) -> Result<String> {
        let s = &cfg.system;
        let t = &cfg.train;
        let file = ManifestFile {
            seed: cfg.seed,
            system: SystemOut {
                antennas: s.antennas,
                users: s.users,
                pilot_len: s.pilot_len,
                bits: s.bits,
                snr_db: cfg.snr_db,
                constellation: s.constellation.name(),
            },
            train: TrainOut {
                epochs: t.epochs,
                batch: t.batch,
                lr0: t.lr0,
                decay: t.decay,
                decay_every: t.decay_every,
                c1: t.c1,
                c2: t.c2,
                trainable_pilot: t.trainable_pilot,
            },
            net: NetOut { kind: cfg.net_kind.map(NetKind::name), layers: cfg.layers },
            run: self,
        };
        Ok(toml::to_string(&file)?)
    }

    pub fn write(&self, cfg: &RunConfig, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml(cfg)?).with_context(|| format!("writing manifest {}", path.display()))
    }
}
