//! Versioned text checkpoints.
//!
//! One `key = value` pair per line after the header. Arrays use indexed
//! keys (`alpha[0]`, `pilot_re[k][t]`); floats are written in shortest
//! round-trip scientific form so a reload is exact.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::{CMatrix, C64};
use crate::networks::{CeNetParams, DetNetParams};
use crate::pilot::PilotSet;
use crate::system::{Constellation, SystemConfig};
use crate::training::DetNetKind;

pub const HEADER: &str = "fewbit-checkpoint v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NetKind {
    FbmCenet,
    BDetNet,
    FbmDetNet,
}

impl NetKind {
    pub fn name(self) -> &'static str {
        match self {
            NetKind::FbmCenet => "fbm-cenet",
            NetKind::BDetNet => DetNetKind::Bussgang.name(),
            NetKind::FbmDetNet => DetNetKind::Fbm.name(),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "fbm-cenet" => Ok(NetKind::FbmCenet),
            "b-detnet" => Ok(NetKind::BDetNet),
            "fbm-detnet" => Ok(NetKind::FbmDetNet),
            other => Err(Error::Config(format!("unknown network kind `{other}`"))),
        }
    }

    pub fn detnet(self) -> Option<DetNetKind> {
        match self {
            NetKind::FbmCenet => None,
            NetKind::BDetNet => Some(DetNetKind::Bussgang),
            NetKind::FbmDetNet => Some(DetNetKind::Fbm),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NetParams {
    CeNet(CeNetParams),
    DetNet(DetNetParams),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: NetKind,
    pub system: SystemConfig,
    pub params: NetParams,
}

impl Checkpoint {
    pub fn cenet(system: SystemConfig, params: CeNetParams) -> Self {
        Self { kind: NetKind::FbmCenet, system, params: NetParams::CeNet(params) }
    }

    pub fn detnet(kind: DetNetKind, system: SystemConfig, params: DetNetParams) -> Self {
        let kind = match kind {
            DetNetKind::Bussgang => NetKind::BDetNet,
            DetNetKind::Fbm => NetKind::FbmDetNet,
        };
        Self { kind, system, params: NetParams::DetNet(params) }
    }

    pub fn to_text(&self) -> String {
        let s = &self.system;
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("kind", self.kind.name().into());
        kv("antennas", s.antennas.to_string());
        kv("users", s.users.to_string());
        kv("pilot_len", s.pilot_len.to_string());
        kv("bits", s.bits.to_string());
        kv("snr_db", format!("{:e}", s.snr_db()));
        kv("constellation", s.constellation.name().into());
        kv("seed", s.seed.to_string());
        match &self.params {
            NetParams::CeNet(p) => {
                kv("layers", p.layers().to_string());
                kv("trainable_pilot", p.trainable_pilot.to_string());
                for (l, a) in p.alpha.iter().enumerate() {
                    kv(&format!("alpha[{l}]"), format!("{a:e}"));
                }
                kv("beta", format!("{:e}", p.beta));
                for k in 0..p.pilot.users() {
                    for t in 0..p.pilot.len() {
                        let z = p.pilot.pilot[(k, t)];
                        kv(&format!("pilot_re[{k}][{t}]"), format!("{:e}", z.re));
                        kv(&format!("pilot_im[{k}][{t}]"), format!("{:e}", z.im));
                    }
                }
            }
            NetParams::DetNet(p) => {
                kv("layers", p.layers().to_string());
                for (l, a) in p.alpha.iter().enumerate() {
                    kv(&format!("alpha[{l}]"), format!("{a:e}"));
                }
                kv("beta", format!("{:e}", p.beta));
                for (l, t) in p.t.iter().enumerate() {
                    kv(&format!("t[{l}]"), format!("{t:e}"));
                }
            }
        }
        format!("{HEADER}\n{out}")
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == HEADER => {}
            Some((_, h)) => return Err(err(1, format!("expected header `{HEADER}`, found `{}`", h.trim()))),
            None => return Err(err(1, "empty checkpoint".into())),
        }
        let mut map: BTreeMap<String, (usize, String)> = BTreeMap::new();
        for (i, raw) in lines {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(err(i + 1, format!("expected `key = value`, found `{line}`")));
            };
            let key = k.trim().to_owned();
            if map.insert(key.clone(), (i + 1, v.trim().to_owned())).is_some() {
                return Err(err(i + 1, format!("duplicate key `{key}`")));
            }
        }
        let mut fields = Fields { map, last_line: text.lines().count() };
        let (kind_line, system_line, t_line) = (fields.line("kind"), fields.line("antennas"), fields.line("t[0]"));
        let kind = NetKind::parse(&fields.string("kind")?).map_err(|e| err(kind_line, e.to_string()))?;
        let line = fields.line("constellation");
        let constellation = Constellation::parse(&fields.string("constellation")?).map_err(|e| err(line, e.to_string()))?;
        let system = SystemConfig::new(
            fields.num("antennas")?,
            fields.num("users")?,
            fields.num("pilot_len")?,
            fields.num("bits")?,
            fields.num("snr_db")?,
            constellation,
            fields.num("seed")?,
        )
        .map_err(|e| err(system_line, e.to_string()))?;
        let layers: usize = fields.num("layers")?;
        let alpha = (0..layers).map(|l| fields.num(&format!("alpha[{l}]"))).collect::<Result<Vec<f64>>>()?;
        let beta = fields.num("beta")?;
        let params = match kind {
            NetKind::FbmCenet => {
                let trainable_pilot = fields.num("trainable_pilot")?;
                let mut pilot = CMatrix::zeros(system.users, system.pilot_len);
                for k in 0..system.users {
                    for t in 0..system.pilot_len {
                        pilot[(k, t)] =
                            C64::new(fields.num(&format!("pilot_re[{k}][{t}]"))?, fields.num(&format!("pilot_im[{k}][{t}]"))?);
                    }
                }
                NetParams::CeNet(CeNetParams {
                    alpha,
                    beta,
                    pilot: PilotSet { pilot, antennas: system.antennas },
                    trainable_pilot,
                })
            }
            NetKind::BDetNet | NetKind::FbmDetNet => {
                let t = (0..layers).map(|l| fields.num(&format!("t[{l}]"))).collect::<Result<Vec<f64>>>()?;
                let p = DetNetParams { alpha, t, beta };
                p.validate().map_err(|e| err(t_line, e.to_string()))?;
                NetParams::DetNet(p)
            }
        };
        if let Some((key, (line, _))) = fields.map.iter().next() {
            return Err(err(*line, format!("unexpected key `{key}`")));
        }
        Ok(Self { kind, system, params })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

fn err(line: usize, message: String) -> Error {
    Error::Checkpoint { line, message }
}

struct Fields {
    map: BTreeMap<String, (usize, String)>,
    last_line: usize,
}

impl Fields {
    fn line(&self, key: &str) -> usize {
        self.map.get(key).map_or(self.last_line, |(l, _)| *l)
    }

    fn string(&mut self, key: &str) -> Result<String> {
        self.map
            .remove(key)
            .map(|(_, v)| v)
            .ok_or_else(|| err(self.last_line, format!("missing key `{key}`")))
    }

    fn num<T: std::str::FromStr>(&mut self, key: &str) -> Result<T> {
        let (line, value) = self.map.remove(key).ok_or_else(|| err(self.last_line, format!("missing key `{key}`")))?;
        value.parse().map_err(|_| err(line, format!("cannot parse `{value}` for `{key}`")))
    }
}
