//! System dimensions and signalling parameters.

use crate::error::{Error, Result};

/// Symbol alphabet used by every user.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Constellation {
    Qpsk,
    Qam16,
}

impl Constellation {
    /// Amplitude levels of one real dimension, ascending, normalized so that
    /// the complex symbol has unit average power.
    pub fn levels(self) -> &'static [f64] {
        const QPSK: [f64; 2] = [-std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2];
        // 1/sqrt(10) and 3/sqrt(10)
        const QAM16: [f64; 4] = [
            -0.948_683_298_050_513_8,
            -0.316_227_766_016_837_94,
            0.316_227_766_016_837_94,
            0.948_683_298_050_513_8,
        ];
        match self {
            Constellation::Qpsk => &QPSK,
            Constellation::Qam16 => &QAM16,
        }
    }

    /// Bits carried by one real dimension.
    pub fn bits_per_dim(self) -> usize {
        match self {
            Constellation::Qpsk => 1,
            Constellation::Qam16 => 2,
        }
    }

    pub fn bits_per_symbol(self) -> usize {
        2 * self.bits_per_dim()
    }

    /// Number of complex constellation points.
    pub fn order(self) -> usize {
        1 << self.bits_per_symbol()
    }

    pub fn name(self) -> &'static str {
        match self {
            Constellation::Qpsk => "qpsk",
            Constellation::Qam16 => "qam16",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "qpsk" => Ok(Constellation::Qpsk),
            "qam16" | "16qam" => Ok(Constellation::Qam16),
            other => Err(Error::Config(format!("unknown constellation `{other}`"))),
        }
    }
}

/// Dimensions, resolution and SNR of one uplink scenario.
///
/// Only the linear SNR is stored; the noise power is always derived from it,
/// so `rho() * n0() == 1` holds by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    /// Receive antennas.
    pub antennas: usize,
    /// Single-antenna users.
    pub users: usize,
    /// Pilot length in symbols.
    pub pilot_len: usize,
    /// ADC resolution per real dimension.
    pub bits: u32,
    rho: f64,
    pub constellation: Constellation,
    pub seed: u64,
}

impl SystemConfig {
    pub fn new(
        antennas: usize,
        users: usize,
        pilot_len: usize,
        bits: u32,
        snr_db: f64,
        constellation: Constellation,
        seed: u64,
    ) -> Result<Self> {
        if users == 0 || antennas == 0 {
            return Err(Error::Config("antenna and user counts must be at least 1".into()));
        }
        if antennas < users {
            return Err(Error::Config(format!(
                "need N >= K, got N={antennas}, K={users}"
            )));
        }
        if pilot_len < users {
            return Err(Error::Config(format!(
                "pilot length {pilot_len} shorter than user count {users}"
            )));
        }
        if !(1..=4).contains(&bits) {
            return Err(Error::UnsupportedBits(bits));
        }
        if !snr_db.is_finite() {
            return Err(Error::Config(format!("SNR must be finite, got {snr_db}")));
        }
        Ok(Self {
            antennas,
            users,
            pilot_len,
            bits,
            rho: db_to_linear(snr_db),
            constellation,
            seed,
        })
    }

    /// Scenario with the default pilot length of five symbols per user.
    pub fn with_default_pilot(
        antennas: usize,
        users: usize,
        bits: u32,
        snr_db: f64,
        constellation: Constellation,
        seed: u64,
    ) -> Result<Self> {
        Self::new(antennas, users, 5 * users, bits, snr_db, constellation, seed)
    }

    /// Linear SNR.
    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// Noise power per complex entry.
    pub fn n0(&self) -> f64 {
        1.0 / self.rho
    }

    pub fn snr_db(&self) -> f64 {
        10.0 * self.rho.log10()
    }

    pub fn with_snr_db(&self, snr_db: f64) -> Self {
        Self { rho: db_to_linear(snr_db), ..self.clone() }
    }

    pub fn with_bits(&self, bits: u32) -> Result<Self> {
        if !(1..=4).contains(&bits) {
            return Err(Error::UnsupportedBits(bits));
        }
        Ok(Self { bits, ..self.clone() })
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    /// Variance of one real dimension of the unquantized received signal
    /// when every user transmits at unit power.
    pub fn received_real_variance(&self) -> f64 {
        (self.users as f64 + self.n0()) / 2.0
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}
