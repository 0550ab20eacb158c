//! Random channels, noise and symbols, plus the Gray bit mapping.
//!
//! Every random draw goes through an explicit [`ChaCha8Rng`]. Independent
//! streams are addressed by `(seed, domain, index)` so parallel trials stay
//! reproducible regardless of scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::linalg::{CMatrix, RVector, C64};
use crate::system::{Constellation, SystemConfig};

/// Stream domains, so that e.g. training and evaluation never share draws.
pub mod domain {
    pub const TRAIN_CENET: u64 = 1;
    pub const TRAIN_DETNET: u64 = 2;
    pub const EVAL_NMSE: u64 = 3;
    pub const EVAL_BER: u64 = 4;
    pub const VERIFY: u64 = 5;
    pub const EVAL_HOLDOUT: u64 = 6;
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent generator for stream `index` of `domain` under `seed`.
pub fn stream_rng(seed: u64, domain: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix(seed ^ splitmix(domain)));
    rng.set_stream(index);
    rng
}

/// `N x K` matrix with i.i.d. CN(0, 1) entries.
pub fn sample_channel<R: Rng + ?Sized>(cfg: &SystemConfig, rng: &mut R) -> CMatrix {
    complex_gaussian(cfg.antennas, cfg.users, 1.0, rng)
}

/// `rows x cols` matrix with i.i.d. CN(0, variance) entries.
pub fn complex_gaussian<R: Rng + ?Sized>(rows: usize, cols: usize, variance: f64, rng: &mut R) -> CMatrix {
    let s = (variance / 2.0).sqrt();
    let mut m = CMatrix::zeros(rows, cols);
    // column-major fill keeps the draw order independent of nalgebra internals
    for j in 0..cols {
        for i in 0..rows {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            m[(i, j)] = C64::new(s * re, s * im);
        }
    }
    m
}

/// Real-domain noise vector, each entry N(0, n0 / 2).
pub fn sample_noise<R: Rng + ?Sized>(len: usize, n0: f64, rng: &mut R) -> RVector {
    let s = (n0 / 2.0).sqrt();
    RVector::from_fn(len, |_, _| s * rng.sample::<f64, _>(StandardNormal))
}

/// Draws `count` symbol vectors (columns of a `K x count` matrix) and the
/// Gray-coded bits they carry, symbol by symbol in column-major order.
pub fn sample_symbols<R: Rng + ?Sized>(cfg: &SystemConfig, count: usize, rng: &mut R) -> (CMatrix, Vec<u8>) {
    let c = cfg.constellation;
    let bps = c.bits_per_symbol();
    let mut bits = Vec::with_capacity(cfg.users * count * bps);
    let mut symbols = CMatrix::zeros(cfg.users, count);
    for s in 0..count {
        for k in 0..cfg.users {
            let start = bits.len();
            for _ in 0..bps {
                bits.push(rng.random_range(0..2u8));
            }
            symbols[(k, s)] = modulate(c, &bits[start..]);
        }
    }
    (symbols, bits)
}

fn gray(i: usize) -> usize {
    i ^ (i >> 1)
}

fn gray_inverse(mut g: usize) -> usize {
    let mut i = g;
    while g > 1 {
        g >>= 1;
        i ^= g;
    }
    i
}

fn bits_to_index(bits: &[u8]) -> usize {
    bits.iter().fold(0usize, |acc, &b| (acc << 1) | b as usize)
}

/// Level of one real dimension for a Gray-coded bit group (MSB first).
pub fn modulate_dim(c: Constellation, bits: &[u8]) -> f64 {
    c.levels()[gray_inverse(bits_to_index(bits))]
}

/// Gray bits (MSB first) of the level with index `level`.
pub fn level_bits(c: Constellation, level: usize, out: &mut Vec<u8>) {
    let m = c.bits_per_dim();
    let g = gray(level);
    for b in (0..m).rev() {
        out.push(((g >> b) & 1) as u8);
    }
}

/// Complex symbol for `bits_per_symbol` bits: real-part group then imaginary.
pub fn modulate(c: Constellation, bits: &[u8]) -> C64 {
    let m = c.bits_per_dim();
    C64::new(modulate_dim(c, &bits[..m]), modulate_dim(c, &bits[m..2 * m]))
}
