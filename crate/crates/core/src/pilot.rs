//! Pilot matrices and the Kronecker-structured estimation design.
//!
//! With `N` antennas and a `K x T` pilot `X`, the vectorized training
//! observation is `vec(H X) = (X^T ⊗ I_N) vec(H)`. The real-domain design
//! `P` is the stacked form of that Kronecker product. [`PilotSet`] applies
//! `P` and `P^T` through the factored form so that the dense
//! `2NT x 2NK` matrix is only built on request.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::linalg::{kron, stack_matrix, CMatrix, LinearOperator, RMatrix, C64};
use crate::system::SystemConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct PilotSet {
    /// Complex `K x T` pilot, one row per user.
    pub pilot: CMatrix,
    /// Antenna count the pilot is expanded over.
    pub antennas: usize,
}

/// DFT pilot: user `k` (0-based) sends column `k + 1` of the `T x T` DFT.
pub fn build_dft_pilot(cfg: &SystemConfig) -> Result<PilotSet> {
    dft_pilot(cfg.users, cfg.pilot_len, cfg.antennas)
}

pub fn dft_pilot(users: usize, pilot_len: usize, antennas: usize) -> Result<PilotSet> {
    if users + 1 > pilot_len {
        return Err(Error::Dimension(format!(
            "DFT pilot needs T >= K + 1, got K={users}, T={pilot_len}"
        )));
    }
    let t = pilot_len as f64;
    let pilot = CMatrix::from_fn(users, pilot_len, |k, n| {
        let phase = -2.0 * PI * ((k + 1) * n % pilot_len) as f64 / t;
        C64::from_polar(1.0, phase)
    });
    Ok(PilotSet { pilot, antennas })
}

pub fn expand_pilot(pilot: &CMatrix, antennas: usize) -> PilotSet {
    PilotSet { pilot: pilot.clone(), antennas }
}

impl PilotSet {
    pub fn users(&self) -> usize {
        self.pilot.nrows()
    }

    pub fn len(&self) -> usize {
        self.pilot.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.pilot.is_empty()
    }

    /// Complex `X^T ⊗ I_N`.
    pub fn complex_design(&self) -> CMatrix {
        kron(&self.pilot.transpose(), &CMatrix::identity(self.antennas, self.antennas))
    }

    /// Dense real design `P`.
    pub fn dense_design(&self) -> RMatrix {
        stack_matrix(&self.complex_design())
    }

    /// Per-antenna real design `stack(X^T)` of shape `2T x 2K`; every antenna
    /// sees the same one.
    pub fn antenna_design(&self) -> RMatrix {
        stack_matrix(&self.pilot.transpose())
    }

    /// Mean squared magnitude of the pilot entries.
    pub fn power(&self) -> f64 {
        self.pilot.iter().map(|z| z.norm_sqr()).sum::<f64>() / self.pilot.len().max(1) as f64
    }

    /// Rescales every user's row to unit mean power.
    pub fn normalize_rows(&mut self) {
        let t = self.len() as f64;
        for mut row in self.pilot.row_iter_mut() {
            let p = row.iter().map(|z| z.norm_sqr()).sum::<f64>() / t;
            if p > 0.0 {
                let s = 1.0 / p.sqrt();
                row.iter_mut().for_each(|z| *z *= s);
            }
        }
    }

    /// Adds the pilot gradient of `u = P v` given the adjoint `u_bar`.
    ///
    /// Gradients of complex entries are stored as `dL/dRe + j dL/dIm`.
    pub fn accumulate_apply_grad(&self, v: &[f64], u_bar: &[f64], grad: &mut CMatrix) {
        let (n_ant, k_users, t_len) = (self.antennas, self.users(), self.len());
        let half_v = n_ant * k_users;
        let half_u = n_ant * t_len;
        for k in 0..k_users {
            for t in 0..t_len {
                let mut acc = C64::new(0.0, 0.0);
                for n in 0..n_ant {
                    let h = C64::new(v[n + n_ant * k], v[half_v + n + n_ant * k]);
                    let ub = C64::new(u_bar[n + n_ant * t], u_bar[half_u + n + n_ant * t]);
                    acc += h.conj() * ub;
                }
                grad[(k, t)] += acc;
            }
        }
    }

    /// Adds the pilot gradient of `w = P^T g` given the adjoint `w_bar`.
    pub fn accumulate_transpose_grad(&self, g: &[f64], w_bar: &[f64], grad: &mut CMatrix) {
        let (n_ant, k_users, t_len) = (self.antennas, self.users(), self.len());
        let half_w = n_ant * k_users;
        let half_g = n_ant * t_len;
        for k in 0..k_users {
            for t in 0..t_len {
                let mut acc = C64::new(0.0, 0.0);
                for n in 0..n_ant {
                    let wb = C64::new(w_bar[n + n_ant * k], w_bar[half_w + n + n_ant * k]);
                    let gg = C64::new(g[n + n_ant * t], g[half_g + n + n_ant * t]);
                    acc += wb.conj() * gg;
                }
                grad[(k, t)] += acc;
            }
        }
    }
}

impl LinearOperator for PilotSet {
    fn nrows(&self) -> usize {
        2 * self.antennas * self.len()
    }

    fn ncols(&self) -> usize {
        2 * self.antennas * self.users()
    }

    fn apply(&self, v: &[f64], out: &mut [f64]) {
        let (n_ant, k_users, t_len) = (self.antennas, self.users(), self.len());
        let half_v = n_ant * k_users;
        let half_u = n_ant * t_len;
        for t in 0..t_len {
            for n in 0..n_ant {
                let mut acc = C64::new(0.0, 0.0);
                for k in 0..k_users {
                    let h = C64::new(v[n + n_ant * k], v[half_v + n + n_ant * k]);
                    acc += h * self.pilot[(k, t)];
                }
                out[n + n_ant * t] = acc.re;
                out[half_u + n + n_ant * t] = acc.im;
            }
        }
    }

    fn apply_transpose(&self, g: &[f64], out: &mut [f64]) {
        let (n_ant, k_users, t_len) = (self.antennas, self.users(), self.len());
        let half_w = n_ant * k_users;
        let half_g = n_ant * t_len;
        for k in 0..k_users {
            for n in 0..n_ant {
                let mut acc = C64::new(0.0, 0.0);
                for t in 0..t_len {
                    let gg = C64::new(g[n + n_ant * t], g[half_g + n + n_ant * t]);
                    acc += gg * self.pilot[(k, t)].conj();
                }
                out[n + n_ant * k] = acc.re;
                out[half_w + n + n_ant * k] = acc.im;
            }
        }
    }
}
