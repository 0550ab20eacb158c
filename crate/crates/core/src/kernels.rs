//! Scalar kernels: the standard normal cdf/pdf and the logistic approximation
//! `Phi(t) ~ sigmoid(1.702 t)`.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// Logistic scale that makes `sigmoid(c t)` track `Phi(t)`.
pub const SIGMOID_C: f64 = 1.702;

pub fn normal_cdf(t: f64) -> f64 {
    0.5 * libm::erfc(-t * FRAC_1_SQRT_2)
}

/// Upper tail `1 - Phi(t)`, accurate for large positive `t`.
pub fn normal_sf(t: f64) -> f64 {
    0.5 * libm::erfc(t * FRAC_1_SQRT_2)
}

pub fn normal_pdf(t: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    (-0.5 * t * t).exp() / (2.0 * PI).sqrt()
}

pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `sigmoid(SIGMOID_C * t)`
pub fn sigmoid_cdf(t: f64) -> f64 {
    sigmoid(SIGMOID_C * t)
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Inverse of [`softplus`] for `y > 0`.
pub fn softplus_inverse(y: f64) -> f64 {
    if y > 30.0 {
        y + (-(-y).exp()).ln_1p()
    } else {
        y.exp_m1().ln()
    }
}

/// `ln(Phi(a) - Phi(b))` for `a >= b`, infinities allowed. Returns `-inf`
/// when the difference underflows.
pub fn log_cdf_diff(a: f64, b: f64) -> f64 {
    let p = if b > 0.0 {
        normal_sf(b) - normal_sf(a)
    } else {
        normal_cdf(a) - normal_cdf(b)
    };
    if p > 0.0 {
        p.ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// `ln(sigmoid(a) - sigmoid(b))` for `a > b`, evaluated as
/// `-b + ln(1 - e^{-(a-b)}) - softplus(-a) - softplus(-b)`.
/// `a = +inf` or `b = -inf` drop the matching factor exactly.
pub fn log_sigmoid_diff(a: f64, b: f64) -> f64 {
    match (a == f64::INFINITY, b == f64::NEG_INFINITY) {
        (true, true) => 0.0,
        // ln(1 - sigmoid(b)) = ln sigmoid(-b)
        (true, false) => -softplus(b),
        (false, true) => -softplus(-a),
        (false, false) => {
            if a <= b {
                return f64::NEG_INFINITY;
            }
            -b + (-(-(a - b)).exp_m1()).ln() - softplus(-a) - softplus(-b)
        }
    }
}
