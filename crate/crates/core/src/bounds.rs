//! Closed-form error envelopes for the stochastic schemes and variance
//! bounds for direct Dyson-series sampling.

/// Growth constant in the exponent of the envelopes.
pub const THETA1: f64 = 353.0;

/// `√34`.
pub const THETA2: f64 = 5.830_951_894_845_301;

/// Bounds on the problem data. `w`: `‖W_s‖`, `g`: propagator norm,
/// `lbar`: correlation magnitude, `h_norm`: `‖H_s‖`, `gpp`/`gppp`: second
/// and third derivative bounds of the exact propagator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundConstants {
    pub w: f64,
    pub g: f64,
    pub lbar: f64,
    pub h_norm: f64,
    pub gpp: f64,
    pub gppp: f64,
    pub mbar: usize,
}

impl BoundConstants {
    /// All constants equal to one.
    pub fn unit(mbar: usize) -> Self {
        BoundConstants {
            w: 1.0,
            g: 1.0,
            lbar: 1.0,
            h_norm: 1.0,
            gpp: 1.0,
            gppp: 1.0,
            mbar,
        }
    }

    fn odd_orders(&self, from: usize) -> impl Iterator<Item = usize> {
        (from..=self.mbar).step_by(2)
    }
}

/// `k!!` with `0!! = (-1)!! = 1`.
pub fn double_factorial(k: i64) -> f64 {
    let mut acc = 1.0;
    let mut i = k;
    while i > 1 {
        acc *= i as f64;
        i -= 2;
    }
    acc
}

pub fn p1(c: &BoundConstants, t: f64) -> f64 {
    let x = 2.0 * c.w * c.g * c.lbar.sqrt() * t;
    let tail: f64 = c
        .odd_orders(3)
        .map(|m| {
            let m = m as i64;
            ((m - 1) * m) as f64 / double_factorial(m - 3) * x.powi((m - 2) as i32)
        })
        .sum();
    2.0 * c.w.powi(2) * c.g * c.lbar + 3.0 * c.w.powi(3) * c.g.powi(2) * c.lbar.powf(1.5) * (1.0 + t) * tail
}

pub fn gamma_bar(c: &BoundConstants, t: f64) -> f64 {
    let a = c.w * c.g * c.lbar.sqrt();
    let sum: f64 = c
        .odd_orders(1)
        .map(|m| (a * t).powi(m as i32) / double_factorial(m as i64 - 1))
        .sum();
    2.0 * a * sum
}

/// Limit of [`gamma_bar`] as `mbar → ∞`.
pub fn gamma_bar_limit(c: &BoundConstants, t: f64) -> f64 {
    let a2 = (c.w * c.g).powi(2) * c.lbar;
    2.0 * a2 * t * (a2 * t * t / 2.0).exp()
}

/// RMS error envelope of the Monte Carlo scheme against the
/// deterministic one.
pub fn error_envelope_mc(c: &BoundConstants, t: f64, h: f64, ns: f64) -> f64 {
    THETA2 * gamma_bar(c, t).sqrt() * (THETA1 * p1(c, t).sqrt() * t).exp() * (h / ns).sqrt()
}

/// Natural log of [`error_envelope_mc`], finite where the envelope overflows.
pub fn log_error_envelope_mc(c: &BoundConstants, t: f64, h: f64, ns: f64) -> f64 {
    THETA2.ln() + 0.5 * gamma_bar(c, t).ln() + THETA1 * p1(c, t).sqrt() * t + 0.5 * (h / ns).ln()
}

/// Coefficient of the `h²` term against the exact propagator.
pub fn p_e(c: &BoundConstants, t: f64) -> f64 {
    let x = 2.0 * c.w * c.g * c.lbar.sqrt() * t;
    let sum: f64 = c
        .odd_orders(1)
        .map(|m| (m + 1) as f64 / double_factorial(m as i64 - 1) * x.powi(m as i32))
        .sum();
    (0.25 * c.h_norm + 8.0 * p1(c, t)) * c.gpp + 5.0 / 12.0 * c.gppp + c.w * c.gpp * c.lbar.sqrt() * sum
}

/// RMS error envelope of the Monte Carlo scheme against the exact solution.
pub fn error_envelope_full(c: &BoundConstants, t: f64, h: f64, ns: f64) -> f64 {
    p_e(c, t) * (THETA1 * p1(c, t).sqrt() * t).exp() * h * h + error_envelope_mc(c, t, h, ns)
}

/// `16 P2(t) (10t + 16t² + 5t³ + t⁴/4)` for a caller-supplied `P2`.
pub fn alpha_bar(p2: impl Fn(f64) -> f64, t: f64) -> f64 {
    16.0 * p2(t) * (10.0 * t + 16.0 * t * t + 5.0 * t.powi(3) + 0.25 * t.powi(4))
}

/// Bias envelope `‖E(G̃ - G)‖` for a caller-supplied `P2`.
pub fn bias_envelope(c: &BoundConstants, p2: impl Fn(f64) -> f64, t: f64, h: f64, ns: f64) -> f64 {
    4.0 * THETA2 * THETA2 * alpha_bar(p2, t) * gamma_bar(c, t) * (3.0 * THETA1 * p1(c, t).sqrt() * t).exp() * h / ns
}

/// Variance bound of direct Dyson sampling for a `d`-dimensional linear ODE
/// with `|∂g/∂u| ≤ m_prime`.
pub fn ode_dyson_variance_bound(d: usize, m_prime: f64, t: f64, u0_norm: f64) -> f64 {
    (d as f64 * m_prime * m_prime * t).exp_m1() * u0_norm * u0_norm
}

/// Variance bound of direct Dyson sampling for the spin-boson propagator
/// over a time span `dt`.
pub fn spinboson_dyson_variance_bound(w_norm: f64, lbar: f64, dt: f64) -> f64 {
    (w_norm.powi(4) * lbar * lbar * dt * dt / 2.0).exp()
}
