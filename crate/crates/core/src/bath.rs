//! Discretised Ohmic harmonic bath: mode frequencies and couplings, the
//! two-time correlation function `B`, and the influence functional for
//! diagram orders 1 and 3.

use std::io::Write;

use crate::algebra::{C64, ZERO};
use crate::error::{Error, Result};

/// Largest diagram order with a hard-coded influence functional.
pub const MAX_ORDER: usize = 3;

/// Chebyshev degree per panel of [`CorrelationTable`].
const TABLE_DEGREE: usize = 24;

/// Panel width in units of `1 / omega_max`.
const TABLE_PANEL: f64 = 4.0;

#[derive(Debug, Clone, PartialEq)]
pub struct BathSpec {
    pub l_modes: usize,
    pub xi: f64,
    pub omega_c: f64,
    pub omega_max: f64,
    pub beta: f64,
    omega: Vec<f64>,
    c: Vec<f64>,
    /// `c_l² / (2 ω_l)`.
    weight: Vec<f64>,
    /// `coth(β ω_l / 2)`.
    coth: Vec<f64>,
}

/// Mode `l` (1-based) of the discretisation.
fn mode_frequency(l: usize, l_modes: usize, omega_c: f64, omega_max: f64) -> f64 {
    let span = -(-omega_max / omega_c).exp_m1();
    -omega_c * (-(l as f64 / l_modes as f64) * span).ln_1p()
}

pub fn build_bath(l_modes: usize, xi: f64, omega_c: f64, omega_max: f64, beta: f64) -> Result<BathSpec> {
    let positive = |v: f64| v > 0.0 && v.is_finite();
    if l_modes == 0 {
        return Err(Error::config("bath needs at least one mode"));
    }
    if !(positive(omega_c) && positive(omega_max) && positive(beta)) {
        return Err(Error::config("omega_c, omega_max and beta must be positive"));
    }
    if !(xi >= 0.0 && xi.is_finite()) {
        return Err(Error::config(format!("xi must be nonnegative, got {xi}")));
    }
    let span = -(-omega_max / omega_c).exp_m1();
    let scale = (xi * omega_c / l_modes as f64 * span).sqrt();
    let omega: Vec<f64> = (1..=l_modes)
        .map(|l| mode_frequency(l, l_modes, omega_c, omega_max))
        .collect();
    let c: Vec<f64> = omega.iter().map(|w| w * scale).collect();
    let weight = omega.iter().zip(&c).map(|(w, c)| c * c / (2.0 * w)).collect();
    let coth = omega
        .iter()
        .map(|w| 1.0 + 2.0 / (beta * w).exp_m1())
        .collect();
    Ok(BathSpec {
        l_modes,
        xi,
        omega_c,
        omega_max,
        beta,
        omega,
        c,
        weight,
        coth,
    })
}

impl Default for BathSpec {
    /// `L = 200`, `ξ = 0.6`, `ω_c = 3`, `ω_max = 12`, `β = 5`.
    fn default() -> Self {
        build_bath(200, 0.6, 3.0, 12.0, 5.0).expect("default bath is valid")
    }
}

impl BathSpec {
    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    pub fn coupling(&self) -> &[f64] {
        &self.c
    }

    /// `B` as a function of the lag `τ2 - τ1`, by direct summation.
    pub fn correlation_lag(&self, lag: f64) -> C64 {
        let mut re = 0.0;
        let mut im = 0.0;
        for ((w, a), coth) in self.omega.iter().zip(&self.weight).zip(&self.coth) {
            let (s, c) = (w * lag).sin_cos();
            re += a * coth * c;
            im -= a * s;
        }
        C64::new(re, im)
    }

    /// `max |B(0, τ)|` over `τ ∈ [0, horizon]`, sampled on a fine grid.
    pub fn correlation_bound(&self, horizon: f64) -> f64 {
        let points = ((horizon * self.omega_max * 20.0).ceil() as usize).max(1000);
        (0..=points)
            .map(|i| self.correlation_lag(horizon * i as f64 / points as f64).norm())
            .fold(0.0, f64::max)
    }

    /// `l,omega_l,c_l` CSV.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "l,omega_l,c_l")?;
        for (l, (om, c)) in self.omega.iter().zip(&self.c).enumerate() {
            writeln!(w, "{},{:e},{:e}", l + 1, om, c)?;
        }
        Ok(())
    }
}

/// Two-time bath correlation `B(τ1, τ2)`.
pub trait Correlation: Sync {
    fn correlation(&self, tau1: f64, tau2: f64) -> C64;
}

impl Correlation for BathSpec {
    fn correlation(&self, tau1: f64, tau2: f64) -> C64 {
        self.correlation_lag(tau2 - tau1)
    }
}

/// Piecewise Chebyshev interpolant of `B` over lags in `[-horizon, horizon]`.
///
/// Real part is even and imaginary part odd in the lag, so only
/// nonnegative lags are tabulated. Lags beyond the horizon fall back to
/// direct summation.
#[derive(Debug, Clone)]
pub struct CorrelationTable {
    bath: BathSpec,
    horizon: f64,
    panel: f64,
    coeffs: Vec<[C64; TABLE_DEGREE + 1]>,
}

impl CorrelationTable {
    pub fn new(bath: &BathSpec, horizon: f64) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::config(format!("table horizon must be positive, got {horizon}")));
        }
        let target = TABLE_PANEL / bath.omega_max;
        let panels = (horizon / target).ceil().max(1.0) as usize;
        let panel = horizon / panels as f64;
        let p = TABLE_DEGREE + 1;
        let nodes: Vec<f64> = (0..p)
            .map(|k| (std::f64::consts::PI * (k as f64 + 0.5) / p as f64).cos())
            .collect();
        let coeffs = (0..panels)
            .map(|i| {
                let lo = i as f64 * panel;
                let values: Vec<C64> = nodes
                    .iter()
                    .map(|x| bath.correlation_lag(lo + 0.5 * panel * (x + 1.0)))
                    .collect();
                let mut c = [ZERO; TABLE_DEGREE + 1];
                for (j, cj) in c.iter_mut().enumerate() {
                    let sum: C64 = values
                        .iter()
                        .enumerate()
                        .map(|(k, v)| v * (std::f64::consts::PI * j as f64 * (k as f64 + 0.5) / p as f64).cos())
                        .sum();
                    *cj = sum * (2.0 / p as f64);
                }
                c[0] *= 0.5;
                c
            })
            .collect();
        Ok(CorrelationTable {
            bath: bath.clone(),
            horizon,
            panel,
            coeffs,
        })
    }

    pub fn bath(&self) -> &BathSpec {
        &self.bath
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    #[inline]
    pub fn lag(&self, lag: f64) -> C64 {
        let a = lag.abs();
        if a > self.horizon {
            return self.bath.correlation_lag(lag);
        }
        let i = ((a / self.panel) as usize).min(self.coeffs.len() - 1);
        let x = 2.0 * (a - i as f64 * self.panel) / self.panel - 1.0;
        let c = &self.coeffs[i];
        let (mut b1, mut b2) = (ZERO, ZERO);
        for cj in c[1..].iter().rev() {
            let b0 = cj + b1 * (2.0 * x) - b2;
            b2 = b1;
            b1 = b0;
        }
        let v = c[0] + b1 * x - b2;
        if lag < 0.0 {
            v.conj()
        } else {
            v
        }
    }
}

impl Correlation for CorrelationTable {
    #[inline]
    fn correlation(&self, tau1: f64, tau2: f64) -> C64 {
        self.lag(tau2 - tau1)
    }
}

/// Strictly increasing sampled times `s_1 < … < s_M` with `M ≤ MAX_ORDER`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeSequence {
    points: [f64; MAX_ORDER],
    len: usize,
}

impl TimeSequence {
    pub fn new(points: &[f64]) -> Result<Self> {
        if points.is_empty() || points.len() > MAX_ORDER {
            return Err(Error::UnsupportedOrder(points.len()));
        }
        if points.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("time sequence must be strictly increasing"));
        }
        let mut buf = [0.0; MAX_ORDER];
        buf[..points.len()].copy_from_slice(points);
        Ok(TimeSequence {
            points: buf,
            len: points.len(),
        })
    }

    pub fn points(&self) -> &[f64] {
        &self.points[..self.len]
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// `#{s_i ≤ t}`.
    pub fn count_le(&self, t: f64) -> usize {
        self.points().iter().filter(|&&s| s <= t).count()
    }
}

/// Influence functional `𝓛(s_up, s)` with `s_up` as the largest time.
///
/// `M = 1`: `B(s_1, s_up)`. `M = 3`: `B(s_1, s_3) B(s_2, s_up)`.
pub fn influence_l<B: Correlation + ?Sized>(corr: &B, s_up: f64, seq: &TimeSequence) -> Result<C64> {
    influence_points(corr, s_up, seq.points())
}

/// As [`influence_l`] on a raw sorted slice.
#[inline]
pub fn influence_points<B: Correlation + ?Sized>(corr: &B, s_up: f64, s: &[f64]) -> Result<C64> {
    match *s {
        [s1] => Ok(corr.correlation(s1, s_up)),
        [s1, s2, s3] => Ok(corr.correlation(s1, s3) * corr.correlation(s2, s_up)),
        _ => Err(Error::UnsupportedOrder(s.len())),
    }
}
