//! Runge-Kutta integration of `du/dt = E_X[g(t, u, X)]` with Monte Carlo
//! stage slopes, plus the direct Dyson-series estimator it is compared to.

use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;

use crate::algebra::{C64, I};
use crate::error::{Error, Result};
use crate::rng;

/// Replications handled by one parallel work item; partial sums are
/// combined in chunk order so the result is independent of the pool size.
const REPLICATION_CHUNK: usize = 256;

/// Magnitude below which a Dyson product is treated as zero.
const DYSON_UNDERFLOW: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq)]
pub struct ButcherTableau {
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    c: Vec<f64>,
}

impl ButcherTableau {
    /// `a` is given row by row; only the strictly lower part may be nonzero.
    pub fn new(a: Vec<Vec<f64>>, b: Vec<f64>, c: Vec<f64>) -> Result<Self> {
        let s = b.len();
        if s == 0 || c.len() != s || a.len() != s || a.iter().any(|row| row.len() != s) {
            return Err(Error::config("tableau dimensions do not match"));
        }
        for (i, row) in a.iter().enumerate() {
            if row[i..].iter().any(|&v| v != 0.0) {
                return Err(Error::config("tableau must be explicit (strictly lower-triangular)"));
            }
        }
        let finite = a.iter().flatten().chain(&b).chain(&c).all(|v| v.is_finite());
        if !finite {
            return Err(Error::config("tableau coefficients must be finite"));
        }
        Ok(ButcherTableau { a, b, c })
    }

    pub fn euler() -> Self {
        ButcherTableau {
            a: vec![vec![0.0]],
            b: vec![1.0],
            c: vec![0.0],
        }
    }

    /// Second-order Heun (explicit trapezoid).
    pub fn heun() -> Self {
        ButcherTableau {
            a: vec![vec![0.0, 0.0], vec![1.0, 0.0]],
            b: vec![0.5, 0.5],
            c: vec![0.0, 1.0],
        }
    }

    pub fn rk4() -> Self {
        ButcherTableau {
            a: vec![
                vec![0.0, 0.0, 0.0, 0.0],
                vec![0.5, 0.0, 0.0, 0.0],
                vec![0.0, 0.5, 0.0, 0.0],
                vec![0.0, 0.0, 1.0, 0.0],
            ],
            b: vec![1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0],
            c: vec![0.0, 0.5, 0.5, 1.0],
        }
    }

    pub fn stages(&self) -> usize {
        self.b.len()
    }

    /// Largest coefficient magnitude.
    pub fn coefficient_bound(&self) -> f64 {
        self.a
            .iter()
            .flatten()
            .chain(&self.b)
            .chain(&self.c)
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Deterministic right-hand side `f(t, u)`, written into `out`.
pub trait Rhs {
    fn dim(&self) -> usize;
    fn eval(&self, t: f64, u: &[C64], out: &mut [C64]);
}

/// Right-hand side given as an expectation over a random variable.
pub trait StochasticRhs: Sync {
    type Sample;

    fn dim(&self) -> usize;
    fn sample<R: Rng + ?Sized>(&self, t: f64, rng: &mut R) -> Self::Sample;
    /// Adds `g(t, u, x)` to `out`.
    fn accumulate(&self, t: f64, u: &[C64], x: &Self::Sample, out: &mut [C64]);

    /// Adds the sum of `g(t, u, x)` over `ns` fresh draws to `out`.
    fn accumulate_draws<R: Rng + ?Sized>(&self, t: f64, u: &[C64], ns: usize, rng: &mut R, out: &mut [C64]) {
        for _ in 0..ns {
            let x = self.sample(t, rng);
            self.accumulate(t, u, &x, out);
        }
    }
}

/// `du/dt = -(i/2) K u` written as `E[-i X u]` with `X ~ U(0, K)`.
#[derive(Debug, Clone, Copy)]
pub struct ToyModel {
    pub k: f64,
}

impl Rhs for ToyModel {
    fn dim(&self) -> usize {
        1
    }

    fn eval(&self, _t: f64, u: &[C64], out: &mut [C64]) {
        out[0] = -I * (0.5 * self.k) * u[0];
    }
}

impl StochasticRhs for ToyModel {
    type Sample = f64;

    fn dim(&self) -> usize {
        1
    }

    #[inline]
    fn sample<R: Rng + ?Sized>(&self, _t: f64, rng: &mut R) -> f64 {
        rng.random::<f64>() * self.k
    }

    #[inline]
    fn accumulate(&self, _t: f64, u: &[C64], x: &f64, out: &mut [C64]) {
        out[0] += -I * *x * u[0];
    }

    fn accumulate_draws<R: Rng + ?Sized>(&self, _t: f64, u: &[C64], ns: usize, rng: &mut R, out: &mut [C64]) {
        let total: f64 = (0..ns).map(|_| rng.random::<f64>()).sum();
        out[0] += -I * (total * self.k) * u[0];
    }
}

/// Flattened trajectory: `N + 1` states of dimension `dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub dim: usize,
    pub h: f64,
    pub states: Vec<C64>,
}

impl Trajectory {
    fn new(dim: usize, h: f64, steps: usize) -> Self {
        Trajectory {
            dim,
            h,
            states: vec![C64::new(0.0, 0.0); dim * (steps + 1)],
        }
    }

    pub fn steps(&self) -> usize {
        self.states.len() / self.dim - 1
    }

    pub fn state(&self, n: usize) -> &[C64] {
        &self.states[n * self.dim..(n + 1) * self.dim]
    }

    pub fn last(&self) -> &[C64] {
        self.state(self.steps())
    }
}

fn check_step_args(h: f64, steps: usize) -> Result<()> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::config(format!("time step must be positive, got {h}")));
    }
    if steps == 0 {
        return Err(Error::config("need at least one step"));
    }
    Ok(())
}

fn stage_state(tab: &ButcherTableau, i: usize, u: &[C64], k: &[Vec<C64>], h: f64, out: &mut [C64]) {
    out.copy_from_slice(u);
    for (j, kj) in k.iter().enumerate().take(i) {
        let a = tab.a[i][j];
        if a != 0.0 {
            for (o, kv) in out.iter_mut().zip(kj) {
                *o += kv * (h * a);
            }
        }
    }
}

fn finish_step(tab: &ButcherTableau, k: &[Vec<C64>], h: f64, next: &mut [C64], step: usize) -> Result<()> {
    for (i, ki) in k.iter().enumerate() {
        for (v, kv) in next.iter_mut().zip(ki) {
            *v += kv * (h * tab.b[i]);
        }
    }
    if let Some(bad) = next.iter().find(|v| !v.is_finite()) {
        return Err(Error::Divergence {
            location: format!("step {}", step + 1),
            norm: bad.norm(),
        });
    }
    Ok(())
}

/// Classical explicit Runge-Kutta with a deterministic right-hand side.
pub fn rk_deterministic_solve<F: Rhs + ?Sized>(
    tab: &ButcherTableau,
    f: &F,
    u0: &[C64],
    h: f64,
    steps: usize,
) -> Result<Trajectory> {
    check_step_args(h, steps)?;
    let d = u0.len();
    let s = tab.stages();
    let mut traj = Trajectory::new(d, h, steps);
    traj.states[..d].copy_from_slice(u0);
    let mut k = vec![vec![C64::new(0.0, 0.0); d]; s];
    let mut stage_u = vec![C64::new(0.0, 0.0); d];
    for n in 0..steps {
        let t = n as f64 * h;
        let (done, rest) = traj.states.split_at_mut((n + 1) * d);
        let u = &done[n * d..];
        for i in 0..s {
            stage_state(tab, i, u, &k, h, &mut stage_u);
            f.eval(t + tab.c[i] * h, &stage_u, &mut k[i]);
        }
        let next = &mut rest[..d];
        next.copy_from_slice(u);
        finish_step(tab, &k, h, next, n)?;
    }
    Ok(traj)
}

/// Stage buffers reused across replications.
struct Workspace {
    k: Vec<Vec<C64>>,
    stage_u: Vec<C64>,
}

impl Workspace {
    fn new(d: usize, s: usize) -> Self {
        Workspace {
            k: vec![vec![C64::new(0.0, 0.0); d]; s],
            stage_u: vec![C64::new(0.0, 0.0); d],
        }
    }
}

fn stochastic_into<G: StochasticRhs, R: Rng + ?Sized>(
    tab: &ButcherTableau,
    g: &G,
    h: f64,
    ns: usize,
    rng: &mut R,
    traj: &mut Trajectory,
    ws: &mut Workspace,
) -> Result<()> {
    let d = traj.dim;
    let steps = traj.steps();
    let inv_ns = 1.0 / ns as f64;
    for n in 0..steps {
        let t = n as f64 * h;
        let (done, rest) = traj.states.split_at_mut((n + 1) * d);
        let u = &done[n * d..];
        for i in 0..tab.stages() {
            stage_state(tab, i, u, &ws.k, h, &mut ws.stage_u);
            let ti = t + tab.c[i] * h;
            let ki = &mut ws.k[i];
            ki.iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
            g.accumulate_draws(ti, &ws.stage_u, ns, rng, ki);
            ki.iter_mut().for_each(|v| *v *= inv_ns);
        }
        let next = &mut rest[..d];
        next.copy_from_slice(u);
        finish_step(tab, &ws.k, h, next, n)?;
    }
    Ok(())
}

/// Runge-Kutta with every stage slope replaced by an average over `ns`
/// fresh samples. Draws are consumed from `rng` stage by stage.
pub fn rk_stochastic_solve<G: StochasticRhs, R: Rng + ?Sized>(
    tab: &ButcherTableau,
    g: &G,
    u0: &[C64],
    h: f64,
    steps: usize,
    ns: usize,
    rng: &mut R,
) -> Result<Trajectory> {
    check_step_args(h, steps)?;
    if ns == 0 {
        return Err(Error::config("sample count must be at least 1"));
    }
    let mut traj = Trajectory::new(u0.len(), h, steps);
    traj.states[..u0.len()].copy_from_slice(u0);
    let mut ws = Workspace::new(u0.len(), tab.stages());
    stochastic_into(tab, g, h, ns, rng, &mut traj, &mut ws)?;
    Ok(traj)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DysonEstimate {
    pub mean: Vec<C64>,
    /// Sample variance of the estimator, summed over components.
    pub variance: f64,
    /// Mean of `|sample|²`.
    pub second_moment: f64,
    pub accepted: usize,
    pub rejected: usize,
}

impl DysonEstimate {
    pub fn stderr(&self) -> f64 {
        (self.variance / self.accepted as f64).sqrt()
    }

    pub fn rejection_rate(&self) -> f64 {
        self.rejected as f64 / (self.accepted + self.rejected) as f64
    }
}

/// Direct Monte Carlo over the Dyson series of a linear equation
/// `du/dt = E[-i A(t, X)] u`.
///
/// `g` must be linear in `u` with `g(t, u, X) = -i A(t, X) u`. Each sample
/// draws an order `M ~ Poisson(rate·T)`, `M` sorted uniform times on
/// `[0, T]`, and weights the ordered product by the inverse sampling
/// density `e^{rate·T} / rate^M`. The order-zero term `u(0)` is added
/// exactly, so only `M ≥ 1` draws carry noise.
pub fn dyson_ode_mc<G: StochasticRhs, R: Rng + ?Sized>(
    g: &G,
    u0: &[C64],
    t_final: f64,
    rate: f64,
    ns: usize,
    rng: &mut R,
) -> Result<DysonEstimate> {
    if !(rate > 0.0 && t_final > 0.0) {
        return Err(Error::config("Dyson sampling needs rate > 0 and T > 0"));
    }
    if ns < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: ns });
    }
    let d = u0.len();
    let poisson = Poisson::new(rate * t_final)
        .map_err(|e| Error::config(format!("Poisson rate: {e}")))?;
    let weight = (rate * t_final).exp();

    let mut times = Vec::new();
    let mut v = vec![C64::new(0.0, 0.0); d];
    let mut next = vec![C64::new(0.0, 0.0); d];
    let mut sum = vec![C64::new(0.0, 0.0); d];
    let mut sum_sq = 0.0;
    let mut samples: Vec<Vec<C64>> = Vec::with_capacity(ns);
    let mut rejected = 0;

    for _ in 0..ns {
        let order = poisson.sample(rng) as usize;
        times.clear();
        times.extend((0..order).map(|_| rng.random::<f64>() * t_final));
        times.sort_by(f64::total_cmp);

        v.copy_from_slice(u0);
        let mut ok = true;
        if order == 0 {
            v.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
        }
        for &t in &times {
            let x = g.sample(t, rng);
            next.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
            g.accumulate(t, &v, &x, &mut next);
            let mut norm_sq = 0.0;
            for (a, b) in v.iter_mut().zip(&next) {
                *a = b / rate;
                norm_sq += a.norm_sqr();
            }
            if !norm_sq.is_finite() {
                ok = false;
                break;
            }
            if norm_sq.sqrt() < DYSON_UNDERFLOW {
                v.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
                break;
            }
        }
        let value: Vec<C64> = v.iter().map(|z| z * weight).collect();
        if !ok || value.iter().any(|z| !z.is_finite()) {
            rejected += 1;
            continue;
        }
        for (s, z) in sum.iter_mut().zip(&value) {
            *s += z;
        }
        sum_sq += value.iter().zip(u0).map(|(z, u)| (z + u).norm_sqr()).sum::<f64>();
        samples.push(value);
    }

    let accepted = samples.len();
    if accepted < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: accepted });
    }
    let mean: Vec<C64> = sum
        .iter()
        .zip(u0)
        .map(|(s, u)| u + s / accepted as f64)
        .collect();
    let variance = samples
        .iter()
        .map(|x| {
            x.iter()
                .zip(&mean)
                .zip(u0)
                .map(|((a, m), u)| (u + a - m).norm_sqr())
                .sum::<f64>()
        })
        .sum::<f64>()
        / (accepted - 1) as f64;
    Ok(DysonEstimate {
        mean,
        variance,
        second_moment: sum_sq / accepted as f64,
        accepted,
        rejected,
    })
}

/// Per-step mean squared deviation between stochastic replications and the
/// deterministic Runge-Kutta trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct OdeRunStats {
    pub h: f64,
    pub n_exp: usize,
    /// `mu[n]` estimates `E|u_n - ũ_n|²`.
    pub mu: Vec<f64>,
    /// Standard error of each `mu[n]`.
    pub stderr: Vec<f64>,
    /// Per-replication squared errors, kept only when requested.
    pub per_replication: Option<Vec<Vec<f64>>>,
}

impl OdeRunStats {
    pub fn time(&self, n: usize) -> f64 {
        n as f64 * self.h
    }

    /// `e(t)` on the grid; `t` must be a multiple of `h`.
    pub fn error_at(&self, t: f64) -> Option<f64> {
        let n = steps_for(t, self.h).ok()?;
        self.mu.get(n).copied()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,mu,stderr_mu")?;
        for (n, (mu, se)) in self.mu.iter().zip(&self.stderr).enumerate() {
            writeln!(w, "{},{:.10e},{:.10e}", self.time(n), mu, se)?;
        }
        Ok(())
    }
}

/// Number of steps of size `h` covering `t`, which must divide evenly.
pub fn steps_for(t: f64, h: f64) -> Result<usize> {
    let n = (t / h).round();
    if !(h > 0.0) || n < 0.0 || ((t / h) - n).abs() > 1e-9 * n.max(1.0) {
        return Err(Error::config(format!("time {t} is not a multiple of step {h}")));
    }
    Ok(n as usize)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToyExperiment {
    pub k: f64,
    pub t_final: f64,
    pub h: f64,
    pub ns: usize,
    pub n_exp: usize,
    pub seed: u64,
}

/// Heun scheme on the toy model: `n_exp` independent stochastic runs
/// against one shared deterministic trajectory.
pub fn toy_model_experiment(cfg: &ToyExperiment) -> Result<OdeRunStats> {
    run_replications(cfg, false)
}

/// As [`toy_model_experiment`], also returning every replication's squared
/// error path (for bootstrap analysis).
pub fn toy_model_experiment_detailed(cfg: &ToyExperiment) -> Result<OdeRunStats> {
    run_replications(cfg, true)
}

fn run_replications(cfg: &ToyExperiment, keep: bool) -> Result<OdeRunStats> {
    if !(cfg.k > 0.0) {
        return Err(Error::config("K must be positive"));
    }
    if cfg.n_exp == 0 || cfg.ns == 0 {
        return Err(Error::config("need at least one replication and one sample"));
    }
    let steps = steps_for(cfg.t_final, cfg.h)?;
    let model = ToyModel { k: cfg.k };
    let tab = ButcherTableau::heun();
    let u0 = [C64::new(1.0, 0.0)];
    let reference = rk_deterministic_solve(&tab, &model, &u0, cfg.h, steps)?;

    let chunks = cfg.n_exp.div_ceil(REPLICATION_CHUNK);
    type Partial = (Vec<f64>, Vec<f64>, Vec<Vec<f64>>);
    let partials: Vec<Result<Partial>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * REPLICATION_CHUNK;
            let hi = (lo + REPLICATION_CHUNK).min(cfg.n_exp);
            let mut sum = vec![0.0; steps + 1];
            let mut sum_sq = vec![0.0; steps + 1];
            let mut kept = Vec::new();
            let mut traj = Trajectory::new(1, cfg.h, steps);
            let mut ws = Workspace::new(1, tab.stages());
            for r in lo..hi {
                let mut rng = rng::stream(cfg.seed, &[r as u64]);
                traj.states[0] = u0[0];
                stochastic_into(&tab, &model, cfg.h, cfg.ns, &mut rng, &mut traj, &mut ws)?;
                let errs: Vec<f64> = traj
                    .states
                    .iter()
                    .zip(&reference.states)
                    .map(|(a, b)| (a - b).norm_sqr())
                    .collect();
                for (n, e) in errs.iter().enumerate() {
                    sum[n] += e;
                    sum_sq[n] += e * e;
                }
                if keep {
                    kept.push(errs);
                }
            }
            Ok((sum, sum_sq, kept))
        })
        .collect();

    let mut sum = vec![0.0; steps + 1];
    let mut sum_sq = vec![0.0; steps + 1];
    let mut per_rep = keep.then(|| Vec::with_capacity(cfg.n_exp));
    for p in partials {
        let (s, sq, kept) = p?;
        for n in 0..=steps {
            sum[n] += s[n];
            sum_sq[n] += sq[n];
        }
        if let Some(all) = per_rep.as_mut() {
            all.extend(kept);
        }
    }
    let m = cfg.n_exp as f64;
    let mu: Vec<f64> = sum.iter().map(|s| s / m).collect();
    let stderr = mu
        .iter()
        .zip(&sum_sq)
        .map(|(mean, sq)| {
            if cfg.n_exp < 2 {
                return f64::NAN;
            }
            let var = ((sq / m - mean * mean) * m / (m - 1.0)).max(0.0);
            (var / m).sqrt()
        })
        .collect();
    Ok(OdeRunStats {
        h: cfg.h,
        n_exp: cfg.n_exp,
        mu,
        stderr,
        per_replication: per_rep,
    })
}

/// Closed-form `E|u_n - ũ_n|²` for the Heun toy model: the error obeys
/// `μ_{n+1} = a μ_n + v (|u_n|² + μ_n)` with `a = |1 - hL|²` and
/// `v = h² Var(A)`, where `A` is the sampled one-step operator.
pub fn toy_model_expected_mu(k: f64, t: f64, h: f64, ns: usize) -> Vec<f64> {
    let steps = (t / h).round() as usize;
    let m = k / 2.0;
    let s2 = k * k / 12.0 / ns as f64;
    let second = m * m + s2;
    let l_abs_sq = 0.25 * (k * k + (h * k * k / 4.0).powi(2));
    let a = (1.0 - h * h * k * k / 8.0).powi(2) + (h * k / 2.0).powi(2);
    let e_abs_a_sq = 0.25 * ((2.0 * second + 2.0 * m * m) + h * h * second * second);
    let v = h * h * (e_abs_a_sq - l_abs_sq);
    let mut mu = vec![0.0];
    let mut u_sq = 1.0;
    for _ in 0..steps {
        let last = *mu.last().unwrap();
        mu.push(a * last + v * (u_sq + last));
        u_sq *= a;
    }
    mu
}
