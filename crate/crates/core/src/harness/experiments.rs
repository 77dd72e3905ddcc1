//! Experiment drivers: seeded replication, error tables and growth curves.

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::config::{
    n_exp, BoundsOverlayGrid, ExperimentConfig, ExperimentKind, HSweep, InchwormConvergenceGrid,
    InchwormErrorGrowthGrid, NsSweep, ObservableGrid, OdeConvergenceGrid, OdeErrorGrowthGrid,
};
use super::output;
use super::stats::{bootstrap_ci, order_of_accuracy, polyfit, ConfidenceInterval, MomentAccumulator};
use crate::algebra::Mat2;
use crate::bath::{BathSpec, Correlation, CorrelationTable};
use crate::bounds::{error_envelope_mc, log_error_envelope_mc, BoundConstants};
use crate::error::{Error, Result};
use crate::inchworm::{observable_nodes, Inchworm, Mode, SchemeConfig, SystemSpec};
use crate::ode_mc::{steps_for, toy_model_experiment_detailed, OdeRunStats, ToyExperiment};
use crate::rng;

const REPLICATION_CHUNK: usize = 256;

/// Largest tolerated fraction of diverged replications.
pub const MAX_DIVERGENCE_RATE: f64 = 0.01;

const TAG_ODE: u64 = 1;
const TAG_INCHWORM: u64 = 2;
const TAG_BOOTSTRAP: u64 = 3;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct DivergenceTally {
    pub diverged: usize,
    pub total: usize,
}

impl DivergenceTally {
    pub fn add(&mut self, diverged: usize, total: usize) {
        self.diverged += diverged;
        self.total += total;
    }

    pub fn check(&self) -> Result<()> {
        if self.diverged as f64 > MAX_DIVERGENCE_RATE * self.total as f64 {
            return Err(Error::DivergenceRate {
                diverged: self.diverged,
                total: self.total,
            });
        }
        Ok(())
    }
}

/// Moments of `G(N+j, N-j)` over accepted replications.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservableStats {
    pub h: f64,
    pub n_exp: usize,
    pub diverged: usize,
    pub mean: Vec<Mat2>,
    /// `e(jh)`.
    pub variance: Vec<f64>,
    pub clamped: usize,
    /// Largest `‖G‖_F` seen on any accepted grid.
    pub max_norm: f64,
    /// Observable entries of every accepted replication, when kept.
    pub samples: Option<Vec<Vec<Mat2>>>,
}

impl ObservableStats {
    pub fn time(&self, j: usize) -> f64 {
        j as f64 * self.h
    }

    pub fn error_at(&self, t: f64) -> Option<f64> {
        let j = steps_for(t, self.h).ok()?;
        self.variance.get(j).copied()
    }

    pub fn tally(&self) -> DivergenceTally {
        DivergenceTally {
            diverged: self.diverged,
            total: self.n_exp,
        }
    }
}

struct ChunkResult {
    acc: MomentAccumulator,
    diverged: usize,
    max_norm: f64,
    kept: Vec<Vec<Mat2>>,
}

/// Runs replications `0..n_exp` of `config`. Diverged replications are
/// counted and skipped; other errors abort.
pub fn replicate_observable<B: Correlation + ?Sized>(
    system: &SystemSpec,
    corr: &B,
    config: &SchemeConfig,
    n_exp: usize,
    keep: bool,
) -> Result<ObservableStats> {
    let solver = Inchworm::new(*system, corr, *config)?;
    let mesh = *solver.mesh();
    let nodes = (0..=mesh.n())
        .map(|j| observable_nodes(&mesh, j))
        .collect::<Result<Vec<_>>>()?;
    let chunks: Vec<Result<ChunkResult>> = (0..n_exp.div_ceil(REPLICATION_CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut out = ChunkResult {
                acc: MomentAccumulator::new(nodes.len()),
                diverged: 0,
                max_norm: 0.0,
                kept: Vec::new(),
            };
            let lo = c * REPLICATION_CHUNK;
            for r in lo..(lo + REPLICATION_CHUNK).min(n_exp) {
                let grid = match solver.solve(r as u64) {
                    Ok(g) => g,
                    Err(Error::Divergence { .. }) => {
                        out.diverged += 1;
                        continue;
                    }
                    Err(e) => return Err(e),
                };
                let values = nodes
                    .iter()
                    .map(|&(row, col)| grid.get(row, col))
                    .collect::<Result<Vec<_>>>()?;
                out.acc.push(&values);
                out.max_norm = out.max_norm.max(grid.max_norm());
                if keep {
                    out.kept.push(values);
                }
            }
            Ok(out)
        })
        .collect();

    let mut acc = MomentAccumulator::new(nodes.len());
    let mut diverged = 0;
    let mut max_norm = 0.0f64;
    let mut samples = keep.then(Vec::new);
    for chunk in chunks {
        let chunk = chunk?;
        acc.merge(&chunk.acc);
        diverged += chunk.diverged;
        max_norm = max_norm.max(chunk.max_norm);
        if let Some(s) = samples.as_mut() {
            s.extend(chunk.kept);
        }
    }
    if acc.count() < 2 {
        let tally = DivergenceTally { diverged, total: n_exp };
        tally.check()?;
        return Err(Error::TooFewSamples { needed: 2, got: acc.count() });
    }
    let m = acc.finish()?;
    Ok(ObservableStats {
        h: mesh.h(),
        n_exp,
        diverged,
        mean: m.mean,
        variance: m.variance,
        clamped: m.clamped,
        max_norm,
        samples,
    })
}

/// Variance of slot `j` over the replications listed in `idx`.
fn resampled_variance(samples: &[Vec<Mat2>], idx: &[usize], j: usize) -> f64 {
    let n = idx.len() as f64;
    let (mut sum, mut sq) = (Mat2::zero(), 0.0);
    for &i in idx {
        let v = samples[i][j];
        sum += v;
        sq += v.norm_sqr();
    }
    n / (n - 1.0) * (sq / n - (sum * (1.0 / n)).norm_sqr())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sweep {
    H,
    Ns,
}

impl Sweep {
    pub fn label(self) -> &'static str {
        match self {
            Sweep::H => "h",
            Sweep::Ns => "ns",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceRow {
    pub sweep: Sweep,
    pub h: f64,
    pub ns: usize,
    pub n_exp: usize,
    pub diverged: usize,
    /// One entry per report time.
    pub errors: Vec<f64>,
    pub orders: Vec<Option<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceTable {
    pub report_times: Vec<f64>,
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceTable {
    pub fn sweep(&self, sweep: Sweep) -> impl Iterator<Item = &ConvergenceRow> {
        self.rows.iter().filter(move |r| r.sweep == sweep)
    }
}

fn sweep_cases(h_sweep: &Option<HSweep>, ns_sweep: &Option<NsSweep>) -> Vec<(Sweep, f64, usize)> {
    let mut cases = Vec::new();
    if let Some(s) = h_sweep {
        cases.extend(s.h.iter().map(|&h| (Sweep::H, h, s.ns)));
    }
    if let Some(s) = ns_sweep {
        cases.extend(s.ns.iter().map(|&ns| (Sweep::Ns, s.h, ns)));
    }
    cases
}

fn fill_orders(rows: &mut [ConvergenceRow], times: usize) -> Result<()> {
    for sweep in [Sweep::H, Sweep::Ns] {
        let idx: Vec<usize> = (0..rows.len()).filter(|&i| rows[i].sweep == sweep).collect();
        if idx.len() < 2 {
            continue;
        }
        let p: Vec<f64> = idx
            .iter()
            .map(|&i| match sweep {
                Sweep::H => rows[i].h,
                Sweep::Ns => 1.0 / rows[i].ns as f64,
            })
            .collect();
        for k in 0..times {
            let e: Vec<f64> = idx.iter().map(|&i| rows[i].errors[k]).collect();
            for (&i, o) in idx.iter().zip(order_of_accuracy(&p, &e)?) {
                rows[i].orders[k] = o;
            }
        }
    }
    Ok(())
}

fn ode_seed(seed: u64, k: f64, steps: usize, ns: usize) -> u64 {
    rng::stream_id(seed, &[TAG_ODE, k.to_bits(), steps as u64, ns as u64])
}

fn inchworm_seed(seed: u64, n: usize, ns: usize, mbar: usize, mode: Mode) -> u64 {
    rng::stream_id(seed, &[TAG_INCHWORM, n as u64, ns as u64, mbar as u64, mode as u64])
}

/// Toy-model error table over the grid's sweeps.
pub fn ode_convergence(grid: &OdeConvergenceGrid, multiplier: f64, seed: u64) -> Result<ConvergenceTable> {
    grid.validate()?;
    let mut rows = Vec::new();
    for (sweep, h, ns) in sweep_cases(&grid.h_sweep, &grid.ns_sweep) {
        let steps = steps_for(grid.t_final, h)?;
        let cfg = ToyExperiment {
            k: grid.k,
            t_final: grid.t_final,
            h,
            ns,
            n_exp: n_exp(multiplier, steps, ns),
            seed: ode_seed(seed, grid.k, steps, ns),
        };
        let stats = crate::ode_mc::toy_model_experiment(&cfg)?;
        let errors = grid
            .report_times
            .iter()
            .map(|&t| stats.error_at(t).ok_or_else(|| Error::config(format!("no step at t = {t}"))))
            .collect::<Result<Vec<_>>>()?;
        rows.push(ConvergenceRow {
            sweep,
            h,
            ns,
            n_exp: cfg.n_exp,
            diverged: 0,
            orders: vec![None; errors.len()],
            errors,
        });
    }
    fill_orders(&mut rows, grid.report_times.len())?;
    Ok(ConvergenceTable {
        report_times: grid.report_times.clone(),
        rows,
    })
}

/// Inchworm error table: `e(t)` from the variance over replications.
pub fn inchworm_convergence(
    system: &SystemSpec,
    bath: &BathSpec,
    grid: &InchwormConvergenceGrid,
    multiplier: f64,
    seed: u64,
) -> Result<ConvergenceTable> {
    grid.validate()?;
    let table = CorrelationTable::new(bath, 2.0 * grid.t_final)?;
    let mut rows = Vec::new();
    for (sweep, h, ns) in sweep_cases(&grid.h_sweep, &grid.ns_sweep) {
        let n = steps_for(grid.t_final, h)?;
        let cfg = SchemeConfig {
            ns,
            mbar: grid.mbar,
            guard: grid.guard,
            seed: inchworm_seed(seed, n, ns, grid.mbar, Mode::MonteCarlo),
            ..SchemeConfig::new(n, grid.t_final)
        };
        let count = n_exp(multiplier, n, ns);
        let stats = replicate_observable(system, &table, &cfg, count, false)?;
        stats.tally().check()?;
        let errors = grid
            .report_times
            .iter()
            .map(|&t| stats.error_at(t).ok_or_else(|| Error::config(format!("no node at t = {t}"))))
            .collect::<Result<Vec<_>>>()?;
        rows.push(ConvergenceRow {
            sweep,
            h,
            ns,
            n_exp: count,
            diverged: stats.diverged,
            orders: vec![None; errors.len()],
            errors,
        });
    }
    fill_orders(&mut rows, grid.report_times.len())?;
    Ok(ConvergenceTable {
        report_times: grid.report_times.clone(),
        rows,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct OdeGrowthCurve {
    pub k: f64,
    pub ns: usize,
    pub stats: OdeRunStats,
    /// Quadratic coefficient of `μ_n` fitted against `n`.
    pub quadratic: ConfidenceInterval,
    /// Slope of `log μ_n` against `n` over `n ≥ 1`.
    pub log_slope: f64,
}

fn quadratic_coefficient(x: &[f64], y: &[f64]) -> Result<f64> {
    Ok(polyfit(x, y, 2)?[2])
}

/// `μ_n` curves for every `(K, Ns)` with bootstrap fits.
pub fn ode_error_growth(grid: &OdeErrorGrowthGrid, multiplier: f64, seed: u64) -> Result<Vec<OdeGrowthCurve>> {
    grid.validate()?;
    let steps = steps_for(grid.t_final, grid.h)?;
    let mut curves = Vec::new();
    for &k in &grid.k {
        for &ns in &grid.ns {
            let cfg = ToyExperiment {
                k,
                t_final: grid.t_final,
                h: grid.h,
                ns,
                n_exp: n_exp(multiplier, steps, ns),
                seed: ode_seed(seed, k, steps, ns),
            };
            let mut stats = toy_model_experiment_detailed(&cfg)?;
            let paths = stats.per_replication.take().unwrap_or_default();
            let x: Vec<f64> = (0..=steps).map(|n| n as f64).collect();
            let quadratic = bootstrap_ci(
                paths.len(),
                grid.bootstrap.max(2),
                0.95,
                rng::stream_id(cfg.seed, &[TAG_BOOTSTRAP]),
                |idx| {
                    let mut mu = vec![0.0; steps + 1];
                    for &i in idx {
                        for (m, e) in mu.iter_mut().zip(&paths[i]) {
                            *m += e;
                        }
                    }
                    mu.iter_mut().for_each(|m| *m /= idx.len() as f64);
                    quadratic_coefficient(&x, &mu)
                },
            )?;
            let log_mu: Vec<f64> = stats.mu[1..].iter().map(|m| m.ln()).collect();
            let log_slope = polyfit(&x[1..], &log_mu, 1).map(|c| c[1]).unwrap_or(f64::NAN);
            curves.push(OdeGrowthCurve {
                k,
                ns,
                stats,
                quadratic,
                log_slope,
            });
        }
    }
    Ok(curves)
}

#[derive(Clone, Debug, PartialEq)]
pub struct InchwormGrowthCurve {
    pub mbar: usize,
    pub ns: usize,
    pub fit_from: f64,
    pub stats: ObservableStats,
    /// Quadratic coefficient of `log e(t)` against `t` for `t ≥ fit_from`;
    /// `None` when the window is too short or holds a zero error.
    pub log_quadratic: Option<ConfidenceInterval>,
}

/// Quadratic coefficient of `log e(t)` over the window, with a
/// replication bootstrap.
pub fn log_curvature(stats: &ObservableStats, from: f64, resamples: usize, seed: u64) -> Result<ConfidenceInterval> {
    let samples = stats
        .samples
        .as_ref()
        .ok_or_else(|| Error::config("replication samples were not kept"))?;
    let first = (from / stats.h - 1e-9).ceil().max(0.0) as usize;
    let window: Vec<usize> = (first..stats.variance.len()).collect();
    if window.len() < 4 {
        return Err(Error::TooFewSamples { needed: 4, got: window.len() });
    }
    let t: Vec<f64> = window.iter().map(|&j| stats.time(j)).collect();
    bootstrap_ci(samples.len(), resamples.max(2), 0.95, seed, |idx| {
        let mut y = Vec::with_capacity(window.len());
        for &j in &window {
            let v = resampled_variance(samples, idx, j);
            if !(v > 0.0) {
                return Err(Error::config("nonpositive error in fit window"));
            }
            y.push(v.ln());
        }
        quadratic_coefficient(&t, &y)
    })
}

/// `e(t)` curves for every `(M̄, Ns)` with curvature fits.
pub fn inchworm_error_growth(
    system: &SystemSpec,
    bath: &BathSpec,
    grid: &InchwormErrorGrowthGrid,
    multiplier: f64,
    seed: u64,
) -> Result<Vec<InchwormGrowthCurve>> {
    grid.validate()?;
    let table = CorrelationTable::new(bath, 2.0 * grid.t_final)?;
    let n = steps_for(grid.t_final, grid.h)?;
    let mut curves = Vec::new();
    for (&mbar, &fit_from) in grid.mbar.iter().zip(&grid.fit_from) {
        for &ns in &grid.ns {
            let cfg = SchemeConfig {
                ns,
                mbar,
                guard: grid.guard,
                seed: inchworm_seed(seed, n, ns, mbar, Mode::MonteCarlo),
                ..SchemeConfig::new(n, grid.t_final)
            };
            let mut stats = replicate_observable(system, &table, &cfg, n_exp(multiplier, n, ns), true)?;
            stats.tally().check()?;
            let boot_seed = rng::stream_id(cfg.seed, &[TAG_BOOTSTRAP]);
            let log_quadratic = log_curvature(&stats, fit_from, grid.bootstrap, boot_seed).ok();
            stats.samples = None;
            curves.push(InchwormGrowthCurve {
                mbar,
                ns,
                fit_from,
                stats,
                log_quadratic,
            });
        }
    }
    Ok(curves)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObservableCurve {
    pub mbar: usize,
    pub ns: usize,
    pub mode: Mode,
    pub h: f64,
    pub replications: usize,
    pub diverged: usize,
    /// Mean `G(N+j, N-j)` entry `(1, 1)`, `j = 0..=N`.
    pub values: Vec<crate::algebra::C64>,
}

/// Observable curves averaged over the requested replications.
pub fn observable_curves(
    system: &SystemSpec,
    bath: &BathSpec,
    grid: &ObservableGrid,
    seed: u64,
) -> Result<Vec<ObservableCurve>> {
    grid.validate()?;
    let table = CorrelationTable::new(bath, 2.0 * grid.t_final)?;
    let n = steps_for(grid.t_final, grid.h)?;
    let mut curves = Vec::new();
    for run in &grid.runs {
        let cfg = SchemeConfig {
            ns: run.ns,
            mbar: run.mbar,
            mode: grid.mode,
            guard: grid.guard,
            seed: inchworm_seed(seed, n, run.ns, run.mbar, grid.mode),
            ..SchemeConfig::new(n, grid.t_final)
        };
        let (values, diverged) = if grid.replications == 1 {
            let g = Inchworm::new(*system, &table, cfg)?.solve(0)?;
            (crate::inchworm::observable_curve(&g)?, 0)
        } else {
            let stats = replicate_observable(system, &table, &cfg, grid.replications, false)?;
            stats.tally().check()?;
            (stats.mean.iter().map(|m| m.a11).collect(), stats.diverged)
        };
        curves.push(ObservableCurve {
            mbar: run.mbar,
            ns: run.ns,
            mode: grid.mode,
            h: grid.h,
            replications: grid.replications,
            diverged,
            values,
        });
    }
    Ok(curves)
}

#[derive(Clone, Debug, PartialEq)]
pub struct OverlayPoint {
    pub t: f64,
    /// Span `2t` of the propagator `G(N+j, N-j)`.
    pub span: f64,
    pub e: f64,
    pub log_envelope: f64,
}

impl OverlayPoint {
    pub fn rms(&self) -> f64 {
        self.e.sqrt()
    }

    pub fn envelope(&self) -> f64 {
        self.log_envelope.exp()
    }

    /// `√e ≤ envelope`, compared in log space.
    pub fn dominated(&self) -> bool {
        self.e == 0.0 || 0.5 * self.e.ln() <= self.log_envelope
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundsOverlay {
    pub constants: BoundConstants,
    pub h: f64,
    pub ns: usize,
    pub n_exp: usize,
    pub diverged: usize,
    pub points: Vec<OverlayPoint>,
}

/// Measured constants: `‖W‖_F`, the largest `‖G‖_F` seen, the bath
/// correlation bound over the run, and `‖H‖_F`.
pub fn measured_constants(system: &SystemSpec, bath: &BathSpec, max_norm: f64, t_final: f64, mbar: usize) -> BoundConstants {
    BoundConstants {
        w: system.coupling.frobenius_norm(),
        g: max_norm,
        lbar: bath.correlation_bound(2.0 * t_final),
        h_norm: system.hamiltonian.frobenius_norm(),
        gpp: f64::NAN,
        gppp: f64::NAN,
        mbar,
    }
}

/// Empirical `e(t)` against the Monte Carlo error envelope.
pub fn bounds_overlay(
    system: &SystemSpec,
    bath: &BathSpec,
    grid: &BoundsOverlayGrid,
    multiplier: f64,
    seed: u64,
) -> Result<BoundsOverlay> {
    grid.validate()?;
    let table = CorrelationTable::new(bath, 2.0 * grid.t_final)?;
    let n = steps_for(grid.t_final, grid.h)?;
    let cfg = SchemeConfig {
        ns: grid.ns,
        mbar: grid.mbar,
        guard: grid.guard,
        seed: inchworm_seed(seed, n, grid.ns, grid.mbar, Mode::MonteCarlo),
        ..SchemeConfig::new(n, grid.t_final)
    };
    let count = n_exp(multiplier, n, grid.ns);
    let stats = replicate_observable(system, &table, &cfg, count, false)?;
    stats.tally().check()?;
    let constants = measured_constants(system, bath, stats.max_norm, grid.t_final, grid.mbar);
    let points = stats
        .variance
        .iter()
        .enumerate()
        .map(|(j, &e)| {
            let span = 2.0 * stats.time(j);
            OverlayPoint {
                t: stats.time(j),
                span,
                e,
                log_envelope: log_error_envelope_mc(&constants, span, grid.h, grid.ns as f64),
            }
        })
        .collect();
    Ok(BoundsOverlay {
        constants,
        h: grid.h,
        ns: grid.ns,
        n_exp: count,
        diverged: stats.diverged,
        points,
    })
}

/// `(t, envelope, ln envelope)` on `0, dt, ..., t_max`.
pub fn envelope_table(c: &BoundConstants, t_max: f64, dt: f64, h: f64, ns: f64) -> Result<Vec<(f64, f64, f64)>> {
    if !(dt > 0.0 && t_max >= 0.0 && h > 0.0 && ns > 0.0) {
        return Err(Error::config("envelope grid needs dt, h, Ns > 0 and t_max >= 0"));
    }
    let steps = (t_max / dt + 1e-9).floor() as usize;
    Ok((0..=steps)
        .map(|k| {
            let t = k as f64 * dt;
            (t, error_envelope_mc(c, t, h, ns), log_error_envelope_mc(c, t, h, ns))
        })
        .collect())
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunReport {
    pub files: Vec<PathBuf>,
    pub divergences: DivergenceTally,
    pub clamped: usize,
    /// Human-readable lines for the console.
    pub summary: Vec<String>,
}

fn fmt_ci(ci: &Option<ConfidenceInterval>) -> String {
    match ci {
        Some(c) => format!("{:.3e} [{:.3e}, {:.3e}]", c.estimate, c.lo, c.hi),
        None => "n/a".into(),
    }
}

/// Runs the configured experiment and writes its CSVs and plot script to `out`.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path) -> Result<RunReport> {
    cfg.validate()?;
    std::fs::create_dir_all(out)?;
    let system = cfg.system.build()?;
    let bath = cfg.bath.build()?;
    let m = cfg.multiplier();
    let name = cfg.experiment.name();
    let mut report = RunReport::default();
    match cfg.experiment {
        ExperimentKind::OdeConvergence => {
            let table = ode_convergence(&cfg.grid()?, m, cfg.seed)?;
            report.files.extend(output::write_convergence(out, name, &table)?);
            report.summary.extend(output::convergence_lines(&table));
        }
        ExperimentKind::InchwormConvergence => {
            let table = inchworm_convergence(&system, &bath, &cfg.grid()?, m, cfg.seed)?;
            for r in &table.rows {
                report.divergences.add(r.diverged, r.n_exp);
            }
            report.files.extend(output::write_convergence(out, name, &table)?);
            report.summary.extend(output::convergence_lines(&table));
        }
        ExperimentKind::OdeErrorGrowth => {
            let curves = ode_error_growth(&cfg.grid()?, m, cfg.seed)?;
            report.files.extend(output::write_ode_growth(out, name, &curves)?);
            for c in &curves {
                report.summary.push(format!(
                    "K={} Ns={}: quadratic coefficient {}, log slope {:.4}",
                    c.k,
                    c.ns,
                    fmt_ci(&Some(c.quadratic)),
                    c.log_slope
                ));
            }
        }
        ExperimentKind::InchwormErrorGrowth => {
            let curves = inchworm_error_growth(&system, &bath, &cfg.grid()?, m, cfg.seed)?;
            for c in &curves {
                report.divergences.add(c.stats.diverged, c.stats.n_exp);
                report.clamped += c.stats.clamped;
                report.summary.push(format!(
                    "Mbar={} Ns={}: log e quadratic coefficient for t >= {}: {}",
                    c.mbar,
                    c.ns,
                    c.fit_from,
                    fmt_ci(&c.log_quadratic)
                ));
            }
            report.files.extend(output::write_inchworm_growth(out, name, &curves)?);
        }
        ExperimentKind::Observable => {
            let curves = observable_curves(&system, &bath, &cfg.grid()?, cfg.seed)?;
            for c in &curves {
                report.divergences.add(c.diverged, c.replications);
            }
            report.files.extend(output::write_observables(out, name, &curves)?);
        }
        ExperimentKind::BoundsOverlay => {
            let overlay = bounds_overlay(&system, &bath, &cfg.grid()?, m, cfg.seed)?;
            report.divergences.add(overlay.diverged, overlay.n_exp);
            let ok = overlay.points.iter().filter(|p| p.dominated()).count();
            report.summary.push(format!(
                "envelope dominates sqrt(e) at {ok} of {} times",
                overlay.points.len()
            ));
            report.files.extend(output::write_overlay(out, name, &overlay)?);
        }
    }
    if report.divergences.diverged > 0 {
        report.summary.push(format!(
            "{} of {} replications diverged",
            report.divergences.diverged, report.divergences.total
        ));
    }
    if report.clamped > 0 {
        report.summary.push(format!("{} negative variance estimates clamped to 0", report.clamped));
    }
    Ok(report)
}
