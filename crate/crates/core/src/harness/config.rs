//! JSON experiment configuration.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::bath::{build_bath, BathSpec};
use crate::error::{Error, Result};
use crate::inchworm::{Mode, SystemSpec, DEFAULT_GUARD};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    OdeConvergence,
    OdeErrorGrowth,
    InchwormConvergence,
    InchwormErrorGrowth,
    Observable,
    BoundsOverlay,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::OdeConvergence => "ode_convergence",
            ExperimentKind::OdeErrorGrowth => "ode_error_growth",
            ExperimentKind::InchwormConvergence => "inchworm_convergence",
            ExperimentKind::InchwormErrorGrowth => "inchworm_error_growth",
            ExperimentKind::Observable => "observable",
            ExperimentKind::BoundsOverlay => "bounds_overlay",
        }
    }

    /// Default `m_exp` in `N_exp = m_exp·N·Ns`.
    pub fn default_multiplier(self) -> f64 {
        match self {
            ExperimentKind::OdeConvergence | ExperimentKind::OdeErrorGrowth => 100.0,
            ExperimentKind::InchwormConvergence => 1000.0,
            ExperimentKind::InchwormErrorGrowth | ExperimentKind::BoundsOverlay => 700.0,
            ExperimentKind::Observable => 0.0,
        }
    }
}

/// Spin-boson system `H = εσz + Δσx`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemBlock {
    pub epsilon: f64,
    pub delta: f64,
}

impl Default for SystemBlock {
    fn default() -> Self {
        SystemBlock { epsilon: 1.0, delta: 1.0 }
    }
}

impl SystemBlock {
    pub fn build(&self) -> Result<SystemSpec> {
        let s = SystemSpec::spin_boson(self.epsilon, self.delta);
        SystemSpec::new(s.hamiltonian, s.coupling, s.observable, s.rho)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BathBlock {
    pub l_modes: usize,
    pub xi: f64,
    pub omega_c: f64,
    pub omega_max: f64,
    pub beta: f64,
}

impl Default for BathBlock {
    fn default() -> Self {
        let b = BathSpec::default();
        BathBlock {
            l_modes: b.l_modes,
            xi: b.xi,
            omega_c: b.omega_c,
            omega_max: b.omega_max,
            beta: b.beta,
        }
    }
}

impl BathBlock {
    pub fn build(&self) -> Result<BathSpec> {
        build_bath(self.l_modes, self.xi, self.omega_c, self.omega_max, self.beta)
    }
}

/// Top-level experiment file. `grid` is read according to `experiment`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub system: SystemBlock,
    #[serde(default)]
    pub bath: BathBlock,
    #[serde(default)]
    pub grid: serde_json::Value,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub n_exp_multiplier: Option<f64>,
}

/// `system` and `bath` blocks alone, for single solves.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default)]
    pub system: SystemBlock,
    #[serde(default)]
    pub bath: BathBlock,
}

impl ModelConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

impl ExperimentConfig {
    /// Defaults for every block.
    pub fn new(experiment: ExperimentKind) -> Self {
        ExperimentConfig {
            experiment,
            system: SystemBlock::default(),
            bath: BathBlock::default(),
            grid: serde_json::Value::Null,
            seed: 0,
            n_exp_multiplier: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn multiplier(&self) -> f64 {
        self.n_exp_multiplier.unwrap_or(self.experiment.default_multiplier())
    }

    /// Parses `grid`, falling back to `T::default()` when absent.
    pub fn grid<T: DeserializeOwned + Default>(&self) -> Result<T> {
        if self.grid.is_null() {
            return Ok(T::default());
        }
        Ok(serde_json::from_value(self.grid.clone())?)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(m) = self.n_exp_multiplier {
            if !(m >= 0.0 && m.is_finite()) {
                return Err(Error::config("n_exp_multiplier must be finite and non-negative"));
            }
        }
        self.system.build()?;
        self.bath.build()?;
        match self.experiment {
            ExperimentKind::OdeConvergence => self.grid::<OdeConvergenceGrid>()?.validate(),
            ExperimentKind::OdeErrorGrowth => self.grid::<OdeErrorGrowthGrid>()?.validate(),
            ExperimentKind::InchwormConvergence => self.grid::<InchwormConvergenceGrid>()?.validate(),
            ExperimentKind::InchwormErrorGrowth => self.grid::<InchwormErrorGrowthGrid>()?.validate(),
            ExperimentKind::Observable => self.grid::<ObservableGrid>()?.validate(),
            ExperimentKind::BoundsOverlay => self.grid::<BoundsOverlayGrid>()?.validate(),
        }
    }
}

/// `N_exp = max(2, round(m·N·Ns))`.
pub fn n_exp(multiplier: f64, n: usize, ns: usize) -> usize {
    ((multiplier * n as f64 * ns as f64).round() as usize).max(2)
}

fn check_h(h: f64) -> Result<()> {
    if h > 0.0 && h <= 1.0 && h.is_finite() {
        Ok(())
    } else {
        Err(Error::config(format!("time step {h} must lie in (0, 1]")))
    }
}

fn check_ns(ns: usize) -> Result<()> {
    if ns == 0 {
        return Err(Error::config("sample count must be at least 1"));
    }
    Ok(())
}

fn check_steps(t: f64, h: f64) -> Result<usize> {
    check_h(h)?;
    crate::ode_mc::steps_for(t, h)
}

fn check_times(times: &[f64], t_final: f64, h: f64) -> Result<()> {
    for &t in times {
        if !(t > 0.0 && t <= t_final + 1e-12) {
            return Err(Error::config(format!("report time {t} outside (0, {t_final}]")));
        }
        check_steps(t, h)?;
    }
    Ok(())
}

fn check_mbar(mbar: usize) -> Result<()> {
    if mbar == 1 || mbar == 3 {
        Ok(())
    } else {
        Err(Error::UnsupportedOrder(mbar))
    }
}

/// Step sizes at a fixed sample count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HSweep {
    pub ns: usize,
    pub h: Vec<f64>,
}

/// Sample counts at a fixed step size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NsSweep {
    pub h: f64,
    pub ns: Vec<usize>,
}

impl HSweep {
    fn validate(&self, t_final: f64, times: &[f64]) -> Result<()> {
        check_ns(self.ns)?;
        for &h in &self.h {
            check_steps(t_final, h)?;
            check_times(times, t_final, h)?;
        }
        Ok(())
    }
}

impl NsSweep {
    fn validate(&self, t_final: f64, times: &[f64]) -> Result<()> {
        check_steps(t_final, self.h)?;
        check_times(times, t_final, self.h)?;
        self.ns.iter().try_for_each(|&n| check_ns(n))
    }
}

fn inverse_powers(from: u32, to: u32) -> Vec<f64> {
    (from..=to).map(|k| 1.0 / f64::from(1u32 << k)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OdeConvergenceGrid {
    pub k: f64,
    pub t_final: f64,
    pub report_times: Vec<f64>,
    pub h_sweep: Option<HSweep>,
    pub ns_sweep: Option<NsSweep>,
}

impl Default for OdeConvergenceGrid {
    fn default() -> Self {
        OdeConvergenceGrid {
            k: 1.0,
            t_final: 1.0,
            report_times: vec![0.5, 1.0],
            h_sweep: Some(HSweep { ns: 100, h: inverse_powers(1, 6) }),
            ns_sweep: Some(NsSweep {
                h: 0.25,
                ns: vec![100, 200, 400, 800, 1600, 3200],
            }),
        }
    }
}

impl OdeConvergenceGrid {
    pub fn validate(&self) -> Result<()> {
        if !(self.k > 0.0 && self.k.is_finite()) {
            return Err(Error::config("K must be positive"));
        }
        if let Some(s) = &self.h_sweep {
            s.validate(self.t_final, &self.report_times)?;
        }
        if let Some(s) = &self.ns_sweep {
            s.validate(self.t_final, &self.report_times)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OdeErrorGrowthGrid {
    pub k: Vec<f64>,
    pub t_final: f64,
    pub h: f64,
    pub ns: Vec<usize>,
    pub bootstrap: usize,
}

impl Default for OdeErrorGrowthGrid {
    fn default() -> Self {
        OdeErrorGrowthGrid {
            k: vec![3.0, 10.0],
            t_final: 3.0,
            h: 0.25,
            ns: vec![1, 10, 100],
            bootstrap: 200,
        }
    }
}

impl OdeErrorGrowthGrid {
    pub fn validate(&self) -> Result<()> {
        if self.k.iter().any(|k| !(*k > 0.0 && k.is_finite())) {
            return Err(Error::config("K must be positive"));
        }
        check_steps(self.t_final, self.h)?;
        self.ns.iter().try_for_each(|&n| check_ns(n))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InchwormConvergenceGrid {
    pub t_final: f64,
    pub report_times: Vec<f64>,
    pub mbar: usize,
    pub guard: f64,
    pub h_sweep: Option<HSweep>,
    pub ns_sweep: Option<NsSweep>,
}

impl Default for InchwormConvergenceGrid {
    fn default() -> Self {
        InchwormConvergenceGrid {
            t_final: 1.0,
            report_times: vec![0.5, 1.0],
            mbar: 1,
            guard: DEFAULT_GUARD,
            h_sweep: Some(HSweep {
                ns: 2,
                h: (5..=10).map(|k| 1.0 / (2 * k) as f64).collect(),
            }),
            ns_sweep: Some(NsSweep {
                h: 0.25,
                ns: vec![1, 2, 4, 8, 16, 32],
            }),
        }
    }
}

impl InchwormConvergenceGrid {
    pub fn validate(&self) -> Result<()> {
        check_mbar(self.mbar)?;
        if let Some(s) = &self.h_sweep {
            s.validate(self.t_final, &self.report_times)?;
        }
        if let Some(s) = &self.ns_sweep {
            s.validate(self.t_final, &self.report_times)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InchwormErrorGrowthGrid {
    pub t_final: f64,
    pub h: f64,
    pub ns: Vec<usize>,
    pub mbar: Vec<usize>,
    /// Start of the curvature fit window, one per `mbar` entry.
    pub fit_from: Vec<f64>,
    pub bootstrap: usize,
    pub guard: f64,
}

impl Default for InchwormErrorGrowthGrid {
    fn default() -> Self {
        InchwormErrorGrowthGrid {
            t_final: 6.0,
            h: 0.125,
            ns: vec![4, 8],
            mbar: vec![1, 3],
            fit_from: vec![4.5, 2.5],
            bootstrap: 200,
            guard: DEFAULT_GUARD,
        }
    }
}

impl InchwormErrorGrowthGrid {
    pub fn validate(&self) -> Result<()> {
        check_steps(self.t_final, self.h)?;
        self.ns.iter().try_for_each(|&n| check_ns(n))?;
        self.mbar.iter().try_for_each(|&m| check_mbar(m))?;
        if self.fit_from.len() != self.mbar.len() {
            return Err(Error::config("fit_from needs one entry per mbar"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservableRun {
    pub mbar: usize,
    pub ns: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObservableGrid {
    pub t_final: f64,
    pub h: f64,
    pub mode: Mode,
    pub runs: Vec<ObservableRun>,
    /// Independent solves averaged per run.
    pub replications: usize,
    pub guard: f64,
}

impl Default for ObservableGrid {
    fn default() -> Self {
        ObservableGrid {
            t_final: 5.0,
            h: 0.125,
            mode: Mode::MonteCarlo,
            runs: vec![
                ObservableRun { mbar: 1, ns: 10_000 },
                ObservableRun { mbar: 3, ns: 100_000 },
            ],
            replications: 1,
            guard: DEFAULT_GUARD,
        }
    }
}

impl ObservableGrid {
    pub fn validate(&self) -> Result<()> {
        check_steps(self.t_final, self.h)?;
        if self.replications == 0 {
            return Err(Error::config("need at least one replication"));
        }
        for r in &self.runs {
            check_mbar(r.mbar)?;
            check_ns(r.ns)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundsOverlayGrid {
    pub t_final: f64,
    pub h: f64,
    pub ns: usize,
    pub mbar: usize,
    pub guard: f64,
}

impl Default for BoundsOverlayGrid {
    fn default() -> Self {
        BoundsOverlayGrid {
            t_final: 3.0,
            h: 0.125,
            ns: 4,
            mbar: 1,
            guard: DEFAULT_GUARD,
        }
    }
}

impl BoundsOverlayGrid {
    pub fn validate(&self) -> Result<()> {
        check_steps(self.t_final, self.h)?;
        check_ns(self.ns)?;
        check_mbar(self.mbar)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_reference_grids() {
        let ode = OdeConvergenceGrid::default();
        assert_eq!(ode.h_sweep.as_ref().unwrap().h, vec![0.5, 0.25, 0.125, 0.0625, 0.03125, 0.015625]);
        let iw = InchwormConvergenceGrid::default();
        let hs = &iw.h_sweep.as_ref().unwrap().h;
        assert_eq!(hs.len(), 6);
        assert_eq!(hs[0], 0.1);
        assert_eq!(hs[5], 0.05);
        assert!(ode.validate().is_ok() && iw.validate().is_ok());
    }

    #[test]
    fn parses_minimal_and_full_files() {
        let cfg = ExperimentConfig::from_json(r#"{"experiment": "ode_convergence"}"#).unwrap();
        assert_eq!(cfg.multiplier(), 100.0);
        assert_eq!(cfg.grid::<OdeConvergenceGrid>().unwrap(), OdeConvergenceGrid::default());

        let text = r#"{
            "experiment": "inchworm_convergence",
            "system": {"epsilon": 1.0, "delta": 0.5},
            "bath": {"xi": 0.3},
            "grid": {"h_sweep": {"ns": 2, "h": [0.25, 0.125]}, "ns_sweep": null},
            "seed": 9,
            "n_exp_multiplier": 10
        }"#;
        let cfg = ExperimentConfig::from_json(text).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.bath.xi, 0.3);
        assert_eq!(cfg.bath.l_modes, 200);
        let g: InchwormConvergenceGrid = cfg.grid().unwrap();
        assert!(g.ns_sweep.is_none());
        assert_eq!(g.report_times, vec![0.5, 1.0]);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::from_json(r#"{"experiment": "observable", "sed": 1}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"experiment": "observable", "bath": {"x1": 0.2}}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"experiment": "observable", "grid": {"hh": 0.5}}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"experiment": "nope"}"#).is_err());
    }

    #[test]
    fn invalid_grids_are_rejected() {
        let bad = [
            r#"{"experiment": "ode_convergence", "grid": {"h_sweep": {"ns": 0, "h": [0.5]}}}"#,
            r#"{"experiment": "ode_convergence", "grid": {"h_sweep": {"ns": 1, "h": [0.3]}}}"#,
            r#"{"experiment": "inchworm_error_growth", "grid": {"mbar": [2], "fit_from": [1.0]}}"#,
            r#"{"experiment": "bounds_overlay", "grid": {"h": 2.0, "t_final": 4.0}}"#,
            r#"{"experiment": "observable", "n_exp_multiplier": -1}"#,
            r#"{"experiment": "observable", "bath": {"beta": 0}}"#,
        ];
        for text in bad {
            assert!(ExperimentConfig::from_json(text).is_err(), "{text}");
        }
    }

    #[test]
    fn replication_count_policy() {
        assert_eq!(n_exp(100.0, 4, 100), 40_000);
        assert_eq!(n_exp(0.0, 4, 1), 2);
        assert_eq!(n_exp(0.5, 3, 1), 2);
    }
}
