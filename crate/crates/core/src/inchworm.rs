//! Inchworm solvers for the two-time propagator of a two-level system
//! coupled to a harmonic bath.
//!
//! Each entry `G(n+1, m)` is produced by a Heun-type predictor/corrector
//! whose slopes are ordered-time integrals over previously computed
//! entries. The deterministic variant evaluates the first-order integral
//! by Gauss-Legendre quadrature; the Monte Carlo variant samples sorted
//! uniform times for every odd order up to `mbar`.

use rand::distr::Open01;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::algebra::{Mat2, C64, I, ZERO};
use crate::bath::{influence_points, Correlation, MAX_ORDER};
use crate::error::{Error, Result};
use crate::mesh::{computation_order, Coord, Entry, EntryKind, InterpKind, Mesh, Node, PropagatorGrid};
use crate::rng;

/// Default divergence guard on `‖G‖_F`.
pub const DEFAULT_GUARD: f64 = 10.0 * std::f64::consts::SQRT_2;

/// Hermiticity tolerance for the system Hamiltonian.
const HERMITIAN_TOL: f64 = 1e-14;

/// Widest quadrature panel; mesh cells are subdivided to at most this.
const QUAD_PANEL: f64 = 0.125;

/// Gauss-Legendre points per quadrature panel.
const QUAD_POINTS: usize = 10;

/// RNG stream tags for the two slope stages.
const STAGE_PREDICTOR: u64 = 1;
const STAGE_CORRECTOR: u64 = 2;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SystemSpec {
    pub hamiltonian: Mat2,
    pub coupling: Mat2,
    pub observable: Mat2,
    pub rho: Mat2,
}

impl SystemSpec {
    pub fn new(hamiltonian: Mat2, coupling: Mat2, observable: Mat2, rho: Mat2) -> Result<Self> {
        let all = [hamiltonian, coupling, observable, rho];
        if !all.iter().all(Mat2::is_finite) {
            return Err(Error::config("system matrices must be finite"));
        }
        if !hamiltonian.is_hermitian(HERMITIAN_TOL) {
            return Err(Error::config("Hamiltonian must be Hermitian"));
        }
        Ok(SystemSpec {
            hamiltonian,
            coupling,
            observable,
            rho,
        })
    }

    /// `H = εσz + Δσx`, `W = O = σz`, `ρ = diag(0, 1)`.
    pub fn spin_boson(epsilon: f64, delta: f64) -> Self {
        SystemSpec {
            hamiltonian: Mat2::sigma_z() * epsilon + Mat2::sigma_x() * delta,
            coupling: Mat2::sigma_z(),
            observable: Mat2::sigma_z(),
            rho: Mat2::real(0.0, 0.0, 0.0, 1.0),
        }
    }
}

impl Default for SystemSpec {
    fn default() -> Self {
        SystemSpec::spin_boson(1.0, 1.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Quadrature slopes, first order only.
    Deterministic,
    MonteCarlo,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SchemeConfig {
    /// Steps up to the observable time.
    pub n: usize,
    /// Observable time.
    pub t: f64,
    /// Samples per slope.
    pub ns: usize,
    /// Largest odd diagram order.
    pub mbar: usize,
    pub seed: u64,
    pub mode: Mode,
    /// Abort when any `‖G‖_F` exceeds this.
    pub guard: f64,
}

impl SchemeConfig {
    pub fn new(n: usize, t: f64) -> Self {
        SchemeConfig {
            n,
            t,
            ns: 1,
            mbar: 1,
            seed: 0,
            mode: Mode::MonteCarlo,
            guard: DEFAULT_GUARD,
        }
    }

    pub fn h(&self) -> f64 {
        self.t / self.n as f64
    }

    pub fn validate(&self) -> Result<()> {
        let mesh = Mesh::new(self.n, self.t)?;
        if mesh.h() > 1.0 {
            return Err(Error::config(format!("time step {} exceeds 1", mesh.h())));
        }
        if self.mbar % 2 == 0 || self.mbar > MAX_ORDER {
            return Err(Error::UnsupportedOrder(self.mbar));
        }
        if self.mode == Mode::Deterministic && self.mbar != 1 {
            return Err(Error::UnsupportedOrder(self.mbar));
        }
        if self.mode == Mode::MonteCarlo && self.ns == 0 {
            return Err(Error::config("sample count must be at least 1"));
        }
        if !(self.guard > 0.0) {
            return Err(Error::config("divergence guard must be positive"));
        }
        Ok(())
    }
}

/// Slopes and predictor of one step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepSlopes {
    pub k1: Mat2,
    pub k2: Mat2,
    pub predictor: Mat2,
}

/// `n` Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// The scheme bound to a system, a bath correlation and a configuration.
pub struct Inchworm<'a, B: Correlation + ?Sized> {
    system: SystemSpec,
    corr: &'a B,
    config: SchemeConfig,
    mesh: Mesh,
    /// `i H h`.
    ihh: Mat2,
    quad: (Vec<f64>, Vec<f64>),
}

impl<'a, B: Correlation + ?Sized> Inchworm<'a, B> {
    pub fn new(system: SystemSpec, corr: &'a B, config: SchemeConfig) -> Result<Self> {
        config.validate()?;
        let mesh = Mesh::new(config.n, config.t)?;
        Ok(Inchworm {
            system,
            corr,
            config,
            mesh,
            ihh: system.hamiltonian * (I * mesh.h()),
            quad: gauss_legendre(QUAD_POINTS),
        })
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn config(&self) -> &SchemeConfig {
        &self.config
    }

    pub fn system(&self) -> &SystemSpec {
        &self.system
    }

    /// Empty grid with boundary values only.
    pub fn empty_grid(&self) -> PropagatorGrid {
        PropagatorGrid::new(self.mesh, self.system.observable)
    }

    /// `i^{M+1} (-1)^{#{s ≤ t}} W I(up, s_M) W … W I(s_1, lo) 𝓛(t_up, s)`.
    fn integrand(&self, grid: &PropagatorGrid, kind: &InterpKind, up: Node, lo: Node, s: &[f64]) -> Result<Mat2> {
        let m = s.len();
        let t = self.mesh.t();
        let bath = influence_points(self.corr, self.mesh.time(up), s)?;
        if bath == ZERO {
            return Ok(Mat2::zero());
        }
        let below = s.iter().filter(|&&x| x <= t).count();
        let sign = if ((m + 1) / 2 + below) % 2 == 0 { 1.0 } else { -1.0 };
        let w = self.system.coupling;
        let mut prod = w * grid.interpolate(kind, Coord::Node(up), Coord::Time(s[m - 1]))?;
        for i in (1..m).rev() {
            prod = prod * w * grid.interpolate(kind, Coord::Time(s[i]), Coord::Time(s[i - 1]))?;
        }
        prod = prod * w * grid.interpolate(kind, Coord::Time(s[0]), Coord::Node(lo))?;
        Ok(prod * (bath * sign))
    }

    /// One Monte Carlo draw of the slope: every odd order up to `mbar`,
    /// each with its own sorted uniform times on `(t_lo, t_up)`.
    pub fn slope_sample<R: Rng + ?Sized>(
        &self,
        grid: &PropagatorGrid,
        kind: &InterpKind,
        up: Node,
        lo: Node,
        rng: &mut R,
    ) -> Result<Mat2> {
        let t_lo = self.mesh.time(lo);
        let span = self.mesh.time(up) - t_lo;
        if span <= 0.0 {
            return Ok(Mat2::zero());
        }
        let mut total = Mat2::zero();
        let mut volume = 1.0;
        let mut buf = [0.0; MAX_ORDER];
        for m in 1..=self.config.mbar {
            volume *= span / m as f64;
            if m % 2 == 0 {
                continue;
            }
            let s = &mut buf[..m];
            for v in s.iter_mut() {
                let u: f64 = rng.sample(Open01);
                *v = t_lo + span * u;
            }
            s.sort_unstable_by(f64::total_cmp);
            total += self.integrand(grid, kind, up, lo, s)? * volume;
        }
        Ok(total * self.mesh.sign(up))
    }

    /// Average of `ns` independent draws of [`slope_sample`](Self::slope_sample).
    pub fn slope_mc<R: Rng + ?Sized>(
        &self,
        grid: &PropagatorGrid,
        kind: &InterpKind,
        up: Node,
        lo: Node,
        ns: usize,
        rng: &mut R,
    ) -> Result<Mat2> {
        let mut sum = Mat2::zero();
        for _ in 0..ns {
            sum += self.slope_sample(grid, kind, up, lo, rng)?;
        }
        Ok(sum * (1.0 / ns as f64))
    }

    /// First-order slope by composite Gauss-Legendre quadrature, split at
    /// every mesh line.
    pub fn slope_quadrature(&self, grid: &PropagatorGrid, kind: &InterpKind, up: Node, lo: Node) -> Result<Mat2> {
        if self.config.mbar != 1 {
            return Err(Error::UnsupportedOrder(self.config.mbar));
        }
        let (l0, l1) = (self.mesh.line(lo), self.mesh.line(up));
        let h = self.mesh.h();
        let panels = (h / QUAD_PANEL).ceil().max(1.0) as usize;
        let width = h / panels as f64;
        let (nodes, weights) = &self.quad;
        let mut total = Mat2::zero();
        for cell in l0..l1 {
            for p in 0..panels {
                let a = cell as f64 * h + p as f64 * width;
                for (x, w) in nodes.iter().zip(weights) {
                    let s = a + 0.5 * width * (x + 1.0);
                    total += self.integrand(grid, kind, up, lo, &[s])? * (0.5 * width * w);
                }
            }
        }
        Ok(total * self.mesh.sign(up))
    }

    fn slope<R: Rng + ?Sized>(
        &self,
        grid: &PropagatorGrid,
        kind: &InterpKind,
        up: Node,
        lo: Node,
        rng: &mut R,
    ) -> Result<Mat2> {
        match self.config.mode {
            Mode::Deterministic => self.slope_quadrature(grid, kind, up, lo),
            Mode::MonteCarlo => self.slope_mc(grid, kind, up, lo, self.config.ns, rng),
        }
    }

    fn check_step(&self, row: Node, col: Node, from: Node) -> Result<()> {
        let ok = from != Node::Minus
            && row != Node::Plus
            && self.mesh.line(row) == self.mesh.line(from) + 1
            && self.mesh.index(from) >= self.mesh.index(col);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidStep { row, col, from })
        }
    }

    /// Stream for one slope stage of one entry.
    pub fn stage_stream(&self, replication: u64, row: Node, col: Node, stage: u64) -> rng::McRng {
        let path = [replication, self.mesh.index(row) as u64, self.mesh.index(col) as u64, stage];
        rng::stream(self.config.seed, &path)
    }

    /// Predictor/corrector update of `(row, col)` from `(from, col)`.
    pub fn step_with<R: Rng + ?Sized>(
        &self,
        grid: &PropagatorGrid,
        row: Node,
        col: Node,
        from: Node,
        rng1: &mut R,
        rng2: &mut R,
    ) -> Result<(Mat2, StepSlopes)> {
        self.check_step(row, col, from)?;
        let g = grid.get(from, col)?;
        let h = self.mesh.h();
        let s_n = self.mesh.sign(from);
        let s_next = self.mesh.sign(row);
        let id = Mat2::identity();
        let k1 = self.slope(grid, &InterpKind::Standard, from, col, rng1)?;
        let predictor = (id + self.ihh * s_n) * g + k1 * h;
        let starred = InterpKind::Starred { row, col, value: predictor };
        let k2 = self.slope(grid, &starred, row, col, rng2)?;
        let value =
            (id + self.ihh * (0.5 * s_n)) * g + self.ihh * (0.5 * s_next) * predictor + (k1 + k2) * (0.5 * h);
        Ok((value, StepSlopes { k1, k2, predictor }))
    }

    /// One step with the replication's stage-tagged streams.
    pub fn step(&self, grid: &PropagatorGrid, entry: &Entry, replication: u64) -> Result<(Mat2, StepSlopes)> {
        let EntryKind::Step { from } = entry.kind else {
            return Err(Error::InvalidStep {
                row: entry.row,
                col: entry.col,
                from: entry.row,
            });
        };
        let mut rng1 = self.stage_stream(replication, entry.row, entry.col, STAGE_PREDICTOR);
        let mut rng2 = self.stage_stream(replication, entry.row, entry.col, STAGE_CORRECTOR);
        self.step_with(grid, entry.row, entry.col, from, &mut rng1, &mut rng2)
    }

    /// Fill the whole grid. Replication `r` draws from streams keyed by
    /// `(seed, r, row, col, stage)`.
    pub fn solve(&self, replication: u64) -> Result<PropagatorGrid> {
        let mut grid = self.empty_grid();
        for entry in computation_order(self.mesh.n()) {
            let value = match entry.kind {
                EntryKind::Step { .. } => {
                    let (value, _) = self.step(&grid, &entry, replication)?;
                    grid.set(entry.row, entry.col, value);
                    value
                }
                EntryKind::JumpRow | EntryKind::JumpCol => grid.apply_jump(&entry)?,
            };
            let norm = value.frobenius_norm();
            if !(norm <= self.config.guard) {
                return Err(Error::Divergence {
                    location: format!("G({}, {})", entry.row, entry.col),
                    norm,
                });
            }
        }
        Ok(grid)
    }
}

/// Solve one replication.
pub fn solve_grid<B: Correlation + ?Sized>(
    system: &SystemSpec,
    corr: &B,
    config: &SchemeConfig,
    replication: u64,
) -> Result<PropagatorGrid> {
    Inchworm::new(*system, corr, *config)?.solve(replication)
}

/// Row and column of the observable at `t_j = j h`: `(N+j, N-j)`, with the
/// split pair `(N⁺, N⁻)` for `j = 0`.
pub fn observable_nodes(mesh: &Mesh, j: usize) -> Result<(Node, Node)> {
    let n = mesh.n();
    match j {
        0 => Ok((Node::Plus, Node::Minus)),
        j if j <= n => Ok((Node::Regular(n + j), Node::Regular(n - j))),
        _ => Err(Error::config(format!("observable index {j} exceeds N = {n}"))),
    }
}

/// `⟨σz(jh)⟩ ≈ G(N+j, N-j)` entry `(1, 1)`.
pub fn observable_trace(grid: &PropagatorGrid, j: usize) -> Result<C64> {
    let (row, col) = observable_nodes(grid.mesh(), j)?;
    Ok(grid.get(row, col)?.a11)
}

/// Observable for every `j = 0..=N`.
pub fn observable_curve(grid: &PropagatorGrid) -> Result<Vec<C64>> {
    (0..=grid.mesh().n()).map(|j| observable_trace(grid, j)).collect()
}

/// Exact propagator without bath coupling: backward evolution below `t`,
/// forward above, and `O_s` inserted where the interval crosses `t`.
pub fn free_propagator(system: &SystemSpec, mesh: &Mesh, row: Node, col: Node) -> Mat2 {
    let h = &system.hamiltonian;
    let evolve = |dt: f64| (*h * (I * dt)).exp();
    let (tr, tc, t) = (mesh.time(row), mesh.time(col), mesh.t());
    let split = mesh.index(Node::Minus);
    match (mesh.index(row) > split, mesh.index(col) > split) {
        (false, _) => evolve(-(tr - tc)),
        (true, true) => evolve(tr - tc),
        (true, false) => evolve(tr - t) * system.observable * evolve(-(t - tc)),
    }
}

/// Grid filled with [`free_propagator`].
pub fn free_grid(system: &SystemSpec, mesh: Mesh) -> PropagatorGrid {
    let mut grid = PropagatorGrid::new(mesh, system.observable);
    for row in mesh.nodes() {
        for col in mesh.nodes().take_while(|c| mesh.index(*c) <= mesh.index(row)) {
            grid.set(row, col, free_propagator(system, &mesh, row, col));
        }
    }
    grid
}

/// Largest `‖G - G_free‖_F` over the grid.
pub fn max_free_error(system: &SystemSpec, grid: &PropagatorGrid) -> Result<f64> {
    let mesh = *grid.mesh();
    let mut worst = 0.0f64;
    for row in mesh.nodes() {
        for col in mesh.nodes().take_while(|c| mesh.index(*c) <= mesh.index(row)) {
            let diff = grid.get(row, col)? - free_propagator(system, &mesh, row, col);
            worst = worst.max(diff.frobenius_norm());
        }
    }
    Ok(worst)
}
