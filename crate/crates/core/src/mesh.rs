//! Triangular time mesh on `0 ≤ s_lo ≤ s_up ≤ 2t` with the observable
//! time `t` split into two nodes, and piecewise-linear interpolation of
//! propagators stored on it.
//!
//! Node labels are ordered `0 < 1 < … < N-1 < N⁻ < N⁺ < N+1 < … < 2N` and
//! occupy the dense indices `0..=2N+1`. Every mesh square
//! `[t_j, t_{j+1}] × [t_k, t_{k+1}]` is cut along the direction of the main
//! diagonal into a lower triangle `(j,k), (j+1,k), (j+1,k+1)` and an upper
//! triangle `(j,k), (j,k+1), (j+1,k+1)`.

use std::fmt;
use std::io::{BufRead, Write};

use crate::algebra::{Mat2, C64};
use crate::error::{Error, Result};

/// Tolerance, in units of `h`, for snapping a time onto a mesh line.
const LINE_SNAP: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Node {
    /// `t_j = j h` with `j ≠ N`.
    Regular(usize),
    /// Left limit `t⁻`.
    Minus,
    /// Right limit `t⁺`.
    Plus,
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Regular(j) => write!(f, "{j}"),
            Node::Minus => f.write_str("N-"),
            Node::Plus => f.write_str("N+"),
        }
    }
}

/// `sgn(s - t)` for a plain time. Exactly `s = t` is ambiguous.
pub fn sign_at(s: f64, t: f64) -> Result<f64> {
    if s < t {
        Ok(-1.0)
    } else if s > t {
        Ok(1.0)
    } else {
        Err(Error::AmbiguousSign(t))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mesh {
    n: usize,
    h: f64,
}

impl Mesh {
    /// `n` steps up to the observable time `t`, so `h = t / n`.
    pub fn new(n: usize, t: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::config("mesh needs N ≥ 1"));
        }
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::config(format!("observable time must be positive, got {t}")));
        }
        Ok(Mesh { n, h: t / n as f64 })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn t(&self) -> f64 {
        self.n as f64 * self.h
    }

    pub fn node_count(&self) -> usize {
        2 * self.n + 2
    }

    pub fn index(&self, node: Node) -> usize {
        match node {
            Node::Regular(j) => {
                debug_assert!(j != self.n && j <= 2 * self.n, "invalid regular node {j}");
                if j < self.n {
                    j
                } else {
                    j + 1
                }
            }
            Node::Minus => self.n,
            Node::Plus => self.n + 1,
        }
    }

    pub fn node(&self, index: usize) -> Node {
        use std::cmp::Ordering::*;
        match index.cmp(&self.n) {
            Less => Node::Regular(index),
            Equal => Node::Minus,
            Greater if index == self.n + 1 => Node::Plus,
            Greater => Node::Regular(index - 1),
        }
    }

    /// Mesh line (multiple of `h`) a node sits on.
    pub fn line(&self, node: Node) -> usize {
        match node {
            Node::Regular(j) => j,
            Node::Minus | Node::Plus => self.n,
        }
    }

    pub fn time(&self, node: Node) -> f64 {
        self.line(node) as f64 * self.h
    }

    /// `sgn(t_node - t)` with the split-node convention `N⁻ → -1`, `N⁺ → +1`.
    pub fn sign(&self, node: Node) -> f64 {
        if self.index(node) <= self.n {
            -1.0
        } else {
            1.0
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = Node> + '_ {
        (0..self.node_count()).map(|i| self.node(i))
    }

    /// Node on mesh line `line` as seen from the cell `cell` (`cell` is
    /// `line - 1` or `line`).
    fn corner(&self, line: usize, cell: usize) -> Node {
        if line != self.n {
            Node::Regular(line)
        } else if cell < self.n {
            Node::Minus
        } else {
            Node::Plus
        }
    }

    /// Cell index and barycentric fraction of a coordinate.
    fn locate(&self, c: Coord) -> (usize, f64) {
        let n = self.n;
        let last = 2 * n - 1;
        match c {
            Coord::Node(Node::Minus) => (n - 1, 1.0),
            Coord::Node(Node::Plus) => (n, 0.0),
            Coord::Node(Node::Regular(0)) => (0, 0.0),
            Coord::Node(Node::Regular(j)) => (j - 1, 1.0),
            Coord::Time(s) => {
                let below = s <= self.t();
                let u = s / self.h;
                let r = u.round();
                let (cell, frac) = if (u - r).abs() <= LINE_SNAP * r.max(1.0) {
                    let r = r as usize;
                    if r == n {
                        if below {
                            (n - 1, 1.0)
                        } else {
                            (n, 0.0)
                        }
                    } else if r == 0 {
                        (0, 0.0)
                    } else {
                        (r - 1, 1.0)
                    }
                } else {
                    let j = u.floor().max(0.0) as usize;
                    (j, u - j as f64)
                };
                if cell > last {
                    (last, 1.0)
                } else if below && cell >= n {
                    (n - 1, 1.0)
                } else if !below && cell < n {
                    (n, 0.0)
                } else {
                    (cell, frac.clamp(0.0, 1.0))
                }
            }
        }
    }
}

/// A point on one time axis of the mesh: an exact node or a plain time.
///
/// A plain time equal to `t` resolves to the left limit `N⁻`; one exactly
/// on another mesh line is interpolated from the cell below it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Coord {
    Node(Node),
    Time(f64),
}

/// How a step's target entry is produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EntryKind {
    /// Time step from `(from, col)` to `(row, col)`.
    Step { from: Node },
    /// `G(N⁺, k) = O_s G(N⁻, k)`.
    JumpRow,
    /// `G(j, N⁻) = G(j, N⁺) O_s`.
    JumpCol,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Entry {
    pub row: Node,
    pub col: Node,
    pub kind: EntryKind,
}

/// Order in which every off-diagonal entry is computed.
///
/// Entries are grouped by anti-diagonals `t_row - t_col = d·h` for
/// `d = 1..=2N`, columns ascending within each group. Any entry depends
/// only on entries inside its own sub-triangle with strictly smaller
/// time difference, or on the step emitted immediately before it (jumps).
pub fn computation_order(n: usize) -> Vec<Entry> {
    let mut order = Vec::with_capacity(n * (2 * n + 1) + 2 * n);
    let prev_row = |r: usize| -> Node {
        match r - 1 {
            p if p == n => Node::Plus,
            p => Node::Regular(p),
        }
    };
    for d in 1..=2 * n {
        for col_line in 0..=(2 * n - d) {
            let row_line = col_line + d;
            if col_line < n {
                let col = Node::Regular(col_line);
                if row_line == n {
                    order.push(Entry {
                        row: Node::Minus,
                        col,
                        kind: EntryKind::Step { from: Node::Regular(n - 1) },
                    });
                    order.push(Entry { row: Node::Plus, col, kind: EntryKind::JumpRow });
                } else {
                    order.push(Entry {
                        row: Node::Regular(row_line),
                        col,
                        kind: EntryKind::Step { from: prev_row(row_line) },
                    });
                }
            } else if col_line == n {
                let row = Node::Regular(row_line);
                order.push(Entry {
                    row,
                    col: Node::Plus,
                    kind: EntryKind::Step { from: prev_row(row_line) },
                });
                order.push(Entry { row, col: Node::Minus, kind: EntryKind::JumpCol });
            } else {
                order.push(Entry {
                    row: Node::Regular(row_line),
                    col: Node::Regular(col_line),
                    kind: EntryKind::Step { from: prev_row(row_line) },
                });
            }
        }
    }
    order
}

/// Which values the interpolant sees.
#[derive(Clone, Copy, Debug)]
pub enum InterpKind {
    Standard,
    /// As `Standard`, except `(row, col)` takes the provisional `value`.
    Starred { row: Node, col: Node, value: Mat2 },
}

/// Dense lower-triangular table of propagators `G(row, col)`.
#[derive(Clone, Debug)]
pub struct PropagatorGrid {
    mesh: Mesh,
    observable: Mat2,
    values: Vec<Mat2>,
    filled: Vec<bool>,
}

impl PropagatorGrid {
    /// Fresh grid holding only the boundary values: identity on the
    /// diagonal and `G(N⁺, N⁻) = O_s`.
    pub fn new(mesh: Mesh, observable: Mat2) -> Self {
        let p = mesh.node_count();
        let len = p * (p + 1) / 2;
        let mut grid = PropagatorGrid {
            mesh,
            observable,
            values: vec![Mat2::zero(); len],
            filled: vec![false; len],
        };
        for node in mesh.nodes() {
            grid.set(node, node, Mat2::identity());
        }
        grid.set(Node::Plus, Node::Minus, observable);
        grid
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn observable(&self) -> Mat2 {
        self.observable
    }

    #[inline]
    fn slot(&self, row: Node, col: Node) -> Option<usize> {
        let r = self.mesh.index(row);
        let c = self.mesh.index(col);
        (r >= c).then(|| r * (r + 1) / 2 + c)
    }

    #[inline]
    pub fn get(&self, row: Node, col: Node) -> Result<Mat2> {
        match self.slot(row, col) {
            Some(i) if self.filled[i] => Ok(self.values[i]),
            _ => Err(Error::MissingNode { row, col }),
        }
    }

    pub fn is_filled(&self, row: Node, col: Node) -> bool {
        self.slot(row, col).is_some_and(|i| self.filled[i])
    }

    /// Store a value. Panics if `row` precedes `col`.
    pub fn set(&mut self, row: Node, col: Node, value: Mat2) {
        let i = self
            .slot(row, col)
            .unwrap_or_else(|| panic!("({row}, {col}) is outside the triangle"));
        self.values[i] = value;
        self.filled[i] = true;
    }

    /// Fill a derived jump entry from its already-stored partner.
    pub fn apply_jump(&mut self, entry: &Entry) -> Result<Mat2> {
        let value = match entry.kind {
            EntryKind::JumpRow => self.observable * self.get(Node::Minus, entry.col)?,
            EntryKind::JumpCol => self.get(entry.row, Node::Plus)? * self.observable,
            EntryKind::Step { .. } => unreachable!("steps are computed by the solver"),
        };
        self.set(entry.row, entry.col, value);
        Ok(value)
    }

    /// Largest deviation from the jump relations over all stored pairs.
    pub fn jump_defect(&self) -> f64 {
        let n = self.mesh.n;
        let mut worst = 0.0f64;
        for k in 0..n {
            let k = Node::Regular(k);
            if let (Ok(plus), Ok(minus)) = (self.get(Node::Plus, k), self.get(Node::Minus, k)) {
                worst = worst.max((plus - self.observable * minus).frobenius_norm());
            }
        }
        for j in n + 1..=2 * n {
            let j = Node::Regular(j);
            if let (Ok(minus), Ok(plus)) = (self.get(j, Node::Minus), self.get(j, Node::Plus)) {
                worst = worst.max((minus - plus * self.observable).frobenius_norm());
            }
        }
        worst
    }

    pub fn max_norm(&self) -> f64 {
        self.values
            .iter()
            .zip(&self.filled)
            .filter(|(_, &f)| f)
            .map(|(v, _)| v.frobenius_norm())
            .fold(0.0, f64::max)
    }

    #[inline]
    fn lookup(&self, kind: &InterpKind, row: Node, col: Node) -> Result<Mat2> {
        if let InterpKind::Starred { row: r, col: c, value } = *kind {
            if r == row && c == col {
                return Ok(value);
            }
        }
        self.get(row, col)
    }

    /// Piecewise-linear interpolant `I_h G(s_up, s_lo)` (or `I*_h` for a
    /// starred kind). Reproduces stored values exactly at nodes.
    pub fn interpolate(&self, kind: &InterpKind, up: Coord, lo: Coord) -> Result<Mat2> {
        let m = &self.mesh;
        let (j, x) = m.locate(up);
        let (k, mut y) = m.locate(lo);
        if j < k {
            // s_lo rounded past s_up: the two times coincide
            return Ok(Mat2::identity());
        }
        if j == k && y > x {
            y = x;
        }
        let r0 = m.corner(j, j);
        let r1 = m.corner(j + 1, j);
        let c0 = m.corner(k, k);
        let c1 = m.corner(k + 1, k);
        // barycentric weights are exactly 0 or 1 at the vertices
        let corners = if x >= y {
            [(r0, c0, 1.0 - x), (r1, c0, x - y), (r1, c1, y)]
        } else {
            [(r0, c0, 1.0 - y), (r0, c1, y - x), (r1, c1, x)]
        };
        let mut acc = Mat2::zero();
        for (row, col, w) in corners {
            if w != 0.0 {
                acc += self.lookup(kind, row, col)? * w;
            }
        }
        Ok(acc)
    }

    /// CSV dump of all stored entries:
    /// `j,k,re11,im11,re21,im21,re12,im12,re22,im22` (column-major entries,
    /// split nodes labelled `N-` / `N+`).
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "j,k,re11,im11,re21,im21,re12,im12,re22,im22")?;
        for row in self.mesh.nodes() {
            for col in self.mesh.nodes().take_while(|c| self.mesh.index(*c) <= self.mesh.index(row)) {
                if let Ok(g) = self.get(row, col) {
                    write!(w, "{row},{col}")?;
                    for z in g.to_array() {
                        write!(w, ",{:e},{:e}", z.re, z.im)?;
                    }
                    writeln!(w)?;
                }
            }
        }
        Ok(())
    }

    /// Inverse of [`write_csv`](Self::write_csv) for the given mesh.
    pub fn read_csv<R: BufRead>(mesh: Mesh, observable: Mat2, r: R) -> Result<Self> {
        let mut grid = PropagatorGrid::new(mesh, observable);
        let parse_node = |s: &str| -> Result<Node> {
            match s {
                "N-" => Ok(Node::Minus),
                "N+" => Ok(Node::Plus),
                _ => match s.parse::<usize>() {
                    Ok(j) if j != mesh.n && j <= 2 * mesh.n => Ok(Node::Regular(j)),
                    _ => Err(Error::config(format!("bad node label {s:?}"))),
                },
            }
        };
        for (lineno, line) in r.lines().enumerate().skip(1) {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 10 {
                return Err(Error::config(format!("line {}: expected 10 fields", lineno + 1)));
            }
            let row = parse_node(fields[0])?;
            let col = parse_node(fields[1])?;
            if mesh.index(row) < mesh.index(col) {
                return Err(Error::config(format!("line {}: entry above the diagonal", lineno + 1)));
            }
            let mut nums = [0.0; 8];
            for (v, f) in nums.iter_mut().zip(&fields[2..]) {
                *v = f
                    .parse()
                    .map_err(|_| Error::config(format!("line {}: bad number {f:?}", lineno + 1)))?;
            }
            let z = |i: usize| C64::new(nums[2 * i], nums[2 * i + 1]);
            grid.set(row, col, Mat2::from_array([z(0), z(1), z(2), z(3)]));
        }
        Ok(grid)
    }
}
