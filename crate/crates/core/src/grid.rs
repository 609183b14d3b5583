//! Uniform 2-D grids, nested subdomain masks, node fields and the
//! second-order finite-difference calculus used by every other module.
//!
//! Interior nodes are numbered row-major: node `(i, j)` (column `i`, row `j`,
//! both in `0..n`) has index `j * n + i` and sits at
//! `(x0 + (i + 1) h, y0 + (j + 1) h)`. Boundary nodes are addressed in
//! *padded* coordinates `(pi, pj)` in `0..n + 2`, where the interior node
//! `(i, j)` is padded node `(i + 1, j + 1)`.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub width: f64,
    pub height: f64,
}

impl Rect {
    pub const UNIT: Rect = Rect { x0: 0.0, y0: 0.0, width: 1.0, height: 1.0 };

    pub fn new(x0: f64, y0: f64, width: f64, height: f64) -> Self {
        Self { x0, y0, width, height }
    }

    /// Distance from `(x, y)` to the rectangle boundary (positive inside).
    pub fn inset_distance(&self, x: f64, y: f64) -> f64 {
        (x - self.x0)
            .min(self.x0 + self.width - x)
            .min(y - self.y0)
            .min(self.y0 + self.height - y)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    n: usize,
    h: f64,
    rect: Rect,
}

impl Grid {
    /// Builds a grid with `n` interior nodes per side on `rect`.
    ///
    /// Cells must be square, so `rect` must be a square.
    pub fn new(n: usize, rect: Rect) -> Result<Self> {
        if n < 3 {
            return Err(Error::InvalidGrid(format!("need at least 3 interior nodes per side, got {n}")));
        }
        if !(rect.width > 0.0 && rect.height > 0.0) {
            return Err(Error::InvalidGrid("rectangle must have positive extent".into()));
        }
        let hx = rect.width / (n + 1) as f64;
        let hy = rect.height / (n + 1) as f64;
        if (hx - hy).abs() > 1e-12 * hx.max(hy) {
            return Err(Error::InvalidGrid(format!(
                "non-square cells ({hx} x {hy}); the rectangle must be a square"
            )));
        }
        Ok(Self { n, h: hx, rect })
    }

    pub fn unit(n: usize) -> Result<Self> {
        Self::new(n, Rect::UNIT)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn rect(&self) -> Rect {
        self.rect
    }

    /// Number of interior nodes.
    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.n + i
    }

    pub fn ij(&self, k: usize) -> (usize, usize) {
        (k % self.n, k / self.n)
    }

    pub fn coord(&self, i: usize, j: usize) -> (f64, f64) {
        self.padded_coord(i + 1, j + 1)
    }

    pub fn coord_of(&self, k: usize) -> (f64, f64) {
        let (i, j) = self.ij(k);
        self.coord(i, j)
    }

    pub fn padded_coord(&self, pi: usize, pj: usize) -> (f64, f64) {
        (self.rect.x0 + pi as f64 * self.h, self.rect.y0 + pj as f64 * self.h)
    }

    /// Side length of the padded lattice (`n + 2`).
    pub fn padded_side(&self) -> usize {
        self.n + 2
    }

    pub fn boundary_len(&self) -> usize {
        4 * (self.n + 1)
    }

    /// Index of padded node `(pi, pj)` in the boundary ordering, or `None`
    /// for interior nodes.
    ///
    /// Ordering: bottom row left to right, right column upwards, top row
    /// right to left, left column downwards.
    pub fn boundary_index(&self, pi: usize, pj: usize) -> Option<usize> {
        let m = self.n + 1;
        if pj == 0 {
            Some(pi)
        } else if pi == m {
            Some(m + pj)
        } else if pj == m {
            Some(2 * m + (m - pi))
        } else if pi == 0 {
            Some(3 * m + (m - pj))
        } else {
            None
        }
    }

    /// Padded coordinates of boundary node `b`.
    pub fn boundary_node(&self, b: usize) -> (usize, usize) {
        let m = self.n + 1;
        match b / m {
            0 => (b, 0),
            1 => (m, b - m),
            2 => (m - (b - 2 * m), m),
            _ => (0, m - (b - 3 * m)),
        }
    }

    /// Inward unit normal at boundary node `b` (corners use the bottom/top
    /// edge convention).
    pub fn inward_normal(&self, b: usize) -> (isize, isize) {
        let m = self.n + 1;
        let (pi, pj) = self.boundary_node(b);
        if pj == 0 {
            (0, 1)
        } else if pj == m {
            (0, -1)
        } else if pi == 0 {
            (1, 0)
        } else {
            (-1, 0)
        }
    }

    /// The interior index of padded node `(pi, pj)`, if interior.
    pub fn interior_of_padded(&self, pi: usize, pj: usize) -> Option<usize> {
        if pi >= 1 && pi <= self.n && pj >= 1 && pj <= self.n {
            Some(self.idx(pi - 1, pj - 1))
        } else {
            None
        }
    }

    /// Interior node nearest to `(x, y)`.
    pub fn nearest_node(&self, x: f64, y: f64) -> usize {
        let to = |t: f64| -> usize {
            let k = (t / self.h).round() as isize - 1;
            k.clamp(0, self.n as isize - 1) as usize
        };
        self.idx(to(x - self.rect.x0), to(y - self.rect.y0))
    }

    pub fn center_node(&self) -> usize {
        let r = self.rect;
        self.nearest_node(r.x0 + 0.5 * r.width, r.y0 + 0.5 * r.height)
    }

    pub fn check_same(&self, other: &Grid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }
}

/// Nested node sets Ω' ⋐ Ω'' ⋐ Ω defined by inset distance from ∂Ω.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainMasks {
    grid: Grid,
    m_prime: f64,
    m_dprime: f64,
    omega_prime: Vec<bool>,
    omega_dprime: Vec<bool>,
}

pub const DEFAULT_MARGINS: (f64, f64) = (0.25, 0.125);

impl DomainMasks {
    pub fn new(grid: Grid, m_prime: f64, m_dprime: f64) -> Result<Self> {
        if !(m_prime > m_dprime && m_dprime > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "margins must satisfy m' > m'' > 0, got m'={m_prime}, m''={m_dprime}"
            )));
        }
        let tol = 1e-9 * grid.h();
        let rect = grid.rect();
        let dist: Vec<f64> = (0..grid.len())
            .map(|k| {
                let (x, y) = grid.coord_of(k);
                rect.inset_distance(x, y)
            })
            .collect();
        let omega_prime: Vec<bool> = dist.iter().map(|&d| d >= m_prime - tol).collect();
        let omega_dprime: Vec<bool> = dist.iter().map(|&d| d >= m_dprime - tol).collect();
        if !omega_prime.iter().any(|&b| b) {
            return Err(Error::EmptySubdomain(format!(
                "no node lies at distance >= {m_prime} from the boundary (n={})",
                grid.n()
            )));
        }
        Ok(Self { grid, m_prime, m_dprime, omega_prime, omega_dprime })
    }

    pub fn with_defaults(grid: Grid) -> Result<Self> {
        Self::new(grid, DEFAULT_MARGINS.0, DEFAULT_MARGINS.1)
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn margins(&self) -> (f64, f64) {
        (self.m_prime, self.m_dprime)
    }

    pub fn in_omega_prime(&self, k: usize) -> bool {
        self.omega_prime[k]
    }

    pub fn in_omega_dprime(&self, k: usize) -> bool {
        self.omega_dprime[k]
    }

    pub fn omega_prime(&self) -> &[bool] {
        &self.omega_prime
    }

    pub fn omega_dprime(&self) -> &[bool] {
        &self.omega_dprime
    }

    /// Ω' node indices in row-major order.
    pub fn omega_prime_nodes(&self) -> Vec<usize> {
        (0..self.grid.len()).filter(|&k| self.omega_prime[k]).collect()
    }

    pub fn omega_dprime_nodes(&self) -> Vec<usize> {
        (0..self.grid.len()).filter(|&k| self.omega_dprime[k]).collect()
    }

    /// Ω' nodes with at least one 4-neighbour outside Ω'.
    pub fn omega_prime_collar(&self) -> Vec<bool> {
        let n = self.grid.n();
        let mut collar = vec![false; self.grid.len()];
        for j in 0..n {
            for i in 0..n {
                let k = self.grid.idx(i, j);
                if !self.omega_prime[k] {
                    continue;
                }
                let outside = |di: isize, dj: isize| {
                    let (a, b) = (i as isize + di, j as isize + dj);
                    a < 0
                        || b < 0
                        || a >= n as isize
                        || b >= n as isize
                        || !self.omega_prime[self.grid.idx(a as usize, b as usize)]
                };
                collar[k] = outside(1, 0) || outside(-1, 0) || outside(0, 1) || outside(0, -1);
            }
        }
        collar
    }

    /// Side length of the (square) Ω' node block.
    pub fn omega_prime_side(&self) -> usize {
        let n = self.grid.n();
        let c = n / 2;
        (0..n).filter(|&i| self.omega_prime[self.grid.idx(i, c)]).count()
    }

    /// Zeroes `field` outside Ω'.
    pub fn restrict_to_omega_prime(&self, field: &ScalarField) -> ScalarField {
        let mut out = field.clone();
        for (v, &inside) in out.values.iter_mut().zip(&self.omega_prime) {
            if !inside {
                *v = C64::new(0.0, 0.0);
            }
        }
        out.boundary = None;
        out
    }
}

/// Quintic smoothstep `6s^5 - 15s^4 + 10s^3` clamped to `[0, 1]`.
pub fn smoothstep5(s: f64) -> f64 {
    let s = s.clamp(0.0, 1.0);
    s * s * s * (s * (6.0 * s - 15.0) + 10.0)
}

/// Smooth cutoff: 1 on Ω' plus a one-cell collar, 0 where the inset distance
/// is at most m'', quintic ramp in between.
pub fn cutoff_chi(masks: &DomainMasks) -> ScalarField {
    let grid = masks.grid();
    let (mp, mdp) = masks.margins();
    let top = mp - grid.h();
    let rect = grid.rect();
    ScalarField::from_real_fn(grid, |x, y| {
        let d = rect.inset_distance(x, y);
        if top <= mdp {
            if d >= mp { 1.0 } else { 0.0 }
        } else {
            smoothstep5((d - mdp) / (top - mdp))
        }
    })
}

/// Complex node values on the interior, with optional boundary values.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<C64>,
    boundary: Option<Vec<C64>>,
}

impl ScalarField {
    pub fn zeros(grid: Grid) -> Self {
        Self { grid, values: vec![C64::new(0.0, 0.0); grid.len()], boundary: None }
    }

    pub fn from_values(grid: Grid, values: Vec<C64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} node values, got {}",
                grid.len(),
                values.len()
            )));
        }
        Ok(Self { grid, values, boundary: None })
    }

    pub fn from_real(grid: Grid, values: &[f64]) -> Result<Self> {
        Self::from_values(grid, values.iter().map(|&v| C64::new(v, 0.0)).collect())
    }

    /// Samples `f` on interior and boundary nodes.
    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64) -> C64) -> Self {
        let values = (0..grid.len())
            .map(|k| {
                let (x, y) = grid.coord_of(k);
                f(x, y)
            })
            .collect();
        let boundary = (0..grid.boundary_len())
            .map(|b| {
                let (pi, pj) = grid.boundary_node(b);
                let (x, y) = grid.padded_coord(pi, pj);
                f(x, y)
            })
            .collect();
        Self { grid, values, boundary: Some(boundary) }
    }

    pub fn from_real_fn(grid: Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        Self::from_fn(grid, |x, y| C64::new(f(x, y), 0.0))
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [C64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<C64> {
        self.values
    }

    pub fn boundary(&self) -> Option<&[C64]> {
        self.boundary.as_deref()
    }

    pub fn with_boundary(mut self, boundary: Vec<C64>) -> Result<Self> {
        if boundary.len() != self.grid.boundary_len() {
            return Err(Error::InvalidArgument("boundary length mismatch".into()));
        }
        self.boundary = Some(boundary);
        Ok(self)
    }

    pub fn without_boundary(mut self) -> Self {
        self.boundary = None;
        self
    }

    pub fn set_boundary(&mut self, boundary: Option<Vec<C64>>) {
        self.boundary = boundary;
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.values[self.grid.idx(i, j)]
    }

    /// Value at padded node; boundary nodes read the stored boundary values
    /// (zero when none are stored).
    pub fn padded(&self, pi: usize, pj: usize) -> C64 {
        match self.grid.interior_of_padded(pi, pj) {
            Some(k) => self.values[k],
            None => match &self.boundary {
                Some(b) => b[self.grid.boundary_index(pi, pj).expect("boundary node")],
                None => C64::new(0.0, 0.0),
            },
        }
    }

    /// All `(n+2)^2` padded values, row-major.
    pub fn padded_values(&self) -> Vec<C64> {
        let m = self.grid.padded_side();
        let mut out = Vec::with_capacity(m * m);
        for pj in 0..m {
            for pi in 0..m {
                out.push(self.padded(pi, pj));
            }
        }
        out
    }

    pub fn map(&self, f: impl Fn(C64) -> C64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
            boundary: self.boundary.as_ref().map(|b| b.iter().map(|&v| f(v)).collect()),
        }
    }

    /// Pointwise combination. A missing boundary counts as zero; the result
    /// carries a boundary when either side does.
    pub fn zip_with(&self, other: &Self, f: impl Fn(C64, C64) -> C64) -> Result<Self> {
        self.grid.check_same(&other.grid)?;
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        let zero = C64::new(0.0, 0.0);
        let boundary = match (&self.boundary, &other.boundary) {
            (Some(a), Some(b)) => Some(a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()),
            (Some(a), None) => Some(a.iter().map(|&x| f(x, zero)).collect()),
            (None, Some(b)) => Some(b.iter().map(|&y| f(zero, y)).collect()),
            (None, None) => None,
        };
        Ok(Self { grid: self.grid, values, boundary })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn scale(&self, s: C64) -> Self {
        self.map(|v| v * s)
    }

    pub fn scale_real(&self, s: f64) -> Self {
        self.map(|v| v * s)
    }

    /// Discrete L² norm `(h² Σ |v|²)^{1/2}` over interior nodes.
    pub fn norm_l2(&self) -> f64 {
        let h = self.grid.h();
        (h * h * self.values.iter().map(|v| v.norm_sqr()).sum::<f64>()).sqrt()
    }

    /// Bilinear (unconjugated) discrete pairing `h² Σ a b`.
    pub fn dot_bilinear(&self, other: &Self) -> Result<C64> {
        self.grid.check_same(&other.grid)?;
        let h = self.grid.h();
        Ok(self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum::<C64>() * (h * h))
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn max_imag_abs(&self) -> f64 {
        self.values.iter().map(|v| v.im.abs()).fold(0.0, f64::max)
    }

    pub fn re(&self) -> Self {
        self.map(|v| C64::new(v.re, 0.0))
    }

    pub fn im(&self) -> Self {
        self.map(|v| C64::new(v.im, 0.0))
    }

    /// L² norm restricted to the nodes where `mask` is set.
    pub fn norm_l2_masked(&self, mask: &[bool]) -> f64 {
        let h = self.grid.h();
        let s: f64 = self.values.iter().zip(mask).filter(|(_, &m)| m).map(|(v, _)| v.norm_sqr()).sum();
        (h * h * s).sqrt()
    }
}

/// Boundary values on ∂Ω in the grid's boundary ordering.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryData {
    grid: Grid,
    values: Vec<C64>,
}

impl BoundaryData {
    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64) -> C64) -> Self {
        let values = (0..grid.boundary_len())
            .map(|b| {
                let (pi, pj) = grid.boundary_node(b);
                let (x, y) = grid.padded_coord(pi, pj);
                f(x, y)
            })
            .collect();
        Self { grid, values }
    }

    pub fn from_real_fn(grid: Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        Self::from_fn(grid, |x, y| C64::new(f(x, y), 0.0))
    }

    pub fn constant(grid: Grid, c: C64) -> Self {
        Self { grid, values: vec![c; grid.boundary_len()] }
    }

    pub fn zeros(grid: Grid) -> Self {
        Self::constant(grid, C64::new(0.0, 0.0))
    }

    pub fn from_values(grid: Grid, values: Vec<C64>) -> Result<Self> {
        if values.len() != grid.boundary_len() {
            return Err(Error::InvalidArgument("boundary length mismatch".into()));
        }
        Ok(Self { grid, values })
    }

    /// Boundary trace of a field that carries boundary values.
    pub fn trace_of(field: &ScalarField) -> Result<Self> {
        match field.boundary() {
            Some(b) => Ok(Self { grid: field.grid(), values: b.to_vec() }),
            None => Err(Error::InvalidArgument("field has no boundary values".into())),
        }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn map(&self, f: impl Fn(C64) -> C64) -> Self {
        Self { grid: self.grid, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    /// `a * self + b * other`.
    pub fn combine(&self, a: C64, other: &Self, b: C64) -> Result<Self> {
        self.grid.check_same(&other.grid)?;
        Ok(Self {
            grid: self.grid,
            values: self.values.iter().zip(&other.values).map(|(&x, &y)| a * x + b * y).collect(),
        })
    }

    pub fn scale(&self, s: C64) -> Self {
        self.map(|v| v * s)
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| v.norm() == 0.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    pub c1: ScalarField,
    pub c2: ScalarField,
}

impl VectorField {
    pub fn new(c1: ScalarField, c2: ScalarField) -> Result<Self> {
        c1.grid().check_same(&c2.grid())?;
        Ok(Self { c1, c2 })
    }

    pub fn constant(grid: Grid, v: [C64; 2]) -> Self {
        Self { c1: ScalarField::from_fn(grid, |_, _| v[0]), c2: ScalarField::from_fn(grid, |_, _| v[1]) }
    }

    pub fn grid(&self) -> Grid {
        self.c1.grid()
    }

    pub fn at(&self, k: usize) -> [C64; 2] {
        [self.c1.values()[k], self.c2.values()[k]]
    }

    /// Discrete pairing `h² Σ (a₁b₁ + a₂b₂)`.
    pub fn dot_bilinear(&self, other: &Self) -> Result<C64> {
        Ok(self.c1.dot_bilinear(&other.c1)? + self.c2.dot_bilinear(&other.c2)?)
    }

    pub fn norm_l2(&self) -> f64 {
        self.c1.norm_l2().hypot(self.c2.norm_l2())
    }

    /// Pointwise bilinear dot product `a·b`.
    pub fn dot_pointwise(&self, other: &Self) -> Result<ScalarField> {
        let a = self.c1.mul(&other.c1)?.without_boundary();
        let b = self.c2.mul(&other.c2)?.without_boundary();
        a.add(&b)
    }

    pub fn scale_by(&self, s: &ScalarField) -> Result<Self> {
        Ok(Self { c1: self.c1.mul(s)?, c2: self.c2.mul(s)? })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        Ok(Self { c1: self.c1.sub(&other.c1)?, c2: self.c2.sub(&other.c2)? })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        Ok(Self { c1: self.c1.add(&other.c1)?, c2: self.c2.add(&other.c2)? })
    }
}

fn stencil(u: &ScalarField, f: impl Fn(&dyn Fn(isize, isize) -> C64) -> C64) -> ScalarField {
    let grid = u.grid();
    let n = grid.n();
    let padded = u.padded_values();
    let m = n + 2;
    let mut values = Vec::with_capacity(grid.len());
    for j in 0..n {
        for i in 0..n {
            let (pi, pj) = (i as isize + 1, j as isize + 1);
            let at = |di: isize, dj: isize| padded[((pj + dj) as usize) * m + (pi + di) as usize];
            values.push(f(&at));
        }
    }
    ScalarField { grid, values, boundary: None }
}

/// Centered first difference in x₁.
pub fn d1(u: &ScalarField) -> ScalarField {
    let s = 0.5 / u.grid().h();
    stencil(u, |at| (at(1, 0) - at(-1, 0)) * s)
}

/// Centered first difference in x₂.
pub fn d2(u: &ScalarField) -> ScalarField {
    let s = 0.5 / u.grid().h();
    stencil(u, |at| (at(0, 1) - at(0, -1)) * s)
}

pub fn d11(u: &ScalarField) -> ScalarField {
    let s = 1.0 / (u.grid().h() * u.grid().h());
    stencil(u, |at| (at(1, 0) - at(0, 0) * 2.0 + at(-1, 0)) * s)
}

pub fn d22(u: &ScalarField) -> ScalarField {
    let s = 1.0 / (u.grid().h() * u.grid().h());
    stencil(u, |at| (at(0, 1) - at(0, 0) * 2.0 + at(0, -1)) * s)
}

/// Mixed derivative ∂₁∂₂ via the 4-point cross stencil.
pub fn d12(u: &ScalarField) -> ScalarField {
    let s = 0.25 / (u.grid().h() * u.grid().h());
    stencil(u, |at| (at(1, 1) - at(1, -1) - at(-1, 1) + at(-1, -1)) * s)
}

pub fn gradient(u: &ScalarField) -> VectorField {
    VectorField { c1: d1(u), c2: d2(u) }
}

/// Centered divergence; the negative adjoint of [`gradient`] for fields
/// without boundary values.
pub fn divergence(w: &VectorField) -> Result<ScalarField> {
    d1(&w.c1).add(&d2(&w.c2))
}

/// Standard 5-point Laplacian.
pub fn laplacian(u: &ScalarField) -> ScalarField {
    let s = 1.0 / (u.grid().h() * u.grid().h());
    stencil(u, |at| (at(1, 0) + at(-1, 0) + at(0, 1) + at(0, -1) - at(0, 0) * 4.0) * s)
}

/// Smooth, compactly supported bump `a·exp(1 - 1/(1 - r²/R²))` for `r < R`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bump {
    pub center: (f64, f64),
    pub radius: f64,
    pub amplitude: f64,
}

impl Bump {
    pub fn new(center: (f64, f64), radius: f64, amplitude: f64) -> Self {
        Self { center, radius, amplitude }
    }

    /// Centered bump of radius 0.2 on the unit square.
    pub fn centered(amplitude: f64) -> Self {
        Self::new((0.5, 0.5), 0.2, amplitude)
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let dx = x - self.center.0;
        let dy = y - self.center.1;
        let s = (dx * dx + dy * dy) / (self.radius * self.radius);
        if s >= 1.0 {
            0.0
        } else {
            self.amplitude * (1.0 - 1.0 / (1.0 - s)).exp()
        }
    }

    /// Gradient and Laplacian of the bump.
    pub fn derivatives(&self, x: f64, y: f64) -> ([f64; 2], f64) {
        let dx = x - self.center.0;
        let dy = y - self.center.1;
        let r2 = self.radius * self.radius;
        let s = (dx * dx + dy * dy) / r2;
        if s >= 1.0 {
            return ([0.0, 0.0], 0.0);
        }
        let b = self.eval(x, y);
        // b = A exp(1 - 1/(1-s)), db/ds = -b/(1-s)^2
        let w = 1.0 - s;
        let dbds = -b / (w * w);
        let d2bds2 = b / (w * w * w * w) - 2.0 * b / (w * w * w);
        let gx = dbds * 2.0 * dx / r2;
        let gy = dbds * 2.0 * dy / r2;
        // Δb = b''(s)|∇s|² + b'(s)Δs, |∇s|² = 4 r²/R⁴ = 4 s / R², Δs = 4 / R²
        let lap = d2bds2 * 4.0 * s / r2 + dbds * 4.0 / r2;
        ([gx, gy], lap)
    }

    pub fn field(&self, grid: Grid) -> ScalarField {
        ScalarField::from_real_fn(grid, |x, y| self.eval(x, y))
    }
}
