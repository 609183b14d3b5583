//! Discrete elliptic boundary-value problems
//! `-∇·(a∇u) + c u = f` on the padded grid, with Dirichlet or Robin
//! boundary conditions, complex coefficients and direct band solves.
//!
//! The flux coefficient on the edge between nodes `i` and `j` is
//! `e^{(σ_i+σ_j)/2}`. Robin rows are scaled by the trapezoidal node weight
//! (1/2 on edges, 1/4 at corners), which makes the system symmetric; they
//! impose `a ∂_ν u + γ u = g` with `ν` the outward normal.

use num_complex::Complex64 as C64;

use crate::banded::{BandedLu, BandedMatrix};
use crate::error::{Error, Result};
use crate::grid::{BoundaryData, DomainMasks, Grid, ScalarField};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Log-coefficients of the three modalities plus the functional exponent.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CoefficientSet {
    pub mu: Option<ScalarField>,
    pub sigma: Option<ScalarField>,
    pub gamma: Option<ScalarField>,
    pub p: Option<f64>,
}

impl CoefficientSet {
    pub fn with_mu(mu: ScalarField) -> Self {
        Self { mu: Some(mu), ..Self::default() }
    }

    pub fn with_sigma(sigma: ScalarField) -> Self {
        Self { sigma: Some(sigma), ..Self::default() }
    }

    pub fn with_sigma_gamma(sigma: ScalarField, gamma: ScalarField) -> Self {
        Self { sigma: Some(sigma), gamma: Some(gamma), ..Self::default() }
    }

    pub fn exponent(mut self, p: f64) -> Self {
        self.p = Some(p);
        self
    }

    pub fn mu(&self) -> Result<&ScalarField> {
        self.mu.as_ref().ok_or_else(|| Error::InvalidArgument("mu not supplied".into()))
    }

    pub fn sigma(&self) -> Result<&ScalarField> {
        self.sigma.as_ref().ok_or_else(|| Error::InvalidArgument("sigma not supplied".into()))
    }

    pub fn gamma(&self) -> Result<&ScalarField> {
        self.gamma.as_ref().ok_or_else(|| Error::InvalidArgument("gamma not supplied".into()))
    }

    /// Checks that every supplied field is finite.
    pub fn validate(&self) -> Result<()> {
        for (name, f) in [("mu", &self.mu), ("sigma", &self.sigma), ("gamma", &self.gamma)] {
            if let Some(f) = f {
                let finite = f.values().iter().chain(f.boundary().unwrap_or(&[])).all(|v| v.re.is_finite() && v.im.is_finite());
                if !finite {
                    return Err(Error::InvalidArgument(format!("{name} has non-finite values")));
                }
            }
        }
        if let Some(p) = self.p {
            if !(p > 0.0 && p.is_finite()) {
                return Err(Error::InvalidArgument(format!("p must be positive, got {p}")));
            }
        }
        Ok(())
    }

    /// True when every supplied field vanishes outside Ω' (interior and
    /// boundary values).
    pub fn is_admissible(&self, masks: &DomainMasks) -> bool {
        [&self.mu, &self.sigma, &self.gamma].into_iter().flatten().all(|f| {
            let inside = f
                .values()
                .iter()
                .enumerate()
                .all(|(k, v)| masks.in_omega_prime(k) || *v == ZERO);
            inside && f.boundary().is_none_or(|b| b.iter().all(|v| *v == ZERO))
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum BcKind {
    Dirichlet,
    /// `a ∂_ν u + γ u = g` with `γ ≥ 0` per boundary node.
    Robin { gamma: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryCondition {
    pub kind: BcKind,
    pub data: BoundaryData,
}

impl BoundaryCondition {
    pub fn dirichlet(data: BoundaryData) -> Self {
        Self { kind: BcKind::Dirichlet, data }
    }

    pub fn robin(gamma: Vec<f64>, data: BoundaryData) -> Result<Self> {
        if gamma.len() != data.grid().boundary_len() {
            return Err(Error::InvalidArgument("Robin gamma length mismatch".into()));
        }
        if gamma.iter().any(|&g| !(g >= 0.0)) || gamma.iter().all(|&g| g == 0.0) {
            return Err(Error::InvalidArgument("Robin gamma must be >= 0 and not identically zero".into()));
        }
        Ok(Self { kind: BcKind::Robin { gamma }, data })
    }

    pub fn robin_constant(gamma: f64, data: BoundaryData) -> Result<Self> {
        let len = data.grid().boundary_len();
        Self::robin(vec![gamma; len], data)
    }

    /// Same kind with zero data.
    pub fn homogeneous(&self) -> Self {
        Self { kind: self.kind.clone(), data: BoundaryData::zeros(self.data.grid()) }
    }

    pub fn is_dirichlet(&self) -> bool {
        matches!(self.kind, BcKind::Dirichlet)
    }
}

/// Edge and node coefficients of `-∇·(a∇·) + c` on the padded lattice.
#[derive(Clone, Debug)]
struct Coefficients {
    grid: Grid,
    /// Edge `(pi, pj)–(pi+1, pj)` at `pj * (m-1) + pi`.
    ax: Vec<C64>,
    /// Edge `(pi, pj)–(pi, pj+1)` at `pi * (m-1) + pj`.
    ay: Vec<C64>,
    /// Node potential at padded index `pj * m + pi`.
    c: Vec<C64>,
}

impl Coefficients {
    fn new(grid: Grid, sigma: Option<&ScalarField>, potential_log: Option<&ScalarField>) -> Result<Self> {
        let m = grid.padded_side();
        let s = match sigma {
            Some(s) => {
                grid.check_same(&s.grid())?;
                s.padded_values()
            }
            None => vec![ZERO; m * m],
        };
        let c = match potential_log {
            Some(q) => {
                grid.check_same(&q.grid())?;
                q.padded_values().into_iter().map(|v| v.exp()).collect()
            }
            None => vec![ZERO; m * m],
        };
        let mut ax = vec![ZERO; m * (m - 1)];
        let mut ay = vec![ZERO; m * (m - 1)];
        for a in 0..m {
            for b in 0..m - 1 {
                ax[a * (m - 1) + b] = ((s[a * m + b] + s[a * m + b + 1]) * 0.5).exp();
                ay[a * (m - 1) + b] = ((s[b * m + a] + s[(b + 1) * m + a]) * 0.5).exp();
            }
        }
        for v in ax.iter().chain(&ay).chain(&c) {
            if !(v.re.is_finite() && v.im.is_finite()) {
                return Err(Error::Overflow("coefficient exponential is not finite".into()));
            }
        }
        Ok(Self { grid, ax, ay, c })
    }

    /// Visits every lattice edge as `(p, q, a)` with padded indices.
    fn for_each_edge(&self, mut f: impl FnMut(usize, usize, C64)) {
        let m = self.grid.padded_side();
        for pj in 0..m {
            for pi in 0..m - 1 {
                f(pj * m + pi, pj * m + pi + 1, self.ax[pj * (m - 1) + pi]);
            }
        }
        for pi in 0..m {
            for pj in 0..m - 1 {
                f(pj * m + pi, (pj + 1) * m + pi, self.ay[pi * (m - 1) + pj]);
            }
        }
    }

    /// Interior rows of the operator applied to padded values `u`.
    fn apply(&self, u: &[C64]) -> Vec<C64> {
        let grid = self.grid;
        let m = grid.padded_side();
        let n = grid.n();
        let ih2 = 1.0 / (grid.h() * grid.h());
        let mut out = vec![ZERO; grid.len()];
        for j in 0..n {
            for i in 0..n {
                let (pi, pj) = (i + 1, j + 1);
                let p = pj * m + pi;
                let e = self.ax[pj * (m - 1) + pi] * (u[p] - u[p + 1])
                    + self.ax[pj * (m - 1) + pi - 1] * (u[p] - u[p - 1])
                    + self.ay[pi * (m - 1) + pj] * (u[p] - u[p + m])
                    + self.ay[pi * (m - 1) + pj - 1] * (u[p] - u[p - m]);
                out[j * n + i] = e * ih2 + self.c[p] * u[p];
            }
        }
        out
    }
}

/// Trapezoidal node weight on the padded lattice.
fn node_weight(grid: &Grid, pi: usize, pj: usize) -> f64 {
    let m = grid.padded_side() - 1;
    let edge = |t: usize| t == 0 || t == m;
    match (edge(pi), edge(pj)) {
        (true, true) => 0.25,
        (true, false) | (false, true) => 0.5,
        _ => 1.0,
    }
}

/// A factorized discrete operator `-∇·(e^σ∇·) + e^q` with a fixed boundary
/// condition kind.
#[derive(Clone, Debug)]
pub struct EllipticOperator {
    coeffs: Coefficients,
    kind: BcKind,
    matrix: BandedMatrix,
    lu: BandedLu,
}

impl EllipticOperator {
    /// Builds and factors the operator. `sigma` defaults to 0 (unit flux),
    /// `potential_log` to no zeroth-order term.
    pub fn new(grid: Grid, sigma: Option<&ScalarField>, potential_log: Option<&ScalarField>, kind: BcKind) -> Result<Self> {
        let coeffs = Coefficients::new(grid, sigma, potential_log)?;
        let matrix = match &kind {
            BcKind::Dirichlet => Self::assemble_dirichlet(&coeffs),
            BcKind::Robin { gamma } => {
                if gamma.len() != grid.boundary_len() {
                    return Err(Error::InvalidArgument("Robin gamma length mismatch".into()));
                }
                Self::assemble_robin(&coeffs, gamma)
            }
        };
        let lu = matrix.factor()?;
        Ok(Self { coeffs, kind, matrix, lu })
    }

    /// `-Δ + e^μ`.
    pub fn schrodinger(mu: &ScalarField, kind: BcKind) -> Result<Self> {
        Self::new(mu.grid(), None, Some(mu), kind)
    }

    /// `-∇·(e^σ∇·)` with Dirichlet data.
    pub fn conductivity(sigma: &ScalarField) -> Result<Self> {
        Self::new(sigma.grid(), Some(sigma), None, BcKind::Dirichlet)
    }

    /// `-∇·(e^σ∇·) + e^γ` with Dirichlet data.
    pub fn diffusion(sigma: &ScalarField, gamma: &ScalarField) -> Result<Self> {
        Self::new(sigma.grid(), Some(sigma), Some(gamma), BcKind::Dirichlet)
    }

    /// `-Δ` with Dirichlet data.
    pub fn laplacian(grid: Grid) -> Result<Self> {
        Self::new(grid, None, None, BcKind::Dirichlet)
    }

    pub fn grid(&self) -> Grid {
        self.coeffs.grid
    }

    pub fn kind(&self) -> &BcKind {
        &self.kind
    }

    fn assemble_dirichlet(co: &Coefficients) -> BandedMatrix {
        let grid = co.grid;
        let n = grid.n();
        let m = grid.padded_side();
        let ih2 = 1.0 / (grid.h() * grid.h());
        let unknown = |p: usize| grid.interior_of_padded(p % m, p / m);
        let mut a = BandedMatrix::zeros(n * n, n, n);
        co.for_each_edge(|p, q, w| {
            let w = w * ih2;
            match (unknown(p), unknown(q)) {
                (Some(kp), Some(kq)) => {
                    a.add(kp, kp, w);
                    a.add(kq, kq, w);
                    a.add(kp, kq, -w);
                    a.add(kq, kp, -w);
                }
                (Some(k), None) | (None, Some(k)) => a.add(k, k, w),
                (None, None) => {}
            }
        });
        for k in 0..n * n {
            let (i, j) = grid.ij(k);
            a.add(k, k, co.c[(j + 1) * m + i + 1]);
        }
        a
    }

    fn assemble_robin(co: &Coefficients, gamma: &[f64]) -> BandedMatrix {
        let grid = co.grid;
        let m = grid.padded_side();
        let ih2 = 1.0 / (grid.h() * grid.h());
        let on_boundary = |p: usize| grid.boundary_index(p % m, p / m).is_some();
        let mut a = BandedMatrix::zeros(m * m, m, m);
        co.for_each_edge(|p, q, w| {
            let omega = if on_boundary(p) && on_boundary(q) { 0.5 } else { 1.0 };
            let w = w * (omega * ih2);
            a.add(p, p, w);
            a.add(q, q, w);
            a.add(p, q, -w);
            a.add(q, p, -w);
        });
        for pj in 0..m {
            for pi in 0..m {
                let p = pj * m + pi;
                a.add(p, p, co.c[p] * node_weight(&grid, pi, pj));
            }
        }
        for (b, &g) in gamma.iter().enumerate() {
            let (pi, pj) = grid.boundary_node(b);
            a.add(pj * m + pi, pj * m + pi, C64::new(g / grid.h(), 0.0));
        }
        a
    }

    /// Right-hand side of the linear system for source `f` and boundary data.
    fn rhs(&self, source: &ScalarField, data: &BoundaryData) -> Result<Vec<C64>> {
        let grid = self.grid();
        grid.check_same(&source.grid())?;
        grid.check_same(&data.grid())?;
        let m = grid.padded_side();
        let ih2 = 1.0 / (grid.h() * grid.h());
        match &self.kind {
            BcKind::Dirichlet => {
                let mut b = source.values().to_vec();
                let g = data.values();
                let unknown = |p: usize| grid.interior_of_padded(p % m, p / m);
                let bidx = |p: usize| grid.boundary_index(p % m, p / m);
                self.coeffs.for_each_edge(|p, q, w| match (unknown(p), unknown(q)) {
                    (Some(k), None) => b[k] += w * ih2 * g[bidx(q).unwrap()],
                    (None, Some(k)) => b[k] += w * ih2 * g[bidx(p).unwrap()],
                    _ => {}
                });
                Ok(b)
            }
            BcKind::Robin { .. } => {
                let mut b = source.padded_values();
                for pj in 0..m {
                    for pi in 0..m {
                        b[pj * m + pi] *= node_weight(&grid, pi, pj);
                    }
                }
                for (k, g) in data.values().iter().enumerate() {
                    let (pi, pj) = grid.boundary_node(k);
                    b[pj * m + pi] += g / grid.h();
                }
                Ok(b)
            }
        }
    }

    fn field_from_solution(&self, x: Vec<C64>, data: &BoundaryData) -> ScalarField {
        let grid = self.grid();
        match &self.kind {
            BcKind::Dirichlet => ScalarField::from_values(grid, x)
                .and_then(|f| f.with_boundary(data.values().to_vec()))
                .expect("dimensions fixed by construction"),
            BcKind::Robin { .. } => {
                let m = grid.padded_side();
                let interior = (0..grid.len())
                    .map(|k| {
                        let (i, j) = grid.ij(k);
                        x[(j + 1) * m + i + 1]
                    })
                    .collect();
                let boundary = (0..grid.boundary_len())
                    .map(|b| {
                        let (pi, pj) = grid.boundary_node(b);
                        x[pj * m + pi]
                    })
                    .collect();
                ScalarField::from_values(grid, interior)
                    .and_then(|f| f.with_boundary(boundary))
                    .expect("dimensions fixed by construction")
            }
        }
    }

    /// Solves `L u = f` with boundary data `data`; the returned field carries
    /// its boundary values.
    pub fn solve(&self, source: &ScalarField, data: &BoundaryData) -> Result<ScalarField> {
        Ok(self.solve_report(source, data)?.0)
    }

    /// Like [`solve`](Self::solve), also returning the relative algebraic
    /// residual of the linear system.
    pub fn solve_report(&self, source: &ScalarField, data: &BoundaryData) -> Result<(ScalarField, f64)> {
        let b = self.rhs(source, data)?;
        let x = self.lu.solve(&b);
        let res = self.matrix.relative_residual(&x, &b);
        if !res.is_finite() {
            return Err(Error::NoConvergence("non-finite solution".into()));
        }
        Ok((self.field_from_solution(x, data), res))
    }

    /// Solves with homogeneous boundary data.
    pub fn solve_homogeneous(&self, source: &ScalarField) -> Result<ScalarField> {
        self.solve(source, &BoundaryData::zeros(self.grid()))
    }

    /// Interior rows of the discrete operator applied to `u` (boundary values
    /// of `u` are read where stored, zero otherwise).
    pub fn apply(&self, u: &ScalarField) -> Result<ScalarField> {
        self.grid().check_same(&u.grid())?;
        ScalarField::from_values(self.grid(), self.coeffs.apply(&u.padded_values()))
    }

    /// Discrete Green's function column `ξ ↦ G(η, ξ)` for boundary node `eta`.
    ///
    /// Robin: impulse `1/h²` per unit weight at `η` itself. Dirichlet: the
    /// solution for an impulse at the inward-adjacent node, divided by `h`
    /// (a discrete normal derivative at `η`).
    pub fn greens_column(&self, eta: usize) -> Result<ScalarField> {
        let grid = self.grid();
        if eta >= grid.boundary_len() {
            return Err(Error::InvalidArgument(format!("eta={eta} is not a boundary node")));
        }
        let m = grid.padded_side();
        let h = grid.h();
        let (pi, pj) = grid.boundary_node(eta);
        match &self.kind {
            BcKind::Robin { .. } => {
                let mut b = vec![ZERO; m * m];
                b[pj * m + pi] = C64::new(1.0 / (h * h), 0.0);
                let x = self.lu.solve(&b);
                Ok(self.field_from_solution(x, &BoundaryData::zeros(grid)))
            }
            BcKind::Dirichlet => {
                let (di, dj) = grid.inward_normal(eta);
                let qi = (pi as isize + di).clamp(1, grid.n() as isize) as usize;
                let qj = (pj as isize + dj).clamp(1, grid.n() as isize) as usize;
                let k = grid.interior_of_padded(qi, qj).expect("adjacent node is interior");
                let mut b = vec![ZERO; grid.len()];
                b[k] = C64::new(1.0 / (h * h * h), 0.0);
                let x = self.lu.solve(&b);
                Ok(self.field_from_solution(x, &BoundaryData::zeros(grid)))
            }
        }
    }

    /// Convention string recorded alongside Green's columns.
    pub fn greens_convention(&self) -> &'static str {
        match self.kind {
            BcKind::Robin { .. } => "robin: boundary impulse 1/h^2 at eta (trapezoid-weighted)",
            BcKind::Dirichlet => "dirichlet: impulse 1/h^2 at inward-adjacent node, column divided by h",
        }
    }

    /// Solution for a unit interior impulse `1/h²` at interior node `k`.
    pub fn interior_impulse(&self, k: usize) -> Result<ScalarField> {
        let grid = self.grid();
        let mut src = ScalarField::zeros(grid);
        src.values_mut()[k] = C64::new(1.0 / (grid.h() * grid.h()), 0.0);
        self.solve_homogeneous(&src)
    }
}

/// Discrete `∇·(ρ e^σ ∇u)` with edge weights `((ρ_i+ρ_j)/2) e^{(σ_i+σ_j)/2}`:
/// the exact derivative of `-∇·(e^{σ+tρ}∇u)` at `t = 0`, negated.
pub fn flux_divergence(rho: &ScalarField, sigma: &ScalarField, u: &ScalarField) -> Result<ScalarField> {
    let grid = u.grid();
    grid.check_same(&rho.grid())?;
    grid.check_same(&sigma.grid())?;
    let m = grid.padded_side();
    let n = grid.n();
    let ih2 = 1.0 / (grid.h() * grid.h());
    let r = rho.padded_values();
    let s = sigma.padded_values();
    let uu = u.padded_values();
    let mut out = vec![ZERO; grid.len()];
    for j in 0..n {
        for i in 0..n {
            let p = (j + 1) * m + i + 1;
            let mut acc = ZERO;
            for q in [p + 1, p - 1, p + m, p - m] {
                let w = (r[p] + r[q]) * 0.5 * ((s[p] + s[q]) * 0.5).exp();
                acc += w * (uu[q] - uu[p]);
            }
            out[j * n + i] = acc * ih2;
        }
    }
    ScalarField::from_values(grid, out)
}

/// `(-Δ + e^μ) u = f` with boundary condition `bc`.
pub fn solve_schrodinger(coeffs: &CoefficientSet, bc: &BoundaryCondition, source: &ScalarField) -> Result<ScalarField> {
    let op = EllipticOperator::schrodinger(coeffs.mu()?, bc.kind.clone())?;
    op.solve(source, &bc.data)
}

/// `-∇·(e^σ∇u) = 0`, `u = f` on ∂Ω.
pub fn solve_conductivity(coeffs: &CoefficientSet, f: &BoundaryData) -> Result<ScalarField> {
    let sigma = coeffs.sigma()?;
    EllipticOperator::conductivity(sigma)?.solve_homogeneous_source(f)
}

/// `-∇·(e^σ∇u) + e^γ u = 0`, `u = f` on ∂Ω.
pub fn solve_diffusion(coeffs: &CoefficientSet, f: &BoundaryData) -> Result<ScalarField> {
    EllipticOperator::diffusion(coeffs.sigma()?, coeffs.gamma()?)?.solve_homogeneous_source(f)
}

/// `G_μ(η, ·)` under the boundary condition kind of `bc`.
pub fn greens_column(coeffs: &CoefficientSet, bc: &BoundaryCondition, eta: usize) -> Result<ScalarField> {
    EllipticOperator::schrodinger(coeffs.mu()?, bc.kind.clone())?.greens_column(eta)
}

/// Solves `Δw = source` with `w = 0` on ∂Ω.
pub fn laplacian_inverse_dirichlet(source: &ScalarField) -> Result<ScalarField> {
    let op = EllipticOperator::laplacian(source.grid())?;
    op.solve_homogeneous(&source.scale_real(-1.0))
}

impl EllipticOperator {
    fn solve_homogeneous_source(&self, data: &BoundaryData) -> Result<ScalarField> {
        self.solve(&ScalarField::zeros(self.grid()), data)
    }
}
