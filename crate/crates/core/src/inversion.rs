//! Explicit linearized reconstructions and singular-value probes of the
//! assembled derivative operators.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use rand::Rng;
use rayon::prelude::*;

use crate::banded::BandedMatrix;
use crate::draw;
use crate::elliptic::{flux_divergence, EllipticOperator};
use crate::error::{Error, Result};
use crate::grid::{d1, d2, laplacian, BoundaryData, DomainMasks, Grid, ScalarField};
use crate::linearization::DenseOperator;
use crate::microlocal::xi_samples;

/// Default relative threshold separating the numerical kernel.
pub const KERNEL_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumReport {
    /// Descending; padded with zeros when there are more columns than rows.
    pub singular_values: Vec<f64>,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub numerical_kernel_dim: usize,
    pub tol: f64,
    /// `σ_max / σ_min` over the singular values above the kernel threshold.
    pub condition: f64,
}

impl SpectrumReport {
    pub fn from_values(mut sv: Vec<f64>, columns: usize, tol: f64) -> Self {
        sv.sort_by(|a, b| b.total_cmp(a));
        sv.resize(sv.len().max(columns), 0.0);
        let sigma_max = sv.first().copied().unwrap_or(0.0);
        let sigma_min = sv.last().copied().unwrap_or(0.0);
        let cut = tol * sigma_max;
        let numerical_kernel_dim = sv.iter().filter(|&&s| s <= cut).count();
        let smallest_kept = sv.iter().copied().filter(|&s| s > cut).fold(f64::INFINITY, f64::min);
        let condition = if smallest_kept.is_finite() { sigma_max / smallest_kept } else { f64::INFINITY };
        Self { singular_values: sv, sigma_min, sigma_max, numerical_kernel_dim, tol, condition }
    }

    /// Columns `index,sigma`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("index,sigma\n");
        for (i, v) in self.singular_values.iter().enumerate() {
            s.push_str(&format!("{i},{v:.17e}\n"));
        }
        s
    }
}

/// Singular values of a complex matrix, threshold `tol`.
pub fn spectrum_of(matrix: &DMatrix<C64>, tol: f64) -> SpectrumReport {
    let sv = matrix.singular_values();
    SpectrumReport::from_values(sv.iter().copied().collect(), matrix.ncols(), tol)
}

/// Full SVD of an assembled operator. Rows and columns carry the same
/// quadrature weight, so the matrix singular values are the L² ones.
pub fn svd_probe(op: &DenseOperator) -> SpectrumReport {
    spectrum_of(&op.matrix, KERNEL_TOL)
}

pub fn svd_probe_with(op: &DenseOperator, tol: f64) -> SpectrumReport {
    spectrum_of(&op.matrix, tol)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReconMethod {
    A0x1Bvp,
    QpatLambda,
    SvdPinv,
}

impl ReconMethod {
    pub fn name(&self) -> &'static str {
        match self {
            ReconMethod::A0x1Bvp => "A0X1_BVP",
            ReconMethod::QpatLambda => "QPAT_LAMBDA",
            ReconMethod::SvdPinv => "SVD_PINV",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReconResult {
    pub method: ReconMethod,
    pub rho_hat: ScalarField,
    pub nu_hat: Option<ScalarField>,
    pub rel_l2_error: Option<f64>,
    pub nu_rel_l2_error: Option<f64>,
    pub kernel_dim: usize,
}

impl ReconResult {
    fn new(method: ReconMethod, masks: &DomainMasks, rho: &ScalarField, nu: Option<&ScalarField>, kernel_dim: usize) -> Self {
        Self {
            method,
            rho_hat: masks.restrict_to_omega_prime(rho),
            nu_hat: nu.map(|n| masks.restrict_to_omega_prime(n)),
            rel_l2_error: None,
            nu_rel_l2_error: None,
            kernel_dim,
        }
    }

    /// Relative L²(Ω') errors against a known truth.
    pub fn with_truth(mut self, masks: &DomainMasks, rho: &ScalarField, nu: Option<&ScalarField>) -> Result<Self> {
        let rel = |hat: &ScalarField, truth: &ScalarField| -> Result<f64> {
            let m = masks.omega_prime();
            let t = truth.norm_l2_masked(m);
            let e = hat.sub(truth)?.norm_l2_masked(m);
            Ok(if t > 0.0 { e / t } else { e })
        };
        self.rel_l2_error = Some(rel(&self.rho_hat, rho)?);
        if let (Some(h), Some(t)) = (&self.nu_hat, nu) {
            self.nu_rel_l2_error = Some(rel(h, t)?);
        }
        Ok(self)
    }

    /// `method rel_l2_error kernel_dim`; the error is `nan` without a truth.
    pub fn summary_line(&self) -> String {
        let e = self.rel_l2_error.unwrap_or(f64::NAN);
        format!("{} {:.6e} {}", self.method.name(), e, self.kernel_dim)
    }
}

/// Truncated-SVD solution of `M x = b`; returns `x` and the number of
/// discarded directions (including the column excess).
pub fn pinv_solve(matrix: &DMatrix<C64>, rhs: &[C64], tol: f64) -> Result<(Vec<C64>, usize)> {
    if rhs.len() != matrix.nrows() {
        return Err(Error::InvalidArgument(format!("rhs has {} entries, matrix {} rows", rhs.len(), matrix.nrows())));
    }
    let svd = matrix.clone().svd(true, true);
    let u = svd.u.as_ref().expect("requested U");
    let vt = svd.v_t.as_ref().expect("requested V^H");
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let b = DVector::from_column_slice(rhs);
    let mut x = DVector::zeros(matrix.ncols());
    let mut kept = 0;
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > tol * smax {
            let coef = u.column(i).dotc(&b) / s;
            x += vt.row(i).adjoint() * coef;
            kept += 1;
        }
    }
    Ok((x.iter().copied().collect(), matrix.ncols() - kept))
}

/// Truncated-SVD reconstruction from data fields, one per stacked map.
pub fn svd_pinv_reconstruct(op: &DenseOperator, data: &[ScalarField], tol: f64, masks: &DomainMasks) -> Result<ReconResult> {
    let maps = op.row_map.iter().map(|r| r.0 + 1).max().unwrap_or(0);
    if data.len() != maps {
        return Err(Error::InvalidArgument(format!("need {maps} data fields, got {}", data.len())));
    }
    for d in data {
        op.grid.check_same(&d.grid())?;
    }
    let (x, kernel) = pinv_solve(&op.matrix, &op.pack_rows(data), tol)?;
    let fields = op.unpack(&x);
    Ok(ReconResult::new(ReconMethod::SvdPinv, masks, &fields[0], fields.get(1), kernel))
}

/// Interior data with boundary values from quadratic extrapolation along the
/// inward normal.
fn extrapolated(data: &ScalarField) -> Result<ScalarField> {
    let g = data.grid();
    let n = g.n() as isize;
    let b: Vec<C64> = (0..g.boundary_len())
        .map(|b| {
            let (pi, pj) = g.boundary_node(b);
            let (di, dj) = g.inward_normal(b);
            let at = |s: isize| {
                let i = (pi as isize + s * di).clamp(1, n) as usize;
                let j = (pj as isize + s * dj).clamp(1, n) as usize;
                data.padded(i, j)
            };
            at(1) * 3.0 - at(2) * 3.0 + at(3)
        })
        .collect();
    data.clone().with_boundary(b)
}

/// Recovers `ρ` from `A_{0,x₁}(ρ) = (2/p)(ρ − p∂₁Δ⁻¹∂₁ρ)` by solving
/// `Δρ − p∂₁²ρ = (p/2)Δ(data)`, `ρ = 0` on ∂Ω.
#[allow(non_snake_case)]
pub fn invert_A0x1(data: &ScalarField, p: f64, masks: &DomainMasks) -> Result<ReconResult> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidArgument(format!("invert_A0x1 needs 0 < p < 1, got {p}")));
    }
    let g = masks.grid();
    g.check_same(&data.grid())?;
    let n = g.n();
    let ih2 = 1.0 / (g.h() * g.h());
    // −((1−p)∂₁² + ∂₂²), zero Dirichlet
    let mut a = BandedMatrix::zeros(n * n, n, n);
    for j in 0..n {
        for i in 0..n {
            let r = g.idx(i, j);
            a.add(r, r, C64::new((2.0 * (1.0 - p) + 2.0) * ih2, 0.0));
            if i > 0 {
                a.add(r, g.idx(i - 1, j), C64::new(-(1.0 - p) * ih2, 0.0));
            }
            if i + 1 < n {
                a.add(r, g.idx(i + 1, j), C64::new(-(1.0 - p) * ih2, 0.0));
            }
            if j > 0 {
                a.add(r, g.idx(i, j - 1), C64::new(-ih2, 0.0));
            }
            if j + 1 < n {
                a.add(r, g.idx(i, j + 1), C64::new(-ih2, 0.0));
            }
        }
    }
    let rhs = laplacian(&extrapolated(data)?).scale_real(-0.5 * p);
    let rho = a.factor()?.solve(rhs.values());
    let rho = ScalarField::from_values(g, rho)?;
    Ok(ReconResult::new(ReconMethod::A0x1Bvp, masks, &rho, None, 0))
}

/// `e^{a·x}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExpFn {
    pub a: [f64; 2],
}

impl ExpFn {
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        (self.a[0] * x + self.a[1] * y).exp()
    }

    pub fn grad(&self, x: f64, y: f64) -> [f64; 2] {
        let v = self.eval(x, y);
        [self.a[0] * v, self.a[1] * v]
    }

    pub fn ratio(&self, other: &ExpFn) -> ExpFn {
        ExpFn { a: [self.a[0] - other.a[0], self.a[1] - other.a[1]] }
    }

    pub fn field(&self, grid: Grid) -> ScalarField {
        ScalarField::from_real_fn(grid, |x, y| self.eval(x, y))
    }
}

/// The three interior solutions `u₁₁ = e^{λx₁}`, `u₁₂ = e^{λx₂}`,
/// `u₂₂ = e^{−λx₂}` of `(−λ⁻²Δ + 1)u = 0`.
pub fn qpat_solutions(lambda: f64) -> [ExpFn; 3] {
    [ExpFn { a: [lambda, 0.0] }, ExpFn { a: [0.0, lambda] }, ExpFn { a: [0.0, -lambda] }]
}

/// Background `(σ₀, γ₀) = (−2 ln λ, 0)` and the boundary traces of
/// [`qpat_solutions`].
pub fn qpat_background(grid: Grid, lambda: f64) -> (ScalarField, ScalarField, [BoundaryData; 3]) {
    let s0 = -2.0 * lambda.ln();
    let sigma0 = ScalarField::from_real_fn(grid, |_, _| s0);
    let gamma0 = ScalarField::from_real_fn(grid, |_, _| 0.0);
    let f = qpat_solutions(lambda).map(|u| BoundaryData::from_real_fn(grid, |x, y| u.eval(x, y)));
    (sigma0, gamma0, f)
}

/// Operations the ν-elimination is written in; instantiated on grid fields
/// and on principal symbols at a fixed `(x, ξ)`.
pub trait Calculus {
    type E: Clone;
    /// `ρ ↦ ∇·(ρ∇u)`.
    fn flux(&self, e: &Self::E, u: ExpFn) -> Result<Self::E>;
    fn lap(&self, e: &Self::E) -> Result<Self::E>;
    /// Δ⁻¹ with zero Dirichlet data.
    fn lap_inv(&self, e: &Self::E) -> Result<Self::E>;
    fn mul(&self, f: ExpFn, e: &Self::E) -> Result<Self::E>;
    fn sub(&self, a: &Self::E, b: &Self::E) -> Result<Self::E>;
    fn d1(&self, e: &Self::E) -> Result<Self::E>;
    fn d2(&self, e: &Self::E) -> Result<Self::E>;
    fn scale(&self, e: &Self::E, s: f64) -> Result<Self::E>;
}

/// With `νu₁₂ = Δ⁻¹(y₁₂ − λ²D₁₂)` substituted, the `(1,1)` and `(2,2)`
/// equations become `y_jj − Δ((u_jj/u₁₂)Δ⁻¹ y₁₂) = λ²D_jj − Δ((u_jj/u₁₂)Δ⁻¹ λ²D₁₂)`,
/// with `y_jk = ∇·(ρ∇u_jk)`. This maps `(y₁₁, y₁₂, y₂₂)` to the two sides.
pub fn eliminate<C: Calculus>(c: &C, lambda: f64, y: [&C::E; 3]) -> Result<[C::E; 2]> {
    let [u11, u12, u22] = qpat_solutions(lambda);
    let w = c.lap_inv(y[1])?;
    let r1 = c.sub(y[0], &c.lap(&c.mul(u11.ratio(&u12), &w)?)?)?;
    let r2 = c.sub(y[2], &c.lap(&c.mul(u22.ratio(&u12), &w)?)?)?;
    Ok([r1, r2])
}

/// The two ρ-equations applied to `rho`.
pub fn rho_system<C: Calculus>(c: &C, lambda: f64, rho: &C::E) -> Result<[C::E; 2]> {
    let u = qpat_solutions(lambda);
    let y = [c.flux(rho, u[0])?, c.flux(rho, u[1])?, c.flux(rho, u[2])?];
    eliminate(c, lambda, [&y[0], &y[1], &y[2]])
}

/// `(∂₁R₁ − ∂₂R₂)/λ`, the second-order combination of the two equations.
pub fn combined_operator<C: Calculus>(c: &C, lambda: f64, rho: &C::E) -> Result<C::E> {
    let [r1, r2] = rho_system(c, lambda, rho)?;
    c.scale(&c.sub(&c.d1(&r1)?, &c.d2(&r2)?)?, 1.0 / lambda)
}

/// Grid-field instance; holds one factorization of the Dirichlet Laplacian.
pub struct FieldCalculus {
    grid: Grid,
    lap: EllipticOperator,
}

impl FieldCalculus {
    pub fn new(grid: Grid) -> Result<Self> {
        Ok(Self { grid, lap: EllipticOperator::laplacian(grid)? })
    }
}

impl Calculus for FieldCalculus {
    type E = ScalarField;

    fn flux(&self, e: &ScalarField, u: ExpFn) -> Result<ScalarField> {
        flux_divergence(e, &ScalarField::zeros(self.grid), &u.field(self.grid))
    }

    fn lap(&self, e: &ScalarField) -> Result<ScalarField> {
        Ok(laplacian(e))
    }

    fn lap_inv(&self, e: &ScalarField) -> Result<ScalarField> {
        self.lap.solve_homogeneous(&e.scale_real(-1.0))
    }

    fn mul(&self, f: ExpFn, e: &ScalarField) -> Result<ScalarField> {
        f.field(self.grid).mul(e)
    }

    fn sub(&self, a: &ScalarField, b: &ScalarField) -> Result<ScalarField> {
        a.sub(b)
    }

    fn d1(&self, e: &ScalarField) -> Result<ScalarField> {
        Ok(d1(e))
    }

    fn d2(&self, e: &ScalarField) -> Result<ScalarField> {
        Ok(d2(e))
    }

    fn scale(&self, e: &ScalarField, s: f64) -> Result<ScalarField> {
        Ok(e.scale_real(s))
    }
}

/// Principal symbol: `(order, value)` at a fixed `(x, ξ)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Symbol {
    pub order: i32,
    pub value: C64,
}

impl Symbol {
    pub fn identity() -> Self {
        Self { order: 0, value: C64::new(1.0, 0.0) }
    }
}

pub struct SymbolCalculus {
    pub x: (f64, f64),
    pub xi: [f64; 2],
}

impl SymbolCalculus {
    fn xi2(&self) -> f64 {
        self.xi[0] * self.xi[0] + self.xi[1] * self.xi[1]
    }
}

impl Calculus for SymbolCalculus {
    type E = Symbol;

    fn flux(&self, e: &Symbol, u: ExpFn) -> Result<Symbol> {
        let g = u.grad(self.x.0, self.x.1);
        let s = C64::i() * (self.xi[0] * g[0] + self.xi[1] * g[1]);
        Ok(Symbol { order: e.order + 1, value: e.value * s })
    }

    fn lap(&self, e: &Symbol) -> Result<Symbol> {
        Ok(Symbol { order: e.order + 2, value: -e.value * self.xi2() })
    }

    fn lap_inv(&self, e: &Symbol) -> Result<Symbol> {
        Ok(Symbol { order: e.order - 2, value: -e.value / self.xi2() })
    }

    fn mul(&self, f: ExpFn, e: &Symbol) -> Result<Symbol> {
        Ok(Symbol { order: e.order, value: e.value * f.eval(self.x.0, self.x.1) })
    }

    fn sub(&self, a: &Symbol, b: &Symbol) -> Result<Symbol> {
        Ok(match a.order.cmp(&b.order) {
            std::cmp::Ordering::Greater => *a,
            std::cmp::Ordering::Less => Symbol { order: b.order, value: -b.value },
            std::cmp::Ordering::Equal => Symbol { order: a.order, value: a.value - b.value },
        })
    }

    fn d1(&self, e: &Symbol) -> Result<Symbol> {
        Ok(Symbol { order: e.order + 1, value: e.value * C64::i() * self.xi[0] })
    }

    fn d2(&self, e: &Symbol) -> Result<Symbol> {
        Ok(Symbol { order: e.order + 1, value: e.value * C64::i() * self.xi[1] })
    }

    fn scale(&self, e: &Symbol, s: f64) -> Result<Symbol> {
        Ok(Symbol { order: e.order, value: e.value * s })
    }
}

/// Symbol `−(a₁₁ξ₁² + a₁₂ξ₁ξ₂ + a₂₂ξ₂²)` of `a₁₁∂₁² + a₁₂∂₁∂₂ + a₂₂∂₂²`.
pub fn second_order_symbol(coeffs: [f64; 3], xi: [f64; 2]) -> f64 {
    -(coeffs[0] * xi[0] * xi[0] + coeffs[1] * xi[0] * xi[1] + coeffs[2] * xi[1] * xi[1])
}

/// Coefficients `(e^{λx₁}, −e^{λx₁}, 2e^{−λx₂})` obtained from the elimination.
pub fn a_lambda_derived(lambda: f64, x: f64, y: f64) -> [f64; 3] {
    let e1 = (lambda * x).exp();
    [e1, -e1, 2.0 * (-lambda * y).exp()]
}

/// Coefficients `(e^{λx₁}, −e^{λx₂}, 2e^{−λx₂})` as printed for `A_λ`.
pub fn a_lambda_printed(lambda: f64, x: f64, y: f64) -> [f64; 3] {
    [(lambda * x).exp(), -(lambda * y).exp(), 2.0 * (-lambda * y).exp()]
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpotCheck {
    pub nodes: Vec<(f64, f64)>,
    /// Max relative mismatch of the assembled principal symbol against the
    /// derived coefficients.
    pub derived_mismatch: f64,
    /// Same against the printed coefficients.
    pub printed_mismatch: f64,
    /// Smallest `|symbol|/|ξ|²` seen (ellipticity margin).
    pub min_ellipticity: f64,
}

/// Principal symbol of [`combined_operator`] at `count` seeded random interior
/// nodes and 64 ξ directions, against `A_λ`.
pub fn qpat_principal_spot_check(lambda: f64, grid: Grid, count: usize, seed: u64) -> Result<SpotCheck> {
    let mut rng = draw::rng(seed);
    let nodes: Vec<(f64, f64)> = (0..count).map(|_| grid.coord_of(rng.random_range(0..grid.len()))).collect();
    let (mut dm, mut pm, mut me) = (0.0f64, 0.0f64, f64::INFINITY);
    for &x in &nodes {
        for (_, xi) in xi_samples(64) {
            let c = SymbolCalculus { x, xi };
            let s = combined_operator(&c, lambda, &Symbol::identity())?;
            if s.order != 2 {
                return Err(Error::InvalidArgument(format!("combined operator has order {}, expected 2", s.order)));
            }
            let want = second_order_symbol(a_lambda_derived(lambda, x.0, x.1), xi);
            let printed = second_order_symbol(a_lambda_printed(lambda, x.0, x.1), xi);
            dm = dm.max((s.value - want).norm() / want.abs());
            pm = pm.max((s.value - printed).norm() / printed.abs());
            me = me.min(s.value.norm());
        }
    }
    Ok(SpotCheck { nodes, derived_mismatch: dm, printed_mismatch: pm, min_ellipticity: me })
}

/// Dense real matrix of the ρ-system on Ω' columns, rows `(R₁, R₂)` over the
/// whole interior.
fn assemble_rho_system(lambda: f64, masks: &DomainMasks) -> Result<DMatrix<f64>> {
    let g = masks.grid();
    let calc = FieldCalculus::new(g)?;
    let cols = masks.omega_prime_nodes();
    let columns = cols
        .par_iter()
        .map(|&k| {
            let mut e = ScalarField::zeros(g);
            e.values_mut()[k] = C64::new(1.0, 0.0);
            let [r1, r2] = rho_system(&calc, lambda, &e)?;
            Ok(r1.values().iter().chain(r2.values()).map(|v| v.re).collect::<Vec<f64>>())
        })
        .collect::<Result<Vec<_>>>()?;
    let mut m = DMatrix::zeros(2 * g.len(), cols.len());
    for (j, c) in columns.iter().enumerate() {
        m.column_mut(j).copy_from_slice(c);
    }
    Ok(m)
}

/// Reconstructs `(ρ, ν)` from the linearized QPAT data for the three
/// boundary functions of [`qpat_background`]: `ν` is eliminated through the
/// `(1,2)` equation, `ρ` solved in least squares from the other two, then
/// `ν` recovered.
pub fn qpat_lambda_reconstruct(lambda: f64, a11: &ScalarField, a12: &ScalarField, a22: &ScalarField, masks: &DomainMasks) -> Result<ReconResult> {
    if !(lambda > 0.0 && lambda <= 0.5) {
        return Err(Error::InvalidArgument(format!("lambda must lie in (0, 0.5], got {lambda}")));
    }
    let g = masks.grid();
    for a in [a11, a12, a22] {
        g.check_same(&a.grid())?;
    }
    let calc = FieldCalculus::new(g)?;
    // λ²L_λ A = −ΔA + λ²A
    let l2 = |a: &ScalarField| -> Result<ScalarField> {
        let a = a.clone().without_boundary();
        a.scale_real(lambda * lambda).sub(&laplacian(&a))
    };
    let d = [l2(a11)?, l2(a12)?, l2(a22)?];
    let [rhs1, rhs2] = eliminate(&calc, lambda, [&d[0], &d[1], &d[2]])?;

    let m = assemble_rho_system(lambda, masks)?;
    let mt = m.transpose();
    let normal = &mt * &m;
    let eig = normal.symmetric_eigen();
    let emax = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    let cut = KERNEL_TOL * KERNEL_TOL * emax;
    let kernel = eig.eigenvalues.iter().filter(|&&e| e <= cut).count();
    let solve = |b: DVector<f64>| -> DVector<f64> {
        let mtb = &mt * b;
        let mut x = DVector::zeros(m.ncols());
        for (i, &e) in eig.eigenvalues.iter().enumerate() {
            if e > cut {
                let v = eig.eigenvectors.column(i);
                x += v * (v.dot(&mtb) / e);
            }
        }
        x
    };
    let b: Vec<C64> = rhs1.values().iter().chain(rhs2.values()).copied().collect();
    let xr = solve(DVector::from_iterator(b.len(), b.iter().map(|v| v.re)));
    let xi = solve(DVector::from_iterator(b.len(), b.iter().map(|v| v.im)));
    let mut rho = ScalarField::zeros(g);
    for (j, &k) in masks.omega_prime_nodes().iter().enumerate() {
        rho.values_mut()[k] = C64::new(xr[j], xi[j]);
    }

    let [_, u12, _] = qpat_solutions(lambda);
    let y12 = calc.flux(&rho, u12)?;
    let nu_u = calc.lap_inv(&y12.sub(&d[1])?)?;
    let nu = nu_u.mul(&ExpFn { a: [0.0, -lambda] }.field(g))?;
    Ok(ReconResult::new(ReconMethod::QpatLambda, masks, &rho, Some(&nu), kernel))
}
