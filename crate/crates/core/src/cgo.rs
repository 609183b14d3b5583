//! Complex geometrical optics solutions `u = e^{𝛒·x−σ/2}(1+ψ)` of the
//! conductivity equation `∇·(e^σ∇u) = 0`, with `𝛒·𝛒 = 0`.
//!
//! The remainder solves `Δψ + 2𝛒·∇ψ = q(1+ψ)`, `q = e^{−σ/2}Δe^{σ/2}`, on a
//! periodic box around the grid. ψ is taken quasi-periodic with a half-period
//! phase shift along `k`, which keeps the constant-coefficient symbol
//! `−|ξ|² + 2i𝛒·ξ` away from zero (`|Im| ≥ √2ρπ/L`), so the Fourier inverse
//! is bounded by `O(1/ρ)` and ψ = O(1/ρ) as the whole-space construction
//! requires. The integral equation `(I − G q)ψ = G q` is solved by restarted
//! GMRES.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::sync::Arc;

use num_complex::Complex64 as C64;
use rustfft::{Fft, FftPlanner};

use crate::elliptic::EllipticOperator;
use crate::error::{Error, Result};
use crate::grid::{gradient, BoundaryData, DomainMasks, Grid, ScalarField, VectorField};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// `𝛒 = (ρ/√2)(k + i k⊥)` with `k ⊥ k⊥` real unit vectors.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CgoVector {
    pub rho_mag: f64,
    pub k: [f64; 2],
    pub k_perp: [f64; 2],
    pub rho: [C64; 2],
}

impl CgoVector {
    pub fn new(rho_mag: f64, k: [f64; 2], k_perp: [f64; 2]) -> Result<Self> {
        let dot = |a: [f64; 2], b: [f64; 2]| a[0] * b[0] + a[1] * b[1];
        if !(rho_mag >= 0.0) || !rho_mag.is_finite() {
            return Err(Error::InvalidArgument(format!("|rho| must be finite and >= 0, got {rho_mag}")));
        }
        if (dot(k, k) - 1.0).abs() > 1e-14 || (dot(k_perp, k_perp) - 1.0).abs() > 1e-14 || dot(k, k_perp).abs() > 1e-14 {
            return Err(Error::InvalidArgument("k, k_perp must be orthonormal".into()));
        }
        let a = rho_mag * FRAC_1_SQRT_2;
        let rho = [C64::new(a * k[0], a * k_perp[0]), C64::new(a * k[1], a * k_perp[1])];
        Ok(Self { rho_mag, k, k_perp, rho })
    }

    /// `k = e₂`, `k⊥ = e₁`.
    pub fn standard(rho_mag: f64) -> Result<Self> {
        Self::new(rho_mag, [0.0, 1.0], [1.0, 0.0])
    }

    /// Bilinear `𝛒·𝛒`.
    pub fn dot_self(&self) -> C64 {
        self.rho[0] * self.rho[0] + self.rho[1] * self.rho[1]
    }

    fn a(&self) -> f64 {
        self.rho_mag * FRAC_1_SQRT_2
    }

    /// Growth exponent `(ρ/√2) k·x`.
    pub fn growth(&self, x: f64, y: f64) -> f64 {
        self.a() * (self.k[0] * x + self.k[1] * y)
    }

    /// Phase `θ(x) = (ρ/√2) k⊥·x`.
    pub fn phase(&self, x: f64, y: f64) -> f64 {
        self.a() * (self.k_perp[0] * x + self.k_perp[1] * y)
    }

    /// `e^{𝛒·x}`.
    pub fn exp_at(&self, x: f64, y: f64) -> C64 {
        C64::from_polar(self.growth(x, y).exp(), self.phase(x, y))
    }

    /// `Im(e^{𝛒·x}𝛒) = (ρ/√2) e^{(ρ/√2)k·x}(cos θ k⊥ + sin θ k)`.
    pub fn imag_gradient_leading(&self, x: f64, y: f64) -> [f64; 2] {
        let s = self.a() * self.growth(x, y).exp();
        let (sn, cs) = self.phase(x, y).sin_cos();
        [s * (cs * self.k_perp[0] + sn * self.k[0]), s * (cs * self.k_perp[1] + sn * self.k[1])]
    }

    /// Unit axis direction of `k`, if `k = ±e₁` or `±e₂`.
    fn axis(&self) -> Option<usize> {
        if self.k[1] == 0.0 && self.k[0].abs() == 1.0 {
            Some(0)
        } else if self.k[0] == 0.0 && self.k[1].abs() == 1.0 {
            Some(1)
        } else {
            None
        }
    }
}

/// Solver settings for the remainder equation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CgoOptions {
    pub tol: f64,
    pub restart: usize,
    pub max_iter: usize,
}

impl Default for CgoOptions {
    fn default() -> Self {
        Self { tol: 1e-11, restart: 60, max_iter: 2000 }
    }
}

#[derive(Clone, Debug)]
pub struct CgoSolution {
    pub rho: CgoVector,
    /// Remainder on the grid, boundary included.
    pub psi: ScalarField,
    /// `e^{𝛒·x−σ/2}(1+ψ)`, boundary included.
    pub u: ScalarField,
    pub grad_u: VectorField,
    /// `φ` in `∇u = e^{𝛒·x−σ/2}(𝛒 + φ)`.
    pub phi: VectorField,
    /// Relative GMRES residual of the remainder equation.
    pub residual: f64,
    pub iterations: usize,
    /// `‖L_h u‖ / (|𝛒|²‖e^σ u‖)` over the interior, `L_h` the discrete
    /// conductivity (or diffusion) operator: the discretization defect of `u`.
    pub conductivity_residual: f64,
}

/// Builds the CGO solution for `σ` and `𝛒` with default solver settings.
pub fn make_cgo(sigma: &ScalarField, rho: &CgoVector) -> Result<CgoSolution> {
    make_cgo_with(sigma, None, rho, CgoOptions::default())
}

/// CGO solution of the diffusion equation `−∇·(e^σ∇u) + e^γ u = 0`; the
/// remainder potential gains `e^{γ−σ}` on the grid.
pub fn make_cgo_diffusion(sigma: &ScalarField, gamma: &ScalarField, rho: &CgoVector) -> Result<CgoSolution> {
    make_cgo_with(sigma, Some(gamma), rho, CgoOptions::default())
}

pub fn make_cgo_with(sigma: &ScalarField, gamma: Option<&ScalarField>, rho: &CgoVector, opts: CgoOptions) -> Result<CgoSolution> {
    let grid = sigma.grid();
    if let Some(g) = gamma {
        grid.check_same(&g.grid())?;
    }
    let sigma = &with_boundary_or_zero(sigma);
    let axis = rho
        .axis()
        .ok_or_else(|| Error::InvalidArgument("CGO construction needs k along a coordinate axis".into()))?;
    let bx = PeriodicBox::around(grid);
    let corners = [(bx.origin.0, bx.origin.1), (bx.origin.0 + bx.len, bx.origin.1 + bx.len)];
    let max_growth = corners
        .iter()
        .flat_map(|&(x, _)| corners.iter().map(move |&(_, y)| (x, y)))
        .map(|(x, y)| rho.growth(x, y).abs())
        .fold(0.0, f64::max);
    if max_growth > 700.0 {
        return Err(Error::Overflow(format!("e^(rho.x) with exponent {max_growth:.1} on the CGO box")));
    }

    let mut q_grid = potential(sigma);
    if let Some(g) = gamma {
        q_grid = q_grid.add(&g.zip_with(sigma, |g, s| (g - s).exp())?.without_boundary())?;
    }
    let q = bx.embed(&q_grid);
    let shift = {
        let mut s = [0.0; 2];
        s[axis] = PI / bx.len;
        s
    };
    let solver = RemainderSolver::new(&bx, rho, shift);
    let rhs = solver.apply_g(&q);
    let (psi_box, residual, iterations) = if q.iter().all(|v| *v == ZERO) {
        (vec![ZERO; rhs.len()], 0.0, 0)
    } else {
        gmres(
            |x| {
                let qx: Vec<C64> = x.iter().zip(&q).map(|(a, b)| a * b).collect();
                let g = solver.apply_g(&qx);
                x.iter().zip(g).map(|(a, b)| a - b).collect()
            },
            &rhs,
            opts,
        )?
    };
    let [dpsi1, dpsi2] = solver.gradient(&psi_box);

    let psi = bx.restrict(grid, &psi_box);
    let sig_pad = sigma.padded_values();
    let m = grid.padded_side();
    let mut u_pad = vec![ZERO; m * m];
    for pj in 0..m {
        for pi in 0..m {
            let (x, y) = grid.padded_coord(pi, pj);
            let p = pj * m + pi;
            let b = bx.index_of_padded(pi, pj);
            u_pad[p] = rho.exp_at(x, y) * (-sig_pad[p] * 0.5).exp() * (psi_box[b] + 1.0);
        }
    }
    let u = padded_to_field(grid, &u_pad);

    let grad_sigma = gradient(sigma);
    let mut phi1 = Vec::with_capacity(grid.len());
    let mut phi2 = Vec::with_capacity(grid.len());
    let mut gu1 = Vec::with_capacity(grid.len());
    let mut gu2 = Vec::with_capacity(grid.len());
    for k in 0..grid.len() {
        let (i, j) = grid.ij(k);
        let (x, y) = grid.coord(i, j);
        let b = bx.index_of_padded(i + 1, j + 1);
        let ps = psi_box[b];
        let gs = grad_sigma.at(k);
        let f1 = rho.rho[0] * ps + dpsi1[b] - (ps + 1.0) * gs[0] * 0.5;
        let f2 = rho.rho[1] * ps + dpsi2[b] - (ps + 1.0) * gs[1] * 0.5;
        let e = rho.exp_at(x, y) * (-sigma.values()[k] * 0.5).exp();
        phi1.push(f1);
        phi2.push(f2);
        gu1.push(e * (rho.rho[0] + f1));
        gu2.push(e * (rho.rho[1] + f2));
    }
    let phi = VectorField::new(ScalarField::from_values(grid, phi1)?, ScalarField::from_values(grid, phi2)?)?;
    let grad_u = VectorField::new(ScalarField::from_values(grid, gu1)?, ScalarField::from_values(grid, gu2)?)?;

    let op = match gamma {
        Some(g) => EllipticOperator::diffusion(sigma, g)?,
        None => EllipticOperator::conductivity(sigma)?,
    };
    let ku = op.apply(&u)?;
    let scale = rho.rho_mag * rho.rho_mag * u.zip_with(sigma, |u, s| u * s.exp())?.without_boundary().norm_l2();
    let conductivity_residual = if scale > 0.0 { ku.norm_l2() / scale } else { ku.norm_l2() };

    Ok(CgoSolution { rho: *rho, psi, u, grad_u, phi, residual, iterations, conductivity_residual })
}

fn padded_to_field(grid: Grid, pad: &[C64]) -> ScalarField {
    let m = grid.padded_side();
    let values = (0..grid.len())
        .map(|k| {
            let (i, j) = grid.ij(k);
            pad[(j + 1) * m + i + 1]
        })
        .collect();
    let boundary = (0..grid.boundary_len())
        .map(|b| {
            let (pi, pj) = grid.boundary_node(b);
            pad[pj * m + pi]
        })
        .collect();
    ScalarField::from_values(grid, values).and_then(|f| f.with_boundary(boundary)).expect("sizes match the grid")
}

fn with_boundary_or_zero(f: &ScalarField) -> ScalarField {
    match f.boundary() {
        Some(_) => f.clone(),
        None => {
            let b = vec![ZERO; f.grid().boundary_len()];
            f.clone().with_boundary(b).expect("boundary length matches")
        }
    }
}

/// `q = e^{−σ/2} Δ_h e^{σ/2}` on interior nodes, zero on the boundary.
fn potential(sigma: &ScalarField) -> ScalarField {
    let s = sigma.map(|v| (v * 0.5).exp());
    let lap = crate::grid::laplacian(&s);
    lap.zip_with(&s.clone().without_boundary(), |l, e| l / e).expect("same grid").without_boundary()
}

/// The periodic `M × M` lattice `[x₀ − o·h, x₀ − o·h + M·h)²` sharing the
/// grid spacing, with `o = ⌈(n+1)/2⌉` extra nodes on each side.
struct PeriodicBox {
    m: usize,
    off: usize,
    h: f64,
    len: f64,
    origin: (f64, f64),
}

impl PeriodicBox {
    fn around(grid: Grid) -> Self {
        let n = grid.n();
        let off = (n + 1).div_ceil(2);
        let m = n + 1 + 2 * off;
        let h = grid.h();
        let r = grid.rect();
        Self { m, off, h, len: m as f64 * h, origin: (r.x0 - off as f64 * h, r.y0 - off as f64 * h) }
    }

    fn coord(&self, b: usize) -> (f64, f64) {
        let (a1, a2) = (b % self.m, b / self.m);
        (self.origin.0 + a1 as f64 * self.h, self.origin.1 + a2 as f64 * self.h)
    }

    fn index_of_padded(&self, pi: usize, pj: usize) -> usize {
        (pj + self.off) * self.m + pi + self.off
    }

    /// Interior values placed in the box, zero elsewhere.
    fn embed(&self, f: &ScalarField) -> Vec<C64> {
        let grid = f.grid();
        let mut out = vec![ZERO; self.m * self.m];
        for k in 0..grid.len() {
            let (i, j) = grid.ij(k);
            out[self.index_of_padded(i + 1, j + 1)] = f.values()[k];
        }
        out
    }

    fn restrict(&self, grid: Grid, v: &[C64]) -> ScalarField {
        let m = grid.padded_side();
        let pad: Vec<C64> = (0..m * m).map(|p| v[self.index_of_padded(p % m, p / m)]).collect();
        padded_to_field(grid, &pad)
    }
}

/// Fourier inverse of `Δ + 2𝛒·∇` on quasi-periodic functions
/// `ψ = e^{iβ·x} × periodic`.
struct RemainderSolver {
    m: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    /// `e^{iβ·x}` per box node.
    twist: Vec<C64>,
    /// Wave vectors per Fourier mode.
    xi: Vec<[f64; 2]>,
    inv_symbol: Vec<C64>,
}

impl RemainderSolver {
    fn new(bx: &PeriodicBox, rho: &CgoVector, beta: [f64; 2]) -> Self {
        let m = bx.m;
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(m);
        let inv = planner.plan_fft_inverse(m);
        let twist = (0..m * m)
            .map(|b| {
                let (x, y) = bx.coord(b);
                C64::from_polar(1.0, beta[0] * x + beta[1] * y)
            })
            .collect();
        let freq = |a: usize| {
            let s = if a < m / 2 { a as f64 } else { a as f64 - m as f64 };
            2.0 * PI * s / bx.len
        };
        let xi: Vec<[f64; 2]> = (0..m * m).map(|b| [freq(b % m) + beta[0], freq(b / m) + beta[1]]).collect();
        let inv_symbol = xi
            .iter()
            .map(|x| {
                let rx = rho.rho[0] * x[0] + rho.rho[1] * x[1];
                let s = C64::new(-(x[0] * x[0] + x[1] * x[1]), 0.0) + C64::i() * rx * 2.0;
                1.0 / s
            })
            .collect();
        Self { m, fwd, inv, twist, xi, inv_symbol }
    }

    fn fft2(&self, data: &mut [C64], plan: &Arc<dyn Fft<f64>>) {
        let m = self.m;
        plan.process(data);
        let mut t = vec![ZERO; m * m];
        for r in 0..m {
            for c in 0..m {
                t[c * m + r] = data[r * m + c];
            }
        }
        plan.process(&mut t);
        for r in 0..m {
            for c in 0..m {
                data[r * m + c] = t[c * m + r];
            }
        }
    }

    fn spectrum(&self, f: &[C64]) -> Vec<C64> {
        let mut d: Vec<C64> = f.iter().zip(&self.twist).map(|(a, t)| a * t.conj()).collect();
        self.fft2(&mut d, &self.fwd);
        d
    }

    fn synthesize(&self, mut d: Vec<C64>) -> Vec<C64> {
        self.fft2(&mut d, &self.inv);
        let s = 1.0 / (self.m * self.m) as f64;
        d.iter().zip(&self.twist).map(|(a, t)| a * t * s).collect()
    }

    fn apply_g(&self, f: &[C64]) -> Vec<C64> {
        let mut d = self.spectrum(f);
        for (v, s) in d.iter_mut().zip(&self.inv_symbol) {
            *v *= s;
        }
        self.synthesize(d)
    }

    fn gradient(&self, psi: &[C64]) -> [Vec<C64>; 2] {
        let d = self.spectrum(psi);
        let comp = |c: usize| {
            let dc: Vec<C64> = d.iter().zip(&self.xi).map(|(v, x)| v * C64::new(0.0, x[c])).collect();
            self.synthesize(dc)
        };
        [comp(0), comp(1)]
    }
}

/// Restarted GMRES with modified Gram-Schmidt and Givens rotations.
/// Returns the solution, final relative residual and iteration count.
fn gmres(apply: impl Fn(&[C64]) -> Vec<C64>, b: &[C64], opts: CgoOptions) -> Result<(Vec<C64>, f64, usize)> {
    let norm = |v: &[C64]| v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let bnorm = norm(b);
    let mut x = vec![ZERO; b.len()];
    if bnorm == 0.0 {
        return Ok((x, 0.0, 0));
    }
    let mut iters = 0;
    loop {
        let ax = apply(&x);
        let r: Vec<C64> = b.iter().zip(&ax).map(|(a, c)| a - c).collect();
        let beta = norm(&r);
        if beta <= opts.tol * bnorm {
            return Ok((x, beta / bnorm, iters));
        }
        if iters >= opts.max_iter {
            return Err(Error::NoConvergence(format!("GMRES residual {:.3e} after {iters} iterations", beta / bnorm)));
        }
        let mut basis: Vec<Vec<C64>> = vec![r.iter().map(|z| z / beta).collect()];
        let mut hess: Vec<Vec<C64>> = Vec::new();
        let mut cs: Vec<C64> = Vec::new();
        let mut sn: Vec<C64> = Vec::new();
        let mut g = vec![C64::new(beta, 0.0)];
        for j in 0..opts.restart {
            iters += 1;
            let mut w = apply(&basis[j]);
            let mut col = vec![ZERO; j + 2];
            for (i, v) in basis.iter().enumerate() {
                let hij: C64 = v.iter().zip(&w).map(|(a, c)| a.conj() * c).sum();
                col[i] = hij;
                for (wk, vk) in w.iter_mut().zip(v) {
                    *wk -= hij * vk;
                }
            }
            let hn = norm(&w);
            col[j + 1] = C64::new(hn, 0.0);
            for i in 0..j {
                let t = cs[i].conj() * col[i] + sn[i].conj() * col[i + 1];
                col[i + 1] = -sn[i] * col[i] + cs[i] * col[i + 1];
                col[i] = t;
            }
            let d = (col[j].norm_sqr() + col[j + 1].norm_sqr()).sqrt();
            let (c, s) = if d == 0.0 { (C64::new(1.0, 0.0), ZERO) } else { (col[j] / d, col[j + 1] / d) };
            col[j] = C64::new(d, 0.0);
            col[j + 1] = ZERO;
            g.push(-s * g[j]);
            g[j] = c.conj() * g[j];
            cs.push(c);
            sn.push(s);
            hess.push(col);
            let done = g[j + 1].norm() <= opts.tol * bnorm || hn == 0.0 || iters >= opts.max_iter;
            if !done {
                basis.push(w.iter().map(|z| z / hn).collect());
            }
            if done || j + 1 == opts.restart {
                let k = j + 1;
                let mut y = vec![ZERO; k];
                for i in (0..k).rev() {
                    let mut s = g[i];
                    for l in i + 1..k {
                        s -= hess[l][i] * y[l];
                    }
                    y[i] = s / hess[i][i];
                }
                for (i, yi) in y.iter().enumerate() {
                    for (xk, vk) in x.iter_mut().zip(&basis[i]) {
                        *xk += yi * vk;
                    }
                }
                break;
            }
        }
    }
}

/// Imaginary parts of a CGO solution and the closed-form leading gradient.
#[derive(Clone, Debug)]
pub struct CgoImagParts {
    pub u_i: ScalarField,
    pub f_i: BoundaryData,
    pub grad_u_i: VectorField,
    /// `Im(e^{𝛒·x}𝛒)` at the interior nodes.
    pub leading: VectorField,
}

pub fn cgo_imag_parts(sol: &CgoSolution) -> Result<CgoImagParts> {
    let grid = sol.u.grid();
    let u_i = sol.u.im();
    let f_i = BoundaryData::trace_of(&u_i)?;
    let grad_u_i = VectorField::new(sol.grad_u.c1.im(), sol.grad_u.c2.im())?;
    let lead = |c: usize| {
        ScalarField::from_real_fn(grid, |x, y| sol.rho.imag_gradient_leading(x, y)[c]).without_boundary()
    };
    let leading = VectorField::new(lead(0), lead(1))?;
    Ok(CgoImagParts { u_i, f_i, grad_u_i, leading })
}

/// Pair field `V = u₂∇u₁ − u₁∇u₂` of imaginary parts, with its leading-order
/// form `e^{(a₁+a₂)k·x}[(a₁ sin θ₂ cos θ₁ − a₂ sin θ₁ cos θ₂)k⊥ + (a₁−a₂) sin θ₁ sin θ₂ k]`,
/// `a_l = ρ_l/√2`.
#[derive(Clone, Debug)]
pub struct PairField {
    pub v: VectorField,
    pub leading: VectorField,
}

pub fn cgo_pair_fields(pairs: &[(CgoSolution, CgoSolution)]) -> Result<Vec<PairField>> {
    pairs
        .iter()
        .map(|(s1, s2)| {
            if s1.rho.k != s2.rho.k || s1.rho.k_perp != s2.rho.k_perp {
                return Err(Error::InvalidArgument("CGO pair must share k and k_perp".into()));
            }
            let p1 = cgo_imag_parts(s1)?;
            let p2 = cgo_imag_parts(s2)?;
            let u1 = p1.u_i.clone().without_boundary();
            let u2 = p2.u_i.clone().without_boundary();
            let v = p1.grad_u_i.scale_by(&u2)?.sub(&p2.grad_u_i.scale_by(&u1)?)?;
            let grid = u1.grid();
            let (r1, r2) = (s1.rho, s2.rho);
            let lead = |c: usize| {
                ScalarField::from_real_fn(grid, |x, y| {
                    let (a1, a2) = (r1.a(), r2.a());
                    let (s1n, c1) = r1.phase(x, y).sin_cos();
                    let (s2n, c2) = r2.phase(x, y).sin_cos();
                    let e = (r1.growth(x, y) + r2.growth(x, y)).exp();
                    e * ((a1 * s2n * c1 - a2 * s1n * c2) * r1.k_perp[c] + (a1 - a2) * s1n * s2n * r1.k[c])
                })
                .without_boundary()
            };
            Ok(PairField { v, leading: VectorField::new(lead(0), lead(1))? })
        })
        .collect()
}

/// `sup |ρψ|` over the grid (boundary included).
pub fn sup_rho_psi(sol: &CgoSolution) -> f64 {
    let b = sol.psi.boundary().map(|b| b.iter().map(|v| v.norm()).fold(0.0, f64::max)).unwrap_or(0.0);
    sol.rho.rho_mag * sol.psi.max_abs().max(b)
}

/// Pointwise max over Ω'' of `|u_I ∇u| / |u ∇u_I|` for a real positive
/// solution `u` of the background equation given with its gradient.
pub fn gradient_ratio(sol: &CgoSolution, u: &ScalarField, grad_u: &VectorField, masks: &DomainMasks) -> Result<f64> {
    let parts = cgo_imag_parts(sol)?;
    let mut worst: f64 = 0.0;
    for k in masks.omega_dprime_nodes() {
        let ui = parts.u_i.values()[k].re;
        let gi = parts.grad_u_i.at(k);
        let g = grad_u.at(k);
        let uk = u.values()[k].re;
        let num = ui.abs() * (g[0].norm_sqr() + g[1].norm_sqr()).sqrt();
        let den = uk.abs() * (gi[0].re.powi(2) + gi[1].re.powi(2)).sqrt();
        worst = worst.max(num / den);
    }
    Ok(worst)
}
