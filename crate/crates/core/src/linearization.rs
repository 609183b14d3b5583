//! Fréchet derivatives of the data functionals as matrix-free linear maps,
//! dense assembly on Ω'-supported perturbations, and finite-difference
//! validation ladders.
//!
//! All derivatives are exact derivatives of the *discrete* forward maps, so
//! Taylor residuals shrink quadratically down to rounding.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::elliptic::{flux_divergence, BcKind, EllipticOperator};
use crate::error::{Error, Result};
use crate::grid::{gradient, BoundaryData, DomainMasks, Grid, ScalarField, VectorField};

/// A linear map from Ω'-supported perturbations to interior data.
pub trait LinearMap: Sync {
    /// Number of perturbation fields (1, or 2 for QPAT `(ρ, ν)`).
    fn arity(&self) -> usize;

    fn masks(&self) -> &DomainMasks;

    /// Applies the map. Inputs are restricted to their admissible supports
    /// first, so zero-extended and restricted inputs give identical output.
    fn apply(&self, inputs: &[ScalarField]) -> Result<ScalarField>;

    fn grid(&self) -> Grid {
        self.masks().grid()
    }

    /// Support of input `slot` as a node mask.
    fn support(&self, _slot: usize) -> Vec<bool> {
        self.masks().omega_prime().to_vec()
    }
}

fn restrict(field: &ScalarField, support: &[bool]) -> ScalarField {
    let mut out = field.clone().without_boundary();
    for (v, &s) in out.values_mut().iter_mut().zip(support) {
        if !s {
            *v = C64::new(0.0, 0.0);
        }
    }
    out
}

fn check_arity(map: &dyn LinearMap, inputs: &[ScalarField]) -> Result<()> {
    if inputs.len() != map.arity() {
        return Err(Error::InvalidArgument(format!("expected {} inputs, got {}", map.arity(), inputs.len())));
    }
    for f in inputs {
        map.grid().check_same(&f.grid())?;
    }
    Ok(())
}

/// `ρ ↦ ρ` on Ω' (zero elsewhere).
pub struct IdentityMap {
    masks: DomainMasks,
}

impl IdentityMap {
    pub fn new(masks: DomainMasks) -> Self {
        Self { masks }
    }
}

impl LinearMap for IdentityMap {
    fn arity(&self) -> usize {
        1
    }

    fn masks(&self) -> &DomainMasks {
        &self.masks
    }

    fn apply(&self, inputs: &[ScalarField]) -> Result<ScalarField> {
        check_arity(self, inputs)?;
        Ok(restrict(&inputs[0], self.masks.omega_prime()))
    }
}

/// Linearization of the p-power density `e^{2σ/p} ∇u·∇u`.
pub struct AetLinearization {
    masks: DomainMasks,
    sigma: ScalarField,
    u: ScalarField,
    grad_u: VectorField,
    p: f64,
    op: EllipticOperator,
}

impl AetLinearization {
    pub fn new(masks: &DomainMasks, sigma: &ScalarField, f: &BoundaryData, p: f64) -> Result<Self> {
        if !(p > 0.0) {
            return Err(Error::InvalidArgument(format!("p must be positive, got {p}")));
        }
        let op = EllipticOperator::conductivity(sigma)?;
        let u = op.solve(&ScalarField::zeros(sigma.grid()), f)?;
        let grad_u = gradient(&u);
        Ok(Self { masks: masks.clone(), sigma: sigma.clone(), u, grad_u, p, op })
    }

    pub fn u(&self) -> &ScalarField {
        &self.u
    }

    pub fn grad_u(&self) -> &VectorField {
        &self.grad_u
    }

    /// `v(ρ)`: `-∇·(e^σ∇v) = ∇·(ρ e^σ ∇u)`, `v = 0` on ∂Ω.
    pub fn v_of(&self, rho: &ScalarField) -> Result<ScalarField> {
        self.op.solve_homogeneous(&flux_divergence(rho, &self.sigma, &self.u)?)
    }
}

impl LinearMap for AetLinearization {
    fn arity(&self) -> usize {
        1
    }

    fn masks(&self) -> &DomainMasks {
        &self.masks
    }

    fn apply(&self, inputs: &[ScalarField]) -> Result<ScalarField> {
        check_arity(self, inputs)?;
        let rho = restrict(&inputs[0], self.masks.omega_prime());
        let v = self.v_of(&rho)?;
        let gv = gradient(&v);
        let p = self.p;
        let uu = self.grad_u.dot_pointwise(&self.grad_u)?;
        let uv = self.grad_u.dot_pointwise(&gv)?;
        let vals = (0..self.grid().len())
            .map(|k| {
                let w = (self.sigma.values()[k] * (2.0 / p)).exp() * (2.0 / p);
                w * (rho.values()[k] * uu.values()[k] + uv.values()[k] * p)
            })
            .collect();
        ScalarField::from_values(self.grid(), vals)
    }
}

/// Which zeroth-order term the cross linearization carries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum CrossForm {
    /// `2ρ e^{2σ} ∇u₁·∇u₂`: the derivative of `e^{2σ}∇u₁·∇u₂`.
    #[default]
    Consistent,
    /// `ρ e^{2σ} (∇u₁·∇u₂)²`, as the cross row is sometimes printed.
    AsPrinted,
}

/// Linearization of the cross functional `e^{2σ} ∇u₁·∇u₂`.
pub struct AetCrossLinearization {
    masks: DomainMasks,
    sigma: ScalarField,
    u1: ScalarField,
    u2: ScalarField,
    g1: VectorField,
    g2: VectorField,
    form: CrossForm,
    op: EllipticOperator,
}

impl AetCrossLinearization {
    pub fn new(masks: &DomainMasks, sigma: &ScalarField, f1: &BoundaryData, f2: &BoundaryData, form: CrossForm) -> Result<Self> {
        let op = EllipticOperator::conductivity(sigma)?;
        let zero = ScalarField::zeros(sigma.grid());
        let u1 = op.solve(&zero, f1)?;
        let u2 = op.solve(&zero, f2)?;
        let g1 = gradient(&u1);
        let g2 = gradient(&u2);
        Ok(Self { masks: masks.clone(), sigma: sigma.clone(), u1, u2, g1, g2, form, op })
    }

    pub fn form(&self) -> CrossForm {
        self.form
    }
}

impl LinearMap for AetCrossLinearization {
    fn arity(&self) -> usize {
        1
    }

    fn masks(&self) -> &DomainMasks {
        &self.masks
    }

    fn apply(&self, inputs: &[ScalarField]) -> Result<ScalarField> {
        check_arity(self, inputs)?;
        let rho = restrict(&inputs[0], self.masks.omega_prime());
        let v1 = self.op.solve_homogeneous(&flux_divergence(&rho, &self.sigma, &self.u1)?)?;
        let v2 = self.op.solve_homogeneous(&flux_divergence(&rho, &self.sigma, &self.u2)?)?;
        let d12 = self.g1.dot_pointwise(&self.g2)?;
        let a = self.g1.dot_pointwise(&gradient(&v2))?;
        let b = self.g2.dot_pointwise(&gradient(&v1))?;
        let vals = (0..self.grid().len())
            .map(|k| {
                let e = (self.sigma.values()[k] * 2.0).exp();
                let d = d12.values()[k];
                let zeroth = match self.form {
                    CrossForm::Consistent => d * 2.0,
                    CrossForm::AsPrinted => d * d,
                };
                e * (rho.values()[k] * zeroth + a.values()[k] + b.values()[k])
            })
            .collect();
        ScalarField::from_values(self.grid(), vals)
    }
}

/// Linearization of `e^γ u` in `(ρ, ν)`; ν is additionally zeroed on the
/// Ω' collar.
pub struct QpatLinearization {
    masks: DomainMasks,
    sigma0: ScalarField,
    gamma0: ScalarField,
    u0: ScalarField,
    op: EllipticOperator,
    nu_support: Vec<bool>,
}

impl QpatLinearization {
    pub fn new(masks: &DomainMasks, sigma0: &ScalarField, gamma0: &ScalarField, f: &BoundaryData) -> Result<Self> {
        let op = EllipticOperator::diffusion(sigma0, gamma0)?;
        let u0 = op.solve(&ScalarField::zeros(sigma0.grid()), f)?;
        let collar = masks.omega_prime_collar();
        let nu_support = masks.omega_prime().iter().zip(&collar).map(|(&a, &c)| a && !c).collect();
        Ok(Self { masks: masks.clone(), sigma0: sigma0.clone(), gamma0: gamma0.clone(), u0, op, nu_support })
    }

    pub fn u0(&self) -> &ScalarField {
        &self.u0
    }

    pub fn operator(&self) -> &EllipticOperator {
        &self.op
    }

    /// One solve: `e^{γ₀}(v + ν u₀)` with
    /// `L v = ∇·(ρ e^{σ₀}∇u₀) − ν e^{γ₀} u₀`.
    fn apply_combined(&self, rho: &ScalarField, nu: &ScalarField) -> Result<ScalarField> {
        let eg = self.gamma0.map(|g| g.exp()).without_boundary();
        let nu_u = nu.mul(&self.u0)?.without_boundary();
        let src = flux_divergence(rho, &self.sigma0, &self.u0)?.sub(&eg.mul(&nu_u)?)?;
        let v = self.op.solve_homogeneous(&src)?.without_boundary();
        eg.mul(&v.add(&nu_u)?)
    }

    /// Three terms with separate solves:
    /// `e^{γ₀}[ν u₀ − L⁻¹(ν e^{γ₀} u₀) + L⁻¹(∇·(ρ e^{σ₀}∇u₀))]`.
    pub fn apply_three_term(&self, inputs: &[ScalarField]) -> Result<ScalarField> {
        check_arity(self, inputs)?;
        let rho = restrict(&inputs[0], self.masks.omega_prime());
        let nu = restrict(&inputs[1], &self.nu_support);
        let eg = self.gamma0.map(|g| g.exp()).without_boundary();
        let nu_u = nu.mul(&self.u0)?.without_boundary();
        let t2 = self.op.solve_homogeneous(&eg.mul(&nu_u)?)?.without_boundary();
        let t3 = self.op.solve_homogeneous(&flux_divergence(&rho, &self.sigma0, &self.u0)?)?.without_boundary();
        eg.mul(&nu_u.sub(&t2)?.add(&t3)?)
    }
}

impl LinearMap for QpatLinearization {
    fn arity(&self) -> usize {
        2
    }

    fn masks(&self) -> &DomainMasks {
        &self.masks
    }

    fn support(&self, slot: usize) -> Vec<bool> {
        if slot == 0 {
            self.masks.omega_prime().to_vec()
        } else {
            self.nu_support.clone()
        }
    }

    fn apply(&self, inputs: &[ScalarField]) -> Result<ScalarField> {
        check_arity(self, inputs)?;
        let rho = restrict(&inputs[0], self.masks.omega_prime());
        let nu = restrict(&inputs[1], &self.nu_support);
        self.apply_combined(&rho, &nu)
    }
}

/// Linearization of `u_μ G_μ(η, ·)` in the absorption `μ`.
pub struct UmotLinearization {
    masks: DomainMasks,
    mu0: ScalarField,
    u0: ScalarField,
    g0: ScalarField,
    op_b: EllipticOperator,
    op_c: EllipticOperator,
}

impl UmotLinearization {
    pub fn new(masks: &DomainMasks, mu0: &ScalarField, s: &BoundaryData, eta: usize, b_kind: BcKind, c_kind: BcKind) -> Result<Self> {
        let op_b = EllipticOperator::schrodinger(mu0, b_kind.clone())?;
        let op_c = if b_kind == c_kind { op_b.clone() } else { EllipticOperator::schrodinger(mu0, c_kind)? };
        let u0 = op_b.solve(&ScalarField::zeros(mu0.grid()), s)?;
        let g0 = op_c.greens_column(eta)?;
        Ok(Self { masks: masks.clone(), mu0: mu0.clone(), u0, g0, op_b, op_c })
    }

    pub fn u0(&self) -> &ScalarField {
        &self.u0
    }

    pub fn g0(&self) -> &ScalarField {
        &self.g0
    }

    pub fn mu0(&self) -> &ScalarField {
        &self.mu0
    }
}

impl LinearMap for UmotLinearization {
    fn arity(&self) -> usize {
        1
    }

    fn masks(&self) -> &DomainMasks {
        &self.masks
    }

    fn apply(&self, inputs: &[ScalarField]) -> Result<ScalarField> {
        check_arity(self, inputs)?;
        let mu1 = restrict(&inputs[0], self.masks.omega_prime());
        let w = self.mu0.map(|m| -m.exp()).without_boundary().mul(&mu1)?;
        let u1 = self.op_b.solve_homogeneous(&w.mul(&self.u0)?.without_boundary())?;
        let g1 = self.op_c.solve_homogeneous(&w.mul(&self.g0)?.without_boundary())?;
        let a = u1.without_boundary().mul(&self.g0.clone().without_boundary())?;
        let b = self.u0.clone().without_boundary().mul(&g1.without_boundary())?;
        a.add(&b)
    }
}

/// Default cap on Ω' side length for dense assembly.
pub const DENSE_LIMIT: usize = 40;

/// Dense matrix of a linear map: rows are Ω' data nodes (per stacked map),
/// columns the admissible perturbation nodes (ρ block, then ν block).
///
/// Rows and columns carry the same quadrature weight `h`, so the matrix
/// represents the map between discrete L² spaces as is.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseOperator {
    pub matrix: DMatrix<C64>,
    /// `(map index, node)` per row.
    pub row_map: Vec<(usize, usize)>,
    /// `(input slot, node)` per column.
    pub col_map: Vec<(usize, usize)>,
    pub weight: f64,
    pub grid: Grid,
}

impl DenseOperator {
    /// Packs input fields into a column-space vector.
    pub fn pack(&self, inputs: &[ScalarField]) -> Vec<C64> {
        self.col_map.iter().map(|&(s, k)| inputs[s].values()[k]).collect()
    }

    /// Unpacks a column-space vector into `arity` fields.
    pub fn unpack(&self, x: &[C64]) -> Vec<ScalarField> {
        let arity = self.col_map.iter().map(|c| c.0 + 1).max().unwrap_or(1);
        let mut out = vec![ScalarField::zeros(self.grid); arity];
        for (&(s, k), &v) in self.col_map.iter().zip(x) {
            out[s].values_mut()[k] = v;
        }
        out
    }

    /// Restricts data fields (one per stacked map) to the row layout.
    pub fn pack_rows(&self, data: &[ScalarField]) -> Vec<C64> {
        self.row_map.iter().map(|&(m, k)| data[m].values()[k]).collect()
    }

    pub fn matvec(&self, x: &[C64]) -> Vec<C64> {
        let v = nalgebra::DVector::from_column_slice(x);
        (&self.matrix * v).iter().copied().collect()
    }
}

fn column_map(map: &dyn LinearMap) -> Vec<(usize, usize)> {
    let mut cols = Vec::new();
    for s in 0..map.arity() {
        let sup = map.support(s);
        cols.extend((0..sup.len()).filter(|&k| sup[k]).map(|k| (s, k)));
    }
    cols
}

/// Assembles one map; see [`assemble_stacked`].
pub fn assemble(map: &dyn LinearMap, masks: &DomainMasks) -> Result<DenseOperator> {
    assemble_stacked(&[map], masks)
}

/// Assembles `k` maps sharing their input space into a `(k·|Ω'|) × cols`
/// matrix, rows in map order. One apply per column, run in parallel.
pub fn assemble_stacked(maps: &[&dyn LinearMap], masks: &DomainMasks) -> Result<DenseOperator> {
    assemble_stacked_with_limit(maps, masks, DENSE_LIMIT)
}

pub fn assemble_stacked_with_limit(maps: &[&dyn LinearMap], masks: &DomainMasks, limit: usize) -> Result<DenseOperator> {
    let first = *maps.first().ok_or_else(|| Error::InvalidArgument("no maps to assemble".into()))?;
    let side = masks.omega_prime_side();
    if side > limit {
        return Err(Error::DenseLimit(format!("Ω' is {side}x{side}, limit {limit}x{limit} per block")));
    }
    let grid = masks.grid();
    for m in maps {
        grid.check_same(&m.grid())?;
        if m.arity() != first.arity() {
            return Err(Error::InvalidArgument("stacked maps must share their arity".into()));
        }
    }
    let cols = column_map(first);
    let rows_per = masks.omega_prime_nodes();
    let row_map: Vec<(usize, usize)> = (0..maps.len()).flat_map(|m| rows_per.iter().map(move |&k| (m, k))).collect();
    let columns: Vec<Result<Vec<C64>>> = cols
        .par_iter()
        .map(|&(slot, node)| {
            let mut inputs = vec![ScalarField::zeros(grid); first.arity()];
            inputs[slot].values_mut()[node] = C64::new(1.0, 0.0);
            let mut col = Vec::with_capacity(row_map.len());
            for m in maps {
                let out = m.apply(&inputs)?;
                col.extend(rows_per.iter().map(|&k| out.values()[k]));
            }
            Ok(col)
        })
        .collect();
    let mut matrix = DMatrix::zeros(row_map.len(), cols.len());
    for (j, col) in columns.into_iter().enumerate() {
        let col = col?;
        matrix.column_mut(j).copy_from_slice(&col);
    }
    Ok(DenseOperator { matrix, row_map, col_map: cols, weight: grid.h(), grid })
}

/// Taylor-remainder ladder for a linearization.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceReport {
    pub epsilons: Vec<f64>,
    pub residuals: Vec<f64>,
    pub ratios: Vec<f64>,
    /// Residual level treated as rounding noise (`1e-9 ‖F(a)‖`).
    pub floor: f64,
    pub pass: bool,
}

pub const RATIO_BAND: (f64, f64) = (3.2, 4.8);

/// Evaluates `‖F(a+εb) − F(a) − ε dF(b)‖` along `eps`.
///
/// `forward(ε)` returns `F(a+εb)`, with `forward(0)` the base value. PASS
/// iff every ratio lies in [3.2, 4.8], or the residual reaches the noise
/// floor and all ratios before it lie in the band.
pub fn validate_frechet(forward: &dyn Fn(f64) -> Result<ScalarField>, lin: &ScalarField, eps: &[f64]) -> Result<ConvergenceReport> {
    if eps.len() < 3 || eps.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidArgument("ladder needs >= 3 strictly decreasing steps".into()));
    }
    let base = forward(0.0)?;
    let floor = 1e-9 * base.norm_l2();
    let residuals = eps
        .iter()
        .map(|&e| {
            let fe = forward(e)?;
            Ok(fe.sub(&base)?.sub(&lin.scale_real(e))?.without_boundary().norm_l2())
        })
        .collect::<Result<Vec<f64>>>()?;
    let ratios: Vec<f64> = residuals.windows(2).map(|w| w[0] / w[1]).collect();
    let in_band = |r: f64| (RATIO_BAND.0..=RATIO_BAND.1).contains(&r);
    let pass = match residuals.iter().position(|&r| r <= floor) {
        Some(i) => ratios.iter().take(i.saturating_sub(1)).all(|&r| in_band(r)),
        None => ratios.iter().all(|&r| in_band(r)),
    };
    Ok(ConvergenceReport { epsilons: eps.to_vec(), residuals, ratios, floor, pass })
}

/// The ladder used throughout: `{1e-2, 5e-3, 2.5e-3}`.
pub const DEFAULT_LADDER: [f64; 3] = [1e-2, 5e-3, 2.5e-3];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::draw::{rng, smooth_draw};
    use crate::elliptic::CoefficientSet;
    use crate::forward::{cross_power, power_density, qpat_data, umot_data};
    use crate::grid::{laplacian, Bump};

    fn c(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    fn setup(n: usize) -> (Grid, DomainMasks) {
        let g = Grid::unit(n).unwrap();
        (g, DomainMasks::with_defaults(g).unwrap())
    }

    #[test]
    fn aet_reduced_form_at_zero_conductivity() {
        let (g, masks) = setup(31);
        let x1 = BoundaryData::from_real_fn(g, |x, _| x);
        let rho = Bump::new((0.5, 0.5), 0.2, 1.0).field(g);
        for p in [0.5, 2.0] {
            let lin = AetLinearization::new(&masks, &ScalarField::zeros(g), &x1, p).unwrap();
            let out = lin.apply(&[rho.clone()]).unwrap();
            // (2/p)(ρ − p D₁ Δ⁻¹ D₁ ρ), with the inner D₁ in flux form
            let rho_r = masks.restrict_to_omega_prime(&rho);
            let x1f = ScalarField::from_real_fn(g, |x, _| x);
            let inner = flux_divergence(&rho_r, &ScalarField::zeros(g), &x1f).unwrap();
            let w = crate::elliptic::laplacian_inverse_dirichlet(&inner).unwrap();
            let reduced = rho_r.without_boundary().sub(&crate::grid::d1(&w).scale_real(p)).unwrap().scale_real(2.0 / p);
            let err = out.sub(&reduced).unwrap().max_abs();
            assert!(err < 1e-10 * reduced.max_abs(), "p={p} err={err}");
        }
    }

    #[test]
    fn aet_zero_input_and_linearity() {
        let (g, masks) = setup(15);
        let sigma = Bump::centered(0.3).field(g);
        let lin = AetLinearization::new(&masks, &sigma, &BoundaryData::from_real_fn(g, |x, y| x + 0.3 * y), 0.5).unwrap();
        assert_eq!(lin.apply(&[ScalarField::zeros(g)]).unwrap().max_abs(), 0.0);
        let a = smooth_draw(&masks, &mut rng(1), 1.0);
        let b = smooth_draw(&masks, &mut rng(2), 1.0);
        let lhs = lin.apply(&[a.scale_real(2.0).add(&b.scale_real(-3.0)).unwrap()]).unwrap();
        let rhs = lin.apply(&[a.clone()]).unwrap().scale_real(2.0).add(&lin.apply(&[b]).unwrap().scale_real(-3.0)).unwrap();
        assert!(lhs.sub(&rhs).unwrap().max_abs() <= 1e-10 * lhs.max_abs());
        // zero extension: values outside Ω' are ignored
        let mut noisy = a.clone();
        for (k, v) in noisy.values_mut().iter_mut().enumerate() {
            if !masks.in_omega_prime(k) {
                *v = c(5.0);
            }
        }
        assert_eq!(lin.apply(&[noisy]).unwrap(), lin.apply(&[a]).unwrap());
    }

    #[test]
    fn aet_ladder_passes_and_scaled_map_fails() {
        let (g, masks) = setup(15);
        let mut r = rng(11);
        let sigma = smooth_draw(&masks, &mut r, 0.5);
        let rho = smooth_draw(&masks, &mut r, 1.0);
        let f = BoundaryData::from_real_fn(g, |x, y| x + 0.5 * y);
        let lin = AetLinearization::new(&masks, &sigma, &f, 0.5).unwrap();
        let d = lin.apply(&[rho.clone()]).unwrap();
        let fwd = |e: f64| -> Result<ScalarField> {
            let coeffs = CoefficientSet::with_sigma(sigma.add(&rho.scale_real(e))?).exponent(0.5);
            Ok(power_density(&coeffs, &f)?.field)
        };
        let rep = validate_frechet(&fwd, &d, &DEFAULT_LADDER).unwrap();
        assert!(rep.pass, "{rep:?}");
        let bad = validate_frechet(&fwd, &d.scale_real(1.1), &DEFAULT_LADDER).unwrap();
        assert!(!bad.pass);
        assert!(bad.ratios.iter().all(|r| (1.7..2.3).contains(r)), "{bad:?}");
    }

    #[test]
    fn identity_ladder_is_at_noise_floor() {
        let (g, masks) = setup(15);
        let b = smooth_draw(&masks, &mut rng(3), 1.0);
        let a = ScalarField::from_real_fn(g, |x, y| 1.0 + x * y);
        let id = IdentityMap::new(masks.clone());
        let lin = id.apply(&[b.clone()]).unwrap();
        let fwd = |e: f64| Ok(a.add(&b.scale_real(e))?.without_boundary());
        let rep = validate_frechet(&fwd, &lin, &DEFAULT_LADDER).unwrap();
        assert!(rep.pass);
        assert!(rep.residuals.iter().all(|&r| r <= rep.floor));
    }

    #[test]
    fn cross_forms_agree_on_orthogonal_data() {
        let (g, masks) = setup(15);
        let x1 = BoundaryData::from_real_fn(g, |x, _| x);
        let x2 = BoundaryData::from_real_fn(g, |_, y| y);
        let rho = Bump::centered(1.0).field(g);
        let zero = ScalarField::zeros(g);
        let a = AetCrossLinearization::new(&masks, &zero, &x1, &x2, CrossForm::Consistent).unwrap();
        let b = AetCrossLinearization::new(&masks, &zero, &x1, &x2, CrossForm::AsPrinted).unwrap();
        let oa = a.apply(&[rho.clone()]).unwrap();
        assert!(oa.sub(&b.apply(&[rho.clone()]).unwrap()).unwrap().max_abs() < 1e-14);
        // term by term: ∂₁v⁽²⁾ + ∂₂v⁽¹⁾
        let aet1 = AetLinearization::new(&masks, &zero, &x1, 2.0).unwrap();
        let aet2 = AetLinearization::new(&masks, &zero, &x2, 2.0).unwrap();
        let v1 = aet1.v_of(&masks.restrict_to_omega_prime(&rho)).unwrap();
        let v2 = aet2.v_of(&masks.restrict_to_omega_prime(&rho)).unwrap();
        let expect = crate::grid::d1(&v2).add(&crate::grid::d2(&v1)).unwrap();
        assert!(oa.sub(&expect).unwrap().max_abs() < 1e-12 * expect.max_abs());
    }

    #[test]
    fn cross_ladder_passes() {
        let (g, masks) = setup(15);
        let mut r = rng(5);
        let sigma = smooth_draw(&masks, &mut r, 0.5);
        let rho = smooth_draw(&masks, &mut r, 1.0);
        let f1 = BoundaryData::from_real_fn(g, |x, _| x);
        let f2 = BoundaryData::from_real_fn(g, |x, y| y + 0.2 * x);
        let lin = AetCrossLinearization::new(&masks, &sigma, &f1, &f2, CrossForm::Consistent).unwrap();
        let d = lin.apply(&[rho.clone()]).unwrap();
        let fwd = |e: f64| -> Result<ScalarField> {
            Ok(cross_power(&CoefficientSet::with_sigma(sigma.add(&rho.scale_real(e))?), &f1, &f2)?.field)
        };
        let rep = validate_frechet(&fwd, &d, &DEFAULT_LADDER).unwrap();
        assert!(rep.pass, "{rep:?}");
    }

    #[test]
    fn qpat_routes_agree_and_satisfy_operator_identity() {
        let lambda: f64 = 0.1;
        let (g, masks) = setup(31);
        let sigma0 = ScalarField::from_real_fn(g, |_, _| -2.0 * lambda.ln());
        let gamma0 = ScalarField::from_real_fn(g, |_, _| 0.0);
        let f = BoundaryData::from_real_fn(g, |x, _| (lambda * x).exp());
        let lin = QpatLinearization::new(&masks, &sigma0, &gamma0, &f).unwrap();
        let mut r = rng(9);
        let rho = smooth_draw(&masks, &mut r, 1.0);
        let nu = smooth_draw(&masks, &mut r, 1.0);
        let a = lin.apply(&[rho.clone(), nu.clone()]).unwrap();
        let b = lin.apply_three_term(&[rho.clone(), nu.clone()]).unwrap();
        assert!(a.sub(&b).unwrap().max_abs() <= 1e-10 * a.max_abs());
        assert_eq!(lin.apply(&[ScalarField::zeros(g), ScalarField::zeros(g)]).unwrap().max_abs(), 0.0);

        // L_λ A = −(1/λ²)Δ(νu₀) + (1/λ²)∇·(ρ∇u₀), discrete forms
        let la = lin.operator().apply(&a).unwrap();
        let nu_r = masks.restrict_to_omega_prime(&nu);
        let collar = masks.omega_prime_collar();
        let mut nu_r2 = nu_r.clone();
        for (k, v) in nu_r2.values_mut().iter_mut().enumerate() {
            if collar[k] {
                *v = c(0.0);
            }
        }
        let nu_u = nu_r2.mul(lin.u0()).unwrap().without_boundary();
        let rhs = laplacian(&nu_u)
            .scale_real(-1.0 / (lambda * lambda))
            .add(&flux_divergence(&masks.restrict_to_omega_prime(&rho), &sigma0, lin.u0()).unwrap())
            .unwrap();
        assert!(la.sub(&rhs).unwrap().max_abs() <= 1e-8 * rhs.max_abs());
    }

    #[test]
    fn qpat_ladder_passes() {
        let (g, masks) = setup(15);
        let mut r = rng(21);
        let sigma0 = smooth_draw(&masks, &mut r, 0.5);
        let gamma0 = smooth_draw(&masks, &mut r, 0.5);
        let rho = smooth_draw(&masks, &mut r, 1.0);
        let nu = smooth_draw(&masks, &mut r, 1.0);
        let f = BoundaryData::from_real_fn(g, |x, y| 1.0 + x + y * y);
        let lin = QpatLinearization::new(&masks, &sigma0, &gamma0, &f).unwrap();
        let nu_sup = lin.support(1);
        let nu_r = restrict(&nu, &nu_sup);
        let d = lin.apply(&[rho.clone(), nu_r.clone()]).unwrap();
        let fwd = |e: f64| -> Result<ScalarField> {
            let coeffs = CoefficientSet::with_sigma_gamma(sigma0.add(&rho.scale_real(e))?, gamma0.add(&nu_r.scale_real(e))?);
            Ok(qpat_data(&coeffs, &f)?.field)
        };
        let rep = validate_frechet(&fwd, &d, &DEFAULT_LADDER).unwrap();
        assert!(rep.pass, "{rep:?}");
    }

    #[test]
    fn umot_sign_and_ladder() {
        let (g, masks) = setup(15);
        let robin = BcKind::Robin { gamma: vec![1.0; g.boundary_len()] };
        let s = BoundaryData::constant(g, c(1.0));
        let eta = (g.n() + 1) / 2;
        let mu0 = ScalarField::zeros(g);
        let lin = UmotLinearization::new(&masks, &mu0, &s, eta, BcKind::Dirichlet, robin.clone()).unwrap();
        let bump = Bump::centered(1.0).field(g);
        let out = lin.apply(&[bump.clone()]).unwrap();
        assert!(out.values()[g.center_node()].re < 0.0);
        assert_eq!(lin.apply(&[ScalarField::zeros(g)]).unwrap().max_abs(), 0.0);

        let mut r = rng(4);
        let mu0 = smooth_draw(&masks, &mut r, 0.5);
        let mu1 = smooth_draw(&masks, &mut r, 1.0);
        let lin = UmotLinearization::new(&masks, &mu0, &s, eta, BcKind::Dirichlet, robin.clone()).unwrap();
        let d = lin.apply(&[mu1.clone()]).unwrap();
        let fwd = |e: f64| -> Result<ScalarField> {
            let coeffs = CoefficientSet::with_mu(mu0.add(&mu1.scale_real(e))?);
            Ok(umot_data(&coeffs, &s, eta, BcKind::Dirichlet, robin.clone())?.field)
        };
        let rep = validate_frechet(&fwd, &d, &DEFAULT_LADDER).unwrap();
        assert!(rep.pass, "{rep:?}");
    }

    #[test]
    fn assembly_matches_apply_and_is_deterministic() {
        let (g, masks) = setup(15);
        let x1 = BoundaryData::from_real_fn(g, |x, _| x);
        let lin = AetLinearization::new(&masks, &ScalarField::zeros(g), &x1, 0.5).unwrap();
        let a = assemble(&lin, &masks).unwrap();
        let side = masks.omega_prime_side();
        assert_eq!(a.matrix.shape(), (side * side, side * side));
        let b = assemble(&lin, &masks).unwrap();
        assert_eq!(a, b);
        let rho = smooth_draw(&masks, &mut rng(8), 1.0);
        let y = a.matvec(&a.pack(&[rho.clone()]));
        let direct = a.pack_rows(&[lin.apply(&[rho]).unwrap()]);
        for (u, v) in y.iter().zip(&direct) {
            assert!((u - v).norm() <= 1e-12 * (1.0 + v.norm()));
        }
        let x2 = BoundaryData::from_real_fn(g, |_, y| y);
        let lin2 = AetLinearization::new(&masks, &ScalarField::zeros(g), &x2, 0.5).unwrap();
        let st = assemble_stacked(&[&lin, &lin2], &masks).unwrap();
        assert_eq!(st.matrix.shape(), (2 * side * side, side * side));
        assert_eq!(st.matrix.rows(0, side * side), a.matrix.rows(0, side * side));
        assert!(matches!(assemble_stacked_with_limit(&[&lin], &masks, 3), Err(Error::DenseLimit(_))));
    }
}
