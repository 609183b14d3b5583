//! Nonlinear internal-data functionals of UMOT, AET and QPAT.
//!
//! Products of gradients are bilinear (`a·b = a₁b₁ + a₂b₂`, no conjugation),
//! so complex coefficients and boundary data are handled uniformly.

use crate::elliptic::{BcKind, CoefficientSet, EllipticOperator};
use crate::error::{Error, Result};
use crate::grid::{gradient, BoundaryData, ScalarField};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Modality {
    Umot,
    AetPower,
    AetCross,
    Qpat,
}

impl Modality {
    pub fn name(&self) -> &'static str {
        match self {
            Modality::Umot => "umot",
            Modality::AetPower => "aet_power",
            Modality::AetCross => "aet_cross",
            Modality::Qpat => "qpat",
        }
    }
}

/// Everything needed to re-run a forward map.
#[derive(Clone, Debug, PartialEq)]
pub struct Provenance {
    pub coeffs: CoefficientSet,
    pub boundary: Vec<BoundaryData>,
    pub eta: Option<usize>,
    pub b_kind: Option<BcKind>,
    pub c_kind: Option<BcKind>,
    pub green_convention: Option<&'static str>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InternalData {
    pub modality: Modality,
    pub field: ScalarField,
    pub provenance: Provenance,
}

impl InternalData {
    /// Recomputes the data from the stored provenance.
    pub fn rerun(&self) -> Result<InternalData> {
        let pv = &self.provenance;
        match self.modality {
            Modality::Umot => umot_data(
                &pv.coeffs,
                &pv.boundary[0],
                pv.eta.ok_or_else(|| Error::InvalidArgument("missing eta".into()))?,
                pv.b_kind.clone().unwrap_or(BcKind::Dirichlet),
                pv.c_kind.clone().unwrap_or(BcKind::Dirichlet),
            ),
            Modality::AetPower => power_density(&pv.coeffs, &pv.boundary[0]),
            Modality::AetCross => cross_power(&pv.coeffs, &pv.boundary[0], &pv.boundary[1]),
            Modality::Qpat => qpat_data(&pv.coeffs, &pv.boundary[0]),
        }
    }
}

/// `F(ξ) = u_μ(ξ) G_μ(η, ξ)`: `u` solves `(-Δ + e^μ)u = 0` with source data
/// `s` under condition `b_kind`, `G` is the Green's column under `c_kind`.
pub fn umot_data(coeffs: &CoefficientSet, s: &BoundaryData, eta: usize, b_kind: BcKind, c_kind: BcKind) -> Result<InternalData> {
    let mu = coeffs.mu()?;
    let op_b = EllipticOperator::schrodinger(mu, b_kind.clone())?;
    let op_c = if c_kind == b_kind { op_b.clone() } else { EllipticOperator::schrodinger(mu, c_kind.clone())? };
    let u = op_b.solve(&ScalarField::zeros(mu.grid()), s)?;
    let g = op_c.greens_column(eta)?;
    let field = u.mul(&g)?.without_boundary();
    Ok(InternalData {
        modality: Modality::Umot,
        field,
        provenance: Provenance {
            coeffs: coeffs.clone(),
            boundary: vec![s.clone()],
            eta: Some(eta),
            b_kind: Some(b_kind),
            c_kind: Some(c_kind),
            green_convention: Some(op_c.greens_convention()),
        },
    })
}

/// `e^{2σ/p} ∇u·∇u` with `u` the conductivity solution for data `f`.
pub fn power_density(coeffs: &CoefficientSet, f: &BoundaryData) -> Result<InternalData> {
    let p = coeffs.p.ok_or_else(|| Error::InvalidArgument("p not supplied".into()))?;
    if !(p > 0.0) {
        return Err(Error::InvalidArgument(format!("p must be positive, got {p}")));
    }
    let sigma = coeffs.sigma()?;
    let u = EllipticOperator::conductivity(sigma)?.solve(&ScalarField::zeros(sigma.grid()), f)?;
    let field = power_density_from(sigma, &u, p)?;
    Ok(InternalData {
        modality: Modality::AetPower,
        field,
        provenance: Provenance {
            coeffs: coeffs.clone(),
            boundary: vec![f.clone()],
            eta: None,
            b_kind: Some(BcKind::Dirichlet),
            c_kind: None,
            green_convention: None,
        },
    })
}

/// The power-density formula evaluated on a given solution `u`.
pub fn power_density_from(sigma: &ScalarField, u: &ScalarField, p: f64) -> Result<ScalarField> {
    let gu = gradient(u);
    let gg = gu.dot_pointwise(&gu)?;
    let w = sigma.map(|s| (s * (2.0 / p)).exp()).without_boundary();
    w.mul(&gg)
}

/// `e^{2σ} ∇u₁·∇u₂` (the AET cross functional, `p = 2`).
pub fn cross_power(coeffs: &CoefficientSet, f1: &BoundaryData, f2: &BoundaryData) -> Result<InternalData> {
    if let Some(p) = coeffs.p {
        if p != 2.0 {
            return Err(Error::InvalidArgument(format!("cross functional needs p = 2, got {p}")));
        }
    }
    let sigma = coeffs.sigma()?;
    let op = EllipticOperator::conductivity(sigma)?;
    let zero = ScalarField::zeros(sigma.grid());
    let u1 = op.solve(&zero, f1)?;
    let u2 = op.solve(&zero, f2)?;
    let dot = gradient(&u1).dot_pointwise(&gradient(&u2))?;
    let field = sigma.map(|s| (s * 2.0).exp()).without_boundary().mul(&dot)?;
    Ok(InternalData {
        modality: Modality::AetCross,
        field,
        provenance: Provenance {
            coeffs: coeffs.clone(),
            boundary: vec![f1.clone(), f2.clone()],
            eta: None,
            b_kind: Some(BcKind::Dirichlet),
            c_kind: None,
            green_convention: None,
        },
    })
}

/// `e^γ u` with `u` the diffusion solution for data `f` (Grüneisen ≡ 1).
pub fn qpat_data(coeffs: &CoefficientSet, f: &BoundaryData) -> Result<InternalData> {
    let sigma = coeffs.sigma()?;
    let gamma = coeffs.gamma()?;
    let u = EllipticOperator::diffusion(sigma, gamma)?.solve(&ScalarField::zeros(sigma.grid()), f)?;
    let field = gamma.map(|g| g.exp()).without_boundary().mul(&u)?.without_boundary();
    Ok(InternalData {
        modality: Modality::Qpat,
        field,
        provenance: Provenance {
            coeffs: coeffs.clone(),
            boundary: vec![f.clone()],
            eta: None,
            b_kind: Some(BcKind::Dirichlet),
            c_kind: None,
            green_convention: None,
        },
    })
}

/// True when the imaginary parts are at most `rel_tol` times the largest
/// modulus.
pub fn is_real(field: &ScalarField, rel_tol: f64) -> bool {
    field.max_imag_abs() <= rel_tol * field.max_abs().max(f64::MIN_POSITIVE)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64 as C64;
    use crate::grid::{Bump, DomainMasks, Grid};

    fn c(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    fn robin1(g: Grid) -> BcKind {
        BcKind::Robin { gamma: vec![1.0; g.boundary_len()] }
    }

    #[test]
    fn umot_positive_and_linear_in_source() {
        let g = Grid::unit(31).unwrap();
        let masks = DomainMasks::with_defaults(g).unwrap();
        let coeffs = CoefficientSet::with_mu(ScalarField::zeros(g));
        let eta = (g.n() + 1) / 2;
        assert_eq!(g.boundary_node(eta), ((g.n() + 1) / 2, 0));
        let s = BoundaryData::constant(g, c(1.0));
        let d = umot_data(&coeffs, &s, eta, BcKind::Dirichlet, robin1(g)).unwrap();
        for k in masks.omega_prime_nodes() {
            assert!(d.field.values()[k].re > 0.0);
        }
        let d2 = umot_data(&coeffs, &s.scale(c(2.0)), eta, BcKind::Dirichlet, robin1(g)).unwrap();
        for (a, b) in d.field.values().iter().zip(d2.field.values()) {
            assert!((b - a * 2.0).norm() <= 1e-12 * b.norm());
        }
        assert_eq!(d.rerun().unwrap(), d);
    }

    #[test]
    fn umot_decreases_with_absorption() {
        let g = Grid::unit(31).unwrap();
        let s = BoundaryData::constant(g, c(1.0));
        let bump = Bump::centered(1.0).field(g);
        let kc = g.center_node();
        let vals: Vec<f64> = [0.0, 0.5, 1.0]
            .iter()
            .map(|&t| {
                let coeffs = CoefficientSet::with_mu(bump.scale_real(t));
                umot_data(&coeffs, &s, 16, BcKind::Dirichlet, robin1(g)).unwrap().field.values()[kc].re
            })
            .collect();
        assert!(vals[0] > vals[1] && vals[1] > vals[2], "{vals:?}");
    }

    #[test]
    fn power_density_linear_data() {
        let g = Grid::unit(15).unwrap();
        for p in [0.5, 1.0, 2.0] {
            let coeffs = CoefficientSet::with_sigma(ScalarField::zeros(g)).exponent(p);
            let d = power_density(&coeffs, &BoundaryData::from_real_fn(g, |x, _| x)).unwrap();
            assert!(d.field.values().iter().all(|v| (v - c(1.0)).norm() < 1e-12));
        }
        let coeffs = CoefficientSet::with_sigma(ScalarField::zeros(g)).exponent(2.0);
        let d = power_density(&coeffs, &BoundaryData::from_real_fn(g, |x, y| x + y)).unwrap();
        assert!(d.field.values().iter().all(|v| (v - c(2.0)).norm() < 1e-12));
        let bad = CoefficientSet::with_sigma(ScalarField::zeros(g)).exponent(0.0);
        assert!(power_density(&bad, &BoundaryData::zeros(g)).is_err());
    }

    #[test]
    fn power_density_matches_straight_line_formula() {
        let g = Grid::unit(31).unwrap();
        let sigma = Bump::centered(0.3).field(g);
        let coeffs = CoefficientSet::with_sigma(sigma.clone()).exponent(2.0);
        let f = BoundaryData::from_real_fn(g, |x, _| x);
        let d = power_density(&coeffs, &f).unwrap();
        let u = crate::elliptic::solve_conductivity(&coeffs, &f).unwrap();
        let uu = u.padded_values();
        let m = g.padded_side();
        let h = g.h();
        for k in 0..g.len() {
            let (i, j) = g.ij(k);
            let p = (j + 1) * m + i + 1;
            let g1 = (uu[p + 1] - uu[p - 1]) * (0.5 / h);
            let g2 = (uu[p + m] - uu[p - m]) * (0.5 / h);
            let v = (sigma.values()[k] * (2.0 / 2.0)).exp() * (g1 * g1 + g2 * g2);
            assert_eq!(v, d.field.values()[k]);
        }
        assert!(is_real(&d.field, 1e-12));
        assert!(d.field.values().iter().all(|v| v.re >= -1e-12));
    }

    #[test]
    fn cross_power_linear_data() {
        let g = Grid::unit(15).unwrap();
        let coeffs = CoefficientSet::with_sigma(ScalarField::zeros(g));
        let x1 = BoundaryData::from_real_fn(g, |x, _| x);
        let x2 = BoundaryData::from_real_fn(g, |_, y| y);
        let x12 = BoundaryData::from_real_fn(g, |x, y| x + y);
        let z = cross_power(&coeffs, &x1, &x2).unwrap();
        assert!(z.field.max_abs() < 1e-12);
        let one = cross_power(&coeffs, &x1, &x1).unwrap();
        assert!(one.field.values().iter().all(|v| (v - c(1.0)).norm() < 1e-12));
        let one = cross_power(&coeffs, &x1, &x12).unwrap();
        assert!(one.field.values().iter().all(|v| (v - c(1.0)).norm() < 1e-12));
    }

    #[test]
    fn power_density_exponents_are_powers_of_each_other() {
        let g = Grid::unit(15).unwrap();
        let f = BoundaryData::from_real_fn(g, |x, y| x + 0.5 * y * y - 0.5 * x * x);
        let a = power_density(&CoefficientSet::with_sigma(ScalarField::zeros(g)).exponent(0.5), &f).unwrap();
        let b = power_density(&CoefficientSet::with_sigma(ScalarField::zeros(g)).exponent(2.0), &f).unwrap();
        for (x, y) in a.field.values().iter().zip(b.field.values()) {
            // at σ = 0 every exponent gives |∇u|²
            assert!((x - y).norm() <= 1e-10 * y.norm().max(1.0));
        }
    }

    #[test]
    fn qpat_exponential_family_and_linearity() {
        let lambda: f64 = 0.1;
        let g = Grid::unit(31).unwrap();
        let sigma = ScalarField::from_real_fn(g, |_, _| -2.0 * lambda.ln());
        let coeffs = CoefficientSet::with_sigma_gamma(sigma, ScalarField::zeros(g));
        let f = BoundaryData::from_real_fn(g, |x, _| (lambda * x).exp());
        let d = qpat_data(&coeffs, &f).unwrap();
        let exact = ScalarField::from_real_fn(g, |x, _| (lambda * x).exp()).without_boundary();
        assert!(d.field.sub(&exact).unwrap().max_abs() < 1e-4);
        let d3 = qpat_data(&coeffs, &f.scale(c(3.0))).unwrap();
        for (a, b) in d.field.values().iter().zip(d3.field.values()) {
            assert!((b - a * 3.0).norm() <= 1e-12 * b.norm());
        }
    }
}
