//! Principal symbols of the linearized data maps, pointwise ellipticity and
//! spanning audits over sampled `(x, ξ)`, and sweeps along deformation paths
//! through complex boundary data.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::cgo::{cgo_imag_parts, make_cgo, make_cgo_diffusion, CgoVector};
use crate::elliptic::EllipticOperator;
use crate::error::{Error, Result};
use crate::grid::{cutoff_chi, gradient, BoundaryData, DomainMasks, Grid, ScalarField, VectorField};
use crate::linearization::CrossForm;

/// Default number of equispaced ξ angles.
pub const XI_SAMPLES: usize = 64;

/// Default relative ellipticity threshold.
pub const REL_THRESHOLD: f64 = 1e-8;

/// `(angle, ξ)` at `count` equispaced angles on the unit circle.
pub fn xi_samples(count: usize) -> Vec<(f64, [f64; 2])> {
    (0..count)
        .map(|a| {
            let t = 2.0 * PI * a as f64 / count as f64;
            (t, [t.cos(), t.sin()])
        })
        .collect()
}

fn dot_xi(g: [C64; 2], xi: [f64; 2]) -> C64 {
    g[0] * xi[0] + g[1] * xi[1]
}

fn dot(a: [C64; 2], b: [C64; 2]) -> C64 {
    a[0] * b[0] + a[1] * b[1]
}

/// `(2/p) e^{2σ/p} (∇u·∇u − p(∇u·ξ)²)`, bilinear products, `|ξ| = 1`.
pub fn aet_symbol(sigma: C64, grad_u: [C64; 2], p: f64, xi: [f64; 2]) -> C64 {
    let gx = dot_xi(grad_u, xi);
    (sigma * (2.0 / p)).exp() * (2.0 / p) * (dot(grad_u, grad_u) - gx * gx * p)
}

/// Symbol of the cross functional `e^{2σ}∇u₁·∇u₂`:
/// `e^{2σ}(z − 2(ξ·∇u₁)(ξ·∇u₂))` with `z = 2∇u₁·∇u₂` (consistent) or
/// `(∇u₁·∇u₂)²` (as printed).
pub fn cross_symbol(sigma: C64, g1: [C64; 2], g2: [C64; 2], xi: [f64; 2], form: CrossForm) -> C64 {
    let d = dot(g1, g2);
    let z = match form {
        CrossForm::Consistent => d * 2.0,
        CrossForm::AsPrinted => d * d,
    };
    (sigma * 2.0).exp() * (z - dot_xi(g1, xi) * dot_xi(g2, xi) * 2.0)
}

/// `−2χ² e^{μ₀} u₀ G₀` (the `1/ζ²` factor is 1 on the unit sphere).
pub fn umot_symbol(mu0: C64, u0: C64, g0: C64, chi: f64) -> C64 {
    -mu0.exp() * u0 * g0 * (2.0 * chi * chi)
}

/// The `2J × 2` QPAT principal symbol with rows `χ²(iξ·∇u, u)` and the
/// determinants of consecutive row pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct QpatBlock {
    pub matrix: DMatrix<C64>,
    pub dets: Vec<C64>,
}

/// `us` holds `(u, ∇u)` at `x` for the `2J` solutions, pairs adjacent.
pub fn qpat_symbol_block(us: &[(C64, [C64; 2])], chi: f64, xi: [f64; 2]) -> Result<QpatBlock> {
    if us.is_empty() || us.len() % 2 != 0 {
        return Err(Error::InvalidArgument(format!("need 2J >= 2 solutions, got {}", us.len())));
    }
    let c2 = chi * chi;
    let matrix = DMatrix::from_fn(us.len(), 2, |r, c| {
        let (u, g) = us[r];
        if c == 0 {
            C64::i() * dot_xi(g, xi) * c2
        } else {
            u * c2
        }
    });
    let dets = (0..us.len() / 2)
        .map(|j| matrix[(2 * j, 0)] * matrix[(2 * j + 1, 1)] - matrix[(2 * j, 1)] * matrix[(2 * j + 1, 0)])
        .collect();
    Ok(QpatBlock { matrix, dets })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Elliptic,
    NotElliptic,
}

impl Verdict {
    pub fn name(&self) -> &'static str {
        match self {
            Verdict::Elliptic => "ELLIPTIC",
            Verdict::NotElliptic => "NOT-ELLIPTIC",
        }
    }
}

/// Result of a sampled audit. `min_abs` is the smallest sampled magnitude
/// (or singular value); the verdict compares it to `threshold`.
#[derive(Clone, Debug, PartialEq)]
pub struct AuditReport {
    pub min_abs: f64,
    pub max_abs: f64,
    pub threshold: f64,
    pub argmin_node: usize,
    pub argmin_x: (f64, f64),
    pub argmin_angle: f64,
    pub nodes: usize,
    pub angles: usize,
    /// Values were divided by their per-node maximum before the comparison.
    pub normalized: bool,
    pub verdict: Verdict,
}

impl AuditReport {
    pub fn passes(&self) -> bool {
        self.verdict == Verdict::Elliptic
    }
}

/// Audits `value(node, ξ) ≥ 0` over `nodes × angles`, threshold
/// `rel_threshold · max`. With `normalize`, each node's values are first
/// divided by that node's maximum over ξ (ellipticity at `x` is invariant
/// under positive rescaling in `x`).
pub fn audit<F>(grid: Grid, nodes: &[usize], angles: usize, rel_threshold: f64, normalize: bool, value: F) -> Result<AuditReport>
where
    F: Fn(usize, [f64; 2]) -> f64 + Sync,
{
    if nodes.is_empty() || angles == 0 {
        return Err(Error::EmptySubdomain("audit needs at least one node and one angle".into()));
    }
    let xis = xi_samples(angles);
    let per_node: Vec<(f64, usize, f64)> = nodes
        .par_iter()
        .map(|&k| {
            let vals: Vec<f64> = xis.iter().map(|&(_, xi)| value(k, xi)).collect();
            let mx = vals.iter().cloned().fold(0.0, f64::max);
            let scale = if normalize && mx > 0.0 { mx } else { 1.0 };
            let (ia, mn) = vals
                .iter()
                .enumerate()
                .fold((0, f64::INFINITY), |acc, (i, &v)| if v / scale < acc.1 { (i, v / scale) } else { acc });
            (mn, ia, mx / scale)
        })
        .collect();
    let mut best = (f64::INFINITY, 0, 0);
    let mut max_abs: f64 = 0.0;
    for (idx, &(mn, ia, mx)) in per_node.iter().enumerate() {
        if mn < best.0 {
            best = (mn, idx, ia);
        }
        max_abs = max_abs.max(mx);
    }
    let node = nodes[best.1];
    let threshold = rel_threshold * max_abs;
    let min_abs = best.0;
    Ok(AuditReport {
        min_abs,
        max_abs,
        threshold,
        argmin_node: node,
        argmin_x: grid.coord_of(node),
        argmin_angle: xis[best.2].0,
        nodes: nodes.len(),
        angles,
        normalized: normalize,
        verdict: if min_abs >= threshold && max_abs > 0.0 { Verdict::Elliptic } else { Verdict::NotElliptic },
    })
}

/// Symbol audit of a single p-functional over Ω''.
pub fn aet_audit(sigma: &ScalarField, u: &ScalarField, p: f64, masks: &DomainMasks, angles: usize) -> Result<AuditReport> {
    let g = gradient(u);
    let grid = masks.grid();
    audit(grid, &masks.omega_dprime_nodes(), angles, REL_THRESHOLD, false, |k, xi| {
        aet_symbol(sigma.values()[k], g.at(k), p, xi).norm()
    })
}

/// UMOT symbol audit over Ω'.
pub fn umot_audit(mu0: &ScalarField, u0: &ScalarField, g0: &ScalarField, masks: &DomainMasks, angles: usize) -> Result<AuditReport> {
    let chi = cutoff_chi(masks);
    audit(masks.grid(), &masks.omega_prime_nodes(), angles, REL_THRESHOLD, false, |k, _| {
        umot_symbol(mu0.values()[k], u0.values()[k], g0.values()[k], chi.values()[k].re).norm()
    })
}

/// Smallest singular value of the QPAT block over Ω' × ξ.
pub fn qpat_block_audit(us: &[ScalarField], masks: &DomainMasks, angles: usize) -> Result<AuditReport> {
    let chi = cutoff_chi(masks);
    let grads: Vec<VectorField> = us.iter().map(gradient).collect();
    audit(masks.grid(), &masks.omega_prime_nodes(), angles, REL_THRESHOLD, false, |k, xi| {
        let at: Vec<(C64, [C64; 2])> = us.iter().zip(&grads).map(|(u, g)| (u.values()[k], g.at(k))).collect();
        let b = qpat_symbol_block(&at, chi.values()[k].re, xi).expect("even number of solutions");
        b.matrix.singular_values().min()
    })
}

/// Smallest singular value of the `2 × k` matrix of field values at each Ω''
/// node. With `normalize`, each field is scaled to unit length per node.
pub fn spanning_audit(fields: &[VectorField], masks: &DomainMasks, normalize: bool) -> Result<AuditReport> {
    if fields.len() < 2 {
        return Err(Error::InvalidArgument("spanning needs at least two fields".into()));
    }
    let grid = masks.grid();
    for f in fields {
        grid.check_same(&f.grid())?;
    }
    let nodes = masks.omega_dprime_nodes();
    let sv: Vec<f64> = nodes
        .par_iter()
        .map(|&k| {
            let m = DMatrix::from_fn(2, fields.len(), |r, c| {
                let v = fields[c].at(k);
                let s = if normalize {
                    let n = (v[0].norm_sqr() + v[1].norm_sqr()).sqrt();
                    if n > 0.0 { 1.0 / n } else { 0.0 }
                } else {
                    1.0
                };
                v[r] * s
            });
            m.singular_values().min()
        })
        .collect();
    let (idx, min_abs) = sv.iter().enumerate().fold((0, f64::INFINITY), |a, (i, &v)| if v < a.1 { (i, v) } else { a });
    let max_abs = sv.iter().cloned().fold(0.0, f64::max);
    let threshold = REL_THRESHOLD * max_abs;
    Ok(AuditReport {
        min_abs,
        max_abs,
        threshold,
        argmin_node: nodes[idx],
        argmin_x: grid.coord_of(nodes[idx]),
        argmin_angle: 0.0,
        nodes: nodes.len(),
        angles: 0,
        normalized: normalize,
        verdict: if min_abs >= threshold && max_abs > 0.0 { Verdict::Elliptic } else { Verdict::NotElliptic },
    })
}

/// The bracket `(k⊥ − p(ξ·k⊥)ξ)cos θ + (k − p(ξ·k)ξ)sin θ = ω − p(ξ·ω)ξ`,
/// `ω = k⊥cos θ + k sin θ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bracket {
    pub vector: [f64; 2],
    pub norm: f64,
    /// `ω · bracket = 1 − p(ξ·ω)²`, a lower bound for the norm.
    pub along_omega: f64,
}

pub fn bracket_check(k: [f64; 2], k_perp: [f64; 2], p: f64, xi: [f64; 2], theta: f64) -> Bracket {
    let (s, c) = theta.sin_cos();
    let xk = xi[0] * k[0] + xi[1] * k[1];
    let xkp = xi[0] * k_perp[0] + xi[1] * k_perp[1];
    let vector = [0, 1].map(|i| (k_perp[i] - p * xkp * xi[i]) * c + (k[i] - p * xk * xi[i]) * s);
    let omega = [0, 1].map(|i| k_perp[i] * c + k[i] * s);
    Bracket {
        vector,
        norm: vector[0].hypot(vector[1]),
        along_omega: omega[0] * vector[0] + omega[1] * vector[1],
    }
}

/// Which chain of deformations a path realizes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PathKind {
    /// p-functionals `A_{σ,f_j}`, `p < 1`, one CGO vector.
    PSmall,
    /// `A_{σ,f_1}, …, A_{σ,f_{m−1}}, A_{σ,(f_1,f_m)}` at `p = 2`, two CGO
    /// vectors (the last datum uses the second).
    Aet,
    /// QPAT pairs `(u^{(j,1)}, u^{(j,2)})`, one CGO vector per datum.
    Qpat,
}

impl PathKind {
    pub fn name(&self) -> &'static str {
        match self {
            PathKind::PSmall => "p-small",
            PathKind::Aet => "aet",
            PathKind::Qpat => "qpat",
        }
    }
}

/// Three legs:
/// 1. `(σ, γ, f) → (σ, γ, i f^I_{σ,γ})` with `f_t = (1−t)f + i t f^I`;
/// 2. `(σ_t, γ_t) = ((1−t)σ + t σ_end, (1−t)γ)` with data `i f^I_{σ_t,γ_t}`;
/// 3. `(σ_end, 0, i f^I) → (σ_end, 0, f₀)` with `f_t = t f₀ + i(1−t) f^I`.
///
/// `σ_end = 0` except for QPAT, where it is the background `σ₀`. `rhos[j]`
/// is the CGO vector whose imaginary trace replaces datum `j`.
#[derive(Clone, Debug)]
pub struct DeformationPath {
    pub kind: PathKind,
    pub p: f64,
    pub sigma: ScalarField,
    pub gamma: Option<ScalarField>,
    pub sigma_end: ScalarField,
    pub f: Vec<BoundaryData>,
    pub f0: Vec<BoundaryData>,
    pub rhos: Vec<CgoVector>,
    pub t_samples: Vec<f64>,
    pub angles: usize,
}

/// `count` equispaced samples of `[0, 1]`, endpoints included.
pub fn t_grid(count: usize) -> Vec<f64> {
    if count < 2 {
        return vec![0.0];
    }
    (0..count).map(|i| i as f64 / (count - 1) as f64).collect()
}

impl DeformationPath {
    /// p-functional chain with `f₀` the coordinate data.
    pub fn p_small(sigma: ScalarField, f: Vec<BoundaryData>, p: f64, rho: CgoVector, t_samples: Vec<f64>) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::InvalidArgument(format!("p-small chain needs 0 < p < 1, got {p}")));
        }
        let grid = sigma.grid();
        let f0 = coordinate_data(grid, f.len());
        let rhos = vec![rho; f.len()];
        let sigma_end = ScalarField::zeros(grid);
        Self::checked(Self { kind: PathKind::PSmall, p, sigma, gamma: None, sigma_end, f, f0, rhos, t_samples, angles: XI_SAMPLES })
    }

    /// AET chain; the last datum follows `rho2`, the others `rho1`.
    /// `f₀ = (x₁, x₂, …, x₂)`.
    pub fn aet(sigma: ScalarField, f: Vec<BoundaryData>, rho1: CgoVector, rho2: CgoVector, t_samples: Vec<f64>) -> Result<Self> {
        if f.len() < 3 {
            return Err(Error::InvalidArgument("AET chain needs m >= 3 data".into()));
        }
        let grid = sigma.grid();
        let mut f0 = coordinate_data(grid, f.len() - 1);
        f0.push(BoundaryData::from_real_fn(grid, |_, y| y));
        let mut rhos = vec![rho1; f.len() - 1];
        rhos.push(rho2);
        let sigma_end = ScalarField::zeros(grid);
        Self::checked(Self { kind: PathKind::Aet, p: 2.0, sigma, gamma: None, sigma_end, f, f0, rhos, t_samples, angles: XI_SAMPLES })
    }

    /// QPAT chain ending at `(σ₀, 0, f₀)`; data come in adjacent pairs.
    #[allow(clippy::too_many_arguments)]
    pub fn qpat(
        sigma: ScalarField,
        gamma: ScalarField,
        sigma0: ScalarField,
        f: Vec<BoundaryData>,
        f0: Vec<BoundaryData>,
        rhos: Vec<CgoVector>,
        t_samples: Vec<f64>,
    ) -> Result<Self> {
        if f.is_empty() || f.len() % 2 != 0 || f0.len() != f.len() || rhos.len() != f.len() {
            return Err(Error::InvalidArgument("QPAT chain needs matching, paired data and CGO vectors".into()));
        }
        Self::checked(Self { kind: PathKind::Qpat, p: 1.0, sigma, gamma: Some(gamma), sigma_end: sigma0, f, f0, rhos, t_samples, angles: XI_SAMPLES })
    }

    /// QPAT chain with `f = f₀` the exponential pairs `(e^{λx₁}, e^{λx₂})`,
    /// `(e^{λx₁}, e^{−λx₂−1})` repeated three times, ending at `σ₀ = 0`.
    /// Pair `l` of each direction uses the magnitudes `(r_l, r_{l+1})` from
    /// `{ρ, ρ+√2/2, ρ+√3/2, ρ+√5−2}`, directions `k = e₂` and `k = e₁`.
    pub fn qpat_standard(sigma: ScalarField, gamma: ScalarField, lambda: f64, rho: f64, t_samples: Vec<f64>) -> Result<Self> {
        let grid = sigma.grid();
        let e = |f: Box<dyn Fn(f64, f64) -> f64>| BoundaryData::from_real_fn(grid, f);
        let base = vec![
            e(Box::new(move |x, _| (lambda * x).exp())),
            e(Box::new(move |_, y| (lambda * y).exp())),
            e(Box::new(move |x, _| (lambda * x).exp())),
            e(Box::new(move |_, y| (-lambda * y - 1.0).exp())),
        ];
        let f0: Vec<BoundaryData> = (0..3).flat_map(|_| base.clone()).collect();
        let mags = [rho, rho + 2f64.sqrt() / 2.0, rho + 3f64.sqrt() / 2.0, rho + 5f64.sqrt() - 2.0];
        let mut rhos = Vec::new();
        for l in 0..3 {
            for (k, kp) in [([0.0, 1.0], [1.0, 0.0]), ([1.0, 0.0], [0.0, 1.0])] {
                rhos.push(CgoVector::new(mags[l], k, kp)?);
                rhos.push(CgoVector::new(mags[l + 1], k, kp)?);
            }
        }
        Self::qpat(sigma, gamma, ScalarField::zeros(grid), f0.clone(), f0, rhos, t_samples)
    }

    fn checked(self) -> Result<Self> {
        let grid = self.sigma.grid();
        for b in self.f.iter().chain(&self.f0) {
            grid.check_same(&b.grid())?;
        }
        if self.f0.len() != self.f.len() || self.rhos.len() != self.f.len() {
            return Err(Error::InvalidArgument("data, targets and CGO vectors must match in number".into()));
        }
        if self.t_samples.first() != Some(&0.0) || self.t_samples.last() != Some(&1.0) {
            return Err(Error::InvalidArgument("t samples must start at 0 and end at 1".into()));
        }
        Ok(self)
    }

    fn grid(&self) -> Grid {
        self.sigma.grid()
    }

    /// Coefficients and boundary data at `(leg, t)`.
    pub fn state(&self, leg: usize, t: f64) -> Result<(ScalarField, Option<ScalarField>, Vec<BoundaryData>)> {
        let i = C64::i();
        let lerp = |a: &ScalarField, b: &ScalarField, t: f64| a.scale_real(1.0 - t).add(&b.scale_real(t));
        match leg {
            1 => {
                let fi = self.imag_traces(&self.sigma, self.gamma.as_ref())?;
                let data = self
                    .f
                    .iter()
                    .zip(&fi)
                    .map(|(f, g)| f.combine(C64::new(1.0 - t, 0.0), g, i * t))
                    .collect::<Result<Vec<_>>>()?;
                Ok((self.sigma.clone(), self.gamma.clone(), data))
            }
            2 => {
                let s = lerp(&self.sigma, &self.sigma_end, t)?;
                let g = self.gamma.as_ref().map(|g| g.scale_real(1.0 - t));
                let data = self.imag_traces(&s, g.as_ref())?.iter().map(|f| f.scale(i)).collect();
                Ok((s, g, data))
            }
            3 => {
                let g = self.gamma.as_ref().map(|_| ScalarField::zeros(self.grid()));
                let fi = self.imag_traces(&self.sigma_end, g.as_ref())?;
                let data = self
                    .f0
                    .iter()
                    .zip(&fi)
                    .map(|(f, h)| f.combine(C64::new(t, 0.0), h, i * (1.0 - t)))
                    .collect::<Result<Vec<_>>>()?;
                Ok((self.sigma_end.clone(), g, data))
            }
            _ => Err(Error::InvalidArgument(format!("leg {leg} out of range 1..=3"))),
        }
    }

    /// `f^I` per datum for the given coefficients, one CGO build per
    /// distinct vector.
    fn imag_traces(&self, sigma: &ScalarField, gamma: Option<&ScalarField>) -> Result<Vec<BoundaryData>> {
        let mut distinct: Vec<CgoVector> = Vec::new();
        for r in &self.rhos {
            if !distinct.contains(r) {
                distinct.push(*r);
            }
        }
        let traces = distinct
            .par_iter()
            .map(|r| {
                let sol = match gamma {
                    Some(g) => make_cgo_diffusion(sigma, g, r)?,
                    None => make_cgo(sigma, r)?,
                };
                Ok(cgo_imag_parts(&sol)?.f_i)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(self
            .rhos
            .iter()
            .map(|r| traces[distinct.iter().position(|d| d == r).expect("listed")].clone())
            .collect())
    }
}

fn coordinate_data(grid: Grid, m: usize) -> Vec<BoundaryData> {
    (0..m).map(|j| if j % 2 == 0 { BoundaryData::from_real_fn(grid, |x, _| x) } else { BoundaryData::from_real_fn(grid, |_, y| y) }).collect()
}

/// One sampled point of a sweep.
#[derive(Clone, Debug)]
pub struct SweepPoint {
    pub leg: usize,
    pub t: f64,
    /// Coverage audit: at each `(x, ξ)` the largest constituent symbol
    /// magnitude, normalized per node.
    pub coverage: AuditReport,
    /// Spanning of the CGO-leg gradients (AET) or pair fields (QPAT). On
    /// leg 2 the data are `i f^I`, so these are `i∇u_I` and `−V_I`; the
    /// constant phase does not change singular values.
    pub spanning: Option<AuditReport>,
}

impl SweepPoint {
    pub fn passes(&self) -> bool {
        self.coverage.passes() && self.spanning.as_ref().is_none_or(|s| s.passes())
    }
}

#[derive(Clone, Debug)]
pub struct SweepReport {
    pub kind: PathKind,
    pub points: Vec<SweepPoint>,
    pub min_coverage: f64,
    pub min_spanning: Option<f64>,
    pub semi_fredholm_path: bool,
}

impl SweepReport {
    pub fn verdict(&self) -> &'static str {
        if self.semi_fredholm_path {
            "SEMI_FREDHOLM_PATH"
        } else {
            "NOT_SEMI_FREDHOLM_PATH"
        }
    }

    /// CSV with columns `leg,t,min_abs,argmin_x1,argmin_x2,argmin_xi_angle,verdict`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("leg,t,min_abs,argmin_x1,argmin_x2,argmin_xi_angle,verdict\n");
        for p in &self.points {
            let c = &p.coverage;
            let v = if p.passes() { Verdict::Elliptic } else { Verdict::NotElliptic };
            s.push_str(&format!(
                "{},{},{:.12e},{:.12e},{:.12e},{:.12e},{}\n",
                p.leg,
                p.t,
                c.min_abs,
                c.argmin_x.0,
                c.argmin_x.1,
                c.argmin_angle,
                v.name()
            ));
        }
        s
    }
}

impl AuditReport {
    /// Single-row CSV with the sweep column layout (`t` left empty).
    pub fn to_csv(&self) -> String {
        format!(
            "t,min_abs,argmin_x1,argmin_x2,argmin_xi_angle,verdict,threshold\n,{:.12e},{:.12e},{:.12e},{:.12e},{},{:.12e}\n",
            self.min_abs,
            self.argmin_x.0,
            self.argmin_x.1,
            self.argmin_angle,
            self.verdict.name(),
            self.threshold
        )
    }
}

/// Runs the audit recipe of `path.kind` at every `(leg, t)`.
pub fn deformation_sweep(path: &DeformationPath, masks: &DomainMasks) -> Result<SweepReport> {
    let mut points = Vec::new();
    for leg in 1..=3 {
        for &t in &path.t_samples {
            let (sigma, gamma, data) = path.state(leg, t)?;
            let point = sweep_point(path, masks, leg, t, &sigma, gamma.as_ref(), &data)
                .map_err(|e| Error::NoConvergence(format!("sweep failed at leg {leg}, t={t}: {e}")))?;
            points.push(point);
        }
    }
    let min_coverage = points.iter().map(|p| p.coverage.min_abs).fold(f64::INFINITY, f64::min);
    let spans: Vec<f64> = points.iter().filter_map(|p| p.spanning.as_ref().map(|s| s.min_abs)).collect();
    let min_spanning = if spans.is_empty() { None } else { Some(spans.iter().cloned().fold(f64::INFINITY, f64::min)) };
    let semi_fredholm_path = points.iter().all(|p| p.passes());
    Ok(SweepReport { kind: path.kind, points, min_coverage, min_spanning, semi_fredholm_path })
}

fn sweep_point(
    path: &DeformationPath,
    masks: &DomainMasks,
    leg: usize,
    t: f64,
    sigma: &ScalarField,
    gamma: Option<&ScalarField>,
    data: &[BoundaryData],
) -> Result<SweepPoint> {
    let grid = masks.grid();
    let op = match gamma {
        Some(g) => EllipticOperator::diffusion(sigma, g)?,
        None => EllipticOperator::conductivity(sigma)?,
    };
    let zero = ScalarField::zeros(grid);
    let us = data.iter().map(|f| op.solve(&zero, f)).collect::<Result<Vec<_>>>()?;
    let grads: Vec<VectorField> = us.iter().map(gradient).collect();
    let nodes = masks.omega_dprime_nodes();
    let m = us.len();
    let (coverage, spanning) = match path.kind {
        PathKind::PSmall => {
            let cov = audit(grid, &nodes, path.angles, REL_THRESHOLD, true, |k, xi| {
                grads.iter().map(|g| aet_symbol(sigma.values()[k], g.at(k), path.p, xi).norm()).fold(0.0, f64::max)
            })?;
            (cov, None)
        }
        PathKind::Aet => {
            let cov = audit(grid, &nodes, path.angles, REL_THRESHOLD, true, |k, xi| {
                let s = sigma.values()[k];
                let own = grads[..m - 1].iter().map(|g| aet_symbol(s, g.at(k), 2.0, xi).norm()).fold(0.0, f64::max);
                own.max(cross_symbol(s, grads[0].at(k), grads[m - 1].at(k), xi, CrossForm::Consistent).norm())
            })?;
            let span = if leg == 2 {
                Some(spanning_audit(&[grads[0].clone(), grads[m - 1].clone()], masks, true)?)
            } else {
                None
            };
            (cov, span)
        }
        PathKind::Qpat => {
            // det of block j is iχ⁴ ξ·V_j, V_j = u₂∇u₁ − u₁∇u₂
            let vs = (0..m / 2)
                .map(|j| {
                    let (u1, u2) = (us[2 * j].clone().without_boundary(), us[2 * j + 1].clone().without_boundary());
                    grads[2 * j].scale_by(&u2)?.sub(&grads[2 * j + 1].scale_by(&u1)?)
                })
                .collect::<Result<Vec<_>>>()?;
            let cov = audit(grid, &nodes, path.angles, REL_THRESHOLD, true, |k, xi| {
                vs.iter().map(|v| dot_xi(v.at(k), xi).norm()).fold(0.0, f64::max)
            })?;
            let span = if leg == 2 {
                Some(spanning_audit(&vs, masks, true)?)
            } else {
                None
            };
            (cov, span)
        }
    };
    Ok(SweepPoint { leg, t, coverage, spanning })
}
