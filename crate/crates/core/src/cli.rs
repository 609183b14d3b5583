//! Batch front-end: TOML scenarios, the subcommands and report emission.
//!
//! Every command writes into `<out>/<hash>/`, where `<hash>` is the first 16
//! hex digits of the SHA-256 of the config text and the command-line
//! overrides. The same hash heads every file written.

use std::f64::consts::SQRT_2;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use num_complex::Complex64 as C64;
use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::cgo::{cgo_imag_parts, make_cgo, make_cgo_diffusion, make_cgo_with, sup_rho_psi, CgoOptions, CgoVector};
use crate::draw::{rng, smooth_draw};
use crate::elliptic::{BcKind, CoefficientSet, EllipticOperator};
use crate::error::Error;
use crate::forward::{cross_power, power_density, qpat_data, umot_data};
use crate::grid::{Bump, BoundaryData, DomainMasks, Grid, Rect, ScalarField};
use crate::inversion::{invert_A0x1, qpat_background, qpat_lambda_reconstruct, svd_pinv_reconstruct, svd_probe_with, ReconResult};
use crate::io;
use crate::linearization::{
    assemble_stacked, validate_frechet, AetCrossLinearization, AetLinearization, CrossForm, LinearMap, QpatLinearization,
    UmotLinearization, DEFAULT_LADDER,
};
use crate::microlocal::{aet_audit, deformation_sweep, qpat_block_audit, t_grid, umot_audit, AuditReport, DeformationPath};

#[derive(Debug, Parser)]
#[command(name = "hybridlin", version, about = "Linearized hybrid-imaging experiments driven by scenario configs")]
pub struct Cli {
    /// Scenario config (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Root output directory; results go to `<out>/<config hash>/`.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Grid override.
    #[arg(long)]
    pub n: Option<usize>,
    /// Seed override for randomized draws.
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Internal data for every configured boundary datum.
    Forward,
    /// Taylor ladders per linearization plus the assembled operator.
    Linearize,
    /// Principal-symbol audit.
    SymbolAudit,
    /// CGO solutions and their diagnostics.
    Cgo,
    /// Symbol audits along a deformation path.
    Sweep,
    /// Linearized reconstruction from synthetic data.
    Reconstruct,
    /// Singular values of the stacked operator.
    Spectrum,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Forward => "forward",
            Command::Linearize => "linearize",
            Command::SymbolAudit => "symbol-audit",
            Command::Cgo => "cgo",
            Command::Sweep => "sweep",
            Command::Reconstruct => "reconstruct",
            Command::Spectrum => "spectrum",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModalityName {
    Aet,
    Umot,
    Qpat,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub modality: ModalityName,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub masks: MaskSpec,
    #[serde(default)]
    pub coefficients: CoefficientSpec,
    #[serde(default)]
    pub data: DataSpec,
    #[serde(default)]
    pub umot: UmotSpec,
    #[serde(default)]
    pub linearize: LinearizeSpec,
    #[serde(default)]
    pub audit: AuditSpec,
    #[serde(default)]
    pub cgo: CgoSpec,
    #[serde(default)]
    pub sweep: SweepSpec,
    #[serde(default)]
    pub reconstruct: ReconstructSpec,
    #[serde(default)]
    pub spectrum: SpectrumSpec,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub n: usize,
    /// `[x0, y0, width, height]`.
    pub rect: [f64; 4],
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { n: 31, rect: [0.0, 0.0, 1.0, 1.0] }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaskSpec {
    pub m_prime: f64,
    pub m_dprime: f64,
}

impl Default for MaskSpec {
    fn default() -> Self {
        Self { m_prime: 0.25, m_dprime: 0.125 }
    }
}

/// Analytic coefficient families.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FieldRecipe {
    Constant { value: f64 },
    /// `a exp(−|x−c|²/(2w²))`.
    GaussianBump { center: [f64; 2], width: f64, amplitude: f64 },
    /// `a sin(m₁π(x−x₀)/W) sin(m₂π(y−y₀)/H)`.
    ProductSine {
        amplitude: f64,
        #[serde(default = "unit_modes")]
        modes: [u32; 2],
    },
    /// Compactly supported C^∞ bump.
    Bump { center: [f64; 2], radius: f64, amplitude: f64 },
    /// Seeded sum of three bumps supported in Ω'.
    Random { amplitude: f64 },
}

fn unit_modes() -> [u32; 2] {
    [1, 1]
}

impl FieldRecipe {
    fn zero() -> Self {
        FieldRecipe::Constant { value: 0.0 }
    }

    fn check(&self, field: &str) -> Result<(), Failure> {
        let bad = |what: &str| Err(Failure::Config(format!("{field}: {what}")));
        match *self {
            FieldRecipe::GaussianBump { width, .. } if !(width > 0.0) => bad("width must be > 0"),
            FieldRecipe::Bump { radius, .. } if !(radius > 0.0) => bad("radius must be > 0"),
            FieldRecipe::ProductSine { modes, .. } if modes.contains(&0) => bad("modes must be >= 1"),
            _ => Ok(()),
        }
    }

    fn field(&self, masks: &DomainMasks, seed: u64) -> ScalarField {
        let grid = masks.grid();
        let r = grid.rect();
        match *self {
            FieldRecipe::Constant { value } => ScalarField::from_real_fn(grid, |_, _| value),
            FieldRecipe::GaussianBump { center, width, amplitude } => ScalarField::from_real_fn(grid, |x, y| {
                let d2 = (x - center[0]).powi(2) + (y - center[1]).powi(2);
                amplitude * (-d2 / (2.0 * width * width)).exp()
            }),
            FieldRecipe::ProductSine { amplitude, modes } => ScalarField::from_real_fn(grid, |x, y| {
                let sx = (modes[0] as f64 * std::f64::consts::PI * (x - r.x0) / r.width).sin();
                let sy = (modes[1] as f64 * std::f64::consts::PI * (y - r.y0) / r.height).sin();
                amplitude * sx * sy
            }),
            FieldRecipe::Bump { center, radius, amplitude } => Bump::new((center[0], center[1]), radius, amplitude).field(grid),
            FieldRecipe::Random { amplitude } => smooth_draw(masks, &mut rng(seed), amplitude),
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoefficientSpec {
    pub sigma: FieldRecipe,
    pub gamma: FieldRecipe,
    pub mu: FieldRecipe,
}

impl Default for CoefficientSpec {
    fn default() -> Self {
        Self { sigma: FieldRecipe::zero(), gamma: FieldRecipe::zero(), mu: FieldRecipe::zero() }
    }
}

/// Boundary data families.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BoundaryRecipe {
    /// `x_axis`, axis 1 or 2.
    Coordinate { axis: u8 },
    /// `exp(sign·λ·x_axis + shift)`.
    Exp {
        lambda: f64,
        axis: u8,
        #[serde(default = "plus_one")]
        sign: f64,
        #[serde(default)]
        shift: f64,
    },
    /// Trace of the imaginary part of the CGO solution for the scenario's
    /// coefficients, `𝛒 = (ρ/√2)(k + i k⊥)`.
    CgoImag {
        rho: f64,
        #[serde(default = "e1")]
        k: [f64; 2],
    },
    Constant { value: f64 },
}

fn plus_one() -> f64 {
    1.0
}

fn e1() -> [f64; 2] {
    [1.0, 0.0]
}

fn cgo_vector(rho: f64, k: [f64; 2]) -> crate::Result<CgoVector> {
    let len = k[0].hypot(k[1]);
    let k = [k[0] / len, k[1] / len];
    CgoVector::new(rho, k, [-k[1], k[0]])
}

impl BoundaryRecipe {
    fn check(&self, field: &str) -> Result<(), Failure> {
        let bad = |what: &str| Err(Failure::Config(format!("{field}: {what}")));
        match *self {
            BoundaryRecipe::Coordinate { axis } | BoundaryRecipe::Exp { axis, .. } if axis != 1 && axis != 2 => bad("axis must be 1 or 2"),
            BoundaryRecipe::Exp { sign, .. } if sign != 1.0 && sign != -1.0 => bad("sign must be 1 or -1"),
            BoundaryRecipe::CgoImag { rho, .. } if !(rho > 0.0 && rho.is_finite()) => bad("rho must be > 0"),
            BoundaryRecipe::CgoImag { k, .. } if !(k[0].hypot(k[1]) > 0.0) => bad("k must be nonzero"),
            _ => Ok(()),
        }
    }

    fn data(&self, grid: Grid, sigma: &ScalarField, gamma: Option<&ScalarField>) -> crate::Result<BoundaryData> {
        let pick = |axis: u8, x: f64, y: f64| if axis == 1 { x } else { y };
        Ok(match *self {
            BoundaryRecipe::Coordinate { axis } => BoundaryData::from_real_fn(grid, move |x, y| pick(axis, x, y)),
            BoundaryRecipe::Exp { lambda, axis, sign, shift } => {
                BoundaryData::from_real_fn(grid, move |x, y| (sign * lambda * pick(axis, x, y) + shift).exp())
            }
            BoundaryRecipe::CgoImag { rho, k } => {
                let v = cgo_vector(rho, k)?;
                let sol = match gamma {
                    Some(g) => make_cgo_diffusion(sigma, g, &v)?,
                    None => make_cgo(sigma, &v)?,
                };
                cgo_imag_parts(&sol)?.f_i
            }
            BoundaryRecipe::Constant { value } => BoundaryData::constant(grid, C64::new(value, 0.0)),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CrossFormName {
    Consistent,
    AsPrinted,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSpec {
    /// Functional exponent; AET defaults to 2.
    pub p: Option<f64>,
    pub f: Vec<BoundaryRecipe>,
    /// Index pairs into `f` for the cross functional (needs `p = 2`).
    pub cross: Vec<[usize; 2]>,
    pub cross_form: CrossFormName,
}

impl Default for DataSpec {
    fn default() -> Self {
        Self { p: None, f: vec![BoundaryRecipe::Coordinate { axis: 1 }], cross: Vec::new(), cross_form: CrossFormName::Consistent }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BcName {
    Dirichlet,
    Robin,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UmotSpec {
    pub source: BoundaryRecipe,
    /// Detector position; snapped to the nearest boundary node.
    pub eta: [f64; 2],
    pub b: BcName,
    pub c: BcName,
    pub robin_gamma: f64,
}

impl Default for UmotSpec {
    fn default() -> Self {
        Self { source: BoundaryRecipe::Constant { value: 1.0 }, eta: [0.5, 0.0], b: BcName::Dirichlet, c: BcName::Robin, robin_gamma: 1.0 }
    }
}

fn default_rho_truth() -> FieldRecipe {
    FieldRecipe::Bump { center: [0.5, 0.5], radius: 0.2, amplitude: 1.0 }
}

fn default_nu_truth() -> FieldRecipe {
    FieldRecipe::Bump { center: [0.52, 0.47], radius: 0.18, amplitude: 0.5 }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinearizeSpec {
    /// Perturbation of σ (AET, QPAT) or μ (UMOT).
    pub rho: FieldRecipe,
    /// Perturbation of γ (QPAT).
    pub nu: FieldRecipe,
    pub ladder: Vec<f64>,
    /// Also write the assembled operator as `HLMAT01`.
    pub dump_operator: bool,
}

impl Default for LinearizeSpec {
    fn default() -> Self {
        Self { rho: default_rho_truth(), nu: default_nu_truth(), ladder: DEFAULT_LADDER.to_vec(), dump_operator: true }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditSpec {
    pub angles: usize,
}

impl Default for AuditSpec {
    fn default() -> Self {
        Self { angles: crate::microlocal::XI_SAMPLES }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CgoSpec {
    pub rho: Vec<f64>,
    pub k: [f64; 2],
    pub max_iterations: Option<usize>,
}

impl Default for CgoSpec {
    fn default() -> Self {
        Self { rho: vec![5.0, 10.0, 20.0, 40.0], k: e1(), max_iterations: None }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PathName {
    PSmall,
    Aet,
    Qpat,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    /// Defaults from the modality: `p-small` for AET with `p < 1`, `aet`
    /// otherwise, `qpat` for QPAT.
    pub path: Option<PathName>,
    pub t_samples: usize,
    pub rho: f64,
    /// Second CGO magnitude on the AET path; default `rho + 2√2`.
    pub rho2: Option<f64>,
    /// Exponential rate of the QPAT end data.
    pub lambda: f64,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self { path: None, t_samples: 11, rho: 20.0, rho2: None, lambda: 0.1 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodName {
    A0x1,
    QpatLambda,
    SvdPinv,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReconstructSpec {
    pub method: MethodName,
    /// Truth used to synthesize the data.
    pub rho: FieldRecipe,
    pub nu: FieldRecipe,
    /// One reconstruction per entry (`qpat-lambda`).
    pub lambda: Vec<f64>,
    pub tol: f64,
}

impl Default for ReconstructSpec {
    fn default() -> Self {
        Self { method: MethodName::SvdPinv, rho: default_rho_truth(), nu: default_nu_truth(), lambda: vec![0.1], tol: 1e-8 }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumSpec {
    pub tol: f64,
}

impl Default for SpectrumSpec {
    fn default() -> Self {
        Self { tol: 1e-8 }
    }
}

/// Why a run stopped. Config problems exit with 1, numerical ones with 2.
#[derive(Debug)]
pub enum Failure {
    Config(String),
    Numerical { stage: String, source: Error },
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => 1,
            Failure::Numerical { .. } => 2,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "config error: {m}"),
            Failure::Numerical { stage, source } => write!(f, "numerical failure in stage `{stage}`: {source}"),
        }
    }
}

trait Stage<T> {
    fn at(self, stage: &str) -> Result<T, Failure>;
}

impl<T> Stage<T> for crate::Result<T> {
    fn at(self, stage: &str) -> Result<T, Failure> {
        self.map_err(|source| match source {
            Error::Config(m) => Failure::Config(m),
            source => Failure::Numerical { stage: stage.to_string(), source },
        })
    }
}

fn config_err<T>(msg: impl Into<String>) -> Result<T, Failure> {
    Err(Failure::Config(msg.into()))
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self, Failure> {
        let sc: Scenario = toml::from_str(text).map_err(|e| Failure::Config(e.to_string()))?;
        sc.validate()?;
        Ok(sc)
    }

    /// Field-level checks; messages name the offending key.
    pub fn validate(&self) -> Result<(), Failure> {
        if self.grid.n < 3 {
            return config_err(format!("grid.n must be >= 3, got {}", self.grid.n));
        }
        let [_, _, w, h] = self.grid.rect;
        if !(w > 0.0 && h > 0.0) || (w - h).abs() > 1e-12 * w.max(h) {
            return config_err("grid.rect must be a square with positive side");
        }
        if let Some(p) = self.data.p {
            if !(p > 0.0 && p.is_finite()) {
                return config_err(format!("data.p must be > 0, got {p}"));
            }
        }
        for (name, r) in [("coefficients.sigma", &self.coefficients.sigma), ("coefficients.gamma", &self.coefficients.gamma), ("coefficients.mu", &self.coefficients.mu)] {
            r.check(name)?;
        }
        for (name, r) in [("linearize.rho", &self.linearize.rho), ("linearize.nu", &self.linearize.nu), ("reconstruct.rho", &self.reconstruct.rho), ("reconstruct.nu", &self.reconstruct.nu)] {
            r.check(name)?;
        }
        if self.modality != ModalityName::Umot && self.data.f.is_empty() {
            return config_err("data.f must list at least one boundary datum");
        }
        for (j, f) in self.data.f.iter().enumerate() {
            f.check(&format!("data.f[{j}]"))?;
        }
        self.umot.source.check("umot.source")?;
        for pair in &self.data.cross {
            if pair.iter().any(|&i| i >= self.data.f.len()) || pair[0] == pair[1] {
                return config_err(format!("data.cross entry {pair:?} must name two distinct entries of data.f"));
            }
        }
        if !self.data.cross.is_empty() && self.p() != 2.0 {
            return config_err("data.cross requires data.p = 2");
        }
        if !(self.umot.robin_gamma >= 0.0) {
            return config_err("umot.robin_gamma must be >= 0");
        }
        if self.audit.angles == 0 {
            return config_err("audit.angles must be >= 1");
        }
        if self.cgo.rho.iter().any(|&r| !(r > 0.0 && r.is_finite())) {
            return config_err("cgo.rho entries must be > 0");
        }
        if !(self.cgo.k[0].hypot(self.cgo.k[1]) > 0.0) {
            return config_err("cgo.k must be nonzero");
        }
        if self.sweep.t_samples < 2 {
            return config_err("sweep.t_samples must be >= 2");
        }
        if !(self.sweep.rho > 0.0) || self.sweep.rho2.is_some_and(|r| !(r > 0.0)) {
            return config_err("sweep.rho and sweep.rho2 must be > 0");
        }
        if !(self.sweep.lambda > 0.0) {
            return config_err("sweep.lambda must be > 0");
        }
        if self.reconstruct.lambda.is_empty() || self.reconstruct.lambda.iter().any(|&l| !(l > 0.0 && l <= 0.5)) {
            return config_err("reconstruct.lambda entries must lie in (0, 0.5]");
        }
        if !(self.reconstruct.tol > 0.0) {
            return config_err("reconstruct.tol must be > 0");
        }
        if !(self.spectrum.tol > 0.0) {
            return config_err("spectrum.tol must be > 0");
        }
        if self.linearize.ladder.len() < 3 || self.linearize.ladder.windows(2).any(|w| w[1] >= w[0]) {
            return config_err("linearize.ladder needs >= 3 strictly decreasing steps");
        }
        Ok(())
    }

    pub fn p(&self) -> f64 {
        self.data.p.unwrap_or(2.0)
    }
}

/// First 16 hex digits of SHA-256 over the config text and overrides.
pub fn config_hash(text: &str, n: Option<usize>, seed: Option<u64>) -> String {
    let mut h = Sha256::new();
    h.update(text.as_bytes());
    h.update(format!("\n#override n={n:?} seed={seed:?}\n").as_bytes());
    h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// Evaluated scenario: grid, masks, coefficients and boundary data.
struct Context {
    sc: Scenario,
    hash: String,
    masks: DomainMasks,
    sigma: ScalarField,
    gamma: ScalarField,
    mu: ScalarField,
    f: Vec<BoundaryData>,
}

impl Context {
    fn new(sc: Scenario, hash: String) -> Result<Self, Failure> {
        let [x0, y0, w, h] = sc.grid.rect;
        let grid = Grid::new(sc.grid.n, Rect::new(x0, y0, w, h)).map_err(|e| Failure::Config(format!("grid: {e}")))?;
        let masks = DomainMasks::new(grid, sc.masks.m_prime, sc.masks.m_dprime).map_err(|e| Failure::Config(format!("masks: {e}")))?;
        let seed = sc.seed;
        let sigma = sc.coefficients.sigma.field(&masks, seed);
        let gamma = sc.coefficients.gamma.field(&masks, seed.wrapping_add(1));
        let mu = sc.coefficients.mu.field(&masks, seed.wrapping_add(2));
        let g = (sc.modality == ModalityName::Qpat).then_some(&gamma);
        let f = sc.data.f.iter().map(|r| r.data(grid, &sigma, g)).collect::<crate::Result<Vec<_>>>().at("boundary data")?;
        Ok(Self { sc, hash, masks, sigma, gamma, mu, f })
    }

    fn grid(&self) -> Grid {
        self.masks.grid()
    }

    fn bc(&self, name: BcName) -> BcKind {
        match name {
            BcName::Dirichlet => BcKind::Dirichlet,
            BcName::Robin => BcKind::Robin { gamma: vec![self.sc.umot.robin_gamma; self.grid().boundary_len()] },
        }
    }

    fn eta(&self) -> usize {
        let g = self.grid();
        let [ex, ey] = self.sc.umot.eta;
        (0..g.boundary_len())
            .min_by(|&a, &b| {
                let d = |k: usize| {
                    let (pi, pj) = g.boundary_node(k);
                    let (x, y) = g.padded_coord(pi, pj);
                    (x - ex).powi(2) + (y - ey).powi(2)
                };
                d(a).total_cmp(&d(b))
            })
            .expect("boundary is nonempty")
    }

    fn umot_source(&self) -> Result<BoundaryData, Failure> {
        self.sc.umot.source.data(self.grid(), &self.sigma, None).at("boundary data")
    }

    fn cross_form(&self) -> CrossForm {
        match self.sc.data.cross_form {
            CrossFormName::Consistent => CrossForm::Consistent,
            CrossFormName::AsPrinted => CrossForm::AsPrinted,
        }
    }

    /// Linearizations of the scenario, in stacking order, with names.
    fn maps(&self) -> Result<Vec<(String, Box<dyn LinearMap>)>, Failure> {
        let mut out: Vec<(String, Box<dyn LinearMap>)> = Vec::new();
        match self.sc.modality {
            ModalityName::Aet => {
                for (j, f) in self.f.iter().enumerate() {
                    let m = AetLinearization::new(&self.masks, &self.sigma, f, self.sc.p()).at("linearize")?;
                    out.push((format!("aet_{j}"), Box::new(m)));
                }
                for &[a, b] in &self.sc.data.cross {
                    let m = AetCrossLinearization::new(&self.masks, &self.sigma, &self.f[a], &self.f[b], self.cross_form()).at("linearize")?;
                    out.push((format!("cross_{a}_{b}"), Box::new(m)));
                }
            }
            ModalityName::Umot => {
                let s = self.umot_source()?;
                let m = UmotLinearization::new(&self.masks, &self.mu, &s, self.eta(), self.bc(self.sc.umot.b), self.bc(self.sc.umot.c))
                    .at("linearize")?;
                out.push(("umot".into(), Box::new(m)));
            }
            ModalityName::Qpat => {
                for (j, f) in self.f.iter().enumerate() {
                    let m = QpatLinearization::new(&self.masks, &self.sigma, &self.gamma, f).at("linearize")?;
                    out.push((format!("qpat_{j}"), Box::new(m)));
                }
            }
        }
        Ok(out)
    }

    fn perturbations(&self, rho: &FieldRecipe, nu: &FieldRecipe, salt: u64) -> Vec<ScalarField> {
        let seed = self.sc.seed.wrapping_add(salt);
        let mut v = vec![rho.field(&self.masks, seed)];
        if self.sc.modality == ModalityName::Qpat {
            v.push(nu.field(&self.masks, seed.wrapping_add(1)));
        }
        v
    }
}

/// Files produced by a command plus the summary shown on stdout.
#[derive(Default)]
struct Outputs {
    files: Vec<(String, Vec<u8>)>,
    summary: Vec<(&'static str, String)>,
}

impl Outputs {
    fn text(&mut self, name: impl Into<String>, body: String) {
        self.files.push((name.into(), body.into_bytes()));
    }

    fn grid(&mut self, stem: &str, field: &ScalarField, hash: &str) {
        self.text(format!("{stem}.grid.txt"), io::grid_text(field, hash));
        self.files.push((format!("{stem}.grid.bin"), io::grid_binary(field, hash)));
    }

    fn note(&mut self, key: &'static str, value: impl ToString) {
        self.summary.push((key, value.to_string()));
    }
}

fn forward(ctx: &Context) -> Result<Outputs, Failure> {
    let mut out = Outputs::default();
    let h = &ctx.hash;
    match ctx.sc.modality {
        ModalityName::Aet => {
            let coeffs = CoefficientSet::with_sigma(ctx.sigma.clone()).exponent(ctx.sc.p());
            for (j, f) in ctx.f.iter().enumerate() {
                let d = power_density(&coeffs, f).at("forward")?;
                out.grid(&format!("forward_aet_{j}"), &d.field, h);
            }
            let plain = CoefficientSet::with_sigma(ctx.sigma.clone());
            for &[a, b] in &ctx.sc.data.cross {
                let d = cross_power(&plain, &ctx.f[a], &ctx.f[b]).at("forward")?;
                out.grid(&format!("forward_cross_{a}_{b}"), &d.field, h);
            }
            out.note("p", ctx.sc.p());
        }
        ModalityName::Umot => {
            let s = ctx.umot_source()?;
            let c = ctx.bc(ctx.sc.umot.c);
            let d = umot_data(&CoefficientSet::with_mu(ctx.mu.clone()), &s, ctx.eta(), ctx.bc(ctx.sc.umot.b), c).at("forward")?;
            out.grid("forward_umot", &d.field, h);
            out.note("eta", ctx.eta());
            out.note("green_convention", d.provenance.green_convention.unwrap_or(""));
        }
        ModalityName::Qpat => {
            let coeffs = CoefficientSet::with_sigma_gamma(ctx.sigma.clone(), ctx.gamma.clone());
            for (j, f) in ctx.f.iter().enumerate() {
                let d = qpat_data(&coeffs, f).at("forward")?;
                out.grid(&format!("forward_qpat_{j}"), &d.field, h);
            }
        }
    }
    out.note("fields", out.files.len() / 2);
    Ok(out)
}

fn linearize(ctx: &Context) -> Result<Outputs, Failure> {
    let mut out = Outputs::default();
    let maps = ctx.maps()?;
    let pert = ctx.perturbations(&ctx.sc.linearize.rho, &ctx.sc.linearize.nu, 10);
    let eps = &ctx.sc.linearize.ladder;
    let shift = |base: &ScalarField, d: &ScalarField, e: f64| base.add(&d.scale_real(e));
    let mut csv = String::from("map,eps,residual,ratio,pass\n");
    let mut all_pass = true;
    for (idx, (name, map)) in maps.iter().enumerate() {
        let lin = map.apply(&pert).at("linearize")?;
        let fwd = |e: f64| -> crate::Result<ScalarField> {
            match ctx.sc.modality {
                ModalityName::Aet => {
                    let s = shift(&ctx.sigma, &pert[0], e)?;
                    let nf = ctx.f.len();
                    if idx < nf {
                        Ok(power_density(&CoefficientSet::with_sigma(s).exponent(ctx.sc.p()), &ctx.f[idx])?.field)
                    } else {
                        let [a, b] = ctx.sc.data.cross[idx - nf];
                        Ok(cross_power(&CoefficientSet::with_sigma(s), &ctx.f[a], &ctx.f[b])?.field)
                    }
                }
                ModalityName::Umot => {
                    let m = shift(&ctx.mu, &pert[0], e)?;
                    let s = ctx.sc.umot.source.data(ctx.grid(), &ctx.sigma, None)?;
                    Ok(umot_data(&CoefficientSet::with_mu(m), &s, ctx.eta(), ctx.bc(ctx.sc.umot.b), ctx.bc(ctx.sc.umot.c))?.field)
                }
                ModalityName::Qpat => {
                    let s = shift(&ctx.sigma, &pert[0], e)?;
                    let g = shift(&ctx.gamma, &pert[1], e)?;
                    Ok(qpat_data(&CoefficientSet::with_sigma_gamma(s, g), &ctx.f[idx])?.field)
                }
            }
        };
        let rep = validate_frechet(&fwd, &lin, eps).at("linearize ladder")?;
        all_pass &= rep.pass;
        for (i, (e, r)) in rep.epsilons.iter().zip(&rep.residuals).enumerate() {
            let ratio = if i == 0 { String::new() } else { format!("{:.6e}", rep.ratios[i - 1]) };
            csv.push_str(&format!("{name},{e:e},{r:.12e},{ratio},{}\n", if rep.pass { "PASS" } else { "FAIL" }));
        }
    }
    out.text("linearize_ladder.csv", io::csv_with_hash(&csv, &ctx.hash));
    out.note("maps", maps.len());
    out.note("ladder", if all_pass { "PASS" } else { "FAIL" });
    if ctx.sc.linearize.dump_operator {
        let refs: Vec<&dyn LinearMap> = maps.iter().map(|(_, m)| m.as_ref()).collect();
        match assemble_stacked(&refs, &ctx.masks) {
            Ok(op) => {
                out.files.push(("linearize_operator.hlmat".into(), io::matrix_binary(&op, &ctx.hash)));
                out.note("operator", format!("{}x{}", op.matrix.nrows(), op.matrix.ncols()));
            }
            Err(Error::DenseLimit(m)) => out.note("operator", format!("skipped ({m})")),
            Err(e) => return Err(e).at("assemble"),
        }
    }
    Ok(out)
}

fn audit_row(label: &str, r: &AuditReport) -> String {
    format!(
        "{label},{:.12e},{:.12e},{:.12e},{:.12e},{},{:.12e}\n",
        r.min_abs,
        r.argmin_x.0,
        r.argmin_x.1,
        r.argmin_angle,
        r.verdict.name(),
        r.threshold
    )
}

fn symbol_audit(ctx: &Context) -> Result<Outputs, Failure> {
    let mut out = Outputs::default();
    let angles = ctx.sc.audit.angles;
    let zero = ScalarField::zeros(ctx.grid());
    let mut reports: Vec<(String, AuditReport)> = Vec::new();
    match ctx.sc.modality {
        ModalityName::Aet => {
            let op = EllipticOperator::conductivity(&ctx.sigma).at("symbol-audit")?;
            for (j, f) in ctx.f.iter().enumerate() {
                let u = op.solve(&zero, f).at("symbol-audit")?;
                reports.push((format!("aet_{j}"), aet_audit(&ctx.sigma, &u, ctx.sc.p(), &ctx.masks, angles).at("symbol-audit")?));
            }
        }
        ModalityName::Umot => {
            let s = ctx.umot_source()?;
            let m = UmotLinearization::new(&ctx.masks, &ctx.mu, &s, ctx.eta(), ctx.bc(ctx.sc.umot.b), ctx.bc(ctx.sc.umot.c))
                .at("symbol-audit")?;
            reports.push(("umot".into(), umot_audit(m.mu0(), m.u0(), m.g0(), &ctx.masks, angles).at("symbol-audit")?));
        }
        ModalityName::Qpat => {
            if ctx.f.len() % 2 != 0 {
                return config_err("data.f must hold an even number of data for the QPAT block audit");
            }
            let op = EllipticOperator::diffusion(&ctx.sigma, &ctx.gamma).at("symbol-audit")?;
            let us = ctx.f.iter().map(|f| op.solve(&zero, f)).collect::<crate::Result<Vec<_>>>().at("symbol-audit")?;
            reports.push(("qpat_block".into(), qpat_block_audit(&us, &ctx.masks, angles).at("symbol-audit")?));
        }
    }
    let mut csv = String::from("functional,min_abs,argmin_x1,argmin_x2,argmin_xi_angle,verdict,threshold\n");
    for (label, r) in &reports {
        csv.push_str(&audit_row(label, r));
    }
    out.text("symbol-audit.csv", io::csv_with_hash(&csv, &ctx.hash));
    let all = reports.iter().all(|(_, r)| r.passes());
    out.note("verdict", if all { "ELLIPTIC" } else { "NOT-ELLIPTIC" });
    out.note("min_abs", format!("{:.6e}", reports.iter().map(|(_, r)| r.min_abs).fold(f64::INFINITY, f64::min)));
    Ok(out)
}

fn cgo(ctx: &Context) -> Result<Outputs, Failure> {
    let mut out = Outputs::default();
    let mut opts = CgoOptions::default();
    if let Some(m) = ctx.sc.cgo.max_iterations {
        opts.max_iter = m;
    }
    let gamma = (ctx.sc.modality == ModalityName::Qpat).then_some(&ctx.gamma);
    let mut csv = String::from("rho,sup_rho_psi,gmres_residual,iterations,conductivity_residual\n");
    for (i, &r) in ctx.sc.cgo.rho.iter().enumerate() {
        let v = cgo_vector(r, ctx.sc.cgo.k).at("cgo")?;
        let sol = make_cgo_with(&ctx.sigma, gamma, &v, opts).at("cgo")?;
        csv.push_str(&format!("{r},{:.12e},{:.6e},{},{:.6e}\n", sup_rho_psi(&sol), sol.residual, sol.iterations, sol.conductivity_residual));
        out.grid(&format!("cgo_u_{i}"), &sol.u, &ctx.hash);
        out.grid(&format!("cgo_psi_{i}"), &sol.psi, &ctx.hash);
    }
    out.text("cgo.csv", io::csv_with_hash(&csv, &ctx.hash));
    out.note("solutions", ctx.sc.cgo.rho.len());
    Ok(out)
}

fn sweep(ctx: &Context) -> Result<Outputs, Failure> {
    let mut out = Outputs::default();
    let sc = &ctx.sc;
    let kind = sc.sweep.path.unwrap_or(match sc.modality {
        ModalityName::Aet if sc.p() < 1.0 => PathName::PSmall,
        ModalityName::Aet => PathName::Aet,
        ModalityName::Qpat => PathName::Qpat,
        ModalityName::Umot => return config_err("sweep.path must be set for modality umot"),
    });
    let t = t_grid(sc.sweep.t_samples);
    let rho1 = CgoVector::standard(sc.sweep.rho).at("sweep")?;
    let path = match kind {
        PathName::PSmall => {
            if !(sc.p() > 0.0 && sc.p() < 1.0) {
                return config_err("sweep.path = p-small needs 0 < data.p < 1");
            }
            DeformationPath::p_small(ctx.sigma.clone(), ctx.f.clone(), sc.p(), rho1, t).at("sweep")?
        }
        PathName::Aet => {
            let j = match sc.data.cross.first() {
                Some(&[0, j]) => j,
                _ => return config_err("sweep.path = aet needs data.cross = [[0, j]]"),
            };
            let mut f = ctx.f.clone();
            f.push(ctx.f[j].clone());
            let rho2 = CgoVector::standard(sc.sweep.rho2.unwrap_or(sc.sweep.rho + 2.0 * SQRT_2)).at("sweep")?;
            DeformationPath::aet(ctx.sigma.clone(), f, rho1, rho2, t).at("sweep")?
        }
        PathName::Qpat => {
            DeformationPath::qpat_standard(ctx.sigma.clone(), ctx.gamma.clone(), sc.sweep.lambda, sc.sweep.rho, t).at("sweep")?
        }
    };
    let rep = deformation_sweep(&path, &ctx.masks).at("sweep")?;
    out.text("sweep.csv", io::csv_with_hash(&rep.to_csv(), &ctx.hash));
    out.note("path", path.kind.name());
    out.note("verdict", rep.verdict());
    out.note("min_coverage", format!("{:.6e}", rep.min_coverage));
    if let Some(s) = rep.min_spanning {
        out.note("min_spanning", format!("{s:.6e}"));
    }
    Ok(out)
}

fn emit_recon(out: &mut Outputs, stem: &str, r: &ReconResult, hash: &str) {
    out.grid(&format!("{stem}_rho"), &r.rho_hat, hash);
    if let Some(nu) = &r.nu_hat {
        out.grid(&format!("{stem}_nu"), nu, hash);
    }
}

fn reconstruct(ctx: &Context) -> Result<Outputs, Failure> {
    let mut out = Outputs::default();
    let spec = &ctx.sc.reconstruct;
    let truth = ctx.perturbations(&spec.rho, &spec.nu, 20);
    let mut lines = Vec::new();
    match spec.method {
        MethodName::A0x1 => {
            let p = ctx.sc.p();
            if !(p > 0.0 && p < 1.0) {
                return config_err(format!("data.p must lie in (0, 1) for reconstruct.method = a0x1, got {p}"));
            }
            let g = ctx.grid();
            let lin = AetLinearization::new(&ctx.masks, &ScalarField::zeros(g), &BoundaryData::from_real_fn(g, |x, _| x), p).at("reconstruct")?;
            let data = lin.apply(&truth[..1]).at("reconstruct")?;
            let r = invert_A0x1(&data, p, &ctx.masks).and_then(|r| r.with_truth(&ctx.masks, &truth[0], None)).at("reconstruct")?;
            emit_recon(&mut out, "reconstruct", &r, &ctx.hash);
            lines.push(r.summary_line());
        }
        MethodName::QpatLambda => {
            let rho = &truth[0];
            let nu = spec.nu.field(&ctx.masks, ctx.sc.seed.wrapping_add(21));
            let mut csv = String::from("lambda,rho_rel_l2_error,nu_rel_l2_error,kernel_dim\n");
            for (i, &lambda) in spec.lambda.iter().enumerate() {
                let (s0, g0, f) = qpat_background(ctx.grid(), lambda);
                let data = f
                    .iter()
                    .map(|fj| QpatLinearization::new(&ctx.masks, &s0, &g0, fj)?.apply(&[rho.clone(), nu.clone()]))
                    .collect::<crate::Result<Vec<_>>>()
                    .at("reconstruct")?;
                let r = qpat_lambda_reconstruct(lambda, &data[0], &data[1], &data[2], &ctx.masks)
                    .and_then(|r| r.with_truth(&ctx.masks, rho, Some(&nu)))
                    .at("reconstruct")?;
                csv.push_str(&format!(
                    "{lambda},{:.12e},{:.12e},{}\n",
                    r.rel_l2_error.unwrap_or(f64::NAN),
                    r.nu_rel_l2_error.unwrap_or(f64::NAN),
                    r.kernel_dim
                ));
                emit_recon(&mut out, &format!("reconstruct_{i}"), &r, &ctx.hash);
                lines.push(r.summary_line());
            }
            out.text("reconstruct_lambda.csv", io::csv_with_hash(&csv, &ctx.hash));
        }
        MethodName::SvdPinv => {
            let maps = ctx.maps()?;
            let refs: Vec<&dyn LinearMap> = maps.iter().map(|(_, m)| m.as_ref()).collect();
            let op = assemble_stacked(&refs, &ctx.masks).at("assemble")?;
            let data = maps.iter().map(|(_, m)| m.apply(&truth)).collect::<crate::Result<Vec<_>>>().at("reconstruct")?;
            let r = svd_pinv_reconstruct(&op, &data, spec.tol, &ctx.masks)
                .and_then(|r| r.with_truth(&ctx.masks, &truth[0], truth.get(1)))
                .at("reconstruct")?;
            emit_recon(&mut out, "reconstruct", &r, &ctx.hash);
            lines.push(r.summary_line());
        }
    }
    out.text("reconstruct_summary.txt", format!("# config={}\n{}\n", ctx.hash, lines.join("\n")));
    out.note("result", lines.join("; "));
    Ok(out)
}

fn spectrum(ctx: &Context) -> Result<Outputs, Failure> {
    let mut out = Outputs::default();
    let maps = ctx.maps()?;
    let refs: Vec<&dyn LinearMap> = maps.iter().map(|(_, m)| m.as_ref()).collect();
    let op = assemble_stacked(&refs, &ctx.masks).at("assemble")?;
    let rep = svd_probe_with(&op, ctx.sc.spectrum.tol);
    out.text("spectrum.csv", io::csv_with_hash(&rep.to_csv(), &ctx.hash));
    out.note("maps", maps.iter().map(|(n, _)| n.as_str()).collect::<Vec<_>>().join(" "));
    out.note("kernel_dim", rep.numerical_kernel_dim);
    out.note("sigma_min", format!("{:.6e}", rep.sigma_min));
    out.note("sigma_max", format!("{:.6e}", rep.sigma_max));
    out.note("condition", format!("{:.6e}", rep.condition));
    Ok(out)
}

/// Parses the config, runs `command` and writes its outputs without printing.
/// Returns the output directory.
pub fn execute(config_text: &str, command: Command, out_root: &Path, n: Option<usize>, seed: Option<u64>) -> Result<PathBuf, Failure> {
    let mut sc = Scenario::parse(config_text)?;
    if let Some(n) = n {
        sc.grid.n = n;
    }
    if let Some(s) = seed {
        sc.seed = s;
    }
    sc.validate()?;
    let hash = config_hash(config_text, n, seed);
    let ctx = Context::new(sc, hash.clone())?;
    let mut outputs = match command {
        Command::Forward => forward(&ctx)?,
        Command::Linearize => linearize(&ctx)?,
        Command::SymbolAudit => symbol_audit(&ctx)?,
        Command::Cgo => cgo(&ctx)?,
        Command::Sweep => sweep(&ctx)?,
        Command::Reconstruct => reconstruct(&ctx)?,
        Command::Spectrum => spectrum(&ctx)?,
    };
    let g = ctx.grid();
    let mut pairs: Vec<(&str, String)> = vec![
        ("command", command.name().to_string()),
        ("modality", format!("{:?}", ctx.sc.modality).to_lowercase()),
        ("n", g.n().to_string()),
        ("h", format!("{:e}", g.h())),
        ("seed", ctx.sc.seed.to_string()),
    ];
    pairs.extend(outputs.summary.iter().map(|(k, v)| (*k, v.clone())));
    outputs.text(format!("{}.txt", command.name()), io::sidecar(&pairs, &hash));

    let dir = out_root.join(&hash);
    let write = || -> std::io::Result<()> {
        fs::create_dir_all(&dir)?;
        for (name, bytes) in &outputs.files {
            fs::write(dir.join(name), bytes)?;
        }
        Ok(())
    };
    write().map_err(|e| Failure::Numerical { stage: "write outputs".into(), source: e.into() })?;
    Ok(dir)
}

/// Runs a parsed command line; returns the process exit code.
pub fn run(cli: &Cli) -> i32 {
    let text = match fs::read_to_string(&cli.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("config error: cannot read {}: {e}", cli.config.display());
            return 1;
        }
    };
    match execute(&text, cli.command, &cli.out, cli.n, cli.seed) {
        Ok(dir) => {
            if let Ok(side) = fs::read_to_string(dir.join(format!("{}.txt", cli.command.name()))) {
                print!("{side}");
            }
            println!("output = {}", dir.display());
            0
        }
        Err(f) => {
            eprintln!("{f}");
            f.exit_code()
        }
    }
}
