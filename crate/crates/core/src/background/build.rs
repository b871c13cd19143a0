//! Gluing ũ = e^{−1/|s|²} − v with q = η⁻² + η log|s|² through M_η.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::geometry::ModelGeometry;
use super::jets::{split, Jet2};
use crate::cone_charts::ChartMap;
use crate::error::{ConeError, Result};
use crate::glue_max::{m_eta, m_eta_jet, MetaTable, MollifierSpec, Profile};
use crate::grid::{ChartTag, GridField};
use crate::numerics::{
    complex_hessian_estimated, hermitian_eigenvalues, linear_fit, log_space, max_abs, min_eigenvalue,
    periodic_angles, CMat, LineFit, C64,
};

/// e^{−1/h} is flushed to 0 below this norm.
pub const FLUSH_THRESHOLD: f64 = 1.0 / 745.0;
/// Smallest norm on the shell set.
pub const SHELL_FLOOR: f64 = 1e-300;
/// Shells are dense above this norm.
pub const SHELL_KNEE: f64 = 1e-12;
/// Shells above this norm carry a normal (non-subnormal) e^{−1/h}.
const NORMAL_THRESHOLD: f64 = 1.0 / 700.0;
/// Chebyshev degree per piece of the M_η table.
pub const TABLE_DEGREE: usize = 128;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackgroundParams {
    pub eta_ladder: Vec<f64>,
    pub betas: Vec<f64>,
    pub k_tests: Vec<f64>,
    /// Number of candidate shells in |s|² (see [`shell_set`]).
    pub n_shells: usize,
    /// Base radii sampled for n = 2.
    pub base_points: usize,
    pub n_angles: usize,
    /// Radii of the stored ξ-slice of u.
    pub grid_radii: usize,
    /// Annulus points for the plurisubharmonicity chain.
    pub psh_points: usize,
    pub mollifier_nodes: usize,
}

impl Default for BackgroundParams {
    fn default() -> Self {
        BackgroundParams {
            eta_ladder: (0..=10).map(|j| 0.5f64.powi(j)).collect(),
            betas: vec![0.4, 0.6, 0.75],
            k_tests: vec![1.0, 2.0, 4.0, 8.0],
            n_shells: 600,
            base_points: 4,
            n_angles: 16,
            grid_radii: 160,
            psh_points: 24,
            mollifier_nodes: 64,
        }
    }
}

impl BackgroundParams {
    pub fn validate(&self) -> Result<()> {
        if self.eta_ladder.is_empty() || self.eta_ladder.iter().any(|e| !(*e > 0.0)) {
            return Err(ConeError::Config("eta ladder must be nonempty and positive".into()));
        }
        if self.betas.iter().any(|b| !(*b > 0.0 && *b < 1.0)) {
            return Err(ConeError::Config("betas must lie in (0, 1)".into()));
        }
        if self.n_shells < 16 || self.n_angles < 4 || self.grid_radii < 8 || self.base_points == 0 {
            return Err(ConeError::Config("background grid too small".into()));
        }
        Ok(())
    }
}

/// Sample (a, b) = (|x|², |ξ|²) pairs with |s|² = h, inside the model domain.
pub fn shell_points(geom: &ModelGeometry, h: f64, base_points: usize) -> Vec<(f64, f64)> {
    let bases: Vec<f64> = if geom.dim() == 1 || base_points == 1 {
        vec![0.0]
    } else {
        (0..base_points).map(|i| geom.base_radius.powi(2) * i as f64 / (base_points - 1) as f64).collect()
    };
    bases
        .into_iter()
        .filter_map(|a| {
            let unit = geom.norm_jet(a, 1.0).v;
            let b = h / unit;
            (b <= geom.fiber_radius.powi(2) * (1.0 + 1e-12)).then_some((a, b))
        })
        .collect()
}

/// A representative point with the given (a, b).
pub fn point_from_ab(geom: &ModelGeometry, a: f64, b: f64, angle: f64) -> Vec<C64> {
    let xi = C64::from_polar(b.sqrt(), angle);
    if geom.dim() == 1 {
        vec![xi]
    } else {
        vec![C64::from_polar(a.sqrt(), -0.7 * angle), xi]
    }
}

/// Candidate shells: a quarter from `SHELL_FLOOR` to `SHELL_KNEE`, the rest up to sup |s|².
pub fn shell_set(geom: &ModelGeometry, n: usize) -> Vec<f64> {
    let coarse = n / 4;
    let mut out = log_space(SHELL_FLOOR, SHELL_KNEE, coarse + 1);
    out.pop();
    out.extend(log_space(SHELL_KNEE, geom.sup_norm_sq(), n - coarse));
    out
}

/// e^{−1/h} as a jet, flushed to 0 below `FLUSH_THRESHOLD`.
fn exp_jet(h: Jet2) -> Jet2 {
    if h.v < FLUSH_THRESHOLD {
        Jet2::constant(0.0)
    } else {
        (-h.recip()).exp()
    }
}

pub fn tilde_u_jet(geom: &ModelGeometry, a: f64, b: f64) -> Jet2 {
    exp_jet(geom.norm_jet(a, b)) - geom.v_jet(a, b)
}

pub fn q_jet(geom: &ModelGeometry, eta: f64, a: f64, b: f64) -> Jet2 {
    Jet2::constant(1.0 / (eta * eta)) + geom.norm_jet(a, b).ln().scale(eta)
}

pub fn tilde_u_value(geom: &ModelGeometry, p: &[C64]) -> f64 {
    let (a, b) = geom.ab(p);
    if b == 0.0 {
        return -geom.v_jet(a, 0.0).v;
    }
    tilde_u_jet(geom, a, b).v
}

pub fn q_value(geom: &ModelGeometry, eta: f64, p: &[C64]) -> f64 {
    let (a, b) = geom.ab(p);
    q_jet(geom, eta, a, b).v
}

/// ξ-slice (x = 0) of a rotation-invariant function on a log-polar grid.
fn xi_slice(geom: &ModelGeometry, rho_min: f64, n_radii: usize, n_angles: usize, f: impl Fn(&[C64]) -> f64) -> Result<GridField> {
    let radii = log_space(rho_min, geom.fiber_radius, n_radii);
    let angles = periodic_angles(n_angles);
    GridField::from_fn(ChartTag::Z, 1.0, radii, angles, true, |r, t| {
        C64::new(f(&point_from_ab(geom, 0.0, r * r, t)), 0.0)
    })
}

/// ũ on the ξ-slice through the base point x = 0.
pub fn tilde_u(geom: &ModelGeometry, rho_min: f64, n_radii: usize, n_angles: usize) -> Result<GridField> {
    xi_slice(geom, rho_min, n_radii, n_angles, |p| tilde_u_value(geom, p))
}

/// q on the ξ-slice through the base point x = 0.
pub fn q_function(geom: &ModelGeometry, eta: f64, rho_min: f64, n_radii: usize, n_angles: usize) -> Result<GridField> {
    if !(eta > 0.0) {
        return Err(ConeError::Domain("eta must be positive".into()));
    }
    xi_slice(geom, rho_min, n_radii, n_angles, |p| q_value(geom, eta, p))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FdCheck {
    pub points: usize,
    pub max_residual: f64,
    /// Largest truncation estimate among the points.
    pub max_estimate: f64,
    /// Largest residual / estimate ratio.
    pub worst_ratio: f64,
    pub pass: bool,
}

impl FdCheck {
    pub fn from_samples(samples: &[(f64, f64)], factor: f64) -> Self {
        let mut c = FdCheck { points: samples.len(), max_residual: 0.0, max_estimate: 0.0, worst_ratio: 0.0, pass: true };
        for &(res, est) in samples {
            c.max_residual = c.max_residual.max(res);
            c.max_estimate = c.max_estimate.max(est);
            let ratio = if est > 0.0 { res / est } else if res == 0.0 { 0.0 } else { f64::INFINITY };
            c.worst_ratio = c.worst_ratio.max(ratio);
            if !(res <= factor * est) {
                c.pass = false;
            }
        }
        c
    }
}

/// i∂∂̄q against −ηΘ by finite differences at `count` points off D.
pub fn q_hessian_check(geom: &ModelGeometry, eta: f64, count: usize) -> FdCheck {
    let samples: Vec<(f64, f64)> = (0..count)
        .map(|i| {
            let t = (i as f64 + 0.5) / count as f64;
            let b = (0.02 + 0.9 * t) * geom.fiber_radius.powi(2);
            let a = geom.base_radius.powi(2) * ((i * 7) % count) as f64 / count as f64;
            let p = point_from_ab(geom, a, b, 2.1 * i as f64);
            let f = |q: &[C64]| q_value(geom, eta, q);
            let step = p[p.len() - 1].norm() / 8.0;
            let (h, est) = complex_hessian_estimated(&f, &p, step, 0.0);
            let res = max_abs(&(h + geom.theta(&p).map(|z| z * eta)));
            (res, est)
        })
        .collect();
    FdCheck::from_samples(&samples, 10.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GluingParams {
    pub eta: f64,
    pub r: f64,
    pub r_prime: f64,
    /// min of ũ − q − (η + η⁻¹) over shells at or below r′.
    pub inner_separation: f64,
    /// min of q − ũ − (η + η⁻¹) on the r shell.
    pub outer_separation: f64,
    /// min eigenvalue of ω + i∂∂̄q over shells at or above r′.
    pub q_positivity_margin: f64,
}

fn min_over(points: &[(f64, f64)], f: impl Fn(f64, f64) -> f64) -> f64 {
    points.iter().map(|&(a, b)| f(a, b)).fold(f64::INFINITY, f64::min)
}

fn phi_q_margin(geom: &ModelGeometry, eta: f64, a: f64, b: f64) -> f64 {
    let p = point_from_ab(geom, a, b, 0.0);
    let (x, xi) = split(&p);
    min_eigenvalue(&(geom.phi_jet(a, b) + q_jet(geom, eta, a, b)).hessian(x, xi))
}

/// First η of the ladder admitting radii r′ < r on the shell set.
///
/// r′ is the largest shell such that ũ − q > η + η⁻¹ on every shell at or
/// below it; r is the first shell above r′ with q − ũ > η + η⁻¹.
pub fn choose_gluing_parameters(
    geom: &ModelGeometry,
    candidate_etas: &[f64],
    shells: &[f64],
    base_points: usize,
) -> Result<GluingParams> {
    if candidate_etas.is_empty() {
        return Err(ConeError::Config("empty eta ladder".into()));
    }
    let pts: Vec<Vec<(f64, f64)>> = shells.iter().map(|&h| shell_points(geom, h, base_points)).collect();
    let mut diagnostics = Vec::new();
    for &eta in candidate_etas {
        if !(eta > 0.0) {
            return Err(ConeError::Domain(format!("eta = {eta} must be positive")));
        }
        let gap = eta + 1.0 / eta;
        let inner: Vec<f64> =
            pts.iter().map(|p| min_over(p, |a, b| tilde_u_jet(geom, a, b).v - q_jet(geom, eta, a, b).v - gap)).collect();
        let prefix = inner.iter().take_while(|g| **g > 0.0).count();
        if prefix == 0 {
            diagnostics.push(format!("eta {eta}: no inner shell with ũ − q > η + 1/η"));
            continue;
        }
        let ip = prefix - 1;
        let outer = (ip + 1..shells.len()).find_map(|j| {
            let g = min_over(&pts[j], |a, b| q_jet(geom, eta, a, b).v - tilde_u_jet(geom, a, b).v - gap);
            (g > 0.0).then_some((j, g))
        });
        let Some((ir, outer_sep)) = outer else {
            diagnostics.push(format!("eta {eta}: r′ = {:.3e} but no outer shell with q − ũ > η + 1/η", shells[ip]));
            continue;
        };
        let q_margin = pts[ip..]
            .iter()
            .map(|p| min_over(p, |a, b| phi_q_margin(geom, eta, a, b)))
            .fold(f64::INFINITY, f64::min);
        if !(q_margin > 0.0) {
            diagnostics.push(format!("eta {eta}: ω + i∂∂̄q not positive (margin {q_margin:.3e})"));
            continue;
        }
        return Ok(GluingParams {
            eta,
            r: shells[ir],
            r_prime: shells[ip],
            inner_separation: inner[..=ip].iter().copied().fold(f64::INFINITY, f64::min),
            outer_separation: outer_sep,
            q_positivity_margin: q_margin,
        });
    }
    Err(ConeError::NoAdmissible(diagnostics.join("; ")))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Region {
    Inner,
    Annulus,
    Outer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialMode {
    Glued,
    /// u ≡ 0.
    Zero,
}

/// The glued potential u as a function on the model.
#[derive(Debug, Clone)]
pub struct BackgroundPotential {
    pub geom: ModelGeometry,
    pub gluing: GluingParams,
    pub spec: MollifierSpec,
    /// Interpolated M_η jets; `None` integrates every jet.
    pub table: Option<Arc<MetaTable>>,
    pub mode: PotentialMode,
}

/// log det(A + e^ℓ B) for n ≤ 2 without forming e^ℓ.
fn log_det_split(a: &CMat, ell: f64, b: &CMat) -> Result<f64> {
    let mut terms: Vec<(f64, f64)> = Vec::new();
    let mut push = |coef: f64, mult: f64| {
        if coef != 0.0 && coef.is_finite() && (mult == 0.0 || ell > f64::NEG_INFINITY) {
            terms.push((coef.signum(), coef.abs().ln() + mult * ell));
        }
    };
    if a.nrows() == 1 {
        push(a[(0, 0)].re, 0.0);
        push(b[(0, 0)].re, 1.0);
    } else {
        push(real_det(a), 0.0);
        let t = a[(1, 1)] * b[(0, 0)] - a[(0, 1)] * b[(1, 0)] - a[(1, 0)] * b[(0, 1)] + a[(0, 0)] * b[(1, 1)];
        push(t.re, 1.0);
        push(real_det(b), 2.0);
    }
    let m = terms.iter().map(|t| t.1).fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = terms.iter().map(|(s, l)| s * (l - m).exp()).sum();
    if !(sum > 0.0) || !m.is_finite() {
        return Err(ConeError::Positivity("volume form not positive".into()));
    }
    Ok(m + sum.ln())
}

/// Determinant of a Hermitian 1×1 or 2×2 matrix.
pub fn real_det(m: &CMat) -> f64 {
    match m.nrows() {
        1 => m[(0, 0)].re,
        2 => (m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)]).re,
        _ => m.determinant().re,
    }
}

impl BackgroundPotential {
    pub fn new(geom: ModelGeometry, gluing: GluingParams, nodes: usize) -> Result<Self> {
        let spec = MollifierSpec::with_profile(gluing.eta, Profile::Bump, nodes)?;
        let table = Some(Arc::new(MetaTable::new(&spec, TABLE_DEGREE)?));
        Ok(BackgroundPotential { geom, gluing, spec, table, mode: PotentialMode::Glued })
    }

    /// The trivial potential u ≡ 0.
    pub fn zero(geom: ModelGeometry) -> Self {
        let gluing =
            GluingParams { eta: 1.0, r: 0.0, r_prime: 0.0, inner_separation: 0.0, outer_separation: 0.0, q_positivity_margin: 0.0 };
        let spec = MollifierSpec::new(1.0).expect("unit mollifier");
        BackgroundPotential { geom, gluing, spec, table: None, mode: PotentialMode::Zero }
    }

    /// Evaluate M_η by quadrature at every call.
    pub fn with_exact_quadrature(mut self) -> Self {
        self.table = None;
        self
    }

    pub fn region(&self, h: f64) -> Region {
        if h <= self.gluing.r_prime {
            Region::Inner
        } else if h >= self.gluing.r {
            Region::Outer
        } else {
            Region::Annulus
        }
    }

    /// Jet of u together with the M_η jet in the annulus.
    pub fn u_jet_detailed(&self, a: f64, b: f64) -> Result<(Jet2, Region, Option<crate::glue_max::MetaJet>)> {
        if self.mode == PotentialMode::Zero {
            return Ok((Jet2::constant(0.0), Region::Outer, None));
        }
        let g = &self.geom;
        let h = g.norm_jet(a, b).v;
        match self.region(h) {
            Region::Inner => Ok((tilde_u_jet(g, a, b), Region::Inner, None)),
            Region::Outer => Ok((q_jet(g, self.gluing.eta, a, b), Region::Outer, None)),
            Region::Annulus => {
                let t = tilde_u_jet(g, a, b);
                let q = q_jet(g, self.gluing.eta, a, b);
                let m = match &self.table {
                    Some(table) => table.jet(t.v, q.v)?,
                    None => m_eta_jet(t.v, q.v, &self.spec)?,
                };
                let (da, db) = (t.a - q.a, t.b - q.b);
                let jet = Jet2 {
                    v: m.value,
                    a: m.d1 * t.a + m.d2 * q.a,
                    b: m.d1 * t.b + m.d2 * q.b,
                    aa: m.d1 * t.aa + m.d2 * q.aa + m.d11 * da * da,
                    ab: m.d1 * t.ab + m.d2 * q.ab + m.d11 * da * db,
                    bb: m.d1 * t.bb + m.d2 * q.bb + m.d11 * db * db,
                };
                Ok((jet, Region::Annulus, Some(m)))
            }
        }
    }

    pub fn u_jet(&self, a: f64, b: f64) -> Result<Jet2> {
        Ok(self.u_jet_detailed(a, b)?.0)
    }

    /// u(p); on D this is −v|_D = 0.
    pub fn u_value(&self, p: &[C64]) -> f64 {
        let (a, b) = self.geom.ab(p);
        if self.mode == PotentialMode::Zero {
            return 0.0;
        }
        if b == 0.0 {
            return -self.geom.v_jet(a, 0.0).v;
        }
        self.u_jet(a, b).map(|j| j.v).unwrap_or(f64::NAN)
    }

    /// ω + i∂∂̄u = A + e^ℓ B with A ⪰ 0 assembled without cancellation and
    /// e^ℓ B = ∂₁M_η · i∂∂̄e^{−1/|s|²} (absent in the outer region).
    ///
    /// In the annulus 1 − ∂₁M_η is replaced by ∂₂M_η, which is integrated separately.
    pub fn omega_u_split(&self, p: &[C64]) -> Result<(CMat, f64, CMat)> {
        let g = &self.geom;
        let (a, b) = g.ab(p);
        let (x, xi) = split(p);
        let h = g.norm_jet(a, b);
        let grad = h.gradient(x, xi);
        let n = grad.len();
        // Hess e^{−1/h} = e^{−1/h} h⁻⁴ (h² Hess h + (1 − 2h) ∂h ∂̄h).
        let bm = h.hessian(x, xi).map(|z| z * h.v * h.v)
            + CMat::from_fn(n, n, |i, j| grad[i] * grad[j].conj() * (1.0 - 2.0 * h.v));
        let ell = -1.0 / h.v - 4.0 * h.v.ln();
        if self.mode == PotentialMode::Zero {
            return Ok((g.omega(p), f64::NEG_INFINITY, bm));
        }
        let base = (g.phi_jet(a, b) - g.v_jet(a, b)).hessian(x, xi);
        match self.u_jet_detailed(a, b)? {
            (_, Region::Inner, _) => Ok((base, ell, bm)),
            (_, Region::Outer, _) => {
                Ok(((g.phi_jet(a, b) + q_jet(g, self.gluing.eta, a, b)).hessian(x, xi), f64::NEG_INFINITY, bm))
            }
            (_, Region::Annulus, m) => {
                let m = m.expect("annulus carries the M_η jet");
                let t = tilde_u_jet(g, a, b);
                let q = q_jet(g, self.gluing.eta, a, b);
                let gd = (t - q).gradient(x, xi);
                let extra = (g.v_jet(a, b) + q).hessian(x, xi).map(|z| z * m.d2)
                    + CMat::from_fn(n, n, |i, j| gd[i] * gd[j].conj() * m.d11);
                let ell = if m.d1 > 0.0 { ell + m.d1.ln() } else { f64::NEG_INFINITY };
                Ok((base + extra, ell, bm))
            }
        }
    }

    /// Bound on the intermediate terms entering u(p).
    pub fn value_scale(&self, p: &[C64]) -> f64 {
        if self.mode == PotentialMode::Zero {
            return 0.0;
        }
        let (a, b) = self.geom.ab(p);
        tilde_u_jet(&self.geom, a, b).v.abs() + q_jet(&self.geom, self.gluing.eta, a, b).v.abs()
    }

    /// Coefficients of ω + i∂∂̄u.
    pub fn omega_u(&self, p: &[C64]) -> Result<CMat> {
        let (a, ell, b) = self.omega_u_split(p)?;
        Ok(if ell.is_finite() { a + b.map(|z| z * ell.exp()) } else { a })
    }

    /// log((ω + i∂∂̄u)ⁿ/ωⁿ), evaluated in the log domain.
    pub fn log_volume_ratio_u(&self, p: &[C64]) -> Result<f64> {
        let (a, ell, b) = self.omega_u_split(p)?;
        let log_omega = real_det(&self.geom.omega(p)).ln();
        log_det_split(&a, ell, &b)
            .map(|l| l - log_omega)
            .map_err(|_| ConeError::Positivity(format!("ω + i∂∂̄u degenerate at |s|² = {:.3e}", self.geom.norm_sq(p))))
    }

    /// |s|^{2β} as a jet.
    pub fn sigma_jet(&self, a: f64, b: f64, beta: f64) -> Jet2 {
        self.geom.norm_jet(a, b).powf(beta)
    }

    /// Coefficients of ω₀ = ω + i∂∂̄(u + |s|^{2β}) in the z-chart.
    pub fn omega0(&self, p: &[C64], beta: f64) -> Result<CMat> {
        let (a, b) = self.geom.ab(p);
        let (x, xi) = split(p);
        Ok(self.omega_u(p)? + self.sigma_jet(a, b, beta).hessian(x, xi))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstancyReport {
    pub samples: usize,
    pub variance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExactnessReport {
    pub inner_shells: usize,
    pub outer_shells: usize,
    pub inner_max_error: f64,
    pub outer_max_error: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VanishingReport {
    pub k: f64,
    /// log(|s|^{−2k}(ω+i∂∂̄u)ⁿ/ωⁿ) on the innermost shell.
    pub innermost_log: f64,
    /// Largest value of the same quantity over shells at or below r′.
    pub max_log: f64,
    /// Decreasing towards D over every shell at or below r′.
    pub monotone: bool,
    /// Fit of the same quantity against 1/|s|² (worst R² over base points).
    pub fit: LineFit,
    pub pass: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConicReport {
    pub beta: f64,
    pub samples: usize,
    pub margin: f64,
    pub band_lo: f64,
    pub band_hi: f64,
    /// β sup|s|^{2β} and (−e log sup|s|²)⁻¹.
    pub bound_lhs: f64,
    pub bound_rhs: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PshChainReport {
    pub points: usize,
    /// min over points of λ_min(Hess_FD u − chain).
    pub min_eigenvalue: f64,
    /// max over points of max(0, −λ_min) / truncation estimate.
    pub worst_ratio: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackgroundResult {
    pub geometry: ModelGeometry,
    pub params: BackgroundParams,
    pub eta: f64,
    pub r: f64,
    pub r_prime: f64,
    pub gluing: GluingParams,
    /// ξ-slice of u through the base point x = 0.
    pub u: GridField,
    /// min eigenvalue of ω + i∂∂̄u over shells where e^{−1/|s|²} is normal.
    pub positivity_margin: f64,
    pub conic_positivity_margin: f64,
    /// log((ω+i∂∂̄u)ⁿ/ωⁿ) against 1/|s|² near D.
    pub vanishing_fit: LineFit,
    pub constancy: ConstancyReport,
    pub exactness: ExactnessReport,
    pub vanishing: Vec<VanishingReport>,
    pub conic: Vec<ConicReport>,
    pub psh_chain: PshChainReport,
    pub q_check: FdCheck,
    pub pass: bool,
}

impl BackgroundResult {
    pub fn potential(&self) -> Result<BackgroundPotential> {
        BackgroundPotential::new(self.geometry, self.gluing, self.params.mollifier_nodes)
    }
}

fn constancy(pot: &BackgroundPotential, shells: &[f64], params: &BackgroundParams) -> ConstancyReport {
    let (h0, h1) = (shells[0], shells[1]);
    let mut vals = Vec::new();
    let angles = periodic_angles(params.n_angles);
    for ((a0, b0), (_, b1)) in shell_points(&pot.geom, h0, params.base_points)
        .into_iter()
        .zip(shell_points(&pot.geom, h1, params.base_points))
    {
        for &t in &angles {
            let u0 = pot.u_value(&point_from_ab(&pot.geom, a0, b0, t));
            let u1 = pot.u_value(&point_from_ab(&pot.geom, a0, b1, t));
            vals.push((u0 * h1 - u1 * h0) / (h1 - h0));
        }
    }
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let variance = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    ConstancyReport { samples: vals.len(), variance, pass: variance <= 1e-10 && variance.is_finite() }
}

fn exactness(pot: &BackgroundPotential, shells: &[f64], params: &BackgroundParams) -> Result<ExactnessReport> {
    let g = &pot.geom;
    let eta = pot.gluing.eta;
    let errs: Vec<(Region, f64)> = shells
        .par_iter()
        .map(|&h| {
            let region = pot.region(h);
            if region == Region::Annulus {
                return Ok((region, 0.0));
            }
            let mut worst: f64 = 0.0;
            for (a, b) in shell_points(g, h, params.base_points) {
                let t = tilde_u_jet(g, a, b).v;
                let q = q_jet(g, eta, a, b).v;
                let m = m_eta(t, q, &pot.spec)?;
                let target = if region == Region::Inner { t } else { q };
                worst = worst.max((m - target).abs());
            }
            Ok((region, worst))
        })
        .collect::<Result<_>>()?;
    let mut rep = ExactnessReport { inner_shells: 0, outer_shells: 0, inner_max_error: 0.0, outer_max_error: 0.0, pass: true };
    for (region, e) in errs {
        match region {
            Region::Inner => {
                rep.inner_shells += 1;
                rep.inner_max_error = rep.inner_max_error.max(e);
            }
            Region::Outer => {
                rep.outer_shells += 1;
                rep.outer_max_error = rep.outer_max_error.max(e);
            }
            Region::Annulus => {}
        }
    }
    rep.pass = rep.inner_shells > 0 && rep.outer_shells > 0 && rep.inner_max_error <= 1e-10 && rep.outer_max_error <= 1e-10;
    Ok(rep)
}

fn vanishing(pot: &BackgroundPotential, shells: &[f64], params: &BackgroundParams) -> Result<(LineFit, Vec<VanishingReport>)> {
    let g = &pot.geom;
    let rp = pot.gluing.r_prime;
    let inner: Vec<f64> = shells.iter().copied().filter(|h| *h <= rp).collect();
    let fit_h: Vec<f64> = (0..40).map(|i| rp / (1.0 + 19.0 * i as f64 / 39.0)).collect();
    let bases: Vec<f64> = shell_points(g, rp, params.base_points).into_iter().map(|(a, _)| a).collect();
    let log_ratio = |a: f64, h: f64| -> Result<f64> {
        let b = h / g.norm_jet(a, 1.0).v;
        pot.log_volume_ratio_u(&point_from_ab(g, a, b, 0.4))
    };
    let mut per_k = Vec::new();
    let mut base_fit = None;
    for &k in std::iter::once(&0.0).chain(params.k_tests.iter()) {
        let mut rep = VanishingReport {
            k,
            innermost_log: f64::NEG_INFINITY,
            max_log: f64::NEG_INFINITY,
            monotone: true,
            fit: LineFit { slope: 0.0, intercept: 0.0, r_squared: 1.0 },
            pass: true,
        };
        for (ib, &a) in bases.iter().enumerate() {
            let vals: Vec<f64> = inner.iter().map(|&h| Ok(log_ratio(a, h)? - k * h.ln())).collect::<Result<_>>()?;
            rep.innermost_log = rep.innermost_log.max(vals[0]);
            rep.max_log = vals.iter().copied().fold(rep.max_log, f64::max);
            if vals.windows(2).any(|w| !(w[1] > w[0])) {
                rep.monotone = false;
            }
            let xs: Vec<f64> = fit_h.iter().map(|h| 1.0 / h).collect();
            let ys: Vec<f64> = fit_h.iter().map(|&h| Ok(log_ratio(a, h)? - k * h.ln())).collect::<Result<_>>()?;
            let fit = linear_fit(&xs, &ys)?;
            let worst = if ib == 0 { fit.r_squared } else { rep.fit.r_squared.min(fit.r_squared) };
            if ib == 0 {
                rep.fit = fit;
            }
            rep.fit.r_squared = worst;
        }
        rep.pass = rep.monotone
            && rep.max_log.is_finite()
            && rep.innermost_log < -700.0
            && rep.fit.r_squared >= 0.99
            && rep.fit.slope < 0.0;
        if k == 0.0 {
            base_fit = Some(rep.fit);
        } else {
            per_k.push(rep);
        }
    }
    Ok((base_fit.expect("k = 0 evaluated"), per_k))
}

fn positivity_margin(pot: &BackgroundPotential, shells: &[f64], params: &BackgroundParams) -> Result<f64> {
    let g = &pot.geom;
    let vals: Vec<f64> = shells
        .par_iter()
        .filter(|h| **h >= NORMAL_THRESHOLD)
        .map(|&h| {
            let mut m = f64::INFINITY;
            for (a, b) in shell_points(g, h, params.base_points) {
                m = m.min(min_eigenvalue(&pot.omega_u(&point_from_ab(g, a, b, 0.9))?));
            }
            Ok(m)
        })
        .collect::<Result<_>>()?;
    Ok(vals.into_iter().fold(f64::INFINITY, f64::min))
}

/// ω₀ pulled back to every w-chart, over |z_n| from 1e−8 to the fiber radius.
pub fn conic_report(pot: &BackgroundPotential, beta: f64, params: &BackgroundParams) -> Result<ConicReport> {
    let g = &pot.geom;
    let charts = ChartMap::all(beta)?;
    let radii = log_space(1e-8 * g.fiber_radius, g.fiber_radius * (1.0 - 1e-9), 24);
    let bases: Vec<f64> = shell_points(g, 0.0, params.base_points).into_iter().map(|(a, _)| a).collect();
    let mut eig = Vec::new();
    for chart in &charts {
        for &rho in &radii {
            for j in 0..5 {
                let arg = chart.center + chart.half_width * (j as f64 / 2.0 - 1.0);
                let wn = C64::from_polar(rho.powf(beta), arg);
                for &a in &bases {
                    let mut w = point_from_ab(g, a, 0.0, 0.0);
                    let n = w.len();
                    w[n - 1] = wn;
                    let z = chart.psi_complex(&w);
                    let gz = pot.omega0(&z, beta)?;
                    eig.extend(hermitian_eigenvalues(&chart.pull_metric(&w, &gz)));
                }
            }
        }
    }
    let lo = eig.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = eig.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sup = g.sup_norm_sq();
    let lhs = beta * sup.powf(beta);
    let rhs = 1.0 / (-std::f64::consts::E * sup.ln());
    Ok(ConicReport {
        beta,
        samples: eig.len(),
        margin: lo,
        band_lo: lo,
        band_hi: hi,
        bound_lhs: lhs,
        bound_rhs: rhs,
        pass: lo > 0.0 && hi.is_finite() && lhs <= rhs * (1.0 + 1e-12),
    })
}

/// Hess u ⪰ ∂₁M_η Hess ũ + ∂₂M_η Hess q at annulus points, with Hess u by finite differences.
fn psh_chain(pot: &BackgroundPotential, params: &BackgroundParams) -> Result<PshChainReport> {
    let g = &pot.geom;
    let (rp, r) = (pot.gluing.r_prime, pot.gluing.r);
    let hs = log_space(rp, r, params.psh_points + 2);
    let jobs: Vec<(f64, usize)> = hs[1..hs.len() - 1].iter().copied().zip(0..).collect();
    let res: Vec<(f64, f64)> = jobs
        .par_iter()
        .map(|&(h, i)| {
            let pts = shell_points(g, h, params.base_points);
            let (a, b) = pts[i % pts.len()];
            let p = point_from_ab(g, a, b, 0.37 * i as f64);
            let (x, xi) = split(&p);
            let (_, _, m) = pot.u_jet_detailed(a, b)?;
            let m = m.ok_or_else(|| ConeError::Numerical("annulus point outside the annulus".into()))?;
            let chain = tilde_u_jet(g, a, b).hessian(x, xi).map(|z| z * m.d1)
                + q_jet(g, pot.gluing.eta, a, b).hessian(x, xi).map(|z| z * m.d2);
            let f = |q: &[C64]| pot.u_value(q);
            let scale = tilde_u_jet(g, a, b).v.abs() + q_jet(g, pot.gluing.eta, a, b).v.abs();
            let (hu, est) = complex_hessian_estimated(&f, &p, xi.norm() / 64.0, scale);
            Ok((min_eigenvalue(&(hu - chain)), est))
        })
        .collect::<Result<_>>()?;
    let min_eigenvalue = res.iter().map(|r| r.0).fold(f64::INFINITY, f64::min);
    let worst_ratio = res.iter().map(|&(l, e)| (-l).max(0.0) / e).fold(0.0, f64::max);
    Ok(PshChainReport { points: res.len(), min_eigenvalue, worst_ratio, pass: !res.is_empty() && worst_ratio <= 10.0 })
}

/// Glue u, then check items (i)–(iii), gluing exactness and the plurisubharmonicity chain.
pub fn build_background_u(geom: &ModelGeometry, params: &BackgroundParams) -> Result<BackgroundResult> {
    params.validate()?;
    let sup = geom.sup_norm_sq();
    if !(sup < 1.0) {
        return Err(ConeError::Domain(format!("sup |s|² = {sup} must be below 1")));
    }
    let shells = shell_set(geom, params.n_shells);
    let gluing = choose_gluing_parameters(geom, &params.eta_ladder, &shells, params.base_points)?;
    let pot = BackgroundPotential::new(*geom, gluing, params.mollifier_nodes)?;

    let rho_min = (SHELL_FLOOR / geom.norm_jet(0.0, 1.0).v).sqrt().max(1e-150);
    let u = xi_slice(geom, rho_min, params.grid_radii, params.n_angles, |p| pot.u_value(p))?;

    let positivity_margin = positivity_margin(&pot, &shells, params)?;
    let constancy = constancy(&pot, &shells, params);
    let exactness = exactness(&pot, &shells, params)?;
    let (vanishing_fit, vanishing) = vanishing(&pot, &shells, params)?;
    let conic: Vec<ConicReport> = params.betas.iter().map(|&b| conic_report(&pot, b, params)).collect::<Result<_>>()?;
    let conic_positivity_margin = conic.iter().map(|c| c.margin).fold(f64::INFINITY, f64::min);
    let psh_chain = psh_chain(&pot, params)?;
    let q_check = q_hessian_check(geom, gluing.eta, 32);

    let pass = positivity_margin > 0.0
        && constancy.pass
        && exactness.pass
        && vanishing.iter().all(|v| v.pass)
        && conic.iter().all(|c| c.pass)
        && psh_chain.pass
        && q_check.pass;
    Ok(BackgroundResult {
        geometry: *geom,
        params: params.clone(),
        eta: gluing.eta,
        r: gluing.r,
        r_prime: gluing.r_prime,
        gluing,
        u,
        positivity_margin,
        conic_positivity_margin,
        vanishing_fit,
        constancy,
        exactness,
        vanishing,
        conic,
        psh_chain,
        q_check,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::background::geometry::VPotential;

    fn flat_disc() -> ModelGeometry {
        ModelGeometry { scale: 1.0, v_mode: VPotential::Zero, ..ModelGeometry::disc_n1() }
    }

    #[test]
    fn tilde_u_radial_oracle() {
        let g = flat_disc();
        for &rho in &[0.1, 0.2, 0.35, 0.5, 0.8] {
            let b: f64 = rho * rho;
            let jet = tilde_u_jet(&g, 0.0, b);
            let h = jet.hessian(None, C64::new(rho, 0.0))[(0, 0)].re;
            let oracle = (-1.0 / b).exp() * (1.0 - b) / b.powi(3);
            assert!((h - oracle).abs() <= 1e-12 * oracle.abs().max(1e-300), "{rho}: {h} vs {oracle}");
            assert!(h > 0.0);
        }
        assert_eq!(tilde_u_value(&g, &[C64::new(0.0, 0.0)]), 0.0);
        let field = tilde_u(&ModelGeometry::disc_n1(), 1e-6, 32, 8).unwrap();
        assert!(field.values.iter().all(|v| v.re.is_finite()));
    }

    #[test]
    fn tilde_u_rotation_invariant_on_bundle() {
        let g = ModelGeometry::line_bundle_p1(2).unwrap();
        let field = tilde_u(&g, 1e-3, 24, 32).unwrap();
        for ir in 0..field.n_radii() {
            let row: Vec<f64> = (0..field.n_angles()).map(|ia| field.at(ir, ia).re).collect();
            let mean = row.iter().sum::<f64>() / row.len() as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / row.len() as f64;
            assert!(var < 1e-12);
        }
    }

    #[test]
    fn q_values_and_hessian() {
        let g = flat_disc();
        let eta: f64 = 0.7;
        let b = (-1.0 / eta.powi(3)).exp();
        assert!(q_value(&g, eta, &[C64::new(b.sqrt(), 0.0)]).abs() < 1e-12);
        let field = q_function(&g, eta, 1e-4, 16, 8).unwrap();
        assert!(field.values.iter().all(|v| v.re.is_finite()));
        assert!(q_function(&g, -1.0, 1e-4, 16, 8).is_err());
        for geom in [ModelGeometry::disc_n1(), ModelGeometry::line_bundle_p1(1).unwrap(), ModelGeometry::line_bundle_p1(2).unwrap()] {
            let c = q_hessian_check(&geom, 0.5, 16);
            assert!(c.pass, "{c:?}");
        }
    }

    #[test]
    fn gluing_parameters_reverified_by_exhaustive_scan() {
        for geom in [ModelGeometry::disc_n1(), ModelGeometry::line_bundle_p1(1).unwrap()] {
            let params = BackgroundParams::default();
            let shells = shell_set(&geom, params.n_shells);
            let gp = choose_gluing_parameters(&geom, &params.eta_ladder, &shells, 3).unwrap();
            assert!(gp.r_prime < gp.r);
            assert!(gp.inner_separation > 0.0 && gp.outer_separation > 0.0 && gp.q_positivity_margin > 0.0);
            let gap = gp.eta + 1.0 / gp.eta;
            for &h in &shells {
                for (a, b) in shell_points(&geom, h, 3) {
                    let (t, q) = (tilde_u_jet(&geom, a, b).v, q_jet(&geom, gp.eta, a, b).v);
                    if h <= gp.r_prime {
                        assert!(t - q > gap);
                    }
                    if h == gp.r {
                        assert!(q - t > gap);
                    }
                }
            }
            // No larger η on the ladder is admissible.
            for &eta in params.eta_ladder.iter().filter(|e| **e > gp.eta) {
                assert!(choose_gluing_parameters(&geom, &[eta], &shells, 3).is_err());
            }
        }
    }

    #[test]
    fn oversized_etas_fail() {
        let geom = ModelGeometry::disc_n1();
        let shells = shell_set(&geom, 200);
        let err = choose_gluing_parameters(&geom, &[4.0, 8.0], &shells, 1).unwrap_err();
        assert!(matches!(err, ConeError::NoAdmissible(_)));
    }

    #[test]
    fn stable_volume_matches_direct_determinant() {
        for geom in [
            ModelGeometry::disc_n1(),
            ModelGeometry { v_mode: VPotential::Zero, ..ModelGeometry::disc_n1() },
            ModelGeometry::line_bundle_p1(2).unwrap(),
        ] {
            let gluing =
                GluingParams { eta: 0.5, r: 0.134, r_prime: 0.13, inner_separation: 1.0, outer_separation: 1.0, q_positivity_margin: 1.0 };
            let pot = BackgroundPotential::new(geom, gluing, 32).unwrap();
            for &h in &[0.06, 0.08, 0.1] {
                for (a, b) in shell_points(&geom, h, 3) {
                    let p = point_from_ab(&geom, a, b, 0.3);
                    let stable = pot.log_volume_ratio_u(&p).unwrap();
                    let (x, xi) = split(&p);
                    let naive = (geom.phi_jet(a, b) + pot.u_jet(a, b).unwrap()).hessian(x, xi);
                    let direct = real_det(&naive).ln() - real_det(&geom.omega(&p)).ln();
                    assert!((stable - direct).abs() < 1e-6 * direct.abs().max(1.0), "{h}: {stable} vs {direct}");
                }
            }
        }
    }

    #[test]
    fn disc_background_items() {
        let res = build_background_u(&ModelGeometry::disc_n1(), &BackgroundParams::default()).unwrap();
        assert!(res.pass);
        assert!(res.vanishing_fit.slope < 0.0 && res.vanishing_fit.r_squared >= 0.99);
    }

    #[test]
    fn bundle_background_items() {
        for k_b in [1, 2] {
            let res = build_background_u(&ModelGeometry::line_bundle_p1(k_b).unwrap(), &BackgroundParams::default()).unwrap();
            assert!(res.pass, "k_b = {k_b}");
        }
    }
}
