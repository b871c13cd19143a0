//! Volume-form expansions of ω₀ = ω + i∂∂̄(u + |s|^{2β}), the log volume
//! ratio and the Ricci potentials F^Ω, F^λ.
//!
//! With P = ω + i∂∂̄u, T = −Θ and N = ∂|s|² ⊗ ∂̄|s|², the identity
//! i∂∂̄|s|^{2β} = β|s|^{2β}T + β²|s|^{2β−4}N and the rank-one determinant
//! formula give
//!
//! ω₀ⁿ/ωⁿ = |s|^{2k}F + |s|^{2β−2} Σ_j a_j |s|^{2jβ},
//!
//! |s|^{2k}F = det(P + |s|^{2β}βT)/det ω,
//! Σ_j a_j σ^j = β²|s|⁻² tr(adj(P + σβT) N)/det ω.
//!
//! Top forms are divided by ωⁿ throughout.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::build::{point_from_ab, real_det, shell_points, BackgroundPotential, FdCheck, PotentialMode};
use super::geometry::ModelGeometry;
use super::jets::split;
use crate::cone_charts::ConeParams;
use crate::error::{ConeError, Result};
use crate::grid::{ChartTag, GridField};
use crate::numerics::{complex_hessian_estimated, log_space, max_abs, periodic_angles, CMat, C64};
use crate::weighted_holder::{dw_membership_fn, HolderConfig, MixedHessianReport, SectorPlan};

/// Default exponent k = max(2β − 1, 0).
pub fn default_k(beta: f64) -> f64 {
    (2.0 * beta - 1.0).max(0.0)
}

fn adjugate(m: &CMat) -> CMat {
    match m.nrows() {
        1 => CMat::from_element(1, 1, C64::new(1.0, 0.0)),
        2 => CMat::from_row_slice(2, 2, &[m[(1, 1)], -m[(0, 1)], -m[(1, 0)], m[(0, 0)]]),
        _ => {
            let d = m.determinant();
            m.clone().try_inverse().map(|inv| inv * d).unwrap_or_else(|| CMat::zeros(m.nrows(), m.ncols()))
        }
    }
}

fn trace_product(a: &CMat, b: &CMat) -> f64 {
    (a * b).trace().re
}

/// Pointwise pieces of the expansion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointExpansion {
    pub h: f64,
    /// a_0 … a_{n−1}.
    pub a: Vec<f64>,
    /// |s|^{2k}F.
    pub hk_f: f64,
    pub f: f64,
    /// a_0 from the wedge formula nβ²|s|⁻² i∂|s|²∧∂̄|s|²∧(ω+i∂∂̄u)^{n−1}/ωⁿ.
    pub a0_formula: f64,
    /// Condition number of the Vandermonde system separating the a_j.
    pub vandermonde_condition: f64,
}

impl PointExpansion {
    /// ω₀ⁿ/ωⁿ reassembled from the pieces.
    pub fn ratio(&self, beta: f64) -> f64 {
        let sigma = self.h.powf(beta);
        let poly: f64 = self.a.iter().enumerate().map(|(j, a)| a * sigma.powi(j as i32)).sum();
        self.hk_f + self.h.powf(beta - 1.0) * poly
    }
}

pub fn expand_at(pot: &BackgroundPotential, beta: f64, k: f64, p: &[C64]) -> Result<PointExpansion> {
    let g = &pot.geom;
    let (a, b) = g.ab(p);
    let (x, xi) = split(p);
    let n = p.len();
    let hj = g.norm_jet(a, b);
    let h = hj.v;
    if !(h > 0.0) {
        return Err(ConeError::Singular("expansion evaluated on D".into()));
    }
    let det_omega = real_det(&g.omega(p));
    let pm = pot.omega_u(p)?;
    let t = -g.theta(p);
    let grad = hj.gradient(x, xi);
    let nm = CMat::from_fn(n, n, |i, j| grad[i] * grad[j].conj());
    let poly_at = |s: f64| beta * beta / h * trace_product(&adjugate(&(&pm + t.map(|z| z * s * beta))), &nm) / det_omega;
    let nodes: Vec<f64> = (0..n).map(|i| i as f64).collect();
    let vand = DMatrix::from_fn(n, n, |i, j| nodes[i].powi(j as i32));
    let rhs = DVector::from_iterator(n, nodes.iter().map(|&s| poly_at(s)));
    let sv = vand.clone().singular_values();
    let cond = sv.max() / sv.min();
    let coef = vand
        .lu()
        .solve(&rhs)
        .ok_or_else(|| ConeError::IllConditioned("Vandermonde system is singular".into()))?;
    let sigma = h.powf(beta);
    let hk_f = real_det(&(&pm + t.map(|z| z * sigma * beta))) / det_omega;
    let a0_formula = beta * beta / h * trace_product(&adjugate(&pm), &nm) / det_omega;
    Ok(PointExpansion {
        h,
        a: coef.iter().copied().collect(),
        hk_f,
        f: hk_f / h.powf(k),
        a0_formula,
        vandermonde_condition: cond,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeExpansion {
    pub beta: f64,
    pub k: f64,
    /// a_j on the ξ-slice through x = 0.
    pub a: Vec<GridField>,
    pub f: GridField,
    pub a0_min: f64,
    /// Largest |a_0 − a_0(wedge formula)| relative to a_0.
    pub a0_formula_mismatch: f64,
    /// Reconstruction against det of a finite-difference Hessian of Φ + u + |s|^{2β}.
    pub matching: FdCheck,
    /// i∂∂̄|s|^{2β} identity against finite differences.
    pub identity: FdCheck,
    pub vandermonde_condition: f64,
    /// min over j of |k − (β − 1 + jβ)|; zero means the exponents collide and
    /// only the algebraic separation distinguishes F from a_j.
    pub exponent_gap: f64,
    pub pass: bool,
}

/// Sample points (a, b) over shells from 1e−10 to sup |s|².
fn shell_samples(geom: &ModelGeometry, count: usize, base_points: usize) -> Vec<Vec<C64>> {
    let hs = log_space(1e-10, geom.sup_norm_sq() * 0.98, count);
    hs.iter()
        .enumerate()
        .map(|(i, &h)| {
            let pts = shell_points(geom, h, base_points);
            let (a, b) = pts[i % pts.len()];
            point_from_ab(geom, a, b, 0.61 * i as f64 + 0.2)
        })
        .collect()
}

/// i∂∂̄|s|^{2β} = −β|s|^{2β}Θ + β²|s|^{2β−4} ∂|s|²∧∂̄|s|², by finite differences.
pub fn sigma_identity_check(geom: &ModelGeometry, beta: f64, count: usize) -> FdCheck {
    let hs = log_space(1e-8, geom.sup_norm_sq() * 0.98, count);
    let samples: Vec<(f64, f64)> = hs
        .par_iter()
        .enumerate()
        .map(|(i, &h)| {
            let pts = shell_points(geom, h, 5);
            let (a, b) = pts[i % pts.len()];
            let p = point_from_ab(geom, a, b, 1.3 * i as f64);
            let (x, xi) = split(&p);
            let hj = geom.norm_jet(a, b);
            let grad = hj.gradient(x, xi);
            let n = p.len();
            let sigma = h.powf(beta);
            let formula = geom.theta(&p).map(|z| -z * beta * sigma)
                + CMat::from_fn(n, n, |i, j| grad[i] * grad[j].conj() * beta * beta * h.powf(beta - 2.0));
            let f = |q: &[C64]| geom.norm_sq(q).powf(beta);
            let (fd, est) = complex_hessian_estimated(&f, &p, xi.norm() / 64.0, 0.0);
            (max_abs(&(fd - formula)), est)
        })
        .collect();
    FdCheck::from_samples(&samples, 10.0)
}

fn det_error(h: &CMat, e: f64) -> f64 {
    if h.nrows() == 1 {
        e
    } else {
        4.0 * max_abs(h) * e + e * e
    }
}

/// Separate ω₀ⁿ/ωⁿ into |s|^{2k}F and the a_j, then check the pieces.
pub fn volume_expansion_coeffs(
    pot: &BackgroundPotential,
    beta: f64,
    k: f64,
    grid: &SliceGrid,
    samples: usize,
) -> Result<VolumeExpansion> {
    crate::cone_charts::check_beta(beta)?;
    if k < 2.0 * beta - 1.0 {
        return Err(ConeError::Domain(format!("k = {k} must be at least 2β − 1 = {}", 2.0 * beta - 1.0)));
    }
    let g = &pot.geom;
    let n = g.dim();
    let pts = grid.points(g);
    let exp: Vec<PointExpansion> = pts.par_iter().map(|p| expand_at(pot, beta, k, p)).collect::<Result<_>>()?;
    let mk = |vals: Vec<f64>| grid.field(g, beta, vals);
    let a: Vec<GridField> = (0..n).map(|j| mk(exp.iter().map(|e| e.a[j]).collect())).collect::<Result<_>>()?;
    let f = mk(exp.iter().map(|e| e.f).collect())?;

    let checks = shell_samples(g, samples, 4);
    let rows: Vec<(PointExpansion, f64, f64)> = checks
        .par_iter()
        .map(|p| {
            let e = expand_at(pot, beta, k, p)?;
            let total = |q: &[C64]| g.phi_jet(g.ab(q).0, g.ab(q).1).v + pot.u_value(q) + g.norm_sq(q).powf(beta);
            let step = p[p.len() - 1].norm() / 64.0;
            let (hfd, est) = complex_hessian_estimated(&total, p, step, pot.value_scale(p));
            let det_omega = real_det(&g.omega(p));
            let fd_ratio = real_det(&hfd) / det_omega;
            let res = (e.ratio(beta) - fd_ratio).abs();
            Ok((e, res, det_error(&hfd, est) / det_omega))
        })
        .collect::<Result<_>>()?;
    let matching = FdCheck::from_samples(&rows.iter().map(|r| (r.1, r.2)).collect::<Vec<_>>(), 10.0);
    let all: Vec<&PointExpansion> = exp.iter().chain(rows.iter().map(|r| &r.0)).collect();
    let a0_min = all.iter().map(|e| e.a[0]).fold(f64::INFINITY, f64::min);
    let a0_formula_mismatch =
        all.iter().map(|e| (e.a[0] - e.a0_formula).abs() / e.a[0].abs().max(1e-300)).fold(0.0, f64::max);
    let vandermonde_condition = all.iter().map(|e| e.vandermonde_condition).fold(1.0, f64::max);
    let exponent_gap = (0..n).map(|j| (k - (beta - 1.0 + j as f64 * beta)).abs()).fold(f64::INFINITY, f64::min);
    let identity = sigma_identity_check(g, beta, 1000);
    let pass = a0_min > 0.0 && a0_formula_mismatch <= 1e-10 && matching.pass && identity.pass;
    Ok(VolumeExpansion {
        beta,
        k,
        a,
        f,
        a0_min,
        a0_formula_mismatch,
        matching,
        identity,
        vandermonde_condition,
        exponent_gap,
        pass,
    })
}

/// A log-polar ξ-grid through the base point x = 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SliceGrid {
    pub rho_min: f64,
    pub rho_max: f64,
    pub n_radii: usize,
    pub n_angles: usize,
}

impl SliceGrid {
    pub fn new(rho_min: f64, rho_max: f64, n_radii: usize, n_angles: usize) -> Result<Self> {
        if !(rho_min > 0.0 && rho_min < rho_max) || n_radii < 2 || n_angles < 1 {
            return Err(ConeError::Grid("invalid slice grid".into()));
        }
        Ok(SliceGrid { rho_min, rho_max, n_radii, n_angles })
    }

    pub fn points(&self, geom: &ModelGeometry) -> Vec<Vec<C64>> {
        let mut out = Vec::with_capacity(self.n_radii * self.n_angles);
        for r in log_space(self.rho_min, self.rho_max, self.n_radii) {
            for t in periodic_angles(self.n_angles) {
                out.push(point_from_ab(geom, 0.0, r * r, t));
            }
        }
        out
    }

    pub fn field(&self, _geom: &ModelGeometry, beta: f64, values: Vec<f64>) -> Result<GridField> {
        GridField::new(
            ChartTag::Z,
            beta,
            log_space(self.rho_min, self.rho_max, self.n_radii),
            periodic_angles(self.n_angles),
            true,
            values.into_iter().map(|v| C64::new(v, 0.0)).collect(),
        )
    }
}

/// log(|s|^{2−2β} ω₀ⁿ/ωⁿ) at a point off D.
pub fn log_volume_ratio_at(pot: &BackgroundPotential, beta: f64, p: &[C64]) -> Result<f64> {
    let g = &pot.geom;
    let h = g.norm_sq(p);
    let d0 = real_det(&pot.omega0(p, beta)?);
    let d = real_det(&g.omega(p));
    if !(d0 > 0.0 && h > 0.0) {
        return Err(ConeError::Positivity(format!("volume ratio not positive at |s|² = {h:.3e}")));
    }
    Ok((1.0 - beta) * h.ln() + d0.ln() - d.ln())
}

/// The log volume ratio on a ξ-slice.
pub fn log_volume_ratio(pot: &BackgroundPotential, beta: f64, grid: &SliceGrid) -> Result<GridField> {
    let pts = grid.points(&pot.geom);
    let vals: Vec<f64> = pts.par_iter().map(|p| log_volume_ratio_at(pot, beta, p)).collect::<Result<_>>()?;
    grid.field(&pot.geom, beta, vals)
}

/// Ricci-potential mode.
pub enum RicciMode<'a> {
    /// F^Ω = f^Ω − log ratio.
    OmegaClass { f_omega: &'a (dyn Fn(&[C64]) -> f64 + Sync) },
    /// F^λ = f₀ − λ(u + |s|^{2β}) − log ratio.
    Lambda { lambda: f64, f0: &'a (dyn Fn(&[C64]) -> f64 + Sync) },
}

pub fn ricci_potential_at(pot: &BackgroundPotential, beta: f64, mode: &RicciMode, p: &[C64]) -> Result<f64> {
    let l = log_volume_ratio_at(pot, beta, p)?;
    Ok(match mode {
        RicciMode::OmegaClass { f_omega } => f_omega(p) - l,
        RicciMode::Lambda { lambda, f0 } => {
            f0(p) - lambda * (pot.u_value(p) + pot.geom.norm_sq(p).powf(beta)) - l
        }
    })
}

pub fn ricci_potential(pot: &BackgroundPotential, beta: f64, mode: &RicciMode, grid: &SliceGrid) -> Result<GridField> {
    let pts = grid.points(&pot.geom);
    let vals: Vec<f64> = pts.par_iter().map(|p| ricci_potential_at(pot, beta, mode, p)).collect::<Result<_>>()?;
    grid.field(&pot.geom, beta, vals)
}

/// f₀ with i∂∂̄f₀ = Ric(ω) − λω − (1 − β)Θ on the built-in models.
pub fn standard_f0(geom: &ModelGeometry, lambda: f64, beta: f64) -> impl Fn(&[C64]) -> f64 + Sync + '_ {
    move |p: &[C64]| {
        let (a, b) = geom.ab(p);
        match geom.kind {
            super::geometry::GeometryKind::DiscN1 => -lambda * b,
            super::geometry::GeometryKind::LineBundleP1 { k_b } => {
                -real_det(&geom.omega(p)).ln() + (1.0 - beta) * k_b as f64 * (1.0 + a).ln()
                    - lambda * geom.phi_jet(a, b).v
            }
        }
    }
}

/// Ric(ω₀) − λω₀ − i∂∂̄F^λ + (1 − β)(i∂∂̄log|s|² + Θ) at points off D, with
/// Ric(ω₀) = −i∂∂̄ log det g₀ and all i∂∂̄ by finite differences.
pub fn ricci_identity_check(
    pot: &BackgroundPotential,
    beta: f64,
    lambda: f64,
    f0: &(dyn Fn(&[C64]) -> f64 + Sync),
    count: usize,
) -> Result<FdCheck> {
    let g = &pot.geom;
    let mode = RicciMode::Lambda { lambda, f0 };
    let pts = shell_samples(g, count, 4);
    let samples: Vec<(f64, f64)> = pts
        .par_iter()
        .map(|p| {
            let step = p[p.len() - 1].norm() / 64.0;
            let logdet = |q: &[C64]| pot.omega0(q, beta).map(|m| real_det(&m).ln()).unwrap_or(f64::NAN);
            let fl = |q: &[C64]| ricci_potential_at(pot, beta, &mode, q).unwrap_or(f64::NAN);
            let logh = |q: &[C64]| g.norm_sq(q).ln();
            let scale = pot.value_scale(p);
            let (ric, e1) = complex_hessian_estimated(&logdet, p, step, 0.0);
            let (hf, e2) = complex_hessian_estimated(&fl, p, step, lambda.abs() * scale);
            let (hl, e3) = complex_hessian_estimated(&logh, p, step, 0.0);
            let w0 = pot.omega0(p, beta)?;
            let r = -ric - w0.map(|z| z * lambda) - hf + (hl + g.theta(p)).map(|z| z * (1.0 - beta));
            Ok((max_abs(&r), e1 + e2 + (1.0 - beta) * e3))
        })
        .collect::<Result<_>>()?;
    Ok(FdCheck::from_samples(&samples, 10.0))
}

/// A sector plan near D for membership tests of functions of the volume ratio.
pub fn near_divisor_plan(pot: &BackgroundPotential, beta: f64, n_radii: usize, n_angles: usize) -> SectorPlan {
    let g = &pot.geom;
    let unit = g.norm_jet(0.0, 1.0).v;
    let h_top = match pot.mode {
        PotentialMode::Glued => pot.gluing.r_prime,
        PotentialMode::Zero => 0.25 * g.sup_norm_sq(),
    };
    let z_max = (h_top / unit).sqrt().min(g.fiber_radius);
    let w_max = z_max.powf(beta);
    let tangential = if g.dim() == 1 { vec![Vec::new()] } else { vec![vec![C64::new(0.0, 0.0)], vec![C64::new(0.3, 0.2)]] };
    SectorPlan { tangential, r_min: 1e-3 * w_max, r_max: w_max, n_radii, n_angles, fd_step: 0.05 * w_max }
}

/// D_w evidence for a real function given in z-coordinates.
pub fn dw_evidence(
    f: &(dyn Fn(&[C64]) -> f64 + Sync),
    params: &ConeParams,
    plan: &SectorPlan,
    cfg: &HolderConfig,
) -> Result<MixedHessianReport> {
    let wrapped = |z: &[C64]| C64::new(f(z), 0.0);
    dw_membership_fn(&wrapped, params, plan, cfg)
}
