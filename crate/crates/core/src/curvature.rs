//! Metric coefficients in w-charts, the Riemann tensor of a Kähler metric and
//! Hölder-continuity evidence for curvature near the divisor.
//!
//! For g_{μν̄} = ∂²P/∂w_μ∂w̄_ν the curvature is
//!
//! ```text
//! Rm_{μν̄ρθ̄} = −∂_ρ∂̄_θ g_{μν̄} + g^{στ̄} ∂_ρ g_{μτ̄} ∂̄_θ g_{σν̄},
//! ```
//!
//! with g^{στ̄} g_{ρτ̄} = δ^σ_ρ. The norm is
//!
//! ```text
//! ‖Rm‖² = Σ Rm_{μν̄ρθ̄} conj(Rm_{αβ̄γδ̄}) g^{μᾱ} conj(g^{νβ̄}) g^{ργ̄} conj(g^{θδ̄}),
//! ```
//!
//! evaluated as Σ|R̂_{abcd}|² in a unitary frame e = L⁻¹ (g = LL*). For n = 1,
//! ‖Rm‖ = |K| with Gaussian curvature K = Rm_{11̄11̄}/g².
//!
//! All derivatives are fourth-order finite differences taken in w-coordinates.
//! Every derivative carries an estimate |D(h) − D(2h)|/15 plus a round-off
//! level derived from the noise of the metric samples.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::background::build::{real_det, FdCheck};
use crate::background::{BackgroundPotential, BackgroundResult};
use crate::cone_charts::{ChartMap, ConeParams};
use crate::error::{ConeError, Result};
use crate::grid::{ChartTag, GridField};
use crate::numerics::{complex_hessian_real, hermitize, max_abs, min_eigenvalue, real_partial, real_second, CMat, C64, I};
use crate::weighted_holder::{
    dw_membership_fn, holder_seminorm, refinement_verdict, HolderConfig, HolderReport, SampleSet, SectorPlan, Verdict,
};

/// Condition number above which g is considered numerically singular.
pub const MAX_CONDITION: f64 = 1e12;

/// A Hermitian metric on a w-chart.
pub trait MetricField: Sync {
    fn dim(&self) -> usize;
    fn metric(&self, w: &[C64]) -> Result<CMat>;
    /// Absolute round-off level of the coefficients at w.
    fn noise(&self, w: &[C64]) -> f64 {
        self.metric(w).map(|g| 8.0 * f64::EPSILON * max_abs(&g)).unwrap_or(0.0)
    }
}

/// Metric given by closed-form coefficients.
pub struct FnMetric<F> {
    pub dim: usize,
    pub f: F,
}

impl<F: Fn(&[C64]) -> CMat + Sync> MetricField for FnMetric<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn metric(&self, w: &[C64]) -> Result<CMat> {
        Ok((self.f)(w))
    }
}

/// Metric i∂∂̄P of a real potential, by finite differences with a fixed step.
pub struct PotentialMetric<F> {
    pub dim: usize,
    pub potential: F,
    pub step: f64,
}

impl<F: Fn(&[C64]) -> f64 + Sync> MetricField for PotentialMetric<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn metric(&self, w: &[C64]) -> Result<CMat> {
        Ok(hermitize(&complex_hessian_real(&self.potential, w, self.step)))
    }
    fn noise(&self, w: &[C64]) -> f64 {
        64.0 * f64::EPSILON * (self.potential)(w).abs().max(1.0) / (self.step * self.step)
    }
}

/// A potential given in z-coordinates.
pub type ZFunction = Arc<dyn Fn(&[C64]) -> f64 + Send + Sync>;

/// ω_φ = ω₀ + i∂∂̄φ pulled back to a w-chart, with ω₀ the background metric.
#[derive(Clone)]
pub struct BackgroundMetric {
    pub potential: BackgroundPotential,
    pub beta: f64,
    pub chart: ChartMap,
    pub phi: Option<ZFunction>,
    /// FD step for i∂∂̄φ.
    pub phi_step: FdStep,
}

impl BackgroundMetric {
    pub fn new(potential: BackgroundPotential, beta: f64, chart: ChartMap, phi: Option<ZFunction>) -> Self {
        BackgroundMetric { potential, beta, chart, phi, phi_step: FdStep::default() }
    }

    /// ω₀ in the w-chart.
    pub fn background(&self, w: &[C64]) -> Result<CMat> {
        let z = self.chart.psi_complex(w);
        Ok(self.chart.pull_metric(w, &self.potential.omega0(&z, self.beta)?))
    }

    /// Local potential Φ + u + |s|^{2β} (+ φ) of the metric, as a function of w.
    pub fn local_potential(&self, w: &[C64], with_phi: bool) -> f64 {
        let z = self.chart.psi_complex(w);
        let g = &self.potential.geom;
        let (a, b) = g.ab(&z);
        let base = g.phi_jet(a, b).v + self.potential.u_value(&z) + self.potential.sigma_jet(a, b, self.beta).v;
        match (&self.phi, with_phi) {
            (Some(phi), true) => base + phi(&z),
            _ => base,
        }
    }

    /// Bound on the magnitude of the terms summed in [`Self::local_potential`].
    pub fn potential_scale(&self, w: &[C64]) -> f64 {
        let z = self.chart.psi_complex(w);
        let g = &self.potential.geom;
        let (a, b) = g.ab(&z);
        let phi = self.phi.as_ref().map(|f| f(&z).abs()).unwrap_or(0.0);
        g.phi_jet(a, b).v.abs() + self.potential.value_scale(&z) + self.potential.sigma_jet(a, b, self.beta).v + phi
    }
}

impl MetricField for BackgroundMetric {
    fn dim(&self) -> usize {
        self.potential.geom.dim()
    }

    fn metric(&self, w: &[C64]) -> Result<CMat> {
        let g0 = self.background(w)?;
        match &self.phi {
            None => Ok(g0),
            Some(phi) => {
                let chart = self.chart;
                let f = |q: &[C64]| phi(&chart.psi_complex(q));
                Ok(g0 + hermitize(&complex_hessian_real(&f, w, self.phi_step.at(w))))
            }
        }
    }

    fn noise(&self, w: &[C64]) -> f64 {
        let g = self.background(w).map(|g| max_abs(&g)).unwrap_or(0.0);
        let z = self.chart.psi_complex(w);
        let scale = self.potential.value_scale(&z).max(1.0);
        let phi = match &self.phi {
            Some(phi) => {
                let h = self.phi_step.at(w);
                64.0 * f64::EPSILON * phi(&z).abs() / (h * h)
            }
            None => 0.0,
        };
        16.0 * f64::EPSILON * g * scale + phi
    }
}

/// Finite-difference step: min(cap, fraction·|w_n|).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FdStep {
    pub cap: f64,
    pub fraction: f64,
}

impl Default for FdStep {
    fn default() -> Self {
        FdStep { cap: 1e-2, fraction: 1.0 / 16.0 }
    }
}

impl FdStep {
    pub fn at(&self, w: &[C64]) -> f64 {
        let r = w.last().map(|z| z.norm()).unwrap_or(1.0);
        if r > 0.0 {
            self.cap.min(self.fraction * r)
        } else {
            self.cap
        }
    }
}

/// Sampled metric coefficients of a potential on a w-chart grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricGrid {
    pub g: GridField,
    pub positivity_margin: f64,
}

/// g = ∂²P/∂w∂w̄ from a transverse w-chart grid of potential values.
pub fn metric_in_w(potential: &GridField) -> Result<MetricGrid> {
    if potential.chart == ChartTag::Z {
        return Err(ConeError::Grid("metric_in_w expects a w-chart grid".into()));
    }
    let values: Vec<C64> = potential.dd_bar()?.into_iter().map(|v| C64::new(v.re, 0.0)).collect();
    let margin = values.iter().map(|v| v.re).fold(f64::INFINITY, f64::min);
    let g = potential.with_values(values)?;
    if !(margin > 0.0) {
        return Err(ConeError::Positivity(format!("metric not positive on the grid (margin {margin:.3e})")));
    }
    Ok(MetricGrid { g, positivity_margin: margin })
}

/// First and second derivatives of g at a point.
#[derive(Debug, Clone)]
pub struct MetricJet {
    pub g: CMat,
    /// ∂g/∂w_γ.
    pub dg: Vec<CMat>,
    /// ∂g/∂w̄_γ.
    pub dbg: Vec<CMat>,
    /// ∂²g/∂w_γ∂w̄_δ at index γn + δ.
    pub ddg: Vec<CMat>,
}

fn metric_jet(metric: &dyn MetricField, w: &[C64], h: f64) -> Result<MetricJet> {
    let n = w.len();
    let g = hermitize(&metric.metric(w)?);
    let nan = CMat::from_element(n, n, C64::new(f64::NAN, f64::NAN));
    let f = |q: &[C64]| metric.metric(q).unwrap_or_else(|_| nan.clone());
    let f: &dyn Fn(&[C64]) -> CMat = &f;
    let first: Vec<CMat> = (0..2 * n).map(|d| real_partial(f, w, d, h)).collect();
    let mut second = vec![vec![CMat::zeros(n, n); 2 * n]; 2 * n];
    for a in 0..2 * n {
        for b in a..2 * n {
            let v = real_second(f, w, a, b, h);
            second[b][a] = v.clone();
            second[a][b] = v;
        }
    }
    let half = |x: &CMat, y: &CMat, s: f64| (x + y.map(|v| v * I * s)).map(|v| v * 0.5);
    let dg = (0..n).map(|i| half(&first[2 * i], &first[2 * i + 1], -1.0)).collect();
    let dbg = (0..n).map(|i| half(&first[2 * i], &first[2 * i + 1], 1.0)).collect();
    let mut ddg = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let (xi, yi, xj, yj) = (2 * i, 2 * i + 1, 2 * j, 2 * j + 1);
            let im = &second[xi][yj] - &second[yi][xj];
            ddg.push((&second[xi][xj] + &second[yi][yj] + im.map(|v| v * I)).map(|v| v * 0.25));
        }
    }
    let jet = MetricJet { g, dg, dbg, ddg };
    let finite = jet.dg.iter().chain(&jet.dbg).chain(&jet.ddg).all(|m| m.iter().all(|v| v.is_finite()));
    if !finite {
        return Err(ConeError::Numerical(format!("metric stencil left the domain at w = {w:?}")));
    }
    Ok(jet)
}

fn rm_index(n: usize, mu: usize, nu: usize, rho: usize, th: usize) -> usize {
    ((mu * n + nu) * n + rho) * n + th
}

/// Inverse with conditioning check.
fn checked_inverse(g: &CMat) -> Result<CMat> {
    let ev = crate::numerics::hermitian_eigenvalues(g);
    let (lo, hi) = (ev[0], ev[ev.len() - 1]);
    if !(lo > 0.0) {
        return Err(ConeError::Positivity(format!("metric eigenvalue {lo:.3e} ≤ 0")));
    }
    if hi / lo > MAX_CONDITION {
        return Err(ConeError::IllConditioned(format!("metric condition number {:.3e}", hi / lo)));
    }
    g.clone().try_inverse().ok_or_else(|| ConeError::IllConditioned("metric not invertible".into()))
}

/// Rm_{μν̄ρθ̄} from a metric jet, flattened by [`rm_index`].
pub fn riemann_from_jet(jet: &MetricJet) -> Result<Vec<C64>> {
    let n = jet.g.nrows();
    let ginv = checked_inverse(&jet.g)?;
    let mut rm = vec![C64::new(0.0, 0.0); n.pow(4)];
    for mu in 0..n {
        for nu in 0..n {
            for rho in 0..n {
                for th in 0..n {
                    let mut v = -jet.ddg[rho * n + th][(mu, nu)];
                    for s in 0..n {
                        for t in 0..n {
                            v += ginv[(t, s)] * jet.dg[rho][(mu, t)] * jet.dbg[th][(s, nu)];
                        }
                    }
                    rm[rm_index(n, mu, nu, rho, th)] = v;
                }
            }
        }
    }
    Ok(rm)
}

/// ‖Rm‖ through a unitary frame.
pub fn riemann_norm(g: &CMat, rm: &[C64]) -> Result<f64> {
    let n = g.nrows();
    let chol = hermitize(g).cholesky().ok_or_else(|| ConeError::Positivity("metric not positive definite".into()))?;
    let e = chol.l().try_inverse().ok_or_else(|| ConeError::IllConditioned("frame not invertible".into()))?;
    let mut sum = 0.0;
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                for d in 0..n {
                    let mut v = C64::new(0.0, 0.0);
                    for mu in 0..n {
                        for nu in 0..n {
                            for rho in 0..n {
                                for th in 0..n {
                                    v += e[(a, mu)]
                                        * e[(b, nu)].conj()
                                        * e[(c, rho)]
                                        * e[(d, th)].conj()
                                        * rm[rm_index(n, mu, nu, rho, th)];
                                }
                            }
                        }
                    }
                    sum += v.norm_sqr();
                }
            }
        }
    }
    Ok(sum.sqrt())
}

/// Largest violation of Rm_{μν̄ρθ̄} = Rm_{ρν̄μθ̄} = Rm_{μθ̄ρν̄} and
/// conj(Rm_{μν̄ρθ̄}) = Rm_{νμ̄θρ̄}.
pub fn symmetry_residual(n: usize, rm: &[C64]) -> f64 {
    let mut worst = 0.0f64;
    for mu in 0..n {
        for nu in 0..n {
            for rho in 0..n {
                for th in 0..n {
                    let v = rm[rm_index(n, mu, nu, rho, th)];
                    worst = worst
                        .max((v - rm[rm_index(n, rho, nu, mu, th)]).norm())
                        .max((v - rm[rm_index(n, mu, th, rho, nu)]).norm())
                        .max((v.conj() - rm[rm_index(n, nu, mu, th, rho)]).norm());
                }
            }
        }
    }
    worst
}

/// Curvature data at one point with truncation estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvaturePoint {
    pub w: Vec<C64>,
    pub step: f64,
    pub rm: Vec<C64>,
    pub norm: f64,
    pub rm_estimate: f64,
    pub norm_estimate: f64,
    pub symmetry_residual: f64,
    /// ∂g_{μν̄}/∂w_γ at index (γn + μ)n + ν.
    pub dg: Vec<C64>,
    pub dg_estimate: f64,
    /// ∂²g_{μν̄}/∂w_γ∂w̄_δ at index ((γn + δ)n + μ)n + ν.
    pub ddg: Vec<C64>,
    pub ddg_estimate: f64,
    pub positivity_margin: f64,
}

fn flatten(ms: &[CMat]) -> Vec<C64> {
    ms.iter().flat_map(|m| (0..m.nrows()).flat_map(move |i| (0..m.ncols()).map(move |j| m[(i, j)]))).collect()
}

fn max_diff(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// Rm, ‖Rm‖ and metric derivatives at w with step h (and 2h for the estimates).
pub fn curvature_at(metric: &dyn MetricField, w: &[C64], h: f64) -> Result<CurvaturePoint> {
    let fine = metric_jet(metric, w, h)?;
    let coarse = metric_jet(metric, w, 2.0 * h)?;
    let rm = riemann_from_jet(&fine)?;
    let rm2 = riemann_from_jet(&coarse)?;
    let norm = riemann_norm(&fine.g, &rm)?;
    let norm2 = riemann_norm(&coarse.g, &rm2)?;
    let noise = metric.noise(w);
    let ginv = checked_inverse(&fine.g)?;
    let dg_mag = fine.dg.iter().map(max_abs).fold(0.0, f64::max);
    let dg_round = 4.0 * noise / h;
    let ddg_round = 16.0 * noise / (h * h);
    let rm_round = ddg_round + 2.0 * max_abs(&ginv) * dg_mag * dg_round * (w.len() * w.len()) as f64;
    let lambda_min = min_eigenvalue(&fine.g);
    let frame = (1.0 / lambda_min).powi(2);
    let dg = flatten(&fine.dg);
    let ddg = flatten(&fine.ddg);
    let rm_estimate = max_diff(&rm, &rm2) / 15.0 + rm_round;
    Ok(CurvaturePoint {
        w: w.to_vec(),
        step: h,
        symmetry_residual: symmetry_residual(w.len(), &rm),
        norm,
        norm_estimate: (norm - norm2).abs() / 15.0 + rm_round * frame * (w.len() * w.len()) as f64,
        rm,
        rm_estimate,
        dg_estimate: max_diff(&dg, &flatten(&coarse.dg)) / 15.0 + dg_round,
        dg,
        ddg_estimate: max_diff(&ddg, &flatten(&coarse.ddg)) / 15.0 + ddg_round,
        ddg,
        positivity_margin: lambda_min,
    })
}

/// Curvature sampled at scattered w-chart points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvatureField {
    pub chart: ChartTag,
    pub dim: usize,
    pub points: Vec<CurvaturePoint>,
}

impl CurvatureField {
    pub fn max_norm(&self) -> f64 {
        self.points.iter().map(|p| p.norm).fold(0.0, f64::max)
    }

    pub fn positivity_margin(&self) -> f64 {
        self.points.iter().map(|p| p.positivity_margin).fold(f64::INFINITY, f64::min)
    }

    /// Symmetry residuals against 10× the Rm truncation estimate.
    pub fn symmetry_check(&self) -> FdCheck {
        let s: Vec<(f64, f64)> = self.points.iter().map(|p| (p.symmetry_residual, p.rm_estimate)).collect();
        FdCheck::from_samples(&s, 10.0)
    }

    /// Shell-wise ‖Rm‖ statistics over dyadic shells 2^{−j} ≤ |w_n| < 2^{−j+1}.
    pub fn shell_statistics(&self) -> Vec<ShellStat> {
        let mut out: Vec<ShellStat> = Vec::new();
        for p in &self.points {
            let r = p.w.last().map(|z| z.norm()).unwrap_or(0.0);
            if r <= 0.0 {
                continue;
            }
            let j = (1.0 - r.log2()).floor() as i32;
            let pos = match out.iter().position(|s| s.j == j) {
                Some(i) => i,
                None => {
                    out.push(ShellStat {
                        j,
                        r_lo: 2f64.powi(-j),
                        r_hi: 2f64.powi(1 - j),
                        count: 0,
                        max_norm: 0.0,
                        mean_norm: 0.0,
                    });
                    out.len() - 1
                }
            };
            let s = &mut out[pos];
            s.count += 1;
            s.max_norm = s.max_norm.max(p.norm);
            s.mean_norm += p.norm;
        }
        for s in &mut out {
            s.mean_norm /= s.count as f64;
        }
        out.sort_by_key(|s| s.j);
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShellStat {
    pub j: i32,
    pub r_lo: f64,
    pub r_hi: f64,
    pub count: usize,
    pub max_norm: f64,
    pub mean_norm: f64,
}

/// CSV with header `j,r_lo,r_hi,count,max_norm,mean_norm`.
pub fn shell_csv(stats: &[ShellStat]) -> String {
    let mut s = String::from("j,r_lo,r_hi,count,max_norm,mean_norm\n");
    for t in stats {
        s.push_str(&format!("{},{:e},{:e},{},{:e},{:e}\n", t.j, t.r_lo, t.r_hi, t.count, t.max_norm, t.mean_norm));
    }
    s
}

/// Curvature of `metric` at the given points (parallel).
pub fn riemann(metric: &dyn MetricField, chart: ChartTag, points: &[Vec<C64>], step: FdStep) -> Result<CurvatureField> {
    let dim = metric.dim();
    if points.iter().any(|p| p.len() != dim) {
        return Err(ConeError::Domain(format!("points must have {dim} coordinates")));
    }
    let pts: Result<Vec<CurvaturePoint>> = points.par_iter().map(|w| curvature_at(metric, w, step.at(w))).collect();
    Ok(CurvatureField { chart, dim, points: pts? })
}

/// Hölder trend of one sampled quantity across refinement levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantityTrend {
    pub name: String,
    pub chart: u32,
    pub levels: Vec<HolderReport>,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvatureHolderConfig {
    pub levels: usize,
    pub base_radii: usize,
    pub base_angles: usize,
    /// Shell range for |w_n|.
    pub r_min: f64,
    pub r_max: f64,
    pub step: FdStep,
    pub holder: HolderConfig,
    /// Require φ and f to pass D_w membership.
    pub enforce_preconditions: bool,
    pub precondition_radii: usize,
    pub precondition_angles: usize,
    /// Tangential coordinates sampled when n = 2.
    pub tangential: Vec<C64>,
}

impl Default for CurvatureHolderConfig {
    fn default() -> Self {
        CurvatureHolderConfig {
            levels: 3,
            base_radii: 128,
            base_angles: 2,
            r_min: 2f64.powi(-8),
            r_max: 0.5,
            step: FdStep::default(),
            holder: HolderConfig::default(),
            enforce_preconditions: true,
            precondition_radii: 40,
            precondition_angles: 8,
            tangential: vec![C64::new(0.0, 0.0), C64::new(0.2, 0.1)],
        }
    }
}

impl CurvatureHolderConfig {
    fn plan(&self, dim: usize, level: usize) -> SectorPlan {
        let scale = 1usize << level;
        let mut plan = SectorPlan::transverse(self.r_min, self.r_max, self.base_radii * scale, self.base_angles * scale);
        if dim == 2 {
            plan.tangential = self.tangential.iter().map(|t| vec![*t]).collect();
        }
        plan
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreconditionReport {
    pub phi_verdict: Verdict,
    pub f_verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvatureHolderReport {
    pub alpha: f64,
    pub beta: f64,
    pub norm_trends: Vec<QuantityTrend>,
    pub component_trends: Vec<QuantityTrend>,
    pub norm_verdict: Verdict,
    pub component_verdict: Verdict,
    /// Largest ‖Rm‖ seminorm estimate over largest component estimate (finest level).
    pub chain_ratio: f64,
    /// The ‖Rm‖ verdict is no worse than the component verdict.
    pub chain_ok: bool,
    pub max_norm: f64,
    /// max ‖Rm‖ over the innermost two shells.
    pub max_norm_inner: f64,
    pub norm_bounded: bool,
    pub positivity_margin: f64,
    pub symmetry: FdCheck,
    pub preconditions: Option<PreconditionReport>,
    pub verdict: Verdict,
}

/// f = log(ω_φⁿ/ω₀ⁿ) as a z-function.
pub fn fake_ma_f<'a>(potential: &'a BackgroundPotential, beta: f64, phi: &ZFunction) -> impl Fn(&[C64]) -> f64 + Sync + 'a {
    let phi = phi.clone();
    move |z: &[C64]| {
        let g0 = match potential.omega0(z, beta) {
            Ok(g) => g,
            Err(_) => return f64::NAN,
        };
        let h = z[z.len() - 1].norm() / 16.0;
        let f = |q: &[C64]| phi(q);
        let gphi = &g0 + hermitize(&complex_hessian_real(&f, z, h));
        (real_det(&gphi) / real_det(&g0)).ln()
    }
}

fn preconditions(
    potential: &BackgroundPotential,
    phi: &ZFunction,
    params: &ConeParams,
    cfg: &CurvatureHolderConfig,
) -> Result<PreconditionReport> {
    let mut plan = SectorPlan::transverse(cfg.r_min, cfg.r_max, cfg.precondition_radii, cfg.precondition_angles);
    if potential.geom.dim() == 2 {
        plan.tangential = cfg.tangential.iter().map(|t| vec![*t]).collect();
    }
    let phi_c = |z: &[C64]| C64::new(phi(z), 0.0);
    let phi_report = dw_membership_fn(&phi_c, params, &plan, &cfg.holder)?;
    let f = fake_ma_f(potential, params.beta, phi);
    let f_c = |z: &[C64]| C64::new(f(z), 0.0);
    let f_report = dw_membership_fn(&f_c, params, &plan, &cfg.holder)?;
    Ok(PreconditionReport { phi_verdict: phi_report.verdict, f_verdict: f_report.verdict })
}

fn trend_samples(field: &CurvatureField, values: impl Fn(&CurvaturePoint) -> (C64, f64)) -> SampleSet {
    let (values, noise): (Vec<C64>, Vec<f64>) = field.points.iter().map(values).unzip();
    SampleSet { points: field.points.iter().map(|p| p.w.clone()).collect(), values, neighbor_pairs: Vec::new(), noise }
}

/// Hölder trends of ‖Rm(ω_φ)‖, ∂g/∂w_γ and ∂²g/∂w_γ∂w̄_δ on shrinking w-chart
/// shells, for ω_φ = ω₀ + i∂∂̄φ built on the given background.
pub fn curvature_holder_report(
    phi: Option<ZFunction>,
    background: &BackgroundResult,
    params: &ConeParams,
    cfg: &CurvatureHolderConfig,
) -> Result<CurvatureHolderReport> {
    let potential = background.potential()?;
    curvature_holder_report_for(phi, &potential, params, cfg)
}

/// [`curvature_holder_report`] for an explicit background potential.
pub fn curvature_holder_report_for(
    phi: Option<ZFunction>,
    potential: &BackgroundPotential,
    params: &ConeParams,
    cfg: &CurvatureHolderConfig,
) -> Result<CurvatureHolderReport> {
    if cfg.levels == 0 {
        return Err(ConeError::Config("at least one refinement level is required".into()));
    }
    let dim = potential.geom.dim();
    let preconditions = match &phi {
        Some(f) => Some(preconditions(potential, f, params, cfg)?),
        None => None,
    };
    let mut norm_trends = Vec::new();
    let mut component_trends = Vec::new();
    let mut max_norm = 0.0f64;
    let mut max_norm_inner = 0.0f64;
    let mut positivity = f64::INFINITY;
    let mut sym = Vec::new();
    let mut chain_ratio = 0.0f64;
    for chart in ChartMap::all(params.beta)? {
        let metric = BackgroundMetric::new(potential.clone(), params.beta, chart, phi.clone());
        let mut norm_levels = Vec::new();
        let mut comp_levels: Vec<Vec<HolderReport>> = Vec::new();
        let mut names: Vec<String> = Vec::new();
        for level in 0..cfg.levels {
            let plan = cfg.plan(dim, level);
            let (pts, _) = plan.points(&chart);
            let field = riemann(&metric, ChartTag::W(chart.k), &pts, cfg.step)?;
            positivity = positivity.min(field.positivity_margin());
            if level + 1 == cfg.levels {
                max_norm = max_norm.max(field.max_norm());
                let inner = 4.0 * cfg.r_min;
                max_norm_inner = max_norm_inner.max(
                    field
                        .points
                        .iter()
                        .filter(|p| p.w[dim - 1].norm() <= inner)
                        .map(|p| p.norm)
                        .fold(0.0, f64::max),
                );
                sym.extend(field.points.iter().map(|p| (p.symmetry_residual, p.rm_estimate)));
            }
            let s = trend_samples(&field, |p| (C64::new(p.norm, 0.0), p.norm_estimate));
            norm_levels.push(holder_seminorm(&s, params.alpha, &cfg.holder)?);
            let mut k = 0;
            for (kind, len) in [("dg", dim.pow(3)), ("ddg", dim.pow(4))] {
                for idx in 0..len {
                    let s = trend_samples(&field, |p| {
                        if kind == "dg" {
                            (p.dg[idx], p.dg_estimate)
                        } else {
                            (p.ddg[idx], p.ddg_estimate)
                        }
                    });
                    let r = holder_seminorm(&s, params.alpha, &cfg.holder)?;
                    if level == 0 {
                        comp_levels.push(Vec::new());
                        names.push(format!("{kind}[{idx}]"));
                    }
                    comp_levels[k].push(r);
                    k += 1;
                }
            }
        }
        let finest_norm = norm_levels.last().map(|r| r.seminorm_estimate).unwrap_or(0.0);
        let finest_comp =
            comp_levels.iter().filter_map(|l| l.last()).map(|r| r.seminorm_estimate).fold(0.0, f64::max);
        if finest_comp > 0.0 {
            chain_ratio = chain_ratio.max(finest_norm / finest_comp);
        }
        let verdict = refinement_verdict(&norm_levels, cfg.holder.refinement_growth_factor);
        norm_trends.push(QuantityTrend { name: "rm_norm".into(), chart: chart.k, levels: norm_levels, verdict });
        for (name, levels) in names.into_iter().zip(comp_levels) {
            let verdict = refinement_verdict(&levels, cfg.holder.refinement_growth_factor);
            component_trends.push(QuantityTrend { name, chart: chart.k, levels, verdict });
        }
    }
    let norm_verdict = norm_trends.iter().map(|t| t.verdict).fold(Verdict::Stable, Verdict::worst);
    let component_verdict = component_trends.iter().map(|t| t.verdict).fold(Verdict::Stable, Verdict::worst);
    let symmetry = FdCheck::from_samples(&sym, 10.0);
    let outer = max_norm.max(1e-300);
    let norm_bounded = max_norm.is_finite() && max_norm_inner <= 2.0 * outer;
    let mut verdict = norm_verdict.worst(component_verdict);
    if let (Some(pre), true) = (&preconditions, cfg.enforce_preconditions) {
        if pre.phi_verdict != Verdict::Stable || pre.f_verdict != Verdict::Stable {
            verdict = verdict.worst(Verdict::Inconclusive);
        }
    }
    Ok(CurvatureHolderReport {
        alpha: params.alpha,
        beta: params.beta,
        norm_trends,
        component_trends,
        norm_verdict,
        component_verdict,
        chain_ratio,
        chain_ok: norm_verdict <= component_verdict,
        max_norm,
        max_norm_inner,
        norm_bounded,
        positivity_margin: positivity,
        symmetry,
        preconditions,
        verdict,
    })
}

/// Which form of the differentiated Monge–Ampère equation to check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaVariant {
    /// Δ_φ(∂_γ(P + φ)) = ∂_γ f + Δ₀(∂_γ P).
    First,
    /// The ∂̄_δ-differentiated form with the quadratic g-derivative term.
    Second { delta: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaResidual {
    pub residual: GridField,
    pub check: FdCheck,
}

fn laplacian(ginv_t: &CMat, hess: &CMat) -> C64 {
    // Σ g^{ij̄} H_{ij̄} with g^{ij̄} = (g⁻¹)_{ji}.
    let n = hess.nrows();
    let mut s = C64::new(0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            s += ginv_t[(j, i)] * hess[(i, j)];
        }
    }
    s
}

fn quadratic_term(ginv: &CMat, dg_gamma: &CMat, dbg_delta: &CMat) -> C64 {
    // Σ g^{ik̄} g^{hj̄} ∂̄_δ g_{hk̄} ∂_γ g_{ij̄}.
    let n = ginv.nrows();
    let mut s = C64::new(0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            for h in 0..n {
                for k in 0..n {
                    s += ginv[(k, i)] * ginv[(j, h)] * dbg_delta[(h, k)] * dg_gamma[(i, j)];
                }
            }
        }
    }
    s
}

fn complex_derivative_real(f: &dyn Fn(&[C64]) -> f64, w: &[C64], gamma: usize, h: f64) -> C64 {
    let dx = real_partial(f, w, 2 * gamma, h);
    let dy = real_partial(f, w, 2 * gamma + 1, h);
    0.5 * C64::new(dx, -dy)
}

fn ma_residual_at(metric: &BackgroundMetric, gamma: usize, variant: MaVariant, w: &[C64], h: f64) -> Result<C64> {
    let n = w.len();
    let metric = &BackgroundMetric { phi_step: FdStep { cap: h, fraction: 1.0 }, ..metric.clone() };
    let base = BackgroundMetric { phi: None, ..metric.clone() };
    let log_ratio = |q: &[C64]| -> f64 {
        match (metric.metric(q), base.metric(q)) {
            (Ok(a), Ok(b)) => (real_det(&a) / real_det(&b)).ln(),
            _ => f64::NAN,
        }
    };
    match variant {
        MaVariant::First => {
            let side = |m: &BackgroundMetric, with_phi: bool| -> Result<C64> {
                let g = m.metric(w)?;
                let ginv = checked_inverse(&g)?;
                let d_gamma = |q: &[C64]| {
                    let p = |r: &[C64]| m.local_potential(r, with_phi);
                    complex_derivative_real(&p, q, gamma, h)
                };
                let hess = crate::numerics::complex_hessian(&d_gamma, w, h);
                Ok(laplacian(&ginv, &hess))
            };
            let lhs = side(metric, true)?;
            let rhs = complex_derivative_real(&log_ratio, w, gamma, h) + side(&base, false)?;
            Ok(lhs - rhs)
        }
        MaVariant::Second { delta } => {
            if delta >= n {
                return Err(ConeError::Domain(format!("index δ = {delta} out of range")));
            }
            let side = |m: &dyn MetricField| -> Result<C64> {
                let jet = metric_jet(m, w, h)?;
                let ginv = checked_inverse(&jet.g)?;
                // ∂_i∂̄_j g_{γδ̄} = ∂_γ∂̄_δ g_{ij̄}.
                let hess = CMat::from_fn(n, n, |i, j| jet.ddg[i * n + j][(gamma, delta)]);
                Ok(laplacian(&ginv, &hess) - quadratic_term(&ginv, &jet.dg[gamma], &jet.dbg[delta]))
            };
            let f: &dyn Fn(&[C64]) -> f64 = &log_ratio;
            let xx = real_second(f, w, 2 * gamma, 2 * delta, h);
            let yy = real_second(f, w, 2 * gamma + 1, 2 * delta + 1, h);
            let xy = real_second(f, w, 2 * gamma, 2 * delta + 1, h);
            let yx = real_second(f, w, 2 * gamma + 1, 2 * delta, h);
            let dd_f = 0.25 * C64::new(xx + yy, xy - yx);
            Ok(side(metric)? - dd_f - side(&base)?)
        }
    }
}

/// Residual of the w_γ-differentiated equation ω_φⁿ = e^f ω₀ⁿ on a sector grid
/// of chart `chart` (tangential coordinates fixed at `tangential`).
#[allow(clippy::too_many_arguments)]
pub fn differentiated_ma_residual(
    phi: Option<ZFunction>,
    potential: &BackgroundPotential,
    beta: f64,
    chart: ChartMap,
    gamma: usize,
    variant: MaVariant,
    plan: &SectorPlan,
    step: FdStep,
) -> Result<MaResidual> {
    let dim = potential.geom.dim();
    if gamma >= dim {
        return Err(ConeError::Domain(format!("index γ = {gamma} out of range")));
    }
    let metric = BackgroundMetric::new(potential.clone(), beta, chart, phi);
    let (pts, _) = plan.points(&chart);
    let count = plan.n_radii * plan.n_angles.max(2);
    let pts = &pts[..count];
    let order = match variant {
        MaVariant::First => 3,
        MaVariant::Second { .. } => 2,
    };
    let results: Result<Vec<(C64, f64)>> = pts
        .par_iter()
        .map(|w| {
            let h = step.at(w);
            let fine = ma_residual_at(&metric, gamma, variant, w, h)?;
            let coarse = ma_residual_at(&metric, gamma, variant, w, 2.0 * h)?;
            let scale = metric.potential_scale(w).max(1.0);
            let round = 256.0 * f64::EPSILON * scale / h.powi(order);
            Ok((fine, (fine - coarse).norm() / 15.0 + round))
        })
        .collect();
    let results = results?;
    let check = FdCheck::from_samples(&results.iter().map(|(r, e)| (r.norm(), *e)).collect::<Vec<_>>(), 10.0);
    let radii = crate::numerics::log_space(plan.r_min, plan.r_max, plan.n_radii);
    let na = plan.n_angles.max(2);
    let inner = chart.half_width * 0.9;
    let angles: Vec<f64> = (0..na).map(|a| chart.center - inner + 2.0 * inner * a as f64 / (na - 1) as f64).collect();
    let residual =
        GridField::new(ChartTag::W(chart.k), beta, radii, angles, false, results.iter().map(|(r, _)| *r).collect())?;
    Ok(MaResidual { residual, check })
}

/// A smooth bump b(w) = A exp(1 − 1/(1 − |w − w₀|²/ρ²)) in a w-chart, as a z-function.
pub fn w_bump(chart: ChartMap, center: C64, radius: f64, amplitude: f64) -> ZFunction {
    Arc::new(move |z: &[C64]| {
        let zn = z[z.len() - 1];
        if zn.norm() == 0.0 {
            return 0.0;
        }
        // Branch of z^β continuous around the bump.
        let arg = center.arg() / chart.beta;
        let rel = (zn * C64::from_polar(1.0, -arg)).arg();
        let w = C64::from_polar(zn.norm().powf(chart.beta), (arg + rel) * chart.beta);
        let t = (w - center).norm_sqr() / (radius * radius);
        if t >= 1.0 {
            0.0
        } else {
            amplitude * (1.0 - 1.0 / (1.0 - t)).exp()
        }
    })
}

/// ε|z_n|^{2−2β}: pulled back this is ε|w_n|^{(2−2β)/β}.
pub fn cone_power_control(beta: f64, epsilon: f64) -> ZFunction {
    Arc::new(move |z: &[C64]| epsilon * z[z.len() - 1].norm().powf(2.0 - 2.0 * beta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::background::ModelGeometry;
    use crate::cone_charts::model_metric;
    use crate::cone_charts::ZPoint;

    fn ring_points(n: usize, r_lo: f64, r_hi: f64, count: usize) -> Vec<Vec<C64>> {
        (0..count)
            .map(|i| {
                let t = i as f64 / count as f64;
                let r = r_lo + (r_hi - r_lo) * t;
                let wn = C64::from_polar(r, 0.3 + 5.1 * t);
                if n == 1 {
                    vec![wn]
                } else {
                    vec![C64::from_polar(0.3 * t, -2.0 * t), wn]
                }
            })
            .collect()
    }

    #[test]
    fn flat_potential_gives_identity() {
        let m = PotentialMetric { dim: 1, potential: |w: &[C64]| w[0].norm_sqr(), step: 1e-2 };
        for w in ring_points(1, 0.1, 0.9, 10) {
            let g = m.metric(&w).unwrap();
            assert!((g[(0, 0)] - C64::new(1.0, 0.0)).norm() < 1e-10);
        }
    }

    #[test]
    fn quartic_potential_oracle() {
        let m = PotentialMetric { dim: 1, potential: |w: &[C64]| w[0].norm_sqr() + w[0].norm_sqr().powi(2), step: 1e-2 };
        for w in ring_points(1, 0.1, 0.9, 10) {
            let g = m.metric(&w).unwrap();
            assert!((g[(0, 0)].re - (1.0 + 4.0 * w[0].norm_sqr())).abs() < 1e-9);
        }
    }

    #[test]
    fn grid_metric_matches_oracle_at_fourth_order() {
        let errs: Vec<f64> = [32usize, 64]
            .iter()
            .map(|&n| {
                let radii = crate::numerics::log_space(0.2, 0.8, n);
                let angles = crate::numerics::periodic_angles(16);
                let p = GridField::from_fn(ChartTag::W(1), 0.5, radii, angles, true, |r, _| {
                    C64::new(r * r + r.powi(4), 0.0)
                })
                .unwrap();
                let mg = metric_in_w(&p).unwrap();
                let mut e = 0.0f64;
                for ir in 3..n - 3 {
                    let r = mg.g.radii[ir];
                    e = e.max((mg.g.at(ir, 0).re - (1.0 + 4.0 * r * r)).abs());
                }
                assert!(mg.positivity_margin > 0.9);
                e
            })
            .collect();
        assert!(errs[1] < 1e-5, "{errs:?}");
        assert!(errs[0] / errs[1] > 12.0, "{errs:?}");
    }

    #[test]
    fn model_cone_is_flat() {
        for beta in [0.25, 0.5, 0.75] {
            for chart in ChartMap::all(beta).unwrap() {
                for n in [1usize, 2] {
                    let metric = FnMetric {
                        dim: n,
                        f: move |w: &[C64]| {
                            let z = ZPoint { coords: chart.psi_complex(w) };
                            chart.pull_metric(w, &model_metric(&z, beta).unwrap())
                        },
                    };
                    let (lo, hi) = (chart.center - 0.8 * chart.half_width, chart.center + 0.8 * chart.half_width);
                    let pts: Vec<Vec<C64>> = (0..20)
                        .map(|i| {
                            let t = i as f64 / 19.0;
                            let wn = C64::from_polar(0.01 + 0.5 * t, lo + (hi - lo) * t);
                            if n == 1 {
                                vec![wn]
                            } else {
                                vec![C64::new(0.1, -0.2 * t), wn]
                            }
                        })
                        .collect();
                    let f = riemann(&metric, ChartTag::W(chart.k), &pts, FdStep::default()).unwrap();
                    assert!(f.max_norm() <= 1e-8, "β {beta} chart {} n {n}: {}", chart.k, f.max_norm());
                }
            }
        }
    }

    #[test]
    fn gaussian_curvature_oracle() {
        let metric = FnMetric { dim: 1, f: |w: &[C64]| CMat::from_element(1, 1, C64::new(1.0 + 4.0 * w[0].norm_sqr(), 0.0)) };
        let mut pts = ring_points(1, 0.05, 1.0, 25);
        pts.push(vec![C64::new(0.0, 0.0)]);
        let f = riemann(&metric, ChartTag::W(1), &pts, FdStep { cap: 1e-2, fraction: 1.0 }).unwrap();
        for p in &f.points {
            let g = 1.0 + 4.0 * p.w[0].norm_sqr();
            let k = -4.0 / g.powi(3);
            let got = p.rm[0] / (g * g);
            assert!((got - C64::new(k, 0.0)).norm() <= 10.0 * p.rm_estimate / (g * g) + 1e-9, "{got} vs {k}");
            assert!((p.norm - k.abs()).abs() <= 1e-8);
        }
        let origin = f.points.last().unwrap();
        assert!((origin.rm[0].re + 4.0).abs() < 1e-8);
    }

    #[test]
    fn product_metric_has_no_mixed_components() {
        let metric = FnMetric {
            dim: 2,
            f: |w: &[C64]| {
                let mut g = CMat::zeros(2, 2);
                g[(0, 0)] = C64::new(1.0 + w[0].norm_sqr(), 0.0);
                g[(1, 1)] = C64::new(2.0 + (w[1].norm_sqr()).powi(2), 0.0);
                g
            },
        };
        let pts = ring_points(2, 0.1, 0.8, 12);
        let f = riemann(&metric, ChartTag::W(1), &pts, FdStep::default()).unwrap();
        for p in &f.points {
            for mu in 0..2 {
                for nu in 0..2 {
                    for rho in 0..2 {
                        for th in 0..2 {
                            let all_same = mu == nu && nu == rho && rho == th;
                            if !all_same {
                                assert!(p.rm[rm_index(2, mu, nu, rho, th)].norm() < 1e-9);
                            }
                        }
                    }
                }
            }
        }
        assert!(f.symmetry_check().pass);
    }

    #[test]
    fn kahler_symmetries_for_curved_potential() {
        let metric = PotentialMetric {
            dim: 2,
            potential: |w: &[C64]| {
                let (a, b) = (w[0].norm_sqr(), w[1].norm_sqr());
                (1.0 + a).ln() + b * (1.0 + a) + 0.3 * (w[0] * w[1].conj()).re * b + a * b * b
            },
            step: 2e-2,
        };
        let pts = ring_points(2, 0.1, 0.6, 12);
        let f = riemann(&metric, ChartTag::W(1), &pts, FdStep { cap: 2e-2, fraction: 0.1 }).unwrap();
        let check = f.symmetry_check();
        assert!(check.pass, "{check:?}");
        assert!(f.max_norm() > 0.1);
    }

    #[test]
    fn ill_conditioned_metric_is_rejected() {
        let metric = FnMetric { dim: 1, f: |_: &[C64]| CMat::from_element(1, 1, C64::new(-1.0, 0.0)) };
        assert!(matches!(curvature_at(&metric, &[C64::new(0.3, 0.0)], 1e-2), Err(ConeError::Positivity(_))));
    }

    #[test]
    fn shell_statistics_csv() {
        let metric = FnMetric { dim: 1, f: |w: &[C64]| CMat::from_element(1, 1, C64::new(1.0 + 4.0 * w[0].norm_sqr(), 0.0)) };
        let pts = ring_points(1, 0.01, 0.9, 30);
        let f = riemann(&metric, ChartTag::W(1), &pts, FdStep::default()).unwrap();
        let stats = f.shell_statistics();
        assert_eq!(stats.iter().map(|s| s.count).sum::<usize>(), 30);
        let csv = shell_csv(&stats);
        assert!(csv.starts_with("j,r_lo,r_hi,count,max_norm,mean_norm\n"));
        assert_eq!(csv.lines().count(), stats.len() + 1);
    }

    fn disc_background() -> BackgroundPotential {
        let geom = ModelGeometry::disc_n1();
        let params = crate::background::BackgroundParams::default();
        let shells = crate::background::build::shell_set(&geom, params.n_shells);
        let gluing = crate::background::choose_gluing_parameters(&geom, &params.eta_ladder, &shells, params.base_points)
            .unwrap();
        BackgroundPotential::new(geom, gluing, params.mollifier_nodes).unwrap()
    }

    #[test]
    fn differentiated_ma_identities() {
        let pot = disc_background();
        let beta = 0.6;
        let chart = ChartMap::all(beta).unwrap()[1];
        let bump = w_bump(chart, C64::from_polar(0.25, chart.center), 0.15, 1e-4);
        let plan = SectorPlan::transverse(2f64.powi(-5), 0.45, 8, 4);
        for phi in [None, Some(bump)] {
            for variant in [MaVariant::First, MaVariant::Second { delta: 0 }] {
                let r = differentiated_ma_residual(phi.clone(), &pot, beta, chart, 0, variant, &plan, FdStep::default())
                    .unwrap();
                assert!(r.check.pass, "{variant:?} {:?}", r.check);
            }
        }
    }

    #[test]
    fn holder_trends_background_and_control() {
        let pot = disc_background();
        let cfg = CurvatureHolderConfig::default();
        let params = ConeParams::new(0.3, 0.6).unwrap();
        let r = curvature_holder_report_for(None, &pot, &params, &cfg).unwrap();
        assert_eq!(r.verdict, Verdict::Stable, "{:?}", r.norm_trends);
        assert!(r.norm_bounded && r.chain_ok && r.symmetry.pass);
        assert!(r.positivity_margin > 0.0);

        // α = 0.5 ≥ 1/β − 1 at β = 0.75: the control sits outside the admissible range.
        let control = ConeParams { alpha: 0.5, beta: 0.75 };
        let cfg = CurvatureHolderConfig { base_radii: 24, enforce_preconditions: false, ..Default::default() };
        let r = curvature_holder_report_for(Some(cone_power_control(0.75, 0.1)), &pot, &control, &cfg).unwrap();
        assert_eq!(r.component_verdict, Verdict::Diverging);
        assert_eq!(r.verdict, Verdict::Diverging);
        let pre = r.preconditions.unwrap();
        assert_eq!(pre.phi_verdict, Verdict::Diverging);
    }
}
