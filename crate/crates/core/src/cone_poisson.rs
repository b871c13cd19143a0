//! Poisson problem Δ_β v = f on the punctured disc and the expansion
//! v = a|z|^{2β} + b·z + V near the divisor.
//!
//! With s = log ρ the transverse operator reads
//! Δ_β v = β⁻² ρ^{−2β} (v_ss + v_θθ) / 4, so each angular Fourier mode solves
//! v_m'' − m² v_m = 4β² e^{2βs} f_m. Tangential Fourier modes e^{iκ·x} add
//! −β²|κ|² e^{2βs} v_m. The radial ODE is discretized with second-order
//! differences on a uniform s-grid: Dirichlet data at the outer radius and a
//! ghost-point Robin condition at the inner radius selecting the solution
//! regular at the origin.

use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::cone_charts::{check_beta, conic_laplacian_apply, ConeParams};
use crate::error::{ConeError, Result};
use crate::grid::{ChartTag, GridField};
use crate::numerics::{linear_fit, solve_tridiagonal, C64};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoissonConfig {
    /// Maximum admissible discrete residual of each mode solve (relative).
    pub tolerance: f64,
    /// Reject f with sup |f| ρ_min^{2β} above this on the innermost circle.
    pub max_growth: f64,
}

impl Default for PoissonConfig {
    fn default() -> Self {
        PoissonConfig { tolerance: 1e-9, max_growth: 1e6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialModeSolution {
    pub m: i64,
    /// Tangential wave number |κ| (0 for the transverse problem).
    pub kappa: f64,
    pub profile: Vec<C64>,
    pub outer: C64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoissonSolution {
    pub v: GridField,
    pub modes: Vec<RadialModeSolution>,
    pub discrete_residual: f64,
}

fn mode_index(j: usize, n: usize) -> i64 {
    if j <= n / 2 {
        j as i64
    } else {
        j as i64 - n as i64
    }
}

/// Uniform step in s = log ρ, or an error if the radii are not log-uniform.
pub fn log_step(radii: &[f64]) -> Result<f64> {
    if radii.len() < 4 || radii[0] <= 0.0 {
        return Err(ConeError::Grid("need at least four positive radii".into()));
    }
    let ds = (radii[1] / radii[0]).ln();
    for w in radii.windows(2) {
        if ((w[1] / w[0]).ln() - ds).abs() > 1e-8 * ds {
            return Err(ConeError::Grid("radii must be logarithmically uniform".into()));
        }
    }
    Ok(ds)
}

fn check_field(f: &GridField, beta: f64) -> Result<()> {
    check_beta(beta)?;
    if f.chart != ChartTag::Z || !f.periodic {
        return Err(ConeError::Grid("expected a periodic z-chart grid".into()));
    }
    if f.values.iter().any(|v| !v.is_finite()) {
        return Err(ConeError::Numerical("non-finite source".into()));
    }
    Ok(())
}

fn angular_transform(rows: &[C64], na: usize, planner: &mut FftPlanner<f64>) -> Vec<C64> {
    let fft = planner.plan_fft_forward(na);
    let mut out = rows.to_vec();
    for row in out.chunks_mut(na) {
        fft.process(row);
        for c in row.iter_mut() {
            *c /= na as f64;
        }
    }
    out
}

/// Solve one radial mode. `g` is 4β² e^{2βs} f_m on the grid, the last entry is
/// replaced by the Dirichlet value.
fn solve_mode(g: &[C64], s: &[f64], ds: f64, m: i64, kappa: f64, beta: f64, outer: C64) -> Result<(Vec<C64>, f64)> {
    let n = g.len();
    let am = m.unsigned_abs() as f64;
    let pot = |i: usize| am * am + beta * beta * kappa * kappa * (2.0 * beta * s[i]).exp();
    let h2 = ds * ds;
    let k = n - 1;
    let (mut lo, mut di, mut up, mut rhs) = (vec![C64::new(0.0, 0.0); k], vec![C64::new(0.0, 0.0); k], vec![C64::new(0.0, 0.0); k], vec![C64::new(0.0, 0.0); k]);
    // Inner Robin: v' − |m| v = g/(γ + |m|) with γ the local growth exponent of g.
    let gamma = local_exponent(g[0], g[1], ds).unwrap_or(2.0 * beta);
    let q = g[0] / (gamma + am);
    di[0] = C64::new((-2.0 - 2.0 * ds * am) / h2 - pot(0), 0.0);
    if k > 1 {
        up[0] = C64::new(2.0 / h2, 0.0);
    }
    rhs[0] = g[0] + 2.0 * q / ds;
    for i in 1..k {
        lo[i] = C64::new(1.0 / h2, 0.0);
        di[i] = C64::new(-2.0 / h2 - pot(i), 0.0);
        if i + 1 < k {
            up[i] = C64::new(1.0 / h2, 0.0);
        }
        rhs[i] = g[i];
    }
    if k == 1 {
        rhs[0] -= 2.0 / h2 * outer;
    } else {
        rhs[k - 1] -= outer / h2;
    }
    let sol = solve_tridiagonal(&lo, &di, &up, &rhs)?;
    let mut res: f64 = 0.0;
    let scale = rhs.iter().map(|r| r.norm()).fold(1.0, f64::max);
    for i in 0..k {
        let mut r = di[i] * sol[i] - rhs[i];
        if i > 0 {
            r += lo[i] * sol[i - 1];
        }
        if i + 1 < k {
            r += up[i] * sol[i + 1];
        }
        res = res.max(r.norm() / scale);
    }
    let mut profile = sol;
    profile.push(outer);
    Ok((profile, res))
}

fn local_exponent(g0: C64, g1: C64, ds: f64) -> Option<f64> {
    if g0.norm() < 1e-300 || g1.norm() < 1e-300 {
        return None;
    }
    let ratio = g1 / g0;
    if ratio.re <= 0.0 || ratio.im.abs() > 1e-6 * ratio.re {
        return None;
    }
    let gamma = ratio.re.ln() / ds;
    (0.0..=8.0).contains(&gamma).then_some(gamma)
}

/// Solve Δ_β v = f with Dirichlet data on the outer circle.
pub fn solve_poisson(f: &GridField, beta: f64, boundary: &GridField) -> Result<GridField> {
    Ok(solve_poisson_detailed(f, beta, boundary, &PoissonConfig::default())?.v)
}

fn boundary_row(f: &GridField, boundary: &GridField) -> Result<Vec<C64>> {
    if boundary.n_angles() != f.n_angles() || boundary.n_radii() != 1 {
        return Err(ConeError::Grid("boundary must be one circle with the same angles".into()));
    }
    if boundary.angles.iter().zip(&f.angles).any(|(a, b)| (a - b).abs() > 1e-12) {
        return Err(ConeError::Grid("boundary angles differ from the source grid".into()));
    }
    Ok(boundary.values.clone())
}

/// Outer-circle data sampled from a function, for convenience.
pub fn boundary_from_fn(f: &GridField, g: impl Fn(C64) -> C64) -> Result<GridField> {
    let r = *f.radii.last().expect("non-empty grid");
    GridField::from_fn(f.chart, f.beta, vec![r], f.angles.clone(), f.periodic, |r, t| g(C64::from_polar(r, t)))
}

pub fn solve_poisson_detailed(f: &GridField, beta: f64, boundary: &GridField, cfg: &PoissonConfig) -> Result<PoissonSolution> {
    check_field(f, beta)?;
    let ds = log_step(&f.radii)?;
    let bdry = boundary_row(f, boundary)?;
    let (nr, na) = (f.n_radii(), f.n_angles());
    let growth = (0..na).map(|a| f.at(0, a).norm()).fold(0.0, f64::max) * f.radii[0].powf(2.0 * beta);
    if growth > cfg.max_growth {
        return Err(ConeError::Domain(format!("source grows too fast near 0 ({growth:e})")));
    }
    let s: Vec<f64> = f.radii.iter().map(|r| r.ln()).collect();
    let mut planner = FftPlanner::new();
    let fm = angular_transform(&f.values, na, &mut planner);
    let bm = angular_transform(&bdry, na, &mut planner);
    let mut modes = Vec::with_capacity(na);
    let mut coeffs = vec![C64::new(0.0, 0.0); nr * na];
    let mut worst: f64 = 0.0;
    for j in 0..na {
        let m = mode_index(j, na);
        let g: Vec<C64> = (0..nr).map(|i| fm[i * na + j] * (4.0 * beta * beta * (2.0 * beta * s[i]).exp())).collect();
        let (profile, res) = solve_mode(&g, &s, ds, m, 0.0, beta, bm[j])?;
        worst = worst.max(res);
        for i in 0..nr {
            coeffs[i * na + j] = profile[i];
        }
        modes.push(RadialModeSolution { m, kappa: 0.0, profile, outer: bm[j] });
    }
    if worst > cfg.tolerance {
        return Err(ConeError::Numerical(format!("mode solve residual {worst:e} above tolerance")));
    }
    let inv = planner.plan_fft_inverse(na);
    for row in coeffs.chunks_mut(na) {
        inv.process(row);
    }
    Ok(PoissonSolution { v: f.with_values(coeffs)?, modes, discrete_residual: worst })
}

/// max |Δ_β v − f| over rows away from the radial boundaries.
pub fn operator_residual(v: &GridField, f: &GridField, beta: f64, trim: usize) -> Result<f64> {
    let lap = conic_laplacian_apply(v, beta)?;
    let na = v.n_angles();
    let nr = v.n_radii();
    if nr <= 2 * trim {
        return Err(ConeError::Grid("grid too small for trimming".into()));
    }
    Ok((trim * na..(nr - trim) * na).map(|i| (lap.values[i] - f.values[i]).norm()).fold(0.0, f64::max))
}

/// Periodic tangential box for one tangential complex variable z₁ = x + iy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TangentialBox {
    /// Points per real axis.
    pub points: usize,
    pub length: f64,
}

impl TangentialBox {
    pub fn len(&self) -> usize {
        self.points * self.points
    }

    pub fn is_empty(&self) -> bool {
        self.points == 0
    }

    /// z₁ at flat index `ix·points + iy`.
    pub fn point(&self, idx: usize) -> C64 {
        let h = self.length / self.points as f64;
        C64::new((idx / self.points) as f64 * h, (idx % self.points) as f64 * h)
    }
}

/// Solve (Δ_e + Δ_β) v = f for n = 2 with v periodic in z₁ on `tbox`.
///
/// `f[k]` and `boundary[k]` are the transverse data at tangential point k.
/// Tangential directions are handled spectrally, so each (angular, tangential)
/// mode pair is one radial solve.
pub fn solve_poisson_tangential(
    f: &[GridField],
    beta: f64,
    boundary: &[GridField],
    tbox: &TangentialBox,
) -> Result<Vec<GridField>> {
    let nt = tbox.len();
    if f.len() != nt || boundary.len() != nt || nt == 0 {
        return Err(ConeError::Grid("one transverse field per tangential point required".into()));
    }
    for fi in f {
        check_field(fi, beta)?;
        if fi.radii != f[0].radii || fi.angles != f[0].angles {
            return Err(ConeError::Grid("tangential slices must share a grid".into()));
        }
    }
    let ds = log_step(&f[0].radii)?;
    let (nr, na, np) = (f[0].n_radii(), f[0].n_angles(), tbox.points);
    let s: Vec<f64> = f[0].radii.iter().map(|r| r.ln()).collect();
    let mut planner = FftPlanner::new();
    // Angular transform per slice.
    let mut fm: Vec<Vec<C64>> = f.iter().map(|fi| angular_transform(&fi.values, na, &mut planner)).collect();
    let mut bm: Vec<Vec<C64>> = Vec::with_capacity(nt);
    for (b, fi) in boundary.iter().zip(f) {
        bm.push(angular_transform(&boundary_row(fi, b)?, na, &mut planner));
    }
    // Tangential 2D transform at each (radius, angle) entry.
    let fwd = planner.plan_fft_forward(np);
    let inv = planner.plan_fft_inverse(np);
    let fft2 = |data: &mut Vec<Vec<C64>>, len: usize, forward: bool| {
        let plan = if forward { &fwd } else { &inv };
        let mut buf = vec![C64::new(0.0, 0.0); np];
        for e in 0..len {
            for ix in 0..np {
                for iy in 0..np {
                    buf[iy] = data[ix * np + iy][e];
                }
                plan.process(&mut buf);
                for iy in 0..np {
                    data[ix * np + iy][e] = buf[iy];
                }
            }
            for iy in 0..np {
                for ix in 0..np {
                    buf[ix] = data[ix * np + iy][e];
                }
                plan.process(&mut buf);
                for ix in 0..np {
                    data[ix * np + iy][e] = buf[ix];
                }
            }
        }
    };
    fft2(&mut fm, nr * na, true);
    fft2(&mut bm, na, true);
    let norm = (nt) as f64;
    let k0 = 2.0 * std::f64::consts::PI / tbox.length;
    let mut out: Vec<Vec<C64>> = vec![vec![C64::new(0.0, 0.0); nr * na]; nt];
    for t in 0..nt {
        let (kx, ky) = (mode_index(t / np, np) as f64 * k0, mode_index(t % np, np) as f64 * k0);
        // ∂₁∂̄₁ e^{i(kx x + ky y)} = −|κ|²/4 e^{…}; the 4β²ρ^{2β} scaling turns it into β²|κ|²ρ^{2β}.
        let kappa = (kx * kx + ky * ky).sqrt();
        for j in 0..na {
            let m = mode_index(j, na);
            let g: Vec<C64> =
                (0..nr).map(|i| fm[t][i * na + j] / norm * (4.0 * beta * beta * (2.0 * beta * s[i]).exp())).collect();
            let (profile, _) = solve_mode(&g, &s, ds, m, kappa, beta, bm[t][j] / norm)?;
            for i in 0..nr {
                out[t][i * na + j] = profile[i];
            }
        }
    }
    fft2(&mut out, nr * na, false);
    let ang = planner.plan_fft_inverse(na);
    out.into_iter()
        .map(|mut vals| {
            for row in vals.chunks_mut(na) {
                ang.process(row);
            }
            f[0].with_values(vals)
        })
        .collect()
}

/// Angle average of each radial row.
pub fn angle_average(f: &GridField, row: usize) -> C64 {
    let na = f.n_angles();
    (0..na).map(|a| f.at(row, a)).sum::<C64>() / na as f64
}

/// Extrapolate angle-averaged values g(r) = A + B r^p to r = 0 from three rows
/// at geometrically spaced radii (Aitken); linear Richardson as a fallback.
pub fn extrapolate_rows(values: [C64; 3], radii: [f64; 3]) -> C64 {
    let [f0, f1, f2] = values;
    let d1 = f1 - f0;
    let d2 = f2 - f1;
    let scale = f0.norm() + f1.norm() + f2.norm();
    if d1.norm() > 1e-7 * scale {
        let ratio = d2 / d1;
        let denom = d2 - d1;
        if ratio.re > 1.0 + 1e-6 && ratio.re < 1e6 && ratio.im.abs() < 1e-3 * ratio.re {
            return f0 - d1 * d1 / denom;
        }
    }
    crate::numerics::extrapolate_to_zero(radii[0], f0, radii[1], f1)
}

fn extrapolated_origin(f: &GridField, first: usize, radial_power: f64) -> Result<C64> {
    let nr = f.n_radii();
    let k = ((nr - first) / 8).max(1);
    if first + 2 * k >= nr {
        return Err(ConeError::Numerical("too few radii to extrapolate to the origin".into()));
    }
    let rows = [first, first + k, first + 2 * k];
    let vals = rows.map(|r| angle_average(f, r));
    let radii = rows.map(|r| f.radii[r].powf(radial_power));
    let out = extrapolate_rows(vals, radii);
    if out.is_finite() {
        Ok(out)
    } else {
        Err(ConeError::Numerical("extrapolation to the origin is unstable".into()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualReport {
    pub h: GridField,
    pub f_tilde_zero: C64,
    pub fit_constant: f64,
    pub fit_exponent: f64,
}

/// h(z) = |z|^{2β−2}(f̃(|z|^{β−1}z) − f̃(0)) from f̃ sampled on a z-grid,
/// with a power fit of max_θ |h| against |z|.
pub fn cone_residual(f_tilde: &GridField, beta: f64) -> Result<ResidualReport> {
    check_field(f_tilde, beta)?;
    let f0 = extrapolated_origin(f_tilde, 0, beta)?;
    let h = f_tilde.map(|v, z| (v - f0) * z.norm().powf(2.0 * beta - 2.0));
    let na = h.n_angles();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for ir in 0..h.n_radii() {
        let m = (0..na).map(|a| h.at(ir, a).norm()).fold(0.0, f64::max);
        if m > 0.0 {
            xs.push(h.radii[ir]);
            ys.push(m);
        }
    }
    let (c, p) = if xs.len() >= 2 {
        let (c, p, _) = crate::numerics::power_law_fit(&xs, &ys)?;
        (c, p)
    } else {
        (0.0, 0.0)
    };
    Ok(ResidualReport { h, f_tilde_zero: f0, fit_constant: c, fit_exponent: p })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayConfig {
    pub ladder_min_j: u32,
    pub ladder_max_j: u32,
    pub fit_tolerance: f64,
    /// Left-hand sides below this (absolute) are treated as identically zero.
    pub zero_tolerance: f64,
}

impl Default for DecayConfig {
    fn default() -> Self {
        DecayConfig { ladder_min_j: 3, ladder_max_j: 12, fit_tolerance: 0.05, zero_tolerance: 1e-10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub constant: f64,
    pub slope: f64,
    pub target: f64,
    pub identically_zero: bool,
    pub pass: bool,
    /// (log |z|, log lhs) at the ladder radii.
    pub samples: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    /// |z|^{2−2β} |∂²V/∂z²|.
    pub second_derivative: DecayFit,
    /// |z|^{2−2β} |∂²V/∂z² + (1−β)/z ∂V/∂z|.
    pub combined: DecayFit,
}

impl DecayReport {
    pub fn pass(&self) -> bool {
        self.second_derivative.pass && self.combined.pass
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionResult {
    pub a: C64,
    pub b: C64,
    /// Whether the b-branch (α′β > 1 − 2β) is active.
    pub b_active: bool,
    #[serde(skip)]
    pub remainder: Option<GridField>,
    pub fitted_decay_exponent: f64,
    pub fitted_constant: f64,
    /// p̄ = 2/(2 − 2β − α′β).
    pub threshold_exponent: f64,
    pub decay: DecayReport,
}

fn check_alpha_prime(params: &ConeParams, alpha_prime: f64) -> Result<()> {
    if !(alpha_prime > 0.0 && alpha_prime < params.alpha) {
        return Err(ConeError::Domain(format!("α′ = {alpha_prime} must lie in (0, α)")));
    }
    if (alpha_prime * params.beta - (1.0 - 2.0 * params.beta)).abs() < 1e-12 {
        return Err(ConeError::Domain("α′β = 1 − 2β is excluded; perturb α′".into()));
    }
    Ok(())
}

/// Ladder rows: the grid row nearest each ρ_j = 2^{−j}, away from the radial ends.
fn ladder_rows(f: &GridField, cfg: &DecayConfig) -> Result<Vec<usize>> {
    let ds = log_step(&f.radii)?;
    let nr = f.n_radii();
    let mut rows = Vec::new();
    for j in cfg.ladder_min_j..=cfg.ladder_max_j {
        let target = 0.5f64.powi(j as i32).ln();
        let (best, dist) = (2..nr.saturating_sub(2))
            .map(|i| (i, (f.radii[i].ln() - target).abs()))
            .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
        if dist <= ds {
            rows.push(best);
        }
    }
    if rows.len() < 5 {
        return Err(ConeError::Grid("insufficient radius ladder depth".into()));
    }
    Ok(rows)
}

fn fit_decay(f: &GridField, rows: &[usize], lhs: &[f64], target: f64, cfg: &DecayConfig) -> Result<DecayFit> {
    let na = f.n_angles();
    let maxes: Vec<f64> = rows.iter().map(|&r| (0..na).map(|a| lhs[r * na + a]).fold(0.0, f64::max)).collect();
    if maxes.iter().all(|m| *m <= cfg.zero_tolerance) {
        return Ok(DecayFit { constant: 0.0, slope: f64::INFINITY, target, identically_zero: true, pass: true, samples: vec![] });
    }
    let samples: Vec<(f64, f64)> =
        rows.iter().zip(&maxes).filter(|(_, m)| **m > 0.0).map(|(&r, m)| (f.radii[r].ln(), m.ln())).collect();
    let (x, y): (Vec<f64>, Vec<f64>) = samples.iter().cloned().unzip();
    let fit = linear_fit(&x, &y)?;
    Ok(DecayFit {
        constant: fit.intercept.exp(),
        slope: fit.slope,
        target,
        identically_zero: false,
        pass: fit.slope >= target - cfg.fit_tolerance,
        samples,
    })
}

/// Fitted decay of the two second-derivative estimates for the remainder V.
pub fn check_decay(v: &GridField, params: &ConeParams, alpha_prime: f64, cfg: &DecayConfig) -> Result<DecayReport> {
    check_field(v, params.beta)?;
    let beta = params.beta;
    let rows = ladder_rows(v, cfg)?;
    let vz = v.d_z()?;
    let vzz = v.d_zz()?;
    let pts = v.points();
    let lhs1: Vec<f64> = pts.iter().zip(&vzz).map(|(z, d)| z.norm().powf(2.0 - 2.0 * beta) * d.norm()).collect();
    let lhs2: Vec<f64> = pts
        .iter()
        .zip(vzz.iter().zip(&vz))
        .map(|(z, (d2, d1))| z.norm().powf(2.0 - 2.0 * beta) * (d2 + (1.0 - beta) / z * d1).norm())
        .collect();
    let target = alpha_prime * beta;
    Ok(DecayReport {
        second_derivative: fit_decay(v, &rows, &lhs1, target, cfg)?,
        combined: fit_decay(v, &rows, &lhs2, target, cfg)?,
    })
}

/// a = β⁻² f̃(0), b = ∂F/∂z(0) when α′β > 1 − 2β (else 0), V = v − a|z|^{2β} − b z.
///
/// `f_tilde` holds f̃(|z|^{β−1}z) on the same z-grid as `v`.
pub fn extract_expansion(v: &GridField, f_tilde: &GridField, params: &ConeParams, alpha_prime: f64) -> Result<ExpansionResult> {
    extract_expansion_with(v, f_tilde, params, alpha_prime, &DecayConfig::default())
}

pub fn extract_expansion_with(
    v: &GridField,
    f_tilde: &GridField,
    params: &ConeParams,
    alpha_prime: f64,
    cfg: &DecayConfig,
) -> Result<ExpansionResult> {
    check_alpha_prime(params, alpha_prime)?;
    check_field(v, params.beta)?;
    check_field(f_tilde, params.beta)?;
    if v.radii != f_tilde.radii || v.angles != f_tilde.angles {
        return Err(ConeError::Grid("v and f̃ must share a grid".into()));
    }
    let beta = params.beta;
    let a = extrapolated_origin(f_tilde, 0, beta)? / (beta * beta);
    let f_field = v.map(|val, z| val - a * z.norm().powf(2.0 * beta));
    let b_active = alpha_prime * beta > 1.0 - 2.0 * beta;
    let b = if b_active {
        let dz = f_field.with_values(f_field.d_z()?)?;
        extrapolated_origin(&dz, 2, 1.0)?
    } else {
        C64::new(0.0, 0.0)
    };
    let remainder = f_field.map(|val, z| val - b * z);
    let decay = check_decay(&remainder, params, alpha_prime, cfg)?;
    let d = &decay.second_derivative;
    Ok(ExpansionResult {
        a,
        b,
        b_active,
        fitted_decay_exponent: d.slope,
        fitted_constant: d.constant,
        threshold_exponent: 2.0 / (2.0 - 2.0 * beta - alpha_prime * beta),
        remainder: Some(remainder),
        decay,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirstDerivativeReport {
    pub c1: f64,
    pub c2: f64,
    pub exponent: f64,
    pub expected_exponent: f64,
    pub pass: bool,
    /// |z|^{1−2β}|∂F/∂z − b| ≤ C|z|^{α′β}, checked when β ≥ 1/2.
    pub claim: Option<DecayFit>,
    pub b: C64,
}

/// Fit |∂F/∂z| ≈ C₁|z|^e + C₂ on the radius ladder.
pub fn first_derivative_bound(f: &GridField, params: &ConeParams, alpha_prime: f64, cfg: &DecayConfig) -> Result<FirstDerivativeReport> {
    check_alpha_prime(params, alpha_prime)?;
    check_field(f, params.beta)?;
    let beta = params.beta;
    let rows = ladder_rows(f, cfg)?;
    let na = f.n_angles();
    let fz = f.d_z()?;
    let r: Vec<f64> = rows.iter().map(|&i| f.radii[i]).collect();
    let y: Vec<f64> = rows.iter().map(|&i| (0..na).map(|a| fz[i * na + a].norm()).fold(0.0, f64::max)).collect();
    let (c1, c2, exponent) = fit_power_plus_constant(&r, &y);
    let expected = 2.0 * beta - 1.0 + alpha_prime * beta;
    let negligible = y.iter().zip(&r).all(|(yy, rr)| (c1 * rr.powf(exponent)).abs() <= 1e-6 * (yy.abs() + 1e-300));
    let pass = exponent >= expected - cfg.fit_tolerance || negligible;
    let dz = f.with_values(fz.clone())?;
    let b = extrapolated_origin(&dz, 2, 1.0)?;
    let claim = if beta >= 0.5 {
        let lhs: Vec<f64> = f.points().iter().zip(&fz).map(|(z, d)| z.norm().powf(1.0 - 2.0 * beta) * (d - b).norm()).collect();
        let scaled = DecayConfig { zero_tolerance: cfg.zero_tolerance.max(1e-8 * (1.0 + b.norm())), ..*cfg };
        Some(fit_decay(f, &rows, &lhs, alpha_prime * beta, &scaled)?)
    } else {
        None
    };
    let pass = pass && claim.as_ref().map(|c| c.pass).unwrap_or(true);
    Ok(FirstDerivativeReport { c1, c2, exponent, expected_exponent: expected, pass, claim, b })
}

/// Variable projection: scan the exponent, solve for (C₁, C₂) in relative least squares.
fn fit_power_plus_constant(r: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let mut best = (f64::INFINITY, 0.0, 0.0, 0.0);
    let mut e = -3.0;
    while e <= 4.0 {
        let (mut s11, mut s12, mut s22, mut t1, mut t2) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (rr, yy) in r.iter().zip(y) {
            let w = 1.0 / (yy.abs() + 1e-300).powi(2);
            let p = rr.powf(e);
            s11 += w * p * p;
            s12 += w * p;
            s22 += w;
            t1 += w * p * yy;
            t2 += w * yy;
        }
        let det = s11 * s22 - s12 * s12;
        if det.abs() > 1e-300 {
            let c1 = (t1 * s22 - t2 * s12) / det;
            let c2 = (s11 * t2 - s12 * t1) / det;
            let err: f64 = r.iter().zip(y).map(|(rr, yy)| ((c1 * rr.powf(e) + c2 - yy) / (yy.abs() + 1e-300)).powi(2)).sum();
            if err < best.0 {
                best = (err, c1, c2, e);
            }
        }
        e += 1e-3;
    }
    (best.1, best.2, best.3)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn disc(beta: f64, nr: usize, f: impl Fn(C64) -> C64) -> GridField {
        GridField::disc(beta, 1e-5, 1.0, nr, 32, f).unwrap()
    }

    fn error(v: &GridField, exact: impl Fn(C64) -> C64) -> f64 {
        v.points().iter().zip(&v.values).map(|(z, val)| (val - exact(*z)).norm()).fold(0.0, f64::max)
    }

    #[test]
    fn manufactured_solutions_converge() {
        let beta = 0.6;
        let cases: Vec<(Box<dyn Fn(C64) -> C64>, Box<dyn Fn(C64) -> C64>)> = vec![
            (Box::new(|_| C64::new(1.0, 0.0)), Box::new(move |z: C64| C64::new(z.norm().powf(2.0 * beta), 0.0))),
            (Box::new(|_| C64::new(0.0, 0.0)), Box::new(|z: C64| C64::new(z.re, 0.0))),
            (
                Box::new(move |z: C64| C64::new(z.norm().powf(2.0 - 2.0 * beta) / (beta * beta), 0.0)),
                Box::new(|z: C64| C64::new(z.norm_sqr(), 0.0)),
            ),
        ];
        for (src, exact) in &cases {
            let mut errs = Vec::new();
            for nr in [100, 200, 400] {
                let f = disc(beta, nr, src);
                let b = boundary_from_fn(&f, exact).unwrap();
                let v = solve_poisson(&f, beta, &b).unwrap();
                errs.push(error(&v, exact));
            }
            let order = (errs[1] / errs[2]).log2();
            assert!(errs[2] < 1e-3 && (order >= 1.8 || errs[2] < 1e-12), "{errs:?}");
        }
    }

    #[test]
    fn model_residual() {
        let beta = 0.5;
        let f = disc(beta, 400, |_| C64::new(1.0, 0.0));
        let b = boundary_from_fn(&f, |z| C64::new(z.norm().powf(2.0 * beta), 0.0)).unwrap();
        let v = solve_poisson(&f, beta, &b).unwrap();
        assert!(operator_residual(&v, &f, beta, 2).unwrap() <= 1e-3);
    }

    #[test]
    fn rejects_bad_input() {
        let f = disc(0.5, 50, |_| C64::new(1.0, 0.0));
        let b = GridField::disc(0.5, 1.0, 1.0, 1, 16, |_| C64::new(0.0, 0.0));
        assert!(b.is_err() || solve_poisson(&f, 0.5, &b.unwrap()).is_err());
        let wild = disc(0.5, 50, |z| C64::new(z.norm().powf(-9.0), 0.0));
        let bw = boundary_from_fn(&wild, |_| C64::new(0.0, 0.0)).unwrap();
        assert!(solve_poisson(&wild, 0.5, &bw).is_err());
    }

    #[test]
    fn residual_examples() {
        let beta = 0.5;
        let c = disc(beta, 200, |_| C64::new(2.5, 0.0));
        let r = cone_residual(&c, beta).unwrap();
        assert!(r.h.values.iter().all(|v| v.norm() < 1e-9));
        let re = disc(beta, 200, move |z| C64::new((z * z.norm().powf(beta - 1.0)).re, 0.0));
        let r = cone_residual(&re, beta).unwrap();
        assert!((r.fit_exponent - (3.0 * beta - 2.0)).abs() < 0.02);
        let alpha = 0.6;
        let pw = disc(beta, 200, move |z| C64::new(z.norm().powf(beta * alpha), 0.0));
        let r = cone_residual(&pw, beta).unwrap();
        assert!((r.fit_exponent - (2.0 * beta - 2.0 + alpha * beta)).abs() < 0.02, "{}", r.fit_exponent);
    }

    #[test]
    fn constant_source_gives_a() {
        let beta = 0.5;
        let c = 0.7;
        let params = ConeParams::new(0.5, beta).unwrap();
        let ft = disc(beta, 300, |_| C64::new(c, 0.0));
        let f = ft.map(|v, _| v / (beta * beta));
        let v = solve_poisson(&f, beta, &boundary_from_fn(&f, |_| C64::new(0.0, 0.0)).unwrap()).unwrap();
        let e = extract_expansion(&v, &ft, &params, 0.3).unwrap();
        assert!((e.a - 4.0 * c).norm() < 1e-10);
        assert!(e.a.im.abs() < 1e-12);
        assert!(e.b_active && e.b.norm() < 1e-6);
        let p4 = ConeParams::new(0.9, 0.4).unwrap();
        let ft = GridField::disc(0.4, 1e-5, 1.0, 300, 32, |_| C64::new(c, 0.0)).unwrap();
        let f = ft.map(|v, _| v / 0.16);
        let v = solve_poisson(&f, 0.4, &boundary_from_fn(&f, |_| C64::new(0.0, 0.0)).unwrap()).unwrap();
        let e = extract_expansion(&v, &ft, &p4, 0.3).unwrap();
        assert!(!e.b_active && e.b == C64::new(0.0, 0.0));
    }

    fn manufactured(beta: f64, ap: f64, nr: usize) -> (GridField, GridField) {
        let q = 2.0 * beta * (1.0 + ap);
        let exact = move |z: C64| C64::new(z.norm().powf(2.0 * beta) + z.norm().powf(q), 0.0) + 0.3 * z;
        let ft = disc(beta, nr, move |z| {
            let x = z.norm().powf(beta);
            C64::new(beta * beta * (1.0 + (1.0 + ap).powi(2) * x.powf(2.0 * ap)), 0.0)
        });
        let f = ft.map(|v, _| v / (beta * beta));
        let v = solve_poisson(&f, beta, &boundary_from_fn(&f, exact).unwrap()).unwrap();
        (v, ft)
    }

    #[test]
    fn manufactured_expansion() {
        for (beta, alpha) in [(0.4, 0.9), (0.6, 0.6), (0.75, 0.32)] {
            for ap in [0.2, 0.3] {
                let params = ConeParams::new(alpha, beta).unwrap();
                let (v, ft) = manufactured(beta, ap, 400);
                let e = extract_expansion(&v, &ft, &params, ap).unwrap();
                assert!((e.a - 1.0).norm() < 0.01, "β={beta} α′={ap} a={}", e.a);
                if ap * beta < 1.0 - 2.0 * beta {
                    assert_eq!(e.b, C64::new(0.0, 0.0));
                } else {
                    assert!((e.b - 0.3).norm() < 0.01, "β={beta} α′={ap} b={}", e.b);
                }
                assert!(e.decay.pass(), "β={beta} α′={ap} {:?}", e.decay);
            }
        }
    }

    #[test]
    fn decay_examples() {
        let beta = 0.6;
        let ap = 0.3;
        let params = ConeParams::new(0.5, beta).unwrap();
        let cfg = DecayConfig::default();
        let zero = disc(beta, 300, |_| C64::new(0.0, 0.0));
        let r = check_decay(&zero, &params, ap, &cfg).unwrap();
        assert!(r.second_derivative.identically_zero && r.pass());
        let p = 2.0 * beta + ap * beta;
        let v = disc(beta, 300, move |z| C64::new(z.norm().powf(p), 0.0));
        let r = check_decay(&v, &params, ap, &cfg).unwrap();
        // |∂²_z |z|^p| = (p/2)|p/2 − 1| |z|^{p−2}
        assert!((r.second_derivative.slope - ap * beta).abs() < 1e-3);
        let c = (p / 2.0) * (p / 2.0 - 1.0).abs();
        assert!((r.second_derivative.constant - c).abs() < 1e-3 * c);
        let shallow = disc(beta, 60, |_| C64::new(0.0, 0.0));
        let coarse = GridField::disc(beta, 0.1, 1.0, 20, 16, |_| C64::new(0.0, 0.0)).unwrap();
        assert!(check_decay(&coarse, &params, ap, &cfg).is_err());
        assert!(check_decay(&shallow, &params, ap, &cfg).is_ok());
    }

    #[test]
    fn first_derivative_examples() {
        let beta = 0.6;
        let ap = 0.3;
        let params = ConeParams::new(0.5, beta).unwrap();
        let cfg = DecayConfig::default();
        let p = 2.0 * beta + ap * beta;
        let f = disc(beta, 300, move |z| C64::new(z.norm().powf(p), 0.0));
        let r = first_derivative_bound(&f, &params, ap, &cfg).unwrap();
        assert!((r.exponent - (2.0 * beta - 1.0 + ap * beta)).abs() < 0.01, "{r:?}");
        assert!(r.pass);
        let b = C64::new(0.2, -0.1);
        let lin = disc(beta, 300, move |z| b * z);
        let r = first_derivative_bound(&lin, &params, ap, &cfg).unwrap();
        assert!((r.b - b).norm() < 1e-8);
        assert!(r.claim.unwrap().identically_zero);
        let params = ConeParams::new(0.5, 0.4).unwrap();
        let (v, _) = manufactured(0.4, ap, 300);
        let fld = v.map(|val, z| val - z.norm().powf(0.8));
        assert!(first_derivative_bound(&fld, &params, ap, &cfg).unwrap().pass);
    }

    #[test]
    fn dichotomy_boundary_rejected() {
        let beta = 0.4;
        let params = ConeParams::new(0.9, beta).unwrap();
        let ap = (1.0 - 2.0 * beta) / beta;
        let g = disc(beta, 100, |_| C64::new(0.0, 0.0));
        assert!(extract_expansion(&g, &g, &params, ap).is_err());
        assert!(extract_expansion(&g, &g, &params, 0.95).is_err());
    }

    #[test]
    fn end_to_end_rough_source() {
        let beta = 0.6;
        let alpha = 0.5;
        let params = ConeParams::new(alpha, beta).unwrap();
        let phase = 0.83;
        let ft = disc(beta, 400, move |z| {
            let x = z * z.norm().powf(beta - 1.0);
            C64::new(x.norm().powf(alpha) * (1.0 + 0.3 * (x.arg() + phase).cos()), 0.0)
        });
        let f = ft.map(|v, _| v / (beta * beta));
        let v = solve_poisson(&f, beta, &boundary_from_fn(&f, |_| C64::new(0.0, 0.0)).unwrap()).unwrap();
        let e = extract_expansion(&v, &ft, &params, 0.9 * alpha).unwrap();
        assert!(e.decay.pass(), "{:?}", e.decay);
    }

    #[test]
    fn flattening_equivariance() {
        use crate::cone_charts::{pullback_grid, ChartMap};
        let beta = 0.6;
        let f = disc(beta, 300, |z| C64::new(1.0 + z.re, 0.0));
        let v = solve_poisson(&f, beta, &boundary_from_fn(&f, |_| C64::new(0.0, 0.0)).unwrap()).unwrap();
        for chart in ChartMap::all(beta).unwrap() {
            let vw = pullback_grid(&v, &chart).unwrap();
            let fw = pullback_grid(&f, &chart).unwrap();
            let lap = vw.dd_bar().unwrap();
            let na = vw.n_angles();
            for ir in 100..250 {
                for ia in 2..na - 2 {
                    let i = vw.index(ir, ia);
                    assert!((lap[i] - fw.values[i]).norm() < 5e-3, "{} {}", lap[i], fw.values[i]);
                }
            }
        }
    }

    #[test]
    fn tangential_spectral_solve() {
        let beta = 0.6;
        let tbox = TangentialBox { points: 8, length: 2.0 };
        let k = 2.0 * std::f64::consts::PI / tbox.length;
        let mut fs = Vec::new();
        let mut bs = Vec::new();
        for t in 0..tbox.len() {
            let x = tbox.point(t).re;
            let c = (k * x).cos();
            let f = disc(beta, 300, move |z| {
                C64::new(1.0 + 0.5 * c - 0.5 * k * k / 4.0 * c * z.norm().powf(2.0 * beta), 0.0)
            });
            bs.push(boundary_from_fn(&f, move |_| C64::new(1.0 + 0.5 * c, 0.0)).unwrap());
            fs.push(f);
        }
        let vs = solve_poisson_tangential(&fs, beta, &bs, &tbox).unwrap();
        for (t, v) in vs.iter().enumerate() {
            let c = (k * tbox.point(t).re).cos();
            let err = error(v, |z| C64::new(z.norm().powf(2.0 * beta) * (1.0 + 0.5 * c), 0.0));
            assert!(err < 1e-3, "{err}");
        }
    }
}
