//! Sampled Hölder seminorms and membership evidence for the weighted classes
//! `C_w^{0,α}` (pullbacks Hölder) and `D_w^{0,α}` (pulled-back complex Hessian
//! Hölder, mixed transverse entries vanishing on the divisor).
//!
//! Non-membership cannot be read off a single seminorm estimate, so every
//! report carries a shell trend: dyadic shells `2^{-j-1} r_max < |x_n| ≤ 2^{-j} r_max`
//! approaching the singular locus, with the largest difference quotient among
//! pairs drawn within and across adjacent shells. A field in `C^α` has bounded
//! shell quotients; a field behaving like `|x_n|^γ` with `γ < α` has shell
//! quotients growing like `r^{γ-α}`. The verdict reads the fitted growth
//! exponent of the innermost shells.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cone_charts::{pullback_grid, ChartMap, ConeParams};
use crate::error::{ConeError, Result};
use crate::grid::GridField;
use crate::numerics::{complex_hessian, linear_fit, CMat, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Stable,
    Inconclusive,
    Diverging,
}

impl Verdict {
    /// The worse of two verdicts.
    pub fn worst(self, other: Verdict) -> Verdict {
        self.max(other)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HolderConfig {
    /// Total pair budget for a single estimate.
    pub pair_budget: usize,
    /// Exhaustive scan when the sample count is at most this.
    pub exhaustive_limit: usize,
    /// Shell growth exponent above which the verdict is `diverging`.
    pub growth_tolerance: f64,
    /// Number of innermost shells used for the growth fit.
    pub tail_shells: usize,
    /// Growth factor between successive refinement levels flagged as divergence.
    pub refinement_growth_factor: f64,
    /// Shell quotients below this fraction of max |f| are treated as round-off.
    pub noise_floor: f64,
    pub seed: u64,
}

impl Default for HolderConfig {
    fn default() -> Self {
        HolderConfig {
            pair_budget: 400_000,
            exhaustive_limit: 10_000,
            growth_tolerance: 0.01,
            tail_shells: 6,
            refinement_growth_factor: 1.5,
            noise_floor: 1e-6,
            seed: 0x5eed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolderReport {
    pub alpha: f64,
    /// Largest sampled difference quotient (a lower bound of the seminorm).
    pub seminorm_estimate: f64,
    pub pair_count: usize,
    /// `(shell radius, shell quotient)` from the outside in.
    pub refinement_trend: Vec<(f64, f64)>,
    pub growth_exponent: Option<f64>,
    pub verdict: Verdict,
}

/// Scattered samples; the last coordinate of each point is the transverse one.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub points: Vec<Vec<C64>>,
    pub values: Vec<C64>,
    /// Structured near-neighbour pairs, always scanned.
    pub neighbor_pairs: Vec<(usize, usize)>,
    /// Per-sample round-off level (empty when unknown); differences within
    /// the combined level of a pair count as zero.
    pub noise: Vec<f64>,
}

impl SampleSet {
    pub fn new(points: Vec<Vec<C64>>, values: Vec<C64>) -> Result<Self> {
        if points.len() != values.len() {
            return Err(ConeError::Grid("points and values differ in length".into()));
        }
        Ok(SampleSet { points, values, neighbor_pairs: Vec::new(), noise: Vec::new() })
    }

    pub fn from_grid(field: &GridField) -> Self {
        SampleSet {
            points: field.points().into_iter().map(|p| vec![p]).collect(),
            values: field.values.clone(),
            neighbor_pairs: field.neighbor_pairs(),
            noise: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn radius(&self, i: usize) -> f64 {
        self.points[i].last().map(|z| z.norm()).unwrap_or(0.0)
    }
}

fn distance(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt()
}

fn quotient(s: &SampleSet, i: usize, j: usize, alpha: f64) -> f64 {
    let d = distance(&s.points[i], &s.points[j]);
    if d <= 0.0 {
        return 0.0;
    }
    let diff = (s.values[i] - s.values[j]).norm();
    if !s.noise.is_empty() && diff <= s.noise[i] + s.noise[j] {
        return 0.0;
    }
    diff / d.powf(alpha)
}

/// Largest difference quotient over an explicit pair list.
pub fn holder_quotient_max(samples: &SampleSet, pairs: &[(usize, usize)], alpha: f64) -> f64 {
    pairs
        .par_iter()
        .map(|&(i, j)| quotient(samples, i, j, alpha))
        .reduce(|| 0.0, f64::max)
}

fn exhaustive_max(samples: &SampleSet, idx: &[usize], alpha: f64) -> (f64, usize) {
    let best = (0..idx.len())
        .into_par_iter()
        .map(|a| {
            let mut m = 0.0f64;
            for b in a + 1..idx.len() {
                m = m.max(quotient(samples, idx[a], idx[b], alpha));
            }
            m
        })
        .reduce(|| 0.0, f64::max);
    (best, idx.len() * idx.len().saturating_sub(1) / 2)
}

fn random_max(samples: &SampleSet, idx: &[usize], alpha: f64, budget: usize, seed: u64) -> (f64, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs: Vec<(usize, usize)> = (0..budget)
        .map(|_| {
            let a = idx[rng.gen_range(0..idx.len())];
            let b = idx[rng.gen_range(0..idx.len())];
            (a, b)
        })
        .collect();
    (holder_quotient_max(samples, &pairs, alpha), pairs.len())
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(ConeError::Domain(format!("Hölder exponent {alpha} must lie in (0, 1)")))
    }
}

/// Estimate the α-Hölder seminorm of sampled values and classify the shell trend.
pub fn holder_seminorm(samples: &SampleSet, alpha: f64, cfg: &HolderConfig) -> Result<HolderReport> {
    check_alpha(alpha)?;
    let n = samples.len();
    if n < 2 {
        return Err(ConeError::Grid("need at least two samples".into()));
    }
    if samples.values.iter().any(|v| !v.is_finite()) {
        return Err(ConeError::Numerical("non-finite sample values".into()));
    }
    let all: Vec<usize> = (0..n).collect();
    let mut pair_count = 0usize;
    let mut estimate = holder_quotient_max(samples, &samples.neighbor_pairs, alpha);
    pair_count += samples.neighbor_pairs.len();
    let (global, count) = if n <= cfg.exhaustive_limit && n * (n - 1) / 2 <= cfg.pair_budget {
        exhaustive_max(samples, &all, alpha)
    } else {
        random_max(samples, &all, alpha, cfg.pair_budget / 2, cfg.seed)
    };
    estimate = estimate.max(global);
    pair_count += count;

    // Shell trend.
    let radii: Vec<f64> = (0..n).map(|i| samples.radius(i)).collect();
    let r_max = radii.iter().cloned().fold(0.0, f64::max);
    let positive_min = radii.iter().cloned().filter(|r| *r > 0.0).fold(f64::INFINITY, f64::min);
    let origin: Vec<usize> = (0..n).filter(|&i| radii[i] <= 0.0).collect();
    let mut trend = Vec::new();
    if r_max > 0.0 && positive_min.is_finite() {
        let shell_of = |r: f64| -> usize { ((r_max / r).log2().floor().max(0.0)) as usize };
        let n_shells = shell_of(positive_min) + 1;
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_shells];
        for i in 0..n {
            if radii[i] > 0.0 {
                members[shell_of(radii[i])].push(i);
            }
        }
        let mut neighbor_by_union: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n_shells];
        for &(a, b) in &samples.neighbor_pairs {
            if radii[a] > 0.0 && radii[b] > 0.0 {
                let (sa, sb) = (shell_of(radii[a]), shell_of(radii[b]));
                let j = sa.min(sb);
                if sa.abs_diff(sb) <= 1 {
                    neighbor_by_union[j].push((a, b));
                }
            }
        }
        let per_shell = (cfg.pair_budget / 2 / n_shells.max(1)).max(2_000);
        for j in 0..n_shells {
            let lower = r_max * 0.5f64.powi(j as i32 + 2);
            // Skip unions that reach below the sampled range.
            if origin.is_empty() && lower < positive_min * (1.0 - 1e-9) {
                break;
            }
            let mut idx: Vec<usize> = members[j].clone();
            if j + 1 < n_shells {
                idx.extend(&members[j + 1]);
            }
            idx.extend(&origin);
            if idx.len() < 2 {
                continue;
            }
            let (mut q, c) = if idx.len() * (idx.len() - 1) / 2 <= per_shell {
                exhaustive_max(samples, &idx, alpha)
            } else {
                random_max(samples, &idx, alpha, per_shell, cfg.seed.wrapping_add(j as u64 + 1))
            };
            q = q.max(holder_quotient_max(samples, &neighbor_by_union[j], alpha));
            pair_count += c + neighbor_by_union[j].len();
            estimate = estimate.max(q);
            trend.push((r_max * 0.5f64.powi(j as i32), q));
        }
    }

    let scale = samples.values.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let (growth_exponent, verdict) = classify(&trend, estimate, scale, cfg);
    Ok(HolderReport { alpha, seminorm_estimate: estimate, pair_count, refinement_trend: trend, growth_exponent, verdict })
}

fn classify(trend: &[(f64, f64)], estimate: f64, scale: f64, cfg: &HolderConfig) -> (Option<f64>, Verdict) {
    if !estimate.is_finite() {
        return (None, Verdict::Diverging);
    }
    if estimate == 0.0 {
        return (Some(0.0), Verdict::Stable);
    }
    let floor = (estimate * 1e-13).max(scale * cfg.noise_floor);
    let tail: Vec<(f64, f64)> = trend.iter().rev().take(cfg.tail_shells).rev().cloned().collect();
    if tail.len() < 3 {
        return (None, Verdict::Inconclusive);
    }
    if tail.iter().all(|(_, q)| *q <= floor) {
        return (Some(0.0), Verdict::Stable);
    }
    let x: Vec<f64> = tail.iter().map(|(r, _)| -r.ln()).collect();
    let y: Vec<f64> = tail.iter().map(|(_, q)| q.max(floor).ln()).collect();
    match linear_fit(&x, &y) {
        Ok(fit) if fit.slope > cfg.growth_tolerance => (Some(fit.slope), Verdict::Diverging),
        Ok(fit) => (Some(fit.slope), Verdict::Stable),
        Err(_) => (None, Verdict::Inconclusive),
    }
}

/// Combine reports of the same quantity at successive refinement levels.
pub fn refinement_verdict(levels: &[HolderReport], growth_factor: f64) -> Verdict {
    if levels.is_empty() {
        return Verdict::Inconclusive;
    }
    let worst = levels.iter().map(|r| r.verdict).fold(Verdict::Stable, Verdict::worst);
    if worst == Verdict::Diverging {
        return worst;
    }
    let growth = levels
        .windows(2)
        .filter(|w| w[1].seminorm_estimate > growth_factor * w[0].seminorm_estimate)
        .count();
    if levels.len() >= 3 && growth >= levels.len() - 1 {
        Verdict::Diverging
    } else {
        worst
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartReport {
    pub chart: u32,
    pub report: HolderReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MembershipReport {
    pub per_chart: Vec<ChartReport>,
    pub verdict: Verdict,
}

/// `C_w^{0,α}` evidence for a periodic z-chart grid field.
pub fn cw_membership(f: &GridField, params: &ConeParams, cfg: &HolderConfig) -> Result<MembershipReport> {
    let mut per_chart = Vec::new();
    let mut verdict = Verdict::Stable;
    for chart in ChartMap::all(params.beta)? {
        let pulled = pullback_grid(f, &chart)?;
        let report = holder_seminorm(&SampleSet::from_grid(&pulled), params.alpha, cfg)?;
        verdict = verdict.worst(report.verdict);
        per_chart.push(ChartReport { chart: chart.k, report });
    }
    Ok(MembershipReport { per_chart, verdict })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HessianEntryReport {
    pub i: usize,
    pub j: usize,
    pub report: HolderReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryFit {
    pub i: usize,
    pub j: usize,
    /// Modulus of the ray-extrapolated value at w_n = 0 (worst ray).
    pub value_at_zero: f64,
    /// Spread of the extrapolated values across rays.
    pub residual: f64,
    pub tolerance: f64,
    pub vanishes: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartHessianReport {
    pub chart: u32,
    pub entries: Vec<HessianEntryReport>,
    pub boundary_vanishing: Vec<BoundaryFit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixedHessianReport {
    pub per_chart: Vec<ChartHessianReport>,
    pub verdict: Verdict,
}

/// `D_w^{0,α}` evidence for a transverse (n = 1) z-chart grid field.
///
/// For n = 1 the only Hessian entry is f_{nn̄} and the vanishing condition on
/// mixed entries is vacuous.
pub fn dw_membership(f: &GridField, params: &ConeParams, cfg: &HolderConfig) -> Result<MixedHessianReport> {
    let mut per_chart = Vec::new();
    let mut verdict = Verdict::Stable;
    for chart in ChartMap::all(params.beta)? {
        let pulled = pullback_grid(f, &chart)?;
        let hess = pulled.with_values(pulled.dd_bar()?)?;
        // Drop two rows at each radial end where the stencil is one-sided.
        let trimmed = trim_radial(&hess, 2)?;
        let report = holder_seminorm(&SampleSet::from_grid(&trimmed), params.alpha, cfg)?;
        verdict = verdict.worst(report.verdict);
        per_chart.push(ChartHessianReport {
            chart: chart.k,
            entries: vec![HessianEntryReport { i: 0, j: 0, report }],
            boundary_vanishing: Vec::new(),
        });
    }
    Ok(MixedHessianReport { per_chart, verdict })
}

fn trim_radial(g: &GridField, k: usize) -> Result<GridField> {
    let nr = g.n_radii();
    if nr <= 2 * k + 2 {
        return Ok(g.clone());
    }
    let na = g.n_angles();
    let values = g.values[k * na..(nr - k) * na].to_vec();
    GridField::new(g.chart, g.beta, g.radii[k..nr - k].to_vec(), g.angles.clone(), g.periodic, values)
}

/// Sampling plan for function-valued membership tests in w-charts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectorPlan {
    /// Tangential coordinates (each of length n − 1).
    pub tangential: Vec<Vec<C64>>,
    pub r_min: f64,
    pub r_max: f64,
    pub n_radii: usize,
    pub n_angles: usize,
    /// Finite-difference step cap; the step is also kept below |w_n|/4.
    pub fd_step: f64,
}

impl SectorPlan {
    pub fn transverse(r_min: f64, r_max: f64, n_radii: usize, n_angles: usize) -> Self {
        SectorPlan { tangential: vec![Vec::new()], r_min, r_max, n_radii, n_angles, fd_step: 1e-3 }
    }

    pub fn dim(&self) -> usize {
        self.tangential.first().map(|t| t.len()).unwrap_or(0) + 1
    }

    /// Sample points of the chart sector plus structured neighbour pairs.
    pub fn points(&self, chart: &ChartMap) -> (Vec<Vec<C64>>, Vec<(usize, usize)>) {
        let radii = crate::numerics::log_space(self.r_min, self.r_max, self.n_radii);
        // Stay strictly inside the sector so stencils keep the branch.
        let inner = chart.half_width * 0.9;
        let na = self.n_angles.max(2);
        let angles: Vec<f64> =
            (0..na).map(|a| chart.center - inner + 2.0 * inner * a as f64 / (na - 1) as f64).collect();
        let mut pts = Vec::new();
        let mut pairs = Vec::new();
        let block = radii.len() * angles.len();
        for (t, tang) in self.tangential.iter().enumerate() {
            for (ir, r) in radii.iter().enumerate() {
                for (ia, a) in angles.iter().enumerate() {
                    let mut p = tang.clone();
                    p.push(C64::from_polar(*r, *a));
                    let i = pts.len();
                    pts.push(p);
                    if ir + 1 < radii.len() {
                        pairs.push((i, i + angles.len()));
                    }
                    if ia + 1 < angles.len() {
                        pairs.push((i, i + 1));
                    }
                    if t + 1 < self.tangential.len() {
                        pairs.push((i, i + block));
                    }
                }
            }
        }
        (pts, pairs)
    }

    pub fn step_at(&self, w: &[C64]) -> f64 {
        self.fd_step.min(0.25 * w.last().map(|z| z.norm()).unwrap_or(1.0))
    }
}

/// `C_w^{0,α}` evidence for a function given in z-coordinates.
pub fn cw_membership_fn(
    f: &(dyn Fn(&[C64]) -> C64 + Sync),
    params: &ConeParams,
    plan: &SectorPlan,
    cfg: &HolderConfig,
) -> Result<MembershipReport> {
    let mut per_chart = Vec::new();
    let mut verdict = Verdict::Stable;
    for chart in ChartMap::all(params.beta)? {
        let (pts, pairs) = plan.points(&chart);
        let values: Vec<C64> = pts.par_iter().map(|w| f(&chart.psi_complex(w))).collect();
        let samples = SampleSet { points: pts, values, neighbor_pairs: pairs, noise: Vec::new() };
        let report = holder_seminorm(&samples, params.alpha, cfg)?;
        verdict = verdict.worst(report.verdict);
        per_chart.push(ChartReport { chart: chart.k, report });
    }
    Ok(MembershipReport { per_chart, verdict })
}

/// Complex Hessian of `f ∘ ψ_k` at a w-point.
pub fn pulled_hessian(f: &(dyn Fn(&[C64]) -> C64 + Sync), chart: &ChartMap, w: &[C64], h: f64) -> CMat {
    let g = |q: &[C64]| f(&chart.psi_complex(q));
    complex_hessian(&g, w, h)
}

/// `D_w^{0,α}` evidence for a function given in z-coordinates (any n).
pub fn dw_membership_fn(
    f: &(dyn Fn(&[C64]) -> C64 + Sync),
    params: &ConeParams,
    plan: &SectorPlan,
    cfg: &HolderConfig,
) -> Result<MixedHessianReport> {
    let n = plan.dim();
    let mut per_chart = Vec::new();
    let mut verdict = Verdict::Stable;
    for chart in ChartMap::all(params.beta)? {
        let (pts, pairs) = plan.points(&chart);
        let hessians: Vec<CMat> =
            pts.par_iter().map(|w| pulled_hessian(f, &chart, w, plan.step_at(w))).collect();
        // Round-off of the second-difference stencils.
        let noise: Vec<f64> = pts
            .par_iter()
            .map(|w| {
                let h = plan.step_at(w);
                64.0 * f64::EPSILON * f(&chart.psi_complex(w)).norm() / (h * h)
            })
            .collect();
        let mut entries = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let values: Vec<C64> = hessians.iter().map(|h| h[(i, j)]).collect();
                let samples =
                    SampleSet { points: pts.clone(), values, neighbor_pairs: pairs.clone(), noise: noise.clone() };
                let report = holder_seminorm(&samples, params.alpha, cfg)?;
                verdict = verdict.worst(report.verdict);
                entries.push(HessianEntryReport { i, j, report });
            }
        }
        let mut boundary_vanishing = Vec::new();
        for i in 0..n - 1 {
            for (a, b) in [(i, n - 1), (n - 1, i)] {
                let fit = extrapolate_entry(&pts, &hessians, a, b, plan, params.alpha);
                if !fit.vanishes {
                    verdict = verdict.worst(Verdict::Diverging);
                }
                boundary_vanishing.push(fit);
            }
        }
        per_chart.push(ChartHessianReport { chart: chart.k, entries, boundary_vanishing });
    }
    Ok(MixedHessianReport { per_chart, verdict })
}

fn extrapolate_entry(pts: &[Vec<C64>], hess: &[CMat], a: usize, b: usize, plan: &SectorPlan, alpha: f64) -> BoundaryFit {
    // Rays: fixed tangential point and angle; the two innermost radii.
    let na = plan.n_angles.max(2);
    let block = plan.n_radii * na;
    let mut values = Vec::new();
    for t in 0..plan.tangential.len() {
        for ia in 0..na {
            let i0 = t * block + ia;
            let i1 = i0 + na;
            if i1 >= pts.len() {
                continue;
            }
            let r0 = pts[i0].last().map(|z| z.norm()).unwrap_or(0.0);
            let r1 = pts[i1].last().map(|z| z.norm()).unwrap_or(0.0);
            values.push(crate::numerics::extrapolate_to_zero(r0, hess[i0][(a, b)], r1, hess[i1][(a, b)]));
        }
    }
    let worst = values.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let mean = values.iter().sum::<C64>() / values.len().max(1) as f64;
    let residual = values.iter().map(|v| (v - mean).norm()).fold(0.0, f64::max);
    let tolerance = 10.0 * plan.r_min.powf(alpha);
    BoundaryFit { i: a, j: b, value_at_zero: worst, residual, tolerance, vanishes: worst <= tolerance }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseDirection {
    /// Multiply by w/|w|.
    W,
    /// Multiply by w̄/|w|.
    ConjW,
}

/// g = f·w/|w| (or w̄/|w|) with g = 0 where w = 0.
///
/// `f` must vanish on {w = 0}; this is checked by extrapolating the innermost
/// two samples along each structured ray when no sample sits on the locus.
pub fn phase_multiply(f: &SampleSet, direction: PhaseDirection, alpha: f64) -> Result<SampleSet> {
    check_alpha(alpha)?;
    let radii: Vec<f64> = (0..f.len()).map(|i| f.radius(i)).collect();
    let scale = f.values.iter().map(|v| v.norm()).fold(0.0, f64::max).max(1e-300);
    let on_locus: Vec<usize> = (0..f.len()).filter(|&i| radii[i] == 0.0).collect();
    if !on_locus.is_empty() {
        if on_locus.iter().any(|&i| f.values[i].norm() > 1e-12 * scale) {
            return Err(ConeError::Domain("f does not vanish at w = 0".into()));
        }
    } else {
        let r_min = radii.iter().cloned().fold(f64::INFINITY, f64::min);
        let inner: Vec<usize> = (0..f.len()).filter(|&i| radii[i] <= r_min * (1.0 + 1e-9)).collect();
        let tol = 10.0 * r_min.powf(alpha) * scale.max(1.0);
        for &i in &inner {
            // Innermost value bounds |f(·,0)| up to the Hölder modulus.
            if f.values[i].norm() > tol {
                return Err(ConeError::Domain(format!(
                    "f does not vanish at w = 0: |f| = {} at radius {r_min}",
                    f.values[i].norm()
                )));
            }
        }
    }
    let values = f
        .points
        .iter()
        .zip(&f.values)
        .map(|(p, v)| {
            let w = *p.last().expect("non-empty point");
            if w.norm() == 0.0 {
                C64::new(0.0, 0.0)
            } else {
                let ph = w / w.norm();
                v * match direction {
                    PhaseDirection::W => ph,
                    PhaseDirection::ConjW => ph.conj(),
                }
            }
        })
        .collect();
    Ok(SampleSet { points: f.points.clone(), values, neighbor_pairs: f.neighbor_pairs.clone(), noise: Vec::new() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseBoundReport {
    pub alpha: f64,
    pub pairs_checked: usize,
    /// Sampled seminorm of f, including pairs with the locus point (x', 0).
    pub seminorm_f: f64,
    pub seminorm_g: f64,
    pub violations: usize,
    /// max |g(p) − g(q)| / (S_f |p − q|^α); the lemma bounds it by 3.
    pub max_ratio: f64,
}

/// Pairwise check of |g(p) − g(q)| ≤ 3·S_f·|p − q|^α on sampled pairs.
pub fn phase_bound_check(f: &SampleSet, g: &SampleSet, alpha: f64, pairs: usize, seed: u64) -> Result<PhaseBoundReport> {
    check_alpha(alpha)?;
    let n = f.len();
    if n < 2 || g.len() != n {
        return Err(ConeError::Grid("phase check needs matching sample sets".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut list: Vec<(usize, usize)> = f.neighbor_pairs.clone();
    while list.len() < pairs {
        let a = rng.gen_range(0..n);
        let b = rng.gen_range(0..n);
        if a != b {
            list.push((a, b));
        }
    }
    // |f(x)| / |w|^α is the quotient against the locus point (x', 0), where f = 0.
    let locus = f
        .points
        .par_iter()
        .zip(&f.values)
        .map(|(p, v)| {
            let r = p.last().map(|z| z.norm()).unwrap_or(0.0);
            if r > 0.0 {
                v.norm() / r.powf(alpha)
            } else {
                0.0
            }
        })
        .reduce(|| 0.0, f64::max);
    let s_f = holder_quotient_max(f, &list, alpha).max(locus);
    let s_g = holder_quotient_max(g, &list, alpha);
    let (violations, max_ratio) = list
        .par_iter()
        .map(|&(a, b)| {
            let d = distance(&f.points[a], &f.points[b]);
            if d == 0.0 {
                return (0usize, 0.0);
            }
            let lhs = (g.values[a] - g.values[b]).norm();
            let bound = 3.0 * s_f * d.powf(alpha);
            let ratio = if s_f > 0.0 { lhs / (s_f * d.powf(alpha)) } else if lhs > 0.0 { f64::INFINITY } else { 0.0 };
            ((lhs > bound * (1.0 + 1e-12) + 1e-300) as usize, ratio)
        })
        .reduce(|| (0, 0.0), |x, y| (x.0 + y.0, x.1.max(y.1)));
    Ok(PhaseBoundReport { alpha, pairs_checked: list.len(), seminorm_f: s_f, seminorm_g: s_g, violations, max_ratio })
}

/// φ(re^{it}) = (2 − 2cos t) / (r² − 2r cos t + 1)^α.
pub fn phi_function(r: f64, t: f64, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if r < 0.0 {
        return Err(ConeError::Domain("r must be non-negative".into()));
    }
    let c = t.cos();
    let denom = r * r - 2.0 * r * c + 1.0;
    if denom <= 0.0 {
        return Err(ConeError::Singular("φ has a pole at re^{it} = 1".into()));
    }
    Ok((2.0 - 2.0 * c) / denom.powf(alpha))
}

/// The bound 2(1 − cos t)^{1−α}/(1 + cos t)^α valid when cos t > 0.
pub fn phi_positive_cos_bound(t: f64, alpha: f64) -> f64 {
    let c = t.cos();
    2.0 * (1.0 - c).powf(1.0 - alpha) / (1.0 + c).powf(alpha)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhiScan {
    pub points: usize,
    pub max: f64,
    pub argmax: (f64, f64, f64),
    /// Points where the cos t > 0 bound was checked, and its worst slack.
    pub positive_cos_checked: usize,
    pub positive_cos_violations: usize,
}

/// Brute-force scan of φ over log-spaced r, uniform t ∈ [0, π] and the given exponents.
pub fn phi_scan(r_lo: f64, r_hi: f64, n_r: usize, n_t: usize, alphas: &[f64]) -> Result<PhiScan> {
    let rs = crate::numerics::log_space(r_lo, r_hi, n_r);
    let ts: Vec<f64> = (0..n_t).map(|k| std::f64::consts::PI * k as f64 / (n_t - 1) as f64).collect();
    let mut scan = PhiScan {
        points: 0,
        max: f64::NEG_INFINITY,
        argmax: (0.0, 0.0, 0.0),
        positive_cos_checked: 0,
        positive_cos_violations: 0,
    };
    for &a in alphas {
        for &r in &rs {
            for &t in &ts {
                let Ok(v) = phi_function(r, t, a) else { continue };
                scan.points += 1;
                if v > scan.max {
                    scan.max = v;
                    scan.argmax = (r, t, a);
                }
                if t.cos() > 0.0 {
                    scan.positive_cos_checked += 1;
                    if v > phi_positive_cos_bound(t, a) * (1.0 + 1e-12) {
                        scan.positive_cos_violations += 1;
                    }
                }
            }
        }
    }
    Ok(scan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn line(n: usize, f: impl Fn(f64) -> f64) -> SampleSet {
        let xs: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        SampleSet {
            points: xs.iter().map(|x| vec![C64::new(*x, 0.0)]).collect(),
            values: xs.iter().map(|x| C64::new(f(*x), 0.0)).collect(),
            neighbor_pairs: (0..n - 1).map(|i| (i, i + 1)).collect(),
            noise: Vec::new(),
        }
    }

    #[test]
    fn identity_on_unit_interval() {
        let cfg = HolderConfig::default();
        let mut prev = 0.0;
        for n in [11, 101, 1001] {
            let r = holder_seminorm(&line(n, |x| x), 0.5, &cfg).unwrap();
            assert!(r.seminorm_estimate <= 1.0 + 1e-12);
            assert!(r.seminorm_estimate >= prev);
            prev = r.seminorm_estimate;
            assert_eq!(r.verdict, Verdict::Stable);
        }
        assert!((prev - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_is_zero() {
        let r = holder_seminorm(&line(50, |_| 3.0), 0.4, &HolderConfig::default()).unwrap();
        assert_eq!(r.seminorm_estimate, 0.0);
        assert_eq!(r.verdict, Verdict::Stable);
    }

    #[test]
    fn rough_power_diverges() {
        // |x|^0.3 at α = 0.5: quotients near 0 scale like r^{-0.2}
        let oracle = |h: f64| h.powf(0.3) / h.powf(0.5);
        assert!(oracle(1e-6) > oracle(1e-3) && oracle(1e-3) > oracle(1.0));
        let r = holder_seminorm(&line(2001, |x| x.powf(0.3)), 0.5, &HolderConfig::default()).unwrap();
        assert_eq!(r.verdict, Verdict::Diverging);
        assert!((r.growth_exponent.unwrap() - 0.2).abs() < 0.05);
    }

    #[test]
    fn errors() {
        let cfg = HolderConfig::default();
        assert!(holder_seminorm(&line(2, |x| x), 1.0, &cfg).is_err());
        let empty = SampleSet::new(vec![], vec![]).unwrap();
        assert!(holder_seminorm(&empty, 0.5, &cfg).is_err());
    }

    fn zgrid(beta: f64, f: impl Fn(C64) -> C64) -> GridField {
        GridField::disc(beta, 1e-4, 1.0, 140, 96, f).unwrap()
    }

    #[test]
    fn cw_examples() {
        let cfg = HolderConfig::default();
        let b = 0.75;
        let p = ConeParams::new(0.3, b).unwrap();
        let r = cw_membership(&zgrid(b, |z| C64::new(z.norm().powf(2.0 * b), 0.0)), &p, &cfg).unwrap();
        assert_eq!(r.verdict, Verdict::Stable);
        let rough = zgrid(b, |z| C64::new(z.norm().powf(2.0 - 2.0 * b), 0.0));
        // exponent comparison oracle: (2 − 2β)/β = 2/3
        assert!((2.0 - 2.0 * b) / b > 0.3 && (2.0 - 2.0 * b) / b < 0.7);
        assert_eq!(cw_membership(&rough, &p, &cfg).unwrap().verdict, Verdict::Stable);
        let p7 = ConeParams { alpha: 0.7, beta: b };
        assert_eq!(cw_membership(&rough, &p7, &cfg).unwrap().verdict, Verdict::Diverging);
        let re = zgrid(b, |z| C64::new(z.re, 0.0));
        assert_eq!(cw_membership(&re, &p, &cfg).unwrap().verdict, Verdict::Stable);
    }

    #[test]
    fn dw_examples() {
        let cfg = HolderConfig::default();
        let b = 0.75;
        let p = ConeParams::new(0.3, b).unwrap();
        let model = zgrid(b, |z| C64::new(2.0 * z.norm().powf(2.0 * b) + 1.5, 0.0));
        let r = dw_membership(&model, &p, &cfg).unwrap();
        assert_eq!(r.verdict, Verdict::Stable);
        let rough = zgrid(b, |z| C64::new(z.norm().powf(2.0 - 2.0 * b), 0.0));
        assert_eq!(dw_membership(&rough, &p, &cfg).unwrap().verdict, Verdict::Diverging);
    }

    #[test]
    fn dw_function_two_dimensional() {
        let cfg = HolderConfig { pair_budget: 100_000, ..HolderConfig::default() };
        let b = 0.6;
        let p = ConeParams::new(0.3, b).unwrap();
        let tang: Vec<Vec<C64>> = (0..3).map(|k| vec![C64::new(0.1 * k as f64, 0.05)]).collect();
        let plan = SectorPlan { tangential: tang, r_min: 1e-3, r_max: 0.5, n_radii: 24, n_angles: 7, fd_step: 1e-3 };
        let good = |z: &[C64]| C64::new(z[0].norm_sqr() + z[1].norm().powf(2.0 * b) * (1.0 + z[0].norm_sqr()), 0.0);
        let r = dw_membership_fn(&good, &p, &plan, &cfg).unwrap();
        assert_eq!(r.verdict, Verdict::Stable, "{:?}", r.per_chart[0].boundary_vanishing);
        // |z_1|² |z_2|^{2β}… has mixed entries ∝ |w_2|-smooth vanishing at 0; a
        // mixed term Re(z̄_1 |z_2|^{β} ...) with non-vanishing f_12 fails.
        let bad = |z: &[C64]| C64::new((z[0].conj() * z[1].norm().powf(b) * C64::from_polar(1.0, z[1].arg())).re, 0.0);
        let r = dw_membership_fn(&bad, &p, &plan, &cfg).unwrap();
        assert_eq!(r.verdict, Verdict::Diverging);
    }

    fn polar_set(f: impl Fn(C64) -> C64) -> SampleSet {
        let g = GridField::disc(0.5, 1e-4, 1.0, 60, 48, f).unwrap();
        SampleSet::from_grid(&g)
    }

    #[test]
    fn phase_lemma_examples() {
        let f = polar_set(|w| C64::new(w.norm().sqrt(), 0.0));
        let g = phase_multiply(&f, PhaseDirection::W, 0.5).unwrap();
        let rep = phase_bound_check(&f, &g, 0.5, 20_000, 3).unwrap();
        assert_eq!(rep.violations, 0);
        assert!(rep.max_ratio <= 3.0);
        let zero = polar_set(|_| C64::new(0.0, 0.0));
        let g0 = phase_multiply(&zero, PhaseDirection::ConjW, 0.5).unwrap();
        assert!(g0.values.iter().all(|v| v.norm() == 0.0));
        let f = polar_set(|w| C64::new(w.re, 0.0));
        let g = phase_multiply(&f, PhaseDirection::ConjW, 0.9).unwrap();
        assert_eq!(phase_bound_check(&f, &g, 0.9, 20_000, 4).unwrap().violations, 0);
        let bad = polar_set(|_| C64::new(1.0, 0.0));
        assert!(phase_multiply(&bad, PhaseDirection::W, 0.5).is_err());
    }

    #[test]
    fn phi_values() {
        assert!((phi_function(1.0, std::f64::consts::PI, 0.5).unwrap() - 2.0).abs() < 1e-14);
        for a in [0.1, 0.3, 0.7] {
            let v = phi_function(1.0, std::f64::consts::PI, a).unwrap();
            assert!((v - 4.0 / 4f64.powf(a)).abs() < 1e-13);
        }
        assert!(phi_function(1.0, 0.0, 0.5).is_err());
        assert!(phi_function(0.5, 0.3, 1.5).is_err());
        let s = phi_scan(1e-4, 10.0, 120, 120, &[0.1, 0.5, 0.9]).unwrap();
        assert!(s.max <= 4.0 && s.max >= 3.99);
        assert_eq!(s.positive_cos_violations, 0);
    }

    proptest! {
        #[test]
        fn estimate_monotone_in_pairs(vals in proptest::collection::vec(-5.0f64..5.0, 12),
                                      extra in proptest::collection::vec((0usize..12, 0usize..12), 1..20),
                                      alpha in 0.05f64..0.95) {
            let s = SampleSet {
                points: (0..12).map(|i| vec![C64::new(i as f64 * 0.37, (i * i) as f64 * 0.01)]).collect(),
                values: vals.iter().map(|v| C64::new(*v, 0.0)).collect(),
                neighbor_pairs: vec![],
                noise: Vec::new(),
            };
            let base: Vec<(usize, usize)> = (0..11).map(|i| (i, i + 1)).collect();
            let mut more = base.clone();
            more.extend(extra);
            prop_assert!(holder_quotient_max(&s, &base, alpha) <= holder_quotient_max(&s, &more, alpha));
        }

        #[test]
        fn phi_never_exceeds_four(r in 0.0f64..50.0, t in 0.0f64..std::f64::consts::PI, a in 0.01f64..0.99) {
            if let Ok(v) = phi_function(r, t, a) {
                prop_assert!(v <= 4.0 + 1e-12);
            }
        }
    }
}
