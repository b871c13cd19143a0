//! Fractional-power charts around the divisor, the model cone metric and the
//! model cone Laplacian.
//!
//! Chart `k` maps `w ↦ z = (w_1, …, w_{n-1}, w_n^{1/β})` on the sector
//! `|arg w_n − kβπ/(1+β)| < βπ/(1+β)`. The transverse argument is carried as an
//! unreduced real number so `w_n^{1/β}` is single valued on each sector.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{ConeError, Result};
use crate::grid::{ChartTag, GridField};
use crate::numerics::{CMat, C64};

/// Slack allowed when testing sector membership, so closures of sectors count.
const SECTOR_SLACK: f64 = 1e-12;

/// Hölder exponent and cone angle parameter (cone angle 2πβ).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConeParams {
    pub alpha: f64,
    pub beta: f64,
}

impl ConeParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        check_beta(beta)?;
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(ConeError::Domain(format!("alpha = {alpha} must lie in (0, 1)")));
        }
        if alpha >= 1.0 / beta - 1.0 {
            return Err(ConeError::Domain(format!(
                "alpha = {alpha} violates alpha < 1/beta - 1 = {}",
                1.0 / beta - 1.0
            )));
        }
        Ok(ConeParams { alpha, beta })
    }
}

pub fn check_beta(beta: f64) -> Result<()> {
    if beta > 0.0 && beta < 1.0 {
        Ok(())
    } else {
        Err(ConeError::Domain(format!("beta = {beta} must lie in (0, 1)")))
    }
}

/// Chart indices: positive integers below 2 + 2β.
pub fn chart_index_set(beta: f64) -> Result<Vec<u32>> {
    check_beta(beta)?;
    Ok((1..).take_while(|&k| (k as f64) < 2.0 + 2.0 * beta).collect())
}

/// A point in w-coordinates; the last coordinate is stored in polar form.
#[derive(Debug, Clone, PartialEq)]
pub struct WPoint {
    pub tangential: Vec<C64>,
    pub modulus: f64,
    /// Unreduced argument of w_n.
    pub arg: f64,
}

impl WPoint {
    pub fn transverse(modulus: f64, arg: f64) -> Self {
        WPoint { tangential: Vec::new(), modulus, arg }
    }

    pub fn to_complex(&self) -> Vec<C64> {
        let mut v = self.tangential.clone();
        v.push(C64::from_polar(self.modulus, self.arg));
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZPoint {
    pub coords: Vec<C64>,
}

impl ZPoint {
    pub fn transverse(z: C64) -> Self {
        ZPoint { coords: vec![z] }
    }

    pub fn last(&self) -> C64 {
        *self.coords.last().expect("non-empty point")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChartMap {
    pub k: u32,
    pub beta: f64,
    /// Center of the sector for arg(w_n).
    pub center: f64,
    pub half_width: f64,
}

impl ChartMap {
    pub fn new(k: u32, beta: f64) -> Result<Self> {
        let ks = chart_index_set(beta)?;
        if !ks.contains(&k) {
            return Err(ConeError::Domain(format!("chart {k} not in index set {ks:?}")));
        }
        Ok(ChartMap {
            k,
            beta,
            center: k as f64 * beta * PI / (1.0 + beta),
            half_width: beta * PI / (1.0 + beta),
        })
    }

    pub fn all(beta: f64) -> Result<Vec<ChartMap>> {
        chart_index_set(beta)?.into_iter().map(|k| ChartMap::new(k, beta)).collect()
    }

    pub fn contains_arg(&self, arg: f64) -> bool {
        (arg - self.center).abs() <= self.half_width + SECTOR_SLACK
    }

    /// Interval of arg(z_n) covered by this chart (lifted, not reduced).
    pub fn z_arg_interval(&self) -> (f64, f64) {
        ((self.center - self.half_width) / self.beta, (self.center + self.half_width) / self.beta)
    }

    fn check_w(&self, w: &WPoint) -> Result<()> {
        if w.modulus <= 0.0 {
            return Err(ConeError::Singular("w_n = 0".into()));
        }
        if !self.contains_arg(w.arg) {
            return Err(ConeError::OutsideSector(format!(
                "arg {} outside chart {} sector {}±{}",
                w.arg, self.k, self.center, self.half_width
            )));
        }
        Ok(())
    }

    pub fn psi(&self, w: &WPoint) -> Result<ZPoint> {
        self.check_w(w)?;
        let mut coords = w.tangential.clone();
        coords.push(C64::from_polar(w.modulus.powf(1.0 / self.beta), w.arg / self.beta));
        Ok(ZPoint { coords })
    }

    pub fn psi_inverse(&self, z: &ZPoint) -> Result<WPoint> {
        let zn = z.last();
        let rho = zn.norm();
        if rho <= 0.0 {
            return Err(ConeError::Singular("z_n = 0".into()));
        }
        let (lo, hi) = self.z_arg_interval();
        let base = zn.arg();
        let mid = 0.5 * (lo + hi);
        let lifted = base + 2.0 * PI * ((mid - base) / (2.0 * PI)).round();
        if lifted < lo - SECTOR_SLACK || lifted > hi + SECTOR_SLACK {
            return Err(ConeError::OutsideSector(format!("arg z_n = {base} not covered by chart {}", self.k)));
        }
        Ok(WPoint {
            tangential: z.coords[..z.coords.len() - 1].to_vec(),
            modulus: rho.powf(self.beta),
            arg: lifted * self.beta,
        })
    }

    /// Continuous determination of arg w_n near the sector (for stencils).
    pub fn local_arg(&self, wn: C64) -> f64 {
        self.center + (wn * C64::from_polar(1.0, -self.center)).arg()
    }

    /// ψ on plain complex coordinates, branch fixed by the sector center.
    pub fn psi_complex(&self, w: &[C64]) -> Vec<C64> {
        let n = w.len();
        let mut z = w.to_vec();
        let wn = w[n - 1];
        z[n - 1] = C64::from_polar(wn.norm().powf(1.0 / self.beta), self.local_arg(wn) / self.beta);
        z
    }

    /// dz_n/dw_n = β⁻¹ w_n^{1/β − 1}.
    pub fn jacobian(&self, w: &WPoint) -> C64 {
        C64::from_polar(w.modulus.powf(1.0 / self.beta - 1.0), w.arg * (1.0 / self.beta - 1.0)) / self.beta
    }

    fn jacobian_complex(&self, w: &[C64]) -> C64 {
        let wn = w[w.len() - 1];
        let arg = self.local_arg(wn);
        C64::from_polar(wn.norm().powf(1.0 / self.beta - 1.0), arg * (1.0 / self.beta - 1.0)) / self.beta
    }

    /// Transform z-chart metric coefficients g_{μν̄} to the w-chart: J* g J.
    pub fn pull_metric(&self, w: &[C64], g_z: &CMat) -> CMat {
        let n = w.len();
        let j = self.jacobian_complex(w);
        CMat::from_fn(n, n, |a, b| {
            let ja = if a == n - 1 { j } else { C64::new(1.0, 0.0) };
            let jb = if b == n - 1 { j } else { C64::new(1.0, 0.0) };
            g_z[(a, b)] * ja * jb.conj()
        })
    }

    /// Random points in the (closed) sector with |w_n| in [r_lo, r_hi].
    pub fn sample_sector(&self, rng: &mut impl rand::Rng, count: usize, r_lo: f64, r_hi: f64) -> Vec<WPoint> {
        (0..count)
            .map(|_| {
                let m = (r_lo.ln() + rng.gen::<f64>() * (r_hi / r_lo).ln()).exp();
                let a = self.center + (2.0 * rng.gen::<f64>() - 1.0) * self.half_width;
                WPoint::transverse(m, a)
            })
            .collect()
    }
}

/// diag(1, …, 1, β²|z_n|^{2β−2}).
pub fn model_metric(z: &ZPoint, beta: f64) -> Result<CMat> {
    check_beta(beta)?;
    let rho = z.last().norm();
    if rho <= 0.0 {
        return Err(ConeError::Singular("model metric is singular at z_n = 0".into()));
    }
    let n = z.coords.len();
    let mut g = CMat::identity(n, n);
    g[(n - 1, n - 1)] = C64::new(beta * beta * rho.powf(2.0 * beta - 2.0), 0.0);
    Ok(g)
}

/// Pullback of the model metric through chart `chart` at `w`.
pub fn pullback_model_metric(chart: &ChartMap, w: &WPoint) -> Result<CMat> {
    let z = chart.psi(w)?;
    let g = model_metric(&z, chart.beta)?;
    Ok(chart.pull_metric(&w.to_complex(), &g))
}

/// Δ_β v on a z-chart transverse grid: β⁻²|z|^{2−2β} ∂²v/∂z∂z̄.
pub fn conic_laplacian_apply(v: &GridField, beta: f64) -> Result<GridField> {
    check_beta(beta)?;
    if v.chart != ChartTag::Z {
        return Err(ConeError::Grid("conic Laplacian expects a z-chart field".into()));
    }
    let dd = v.dd_bar()?;
    let mut out = Vec::with_capacity(v.len());
    for ir in 0..v.n_radii() {
        let w = v.radii[ir].powf(2.0 - 2.0 * beta) / (beta * beta);
        for ia in 0..v.n_angles() {
            out.push(dd[v.index(ir, ia)] * w);
        }
    }
    v.with_values(out)
}

/// Restrict a periodic z-grid to the sector of `chart` and relabel it in
/// w-coordinates (radii ρ^β, angles βθ). Samples are copied, not interpolated.
pub fn pullback_grid(v: &GridField, chart: &ChartMap) -> Result<GridField> {
    if v.chart != ChartTag::Z || !v.periodic {
        return Err(ConeError::Grid("pullback expects a periodic z-chart grid".into()));
    }
    let na = v.n_angles() as i64;
    let step = 2.0 * PI / na as f64;
    let theta0 = v.angles[0];
    let (lo, hi) = chart.z_arg_interval();
    let m_lo = ((lo - theta0) / step - 1e-9).ceil() as i64;
    let m_hi = ((hi - theta0) / step + 1e-9).floor() as i64;
    if m_hi - m_lo < 5 {
        return Err(ConeError::Grid("too few angles inside the chart sector".into()));
    }
    let cols: Vec<(f64, usize)> = (m_lo..=m_hi)
        .map(|m| (chart.beta * (theta0 + m as f64 * step), m.rem_euclid(na) as usize))
        .collect();
    let radii: Vec<f64> = v.radii.iter().map(|r| r.powf(chart.beta)).collect();
    let mut values = Vec::with_capacity(radii.len() * cols.len());
    for ir in 0..v.n_radii() {
        for &(_, ia) in &cols {
            values.push(v.at(ir, ia));
        }
    }
    GridField::new(
        ChartTag::W(chart.k),
        chart.beta,
        radii,
        cols.iter().map(|c| c.0).collect(),
        false,
        values,
    )
}
