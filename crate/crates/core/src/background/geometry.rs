//! Built-in model geometries around a smooth divisor D.
//!
//! * `disc_n1`: the unit disc, D = {0}, ω = i dz∧dz̄, |s|² = c|z|², Θ = 0.
//! * `line_bundle_p1`: a neighbourhood of the zero section of a degree −k_b
//!   bundle over P¹ in the chart (x, ξ), D = {ξ = 0},
//!   ω = i∂∂̄(log(1+|x|²) + |ξ|²(1+|x|²)^{k_b}), |s|² = c|ξ|²(1+|x|²)^{k_b},
//!   Θ = −k_b i∂∂̄ log(1+|x|²).
//!
//! The Grauert data are Υ = id and p(x, ξ) = x. The potential v with
//! ω − i∂∂̄v = p*(ω|_D), v|_D = 0, is |z|² on the disc and |ξ|²(1+|x|²)^{k_b}
//! on the bundle.

use serde::{Deserialize, Serialize};

use super::jets::{split, Jet2};
use crate::error::{ConeError, Result};
use crate::numerics::{CMat, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum GeometryKind {
    DiscN1,
    LineBundleP1 { k_b: u32 },
}

/// Which Grauert potential v enters ũ = e^{−1/|s|²} − v.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VPotential {
    /// The potential comparing ω with p*(ω|_D).
    Model,
    /// v ≡ 0.
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelGeometry {
    pub kind: GeometryKind,
    /// Constant c in |s|² = c·(…).
    pub scale: f64,
    pub v_mode: VPotential,
    /// |ξ| ≤ fiber_radius and |x| ≤ base_radius bound the model domain.
    pub fiber_radius: f64,
    pub base_radius: f64,
}

impl ModelGeometry {
    /// Default target for sup |s|² after rescaling.
    pub const DEFAULT_SUP_NORM: f64 = 0.135_335_283_236_612_7; // e^{-2}

    pub fn disc_n1() -> Self {
        ModelGeometry { kind: GeometryKind::DiscN1, scale: 1.0, v_mode: VPotential::Model, fiber_radius: 1.0, base_radius: 1.0 }
            .rescaled(Self::DEFAULT_SUP_NORM)
            .expect("valid default")
    }

    pub fn line_bundle_p1(k_b: u32) -> Result<Self> {
        if !(1..=2).contains(&k_b) {
            return Err(ConeError::Domain(format!("bundle degree k_b = {k_b} must be 1 or 2")));
        }
        ModelGeometry {
            kind: GeometryKind::LineBundleP1 { k_b },
            scale: 1.0,
            v_mode: VPotential::Model,
            fiber_radius: 1.0,
            base_radius: 1.0,
        }
        .rescaled(Self::DEFAULT_SUP_NORM)
    }

    pub fn from_name(name: &str, k_b: u32) -> Result<Self> {
        match name {
            "disc_n1" => Ok(Self::disc_n1()),
            "line_bundle_p1" => Self::line_bundle_p1(k_b),
            other => Err(ConeError::Config(format!("unknown geometry '{other}'"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            GeometryKind::DiscN1 => "disc_n1",
            GeometryKind::LineBundleP1 { .. } => "line_bundle_p1",
        }
    }

    pub fn dim(&self) -> usize {
        match self.kind {
            GeometryKind::DiscN1 => 1,
            GeometryKind::LineBundleP1 { .. } => 2,
        }
    }

    fn k_b(&self) -> f64 {
        match self.kind {
            GeometryKind::DiscN1 => 0.0,
            GeometryKind::LineBundleP1 { k_b } => k_b as f64,
        }
    }

    /// Rotation-invariant models depend only on (|x|², |ξ|²).
    pub fn rotation_invariant(&self) -> bool {
        true
    }

    /// Multiply s by a constant so that sup |s|² equals `target` (< 1).
    pub fn rescaled(mut self, target: f64) -> Result<Self> {
        if !(target > 0.0 && target < 1.0) {
            return Err(ConeError::Domain("sup |s|² must be rescaled into (0, 1)".into()));
        }
        self.scale = 1.0;
        self.scale = target / self.sup_norm_sq();
        Ok(self)
    }

    /// sup |s|² over the model domain.
    pub fn sup_norm_sq(&self) -> f64 {
        let a = self.base_radius * self.base_radius;
        let b = self.fiber_radius * self.fiber_radius;
        self.scale * b * (1.0 + a).powf(self.k_b())
    }

    pub fn ab(&self, p: &[C64]) -> (f64, f64) {
        let (x, xi) = split(p);
        (x.map(|x| x.norm_sqr()).unwrap_or(0.0), xi.norm_sqr())
    }

    pub fn in_domain(&self, p: &[C64]) -> bool {
        let (a, b) = self.ab(p);
        p.len() == self.dim() && a <= self.base_radius.powi(2) * (1.0 + 1e-12) && b <= self.fiber_radius.powi(2) * (1.0 + 1e-12)
    }

    fn vars(&self, a: f64, b: f64) -> (Jet2, Jet2) {
        (Jet2::var_a(a), Jet2::var_b(b))
    }

    /// Kähler potential Φ of ω.
    pub fn phi_jet(&self, a: f64, b: f64) -> Jet2 {
        let (ja, jb) = self.vars(a, b);
        match self.kind {
            GeometryKind::DiscN1 => jb,
            GeometryKind::LineBundleP1 { .. } => {
                let one_a = Jet2::constant(1.0) + ja;
                one_a.ln() + jb * one_a.powf(self.k_b())
            }
        }
    }

    /// |s|² as a jet.
    pub fn norm_jet(&self, a: f64, b: f64) -> Jet2 {
        let (ja, jb) = self.vars(a, b);
        match self.kind {
            GeometryKind::DiscN1 => jb.scale(self.scale),
            GeometryKind::LineBundleP1 { .. } => (jb * (Jet2::constant(1.0) + ja).powf(self.k_b())).scale(self.scale),
        }
    }

    /// Grauert potential v.
    pub fn v_jet(&self, a: f64, b: f64) -> Jet2 {
        if self.v_mode == VPotential::Zero {
            return Jet2::constant(0.0);
        }
        let (ja, jb) = self.vars(a, b);
        match self.kind {
            GeometryKind::DiscN1 => jb,
            GeometryKind::LineBundleP1 { .. } => jb * (Jet2::constant(1.0) + ja).powf(self.k_b()),
        }
    }

    /// log of the hermitian metric factor: log|s|² − log|ξ|².
    fn log_metric_jet(&self, a: f64) -> Jet2 {
        match self.kind {
            GeometryKind::DiscN1 => Jet2::constant(self.scale.ln()),
            GeometryKind::LineBundleP1 { .. } => {
                (Jet2::constant(1.0) + Jet2::var_a(a)).ln().scale(self.k_b()) + Jet2::constant(self.scale.ln())
            }
        }
    }

    pub fn norm_sq(&self, p: &[C64]) -> f64 {
        let (a, b) = self.ab(p);
        self.norm_jet(a, b).v
    }

    pub fn omega(&self, p: &[C64]) -> CMat {
        let (a, b) = self.ab(p);
        let (x, xi) = split(p);
        self.phi_jet(a, b).hessian(x, xi)
    }

    /// Curvature coefficients Θ_{ij̄} with Θ = −i∂∂̄ log h.
    pub fn theta(&self, p: &[C64]) -> CMat {
        let (a, b) = self.ab(p);
        let (x, xi) = split(p);
        let _ = b;
        -self.log_metric_jet(a).hessian(x, xi)
    }

    /// ∂|s|² ⊗ ∂̄|s|².
    pub fn norm_gradient_outer(&self, p: &[C64]) -> CMat {
        let (a, b) = self.ab(p);
        let (x, xi) = split(p);
        let g = self.norm_jet(a, b).gradient(x, xi);
        let n = g.len();
        CMat::from_fn(n, n, |i, j| g[i] * g[j].conj())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{complex_hessian_real, min_eigenvalue};

    fn points(g: &ModelGeometry) -> Vec<Vec<C64>> {
        let mut out = Vec::new();
        for k in 0..20 {
            let t = k as f64 * 0.7;
            let xi = C64::from_polar(0.05 + 0.04 * k as f64, t);
            if g.dim() == 1 {
                out.push(vec![xi]);
            } else {
                out.push(vec![C64::from_polar(0.04 * k as f64, -1.3 * t), xi]);
            }
        }
        out
    }

    #[test]
    fn omega_positive_and_sup_rescaled() {
        for g in [ModelGeometry::disc_n1(), ModelGeometry::line_bundle_p1(1).unwrap(), ModelGeometry::line_bundle_p1(2).unwrap()] {
            assert!((g.sup_norm_sq() - ModelGeometry::DEFAULT_SUP_NORM).abs() < 1e-15);
            for p in points(&g) {
                assert!(min_eigenvalue(&g.omega(&p)) > 0.0);
                assert!(g.norm_sq(&p) < 1.0);
            }
        }
        assert!(ModelGeometry::line_bundle_p1(3).is_err());
    }

    #[test]
    fn lelong_consistency_off_divisor() {
        for g in [ModelGeometry::disc_n1(), ModelGeometry::line_bundle_p1(2).unwrap()] {
            for p in points(&g) {
                let f = |q: &[C64]| g.norm_sq(q).ln();
                let ddlog = complex_hessian_real(&f, &p, 1e-4);
                let r = ddlog + g.theta(&p);
                assert!(r.iter().all(|z| z.norm() < 1e-5), "{r}");
            }
        }
    }

    #[test]
    fn grauert_potential() {
        // ω − i∂∂̄v depends only on the base point.
        let g = ModelGeometry::line_bundle_p1(1).unwrap();
        for p in points(&g) {
            let (a, b) = g.ab(&p);
            let (x, xi) = split(&p);
            let rest = (g.phi_jet(a, b) - g.v_jet(a, b)).hessian(x, xi);
            assert!(rest[(1, 1)].norm() < 1e-14 && rest[(0, 1)].norm() < 1e-14);
            assert!((rest[(0, 0)].re - 1.0 / (1.0 + a).powi(2)).abs() < 1e-14);
        }
    }
}
