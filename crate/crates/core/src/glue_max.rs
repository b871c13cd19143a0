//! Regularized maximum
//!
//! M_η(t₁, t₂) = ∫∫ max(t₁ + h₁, t₂ + h₂) θ(η h₁) θ(η⁻¹ h₂) dh₁ dh₂.
//!
//! After h₁ = x/η, h₂ = η y the weight becomes θ(x)θ(y) on [−1,1]², and the
//! kink sits at y* = (t₁ − t₂ + x/η)/η. The inner integral in y is split at
//! the kink and the outer one at the two x where y* = ±1, so every piece is
//! integrated by Gauss–Legendre on a smooth integrand.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ConeError, Result};
use crate::numerics::gauss_legendre;

/// Even mollifier profile supported in [−1, 1]; normalized numerically.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Profile {
    /// exp(−1/(1 − x²)).
    Bump,
    /// (1 − x²)^power, power ≥ 1.
    Polynomial { power: u32 },
    /// exp(−s/(1 − x²)) for a sharpness s > 0.
    SharpBump { sharpness: f64 },
}

impl Profile {
    fn raw(&self, x: f64) -> f64 {
        if x.abs() >= 1.0 {
            return 0.0;
        }
        let q = 1.0 - x * x;
        match *self {
            Profile::Bump => (-1.0 / q).exp(),
            Profile::Polynomial { power } => q.powi(power as i32),
            Profile::SharpBump { sharpness } => (-sharpness / q).exp(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MollifierSpec {
    pub profile: Profile,
    pub eta: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    norm: f64,
}

/// Value and derivatives of M_η at one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetaJet {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
    /// ∂²M/∂t₁²; the Hessian is d11·[[1, −1], [−1, 1]].
    pub d11: f64,
}

impl MollifierSpec {
    pub fn new(eta: f64) -> Result<Self> {
        Self::with_profile(eta, Profile::Bump, 64)
    }

    pub fn with_profile(eta: f64, profile: Profile, nodes: usize) -> Result<Self> {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(ConeError::Domain(format!("η = {eta} must be positive")));
        }
        if nodes < 4 {
            return Err(ConeError::Domain("need at least 4 quadrature nodes".into()));
        }
        match profile {
            Profile::Polynomial { power: 0 } => {
                return Err(ConeError::Domain("polynomial profile needs power ≥ 1".into()))
            }
            Profile::SharpBump { sharpness } if !(sharpness > 0.0) => {
                return Err(ConeError::Domain("sharpness must be positive".into()))
            }
            _ => {}
        }
        let (x, w) = gauss_legendre(nodes);
        let norm: f64 = x.iter().zip(&w).map(|(x, w)| w * profile.raw(*x)).sum();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(ConeError::Numerical("profile has no mass".into()));
        }
        Ok(MollifierSpec { profile, eta, nodes: x, weights: w, norm })
    }

    pub fn with_eta(&self, eta: f64) -> Result<Self> {
        Self::with_profile(eta, self.profile, self.nodes.len())
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Normalized θ.
    pub fn theta(&self, x: f64) -> f64 {
        self.profile.raw(x) / self.norm
    }

    fn integrate(&self, a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        let (m, h) = (0.5 * (a + b), 0.5 * (b - a));
        self.nodes.iter().zip(&self.weights).map(|(x, w)| w * f(m + h * x)).sum::<f64>() * h
    }

    /// ∫θ over [−1, 1] under the working rule.
    pub fn mass(&self) -> f64 {
        self.integrate(-1.0, 1.0, |x| self.theta(x))
    }

    /// (∫_{−1}^{y} θ, ∫_{y}^{1} θ, ∫_{y}^{1} sθ(s) ds).
    fn tails(&self, y: f64) -> (f64, f64, f64) {
        if y <= -1.0 {
            return (0.0, 1.0, 0.0);
        }
        if y >= 1.0 {
            return (1.0, 0.0, 0.0);
        }
        let lower = self.integrate(-1.0, y, |s| self.theta(s));
        let upper = self.integrate(y, 1.0, |s| self.theta(s));
        let moment = self.integrate(y, 1.0, |s| s * self.theta(s));
        (lower, upper, moment)
    }

    fn outer_breaks(&self, t1: f64, t2: f64) -> Vec<f64> {
        let e = self.eta;
        let mut b = vec![-1.0];
        for x in [e * (t2 - t1 - e), e * (t2 - t1 + e)] {
            if x > -1.0 && x < 1.0 {
                b.push(x);
            }
        }
        b.push(1.0);
        b
    }

    fn kink(&self, t1: f64, t2: f64, x: f64) -> f64 {
        (t1 - t2 + x / self.eta) / self.eta
    }
}

fn check(t1: f64, t2: f64) -> Result<()> {
    if t1.is_finite() && t2.is_finite() {
        Ok(())
    } else {
        Err(ConeError::Domain("non-finite argument".into()))
    }
}

/// M_η(t₁, t₂).
pub fn m_eta(t1: f64, t2: f64, spec: &MollifierSpec) -> Result<f64> {
    check(t1, t2)?;
    let e = spec.eta;
    let br = spec.outer_breaks(t1, t2);
    let mut acc = 0.0;
    for w in br.windows(2) {
        acc += spec.integrate(w[0], w[1], |x| {
            let (lo, _, mom) = spec.tails(spec.kink(t1, t2, x));
            spec.theta(x) * ((t1 - t2 + x / e) * lo + e * mom)
        });
    }
    let v = t2 + acc;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(ConeError::Numerical("quadrature produced a non-finite value".into()))
    }
}

/// (∂M_η/∂t₁, ∂M_η/∂t₂), each integrated independently.
pub fn m_eta_grad(t1: f64, t2: f64, spec: &MollifierSpec) -> Result<(f64, f64)> {
    let j = m_eta_jet(t1, t2, spec)?;
    Ok((j.d1, j.d2))
}

/// Value, gradient and second derivative in one pass.
pub fn m_eta_jet(t1: f64, t2: f64, spec: &MollifierSpec) -> Result<MetaJet> {
    check(t1, t2)?;
    let e = spec.eta;
    let br = spec.outer_breaks(t1, t2);
    let (mut v, mut d1, mut d2, mut d11) = (0.0, 0.0, 0.0, 0.0);
    for w in br.windows(2) {
        let (m, h) = (0.5 * (w[0] + w[1]), 0.5 * (w[1] - w[0]));
        if h <= 0.0 {
            continue;
        }
        for (x, wt) in spec.nodes.iter().zip(&spec.weights) {
            let x = m + h * x;
            let th = spec.theta(x) * wt * h;
            if th == 0.0 {
                continue;
            }
            let y = spec.kink(t1, t2, x);
            let (lo, up, mom) = spec.tails(y);
            v += th * ((t1 - t2 + x / e) * lo + e * mom);
            d1 += th * lo;
            d2 += th * up;
            d11 += th * spec.theta(y) / e;
        }
    }
    let jet = MetaJet { value: t2 + v, d1, d2, d11 };
    if [jet.value, d1, d2, d11].iter().all(|x| x.is_finite()) {
        Ok(jet)
    } else {
        Err(ConeError::Numerical("quadrature produced a non-finite value".into()))
    }
}

/// Piecewise Chebyshev interpolant of the jet of M_η in d = t₁ − t₂.
///
/// M_η(t₁, t₂) = t₂ + G(t₁ − t₂) with G ≡ 0 for d ≤ −(η + η⁻¹) and G(d) = d
/// for d ≥ η + η⁻¹. G is analytic between the breakpoints ±(η + η⁻¹),
/// ±|η⁻¹ − η|, where each piece is interpolated at Chebyshev–Lobatto nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaTable {
    pieces: Vec<TablePiece>,
    half_span: f64,
}

#[derive(Debug, Clone, PartialEq)]
struct TablePiece {
    lo: f64,
    hi: f64,
    nodes: Vec<f64>,
    /// (G, G′, 1 − G′, G″) at the nodes; 1 − G′ is integrated directly.
    values: [Vec<f64>; 4],
}

impl TablePiece {
    fn eval(&self, d: f64) -> [f64; 4] {
        let n = self.nodes.len() - 1;
        let (mut num, mut den) = ([0.0; 4], 0.0);
        for k in 0..=n {
            let dx = d - self.nodes[k];
            if dx == 0.0 {
                return [self.values[0][k], self.values[1][k], self.values[2][k], self.values[3][k]];
            }
            let mut w = if k % 2 == 0 { 1.0 } else { -1.0 };
            if k == 0 || k == n {
                w *= 0.5;
            }
            let c = w / dx;
            den += c;
            for (acc, v) in num.iter_mut().zip(&self.values) {
                *acc += c * v[k];
            }
        }
        num.map(|x| x / den)
    }
}

impl MetaTable {
    pub fn new(spec: &MollifierSpec, degree: usize) -> Result<Self> {
        if degree < 8 {
            return Err(ConeError::Domain("table degree must be at least 8".into()));
        }
        let e = spec.eta;
        let span = e + 1.0 / e;
        let inner = (1.0 / e - e).abs();
        let mut breaks = vec![-span, -inner, inner, span];
        breaks.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
        let mut pieces = Vec::new();
        for w in breaks.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            let nodes: Vec<f64> = (0..=degree)
                .map(|k| 0.5 * (lo + hi) + 0.5 * (hi - lo) * (std::f64::consts::PI * k as f64 / degree as f64).cos())
                .collect();
            let mut values: [Vec<f64>; 4] = Default::default();
            for &d in &nodes {
                let j = m_eta_jet(d, 0.0, spec)?;
                values[0].push(j.value);
                values[1].push(j.d1);
                values[2].push(j.d2);
                values[3].push(j.d11);
            }
            pieces.push(TablePiece { lo, hi, nodes, values });
        }
        Ok(MetaTable { pieces, half_span: span })
    }

    /// Same quantities as [`m_eta_jet`].
    pub fn jet(&self, t1: f64, t2: f64) -> Result<MetaJet> {
        check(t1, t2)?;
        let d = t1 - t2;
        if d >= self.half_span {
            return Ok(MetaJet { value: t1, d1: 1.0, d2: 0.0, d11: 0.0 });
        }
        if d <= -self.half_span {
            return Ok(MetaJet { value: t2, d1: 0.0, d2: 1.0, d11: 0.0 });
        }
        let piece = self
            .pieces
            .iter()
            .find(|p| d >= p.lo && d <= p.hi)
            .ok_or_else(|| ConeError::Numerical(format!("no table piece for d = {d}")))?;
        let [g, g1, g2, g11] = piece.eval(d);
        Ok(MetaJet { value: t2 + g, d1: g1.clamp(0.0, 1.0), d2: g2.clamp(0.0, 1.0), d11: g11.max(0.0) })
    }
}

/// The integrand θ(ηh₁)θ(η⁻¹h₂)·max(t₁ + h₁, t₂ + h₂) in the original variables.
pub fn m_eta_integrand(t1: f64, t2: f64, h1: f64, h2: f64, spec: &MollifierSpec) -> f64 {
    (t1 + h1).max(t2 + h2) * spec.theta(spec.eta * h1) * spec.theta(h2 / spec.eta)
}

/// Hessian entries (M₁₁, M₁₂, M₂₂).
pub fn m_eta_hessian(t1: f64, t2: f64, spec: &MollifierSpec) -> Result<(f64, f64, f64)> {
    let j = m_eta_jet(t1, t2, spec)?;
    Ok((j.d11, -j.d11, j.d11))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexityReport {
    pub samples: usize,
    /// max of M(λu + (1−λ)v) − λM(u) − (1−λ)M(v).
    pub max_convexity_violation: f64,
    /// max of max(t₁, t₂) − M(t).
    pub max_envelope_violation: f64,
    /// max of M(t) − max(t₁, t₂) − η − η⁻¹.
    pub max_upper_violation: f64,
    /// max |M(t₁ + c, t₂ + c) − M(t₁, t₂) − c|.
    pub max_additivity_error: f64,
    /// max |∂₁ + ∂₂ − 1| and gradient box excursions.
    pub max_gradient_sum_error: f64,
    pub gradient_box_violations: usize,
    pub tolerance: f64,
    pub passed: bool,
}

/// Random-sample check of convexity, envelope, additivity and gradient box.
pub fn convexity_check(spec: &MollifierSpec, sample_budget: usize, seed: u64) -> Result<ConvexityReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let span = 2.0 * (spec.eta + 1.0 / spec.eta);
    let lambdas = [0.1, 0.25, 0.5, 0.75, 0.9];
    let tol = 1e-9 * (1.0 + span);
    let mut rep = ConvexityReport {
        samples: 0,
        max_convexity_violation: f64::NEG_INFINITY,
        max_envelope_violation: f64::NEG_INFINITY,
        max_upper_violation: f64::NEG_INFINITY,
        max_additivity_error: 0.0,
        max_gradient_sum_error: 0.0,
        gradient_box_violations: 0,
        tolerance: tol,
        passed: false,
    };
    for _ in 0..sample_budget {
        let u = (rng.gen_range(-span..span), rng.gen_range(-span..span));
        let v = (rng.gen_range(-span..span), rng.gen_range(-span..span));
        let mu = m_eta_jet(u.0, u.1, spec)?;
        let mv = m_eta(v.0, v.1, spec)?;
        for &l in &lambdas {
            let p = (l * u.0 + (1.0 - l) * v.0, l * u.1 + (1.0 - l) * v.1);
            let mp = m_eta(p.0, p.1, spec)?;
            rep.max_convexity_violation = rep.max_convexity_violation.max(mp - l * mu.value - (1.0 - l) * mv);
        }
        let top = u.0.max(u.1);
        rep.max_envelope_violation = rep.max_envelope_violation.max(top - mu.value);
        rep.max_upper_violation = rep.max_upper_violation.max(mu.value - top - spec.eta - 1.0 / spec.eta);
        let c = rng.gen_range(-10.0..10.0);
        let shifted = m_eta(u.0 + c, u.1 + c, spec)?;
        rep.max_additivity_error = rep.max_additivity_error.max((shifted - mu.value - c).abs());
        rep.max_gradient_sum_error = rep.max_gradient_sum_error.max((mu.d1 + mu.d2 - 1.0).abs());
        for d in [mu.d1, mu.d2] {
            if d < -tol || d > 1.0 + tol {
                rep.gradient_box_violations += 1;
            }
        }
        rep.samples += 1;
    }
    rep.passed = rep.max_convexity_violation <= tol
        && rep.max_envelope_violation <= tol
        && rep.max_upper_violation <= tol
        && rep.max_additivity_error <= tol
        && rep.max_gradient_sum_error <= 1e-10
        && rep.gradient_box_violations == 0;
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    /// Independent oracle: tensor Gauss–Legendre on the original box, with the
    /// h₂ integral split at the kink.
    fn oracle(t1: f64, t2: f64, eta: f64, n: usize) -> f64 {
        let (x, w) = gauss_legendre(n);
        let th = |s: f64| if s.abs() < 1.0 { (-1.0 / (1.0 - s * s)).exp() } else { 0.0 };
        let norm: f64 = x.iter().zip(&w).map(|(x, w)| w * th(*x)).sum();
        let int = |a: f64, b: f64, f: &dyn Fn(f64) -> f64| -> f64 {
            if b <= a {
                return 0.0;
            }
            x.iter().zip(&w).map(|(x, w)| w * f(0.5 * (a + b) + 0.5 * (b - a) * x)).sum::<f64>() * 0.5 * (b - a)
        };
        let inner = |h1: f64| -> f64 {
            let k = (t1 + h1 - t2).clamp(-eta, eta);
            let f = |h2: f64| (t1 + h1).max(t2 + h2) * th(h2 / eta) / eta / norm;
            int(-eta, k, &f) + int(k, eta, &f)
        };
        let a = 1.0 / eta;
        let mut br = vec![-a, t2 - t1 - eta, t2 - t1 + eta, a];
        br.retain(|b| *b >= -a && *b <= a);
        br.sort_by(f64::total_cmp);
        br.windows(2).map(|p| int(p[0], p[1], &|h1| inner(h1) * th(eta * h1) * eta / norm)).sum()
    }

    #[test]
    fn normalization() {
        let s = MollifierSpec::new(0.5).unwrap();
        assert!((s.mass() - 1.0).abs() < 1e-10);
        let first: f64 = s.integrate(-1.0, 1.0, |x| x * s.theta(x));
        assert!(first.abs() < 1e-15);
        assert_eq!(s.theta(1.0), 0.0);
        assert_eq!(s.theta(-1.5), 0.0);
        assert!(MollifierSpec::new(0.0).is_err());
        assert!(MollifierSpec::with_profile(1.0, Profile::Polynomial { power: 0 }, 64).is_err());
    }

    #[test]
    fn locality_examples() {
        for eta in [0.25, 1.0, 3.0] {
            let s = MollifierSpec::new(eta).unwrap();
            let t2 = 0.7;
            let t1 = t2 + eta + 1.0 / eta + 0.1;
            assert!((m_eta(t1, t2, &s).unwrap() - t1).abs() < 1e-12);
            assert!((m_eta(t2, t1, &s).unwrap() - t1).abs() < 1e-9);
            let (a, b) = m_eta_grad(t1, t2, &s).unwrap();
            assert!((a - 1.0).abs() < 1e-12 && b.abs() < 1e-12);
        }
    }

    #[test]
    fn origin_matches_oracle() {
        let s = MollifierSpec::new(1.0).unwrap();
        let v = m_eta(0.0, 0.0, &s).unwrap();
        assert!(v > 0.0 && v <= 1.0);
        let o = oracle(0.0, 0.0, 1.0, 640);
        assert!((v - o).abs() < 1e-8, "{v} vs {o}");
        for (t1, t2, eta) in [(0.3, -0.2, 0.5), (-1.0, 0.4, 2.0), (2.0, 0.0, 0.8)] {
            let s = MollifierSpec::new(eta).unwrap();
            let v = m_eta(t1, t2, &s).unwrap();
            let o = oracle(t1, t2, eta, 640);
            assert!((v - o).abs() < 1e-7, "{t1} {t2} {eta}: {v} vs {o}");
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let s = MollifierSpec::new(0.7).unwrap();
        let h = 1e-5;
        for _ in 0..1000 {
            let t1 = rng.gen_range(-3.0..3.0);
            let t2 = rng.gen_range(-3.0..3.0);
            let j = m_eta_jet(t1, t2, &s).unwrap();
            let fd1 = (m_eta(t1 + h, t2, &s).unwrap() - m_eta(t1 - h, t2, &s).unwrap()) / (2.0 * h);
            let fd2 = (m_eta(t1, t2 + h, &s).unwrap() - m_eta(t1, t2 - h, &s).unwrap()) / (2.0 * h);
            assert!((j.d1 - fd1).abs() < 1e-6 && (j.d2 - fd2).abs() < 1e-6);
            let fd11 = (m_eta_grad(t1 + h, t2, &s).unwrap().0 - m_eta_grad(t1 - h, t2, &s).unwrap().0) / (2.0 * h);
            assert!((j.d11 - fd11).abs() < 1e-5);
        }
    }

    #[test]
    fn scaling_of_the_two_mollifiers() {
        let eta = 0.3;
        let s = MollifierSpec::new(eta).unwrap();
        // h₁ lives on [−1/η, 1/η], h₂ on [−η, η]
        assert!(m_eta_integrand(0.0, 0.0, 0.9 / eta, 0.0, &s) != 0.0);
        assert_eq!(m_eta_integrand(0.0, 0.0, 1.01 / eta, 0.0, &s), 0.0);
        assert!(m_eta_integrand(0.0, 0.0, 0.0, 0.9 * eta, &s) != 0.0);
        assert_eq!(m_eta_integrand(5.0, 0.0, 0.0, 1.01 * eta, &s), 0.0);
        // max(a, b) = (a + b)/2 + |a − b|/2 and X/η − ηY is symmetric for even θ,
        // so exchanging t₁ and t₂ leaves M unchanged.
        let a = m_eta(0.5, 0.0, &s).unwrap();
        let b = m_eta(0.0, 0.5, &s).unwrap();
        assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn convexity_suite_for_profiles() {
        for p in [Profile::Bump, Profile::Polynomial { power: 3 }, Profile::SharpBump { sharpness: 0.5 }] {
            let s = MollifierSpec::with_profile(0.6, p, 64).unwrap();
            let r = convexity_check(&s, 200, 5).unwrap();
            assert!(r.passed, "{p:?}: {r:?}");
        }
    }

    proptest! {
        #[test]
        fn envelope_and_gradient_box(t1 in -20.0f64..20.0, t2 in -20.0f64..20.0, eta in 0.05f64..5.0) {
            let s = MollifierSpec::new(eta).unwrap();
            let j = m_eta_jet(t1, t2, &s).unwrap();
            let top = t1.max(t2);
            prop_assert!(j.value >= top - 1e-9);
            prop_assert!(j.value <= top + eta + 1.0 / eta + 1e-9);
            prop_assert!(j.d1 >= -1e-12 && j.d1 <= 1.0 + 1e-10);
            prop_assert!(j.d2 >= -1e-12 && j.d2 <= 1.0 + 1e-10);
            prop_assert!((j.d1 + j.d2 - 1.0).abs() < 1e-10);
            prop_assert!(j.d11 >= 0.0);
        }
    }

    #[test]
    fn table_matches_quadrature() {
        for eta in [0.25, 0.5, 1.0, 2.0] {
            let spec = MollifierSpec::new(eta).unwrap();
            let table = MetaTable::new(&spec, 128).unwrap();
            let span = eta + 1.0 / eta;
            for i in 0..400 {
                let d = -1.2 * span + 2.4 * span * (i as f64 + 0.31) / 400.0;
                let t2 = 0.7 - 0.01 * i as f64;
                let a = m_eta_jet(t2 + d, t2, &spec).unwrap();
                let b = table.jet(t2 + d, t2).unwrap();
                for (x, y) in [(a.value, b.value), (a.d1, b.d1), (a.d2, b.d2), (a.d11, b.d11)] {
                    assert!((x - y).abs() < 1e-12 * (1.0 + span), "η {eta} d {d}: {x} vs {y}");
                }
            }
        }
        assert!(MetaTable::new(&MollifierSpec::new(1.0).unwrap(), 4).is_err());
    }
}
