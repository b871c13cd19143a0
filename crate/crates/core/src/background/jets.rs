//! Second-order jets of functions F(a, b) with a = |x|², b = |ξ|².
//!
//! The complex Hessian of such a function in (x, ξ) is determined by the jet:
//! H_xx̄ = F_a + aF_aa, H_xξ̄ = x̄ξF_ab, H_ξξ̄ = F_b + bF_bb.

use std::ops::{Add, Mul, Neg, Sub};

use crate::numerics::{CMat, C64};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Jet2 {
    pub v: f64,
    pub a: f64,
    pub b: f64,
    pub aa: f64,
    pub ab: f64,
    pub bb: f64,
}

impl Jet2 {
    pub fn constant(v: f64) -> Self {
        Jet2 { v, ..Default::default() }
    }

    pub fn var_a(a: f64) -> Self {
        Jet2 { v: a, a: 1.0, ..Default::default() }
    }

    pub fn var_b(b: f64) -> Self {
        Jet2 { v: b, b: 1.0, ..Default::default() }
    }

    pub fn scale(self, c: f64) -> Self {
        Jet2 { v: c * self.v, a: c * self.a, b: c * self.b, aa: c * self.aa, ab: c * self.ab, bb: c * self.bb }
    }

    /// g ∘ self given g, g′, g″ at self.v.
    pub fn compose(self, g0: f64, g1: f64, g2: f64) -> Self {
        Jet2 {
            v: g0,
            a: g1 * self.a,
            b: g1 * self.b,
            aa: g2 * self.a * self.a + g1 * self.aa,
            ab: g2 * self.a * self.b + g1 * self.ab,
            bb: g2 * self.b * self.b + g1 * self.bb,
        }
    }

    pub fn exp(self) -> Self {
        let e = self.v.exp();
        self.compose(e, e, e)
    }

    pub fn ln(self) -> Self {
        let x = self.v;
        self.compose(x.ln(), 1.0 / x, -1.0 / (x * x))
    }

    pub fn powf(self, p: f64) -> Self {
        let x = self.v;
        self.compose(x.powf(p), p * x.powf(p - 1.0), p * (p - 1.0) * x.powf(p - 2.0))
    }

    pub fn recip(self) -> Self {
        let x = self.v;
        self.compose(1.0 / x, -1.0 / (x * x), 2.0 / (x * x * x))
    }

    pub fn is_finite(&self) -> bool {
        [self.v, self.a, self.b, self.aa, self.ab, self.bb].iter().all(|x| x.is_finite())
    }

    /// Complex Hessian at the point; `x` is `None` in dimension one.
    pub fn hessian(&self, x: Option<C64>, xi: C64) -> CMat {
        let b = xi.norm_sqr();
        let hbb = self.b + b * self.bb;
        match x {
            None => CMat::from_element(1, 1, C64::new(hbb, 0.0)),
            Some(x) => {
                let a = x.norm_sqr();
                let haa = self.a + a * self.aa;
                let hab = x.conj() * xi * self.ab;
                CMat::from_row_slice(2, 2, &[C64::new(haa, 0.0), hab, hab.conj(), C64::new(hbb, 0.0)])
            }
        }
    }

    /// (∂F/∂z_i).
    pub fn gradient(&self, x: Option<C64>, xi: C64) -> Vec<C64> {
        match x {
            None => vec![xi.conj() * self.b],
            Some(x) => vec![x.conj() * self.a, xi.conj() * self.b],
        }
    }
}

impl Add for Jet2 {
    type Output = Jet2;
    fn add(self, o: Jet2) -> Jet2 {
        Jet2 { v: self.v + o.v, a: self.a + o.a, b: self.b + o.b, aa: self.aa + o.aa, ab: self.ab + o.ab, bb: self.bb + o.bb }
    }
}

impl Sub for Jet2 {
    type Output = Jet2;
    fn sub(self, o: Jet2) -> Jet2 {
        self + (-o)
    }
}

impl Neg for Jet2 {
    type Output = Jet2;
    fn neg(self) -> Jet2 {
        self.scale(-1.0)
    }
}

impl Mul for Jet2 {
    type Output = Jet2;
    fn mul(self, o: Jet2) -> Jet2 {
        Jet2 {
            v: self.v * o.v,
            a: self.a * o.v + self.v * o.a,
            b: self.b * o.v + self.v * o.b,
            aa: self.aa * o.v + 2.0 * self.a * o.a + self.v * o.aa,
            ab: self.ab * o.v + self.a * o.b + self.b * o.a + self.v * o.ab,
            bb: self.bb * o.v + 2.0 * self.b * o.b + self.v * o.bb,
        }
    }
}

/// Split a point into (optional tangential x, transverse ξ).
pub fn split(p: &[C64]) -> (Option<C64>, C64) {
    match p.len() {
        1 => (None, p[0]),
        _ => (Some(p[0]), p[p.len() - 1]),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::complex_hessian_real;

    #[test]
    fn hessian_matches_finite_differences() {
        let f = |a: Jet2, b: Jet2| (Jet2::constant(1.0) + a).ln() + b * (Jet2::constant(1.0) + a).powf(2.0) + (a * b).exp();
        let p = [C64::new(0.3, -0.2), C64::new(0.1, 0.25)];
        let (a, b) = (p[0].norm_sqr(), p[1].norm_sqr());
        let jet = f(Jet2::var_a(a), Jet2::var_b(b));
        let h = jet.hessian(Some(p[0]), p[1]);
        let scalar = |q: &[C64]| f(Jet2::constant(q[0].norm_sqr()), Jet2::constant(q[1].norm_sqr())).v;
        let fd = complex_hessian_real(&scalar, &p, 1e-3);
        for i in 0..2 {
            for j in 0..2 {
                assert!((h[(i, j)] - fd[(i, j)]).norm() < 1e-9, "{i}{j}: {} vs {}", h[(i, j)], fd[(i, j)]);
            }
        }
    }

    #[test]
    fn arithmetic() {
        let x = Jet2::var_b(2.0);
        let y = x * x - x.scale(3.0);
        assert_eq!(y.v, -2.0);
        assert_eq!(y.b, 1.0);
        assert_eq!(y.bb, 2.0);
        let r = x.recip();
        assert!((r.bb - 0.25).abs() < 1e-15);
    }
}
