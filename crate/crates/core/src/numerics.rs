//! Shared numerical kernels: quadrature, pointwise finite-difference stencils
//! in complex coordinates, small dense/banded solvers and regression fits.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{ConeError, Result};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;

pub const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Values that can be linearly combined by stencils.
pub trait Linear: Clone {
    fn scaled(&self, a: f64) -> Self;
    fn add_scaled(&mut self, a: f64, x: &Self);
}

impl Linear for f64 {
    fn scaled(&self, a: f64) -> Self {
        a * self
    }
    fn add_scaled(&mut self, a: f64, x: &Self) {
        *self += a * x;
    }
}

impl Linear for C64 {
    fn scaled(&self, a: f64) -> Self {
        self * a
    }
    fn add_scaled(&mut self, a: f64, x: &Self) {
        *self += x * a;
    }
}

impl Linear for CMat {
    fn scaled(&self, a: f64) -> Self {
        self.map(|v| v * a)
    }
    fn add_scaled(&mut self, a: f64, x: &Self) {
        self.zip_apply(x, |s, v| *s += v * a);
    }
}

/// Gauss–Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else if n == 1 { x } else { p1 };
            let pnm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pnm1) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Fourth-order first-derivative weights for offsets -2..=2.
const D1: [(i32, f64); 4] = [(-2, 1.0 / 12.0), (-1, -8.0 / 12.0), (1, 8.0 / 12.0), (2, -1.0 / 12.0)];
/// Fourth-order second-derivative weights for offsets -2..=2.
const D2: [(i32, f64); 5] = [
    (-2, -1.0 / 12.0),
    (-1, 16.0 / 12.0),
    (0, -30.0 / 12.0),
    (1, 16.0 / 12.0),
    (2, -1.0 / 12.0),
];

fn shifted(p: &[C64], dir: usize, t: f64) -> Vec<C64> {
    let mut q = p.to_vec();
    if dir % 2 == 0 {
        q[dir / 2].re += t;
    } else {
        q[dir / 2].im += t;
    }
    q
}

/// Real partial derivative along real direction `dir` (2i → Re z_i, 2i+1 → Im z_i).
pub fn real_partial<T: Linear>(f: &dyn Fn(&[C64]) -> T, p: &[C64], dir: usize, h: f64) -> T {
    let mut acc: Option<T> = None;
    for (o, w) in D1 {
        let v = f(&shifted(p, dir, o as f64 * h));
        match acc.as_mut() {
            None => acc = Some(v.scaled(w / h)),
            Some(a) => a.add_scaled(w / h, &v),
        }
    }
    acc.expect("stencil non-empty")
}

/// Real second partial derivative d²/(dx_a dx_b).
pub fn real_second<T: Linear>(
    f: &dyn Fn(&[C64]) -> T,
    p: &[C64],
    a: usize,
    b: usize,
    h: f64,
) -> T {
    let mut acc: Option<T> = None;
    let mut push = |v: T, w: f64| match acc.as_mut() {
        None => acc = Some(v.scaled(w)),
        Some(s) => s.add_scaled(w, &v),
    };
    if a == b {
        for (o, w) in D2 {
            push(f(&shifted(p, a, o as f64 * h)), w / (h * h));
        }
    } else {
        for (oa, wa) in D1 {
            let pa = shifted(p, a, oa as f64 * h);
            for (ob, wb) in D1 {
                push(f(&shifted(&pa, b, ob as f64 * h)), wa * wb / (h * h));
            }
        }
    }
    acc.expect("stencil non-empty")
}

/// ∂f/∂z_i (or ∂f/∂z̄_i when `conj`), complex-valued f.
pub fn complex_partial(f: &dyn Fn(&[C64]) -> C64, p: &[C64], i: usize, conj: bool, h: f64) -> C64 {
    let dx = real_partial(f, p, 2 * i, h);
    let dy = real_partial(f, p, 2 * i + 1, h);
    let s = if conj { 1.0 } else { -1.0 };
    0.5 * (dx + I * dy * s)
}

/// Matrix-valued version of [`complex_partial`].
pub fn complex_partial_mat(f: &dyn Fn(&[C64]) -> CMat, p: &[C64], i: usize, conj: bool, h: f64) -> CMat {
    let dx = real_partial(f, p, 2 * i, h);
    let dy = real_partial(f, p, 2 * i + 1, h);
    let s = if conj { 1.0 } else { -1.0 };
    (dx + dy.map(|v| v * I * s)).map(|v| v * 0.5)
}

/// ∂²f/∂z_i∂z̄_j for a matrix-valued f.
pub fn complex_mixed_mat(f: &dyn Fn(&[C64]) -> CMat, p: &[C64], i: usize, j: usize, h: f64) -> CMat {
    let xx = real_second(f, p, 2 * i, 2 * j, h);
    let yy = real_second(f, p, 2 * i + 1, 2 * j + 1, h);
    let xy = real_second(f, p, 2 * i, 2 * j + 1, h);
    let yx = real_second(f, p, 2 * i + 1, 2 * j, h);
    let im = &xy - &yx;
    (xx + yy + im.map(|v| v * I)).map(|v| v * 0.25)
}

/// Complex Hessian H[i][j] = ∂²f/∂z_i∂z̄_j of a complex-valued function.
pub fn complex_hessian(f: &dyn Fn(&[C64]) -> C64, p: &[C64], h: f64) -> CMat {
    let n = p.len();
    let m = 2 * n;
    let mut real = vec![vec![C64::new(0.0, 0.0); m]; m];
    for a in 0..m {
        for b in a..m {
            let v = real_second(f, p, a, b, h);
            real[a][b] = v;
            real[b][a] = v;
        }
    }
    CMat::from_fn(n, n, |i, j| {
        let (xi, yi, xj, yj) = (2 * i, 2 * i + 1, 2 * j, 2 * j + 1);
        0.25 * (real[xi][xj] + real[yi][yj] + I * (real[xi][yj] - real[yi][xj]))
    })
}

/// Complex Hessian of a real function.
pub fn complex_hessian_real(f: &dyn Fn(&[C64]) -> f64, p: &[C64], h: f64) -> CMat {
    let g = |q: &[C64]| C64::new(f(q), 0.0);
    complex_hessian(&g, p, h)
}

/// [`complex_hessian_real`] with a truncation estimate |H(h) − H(2h)|/15 plus a
/// round-off floor; `scale` bounds the magnitude of intermediate terms of f.
pub fn complex_hessian_estimated(f: &dyn Fn(&[C64]) -> f64, p: &[C64], h: f64, scale: f64) -> (CMat, f64) {
    let fine = complex_hessian_real(f, p, h);
    let coarse = complex_hessian_real(f, p, 2.0 * h);
    let trunc = max_abs(&(&fine - &coarse)) / 15.0;
    let round = 64.0 * f64::EPSILON * f(p).abs().max(scale) / (h * h);
    (fine, trunc + round)
}

/// Symmetrize to a Hermitian matrix.
pub fn hermitize(m: &CMat) -> CMat {
    (m + m.adjoint()).map(|v| v * 0.5)
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(m: &CMat) -> Vec<f64> {
    let h = hermitize(m);
    let mut ev: Vec<f64> = h.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    ev
}

pub fn min_eigenvalue(m: &CMat) -> f64 {
    hermitian_eigenvalues(m)[0]
}

/// Largest absolute entry.
pub fn max_abs(m: &CMat) -> f64 {
    m.iter().map(|v| v.norm()).fold(0.0, f64::max)
}

/// Solve a tridiagonal complex system (Thomas algorithm).
pub fn solve_tridiagonal(lower: &[C64], diag: &[C64], upper: &[C64], rhs: &[C64]) -> Result<Vec<C64>> {
    let n = diag.len();
    if lower.len() != n || upper.len() != n || rhs.len() != n || n == 0 {
        return Err(ConeError::Numerical("tridiagonal size mismatch".into()));
    }
    let mut c = vec![C64::new(0.0, 0.0); n];
    let mut d = vec![C64::new(0.0, 0.0); n];
    let mut denom = diag[0];
    if denom.norm() < 1e-300 {
        return Err(ConeError::Numerical("zero pivot in tridiagonal solve".into()));
    }
    c[0] = upper[0] / denom;
    d[0] = rhs[0] / denom;
    for i in 1..n {
        denom = diag[i] - lower[i] * c[i - 1];
        if denom.norm() < 1e-300 || !denom.is_finite() {
            return Err(ConeError::Numerical("zero pivot in tridiagonal solve".into()));
        }
        c[i] = upper[i] / denom;
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / denom;
    }
    let mut x = vec![C64::new(0.0, 0.0); n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    Ok(x)
}

/// Ordinary least squares line fit.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LineFit> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(ConeError::Numerical("linear fit needs at least two points".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(ConeError::Numerical("degenerate abscissae".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    let r_squared = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    if !slope.is_finite() || !intercept.is_finite() {
        return Err(ConeError::Numerical("non-finite fit".into()));
    }
    Ok(LineFit { slope, intercept, r_squared })
}

/// Fit y ≈ C·x^p by least squares in log–log coordinates; returns (C, p, r²).
pub fn power_law_fit(x: &[f64], y: &[f64]) -> Result<(f64, f64, f64)> {
    let (lx, ly): (Vec<f64>, Vec<f64>) = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0 && b.is_finite())
        .map(|(a, b)| (a.ln(), b.ln()))
        .unzip();
    let fit = linear_fit(&lx, &ly)?;
    Ok((fit.intercept.exp(), fit.slope, fit.r_squared))
}

/// Linear Richardson extrapolation to r = 0 from samples at r0 < r1.
pub fn extrapolate_to_zero(r0: f64, f0: C64, r1: f64, f1: C64) -> C64 {
    (f0 * r1 - f1 * r0) / (r1 - r0)
}

/// Logarithmically spaced values from `lo` to `hi` inclusive.
pub fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}

/// Uniform angles on [0, 2π) (periodic).
pub fn periodic_angles(n: usize) -> Vec<f64> {
    (0..n).map(|k| 2.0 * std::f64::consts::PI * k as f64 / n as f64).collect()
}
