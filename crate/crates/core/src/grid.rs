//! Sampled fields on log-polar grids around the singular locus, the shared
//! on-disk formats, and grid derivatives (fourth-order differences in s and
//! on sectors, spectral in θ on periodic grids).
//!
//! A [`GridField`] stores complex samples `v(ρ_i e^{iθ_j})` in row-major order
//! (radius outer, angle inner). Derivatives are taken in the coordinates
//! `s = ln ρ` and `θ`, so the radii must be log-uniform and the angles uniform.
//!
//! # CSV layout
//!
//! ```text
//! # conekit-gridfield v1
//! # chart=z            (or w1, w2, ... for chart index k)
//! # beta=7.5e-1
//! # periodic=true
//! # n_radii=3
//! # n_angles=4
//! # radii=1e-4,1e-2,1e0
//! # angles=0e0,1.5707963267948966e0,...
//! i_r,i_theta,re,im
//! 0,0,1e0,0e0
//! ...
//! ```
//!
//! Floats use Rust's shortest round-trip exponent form, so a write/read cycle
//! is bit exact.
//!
//! # Binary layout (little endian)
//!
//! `b"CGF1"`, chart kind `u8` (0 = z, 1 = w), chart index `u32`, `beta: f64`,
//! `periodic: u8`, `n_radii: u64`, `n_angles: u64`, radii, angles, then
//! `(re, im)` pairs in row-major order.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{ConeError, Result};
use crate::numerics::{C64, I};

/// Which coordinates a field is sampled in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChartTag {
    /// Original coordinates, divisor at z_n = 0.
    Z,
    /// Unfolded coordinates of chart k.
    W(u32),
}

impl ChartTag {
    fn label(&self) -> String {
        match self {
            ChartTag::Z => "z".into(),
            ChartTag::W(k) => format!("w{k}"),
        }
    }

    fn parse(s: &str) -> Result<Self> {
        if s == "z" {
            return Ok(ChartTag::Z);
        }
        s.strip_prefix('w')
            .and_then(|k| k.parse().ok())
            .map(ChartTag::W)
            .ok_or_else(|| ConeError::Format(format!("bad chart tag {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridField {
    pub chart: ChartTag,
    pub beta: f64,
    pub radii: Vec<f64>,
    pub angles: Vec<f64>,
    /// Angles cover a full period uniformly (derivatives wrap around).
    pub periodic: bool,
    pub values: Vec<C64>,
}

impl GridField {
    pub fn new(
        chart: ChartTag,
        beta: f64,
        radii: Vec<f64>,
        angles: Vec<f64>,
        periodic: bool,
        values: Vec<C64>,
    ) -> Result<Self> {
        if radii.is_empty() || angles.is_empty() {
            return Err(ConeError::Grid("empty grid".into()));
        }
        if values.len() != radii.len() * angles.len() {
            return Err(ConeError::Grid(format!(
                "expected {} samples, got {}",
                radii.len() * angles.len(),
                values.len()
            )));
        }
        if radii.windows(2).any(|w| w[1] <= w[0]) || angles.windows(2).any(|w| w[1] <= w[0]) {
            return Err(ConeError::Grid("radii and angles must be strictly increasing".into()));
        }
        if radii[0] < 0.0 {
            return Err(ConeError::Grid("negative radius".into()));
        }
        Ok(GridField { chart, beta, radii, angles, periodic, values })
    }

    /// Sample `f(ρ, θ)` on the product grid.
    pub fn from_fn(
        chart: ChartTag,
        beta: f64,
        radii: Vec<f64>,
        angles: Vec<f64>,
        periodic: bool,
        f: impl Fn(f64, f64) -> C64,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(radii.len() * angles.len());
        for &r in &radii {
            for &t in &angles {
                values.push(f(r, t));
            }
        }
        GridField::new(chart, beta, radii, angles, periodic, values)
    }

    /// Periodic log-polar disc grid in the z-chart.
    pub fn disc(
        beta: f64,
        rho_min: f64,
        rho_max: f64,
        n_radii: usize,
        n_angles: usize,
        f: impl Fn(C64) -> C64,
    ) -> Result<Self> {
        let radii = crate::numerics::log_space(rho_min, rho_max, n_radii);
        let angles = crate::numerics::periodic_angles(n_angles);
        GridField::from_fn(ChartTag::Z, beta, radii, angles, true, |r, t| f(C64::from_polar(r, t)))
    }

    pub fn n_radii(&self) -> usize {
        self.radii.len()
    }

    pub fn n_angles(&self) -> usize {
        self.angles.len()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn index(&self, ir: usize, ia: usize) -> usize {
        ir * self.angles.len() + ia
    }

    pub fn at(&self, ir: usize, ia: usize) -> C64 {
        self.values[self.index(ir, ia)]
    }

    /// Sample location as a complex number.
    pub fn point(&self, ir: usize, ia: usize) -> C64 {
        C64::from_polar(self.radii[ir], self.angles[ia])
    }

    pub fn points(&self) -> Vec<C64> {
        let mut out = Vec::with_capacity(self.len());
        for ir in 0..self.n_radii() {
            for ia in 0..self.n_angles() {
                out.push(self.point(ir, ia));
            }
        }
        out
    }

    /// Same geometry, new values.
    pub fn with_values(&self, values: Vec<C64>) -> Result<Self> {
        GridField::new(self.chart, self.beta, self.radii.clone(), self.angles.clone(), self.periodic, values)
    }

    pub fn map(&self, f: impl Fn(C64, C64) -> C64) -> Self {
        let pts = self.points();
        let values = self.values.iter().zip(&pts).map(|(v, p)| f(*v, *p)).collect();
        GridField { values, ..self.clone() }
    }

    /// Index pairs of grid neighbours (offsets 1 and 2 along each axis).
    pub fn neighbor_pairs(&self) -> Vec<(usize, usize)> {
        let (nr, na) = (self.n_radii(), self.n_angles());
        let mut out = Vec::new();
        for ir in 0..nr {
            for ia in 0..na {
                let i = self.index(ir, ia);
                for d in 1..=2 {
                    if ir + d < nr {
                        out.push((i, self.index(ir + d, ia)));
                    }
                    if ia + d < na {
                        out.push((i, self.index(ir, ia + d)));
                    } else if self.periodic && na > 2 * d {
                        out.push((i, self.index(ir, (ia + d) % na)));
                    }
                    if ir + d < nr && ia + d < na {
                        out.push((i, self.index(ir + d, ia + d)));
                    }
                }
            }
        }
        out
    }

    fn log_step(&self) -> Result<f64> {
        let n = self.radii.len();
        if n < 6 {
            return Err(ConeError::Grid("need at least 6 radii for the radial stencil".into()));
        }
        if self.radii[0] <= 0.0 {
            return Err(ConeError::Singular("grid touches the singular locus".into()));
        }
        let h = (self.radii[n - 1] / self.radii[0]).ln() / (n - 1) as f64;
        for w in self.radii.windows(2) {
            if ((w[1] / w[0]).ln() - h).abs() > 1e-9 * h.max(1.0) {
                return Err(ConeError::Grid("radii are not log-uniform".into()));
            }
        }
        Ok(h)
    }

    fn angle_step(&self) -> Result<f64> {
        let n = self.angles.len();
        if self.periodic {
            if n < 5 {
                return Err(ConeError::Grid("need at least 5 angles".into()));
            }
            let h = 2.0 * PI / n as f64;
            for (k, a) in self.angles.iter().enumerate() {
                if (a - self.angles[0] - h * k as f64).abs() > 1e-9 {
                    return Err(ConeError::Grid("periodic angles must be uniform over 2π".into()));
                }
            }
            Ok(h)
        } else {
            if n < 6 {
                return Err(ConeError::Grid("need at least 6 angles for a sector stencil".into()));
            }
            let h = (self.angles[n - 1] - self.angles[0]) / (n - 1) as f64;
            for (k, a) in self.angles.iter().enumerate() {
                if (a - self.angles[0] - h * k as f64).abs() > 1e-9 * h.max(1.0) {
                    return Err(ConeError::Grid("angles are not uniform".into()));
                }
            }
            Ok(h)
        }
    }

    fn along_radius(&self, f: impl Fn(&[C64], f64, bool) -> Vec<C64>, h: f64) -> Vec<C64> {
        let (nr, na) = (self.n_radii(), self.n_angles());
        let mut out = vec![C64::new(0.0, 0.0); nr * na];
        let mut line = vec![C64::new(0.0, 0.0); nr];
        for ia in 0..na {
            for ir in 0..nr {
                line[ir] = self.at(ir, ia);
            }
            let d = f(&line, h, false);
            for ir in 0..nr {
                out[self.index(ir, ia)] = d[ir];
            }
        }
        out
    }

    fn along_angle(&self, values: &[C64], f: impl Fn(&[C64], f64, bool) -> Vec<C64>, h: f64) -> Vec<C64> {
        let na = self.n_angles();
        let mut out = Vec::with_capacity(values.len());
        for row in values.chunks(na) {
            out.extend(f(row, h, self.periodic));
        }
        out
    }

    /// ∂v/∂s with s = ln ρ.
    pub fn d_s(&self) -> Result<Vec<C64>> {
        let h = self.log_step()?;
        Ok(self.along_radius(deriv1, h))
    }

    pub fn d_ss(&self) -> Result<Vec<C64>> {
        let h = self.log_step()?;
        Ok(self.along_radius(deriv2, h))
    }

    /// Angular derivative of the given order: spectral on periodic grids,
    /// fourth-order differences on sectors.
    fn angle_derivative(&self, values: &[C64], order: u32) -> Result<Vec<C64>> {
        let h = self.angle_step()?;
        if !self.periodic {
            return Ok(if order == 1 {
                self.along_angle(values, deriv1, h)
            } else {
                self.along_angle(values, deriv2, h)
            });
        }
        let na = self.n_angles();
        let mut planner = rustfft::FftPlanner::new();
        let fwd = planner.plan_fft_forward(na);
        let inv = planner.plan_fft_inverse(na);
        let mut out = values.to_vec();
        for row in out.chunks_mut(na) {
            fwd.process(row);
            for (j, c) in row.iter_mut().enumerate() {
                let m = if j <= na / 2 { j as f64 } else { j as f64 - na as f64 };
                let factor = if order == 1 {
                    if 2 * j == na {
                        C64::new(0.0, 0.0)
                    } else {
                        I * m
                    }
                } else {
                    C64::new(-m * m, 0.0)
                };
                *c *= factor / na as f64;
            }
            inv.process(row);
        }
        Ok(out)
    }

    pub fn d_theta(&self) -> Result<Vec<C64>> {
        self.angle_derivative(&self.values, 1)
    }

    pub fn d_thetatheta(&self) -> Result<Vec<C64>> {
        self.angle_derivative(&self.values, 2)
    }

    pub fn d_s_theta(&self) -> Result<Vec<C64>> {
        let ds = self.d_s()?;
        self.angle_derivative(&ds, 1)
    }

    /// ∂²v/∂z∂z̄ = (v_ss + v_θθ) / (4ρ²).
    pub fn dd_bar(&self) -> Result<Vec<C64>> {
        let vss = self.d_ss()?;
        let vtt = self.d_thetatheta()?;
        let mut out = Vec::with_capacity(self.len());
        for ir in 0..self.n_radii() {
            let r2 = self.radii[ir] * self.radii[ir];
            for ia in 0..self.n_angles() {
                let i = self.index(ir, ia);
                out.push((vss[i] + vtt[i]) / (4.0 * r2));
            }
        }
        Ok(out)
    }

    /// ∂v/∂z = e^{-iθ}(v_s − i v_θ) / (2ρ).
    pub fn d_z(&self) -> Result<Vec<C64>> {
        let vs = self.d_s()?;
        let vt = self.d_theta()?;
        Ok(self.combine(|ir, ia, i| {
            let r = self.radii[ir];
            C64::from_polar(1.0 / (2.0 * r), -self.angles[ia]) * (vs[i] - I * vt[i])
        }))
    }

    /// ∂v/∂z̄ = e^{iθ}(v_s + i v_θ) / (2ρ).
    pub fn d_zbar(&self) -> Result<Vec<C64>> {
        let vs = self.d_s()?;
        let vt = self.d_theta()?;
        Ok(self.combine(|ir, ia, i| {
            let r = self.radii[ir];
            C64::from_polar(1.0 / (2.0 * r), self.angles[ia]) * (vs[i] + I * vt[i])
        }))
    }

    /// ∂²v/∂z² = e^{-2iθ}(D²v − 2Dv) / (4ρ²) with D = ∂_s − i∂_θ.
    pub fn d_zz(&self) -> Result<Vec<C64>> {
        let vs = self.d_s()?;
        let vt = self.d_theta()?;
        let vss = self.d_ss()?;
        let vtt = self.d_thetatheta()?;
        let vst = self.d_s_theta()?;
        Ok(self.combine(|ir, ia, i| {
            let r = self.radii[ir];
            let dv = vs[i] - I * vt[i];
            let d2v = vss[i] - 2.0 * I * vst[i] - vtt[i];
            C64::from_polar(1.0 / (4.0 * r * r), -2.0 * self.angles[ia]) * (d2v - 2.0 * dv)
        }))
    }

    fn combine(&self, f: impl Fn(usize, usize, usize) -> C64) -> Vec<C64> {
        let mut out = Vec::with_capacity(self.len());
        for ir in 0..self.n_radii() {
            for ia in 0..self.n_angles() {
                out.push(f(ir, ia, self.index(ir, ia)));
            }
        }
        out
    }

    pub fn to_csv_string(&self) -> String {
        let join = |v: &[f64]| v.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(",");
        let mut s = String::new();
        let _ = writeln!(s, "# conekit-gridfield v1");
        let _ = writeln!(s, "# chart={}", self.chart.label());
        let _ = writeln!(s, "# beta={:e}", self.beta);
        let _ = writeln!(s, "# periodic={}", self.periodic);
        let _ = writeln!(s, "# n_radii={}", self.n_radii());
        let _ = writeln!(s, "# n_angles={}", self.n_angles());
        let _ = writeln!(s, "# radii={}", join(&self.radii));
        let _ = writeln!(s, "# angles={}", join(&self.angles));
        let _ = writeln!(s, "i_r,i_theta,re,im");
        for ir in 0..self.n_radii() {
            for ia in 0..self.n_angles() {
                let v = self.at(ir, ia);
                let _ = writeln!(s, "{ir},{ia},{:e},{:e}", v.re, v.im);
            }
        }
        s
    }

    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let magic = lines.next().unwrap_or_default();
        if magic.trim() != "# conekit-gridfield v1" {
            return Err(ConeError::Format("missing gridfield header".into()));
        }
        let mut header = std::collections::HashMap::new();
        let mut body_started = false;
        let mut values = Vec::new();
        let parse_f = |s: &str| -> Result<f64> {
            s.trim().parse::<f64>().map_err(|e| ConeError::Format(format!("bad float {s:?}: {e}")))
        };
        for line in lines {
            if let Some(kv) = line.strip_prefix("# ") {
                let (k, v) = kv
                    .split_once('=')
                    .ok_or_else(|| ConeError::Format(format!("bad header line {line:?}")))?;
                header.insert(k.to_string(), v.to_string());
                continue;
            }
            if !body_started {
                if line.trim() != "i_r,i_theta,re,im" {
                    return Err(ConeError::Format("missing column header".into()));
                }
                body_started = true;
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 4 {
                return Err(ConeError::Format(format!("bad row {line:?}")));
            }
            values.push(C64::new(parse_f(cols[2])?, parse_f(cols[3])?));
        }
        let get = |k: &str| {
            header.get(k).cloned().ok_or_else(|| ConeError::Format(format!("missing header key {k}")))
        };
        let list = |s: String| -> Result<Vec<f64>> { s.split(',').map(parse_f).collect() };
        let chart = ChartTag::parse(&get("chart")?)?;
        let beta = parse_f(&get("beta")?)?;
        let periodic = get("periodic")? == "true";
        let radii = list(get("radii")?)?;
        let angles = list(get("angles")?)?;
        let nr: usize = get("n_radii")?.parse().map_err(|_| ConeError::Format("bad n_radii".into()))?;
        let na: usize = get("n_angles")?.parse().map_err(|_| ConeError::Format("bad n_angles".into()))?;
        if nr != radii.len() || na != angles.len() {
            return Err(ConeError::Format("shape mismatch in header".into()));
        }
        GridField::new(chart, beta, radii, angles, periodic, values)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut b = Vec::with_capacity(40 + 8 * (self.radii.len() + self.angles.len()) + 16 * self.len());
        b.extend_from_slice(b"CGF1");
        let (kind, idx) = match self.chart {
            ChartTag::Z => (0u8, 0u32),
            ChartTag::W(k) => (1u8, k),
        };
        b.push(kind);
        b.extend_from_slice(&idx.to_le_bytes());
        b.extend_from_slice(&self.beta.to_le_bytes());
        b.push(self.periodic as u8);
        b.extend_from_slice(&(self.radii.len() as u64).to_le_bytes());
        b.extend_from_slice(&(self.angles.len() as u64).to_le_bytes());
        for x in self.radii.iter().chain(&self.angles) {
            b.extend_from_slice(&x.to_le_bytes());
        }
        for v in &self.values {
            b.extend_from_slice(&v.re.to_le_bytes());
            b.extend_from_slice(&v.im.to_le_bytes());
        }
        b
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = bytes;
        let mut take = |n: usize| -> Result<&[u8]> {
            if cur.len() < n {
                return Err(ConeError::Format("truncated gridfield".into()));
            }
            let (a, b) = cur.split_at(n);
            cur = b;
            Ok(a)
        };
        if take(4)? != b"CGF1" {
            return Err(ConeError::Format("bad magic".into()));
        }
        let kind = take(1)?[0];
        let idx = u32::from_le_bytes(take(4)?.try_into().expect("4 bytes"));
        let chart = match kind {
            0 => ChartTag::Z,
            1 => ChartTag::W(idx),
            _ => return Err(ConeError::Format("bad chart kind".into())),
        };
        let f = |s: &[u8]| f64::from_le_bytes(s.try_into().expect("8 bytes"));
        let beta = f(take(8)?);
        let periodic = take(1)?[0] != 0;
        let nr = u64::from_le_bytes(take(8)?.try_into().expect("8 bytes")) as usize;
        let na = u64::from_le_bytes(take(8)?.try_into().expect("8 bytes")) as usize;
        if nr.saturating_mul(na) > (1 << 32) {
            return Err(ConeError::Format("implausible grid size".into()));
        }
        let mut radii = Vec::with_capacity(nr);
        for _ in 0..nr {
            radii.push(f(take(8)?));
        }
        let mut angles = Vec::with_capacity(na);
        for _ in 0..na {
            angles.push(f(take(8)?));
        }
        let mut values = Vec::with_capacity(nr * na);
        for _ in 0..nr * na {
            let re = f(take(8)?);
            let im = f(take(8)?);
            values.push(C64::new(re, im));
        }
        GridField::new(chart, beta, radii, angles, periodic, values)
    }

    /// Write CSV (`.csv`) or binary (anything else) depending on extension.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut file = std::fs::File::create(path)?;
        if path.extension().is_some_and(|e| e == "csv") {
            file.write_all(self.to_csv_string().as_bytes())?;
        } else {
            file.write_all(&self.to_bytes())?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut buf = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut buf)?;
        if buf.starts_with(b"CGF1") {
            GridField::from_bytes(&buf)
        } else {
            let text = String::from_utf8(buf).map_err(|e| ConeError::Format(e.to_string()))?;
            GridField::from_csv_str(&text)
        }
    }
}

/// Fourth-order first derivative of uniformly spaced samples.
pub(crate) fn deriv1(v: &[C64], h: f64, periodic: bool) -> Vec<C64> {
    let n = v.len();
    let mut out = vec![C64::new(0.0, 0.0); n];
    for i in 0..n {
        out[i] = if periodic {
            let g = |o: isize| v[((i as isize + o).rem_euclid(n as isize)) as usize];
            (g(-2) - 8.0 * g(-1) + 8.0 * g(1) - g(2)) / (12.0 * h)
        } else if i >= 2 && i + 2 < n {
            (v[i - 2] - 8.0 * v[i - 1] + 8.0 * v[i + 1] - v[i + 2]) / (12.0 * h)
        } else if i == 0 {
            (-25.0 * v[0] + 48.0 * v[1] - 36.0 * v[2] + 16.0 * v[3] - 3.0 * v[4]) / (12.0 * h)
        } else if i == 1 {
            (-3.0 * v[0] - 10.0 * v[1] + 18.0 * v[2] - 6.0 * v[3] + v[4]) / (12.0 * h)
        } else if i == n - 1 {
            (25.0 * v[n - 1] - 48.0 * v[n - 2] + 36.0 * v[n - 3] - 16.0 * v[n - 4] + 3.0 * v[n - 5]) / (12.0 * h)
        } else {
            (3.0 * v[n - 1] + 10.0 * v[n - 2] - 18.0 * v[n - 3] + 6.0 * v[n - 4] - v[n - 5]) / (12.0 * h)
        };
    }
    out
}

/// Fourth-order second derivative of uniformly spaced samples.
pub(crate) fn deriv2(v: &[C64], h: f64, periodic: bool) -> Vec<C64> {
    let n = v.len();
    let h2 = 12.0 * h * h;
    let mut out = vec![C64::new(0.0, 0.0); n];
    for i in 0..n {
        out[i] = if periodic {
            let g = |o: isize| v[((i as isize + o).rem_euclid(n as isize)) as usize];
            (-g(-2) + 16.0 * g(-1) - 30.0 * g(0) + 16.0 * g(1) - g(2)) / h2
        } else if i >= 2 && i + 2 < n {
            (-v[i - 2] + 16.0 * v[i - 1] - 30.0 * v[i] + 16.0 * v[i + 1] - v[i + 2]) / h2
        } else if i == 0 {
            (45.0 * v[0] - 154.0 * v[1] + 214.0 * v[2] - 156.0 * v[3] + 61.0 * v[4] - 10.0 * v[5]) / h2
        } else if i == 1 {
            (10.0 * v[0] - 15.0 * v[1] - 4.0 * v[2] + 14.0 * v[3] - 6.0 * v[4] + v[5]) / h2
        } else if i == n - 1 {
            (45.0 * v[n - 1] - 154.0 * v[n - 2] + 214.0 * v[n - 3] - 156.0 * v[n - 4] + 61.0 * v[n - 5]
                - 10.0 * v[n - 6])
                / h2
        } else {
            (10.0 * v[n - 1] - 15.0 * v[n - 2] - 4.0 * v[n - 3] + 14.0 * v[n - 4] - 6.0 * v[n - 5] + v[n - 6])
                / h2
        };
    }
    out
}
