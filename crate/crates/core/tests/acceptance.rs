//! Acceptance suite: runs the default experiment twice and checks every
//! criterion against the report and against oracles computed here.
//! Prints one line per criterion; exits non-zero if any fails.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use conekit::background::{build_background_u, BackgroundParams, ModelGeometry};
use conekit::cone_charts::{ChartMap, ConeParams};
use conekit::cone_poisson::{boundary_from_fn, extract_expansion, solve_poisson};
use conekit::curvature::{riemann, FdStep, FnMetric, PotentialMetric};
use conekit::glue_max::{m_eta, MollifierSpec};
use conekit::grid::{ChartTag, GridField};
use conekit::harness::{run_suite_timed, ExperimentConfig, RunReport, Status};
use conekit::weighted_holder::{phi_function, phi_scan};

type CMat = nalgebra::DMatrix<C64>;

struct Line {
    criterion: u32,
    title: &'static str,
    pass: bool,
    detail: String,
}

type Oracle = (bool, String);

fn rng(salt: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(0x5eed ^ salt)
}

/// Statuses of every check filed under `criterion`.
fn report_status(report: &RunReport, criterion: u32) -> (bool, String) {
    let checks: Vec<_> = report.checks.iter().filter(|c| c.criterion == criterion).collect();
    let ok = !checks.is_empty() && checks.iter().all(|c| c.status.ok());
    let desc = checks.iter().map(|c| format!("{}={}", c.name, c.status.label())).collect::<Vec<_>>().join(",");
    (ok, desc)
}

/// β²|z|^{2β−2}|dz/dw|² = 1 with dz/dw = z/(βw) read off the chart map.
fn oracle_flattening() -> Oracle {
    let mut worst = 0.0f64;
    let mut r = rng(1);
    for beta in [0.25, 0.5, 0.75] {
        for chart in ChartMap::all(beta).unwrap() {
            for w in chart.sample_sector(&mut r, 400, 1e-3, 1.0) {
                let z = chart.psi(&w).unwrap().last();
                let wc = C64::from_polar(w.modulus, w.arg);
                let dz = z / (beta * wc);
                let pulled = beta * beta * z.norm().powf(2.0 * beta - 2.0) * dz.norm_sqr();
                worst = worst.max((pulled - 1.0).abs());
                // Branch consistency: z^β along the sector argument reproduces w.
                let back = C64::from_polar(z.norm().powf(beta), w.arg);
                worst = worst.max((back - wc).norm() / wc.norm());
            }
        }
    }
    (worst <= 1e-12, format!("oracle max error {worst:.2e}"))
}

/// sup_r φ(r, t) in closed form: (2 − 2cos t)/sin^{2α} t when cos t > 0,
/// 2 − 2cos t otherwise; its maximum over t is 4, attained at t = π.
fn oracle_phi() -> Oracle {
    let alphas: Vec<f64> = (1..=9).map(|i| i as f64 / 10.0).collect();
    let mut closed_max = 0.0f64;
    for &a in &alphas {
        for i in 0..=20_000 {
            let t = PI * i as f64 / 20_000.0;
            let c = t.cos();
            let s = if c > 0.0 { (2.0 - 2.0 * c) / (t.sin().powi(2)).powf(a) } else { 2.0 - 2.0 * c };
            if s.is_finite() {
                closed_max = closed_max.max(s);
            }
        }
    }
    let mut r = rng(2);
    let mut sampled = 0.0f64;
    let mut formula_gap = 0.0f64;
    for _ in 0..100_000 {
        let (rr, t, a) = (10f64.powf(r.gen_range(-4.0..1.0)), r.gen_range(0.0..PI), alphas[r.gen_range(0..9)]);
        let v = phi_function(rr, t, a).unwrap();
        let own = (2.0 - 2.0 * t.cos()) / (rr * rr - 2.0 * rr * t.cos() + 1.0).powf(a);
        formula_gap = formula_gap.max((v - own).abs());
        sampled = sampled.max(v);
    }
    let scan = phi_scan(1e-4, 10.0, 1002, 1002, &alphas).unwrap();
    let ok = (closed_max - 4.0).abs() < 1e-12 && sampled <= 4.0 && formula_gap < 1e-12 && scan.max <= 4.0 && scan.max >= 3.99;
    (ok, format!("closed-form sup {closed_max}, sampled max {sampled:.6}, scan max {:.6}", scan.max))
}

/// Pairwise Hölder quotients of f and g = (w/|w|) f computed directly.
fn oracle_phase() -> Oracle {
    let alpha = 0.5;
    let fs: [fn(C64) -> C64; 3] = [
        |w| C64::new(w.re, 0.0),
        |w| C64::new(w.norm().sqrt(), 0.0),
        |w| C64::new(w.norm().powf(0.8) * (2.0 * w.arg()).sin(), 0.0),
    ];
    let mut r = rng(3);
    let mut worst = 0.0f64;
    for f in fs {
        let pts: Vec<C64> = (0..600).map(|_| C64::from_polar(r.gen_range(0.0f64..1.0).sqrt(), r.gen_range(-PI..PI))).collect();
        let g = |w: C64| if w.norm() == 0.0 { C64::new(0.0, 0.0) } else { w / w.norm() * f(w) };
        let (mut sf, mut sg) = (0.0f64, 0.0f64);
        for i in 0..pts.len() {
            for j in 0..i {
                let d = (pts[i] - pts[j]).norm().powf(alpha);
                sf = sf.max((f(pts[i]) - f(pts[j])).norm() / d);
                sg = sg.max((g(pts[i]) - g(pts[j])).norm() / d);
            }
        }
        worst = worst.max(sg / sf);
    }
    (worst <= 3.0, format!("oracle worst seminorm ratio {worst:.3} over 3×179700 pairs"))
}

/// Own three-level solve of Δ_β v = 1, error against |z|^{2β}.
fn oracle_poisson(cfg: &ExperimentConfig) -> Oracle {
    let beta = cfg.params.poisson_beta;
    let g = &cfg.grids;
    let exact = |z: C64| C64::new(z.norm().powf(2.0 * beta), 0.0);
    let mut errs = Vec::new();
    for &n in &g.poisson_levels {
        let f = GridField::disc(beta, g.poisson_rho_min, 1.0, n, g.poisson_angles, |_| C64::new(1.0, 0.0)).unwrap();
        let v = solve_poisson(&f, beta, &boundary_from_fn(&f, exact).unwrap()).unwrap();
        let e = v.points().iter().zip(&v.values).map(|(z, val)| (val - exact(*z)).norm()).fold(0.0, f64::max);
        errs.push((n, e));
    }
    let order = |a: (usize, f64), b: (usize, f64)| (a.1 / b.1).ln() / ((b.0 - 1) as f64 / (a.0 - 1) as f64).ln();
    let o = order(errs[0], errs[1]).min(order(errs[1], errs[2]));
    (o >= 1.8, format!("oracle order {o:.3}, finest error {:.2e}", errs[2].1))
}

/// Closed-form v = A|z|^{2β} + |z|^p + Bz with its exact source.
fn oracle_expansion(cfg: &ExperimentConfig) -> Oracle {
    let g = &cfg.grids;
    let (a_true, b_true) = (1.7, C64::new(-0.2, 0.1));
    let mut worst_a = 0.0f64;
    let mut b_ok = true;
    let mut slack = f64::INFINITY;
    for &beta in &cfg.params.expansion_betas {
        let alpha = (0.96 * (1.0 / beta - 1.0)).min(0.9);
        for &ap in &cfg.params.alpha_primes {
            let active = ap * beta > 1.0 - 2.0 * beta;
            let b = if active { b_true } else { C64::new(0.0, 0.0) };
            let p = 2.0 * beta + ap * beta + 0.15;
            let v = GridField::disc(beta, g.poisson_rho_min, 1.0, g.expansion_radii, g.poisson_angles, |z| {
                C64::new(a_true * z.norm().powf(2.0 * beta) + z.norm().powf(p), 0.0) + b * z
            })
            .unwrap();
            let k = p / (2.0 * beta);
            let ft = GridField::disc(beta, g.poisson_rho_min, 1.0, g.expansion_radii, g.poisson_angles, |z| {
                C64::new(beta * beta * (a_true + k * k * z.norm().powf(p - 2.0 * beta)), 0.0)
            })
            .unwrap();
            let e = extract_expansion(&v, &ft, &ConeParams::new(alpha, beta).unwrap(), ap).unwrap();
            worst_a = worst_a.max((e.a - a_true).norm() / a_true);
            b_ok &= if active { (e.b - b_true).norm() / b_true.norm() <= 0.01 } else { e.b == C64::new(0.0, 0.0) };
            for fit in [&e.decay.second_derivative, &e.decay.combined] {
                slack = slack.min(if fit.identically_zero { f64::INFINITY } else { fit.slope - (ap * beta - 0.05) });
            }
        }
    }
    let ok = worst_a <= 0.01 && b_ok && slack >= 0.0;
    (ok, format!("oracle a rel error {worst_a:.2e}, b ok {b_ok}, min slope slack {slack:.3}"))
}

/// Direct midpoint quadrature of ∫∫ max(t₁ + x/η, t₂ + ηy) θ(x)θ(y) dx dy.
fn oracle_m_eta() -> Oracle {
    let n = 2000;
    let xs: Vec<f64> = (0..n).map(|i| -1.0 + (i as f64 + 0.5) * 2.0 / n as f64).collect();
    let raw: Vec<f64> = xs.iter().map(|x| (-1.0 / (1.0 - x * x)).exp()).collect();
    let total: f64 = raw.iter().sum();
    let w: Vec<f64> = raw.iter().map(|v| v / total).collect();
    let mut worst_quad = 0.0f64;
    let mut worst_local = 0.0f64;
    let mut below_max = 0usize;
    for (t1, t2, eta) in [(0.0, 0.0, 0.5), (0.3, -0.1, 1.0), (-1.0, 0.2, 2.0), (0.7, 0.4, 0.25), (2.0, 1.1, 1.0)] {
        let spec = MollifierSpec::new(eta).unwrap();
        let mut own = 0.0;
        for (x, wx) in xs.iter().zip(&w) {
            for (y, wy) in xs.iter().zip(&w) {
                own += wx * wy * (t1 + x / eta).max(t2 + eta * y);
            }
        }
        let lib = m_eta(t1, t2, &spec).unwrap();
        worst_quad = worst_quad.max((lib - own).abs());
        below_max += (lib < f64::max(t1, t2)) as usize;
        let gap = eta + 1.0 / eta;
        worst_local = worst_local.max((m_eta(t1 + gap + 0.01, t1, &spec).unwrap() - (t1 + gap + 0.01)).abs());
        worst_local = worst_local.max((m_eta(t2, t2 + gap + 0.01, &spec).unwrap() - (t2 + gap + 0.01)).abs());
    }
    let ok = worst_quad <= 1e-5 && worst_local <= 1e-10 && below_max == 0;
    (ok, format!("oracle quadrature gap {worst_quad:.2e}, locality {worst_local:.2e}"))
}

/// u on D and positivity of ω + i∂∂̄u, read point by point from the potential.
fn oracle_background() -> Oracle {
    let geom = ModelGeometry::line_bundle_p1(1).unwrap();
    let res = build_background_u(&geom, &BackgroundParams::default()).unwrap();
    let pot = res.potential().unwrap();
    let mut r = rng(7);
    let on_d: Vec<f64> =
        (0..200).map(|_| pot.u_value(&[C64::from_polar(r.gen_range(0.0..3.0), r.gen_range(-PI..PI)), C64::new(0.0, 0.0)])).collect();
    let mean = on_d.iter().sum::<f64>() / on_d.len() as f64;
    let var = on_d.iter().map(|u| (u - mean).powi(2)).sum::<f64>() / on_d.len() as f64;
    let min_eig = |m: &CMat| nalgebra::Matrix2::new(m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]).symmetric_eigenvalues().min();
    // ω + i∂∂̄u degenerates towards D by construction; ω₀ must stay positive.
    let (mut semi, mut omega0_min) = (f64::INFINITY, f64::INFINITY);
    for _ in 0..200 {
        let p = [
            C64::from_polar(r.gen_range(0.0..2.0), r.gen_range(-PI..PI)),
            C64::from_polar(10f64.powf(r.gen_range(-4.0..-0.5)), r.gen_range(-PI..PI)),
        ];
        let m: CMat = pot.omega_u(&p).unwrap();
        let scale = m.iter().map(|v| v.norm()).fold(0.0, f64::max);
        semi = semi.min(min_eig(&m) / scale);
        for beta in [0.4, 0.6, 0.75] {
            omega0_min = omega0_min.min(min_eig(&pot.omega0(&p, beta).unwrap()));
        }
    }
    let ok = var <= 1e-10 && semi >= -1e-12 && omega0_min > 0.0;
    (ok, format!("oracle u variance on D {var:.2e}, min relative eigenvalue of ω+i∂∂̄u {semi:.2e}, of ω₀ {omega0_min:.2e}"))
}

/// Constant curvature 2 of i∂∂̄ log(1+|w|²), and K = −4/(1+4|w|²)³ from the potential |w|² + |w|⁴.
fn oracle_curvature() -> Oracle {
    let pts: Vec<Vec<C64>> = (0..24).map(|i| vec![C64::from_polar(0.05 + 0.04 * i as f64, 0.7 * i as f64)]).collect();
    let fs = FnMetric { dim: 1, f: |w: &[C64]| CMat::from_element(1, 1, C64::new((1.0 + w[0].norm_sqr()).powi(-2), 0.0)) };
    let field = riemann(&fs, ChartTag::W(1), &pts, FdStep { cap: 1e-2, fraction: 1.0 }).unwrap();
    let fs_err = field.points.iter().map(|p| (p.norm - 2.0).abs()).fold(0.0, f64::max);
    let pot = PotentialMetric { dim: 1, potential: |w: &[C64]| w[0].norm_sqr() + w[0].norm_sqr().powi(2), step: 1e-3 };
    let field = riemann(&pot, ChartTag::W(1), &pts, FdStep { cap: 1e-2, fraction: 1.0 }).unwrap();
    let k_err = field
        .points
        .iter()
        .map(|p| {
            let g = 1.0 + 4.0 * p.w[0].norm_sqr();
            (p.rm[0].re / (g * g) + 4.0 / g.powi(3)).abs()
        })
        .fold(0.0, f64::max);
    let ok = fs_err <= 1e-6 && k_err <= 1e-4;
    (ok, format!("oracle |‖Rm‖−2| {fs_err:.2e} (closed-form metric), |K−K_exact| {k_err:.2e} (FD potential)"))
}

fn main() -> ExitCode {
    let cfg = ExperimentConfig::default();
    let start = Instant::now();
    let (first, timings) = run_suite_timed(&cfg).expect("suite runs");
    let (second, _) = run_suite_timed(&cfg).expect("suite runs");
    let suite_secs = start.elapsed().as_secs_f64();
    let (ja, jb) = (first.to_json(), second.to_json());

    let oracles: [(u32, &str, Option<Oracle>); 11] = [
        (1, "flattening identity", Some(oracle_flattening())),
        (2, "phi bounded by 4", Some(oracle_phi())),
        (3, "phase lemma constant", Some(oracle_phase())),
        (4, "poisson convergence", Some(oracle_poisson(&cfg))),
        (5, "expansion extraction", Some(oracle_expansion(&cfg))),
        (6, "regularized max properties", Some(oracle_m_eta())),
        (7, "background construction", Some(oracle_background())),
        (8, "volume identities", None),
        (9, "ricci potentials", None),
        (10, "curvature pipeline", Some(oracle_curvature())),
        (11, "determinism", Some((ja == jb, format!("{} report bytes, identical {}", ja.len(), ja == jb)))),
    ];

    let mut lines = Vec::new();
    for (criterion, title, oracle) in oracles {
        let (rep_ok, desc) = report_status(&first, criterion);
        let (or_ok, or_desc) = oracle.unwrap_or((true, "report measurements only".into()));
        // Negative controls must be recorded as expected failures, not skipped.
        let controls_ok = match criterion {
            8 => first.check("dw_control").is_some_and(|c| c.status == Status::ExpectedFail),
            10 => first.check("curvature_control").is_some_and(|c| c.status == Status::ExpectedFail),
            _ => true,
        };
        lines.push(Line { criterion, title, pass: rep_ok && or_ok && controls_ok, detail: format!("{desc}; {or_desc}") });
    }

    let mut all = true;
    for l in &lines {
        all &= l.pass;
        println!("criterion {:>2} {} {}: {}", l.criterion, if l.pass { "PASS" } else { "FAIL" }, l.title, l.detail);
    }
    let check_secs: f64 = timings.values().sum();
    println!("suite: two runs in {suite_secs:.1} s (single run checks {check_secs:.1} s)");
    if all {
        println!("acceptance: all 11 criteria pass");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: FAILED");
        ExitCode::FAILURE
    }
}
