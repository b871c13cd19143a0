//! Experiment configuration, read from a single TOML file.
//!
//! Every key has a default, but an empty file is rejected so that a run is
//! always tied to an explicit configuration. A minimal file is
//!
//! ```toml
//! name = "default"
//! seed = 20240917
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cone_charts::{check_beta, ConeParams};
use crate::error::{ConeError, Result};

/// Identifiers of the suite checks, in dependency order.
pub const CHECK_NAMES: [&str; 11] = [
    "flattening",
    "phi_bound",
    "phase_lemma",
    "poisson_convergence",
    "expansion",
    "m_eta",
    "background",
    "volume_identities",
    "ricci_potentials",
    "curvature",
    "determinism",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamPair {
    pub alpha: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    pub flattening_betas: Vec<f64>,
    pub phi_alphas: Vec<f64>,
    pub phase_alpha: f64,
    pub poisson_beta: f64,
    pub expansion_betas: Vec<f64>,
    pub alpha_primes: Vec<f64>,
    pub etas: Vec<f64>,
    pub geometries: Vec<String>,
    pub bundle_degrees: Vec<u32>,
    pub background_betas: Vec<f64>,
    pub identity_beta: f64,
    pub ricci_lambdas: Vec<f64>,
    pub curvature: ParamPair,
    /// Negative control: deliberately outside α < 1/β − 1.
    pub control: ParamPair,
    pub control_epsilon: f64,
    pub bump_amplitude: f64,
}

impl Default for Params {
    fn default() -> Self {
        Params {
            flattening_betas: vec![0.25, 0.5, 0.75],
            phi_alphas: (1..=9).map(|k| k as f64 / 10.0).collect(),
            phase_alpha: 0.5,
            poisson_beta: 0.6,
            expansion_betas: vec![0.4, 0.6, 0.75],
            alpha_primes: vec![0.2, 0.3],
            etas: vec![0.25, 0.5, 1.0, 2.0],
            geometries: vec!["disc_n1".into(), "line_bundle_p1".into()],
            bundle_degrees: vec![1, 2],
            background_betas: vec![0.4, 0.6, 0.75],
            identity_beta: 0.6,
            ricci_lambdas: vec![-1.0, 0.0, 1.0],
            curvature: ParamPair { alpha: 0.3, beta: 0.6 },
            control: ParamPair { alpha: 0.5, beta: 0.75 },
            control_epsilon: 0.1,
            bump_amplitude: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Grids {
    /// Radial resolutions of the Poisson refinement ladder.
    pub poisson_levels: Vec<usize>,
    pub poisson_angles: usize,
    pub poisson_rho_min: f64,
    pub expansion_radii: usize,
    /// Smallest sampled radius for Hölder grids.
    pub rho_min: f64,
    pub phase_radii: usize,
    pub phase_angles: usize,
    pub curvature_levels: usize,
    pub curvature_base_radii: usize,
    pub curvature_base_angles: usize,
    pub membership_radii: usize,
    pub membership_angles: usize,
}

impl Default for Grids {
    fn default() -> Self {
        Grids {
            poisson_levels: vec![100, 200, 400],
            poisson_angles: 32,
            poisson_rho_min: 1e-5,
            expansion_radii: 400,
            rho_min: 1e-4,
            phase_radii: 120,
            phase_angles: 96,
            curvature_levels: 3,
            curvature_base_radii: 128,
            curvature_base_angles: 2,
            membership_radii: 20,
            membership_angles: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Samples {
    pub flattening_points: usize,
    pub phi_grid_points: usize,
    pub phase_pairs: usize,
    pub m_eta_points: usize,
    pub convexity_triples: usize,
    pub identity_points: usize,
    pub ricci_points: usize,
    pub oracle_points: usize,
}

impl Default for Samples {
    fn default() -> Self {
        Samples {
            flattening_points: 1000,
            phi_grid_points: 1_000_000,
            phase_pairs: 100_000,
            m_eta_points: 1000,
            convexity_triples: 10_000,
            identity_points: 40,
            ricci_points: 24,
            oracle_points: 25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub flattening: f64,
    pub roundtrip: f64,
    pub phi_upper: f64,
    pub phi_lower: f64,
    pub phase_constant: f64,
    pub poisson_order: f64,
    pub poisson_residual: f64,
    pub solver: f64,
    pub solver_max_growth: f64,
    pub expansion_a_relative: f64,
    pub decay_fit: f64,
    pub decay_zero: f64,
    pub m_eta_locality: f64,
    pub m_eta_gradient_sum: f64,
    /// Relative to 1 + 2(η + η⁻¹).
    pub m_eta_convexity: f64,
    pub quadrature_nodes: usize,
    pub background_variance: f64,
    pub vanishing_r_squared: f64,
    pub gluing_exactness: f64,
    /// Residual bound as a multiple of the truncation estimate.
    pub truncation_factor: f64,
    pub model_cone_norm: f64,
    pub holder_growth_exponent: f64,
    pub refinement_growth_factor: f64,
    pub holder_noise_floor: f64,
    pub curvature_max_condition: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            flattening: 1e-12,
            roundtrip: 1e-12,
            phi_upper: 4.0,
            phi_lower: 3.99,
            phase_constant: 3.0,
            poisson_order: 1.8,
            poisson_residual: 1e-3,
            solver: 1e-9,
            solver_max_growth: 1e6,
            expansion_a_relative: 0.01,
            decay_fit: 0.05,
            decay_zero: 1e-10,
            m_eta_locality: 1e-10,
            m_eta_gradient_sum: 1e-8,
            m_eta_convexity: 1e-9,
            quadrature_nodes: 64,
            background_variance: 1e-10,
            vanishing_r_squared: 0.99,
            gluing_exactness: 1e-10,
            truncation_factor: 10.0,
            model_cone_norm: 1e-8,
            holder_growth_exponent: 0.01,
            refinement_growth_factor: 1.5,
            holder_noise_floor: 1e-6,
            curvature_max_condition: crate::curvature::MAX_CONDITION,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Subset of [`CHECK_NAMES`] to run; empty means all.
    pub checks: Vec<String>,
    pub negative_controls: bool,
    pub params: Params,
    pub grids: Grids,
    pub samples: Samples,
    pub tolerances: Tolerances,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            name: "default".into(),
            seed: 20240917,
            output_dir: PathBuf::from("conekit-out"),
            checks: Vec::new(),
            negative_controls: true,
            params: Params::default(),
            grids: Grids::default(),
            samples: Samples::default(),
            tolerances: Tolerances::default(),
        }
    }
}

fn strictly_increasing(v: &[usize]) -> bool {
    v.windows(2).all(|w| w[0] < w[1])
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let meaningful = text.lines().any(|l| {
            let t = l.trim();
            !t.is_empty() && !t.starts_with('#')
        });
        if !meaningful {
            return Err(ConeError::Config(
                "empty config; usage: conekit run --config <file.toml> with at least `name` and `seed`".into(),
            ));
        }
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| ConeError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConeError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ConeError::Config(m));
        for c in &self.checks {
            if !CHECK_NAMES.contains(&c.as_str()) {
                return bad(format!("unknown check '{c}'"));
            }
        }
        let g = &self.grids;
        if g.poisson_levels.len() != 3 || !strictly_increasing(&g.poisson_levels) {
            return bad("grids.poisson_levels must be three strictly increasing resolutions".into());
        }
        if g.curvature_levels < 3 {
            return bad("grids.curvature_levels must be at least 3".into());
        }
        if g.curvature_base_radii < 4 || g.curvature_base_angles < 2 || g.poisson_angles < 4 {
            return bad("grid resolutions too small".into());
        }
        if !(g.rho_min > 0.0 && g.rho_min < 1.0 && g.poisson_rho_min > 0.0 && g.poisson_rho_min < 1.0) {
            return bad("rho_min values must lie in (0, 1)".into());
        }
        let p = &self.params;
        for &b in p
            .flattening_betas
            .iter()
            .chain(&p.expansion_betas)
            .chain(&p.background_betas)
            .chain([&p.poisson_beta, &p.identity_beta, &p.curvature.beta, &p.control.beta])
        {
            check_beta(b).map_err(|e| ConeError::Config(e.to_string()))?;
        }
        ConeParams::new(p.curvature.alpha, p.curvature.beta).map_err(|e| ConeError::Config(e.to_string()))?;
        if p.phi_alphas.iter().chain([&p.phase_alpha]).any(|a| !(*a > 0.0 && *a < 1.0)) {
            return bad("Hölder exponents must lie in (0, 1)".into());
        }
        if p.etas.iter().any(|e| !(*e > 0.0)) {
            return bad("params.etas must be positive".into());
        }
        for name in &p.geometries {
            if name != "disc_n1" && name != "line_bundle_p1" {
                return bad(format!("unknown geometry '{name}'"));
            }
        }
        if p.bundle_degrees.iter().any(|k| !(1..=2).contains(k)) {
            return bad("bundle degrees must be 1 or 2".into());
        }
        let t = &self.tolerances;
        let positive = [
            t.flattening,
            t.roundtrip,
            t.phase_constant,
            t.poisson_residual,
            t.solver,
            t.expansion_a_relative,
            t.decay_fit,
            t.m_eta_locality,
            t.m_eta_gradient_sum,
            t.m_eta_convexity,
            t.background_variance,
            t.gluing_exactness,
            t.truncation_factor,
            t.model_cone_norm,
            t.refinement_growth_factor,
        ];
        if positive.iter().any(|x| !(*x > 0.0)) {
            return bad("tolerances must be positive".into());
        }
        if t.quadrature_nodes < 8 {
            return bad("tolerances.quadrature_nodes must be at least 8".into());
        }
        Ok(())
    }

    /// Whether the named check is selected.
    pub fn selected(&self, name: &str) -> bool {
        self.checks.is_empty() || self.checks.iter().any(|c| c == name)
    }
}
