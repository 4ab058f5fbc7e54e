//! Run configuration: a single TOML file describing the grid, potential,
//! nonlinearity, solver tolerances and integrator, validated up front and
//! hashed into every output for provenance.

use crate::dynamics::{IntegratorConfig, Scheme};
use crate::error::{Error, Result};
use crate::profile::NonlinearitySpec;
use crate::spectral::{build_operator, Grid, GridOperator};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

pub const DEFAULT_CONFIG: &str = include_str!("../../../configs/default.toml");

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub n_points: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialSpec {
    /// Sum of Gaussian wells -depth_i exp(-((x-center_i)/width_i)^2).
    GaussianWells {
        depths: Vec<f64>,
        centers: Vec<f64>,
        widths: Vec<f64>,
    },
    /// -depth sech^2(x).
    Sech2 { depth: f64 },
    /// Two-column CSV (x, V) sampled exactly on the run grid.
    Tabulated { path: String },
}

impl PotentialSpec {
    pub fn sample(&self, grid: &Grid) -> Result<Vec<f64>> {
        match self {
            PotentialSpec::GaussianWells {
                depths,
                centers,
                widths,
            } => {
                if depths.len() != centers.len() || depths.len() != widths.len() {
                    return Err(Error::Config(
                        "gaussian_wells needs matching depths/centers/widths".into(),
                    ));
                }
                if depths.is_empty() {
                    return Err(Error::Config("gaussian_wells needs at least one well".into()));
                }
                if widths.iter().any(|w| *w <= 0.0) {
                    return Err(Error::Config("gaussian well widths must be positive".into()));
                }
                Ok(grid
                    .xs()
                    .iter()
                    .map(|&x| {
                        depths
                            .iter()
                            .zip(centers)
                            .zip(widths)
                            .map(|((&d, &c), &w)| -d * (-((x - c) / w).powi(2)).exp())
                            .sum()
                    })
                    .collect())
            }
            PotentialSpec::Sech2 { depth } => {
                if *depth <= 0.0 {
                    return Err(Error::Config("sech2 depth must be positive".into()));
                }
                Ok(grid
                    .xs()
                    .iter()
                    .map(|&x| -depth / x.cosh().powi(2))
                    .collect())
            }
            PotentialSpec::Tabulated { path } => {
                let text = std::fs::read_to_string(path)?;
                let mut vals = Vec::new();
                for (lineno, line) in text.lines().enumerate() {
                    let line = line.trim();
                    if line.is_empty() || line.starts_with('#') || line.starts_with('x') {
                        continue;
                    }
                    let mut parts = line.split(',');
                    let x: f64 = parts
                        .next()
                        .and_then(|s| s.trim().parse().ok())
                        .ok_or_else(|| {
                            Error::Config(format!("{path}:{}: bad x value", lineno + 1))
                        })?;
                    let v: f64 = parts
                        .next()
                        .and_then(|s| s.trim().parse().ok())
                        .ok_or_else(|| {
                            Error::Config(format!("{path}:{}: bad V value", lineno + 1))
                        })?;
                    vals.push((x, v));
                }
                if vals.len() != grid.n_points {
                    return Err(Error::Config(format!(
                        "tabulated potential has {} rows, grid has {} points",
                        vals.len(),
                        grid.n_points
                    )));
                }
                let h = grid.h();
                for (i, (x, _)) in vals.iter().enumerate() {
                    if (x - grid.x(i)).abs() > 1e-9 * (1.0 + h) {
                        return Err(Error::Config(format!(
                            "tabulated x column does not match the run grid at row {i}"
                        )));
                    }
                }
                Ok(vals.into_iter().map(|(_, v)| v).collect())
            }
        }
    }
}

fn default_profile_radius() -> f64 {
    0.05
}
fn default_fgr_tau() -> f64 {
    1e-4
}
fn default_seed() -> u64 {
    1
}
fn default_out_dir() -> String {
    "out".into()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileSettings {
    /// Validity radius for ||z||_1; base points beyond it are refused.
    #[serde(default = "default_profile_radius")]
    pub radius: f64,
}

impl Default for ProfileSettings {
    fn default() -> Self {
        Self {
            radius: default_profile_radius(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FgrSettings {
    /// Positivity threshold for the damping rates.
    #[serde(default = "default_fgr_tau")]
    pub tau: f64,
    /// Optional explicit epsilon ladder (decreasing); empty selects the
    /// automatic ladder.
    #[serde(default)]
    pub epsilon_ladder: Vec<f64>,
}

impl Default for FgrSettings {
    fn default() -> Self {
        Self {
            tau: default_fgr_tau(),
            epsilon_ladder: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSpec {
    pub dt: f64,
    pub t_final: f64,
    #[serde(default = "default_scheme")]
    pub scheme: String,
    pub sponge_width: f64,
    pub sponge_strength: f64,
    pub sample_interval: f64,
}

fn default_scheme() -> String {
    "strang".into()
}

impl IntegratorSpec {
    pub fn build(&self) -> Result<IntegratorConfig> {
        let scheme = match self.scheme.as_str() {
            "strang" => Scheme::Strang,
            "crank_nicolson" => Scheme::CrankNicolson,
            other => {
                return Err(Error::Config(format!(
                    "unknown scheme '{other}' (expected strang or crank_nicolson)"
                )))
            }
        };
        Ok(IntegratorConfig {
            dt: self.dt,
            t_final: self.t_final,
            scheme,
            sponge_width: self.sponge_width,
            sponge_strength: self.sponge_strength,
            sample_interval: self.sample_interval,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSpec {
    /// Initial coordinates: amplitude per discrete mode; phases start at 0.
    pub z0: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridSpec,
    pub potential: PotentialSpec,
    /// Taylor coefficients of g at 0: g(s) = c0 s + c1 s^2 + ...
    pub nonlinearity: Vec<f64>,
    #[serde(default)]
    pub profile: ProfileSettings,
    #[serde(default)]
    pub fgr: FgrSettings,
    pub integrator: IntegratorSpec,
    pub simulate: SimulateSpec,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: String,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("config parse: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        Grid::new(self.grid.x_min, self.grid.x_max, self.grid.n_points)?;
        NonlinearitySpec::new(self.nonlinearity.clone())?;
        if !(self.profile.radius > 0.0) {
            return Err(Error::Config("profile radius must be positive".into()));
        }
        if !(self.fgr.tau >= 0.0) {
            return Err(Error::Config("fgr tau must be nonnegative".into()));
        }
        if !self
            .fgr
            .epsilon_ladder
            .windows(2)
            .all(|w| w[0] > w[1] && w[1] > 0.0)
            || self.fgr.epsilon_ladder.first().map_or(false, |&e| e <= 0.0)
        {
            return Err(Error::Config(
                "fgr epsilon ladder must be positive and strictly decreasing".into(),
            ));
        }
        if self.integrator.dt <= 0.0
            || self.integrator.t_final < 0.0
            || self.integrator.sample_interval <= 0.0
        {
            return Err(Error::Config(
                "integrator dt, t_final and sample_interval must be positive".into(),
            ));
        }
        self.integrator.build()?;
        if self.simulate.z0.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Config(
                "initial amplitudes must be finite and nonnegative".into(),
            ));
        }
        let z1: f64 = self.simulate.z0.iter().sum();
        if z1 >= self.profile.radius {
            return Err(Error::Config(format!(
                "initial amplitude sum {z1} exceeds the profile radius {}",
                self.profile.radius
            )));
        }
        Ok(())
    }

    /// Hash of the canonical serialized form; recorded in every output.
    pub fn hash(&self) -> String {
        let canonical = toml::to_string(self).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(canonical.as_bytes());
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn build_grid(&self) -> Result<Grid> {
        Grid::new(self.grid.x_min, self.grid.x_max, self.grid.n_points)
    }

    pub fn build_operator(&self) -> Result<GridOperator> {
        let grid = self.build_grid()?;
        let v = self.potential.sample(&grid)?;
        build_operator(grid, v)
    }

    pub fn build_nonlinearity(&self) -> Result<NonlinearitySpec> {
        NonlinearitySpec::new(self.nonlinearity.clone())
    }
}
