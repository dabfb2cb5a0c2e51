//! Flat `key = value` run configuration. `#` starts a comment, every key has a
//! default and unknown keys are rejected.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use qtensor_core::dynamics::{Splitting, StepperConfig};
use qtensor_core::energy::{EnergyError, PotentialParams};
use qtensor_core::equilibrium::{CauchyNorm, Thresholds};
use qtensor_core::grid::{Boundary, Grid, GridError, PoissonMethod};
use qtensor_core::tensor::{BulkForce, Stretching};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: key `{key}` given twice")]
    Duplicate { line: usize, key: String },
    #[error("line {line}: bad value `{value}` for `{key}` (expected {expected})")]
    BadValue {
        line: usize,
        key: String,
        value: String,
        expected: &'static str,
    },
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Params(#[from] EnergyError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("{0}")]
    Invalid(String),
}

/// Initial order parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    /// Seeded i.i.d. entries, symmetrised and made traceless, times `init_amplitude`.
    Random,
    /// Constant uniaxial state with order `init_s` along x.
    Uniaxial,
    /// `Q = 0`.
    Zero,
}

/// Every setting of one run. Field names are the config keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub nx: usize,
    pub ny: usize,
    /// 1 selects a 2D grid.
    pub nz: usize,
    pub h: f64,
    pub bc: Boundary,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub epsilon: f64,
    pub nu: f64,
    pub gamma: f64,
    /// Coercivity shift; `None` (`auto`) uses the certified minimum.
    pub mu: Option<f64>,
    pub dt: f64,
    pub t_end: f64,
    pub stretching: Stretching,
    pub bulk: BulkForce,
    pub splitting: Splitting,
    /// Stabilisation for `convex_split`; `None` (`auto`) derives it from the initial state.
    pub kappa: Option<f64>,
    pub projection_tol: f64,
    pub poisson: PoissonMethod,
    pub project_each_step: bool,
    pub flow: bool,
    pub init: InitKind,
    pub init_amplitude: f64,
    pub init_s: f64,
    /// Amplitude of a divergence-free initial vortex; 0 starts at rest.
    pub velocity_amplitude: f64,
    pub seed: u64,
    /// Snapshot cadence in steps; 0 disables snapshots.
    pub snapshot_every: usize,
    pub out: PathBuf,
    /// Stop once the dissipation rate drops to this value; 0 disables.
    pub dissipation_floor: f64,
    pub residual_tol: f64,
    pub u_tol: f64,
    pub cauchy_tol: f64,
    pub energy_gap_tol: f64,
    pub cauchy_norm: CauchyNorm,
}

impl Default for RunConfig {
    fn default() -> Self {
        let t = Thresholds::default();
        RunConfig {
            nx: 32,
            ny: 32,
            nz: 1,
            h: 1.0 / 32.0,
            bc: Boundary::Box,
            a: -1.0,
            b: 0.0,
            c: 1.0,
            epsilon: 0.1,
            nu: 1.0,
            gamma: 1.0,
            mu: None,
            dt: 1e-3,
            t_end: 1.0,
            stretching: Stretching::Full,
            bulk: BulkForce::F,
            splitting: Splitting::SemiImplicit,
            kappa: None,
            projection_tol: 1e-10,
            poisson: PoissonMethod::Spectral,
            project_each_step: false,
            flow: true,
            init: InitKind::Random,
            init_amplitude: 1.0,
            init_s: 0.5,
            velocity_amplitude: 0.0,
            seed: 1,
            snapshot_every: 100,
            out: PathBuf::from("out"),
            dissipation_floor: 0.0,
            residual_tol: t.critical_residual,
            u_tol: t.u_norm,
            cauchy_tol: t.cauchy,
            energy_gap_tol: t.energy_gap,
            cauchy_norm: CauchyNorm::L2,
        }
    }
}

/// Key names with a one-line description, in file order.
pub const KEYS: &[(&str, &str)] = &[
    ("nx", "cells along x (32)"),
    ("ny", "cells along y (32)"),
    ("nz", "cells along z, 1 for 2D (1)"),
    ("h", "grid spacing (1/32)"),
    ("bc", "box | periodic (box)"),
    ("a", "quadratic coefficient (-1)"),
    ("b", "cubic coefficient (0)"),
    ("c", "quartic coefficient, > 0 (1)"),
    ("epsilon", "elastic constant (0.1)"),
    ("nu", "viscosity (1)"),
    ("gamma", "relaxation rate (1)"),
    ("mu", "coercivity shift or auto (auto)"),
    ("dt", "time step (1e-3)"),
    ("t_end", "final time (1)"),
    ("stretching", "full | antisym (full)"),
    ("bulk", "f | f_pz (f)"),
    ("splitting", "semi_implicit | convex_split (semi_implicit)"),
    ("kappa", "convex-split stabilisation or auto (auto)"),
    (
        "projection_tol",
        "relative divergence bound after projection (1e-10)",
    ),
    ("poisson", "spectral | cg (spectral)"),
    (
        "project_each_step",
        "re-project Q onto symmetric traceless (false)",
    ),
    ("flow", "solve for the velocity (true)"),
    ("init", "random | uniaxial | zero (random)"),
    ("init_amplitude", "scale of random initial Q (1)"),
    ("init_s", "order of uniaxial initial Q (0.5)"),
    ("velocity_amplitude", "initial vortex amplitude (0)"),
    ("seed", "seed of random initial data (1)"),
    (
        "snapshot_every",
        "snapshot cadence in steps, 0 disables (100)",
    ),
    ("out", "output directory (out)"),
    (
        "dissipation_floor",
        "stop when the dissipation rate falls to this, 0 disables (0)",
    ),
    ("residual_tol", "critical-point residual threshold (1e-6)"),
    ("u_tol", "final velocity norm threshold (1e-8)"),
    ("cauchy_tol", "snapshot increment threshold (1e-8)"),
    ("energy_gap_tol", "relative energy gap threshold (1e-10)"),
    ("cauchy_norm", "l2 | h_minus1 (l2)"),
];

fn parse_f64(v: &str) -> Option<f64> {
    v.parse::<f64>().ok().filter(|x| x.is_finite())
}

fn parse_auto(v: &str) -> Option<Option<f64>> {
    if v == "auto" {
        Some(None)
    } else {
        parse_f64(v).map(Some)
    }
}

fn parse_bool(v: &str) -> Option<bool> {
    match v {
        "true" | "yes" | "1" => Some(true),
        "false" | "no" | "0" => Some(false),
        _ => None,
    }
}

impl RunConfig {
    /// Parses config text on top of the defaults.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = RunConfig::default();
        let mut seen = std::collections::HashSet::new();
        for (n, raw) in text.lines().enumerate() {
            let line = n + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (key, value) = body
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .filter(|(k, v)| !k.is_empty() && !v.is_empty())
                .ok_or_else(|| ConfigError::Syntax {
                    line,
                    text: raw.trim().to_string(),
                })?;
            if !KEYS.iter().any(|(k, _)| *k == key) {
                return Err(ConfigError::UnknownKey {
                    line,
                    key: key.into(),
                });
            }
            if !seen.insert(key.to_string()) {
                return Err(ConfigError::Duplicate {
                    line,
                    key: key.into(),
                });
            }
            cfg.set(line, key, value)?;
        }
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.into(),
            source,
        })?;
        Self::parse(&text)
    }

    fn set(&mut self, line: usize, key: &str, value: &str) -> Result<(), ConfigError> {
        let bad = |expected: &'static str| ConfigError::BadValue {
            line,
            key: key.into(),
            value: value.into(),
            expected,
        };
        let real = || parse_f64(value).ok_or_else(|| bad("a finite number"));
        let count = || {
            value
                .parse::<usize>()
                .map_err(|_| bad("a non-negative integer"))
        };
        let flag = || parse_bool(value).ok_or_else(|| bad("true or false"));
        let auto = || parse_auto(value).ok_or_else(|| bad("a finite number or auto"));
        match key {
            "nx" => self.nx = count()?,
            "ny" => self.ny = count()?,
            "nz" => self.nz = count()?,
            "h" => self.h = real()?,
            "bc" => {
                self.bc = match value {
                    "box" => Boundary::Box,
                    "periodic" => Boundary::Periodic,
                    _ => return Err(bad("box or periodic")),
                }
            }
            "a" => self.a = real()?,
            "b" => self.b = real()?,
            "c" => self.c = real()?,
            "epsilon" => self.epsilon = real()?,
            "nu" => self.nu = real()?,
            "gamma" => self.gamma = real()?,
            "mu" => self.mu = auto()?,
            "dt" => self.dt = real()?,
            "t_end" => self.t_end = real()?,
            "stretching" => {
                self.stretching = match value {
                    "full" => Stretching::Full,
                    "antisym" => Stretching::Antisym,
                    _ => return Err(bad("full or antisym")),
                }
            }
            "bulk" => {
                self.bulk = match value {
                    "f" => BulkForce::F,
                    "f_pz" => BulkForce::FPz,
                    _ => return Err(bad("f or f_pz")),
                }
            }
            "splitting" => {
                self.splitting = match value {
                    "semi_implicit" => Splitting::SemiImplicit,
                    "convex_split" => Splitting::ConvexSplit,
                    _ => return Err(bad("semi_implicit or convex_split")),
                }
            }
            "kappa" => self.kappa = auto()?,
            "projection_tol" => self.projection_tol = real()?,
            "poisson" => {
                self.poisson = match value {
                    "spectral" => PoissonMethod::Spectral,
                    "cg" => PoissonMethod::Cg,
                    _ => return Err(bad("spectral or cg")),
                }
            }
            "project_each_step" => self.project_each_step = flag()?,
            "flow" => self.flow = flag()?,
            "init" => {
                self.init = match value {
                    "random" => InitKind::Random,
                    "uniaxial" => InitKind::Uniaxial,
                    "zero" => InitKind::Zero,
                    _ => return Err(bad("random, uniaxial or zero")),
                }
            }
            "init_amplitude" => self.init_amplitude = real()?,
            "init_s" => self.init_s = real()?,
            "velocity_amplitude" => self.velocity_amplitude = real()?,
            "seed" => {
                self.seed = value
                    .parse()
                    .map_err(|_| bad("an unsigned 64-bit integer"))?
            }
            "snapshot_every" => self.snapshot_every = count()?,
            "out" => self.out = PathBuf::from(value),
            "dissipation_floor" => self.dissipation_floor = real()?,
            "residual_tol" => self.residual_tol = real()?,
            "u_tol" => self.u_tol = real()?,
            "cauchy_tol" => self.cauchy_tol = real()?,
            "energy_gap_tol" => self.energy_gap_tol = real()?,
            "cauchy_norm" => {
                self.cauchy_norm = match value {
                    "l2" => CauchyNorm::L2,
                    "h_minus1" => CauchyNorm::HMinus1,
                    _ => return Err(bad("l2 or h_minus1")),
                }
            }
            _ => unreachable!("key list and setter disagree on {key}"),
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid, ConfigError> {
        let dims: Vec<usize> = if self.nz == 1 {
            vec![self.nx, self.ny]
        } else {
            vec![self.nx, self.ny, self.nz]
        };
        Ok(Grid::new(&dims, self.h, self.bc)?)
    }

    pub fn params(&self) -> Result<PotentialParams, ConfigError> {
        let p = PotentialParams::new(self.a, self.b, self.c, self.epsilon, self.nu, self.gamma)?;
        Ok(match self.mu {
            Some(mu) => p.with_mu(mu)?,
            None => p,
        })
    }

    pub fn stepper(&self) -> Result<StepperConfig, ConfigError> {
        if self.dt <= 0.0 {
            return Err(ConfigError::Invalid(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if self.t_end < 0.0 {
            return Err(ConfigError::Invalid(format!(
                "t_end must be non-negative, got {}",
                self.t_end
            )));
        }
        if let Some(k) = self.kappa {
            if k < 0.0 {
                return Err(ConfigError::Invalid(format!(
                    "kappa must be non-negative, got {k}"
                )));
            }
        }
        let mut s = StepperConfig::new(self.dt, self.params()?);
        s.stretching = self.stretching;
        s.bulk = self.bulk;
        s.splitting = self.splitting;
        s.stabilization = self.kappa;
        s.projection_tol = self.projection_tol;
        s.poisson = self.poisson;
        s.project_each_step = self.project_each_step;
        s.flow = self.flow;
        Ok(s)
    }

    pub fn thresholds(&self) -> Thresholds {
        Thresholds {
            u_norm: self.u_tol,
            critical_residual: self.residual_tol,
            cauchy: self.cauchy_tol,
            energy_gap: self.energy_gap_tol,
        }
    }

    /// Checks every derived object so that errors surface before any output.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.grid()?;
        self.stepper()?;
        Ok(())
    }

    /// The config with `auto` values replaced by what the run used.
    pub fn resolved(&self, mu: f64, kappa: f64) -> RunConfig {
        let mut out = self.clone();
        out.mu = Some(mu);
        if self.splitting == Splitting::ConvexSplit {
            out.kappa = Some(kappa);
        }
        out
    }

    /// Renders the config in the file format, one key per line.
    pub fn to_text(&self) -> String {
        let value = serde_json::to_value(self).expect("config serialises");
        let mut out = String::new();
        for (key, _) in KEYS {
            let v = &value[*key];
            let text = match v {
                serde_json::Value::Null => "auto".to_string(),
                serde_json::Value::String(s) => s.clone(),
                other => other.to_string(),
            };
            out.push_str(&format!("{key} = {text}\n"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        assert_eq!(RunConfig::parse("").unwrap(), RunConfig::default());
        assert_eq!(
            RunConfig::parse("# only a comment\n\n").unwrap(),
            RunConfig::default()
        );
    }

    #[test]
    fn values_and_comments() {
        let c = RunConfig::parse(
            "nx = 16 # cells\n a=2.5\nbc = periodic\nmu = 3\nkappa = auto\nflow = false\n",
        )
        .unwrap();
        assert_eq!(c.nx, 16);
        assert_eq!(c.a, 2.5);
        assert_eq!(c.bc, Boundary::Periodic);
        assert_eq!(c.mu, Some(3.0));
        assert_eq!(c.kappa, None);
        assert!(!c.flow);
    }

    #[test]
    fn unknown_duplicate_and_malformed_lines_fail() {
        assert!(matches!(
            RunConfig::parse("nxx = 3"),
            Err(ConfigError::UnknownKey { line: 1, .. })
        ));
        assert!(matches!(
            RunConfig::parse("a = 1\na = 2"),
            Err(ConfigError::Duplicate { line: 2, .. })
        ));
        assert!(matches!(
            RunConfig::parse("a 1"),
            Err(ConfigError::Syntax { .. })
        ));
        assert!(matches!(
            RunConfig::parse("a = nan"),
            Err(ConfigError::BadValue { .. })
        ));
        assert!(matches!(
            RunConfig::parse("bc = sphere"),
            Err(ConfigError::BadValue { .. })
        ));
    }

    #[test]
    fn every_key_is_settable_and_text_roundtrips() {
        let c = RunConfig {
            nx: 12,
            mu: Some(4.0),
            cauchy_norm: CauchyNorm::HMinus1,
            ..Default::default()
        };
        let text = c.to_text();
        assert_eq!(text.lines().count(), KEYS.len());
        assert_eq!(RunConfig::parse(&text).unwrap(), c);
        assert_eq!(
            RunConfig::parse(&RunConfig::default().to_text()).unwrap(),
            RunConfig::default()
        );
    }

    #[test]
    fn invalid_physics_is_reported() {
        assert!(RunConfig::parse("c = 0").unwrap().validate().is_err());
        assert!(RunConfig::parse("nx = 2").unwrap().validate().is_err());
        assert!(RunConfig::parse("dt = 0").unwrap().validate().is_err());
        assert!(RunConfig::parse("mu = 0.1").unwrap().validate().is_err());
        assert!(RunConfig::default().validate().is_ok());
    }
}
