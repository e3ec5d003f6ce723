//! Flat `key = value` run configuration.

use crate::error::CliError;
use enstrophy_core::assumptions::Interpolation;
use enstrophy_core::ensemble::{DEFAULT_K1, DEFAULT_K2};
use enstrophy_core::flux::MIN_SNAPSHOTS;
use enstrophy_core::solver::{SolverConfig, TimeStep};
use enstrophy_core::GridSpec;
use serde::Serialize;
use std::f64::consts::PI;
use std::path::Path;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitKind {
    TaylorGreen,
    /// Unit-wavenumber ABC velocity and, if `amp_b > 0`, an ABC magnetic field.
    Abc,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub n: usize,
    pub length: f64,
    pub nu: f64,
    pub eta_m: f64,
    pub time_step: TimeStep,
    pub t_final: f64,
    pub n_snapshots: usize,
    pub init: InitKind,
    pub seed: u64,
    pub amp_u: f64,
    pub amp_b: f64,
    pub perturbation: f64,
    pub blowup_cap: f64,

    pub center: [f64; 3],
    pub r0: f64,
    pub rho: f64,
    pub c0: f64,
    pub k1: usize,
    pub k2: usize,
    pub beta: f64,
    pub n_scales: usize,
    pub n_ensembles: usize,
    pub enforce_range: bool,

    pub m_u: Option<f64>,
    pub m_b: Option<f64>,
    pub c1: Option<f64>,
    pub c2: f64,
    pub n_samples: usize,
    pub n_centers: usize,
    pub interpolation: Interpolation,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            n: 32,
            length: 2.0 * PI,
            nu: 5e-3,
            eta_m: 5e-3,
            time_step: TimeStep::Cfl(0.4),
            t_final: 1e-3,
            n_snapshots: 24,
            init: InitKind::TaylorGreen,
            seed: 0,
            amp_u: 1.0,
            amp_b: 1.0,
            perturbation: 0.05,
            blowup_cap: 1e8,
            center: [0.0; 3],
            r0: 1.0,
            rho: 0.8,
            c0: 100.0,
            k1: DEFAULT_K1,
            k2: DEFAULT_K2,
            beta: 0.1,
            n_scales: 6,
            n_ensembles: 4,
            enforce_range: true,
            m_u: None,
            m_b: None,
            c1: None,
            c2: 1.0,
            n_samples: 2000,
            n_centers: 4,
            interpolation: Interpolation::Trilinear,
        }
    }
}

fn parse_f64(key: &str, v: &str) -> Result<f64, CliError> {
    let s = v.trim();
    // allow multiples of pi such as `2pi` or `0.5*pi`
    let (mult, rest) = match s.strip_suffix("pi") {
        Some(head) => (PI, head.trim_end_matches('*').trim()),
        None => (1.0, s),
    };
    let base = if rest.is_empty() && mult != 1.0 {
        1.0
    } else {
        rest.parse::<f64>()
            .map_err(|_| CliError::Config(format!("{key}: expected a number, got `{v}`")))?
    };
    let x = base * mult;
    if !x.is_finite() {
        return Err(CliError::Config(format!("{key}: value must be finite")));
    }
    Ok(x)
}

fn parse_usize(key: &str, v: &str) -> Result<usize, CliError> {
    v.parse()
        .map_err(|_| CliError::Config(format!("{key}: expected a non-negative integer, got `{v}`")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool, CliError> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(CliError::Config(format!("{key}: expected true or false, got `{v}`"))),
    }
}

fn parse_auto(key: &str, v: &str) -> Result<Option<f64>, CliError> {
    if v == "auto" || v == "none" {
        Ok(None)
    } else {
        parse_f64(key, v).map(Some)
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut c = RunConfig::default();
        let mut seen = std::collections::HashSet::new();
        let (mut dt, mut cfl) = (None, None);
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| CliError::Config(format!("line {}: expected `key = value`", no + 1)))?;
            if !seen.insert(key.to_string()) {
                return Err(CliError::Config(format!("line {}: duplicate key `{key}`", no + 1)));
            }
            match key {
                "n" => c.n = parse_usize(key, value)?,
                "length" => c.length = parse_f64(key, value)?,
                "nu" => c.nu = parse_f64(key, value)?,
                "eta_m" => c.eta_m = parse_f64(key, value)?,
                "dt" => dt = Some(parse_f64(key, value)?),
                "cfl" => cfl = Some(parse_f64(key, value)?),
                "t_final" => c.t_final = parse_f64(key, value)?,
                "n_snapshots" => c.n_snapshots = parse_usize(key, value)?,
                "init" => {
                    c.init = match value {
                        "taylor-green" => InitKind::TaylorGreen,
                        "abc" => InitKind::Abc,
                        _ => return Err(CliError::Config(format!("init: unknown kind `{value}`"))),
                    }
                }
                "seed" => {
                    c.seed = value
                        .parse()
                        .map_err(|_| CliError::Config(format!("seed: expected an integer, got `{value}`")))?
                }
                "amp_u" => c.amp_u = parse_f64(key, value)?,
                "amp_b" => c.amp_b = parse_f64(key, value)?,
                "perturbation" => c.perturbation = parse_f64(key, value)?,
                "blowup_cap" => c.blowup_cap = parse_f64(key, value)?,
                "center" => {
                    let parts: Vec<&str> = value.split(',').collect();
                    if parts.len() != 3 {
                        return Err(CliError::Config("center: expected `x, y, z`".into()));
                    }
                    for (slot, p) in c.center.iter_mut().zip(parts) {
                        *slot = parse_f64(key, p)?;
                    }
                }
                "r0" => c.r0 = parse_f64(key, value)?,
                "rho" => c.rho = parse_f64(key, value)?,
                "c0" => c.c0 = parse_f64(key, value)?,
                "k1" => c.k1 = parse_usize(key, value)?,
                "k2" => c.k2 = parse_usize(key, value)?,
                "beta" => c.beta = parse_f64(key, value)?,
                "n_scales" => c.n_scales = parse_usize(key, value)?,
                "n_ensembles" => c.n_ensembles = parse_usize(key, value)?,
                "enforce_range" => c.enforce_range = parse_bool(key, value)?,
                "m_u" => c.m_u = parse_auto(key, value)?,
                "m_b" => c.m_b = parse_auto(key, value)?,
                "c1" => c.c1 = parse_auto(key, value)?,
                "c2" => c.c2 = parse_f64(key, value)?,
                "n_samples" => c.n_samples = parse_usize(key, value)?,
                "n_centers" => c.n_centers = parse_usize(key, value)?,
                "interpolation" => {
                    c.interpolation = match value {
                        "trilinear" => Interpolation::Trilinear,
                        "spectral" => Interpolation::Spectral,
                        _ => return Err(CliError::Config(format!("interpolation: unknown `{value}`"))),
                    }
                }
                _ => return Err(CliError::Config(format!("line {}: unknown key `{key}`", no + 1))),
            }
        }
        c.time_step = match (dt, cfl) {
            (Some(_), Some(_)) => return Err(CliError::Config("give either dt or cfl, not both".into())),
            (Some(d), None) => TimeStep::Fixed(d),
            (None, Some(k)) => TimeStep::Cfl(k),
            (None, None) => c.time_step,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn grid(&self) -> GridSpec {
        GridSpec::new(self.n, self.length).expect("validated at load")
    }

    pub fn solver(&self) -> SolverConfig {
        SolverConfig {
            nu: self.nu,
            eta_m: self.eta_m,
            time_step: self.time_step,
            t_final: self.t_final,
            n_snapshots: self.n_snapshots,
            dealias: true,
            blowup_cap: self.blowup_cap,
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        GridSpec::new(self.n, self.length).map_err(|e| CliError::Config(e.to_string()))?;
        self.solver().validate().map_err(|e| CliError::Config(e.to_string()))?;
        if self.n_snapshots < MIN_SNAPSHOTS {
            return bad(format!(
                "n_snapshots = {} is below the {MIN_SNAPSHOTS} the time quadrature needs",
                self.n_snapshots
            ));
        }
        for (k, v) in [
            ("amp_u", self.amp_u),
            ("amp_b", self.amp_b),
            ("perturbation", self.perturbation),
        ] {
            if v < 0.0 {
                return bad(format!("{k} must be non-negative"));
            }
        }
        if !(self.r0 > 0.0) {
            return bad("r0 must be positive".into());
        }
        let extent = 2.0 * self.r0 + self.r0.powf(2.0 / 3.0);
        if extent >= self.length / 2.0 {
            return bad(format!(
                "2 r0 + r0^(2/3) = {extent:.4} must be below half the box ({:.4})",
                self.length / 2.0
            ));
        }
        if !(self.rho > 0.75 && self.rho < 1.0) {
            return bad(format!("rho must lie in (3/4, 1), got {}", self.rho));
        }
        if !(self.c0 > 1.0) {
            return bad("c0 must exceed 1".into());
        }
        if self.k1 == 0 || self.k2 == 0 {
            return bad("k1 and k2 must be positive".into());
        }
        if !(self.beta > 0.0) {
            return bad("beta must be positive".into());
        }
        if self.n_scales == 0 || self.n_ensembles == 0 {
            return bad("n_scales and n_ensembles must be positive".into());
        }
        if self.n_samples == 0 || self.n_centers == 0 {
            return bad("n_samples and n_centers must be positive".into());
        }
        if !(self.c2 > 0.0) {
            return bad("c2 must be positive".into());
        }
        for (k, v) in [("m_u", self.m_u), ("m_b", self.m_b), ("c1", self.c1)] {
            if v.is_some_and(|x| !(x > 0.0)) {
                return bad(format!("{k} must be positive or auto"));
            }
        }
        Ok(())
    }
}
