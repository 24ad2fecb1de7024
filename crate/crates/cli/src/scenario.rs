//! Scenario files.
//!
//! ```toml
//! # homogeneous shorthand
//! n = 8
//! mu_db = 0.0
//! sigma_db = 3.0
//! rho = 0.7
//! levels = [0.5, 0.9, 0.99, 0.999]
//!
//! [mc]
//! samples = 1000000
//! seed = 1
//!
//! [grid]
//! min_db = -10.0
//! max_db = 30.0
//! step_db = 0.25
//! ```
//!
//! Heterogeneous components give `mu_db` and `sigma_db` as arrays, and either
//! `rho` (one correlation for every pair) or a full `corr` matrix. Without
//! either the components are independent.

use std::path::Path;

use lsnsum::corrstruct::LognormalSumSpec;
use lsnsum::mc::DEFAULT_SAMPLES;
use nalgebra::DMatrix;
use serde::Deserialize;

use crate::CliError;

pub const DEFAULT_LEVELS: [f64; 6] = [0.01, 0.1, 0.5, 0.9, 0.99, 0.999];
pub const DEFAULT_SEED: u64 = 1;

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    One(f64),
    Many(Vec<f64>),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    n: Option<usize>,
    mu_db: OneOrMany,
    sigma_db: OneOrMany,
    rho: Option<f64>,
    corr: Option<Vec<Vec<f64>>>,
    levels: Option<Vec<f64>>,
    #[serde(default)]
    mc: RawMc,
    grid: Option<Grid>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMc {
    samples: Option<usize>,
    seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub min_db: f64,
    pub max_db: f64,
    pub step_db: f64,
}

impl Grid {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.step_db > 0.0 && self.step_db.is_finite()) {
            return Err(format!("grid step_db = {} must be > 0", self.step_db));
        }
        if !(self.min_db.is_finite() && self.max_db.is_finite() && self.min_db <= self.max_db) {
            return Err(format!(
                "grid needs finite min_db <= max_db, got {} and {}",
                self.min_db, self.max_db
            ));
        }
        if (self.max_db - self.min_db) / self.step_db > 1e6 {
            return Err("grid has more than a million points".into());
        }
        Ok(())
    }

    /// min, min + step, ... up to max (inclusive, within rounding).
    pub fn points(&self) -> Vec<f64> {
        let count = ((self.max_db - self.min_db) / self.step_db + 1e-9).floor() as usize;
        (0..=count)
            .map(|k| self.min_db + k as f64 * self.step_db)
            .collect()
    }

    /// Parses `min:max:step`.
    pub fn parse(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(format!("grid '{s}' must look like min:max:step"));
        }
        let num = |p: &str| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| format!("grid '{s}': '{p}' is not a number"))
        };
        let g = Grid {
            min_db: num(parts[0])?,
            max_db: num(parts[1])?,
            step_db: num(parts[2])?,
        };
        g.validate()?;
        Ok(g)
    }
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub spec: LognormalSumSpec,
    pub samples: usize,
    pub seed: u64,
    pub grid: Option<Grid>,
    pub levels: Vec<f64>,
}

pub fn load(path: &Path) -> Result<Scenario, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    parse(&text).map_err(|(key, msg)| {
        let at = key
            .and_then(|k| line_of(&text, k))
            .map(|line| format!(":{line}"))
            .unwrap_or_default();
        CliError::Input(format!("{}{at}: {msg}", path.display()))
    })
}

/// 1-based line where `key` is assigned or its table opens.
fn line_of(text: &str, key: &str) -> Option<usize> {
    text.lines().position(|l| {
        let t = l.trim_start();
        t.strip_prefix(key)
            .is_some_and(|rest| rest.trim_start().starts_with('='))
            || t.starts_with(&format!("[{key}]"))
    })
    .map(|i| i + 1)
}

type ParseError = (Option<&'static str>, String);

pub fn parse(text: &str) -> Result<Scenario, ParseError> {
    // toml's own messages already carry line and column
    let raw: RawScenario = toml::from_str(text).map_err(|e| (None, e.to_string()))?;

    let n = resolve_len(&raw)?;
    let mu_db = broadcast(raw.mu_db, n);
    let sigma_db = broadcast(raw.sigma_db, n);

    let corr = match (raw.rho, raw.corr) {
        (Some(_), Some(_)) => return Err((Some("rho"), "give either rho or corr, not both".into())),
        (Some(rho), None) => {
            if !(rho.is_finite() && (-1.0..=1.0).contains(&rho)) {
                return Err((Some("rho"), format!("rho = {rho} must lie in [-1, 1]")));
            }
            DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { rho })
        }
        (None, Some(rows)) => {
            if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                return Err((Some("corr"), format!("corr must be a {n}x{n} matrix")));
            }
            DMatrix::from_fn(n, n, |i, j| rows[i][j])
        }
        (None, None) => DMatrix::identity(n, n),
    };
    let spec = LognormalSumSpec::new(mu_db, sigma_db, corr).map_err(|e| {
        let key = match e {
            lsnsum::Error::InvalidSigma { .. } => Some("sigma_db"),
            lsnsum::Error::InvalidMean { .. } => Some("mu_db"),
            lsnsum::Error::InvalidCorrelation(_) => Some("corr"),
            _ => None,
        };
        (key, e.to_string())
    })?;

    let samples = raw.mc.samples.unwrap_or(DEFAULT_SAMPLES);
    if samples == 0 {
        return Err((Some("samples"), "mc.samples must be at least 1".into()));
    }
    if let Some(g) = &raw.grid {
        g.validate().map_err(|m| (Some("grid"), m))?;
    }
    let levels = raw.levels.unwrap_or_else(|| DEFAULT_LEVELS.to_vec());
    validate_levels(&levels).map_err(|m| (Some("levels"), m))?;

    Ok(Scenario {
        spec,
        samples,
        seed: raw.mc.seed.unwrap_or(DEFAULT_SEED),
        grid: raw.grid,
        levels,
    })
}

fn resolve_len(raw: &RawScenario) -> Result<usize, ParseError> {
    let mut n = raw.n;
    for (key, v) in [("mu_db", &raw.mu_db), ("sigma_db", &raw.sigma_db)] {
        if let OneOrMany::Many(values) = v {
            match n {
                Some(m) if m != values.len() => {
                    return Err((
                        Some(key),
                        format!("{key} has {} entries but n = {m}", values.len()),
                    ))
                }
                _ => n = Some(values.len()),
            }
        }
    }
    match n {
        Some(0) => Err((Some("n"), "n must be at least 1".into())),
        Some(n) => Ok(n),
        None => Err((Some("n"), "n is required when mu_db and sigma_db are scalars".into())),
    }
}

fn broadcast(v: OneOrMany, n: usize) -> Vec<f64> {
    match v {
        OneOrMany::One(x) => vec![x; n],
        OneOrMany::Many(xs) => xs,
    }
}

pub fn validate_levels(levels: &[f64]) -> Result<(), String> {
    match levels.iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
        Some(p) => Err(format!("level {p} must lie in (0, 1)")),
        None => Ok(()),
    }
}

/// Comma-separated CDF levels from the command line.
#[derive(Debug, Clone, PartialEq)]
pub struct Levels(pub Vec<f64>);

pub fn parse_levels(s: &str) -> Result<Levels, String> {
    let levels = s
        .split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| format!("level '{p}' is not a number"))
        })
        .collect::<Result<Vec<_>, _>>()?;
    validate_levels(&levels)?;
    Ok(Levels(levels))
}
