//! Flat `key = value` run configuration.
//!
//! Lines are `key = value`; `#` starts a comment. Numbers may use `pi`, as in
//! `phi = pi/2` or `tau = 2*pi`. Unknown keys are rejected.

use std::path::Path;

use thiserror::Error;

use crate::engine::{RunConfig, SweepAxis};
use crate::error::SimError;
use crate::params::ModelVariant;
use crate::state::InitialState;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("cannot read {path}: {reason}")]
    Io { path: String, reason: String },

    #[error("line {line}: expected `key = value`, found `{text}`")]
    Syntax { line: usize, text: String },

    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },

    #[error("line {line}: `{key}` given twice")]
    Duplicate { line: usize, key: String },

    #[error("line {line}: bad value `{value}` for `{key}`: {reason}")]
    BadValue {
        line: usize,
        key: String,
        value: String,
        reason: String,
    },

    #[error(transparent)]
    Invalid(#[from] SimError),
}

/// Grid for the sweep commands.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepGrid {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl SweepGrid {
    pub fn values(&self) -> Vec<f64> {
        match self.points {
            0 => Vec::new(),
            1 => vec![self.min],
            n => (0..n)
                .map(|i| self.min + (self.max - self.min) * i as f64 / (n - 1) as f64)
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FileConfig {
    pub run: RunConfig,
    /// Grid of the swept axis; the axis itself comes from the command.
    pub sweep: Option<SweepGrid>,
    /// Averaging window for sweeps.
    pub window: (f64, f64),
    pub warnings: Vec<String>,
}

const KEYS: &[&str] = &[
    "g",
    "gamma_C",
    "gamma_T",
    "gamma_L",
    "Omega",
    "delta_aL",
    "delta_cL",
    "tau",
    "phi",
    "dt",
    "t_end",
    "n_traj",
    "seed",
    "init",
    "conditioning",
    "variant",
    "jumps",
    "sweep_min",
    "sweep_max",
    "sweep_points",
    "window_start",
    "window_end",
];

/// Evaluates `a*b/c`-style products of numbers and `pi`.
pub fn parse_number(s: &str) -> Option<f64> {
    let s = s.trim();
    let (sign, body) = match s.strip_prefix('-') {
        Some(rest) => (-1.0, rest),
        None => (1.0, s.strip_prefix('+').unwrap_or(s)),
    };
    if body.is_empty() {
        return None;
    }
    let mut value = sign;
    let mut op = '*';
    let mut rest = body;
    loop {
        let end = rest.find(['*', '/']).unwrap_or(rest.len());
        let tok = rest[..end].trim();
        let x = factor(tok)?;
        value = if op == '*' { value * x } else { value / x };
        if end == rest.len() {
            break;
        }
        op = rest.as_bytes()[end] as char;
        rest = &rest[end + 1..];
    }
    value.is_finite().then_some(value)
}

fn factor(tok: &str) -> Option<f64> {
    match tok {
        "pi" | "PI" | "π" => Some(std::f64::consts::PI),
        _ => match tok.strip_suffix("pi") {
            Some(num) if !num.is_empty() => num.parse::<f64>().ok().map(|x| x * std::f64::consts::PI),
            _ => tok.parse::<f64>().ok(),
        },
    }
}

fn parse_bool(s: &str) -> Option<bool> {
    match s {
        "true" | "on" | "yes" | "1" => Some(true),
        "false" | "off" | "no" | "0" => Some(false),
        _ => None,
    }
}

/// Moves `x` onto the `dt` grid, returning a warning when it had to move.
fn snap(name: &str, x: f64, dt: f64) -> (f64, Option<String>) {
    let n = (x / dt).round();
    let snapped = n * dt;
    if (snapped - x).abs() > 1e-9 * dt {
        (snapped, Some(format!("{name} = {x} is not a multiple of dt = {dt}; using {snapped}")))
    } else {
        (snapped, None)
    }
}

pub fn parse_config(text: &str) -> Result<FileConfig, ConfigError> {
    let mut run = RunConfig::default();
    let mut seen: Vec<&str> = Vec::new();
    let mut sweep_min = None;
    let mut sweep_max = None;
    let mut sweep_points = None;
    let mut window = (None, None);

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let (key, value) = body.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line,
            text: raw.trim().to_string(),
        })?;
        let (key, value) = (key.trim(), value.trim());
        let key = *KEYS.iter().find(|k| **k == key).ok_or_else(|| ConfigError::UnknownKey {
            line,
            key: key.to_string(),
        })?;
        if seen.contains(&key) {
            return Err(ConfigError::Duplicate {
                line,
                key: key.to_string(),
            });
        }
        seen.push(key);

        let bad = |reason: &str| ConfigError::BadValue {
            line,
            key: key.to_string(),
            value: value.to_string(),
            reason: reason.to_string(),
        };
        let num = || parse_number(value).ok_or_else(|| bad("not a number"));
        let count = || value.parse::<usize>().map_err(|_| bad("not a non-negative integer"));

        let p = &mut run.params;
        match key {
            "g" => p.g = num()?,
            "gamma_C" => p.gamma_c = num()?,
            "gamma_T" => p.gamma_t = num()?,
            "gamma_L" => p.gamma_l = num()?,
            "Omega" => p.omega = num()?,
            "delta_aL" => p.delta_a = num()?,
            "delta_cL" => p.delta_c = num()?,
            "tau" => p.tau = num()?,
            "phi" => p.phi = num()?,
            "dt" => run.dt = num()?,
            "t_end" => run.t_end = num()?,
            "n_traj" => run.n_traj = count()?,
            "seed" => run.seed = value.parse().map_err(|_| bad("not a 64-bit unsigned integer"))?,
            "init" => run.init = InitialState::parse(value).ok_or_else(|| bad("expected ground, tls-excited or cavity-excited"))?,
            "conditioning" => run.conditioning = parse_bool(value).ok_or_else(|| bad("expected true or false"))?,
            "variant" => run.variant = ModelVariant::parse(value).ok_or_else(|| bad("expected cavity-loop or tls-direct"))?,
            "jumps" => run.jumps = parse_bool(value).ok_or_else(|| bad("expected true or false"))?,
            "sweep_min" => sweep_min = Some(num()?),
            "sweep_max" => sweep_max = Some(num()?),
            "sweep_points" => sweep_points = Some(count()?),
            "window_start" => window.0 = Some(num()?),
            "window_end" => window.1 = Some(num()?),
            _ => unreachable!("key list and match arms out of sync"),
        }
    }

    run.params.validate()?;
    if !(run.dt > 0.0 && run.dt.is_finite()) {
        return Err(SimError::InvalidParameter {
            name: "dt",
            reason: format!("must be positive (got {})", run.dt),
        }
        .into());
    }
    let mut warnings = Vec::new();
    let (tau, w) = snap("tau", run.params.tau, run.dt);
    run.params.tau = tau;
    warnings.extend(w);
    let (t_end, w) = snap("t_end", run.t_end, run.dt);
    run.t_end = t_end;
    warnings.extend(w);
    run.params = run.params.normalized();
    run.validate()?;
    warnings.extend(run.params.one_photon_warning());

    let sweep = match (sweep_min, sweep_max, sweep_points) {
        (None, None, None) => None,
        (Some(min), Some(max), Some(points)) => Some(SweepGrid { min, max, points }),
        _ => {
            return Err(SimError::InvalidParameter {
                name: "sweep",
                reason: "sweep_min, sweep_max and sweep_points go together".into(),
            }
            .into())
        }
    };
    let window = (window.0.unwrap_or(0.0), window.1.unwrap_or(run.t_end));
    Ok(FileConfig {
        run,
        sweep,
        window,
        warnings,
    })
}

pub fn load_config(path: &Path) -> Result<FileConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    parse_config(&text)
}

impl FileConfig {
    /// Grid values on `axis`, defaulting to a full phase turn for `phi`.
    pub fn grid(&self, axis: SweepAxis) -> Result<Vec<f64>, ConfigError> {
        match (self.sweep, axis) {
            (Some(g), _) => Ok(g.values()),
            (None, SweepAxis::Phi) => Ok(SweepGrid {
                min: 0.0,
                max: std::f64::consts::TAU * 199.0 / 200.0,
                points: 200,
            }
            .values()),
            (None, _) => Err(SimError::InvalidParameter {
                name: "sweep",
                reason: "this sweep needs sweep_min, sweep_max and sweep_points".into(),
            }
            .into()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn minimal_file() {
        let c = parse_config("gamma_L=2\ntau=1\nphi=0\ndt=0.01\nt_end=30\nn_traj=1000\nseed=7\n").unwrap();
        assert_eq!(c.run.params.gamma_l, 2.0);
        assert_eq!(c.run.params.gamma_c, 0.0);
        assert_eq!(c.run.params.omega, 0.0);
        assert_eq!(c.run.n_traj, 1000);
        assert_eq!(c.run.seed, 7);
        assert_eq!(c.run.n_steps().unwrap(), 3000);
        assert!(c.warnings.is_empty());
        assert_eq!(c.window, (0.0, 30.0));
    }

    #[test]
    fn tau_snaps_to_grid() {
        let c = parse_config("tau = 1.005\ndt = 0.01\n").unwrap();
        let t = c.run.params.tau;
        assert!((t - 1.0).abs() < 1e-12 || (t - 1.01).abs() < 1e-12, "{t}");
        assert_eq!(c.warnings.len(), 1);
        assert!(c.warnings[0].contains("tau"));
    }

    #[test]
    fn negative_rate_rejected() {
        let e = parse_config("gamma_L = -1\n").unwrap_err();
        assert!(matches!(e, ConfigError::Invalid(SimError::InvalidParameter { name: "gamma_L", .. })));
    }

    #[test]
    fn errors_carry_line_numbers() {
        let e = parse_config("# header\ng = 1\nbogus = 3\n").unwrap_err();
        assert_eq!(e, ConfigError::UnknownKey { line: 3, key: "bogus".into() });
        let e = parse_config("g = 1\n\ng 2\n").unwrap_err();
        assert!(matches!(e, ConfigError::Syntax { line: 3, .. }));
        let e = parse_config("g = 1\ng = 2\n").unwrap_err();
        assert!(matches!(e, ConfigError::Duplicate { line: 2, .. }));
        let e = parse_config("phi = half\n").unwrap_err();
        assert!(matches!(e, ConfigError::BadValue { line: 1, .. }));
        assert!(e.to_string().starts_with("line 1:"));
    }

    #[test]
    fn pi_expressions() {
        assert_eq!(parse_number("pi"), Some(PI));
        assert_eq!(parse_number("pi/2"), Some(PI / 2.0));
        assert_eq!(parse_number("2*pi"), Some(2.0 * PI));
        assert_eq!(parse_number("1.5pi"), Some(1.5 * PI));
        assert_eq!(parse_number("-3/4"), Some(-0.75));
        assert_eq!(parse_number("1e-3"), Some(1e-3));
        assert_eq!(parse_number(""), None);
        assert_eq!(parse_number("1/0"), None);
        assert_eq!(parse_number("x"), None);
    }

    #[test]
    fn sweep_keys() {
        let c = parse_config("sweep_min = -3\nsweep_max = 3\nsweep_points = 41\nwindow_start = 40\nwindow_end = 60\nt_end = 60\n")
            .unwrap();
        let g = c.grid(SweepAxis::Delta).unwrap();
        assert_eq!(g.len(), 41);
        assert_eq!((g[0], g[40]), (-3.0, 3.0));
        assert_eq!(c.window, (40.0, 60.0));
        assert!(parse_config("sweep_min = 0\n").is_err());
        let c = parse_config("").unwrap();
        assert_eq!(c.grid(SweepAxis::Phi).unwrap().len(), 200);
        assert!(c.grid(SweepAxis::Tau).is_err());
    }

    #[test]
    fn phase_wraps_and_enums_parse() {
        let c = parse_config("phi = 3*pi\ninit = ground\nvariant = tls-direct\nconditioning = off\n").unwrap();
        assert!((c.run.params.phi - PI).abs() < 1e-12);
        assert_eq!(c.run.init, InitialState::Ground);
        assert_eq!(c.run.variant, ModelVariant::TlsDirect);
        assert!(!c.run.conditioning);
        assert!(parse_config("init = sideways\n").is_err());
    }

    #[test]
    fn one_photon_warning_surfaces() {
        let c = parse_config("gamma_L = 2\ntau = 1\nOmega = 0.5\n").unwrap();
        assert_eq!(c.warnings.len(), 1);
    }
}
