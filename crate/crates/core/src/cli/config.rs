//! Plain key = value run configuration.
//!
//! One key per line, `#` starts a comment, unknown or repeated keys are
//! errors. Every value has a canonical text form ([`RunConfig::key_values`])
//! that parses back to the same config; the JSON summary echoes that form so
//! stored runs can be re-checked and compared without a second schema.

use std::collections::HashSet;
use std::path::PathBuf;

use thiserror::Error;

use crate::model::SystemKind;
use crate::solver::SolverConfig;

#[derive(Clone, Debug, Error, PartialEq)]
#[error("config line {line}, key '{key}': {message}")]
pub struct ConfigError {
    /// 1-based line; 0 when the problem is not tied to a single line.
    pub line: usize,
    pub key: String,
    pub message: String,
}

impl ConfigError {
    fn new(line: usize, key: &str, message: impl Into<String>) -> Self {
        ConfigError {
            line,
            key: key.to_string(),
            message: message.into(),
        }
    }
}

/// Which systems one run covers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SystemChoice {
    Sys1,
    Sys2,
    Both,
}

impl SystemChoice {
    pub fn systems(self) -> Vec<SystemKind> {
        match self {
            SystemChoice::Sys1 => vec![SystemKind::Sys1],
            SystemChoice::Sys2 => vec![SystemKind::Sys2],
            SystemChoice::Both => vec![SystemKind::Sys1, SystemKind::Sys2],
        }
    }

    fn label(self) -> &'static str {
        match self {
            SystemChoice::Sys1 => "sys1",
            SystemChoice::Sys2 => "sys2",
            SystemChoice::Both => "both",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SectionChoice {
    /// Theta-function section, the generic single-zero case.
    Theta,
    /// Identically zero section, the analytically solvable degenerate case.
    Zero,
}

impl SectionChoice {
    fn label(self) -> &'static str {
        match self {
            SectionChoice::Theta => "theta",
            SectionChoice::Zero => "zero",
        }
    }
}

/// A constant that is either auto-calibrated at run time or pinned.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Calibrated {
    Auto,
    Fixed(f64),
}

impl Calibrated {
    pub fn fixed(self) -> Option<f64> {
        match self {
            Calibrated::Auto => None,
            Calibrated::Fixed(v) => Some(v),
        }
    }

    fn label(self) -> String {
        match self {
            Calibrated::Auto => "auto".to_string(),
            Calibrated::Fixed(v) => format!("{v}"),
        }
    }
}

/// Everything a run needs, resolved to concrete values except the two
/// auto-calibrated constants.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub system: SystemChoice,
    pub n: usize,
    pub r1: u32,
    pub r2: u32,
    pub deg_l: u32,
    pub alpha: Calibrated,
    pub epsilon: Calibrated,
    pub section: SectionChoice,
    /// Path times whose states are written as field snapshots.
    pub snapshots: Vec<f64>,
    pub output_dir: PathBuf,
    /// Seed for the endpoint direction sampling.
    pub seed: u64,
    pub solver: SolverConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            system: SystemChoice::Both,
            n: 64,
            r1: 1,
            r2: 1,
            deg_l: 1,
            alpha: Calibrated::Auto,
            epsilon: Calibrated::Auto,
            section: SectionChoice::Theta,
            snapshots: vec![0.0, 1.0],
            output_dir: PathBuf::from("out"),
            seed: 0,
            solver: SolverConfig::default(),
        }
    }
}

impl RunConfig {
    /// Canonical key/value listing; parsing these lines back yields an equal
    /// config. Order is fixed so serialized configs diff cleanly.
    pub fn key_values(&self) -> Vec<(&'static str, String)> {
        let s = &self.solver;
        vec![
            ("system", self.system.label().to_string()),
            ("n", self.n.to_string()),
            ("r1", self.r1.to_string()),
            ("r2", self.r2.to_string()),
            ("deg_l", self.deg_l.to_string()),
            ("alpha", self.alpha.label()),
            ("epsilon", self.epsilon.label()),
            ("section", self.section.label().to_string()),
            (
                "snapshots",
                self.snapshots
                    .iter()
                    .map(|t| format!("{t}"))
                    .collect::<Vec<_>>()
                    .join(","),
            ),
            ("output_dir", self.output_dir.display().to_string()),
            ("seed", self.seed.to_string()),
            ("newton_tol", format!("{}", s.newton_tol)),
            ("max_newton", s.max_newton.to_string()),
            ("dt0", format!("{}", s.dt0)),
            ("dt_min", format!("{}", s.dt_min)),
            ("damping", format!("{}", s.damping)),
            ("compat_tol", format!("{}", s.compat_tol)),
            ("sigma_min_tol", format!("{}", s.sigma_min_tol)),
            ("report_tol", format!("{}", s.report_tol)),
            ("alpha_max", format!("{}", s.alpha_max)),
            ("eps_min", format!("{}", s.eps_min)),
            ("ds0", format!("{}", s.ds0)),
            ("secant_predictor", s.secant_predictor.to_string()),
        ]
    }
}

fn parse_num<T: std::str::FromStr>(line: usize, key: &str, value: &str) -> Result<T, ConfigError> {
    value
        .parse::<T>()
        .map_err(|_| ConfigError::new(line, key, format!("cannot parse '{value}'")))
}

fn parse_bool(line: usize, key: &str, value: &str) -> Result<bool, ConfigError> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(ConfigError::new(
            line,
            key,
            format!("expected true or false, got '{other}'"),
        )),
    }
}

fn parse_calibrated(line: usize, key: &str, value: &str) -> Result<Calibrated, ConfigError> {
    if value == "auto" {
        Ok(Calibrated::Auto)
    } else {
        Ok(Calibrated::Fixed(parse_num(line, key, value)?))
    }
}

/// Parses and validates a key = value document; defaults fill whatever the
/// document leaves out, so the empty document is the default run.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut cfg = RunConfig::default();
    let mut seen: HashSet<String> = HashSet::new();
    let mut section_line = 0usize;
    let mut deg_line = 0usize;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(ConfigError::new(line, content, "expected 'key = value'"));
        };
        let key = key.trim();
        let value = value.trim();
        if !seen.insert(key.to_string()) {
            return Err(ConfigError::new(line, key, "key repeated"));
        }

        match key {
            "system" => {
                cfg.system = match value {
                    "sys1" => SystemChoice::Sys1,
                    "sys2" => SystemChoice::Sys2,
                    "both" => SystemChoice::Both,
                    other => {
                        return Err(ConfigError::new(
                            line,
                            key,
                            format!("expected sys1, sys2 or both, got '{other}'"),
                        ))
                    }
                };
            }
            "n" => {
                let n: usize = parse_num(line, key, value)?;
                if n < 16 || !n.is_multiple_of(2) {
                    return Err(ConfigError::new(line, key, "grid size must be even and >= 16"));
                }
                cfg.n = n;
            }
            "r1" | "r2" => {
                let r: u32 = parse_num(line, key, value)?;
                if r < 1 {
                    return Err(ConfigError::new(line, key, "rank weight must be >= 1"));
                }
                if key == "r1" {
                    cfg.r1 = r;
                } else {
                    cfg.r2 = r;
                }
            }
            "deg_l" => {
                let d: u32 = parse_num(line, key, value)?;
                if d < 1 {
                    return Err(ConfigError::new(line, key, "degree must be >= 1"));
                }
                cfg.deg_l = d;
                deg_line = line;
            }
            "alpha" => {
                let a = parse_calibrated(line, key, value)?;
                if let Some(v) = a.fixed() {
                    if v < 0.0 {
                        return Err(ConfigError::new(line, key, "fixed alpha must be >= 0"));
                    }
                }
                cfg.alpha = a;
            }
            "epsilon" => {
                let e = parse_calibrated(line, key, value)?;
                if let Some(v) = e.fixed() {
                    if v <= 0.0 {
                        return Err(ConfigError::new(line, key, "fixed epsilon must be > 0"));
                    }
                }
                cfg.epsilon = e;
            }
            "section" => {
                cfg.section = match value {
                    "theta" => SectionChoice::Theta,
                    "zero" => SectionChoice::Zero,
                    other => {
                        return Err(ConfigError::new(
                            line,
                            key,
                            format!("expected theta or zero, got '{other}'"),
                        ))
                    }
                };
                section_line = line;
            }
            "snapshots" => {
                let mut ts = Vec::new();
                for part in value.split(',') {
                    let t: f64 = parse_num(line, key, part.trim())?;
                    if !(0.0..=1.0).contains(&t) {
                        return Err(ConfigError::new(line, key, "snapshot times must lie in [0, 1]"));
                    }
                    ts.push(t);
                }
                cfg.snapshots = ts;
            }
            "output_dir" => cfg.output_dir = PathBuf::from(value),
            "seed" => cfg.seed = parse_num(line, key, value)?,
            "newton_tol" => cfg.solver.newton_tol = parse_num(line, key, value)?,
            "max_newton" => cfg.solver.max_newton = parse_num(line, key, value)?,
            "dt0" => cfg.solver.dt0 = parse_num(line, key, value)?,
            "dt_min" => cfg.solver.dt_min = parse_num(line, key, value)?,
            "damping" => cfg.solver.damping = parse_num(line, key, value)?,
            "compat_tol" => cfg.solver.compat_tol = parse_num(line, key, value)?,
            "sigma_min_tol" => cfg.solver.sigma_min_tol = parse_num(line, key, value)?,
            "report_tol" => cfg.solver.report_tol = parse_num(line, key, value)?,
            "alpha_max" => cfg.solver.alpha_max = parse_num(line, key, value)?,
            "eps_min" => cfg.solver.eps_min = parse_num(line, key, value)?,
            "ds0" => cfg.solver.ds0 = parse_num(line, key, value)?,
            "secant_predictor" => cfg.solver.secant_predictor = parse_bool(line, key, value)?,
            other => return Err(ConfigError::new(line, other, "unknown key")),
        }
    }

    if cfg.section == SectionChoice::Theta && cfg.deg_l != 1 {
        return Err(ConfigError::new(
            deg_line.max(section_line),
            "deg_l",
            "theta section is built for degree 1 only",
        ));
    }
    if let Err(message) = cfg.solver.validate() {
        return Err(ConfigError::new(0, "solver", message));
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let cfg = parse_config("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.n, 64);
        assert_eq!((cfg.r1, cfg.r2), (1, 1));
        assert_eq!(cfg.section, SectionChoice::Theta);
        assert_eq!(cfg.alpha, Calibrated::Auto);
        assert_eq!(cfg.system, SystemChoice::Both);
    }

    #[test]
    fn odd_grid_size_is_rejected_with_location() {
        let err = parse_config("# comment\nn = 15\n").unwrap_err();
        assert_eq!(err.line, 2);
        assert_eq!(err.key, "n");
    }

    #[test]
    fn fixed_epsilon_and_system_override() {
        let cfg = parse_config("system = sys2\nepsilon = 0.5\n").unwrap();
        assert_eq!(cfg.system, SystemChoice::Sys2);
        assert_eq!(cfg.epsilon, Calibrated::Fixed(0.5));
        assert_eq!(cfg.system.systems(), vec![SystemKind::Sys2]);
    }

    #[test]
    fn bad_values_name_the_key() {
        for (text, key) in [
            ("epsilon = 0", "epsilon"),
            ("alpha = -1", "alpha"),
            ("r1 = 0", "r1"),
            ("mystery = 3", "mystery"),
            ("n = twelve", "n"),
            ("snapshots = 0,2", "snapshots"),
            ("section = theta\ndeg_l = 2", "deg_l"),
        ] {
            let err = parse_config(text).unwrap_err();
            assert_eq!(err.key, key, "{text}");
        }
        let dup = parse_config("n = 16\nn = 32\n").unwrap_err();
        assert_eq!((dup.line, dup.key.as_str()), (2, "n"));
    }

    #[test]
    fn canonical_form_round_trips() {
        let mut cfg = RunConfig {
            system: SystemChoice::Sys2,
            n: 32,
            alpha: Calibrated::Fixed(1.5),
            epsilon: Calibrated::Fixed(0.25),
            snapshots: vec![0.0, 0.25, 1.0],
            seed: 99,
            ..RunConfig::default()
        };
        cfg.solver.newton_tol = 1e-9;
        cfg.solver.secant_predictor = true;
        let text: String = cfg
            .key_values()
            .iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect();
        assert_eq!(parse_config(&text).unwrap(), cfg);
    }
}
