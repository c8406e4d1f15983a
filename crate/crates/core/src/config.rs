//! `key = value` run configuration.
//!
//! ```text
//! # plant
//! lambda1 = 20
//! lambda2 = 10
//! scenario = state_feedback
//! ic = bump 0.5 0.2 1.0
//! ```
//!
//! Required: `lambda1`, `lambda2`, `scenario`. Defaults: `nx = 200`,
//! `n = 256`, `dt = 1e-4`, `t_final = 2.0`, `tol = 1e-12`, `theta = 0.5`,
//! `record_every = 100`, `actuation = implicit`, `ic = cos_half_pi 1`,
//! `observer_ic = constant 0`.

use std::path::Path;

use crate::error::{Error, Result};
use crate::goursat::DEFAULT_TOL;
use crate::sim::{Actuation, IcPreset, Scenario, SimConfig};

pub const DEFAULT_KERNEL_N: usize = 256;

pub const KEYS: [&str; 13] = [
    "lambda1",
    "lambda2",
    "scenario",
    "nx",
    "n",
    "dt",
    "t_final",
    "tol",
    "theta",
    "record_every",
    "actuation",
    "ic",
    "observer_ic",
];

/// Simulation settings plus the kernel solver options.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub sim: SimConfig,
    /// Kernel grid resolution.
    pub n: usize,
    /// Successive-approximation tolerance.
    pub tol: f64,
}

impl RunConfig {
    pub fn new(sim: SimConfig) -> Self {
        Self {
            sim,
            n: DEFAULT_KERNEL_N,
            tol: DEFAULT_TOL,
        }
    }

    /// Canonical `key = value` text; parsing it gives back the same config.
    pub fn to_text(&self) -> String {
        let s = &self.sim;
        format!(
            "lambda1 = {:?}\nlambda2 = {:?}\nscenario = {}\nnx = {}\nn = {}\ndt = {:?}\n\
             t_final = {:?}\ntol = {:?}\ntheta = {:?}\nrecord_every = {}\nactuation = {}\n\
             ic = {}\nobserver_ic = {}\n",
            s.lambda1,
            s.lambda2,
            s.scenario.name(),
            s.nx,
            self.n,
            s.dt,
            s.t_final,
            self.tol,
            s.theta,
            s.record_every,
            s.actuation.name(),
            preset_text(&s.ic_preset),
            preset_text(&s.observer_ic_preset),
        )
    }
}

pub fn parse_config(path: &Path) -> Result<RunConfig> {
    parse_config_str(&std::fs::read_to_string(path)?)
}

pub fn parse_config_str(text: &str) -> Result<RunConfig> {
    let mut lambda1 = None;
    let mut lambda2 = None;
    let mut scenario = None;
    let mut cfg = RunConfig::new(SimConfig::new(0.0, 0.0, Scenario::OpenLoop));

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| Error::Parse {
            line,
            msg: format!("expected `key = value`, got `{content}`"),
        })?;
        let (key, value) = (key.trim(), value.trim());
        let bad = |what: &str| Error::Parse {
            line,
            msg: format!("{key}: expected {what}, got `{value}`"),
        };
        let real = || value.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| bad("a number"));
        let count = || value.parse::<usize>().map_err(|_| bad("a non-negative integer"));
        match key {
            "lambda1" => lambda1 = Some(real()?),
            "lambda2" => lambda2 = Some(real()?),
            "scenario" => scenario = Some(Scenario::from_name(value).ok_or_else(|| bad("a scenario name"))?),
            "nx" => cfg.sim.nx = count()?,
            "n" => cfg.n = count()?,
            "dt" => cfg.sim.dt = real()?,
            "t_final" => cfg.sim.t_final = real()?,
            "tol" => cfg.tol = real()?,
            "theta" => cfg.sim.theta = real()?,
            "record_every" => cfg.sim.record_every = count()?,
            "actuation" => {
                cfg.sim.actuation = match value {
                    "implicit" => Actuation::Implicit,
                    "lagged" => Actuation::Lagged,
                    _ => return Err(bad("`implicit` or `lagged`")),
                }
            }
            "ic" => cfg.sim.ic_preset = parse_preset(value).ok_or_else(|| bad("an initial-condition preset"))?,
            "observer_ic" => {
                cfg.sim.observer_ic_preset =
                    parse_preset(value).ok_or_else(|| bad("an initial-condition preset"))?
            }
            _ => {
                return Err(Error::UnknownKey {
                    line,
                    key: key.to_string(),
                })
            }
        }
    }

    cfg.sim.lambda1 = lambda1.ok_or(Error::MissingRequired("lambda1"))?;
    cfg.sim.lambda2 = lambda2.ok_or(Error::MissingRequired("lambda2"))?;
    cfg.sim.scenario = scenario.ok_or(Error::MissingRequired("scenario"))?;
    Ok(cfg)
}

/// `cos_half_pi A`, `constant A` or `bump CENTER WIDTH A`.
pub fn parse_preset(text: &str) -> Option<IcPreset> {
    let mut words = text.split_whitespace();
    let name = words.next()?;
    let nums: Vec<f64> = words.map(|w| w.parse().ok()).collect::<Option<_>>()?;
    if nums.iter().any(|v| !v.is_finite()) {
        return None;
    }
    match (name, nums.as_slice()) {
        ("cos_half_pi", [a]) => Some(IcPreset::CosHalfPi(*a)),
        ("constant", [a]) => Some(IcPreset::Constant(*a)),
        ("bump", [c, w, a]) if *w > 0.0 => Some(IcPreset::Bump {
            center: *c,
            width: *w,
            amplitude: *a,
        }),
        _ => None,
    }
}

pub fn preset_text(p: &IcPreset) -> String {
    match p {
        IcPreset::CosHalfPi(a) => format!("cos_half_pi {a:?}"),
        IcPreset::Constant(a) => format!("constant {a:?}"),
        IcPreset::Bump {
            center,
            width,
            amplitude,
        } => format!("bump {center:?} {width:?} {amplitude:?}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_gets_defaults() {
        let cfg = parse_config_str("lambda1 = 20\nlambda2 = 10\nscenario = state_feedback\n").unwrap();
        assert_eq!(cfg.sim.lambda1, 20.0);
        assert_eq!(cfg.sim.lambda2, 10.0);
        assert_eq!(cfg.sim.scenario, Scenario::StateFeedback);
        assert_eq!(cfg.sim.nx, 200);
        assert_eq!(cfg.n, 256);
        assert_eq!(cfg.sim.dt, 1e-4);
        assert_eq!(cfg.sim.t_final, 2.0);
        assert_eq!(cfg.tol, 1e-12);
        assert_eq!(cfg.sim.theta, 0.5);
    }

    #[test]
    fn empty_file_is_missing_lambda1() {
        assert!(matches!(parse_config_str(""), Err(Error::MissingRequired("lambda1"))));
        assert!(matches!(
            parse_config_str("lambda1 = 1\nlambda2 = 1"),
            Err(Error::MissingRequired("scenario"))
        ));
    }

    #[test]
    fn errors_carry_line_numbers() {
        let e = parse_config_str("# header\n\nlambda1 = abc\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 3, .. }), "{e}");
        let e = parse_config_str("lambda1 = 1\ngain = 2\n").unwrap_err();
        assert!(matches!(e, Error::UnknownKey { line: 2, ref key } if key == "gain"));
        let e = parse_config_str("lambda1 1\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 1, .. }));
        let e = parse_config_str("nx = -3\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn comments_and_presets() {
        let cfg = parse_config_str(
            "lambda1 = 1 # trailing\nlambda2=2\nscenario = observer_collocated\n\
             ic = bump 0.5 0.2 1.5\nobserver_ic = constant -1\nactuation = lagged\n",
        )
        .unwrap();
        assert_eq!(
            cfg.sim.ic_preset,
            IcPreset::Bump {
                center: 0.5,
                width: 0.2,
                amplitude: 1.5
            }
        );
        assert_eq!(cfg.sim.observer_ic_preset, IcPreset::Constant(-1.0));
        assert_eq!(cfg.sim.actuation, Actuation::Lagged);
        assert!(parse_preset("bump 0.5 0 1").is_none());
        assert!(parse_preset("cos_half_pi").is_none());
    }

    #[test]
    fn text_round_trip() {
        let mut cfg = parse_config_str("lambda1 = 0.1\nlambda2 = 3\nscenario = output_feedback_collocated\n").unwrap();
        cfg.sim.dt = 2.5e-4;
        cfg.sim.ic_preset = IcPreset::Bump {
            center: 0.3,
            width: 0.1,
            amplitude: 2.0,
        };
        assert_eq!(parse_config_str(&cfg.to_text()).unwrap(), cfg);
    }
}
