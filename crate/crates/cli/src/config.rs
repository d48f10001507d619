//! Flat `key = value` experiment configs.
//!
//! One assignment per line, `#` starts a comment, blank lines are ignored.
//! Keys not present keep their defaults (a relu single-index run at d = 512).
//! Command-line `--set key=value` overrides are applied after the file.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use mindex::dynamics::RhoSigns;
use mindex::experiments::ExperimentConfig;
use mindex::targets::{Activation, LinkFunction};
use mindex::Error;

pub const KEYS: &[&str] = &[
    "preset",
    "target",
    "k",
    "activation",
    "bias",
    "d",
    "p",
    "first_layer",
    "second_layer",
    "algorithm",
    "loss",
    "spherical",
    "gamma0",
    "rho0",
    "gamma_scaling",
    "batch",
    "rho_signs",
    "time_scale",
    "steps_multiplier",
    "stride",
    "eta",
    "seeds",
    "seed_base",
    "random_directions",
    "stop_on_hit",
];

/// Where a value came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Location {
    Line(usize),
    Override(usize),
    Default,
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::Line(n) => write!(f, "line {n}"),
            Location::Override(n) => write!(f, "override #{n}"),
            Location::Default => f.write_str("default"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConfigError {
    pub keys: Vec<(String, Location)>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let at: Vec<String> = self
            .keys
            .iter()
            .map(|(k, loc)| format!("`{k}` ({loc})"))
            .collect();
        write!(f, "config error at {}: {}", at.join(", "), self.message)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Clone, Debug)]
pub struct ParsedConfig {
    pub config: ExperimentConfig,
    pub locations: BTreeMap<&'static str, Location>,
}

fn err(key: &str, loc: Location, message: impl Into<String>) -> ConfigError {
    ConfigError {
        keys: vec![(key.to_string(), loc)],
        message: message.into(),
    }
}

fn num<T: FromStr>(key: &str, loc: Location, v: &str) -> Result<T, ConfigError> {
    v.parse()
        .map_err(|_| err(key, loc, format!("cannot parse `{v}` as a number")))
}

fn id<T: FromStr<Err = Error>>(key: &str, loc: Location, v: &str) -> Result<T, ConfigError> {
    v.parse().map_err(|e: Error| err(key, loc, e.to_string()))
}

fn boolean(key: &str, loc: Location, v: &str) -> Result<bool, ConfigError> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(err(key, loc, format!("expected true or false, got `{v}`"))),
    }
}

fn positive(key: &str, loc: Location, v: &str) -> Result<f64, ConfigError> {
    let x: f64 = num(key, loc, v)?;
    if !(x.is_finite() && x > 0.0) {
        return Err(err(key, loc, format!("must be positive, got {v}")));
    }
    Ok(x)
}

fn at_least(key: &str, loc: Location, v: &str, min: usize) -> Result<usize, ConfigError> {
    let x: usize = num(key, loc, v)?;
    if x < min {
        return Err(err(key, loc, format!("must be >= {min}, got {x}")));
    }
    Ok(x)
}

fn apply(cfg: &mut ExperimentConfig, key: &str, v: &str, loc: Location) -> Result<(), ConfigError> {
    match key {
        "preset" => {
            if v.is_empty() || !v.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c)) {
                return Err(err(key, loc, "use letters, digits, `-`, `_` or `.`"));
            }
            cfg.preset = v.to_string();
        }
        "target" => {
            LinkFunction::parse(v).map_err(|e| err(key, loc, e.to_string()))?;
            cfg.target = v.to_string();
        }
        "k" => cfg.k = at_least(key, loc, v, 1)?,
        "activation" => {
            Activation::parse(v, cfg.bias).map_err(|e| err(key, loc, e.to_string()))?;
            cfg.activation = v.to_string();
        }
        "bias" => {
            let b: f64 = num(key, loc, v)?;
            if !b.is_finite() {
                return Err(err(key, loc, "must be finite"));
            }
            cfg.bias = b;
        }
        "d" => cfg.d = at_least(key, loc, v, 3)?,
        "p" => cfg.p = at_least(key, loc, v, 1)?,
        "first_layer" => cfg.init.first_layer = id(key, loc, v)?,
        "second_layer" => cfg.init.second_layer = id(key, loc, v)?,
        "algorithm" => cfg.optimizer.algorithm = id(key, loc, v)?,
        "loss" => cfg.optimizer.loss = id(key, loc, v)?,
        "spherical" => cfg.optimizer.spherical = boolean(key, loc, v)?,
        "gamma0" => cfg.optimizer.gamma0 = positive(key, loc, v)?,
        "rho0" => {
            let r: f64 = num(key, loc, v)?;
            if !(r.is_finite() && r >= 0.0) {
                return Err(err(key, loc, format!("must be non-negative, got {v}")));
            }
            cfg.optimizer.rho0 = r;
        }
        "gamma_scaling" => cfg.optimizer.gamma_scaling = id(key, loc, v)?,
        "batch" => cfg.optimizer.batch = at_least(key, loc, v, 1)?,
        "rho_signs" => cfg.optimizer.rho_signs = id(key, loc, v)?,
        "time_scale" => cfg.time_scale = id(key, loc, v)?,
        "steps_multiplier" => {
            let m: f64 = num(key, loc, v)?;
            if !(m.is_finite() && m >= 0.0) {
                return Err(err(key, loc, format!("must be non-negative, got {v}")));
            }
            cfg.steps_multiplier = m;
        }
        "stride" => cfg.stride = num(key, loc, v)?,
        "eta" => {
            let e: f64 = num(key, loc, v)?;
            if !(e > 0.0 && e < 1.0) {
                return Err(err(key, loc, format!("must lie in (0, 1), got {v}")));
            }
            cfg.eta = e;
        }
        "seeds" => cfg.seeds = at_least(key, loc, v, 1)?,
        "seed_base" => cfg.seed_base = num(key, loc, v)?,
        "random_directions" => cfg.random_directions = boolean(key, loc, v)?,
        "stop_on_hit" => cfg.stop_on_hit = boolean(key, loc, v)?,
        _ => return Err(err(key, loc, "unknown key")),
    }
    Ok(())
}

fn split_assignment(line: &str) -> Option<(&str, &str)> {
    let (k, v) = line.split_once('=')?;
    Some((k.trim(), v.trim()))
}

/// Parses a config file body plus `key=value` overrides and validates the
/// result.
pub fn parse_config(text: &str, overrides: &[String]) -> Result<ParsedConfig, ConfigError> {
    let mut assignments: Vec<(String, String, Location)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let loc = Location::Line(i + 1);
        let (k, v) = split_assignment(line)
            .ok_or_else(|| err(line, loc, "expected `key = value`"))?;
        if assignments.iter().any(|(k2, _, l)| k2 == k && matches!(l, Location::Line(_))) {
            return Err(err(k, loc, "key assigned twice"));
        }
        assignments.push((k.to_string(), v.to_string(), loc));
    }
    for (i, o) in overrides.iter().enumerate() {
        let loc = Location::Override(i + 1);
        let (k, v) = split_assignment(o).ok_or_else(|| err(o, loc, "expected `key=value`"))?;
        assignments.push((k.to_string(), v.to_string(), loc));
    }

    let mut cfg = ExperimentConfig::default();
    let mut locations: BTreeMap<&'static str, Location> = BTreeMap::new();
    // bias first so that the activation check sees the final value
    assignments.sort_by_key(|(k, _, _)| k != "bias");
    for (k, v, loc) in &assignments {
        let key = KEYS
            .iter()
            .copied()
            .find(|x| x == k)
            .ok_or_else(|| err(k, *loc, format!("unknown key; known keys: {}", KEYS.join(", "))))?;
        apply(&mut cfg, key, v, *loc)?;
        locations.insert(key, *loc);
    }

    let link_k = LinkFunction::parse(&cfg.target).map(|l| l.index_dim()).unwrap_or(cfg.k);
    if !locations.contains_key("k") {
        cfg.k = link_k;
    }
    if !locations.contains_key("rho_signs") && cfg.k > 1 {
        cfg.optimizer.rho_signs = RhoSigns::Rademacher;
    }
    match cfg.validate() {
        Ok(_) => Ok(ParsedConfig {
            config: cfg,
            locations,
        }),
        Err(Error::InvalidConfig { keys, message }) => Err(ConfigError {
            keys: keys
                .iter()
                .map(|k| (k.to_string(), locations.get(k).copied().unwrap_or(Location::Default)))
                .collect(),
            message,
        }),
        Err(e) => Err(ConfigError {
            keys: Vec::new(),
            message: e.to_string(),
        }),
    }
}

/// The config in the same grammar, every key spelled out.
pub fn render_config(cfg: &ExperimentConfig) -> String {
    let value = serde_json::to_value(cfg).expect("config serializes");
    let mut out = String::new();
    for key in KEYS {
        let v = &value[*key];
        let s = match v {
            serde_json::Value::String(s) => s.clone(),
            other => other.to_string(),
        };
        out.push_str(&format!("{key} = {s}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use mindex::dynamics::Algorithm;

    #[test]
    fn empty_file_gives_defaults() {
        let p = parse_config("", &[]).unwrap();
        assert_eq!(p.config, ExperimentConfig::default());
        assert_eq!(p.config.d, 512);
        assert_eq!(p.config.target, "relu");
    }

    #[test]
    fn inconsistent_target_and_k_names_both_lines() {
        let e = parse_config("# header\ntarget = He3\n\nk = 2\n", &[]).unwrap_err();
        assert_eq!(
            e.keys,
            vec![("target".into(), Location::Line(2)), ("k".into(), Location::Line(4))]
        );
        assert!(e.to_string().contains("line 2") && e.to_string().contains("line 4"));
    }

    #[test]
    fn unknown_key_and_bad_values_carry_line_numbers() {
        let e = parse_config("d = 256\ngama0 = 0.1\n", &[]).unwrap_err();
        assert_eq!(e.keys, vec![("gama0".into(), Location::Line(2))]);
        let e = parse_config("eta = 1.5", &[]).unwrap_err();
        assert_eq!(e.keys, vec![("eta".into(), Location::Line(1))]);
        let e = parse_config("algorithm = adam", &[]).unwrap_err();
        assert!(e.message.contains("adam"));
        let e = parse_config("d = 256\nd = 512", &[]).unwrap_err();
        assert_eq!(e.keys[0].1, Location::Line(2));
        assert!(parse_config("just words", &[]).is_err());
    }

    #[test]
    fn overrides_win_and_k_follows_target() {
        let p = parse_config(
            "algorithm = egd\nrho0 = 0.1  # inner rate\n",
            &["target=x1x2x3".into(), "d=256".into()],
        )
        .unwrap();
        assert_eq!(p.config.k, 3);
        assert_eq!(p.config.optimizer.algorithm, Algorithm::Egd);
        assert_eq!(p.config.optimizer.rho_signs, RhoSigns::Rademacher);
        assert_eq!(p.config.effective_rho(), 0.1 / 256.0);
        assert_eq!(p.locations["target"], Location::Override(1));
    }

    #[test]
    fn rendered_config_parses_back() {
        let p = parse_config("target = sign(x1x2)\nd = 300\ngamma_scaling = 1/(d log d)\n", &[]).unwrap();
        let again = parse_config(&render_config(&p.config), &[]).unwrap();
        assert_eq!(again.config, p.config);
    }
}
