//! Run manifests: everything needed to redo a run, written next to its outputs.

use std::time::{SystemTime, UNIX_EPOCH};

use mindex::experiments::ExperimentConfig;
use serde::{Deserialize, Serialize};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const TOOL: &str = "mindex";

/// The fully resolved work of one invocation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum Plan {
    Simulate {
        config: ExperimentConfig,
    },
    Sweep {
        config: ExperimentConfig,
        dims: Vec<usize>,
    },
    Figure {
        id: String,
        scale: f64,
        runs: Vec<ExperimentConfig>,
    },
    Exponent {
        link: String,
        direction: Option<Vec<f64>>,
        kmax: usize,
        degmax: usize,
        tol: f64,
        nodes: usize,
    },
}

impl Plan {
    pub fn command(&self) -> &'static str {
        match self {
            Plan::Simulate { .. } => "simulate",
            Plan::Sweep { .. } => "sweep",
            Plan::Figure { .. } => "figure",
            Plan::Exponent { .. } => "exponent",
        }
    }

    pub fn configs(&self) -> Vec<&ExperimentConfig> {
        match self {
            Plan::Simulate { config } | Plan::Sweep { config, .. } => vec![config],
            Plan::Figure { runs, .. } => runs.iter().collect(),
            Plan::Exponent { .. } => Vec::new(),
        }
    }
}

/// Rates and budgets as the dynamics see them, per config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Derived {
    pub preset: String,
    pub algorithm: String,
    pub d: usize,
    pub gamma: f64,
    pub rho: f64,
    pub total_steps: u64,
    pub stride: u64,
    pub seeds: Vec<u64>,
}

impl Derived {
    pub fn of(cfg: &ExperimentConfig) -> Self {
        Self {
            preset: cfg.preset.clone(),
            algorithm: cfg.optimizer.algorithm.id().to_string(),
            d: cfg.d,
            gamma: cfg.effective_gamma(),
            rho: cfg.effective_rho(),
            total_steps: cfg.total_steps(),
            stride: cfg.effective_stride(),
            seeds: cfg.seed_list(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    /// Seconds since the epoch; `SOURCE_DATE_EPOCH` overrides the clock.
    pub timestamp_unix: u64,
    pub plan: Plan,
    pub derived: Vec<Derived>,
    /// Worker count used; outputs do not depend on it.
    pub jobs: usize,
    /// Files written, relative to the output directory.
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(plan: Plan, jobs: usize, outputs: Vec<String>) -> Self {
        let derived = plan.configs().into_iter().map(Derived::of).collect();
        Self {
            tool: TOOL.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp_unix: timestamp(),
            plan,
            derived,
            jobs,
            outputs,
        }
    }
}

fn timestamp() -> u64 {
    if let Some(t) = std::env::var("SOURCE_DATE_EPOCH").ok().and_then(|s| s.parse().ok()) {
        return t;
    }
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use mindex::experiments::to_json_string;

    #[test]
    fn manifest_round_trips_through_json() {
        let mut config = ExperimentConfig::default();
        config.optimizer.rho0 = 0.1;
        config.d = 200;
        let m = RunManifest::new(Plan::Simulate { config }, 2, vec!["trajectories.csv".into()]);
        assert_eq!(m.derived[0].rho, 0.1 / 200.0);
        let s = to_json_string(&m).unwrap();
        assert!(s.contains("\"command\": \"simulate\""));
        let back: RunManifest = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn exponent_plan_has_no_configs() {
        let p = Plan::Exponent {
            link: "He4".into(),
            direction: None,
            kmax: 8,
            degmax: 6,
            tol: 1e-7,
            nodes: 80,
        };
        assert!(p.configs().is_empty());
        assert_eq!(p.command(), "exponent");
    }
}
