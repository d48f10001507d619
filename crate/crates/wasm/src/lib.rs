//! Browser bindings. Every export returns a JSON string; errors become JS
//! exceptions carrying the message.

use mindex::dynamics::{drift_phi, Algorithm, InitSpec, OptimizerConfig, RhoSigns, SecondLayerInit};
use mindex::experiments::{run_trajectory, to_json_string, ExperimentConfig};
use mindex::exponents::{
    default_nodes, default_rule, directional_report, exponent_report, DEFAULT_DEGMAX, DEFAULT_KMAX,
    DEFAULT_TOL,
};
use mindex::linalg::norm;
use mindex::targets::{Activation, LinkFunction, Smoothness, ACTIVATION_IDS, LINK_IDS, DEFAULT_BIAS};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Upper bound on `p * d * T` for one in-browser trajectory.
pub const MAX_WORK: f64 = 4e8;

fn js<T>(r: Result<T, String>) -> Result<T, JsError> {
    r.map_err(|e| JsError::new(&e))
}

fn text<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

/// Exponent report for `link`; `direction` is a comma-separated vector for
/// multi-index links (normalised here), empty otherwise.
pub fn exponent_json(link: &str, direction: &str) -> Result<String, String> {
    let l = LinkFunction::parse(link).map_err(text)?;
    let rule = default_rule(&l, default_nodes(&l)).map_err(text)?;
    let report = if direction.trim().is_empty() {
        exponent_report(&l, DEFAULT_KMAX, DEFAULT_DEGMAX, &rule, DEFAULT_TOL)
    } else {
        let v: Vec<f64> = direction
            .split(',')
            .map(|x| x.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| format!("cannot parse direction `{direction}`"))?;
        let n = norm(&v);
        if !(n > 0.0 && n.is_finite()) {
            return Err("direction must be nonzero".into());
        }
        let v: Vec<f64> = v.iter().map(|x| x / n).collect();
        directional_report(&l, &v, DEFAULT_KMAX, DEFAULT_DEGMAX, &rule, DEFAULT_TOL)
    }
    .map_err(text)?;
    to_json_string(&report).map_err(text)
}

#[derive(Serialize)]
struct PhiCurve {
    link: String,
    activation: String,
    rho0: f64,
    m: Vec<f64>,
    phi: Vec<f64>,
}

/// `φ(m)` on `points` equispaced overlaps in `(-1, 1)`.
pub fn phi_curve_json(link: &str, activation: &str, rho0: f64, points: usize) -> Result<String, String> {
    let l = LinkFunction::parse(link).map_err(text)?;
    let act = Activation::parse(activation, DEFAULT_BIAS).map_err(text)?;
    let nodes = match l.smoothness() {
        Smoothness::Analytic => 80,
        Smoothness::Piecewise => 200,
    };
    let rule = default_rule(&l, nodes).map_err(text)?;
    let points = points.clamp(3, 400);
    let m: Vec<f64> = (0..points)
        .map(|i| -0.98 + 1.96 * i as f64 / (points - 1) as f64)
        .collect();
    let phi = m
        .iter()
        .map(|&x| drift_phi(x, rho0, 1.0, &l, act, &rule))
        .collect::<mindex::Result<Vec<f64>>>()
        .map_err(text)?;
    to_json_string(&PhiCurve {
        link: l.id().to_string(),
        activation: act.id().to_string(),
        rho0,
        m,
        phi,
    })
    .map_err(text)
}

#[derive(Serialize)]
struct TrajectoryJson {
    target: String,
    algorithm: String,
    d: usize,
    p: usize,
    seed: u64,
    steps: Vec<u64>,
    t_norm: Vec<f64>,
    /// `cosines[r][i]`: max |cos| to direction `r` at logged step `i`.
    cosines: Vec<Vec<f64>>,
    overlaps: Vec<f64>,
}

/// One trajectory with relu units; `steps_multiplier` is in units of `d`.
#[allow(clippy::too_many_arguments)]
pub fn simulate_json(
    target: &str,
    algorithm: &str,
    d: usize,
    p: usize,
    gamma0: f64,
    rho0: f64,
    steps_multiplier: f64,
    seed: u64,
) -> Result<String, String> {
    let link = LinkFunction::parse(target).map_err(text)?;
    let algorithm: Algorithm = algorithm.parse().map_err(text)?;
    let k = link.index_dim();
    let work = p as f64 * d as f64 * steps_multiplier * d as f64;
    if work > MAX_WORK {
        return Err(format!("p d T = {work:.2e} exceeds the in-browser limit {MAX_WORK:.0e}"));
    }
    let cfg = ExperimentConfig {
        preset: "browser".into(),
        target: target.to_string(),
        k,
        d,
        p,
        init: InitSpec {
            second_layer: if p > 1 { SecondLayerInit::Gaussian } else { SecondLayerInit::Ones },
            ..InitSpec::default()
        },
        optimizer: OptimizerConfig {
            algorithm,
            gamma0,
            rho0,
            rho_signs: if k > 1 { RhoSigns::Rademacher } else { RhoSigns::Fixed },
            ..OptimizerConfig::default()
        },
        steps_multiplier,
        stride: 0,
        seeds: 1,
        seed_base: seed,
        ..ExperimentConfig::default()
    };
    let t = run_trajectory(&cfg, seed).map_err(text)?;
    let cosines = (0..k).map(|r| t.cosines.iter().map(|c| c[r]).collect()).collect();
    to_json_string(&TrajectoryJson {
        target: link.id().to_string(),
        algorithm: algorithm.id().to_string(),
        d,
        p,
        seed,
        t_norm: t.steps.iter().map(|&s| cfg.t_norm(s)).collect(),
        steps: t.steps,
        cosines,
        overlaps: t.overlaps,
    })
    .map_err(text)
}

#[wasm_bindgen]
pub fn exponent(link: &str, direction: &str) -> Result<String, JsError> {
    js(exponent_json(link, direction))
}

#[wasm_bindgen]
pub fn phi_curve(link: &str, activation: &str, rho0: f64, points: usize) -> Result<String, JsError> {
    js(phi_curve_json(link, activation, rho0, points))
}

#[allow(clippy::too_many_arguments)]
#[wasm_bindgen]
pub fn simulate(
    target: &str,
    algorithm: &str,
    d: usize,
    p: usize,
    gamma0: f64,
    rho0: f64,
    steps_multiplier: f64,
    seed: u32,
) -> Result<String, JsError> {
    js(simulate_json(target, algorithm, d, p, gamma0, rho0, steps_multiplier, seed as u64))
}

/// Link and activation ids, newline separated, for the page's drop-downs.
#[wasm_bindgen]
pub fn registry() -> String {
    format!("{}\n{}", LINK_IDS.join("\t"), ACTIVATION_IDS.join("\t"))
}
