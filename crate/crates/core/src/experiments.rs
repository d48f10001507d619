//! Trajectory ensembles, weak-recovery hitting times, dimension sweeps and
//! figure presets.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::dynamics::{
    Algorithm, Batch, GammaScaling, InitSpec, LossKind, NetworkState, Optimizer, OptimizerConfig,
    RhoSigns, SecondLayerInit,
};
use crate::linalg::{
    max_abs_cosine_per_direction, subspace_overlap, DirectionSet, GaussianSampler,
};
use crate::targets::{Activation, LinkFunction, DEFAULT_BIAS};
use crate::{Error, Result};

/// Stream ids carved out of each seed.
pub const STREAM_DATA: u64 = 0;
pub const STREAM_INIT: u64 = 1;
pub const STREAM_DIRECTIONS: u64 = 2;
pub const STREAM_BOOTSTRAP: u64 = 3;

pub const DEFAULT_ETA: f64 = 0.3;
/// Target number of logged points per trajectory when the stride is automatic.
pub const LOG_POINTS: u64 = 500;
pub const BOOTSTRAP_RESAMPLES: usize = 1000;

pub const CSV_HEADER: &str = "preset,algorithm,d,p,n_b,seed,step,t_norm,dir_index,max_abs_cos";

id_enum!(
    /// Unit of the step budget and of the normalised time axis.
    TimeScale, "time_scale" {
        D => "d",
        DLogD => "dlogd" | "d log d" | "dlog(d)",
    }
);

impl TimeScale {
    pub fn unit(&self, d: usize) -> f64 {
        let d = d as f64;
        match self {
            TimeScale::D => d,
            TimeScale::DLogD => d * d.ln(),
        }
    }
}

/// Everything needed to run one family of trajectories.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub preset: String,
    pub target: String,
    /// Index dimension; must agree with `target`.
    pub k: usize,
    pub activation: String,
    pub bias: f64,
    pub d: usize,
    pub p: usize,
    #[serde(flatten)]
    pub init: InitSpec,
    #[serde(flatten)]
    pub optimizer: OptimizerConfig,
    pub time_scale: TimeScale,
    /// Budget `T = ceil(steps_multiplier * unit(d))`.
    pub steps_multiplier: f64,
    /// Logging stride in steps; 0 picks `max(1, T / 500)`.
    pub stride: u64,
    pub eta: f64,
    pub seeds: usize,
    pub seed_base: u64,
    pub random_directions: bool,
    /// Stop once the subspace overlap and every direction reached `eta`.
    pub stop_on_hit: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            preset: "fig1a".into(),
            target: "relu".into(),
            k: 1,
            activation: "relu".into(),
            bias: DEFAULT_BIAS,
            d: 512,
            p: 1,
            init: InitSpec::default(),
            optimizer: OptimizerConfig::default(),
            time_scale: TimeScale::D,
            steps_multiplier: 400.0,
            stride: 0,
            eta: DEFAULT_ETA,
            seeds: 10,
            seed_base: 0,
            random_directions: false,
            stop_on_hit: false,
        }
    }
}

fn config_error(keys: &[&'static str], message: impl Into<String>) -> Error {
    Error::InvalidConfig {
        keys: keys.to_vec(),
        message: message.into(),
    }
}

/// Parsed runtime objects of an [`ExperimentConfig`].
#[derive(Clone, Debug)]
pub struct Resolved {
    pub link: LinkFunction,
    pub activation: Activation,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<Resolved> {
        let link = LinkFunction::parse(&self.target)
            .map_err(|e| config_error(&["target"], e.to_string()))?;
        if link.index_dim() != self.k {
            return Err(config_error(
                &["target", "k"],
                format!(
                    "target `{}` depends on {} direction(s) but k = {}",
                    self.target,
                    link.index_dim(),
                    self.k
                ),
            ));
        }
        let activation = Activation::parse(&self.activation, self.bias)
            .map_err(|e| config_error(&["activation"], e.to_string()))?;
        if !self.bias.is_finite() {
            return Err(config_error(&["bias"], "must be finite"));
        }
        if self.d < 3 || self.d <= self.k {
            return Err(config_error(&["d", "k"], format!("need d >= 3 and d > k, got d = {}", self.d)));
        }
        if self.p == 0 {
            return Err(config_error(&["p"], "need at least one neuron"));
        }
        let o = &self.optimizer;
        if !(o.gamma0.is_finite() && o.gamma0 > 0.0) {
            return Err(config_error(&["gamma0"], format!("must be positive, got {}", o.gamma0)));
        }
        if !(o.rho0.is_finite() && o.rho0 >= 0.0) {
            return Err(config_error(&["rho0"], format!("must be non-negative, got {}", o.rho0)));
        }
        if o.batch == 0 {
            return Err(config_error(&["batch"], "must be >= 1"));
        }
        if !(self.steps_multiplier.is_finite() && self.steps_multiplier >= 0.0) {
            return Err(config_error(&["steps_multiplier"], "must be a non-negative number"));
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(config_error(&["eta"], format!("must lie in (0, 1), got {}", self.eta)));
        }
        if self.seeds == 0 {
            return Err(config_error(&["seeds"], "need at least one seed"));
        }
        Ok(Resolved { link, activation })
    }

    pub fn total_steps(&self) -> u64 {
        (self.steps_multiplier * self.time_scale.unit(self.d)).ceil() as u64
    }

    pub fn effective_stride(&self) -> u64 {
        if self.stride > 0 {
            self.stride
        } else {
            (self.total_steps() / LOG_POINTS).max(1)
        }
    }

    pub fn t_norm(&self, step: u64) -> f64 {
        step as f64 / self.time_scale.unit(self.d)
    }

    pub fn effective_gamma(&self) -> f64 {
        self.optimizer.effective_gamma(self.d)
    }

    pub fn effective_rho(&self) -> f64 {
        self.optimizer.effective_rho(self.d)
    }

    pub fn seed_list(&self) -> Vec<u64> {
        (0..self.seeds as u64).map(|i| self.seed_base + i).collect()
    }

    fn directions(&self, seed: u64) -> Result<DirectionSet> {
        if self.random_directions {
            let mut s = GaussianSampler::new(seed, STREAM_DIRECTIONS);
            DirectionSet::random(self.k, self.d, &mut s)
        } else {
            DirectionSet::standard(self.k, self.d)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryStatus {
    Completed,
    StoppedOnHit,
}

/// Logged overlaps of one run.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub config: ExperimentConfig,
    pub seed: u64,
    pub steps: Vec<u64>,
    /// Per logged step, `max_j |cos(w_j, w*_r)|` for every direction `r`.
    pub cosines: Vec<Vec<f64>>,
    /// Per logged step, `||Ŵ W*ᵀ||_F`.
    pub overlaps: Vec<f64>,
    pub samples_consumed: u64,
    pub status: TrajectoryStatus,
}

impl Trajectory {
    pub fn final_cosines(&self) -> &[f64] {
        self.cosines.last().map(Vec::as_slice).unwrap_or(&[])
    }

    /// Largest cosine over all directions at the last logged step.
    pub fn final_max_cosine(&self) -> f64 {
        self.final_cosines().iter().copied().fold(0.0, f64::max)
    }
}

/// Simulates one seed. The data stream, the initialisation and the random
/// directions come from disjoint streams of `seed`.
pub fn run_trajectory(cfg: &ExperimentConfig, seed: u64) -> Result<Trajectory> {
    let Resolved { link, activation } = cfg.validate()?;
    let dirs = cfg.directions(seed)?;
    let mut init = GaussianSampler::new(seed, STREAM_INIT);
    let mut net = NetworkState::init(&cfg.init, cfg.p, activation, &dirs, &mut init)?;
    let mut opt = Optimizer::new(cfg.optimizer.clone(), cfg.p, cfg.d, &mut init)?;
    let mut data = GaussianSampler::new(seed, STREAM_DATA);

    let total = cfg.total_steps();
    let stride = cfg.effective_stride();
    let n_b = cfg.optimizer.batch;
    let mut traj = Trajectory {
        config: cfg.clone(),
        seed,
        steps: Vec::new(),
        cosines: Vec::new(),
        overlaps: Vec::new(),
        samples_consumed: 0,
        status: TrajectoryStatus::Completed,
    };
    let log = |traj: &mut Trajectory, net: &NetworkState, t: u64| -> Result<bool> {
        let rows: Vec<&[f64]> = net.rows().collect();
        let cos = max_abs_cosine_per_direction(&rows, &dirs)?;
        let ov = subspace_overlap(&rows, &dirs)?;
        let hit = ov >= cfg.eta && cos.iter().all(|&c| c >= cfg.eta);
        traj.steps.push(t);
        traj.cosines.push(cos);
        traj.overlaps.push(ov);
        Ok(hit)
    };
    log(&mut traj, &net, 0)?;

    let mut batch = Batch::new(cfg.d);
    let mut u = vec![0.0; cfg.k];
    for t in 1..=total {
        batch.clear();
        for _ in 0..n_b {
            let (z, y) = batch.push_slot();
            data.fill_gaussian(z);
            dirs.project_into(z, &mut u);
            *y = link.eval(&u);
        }
        opt.step(&mut net, &batch, t)?;
        traj.samples_consumed += n_b as u64;
        if t % stride == 0 || t == total {
            let hit = log(&mut traj, &net, t)?;
            if hit && cfg.stop_on_hit {
                traj.status = TrajectoryStatus::StoppedOnHit;
                break;
            }
        }
    }
    Ok(traj)
}

/// Runs `(config, seed)` jobs on at most `threads` workers; results keep the
/// input order. The first failing job (in input order) is reported.
pub fn run_jobs(jobs: &[(ExperimentConfig, u64)], threads: usize) -> Result<Vec<Trajectory>> {
    let results: Vec<Result<Trajectory>> = run_parallel(jobs, threads.max(1))?;
    results
        .into_iter()
        .zip(jobs)
        .map(|(r, (_, seed))| {
            r.map_err(|e| Error::InRun {
                seed: *seed,
                source: Box::new(e),
            })
        })
        .collect()
}

#[cfg(feature = "parallel")]
fn run_parallel(jobs: &[(ExperimentConfig, u64)], threads: usize) -> Result<Vec<Result<Trajectory>>> {
    use rayon::prelude::*;
    if threads == 1 {
        return Ok(jobs.iter().map(|(c, s)| run_trajectory(c, *s)).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(|| jobs.par_iter().map(|(c, s)| run_trajectory(c, *s)).collect()))
}

#[cfg(not(feature = "parallel"))]
fn run_parallel(jobs: &[(ExperimentConfig, u64)], _threads: usize) -> Result<Vec<Result<Trajectory>>> {
    Ok(jobs.iter().map(|(c, s)| run_trajectory(c, *s)).collect())
}

/// All seeds of one config.
pub fn run_ensemble(cfg: &ExperimentConfig, threads: usize) -> Result<Vec<Trajectory>> {
    cfg.validate()?;
    let jobs: Vec<_> = cfg.seed_list().into_iter().map(|s| (cfg.clone(), s)).collect();
    run_jobs(&jobs, threads)
}

/// Ensemble curve: average over runs of the per-direction max |cosine|, at
/// the last logged step.
pub fn mean_final_cosines(trajs: &[Trajectory]) -> Vec<f64> {
    let Some(first) = trajs.first() else {
        return Vec::new();
    };
    let mut acc = vec![0.0; first.final_cosines().len()];
    for t in trajs {
        for (a, c) in acc.iter_mut().zip(t.final_cosines()) {
            *a += c;
        }
    }
    acc.iter().map(|a| a / trajs.len() as f64).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HittingTimeRecord {
    pub eta: f64,
    /// First logged step with `max_j |cos(w_j, w*_r)| >= eta`, per direction.
    pub per_direction: Vec<Option<u64>>,
    /// `t+_eta`: first logged step with `||Ŵ W*ᵀ||_F >= eta`.
    pub subspace: Option<u64>,
}

pub fn detect_hitting(traj: &Trajectory, eta: f64) -> Result<HittingTimeRecord> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::InvalidArgument(format!("eta must lie in (0, 1), got {eta}")));
    }
    let k = traj.cosines.first().map_or(0, Vec::len);
    let per_direction = (0..k)
        .map(|r| {
            traj.steps
                .iter()
                .zip(&traj.cosines)
                .find(|(_, c)| c[r] >= eta)
                .map(|(&t, _)| t)
        })
        .collect();
    let subspace = traj
        .steps
        .iter()
        .zip(&traj.overlaps)
        .find(|(_, &o)| o >= eta)
        .map(|(&t, _)| t);
    Ok(HittingTimeRecord {
        eta,
        per_direction,
        subspace,
    })
}

/// Median with right-censoring: `None` entries count as `+∞`. The result is
/// `None` when the median itself is censored.
pub fn censored_median(times: &[Option<u64>]) -> Option<f64> {
    if times.is_empty() {
        return None;
    }
    let mut v: Vec<f64> = times
        .iter()
        .map(|t| t.map_or(f64::INFINITY, |x| x as f64))
        .collect();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let m = if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    };
    m.is_finite().then_some(m)
}

/// Ordinary least squares of `log t` on `log d`; returns `(slope, intercept)`.
pub fn fit_power_law(dims: &[f64], times: &[f64]) -> Result<(f64, f64)> {
    if dims.len() != times.len() || dims.len() < 2 {
        return Err(Error::InvalidArgument("need at least two (d, t) points".into()));
    }
    if dims.iter().chain(times).any(|&x| !(x > 0.0 && x.is_finite())) {
        return Err(Error::InvalidArgument("power-law fit needs positive finite values".into()));
    }
    let x: Vec<f64> = dims.iter().map(|d| d.ln()).collect();
    let y: Vec<f64> = times.iter().map(|t| t.ln()).collect();
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("dimensions must not all coincide".into()));
    }
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScalingFit {
    pub preset: String,
    pub dims: Vec<usize>,
    /// Median `t+_eta` per dimension; null when censored.
    pub medians: Vec<Option<f64>>,
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub n_seeds: usize,
    /// Set when some dimension has a censored median and was left out.
    pub partial: bool,
}

/// Median hitting time per dimension, log-log slope and a percentile
/// bootstrap CI (2.5%, 97.5%) from resampling seeds within each dimension.
pub fn scaling_fit(
    preset: &str,
    dims: &[usize],
    times: &[Vec<Option<u64>>],
    bootstrap_seed: u64,
) -> Result<ScalingFit> {
    if dims.len() != times.len() {
        return Err(Error::DimensionMismatch {
            expected: dims.len(),
            got: times.len(),
        });
    }
    let medians: Vec<Option<f64>> = times.iter().map(|t| censored_median(t)).collect();
    let fit_on = |meds: &[Option<f64>]| -> Option<(f64, f64)> {
        let (x, y): (Vec<f64>, Vec<f64>) = dims
            .iter()
            .zip(meds)
            .filter_map(|(&d, m)| m.map(|m| (d as f64, m.max(1.0))))
            .unzip();
        fit_power_law(&x, &y).ok()
    };
    let partial = medians.iter().any(Option::is_none);
    let point = fit_on(&medians);

    let mut rng = GaussianSampler::new(bootstrap_seed, STREAM_BOOTSTRAP);
    let mut slopes = Vec::with_capacity(BOOTSTRAP_RESAMPLES);
    let mut resample = Vec::new();
    for _ in 0..BOOTSTRAP_RESAMPLES {
        let meds: Vec<Option<f64>> = times
            .iter()
            .map(|t| {
                resample.clear();
                for _ in 0..t.len() {
                    let i = ((rng.uniform() * t.len() as f64) as usize).min(t.len() - 1);
                    resample.push(t[i]);
                }
                censored_median(&resample)
            })
            .collect();
        // keep the same set of dimensions as the point estimate
        let same_support = meds.iter().zip(&medians).all(|(a, b)| a.is_some() >= b.is_some());
        if same_support {
            let masked: Vec<Option<f64>> =
                meds.iter().zip(&medians).map(|(a, b)| b.and(*a)).collect();
            if let Some((s, _)) = fit_on(&masked) {
                slopes.push(s);
            }
        }
    }
    let (ci_low, ci_high) = if point.is_some() && !slopes.is_empty() {
        slopes.sort_by(f64::total_cmp);
        let q = |p: f64| slopes[((p * (slopes.len() - 1) as f64).round() as usize).min(slopes.len() - 1)];
        (Some(q(0.025)), Some(q(0.975)))
    } else {
        (None, None)
    };
    Ok(ScalingFit {
        preset: preset.to_string(),
        dims: dims.to_vec(),
        medians,
        slope: point.map(|p| p.0),
        intercept: point.map(|p| p.1),
        ci_low,
        ci_high,
        n_seeds: times.iter().map(Vec::len).max().unwrap_or(0),
        partial,
    })
}

#[derive(Clone, Debug)]
pub struct SweepOutcome {
    pub fit: ScalingFit,
    /// One record per `(dimension, seed)`, in the order of `trajectories`.
    pub records: Vec<HittingTimeRecord>,
    pub trajectories: Vec<Trajectory>,
}

/// Runs `base.seeds` seeds at every dimension and fits the scaling of the
/// median `t+_eta`.
pub fn sweep_dimensions(base: &ExperimentConfig, dims: &[usize], threads: usize) -> Result<SweepOutcome> {
    if dims.len() < 3 {
        return Err(Error::InvalidArgument("a sweep needs at least three dimensions".into()));
    }
    if let Some(&d) = dims.iter().find(|&&d| d < 128) {
        return Err(Error::InvalidArgument(format!("sweep dimensions must be >= 128, got {d}")));
    }
    if base.seeds < 8 {
        return Err(Error::InvalidArgument(format!("a sweep needs >= 8 seeds, got {}", base.seeds)));
    }
    let mut jobs = Vec::new();
    for &d in dims {
        let cfg = ExperimentConfig { d, ..base.clone() };
        cfg.validate()?;
        jobs.extend(cfg.seed_list().into_iter().map(|s| (cfg.clone(), s)));
    }
    let trajectories = run_jobs(&jobs, threads)?;
    let records = trajectories
        .iter()
        .map(|t| detect_hitting(t, base.eta))
        .collect::<Result<Vec<_>>>()?;
    let times: Vec<Vec<Option<u64>>> = records
        .chunks(base.seeds)
        .map(|c| c.iter().map(|r| r.subspace).collect())
        .collect();
    let fit = scaling_fit(&base.preset, dims, &times, base.seed_base)?;
    Ok(SweepOutcome {
        fit,
        records,
        trajectories,
    })
}

/// Float formatting used in every output file: 17 significant digits.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// One row per logged step and direction, sorted by `(preset, algorithm, d,
/// seed)` so the output does not depend on scheduling.
pub fn write_csv<W: Write>(out: &mut W, trajs: &[Trajectory]) -> io::Result<()> {
    let mut order: Vec<&Trajectory> = trajs.iter().collect();
    order.sort_by(|a, b| {
        (&a.config.preset, a.config.optimizer.algorithm.id(), a.config.d, a.seed).cmp(&(
            &b.config.preset,
            b.config.optimizer.algorithm.id(),
            b.config.d,
            b.seed,
        ))
    });
    writeln!(out, "{CSV_HEADER}")?;
    for t in order {
        let c = &t.config;
        for (&step, cos) in t.steps.iter().zip(&t.cosines) {
            let tn = format_float(c.t_norm(step));
            for (r, v) in cos.iter().enumerate() {
                writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{},{}",
                    c.preset,
                    c.optimizer.algorithm,
                    c.d,
                    c.p,
                    c.optimizer.batch,
                    t.seed,
                    step,
                    tn,
                    r,
                    format_float(*v)
                )?;
            }
        }
    }
    Ok(())
}

/// Pretty JSON with every float written as [`format_float`]; integers stay
/// integers and non-finite floats become null.
pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value)
        .map_err(|e| Error::InvalidArgument(format!("cannot serialize: {e}")))?;
    let mut s = String::new();
    write_json(&v, 0, &mut s);
    s.push('\n');
    Ok(s)
}

fn write_json(v: &serde_json::Value, indent: usize, out: &mut String) {
    use serde_json::Value;
    let pad = |n: usize, out: &mut String| out.extend(std::iter::repeat_n(' ', n));
    match v {
        Value::Number(n) => {
            if n.is_f64() {
                match n.as_f64() {
                    Some(x) if x.is_finite() => out.push_str(&format_float(x)),
                    _ => out.push_str("null"),
                }
            } else {
                out.push_str(&n.to_string());
            }
        }
        Value::Array(items) if items.is_empty() => out.push_str("[]"),
        Value::Array(items) => {
            out.push_str("[\n");
            for (i, x) in items.iter().enumerate() {
                pad(indent + 2, out);
                write_json(x, indent + 2, out);
                out.push_str(if i + 1 < items.len() { ",\n" } else { "\n" });
            }
            pad(indent, out);
            out.push(']');
        }
        Value::Object(map) if map.is_empty() => out.push_str("{}"),
        Value::Object(map) => {
            out.push_str("{\n");
            for (i, (k, x)) in map.iter().enumerate() {
                pad(indent + 2, out);
                out.push_str(&Value::String(k.clone()).to_string());
                out.push_str(": ");
                write_json(x, indent + 2, out);
                out.push_str(if i + 1 < map.len() { ",\n" } else { "\n" });
            }
            pad(indent, out);
            out.push('}');
        }
        other => out.push_str(&other.to_string()),
    }
}

pub const PRESET_IDS: &[&str] = &[
    "fig1a",
    "fig1b",
    "fig1c",
    "fig1d",
    "fig2a",
    "fig2b",
    "fig2c",
    "fig2d",
    "fig3a",
    "fig3b",
    "fig4",
    "app-sam",
    "app-lookahead",
    "app-largebatch-he3",
    "app-largebatch-he4",
    "app-largebatch-sign",
    "app-largebatch-x1x2x3",
];

/// A named group of runs reproducing one figure, with its ensemble size.
#[derive(Clone, Debug, PartialEq)]
pub struct FigurePreset {
    pub id: String,
    pub description: &'static str,
    pub runs: Vec<ExperimentConfig>,
}

impl FigurePreset {
    /// Multiplies every dimension and ensemble size by `scale`.
    pub fn scaled(mut self, scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidArgument(format!("scale must be positive, got {scale}")));
        }
        for r in &mut self.runs {
            let d = ((r.d as f64 * scale).round() as usize).max(r.k + 2).max(3);
            let n_b_per_d = r.optimizer.batch as f64 / r.d as f64;
            if r.optimizer.batch > 1 {
                r.optimizer.batch = (n_b_per_d * d as f64).round().max(1.0) as usize;
            }
            r.d = d;
            r.seeds = ((r.seeds as f64 * scale).round() as usize).max(1);
        }
        Ok(self)
    }
}

struct Spec {
    target: &'static str,
    d: usize,
    p: usize,
    gamma0: f64,
    seeds: usize,
    a0: SecondLayerInit,
    scale: TimeScale,
    budget: f64,
}

impl Spec {
    fn single(target: &'static str, ell_star: usize) -> Self {
        let (scale, budget) = budget_for(ell_star);
        Self {
            target,
            d: 8192,
            p: 1,
            gamma0: 0.01,
            seeds: 40,
            a0: SecondLayerInit::Ones,
            scale,
            budget,
        }
    }

    fn multi(target: &'static str, gamma0: f64, seeds: usize, a0: SecondLayerInit, ell_star: usize) -> Self {
        let (scale, budget) = budget_for(ell_star);
        Self {
            target,
            d: 2048,
            p: 8,
            gamma0,
            seeds,
            a0,
            scale,
            budget,
        }
    }

    fn config(&self, preset: &str, algorithm: Algorithm) -> ExperimentConfig {
        let k = LinkFunction::parse(self.target).map_or(1, |l| l.index_dim());
        ExperimentConfig {
            preset: preset.to_string(),
            target: self.target.to_string(),
            k,
            d: self.d,
            p: self.p,
            init: InitSpec {
                second_layer: self.a0,
                ..InitSpec::default()
            },
            optimizer: OptimizerConfig {
                algorithm,
                gamma0: self.gamma0,
                rho0: 0.1,
                gamma_scaling: GammaScaling::InvD,
                rho_signs: if k > 1 { RhoSigns::Rademacher } else { RhoSigns::Fixed },
                loss: LossKind::Squared,
                ..OptimizerConfig::default()
            },
            time_scale: self.scale,
            steps_multiplier: self.budget,
            seeds: self.seeds,
            ..ExperimentConfig::default()
        }
    }
}

/// Step budgets: `ℓ* = 1` targets get `T = 400 d`, `ℓ* = 2` targets
/// `T = 300 d log d`.
fn budget_for(ell_star: usize) -> (TimeScale, f64) {
    if ell_star <= 1 {
        (TimeScale::D, 400.0)
    } else {
        (TimeScale::DLogD, 300.0)
    }
}

fn large_batch(mut cfg: ExperimentConfig) -> ExperimentConfig {
    cfg.optimizer.batch = 2 * cfg.d;
    cfg.optimizer.gamma0 = 0.1;
    cfg.optimizer.gamma_scaling = GammaScaling::BatchOverD;
    // T n_b matches the sample budget of the single-sample run
    cfg.steps_multiplier /= cfg.optimizer.batch as f64;
    cfg
}

pub fn figure_preset(id: &str) -> Result<FigurePreset> {
    use Algorithm::{Egd, Lookahead2, Sam, Sgd};
    use SecondLayerInit::{Gaussian, Rademacher};
    let both = |s: Spec, id: &str| vec![s.config(id, Sgd), s.config(id, Egd)];
    let (description, runs) = match id {
        "fig1a" => ("relu, (ℓ, ℓ*) = (1, 1)", both(Spec::single("relu", 1), id)),
        "fig1b" => ("He2, (ℓ, ℓ*) = (2, 2)", both(Spec::single("He2", 2), id)),
        "fig1c" => ("He3, (ℓ, ℓ*) = (3, 1)", both(Spec::single("He3", 1), id)),
        "fig1d" => ("He4, (ℓ, ℓ*) = (4, 2)", both(Spec::single("He4", 2), id)),
        "fig2a" => ("x1 + x1 x2", both(Spec::multi("x1+x1x2", 0.01, 40, Rademacher, 1), id)),
        "fig2b" => ("sign(x1 x2)", both(Spec::multi("sign(x1x2)", 0.01, 40, Gaussian, 2), id)),
        "fig2c" => ("x1 + He3(x2)", both(Spec::multi("x1+He3(x2)", 0.1, 40, Gaussian, 1), id)),
        "fig2d" => ("x1 x2 x3", both(Spec::multi("x1x2x3", 0.1, 20, Gaussian, 2), id)),
        "fig3a" => ("x1 + x1 He3(x2)", both(Spec::multi("x1+x1He3(x2)", 0.1, 40, Gaussian, 1), id)),
        "fig3b" => {
            let s = |t| Spec {
                d: 1024,
                p: 4,
                ..Spec::multi(t, 0.01, 10, Gaussian, 2)
            };
            (
                "staircase He2(x1) + sign(x1 x2 x3) and the sign(x1 x2 x3) control",
                vec![
                    s("He2(x1)+sign(x1x2x3)").config("fig3b", Egd),
                    s("sign(x1x2x3)").config("fig3b-control", Egd),
                ],
            )
        }
        "fig4" => {
            let s = Spec {
                d: 1024,
                p: 4,
                ..Spec::multi("He4(x1)+sign(x1x2x3)", 0.01, 10, Gaussian, 2)
            };
            ("He4(x1) + sign(x1 x2 x3)", vec![s.config(id, Egd)])
        }
        "app-sam" => {
            let runs = [4096, 8192]
                .into_iter()
                .map(|d| Spec { d, ..Spec::single("He3", 1) }.config(id, Sam))
                .collect();
            ("SAM on He3", runs)
        }
        "app-lookahead" => {
            let runs = [4096, 8192]
                .into_iter()
                .map(|d| {
                    Spec {
                        d,
                        gamma0: 0.1,
                        ..Spec::single("He3", 1)
                    }
                    .config(id, Lookahead2)
                })
                .collect();
            ("2-lookahead on He3", runs)
        }
        "app-largebatch-he3" => (
            "He3 with n_b = 2d",
            vec![large_batch(Spec::single("He3", 1).config(id, Egd))],
        ),
        "app-largebatch-he4" => (
            "He4 with n_b = 2d",
            vec![large_batch(Spec::single("He4", 2).config(id, Egd))],
        ),
        "app-largebatch-sign" => (
            "sign(x1 x2) with n_b = 2d",
            vec![large_batch(Spec::multi("sign(x1x2)", 0.1, 40, Gaussian, 2).config(id, Egd))],
        ),
        "app-largebatch-x1x2x3" => (
            "x1 x2 x3 with n_b = 2d",
            vec![large_batch(Spec::multi("x1x2x3", 0.1, 20, Gaussian, 2).config(id, Egd))],
        ),
        other => {
            return Err(Error::UnknownId {
                kind: "preset",
                id: other.to_string(),
            })
        }
    };
    Ok(FigurePreset {
        id: id.to_string(),
        description,
        runs,
    })
}
