//! Executes a [`Plan`] and writes its outputs plus the manifest.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use mindex::experiments::{
    detect_hitting, figure_preset, format_float, mean_final_cosines, run_ensemble, run_jobs,
    sweep_dimensions, to_json_string, write_csv, ExperimentConfig, HittingTimeRecord, Trajectory,
    TrajectoryStatus,
};
use mindex::exponents::{default_nodes, default_rule, directional_report, exponent_report, ExponentReport};
use mindex::linalg::norm;
use mindex::targets::LinkFunction;
use serde::Serialize;

use crate::manifest::{Plan, RunManifest, MANIFEST_FILE};
use crate::CliError;

pub const TRAJECTORIES_FILE: &str = "trajectories.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const SWEEP_FILE: &str = "sweep.json";
pub const HITTING_FILE: &str = "hitting.csv";
pub const EXPONENT_FILE: &str = "exponent.json";
pub const CONFIG_FILE: &str = "config.txt";

/// Result of a finished plan, for the terminal.
#[derive(Debug)]
pub struct Outcome {
    pub out_dir: PathBuf,
    pub files: Vec<String>,
    /// Printed to stdout by the binary.
    pub stdout: String,
}

#[derive(Serialize)]
struct SeedSummary {
    seed: u64,
    status: TrajectoryStatus,
    final_step: u64,
    samples_consumed: u64,
    final_cosines: Vec<f64>,
    final_overlap: f64,
    hitting: HittingTimeRecord,
}

#[derive(Serialize)]
struct RunSummary {
    preset: String,
    algorithm: String,
    target: String,
    d: usize,
    p: usize,
    n_b: usize,
    eta: f64,
    mean_final_cosines: Vec<f64>,
    seeds: Vec<SeedSummary>,
}

fn summarize(cfg: &ExperimentConfig, trajs: &[Trajectory]) -> Result<RunSummary, CliError> {
    let seeds = trajs
        .iter()
        .map(|t| {
            Ok(SeedSummary {
                seed: t.seed,
                status: t.status,
                final_step: t.steps.last().copied().unwrap_or(0),
                samples_consumed: t.samples_consumed,
                final_cosines: t.final_cosines().to_vec(),
                final_overlap: t.overlaps.last().copied().unwrap_or(0.0),
                hitting: detect_hitting(t, cfg.eta)?,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    Ok(RunSummary {
        preset: cfg.preset.clone(),
        algorithm: cfg.optimizer.algorithm.id().to_string(),
        target: cfg.target.clone(),
        d: cfg.d,
        p: cfg.p,
        n_b: cfg.optimizer.batch,
        eta: cfg.eta,
        mean_final_cosines: mean_final_cosines(trajs),
        seeds,
    })
}

fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<(), CliError> {
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(|e| CliError::Io { path, source: e })
}

fn csv_bytes(trajs: &[Trajectory]) -> Vec<u8> {
    let mut buf = Vec::new();
    write_csv(&mut buf, trajs).expect("writing to memory");
    buf
}

fn hitting_csv(trajs: &[Trajectory], records: &[HittingTimeRecord]) -> Vec<u8> {
    let opt = |t: Option<u64>| t.map_or(String::new(), |t| t.to_string());
    let mut buf = Vec::new();
    writeln!(buf, "preset,algorithm,d,seed,eta,t_plus,per_direction").unwrap();
    for (t, r) in trajs.iter().zip(records) {
        let dirs: Vec<String> = r.per_direction.iter().map(|&x| opt(x)).collect();
        writeln!(
            buf,
            "{},{},{},{},{},{},{}",
            t.config.preset,
            t.config.optimizer.algorithm,
            t.config.d,
            t.seed,
            format_float(r.eta),
            opt(r.subspace),
            dirs.join(";")
        )
        .unwrap();
    }
    buf
}

/// Parses a comma-separated direction and scales it to unit length.
pub fn parse_direction(s: &str) -> Result<Vec<f64>, CliError> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| CliError::Usage(format!("--direction expects comma-separated numbers, got `{s}`")))?;
    let n = norm(&v);
    if !(n > 0.0 && n.is_finite()) {
        return Err(CliError::Usage("--direction must be a nonzero finite vector".into()));
    }
    Ok(v.iter().map(|x| x / n).collect())
}

pub fn exponent(
    link: &str,
    direction: Option<&[f64]>,
    kmax: usize,
    degmax: usize,
    tol: f64,
    nodes: usize,
) -> Result<ExponentReport, CliError> {
    let l = LinkFunction::parse(link)?;
    let rule = default_rule(&l, nodes)?;
    match direction {
        Some(v) => Ok(directional_report(&l, v, kmax, degmax, &rule, tol)?),
        None if l.index_dim() > 1 => Err(CliError::Usage(format!(
            "`{link}` has index dimension {}; pass --direction with {} components",
            l.index_dim(),
            l.index_dim()
        ))),
        None => Ok(exponent_report(&l, kmax, degmax, &rule, tol)?),
    }
}

/// Default node count for `link`, or an error for unknown ids.
pub fn nodes_for(link: &str) -> Result<usize, CliError> {
    Ok(default_nodes(&LinkFunction::parse(link)?))
}

/// Expands a figure preset at the given scale.
pub fn figure_plan(id: &str, scale: f64) -> Result<Plan, CliError> {
    let preset = figure_preset(id)?.scaled(scale)?;
    Ok(Plan::Figure {
        id: preset.id,
        scale,
        runs: preset.runs,
    })
}

/// Runs `plan` with `jobs` workers and writes everything under `out_dir`.
pub fn execute(plan: &Plan, out_dir: &Path, jobs: usize) -> Result<Outcome, CliError> {
    for cfg in plan.configs() {
        cfg.validate()?;
    }
    fs::create_dir_all(out_dir).map_err(|e| CliError::Io {
        path: out_dir.to_path_buf(),
        source: e,
    })?;
    let mut files: Vec<(String, Vec<u8>)> = Vec::new();
    let stdout = match plan {
        Plan::Simulate { config } => {
            let trajs = run_ensemble(config, jobs)?;
            let summary = summarize(config, &trajs)?;
            files.push((CONFIG_FILE.into(), crate::config::render_config(config).into_bytes()));
            files.push((TRAJECTORIES_FILE.into(), csv_bytes(&trajs)));
            files.push((SUMMARY_FILE.into(), to_json_string(&summary)?.into_bytes()));
            format!(
                "simulated {} seeds of {} ({}, d = {}); mean final max|cos| = {}\n",
                trajs.len(),
                config.target,
                config.optimizer.algorithm,
                config.d,
                fmt_list(&summary.mean_final_cosines)
            )
        }
        Plan::Sweep { config, dims } => {
            let outcome = sweep_dimensions(config, dims, jobs)?;
            files.push((CONFIG_FILE.into(), crate::config::render_config(config).into_bytes()));
            files.push((TRAJECTORIES_FILE.into(), csv_bytes(&outcome.trajectories)));
            files.push((HITTING_FILE.into(), hitting_csv(&outcome.trajectories, &outcome.records)));
            let fit = to_json_string(&outcome.fit)?;
            files.push((SWEEP_FILE.into(), fit.clone().into_bytes()));
            fit
        }
        Plan::Figure { id, runs, .. } => {
            let job_list: Vec<(ExperimentConfig, u64)> = runs
                .iter()
                .flat_map(|c| c.seed_list().into_iter().map(move |s| (c.clone(), s)))
                .collect();
            let trajs = run_jobs(&job_list, jobs)?;
            let mut summaries = Vec::new();
            let mut offset = 0;
            for c in runs {
                summaries.push(summarize(c, &trajs[offset..offset + c.seeds])?);
                offset += c.seeds;
            }
            files.push((format!("{id}.csv"), csv_bytes(&trajs)));
            files.push((SUMMARY_FILE.into(), to_json_string(&summaries)?.into_bytes()));
            let mut s = String::new();
            for r in &summaries {
                s.push_str(&format!(
                    "{} {} d = {} n_b = {}: mean final max|cos| = {}\n",
                    r.preset,
                    r.algorithm,
                    r.d,
                    r.n_b,
                    fmt_list(&r.mean_final_cosines)
                ));
            }
            s
        }
        Plan::Exponent {
            link,
            direction,
            kmax,
            degmax,
            tol,
            nodes,
        } => {
            let report = exponent(link, direction.as_deref(), *kmax, *degmax, *tol, *nodes)?;
            let json = to_json_string(&report)?;
            files.push((EXPONENT_FILE.into(), json.clone().into_bytes()));
            json
        }
    };
    for (name, bytes) in &files {
        write_file(out_dir, name, bytes)?;
    }
    let names: Vec<String> = files.into_iter().map(|(n, _)| n).collect();
    let manifest = RunManifest::new(plan.clone(), jobs, names.clone());
    write_file(out_dir, MANIFEST_FILE, to_json_string(&manifest)?.as_bytes())?;
    Ok(Outcome {
        out_dir: out_dir.to_path_buf(),
        files: names,
        stdout,
    })
}

/// Reads a manifest and runs its plan again.
pub fn replay(manifest: &Path, out_dir: &Path, jobs: usize) -> Result<Outcome, CliError> {
    let text = fs::read_to_string(manifest).map_err(|e| CliError::Io {
        path: manifest.to_path_buf(),
        source: e,
    })?;
    let m: RunManifest = serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("{}: not a run manifest: {e}", manifest.display())))?;
    execute(&m.plan, out_dir, jobs)
}

fn fmt_list(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.3}")).collect();
    format!("[{}]", parts.join(", "))
}

pub fn io_error(path: &Path, e: io::Error) -> CliError {
    CliError::Io {
        path: path.to_path_buf(),
        source: e,
    }
}
