//! Config-driven runs and the parameter studies built on them.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{DensityConfig, RunConfig};
use crate::coupling::{assemble_triads_with, CouplingTensors};
use crate::density::{regularize_density, sample_log_density, truncate_regularize, DensityField};
use crate::dynamics::{integrate, SpectralField, Trajectory};
use crate::error::{HmError, Result};
use crate::geometry::{build_basis, BasisSet, Geometry};
use crate::monitors::{check_lp_budget, tol, weak_residual, LpBudget, Monitor};
use crate::quadrature::{lp_norm_values, make_grid, make_grid_with, GridOptions};
use crate::transform::SpectralTransform;
use crate::yudovich::{osgood_envelope, phi_theta, GrowthFunction};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub name: String,
    pub size: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: RunConfig,
    pub version: String,
    pub basis_checksum: String,
    pub tensor_checksum: String,
    pub tensor_nnz: usize,
    pub steps_taken: usize,
    pub status: String,
    pub files: Vec<FileEntry>,
    /// Wall-clock seconds per phase.
    pub timings: BTreeMap<String, f64>,
}

/// Everything a run produced, kept in memory for the studies.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub manifest: RunManifest,
    pub trajectory: Trajectory,
    pub tensors: CouplingTensors,
    pub monitor: Monitor,
    pub density: Option<DensityField>,
}

impl RunResult {
    pub fn terminal(&self) -> &SpectralField {
        self.trajectory.last()
    }
}

/// Projects the configured density onto `transform`'s basis. Returns the
/// coefficients `γ` and, when a density is present, the full field on the
/// projection grid.
pub fn build_density(
    dc: &DensityConfig,
    transform: &Arc<SpectralTransform>,
) -> Result<(Vec<f64>, Option<DensityField>)> {
    let Some(spec) = dc.spec else {
        return Ok((vec![0.0; transform.len()], None));
    };
    let proj = if dc.boundary_levels > 0 {
        let basis = transform.basis();
        let grid = make_grid_with(
            basis.geometry,
            basis,
            GridOptions {
                oversample: 1.0,
                boundary_levels: dc.boundary_levels,
            },
        )?;
        Arc::new(SpectralTransform::new(basis.clone(), Arc::new(grid))?)
    } else {
        transform.clone()
    };
    let g = sample_log_density(&spec, proj.grid())?;
    let field = if dc.delta == 0.0 {
        let gamma = proj.project(&g)?;
        let g_delta_sampled = proj.synthesize(&gamma);
        DensityField {
            spec: Some(spec),
            g_sampled: g,
            gamma,
            g_delta_sampled,
            delta: 0.0,
            truncation_k: None,
        }
    } else if dc.truncate {
        truncate_regularize(&g, &proj, dc.delta)?.with_spec(spec)
    } else {
        regularize_density(&g, &proj, dc.delta)?.with_spec(spec)
    };
    Ok((field.gamma.clone(), Some(field)))
}

fn sha256_file(path: &Path) -> Result<FileEntry> {
    let bytes = fs::read(path).map_err(|e| HmError::io(path, e))?;
    Ok(FileEntry {
        name: path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
        size: bytes.len() as u64,
        sha256: hex::encode(Sha256::digest(&bytes)),
    })
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| HmError::io(dir, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").map_err(|e| HmError::io(path, e))
}

/// Runs a configuration in memory.
pub fn simulate(cfg: &RunConfig) -> Result<RunResult> {
    execute(cfg, None)
}

/// Runs a configuration and writes `monitors.csv`, snapshots, the
/// optional tensor dump and `manifest.json` to the output directory. A run
/// that hit a non-finite state still writes its partial outputs and then
/// returns the manifest with an error status.
pub fn run(cfg: &RunConfig) -> Result<RunResult> {
    execute(cfg, Some(&cfg.output.dir))
}

fn execute(cfg: &RunConfig, out: Option<&Path>) -> Result<RunResult> {
    cfg.validate()?;
    let mut timings = BTreeMap::new();
    let mut clock = Instant::now();
    let mut lap = |name: &str, timings: &mut BTreeMap<String, f64>| {
        timings.insert(name.to_string(), clock.elapsed().as_secs_f64());
        clock = Instant::now();
    };

    let basis = Arc::new(build_basis(cfg.geometry, cfg.n_modes)?);
    lap("basis", &mut timings);
    let grid = Arc::new(make_grid(cfg.geometry, &basis)?);
    let transform = Arc::new(SpectralTransform::new(basis.clone(), grid)?);
    lap("grid", &mut timings);
    let (gamma, density) = build_density(&cfg.density, &transform)?;
    lap("density", &mut timings);
    let triads = Arc::new(assemble_triads_with(&transform));
    let tensors = CouplingTensors::new(basis.clone(), triads.clone(), gamma.clone(), cfg.eps)?;
    lap("tensors", &mut timings);
    let state0 = cfg.initial_state(&basis)?;
    let monitor = Monitor::new(cfg.monitors.clone(), transform, gamma)?;
    let trajectory = integrate(&state0, &tensors, &cfg.integrator, Some(&monitor))?;
    lap("integrate", &mut timings);

    let mut files = Vec::new();
    if let Some(dir) = out {
        create_dir(dir)?;
        let csv = dir.join("monitors.csv");
        trajectory.series.as_ref().expect("monitored run").write_csv(&csv)?;
        files.push(sha256_file(&csv)?);
        if cfg.output.snapshots {
            let sdir = dir.join("snapshots");
            create_dir(&sdir)?;
            for (k, s) in trajectory.samples.iter().enumerate() {
                let p = sdir.join(format!("snap_{k:05}.hms"));
                s.write_snapshot(&p)?;
                let mut e = sha256_file(&p)?;
                e.name = format!("snapshots/{}", e.name);
                files.push(e);
            }
        }
        if cfg.output.tensor_dump {
            let p = dir.join("tensor.hmt");
            triads.write_dump(&p)?;
            files.push(sha256_file(&p)?);
        }
        lap("output", &mut timings);
    }

    let status = match &trajectory.aborted {
        None => "ok".to_string(),
        Some(msg) => format!("aborted: {msg}"),
    };
    let manifest = RunManifest {
        config: cfg.clone(),
        version: VERSION.to_string(),
        basis_checksum: basis.checksum(),
        tensor_checksum: triads.checksum(),
        tensor_nnz: triads.nnz(),
        steps_taken: trajectory.steps_taken,
        status,
        files,
        timings,
    };
    if let Some(dir) = out {
        write_json(&dir.join("manifest.json"), &manifest)?;
    }
    if let (Some(msg), Some(dir)) = (&trajectory.aborted, out) {
        return Err(HmError::Numeric(format!(
            "{msg}; partial outputs written to {}",
            dir.display()
        )));
    }
    Ok(RunResult {
        manifest,
        trajectory,
        tensors,
        monitor,
        density,
    })
}

/// `‖a - b‖_V²` over the leading modes they share.
pub fn v_distance2(a: &SpectralField, b: &SpectralField) -> f64 {
    let n = a.len().min(b.len());
    (0..n)
        .map(|i| (1.0 + a.basis.modes[i].mu) * (a.coeffs[i] - b.coeffs[i]).powi(2))
        .sum()
}

fn decreasing_with_slack(d: &[f64], slack: f64) -> bool {
    d.windows(2).all(|w| w[1] <= (1.0 + slack) * w[0] + 1e-14)
}

fn member_dir(cfg: &RunConfig, name: String) -> RunConfig {
    let mut c = cfg.clone();
    c.output.dir = cfg.output.dir.join(name);
    c.output.snapshots = false;
    c.output.tensor_dump = false;
    c
}

fn write_member(cfg: &RunConfig, r: &RunResult) -> Result<()> {
    create_dir(&cfg.output.dir)?;
    if let Some(s) = &r.trajectory.series {
        s.write_csv(&cfg.output.dir.join("monitors.csv"))?;
    }
    write_json(&cfg.output.dir.join("manifest.json"), &r.manifest)
}

fn run_members(cfgs: &[RunConfig], write: bool) -> Result<Vec<RunResult>> {
    cfgs.par_iter()
        .map(|c| {
            let r = simulate(c)?;
            if let Some(msg) = &r.trajectory.aborted {
                return Err(HmError::Numeric(format!("{}: {msg}", c.output.dir.display())));
            }
            if write {
                write_member(c, &r)?;
            }
            Ok(r)
        })
        .collect()
}

fn initial_lp(r: &RunResult) -> Vec<f64> {
    r.trajectory
        .series
        .as_ref()
        .map(|s| s.records[0].lp.clone())
        .unwrap_or_default()
}

fn lp_budget(r: &RunResult, n: usize) -> Result<Vec<LpBudget>> {
    let s = r.trajectory.series.as_ref().expect("monitored run");
    check_lp_budget(s, &initial_lp(r), tol(n))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub n_list: Vec<usize>,
    /// V-distance between the terminal states of consecutive `n`, on the
    /// smaller basis.
    pub distances: Vec<f64>,
    /// `log(d_k / d_{k+1}) / log(n_{k+2} / n_{k+1})`.
    pub slopes: Vec<f64>,
    pub monotone: bool,
    pub lp_budgets: Vec<Vec<LpBudget>>,
    pub terminal_norm_v2: Vec<f64>,
}

/// Runs the configuration at every `n` in `n_list`.
pub fn converge_n(cfg: &RunConfig, n_list: &[usize], write: bool) -> Result<ConvergenceReport> {
    if n_list.len() < 2 || n_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(HmError::Usage("n list needs at least two ascending entries".into()));
    }
    let cfgs: Vec<RunConfig> = n_list
        .iter()
        .map(|&n| {
            let mut c = member_dir(cfg, format!("n_{n}"));
            c.n_modes = n;
            c
        })
        .collect();
    let runs = run_members(&cfgs, write)?;
    let distances: Vec<f64> = runs
        .windows(2)
        .map(|w| v_distance2(w[0].terminal(), w[1].terminal()).sqrt())
        .collect();
    let slopes = distances
        .windows(2)
        .zip(n_list.windows(3))
        .map(|(d, n)| (d[0] / d[1]).ln() / (n[2] as f64 / n[1] as f64).ln())
        .collect();
    let report = ConvergenceReport {
        n_list: n_list.to_vec(),
        monotone: decreasing_with_slack(&distances, 0.1),
        distances,
        slopes,
        lp_budgets: runs
            .iter()
            .zip(n_list)
            .map(|(r, &n)| lp_budget(r, n))
            .collect::<Result<_>>()?,
        terminal_norm_v2: runs.iter().map(|r| r.terminal().norm_v2()).collect(),
    };
    if write {
        create_dir(&cfg.output.dir)?;
        write_json(&cfg.output.dir.join("report.json"), &report)?;
    }
    Ok(report)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpsSweepReport {
    pub eps_list: Vec<f64>,
    pub distances: Vec<f64>,
    pub monotone: bool,
    /// `min_t [‖φ₀‖_V² + (t/2)‖g_δ‖₂² - ‖φ(t)‖_V²]` per run.
    pub v_bound_margins: Vec<f64>,
    /// Weak residual of the inviscid form at the smallest `ε`, against the
    /// run's own modes.
    pub weak_residual_in_span: f64,
    /// Same, against the next modes beyond the run's basis.
    pub weak_residual_beyond_span: f64,
}

/// `min_t` of the V-norm bound margin along a trajectory.
pub fn v_bound_margin(r: &RunResult) -> f64 {
    let g2: f64 = r.tensors.gamma.iter().map(|g| g * g).sum();
    let s = r.trajectory.series.as_ref().expect("monitored run");
    let v0 = s.records[0].norm_v2;
    s.records
        .iter()
        .map(|rec| v0 + 0.5 * rec.t * g2 - rec.norm_v2)
        .fold(f64::INFINITY, f64::min)
}

/// Weak residuals of the `ε = 0` form for the terminal state of `r`,
/// against the run's modes and against `extra` modes beyond them.
pub fn inviscid_weak_residuals(r: &RunResult, extra: usize) -> Result<(f64, f64)> {
    let state = r.terminal();
    let n = state.len();
    let mut tensors = r.tensors.clone();
    tensors.eps = 0.0;
    let geometry = state.basis.geometry;
    let big = Arc::new(build_basis(geometry, n + extra)?);
    let grid = Arc::new(make_grid(geometry, &big)?);
    let t = SpectralTransform::new(big, grid)?;
    let mut gamma = tensors.gamma.clone();
    gamma.resize(n + extra, 0.0);
    let inside: Vec<usize> = (0..n).collect();
    let beyond: Vec<usize> = (n..n + extra).collect();
    let max_abs = |v: Vec<f64>| v.into_iter().map(f64::abs).fold(0.0, f64::max);
    Ok((
        max_abs(weak_residual(state, &gamma, &tensors, &t, &inside)?),
        max_abs(weak_residual(state, &gamma, &tensors, &t, &beyond)?),
    ))
}

/// Runs the configuration for every `ε` (descending).
pub fn eps_sweep(cfg: &RunConfig, eps_list: &[f64], write: bool) -> Result<EpsSweepReport> {
    if eps_list.is_empty() || eps_list.iter().any(|e| !(*e > 0.0)) || eps_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(HmError::Usage(
            "eps list must be positive and strictly descending".into(),
        ));
    }
    let cfgs: Vec<RunConfig> = eps_list
        .iter()
        .map(|&e| {
            let mut c = member_dir(cfg, format!("eps_{e:e}"));
            c.eps = e;
            c
        })
        .collect();
    let runs = run_members(&cfgs, write)?;
    let distances: Vec<f64> = runs
        .windows(2)
        .map(|w| v_distance2(w[0].terminal(), w[1].terminal()).sqrt())
        .collect();
    let (inside, beyond) = inviscid_weak_residuals(runs.last().unwrap(), 8)?;
    let report = EpsSweepReport {
        eps_list: eps_list.to_vec(),
        monotone: decreasing_with_slack(&distances, 0.1),
        distances,
        v_bound_margins: runs.iter().map(v_bound_margin).collect(),
        weak_residual_in_span: inside,
        weak_residual_beyond_span: beyond,
    };
    if write {
        create_dir(&cfg.output.dir)?;
        write_json(&cfg.output.dir.join("report.json"), &report)?;
    }
    Ok(report)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeltaMember {
    pub delta: f64,
    pub p_list: Vec<f64>,
    /// `‖g_δ - g‖_p`.
    pub diff_norms: Vec<f64>,
    pub g_delta_norms: Vec<f64>,
    pub g_norms: Vec<f64>,
    pub g_delta_linf: f64,
    pub g_linf: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeltaSweepReport {
    pub members: Vec<DeltaMember>,
    /// Terminal V-distances between consecutive `δ`.
    pub distances: Vec<f64>,
    pub diff_l2_monotone: bool,
    pub distances_monotone: bool,
}

fn density_norms(field: &DensityField, p_list: &[f64], delta: f64) -> Result<DeltaMember> {
    let w = &field.g_sampled.grid.weights;
    let g = &field.g_sampled.values;
    let gd = &field.g_delta_sampled.values;
    let diff: Vec<f64> = g.iter().zip(gd).map(|(a, b)| b - a).collect();
    let norms = |v: &[f64]| -> Result<Vec<f64>> { p_list.iter().map(|&p| lp_norm_values(w, v, p)).collect() };
    Ok(DeltaMember {
        delta,
        p_list: p_list.to_vec(),
        diff_norms: norms(&diff)?,
        g_delta_norms: norms(gd)?,
        g_norms: norms(g)?,
        g_delta_linf: gd.iter().map(|v| v.abs()).fold(0.0, f64::max),
        g_linf: g.iter().map(|v| v.abs()).fold(0.0, f64::max),
    })
}

/// Runs the configuration for every regularisation parameter `δ`.
pub fn delta_sweep(cfg: &RunConfig, delta_list: &[f64], write: bool) -> Result<DeltaSweepReport> {
    if cfg.density.spec.is_none() {
        return Err(HmError::Usage("delta sweep needs a density profile".into()));
    }
    if delta_list.is_empty() || delta_list.iter().any(|d| !(*d > 0.0)) || delta_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(HmError::Usage(
            "delta list must be positive and strictly descending".into(),
        ));
    }
    let cfgs: Vec<RunConfig> = delta_list
        .iter()
        .map(|&d| {
            let mut c = member_dir(cfg, format!("delta_{d:e}"));
            c.density.delta = d;
            c
        })
        .collect();
    let runs = run_members(&cfgs, write)?;
    let mut p_list = vec![2.0];
    p_list.extend(cfg.monitors.p_list.iter().copied().filter(|&p| p != 2.0));
    let members: Vec<DeltaMember> = runs
        .iter()
        .zip(delta_list)
        .map(|(r, &d)| density_norms(r.density.as_ref().expect("density present"), &p_list, d))
        .collect::<Result<_>>()?;
    let l2: Vec<f64> = members.iter().map(|m| m.diff_norms[0]).collect();
    let distances: Vec<f64> = runs
        .windows(2)
        .map(|w| v_distance2(w[0].terminal(), w[1].terminal()).sqrt())
        .collect();
    let report = DeltaSweepReport {
        diff_l2_monotone: l2.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)),
        distances_monotone: decreasing_with_slack(&distances, 0.1),
        members,
        distances,
    };
    if write {
        create_dir(&cfg.output.dir)?;
        write_json(&cfg.output.dir.join("report.json"), &report)?;
    }
    Ok(report)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TwinMember {
    pub scale: f64,
    pub times: Vec<f64>,
    /// `Y(t) = ‖φ₁ - φ₂‖_V²` at the sample times.
    pub y: Vec<f64>,
    pub y_end_over_s2: f64,
    pub lambda_fit: f64,
    pub envelope: Vec<f64>,
    /// `min_t (envelope - Y)`; non-negative when the envelope holds.
    pub envelope_margin: f64,
    pub envelope_truncated: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TwinReport {
    pub theta: String,
    pub members: Vec<TwinMember>,
    /// Slope of `log sqrt(Y(t_end))` against `log s` between consecutive
    /// scales.
    pub orders: Vec<f64>,
    pub ratio_spread: f64,
    pub below_envelope: bool,
}

/// W-normalised Gaussian perturbation direction.
pub fn perturbation_direction(basis: &BasisSet, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p: Vec<f64> = (0..basis.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
    let w2: f64 = p
        .iter()
        .zip(&basis.modes)
        .map(|(c, m)| ((1.0 + m.mu) + (1.0 + m.mu).powi(2)) * c * c)
        .sum();
    let s = 1.0 / w2.sqrt();
    p.iter_mut().for_each(|v| *v *= s);
    p
}

/// Twin runs: base state and base plus `s` times a fixed random
/// W-normalised direction, for every scale `s`.
pub fn twin(cfg: &RunConfig, scales: &[f64], theta: &GrowthFunction, write: bool) -> Result<TwinReport> {
    if scales.is_empty() || scales.iter().any(|s| !(*s >= 0.0)) || scales.windows(2).any(|w| w[1] >= w[0]) {
        return Err(HmError::Usage(
            "scales must be non-negative and strictly descending".into(),
        ));
    }
    let base = simulate(cfg)?;
    let basis = base.tensors.basis.clone();
    let dir = perturbation_direction(&basis, cfg.seed.wrapping_add(0x9e37_79b9));
    let state0 = base.trajectory.samples[0].clone();
    let members: Vec<TwinMember> = scales
        .par_iter()
        .map(|&s| -> Result<TwinMember> {
            let c2: Vec<f64> = state0.coeffs.iter().zip(&dir).map(|(c, d)| c + s * d).collect();
            let s2 = SpectralField::new(basis.clone(), c2)?;
            let traj = integrate(&s2, &base.tensors, &cfg.integrator, None)?;
            if let Some(msg) = traj.aborted {
                return Err(HmError::Numeric(msg));
            }
            let times: Vec<f64> = traj.samples.iter().map(|x| x.time).collect();
            let y: Vec<f64> = base
                .trajectory
                .samples
                .iter()
                .zip(&traj.samples)
                .map(|(a, b)| v_distance2(a, b))
                .collect();
            let y0 = y[0];
            let (lambda_fit, envelope, truncated) = if y0 > 0.0 {
                let f1 = base.tensors.mass_rhs(&state0.coeffs);
                let f2 = base.tensors.mass_rhs(&s2.coeffs);
                let ydot: f64 = 2.0
                    * (0..basis.len())
                        .map(|i| (state0.coeffs[i] - s2.coeffs[i]) * (f1[i] - f2[i]))
                        .sum::<f64>();
                let lambda = (ydot / (y0 * phi_theta(theta, 1.0 / y0))).max(0.0);
                let env = osgood_envelope(theta, lambda, 1.1 * y0, cfg.integrator.t_end * (1.0 + 1e-9))?;
                let curve: Vec<f64> = times
                    .iter()
                    .map(|&t| env.value_at(t).unwrap_or(f64::INFINITY))
                    .collect();
                (lambda, curve, env.truncated)
            } else {
                (0.0, vec![0.0; times.len()], false)
            };
            let margin = envelope
                .iter()
                .zip(&y)
                .map(|(e, y)| e - y)
                .fold(f64::INFINITY, f64::min);
            Ok(TwinMember {
                scale: s,
                y_end_over_s2: if s > 0.0 { y.last().unwrap() / (s * s) } else { 0.0 },
                times,
                y,
                lambda_fit,
                envelope,
                envelope_margin: margin,
                envelope_truncated: truncated,
            })
        })
        .collect::<Result<_>>()?;
    let orders = members
        .windows(2)
        .filter(|w| w[1].scale > 0.0)
        .map(|w| {
            let a = w[0].y.last().unwrap().sqrt();
            let b = w[1].y.last().unwrap().sqrt();
            (a / b).ln() / (w[0].scale / w[1].scale).ln()
        })
        .collect();
    let ratios: Vec<f64> = members
        .iter()
        .filter(|m| m.scale > 0.0)
        .map(|m| m.y_end_over_s2)
        .collect();
    let ratio_spread = if ratios.is_empty() {
        0.0
    } else {
        ratios.iter().copied().fold(0.0, f64::max) / ratios.iter().copied().fold(f64::INFINITY, f64::min)
    };
    let report = TwinReport {
        theta: theta.label(),
        below_envelope: members.iter().all(|m| m.envelope_margin >= 0.0),
        members,
        orders,
        ratio_spread,
    };
    if write {
        create_dir(&cfg.output.dir)?;
        write_json(&cfg.output.dir.join("report.json"), &report)?;
    }
    Ok(report)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CzReport {
    pub geometry: Geometry,
    pub n_modes: usize,
    pub trials: usize,
    pub p_list: Vec<f64>,
    /// `max_φ R(p, φ)` per `p`.
    pub max_ratio: Vec<f64>,
    /// `max_p R(p) / R(p_min) - 1`; positive values indicate growth in `p`.
    pub trend: f64,
    pub constant: f64,
    pub bounded: bool,
}

/// `R(p, φ) = ‖φ‖_{W^{2,p}} / (p ‖φ - Δφ‖_p)` on the quadrature grid.
pub fn cz_ratio(transform: &SpectralTransform, c: &[f64], p: f64) -> Result<f64> {
    let w = &transform.grid().weights;
    let phi = transform.synthesize(c).values;
    let (gx, gy) = transform.gradient(c);
    let (hxx, hxy, hyy) = transform.hessian(c);
    let lap: Vec<f64> = hxx.iter().zip(&hyy).map(|(a, b)| a + b).collect();
    let pv = |v: &[f64]| -> Result<f64> { Ok(lp_norm_values(w, v, p)?.powf(p)) };
    let grad: Vec<f64> = gx.iter().zip(&gy).map(|(a, b)| a.hypot(*b)).collect();
    let hess: Vec<f64> = (0..phi.len())
        .map(|k| (hxx[k] * hxx[k] + 2.0 * hxy[k] * hxy[k] + hyy[k] * hyy[k]).sqrt())
        .collect();
    let q: Vec<f64> = phi.iter().zip(&lap).map(|(a, b)| a - b).collect();
    let w2p = (pv(&phi)? + pv(&grad)? + pv(&hess)?).powf(1.0 / p);
    Ok(w2p / (p * lp_norm_values(w, &q, p)?))
}

/// Calderón-Zygmund growth study over random spectral fields.
pub fn cz_study(geometry: Geometry, n: usize, p_list: &[f64], trials: usize, seed: u64) -> Result<CzReport> {
    if p_list.is_empty() || p_list.iter().any(|p| !(2.0..=64.0).contains(p)) {
        return Err(HmError::Usage("p list must lie inside [2, 64]".into()));
    }
    if trials == 0 {
        return Err(HmError::Usage("at least one trial is required".into()));
    }
    let basis = Arc::new(build_basis(geometry, n)?);
    let grid = Arc::new(make_grid(geometry, &basis)?);
    let t = SpectralTransform::new(basis.clone(), grid)?;
    let fields: Vec<Vec<f64>> = (0..trials)
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(1000).wrapping_add(k as u64));
            basis
                .modes
                .iter()
                .map(|m| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    z / (1.0 + m.mu)
                })
                .collect()
        })
        .collect();
    let max_ratio: Vec<f64> = p_list
        .par_iter()
        .map(|&p| -> Result<f64> {
            let mut m: f64 = 0.0;
            for c in &fields {
                m = m.max(cz_ratio(&t, c, p)?);
            }
            Ok(m)
        })
        .collect::<Result<_>>()?;
    let r0 = max_ratio[0];
    let trend = max_ratio.iter().map(|r| r / r0).fold(0.0, f64::max) - 1.0;
    Ok(CzReport {
        geometry,
        n_modes: n,
        trials,
        p_list: p_list.to_vec(),
        constant: max_ratio.iter().copied().fold(0.0, f64::max),
        bounded: trend <= 0.10,
        max_ratio,
        trend,
    })
}

/// Largest `‖∇e‖₄² / ‖e‖_W²` over the basis; a lower estimate of the
/// `W ⊂ W^{1,4}` embedding constant.
pub fn embedding_constant(transform: &SpectralTransform) -> Result<f64> {
    let n = transform.len();
    let w = &transform.grid().weights;
    (0..n)
        .into_par_iter()
        .map(|i| -> Result<f64> {
            let mut c = vec![0.0; n];
            c[i] = 1.0;
            let (gx, gy) = transform.gradient(&c);
            let g: Vec<f64> = gx.iter().zip(&gy).map(|(a, b)| a.hypot(*b)).collect();
            let mu = transform.basis().modes[i].mu;
            Ok(lp_norm_values(w, &g, 4.0)?.powi(2) / ((1.0 + mu) + (1.0 + mu).powi(2)))
        })
        .collect::<Result<Vec<_>>>()
        .map(|v| v.into_iter().fold(0.0, f64::max))
}

/// Writes the basis table CSV.
pub fn basis_table(geometry: Geometry, n: usize, out: Option<&PathBuf>) -> Result<String> {
    let csv = build_basis(geometry, n)?.to_csv();
    if let Some(p) = out {
        fs::write(p, &csv).map_err(|e| HmError::io(p, e))?;
    }
    Ok(csv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{InitialConfig, InitialPreset};

    fn single_mode_cfg(dir: &Path) -> RunConfig {
        let mut c = RunConfig {
            n_modes: 8,
            eps: 0.1,
            initial: InitialConfig {
                preset: InitialPreset::SingleMode {
                    mode: 1,
                    amplitude: 1.0,
                },
                smooth_eps: None,
            },
            ..RunConfig::default()
        };
        c.integrator.dt = 0.01;
        c.integrator.t_end = 1.0;
        c.output.dir = dir.to_path_buf();
        c
    }

    #[test]
    fn single_mode_run_writes_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = single_mode_cfg(dir.path());
        let r = run(&cfg).unwrap();
        let mu1 = r.tensors.stiff_diag[0];
        assert!((r.terminal().coeffs[0] - (-0.1 * mu1).exp()).abs() < 1e-10);
        assert!(dir.path().join("manifest.json").is_file());
        assert!(dir.path().join("snapshots/snap_00000.hms").is_file());
        let first = fs::read(dir.path().join("monitors.csv")).unwrap();
        run(&cfg).unwrap();
        assert_eq!(first, fs::read(dir.path().join("monitors.csv")).unwrap());
        assert!(r.manifest.files.iter().any(|f| f.name == "monitors.csv"));
    }

    #[test]
    fn linear_convergence_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = single_mode_cfg(dir.path());
        let rep = converge_n(&cfg, &[8, 12, 16], false).unwrap();
        assert!(rep.distances.iter().all(|&d| d < 1e-14));
        assert!(rep.monotone);
    }
}
