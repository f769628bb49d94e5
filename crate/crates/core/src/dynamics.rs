//! Time integration of the Galerkin ODE.
//!
//! The default scheme is a Lawson integrating-factor RK4: the dissipative
//! diagonal `-ε μ_i c_i` is propagated exactly by `exp(-ε μ_i t)` and only
//! the transport and forcing terms go through the Runge-Kutta stages.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::coupling::CouplingTensors;
use crate::error::{HmError, Result};
use crate::geometry::BasisSet;
use crate::monitors::{Monitor, MonitorSeries};

const SNAPSHOT_MAGIC: &[u8; 4] = b"HMS1";

/// Coefficients `c` of `φ_n = Σ c_i e_i` at time `time`.
#[derive(Debug, Clone)]
pub struct SpectralField {
    pub basis: Arc<BasisSet>,
    pub coeffs: Vec<f64>,
    pub time: f64,
}

impl SpectralField {
    pub fn new(basis: Arc<BasisSet>, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != basis.len() {
            return Err(HmError::Usage(format!(
                "{} coefficients for a basis of {} modes",
                coeffs.len(),
                basis.len()
            )));
        }
        if let Some(k) = coeffs.iter().position(|c| !c.is_finite()) {
            return Err(HmError::Numeric(format!("coefficient {k} is not finite")));
        }
        Ok(SpectralField {
            basis,
            coeffs,
            time: 0.0,
        })
    }

    pub fn zeros(basis: Arc<BasisSet>) -> Self {
        let n = basis.len();
        SpectralField {
            basis,
            coeffs: vec![0.0; n],
            time: 0.0,
        }
    }

    pub fn at_time(mut self, time: f64) -> Self {
        self.time = time;
        self
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// `‖φ‖_V² = Σ (1+μ) c²`.
    pub fn norm_v2(&self) -> f64 {
        self.weighted_sum(|mu| 1.0 + mu)
    }

    /// `‖φ‖_W² = ‖φ‖_V² + ‖(I-Δ)φ‖₂²`.
    pub fn norm_w2(&self) -> f64 {
        self.weighted_sum(|mu| (1.0 + mu) + (1.0 + mu).powi(2))
    }

    /// `‖φ - Δφ‖₂² = Σ (1+μ)² c²`.
    pub fn enstrophy2(&self) -> f64 {
        self.weighted_sum(|mu| (1.0 + mu).powi(2))
    }

    fn weighted_sum(&self, w: impl Fn(f64) -> f64) -> f64 {
        self.coeffs
            .iter()
            .zip(&self.basis.modes)
            .map(|(c, m)| w(m.mu) * c * c)
            .sum()
    }

    /// Writes an `HMS1` snapshot: magic, `n` (u64), time (f64), then the
    /// coefficients, all little-endian.
    pub fn write_snapshot(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| HmError::io(path, e))?;
        let mut w = BufWriter::new(file);
        let mut bytes = Vec::with_capacity(20 + 8 * self.len());
        bytes.extend_from_slice(SNAPSHOT_MAGIC);
        bytes.extend_from_slice(&(self.len() as u64).to_le_bytes());
        bytes.extend_from_slice(&self.time.to_le_bytes());
        for c in &self.coeffs {
            bytes.extend_from_slice(&c.to_le_bytes());
        }
        w.write_all(&bytes).map_err(|e| HmError::io(path, e))?;
        w.flush().map_err(|e| HmError::io(path, e))
    }

    /// Reads an `HMS1` snapshot for the given basis.
    pub fn read_snapshot(path: &Path, basis: Arc<BasisSet>) -> Result<SpectralField> {
        let file = File::open(path).map_err(|e| HmError::io(path, e))?;
        let mut bytes = Vec::new();
        BufReader::new(file)
            .read_to_end(&mut bytes)
            .map_err(|e| HmError::io(path, e))?;
        let bad = |reason: String| HmError::Format {
            path: path.to_path_buf(),
            reason,
        };
        if bytes.len() < 20 || &bytes[..4] != SNAPSHOT_MAGIC {
            return Err(bad("missing HMS1 header".into()));
        }
        let n = u64::from_le_bytes(bytes[4..12].try_into().unwrap()) as usize;
        let time = f64::from_le_bytes(bytes[12..20].try_into().unwrap());
        if bytes.len() != 20 + 8 * n {
            return Err(bad(format!("expected {n} coefficients")));
        }
        if n != basis.len() {
            return Err(bad(format!("snapshot has {n} modes, basis has {}", basis.len())));
        }
        let coeffs = bytes[20..]
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        Ok(SpectralField::new(basis, coeffs)
            .map_err(|e| bad(e.to_string()))?
            .at_time(time))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    IfRk4,
    Rk4,
}

impl std::str::FromStr for Scheme {
    type Err = HmError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "if_rk4" => Ok(Scheme::IfRk4),
            "rk4" => Ok(Scheme::Rk4),
            other => Err(HmError::Config(format!(
                "unknown scheme '{other}' (expected if_rk4 or rk4)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub scheme: Scheme,
    pub dt: f64,
    pub t_end: f64,
    pub sample_every: usize,
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(HmError::Usage(format!("time step must be positive, got {}", self.dt)));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(HmError::Usage(format!("end time must be positive, got {}", self.t_end)));
        }
        if self.dt > self.t_end * (1.0 + 1e-12) {
            return Err(HmError::Usage("time step exceeds end time".into()));
        }
        if self.sample_every == 0 {
            return Err(HmError::Usage("sample_every must be at least 1".into()));
        }
        Ok(())
    }

    /// Number of steps; the last one ends at or just past `t_end`.
    pub fn steps(&self) -> usize {
        (self.t_end / self.dt - 1e-9).ceil().max(1.0) as usize
    }
}

/// Coefficient derivative `ċ`.
pub fn rhs(state: &SpectralField, tensors: &CouplingTensors) -> Result<Vec<f64>> {
    check_sizes(state, tensors)?;
    if state.coeffs.iter().any(|c| !c.is_finite()) {
        return Err(HmError::Numeric("state contains non-finite coefficients".into()));
    }
    Ok(rate(&state.coeffs, tensors))
}

/// Mass-weighted derivative `(1+μ_i) ċ_i`.
pub fn mass_rhs(state: &SpectralField, tensors: &CouplingTensors) -> Result<Vec<f64>> {
    check_sizes(state, tensors)?;
    Ok(tensors.mass_rhs(&state.coeffs))
}

fn check_sizes(state: &SpectralField, tensors: &CouplingTensors) -> Result<()> {
    if state.len() != tensors.len() {
        return Err(HmError::Usage(format!(
            "state has {} modes, tensors have {}",
            state.len(),
            tensors.len()
        )));
    }
    Ok(())
}

fn rate(c: &[f64], t: &CouplingTensors) -> Vec<f64> {
    t.mass_rhs(c).iter().zip(&t.mass_diag).map(|(f, m)| f / m).collect()
}

/// Non-diagonal part of the rate, used inside the integrating factor.
fn nonstiff_rate(c: &[f64], t: &CouplingTensors) -> Vec<f64> {
    t.forcing_terms(c)
        .iter()
        .zip(&t.mass_diag)
        .map(|(f, m)| f / m)
        .collect()
}

fn axpy(a: &[f64], h: f64, b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(a, b)| a + h * b).collect()
}

fn rk4_step(c: &[f64], h: f64, t: &CouplingTensors) -> Vec<f64> {
    let k1 = rate(c, t);
    let k2 = rate(&axpy(c, 0.5 * h, &k1), t);
    let k3 = rate(&axpy(c, 0.5 * h, &k2), t);
    let k4 = rate(&axpy(c, h, &k3), t);
    (0..c.len())
        .map(|i| c[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect()
}

fn if_rk4_step(c: &[f64], h: f64, t: &CouplingTensors) -> Vec<f64> {
    let n = c.len();
    let e: Vec<f64> = t.stiff_diag.iter().map(|mu| (-t.eps * mu * h).exp()).collect();
    let e2: Vec<f64> = t.stiff_diag.iter().map(|mu| (-t.eps * mu * 0.5 * h).exp()).collect();
    let k1 = nonstiff_rate(c, t);
    let u2: Vec<f64> = (0..n).map(|i| e2[i] * (c[i] + 0.5 * h * k1[i])).collect();
    let k2 = nonstiff_rate(&u2, t);
    let u3: Vec<f64> = (0..n).map(|i| e2[i] * c[i] + 0.5 * h * k2[i]).collect();
    let k3 = nonstiff_rate(&u3, t);
    let u4: Vec<f64> = (0..n).map(|i| e[i] * c[i] + h * e2[i] * k3[i]).collect();
    let k4 = nonstiff_rate(&u4, t);
    (0..n)
        .map(|i| e[i] * c[i] + h / 6.0 * (e[i] * k1[i] + 2.0 * e2[i] * (k2[i] + k3[i]) + k4[i]))
        .collect()
}

/// Advances `c` by one step of the chosen scheme.
pub fn step(c: &[f64], h: f64, scheme: Scheme, tensors: &CouplingTensors) -> Vec<f64> {
    match scheme {
        Scheme::IfRk4 => if_rk4_step(c, h, tensors),
        Scheme::Rk4 => rk4_step(c, h, tensors),
    }
}

/// Sampled states, monitor series and the outcome of a run.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub samples: Vec<SpectralField>,
    pub series: Option<MonitorSeries>,
    pub steps_taken: usize,
    /// Set when the run stopped on a non-finite state; `samples` then ends
    /// with the last finite one.
    pub aborted: Option<String>,
    pub stability_warning: bool,
}

impl Trajectory {
    pub fn last(&self) -> &SpectralField {
        self.samples.last().expect("trajectory always holds the initial state")
    }
}

/// Heuristic explicit stability limit for the transport terms.
pub fn stability_limit(state: &SpectralField, tensors: &CouplingTensors) -> f64 {
    let mu_max = tensors.stiff_diag.iter().copied().fold(0.0, f64::max);
    let c_max = state
        .coeffs
        .iter()
        .chain(&tensors.gamma)
        .map(|c| c.abs())
        .fold(0.0, f64::max);
    let rate = mu_max * c_max * mu_max.sqrt();
    if rate > 0.0 {
        0.5 / rate
    } else {
        f64::INFINITY
    }
}

/// Integrates from `state0` to `config.t_end`, sampling every
/// `sample_every` steps and at the final step.
pub fn integrate(
    state0: &SpectralField,
    tensors: &CouplingTensors,
    config: &IntegratorConfig,
    monitor: Option<&Monitor>,
) -> Result<Trajectory> {
    config.validate()?;
    check_sizes(state0, tensors)?;
    let limit = stability_limit(state0, tensors);
    let stability_warning = config.dt > limit;
    if stability_warning {
        log::warn!(
            "time step {} exceeds the heuristic stability limit {:.3e}",
            config.dt,
            limit
        );
    }
    let steps = config.steps();
    let mut samples = vec![state0.clone()];
    let mut series = monitor.map(|m| m.new_series());
    if let (Some(m), Some(s)) = (monitor, series.as_mut()) {
        s.push(m.record(state0, tensors)?);
    }
    let mut c = state0.coeffs.clone();
    let mut aborted = None;
    let mut steps_taken = 0;
    for k in 1..=steps {
        let next = step(&c, config.dt, config.scheme, tensors);
        if next.iter().any(|v| !v.is_finite()) {
            let msg = format!("non-finite state at step {k} (t = {})", k as f64 * config.dt);
            log::error!("{msg}");
            if samples.last().map(|s| s.coeffs != c).unwrap_or(true) {
                samples.push(SpectralField {
                    basis: state0.basis.clone(),
                    coeffs: c.clone(),
                    time: state0.time + (k - 1) as f64 * config.dt,
                });
            }
            aborted = Some(msg);
            break;
        }
        c = next;
        steps_taken = k;
        if k % config.sample_every == 0 || k == steps {
            let s = SpectralField {
                basis: state0.basis.clone(),
                coeffs: c.clone(),
                time: state0.time + k as f64 * config.dt,
            };
            if let (Some(m), Some(series)) = (monitor, series.as_mut()) {
                series.push(m.record(&s, tensors)?);
            }
            samples.push(s);
        }
    }
    if let (Some(m), Some(s)) = (monitor, series.as_mut()) {
        m.finalize(s);
    }
    Ok(Trajectory {
        samples,
        series,
        steps_taken,
        aborted,
        stability_warning,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coupling::assemble_triads_with;
    use crate::geometry::{build_basis, Geometry};
    use crate::quadrature::make_grid;
    use crate::transform::SpectralTransform;

    fn tensors(n: usize, gamma: Vec<f64>, eps: f64) -> CouplingTensors {
        let basis = Arc::new(build_basis(Geometry::unit_square(), n).unwrap());
        let grid = Arc::new(make_grid(basis.geometry, &basis).unwrap());
        let t = SpectralTransform::new(basis.clone(), grid).unwrap();
        CouplingTensors::new(basis, Arc::new(assemble_triads_with(&t)), gamma, eps).unwrap()
    }

    #[test]
    fn rest_state_and_pure_forcing() {
        let t = tensors(6, vec![0.0; 6], 0.3);
        let z = SpectralField::zeros(t.basis.clone());
        assert!(rhs(&z, &t).unwrap().iter().all(|&v| v == 0.0));
        let gamma = vec![0.5, -0.2, 0.1, 0.0, 0.3, 1.0];
        let t = tensors(6, gamma.clone(), 0.3);
        let d = rhs(&z, &t).unwrap();
        for i in 0..6 {
            let mu = t.stiff_diag[i];
            assert!((d[i] + 0.3 * mu * gamma[i] / (1.0 + mu)).abs() < 1e-14);
        }
    }

    #[test]
    fn single_mode_decay_is_exact() {
        let t = tensors(8, vec![0.0; 8], 0.1);
        let mut c = vec![0.0; 8];
        c[0] = 1.0;
        let s = SpectralField::new(t.basis.clone(), c).unwrap();
        let cfg = IntegratorConfig {
            scheme: Scheme::IfRk4,
            dt: 0.01,
            t_end: 1.0,
            sample_every: 10,
        };
        let traj = integrate(&s, &t, &cfg, None).unwrap();
        let want = (-0.1 * t.stiff_diag[0]).exp();
        assert!((traj.last().coeffs[0] - want).abs() < 1e-10);
        assert_eq!(traj.samples.len(), 11);
        assert!((traj.last().time - 1.0).abs() < 1e-12);
    }

    #[test]
    fn snapshot_roundtrip() {
        let basis = Arc::new(build_basis(Geometry::unit_disk(), 5).unwrap());
        let s = SpectralField::new(basis.clone(), vec![1.0, -2.0, 0.5, 1e-300, 3.0])
            .unwrap()
            .at_time(0.25);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.hms");
        s.write_snapshot(&p).unwrap();
        let back = SpectralField::read_snapshot(&p, basis.clone()).unwrap();
        assert_eq!(back.coeffs, s.coeffs);
        assert_eq!(back.time, 0.25);
        let other = Arc::new(build_basis(Geometry::unit_disk(), 4).unwrap());
        assert!(SpectralField::read_snapshot(&p, other).is_err());
    }

    #[test]
    fn invalid_configs() {
        let mut cfg = IntegratorConfig {
            scheme: Scheme::Rk4,
            dt: 0.0,
            t_end: 1.0,
            sample_every: 1,
        };
        assert!(cfg.validate().is_err());
        cfg.dt = 2.0;
        assert!(cfg.validate().is_err());
        cfg.dt = 0.1;
        cfg.sample_every = 0;
        assert!(cfg.validate().is_err());
        assert!("euler".parse::<Scheme>().is_err());
    }
}
