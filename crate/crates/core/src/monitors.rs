//! Diagnostics evaluated along a trajectory: spectral norms, the L^p and
//! L∞ size of the potential vorticity `q = φ - Δφ + g_δ`, the energy
//! identity residual and the weak-form residual.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::coupling::CouplingTensors;
use crate::dynamics::SpectralField;
use crate::error::{HmError, Result};
use crate::quadrature::lp_norm_values;
use crate::transform::SpectralTransform;

/// Declared slack for inequalities that hold for the PDE limit but are
/// checked at a finite number of modes.
pub fn tol(n: usize) -> f64 {
    if n < 24 {
        0.25
    } else if n < 48 {
        0.10
    } else {
        0.05
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorSpec {
    pub p_list: Vec<f64>,
    pub track_linf: bool,
    pub track_weak_residual: bool,
    /// Test modes for the weak residual; all modes of the run when `None`.
    pub weak_test_modes: Option<Vec<usize>>,
}

impl Default for MonitorSpec {
    fn default() -> Self {
        MonitorSpec {
            p_list: vec![2.0, 4.0, 8.0, 16.0],
            track_linf: true,
            track_weak_residual: true,
            weak_test_modes: None,
        }
    }
}

impl MonitorSpec {
    pub fn validate(&self) -> Result<()> {
        if self.p_list.iter().any(|p| !(*p >= 1.0) || p.is_infinite()) {
            return Err(HmError::Config("monitor exponents must be finite and >= 1".into()));
        }
        if self.p_list.windows(2).any(|w| w[0] >= w[1]) {
            return Err(HmError::Config("monitor exponents must be strictly ascending".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorRecord {
    pub t: f64,
    pub norm_v2: f64,
    pub norm_w2: f64,
    pub enstrophy2: f64,
    /// `‖φ - Δφ + g_δ‖_p` for each entry of the spec's `p_list`.
    pub lp: Vec<f64>,
    /// Node maximum of `|φ - Δφ + g_δ|`.
    pub linf: f64,
    /// Finite-difference residual of the energy identity, filled in once
    /// the whole series is available.
    pub energy_residual: f64,
    pub weak_residual: f64,
    /// `d/dt ‖φ‖_V²` predicted by the energy identity.
    pub energy_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorSeries {
    pub p_list: Vec<f64>,
    pub records: Vec<MonitorRecord>,
}

impl MonitorSeries {
    pub fn push(&mut self, r: MonitorRecord) {
        self.records.push(r);
    }

    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.t).collect()
    }

    /// Series of one column of `lp`.
    pub fn lp_series(&self, k: usize) -> Vec<f64> {
        self.records.iter().map(|r| r.lp[k]).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,normV2,normW2,enstrophy2");
        for p in &self.p_list {
            s.push_str(&format!(",lp{p}"));
        }
        s.push_str(",linf,energy_residual,weak_residual\n");
        for r in &self.records {
            s.push_str(&format!(
                "{:.17e},{:.17e},{:.17e},{:.17e}",
                r.t, r.norm_v2, r.norm_w2, r.enstrophy2
            ));
            for v in &r.lp {
                s.push_str(&format!(",{v:.17e}"));
            }
            s.push_str(&format!(
                ",{:.17e},{:.17e},{:.17e}\n",
                r.linf, r.energy_residual, r.weak_residual
            ));
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| HmError::io(path, e))
    }

    /// Largest absolute energy residual over the series.
    pub fn max_energy_residual(&self) -> f64 {
        self.records.iter().map(|r| r.energy_residual.abs()).fold(0.0, f64::max)
    }
}

/// Evaluates monitor records on the grid of `transform`.
#[derive(Debug, Clone)]
pub struct Monitor {
    pub spec: MonitorSpec,
    transform: Arc<SpectralTransform>,
    gamma: Vec<f64>,
}

impl Monitor {
    /// `gamma` are the density coefficients on the transform's basis, which
    /// must coincide with the run's basis.
    pub fn new(spec: MonitorSpec, transform: Arc<SpectralTransform>, gamma: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        if gamma.len() != transform.len() {
            return Err(HmError::Usage(
                "density coefficients do not match the monitor basis".into(),
            ));
        }
        Ok(Monitor { spec, transform, gamma })
    }

    pub fn transform(&self) -> &Arc<SpectralTransform> {
        &self.transform
    }

    pub fn new_series(&self) -> MonitorSeries {
        MonitorSeries {
            p_list: self.spec.p_list.clone(),
            records: Vec::new(),
        }
    }

    /// Coefficients of `q = φ - Δφ + g_δ`.
    pub fn vorticity_coeffs(&self, c: &[f64]) -> Vec<f64> {
        c.iter()
            .zip(&self.gamma)
            .zip(&self.transform.basis().modes)
            .map(|((c, g), m)| (1.0 + m.mu) * c + g)
            .collect()
    }

    pub fn record(&self, state: &SpectralField, tensors: &CouplingTensors) -> Result<MonitorRecord> {
        if state.len() != self.transform.len() || tensors.len() != state.len() {
            return Err(HmError::Usage(
                "monitor, state and tensors disagree on the basis".into(),
            ));
        }
        let c = &state.coeffs;
        let q = self.transform.synthesize(&self.vorticity_coeffs(c));
        let weights = &self.transform.grid().weights;
        let lp = self
            .spec
            .p_list
            .iter()
            .map(|&p| lp_norm_values(weights, &q.values, p))
            .collect::<Result<Vec<_>>>()?;
        let linf = q.values.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let weak = if self.spec.track_weak_residual {
            let modes: Vec<usize> = match &self.spec.weak_test_modes {
                Some(m) => m.clone(),
                None => (0..state.len()).collect(),
            };
            weak_residual(state, &self.gamma, tensors, &self.transform, &modes)?
                .into_iter()
                .map(f64::abs)
                .fold(0.0, f64::max)
        } else {
            0.0
        };
        let eps = tensors.eps;
        let energy_rate = -2.0
            * eps
            * c.iter()
                .zip(&tensors.stiff_diag)
                .zip(&tensors.gamma)
                .map(|((c, mu), g)| mu * c * c + mu * mu * c * c + mu * g * c)
                .sum::<f64>();
        Ok(MonitorRecord {
            t: state.time,
            norm_v2: state.norm_v2(),
            norm_w2: state.norm_w2(),
            enstrophy2: state.enstrophy2(),
            lp,
            linf,
            energy_residual: 0.0,
            weak_residual: weak,
            energy_rate,
        })
    }

    /// Fills the energy residuals by second-order finite differences of
    /// `‖φ‖_V²` in time.
    pub fn finalize(&self, series: &mut MonitorSeries) {
        finalize_energy_residual(series);
    }
}

/// Second-order finite-difference derivative on a possibly non-uniform
/// grid.
fn derivative(t: &[f64], f: &[f64]) -> Vec<f64> {
    let n = t.len();
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        2 => {
            let d = (f[1] - f[0]) / (t[1] - t[0]);
            vec![d, d]
        }
        _ => {
            let three = |k0: usize, at: usize| -> f64 {
                // derivative at t[at] of the quadratic through k0..k0+2
                let (x0, x1, x2) = (t[k0], t[k0 + 1], t[k0 + 2]);
                let x = t[at];
                f[k0] * ((x - x1) + (x - x2)) / ((x0 - x1) * (x0 - x2))
                    + f[k0 + 1] * ((x - x0) + (x - x2)) / ((x1 - x0) * (x1 - x2))
                    + f[k0 + 2] * ((x - x0) + (x - x1)) / ((x2 - x0) * (x2 - x1))
            };
            (0..n)
                .map(|k| {
                    if k == 0 {
                        three(0, 0)
                    } else if k == n - 1 {
                        three(n - 3, n - 1)
                    } else {
                        three(k - 1, k)
                    }
                })
                .collect()
        }
    }
}

pub fn finalize_energy_residual(series: &mut MonitorSeries) {
    let t = series.times();
    let v: Vec<f64> = series.records.iter().map(|r| r.norm_v2).collect();
    let d = derivative(&t, &v);
    for (r, d) in series.records.iter_mut().zip(d) {
        r.energy_residual = d - r.energy_rate;
    }
}

/// Residuals of the weak form against the test functions `e_i`,
/// `i ∈ test_modes`, computed as the tensor-based Galerkin rate minus an
/// independent grid quadrature of `∫ (g_δ - Δφ) ∇⊥φ · ∇e_i` plus the
/// dissipation term.
///
/// `transform` may carry a larger basis than the run whose leading modes
/// coincide with it; then `gamma` has the transform's length and modes
/// beyond the run measure how far the Galerkin solution is from a weak
/// solution.
pub fn weak_residual(
    state: &SpectralField,
    gamma: &[f64],
    tensors: &CouplingTensors,
    transform: &SpectralTransform,
    test_modes: &[usize],
) -> Result<Vec<f64>> {
    let n = state.len();
    let nt = transform.len();
    if nt < n || gamma.len() != nt || tensors.len() != n {
        return Err(HmError::Usage(
            "weak residual needs a transform basis extending the run basis".into(),
        ));
    }
    let tb = transform.basis();
    if tb.modes[..n] != state.basis.modes[..] {
        return Err(HmError::Usage("transform basis does not extend the run basis".into()));
    }
    if let Some(&bad) = test_modes.iter().find(|&&i| i >= nt) {
        return Err(HmError::Range(format!("test mode {bad} beyond basis of {nt}")));
    }
    let mut c = state.coeffs.clone();
    c.resize(nt, 0.0);
    let mass_rate = tensors.mass_rhs(&state.coeffs);
    let h: Vec<f64> = gamma
        .iter()
        .zip(&c)
        .zip(&tb.modes)
        .map(|((g, c), m)| g + m.mu * c)
        .collect();
    let hv = transform.synthesize(&h).values;
    let (px, py) = transform.gradient(&c);
    let fx: Vec<f64> = hv.iter().zip(&py).map(|(h, py)| -h * py).collect();
    let fy: Vec<f64> = hv.iter().zip(&px).map(|(h, px)| h * px).collect();
    let quad = transform.project_gradient(&fx, &fy);
    let eps = tensors.eps;
    Ok(test_modes
        .iter()
        .map(|&i| {
            let mu = tb.modes[i].mu;
            let rate = if i < n { mass_rate[i] } else { 0.0 };
            let q = (1.0 + mu) * c[i] + gamma[i];
            rate - quad[i] + eps * mu * q
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpBudget {
    pub p: f64,
    pub initial: f64,
    pub max_value: f64,
    pub max_ratio: f64,
    pub tolerance: f64,
    pub violated: bool,
}

/// Compares `max_t ‖q(t)‖_p` with the initial value for every tracked `p`.
pub fn check_lp_budget(series: &MonitorSeries, initial: &[f64], tolerance: f64) -> Result<Vec<LpBudget>> {
    if series.records.is_empty() {
        return Err(HmError::Usage("empty monitor series".into()));
    }
    if initial.len() != series.p_list.len() {
        return Err(HmError::Usage("one initial budget per exponent is required".into()));
    }
    Ok(series
        .p_list
        .iter()
        .enumerate()
        .map(|(k, &p)| {
            let max_value = series.records.iter().map(|r| r.lp[k]).fold(0.0, f64::max);
            let max_ratio = if initial[k] > 0.0 {
                max_value / initial[k]
            } else if max_value == 0.0 {
                1.0
            } else {
                f64::INFINITY
            };
            LpBudget {
                p,
                initial: initial[k],
                max_value,
                max_ratio,
                tolerance,
                violated: max_ratio > 1.0 + tolerance,
            }
        })
        .collect())
}
