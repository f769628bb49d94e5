//! Background density profiles `n₀`, the field `g = log n₀`, and its
//! regularisations.
//!
//! The elliptic regulariser solves `h_δ - δΔh_δ = h` with `h_δ = 0` on the
//! boundary. In the Dirichlet eigenbasis this is diagonal:
//! `γ_i = (h, e_i) / (1 + δ μ_i)`. The truncating variant first clips `h`
//! to `[-1/δ, 1/δ]`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dynamics::SpectralField;
use crate::error::{HmError, Result};
use crate::geometry::Geometry;
use crate::quadrature::{gauss_legendre, pairwise_sum, QuadratureGrid, SampledField};
use crate::transform::SpectralTransform;

/// Overflow guard applied to sampled `log n₀`.
pub const LOG_CLIP: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "snake_case")]
pub enum DensityProfile {
    /// `n₀ = b^α` with `b = 1 - r²/R²` (disk) or `16 x(L-x) y(L-y)/L⁴`
    /// (square); vanishes on the boundary.
    PowerLaw {
        alpha: f64,
    },
    /// `n₀ = exp(-d²/(2σ²))`, `d` the distance to the centre.
    Gaussian {
        sigma: f64,
    },
    Constant {
        c: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensitySpec {
    pub profile: DensityProfile,
    /// Floor added to `n₀`; zero marks the singular case.
    pub eta: f64,
}

impl DensitySpec {
    pub fn new(profile: DensityProfile, eta: f64) -> Result<Self> {
        let ok = match profile {
            DensityProfile::PowerLaw { alpha } => alpha > 0.0 && alpha.is_finite(),
            DensityProfile::Gaussian { sigma } => sigma > 0.0 && sigma.is_finite(),
            DensityProfile::Constant { c } => c > 0.0 && c.is_finite(),
        };
        if !ok {
            return Err(HmError::Usage(format!(
                "invalid density profile parameters {profile:?}"
            )));
        }
        if !(eta >= 0.0 && eta.is_finite()) {
            return Err(HmError::Usage(format!("density floor must be non-negative, got {eta}")));
        }
        Ok(DensitySpec { profile, eta })
    }

    /// True when `log n₀` is unbounded near the boundary.
    pub fn is_singular(&self) -> bool {
        self.eta == 0.0 && matches!(self.profile, DensityProfile::PowerLaw { .. })
    }

    /// `log b` for the boundary bump, evaluated without cancellation.
    fn log_bump(geometry: Geometry, p: [f64; 2]) -> f64 {
        match geometry {
            Geometry::Disk { radius } => {
                let rho = p[0].hypot(p[1]) / radius;
                (-rho).ln_1p() + rho.ln_1p()
            }
            Geometry::Square { side } => {
                let f = |t: f64| (4.0 * t * (side - t) / (side * side)).ln();
                f(p[0]) + f(p[1])
            }
        }
    }

    fn center_distance2(geometry: Geometry, p: [f64; 2]) -> f64 {
        match geometry {
            Geometry::Disk { .. } => p[0] * p[0] + p[1] * p[1],
            Geometry::Square { side } => (p[0] - 0.5 * side).powi(2) + (p[1] - 0.5 * side).powi(2),
        }
    }

    /// `n₀` at a point.
    pub fn density(&self, geometry: Geometry, p: [f64; 2]) -> f64 {
        let base = match self.profile {
            DensityProfile::PowerLaw { alpha } => (alpha * Self::log_bump(geometry, p)).exp(),
            DensityProfile::Gaussian { sigma } => (-Self::center_distance2(geometry, p) / (2.0 * sigma * sigma)).exp(),
            DensityProfile::Constant { c } => c,
        };
        base + self.eta
    }

    /// `log n₀` at a point, unclipped.
    pub fn log_density(&self, geometry: Geometry, p: [f64; 2]) -> f64 {
        let log_base = match self.profile {
            DensityProfile::PowerLaw { alpha } => alpha * Self::log_bump(geometry, p),
            DensityProfile::Gaussian { sigma } => -Self::center_distance2(geometry, p) / (2.0 * sigma * sigma),
            DensityProfile::Constant { c } => c.ln(),
        };
        if self.eta == 0.0 {
            log_base
        } else {
            // log(e^a + η) without overflow for large a
            let a = log_base;
            let b = self.eta.ln();
            a.max(b) + (-(a - b).abs()).exp().ln_1p()
        }
    }

    /// `‖log n₀‖_p` on the disk by one-dimensional quadrature in the
    /// variable `s = -log(1 - r²/R²)`, which resolves the boundary layer
    /// for every `p` in use.
    pub fn radial_lp_norm(&self, radius: f64, p: f64) -> Result<f64> {
        if p.is_nan() || p < 1.0 {
            return Err(HmError::Usage(format!("L^p norm needs p >= 1, got {p}")));
        }
        let g_of_s = |s: f64| -> f64 {
            let rho2 = -(-s).exp_m1();
            let r = radius * rho2.sqrt();
            match self.profile {
                DensityProfile::PowerLaw { alpha } if self.eta == 0.0 => -alpha * s,
                DensityProfile::PowerLaw { alpha } => {
                    let a = -alpha * s;
                    let b = self.eta.ln();
                    a.max(b) + (-(a - b).abs()).exp().ln_1p()
                }
                _ => self.log_density(Geometry::Disk { radius }, [r, 0.0]),
            }
        };
        if p.is_infinite() {
            if self.is_singular() {
                return Ok(f64::INFINITY);
            }
            let mut m: f64 = 0.0;
            for k in 0..=4000 {
                m = m.max(g_of_s(k as f64 * 0.01).abs());
            }
            return Ok(m.max(g_of_s(800.0).abs()));
        }
        let s_max = 3.0 * p + 120.0;
        let panel = 1.0;
        let (x, w) = gauss_legendre(24);
        let mut terms = Vec::new();
        let mut a = 0.0;
        while a < s_max {
            let b = a + panel;
            for (xi, wi) in x.iter().zip(&w) {
                let s = 0.5 * (a + b) + 0.5 * (b - a) * xi;
                let g = g_of_s(s).abs();
                // |g|^p e^{-s} in log form
                let lt = if g == 0.0 { f64::NEG_INFINITY } else { p * g.ln() - s };
                terms.push((0.5 * (b - a) * wi, lt));
            }
            a = b;
        }
        let lmax = terms.iter().map(|t| t.1).fold(f64::NEG_INFINITY, f64::max);
        if lmax == f64::NEG_INFINITY {
            return Ok(0.0);
        }
        let scaled: Vec<f64> = terms.iter().map(|(w, l)| w * (l - lmax).exp()).collect();
        let integral_log = pairwise_sum(&scaled).ln() + lmax + (std::f64::consts::PI * radius * radius).ln();
        Ok((integral_log / p).exp())
    }
}

/// Samples `log n₀` at the grid nodes, clipped to `|g| <= 700`.
pub fn sample_log_density(spec: &DensitySpec, grid: &Arc<QuadratureGrid>) -> Result<SampledField> {
    let geometry = grid.geometry;
    let mut values = Vec::with_capacity(grid.len());
    for &p in &grid.points {
        let n0 = spec.density(geometry, p);
        let g = spec.log_density(geometry, p);
        if !(n0 > 0.0) && g == f64::NEG_INFINITY || g.is_nan() {
            return Err(HmError::Domain(format!(
                "background density is not positive at ({}, {})",
                p[0], p[1]
            )));
        }
        values.push(g.clamp(-LOG_CLIP, LOG_CLIP));
    }
    SampledField::new(grid.clone(), values)
}

/// Regularised `g` together with the raw samples it came from.
#[derive(Debug, Clone)]
pub struct DensityField {
    pub spec: Option<DensitySpec>,
    /// Raw `g` on the projection grid.
    pub g_sampled: SampledField,
    /// Spectral coefficients `γ` of the regularised field `g_δ`.
    pub gamma: Vec<f64>,
    /// `g_δ` synthesised on the projection grid.
    pub g_delta_sampled: SampledField,
    pub delta: f64,
    /// Clip level `1/δ` when the truncating regulariser was used.
    pub truncation_k: Option<f64>,
}

impl DensityField {
    /// Zero density coefficients (`n₀ ≡ 1`).
    pub fn zero(transform: &SpectralTransform) -> DensityField {
        let g = SampledField::constant(transform.grid().clone(), 0.0);
        DensityField {
            spec: Some(DensitySpec {
                profile: DensityProfile::Constant { c: 1.0 },
                eta: 0.0,
            }),
            g_delta_sampled: g.clone(),
            g_sampled: g,
            gamma: vec![0.0; transform.len()],
            delta: 0.0,
            truncation_k: None,
        }
    }

    pub fn with_spec(mut self, spec: DensitySpec) -> Self {
        self.spec = Some(spec);
        self
    }

    /// `‖g_δ‖₂² = Σ γ²`.
    pub fn l2_norm_sq(&self) -> f64 {
        self.gamma.iter().map(|g| g * g).sum()
    }
}

fn diagonal_solve(
    g: &SampledField,
    source: &SampledField,
    transform: &SpectralTransform,
    delta: f64,
    truncation_k: Option<f64>,
) -> Result<DensityField> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(HmError::Usage(format!(
            "regularisation parameter must be positive, got {delta}"
        )));
    }
    let proj = transform.project(source)?;
    let gamma: Vec<f64> = proj
        .iter()
        .zip(&transform.basis().modes)
        .map(|(c, m)| c / (1.0 + delta * m.mu))
        .collect();
    let g_delta_sampled = transform.synthesize(&gamma);
    Ok(DensityField {
        spec: None,
        g_sampled: g.clone(),
        gamma,
        g_delta_sampled,
        delta,
        truncation_k,
    })
}

/// Spectral solve of `h_δ - δΔh_δ = g` in the span of the basis.
pub fn regularize_density(g: &SampledField, transform: &SpectralTransform, delta: f64) -> Result<DensityField> {
    diagonal_solve(g, g, transform, delta, None)
}

/// Clips `g` to `[-1/δ, 1/δ]`, then applies [`regularize_density`].
pub fn truncate_regularize(g: &SampledField, transform: &SpectralTransform, delta: f64) -> Result<DensityField> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(HmError::Usage(format!(
            "regularisation parameter must be positive, got {delta}"
        )));
    }
    let k = 1.0 / delta;
    let clipped = g.map(|v| v.clamp(-k, k));
    diagonal_solve(g, &clipped, transform, delta, Some(k))
}

/// Smooths initial data by `(I-Δ)φ_ε - εΔ(φ_ε - Δφ_ε) = (I-Δ)φ₀`, i.e.
/// `c_i ↦ c_i / (1 + ε μ_i)`.
pub fn smooth_initial_field(phi0: &SpectralField, eps: f64) -> Result<SpectralField> {
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(HmError::Usage(format!(
            "smoothing parameter must be non-negative, got {eps}"
        )));
    }
    let coeffs = phi0
        .coeffs
        .iter()
        .zip(&phi0.basis.modes)
        .map(|(c, m)| c / (1.0 + eps * m.mu))
        .collect();
    Ok(SpectralField {
        basis: phi0.basis.clone(),
        coeffs,
        time: phi0.time,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_basis;
    use crate::quadrature::{make_grid, make_grid_with, GridOptions};

    fn transform(geometry: Geometry, n: usize, levels: usize) -> SpectralTransform {
        let basis = Arc::new(build_basis(geometry, n).unwrap());
        let grid = Arc::new(
            make_grid_with(
                geometry,
                &basis,
                GridOptions {
                    oversample: 1.0,
                    boundary_levels: levels,
                },
            )
            .unwrap(),
        );
        SpectralTransform::new(basis, grid).unwrap()
    }

    #[test]
    fn constant_profile_gives_zero_log() {
        let t = transform(Geometry::unit_disk(), 6, 0);
        let spec = DensitySpec::new(DensityProfile::Constant { c: 1.0 }, 0.0).unwrap();
        let g = sample_log_density(&spec, t.grid()).unwrap();
        assert!(g.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn power_law_profile() {
        let geometry = Geometry::unit_disk();
        let spec = DensitySpec::new(DensityProfile::PowerLaw { alpha: 1.0 }, 0.0).unwrap();
        assert_eq!(spec.log_density(geometry, [0.0, 0.0]), 0.0);
        let r: f64 = 0.7;
        assert!((spec.log_density(geometry, [r, 0.0]) - (1.0 - r * r).ln()).abs() < 1e-15);
        let spec2 = DensitySpec::new(DensityProfile::PowerLaw { alpha: 2.0 }, 0.0).unwrap();
        for p in [1.0, 2.0, 4.0] {
            let a = spec.radial_lp_norm(1.0, p).unwrap();
            let b = spec2.radial_lp_norm(1.0, p).unwrap();
            assert!((b - 2.0 * a).abs() < 1e-12 * b);
        }
    }

    #[test]
    fn diagonal_solve_of_single_mode() {
        let t = transform(Geometry::unit_square(), 8, 0);
        let mut c = vec![0.0; 8];
        c[0] = 1.0;
        let g = t.synthesize(&c);
        let delta = 0.01;
        let d = regularize_density(&g, &t, delta).unwrap();
        let mu1 = t.basis().modes[0].mu;
        assert!((d.gamma[0] - 1.0 / (1.0 + delta * mu1)).abs() < 1e-13);
        assert!(d.gamma[1..].iter().all(|v| v.abs() < 1e-13));
        assert!(regularize_density(&g, &t, 0.0).is_err());
    }

    #[test]
    fn truncation_inactive_for_small_fields() {
        let t = transform(Geometry::unit_disk(), 10, 0);
        let spec = DensitySpec::new(DensityProfile::Gaussian { sigma: 0.5 }, 0.0).unwrap();
        let g = sample_log_density(&spec, t.grid()).unwrap();
        let a = regularize_density(&g, &t, 0.1).unwrap();
        let b = truncate_regularize(&g, &t, 0.1).unwrap();
        assert_eq!(a.gamma, b.gamma);
        assert_eq!(b.truncation_k, Some(10.0));
    }

    #[test]
    fn truncation_clips_singular_field() {
        let t = transform(Geometry::unit_disk(), 10, 30);
        let spec = DensitySpec::new(DensityProfile::PowerLaw { alpha: 1.0 }, 0.0).unwrap();
        let g = sample_log_density(&spec, t.grid()).unwrap();
        assert!(g.values.iter().any(|&v| v < -10.0));
        let clipped = g.map(|v| v.clamp(-10.0, 10.0));
        let direct = regularize_density(&clipped, &t, 0.1).unwrap();
        let via = truncate_regularize(&g, &t, 0.1).unwrap();
        for (a, b) in direct.gamma.iter().zip(&via.gamma) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn smoothing_is_diagonal() {
        let basis = Arc::new(build_basis(Geometry::unit_disk(), 4).unwrap());
        let phi = SpectralField::new(basis.clone(), vec![1.0, 0.5, -0.5, 2.0]).unwrap();
        let same = smooth_initial_field(&phi, 0.0).unwrap();
        assert_eq!(same.coeffs, phi.coeffs);
        let s = smooth_initial_field(&phi, 1.0).unwrap();
        assert!((s.coeffs[0] - 1.0 / (1.0 + basis.modes[0].mu)).abs() < 1e-15);
        assert!(smooth_initial_field(&phi, -1.0).is_err());
    }

    #[test]
    fn grid_sampling_rejects_nothing_for_valid_specs() {
        let basis = build_basis(Geometry::unit_square(), 4).unwrap();
        let grid = Arc::new(make_grid(Geometry::unit_square(), &basis).unwrap());
        let spec = DensitySpec::new(DensityProfile::PowerLaw { alpha: 1.5 }, 0.0).unwrap();
        let g = sample_log_density(&spec, &grid).unwrap();
        assert!(g.values.iter().all(|v| v.is_finite() && *v <= 0.0));
        assert!(DensitySpec::new(DensityProfile::Constant { c: -1.0 }, 0.0).is_err());
        assert!(DensitySpec::new(DensityProfile::PowerLaw { alpha: 1.0 }, -0.1).is_err());
    }
}
