//! Tensor-product quadrature grids on the disk and the square, sampled
//! fields, L² inner products and L^p norms.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{HmError, Result};
use crate::geometry::{BasisSet, Geometry, ModeIndex};

/// Gauss-Legendre nodes and weights on `[-1, 1]`, nodes ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0, "gauss_legendre needs at least one node");
    if n == 1 {
        return (vec![0.0], vec![2.0]);
    }
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = nf * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

/// Fixed-order pairwise summation.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 32 {
        return v.iter().sum();
    }
    let mid = v.len() / 2;
    pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
}

/// One-dimensional quadrature rule.
#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Axis {
    /// Composite Gauss-Legendre rule over consecutive panels.
    fn composite(panels: &[(f64, f64, usize)]) -> Axis {
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        for &(a, b, n) in panels {
            let (x, w) = gauss_legendre(n);
            let half = 0.5 * (b - a);
            let mid = 0.5 * (a + b);
            for (xi, wi) in x.iter().zip(&w) {
                nodes.push(mid + half * xi);
                weights.push(half * wi);
            }
        }
        Axis { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Knobs for [`make_grid_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridOptions {
    /// Multiplies the node counts of the smooth rule.
    pub oversample: f64,
    /// Number of geometrically graded panels towards the boundary; 0 gives
    /// a single Gauss panel per axis.
    pub boundary_levels: usize,
}

impl Default for GridOptions {
    fn default() -> Self {
        GridOptions {
            oversample: 1.0,
            boundary_levels: 0,
        }
    }
}

/// Tensor-product quadrature: (r, θ) on the disk, (x, y) on the square.
///
/// Flattened node `a * axis2.len() + b` combines `axis1[a]` and `axis2[b]`.
/// On the disk `axis1` carries plain Gauss weights in `r`; the area element
/// `r` is folded into [`QuadratureGrid::weights`] only.
#[derive(Debug, Clone)]
pub struct QuadratureGrid {
    pub geometry: Geometry,
    pub axis1: Axis,
    pub axis2: Axis,
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
}

impl QuadratureGrid {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn resolution(&self) -> (usize, usize) {
        (self.axis1.len(), self.axis2.len())
    }

    pub fn total_weight(&self) -> f64 {
        pairwise_sum(&self.weights)
    }

    /// Quadrature of `Σ w f`.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        let prod: Vec<f64> = self.weights.iter().zip(values).map(|(w, f)| w * f).collect();
        pairwise_sum(&prod)
    }

    /// Weight of the first axis in the raw 1-D measure (`dr` or `dx`).
    pub(crate) fn axis1_line_weights(&self) -> &[f64] {
        &self.axis1.weights
    }

    /// Weight of the first axis in the area measure (`r dr` or `dx`).
    pub(crate) fn axis1_area_weights(&self) -> Vec<f64> {
        match self.geometry {
            Geometry::Disk { .. } => self
                .axis1
                .nodes
                .iter()
                .zip(&self.axis1.weights)
                .map(|(r, w)| r * w)
                .collect(),
            Geometry::Square { .. } => self.axis1.weights.clone(),
        }
    }
}

fn disk_counts(basis: &BasisSet, radius: f64) -> (usize, usize) {
    let mut k_max = 1;
    let mut m_max = 0;
    let mut kappa_max: f64 = 0.0;
    for mode in &basis.modes {
        if let ModeIndex::Disk { m, k, .. } = mode.index {
            k_max = k_max.max(k as usize);
            m_max = m_max.max(m as usize);
            kappa_max = kappa_max.max(mode.wavenumber());
        }
    }
    let nr = (2 * k_max + 16).max((0.75 * kappa_max * radius).ceil() as usize + 16);
    (nr, 4 * m_max + 16)
}

fn square_count(basis: &BasisSet) -> usize {
    let mut k_max = 1;
    for mode in &basis.modes {
        if let ModeIndex::Square { kx, ky } = mode.index {
            k_max = k_max.max(kx.max(ky) as usize);
        }
    }
    (2 * k_max + 16).max((2.4 * k_max as f64).ceil() as usize + 16)
}

fn scaled(n: usize, factor: f64) -> usize {
    ((n as f64) * factor).ceil().max(1.0) as usize
}

/// Panels on `[0, len]` graded towards `len` (and towards 0 if `both`).
fn graded_panels(len: f64, n: usize, levels: usize, both: bool) -> Vec<(f64, f64, usize)> {
    if levels == 0 {
        return vec![(0.0, len, n)];
    }
    let count = |h: f64| ((n as f64) * h / len).ceil() as usize + 12;
    let mut right = Vec::new();
    let mut edge = 0.5 * len;
    let mut h = 0.5 * len;
    for _ in 0..levels {
        h *= 0.5;
        right.push((edge, edge + h, count(h)));
        edge += h;
    }
    right.push((edge, len, 12));
    if both {
        let mut panels: Vec<(f64, f64, usize)> = right.iter().rev().map(|&(a, b, k)| (len - b, len - a, k)).collect();
        panels.extend(right);
        panels
    } else {
        let mut panels = vec![(0.0, 0.5 * len, count(0.5 * len))];
        panels.extend(right);
        panels
    }
}

/// Default smooth grid for a basis.
pub fn make_grid(geometry: Geometry, basis_hint: &BasisSet) -> Result<QuadratureGrid> {
    make_grid_with(geometry, basis_hint, GridOptions::default())
}

pub fn make_grid_with(geometry: Geometry, basis_hint: &BasisSet, opts: GridOptions) -> Result<QuadratureGrid> {
    if basis_hint.is_empty() {
        return Err(HmError::Usage("grid construction needs a non-empty basis".into()));
    }
    if basis_hint.geometry != geometry {
        return Err(HmError::Usage("basis and grid geometries differ".into()));
    }
    if !(opts.oversample >= 1.0) {
        return Err(HmError::Usage("grid oversample factor must be >= 1".into()));
    }
    let (axis1, axis2) = match geometry {
        Geometry::Disk { radius } => {
            let (nr, nt) = disk_counts(basis_hint, radius);
            let nr = scaled(nr, opts.oversample);
            let nt = scaled(nt, opts.oversample);
            let radial = Axis::composite(&graded_panels(radius, nr, opts.boundary_levels, false));
            let dtheta = 2.0 * PI / nt as f64;
            let angular = Axis {
                nodes: (0..nt).map(|b| (b as f64 + 0.5) * dtheta).collect(),
                weights: vec![dtheta; nt],
            };
            (radial, angular)
        }
        Geometry::Square { side } => {
            let n = scaled(square_count(basis_hint), opts.oversample);
            let ax = Axis::composite(&graded_panels(side, n, opts.boundary_levels, true));
            (ax.clone(), ax)
        }
    };

    let mut points = Vec::with_capacity(axis1.len() * axis2.len());
    let mut weights = Vec::with_capacity(axis1.len() * axis2.len());
    for (a, wa) in axis1.nodes.iter().zip(&axis1.weights) {
        for (b, wb) in axis2.nodes.iter().zip(&axis2.weights) {
            match geometry {
                Geometry::Disk { .. } => {
                    let (s, c) = b.sin_cos();
                    points.push([a * c, a * s]);
                    weights.push(wa * a * wb);
                }
                Geometry::Square { .. } => {
                    points.push([*a, *b]);
                    weights.push(wa * wb);
                }
            }
        }
    }
    Ok(QuadratureGrid {
        geometry,
        axis1,
        axis2,
        points,
        weights,
    })
}

/// Values of a field at the nodes of a grid.
#[derive(Debug, Clone)]
pub struct SampledField {
    pub grid: Arc<QuadratureGrid>,
    pub values: Vec<f64>,
}

impl SampledField {
    pub fn new(grid: Arc<QuadratureGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(HmError::Usage(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(SampledField { grid, values })
    }

    pub fn from_fn(grid: Arc<QuadratureGrid>, f: impl Fn([f64; 2]) -> f64) -> Self {
        let values = grid.points.iter().map(|&p| f(p)).collect();
        SampledField { grid, values }
    }

    pub fn constant(grid: Arc<QuadratureGrid>, c: f64) -> Self {
        let values = vec![c; grid.len()];
        SampledField { grid, values }
    }

    fn same_grid(&self, other: &SampledField) -> Result<()> {
        if Arc::ptr_eq(&self.grid, &other.grid) {
            Ok(())
        } else {
            Err(HmError::Usage("fields live on different grids".into()))
        }
    }

    /// Pointwise combination of two fields on the same grid.
    pub fn zip_with(&self, other: &SampledField, f: impl Fn(f64, f64) -> f64) -> Result<SampledField> {
        self.same_grid(other)?;
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        Ok(SampledField {
            grid: self.grid.clone(),
            values,
        })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> SampledField {
        SampledField {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn integral(&self) -> f64 {
        self.grid.integrate(&self.values)
    }

    pub fn linf_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn lp_norm(&self, p: f64) -> Result<f64> {
        lp_norm(self, p)
    }
}

/// L² inner product `∫ f g`.
pub fn inner(f: &SampledField, g: &SampledField) -> Result<f64> {
    f.same_grid(g)?;
    let prod: Vec<f64> = f
        .grid
        .weights
        .iter()
        .zip(f.values.iter().zip(&g.values))
        .map(|(w, (a, b))| w * a * b)
        .collect();
    Ok(pairwise_sum(&prod))
}

/// `‖f‖_p` for `p ∈ [1, ∞]`; `p = ∞` is the node maximum of `|f|`.
pub fn lp_norm(f: &SampledField, p: f64) -> Result<f64> {
    if p.is_nan() || p < 1.0 {
        return Err(HmError::Usage(format!("L^p norm needs p >= 1, got {p}")));
    }
    lp_norm_values(&f.grid.weights, &f.values, p)
}

pub(crate) fn lp_norm_values(weights: &[f64], values: &[f64], p: f64) -> Result<f64> {
    let max = values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if !max.is_finite() {
        return Err(HmError::Numeric("non-finite field value in L^p norm".into()));
    }
    if p.is_infinite() {
        return Ok(max);
    }
    if max == 0.0 {
        return Ok(0.0);
    }
    let terms: Vec<f64> = weights
        .iter()
        .zip(values)
        .map(|(w, v)| w * (v.abs() / max).powf(p))
        .collect();
    Ok(max * pairwise_sum(&terms).powf(1.0 / p))
}
