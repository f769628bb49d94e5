//! Separable synthesis and projection between spectral coefficients and
//! grid samples.
//!
//! Every basis function factors as `F1_u(axis1) · F2_v(axis2)`: radial
//! profile times `cos/sin(mθ)` on the disk, `sin` times `sin` on the square.
//! Sums over modes are grouped by the second factor so that a transform
//! costs `O(n·N1 + V·N1·N2)` instead of `O(n·N1·N2)`.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;

use crate::bessel::bessel_j_derivs;
use crate::error::{HmError, Result};
use crate::geometry::{BasisSet, Geometry, ModeIndex, Parity};
use crate::quadrature::{QuadratureGrid, SampledField};

/// Values of `f`, `f'`, `f''` of a 1-D factor at the nodes of one axis.
#[derive(Debug, Clone)]
struct FactorTable {
    d: [Vec<f64>; 3],
}

/// Precomputed factor tables for one (basis, grid) pair.
#[derive(Debug, Clone)]
pub struct SpectralTransform {
    basis: Arc<BasisSet>,
    grid: Arc<QuadratureGrid>,
    /// Per-mode first-axis factor index.
    mode_u: Vec<usize>,
    /// Per-mode second-axis factor index.
    mode_v: Vec<usize>,
    f1: Vec<FactorTable>,
    f2: Vec<FactorTable>,
    /// Modes grouped by second-axis factor, ascending.
    groups: Vec<Vec<usize>>,
}

impl SpectralTransform {
    pub fn new(basis: Arc<BasisSet>, grid: Arc<QuadratureGrid>) -> Result<Self> {
        if basis.geometry != grid.geometry {
            return Err(HmError::Usage("basis and grid geometries differ".into()));
        }
        let (mode_u, mode_v, f1, f2) = match basis.geometry {
            Geometry::Disk { .. } => disk_tables(&basis, &grid),
            Geometry::Square { side } => square_tables(&basis, &grid, side),
        };
        let mut groups = vec![Vec::new(); f2.len()];
        for (i, &v) in mode_v.iter().enumerate() {
            groups[v].push(i);
        }
        Ok(SpectralTransform {
            basis,
            grid,
            mode_u,
            mode_v,
            f1,
            f2,
            groups,
        })
    }

    pub fn basis(&self) -> &Arc<BasisSet> {
        &self.basis
    }

    pub fn grid(&self) -> &Arc<QuadratureGrid> {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.basis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.basis.is_empty()
    }

    fn check_coeffs(&self, c: &[f64]) {
        assert_eq!(c.len(), self.basis.len(), "coefficient vector does not match basis");
    }

    /// `Σ_i c_i ∂₁^{d1} F1 ∂₂^{d2} F2` at every node.
    pub(crate) fn synth_component(&self, c: &[f64], d1: usize, d2: usize) -> Vec<f64> {
        self.check_coeffs(c);
        let n1 = self.grid.axis1.len();
        let n2 = self.grid.axis2.len();
        let active: Vec<usize> = (0..self.groups.len())
            .filter(|&v| self.groups[v].iter().any(|&i| c[i] != 0.0))
            .collect();
        let mut out = vec![0.0; n1 * n2];
        out.par_chunks_mut(n2).enumerate().for_each(|(a, row)| {
            for &v in &active {
                let mut amp = 0.0;
                for &i in &self.groups[v] {
                    amp += c[i] * self.f1[self.mode_u[i]].d[d1][a];
                }
                if amp == 0.0 {
                    continue;
                }
                let f2 = &self.f2[v].d[d2];
                for (o, f) in row.iter_mut().zip(f2) {
                    *o += amp * f;
                }
            }
        });
        out
    }

    /// `Σ_nodes W · vals · ∂₁^{d1} F1 ∂₂^{d2} F2` for every mode, with `W`
    /// the area weights of the grid.
    pub(crate) fn project_component(&self, vals: &[f64], d1: usize, d2: usize) -> Vec<f64> {
        assert_eq!(vals.len(), self.grid.len(), "sample vector does not match grid");
        let n2 = self.grid.axis2.len();
        let w1 = self.grid.axis1_area_weights();
        let w2 = &self.grid.axis2.weights;
        // B_v(a) = Σ_b w2_b vals_ab F2_v(b)
        let partial: Vec<Vec<f64>> = (0..self.f2.len())
            .into_par_iter()
            .map(|v| {
                if self.groups[v].is_empty() {
                    return Vec::new();
                }
                let f2 = &self.f2[v].d[d2];
                vals.chunks(n2)
                    .map(|row| row.iter().zip(w2).zip(f2).map(|((x, w), f)| x * w * f).sum::<f64>())
                    .collect()
            })
            .collect();
        (0..self.basis.len())
            .map(|i| {
                let f1 = &self.f1[self.mode_u[i]].d[d1];
                let b = &partial[self.mode_v[i]];
                w1.iter().zip(f1).zip(b).map(|((w, f), b)| w * f * b).sum()
            })
            .collect()
    }

    /// Field values `Σ c_i e_i` at the nodes.
    pub fn synthesize(&self, c: &[f64]) -> SampledField {
        SampledField {
            grid: self.grid.clone(),
            values: self.synth_component(c, 0, 0),
        }
    }

    /// Inner products `(f, e_i)` for every mode.
    pub fn project(&self, f: &SampledField) -> Result<Vec<f64>> {
        if !Arc::ptr_eq(&f.grid, &self.grid) {
            return Err(HmError::Usage("field is not sampled on the transform grid".into()));
        }
        Ok(self.project_component(&f.values, 0, 0))
    }

    /// Cartesian gradient `(∂ₓφ, ∂ᵧφ)` of `Σ c_i e_i` at the nodes.
    pub fn gradient(&self, c: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let d1 = self.synth_component(c, 1, 0);
        let d2 = self.synth_component(c, 0, 1);
        match self.grid.geometry {
            Geometry::Square { .. } => (d1, d2),
            Geometry::Disk { .. } => {
                let mut gx = vec![0.0; d1.len()];
                let mut gy = vec![0.0; d1.len()];
                for (k, p) in self.grid.points.iter().enumerate() {
                    let r = p[0].hypot(p[1]);
                    let (ct, st) = (p[0] / r, p[1] / r);
                    gx[k] = ct * d1[k] - st * d2[k] / r;
                    gy[k] = st * d1[k] + ct * d2[k] / r;
                }
                (gx, gy)
            }
        }
    }

    /// Cartesian Hessian `(φ_xx, φ_xy, φ_yy)` at the nodes.
    pub fn hessian(&self, c: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let f11 = self.synth_component(c, 2, 0);
        let f12 = self.synth_component(c, 1, 1);
        let f22 = self.synth_component(c, 0, 2);
        match self.grid.geometry {
            Geometry::Square { .. } => (f11, f12, f22),
            Geometry::Disk { .. } => {
                let f1 = self.synth_component(c, 1, 0);
                let f2 = self.synth_component(c, 0, 1);
                let len = f1.len();
                let (mut hxx, mut hxy, mut hyy) = (vec![0.0; len], vec![0.0; len], vec![0.0; len]);
                for (k, p) in self.grid.points.iter().enumerate() {
                    let r = p[0].hypot(p[1]);
                    let (ct, st) = (p[0] / r, p[1] / r);
                    let tang = f1[k] / r + f22[k] / (r * r);
                    let mixed = f12[k] / r - f2[k] / (r * r);
                    hxx[k] = ct * ct * f11[k] - 2.0 * st * ct * mixed + st * st * tang;
                    hyy[k] = st * st * f11[k] + 2.0 * st * ct * mixed + ct * ct * tang;
                    hxy[k] = st * ct * (f11[k] - tang) + (ct * ct - st * st) * mixed;
                }
                (hxx, hxy, hyy)
            }
        }
    }

    /// `∫ (Fx ∂ₓe_i + Fy ∂ᵧe_i)` for every mode.
    pub fn project_gradient(&self, fx: &[f64], fy: &[f64]) -> Vec<f64> {
        match self.grid.geometry {
            Geometry::Square { .. } => {
                let a = self.project_component(fx, 1, 0);
                let b = self.project_component(fy, 0, 1);
                a.iter().zip(&b).map(|(a, b)| a + b).collect()
            }
            Geometry::Disk { .. } => {
                let len = fx.len();
                let mut gr = vec![0.0; len];
                let mut gt = vec![0.0; len];
                for (k, p) in self.grid.points.iter().enumerate() {
                    let r = p[0].hypot(p[1]);
                    let (ct, st) = (p[0] / r, p[1] / r);
                    gr[k] = fx[k] * ct + fy[k] * st;
                    gt[k] = (-fx[k] * st + fy[k] * ct) / r;
                }
                let a = self.project_component(&gr, 1, 0);
                let b = self.project_component(&gt, 0, 1);
                a.iter().zip(&b).map(|(a, b)| a + b).collect()
            }
        }
    }

    /// Per-mode 1-D factor tables, exposed for triad assembly.
    pub(crate) fn first_factor(&self, mode: usize, deriv: usize) -> &[f64] {
        &self.f1[self.mode_u[mode]].d[deriv]
    }

    pub(crate) fn second_factor(&self, mode: usize, deriv: usize) -> &[f64] {
        &self.f2[self.mode_v[mode]].d[deriv]
    }
}

type Tables = (Vec<usize>, Vec<usize>, Vec<FactorTable>, Vec<FactorTable>);

fn disk_tables(basis: &BasisSet, grid: &QuadratureGrid) -> Tables {
    let r = &grid.axis1.nodes;
    let theta = &grid.axis2.nodes;

    let f1: Vec<FactorTable> = basis
        .modes
        .par_iter()
        .map(|mode| {
            let ModeIndex::Disk { m, .. } = mode.index else {
                unreachable!()
            };
            let kappa = mode.wavenumber();
            let n = mode.norm_const;
            let mut d = [vec![0.0; r.len()], vec![0.0; r.len()], vec![0.0; r.len()]];
            for (a, &ra) in r.iter().enumerate() {
                let (j, dj, ddj) = bessel_j_derivs(m, kappa * ra);
                d[0][a] = n * j;
                d[1][a] = n * kappa * dj;
                d[2][a] = n * kappa * kappa * ddj;
            }
            FactorTable { d }
        })
        .collect();

    let mut keys: BTreeMap<(u32, Parity), usize> = BTreeMap::new();
    let mut mode_v = Vec::with_capacity(basis.len());
    for mode in &basis.modes {
        let ModeIndex::Disk { m, parity, .. } = mode.index else {
            unreachable!()
        };
        let next = keys.len();
        mode_v.push(*keys.entry((m, parity)).or_insert(next));
    }
    let mut f2 = vec![
        FactorTable {
            d: [Vec::new(), Vec::new(), Vec::new()]
        };
        keys.len()
    ];
    for (&(m, parity), &v) in &keys {
        let mf = f64::from(m);
        let mut d = [vec![0.0; theta.len()], vec![0.0; theta.len()], vec![0.0; theta.len()]];
        for (b, &t) in theta.iter().enumerate() {
            let (s, c) = (mf * t).sin_cos();
            let (f, df) = match parity {
                Parity::Cosine => (c, -mf * s),
                Parity::Sine => (s, mf * c),
            };
            d[0][b] = f;
            d[1][b] = df;
            d[2][b] = -mf * mf * f;
        }
        f2[v] = FactorTable { d };
    }
    ((0..basis.len()).collect(), mode_v, f1, f2)
}

fn sine_table(nodes: &[f64], k: u32, side: f64) -> FactorTable {
    let a = f64::from(k) * PI / side;
    let amp = (2.0 / side).sqrt();
    let mut d = [vec![0.0; nodes.len()], vec![0.0; nodes.len()], vec![0.0; nodes.len()]];
    for (i, &x) in nodes.iter().enumerate() {
        let (s, c) = (a * x).sin_cos();
        d[0][i] = amp * s;
        d[1][i] = amp * a * c;
        d[2][i] = -amp * a * a * s;
    }
    FactorTable { d }
}

fn square_tables(basis: &BasisSet, grid: &QuadratureGrid, side: f64) -> Tables {
    let mut kx_max = 0;
    let mut ky_max = 0;
    for mode in &basis.modes {
        let ModeIndex::Square { kx, ky } = mode.index else {
            unreachable!()
        };
        kx_max = kx_max.max(kx);
        ky_max = ky_max.max(ky);
    }
    let f1 = (1..=kx_max).map(|k| sine_table(&grid.axis1.nodes, k, side)).collect();
    let f2 = (1..=ky_max).map(|k| sine_table(&grid.axis2.nodes, k, side)).collect();
    let mut mode_u = Vec::with_capacity(basis.len());
    let mut mode_v = Vec::with_capacity(basis.len());
    for mode in &basis.modes {
        let ModeIndex::Square { kx, ky } = mode.index else {
            unreachable!()
        };
        mode_u.push(kx as usize - 1);
        mode_v.push(ky as usize - 1);
    }
    (mode_u, mode_v, f1, f2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_basis, eval_mode};
    use crate::quadrature::make_grid;

    fn setup(geometry: Geometry, n: usize) -> SpectralTransform {
        let basis = Arc::new(build_basis(geometry, n).unwrap());
        let grid = Arc::new(make_grid(geometry, &basis).unwrap());
        SpectralTransform::new(basis, grid).unwrap()
    }

    #[test]
    fn synthesis_matches_pointwise_evaluation() {
        for geometry in [Geometry::unit_disk(), Geometry::unit_square()] {
            let t = setup(geometry, 12);
            let c: Vec<f64> = (0..12).map(|i| ((i * 7 % 5) as f64 - 2.0) / (1.0 + i as f64)).collect();
            let vals = t.synthesize(&c).values;
            let (gx, gy) = t.gradient(&c);
            let (hxx, hxy, hyy) = t.hessian(&c);
            for k in (0..t.grid.len()).step_by(37) {
                let p = t.grid.points[k];
                let mut want = [0.0; 6];
                for (i, mode) in t.basis.modes.iter().enumerate() {
                    let s = eval_mode(mode, &[p]).unwrap()[0];
                    want[0] += c[i] * s.value;
                    want[1] += c[i] * s.gradient[0];
                    want[2] += c[i] * s.gradient[1];
                    want[3] += c[i] * s.hessian[0][0];
                    want[4] += c[i] * s.hessian[0][1];
                    want[5] += c[i] * s.hessian[1][1];
                }
                let got = [vals[k], gx[k], gy[k], hxx[k], hxy[k], hyy[k]];
                for (g, w) in got.iter().zip(&want) {
                    assert!(
                        (g - w).abs() < 1e-9 * (1.0 + w.abs()),
                        "{geometry:?} node {k}: {g} vs {w}"
                    );
                }
            }
        }
    }

    #[test]
    fn projection_inverts_synthesis() {
        for geometry in [Geometry::unit_disk(), Geometry::unit_square()] {
            let t = setup(geometry, 20);
            let c: Vec<f64> = (0..20).map(|i| (i as f64 * 0.37).sin()).collect();
            let back = t.project(&t.synthesize(&c)).unwrap();
            for (a, b) in c.iter().zip(&back) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
