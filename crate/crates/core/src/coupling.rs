//! Galerkin coupling tensors.
//!
//! Everything the ODE needs reduces to one triad tensor
//! `T_ijl = ∫ e_i ∇⊥e_j · ∇e_l` plus diagonals, because the density field
//! enters only through its spectral coefficients `γ`. The realised system is
//!
//! ```text
//! (1+μ_i) ċ_i = -Σ_jl T_ijl c_j (γ_l + μ_l c_l) - ε μ_i (1+μ_i) c_i - ε μ_i γ_i
//! ```

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::density::DensityField;
use crate::error::{HmError, Result};
use crate::geometry::{BasisSet, ModeIndex, Parity};
use crate::quadrature::QuadratureGrid;
use crate::transform::SpectralTransform;

/// Entries with `|T| < PRUNE` are dropped.
pub const PRUNE: f64 = 1e-14;

const DUMP_MAGIC: &[u8; 4] = b"HMT1";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triad {
    pub i: u32,
    pub j: u32,
    pub l: u32,
    pub value: f64,
}

/// Sparse, fully antisymmetric triad tensor with entries sorted by
/// `(i, j, l)`.
#[derive(Debug, Clone)]
pub struct TriadTensor {
    n: usize,
    entries: Vec<Triad>,
    row_start: Vec<usize>,
    /// `max |T_ijl + T_ilj|` over the quadratured entries.
    pub raw_defect_jl: f64,
    /// `max |T_ijl + T_lji|` over the quadratured entries.
    pub raw_defect_il: f64,
    /// Number of index triples that passed the selection rule.
    pub candidates: usize,
}

impl TriadTensor {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn entries(&self) -> &[Triad] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    /// Entries with first index `i`.
    pub fn row(&self, i: usize) -> &[Triad] {
        &self.entries[self.row_start[i]..self.row_start[i + 1]]
    }

    /// Fraction of the `n³` index triples that survive pruning.
    pub fn density(&self) -> f64 {
        self.entries.len() as f64 / (self.n as f64).powi(3)
    }

    /// Entry lookup, zero when absent.
    pub fn get(&self, i: usize, j: usize, l: usize) -> f64 {
        let row = self.row(i);
        row.binary_search_by(|t| (t.j as usize, t.l as usize).cmp(&(j, l)))
            .map(|k| row[k].value)
            .unwrap_or(0.0)
    }

    /// `Σ_jl T_ijl a_j b_l` for every `i`.
    pub fn contract(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        (0..self.n)
            .into_par_iter()
            .map(|i| {
                self.row(i)
                    .iter()
                    .map(|t| t.value * a[t.j as usize] * b[t.l as usize])
                    .sum()
            })
            .collect()
    }

    fn dump_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(20 + 20 * self.entries.len());
        out.extend_from_slice(DUMP_MAGIC);
        out.extend_from_slice(&(self.n as u64).to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u64).to_le_bytes());
        for t in &self.entries {
            out.extend_from_slice(&t.i.to_le_bytes());
            out.extend_from_slice(&t.j.to_le_bytes());
            out.extend_from_slice(&t.l.to_le_bytes());
            out.extend_from_slice(&t.value.to_le_bytes());
        }
        out
    }

    /// SHA-256 of the binary dump.
    pub fn checksum(&self) -> String {
        hex::encode(Sha256::digest(self.dump_bytes()))
    }

    /// Writes the `HMT1` binary dump.
    pub fn write_dump(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| HmError::io(path, e))?;
        let mut w = BufWriter::new(file);
        w.write_all(&self.dump_bytes()).map_err(|e| HmError::io(path, e))?;
        w.flush().map_err(|e| HmError::io(path, e))
    }

    /// Reads a dump written by [`TriadTensor::write_dump`]. Defect fields are
    /// not stored and come back as zero.
    pub fn read_dump(path: &Path) -> Result<TriadTensor> {
        let file = File::open(path).map_err(|e| HmError::io(path, e))?;
        let mut bytes = Vec::new();
        BufReader::new(file)
            .read_to_end(&mut bytes)
            .map_err(|e| HmError::io(path, e))?;
        let bad = |reason: &str| HmError::Format {
            path: path.to_path_buf(),
            reason: reason.to_string(),
        };
        if bytes.len() < 20 || &bytes[..4] != DUMP_MAGIC {
            return Err(bad("missing HMT1 header"));
        }
        let n = u64::from_le_bytes(bytes[4..12].try_into().unwrap()) as usize;
        let count = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        if bytes.len() != 20 + 20 * count {
            return Err(bad("entry count does not match file length"));
        }
        let mut entries = Vec::with_capacity(count);
        for rec in bytes[20..].chunks_exact(20) {
            let u = |k: usize| u32::from_le_bytes(rec[k..k + 4].try_into().unwrap());
            let t = Triad {
                i: u(0),
                j: u(4),
                l: u(8),
                value: f64::from_le_bytes(rec[12..20].try_into().unwrap()),
            };
            if t.i as usize >= n || t.j as usize >= n || t.l as usize >= n {
                return Err(bad("index out of range"));
            }
            entries.push(t);
        }
        if entries
            .windows(2)
            .any(|w| (w[0].i, w[0].j, w[0].l) >= (w[1].i, w[1].j, w[1].l))
        {
            return Err(bad("entries not sorted"));
        }
        Ok(TriadTensor::from_sorted(n, entries, 0.0, 0.0, 0))
    }

    fn from_sorted(n: usize, entries: Vec<Triad>, d_jl: f64, d_il: f64, candidates: usize) -> TriadTensor {
        let mut row_start = vec![0; n + 1];
        for t in &entries {
            row_start[t.i as usize + 1] += 1;
        }
        for i in 0..n {
            row_start[i + 1] += row_start[i];
        }
        TriadTensor {
            n,
            entries,
            row_start,
            raw_defect_jl: d_jl,
            raw_defect_il: d_il,
            candidates,
        }
    }
}

/// Selection rule: can `∫ e_i ∇⊥e_j·∇e_l` be non-zero?
pub fn selection_rule(basis: &BasisSet, i: usize, j: usize, l: usize) -> bool {
    let triangle = |a: u32, b: u32, c: u32| a == b + c || a + c == b || a + b == c;
    match (basis.modes[i].index, basis.modes[j].index, basis.modes[l].index) {
        (
            ModeIndex::Disk { m: mi, parity: pi, .. },
            ModeIndex::Disk { m: mj, parity: pj, .. },
            ModeIndex::Disk { m: mk, parity: pk, .. },
        ) => {
            let sines = [pi, pj, pk].iter().filter(|&&p| p == Parity::Sine).count();
            triangle(mi, mj, mk) && sines % 2 == 1
        }
        (
            ModeIndex::Square { kx: ai, ky: bi },
            ModeIndex::Square { kx: aj, ky: bj },
            ModeIndex::Square { kx: ak, ky: bk },
        ) => triangle(ai, aj, ak) && triangle(bi, bj, bk),
        _ => false,
    }
}

fn dot3(w: &[f64], a: &[f64], b: &[f64]) -> f64 {
    w.iter().zip(a).zip(b).map(|((w, a), b)| w * a * b).sum()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(a, b)| a * b).sum()
}

/// Quadrature of a single entry `T_ijl` from the separable factors.
fn quadrature_entry(t: &SpectralTransform, i: usize, j: usize, l: usize) -> f64 {
    let grid = t.grid();
    let w1 = grid.axis1_line_weights();
    let w2 = &grid.axis2.weights;
    let ri = t.first_factor(i, 0);
    let si = t.second_factor(i, 0);
    let a1: Vec<f64> = ri.iter().zip(t.first_factor(j, 1)).map(|(a, b)| a * b).collect();
    let a0: Vec<f64> = ri.iter().zip(t.first_factor(j, 0)).map(|(a, b)| a * b).collect();
    let b0: Vec<f64> = si.iter().zip(t.second_factor(j, 0)).map(|(a, b)| a * b).collect();
    let b1: Vec<f64> = si.iter().zip(t.second_factor(j, 1)).map(|(a, b)| a * b).collect();
    dot3(w1, &a1, t.first_factor(l, 0)) * dot3(w2, &b0, t.second_factor(l, 1))
        - dot3(w1, &a0, t.first_factor(l, 1)) * dot3(w2, &b1, t.second_factor(l, 0))
}

/// Candidate partners `l` for a given `(i, j)`, grouped by the quantum
/// number that the selection rule constrains.
fn partner_index(basis: &BasisSet) -> BTreeMap<u32, Vec<usize>> {
    let mut map: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (k, mode) in basis.modes.iter().enumerate() {
        let key = match mode.index {
            ModeIndex::Disk { m, .. } => m,
            ModeIndex::Square { kx, .. } => kx,
        };
        map.entry(key).or_default().push(k);
    }
    map
}

fn first_number(basis: &BasisSet, i: usize) -> u32 {
    match basis.modes[i].index {
        ModeIndex::Disk { m, .. } => m,
        ModeIndex::Square { kx, .. } => kx,
    }
}

/// Assembles the triad tensor on the transform's grid. The stored tensor is
/// the antisymmetric part of the quadratured one, so the discrete energy
/// identities hold to round-off.
pub fn assemble_triads_with(transform: &SpectralTransform) -> TriadTensor {
    let basis = transform.basis();
    let n = basis.len();
    let partners = partner_index(basis);
    let grid = transform.grid();
    let w1 = grid.axis1_line_weights();
    let w2 = &grid.axis2.weights;

    let raw_rows: Vec<Vec<(u32, u32, f64)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut row = Vec::new();
            let ri = transform.first_factor(i, 0);
            let si = transform.second_factor(i, 0);
            let mi = first_number(basis, i);
            for j in 0..n {
                let mj = first_number(basis, j);
                let mut ls: Vec<usize> = Vec::new();
                for key in [mi + mj, mi.abs_diff(mj)] {
                    if let Some(v) = partners.get(&key) {
                        ls.extend(v.iter().copied().filter(|&l| selection_rule(basis, i, j, l)));
                    }
                    if mi + mj == mi.abs_diff(mj) {
                        break;
                    }
                }
                if ls.is_empty() {
                    continue;
                }
                ls.sort_unstable();
                ls.dedup();
                let a1: Vec<f64> = (0..ri.len())
                    .map(|k| w1[k] * ri[k] * transform.first_factor(j, 1)[k])
                    .collect();
                let a0: Vec<f64> = (0..ri.len())
                    .map(|k| w1[k] * ri[k] * transform.first_factor(j, 0)[k])
                    .collect();
                let b0: Vec<f64> = (0..si.len())
                    .map(|k| w2[k] * si[k] * transform.second_factor(j, 0)[k])
                    .collect();
                let b1: Vec<f64> = (0..si.len())
                    .map(|k| w2[k] * si[k] * transform.second_factor(j, 1)[k])
                    .collect();
                for l in ls {
                    let v = dot(&a1, transform.first_factor(l, 0)) * dot(&b0, transform.second_factor(l, 1))
                        - dot(&a0, transform.first_factor(l, 1)) * dot(&b1, transform.second_factor(l, 0));
                    row.push((j as u32, l as u32, v));
                }
            }
            row
        })
        .collect();

    let candidates: usize = raw_rows.iter().map(Vec::len).sum();
    let raw = |i: usize, j: usize, l: usize| -> f64 {
        let row = &raw_rows[i];
        row.binary_search_by(|e| (e.0 as usize, e.1 as usize).cmp(&(j, l)))
            .map(|k| row[k].2)
            .unwrap_or(0.0)
    };

    let (defects, rows): (Vec<(f64, f64)>, Vec<Vec<Triad>>) = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut d_jl: f64 = 0.0;
            let mut d_il: f64 = 0.0;
            let mut out = Vec::new();
            for &(j, l, t) in &raw_rows[i] {
                let (j, l) = (j as usize, l as usize);
                let t_ilj = raw(i, l, j);
                let t_lji = raw(l, j, i);
                d_jl = d_jl.max((t + t_ilj).abs());
                d_il = d_il.max((t + t_lji).abs());
                let a = antisymmetric_part(&raw, i, j, l);
                if a.abs() >= PRUNE {
                    out.push(Triad {
                        i: i as u32,
                        j: j as u32,
                        l: l as u32,
                        value: a,
                    });
                }
            }
            ((d_jl, d_il), out)
        })
        .unzip();
    let d_jl = defects.iter().map(|d| d.0).fold(0.0, f64::max);
    let d_il = defects.iter().map(|d| d.1).fold(0.0, f64::max);
    let entries: Vec<Triad> = rows.into_iter().flatten().collect();
    TriadTensor::from_sorted(n, entries, d_jl, d_il, candidates)
}

/// `(1/6) Σ_σ sign(σ) T_σ`, evaluated on the sorted index triple so that
/// every permutation yields exactly the same magnitude.
fn antisymmetric_part(raw: &impl Fn(usize, usize, usize) -> f64, i: usize, j: usize, l: usize) -> f64 {
    if i == j || j == l || i == l {
        return 0.0;
    }
    let mut idx = [i, j, l];
    let mut sign = 1.0;
    for a in 0..2 {
        for b in 0..2 - a {
            if idx[b] > idx[b + 1] {
                idx.swap(b, b + 1);
                sign = -sign;
            }
        }
    }
    let [a, b, c] = idx;
    let v = (raw(a, b, c) - raw(a, c, b) - raw(b, a, c) + raw(b, c, a) + raw(c, a, b) - raw(c, b, a)) / 6.0;
    sign * v
}

/// Assembles the triad tensor for `basis` on `grid`.
pub fn assemble_triads(basis: &Arc<BasisSet>, grid: &Arc<QuadratureGrid>) -> Result<TriadTensor> {
    if basis.geometry != grid.geometry {
        return Err(HmError::Usage("basis and grid geometries differ".into()));
    }
    let t = SpectralTransform::new(basis.clone(), grid.clone())?;
    Ok(assemble_triads_with(&t))
}

/// Quadratures a random sample of the triples rejected by the selection
/// rule and returns the largest magnitude found together with the sample
/// size.
pub fn spot_check_rejected(transform: &SpectralTransform, fraction: f64, seed: u64) -> (f64, usize) {
    let basis = transform.basis();
    let n = basis.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for i in 0..n {
        for j in 0..n {
            for l in 0..n {
                if selection_rule(basis, i, j, l) || rng.gen::<f64>() >= fraction {
                    continue;
                }
                worst = worst.max(quadrature_entry(transform, i, j, l).abs());
                checked += 1;
            }
        }
    }
    (worst, checked)
}

/// Triad tensor together with the diagonals, density coefficients and
/// dissipation that complete the ODE.
#[derive(Debug, Clone)]
pub struct CouplingTensors {
    pub basis: Arc<BasisSet>,
    pub triads: Arc<TriadTensor>,
    /// `1 + μ_i`.
    pub mass_diag: Vec<f64>,
    /// `μ_i`.
    pub stiff_diag: Vec<f64>,
    /// Spectral coefficients of `g_δ`.
    pub gamma: Vec<f64>,
    pub eps: f64,
}

impl CouplingTensors {
    pub fn new(basis: Arc<BasisSet>, triads: Arc<TriadTensor>, gamma: Vec<f64>, eps: f64) -> Result<Self> {
        let n = basis.len();
        if triads.n() != n || gamma.len() != n {
            return Err(HmError::Usage(format!(
                "size mismatch: basis {n}, tensor {}, density {}",
                triads.n(),
                gamma.len()
            )));
        }
        if !(eps >= 0.0 && eps.is_finite()) {
            return Err(HmError::Usage(format!("dissipation must be non-negative, got {eps}")));
        }
        let stiff_diag = basis.mu();
        let mass_diag = stiff_diag.iter().map(|m| 1.0 + m).collect();
        Ok(CouplingTensors {
            basis,
            triads,
            mass_diag,
            stiff_diag,
            gamma,
            eps,
        })
    }

    pub fn len(&self) -> usize {
        self.mass_diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass_diag.is_empty()
    }

    /// Nonlinear transport plus density forcing, `-Σ T c_j (γ_l + μ_l c_l) - ε μ_i γ_i`.
    pub fn forcing_terms(&self, c: &[f64]) -> Vec<f64> {
        let w: Vec<f64> = self
            .gamma
            .iter()
            .zip(&self.stiff_diag)
            .zip(c)
            .map(|((g, m), c)| g + m * c)
            .collect();
        let mut out = self.triads.contract(c, &w);
        for (i, o) in out.iter_mut().enumerate() {
            *o = -*o - self.eps * self.stiff_diag[i] * self.gamma[i];
        }
        out
    }

    /// Right side of the mass-weighted system, `(1+μ_i) ċ_i`.
    pub fn mass_rhs(&self, c: &[f64]) -> Vec<f64> {
        let mut out = self.forcing_terms(c);
        for (i, o) in out.iter_mut().enumerate() {
            *o -= self.eps * self.stiff_diag[i] * self.mass_diag[i] * c[i];
        }
        out
    }

    /// Advection matrix `B_ij = Σ_l γ_l T_ijl` (dense).
    pub fn advection_matrix(&self) -> Vec<Vec<f64>> {
        let n = self.len();
        let mut b = vec![vec![0.0; n]; n];
        for t in self.triads.entries() {
            b[t.i as usize][t.j as usize] += self.gamma[t.l as usize] * t.value;
        }
        b
    }
}

/// Attaches the density coefficients and dissipation to assembled triads.
pub fn assemble_rhs_data(
    basis: Arc<BasisSet>,
    triads: Arc<TriadTensor>,
    density: &DensityField,
    eps: f64,
) -> Result<CouplingTensors> {
    CouplingTensors::new(basis, triads, density.gamma.clone(), eps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_basis, Geometry};
    use crate::quadrature::make_grid;

    fn setup(geometry: Geometry, n: usize) -> SpectralTransform {
        let basis = Arc::new(build_basis(geometry, n).unwrap());
        let grid = Arc::new(make_grid(geometry, &basis).unwrap());
        SpectralTransform::new(basis, grid).unwrap()
    }

    #[test]
    fn radial_triads_vanish() {
        let t = setup(Geometry::unit_disk(), 30);
        let tensor = assemble_triads_with(&t);
        let basis = t.basis();
        let radial: Vec<usize> = (0..basis.len())
            .filter(|&i| matches!(basis.modes[i].index, ModeIndex::Disk { m: 0, .. }))
            .collect();
        assert!(radial.len() >= 3);
        for &i in &radial {
            for &j in &radial {
                for &l in &radial {
                    assert_eq!(tensor.get(i, j, l), 0.0);
                    assert!(quadrature_entry(&t, i, j, l).abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn raw_tensor_is_nearly_antisymmetric() {
        for g in [Geometry::unit_disk(), Geometry::unit_square()] {
            let tensor = assemble_triads_with(&setup(g, 40));
            assert!(tensor.raw_defect_jl < 1e-10, "{}", tensor.raw_defect_jl);
            assert!(tensor.raw_defect_il < 1e-10, "{}", tensor.raw_defect_il);
            assert!(tensor.nnz() > 0);
            for t in tensor.entries() {
                let (i, j, l) = (t.i as usize, t.j as usize, t.l as usize);
                assert_eq!(tensor.get(i, l, j), -t.value);
                assert_eq!(tensor.get(l, j, i), -t.value);
            }
        }
    }

    #[test]
    fn selection_rule_rejects_only_zeros() {
        for g in [Geometry::unit_disk(), Geometry::unit_square()] {
            let t = setup(g, 16);
            let (worst, checked) = spot_check_rejected(&t, 0.2, 7);
            assert!(checked > 50);
            assert!(worst < 1e-13, "{worst}");
        }
    }

    #[test]
    fn dump_roundtrip() {
        let tensor = assemble_triads_with(&setup(Geometry::unit_square(), 12));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.hmt");
        tensor.write_dump(&path).unwrap();
        let back = TriadTensor::read_dump(&path).unwrap();
        assert_eq!(back.entries(), tensor.entries());
        assert_eq!(back.checksum(), tensor.checksum());
        std::fs::write(&path, b"HMT0").unwrap();
        assert!(matches!(TriadTensor::read_dump(&path), Err(HmError::Format { .. })));
    }

    #[test]
    fn single_mode_has_no_self_interaction() {
        let t = setup(Geometry::unit_disk(), 20);
        let tensor = Arc::new(assemble_triads_with(&t));
        let ct = CouplingTensors::new(t.basis().clone(), tensor, vec![0.0; 20], 0.0).unwrap();
        for k in 0..20 {
            let mut c = vec![0.0; 20];
            c[k] = 1.3;
            assert!(ct.mass_rhs(&c).iter().all(|v| v.abs() < 1e-13));
        }
    }
}
