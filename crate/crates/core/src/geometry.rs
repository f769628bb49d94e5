//! Domains and the Dirichlet-Laplacian eigenbasis used by the Galerkin scheme.
//!
//! Every basis function `e` satisfies `-Δe = μe` with `e = 0` on the
//! boundary, hence also `Δe = 0` there. With `λ = 2 + μ` it solves the mixed
//! eigenproblem `(u, e)_W = λ (u, e)_V` for the energy inner products
//! `(u,v)_V = (u,v) + (∇u,∇v)` and `(u,v)_W = (u,v)_V + ((I-Δ)u, (I-Δ)v)`.

use std::cmp::Ordering;
use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bessel::{self, bessel_j, bessel_j_derivs};
use crate::error::{HmError, Result};

/// Bounded domain with Dirichlet boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Geometry {
    Disk { radius: f64 },
    Square { side: f64 },
}

impl Geometry {
    pub fn disk(radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(HmError::Usage(format!("disk radius must be positive, got {radius}")));
        }
        Ok(Geometry::Disk { radius })
    }

    pub fn square(side: f64) -> Result<Self> {
        if !(side > 0.0 && side.is_finite()) {
            return Err(HmError::Usage(format!("square side must be positive, got {side}")));
        }
        Ok(Geometry::Square { side })
    }

    pub fn unit_disk() -> Self {
        Geometry::Disk { radius: 1.0 }
    }

    pub fn unit_square() -> Self {
        Geometry::Square { side: 1.0 }
    }

    pub fn area(&self) -> f64 {
        match *self {
            Geometry::Disk { radius } => PI * radius * radius,
            Geometry::Square { side } => side * side,
        }
    }

    /// Distance from an interior point to the boundary; non-positive outside.
    pub fn boundary_distance(&self, p: [f64; 2]) -> f64 {
        match *self {
            Geometry::Disk { radius } => radius - p[0].hypot(p[1]),
            Geometry::Square { side } => p[0].min(p[1]).min(side - p[0]).min(side - p[1]),
        }
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        self.boundary_distance(p) > 0.0
    }

    pub fn name(&self) -> &'static str {
        match self {
            Geometry::Disk { .. } => "disk",
            Geometry::Square { .. } => "square",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parity {
    Cosine,
    Sine,
}

/// Quantum numbers of one eigenfunction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModeIndex {
    /// `J_m(j_{m,k} r / R) cos(mθ)` or `sin(mθ)`.
    Disk { m: u32, k: u32, parity: Parity },
    /// `sin(kx π x / L) sin(ky π y / L)`.
    Square { kx: u32, ky: u32 },
}

impl ModeIndex {
    fn sort_key(&self) -> (u32, u32, Parity) {
        match *self {
            ModeIndex::Disk { m, k, parity } => (m, k, parity),
            ModeIndex::Square { kx, ky } => (kx, ky, Parity::Cosine),
        }
    }
}

impl fmt::Display for ModeIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModeIndex::Disk { m, k, parity } => write!(f, "(m={m}, k={k}, {parity:?})"),
            ModeIndex::Square { kx, ky } => write!(f, "({kx}, {ky})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasisMode {
    pub geometry: Geometry,
    pub index: ModeIndex,
    /// Dirichlet eigenvalue, `-Δe = μ e`.
    pub mu: f64,
    /// Eigenvalue of the mixed V/W problem, always `2 + μ`.
    pub lambda: f64,
    /// L² normalisation factor multiplying the unnormalised eigenfunction.
    pub norm_const: f64,
}

impl BasisMode {
    /// Radial wavenumber `sqrt(μ)`.
    pub fn wavenumber(&self) -> f64 {
        self.mu.sqrt()
    }

    fn new(geometry: Geometry, index: ModeIndex, mu: f64, norm_const: f64) -> Self {
        BasisMode {
            geometry,
            index,
            mu,
            lambda: 2.0 + mu,
            norm_const,
        }
    }

    /// Evaluates the mode at interior points.
    pub fn eval(&self, points: &[[f64; 2]]) -> Result<Vec<ModeSample>> {
        eval_mode(self, points)
    }
}

/// Ordered eigenbasis: ascending `μ`, ties by `(m, k, parity)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisSet {
    pub geometry: Geometry,
    pub modes: Vec<BasisMode>,
}

impl BasisSet {
    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn mu(&self) -> Vec<f64> {
        self.modes.iter().map(|m| m.mu).collect()
    }

    pub fn mu_max(&self) -> f64 {
        self.modes.iter().map(|m| m.mu).fold(0.0, f64::max)
    }

    /// Leading `n` modes as a new basis.
    pub fn truncated(&self, n: usize) -> BasisSet {
        BasisSet {
            geometry: self.geometry,
            modes: self.modes[..n.min(self.len())].to_vec(),
        }
    }

    /// SHA-256 over the mode table in canonical order.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.geometry.name().as_bytes());
        for m in &self.modes {
            let (a, b, p) = m.index.sort_key();
            h.update(a.to_le_bytes());
            h.update(b.to_le_bytes());
            h.update([p as u8]);
            h.update(m.mu.to_le_bytes());
            h.update(m.norm_const.to_le_bytes());
        }
        hex::encode(h.finalize())
    }

    /// CSV table `index,m_or_k,k_or_l,parity,mu,lambda,norm_const`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("index,m_or_k,k_or_l,parity,mu,lambda,norm_const\n");
        for (i, m) in self.modes.iter().enumerate() {
            let (a, b, parity) = match m.index {
                ModeIndex::Disk { m, k, parity } => (
                    m,
                    k,
                    match parity {
                        Parity::Cosine => "cos",
                        Parity::Sine => "sin",
                    },
                ),
                ModeIndex::Square { kx, ky } => (kx, ky, "none"),
            };
            s.push_str(&format!(
                "{},{},{},{},{:.17e},{:.17e},{:.17e}\n",
                i + 1,
                a,
                b,
                parity,
                m.mu,
                m.lambda,
                m.norm_const
            ));
        }
        s
    }
}

fn canonical_order(a: &BasisMode, b: &BasisMode) -> Ordering {
    a.mu.total_cmp(&b.mu)
        .then_with(|| a.index.sort_key().cmp(&b.index.sort_key()))
}

/// First `n` eigenfunctions of the Dirichlet Laplacian in canonical order.
pub fn build_basis(geometry: Geometry, n: usize) -> Result<BasisSet> {
    if n == 0 {
        return Err(HmError::Usage("basis size must be at least 1".into()));
    }
    let mut modes = match geometry {
        Geometry::Disk { radius } => disk_modes(radius, n)?,
        Geometry::Square { side } => square_modes(side, n),
    };
    modes.sort_by(canonical_order);
    modes.truncate(n);
    Ok(BasisSet { geometry, modes })
}

fn square_modes(side: f64, n: usize) -> Vec<BasisMode> {
    let geometry = Geometry::Square { side };
    // Weyl count ~ π R²/4 for kx² + ky² <= R²
    let mut radius = (4.0 * n as f64 / PI).sqrt().ceil() as u32 + 2;
    loop {
        let r2 = radius * radius;
        let mut modes = Vec::new();
        for kx in 1..=radius {
            for ky in 1..=radius {
                if kx * kx + ky * ky <= r2 {
                    let mu = PI * PI * f64::from(kx * kx + ky * ky) / (side * side);
                    modes.push(BasisMode::new(geometry, ModeIndex::Square { kx, ky }, mu, 2.0 / side));
                }
            }
        }
        if modes.len() >= n {
            return modes;
        }
        radius += radius / 2 + 1;
    }
}

fn disk_modes(radius: f64, n: usize) -> Result<Vec<BasisMode>> {
    let geometry = Geometry::Disk { radius };
    // lower bound for j_{61,1}; nothing beyond the order table may be needed
    let order_limit = (f64::from(bessel::MAX_ORDER + 1) * f64::from(bessel::MAX_ORDER + 3)).sqrt();
    let mut cut = 2.0 * (n as f64).sqrt() + 6.0;
    loop {
        let mut modes = Vec::new();
        for m in 0..=bessel::MAX_ORDER {
            if f64::from(m) > cut {
                break;
            }
            for (ki, j) in bessel::bessel_zeros_below(m, cut).into_iter().enumerate() {
                let k = ki as u32 + 1;
                if k > bessel::MAX_ZERO_INDEX {
                    return Err(HmError::Range(format!("disk basis of {n} modes needs k > 200")));
                }
                let jp1 = bessel_j(m + 1, j).abs();
                let mu = (j / radius).powi(2);
                let base = 1.0 / (PI.sqrt() * radius * jp1);
                if m == 0 {
                    modes.push(BasisMode::new(
                        geometry,
                        ModeIndex::Disk {
                            m,
                            k,
                            parity: Parity::Cosine,
                        },
                        mu,
                        base,
                    ));
                } else {
                    for parity in [Parity::Cosine, Parity::Sine] {
                        modes.push(BasisMode::new(
                            geometry,
                            ModeIndex::Disk { m, k, parity },
                            mu,
                            base * std::f64::consts::SQRT_2,
                        ));
                    }
                }
            }
        }
        if modes.len() >= n {
            modes.sort_by(canonical_order);
            let last = modes[n - 1].mu.sqrt() * radius;
            if last >= order_limit {
                return Err(HmError::Range(format!(
                    "disk basis of {n} modes needs Bessel orders above {}",
                    bessel::MAX_ORDER
                )));
            }
            return Ok(modes);
        }
        if cut > order_limit * 1.5 {
            return Err(HmError::Range(format!(
                "disk basis of {n} modes exceeds the Bessel table"
            )));
        }
        cut *= 1.3;
    }
}

/// Pointwise derivatives of one basis function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeSample {
    pub value: f64,
    pub gradient: [f64; 2],
    /// `∇⊥e = (-∂₂e, ∂₁e)`.
    pub perp_gradient: [f64; 2],
    /// Exactly `-μ · value`.
    pub laplacian: f64,
    pub hessian: [[f64; 2]; 2],
}

impl ModeSample {
    fn from_parts(mu: f64, value: f64, gradient: [f64; 2], hxx: f64, hxy: f64, hyy: f64) -> Self {
        ModeSample {
            value,
            gradient,
            perp_gradient: [-gradient[1], gradient[0]],
            laplacian: -mu * value,
            hessian: [[hxx, hxy], [hxy, hyy]],
        }
    }
}

/// Below this value of `κr` the disk modes are evaluated from the
/// Cartesian power series, which is regular at the centre.
const CENTER_SERIES_KR: f64 = 0.5;

/// Evaluates a basis function and its derivatives at interior points.
pub fn eval_mode(mode: &BasisMode, points: &[[f64; 2]]) -> Result<Vec<ModeSample>> {
    points
        .iter()
        .map(|&p| {
            if !mode.geometry.contains(p) {
                return Err(HmError::Domain(format!(
                    "({}, {}) is not strictly inside the {}",
                    p[0],
                    p[1],
                    mode.geometry.name()
                )));
            }
            Ok(match mode.index {
                ModeIndex::Square { kx, ky } => {
                    let Geometry::Square { side } = mode.geometry else {
                        unreachable!()
                    };
                    eval_square(mode, side, kx, ky, p)
                }
                ModeIndex::Disk { m, parity, .. } => {
                    let kappa = mode.wavenumber();
                    let r = p[0].hypot(p[1]);
                    if kappa * r < CENTER_SERIES_KR {
                        eval_disk_series(mode, m, parity, kappa, p)
                    } else {
                        eval_disk_polar(mode, m, parity, kappa, p)
                    }
                }
            })
        })
        .collect()
}

fn eval_square(mode: &BasisMode, side: f64, kx: u32, ky: u32, p: [f64; 2]) -> ModeSample {
    let a = f64::from(kx) * PI / side;
    let b = f64::from(ky) * PI / side;
    let (sx, cx) = (a * p[0]).sin_cos();
    let (sy, cy) = (b * p[1]).sin_cos();
    let n = mode.norm_const;
    let value = n * sx * sy;
    let gradient = [n * a * cx * sy, n * b * sx * cy];
    let hxx = -a * a * value;
    let hyy = -b * b * value;
    let hxy = n * a * b * cx * cy;
    ModeSample::from_parts(mode.mu, value, gradient, hxx, hxy, hyy)
}

fn angular(m: u32, parity: Parity, theta: f64) -> (f64, f64) {
    let (s, c) = (f64::from(m) * theta).sin_cos();
    let mf = f64::from(m);
    match parity {
        Parity::Cosine => (c, -mf * s),
        Parity::Sine => (s, mf * c),
    }
}

fn eval_disk_polar(mode: &BasisMode, m: u32, parity: Parity, kappa: f64, p: [f64; 2]) -> ModeSample {
    let r = p[0].hypot(p[1]);
    let theta = p[1].atan2(p[0]);
    let (ct, st) = (p[0] / r, p[1] / r);
    let (j, dj, ddj) = bessel_j_derivs(m, kappa * r);
    let (ang, dang) = angular(m, parity, theta);
    let n = mode.norm_const;
    let mf = f64::from(m);

    let f = n * j * ang;
    let f_r = n * kappa * dj * ang;
    let f_rr = n * kappa * kappa * ddj * ang;
    let f_t = n * j * dang;
    let f_tt = -mf * mf * f;
    let f_rt = n * kappa * dj * dang;

    let gx = ct * f_r - st * f_t / r;
    let gy = st * f_r + ct * f_t / r;
    let tang = f_r / r + f_tt / (r * r);
    let mixed = f_rt / r - f_t / (r * r);
    let hxx = ct * ct * f_rr - 2.0 * st * ct * mixed + st * st * tang;
    let hyy = st * st * f_rr + 2.0 * st * ct * mixed + ct * ct * tang;
    let hxy = st * ct * (f_rr - tang) + (ct * ct - st * st) * mixed;
    ModeSample::from_parts(mode.mu, f, [gx, gy], hxx, hxy, hyy)
}

/// `J_m(κr) cos(mθ) = Re[(x+iy)^m] S(r²)` with an entire power series `S`.
fn eval_disk_series(mode: &BasisMode, m: u32, parity: Parity, kappa: f64, p: [f64; 2]) -> ModeSample {
    let (x, y) = (p[0], p[1]);
    let s = x * x + y * y;

    // S, S', S'' in the variable s = r²
    let mut coef = 1.0;
    for i in 1..=m {
        coef *= 0.5 * kappa / f64::from(i);
    }
    let q = -0.25 * kappa * kappa;
    let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
    let mut pow = 1.0; // s^k
    let mut pow_m1 = 0.0; // s^(k-1)
    let mut pow_m2 = 0.0; // s^(k-2)
    for k in 0..40u32 {
        let kf = f64::from(k);
        s0 += coef * pow;
        s1 += coef * kf * pow_m1;
        s2 += coef * kf * (kf - 1.0) * pow_m2;
        coef *= q / (f64::from(k + 1) * f64::from(k + 1 + m));
        pow_m2 = pow_m1;
        pow_m1 = pow;
        pow *= s;
        if coef.abs() < 1e-300 {
            break;
        }
    }

    // z^m, z^(m-1), z^(m-2) as complex numbers (re, im)
    let zpow = |e: i64| -> (f64, f64) {
        if e < 0 {
            return (0.0, 0.0);
        }
        let (mut re, mut im) = (1.0, 0.0);
        for _ in 0..e {
            let nre = re * x - im * y;
            im = re * y + im * x;
            re = nre;
        }
        (re, im)
    };
    let mi = i64::from(m);
    let mf = f64::from(m);
    let (z0, z1, z2) = (zpow(mi), zpow(mi - 1), zpow(mi - 2));
    let pick = |c: (f64, f64)| match parity {
        Parity::Cosine => c.0,
        Parity::Sine => c.1,
    };
    // i*c rotates (re, im) to (-im, re)
    let rot = |c: (f64, f64)| (-c.1, c.0);

    let pv = pick(z0);
    let px = mf * pick(z1);
    let py = mf * pick(rot(z1));
    let pxx = mf * (mf - 1.0) * pick(z2);
    let pxy = mf * (mf - 1.0) * pick(rot(z2));
    let pyy = -pxx;

    let n = mode.norm_const;
    let value = n * pv * s0;
    let gx = n * (px * s0 + 2.0 * x * pv * s1);
    let gy = n * (py * s0 + 2.0 * y * pv * s1);
    let hxx = n * (pxx * s0 + 4.0 * x * px * s1 + pv * (2.0 * s1 + 4.0 * x * x * s2));
    let hyy = n * (pyy * s0 + 4.0 * y * py * s1 + pv * (2.0 * s1 + 4.0 * y * y * s2));
    let hxy = n * (pxy * s0 + 2.0 * (y * px + x * py) * s1 + pv * 4.0 * x * y * s2);
    ModeSample::from_parts(mode.mu, value, [gx, gy], hxx, hxy, hyy)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_disk_mode() {
        let b = build_basis(Geometry::unit_disk(), 1).unwrap();
        let m = b.modes[0];
        assert_eq!(
            m.index,
            ModeIndex::Disk {
                m: 0,
                k: 1,
                parity: Parity::Cosine
            }
        );
        assert!((m.mu - 5.783185962946785).abs() < 1e-11);
        assert!((m.lambda - 7.783185962946785).abs() < 1e-11);
    }

    #[test]
    fn first_square_mode() {
        let b = build_basis(Geometry::unit_square(), 1).unwrap();
        assert_eq!(b.modes[0].index, ModeIndex::Square { kx: 1, ky: 1 });
        assert!((b.modes[0].mu - 2.0 * PI * PI).abs() < 1e-12);
        let s = eval_mode(&b.modes[0], &[[0.5, 0.5]]).unwrap()[0];
        assert!((s.value - 2.0).abs() < 1e-14);
        assert!(s.gradient[0].abs() < 1e-14 && s.gradient[1].abs() < 1e-14);
    }

    #[test]
    fn ordering_and_ties() {
        let b = build_basis(Geometry::unit_disk(), 40).unwrap();
        for w in b.modes.windows(2) {
            assert_ne!(canonical_order(&w[0], &w[1]), Ordering::Greater);
            assert!(w[1].lambda >= w[0].lambda);
        }
        // second and third modes are the (1,1) cos/sin pair
        assert_eq!(
            b.modes[1].index,
            ModeIndex::Disk {
                m: 1,
                k: 1,
                parity: Parity::Cosine
            }
        );
        assert_eq!(
            b.modes[2].index,
            ModeIndex::Disk {
                m: 1,
                k: 1,
                parity: Parity::Sine
            }
        );
        let sq = build_basis(Geometry::unit_square(), 3).unwrap();
        assert_eq!(sq.modes[1].index, ModeIndex::Square { kx: 1, ky: 2 });
        assert_eq!(sq.modes[2].index, ModeIndex::Square { kx: 2, ky: 1 });
    }

    #[test]
    fn prefix_stability() {
        let big = build_basis(Geometry::unit_disk(), 60).unwrap();
        let small = build_basis(Geometry::unit_disk(), 17).unwrap();
        assert_eq!(&big.modes[..17], &small.modes[..]);
    }

    #[test]
    fn boundary_and_domain_errors() {
        let b = build_basis(Geometry::unit_disk(), 1).unwrap();
        let s = eval_mode(&b.modes[0], &[[1.0 - 1e-9, 0.0]]).unwrap()[0];
        assert!(s.value.abs() < 1e-6);
        assert!(matches!(eval_mode(&b.modes[0], &[[1.0, 0.0]]), Err(HmError::Domain(_))));
        assert!(matches!(build_basis(Geometry::unit_disk(), 0), Err(HmError::Usage(_))));
        assert!(Geometry::disk(-1.0).is_err());
        assert!(Geometry::square(0.0).is_err());
    }

    #[test]
    fn too_many_disk_modes() {
        assert!(matches!(
            build_basis(Geometry::unit_disk(), 5000),
            Err(HmError::Range(_))
        ));
    }

    #[test]
    fn csv_header_and_rows() {
        let b = build_basis(Geometry::unit_disk(), 3).unwrap();
        let csv = b.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "index,m_or_k,k_or_l,parity,mu,lambda,norm_const");
        assert!(lines.next().unwrap().starts_with("1,0,1,cos,"));
        assert_eq!(csv.lines().count(), 4);
    }
}
