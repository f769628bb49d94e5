//! Property-based invariants.

mod oracles;

use std::sync::{Arc, OnceLock};

use proptest::prelude::*;

use hm_galerkin::coupling::TriadTensor;
use hm_galerkin::dynamics::step;
use hm_galerkin::{
    assemble_triads_with, bessel, build_basis, make_grid, phi_theta, smooth_initial_field, tol, BasisSet,
    CouplingTensors, Geometry, GrowthFunction, Scheme, SpectralField, SpectralTransform,
};

struct Fixture {
    basis: Arc<BasisSet>,
    triads: Arc<TriadTensor>,
}

fn disk_fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let g = Geometry::unit_disk();
        let basis = Arc::new(build_basis(g, 20).unwrap());
        let grid = Arc::new(make_grid(g, &basis).unwrap());
        let t = SpectralTransform::new(basis.clone(), grid).unwrap();
        Fixture {
            basis,
            triads: Arc::new(assemble_triads_with(&t)),
        }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn bessel_zeros_are_roots_and_interlace(m in 0u32..20, k in 1u32..40) {
        let z = bessel::bessel_zero(m, k).unwrap();
        let next = bessel::bessel_zero(m, k + 1).unwrap();
        let upper = bessel::bessel_zero(m + 1, k).unwrap();
        prop_assert!(oracles::bessel_j_integral(m, z).abs() < 1e-13);
        prop_assert!(z < upper && upper < next);
    }

    #[test]
    fn triads_are_fully_antisymmetric(i in 0usize..20, j in 0usize..20, l in 0usize..20) {
        let t = &disk_fixture().triads;
        let v = t.get(i, j, l);
        prop_assert_eq!(t.get(i, l, j), -v);
        prop_assert_eq!(t.get(l, j, i), -v);
        prop_assert_eq!(t.get(j, i, l), -v);
    }

    #[test]
    fn advection_conserves_mass_weighted_energy(
        c in prop::collection::vec(-1.0f64..1.0, 20),
        gamma in prop::collection::vec(-1.0f64..1.0, 20),
    ) {
        let f = disk_fixture();
        let tensors = CouplingTensors::new(f.basis.clone(), f.triads.clone(), gamma, 0.0).unwrap();
        let rate = tensors.mass_rhs(&c);
        let dot: f64 = c.iter().zip(&rate).map(|(a, b)| a * b).sum();
        let scale: f64 = c.iter().zip(&rate).map(|(a, b)| (a * b).abs()).sum::<f64>() + 1e-300;
        prop_assert!(dot.abs() <= 1e-12 * scale);
    }

    #[test]
    fn dissipative_step_shrinks_lone_modes(mode in 0usize..20, amp in -2.0f64..2.0, h in 1e-4f64..0.1) {
        let f = disk_fixture();
        let eps = 0.1;
        let tensors = CouplingTensors::new(f.basis.clone(), f.triads.clone(), vec![0.0; 20], eps).unwrap();
        let mut c = vec![0.0; 20];
        c[mode] = amp;
        let next = step(&c, h, Scheme::IfRk4, &tensors);
        let exact = amp * (-eps * f.basis.modes[mode].mu * h).exp();
        prop_assert!((next[mode] - exact).abs() <= 1e-14 * amp.abs().max(1e-300));
    }

    #[test]
    fn smoothing_never_increases_norms(c in prop::collection::vec(-1.0f64..1.0, 20), eps in 0.0f64..1.0) {
        let f = disk_fixture();
        let s = SpectralField::new(f.basis.clone(), c).unwrap();
        let sm = smooth_initial_field(&s, eps).unwrap();
        prop_assert!(sm.norm_v2() <= s.norm_v2());
        prop_assert!(sm.norm_w2() <= s.norm_w2());
    }

    #[test]
    fn snapshot_round_trip(c in prop::collection::vec(-1e3f64..1e3, 20), time in 0.0f64..10.0) {
        let f = disk_fixture();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.hms");
        let s = SpectralField::new(f.basis.clone(), c).unwrap().at_time(time);
        s.write_snapshot(&path).unwrap();
        let back = SpectralField::read_snapshot(&path, f.basis.clone()).unwrap();
        prop_assert_eq!(back.coeffs, s.coeffs);
        prop_assert_eq!(back.time, s.time);
    }

    #[test]
    fn phi_theta_is_increasing(beta in 0.0f64..2.0, a in 1.0f64..1e6, factor in 1.01f64..100.0) {
        let theta = GrowthFunction::power(beta);
        prop_assert!(phi_theta(&theta, a * factor) >= phi_theta(&theta, a) * (1.0 - 1e-12));
    }

    #[test]
    fn tolerance_schedule_is_non_increasing(n in 1usize..200) {
        prop_assert!(tol(n + 1) <= tol(n));
    }
}

#[test]
fn tensor_dump_round_trip() {
    let f = disk_fixture();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.hmt");
    f.triads.write_dump(&path).unwrap();
    let back = TriadTensor::read_dump(&path).unwrap();
    assert_eq!(back.checksum(), f.triads.checksum());
    assert_eq!(back.nnz(), f.triads.nnz());
}

#[test]
fn corrupt_dump_is_rejected() {
    let f = disk_fixture();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.hmt");
    f.triads.write_dump(&path).unwrap();
    let mut bytes = std::fs::read(&path).unwrap();
    bytes.truncate(bytes.len() - 3);
    std::fs::write(&path, bytes).unwrap();
    assert!(TriadTensor::read_dump(&path).is_err());
}
