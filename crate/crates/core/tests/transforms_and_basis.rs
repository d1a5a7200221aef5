use std::f64::consts::PI;

use dfr_core::basis::symbolic::{self, Poly};
use dfr_core::basis::{
    enumerate_modes, enumerate_modes_with_axis, gram_matrix, BasisFamily, BasisFunction, ModeIndex,
};
use dfr_core::transforms::{
    apply_separable, build_transform, naive_apply, SampleGrid, TransformKind,
};
use dfr_core::{Execution, MidpointGrid};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn kind_strategy() -> impl Strategy<Value = TransformKind> {
    prop_oneof![Just(TransformKind::Dst2), Just(TransformKind::Cst2)]
}

fn tensor_strategy() -> impl Strategy<Value = (SampleGrid, Vec<TransformKind>)> {
    prop::collection::vec(1usize..6, 1..=3).prop_flat_map(|dims| {
        let len: usize = dims.iter().product();
        let rank = dims.len();
        (
            prop::collection::vec(-10.0f64..10.0, len),
            prop::collection::vec(kind_strategy(), rank),
        )
            .prop_map(move |(values, kinds)| {
                (SampleGrid::new(dims.clone(), values).unwrap(), kinds)
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn separable_passes_equal_the_full_sum((grid, kinds) in tensor_strategy()) {
        let fast = apply_separable(&grid, &kinds, Execution::Sequential).unwrap();
        let slow = naive_apply(&grid, &kinds).unwrap();
        for (a, b) in fast.values().iter().zip(slow.values()) {
            prop_assert!((a - b).abs() < 1e-12 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn transforms_preserve_the_euclidean_norm((grid, kinds) in tensor_strategy()) {
        let out = apply_separable(&grid, &kinds, Execution::Sequential).unwrap();
        let n_in: f64 = grid.values().iter().map(|v| v * v).sum();
        let n_out: f64 = out.values().iter().map(|v| v * v).sum();
        prop_assert!((n_in - n_out).abs() < 1e-11 * (1.0 + n_in));
    }

    #[test]
    fn orthonormal_at_any_size(n in 1usize..48, kind in kind_strategy()) {
        prop_assert!(build_transform(n, kind).unwrap().orthonormality_defect() < 1e-12);
    }

    #[test]
    fn basis_curls_agree_with_symbolic_differentiation(
        k1 in 0u32..5, k2 in 0u32..5, k3 in 0u32..5, fam in 0u8..3, axis in 0usize..3,
        x in 0.05f64..3.0, y in 0.05f64..3.0, z in 0.05f64..3.0,
    ) {
        let family = [BasisFamily::Grad3D, BasisFamily::Tm3D, BasisFamily::Te3D][fam as usize];
        let mode = ModeIndex::new(family, &[k1, k2, k3]);
        prop_assume!(mode.is_valid(axis));
        let b = BasisFunction::new(mode, axis).unwrap();
        let p = [x, y, z];
        let h = 1e-6;
        let d = |c: usize, a: usize| {
            let mut q = p;
            q[a] += h;
            let up = b.evaluate(&q).unwrap()[c];
            q[a] -= 2.0 * h;
            (up - b.evaluate(&q).unwrap()[c]) / (2.0 * h)
        };
        let fd = [d(2, 1) - d(1, 2), d(0, 2) - d(2, 0), d(1, 0) - d(0, 1)];
        let exact = b.evaluate_curl(&p).unwrap();
        for m in 0..3 {
            prop_assert!((exact[m] - fd[m]).abs() < 1e-6 * (1.0 + exact[m].abs()));
        }
    }
}

#[test]
fn gram_2d_is_identity_at_256() {
    let modes = enumerate_modes(2, &[6, 6]).unwrap();
    let report = gram_matrix(
        &modes,
        &MidpointGrid::uniform(2, 256).unwrap(),
        Execution::default(),
    )
    .unwrap();
    assert!(report.max_deviation() < 1e-6, "{}", report.max_deviation());
    assert_eq!(report.per_family.len(), 2);
}

#[test]
fn gram_3d_is_identity_at_48() {
    let modes = enumerate_modes(3, &[2, 2, 2]).unwrap();
    let report = gram_matrix(
        &modes,
        &MidpointGrid::uniform(3, 48).unwrap(),
        Execution::default(),
    )
    .unwrap();
    assert!(report.max_deviation() < 1e-4, "{}", report.max_deviation());
}

/// Unit tangential trace on each face: boundary point, face axis and side.
fn random_boundary_points(dim: usize, count: usize, seed: u64) -> Vec<(Vec<f64>, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let face = rng.gen_range(0..dim);
            let mut p: Vec<f64> = (0..dim).map(|_| rng.gen_range(0.0..PI)).collect();
            p[face] = if rng.gen_bool(0.5) { 0.0 } else { PI };
            (p, face)
        })
        .collect()
}

#[test]
fn tangential_traces_vanish_on_the_boundary() {
    for (dim, cut) in [(2usize, 5u32), (3, 3)] {
        let funcs = enumerate_modes(dim, &vec![cut; dim]).unwrap().functions();
        for (p, face) in random_boundary_points(dim, 500, 7 + dim as u64) {
            for f in &funcs {
                let v = f.evaluate(&p).unwrap();
                for c in (0..dim).filter(|&c| c != face) {
                    assert!(v[c].abs() < 1e-12, "{:?} at {p:?}: {}", f.mode(), v[c]);
                }
            }
        }
    }
}

fn max_abs_difference(a: &[Poly], b: &[Poly], points: &[Vec<f64>]) -> f64 {
    points
        .iter()
        .flat_map(|p| {
            a.iter()
                .zip(b)
                .map(move |(x, y)| (x.eval(p) - y.eval(p)).abs())
        })
        .fold(0.0, f64::max)
}

#[test]
fn divergence_free_modes_are_eigenfunctions_of_curl_curl() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for (dim, cut) in [(2usize, 6u32), (3, 3)] {
        let points: Vec<Vec<f64>> = (0..20)
            .map(|_| (0..dim).map(|_| rng.gen_range(0.0..PI)).collect())
            .collect();
        for axis in 0..dim {
            let modes = enumerate_modes_with_axis(dim, &vec![cut; dim], axis).unwrap();
            for f in modes
                .functions()
                .iter()
                .filter(|f| !f.family().is_gradient())
            {
                let k2 = f.mode().norm_sq();
                let cc = f.curl_of_curl();
                let scaled: Vec<Poly> = f.value_components().iter().map(|p| p.scale(k2)).collect();
                let err = max_abs_difference(&cc, &scaled, &points);
                assert!(err < 1e-10, "{:?}: {err}", f.mode());
                let div = f.divergence();
                for p in &points {
                    assert!(div.eval(p).abs() < 1e-12);
                }
            }
        }
    }
}

#[test]
fn gradient_modes_are_curl_free() {
    for f in enumerate_modes(3, &[3, 3, 3]).unwrap().functions() {
        if f.family().is_gradient() {
            assert!(f.curl_components().iter().all(Poly::is_zero));
            assert!(symbolic::curl(f.value_components())
                .iter()
                .all(Poly::is_zero));
        }
    }
}

#[test]
fn distinguished_axis_is_equivalent_up_to_relabeling() {
    let a = enumerate_modes_with_axis(3, &[2, 2, 2], 0).unwrap();
    let c = enumerate_modes_with_axis(3, &[2, 2, 2], 2).unwrap();
    assert_eq!(a.len(), c.len());
    let grid = MidpointGrid::uniform(3, 12).unwrap();
    let report = gram_matrix(&c, &grid, Execution::Sequential).unwrap();
    assert!(report.max_deviation() < 1e-10);
}
