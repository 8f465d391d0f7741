mod common;

use common::*;
use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use relaynet::{CovarianceMap, VariableId};

/// Random PSD map and a random assignment of each variable to one of four
/// groups (A, B, C, D).
fn setup(seed: u64, dim: usize, groups: &[u8]) -> (CovarianceMap, [Vec<VariableId>; 4]) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vars = labels(dim);
    let map = CovarianceMap::new(random_psd(&mut rng, dim, 0.05), vars.clone()).unwrap();
    let mut g: [Vec<VariableId>; 4] = Default::default();
    for (v, k) in vars.iter().zip(groups) {
        g[*k as usize].push(*v);
    }
    (map, g)
}

fn cat(a: &[VariableId], b: &[VariableId]) -> Vec<VariableId> {
    a.iter().chain(b).copied().collect()
}

fn mi(map: &CovarianceMap, a: &[VariableId], b: &[VariableId], c: &[VariableId]) -> f64 {
    if a.is_empty() || b.is_empty() {
        0.0
    } else {
        map.conditional_mi(a, b, c).unwrap()
    }
}

fn case() -> impl Strategy<Value = (u64, usize, Vec<u8>)> {
    (any::<u64>(), 2usize..=8).prop_flat_map(|(s, d)| (Just(s), Just(d), prop::collection::vec(0u8..4, d)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn matches_determinant_oracle((seed, dim, groups) in case()) {
        let (map, [a, b, c, _]) = setup(seed, dim, &groups);
        prop_assume!(!a.is_empty() && !b.is_empty());
        let got = map.conditional_mi(&a, &b, &c).unwrap();
        prop_assert!((got - mi_bits(&map, &a, &b, &c).max(0.0)).abs() < 1e-8);
    }

    #[test]
    fn chain_rule((seed, dim, groups) in case()) {
        let (map, [a, b, c, d]) = setup(seed, dim, &groups);
        let whole = mi(&map, &a, &cat(&b, &d), &c);
        let split = mi(&map, &a, &b, &c) + mi(&map, &a, &d, &cat(&b, &c));
        prop_assert!((whole - split).abs() < 1e-8, "{} vs {}", whole, split);
    }

    #[test]
    fn symmetric((seed, dim, groups) in case()) {
        let (map, [a, b, c, _]) = setup(seed, dim, &groups);
        prop_assert!((mi(&map, &a, &b, &c) - mi(&map, &b, &a, &c)).abs() < 1e-9);
    }

    #[test]
    fn nonnegative((seed, dim, groups) in case()) {
        let (map, [a, b, c, _]) = setup(seed, dim, &groups);
        prop_assert!(mi(&map, &a, &b, &c) >= 0.0);
    }

    #[test]
    fn invariant_under_variable_order((seed, dim, groups) in case(), rot in 0usize..8) {
        let (map, [a, b, c, _]) = setup(seed, dim, &groups);
        let perm: Vec<usize> = (0..dim).map(|i| (i + rot) % dim).collect();
        let m = map.matrix();
        let permuted = DMatrix::from_fn(dim, dim, |i, j| m[(perm[i], perm[j])]);
        let vars: Vec<VariableId> = perm.iter().map(|&i| map.variables()[i]).collect();
        let other = CovarianceMap::new(permuted, vars).unwrap();
        prop_assert!((mi(&map, &a, &b, &c) - mi(&other, &a, &b, &c)).abs() < 1e-9);
    }

    #[test]
    fn data_processing(g1 in 0.1f64..10.0, g2 in 0.1f64..10.0, n1 in 0.1f64..4.0, n2 in 0.1f64..4.0) {
        // X → Y = g1 X + N1 → Z = g2 Y + N2
        let (vx, vy) = (1.0, g1 * g1 + n1);
        let vz = g2 * g2 * vy + n2;
        let r = |x: f64| Complex64::new(x, 0.0);
        let m = DMatrix::from_row_slice(3, 3, &[
            r(vx), r(g1), r(g1 * g2),
            r(g1), r(vy), r(g2 * vy),
            r(g1 * g2), r(g2 * vy), r(vz),
        ]);
        let vars = labels(3);
        let map = CovarianceMap::new(m, vars.clone()).unwrap();
        let (x, y, z) = ([vars[0]], [vars[1]], [vars[2]]);
        let ixy = mi(&map, &x, &y, &[]);
        let ixz = mi(&map, &x, &z, &[]);
        prop_assert!(ixz <= ixy + 1e-12);
        prop_assert!(mi(&map, &x, &z, &y) < 1e-9);
    }

    #[test]
    fn scaling_a_variable_changes_nothing((seed, dim, groups) in case(), s in 0.01f64..100.0, phase in 0.0f64..std::f64::consts::TAU) {
        let (map, [a, b, c, _]) = setup(seed, dim, &groups);
        let g = Complex64::from_polar(s, phase);
        let m = map.matrix();
        let scale = |i: usize| if i == 0 { g } else { Complex64::new(1.0, 0.0) };
        let scaled = DMatrix::from_fn(dim, dim, |i, j| scale(i) * m[(i, j)] * scale(j).conj());
        let other = CovarianceMap::new(scaled, map.variables().to_vec()).unwrap();
        prop_assert!((mi(&map, &a, &b, &c) - mi(&other, &a, &b, &c)).abs() < 1e-8);
    }
}
