mod common;

use common::{
    adjacency, curvature_enumeration, curvature_lp, random_connected_edges, random_simplex, transport_enumeration,
    transport_lp,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ricci_ib::autodiff::Matrix;
use ricci_ib::graph::Graph;
use ricci_ib::ollivier::{mass_distribution, ollivier_ricci, solve_transport, wasserstein1, MassDistribution};

#[test]
fn lp_oracle_agrees_with_enumeration_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..30 {
        let (m, n) = (rng.random_range(1..=4), rng.random_range(1..=4));
        let mu = random_simplex(&mut rng, m);
        let nu = random_simplex(&mut rng, n);
        let cost: Vec<Vec<f64>> = (0..m).map(|_| (0..n).map(|_| rng.random_range(0..4) as f64).collect()).collect();
        let a = transport_lp(&mu, &nu, &cost);
        let b = transport_enumeration(&mu, &nu, &cost);
        assert!((a - b).abs() < 1e-10, "{a} vs {b}");
    }
}

#[test]
fn random_four_point_transport_matches_lp() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let mu = random_simplex(&mut rng, 4);
        let nu = random_simplex(&mut rng, 4);
        let pts: Vec<f64> = (0..4).map(|_| rng.random_range(0..6) as f64).collect();
        let qts: Vec<f64> = (0..4).map(|_| rng.random_range(0..6) as f64).collect();
        let cost: Vec<Vec<f64>> = pts.iter().map(|p| qts.iter().map(|q| (p - q).abs()).collect()).collect();
        let dense = Matrix::from_vec(4, 4, cost.iter().flatten().copied().collect()).unwrap();
        let (value, plan) = solve_transport(&mu, &nu, &dense).unwrap();
        assert!((value - transport_lp(&mu, &nu, &cost)).abs() < 1e-9);
        for i in 0..4 {
            let row: f64 = (0..4).map(|j| plan.get(i, j)).sum();
            assert!((row - mu[i]).abs() < 1e-12);
        }
        for j in 0..4 {
            let col: f64 = (0..4).map(|i| plan.get(i, j)).sum();
            assert!((col - nu[j]).abs() < 1e-12);
        }
    }
}

#[test]
fn point_mass_against_split_mass_on_path() {
    let cost = vec![vec![1.0, 1.0]];
    let oracle = transport_enumeration(&[1.0], &[0.5, 0.5], &cost);
    assert!((oracle - 1.0).abs() < 1e-12);
    let mu = MassDistribution {
        support: vec![1],
        weights: vec![1.0],
    };
    let nu = MassDistribution {
        support: vec![0, 2],
        weights: vec![0.5, 0.5],
    };
    let c = Matrix::from_vec(1, 2, vec![1.0, 1.0]).unwrap();
    assert!((wasserstein1(&mu, &nu, &c).unwrap() - oracle).abs() < 1e-12);
}

#[test]
fn anchors_match_enumeration() {
    let p3 = [(0, 1), (1, 2)];
    let k3 = [(0, 1), (0, 2), (1, 2)];
    let oracle_p3 = curvature_enumeration(&adjacency(3, &p3), 0, 1, 0.0);
    let oracle_k3 = curvature_enumeration(&adjacency(3, &k3), 0, 1, 0.0);
    assert!(oracle_p3.abs() < 1e-12);
    assert!((oracle_k3 - 0.5).abs() < 1e-12);

    let g = Graph::new(3, p3).unwrap();
    assert!((ollivier_ricci(&g, 0.0, 3).unwrap().get(0, 1).unwrap() - oracle_p3).abs() < 1e-12);
    let g = Graph::new(3, k3).unwrap();
    for (_, k) in ollivier_ricci(&g, 0.0, 3).unwrap().iter() {
        assert!((k - oracle_k3).abs() < 1e-12);
    }
    let k2 = Graph::new(2, [(0, 1)]).unwrap();
    assert_eq!(ollivier_ricci(&k2, 0.5, 3).unwrap().values, vec![1.0]);
}

#[test]
fn every_edge_of_random_graphs_matches_lp_oracle() {
    for seed in 0..50u64 {
        let n = 3 + (seed as usize % 10);
        let edges = random_connected_edges(seed, n);
        let adj = adjacency(n, &edges);
        let g = Graph::new(n, edges.iter().copied()).unwrap();
        for alpha in [0.0, 0.25, 0.5] {
            let map = ollivier_ricci(&g, alpha, 3).unwrap();
            assert_eq!(map.edges, g.edges());
            for ((i, j), k) in map.iter() {
                let oracle = curvature_lp(&adj, i, j, alpha);
                assert!((k - oracle).abs() < 1e-9, "seed {seed} alpha {alpha} edge ({i},{j}): {k} vs {oracle}");
                assert!(k <= 1.0 + 1e-12);
                let reverse = 1.0 - curvature_lp(&adj, j, i, alpha);
                assert!((1.0 - k - reverse).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn curvature_is_one_exactly_when_measures_coincide() {
    for seed in 0..20u64 {
        let n = 4 + (seed as usize % 6);
        let g = Graph::new(n, random_connected_edges(seed + 100, n)).unwrap();
        for alpha in [0.0, 0.5, 1.0 / 3.0] {
            for ((i, j), k) in ollivier_ricci(&g, alpha, 3).unwrap().iter() {
                let mi = mass_distribution(&g, i, alpha).unwrap();
                let mj = mass_distribution(&g, j, alpha).unwrap();
                let same = (0..n).all(|v| (mi.weight_of(v) - mj.weight_of(v)).abs() < 1e-15);
                assert_eq!(same, (k - 1.0).abs() < 1e-12, "seed {seed} edge ({i},{j}) kappa {k}");
            }
        }
    }
}

#[test]
fn enlarging_radius_cap_changes_nothing() {
    for seed in 0..20u64 {
        let n = 5 + (seed as usize % 7);
        let g = Graph::new(n, random_connected_edges(seed + 200, n)).unwrap();
        let base = ollivier_ricci(&g, 0.5, 3).unwrap();
        for cap in [4, 8, n + 1] {
            assert_eq!(ollivier_ricci(&g, 0.5, cap).unwrap(), base);
        }
    }
}
