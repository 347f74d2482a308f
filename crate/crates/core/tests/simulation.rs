mod common;

use nalgebra::{DMatrix, DVector};
use pcltl::simulation::{
    cell_seed, generate_design, generate_response, newhouse_oman_beta, summarize, CellSetup,
};
use pcltl::{simulate_cell, EstimatorKind, SimulationConfig, StudyGrid};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn column_correlation(x: &DMatrix<f64>, a: usize, b: usize) -> f64 {
    let n = x.nrows() as f64;
    let (ca, cb) = (x.column(a), x.column(b));
    let (ma, mb) = (ca.sum() / n, cb.sum() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for i in 0..x.nrows() {
        let (u, v) = (ca[i] - ma, cb[i] - mb);
        sab += u * v;
        saa += u * u;
        sbb += v * v;
    }
    sab / (saa * sbb).sqrt()
}

#[test]
fn design_correlation_approaches_rho_squared() {
    let n = 100_000;
    for &rho in &[0.5, 0.9, 0.999] {
        let x = generate_design(n, 4, rho, &mut ChaCha20Rng::seed_from_u64(3));
        let target: f64 = rho * rho;
        // asymptotic sd of a sample correlation under normality
        let sigma = (1.0 - target * target) / (n as f64).sqrt();
        for a in 0..4 {
            for b in a + 1..4 {
                let r = column_correlation(&x, a, b);
                assert!((r - target).abs() < 0.01, "rho={rho}: r={r}");
                assert!(
                    (r - target).abs() < 3.0 * sigma + 1e-12,
                    "rho={rho}: r={r}, 3sigma={}",
                    3.0 * sigma
                );
            }
        }
    }
}

#[test]
fn design_is_reproducible_and_rho_zero_is_plain_normal() {
    let a = generate_design(50, 3, 0.9, &mut ChaCha20Rng::seed_from_u64(1));
    let b = generate_design(50, 3, 0.9, &mut ChaCha20Rng::seed_from_u64(1));
    assert_eq!(a, b);
    let x0 = generate_design(5, 2, 0.0, &mut ChaCha20Rng::seed_from_u64(2));
    let mut rng = ChaCha20Rng::seed_from_u64(2);
    for i in 0..5 {
        for j in 0..2 {
            let z: f64 = rand::Rng::sample(&mut rng, rand_distr::StandardNormal);
            assert_eq!(x0[(i, j)], z);
        }
        let _shared: f64 = rand::Rng::sample(&mut rng, rand_distr::StandardNormal);
    }
}

fn power_iteration(m: &DMatrix<f64>) -> DVector<f64> {
    let mut v = DVector::from_element(m.nrows(), 1.0).normalize();
    for _ in 0..5000 {
        let w = (m * &v).normalize();
        if (&w - &v).amax() < 1e-15 {
            return w;
        }
        v = w;
    }
    v
}

#[test]
fn newhouse_oman_matches_power_iteration() {
    for (seed, p, rho) in [(1u64, 4, 0.99), (2, 8, 0.999), (3, 6, 0.9), (4, 12, 0.8)] {
        let x = generate_design(500, p, rho, &mut ChaCha20Rng::seed_from_u64(seed));
        let beta = newhouse_oman_beta(&x).unwrap();
        assert!((beta.norm() - 1.0).abs() < 1e-12);
        let mut oracle = power_iteration(&x.tr_mul(&x));
        if oracle.iamax() != beta.iamax() || oracle[oracle.iamax()] < 0.0 {
            oracle = -oracle;
        }
        assert!((&beta - &oracle).amax() < 1e-8, "p={p} rho={rho}");
        if rho >= 0.99 {
            let equi = 1.0 / (p as f64).sqrt();
            assert!(beta.iter().all(|b| (b - equi).abs() < 0.05), "{beta}");
        }
    }
    let diag = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]);
    assert_eq!(
        newhouse_oman_beta(&diag).unwrap(),
        DVector::from_vec(vec![1.0, 0.0])
    );
    let degenerate = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]);
    assert!(newhouse_oman_beta(&degenerate).is_err());
}

#[test]
fn response_draws() {
    let n = 4000;
    let x = generate_design(n, 2, 0.5, &mut ChaCha20Rng::seed_from_u64(9));
    let zero = DVector::zeros(2);
    let y = generate_response(&x, &zero, &mut ChaCha20Rng::seed_from_u64(10));
    let mean = y.sum() / n as f64;
    assert!((mean - 0.5).abs() < 3.0 * (0.25 / n as f64).sqrt());
    let y2 = generate_response(&x, &zero, &mut ChaCha20Rng::seed_from_u64(10));
    assert_eq!(y, y2);

    let ones = DMatrix::from_element(100, 1, 1.0);
    let y = generate_response(
        &ones,
        &DVector::from_element(1, 50.0),
        &mut ChaCha20Rng::seed_from_u64(11),
    );
    assert!(y.iter().all(|&v| v == 1.0));
}

#[test]
fn streamed_mse_matches_two_pass_accumulation() {
    let config = SimulationConfig {
        p: 4,
        n: 200,
        rho: 0.8,
        replications: 100,
        ..Default::default()
    };
    let streamed = simulate_cell(&config).unwrap();
    let setup = CellSetup::new(&config).unwrap();
    let stored: Vec<_> = (0..config.replications)
        .filter_map(|c| setup.replicate(&config, c))
        .collect();
    assert_eq!(stored.len(), streamed.converged_replications);
    for (i, kind) in EstimatorKind::ALL.iter().enumerate() {
        // second pass: mean of the squared error of each stored estimate against the true beta
        let mut total = 0.0;
        for o in &stored {
            let e = &o.estimates[i] - &setup.beta;
            total += e.dot(&e);
        }
        let two_pass = total / stored.len() as f64;
        assert!((two_pass - streamed.mse_of(*kind)).abs() < 1e-10, "{kind:?}");
    }
    assert_eq!(streamed.true_beta, setup.beta.iter().copied().collect::<Vec<_>>());
}

#[test]
fn exact_estimate_gives_zero_mse() {
    let config = SimulationConfig {
        replications: 1,
        ..Default::default()
    };
    let setup = CellSetup::new(&config).unwrap();
    let mut o = setup.replicate(&config, 0).unwrap();
    o.estimates[0] = setup.beta.clone();
    let r = summarize(&config, &setup.beta, &[Some(o)]).unwrap();
    assert_eq!(r.mse_of(EstimatorKind::Ml), 0.0);
    assert!(summarize(&config, &setup.beta, &[None, None]).is_err());
}

#[test]
fn serial_and_parallel_agree() {
    let base = SimulationConfig {
        p: 6,
        n: 200,
        rho: 0.99,
        replications: 60,
        ..Default::default()
    };
    let par = simulate_cell(&SimulationConfig {
        parallel: true,
        ..base
    })
    .unwrap();
    let ser = simulate_cell(&SimulationConfig {
        parallel: false,
        ..base
    })
    .unwrap();
    assert_eq!(
        serde_json::to_string(&par).unwrap(),
        serde_json::to_string(&ser).unwrap()
    );
}

#[test]
fn cells_have_distinct_seeds() {
    let grid = StudyGrid::default();
    let cells = grid.cells(&SimulationConfig::default());
    assert_eq!(cells.len(), 48);
    let mut seeds: Vec<_> = cells.iter().map(|c| cell_seed(c.seed, c.p, c.n, c.rho)).collect();
    seeds.sort();
    seeds.dedup();
    assert_eq!(seeds.len(), 48);
    for c in &cells {
        assert_eq!(c.ptv_threshold, if c.p == 6 { 0.83 } else { 0.75 });
    }
}

#[test]
fn ml_mse_tracks_asymptotic_trace() {
    let config = SimulationConfig {
        p: 4,
        n: 1000,
        rho: 0.8,
        replications: 400,
        ..Default::default()
    };
    let r = simulate_cell(&config).unwrap();
    let ratio = r.mse_of(EstimatorKind::Ml) / r.mean_asymptotic_ml_smse;
    assert!((ratio - 1.0).abs() < 0.2, "simulated / asymptotic = {ratio}");
}
