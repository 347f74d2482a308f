#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use pcltl::simulation::{generate_design, generate_response};
use pcltl::{Dataset, LogisticFit};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_vec(rng: &mut ChaCha8Rng, p: usize) -> DVector<f64> {
    DVector::from_iterator(p, (0..p).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

pub fn unit_vec(rng: &mut ChaCha8Rng, p: usize) -> DVector<f64> {
    normal_vec(rng, p).normalize()
}

/// Random symmetric positive definite matrix with eigenvalues spread over [0.05, 20].
pub fn random_spd(rng: &mut ChaCha8Rng, p: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(p, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let q = a.qr().q();
    let l = DVector::from_iterator(p, (0..p).map(|_| 0.05 + 20.0 * rng.random::<f64>()));
    let m = &q * DMatrix::from_diagonal(&l) * q.transpose();
    (&m + m.transpose()) * 0.5
}

/// Correlated design with a random unit coefficient vector and Bernoulli response.
pub fn random_dataset(
    rng: &mut ChaCha8Rng,
    n: usize,
    p: usize,
    rho: f64,
    scale: f64,
) -> (Dataset, DVector<f64>) {
    let x = generate_design(n, p, rho, rng);
    let beta = unit_vec(rng, p) * scale;
    let y = generate_response(&x, &beta, rng);
    (Dataset::new(x, y).unwrap(), beta)
}

/// Synthetic plug-in fit with prescribed weights and working response.
pub fn synthetic_fit(p: usize, v_diag: DVector<f64>, z: DVector<f64>) -> LogisticFit {
    LogisticFit {
        beta: DVector::zeros(p),
        v_diag,
        z,
        iterations: 1,
        converged: true,
        final_step_norm: 0.0,
        log_likelihood_trace: vec![0.0],
    }
}

fn loglik(x: &DMatrix<f64>, y: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (0..x.nrows())
        .map(|i| {
            let eta: f64 = x.row(i).iter().zip(b.iter()).map(|(a, c)| a * c).sum();
            // y*eta - log(1 + e^eta), computed stably
            y[i] * eta
                - if eta > 0.0 {
                    eta + (-eta).exp().ln_1p()
                } else {
                    eta.exp().ln_1p()
                }
        })
        .sum()
}

fn gradient(x: &DMatrix<f64>, y: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
    let mut g = DVector::zeros(x.ncols());
    for i in 0..x.nrows() {
        let eta: f64 = x.row(i).iter().zip(b.iter()).map(|(a, c)| a * c).sum();
        let pi = 1.0 / (1.0 + (-eta).exp());
        for j in 0..x.ncols() {
            g[j] += x[(i, j)] * (y[i] - pi);
        }
    }
    g
}

/// Likelihood maximizer independent of the IRLS code: Newton steps on a
/// finite-difference Hessian of the analytic gradient, with backtracking on
/// the raw log-likelihood.
pub fn brute_force_mle(x: &DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
    let p = x.ncols();
    let mut b = DVector::zeros(p);
    let h = 1e-5;
    for _ in 0..200 {
        let g = gradient(x, y, &b);
        if g.amax() < 1e-11 {
            break;
        }
        let mut hess = DMatrix::zeros(p, p);
        for j in 0..p {
            let mut bp = b.clone();
            let mut bm = b.clone();
            bp[j] += h;
            bm[j] -= h;
            let col = (gradient(x, y, &bp) - gradient(x, y, &bm)) / (2.0 * h);
            hess.set_column(j, &col);
        }
        let hess = (&hess + hess.transpose()) * 0.5;
        let step = hess
            .lu()
            .solve(&(-&g))
            .expect("finite-difference Hessian is invertible");
        let base = loglik(x, y, &b);
        let mut t = 1.0;
        while loglik(x, y, &(&b + &step * t)) < base && t > 1e-8 {
            t *= 0.5;
        }
        b += step * t;
    }
    b
}

pub fn max_abs_diff(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).amax()
}
