//! Shared oracles for the integration tests: a brute-force full-tensor
//! density evaluator, central finite differences, and small random model
//! builders. Everything here is independent of the library's evaluation
//! paths it checks.

#![allow(dead_code)]

use cde_core::density::DensityParams;
use cde_core::linalg::Matrix;
use cde_core::rng::stream_rng;
use rand::Rng;
use std::f64::consts::PI;

#[derive(Clone, Copy, Debug)]
pub struct C64 {
    pub re: f64,
    pub im: f64,
}

impl C64 {
    pub fn new(re: f64, im: f64) -> Self {
        C64 { re, im }
    }
    pub fn conj(self) -> Self {
        C64::new(self.re, -self.im)
    }
    pub fn mul(self, o: C64) -> C64 {
        C64::new(
            self.re * o.re - self.im * o.im,
            self.re * o.im + self.im * o.re,
        )
    }
    pub fn add(self, o: C64) -> C64 {
        C64::new(self.re + o.re, self.im + o.im)
    }
    pub fn scale(self, s: f64) -> C64 {
        C64::new(self.re * s, self.im * s)
    }
}

/// Full factor-matrix entry A_d(k, f) for k in [-K, K], reconstructing the
/// origin pin and conjugate symmetry from the half spectrum.
pub fn factor_entry(p: &DensityParams, d: usize, k: i64, f: usize) -> C64 {
    if k == 0 {
        C64::new(1.0, 0.0)
    } else if k > 0 {
        C64::new(p.re[d].get(k as usize - 1, f), p.im[d].get(k as usize - 1, f))
    } else {
        factor_entry(p, d, -k, f).conj()
    }
}

/// Direct sum over the materialized (2K+1)^D coefficient tensor:
/// f(z) = sum_k [sum_f lambda_f prod_d A_d(k_d, f)] e^{-j 2 pi k.z}.
pub fn brute_force_density(p: &DensityParams, z: &[f64]) -> C64 {
    let k = p.k_cutoff as i64;
    let dl = p.d_latent;
    let mut index = vec![-k; dl];
    let mut total = C64::new(0.0, 0.0);
    loop {
        // coefficient at this multi-index
        let mut coef = C64::new(0.0, 0.0);
        for f in 0..p.rank {
            let mut prod = C64::new(p.lambda[f], 0.0);
            for d in 0..dl {
                prod = prod.mul(factor_entry(p, d, index[d], f));
            }
            coef = coef.add(prod);
        }
        let theta: f64 = index
            .iter()
            .zip(z)
            .map(|(&kd, &zd)| 2.0 * PI * kd as f64 * zd)
            .sum();
        // e^{-j theta}
        let basis = C64::new(theta.cos(), -theta.sin());
        total = total.add(coef.mul(basis));
        // advance multi-index
        let mut d = 0;
        loop {
            if d == dl {
                return total;
            }
            index[d] += 1;
            if index[d] <= k {
                break;
            }
            index[d] = -k;
            d += 1;
        }
    }
}

/// Brute-force Euclidean projection onto the 3-simplex over a fine grid.
pub fn brute_force_simplex_3(v: &[f64], steps: usize) -> Vec<f64> {
    assert_eq!(v.len(), 3);
    let mut best = vec![1.0, 0.0, 0.0];
    let mut best_d = f64::INFINITY;
    for i in 0..=steps {
        for j in 0..=(steps - i) {
            let a = i as f64 / steps as f64;
            let b = j as f64 / steps as f64;
            let c = 1.0 - a - b;
            let d = (a - v[0]).powi(2) + (b - v[1]).powi(2) + (c - v[2]).powi(2);
            if d < best_d {
                best_d = d;
                best = vec![a, b, c];
            }
        }
    }
    best
}

/// Central finite difference of a scalar function along one coordinate.
pub fn central_diff<F: FnMut(f64) -> f64>(mut f: F, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-4)
}

/// Random valid density model with coefficient magnitudes small enough that
/// the density stays comfortably positive (no floor clamping in tests).
pub fn random_density(d_latent: usize, k_cutoff: usize, rank: usize, seed: u64) -> DensityParams {
    let mut p = DensityParams::uniform(d_latent, k_cutoff, rank);
    let mut rng = stream_rng(seed, "oracle-density");
    let mut lambda: Vec<f64> = (0..rank).map(|_| rng.gen::<f64>() + 0.1).collect();
    let s: f64 = lambda.iter().sum();
    for l in &mut lambda {
        *l /= s;
    }
    p.lambda = lambda;
    let budget = 0.35 / (k_cutoff.max(1) as f64);
    for d in 0..d_latent {
        for k in 0..k_cutoff {
            for f in 0..rank {
                p.re[d].set(k, f, (rng.gen::<f64>() - 0.5) * budget);
                p.im[d].set(k, f, (rng.gen::<f64>() - 0.5) * budget);
            }
        }
    }
    p
}

pub fn random_latent_batch(rows: usize, d_latent: usize, seed: u64) -> Matrix {
    let mut rng = stream_rng(seed, "oracle-latent");
    let mut m = Matrix::zeros(rows, d_latent);
    for v in &mut m.data {
        *v = rng.gen::<f64>();
    }
    m
}
