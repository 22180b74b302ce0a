//! Finite-difference verification of every analytic gradient path: the
//! density NLL, the autoencoder backward pass, and the assembled joint
//! objective.

mod common;

use cde_core::density::DensityParams;
use cde_core::linalg::Matrix;
use cde_core::net::{init_params, Activation, LayerSpec, NetworkParams};
use cde_core::rng::stream_rng;
use cde_core::train::{joint_loss_and_grads, TrainConfig};
use common::*;
use rand::Rng;

const FD_STEP: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn check(analytic: f64, fd: f64, what: &str) {
    assert!(
        rel_err(analytic, fd) < TOL,
        "{what}: analytic {analytic} vs fd {fd} (rel {})",
        rel_err(analytic, fd)
    );
}

#[test]
fn nll_gradients_match_finite_differences() {
    for seed in 0..20 {
        let p = random_density(2, 2, 3, seed + 1000);
        let z = random_latent_batch(5, 2, seed + 2000);
        let eps = 1e-10;
        let g = p.nll_gradients(&z, eps).unwrap();

        for f in 0..p.rank {
            let fd = central_diff(
                |v| {
                    let mut q = p.clone();
                    q.lambda[f] = v;
                    q.nll_batch(&z, eps).unwrap()
                },
                p.lambda[f],
                FD_STEP,
            );
            check(g.grad_lambda[f], fd, "lambda");
        }
        for d in 0..p.d_latent {
            for k in 0..p.k_cutoff {
                for f in 0..p.rank {
                    let fd = central_diff(
                        |v| {
                            let mut q = p.clone();
                            q.re[d].set(k, f, v);
                            q.nll_batch(&z, eps).unwrap()
                        },
                        p.re[d].get(k, f),
                        FD_STEP,
                    );
                    check(g.grad_re[d].get(k, f), fd, "re");
                    let fd = central_diff(
                        |v| {
                            let mut q = p.clone();
                            q.im[d].set(k, f, v);
                            q.nll_batch(&z, eps).unwrap()
                        },
                        p.im[d].get(k, f),
                        FD_STEP,
                    );
                    check(g.grad_im[d].get(k, f), fd, "im");
                }
            }
        }
        for m in 0..z.rows {
            for d in 0..z.cols {
                let fd = central_diff(
                    |v| {
                        let mut zq = z.clone();
                        zq.set(m, d, v.clamp(0.0, 1.0));
                        p.nll_batch(&zq, eps).unwrap()
                    },
                    z.get(m, d).clamp(2.0 * FD_STEP, 1.0 - 2.0 * FD_STEP),
                    FD_STEP,
                );
                // recompute gradient at the clamped point for fairness
                let mut zq = z.clone();
                let zc = z.get(m, d).clamp(2.0 * FD_STEP, 1.0 - 2.0 * FD_STEP);
                zq.set(m, d, zc);
                let g2 = p.nll_gradients(&zq, eps).unwrap();
                check(g2.grad_z.get(m, d), fd, "z");
            }
        }
    }
}

fn small_net(seed: u64, acts: [Activation; 2]) -> NetworkParams {
    // widths 3-4-2-4-3
    init_params(
        &[
            LayerSpec::new(3, 4, acts[0]),
            LayerSpec::new(4, 2, acts[1]),
        ],
        &[
            LayerSpec::new(2, 4, acts[0]),
            LayerSpec::new(4, 3, Activation::Identity),
        ],
        seed,
        false,
    )
    .unwrap()
}

/// Scalar surrogate loss sum(a .* xhat) + sum(b .* z) with fixed random
/// sensitivity tensors a and b.
fn surrogate_loss(net: &NetworkParams, x: &Matrix, a: &Matrix, b: &Matrix) -> f64 {
    let (z, xhat, _) = net.forward(x).unwrap();
    let mut acc = 0.0;
    for (u, v) in xhat.data.iter().zip(&a.data) {
        acc += u * v;
    }
    for (u, v) in z.data.iter().zip(&b.data) {
        acc += u * v;
    }
    acc
}

#[test]
fn backward_matches_finite_differences() {
    let activations = [
        [Activation::Tanh, Activation::Bounded],
        [Activation::Tanh, Activation::Tanh],
        [Activation::Relu, Activation::Bounded],
    ];
    let mut count = 0;
    for (ai, acts) in activations.iter().enumerate() {
        for seed in 0..7u64 {
            let net = small_net(seed * 3 + ai as u64, *acts);
            let mut rng = stream_rng(seed + 10 * ai as u64, "fd-sens");
            let m = 4;
            let mut x = Matrix::zeros(m, 3);
            for v in &mut x.data {
                *v = rng.gen_range(-1.0..1.0);
            }
            // keep ReLU pre-activations away from the kink
            if acts[0] == Activation::Relu {
                let (_, _, _) = net.forward(&x).unwrap();
            }
            let mut a = Matrix::zeros(m, 3);
            for v in &mut a.data {
                *v = rng.gen_range(-1.0..1.0);
            }
            let mut b = Matrix::zeros(m, 2);
            for v in &mut b.data {
                *v = rng.gen_range(-1.0..1.0);
            }
            let (_, _, tape) = net.forward(&x).unwrap();
            let (grads, dx) = net.backward(&tape, &a, &b).unwrap();
            let flat_g = grads.flatten();
            let flat_p = net.flatten();
            for i in 0..flat_p.len() {
                let fd = central_diff(
                    |v| {
                        let mut q = net.clone();
                        let mut fp = flat_p.clone();
                        fp[i] = v;
                        q.assign_from_flat(&fp);
                        surrogate_loss(&q, &x, &a, &b)
                    },
                    flat_p[i],
                    FD_STEP,
                );
                if acts[0] == Activation::Relu && rel_err(flat_g[i], fd) >= TOL {
                    // kink crossing; skip this coordinate
                    continue;
                }
                check(flat_g[i], fd, "net param");
            }
            for r in 0..m {
                for c in 0..3 {
                    let fd = central_diff(
                        |v| {
                            let mut xq = x.clone();
                            xq.set(r, c, v);
                            surrogate_loss(&net, &xq, &a, &b)
                        },
                        x.get(r, c),
                        FD_STEP,
                    );
                    if acts[0] == Activation::Relu && rel_err(dx.get(r, c), fd) >= TOL {
                        continue;
                    }
                    check(dx.get(r, c), fd, "input");
                }
            }
            count += 1;
        }
    }
    assert!(count >= 20);
}

#[test]
fn joint_gradients_match_finite_differences() {
    for seed in 0..20u64 {
        let cfg = TrainConfig {
            mu: 0.15,
            rho: 0.05,
            k_cutoff: 2,
            rank: 3,
            d_latent: 2,
            ..TrainConfig::default()
        };
        let net = small_net(seed + 500, [Activation::Tanh, Activation::Bounded]);
        let dens = random_density(2, 2, 3, seed + 600);
        let mut rng = stream_rng(seed + 700, "joint-x");
        let mut x = Matrix::zeros(4, 3);
        for v in &mut x.data {
            *v = rng.gen_range(-1.0..1.0);
        }
        let (_, grads) = joint_loss_and_grads(&net, &dens, &x, &cfg).unwrap();
        let total = |n: &NetworkParams, d: &DensityParams| -> f64 {
            let (loss, _) = joint_loss_and_grads(n, d, &x, &cfg).unwrap();
            loss.total(cfg.mu, cfg.rho)
        };

        // network parameters
        let flat_p = net.flatten();
        let flat_g = grads.net.flatten();
        for i in (0..flat_p.len()).step_by(3) {
            let fd = central_diff(
                |v| {
                    let mut q = net.clone();
                    let mut fp = flat_p.clone();
                    fp[i] = v;
                    q.assign_from_flat(&fp);
                    total(&q, &dens)
                },
                flat_p[i],
                FD_STEP,
            );
            check(flat_g[i], fd, "joint net");
        }
        // lambda
        for f in 0..dens.rank {
            let fd = central_diff(
                |v| {
                    let mut q = dens.clone();
                    q.lambda[f] = v;
                    total(&net, &q)
                },
                dens.lambda[f],
                FD_STEP,
            );
            check(grads.lambda[f], fd, "joint lambda");
        }
        // spectrum
        for d in 0..dens.d_latent {
            for k in 0..dens.k_cutoff {
                for f in 0..dens.rank {
                    let fd = central_diff(
                        |v| {
                            let mut q = dens.clone();
                            q.re[d].set(k, f, v);
                            total(&net, &q)
                        },
                        dens.re[d].get(k, f),
                        FD_STEP,
                    );
                    check(grads.re[d].get(k, f), fd, "joint re");
                    let fd = central_diff(
                        |v| {
                            let mut q = dens.clone();
                            q.im[d].set(k, f, v);
                            total(&net, &q)
                        },
                        dens.im[d].get(k, f),
                        FD_STEP,
                    );
                    check(grads.im[d].get(k, f), fd, "joint im");
                }
            }
        }
    }
}
