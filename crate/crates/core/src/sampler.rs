//! Sampling from the learned mixture of product densities: draw the hidden
//! component from lambda, then each latent coordinate by inverse-transform
//! sampling on a discretized per-component marginal CDF, and decode.

use crate::density::DensityParams;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::net::NetworkParams;
use crate::rng::indexed_rng;
use rand::Rng;
use rayon::prelude::*;
use std::f64::consts::PI;

pub const DEFAULT_GRID_SIZE: usize = 1024;

/// Discretized marginal density and CDF of latent dimension `dimension`
/// conditioned on mixture component `component`. Negative density values are
/// clipped to zero and the rest renormalized by the trapezoidal integral.
#[derive(Clone, Debug)]
pub struct GridCdf {
    pub component: usize,
    pub dimension: usize,
    pub density: Vec<f64>,
    pub cdf: Vec<f64>,
    /// Set when the clipped density was identically zero and the grid fell
    /// back to the uniform density.
    pub degenerate: bool,
}

/// Unclipped conditional density g(z) = 1 + 2 sum_k [Re c cos + Im c sin].
fn conditional_density(dens: &DensityParams, d: usize, f: usize, z: f64) -> f64 {
    let mut v = 1.0;
    for k in 1..=dens.k_cutoff {
        let theta = 2.0 * PI * k as f64 * z;
        let (s, c) = theta.sin_cos();
        v += 2.0 * (dens.re[d].get(k - 1, f) * c + dens.im[d].get(k - 1, f) * s);
    }
    v
}

pub fn conditional_grid_cdf(
    dens: &DensityParams,
    d: usize,
    f: usize,
    grid_size: usize,
) -> Result<GridCdf> {
    if d >= dens.d_latent || f >= dens.rank {
        return Err(Error::InvalidArgument(format!(
            "grid CDF indices out of range: d={d}, f={f}"
        )));
    }
    if grid_size < 16 {
        return Err(Error::InvalidArgument("grid size must be >= 16".into()));
    }
    let s = grid_size;
    let mut density: Vec<f64> = (0..s)
        .map(|i| conditional_density(dens, d, f, i as f64 / (s - 1) as f64).max(0.0))
        .collect();
    // trapezoidal integral of the clipped density
    let h = 1.0 / (s - 1) as f64;
    let mut integral = 0.0;
    for w in density.windows(2) {
        integral += 0.5 * h * (w[0] + w[1]);
    }
    // the true integral of a usable clipped density is near 1; treat
    // vanishing mass as all-zero
    let degenerate = integral <= 1e-12;
    if degenerate {
        density = vec![1.0; s];
        integral = 1.0;
    }
    for v in &mut density {
        *v /= integral;
    }
    let mut cdf = vec![0.0; s];
    for i in 1..s {
        cdf[i] = cdf[i - 1] + 0.5 * h * (density[i - 1] + density[i]);
    }
    // kill rounding residue at the right endpoint
    let last = cdf[s - 1];
    for v in &mut cdf {
        *v /= last;
    }
    cdf[0] = 0.0;
    cdf[s - 1] = 1.0;
    Ok(GridCdf {
        component: f,
        dimension: d,
        density,
        cdf,
        degenerate,
    })
}

/// Exact antiderivative of the unclipped conditional density:
/// z + (1/pi) sum_k (1/k) [Re c sin(2 pi k z) + Im c (1 - cos(2 pi k z))].
pub fn conditional_cdf_analytic(dens: &DensityParams, d: usize, f: usize, z: f64) -> f64 {
    let mut v = z;
    for k in 1..=dens.k_cutoff {
        let kf = k as f64;
        let theta = 2.0 * PI * kf * z;
        v += (dens.re[d].get(k - 1, f) * theta.sin()
            + dens.im[d].get(k - 1, f) * (1.0 - theta.cos()))
            / (PI * kf);
    }
    v
}

fn invert(grid: &GridCdf, u: f64) -> f64 {
    let cdf = &grid.cdf;
    let s = cdf.len();
    // first node with cdf >= u
    let idx = cdf.partition_point(|&c| c < u);
    let z = if idx == 0 {
        0.0
    } else {
        let (lo, hi) = (cdf[idx - 1], cdf[idx]);
        let frac = if hi > lo { (u - lo) / (hi - lo) } else { 0.0 };
        ((idx - 1) as f64 + frac) / (s - 1) as f64
    };
    z.clamp(1e-12, 1.0 - 1e-12)
}

/// Precomputed grid tables for every (component, dimension) pair.
pub struct SamplerTables {
    grids: Vec<GridCdf>, // f * D + d
    d_latent: usize,
    lambda_cum: Vec<f64>,
}

impl SamplerTables {
    pub fn build(dens: &DensityParams, grid_size: usize) -> Result<Self> {
        let mut grids = Vec::with_capacity(dens.rank * dens.d_latent);
        for f in 0..dens.rank {
            for d in 0..dens.d_latent {
                grids.push(conditional_grid_cdf(dens, d, f, grid_size)?);
            }
        }
        let mut lambda_cum = Vec::with_capacity(dens.rank);
        let mut acc = 0.0;
        for &l in &dens.lambda {
            acc += l;
            lambda_cum.push(acc);
        }
        Ok(SamplerTables {
            grids,
            d_latent: dens.d_latent,
            lambda_cum,
        })
    }

    fn draw_row<R: Rng>(&self, rng: &mut R) -> (usize, Vec<f64>) {
        let u: f64 = rng.gen();
        let f = self
            .lambda_cum
            .partition_point(|&c| c < u)
            .min(self.lambda_cum.len() - 1);
        let row = (0..self.d_latent)
            .map(|d| invert(&self.grids[f * self.d_latent + d], rng.gen()))
            .collect();
        (f, row)
    }
}

/// Like `sample_latent` but also reports which mixture component generated
/// each row.
pub fn sample_latent_with_components(
    dens: &DensityParams,
    m: usize,
    seed: u64,
) -> Result<(Matrix, Vec<usize>)> {
    if m == 0 {
        return Err(Error::Empty("sample_latent with zero samples".into()));
    }
    dens.validate()?;
    let tables = SamplerTables::build(dens, DEFAULT_GRID_SIZE)?;
    let drawn: Vec<(usize, Vec<f64>)> = (0..m)
        .into_par_iter()
        .map(|i| {
            let mut rng = indexed_rng(seed, "sample", i as u64);
            tables.draw_row(&mut rng)
        })
        .collect();
    let comps = drawn.iter().map(|(f, _)| *f).collect();
    let rows = drawn.into_iter().map(|(_, r)| r).collect();
    Ok((Matrix::from_rows(rows), comps))
}

/// M latent samples, deterministic under the seed. Each sample uses its own
/// seeded substream so rows are independent of evaluation order.
pub fn sample_latent(dens: &DensityParams, m: usize, seed: u64) -> Result<Matrix> {
    sample_latent_grid(dens, m, seed, DEFAULT_GRID_SIZE)
}

pub fn sample_latent_grid(
    dens: &DensityParams,
    m: usize,
    seed: u64,
    grid_size: usize,
) -> Result<Matrix> {
    if m == 0 {
        return Err(Error::Empty("sample_latent with zero samples".into()));
    }
    dens.validate()?;
    let tables = SamplerTables::build(dens, grid_size)?;
    let rows: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|i| {
            let mut rng = indexed_rng(seed, "sample", i as u64);
            tables.draw_row(&mut rng).1
        })
        .collect();
    Ok(Matrix::from_rows(rows))
}

/// Draws latent samples and decodes them through g.
pub fn sample_data(
    net: &NetworkParams,
    dens: &DensityParams,
    m: usize,
    seed: u64,
) -> Result<(Matrix, Matrix)> {
    if net.decoder[0].w.rows != dens.d_latent {
        return Err(Error::DimMismatch(format!(
            "decoder expects width {}, density has {}",
            net.decoder[0].w.rows,
            dens.d_latent
        )));
    }
    let z = sample_latent(dens, m, seed)?;
    let mut cur = z.clone();
    for layer in &net.decoder {
        let mut pre = cur.matmul(&layer.w);
        pre.add_row_vector(&layer.b);
        for v in &mut pre.data {
            *v = match layer.activation {
                crate::net::Activation::Relu => v.max(0.0),
                crate::net::Activation::Tanh => v.tanh(),
                crate::net::Activation::Identity => *v,
                crate::net::Activation::Bounded => {
                    let s = 1.0 / (1.0 + (-*v).exp());
                    net.bound_margin + (1.0 - 2.0 * net.bound_margin) * s
                }
            };
        }
        cur = pre;
    }
    Ok((z, cur))
}
