//! Low-rank model of the latent density: a rank-F CPD of the truncated
//! Fourier-coefficient tensor, stored as a half spectrum. The k = 0 row is
//! implicitly all ones and negative harmonics follow by conjugate symmetry,
//! so evaluation is exactly real and the density integrates to one over the
//! unit hypercube by construction.

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::stream_rng;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

pub const DEFAULT_EPS_FLOOR: f64 = 1e-10;

/// Mixture weights and half-spectrum factor matrices of the characteristic
/// tensor. `re[d]` / `im[d]` are K x F: row k-1 holds the coefficient for
/// harmonic k of latent dimension d, one column per mixture component.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityParams {
    pub d_latent: usize,
    pub k_cutoff: usize,
    pub rank: usize,
    pub lambda: Vec<f64>,
    pub re: Vec<Matrix>,
    pub im: Vec<Matrix>,
}

/// Gradients of the batch NLL. `grad_z` holds the NLL gradient w.r.t. each
/// latent coordinate (one row per sample), ready to inject into the encoder
/// backward pass. There are no entries for k = 0: that row is pinned.
#[derive(Clone, Debug)]
pub struct NllGradient {
    pub grad_lambda: Vec<f64>,
    pub grad_re: Vec<Matrix>,
    pub grad_im: Vec<Matrix>,
    pub grad_z: Matrix,
}

impl DensityParams {
    /// All-zero spectrum with uniform mixture weights: the uniform density.
    pub fn uniform(d_latent: usize, k_cutoff: usize, rank: usize) -> Self {
        DensityParams {
            d_latent,
            k_cutoff,
            rank,
            lambda: vec![1.0 / rank as f64; rank],
            re: vec![Matrix::zeros(k_cutoff, rank); d_latent],
            im: vec![Matrix::zeros(k_cutoff, rank); d_latent],
        }
    }

    /// Random initialization: lambda = 1/F, coefficient magnitudes at harmonic
    /// k bounded by 0.5/k so the truncated series starts out mostly positive.
    pub fn init_random(d_latent: usize, k_cutoff: usize, rank: usize, seed: u64) -> Self {
        let mut p = Self::uniform(d_latent, k_cutoff, rank);
        let mut rng = stream_rng(seed, "density-init");
        for d in 0..d_latent {
            for k in 0..k_cutoff {
                let bound = 0.5 / (k + 1) as f64;
                for f in 0..rank {
                    let mag: f64 = rng.gen::<f64>() * bound;
                    let phase: f64 = rng.gen::<f64>() * 2.0 * PI;
                    p.re[d].set(k, f, mag * phase.cos());
                    p.im[d].set(k, f, mag * phase.sin());
                }
            }
        }
        p
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambda.len() != self.rank {
            return Err(Error::DimMismatch("lambda length != rank".into()));
        }
        let sum: f64 = self.lambda.iter().sum();
        if self.lambda.iter().any(|&l| l < 0.0) || (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(
                "lambda must be on the probability simplex".into(),
            ));
        }
        for d in 0..self.d_latent {
            if self.re[d].rows != self.k_cutoff
                || self.re[d].cols != self.rank
                || self.im[d].rows != self.k_cutoff
                || self.im[d].cols != self.rank
            {
                return Err(Error::DimMismatch(format!("half-spectrum shape, dim {d}")));
            }
            if !self.re[d].is_finite() || !self.im[d].is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "non-finite coefficient in dim {d}"
                )));
            }
        }
        Ok(())
    }

    /// V(d, f) = 1 + 2 sum_k [Re c cos(2 pi k z_d) + Im c sin(2 pi k z_d)],
    /// the real inner sum of the truncated series under conjugate symmetry.
    pub fn factor_response(&self, z: &[f64]) -> Result<Matrix> {
        check_latent(z, self.d_latent)?;
        let mut v = Matrix::zeros(self.d_latent, self.rank);
        for d in 0..self.d_latent {
            let row = v.row_mut(d);
            row.fill(1.0);
            for k in 1..=self.k_cutoff {
                let theta = 2.0 * PI * k as f64 * z[d];
                let (s, c) = theta.sin_cos();
                let re_row = self.re[d].row(k - 1);
                let im_row = self.im[d].row(k - 1);
                for f in 0..self.rank {
                    row[f] += 2.0 * (re_row[f] * c + im_row[f] * s);
                }
            }
        }
        Ok(v)
    }

    /// Truncated-series density value; may be negative, returned unclipped.
    pub fn density_eval(&self, z: &[f64]) -> Result<f64> {
        let v = self.factor_response(z)?;
        Ok(self.mixture_from_response(&v))
    }

    fn mixture_from_response(&self, v: &Matrix) -> f64 {
        let mut total = 0.0;
        for (f, &lam) in self.lambda.iter().enumerate() {
            let mut prod = lam;
            for d in 0..self.d_latent {
                prod *= v.get(d, f);
            }
            total += prod;
        }
        total
    }

    /// -(1/M) sum_m log(max(density(z_m), eps_floor)).
    pub fn nll_batch(&self, z: &Matrix, eps_floor: f64) -> Result<f64> {
        if z.rows == 0 {
            return Err(Error::Empty("nll_batch on empty batch".into()));
        }
        if eps_floor <= 0.0 {
            return Err(Error::InvalidArgument("eps_floor must be positive".into()));
        }
        let mut acc = 0.0;
        for m in 0..z.rows {
            let p = self.density_eval(z.row(m))?;
            acc += p.max(eps_floor).ln();
        }
        Ok(-acc / z.rows as f64)
    }

    /// Exact gradients of `nll_batch` w.r.t. lambda, every stored coefficient
    /// (Re and Im as independent reals) and every latent coordinate. Samples
    /// clamped at the floor contribute zero gradient.
    pub fn nll_gradients(&self, z: &Matrix, eps_floor: f64) -> Result<NllGradient> {
        if z.rows == 0 {
            return Err(Error::Empty("nll_gradients on empty batch".into()));
        }
        if eps_floor <= 0.0 {
            return Err(Error::InvalidArgument("eps_floor must be positive".into()));
        }
        let m_count = z.rows as f64;
        let mut grad_lambda = vec![0.0; self.rank];
        let mut grad_re = vec![Matrix::zeros(self.k_cutoff, self.rank); self.d_latent];
        let mut grad_im = vec![Matrix::zeros(self.k_cutoff, self.rank); self.d_latent];
        let mut grad_z = Matrix::zeros(z.rows, self.d_latent);

        for m in 0..z.rows {
            let zm = z.row(m);
            let v = self.factor_response(zm)?;
            let p = self.mixture_from_response(&v);
            if p <= eps_floor {
                continue; // clamped branch: zero gradient
            }
            // scale = d(-1/M log p)/dp
            let scale = -1.0 / (m_count * p);

            // prod_all(f) = prod_d V(d,f); prod_excl(d,f) = prod over d' != d.
            // Leave-one-out products via prefix/suffix to stay stable near zeros.
            let dl = self.d_latent;
            let fr = self.rank;
            let mut prefix = vec![1.0; (dl + 1) * fr];
            for d in 0..dl {
                for f in 0..fr {
                    prefix[(d + 1) * fr + f] = prefix[d * fr + f] * v.get(d, f);
                }
            }
            let mut suffix = vec![1.0; (dl + 1) * fr];
            for d in (0..dl).rev() {
                for f in 0..fr {
                    suffix[d * fr + f] = suffix[(d + 1) * fr + f] * v.get(d, f);
                }
            }

            for f in 0..fr {
                grad_lambda[f] += scale * prefix[dl * fr + f];
            }

            for d in 0..dl {
                let mut dv_dz = vec![0.0; fr];
                for k in 1..=self.k_cutoff {
                    let kf = k as f64;
                    let theta = 2.0 * PI * kf * zm[d];
                    let (s, c) = theta.sin_cos();
                    let re_row = self.re[d].row(k - 1);
                    let im_row = self.im[d].row(k - 1);
                    let gr = grad_re[d].row_mut(k - 1);
                    let gi = grad_im[d].row_mut(k - 1);
                    for f in 0..fr {
                        let excl = prefix[d * fr + f] * suffix[(d + 1) * fr + f];
                        let w = scale * self.lambda[f] * excl;
                        gr[f] += w * 2.0 * c;
                        gi[f] += w * 2.0 * s;
                        dv_dz[f] +=
                            2.0 * 2.0 * PI * kf * (-re_row[f] * s + im_row[f] * c);
                    }
                }
                let mut gz = 0.0;
                for f in 0..fr {
                    let excl = prefix[d * fr + f] * suffix[(d + 1) * fr + f];
                    gz += self.lambda[f] * excl * dv_dz[f];
                }
                grad_z.set(m, d, scale * gz);
            }
        }

        Ok(NllGradient {
            grad_lambda,
            grad_re,
            grad_im,
            grad_z,
        })
    }

    /// Frobenius penalty over the learnable half spectrum: each stored entry
    /// appears twice in the full factor matrix (k and -k); the constant origin
    /// row is dropped.
    pub fn frobenius_penalty(&self) -> f64 {
        let mut acc = 0.0;
        for d in 0..self.d_latent {
            for (&r, &i) in self.re[d].data.iter().zip(&self.im[d].data) {
                acc += 2.0 * (r * r + i * i);
            }
        }
        acc
    }

    /// Adds the gradient of `rho * frobenius_penalty()` into the given
    /// coefficient gradients.
    pub fn add_frobenius_gradient(
        &self,
        rho: f64,
        grad_re: &mut [Matrix],
        grad_im: &mut [Matrix],
    ) {
        for d in 0..self.d_latent {
            for (g, &r) in grad_re[d].data.iter_mut().zip(&self.re[d].data) {
                *g += 4.0 * rho * r;
            }
            for (g, &i) in grad_im[d].data.iter_mut().zip(&self.im[d].data) {
                *g += 4.0 * rho * i;
            }
        }
    }

    /// Mean coefficient magnitude per dimension and harmonic, for inspection.
    pub fn decay_diagnostic(&self) -> Vec<Vec<f64>> {
        let fr = self.rank as f64;
        (0..self.d_latent)
            .map(|d| {
                (0..self.k_cutoff)
                    .map(|k| {
                        self.re[d]
                            .row(k)
                            .iter()
                            .zip(self.im[d].row(k))
                            .map(|(&r, &i)| (r * r + i * i).sqrt())
                            .sum::<f64>()
                            / fr
                    })
                    .collect()
            })
            .collect()
    }
}

pub(crate) fn check_latent(z: &[f64], d_latent: usize) -> Result<()> {
    if z.len() != d_latent {
        return Err(Error::DimMismatch(format!(
            "latent point has {} coordinates, expected {}",
            z.len(),
            d_latent
        )));
    }
    for (d, &v) in z.iter().enumerate() {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::LatentOutOfRange { dim: d, value: v });
        }
    }
    Ok(())
}

/// Euclidean projection onto the probability simplex by sort and threshold.
/// The result satisfies the simplex constraints exactly (final renormalize
/// removes rounding residue).
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let n = v.len();
    assert!(n > 0);
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let t = (cumsum - 1.0) / (j + 1) as f64;
        if u - t > 0.0 {
            theta = t;
        }
    }
    let mut w: Vec<f64> = v.iter().map(|&x| (x - theta).max(0.0)).collect();
    let sum: f64 = w.iter().sum();
    for x in &mut w {
        *x /= sum;
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn single_coef_model(re: f64, im: f64) -> DensityParams {
        let mut p = DensityParams::uniform(1, 1, 1);
        p.re[0].set(0, 0, re);
        p.im[0].set(0, 0, im);
        p
    }

    #[test]
    fn factor_response_k0_is_all_ones() {
        let p = DensityParams::uniform(3, 0, 2);
        let v = p.factor_response(&[0.1, 0.5, 0.9]).unwrap();
        assert!(v.data.iter().all(|&x| x == 1.0));
    }

    #[test]
    fn factor_response_single_harmonic() {
        let p = single_coef_model(0.25, 0.0);
        let v = p.factor_response(&[0.0]).unwrap();
        assert_abs_diff_eq!(v.get(0, 0), 1.5, epsilon = 1e-12);
        let v = p.factor_response(&[0.25]).unwrap();
        assert_abs_diff_eq!(v.get(0, 0), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn factor_response_rejects_out_of_range() {
        let p = DensityParams::uniform(1, 1, 1);
        assert!(p.factor_response(&[1.5]).is_err());
        assert!(p.factor_response(&[-0.1]).is_err());
    }

    #[test]
    fn density_k0_is_one() {
        let mut p = DensityParams::uniform(2, 0, 3);
        p.lambda = vec![0.5, 0.3, 0.2];
        assert_abs_diff_eq!(p.density_eval(&[0.3, 0.8]).unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn density_single_harmonic_value() {
        let p = single_coef_model(0.25, 0.0);
        // 1 + 0.5 cos(2 pi * 0.5) = 0.5
        assert_abs_diff_eq!(p.density_eval(&[0.5]).unwrap(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn nll_k0_is_zero() {
        let p = DensityParams::uniform(2, 0, 2);
        let z = Matrix::from_rows(vec![vec![0.2, 0.4], vec![0.9, 0.1]]);
        assert_abs_diff_eq!(p.nll_batch(&z, 1e-10).unwrap(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn nll_single_row_log() {
        let p = single_coef_model(0.25, 0.0);
        let z = Matrix::from_rows(vec![vec![0.5]]);
        assert_abs_diff_eq!(
            p.nll_batch(&z, 1e-10).unwrap(),
            -(0.5f64.ln()),
            epsilon = 1e-12
        );
    }

    #[test]
    fn nll_floor_engages_on_nonpositive_density() {
        let p = single_coef_model(-0.6, 0.0); // density at 0: 1 - 1.2 = -0.2
        let z = Matrix::from_rows(vec![vec![0.0]]);
        assert_abs_diff_eq!(
            p.nll_batch(&z, 1e-10).unwrap(),
            -(1e-10f64.ln()),
            epsilon = 1e-9
        );
    }

    #[test]
    fn nll_empty_batch_errors() {
        let p = DensityParams::uniform(1, 0, 1);
        let z = Matrix::zeros(0, 1);
        assert!(p.nll_batch(&z, 1e-10).is_err());
    }

    #[test]
    fn gradients_k0_model() {
        let p = DensityParams::uniform(2, 0, 3);
        let z = Matrix::from_rows(vec![vec![0.2, 0.4], vec![0.9, 0.1]]);
        let g = p.nll_gradients(&z, 1e-10).unwrap();
        for &gl in &g.grad_lambda {
            assert_abs_diff_eq!(gl, -1.0, epsilon = 1e-12);
        }
        assert!(g.grad_z.data.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn gradients_zero_for_floored_sample() {
        let p = single_coef_model(-0.6, 0.0);
        let z = Matrix::from_rows(vec![vec![0.0]]);
        let g = p.nll_gradients(&z, 1e-10).unwrap();
        assert!(g.grad_lambda.iter().all(|&x| x == 0.0));
        assert!(g.grad_re[0].data.iter().all(|&x| x == 0.0));
        assert!(g.grad_z.data.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn simplex_projection_cases() {
        let w = project_simplex(&[0.2, 0.5, 0.3]);
        for (a, b) in w.iter().zip(&[0.2, 0.5, 0.3]) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
        let w = project_simplex(&[1.2, -0.3, 0.1]);
        assert_abs_diff_eq!(w[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(w[1], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(w[2], 0.0, epsilon = 1e-12);
        let w = project_simplex(&[0.5, 0.5, 0.5]);
        for &x in &w {
            assert_abs_diff_eq!(x, 1.0 / 3.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn decay_diagnostic_matches_definition() {
        let mut p = DensityParams::uniform(1, 3, 1);
        for k in 0..3 {
            p.re[0].set(k, 0, 1.0 / (k + 1) as f64);
        }
        let m = p.decay_diagnostic();
        assert_eq!(m.len(), 1);
        for (k, &v) in m[0].iter().enumerate() {
            assert_abs_diff_eq!(v, 1.0 / (k + 1) as f64, epsilon = 1e-12);
        }
        let q = DensityParams::uniform(2, 2, 3);
        assert!(q.decay_diagnostic().iter().flatten().all(|&x| x == 0.0));
        let r = DensityParams::uniform(2, 0, 3);
        assert!(r.decay_diagnostic().iter().all(|m| m.is_empty()));
    }
}
