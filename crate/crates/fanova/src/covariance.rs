//! The block covariance estimator of the limiting law of U_n and the
//! Gaussian sampler for the asymptotic null distribution of SS_n.
//!
//! All operator blocks are m x m matrices in the embedded (sqrt-weight)
//! coefficient space, where the outer product `x (x) y` is the plain rank-one
//! matrix `y x^t` and Gaussian sampling is a symmetric eigendecomposition.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::{purpose, stream};
use crate::sample::GroupedSample;
use crate::sign::SignCache;

/// Relative tolerance for clipping small negative eigenvalues. A negative
/// eigenvalue beyond this contradicts the non-negative definiteness of the
/// estimator up to round-off and is surfaced as an error.
pub const EIG_CLIP_REL_TOL: f64 = 1e-8;

/// A K x K array of m x m operator blocks on H^K, stored as one Km x Km
/// symmetric matrix in embedded coefficients.
#[derive(Debug, Clone)]
pub struct BlockOperator {
    pub k: usize,
    pub m: usize,
    pub matrix: DMatrix<f64>,
}

impl BlockOperator {
    /// The (k1, k2) block as a view.
    pub fn block(&self, k1: usize, k2: usize) -> DMatrix<f64> {
        self.matrix.view((k1 * self.m, k2 * self.m), (self.m, self.m)).into()
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace()
    }

    /// Clipped non-negative spectrum for Gaussian sampling.
    pub fn spectrum(&self) -> Result<NullSpectrum> {
        NullSpectrum::from_symmetric(&self.matrix)
    }
}

/// Eigendecomposition of a block operator, eigenvalues clipped at zero.
#[derive(Debug, Clone)]
pub struct NullSpectrum {
    /// Non-increasing, all >= 0.
    pub eigenvalues: Vec<f64>,
    /// Column i is the orthonormal eigenvector of `eigenvalues[i]`.
    pub eigenvectors: DMatrix<f64>,
    /// Number of negative eigenvalues clipped to zero.
    pub clipped: usize,
}

impl NullSpectrum {
    pub fn from_symmetric(matrix: &DMatrix<f64>) -> Result<NullSpectrum> {
        let sym = (matrix + matrix.transpose()) * 0.5;
        let eig = sym.clone().symmetric_eigen();
        let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        order.sort_by(|&a, &b| {
            eig.eigenvalues[b]
                .partial_cmp(&eig.eigenvalues[a])
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        let max = order.first().map(|&i| eig.eigenvalues[i].max(0.0)).unwrap_or(0.0);
        let floor = -EIG_CLIP_REL_TOL * max;
        let mut eigenvalues = Vec::with_capacity(order.len());
        let mut clipped = 0usize;
        for &i in &order {
            let v = eig.eigenvalues[i];
            if v < floor {
                return Err(Error::Numerical(format!(
                    "covariance estimate has eigenvalue {v:.3e} below -{EIG_CLIP_REL_TOL:e} x max ({max:.3e}); matrix dim {}, trace {:.3e}",
                    sym.nrows(),
                    sym.trace()
                )));
            }
            if v < 0.0 {
                clipped += 1;
                eigenvalues.push(0.0);
            } else {
                eigenvalues.push(v);
            }
        }
        let eigenvectors =
            DMatrix::from_columns(&order.iter().map(|&i| eig.eigenvectors.column(i).into_owned()).collect::<Vec<_>>());
        Ok(NullSpectrum { eigenvalues, eigenvectors, clipped })
    }

    /// One draw of `||W||^2` with `W = sum_i sqrt(a_i) z_i beta_i`; the basis
    /// is orthonormal, so the squared norm is `sum_i a_i z_i^2`.
    pub fn draw_norm_sq(&self, rng: &mut impl Rng) -> f64 {
        self.eigenvalues
            .iter()
            .map(|&a| {
                let z: f64 = rng.sample(StandardNormal);
                a * z * z
            })
            .sum()
    }

    /// One draw of `||u0 + W||^2` for a fixed coefficient vector `u0`.
    pub fn draw_shifted_norm_sq(&self, u0: &DVector<f64>, rng: &mut impl Rng) -> f64 {
        self.eigenvalues
            .iter()
            .enumerate()
            .map(|(i, &a)| {
                let c = self.eigenvectors.column(i).dot(u0);
                let z: f64 = rng.sample(StandardNormal);
                let t = c + a.sqrt() * z;
                t * t
            })
            .sum()
    }
}

fn group_offsets(sample: &GroupedSample) -> Vec<usize> {
    let mut off = Vec::with_capacity(sample.k());
    let mut acc = 0;
    for g in &sample.groups {
        off.push(acc);
        acc += g.len();
    }
    off
}

/// The estimator of `C(i, j, k)` in embedded coefficients: a U-statistic over
/// the observations of group k of the outer product of conditional sign means
/// from groups i and j, minus the outer product of the overall means.
pub fn c_hat(i: usize, j: usize, k: usize, sample: &GroupedSample) -> Result<DMatrix<f64>> {
    let cache = SignCache::build(&sample.pooled());
    c_hat_with_cache(i, j, k, sample, &cache)
}

pub fn c_hat_with_cache(
    i: usize,
    j: usize,
    k: usize,
    sample: &GroupedSample,
    cache: &SignCache,
) -> Result<DMatrix<f64>> {
    let sizes = sample.sizes();
    if sizes[k] < 2 {
        return Err(Error::DegenerateEstimator(format!(
            "group {} has {} observation(s), need at least 2",
            k + 1,
            sizes[k]
        )));
    }
    let off = group_offsets(sample);
    let m = sample.domain.m;
    let w = sample.domain.weight();
    let (ni, nj, nk) = (sizes[i] as f64, sizes[j] as f64, sizes[k] as f64);

    let mut term1 = DMatrix::<f64>::zeros(m, m);
    let mut ci = vec![0.0; m];
    let mut cj = vec![0.0; m];
    for lk in 0..sizes[k] {
        let pk = off[k] + lk;
        let mut bi = vec![0.0; m];
        for li in 0..sizes[i] {
            let s = cache.sign(off[i] + li, pk);
            for (a, &v) in bi.iter_mut().zip(s) {
                *a += v;
            }
        }
        bi.iter_mut().for_each(|v| *v /= ni);
        let mut bj = vec![0.0; m];
        for lj in 0..sizes[j] {
            let s = cache.sign(off[j] + lj, pk);
            for (a, &v) in bj.iter_mut().zip(s) {
                *a += v;
            }
        }
        bj.iter_mut().for_each(|v| *v /= nj);
        // (b_i (x) b_j) has matrix b_j b_i^t; coefficient scaling contributes w
        for r in 0..m {
            for c in 0..m {
                term1[(r, c)] += bj[r] * bi[c];
            }
        }
        for (a, v) in ci.iter_mut().zip(&bi) {
            *a += v;
        }
        for (a, v) in cj.iter_mut().zip(&bj) {
            *a += v;
        }
    }
    term1 /= nk - 1.0;
    ci.iter_mut().for_each(|v| *v /= nk);
    cj.iter_mut().for_each(|v| *v /= nk);
    let mut out = term1;
    for r in 0..m {
        for c in 0..m {
            out[(r, c)] -= cj[r] * ci[c];
            out[(r, c)] *= w;
        }
    }
    Ok(out)
}

/// Assemble the full block covariance estimate of the limiting law of U_n.
pub fn sigma_hat(sample: &GroupedSample) -> Result<BlockOperator> {
    let cache = SignCache::build(&sample.pooled());
    sigma_hat_with_cache(sample, &cache)
}

pub fn sigma_hat_with_cache(sample: &GroupedSample, cache: &SignCache) -> Result<BlockOperator> {
    let k = sample.k();
    let m = sample.domain.m;
    let sizes = sample.sizes();
    let n = sample.n() as f64;
    if let Some(g) = sizes.iter().position(|&s| s < 2) {
        return Err(Error::DegenerateEstimator(format!(
            "group {} has {} observation(s), need at least 2",
            g + 1,
            sizes[g]
        )));
    }

    // all K^3 C_n matrices, parallel over triples
    let triples: Vec<(usize, usize, usize)> = (0..k)
        .flat_map(|i| (0..k).flat_map(move |j| (0..k).map(move |l| (i, j, l))))
        .collect();
    let cs: Vec<DMatrix<f64>> = triples
        .par_iter()
        .map(|&(i, j, l)| c_hat_with_cache(i, j, l, sample, cache))
        .collect::<Result<_>>()?;
    let c = |i: usize, j: usize, l: usize| &cs[(i * k + j) * k + l];

    let mut matrix = DMatrix::<f64>::zeros(k * m, k * m);
    for k1 in 0..k {
        for k2 in 0..k {
            let mut block = DMatrix::<f64>::zeros(m, m);
            let scale = (sizes[k1] as f64 * sizes[k2] as f64).sqrt() / n;
            for l in 0..k {
                let wl = sizes[l] as f64 / n;
                block += (c(k1, k2, l) - c(l, k2, k1) - c(k1, l, k2)) * (scale * wl);
            }
            if k1 == k2 {
                for l1 in 0..k {
                    for l2 in 0..k {
                        let wl = sizes[l1] as f64 * sizes[l2] as f64 / (n * n);
                        block += c(l1, l2, k1) * wl;
                    }
                }
            }
            // the (x (x) y) convention renders each operator as the matrix
            // y x^t, so the operator block indexed (k1, k2) occupies the
            // (k2, k1) position of the assembled matrix
            matrix.view_mut((k2 * m, k1 * m), (m, m)).copy_from(&block);
        }
    }

    // global self-adjointness up to round-off, then symmetrize exactly
    let asym = (&matrix - matrix.transpose()).abs().max();
    if asym > 1e-10 {
        return Err(Error::Numerical(format!(
            "covariance estimate asymmetry {asym:.3e} exceeds 1e-10"
        )));
    }
    let matrix = (&matrix + matrix.transpose()) * 0.5;
    Ok(BlockOperator { k, m, matrix })
}

/// Monte-Carlo draws of `||W||^2` for `W ~ G(0, op)`, one derived stream per
/// draw so the result is independent of scheduling.
pub fn sample_null_norms(op: &BlockOperator, count: usize, seed: u64) -> Result<Vec<f64>> {
    let spec = op.spectrum()?;
    Ok((0..count)
        .into_par_iter()
        .map(|d| {
            let mut rng = stream(seed, &[purpose::NULL_DRAW, d as u64]);
            spec.draw_norm_sq(&mut rng)
        })
        .collect())
}
