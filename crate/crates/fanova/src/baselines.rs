//! Mean-based comparison tests: CFF, ZC, F-type, GPF, F-max and HR.
//!
//! Each returns the same `TestReport` as the SS calibrations. Naive modes
//! use two-cumulant chi-square / F matching on the pooled within-group
//! covariance; every test also supports a resampling calibration.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF, FisherSnedecor};

use crate::error::{Error, Result};
use crate::inference::{proportion, PValueOptions, TestReport};
use crate::rng::{purpose, stream};
use crate::sample::GroupedSample;
use crate::space::{GridFunction, HTuple};

/// Calibration mode shared by ZC, F-type and GPF.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineMode {
    Naive,
    Permutation,
}

/// The pointwise one-way ANOVA F statistic across the grid.
#[derive(Debug, Clone)]
pub struct PointwiseF {
    pub values: GridFunction,
}

fn group_means(sample: &GroupedSample) -> Vec<GridFunction> {
    sample
        .groups
        .iter()
        .map(|g| {
            let mut acc = GridFunction::zero(sample.domain);
            for x in g {
                acc = acc.add(x);
            }
            acc.scale(1.0 / g.len() as f64)
        })
        .collect()
}

fn grand_mean(sample: &GroupedSample) -> GridFunction {
    let mut acc = GridFunction::zero(sample.domain);
    for x in sample.pooled() {
        acc = acc.add(x);
    }
    acc.scale(1.0 / sample.n() as f64)
}

/// Group-mean-centered residuals in pooled order.
fn centered_residuals(sample: &GroupedSample) -> Vec<GridFunction> {
    let means = group_means(sample);
    let mut out = Vec::with_capacity(sample.n());
    for (k, g) in sample.groups.iter().enumerate() {
        for x in g {
            out.push(x.sub(&means[k]));
        }
    }
    out
}

pub fn pointwise_f(sample: &GroupedSample) -> Result<PointwiseF> {
    let k = sample.k();
    let n = sample.n();
    if n <= k {
        return Err(Error::InvalidInput(format!("need n > K, got n = {n}, K = {k}")));
    }
    let means = group_means(sample);
    let grand = grand_mean(sample);
    let m = sample.domain.m;
    let mut values = vec![0.0; m];
    for i in 0..m {
        let mut between = 0.0;
        for (gk, mk) in sample.groups.iter().zip(&means) {
            let d = mk.values[i] - grand.values[i];
            between += gk.len() as f64 * d * d;
        }
        between /= (k - 1) as f64;
        let mut within = 0.0;
        for (gk, mk) in sample.groups.iter().zip(&means) {
            for x in gk {
                let d = x.values[i] - mk.values[i];
                within += d * d;
            }
        }
        within /= (n - k) as f64;
        if within <= 0.0 {
            return Err(Error::Numerical(format!(
                "zero residual variance at grid point {i} (t = {})",
                sample.domain.point(i)
            )));
        }
        values[i] = between / within;
    }
    Ok(PointwiseF { values: GridFunction { domain: sample.domain, values } })
}

fn cff_statistic(sample: &GroupedSample) -> f64 {
    let means = group_means(sample);
    let sizes = sample.sizes();
    let mut acc = 0.0;
    for k in 0..sample.k() {
        for l in (k + 1)..sample.k() {
            let d = means[k].sub(&means[l]);
            acc += sizes[k] as f64 * crate::space::l2_norm(&d).powi(2);
        }
    }
    acc
}

fn zc_statistic(sample: &GroupedSample) -> f64 {
    let means = group_means(sample);
    let grand = grand_mean(sample);
    sample
        .groups
        .iter()
        .zip(&means)
        .map(|(g, mk)| g.len() as f64 * crate::space::l2_norm(&mk.sub(&grand)).powi(2))
        .sum()
}

fn sse(sample: &GroupedSample) -> f64 {
    let means = group_means(sample);
    sample
        .groups
        .iter()
        .zip(&means)
        .flat_map(|(g, mk)| g.iter().map(move |x| crate::space::l2_norm(&x.sub(mk)).powi(2)))
        .sum()
}

fn f_statistic(sample: &GroupedSample) -> Result<f64> {
    let denom = sse(sample) / (sample.n() - sample.k()) as f64;
    if denom <= 0.0 {
        return Err(Error::Numerical("zero pooled residual variance".into()));
    }
    Ok(zc_statistic(sample) / (sample.k() - 1) as f64 / denom)
}

/// Pooled within-group covariance in embedded L2 coefficients,
/// `(n - K)^{-1} sum_k sum_i (c_ki - c_k)(c_ki - c_k)^t`.
fn pooled_covariance(sample: &GroupedSample) -> DMatrix<f64> {
    let m = sample.domain.m;
    let means = group_means(sample);
    let mut gamma = DMatrix::<f64>::zeros(m, m);
    for (g, mk) in sample.groups.iter().zip(&means) {
        for x in g {
            let e = DVector::from_vec(x.sub(mk).to_coefficients());
            gamma.syger(1.0, &e, &e, 1.0);
        }
    }
    gamma.fill_upper_triangle_with_lower_triangle();
    gamma / (sample.n() - sample.k()) as f64
}

fn traces(gamma: &DMatrix<f64>) -> Result<(f64, f64)> {
    let tr = gamma.trace();
    let tr2 = gamma.iter().map(|v| v * v).sum::<f64>();
    if tr <= 0.0 || tr2 <= 0.0 {
        return Err(Error::Numerical("pooled covariance has zero trace".into()));
    }
    Ok((tr, tr2))
}

/// Monte-Carlo permutation p-value for an arbitrary statistic of the
/// grouped sample.
fn permutation_p(
    sample: &GroupedSample,
    observed: f64,
    replicates: usize,
    seed: u64,
    stat: impl Fn(&GroupedSample) -> Result<f64> + Sync,
) -> Result<f64> {
    use rand::seq::SliceRandom;
    let n = sample.n();
    let count = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(seed, &[purpose::PERMUTE, r as u64]);
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            let permuted = sample.from_pooled_assignment(&order);
            stat(&permuted).map(|v| usize::from(v >= observed))
        })
        .try_reduce(|| 0usize, |a, b| Ok(a + b))?;
    Ok(proportion(count, replicates, PValueOptions::default()))
}

/// Bootstrap p-value over group-mean-centered residuals resampled with
/// replacement from the pooled centered sample into the original sizes.
fn centered_bootstrap_p(
    sample: &GroupedSample,
    observed: f64,
    replicates: usize,
    seed: u64,
    stat: impl Fn(&GroupedSample) -> Result<f64> + Sync,
) -> Result<f64> {
    let residuals = centered_residuals(sample);
    let sizes = sample.sizes();
    let n = sample.n();
    let count = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(seed, &[purpose::BOOTSTRAP, r as u64]);
            let mut groups = Vec::with_capacity(sizes.len());
            for &nk in &sizes {
                groups.push(
                    (0..nk).map(|_| residuals[rng.gen_range(0..n)].clone()).collect::<Vec<_>>(),
                );
            }
            let resampled = GroupedSample::new(groups)?;
            stat(&resampled).map(|v| usize::from(v >= observed))
        })
        .try_reduce(|| 0usize, |a, b| Ok(a + b))?;
    Ok(proportion(count, replicates, PValueOptions::default()))
}

pub fn cff_test(sample: &GroupedSample, m_boot: usize, seed: u64) -> Result<TestReport> {
    if sample.sizes().iter().any(|&nk| nk < 2) {
        return Err(Error::InvalidInput("CFF needs every group size >= 2".into()));
    }
    let observed = cff_statistic(sample);
    let p = centered_bootstrap_p(sample, observed, m_boot, seed, |s| Ok(cff_statistic(s)))?;
    Ok(TestReport::new("cff", observed, p, "bootstrap", m_boot as u64, seed))
}

pub fn zc_test(
    sample: &GroupedSample,
    mode: BaselineMode,
    replicates: usize,
    seed: u64,
) -> Result<TestReport> {
    let observed = zc_statistic(sample);
    match mode {
        BaselineMode::Naive => {
            let gamma = pooled_covariance(sample);
            let (tr, tr2) = traces(&gamma)?;
            let beta = tr2 / tr;
            let kappa = (sample.k() - 1) as f64 * tr * tr / tr2;
            let p = 1.0 - ChiSquared::new(kappa).map_err(num_err)?.cdf(observed / beta);
            let mut report = TestReport::new("zc", observed, p, "naive", 0, seed);
            report.extras.insert("beta".into(), beta.to_string());
            report.extras.insert("kappa".into(), kappa.to_string());
            Ok(report)
        }
        BaselineMode::Permutation => {
            let p = permutation_p(sample, observed, replicates, seed, |s| Ok(zc_statistic(s)))?;
            Ok(TestReport::new("zc", observed, p, "permutation", replicates as u64, seed))
        }
    }
}

pub fn f_type_test(
    sample: &GroupedSample,
    mode: BaselineMode,
    replicates: usize,
    seed: u64,
) -> Result<TestReport> {
    let observed = f_statistic(sample)?;
    match mode {
        BaselineMode::Naive => {
            let gamma = pooled_covariance(sample);
            let (tr, tr2) = traces(&gamma)?;
            let kappa = tr * tr / tr2;
            let df1 = kappa * (sample.k() - 1) as f64;
            let df2 = kappa * (sample.n() - sample.k()) as f64;
            let p = 1.0 - FisherSnedecor::new(df1, df2).map_err(num_err)?.cdf(observed);
            let mut report = TestReport::new("f-type", observed, p, "naive", 0, seed);
            report.extras.insert("kappa".into(), kappa.to_string());
            Ok(report)
        }
        BaselineMode::Permutation => {
            let p = permutation_p(sample, observed, replicates, seed, f_statistic)?;
            Ok(TestReport::new("f-type", observed, p, "permutation", replicates as u64, seed))
        }
    }
}

fn gpf_statistic(sample: &GroupedSample) -> Result<f64> {
    let f = pointwise_f(sample)?;
    Ok(sample.domain.weight() * f.values.values.iter().sum::<f64>())
}

pub fn gpf_test(
    sample: &GroupedSample,
    mode: BaselineMode,
    replicates: usize,
    seed: u64,
) -> Result<TestReport> {
    let observed = gpf_statistic(sample)?;
    match mode {
        BaselineMode::Naive => {
            // two-cumulant chi-square match of the integrated-F null:
            // E T = b - a, Var T = 2 (K - 1)^{-1} double-integral of the
            // squared pooled correlation
            let span = sample.domain.b - sample.domain.a;
            let w = sample.domain.weight();
            let means = group_means(sample);
            let m = sample.domain.m;
            let mut cov = DMatrix::<f64>::zeros(m, m);
            for (g, mk) in sample.groups.iter().zip(&means) {
                for x in g {
                    let e = DVector::from_vec(x.sub(mk).values.clone());
                    cov.syger(1.0, &e, &e, 1.0);
                }
            }
            cov.fill_upper_triangle_with_lower_triangle();
            cov /= (sample.n() - sample.k()) as f64;
            let mut rho_sq_int = 0.0;
            for i in 0..m {
                for j in 0..m {
                    let denom = cov[(i, i)] * cov[(j, j)];
                    if denom <= 0.0 {
                        return Err(Error::Numerical(format!(
                            "zero residual variance at grid point {}",
                            if cov[(i, i)] <= 0.0 { i } else { j }
                        )));
                    }
                    rho_sq_int += w * w * cov[(i, j)] * cov[(i, j)] / denom;
                }
            }
            let var = 2.0 / (sample.k() - 1) as f64 * rho_sq_int;
            let beta = var / (2.0 * span);
            let df = 2.0 * span * span / var;
            let p = 1.0 - ChiSquared::new(df).map_err(num_err)?.cdf(observed / beta);
            let mut report = TestReport::new("gpf", observed, p, "naive", 0, seed);
            report.extras.insert("df".into(), df.to_string());
            Ok(report)
        }
        BaselineMode::Permutation => {
            let p = permutation_p(sample, observed, replicates, seed, gpf_statistic)?;
            Ok(TestReport::new("gpf", observed, p, "permutation", replicates as u64, seed))
        }
    }
}

fn fmax_statistic(sample: &GroupedSample) -> Result<f64> {
    let f = pointwise_f(sample)?;
    Ok(f.values.values.iter().cloned().fold(f64::MIN, f64::max))
}

pub fn fmax_test(sample: &GroupedSample, m_boot: usize, seed: u64) -> Result<TestReport> {
    let observed = fmax_statistic(sample)?;
    let p = centered_bootstrap_p(sample, observed, m_boot, seed, fmax_statistic)?;
    Ok(TestReport::new("f-max", observed, p, "bootstrap", m_boot as u64, seed))
}

/// Principal component scores for the HR test.
#[derive(Debug, Clone)]
pub struct PcaScores {
    pub d: usize,
    /// per group, per observation, length-d score vectors
    pub scores: Vec<Vec<DVector<f64>>>,
    pub group_covariances: Vec<DMatrix<f64>>,
    pub explained_fraction: f64,
    /// all eigenvalues of the pooled covariance, descending
    pub eigenvalues: Vec<f64>,
}

pub fn pca_scores(sample: &GroupedSample, variance_fraction: f64) -> Result<PcaScores> {
    if !(0.0 < variance_fraction && variance_fraction <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "variance fraction {variance_fraction} outside (0, 1]"
        )));
    }
    let m = sample.domain.m;
    let means = group_means(sample);
    // pooled covariance with per-group 1/n_k weights: n^{-1} sum_k n_k Omega_k
    let mut omega = DMatrix::<f64>::zeros(m, m);
    for (g, mk) in sample.groups.iter().zip(&means) {
        for x in g {
            let e = DVector::from_vec(x.sub(mk).to_coefficients());
            omega.syger(1.0, &e, &e, 1.0);
        }
    }
    omega.fill_upper_triangle_with_lower_triangle();
    omega /= sample.n() as f64;

    let eig = nalgebra::SymmetricEigen::new(omega);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    let total: f64 = eig.eigenvalues.iter().filter(|&&v| v > 0.0).sum();
    if total <= 0.0 {
        return Err(Error::Numerical("pooled covariance has no positive eigenvalues".into()));
    }
    let mut cum = 0.0;
    let mut d = 0;
    for &idx in &order {
        cum += eig.eigenvalues[idx].max(0.0);
        d += 1;
        if cum / total >= variance_fraction {
            break;
        }
    }
    let explained_fraction = cum / total;

    // basis columns are embedded coefficients of the eigenfunctions, so a
    // score <X, phi_j> is a plain dot product of coefficient vectors
    let basis = DMatrix::from_columns(
        &order[..d].iter().map(|&idx| eig.eigenvectors.column(idx).into_owned()).collect::<Vec<_>>(),
    );
    let scores: Vec<Vec<DVector<f64>>> = sample
        .groups
        .iter()
        .map(|g| {
            g.iter()
                .map(|x| basis.transpose() * DVector::from_vec(x.to_coefficients()))
                .collect()
        })
        .collect();
    let group_covariances: Vec<DMatrix<f64>> = scores
        .iter()
        .map(|g| {
            let nk = g.len() as f64;
            let mean = g.iter().sum::<DVector<f64>>() / nk;
            let mut psi = DMatrix::<f64>::zeros(d, d);
            for s in g {
                let e = s - &mean;
                psi.syger(1.0, &e, &e, 1.0);
            }
            psi.fill_upper_triangle_with_lower_triangle();
            psi / nk
        })
        .collect();
    let eigenvalues: Vec<f64> = order.iter().map(|&idx| eig.eigenvalues[idx]).collect();
    Ok(PcaScores { d, scores, group_covariances, explained_fraction, eigenvalues })
}

pub fn hr_test(sample: &GroupedSample, variance_fraction: f64) -> Result<TestReport> {
    let pca = pca_scores(sample, variance_fraction)?;
    let d = pca.d;
    for &nk in &sample.sizes() {
        if nk <= d {
            return Err(Error::DegenerateEstimator(format!(
                "group size {nk} <= {d} retained components; reduce the variance fraction or use another test"
            )));
        }
    }
    let sizes = sample.sizes();
    let psi_inv: Vec<DMatrix<f64>> = pca
        .group_covariances
        .iter()
        .map(|psi| {
            psi.clone().try_inverse().ok_or_else(|| {
                Error::DegenerateEstimator(
                    "singular within-group score covariance; reduce the variance fraction or use another test"
                        .into(),
                )
            })
        })
        .collect::<Result<_>>()?;
    let score_means: Vec<DVector<f64>> = pca
        .scores
        .iter()
        .map(|g| g.iter().sum::<DVector<f64>>() / g.len() as f64)
        .collect();
    // GLS grand mean with inverse-Psi weights
    let mut weight_sum = DMatrix::<f64>::zeros(d, d);
    let mut weighted = DVector::<f64>::zeros(d);
    for k in 0..sample.k() {
        let w = sizes[k] as f64 * &psi_inv[k];
        weighted += &w * &score_means[k];
        weight_sum += w;
    }
    let grand = weight_sum
        .try_inverse()
        .ok_or_else(|| Error::DegenerateEstimator("singular GLS weight matrix".into()))?
        * weighted;
    let mut statistic = 0.0;
    for k in 0..sample.k() {
        let diff = &score_means[k] - &grand;
        statistic += sizes[k] as f64 * (diff.transpose() * &psi_inv[k] * &diff)[(0, 0)];
    }
    let df = (sample.k() - 1) * d;
    let p = 1.0 - ChiSquared::new(df as f64).map_err(num_err)?.cdf(statistic);
    let mut report = TestReport::new("hr", statistic, p, "asymptotic", 0, 0);
    report.extras.insert("components".into(), d.to_string());
    report
        .extras
        .insert("explained_fraction".into(), format!("{:.6}", pca.explained_fraction));
    Ok(report)
}

fn num_err(e: statrs::StatsError) -> Error {
    Error::Numerical(e.to_string())
}

/// An `HTuple` view of the group-mean differences, used by the asymptotic
/// power module.
pub fn mean_difference_tuple(sample: &GroupedSample) -> Result<HTuple> {
    let grand = grand_mean(sample);
    HTuple::new(group_means(sample).iter().map(|mk| mk.sub(&grand)).collect())
}
