//! Spatial signs, pooled spatial ranks and the SS statistic.

use crate::error::Result;
use crate::sample::GroupedSample;
use crate::space::{l2_norm, GridFunction, HTuple};

/// Norm tolerance below which a difference is treated as zero and the
/// `s(0) = 0` convention applies. Resampled duplicates produce exact zeros;
/// genuine data directions are far above this.
pub const ZERO_NORM_TOL: f64 = 1e-12;

/// The spatial sign `s(x) = x / ||x||`, with `s(0) = 0`.
pub fn spatial_sign(x: &GridFunction) -> GridFunction {
    let norm = l2_norm(x);
    if norm <= ZERO_NORM_TOL {
        GridFunction::zero(x.domain)
    } else {
        x.scale(1.0 / norm)
    }
}

/// The spatial rank of `x` in a pooled sample: the average spatial sign of
/// `x - X_j` over the pooled observations.
pub fn spatial_rank(x: &GridFunction, pooled: &[&GridFunction]) -> Result<GridFunction> {
    let mut acc = GridFunction::zero(x.domain);
    for y in pooled {
        let s = spatial_sign(&x.sub(y));
        for (a, b) in acc.values.iter_mut().zip(&s.values) {
            *a += b;
        }
    }
    Ok(acc.scale(1.0 / pooled.len() as f64))
}

/// All pairwise spatial signs of a pooled sample, stored once and reused by
/// the SS statistic, the resampling calibrations and the covariance
/// estimator. Entry (a, b) holds `s(x_a - x_b)`; the cache is antisymmetric
/// and its diagonal is zero.
pub struct SignCache {
    pub n: usize,
    m: usize,
    /// n * n sign functions of length m, row-major in (a, b).
    data: Vec<f64>,
}

impl SignCache {
    pub fn build(pooled: &[&GridFunction]) -> SignCache {
        let n = pooled.len();
        let m = pooled[0].domain.m;
        let mut data = vec![0.0; n * n * m];
        for a in 0..n {
            for b in (a + 1)..n {
                let s = spatial_sign(&pooled[a].sub(pooled[b]));
                let fwd = (a * n + b) * m;
                let bwd = (b * n + a) * m;
                for (i, &v) in s.values.iter().enumerate() {
                    data[fwd + i] = v;
                    data[bwd + i] = -v;
                }
            }
        }
        SignCache { n, m, data }
    }

    /// `s(x_a - x_b)` as a value slice.
    pub fn sign(&self, a: usize, b: usize) -> &[f64] {
        &self.data[(a * self.n + b) * self.m..(a * self.n + b + 1) * self.m]
    }

    /// Spatial rank values of each pooled observation within the full pooled
    /// sample: row a is `(1/n) sum_b s(x_a - x_b)`.
    pub fn rank_rows(&self) -> Vec<Vec<f64>> {
        let inv = 1.0 / self.n as f64;
        (0..self.n)
            .map(|a| {
                let mut row = vec![0.0; self.m];
                for b in 0..self.n {
                    let s = self.sign(a, b);
                    for (r, &v) in row.iter_mut().zip(s) {
                        *r += v;
                    }
                }
                row.iter_mut().for_each(|r| *r *= inv);
                row
            })
            .collect()
    }
}

/// The SS statistic together with the group rank means and U_n.
#[derive(Debug, Clone)]
pub struct SsStatistic {
    /// `SS_n = ||U_n||^2 = sum_k n_k ||Rbar_k||^2`.
    pub value: f64,
    /// Group means of the pooled spatial ranks.
    pub rank_means: Vec<GridFunction>,
    /// `U_n = (sqrt(n_1) Rbar_1, ..., sqrt(n_K) Rbar_K)`.
    pub u_n: HTuple,
}

/// Compute the SS statistic of a grouped sample.
pub fn ss_statistic(sample: &GroupedSample) -> Result<SsStatistic> {
    let cache = SignCache::build(&sample.pooled());
    let rows = cache.rank_rows();
    Ok(ss_from_rank_rows(sample, &rows, &sample.group_of_pooled()))
}

/// SS statistic from precomputed pooled rank rows and a group assignment of
/// the pooled indices. The pooled ranks do not depend on the assignment, so
/// permutation replicates only re-average rows per group.
pub fn ss_from_rank_rows(
    sample: &GroupedSample,
    rows: &[Vec<f64>],
    assignment: &[usize],
) -> SsStatistic {
    let k = sample.k();
    let m = sample.domain.m;
    let sizes = sample.sizes();
    let mut means = vec![vec![0.0; m]; k];
    for (a, &g) in assignment.iter().enumerate() {
        for (acc, &v) in means[g].iter_mut().zip(&rows[a]) {
            *acc += v;
        }
    }
    for (g, mean) in means.iter_mut().enumerate() {
        let inv = 1.0 / sizes[g] as f64;
        mean.iter_mut().for_each(|v| *v *= inv);
    }
    let rank_means: Vec<GridFunction> = means
        .into_iter()
        .map(|v| GridFunction { domain: sample.domain, values: v })
        .collect();
    let u_n = HTuple {
        parts: rank_means
            .iter()
            .zip(&sizes)
            .map(|(r, &nk)| r.scale((nk as f64).sqrt()))
            .collect(),
    };
    SsStatistic { value: u_n.norm_sq(), rank_means, u_n }
}

/// SS value for a bootstrap replicate: `idx` holds the pooled indices drawn
/// with replacement; slot a is assigned to the group owning position a.
/// Repeated indices hit the cache diagonal, which is exactly zero, so the
/// `s(0) = 0` convention triggers on index identity.
pub fn ss_bootstrap_value(sample: &GroupedSample, cache: &SignCache, idx: &[usize]) -> f64 {
    let n = idx.len();
    let m = sample.domain.m;
    let sizes = sample.sizes();
    let inv_n = 1.0 / n as f64;
    let w = sample.domain.weight();
    let mut value = 0.0;
    let mut slot = 0usize;
    for &nk in &sizes {
        let mut mean = vec![0.0; m];
        for a in slot..slot + nk {
            for &b in idx {
                let s = cache.sign(idx[a], b);
                for (acc, &v) in mean.iter_mut().zip(s) {
                    *acc += v;
                }
            }
        }
        // mean over group of (1/n) row sums
        let scale = inv_n / nk as f64;
        let norm_sq: f64 = mean.iter().map(|v| (v * scale) * (v * scale)).sum();
        value += nk as f64 * w * norm_sq;
        slot += nk;
    }
    value
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{inner_product, GridDomain};
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn dom(a: f64, b: f64, m: usize) -> GridDomain {
        GridDomain::new(a, b, m).unwrap()
    }

    fn rand_fn(d: GridDomain, rng: &mut impl Rng) -> GridFunction {
        GridFunction::new(d, (0..d.m).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn sign_of_zero_is_zero() {
        let d = dom(0.25, 0.75, 10);
        assert_eq!(spatial_sign(&GridFunction::zero(d)), GridFunction::zero(d));
    }

    #[test]
    fn sign_of_constant_has_unit_norm() {
        let d = dom(0.25, 0.75, 10);
        let s = spatial_sign(&GridFunction::constant(d, 2.0));
        // interval length 0.5 => unit constant is sqrt(2)
        for v in &s.values {
            assert_abs_diff_eq!(*v, 2.0f64.sqrt(), epsilon = 1e-12);
        }
        assert_abs_diff_eq!(l2_norm(&s), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn sign_is_antisymmetric() {
        let d = dom(0.0, 1.0, 16);
        let mut rng = crate::rng::stream(1, &[99]);
        let x = rand_fn(d, &mut rng);
        let s = spatial_sign(&x);
        let ns = spatial_sign(&x.scale(-1.0));
        for (a, b) in s.values.iter().zip(&ns.values) {
            assert_abs_diff_eq!(*a, -*b, epsilon = 1e-14);
        }
    }

    #[test]
    fn rank_of_self_in_singleton_pool_is_zero() {
        let d = dom(0.0, 1.0, 8);
        let x = GridFunction::constant(d, 3.0);
        let r = spatial_rank(&x, &[&x]).unwrap();
        assert_eq!(r, GridFunction::zero(d));
    }

    #[test]
    fn univariate_rank_identity_for_constants() {
        // constants on [0,1] have unit-norm constant signs +-1, so the spatial
        // rank reduces to n^-1 (2 rank - (n+1))
        let d = dom(0.0, 1.0, 10);
        let fs: Vec<GridFunction> =
            [1.0, 2.0, 3.0].iter().map(|&c| GridFunction::constant(d, c)).collect();
        let pooled: Vec<&GridFunction> = fs.iter().collect();
        let r = spatial_rank(&fs[0], &pooled).unwrap();
        for v in &r.values {
            assert_abs_diff_eq!(*v, -2.0 / 3.0, epsilon = 1e-12);
        }
        let r2 = spatial_rank(&fs[1], &pooled).unwrap();
        for v in &r2.values {
            assert_abs_diff_eq!(*v, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn rank_matches_two_loop_oracle() {
        let d = dom(0.0, 1.0, 12);
        let mut rng = crate::rng::stream(5, &[1]);
        let fs: Vec<GridFunction> = (0..5).map(|_| rand_fn(d, &mut rng)).collect();
        let pooled: Vec<&GridFunction> = fs.iter().collect();
        let x = rand_fn(d, &mut rng);
        let r = spatial_rank(&x, &pooled).unwrap();
        // brute-force oracle
        let mut acc = vec![0.0; d.m];
        for f in &fs {
            let diff = x.sub(f);
            let norm = l2_norm(&diff);
            if norm > ZERO_NORM_TOL {
                for (a, v) in acc.iter_mut().zip(&diff.values) {
                    *a += v / norm;
                }
            }
        }
        for (a, b) in r.values.iter().zip(&acc) {
            assert_abs_diff_eq!(*a, b / 5.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn two_singletons_give_one_half() {
        let d = dom(0.25, 0.75, 20);
        let mut rng = crate::rng::stream(11, &[2]);
        let x = rand_fn(d, &mut rng);
        let y = rand_fn(d, &mut rng);
        let s = GroupedSample::new(vec![vec![x], vec![y]]).unwrap();
        let stat = ss_statistic(&s).unwrap();
        assert_abs_diff_eq!(stat.value, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn identical_observations_give_zero() {
        let d = dom(0.0, 1.0, 10);
        let f = GridFunction::constant(d, 2.0);
        let s = GroupedSample::new(vec![vec![f.clone(), f.clone()], vec![f.clone()]]).unwrap();
        assert_eq!(ss_statistic(&s).unwrap().value, 0.0);
    }

    #[test]
    fn matches_fully_unrolled_oracle() {
        // K=3, n_k=2, fixed small integer-valued paths
        let d = dom(0.0, 1.0, 4);
        let paths: Vec<Vec<f64>> = vec![
            vec![1.0, 2.0, 0.0, -1.0],
            vec![0.0, 1.0, 1.0, 2.0],
            vec![-2.0, 0.0, 3.0, 1.0],
            vec![1.0, 1.0, -1.0, 0.0],
            vec![2.0, -1.0, 0.0, 2.0],
            vec![0.0, 0.0, 2.0, -2.0],
        ];
        let fs: Vec<GridFunction> =
            paths.into_iter().map(|v| GridFunction::new(d, v).unwrap()).collect();
        let sample = GroupedSample::new(vec![
            fs[0..2].to_vec(),
            fs[2..4].to_vec(),
            fs[4..6].to_vec(),
        ])
        .unwrap();
        let stat = ss_statistic(&sample).unwrap();

        // four-loop oracle: SS = sum_k n_k || (1/(n n_k)) sum_i sum_j s(X_ki - X_j) ||^2
        let pooled = sample.pooled();
        let n = pooled.len() as f64;
        let mut oracle = 0.0;
        for g in &sample.groups {
            let nk = g.len() as f64;
            let mut mean = vec![0.0; d.m];
            for x in g {
                for y in &pooled {
                    let diff = x.sub(y);
                    let norm = l2_norm(&diff);
                    if norm > ZERO_NORM_TOL {
                        for (a, v) in mean.iter_mut().zip(&diff.values) {
                            *a += v / norm;
                        }
                    }
                }
            }
            let mean = GridFunction::new(d, mean.iter().map(|v| v / (n * nk)).collect()).unwrap();
            oracle += nk * inner_product(&mean, &mean).unwrap();
        }
        assert_abs_diff_eq!(stat.value, oracle, epsilon = 1e-12);
    }

    #[test]
    fn weighted_rank_means_sum_to_zero() {
        let d = dom(0.0, 1.0, 8);
        let mut rng = crate::rng::stream(3, &[7]);
        let sample = GroupedSample::new(vec![
            (0..3).map(|_| rand_fn(d, &mut rng)).collect(),
            (0..4).map(|_| rand_fn(d, &mut rng)).collect(),
            (0..2).map(|_| rand_fn(d, &mut rng)).collect(),
        ])
        .unwrap();
        let stat = ss_statistic(&sample).unwrap();
        let mut acc = vec![0.0; d.m];
        for (rm, nk) in stat.rank_means.iter().zip(sample.sizes()) {
            for (a, v) in acc.iter_mut().zip(&rm.values) {
                *a += nk as f64 * v;
            }
        }
        for v in acc {
            assert_abs_diff_eq!(v, 0.0, epsilon = 1e-10);
        }
        // SS_n <= sum n_k
        assert!(stat.value <= sample.n() as f64);
        // the two SS formulas agree
        let sum_form: f64 = stat
            .rank_means
            .iter()
            .zip(sample.sizes())
            .map(|(r, nk)| nk as f64 * l2_norm(r).powi(2))
            .sum();
        assert_abs_diff_eq!(stat.value, sum_form, epsilon = 1e-10);
    }

    #[test]
    fn invariances() {
        let d = dom(0.0, 1.0, 10);
        let mut rng = crate::rng::stream(17, &[4]);
        let sample = GroupedSample::new(vec![
            (0..3).map(|_| rand_fn(d, &mut rng)).collect(),
            (0..3).map(|_| rand_fn(d, &mut rng)).collect(),
        ])
        .unwrap();
        let base = ss_statistic(&sample).unwrap().value;
        let g = rand_fn(d, &mut rng);
        let translated = sample.map(|x| x.add(&g));
        assert_abs_diff_eq!(ss_statistic(&translated).unwrap().value, base, epsilon = 1e-10);
        let scaled = sample.map(|x| x.scale(3.7));
        assert_abs_diff_eq!(ss_statistic(&scaled).unwrap().value, base, epsilon = 1e-10);
        // orthogonal transform in value space (a permutation of grid cells is
        // orthogonal in the embedded coefficient space)
        let reversed = sample.map(|x| {
            let mut v = x.values.clone();
            v.reverse();
            GridFunction { domain: x.domain, values: v }
        });
        assert_abs_diff_eq!(ss_statistic(&reversed).unwrap().value, base, epsilon = 1e-10);
    }
}
