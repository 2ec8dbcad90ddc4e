//! The calibrations of the SS test: asymptotic Gaussian simulation,
//! bootstrap, Monte-Carlo permutation and exact enumeration.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariance::{sample_null_norms, sigma_hat_with_cache};
use crate::error::{Error, Result};
use crate::rng::{purpose, stream};
use crate::sample::GroupedSample;
use crate::sign::{ss_bootstrap_value, ss_from_rank_rows, SignCache};

/// The universal test output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TestReport {
    pub test: String,
    pub statistic: f64,
    pub p_value: f64,
    /// asymptotic | bootstrap | permutation | exact | naive
    pub method: String,
    pub replicates: u64,
    pub seed: u64,
    #[serde(default)]
    pub extras: BTreeMap<String, String>,
}

impl TestReport {
    pub(crate) fn new(
        test: &str,
        statistic: f64,
        p_value: f64,
        method: &str,
        replicates: u64,
        seed: u64,
    ) -> Self {
        TestReport {
            test: test.to_string(),
            statistic,
            p_value,
            method: method.to_string(),
            replicates,
            seed,
            extras: BTreeMap::new(),
        }
    }
}

/// Tie handling is non-strict everywhere: `p = #{replicate >= observed} / R`.
/// The optional add-one correction switches to `(count + 1) / (R + 1)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct PValueOptions {
    pub add_one: bool,
}

pub(crate) fn proportion(count: usize, total: usize, opts: PValueOptions) -> f64 {
    if opts.add_one {
        (count + 1) as f64 / (total + 1) as f64
    } else {
        count as f64 / total as f64
    }
}

/// Permutation is advised for small samples (min group size <= 5 and n <= 20);
/// recorded in the report, never switched silently.
fn small_sample_advice(sample: &GroupedSample) -> Option<String> {
    let min = sample.sizes().into_iter().min().unwrap_or(0);
    if min <= 5 && sample.n() <= 20 {
        Some("small sample: permutation calibration recommended".to_string())
    } else {
        None
    }
}

/// Asymptotic calibration: p-value from Monte-Carlo draws of `||W||^2` with
/// `W ~ G(0, sigma_hat)`.
pub fn asymptotic_test(sample: &GroupedSample, n_draws: usize, seed: u64) -> Result<TestReport> {
    if n_draws == 0 {
        return Err(Error::InvalidInput("n_draws must be >= 1".into()));
    }
    let cache = SignCache::build(&sample.pooled());
    let rows = cache.rank_rows();
    let observed = ss_from_rank_rows(sample, &rows, &sample.group_of_pooled()).value;
    let op = sigma_hat_with_cache(sample, &cache)?;
    let spec = op.spectrum()?;
    let norms = sample_null_norms(&op, n_draws, seed)?;
    let count = norms.iter().filter(|&&v| v >= observed).count();
    let mut report = TestReport::new(
        "ss",
        observed,
        proportion(count, n_draws, PValueOptions::default()),
        "asymptotic",
        n_draws as u64,
        seed,
    );
    report.extras.insert("clipped_eigenvalues".into(), spec.clipped.to_string());
    if let Some(advice) = small_sample_advice(sample) {
        report.extras.insert("advice".into(), advice);
    }
    Ok(report)
}

/// Bootstrap calibration: each replicate redraws the pooled sample with
/// replacement into the original group sizes.
pub fn bootstrap_test(sample: &GroupedSample, m_b: usize, seed: u64) -> Result<TestReport> {
    bootstrap_test_with(sample, m_b, seed, PValueOptions::default())
}

pub fn bootstrap_test_with(
    sample: &GroupedSample,
    m_b: usize,
    seed: u64,
    opts: PValueOptions,
) -> Result<TestReport> {
    if m_b == 0 {
        return Err(Error::InvalidInput("m_b must be >= 1".into()));
    }
    let n = sample.n();
    let cache = SignCache::build(&sample.pooled());
    let rows = cache.rank_rows();
    let observed = ss_from_rank_rows(sample, &rows, &sample.group_of_pooled()).value;
    let count = (0..m_b)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(seed, &[purpose::BOOTSTRAP, r as u64]);
            let idx: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
            ss_bootstrap_value(sample, &cache, &idx)
        })
        .filter(|&v| v >= observed)
        .count();
    let mut report = TestReport::new(
        "ss",
        observed,
        proportion(count, m_b, opts),
        "bootstrap",
        m_b as u64,
        seed,
    );
    if let Some(advice) = small_sample_advice(sample) {
        report.extras.insert("advice".into(), advice);
    }
    Ok(report)
}

/// Monte-Carlo permutation calibration: each replicate reassigns the pooled
/// sample to the group sizes by a uniformly random permutation.
pub fn permutation_test(sample: &GroupedSample, m_p: usize, seed: u64) -> Result<TestReport> {
    permutation_test_with(sample, m_p, seed, PValueOptions::default())
}

pub fn permutation_test_with(
    sample: &GroupedSample,
    m_p: usize,
    seed: u64,
    opts: PValueOptions,
) -> Result<TestReport> {
    if m_p == 0 {
        return Err(Error::InvalidInput("m_p must be >= 1".into()));
    }
    let n = sample.n();
    let cache = SignCache::build(&sample.pooled());
    let rows = cache.rank_rows();
    let observed = ss_from_rank_rows(sample, &rows, &sample.group_of_pooled()).value;
    let group_of = sample.group_of_pooled();
    let count = (0..m_p)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(seed, &[purpose::PERMUTE, r as u64]);
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng);
            // slot a of the permuted order belongs to the group owning slot a
            let mut assignment = vec![0usize; n];
            for (slot, &orig) in perm.iter().enumerate() {
                assignment[orig] = group_of[slot];
            }
            ss_from_rank_rows(sample, &rows, &assignment).value
        })
        .filter(|&v| v >= observed)
        .count();
    Ok(TestReport::new(
        "ss",
        observed,
        proportion(count, m_p, opts),
        "permutation",
        m_p as u64,
        seed,
    ))
}

fn multinomial(sizes: &[usize]) -> f64 {
    let mut value = 1.0f64;
    let mut total = 0usize;
    for &nk in sizes {
        for i in 1..=nk {
            total += 1;
            value *= total as f64 / i as f64;
        }
    }
    value
}

/// Exact permutation calibration: enumerates every distinct assignment of the
/// pooled observations into groups of the original sizes. The statistic only
/// depends on the assignment, not the within-group order, so the enumeration
/// is over multiset partitions.
pub fn exact_permutation_test(sample: &GroupedSample) -> Result<TestReport> {
    const GUARD: f64 = 1e5;
    let sizes = sample.sizes();
    let total = multinomial(&sizes);
    if total > GUARD {
        return Err(Error::InvalidInput(format!(
            "{total:.0} assignments exceed the exact-enumeration guard of {GUARD:.0}; use the Monte-Carlo permutation test"
        )));
    }
    let n = sample.n();
    let cache = SignCache::build(&sample.pooled());
    let rows = cache.rank_rows();
    let observed = ss_from_rank_rows(sample, &rows, &sample.group_of_pooled()).value;

    let mut assignment = vec![usize::MAX; n];
    let mut count_ge = 0usize;
    let mut count_total = 0usize;
    // assign groups in order; within a group, indices are chosen increasing to
    // enumerate each assignment once
    fn recurse(
        sample: &GroupedSample,
        rows: &[Vec<f64>],
        sizes: &[usize],
        assignment: &mut Vec<usize>,
        group: usize,
        taken: usize,
        start: usize,
        observed: f64,
        count_ge: &mut usize,
        count_total: &mut usize,
    ) {
        if group == sizes.len() {
            let v = ss_from_rank_rows(sample, rows, assignment).value;
            *count_total += 1;
            if v >= observed {
                *count_ge += 1;
            }
            return;
        }
        if taken == sizes[group] {
            recurse(sample, rows, sizes, assignment, group + 1, 0, 0, observed, count_ge, count_total);
            return;
        }
        let n = assignment.len();
        let remaining_slots = sizes[group] - taken;
        for i in start..=(n - remaining_slots) {
            if assignment[i] != usize::MAX {
                continue;
            }
            assignment[i] = group;
            recurse(sample, rows, sizes, assignment, group, taken + 1, i + 1, observed, count_ge, count_total);
            assignment[i] = usize::MAX;
        }
    }
    // the last group is forced, but enumerating it costs nothing extra
    recurse(
        sample,
        &rows,
        &sizes,
        &mut assignment,
        0,
        0,
        0,
        observed,
        &mut count_ge,
        &mut count_total,
    );
    debug_assert_eq!(count_total as f64, total);

    let mut report = TestReport::new(
        "ss",
        observed,
        count_ge as f64 / count_total as f64,
        "exact",
        count_total as u64,
        0,
    );
    report.extras.insert("assignments".into(), count_total.to_string());
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::{generate_grouped, ProcessSpec, ShiftSpec};
    use crate::space::{GridDomain, GridFunction};
    use rand::Rng as _;

    fn dom(m: usize) -> GridDomain {
        GridDomain::new(0.25, 0.75, m).unwrap()
    }

    fn sbm_sample(sizes: &[usize], m: usize, seed: u64) -> GroupedSample {
        let d = dom(m);
        generate_grouped(
            &ProcessSpec::Sbm,
            &ShiftSpec { c1: 0.0, c2: 0.0, domain: d },
            sizes,
            seed,
        )
        .unwrap()
    }

    #[test]
    fn p_values_live_on_the_replicate_grid() {
        let sample = sbm_sample(&[4, 4], 10, 5);
        for report in [
            asymptotic_test(&sample, 50, 3).unwrap(),
            bootstrap_test(&sample, 50, 3).unwrap(),
            permutation_test(&sample, 50, 3).unwrap(),
        ] {
            let scaled = report.p_value * report.replicates as f64;
            assert!((scaled - scaled.round()).abs() < 1e-9, "{report:?}");
            assert!((0.0..=1.0).contains(&report.p_value));
        }
    }

    #[test]
    fn determinism_across_runs() {
        let sample = sbm_sample(&[5, 5, 5], 12, 9);
        let a = asymptotic_test(&sample, 200, 7).unwrap();
        let b = asymptotic_test(&sample, 200, 7).unwrap();
        assert_eq!(a.p_value, b.p_value);
        let p1 = permutation_test(&sample, 300, 7).unwrap();
        let p2 = permutation_test(&sample, 300, 7).unwrap();
        assert_eq!(p1.p_value, p2.p_value);
        let b1 = bootstrap_test(&sample, 300, 7).unwrap();
        let b2 = bootstrap_test(&sample, 300, 7).unwrap();
        assert_eq!(b1.p_value, b2.p_value);
    }

    #[test]
    fn asymptotic_translation_invariance_with_fixed_seed() {
        let sample = sbm_sample(&[4, 4, 4], 10, 2);
        let base = asymptotic_test(&sample, 300, 5).unwrap();
        let g = GridFunction::from_fn(dom(10), |t| t * t + 1.0);
        let shifted = sample.map(|x| x.add(&g));
        let other = asymptotic_test(&shifted, 300, 5).unwrap();
        assert_eq!(base.p_value, other.p_value);
    }

    #[test]
    fn asymptotic_rejects_singleton_groups() {
        let d = dom(6);
        let mut rng = crate::rng::stream(1, &[0]);
        let mk = |rng: &mut rand_chacha::ChaCha8Rng| {
            GridFunction::new(d, (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
        };
        let sample =
            GroupedSample::new(vec![vec![mk(&mut rng), mk(&mut rng)], vec![mk(&mut rng)]]).unwrap();
        match asymptotic_test(&sample, 100, 1) {
            Err(Error::DegenerateEstimator(msg)) => assert!(msg.contains("permutation")
                || Error::DegenerateEstimator(msg.clone()).to_string().contains("permutation")),
            other => panic!("expected degenerate-estimator error, got {other:?}"),
        }
    }

    #[test]
    fn bootstrap_identical_observations() {
        let d = dom(8);
        let f = GridFunction::constant(d, 1.5);
        let sample =
            GroupedSample::new(vec![vec![f.clone(), f.clone()], vec![f.clone(), f.clone()]])
                .unwrap();
        let report = bootstrap_test(&sample, 100, 4).unwrap();
        assert_eq!(report.statistic, 0.0);
        assert_eq!(report.p_value, 1.0);
        let exact = exact_permutation_test(&sample).unwrap();
        assert_eq!(exact.p_value, 1.0);
    }

    #[test]
    fn exact_enumeration_counts() {
        let d = dom(6);
        let mut rng = crate::rng::stream(8, &[1]);
        let mk = |rng: &mut rand_chacha::ChaCha8Rng| {
            GridFunction::new(d, (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
        };
        let sample = GroupedSample::new(vec![
            vec![mk(&mut rng), mk(&mut rng)],
            vec![mk(&mut rng), mk(&mut rng)],
        ])
        .unwrap();
        let report = exact_permutation_test(&sample).unwrap();
        assert_eq!(report.replicates, 6); // C(4,2)
    }

    #[test]
    fn exact_guard_triggers() {
        let sample = sbm_sample(&[10, 10, 10], 4, 3);
        assert!(matches!(exact_permutation_test(&sample), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn monte_carlo_permutation_approaches_exact() {
        let sample = sbm_sample(&[3, 3], 10, 14);
        let exact = exact_permutation_test(&sample).unwrap();
        let mc = permutation_test(&sample, 20_000, 5).unwrap();
        assert!((mc.p_value - exact.p_value).abs() < 0.02, "{} vs {}", mc.p_value, exact.p_value);
    }

    #[test]
    fn exact_self_consistency_three_groups() {
        let sample = sbm_sample(&[2, 2, 2], 8, 23);
        let exact = exact_permutation_test(&sample).unwrap();
        assert_eq!(exact.replicates, 90); // 6!/(2!2!2!)
        let mc = permutation_test(&sample, 50_000, 6).unwrap();
        assert!((mc.p_value - exact.p_value).abs() < 0.01);
    }

    #[test]
    fn group_swap_symmetry_equal_sizes() {
        let sample = sbm_sample(&[4, 4], 10, 31);
        let swapped = GroupedSample::new(vec![
            sample.groups[1].clone(),
            sample.groups[0].clone(),
        ])
        .unwrap();
        let a = exact_permutation_test(&sample).unwrap();
        let b = exact_permutation_test(&swapped).unwrap();
        // summation order differs between the two labelings, so allow
        // round-off at the last few bits
        assert!((a.statistic - b.statistic).abs() <= 1e-12 * a.statistic.abs());
        assert!((a.p_value - b.p_value).abs() <= 1e-12);
    }

    #[test]
    fn add_one_correction() {
        let sample = sbm_sample(&[3, 3], 8, 2);
        let plain = permutation_test_with(&sample, 99, 1, PValueOptions { add_one: false }).unwrap();
        let corrected =
            permutation_test_with(&sample, 99, 1, PValueOptions { add_one: true }).unwrap();
        let count = (plain.p_value * 99.0).round();
        assert!((corrected.p_value - (count + 1.0) / 100.0).abs() < 1e-12);
    }
}
