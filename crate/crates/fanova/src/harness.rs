//! Monte-Carlo experiment harness: size estimation, common-random-number
//! power curves, real-data subsampling studies and the asymptotic power of
//! the tests under shrinking mean alternatives.

use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::baselines::{self, BaselineMode};
use crate::covariance::NullSpectrum;
use crate::error::{Error, Result};
use crate::inference::{self, TestReport};
use crate::rng::{derive_seed, purpose, stream};
use crate::sample::GroupedSample;
use crate::simulate::{generate_grouped, PathSampler, ProcessSpec, ShiftSpec};
use crate::space::{GridDomain, GridFunction, HTuple};

/// Every runnable test, with its calibration baked into the selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestSelector {
    SsAsym,
    SsBoot,
    SsPerm,
    Cff,
    Zc,
    ZcPerm,
    FType,
    FTypePerm,
    Gpf,
    GpfPerm,
    FMax,
    Hr,
}

pub const ALL_SELECTORS: [TestSelector; 12] = [
    TestSelector::SsAsym,
    TestSelector::SsBoot,
    TestSelector::SsPerm,
    TestSelector::Cff,
    TestSelector::Zc,
    TestSelector::ZcPerm,
    TestSelector::FType,
    TestSelector::FTypePerm,
    TestSelector::Gpf,
    TestSelector::GpfPerm,
    TestSelector::FMax,
    TestSelector::Hr,
];

impl TestSelector {
    pub fn name(&self) -> &'static str {
        match self {
            TestSelector::SsAsym => "ss-asym",
            TestSelector::SsBoot => "ss-boot",
            TestSelector::SsPerm => "ss-perm",
            TestSelector::Cff => "cff",
            TestSelector::Zc => "zc",
            TestSelector::ZcPerm => "zc-perm",
            TestSelector::FType => "f-type",
            TestSelector::FTypePerm => "f-type-perm",
            TestSelector::Gpf => "gpf",
            TestSelector::GpfPerm => "gpf-perm",
            TestSelector::FMax => "f-max",
            TestSelector::Hr => "hr",
        }
    }

    /// Run the selected test; `replicates` is the resample / draw count for
    /// calibrations that need one.
    pub fn run(&self, sample: &GroupedSample, replicates: usize, seed: u64) -> Result<TestReport> {
        match self {
            TestSelector::SsAsym => inference::asymptotic_test(sample, replicates, seed),
            TestSelector::SsBoot => inference::bootstrap_test(sample, replicates, seed),
            TestSelector::SsPerm => inference::permutation_test(sample, replicates, seed),
            TestSelector::Cff => baselines::cff_test(sample, replicates, seed),
            TestSelector::Zc => baselines::zc_test(sample, BaselineMode::Naive, replicates, seed),
            TestSelector::ZcPerm => {
                baselines::zc_test(sample, BaselineMode::Permutation, replicates, seed)
            }
            TestSelector::FType => {
                baselines::f_type_test(sample, BaselineMode::Naive, replicates, seed)
            }
            TestSelector::FTypePerm => {
                baselines::f_type_test(sample, BaselineMode::Permutation, replicates, seed)
            }
            TestSelector::Gpf => baselines::gpf_test(sample, BaselineMode::Naive, replicates, seed),
            TestSelector::GpfPerm => {
                baselines::gpf_test(sample, BaselineMode::Permutation, replicates, seed)
            }
            TestSelector::FMax => baselines::fmax_test(sample, replicates, seed),
            TestSelector::Hr => baselines::hr_test(sample, 0.9),
        }
    }
}

impl FromStr for TestSelector {
    type Err = Error;

    fn from_str(s: &str) -> Result<TestSelector> {
        ALL_SELECTORS.iter().find(|t| t.name() == s).copied().ok_or_else(|| {
            let valid: Vec<&str> = ALL_SELECTORS.iter().map(|t| t.name()).collect();
            Error::InvalidInput(format!("unknown test {s}; valid selectors: {}", valid.join(", ")))
        })
    }
}

/// One test entry of an experiment, with its resample count.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TestSettings {
    pub test: TestSelector,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
}

fn default_replicates() -> usize {
    500
}

/// Declarative experiment description, readable from a TOML file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub process: ProcessSpec,
    pub domain: GridDomain,
    pub sizes: Vec<usize>,
    #[serde(default)]
    pub c1: f64,
    /// c2 grid for power curves; size studies use [0] with c1 = 0
    #[serde(default)]
    pub c2: Vec<f64>,
    pub tests: Vec<TestSettings>,
    pub replications: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

fn default_alpha() -> f64 {
    0.05
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.process.validate()?;
        if self.replications < 1 {
            return Err(Error::InvalidInput("replications must be >= 1".into()));
        }
        if !(0.0 < self.alpha && self.alpha < 1.0) {
            return Err(Error::InvalidInput(format!("alpha {} outside (0, 1)", self.alpha)));
        }
        if self.tests.is_empty() {
            return Err(Error::InvalidInput("no tests selected".into()));
        }
        if self.sizes.len() < 2 || self.sizes.iter().any(|&n| n == 0) {
            return Err(Error::InvalidInput("need K >= 2 nonempty groups".into()));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<ExperimentConfig> {
        let config: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::InvalidInput(format!("config: {e}")))?;
        config.validate()?;
        Ok(config)
    }
}

/// One (test, c2) cell of a power curve or a size table.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RateCell {
    /// rejection rate over replications that completed
    pub rate: f64,
    /// binomial Monte-Carlo standard error sqrt(r(1-r)/completed)
    pub se: f64,
    /// replications whose test errored; excluded from the denominator
    pub errors: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PowerCurve {
    pub c2_values: Vec<f64>,
    pub tests: Vec<String>,
    /// indexed [test][c2]
    pub cells: Vec<Vec<RateCell>>,
}

impl PowerCurve {
    /// Plot-ready CSV, one row per (test, c2).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("test,c2,rate,se,errors\n");
        for (t, name) in self.tests.iter().enumerate() {
            for (j, &c2) in self.c2_values.iter().enumerate() {
                let cell = &self.cells[t][j];
                out.push_str(&format!(
                    "{name},{c2:.17e},{:.17e},{:.17e},{}\n",
                    cell.rate, cell.se, cell.errors
                ));
            }
        }
        out
    }
}

fn make_cell(rejections: usize, errors: usize, replications: usize) -> RateCell {
    let completed = replications - errors;
    let rate = if completed == 0 { 0.0 } else { rejections as f64 / completed as f64 };
    let se = if completed == 0 { 0.0 } else { (rate * (1.0 - rate) / completed as f64).sqrt() };
    RateCell { rate, se, errors }
}

/// Power curve with common random numbers: replication r's noise draws
/// depend only on (seed, r) and are reused across every c2 value, so the
/// curves vary smoothly in c2.
pub fn power_curve(config: &ExperimentConfig, seed: u64) -> Result<PowerCurve> {
    config.validate()?;
    let c2_values = if config.c2.is_empty() { vec![0.0] } else { config.c2.clone() };
    if config.sizes.len() != 3 && (config.c1 != 0.0 || c2_values.iter().any(|&c| c != 0.0)) {
        return Err(Error::InvalidInput("the shift design needs exactly 3 groups".into()));
    }
    let n_tests = config.tests.len();
    let n_points = c2_values.len();
    // per replication: (rejections, errors) for each (test, c2)
    let zero = || vec![vec![(0usize, 0usize); n_points]; n_tests];
    let counts = (0..config.replications)
        .into_par_iter()
        .map(|r| {
            let data_seed = derive_seed(seed, &[purpose::REPLICATION, r as u64]);
            let mut local = zero();
            for (j, &c2) in c2_values.iter().enumerate() {
                let shift = ShiftSpec { c1: config.c1, c2, domain: config.domain };
                let sample = generate_grouped(&config.process, &shift, &config.sizes, data_seed)?;
                for (t, settings) in config.tests.iter().enumerate() {
                    let test_seed = derive_seed(seed, &[purpose::TEST, r as u64, t as u64]);
                    match settings.test.run(&sample, settings.replicates, test_seed) {
                        Ok(report) => {
                            if report.p_value <= config.alpha {
                                local[t][j].0 += 1;
                            }
                        }
                        Err(_) => local[t][j].1 += 1,
                    }
                }
            }
            Ok::<_, Error>(local)
        })
        .try_reduce(zero, |mut a, b| {
            for (ta, tb) in a.iter_mut().zip(&b) {
                for (ca, cb) in ta.iter_mut().zip(tb) {
                    ca.0 += cb.0;
                    ca.1 += cb.1;
                }
            }
            Ok(a)
        })?;
    let cells = counts
        .into_iter()
        .map(|row| {
            row.into_iter().map(|(rej, err)| make_cell(rej, err, config.replications)).collect()
        })
        .collect();
    Ok(PowerCurve {
        c2_values,
        tests: config.tests.iter().map(|t| t.test.name().to_string()).collect(),
        cells,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SizeTable {
    pub tests: Vec<String>,
    pub cells: Vec<RateCell>,
}

impl SizeTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("test,rate,se,errors\n");
        for (name, cell) in self.tests.iter().zip(&self.cells) {
            out.push_str(&format!(
                "{name},{:.17e},{:.17e},{}\n",
                cell.rate, cell.se, cell.errors
            ));
        }
        out
    }
}

/// Size estimation is the c1 = c2 = 0 point of a power curve: the same seed
/// derivation makes it the literal first column of `power_curve`.
pub fn estimate_size(config: &ExperimentConfig, seed: u64) -> Result<SizeTable> {
    let mut null_config = config.clone();
    null_config.c1 = 0.0;
    null_config.c2 = vec![0.0];
    let curve = power_curve(&null_config, seed)?;
    Ok(SizeTable {
        tests: curve.tests,
        cells: curve.cells.into_iter().map(|row| row[0]).collect(),
    })
}

/// Configuration of a real-data subsampling study.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubsampleConfig {
    pub test: TestSettings,
    pub replications: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// subgroup size for both studies; default: floor(n_g / K) per group
    #[serde(default)]
    pub subgroup_size: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubsampleReport {
    /// per-group null rejection rate from splitting the group into K subgroups
    pub size_by_group: Vec<(usize, RateCell)>,
    /// groups too small to split into K nonempty subgroups
    pub omitted_groups: Vec<usize>,
    /// rejection rate across subgroups drawn from the K groups separately
    pub power: RateCell,
}

fn draw_subgroups(
    group: &[GridFunction],
    pieces: usize,
    size: usize,
    rng: &mut impl Rng,
) -> Vec<Vec<GridFunction>> {
    use rand::seq::SliceRandom;
    let mut order: Vec<usize> = (0..group.len()).collect();
    order.shuffle(rng);
    (0..pieces)
        .map(|p| order[p * size..(p + 1) * size].iter().map(|&i| group[i].clone()).collect())
        .collect()
}

/// The subsampling protocol: the size study splits each sufficiently large
/// group into K random subgroups (the null holds within a group); the power
/// study compares one random subgroup per group.
pub fn subsample_study(
    data: &GroupedSample,
    config: &SubsampleConfig,
    seed: u64,
) -> Result<SubsampleReport> {
    if config.replications < 1 {
        return Err(Error::InvalidInput("replications must be >= 1".into()));
    }
    let k = data.k();
    let sizes = data.sizes();
    let sub_size = |ng: usize| config.subgroup_size.unwrap_or(ng / k).min(ng / k);
    let mut retained = Vec::new();
    let mut omitted_groups = Vec::new();
    for (g, &ng) in sizes.iter().enumerate() {
        if sub_size(ng) >= 1 {
            retained.push(g);
        } else {
            omitted_groups.push(g);
        }
    }
    if retained.is_empty() {
        return Err(Error::InvalidInput(format!(
            "every group is too small to split into {k} nonempty subgroups"
        )));
    }

    let run_one = |sample: &GroupedSample, test_seed: u64| -> Option<bool> {
        config
            .test
            .test
            .run(sample, config.test.replicates, test_seed)
            .ok()
            .map(|report| report.p_value <= config.alpha)
    };

    let size_by_group = retained
        .iter()
        .map(|&g| {
            let s = sub_size(sizes[g]);
            let (rej, err) = (0..config.replications)
                .into_par_iter()
                .map(|r| {
                    let mut rng = stream(seed, &[purpose::SUBSAMPLE, r as u64, g as u64]);
                    let sub = draw_subgroups(&data.groups[g], k, s, &mut rng);
                    let sample = GroupedSample::new(sub).ok()?;
                    let test_seed = derive_seed(seed, &[purpose::TEST, r as u64, g as u64]);
                    run_one(&sample, test_seed)
                })
                .fold(
                    || (0usize, 0usize),
                    |acc, res| match res {
                        Some(true) => (acc.0 + 1, acc.1),
                        Some(false) => acc,
                        None => (acc.0, acc.1 + 1),
                    },
                )
                .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
            (g, make_cell(rej, err, config.replications))
        })
        .collect();

    let (rej, err) = (0..config.replications)
        .into_par_iter()
        .map(|r| {
            let groups: Vec<Vec<GridFunction>> = (0..k)
                .map(|g| {
                    let s = sub_size(sizes[g]).max(1).min(sizes[g]);
                    let mut rng =
                        stream(seed, &[purpose::SUBSAMPLE, r as u64, (k + g) as u64]);
                    draw_subgroups(&data.groups[g], 1, s, &mut rng).pop().unwrap()
                })
                .collect();
            let sample = GroupedSample::new(groups).ok()?;
            let test_seed = derive_seed(seed, &[purpose::TEST, r as u64, k as u64]);
            run_one(&sample, test_seed)
        })
        .fold(
            || (0usize, 0usize),
            |acc, res| match res {
                Some(true) => (acc.0 + 1, acc.1),
                Some(false) => acc,
                None => (acc.0, acc.1 + 1),
            },
        )
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));

    Ok(SubsampleReport {
        size_by_group,
        omitted_groups,
        power: make_cell(rej, err, config.replications),
    })
}

/// Shrinking mean alternative mu_k = delta_k / sqrt(n) with limiting group
/// proportions lambda_k.
#[derive(Debug, Clone)]
pub struct ShrinkingAlternative {
    pub process: ProcessSpec,
    pub domain: GridDomain,
    pub lambdas: Vec<f64>,
    pub deltas: Vec<GridFunction>,
}

impl ShrinkingAlternative {
    pub fn validate(&self) -> Result<()> {
        self.process.validate()?;
        if self.lambdas.len() != self.deltas.len() || self.lambdas.len() < 2 {
            return Err(Error::InvalidInput("need matching lambdas and deltas, K >= 2".into()));
        }
        if self.lambdas.iter().any(|&l| !(0.0 < l && l < 1.0)) {
            return Err(Error::InvalidInput("every lambda must lie in (0, 1)".into()));
        }
        let total: f64 = self.lambdas.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!("lambdas sum to {total}, expected 1")));
        }
        Ok(())
    }

    /// delta-bar = sum_l lambda_l delta_l.
    fn delta_bar(&self) -> GridFunction {
        let mut acc = GridFunction::zero(self.domain);
        for (l, d) in self.lambdas.iter().zip(&self.deltas) {
            acc = acc.add(&d.scale(*l));
        }
        acc
    }
}

/// Monte-Carlo sample sizes for the asymptotic power evaluations.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct McSizes {
    /// pairs (X, X') for the derivative average
    pub pairs: usize,
    /// outer draws of the conditional-mean covariance
    pub outer: usize,
    /// inner draws per conditional mean
    pub inner: usize,
    /// draws of the limiting statistic under null and alternative
    pub draws: usize,
}

impl Default for McSizes {
    fn default() -> Self {
        McSizes { pairs: 2000, outer: 2000, inner: 200, draws: 20000 }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AsymptoticPower {
    pub power: f64,
    /// the inverse-distance average is dominated by a single pair, hinting
    /// that E ||X - X'||^{-1} may not be finite for this process
    pub unstable: bool,
}

fn empirical_quantile(sorted: &[f64], level: f64) -> f64 {
    let idx = ((level * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len()) - 1;
    sorted[idx]
}

/// Asymptotic power of the SS test: the limiting mean U0 comes from the
/// averaged derivative of the spatial sign map,
/// s1(x)(h) = (h - <h, x/||x||> x/||x||) / ||x||, applied to
/// sqrt(lambda_k)(delta_k - delta-bar); the limiting covariance has blocks
/// C (1[k1 = k2] - sqrt(lambda_k1 lambda_k2)) with C the covariance of the
/// conditional sign mean E[s(X - X') | X].
pub fn asymptotic_power_ss(
    alt: &ShrinkingAlternative,
    alpha: f64,
    mc: McSizes,
    seed: u64,
) -> Result<AsymptoticPower> {
    alt.validate()?;
    if !(0.0 < alpha && alpha < 1.0) {
        return Err(Error::InvalidInput(format!("alpha {alpha} outside (0, 1)")));
    }
    let k = alt.lambdas.len();
    let m = alt.domain.m;
    let sampler = PathSampler::new(alt.domain)?;
    let delta_bar = alt.delta_bar();
    let shifts: Vec<GridFunction> = alt
        .lambdas
        .iter()
        .zip(&alt.deltas)
        .map(|(l, d)| d.sub(&delta_bar).scale(l.sqrt()))
        .collect();

    // U0 and the inverse-distance diagnostics over independent pairs
    let pair_seed = derive_seed(seed, &[purpose::PAIR]);
    let results: Vec<(Vec<GridFunction>, f64)> = (0..mc.pairs)
        .into_par_iter()
        .map(|i| {
            let x = sampler.sample_path(&alt.process, pair_seed, 2 * i as u64);
            let xp = sampler.sample_path(&alt.process, pair_seed, 2 * i as u64 + 1);
            let d = x.sub(&xp);
            let norm = crate::space::l2_norm(&d);
            let unit = d.scale(1.0 / norm);
            let parts = shifts
                .iter()
                .map(|h| {
                    let proj = crate::space::inner_product(h, &unit).expect("common domain");
                    h.sub(&unit.scale(proj)).scale(1.0 / norm)
                })
                .collect();
            (parts, 1.0 / norm)
        })
        .collect();
    let inv_total: f64 = results.iter().map(|(_, inv)| inv).sum();
    let max_share =
        results.iter().map(|(_, inv)| inv / inv_total).fold(0.0, f64::max);
    let unstable = max_share > 0.05;
    let mut u0_parts = vec![GridFunction::zero(alt.domain); k];
    for (parts, _) in &results {
        for (acc, p) in u0_parts.iter_mut().zip(parts) {
            *acc = acc.add(p);
        }
    }
    let u0 = HTuple::new(
        u0_parts.into_iter().map(|p| p.scale(1.0 / mc.pairs as f64)).collect(),
    )?;

    // C by nested Monte Carlo in embedded coefficients
    let outer_seed = derive_seed(seed, &[purpose::COV_OUTER]);
    let gs: Vec<DVector<f64>> = (0..mc.outer)
        .into_par_iter()
        .map(|o| {
            let x = sampler.sample_path(&alt.process, outer_seed, o as u64);
            let inner_seed = derive_seed(seed, &[purpose::COV_INNER, o as u64]);
            let mut g = GridFunction::zero(alt.domain);
            for j in 0..mc.inner {
                let xp = sampler.sample_path(&alt.process, inner_seed, j as u64);
                g = g.add(&crate::sign::spatial_sign(&x.sub(&xp)));
            }
            DVector::from_vec(g.scale(1.0 / mc.inner as f64).to_coefficients())
        })
        .collect();
    let g_mean = gs.iter().sum::<DVector<f64>>() / mc.outer as f64;
    let mut c = DMatrix::<f64>::zeros(m, m);
    for g in &gs {
        let e = g - &g_mean;
        c.syger(1.0, &e, &e, 1.0);
    }
    c.fill_upper_triangle_with_lower_triangle();
    c /= mc.outer as f64;

    // Sigma blocks C (1[k1=k2] - sqrt(l_k1 l_k2)), then its spectrum
    let mut sigma = DMatrix::<f64>::zeros(k * m, k * m);
    for k1 in 0..k {
        for k2 in 0..k {
            let factor = f64::from(u8::from(k1 == k2)) - (alt.lambdas[k1] * alt.lambdas[k2]).sqrt();
            sigma.view_mut((k1 * m, k2 * m), (m, m)).copy_from(&(&c * factor));
        }
    }
    let spectrum = NullSpectrum::from_symmetric(&sigma)?;
    let u0_vec = DVector::from_vec(u0.to_coefficients());

    let mut null_draws: Vec<f64> = (0..mc.draws)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, &[purpose::NULL_DRAW, i as u64]);
            spectrum.draw_norm_sq(&mut rng)
        })
        .collect();
    null_draws.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let q = empirical_quantile(&null_draws, 1.0 - alpha);
    let exceed = (0..mc.draws)
        .into_par_iter()
        .filter(|&i| {
            let mut rng = stream(seed, &[purpose::ALT_DRAW, i as u64]);
            spectrum.draw_shifted_norm_sq(&u0_vec, &mut rng) >= q
        })
        .count();
    Ok(AsymptoticPower { power: exceed as f64 / mc.draws as f64, unstable })
}

/// Baseline selector for the asymptotic power comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AsymptoticBaseline {
    Cff,
    Zc,
    Hr,
}

/// Covariance operator of P0 in embedded coefficients, estimated from
/// independent draws.
fn estimate_gamma(alt: &ShrinkingAlternative, count: usize, seed: u64) -> Result<DMatrix<f64>> {
    let paths = crate::simulate::simulate_paths(
        &alt.process,
        alt.domain,
        count,
        derive_seed(seed, &[purpose::GAMMA_EST]),
    )?;
    let coeffs: Vec<DVector<f64>> =
        paths.iter().map(|p| DVector::from_vec(p.to_coefficients())).collect();
    let mean = coeffs.iter().sum::<DVector<f64>>() / count as f64;
    let m = alt.domain.m;
    let mut gamma = DMatrix::<f64>::zeros(m, m);
    for x in &coeffs {
        let e = x - &mean;
        gamma.syger(1.0, &e, &e, 1.0);
    }
    gamma.fill_upper_triangle_with_lower_triangle();
    gamma /= (count - 1) as f64;
    Ok(gamma)
}

/// Asymptotic power of a mean-based baseline: CFF and ZC by simulating the
/// limiting Gaussian elements with covariance Gamma, HR by the noncentral
/// chi-square with noncentrality from the idempotent projector.
pub fn asymptotic_power_baseline(
    test: AsymptoticBaseline,
    alt: &ShrinkingAlternative,
    alpha: f64,
    mc: McSizes,
    seed: u64,
) -> Result<f64> {
    alt.validate()?;
    if !(0.0 < alpha && alpha < 1.0) {
        return Err(Error::InvalidInput(format!("alpha {alpha} outside (0, 1)")));
    }
    if matches!(alt.process, ProcessSpec::T { df } | ProcessSpec::TSquared { df } if df < 3) {
        return Err(Error::InvalidInput(
            "the baseline asymptotics need E||X||^2 < infinity; t with df < 3 has none".into(),
        ));
    }
    let k = alt.lambdas.len();
    let gamma = estimate_gamma(alt, mc.outer.max(2), seed)?;
    match test {
        AsymptoticBaseline::Cff | AsymptoticBaseline::Zc => {
            let spectrum = NullSpectrum::from_symmetric(&gamma)?;
            let m = alt.domain.m;
            let deltas: Vec<DVector<f64>> =
                alt.deltas.iter().map(|d| DVector::from_vec(d.to_coefficients())).collect();
            // one draw of (Y_1, ..., Y_K); `shifted` adds the delta terms
            let draw_stat = |rng: &mut rand_chacha::ChaCha8Rng, shifted: bool| -> f64 {
                let ys: Vec<DVector<f64>> = (0..k)
                    .map(|_| {
                        let mut y = DVector::<f64>::zeros(m);
                        for (i, &a) in spectrum.eigenvalues.iter().enumerate() {
                            let z: f64 = rng.sample(StandardNormal);
                            y += spectrum.eigenvectors.column(i) * (a.sqrt() * z);
                        }
                        y
                    })
                    .collect();
                match test {
                    AsymptoticBaseline::Cff => {
                        let mut acc = 0.0;
                        for k1 in 0..k {
                            for k2 in (k1 + 1)..k {
                                let (l1, l2) = (alt.lambdas[k1], alt.lambdas[k2]);
                                let mut a = ys[k1].clone();
                                let mut b = ys[k2].clone();
                                if shifted {
                                    a += &deltas[k1] * l1;
                                    b += &deltas[k2] * l2;
                                }
                                let diff = a - b * (l1 / l2).sqrt();
                                acc += l1 * diff.norm_squared();
                            }
                        }
                        acc
                    }
                    AsymptoticBaseline::Zc => {
                        // Z^t (I - p0 p0^t) Z = sum ||Z_k||^2 - ||sum sqrt(l_k) Z_k||^2
                        let zs: Vec<DVector<f64>> = (0..k)
                            .map(|i| {
                                let mut z = ys[i].clone();
                                if shifted {
                                    z += &deltas[i] * alt.lambdas[i].sqrt();
                                }
                                z
                            })
                            .collect();
                        let mut proj = DVector::<f64>::zeros(m);
                        for (i, z) in zs.iter().enumerate() {
                            proj += z * alt.lambdas[i].sqrt();
                        }
                        zs.iter().map(|z| z.norm_squared()).sum::<f64>() - proj.norm_squared()
                    }
                    AsymptoticBaseline::Hr => unreachable!(),
                }
            };
            let mut null: Vec<f64> = (0..mc.draws)
                .into_par_iter()
                .map(|i| {
                    let mut rng = stream(seed, &[purpose::NULL_DRAW, i as u64]);
                    draw_stat(&mut rng, false)
                })
                .collect();
            null.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let q = empirical_quantile(&null, 1.0 - alpha);
            let exceed = (0..mc.draws)
                .into_par_iter()
                .filter(|&i| {
                    let mut rng = stream(seed, &[purpose::ALT_DRAW, i as u64]);
                    draw_stat(&mut rng, true) >= q
                })
                .count();
            Ok(exceed as f64 / mc.draws as f64)
        }
        AsymptoticBaseline::Hr => {
            let spectrum = NullSpectrum::from_symmetric(&gamma)?;
            let total: f64 = spectrum.eigenvalues.iter().sum();
            if total <= 0.0 {
                return Err(Error::Numerical("covariance estimate has zero trace".into()));
            }
            let mut cum = 0.0;
            let mut d = 0;
            for &v in &spectrum.eigenvalues {
                cum += v;
                d += 1;
                if cum / total >= 0.9 {
                    break;
                }
            }
            // under homoscedastic P0, Psi_k = diag(gamma_1..gamma_d) for all k
            let scores: Vec<DVector<f64>> = alt
                .deltas
                .iter()
                .map(|delta| {
                    let coeff = DVector::from_vec(delta.to_coefficients());
                    DVector::from_fn(d, |i, _| spectrum.eigenvectors.column(i).dot(&coeff))
                })
                .collect();
            // b stacks sqrt(lambda_k) Psi^{-1/2} d_k; noncentrality = b^t A b
            // with the idempotent A = I - B (sum lambda Psi^{-1})^{-1} B^t
            let psi_inv_sqrt =
                DVector::from_fn(d, |i, _| 1.0 / spectrum.eigenvalues[i].sqrt());
            let mut b = DVector::<f64>::zeros(k * d);
            for (kk, s) in scores.iter().enumerate() {
                for i in 0..d {
                    b[kk * d + i] = alt.lambdas[kk].sqrt() * psi_inv_sqrt[i] * s[i];
                }
            }
            // with equal Psi_k, B (sum lambda Psi^{-1})^{-1} B^t has entries
            // sqrt(lambda_k1 lambda_k2) per diagonal component
            let mut quad = b.norm_squared();
            for i in 0..d {
                let mut s = 0.0;
                for kk in 0..k {
                    s += alt.lambdas[kk].sqrt() * b[kk * d + i];
                }
                quad -= s * s;
            }
            let ncp = quad.max(0.0);
            let df = ((k - 1) * d) as f64;
            let q3 = ChiSquared::new(df)
                .map_err(|e| Error::Numerical(e.to_string()))?
                .inverse_cdf(1.0 - alpha);
            // noncentral chi-square by Monte Carlo: ||mu + Z||^2 with
            // ||mu||^2 = ncp
            let exceed = (0..mc.draws)
                .into_par_iter()
                .filter(|&i| {
                    let mut rng = stream(seed, &[purpose::ALT_DRAW, i as u64]);
                    let mut acc = 0.0;
                    for j in 0..df as usize {
                        let z: f64 = rng.sample(StandardNormal);
                        let t = if j == 0 { z + ncp.sqrt() } else { z };
                        acc += t * t;
                    }
                    acc >= q3
                })
                .count();
            Ok(exceed as f64 / mc.draws as f64)
        }
    }
}
