//! Process simulators: Brownian motion and its t, geometric, squared and
//! contaminated relatives, plus mean-shift injection.
//!
//! Brownian paths are drawn by factorizing the m x m covariance kernel
//! matrix `min(s, t)` on the grid, which honors arbitrary sub-intervals like
//! [0.25, 0.75] directly. Every path draws from streams derived from
//! `(seed, path index, purpose)`, so contamination coin flips, chi-squares
//! and Gaussian draws never alias and generation parallelizes freely.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{purpose, stream};
use crate::sample::GroupedSample;
use crate::space::{GridDomain, GridFunction};

/// Declarative description of a simulation distribution P0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ProcessSpec {
    /// Standard Brownian motion on the domain interval.
    Sbm,
    /// SBM divided by sqrt(chi^2_df / df), one chi-square per path.
    T { df: u32 },
    /// Geometric Brownian motion, exp of an SBM path.
    Gbm,
    /// SBM squared pointwise.
    SbmSquared,
    /// t process squared pointwise.
    TSquared { df: u32 },
    /// Mixture: base path with probability 1 - p, base scaled by s with
    /// probability p, independently per path.
    Contaminated { base: Box<ProcessSpec>, p: f64, s: f64 },
}

impl ProcessSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            ProcessSpec::T { df } | ProcessSpec::TSquared { df } => {
                if *df < 1 {
                    return Err(Error::InvalidInput("t-process df must be >= 1".into()));
                }
            }
            ProcessSpec::Contaminated { base, p, s } => {
                if !(0.0..=1.0).contains(p) {
                    return Err(Error::InvalidInput(format!("mixing probability {p} outside [0, 1]")));
                }
                if *s <= 0.0 {
                    return Err(Error::InvalidInput(format!("contamination scale {s} must be > 0")));
                }
                if matches!(**base, ProcessSpec::Contaminated { .. }) {
                    return Err(Error::InvalidInput("contamination nesting depth is 1".into()));
                }
                base.validate()?;
            }
            _ => {}
        }
        Ok(())
    }

    /// Parse short CLI names: sbm, t1, t3, gbm, sbm2, t3sq, ...
    pub fn parse_name(name: &str) -> Result<ProcessSpec> {
        let spec = if name == "sbm" {
            ProcessSpec::Sbm
        } else if name == "gbm" {
            ProcessSpec::Gbm
        } else if name == "sbm2" {
            ProcessSpec::SbmSquared
        } else if let Some(df) = name.strip_prefix('t').and_then(|r| r.strip_suffix("sq")) {
            ProcessSpec::TSquared {
                df: df.parse().map_err(|_| Error::InvalidInput(format!("bad process name {name}")))?,
            }
        } else if let Some(df) = name.strip_prefix('t') {
            ProcessSpec::T {
                df: df.parse().map_err(|_| Error::InvalidInput(format!("bad process name {name}")))?,
            }
        } else {
            return Err(Error::InvalidInput(format!(
                "unknown process {name}; expected sbm, gbm, sbm2, t<df> or t<df>sq"
            )));
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Shift configuration for the 3-group design: mu_1 = 0, mu_2 = c1 eta_1,
/// mu_3 = c2 eta_2 with eta_1(t) = t and eta_2(t) = (t - 0.25)(0.75 - t).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ShiftSpec {
    pub c1: f64,
    pub c2: f64,
    pub domain: GridDomain,
}

pub fn eta1(t: f64) -> f64 {
    t
}

pub fn eta2(t: f64) -> f64 {
    (t - 0.25) * (0.75 - t)
}

/// The three group shift functions sampled on the grid.
pub fn shift_functions(shift: &ShiftSpec) -> [GridFunction; 3] {
    [
        GridFunction::zero(shift.domain),
        GridFunction::from_fn(shift.domain, |t| shift.c1 * eta1(t)),
        GridFunction::from_fn(shift.domain, |t| shift.c2 * eta2(t)),
    ]
}

/// Cached Cholesky factor of the Brownian kernel on a grid.
pub struct PathSampler {
    domain: GridDomain,
    chol: DMatrix<f64>,
}

impl PathSampler {
    pub fn new(domain: GridDomain) -> Result<PathSampler> {
        let m = domain.m;
        let pts = domain.points();
        let mut kernel = DMatrix::<f64>::zeros(m, m);
        for i in 0..m {
            for j in 0..m {
                kernel[(i, j)] = pts[i].min(pts[j]);
            }
        }
        // diagonal jitter for round-off; min(s,t) is positive definite for
        // distinct positive grid points
        for i in 0..m {
            kernel[(i, i)] += 1e-12;
        }
        let chol = kernel
            .cholesky()
            .ok_or_else(|| {
                Error::Numerical(format!(
                    "Brownian kernel matrix on [{}, {}] (m = {m}) is not positive definite after jitter",
                    domain.a, domain.b
                ))
            })?
            .l();
        Ok(PathSampler { domain, chol })
    }

    fn sbm_values(&self, seed: u64, idx: u64) -> Vec<f64> {
        let m = self.domain.m;
        let mut rng = stream(seed, &[purpose::GAUSS, idx]);
        let z: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
        let mut out = vec![0.0; m];
        // lower-triangular multiply
        for i in 0..m {
            let mut acc = 0.0;
            for j in 0..=i {
                acc += self.chol[(i, j)] * z[j];
            }
            out[i] = acc;
        }
        out
    }

    /// Draw one path of `spec` with index `idx` under `seed`.
    pub fn sample_path(&self, spec: &ProcessSpec, seed: u64, idx: u64) -> GridFunction {
        let values = match spec {
            ProcessSpec::Sbm => self.sbm_values(seed, idx),
            ProcessSpec::Gbm => {
                self.sbm_values(seed, idx).into_iter().map(f64::exp).collect()
            }
            ProcessSpec::SbmSquared => {
                self.sbm_values(seed, idx).into_iter().map(|v| v * v).collect()
            }
            ProcessSpec::T { df } => {
                let scale = t_divisor(*df, seed, idx);
                self.sbm_values(seed, idx).into_iter().map(|v| v / scale).collect()
            }
            ProcessSpec::TSquared { df } => {
                let scale = t_divisor(*df, seed, idx);
                self.sbm_values(seed, idx)
                    .into_iter()
                    .map(|v| {
                        let t = v / scale;
                        t * t
                    })
                    .collect()
            }
            ProcessSpec::Contaminated { base, p, s } => {
                let mut coin = stream(seed, &[purpose::MIX_COIN, idx]);
                let contaminated = coin.gen::<f64>() < *p;
                let mut values = self.sample_path(base, seed, idx).values;
                if contaminated {
                    values.iter_mut().for_each(|v| *v *= s);
                }
                values
            }
        };
        GridFunction { domain: self.domain, values }
    }
}

/// One chi-square divisor per path, from a stream independent of the
/// Gaussian draws.
fn t_divisor(df: u32, seed: u64, idx: u64) -> f64 {
    let mut rng = stream(seed, &[purpose::CHI, idx]);
    let chi = ChiSquared::new(df as f64).expect("df >= 1").sample(&mut rng);
    (chi / df as f64).sqrt()
}

/// Draw `count` independent paths; deterministic given the seed and
/// independent of thread count.
pub fn simulate_paths(
    spec: &ProcessSpec,
    domain: GridDomain,
    count: usize,
    seed: u64,
) -> Result<Vec<GridFunction>> {
    spec.validate()?;
    let sampler = PathSampler::new(domain)?;
    Ok((0..count)
        .into_par_iter()
        .map(|i| sampler.sample_path(spec, seed, i as u64))
        .collect())
}

/// Generate a grouped sample `X_ki = mu_k + eps_ki` with the paper's 3-group
/// shift design. The noise draws depend only on `(seed, path index)`, never
/// on the shift constants, so varying `c2` with a fixed seed reuses identical
/// noise (common random numbers).
pub fn generate_grouped(
    spec: &ProcessSpec,
    shift: &ShiftSpec,
    sizes: &[usize],
    seed: u64,
) -> Result<GroupedSample> {
    let shifts = shift_functions(shift);
    if sizes.len() != 3 && (shift.c1 != 0.0 || shift.c2 != 0.0) {
        return Err(Error::InvalidInput(format!(
            "the shift design defines 3 groups, got {} sizes; use generate_grouped_with_shifts",
            sizes.len()
        )));
    }
    let per_group: Vec<GridFunction> = (0..sizes.len())
        .map(|k| shifts.get(k).cloned().unwrap_or_else(|| GridFunction::zero(shift.domain)))
        .collect();
    generate_grouped_with_shifts(spec, shift.domain, &per_group, sizes, seed)
}

/// Arbitrary-K variant with one explicit shift per group.
pub fn generate_grouped_with_shifts(
    spec: &ProcessSpec,
    domain: GridDomain,
    shifts: &[GridFunction],
    sizes: &[usize],
    seed: u64,
) -> Result<GroupedSample> {
    spec.validate()?;
    if shifts.len() != sizes.len() {
        return Err(Error::InvalidInput(format!(
            "{} shifts for {} groups",
            shifts.len(),
            sizes.len()
        )));
    }
    let sampler = PathSampler::new(domain)?;
    let mut offset = 0u64;
    let mut groups = Vec::with_capacity(sizes.len());
    for (k, &nk) in sizes.iter().enumerate() {
        let base = offset;
        let group: Vec<GridFunction> = (0..nk)
            .into_par_iter()
            .map(|i| sampler.sample_path(spec, seed, base + i as u64).add(&shifts[k]))
            .collect();
        groups.push(group);
        offset += nk as u64;
    }
    GroupedSample::new(groups)
}
