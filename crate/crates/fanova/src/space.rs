//! Discretized L2[a,b] geometry.
//!
//! Functions are represented by their values on an equispaced midpoint grid,
//! so the L2 inner product is a constant-weight quadrature sum and the
//! embedding `c_i = sqrt(w) x_i` turns it into a Euclidean dot product.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An equispaced midpoint grid on the interval [a, b].
///
/// Grid points are `t_i = a + (i - 1/2) (b - a) / m` for `i = 1..m`; the
/// quadrature weight `w = (b - a) / m` is constant. Midpoints keep every grid
/// point in the interior of the interval, so processes degenerate at an
/// endpoint (Brownian motion at t = 0) stay non-degenerate on the grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridDomain {
    pub a: f64,
    pub b: f64,
    pub m: usize,
}

impl GridDomain {
    pub fn new(a: f64, b: f64, m: usize) -> Result<Self> {
        if !(a < b) || !a.is_finite() || !b.is_finite() {
            return Err(Error::InvalidInput(format!(
                "domain endpoints must satisfy a < b, got [{a}, {b}]"
            )));
        }
        if m < 2 {
            return Err(Error::InvalidInput(format!("grid size must be >= 2, got {m}")));
        }
        Ok(GridDomain { a, b, m })
    }

    /// Quadrature weight (b - a) / m.
    pub fn weight(&self) -> f64 {
        (self.b - self.a) / self.m as f64
    }

    /// The i-th grid point (0-based), the midpoint of the i-th cell.
    pub fn point(&self, i: usize) -> f64 {
        self.a + (i as f64 + 0.5) * (self.b - self.a) / self.m as f64
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.m).map(|i| self.point(i)).collect()
    }
}

/// A discretized element of L2[a,b]: values at the domain's grid points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    pub domain: GridDomain,
    pub values: Vec<f64>,
}

impl GridFunction {
    pub fn new(domain: GridDomain, values: Vec<f64>) -> Result<Self> {
        if values.len() != domain.m {
            return Err(Error::InvalidInput(format!(
                "expected {} values, got {}",
                domain.m,
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite value at grid index {i}")));
        }
        Ok(GridFunction { domain, values })
    }

    pub fn zero(domain: GridDomain) -> Self {
        GridFunction { domain, values: vec![0.0; domain.m] }
    }

    pub fn constant(domain: GridDomain, c: f64) -> Self {
        GridFunction { domain, values: vec![c; domain.m] }
    }

    /// Sample `f` at the grid points.
    pub fn from_fn(domain: GridDomain, f: impl Fn(f64) -> f64) -> Self {
        GridFunction { domain, values: (0..domain.m).map(|i| f(domain.point(i))).collect() }
    }

    pub fn scale(&self, c: f64) -> Self {
        GridFunction { domain: self.domain, values: self.values.iter().map(|v| c * v).collect() }
    }

    pub fn add(&self, other: &GridFunction) -> Self {
        debug_assert_eq!(self.domain, other.domain);
        GridFunction {
            domain: self.domain,
            values: self.values.iter().zip(&other.values).map(|(x, y)| x + y).collect(),
        }
    }

    pub fn sub(&self, other: &GridFunction) -> Self {
        debug_assert_eq!(self.domain, other.domain);
        GridFunction {
            domain: self.domain,
            values: self.values.iter().zip(&other.values).map(|(x, y)| x - y).collect(),
        }
    }

    /// Embedded coefficients `c_i = sqrt(w) x_i`; Euclidean geometry on
    /// coefficients reproduces the L2 geometry.
    pub fn to_coefficients(&self) -> Vec<f64> {
        let sw = self.domain.weight().sqrt();
        self.values.iter().map(|v| sw * v).collect()
    }

    pub fn from_coefficients(domain: GridDomain, coeffs: &[f64]) -> Result<Self> {
        let sw = domain.weight().sqrt();
        GridFunction::new(domain, coeffs.iter().map(|c| c / sw).collect())
    }
}

/// L2 inner product via the midpoint rule: `w * sum_i x_i y_i`.
pub fn inner_product(x: &GridFunction, y: &GridFunction) -> Result<f64> {
    if x.domain != y.domain {
        return Err(Error::DomainMismatch(format!(
            "inner product between [{}, {}]/{} and [{}, {}]/{}",
            x.domain.a, x.domain.b, x.domain.m, y.domain.a, y.domain.b, y.domain.m
        )));
    }
    let s: f64 = x.values.iter().zip(&y.values).map(|(a, b)| a * b).sum();
    Ok(x.domain.weight() * s)
}

/// L2 norm, `sqrt(<x, x>)`.
pub fn l2_norm(x: &GridFunction) -> f64 {
    let s: f64 = x.values.iter().map(|v| v * v).sum();
    (x.domain.weight() * s).sqrt()
}

/// An element of the product space H^K: K grid functions on a common domain.
#[derive(Debug, Clone, PartialEq)]
pub struct HTuple {
    pub parts: Vec<GridFunction>,
}

impl HTuple {
    pub fn new(parts: Vec<GridFunction>) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::InvalidInput("empty H-tuple".into()));
        }
        let d = parts[0].domain;
        if parts.iter().any(|p| p.domain != d) {
            return Err(Error::DomainMismatch("H-tuple parts on different domains".into()));
        }
        Ok(HTuple { parts })
    }

    /// Product-space squared norm: the sum of the part squared norms.
    pub fn norm_sq(&self) -> f64 {
        self.parts.iter().map(|p| { let n = l2_norm(p); n * n }).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// Stacked embedded coefficients, length K*m.
    pub fn to_coefficients(&self) -> Vec<f64> {
        self.parts.iter().flat_map(|p| p.to_coefficients()).collect()
    }
}
